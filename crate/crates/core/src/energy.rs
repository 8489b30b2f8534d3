//! Event-counting energy model.
//!
//! Dynamic energy is `Σ count × cost` over event classes; leakage is
//! `Σ powered units × power × wall time`. Memory events are counted in
//! bytes, datapath events in operations.
//!
//! The default table uses representative 28 nm-class relative costs with
//! DRAM roughly 200× an on-chip SRAM byte. Only ratios derived from it are
//! meaningful.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventClass {
    WeightBufferRead,
    WeightBufferWrite,
    RowBufferRead,
    RowBufferWrite,
    InputBufferRead,
    InputBufferWrite,
    IntermediateMemoryRead,
    IntermediateMemoryWrite,
    DramRead,
    DramWrite,
    /// One N-wide multiply + reduction + accumulate.
    DpuSubvector,
    MuOp,
}

impl EventClass {
    pub fn component(self) -> Component {
        use EventClass::*;
        match self {
            WeightBufferRead | WeightBufferWrite => Component::WeightMemory,
            RowBufferRead | RowBufferWrite => Component::RowBuffer,
            InputBufferRead | InputBufferWrite => Component::InputBuffer,
            IntermediateMemoryRead | IntermediateMemoryWrite => Component::IntermediateMemory,
            DramRead | DramWrite => Component::Dram,
            DpuSubvector => Component::Dpu,
            MuOp => Component::Mu,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    WeightMemory,
    RowBuffer,
    InputBuffer,
    IntermediateMemory,
    Dram,
    Dpu,
    Mu,
}

impl Component {
    pub const ALL: [Component; 7] = [
        Component::WeightMemory,
        Component::RowBuffer,
        Component::InputBuffer,
        Component::IntermediateMemory,
        Component::Dram,
        Component::Dpu,
        Component::Mu,
    ];

    pub fn group(self) -> Group {
        match self {
            Component::WeightMemory
            | Component::RowBuffer
            | Component::InputBuffer
            | Component::IntermediateMemory => Group::Scratchpad,
            Component::Dram => Group::MainMemory,
            Component::Dpu | Component::Mu => Group::Operations,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Component::WeightMemory => "weight_memory",
            Component::RowBuffer => "row_buffer",
            Component::InputBuffer => "input_buffer",
            Component::IntermediateMemory => "intermediate_memory",
            Component::Dram => "dram",
            Component::Dpu => "dpu",
            Component::Mu => "mu",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Scratchpad,
    Operations,
    MainMemory,
}

/// Per-event dynamic costs (J per byte or per op) and per-unit leakage (W).
/// Leakage units: one bank for the banked memories, one CU otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyTable {
    pub dynamic: BTreeMap<EventClass, f64>,
    pub leakage: BTreeMap<Component, f64>,
}

const PJ: f64 = 1e-12;
const MW: f64 = 1e-3;

impl Default for EnergyTable {
    fn default() -> Self {
        use EventClass::*;
        let dynamic = [
            (WeightBufferRead, 0.50 * PJ),
            (WeightBufferWrite, 0.60 * PJ),
            (RowBufferRead, 0.03 * PJ),
            (RowBufferWrite, 0.04 * PJ),
            (InputBufferRead, 0.05 * PJ),
            (InputBufferWrite, 0.06 * PJ),
            (IntermediateMemoryRead, 0.55 * PJ),
            (IntermediateMemoryWrite, 0.65 * PJ),
            (DramRead, 100.0 * PJ),
            (DramWrite, 110.0 * PJ),
            (DpuSubvector, 30.0 * PJ),
            (MuOp, 2.0 * PJ),
        ]
        .into_iter()
        .collect();
        let leakage = [
            (Component::WeightMemory, 1.5 * MW),
            (Component::IntermediateMemory, 1.5 * MW),
            (Component::InputBuffer, 0.05 * MW),
            (Component::RowBuffer, 0.025 * MW),
            (Component::Dpu, 1.0 * MW),
            (Component::Mu, 0.3 * MW),
        ]
        .into_iter()
        .collect();
        EnergyTable { dynamic, leakage }
    }
}

impl EnergyTable {
    pub fn validate(&self) -> Result<()> {
        for (k, v) in &self.dynamic {
            if !(v.is_finite() && *v >= 0.0) {
                return Err(Error::Config(format!("energy cost for {k:?} is {v}")));
            }
        }
        for (k, v) in &self.leakage {
            if !(v.is_finite() && *v >= 0.0) {
                return Err(Error::Config(format!("leakage for {k:?} is {v}")));
            }
        }
        Ok(())
    }

    /// Largest per-byte on-chip cost.
    pub fn max_on_chip_cost(&self) -> f64 {
        self.dynamic
            .iter()
            .filter(|(k, _)| {
                let c = k.component();
                c.group() == Group::Scratchpad
            })
            .map(|(_, v)| *v)
            .fold(0.0, f64::max)
    }
}

/// Everything `account` needs from a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyEvents {
    pub counts: BTreeMap<EventClass, u64>,
    /// Powered leakage units per component (banks or CUs).
    pub powered_units: BTreeMap<Component, u64>,
    pub seconds: f64,
    /// Identifies the workload so reports from different runs are only
    /// compared when they describe the same network and input.
    pub workload: String,
    pub label: String,
}

impl EnergyEvents {
    /// The same run repeated `k` times back to back.
    pub fn scaled(&self, k: u64) -> EnergyEvents {
        EnergyEvents {
            counts: self.counts.iter().map(|(c, n)| (*c, n * k)).collect(),
            seconds: self.seconds * k as f64,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub scratchpad: f64,
    pub operations: f64,
    pub main_memory: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub workload: String,
    pub label: String,
    pub dynamic_by_component: BTreeMap<Component, f64>,
    pub leakage_by_component: BTreeMap<Component, f64>,
    pub dynamic_total: f64,
    pub leakage_total: f64,
    pub total: f64,
    /// Share of the total per group; sums to 1 unless the total is zero.
    pub fractions: Breakdown,
}

impl EnergyReport {
    pub fn component_total(&self, c: Component) -> f64 {
        self.dynamic_by_component.get(&c).copied().unwrap_or(0.0)
            + self.leakage_by_component.get(&c).copied().unwrap_or(0.0)
    }
}

pub fn account(events: &EnergyEvents, table: &EnergyTable) -> Result<EnergyReport> {
    table.validate()?;
    let mut dynamic: BTreeMap<Component, f64> = Component::ALL.iter().map(|c| (*c, 0.0)).collect();
    for (class, &n) in &events.counts {
        if n == 0 {
            continue;
        }
        let cost = table
            .dynamic
            .get(class)
            .ok_or_else(|| Error::Config(format!("energy table has no entry for {class:?}")))?;
        *dynamic.entry(class.component()).or_default() += n as f64 * cost;
    }
    let mut leakage: BTreeMap<Component, f64> = Component::ALL.iter().map(|c| (*c, 0.0)).collect();
    for (comp, &units) in &events.powered_units {
        if units == 0 {
            continue;
        }
        let power = table.leakage.get(comp).ok_or_else(|| {
            Error::Config(format!("energy table has no leakage entry for {comp:?}"))
        })?;
        *leakage.entry(*comp).or_default() += units as f64 * power * events.seconds;
    }
    let dynamic_total: f64 = dynamic.values().sum();
    let leakage_total: f64 = leakage.values().sum();
    let total = dynamic_total + leakage_total;
    let group_total = |g: Group| -> f64 {
        Component::ALL
            .iter()
            .filter(|c| c.group() == g)
            .map(|c| dynamic[c] + leakage[c])
            .sum()
    };
    let frac = |g: Group| {
        if total > 0.0 {
            group_total(g) / total
        } else {
            0.0
        }
    };
    Ok(EnergyReport {
        workload: events.workload.clone(),
        label: events.label.clone(),
        fractions: Breakdown {
            scratchpad: frac(Group::Scratchpad),
            operations: frac(Group::Operations),
            main_memory: frac(Group::MainMemory),
        },
        dynamic_by_component: dynamic,
        leakage_by_component: leakage,
        dynamic_total,
        leakage_total,
        total,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentRatio {
    pub dynamic: Option<f64>,
    pub leakage: Option<f64>,
    pub total: Option<f64>,
}

/// `candidate / baseline` per component; `None` where the baseline is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyComparison {
    pub baseline: String,
    pub candidate: String,
    pub per_component: BTreeMap<Component, ComponentRatio>,
    pub dynamic: Option<f64>,
    pub leakage: Option<f64>,
    pub total: Option<f64>,
    /// Components where the candidate spends more energy than the baseline.
    pub increased: Vec<Component>,
}

fn ratio(a: f64, b: f64) -> Option<f64> {
    if b > 0.0 {
        Some(a / b)
    } else if a == 0.0 {
        Some(1.0)
    } else {
        None
    }
}

pub fn compare(baseline: &EnergyReport, candidate: &EnergyReport) -> Result<EnergyComparison> {
    if baseline.workload != candidate.workload {
        return Err(Error::Config(format!(
            "cannot compare runs of different workloads ({} vs {})",
            baseline.workload, candidate.workload
        )));
    }
    let get = |m: &BTreeMap<Component, f64>, c: &Component| m.get(c).copied().unwrap_or(0.0);
    let mut per_component = BTreeMap::new();
    let mut increased = Vec::new();
    for c in Component::ALL {
        let (bd, cd) = (
            get(&baseline.dynamic_by_component, &c),
            get(&candidate.dynamic_by_component, &c),
        );
        let (bl, cl) = (
            get(&baseline.leakage_by_component, &c),
            get(&candidate.leakage_by_component, &c),
        );
        if cd + cl > bd + bl {
            increased.push(c);
        }
        per_component.insert(
            c,
            ComponentRatio {
                dynamic: ratio(cd, bd),
                leakage: ratio(cl, bl),
                total: ratio(cd + cl, bd + bl),
            },
        );
    }
    Ok(EnergyComparison {
        baseline: baseline.label.clone(),
        candidate: candidate.label.clone(),
        per_component,
        dynamic: ratio(candidate.dynamic_total, baseline.dynamic_total),
        leakage: ratio(candidate.leakage_total, baseline.leakage_total),
        total: ratio(candidate.total, baseline.total),
        increased,
    })
}
