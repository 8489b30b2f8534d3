use serde::{Deserialize, Serialize};

use crate::energy::EnergyTable;
use crate::error::{Error, Result};
use crate::quant::QuantConfig;

pub const KIB: u64 = 1 << 10;
pub const MIB: u64 = 1 << 20;

/// MU operation latencies in cycles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpLatency {
    pub add: u32,
    pub mul: u32,
    pub exp: u32,
    pub div: u32,
    /// Comparisons and negation.
    pub cmp: u32,
    /// Register moves.
    pub mov: u32,
}

impl Default for OpLatency {
    fn default() -> Self {
        OpLatency {
            add: 2,
            mul: 4,
            exp: 5,
            div: 5,
            cmp: 2,
            mov: 1,
        }
    }
}

impl OpLatency {
    pub fn unit() -> Self {
        OpLatency {
            add: 1,
            mul: 1,
            exp: 1,
            div: 1,
            cmp: 1,
            mov: 1,
        }
    }
}

/// Issue slots per cycle for each functional-unit class of one MU. Units
/// are pipelined, so a unit accepts a new operation every cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MuUnits {
    pub add: u32,
    pub mul: u32,
    pub exp: u32,
    pub div: u32,
    pub cmp: u32,
}

impl Default for MuUnits {
    fn default() -> Self {
        MuUnits {
            add: 2,
            mul: 2,
            exp: 1,
            div: 1,
            cmp: 1,
        }
    }
}

/// What to do when a check finds a problem that does not invalidate the
/// results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckLevel {
    #[default]
    Error,
    Warn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareConfig {
    pub name: String,
    pub frequency_hz: f64,
    /// DPU width N; must be a power of two.
    pub dpu_width: u32,
    pub weight_mem_bytes_per_cu: u64,
    pub input_mem_bytes_per_cu: u64,
    pub intermediate_mem_bytes: u64,
    pub row_buffer_bytes: u64,
    /// Power-gating granularity of the weight and intermediate memories.
    pub bank_bytes: u64,
    pub power_gating: bool,
    pub op_latency: OpLatency,
    pub mu_units: MuUnits,
    pub mu_comm_cycles: u32,
    /// Failing or warning when the MU cannot keep up with the DPU.
    pub mu_bottleneck: CheckLevel,
    pub peak_dram_bandwidth_bytes_per_s: f64,
    pub dram_latency_ns: f64,
    /// Quantize stored MWL partial outputs.
    pub quantize_partials: bool,
    /// Pick alpha from a calibration pass instead of using `quant.alpha`.
    pub calibrate_alpha: bool,
    pub quant: QuantConfig,
    /// Fixed clamp range per layer, used when not calibrating; layers
    /// beyond the list use `quant.alpha`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub layer_alpha: Vec<f32>,
    pub energy: EnergyTable,
}

pub const PRESET_NAMES: [&str; 2] = ["epur", "epur-mwl"];

impl HardwareConfig {
    /// Baseline accelerator: 4 MiB of weights and 8 KiB of inputs per CU.
    pub fn epur() -> Self {
        HardwareConfig {
            name: "epur".into(),
            frequency_hz: 500e6,
            dpu_width: 16,
            weight_mem_bytes_per_cu: 4 * MIB,
            input_mem_bytes_per_cu: 8 * KIB,
            intermediate_mem_bytes: 6 * MIB,
            row_buffer_bytes: 4 * KIB,
            bank_bytes: 256 * KIB,
            power_gating: true,
            op_latency: OpLatency::default(),
            mu_units: MuUnits::default(),
            mu_comm_cycles: 2,
            mu_bottleneck: CheckLevel::Error,
            peak_dram_bandwidth_bytes_per_s: 30e9,
            dram_latency_ns: 100.0,
            quantize_partials: false,
            calibrate_alpha: false,
            quant: QuantConfig::default(),
            layer_alpha: Vec::new(),
            energy: EnergyTable::default(),
        }
    }

    /// Weight-locality variant: half the weight and input memory, 8-bit
    /// partial outputs with a calibrated range.
    pub fn epur_mwl() -> Self {
        HardwareConfig {
            name: "epur-mwl".into(),
            weight_mem_bytes_per_cu: 2 * MIB,
            input_mem_bytes_per_cu: 4 * KIB,
            quantize_partials: true,
            calibrate_alpha: true,
            ..Self::epur()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "epur" => Ok(Self::epur()),
            "epur-mwl" | "epur_mwl" => Ok(Self::epur_mwl()),
            _ => Err(Error::Config(format!(
                "unknown hardware preset {name:?} (known: {})",
                PRESET_NAMES.join(", ")
            ))),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: HardwareConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.frequency_hz.is_finite() && self.frequency_hz > 0.0) {
            return fail(format!(
                "frequency_hz must be positive, got {}",
                self.frequency_hz
            ));
        }
        if self.dpu_width == 0 || !self.dpu_width.is_power_of_two() {
            return fail(format!(
                "dpu_width must be a power of two, got {}",
                self.dpu_width
            ));
        }
        let sizes = [
            ("weight_mem_bytes_per_cu", self.weight_mem_bytes_per_cu),
            ("input_mem_bytes_per_cu", self.input_mem_bytes_per_cu),
            ("intermediate_mem_bytes", self.intermediate_mem_bytes),
            ("row_buffer_bytes", self.row_buffer_bytes),
            ("bank_bytes", self.bank_bytes),
        ];
        for (name, v) in sizes {
            if v == 0 {
                return fail(format!("{name} must be positive"));
            }
        }
        let l = &self.op_latency;
        if [
            l.add,
            l.mul,
            l.exp,
            l.div,
            l.cmp,
            l.mov,
            self.mu_comm_cycles,
        ]
        .contains(&0)
        {
            return fail("every latency must be at least one cycle".into());
        }
        let u = &self.mu_units;
        if [u.add, u.mul, u.exp, u.div, u.cmp].contains(&0) {
            return fail("every MU unit class needs at least one unit".into());
        }
        if !(self.peak_dram_bandwidth_bytes_per_s.is_finite()
            && self.peak_dram_bandwidth_bytes_per_s > 0.0)
        {
            return fail("peak_dram_bandwidth_bytes_per_s must be positive".into());
        }
        if !(self.dram_latency_ns.is_finite() && self.dram_latency_ns >= 0.0) {
            return fail("dram_latency_ns must be non-negative".into());
        }
        if let Some(a) = self
            .layer_alpha
            .iter()
            .find(|a| !(a.is_finite() && **a > 0.0))
        {
            return fail(format!("layer_alpha entries must be positive, got {a}"));
        }
        self.energy.validate()
    }

    /// Cycles for the multiplier, reduction tree and accumulator after the
    /// last sub-vector issues.
    pub fn dpu_latency(&self) -> u64 {
        (self.op_latency.mul + self.dpu_width.trailing_zeros() + self.op_latency.add) as u64
    }

    /// Bytes of one stored MWL partial output.
    pub fn partial_bytes(&self, elem_bytes: u64) -> u64 {
        if self.quantize_partials {
            self.quant.code_bytes()
        } else {
            elem_bytes
        }
    }

    pub fn seconds(&self, cycles: u64) -> f64 {
        cycles as f64 / self.frequency_hz
    }

    /// Cycles to move `bytes` over the DRAM interface, latency included.
    pub fn dram_cycles(&self, bytes: u64) -> u64 {
        if bytes == 0 {
            return 0;
        }
        let latency = (self.dram_latency_ns * self.frequency_hz / 1e9).ceil();
        let transfer =
            (bytes as f64 * self.frequency_hz / self.peak_dram_bandwidth_bytes_per_s).ceil();
        (latency + transfer) as u64
    }
}

impl Default for HardwareConfig {
    fn default() -> Self {
        Self::epur()
    }
}
