//! Access traces for the two evaluation orders and their analysis.
//!
//! Each computation unit owns one gate, so a trace is four interleaved
//! streams distinguished by [`AccessEvent::cu`]. Traces are emitted into a
//! [`TraceSink`], which lets large runs count events without storing them.

mod reuse;
mod schedule;
mod traffic;

pub use reuse::{reuse_analysis, ReuseAnalyzer, ReuseStats, ReuseSummary, StackDistance};
pub use schedule::{
    emit_pass, trace_conventional, trace_mwl, AccessTrace, TraceParams, DEFAULT_ROW_BUFFER_BYTES,
};
pub use traffic::{dram_traffic, DramTraffic, LayerTraffic};

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::model::Gate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulePolicy {
    /// Finish every neuron for `x_t` before moving to `x_{t+1}`.
    #[default]
    Conventional,
    /// Forward connections for the whole sequence first, one weight row
    /// live at a time, then the recurrent connections in order.
    Mwl,
}

impl SchedulePolicy {
    pub fn name(self) -> &'static str {
        match self {
            SchedulePolicy::Conventional => "conventional",
            SchedulePolicy::Mwl => "mwl",
        }
    }
}

impl fmt::Display for SchedulePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SchedulePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "conventional" => Ok(SchedulePolicy::Conventional),
            "mwl" => Ok(SchedulePolicy::Mwl),
            _ => Err(format!(
                "unknown policy `{s}` (expected conventional or mwl)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    WeightBuffer,
    RowBuffer,
    InputBuffer,
    IntermediateMemory,
    Dram,
}

impl Target {
    pub const ALL: [Target; 5] = [
        Target::WeightBuffer,
        Target::RowBuffer,
        Target::InputBuffer,
        Target::IntermediateMemory,
        Target::Dram,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Target::WeightBuffer => "weight_buffer",
            Target::RowBuffer => "row_buffer",
            Target::InputBuffer => "input_buffer",
            Target::IntermediateMemory => "intermediate_memory",
            Target::Dram => "dram",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Access {
    Read,
    Write,
}

/// What an access touches. Frames are indexed by position in the layer's
/// input sequence; hidden vectors by processing step (`Hidden(0)` is the
/// zero initial state).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ObjectId {
    /// A gate's weight set as fetched from DRAM. Bias and peephole vectors
    /// go to the MU; only the two matrices land in the weight buffer.
    GateWeights(Gate),
    ForwardRow(Gate, u32),
    RecurrentRow(Gate, u32),
    InputFrame(u32),
    Hidden(u32),
    Partial(Gate, u32, u32),
    OutputFrame(u32),
    /// The network's input or output sequence in DRAM.
    Sequence,
    SoftmaxWeights,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectClass {
    GateWeights,
    ForwardRow,
    RecurrentRow,
    InputFrame,
    Hidden,
    Partial,
    OutputFrame,
    Sequence,
    SoftmaxWeights,
}

impl ObjectId {
    pub fn class(self) -> ObjectClass {
        match self {
            ObjectId::GateWeights(_) => ObjectClass::GateWeights,
            ObjectId::ForwardRow(..) => ObjectClass::ForwardRow,
            ObjectId::RecurrentRow(..) => ObjectClass::RecurrentRow,
            ObjectId::InputFrame(_) => ObjectClass::InputFrame,
            ObjectId::Hidden(_) => ObjectClass::Hidden,
            ObjectId::Partial(..) => ObjectClass::Partial,
            ObjectId::OutputFrame(_) => ObjectClass::OutputFrame,
            ObjectId::Sequence => ObjectClass::Sequence,
            ObjectId::SoftmaxWeights => ObjectClass::SoftmaxWeights,
        }
    }
}

impl ObjectClass {
    pub fn is_weight(self) -> bool {
        matches!(
            self,
            ObjectClass::GateWeights
                | ObjectClass::ForwardRow
                | ObjectClass::RecurrentRow
                | ObjectClass::SoftmaxWeights
        )
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ObjectId::GateWeights(g) => write!(f, "{g}.weights"),
            ObjectId::ForwardRow(g, r) => write!(f, "{g}.wx[{r}]"),
            ObjectId::RecurrentRow(g, r) => write!(f, "{g}.wh[{r}]"),
            ObjectId::InputFrame(t) => write!(f, "x[{t}]"),
            ObjectId::Hidden(s) => write!(f, "h[{s}]"),
            ObjectId::Partial(g, t, j) => write!(f, "{g}.partial[{t}][{j}]"),
            ObjectId::OutputFrame(t) => write!(f, "y[{t}]"),
            ObjectId::Sequence => f.write_str("sequence"),
            ObjectId::SoftmaxWeights => f.write_str("softmax.weights"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccessEvent {
    /// Computation unit issuing the access.
    pub cu: Gate,
    pub target: Target,
    pub object: ObjectId,
    pub access: Access,
    pub bytes: u64,
    /// Processing step within the pass.
    pub step: u32,
    pub neuron: u32,
}

pub trait TraceSink {
    fn record(&mut self, ev: AccessEvent);
}

impl TraceSink for Vec<AccessEvent> {
    fn record(&mut self, ev: AccessEvent) {
        debug_assert!(ev.bytes > 0, "zero-byte access {ev:?}");
        self.push(ev);
    }
}

impl<S: TraceSink + ?Sized> TraceSink for &mut S {
    fn record(&mut self, ev: AccessEvent) {
        (**self).record(ev)
    }
}

/// Fan an event out to two sinks.
pub struct Tee<A, B>(pub A, pub B);

impl<A: TraceSink, B: TraceSink> TraceSink for Tee<A, B> {
    fn record(&mut self, ev: AccessEvent) {
        self.0.record(ev);
        self.1.record(ev);
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetCounts {
    pub reads: u64,
    pub writes: u64,
    pub read_bytes: u64,
    pub write_bytes: u64,
}

impl TargetCounts {
    pub fn add(&mut self, other: &TargetCounts) {
        self.reads += other.reads;
        self.writes += other.writes;
        self.read_bytes += other.read_bytes;
        self.write_bytes += other.write_bytes;
    }
}

/// Aggregated access counts, per target and per (target, object class).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AccessCounts {
    pub per_target: BTreeMap<Target, TargetCounts>,
    pub per_class: BTreeMap<Target, BTreeMap<ObjectClass, TargetCounts>>,
}

impl AccessCounts {
    pub fn target(&self, t: Target) -> TargetCounts {
        self.per_target.get(&t).copied().unwrap_or_default()
    }

    pub fn class(&self, t: Target, c: ObjectClass) -> TargetCounts {
        self.per_class
            .get(&t)
            .and_then(|m| m.get(&c))
            .copied()
            .unwrap_or_default()
    }

    pub fn merge(&mut self, other: &AccessCounts) {
        for (t, c) in &other.per_target {
            self.per_target.entry(*t).or_default().add(c);
        }
        for (t, m) in &other.per_class {
            let dst = self.per_class.entry(*t).or_default();
            for (cls, c) in m {
                dst.entry(*cls).or_default().add(c);
            }
        }
    }

    /// Every count multiplied by `k`.
    pub fn scaled(&self, k: u64) -> AccessCounts {
        let s = |c: &TargetCounts| TargetCounts {
            reads: c.reads * k,
            writes: c.writes * k,
            read_bytes: c.read_bytes * k,
            write_bytes: c.write_bytes * k,
        };
        AccessCounts {
            per_target: self.per_target.iter().map(|(t, c)| (*t, s(c))).collect(),
            per_class: self
                .per_class
                .iter()
                .map(|(t, m)| (*t, m.iter().map(|(k, c)| (*k, s(c))).collect()))
                .collect(),
        }
    }
}

impl TraceSink for AccessCounts {
    fn record(&mut self, ev: AccessEvent) {
        let bump = |c: &mut TargetCounts| match ev.access {
            Access::Read => {
                c.reads += 1;
                c.read_bytes += ev.bytes;
            }
            Access::Write => {
                c.writes += 1;
                c.write_bytes += ev.bytes;
            }
        };
        bump(self.per_target.entry(ev.target).or_default());
        bump(
            self.per_class
                .entry(ev.target)
                .or_default()
                .entry(ev.object.class())
                .or_default(),
        );
    }
}

/// Writes `layer, pass, target, object_id, rw, bytes, t, neuron` rows. Object
/// ids carry the issuing CU as a prefix, e.g. `forget/forget.wh[3]`.
pub struct CsvTraceWriter<W: Write> {
    out: W,
    layer: usize,
    pass: usize,
    error: Option<std::io::Error>,
}

impl<W: Write> CsvTraceWriter<W> {
    pub fn new(mut out: W) -> std::io::Result<Self> {
        writeln!(out, "layer,pass,target,object_id,rw,bytes,t,neuron")?;
        Ok(CsvTraceWriter {
            out,
            layer: 0,
            pass: 0,
            error: None,
        })
    }

    pub fn set_pass(&mut self, layer: usize, pass: usize) {
        self.layer = layer;
        self.pass = pass;
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.out.flush()?;
        Ok(self.out)
    }
}

impl<W: Write> TraceSink for CsvTraceWriter<W> {
    fn record(&mut self, ev: AccessEvent) {
        if self.error.is_some() {
            return;
        }
        let rw = match ev.access {
            Access::Read => "r",
            Access::Write => "w",
        };
        if let Err(e) = writeln!(
            self.out,
            "{},{},{},{}/{},{},{},{},{}",
            self.layer,
            self.pass,
            ev.target.name(),
            ev.cu,
            ev.object,
            rw,
            ev.bytes,
            ev.step,
            ev.neuron
        ) {
            self.error = Some(e);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(target: Target, access: Access, bytes: u64) -> AccessEvent {
        AccessEvent {
            cu: Gate::Input,
            target,
            object: ObjectId::InputFrame(0),
            access,
            bytes,
            step: 0,
            neuron: 0,
        }
    }

    #[test]
    fn counts_aggregate_by_target_and_class() {
        let mut c = AccessCounts::default();
        c.record(ev(Target::InputBuffer, Access::Read, 8));
        c.record(ev(Target::InputBuffer, Access::Write, 4));
        c.record(ev(Target::Dram, Access::Read, 2));
        let ib = c.target(Target::InputBuffer);
        assert_eq!(
            (ib.reads, ib.writes, ib.read_bytes, ib.write_bytes),
            (1, 1, 8, 4)
        );
        assert_eq!(c.class(Target::InputBuffer, ObjectClass::InputFrame), ib);
        assert_eq!(c.scaled(3).target(Target::Dram).read_bytes, 6);
    }

    #[test]
    fn csv_rows() {
        let mut w = CsvTraceWriter::new(Vec::new()).unwrap();
        w.set_pass(2, 1);
        w.record(ev(Target::Dram, Access::Read, 16));
        let text = String::from_utf8(w.finish().unwrap()).unwrap();
        assert_eq!(
            text,
            "layer,pass,target,object_id,rw,bytes,t,neuron\n2,1,dram,input/x[0],r,16,0,0\n"
        );
    }

    #[test]
    fn policy_parses() {
        assert_eq!(
            "mwl".parse::<SchedulePolicy>().unwrap(),
            SchedulePolicy::Mwl
        );
        assert!("fast".parse::<SchedulePolicy>().is_err());
    }
}
