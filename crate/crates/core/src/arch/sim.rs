use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};

use super::config::{CheckLevel, HardwareConfig};
use super::datapath::{ArithmeticMode, Datapath, PassStats};
use super::timing::{mu_plan, sub_vectors, MuPlan};
use crate::energy::{account, Component, EnergyEvents, EnergyReport, EventClass};
use crate::error::{Error, Result};
use crate::model::{
    network_infer, Gate, LayerDescriptor, NetworkDescriptor, NetworkWeights, Sequence,
};
use crate::quant::{alpha_from_max, DequantTable, QuantConfig};
use crate::sched::{
    emit_pass, Access, AccessCounts, AccessEvent, ObjectId, ReuseAnalyzer, ReuseStats,
    SchedulePolicy, Target, TraceParams, TraceSink,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub mode: ArithmeticMode,
    /// Compare the outputs against the reference model.
    pub check_oracle: bool,
    /// Run LRU stack-distance analysis on every pass.
    pub reuse: bool,
    /// Input frames per second of real time, for the real-time check.
    pub frames_per_second: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            mode: ArithmeticMode::Exact,
            check_oracle: true,
            reuse: false,
            frames_per_second: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PassReport {
    pub layer: usize,
    pub pass: usize,
    pub start_cycle: u64,
    pub end_cycle: u64,
    /// Cycles the DPUs were issuing sub-vectors.
    pub dpu_issue_cycles: u64,
    /// Cycles spent waiting for the previous weight fetch.
    pub dram_stall_cycles: u64,
    /// DPU cycles lost waiting for `h_{t-1}`.
    pub recurrence_wait_cycles: u64,
    /// Cycles DPU results waited for a free MU.
    pub mu_stall_cycles: u64,
    pub mu_initiation_interval: u64,
    /// Shortest spacing between DPU results for consecutive neurons.
    pub dpu_result_interval: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MuSummary {
    pub critical_path: u64,
    pub initiation_interval: u64,
    pub stall_cycles: u64,
    pub bottleneck: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bandwidth {
    pub dram_bytes: u64,
    /// Over the simulated execution time.
    pub average_bytes_per_s: f64,
    /// Duration of the input at the configured frame rate.
    pub realtime_seconds: f64,
    /// DRAM bytes spread over the real-time duration.
    pub realtime_bytes_per_s: f64,
    pub realtime_ok: bool,
    pub peak_bytes_per_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Occupancy {
    pub high_water_bytes: u64,
    pub capacity_bytes: u64,
}

/// Storage high-water marks. Per-CU memories report the worst CU.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StorageReport {
    pub weight_memory_per_cu: Occupancy,
    pub input_buffer_per_cu: Occupancy,
    pub row_buffer_per_cu: Occupancy,
    pub intermediate_memory: Occupancy,
    /// Weight-memory banks powered in each CU.
    pub weight_banks_per_cu: u64,
    pub intermediate_banks: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PassReuse {
    pub layer: usize,
    pub pass: usize,
    pub per_cu: BTreeMap<Gate, ReuseStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCheck {
    pub bit_exact: bool,
    pub max_abs_diff: f32,
    pub cosine_similarity: f64,
    pub tolerance: f32,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantSummary {
    pub n_bits: u32,
    /// Clamp range per layer.
    pub layer_alpha: Vec<f32>,
    pub calibrated: bool,
    pub max_abs_partial: f32,
    pub saturated: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputSummary {
    pub frames: usize,
    pub dim: usize,
    pub max_abs: f32,
    pub sum: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimReport {
    pub network: Option<String>,
    pub policy: SchedulePolicy,
    pub steps: usize,
    pub options: SimOptions,
    /// Fully resolved configuration, including a calibrated alpha.
    pub config: HardwareConfig,
    pub cycles: u64,
    pub seconds: f64,
    pub dram_stall_cycles: u64,
    pub writeback_cycles: u64,
    pub passes: Vec<PassReport>,
    pub mu: MuSummary,
    pub access_counts: AccessCounts,
    pub dpu_subvector_ops: u64,
    pub mu_ops: u64,
    pub bandwidth: Bandwidth,
    pub storage: StorageReport,
    pub double_buffer_ok: bool,
    pub reuse: Option<Vec<PassReuse>>,
    pub quant: Option<QuantSummary>,
    pub oracle: Option<OracleCheck>,
    pub output_summary: Option<OutputSummary>,
    pub energy_events: EnergyEvents,
    pub energy: EnergyReport,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub outputs: Option<Sequence>,
}

/// Simulate one inference of `input` through `net`.
pub fn simulate(
    net: &NetworkDescriptor,
    weights: &NetworkWeights,
    input: &Sequence,
    policy: SchedulePolicy,
    cfg: &HardwareConfig,
    opts: &SimOptions,
) -> Result<SimReport> {
    weights.validate(net)?;
    if input.dim() != net.input_dim {
        return Err(Error::Shape(format!(
            "input frames have {} elements, network expects {}",
            input.dim(),
            net.input_dim
        )));
    }
    input.ensure_finite("input sequence")?;
    run(net, input.len(), policy, cfg, opts, Some((weights, input)))
}

/// Timing, traffic, storage and energy without the functional datapath.
pub fn simulate_timing(
    net: &NetworkDescriptor,
    steps: usize,
    policy: SchedulePolicy,
    cfg: &HardwareConfig,
    opts: &SimOptions,
) -> Result<SimReport> {
    run(net, steps, policy, cfg, opts, None)
}

/// Bytes one CU's weight memory must hold for `layer`.
pub fn weight_memory_need(layer: &LayerDescriptor, policy: SchedulePolicy, elem_bytes: u64) -> u64 {
    match policy {
        SchedulePolicy::Conventional => layer.matrix_elems() * elem_bytes,
        SchedulePolicy::Mwl => (layer.recurrent_elems() + layer.input_size as u64) * elem_bytes,
    }
}

fn input_buffer_need(layer: &LayerDescriptor, policy: SchedulePolicy, elem_bytes: u64) -> u64 {
    match policy {
        SchedulePolicy::Conventional => (layer.input_size + layer.hidden_size) as u64 * elem_bytes,
        SchedulePolicy::Mwl => layer.hidden_size as u64 * elem_bytes,
    }
}

/// Intermediate-memory layout: two halves for the layer input and output
/// sequences, then a scratch region for MWL partials.
#[derive(Debug, Clone, Copy)]
struct ImLayout {
    half: u64,
    partial_base: u64,
    total: u64,
}

impl ImLayout {
    fn new(
        net: &NetworkDescriptor,
        steps: u64,
        policy: SchedulePolicy,
        elem_bytes: u64,
        partial_bytes: u64,
    ) -> Self {
        let dims = std::iter::once(net.input_dim).chain(net.layers.iter().map(|l| l.output_size()));
        let half = dims
            .map(|d| steps * d as u64 * elem_bytes)
            .max()
            .unwrap_or(0);
        let partials = match policy {
            SchedulePolicy::Conventional => 0,
            SchedulePolicy::Mwl => {
                let h = net.layers.iter().map(|l| l.hidden_size).max().unwrap_or(0) as u64;
                4 * steps * h * partial_bytes
            }
        };
        ImLayout {
            half,
            partial_base: 2 * half,
            total: 2 * half + partials,
        }
    }

    fn input_base(&self, layer: usize) -> u64 {
        (layer as u64 % 2) * self.half
    }

    fn output_base(&self, layer: usize) -> u64 {
        ((layer as u64 + 1) % 2) * self.half
    }
}

#[derive(Default)]
struct IntervalSet {
    spans: BTreeMap<u64, u64>,
}

impl IntervalSet {
    fn insert(&mut self, mut lo: u64, mut hi: u64) {
        if let Some((&s, &e)) = self.spans.range(..=lo).next_back() {
            if e >= lo {
                if e >= hi {
                    return;
                }
                lo = s;
            }
        }
        let absorbed: Vec<u64> = self.spans.range(lo..=hi).map(|(&s, _)| s).collect();
        for s in absorbed {
            hi = hi.max(self.spans.remove(&s).unwrap_or(hi));
        }
        self.spans.insert(lo, hi);
    }

    fn overlaps(&self, other: &IntervalSet) -> Option<(u64, u64)> {
        let (mut a, mut b) = (self.spans.iter().peekable(), other.spans.iter().peekable());
        while let (Some(&(&s1, &e1)), Some(&(&s2, &e2))) = (a.peek(), b.peek()) {
            let (lo, hi) = (s1.max(s2), e1.min(e2));
            if lo < hi {
                return Some((lo, hi));
            }
            if e1 <= e2 {
                a.next();
            } else {
                b.next();
            }
        }
        None
    }
}

/// Maps intermediate-memory events of one layer to addresses and checks
/// that the layer never reads what it writes outside the partial scratch.
struct ImTracker {
    layout: ImLayout,
    layer: usize,
    pass: usize,
    in_dim: u64,
    out_dim: u64,
    hidden: u64,
    steps: u64,
    eb: u64,
    partial_bytes: u64,
    reads: IntervalSet,
    writes: IntervalSet,
    error: Option<String>,
}

impl ImTracker {
    fn start_layer(&mut self, layer: usize, l: &LayerDescriptor) {
        self.layer = layer;
        self.in_dim = l.input_size as u64;
        self.out_dim = l.output_size() as u64;
        self.hidden = l.hidden_size as u64;
        self.reads = IntervalSet::default();
        self.writes = IntervalSet::default();
    }

    fn finish_layer(&mut self) {
        if let Some((lo, hi)) = self.reads.overlaps(&self.writes) {
            self.error.get_or_insert(format!(
                "layer {} reads intermediate-memory bytes [{lo}, {hi}) that it also writes",
                self.layer
            ));
        }
    }

    fn check_bounds(&mut self, lo: u64, hi: u64, limit: u64) {
        if hi > limit || lo < limit.saturating_sub(self.layout.total) {
            self.error.get_or_insert(format!(
                "layer {} accesses [{lo}, {hi}) outside its region",
                self.layer
            ));
        }
    }
}

impl TraceSink for ImTracker {
    fn record(&mut self, ev: AccessEvent) {
        if ev.target != Target::IntermediateMemory {
            return;
        }
        let eb = self.eb;
        match (ev.object, ev.access) {
            (ObjectId::InputFrame(f), _) => {
                let lo = self.layout.input_base(self.layer) + f as u64 * self.in_dim * eb;
                let hi = lo + self.in_dim * eb;
                self.check_bounds(
                    lo,
                    hi,
                    self.layout.input_base(self.layer) + self.layout.half,
                );
                self.reads.insert(lo, hi);
            }
            (ObjectId::OutputFrame(f), _) => {
                let lo = self.layout.output_base(self.layer)
                    + f as u64 * self.out_dim * eb
                    + self.pass as u64 * self.hidden * eb;
                let hi = lo + self.hidden * eb;
                self.check_bounds(
                    lo,
                    hi,
                    self.layout.output_base(self.layer) + self.layout.half,
                );
                self.writes.insert(lo, hi);
            }
            (ObjectId::Partial(g, f, j), _) => {
                let idx = (g.index() as u64 * self.steps + f as u64) * self.hidden + j as u64;
                let lo = self.layout.partial_base + idx * self.partial_bytes;
                self.check_bounds(lo, lo + self.partial_bytes, self.layout.total);
            }
            _ => {}
        }
    }
}

#[derive(Default)]
struct CuReuse {
    cu: [ReuseAnalyzer; 4],
}

impl TraceSink for CuReuse {
    fn record(&mut self, ev: AccessEvent) {
        self.cu[ev.cu.index()].observe(&ev);
    }
}

struct PassTiming {
    cycles: u64,
    issue: u64,
    recurrence_wait: u64,
    mu_stall: u64,
    min_interval: u64,
}

/// Cycle count of one pass. DPU sub-vectors issue one per cycle; neuron
/// `j`'s result reaches the MUs `dpu_latency` cycles after its last issue,
/// and the MUs accept a new neuron every `initiation_interval` cycles. The
/// recurrent part of step `t` starts only when `h_{t-1}` is broadcast.
fn pass_timing(
    layer: &LayerDescriptor,
    steps: usize,
    policy: SchedulePolicy,
    cfg: &HardwareConfig,
    plan: &MuPlan,
) -> PassTiming {
    let kx = sub_vectors(layer.input_size, cfg);
    let kh = sub_vectors(layer.hidden_size, cfg);
    let lat = cfg.dpu_latency();
    let comm = cfg.mu_comm_cycles as u64;
    let ii = plan.initiation_interval;
    let nh = layer.hidden_size as u64;
    let t_len = steps as u64;

    let mut dpu_free = 0u64;
    let mut h_ready = 0u64;
    let mut mu_next = 0u64;
    let mut wait = 0u64;
    let mut stall = 0u64;
    let mut last_result: Option<u64> = None;
    let mut min_interval = u64::MAX;
    let mut issue = 0u64;

    let mut mu = |result: u64, last_h: &mut u64| {
        if let Some(prev) = last_result {
            min_interval = min_interval.min(result - prev);
        }
        last_result = Some(result);
        let start = result.max(mu_next);
        stall += start - result;
        mu_next = start + ii;
        *last_h = start + plan.critical_path;
    };

    match policy {
        SchedulePolicy::Conventional => {
            for _ in 0..steps {
                let mut last_h = 0;
                for _ in 0..nh {
                    let fwd_end = dpu_free + kx;
                    let rec_start = fwd_end.max(h_ready);
                    wait += rec_start - fwd_end;
                    dpu_free = rec_start + kh;
                    issue += kx + kh;
                    mu(dpu_free + lat, &mut last_h);
                }
                h_ready = last_h + comm;
            }
        }
        SchedulePolicy::Mwl => {
            let q_lat = (cfg.op_latency.mul + cfg.op_latency.add + cfg.op_latency.cmp) as u64;
            issue += nh * t_len * kx;
            dpu_free = nh * t_len * kx;
            for t in 0..t_len {
                let mut last_h = 0;
                for j in 0..nh {
                    let partial_ready = (j * t_len + t + 1) * kx + lat + q_lat;
                    let ready = h_ready.max(partial_ready);
                    let rec_start = dpu_free.max(ready);
                    if h_ready > dpu_free {
                        wait += h_ready.min(rec_start) - dpu_free;
                    }
                    dpu_free = rec_start + kh;
                    issue += kh;
                    mu(dpu_free + lat, &mut last_h);
                }
                h_ready = last_h + comm;
            }
        }
    }
    PassTiming {
        cycles: h_ready,
        issue,
        recurrence_wait: wait,
        mu_stall: stall,
        min_interval: if min_interval == u64::MAX {
            0
        } else {
            min_interval
        },
    }
}

fn fingerprint(net: &NetworkDescriptor, steps: usize, input: Option<&Sequence>) -> String {
    // FNV-1a over the descriptor and input.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    };
    eat(serde_json::to_string(net)
        .expect("descriptor serializes")
        .as_bytes());
    eat(&(steps as u64).to_le_bytes());
    if let Some(x) = input {
        for v in x.as_slice() {
            eat(&v.to_le_bytes());
        }
    }
    format!(
        "{}:T{steps}:{h:016x}",
        net.name.as_deref().unwrap_or("network")
    )
}

/// Agreement of `got` with `want`. A zero tolerance demands bit equality.
pub fn output_agreement(got: &Sequence, want: &Sequence, tolerance: f32) -> OracleCheck {
    let (mut max, mut dot, mut na, mut nb) = (0.0f32, 0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in got.as_slice().iter().zip(want.as_slice()) {
        max = max.max((a - b).abs());
        dot += a as f64 * b as f64;
        na += a as f64 * a as f64;
        nb += b as f64 * b as f64;
    }
    let cosine = if na == 0.0 && nb == 0.0 {
        1.0
    } else {
        dot / (na.sqrt() * nb.sqrt()).max(f64::MIN_POSITIVE)
    };
    let bit_exact = got
        .as_slice()
        .iter()
        .zip(want.as_slice())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    OracleCheck {
        bit_exact,
        max_abs_diff: max,
        cosine_similarity: cosine,
        tolerance,
        passed: if tolerance == 0.0 {
            bit_exact
        } else {
            max <= tolerance
        },
    }
}

/// Allowed output deviation with quantized partials. Each dequantized
/// partial is off by at most half a step and gate slopes are at most one;
/// the recurrence and the following layers may amplify a layer's error,
/// which a factor of two per layer covers on the random-network suite.
pub fn quantization_tolerance(layers: &[QuantConfig]) -> f32 {
    layers.iter().map(|q| 0.5 * q.step() * 2.0).sum()
}

/// Allowed deviation of reduction-tree summation from sequential summation.
pub const REDUCTION_TREE_TOLERANCE: f32 = 1e-4;

fn run(
    net: &NetworkDescriptor,
    steps: usize,
    policy: SchedulePolicy,
    cfg: &HardwareConfig,
    opts: &SimOptions,
    functional: Option<(&NetworkWeights, &Sequence)>,
) -> Result<SimReport> {
    cfg.validate()?;
    net.validate()?;
    if steps == 0 {
        return Err(Error::Shape("input sequence is empty".into()));
    }
    if !(opts.frames_per_second.is_finite() && opts.frames_per_second > 0.0) {
        return Err(Error::Config("frames_per_second must be positive".into()));
    }
    let mut cfg = cfg.clone();
    let mut warnings = Vec::new();
    let eb = net.numeric_precision.bytes();
    let t = steps as u64;
    let quantized = policy == SchedulePolicy::Mwl && cfg.quantize_partials;
    let partial_bytes = if policy == SchedulePolicy::Mwl {
        cfg.partial_bytes(eb)
    } else {
        eb
    };

    // Capacity.
    let mut wm_high = 0;
    let mut ib_high = 0;
    let mut rb_high = 0;
    for (i, l) in net.layers.iter().enumerate() {
        let need = weight_memory_need(l, policy, eb);
        if need > cfg.weight_mem_bytes_per_cu {
            return Err(Error::Capacity {
                layer: i,
                memory: "weight memory",
                needed: need,
                available: cfg.weight_mem_bytes_per_cu,
            });
        }
        wm_high = wm_high.max(need);
        let need = input_buffer_need(l, policy, eb);
        if need > cfg.input_mem_bytes_per_cu {
            return Err(Error::Capacity {
                layer: i,
                memory: "input buffer",
                needed: need,
                available: cfg.input_mem_bytes_per_cu,
            });
        }
        ib_high = ib_high.max(need);
        if policy == SchedulePolicy::Mwl {
            let row = l.input_size as u64 * eb;
            if row <= cfg.row_buffer_bytes {
                rb_high = rb_high.max(row);
            } else {
                warnings.push(format!(
                    "layer {i}: forward rows of {row} bytes exceed the {}-byte row buffer and are read from weight memory",
                    cfg.row_buffer_bytes
                ));
            }
        }
    }
    let layout = ImLayout::new(net, t, policy, eb, partial_bytes);
    if layout.total > cfg.intermediate_mem_bytes {
        return Err(Error::Capacity {
            layer: net.layers.len() - 1,
            memory: "intermediate memory",
            needed: layout.total,
            available: cfg.intermediate_mem_bytes,
        });
    }

    // Functional run.
    let mut quant_summary = None;
    let mut oracle = None;
    let mut outputs = None;
    if let Some((weights, input)) = functional {
        let x = input.map_values(|v| net.numeric_precision.store(v));
        let base = Datapath {
            mode: opts.mode,
            width: cfg.dpu_width as usize,
            precision: net.numeric_precision,
            quant: None,
        };
        let mut seq = x;
        let mut stats = PassStats::default();
        let mut layer_quant = Vec::new();
        for (i, (l, w)) in net.layers.iter().zip(&weights.layers).enumerate() {
            let (out, st) = if quantized {
                let alpha = if cfg.calibrate_alpha {
                    // range from this layer's own forward partials on the run input
                    let mut max = 0.0f32;
                    for (p, ws) in w.iter().enumerate() {
                        let frames: Vec<&[f32]> = if p == 0 {
                            seq.frames().collect()
                        } else {
                            seq.frames().rev().collect()
                        };
                        max = max.max(base.forward_max(l, ws, &frames));
                    }
                    alpha_from_max(max)
                } else {
                    cfg.layer_alpha.get(i).copied().unwrap_or(cfg.quant.alpha())
                };
                let q = QuantConfig::new(cfg.quant.n_bits(), alpha)?;
                let table = DequantTable::new(&q);
                layer_quant.push(q);
                let dp = Datapath {
                    quant: Some((&q, &table)),
                    ..base
                };
                dp.run_layer(l, w, &seq, policy)
            } else {
                base.run_layer(l, w, &seq, policy)
            }
            .map_err(|e| e.in_layer(i))?;
            stats.merge(st);
            seq = out;
        }
        let out = seq;
        if quantized {
            let calibrated = cfg.calibrate_alpha;
            cfg.layer_alpha = layer_quant.iter().map(|q| q.alpha()).collect();
            cfg.calibrate_alpha = false;
            quant_summary = Some(QuantSummary {
                n_bits: cfg.quant.n_bits(),
                layer_alpha: cfg.layer_alpha.clone(),
                calibrated,
                max_abs_partial: stats.max_abs_partial,
                saturated: stats.saturated,
            });
            if stats.saturated > 0 {
                warnings.push(format!(
                    "{} partial outputs exceeded their layer's alpha and saturated",
                    stats.saturated
                ));
            }
        }
        if opts.check_oracle {
            let want = network_infer(net, weights, input)?;
            let tol = if quantized {
                quantization_tolerance(&layer_quant)
            } else if opts.mode == ArithmeticMode::ReductionTree {
                REDUCTION_TREE_TOLERANCE
            } else {
                0.0
            };
            let check = output_agreement(&out, &want, tol);
            if !check.passed {
                return Err(Error::Invariant(format!(
                    "simulated outputs deviate from the reference by up to {} (allowed {tol})",
                    check.max_abs_diff
                )));
            }
            oracle = Some(check);
        }
        outputs = Some(out);
    }

    // Access counts and the double-buffer check.
    let params = TraceParams::new(net.numeric_precision, partial_bytes, cfg.row_buffer_bytes);
    let mut counts = AccessCounts::default();
    let mut tracker = ImTracker {
        layout,
        layer: 0,
        pass: 0,
        in_dim: 0,
        out_dim: 0,
        hidden: 0,
        steps: t,
        eb,
        partial_bytes,
        reads: IntervalSet::default(),
        writes: IntervalSet::default(),
        error: None,
    };
    let mut reuse = opts.reuse.then(Vec::new);
    let io_event = |target, object, access, bytes| AccessEvent {
        cu: Gate::Input,
        target,
        object,
        access,
        bytes,
        step: 0,
        neuron: 0,
    };
    let input_bytes = t * net.input_dim as u64 * eb;
    counts.record(io_event(
        Target::Dram,
        ObjectId::Sequence,
        Access::Read,
        input_bytes,
    ));
    counts.record(io_event(
        Target::IntermediateMemory,
        ObjectId::Sequence,
        Access::Write,
        input_bytes,
    ));
    for (i, l) in net.layers.iter().enumerate() {
        tracker.start_layer(i, l);
        for p in 0..l.passes() {
            tracker.pass = p;
            if let Some(r) = reuse.as_mut() {
                let mut cu = CuReuse::default();
                emit_pass(
                    l,
                    steps,
                    p == 1,
                    policy,
                    params,
                    &mut crate::sched::Tee(&mut cu, &mut counts),
                );
                let mut per_cu = BTreeMap::new();
                for (g, a) in Gate::ALL.into_iter().zip(cu.cu) {
                    per_cu.insert(g, a.finish());
                }
                r.push(PassReuse {
                    layer: i,
                    pass: p,
                    per_cu,
                });
                // addresses are checked on a second, count-free replay
                emit_pass(l, steps, p == 1, policy, params, &mut tracker);
            } else {
                emit_pass(
                    l,
                    steps,
                    p == 1,
                    policy,
                    params,
                    &mut crate::sched::Tee(&mut counts, &mut tracker),
                );
            }
        }
        tracker.finish_layer();
    }
    let output_bytes = t * net.output_dim() as u64 * eb;
    counts.record(io_event(
        Target::IntermediateMemory,
        ObjectId::Sequence,
        Access::Read,
        output_bytes,
    ));
    counts.record(io_event(
        Target::Dram,
        ObjectId::Sequence,
        Access::Write,
        output_bytes,
    ));
    let softmax = net.softmax_weight_bytes();
    if softmax > 0 {
        counts.record(io_event(
            Target::Dram,
            ObjectId::SoftmaxWeights,
            Access::Read,
            softmax,
        ));
    }
    if let Some(e) = tracker.error {
        return Err(Error::Invariant(format!("double buffering violated: {e}")));
    }

    // Timing.
    let plans = [mu_plan(false, &cfg), mu_plan(true, &cfg)];
    let mut passes = Vec::new();
    let mut dram_free = cfg.dram_cycles(input_bytes);
    let mut prev_start = 0u64;
    let mut prev_end = 0u64;
    let mut dpu_ops = 0u64;
    let mut mu_ops = 0u64;
    let mut mu_stall_total = 0u64;
    let mut dram_stall_total = 0u64;
    for (i, l) in net.layers.iter().enumerate() {
        let plan = &plans[l.peephole as usize];
        let timing = pass_timing(l, steps, policy, &cfg, plan);
        let kx = sub_vectors(l.input_size, &cfg);
        let kh = sub_vectors(l.hidden_size, &cfg);
        for p in 0..l.passes() {
            let fetch_start = dram_free.max(prev_start);
            let fetch_end = fetch_start + cfg.dram_cycles(l.cell_elems() * eb);
            dram_free = fetch_end;
            let start = prev_end.max(fetch_end);
            let stall = start - prev_end;
            let end = start + timing.cycles;
            passes.push(PassReport {
                layer: i,
                pass: p,
                start_cycle: start,
                end_cycle: end,
                dpu_issue_cycles: timing.issue,
                dram_stall_cycles: stall,
                recurrence_wait_cycles: timing.recurrence_wait,
                mu_stall_cycles: timing.mu_stall,
                mu_initiation_interval: plan.initiation_interval,
                dpu_result_interval: timing.min_interval,
            });
            dram_stall_total += stall;
            mu_stall_total += timing.mu_stall;
            dpu_ops += 4 * t * l.hidden_size as u64 * (kx + kh);
            mu_ops += t * l.hidden_size as u64 * plan.compute_ops();
            if policy == SchedulePolicy::Mwl && quantized {
                // scale, round and clamp per stored partial, one lookup per read
                mu_ops += 4 * t * l.hidden_size as u64 * 4;
            }
            prev_start = start;
            prev_end = end;
        }
    }
    let mut compute_end = prev_end;
    if softmax > 0 {
        let fetch_end = dram_free.max(prev_start) + cfg.dram_cycles(softmax);
        compute_end = compute_end.max(fetch_end);
    }
    let writeback_cycles = cfg.dram_cycles(output_bytes);
    let cycles = compute_end + writeback_cycles;
    let seconds = cfg.seconds(cycles);

    let peep = net.layers.iter().any(|l| l.peephole);
    let worst_plan = &plans[peep as usize];
    let bottleneck = mu_stall_total > 0;
    if bottleneck {
        let p = passes
            .iter()
            .find(|p| p.mu_stall_cycles > 0)
            .expect("a stalled pass");
        let msg = format!(
            "MU is the bottleneck: layer {} delivers a DPU result every {} cycles but the MUs need {} cycles per neuron ({} stall cycles in total)",
            p.layer, p.dpu_result_interval, p.mu_initiation_interval, mu_stall_total
        );
        match cfg.mu_bottleneck {
            CheckLevel::Error => return Err(Error::Invariant(msg)),
            CheckLevel::Warn => {
                warn!("{msg}");
                warnings.push(msg);
            }
        }
    }

    let dram = counts.target(Target::Dram);
    let dram_bytes = dram.read_bytes + dram.write_bytes;
    let realtime_seconds = steps as f64 / opts.frames_per_second;
    let bandwidth = Bandwidth {
        dram_bytes,
        average_bytes_per_s: dram_bytes as f64 / seconds,
        realtime_seconds,
        realtime_bytes_per_s: dram_bytes as f64 / realtime_seconds,
        realtime_ok: seconds <= realtime_seconds,
        peak_bytes_per_s: cfg.peak_dram_bandwidth_bytes_per_s,
    };
    if bandwidth.realtime_bytes_per_s > bandwidth.peak_bytes_per_s {
        warnings.push(format!(
            "real-time DRAM bandwidth {:.3e} B/s exceeds the {:.3e} B/s peak",
            bandwidth.realtime_bytes_per_s, bandwidth.peak_bytes_per_s
        ));
    }
    if !bandwidth.realtime_ok {
        warnings.push(format!(
            "execution takes {seconds:.4} s for {realtime_seconds:.4} s of input; not real time"
        ));
    }

    let banks = |bytes: u64, capacity: u64| {
        let b = if cfg.power_gating { bytes } else { capacity };
        b.div_ceil(cfg.bank_bytes)
    };
    let storage = StorageReport {
        weight_memory_per_cu: Occupancy {
            high_water_bytes: wm_high,
            capacity_bytes: cfg.weight_mem_bytes_per_cu,
        },
        input_buffer_per_cu: Occupancy {
            high_water_bytes: ib_high,
            capacity_bytes: cfg.input_mem_bytes_per_cu,
        },
        row_buffer_per_cu: Occupancy {
            high_water_bytes: rb_high,
            capacity_bytes: cfg.row_buffer_bytes,
        },
        intermediate_memory: Occupancy {
            high_water_bytes: layout.total,
            capacity_bytes: cfg.intermediate_mem_bytes,
        },
        weight_banks_per_cu: banks(wm_high, cfg.weight_mem_bytes_per_cu),
        intermediate_banks: banks(layout.total, cfg.intermediate_mem_bytes),
    };

    let energy_events = energy_events(
        &counts,
        dpu_ops,
        mu_ops,
        &storage,
        policy,
        seconds,
        fingerprint(net, steps, functional.map(|f| f.1)),
        format!("{}/{policy}", cfg.name),
    );
    let energy = account(&energy_events, &cfg.energy)?;

    let output_summary = outputs.as_ref().map(|o: &Sequence| OutputSummary {
        frames: o.len(),
        dim: o.dim(),
        max_abs: o.as_slice().iter().fold(0.0, |m, v| m.max(v.abs())),
        sum: o.as_slice().iter().map(|&v| v as f64).sum(),
    });

    Ok(SimReport {
        network: net.name.clone(),
        policy,
        steps,
        options: opts.clone(),
        cycles,
        seconds,
        dram_stall_cycles: dram_stall_total,
        writeback_cycles,
        passes,
        mu: MuSummary {
            critical_path: worst_plan.critical_path,
            initiation_interval: worst_plan.initiation_interval,
            stall_cycles: mu_stall_total,
            bottleneck,
        },
        access_counts: counts,
        dpu_subvector_ops: dpu_ops,
        mu_ops,
        bandwidth,
        storage,
        double_buffer_ok: true,
        reuse,
        quant: quant_summary,
        oracle,
        output_summary,
        energy_events,
        energy,
        warnings,
        outputs,
        config: cfg,
    })
}

#[allow(clippy::too_many_arguments)]
fn energy_events(
    counts: &AccessCounts,
    dpu_ops: u64,
    mu_ops: u64,
    storage: &StorageReport,
    policy: SchedulePolicy,
    seconds: f64,
    workload: String,
    label: String,
) -> EnergyEvents {
    use EventClass::*;
    let mut ev = EnergyEvents {
        seconds,
        workload,
        label,
        ..Default::default()
    };
    let pairs = [
        (Target::WeightBuffer, WeightBufferRead, WeightBufferWrite),
        (Target::RowBuffer, RowBufferRead, RowBufferWrite),
        (Target::InputBuffer, InputBufferRead, InputBufferWrite),
        (
            Target::IntermediateMemory,
            IntermediateMemoryRead,
            IntermediateMemoryWrite,
        ),
        (Target::Dram, DramRead, DramWrite),
    ];
    for (target, r, w) in pairs {
        let c = counts.target(target);
        ev.counts.insert(r, c.read_bytes);
        ev.counts.insert(w, c.write_bytes);
    }
    ev.counts.insert(DpuSubvector, dpu_ops);
    ev.counts.insert(MuOp, mu_ops);
    let cus = 4;
    ev.powered_units
        .insert(Component::WeightMemory, cus * storage.weight_banks_per_cu);
    ev.powered_units
        .insert(Component::IntermediateMemory, storage.intermediate_banks);
    ev.powered_units.insert(Component::InputBuffer, cus);
    let row_buffers = if policy == SchedulePolicy::Mwl {
        cus
    } else {
        0
    };
    ev.powered_units.insert(Component::RowBuffer, row_buffers);
    ev.powered_units.insert(Component::Dpu, cus);
    ev.powered_units.insert(Component::Mu, cus);
    ev
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{generate_weights, synthetic_input};
    use crate::model::{Direction, Precision};
    use crate::sched::dram_traffic;

    fn tiny() -> (NetworkDescriptor, NetworkWeights, Sequence) {
        let net = NetworkDescriptor::stacked(16, [(16, Direction::ForwardOnly, true)]);
        let w = generate_weights(&net, 1);
        (net, w, synthetic_input(16, 2, Precision::Fp32, 2))
    }

    fn warn_cfg() -> HardwareConfig {
        let mut c = HardwareConfig::epur();
        c.mu_bottleneck = CheckLevel::Warn;
        c
    }

    #[test]
    fn tiny_network_matches_reference() {
        let (net, w, x) = tiny();
        let opts = SimOptions::default();
        let conv = simulate(
            &net,
            &w,
            &x,
            SchedulePolicy::Conventional,
            &warn_cfg(),
            &opts,
        )
        .unwrap();
        let want = network_infer(&net, &w, &x).unwrap();
        assert_eq!(conv.outputs.as_ref().unwrap(), &want);
        assert!(conv.oracle.as_ref().unwrap().bit_exact);
        let mwl = simulate(&net, &w, &x, SchedulePolicy::Mwl, &warn_cfg(), &opts).unwrap();
        assert_eq!(mwl.outputs, conv.outputs);
    }

    #[test]
    fn mu_bottleneck_fails_the_run_unless_downgraded() {
        // 16-wide vectors give two sub-vectors per neuron, fewer cycles
        // than the MUs need
        let (net, w, x) = tiny();
        let err = simulate(
            &net,
            &w,
            &x,
            SchedulePolicy::Conventional,
            &HardwareConfig::epur(),
            &SimOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Invariant(ref m) if m.contains("MU is the bottleneck")));
        let ok = simulate(
            &net,
            &w,
            &x,
            SchedulePolicy::Conventional,
            &warn_cfg(),
            &SimOptions::default(),
        )
        .unwrap();
        assert!(ok.mu.bottleneck);
        assert!(!ok.warnings.is_empty());
    }

    #[test]
    fn dram_bytes_match_traffic_model() {
        let net = NetworkDescriptor::stacked(
            24,
            [
                (32, Direction::Bidirectional, true),
                (32, Direction::ForwardOnly, false),
            ],
        );
        for policy in [SchedulePolicy::Conventional, SchedulePolicy::Mwl] {
            let r = simulate_timing(&net, 9, policy, &warn_cfg(), &SimOptions::default()).unwrap();
            let d = dram_traffic(&net, policy, 9, 1);
            assert_eq!(r.bandwidth.dram_bytes, d.total_bytes);
        }
    }

    #[test]
    fn capacity_errors_name_the_layer() {
        let net = NetworkDescriptor::stacked(
            64,
            [
                (64, Direction::ForwardOnly, false),
                (1100, Direction::ForwardOnly, false),
            ],
        );
        let err = simulate_timing(
            &net,
            4,
            SchedulePolicy::Conventional,
            &HardwareConfig::epur(),
            &SimOptions::default(),
        )
        .unwrap_err();
        match err {
            Error::Capacity {
                layer,
                needed,
                available,
                ..
            } => {
                assert_eq!(layer, 1);
                assert!(needed > available);
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn interval_sets_merge_and_intersect() {
        let mut a = IntervalSet::default();
        a.insert(0, 4);
        a.insert(8, 12);
        a.insert(4, 8);
        assert_eq!(a.spans.len(), 1);
        let mut b = IntervalSet::default();
        b.insert(12, 20);
        assert_eq!(a.overlaps(&b), None);
        b.insert(11, 12);
        assert_eq!(a.overlaps(&b), Some((11, 12)));
    }

    #[test]
    fn longer_inputs_take_longer() {
        let net = NetworkDescriptor::stacked(64, [(64, Direction::ForwardOnly, true)]);
        let cfg = HardwareConfig::epur();
        let c = |t| {
            simulate_timing(
                &net,
                t,
                SchedulePolicy::Conventional,
                &cfg,
                &SimOptions::default(),
            )
            .unwrap()
            .cycles
        };
        assert!(c(2) > c(1));
        assert!(c(3) > c(2));
    }
}
