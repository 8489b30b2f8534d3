use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use log::{info, warn};
use serde::Serialize;

use epur::arch::{
    output_agreement, simulate as sim_functional, simulate_timing, ArithmeticMode, CheckLevel,
    HardwareConfig, OracleCheck, SimOptions, SimReport,
};
use epur::energy::{compare as compare_energy, Component, EnergyComparison};
use epur::generate::{self, Preset};
use epur::io;
use epur::model::{
    network_infer, Direction, Gate, NetworkDescriptor, NetworkWeights, Precision, Sequence,
};
use epur::quant::QuantConfig;
use epur::sched::{
    emit_pass, reuse_analysis, trace_conventional, trace_mwl, CsvTraceWriter, ObjectClass,
    SchedulePolicy, Target, TraceParams,
};

use crate::table::{kv, ratio, render};
use crate::{HwArgs, InputArgs, Level, NetArgs};

#[derive(Clone, Copy)]
pub struct Output {
    pub json: bool,
}

impl Output {
    fn emit<T: Serialize>(&self, value: &T, text: impl FnOnce() -> String) -> Result<()> {
        if self.json {
            println!("{}", serde_json::to_string_pretty(value)?);
        } else {
            print!("{}", text());
        }
        Ok(())
    }
}

/// Files are only written once every computation and check has succeeded.
#[derive(Default)]
struct Pending(Vec<(PathBuf, Vec<u8>)>);

impl Pending {
    fn add(
        &mut self,
        path: Option<&PathBuf>,
        bytes: impl FnOnce() -> Result<Vec<u8>>,
    ) -> Result<()> {
        if let Some(p) = path {
            self.0.push((p.clone(), bytes()?));
        }
        Ok(())
    }

    fn json<T: Serialize>(&mut self, path: Option<&PathBuf>, value: &T) -> Result<()> {
        self.add(path, || Ok(serde_json::to_vec_pretty(value)?))
    }

    fn commit(self) -> Result<()> {
        for (p, bytes) in self.0 {
            io::write_atomic(&p, &bytes).with_context(|| format!("writing {}", p.display()))?;
            info!("wrote {}", p.display());
        }
        Ok(())
    }
}

fn load_network(spec: &str) -> Result<(NetworkDescriptor, Option<&'static Preset>)> {
    if let Some(name) = spec.strip_prefix("preset:") {
        let p = generate::preset(name)?;
        return Ok((p.descriptor(), Some(p)));
    }
    let net =
        io::read_descriptor(Path::new(spec)).with_context(|| format!("reading network {spec}"))?;
    Ok((net, None))
}

fn load_weights(net: &NetworkDescriptor, args: &NetArgs) -> Result<NetworkWeights> {
    match &args.weights {
        Some(p) => {
            Ok(io::read_weights(net, p)
                .with_context(|| format!("reading weights {}", p.display()))?)
        }
        None => Ok(generate::generate_weights(net, args.weight_seed)),
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
enum InputSource {
    File { path: PathBuf },
    Synthetic { seed: u64, length: usize },
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
enum WeightSource {
    File { path: PathBuf },
    Generated { seed: u64 },
}

fn weight_source(args: &NetArgs) -> WeightSource {
    match &args.weights {
        Some(p) => WeightSource::File { path: p.clone() },
        None => WeightSource::Generated {
            seed: args.weight_seed,
        },
    }
}

fn load_input(net: &NetworkDescriptor, args: &InputArgs) -> Result<(Sequence, InputSource)> {
    match &args.input {
        Some(p) => {
            let seq =
                io::read_sequence(p).with_context(|| format!("reading input {}", p.display()))?;
            Ok((seq, InputSource::File { path: p.clone() }))
        }
        None => {
            if args.length == 0 {
                bail!(epur::Error::Shape("--length must be at least 1".into()));
            }
            let seq = generate::synthetic_input(
                net.input_dim,
                args.length,
                net.numeric_precision,
                args.seed,
            );
            Ok((
                seq,
                InputSource::Synthetic {
                    seed: args.seed,
                    length: args.length,
                },
            ))
        }
    }
}

fn input_length(args: &InputArgs) -> Result<usize> {
    match &args.input {
        Some(p) => Ok(io::read_sequence(p)
            .with_context(|| format!("reading input {}", p.display()))?
            .len()),
        None => Ok(args.length),
    }
}

fn resolve_hw(hw: &HwArgs, preset: &str) -> Result<HardwareConfig> {
    let mut cfg = match &hw.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            HardwareConfig::from_json(&text)
                .with_context(|| format!("in config {}", p.display()))?
        }
        None => HardwareConfig::preset(preset)?,
    };
    if let Some(level) = hw.mu_check {
        cfg.mu_bottleneck = match level {
            Level::Error => CheckLevel::Error,
            Level::Warn => CheckLevel::Warn,
        };
    }
    if hw.quant {
        cfg.quantize_partials = true;
    }
    if hw.no_quant {
        cfg.quantize_partials = false;
    }
    if hw.bits.is_some() || hw.alpha.is_some() {
        let bits = hw.bits.unwrap_or(cfg.quant.n_bits());
        let alpha = hw.alpha.unwrap_or(cfg.quant.alpha());
        cfg.quant = QuantConfig::new(bits, alpha)?;
    }
    if hw.alpha.is_some() {
        cfg.calibrate_alpha = false;
        cfg.layer_alpha.clear();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn sim_options(hw: &HwArgs, reuse: bool) -> SimOptions {
    SimOptions {
        mode: if hw.tree {
            ArithmeticMode::ReductionTree
        } else {
            ArithmeticMode::Exact
        },
        check_oracle: true,
        reuse,
        frames_per_second: hw.fps,
    }
}

fn mib(bytes: u64) -> String {
    format!("{:.2} MiB", bytes as f64 / (1u64 << 20) as f64)
}

// gen-network

#[derive(Args)]
pub struct GenArgs {
    /// Built-in network shape (BYSDNE, RLDRADSPR, EESEN, LDLRNN, GMAT).
    #[arg(long, conflicts_with_all = ["input_dim", "hidden", "layers"])]
    preset: Option<String>,
    #[arg(long, required_unless_present = "preset")]
    input_dim: Option<usize>,
    #[arg(long, required_unless_present = "preset")]
    hidden: Option<usize>,
    #[arg(long, required_unless_present = "preset")]
    layers: Option<usize>,
    #[arg(long)]
    bidirectional: bool,
    #[arg(long)]
    peephole: bool,
    /// Store weights and activations as fp16.
    #[arg(long)]
    fp16: bool,
    /// Width of a softmax output layer whose weights are fetched at the end.
    #[arg(long)]
    softmax: Option<usize>,
    #[arg(long)]
    name: Option<String>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output prefix: writes PREFIX.json and PREFIX.weights.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a random input sequence of this many frames to PREFIX.input.
    #[arg(long)]
    input_length: Option<usize>,
    #[arg(long, default_value_t = 7)]
    input_seed: u64,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Serialize)]
struct GenReport {
    network: NetworkDescriptor,
    seed: u64,
    weight_bytes: u64,
    weight_mib: f64,
    max_cell_bytes: u64,
    single_layer_ratio: f64,
    preset: Option<&'static Preset>,
    published_mib: Option<f64>,
    footprint_deviation: Option<f64>,
    files: Vec<PathBuf>,
}

pub fn gen_network(a: GenArgs, out: Output) -> Result<()> {
    let (mut net, preset) = match &a.preset {
        Some(name) => {
            let p = generate::preset(name)?;
            (p.descriptor(), Some(p))
        }
        None => {
            let dir = if a.bidirectional {
                Direction::Bidirectional
            } else {
                Direction::ForwardOnly
            };
            let (input, hidden, layers) =
                (a.input_dim.unwrap(), a.hidden.unwrap(), a.layers.unwrap());
            let mut net =
                NetworkDescriptor::stacked(input, (0..layers).map(|_| (hidden, dir, a.peephole)));
            if a.fp16 {
                net.numeric_precision = Precision::Fp16;
            }
            (net, None)
        }
    };
    if a.name.is_some() {
        net.name = a.name.clone();
    }
    if a.softmax.is_some() {
        net.softmax_outputs = a.softmax;
    }
    net.validate()?;
    if let Some(p) = preset {
        warn!(
            "{}: generated footprint deviates {:+.1}% from the published {} MiB ({})",
            p.name,
            100.0 * p.footprint_deviation(),
            p.published_mib,
            p.assumption
        );
    }

    let mut pending = Pending::default();
    let mut files = Vec::new();
    if let Some(prefix) = &a.out {
        let with = |ext: &str| {
            let mut s = prefix.as_os_str().to_owned();
            s.push(ext);
            PathBuf::from(s)
        };
        let weights = generate::generate_weights(&net, a.seed);
        let (desc, blob) = (with(".json"), with(".weights"));
        pending.add(Some(&desc), || Ok(io::descriptor_json(&net).into_bytes()))?;
        pending.add(Some(&blob), || Ok(io::encode_weights(&net, &weights)?))?;
        files.extend([desc, blob]);
        if let Some(len) = a.input_length {
            if len == 0 {
                bail!(epur::Error::Shape(
                    "--input-length must be at least 1".into()
                ));
            }
            let x =
                generate::synthetic_input(net.input_dim, len, net.numeric_precision, a.input_seed);
            let path = with(".input");
            pending.add(Some(&path), || Ok(io::encode_sequence(&x)))?;
            files.push(path);
        }
    }
    let report = GenReport {
        seed: a.seed,
        weight_bytes: net.weight_bytes(),
        weight_mib: net.weight_bytes() as f64 / (1u64 << 20) as f64,
        max_cell_bytes: net.max_cell_bytes(),
        single_layer_ratio: net.single_layer_ratio(),
        preset,
        published_mib: preset.map(|p| p.published_mib),
        footprint_deviation: preset.map(|p| p.footprint_deviation()),
        files,
        network: net,
    };
    pending.json(a.report.as_ref(), &report)?;
    pending.commit()?;
    out.emit(&report, || {
        let n = &report.network;
        let l0 = n.layers[0];
        let mut rows = vec![
            ("name", n.name.clone().unwrap_or_else(|| "-".into())),
            ("layers", n.layers.len().to_string()),
            ("neurons", l0.hidden_size.to_string()),
            ("passes", l0.passes().to_string()),
            ("peephole", l0.peephole.to_string()),
            ("input dim", n.input_dim.to_string()),
            ("precision", n.numeric_precision.name().into()),
            (
                "weights",
                format!(
                    "{} bytes ({})",
                    report.weight_bytes,
                    mib(report.weight_bytes)
                ),
            ),
            ("largest cell", mib(report.max_cell_bytes)),
            (
                "whole / single layer",
                format!("{:.3}", report.single_layer_ratio),
            ),
        ];
        if let Some(p) = preset {
            rows.push(("published", format!("{} MiB", p.published_mib)));
            rows.push((
                "deviation",
                format!("{:+.1}%", 100.0 * p.footprint_deviation()),
            ));
            rows.push(("assumption", p.assumption.into()));
        }
        for f in &report.files {
            rows.push(("wrote", f.display().to_string()));
        }
        kv(&rows)
    })
}

// infer

#[derive(Args)]
pub struct InferArgs {
    #[command(flatten)]
    net: NetArgs,
    #[command(flatten)]
    input: InputArgs,
    /// Write the output sequence (binary).
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Serialize)]
struct InferReport {
    network: NetworkDescriptor,
    weights: WeightSource,
    input: InputSource,
    frames: usize,
    output_dim: usize,
    max_abs: f32,
    sum: f64,
    last_frame: Vec<f32>,
}

pub fn infer(a: InferArgs, out: Output) -> Result<()> {
    let (net, _) = load_network(&a.net.network)?;
    let weights = load_weights(&net, &a.net)?;
    let (x, source) = load_input(&net, &a.input)?;
    let y = network_infer(&net, &weights, &x)?;
    let report = InferReport {
        weights: weight_source(&a.net),
        input: source,
        frames: y.len(),
        output_dim: y.dim(),
        max_abs: y.as_slice().iter().fold(0.0, |m, v| m.max(v.abs())),
        sum: y.as_slice().iter().map(|&v| v as f64).sum(),
        last_frame: y.frame(y.len() - 1).to_vec(),
        network: net,
    };
    let mut pending = Pending::default();
    pending.add(a.output.as_ref(), || Ok(io::encode_sequence(&y)))?;
    pending.json(a.report.as_ref(), &report)?;
    pending.commit()?;
    out.emit(&report, || {
        kv(&[
            ("frames", report.frames.to_string()),
            ("output dim", report.output_dim.to_string()),
            ("max |h|", format!("{:.6}", report.max_abs)),
            ("sum", format!("{:.6}", report.sum)),
        ])
    })
}

// simulate

#[derive(Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    net: NetArgs,
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    hw: HwArgs,
    #[arg(long, default_value = "conventional")]
    policy: SchedulePolicy,
    /// Skip the functional datapath; timing, traffic and energy only.
    #[arg(long)]
    timing_only: bool,
    /// Include LRU reuse statistics per pass and CU.
    #[arg(long)]
    reuse: bool,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the simulated output sequence (binary).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Export every memory access as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    weights: Option<WeightSource>,
    input: InputSource,
    #[serde(flatten)]
    sim: &'a SimReport,
}

fn run_sim(
    net: &NetworkDescriptor,
    na: &NetArgs,
    ia: &InputArgs,
    cfg: &HardwareConfig,
    opts: &SimOptions,
    policy: SchedulePolicy,
    timing_only: bool,
) -> Result<(SimReport, Option<WeightSource>, InputSource)> {
    if timing_only {
        let steps = input_length(ia)?;
        let source = match &ia.input {
            Some(p) => InputSource::File { path: p.clone() },
            None => InputSource::Synthetic {
                seed: ia.seed,
                length: ia.length,
            },
        };
        let r = simulate_timing(net, steps, policy, cfg, opts)?;
        return Ok((r, None, source));
    }
    let weights = load_weights(net, na)?;
    let (x, source) = load_input(net, ia)?;
    let r = sim_functional(net, &weights, &x, policy, cfg, opts)?;
    Ok((r, Some(weight_source(na)), source))
}

fn trace_csv(net: &NetworkDescriptor, r: &SimReport) -> Result<Vec<u8>> {
    let eb = net.numeric_precision.bytes();
    let partial = if r.policy == SchedulePolicy::Mwl {
        r.config.partial_bytes(eb)
    } else {
        eb
    };
    let params = TraceParams::new(net.numeric_precision, partial, r.config.row_buffer_bytes);
    let mut w = CsvTraceWriter::new(Vec::new())?;
    for (i, l) in net.layers.iter().enumerate() {
        for p in 0..l.passes() {
            w.set_pass(i, p);
            emit_pass(l, r.steps, p == 1, r.policy, params, &mut w);
        }
    }
    Ok(w.finish()?)
}

fn energy_rows(r: &SimReport) -> Vec<Vec<String>> {
    Component::ALL
        .iter()
        .map(|&c| {
            let d = r
                .energy
                .dynamic_by_component
                .get(&c)
                .copied()
                .unwrap_or(0.0);
            let l = r
                .energy
                .leakage_by_component
                .get(&c)
                .copied()
                .unwrap_or(0.0);
            vec![
                c.name().to_string(),
                format!("{:.4e}", d),
                format!("{:.4e}", l),
                format!("{:.4e}", d + l),
            ]
        })
        .collect()
}

fn sim_text(r: &SimReport) -> String {
    let mut rows = vec![
        ("network", r.network.clone().unwrap_or_else(|| "-".into())),
        ("config", r.config.name.clone()),
        ("policy", r.policy.to_string()),
        ("frames", r.steps.to_string()),
        ("cycles", r.cycles.to_string()),
        ("seconds", format!("{:.6e}", r.seconds)),
        ("dram stall cycles", r.dram_stall_cycles.to_string()),
        ("mu critical path", r.mu.critical_path.to_string()),
        ("mu interval", r.mu.initiation_interval.to_string()),
        ("mu stall cycles", r.mu.stall_cycles.to_string()),
        ("dram bytes", r.bandwidth.dram_bytes.to_string()),
        (
            "avg bandwidth",
            format!("{:.4e} B/s", r.bandwidth.average_bytes_per_s),
        ),
        (
            "real-time bandwidth",
            format!("{:.4e} B/s", r.bandwidth.realtime_bytes_per_s),
        ),
        ("real time", r.bandwidth.realtime_ok.to_string()),
        (
            "weight memory / CU",
            format!(
                "{} of {} ({} banks)",
                r.storage.weight_memory_per_cu.high_water_bytes,
                r.storage.weight_memory_per_cu.capacity_bytes,
                r.storage.weight_banks_per_cu
            ),
        ),
        (
            "intermediate memory",
            format!(
                "{} of {}",
                r.storage.intermediate_memory.high_water_bytes,
                r.storage.intermediate_memory.capacity_bytes
            ),
        ),
    ];
    if let Some(q) = &r.quant {
        rows.extend([
            ("quant bits", q.n_bits.to_string()),
            (
                "quant alpha per layer",
                format!(
                    "{:?}{}",
                    q.layer_alpha,
                    if q.calibrated { " (calibrated)" } else { "" }
                ),
            ),
            ("saturated partials", q.saturated.to_string()),
        ]);
    }
    if let Some(o) = &r.oracle {
        rows.extend([
            ("oracle bit-exact", o.bit_exact.to_string()),
            (
                "oracle max |diff|",
                format!("{:.3e} (allowed {:.3e})", o.max_abs_diff, o.tolerance),
            ),
            ("oracle cosine", format!("{:.6}", o.cosine_similarity)),
        ]);
    }
    let mut s = kv(&rows);
    s.push('\n');
    let rows: Vec<Vec<String>> = Target::ALL
        .iter()
        .map(|&t| {
            let c = r.access_counts.target(t);
            vec![
                t.name().to_string(),
                c.read_bytes.to_string(),
                c.write_bytes.to_string(),
            ]
        })
        .collect();
    s += &render(&["target", "read bytes", "write bytes"], &rows);
    s.push('\n');
    s += &render(
        &["component", "dynamic J", "leakage J", "total J"],
        &energy_rows(r),
    );
    s += &format!("total energy  {:.4e} J\n", r.energy.total);
    for w in &r.warnings {
        s += &format!("warning: {w}\n");
    }
    s
}

pub fn simulate(a: SimulateArgs, out: Output) -> Result<()> {
    let (net, _) = load_network(&a.net.network)?;
    let cfg = resolve_hw(&a.hw, &a.hw.preset)?;
    let opts = sim_options(&a.hw, a.reuse);
    if a.timing_only && a.output.is_some() {
        bail!(epur::Error::Config(
            "--output needs the functional datapath; drop --timing-only".into()
        ));
    }
    let (r, weights, input) =
        run_sim(&net, &a.net, &a.input, &cfg, &opts, a.policy, a.timing_only)?;
    let report = SimulateReport {
        weights,
        input,
        sim: &r,
    };
    let mut pending = Pending::default();
    pending.json(a.report.as_ref(), &report)?;
    if let Some(y) = &r.outputs {
        pending.add(a.output.as_ref(), || Ok(io::encode_sequence(y)))?;
    }
    pending.add(a.trace.as_ref(), || trace_csv(&net, &r))?;
    pending.commit()?;
    out.emit(&report, || sim_text(&r))
}

// analyze-reuse

#[derive(Args)]
pub struct ReuseArgs {
    /// Network descriptor JSON, or `preset:NAME`.
    #[arg(long)]
    network: String,
    #[arg(long, default_value = "conventional")]
    policy: SchedulePolicy,
    /// Sequence length.
    #[arg(long, default_value_t = 16)]
    length: usize,
    /// Bytes of one stored MWL partial.
    #[arg(long)]
    partial_bytes: Option<u64>,
    #[arg(long, default_value_t = 4096)]
    row_buffer_bytes: u64,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Serialize)]
struct CuReuse {
    layer: usize,
    cu: Gate,
    weight_buffer_max_distance: Option<u64>,
    row_buffer_max_distance: Option<u64>,
    forward_row_max_distance: Option<u64>,
    recurrent_row_max_distance: Option<u64>,
    min_weight_storage: u64,
    /// Weight-buffer bytes the conventional order keeps resident.
    gate_matrix_bytes: u64,
    forward_row_bytes: u64,
    recurrent_matrix_bytes: u64,
}

#[derive(Serialize)]
struct ReuseReport {
    network: NetworkDescriptor,
    policy: SchedulePolicy,
    steps: usize,
    partial_bytes: u64,
    row_buffer_bytes: u64,
    /// One direction per layer; the backward direction mirrors it.
    per_cu: Vec<CuReuse>,
}

pub fn analyze_reuse(a: ReuseArgs, out: Output) -> Result<()> {
    let (net, _) = load_network(&a.network)?;
    net.validate()?;
    if a.length == 0 {
        bail!(epur::Error::Shape("--length must be at least 1".into()));
    }
    let eb = net.numeric_precision.bytes();
    let partial_bytes = a.partial_bytes.unwrap_or(eb);
    let params = TraceParams::new(net.numeric_precision, partial_bytes, a.row_buffer_bytes);
    let mut per_cu = Vec::new();
    for (i, l) in net.layers.iter().enumerate() {
        let trace = match a.policy {
            SchedulePolicy::Conventional => trace_conventional(l, a.length, params),
            SchedulePolicy::Mwl => trace_mwl(l, a.length, params),
        };
        for g in Gate::ALL {
            let s = reuse_analysis(&trace.cu_stream(g));
            let nx = l.input_size as u64;
            let nh = l.hidden_size as u64;
            per_cu.push(CuReuse {
                layer: i,
                cu: g,
                weight_buffer_max_distance: s.target(Target::WeightBuffer).max_reuse_distance,
                row_buffer_max_distance: s.target(Target::RowBuffer).max_reuse_distance,
                forward_row_max_distance: s.class(ObjectClass::ForwardRow).max_reuse_distance,
                recurrent_row_max_distance: s.class(ObjectClass::RecurrentRow).max_reuse_distance,
                min_weight_storage: s.min_weight_storage(),
                gate_matrix_bytes: (nx + nh) * nh * eb,
                forward_row_bytes: nx * eb,
                recurrent_matrix_bytes: nh * nh * eb,
            });
        }
    }
    let report = ReuseReport {
        network: net,
        policy: a.policy,
        steps: a.length,
        partial_bytes,
        row_buffer_bytes: a.row_buffer_bytes,
        per_cu,
    };
    let mut pending = Pending::default();
    pending.json(a.report.as_ref(), &report)?;
    pending.commit()?;
    out.emit(&report, || {
        let d = |v: Option<u64>| v.map_or("-".into(), |x| x.to_string());
        let rows: Vec<Vec<String>> = report
            .per_cu
            .iter()
            .map(|c| {
                vec![
                    format!("{}/{}", c.layer, c.cu),
                    d(c.weight_buffer_max_distance),
                    d(c.row_buffer_max_distance),
                    d(c.forward_row_max_distance),
                    d(c.recurrent_row_max_distance),
                    c.min_weight_storage.to_string(),
                    c.gate_matrix_bytes.to_string(),
                ]
            })
            .collect();
        format!("policy {}  frames {}\n", report.policy, report.steps)
            + &render(
                &[
                    "layer/cu",
                    "wb max",
                    "rb max",
                    "fwd row max",
                    "rec row max",
                    "min storage",
                    "gate matrices",
                ],
                &rows,
            )
    })
}

// compare

#[derive(Args)]
pub struct CompareArgs {
    #[command(flatten)]
    net: NetArgs,
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    hw: HwArgs,
    #[arg(long, default_value = "conventional")]
    policy_a: SchedulePolicy,
    #[arg(long, default_value = "mwl")]
    policy_b: SchedulePolicy,
    /// Hardware preset for run A; defaults to --preset.
    #[arg(long)]
    preset_a: Option<String>,
    /// Hardware preset for run B; defaults to --preset.
    #[arg(long)]
    preset_b: Option<String>,
    #[arg(long)]
    timing_only: bool,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Serialize)]
struct TargetRatio {
    target: Target,
    read_bytes_a: u64,
    read_bytes_b: u64,
    read_ratio: Option<f64>,
    write_bytes_a: u64,
    write_bytes_b: u64,
    write_ratio: Option<f64>,
}

#[derive(Serialize)]
struct CompareReport<'a> {
    a: &'a SimReport,
    b: &'a SimReport,
    weight_buffer_read_ratio: Option<f64>,
    on_chip_weight_read_ratio: Option<f64>,
    cycle_ratio: f64,
    per_target: Vec<TargetRatio>,
    energy: EnergyComparison,
    outputs_agree: Option<OracleCheck>,
}

fn div(a: u64, b: u64) -> Option<f64> {
    (b > 0).then(|| a as f64 / b as f64)
}

pub fn compare(a: CompareArgs, out: Output) -> Result<()> {
    let (net, _) = load_network(&a.net.network)?;
    let cfg_a = resolve_hw(&a.hw, a.preset_a.as_deref().unwrap_or(&a.hw.preset))?;
    let cfg_b = resolve_hw(&a.hw, a.preset_b.as_deref().unwrap_or(&a.hw.preset))?;
    let opts = sim_options(&a.hw, false);
    // the two runs share nothing mutable
    let (ra, rb) = std::thread::scope(|s| {
        let ja = s.spawn(|| {
            run_sim(
                &net,
                &a.net,
                &a.input,
                &cfg_a,
                &opts,
                a.policy_a,
                a.timing_only,
            )
        });
        let jb = s.spawn(|| {
            run_sim(
                &net,
                &a.net,
                &a.input,
                &cfg_b,
                &opts,
                a.policy_b,
                a.timing_only,
            )
        });
        (ja.join(), jb.join())
    });
    let ra = ra
        .map_err(|_| anyhow::anyhow!("run A panicked"))?
        .context("run A")?
        .0;
    let rb = rb
        .map_err(|_| anyhow::anyhow!("run B panicked"))?
        .context("run B")?
        .0;

    let per_target: Vec<TargetRatio> = Target::ALL
        .iter()
        .map(|&t| {
            let (x, y) = (ra.access_counts.target(t), rb.access_counts.target(t));
            TargetRatio {
                target: t,
                read_bytes_a: x.read_bytes,
                read_bytes_b: y.read_bytes,
                read_ratio: div(y.read_bytes, x.read_bytes),
                write_bytes_a: x.write_bytes,
                write_bytes_b: y.write_bytes,
                write_ratio: div(y.write_bytes, x.write_bytes),
            }
        })
        .collect();
    let weight_reads = |r: &SimReport| {
        r.access_counts.target(Target::WeightBuffer).read_bytes
            + r.access_counts.target(Target::RowBuffer).read_bytes
    };
    let outputs_agree = match (&ra.outputs, &rb.outputs) {
        (Some(x), Some(y)) => Some(output_agreement(y, x, 0.0)),
        _ => None,
    };
    let report = CompareReport {
        weight_buffer_read_ratio: div(
            rb.access_counts.target(Target::WeightBuffer).read_bytes,
            ra.access_counts.target(Target::WeightBuffer).read_bytes,
        ),
        on_chip_weight_read_ratio: div(weight_reads(&rb), weight_reads(&ra)),
        cycle_ratio: rb.cycles as f64 / ra.cycles as f64,
        energy: compare_energy(&ra.energy, &rb.energy)?,
        per_target,
        outputs_agree,
        a: &ra,
        b: &rb,
    };
    let mut pending = Pending::default();
    pending.json(a.report.as_ref(), &report)?;
    pending.commit()?;
    out.emit(&report, || {
        let mut rows = vec![
            ("run a", format!("{} / {}", ra.config.name, ra.policy)),
            ("run b", format!("{} / {}", rb.config.name, rb.policy)),
            (
                "weight buffer reads b/a",
                ratio(report.weight_buffer_read_ratio),
            ),
            (
                "on-chip weight reads b/a",
                ratio(report.on_chip_weight_read_ratio),
            ),
            ("cycles b/a", format!("{:.4}", report.cycle_ratio)),
            ("energy b/a", ratio(report.energy.total)),
        ];
        if let Some(o) = &report.outputs_agree {
            rows.extend([
                ("outputs bit-identical", o.bit_exact.to_string()),
                ("outputs max |diff|", format!("{:.3e}", o.max_abs_diff)),
            ]);
        }
        let mut s = kv(&rows);
        s.push('\n');
        let rows: Vec<Vec<String>> = report
            .per_target
            .iter()
            .map(|t| {
                vec![
                    t.target.name().to_string(),
                    t.read_bytes_a.to_string(),
                    t.read_bytes_b.to_string(),
                    ratio(t.read_ratio),
                    t.write_bytes_a.to_string(),
                    t.write_bytes_b.to_string(),
                    ratio(t.write_ratio),
                ]
            })
            .collect();
        s += &render(
            &[
                "target", "reads a", "reads b", "b/a", "writes a", "writes b", "b/a",
            ],
            &rows,
        );
        s.push('\n');
        let rows: Vec<Vec<String>> = report
            .energy
            .per_component
            .iter()
            .map(|(c, r)| {
                vec![
                    c.name().to_string(),
                    ratio(r.dynamic),
                    ratio(r.leakage),
                    ratio(r.total),
                ]
            })
            .collect();
        s += &render(
            &["component", "dynamic b/a", "leakage b/a", "total b/a"],
            &rows,
        );
        s
    })
}

// quantize-sweep

#[derive(Args)]
pub struct SweepArgs {
    #[command(flatten)]
    net: NetArgs,
    #[command(flatten)]
    input: InputArgs,
    /// Bit widths to try.
    #[arg(long, value_delimiter = ',', default_values_t = [4u32, 5, 6, 7, 8, 10, 12, 16])]
    bits: Vec<u32>,
    /// Fixed clamp range; calibrated from the input when omitted.
    #[arg(long)]
    alpha: Option<f32>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Serialize)]
struct SweepPoint {
    n_bits: u32,
    layer_alpha: Vec<f32>,
    /// Largest quantization step over the layers.
    max_step: f32,
    saturated: u64,
    max_abs_diff: f32,
    cosine_similarity: f64,
}

#[derive(Serialize)]
struct SweepReport {
    network: NetworkDescriptor,
    weights: WeightSource,
    input: InputSource,
    points: Vec<SweepPoint>,
}

pub fn quantize_sweep(a: SweepArgs, out: Output) -> Result<()> {
    let (net, _) = load_network(&a.net.network)?;
    let weights = load_weights(&net, &a.net)?;
    let (x, source) = load_input(&net, &a.input)?;
    let want = network_infer(&net, &weights, &x)?;
    let mut points = Vec::new();
    for &bits in &a.bits {
        let mut cfg = HardwareConfig::epur();
        cfg.name = format!("sweep-{bits}");
        // the sweep measures accuracy only
        cfg.mu_bottleneck = CheckLevel::Warn;
        cfg.weight_mem_bytes_per_cu = u64::MAX / 8;
        cfg.input_mem_bytes_per_cu = u64::MAX / 8;
        cfg.intermediate_mem_bytes = u64::MAX / 8;
        cfg.quantize_partials = true;
        cfg.calibrate_alpha = a.alpha.is_none();
        cfg.quant = QuantConfig::new(bits, a.alpha.unwrap_or(cfg.quant.alpha()))?;
        let opts = SimOptions {
            check_oracle: false,
            ..SimOptions::default()
        };
        let r = sim_functional(&net, &weights, &x, SchedulePolicy::Mwl, &cfg, &opts)?;
        let q = r
            .quant
            .as_ref()
            .expect("quantized run reports its parameters");
        let mut max_step = 0.0f32;
        for &a in &q.layer_alpha {
            max_step = max_step.max(QuantConfig::new(bits, a)?.step());
        }
        let agree = output_agreement(r.outputs.as_ref().expect("functional run"), &want, 0.0);
        points.push(SweepPoint {
            n_bits: bits,
            max_step,
            layer_alpha: q.layer_alpha.clone(),
            saturated: q.saturated,
            max_abs_diff: agree.max_abs_diff,
            cosine_similarity: agree.cosine_similarity,
        });
    }
    let report = SweepReport {
        network: net,
        weights: weight_source(&a.net),
        input: source,
        points,
    };
    let mut pending = Pending::default();
    pending.json(a.report.as_ref(), &report)?;
    pending.commit()?;
    out.emit(&report, || {
        let rows: Vec<Vec<String>> = report
            .points
            .iter()
            .map(|p| {
                vec![
                    p.n_bits.to_string(),
                    format!("{:?}", p.layer_alpha),
                    format!("{:.3e}", p.max_step),
                    p.saturated.to_string(),
                    format!("{:.3e}", p.max_abs_diff),
                    format!("{:.6}", p.cosine_similarity),
                ]
            })
            .collect();
        render(
            &[
                "bits",
                "alpha per layer",
                "max step",
                "saturated",
                "max |diff|",
                "cosine",
            ],
            &rows,
        )
    })
}
