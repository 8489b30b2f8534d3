//! Browser bindings: each export takes plain numbers and returns a JSON
//! string for the page to draw.

use epur::arch::{mu_plan, simulate, simulate_timing, CheckLevel, HardwareConfig, SimOptions};
use epur::generate::{generate_weights, synthetic_input};
use epur::model::{Direction, Gate, LayerDescriptor, NetworkDescriptor, Precision};
use epur::quant::{dequantize, quantize, DequantTable, QuantConfig};
use epur::sched::{
    emit_pass, reuse_analysis, trace_conventional, trace_mwl, AccessCounts, SchedulePolicy, Target,
    TraceParams,
};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const MAX_WIDTH: usize = 1024;
const MAX_STEPS: usize = 1000;
const CURVE_POINTS: usize = 24;
const SWEEP_BITS: [u32; 8] = [4, 5, 6, 7, 8, 10, 12, 16];

fn check(name: &str, v: usize, max: usize) -> Result<(), String> {
    if v == 0 || v > max {
        return Err(format!("{name} must be between 1 and {max}, got {v}"));
    }
    Ok(())
}

// Page-sized inputs; the MU check only warns because small layers leave it
// as the bottleneck.
fn demo_cfg(base: HardwareConfig) -> HardwareConfig {
    HardwareConfig {
        mu_bottleneck: CheckLevel::Warn,
        ..base
    }
}

fn wb_reads(layer: &LayerDescriptor, steps: usize, policy: SchedulePolicy) -> (u64, u64) {
    let mut c = AccessCounts::default();
    emit_pass(layer, steps, false, policy, TraceParams::default(), &mut c);
    (
        c.target(Target::WeightBuffer).read_bytes,
        c.target(Target::RowBuffer).read_bytes,
    )
}

/// Weight-buffer reads of both schedules for sequence lengths up to
/// `max_steps`, plus LRU reuse distances of the input-gate CU.
pub fn reuse_curve(input: usize, hidden: usize, max_steps: usize) -> Result<Value, String> {
    check("input", input, MAX_WIDTH)?;
    check("hidden", hidden, MAX_WIDTH)?;
    check("steps", max_steps, MAX_STEPS)?;
    let layer = LayerDescriptor::new(input, hidden, Direction::ForwardOnly, true);
    let mut ts: Vec<usize> = (0..CURVE_POINTS)
        .map(|i| {
            let f = i as f64 / (CURVE_POINTS - 1) as f64;
            (max_steps as f64).powf(f).round() as usize
        })
        .collect();
    ts.dedup();
    let points: Vec<Value> = ts
        .iter()
        .map(|&t| {
            let (conv, _) = wb_reads(&layer, t, SchedulePolicy::Conventional);
            let (mwl, row) = wb_reads(&layer, t, SchedulePolicy::Mwl);
            json!({ "steps": t, "conventional": conv, "mwl": mwl, "mwl_row_buffer": row, "ratio": mwl as f64 / conv as f64 })
        })
        .collect();
    // distances stop changing after the second step
    let t = max_steps.min(3);
    let params = TraceParams::default();
    let conv = reuse_analysis(&trace_conventional(&layer, t, params).cu_stream(Gate::Input));
    let mwl = reuse_analysis(&trace_mwl(&layer, t, params).cu_stream(Gate::Input));
    let dist = |s: &epur::sched::ReuseStats, tg: Target| s.target(tg).max_reuse_distance;
    Ok(json!({
        "points": points,
        "reuse": {
            "conventional_weight_buffer": dist(&conv, Target::WeightBuffer),
            "mwl_weight_buffer": dist(&mwl, Target::WeightBuffer),
            "mwl_row_buffer": dist(&mwl, Target::RowBuffer),
        }
    }))
}

/// Transfer function of the partial-output quantizer, and the output error
/// of a small network simulated with quantized partials at several widths.
pub fn quant_curve(bits: u32, alpha: f32, hidden: usize, steps: usize) -> Result<Value, String> {
    check("hidden", hidden, 256)?;
    check("steps", steps, 64)?;
    let q = QuantConfig::new(bits, alpha).map_err(|e| e.to_string())?;
    let table = DequantTable::new(&q);
    let transfer = (0..=200)
        .map(|i| {
            let x = alpha * (-1.5 + 3.0 * i as f32 / 200.0);
            let y = quantize(x, &q)
                .and_then(|c| dequantize(c, &table))
                .map_err(|e| e.to_string())?;
            Ok(json!([x, y]))
        })
        .collect::<Result<Vec<_>, String>>()?;

    let net = NetworkDescriptor::stacked(
        hidden,
        [
            (hidden, Direction::ForwardOnly, true),
            (hidden, Direction::ForwardOnly, true),
        ],
    );
    let weights = generate_weights(&net, 1);
    let x = synthetic_input(hidden, steps, Precision::Fp32, 7);
    let sweep = SWEEP_BITS
        .iter()
        .map(|&b| {
            let mut cfg = demo_cfg(HardwareConfig::epur_mwl());
            cfg.quant = QuantConfig::new(b, cfg.quant.alpha()).map_err(|e| e.to_string())?;
            let r = simulate(
                &net,
                &weights,
                &x,
                SchedulePolicy::Mwl,
                &cfg,
                &SimOptions::default(),
            )
            .map_err(|e| e.to_string())?;
            let o = r.oracle.ok_or("no oracle check")?;
            Ok(json!({ "bits": b, "max_abs_diff": o.max_abs_diff, "cosine": o.cosine_similarity }))
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok(json!({ "step": q.step(), "max_code": q.max_code(), "transfer": transfer, "sweep": sweep }))
}

/// MU schedule of one neuron and whole-run timing of both schedules.
pub fn timing(
    input: usize,
    hidden: usize,
    layers: usize,
    steps: usize,
    peephole: bool,
) -> Result<Value, String> {
    check("input", input, MAX_WIDTH)?;
    check("hidden", hidden, MAX_WIDTH)?;
    check("layers", layers, 16)?;
    check("steps", steps, MAX_STEPS)?;
    let net = NetworkDescriptor::stacked(
        input,
        (0..layers).map(|_| (hidden, Direction::ForwardOnly, peephole)),
    );
    let cfg = demo_cfg(HardwareConfig::epur());
    let plan = mu_plan(peephole, &cfg);
    let run = |policy, cfg: &HardwareConfig| -> Result<Value, String> {
        let r = simulate_timing(&net, steps, policy, cfg, &SimOptions::default())
            .map_err(|e| e.to_string())?;
        Ok(json!({
            "cycles": r.cycles,
            "seconds": r.seconds,
            "mu_stall_cycles": r.passes.iter().map(|p| p.mu_stall_cycles).sum::<u64>(),
            "dram_stall_cycles": r.dram_stall_cycles,
            "energy_j": r.energy.total,
            "warnings": r.warnings,
        }))
    };
    Ok(json!({
        "plan": plan,
        "dpu_cycles_per_row": epur::arch::dpu_dot_cycles(input + hidden, &cfg),
        "conventional": run(SchedulePolicy::Conventional, &cfg)?,
        "mwl": run(SchedulePolicy::Mwl, &demo_cfg(HardwareConfig::epur_mwl()))?,
    }))
}

fn out(v: Result<Value, String>) -> Result<String, JsError> {
    v.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = reuseCurve)]
pub fn reuse_curve_js(input: usize, hidden: usize, max_steps: usize) -> Result<String, JsError> {
    out(reuse_curve(input, hidden, max_steps))
}

#[wasm_bindgen(js_name = quantCurve)]
pub fn quant_curve_js(
    bits: u32,
    alpha: f32,
    hidden: usize,
    steps: usize,
) -> Result<String, JsError> {
    out(quant_curve(bits, alpha, hidden, steps))
}

#[wasm_bindgen(js_name = timing)]
pub fn timing_js(
    input: usize,
    hidden: usize,
    layers: usize,
    steps: usize,
    peephole: bool,
) -> Result<String, JsError> {
    out(timing(input, hidden, layers, steps, peephole))
}
