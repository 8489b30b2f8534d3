//! Functional model of the CU datapath under either schedule.
//!
//! Each neuron's preactivation accumulates forward products, then
//! recurrent products, then the peephole term, then the bias, the same
//! order the reference model uses. In `Exact` mode products are summed one
//! at a time; in `ReductionTree` mode each N-wide sub-vector is reduced
//! pairwise before joining the accumulator, as the DPU hardware does.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{sigmoid, tanh, Gate, LayerDescriptor, Precision, Sequence, WeightSet};
use crate::quant::{dequantize, quantize, DequantTable, QuantConfig};
use crate::sched::SchedulePolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArithmeticMode {
    #[default]
    Exact,
    ReductionTree,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Datapath<'a> {
    pub mode: ArithmeticMode,
    pub width: usize,
    pub precision: Precision,
    /// Quantize MWL partials with this configuration.
    pub quant: Option<(&'a QuantConfig, &'a DequantTable)>,
}

#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct PassStats {
    pub max_abs_partial: f32,
    pub saturated: u64,
}

impl PassStats {
    pub fn merge(&mut self, o: PassStats) {
        self.max_abs_partial = self.max_abs_partial.max(o.max_abs_partial);
        self.saturated += o.saturated;
    }
}

impl Datapath<'_> {
    #[inline]
    fn dot(&self, mut acc: f32, w: &[f32], x: &[f32]) -> f32 {
        match self.mode {
            ArithmeticMode::Exact => {
                for (a, b) in w.iter().zip(x) {
                    acc += a * b;
                }
                acc
            }
            ArithmeticMode::ReductionTree => {
                let mut lanes = vec![0.0f32; self.width];
                for (wc, xc) in w.chunks(self.width).zip(x.chunks(self.width)) {
                    lanes.iter_mut().for_each(|l| *l = 0.0);
                    for (l, (a, b)) in lanes.iter_mut().zip(wc.iter().zip(xc)) {
                        *l = a * b;
                    }
                    let mut n = self.width;
                    while n > 1 {
                        n /= 2;
                        for i in 0..n {
                            lanes[i] = lanes[2 * i] + lanes[2 * i + 1];
                        }
                    }
                    acc += lanes[0];
                }
                acc
            }
        }
    }

    /// Run one direction over `frames` (already in processing order) and
    /// return `h_t` per processed step.
    pub fn run_pass(
        &self,
        layer: &LayerDescriptor,
        w: &WeightSet,
        frames: &[&[f32]],
        policy: SchedulePolicy,
    ) -> Result<(Vec<Vec<f32>>, PassStats)> {
        let nh = layer.hidden_size;
        let steps = frames.len();
        let mut stats = PassStats::default();

        // Forward partials for MWL, indexed [gate][step][neuron].
        let partials: Option<Vec<Vec<f32>>> = match policy {
            SchedulePolicy::Conventional => None,
            SchedulePolicy::Mwl => {
                let mut p = vec![vec![0.0f32; steps * nh]; 4];
                for j in 0..nh {
                    for g in Gate::ALL {
                        let row = w.gate(g).forward.row(j);
                        for (s, x) in frames.iter().enumerate() {
                            let v = self.dot(0.0, row, x);
                            stats.max_abs_partial = stats.max_abs_partial.max(v.abs());
                            p[g.index()][s * nh + j] = match self.quant {
                                Some((cfg, table)) => {
                                    let code = quantize(v, cfg)?;
                                    if code.abs() == cfg.max_code() && v.abs() > cfg.alpha() {
                                        stats.saturated += 1;
                                    }
                                    dequantize(code, table)?
                                }
                                None => v,
                            };
                        }
                    }
                }
                Some(p)
            }
        };

        let peep = |g: Gate| {
            if layer.peephole && g.has_peephole() {
                w.gate(g).peephole.as_deref()
            } else {
                None
            }
        };
        let mut c = vec![0.0f32; nh];
        let mut h = vec![0.0f32; nh];
        let mut out = Vec::with_capacity(steps);
        for (s, x) in frames.iter().enumerate() {
            let mut c_new = vec![0.0f32; nh];
            let mut h_new = vec![0.0f32; nh];
            for j in 0..nh {
                let pre = |g: Gate, cell: f32| -> f32 {
                    let gw = w.gate(g);
                    let mut acc = match &partials {
                        Some(p) => p[g.index()][s * nh + j],
                        None => self.dot(0.0, gw.forward.row(j), x),
                    };
                    acc = self.dot(acc, gw.recurrent.row(j), &h);
                    if let Some(p) = peep(g) {
                        acc += p[j] * cell;
                    }
                    acc + gw.bias[j]
                };
                let i = sigmoid(pre(Gate::Input, c[j]));
                let f = sigmoid(pre(Gate::Forget, c[j]));
                let g = tanh(pre(Gate::CellUpdater, c[j]));
                let cj = self.precision.store(f * c[j] + i * g);
                let o = sigmoid(pre(Gate::Output, cj));
                c_new[j] = cj;
                h_new[j] = self.precision.store(o * tanh(cj));
            }
            if !(c_new.iter().all(|v| v.is_finite()) && h_new.iter().all(|v| v.is_finite())) {
                return Err(Error::Numeric(format!("non-finite cell state at step {s}")));
            }
            c = c_new;
            h = h_new;
            out.push(h.clone());
        }
        Ok((out, stats))
    }

    /// Largest forward partial over a pass, for range calibration.
    pub fn forward_max(&self, layer: &LayerDescriptor, w: &WeightSet, frames: &[&[f32]]) -> f32 {
        let mut m = 0.0f32;
        for j in 0..layer.hidden_size {
            for g in Gate::ALL {
                let row = w.gate(g).forward.row(j);
                for x in frames {
                    m = m.max(self.dot(0.0, row, x).abs());
                }
            }
        }
        m
    }

    /// Run a whole layer, both directions if bidirectional.
    pub fn run_layer(
        &self,
        layer: &LayerDescriptor,
        weights: &[WeightSet],
        input: &Sequence,
        policy: SchedulePolicy,
    ) -> Result<(Sequence, PassStats)> {
        let frames: Vec<&[f32]> = input.frames().collect();
        let (fwd, mut stats) = self.run_pass(layer, &weights[0], &frames, policy)?;
        let nh = layer.hidden_size;
        let t = input.len();
        let out_dim = layer.output_size();
        let mut data = vec![0.0f32; t * out_dim];
        for (s, h) in fwd.iter().enumerate() {
            data[s * out_dim..s * out_dim + nh].copy_from_slice(h);
        }
        if layer.passes() == 2 {
            let rev: Vec<&[f32]> = frames.iter().rev().copied().collect();
            let (bwd, st) = self.run_pass(layer, &weights[1], &rev, policy)?;
            stats.merge(st);
            for (s, h) in bwd.iter().enumerate() {
                let frame = t - 1 - s;
                data[frame * out_dim + nh..(frame + 1) * out_dim].copy_from_slice(h);
            }
        }
        Ok((Sequence::new(out_dim, data)?, stats))
    }
}
