//! DPU and MU timing.
//!
//! The MU work for one neuron is a dependency graph spread over the four
//! CUs' MUs: the input and forget MUs apply peephole, bias and sigmoid and
//! send their results to the cell-updater MU, which forms `c_t`, applies
//! tanh and forwards `c_t` and `tanh(c_t)` to the output MU, which finishes
//! `h_t`. Each operation takes its configured latency; transfers between
//! MUs take `mu_comm_cycles`. Operations are list-scheduled as soon as
//! their inputs are ready and an issue slot of their unit class is free.

use serde::{Deserialize, Serialize};

use super::config::HardwareConfig;
use crate::model::Gate;

/// Cycles for one dot product of length `m` on an N-wide DPU.
pub fn dpu_dot_cycles(m: usize, cfg: &HardwareConfig) -> u64 {
    sub_vectors(m, cfg) + cfg.dpu_latency()
}

/// Number of N-wide issues for a length-`m` vector.
pub fn sub_vectors(m: usize, cfg: &HardwareConfig) -> u64 {
    (m.max(1) as u64).div_ceil(cfg.dpu_width as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Mov,
    Add,
    Mul,
    Exp,
    Div,
    /// Comparison or negation.
    Cmp,
    /// Transfer to another MU or to the input buffers.
    Send,
}

impl OpKind {
    pub fn latency(self, cfg: &HardwareConfig) -> u64 {
        let l = &cfg.op_latency;
        (match self {
            OpKind::Mov => l.mov,
            OpKind::Add => l.add,
            OpKind::Mul => l.mul,
            OpKind::Exp => l.exp,
            OpKind::Div => l.div,
            OpKind::Cmp => l.cmp,
            OpKind::Send => cfg.mu_comm_cycles,
        }) as u64
    }

    fn units(self, cfg: &HardwareConfig) -> u32 {
        let u = &cfg.mu_units;
        match self {
            OpKind::Add => u.add,
            OpKind::Mul => u.mul,
            OpKind::Exp => u.exp,
            OpKind::Div => u.div,
            OpKind::Cmp => u.cmp,
            OpKind::Mov | OpKind::Send => 1,
        }
    }

    /// Arithmetic work, as opposed to data movement.
    pub fn is_compute(self) -> bool {
        !matches!(self, OpKind::Mov | OpKind::Send)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlannedOp {
    pub mu: Gate,
    pub label: &'static str,
    pub kind: OpKind,
    pub start: u64,
    pub finish: u64,
}

/// Timed MU work for one neuron, relative to the cycle the DPU results
/// become available.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MuPlan {
    pub peephole: bool,
    pub ops: Vec<PlannedOp>,
    /// Cycle at which `h_t` is complete.
    pub critical_path: u64,
    /// Smallest spacing between consecutive neurons that the MUs sustain
    /// without resource conflicts.
    pub initiation_interval: u64,
}

impl MuPlan {
    pub fn gate_ops(&self, gate: Gate) -> impl Iterator<Item = &PlannedOp> {
        self.ops.iter().filter(move |o| o.mu == gate)
    }

    /// Finish cycle of the gate's last operation.
    pub fn gate_finish(&self, gate: Gate) -> u64 {
        self.gate_ops(gate).map(|o| o.finish).max().unwrap_or(0)
    }

    pub fn op(&self, mu: Gate, label: &str) -> Option<&PlannedOp> {
        self.ops.iter().find(|o| o.mu == mu && o.label == label)
    }

    /// Arithmetic operations per neuron, all MUs.
    pub fn compute_ops(&self) -> u64 {
        self.ops.iter().filter(|o| o.kind.is_compute()).count() as u64
    }
}

struct Node {
    mu: Gate,
    label: &'static str,
    kind: OpKind,
    deps: Vec<usize>,
}

struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    fn op(&mut self, mu: Gate, label: &'static str, kind: OpKind, deps: &[usize]) -> usize {
        self.nodes.push(Node {
            mu,
            label,
            kind,
            deps: deps.to_vec(),
        });
        self.nodes.len() - 1
    }

    fn sigmoid_gate(&mut self, g: Gate, peephole: bool) -> usize {
        use OpKind::*;
        let mut r0 = self.op(g, "R0 = dpu", Mov, &[]);
        if peephole {
            let r1 = self.op(g, "R1 = w_c * c_prev", Mul, &[]);
            r0 = self.op(g, "R0 += R1", Add, &[r0, r1]);
        }
        let b = self.op(g, "R0 += b", Add, &[r0]);
        sigmoid(self, g, b)
    }
}

fn sigmoid(gr: &mut Graph, g: Gate, x: usize) -> usize {
    use OpKind::*;
    let n = gr.op(g, "R0 = -R0", Cmp, &[x]);
    let e = gr.op(g, "R0 = exp(R0)", Exp, &[n]);
    let p = gr.op(g, "R0 += 1", Add, &[e]);
    gr.op(g, "R0 = 1 / R0", Div, &[p])
}

// tanh(x) = (e^x - e^-x) / (e^x + e^-x)
fn tanh(gr: &mut Graph, g: Gate, x: usize, labels: [&'static str; 6]) -> usize {
    use OpKind::*;
    let [neg, ep, en, num, den, div] = labels;
    let n = gr.op(g, neg, Cmp, &[x]);
    let a = gr.op(g, ep, Exp, &[x]);
    let b = gr.op(g, en, Exp, &[n]);
    let s = gr.op(g, num, Add, &[a, b]);
    let d = gr.op(g, den, Add, &[a, b]);
    gr.op(g, div, Div, &[s, d])
}

fn build(peephole: bool) -> Graph {
    use OpKind::*;
    let mut gr = Graph { nodes: Vec::new() };
    let (ig, fg, cu, og) = (Gate::Input, Gate::Forget, Gate::CellUpdater, Gate::Output);

    let i = gr.sigmoid_gate(ig, peephole);
    let send_i = gr.op(ig, "send i", Send, &[i]);
    let f = gr.sigmoid_gate(fg, peephole);
    let send_f = gr.op(fg, "send f", Send, &[f]);

    let pre = gr.op(cu, "R0 = dpu + b", Add, &[]);
    let g = tanh(
        &mut gr,
        cu,
        pre,
        [
            "R1 = -R0",
            "R0 = exp(R0)",
            "R1 = exp(R1)",
            "R1 = R0 - R1",
            "R0 = R0 + R1",
            "g = R1 / R0",
        ],
    );
    let ig_ = gr.op(cu, "R0 = R0 * i", Mul, &[g, send_i, send_f]);
    let fc = gr.op(cu, "R1 = f * c_prev", Mul, &[send_i, send_f]);
    let c = gr.op(cu, "c = R0 + R1", Add, &[ig_, fc]);
    let send_c = peephole.then(|| gr.op(cu, "send c", Send, &[c]));
    let phi = tanh(
        &mut gr,
        cu,
        c,
        [
            "R1 = -c",
            "R0 = exp(c)",
            "R1 = exp(-c)",
            "R1 = e^c - e^-c",
            "R0 = e^c + e^-c",
            "phi(c) = R1 / R0",
        ],
    );
    let send_phi = gr.op(cu, "send phi(c)", Send, &[phi]);

    // The bias joins the DPU result first, as in the MU program; the
    // functional model adds it last, which does not change the timing.
    let mut o = gr.op(og, "R0 = dpu + b", Add, &[]);
    if let Some(sc) = send_c {
        let r1 = gr.op(og, "R1 = w_oc * c", Mul, &[sc]);
        o = gr.op(og, "R0 += R1", Add, &[o, r1]);
    }
    let o = sigmoid(&mut gr, og, o);
    let mv = gr.op(og, "R1 = phi(c)", Mov, &[send_phi]);
    gr.op(og, "h = R0 * R1", Mul, &[o, mv]);
    gr
}

/// Schedule one neuron's MU work. The plan covers all four MUs because the
/// gates depend on each other; use [`MuPlan::gate_ops`] for one gate.
pub fn mu_plan(peephole: bool, cfg: &HardwareConfig) -> MuPlan {
    let gr = build(peephole);
    // (mu, kind, cycle) -> issued ops
    let mut busy: std::collections::HashMap<(Gate, OpKind, u64), u32> = Default::default();
    let mut finish = vec![0u64; gr.nodes.len()];
    let mut ops = Vec::with_capacity(gr.nodes.len());
    // nodes are created in dependency order
    for (k, n) in gr.nodes.iter().enumerate() {
        let mut t = n.deps.iter().map(|&d| finish[d]).max().unwrap_or(0);
        let units = n.kind.units(cfg);
        while busy.get(&(n.mu, n.kind, t)).copied().unwrap_or(0) >= units {
            t += 1;
        }
        *busy.entry((n.mu, n.kind, t)).or_default() += 1;
        finish[k] = t + n.kind.latency(cfg);
        ops.push(PlannedOp {
            mu: n.mu,
            label: n.label,
            kind: n.kind,
            start: t,
            finish: finish[k],
        });
    }
    let critical_path = finish.iter().copied().max().unwrap_or(0);
    let initiation_interval = initiation_interval(&ops, cfg);
    MuPlan {
        peephole,
        ops,
        critical_path,
        initiation_interval,
    }
}

/// Timed plan restricted to one gate's MU.
pub fn mu_schedule(gate: Gate, peephole: bool, cfg: &HardwareConfig) -> Vec<PlannedOp> {
    mu_plan(peephole, cfg).gate_ops(gate).cloned().collect()
}

// Smallest II at which overlapping copies of the plan, started II cycles
// apart, never oversubscribe a unit class.
fn initiation_interval(ops: &[PlannedOp], cfg: &HardwareConfig) -> u64 {
    let mut ii = 1u64;
    loop {
        let mut slots: std::collections::HashMap<(Gate, OpKind, u64), u32> = Default::default();
        let ok = ops.iter().all(|o| {
            let n = slots.entry((o.mu, o.kind, o.start % ii)).or_default();
            *n += 1;
            *n <= o.kind.units(cfg)
        });
        if ok {
            return ii;
        }
        ii += 1;
    }
}
