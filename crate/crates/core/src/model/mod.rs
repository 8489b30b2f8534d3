//! LSTM network shapes, weights and the reference inference engine.
//!
//! Everything here is independent of the hardware model: [`network_infer`]
//! is the oracle that the simulated datapath is checked against.

mod activation;
mod infer;

pub use activation::{sigmoid, tanh};
pub use infer::{
    cell_step, cell_step_traced, gate_preactivation, layer_infer, network_infer, GateActivations,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The four LSTM gates, in the canonical storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gate {
    Input,
    Forget,
    CellUpdater,
    Output,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::CellUpdater, Gate::Output];

    pub fn index(self) -> usize {
        self as usize
    }

    /// The cell updater has no peephole term.
    pub fn has_peephole(self) -> bool {
        !matches!(self, Gate::CellUpdater)
    }

    pub fn name(self) -> &'static str {
        match self {
            Gate::Input => "input",
            Gate::Forget => "forget",
            Gate::CellUpdater => "cell_updater",
            Gate::Output => "output",
        }
    }

    pub fn from_name(name: &str) -> Option<Gate> {
        Gate::ALL.into_iter().find(|g| g.name() == name)
    }
}

impl std::fmt::Display for Gate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    ForwardOnly,
    Bidirectional,
}

impl Direction {
    pub fn passes(self) -> usize {
        match self {
            Direction::ForwardOnly => 1,
            Direction::Bidirectional => 2,
        }
    }
}

/// Storage format for weights and activations. Dot products always
/// accumulate in single precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    Fp32,
    Fp16,
}

impl Precision {
    pub fn bytes(self) -> u64 {
        match self {
            Precision::Fp32 => 4,
            Precision::Fp16 => 2,
        }
    }

    /// Round a value to what this format can hold.
    #[inline]
    pub fn store(self, x: f32) -> f32 {
        match self {
            Precision::Fp32 => x,
            Precision::Fp16 => half::f16::from_f32(x).to_f32(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Precision::Fp32 => "fp32",
            Precision::Fp16 => "fp16",
        }
    }

    pub fn tag(self) -> u16 {
        match self {
            Precision::Fp32 => 0,
            Precision::Fp16 => 1,
        }
    }

    pub fn from_tag(tag: u16) -> Option<Precision> {
        match tag {
            0 => Some(Precision::Fp32),
            1 => Some(Precision::Fp16),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerDescriptor {
    pub input_size: usize,
    pub hidden_size: usize,
    pub direction: Direction,
    pub peephole: bool,
}

impl LayerDescriptor {
    pub fn new(
        input_size: usize,
        hidden_size: usize,
        direction: Direction,
        peephole: bool,
    ) -> Self {
        LayerDescriptor {
            input_size,
            hidden_size,
            direction,
            peephole,
        }
    }

    pub fn output_size(&self) -> usize {
        self.hidden_size * self.direction.passes()
    }

    pub fn passes(&self) -> usize {
        self.direction.passes()
    }

    /// Elements of `W_gx` for one gate.
    pub fn forward_elems(&self) -> u64 {
        (self.hidden_size * self.input_size) as u64
    }

    /// Elements of `W_gh` for one gate.
    pub fn recurrent_elems(&self) -> u64 {
        (self.hidden_size * self.hidden_size) as u64
    }

    /// Bias plus peephole elements for one gate.
    pub fn param_elems(&self, gate: Gate) -> u64 {
        let peep = if self.peephole && gate.has_peephole() {
            self.hidden_size
        } else {
            0
        };
        (self.hidden_size + peep) as u64
    }

    /// `W_gx` plus `W_gh` for one gate.
    pub fn matrix_elems(&self) -> u64 {
        self.forward_elems() + self.recurrent_elems()
    }

    pub fn gate_elems(&self, gate: Gate) -> u64 {
        self.forward_elems() + self.recurrent_elems() + self.param_elems(gate)
    }

    /// Elements of one direction's weight set.
    pub fn cell_elems(&self) -> u64 {
        Gate::ALL.iter().map(|&g| self.gate_elems(g)).sum()
    }

    /// Elements for all directions of this layer.
    pub fn layer_elems(&self) -> u64 {
        self.cell_elems() * self.passes() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDescriptor {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub input_dim: usize,
    #[serde(default)]
    pub numeric_precision: Precision,
    pub layers: Vec<LayerDescriptor>,
    /// Width of the softmax output layer. Only its weight traffic is
    /// modeled; its arithmetic is outside the simulated datapath.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub softmax_outputs: Option<usize>,
}

impl NetworkDescriptor {
    /// Stack `layers` on an input of width `input_dim`, chaining each
    /// layer's input size to the previous output.
    pub fn stacked(
        input_dim: usize,
        layers: impl IntoIterator<Item = (usize, Direction, bool)>,
    ) -> NetworkDescriptor {
        let mut prev = input_dim;
        let layers = layers
            .into_iter()
            .map(|(hidden, dir, peephole)| {
                let l = LayerDescriptor::new(prev, hidden, dir, peephole);
                prev = l.output_size();
                l
            })
            .collect();
        NetworkDescriptor {
            name: None,
            input_dim,
            numeric_precision: Precision::Fp32,
            layers,
            softmax_outputs: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Shape("network has no layers".into()));
        }
        if self.input_dim == 0 {
            return Err(Error::Shape("input_dim must be positive".into()));
        }
        let mut prev = self.input_dim;
        for (i, l) in self.layers.iter().enumerate() {
            if l.hidden_size == 0 || l.input_size == 0 {
                return Err(Error::Shape(format!("layer {i} has a zero dimension")));
            }
            if l.input_size != prev {
                return Err(Error::Shape(format!(
                    "layer {i} input_size {} does not match previous output {prev}",
                    l.input_size
                )));
            }
            prev = l.output_size();
        }
        if self.softmax_outputs == Some(0) {
            return Err(Error::Shape("softmax_outputs must be positive".into()));
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        self.layers
            .last()
            .map_or(self.input_dim, |l| l.output_size())
    }

    pub fn weight_elems(&self) -> u64 {
        self.layers.iter().map(|l| l.layer_elems()).sum()
    }

    pub fn weight_bytes(&self) -> u64 {
        self.weight_elems() * self.numeric_precision.bytes()
    }

    /// Largest single-direction weight set, the unit that must be on chip
    /// at once.
    pub fn max_cell_bytes(&self) -> u64 {
        self.layers
            .iter()
            .map(|l| l.cell_elems())
            .max()
            .unwrap_or(0)
            * self.numeric_precision.bytes()
    }

    /// Whole-model weight bytes over the largest set that must be resident
    /// at once. Directions of a bidirectional layer run one after the
    /// other, so the resident unit is one direction.
    pub fn single_layer_ratio(&self) -> f64 {
        let max = self.max_cell_bytes();
        if max == 0 {
            return 0.0;
        }
        self.weight_bytes() as f64 / max as f64
    }

    pub fn softmax_weight_bytes(&self) -> u64 {
        self.softmax_outputs.map_or(0, |n| {
            ((self.output_dim() + 1) * n) as u64 * self.numeric_precision.bytes()
        })
    }
}

/// Dense row-major matrix; row `j` holds neuron `j`'s weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Result<Matrix> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "matrix {rows}x{cols} given {} values",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f32) -> Matrix {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }
}

/// Weights of one gate for one direction.
#[derive(Debug, Clone, PartialEq)]
pub struct GateWeights {
    /// `W_gx`, hidden × input.
    pub forward: Matrix,
    /// `W_gh`, hidden × hidden.
    pub recurrent: Matrix,
    pub bias: Vec<f32>,
    /// Element-wise cell-state weights; `None` for the cell updater or when
    /// the layer has no peepholes.
    pub peephole: Option<Vec<f32>>,
}

impl GateWeights {
    pub fn zeros(input: usize, hidden: usize, peephole: bool) -> GateWeights {
        GateWeights {
            forward: Matrix::zeros(hidden, input),
            recurrent: Matrix::zeros(hidden, hidden),
            bias: vec![0.0; hidden],
            peephole: peephole.then(|| vec![0.0; hidden]),
        }
    }

    fn values(&self, with_peephole: bool) -> impl Iterator<Item = &f32> {
        self.forward
            .as_slice()
            .iter()
            .chain(self.recurrent.as_slice())
            .chain(&self.bias)
            .chain(
                self.peephole
                    .iter()
                    .filter(move |_| with_peephole)
                    .flatten(),
            )
    }
}

/// All four gates of one LSTM cell (one direction of one layer).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    pub gates: [GateWeights; 4],
}

impl WeightSet {
    pub fn zeros(layer: &LayerDescriptor) -> WeightSet {
        WeightSet {
            gates: Gate::ALL.map(|g| {
                GateWeights::zeros(
                    layer.input_size,
                    layer.hidden_size,
                    layer.peephole && g.has_peephole(),
                )
            }),
        }
    }

    pub fn gate(&self, g: Gate) -> &GateWeights {
        &self.gates[g.index()]
    }

    pub fn gate_mut(&mut self, g: Gate) -> &mut GateWeights {
        &mut self.gates[g.index()]
    }

    pub fn input_size(&self) -> usize {
        self.gates[0].forward.cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.gates[0].forward.rows()
    }

    pub fn has_peephole(&self) -> bool {
        self.gates[0].peephole.is_some()
    }

    /// Check dimensions against `layer` and that every value is finite.
    pub fn validate(&self, layer: &LayerDescriptor) -> Result<()> {
        let (nx, nh) = (layer.input_size, layer.hidden_size);
        for g in Gate::ALL {
            let w = self.gate(g);
            if w.forward.rows() != nh || w.forward.cols() != nx {
                return Err(Error::Shape(format!(
                    "{g} forward matrix is {}x{}, expected {nh}x{nx}",
                    w.forward.rows(),
                    w.forward.cols()
                )));
            }
            if w.recurrent.rows() != nh || w.recurrent.cols() != nh {
                return Err(Error::Shape(format!(
                    "{g} recurrent matrix is {}x{}, expected {nh}x{nh}",
                    w.recurrent.rows(),
                    w.recurrent.cols()
                )));
            }
            if w.bias.len() != nh {
                return Err(Error::Shape(format!(
                    "{g} bias has {} entries",
                    w.bias.len()
                )));
            }
            // Vectors stored on a layer without peepholes are ignored, never read.
            let want_peep = layer.peephole && g.has_peephole();
            match &w.peephole {
                Some(p) if want_peep && p.len() != nh => {
                    return Err(Error::Shape(format!(
                        "{g} peephole has {} entries",
                        p.len()
                    )))
                }
                None if want_peep => {
                    return Err(Error::Shape(format!("{g} is missing its peephole vector")))
                }
                _ => {}
            }
            if w.values(want_peep).any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("{g} weights")));
            }
        }
        Ok(())
    }
}

/// Weights for a whole network: `layers[l][d]` is direction `d` of layer `l`
/// (0 = forward, 1 = backward).
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    pub layers: Vec<Vec<WeightSet>>,
}

impl NetworkWeights {
    pub fn zeros(net: &NetworkDescriptor) -> NetworkWeights {
        NetworkWeights {
            layers: net
                .layers
                .iter()
                .map(|l| (0..l.passes()).map(|_| WeightSet::zeros(l)).collect())
                .collect(),
        }
    }

    pub fn validate(&self, net: &NetworkDescriptor) -> Result<()> {
        if self.layers.len() != net.layers.len() {
            return Err(Error::Shape(format!(
                "{} weight layers for {} network layers",
                self.layers.len(),
                net.layers.len()
            )));
        }
        for (i, (ws, l)) in self.layers.iter().zip(&net.layers).enumerate() {
            if ws.len() != l.passes() {
                return Err(
                    Error::Shape(format!("layer {i} has {} weight sets", ws.len())).in_layer(i),
                );
            }
            for w in ws {
                w.validate(l).map_err(|e| e.in_layer(i))?;
            }
        }
        Ok(())
    }
}

/// Cell state `c_t` and output `h_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub c: Vec<f32>,
    pub h: Vec<f32>,
}

impl CellState {
    pub fn zeros(hidden: usize) -> CellState {
        CellState {
            c: vec![0.0; hidden],
            h: vec![0.0; hidden],
        }
    }
}

/// A sequence of equally sized frames, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    dim: usize,
    data: Vec<f32>,
}

impl Sequence {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Sequence> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::Shape(format!(
                "{} values do not form frames of width {dim}",
                data.len()
            )));
        }
        Ok(Sequence { dim, data })
    }

    pub fn from_frames(frames: &[Vec<f32>]) -> Result<Sequence> {
        let dim = frames.first().map_or(0, |f| f.len());
        if frames.iter().any(|f| f.len() != dim) {
            return Err(Error::Shape("frames have differing widths".into()));
        }
        Sequence::new(dim, frames.concat())
    }

    pub fn zeros(len: usize, dim: usize) -> Sequence {
        Sequence {
            dim,
            data: vec![0.0; len * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn frame(&self, t: usize) -> &[f32] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    #[inline]
    pub fn frame_mut(&mut self, t: usize) -> &mut [f32] {
        &mut self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn frames(&self) -> impl ExactSizeIterator<Item = &[f32]> + DoubleEndedIterator {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn reversed(&self) -> Sequence {
        Sequence {
            dim: self.dim,
            data: self.frames().rev().flatten().copied().collect(),
        }
    }

    pub fn map_values(&self, f: impl Fn(f32) -> f32) -> Sequence {
        Sequence {
            dim: self.dim,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Numeric(what.into()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stacked_chains_bidirectional_widths() {
        let net = NetworkDescriptor::stacked(
            40,
            [
                (16, Direction::Bidirectional, true),
                (8, Direction::ForwardOnly, false),
            ],
        );
        net.validate().unwrap();
        assert_eq!(net.layers[1].input_size, 32);
        assert_eq!(net.output_dim(), 8);
    }

    #[test]
    fn validate_rejects_broken_chain() {
        let mut net = NetworkDescriptor::stacked(4, [(4, Direction::ForwardOnly, false); 2]);
        net.layers[1].input_size = 5;
        assert!(matches!(net.validate(), Err(Error::Shape(_))));
        net.layers.clear();
        assert!(net.validate().is_err());
    }

    #[test]
    fn gate_elems_count_peepholes_only_where_defined() {
        let l = LayerDescriptor::new(3, 2, Direction::ForwardOnly, true);
        assert_eq!(l.gate_elems(Gate::Input), 6 + 4 + 2 + 2);
        assert_eq!(l.gate_elems(Gate::CellUpdater), 6 + 4 + 2);
        assert_eq!(l.cell_elems(), 3 * 14 + 12);
    }

    #[test]
    fn weight_set_validation() {
        let l = LayerDescriptor::new(3, 2, Direction::ForwardOnly, true);
        let mut w = WeightSet::zeros(&l);
        w.validate(&l).unwrap();
        assert!(w.gate(Gate::CellUpdater).peephole.is_none());
        w.gate_mut(Gate::Forget).bias[1] = f32::NAN;
        assert!(matches!(w.validate(&l), Err(Error::Numeric(_))));
        // stored peepholes on a layer without them are tolerated
        let no_peep = LayerDescriptor {
            peephole: false,
            ..l
        };
        WeightSet::zeros(&l).validate(&no_peep).unwrap();
        assert!(matches!(
            WeightSet::zeros(&no_peep).validate(&l),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn fp16_store_rounds() {
        assert_eq!(Precision::Fp16.store(1.0 + 1e-5), 1.0);
        assert_eq!(Precision::Fp32.store(1.0 + 1e-5), 1.0 + 1e-5);
    }

    #[test]
    fn sequence_reverse() {
        let s = Sequence::from_frames(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(s.reversed().as_slice(), &[3.0, 4.0, 1.0, 2.0]);
        assert!(Sequence::from_frames(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
