//! Network presets and deterministic synthetic weights and inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    Direction, Gate, GateWeights, LayerDescriptor, Matrix, NetworkDescriptor, NetworkWeights,
    Precision, Sequence, WeightSet,
};

/// A published network shape. The original works do not all state their
/// input width or value format, so both are assumptions recorded here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Preset {
    pub name: &'static str,
    pub domain: &'static str,
    pub layers: usize,
    pub neurons: usize,
    pub direction: Direction,
    pub peephole: bool,
    /// Published model size in MiB.
    pub published_mib: f64,
    pub input_dim: usize,
    pub precision: Precision,
    pub assumption: &'static str,
}

pub const PRESETS: [Preset; 5] = [
    Preset {
        name: "BYSDNE",
        domain: "video classification",
        layers: 5,
        neurons: 512,
        direction: Direction::ForwardOnly,
        peephole: true,
        published_mib: 40.0,
        input_dim: 512,
        precision: Precision::Fp32,
        assumption: "input width = hidden size, fp32",
    },
    Preset {
        name: "RLDRADSPR",
        domain: "speech recognition",
        layers: 10,
        neurons: 1024,
        direction: Direction::ForwardOnly,
        peephole: true,
        published_mib: 118.0,
        input_dim: 1024,
        precision: Precision::Fp16,
        assumption: "input width = hidden size, fp16; residual/projection structure not modeled, so the footprint exceeds the published size",
    },
    Preset {
        name: "EESEN",
        domain: "speech recognition",
        layers: 5,
        neurons: 320,
        direction: Direction::Bidirectional,
        peephole: true,
        published_mib: 42.0,
        input_dim: 120,
        precision: Precision::Fp32,
        assumption: "120 acoustic features per frame (40 filterbanks + deltas), fp32",
    },
    Preset {
        name: "LDLRNN",
        domain: "time series",
        layers: 2,
        neurons: 128,
        direction: Direction::ForwardOnly,
        peephole: false,
        published_mib: 1.0,
        input_dim: 128,
        precision: Precision::Fp32,
        assumption: "input width = hidden size, fp32",
    },
    Preset {
        name: "GMAT",
        domain: "machine translation",
        layers: 17,
        neurons: 1024,
        direction: Direction::ForwardOnly,
        peephole: false,
        published_mib: 272.0,
        input_dim: 1024,
        precision: Precision::Fp16,
        assumption: "stacked-LSTM shape only, input width = hidden size, fp16",
    },
];

pub fn preset(name: &str) -> Result<&'static Preset> {
    PRESETS
        .iter()
        .find(|p| p.name.eq_ignore_ascii_case(name))
        .ok_or_else(|| {
            let known: Vec<&str> = PRESETS.iter().map(|p| p.name).collect();
            Error::Config(format!(
                "unknown network preset {name:?} (known: {})",
                known.join(", ")
            ))
        })
}

impl Preset {
    pub fn descriptor(&self) -> NetworkDescriptor {
        let mut net = NetworkDescriptor::stacked(
            self.input_dim,
            (0..self.layers).map(|_| (self.neurons, self.direction, self.peephole)),
        );
        net.name = Some(self.name.to_string());
        net.numeric_precision = self.precision;
        net
    }

    /// Relative deviation of the generated footprint from the published one.
    pub fn footprint_deviation(&self) -> f64 {
        let mib = self.descriptor().weight_bytes() as f64 / (1u64 << 20) as f64;
        mib / self.published_mib - 1.0
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Scale of the matrix entries: uniform in `±1/sqrt(N_x + N_h)`, so a gate
/// preactivation over inputs in [-1, 1] has standard deviation below about
/// 0.6 and stays well inside the sigmoid/tanh active range.
pub fn weight_scale(layer: &LayerDescriptor) -> f32 {
    1.0 / ((layer.input_size + layer.hidden_size) as f32).sqrt()
}

/// Bias and peephole entries are uniform in `±PARAM_SCALE`.
pub const PARAM_SCALE: f32 = 0.1;

pub fn random_weight_set<R: Rng>(
    layer: &LayerDescriptor,
    precision: Precision,
    rng: &mut R,
) -> WeightSet {
    let s = weight_scale(layer);
    let (nx, nh) = (layer.input_size, layer.hidden_size);
    let mut draw = |scale: f32| precision.store(rng.random_range(-scale..=scale));
    WeightSet {
        gates: Gate::ALL.map(|g| {
            let forward = Matrix::from_fn(nh, nx, |_, _| draw(s));
            let recurrent = Matrix::from_fn(nh, nh, |_, _| draw(s));
            let bias = (0..nh).map(|_| draw(PARAM_SCALE)).collect();
            let peephole = (layer.peephole && g.has_peephole())
                .then(|| (0..nh).map(|_| draw(PARAM_SCALE)).collect());
            GateWeights {
                forward,
                recurrent,
                bias,
                peephole,
            }
        }),
    }
}

/// Deterministic weights for every layer and direction of `net`.
pub fn generate_weights(net: &NetworkDescriptor, seed: u64) -> NetworkWeights {
    let mut r = rng(seed);
    NetworkWeights {
        layers: net
            .layers
            .iter()
            .map(|l| {
                (0..l.passes())
                    .map(|_| random_weight_set(l, net.numeric_precision, &mut r))
                    .collect()
            })
            .collect(),
    }
}

/// `len` frames of uniform values in [-1, 1].
pub fn synthetic_input(dim: usize, len: usize, precision: Precision, seed: u64) -> Sequence {
    let mut r = rng(seed);
    let data = (0..dim * len)
        .map(|_| precision.store(r.random_range(-1.0f32..=1.0)))
        .collect();
    Sequence::new(dim, data).expect("dimension is consistent by construction")
}

/// Bounds for [`random_network`].
#[derive(Debug, Clone, Copy)]
pub struct RandomShape {
    pub layers: (usize, usize),
    pub hidden: (usize, usize),
    pub input: (usize, usize),
}

impl Default for RandomShape {
    fn default() -> Self {
        RandomShape {
            layers: (1, 4),
            hidden: (8, 64),
            input: (1, 64),
        }
    }
}

/// A random stacked network; each layer draws its own width, direction and
/// peephole flag.
pub fn random_network<R: Rng>(shape: RandomShape, rng: &mut R) -> NetworkDescriptor {
    let n = rng.random_range(shape.layers.0..=shape.layers.1);
    let input = rng.random_range(shape.input.0..=shape.input.1);
    let layers: Vec<_> = (0..n)
        .map(|_| {
            let h = rng.random_range(shape.hidden.0..=shape.hidden.1);
            let dir = if rng.random_bool(0.5) {
                Direction::Bidirectional
            } else {
                Direction::ForwardOnly
            };
            (h, dir, rng.random_bool(0.5))
        })
        .collect();
    NetworkDescriptor::stacked(input, layers)
}
