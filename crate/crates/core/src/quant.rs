//! Symmetric linear quantization of the partial gate outputs that the
//! weight-locality schedule parks in intermediate memory.
//!
//! A partial `o` becomes the integer `round(β·o)` with `β = (2^(n-1) - 1) / α`,
//! saturated to `±(2^(n-1) - 1)`. Codes are turned back into floats through a
//! lookup table built once per configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f32 = 20.0;
pub const DEFAULT_BITS: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "QuantConfigRepr", into = "QuantConfigRepr")]
pub struct QuantConfig {
    n_bits: u32,
    alpha: f32,
    beta: f32,
}

#[derive(Serialize, Deserialize)]
struct QuantConfigRepr {
    n_bits: u32,
    alpha: f32,
}

impl TryFrom<QuantConfigRepr> for QuantConfig {
    type Error = Error;

    fn try_from(r: QuantConfigRepr) -> Result<Self> {
        QuantConfig::new(r.n_bits, r.alpha)
    }
}

impl From<QuantConfig> for QuantConfigRepr {
    fn from(c: QuantConfig) -> Self {
        QuantConfigRepr {
            n_bits: c.n_bits,
            alpha: c.alpha,
        }
    }
}

impl Default for QuantConfig {
    fn default() -> Self {
        QuantConfig::new(DEFAULT_BITS, DEFAULT_ALPHA)
            .expect("default quantization parameters are valid")
    }
}

impl QuantConfig {
    pub fn new(n_bits: u32, alpha: f32) -> Result<QuantConfig> {
        if !(2..=16).contains(&n_bits) {
            return Err(Error::Config(format!("n_bits {n_bits} outside 2..=16")));
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::Config(format!(
                "alpha must be positive and finite, got {alpha}"
            )));
        }
        let max_code = ((1u32 << (n_bits - 1)) - 1) as f32;
        Ok(QuantConfig {
            n_bits,
            alpha,
            beta: max_code / alpha,
        })
    }

    pub fn n_bits(&self) -> u32 {
        self.n_bits
    }

    pub fn alpha(&self) -> f32 {
        self.alpha
    }

    pub fn beta(&self) -> f32 {
        self.beta
    }

    /// Largest representable code magnitude, `2^(n-1) - 1`.
    pub fn max_code(&self) -> i32 {
        (1i32 << (self.n_bits - 1)) - 1
    }

    /// Bytes one stored code occupies.
    pub fn code_bytes(&self) -> u64 {
        self.n_bits.div_ceil(8) as u64
    }

    /// One quantization step, `1/β`.
    pub fn step(&self) -> f32 {
        1.0 / self.beta
    }
}

/// Quantize with round-half-away-from-zero and saturation.
pub fn quantize(o: f32, cfg: &QuantConfig) -> Result<i32> {
    if !o.is_finite() {
        return Err(Error::Numeric(format!("quantizer input {o}")));
    }
    let max = cfg.max_code();
    // f32::round rounds half away from zero
    let scaled = (cfg.beta * o).round();
    Ok(scaled.clamp(-max as f32, max as f32) as i32)
}

/// Code → value table covering `[-max_code, max_code]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DequantTable {
    max_code: i32,
    values: Vec<f32>,
}

impl DequantTable {
    pub fn new(cfg: &QuantConfig) -> DequantTable {
        let max_code = cfg.max_code();
        let values = (-max_code..=max_code)
            .map(|c| c as f32 / cfg.beta)
            .collect();
        DequantTable { max_code, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_code(&self) -> i32 {
        self.max_code
    }
}

pub fn dequantize(code: i32, table: &DequantTable) -> Result<f32> {
    if code.abs() > table.max_code {
        return Err(Error::CodeRange {
            code,
            max: table.max_code,
        });
    }
    Ok(table.values[(code + table.max_code) as usize])
}

/// Round a calibrated `max |o_k|` up to one decimal place. A zero maximum
/// falls back to the default clamp.
pub fn alpha_from_max(max_abs: f32) -> f32 {
    if !(max_abs.is_finite() && max_abs > 0.0) {
        return DEFAULT_ALPHA;
    }
    let mut alpha = (max_abs * 10.0).ceil() / 10.0;
    // the division can land a hair below the maximum
    while alpha < max_abs {
        alpha += 0.1;
    }
    alpha
}
