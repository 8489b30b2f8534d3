use super::activation::{sigmoid, tanh};
use super::{
    CellState, Gate, LayerDescriptor, NetworkDescriptor, NetworkWeights, Precision, Sequence,
    WeightSet,
};
use crate::error::{Error, Result};

/// Post-activation gate values for one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct GateActivations {
    pub input: Vec<f32>,
    pub forget: Vec<f32>,
    pub cell: Vec<f32>,
    pub output: Vec<f32>,
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Shape(format!(
            "{what} has {got} elements, expected {want}"
        )));
    }
    Ok(())
}

fn check_finite(what: &str, v: &[f32]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(what.into()))
    }
}

/// `W_gx·x + W_gh·h + p⊙c + b` for every neuron of `gate`.
///
/// Per neuron the sum is accumulated left to right in single precision:
/// forward products in index order, then recurrent products, then the
/// peephole term, then the bias. The simulator reproduces this order.
pub fn gate_preactivation(
    weights: &WeightSet,
    gate: Gate,
    x: &[f32],
    h_prev: &[f32],
    c: &[f32],
) -> Result<Vec<f32>> {
    preactivation(weights, gate, x, h_prev, c, weights.has_peephole())
}

fn preactivation(
    weights: &WeightSet,
    gate: Gate,
    x: &[f32],
    h_prev: &[f32],
    c: &[f32],
    use_peephole: bool,
) -> Result<Vec<f32>> {
    let nh = weights.hidden_size();
    check_len("x_t", x.len(), weights.input_size())?;
    check_len("h_prev", h_prev.len(), nh)?;
    check_len("c", c.len(), nh)?;
    check_finite("x_t", x)?;
    check_finite("h_prev", h_prev)?;
    check_finite("c", c)?;

    let w = weights.gate(gate);
    let peephole = if use_peephole && gate.has_peephole() {
        Some(
            w.peephole
                .as_deref()
                .ok_or_else(|| Error::Shape(format!("{gate} peephole vector missing")))?,
        )
    } else {
        None
    };
    let out: Vec<f32> = (0..nh)
        .map(|j| {
            let mut acc = 0.0f32;
            for (wk, xk) in w.forward.row(j).iter().zip(x) {
                acc += wk * xk;
            }
            for (wk, hk) in w.recurrent.row(j).iter().zip(h_prev) {
                acc += wk * hk;
            }
            if let Some(p) = peephole {
                acc += p[j] * c[j];
            }
            acc + w.bias[j]
        })
        .collect();
    check_finite(gate.name(), &out)?;
    Ok(out)
}

/// One LSTM timestep in single precision. Peepholes are applied when the
/// weight set carries them.
pub fn cell_step(weights: &WeightSet, x: &[f32], prev: &CellState) -> Result<CellState> {
    cell_step_traced(weights, x, prev, weights.has_peephole(), Precision::Fp32).map(|(s, _)| s)
}

/// One timestep, also returning the gate activations. `precision` rounds
/// the stored `c_t` and `h_t`.
pub fn cell_step_traced(
    weights: &WeightSet,
    x: &[f32],
    prev: &CellState,
    peephole: bool,
    precision: Precision,
) -> Result<(CellState, GateActivations)> {
    let pre = |g: Gate, c: &[f32]| preactivation(weights, g, x, &prev.h, c, peephole);

    let input: Vec<f32> = pre(Gate::Input, &prev.c)?
        .into_iter()
        .map(sigmoid)
        .collect();
    let forget: Vec<f32> = pre(Gate::Forget, &prev.c)?
        .into_iter()
        .map(sigmoid)
        .collect();
    let cell: Vec<f32> = pre(Gate::CellUpdater, &prev.c)?
        .into_iter()
        .map(tanh)
        .collect();

    let c: Vec<f32> = (0..prev.c.len())
        .map(|j| precision.store(forget[j] * prev.c[j] + input[j] * cell[j]))
        .collect();
    check_finite("c_t", &c)?;

    let output: Vec<f32> = pre(Gate::Output, &c)?.into_iter().map(sigmoid).collect();
    let h: Vec<f32> = output
        .iter()
        .zip(&c)
        .map(|(&o, &cj)| precision.store(o * tanh(cj)))
        .collect();

    Ok((
        CellState { c, h },
        GateActivations {
            input,
            forget,
            cell,
            output,
        },
    ))
}

fn run_cell<'a>(
    layer: &LayerDescriptor,
    weights: &WeightSet,
    frames: impl Iterator<Item = &'a [f32]>,
    precision: Precision,
) -> Result<Vec<Vec<f32>>> {
    let mut state = CellState::zeros(layer.hidden_size);
    frames
        .map(|x| {
            let (next, _) = cell_step_traced(weights, x, &state, layer.peephole, precision)?;
            state = next;
            Ok(state.h.clone())
        })
        .collect()
}

/// Run one layer over a whole sequence. Bidirectional layers emit
/// `[h_fwd(t), h_bwd(t)]` per frame, where the backward cell consumed the
/// frames in reverse order. Both directions start from zero state.
pub fn layer_infer(
    layer: &LayerDescriptor,
    weights: &[WeightSet],
    input: &Sequence,
    precision: Precision,
) -> Result<Sequence> {
    check_len("input frame", input.dim(), layer.input_size)?;
    if weights.len() != layer.passes() {
        return Err(Error::Shape(format!(
            "{} weight sets for a layer with {} passes",
            weights.len(),
            layer.passes()
        )));
    }
    for w in weights {
        w.validate(layer)?;
    }
    let fwd = run_cell(layer, &weights[0], input.frames(), precision)?;
    let out: Vec<Vec<f32>> = if layer.passes() == 1 {
        fwd
    } else {
        let mut bwd = run_cell(layer, &weights[1], input.frames().rev(), precision)?;
        bwd.reverse();
        fwd.into_iter()
            .zip(bwd)
            .map(|(mut f, b)| {
                f.extend(b);
                f
            })
            .collect()
    };
    Sequence::new(layer.output_size(), out.concat())
}

/// Reference inference through every hidden layer.
pub fn network_infer(
    net: &NetworkDescriptor,
    weights: &NetworkWeights,
    input: &Sequence,
) -> Result<Sequence> {
    net.validate()?;
    if weights.layers.len() != net.layers.len() {
        return Err(Error::Shape(format!(
            "{} weight layers for {} network layers",
            weights.layers.len(),
            net.layers.len()
        )));
    }
    let precision = net.numeric_precision;
    let mut seq = input.map_values(|v| precision.store(v));
    for (i, (layer, ws)) in net.layers.iter().zip(&weights.layers).enumerate() {
        seq = layer_infer(layer, ws, &seq, precision).map_err(|e| e.in_layer(i))?;
    }
    Ok(seq)
}
