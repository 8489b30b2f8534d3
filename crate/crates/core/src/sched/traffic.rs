use serde::{Deserialize, Serialize};

use super::SchedulePolicy;
use crate::model::NetworkDescriptor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerTraffic {
    pub layer: usize,
    pub passes: usize,
    /// Weight bytes fetched for this layer, all directions. Each direction's
    /// weights are fetched exactly once regardless of sequence length.
    pub weight_bytes: u64,
    /// Under the spill alternative: bytes of this layer's input read back
    /// from DRAM (once per pass).
    pub spill_read_bytes: u64,
    /// Under the spill alternative: output sequence written to DRAM.
    pub spill_write_bytes: u64,
    /// Under the spill alternative: MWL partials written and read back.
    pub spill_partial_bytes: u64,
}

/// DRAM traffic for one inference over a `steps`-frame sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DramTraffic {
    pub policy: SchedulePolicy,
    pub steps: usize,
    pub per_layer: Vec<LayerTraffic>,
    pub weight_bytes: u64,
    pub softmax_weight_bytes: u64,
    pub input_bytes: u64,
    pub output_bytes: u64,
    /// Total with the on-chip intermediate memory.
    pub total_bytes: u64,
    /// Total if every layer's results went through DRAM instead.
    pub spill_total_bytes: u64,
    /// Share of the spill policy's DRAM bytes avoided by keeping
    /// intermediate results on chip.
    pub avoided_fraction: f64,
}

/// DRAM traffic of the on-chip-intermediate design, alongside the spill
/// alternative. `partial_bytes` is the size of one stored MWL partial.
pub fn dram_traffic(
    net: &NetworkDescriptor,
    policy: SchedulePolicy,
    steps: usize,
    partial_bytes: u64,
) -> DramTraffic {
    let eb = net.numeric_precision.bytes();
    let t = steps as u64;
    let per_layer: Vec<LayerTraffic> = net
        .layers
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let passes = l.passes() as u64;
            let spill_partial_bytes = match policy {
                SchedulePolicy::Conventional => 0,
                SchedulePolicy::Mwl => 2 * passes * 4 * t * l.hidden_size as u64 * partial_bytes,
            };
            LayerTraffic {
                layer: i,
                passes: l.passes(),
                weight_bytes: l.layer_elems() * eb,
                spill_read_bytes: passes * t * l.input_size as u64 * eb,
                spill_write_bytes: t * l.output_size() as u64 * eb,
                spill_partial_bytes,
            }
        })
        .collect();

    let weight_bytes: u64 = per_layer.iter().map(|l| l.weight_bytes).sum();
    let softmax_weight_bytes = net.softmax_weight_bytes();
    let input_bytes = t * net.input_dim as u64 * eb;
    let output_bytes = t * net.output_dim() as u64 * eb;
    let total_bytes = weight_bytes + softmax_weight_bytes + input_bytes + output_bytes;
    let spill_total_bytes = weight_bytes
        + softmax_weight_bytes
        + per_layer
            .iter()
            .map(|l| l.spill_read_bytes + l.spill_write_bytes + l.spill_partial_bytes)
            .sum::<u64>();
    let avoided_fraction = if spill_total_bytes == 0 {
        0.0
    } else {
        1.0 - total_bytes as f64 / spill_total_bytes as f64
    };
    DramTraffic {
        policy,
        steps,
        per_layer,
        weight_bytes,
        softmax_weight_bytes,
        input_bytes,
        output_bytes,
        total_bytes,
        spill_total_bytes,
        avoided_fraction,
    }
}
