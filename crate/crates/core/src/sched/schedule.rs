use log::warn;

use super::{Access, AccessEvent, ObjectId, SchedulePolicy, Target, TraceSink};
use crate::model::{Gate, LayerDescriptor, Precision};

/// Row buffer capacity per CU.
pub const DEFAULT_ROW_BUFFER_BYTES: u64 = 4 * 1024;

/// Byte sizes the emitters need beyond the layer shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceParams {
    pub elem_bytes: u64,
    /// Bytes per stored MWL partial output (one quantized code, or a full
    /// element when quantization is off).
    pub partial_bytes: u64,
    pub row_buffer_bytes: u64,
}

impl Default for TraceParams {
    fn default() -> Self {
        TraceParams {
            elem_bytes: 4,
            partial_bytes: 4,
            row_buffer_bytes: DEFAULT_ROW_BUFFER_BYTES,
        }
    }
}

impl TraceParams {
    pub fn new(precision: Precision, partial_bytes: u64, row_buffer_bytes: u64) -> Self {
        TraceParams {
            elem_bytes: precision.bytes(),
            partial_bytes,
            row_buffer_bytes,
        }
    }
}

/// A materialized single-pass trace.
#[derive(Debug, Clone)]
pub struct AccessTrace {
    pub layer: LayerDescriptor,
    pub policy: SchedulePolicy,
    pub steps: usize,
    pub params: TraceParams,
    pub events: Vec<crate::sched::AccessEvent>,
}

impl AccessTrace {
    /// Events issued by one computation unit, in order.
    pub fn cu_stream(&self, cu: Gate) -> Vec<AccessEvent> {
        self.events.iter().filter(|e| e.cu == cu).copied().collect()
    }
}

pub fn trace_conventional(
    layer: &LayerDescriptor,
    steps: usize,
    params: TraceParams,
) -> AccessTrace {
    materialize(layer, steps, params, SchedulePolicy::Conventional)
}

pub fn trace_mwl(layer: &LayerDescriptor, steps: usize, params: TraceParams) -> AccessTrace {
    materialize(layer, steps, params, SchedulePolicy::Mwl)
}

fn materialize(
    layer: &LayerDescriptor,
    steps: usize,
    params: TraceParams,
    policy: SchedulePolicy,
) -> AccessTrace {
    let mut events = Vec::new();
    emit_pass(layer, steps, false, policy, params, &mut events);
    AccessTrace {
        layer: *layer,
        policy,
        steps,
        params,
        events,
    }
}

struct Emitter<'a, S: TraceSink> {
    sink: &'a mut S,
    step: u32,
    neuron: u32,
}

impl<S: TraceSink> Emitter<'_, S> {
    #[inline]
    fn at(&mut self, step: usize, neuron: usize) {
        self.step = step as u32;
        self.neuron = neuron as u32;
    }

    #[inline]
    fn emit(&mut self, cu: Gate, target: Target, access: Access, object: ObjectId, bytes: u64) {
        self.sink.record(AccessEvent {
            cu,
            target,
            object,
            access,
            bytes,
            step: self.step,
            neuron: self.neuron,
        });
    }
}

/// Emit every access of one direction of one layer over `steps` frames.
/// A backward pass (`reverse`) consumes frames from last to first.
pub fn emit_pass<S: TraceSink>(
    layer: &LayerDescriptor,
    steps: usize,
    reverse: bool,
    policy: SchedulePolicy,
    params: TraceParams,
    sink: &mut S,
) {
    let mut em = Emitter {
        sink,
        step: 0,
        neuron: 0,
    };
    let eb = params.elem_bytes;
    let nx = layer.input_size as u64;
    let nh = layer.hidden_size as u64;
    let frame_of = |s: usize| if reverse { steps - 1 - s } else { s } as u32;

    for g in Gate::ALL {
        em.emit(
            g,
            Target::Dram,
            Access::Read,
            ObjectId::GateWeights(g),
            layer.gate_elems(g) * eb,
        );
        em.emit(
            g,
            Target::WeightBuffer,
            Access::Write,
            ObjectId::GateWeights(g),
            layer.matrix_elems() * eb,
        );
        em.emit(
            g,
            Target::InputBuffer,
            Access::Write,
            ObjectId::Hidden(0),
            nh * eb,
        );
    }

    match policy {
        SchedulePolicy::Conventional => {
            for s in 0..steps {
                let frame = frame_of(s);
                em.at(s, 0);
                for g in Gate::ALL {
                    em.emit(
                        g,
                        Target::IntermediateMemory,
                        Access::Read,
                        ObjectId::InputFrame(frame),
                        nx * eb,
                    );
                    em.emit(
                        g,
                        Target::InputBuffer,
                        Access::Write,
                        ObjectId::InputFrame(frame),
                        nx * eb,
                    );
                }
                for j in 0..layer.hidden_size {
                    em.at(s, j);
                    for g in Gate::ALL {
                        let row = j as u32;
                        em.emit(
                            g,
                            Target::WeightBuffer,
                            Access::Read,
                            ObjectId::ForwardRow(g, row),
                            nx * eb,
                        );
                        em.emit(
                            g,
                            Target::InputBuffer,
                            Access::Read,
                            ObjectId::InputFrame(frame),
                            nx * eb,
                        );
                        em.emit(
                            g,
                            Target::WeightBuffer,
                            Access::Read,
                            ObjectId::RecurrentRow(g, row),
                            nh * eb,
                        );
                        em.emit(
                            g,
                            Target::InputBuffer,
                            Access::Read,
                            ObjectId::Hidden(s as u32),
                            nh * eb,
                        );
                    }
                }
                finish_step(&mut em, s, frame, nh * eb);
            }
        }
        SchedulePolicy::Mwl => {
            let row_bytes = nx * eb;
            let use_row_buffer = row_bytes <= params.row_buffer_bytes;
            if !use_row_buffer {
                warn!(
                    "forward row of {row_bytes} bytes exceeds the {}-byte row buffer; reading rows from the weight buffer",
                    params.row_buffer_bytes
                );
            }
            for j in 0..layer.hidden_size {
                let row = j as u32;
                em.at(0, j);
                for g in Gate::ALL {
                    em.emit(
                        g,
                        Target::WeightBuffer,
                        Access::Read,
                        ObjectId::ForwardRow(g, row),
                        row_bytes,
                    );
                    if use_row_buffer {
                        em.emit(
                            g,
                            Target::RowBuffer,
                            Access::Write,
                            ObjectId::ForwardRow(g, row),
                            row_bytes,
                        );
                    }
                }
                for s in 0..steps {
                    let frame = frame_of(s);
                    em.at(s, j);
                    for g in Gate::ALL {
                        if use_row_buffer {
                            em.emit(
                                g,
                                Target::RowBuffer,
                                Access::Read,
                                ObjectId::ForwardRow(g, row),
                                row_bytes,
                            );
                        } else if s > 0 {
                            em.emit(
                                g,
                                Target::WeightBuffer,
                                Access::Read,
                                ObjectId::ForwardRow(g, row),
                                row_bytes,
                            );
                        }
                        em.emit(
                            g,
                            Target::IntermediateMemory,
                            Access::Read,
                            ObjectId::InputFrame(frame),
                            nx * eb,
                        );
                        em.emit(
                            g,
                            Target::IntermediateMemory,
                            Access::Write,
                            ObjectId::Partial(g, frame, row),
                            params.partial_bytes,
                        );
                    }
                }
            }
            for s in 0..steps {
                let frame = frame_of(s);
                for j in 0..layer.hidden_size {
                    let row = j as u32;
                    em.at(s, j);
                    for g in Gate::ALL {
                        em.emit(
                            g,
                            Target::WeightBuffer,
                            Access::Read,
                            ObjectId::RecurrentRow(g, row),
                            nh * eb,
                        );
                        em.emit(
                            g,
                            Target::InputBuffer,
                            Access::Read,
                            ObjectId::Hidden(s as u32),
                            nh * eb,
                        );
                        em.emit(
                            g,
                            Target::IntermediateMemory,
                            Access::Read,
                            ObjectId::Partial(g, frame, row),
                            params.partial_bytes,
                        );
                    }
                }
                finish_step(&mut em, s, frame, nh * eb);
            }
        }
    }
}

// h_t goes to intermediate memory (as this layer's output) and is
// broadcast to every CU's input buffer for the next step.
fn finish_step<S: TraceSink>(em: &mut Emitter<'_, S>, s: usize, frame: u32, h_bytes: u64) {
    em.emit(
        Gate::Output,
        Target::IntermediateMemory,
        Access::Write,
        ObjectId::OutputFrame(frame),
        h_bytes,
    );
    for g in Gate::ALL {
        em.emit(
            g,
            Target::InputBuffer,
            Access::Write,
            ObjectId::Hidden(s as u32 + 1),
            h_bytes,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Direction;
    use crate::sched::{AccessCounts, ObjectClass};
    use std::collections::HashMap;

    fn layer(nx: usize, nh: usize) -> LayerDescriptor {
        LayerDescriptor::new(nx, nh, Direction::ForwardOnly, true)
    }

    fn row_reads(trace: &AccessTrace, target: Target) -> HashMap<ObjectId, usize> {
        let mut m = HashMap::new();
        for e in &trace.events {
            if e.target == target
                && e.access == Access::Read
                && matches!(
                    e.object.class(),
                    ObjectClass::ForwardRow | ObjectClass::RecurrentRow
                )
            {
                *m.entry(e.object).or_insert(0) += 1;
            }
        }
        m
    }

    #[test]
    fn conventional_reads_each_row_once_per_step() {
        for steps in [1, 3] {
            let tr = trace_conventional(&layer(5, 3), steps, TraceParams::default());
            let reads = row_reads(&tr, Target::WeightBuffer);
            assert_eq!(reads.len(), 4 * 6);
            assert!(reads.values().all(|&n| n == steps));
        }
    }

    #[test]
    fn conventional_interleaves_rows_per_neuron() {
        let tr = trace_conventional(&layer(2, 2), 1, TraceParams::default());
        let order: Vec<ObjectId> = tr
            .cu_stream(Gate::Forget)
            .into_iter()
            .filter(|e| e.target == Target::WeightBuffer && e.access == Access::Read)
            .map(|e| e.object)
            .collect();
        let g = Gate::Forget;
        assert_eq!(
            order,
            vec![
                ObjectId::ForwardRow(g, 0),
                ObjectId::RecurrentRow(g, 0),
                ObjectId::ForwardRow(g, 1),
                ObjectId::RecurrentRow(g, 1)
            ]
        );
    }

    #[test]
    fn mwl_single_step_matches_conventional_weight_reads() {
        let l = layer(7, 4);
        let conv = trace_conventional(&l, 1, TraceParams::default());
        let mwl = trace_mwl(&l, 1, TraceParams::default());
        let count = |t: &AccessTrace| {
            let mut c = AccessCounts::default();
            t.events
                .iter()
                .for_each(|e| crate::sched::TraceSink::record(&mut c, *e));
            c.target(Target::WeightBuffer).read_bytes
        };
        assert_eq!(count(&conv), count(&mwl));
    }

    #[test]
    fn mwl_forward_rows_come_from_row_buffer() {
        let tr = trace_mwl(&layer(3, 2), 4, TraceParams::default());
        let wb = row_reads(&tr, Target::WeightBuffer);
        let rb = row_reads(&tr, Target::RowBuffer);
        for g in Gate::ALL {
            for r in 0..2 {
                assert_eq!(wb[&ObjectId::ForwardRow(g, r)], 1);
                assert_eq!(rb[&ObjectId::ForwardRow(g, r)], 4);
                assert_eq!(wb[&ObjectId::RecurrentRow(g, r)], 4);
            }
        }
    }

    #[test]
    fn oversized_rows_fall_back_to_weight_buffer() {
        let params = TraceParams {
            row_buffer_bytes: 8,
            ..TraceParams::default()
        };
        let tr = trace_mwl(&layer(3, 2), 4, params);
        assert!(row_reads(&tr, Target::RowBuffer).is_empty());
        let wb = row_reads(&tr, Target::WeightBuffer);
        assert_eq!(wb[&ObjectId::ForwardRow(Gate::Input, 0)], 4);
    }

    #[test]
    fn backward_pass_visits_frames_in_reverse() {
        let mut ev = Vec::new();
        emit_pass(
            &layer(2, 1),
            3,
            true,
            SchedulePolicy::Conventional,
            TraceParams::default(),
            &mut ev,
        );
        let frames: Vec<ObjectId> = ev
            .iter()
            .filter(|e| e.target == Target::IntermediateMemory && e.access == Access::Write)
            .map(|e| e.object)
            .collect();
        assert_eq!(
            frames,
            vec![
                ObjectId::OutputFrame(2),
                ObjectId::OutputFrame(1),
                ObjectId::OutputFrame(0)
            ]
        );
    }

    #[test]
    fn every_event_has_bytes() {
        for policy in [SchedulePolicy::Conventional, SchedulePolicy::Mwl] {
            let mut ev = Vec::new();
            emit_pass(
                &layer(3, 3),
                2,
                false,
                policy,
                TraceParams::default(),
                &mut ev,
            );
            assert!(ev.iter().all(|e| e.bytes > 0));
        }
    }
}
