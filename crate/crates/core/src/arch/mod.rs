//! Cycle-level model of the accelerator.

mod config;
mod datapath;
mod sim;
mod timing;

pub use config::{CheckLevel, HardwareConfig, MuUnits, OpLatency, KIB, MIB, PRESET_NAMES};
pub use datapath::ArithmeticMode;
pub use sim::{
    output_agreement, quantization_tolerance, simulate, simulate_timing, weight_memory_need,
    Bandwidth, MuSummary, Occupancy, OracleCheck, OutputSummary, PassReport, PassReuse,
    QuantSummary, SimOptions, SimReport, StorageReport, REDUCTION_TREE_TOLERANCE,
};
pub use timing::{dpu_dot_cycles, mu_plan, mu_schedule, sub_vectors, MuPlan, OpKind, PlannedOp};
