//! Functional and cycle-level model of a four-unit LSTM inference
//! accelerator, with a reference LSTM oracle, access-trace generation for
//! the conventional and weight-locality (MWL) evaluation orders, LRU
//! reuse-distance analysis, partial-output quantization, a timing model and
//! an event-counting energy model.

pub mod arch;
pub mod energy;
pub mod error;
pub mod generate;
pub mod io;
pub mod model;
pub mod quant;
pub mod sched;

pub use error::{Error, Result};
