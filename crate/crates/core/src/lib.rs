pub mod closed_forms;
pub mod coupling;
pub mod error;
pub mod exact;
pub mod golden;
pub mod lattice;
pub mod monotone;
pub mod rates;
pub mod scalar;
pub mod sim;

pub use coupling::{CouplingKind, CouplingTable};
pub use error::{Error, Result};
pub use lattice::{Configuration, CoupledState, PairOrder};
pub use rates::{make_custom, make_model, make_model_positional, validate_spec, ModelId, RateSpec, RateTable, TableEntry};
pub use scalar::{parse_exact, Exact, Rate};
pub use sim::{SimParams, Trajectory};
