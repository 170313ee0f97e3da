//! Metrics, the experiment protocol and result tables.

pub mod metrics;
pub mod protocol;
pub mod table;

pub use metrics::{choice_accuracy, delta_acc, l2_metric, pearson, pearson_or_zero, Summary};
pub use protocol::{Completion, Experiment, FreeformTables, McTables, Model, Protocol, Task, AUTOREGRESSION, GPIO, UNTRAINED};
pub use table::ResultTable;
