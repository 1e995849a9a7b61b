//! Experiment orchestration: JSON configuration, NMSE/BER sweeps with CSV
//! output, checkpoint persistence, and optional SVG charts.

pub mod config;
pub mod model_io;
pub mod plot;
pub mod sweep;

pub use config::{EvalSection, ExperimentConfig, LinkSection, TrainSection};
pub use model_io::{load_model, save_model};
pub use sweep::{
    append_rows, evaluate_point, parse_metrics_csv, point_seed, sweep, MetricsRow, ReceiverKind,
    CSV_HEADER,
};
