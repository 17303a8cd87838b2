//! Simulation and evaluation: synthetic scenes, reference curves, gap
//! scenarios, MAE scoring and sweeps.

pub mod metrics;
pub mod reference;
pub mod scenario;
pub mod sweep;
pub mod synth;

pub use metrics::{evaluate_mae, EvalReport};
pub use reference::{build_reference, expand_reference, simulate_contamination};
pub use scenario::{apply_scenario, ScenarioOutcome, ScenarioSpec};
pub use sweep::{run_sweep, Method, SweepRow, SweepSetting};
pub use synth::{synthesize, SynthParams, SynthScene};
