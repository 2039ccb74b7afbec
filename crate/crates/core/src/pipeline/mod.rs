//! Sequence-level orchestration: stereo or external maps, filtering,
//! fusion, meshing and evaluation, plus the synthetic test scene.

mod config;
mod run;
pub mod synthetic;

pub use config::{EvalConfig, PipelineConfig, RefinedSource};
pub use run::{run, run_with, PipelineReports, Reconstructor, RunOutput, StageTiming};
pub use synthetic::{render_synthetic, synthetic_palette, synthetic_rig, SynthOptions, SyntheticScene};
