//! Verb representations in transformation-function space for human-object
//! interaction analysis.
//!
//! The crate couples per-verb integration maps (isolated human/object
//! features -> coherent union feature) and decomposition maps (union ->
//! isolated) with a shared feature autoencoder, metric training objectives,
//! pose-guided inter-pair instance exchange, detection-time scoring, an
//! evaluation harness, and a synthetic-oracle data generator for desk-scale
//! verification. Start with the runnable examples in `examples/`.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod ipt;
pub mod mlp;
pub mod model;
pub mod objectives;
pub mod synth;
pub mod optim;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use eval::{
    classification_map, compute_map, iou, ipt_diagnostic, lis, nis_filter, score_dataset,
    score_pair, Detection, DetectionRecord, GroundTruthHoi, HoiCatalog, LisParams, MapReport,
    ScoreOptions,
};
pub use gradcheck::{gradient_sweep, SweepRow};
pub use mlp::{Mlp, MlpSpec};
pub use ipt::{build_candidates, CandidateTable, Pose};
pub use model::{ForwardOptions, IdnModel, ModelConfig, PairForward, PairInputs};
pub use objectives::{BatchLabels, LossReport, LossToggles};
pub use synth::{generate, SynthConfig, SynthOutput};
pub use optim::{grad_check, ParamBinding, ParamSet};
pub use tensor::{Tape, Tensor, Var};
pub use trainer::{build_batch, train_full, TrainArtifacts, TrainConfig};
