//! Rotation-only relative and global pose estimation from matched image points.
//!
//! Translation is eliminated analytically, so two-view and multi-view problems
//! are optimized over rotations alone. The crate also ships a deterministic
//! scene simulator and the text formats used by the command-line front end.

pub mod detector;
pub mod geometry;
pub mod graph;
pub mod io;
pub mod lm;
pub mod multiview;
pub mod par;
pub mod sim;
pub mod translation;
pub mod twoview;

pub use detector::{classify, DetectionReport, SceneLabel};
pub use geometry::{exp_so3, log_so3, rotation_error, CameraPose, Mat3, Observation, Rotation, Vec3};
pub use graph::{Correspondence, MatchedPair, Track, ViewGraph};
pub use lm::LMConfig;
pub use multiview::{f_grrm, grrm_residual, init_rotations, optimize_global, GlobalRotations};
pub use par::Execution;
pub use translation::{lambda_min_cardano, solve_translation, RankClass, TranslationSolution};
pub use twoview::{optimize_two_view, pa_residual, trrm_residual, ResidualForm, TwoViewProblem};
