//! Detection evaluation (matching, precision/recall, AP, mAP) and model
//! complexity accounting (parameters, FLOPs, FPS).

pub mod complexity;
pub mod eval;
pub mod report;

pub use complexity::{cost_of, count_flops, count_parameters, fps, LayerCost, PrimitiveOp};
pub use eval::{
    average_precision, full_threshold_grid, map_at, match_detections, pr_curve, Detection,
    EvalReport, GroundTruthBox, MatchResult, PrPoint,
};
pub use report::{render_key_value, render_table};
