//! Boundary benchmark: non-maximum suppression, tolerant pixel correspondence,
//! multi-annotator precision/recall and the ODS/OIS/AP summary.

mod matching;
mod nms;
mod pr;
mod report;

pub use matching::{hopcroft_karp, match_boundaries, match_radius, Matching, EXACT_MATCH_LIMIT};
pub use nms::{nms_thin, normal_orientation, NMS_TOLERANCE};
pub use pr::{
    average_precision, default_thresholds, evaluate_binary, f_measure, pr_curve, summarize, BenchSummary, PrCounts,
    PrCurve, PrPoint, DEFAULT_TOL_FRAC,
};
pub use report::{ablation_report, pr_svg, write_curve_csv, write_summary_csv};
