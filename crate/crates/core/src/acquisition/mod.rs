//! Entropy-driven adaptive design.

mod design;
mod ecl;
mod select;

pub use design::{run_design, DesignConfig, DesignOutcome, DesignTrace, Designer, SamplingDomain, TraceRecord};
pub use ecl::{ecl, ecl_f64};
pub use select::{
    entropy_batch, entropy_opt, local_ascent, score_candidates, select_batch, Acquisition, BatchSettings,
    OptimizerStrategy, LOCAL_FD_STEP, LOCAL_MAX_ITER,
};
