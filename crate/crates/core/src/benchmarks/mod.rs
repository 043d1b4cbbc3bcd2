//! Synthetic simulators, their tabulated configurations, and the
//! classification and volume metrics used to score designs.

mod functions;
mod metrics;
mod registry;

pub use functions::{
    branin, hartmann6, ishigami, multimodal2d, spacesuit_standin, HARTMANN6_ARGMAX, SPACESUIT_COV, SPACESUIT_MEAN,
};
pub use metrics::{
    classify_report, failure_components, scan_failures, ClassificationReport, FailureScan, LabeledTestSet,
    SCAN_BLOCK,
};
pub use registry::{
    benchmark_spec, hartmann_mfis_distribution, ishigami_mfis_distribution, spacesuit_mvn, Benchmark,
    BenchmarkSpec,
};
