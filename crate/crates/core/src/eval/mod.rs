//! Depth metrics, checkpoint evaluation, mask diagnostics and figures.

pub mod diagnostics;
pub mod evaluate;
pub mod metrics;
pub mod plot;

pub use diagnostics::{mask_diagnostics, textured_pixels, MaskCounts, MaskDiagnostics, TEXTURE_STD};
pub use evaluate::{evaluate, load_net, DisparityPredictor, FixedPredictor};
pub use metrics::{depth_metrics, EvalReport, MetricSums, Metrics, SampleMetrics, DEFAULT_CAP_M, REPORT_HEADER};
pub use plot::{plot_loss_curves, sample_panels, save_panels, Panel};
