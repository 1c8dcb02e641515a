//! Reference paths, repeatable closed-loop trials, statistics and export.

mod log;
mod metrics;
mod path;
mod trial;

pub use log::{write_rows_csv, LogMeta, LogRow, TrajectoryLog, CSV_HEADER};
pub use metrics::{
    error_series, hold_error, path_errors, point_polyline_distance, point_segment_distance,
    pooled_stats, speed_series, summarize, velocity_stats, PathStats, StatsReport,
};
pub use path::{
    letter_strokes, make_path, preset_paths, resample_polyline, PathKind, ReferencePath,
    SAMPLE_SPACING_MM,
};
pub use trial::{
    open_loop_sweep, run_batch, run_hold_trial, run_path_trial, ClosedLoop, MeasurementMode,
    Steering, SweepPoint, TrialSpec,
};
