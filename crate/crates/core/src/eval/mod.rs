//! Metrics and reports: L*a*b* error, RGB remapping spread, filter probing and rating-task export.

mod lab;
mod remap;
mod report;
mod study;

pub use lab::{lab_l2, lab_pixel_to_srgb, srgb_pixel_to_lab, srgb_to_lab, LabImage, WHITE_D65};
pub use remap::{level, remap_spread, BinStat, ChannelRemap, RemapSpreadReport, LEVELS};
pub use report::{filter_effect_report, probe_stats, FilterReport, ProbeRow};
pub use study::{
    export_rating_tasks, RatingTask, StudyExport, StudyKind, StudyRecord, TaskItem, TaskKey,
};
