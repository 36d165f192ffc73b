//! Post-processing and evaluation toolkit for cell and nucleus segmentation.
//!
//! The crate turns the two output channels of a segmentation network (a
//! distance map and a semantic logit map) into instance labels, generates
//! distance-map training targets from instance labels, and scores
//! predictions with Pearson correlation, IoU and mAP over the IoU grid
//! 0.50..=0.95.
//!
//! ```
//! use cellseg::{instance_segment, map_score, synth_instances, PipelineConfig, SynthSpec};
//!
//! let sample = synth_instances(&SynthSpec { width: 128, height: 128, cells: 4, ..Default::default() }).unwrap();
//! let logits = sample.semantic.to_logits(40.0);
//! let labels = instance_segment(&sample.distance, &logits, &PipelineConfig::default()).unwrap();
//! assert!(map_score(&sample.labels, &labels).unwrap() > 0.9);
//! ```

pub mod dataset;
pub mod distance;
pub mod error;
pub mod io;
pub mod metrics;
pub mod morphology;
pub mod pipeline;
pub mod raster;
pub mod report;

#[cfg(any(test, feature = "oracles"))]
pub mod oracles;

pub use dataset::{
    crop_manifest_csv, crop_offsets, has_instances, random_crops, split_train_test, synth_instances, CropManifestRow,
    CropOffset, CropSpec, OverlapPolicy, SynthSample, SynthSpec,
};
pub use distance::{distance_map, distance_map_with, DistanceScale};
pub use error::{Error, Result};
pub use io::{load_labels, load_raster, save_labels, save_raster, Format};
pub use metrics::{
    bce_with_logits, combined_loss, iou, map_score, match_instances, pcc, precision_at, shifted_sigmoid, LossInputs,
    MatchResult, MatchedPair, OverlapTable, DEFAULT_ALPHA, MAP_THRESHOLDS,
};
pub use morphology::{connected_components, h_maxima, reconstruct_by_dilation, regional_maxima, Connectivity};
pub use pipeline::{
    extract_seeds, instance_segment, seeded_watershed, threshold_semantic, Activation, PipelineConfig, SeedSet,
    DEFAULT_H, DEFAULT_SEMANTIC_THRESHOLD,
};
pub use raster::{max_project, BinaryMask, Grid, LabelMap, Raster, ZStack};
pub use report::{summarize, ImageRecord, MetricsReport, Summary};
