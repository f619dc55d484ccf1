//! Detections-in retail analytics: multi-object tracking over per-frame
//! detection files, footfall analytics (heat maps, line crossings, visitor
//! counts), detection/tracking/forecast evaluation metrics, and a from-scratch
//! demand-forecasting stack (linear regression, LSTM, GRU).
//!
//! Everything external flows through the plain-text formats in [`io`]; the
//! other modules are pure in-memory transforms.

pub mod analytics;
pub mod assignment;
pub mod forecasting;
pub mod geometry;
pub mod io;
pub mod kalman;
pub mod metrics;
pub mod tracker;

pub use geometry::{BBox, Detection};
pub use io::{GroundTruthEntry, SalesRecord, TrackRecord};
pub use tracker::{run_sequence, Tracker, TrackerConfig, TrackerVariant};
