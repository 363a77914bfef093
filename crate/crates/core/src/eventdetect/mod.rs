//! Shower event detection: isolation-forest scores over temperature deltas,
//! thresholded at the contamination quantile and merged into events.

mod events;
mod forest;

pub use events::{detect_events, events_to_csv, extract_features, score_minutes, DeltaFeatures, Event, EventConfig, MinuteScores};
pub use forest::{average_path_length, to_matrix, ForestConfig, IsolationForest, IsolationTree, Node};
