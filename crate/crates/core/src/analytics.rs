//! Retail insights over track records: occupancy heat maps, directed
//! line-crossing counts, and unique-visitor counts.
//!
//! All aggregation uses the box foot-point (bottom-center) as a person's floor
//! position. Counts are integers, so parallel partial accumulation merges
//! exactly when needed.

use crate::io::TrackRecord;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub enum AnalyticsError {
    UnsortedRecords { track_id: u32 },
    EmptyHeatMapNormalization,
    DegenerateLine,
}

impl fmt::Display for AnalyticsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnalyticsError::UnsortedRecords { track_id } => {
                write!(f, "records for track {track_id} are not sorted by frame")
            }
            AnalyticsError::EmptyHeatMapNormalization => {
                write!(f, "cannot normalize an all-zero heat map")
            }
            AnalyticsError::DegenerateLine => write!(f, "counting line endpoints coincide"),
        }
    }
}

impl std::error::Error for AnalyticsError {}

/// Occupancy grid accumulated from track foot-points, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatMap {
    pub grid_cols: usize,
    pub grid_rows: usize,
    pub frame_width: f64,
    pub frame_height: f64,
    pub counts: Vec<u64>,
}

impl HeatMap {
    pub fn cell(&self, row: usize, col: usize) -> u64 {
        self.counts[row * self.grid_cols + col]
    }

    /// Total accumulated foot-points.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Counts rescaled to sum to 1; an all-zero map is an error, not NaN.
    pub fn normalized(&self) -> Result<Vec<f64>, AnalyticsError> {
        let total = self.total();
        if total == 0 {
            return Err(AnalyticsError::EmptyHeatMapNormalization);
        }
        Ok(self.counts.iter().map(|&c| c as f64 / total as f64).collect())
    }

    /// Row-major integer matrix, one row per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in 0..self.grid_rows {
            let cells: Vec<String> =
                (0..self.grid_cols).map(|col| self.cell(row, col).to_string()).collect();
            writeln!(out, "{}", cells.join(",")).expect("string write");
        }
        out
    }

    /// Plain "P2" grayscale with counts rescaled so the max count maps to 255;
    /// an all-zero map renders as all zeros. One grid row per line, wrapped to
    /// keep lines within the plain-PGM 70-character limit.
    pub fn to_pgm(&self) -> String {
        let max = self.counts.iter().copied().max().unwrap_or(0);
        let mut out = format!("P2\n{} {}\n255\n", self.grid_cols, self.grid_rows);
        for row in 0..self.grid_rows {
            let mut line = String::new();
            for col in 0..self.grid_cols {
                let count = self.cell(row, col);
                let value = if max == 0 {
                    0
                } else {
                    ((count as f64 / max as f64) * 255.0).round() as u32
                };
                let token = value.to_string();
                if !line.is_empty() && line.len() + 1 + token.len() > 70 {
                    out.push_str(&line);
                    out.push('\n');
                    line.clear();
                }
                if !line.is_empty() {
                    line.push(' ');
                }
                line.push_str(&token);
            }
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}

/// Bin each record's foot-point into a cols x rows grid over the frame, clamping
/// points on or past the frame edge into the border cells.
pub fn accumulate_heatmap(
    records: &[TrackRecord],
    grid: (usize, usize),
    frame_size: (f64, f64),
) -> HeatMap {
    let (grid_cols, grid_rows) = grid;
    let (frame_width, frame_height) = frame_size;
    assert!(grid_cols > 0 && grid_rows > 0, "grid dimensions must be positive");
    assert!(frame_width > 0.0 && frame_height > 0.0, "frame size must be positive");

    let mut counts = vec![0u64; grid_cols * grid_rows];
    let cell_w = frame_width / grid_cols as f64;
    let cell_h = frame_height / grid_rows as f64;
    for r in records {
        let (x, y) = r.bbox.foot_point();
        let col = ((x / cell_w).floor() as i64).clamp(0, grid_cols as i64 - 1) as usize;
        let row = ((y / cell_h).floor() as i64).clamp(0, grid_rows as i64 - 1) as usize;
        counts[row * grid_cols + col] += 1;
    }
    HeatMap { grid_cols, grid_rows, frame_width, frame_height, counts }
}

/// Directed counting line through two distinct points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountingLine {
    pub p1: (f64, f64),
    pub p2: (f64, f64),
    pub label: String,
}

impl CountingLine {
    pub fn new(p1: (f64, f64), p2: (f64, f64), label: impl Into<String>) -> Result<Self, AnalyticsError> {
        if p1 == p2 {
            return Err(AnalyticsError::DegenerateLine);
        }
        Ok(CountingLine { p1, p2, label: label.into() })
    }

    /// Sign of the cross product (p2 - p1) x (point - p1): which side of the
    /// directed line the point lies on, 0 exactly on it.
    fn side(&self, point: (f64, f64)) -> i8 {
        let dx = self.p2.0 - self.p1.0;
        let dy = self.p2.1 - self.p1.1;
        let cross = dx * (point.1 - self.p1.1) - dy * (point.0 - self.p1.0);
        if cross > 0.0 {
            1
        } else if cross < 0.0 {
            -1
        } else {
            0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrossingDirection {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossingEvent {
    pub track: u32,
    pub frame: u32,
    pub direction: CrossingDirection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingReport {
    pub label: String,
    pub positive: u64,
    pub negative: u64,
    pub events: Vec<CrossingEvent>,
}

impl CrossingReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Count strict side changes of each track's foot-point against the line.
///
/// Frames exactly on the line inherit the previous non-zero side, and tracks
/// with gaps are compared across consecutive observed frames only — no path is
/// invented during occlusion.
pub fn count_line_crossings(
    records: &[TrackRecord],
    line: &CountingLine,
) -> Result<CrossingReport, AnalyticsError> {
    let mut by_track: BTreeMap<u32, Vec<&TrackRecord>> = BTreeMap::new();
    for r in records {
        by_track.entry(r.track_id).or_default().push(r);
    }

    let mut events = Vec::new();
    for (&track_id, track_records) in &by_track {
        for w in track_records.windows(2) {
            if w[1].frame <= w[0].frame {
                return Err(AnalyticsError::UnsortedRecords { track_id });
            }
        }
        let mut side = 0i8;
        for r in track_records {
            let s = line.side(r.bbox.foot_point());
            if s == 0 {
                continue;
            }
            if side != 0 && s != side {
                let direction = if s > 0 {
                    CrossingDirection::Positive
                } else {
                    CrossingDirection::Negative
                };
                events.push(CrossingEvent { track: track_id, frame: r.frame, direction });
            }
            side = s;
        }
    }

    events.sort_by_key(|e| (e.frame, e.track));
    let positive = events.iter().filter(|e| e.direction == CrossingDirection::Positive).count();
    let negative = events.len() - positive;
    Ok(CrossingReport {
        label: line.label.clone(),
        positive: positive as u64,
        negative: negative as u64,
        events,
    })
}

/// Number of distinct track ids.
pub fn unique_visitors(records: &[TrackRecord]) -> usize {
    records.iter().map(|r| r.track_id).collect::<BTreeSet<u32>>().len()
}
