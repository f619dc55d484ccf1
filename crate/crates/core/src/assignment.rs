//! Optimal rectangular linear assignment plus the score-partition and
//! IoU-thresholded association primitives shared by both tracker variants.
//!
//! The solver is the O(n^3) shortest-augmenting-path variant with row/column
//! potentials; rectangular inputs are handled by solving on the transposed
//! matrix instead of materializing dummy rows. Column scanning is in index
//! order, so tie-breaking is deterministic.

use crate::geometry::{iou_distance_matrix, BBox, Detection};
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum AssignmentError {
    NonFiniteCost { row: usize, col: usize },
    InvalidThresholds { tau_high: f64, tau_low: f64 },
}

impl fmt::Display for AssignmentError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AssignmentError::NonFiniteCost { row, col } => {
                write!(f, "cost matrix entry ({row}, {col}) is not finite")
            }
            AssignmentError::InvalidThresholds { tau_high, tau_low } => {
                write!(f, "thresholds must satisfy 0 <= tau_low <= tau_high <= 1, got low {tau_low} high {tau_high}")
            }
        }
    }
}

impl std::error::Error for AssignmentError {}

/// Outcome of one assignment: every row and column index appears exactly once,
/// either in `matches` or in its unmatched list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentResult {
    pub matches: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl AssignmentResult {
    fn from_col4row(n_rows: usize, n_cols: usize, col4row: &[usize]) -> Self {
        let mut matched_cols = vec![false; n_cols];
        let mut matches = Vec::with_capacity(col4row.len());
        for (r, &c) in col4row.iter().enumerate() {
            if c != usize::MAX {
                matches.push((r, c));
                matched_cols[c] = true;
            }
        }
        let unmatched_rows =
            (0..n_rows).filter(|r| col4row.get(*r) == Some(&usize::MAX)).collect();
        let unmatched_cols = (0..n_cols).filter(|&c| !matched_cols[c]).collect();
        AssignmentResult { matches, unmatched_rows, unmatched_cols }
    }
}

/// Shortest augmenting path over a matrix with `nr <= nc`. Returns the column
/// assigned to each row.
fn solve_rows_le_cols(nr: usize, nc: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    debug_assert!(nr <= nc);
    let mut u = vec![0.0f64; nr];
    let mut v = vec![0.0f64; nc];
    let mut col4row = vec![usize::MAX; nr];
    let mut row4col = vec![usize::MAX; nc];

    for cur_row in 0..nr {
        let mut min_val = 0.0f64;
        let mut i = cur_row;
        let mut remaining: Vec<usize> = (0..nc).collect();
        let mut scanned_rows = vec![false; nr];
        let mut scanned_cols = vec![false; nc];
        let mut path = vec![usize::MAX; nc];
        let mut shortest = vec![f64::INFINITY; nc];
        let mut sink = usize::MAX;

        while sink == usize::MAX {
            let mut index = usize::MAX;
            let mut lowest = f64::INFINITY;
            scanned_rows[i] = true;
            for (it, &j) in remaining.iter().enumerate() {
                let reduced = min_val + cost(i, j) - u[i] - v[j];
                if reduced < shortest[j] {
                    path[j] = i;
                    shortest[j] = reduced;
                }
                // Prefer sinks (unassigned columns) among equal-cost candidates.
                if shortest[j] < lowest || (shortest[j] == lowest && row4col[j] == usize::MAX) {
                    lowest = shortest[j];
                    index = it;
                }
            }
            min_val = lowest;
            let j = remaining[index];
            if row4col[j] == usize::MAX {
                sink = j;
            } else {
                i = row4col[j];
            }
            scanned_cols[j] = true;
            remaining.swap_remove(index);
        }

        u[cur_row] += min_val;
        for r in 0..nr {
            if scanned_rows[r] && r != cur_row {
                u[r] += min_val - shortest[col4row[r]];
            }
        }
        for j in 0..nc {
            if scanned_cols[j] {
                v[j] -= min_val - shortest[j];
            }
        }

        let mut j = sink;
        loop {
            let row = path[j];
            row4col[j] = row;
            std::mem::swap(&mut col4row[row], &mut j);
            if row == cur_row {
                break;
            }
        }
    }
    col4row
}

/// Minimum-total-cost matching on `min(rows, cols)` pairs.
///
/// The matrix may be rectangular or empty; every entry must be finite.
pub fn solve_assignment(cost: &[Vec<f64>]) -> Result<AssignmentResult, AssignmentError> {
    let n_rows = cost.len();
    let n_cols = cost.first().map_or(0, Vec::len);
    for (i, row) in cost.iter().enumerate() {
        assert_eq!(row.len(), n_cols, "cost matrix must be rectangular");
        for (j, &value) in row.iter().enumerate() {
            if !value.is_finite() {
                return Err(AssignmentError::NonFiniteCost { row: i, col: j });
            }
        }
    }
    if n_rows == 0 || n_cols == 0 {
        return Ok(AssignmentResult {
            matches: Vec::new(),
            unmatched_rows: (0..n_rows).collect(),
            unmatched_cols: (0..n_cols).collect(),
        });
    }

    if n_rows <= n_cols {
        let col4row = solve_rows_le_cols(n_rows, n_cols, |i, j| cost[i][j]);
        Ok(AssignmentResult::from_col4row(n_rows, n_cols, &col4row))
    } else {
        // Transpose so the augmenting loop runs over the smaller side.
        let row4col = solve_rows_le_cols(n_cols, n_rows, |i, j| cost[j][i]);
        let mut col4row = vec![usize::MAX; n_rows];
        for (c, &r) in row4col.iter().enumerate() {
            if r != usize::MAX {
                col4row[r] = c;
            }
        }
        Ok(AssignmentResult::from_col4row(n_rows, n_cols, &col4row))
    }
}

/// (high, low, discarded) split of a detection list.
pub type ScorePartition = (Vec<Detection>, Vec<Detection>, Vec<Detection>);

/// Split detections into high-score, low-score, and discarded parts,
/// preserving input order within each part.
pub fn partition_by_score(
    dets: &[Detection],
    tau_high: f64,
    tau_low: f64,
) -> Result<ScorePartition, AssignmentError> {
    if !(0.0 <= tau_low && tau_low <= tau_high && tau_high <= 1.0) {
        return Err(AssignmentError::InvalidThresholds { tau_high, tau_low });
    }
    let mut high = Vec::new();
    let mut low = Vec::new();
    let mut discarded = Vec::new();
    for &d in dets {
        if d.score >= tau_high {
            high.push(d);
        } else if d.score >= tau_low {
            low.push(d);
        } else {
            discarded.push(d);
        }
    }
    Ok((high, low, discarded))
}

/// Globally optimal IoU association, then demotion of any matched pair whose
/// (1 - IoU) cost exceeds `max_cost` back to unmatched on both sides.
pub fn associate(
    track_boxes: &[BBox],
    det_boxes: &[BBox],
    max_cost: f64,
) -> Result<AssignmentResult, AssignmentError> {
    debug_assert!(max_cost > 0.0 && max_cost <= 1.0);
    // An empty side leaves the other side fully unmatched; the flattened cost
    // matrix alone cannot carry the column count in that case.
    if track_boxes.is_empty() || det_boxes.is_empty() {
        return Ok(AssignmentResult {
            matches: Vec::new(),
            unmatched_rows: (0..track_boxes.len()).collect(),
            unmatched_cols: (0..det_boxes.len()).collect(),
        });
    }
    let cost = iou_distance_matrix(track_boxes, det_boxes);
    let solved = solve_assignment(&cost)?;
    let mut matches = Vec::with_capacity(solved.matches.len());
    let mut unmatched_rows = solved.unmatched_rows;
    let mut unmatched_cols = solved.unmatched_cols;
    for (r, c) in solved.matches {
        if cost[r][c] > max_cost {
            unmatched_rows.push(r);
            unmatched_cols.push(c);
        } else {
            matches.push((r, c));
        }
    }
    unmatched_rows.sort_unstable();
    unmatched_cols.sort_unstable();
    Ok(AssignmentResult { matches, unmatched_rows, unmatched_cols })
}
