//! Evaluation suite: detection precision/recall/AP, multi-object tracking
//! accuracy with identity-switch counting, and the forecasting error bundle
//! with improvement rates.

use crate::assignment::solve_assignment;
use crate::geometry::{iou, Detection};
use crate::io::{GroundTruthEntry, TrackRecord};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum MetricsError {
    NoGroundTruth,
    EmptyGroundTruth,
    LengthMismatch { predicted: usize, actual: usize },
    ZeroActualInMape { index: usize },
    ConstantActualInR2,
    ZeroBaseline,
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricsError::NoGroundTruth => write!(f, "no ground-truth boxes to evaluate against"),
            MetricsError::EmptyGroundTruth => write!(f, "ground truth has no active entries"),
            MetricsError::LengthMismatch { predicted, actual } => {
                write!(f, "series lengths differ: {predicted} predicted vs {actual} actual")
            }
            MetricsError::ZeroActualInMape { index } => {
                write!(f, "actual value at index {index} is zero; MAPE undefined")
            }
            MetricsError::ConstantActualInR2 => {
                write!(f, "actual series is constant; R^2 undefined")
            }
            MetricsError::ZeroBaseline => write!(f, "baseline metric is zero"),
        }
    }
}

impl std::error::Error for MetricsError {}

/// One scored detection labeled true/false positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredLabel {
    pub score: f64,
    pub is_tp: bool,
}

/// Output of greedy detection-to-truth matching at one IoU threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchLabels {
    /// Labels in descending score order.
    pub labels: Vec<ScoredLabel>,
    pub false_negatives: usize,
    pub total_gt: usize,
}

/// Greedy matching in descending score order: a detection is a true positive
/// when its best-IoU unmatched ground truth in the same frame reaches
/// `iou_thr`; each ground truth matches at most once. Inactive entries are
/// excluded.
pub fn match_detections(
    dets: &[Detection],
    gts: &[GroundTruthEntry],
    iou_thr: f64,
) -> MatchLabels {
    let active: Vec<&GroundTruthEntry> = gts.iter().filter(|g| g.active).collect();
    let total_gt = active.len();
    let mut gt_by_frame: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, g) in active.iter().enumerate() {
        gt_by_frame.entry(g.frame).or_default().push(i);
    }

    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));

    let mut gt_used = vec![false; total_gt];
    let mut labels = Vec::with_capacity(dets.len());
    for &di in &order {
        let det = &dets[di];
        let mut best: Option<(f64, usize)> = None;
        if let Some(candidates) = gt_by_frame.get(&det.frame) {
            for &gi in candidates {
                if gt_used[gi] {
                    continue;
                }
                let overlap = iou(&det.bbox, &active[gi].bbox);
                if best.is_none_or(|(b, _)| overlap > b) {
                    best = Some((overlap, gi));
                }
            }
        }
        let is_tp = match best {
            Some((overlap, gi)) if overlap >= iou_thr => {
                gt_used[gi] = true;
                true
            }
            _ => false,
        };
        labels.push(ScoredLabel { score: det.score, is_tp });
    }

    let tp = labels.iter().filter(|l| l.is_tp).count();
    MatchLabels { labels, false_negatives: total_gt - tp, total_gt }
}

/// Precision/recall points over descending score cutoffs, with detections of
/// equal score collapsed into one cutoff.
fn precision_recall_points(labels: &[ScoredLabel], total_gt: usize) -> Vec<(f64, f64)> {
    let mut sorted = labels.to_vec();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for (i, label) in sorted.iter().enumerate() {
        if label.is_tp {
            tp += 1;
        } else {
            fp += 1;
        }
        let group_ends = i + 1 == sorted.len() || sorted[i + 1].score != label.score;
        if group_ends {
            points.push((tp as f64 / total_gt as f64, tp as f64 / (tp + fp) as f64));
        }
    }
    points
}

/// All-point interpolated area under the precision envelope over recall.
pub fn average_precision(labels: &[ScoredLabel], total_gt: usize) -> Result<f64, MetricsError> {
    if total_gt == 0 {
        return Err(MetricsError::NoGroundTruth);
    }
    let points = precision_recall_points(labels, total_gt);
    // Suffix maximum of precision = the monotone envelope.
    let mut envelope = vec![0.0; points.len()];
    let mut running = 0.0f64;
    for i in (0..points.len()).rev() {
        running = running.max(points[i].1);
        envelope[i] = running;
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (i, &(recall, _)) in points.iter().enumerate() {
        if recall > prev_recall {
            ap += (recall - prev_recall) * envelope[i];
            prev_recall = recall;
        }
    }
    Ok(ap)
}

/// Detection evaluation bundle. The pipeline is single class, so `map50`
/// equals `ap50`; `map50_95` averages AP over IoU thresholds 0.50 to 0.95.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvalReport {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub ap50: f64,
    pub map50: f64,
    pub map50_95: f64,
}

pub fn map_suite(
    dets: &[Detection],
    gts: &[GroundTruthEntry],
) -> Result<DetectionEvalReport, MetricsError> {
    let total_gt = gts.iter().filter(|g| g.active).count();
    if total_gt == 0 {
        return Err(MetricsError::NoGroundTruth);
    }
    // Thresholds formed as integer ratios so an IoU of exactly 0.60 passes the
    // 0.60 cutoff.
    let mut aps = Vec::with_capacity(10);
    for i in 0..10 {
        let thr = (50 + 5 * i) as f64 / 100.0;
        let matched = match_detections(dets, gts, thr);
        aps.push(average_precision(&matched.labels, matched.total_gt)?);
    }
    let labels50 = match_detections(dets, gts, 0.5);
    let points = precision_recall_points(&labels50.labels, labels50.total_gt);
    Ok(DetectionEvalReport {
        precision: points.iter().map(|p| p.1).collect(),
        recall: points.iter().map(|p| p.0).collect(),
        ap50: aps[0],
        map50: aps[0],
        map50_95: aps.iter().sum::<f64>() / aps.len() as f64,
    })
}

/// Tracking evaluation bundle; `mota = 1 - (FP + FN + IDSW) / gt_total`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingEvalReport {
    pub mota: f64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub id_switches: u64,
    pub gt_total: u64,
}

/// Per-frame correspondence in the CLEAR style: matches still overlapping from
/// the previous frame are carried over first, the remainder is assigned
/// optimally on IoU distance, and a ground truth matched to a different id
/// than its last match counts one identity switch.
pub fn mota(
    gts: &[GroundTruthEntry],
    tracks: &[TrackRecord],
    iou_thr: f64,
) -> Result<TrackingEvalReport, MetricsError> {
    let active: Vec<&GroundTruthEntry> = gts.iter().filter(|g| g.active).collect();
    if active.is_empty() {
        return Err(MetricsError::EmptyGroundTruth);
    }

    let mut gt_by_frame: BTreeMap<u32, Vec<&GroundTruthEntry>> = BTreeMap::new();
    for g in &active {
        gt_by_frame.entry(g.frame).or_default().push(g);
    }
    let mut tracks_by_frame: BTreeMap<u32, Vec<&TrackRecord>> = BTreeMap::new();
    for t in tracks {
        tracks_by_frame.entry(t.frame).or_default().push(t);
    }

    let mut frames: Vec<u32> = gt_by_frame.keys().chain(tracks_by_frame.keys()).copied().collect();
    frames.sort_unstable();
    frames.dedup();

    let mut last_match: BTreeMap<u32, u32> = BTreeMap::new();
    let (mut fp, mut fn_count, mut idsw, mut gt_total) = (0u64, 0u64, 0u64, 0u64);

    let empty_g: Vec<&GroundTruthEntry> = Vec::new();
    let empty_t: Vec<&TrackRecord> = Vec::new();
    for frame in frames {
        let frame_gts = gt_by_frame.get(&frame).unwrap_or(&empty_g);
        let frame_tracks = tracks_by_frame.get(&frame).unwrap_or(&empty_t);
        gt_total += frame_gts.len() as u64;

        let mut gt_open = vec![true; frame_gts.len()];
        let mut track_open = vec![true; frame_tracks.len()];
        let mut matches: Vec<(usize, usize)> = Vec::new();

        // Carry over still-valid correspondences from the previous frames.
        // (frame, id) pairs are unique, so each id occurs at most once here.
        for (gi, g) in frame_gts.iter().enumerate() {
            if let Some(&tid) = last_match.get(&g.track_id) {
                if let Some(ti) = frame_tracks.iter().position(|t| t.track_id == tid) {
                    if track_open[ti] && iou(&g.bbox, &frame_tracks[ti].bbox) >= iou_thr {
                        gt_open[gi] = false;
                        track_open[ti] = false;
                        matches.push((gi, ti));
                    }
                }
            }
        }

        // Optimal assignment for the remainder.
        let open_gs: Vec<usize> = (0..frame_gts.len()).filter(|&i| gt_open[i]).collect();
        let open_ts: Vec<usize> = (0..frame_tracks.len()).filter(|&i| track_open[i]).collect();
        if !open_gs.is_empty() && !open_ts.is_empty() {
            let overlap: Vec<Vec<f64>> = open_gs
                .iter()
                .map(|&gi| {
                    open_ts
                        .iter()
                        .map(|&ti| iou(&frame_gts[gi].bbox, &frame_tracks[ti].bbox))
                        .collect()
                })
                .collect();
            let cost: Vec<Vec<f64>> =
                overlap.iter().map(|row| row.iter().map(|v| 1.0 - v).collect()).collect();
            let solved = solve_assignment(&cost).expect("finite IoU costs");
            for (r, c) in solved.matches {
                if overlap[r][c] >= iou_thr {
                    let gi = open_gs[r];
                    let ti = open_ts[c];
                    gt_open[gi] = false;
                    track_open[ti] = false;
                    matches.push((gi, ti));
                }
            }
        }

        for (gi, ti) in matches {
            let gt_id = frame_gts[gi].track_id;
            let tid = frame_tracks[ti].track_id;
            if let Some(&prev) = last_match.get(&gt_id) {
                if prev != tid {
                    idsw += 1;
                }
            }
            last_match.insert(gt_id, tid);
        }
        fp += track_open.iter().filter(|&&open| open).count() as u64;
        fn_count += gt_open.iter().filter(|&&open| open).count() as u64;
    }

    Ok(TrackingEvalReport {
        mota: 1.0 - (fp + fn_count + idsw) as f64 / gt_total as f64,
        false_positives: fp,
        false_negatives: fn_count,
        id_switches: idsw,
        gt_total,
    })
}

/// Forecast error bundle; MAPE is reported as a fraction, not a percentage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rmse: f64,
    pub mse: f64,
    pub mae: f64,
    pub mape: f64,
    pub r2: f64,
}

pub fn forecast_metrics(predicted: &[f64], actual: &[f64]) -> Result<MetricsReport, MetricsError> {
    if predicted.len() != actual.len() || predicted.is_empty() {
        return Err(MetricsError::LengthMismatch {
            predicted: predicted.len(),
            actual: actual.len(),
        });
    }
    let n = actual.len() as f64;
    let mut mse = 0.0;
    let mut mae = 0.0;
    let mut mape = 0.0;
    for (i, (&p, &a)) in predicted.iter().zip(actual).enumerate() {
        let err = p - a;
        mse += err * err;
        mae += err.abs();
        if a == 0.0 {
            return Err(MetricsError::ZeroActualInMape { index: i });
        }
        mape += (err / a).abs();
    }
    mse /= n;
    mae /= n;
    mape /= n;

    let mean_actual = actual.iter().sum::<f64>() / n;
    let ss_tot: f64 = actual.iter().map(|a| (a - mean_actual).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(MetricsError::ConstantActualInR2);
    }
    let ss_res: f64 = predicted.iter().zip(actual).map(|(p, a)| (p - a).powi(2)).sum();

    Ok(MetricsReport { rmse: mse.sqrt(), mse, mae, mape, r2: 1.0 - ss_res / ss_tot })
}

/// Relative change between two metric values, in percent:
/// `|proposed - baseline| / |baseline| * 100`.
pub fn improvement_rate(baseline: f64, proposed: f64) -> Result<f64, MetricsError> {
    if baseline == 0.0 {
        return Err(MetricsError::ZeroBaseline);
    }
    Ok((proposed - baseline).abs() / baseline.abs() * 100.0)
}
