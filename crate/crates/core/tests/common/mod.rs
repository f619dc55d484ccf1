//! Shared oracles and synthetic fixtures for the integration suites.
//!
//! Everything here is deliberately independent of the library's
//! implementation paths: the Kalman oracle uses hand-rolled dense matrix
//! arithmetic, the assignment oracle enumerates permutations, and the AP
//! oracle recomputes precision/recall from scratch at every cutoff.

#![allow(dead_code)]
#![allow(clippy::needless_range_loop)]

use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use storetrack_core::geometry::{BBox, Detection, PERSON_CLASS_ID};
use storetrack_core::io::{GroundTruthEntry, SalesRecord};

// ---------------------------------------------------------------------------
// Dense matrix helpers (row-major Vec<Vec<f64>>).

pub type Mat = Vec<Vec<f64>>;

pub fn mat_zeros(rows: usize, cols: usize) -> Mat {
    vec![vec![0.0; cols]; rows]
}

pub fn mat_identity(n: usize) -> Mat {
    let mut m = mat_zeros(n, n);
    for i in 0..n {
        m[i][i] = 1.0;
    }
    m
}

pub fn mat_mul(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = mat_zeros(n, m);
    for i in 0..n {
        for l in 0..k {
            let v = a[i][l];
            for j in 0..m {
                out[i][j] += v * b[l][j];
            }
        }
    }
    out
}

pub fn mat_transpose(a: &Mat) -> Mat {
    let (n, m) = (a.len(), a[0].len());
    let mut out = mat_zeros(m, n);
    for i in 0..n {
        for j in 0..m {
            out[j][i] = a[i][j];
        }
    }
    out
}

pub fn mat_add(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x + y).collect())
        .collect()
}

pub fn mat_vec(a: &Mat, v: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn mat_inverse(a: &Mat) -> Mat {
    let n = a.len();
    let mut work = a.clone();
    let mut inv = mat_identity(n);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| work[i][col].abs().total_cmp(&work[j][col].abs()))
            .expect("non-empty");
        work.swap(col, pivot);
        inv.swap(col, pivot);
        let p = work[col][col];
        assert!(p.abs() > 1e-300, "singular matrix in oracle");
        for j in 0..n {
            work[col][j] /= p;
            inv[col][j] /= p;
        }
        for i in 0..n {
            if i != col {
                let factor = work[i][col];
                for j in 0..n {
                    work[i][j] -= factor * work[col][j];
                    inv[i][j] -= factor * inv[col][j];
                }
            }
        }
    }
    inv
}

// ---------------------------------------------------------------------------
// Independent dense Kalman oracle over the 8-dim box state.

#[derive(Debug, Clone)]
pub struct OracleState {
    pub mean: Vec<f64>,
    pub cov: Mat,
}

fn oracle_std(sigma_p: f64, sigma_v: f64, w: f64, h: f64) -> [f64; 8] {
    [
        sigma_p * w,
        sigma_p * h,
        sigma_p * w,
        sigma_p * h,
        sigma_v * w,
        sigma_v * h,
        sigma_v * w,
        sigma_v * h,
    ]
}

fn oracle_transition() -> Mat {
    let mut f = mat_identity(8);
    for i in 0..4 {
        f[i][i + 4] = 1.0;
    }
    f
}

fn oracle_observation() -> Mat {
    let mut h = mat_zeros(4, 8);
    for i in 0..4 {
        h[i][i] = 1.0;
    }
    h
}

pub fn oracle_initiate(z: [f64; 4], sigma_p: f64, sigma_v: f64) -> OracleState {
    let mut mean = vec![0.0; 8];
    mean[..4].copy_from_slice(&z);
    let std = oracle_std(sigma_p, sigma_v, z[2], z[3]);
    let mut cov = mat_zeros(8, 8);
    for i in 0..8 {
        let s = if i < 4 { 2.0 * std[i] } else { 10.0 * std[i] };
        cov[i][i] = s * s;
    }
    OracleState { mean, cov }
}

pub fn oracle_predict(s: &OracleState, sigma_p: f64, sigma_v: f64) -> OracleState {
    let std = oracle_std(sigma_p, sigma_v, s.mean[2], s.mean[3]);
    let mut q = mat_zeros(8, 8);
    for i in 0..8 {
        q[i][i] = std[i] * std[i];
    }
    let f = oracle_transition();
    let mean = mat_vec(&f, &s.mean);
    let cov = mat_add(&mat_mul(&mat_mul(&f, &s.cov), &mat_transpose(&f)), &q);
    OracleState { mean, cov }
}

pub fn oracle_update(s: &OracleState, z: [f64; 4], sigma_p: f64, sigma_v: f64) -> OracleState {
    let std = oracle_std(sigma_p, sigma_v, s.mean[2], s.mean[3]);
    let mut r = mat_zeros(4, 4);
    for i in 0..4 {
        r[i][i] = std[i] * std[i];
    }
    let h = oracle_observation();
    let ht = mat_transpose(&h);
    let innovation_cov = mat_add(&mat_mul(&mat_mul(&h, &s.cov), &ht), &r);
    let gain = mat_mul(&mat_mul(&s.cov, &ht), &mat_inverse(&innovation_cov));

    let projected = mat_vec(&h, &s.mean);
    let innovation: Vec<f64> = z.iter().zip(&projected).map(|(a, b)| a - b).collect();
    let correction = mat_vec(&gain, &innovation);
    let mean: Vec<f64> = s.mean.iter().zip(&correction).map(|(a, b)| a + b).collect();

    let kh = mat_mul(&gain, &h);
    let mut i_kh = mat_identity(8);
    for i in 0..8 {
        for j in 0..8 {
            i_kh[i][j] -= kh[i][j];
        }
    }
    let posterior = mat_mul(&i_kh, &s.cov);
    let post_t = mat_transpose(&posterior);
    let cov: Mat = (0..8)
        .map(|i| (0..8).map(|j| (posterior[i][j] + post_t[i][j]) * 0.5).collect())
        .collect();
    OracleState { mean, cov }
}

pub fn oracle_cmc(s: &OracleState, linear: [[f64; 2]; 2], translation: [f64; 2]) -> OracleState {
    let det = linear[0][0] * linear[1][1] - linear[0][1] * linear[1][0];
    let scale = det.abs().sqrt();
    let mut block = mat_zeros(8, 8);
    for (r, c, v) in [
        (0, 0, linear[0][0]),
        (0, 1, linear[0][1]),
        (1, 0, linear[1][0]),
        (1, 1, linear[1][1]),
        (4, 4, linear[0][0]),
        (4, 5, linear[0][1]),
        (5, 4, linear[1][0]),
        (5, 5, linear[1][1]),
    ] {
        block[r][c] = v;
    }
    block[2][2] = scale;
    block[3][3] = scale;
    block[6][6] = scale;
    block[7][7] = scale;

    let mut mean = mat_vec(&block, &s.mean);
    mean[0] += translation[0];
    mean[1] += translation[1];
    let cov = mat_mul(&mat_mul(&block, &s.cov), &mat_transpose(&block));
    OracleState { mean, cov }
}

// ---------------------------------------------------------------------------
// Exhaustive assignment oracle.

/// Minimum total cost over all injections of the smaller side into the larger.
pub fn brute_force_assignment_min(cost: &[Vec<f64>]) -> f64 {
    let nr = cost.len();
    let nc = cost.first().map_or(0, Vec::len);
    if nr == 0 || nc == 0 {
        return 0.0;
    }
    if nr <= nc {
        (0..nc)
            .permutations(nr)
            .map(|p| p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum())
            .fold(f64::INFINITY, f64::min)
    } else {
        (0..nr)
            .permutations(nc)
            .map(|p| p.iter().enumerate().map(|(j, &i)| cost[i][j]).sum())
            .fold(f64::INFINITY, f64::min)
    }
}

// ---------------------------------------------------------------------------
// Threshold-sweep average-precision oracle.

/// Recompute precision/recall from scratch at every distinct score cutoff and
/// integrate the precision envelope over recall by hand.
pub fn ap_sweep_oracle(labels: &[(f64, bool)], total_gt: usize) -> f64 {
    assert!(total_gt > 0);
    if labels.is_empty() {
        return 0.0;
    }
    let mut cutoffs: Vec<f64> = labels.iter().map(|&(s, _)| s).collect();
    cutoffs.sort_by(f64::total_cmp);
    cutoffs.dedup();

    let mut points: Vec<(f64, f64)> = Vec::new();
    for &cut in &cutoffs {
        let kept: Vec<bool> =
            labels.iter().filter(|&&(s, _)| s >= cut).map(|&(_, tp)| tp).collect();
        let tp = kept.iter().filter(|&&t| t).count();
        points.push((tp as f64 / total_gt as f64, tp as f64 / kept.len() as f64));
    }

    let mut recalls: Vec<f64> = points.iter().map(|p| p.0).collect();
    recalls.sort_by(f64::total_cmp);
    recalls.dedup();

    let mut ap = 0.0;
    let mut prev = 0.0;
    for &r in &recalls {
        if r > prev {
            let envelope = points
                .iter()
                .filter(|p| p.0 >= r)
                .map(|p| p.1)
                .fold(0.0, f64::max);
            ap += (r - prev) * envelope;
            prev = r;
        }
    }
    ap
}

// ---------------------------------------------------------------------------
// Synthetic tracking scenes.

pub struct SceneOptions {
    pub n_agents: usize,
    pub n_frames: u32,
    pub noise_sigma: f64,
    pub drop_rate: f64,
    /// Agent index and frame range whose detection score dips to 0.3.
    pub occlusion: Option<(usize, std::ops::RangeInclusive<u32>)>,
    pub seed: u64,
}

impl SceneOptions {
    pub fn clean(n_agents: usize, n_frames: u32, seed: u64) -> Self {
        SceneOptions {
            n_agents,
            n_frames,
            noise_sigma: 0.0,
            drop_rate: 0.0,
            occlusion: None,
            seed,
        }
    }
}

/// Constant-velocity walkers in well-separated lanes. Ground truth carries the
/// true box at every frame where the corresponding detection was emitted, so
/// detector dropouts are not charged against the tracker.
pub fn constant_velocity_scene(opts: &SceneOptions) -> (Vec<Detection>, Vec<GroundTruthEntry>) {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let noise = Normal::new(0.0, opts.noise_sigma.max(1e-9)).unwrap();
    let (box_w, box_h) = (40.0, 80.0);

    let agents: Vec<(f64, f64, f64)> = (0..opts.n_agents)
        .map(|i| {
            let y = 60.0 + 100.0 * i as f64;
            let x0 = 40.0 + (i as f64 * 53.0) % 300.0;
            let vx = 0.8 + 0.35 * i as f64;
            (x0, y, vx)
        })
        .collect();

    let mut dets = Vec::new();
    let mut gts = Vec::new();
    for frame in 1..=opts.n_frames {
        let t = (frame - 1) as f64;
        for (i, &(x0, y, vx)) in agents.iter().enumerate() {
            let dropped = rng.random::<f64>() < opts.drop_rate;
            let jitter = (
                if opts.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 },
                if opts.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 },
            );
            let base_score: f64 = rng.random_range(0.85..0.95);
            if dropped {
                continue;
            }
            let left = x0 + vx * t;
            let score = match &opts.occlusion {
                Some((agent, range)) if *agent == i && range.contains(&frame) => 0.3,
                _ => base_score,
            };
            dets.push(Detection {
                frame,
                bbox: BBox::new(left + jitter.0, y + jitter.1, box_w, box_h).unwrap(),
                score,
                class_id: PERSON_CLASS_ID,
            });
            gts.push(GroundTruthEntry {
                frame,
                track_id: i as u32 + 1,
                bbox: BBox::new(left, y, box_w, box_h).unwrap(),
                active: true,
            });
        }
    }
    (dets, gts)
}

// ---------------------------------------------------------------------------
// Synthetic daily sales series.

/// Two years of daily sales with a weekly profile, annual seasonality, and
/// additive noise; values are integers >= 1.
pub fn synthetic_sales(store: u32, item: u32, days: u64, seed: u64) -> Vec<SalesRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: f64 = rng.random_range(45.0..90.0);
    let weekly_amp: f64 = rng.random_range(0.3..0.5);
    let annual_amp: f64 = rng.random_range(0.15..0.3);
    let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let noise = Normal::new(0.0, rng.random_range(2.0..3.5)).unwrap();
    // Weekend-heavy shopping profile, Monday first.
    let weekday_shape = [-0.55, -0.35, -0.15, 0.05, 0.35, 1.0, 0.65];

    let start = chrono::NaiveDate::from_ymd_opt(2015, 1, 1).unwrap();
    (0..days)
        .map(|d| {
            let date = start + chrono::Days::new(d);
            let dow = chrono::Datelike::weekday(&date).num_days_from_monday() as usize;
            let doy = chrono::Datelike::ordinal(&date) as f64;
            let weekly = 1.0 + weekly_amp * weekday_shape[dow];
            let annual =
                1.0 + annual_amp * (std::f64::consts::TAU * doy / 365.0 + phase).sin();
            let value = base * weekly * annual + noise.sample(&mut rng);
            SalesRecord { date, store, item, sales: value.round().max(1.0) as u32 }
        })
        .collect()
}
