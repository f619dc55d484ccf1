//! Constant-velocity Kalman filter over bounding boxes, with width and height
//! tracked directly in the state rather than an aspect ratio, plus the affine
//! camera-motion correction applied between prediction and association.
//!
//! State layout: `(cx, cy, w, h, vcx, vcy, vw, vh)` in pixels and pixels/frame.
//! The frame step is fixed at dt = 1; variable frame rates are handled upstream
//! by frame indexing.

use nalgebra::{Matrix2, Matrix4, SMatrix, SVector, Vector2, Vector4};
use std::fmt;

pub type StateVector = SVector<f64, 8>;
pub type StateMatrix = SMatrix<f64, 8, 8>;
/// Measurement in (cx, cy, w, h) form.
pub type Measurement = [f64; 4];

/// Default position noise weight relative to box size.
pub const DEFAULT_SIGMA_P: f64 = 1.0 / 20.0;
/// Default velocity noise weight relative to box size.
pub const DEFAULT_SIGMA_V: f64 = 1.0 / 160.0;

const MIN_TRANSFORM_DET: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum KalmanError {
    NonPositiveSize { width: f64, height: f64 },
    SingularInnovation,
    SingularTransform,
}

impl fmt::Display for KalmanError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KalmanError::NonPositiveSize { width, height } => {
                write!(f, "measurement size must be positive, got {width}x{height}")
            }
            KalmanError::SingularInnovation => write!(f, "innovation covariance is singular"),
            KalmanError::SingularTransform => write!(f, "camera-motion transform is singular"),
        }
    }
}

impl std::error::Error for KalmanError {}

/// Filter state of one track: mean and covariance of the 8-dim box state.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: StateVector,
    pub covariance: StateMatrix,
}

impl KalmanState {
    /// The measured (cx, cy, w, h) part of the mean.
    pub fn measured(&self) -> Measurement {
        [self.mean[0], self.mean[1], self.mean[2], self.mean[3]]
    }
}

/// 2-D affine motion of the camera between consecutive frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTransform {
    pub linear: Matrix2<f64>,
    pub translation: Vector2<f64>,
}

impl AffineTransform {
    pub fn new(linear: Matrix2<f64>, translation: Vector2<f64>) -> Result<Self, KalmanError> {
        if linear.determinant().abs() <= MIN_TRANSFORM_DET {
            return Err(KalmanError::SingularTransform);
        }
        Ok(AffineTransform { linear, translation })
    }

    pub fn identity() -> Self {
        AffineTransform { linear: Matrix2::identity(), translation: Vector2::zeros() }
    }
}

/// dt = 1 constant-velocity transition: position components gain their velocity.
fn transition_matrix() -> StateMatrix {
    let mut f = StateMatrix::identity();
    for i in 0..4 {
        f[(i, i + 4)] = 1.0;
    }
    f
}

/// Size-relative noise standard deviations, evaluated at a given (w, h).
fn size_scaled_std(sigma_p: f64, sigma_v: f64, w: f64, h: f64) -> [f64; 8] {
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

/// Constant-velocity box filter with size-relative noise scales.
///
/// All operations are pure: they take a state in and return a new state, so
/// distinct tracks may be predicted and updated concurrently.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxMotionFilter {
    pub sigma_p: f64,
    pub sigma_v: f64,
}

impl Default for BoxMotionFilter {
    fn default() -> Self {
        BoxMotionFilter { sigma_p: DEFAULT_SIGMA_P, sigma_v: DEFAULT_SIGMA_V }
    }
}

impl BoxMotionFilter {
    pub fn new(sigma_p: f64, sigma_v: f64) -> Self {
        BoxMotionFilter { sigma_p, sigma_v }
    }

    /// Start a track from a first measurement: zero velocity, diagonal
    /// covariance built from the measurement scale.
    pub fn initiate(&self, z: Measurement) -> Result<KalmanState, KalmanError> {
        let [cx, cy, w, h] = z;
        if !(w > 0.0 && h > 0.0) {
            return Err(KalmanError::NonPositiveSize { width: w, height: h });
        }
        let mean = StateVector::from([cx, cy, w, h, 0.0, 0.0, 0.0, 0.0]);
        let base = size_scaled_std(self.sigma_p, self.sigma_v, w, h);
        let mut covariance = StateMatrix::zeros();
        for i in 0..8 {
            let std = if i < 4 { 2.0 * base[i] } else { 10.0 * base[i] };
            covariance[(i, i)] = std * std;
        }
        Ok(KalmanState { mean, covariance })
    }

    /// One frame of constant-velocity motion: mean <- F mean, P <- F P F' + Q,
    /// with Q evaluated at the incoming mean's size.
    pub fn predict(&self, state: &KalmanState) -> KalmanState {
        let (w, h) = (state.mean[2], state.mean[3]);
        let std = size_scaled_std(self.sigma_p, self.sigma_v, w, h);
        let mut process_noise = StateMatrix::zeros();
        for i in 0..8 {
            process_noise[(i, i)] = std[i] * std[i];
        }
        let f = transition_matrix();
        KalmanState {
            mean: f * state.mean,
            covariance: f * state.covariance * f.transpose() + process_noise,
        }
    }

    /// Standard correction with H = [I4 | 0], measurement noise evaluated at
    /// the predicted size. The posterior covariance is re-symmetrized.
    pub fn update(&self, state: &KalmanState, z: Measurement) -> Result<KalmanState, KalmanError> {
        let (w, h) = (state.mean[2], state.mean[3]);
        let std = size_scaled_std(self.sigma_p, self.sigma_v, w, h);
        let mut measurement_noise = Matrix4::zeros();
        for i in 0..4 {
            measurement_noise[(i, i)] = std[i] * std[i];
        }

        let mut observation = SMatrix::<f64, 4, 8>::zeros();
        for i in 0..4 {
            observation[(i, i)] = 1.0;
        }

        let projected = observation * state.covariance * observation.transpose()
            + measurement_noise;
        let chol = projected.cholesky().ok_or(KalmanError::SingularInnovation)?;
        // K = P H' S^-1 = (S^-1 H P)' since P and S are symmetric.
        let gain = chol.solve(&(observation * state.covariance)).transpose();

        let innovation = Vector4::from(z) - observation * state.mean;
        let mean = state.mean + gain * innovation;
        let posterior = (StateMatrix::identity() - gain * observation) * state.covariance;
        let covariance = (posterior + posterior.transpose()) * 0.5;
        Ok(KalmanState { mean, covariance })
    }
}

/// Apply a camera-motion transform to a predicted state: positions are mapped
/// affinely, velocities by the linear part, and box size by sqrt(|det|) so the
/// correction is identity for rotations and pure translations. The covariance
/// is conjugated by the induced 8x8 block transform.
pub fn apply_cmc(state: &KalmanState, t: &AffineTransform) -> Result<KalmanState, KalmanError> {
    let det = t.linear.determinant();
    if det.abs() <= MIN_TRANSFORM_DET {
        return Err(KalmanError::SingularTransform);
    }
    let scale = det.abs().sqrt();

    let mut block = StateMatrix::zeros();
    block.fixed_view_mut::<2, 2>(0, 0).copy_from(&t.linear);
    block[(2, 2)] = scale;
    block[(3, 3)] = scale;
    block.fixed_view_mut::<2, 2>(4, 4).copy_from(&t.linear);
    block[(6, 6)] = scale;
    block[(7, 7)] = scale;

    let mut mean = block * state.mean;
    mean[0] += t.translation[0];
    mean[1] += t.translation[1];
    let covariance = block * state.covariance * block.transpose();
    Ok(KalmanState { mean, covariance })
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn filter() -> BoxMotionFilter {
        BoxMotionFilter::default()
    }

    #[test]
    fn initiate_zero_velocity_diagonal_covariance() {
        let s = filter().initiate([10.0, 20.0, 5.0, 8.0]).unwrap();
        assert_eq!(s.mean.as_slice(), &[10.0, 20.0, 5.0, 8.0, 0.0, 0.0, 0.0, 0.0]);
        for i in 0..8 {
            for j in 0..8 {
                if i != j {
                    assert_eq!(s.covariance[(i, j)], 0.0);
                }
            }
            assert!(s.covariance[(i, i)] > 0.0);
        }
    }

    #[test]
    fn initiate_rejects_non_positive_size() {
        assert!(filter().initiate([0.0, 0.0, 0.0, 5.0]).is_err());
        assert!(filter().initiate([0.0, 0.0, 5.0, -2.0]).is_err());
    }

    #[test]
    fn predict_moves_position_by_velocity() {
        let mut s = filter().initiate([10.0, 20.0, 5.0, 8.0]).unwrap();
        s.mean[4] = 1.0;
        let p = filter().predict(&s);
        assert_eq!(p.mean[0], 11.0);
        assert_eq!(p.mean[1], 20.0);
        assert_eq!(p.mean[2], 5.0);
        assert_eq!(p.mean[3], 8.0);
    }

    #[test]
    fn predict_with_zero_velocity_keeps_position() {
        let s = filter().initiate([10.0, 20.0, 5.0, 8.0]).unwrap();
        let p = filter().predict(&s);
        assert_eq!(p.mean.fixed_rows::<4>(0), s.mean.fixed_rows::<4>(0));
    }

    #[test]
    fn update_with_zero_innovation_keeps_mean() {
        let s = filter().initiate([10.0, 20.0, 5.0, 8.0]).unwrap();
        let p = filter().predict(&s);
        let u = filter().update(&p, p.measured()).unwrap();
        for i in 0..8 {
            assert!((u.mean[i] - p.mean[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn update_contracts_measured_variances() {
        let s = filter().initiate([10.0, 20.0, 5.0, 8.0]).unwrap();
        let p = filter().predict(&s);
        let u = filter().update(&p, [11.0, 20.5, 5.5, 8.0]).unwrap();
        for i in 0..4 {
            assert!(u.covariance[(i, i)] <= p.covariance[(i, i)] + 1e-12);
        }
    }

    #[test]
    fn repeated_update_moves_mean_closer_to_measurement() {
        let s = filter().initiate([10.0, 20.0, 5.0, 8.0]).unwrap();
        let p = filter().predict(&s);
        let z = [14.0, 22.0, 6.0, 9.0];
        let dist = |st: &KalmanState| -> f64 {
            st.measured().iter().zip(z.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
        };
        let once = filter().update(&p, z).unwrap();
        let twice = filter().update(&once, z).unwrap();
        assert!(dist(&once) < dist(&p));
        assert!(dist(&twice) < dist(&once));
    }

    #[test]
    fn cmc_identity_keeps_state() {
        let s = filter().initiate([10.0, 20.0, 5.0, 8.0]).unwrap();
        let t = AffineTransform::identity();
        let out = apply_cmc(&s, &t).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn cmc_pure_translation_moves_position_only() {
        let mut s = filter().initiate([10.0, 20.0, 5.0, 8.0]).unwrap();
        s.mean[4] = 2.0;
        s.mean[5] = -1.0;
        let t = AffineTransform::new(Matrix2::identity(), Vector2::new(5.0, -3.0)).unwrap();
        let out = apply_cmc(&s, &t).unwrap();
        assert_eq!(out.mean[0], 15.0);
        assert_eq!(out.mean[1], 17.0);
        assert_eq!(out.mean[2], 5.0);
        assert_eq!(out.mean[3], 8.0);
        assert_eq!(out.mean[4], 2.0);
        assert_eq!(out.mean[5], -1.0);
        assert_eq!(out.covariance, s.covariance);
    }

    #[test]
    fn cmc_rotation_matches_dense_conjugation() {
        // 90 degree rotation; oracle conjugates with a hand-built dense block matrix.
        let mut s = filter().initiate([10.0, 20.0, 5.0, 8.0]).unwrap();
        s.mean[4] = 3.0;
        s.mean[5] = 1.5;
        let rot = Matrix2::new(0.0, -1.0, 1.0, 0.0);
        let t = AffineTransform::new(rot, Vector2::new(2.0, -4.0)).unwrap();
        let out = apply_cmc(&s, &t).unwrap();

        let mut m = [[0.0f64; 8]; 8];
        m[0][0] = 0.0;
        m[0][1] = -1.0;
        m[1][0] = 1.0;
        m[1][1] = 0.0;
        m[2][2] = 1.0;
        m[3][3] = 1.0;
        m[4][4] = 0.0;
        m[4][5] = -1.0;
        m[5][4] = 1.0;
        m[5][5] = 0.0;
        m[6][6] = 1.0;
        m[7][7] = 1.0;
        let mut mean = [0.0f64; 8];
        for i in 0..8 {
            for k in 0..8 {
                mean[i] += m[i][k] * s.mean[k];
            }
        }
        mean[0] += 2.0;
        mean[1] += -4.0;
        let mut cov = [[0.0f64; 8]; 8];
        for i in 0..8 {
            for j in 0..8 {
                let mut acc = 0.0;
                for k in 0..8 {
                    for l in 0..8 {
                        acc += m[i][k] * s.covariance[(k, l)] * m[j][l];
                    }
                }
                cov[i][j] = acc;
            }
        }
        for i in 0..8 {
            assert!((out.mean[i] - mean[i]).abs() < 1e-9);
            for j in 0..8 {
                assert!((out.covariance[(i, j)] - cov[i][j]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn singular_transform_rejected() {
        let s = filter().initiate([10.0, 20.0, 5.0, 8.0]).unwrap();
        let singular = AffineTransform {
            linear: Matrix2::new(1.0, 2.0, 2.0, 4.0),
            translation: Vector2::zeros(),
        };
        assert_eq!(apply_cmc(&s, &singular), Err(KalmanError::SingularTransform));
        assert!(AffineTransform::new(singular.linear, singular.translation).is_err());
    }

    #[test]
    fn noiseless_tracking_error_shrinks() {
        // Constant-velocity target observed exactly; positional error must fall
        // off monotonically in windowed RMS.
        let f = filter();
        let (x0, y0, vx, vy) = (100.0, 50.0, 3.0, -1.5);
        let truth = |k: usize| [x0 + vx * k as f64, y0 + vy * k as f64, 40.0, 80.0];
        let mut state = f.initiate(truth(0)).unwrap();
        let mut errors = Vec::new();
        for k in 1..=50 {
            state = f.predict(&state);
            state = f.update(&state, truth(k)).unwrap();
            let t = truth(k);
            let err = ((state.mean[0] - t[0]).powi(2) + (state.mean[1] - t[1]).powi(2)).sqrt();
            errors.push(err);
        }
        let rms = |w: &[f64]| (w.iter().map(|e| e * e).sum::<f64>() / w.len() as f64).sqrt();
        let windows: Vec<f64> = errors.chunks(10).map(rms).collect();
        for pair in windows.windows(2) {
            assert!(pair[1] < pair[0] + 1e-12, "windowed RMS must not grow: {windows:?}");
        }
        assert!(*errors.last().unwrap() < 0.05);
    }

    #[test]
    fn covariance_stays_symmetric_under_random_steps() {
        let f = filter();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut state = f.initiate([200.0, 100.0, 30.0, 60.0]).unwrap();
        for _ in 0..300 {
            state = f.predict(&state);
            if rng.random::<f64>() < 0.7 {
                let z = [
                    state.mean[0] + rng.random_range(-3.0..3.0),
                    state.mean[1] + rng.random_range(-3.0..3.0),
                    (state.mean[2] + rng.random_range(-1.0..1.0)).max(5.0),
                    (state.mean[3] + rng.random_range(-1.0..1.0)).max(5.0),
                ];
                state = f.update(&state, z).unwrap();
            }
            for i in 0..8 {
                assert!(state.covariance[(i, i)] >= 0.0);
                for j in 0..8 {
                    assert!((state.covariance[(i, j)] - state.covariance[(j, i)]).abs() < 1e-9);
                }
            }
        }
    }
}
