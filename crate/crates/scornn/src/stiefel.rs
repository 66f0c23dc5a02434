//! Multiplicative orthogonality maintenance, the drift comparator.
//!
//! This is the real-orthogonal variant of the full-capacity update: a skew
//! descent direction `B = g W^T - W g^T` followed by the Cayley-retraction
//! step `W <- (I + (lr/2) B)^-1 (I - (lr/2) B) W`. In exact arithmetic the
//! update stays on the orthogonal group; in floating point each step
//! multiplies in a little roundoff, and that drift is the quantity the
//! harness measures. No re-orthogonalization is ever applied here, on
//! purpose.

use rand::Rng;

use crate::cayley::{self, ScalingMatrix, SkewParams};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Scalar};
use crate::optim::{OptimizerKind, ParamGroup};

/// Orthogonal matrix maintained multiplicatively. Orthogonality is *not* an
/// invariant of this state; its decay is the point.
#[derive(Debug, Clone)]
pub struct StiefelState<T: Scalar = f64> {
    w: Matrix<T>,
    step: u64,
}

impl<T: Scalar> StiefelState<T> {
    pub fn new(w: Matrix<T>) -> Result<Self> {
        if !w.is_square() {
            return Err(Error::shape(
                "stiefel_state",
                format!("{}x{} is not square", w.rows(), w.cols()),
            ));
        }
        Ok(StiefelState { w, step: 0 })
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.w
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// Skew descent direction `B = g W^T - W g^T`. Skew-symmetry holds bitwise:
/// the matrix is formed as `M - M^T`.
pub fn descent_direction<T: Scalar>(g: &Matrix<T>, w: &Matrix<T>) -> Result<Matrix<T>> {
    if g.rows() != w.rows() || g.cols() != w.cols() || !w.is_square() {
        return Err(Error::shape(
            "descent_direction",
            format!("g {}x{} vs w {}x{}", g.rows(), g.cols(), w.rows(), w.cols()),
        ));
    }
    let m = g.matmul_nt(w)?;
    m.sub(&m.transpose())
}

/// One multiplicative update along the Cayley curve defined by the skew
/// direction `b`.
pub fn multiplicative_update<T: Scalar>(
    s: StiefelState<T>,
    b: &Matrix<T>,
    lr: f64,
) -> Result<StiefelState<T>> {
    let n = s.w.rows();
    if b.rows() != n || b.cols() != n {
        return Err(Error::shape(
            "multiplicative_update",
            format!("b {}x{} vs state {n}x{n}", b.rows(), b.cols()),
        ));
    }
    let half = T::from_f64(lr / 2.0);
    let scaled = b.scale(half);
    let i_plus = Matrix::identity(n).add(&scaled)?;
    let i_minus = Matrix::identity(n).sub(&scaled)?;
    let rhs = i_minus.matmul(&s.w)?;
    let w = i_plus.solve(&rhs)?;
    Ok(StiefelState {
        w,
        step: s.step + 1,
    })
}

/// `||W^T W - I||_F`, the measured deviation from orthogonality.
pub fn orthogonality_score<T: Scalar>(w: &Matrix<T>) -> T {
    debug_assert!(w.is_square());
    let n = w.rows();
    let gram = w.matmul_tn(w).expect("square input");
    gram.sub(&Matrix::identity(n)).expect("same shape").fro_norm()
}

/// One sampled point of the drift experiment.
#[derive(Debug, Clone, Copy)]
pub struct DriftPoint {
    pub step: u64,
    pub score_cayley: f64,
    pub score_multiplicative: f64,
}

/// Runs both maintenance schemes side by side on an identical synthetic
/// gradient stream and records the orthogonality score of each after every
/// step.
///
/// The gradient stream is drawn in `f64` and converted, so the single- and
/// double-precision instantiations see the same values. The Cayley side
/// converts each gradient through the transform gradient and takes an
/// RMSprop step on the packed parameter before reconstructing; the
/// multiplicative side projects it to a skew direction and applies the
/// retraction step.
pub fn drift_experiment<T: Scalar>(
    n: usize,
    steps: u64,
    lr: f64,
    seed: u64,
    rng_builder: impl FnOnce(u64) -> rand_chacha::ChaCha8Rng,
) -> Result<Vec<DriftPoint>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "drift experiment needs n >= 2, got {n}"
        )));
    }
    let mut rng = rng_builder(seed);
    let scaling = ScalingMatrix::new(n, n / 2)?;
    let angles: Vec<f64> = (0..n / 2)
        .map(|_| rng.gen_range(0.0..=std::f64::consts::FRAC_PI_2))
        .collect();
    let mut skew: SkewParams<T> = cayley::block_skew_from_angles(n, &angles)?;
    let mut w_cayley = cayley::scaled_cayley(&skew, &scaling)?;
    let mut multiplicative = StiefelState::new(w_cayley.clone())?;
    let mut group: ParamGroup<T> = ParamGroup::new("skew", OptimizerKind::RmsProp, lr)?;

    let mut points = Vec::with_capacity(steps as usize);
    for step in 1..=steps {
        let g: Matrix<T> =
            Matrix::from_fn(n, n, |_, _| T::from_f64(rng.gen_range(-1.0..1.0)));

        let d_skew = cayley::grad_skew(&g, &skew, &w_cayley, &scaling)?;
        w_cayley = crate::optim::step_skew(&mut group, &mut skew, &scaling, &d_skew)?;

        let b = descent_direction(&g, multiplicative.matrix())?;
        multiplicative = multiplicative_update(multiplicative, &b, lr)?;

        points.push(DriftPoint {
            step,
            score_cayley: orthogonality_score(&w_cayley).to_f64(),
            score_multiplicative: orthogonality_score(multiplicative.matrix()).to_f64(),
        });
    }
    Ok(points)
}

/// Mean of a score column over a window of points.
pub fn windowed_mean(points: &[DriftPoint], f: impl Fn(&DriftPoint) -> f64) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    points.iter().map(f).sum::<f64>() / points.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
        let v: Vec<f64> = (0..n * (n - 1) / 2)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let a = SkewParams::from_packed(n, v).unwrap();
        let d = ScalingMatrix::new(n, n / 3).unwrap();
        cayley::scaled_cayley(&a, &d).unwrap()
    }

    #[test]
    fn descent_direction_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let w = random_orthogonal(&mut rng, 5);
        let b = descent_direction(&Matrix::zeros(5, 5), &w).unwrap();
        assert_eq!(b.fro_norm(), 0.0);
    }

    #[test]
    fn descent_direction_cancels_for_gradient_equal_to_w() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let w = random_orthogonal(&mut rng, 6);
        let b = descent_direction(&w, &w).unwrap();
        assert_eq!(b.fro_norm(), 0.0);
    }

    #[test]
    fn descent_direction_is_bitwise_skew() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let w = random_orthogonal(&mut rng, 7);
        let g = Matrix::from_fn(7, 7, |_, _| rng.gen_range(-2.0..2.0));
        let b = descent_direction(&g, &w).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                assert_eq!(b[(i, j)].to_bits(), (-b[(j, i)]).to_bits());
            }
        }
    }

    #[test]
    fn zero_direction_keeps_w() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let w = random_orthogonal(&mut rng, 4);
        let s = StiefelState::new(w.clone()).unwrap();
        let s = multiplicative_update(s, &Matrix::zeros(4, 4), 0.1).unwrap();
        assert!(s.matrix().sub(&w).unwrap().fro_norm() < 1e-15);
        assert_eq!(s.step(), 1);
    }

    #[test]
    fn single_2x2_update_from_identity_is_cayley_rotation() {
        let beta = 0.3f64;
        let b = Matrix::from_vec(2, 2, vec![0.0, beta, -beta, 0.0]).unwrap();
        let lr = 0.2;
        let s = StiefelState::new(Matrix::identity(2)).unwrap();
        let s = multiplicative_update(s, &b, lr).unwrap();
        // closed form of (I + M)^-1 (I - M) for M = [[0, mu], [-mu, 0]]
        let mu = lr / 2.0 * beta;
        let denom = 1.0 + mu * mu;
        let expected = Matrix::from_vec(
            2,
            2,
            vec![
                (1.0 - mu * mu) / denom,
                -2.0 * mu / denom,
                2.0 * mu / denom,
                (1.0 - mu * mu) / denom,
            ],
        )
        .unwrap();
        assert!(s.matrix().sub(&expected).unwrap().fro_norm() < 1e-15);
    }

    #[test]
    fn orthogonality_score_values() {
        assert_eq!(orthogonality_score(&Matrix::<f64>::identity(5)), 0.0);
        for n in [2usize, 9, 16] {
            let w = Matrix::<f64>::identity(n).scale(2.0);
            let score = orthogonality_score(&w);
            assert!((score - 3.0 * (n as f64).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn fresh_cayley_reconstruction_scores_near_machine_precision() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let n = 512;
        let w = random_orthogonal(&mut rng, n);
        let score = orthogonality_score(&w);
        assert!(score < 1e-12 * n as f64, "score {score}");
    }

    #[test]
    fn single_step_from_orthogonal_keeps_double_precision_score() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        let n = 24;
        let w = random_orthogonal(&mut rng, n);
        let g = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let b = descent_direction(&g, &w).unwrap();
        let s = StiefelState::new(w).unwrap();
        let s = multiplicative_update(s, &b, 1e-3).unwrap();
        let score = orthogonality_score(s.matrix());
        assert!(score <= 1e-12 * n as f64, "score {score}");
    }

    #[test]
    fn drift_experiment_contrast_in_single_precision() {
        let points =
            drift_experiment::<f32>(16, 2000, 1e-3, 7, ChaCha8Rng::seed_from_u64).unwrap();
        assert_eq!(points.len(), 2000);
        let first = windowed_mean(&points[..10], |p| p.score_multiplicative);
        let last = windowed_mean(&points[1900..], |p| p.score_multiplicative);
        assert!(
            last > first,
            "multiplicative drift should accumulate: first {first}, last {last}"
        );
        // the reconstruction path does not accumulate
        let eps = f32::EPSILON as f64;
        let worst_cayley = points
            .iter()
            .map(|p| p.score_cayley)
            .fold(0.0f64, f64::max);
        assert!(worst_cayley <= 100.0 * eps * 16.0, "cayley {worst_cayley}");
    }

    #[test]
    fn drift_experiment_double_precision_cayley_bound() {
        let n = 16;
        let points =
            drift_experiment::<f64>(n, 500, 1e-3, 8, ChaCha8Rng::seed_from_u64).unwrap();
        for p in &points {
            assert!(p.score_cayley <= 1e-12 * n as f64);
        }
    }
}
