//! Scaled Cayley parametrization of the orthogonal group.
//!
//! An orthogonal recurrent matrix is stored as the `n(n-1)/2` free entries of
//! a skew-symmetric matrix `A` plus a fixed diagonal of signs `D`, and
//! materialized as `W = (I + A)^-1 (I - A) D`. Because the skew matrices are
//! closed under addition, plain gradient steps on the packed entries keep `W`
//! orthogonal to machine precision, with no retraction or re-orthogonalization.
//!
//! The packed vector `v` lists the strictly upper-triangular entries of `A`
//! row by row, so `v = [s]` at `n = 2` materializes to `[[0, s], [-s, 0]]`.
//! This order is load-bearing: checkpoints and gradient checks both assume it.

use std::io::{Read, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Scalar};

/// Packed skew-symmetric parameter: the free entries of `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewParams<T: Scalar = f64> {
    n: usize,
    v: Vec<T>,
}

impl<T: Scalar> SkewParams<T> {
    /// All-zero parameter of dimension `n`.
    pub fn zeros(n: usize) -> Self {
        SkewParams {
            n,
            v: vec![T::zero(); n * (n - 1) / 2],
        }
    }

    pub fn from_packed(n: usize, v: Vec<T>) -> Result<Self> {
        if v.len() != n * (n - 1) / 2 {
            return Err(Error::shape(
                "skew_from_packed",
                format!("{} entries for dimension {n}", v.len()),
            ));
        }
        if !v.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite {
                context: "skew parameter construction".into(),
            });
        }
        Ok(SkewParams { n, v })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn packed(&self) -> &[T] {
        &self.v
    }

    pub fn packed_mut(&mut self) -> &mut [T] {
        &mut self.v
    }

    /// Materializes the full `n x n` matrix. `A^T = -A` holds bitwise: the
    /// lower triangle is the exact negation of the upper, and the diagonal
    /// is zero by construction.
    pub fn materialize(&self) -> Matrix<T> {
        let n = self.n;
        let mut a = Matrix::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                a[(i, j)] = self.v[k];
                a[(j, i)] = -self.v[k];
                k += 1;
            }
        }
        a
    }

    /// Inverse of [`materialize`](Self::materialize): reads the strictly
    /// upper triangle in canonical row-major order.
    pub fn pack(a: &Matrix<T>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::shape(
                "skew_pack",
                format!("{}x{} is not square", a.rows(), a.cols()),
            ));
        }
        let n = a.rows();
        let mut v = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                v.push(a[(i, j)]);
            }
        }
        Ok(SkewParams { n, v })
    }
}

/// The fixed diagonal `D` of `+1`/`-1` entries. `rho` counts the `-1`s; they
/// occupy the first `rho` positions, which any other placement is equivalent
/// to up to a permutation similarity absorbed into `A`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScalingMatrix {
    n: usize,
    rho: usize,
    signs: Vec<i8>,
}

impl ScalingMatrix {
    pub fn new(n: usize, rho: usize) -> Result<Self> {
        if rho > n {
            return Err(Error::InvalidArgument(format!(
                "rho = {rho} exceeds dimension n = {n}"
            )));
        }
        let signs = (0..n).map(|i| if i < rho { -1 } else { 1 }).collect();
        Ok(ScalingMatrix { n, rho, signs })
    }

    pub fn from_signs(signs: Vec<i8>) -> Result<Self> {
        if !signs.iter().all(|&s| s == 1 || s == -1) {
            return Err(Error::InvalidArgument(
                "scaling diagonal entries must be +1 or -1".into(),
            ));
        }
        let n = signs.len();
        let rho = signs.iter().filter(|&&s| s == -1).count();
        Ok(ScalingMatrix { n, rho, signs })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rho(&self) -> usize {
        self.rho
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn diag<T: Scalar>(&self) -> Vec<T> {
        self.signs
            .iter()
            .map(|&s| if s > 0 { T::one() } else { -T::one() })
            .collect()
    }

    pub fn to_matrix<T: Scalar>(&self) -> Matrix<T> {
        let mut m = Matrix::zeros(self.n, self.n);
        for (i, d) in self.diag::<T>().into_iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }
}

/// Forward transform `W = (I + A)^-1 (I - A) D`.
///
/// `I + A` is nonsingular for every skew `A` (its spectrum is `1 + i*mu`),
/// so a singularity error out of this function indicates corrupted input.
pub fn scaled_cayley<T: Scalar>(a: &SkewParams<T>, d: &ScalingMatrix) -> Result<Matrix<T>> {
    if a.dim() != d.dim() {
        return Err(Error::shape(
            "scaled_cayley",
            format!("skew dim {} vs scaling dim {}", a.dim(), d.dim()),
        ));
    }
    let n = a.dim();
    let am = a.materialize();
    let i_plus = Matrix::identity(n).add(&am)?;
    let i_minus = Matrix::identity(n).sub(&am)?;
    let z = i_plus.solve(&i_minus)?;
    z.scale_columns(&d.diag())
}

/// Inverse transform: recovers `A = (I - WD)(I + WD)^-1` and packs it from
/// the upper triangle, so the result is exactly skew even when `w` is only
/// numerically orthogonal.
///
/// Fails with a singularity error when `WD` has a `-1` eigenvalue, i.e. when
/// `d` is not a valid scaling for this `w`.
pub fn inverse_scaled_cayley<T: Scalar>(
    w: &Matrix<T>,
    d: &ScalingMatrix,
) -> Result<SkewParams<T>> {
    if !w.is_square() || w.rows() != d.dim() {
        return Err(Error::shape(
            "inverse_scaled_cayley",
            format!("{}x{} vs scaling dim {}", w.rows(), w.cols(), d.dim()),
        ));
    }
    let n = w.rows();
    let z = w.scale_columns(&d.diag())?;
    let i_plus = Matrix::identity(n).add(&z)?;
    let i_minus = Matrix::identity(n).sub(&z)?;
    // A (I + Z) = (I - Z)  =>  (I + Z)^T A^T = (I - Z)^T
    let at = i_plus.transpose().solve(&i_minus.transpose())?;
    SkewParams::pack(&at.transpose())
}

/// Gradient of a loss through the transform: given `G = dL/dW` at
/// `w = scaled_cayley(a, d)`, returns the packed gradient of `L` with
/// respect to the free entries of `A`.
///
/// The materialized gradient is `V^T - V` with
/// `V = (I + A)^-T G (D + W^T)`; forming that difference keeps it exactly
/// skew for any `G`, including non-symmetric ones. The `(I + A)^-T`
/// application is a transposed LU solve, never an explicit inverse.
pub fn grad_skew<T: Scalar>(
    dldw: &Matrix<T>,
    a: &SkewParams<T>,
    w: &Matrix<T>,
    d: &ScalingMatrix,
) -> Result<SkewParams<T>> {
    let n = a.dim();
    if dldw.rows() != n || dldw.cols() != n || w.rows() != n || w.cols() != n || d.dim() != n {
        return Err(Error::shape(
            "grad_skew",
            format!(
                "dims dLdW {}x{}, W {}x{}, skew {}, scaling {}",
                dldw.rows(),
                dldw.cols(),
                w.rows(),
                w.cols(),
                n,
                d.dim()
            ),
        ));
    }
    // D + W^T
    let mut d_plus_wt = w.transpose();
    for (i, dv) in d.diag::<T>().into_iter().enumerate() {
        d_plus_wt[(i, i)] += dv;
    }
    let rhs = dldw.matmul(&d_plus_wt)?;
    let i_plus = Matrix::identity(n).add(&a.materialize())?;
    let v = i_plus.lu()?.solve_transposed(&rhs)?;
    // packed (V^T - V) upper triangle: entry (i, j) is V[j][i] - V[i][j]
    let mut packed = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            packed.push(v[(j, i)] - v[(i, j)]);
        }
    }
    Ok(SkewParams { n, v: packed })
}

/// Builds the block-diagonal `A` whose Cayley transform has eigenvalues
/// `exp(±i*t_j)`: zero everywhere except 2x2 blocks `[[0, s_j], [-s_j, 0]]`
/// with `s_j = sqrt((1 - cos t_j)/(1 + cos t_j))`. For odd `n` the trailing
/// 1x1 block stays zero.
pub fn block_skew_from_angles<T: Scalar>(n: usize, angles: &[f64]) -> Result<SkewParams<T>> {
    if angles.len() != n / 2 {
        return Err(Error::InvalidArgument(format!(
            "expected {} block angles for n = {n}, got {}",
            n / 2,
            angles.len()
        )));
    }
    let mut a = Matrix::<T>::zeros(n, n);
    for (j, &t) in angles.iter().enumerate() {
        let s = ((1.0 - t.cos()) / (1.0 + t.cos())).sqrt();
        a[(2 * j, 2 * j + 1)] = T::from_f64(s);
        a[(2 * j + 1, 2 * j)] = T::from_f64(-s);
    }
    SkewParams::pack(&a)
}

/// Initializer: block-diagonal `A` with rotation angles sampled uniformly
/// from `[0, pi/2]` (so every `s_j` lies in `[0, 1]`), paired with the
/// scaling diagonal for the requested `rho`.
pub fn init_block_diag<T: Scalar>(
    n: usize,
    rho: usize,
    rng: &mut impl Rng,
) -> Result<(SkewParams<T>, ScalingMatrix)> {
    let d = ScalingMatrix::new(n, rho)?;
    let angles: Vec<f64> = (0..n / 2)
        .map(|_| rng.gen_range(0.0..=std::f64::consts::FRAC_PI_2))
        .collect();
    let a = block_skew_from_angles::<T>(n, &angles)?;
    debug_assert!(a.packed().iter().copied().all(|s: T| {
        let s = Scalar::to_f64(s);
        (-1e-15..=1.0 + 1e-15).contains(&s)
    }));
    Ok((a, d))
}

/// The three-layer presentation of `h -> W h`: scale by `D`, apply `I - A`,
/// then solve with `I + A`. Takes column-stacked states (`h` is `n x k`).
/// Training uses the cached `W` directly; this form exists to be checked
/// equal to it.
pub fn recurrent_three_layer<T: Scalar>(
    a: &SkewParams<T>,
    d: &ScalingMatrix,
    h: &Matrix<T>,
) -> Result<Matrix<T>> {
    let n = a.dim();
    if h.rows() != n || d.dim() != n {
        return Err(Error::shape(
            "recurrent_three_layer",
            format!("state rows {} vs dim {n}", h.rows()),
        ));
    }
    let diag = d.diag::<T>();
    let mut h1 = h.clone();
    for i in 0..n {
        let s = diag[i];
        for v in h1.row_mut(i) {
            *v *= s;
        }
    }
    let am = a.materialize();
    let h2 = h1.sub(&am.matmul(&h1)?)?;
    Matrix::identity(n).add(&am)?.solve(&h2)
}

/// Serializes `(SkewParams, ScalingMatrix)` in the canonical wire order:
/// dimension and rho as little-endian u64, then the packed entries as
/// little-endian f64 and the signs as little-endian i64.
pub fn write_skew_record(
    out: &mut impl Write,
    a: &SkewParams<f64>,
    d: &ScalingMatrix,
) -> Result<()> {
    if a.dim() != d.dim() {
        return Err(Error::shape(
            "write_skew_record",
            format!("skew dim {} vs scaling dim {}", a.dim(), d.dim()),
        ));
    }
    out.write_all(&(a.dim() as u64).to_le_bytes())?;
    out.write_all(&(d.rho() as u64).to_le_bytes())?;
    for &x in a.packed() {
        out.write_all(&x.to_le_bytes())?;
    }
    for &s in d.signs() {
        out.write_all(&(s as i64).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_skew_record(input: &mut impl Read) -> Result<(SkewParams<f64>, ScalingMatrix)> {
    let mut buf8 = [0u8; 8];
    input.read_exact(&mut buf8)?;
    let n = u64::from_le_bytes(buf8) as usize;
    input.read_exact(&mut buf8)?;
    let rho = u64::from_le_bytes(buf8) as usize;
    if n == 0 || rho > n {
        return Err(Error::Checkpoint(format!(
            "invalid skew record header: n = {n}, rho = {rho}"
        )));
    }
    let mut v = Vec::with_capacity(n * (n - 1) / 2);
    for _ in 0..n * (n - 1) / 2 {
        input.read_exact(&mut buf8)?;
        v.push(f64::from_le_bytes(buf8));
    }
    let mut signs = Vec::with_capacity(n);
    for _ in 0..n {
        input.read_exact(&mut buf8)?;
        let s = i64::from_le_bytes(buf8);
        if s != 1 && s != -1 {
            return Err(Error::Checkpoint(format!("invalid sign entry {s}")));
        }
        signs.push(s as i8);
    }
    let d = ScalingMatrix::from_signs(signs)?;
    if d.rho() != rho {
        return Err(Error::Checkpoint(format!(
            "sign vector has {} negative entries, header says {rho}",
            d.rho()
        )));
    }
    Ok((SkewParams::from_packed(n, v)?, d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_skew_params(rng: &mut ChaCha8Rng, n: usize, bound: f64) -> SkewParams {
        let v = (0..n * (n - 1) / 2)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        SkewParams::from_packed(n, v).unwrap()
    }

    fn random_scaling(rng: &mut ChaCha8Rng, n: usize) -> ScalingMatrix {
        ScalingMatrix::new(n, rng.gen_range(0..=n)).unwrap()
    }

    fn ortho_dev(w: &Matrix) -> f64 {
        let n = w.rows();
        w.matmul_tn(w)
            .unwrap()
            .sub(&Matrix::identity(n))
            .unwrap()
            .fro_norm()
    }

    #[test]
    fn materialize_zero_and_canonical_order() {
        let z = SkewParams::<f64>::zeros(3).materialize();
        assert_eq!(z.fro_norm(), 0.0);

        let a = SkewParams::from_packed(2, vec![0.7]).unwrap().materialize();
        assert_eq!(a[(0, 0)], 0.0);
        assert_eq!(a[(0, 1)], 0.7);
        assert_eq!(a[(1, 0)], -0.7);
        assert_eq!(a[(1, 1)], 0.0);
    }

    proptest! {
        #[test]
        fn materialize_is_bitwise_skew(n in 2usize..9, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_skew_params(&mut rng, n, 3.0);
            let a = p.materialize();
            for i in 0..n {
                prop_assert_eq!(a[(i, i)].to_bits(), 0f64.to_bits());
                for j in 0..n {
                    prop_assert_eq!(a[(i, j)].to_bits(), (-a[(j, i)]).to_bits());
                }
            }
        }

        #[test]
        fn pack_materialize_round_trip(n in 2usize..9, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_skew_params(&mut rng, n, 3.0);
            let back = SkewParams::pack(&p.materialize()).unwrap();
            prop_assert_eq!(back, p);
        }
    }

    #[test]
    fn scaled_cayley_of_zero_is_scaling() {
        let a = SkewParams::zeros(4);
        let d = ScalingMatrix::new(4, 2).unwrap();
        let w = scaled_cayley(&a, &d).unwrap();
        assert_eq!(w, d.to_matrix());
    }

    #[test]
    fn scaled_cayley_2x2_rotation() {
        let a = SkewParams::from_packed(2, vec![1.0]).unwrap();
        let d = ScalingMatrix::new(2, 0).unwrap();
        let w = scaled_cayley(&a, &d).unwrap();
        let expected = Matrix::from_vec(2, 2, vec![0.0, -1.0, 1.0, 0.0]).unwrap();
        assert!(w.sub(&expected).unwrap().fro_norm() < 1e-15);
    }

    #[test]
    fn scaled_cayley_orthogonality_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [2usize, 4, 6, 10, 32] {
            for _ in 0..5 {
                let a = random_skew_params(&mut rng, n, 1.0);
                let d = random_scaling(&mut rng, n);
                let w = scaled_cayley(&a, &d).unwrap();
                let dev = ortho_dev(&w);
                assert!(dev <= 1e-12 * n as f64, "n={n} dev={dev}");
            }
        }
    }

    #[test]
    fn inverse_of_scaling_is_zero() {
        for (n, rho) in [(3usize, 0usize), (4, 2), (5, 5)] {
            let d = ScalingMatrix::new(n, rho).unwrap();
            let a = inverse_scaled_cayley(&d.to_matrix::<f64>(), &d).unwrap();
            assert_eq!(a.materialize().fro_norm(), 0.0);
        }
    }

    #[test]
    fn inverse_2x2_recovers_unit_entry() {
        let w = Matrix::from_vec(2, 2, vec![0.0, -1.0, 1.0, 0.0]).unwrap();
        let d = ScalingMatrix::new(2, 0).unwrap();
        let a = inverse_scaled_cayley(&w, &d).unwrap();
        assert!((a.packed()[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn round_trip_forward_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for n in [2usize, 4, 6, 10] {
            for _ in 0..10 {
                let a = random_skew_params(&mut rng, n, 1.0);
                let d = random_scaling(&mut rng, n);
                let w = scaled_cayley(&a, &d).unwrap();
                let back = inverse_scaled_cayley(&w, &d).unwrap();
                let max_err = a
                    .packed()
                    .iter()
                    .zip(back.packed())
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max);
                assert!(max_err < 1e-10, "n={n} max_err={max_err}");
            }
        }
    }

    #[test]
    fn inverse_fails_for_wrong_scaling() {
        // W = -I has eigenvalue -1; with D = I the transform cannot reach it.
        let w = Matrix::identity(2).scale(-1.0);
        let d = ScalingMatrix::new(2, 0).unwrap();
        assert!(matches!(
            inverse_scaled_cayley(&w, &d),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn near_minus_one_eigenvalue_needs_unbounded_entry_without_scaling() {
        let alpha = 0.99999f64;
        let s = (1.0 - alpha * alpha).sqrt();
        let w = Matrix::from_vec(2, 2, vec![-alpha, -s, s, -alpha]).unwrap();

        let unscaled = ScalingMatrix::new(2, 0).unwrap();
        let a = inverse_scaled_cayley(&w, &unscaled).unwrap();
        assert!((a.packed()[0].abs() - 447.212).abs() < 1e-2);

        let reflected = ScalingMatrix::new(2, 2).unwrap();
        let a = inverse_scaled_cayley(&w, &reflected).unwrap();
        assert!(a.packed()[0].abs() <= 1.0);
        let back = scaled_cayley(&a, &reflected).unwrap();
        assert!(back.sub(&w).unwrap().fro_norm() < 1e-10);
    }

    #[test]
    fn grad_skew_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = random_skew_params(&mut rng, 5, 1.0);
        let d = random_scaling(&mut rng, 5);
        let w = scaled_cayley(&a, &d).unwrap();
        let g = grad_skew(&Matrix::zeros(5, 5), &a, &w, &d).unwrap();
        assert!(g.packed().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn grad_skew_output_is_skew_for_arbitrary_upstream() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let a = random_skew_params(&mut rng, 6, 1.0);
        let d = random_scaling(&mut rng, 6);
        let w = scaled_cayley(&a, &d).unwrap();
        let g = Matrix::from_fn(6, 6, |_, _| rng.gen_range(-2.0..2.0));
        let da = grad_skew(&g, &a, &w, &d).unwrap().materialize();
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(da[(i, j)].to_bits(), (-da[(j, i)]).to_bits());
            }
        }
    }

    /// Finite-difference oracle for the transform gradient: the scalar test
    /// functional is L(W) = <G, W>, whose dL/dW is G itself.
    fn fd_check_grad_skew(n: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_skew_params(&mut rng, n, 1.0);
        let d = random_scaling(&mut rng, n);
        let w = scaled_cayley(&a, &d).unwrap();
        let g = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let analytic = grad_skew(&g, &a, &w, &d).unwrap();

        let inner = |m: &Matrix| -> f64 {
            m.iter().zip(g.iter()).map(|(x, y)| x * y).sum()
        };
        let step = 1e-6;
        let mut max_rel = 0.0f64;
        for k in 0..a.packed().len() {
            let mut plus = a.clone();
            plus.packed_mut()[k] += step;
            let mut minus = a.clone();
            minus.packed_mut()[k] -= step;
            let lp = inner(&scaled_cayley(&plus, &d).unwrap());
            let lm = inner(&scaled_cayley(&minus, &d).unwrap());
            let numeric = (lp - lm) / (2.0 * step);
            let got = analytic.packed()[k];
            let rel = (got - numeric).abs() / got.abs().max(numeric.abs()).max(1e-6);
            max_rel = max_rel.max(rel);
        }
        max_rel
    }

    #[test]
    fn grad_skew_matches_finite_differences() {
        for n in [2usize, 4, 6, 10] {
            for seed in 0..10u64 {
                let rel = fd_check_grad_skew(n, 100 + seed);
                assert!(rel < 1e-6, "n={n} seed={seed} rel={rel}");
            }
        }
    }

    #[test]
    fn block_init_zero_angles_gives_scaling() {
        let a = block_skew_from_angles::<f64>(6, &[0.0; 3]).unwrap();
        assert_eq!(a.materialize().fro_norm(), 0.0);
        let d = ScalingMatrix::new(6, 3).unwrap();
        let w = scaled_cayley(&a, &d).unwrap();
        assert_eq!(w, d.to_matrix());
    }

    #[test]
    fn block_init_right_angle_gives_quarter_rotation() {
        let a = block_skew_from_angles::<f64>(2, &[std::f64::consts::FRAC_PI_2]).unwrap();
        assert!((a.packed()[0] - 1.0).abs() < 1e-15);
        let d = ScalingMatrix::new(2, 0).unwrap();
        let w = scaled_cayley(&a, &d).unwrap();
        let quarter = Matrix::from_vec(2, 2, vec![0.0, -1.0, 1.0, 0.0]).unwrap();
        assert!(w.sub(&quarter).unwrap().fro_norm() < 1e-14);
    }

    #[test]
    fn block_init_blocks_are_rotations_with_expected_angles() {
        let angles = [0.3f64, 1.1, 0.7, 1.5];
        let n = 8;
        let a = block_skew_from_angles::<f64>(n, &angles).unwrap();
        let d = ScalingMatrix::new(n, 0).unwrap();
        let w = scaled_cayley(&a, &d).unwrap();
        for (j, &t) in angles.iter().enumerate() {
            let (r, c) = (2 * j, 2 * j);
            let det = w[(r, c)] * w[(r + 1, c + 1)] - w[(r, c + 1)] * w[(r + 1, c)];
            let trace = w[(r, c)] + w[(r + 1, c + 1)];
            assert!((det - 1.0).abs() < 1e-12);
            assert!((trace - 2.0 * t.cos()).abs() < 1e-12);
        }
        // off-block entries stay zero
        for i in 0..n {
            for j in 0..n {
                if i / 2 != j / 2 {
                    assert!(w[(i, j)].abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn init_block_diag_odd_dimension_and_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let (a, d) = init_block_diag::<f64>(7, 2, &mut rng).unwrap();
        assert_eq!(d.signs(), &[-1, -1, 1, 1, 1, 1, 1]);
        let am = a.materialize();
        // trailing 1x1 block: last row and column are zero
        for i in 0..7 {
            assert_eq!(am[(6, i)], 0.0);
            assert_eq!(am[(i, 6)], 0.0);
        }
        assert!(a.packed().iter().all(|&s| (0.0..=1.0).contains(&s) || s == 0.0));
        assert!(init_block_diag::<f64>(4, 5, &mut rng).is_err());
    }

    #[test]
    fn three_layer_form_matches_cached_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let a = random_skew_params(&mut rng, 9, 1.0);
        let d = random_scaling(&mut rng, 9);
        let w = scaled_cayley(&a, &d).unwrap();
        let h = Matrix::from_fn(9, 3, |_, _| rng.gen_range(-1.0..1.0));
        let layered = recurrent_three_layer(&a, &d, &h).unwrap();
        let direct = w.matmul(&h).unwrap();
        let rel = layered.sub(&direct).unwrap().fro_norm() / direct.fro_norm();
        assert!(rel < 1e-13);
    }

    #[test]
    fn skew_record_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a = random_skew_params(&mut rng, 6, 1.0);
        let d = ScalingMatrix::new(6, 4).unwrap();
        let mut buf = Vec::new();
        write_skew_record(&mut buf, &a, &d).unwrap();
        assert_eq!(buf.len(), 8 + 8 + 15 * 8 + 6 * 8);
        let (a2, d2) = read_skew_record(&mut buf.as_slice()).unwrap();
        assert_eq!(a, a2);
        assert_eq!(d, d2);
    }
}
