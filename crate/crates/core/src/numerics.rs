//! Small dense complex linear algebra for the backhaul solver.
//!
//! Everything the precoder computation needs from matrices goes through the
//! handful of functions here: Cholesky-based solves against Hermitian
//! positive definite (HPD) matrices, the HPD inverse square root (via the
//! Hermitian eigendecomposition) and the quadratic form `h^H A^-1 h`.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::{CVector, Complex64, Error, Result};

/// Relative Hermitian-symmetry tolerance, measured against the largest entry.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Dense complex matrix known to satisfy `A = A^H`.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(DMatrix<Complex64>);

impl HermitianMatrix {
    /// Checks symmetry and stores the exactly symmetrized matrix `(A + A^H) / 2`.
    pub fn new(a: DMatrix<Complex64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch { expected: a.nrows(), found: a.ncols() });
        }
        let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let adj = a.adjoint();
        let asym = a.iter().zip(adj.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        if asym > HERMITIAN_TOL * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::NotHermitian { asymmetry: asym / scale });
        }
        Ok(Self((a + adj).scale(0.5)))
    }

    /// `scale * I`.
    pub fn scaled_identity(dim: usize, scale: f64) -> Self {
        Self(DMatrix::from_diagonal_element(dim, dim, Complex64::new(scale, 0.0)))
    }

    /// `scale * h h^H`.
    pub fn outer(h: &CVector, scale: f64) -> Self {
        Self((h * h.adjoint()).scale(scale))
    }

    /// Adds `weight * h h^H` in place.
    pub fn add_outer(&mut self, h: &CVector, weight: f64) {
        self.0.gerc(Complex64::new(weight, 0.0), h, h, Complex64::new(1.0, 0.0));
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.0
    }

    /// Real trace.
    pub fn trace(&self) -> f64 {
        self.0.diagonal().iter().map(|z| z.re).sum()
    }

    /// Real eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.0.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// `h^H A h`, real for Hermitian `A`.
    pub fn sandwich(&self, h: &CVector) -> f64 {
        h.dotc(&(&self.0 * h)).re
    }
}

/// Cholesky factor of an HPD matrix, reusable across several right-hand sides.
pub struct HpdFactor {
    chol: Cholesky<Complex64, Dyn>,
}

impl HpdFactor {
    pub fn new(a: &HermitianMatrix) -> Result<Self> {
        let chol = Cholesky::new(a.0.clone()).ok_or(Error::NotPositiveDefinite)?;
        // a negative pivot comes back as a complex root with |im| >= re
        if chol.l_dirty().diagonal().iter().any(|d| !(d.re > 0.0) || !d.re.is_finite() || d.im.abs() >= d.re) {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self { chol })
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn solve(&self, b: &CVector) -> Result<CVector> {
        if b.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: b.len() });
        }
        Ok(self.chol.solve(b))
    }

    /// `h^H A^-1 h` evaluated as `||L^-1 h||^2`, which is real and
    /// nonnegative by construction.
    pub fn quad_form(&self, h: &CVector) -> Result<f64> {
        if h.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: h.len() });
        }
        let y = self.chol.l_dirty().solve_lower_triangular(h).ok_or(Error::NotPositiveDefinite)?;
        Ok(y.norm_squared())
    }

    /// `ln det A`.
    pub fn ln_det(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|d| d.re.ln()).sum::<f64>()
    }
}

/// Solves `A x = b` for HPD `A`.
pub fn hpd_solve(a: &HermitianMatrix, b: &CVector) -> Result<CVector> {
    if a.dim() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: b.len() });
    }
    HpdFactor::new(a)?.solve(b)
}

/// Hermitian `B` with `B A B = I`, from the eigendecomposition of `A`.
pub fn hpd_inv_sqrt(a: &HermitianMatrix) -> Result<HermitianMatrix> {
    let eig = a.0.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) || eig.eigenvalues.iter().any(|&l| !(l > max * f64::EPSILON * a.dim() as f64) || !l.is_finite()) {
        return Err(Error::NotPositiveDefinite);
    }
    let v = &eig.eigenvectors;
    let scales = eig.eigenvalues.map(|l| Complex64::new(1.0 / l.sqrt(), 0.0));
    let mut scaled = v.clone();
    for (mut col, s) in scaled.column_iter_mut().zip(scales.iter()) {
        col *= *s;
    }
    let b = &scaled * v.adjoint();
    // symmetrize away rounding
    Ok(HermitianMatrix((&b + b.adjoint()).scale(0.5)))
}

/// `h^H A^-1 h` for HPD `A`.
pub fn quad_form(h: &CVector, a: &HermitianMatrix) -> Result<f64> {
    if a.dim() != h.len() {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: h.len() });
    }
    HpdFactor::new(a)?.quad_form(h)
}

/// Checks that an explicitly complex quadratic form value is real up to
/// `1e-12` relative and returns its real part.
pub fn real_part_checked(z: Complex64) -> Result<f64> {
    if z.im.abs() > 1e-12 * z.re.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::ComplexQuadForm { real: z.re, imag: z.im });
    }
    Ok(z.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_cvec(rng: &mut impl Rng, n: usize) -> CVector {
        DVector::from_fn(n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    /// `G G^H + shift I` for a random square `G`.
    fn random_hpd(rng: &mut impl Rng, n: usize, shift: f64) -> HermitianMatrix {
        let g = DMatrix::from_fn(n, n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let a = &g * g.adjoint() + DMatrix::from_diagonal_element(n, n, c(shift, 0.0));
        HermitianMatrix::new(a).unwrap()
    }

    fn max_abs(m: &DMatrix<Complex64>) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn solve_scaled_identity() {
        let s2 = 2e-14;
        let a = HermitianMatrix::scaled_identity(3, s2);
        let h = DVector::from_vec(vec![c(1e-6, 2e-6), c(-3e-7, 0.0), c(0.0, 5e-7)]);
        let x = hpd_solve(&a, &h).unwrap();
        for (xi, hi) in x.iter().zip(h.iter()) {
            assert!((xi - hi / s2).norm() <= 1e-14 * (hi / s2).norm());
        }
        let id = HermitianMatrix::scaled_identity(3, 1.0);
        assert_eq!(hpd_solve(&id, &h).unwrap(), h);
    }

    #[test]
    fn solve_random_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_hpd(&mut rng, 4, 0.1);
        let b = random_cvec(&mut rng, 4);
        let x = hpd_solve(&a, &b).unwrap();
        let r = a.as_matrix() * &x - &b;
        assert!(r.norm() <= 1e-10 * b.norm());
    }

    #[test]
    fn solve_errors_are_distinct() {
        let a = HermitianMatrix::scaled_identity(3, 1.0);
        let b = DVector::from_element(2, c(1.0, 0.0));
        assert!(matches!(hpd_solve(&a, &b), Err(Error::DimensionMismatch { .. })));

        let indefinite =
            HermitianMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![c(1.0, 0.0), c(-1.0, 0.0)]))).unwrap();
        let b = DVector::from_element(2, c(1.0, 0.0));
        assert!(matches!(hpd_solve(&indefinite, &b), Err(Error::NotPositiveDefinite)));
        assert!(matches!(hpd_inv_sqrt(&indefinite), Err(Error::NotPositiveDefinite)));
        assert!(matches!(quad_form(&b, &indefinite), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn rejects_non_hermitian() {
        let a = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.5, 0.1), c(0.5, 0.1), c(1.0, 0.0)]);
        assert!(matches!(HermitianMatrix::new(a), Err(Error::NotHermitian { .. })));
        let rect = DMatrix::from_element(2, 3, c(0.0, 0.0));
        assert!(matches!(HermitianMatrix::new(rect), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn inv_sqrt_simple_cases() {
        let b = hpd_inv_sqrt(&HermitianMatrix::scaled_identity(3, 4.0)).unwrap();
        assert!(max_abs(&(b.as_matrix() - DMatrix::from_diagonal_element(3, 3, c(0.5, 0.0)))) < 1e-15);

        let d = HermitianMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![c(1.0, 0.0), c(9.0, 0.0)]))).unwrap();
        let b = hpd_inv_sqrt(&d).unwrap();
        let expect = DMatrix::from_diagonal(&DVector::from_vec(vec![c(1.0, 0.0), c(1.0 / 3.0, 0.0)]));
        assert!(max_abs(&(b.as_matrix() - expect)) < 1e-15);
    }

    #[test]
    fn inv_sqrt_random_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_hpd(&mut rng, 6, 0.05);
        let b = hpd_inv_sqrt(&a).unwrap();
        let bab = b.as_matrix() * a.as_matrix() * b.as_matrix();
        assert!(max_abs(&(bab - DMatrix::identity(6, 6))) <= 1e-9);
    }

    #[test]
    fn quad_form_cases() {
        let s2 = 3e-14;
        let h = DVector::from_vec(vec![c(1e-6, -2e-6), c(4e-7, 1e-7)]);
        let q = quad_form(&h, &HermitianMatrix::scaled_identity(2, s2)).unwrap();
        assert!((q - h.norm_squared() / s2).abs() <= 1e-13 * q);

        let zero = DVector::from_element(2, c(0.0, 0.0));
        assert_eq!(quad_form(&zero, &HermitianMatrix::scaled_identity(2, s2)).unwrap(), 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_hpd(&mut rng, 5, 0.2);
        let h = random_cvec(&mut rng, 5);
        let dense_inv = a.as_matrix().clone().try_inverse().unwrap();
        let oracle = real_part_checked(h.dotc(&(dense_inv * &h))).unwrap();
        let q = quad_form(&h, &a).unwrap();
        assert!((q - oracle).abs() <= 1e-10 * oracle);
    }

    #[test]
    fn real_part_check_flags_residue() {
        assert_eq!(real_part_checked(c(2.0, 1e-15)).unwrap(), 2.0);
        assert!(matches!(real_part_checked(c(2.0, 1e-6)), Err(Error::ComplexQuadForm { .. })));
    }

    #[test]
    fn ln_det_matches_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_hpd(&mut rng, 4, 0.3);
        let from_eig: f64 = a.eigenvalues().iter().map(|l| l.ln()).sum();
        let f = HpdFactor::new(&a).unwrap();
        assert!((f.ln_det() - from_eig).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn solve_round_trips(seed in any::<u64>(), n in 1usize..=16) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_hpd(&mut rng, n, 0.01);
            let x = random_cvec(&mut rng, n);
            let b = a.as_matrix() * &x;
            let back = hpd_solve(&a, &b).unwrap();
            let r = a.as_matrix() * &back - &b;
            prop_assert!(r.norm() <= 1e-10 * b.norm());
        }

        #[test]
        fn inv_sqrt_commutes(seed in any::<u64>(), n in 1usize..=8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_hpd(&mut rng, n, 0.05);
            let b = hpd_inv_sqrt(&a).unwrap();
            let ab = a.as_matrix() * b.as_matrix();
            let ba = b.as_matrix() * a.as_matrix();
            prop_assert!(max_abs(&(ab - ba)) <= 1e-9 * max_abs(a.as_matrix()).max(1.0));
        }
    }
}
