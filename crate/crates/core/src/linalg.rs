//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{domain, Error, Result};

/// `Σ_ij = ρ^|i-j|`.
pub fn ar1(m: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |i, j| rho.powi((i as i32 - j as i32).abs()))
}

pub fn check_symmetric(a: &DMatrix<f64>, name: &str) -> Result<()> {
    if !a.is_square() {
        return Err(domain(format!("{name} must be square, got {}x{}", a.nrows(), a.ncols())));
    }
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            let (x, y) = (a[(i, j)], a[(j, i)]);
            if !x.is_finite() || (x - y).abs() > 1e-10 * (1.0 + x.abs()) {
                return Err(domain(format!("{name} is not symmetric at ({i}, {j})")));
            }
        }
        if !a[(i, i)].is_finite() {
            return Err(domain(format!("{name} has a non-finite diagonal")));
        }
    }
    Ok(())
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(a.clone()).eigenvalues.min()
}

pub fn check_pd(a: &DMatrix<f64>, name: &str) -> Result<()> {
    check_symmetric(a, name)?;
    let lmin = min_eigenvalue(a);
    if !(lmin > 0.0) {
        return Err(domain(format!("{name} is not positive definite (min eigenvalue {lmin:e})")));
    }
    Ok(())
}

/// Factor `A` with `A Aᵀ = Σ`, eigenvalues floored at 1e-12.
pub fn sym_factor(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_symmetric(sigma, "covariance")?;
    let eig = SymmetricEigen::new(sigma.clone());
    let mut q = eig.eigenvectors;
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        let s = l.max(1e-12).sqrt();
        q.column_mut(k).scale_mut(s);
    }
    Ok(q)
}

/// Draw `N(0, A Aᵀ)` using a factor from [`sym_factor`].
pub fn mvn<R: Rng + ?Sized>(factor: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    let z = DVector::from_fn(factor.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
    factor * z
}

pub fn inverse_pd(a: &DMatrix<f64>, name: &str) -> Result<DMatrix<f64>> {
    a.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Degenerate(format!("{name} is singular or not positive definite")))
}

/// Rows and columns of `a` except `j`.
pub fn drop_index(a: &DMatrix<f64>, j: usize) -> DMatrix<f64> {
    a.clone().remove_row(j).remove_column(j)
}
