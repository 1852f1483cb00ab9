//! Gaussian copula over the latent columns: correlation estimation, Laplace
//! perturbation, repair into a valid correlation matrix and correlated
//! sampling through the Cholesky factor.

use crate::numkernels::{cholesky_with_jitter, laplace, sym_eigen, Epsilon, Matrix, Rng, SymmetricMatrix};
use crate::{Error, Result};

/// Eigenvalue floor used by [`repair_psd`].
pub const DEFAULT_DELTA: f64 = 1e-8;

/// Repaired correlation matrix and its Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct CopulaModel {
    correlation: SymmetricMatrix,
    chol: Matrix,
}

impl CopulaModel {
    /// Checks the correlation invariants and factorizes.
    pub fn from_correlation(correlation: SymmetricMatrix) -> Result<Self> {
        let p = correlation.order();
        if p == 0 {
            return Err(Error::Argument("empty correlation matrix".into()));
        }
        if !correlation.is_finite() {
            return Err(Error::Numeric("correlation matrix has non-finite entries".into()));
        }
        for i in 0..p {
            if (correlation.get(i, i) - 1.0).abs() > 1e-10 {
                return Err(Error::Numeric(format!("correlation diagonal entry {i} is {}", correlation.get(i, i))));
            }
            for j in 0..i {
                if correlation.get(i, j).abs() > 1.0 {
                    return Err(Error::Numeric(format!("correlation entry ({i}, {j}) outside [-1, 1]")));
                }
            }
        }
        let chol = cholesky_with_jitter(&correlation)?;
        Ok(Self { correlation, chol })
    }

    pub fn correlation(&self) -> &SymmetricMatrix {
        &self.correlation
    }

    pub fn cholesky(&self) -> &Matrix {
        &self.chol
    }

    pub fn order(&self) -> usize {
        self.correlation.order()
    }
}

/// Latent correlation from column-major latents, as the product-moment
/// matrix `ZᵀZ / (n − 1)` scaled to unit diagonal, clipped to `[-1, 1]`.
/// Accumulation runs sequentially over rows so the result is reproducible.
pub fn estimate_correlation(z: &[Vec<f64>]) -> Result<SymmetricMatrix> {
    let p = z.len();
    if p == 0 {
        return Err(Error::Argument("no latent columns".into()));
    }
    let n = z[0].len();
    if n < 2 {
        return Err(Error::Argument(format!("correlation needs at least 2 rows, got {n}")));
    }
    if z.iter().any(|c| c.len() != n) {
        return Err(Error::Argument("latent columns differ in length".into()));
    }
    if z.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite latent value".into()));
    }
    let mut cross = vec![0.0; p * (p + 1) / 2];
    let mut row = vec![0.0; p];
    for i in 0..n {
        for (j, col) in z.iter().enumerate() {
            row[j] = col[i];
        }
        let mut k = 0;
        for a in 0..p {
            let ra = row[a];
            for &rb in &row[..=a] {
                cross[k] += ra * rb;
                k += 1;
            }
        }
    }
    let scale = 1.0 / (n - 1) as f64;
    let cov = SymmetricMatrix::from_packed_lower(p, &cross.iter().map(|c| c * scale).collect::<Vec<_>>())?;
    Ok(SymmetricMatrix::from_fn(p, |i, j| {
        if i == j {
            return 1.0;
        }
        let denom = (cov.get(i, i) * cov.get(j, j)).sqrt();
        if denom > 0.0 {
            (cov.get(i, j) / denom).clamp(-1.0, 1.0)
        } else {
            0.0
        }
    }))
}

/// Laplace scale applied to every off-diagonal entry: `2 / (n ε_c)`.
pub fn correlation_noise_scale(n: usize, epsilon_c: Epsilon) -> Option<f64> {
    epsilon_c.laplace_scale(2.0 / n as f64)
}

/// Adds one Lap(2/(n ε_c)) draw to each upper-triangle entry and mirrors it.
/// The diagonal is left untouched; an infinite budget returns the input.
pub fn privatize_correlation(
    r: &SymmetricMatrix,
    n: usize,
    epsilon_c: Epsilon,
    rng: &mut Rng,
) -> Result<SymmetricMatrix> {
    if n < 2 {
        return Err(Error::Argument(format!("correlation privatization needs n >= 2, got {n}")));
    }
    if let Epsilon::Finite(e) = epsilon_c {
        if !(e > 0.0) {
            return Err(Error::Argument(format!("epsilon_c must be positive, got {e}")));
        }
    }
    let Some(scale) = correlation_noise_scale(n, epsilon_c) else {
        return Ok(r.clone());
    };
    let p = r.order();
    let mut noisy = r.clone();
    for i in 0..p {
        for j in (i + 1)..p {
            noisy.set(i, j, r.get(i, j) + laplace(rng, scale)?);
        }
    }
    Ok(noisy)
}

/// Projects a symmetric matrix onto valid correlation matrices.
///
/// Eigenvalues are floored at `delta`, the matrix is rebuilt and rescaled to
/// unit diagonal. Rescaling can pull the smallest eigenvalue below `delta`
/// again, so a final shrink towards the identity restores `λ_min ≥ delta`;
/// this makes the repair idempotent on its own output.
pub fn repair_psd(r: &SymmetricMatrix, delta: f64) -> Result<SymmetricMatrix> {
    if !(delta > 0.0) {
        return Err(Error::Argument(format!("eigenvalue floor must be positive, got {delta}")));
    }
    let p = r.order();
    let mut eig = sym_eigen(r)?;
    for v in eig.values.iter_mut() {
        *v = v.max(delta);
    }
    let floored = eig.reconstruct();
    let d: Vec<f64> = (0..p).map(|i| floored.get(i, i).sqrt()).collect();
    let mut out =
        SymmetricMatrix::from_fn(
            p,
            |i, j| {
                if i == j {
                    1.0
                } else {
                    (floored.get(i, j) / (d[i] * d[j])).clamp(-1.0, 1.0)
                }
            },
        );

    let min_eig = sym_eigen(&out)?.values.last().copied().unwrap_or(1.0);
    if min_eig < delta {
        let alpha = (delta - min_eig) / (1.0 - min_eig);
        out = SymmetricMatrix::from_fn(p, |i, j| if i == j { 1.0 } else { (1.0 - alpha) * out.get(i, j) });
    }
    Ok(out)
}

/// `m` rows i.i.d. N(0, R): each row is `L g` for a fresh standard normal
/// vector `g`. Returned column-major.
pub fn sample_latent(model: &CopulaModel, m: usize, rng: &mut Rng) -> Result<Vec<Vec<f64>>> {
    if m == 0 {
        return Err(Error::Argument("sample size must be at least 1".into()));
    }
    let p = model.order();
    let l = &model.chol;
    let mut out = vec![Vec::with_capacity(m); p];
    let mut g = vec![0.0; p];
    for _ in 0..m {
        for v in g.iter_mut() {
            *v = rng.standard_normal();
        }
        for (j, col) in out.iter_mut().enumerate() {
            let lrow = l.row(j);
            col.push(lrow[..=j].iter().zip(&g).map(|(a, b)| a * b).sum());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empirical_corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    fn min_eigen(m: &SymmetricMatrix) -> f64 {
        *sym_eigen(m).unwrap().values.last().unwrap()
    }

    #[test]
    fn identical_columns_correlate_fully() {
        let mut rng = Rng::new(0);
        let c: Vec<f64> = (0..1000).map(|_| rng.standard_normal()).collect();
        let r = estimate_correlation(&[c.clone(), c]).unwrap();
        assert!((r.get(0, 1) - 1.0).abs() < 1e-9);
        assert_eq!(r.get(0, 0), 1.0);
    }

    #[test]
    fn independent_and_correlated_columns() {
        let n = 100_000;
        let mut rng = Rng::new(1);
        let a: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
        let r = estimate_correlation(&[a.clone(), b.clone()]).unwrap();
        assert!(r.get(0, 1).abs() < 0.02);

        // Bivariate normal oracle: y = ρ a + √(1-ρ²) b.
        let rho = 0.7;
        let y: Vec<f64> = a.iter().zip(&b).map(|(x, e)| rho * x + (1.0 - rho * rho).sqrt() * e).collect();
        let r = estimate_correlation(&[a, y]).unwrap();
        assert!((r.get(0, 1) - rho).abs() < 0.01, "{}", r.get(0, 1));
    }

    #[test]
    fn correlation_needs_two_rows() {
        assert!(matches!(estimate_correlation(&[vec![1.0]]), Err(Error::Argument(_))));
    }

    #[test]
    fn noise_scale_formula() {
        assert_eq!(correlation_noise_scale(1000, Epsilon::Finite(0.5)), Some(0.004));
        assert_eq!(correlation_noise_scale(1000, Epsilon::Infinite), None);
    }

    #[test]
    fn privatize_identity_budget_and_symmetry() {
        let r = SymmetricMatrix::from_fn(4, |i, j| if i == j { 1.0 } else { 0.1 * (i + j) as f64 });
        let out = privatize_correlation(&r, 50, Epsilon::Infinite, &mut Rng::new(0)).unwrap();
        assert_eq!(out, r);

        let out = privatize_correlation(&r, 50, Epsilon::Finite(0.5), &mut Rng::new(0)).unwrap();
        for i in 0..4 {
            assert_eq!(out.get(i, i), 1.0);
            for j in 0..4 {
                assert_eq!(out.get(i, j), out.get(j, i));
            }
        }
        assert_ne!(out, r);
        assert!(privatize_correlation(&r, 50, Epsilon::Finite(-1.0), &mut Rng::new(0)).is_err());
    }

    #[test]
    fn injected_noise_mad_matches_scale() {
        let p = 10;
        let n = 1000;
        let eps = Epsilon::Finite(0.5);
        let b = correlation_noise_scale(n, eps).unwrap();
        let r = SymmetricMatrix::identity(p);
        let mut rng = Rng::new(3);
        let (mut total, mut count) = (0.0, 0usize);
        for _ in 0..10_000 {
            let out = privatize_correlation(&r, n, eps, &mut rng).unwrap();
            for i in 0..p {
                for j in (i + 1)..p {
                    total += (out.get(i, j) - r.get(i, j)).abs();
                    count += 1;
                }
            }
        }
        let mad = total / count as f64;
        assert!((mad - b).abs() <= 0.05 * b, "MAD {mad} vs {b}");
    }

    #[test]
    fn repair_identity_unchanged() {
        let out = repair_psd(&SymmetricMatrix::identity(5), DEFAULT_DELTA).unwrap();
        assert!(out.frobenius_distance(&SymmetricMatrix::identity(5)) < 1e-12);
    }

    #[test]
    fn repair_two_by_two() {
        // Hand eigendecomposition: eigenvalues 2.2 and -0.2 with vectors
        // (1, 1)/√2 and (1, -1)/√2. Flooring gives diagonal 1.1 + δ/2 and
        // off-diagonal 1.1 - δ/2, so unit scaling yields ρ' below.
        let delta = DEFAULT_DELTA;
        let r = SymmetricMatrix::from_fn(2, |i, j| if i == j { 1.0 } else { 1.2 });
        let out = repair_psd(&r, delta).unwrap();
        let rho = (1.1 - delta / 2.0) / (1.1 + delta / 2.0);
        assert!((rho - (1.0 - 9.09e-9)).abs() < 1e-11);
        assert!((out.get(0, 1) - rho).abs() <= 1e-9, "{} vs {rho}", out.get(0, 1));
        assert!(out.get(0, 1) < 1.0);
        assert!(min_eigen(&out) >= delta * (1.0 - 1e-6));
    }

    #[test]
    fn repair_leaves_valid_matrices_alone() {
        let mut rng = Rng::new(7);
        for p in [2usize, 6, 20] {
            let b = Matrix::from_row_major(p, 2 * p, (0..2 * p * p).map(|_| rng.standard_normal()).collect()).unwrap();
            let s = b.matmul(&b.transpose());
            let c = SymmetricMatrix::from_fn(p, |i, j| s.get(i, j) / (s.get(i, i) * s.get(j, j)).sqrt());
            let out = repair_psd(&c, DEFAULT_DELTA).unwrap();
            assert!(out.frobenius_distance(&c) < 1e-9, "p = {p}");
        }
    }

    #[test]
    fn repair_invariants_and_idempotence() {
        let mut rng = Rng::new(21);
        for trial in 0..60 {
            let p = 2 + trial % 30;
            let r = SymmetricMatrix::from_fn(p, |i, j| if i == j { 1.0 } else { 2.0 * rng.uniform() - 1.0 });
            let once = repair_psd(&r, DEFAULT_DELTA).unwrap();
            for i in 0..p {
                assert!((once.get(i, i) - 1.0).abs() <= 1e-10);
            }
            assert!(min_eigen(&once) >= -1e-8);
            let twice = repair_psd(&once, DEFAULT_DELTA).unwrap();
            assert!(twice.frobenius_distance(&once) <= 1e-9, "p = {p}: {:e}", twice.frobenius_distance(&once));
            CopulaModel::from_correlation(once).unwrap();
        }
    }

    #[test]
    fn sampling_reproduces_correlation() {
        let m = 100_000;
        let c = SymmetricMatrix::from_fn(3, |i, j| {
            if i == j {
                1.0
            } else if i + j == 1 {
                0.5
            } else {
                0.0
            }
        });
        let model = CopulaModel::from_correlation(c).unwrap();
        let z = sample_latent(&model, m, &mut Rng::new(5)).unwrap();
        assert!((empirical_corr(&z[0], &z[1]) - 0.5).abs() < 0.01);
        assert!(empirical_corr(&z[0], &z[2]).abs() < 0.02);
        for col in &z {
            let mean = col.iter().sum::<f64>() / m as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
            assert!(mean.abs() < 0.02);
            assert!((var - 1.0).abs() < 0.03);
        }

        let ind = CopulaModel::from_correlation(SymmetricMatrix::identity(2)).unwrap();
        let z = sample_latent(&ind, m, &mut Rng::new(6)).unwrap();
        assert!(empirical_corr(&z[0], &z[1]).abs() < 0.02);
        assert!(sample_latent(&ind, 0, &mut Rng::new(6)).is_err());
    }

    #[test]
    fn from_correlation_rejects_invalid() {
        let mut bad = SymmetricMatrix::identity(2);
        bad.set(0, 0, 1.5);
        assert!(CopulaModel::from_correlation(bad).is_err());
        let mut bad = SymmetricMatrix::identity(2);
        bad.set(0, 1, 1.2);
        assert!(CopulaModel::from_correlation(bad).is_err());
    }
}
