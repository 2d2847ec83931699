//! Principal components of the high-frequency block.
//!
//! The covariance of `z` is pooled over every state of a dataset (trajectories
//! and time points alike) using the population denominator, then decomposed
//! with cyclic Jacobi rotations. Scores are whitened projections
//! `λₖ^{-1/2} (z − μ)ᵀ uₖ`, so on the fitting data each score has unit
//! variance.

use std::path::Path;

use crate::dataset::TrajectoryDataset;
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::scalar::Real;
use crate::textio::{self, KeyValues, LineReader};

const MAX_SWEEPS: usize = 100;
const SYMMETRY_TOL: f64 = 1e-10;
const PSD_REL_TOL: f64 = 1e-8;
const RANK_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis<T> {
    pub mean: Vec<T>,
    /// Sorted non-increasing.
    pub eigenvalues: Vec<T>,
    /// Column `k` is the eigenvector of `eigenvalues[k]`.
    pub eigenvectors: Matrix<T>,
    /// Number of samples behind the covariance (0 if built from a bare matrix).
    pub sample_count: usize,
}

/// Pooled mean and population covariance of `z` over every state in `ds`.
pub fn estimate_covariance<T: Real>(ds: &TrajectoryDataset<T>) -> Result<(Vec<T>, Matrix<T>)> {
    covariance_of(ds.states().map(|s| s.z.as_slice()))
}

/// Mean and population covariance of a set of equal-length samples.
pub fn covariance_of<'a, T: Real>(
    samples: impl IntoIterator<Item = &'a [T]> + Clone,
) -> Result<(Vec<T>, Matrix<T>)> {
    let mut count = 0usize;
    let mut mean: Vec<T> = Vec::new();
    for z in samples.clone() {
        if count == 0 {
            mean = vec![T::zero(); z.len()];
        } else if z.len() != mean.len() {
            return Err(Error::Dimension(format!(
                "sample has length {}, expected {}",
                z.len(),
                mean.len()
            )));
        }
        for (acc, &v) in mean.iter_mut().zip(z) {
            *acc += v;
        }
        count += 1;
    }
    if count < 2 {
        return Err(Error::InsufficientData(format!(
            "covariance needs at least 2 samples, got {count}"
        )));
    }
    let n = T::from_usize_lossy(count);
    mean.iter_mut().for_each(|v| *v /= n);
    let m = mean.len();
    let mut cov = Matrix::zeros(m, m);
    let mut centered = vec![T::zero(); m];
    for z in samples {
        for ((c, &v), &mu) in centered.iter_mut().zip(z).zip(&mean) {
            *c = v - mu;
        }
        // upper triangle only
        for i in 0..m {
            let ci = centered[i];
            if ci == T::zero() {
                continue;
            }
            let row = cov.row_mut(i);
            for j in i..m {
                row[j] += ci * centered[j];
            }
        }
    }
    for i in 0..m {
        for j in i..m {
            let v = cov[(i, j)] / n;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok((mean, cov))
}

/// Raw cyclic Jacobi: eigenvalues in diagonal order and eigenvectors as
/// columns, unsorted. Expects a symmetric matrix.
pub(crate) fn jacobi_eigen<T: Real>(g: &Matrix<T>) -> (Vec<T>, Matrix<T>) {
    let n = g.rows();
    let mut a = g.clone();
    let mut v = Matrix::identity(n);
    let scale = a.frobenius_norm();
    let tol = T::lit(1e-12).max(T::epsilon() * T::lit(16.0)) * scale;
    for _ in 0..MAX_SWEEPS {
        let mut off = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        let off = (off + off).sqrt();
        if off <= tol || scale == T::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (apq + apq);
                let t = if theta.is_infinite() {
                    T::zero()
                } else {
                    let sign = if theta >= T::zero() { T::one() } else { -T::one() };
                    sign / (theta.abs() + (theta * theta + T::one()).sqrt())
                };
                if t == T::zero() {
                    a[(p, q)] = T::zero();
                    a[(q, p)] = T::zero();
                    continue;
                }
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                a[(p, p)] = app - t * apq;
                a[(q, q)] = aqq + t * apq;
                a[(p, q)] = T::zero();
                a[(q, p)] = T::zero();
                for k in 0..n {
                    if k != p && k != q {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        let new_kp = c * akp - s * akq;
                        let new_kq = s * akp + c * akq;
                        a[(k, p)] = new_kp;
                        a[(p, k)] = new_kp;
                        a[(k, q)] = new_kq;
                        a[(q, k)] = new_kq;
                    }
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[(i, i)]).collect(), v)
}

/// Symmetric eigendecomposition with eigenvalues sorted non-increasing and
/// each eigenvector's largest-magnitude entry made positive (ties go to the
/// lowest index). The returned basis has a zero mean and `sample_count = 0`.
pub fn eigendecompose<T: Real>(g: &Matrix<T>) -> Result<SpectralBasis<T>> {
    if !g.is_square() {
        return Err(Error::Dimension(format!(
            "eigendecompose needs a square matrix, got {}x{}",
            g.rows(),
            g.cols()
        )));
    }
    let asym = g.max_asymmetry();
    if asym > T::lit(SYMMETRY_TOL) {
        return Err(Error::NotSymmetric(asym.as_f64()));
    }
    let n = g.rows();
    let (vals, vecs) = jacobi_eigen(g);
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps diagonal order among equal eigenvalues
    order.sort_by(|&i, &j| vals[j].partial_cmp(&vals[i]).unwrap_or(std::cmp::Ordering::Equal));
    let mut eigenvectors = Matrix::zeros(n, n);
    let mut eigenvalues = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvalues.push(vals[src]);
        let mut col = vecs.col(src);
        // magnitudes equal up to rounding count as a tie
        let tie = T::one() + T::lit(1e-12).max(T::epsilon() * T::lit(64.0));
        let mut pivot = 0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[pivot].abs() * tie {
                pivot = i;
            }
        }
        if col[pivot] < T::zero() {
            col.iter_mut().for_each(|v| *v = -*v);
        }
        for (i, v) in col.into_iter().enumerate() {
            eigenvectors[(i, dst)] = v;
        }
    }
    Ok(SpectralBasis {
        mean: vec![T::zero(); n],
        eigenvalues,
        eigenvectors,
        sample_count: 0,
    })
}

/// Smallest κ whose cumulative variance share reaches `threshold`.
/// Negative eigenvalues count as zero.
pub fn select_kappa_from<T: Real>(eigenvalues: &[T], threshold: T) -> Result<usize> {
    if !(threshold > T::zero() && threshold <= T::one()) {
        return Err(Error::Config(format!(
            "variance threshold must lie in (0, 1], got {threshold}"
        )));
    }
    let ratios = cumulative_variance(eigenvalues)?;
    Ok(ratios
        .iter()
        .position(|&r| r >= threshold)
        .map_or(eigenvalues.len(), |k| k + 1))
}

/// Cumulative share of variance explained by the first 1..=m components.
pub fn cumulative_variance<T: Real>(eigenvalues: &[T]) -> Result<Vec<T>> {
    let total: T = eigenvalues.iter().map(|&l| l.max(T::zero())).sum();
    if !(total > T::zero()) {
        return Err(Error::DegenerateSpectrum);
    }
    let mut acc = T::zero();
    let mut out: Vec<T> = eigenvalues
        .iter()
        .map(|&l| {
            acc += l.max(T::zero());
            acc / total
        })
        .collect();
    // the full sum is exactly 1 regardless of rounding
    if let Some(last) = out.last_mut() {
        *last = T::one();
    }
    Ok(out)
}

impl<T: Real> SpectralBasis<T> {
    /// Pooled covariance of `ds`'s high-frequency block, decomposed.
    pub fn fit(ds: &TrajectoryDataset<T>) -> Result<Self> {
        let (mean, cov) = estimate_covariance(ds)?;
        Self::from_covariance(mean, &cov, ds.n_traj() * ds.horizon())
    }

    pub fn fit_samples<'a>(samples: impl IntoIterator<Item = &'a [T]> + Clone) -> Result<Self> {
        let count = samples.clone().into_iter().count();
        let (mean, cov) = covariance_of(samples)?;
        Self::from_covariance(mean, &cov, count)
    }

    pub fn from_covariance(mean: Vec<T>, cov: &Matrix<T>, sample_count: usize) -> Result<Self> {
        if mean.len() != cov.rows() {
            return Err(Error::Dimension(format!(
                "mean has length {}, covariance is {}x{}",
                mean.len(),
                cov.rows(),
                cov.cols()
            )));
        }
        let mut basis = eigendecompose(cov)?;
        let floor = -T::lit(PSD_REL_TOL) * basis.eigenvalues[0].abs();
        if let Some((index, &value)) = basis
            .eigenvalues
            .iter()
            .enumerate()
            .find(|(_, &l)| l < floor)
        {
            return Err(Error::NotPositiveSemidefinite {
                index,
                value: value.as_f64(),
            });
        }
        basis.mean = mean;
        basis.sample_count = sample_count;
        Ok(basis)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn check_kappa(&self, kappa: usize) -> Result<()> {
        if kappa == 0 || kappa > self.dim() {
            return Err(Error::KappaRange {
                kappa,
                m: self.dim(),
            });
        }
        Ok(())
    }

    fn check_z(&self, z: &[T]) -> Result<()> {
        if z.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "z has length {}, basis dimension is {}",
                z.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Rank tolerance: eigenvalues at or below this cannot be whitened.
    pub fn rank_tolerance(&self) -> T {
        T::lit(RANK_REL_TOL) * self.eigenvalues[0].max(T::zero())
    }

    /// Largest κ whose scores are all well defined.
    pub fn max_kappa(&self) -> usize {
        let tol = self.rank_tolerance();
        self.eigenvalues.iter().take_while(|&&l| l > tol).count()
    }

    /// Whitened scores of the first `kappa` components.
    pub fn pc_scores(&self, z: &[T], kappa: usize) -> Result<Vec<T>> {
        self.check_kappa(kappa)?;
        self.check_z(z)?;
        let lam = self.eigenvalues[kappa - 1];
        if !(lam > self.rank_tolerance()) {
            return Err(Error::RankDeficient {
                kappa,
                value: lam.as_f64(),
            });
        }
        let centered: Vec<T> = z.iter().zip(&self.mean).map(|(&v, &mu)| v - mu).collect();
        let m = self.dim();
        let mut scores = vec![T::zero(); kappa];
        for i in 0..m {
            let c = centered[i];
            if c == T::zero() {
                continue;
            }
            let row = &self.eigenvectors.row(i)[..kappa];
            for (s, &u) in scores.iter_mut().zip(row) {
                *s += c * u;
            }
        }
        for (s, &l) in scores.iter_mut().zip(&self.eigenvalues) {
            *s /= l.sqrt();
        }
        Ok(scores)
    }

    /// `μ + Σ_{k≤κ} uₖuₖᵀ (z − μ)`
    pub fn reconstruct(&self, z: &[T], kappa: usize) -> Result<Vec<T>> {
        self.check_kappa(kappa)?;
        self.check_z(z)?;
        let centered: Vec<T> = z.iter().zip(&self.mean).map(|(&v, &mu)| v - mu).collect();
        let mut out = self.mean.clone();
        for k in 0..kappa {
            let u = self.eigenvectors.col(k);
            let p = dot(&u, &centered);
            for (o, &ui) in out.iter_mut().zip(&u) {
                *o += p * ui;
            }
        }
        Ok(out)
    }

    pub fn select_kappa(&self, threshold: T) -> Result<usize> {
        select_kappa_from(&self.eigenvalues, threshold)
    }

    pub fn cumulative_variance(&self) -> Result<Vec<T>> {
        cumulative_variance(&self.eigenvalues)
    }

    /// Mean squared reconstruction error over every state of `ds`, per κ.
    pub fn reconstruction_error_curve(
        &self,
        ds: &TrajectoryDataset<T>,
        kappas: &[usize],
    ) -> Result<Vec<(usize, T)>> {
        self.reconstruction_error_curve_of(ds.states().map(|s| s.z.as_slice()), kappas)
    }

    pub fn reconstruction_error_curve_of<'a>(
        &self,
        samples: impl IntoIterator<Item = &'a [T]> + Clone,
        kappas: &[usize],
    ) -> Result<Vec<(usize, T)>> {
        kappas
            .iter()
            .map(|&kappa| {
                let mut total = T::zero();
                let mut count = 0usize;
                for z in samples.clone() {
                    let rec = self.reconstruct(z, kappa)?;
                    total += z
                        .iter()
                        .zip(&rec)
                        .map(|(&a, &b)| (a - b) * (a - b))
                        .sum::<T>();
                    count += 1;
                }
                if count == 0 {
                    return Err(Error::InsufficientData("no states".into()));
                }
                Ok((kappa, total / T::from_usize_lossy(count)))
            })
            .collect()
    }

    pub fn render(&self) -> String {
        let mut kv = KeyValues::new();
        kv.push("spectral_basis", "v1")
            .push("m", self.dim())
            .push("sample_count", self.sample_count);
        let mut out = kv.to_line();
        out.push('\n');
        textio::write_vector(&mut out, "mean", &self.mean);
        textio::write_vector(&mut out, "eigenvalues", &self.eigenvalues);
        textio::write_matrix(&mut out, "eigenvectors", &self.eigenvectors);
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut r = LineReader::new(text);
        let kv = KeyValues::parse(r.next_line()?, 1)?;
        if kv.get("spectral_basis").is_none() {
            return Err(Error::Schema("not a spectral basis file".into()));
        }
        let m: usize = kv.parse_value("m")?;
        let sample_count = kv.parse_value("sample_count")?;
        let mean = r.read_vector("mean")?;
        let eigenvalues = r.read_vector("eigenvalues")?;
        let eigenvectors = r.read_matrix("eigenvectors")?;
        if mean.len() != m
            || eigenvalues.len() != m
            || eigenvectors.rows() != m
            || eigenvectors.cols() != m
        {
            return Err(Error::Dimension(format!("basis file shapes disagree with m={m}")));
        }
        if !r.is_done() {
            return Err(Error::Parse {
                line: r.line_no() + 1,
                msg: "trailing content after basis".into(),
            });
        }
        Ok(Self {
            mean,
            eigenvalues,
            eigenvectors,
            sample_count,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        textio::write_file(path, &self.render())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&textio::read_file(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_samples(n: usize, m: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..m).map(|_| rng.sample(StandardNormal)).collect())
            .collect()
    }

    /// Straightforward two-pass oracle, independent of `covariance_of`.
    fn two_pass_covariance(xs: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = xs.len() as f64;
        let m = xs[0].len();
        let mean: Vec<f64> = (0..m).map(|j| xs.iter().map(|x| x[j]).sum::<f64>() / n).collect();
        let cov = (0..m)
            .map(|i| {
                (0..m)
                    .map(|j| {
                        xs.iter()
                            .map(|x| (x[i] - mean[i]) * (x[j] - mean[j]))
                            .sum::<f64>()
                            / n
                    })
                    .collect()
            })
            .collect();
        (mean, cov)
    }

    #[test]
    fn two_point_covariance() {
        let a = [1.0, -1.0];
        let b = [-1.0, 1.0];
        let (mean, cov) = covariance_of([&a[..], &b[..]]).unwrap();
        assert_eq!(mean, vec![0.0, 0.0]);
        assert_eq!(cov, Matrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]));
    }

    #[test]
    fn identical_samples_give_zero_covariance() {
        let a = [2.5, -1.0, 3.0];
        let (_, cov) = covariance_of([&a[..], &a[..], &a[..]]).unwrap();
        assert_eq!(cov, Matrix::zeros(3, 3));
    }

    #[test]
    fn covariance_needs_two_samples() {
        let a = [1.0];
        assert!(matches!(
            covariance_of([&a[..]]),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn covariance_matches_two_pass_oracle() {
        let xs = random_samples(50, 3, 7);
        let (mean, cov) = covariance_of(xs.iter().map(Vec::as_slice)).unwrap();
        let (omean, ocov) = two_pass_covariance(&xs);
        for j in 0..3 {
            assert!((mean[j] - omean[j]).abs() < 1e-12);
            for k in 0..3 {
                assert!((cov[(j, k)] - ocov[j][k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn diagonal_decomposition() {
        let b = eigendecompose(&Matrix::from_diag(&[4.0, 1.0])).unwrap();
        assert_eq!(b.eigenvalues, vec![4.0, 1.0]);
        assert_eq!(b.eigenvectors, Matrix::identity(2));
        // unsorted diagonal input gets sorted
        let b = eigendecompose(&Matrix::from_diag(&[1.0, 4.0])).unwrap();
        assert_eq!(b.eigenvalues, vec![4.0, 1.0]);
        assert_eq!(b.eigenvectors.col(0), vec![0.0, 1.0]);
    }

    #[test]
    fn two_by_two_matches_characteristic_polynomial() {
        let g = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let b = eigendecompose(&g).unwrap();
        // λ² − tr·λ + det = 0 → λ = 2 ± 1
        let (tr, det) = (4.0f64, 3.0f64);
        let disc = (tr * tr - 4.0 * det).sqrt();
        let expected = [(tr + disc) / 2.0, (tr - disc) / 2.0];
        for k in 0..2 {
            assert!((b.eigenvalues[k] - expected[k]).abs() < 1e-14);
        }
        let r = 1.0 / 2f64.sqrt();
        let u0 = b.eigenvectors.col(0);
        let u1 = b.eigenvectors.col(1);
        assert!((u0[0] - r).abs() < 1e-12 && (u0[1] - r).abs() < 1e-12);
        // tie in magnitude: lowest index made positive
        assert!((u1[0] - r).abs() < 1e-12 && (u1[1] + r).abs() < 1e-12);
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        let g = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.4, 1.0]]);
        assert!(matches!(eigendecompose(&g), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn random_psd_reconstruction() {
        let xs = random_samples(6, 6, 11);
        let a = Matrix::from_rows(&xs);
        let g = a.transpose().matmul(&a);
        let b = eigendecompose(&g).unwrap();
        let rec = b
            .eigenvectors
            .matmul(&Matrix::from_diag(&b.eigenvalues))
            .matmul(&b.eigenvectors.transpose());
        assert!(rec.max_abs_diff(&g) < 1e-8);
        let utu = b.eigenvectors.transpose().matmul(&b.eigenvectors);
        assert!(utu.max_abs_diff(&Matrix::identity(6)) < 1e-8);
        assert!(b.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    fn diag_basis() -> SpectralBasis<f64> {
        eigendecompose(&Matrix::from_diag(&[4.0, 1.0])).unwrap()
    }

    #[test]
    fn scores_of_diagonal_basis() {
        let b = diag_basis();
        assert_eq!(b.pc_scores(&[2.0, 0.0], 1).unwrap(), vec![1.0]);
        assert_eq!(b.pc_scores(&[0.0, 0.0], 2).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(b.pc_scores(&[0.0, 0.0], 3), Err(Error::KappaRange { .. })));
        assert!(matches!(b.pc_scores(&[0.0], 1), Err(Error::Dimension(_))));
    }

    #[test]
    fn rank_deficient_scores_error() {
        let b = eigendecompose(&Matrix::from_diag(&[4.0, 0.0])).unwrap();
        assert!(b.pc_scores(&[1.0, 1.0], 1).is_ok());
        assert!(matches!(
            b.pc_scores(&[1.0, 1.0], 2),
            Err(Error::RankDeficient { kappa: 2, .. })
        ));
        assert_eq!(b.max_kappa(), 1);
    }

    #[test]
    fn scores_are_whitened_on_fitting_data() {
        let xs = random_samples(200, 5, 3);
        let b = SpectralBasis::fit_samples(xs.iter().map(Vec::as_slice)).unwrap();
        let scores: Vec<Vec<f64>> = xs.iter().map(|z| b.pc_scores(z, 5).unwrap()).collect();
        for k in 0..5 {
            let mean = scores.iter().map(|s| s[k]).sum::<f64>() / 200.0;
            let var = scores.iter().map(|s| (s[k] - mean).powi(2)).sum::<f64>() / 200.0;
            assert!(mean.abs() < 1e-10);
            assert!((var - 1.0).abs() < 1e-8, "component {k}: {var}");
        }
    }

    #[test]
    fn reconstruction_identities() {
        let xs = random_samples(40, 4, 5);
        let b = SpectralBasis::fit_samples(xs.iter().map(Vec::as_slice)).unwrap();
        let z = &xs[0];
        let full = b.reconstruct(z, 4).unwrap();
        for (a, r) in z.iter().zip(&full) {
            assert!((a - r).abs() < 1e-8);
        }
        assert_eq!(b.reconstruct(&b.mean, 2).unwrap(), b.mean);
        // Pythagoras: residual energy equals the dropped projections
        for kappa in 1..4 {
            let rec = b.reconstruct(z, kappa).unwrap();
            let resid: f64 = z.iter().zip(&rec).map(|(a, r)| (a - r).powi(2)).sum();
            let dropped: f64 = (kappa..4)
                .map(|k| {
                    let u = b.eigenvectors.col(k);
                    z.iter()
                        .zip(&b.mean)
                        .zip(&u)
                        .map(|((v, mu), ui)| (v - mu) * ui)
                        .sum::<f64>()
                        .powi(2)
                })
                .sum();
            assert!((resid - dropped).abs() < 1e-10);
        }
    }

    #[test]
    fn kappa_selection_examples() {
        assert_eq!(select_kappa_from(&[4.0, 1.0, 0.0], 0.95).unwrap(), 2);
        assert_eq!(select_kappa_from(&[1.0, 1.0, 1.0, 1.0], 0.95).unwrap(), 4);
        assert_eq!(select_kappa_from(&[4.0, 1.0, 0.0], 0.5).unwrap(), 1);
        assert_eq!(select_kappa_from(&[4.0, 1.0, -1e-9], 1.0).unwrap(), 2);
        assert!(matches!(
            select_kappa_from(&[0.0, -1.0], 0.5),
            Err(Error::DegenerateSpectrum)
        ));
        assert!(select_kappa_from(&[1.0], 0.0).is_err());
    }

    #[test]
    fn error_curve_is_monotone_and_vanishes() {
        let xs = random_samples(30, 4, 9);
        let b = SpectralBasis::fit_samples(xs.iter().map(Vec::as_slice)).unwrap();
        let curve = b
            .reconstruction_error_curve_of(xs.iter().map(Vec::as_slice), &[1, 2, 3, 4])
            .unwrap();
        assert!(curve.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-12));
        assert!(curve[3].1 < 1e-8);
    }

    #[test]
    fn basis_file_round_trip() {
        let xs = random_samples(20, 3, 1);
        let b = SpectralBasis::fit_samples(xs.iter().map(Vec::as_slice)).unwrap();
        let back = SpectralBasis::<f64>::parse(&b.render()).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn works_in_single_precision() {
        let g = Matrix::from_rows(&[vec![2.0f32, 1.0], vec![1.0, 2.0]]);
        let b = eigendecompose(&g).unwrap();
        assert!((b.eigenvalues[0] - 3.0).abs() < 1e-5);
        assert!((b.eigenvalues[1] - 1.0).abs() < 1e-5);
    }
}
