//! Functional principal component analysis of the two halves of a
//! separation.
//!
//! Vertical fPCA works on `h = [q, f(0)]` with the plain Euclidean inner
//! product. Horizontal fPCA works on shooting vectors at the Karcher mean
//! of the warps, with the trapezoid inner product so that directions have
//! unit length on the sphere and principal paths are arc-length geodesics.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcrep::{Grid, SampledFunction};
use crate::srsf::{from_srsf, Srsf};
use crate::warpspace::{
    from_psi, karcher_mean_warps, sphere_exp, KarcherConfig, Psi, ShootingVector, Warp, WarpMean,
};

/// Principal components of the aligned SRSFs with initial values appended.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerticalFpca {
    pub grid: Grid,
    /// `[μ_q, mean f(0)]`, length `T + 1`.
    pub mu_h: Vec<f64>,
    /// `p` orthonormal columns of length `T + 1`.
    pub directions: Vec<Vec<f64>>,
    /// Covariance eigenvalues of the kept directions, non-increasing.
    pub singular_values: Vec<f64>,
    /// All `n` eigenvalues of the sample covariance, non-increasing.
    pub spectrum: Vec<f64>,
    /// `n × p`, row `i` holds `<h_i - μ_h, U_j>`.
    pub coefficients: Vec<Vec<f64>>,
    /// `singular_values / sum(spectrum)`.
    pub energy_fraction: Vec<f64>,
}

/// Principal components of the warps' shooting vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizontalFpca {
    pub grid: Grid,
    pub mu_psi: Vec<f64>,
    /// Karcher mean warp, `from_psi(mu_psi)`.
    pub mean_warp: Vec<f64>,
    /// `p` columns, orthonormal under the trapezoid inner product and
    /// tangent at `mu_psi`.
    pub directions: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
    pub spectrum: Vec<f64>,
    /// `n × p`, row `i` holds `<v_i, U_j>`.
    pub coefficients: Vec<Vec<f64>>,
    pub energy_fraction: Vec<f64>,
}

impl VerticalFpca {
    pub fn p(&self) -> usize {
        self.directions.len()
    }

    /// Keeps the leading `p` components.
    pub fn truncate(&self, p: usize) -> Result<VerticalFpca> {
        check_truncate(p, self.p())?;
        let mut out = self.clone();
        truncate_parts(&mut out.directions, &mut out.singular_values, &mut out.coefficients, &mut out.energy_fraction, p);
        Ok(out)
    }

    /// `<h - μ_h, U_j>` for every kept direction.
    pub fn project(&self, q: &Srsf) -> Result<Vec<f64>> {
        self.grid.ensure_same(q.grid(), "VerticalFpca::project")?;
        let h = stack_h(q);
        Ok(self
            .directions
            .iter()
            .map(|u| u.iter().zip(&h).zip(&self.mu_h).map(|((u, h), m)| u * (h - m)).sum())
            .collect())
    }

    /// `μ_h + Σ c_j U_j`, as an SRSF carrying its `f(0)` coordinate. Missing
    /// trailing coefficients count as zero.
    pub fn reconstruct(&self, c: &[f64]) -> Result<Srsf> {
        if c.len() > self.p() {
            return Err(Error::arg(format!("at most {} coefficients, got {}", self.p(), c.len())));
        }
        let mut h = self.mu_h.clone();
        for (u, &cj) in self.directions.iter().zip(c) {
            h.iter_mut().zip(u).for_each(|(a, u)| *a += cj * u);
        }
        Ok(split_h(self.grid, h))
    }
}

impl HorizontalFpca {
    pub fn p(&self) -> usize {
        self.directions.len()
    }

    pub fn truncate(&self, p: usize) -> Result<HorizontalFpca> {
        check_truncate(p, self.p())?;
        let mut out = self.clone();
        truncate_parts(&mut out.directions, &mut out.singular_values, &mut out.coefficients, &mut out.energy_fraction, p);
        Ok(out)
    }

    pub fn mu(&self) -> Result<Psi> {
        Psi::new(self.grid, self.mu_psi.clone())
    }

    /// `Σ z_j U_j` in the tangent space at the mean.
    pub fn tangent(&self, z: &[f64]) -> Result<ShootingVector> {
        if z.len() > self.p() {
            return Err(Error::arg(format!("at most {} coefficients, got {}", self.p(), z.len())));
        }
        let mut v = vec![0.0; self.grid.len()];
        for (u, &zj) in self.directions.iter().zip(z) {
            v.iter_mut().zip(u).for_each(|(a, u)| *a += zj * u);
        }
        ShootingVector::new(self.grid, v)
    }

    /// `from_psi(exp_μ(Σ z_j U_j))`.
    pub fn reconstruct(&self, z: &[f64]) -> Result<Warp> {
        Ok(from_psi(&sphere_exp(&self.mu()?, &self.tangent(z)?)))
    }

    /// Trapezoid inner products of a shooting vector with the directions.
    pub fn project(&self, v: &ShootingVector) -> Result<Vec<f64>> {
        self.grid.ensure_same(v.grid(), "HorizontalFpca::project")?;
        let w = self.grid.trapz_weights();
        Ok(self
            .directions
            .iter()
            .map(|u| w.iter().zip(u).zip(v.values()).map(|((w, u), v)| w * u * v).sum())
            .collect())
    }
}

fn check_truncate(p: usize, have: usize) -> Result<()> {
    if p == 0 || p > have {
        return Err(Error::arg(format!("cannot keep {p} of {have} components")));
    }
    Ok(())
}

fn truncate_parts(d: &mut Vec<Vec<f64>>, s: &mut Vec<f64>, c: &mut [Vec<f64>], e: &mut Vec<f64>, p: usize) {
    d.truncate(p);
    s.truncate(p);
    e.truncate(p);
    c.iter_mut().for_each(|row| row.truncate(p));
}

fn stack_h(q: &Srsf) -> Vec<f64> {
    let mut h = q.values().to_vec();
    h.push(q.f0());
    h
}

fn split_h(grid: Grid, mut h: Vec<f64>) -> Srsf {
    let f0 = h.pop().expect("h has T + 1 entries");
    Srsf::from_parts(grid, h, f0)
}

/// Principal axes of the columns of `x` (already centered and scaled so
/// that `x xᵀ` is the covariance), via the `n × n` Gram matrix. Returns `p`
/// orthonormal axes, completed with unit vectors orthogonal to `normal` once
/// the data run out of rank, and the full non-increasing spectrum.
fn principal_axes(x: &DMatrix<f64>, normal: Option<&[f64]>, p: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let dim = x.nrows();
    let eig = nalgebra::SymmetricEigen::new(x.transpose() * x);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let spectrum: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
    let total: f64 = spectrum.iter().sum();

    let mut axes: Vec<Vec<f64>> = Vec::with_capacity(p);
    let mut spare = 0..dim;
    for j in 0..p {
        let mut u = None;
        if j < order.len() && spectrum[j] > 1e-28 * total {
            let cand: Vec<f64> = (x * eig.eigenvectors.column(order[j])).iter().copied().collect();
            u = orthogonalize(cand, normal, &axes);
        }
        while u.is_none() {
            let Some(k) = spare.next() else { break };
            let mut e = vec![0.0; dim];
            e[k] = 1.0;
            u = orthogonalize(e, normal, &axes);
        }
        let mut u = u.expect("dimension exceeds the number of requested axes");
        fix_sign(&mut u);
        axes.push(u);
    }
    (axes, spectrum)
}

fn fix_sign(u: &mut [f64]) -> bool {
    let mut best = 0;
    for k in 1..u.len() {
        if u[k].abs() > u[best].abs() {
            best = k;
        }
    }
    if u[best] < 0.0 {
        u.iter_mut().for_each(|v| *v = -*v);
        true
    } else {
        false
    }
}

fn fractions(kept: &[f64], spectrum: &[f64]) -> Vec<f64> {
    let total: f64 = spectrum.iter().sum();
    kept.iter().map(|v| if total > 0.0 { v / total } else { 0.0 }).collect()
}

struct EuclideanPca {
    mean: Vec<f64>,
    directions: Vec<Vec<f64>>,
    singular_values: Vec<f64>,
    spectrum: Vec<f64>,
    coefficients: Vec<Vec<f64>>,
    energy_fraction: Vec<f64>,
}

fn euclidean_pca(rows: &[Vec<f64>], p: usize) -> EuclideanPca {
    let n = rows.len();
    let dim = rows[0].len();
    // offset by the first row so identical inputs give an exact mean
    let mut mean = vec![0.0; dim];
    for h in &rows[1..] {
        mean.iter_mut().zip(h).zip(&rows[0]).for_each(|((m, v), b)| *m += v - b);
    }
    mean.iter_mut().zip(&rows[0]).for_each(|(m, b)| *m = b + *m / n as f64);

    let scale = 1.0 / ((n - 1) as f64).sqrt();
    let x = DMatrix::from_fn(dim, n, |r, c| (rows[c][r] - mean[r]) * scale);
    let (directions, spectrum) = principal_axes(&x, None, p);
    let coefficients = rows
        .iter()
        .map(|h| {
            directions
                .iter()
                .map(|u| u.iter().zip(h).zip(&mean).map(|((u, h), m)| u * (h - m)).sum())
                .collect()
        })
        .collect();
    let singular_values = spectrum[..p].to_vec();
    let energy_fraction = fractions(&singular_values, &spectrum);
    EuclideanPca { mean, directions, singular_values, spectrum, coefficients, energy_fraction }
}

fn check_p(p: usize, n: usize, dim: usize) -> Result<()> {
    let max = (n - 1).min(dim);
    if p == 0 || p > max {
        return Err(Error::arg(format!("number of components must be in 1..={max}, got {p}")));
    }
    Ok(())
}

/// Vertical fPCA of aligned SRSFs, keeping `p ≤ min(n - 1, T + 1)`
/// components.
pub fn vertical_fpca(aligned: &[Srsf], p: usize) -> Result<VerticalFpca> {
    let n = aligned.len();
    if n < 2 {
        return Err(Error::arg("vertical fPCA needs at least 2 functions"));
    }
    let grid = *aligned[0].grid();
    for q in &aligned[1..] {
        grid.ensure_same(q.grid(), "vertical_fpca")?;
    }
    check_p(p, n, grid.len() + 1)?;
    let hs: Vec<Vec<f64>> = aligned.iter().map(stack_h).collect();
    let e = euclidean_pca(&hs, p);
    Ok(VerticalFpca {
        grid,
        mu_h: e.mean,
        directions: e.directions,
        singular_values: e.singular_values,
        spectrum: e.spectrum,
        coefficients: e.coefficients,
        energy_fraction: e.energy_fraction,
    })
}

/// Principal components of function values, with no alignment. This is the
/// standard L² analysis used as a baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct L2Fpca {
    pub grid: Grid,
    pub mean: Vec<f64>,
    pub directions: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
    pub spectrum: Vec<f64>,
    pub coefficients: Vec<Vec<f64>>,
    pub energy_fraction: Vec<f64>,
}

impl L2Fpca {
    pub fn p(&self) -> usize {
        self.directions.len()
    }

    pub fn truncate(&self, p: usize) -> Result<L2Fpca> {
        check_truncate(p, self.p())?;
        let mut out = self.clone();
        truncate_parts(&mut out.directions, &mut out.singular_values, &mut out.coefficients, &mut out.energy_fraction, p);
        Ok(out)
    }

    pub fn project(&self, f: &SampledFunction) -> Result<Vec<f64>> {
        self.grid.ensure_same(f.grid(), "L2Fpca::project")?;
        Ok(self
            .directions
            .iter()
            .map(|u| u.iter().zip(f.values()).zip(&self.mean).map(|((u, v), m)| u * (v - m)).sum())
            .collect())
    }

    /// `mean + Σ c_j U_j`; missing trailing coefficients count as zero.
    pub fn reconstruct(&self, c: &[f64]) -> Result<SampledFunction> {
        if c.len() > self.p() {
            return Err(Error::arg(format!("at most {} coefficients, got {}", self.p(), c.len())));
        }
        let mut v = self.mean.clone();
        for (u, &cj) in self.directions.iter().zip(c) {
            v.iter_mut().zip(u).for_each(|(a, u)| *a += cj * u);
        }
        SampledFunction::new(self.grid, v)
    }
}

/// Euclidean fPCA of raw function values, keeping `p ≤ min(n - 1, T)`.
pub fn l2_fpca(fs: &[SampledFunction], p: usize) -> Result<L2Fpca> {
    let n = fs.len();
    if n < 2 {
        return Err(Error::arg("fPCA needs at least 2 functions"));
    }
    let grid = *fs[0].grid();
    for f in &fs[1..] {
        grid.ensure_same(f.grid(), "l2_fpca")?;
    }
    check_p(p, n, grid.len())?;
    let rows: Vec<Vec<f64>> = fs.iter().map(|f| f.values().to_vec()).collect();
    let e = euclidean_pca(&rows, p);
    Ok(L2Fpca {
        grid,
        mean: e.mean,
        directions: e.directions,
        singular_values: e.singular_values,
        spectrum: e.spectrum,
        coefficients: e.coefficients,
        energy_fraction: e.energy_fraction,
    })
}

/// Horizontal fPCA of warps: Karcher mean with default settings, then
/// [`horizontal_fpca_from_mean`].
pub fn horizontal_fpca(warps: &[Warp], p: usize) -> Result<HorizontalFpca> {
    if warps.len() < 2 {
        return Err(Error::arg("horizontal fPCA needs at least 2 warps"));
    }
    let mean = karcher_mean_warps(warps, &KarcherConfig::default())?;
    horizontal_fpca_from_mean(&mean, p)
}

/// Horizontal fPCA from a precomputed Karcher mean and its shooting vectors,
/// keeping `p ≤ T - 1` components. Directions beyond the rank of the data
/// are completed to an orthonormal tangent set.
pub fn horizontal_fpca_from_mean(mean: &WarpMean, p: usize) -> Result<HorizontalFpca> {
    let n = mean.shooting.len();
    if n < 2 {
        return Err(Error::arg("horizontal fPCA needs at least 2 warps"));
    }
    let grid = *mean.mu_psi.grid();
    let t = grid.len();
    if p == 0 || p > t - 1 {
        return Err(Error::arg(format!("number of components must be in 1..={}, got {p}", t - 1)));
    }
    let w = grid.trapz_weights();
    let rw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let scale = 1.0 / ((n - 1) as f64).sqrt();
    let x = DMatrix::from_fn(t, n, |r, c| mean.shooting[c].values()[r] * rw[r] * scale);
    // W^{1/2} μ, normalized; axes must be orthogonal to it
    let mut normal: Vec<f64> = mean.mu_psi.values().iter().zip(&rw).map(|(m, r)| m * r).collect();
    let nn = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
    normal.iter_mut().for_each(|v| *v /= nn);
    let (basis, mut spectrum) = principal_axes(&x, Some(&normal), p);
    if spectrum.len() < p {
        spectrum.resize(p, 0.0);
    }

    let coefficients = mean
        .shooting
        .iter()
        .map(|v| {
            basis
                .iter()
                .map(|u| u.iter().zip(v.values()).zip(&rw).map(|((u, v), r)| u * v * r).sum())
                .collect()
        })
        .collect();
    // back to function space: U = W^{-1/2} ũ
    let directions: Vec<Vec<f64>> = basis
        .into_iter()
        .map(|u| u.into_iter().zip(&rw).map(|(u, r)| u / r).collect())
        .collect();
    let singular_values = spectrum[..p].to_vec();
    let energy_fraction = fractions(&singular_values, &spectrum);
    Ok(HorizontalFpca {
        grid,
        mu_psi: mean.mu_psi.values().to_vec(),
        mean_warp: mean.mean.values().to_vec(),
        directions,
        singular_values,
        spectrum,
        coefficients,
        energy_fraction,
    })
}

/// Two passes of Gram-Schmidt against `normal` and `basis`; `None` if the
/// remainder is numerically zero.
fn orthogonalize(mut u: Vec<f64>, normal: Option<&[f64]>, basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    let start = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    if start == 0.0 {
        return None;
    }
    for _ in 0..2 {
        for b in normal.into_iter().chain(basis.iter().map(|b| b.as_slice())) {
            let d: f64 = u.iter().zip(b).map(|(a, b)| a * b).sum();
            u.iter_mut().zip(b).for_each(|(a, b)| *a -= d * b);
        }
    }
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= 1e-8 * start {
        return None;
    }
    u.iter_mut().for_each(|v| *v /= norm);
    Some(u)
}

/// `from_srsf(μ_h + τ sqrt(Σ_jj) U_j)`, with `j` counted from 1.
pub fn principal_path_vertical(basis: &VerticalFpca, j: usize, tau: f64) -> Result<SampledFunction> {
    if j == 0 || j > basis.p() {
        return Err(Error::arg(format!("component {j} not in 1..={}", basis.p())));
    }
    let s = tau * basis.singular_values[j - 1].max(0.0).sqrt();
    let h = basis.mu_h.iter().zip(&basis.directions[j - 1]).map(|(m, u)| m + s * u).collect();
    Ok(from_srsf(&split_h(basis.grid, h)))
}

/// `from_psi(exp_μ(τ sqrt(Σ_jj) U_j))`, with `j` counted from 1.
pub fn principal_path_horizontal(basis: &HorizontalFpca, j: usize, tau: f64) -> Result<Warp> {
    if j == 0 || j > basis.p() {
        return Err(Error::arg(format!("component {j} not in 1..={}", basis.p())));
    }
    let s = tau * basis.singular_values[j - 1].max(0.0).sqrt();
    let v = ShootingVector::new(basis.grid, basis.directions[j - 1].iter().map(|u| s * u).collect())?;
    Ok(from_psi(&sphere_exp(&basis.mu()?, &v)))
}

/// Smallest `k` whose leading values hold at least `threshold` of the total.
/// An all-zero spectrum gives 1 with a warning.
pub fn select_components(values: &[f64], threshold: f64) -> Result<usize> {
    if values.is_empty() {
        return Err(Error::arg("empty spectrum"));
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::arg(format!("energy threshold must be in (0, 1], got {threshold}")));
    }
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        log::warn!("all-zero spectrum, keeping one component");
        return Ok(1);
    }
    let mut acc = 0.0;
    for (k, v) in values.iter().enumerate() {
        acc += v;
        if acc / total >= threshold {
            return Ok(k + 1);
        }
    }
    Ok(values.len())
}
