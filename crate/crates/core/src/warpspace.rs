//! Warping functions and their square-root-derivative representation on the
//! unit Hilbert sphere.
//!
//! A warp `γ` maps to `ψ = sqrt(γ')`, which has unit L² norm. Phase distance
//! is arc length on that sphere, and averages are Karcher means computed by
//! gradient descent with the sphere's exponential and log maps. All inner
//! products are trapezoid-weighted so the discrete sphere is an exact sphere
//! under that inner product.

use crate::error::{Error, Result};
use crate::funcrep::{cumtrapz_uniform, gradient_values, interp_index, interp_knots, Grid};

/// A strictly increasing map of `[0, 1]` onto itself, sampled on a unit grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Warp {
    grid: Grid,
    values: Vec<f64>,
}

impl Warp {
    /// Validates boundary values (within `1e-10`) and strict monotonicity.
    /// Endpoints are snapped to exactly 0 and 1.
    pub fn new(grid: Grid, mut values: Vec<f64>) -> Result<Self> {
        if grid.t0() != 0.0 || grid.t1() != 1.0 {
            return Err(Error::arg("warps live on the unit interval"));
        }
        if values.len() != grid.len() {
            return Err(Error::arg(format!(
                "warp has {} samples, grid has {}",
                values.len(),
                grid.len()
            )));
        }
        let n = values.len();
        if (values[0]).abs() > 1e-10 || (values[n - 1] - 1.0).abs() > 1e-10 {
            return Err(Error::arg(format!(
                "warp must fix the endpoints, got γ(0) = {}, γ(1) = {}",
                values[0],
                values[n - 1]
            )));
        }
        if let Some(k) = values.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::arg(format!("warp is not strictly increasing at sample {}", k + 1)));
        }
        values[0] = 0.0;
        values[n - 1] = 1.0;
        Ok(Warp { grid, values })
    }

    pub(crate) fn from_parts(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert!(values.windows(2).all(|w| w[1] > w[0]));
        Warp { grid, values }
    }

    pub fn identity(grid: Grid) -> Self {
        Warp::from_parts(grid, grid.points())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, t: f64) -> f64 {
        interp_index(&self.values, t * (self.values.len() - 1) as f64)
    }

    /// This warp sampled on an `n`-point unit grid.
    pub fn on_grid(&self, n: usize) -> Result<Warp> {
        if n == self.values.len() {
            return Ok(self.clone());
        }
        let grid = Grid::unit(n)?;
        let mut values: Vec<f64> = grid.points().into_iter().map(|t| self.eval(t)).collect();
        values[0] = 0.0;
        values[n - 1] = 1.0;
        Ok(Warp::from_parts(grid, values))
    }

    /// `t ↦ self(other(t))`, on `other`'s grid.
    pub fn compose(&self, other: &Warp) -> Result<Warp> {
        compose_warps(self, other)
    }

    pub fn invert(&self) -> Warp {
        invert_warp(self)
    }

    pub fn sup_distance(&self, other: &Warp) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Inverse by swapping axes and interpolating back onto the grid.
pub fn invert_warp(g: &Warp) -> Warp {
    let pts = g.grid.points();
    let n = pts.len();
    let mut values: Vec<f64> = pts.iter().map(|&t| interp_knots(&g.values, &pts, t)).collect();
    values[0] = 0.0;
    values[n - 1] = 1.0;
    Warp::from_parts(g.grid, values)
}

/// `t ↦ g1(g2(t))`, evaluated on `g2`'s grid.
pub fn compose_warps(g1: &Warp, g2: &Warp) -> Result<Warp> {
    let values = g2.values.iter().map(|&t| g1.eval(t)).collect();
    Ok(Warp::from_parts(g2.grid, values))
}

/// A point on the unit sphere of L²(0, 1).
#[derive(Clone, Debug, PartialEq)]
pub struct Psi {
    grid: Grid,
    values: Vec<f64>,
}

impl Psi {
    /// Validates unit norm within `1e-6`.
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::arg("psi length does not match its grid"));
        }
        let w = grid.trapz_weights();
        let norm2 = dot(&w, &values, &values);
        if (norm2 - 1.0).abs() > 1e-6 {
            return Err(Error::arg(format!("psi must have unit norm, got {}", norm2.sqrt())));
        }
        Ok(Psi { grid, values })
    }

    fn normalized(grid: Grid, mut values: Vec<f64>) -> Self {
        let w = grid.trapz_weights();
        let norm = dot(&w, &values, &values).sqrt();
        values.iter_mut().for_each(|v| *v /= norm);
        Psi { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The identity warp's representative, `ψ ≡ 1`.
    pub fn identity(grid: Grid) -> Self {
        Psi { grid, values: vec![1.0; grid.len()] }
    }

    /// Trapezoid inner product with any sampled vector on the same grid.
    pub fn inner(&self, other: &[f64]) -> f64 {
        dot(&self.grid.trapz_weights(), &self.values, other)
    }
}

/// Tangent vector at a point of the sphere.
#[derive(Clone, Debug, PartialEq)]
pub struct ShootingVector {
    grid: Grid,
    values: Vec<f64>,
}

impl ShootingVector {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::arg("tangent vector length does not match its grid"));
        }
        Ok(ShootingVector { grid, values })
    }

    pub fn zero(grid: Grid) -> Self {
        ShootingVector { grid, values: vec![0.0; grid.len()] }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Trapezoid L² norm.
    pub fn norm(&self) -> f64 {
        let w = self.grid.trapz_weights();
        dot(&w, &self.values, &self.values).sqrt()
    }

    pub fn scaled(&self, s: f64) -> ShootingVector {
        ShootingVector { grid: self.grid, values: self.values.iter().map(|v| v * s).collect() }
    }
}

pub(crate) fn dot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, a), b)| w * a * b).sum()
}

/// `ψ = sqrt(max(γ', 0))`, renormalized to unit norm.
pub fn to_psi(g: &Warp) -> Psi {
    let d = gradient_values(&g.values, g.grid.spacing());
    Psi::normalized(g.grid, d.into_iter().map(|v| v.max(0.0).sqrt()).collect())
}

/// `γ(t) = ∫_0^t ψ²`, rescaled so that `γ(1) = 1` exactly.
pub fn from_psi(p: &Psi) -> Warp {
    let h = p.grid.spacing();
    let sq: Vec<f64> = p.values.iter().map(|v| v * v).collect();
    let mut g = cumtrapz_uniform(&sq, h);
    // keep strict monotonicity where ψ vanishes on a whole cell
    let floor = 1e-12 * h * g[g.len() - 1].max(f64::MIN_POSITIVE);
    for k in 1..g.len() {
        if g[k] - g[k - 1] < floor {
            g[k] = g[k - 1] + floor;
        }
    }
    let end = g[g.len() - 1];
    g.iter_mut().for_each(|v| *v /= end);
    let last = g.len() - 1;
    g[0] = 0.0;
    g[last] = 1.0;
    Warp::from_parts(p.grid, g)
}

/// Arc length between two sphere points from the chord, `2 asin(|a - b| / 2)`.
/// Symmetric in its arguments to the last bit and accurate near 0, unlike
/// `acos(<a, b>)`.
fn sphere_angle(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let d2: f64 = w.iter().zip(a).zip(b).map(|((w, a), b)| w * (a - b) * (a - b)).sum();
    2.0 * (0.5 * d2.sqrt()).min(1.0).asin()
}

/// `D_x(γ1, γ2) = acos(∫ ψ1 ψ2)`.
pub fn phase_distance(g1: &Warp, g2: &Warp) -> Result<f64> {
    g1.grid.ensure_same(&g2.grid, "phase_distance")?;
    Ok(psi_distance(&to_psi(g1), &to_psi(g2)))
}

/// Arc length between two sphere points.
pub fn psi_distance(a: &Psi, b: &Psi) -> f64 {
    let w = a.grid.trapz_weights();
    sphere_angle(&w, &a.values, &b.values)
}

/// Log map: the shooting vector `θ/sin θ (ψ - cos θ μ)` at `mu` pointing to `p`.
pub fn sphere_log(mu: &Psi, p: &Psi) -> Result<ShootingVector> {
    mu.grid.ensure_same(&p.grid, "sphere_log")?;
    let w = mu.grid.trapz_weights();
    let theta = sphere_angle(&w, &mu.values, &p.values);
    if std::f64::consts::PI - theta < 1e-6 {
        return Err(Error::Geometry("log map undefined at the antipodal point".into()));
    }
    let ab = dot(&w, &mu.values, &p.values);
    let u: Vec<f64> = p.values.iter().zip(&mu.values).map(|(p, m)| p - ab * m).collect();
    let un = dot(&w, &u, &u).sqrt();
    if theta < 1e-10 || un == 0.0 {
        return Ok(ShootingVector::zero(mu.grid));
    }
    // θ/sin θ (ψ - cos θ μ) = θ u / |u| for unit inputs
    let s = theta / un;
    Ok(ShootingVector { grid: mu.grid, values: u.into_iter().map(|v| v * s).collect() })
}

/// Exponential map `cos(|v|) μ + sin(|v|) v/|v|`.
pub fn sphere_exp(mu: &Psi, v: &ShootingVector) -> Psi {
    let n = v.norm();
    if n < 1e-10 {
        return mu.clone();
    }
    let (c, s) = (n.cos(), n.sin() / n);
    let values = mu.values.iter().zip(&v.values).map(|(m, v)| c * m + s * v).collect();
    Psi::normalized(mu.grid, values)
}

/// Step size, stopping tolerance on `|v̄|`, and iteration cap for the warp
/// Karcher mean.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KarcherConfig {
    pub step: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for KarcherConfig {
    fn default() -> Self {
        KarcherConfig { step: 0.3, tol: 1e-6, max_iter: 200 }
    }
}

/// Output of the warp Karcher mean.
#[derive(Clone, Debug)]
pub struct WarpMean {
    pub mean: Warp,
    pub mu_psi: Psi,
    /// Shooting vectors of every input at `mu_psi`.
    pub shooting: Vec<ShootingVector>,
    pub iterations: usize,
    /// `|v̄|` at the returned mean.
    pub residual: f64,
    /// `Σ d(μ, ψ_i)²` per iteration.
    pub cost_trace: Vec<f64>,
}

/// Karcher mean of warps on the sphere, initialized at the normalized
/// extrinsic mean of the `ψ_i`.
pub fn karcher_mean_warps(gs: &[Warp], cfg: &KarcherConfig) -> Result<WarpMean> {
    let first = gs.first().ok_or_else(|| Error::arg("Karcher mean of an empty set"))?;
    let grid = first.grid;
    for g in gs {
        grid.ensure_same(&g.grid, "karcher_mean_warps")?;
    }
    if !(cfg.step > 0.0) {
        return Err(Error::arg("Karcher step size must be positive"));
    }
    let psis: Vec<Psi> = gs.iter().map(to_psi).collect();
    if gs.len() == 1 {
        return Ok(WarpMean {
            mean: first.clone(),
            mu_psi: psis[0].clone(),
            shooting: vec![ShootingVector::zero(grid)],
            iterations: 0,
            residual: 0.0,
            cost_trace: vec![0.0],
        });
    }

    let n = psis.len() as f64;
    let mut w = vec![0.0; grid.len()];
    for p in &psis {
        w.iter_mut().zip(&p.values).for_each(|(a, v)| *a += v / n);
    }
    let mut mu = Psi::normalized(grid, w);
    let mut cost_trace = Vec::new();
    let mut iter = 0;
    loop {
        let shooting = psis
            .iter()
            .map(|p| sphere_log(&mu, p))
            .collect::<Result<Vec<_>>>()?;
        cost_trace.push(shooting.iter().map(|v| v.norm().powi(2)).sum());
        let mut vbar = vec![0.0; grid.len()];
        for v in &shooting {
            vbar.iter_mut().zip(&v.values).for_each(|(a, x)| *a += x / n);
        }
        let vbar = ShootingVector { grid, values: vbar };
        let residual = vbar.norm();
        let done = residual <= cfg.tol;
        if done || iter == cfg.max_iter {
            let out = WarpMean {
                mean: from_psi(&mu),
                mu_psi: mu,
                shooting,
                iterations: iter,
                residual,
                cost_trace,
            };
            return if done { Ok(out) } else { Err(Error::WarpMeanNotConverged(Box::new(out))) };
        }
        mu = sphere_exp(&mu, &vbar.scaled(cfg.step));
        iter += 1;
    }
}
