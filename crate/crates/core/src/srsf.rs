//! Square-root slope functions.
//!
//! A function `f` maps to the pair `(q, f(0))` with
//! `q = sign(f') sqrt(|f'|)`; warping `f ∘ γ` acts on `q` by
//! `(q ∘ γ) sqrt(γ')`, which preserves L² distances.

use crate::error::Result;
use crate::funcrep::{cumtrapz_uniform, gradient_values, interp_index, trapz_uniform, Grid, SampledFunction};
use crate::warpspace::Warp;

/// SRSF samples together with the initial value of the source function.
#[derive(Clone, Debug, PartialEq)]
pub struct Srsf {
    grid: Grid,
    values: Vec<f64>,
    f0: f64,
}

impl Srsf {
    pub fn new(grid: Grid, values: Vec<f64>, f0: f64) -> Result<Self> {
        // reuse the finiteness/length checks
        let f = SampledFunction::new(grid, values)?;
        Ok(Srsf { grid, values: f.into_values(), f0 })
    }

    pub(crate) fn from_parts(grid: Grid, values: Vec<f64>, f0: f64) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Srsf { grid, values, f0 }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn f0(&self) -> f64 {
        self.f0
    }

    pub fn with_f0(mut self, f0: f64) -> Self {
        self.f0 = f0;
        self
    }

    /// L² norm of `q`, by trapezoid.
    pub fn norm(&self) -> f64 {
        let sq: Vec<f64> = self.values.iter().map(|v| v * v).collect();
        trapz_uniform(&sq, self.grid.spacing()).sqrt()
    }

    pub fn to_function(&self) -> SampledFunction {
        from_srsf(self)
    }
}

/// `q_k = sign(f'(t_k)) sqrt(|f'(t_k)|)`, keeping `f(t_0)`.
pub fn to_srsf(f: &SampledFunction) -> Srsf {
    let grid = *f.grid();
    let d = gradient_values(f.values(), grid.spacing());
    let q = d.iter().map(|&v| v.signum() * v.abs().sqrt()).collect();
    Srsf::from_parts(grid, q, f.values()[0])
}

/// `f(t) = f(0) + ∫_0^t q|q|`, cumulative trapezoid.
pub fn from_srsf(q: &Srsf) -> SampledFunction {
    let integrand: Vec<f64> = q.values.iter().map(|v| v * v.abs()).collect();
    let mut f = cumtrapz_uniform(&integrand, q.grid.spacing());
    f.iter_mut().for_each(|v| *v += q.f0);
    SampledFunction::from_parts(q.grid, f)
}

/// `(q, γ)(t) = q(γ(t)) sqrt(γ'(t))`. The warp is resampled onto the SRSF
/// grid when the two differ in resolution.
pub fn warp_action(q: &Srsf, g: &Warp) -> Result<Srsf> {
    let g = g.on_grid(q.grid.len())?;
    let n = q.grid.len();
    let last = (n - 1) as f64;
    let gd = gradient_values(g.values(), g.grid().spacing());
    let values = g
        .values()
        .iter()
        .zip(&gd)
        .map(|(&gt, &d)| interp_index(&q.values, gt * last) * d.max(0.0).sqrt())
        .collect();
    Ok(Srsf::from_parts(q.grid, values, q.f0))
}

/// L² distance between the `q` parts; initial values are ignored.
pub fn l2_distance(q1: &Srsf, q2: &Srsf) -> Result<f64> {
    q1.grid.ensure_same(&q2.grid, "l2_distance")?;
    let sq: Vec<f64> = q1
        .values
        .iter()
        .zip(&q2.values)
        .map(|(a, b)| (a - b).powi(2))
        .collect();
    Ok(trapz_uniform(&sq, q1.grid.spacing()).sqrt())
}
