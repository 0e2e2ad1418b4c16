//! Functions sampled on uniform grids and the numerical kernels shared by
//! every other module: finite differences, trapezoid quadrature, the
//! three-tap box filter, linear resampling and cross-sectional variance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `t_k = t0 + k (t1 - t0) / (n - 1)`, `k = 0..n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    t0: f64,
    t1: f64,
    n: usize,
}

impl Grid {
    pub fn new(t0: f64, t1: f64, n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::arg(format!("grid needs at least 3 samples, got {n}")));
        }
        if !(t0.is_finite() && t1.is_finite() && t1 > t0) {
            return Err(Error::arg(format!("grid interval [{t0}, {t1}] is empty or not finite")));
        }
        Ok(Grid { t0, t1, n })
    }

    /// `n` samples on `[0, 1]`.
    pub fn unit(n: usize) -> Result<Self> {
        Grid::new(0.0, 1.0, n)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        (self.t1 - self.t0) / (self.n - 1) as f64
    }

    pub fn point(&self, k: usize) -> f64 {
        if k + 1 == self.n {
            self.t1
        } else {
            self.t0 + k as f64 * self.spacing()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.point(k)).collect()
    }

    /// Same interval, compared with a relative tolerance on the endpoints.
    pub fn same_as(&self, other: &Grid) -> bool {
        let scale = 1e-12 * (self.t1 - self.t0).abs().max(1.0);
        self.n == other.n && (self.t0 - other.t0).abs() <= scale && (self.t1 - other.t1).abs() <= scale
    }

    /// Trapezoid weights: `h/2` at the ends, `h` inside.
    pub fn trapz_weights(&self) -> Vec<f64> {
        let h = self.spacing();
        let mut w = vec![h; self.n];
        w[0] = 0.5 * h;
        w[self.n - 1] = 0.5 * h;
        w
    }

    pub(crate) fn ensure_same(&self, other: &Grid, what: &str) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::arg(format!(
                "{what}: grids differ ([{}, {}] x {} vs [{}, {}] x {})",
                self.t0, self.t1, self.n, other.t0, other.t1, other.n
            )))
        }
    }
}

/// A real-valued function observed on a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct SampledFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl SampledFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::arg(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::arg(format!("sample {k} is not finite")));
        }
        Ok(SampledFunction { grid, values })
    }

    /// Samples `f` at the grid points.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        SampledFunction::new(grid, grid.points().into_iter().map(f).collect())
    }

    pub(crate) fn from_parts(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        SampledFunction { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Linear interpolation at an arbitrary abscissa, clamped to the domain.
    pub fn eval(&self, t: f64) -> f64 {
        interp_uniform(&self.values, self.grid.t0, self.grid.spacing(), t)
    }

    pub fn gradient(&self) -> SampledFunction {
        gradient(self)
    }

    pub fn trapz(&self) -> f64 {
        trapz(self)
    }
}

/// Second-order finite differences: central inside, one-sided at the ends.
pub fn gradient(f: &SampledFunction) -> SampledFunction {
    SampledFunction::from_parts(f.grid, gradient_values(&f.values, f.grid.spacing()))
}

pub(crate) fn gradient_values(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    debug_assert!(n >= 3);
    let mut d = vec![0.0; n];
    d[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
    d[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h);
    for k in 1..n - 1 {
        d[k] = (v[k + 1] - v[k - 1]) / (2.0 * h);
    }
    d
}

/// Composite trapezoid rule over the grid.
pub fn trapz(f: &SampledFunction) -> f64 {
    trapz_uniform(&f.values, f.grid.spacing())
}

/// Composite trapezoid rule for samples with spacing `h` (any length ≥ 2).
pub fn trapz_uniform(v: &[f64], h: f64) -> f64 {
    match v.len() {
        0 | 1 => 0.0,
        n => {
            let inner: f64 = v[1..n - 1].iter().sum();
            h * (inner + 0.5 * (v[0] + v[n - 1]))
        }
    }
}

/// Running trapezoid integral, starting at zero.
pub(crate) fn cumtrapz_uniform(v: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in v.windows(2) {
        acc += 0.5 * h * (w[0] + w[1]);
        out.push(acc);
    }
    out
}

/// Applies the `[1/4, 1/2, 1/4]` filter `iterations` times with both
/// endpoints held fixed.
pub fn smooth_box(f: &SampledFunction, iterations: usize) -> SampledFunction {
    let mut cur = f.values.clone();
    let mut next = cur.clone();
    let n = cur.len();
    for _ in 0..iterations {
        for k in 1..n - 1 {
            next[k] = 0.25 * cur[k - 1] + 0.5 * cur[k] + 0.25 * cur[k + 1];
        }
        std::mem::swap(&mut cur, &mut next);
    }
    SampledFunction::from_parts(f.grid, cur)
}

/// Piecewise-linear interpolation of `f` onto `grid`.
pub fn resample(f: &SampledFunction, grid: &Grid) -> Result<SampledFunction> {
    let slack = 1e-12 * (f.grid.t1 - f.grid.t0);
    if grid.t0 < f.grid.t0 - slack || grid.t1 > f.grid.t1 + slack {
        return Err(Error::Domain(format!(
            "target [{}, {}] exceeds source domain [{}, {}]",
            grid.t0, grid.t1, f.grid.t0, f.grid.t1
        )));
    }
    if grid.same_as(&f.grid) {
        return Ok(SampledFunction::from_parts(*grid, f.values.clone()));
    }
    let h = f.grid.spacing();
    let values = grid
        .points()
        .into_iter()
        .map(|t| interp_uniform(&f.values, f.grid.t0, h, t))
        .collect();
    Ok(SampledFunction::from_parts(*grid, values))
}

/// Linear interpolation of samples `v` (grid start `t0`, spacing `h`) at `t`,
/// clamped to the sampled range.
pub(crate) fn interp_uniform(v: &[f64], t0: f64, h: f64, t: f64) -> f64 {
    interp_index(v, (t - t0) / h)
}

/// Linear interpolation at fractional index `x`, clamped to `[0, n-1]`.
pub(crate) fn interp_index(v: &[f64], x: f64) -> f64 {
    let last = v.len() - 1;
    if x <= 0.0 {
        return v[0];
    }
    if x >= last as f64 {
        return v[last];
    }
    let i = x.floor() as usize;
    let frac = x - i as f64;
    if frac == 0.0 {
        v[i]
    } else {
        v[i] + frac * (v[i + 1] - v[i])
    }
}

/// Linear interpolation through arbitrary strictly increasing knots `xs`.
pub(crate) fn interp_knots(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let last = xs.len() - 1;
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[last] {
        return ys[last];
    }
    // first knot strictly greater than x
    let hi = xs.partition_point(|&k| k <= x);
    let lo = hi - 1;
    let span = xs[hi] - xs[lo];
    ys[lo] + (x - xs[lo]) / span * (ys[hi] - ys[lo])
}

/// `(1/(n-1)) ∫ Σ_i (g_i(t) - ḡ(t))² dt`, integral by trapezoid.
pub fn cross_sectional_variance(fs: &[SampledFunction]) -> Result<f64> {
    if fs.len() < 2 {
        return Err(Error::arg("cross-sectional variance needs at least 2 functions"));
    }
    let grid = fs[0].grid;
    for f in &fs[1..] {
        grid.ensure_same(&f.grid, "cross-sectional variance")?;
    }
    let n = fs.len() as f64;
    let pointwise: Vec<f64> = (0..grid.len())
        .map(|k| {
            let mean = fs.iter().map(|f| f.values[k]).sum::<f64>() / n;
            fs.iter().map(|f| (f.values[k] - mean).powi(2)).sum::<f64>()
        })
        .collect();
    Ok(trapz_uniform(&pointwise, grid.spacing()) / (n - 1.0))
}

/// Pointwise mean of functions sharing a grid.
pub fn pointwise_mean(fs: &[SampledFunction]) -> Result<SampledFunction> {
    let first = fs.first().ok_or_else(|| Error::arg("mean of an empty list"))?;
    let mut acc = vec![0.0; first.grid.len()];
    for f in fs {
        first.grid.ensure_same(&f.grid, "pointwise mean")?;
        for (a, v) in acc.iter_mut().zip(&f.values) {
            *a += v;
        }
    }
    let n = fs.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(SampledFunction::from_parts(first.grid, acc))
}

/// Indices of interior local maxima that rise at least `rel_height` of the
/// range above the minimum. A plateau counts once, at its first sample.
pub fn local_maxima(f: &SampledFunction, rel_height: f64) -> Vec<usize> {
    let v = &f.values;
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let level = lo + rel_height * (hi - lo);
    let mut out = Vec::new();
    let mut k = 1;
    while k + 1 < v.len() {
        if v[k] > v[k - 1] {
            let mut e = k;
            while e + 1 < v.len() && v[e + 1] == v[k] {
                e += 1;
            }
            if e + 1 < v.len() && v[e + 1] < v[k] && v[k] >= level && hi > lo {
                out.push(k);
            }
            k = e + 1;
        } else {
            k += 1;
        }
    }
    out
}
