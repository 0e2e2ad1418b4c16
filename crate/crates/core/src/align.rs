//! Pairwise elastic registration by dynamic programming, the amplitude
//! distance, multi-function phase-amplitude separation and the
//! original / amplitude / phase variance decomposition.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcrep::{cross_sectional_variance, interp_index, Grid, SampledFunction};
use crate::srsf::{from_srsf, l2_distance, to_srsf, warp_action, Srsf};
use crate::warpspace::{karcher_mean_warps, KarcherConfig, Warp};

/// Node lattice and admissible step set for the DP solver.
///
/// Node `(i, j)` means `γ(t_i) = t_j`. Steps are coprime `(Δrow, Δcol)`
/// pairs with both entries in `1..=slope_cap`, ordered by distance to
/// `(1, 1)` and then by `Δrow`; that order is the tie-break.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DpLattice {
    n: usize,
    slopes: Vec<(usize, usize)>,
}

impl DpLattice {
    pub fn new(n: usize, slope_cap: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::arg("DP lattice needs at least 3 nodes per axis"));
        }
        if slope_cap == 0 {
            return Err(Error::arg("slope cap must be at least 1"));
        }
        let mut slopes: Vec<(usize, usize)> = (1..=slope_cap)
            .flat_map(|a| (1..=slope_cap).map(move |b| (a, b)))
            .filter(|&(a, b)| gcd(a, b) == 1)
            .collect();
        slopes.sort_by_key(|&(a, b)| ((a as i64 - 1).pow(2) + (b as i64 - 1).pow(2), a));
        Ok(DpLattice { n, slopes })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn slopes(&self) -> &[(usize, usize)] {
        &self.slopes
    }
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Cost of the straight segment `(k, l) -> (i, j)`:
/// `∫_{t_k}^{t_i} (q1(t) - q2(γ(t)) sqrt(γ'))² dt` with `γ` linear on the
/// segment, by trapezoid over the `q1` nodes it spans.
pub fn segment_cost(q1: &[f64], q2: &[f64], h: f64, from: (usize, usize), to: (usize, usize)) -> f64 {
    let (k, l) = from;
    let (i, j) = to;
    let a = i - k;
    let b = j - l;
    let ratio = b as f64 / a as f64;
    let root = ratio.sqrt();
    let mut acc = 0.0;
    for s in 0..=a {
        let pos = l as f64 + (s * b) as f64 / a as f64;
        let e = q1[k + s] - interp_index(q2, pos) * root;
        let e2 = e * e;
        acc += if s == 0 || s == a { 0.5 * e2 } else { e2 };
    }
    h * acc
}

/// Optimal lattice warp `argmin_γ |q1 - (q2, γ)|` and its DP cost.
pub fn optimal_warp_with_cost(q1: &Srsf, q2: &Srsf, lattice: &DpLattice) -> Result<(Warp, f64)> {
    q1.grid().ensure_same(q2.grid(), "optimal_warp")?;
    let n = lattice.n;
    if q1.grid().len() != n {
        return Err(Error::arg(format!(
            "lattice has {} nodes but the SRSFs have {} samples",
            n,
            q1.grid().len()
        )));
    }
    let (a, b) = (q1.values(), q2.values());
    let h = 1.0 / (n - 1) as f64;
    let mut cost = vec![f64::INFINITY; n * n];
    let mut pred = vec![usize::MAX; n * n];
    cost[0] = 0.0;
    for i in 1..n {
        for j in 1..n {
            let mut best = f64::INFINITY;
            let mut arg = usize::MAX;
            for (s, &(di, dj)) in lattice.slopes.iter().enumerate() {
                if di > i || dj > j {
                    continue;
                }
                let prev = cost[(i - di) * n + (j - dj)];
                if !prev.is_finite() {
                    continue;
                }
                let c = prev + segment_cost(a, b, h, (i - di, j - dj), (i, j));
                if c < best {
                    best = c;
                    arg = s;
                }
            }
            cost[i * n + j] = best;
            pred[i * n + j] = arg;
        }
    }

    // backtrack, filling rows inside each segment by linear interpolation
    let mut gamma = vec![0.0; n];
    let (mut i, mut j) = (n - 1, n - 1);
    gamma[i] = j as f64;
    while i > 0 {
        let (di, dj) = lattice.slopes[pred[i * n + j]];
        for s in 1..di {
            gamma[i - s] = j as f64 - (s * dj) as f64 / di as f64;
        }
        i -= di;
        j -= dj;
        gamma[i] = j as f64;
    }
    debug_assert_eq!(j, 0);
    let grid = Grid::unit(n)?;
    let mut values: Vec<f64> = gamma.iter().map(|g| g * h).collect();
    values[n - 1] = 1.0;
    Ok((Warp::new(grid, values)?, cost[n * n - 1]))
}

/// Optimal lattice warp `argmin_γ |q1 - (q2, γ)|`.
pub fn optimal_warp(q1: &Srsf, q2: &Srsf, lattice: &DpLattice) -> Result<Warp> {
    optimal_warp_with_cost(q1, q2, lattice).map(|(w, _)| w)
}

/// DP resolution settings. Inputs finer than `lattice_cap` are resampled
/// down for the solve and the resulting warp is interpolated back up.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignConfig {
    pub lattice_cap: usize,
    pub slope_cap: usize,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig { lattice_cap: 241, slope_cap: 7 }
    }
}

/// Optimal warp aligning `q2` to `q1` at the configured lattice resolution,
/// returned on the SRSFs' own grid.
pub fn pairwise_warp(q1: &Srsf, q2: &Srsf, cfg: &AlignConfig) -> Result<Warp> {
    q1.grid().ensure_same(q2.grid(), "pairwise_warp")?;
    let n = q1.grid().len();
    let m = n.min(cfg.lattice_cap.max(3));
    let lattice = DpLattice::new(m, cfg.slope_cap)?;
    if m == n {
        return optimal_warp(q1, q2, &lattice);
    }
    let coarse = Grid::unit(m)?;
    let down = |q: &Srsf| {
        let scale = (n - 1) as f64 / (m - 1) as f64;
        let v = (0..m).map(|k| interp_index(q.values(), k as f64 * scale)).collect();
        Srsf::new(coarse, v, q.f0())
    };
    optimal_warp(&down(q1)?, &down(q2)?, &lattice)?.on_grid(n)
}

/// `D_y(f1, f2) = inf_γ |q1 - (q2, γ)|`.
pub fn amplitude_distance(f1: &SampledFunction, f2: &SampledFunction, cfg: &AlignConfig) -> Result<f64> {
    f1.grid().ensure_same(f2.grid(), "amplitude_distance")?;
    let (q1, q2) = (to_srsf(f1), to_srsf(f2));
    let g = pairwise_warp(&q1, &q2, cfg)?;
    l2_distance(&q1, &warp_action(&q2, &g)?)
}

/// Settings for [`separate`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationConfig {
    pub align: AlignConfig,
    /// Stop when `|mean(q̃_i) - μ|` falls to this level.
    pub tol: f64,
    pub max_iter: usize,
    pub karcher: KarcherConfig,
}

impl Default for SeparationConfig {
    fn default() -> Self {
        SeparationConfig {
            align: AlignConfig::default(),
            tol: 1e-4,
            max_iter: 20,
            karcher: KarcherConfig::default(),
        }
    }
}

/// Output of phase-amplitude separation.
#[derive(Clone, Debug)]
pub struct SeparationResult {
    /// Centered Karcher mean SRSF; its `f0` is the mean initial value.
    pub mu_q: Srsf,
    pub aligned: Vec<Srsf>,
    /// `γ_i*` with `(q_i, γ_i*) = q̃_i`.
    pub warps: Vec<Warp>,
    pub aligned_functions: Vec<SampledFunction>,
    pub iterations: usize,
    /// `Σ_i |μ - q̃_i|²` after each alignment pass.
    pub cost_trace: Vec<f64>,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl SeparationResult {
    /// `μ_f`, the function whose SRSF is `mu_q`.
    pub fn mean_function(&self) -> SampledFunction {
        from_srsf(&self.mu_q)
    }
}

/// Karcher-mean alignment of a set of functions.
///
/// Iterates DP alignment to the current template and template update until
/// the template increment drops below `tol`. If the alignment cost goes up,
/// the previous iterate is kept and the loop stops there. The template is
/// then centered so the warps' Karcher mean is the identity.
///
/// Hitting `max_iter` returns [`Error::SeparationNotConverged`] carrying the
/// fully centered last iterate.
pub fn separate(fs: &[SampledFunction], cfg: &SeparationConfig) -> Result<SeparationResult> {
    if fs.len() < 2 {
        return Err(Error::arg("separation needs at least 2 functions"));
    }
    let grid = *fs[0].grid();
    for f in &fs[1..] {
        grid.ensure_same(f.grid(), "separate")?;
    }
    let qs: Vec<Srsf> = fs.iter().map(to_srsf).collect();
    let n = qs.len() as f64;
    let mean_f0 = fs.iter().map(|f| f.values()[0]).sum::<f64>() / n;

    let qbar = mean_srsf(&qs, mean_f0);
    let mut mu = qs
        .iter()
        .map(|q| l2_distance(q, &qbar))
        .collect::<Result<Vec<_>>>()?
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| qs[i].clone().with_f0(mean_f0))
        .expect("non-empty");

    let mut cost_trace: Vec<f64> = Vec::new();
    let mut warps: Vec<Warp> = Vec::new();
    // template the retained warps were computed against
    let mut template = mu.clone();
    let mut converged = false;
    let mut iterations = 0;
    let mut warnings = Vec::new();
    for iter in 1..=cfg.max_iter {
        let new_warps = qs
            .par_iter()
            .map(|q| pairwise_warp(&mu, q, &cfg.align))
            .collect::<Result<Vec<_>>>()?;
        let aligned = qs
            .iter()
            .zip(&new_warps)
            .map(|(q, g)| warp_action(q, g))
            .collect::<Result<Vec<_>>>()?;
        let cost: f64 = aligned
            .iter()
            .map(|q| l2_distance(&mu, q).map(|d| d * d))
            .sum::<Result<f64>>()?;
        if cost_trace.last().is_some_and(|&prev| cost > prev) {
            converged = true;
            break;
        }
        cost_trace.push(cost);
        warps = new_warps;
        template = mu.clone();
        iterations = iter;
        let next = mean_srsf(&aligned, mean_f0);
        if l2_distance(&next, &mu)? <= cfg.tol {
            converged = true;
            break;
        }
        mu = next;
    }

    // center: make the Karcher mean of the warps the identity
    let gamma_mu = match karcher_mean_warps(&warps, &cfg.karcher) {
        Ok(m) => m.mean,
        Err(Error::WarpMeanNotConverged(last)) => {
            warnings.push(format!(
                "warp Karcher mean stopped after {} iterations (|v| = {:.3e})",
                last.iterations, last.residual
            ));
            last.mean
        }
        Err(e) => return Err(e),
    };
    let gamma_mu_inv = gamma_mu.invert();
    let mu_q = warp_action(&template, &gamma_mu_inv)?.with_f0(mean_f0);
    let warps = warps
        .iter()
        .map(|g| g.compose(&gamma_mu_inv))
        .collect::<Result<Vec<_>>>()?;
    let aligned = qs
        .iter()
        .zip(&warps)
        .map(|(q, g)| warp_action(q, g))
        .collect::<Result<Vec<_>>>()?;
    let aligned_functions = aligned.iter().map(from_srsf).collect();

    if !converged {
        warnings.push(format!("separation stopped after {} iterations", cfg.max_iter));
    }
    let result = SeparationResult {
        mu_q,
        aligned,
        warps,
        aligned_functions,
        iterations,
        cost_trace,
        converged,
        warnings,
    };
    if converged {
        Ok(result)
    } else {
        Err(Error::SeparationNotConverged(Box::new(result)))
    }
}

/// Runs [`separate`], accepting a non-converged last iterate.
pub fn separate_lenient(fs: &[SampledFunction], cfg: &SeparationConfig) -> Result<SeparationResult> {
    match separate(fs, cfg) {
        Err(Error::SeparationNotConverged(last)) => Ok(*last),
        other => other,
    }
}

fn mean_srsf(qs: &[Srsf], f0: f64) -> Srsf {
    let grid = *qs[0].grid();
    let n = qs.len() as f64;
    let mut acc = vec![0.0; grid.len()];
    for q in qs {
        acc.iter_mut().zip(q.values()).for_each(|(a, v)| *a += v / n);
    }
    Srsf::from_parts(grid, acc, f0)
}

/// Cross-sectional variances of the data, the aligned functions, and the
/// mean function re-warped by each inverse alignment warp.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceDecomposition {
    pub original_variance: f64,
    pub amplitude_variance: f64,
    pub phase_variance: f64,
}

pub fn variance_decomposition(fs: &[SampledFunction], result: &SeparationResult) -> Result<VarianceDecomposition> {
    let original_variance = cross_sectional_variance(fs)?;
    let amplitude_variance = cross_sectional_variance(&result.aligned_functions)?;
    let mu_f = result.mean_function();
    let rewarped: Vec<SampledFunction> = result
        .warps
        .iter()
        .map(|g| {
            let inv = g.invert();
            let (t0, t1) = (mu_f.grid().t0(), mu_f.grid().t1());
            let values = inv.values().iter().map(|&t| mu_f.eval(t0 + t * (t1 - t0))).collect();
            SampledFunction::new(*mu_f.grid(), values)
        })
        .collect::<Result<_>>()?;
    let phase_variance = cross_sectional_variance(&rewarped)?;
    Ok(VarianceDecomposition { original_variance, amplitude_variance, phase_variance })
}
