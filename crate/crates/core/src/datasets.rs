//! Seeded simulation recipes with their ground truth, and functional data
//! files (CSV with a `t` column, or JSON).
//!
//! Every recipe draws from `ChaCha8Rng::seed_from_u64(seed)` with
//! `rand_distr::StandardNormal`, in the order documented on each generator.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcrep::{Grid, SampledFunction};
use crate::warpspace::Warp;

/// Grid size used by every recipe.
pub const SIM_GRID: usize = 101;

/// Standard deviation of the bumps in [`gen_unimodal_fig3`].
pub const FIG3_WIDTH: f64 = 0.09;

/// Functions per class in [`gen_two_class`].
pub const TWO_CLASS_N: usize = 25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Recipe {
    #[serde(rename = "unimodal-fig1")]
    UnimodalFig1,
    #[serde(rename = "bimodal-fig2")]
    BimodalFig2,
    #[serde(rename = "unimodal-fig3")]
    UnimodalFig3,
    #[serde(rename = "two-class")]
    TwoClass,
}

impl Recipe {
    pub const ALL: [Recipe; 4] = [Recipe::UnimodalFig1, Recipe::BimodalFig2, Recipe::UnimodalFig3, Recipe::TwoClass];

    pub fn name(&self) -> &'static str {
        match self {
            Recipe::UnimodalFig1 => "unimodal-fig1",
            Recipe::BimodalFig2 => "bimodal-fig2",
            Recipe::UnimodalFig3 => "unimodal-fig3",
            Recipe::TwoClass => "two-class",
        }
    }

    pub fn default_n(&self) -> usize {
        match self {
            Recipe::UnimodalFig3 => 39,
            Recipe::TwoClass => TWO_CLASS_N,
            _ => 21,
        }
    }
}

impl fmt::Display for Recipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Recipe {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Recipe::ALL.into_iter().find(|r| r.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Recipe::ALL.iter().map(|r| r.name()).collect();
            Error::arg(format!("unknown recipe '{s}'; valid recipes: {}", names.join(", ")))
        })
    }
}

/// Simulated observations `x_i = y_i ∘ γ_i` with the truth kept. All
/// functions live on the unit grid; `domain` is the recipe's own interval.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedSet {
    pub recipe: Recipe,
    pub seed: u64,
    pub domain: [f64; 2],
    pub observed: Vec<SampledFunction>,
    pub truth_amplitude: Vec<SampledFunction>,
    pub truth_warps: Vec<Warp>,
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::arg(format!("simulation needs n >= 2, got {n}")));
    }
    Ok(())
}

fn normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64) -> f64 {
    mean + sd * rng.sample::<f64, _>(StandardNormal)
}

fn unit_grid() -> Grid {
    Grid::unit(SIM_GRID).expect("fixed grid")
}

/// `y_i(t) = z_i exp(-(t - a_i)²/2)` on `[-6, 6]`, `z_i ~ N(1, 0.05²)`,
/// `a_i ~ N(0, 1.25²)`; draws `z_i, a_i` per function. Warps are the
/// identity, the random center carries the phase.
pub fn gen_unimodal_fig1(n: usize, seed: u64) -> Result<SimulatedSet> {
    check_n(n)?;
    let g = unit_grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let z = normal(&mut rng, 1.0, 0.05);
        let a = normal(&mut rng, 0.0, 1.25);
        ys.push(SampledFunction::from_fn(g, |u| {
            let t = -6.0 + 12.0 * u;
            z * (-(t - a).powi(2) / 2.0).exp()
        })?);
    }
    Ok(SimulatedSet {
        recipe: Recipe::UnimodalFig1,
        seed,
        domain: [-6.0, 6.0],
        observed: ys.clone(),
        truth_amplitude: ys,
        truth_warps: vec![Warp::identity(g); n],
    })
}

/// `γ(u) = (e^{a u} - 1)/(e^a - 1)` on the unit interval; the identity at `a = 0`.
pub fn exp_warp(g: Grid, a: f64) -> Result<Warp> {
    if a == 0.0 {
        return Ok(Warp::identity(g));
    }
    let d = a.exp_m1();
    Warp::new(g, g.points().iter().map(|u| (a * u).exp_m1() / d).collect())
}

fn bimodal(n: usize, seed: u64, heights: (f64, f64), a_range: (f64, f64), recipe: Recipe) -> Result<SimulatedSet> {
    check_n(n)?;
    let g = unit_grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = SimulatedSet {
        recipe,
        seed,
        domain: [-3.0, 3.0],
        observed: Vec::with_capacity(n),
        truth_amplitude: Vec::with_capacity(n),
        truth_warps: Vec::with_capacity(n),
    };
    for i in 0..n {
        let z1 = normal(&mut rng, heights.0, 0.25);
        let z2 = normal(&mut rng, heights.1, 0.25);
        let y = move |u: f64| {
            let t = -3.0 + 6.0 * u;
            z1 * (-(t - 1.5).powi(2) / 2.0).exp() + z2 * (-(t + 1.5).powi(2) / 2.0).exp()
        };
        let a = if 2 * i + 1 == n {
            0.5 * (a_range.0 + a_range.1)
        } else {
            a_range.0 + (a_range.1 - a_range.0) * i as f64 / (n - 1) as f64
        };
        let w = exp_warp(g, a)?;
        set.observed.push(SampledFunction::new(g, w.values().iter().map(|&u| y(u)).collect())?);
        set.truth_amplitude.push(SampledFunction::from_fn(g, y)?);
        set.truth_warps.push(w);
    }
    Ok(set)
}

/// `y_i(t) = z_{i1} exp(-(t - 1.5)²/2) + z_{i2} exp(-(t + 1.5)²/2)` on
/// `[-3, 3]`, `z ~ N(1, 0.25²)` drawn as `z_{i1}, z_{i2}` per function;
/// `x_i = y_i ∘ γ_i` with `a_i` equally spaced in `[-1, 1]`.
pub fn gen_bimodal_fig2(n: usize, seed: u64) -> Result<SimulatedSet> {
    bimodal(n, seed, (1.0, 1.0), (-1.0, 1.0), Recipe::BimodalFig2)
}

/// `y_i(t) = z_i exp(-(t - b_i)²/(2 · 0.09²))` on `[0, 1]`, `b_i` equally
/// spaced in `[0.15, 0.85]`, `z_i ~ N(1, 0.05²)`. Identity warps.
pub fn gen_unimodal_fig3(n: usize, seed: u64) -> Result<SimulatedSet> {
    check_n(n)?;
    let g = unit_grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ys = Vec::with_capacity(n);
    for i in 0..n {
        let z = normal(&mut rng, 1.0, 0.05);
        let b = 0.15 + 0.7 * i as f64 / (n - 1) as f64;
        ys.push(SampledFunction::from_fn(g, |t| z * (-(t - b).powi(2) / (2.0 * FIG3_WIDTH * FIG3_WIDTH)).exp())?);
    }
    Ok(SimulatedSet {
        recipe: Recipe::UnimodalFig3,
        seed,
        domain: [0.0, 1.0],
        observed: ys.clone(),
        truth_amplitude: ys,
        truth_warps: vec![Warp::identity(g); n],
    })
}

/// Two labeled classes of `n` functions each. Class `A` is the bimodal
/// recipe; class `B` has peak heights around `(1.4, 0.7)` and warps with
/// `a` in `[-3.5, -1.5]`. Class `B` draws from the stream seeded
/// `seed + 0x9E3779B97F4A7C15` (wrapping).
pub fn gen_two_class(n: usize, seed: u64) -> Result<FunctionalData> {
    let a = bimodal(n, seed, (1.0, 1.0), (-1.0, 1.0), Recipe::TwoClass)?;
    let b = bimodal(n, seed.wrapping_add(0x9E37_79B9_7F4A_7C15), (1.4, 0.7), (-3.5, -1.5), Recipe::TwoClass)?;
    let mut names = vec!["A".to_string(); n];
    names.extend(vec!["B".to_string(); n]);
    let mut functions = a.observed;
    functions.extend(b.observed);
    Ok(FunctionalData { domain: [-3.0, 3.0], functions, names })
}

impl SimulatedSet {
    pub fn observed_data(&self) -> FunctionalData {
        FunctionalData::numbered(self.domain, self.observed.clone())
    }

    pub fn amplitude_data(&self) -> FunctionalData {
        FunctionalData::numbered(self.domain, self.truth_amplitude.clone())
    }

    pub fn warp_data(&self) -> FunctionalData {
        warps_to_data(self.domain, &self.truth_warps)
    }
}

/// Functions on a shared unit grid with their original domain and column
/// names. In labeled files the names are the class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionalData {
    pub domain: [f64; 2],
    pub functions: Vec<SampledFunction>,
    pub names: Vec<String>,
}

impl FunctionalData {
    /// Names `f1, f2, …`.
    pub fn numbered(domain: [f64; 2], functions: Vec<SampledFunction>) -> Self {
        let names = (1..=functions.len()).map(|i| format!("f{i}")).collect();
        FunctionalData { domain, functions, names }
    }

    pub fn grid(&self) -> Result<Grid> {
        self.functions.first().map(|f| *f.grid()).ok_or_else(|| Error::arg("no functions"))
    }

    /// Grid points mapped back to the original domain.
    pub fn domain_points(&self, n: usize) -> Vec<f64> {
        let [a, b] = self.domain;
        (0..n)
            .map(|k| if k + 1 == n { b } else { a + (b - a) * k as f64 / (n - 1) as f64 })
            .collect()
    }

    /// Distinct labels in order of first appearance, with member indices.
    pub fn classes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out: Vec<(String, Vec<usize>)> = Vec::new();
        for (i, name) in self.names.iter().enumerate() {
            match out.iter_mut().find(|(l, _)| l == name) {
                Some((_, v)) => v.push(i),
                None => out.push((name.clone(), vec![i])),
            }
        }
        out
    }
}

/// Warps as functions on `domain`, `γ` acting through the affine map.
pub fn warps_to_data(domain: [f64; 2], warps: &[Warp]) -> FunctionalData {
    let [a, b] = domain;
    let functions = warps
        .iter()
        .map(|w| {
            let v = w.values().iter().map(|&u| if u == 1.0 { b } else { a + (b - a) * u }).collect();
            SampledFunction::new(*w.grid(), v).expect("warp values are finite")
        })
        .collect();
    FunctionalData::numbered(domain, functions)
}

/// Inverse of [`warps_to_data`].
pub fn data_to_warps(data: &FunctionalData) -> Result<Vec<Warp>> {
    let [a, b] = data.domain;
    data.functions
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let v = f.values().iter().map(|&x| (x - a) / (b - a)).collect();
            Warp::new(*f.grid(), v).map_err(|e| Error::arg(format!("column {}: {e}", data.names[i])))
        })
        .collect()
}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, column, message: message.into() }
}

/// Reads the CSV layout: a header row, then rows `t, f_1(t), …`. The `t`
/// column must be strictly increasing and uniform within `1e-6` relative.
pub fn read_csv<R: Read>(reader: R) -> Result<FunctionalData> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| parse_err(1, 1, e.to_string()))?.clone();
    if header.len() < 2 {
        return Err(parse_err(1, 1, "need a t column and at least one function column"));
    }
    if header.get(0).and_then(|h| h.parse::<f64>().ok()).is_some() {
        return Err(parse_err(1, 1, "missing header row"));
    }
    let width = header.len();
    let mut ts = Vec::new();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); width - 1];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, 1, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != width {
            return Err(parse_err(line, rec.len().min(width) + 1, format!("expected {width} columns, found {}", rec.len())));
        }
        for (c, cell) in rec.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| parse_err(line, c + 1, format!("'{cell}' is not a finite number")))?;
            if c == 0 {
                ts.push((v, line));
            } else {
                cols[c - 1].push(v);
            }
        }
    }
    let n = ts.len();
    if n < 3 {
        return Err(parse_err(1, 1, format!("need at least 3 rows of samples, found {n}")));
    }
    for k in 1..n {
        if !(ts[k].0 > ts[k - 1].0) {
            return Err(parse_err(ts[k].1, 1, format!("t is not strictly increasing at index {k}")));
        }
    }
    let (a, b) = (ts[0].0, ts[n - 1].0);
    let h = ts[1].0 - ts[0].0;
    for k in 2..n {
        if ((ts[k].0 - ts[k - 1].0) - h).abs() > 1e-6 * h {
            return Err(parse_err(ts[k].1, 1, format!("t is not uniformly spaced at index {k}")));
        }
    }
    let g = Grid::unit(n)?;
    let functions = cols.into_iter().map(|v| SampledFunction::new(g, v)).collect::<Result<_>>()?;
    let names = header.iter().skip(1).map(str::to_string).collect();
    Ok(FunctionalData { domain: [a, b], functions, names })
}

/// Writes the layout read by [`read_csv`]; `t` is on the original domain.
/// `n` is the number of rows and must match the functions' grid.
pub fn write_csv<W: Write>(writer: W, data: &FunctionalData, n: usize) -> Result<()> {
    if let Some(f) = data.functions.iter().find(|f| f.values().len() != n) {
        return Err(Error::arg(format!("asked for {n} rows but a function has {} samples", f.values().len())));
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut head = vec!["t".to_string()];
    head.extend(data.names.iter().cloned());
    w.write_record(&head).map_err(csv_io)?;
    for (k, t) in data.domain_points(n).into_iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(data.functions.iter().map(|f| f.values()[k].to_string()));
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::arg(format!("{other:?}")),
    }
}

pub fn load_csv(path: &Path) -> Result<FunctionalData> {
    read_csv(std::fs::File::open(path)?)
}

/// Writes to a string; an empty set still gets its header and `t` column
/// when `n` is given.
pub fn csv_string(data: &FunctionalData, n: usize) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(&mut buf, data, n)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

pub fn save_csv(path: &Path, data: &FunctionalData) -> Result<()> {
    let n = data.grid()?.len();
    std::fs::write(path, csv_string(data, n)?)?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct JsonData {
    domain: [f64; 2],
    grid_n: usize,
    functions: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
}

/// `{domain, grid_n, functions, labels?}`.
pub fn from_json_str(text: &str) -> Result<FunctionalData> {
    let d: JsonData = serde_json::from_str(text)?;
    if !(d.domain[1] > d.domain[0]) {
        return Err(Error::arg(format!("domain [{}, {}] is empty", d.domain[0], d.domain[1])));
    }
    let g = Grid::unit(d.grid_n)?;
    let functions = d
        .functions
        .into_iter()
        .enumerate()
        .map(|(i, v)| SampledFunction::new(g, v).map_err(|e| Error::arg(format!("function {}: {e}", i + 1))))
        .collect::<Result<Vec<_>>>()?;
    let names = match d.labels {
        Some(l) if l.len() != functions.len() => {
            return Err(Error::arg(format!("{} labels for {} functions", l.len(), functions.len())))
        }
        Some(l) => l,
        None => (1..=functions.len()).map(|i| format!("f{i}")).collect(),
    };
    Ok(FunctionalData { domain: d.domain, functions, names })
}

pub fn to_json_string(data: &FunctionalData, labels: bool) -> Result<String> {
    let d = JsonData {
        domain: data.domain,
        grid_n: data.grid()?.len(),
        functions: data.functions.iter().map(|f| f.values().to_vec()).collect(),
        labels: labels.then(|| data.names.clone()),
    };
    Ok(serde_json::to_string(&d)?)
}

/// Dispatches on the extension: `.json` or CSV otherwise.
pub fn load_functional(path: &Path) -> Result<FunctionalData> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        from_json_str(&std::fs::read_to_string(path)?)
    } else {
        load_csv(path)
    }
}
