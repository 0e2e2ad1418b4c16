//! Command-line pipeline: simulate, align, fpca, fit, sample, classify.
//!
//! Every subcommand writes into `--out` (created if missing) through
//! temp-file-and-rename, and echoes its effective configuration as
//! `config.json`. Settings come from flags, then `--config FILE`, then
//! defaults.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::align::{separate, variance_decomposition, AlignConfig, SeparationConfig};
use crate::classify::{kfold_cv, table_csv, ClassifierConfig, CvReport, ModelKind};
use crate::datasets::{
    csv_string, data_to_warps, gen_bimodal_fig2, gen_two_class, gen_unimodal_fig1, gen_unimodal_fig3,
    load_functional, warps_to_data, FunctionalData, Recipe,
};
use crate::error::{Error, Result};
use crate::fpca::{
    horizontal_fpca, principal_path_horizontal, principal_path_vertical, select_components, vertical_fpca,
};
use crate::funcrep::{smooth_box, Grid, SampledFunction};
use crate::genmodel::{Bandwidth, Family, GaussianMode, GenerativeModel, HorizontalDoc, VerticalDoc};
use crate::srsf::{to_srsf, Srsf};
use crate::warpspace::{sphere_log, to_psi};

#[derive(Parser, Debug)]
#[command(name = "elasticfda", version, about = "Elastic functional data analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a seeded simulated dataset.
    Simulate(SimulateArgs),
    /// Separate phase and amplitude of the functions in a CSV file.
    Align(AlignArgs),
    /// Vertical and horizontal fPCA of aligned functions and their warps.
    Fpca(FpcaArgs),
    /// Align, run fPCA and fit a generative model.
    Fit(FitArgs),
    /// Draw random functions from a fitted model.
    Sample(SampleArgs),
    /// Cross-validate the likelihood classifiers on a labeled CSV file.
    Classify(ClassifyArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// JSON file with default settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Pipeline {
    #[arg(long)]
    pub smooth_iters: Option<usize>,
    #[arg(long)]
    pub energy_threshold: Option<f64>,
    /// Largest DP lattice; finer inputs are aligned on a resampled lattice.
    #[arg(long)]
    pub lattice_n: Option<usize>,
    #[arg(long)]
    pub slope_cap: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub recipe: String,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of functions (per class for two-class).
    #[arg(long)]
    pub n: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct AlignArgs {
    /// CSV or JSON functional data.
    pub input: PathBuf,
    #[command(flatten)]
    pub pipeline: Pipeline,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct FpcaArgs {
    pub aligned: PathBuf,
    pub warps: PathBuf,
    #[arg(long)]
    pub energy_threshold: Option<f64>,
    /// Reconstruct the inputs from the written coefficients and check them.
    #[arg(long)]
    pub verify: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelArg {
    Gaussian,
    Kde,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceArg {
    Diagonal,
    Full,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    #[arg(long, value_enum)]
    pub covariance: Option<CovarianceArg>,
    #[command(flatten)]
    pub pipeline: Pipeline,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    /// model.json written by `fit`.
    pub model: PathBuf,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    /// CSV whose column headers are the class labels.
    pub input: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[command(flatten)]
    pub pipeline: Pipeline,
    #[command(flatten)]
    pub common: Common,
}

/// Effective settings of a run, as echoed to `config.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub inputs: Vec<String>,
    pub recipe: Option<String>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub smooth_iters: usize,
    pub energy_threshold: f64,
    pub model: ModelArg,
    pub covariance: CovarianceArg,
    pub folds: usize,
    pub lattice_n: usize,
    pub slope_cap: usize,
    pub count: usize,
    pub verify: bool,
}

/// Settings accepted from `--config`; every key is optional.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub recipe: Option<String>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub smooth_iters: Option<usize>,
    pub energy_threshold: Option<f64>,
    pub model: Option<ModelArg>,
    pub covariance: Option<CovarianceArg>,
    pub folds: Option<usize>,
    pub lattice_n: Option<usize>,
    pub slope_cap: Option<usize>,
    pub count: Option<usize>,
    pub verify: Option<bool>,
}

impl RunConfig {
    fn defaults(command: &str, inputs: &[&Path]) -> Self {
        let align = AlignConfig::default();
        RunConfig {
            command: command.into(),
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            recipe: None,
            n: None,
            seed: None,
            smooth_iters: 0,
            energy_threshold: 0.95,
            model: ModelArg::Gaussian,
            covariance: CovarianceArg::Diagonal,
            folds: 5,
            lattice_n: align.lattice_cap,
            slope_cap: align.slope_cap,
            count: 20,
            verify: false,
        }
    }

    fn apply_file(&mut self, f: FileConfig) {
        self.recipe = f.recipe.or(self.recipe.take());
        self.n = f.n.or(self.n);
        self.seed = f.seed.or(self.seed);
        self.smooth_iters = f.smooth_iters.unwrap_or(self.smooth_iters);
        self.energy_threshold = f.energy_threshold.unwrap_or(self.energy_threshold);
        self.model = f.model.unwrap_or(self.model);
        self.covariance = f.covariance.unwrap_or(self.covariance);
        self.folds = f.folds.unwrap_or(self.folds);
        self.lattice_n = f.lattice_n.unwrap_or(self.lattice_n);
        self.slope_cap = f.slope_cap.unwrap_or(self.slope_cap);
        self.count = f.count.unwrap_or(self.count);
        self.verify = f.verify.unwrap_or(self.verify);
    }

    fn apply_pipeline(&mut self, p: &Pipeline) {
        self.smooth_iters = p.smooth_iters.unwrap_or(self.smooth_iters);
        self.energy_threshold = p.energy_threshold.unwrap_or(self.energy_threshold);
        self.lattice_n = p.lattice_n.unwrap_or(self.lattice_n);
        self.slope_cap = p.slope_cap.unwrap_or(self.slope_cap);
    }

    fn validate(&self) -> Result<()> {
        if !(self.energy_threshold > 0.0 && self.energy_threshold <= 1.0) {
            return Err(Error::arg(format!("energy threshold must be in (0, 1], got {}", self.energy_threshold)));
        }
        if self.folds < 2 {
            return Err(Error::arg(format!("need at least 2 folds, got {}", self.folds)));
        }
        if self.lattice_n < 3 || self.slope_cap == 0 {
            return Err(Error::arg("lattice-n must be at least 3 and slope-cap at least 1"));
        }
        Ok(())
    }

    fn need_seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| Error::arg(format!("{} needs --seed", self.command)))
    }

    fn separation(&self) -> SeparationConfig {
        SeparationConfig {
            align: AlignConfig { lattice_cap: self.lattice_n, slope_cap: self.slope_cap },
            ..SeparationConfig::default()
        }
    }

    fn family(&self) -> Family {
        match self.model {
            ModelArg::Gaussian => Family::Gaussian(match self.covariance {
                CovarianceArg::Diagonal => GaussianMode::DiagonalBlocks,
                CovarianceArg::Full => GaussianMode::FullJoint,
            }),
            ModelArg::Kde => Family::Kde(Bandwidth::Silverman),
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::arg(format!("cannot read {}: {e}", path.display())))
}

fn load_input(path: &Path) -> Result<FunctionalData> {
    if !path.is_file() {
        return Err(Error::arg(format!("cannot read {}: no such file", path.display())));
    }
    load_functional(path)
}

fn resolve(command: &str, inputs: &[&Path], common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::defaults(command, inputs);
    if let Some(path) = &common.config {
        let text = read_text(path)?;
        cfg.apply_file(serde_json::from_str(&text)?);
    }
    Ok(cfg)
}

/// Output directory with atomic file writes.
struct OutDir {
    dir: PathBuf,
}

impl OutDir {
    fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::arg(format!("cannot create {}: {e}", dir.display())))?;
        Ok(OutDir { dir: dir.to_path_buf() })
    }

    fn write(&self, name: &str, contents: &str) -> Result<()> {
        use std::io::Write;
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(contents.as_bytes())?;
        tmp.as_file().sync_all()?;
        tmp.persist(self.dir.join(name)).map_err(|e| Error::Io(e.error))?;
        Ok(())
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }

    fn csv(&self, name: &str, data: &FunctionalData, n: usize) -> Result<()> {
        self.write(name, &csv_string(data, n)?)
    }
}

/// Parses `args` and runs the subcommand.
pub fn run_from<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::arg(e.to_string()))?;
    run(cli)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Align(a) => cmd_align(&a),
        Command::Fpca(a) => cmd_fpca(&a),
        Command::Fit(a) => cmd_fit(&a),
        Command::Sample(a) => cmd_sample(&a),
        Command::Classify(a) => cmd_classify(&a),
    }
}

/// 0 success, 2 usage or data error, 3 numeric or convergence failure.
pub fn exit_code(result: &Result<()>) -> i32 {
    match result {
        Ok(()) => 0,
        Err(e) if e.is_usage() => 2,
        Err(_) => 3,
    }
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let mut cfg = resolve("simulate", &[], &a.common)?;
    cfg.recipe = Some(a.recipe.clone());
    cfg.seed = a.seed.or(cfg.seed);
    cfg.n = a.n.or(cfg.n);
    cfg.validate()?;
    let recipe: Recipe = a.recipe.parse()?;
    let seed = cfg.need_seed()?;
    let n = cfg.n.unwrap_or(recipe.default_n());
    cfg.n = Some(n);
    let out = OutDir::create(&a.common.out)?;
    let g = crate::datasets::SIM_GRID;
    match recipe {
        Recipe::TwoClass => out.csv("labeled.csv", &gen_two_class(n, seed)?, g)?,
        _ => {
            let s = match recipe {
                Recipe::UnimodalFig1 => gen_unimodal_fig1(n, seed)?,
                Recipe::BimodalFig2 => gen_bimodal_fig2(n, seed)?,
                _ => gen_unimodal_fig3(n, seed)?,
            };
            out.csv("observed.csv", &s.observed_data(), g)?;
            out.csv("truth_amplitude.csv", &s.amplitude_data(), g)?;
            out.csv("truth_warps.csv", &s.warp_data(), g)?;
        }
    }
    out.json("config.json", &cfg)
}

fn load_smoothed(path: &Path, iters: usize) -> Result<FunctionalData> {
    let mut d = load_input(path)?;
    if d.functions.is_empty() {
        return Err(Error::arg(format!("{} holds no functions", path.display())));
    }
    d.functions = d.functions.iter().map(|f| smooth_box(f, iters)).collect();
    Ok(d)
}

#[derive(Serialize)]
struct VarianceReport {
    original_variance: f64,
    amplitude_variance: f64,
    phase_variance: f64,
    iterations: usize,
    converged: bool,
    warning_count: usize,
    warnings: Vec<String>,
}

fn separate_reporting(fs: &[SampledFunction], cfg: &SeparationConfig) -> Result<crate::align::SeparationResult> {
    match separate(fs, cfg) {
        Ok(r) => Ok(r),
        Err(Error::SeparationNotConverged(r)) => {
            let mut r = *r;
            let msg = format!("separation stopped at the iteration cap ({}) before converging", r.iterations);
            log::warn!("{msg}");
            r.warnings.push(msg);
            Ok(r)
        }
        Err(e) => Err(e),
    }
}

pub fn cmd_align(a: &AlignArgs) -> Result<()> {
    let mut cfg = resolve("align", &[&a.input], &a.common)?;
    cfg.apply_pipeline(&a.pipeline);
    cfg.validate()?;
    let data = load_smoothed(&a.input, cfg.smooth_iters)?;
    let n = data.grid()?.len();
    let r = separate_reporting(&data.functions, &cfg.separation())?;
    let v = variance_decomposition(&data.functions, &r)?;
    let out = OutDir::create(&a.common.out)?;
    let aligned = FunctionalData { functions: r.aligned_functions.clone(), ..data.clone() };
    out.csv("aligned.csv", &aligned, n)?;
    let mut warps = warps_to_data(data.domain, &r.warps);
    warps.names = data.names.clone();
    out.csv("warps.csv", &warps, n)?;
    let mean = FunctionalData { domain: data.domain, functions: vec![r.mean_function()], names: vec!["mean".into()] };
    out.csv("karcher_mean.csv", &mean, n)?;
    out.json(
        "variance.json",
        &VarianceReport {
            original_variance: v.original_variance,
            amplitude_variance: v.amplitude_variance,
            phase_variance: v.phase_variance,
            iterations: r.iterations,
            converged: r.converged,
            warning_count: r.warnings.len(),
            warnings: r.warnings.clone(),
        },
    )?;
    out.json("config.json", &cfg)
}

#[derive(Serialize, Deserialize)]
struct BasisFile<D> {
    format: String,
    version: u32,
    grid: Grid,
    domain: [f64; 2],
    energy_threshold: f64,
    /// Components needed to reach the threshold.
    selected: usize,
    basis: D,
}

#[derive(Serialize)]
struct VerifyReport {
    max_srsf_error: f64,
    max_shooting_error: f64,
    max_warp_error: f64,
    passed: bool,
}

const VERIFY_TOL: f64 = 1e-8;
// warps pass through ψ and back, which is exact only up to discretization
const VERIFY_WARP_TOL: f64 = 2e-2;

pub fn cmd_fpca(a: &FpcaArgs) -> Result<()> {
    let mut cfg = resolve("fpca", &[&a.aligned, &a.warps], &a.common)?;
    cfg.energy_threshold = a.energy_threshold.unwrap_or(cfg.energy_threshold);
    cfg.verify |= a.verify;
    cfg.validate()?;
    let data = load_input(&a.aligned)?;
    let warp_data = load_input(&a.warps)?;
    let grid = data.grid()?;
    if warp_data.functions.len() != data.functions.len() {
        return Err(Error::arg(format!(
            "{} aligned functions but {} warps",
            data.functions.len(),
            warp_data.functions.len()
        )));
    }
    grid.ensure_same(&warp_data.grid()?, "fpca inputs")?;
    let warps = data_to_warps(&warp_data)?;
    let n = data.functions.len();
    if n < 2 {
        return Err(Error::arg("fpca needs at least 2 functions"));
    }
    let t = grid.len();
    let qs: Vec<Srsf> = data.functions.iter().map(to_srsf).collect();
    let vertical = vertical_fpca(&qs, (n - 1).min(t + 1))?;
    let horizontal = horizontal_fpca(&warps, (n - 1).min(t - 1))?;
    let k1 = select_components(&vertical.singular_values, cfg.energy_threshold)?;
    let k2 = select_components(&horizontal.singular_values, cfg.energy_threshold)?;
    let out = OutDir::create(&a.common.out)?;
    out.json(
        "vertical_basis.json",
        &BasisFile {
            format: "elasticfda-vertical-basis".into(),
            version: 1,
            grid,
            domain: data.domain,
            energy_threshold: cfg.energy_threshold,
            selected: k1,
            basis: VerticalDoc::from(&vertical),
        },
    )?;
    out.json(
        "horizontal_basis.json",
        &BasisFile {
            format: "elasticfda-horizontal-basis".into(),
            version: 1,
            grid,
            domain: data.domain,
            energy_threshold: cfg.energy_threshold,
            selected: k2,
            basis: HorizontalDoc::from(&horizontal),
        },
    )?;
    let coeff_text = coefficients_csv(&data, &vertical.coefficients, &horizontal.coefficients)?;
    out.write("coefficients.csv", &coeff_text)?;
    out.write("principal_paths.csv", &principal_paths_csv(&data, &vertical, &horizontal)?)?;
    if cfg.verify {
        let report = verify(&coeff_text, &qs, &warps, &vertical, &horizontal)?;
        out.json("verify.json", &report)?;
        out.json("config.json", &cfg)?;
        if !report.passed {
            return Err(Error::Numeric(format!(
                "full-rank reconstruction check failed (srsf {:.2e}, shooting {:.2e}, warp {:.2e})",
                report.max_srsf_error, report.max_shooting_error, report.max_warp_error
            )));
        }
        return Ok(());
    }
    out.json("config.json", &cfg)
}

fn coefficients_csv(data: &FunctionalData, c: &[Vec<f64>], z: &[Vec<f64>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let (p1, p2) = (c.first().map_or(0, Vec::len), z.first().map_or(0, Vec::len));
    let mut head = vec!["name".to_string(), "f0".to_string()];
    head.extend((1..=p1).map(|j| format!("c{j}")));
    head.extend((1..=p2).map(|j| format!("z{j}")));
    w.write_record(&head).map_err(csv_err)?;
    for i in 0..data.functions.len() {
        let mut row = vec![data.names[i].clone(), data.functions[i].values()[0].to_string()];
        row.extend(c[i].iter().chain(&z[i]).map(|v| v.to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| Error::arg(e.to_string()))?).expect("utf-8"))
}

fn csv_err(e: csv::Error) -> Error {
    Error::arg(e.to_string())
}

type Rows = Vec<Vec<f64>>;

/// Parses `coefficients.csv` back into `(c, z)` rows.
fn parse_coefficients(text: &str) -> Result<(Rows, Rows)> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let head = rdr.headers().map_err(csv_err)?.clone();
    let p1 = head.iter().filter(|h| h.starts_with('c')).count();
    let (mut cs, mut zs) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let vals: Vec<f64> = rec
            .iter()
            .skip(2)
            .map(|s| s.parse().map_err(|_| Error::arg(format!("bad coefficient '{s}'"))))
            .collect::<Result<_>>()?;
        cs.push(vals[..p1].to_vec());
        zs.push(vals[p1..].to_vec());
    }
    Ok((cs, zs))
}

fn verify(
    coeff_text: &str,
    qs: &[Srsf],
    warps: &[crate::warpspace::Warp],
    vertical: &crate::fpca::VerticalFpca,
    horizontal: &crate::fpca::HorizontalFpca,
) -> Result<VerifyReport> {
    let (cs, zs) = parse_coefficients(coeff_text)?;
    let mu = horizontal.mu()?;
    let (mut es, mut ev, mut ew) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..qs.len() {
        let h = vertical.reconstruct(&cs[i])?;
        es = es.max(h.values().iter().zip(qs[i].values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        es = es.max((h.f0() - qs[i].f0()).abs());
        let v = sphere_log(&mu, &to_psi(&warps[i]))?;
        let back = horizontal.tangent(&zs[i])?;
        ev = ev.max(back.values().iter().zip(v.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        ew = ew.max(horizontal.reconstruct(&zs[i])?.sup_distance(&warps[i]));
    }
    Ok(VerifyReport {
        max_srsf_error: es,
        max_shooting_error: ev,
        max_warp_error: ew,
        passed: es <= VERIFY_TOL && ev <= VERIFY_TOL && ew <= VERIFY_WARP_TOL,
    })
}

/// Long format `kind,component,tau,t,value` for `τ ∈ {-2, …, 2}` and the
/// first three components of each basis.
fn principal_paths_csv(
    data: &FunctionalData,
    vertical: &crate::fpca::VerticalFpca,
    horizontal: &crate::fpca::HorizontalFpca,
) -> Result<String> {
    let t = vertical.grid.len();
    let ts = data.domain_points(t);
    let [a, b] = data.domain;
    let mut out = String::from("kind,component,tau,t,value\n");
    for j in 1..=vertical.p().min(3) {
        for tau in -2..=2 {
            let f = principal_path_vertical(vertical, j, tau as f64)?;
            for (k, v) in f.values().iter().enumerate() {
                out.push_str(&format!("vertical,{j},{tau},{},{v}\n", ts[k]));
            }
        }
    }
    for j in 1..=horizontal.p().min(3) {
        for tau in -2..=2 {
            let g = principal_path_horizontal(horizontal, j, tau as f64)?;
            for (k, u) in g.values().iter().enumerate() {
                out.push_str(&format!("horizontal,{j},{tau},{},{}\n", ts[k], a + (b - a) * u));
            }
        }
    }
    Ok(out)
}

pub fn cmd_fit(a: &FitArgs) -> Result<()> {
    let mut cfg = resolve("fit", &[&a.input], &a.common)?;
    cfg.apply_pipeline(&a.pipeline);
    cfg.model = a.model.unwrap_or(cfg.model);
    cfg.covariance = a.covariance.unwrap_or(cfg.covariance);
    cfg.validate()?;
    let data = load_smoothed(&a.input, cfg.smooth_iters)?;
    let model = fit_model(&data, &cfg.separation(), cfg.energy_threshold, cfg.family())?;
    let out = OutDir::create(&a.common.out)?;
    out.write("model.json", &(model.to_json()? + "\n"))?;
    out.json("config.json", &cfg)
}

/// Separation, fPCA truncated at `threshold`, and the coefficient model.
pub fn fit_model(data: &FunctionalData, sep: &SeparationConfig, threshold: f64, family: Family) -> Result<GenerativeModel> {
    let n = data.functions.len();
    if n < 2 {
        return Err(Error::arg("fitting needs at least 2 functions"));
    }
    let t = data.grid()?.len();
    let r = separate_reporting(&data.functions, sep)?;
    let vertical = vertical_fpca(&r.aligned, (n - 1).min(t + 1))?;
    let vertical = vertical.truncate(select_components(&vertical.singular_values, threshold)?)?;
    let horizontal = horizontal_fpca(&r.warps, (n - 1).min(t - 1))?;
    let horizontal = horizontal.truncate(select_components(&horizontal.singular_values, threshold)?)?;
    let f0s: Vec<f64> = data.functions.iter().map(|f| f.values()[0]).collect();
    GenerativeModel::fit(&f0s, vertical, horizontal, family, data.domain)
}

pub fn cmd_sample(a: &SampleArgs) -> Result<()> {
    let mut cfg = resolve("sample", &[&a.model], &a.common)?;
    cfg.seed = a.seed.or(cfg.seed);
    cfg.count = a.count.unwrap_or(cfg.count);
    cfg.validate()?;
    let seed = cfg.need_seed()?;
    let model = GenerativeModel::from_json(&read_text(&a.model)?)?;
    let draws = model.sample_seeded(seed, cfg.count)?;
    let n = model.vertical.grid.len();
    let named = |fs: Vec<SampledFunction>| {
        let names = (1..=fs.len()).map(|i| format!("s{i}")).collect();
        FunctionalData { domain: model.domain, functions: fs, names }
    };
    let out = OutDir::create(&a.common.out)?;
    out.csv("samples.csv", &named(draws.iter().map(|d| d.function.clone()).collect()), n)?;
    out.csv("amplitudes_sampled.csv", &named(draws.iter().map(|d| d.amplitude.clone()).collect()), n)?;
    let warps: Vec<_> = draws.iter().map(|d| d.warp.clone()).collect();
    let mut wd = warps_to_data(model.domain, &warps);
    wd.names = (1..=warps.len()).map(|i| format!("s{i}")).collect();
    out.csv("warps_sampled.csv", &wd, n)?;
    out.json("config.json", &cfg)
}

#[derive(Serialize)]
struct ClassifyReport {
    gaussian: CvReport,
    kde: CvReport,
}

pub fn cmd_classify(a: &ClassifyArgs) -> Result<()> {
    let mut cfg = resolve("classify", &[&a.input], &a.common)?;
    cfg.apply_pipeline(&a.pipeline);
    cfg.seed = a.seed.or(cfg.seed);
    cfg.folds = a.folds.unwrap_or(cfg.folds);
    cfg.validate()?;
    let seed = cfg.need_seed()?;
    let d = load_input(&a.input)?;
    let data: Vec<(String, SampledFunction)> = d.names.iter().cloned().zip(d.functions.iter().cloned()).collect();
    let base = ClassifierConfig {
        energy_threshold: cfg.energy_threshold,
        smooth_iters: cfg.smooth_iters,
        separation: cfg.separation(),
        ..ClassifierConfig::default()
    };
    let gaussian = kfold_cv(&data, &ClassifierConfig { model: ModelKind::Gaussian, ..base }, cfg.folds, seed)?;
    let kde = kfold_cv(&data, &ClassifierConfig { model: ModelKind::Kde, ..base }, cfg.folds, seed)?;
    let out = OutDir::create(&a.common.out)?;
    out.write("table.csv", &table_csv(&gaussian, &kde))?;
    out.json("report.json", &ClassifyReport { gaussian, kde })?;
    out.json("config.json", &cfg)
}
