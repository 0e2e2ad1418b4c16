//! Likelihood classification of functions with per-class amplitude, phase
//! and joint models, an L² baseline, and stratified k-fold
//! cross-validation.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::{pairwise_warp, separate_lenient, SeparationConfig, SeparationResult};
use crate::error::{Error, Result};
use crate::fpca::{horizontal_fpca, l2_fpca, select_components, vertical_fpca, HorizontalFpca, VerticalFpca};
use crate::funcrep::{smooth_box, Grid, SampledFunction};
use crate::genmodel::{BaselineModel, Bandwidth, CoefficientModel, CoefficientSample, Family, GaussianMode};
use crate::srsf::{to_srsf, warp_action};
use crate::warpspace::{sphere_log, to_psi};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Gaussian,
    Kde,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    /// Energy fraction used to pick `k1`, `k2` and the baseline dimension.
    pub energy_threshold: f64,
    pub model: ModelKind,
    pub gaussian_mode: GaussianMode,
    pub bandwidth: Bandwidth,
    /// Box-filter passes applied to every input before anything else.
    pub smooth_iters: usize,
    pub separation: SeparationConfig,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            energy_threshold: 0.95,
            model: ModelKind::Gaussian,
            gaussian_mode: GaussianMode::DiagonalBlocks,
            bandwidth: Bandwidth::Silverman,
            smooth_iters: 0,
            separation: SeparationConfig::default(),
        }
    }
}

impl ClassifierConfig {
    fn family(&self) -> Family {
        match self.model {
            ModelKind::Gaussian => Family::Gaussian(self.gaussian_mode),
            ModelKind::Kde => Family::Kde(self.bandwidth),
        }
    }
}

/// Everything fitted for one class.
#[derive(Clone, Debug)]
pub struct ClassModel {
    pub label: String,
    pub separation: SeparationResult,
    pub vertical: VerticalFpca,
    pub horizontal: HorizontalFpca,
    /// Model on `(f(0), c)`.
    pub amplitude: CoefficientModel,
    /// Model on `z`.
    pub phase: CoefficientModel,
    pub baseline: BaselineModel,
}

#[derive(Clone, Debug)]
pub struct TrainedClassifier {
    pub classes: Vec<ClassModel>,
    pub config: ClassifierConfig,
    pub grid: Grid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Amplitude,
    Phase,
    Joint,
    BaselineL2,
}

impl Rule {
    pub const ALL: [Rule; 4] = [Rule::Amplitude, Rule::Phase, Rule::Joint, Rule::BaselineL2];

    /// Row label in the results table.
    pub fn title(&self) -> &'static str {
        match self {
            Rule::Amplitude => "amplitude only",
            Rule::Phase => "phase only",
            Rule::Joint => "phase and amplitude",
            Rule::BaselineL2 => "standard L2",
        }
    }
}

/// Groups `data` by label in order of first appearance.
pub fn group_by_label(data: &[(String, SampledFunction)]) -> Vec<(String, Vec<usize>)> {
    let mut out: Vec<(String, Vec<usize>)> = Vec::new();
    for (i, (label, _)) in data.iter().enumerate() {
        match out.iter_mut().find(|(l, _)| l == label) {
            Some((_, v)) => v.push(i),
            None => out.push((label.clone(), vec![i])),
        }
    }
    out
}

fn check_threshold(t: f64) -> Result<()> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::arg(format!("energy threshold must be in (0, 1], got {t}")));
    }
    Ok(())
}

fn train_class(label: &str, fs: &[SampledFunction], cfg: &ClassifierConfig) -> Result<ClassModel> {
    let family = cfg.family();
    let separation = separate_lenient(fs, &cfg.separation)?;
    let n = fs.len();
    let t = fs[0].grid().len();
    let vertical = vertical_fpca(&separation.aligned, (n - 1).min(t + 1))?;
    let k1 = select_components(&vertical.singular_values, cfg.energy_threshold)?;
    let vertical = vertical.truncate(k1)?;
    let horizontal = horizontal_fpca(&separation.warps, (n - 1).min(t - 1))?;
    let k2 = select_components(&horizontal.singular_values, cfg.energy_threshold)?;
    let horizontal = horizontal.truncate(k2)?;
    let amp = fs
        .iter()
        .zip(&vertical.coefficients)
        .map(|(f, c)| CoefficientSample::new(Some(f.values()[0]), c.clone(), Vec::new()))
        .collect::<Result<Vec<_>>>()?;
    let phase = horizontal
        .coefficients
        .iter()
        .map(|z| CoefficientSample::new(None, Vec::new(), z.clone()))
        .collect::<Result<Vec<_>>>()?;
    let l2 = l2_fpca(fs, (n - 1).min(t))?;
    let kb = select_components(&l2.singular_values, cfg.energy_threshold)?;
    let baseline = BaselineModel::fit(l2.truncate(kb)?, family)?;
    Ok(ClassModel {
        label: label.to_string(),
        amplitude: family.fit(&amp)?,
        phase: family.fit(&phase)?,
        separation,
        vertical,
        horizontal,
        baseline,
    })
}

/// Per class: smooth, separate, vertical and horizontal fPCA truncated at
/// the energy threshold, then the amplitude, phase and baseline models.
pub fn train(data: &[(String, SampledFunction)], cfg: &ClassifierConfig) -> Result<TrainedClassifier> {
    check_threshold(cfg.energy_threshold)?;
    let groups = group_by_label(data);
    if groups.len() < 2 {
        return Err(Error::arg(format!("classification needs at least 2 classes, got {}", groups.len())));
    }
    if let Some((label, idx)) = groups.iter().find(|(_, idx)| idx.len() < 2) {
        return Err(Error::arg(format!("class '{label}' has {} sample(s); at least 2 are needed", idx.len())));
    }
    let grid = *data[0].1.grid();
    for (_, f) in data {
        grid.ensure_same(f.grid(), "train")?;
    }
    let classes = groups
        .par_iter()
        .map(|(label, idx)| {
            let fs: Vec<SampledFunction> = idx.iter().map(|&i| smooth_box(&data[i].1, cfg.smooth_iters)).collect();
            train_class(label, &fs, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrainedClassifier { classes, config: *cfg, grid })
}

/// Per-class log-likelihoods of one function under each channel.
#[derive(Clone, Debug, PartialEq)]
pub struct Scores {
    pub amplitude: Vec<f64>,
    /// `-inf` where the log map at the class mean is undefined.
    pub phase: Vec<f64>,
    pub baseline: Vec<f64>,
}

impl Scores {
    pub fn channel(&self, rule: Rule) -> Vec<f64> {
        match rule {
            Rule::Amplitude => self.amplitude.clone(),
            Rule::Phase => self.phase.clone(),
            Rule::Joint => self.amplitude.iter().zip(&self.phase).map(|(a, p)| a + p).collect(),
            Rule::BaselineL2 => self.baseline.clone(),
        }
    }
}

/// Index of the largest finite score; the first one wins ties.
pub fn argmax_first(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s.is_nan() || s == f64::NEG_INFINITY {
            continue;
        }
        if best.is_none_or(|b| s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

impl TrainedClassifier {
    pub fn labels(&self) -> Vec<&str> {
        self.classes.iter().map(|c| c.label.as_str()).collect()
    }

    /// Aligns `f` to every class mean (one DP per class) and evaluates
    /// all channels.
    pub fn scores(&self, f: &SampledFunction) -> Result<Scores> {
        self.grid.ensure_same(f.grid(), "classify")?;
        let f = smooth_box(f, self.config.smooth_iters);
        let q = to_srsf(&f);
        let per_class = self
            .classes
            .par_iter()
            .map(|cm| -> Result<(f64, f64, f64)> {
                let w = pairwise_warp(&cm.separation.mu_q, &q, &self.config.separation.align)?;
                let aligned = warp_action(&q, &w)?;
                let c = cm.vertical.project(&aligned)?;
                let amp = cm.amplitude.log_likelihood(&CoefficientSample::new(Some(f.values()[0]), c, Vec::new())?)?;
                let phase = match sphere_log(&cm.horizontal.mu()?, &to_psi(&w)) {
                    Ok(v) => {
                        let z = cm.horizontal.project(&v)?;
                        cm.phase.log_likelihood(&CoefficientSample::new(None, Vec::new(), z)?)?
                    }
                    Err(Error::Geometry(_)) => f64::NEG_INFINITY,
                    Err(e) => return Err(e),
                };
                let base = cm.baseline.log_likelihood(&f)?;
                Ok((amp, phase, base))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Scores {
            amplitude: per_class.iter().map(|s| s.0).collect(),
            phase: per_class.iter().map(|s| s.1).collect(),
            baseline: per_class.iter().map(|s| s.2).collect(),
        })
    }

    /// Class index chosen by `rule`.
    pub fn decide(&self, scores: &Scores, rule: Rule) -> Result<usize> {
        argmax_first(&scores.channel(rule))
            .ok_or_else(|| Error::Geometry(format!("no class has a finite {} likelihood", rule.title())))
    }

    pub fn classify(&self, rule: Rule, f: &SampledFunction) -> Result<&str> {
        let s = self.scores(f)?;
        Ok(&self.classes[self.decide(&s, rule)?].label)
    }
}

pub fn classify_amplitude<'a>(clf: &'a TrainedClassifier, f: &SampledFunction) -> Result<&'a str> {
    clf.classify(Rule::Amplitude, f)
}

pub fn classify_phase<'a>(clf: &'a TrainedClassifier, f: &SampledFunction) -> Result<&'a str> {
    clf.classify(Rule::Phase, f)
}

pub fn classify_joint<'a>(clf: &'a TrainedClassifier, f: &SampledFunction) -> Result<&'a str> {
    clf.classify(Rule::Joint, f)
}

pub fn classify_baseline_l2<'a>(clf: &'a TrainedClassifier, f: &SampledFunction) -> Result<&'a str> {
    clf.classify(Rule::BaselineL2, f)
}

/// Cross-validated accuracy of one rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleReport {
    pub rule: Rule,
    pub fold_accuracy: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation over folds.
    pub sd: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    /// Held-out samples no class could score, per true class.
    pub unclassified: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub seed: u64,
    pub folds: usize,
    pub model: ModelKind,
    pub labels: Vec<String>,
    /// Held-out count per class.
    pub class_counts: Vec<usize>,
    pub rules: Vec<RuleReport>,
}

impl CvReport {
    pub fn rule(&self, rule: Rule) -> &RuleReport {
        self.rules.iter().find(|r| r.rule == rule).expect("all rules are reported")
    }
}

/// Mean and sample standard deviation.
pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    (mean, sd)
}

/// Fold index of every sample: each class is shuffled by one stream seeded
/// with `seed` (classes in order of first appearance), then dealt round-robin.
pub fn stratified_folds(data: &[(String, SampledFunction)], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::arg(format!("need at least 2 folds, got {k}")));
    }
    let groups = group_by_label(data);
    if let Some((label, idx)) = groups.iter().find(|(_, idx)| idx.len() < k) {
        return Err(Error::arg(format!("class '{label}' has {} samples, fewer than {k} folds", idx.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; data.len()];
    for (_, idx) in &groups {
        let mut idx = idx.clone();
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            fold[i] = pos % k;
        }
    }
    Ok(fold)
}

/// Stratified k-fold cross-validation of all four rules.
pub fn kfold_cv(data: &[(String, SampledFunction)], cfg: &ClassifierConfig, k: usize, seed: u64) -> Result<CvReport> {
    let fold = stratified_folds(data, k, seed)?;
    let groups = group_by_label(data);
    let labels: Vec<String> = groups.iter().map(|(l, _)| l.clone()).collect();
    let class_of = |i: usize| labels.iter().position(|l| *l == data[i].0).expect("label present");
    // per fold: (true class, prediction per rule) for each held-out sample
    let outcomes = (0..k)
        .into_par_iter()
        .map(|j| -> Result<Vec<(usize, [Option<usize>; 4])>> {
            let train_set: Vec<(String, SampledFunction)> =
                (0..data.len()).filter(|&i| fold[i] != j).map(|i| data[i].clone()).collect();
            let clf = train(&train_set, cfg)?;
            (0..data.len())
                .filter(|&i| fold[i] == j)
                .map(|i| {
                    let s = clf.scores(&data[i].1)?;
                    let mut pred = [None; 4];
                    for (r, rule) in Rule::ALL.iter().enumerate() {
                        // map the classifier's class order back to the global one
                        pred[r] = clf
                            .decide(&s, *rule)
                            .ok()
                            .map(|c| labels.iter().position(|l| *l == clf.classes[c].label).expect("label present"));
                    }
                    Ok((class_of(i), pred))
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;
    let l = labels.len();
    let rules = Rule::ALL
        .iter()
        .enumerate()
        .map(|(r, &rule)| {
            let mut confusion = vec![vec![0; l]; l];
            let mut unclassified = vec![0; l];
            let fold_accuracy: Vec<f64> = outcomes
                .iter()
                .map(|o| {
                    let mut hits = 0;
                    for (truth, pred) in o {
                        match pred[r] {
                            Some(p) => {
                                confusion[*truth][p] += 1;
                                hits += (p == *truth) as usize;
                            }
                            None => unclassified[*truth] += 1,
                        }
                    }
                    hits as f64 / o.len() as f64
                })
                .collect();
            let (mean, sd) = mean_sd(&fold_accuracy);
            RuleReport { rule, fold_accuracy, mean, sd, confusion, unclassified }
        })
        .collect();
    Ok(CvReport {
        seed,
        folds: k,
        model: cfg.model,
        labels,
        class_counts: groups.iter().map(|(_, idx)| idx.len()).collect(),
        rules,
    })
}

/// Results table: one row per rule, columns Gaussian and Kernel Density,
/// cells `mean (sd)`.
pub fn table_csv(gaussian: &CvReport, kde: &CvReport) -> String {
    let mut out = String::from("rule,Gaussian,Kernel Density\n");
    for rule in Rule::ALL {
        let (g, k) = (gaussian.rule(rule), kde.rule(rule));
        out.push_str(&format!("{},{:.2} ({:.2}),{:.2} ({:.2})\n", rule.title(), g.mean, g.sd, k.mean, k.sd));
    }
    out
}
