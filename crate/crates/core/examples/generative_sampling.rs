//! Fit a generative model on separated coefficients, draw samples, and
//! compare with a model fitted to unaligned data.

use elasticfda::align::SeparationConfig;
use elasticfda::cli::fit_model;
use elasticfda::datasets::gen_unimodal_fig1;
use elasticfda::fpca::{l2_fpca, select_components};
use elasticfda::funcrep::{local_maxima, SampledFunction};
use elasticfda::genmodel::{BaselineModel, Family, GaussianMode, GenerativeModel};

fn unimodal(fs: &[SampledFunction]) -> usize {
    fs.iter().filter(|f| local_maxima(f, 0.01).len() == 1).count()
}

fn main() -> elasticfda::Result<()> {
    let data = gen_unimodal_fig1(21, 7)?.observed_data();
    let model = fit_model(&data, &SeparationConfig::default(), 0.95, Family::Gaussian(GaussianMode::FullJoint))?;
    let draws = model.sample_seeded(1, 200)?;
    let ours: Vec<_> = draws.into_iter().map(|d| d.function).collect();

    let l2 = l2_fpca(&data.functions, 20)?;
    let l2 = l2.truncate(select_components(&l2.singular_values, 0.95)?)?;
    let base = BaselineModel::fit(l2, Family::Gaussian(GaussianMode::DiagonalBlocks))?;
    let theirs = base.sample_seeded(1, 200)?;
    println!("unimodal draws: separated {}/200, unaligned {}/200", unimodal(&ours), unimodal(&theirs));

    let json = model.to_json()?;
    let again = GenerativeModel::from_json(&json)?;
    println!("model document {} bytes, reload identical: {}", json.len(), again.to_json()? == json);
    Ok(())
}
