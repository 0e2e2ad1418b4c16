//! Cross-validated likelihood classification on the two-class simulation,
//! printed as a results table.

use elasticfda::classify::{kfold_cv, table_csv, ClassifierConfig, ModelKind};
use elasticfda::datasets::gen_two_class;

fn main() -> elasticfda::Result<()> {
    let d = gen_two_class(12, 1)?;
    let data: Vec<_> = d.names.iter().cloned().zip(d.functions.iter().cloned()).collect();
    let gaussian = kfold_cv(&data, &ClassifierConfig::default(), 4, 1)?;
    let kde = kfold_cv(&data, &ClassifierConfig { model: ModelKind::Kde, ..ClassifierConfig::default() }, 4, 1)?;
    print!("{}", table_csv(&gaussian, &kde));
    Ok(())
}
