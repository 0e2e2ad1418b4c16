//! Separate phase and amplitude of the simulated bimodal data and report
//! the variance decomposition.

use elasticfda::align::{separate_lenient, variance_decomposition, SeparationConfig};
use elasticfda::datasets::gen_bimodal_fig2;

fn main() -> elasticfda::Result<()> {
    let s = gen_bimodal_fig2(21, 7)?;
    let r = separate_lenient(&s.observed, &SeparationConfig::default())?;
    let v = variance_decomposition(&s.observed, &r)?;
    println!("iterations {} converged {}", r.iterations, r.converged);
    println!("original variance  {:.5}", v.original_variance);
    println!("amplitude variance {:.5}", v.amplitude_variance);
    println!("phase variance     {:.5}", v.phase_variance);
    for w in &r.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
