//! Vertical and horizontal fPCA of aligned data, with the first principal
//! paths printed at a few points.

use elasticfda::align::{separate_lenient, SeparationConfig};
use elasticfda::datasets::gen_bimodal_fig2;
use elasticfda::fpca::{
    horizontal_fpca, principal_path_horizontal, principal_path_vertical, select_components, vertical_fpca,
};

fn main() -> elasticfda::Result<()> {
    let s = gen_bimodal_fig2(21, 7)?;
    let r = separate_lenient(&s.observed, &SeparationConfig::default())?;
    let v = vertical_fpca(&r.aligned, 10)?;
    let h = horizontal_fpca(&r.warps, 10)?;
    println!("vertical spectrum   {:?}", &v.singular_values[..4]);
    println!("horizontal spectrum {:?}", &h.singular_values[..4]);
    println!(
        "components for 95% energy: vertical {}, horizontal {}",
        select_components(&v.singular_values, 0.95)?,
        select_components(&h.singular_values, 0.95)?
    );
    for tau in -2..=2 {
        let f = principal_path_vertical(&v, 1, tau as f64)?;
        let w = principal_path_horizontal(&h, 1, tau as f64)?;
        let top = f.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        println!("tau {tau:+}: amplitude path max {top:.3}, phase path gamma(0.5) {:.3}", w.eval(0.5));
    }
    Ok(())
}
