//! Dynamic-programming alignment of one function to another.

use elasticfda::align::{amplitude_distance, pairwise_warp, AlignConfig};
use elasticfda::funcrep::{Grid, SampledFunction};
use elasticfda::srsf::{from_srsf, to_srsf, warp_action};

fn main() -> elasticfda::Result<()> {
    let g = Grid::unit(201)?;
    let bump = |c: f64| move |t: f64| (-(t - c).powi(2) / 0.01).exp();
    let f1 = SampledFunction::from_fn(g, bump(0.35))?;
    let f2 = SampledFunction::from_fn(g, bump(0.6))?;
    let cfg = AlignConfig::default();

    let (q1, q2) = (to_srsf(&f1), to_srsf(&f2));
    let gamma = pairwise_warp(&q1, &q2, &cfg)?;
    let aligned = from_srsf(&warp_action(&q2, &gamma)?);
    let peak = |f: &SampledFunction| {
        let k = f.values().iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        g.point(k)
    };
    println!("peaks: f1 {:.3}, f2 {:.3}, f2 aligned {:.3}", peak(&f1), peak(&f2), peak(&aligned));
    println!("gamma(0.35) = {:.3}", gamma.eval(0.35));
    println!("amplitude distance {:.4}", amplitude_distance(&f1, &f2, &cfg)?);
    Ok(())
}
