//! SRSF of a function, its inverse, and the isometry of the warp action.

use elasticfda::funcrep::{Grid, SampledFunction};
use elasticfda::srsf::{from_srsf, l2_distance, to_srsf, warp_action};
use elasticfda::warpspace::Warp;

fn main() -> elasticfda::Result<()> {
    let g = Grid::unit(1024)?;
    let f1 = SampledFunction::from_fn(g, |t| (2.0 * std::f64::consts::PI * t).sin())?;
    let f2 = SampledFunction::from_fn(g, |t| t * t - 0.5 * t)?;
    let (q1, q2) = (to_srsf(&f1), to_srsf(&f2));

    let back = from_srsf(&q1);
    let err = back.values().iter().zip(f1.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("roundtrip sup error: {err:.2e}");

    let gamma = Warp::new(g, g.points().iter().map(|t| t * t * (3.0 - 2.0 * t)).collect())?;
    let before = l2_distance(&q1, &q2)?;
    let after = l2_distance(&warp_action(&q1, &gamma)?, &warp_action(&q2, &gamma)?)?;
    println!("|q1 - q2| = {before:.6}, after warping both = {after:.6}");
    Ok(())
}
