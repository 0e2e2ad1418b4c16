//! Warps as points on the unit sphere: distances, log/exp maps and the
//! Karcher mean.

use elasticfda::datasets::exp_warp;
use elasticfda::funcrep::Grid;
use elasticfda::warpspace::{
    karcher_mean_warps, phase_distance, sphere_exp, sphere_log, to_psi, KarcherConfig, Warp,
};

fn main() -> elasticfda::Result<()> {
    let g = Grid::unit(101)?;
    let warps: Vec<Warp> = [-1.5, -0.5, 0.0, 0.7, 1.2].iter().map(|&a| exp_warp(g, a)).collect::<Result<_, _>>()?;

    println!("phase distances from the identity:");
    for (k, w) in warps.iter().enumerate() {
        println!("  warp {k}: {:.4}", phase_distance(&Warp::identity(g), w)?);
    }

    let (p0, p1) = (to_psi(&warps[0]), to_psi(&warps[4]));
    let v = sphere_log(&p0, &p1)?;
    let back = sphere_exp(&p0, &v);
    let err = back.values().iter().zip(p1.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("shooting vector norm {:.4}, exp(log) error {err:.1e}", v.norm());

    let m = karcher_mean_warps(&warps, &KarcherConfig::default())?;
    println!("Karcher mean after {} iterations, residual {:.1e}, mean warp at 0.5 = {:.4}", m.iterations, m.residual, m.mean.eval(0.5));
    Ok(())
}
