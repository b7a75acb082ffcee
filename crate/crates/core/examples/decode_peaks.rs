//! Renders a point set as a Gaussian density map and decodes it back into
//! points under both density regimes.

use zsol::grid::{gaussian_splat, Point, PointSet, DEFAULT_SIGMA};
use zsol::locate::{decode_points, DecodeConfig, DensityRegime};

fn main() -> zsol::Result<()> {
    let gt = PointSet::new(vec![
        Point::new(10.0, 12.0),
        Point::new(40.0, 15.0),
        Point::new(25.0, 50.0),
        Point::new(55.0, 55.0),
    ]);
    let density = gaussian_splat(&gt, 64, 64, DEFAULT_SIGMA)?;
    println!("density mass {:.4} for {} points", density.sum(), gt.len());

    // Unit-mass kernels peak near 0.04; lift them to peak 1 before decoding.
    let peak_one = 2.0 * std::f32::consts::PI * (DEFAULT_SIGMA * DEFAULT_SIGMA) as f32;
    let scaled = zsol::grid::Grid::new(64, 64, density.values().iter().map(|v| v * peak_one).collect())?;

    for regime in [DensityRegime::Dense, DensityRegime::Sparse] {
        let cfg = DecodeConfig::for_regime(regime);
        let found = decode_points(&scaled, &cfg)?;
        println!("{regime} (alpha {:.4}): {} points", cfg.alpha, found.len());
        for (p, c) in found.points().iter().zip(found.confidences().unwrap_or_default()) {
            println!("  ({:>4}, {:>4})  confidence {c:.3}", p.x, p.y);
        }
    }
    Ok(())
}
