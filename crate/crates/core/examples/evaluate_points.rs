//! Point matching and the F1/AP/AR/MAE/RMSE report on a small fixture.

use zsol::grid::{Point, PointSet};
use zsol::metrics::{evaluate, match_points, preset, EvalImage};

fn main() -> zsol::Result<()> {
    let gt = PointSet::new(vec![Point::new(10.0, 10.0), Point::new(50.0, 50.0), Point::new(90.0, 20.0)]);
    let pred = PointSet::with_confidences(
        vec![
            Point::new(11.0, 10.0),
            Point::new(70.0, 70.0),
            Point::new(50.0, 52.0),
            Point::new(10.0, 12.0),
            Point::new(88.0, 21.0),
        ],
        vec![0.9, 0.8, 0.7, 0.6, 0.5],
    )?;

    let m = match_points(&pred, &gt, 5.0)?;
    println!(
        "sigma 5: tp {} fp {} fn {}  P {:.3} R {:.3} F1 {:.3}",
        m.tp,
        m.fp,
        m.fn_,
        m.precision(),
        m.recall(),
        m.f1()
    );
    for pair in &m.pairs {
        println!("  pred {} <-> gt {} at {:.3} px", pair.pred, pair.gt, pair.distance);
    }

    let images = vec![
        EvalImage {
            id: "fixture".into(),
            pred,
            gt: gt.clone(),
            category: Some("apples".into()),
        },
        EvalImage {
            id: "exact".into(),
            pred: gt.clone(),
            gt,
            category: Some("cars".into()),
        },
    ];
    for name in ["fsc147", "shtechA"] {
        print!("{}", evaluate(&images, preset(name)?)?.table());
    }
    Ok(())
}
