//! Synthetic scenes → two-stage training → sliding-window localization →
//! point metrics, entirely in memory.
//!
//! Extra arguments are `key=value` training-config overrides, e.g.
//! `cargo run --release --example end_to_end -- lr=0.001 mse_epochs=40`.

use std::time::Instant;

use zsol::align::{train, Stage};
use zsol::config::parse_config;
use zsol::locate::{localize, DecodeConfig, DensityRegime};
use zsol::metrics::{evaluate, preset, EvalImage};
use zsol::synth::{synthesize, SyntheticSceneSpec};

const DEFAULT_CONFIG: &str = "\
contrastive_epochs = 5
mse_epochs = 20
lr = 0.0004
seed = 7
";

fn main() -> zsol::Result<()> {
    let overrides: Vec<String> = std::env::args().skip(1).collect();
    let job = parse_config(&format!("{DEFAULT_CONFIG}{}\n", overrides.join("\n")))?;
    let spec = SyntheticSceneSpec {
        scenes: 30,
        snr: 10.0,
        seed: 7,
        ..SyntheticSceneSpec::default()
    };
    let start = Instant::now();
    let set = synthesize(&spec)?;
    let (train_scenes, test_scenes) = set.scenes.split_at(20);

    let dataset = set.train_samples(train_scenes, job.train.sigma)?;
    let model = job.initial_model(spec.dim, spec.dim)?;
    let report = train(model, &dataset, &job.train)?;
    let mse = report.stage_losses(Stage::Mse);
    println!(
        "trained {} steps; mse loss {:.5} -> {:.5}",
        report.lr_trace.len(),
        mse.first().copied().unwrap_or(f64::NAN),
        mse.last().copied().unwrap_or(f64::NAN)
    );

    let cfg = DecodeConfig::for_regime(DensityRegime::Dense);
    let mut images = Vec::new();
    for scene in test_scenes {
        let windows = scene.windows(spec.patch_size)?;
        let loc = localize(&windows, &set.text, &report.model, &cfg, &scene.plan)?;
        images.push(EvalImage {
            id: scene.id.clone(),
            pred: loc.points,
            gt: scene.points.clone(),
            category: None,
        });
    }
    let eval = evaluate(&images, preset("fsc147")?)?;
    print!("{}", eval.table());
    println!(
        "F1@5 = {:.4}, MAE = {:.3}, elapsed {:.2?}",
        eval.strict.f1,
        eval.mae,
        start.elapsed()
    );
    Ok(())
}
