//! Two-stage training of the patch/text projection on a handful of
//! synthetic scenes, printing the loss curve and learning-rate schedule.

use zsol::align::{history_csv, train, ProjectionModel, TrainConfig};
use zsol::synth::{synthesize, SyntheticSceneSpec};

fn main() -> zsol::Result<()> {
    let set = synthesize(&SyntheticSceneSpec {
        scenes: 12,
        seed: 3,
        ..SyntheticSceneSpec::default()
    })?;
    let cfg = TrainConfig {
        contrastive_epochs: 3,
        mse_epochs: 30,
        lr: 4e-4,
        decay_every: 50,
        ..TrainConfig::default()
    };
    let samples = set.train_samples(&set.scenes, cfg.sigma)?;
    let report = train(ProjectionModel::identity(set.spec.dim)?, &samples, &cfg)?;
    print!("{}", history_csv(&report.history));

    let schedule: Vec<String> = report.lr_trace.iter().step_by(25).map(|lr| format!("{lr:.3e}")).collect();
    println!("lr every 25 steps: {}", schedule.join(" "));
    Ok(())
}
