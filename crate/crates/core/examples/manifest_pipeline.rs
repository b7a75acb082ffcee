//! The command-line workflow driven through the library: synthesize a
//! manifest on disk, train, localize and evaluate, all in a scratch directory.

use std::path::PathBuf;

use zsol::cli::{self, EvaluateOpts, LocalizeOpts, TrainOpts};
use zsol::locate::DensityRegime;
use zsol::synth::SyntheticSceneSpec;

fn main() -> zsol::Result<()> {
    let root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("zsol-manifest-pipeline"));
    let mut log = std::io::stdout();

    let spec = SyntheticSceneSpec {
        scenes: 24,
        seed: 11,
        ..SyntheticSceneSpec::default()
    };
    cli::synth(&spec, &root.join("data"), &mut log)?;

    std::fs::create_dir_all(&root).ok();
    let config = root.join("train.cfg");
    std::fs::write(&config, "contrastive_epochs = 5\nmse_epochs = 20\nlr = 0.0004\n")
        .map_err(|e| zsol::Error::Io { path: config.clone(), source: e })?;
    cli::train(
        &TrainOpts {
            manifest: root.join("data/manifest.csv"),
            config: Some(config),
            out: root.join("model"),
            seed: Some(1),
            threads: 1,
        },
        &mut log,
    )?;
    cli::localize(
        &LocalizeOpts {
            manifest: root.join("data/manifest.csv"),
            checkpoint: root.join("model/model.zsmd"),
            regime: DensityRegime::Dense,
            out: root.join("pred"),
            overlay: true,
            threads: 2,
        },
        &mut log,
    )?;
    cli::evaluate(
        &EvaluateOpts {
            pred_dir: root.join("pred"),
            gt_dir: root.join("data/points"),
            preset: "fsc147".into(),
            manifest: None,
            out: root.join("report"),
        },
        &mut log,
    )?;
    println!("artifacts under {}", root.display());
    Ok(())
}
