use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use zsol::cli::{self, EvaluateOpts, GenDensityOpts, LocalizeOpts, TextSource, TrainOpts};
use zsol::grid::DEFAULT_SIGMA;
use zsol::locate::DensityRegime;
use zsol::synth::SyntheticSceneSpec;

#[derive(Parser)]
#[command(name = "zsol", version, about = "Text-prompted zero-shot object localization")]
struct Args {
    /// Worker threads for per-image work (default: $ZSOL_THREADS, else 1).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a point file as a Gaussian density tensor.
    GenDensity {
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        height: usize,
        #[arg(long)]
        width: usize,
        #[arg(long, default_value_t = DEFAULT_SIGMA)]
        sigma: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the alignment head; writes model.zsmd and loss.csv.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Predict one point file per manifest image.
    Localize {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "dense")]
        regime: DensityRegime,
        #[arg(long)]
        out: PathBuf,
        /// Also export each fused density map as a tensor.
        #[arg(long)]
        overlay: bool,
    },
    /// Score predicted point files against ground truth.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value = "fsc147")]
        preset: String,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the TSSM weight, fused norm and title span for a prompt.
    TssmInspect {
        #[arg(long, requires_all = ["token_embeddings", "sentence"], conflicts_with = "title")]
        tokens: Option<PathBuf>,
        #[arg(long)]
        token_embeddings: Option<PathBuf>,
        #[arg(long)]
        sentence: Option<PathBuf>,
        /// Use the built-in mock tokenizer/embedder on this title.
        #[arg(long, required_unless_present = "tokens")]
        title: Option<String>,
        #[arg(long, default_value_t = 512)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate a synthetic manifest of scenes.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        scenes: usize,
        #[arg(long, default_value_t = 3)]
        min_objects: usize,
        #[arg(long, default_value_t = 6)]
        max_objects: usize,
        #[arg(long, default_value_t = 96)]
        height: usize,
        #[arg(long, default_value_t = 96)]
        width: usize,
        #[arg(long, default_value_t = 8)]
        patch_size: usize,
        #[arg(long, default_value_t = 32)]
        dim: usize,
        #[arg(long, default_value_t = 10.0)]
        snr: f64,
        #[arg(long, default_value = "apples")]
        title: String,
        #[arg(long)]
        category: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(args: Args, out: &mut dyn Write) -> zsol::Result<()> {
    let threads = cli::resolve_threads(args.threads)?;
    match args.command {
        Command::GenDensity {
            points,
            height,
            width,
            sigma,
            out: path,
        } => cli::gen_density(
            &GenDensityOpts {
                points,
                height,
                width,
                sigma,
                out: path,
            },
            out,
        ),
        Command::Train {
            manifest,
            config,
            out: dir,
            seed,
        } => cli::train(
            &TrainOpts {
                manifest,
                config,
                out: dir,
                seed,
                threads,
            },
            out,
        )
        .map(drop),
        Command::Localize {
            manifest,
            checkpoint,
            regime,
            out: dir,
            overlay,
        } => cli::localize(
            &LocalizeOpts {
                manifest,
                checkpoint,
                regime,
                out: dir,
                overlay,
                threads,
            },
            out,
        )
        .map(drop),
        Command::Evaluate {
            pred,
            gt,
            preset,
            manifest,
            out: dir,
        } => cli::evaluate(
            &EvaluateOpts {
                pred_dir: pred,
                gt_dir: gt,
                preset,
                manifest,
                out: dir,
            },
            out,
        )
        .map(drop),
        Command::TssmInspect {
            tokens,
            token_embeddings,
            sentence,
            title,
            dim,
            seed,
        } => {
            let source = match (tokens, token_embeddings, sentence, title) {
                (Some(tokens), Some(token_embeddings), Some(sentence), _) => TextSource::Files {
                    tokens,
                    token_embeddings,
                    sentence,
                },
                (_, _, _, Some(title)) => TextSource::Mock { title, dim, seed },
                _ => return Err(zsol::Error::InvalidArgument("give --title or all three text files".into())),
            };
            cli::tssm_inspect(&source, out).map(drop)
        }
        Command::Synth {
            out: dir,
            scenes,
            min_objects,
            max_objects,
            height,
            width,
            patch_size,
            dim,
            snr,
            title,
            category,
            seed,
        } => {
            let spec = SyntheticSceneSpec {
                scenes,
                min_objects,
                max_objects,
                height,
                width,
                patch_size,
                dim,
                snr,
                title,
                category,
                seed,
                ..SyntheticSceneSpec::default()
            };
            cli::synth(&spec, &dir, out).map(drop)
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut stdout = std::io::stdout().lock();
    match run(args, &mut stdout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
