//! Command implementations behind the `zsol` binary.
//!
//! Each command takes plain option structs and a log sink, so the binary stays
//! a thin argument parser and tests can drive commands directly. Per-image
//! work runs on a dedicated rayon pool; results are gathered in input order,
//! so outputs do not depend on the thread count.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::align::{history_csv, train as train_model, TrainSample};
use crate::config::{parse_config, TrainJob};
use crate::error::{Error, Result};
use crate::format::{
    read_checkpoint, read_file, read_points, read_tensor, read_tokens, write_checkpoint, write_file,
    write_points, write_tensor, Tensor,
};
use crate::grid::gaussian_splat;
use crate::locate::{localize as run_localize, DecodeConfig, DensityRegime};
use crate::manifest::Manifest;
use crate::metrics::{evaluate as run_evaluate, preset, EvalImage};
use crate::synth::{gen_synthetic, SyntheticSceneSpec};
use crate::tssm::{MockEmbedder, MockTokenizer, TextBundle};

pub const THREADS_ENV: &str = "ZSOL_THREADS";

fn log(out: &mut dyn Write, line: impl AsRef<str>) -> Result<()> {
    writeln!(out, "{}", line.as_ref()).map_err(|e| Error::io("<log>", e))
}

/// Resolves the worker count: explicit flag, then `ZSOL_THREADS`, then 1.
pub fn resolve_threads(flag: Option<usize>) -> Result<usize> {
    let n = match flag {
        Some(n) => n,
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?,
            Err(_) => 1,
        },
    };
    if n == 0 {
        return Err(Error::invalid("thread count must be >= 1"));
    }
    Ok(n)
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start {threads} worker threads: {e}")))
}

#[derive(Debug, Clone)]
pub struct GenDensityOpts {
    pub points: PathBuf,
    pub height: usize,
    pub width: usize,
    pub sigma: f64,
    pub out: PathBuf,
}

pub fn gen_density(opts: &GenDensityOpts, out: &mut dyn Write) -> Result<()> {
    let points = read_points(&opts.points)?;
    let map = gaussian_splat(&points, opts.height, opts.width, opts.sigma)?;
    write_tensor(&opts.out, &Tensor::from_grid(&map))?;
    log(
        out,
        format!(
            "wrote {}x{} density for {} points (mass {:.6}) to {}",
            opts.height,
            opts.width,
            points.len(),
            map.sum(),
            opts.out.display()
        ),
    )
}

#[derive(Debug, Clone)]
pub struct TrainOpts {
    pub manifest: PathBuf,
    /// Optional config file; defaults apply when absent.
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    /// Overrides the config seed.
    pub seed: Option<u64>,
    pub threads: usize,
}

/// Trains from a manifest; writes `model.zsmd` and `loss.csv` into `out`.
pub fn train(opts: &TrainOpts, out: &mut dyn Write) -> Result<TrainJob> {
    let mut job = match &opts.config {
        Some(p) => {
            let text = String::from_utf8(read_file(p)?)
                .map_err(|_| Error::format("config", format!("{} is not UTF-8", p.display())))?;
            parse_config(&text)?
        }
        None => TrainJob::default(),
    };
    if let Some(seed) = opts.seed {
        job.train.seed = seed;
    }
    let manifest = Manifest::read(&opts.manifest)?;
    if manifest.records.is_empty() {
        return Err(Error::data("manifest has no records"));
    }
    let sigma = job.train.sigma;
    let per_image = pool(opts.threads)?.install(|| {
        manifest
            .records
            .par_iter()
            .map(|r| manifest.load(r)?.train_samples(sigma))
            .collect::<Result<Vec<_>>>()
    })?;
    let dataset: Vec<TrainSample> = per_image.into_iter().flatten().collect();
    let image_dim = dataset[0].patches.dim();
    let text_dim = dataset[0].text.len();
    let model = job.initial_model(image_dim, text_dim)?;
    log(
        out,
        format!(
            "training on {} windows from {} images: {} contrastive + {} mse epochs, lr {}, seed {}",
            dataset.len(),
            manifest.records.len(),
            job.train.contrastive_epochs,
            job.train.mse_epochs,
            job.train.lr,
            job.train.seed
        ),
    )?;
    let report = train_model(model, &dataset, &job.train)?;
    write_checkpoint(opts.out.join("model.zsmd"), &report.model)?;
    write_file(&opts.out.join("loss.csv"), history_csv(&report.history).as_bytes())?;
    if let Some(last) = report.history.last() {
        log(out, format!("final {} loss {:.6}", last.stage, last.loss))?;
    }
    log(out, format!("wrote {}", opts.out.join("model.zsmd").display()))?;
    Ok(job)
}

#[derive(Debug, Clone)]
pub struct LocalizeOpts {
    pub manifest: PathBuf,
    pub checkpoint: PathBuf,
    pub regime: DensityRegime,
    pub out: PathBuf,
    /// Also write `{id}.density.zsol` next to each point file.
    pub overlay: bool,
    pub threads: usize,
}

/// Writes `{id}.zspt` per manifest record and returns `(id, count)` pairs.
pub fn localize(opts: &LocalizeOpts, out: &mut dyn Write) -> Result<Vec<(String, usize)>> {
    let manifest = Manifest::read(&opts.manifest)?;
    let model = read_checkpoint(&opts.checkpoint)?;
    let cfg = DecodeConfig::for_regime(opts.regime);
    log(
        out,
        format!("regime {} (alpha = {:.6}, beta = {}, window {})", cfg.regime, cfg.alpha, cfg.beta, cfg.pool_window),
    )?;
    let results = pool(opts.threads)?.install(|| {
        manifest
            .records
            .par_iter()
            .map(|r| {
                let s = manifest.load(r)?;
                let loc = run_localize(&s.windows, &s.text, &model, &cfg, &s.plan)?;
                write_points(opts.out.join(format!("{}.zspt", s.image_id)), &loc.points)?;
                if opts.overlay {
                    write_tensor(
                        opts.out.join(format!("{}.density.zsol", s.image_id)),
                        &Tensor::from_grid(&loc.density),
                    )?;
                }
                Ok((s.image_id, loc.count))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    for (id, n) in &results {
        log(out, format!("{id}: {n} points"))?;
    }
    Ok(results)
}

#[derive(Debug, Clone)]
pub struct EvaluateOpts {
    pub pred_dir: PathBuf,
    pub gt_dir: PathBuf,
    pub preset: String,
    /// Supplies per-image categories for category-level AR.
    pub manifest: Option<PathBuf>,
    pub out: PathBuf,
}

fn point_files(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "zspt") {
            let id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            files.push((id, path));
        }
    }
    files.sort();
    Ok(files)
}

/// Pairs `{id}.zspt` files across the two directories and writes
/// `report.csv`, `per_image.csv` and `report.txt` into `out`.
pub fn evaluate(opts: &EvaluateOpts, out: &mut dyn Write) -> Result<crate::metrics::EvalReport> {
    let preset = preset(&opts.preset)?;
    let categories = match &opts.manifest {
        Some(p) => Manifest::read(p)?
            .records
            .into_iter()
            .map(|r| (r.image_id, r.category))
            .collect(),
        None => std::collections::HashMap::new(),
    };
    let gts = point_files(&opts.gt_dir)?;
    if gts.is_empty() {
        return Err(Error::data(format!("no .zspt files in {}", opts.gt_dir.display())));
    }
    let mut images = Vec::with_capacity(gts.len());
    for (id, gt_path) in gts {
        let pred_path = opts.pred_dir.join(format!("{id}.zspt"));
        if !pred_path.is_file() {
            return Err(Error::data(format!("missing prediction {}", pred_path.display())));
        }
        images.push(EvalImage {
            category: categories.get(&id).cloned().flatten(),
            pred: read_points(&pred_path)?,
            gt: read_points(&gt_path)?,
            id,
        });
    }
    let report = run_evaluate(&images, preset)?;
    write_file(&opts.out.join("report.csv"), report.summary_csv().as_bytes())?;
    write_file(&opts.out.join("per_image.csv"), report.per_image_csv().as_bytes())?;
    let table = report.table();
    write_file(&opts.out.join("report.txt"), table.as_bytes())?;
    log(out, table.trim_end())?;
    Ok(report)
}

/// Where the text artifacts for `tssm-inspect` come from.
#[derive(Debug, Clone)]
pub enum TextSource {
    Files {
        tokens: PathBuf,
        token_embeddings: PathBuf,
        sentence: PathBuf,
    },
    /// Built-in mock tokenizer and embedder.
    Mock { title: String, dim: usize, seed: u64 },
}

pub fn load_text(source: &TextSource) -> Result<TextBundle> {
    match source {
        TextSource::Files {
            tokens,
            token_embeddings,
            sentence,
        } => {
            let sentence = read_tensor(sentence)?.into_embeddings()?;
            if sentence.rows() != 1 {
                return Err(Error::data("sentence embedding must be a single row"));
            }
            TextBundle::build(
                read_tokens(tokens)?,
                read_tensor(token_embeddings)?.into_embeddings()?,
                sentence.row(0).to_vec(),
            )
        }
        TextSource::Mock { title, dim, seed } => MockEmbedder::new(*dim, *seed).bundle(&MockTokenizer, title),
    }
}

pub fn tssm_inspect(source: &TextSource, out: &mut dyn Write) -> Result<TextBundle> {
    let text = load_text(source)?;
    let span = text.tokens.title_span();
    let norm = text.self_support.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
    let ids = &text.tokens.ids()[span.start..span.start + span.len];
    log(out, format!("title span: start {} len {} ids {ids:?}", span.start, span.len))?;
    log(out, format!("W = {:.9}", text.weight))?;
    log(out, format!("|e_ts| = {norm:.9}"))?;
    Ok(text)
}

pub fn synth(spec: &SyntheticSceneSpec, dir: &Path, out: &mut dyn Write) -> Result<Manifest> {
    let manifest = gen_synthetic(spec, dir)?;
    let objects: usize = manifest
        .records
        .iter()
        .map(|r| read_points(manifest.resolve(&r.points_file)).map(|p| p.len()))
        .sum::<Result<usize>>()?;
    log(
        out,
        format!(
            "wrote {} scenes ({objects} objects) to {}",
            manifest.records.len(),
            dir.join("manifest.csv").display()
        ),
    )?;
    Ok(manifest)
}
