//! Dataset manifest: one CSV row per image, paths relative to the manifest.
//!
//! Columns: `image_id,width,height,patch_files,token_file,
//! token_embedding_file,sentence_file,points_file,category`. `patch_files`
//! lists one `gh × gw × D` tensor per sliding window, `;`-separated, in
//! window-plan order.

use std::path::{Path, PathBuf};

use crate::align::{patch_factor, TrainSample};
use crate::error::{Error, Result};
use crate::format::{read_points, read_tensor, read_tokens, write_file};
use crate::grid::{gaussian_splat, DensityMap, PointSet};
use crate::locate::{plan_windows, Window, WindowPatches, WindowPlan};
use crate::tssm::TextBundle;

pub const HEADER: [&str; 9] = [
    "image_id",
    "width",
    "height",
    "patch_files",
    "token_file",
    "token_embedding_file",
    "sentence_file",
    "points_file",
    "category",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRecord {
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    pub patch_files: Vec<PathBuf>,
    pub token_file: PathBuf,
    pub token_embedding_file: PathBuf,
    pub sentence_file: PathBuf,
    pub points_file: PathBuf,
    pub category: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    /// Directory relative paths resolve against.
    pub root: PathBuf,
    pub records: Vec<ManifestRecord>,
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::format("manifest", format!("{}: {e}", path.display()))
}

impl Manifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::format("manifest", format!("{}: {other:?}", path.display())),
        })?;
        let headers = reader.headers().map_err(|e| csv_err(path, e))?.clone();
        if headers.iter().ne(HEADER.iter().copied()) {
            return Err(Error::format(
                "manifest",
                format!("{}: expected header {}", path.display(), HEADER.join(",")),
            ));
        }
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut records = Vec::new();
        for (i, row) in reader.records().enumerate() {
            let row = row.map_err(|e| csv_err(path, e))?;
            let field = |k: usize| row.get(k).unwrap_or("");
            let dim = |k: usize| -> Result<usize> {
                field(k).parse().map_err(|_| {
                    Error::format("manifest", format!("row {}: bad {} `{}`", i + 1, HEADER[k], field(k)))
                })
            };
            let rec = ManifestRecord {
                image_id: field(0).to_string(),
                width: dim(1)?,
                height: dim(2)?,
                patch_files: field(3).split(';').filter(|s| !s.is_empty()).map(PathBuf::from).collect(),
                token_file: field(4).into(),
                token_embedding_file: field(5).into(),
                sentence_file: field(6).into(),
                points_file: field(7).into(),
                category: Some(field(8)).filter(|c| !c.is_empty()).map(String::from),
            };
            if rec.image_id.is_empty() || rec.width == 0 || rec.height == 0 || rec.patch_files.is_empty() {
                return Err(Error::format("manifest", format!("row {} is incomplete", i + 1)));
            }
            records.push(rec);
        }
        let manifest = Manifest { root, records };
        manifest.check_files_exist()?;
        Ok(manifest)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        w.write_record(HEADER).expect("in-memory write");
        for r in &self.records {
            let patches = r
                .patch_files
                .iter()
                .map(|p| p.to_string_lossy().into_owned())
                .collect::<Vec<_>>()
                .join(";");
            w.write_record([
                r.image_id.as_str(),
                &r.width.to_string(),
                &r.height.to_string(),
                &patches,
                &r.token_file.to_string_lossy(),
                &r.token_embedding_file.to_string_lossy(),
                &r.sentence_file.to_string_lossy(),
                &r.points_file.to_string_lossy(),
                r.category.as_deref().unwrap_or(""),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), self.to_csv().as_bytes())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.root.join(p)
    }

    fn check_files_exist(&self) -> Result<()> {
        for r in &self.records {
            let all = r
                .patch_files
                .iter()
                .chain([&r.token_file, &r.token_embedding_file, &r.sentence_file, &r.points_file]);
            for p in all {
                let full = self.resolve(p);
                if !full.is_file() {
                    return Err(Error::data(format!(
                        "{}: referenced file {} does not exist",
                        r.image_id,
                        full.display()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn load(&self, record: &ManifestRecord) -> Result<LoadedSample> {
        LoadedSample::load(self, record)
    }
}

/// Everything a manifest row references, parsed and checked for consistency.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedSample {
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    pub plan: WindowPlan,
    pub windows: Vec<WindowPatches>,
    pub text: TextBundle,
    pub gt: PointSet,
    pub category: Option<String>,
}

impl LoadedSample {
    fn load(m: &Manifest, r: &ManifestRecord) -> Result<Self> {
        let plan = plan_windows(r.height, r.width)?;
        if plan.len() != r.patch_files.len() {
            return Err(Error::data(format!(
                "{}: {} patch files for a {}-window plan",
                r.image_id,
                r.patch_files.len(),
                plan.len()
            )));
        }
        let windows = r
            .patch_files
            .iter()
            .map(|p| {
                let (patches, grid) = read_tensor(m.resolve(p))?.into_patch_grid()?;
                patch_factor((plan.window_height, plan.window_width), grid)?;
                Ok(WindowPatches { patches, grid })
            })
            .collect::<Result<Vec<_>>>()?;
        let tokens = read_tokens(m.resolve(&r.token_file))?;
        let token_embeddings = read_tensor(m.resolve(&r.token_embedding_file))?.into_embeddings()?;
        let sentence = read_tensor(m.resolve(&r.sentence_file))?.into_embeddings()?;
        if sentence.rows() != 1 {
            return Err(Error::data(format!("{}: sentence embedding must be a single row", r.image_id)));
        }
        let text = TextBundle::build(tokens, token_embeddings, sentence.row(0).to_vec())?;
        let gt = read_points(m.resolve(&r.points_file))?;
        gt.check_bounds(r.height, r.width)?;
        Ok(Self {
            image_id: r.image_id.clone(),
            width: r.width,
            height: r.height,
            plan,
            windows,
            text,
            gt,
            category: r.category.clone(),
        })
    }

    pub fn gt_density(&self, sigma: f64) -> Result<DensityMap> {
        gaussian_splat(&self.gt, self.height, self.width, sigma)
    }

    /// One training sample per window, ground truth cropped from the full-image density.
    pub fn train_samples(&self, sigma: f64) -> Result<Vec<TrainSample>> {
        let full = self.gt_density(sigma)?;
        self.plan
            .windows()
            .zip(&self.windows)
            .map(|(win, wp)| {
                TrainSample::new(
                    wp.patches.clone(),
                    wp.grid,
                    self.text.self_support.clone(),
                    crop(&full, win)?,
                )
            })
            .collect()
    }
}

pub fn crop(map: &DensityMap, win: Window) -> Result<DensityMap> {
    if win.x + win.width > map.width() || win.y + win.height > map.height() {
        return Err(Error::invalid("crop window exceeds the map"));
    }
    let mut values = Vec::with_capacity(win.width * win.height);
    for r in win.y..win.y + win.height {
        let start = r * map.width() + win.x;
        values.extend_from_slice(&map.values()[start..start + win.width]);
    }
    DensityMap::new(win.height, win.width, values)
}
