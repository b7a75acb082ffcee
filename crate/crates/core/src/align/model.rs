use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{check_dim, Error, Result};
use crate::grid::{cosine_from_sums, upsample_f64, DensityMap, EmbeddingMatrix, Grid, NORM_EPS};

pub const DEFAULT_TEMPERATURE: f64 = 0.07;

/// Linear map from patch-embedding space into text-embedding space.
///
/// Parameters are kept as one flat vector, weights (`image_dim × text_dim`,
/// row-major) followed by the bias. `project(x)_j = Σ_i x_i W_ij + b_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionModel {
    image_dim: usize,
    text_dim: usize,
    params: Vec<f64>,
    temperature: f64,
}

impl ProjectionModel {
    pub fn from_parts(image_dim: usize, text_dim: usize, weights: Vec<f64>, bias: Vec<f64>, temperature: f64) -> Result<Self> {
        if image_dim == 0 || text_dim == 0 {
            return Err(Error::invalid("projection dimensions must be >= 1"));
        }
        check_dim("projection weight count", image_dim * text_dim, weights.len())?;
        check_dim("projection bias length", text_dim, bias.len())?;
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::invalid(format!("temperature must be positive, got {temperature}")));
        }
        let mut params = weights;
        params.extend(bias);
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numerical("non-finite projection parameter".into()));
        }
        Ok(Self {
            image_dim,
            text_dim,
            params,
            temperature,
        })
    }

    pub fn zeros(image_dim: usize, text_dim: usize) -> Result<Self> {
        Self::from_parts(
            image_dim,
            text_dim,
            vec![0.0; image_dim * text_dim],
            vec![0.0; text_dim],
            DEFAULT_TEMPERATURE,
        )
    }

    /// Identity projection, zero bias.
    pub fn identity(dim: usize) -> Result<Self> {
        let mut weights = vec![0.0; dim * dim];
        for i in 0..dim {
            weights[i * dim + i] = 1.0;
        }
        Self::from_parts(dim, dim, weights, vec![0.0; dim], DEFAULT_TEMPERATURE)
    }

    /// Weights drawn from `N(0, scale²)`, zero bias.
    pub fn random(image_dim: usize, text_dim: usize, scale: f64, seed: u64) -> Result<Self> {
        let normal = Normal::new(0.0, scale).map_err(|e| Error::invalid(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = (0..image_dim * text_dim).map(|_| normal.sample(&mut rng)).collect();
        Self::from_parts(image_dim, text_dim, weights, vec![0.0; text_dim], DEFAULT_TEMPERATURE)
    }

    pub fn image_dim(&self) -> usize {
        self.image_dim
    }

    pub fn text_dim(&self) -> usize {
        self.text_dim
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn weights(&self) -> &[f64] {
        &self.params[..self.image_dim * self.text_dim]
    }

    pub fn bias(&self) -> &[f64] {
        &self.params[self.image_dim * self.text_dim..]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn project(&self, patch: &[f32]) -> Vec<f64> {
        let mut y = self.bias().to_vec();
        let dt = self.text_dim;
        for (i, &x) in patch.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            let row = &self.params[i * dt..(i + 1) * dt];
            for (yj, &w) in y.iter_mut().zip(row) {
                *yj += x as f64 * w;
            }
        }
        y
    }

    pub(crate) fn check_inputs(&self, patches: &EmbeddingMatrix, text: &[f32]) -> Result<()> {
        check_dim("patch embedding dim", self.image_dim, patches.dim())?;
        check_dim("text embedding dim", self.text_dim, text.len())
    }

    /// Per-patch scores `cos(project(patch), text) / τ`.
    pub fn scores(&self, patches: &EmbeddingMatrix, text: &[f32]) -> Result<Vec<f64>> {
        self.check_inputs(patches, text)?;
        let text64: Vec<f64> = text.iter().map(|&v| v as f64).collect();
        let tn = text64.iter().map(|v| v * v).sum::<f64>();
        Ok(patches
            .iter_rows()
            .map(|x| {
                let y = self.project(x);
                let (dot, yn) = y.iter().zip(&text64).fold((0.0, 0.0), |(d, n), (a, b)| (d + a * b, n + a * a));
                cosine_from_sums(dot, yn, tn) / self.temperature
            })
            .collect())
    }

    /// Patch-grid similarity map.
    pub fn similarity_map(&self, patches: &EmbeddingMatrix, grid: (usize, usize), text: &[f32]) -> Result<Grid> {
        check_patch_grid(patches, grid)?;
        let s = self.scores(patches, text)?;
        Grid::new(grid.0, grid.1, s.into_iter().map(|v| v as f32).collect())
    }

    /// Pixel-resolution density: upsampled similarity, clamped at zero.
    pub fn predicted_density(
        &self,
        patches: &EmbeddingMatrix,
        grid: (usize, usize),
        text: &[f32],
        factor: usize,
    ) -> Result<DensityMap> {
        check_patch_grid(patches, grid)?;
        if factor == 0 {
            return Err(Error::invalid("upsample factor must be >= 1"));
        }
        let s = self.scores(patches, text)?;
        let up = upsample_f64(grid.0, grid.1, &s, factor);
        DensityMap::new(
            grid.0 * factor,
            grid.1 * factor,
            up.into_iter().map(|v| v.max(0.0) as f32).collect(),
        )
    }

    /// Accumulates `Σ_p dL/dS_p · dS_p/dθ` into `grad`.
    pub(crate) fn backprop_scores(
        &self,
        patches: &EmbeddingMatrix,
        text: &[f32],
        score_grads: &[f64],
        grad: &mut [f64],
    ) {
        let (di, dt) = (self.image_dim, self.text_dim);
        let text64: Vec<f64> = text.iter().map(|&v| v as f64).collect();
        let tn2 = text64.iter().map(|v| v * v).sum::<f64>();
        let tn = tn2.sqrt();
        if tn < NORM_EPS {
            return;
        }
        let mut dy = vec![0.0; dt];
        for (x, &g) in patches.iter_rows().zip(score_grads) {
            if g == 0.0 {
                continue;
            }
            let y = self.project(x);
            let yn2 = y.iter().map(|v| v * v).sum::<f64>();
            let yn = yn2.sqrt();
            if yn < NORM_EPS {
                continue;
            }
            let dot = y.iter().zip(&text64).map(|(a, b)| a * b).sum::<f64>();
            let cos = dot / (yn * tn);
            let scale = g / self.temperature;
            for j in 0..dt {
                dy[j] = scale * (text64[j] / (yn * tn) - cos * y[j] / yn2);
            }
            for (i, &xi) in x.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                let row = &mut grad[i * dt..(i + 1) * dt];
                for (r, d) in row.iter_mut().zip(&dy) {
                    *r += xi as f64 * d;
                }
            }
            for (b, d) in grad[di * dt..].iter_mut().zip(&dy) {
                *b += d;
            }
        }
    }
}

pub(crate) fn check_patch_grid(patches: &EmbeddingMatrix, grid: (usize, usize)) -> Result<()> {
    check_dim("patch count for grid", grid.0 * grid.1, patches.rows())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_projection_scores_one() {
        let m = ProjectionModel::from_parts(2, 2, vec![1.0, 0.0, 0.0, 1.0], vec![0.0; 2], 1.0).unwrap();
        let text = [0.6f32, 0.8];
        let patches = EmbeddingMatrix::from_rows(&[text.to_vec(), vec![-0.8, 0.6]]).unwrap();
        let s = m.similarity_map(&patches, (1, 2), &text).unwrap();
        assert!((s.get(0, 0) - 1.0).abs() < 1e-7);
        assert_eq!(s.get(0, 1), 0.0);
    }

    #[test]
    fn zero_model_gives_zero_density() {
        let m = ProjectionModel::zeros(3, 3).unwrap();
        let patches = EmbeddingMatrix::new(4, 3, vec![1.0; 12]).unwrap();
        let d = m.predicted_density(&patches, (2, 2), &[1.0, 0.0, 0.0], 4).unwrap();
        assert_eq!((d.height(), d.width()), (8, 8));
        assert!(d.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let m = ProjectionModel::identity(2).unwrap();
        let patches = EmbeddingMatrix::new(3, 2, vec![1.0; 6]).unwrap();
        assert!(m.similarity_map(&patches, (2, 2), &[1.0, 0.0]).is_err());
        assert!(m.similarity_map(&patches, (1, 3), &[1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn invalid_parts_rejected() {
        assert!(ProjectionModel::from_parts(1, 1, vec![1.0], vec![0.0], 0.0).is_err());
        assert!(ProjectionModel::from_parts(1, 1, vec![f64::NAN], vec![0.0], 1.0).is_err());
        assert!(ProjectionModel::from_parts(1, 2, vec![1.0], vec![0.0, 0.0], 1.0).is_err());
    }
}
