use crate::error::{check_dim, Error, Result};
use crate::grid::{upsample_adjoint_f64, upsample_f64, DensityMap, EmbeddingMatrix, Grid};

use super::model::{check_patch_grid, ProjectionModel};

/// Ground-truth mass above which a patch counts as positive.
pub const DEFAULT_POSITIVE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PatchSplit {
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
}

/// Integer pixel-per-patch factor for a map laid over a patch grid.
pub fn patch_factor(map_dims: (usize, usize), grid: (usize, usize)) -> Result<usize> {
    let (h, w) = map_dims;
    let (gh, gw) = grid;
    if gh == 0 || gw == 0 || h % gh != 0 || w % gw != 0 || h / gh != w / gw {
        return Err(Error::invalid(format!(
            "{h}x{w} map does not divide into a {gh}x{gw} grid of square patches"
        )));
    }
    Ok(h / gh)
}

/// Partitions patches by their ground-truth mass; mass `> threshold` is positive.
pub fn split_patches(gt: &DensityMap, grid: (usize, usize), threshold: f64) -> Result<PatchSplit> {
    let (gh, gw) = grid;
    if gh == 0 || gw == 0 || !gt.height().is_multiple_of(gh) || !gt.width().is_multiple_of(gw) {
        return Err(Error::invalid(format!(
            "{}x{} map does not divide into a {gh}x{gw} grid",
            gt.height(),
            gt.width()
        )));
    }
    let (ph, pw) = (gt.height() / gh, gt.width() / gw);
    let mut mass = vec![0.0f64; gh * gw];
    for r in 0..gt.height() {
        for c in 0..gt.width() {
            mass[(r / ph) * gw + c / pw] += gt.get(r, c) as f64;
        }
    }
    let mut split = PatchSplit::default();
    for (i, m) in mass.into_iter().enumerate() {
        if m > threshold {
            split.positives.push(i);
        } else {
            split.negatives.push(i);
        }
    }
    Ok(split)
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// InfoNCE over patches: each positive is contrasted against all negatives.
///
/// `loss = mean_i -log(exp(S_i) / (exp(S_i) + Σ_n exp(S_n)))` with
/// `S = cos(project(patch), text) / τ`. Returns the loss and its gradient with
/// respect to the flat model parameters.
pub fn contrastive_loss(
    model: &ProjectionModel,
    patches: &EmbeddingMatrix,
    text: &[f32],
    positives: &[usize],
    negatives: &[usize],
) -> Result<(f64, Vec<f64>)> {
    if positives.is_empty() {
        return Err(Error::invalid("contrastive loss needs at least one positive patch"));
    }
    if negatives.is_empty() {
        return Err(Error::invalid("contrastive loss needs at least one negative patch"));
    }
    if let Some(&i) = positives.iter().chain(negatives).find(|&&i| i >= patches.rows()) {
        return Err(Error::invalid(format!("patch index {i} out of range")));
    }
    let s = model.scores(patches, text)?;
    let lse_neg = negatives
        .iter()
        .fold(f64::NEG_INFINITY, |acc, &n| log_add_exp(acc, s[n]));
    let inv_p = 1.0 / positives.len() as f64;
    let mut loss = 0.0;
    let mut ds = vec![0.0; s.len()];
    // With x = lse_neg - S_i the per-positive term is softplus(x) and the
    // negatives' total softmax mass is sigmoid(x); both forms stay accurate
    // when the positive dominates and the loss is tiny.
    for &i in positives {
        let x = lse_neg - s[i];
        let mass = sigmoid(x);
        loss += softplus(x) * inv_p;
        ds[i] -= mass * inv_p;
        for &n in negatives {
            ds[n] += mass * (s[n] - lse_neg).exp() * inv_p;
        }
    }
    let mut grad = vec![0.0; model.params().len()];
    model.backprop_scores(patches, text, &ds, &mut grad);
    Ok((loss, grad))
}

/// `mean((pred - gt)²)` and its gradient `2 (pred - gt) / (H W)`.
pub fn mse_loss(pred: &Grid, gt: &Grid) -> Result<(f64, Vec<f64>)> {
    check_dim("mse height", gt.height(), pred.height())?;
    check_dim("mse width", gt.width(), pred.width())?;
    let n = pred.values().len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .values()
        .iter()
        .zip(gt.values())
        .map(|(&p, &g)| {
            let d = p as f64 - g as f64;
            loss += d * d;
            2.0 * d / n
        })
        .collect();
    Ok((loss / n, grad))
}

/// Pixel MSE between the model's predicted density and `target`, with the
/// gradient carried back through the clamp, the upsampling and the cosine.
pub fn density_mse_loss(
    model: &ProjectionModel,
    patches: &EmbeddingMatrix,
    grid: (usize, usize),
    text: &[f32],
    target: &Grid,
) -> Result<(f64, Vec<f64>)> {
    check_patch_grid(patches, grid)?;
    let factor = patch_factor((target.height(), target.width()), grid)?;
    let s = model.scores(patches, text)?;
    let up = upsample_f64(grid.0, grid.1, &s, factor);
    let n = up.len() as f64;
    let mut loss = 0.0;
    let dup: Vec<f64> = up
        .iter()
        .zip(target.values())
        .map(|(&u, &t)| {
            let d = u.max(0.0) - t as f64;
            loss += d * d;
            if u > 0.0 {
                2.0 * d / n
            } else {
                0.0
            }
        })
        .collect();
    let ds = upsample_adjoint_f64(grid.0, grid.1, &dup, factor);
    let mut grad = vec![0.0; model.params().len()];
    model.backprop_scores(patches, text, &ds, &mut grad);
    Ok((loss / n, grad))
}
