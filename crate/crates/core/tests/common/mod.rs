//! Independent reference implementations shared by the integration tests.
//!
//! Everything here is written the slow, obvious way and avoids the library's
//! own helpers for the quantity under test.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zsol::align::ProjectionModel;
use zsol::grid::{EmbeddingMatrix, Grid, Point, PointSet};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random non-negative map. Some maps are quantized to a few levels or built
/// from constant blocks so that plateaus and ties actually occur.
pub fn random_map(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Grid {
    let kind = rng.random_range(0..4);
    let values = match kind {
        0 => (0..h * w).map(|_| rng.random::<f32>()).collect(),
        1 => {
            let levels = rng.random_range(2..8) as f32;
            (0..h * w).map(|_| (rng.random::<f32>() * levels).floor() / levels).collect()
        }
        2 => {
            let block = rng.random_range(2..6);
            let bw = w.div_ceil(block);
            let blocks: Vec<f32> = (0..h.div_ceil(block) * bw).map(|_| rng.random_range(0..4) as f32 * 0.05).collect();
            (0..h * w).map(|i| blocks[(i / w / block) * bw + (i % w) / block]).collect()
        }
        _ => {
            // sparse spikes on a small background
            (0..h * w)
                .map(|_| if rng.random::<f32>() < 0.02 { rng.random::<f32>() } else { rng.random::<f32>() * 0.03 })
                .collect()
        }
    };
    Grid::new(h, w, values).unwrap()
}

/// Brute-force decoder: explicit neighbourhood maximum per pixel, both
/// thresholds, then union-find over 8-adjacent equal-valued candidates.
pub fn decode_oracle(map: &Grid, alpha: f64, beta: f64, window: usize) -> Vec<(usize, usize, f32)> {
    let (h, w) = (map.height(), map.width());
    let r = (window / 2) as isize;
    let at = |y: isize, x: isize| map.get(y as usize, x as usize);
    let mut candidate = vec![false; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut m = f32::NEG_INFINITY;
            for yy in (y - r).max(0)..=(y + r).min(h as isize - 1) {
                for xx in (x - r).max(0)..=(x + r).min(w as isize - 1) {
                    m = m.max(at(yy, xx));
                }
            }
            let v = at(y, x);
            candidate[y as usize * w + x as usize] = v == m && m as f64 > alpha && v as f64 >= beta;
        }
    }

    let mut parent: Vec<usize> = (0..h * w).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..h * w {
        if !candidate[i] {
            continue;
        }
        let (y, x) = (i / w, i % w);
        for (dy, dx) in [(0isize, 1isize), (1, -1), (1, 0), (1, 1)] {
            let (yy, xx) = (y as isize + dy, x as isize + dx);
            if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                continue;
            }
            let j = yy as usize * w + xx as usize;
            if candidate[j] && map.values()[j] == map.values()[i] {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                // keep the smaller index as root: it is the row-major first pixel
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                parent[hi] = lo;
            }
        }
    }
    (0..h * w)
        .filter(|&i| candidate[i] && find(&mut parent, i) == i)
        .map(|i| (i % w, i / w, map.values()[i]))
        .collect()
}

/// Minimum total cost over all injective assignments of the smaller side.
pub fn exhaustive_min_cost(cost: &[Vec<f64>]) -> f64 {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    let transposed: Vec<Vec<f64>>;
    let c = if rows <= cols {
        cost
    } else {
        transposed = (0..cols).map(|j| (0..rows).map(|i| cost[i][j]).collect()).collect();
        &transposed
    };
    fn go(c: &[Vec<f64>], row: usize, used: &mut Vec<bool>) -> f64 {
        if row == c.len() {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                best = best.min(c[row][j] + go(c, row + 1, used));
                used[j] = false;
            }
        }
        best
    }
    go(c, 0, &mut vec![false; c[0].len()])
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize, extent: f32) -> PointSet {
    PointSet::new(
        (0..n)
            .map(|_| Point::new(rng.random::<f32>() * extent, rng.random::<f32>() * extent))
            .collect(),
    )
}

pub fn random_embeddings(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> EmbeddingMatrix {
    EmbeddingMatrix::new(rows, dim, (0..rows * dim).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn random_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn random_model(rng: &mut ChaCha8Rng, di: usize, dt: usize) -> ProjectionModel {
    let weights = (0..di * dt).map(|_| rng.random_range(-1.0..1.0)).collect();
    let bias = (0..dt).map(|_| rng.random_range(-0.5..0.5)).collect();
    ProjectionModel::from_parts(di, dt, weights, bias, 0.07).unwrap()
}

/// `cos(x W + b, t) / τ` per patch with plain scalar loops.
pub fn similarity_oracle(model: &ProjectionModel, patches: &EmbeddingMatrix, text: &[f32]) -> Vec<f64> {
    let (di, dt) = (model.image_dim(), model.text_dim());
    (0..patches.rows())
        .map(|p| {
            let x = patches.row(p);
            let mut y = vec![0.0f64; dt];
            for (j, yj) in y.iter_mut().enumerate() {
                *yj = model.bias()[j];
                for i in 0..di {
                    *yj += x[i] as f64 * model.weights()[i * dt + j];
                }
            }
            let dot: f64 = y.iter().zip(text).map(|(a, &b)| a * b as f64).sum();
            let ny: f64 = y.iter().map(|a| a * a).sum::<f64>().sqrt();
            let nt: f64 = text.iter().map(|&b| (b as f64).powi(2)).sum::<f64>().sqrt();
            dot / (ny * nt) / model.temperature()
        })
        .collect()
}

/// Central finite differences of `f` with respect to every model parameter.
pub fn numerical_gradient(model: &ProjectionModel, h: f64, f: impl Fn(&ProjectionModel) -> f64) -> Vec<f64> {
    let mut m = model.clone();
    (0..model.params().len())
        .map(|k| {
            let orig = m.params()[k];
            m.params_mut()[k] = orig + h;
            let up = f(&m);
            m.params_mut()[k] = orig - h;
            let down = f(&m);
            m.params_mut()[k] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or 0 when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// The five-prediction, three-ground-truth AP fixture at σ = 5.
pub fn ap_fixture() -> (PointSet, PointSet) {
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
    )
    .unwrap();
    (pred, gt)
}

/// Value printed by `tests/oracles/ap_fixture.py` (382/505).
pub const AP_FIXTURE_EXPECTED: f64 = 382.0 / 505.0;

/// Four predictions against five ground-truth points at σ = 5: three within
/// reach, one stray prediction, two unreached ground-truth points.
pub fn f1_fixture() -> (PointSet, PointSet) {
    let gt = PointSet::new(vec![
        Point::new(10.0, 10.0),
        Point::new(50.0, 50.0),
        Point::new(90.0, 20.0),
        Point::new(20.0, 80.0),
        Point::new(80.0, 80.0),
    ]);
    let pred = PointSet::new(vec![
        Point::new(12.0, 11.0),
        Point::new(50.0, 47.0),
        Point::new(91.0, 24.0),
        Point::new(40.0, 10.0),
    ]);
    (pred, gt)
}
