//! Point matching and the localization / counting metric suite.
//!
//! Ratios with an empty denominator are vacuously 1: precision is 1 with no
//! predictions, recall is 1 with no ground truth.

use std::cmp::Ordering;
use std::fmt::Write as _;

use crate::assignment::min_cost_assignment;
use crate::error::{Error, Result};
use crate::grid::PointSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchPair {
    pub pred: usize,
    pub gt: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// Assigned pairs within `sigma`, ordered by prediction index.
    pub pairs: Vec<MatchPair>,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub sigma: f64,
    /// Total distance of the optimal assignment before the `sigma` filter.
    pub assignment_cost: f64,
}

impl MatchResult {
    /// Builds a result from raw counts (no pairs).
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, sigma: f64) -> Self {
        Self {
            pairs: Vec::new(),
            tp,
            fp,
            fn_,
            sigma,
            assignment_cost: 0.0,
        }
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        f1_from(self.precision(), self.recall())
    }

    fn absorb(&mut self, other: &MatchResult) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

fn f1_from(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Optimal one-to-one assignment on Euclidean distance, then pairs farther
/// than `sigma` are discarded.
pub fn match_points(pred: &PointSet, gt: &PointSet, sigma: f64) -> Result<MatchResult> {
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("match threshold must be positive, got {sigma}")));
    }
    let cost: Vec<Vec<f64>> = pred
        .points()
        .iter()
        .map(|p| gt.points().iter().map(|g| p.distance(g)).collect())
        .collect();
    let assignment = min_cost_assignment(&cost);
    let mut pairs = Vec::new();
    let mut assignment_cost = 0.0;
    for (i, j) in assignment.into_iter().enumerate() {
        if let Some(j) = j {
            let d = cost[i][j];
            assignment_cost += d;
            if d <= sigma {
                pairs.push(MatchPair { pred: i, gt: j, distance: d });
            }
        }
    }
    let tp = pairs.len();
    Ok(MatchResult {
        pairs,
        tp,
        fp: pred.len() - tp,
        fn_: gt.len() - tp,
        sigma,
        assignment_cost,
    })
}

/// `2PR / (P + R)`, 0 when `P + R = 0`.
pub fn f1_score(m: &MatchResult) -> f64 {
    m.f1()
}

pub const AP_RECALL_POINTS: usize = 101;

/// Interpolated average precision over a set of images.
///
/// Predictions from all images are ranked by confidence (ties: image order,
/// then row-major point order) and greedily matched to the nearest unmatched
/// ground truth of their image within `sigma`; point sets without
/// confidences count as all-equal. The interpolated precision
/// `max{P_k : R_k >= r}` is averaged over `r ∈ {0, 0.01, …, 1}`.
pub fn average_precision(preds: &[PointSet], gts: &[PointSet], sigma: f64) -> Result<f64> {
    if preds.len() != gts.len() {
        return Err(Error::DimensionMismatch {
            what: "prediction/ground-truth image count",
            expected: gts.len(),
            actual: preds.len(),
        });
    }
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("match threshold must be positive, got {sigma}")));
    }
    struct Ranked {
        conf: f32,
        image: usize,
        index: usize,
    }
    let mut ranked = Vec::new();
    for (image, p) in preds.iter().enumerate() {
        // unscored predictions all tie at 1 and fall back to row-major order
        ranked.extend((0..p.len()).map(|index| Ranked {
            conf: p.confidences().map_or(1.0, |c| c[index]),
            image,
            index,
        }));
    }
    let total_gt: usize = gts.iter().map(PointSet::len).sum();
    if total_gt == 0 {
        return Ok(if ranked.is_empty() { 1.0 } else { 0.0 });
    }
    ranked.sort_by(|a, b| {
        b.conf
            .total_cmp(&a.conf)
            .then(a.image.cmp(&b.image))
            .then_with(|| {
                let pa = preds[a.image].points()[a.index];
                let pb = preds[b.image].points()[b.index];
                pa.y.total_cmp(&pb.y).then(pa.x.total_cmp(&pb.x))
            })
            .then(a.index.cmp(&b.index))
    });

    let mut taken: Vec<Vec<bool>> = gts.iter().map(|g| vec![false; g.len()]).collect();
    let mut curve = Vec::with_capacity(ranked.len());
    let mut tp = 0usize;
    for (k, r) in ranked.iter().enumerate() {
        let p = preds[r.image].points()[r.index];
        let best = gts[r.image]
            .points()
            .iter()
            .enumerate()
            .filter(|(j, _)| !taken[r.image][*j])
            .map(|(j, g)| (j, p.distance(g)))
            .filter(|&(_, d)| d <= sigma)
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
        if let Some((j, _)) = best {
            taken[r.image][j] = true;
            tp += 1;
        }
        curve.push((tp as f64 / total_gt as f64, tp as f64 / (k + 1) as f64));
    }

    // suffix max of precision so each recall level reads the envelope
    let mut envelope = curve.clone();
    for k in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[k].1 = envelope[k].1.max(envelope[k + 1].1);
    }
    let steps = AP_RECALL_POINTS - 1;
    let mut sum = 0.0;
    let mut k = 0;
    for i in 0..=steps {
        let level = i as f64 / steps as f64;
        while k < envelope.len() && envelope[k].0 < level {
            k += 1;
        }
        if k < envelope.len() {
            sum += envelope[k].1;
        }
    }
    Ok(sum / AP_RECALL_POINTS as f64)
}

/// Mean recall over groups (categories or images).
pub fn average_recall(groups: &[MatchResult]) -> Result<f64> {
    if groups.is_empty() {
        return Err(Error::invalid("average recall needs at least one group"));
    }
    Ok(groups.iter().map(MatchResult::recall).sum::<f64>() / groups.len() as f64)
}

/// `(MAE, RMSE)` over `(predicted, ground-truth)` counts.
pub fn counting_errors(counts: &[(usize, usize)]) -> Result<(f64, f64)> {
    if counts.is_empty() {
        return Err(Error::invalid("counting errors need at least one image"));
    }
    let n = counts.len() as f64;
    let (abs, sq) = counts.iter().fold((0.0, 0.0), |(a, s), &(p, g)| {
        let e = p as f64 - g as f64;
        (a + e.abs(), s + e * e)
    });
    Ok((abs / n, (sq / n).sqrt()))
}

/// `sqrt((w² + h²) / 2)`
pub fn sigma_from_image(width: f64, height: f64) -> f64 {
    ((width * width + height * height) / 2.0).sqrt()
}

/// Strict and loose match thresholds for a benchmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdPreset {
    pub name: &'static str,
    pub strict: f64,
    pub loose: f64,
}

pub const PRESETS: &[ThresholdPreset] = &[
    ThresholdPreset {
        name: "fsc147",
        strict: 5.0,
        loose: 10.0,
    },
    ThresholdPreset {
        name: "carpk",
        strict: 5.0,
        loose: 10.0,
    },
    ThresholdPreset {
        name: "shtechA",
        strict: 4.0,
        loose: 8.0,
    },
    ThresholdPreset {
        name: "shtechB",
        strict: 4.0,
        loose: 8.0,
    },
];

pub fn preset(name: &str) -> Result<ThresholdPreset> {
    PRESETS
        .iter()
        .find(|p| p.name.eq_ignore_ascii_case(name))
        .copied()
        .ok_or_else(|| Error::UnknownPreset {
            name: name.to_string(),
            valid: PRESETS.iter().map(|p| p.name).collect::<Vec<_>>().join(", "),
        })
}

/// One evaluated image.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalImage {
    pub id: String,
    pub pred: PointSet,
    pub gt: PointSet,
    pub category: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdMetrics {
    pub sigma: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub ap: f64,
    /// Mean per-image recall.
    pub ar_image: f64,
    /// Mean per-category recall, when every image carries a category.
    pub ar_category: Option<f64>,
}

impl ThresholdMetrics {
    /// Headline AR: per-category when available, per-image otherwise.
    pub fn ar(&self) -> f64 {
        self.ar_category.unwrap_or(self.ar_image)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRow {
    pub id: String,
    pub pred_count: usize,
    pub gt_count: usize,
    pub strict: (usize, usize, usize),
    pub loose: (usize, usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub preset: &'static str,
    pub strict: ThresholdMetrics,
    pub loose: ThresholdMetrics,
    pub mae: f64,
    pub rmse: f64,
    pub per_image: Vec<ImageRow>,
}

fn threshold_metrics(images: &[EvalImage], matches: &[MatchResult], sigma: f64) -> Result<ThresholdMetrics> {
    let mut pooled = MatchResult::from_counts(0, 0, 0, sigma);
    for m in matches {
        pooled.absorb(m);
    }
    let preds: Vec<PointSet> = images.iter().map(|i| i.pred.clone()).collect();
    let gts: Vec<PointSet> = images.iter().map(|i| i.gt.clone()).collect();
    let ar_category = if images.iter().all(|i| i.category.is_some()) {
        let mut cats: Vec<(&str, MatchResult)> = Vec::new();
        for (img, m) in images.iter().zip(matches) {
            let c = img.category.as_deref().unwrap_or_default();
            match cats.iter_mut().find(|(name, _)| *name == c) {
                Some((_, acc)) => acc.absorb(m),
                None => {
                    let mut acc = MatchResult::from_counts(0, 0, 0, sigma);
                    acc.absorb(m);
                    cats.push((c, acc));
                }
            }
        }
        let groups: Vec<MatchResult> = cats.into_iter().map(|(_, m)| m).collect();
        Some(average_recall(&groups)?)
    } else {
        None
    };
    Ok(ThresholdMetrics {
        sigma,
        precision: pooled.precision(),
        recall: pooled.recall(),
        f1: pooled.f1(),
        ap: average_precision(&preds, &gts, sigma)?,
        ar_image: average_recall(matches)?,
        ar_category,
    })
}

/// Full report at a preset's two thresholds. Precision, recall and F1 pool
/// the counts of all images.
pub fn evaluate(images: &[EvalImage], preset: ThresholdPreset) -> Result<EvalReport> {
    if images.is_empty() {
        return Err(Error::invalid("nothing to evaluate"));
    }
    let run = |sigma: f64| -> Result<Vec<MatchResult>> {
        images.iter().map(|i| match_points(&i.pred, &i.gt, sigma)).collect()
    };
    let strict_m = run(preset.strict)?;
    let loose_m = run(preset.loose)?;
    let counts: Vec<(usize, usize)> = images.iter().map(|i| (i.pred.len(), i.gt.len())).collect();
    let (mae, rmse) = counting_errors(&counts)?;
    let per_image = images
        .iter()
        .zip(strict_m.iter().zip(&loose_m))
        .map(|(img, (s, l))| ImageRow {
            id: img.id.clone(),
            pred_count: img.pred.len(),
            gt_count: img.gt.len(),
            strict: (s.tp, s.fp, s.fn_),
            loose: (l.tp, l.fp, l.fn_),
        })
        .collect();
    Ok(EvalReport {
        preset: preset.name,
        strict: threshold_metrics(images, &strict_m, preset.strict)?,
        loose: threshold_metrics(images, &loose_m, preset.loose)?,
        mae,
        rmse,
        per_image,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.6}"))
}

impl EvalReport {
    /// One summary row. `mse` repeats `rmse` under the benchmark tables' name.
    pub fn summary_csv(&self) -> String {
        let mut out = String::new();
        let mut header = Vec::new();
        let mut row = Vec::new();
        for (tag, m) in [("s", &self.strict), ("l", &self.loose)] {
            for name in ["sigma", "f1", "ap", "ar", "precision", "recall", "ar_image", "ar_category"] {
                header.push(format!("{name}_{tag}"));
            }
            row.extend([
                format!("{}", m.sigma),
                format!("{:.6}", m.f1),
                format!("{:.6}", m.ap),
                format!("{:.6}", m.ar()),
                format!("{:.6}", m.precision),
                format!("{:.6}", m.recall),
                format!("{:.6}", m.ar_image),
                fmt_opt(m.ar_category),
            ]);
        }
        header.extend(["mae", "mse", "rmse"].map(String::from));
        row.extend([
            format!("{:.6}", self.mae),
            format!("{:.6}", self.rmse),
            format!("{:.6}", self.rmse),
        ]);
        let _ = writeln!(out, "{}", header.join(","));
        let _ = writeln!(out, "{}", row.join(","));
        out
    }

    pub fn per_image_csv(&self) -> String {
        let mut out = String::from("image_id,pred_count,gt_count,tp_s,fp_s,fn_s,tp_l,fp_l,fn_l\n");
        for r in &self.per_image {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.id, r.pred_count, r.gt_count, r.strict.0, r.strict.1, r.strict.2, r.loose.0, r.loose.1, r.loose.2
            );
        }
        out
    }

    /// Aligned text table: F1/AP/AR at both thresholds, then MAE/MSE.
    pub fn table(&self) -> String {
        let s = &self.strict;
        let l = &self.loose;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<10} | {:^26} | {:^26} | {:>8} {:>8}",
            "preset",
            format!("Threshold=sigma_s({})", s.sigma),
            format!("Threshold=sigma_l({})", l.sigma),
            "",
            ""
        );
        let _ = writeln!(
            out,
            "{:<10} | {:>8} {:>8} {:>8} | {:>8} {:>8} {:>8} | {:>8} {:>8}",
            "", "F1", "AP", "AR", "F1", "AP", "AR", "MAE", "MSE"
        );
        let pct = |v: f64| format!("{:.2}", 100.0 * v);
        let _ = writeln!(
            out,
            "{:<10} | {:>8} {:>8} {:>8} | {:>8} {:>8} {:>8} | {:>8.2} {:>8.2}",
            self.preset,
            pct(s.f1),
            pct(s.ap),
            pct(s.ar()),
            pct(l.f1),
            pct(l.ap),
            pct(l.ar()),
            self.mae,
            self.rmse
        );
        out
    }
}
