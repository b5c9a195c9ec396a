//! Segmentation metrics (DSC/PSC/SEN), bright-voxel classification metrics
//! (precision/sensitivity/specificity/AUC), aggregation, and report files.
//!
//! A 0/0 metric is undefined rather than 0 or 1; undefined values are
//! reported as empty cells and excluded from aggregation.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::vol3::{self, Mask3, Volume3};
use crate::{Error, Result};

/// Voxel-level confusion counts over an evaluation region.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub true_pos: usize,
    pub false_pos: usize,
    pub false_neg: usize,
    pub true_neg: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }

    /// Precision tp/(tp+fp), undefined on 0/0.
    pub fn psc(&self) -> Option<f64> {
        ratio(self.true_pos, self.true_pos + self.false_pos)
    }

    /// Sensitivity tp/(tp+fn), undefined on 0/0.
    pub fn sen(&self) -> Option<f64> {
        ratio(self.true_pos, self.true_pos + self.false_neg)
    }

    /// Dice 2tp/(2tp+fn+fp), undefined on 0/0.
    pub fn dsc(&self) -> Option<f64> {
        ratio(2 * self.true_pos, 2 * self.true_pos + self.false_neg + self.false_pos)
    }

    /// Specificity tn/(tn+fp), undefined on 0/0.
    pub fn specificity(&self) -> Option<f64> {
        ratio(self.true_neg, self.true_neg + self.false_pos)
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den != 0).then(|| num as f64 / den as f64)
}

/// Count the confusion of `pred` against `gt`, restricted to `region`.
pub fn confusion(pred: &Mask3, gt: &Mask3, region: &Mask3) -> Result<ConfusionCounts> {
    pred.same_shape(gt.dims())?;
    pred.same_shape(region.dims())?;
    let mut c = ConfusionCounts::default();
    for idx in region.set_indices() {
        match (pred.get_idx(idx), gt.get_idx(idx)) {
            (true, true) => c.true_pos += 1,
            (true, false) => c.false_pos += 1,
            (false, true) => c.false_neg += 1,
            (false, false) => c.true_neg += 1,
        }
    }
    Ok(c)
}

/// Classification quality of the healthy-probability scores on bright lung
/// voxels only.
#[derive(Clone, Copy, Debug, Default)]
pub struct BrightVoxelReport {
    pub precision: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub auc: Option<f64>,
    pub n_healthy: usize,
    pub n_lesion: usize,
}

/// Evaluate healthy-vs-lesion classification of `healthy_prob` restricted to
/// voxels of the lung with intensity >= tau. Healthy is the positive class;
/// the operating point thresholds probability strictly above `threshold`,
/// and AUC uses the midrank statistic over all thresholds.
pub fn bright_voxel_eval(
    healthy_prob: &Volume3,
    gt_lesion: &Mask3,
    thorax: &Volume3,
    lung: &Mask3,
    tau: f64,
    threshold: f64,
) -> Result<BrightVoxelReport> {
    healthy_prob.same_shape(lung.dims())?;
    thorax.same_shape(gt_lesion.dims())?;
    thorax.same_shape(lung.dims())?;
    let bright = vol3::bright_mask(thorax, tau)?.and(lung)?;

    let mut counts = ConfusionCounts::default();
    let mut healthy_scores = Vec::new();
    let mut lesion_scores = Vec::new();
    for idx in bright.set_indices() {
        let score = healthy_prob.data()[idx] as f64;
        let is_healthy = !gt_lesion.get_idx(idx);
        let predicted_healthy = score > threshold;
        match (predicted_healthy, is_healthy) {
            (true, true) => counts.true_pos += 1,
            (true, false) => counts.false_pos += 1,
            (false, true) => counts.false_neg += 1,
            (false, false) => counts.true_neg += 1,
        }
        if is_healthy {
            healthy_scores.push(score);
        } else {
            lesion_scores.push(score);
        }
    }

    Ok(BrightVoxelReport {
        precision: counts.psc(),
        sensitivity: counts.sen(),
        specificity: counts.specificity(),
        auc: auc_midrank(&healthy_scores, &lesion_scores),
        n_healthy: healthy_scores.len(),
        n_lesion: lesion_scores.len(),
    })
}

/// Area under the ROC curve by the rank-sum statistic with midranks for
/// ties. Undefined when either class is empty.
pub fn auc_midrank(positive: &[f64], negative: &[f64]) -> Option<f64> {
    if positive.is_empty() || negative.is_empty() {
        return None;
    }
    let mut scored: Vec<(f64, bool)> = positive
        .iter()
        .map(|&s| (s, true))
        .chain(negative.iter().map(|&s| (s, false)))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < scored.len() {
        let mut j = i;
        while j + 1 < scored.len() && scored[j + 1].0 == scored[i].0 {
            j += 1;
        }
        // Ranks are 1-based; tied entries share the midrank.
        let midrank = (i + 1 + j + 1) as f64 / 2.0;
        for entry in &scored[i..=j] {
            if entry.1 {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let np = positive.len() as f64;
    let nn = negative.len() as f64;
    Some((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn))
}

/// Per-case metric record.
#[derive(Clone, Debug, Default)]
pub struct CaseReport {
    pub case_id: String,
    pub dsc: Option<f64>,
    pub psc: Option<f64>,
    pub sen: Option<f64>,
    pub bright: Option<BrightVoxelReport>,
}

/// Mean and population standard deviation of the defined values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SummaryStat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

/// Aggregate defined values; undefined entries are excluded. Returns `None`
/// when nothing is defined.
pub fn aggregate<I: IntoIterator<Item = Option<f64>>>(values: I) -> Option<SummaryStat> {
    let defined: Vec<f64> = values.into_iter().flatten().collect();
    if defined.is_empty() {
        return None;
    }
    let n = defined.len();
    let mean = defined.iter().sum::<f64>() / n as f64;
    let var = defined.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    Some(SummaryStat { mean, std: var.sqrt(), n })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Per-case CSV: one row per case, empty cells for undefined metrics.
pub fn case_csv(reports: &[CaseReport]) -> String {
    let mut out = String::from(
        "case_id,dsc,psc,sen,bv_precision,bv_sensitivity,bv_specificity,bv_auc\n",
    );
    for r in reports {
        let b = r.bright.unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.case_id,
            cell(r.dsc),
            cell(r.psc),
            cell(r.sen),
            cell(b.precision),
            cell(b.sensitivity),
            cell(b.specificity),
            cell(b.auc),
        );
    }
    out
}

/// Summary CSV over all cases: metric,mean,std,n.
pub fn summary_csv(reports: &[CaseReport]) -> String {
    let mut out = String::from("metric,mean,std,n\n");
    let rows: [(&str, Box<dyn Fn(&CaseReport) -> Option<f64>>); 7] = [
        ("dsc", Box::new(|r| r.dsc)),
        ("psc", Box::new(|r| r.psc)),
        ("sen", Box::new(|r| r.sen)),
        ("bv_precision", Box::new(|r| r.bright.and_then(|b| b.precision))),
        ("bv_sensitivity", Box::new(|r| r.bright.and_then(|b| b.sensitivity))),
        ("bv_specificity", Box::new(|r| r.bright.and_then(|b| b.specificity))),
        ("bv_auc", Box::new(|r| r.bright.and_then(|b| b.auc))),
    ];
    for (name, get) in rows {
        match aggregate(reports.iter().map(|r| get(r))) {
            Some(s) => {
                let _ = writeln!(out, "{name},{:.6},{:.6},{}", s.mean, s.std, s.n);
            }
            None => {
                let _ = writeln!(out, "{name},,,0");
            }
        }
    }
    out
}

/// Histogram of per-case Dice as a small standalone SVG.
pub fn dice_histogram_svg(reports: &[CaseReport]) -> String {
    const BINS: usize = 20;
    let mut bins = [0usize; BINS];
    for d in reports.iter().filter_map(|r| r.dsc) {
        let b = ((d * BINS as f64) as usize).min(BINS - 1);
        bins[b] += 1;
    }
    let max = bins.iter().copied().max().unwrap_or(0).max(1);
    let (width, height, pad) = (440.0, 220.0, 30.0);
    let bar_w = (width - 2.0 * pad) / BINS as f64;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
    );
    let _ = writeln!(
        svg,
        "  <line x1=\"{pad}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>",
        height - pad,
        width - pad
    );
    for (i, &count) in bins.iter().enumerate() {
        let h = (height - 2.0 * pad) * count as f64 / max as f64;
        let x = pad + i as f64 * bar_w;
        let y = height - pad - h;
        let _ = writeln!(
            svg,
            "  <rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{:.1}\" height=\"{h:.1}\" fill=\"steelblue\"/>",
            bar_w - 1.0
        );
    }
    for (frac, label) in [(0.0, "0.0"), (0.5, "0.5"), (1.0, "1.0")] {
        let x = pad + (width - 2.0 * pad) * frac;
        let _ = writeln!(
            svg,
            "  <text x=\"{x:.1}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"middle\">{label}</text>",
            height - pad + 12.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn write_report_files(dir: impl AsRef<Path>, reports: &[CaseReport], svg: bool) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let cases = dir.join("cases.csv");
    fs::write(&cases, case_csv(reports)).map_err(|e| Error::io(cases, e))?;
    let summary = dir.join("summary.csv");
    fs::write(&summary, summary_csv(reports)).map_err(|e| Error::io(summary, e))?;
    if svg {
        let hist = dir.join("dice_histogram.svg");
        fs::write(&hist, dice_histogram_svg(reports)).map_err(|e| Error::io(hist, e))?;
    }
    Ok(())
}
