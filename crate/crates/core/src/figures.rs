//! Figure data: per-label five-number summaries with group tests, static
//! SVG box plots, and the augmentation-ladder table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::corpus::{CohortManifest, CorpusError};
use crate::evaluate::{feature_value, group_compare, EvalError, GroupComparison, MetricsReport, FEATURES};
use crate::label::Label;
use crate::rubric::FeatureProfile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl FiveNumber {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self {
            min: v[0],
            q1: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q3: quantile(&v, 0.75),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub feature: String,
    pub label: Label,
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl SummaryRow {
    pub fn new(feature: &str, label: Label, n: usize, s: FiveNumber) -> Self {
        Self {
            feature: feature.to_string(),
            label,
            n,
            min: s.min,
            q1: s.q1,
            median: s.median,
            q3: s.q3,
            max: s.max,
        }
    }

    pub fn summary(&self) -> FiveNumber {
        FiveNumber {
            min: self.min,
            q1: self.q1,
            median: self.median,
            q3: self.q3,
            max: self.max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub feature: String,
    pub group_a: Label,
    pub group_b: Label,
    pub median_a: f64,
    pub median_b: f64,
    pub u: f64,
    pub p_value: f64,
}

impl From<&GroupComparison> for CompareRow {
    fn from(g: &GroupComparison) -> Self {
        Self {
            feature: g.feature.clone(),
            group_a: g.group_a,
            group_b: g.group_b,
            median_a: g.median_a,
            median_b: g.median_b,
            u: g.test.u,
            p_value: g.test.p_value,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CohortStats {
    pub summaries: Vec<SummaryRow>,
    pub comparisons: Vec<CompareRow>,
}

/// Feature profiles of usable records grouped by label.
pub fn profiles_by_label(manifest: &CohortManifest) -> BTreeMap<Label, Vec<FeatureProfile>> {
    let mut out: BTreeMap<Label, Vec<FeatureProfile>> = BTreeMap::new();
    for r in manifest.records.iter().filter(|r| !r.is_failed()) {
        if let Some(p) = &r.feature_profile {
            out.entry(r.label.label()).or_default().push(p.clone());
        }
    }
    out
}

pub fn cohort_stats(profiles: &BTreeMap<Label, Vec<FeatureProfile>>) -> Result<CohortStats, EvalError> {
    let mut stats = CohortStats::default();
    for feature in FEATURES {
        for (label, ps) in profiles {
            let values = ps
                .iter()
                .map(|p| feature_value(p, feature))
                .collect::<Result<Vec<_>, _>>()?;
            if let Some(summary) = FiveNumber::of(&values) {
                stats
                    .summaries
                    .push(SummaryRow::new(feature, *label, values.len(), summary));
            }
        }
        if profiles.len() >= 2 {
            match group_compare(profiles, feature) {
                Ok(rows) => stats.comparisons.extend(rows.iter().map(CompareRow::from)),
                Err(EvalError::DegenerateGroup) => log::info!("{feature} is constant; no group test"),
                Err(e) => return Err(e),
            }
        }
    }
    Ok(stats)
}

pub fn write_csv<T: Serialize>(rows: &[T], path: &Path) -> Result<(), CorpusError> {
    let io = |e: std::io::Error| CorpusError::Io {
        path: path.to_path_buf(),
        source: e,
    };
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| io(e.into()))?;
    for row in rows {
        w.serialize(row).map_err(|e| io(e.into()))?;
    }
    w.flush().map_err(io)
}

/// A static box plot of one feature, one box per label.
pub fn box_plot_svg(feature: &str, rows: &[&SummaryRow]) -> String {
    let (w, h, pad) = (120.0 * rows.len().max(1) as f64 + 80.0, 320.0, 40.0);
    let lo = rows.iter().map(|r| r.min).fold(f64::INFINITY, f64::min);
    let hi = rows.iter().map(|r| r.max).fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let y = |v: f64| h - pad - (v - lo) / span * (h - 2.0 * pad);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle">{feature}</text>"#,
        w / 2.0
    );
    let _ = writeln!(svg, r#"<text x="4" y="{:.1}">{hi:.3}</text>"#, y(hi) + 4.0);
    let _ = writeln!(svg, r#"<text x="4" y="{:.1}">{lo:.3}</text>"#, y(lo) + 4.0);
    for (i, r) in rows.iter().enumerate() {
        let cx = 80.0 + 120.0 * i as f64 + 40.0;
        let s = r.summary();
        let _ = writeln!(
            svg,
            r#"<line x1="{cx}" y1="{:.1}" x2="{cx}" y2="{:.1}" stroke="black"/>"#,
            y(s.max),
            y(s.min)
        );
        let _ = writeln!(
            svg,
            r##"<rect x="{}" y="{:.1}" width="60" height="{:.1}" fill="#cfe0f3" stroke="black"/>"##,
            cx - 30.0,
            y(s.q3),
            (y(s.q1) - y(s.q3)).max(0.5)
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{m:.1}" x2="{}" y2="{m:.1}" stroke="black" stroke-width="2"/>"#,
            cx - 30.0,
            cx + 30.0,
            m = y(s.median)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{cx}" y="{}" text-anchor="middle">{} (n={})</text>"#,
            h - 12.0,
            r.label,
            r.n
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// One point of the augmentation ladder.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub ratio: usize,
    pub n_samples: usize,
    pub macro_f1_mean: f64,
    pub macro_f1_sd: f64,
    pub avs: f64,
    pub bon: f64,
}

pub fn scaling_rows(points: &[(usize, MetricsReport)]) -> Vec<ScalingRow> {
    let mut rows: Vec<ScalingRow> = points
        .iter()
        .map(|(ratio, m)| ScalingRow {
            ratio: *ratio,
            n_samples: m.n_samples,
            macro_f1_mean: m.macro_f1.mean,
            macro_f1_sd: m.macro_f1.sd,
            avs: m.avs.mean,
            bon: m.bon,
        })
        .collect();
    rows.sort_by_key(|r| r.ratio);
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RolloutRow {
    pub rollout: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub unparseable: usize,
}

pub fn rollout_rows(m: &MetricsReport) -> Vec<RolloutRow> {
    m.rollouts
        .iter()
        .map(|r| RolloutRow {
            rollout: r.rollout_idx,
            accuracy: r.accuracy,
            macro_f1: r.macro_f1,
            unparseable: r.unparseable,
        })
        .collect()
}

/// One confusion cell in long format; `predicted` is a label or `unparseable`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfusionRow {
    pub rollout: usize,
    pub truth: Label,
    pub predicted: String,
    pub count: usize,
}

pub fn confusion_rows(m: &MetricsReport) -> Vec<ConfusionRow> {
    let mut rows = Vec::new();
    for r in &m.rollouts {
        let labels = &r.confusion.labels;
        for (i, truth) in labels.iter().enumerate() {
            for (j, &count) in r.confusion.matrix[i].iter().enumerate() {
                let predicted = labels
                    .get(j)
                    .map_or_else(|| "unparseable".to_string(), |l| l.to_string());
                rows.push(ConfusionRow {
                    rollout: r.rollout_idx,
                    truth: *truth,
                    predicted,
                    count,
                });
            }
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_numbers_match_linear_quantiles() {
        // numpy.percentile([3, 1, 4, 1, 5, 9, 2, 6], [0, 25, 50, 75, 100])
        let f = FiveNumber::of(&[3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0]).unwrap();
        assert_eq!((f.min, f.q1, f.median, f.q3, f.max), (1.0, 1.75, 3.5, 5.25, 9.0));
        let one = FiveNumber::of(&[2.0]).unwrap();
        assert_eq!((one.q1, one.q3), (2.0, 2.0));
        assert!(FiveNumber::of(&[]).is_none());
    }

    #[test]
    fn confusion_rows_cover_every_cell() {
        use crate::evaluate::{compute_metrics, Parsed, Prediction};
        let truths: BTreeMap<String, Label> = [("a".to_string(), Label::Ad), ("b".to_string(), Label::Hc)]
            .into_iter()
            .collect();
        let pred = |id: &str, parsed| Prediction {
            sample_id: id.into(),
            rollout_idx: 0,
            raw_text: String::new(),
            parsed,
            error: None,
        };
        let m = compute_metrics(
            &[pred("a", Parsed::Label(Label::Ad)), pred("b", Parsed::Unparseable)],
            &truths,
            1,
        )
        .unwrap();
        let rows = confusion_rows(&m);
        assert_eq!(rows.len(), 2 * 3);
        assert_eq!(rows.iter().map(|r| r.count).sum::<usize>(), 2);
        let miss = rows
            .iter()
            .find(|r| r.truth == Label::Hc && r.predicted == "unparseable")
            .unwrap();
        assert_eq!(miss.count, 1);
        assert_eq!(rollout_rows(&m)[0].unparseable, 1);
    }

    #[test]
    fn svg_has_one_box_per_label() {
        let row =
            |label, v: f64| SummaryRow::new("total_words", label, 3, FiveNumber::of(&[v, v + 1.0, v + 4.0]).unwrap());
        let (a, b) = (row(Label::Hc, 100.0), row(Label::Ad, 70.0));
        let svg = box_plot_svg("total_words", &[&a, &b]);
        assert_eq!(svg.matches("<rect").count(), 2);
        assert!(svg.contains("AD (n=3)"));
        assert!(svg.ends_with("</svg>\n"));
    }
}
