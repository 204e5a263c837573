//! Threshold-independent evaluation: ROC/AUC and precision-recall/AP.
//!
//! Pixels sharing a score form one tie group and move the curve in a single
//! step; ties are never broken by input order. Curves have one point per
//! tie group, which keeps them small on million-pixel maps dominated by
//! exact zeros.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::detectors::{Method, ScoreMap};
use crate::error::{Error, Result};
use crate::scene::GroundTruthMask;

/// One distinct score value and the labels sitting on it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TieGroup {
    pub score: f64,
    pub positives: u64,
    pub negatives: u64,
}

/// Scores sorted descending and collapsed into tie groups.
#[derive(Debug, Clone)]
pub struct RankedScores {
    groups: Vec<TieGroup>,
    positives: u64,
    negatives: u64,
}

impl RankedScores {
    pub fn new(scores: &[f64], labels: &[u8]) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::Dimension {
                what: "labels vs scores",
                expected: scores.len(),
                got: labels.len(),
            });
        }
        if let Some(v) = scores.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: format!("{v} in scores"),
            });
        }
        let mut pairs: Vec<(f64, bool)> = scores
            .iter()
            .zip(labels)
            .map(|(&s, &y)| (s, y != 0))
            .collect();
        pairs.sort_unstable_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));
        let mut groups: Vec<TieGroup> = Vec::new();
        let (mut p, mut n) = (0u64, 0u64);
        for (s, y) in pairs {
            match groups.last_mut() {
                // -0.0 == 0.0, so signed zeros share a group.
                Some(g) if g.score == s => {}
                _ => groups.push(TieGroup {
                    score: s,
                    positives: 0,
                    negatives: 0,
                }),
            }
            let g = groups.last_mut().unwrap();
            if y {
                g.positives += 1;
                p += 1;
            } else {
                g.negatives += 1;
                n += 1;
            }
        }
        Ok(Self {
            groups,
            positives: p,
            negatives: n,
        })
    }

    pub fn from_map(map: &ScoreMap, mask: &GroundTruthMask) -> Result<Self> {
        if !map.region().same_extent(mask.region()) {
            return Err(Error::RegionMismatch(format!(
                "scores {} vs mask {}",
                map.region(),
                mask.region()
            )));
        }
        Self::new(map.scores(), mask.labels())
    }

    pub fn groups(&self) -> &[TieGroup] {
        &self.groups
    }

    pub fn positives(&self) -> u64 {
        self.positives
    }

    pub fn negatives(&self) -> u64 {
        self.negatives
    }

    fn require_both(&self) -> Result<()> {
        if self.positives == 0 || self.negatives == 0 {
            return Err(Error::NeedBothClasses {
                positives: self.positives as usize,
                negatives: self.negatives as usize,
            });
        }
        Ok(())
    }

    /// Area under the ROC curve by the trapezoidal rule, accumulated in
    /// integer counts: Σ fp_g (2·TP_before + tp_g) / (2PN).
    pub fn auc(&self) -> Result<f64> {
        self.require_both()?;
        let mut tp_before: u128 = 0;
        let mut twice_area: u128 = 0;
        for g in &self.groups {
            let (tp, fp) = (g.positives as u128, g.negatives as u128);
            twice_area += fp * (2 * tp_before + tp);
            tp_before += tp;
        }
        let denom = 2 * self.positives as u128 * self.negatives as u128;
        Ok(twice_area as f64 / denom as f64)
    }

    /// Step-sum average precision: Σ (R_k − R_{k−1}) P_k over tie groups.
    pub fn average_precision(&self) -> Result<f64> {
        if self.positives == 0 {
            return Err(Error::NeedBothClasses {
                positives: 0,
                negatives: self.negatives as usize,
            });
        }
        let (mut tp, mut fp) = (0u64, 0u64);
        let mut weighted = 0.0;
        for g in &self.groups {
            tp += g.positives;
            fp += g.negatives;
            if g.positives > 0 {
                weighted += g.positives as f64 * (tp as f64 / (tp + fp) as f64);
            }
        }
        Ok(weighted / self.positives as f64)
    }
}

/// An ordered list of (x, y) points and its summary scalar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub points: Vec<(f64, f64)>,
    pub summary: f64,
}

/// ROC curve (FPR, TPR) from (0,0) to (1,1), one point per tie group.
pub fn roc_curve(ranked: &RankedScores) -> Result<Curve> {
    let auc = ranked.auc()?;
    let (p, n) = (ranked.positives as f64, ranked.negatives as f64);
    let mut points = Vec::with_capacity(ranked.groups.len() + 1);
    points.push((0.0, 0.0));
    let (mut tp, mut fp) = (0u64, 0u64);
    for g in &ranked.groups {
        tp += g.positives;
        fp += g.negatives;
        points.push((fp as f64 / n, tp as f64 / p));
    }
    Ok(Curve {
        points,
        summary: auc,
    })
}

/// PR curve (recall, precision), starting at (0, 1), one point per tie group.
pub fn pr_curve(ranked: &RankedScores) -> Result<Curve> {
    let ap = ranked.average_precision()?;
    let p = ranked.positives as f64;
    let mut points = Vec::with_capacity(ranked.groups.len() + 1);
    points.push((0.0, 1.0));
    let (mut tp, mut fp) = (0u64, 0u64);
    for g in &ranked.groups {
        tp += g.positives;
        fp += g.negatives;
        points.push((tp as f64 / p, tp as f64 / (tp + fp) as f64));
    }
    Ok(Curve {
        points,
        summary: ap,
    })
}

pub fn roc(scores: &ScoreMap, mask: &GroundTruthMask) -> Result<Curve> {
    roc_curve(&RankedScores::from_map(scores, mask)?)
}

pub fn pr(scores: &ScoreMap, mask: &GroundTruthMask) -> Result<Curve> {
    pr_curve(&RankedScores::from_map(scores, mask)?)
}

/// `count` FPR values spaced logarithmically from `min_fpr` to 1.
pub fn log_grid(min_fpr: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => {
            let lo = min_fpr.log10();
            (0..count)
                .map(|i| 10f64.powf(lo - lo * i as f64 / (count - 1) as f64))
                .collect()
        }
    }
}

/// TPR at each grid FPR, taken from the highest curve point whose FPR does
/// not exceed the grid value (step interpolation).
pub fn log_roc_resample(curve: &Curve, fpr_grid: &[f64]) -> Result<Curve> {
    if fpr_grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let pts = &curve.points;
    let points = fpr_grid
        .iter()
        .map(|&g| {
            // Points are sorted by FPR; the last with fpr <= g carries the
            // largest TPR for that FPR.
            let k = pts.partition_point(|&(f, _)| f <= g);
            let tpr = if k == 0 { pts.first().map_or(0.0, |p| p.1) } else { pts[k - 1].1 };
            (g, tpr)
        })
        .collect();
    Ok(Curve {
        points,
        summary: curve.summary,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

/// Counts with prediction rule `score >= threshold`.
pub fn confusion_at(scores: &[f64], labels: &[u8], threshold: f64) -> Result<Confusion> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension {
            what: "labels vs scores",
            expected: scores.len(),
            got: labels.len(),
        });
    }
    if !threshold.is_finite() {
        return Err(Error::NonFinite {
            what: "threshold".into(),
        });
    }
    let mut c = Confusion {
        tp: 0,
        fp: 0,
        tn: 0,
        fn_: 0,
    };
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y != 0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// The per-run metrics summary written next to curve files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub method: Method,
    pub region: String,
    pub auc: f64,
    pub ap: f64,
    pub positives: u64,
    pub negatives: u64,
}

/// Both curves plus the summary.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub roc: Curve,
    pub pr: Curve,
    pub summary: EvalSummary,
}

pub fn evaluate(scores: &ScoreMap, mask: &GroundTruthMask) -> Result<Evaluation> {
    let ranked = RankedScores::from_map(scores, mask)?;
    let roc = roc_curve(&ranked)?;
    let pr = pr_curve(&ranked)?;
    let summary = EvalSummary {
        method: scores.method(),
        region: scores.region().name.clone(),
        auc: roc.summary,
        ap: pr.summary,
        positives: ranked.positives(),
        negatives: ranked.negatives(),
    };
    Ok(Evaluation { roc, pr, summary })
}

/// `x_name,y_name` header then one row per point, shortest round-trip
/// float formatting.
pub fn curve_csv(curve: &Curve, x_name: &str, y_name: &str) -> String {
    let mut s = format!("{x_name},{y_name}\n");
    for (x, y) in &curve.points {
        let _ = writeln!(s, "{x},{y}");
    }
    s
}

/// Render curves as a bare SVG line plot. With `log_x`, x values at or
/// below zero are dropped and the axis spans `[min positive x, 1]`.
pub fn render_svg(curves: &[(&str, &Curve)], title: &str, x_label: &str, y_label: &str, log_x: bool) -> String {
    const W: f64 = 480.0;
    const H: f64 = 360.0;
    const M: f64 = 48.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
    let x_min = if log_x {
        curves
            .iter()
            .flat_map(|(_, c)| c.points.iter().map(|p| p.0))
            .filter(|&x| x > 0.0)
            .fold(1.0f64, f64::min)
            .min(0.1)
            .log10()
    } else {
        0.0
    };
    let map_x = |x: f64| {
        let t = if log_x { (x.log10() - x_min) / -x_min } else { x };
        M + t * (W - 2.0 * M)
    };
    let map_y = |y: f64| H - M - y * (H - 2.0 * M);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{M},{} L{M},{} L{},{}" fill="none" stroke="black"/>"#,
        M,
        H - M,
        W - M,
        H - M
    );
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle">{title}</text>"#, W / 2.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#, W / 2.0, H - 10.0);
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{y_label}</text>"#,
        H / 2.0,
        H / 2.0
    );
    for (i, (label, c)) in curves.iter().enumerate() {
        let mut d = String::new();
        for &(x, y) in &c.points {
            if log_x && x <= 0.0 {
                continue;
            }
            let cmd = if d.is_empty() { 'M' } else { 'L' };
            let _ = write!(d, "{cmd}{:.2},{:.2} ", map_x(x), map_y(y));
        }
        let color = COLORS[i % COLORS.len()];
        let _ = writeln!(s, r#"<path d="{}" fill="none" stroke="{color}"/>"#, d.trim_end());
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{label} ({:.3})</text>"#,
            W - M - 120.0,
            M + 16.0 * (i as f64 + 1.0),
            c.summary
        );
    }
    s.push_str("</svg>\n");
    s
}
