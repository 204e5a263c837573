//! SAM, MF, ACE and CEM detection statistics.
//!
//! Each detector has a scalar per-pixel function (`sam_score`, `mf_score`,
//! ...) written straight from its formula, and a prepared form
//! ([`Detector`]) that scores whole regions in fixed-size pixel chunks.
//! Higher scores always mean "more target-like": SAM reports the negated
//! spectral angle.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::background::{BackgroundModel, Signature};
use crate::envi::SpectralCube;
use crate::error::{Error, Result};
use crate::scene::Region;

/// Pixels per scoring chunk. Fixed so results never depend on thread count.
pub const SCORE_CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sam,
    Mf,
    Ace,
    Cem,
    Nn,
}

impl Method {
    pub const CLASSICAL: [Method; 4] = [Method::Sam, Method::Mf, Method::Ace, Method::Cem];

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sam" => Some(Method::Sam),
            "mf" => Some(Method::Mf),
            "ace" => Some(Method::Ace),
            "cem" => Some(Method::Cem),
            "nn" => Some(Method::Nn),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Sam => "sam",
            Method::Mf => "mf",
            Method::Ace => "ace",
            Method::Cem => "cem",
            Method::Nn => "nn",
        }
    }

    /// MF, ACE and CEM maps are min-max scaled to [0, 1]; SAM keeps the
    /// negated angle and the network already outputs probabilities.
    pub fn normalizes(self) -> bool {
        matches!(self, Method::Mf | Method::Ace | Method::Cem)
    }

    pub fn needs_background(self) -> bool {
        matches!(self, Method::Mf | Method::Ace | Method::Cem)
    }
}

/// Per-pixel detection statistics aligned to a region.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    region: Region,
    method: Method,
    scores: Vec<f64>,
    normalized: bool,
    raw_range: Option<(f64, f64)>,
    constant: bool,
    dead_pixels: usize,
}

impl ScoreMap {
    /// Raw (unnormalized) scores, line-major over `region`.
    pub fn new(region: Region, method: Method, scores: Vec<f64>) -> Result<Self> {
        Self::from_parts(region, method, scores, false, None)
    }

    pub fn from_parts(
        region: Region,
        method: Method,
        scores: Vec<f64>,
        normalized: bool,
        raw_range: Option<(f64, f64)>,
    ) -> Result<Self> {
        if scores.len() != region.pixel_count() {
            return Err(Error::Dimension {
                what: "score count",
                expected: region.pixel_count(),
                got: scores.len(),
            });
        }
        if let Some(i) = scores.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteScore {
                line: region.line_offset + i / region.samples,
                sample: region.sample_offset + i % region.samples,
            });
        }
        let constant = scores.windows(2).all(|w| w[0] == w[1]);
        Ok(Self {
            region,
            method,
            scores,
            normalized,
            raw_range,
            constant,
            dead_pixels: 0,
        })
    }

    #[cfg(test)]
    pub(crate) fn from_parts_unchecked(region: Region, method: Method, scores: Vec<f64>) -> Self {
        Self {
            region,
            method,
            scores,
            normalized: false,
            raw_range: None,
            constant: false,
            dead_pixels: 0,
        }
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn method(&self) -> Method {
        self.method
    }

    /// Line-major scores.
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// (min, max) of the raw statistic, recorded when normalization ran.
    pub fn raw_range(&self) -> Option<(f64, f64)> {
        self.raw_range
    }

    /// Every pixel has the same score (normalization was skipped).
    pub fn is_constant(&self) -> bool {
        self.constant
    }

    /// Zero-norm pixels (SAM) or pixels equal to the background mean (ACE).
    pub fn dead_pixels(&self) -> usize {
        self.dead_pixels
    }

    pub fn with_dead_pixels(mut self, n: usize) -> Self {
        self.dead_pixels = n;
        self
    }

    /// Min-max scale to [0, 1]. Constant maps are returned unchanged.
    pub fn normalize(mut self) -> Self {
        if self.normalized {
            return self;
        }
        let (lo, hi) = self
            .scores
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        self.raw_range = Some((lo, hi));
        if !(hi > lo) {
            self.constant = true;
            return self;
        }
        let span = hi - lo;
        for v in &mut self.scores {
            *v = ((*v - lo) / span).clamp(0.0, 1.0);
        }
        self.normalized = true;
        self
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_len(x: &[f64], bands: usize) -> Result<()> {
    if x.len() != bands {
        return Err(Error::Dimension {
            what: "pixel length",
            expected: bands,
            got: x.len(),
        });
    }
    Ok(())
}

/// Negated spectral angle, in [−π, 0]. Zero-norm pixels score −π/2.
pub fn sam_score(x: &[f64], t: &Signature) -> Result<f64> {
    check_len(x, t.len())?;
    let nx = dot(x, x).sqrt();
    let nt = dot(t.values(), t.values()).sqrt();
    if nx == 0.0 {
        return Ok(-FRAC_PI_2);
    }
    Ok(-spectral_angle(x, nx, t.values(), nt))
}

/// Angle between `x` and `t` from 2·atan2(‖x̂ − t̂‖, ‖x̂ + t̂‖), which equals
/// arccos of the clamped cosine but stays accurate near 0 and π.
fn spectral_angle(x: &[f64], x_norm: f64, t: &[f64], t_norm: f64) -> f64 {
    let (mut diff, mut sum) = (0.0, 0.0);
    for (a, b) in x.iter().zip(t) {
        let (u, v) = (a / x_norm, b / t_norm);
        diff += (u - v) * (u - v);
        sum += (u + v) * (u + v);
    }
    2.0 * diff.sqrt().atan2(sum.sqrt())
}

fn centered(v: &[f64], mean: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(v.len(), v.iter().zip(mean.iter()).map(|(a, m)| a - m))
}

fn quad(inv: &DMatrix<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.dot(&(inv * b))
}

/// Matched filter: w = Σ⁻¹(t−μ) / ((t−μ)ᵀΣ⁻¹(t−μ)), score wᵀ(x−μ).
pub fn mf_score(x: &[f64], model: &BackgroundModel, t: &Signature) -> Result<f64> {
    check_len(x, model.bands())?;
    t.check_bands(model.bands())?;
    let tc = centered(t.values(), model.mean());
    let xc = centered(x, model.mean());
    let denom = quad(model.cov_inverse(), &tc, &tc);
    if !(denom > 0.0) {
        return Err(Error::DegenerateTarget("target equals the background mean"));
    }
    Ok(quad(model.cov_inverse(), &tc, &xc) / denom)
}

/// Adaptive cosine estimator: squared whitened cosine, in [0, 1].
/// Pixels equal to the background mean score 0.
pub fn ace_score(x: &[f64], model: &BackgroundModel, t: &Signature) -> Result<f64> {
    check_len(x, model.bands())?;
    t.check_bands(model.bands())?;
    let tc = centered(t.values(), model.mean());
    let xc = centered(x, model.mean());
    let tt = quad(model.cov_inverse(), &tc, &tc);
    if !(tt > 0.0) {
        return Err(Error::DegenerateTarget("target equals the background mean"));
    }
    let xx = quad(model.cov_inverse(), &xc, &xc);
    if xx == 0.0 {
        return Ok(0.0);
    }
    let tx = quad(model.cov_inverse(), &tc, &xc);
    Ok((tx * tx / (tt * xx)).min(1.0))
}

/// Constrained energy minimization.
///
/// Uncentered (default): w = R⁻¹t / (tᵀR⁻¹t), score wᵀx, with R the raw
/// second moment. Centered: t, x replaced by t−μ, x−μ and R by the
/// centered second moment.
pub fn cem_score(x: &[f64], model: &BackgroundModel, t: &Signature, centered_variant: bool) -> Result<f64> {
    check_len(x, model.bands())?;
    t.check_bands(model.bands())?;
    let (tv, xv, inv) = if centered_variant {
        (
            centered(t.values(), model.mean()),
            centered(x, model.mean()),
            model.centered_second_moment_inverse(),
        )
    } else {
        (
            DVector::from_column_slice(t.values()),
            DVector::from_column_slice(x),
            model.second_moment_inverse(),
        )
    };
    let denom = quad(inv, &tv, &tv);
    if !(denom > 0.0) {
        return Err(Error::DegenerateTarget("tᵀR⁻¹t is not positive"));
    }
    Ok(quad(inv, &tv, &xv) / denom)
}

/// Which CEM background matrix to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CemVariant {
    #[default]
    Uncentered,
    Centered,
}

#[derive(Debug, Clone)]
enum Kernel {
    Sam {
        target: Vec<f64>,
        target_norm: f64,
    },
    /// score = w · (x − center), center absent for uncentered CEM.
    Linear {
        weights: Vec<f64>,
        center: Option<Vec<f64>>,
    },
    Ace {
        mean: DVector<f64>,
        whitener: DMatrix<f64>,
        whitened_target: Vec<f64>,
        target_energy: f64,
    },
}

/// A detector with everything that does not depend on the pixel
/// precomputed.
#[derive(Debug, Clone)]
pub struct Detector {
    method: Method,
    variant: Option<CemVariant>,
    bands: usize,
    kernel: Kernel,
}

impl Detector {
    /// Prepare `method` for `target`. MF, ACE and CEM need a background
    /// model; SAM ignores it.
    pub fn prepare(
        method: Method,
        target: &Signature,
        model: Option<&BackgroundModel>,
        cem: CemVariant,
    ) -> Result<Self> {
        let bands = target.len();
        let need_model = || -> Result<&BackgroundModel> {
            let m = model.ok_or_else(|| {
                Error::Config(format!("{} needs background statistics", method.as_str()))
            })?;
            target.check_bands(m.bands())?;
            Ok(m)
        };
        let kernel = match method {
            Method::Sam => Kernel::Sam {
                target: target.values().to_vec(),
                target_norm: dot(target.values(), target.values()).sqrt(),
            },
            Method::Mf => {
                let m = need_model()?;
                let tc = centered(target.values(), m.mean());
                let q = m.cov_inverse() * &tc;
                let denom = tc.dot(&q);
                if !(denom > 0.0) {
                    return Err(Error::DegenerateTarget("target equals the background mean"));
                }
                Kernel::Linear {
                    weights: (q / denom).iter().copied().collect(),
                    center: Some(m.mean().iter().copied().collect()),
                }
            }
            Method::Cem => {
                let m = need_model()?;
                let (tv, inv, center) = match cem {
                    CemVariant::Uncentered => (
                        DVector::from_column_slice(target.values()),
                        m.second_moment_inverse(),
                        None,
                    ),
                    CemVariant::Centered => (
                        centered(target.values(), m.mean()),
                        m.centered_second_moment_inverse(),
                        Some(m.mean().iter().copied().collect()),
                    ),
                };
                let q = inv * &tv;
                let denom = tv.dot(&q);
                if !(denom > 0.0) {
                    return Err(Error::DegenerateTarget("tᵀR⁻¹t is not positive"));
                }
                Kernel::Linear {
                    weights: (q / denom).iter().copied().collect(),
                    center,
                }
            }
            Method::Ace => {
                let m = need_model()?;
                let tc = centered(target.values(), m.mean());
                let a = m.whitener() * tc;
                let energy = a.norm_squared();
                if !(energy > 0.0) {
                    return Err(Error::DegenerateTarget("target equals the background mean"));
                }
                Kernel::Ace {
                    mean: m.mean().clone(),
                    whitener: m.whitener().clone(),
                    whitened_target: a.iter().copied().collect(),
                    target_energy: energy,
                }
            }
            Method::Nn => {
                return Err(Error::Config(
                    "the spectral network is scored through nn::score_region".into(),
                ))
            }
        };
        Ok(Self {
            method,
            variant: (method == Method::Cem).then_some(cem),
            bands,
            kernel,
        })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn cem_variant(&self) -> Option<CemVariant> {
        self.variant
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    /// Score one chunk of BIP pixels into `out`; returns the dead-pixel count.
    fn score_chunk(&self, pixels: &[f64], out: &mut [f64]) -> usize {
        let b = self.bands;
        let mut dead = 0;
        match &self.kernel {
            Kernel::Sam {
                target,
                target_norm,
            } => {
                for (x, o) in pixels.chunks_exact(b).zip(out.iter_mut()) {
                    let nx = dot(x, x).sqrt();
                    *o = if nx == 0.0 {
                        dead += 1;
                        -FRAC_PI_2
                    } else {
                        -spectral_angle(x, nx, target, *target_norm)
                    };
                }
            }
            Kernel::Linear { weights, center } => {
                for (x, o) in pixels.chunks_exact(b).zip(out.iter_mut()) {
                    *o = match center {
                        Some(c) => x
                            .iter()
                            .zip(c)
                            .zip(weights)
                            .map(|((xi, ci), wi)| wi * (xi - ci))
                            .sum(),
                        None => dot(weights, x),
                    };
                }
            }
            Kernel::Ace {
                mean,
                whitener,
                whitened_target,
                target_energy,
            } => {
                let mut xc = vec![0.0; b];
                let mut y = vec![0.0; b];
                // column-major storage: column k is w[k*b..(k+1)*b]
                let w = whitener.as_slice();
                for (x, o) in pixels.chunks_exact(b).zip(out.iter_mut()) {
                    xc.iter_mut()
                        .zip(x)
                        .zip(mean.iter())
                        .for_each(|((c, v), m)| *c = v - m);
                    // y = W (x − μ), with W lower triangular.
                    y.fill(0.0);
                    for (k, &ck) in xc.iter().enumerate() {
                        let col = &w[k * b + k..(k + 1) * b];
                        for (yi, wik) in y[k..].iter_mut().zip(col) {
                            *yi += wik * ck;
                        }
                    }
                    let yy = dot(&y, &y);
                    *o = if yy == 0.0 {
                        dead += 1;
                        0.0
                    } else {
                        let ty = dot(&y, whitened_target);
                        (ty * ty / (target_energy * yy)).min(1.0)
                    };
                }
            }
        }
        dead
    }

    /// Raw statistic for every pixel of a BIP slice. Returns the dead-pixel
    /// count.
    pub fn score_pixels(&self, pixels: &[f64], out: &mut [f64]) -> Result<usize> {
        let b = self.bands;
        if pixels.len() % b != 0 || pixels.len() / b != out.len() {
            return Err(Error::Dimension {
                what: "pixel buffer",
                expected: out.len() * b,
                got: pixels.len(),
            });
        }
        let dead = pixels
            .par_chunks(SCORE_CHUNK * b)
            .zip(out.par_chunks_mut(SCORE_CHUNK))
            .map(|(p, o)| self.score_chunk(p, o))
            .sum();
        Ok(dead)
    }
}

/// Score every pixel of `cube`. MF, ACE and CEM maps are min-max
/// normalized; SAM stays a negated angle.
pub fn score_region(cube: &SpectralCube, detector: &Detector) -> Result<ScoreMap> {
    if cube.bands() != detector.bands() {
        return Err(Error::Dimension {
            what: "cube bands vs detector",
            expected: detector.bands(),
            got: cube.bands(),
        });
    }
    let mut raw = vec![0.0; cube.pixel_count()];
    let dead = detector.score_pixels(cube.values(), &mut raw)?;
    finish_map(cube.region().clone(), detector.method(), raw, dead)
}

/// Wrap raw scores into a map, normalizing where the method calls for it.
pub fn finish_map(region: Region, method: Method, raw: Vec<f64>, dead: usize) -> Result<ScoreMap> {
    let map = ScoreMap::new(region, method, raw)?.with_dead_pixels(dead);
    Ok(if method.normalizes() { map.normalize() } else { map })
}

/// One line of the JSON-lines run report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: Method,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub variant: Option<CemVariant>,
    pub region: String,
    pub line_offset: usize,
    pub sample_offset: usize,
    pub lines: usize,
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ridge: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub background_pixels: Option<usize>,
    pub exclude_positives: bool,
    pub normalized: bool,
    pub constant: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub raw_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub raw_max: Option<f64>,
    pub dead_pixels: usize,
}

impl RunReport {
    pub fn new(
        map: &ScoreMap,
        variant: Option<CemVariant>,
        model: Option<&BackgroundModel>,
        exclude_positives: bool,
    ) -> Self {
        let r = map.region();
        Self {
            method: map.method(),
            variant,
            region: r.name.clone(),
            line_offset: r.line_offset,
            sample_offset: r.sample_offset,
            lines: r.lines,
            samples: r.samples,
            ridge: model.map(|m| m.ridge()),
            background_pixels: model.map(|m| m.sample_count()),
            exclude_positives,
            normalized: map.is_normalized(),
            constant: map.is_constant(),
            raw_min: map.raw_range().map(|r| r.0),
            raw_max: map.raw_range().map(|r| r.1),
            dead_pixels: map.dead_pixels(),
        }
    }

    pub fn to_json_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::SampleMoments;

    fn sig(v: &[f64]) -> Signature {
        Signature::new(v.to_vec(), "t").unwrap()
    }

    /// Model with given mean and covariance (and R = I) using a negligible ridge.
    fn model(mean: &[f64], cov: DMatrix<f64>) -> BackgroundModel {
        let n = mean.len();
        BackgroundModel::from_moments(
            SampleMoments {
                count: 1000,
                mean: DVector::from_column_slice(mean),
                covariance: cov,
                second_moment: DMatrix::identity(n, n),
            },
            Some(1e-14),
        )
        .unwrap()
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn sam_examples() {
        let t = sig(&[0.0, 1.0]);
        assert_eq!(sam_score(&[0.0, 1.0], &t).unwrap(), 0.0);
        assert!((sam_score(&[1.0, 0.0], &t).unwrap() + FRAC_PI_2).abs() < 1e-15);
        let t = sig(&[1.0, 1.0]);
        assert!((sam_score(&[1.0, 0.0], &t).unwrap() + 0.785398).abs() < 1e-6);
        assert!((sam_score(&[1.0, 0.0], &t).unwrap() + (0.5f64).sqrt().acos()).abs() < 1e-15);
        // arccos overshoot at x = t
        let t = sig(&[0.1, 0.7, 0.3]);
        assert_eq!(sam_score(&[0.1, 0.7, 0.3], &t).unwrap(), 0.0);
        assert_eq!(sam_score(&[0.0, 0.0, 0.0], &t).unwrap(), -FRAC_PI_2);
    }

    #[test]
    fn mf_examples() {
        let m = model(&[0.0, 0.0], DMatrix::identity(2, 2));
        let t = sig(&[2.0, 0.0]);
        assert!((mf_score(&[2.0, 0.0], &m, &t).unwrap() - 1.0).abs() < 1e-10);
        assert!((mf_score(&[1.0, 0.0], &m, &t).unwrap() - 0.5).abs() < 1e-10);
        assert!(mf_score(&[0.0, 0.0], &m, &t).unwrap().abs() < 1e-10);

        let mu = [0.4, -1.0];
        let m = model(&mu, DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 0.5]));
        let t = sig(&[1.5, 2.0]);
        let x2: Vec<f64> = t.values().iter().zip(&mu).map(|(t, m)| 2.0 * t - m).collect();
        assert!((mf_score(&x2, &m, &t).unwrap() - 2.0).abs() < 1e-10);
        assert!((mf_score(t.values(), &m, &t).unwrap() - 1.0).abs() < 1e-10);
        assert!(mf_score(&mu, &m, &t).unwrap().abs() < 1e-10);

        let degenerate = sig(&mu);
        assert!(matches!(mf_score(&[1.0, 1.0], &m, &degenerate), Err(Error::DegenerateTarget(_))));
    }

    #[test]
    fn ace_examples() {
        let m = model(&[0.0, 0.0], DMatrix::identity(2, 2));
        let t = sig(&[1.0, 0.0]);
        assert!((ace_score(&[1.0, 1.0], &m, &t).unwrap() - 0.5).abs() < 1e-10);
        assert_eq!(ace_score(&[0.0, 0.0], &m, &t).unwrap(), 0.0);

        let mu = [0.4, -1.0];
        let m = model(&mu, DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 0.5]));
        let t = sig(&[1.5, 2.0]);
        assert!((ace_score(t.values(), &m, &t).unwrap() - 1.0).abs() < 1e-10);
        let anti: Vec<f64> = mu.iter().zip(t.values()).map(|(m, t)| m - (t - m)).collect();
        assert!((ace_score(&anti, &m, &t).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn cem_examples() {
        let m = model(&[0.3, 0.3], DMatrix::identity(2, 2));
        let t = sig(&[2.0, 0.0]);
        assert!((cem_score(&[1.0, 0.0], &m, &t, false).unwrap() - 0.5).abs() < 1e-10);
        assert!((cem_score(&[2.0, 0.0], &m, &t, false).unwrap() - 1.0).abs() < 1e-10);
        assert_eq!(cem_score(&[0.0, 0.0], &m, &t, false).unwrap(), 0.0);
        assert!((cem_score(&[2.0, 0.0], &m, &t, true).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn normalization_examples() {
        let r = Region::whole("r", 1, 3).unwrap();
        let map = ScoreMap::new(r.clone(), Method::Mf, vec![0.2, 1.0, 0.6]).unwrap().normalize();
        let got = map.scores();
        for (g, e) in got.iter().zip([0.0, 1.0, 0.5]) {
            assert!((g - e).abs() < 1e-12);
        }
        assert_eq!(map.raw_range(), Some((0.2, 1.0)));
        assert!(map.is_normalized());

        let flat = ScoreMap::new(r, Method::Ace, vec![0.4; 3]).unwrap().normalize();
        assert!(flat.is_constant() && !flat.is_normalized());
        assert_eq!(flat.scores(), &[0.4; 3]);
    }

    #[test]
    fn method_names_roundtrip() {
        for m in [Method::Sam, Method::Mf, Method::Ace, Method::Cem, Method::Nn] {
            assert_eq!(Method::parse(m.as_str()), Some(m));
        }
        assert_eq!(Method::parse("rx"), None);
    }
}
