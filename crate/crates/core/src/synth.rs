//! Seeded synthetic scenes with a Gaussian background and linearly mixed
//! target pixels. The true background statistics come back with the scene
//! so estimators and detectors can be checked against them.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::background::{BackgroundModel, SampleMoments, Signature};
use crate::envi::SpectralCube;
use crate::error::{Error, Result};
use crate::scene::{GroundTruthMask, Region};

/// Fraction of background pixels brightened when contamination is on.
pub const CONTAMINATION_FRACTION: f64 = 0.05;
pub const CONTAMINATION_GAIN: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BackgroundSpec {
    /// Smooth random mean; Σ = AAᵀ + δI with A drawn as N(0, scale²/L)
    /// and δ = 0.01 · mean diag(AAᵀ).
    Random { scale: f64 },
    /// Σ = AAᵀ + δI with everything given.
    Explicit {
        mean: Vec<f64>,
        /// L × L, row-major
        factor: Vec<f64>,
        delta: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TargetSpec {
    Supplied(Vec<f64>),
    /// Sum of three Gaussian bumps over the band axis.
    Generated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plant {
    pub line: usize,
    pub sample: usize,
    pub abundance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub lines: usize,
    pub samples: usize,
    pub bands: usize,
    pub seed: u64,
    pub background: BackgroundSpec,
    pub target: TargetSpec,
    pub plants: Vec<Plant>,
    /// Standard deviation of white noise added to every pixel.
    pub noise_floor: f64,
    /// Brighten a random 5% of background pixels by ×3.
    pub contamination: bool,
}

impl SynthSpec {
    pub fn new(lines: usize, samples: usize, bands: usize, seed: u64) -> Self {
        Self {
            lines,
            samples,
            bands,
            seed,
            background: BackgroundSpec::Random { scale: 1.0 },
            target: TargetSpec::Generated,
            plants: Vec::new(),
            noise_floor: 0.0,
            contamination: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lines == 0 || self.samples == 0 || self.bands == 0 {
            return Err(Error::Config("scene extents must be positive".into()));
        }
        if !(self.noise_floor >= 0.0 && self.noise_floor.is_finite()) {
            return Err(Error::invalid("noise_floor", self.noise_floor.to_string()));
        }
        let l = self.bands;
        match &self.background {
            BackgroundSpec::Random { scale } => {
                if !(*scale > 0.0 && scale.is_finite()) {
                    return Err(Error::invalid("scale", scale.to_string()));
                }
            }
            BackgroundSpec::Explicit {
                mean,
                factor,
                delta,
            } => {
                if mean.len() != l {
                    return Err(Error::Dimension {
                        what: "background mean",
                        expected: l,
                        got: mean.len(),
                    });
                }
                if factor.len() != l * l {
                    return Err(Error::Dimension {
                        what: "covariance factor",
                        expected: l * l,
                        got: factor.len(),
                    });
                }
                if !(*delta >= 0.0) || !mean.iter().chain(factor).all(|v| v.is_finite()) {
                    return Err(Error::NonFinite {
                        what: "background specification".into(),
                    });
                }
            }
        }
        if let TargetSpec::Supplied(t) = &self.target {
            if t.len() != l {
                return Err(Error::Dimension {
                    what: "target signature",
                    expected: l,
                    got: t.len(),
                });
            }
        }
        let mut seen = std::collections::HashSet::new();
        for p in &self.plants {
            if p.line >= self.lines || p.sample >= self.samples {
                return Err(Error::Config(format!(
                    "plant ({}, {}) outside {}×{} scene",
                    p.line, p.sample, self.lines, self.samples
                )));
            }
            if !(p.abundance > 0.0 && p.abundance <= 1.0) {
                return Err(Error::invalid("abundance", p.abundance.to_string()));
            }
            if !seen.insert((p.line, p.sample)) {
                return Err(Error::Config(format!(
                    "plant ({}, {}) listed twice",
                    p.line, p.sample
                )));
            }
        }
        Ok(())
    }
}

/// `count` distinct plant positions with abundances uniform in `abundance`,
/// drawn from their own stream so they do not shift the scene draws.
pub fn random_plants(
    lines: usize,
    samples: usize,
    count: usize,
    abundance: (f64, f64),
    seed: u64,
) -> Result<Vec<Plant>> {
    let n = lines * samples;
    if count > n {
        return Err(Error::Config(format!("{count} plants do not fit in {n} pixels")));
    }
    let (lo, hi) = abundance;
    if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
        return Err(Error::invalid("abundance", format!("{lo}..{hi}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut idx = sample(&mut rng, n, count).into_vec();
    idx.sort_unstable();
    Ok(idx
        .into_iter()
        .map(|i| Plant {
            line: i / samples,
            sample: i % samples,
            abundance: if lo == hi { lo } else { rng.gen_range(lo..=hi) },
        })
        .collect())
}

/// Sum of three Gaussian bumps with seeded centers, widths and heights,
/// on top of a constant floor.
fn smooth_spectrum(bands: usize, floor: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let span = bands.max(2) as f64 - 1.0;
    let bumps: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            let center = rng.gen_range(0.0..=span);
            let width = rng.gen_range(0.05..0.25) * span.max(1.0);
            let height = rng.gen_range(0.3..1.0);
            (center, width, height)
        })
        .collect();
    (0..bands)
        .map(|b| {
            floor
                + bumps
                    .iter()
                    .map(|(c, w, h)| h * (-0.5 * ((b as f64 - c) / w).powi(2)).exp())
                    .sum::<f64>()
        })
        .collect()
}

/// Resolved background: mean, factor A and δ.
struct Background {
    mean: Vec<f64>,
    factor: DMatrix<f64>,
    delta: f64,
}

fn resolve_background(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Background {
    let l = spec.bands;
    match &spec.background {
        BackgroundSpec::Random { scale } => {
            let mean = smooth_spectrum(l, 1.0, rng);
            let s = scale / (l as f64).sqrt();
            let mut factor = DMatrix::zeros(l, l);
            for i in 0..l {
                for j in 0..l {
                    let z: f64 = rng.sample(StandardNormal);
                    factor[(i, j)] = z * s;
                }
            }
            let aat = &factor * factor.transpose();
            let delta = 0.01 * aat.trace() / l as f64;
            Background {
                mean,
                factor,
                delta,
            }
        }
        BackgroundSpec::Explicit {
            mean,
            factor,
            delta,
        } => Background {
            mean: mean.clone(),
            factor: DMatrix::from_row_slice(l, l, factor),
            delta: *delta,
        },
    }
}

fn target_vector(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match &spec.target {
        TargetSpec::Supplied(t) => t.clone(),
        TargetSpec::Generated => smooth_spectrum(spec.bands, 0.5, rng),
    }
}

/// Covariance of observed background pixels: AAᵀ + (δ + noise²) I.
fn true_covariance(bg: &Background, noise: f64) -> DMatrix<f64> {
    let l = bg.mean.len();
    &bg.factor * bg.factor.transpose() + DMatrix::identity(l, l) * (bg.delta + noise * noise)
}

/// Everything [`generate`] produces.
#[derive(Debug, Clone)]
pub struct SynthScene {
    pub cube: SpectralCube,
    pub mask: GroundTruthMask,
    pub signature: Signature,
    /// Model built from the true mean and covariance, with the default
    /// ridge.
    pub truth: BackgroundModel,
    /// Line-major indices of brightened background pixels.
    pub contaminated: Vec<usize>,
}

/// Draw a scene. Bit-identical for equal specs.
pub fn generate(spec: &SynthSpec) -> Result<SynthScene> {
    spec.validate()?;
    let (lines, samples, l) = (spec.lines, spec.samples, spec.bands);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let bg = resolve_background(spec, &mut rng);
    let target = target_vector(spec, &mut rng);
    let signature = Signature::new(target.clone(), "synthetic target")?;

    let n = lines * samples;
    let sd = bg.delta.sqrt();
    let mut values = vec![0.0; n * l];
    let mut z = vec![0.0; l];
    for px in values.chunks_exact_mut(l) {
        z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        for (i, out) in px.iter_mut().enumerate() {
            let mut acc = bg.mean[i];
            for (j, zj) in z.iter().enumerate() {
                acc += bg.factor[(i, j)] * zj;
            }
            let e: f64 = rng.sample(StandardNormal);
            *out = acc + sd * e;
        }
    }

    let mut labels = vec![0u8; n];
    for p in &spec.plants {
        let i = p.line * samples + p.sample;
        labels[i] = 1;
        let px = &mut values[i * l..(i + 1) * l];
        for (v, t) in px.iter_mut().zip(&target) {
            *v = p.abundance * t + (1.0 - p.abundance) * *v;
        }
    }

    if spec.noise_floor > 0.0 {
        for v in values.iter_mut() {
            let e: f64 = rng.sample(StandardNormal);
            *v += spec.noise_floor * e;
        }
    }

    let mut contaminated = Vec::new();
    if spec.contamination {
        let background: Vec<usize> = (0..n).filter(|&i| labels[i] == 0).collect();
        let k = (CONTAMINATION_FRACTION * background.len() as f64).round() as usize;
        contaminated = sample(&mut rng, background.len(), k)
            .into_iter()
            .map(|j| background[j])
            .collect();
        contaminated.sort_unstable();
        for &i in &contaminated {
            values[i * l..(i + 1) * l]
                .iter_mut()
                .for_each(|v| *v *= CONTAMINATION_GAIN);
        }
    }

    let region = Region::whole("synthetic", lines, samples)?;
    let wavelengths = (0..l)
        .map(|b| 400.0 + 600.0 * b as f64 / (l.max(2) - 1) as f64)
        .collect();
    let cube = SpectralCube::from_bip(region.clone(), l, values, Some(wavelengths))?;
    let mask = GroundTruthMask::new(region, labels)?;

    let covariance = true_covariance(&bg, spec.noise_floor);
    let mean = DVector::from_vec(bg.mean);
    let nf = n.max(2) as f64;
    let second_moment = &covariance * ((nf - 1.0) / nf) + &mean * mean.transpose();
    let truth = BackgroundModel::from_moments(
        SampleMoments {
            count: n.max(2),
            mean,
            covariance,
            second_moment,
        },
        None,
    )?;
    Ok(SynthScene {
        cube,
        mask,
        signature,
        truth,
        contaminated,
    })
}

/// α · sqrt((t − μ)ᵀ Σ⁻¹ (t − μ)) for the true background, without ridge.
pub fn deflection(spec: &SynthSpec, abundance: f64) -> Result<f64> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let bg = resolve_background(spec, &mut rng);
    let target = target_vector(spec, &mut rng);
    let cov = true_covariance(&bg, spec.noise_floor);
    let d = DVector::from_iterator(
        spec.bands,
        target.iter().zip(&bg.mean).map(|(t, m)| t - m),
    );
    let chol = cov
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { ridge: 0.0 })?;
    let q = d.dot(&chol.solve(&d));
    Ok(abundance * q.max(0.0).sqrt())
}

/// Deflection at the smallest planted abundance; 0 with no plants.
pub fn snr_of(spec: &SynthSpec) -> Result<f64> {
    let min = spec
        .plants
        .iter()
        .map(|p| p.abundance)
        .fold(f64::INFINITY, f64::min);
    if min.is_finite() {
        deflection(spec, min)
    } else {
        spec.validate()?;
        Ok(0.0)
    }
}

/// Smallest abundance reaching deflection `target` for this background and
/// signature, capped at 1.
pub fn abundance_for_deflection(spec: &SynthSpec, target: f64) -> Result<f64> {
    let unit = deflection(spec, 1.0)?;
    if unit <= 0.0 {
        return Err(Error::DegenerateTarget("target equals the background mean"));
    }
    Ok((target / unit).min(1.0))
}
