//! Background statistics: mean, covariance, uncentered second moment, their
//! ridge-regularized inverses and the Cholesky whitening transform.
//!
//! Sums are accumulated over fixed blocks of [`BLOCK_PIXELS`] pixels and the
//! block partials are merged in a fixed binary-tree order, so the result is
//! bit-identical whether the pixels arrive in one slice or in many strips,
//! and whatever the rayon thread count.

use nalgebra::{DMatrix, DMatrixView, DVector};
use rayon::prelude::*;

use crate::envi::SpectralCube;
use crate::error::{Error, Result};
use crate::scene::PixelTable;

/// Pixels per leaf of the summation tree.
pub const BLOCK_PIXELS: usize = 1024;

/// Relative ridge: `RIDGE_SCALE * trace(cov) / bands`.
pub const RIDGE_SCALE: f64 = 1e-6;
/// Absolute lower bound on the ridge (reached for zero-variance data).
pub const RIDGE_FLOOR: f64 = 1e-12;

/// A target spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct Signature {
    values: Vec<f64>,
    label: String,
}

impl Signature {
    pub fn new(values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::DegenerateTarget("empty signature"));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: format!("{v} in signature"),
            });
        }
        if values.iter().all(|&v| v == 0.0) {
            return Err(Error::DegenerateTarget("signature is the zero vector"));
        }
        Ok(Self {
            values,
            label: label.into(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub(crate) fn check_bands(&self, bands: usize) -> Result<()> {
        if self.values.len() != bands {
            return Err(Error::Dimension {
                what: "signature length",
                expected: bands,
                got: self.values.len(),
            });
        }
        Ok(())
    }
}

/// Anything that can hand over its pixel spectra (BIP rows) in order.
///
/// Sources are visited more than once (two-pass statistics), so visiting
/// must be repeatable and yield the same pixels in the same order.
pub trait PixelSource {
    fn bands(&self) -> usize;
    fn visit(&self, f: &mut dyn FnMut(&[f64]) -> Result<()>) -> Result<()>;
}

impl PixelSource for PixelTable {
    fn bands(&self) -> usize {
        PixelTable::bands(self)
    }

    fn visit(&self, f: &mut dyn FnMut(&[f64]) -> Result<()>) -> Result<()> {
        f(self.spectra())
    }
}

impl PixelSource for SpectralCube {
    fn bands(&self) -> usize {
        SpectralCube::bands(self)
    }

    fn visit(&self, f: &mut dyn FnMut(&[f64]) -> Result<()>) -> Result<()> {
        f(self.values())
    }
}

#[derive(Debug, Clone)]
struct Partial {
    count: usize,
    sum: DVector<f64>,
    outer: DMatrix<f64>,
}

impl Partial {
    fn merge(mut self, right: Partial) -> Partial {
        self.count += right.count;
        self.sum += right.sum;
        self.outer += right.outer;
        self
    }
}

/// What a [`MomentTree`] accumulates per block.
#[derive(Debug, Clone, Copy)]
enum Pass<'a> {
    /// Sum of x and of x xᵀ.
    Raw,
    /// Sum of (x - μ)(x - μ)ᵀ.
    Centered(&'a [f64]),
}

/// Fixed-order pairwise accumulator over blocks of pixels.
struct MomentTree<'a> {
    bands: usize,
    pass: Pass<'a>,
    pending: Vec<f64>,
    stack: Vec<(u32, Partial)>,
}

impl<'a> MomentTree<'a> {
    fn new(bands: usize, pass: Pass<'a>) -> Self {
        Self {
            bands,
            pass,
            pending: Vec::with_capacity(BLOCK_PIXELS * bands),
            stack: Vec::new(),
        }
    }

    fn block(bands: usize, pass: Pass<'_>, data: &[f64]) -> Partial {
        let n = data.len() / bands;
        let x = DMatrixView::from_slice(data, bands, n);
        match pass {
            Pass::Raw => {
                let mut sum = DVector::zeros(bands);
                for col in x.column_iter() {
                    sum += col;
                }
                Partial {
                    count: n,
                    sum,
                    outer: x * x.transpose(),
                }
            }
            Pass::Centered(mean) => {
                let mu = DVector::from_column_slice(mean);
                let mut c = x.clone_owned();
                for mut col in c.column_iter_mut() {
                    col -= &mu;
                }
                Partial {
                    count: n,
                    sum: DVector::zeros(bands),
                    outer: &c * c.transpose(),
                }
            }
        }
    }

    fn push_partial(&mut self, p: Partial) {
        let mut level = 0u32;
        let mut cur = p;
        while let Some((top_level, _)) = self.stack.last() {
            if *top_level != level {
                break;
            }
            let (_, left) = self.stack.pop().unwrap();
            cur = left.merge(cur);
            level += 1;
        }
        self.stack.push((level, cur));
    }

    fn push(&mut self, data: &[f64]) -> Result<()> {
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: format!("{v} in background pixels"),
            });
        }
        let block_len = BLOCK_PIXELS * self.bands;
        let mut rest = data;
        if !self.pending.is_empty() {
            let take = (block_len - self.pending.len()).min(rest.len());
            self.pending.extend_from_slice(&rest[..take]);
            rest = &rest[take..];
            if self.pending.len() == block_len {
                let p = Self::block(self.bands, self.pass, &self.pending);
                self.pending.clear();
                self.push_partial(p);
            }
        }
        let full = rest.len() / block_len * block_len;
        let (bands, pass) = (self.bands, self.pass);
        let partials: Vec<Partial> = rest[..full]
            .par_chunks_exact(block_len)
            .map(|c| Self::block(bands, pass, c))
            .collect();
        for p in partials {
            self.push_partial(p);
        }
        self.pending.extend_from_slice(&rest[full..]);
        Ok(())
    }

    fn finish(mut self) -> Option<Partial> {
        if !self.pending.is_empty() {
            let p = Self::block(self.bands, self.pass, &self.pending);
            self.pending.clear();
            self.push_partial(p);
        }
        let mut it = self.stack.into_iter().rev().map(|(_, p)| p);
        let mut acc = it.next()?;
        for left in it {
            acc = left.merge(acc);
        }
        Some(acc)
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Plain sample statistics, before any regularization.
#[derive(Debug, Clone)]
pub struct SampleMoments {
    pub count: usize,
    pub mean: DVector<f64>,
    /// Unbiased covariance, N − 1 denominator.
    pub covariance: DMatrix<f64>,
    /// Uncentered (1/N) Σ x xᵀ.
    pub second_moment: DMatrix<f64>,
}

impl SampleMoments {
    /// Two passes over `source`: mean and raw second moment, then the
    /// centered covariance. Needs at least two pixels.
    pub fn compute(source: &dyn PixelSource) -> Result<Self> {
        let bands = source.bands();
        let mut raw = MomentTree::new(bands, Pass::Raw);
        source.visit(&mut |chunk| raw.push(chunk))?;
        let raw = raw.finish().ok_or(Error::InsufficientSamples { samples: 0, bands })?;
        let n = raw.count;
        if n < 2 {
            return Err(Error::InsufficientSamples { samples: n, bands });
        }
        let mean = &raw.sum / n as f64;
        let mut second_moment = raw.outer / n as f64;
        symmetrize(&mut second_moment);

        let mean_slice: Vec<f64> = mean.iter().copied().collect();
        let mut centered = MomentTree::new(bands, Pass::Centered(&mean_slice));
        source.visit(&mut |chunk| centered.push(chunk))?;
        let centered = centered.finish().expect("second pass sees the same pixels");
        if centered.count != n {
            return Err(Error::Config("pixel source changed between passes".into()));
        }
        let mut covariance = centered.outer / (n - 1) as f64;
        symmetrize(&mut covariance);
        Ok(Self {
            count: n,
            mean,
            covariance,
            second_moment,
        })
    }
}

/// Background statistics and everything derived from them.
#[derive(Debug, Clone)]
pub struct BackgroundModel {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    second_moment: DMatrix<f64>,
    cov_inverse: DMatrix<f64>,
    second_moment_inverse: DMatrix<f64>,
    /// ((N−1)/N · Σ + εI)⁻¹, the inverse of the centered second moment.
    centered_second_moment_inverse: DMatrix<f64>,
    /// Inverse Cholesky factor W with WᵀW = (Σ + εI)⁻¹.
    whitener: DMatrix<f64>,
    ridge: f64,
    sample_count: usize,
}

fn regularized_inverse(m: &DMatrix<f64>, ridge: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    let ridged = m + DMatrix::identity(n, n) * ridge;
    let chol = ridged
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { ridge })?;
    let l = chol.l();
    if (0..n).any(|i| !(l[(i, i)] > 0.0)) {
        return Err(Error::NotPositiveDefinite { ridge });
    }
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Ok((inv, l))
}

impl BackgroundModel {
    /// Estimate statistics from a pixel table. With `exclude_positives`,
    /// rows labelled 1 are left out.
    pub fn estimate(pixels: &PixelTable, exclude_positives: bool) -> Result<Self> {
        if exclude_positives {
            let bg = pixels.without_positives();
            Self::estimate_from(&bg)
        } else {
            Self::estimate_from(pixels)
        }
    }

    /// Estimate statistics from any repeatable pixel source.
    pub fn estimate_from(source: &dyn PixelSource) -> Result<Self> {
        let bands = source.bands();
        let moments = SampleMoments::compute(source)?;
        if moments.count <= bands {
            return Err(Error::InsufficientSamples {
                samples: moments.count,
                bands,
            });
        }
        Self::from_moments(moments, None)
    }

    /// Build a model from known moments. `ridge` overrides the default
    /// trace-scaled value.
    pub fn from_moments(moments: SampleMoments, ridge: Option<f64>) -> Result<Self> {
        let bands = moments.mean.len();
        if moments.covariance.shape() != (bands, bands)
            || moments.second_moment.shape() != (bands, bands)
        {
            return Err(Error::Dimension {
                what: "moment matrix size",
                expected: bands,
                got: moments.covariance.nrows(),
            });
        }
        let ridge = ridge.unwrap_or_else(|| default_ridge(&moments.covariance));
        if !(ridge.is_finite() && ridge > 0.0) {
            return Err(Error::invalid("ridge", ridge.to_string()));
        }
        let (cov_inverse, chol_l) = regularized_inverse(&moments.covariance, ridge)?;
        let (second_moment_inverse, _) = regularized_inverse(&moments.second_moment, ridge)?;
        let n = moments.count.max(2) as f64;
        let centered_second = &moments.covariance * ((n - 1.0) / n);
        let (centered_second_moment_inverse, _) = regularized_inverse(&centered_second, ridge)?;
        let whitener = chol_l
            .solve_lower_triangular(&DMatrix::identity(bands, bands))
            .ok_or(Error::NotPositiveDefinite { ridge })?;
        Ok(Self {
            mean: moments.mean,
            covariance: moments.covariance,
            second_moment: moments.second_moment,
            cov_inverse,
            second_moment_inverse,
            centered_second_moment_inverse,
            whitener,
            ridge,
            sample_count: moments.count,
        })
    }

    pub fn bands(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn second_moment(&self) -> &DMatrix<f64> {
        &self.second_moment
    }

    /// (Σ + εI)⁻¹
    pub fn cov_inverse(&self) -> &DMatrix<f64> {
        &self.cov_inverse
    }

    /// (R + εI)⁻¹
    pub fn second_moment_inverse(&self) -> &DMatrix<f64> {
        &self.second_moment_inverse
    }

    /// Inverse of the centered second moment (1/N) Σ (x − μ)(x − μ)ᵀ, ridged.
    pub fn centered_second_moment_inverse(&self) -> &DMatrix<f64> {
        &self.centered_second_moment_inverse
    }

    /// Lower-triangular W with WᵀW = (Σ + εI)⁻¹.
    pub fn whitener(&self) -> &DMatrix<f64> {
        &self.whitener
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    /// W (x − μ).
    pub fn whiten(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.bands() {
            return Err(Error::Dimension {
                what: "pixel length",
                expected: self.bands(),
                got: x.len(),
            });
        }
        let d = DVector::from_column_slice(x) - &self.mean;
        Ok((&self.whitener * d).iter().copied().collect())
    }

    /// Frobenius distance of inverse·matrix from the identity, for Σ and R.
    pub fn inverse_residuals(&self) -> (f64, f64) {
        let n = self.bands();
        let eye = DMatrix::<f64>::identity(n, n);
        let c = &self.covariance + &eye * self.ridge;
        let r = &self.second_moment + &eye * self.ridge;
        (
            (&self.cov_inverse * c - &eye).norm(),
            (&self.second_moment_inverse * r - &eye).norm(),
        )
    }

    /// Flat little-endian blob: L, N (u64), ε, then μ, Σ, R row-major f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let l = self.bands();
        let mut out = Vec::with_capacity(24 + 8 * (l + 2 * l * l));
        out.extend_from_slice(&(l as u64).to_le_bytes());
        out.extend_from_slice(&(self.sample_count as u64).to_le_bytes());
        out.extend_from_slice(&self.ridge.to_le_bytes());
        out.extend(self.mean.iter().flat_map(|v| v.to_le_bytes()));
        for m in [&self.covariance, &self.second_moment] {
            for i in 0..l {
                for j in 0..l {
                    out.extend_from_slice(&m[(i, j)].to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Model(format!("background blob: {msg}"));
        if bytes.len() < 24 {
            return Err(bad("truncated header"));
        }
        let word = |i: usize| -> [u8; 8] { bytes[i * 8..i * 8 + 8].try_into().unwrap() };
        let l = u64::from_le_bytes(word(0)) as usize;
        let n = u64::from_le_bytes(word(1)) as usize;
        let ridge = f64::from_le_bytes(word(2));
        let expected = 24 + 8 * (l + 2 * l * l);
        if l == 0 || bytes.len() != expected {
            return Err(bad(&format!("expected {expected} bytes, found {}", bytes.len())));
        }
        let f = |i: usize| f64::from_le_bytes(word(3 + i));
        let mean = DVector::from_fn(l, |i, _| f(i));
        let covariance = DMatrix::from_fn(l, l, |i, j| f(l + i * l + j));
        let second_moment = DMatrix::from_fn(l, l, |i, j| f(l + l * l + i * l + j));
        Self::from_moments(
            SampleMoments {
                count: n,
                mean,
                covariance,
                second_moment,
            },
            Some(ridge),
        )
    }
}

fn default_ridge(cov: &DMatrix<f64>) -> f64 {
    let l = cov.nrows() as f64;
    (RIDGE_SCALE * cov.trace() / l).max(RIDGE_FLOOR)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Region;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn table(rows: &[&[f64]]) -> PixelTable {
        let bands = rows[0].len();
        let spectra: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        let region = Region::whole("t", 1, rows.len()).unwrap();
        PixelTable::from_rows(region, bands, spectra, None, None).unwrap()
    }

    fn random_table(rng: &mut ChaCha8Rng, n: usize, bands: usize) -> PixelTable {
        let spectra: Vec<f64> = (0..n * bands)
            .map(|i| rng.sample::<f64, _>(StandardNormal) * (1.0 + (i % bands) as f64) + 3.0)
            .collect();
        PixelTable::from_rows(Region::whole("r", 1, n).unwrap(), bands, spectra, None, None).unwrap()
    }

    #[test]
    fn two_sample_covariance_uses_n_minus_one() {
        let m = SampleMoments::compute(&table(&[&[0.0, 0.0], &[2.0, 2.0]])).unwrap();
        assert_eq!(m.mean.as_slice(), &[1.0, 1.0]);
        assert_eq!(m.covariance, DMatrix::from_row_slice(2, 2, &[2.0, 2.0, 2.0, 2.0]));
    }

    #[test]
    fn second_moment_is_uncentered_over_n() {
        let m = SampleMoments::compute(&table(&[&[1.0, 0.0], &[0.0, 1.0]])).unwrap();
        assert_eq!(m.second_moment, DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]));
    }

    #[test]
    fn constant_pixels_fall_back_to_floor_ridge() {
        let rows: Vec<&[f64]> = vec![&[3.0, -1.0]; 5];
        let m = BackgroundModel::estimate(&table(&rows), false).unwrap();
        assert_eq!(m.covariance(), &DMatrix::zeros(2, 2));
        assert_eq!(m.ridge(), RIDGE_FLOOR);
        assert!((m.cov_inverse()[(0, 0)] - 1.0 / RIDGE_FLOOR).abs() < 1e-3);
        assert_eq!(m.cov_inverse()[(0, 1)], 0.0);
    }

    #[test]
    fn too_few_samples_is_an_error() {
        let rows: Vec<&[f64]> = vec![&[1.0, 2.0], &[2.0, 1.0]];
        assert!(matches!(
            BackgroundModel::estimate(&table(&rows), false),
            Err(Error::InsufficientSamples { samples: 2, bands: 2 })
        ));
        assert!(matches!(
            BackgroundModel::estimate(&table(&[&[f64::NAN, 1.0], &[0.0, 0.0], &[1.0, 1.0]]), false),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn exclude_positives_drops_labelled_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = random_table(&mut rng, 40, 3);
        let mut labels = vec![0u8; 40];
        labels[7] = 1;
        let labelled = PixelTable::from_rows(t.region().clone(), 3, t.spectra().to_vec(), Some(labels), None).unwrap();
        let all = BackgroundModel::estimate(&labelled, false).unwrap();
        let bg = BackgroundModel::estimate(&labelled, true).unwrap();
        assert_eq!(all.sample_count(), 40);
        assert_eq!(bg.sample_count(), 39);
    }

    #[test]
    fn whitening_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = BackgroundModel::estimate(&random_table(&mut rng, 50, 4), false).unwrap();
        let mu: Vec<f64> = m.mean().iter().copied().collect();
        assert!(m.whiten(&mu).unwrap().iter().all(|&v| v == 0.0));
        assert!(m.whiten(&[1.0]).is_err());

        let identity = SampleMoments {
            count: 10,
            mean: DVector::zeros(2),
            covariance: DMatrix::identity(2, 2),
            second_moment: DMatrix::identity(2, 2),
        };
        let m = BackgroundModel::from_moments(identity, Some(1e-15)).unwrap();
        let w = m.whiten(&[0.3, -2.0]).unwrap();
        assert!((w[0] - 0.3).abs() < 1e-12 && (w[1] + 2.0).abs() < 1e-12);

        let diag = SampleMoments {
            count: 10,
            mean: DVector::zeros(2),
            covariance: DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0])),
            second_moment: DMatrix::identity(2, 2),
        };
        let m = BackgroundModel::from_moments(diag, None).unwrap();
        let w = m.whiten(&[2.0, 1.0]).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-5 && (w[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn whitened_covariance_is_near_identity() {
        let bands = 6;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = DMatrix::from_fn(bands, bands, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = 10 * bands;
        let mut spectra = Vec::new();
        for _ in 0..n {
            let z = DVector::from_fn(bands, |_, _| rng.sample::<f64, _>(StandardNormal));
            spectra.extend((&a * z).iter().map(|v| v + 5.0));
        }
        let t = PixelTable::from_rows(Region::whole("g", 1, n).unwrap(), bands, spectra, None, None).unwrap();
        let m = BackgroundModel::estimate(&t, false).unwrap();
        let mut wt = Vec::new();
        for r in t.rows() {
            wt.extend(m.whiten(r).unwrap());
        }
        let wtable = PixelTable::from_rows(t.region().clone(), bands, wt, None, None).unwrap();
        let c = SampleMoments::compute(&wtable).unwrap().covariance;
        let dev = (c - DMatrix::<f64>::identity(bands, bands)).amax();
        assert!(dev < 0.2, "whitened covariance deviates by {dev}");
    }

    #[test]
    fn inverses_are_accurate_and_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = BackgroundModel::estimate(&random_table(&mut rng, 300, 20), false).unwrap();
        let (rc, rr) = m.inverse_residuals();
        assert!(rc < 1e-6 * 20.0 && rr < 1e-6 * 20.0, "{rc} {rr}");
        assert_eq!(m.covariance(), &m.covariance().transpose());
        assert_eq!(m.second_moment(), &m.second_moment().transpose());
    }

    #[test]
    fn moments_are_cross_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = random_table(&mut rng, 500, 7);
        let m = SampleMoments::compute(&t).unwrap();
        let n = m.count as f64;
        let implied = (&m.second_moment - &m.mean * m.mean.transpose()) * (n / (n - 1.0));
        assert!((implied - &m.covariance).amax() < 1e-10);
    }

    #[test]
    fn permutation_and_chunking_do_not_move_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let bands = 5;
        let n = 3 * BLOCK_PIXELS + 17;
        let t = random_table(&mut rng, n, bands);
        let base = SampleMoments::compute(&t).unwrap();

        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            idx.swap(i, rng.gen_range(0..=i));
        }
        let shuffled = SampleMoments::compute(&t.select(&idx)).unwrap();
        assert!((&base.mean - &shuffled.mean).amax() < 1e-12);
        assert!((&base.covariance - &shuffled.covariance).amax() < 1e-12);
        assert!((&base.second_moment - &shuffled.second_moment).amax() < 1e-12);

        // Strip-wise delivery must be bit-identical to one slice.
        struct Strips<'a>(&'a PixelTable, usize);
        impl PixelSource for Strips<'_> {
            fn bands(&self) -> usize {
                self.0.bands()
            }
            fn visit(&self, f: &mut dyn FnMut(&[f64]) -> Result<()>) -> Result<()> {
                for c in self.0.spectra().chunks(self.1 * self.0.bands()) {
                    f(c)?;
                }
                Ok(())
            }
        }
        for strip in [1, 333, 1024, 5000] {
            let s = SampleMoments::compute(&Strips(&t, strip)).unwrap();
            assert_eq!(s.mean, base.mean);
            assert_eq!(s.covariance, base.covariance);
            assert_eq!(s.second_moment, base.second_moment);
        }
    }

    #[test]
    fn blob_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = BackgroundModel::estimate(&random_table(&mut rng, 60, 4), false).unwrap();
        let bytes = m.to_bytes();
        assert_eq!(bytes.len(), 24 + 8 * (4 + 32));
        let back = BackgroundModel::from_bytes(&bytes).unwrap();
        assert_eq!(back.mean(), m.mean());
        assert_eq!(back.covariance(), m.covariance());
        assert_eq!(back.ridge(), m.ridge());
        assert_eq!(back.cov_inverse(), m.cov_inverse());
        assert!(BackgroundModel::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }
}
