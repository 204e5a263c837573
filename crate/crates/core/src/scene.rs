//! Named rectangular regions, ground-truth masks and flattened pixel tables.
//!
//! All region coordinates are absolute: offsets are measured from the
//! top-left pixel of the original acquisition, so a mask cropped to the
//! test region and a cube cropped to the same region line up exactly no
//! matter how many crop stages were chained to produce them.

use std::fmt;

use crate::envi::SpectralCube;
use crate::error::{Error, Result};

/// A named rectangle in absolute scene coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Region {
    pub name: String,
    pub line_offset: usize,
    pub sample_offset: usize,
    pub lines: usize,
    pub samples: usize,
}

impl Region {
    pub fn new(
        name: impl Into<String>,
        line_offset: usize,
        sample_offset: usize,
        lines: usize,
        samples: usize,
    ) -> Result<Self> {
        if lines == 0 || samples == 0 {
            return Err(Error::Config(format!(
                "region extents must be positive, got {lines}x{samples}"
            )));
        }
        Ok(Self {
            name: name.into(),
            line_offset,
            sample_offset,
            lines,
            samples,
        })
    }

    /// A region anchored at the scene origin.
    pub fn whole(name: impl Into<String>, lines: usize, samples: usize) -> Result<Self> {
        Self::new(name, 0, 0, lines, samples)
    }

    pub fn pixel_count(&self) -> usize {
        self.lines * self.samples
    }

    pub fn line_end(&self) -> usize {
        self.line_offset + self.lines
    }

    pub fn sample_end(&self) -> usize {
        self.sample_offset + self.samples
    }

    pub fn contains(&self, other: &Region) -> bool {
        other.line_offset >= self.line_offset
            && other.sample_offset >= self.sample_offset
            && other.line_end() <= self.line_end()
            && other.sample_end() <= self.sample_end()
    }

    pub fn contains_pixel(&self, line: usize, sample: usize) -> bool {
        (self.line_offset..self.line_end()).contains(&line)
            && (self.sample_offset..self.sample_end()).contains(&sample)
    }

    pub fn intersects(&self, other: &Region) -> bool {
        self.line_offset < other.line_end()
            && other.line_offset < self.line_end()
            && self.sample_offset < other.sample_end()
            && other.sample_offset < self.sample_end()
    }

    /// Same rectangle, ignoring the name.
    pub fn same_extent(&self, other: &Region) -> bool {
        self.line_offset == other.line_offset
            && self.sample_offset == other.sample_offset
            && self.lines == other.lines
            && self.samples == other.samples
    }

    pub fn renamed(&self, name: impl Into<String>) -> Region {
        Region {
            name: name.into(),
            ..self.clone()
        }
    }

    /// Position of `inner`'s top-left corner relative to `self`.
    pub(crate) fn relative_origin(&self, inner: &Region) -> Result<(usize, usize)> {
        if !self.contains(inner) {
            return Err(Error::OutOfBounds {
                window: inner.to_string(),
                lines: self.lines,
                samples: self.samples,
            });
        }
        Ok((
            inner.line_offset - self.line_offset,
            inner.sample_offset - self.sample_offset,
        ))
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}[{}+{}, {}+{}]",
            self.name, self.line_offset, self.lines, self.sample_offset, self.samples
        )
    }
}

/// Split `region` at `boundary_sample` (relative to the region) into a left
/// part named `left` and a right part named `right`.
pub fn split_named(
    region: &Region,
    boundary_sample: usize,
    left: &str,
    right: &str,
) -> Result<(Region, Region)> {
    if boundary_sample == 0 || boundary_sample >= region.samples {
        return Err(Error::InvalidSplit {
            boundary: boundary_sample,
            samples: region.samples,
        });
    }
    let l = Region {
        name: left.to_string(),
        line_offset: region.line_offset,
        sample_offset: region.sample_offset,
        lines: region.lines,
        samples: boundary_sample,
    };
    let r = Region {
        name: right.to_string(),
        line_offset: region.line_offset,
        sample_offset: region.sample_offset + boundary_sample,
        lines: region.lines,
        samples: region.samples - boundary_sample,
    };
    Ok((l, r))
}

/// Column split into a `train` region (left) and a `test` region (right).
pub fn split_train_test(region: &Region, boundary_sample: usize) -> Result<(Region, Region)> {
    split_named(region, boundary_sample, "train", "test")
}

/// Binary per-pixel labels: 1 target, 0 background.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthMask {
    region: Region,
    labels: Vec<u8>,
    positive_count: usize,
}

impl GroundTruthMask {
    pub fn new(region: Region, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != region.pixel_count() {
            return Err(Error::Dimension {
                what: "mask label count",
                expected: region.pixel_count(),
                got: labels.len(),
            });
        }
        let mut positive_count = 0;
        for (i, &v) in labels.iter().enumerate() {
            match v {
                0 => {}
                1 => positive_count += 1,
                _ => {
                    return Err(Error::InvalidLabel {
                        value: v,
                        line: region.line_offset + i / region.samples,
                        sample: region.sample_offset + i % region.samples,
                    })
                }
            }
        }
        Ok(Self {
            region,
            labels,
            positive_count,
        })
    }

    pub fn empty(region: Region) -> Self {
        let n = region.pixel_count();
        Self {
            region,
            labels: vec![0; n],
            positive_count: 0,
        }
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    /// Line-major labels.
    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn positive_count(&self) -> usize {
        self.positive_count
    }

    pub fn negative_count(&self) -> usize {
        self.labels.len() - self.positive_count
    }

    /// Label at absolute coordinates.
    pub fn get(&self, line: usize, sample: usize) -> Option<u8> {
        if !self.region.contains_pixel(line, sample) {
            return None;
        }
        let l = line - self.region.line_offset;
        let s = sample - self.region.sample_offset;
        Some(self.labels[l * self.region.samples + s])
    }

    pub fn crop(&self, region: &Region) -> Result<GroundTruthMask> {
        let (l0, s0) = self.region.relative_origin(region)?;
        let mut labels = Vec::with_capacity(region.pixel_count());
        for l in l0..l0 + region.lines {
            let row = l * self.region.samples;
            labels.extend_from_slice(&self.labels[row + s0..row + s0 + region.samples]);
        }
        let positive_count = labels.iter().filter(|&&v| v == 1).count();
        Ok(GroundTruthMask {
            region: region.clone(),
            labels,
            positive_count,
        })
    }

    /// Same labels under a new region name; extents must match.
    pub fn with_region(mut self, region: Region) -> Result<Self> {
        if region.lines != self.region.lines || region.samples != self.region.samples {
            return Err(Error::RegionMismatch(format!(
                "mask {} cannot be relabelled as {}",
                self.region, region
            )));
        }
        self.region = region;
        Ok(self)
    }
}

/// Flattened pixels of a region, line-major, with optional labels.
#[derive(Debug, Clone)]
pub struct PixelTable {
    bands: usize,
    spectra: Vec<f64>,
    labels: Option<Vec<u8>>,
    coords: Vec<(usize, usize)>,
    region: Region,
}

impl PixelTable {
    /// Build a table from raw rows. Coordinates are synthesized line-major
    /// inside `region` when `coords` is `None`.
    pub fn from_rows(
        region: Region,
        bands: usize,
        spectra: Vec<f64>,
        labels: Option<Vec<u8>>,
        coords: Option<Vec<(usize, usize)>>,
    ) -> Result<Self> {
        if bands == 0 || spectra.len() % bands != 0 {
            return Err(Error::Dimension {
                what: "spectra length not a multiple of bands",
                expected: bands,
                got: spectra.len(),
            });
        }
        let n = spectra.len() / bands;
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::Dimension {
                    what: "label count",
                    expected: n,
                    got: l.len(),
                });
            }
            if let Some(&bad) = l.iter().find(|&&v| v > 1) {
                return Err(Error::InvalidLabel {
                    value: bad,
                    line: 0,
                    sample: 0,
                });
            }
        }
        let coords = match coords {
            Some(c) => {
                if c.len() != n {
                    return Err(Error::Dimension {
                        what: "coordinate count",
                        expected: n,
                        got: c.len(),
                    });
                }
                c
            }
            None => (0..n)
                .map(|i| {
                    (
                        region.line_offset + i / region.samples,
                        region.sample_offset + i % region.samples,
                    )
                })
                .collect(),
        };
        Ok(Self {
            bands,
            spectra,
            labels,
            coords,
            region,
        })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn spectra(&self) -> &[f64] {
        &self.spectra
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.spectra[i * self.bands..(i + 1) * self.bands]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.spectra.chunks_exact(self.bands)
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    /// Absolute (line, sample) of every row.
    pub fn coords(&self) -> &[(usize, usize)] {
        &self.coords
    }

    pub fn positive_count(&self) -> usize {
        self.labels
            .as_ref()
            .map_or(0, |l| l.iter().filter(|&&v| v == 1).count())
    }

    /// Rows whose label is 0 (all rows when unlabelled).
    pub fn without_positives(&self) -> PixelTable {
        let Some(labels) = &self.labels else {
            return self.clone();
        };
        let mut spectra = Vec::with_capacity(self.spectra.len());
        let mut coords = Vec::new();
        let mut kept = Vec::new();
        for (i, &y) in labels.iter().enumerate() {
            if y == 0 {
                spectra.extend_from_slice(self.row(i));
                coords.push(self.coords[i]);
                kept.push(0);
            }
        }
        PixelTable {
            bands: self.bands,
            spectra,
            labels: Some(kept),
            coords,
            region: self.region.clone(),
        }
    }

    /// Rows at the given indices, in that order.
    pub fn select(&self, indices: &[usize]) -> PixelTable {
        let mut spectra = Vec::with_capacity(indices.len() * self.bands);
        for &i in indices {
            spectra.extend_from_slice(self.row(i));
        }
        PixelTable {
            bands: self.bands,
            spectra,
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            coords: indices.iter().map(|&i| self.coords[i]).collect(),
            region: self.region.clone(),
        }
    }
}

/// Crop `cube` to `region` (absolute coordinates), keeping every band.
pub fn crop(cube: &SpectralCube, region: &Region) -> Result<SpectralCube> {
    cube.crop(region)
}

/// Flatten a cube into a line-major pixel table, copying labels from `mask`.
pub fn flatten(cube: &SpectralCube, mask: Option<&GroundTruthMask>) -> Result<PixelTable> {
    let region = cube.region().clone();
    let labels = match mask {
        Some(m) => {
            if !m.region().same_extent(&region) {
                return Err(Error::RegionMismatch(format!(
                    "mask {} is not aligned with cube {}",
                    m.region(),
                    region
                )));
            }
            Some(m.labels().to_vec())
        }
        None => None,
    };
    PixelTable::from_rows(region, cube.bands(), cube.values().to_vec(), labels, None)
}

/// A parsed region preset file.
///
/// ```text
/// # name  line_offset  sample_offset  lines  samples
/// region full 0 0 1705 3461
/// region pfm1 0 0 500 1060
/// split pfm1 610 train test
/// ```
///
/// `split` derives two regions from an existing one at a column boundary.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegionPresets {
    regions: Vec<Region>,
}

impl RegionPresets {
    /// Layout of the PFM-1 benchmark: Full Region (1705x3461), PFM-1
    /// Region (500x1060) and its train/test split at sample 610.
    ///
    /// The offsets of these crops inside the original acquisition are not
    /// published, so they default to zero; override them with a preset file.
    pub fn pfm1_benchmark() -> Self {
        Self::parse(
            "region full 0 0 1705 3461\n\
             region pfm1 0 0 500 1060\n\
             split pfm1 610 train test\n",
        )
        .expect("built-in presets are valid")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut out = RegionPresets::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Parse(format!("preset line {}: `{}`", lineno + 1, raw.trim()));
            let num = |s: &str| s.parse::<usize>().map_err(|_| bad());
            match fields.as_slice() {
                ["region", name, lo, so, l, s] => {
                    let r = Region::new(*name, num(lo)?, num(so)?, num(l)?, num(s)?)?;
                    out.insert(r)?;
                }
                ["split", parent, boundary, left, right] => {
                    let parent = out
                        .get(parent)
                        .ok_or_else(|| Error::Config(format!("split of unknown region `{parent}`")))?
                        .clone();
                    let (a, b) = split_named(&parent, num(boundary)?, left, right)?;
                    out.insert(a)?;
                    out.insert(b)?;
                }
                _ => return Err(bad()),
            }
        }
        Ok(out)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# name  line_offset  sample_offset  lines  samples\n");
        for r in &self.regions {
            s.push_str(&format!(
                "region {} {} {} {} {}\n",
                r.name, r.line_offset, r.sample_offset, r.lines, r.samples
            ));
        }
        s
    }

    pub fn insert(&mut self, region: Region) -> Result<()> {
        if self.get(&region.name).is_some() {
            return Err(Error::Config(format!("duplicate region `{}`", region.name)));
        }
        self.regions.push(region);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Region> {
        self.regions.iter().find(|r| r.name == name)
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pfm1() -> Region {
        Region::new("pfm1", 0, 0, 500, 1060).unwrap()
    }

    #[test]
    fn benchmark_split_dimensions() {
        let (train, test) = split_train_test(&pfm1(), 610).unwrap();
        assert_eq!((train.lines, train.samples), (500, 610));
        assert_eq!((test.lines, test.samples), (500, 450));
        assert_eq!(test.sample_offset, 610);
    }

    #[test]
    fn minimal_and_degenerate_splits() {
        let (l, r) = split_train_test(&pfm1(), 1).unwrap();
        assert_eq!((l.samples, r.samples), (1, 1059));
        assert!(matches!(
            split_train_test(&pfm1(), 1060),
            Err(Error::InvalidSplit { boundary: 1060, .. })
        ));
        assert!(split_train_test(&pfm1(), 0).is_err());
    }

    #[test]
    fn presets_match_benchmark_layout() {
        let p = RegionPresets::pfm1_benchmark();
        let full = p.get("full").unwrap();
        assert_eq!((full.lines, full.samples), (1705, 3461));
        let pf = p.get("pfm1").unwrap();
        assert_eq!((pf.lines, pf.samples), (500, 1060));
        assert_eq!(p.get("train").unwrap().samples, 610);
        assert_eq!(p.get("test").unwrap().samples, 450);
        let round = RegionPresets::parse(&p.to_text()).unwrap();
        assert_eq!(round, p);
    }

    #[test]
    fn preset_errors() {
        assert!(RegionPresets::parse("region a 0 0 x 3").is_err());
        assert!(RegionPresets::parse("split nope 3 a b").is_err());
        assert!(RegionPresets::parse("region a 0 0 2 2\nregion a 0 0 2 2").is_err());
        assert!(RegionPresets::parse("region a 0 0 0 2").is_err());
    }

    #[test]
    fn mask_counts_and_crop() {
        let r = Region::whole("m", 2, 3).unwrap();
        let m = GroundTruthMask::new(r, vec![0, 1, 0, 1, 1, 0]).unwrap();
        assert_eq!(m.positive_count(), 3);
        let sub = Region::new("s", 1, 1, 1, 2).unwrap();
        let c = m.crop(&sub).unwrap();
        assert_eq!(c.labels(), &[1, 0]);
        assert_eq!(c.positive_count(), 1);
        assert_eq!(m.get(1, 0), Some(1));
        assert_eq!(m.get(2, 0), None);
        assert!(GroundTruthMask::new(m.region().clone(), vec![0, 2, 0, 0, 0, 0]).is_err());
    }

    proptest! {
        #[test]
        fn split_is_disjoint_and_covering(samples in 2usize..2000, lines in 1usize..50,
                                          lo in 0usize..100, so in 0usize..100, frac in 0.0f64..1.0) {
            let parent = Region::new("p", lo, so, lines, samples).unwrap();
            let boundary = 1 + ((samples - 2) as f64 * frac) as usize;
            let (a, b) = split_train_test(&parent, boundary).unwrap();
            prop_assert!(!a.intersects(&b));
            prop_assert!(parent.contains(&a) && parent.contains(&b));
            prop_assert_eq!(a.pixel_count() + b.pixel_count(), parent.pixel_count());
            prop_assert_eq!(a.sample_end(), b.sample_offset);
        }
    }
}
