//! ENVI header parsing and raw raster I/O.
//!
//! Cubes are held in memory band-interleaved-by-pixel as `f64`, whatever the
//! file stores. Integer types are converted verbatim: no gain, no offset.
//! Whether the values are radiance or reflectance is not interpreted.

use std::fs::{self, File};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use crate::background::Signature;
use crate::detectors::{Method, ScoreMap};
use crate::error::{Error, Result};
use crate::scene::{GroundTruthMask, Region};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataType {
    U8,
    I16,
    F32,
    F64,
    U16,
}

impl DataType {
    pub fn from_code(code: u32) -> Result<Self> {
        Ok(match code {
            1 => DataType::U8,
            2 => DataType::I16,
            4 => DataType::F32,
            5 => DataType::F64,
            12 => DataType::U16,
            other => return Err(Error::UnsupportedDataType(other)),
        })
    }

    pub fn code(self) -> u32 {
        match self {
            DataType::U8 => 1,
            DataType::I16 => 2,
            DataType::F32 => 4,
            DataType::F64 => 5,
            DataType::U16 => 12,
        }
    }

    pub fn size(self) -> usize {
        match self {
            DataType::U8 => 1,
            DataType::I16 | DataType::U16 => 2,
            DataType::F32 => 4,
            DataType::F64 => 8,
        }
    }

    fn decode(self, b: &[u8], order: ByteOrder) -> f64 {
        macro_rules! num {
            ($t:ty, $n:expr) => {{
                let arr: [u8; $n] = b[..$n].try_into().unwrap();
                match order {
                    ByteOrder::Little => <$t>::from_le_bytes(arr) as f64,
                    ByteOrder::Big => <$t>::from_be_bytes(arr) as f64,
                }
            }};
        }
        match self {
            DataType::U8 => b[0] as f64,
            DataType::I16 => num!(i16, 2),
            DataType::U16 => num!(u16, 2),
            DataType::F32 => num!(f32, 4),
            DataType::F64 => num!(f64, 8),
        }
    }

    fn encode(self, v: f64, order: ByteOrder, out: &mut Vec<u8>) {
        macro_rules! put {
            ($x:expr) => {
                match order {
                    ByteOrder::Little => out.extend_from_slice(&$x.to_le_bytes()),
                    ByteOrder::Big => out.extend_from_slice(&$x.to_be_bytes()),
                }
            };
        }
        // `as` saturates for out-of-range integers.
        match self {
            DataType::U8 => out.push(v as u8),
            DataType::I16 => put!(v as i16),
            DataType::U16 => put!(v as u16),
            DataType::F32 => put!(v as f32),
            DataType::F64 => put!(v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interleave {
    Bsq,
    Bil,
    Bip,
}

impl Interleave {
    pub const ALL: [Interleave; 3] = [Interleave::Bsq, Interleave::Bil, Interleave::Bip];

    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bsq" => Some(Interleave::Bsq),
            "bil" => Some(Interleave::Bil),
            "bip" => Some(Interleave::Bip),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Interleave::Bsq => "bsq",
            Interleave::Bil => "bil",
            Interleave::Bip => "bip",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ByteOrder {
    Little,
    Big,
}

impl ByteOrder {
    fn code(self) -> u8 {
        match self {
            ByteOrder::Little => 0,
            ByteOrder::Big => 1,
        }
    }
}

/// Parsed ENVI header. Keys this type does not model are kept verbatim in
/// `extra` (original spelling and order) and written back unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct EnviHeader {
    pub samples: usize,
    pub lines: usize,
    pub bands: usize,
    pub data_type: DataType,
    pub interleave: Interleave,
    pub byte_order: ByteOrder,
    pub header_offset: u64,
    pub wavelengths: Option<Vec<f64>>,
    pub extra: Vec<(String, String)>,
}

fn normalize_key(k: &str) -> String {
    k.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_ascii_lowercase()
}

fn parse_list(key: &str, value: &str) -> Result<Vec<String>> {
    let v = value.trim();
    let inner = v
        .strip_prefix('{')
        .and_then(|s| s.strip_suffix('}'))
        .ok_or_else(|| Error::MalformedList(key.to_string()))?;
    if inner.contains('{') || inner.contains('}') {
        return Err(Error::MalformedList(key.to_string()));
    }
    Ok(inner
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect())
}

impl EnviHeader {
    /// A BSQ little-endian header with no optional keys.
    pub fn new(samples: usize, lines: usize, bands: usize, data_type: DataType) -> Self {
        Self {
            samples,
            lines,
            bands,
            data_type,
            interleave: Interleave::Bsq,
            byte_order: ByteOrder::Little,
            header_offset: 0,
            wavelengths: None,
            extra: Vec::new(),
        }
    }

    /// Parse header text: `key = value` lines, with `{...}` lists that may
    /// span several lines. Keys are matched case-insensitively.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<(String, String)> = Vec::new();
        let mut lines = text.lines();
        while let Some(line) = lines.next() {
            let t = line.trim();
            if t.is_empty() || t.eq_ignore_ascii_case("envi") || t.starts_with(';') {
                continue;
            }
            let Some((k, v)) = t.split_once('=') else {
                return Err(Error::Parse(format!("header line without `=`: `{t}`")));
            };
            let key = k.trim().to_string();
            let mut value = v.trim().to_string();
            if value.starts_with('{') {
                while !value.contains('}') {
                    match lines.next() {
                        Some(more) => {
                            value.push('\n');
                            value.push_str(more.trim_end());
                        }
                        None => return Err(Error::MalformedList(key)),
                    }
                }
                if !value.trim_end().ends_with('}') {
                    return Err(Error::MalformedList(key));
                }
            }
            entries.push((key, value));
        }

        let find = |name: &'static str| -> Option<&str> {
            entries
                .iter()
                .rev()
                .find(|(k, _)| normalize_key(k) == name)
                .map(|(_, v)| v.as_str())
        };
        let req = |name: &'static str| find(name).ok_or(Error::MissingKey(name));
        let uint = |name: &'static str| -> Result<usize> {
            let v = req(name)?;
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::invalid(name, v))
        };

        let samples = uint("samples")?;
        let lines_n = uint("lines")?;
        let bands = uint("bands")?;
        for (name, v) in [("samples", samples), ("lines", lines_n), ("bands", bands)] {
            if v == 0 {
                return Err(Error::invalid(name, "0"));
            }
        }
        let dt_raw = req("data type")?;
        let dt_code: u32 = dt_raw
            .trim()
            .parse()
            .map_err(|_| Error::invalid("data type", dt_raw))?;
        let data_type = DataType::from_code(dt_code)?;
        let il_raw = req("interleave")?;
        let interleave =
            Interleave::parse(il_raw).ok_or_else(|| Error::invalid("interleave", il_raw))?;
        let bo_raw = req("byte order")?;
        let byte_order = match bo_raw.trim() {
            "0" => ByteOrder::Little,
            "1" => ByteOrder::Big,
            _ => return Err(Error::invalid("byte order", bo_raw)),
        };
        let header_offset = match find("header offset") {
            Some(v) => v
                .trim()
                .parse::<u64>()
                .map_err(|_| Error::invalid("header offset", v))?,
            None => 0,
        };
        let wavelengths = match find("wavelength") {
            Some(v) => {
                let items = parse_list("wavelength", v)?;
                let wl = items
                    .iter()
                    .map(|s| s.parse::<f64>().map_err(|_| Error::invalid("wavelength", s.as_str())))
                    .collect::<Result<Vec<_>>>()?;
                if wl.len() != bands {
                    return Err(Error::invalid(
                        "wavelength",
                        format!("{} entries for {} bands", wl.len(), bands),
                    ));
                }
                if wl.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::invalid("wavelength", "not strictly increasing"));
                }
                Some(wl)
            }
            None => None,
        };

        const MODELLED: [&str; 9] = [
            "samples",
            "lines",
            "bands",
            "data type",
            "interleave",
            "byte order",
            "header offset",
            "wavelength",
            "file type",
        ];
        let mut extra = Vec::new();
        for (k, v) in entries {
            if !MODELLED.contains(&normalize_key(&k).as_str()) {
                if let Some(slot) = extra
                    .iter_mut()
                    .find(|(ek, _): &&mut (String, String)| normalize_key(ek) == normalize_key(&k))
                {
                    slot.1 = v;
                } else {
                    extra.push((k, v));
                }
            }
        }

        Ok(Self {
            samples,
            lines: lines_n,
            bands,
            data_type,
            interleave,
            byte_order,
            header_offset,
            wavelengths,
            extra,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("ENVI\n");
        s.push_str(&format!("samples = {}\n", self.samples));
        s.push_str(&format!("lines = {}\n", self.lines));
        s.push_str(&format!("bands = {}\n", self.bands));
        s.push_str(&format!("header offset = {}\n", self.header_offset));
        s.push_str("file type = ENVI Standard\n");
        s.push_str(&format!("data type = {}\n", self.data_type.code()));
        s.push_str(&format!("interleave = {}\n", self.interleave.as_str()));
        s.push_str(&format!("byte order = {}\n", self.byte_order.code()));
        if let Some(wl) = &self.wavelengths {
            let items: Vec<String> = wl.iter().map(|w| format!("{w}")).collect();
            s.push_str(&format!("wavelength = {{{}}}\n", items.join(", ")));
        }
        for (k, v) in &self.extra {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    pub fn element_count(&self) -> u64 {
        self.samples as u64 * self.lines as u64 * self.bands as u64
    }

    pub fn raster_size(&self) -> u64 {
        self.header_offset + self.element_count() * self.data_type.size() as u64
    }

    /// Value of an unmodelled key, matched case-insensitively.
    pub fn field(&self, key: &str) -> Option<&str> {
        let want = normalize_key(key);
        self.extra
            .iter()
            .find(|(k, _)| normalize_key(k) == want)
            .map(|(_, v)| v.as_str())
    }

    pub fn set_field(&mut self, key: &str, value: impl Into<String>) {
        let want = normalize_key(key);
        let value = value.into();
        match self.extra.iter_mut().find(|(k, _)| normalize_key(k) == want) {
            Some(slot) => slot.1 = value,
            None => self.extra.push((key.to_string(), value)),
        }
    }

    /// Where the file sits in the original acquisition, from the zero-based
    /// `y start` / `x start` keys (absent means the origin).
    pub fn origin(&self) -> Result<(usize, usize)> {
        let get = |k: &str| -> Result<usize> {
            match self.field(k) {
                None => Ok(0),
                Some(v) => v.trim().parse().map_err(|_| Error::invalid(k, v)),
            }
        };
        Ok((get("y start")?, get("x start")?))
    }

    pub fn set_origin(&mut self, line: usize, sample: usize) {
        self.set_field("y start", line.to_string());
        self.set_field("x start", sample.to_string());
    }

    /// The rectangle covered by this file, in absolute coordinates.
    pub fn region(&self, name: &str) -> Result<Region> {
        let (lo, so) = self.origin()?;
        Region::new(name, lo, so, self.lines, self.samples)
    }
}

/// Parse header text.
pub fn parse_header(text: &str) -> Result<EnviHeader> {
    EnviHeader::parse(text)
}

/// A hyperspectral cube held as band-interleaved-by-pixel `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCube {
    header: EnviHeader,
    region: Region,
    values: Vec<f64>,
    nonfinite: usize,
}

impl SpectralCube {
    /// Build a cube from BIP values covering `region`.
    pub fn from_bip(
        region: Region,
        bands: usize,
        values: Vec<f64>,
        wavelengths: Option<Vec<f64>>,
    ) -> Result<Self> {
        let expected = region.pixel_count() * bands;
        if bands == 0 || values.len() != expected {
            return Err(Error::Dimension {
                what: "cube value count",
                expected,
                got: values.len(),
            });
        }
        if let Some(wl) = &wavelengths {
            if wl.len() != bands {
                return Err(Error::Dimension {
                    what: "wavelength count",
                    expected: bands,
                    got: wl.len(),
                });
            }
        }
        let mut header = EnviHeader::new(region.samples, region.lines, bands, DataType::F64);
        header.interleave = Interleave::Bip;
        header.wavelengths = wavelengths;
        header.set_origin(region.line_offset, region.sample_offset);
        let nonfinite = values.iter().filter(|v| !v.is_finite()).count();
        Ok(Self {
            header,
            region,
            values,
            nonfinite,
        })
    }

    pub fn header(&self) -> &EnviHeader {
        &self.header
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn lines(&self) -> usize {
        self.region.lines
    }

    pub fn samples(&self) -> usize {
        self.region.samples
    }

    pub fn bands(&self) -> usize {
        self.header.bands
    }

    pub fn pixel_count(&self) -> usize {
        self.region.pixel_count()
    }

    pub fn wavelengths(&self) -> Option<&[f64]> {
        self.header.wavelengths.as_deref()
    }

    /// Number of NaN/Inf values found at load.
    pub fn nonfinite_count(&self) -> usize {
        self.nonfinite
    }

    /// All values, pixel spectra contiguous, pixels line-major.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Spectrum at cube-relative (line, sample).
    pub fn pixel(&self, line: usize, sample: usize) -> &[f64] {
        let b = self.bands();
        let i = line * self.samples() + sample;
        &self.values[i * b..(i + 1) * b]
    }

    pub fn value(&self, line: usize, sample: usize, band: usize) -> f64 {
        self.pixel(line, sample)[band]
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.region.name = name.into();
        self
    }

    /// Crop to an absolute region, keeping every band.
    pub fn crop(&self, region: &Region) -> Result<SpectralCube> {
        let (l0, s0) = self.region.relative_origin(region)?;
        let b = self.bands();
        let mut values = Vec::with_capacity(region.pixel_count() * b);
        for l in l0..l0 + region.lines {
            let start = (l * self.samples() + s0) * b;
            values.extend_from_slice(&self.values[start..start + region.samples * b]);
        }
        let mut header = self.header.clone();
        header.lines = region.lines;
        header.samples = region.samples;
        header.set_origin(region.line_offset, region.sample_offset);
        let nonfinite = values.iter().filter(|v| !v.is_finite()).count();
        Ok(SpectralCube {
            header,
            region: region.clone(),
            values,
            nonfinite,
        })
    }
}

/// Read a cube (or an absolute-coordinate window of it) from a raw raster.
///
/// Only the bytes covering the window are read, so large scenes can be
/// processed a strip at a time.
pub fn read_cube<R: Read + Seek>(
    header: &EnviHeader,
    raster: &mut R,
    window: Option<&Region>,
) -> Result<SpectralCube> {
    let found = raster.seek(SeekFrom::End(0))?;
    let expected = header.raster_size();
    if found != expected {
        return Err(Error::SizeMismatch { expected, found });
    }
    let file_region = header.region("cube")?;
    let window = window.cloned().unwrap_or_else(|| file_region.clone());
    let (l0, s0) = file_region.relative_origin(&window)?;

    let (nl, ns, nb) = (header.lines, header.samples, header.bands);
    let (wl, ws) = (window.lines, window.samples);
    let bpe = header.data_type.size();
    let dt = header.data_type;
    let order = header.byte_order;
    let base = header.header_offset;
    let mut out = vec![0.0f64; wl * ws * nb];

    let mut read_at = |offset_elems: u64, count: usize, buf: &mut Vec<u8>| -> Result<()> {
        buf.resize(count * bpe, 0);
        raster.seek(SeekFrom::Start(base + offset_elems * bpe as u64))?;
        raster.read_exact(buf)?;
        Ok(())
    };
    let mut buf = Vec::new();
    match header.interleave {
        Interleave::Bsq => {
            for b in 0..nb {
                for l in 0..wl {
                    let off = ((b * nl + l0 + l) * ns + s0) as u64;
                    read_at(off, ws, &mut buf)?;
                    for (s, chunk) in buf.chunks_exact(bpe).enumerate() {
                        out[(l * ws + s) * nb + b] = dt.decode(chunk, order);
                    }
                }
            }
        }
        Interleave::Bil => {
            for l in 0..wl {
                for b in 0..nb {
                    let off = (((l0 + l) * nb + b) * ns + s0) as u64;
                    read_at(off, ws, &mut buf)?;
                    for (s, chunk) in buf.chunks_exact(bpe).enumerate() {
                        out[(l * ws + s) * nb + b] = dt.decode(chunk, order);
                    }
                }
            }
        }
        Interleave::Bip => {
            for l in 0..wl {
                let off = (((l0 + l) * ns + s0) * nb) as u64;
                read_at(off, ws * nb, &mut buf)?;
                let row = &mut out[l * ws * nb..(l + 1) * ws * nb];
                for (v, chunk) in row.iter_mut().zip(buf.chunks_exact(bpe)) {
                    *v = dt.decode(chunk, order);
                }
            }
        }
    }

    let mut cube_header = header.clone();
    cube_header.lines = wl;
    cube_header.samples = ws;
    cube_header.header_offset = 0;
    cube_header.set_origin(window.line_offset, window.sample_offset);
    let nonfinite = out.iter().filter(|v| !v.is_finite()).count();
    Ok(SpectralCube {
        header: cube_header,
        region: window,
        values: out,
        nonfinite,
    })
}

/// Serialize a cube's values in the layout described by `header`
/// (interleave, byte order, data type). Dimensions must match the cube.
pub fn encode_cube(cube: &SpectralCube, header: &EnviHeader) -> Result<Vec<u8>> {
    if header.lines != cube.lines() || header.samples != cube.samples() || header.bands != cube.bands()
    {
        return Err(Error::RegionMismatch(format!(
            "header {}x{}x{} does not describe cube {}x{}x{}",
            header.lines,
            header.samples,
            header.bands,
            cube.lines(),
            cube.samples(),
            cube.bands()
        )));
    }
    let (nl, ns, nb) = (cube.lines(), cube.samples(), cube.bands());
    let mut out = vec![0u8; header.header_offset as usize];
    out.reserve(nl * ns * nb * header.data_type.size());
    let v = cube.values();
    let mut put = |x: f64| header.data_type.encode(x, header.byte_order, &mut out);
    match header.interleave {
        Interleave::Bip => v.iter().for_each(|&x| put(x)),
        Interleave::Bil => {
            for l in 0..nl {
                for b in 0..nb {
                    for s in 0..ns {
                        put(v[(l * ns + s) * nb + b]);
                    }
                }
            }
        }
        Interleave::Bsq => {
            for b in 0..nb {
                for p in 0..nl * ns {
                    put(v[p * nb + b]);
                }
            }
        }
    }
    Ok(out)
}

/// Write a cube as an ENVI header + raster pair using the layout in `layout`
/// (dimensions and origin are taken from the cube).
pub fn write_cube(
    cube: &SpectralCube,
    layout: &EnviHeader,
    header_path: &Path,
    raster_path: &Path,
) -> Result<()> {
    let mut header = layout.clone();
    header.lines = cube.lines();
    header.samples = cube.samples();
    header.bands = cube.bands();
    header.wavelengths = cube.wavelengths().map(|w| w.to_vec());
    header.set_origin(cube.region().line_offset, cube.region().sample_offset);
    let bytes = encode_cube(cube, &header)?;
    write_atomic(raster_path, &bytes)?;
    write_atomic(header_path, header.to_text().as_bytes())
}

/// Write `bytes` to `path` through a temporary sibling and a rename, so a
/// failed write never leaves a partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let res = (|| -> std::io::Result<()> {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if res.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    res.map_err(Error::from)
}

/// Header for a single-band float32 score map.
fn scoremap_header(map: &ScoreMap) -> EnviHeader {
    let r = map.region();
    let mut h = EnviHeader::new(r.samples, r.lines, 1, DataType::F32);
    h.set_origin(r.line_offset, r.sample_offset);
    h.set_field("band names", format!("{{{} score}}", map.method().as_str()));
    h.set_field("region name", r.name.clone());
    h.set_field("detector method", map.method().as_str());
    h.set_field("normalized", if map.is_normalized() { "1" } else { "0" });
    if let Some((lo, hi)) = map.raw_range() {
        h.set_field("raw min", format!("{lo:e}"));
        h.set_field("raw max", format!("{hi:e}"));
    }
    h
}

/// Encode a score map as little-endian float32 (the raster half of
/// [`write_scoremap`]).
pub fn encode_scoremap(map: &ScoreMap) -> Result<(EnviHeader, Vec<u8>)> {
    let r = map.region();
    if let Some(i) = map.scores().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteScore {
            line: r.line_offset + i / r.samples,
            sample: r.sample_offset + i % r.samples,
        });
    }
    let mut bytes = Vec::with_capacity(map.scores().len() * 4);
    for &v in map.scores() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok((scoremap_header(map), bytes))
}

/// Write a score map as an ENVI single-band float32 BSQ little-endian image.
/// Non-finite scores are rejected before anything touches the disk.
pub fn write_scoremap(map: &ScoreMap, header_path: &Path, raster_path: &Path) -> Result<()> {
    let (header, bytes) = encode_scoremap(map)?;
    write_atomic(raster_path, &bytes)?;
    write_atomic(header_path, header.to_text().as_bytes())
}

/// Read back a score map written by [`write_scoremap`].
pub fn read_scoremap<R: Read + Seek>(header: &EnviHeader, raster: &mut R) -> Result<ScoreMap> {
    if header.bands != 1 {
        return Err(Error::Dimension {
            what: "score map bands",
            expected: 1,
            got: header.bands,
        });
    }
    let name = header.field("region name").unwrap_or("scores").to_string();
    let cube = read_cube(header, raster, None)?;
    let region = cube.region().renamed(name);
    let method = match header.field("detector method") {
        Some(m) => Method::parse(m).ok_or_else(|| Error::invalid("detector method", m))?,
        None => return Err(Error::MissingKey("detector method")),
    };
    let normalized = header.field("normalized").map(str::trim) == Some("1");
    let parse_f = |k: &str| -> Result<Option<f64>> {
        header
            .field(k)
            .map(|v| v.trim().parse::<f64>().map_err(|_| Error::invalid(k, v)))
            .transpose()
    };
    let raw = match (parse_f("raw min")?, parse_f("raw max")?) {
        (Some(a), Some(b)) => Some((a, b)),
        _ => None,
    };
    ScoreMap::from_parts(region, method, cube.values().to_vec(), normalized, raw)
}

/// Read a byte mask (single band, data type 1, values in {0, 1}).
pub fn read_mask<R: Read + Seek>(header: &EnviHeader, raster: &mut R) -> Result<GroundTruthMask> {
    if header.bands != 1 || header.data_type != DataType::U8 {
        return Err(Error::NotAMask {
            bands: header.bands,
            data_type: header.data_type.code(),
        });
    }
    let cube = read_cube(header, raster, None)?;
    let labels: Vec<u8> = cube.values().iter().map(|&v| v as u8).collect();
    GroundTruthMask::new(cube.region().renamed("mask"), labels)
}

/// Write a byte mask with its origin recorded in the header.
pub fn write_mask(mask: &GroundTruthMask, header_path: &Path, raster_path: &Path) -> Result<()> {
    let r = mask.region();
    let mut h = EnviHeader::new(r.samples, r.lines, 1, DataType::U8);
    h.set_origin(r.line_offset, r.sample_offset);
    h.set_field("band names", "{target mask}");
    write_atomic(raster_path, mask.labels())?;
    write_atomic(header_path, h.to_text().as_bytes())
}

/// Parse a signature CSV: one value per line, or `wavelength,value` pairs.
/// Blank lines, `#` comments and a non-numeric first line are skipped.
pub fn parse_signature(text: &str, bands: usize, label: &str) -> Result<Signature> {
    let mut values = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let last = line.rsplit(',').next().map(str::trim).unwrap_or("");
        match last.parse::<f64>() {
            Ok(v) => values.push(v),
            Err(_) if values.is_empty() && i == 0 => continue,
            Err(_) => return Err(Error::Parse(format!("signature line {}: `{line}`", i + 1))),
        }
    }
    if values.len() != bands {
        return Err(Error::Dimension {
            what: "signature length",
            expected: bands,
            got: values.len(),
        });
    }
    Signature::new(values, label)
}

pub fn format_signature(sig: &Signature, wavelengths: Option<&[f64]>) -> String {
    let mut s = String::new();
    match wavelengths {
        Some(wl) => {
            s.push_str("wavelength,value\n");
            for (w, v) in wl.iter().zip(sig.values()) {
                s.push_str(&format!("{w},{v}\n"));
            }
        }
        None => {
            for v in sig.values() {
                s.push_str(&format!("{v}\n"));
            }
        }
    }
    s
}

/// Read a header file from disk.
pub fn read_header_file(path: &Path) -> Result<EnviHeader> {
    let text = fs::read_to_string(path)?;
    EnviHeader::parse(&text)
}

/// Locate the raster that belongs to a `.hdr` file: the same stem with no
/// extension or one of the usual raster extensions.
pub fn raster_path_for(header_path: &Path) -> Result<PathBuf> {
    let stem = header_path.with_extension("");
    let mut candidates = vec![stem.clone()];
    for ext in ["img", "dat", "raw", "bsq", "bil", "bip"] {
        candidates.push(stem.with_extension(ext));
    }
    candidates
        .into_iter()
        .find(|p| p.is_file() && p != header_path)
        .ok_or_else(|| {
            Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("no raster file next to {}", header_path.display()),
            ))
        })
}
