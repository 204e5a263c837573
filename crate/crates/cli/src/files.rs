use std::fmt;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use hsdetect::envi::{self, read_cube};
use hsdetect::{EnviHeader, GroundTruthMask, PixelSource, Region, RegionPresets, SpectralCube};

use crate::args::RegionArgs;

/// Lines per strip when streaming a cube from disk.
pub const STRIP_LINES: usize = 64;

/// A failure with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<hsdetect::Error> for CliError {
    fn from(e: hsdetect::Error) -> Self {
        Self {
            code: if e.is_validation() { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::validation(format!(
            "missing input file: {}",
            path.display()
        )))
    }
}

pub fn read_text(path: &Path) -> CliResult<String> {
    require_file(path)?;
    fs::read_to_string(path)
        .map_err(|e| CliError::runtime(format!("cannot read {}: {e}", path.display())))
}

pub fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    require_file(path)?;
    fs::read(path).map_err(|e| CliError::runtime(format!("cannot read {}: {e}", path.display())))
}

pub fn create_out_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))
}

fn with_path(path: &Path) -> impl Fn(hsdetect::Error) -> CliError + '_ {
    move |e| {
        let mut c = CliError::from(e);
        c.message = format!("{}: {}", path.display(), c.message);
        c
    }
}

/// A header + raster pair on disk, read window by window.
pub struct CubeFile {
    pub header: EnviHeader,
    pub raster: PathBuf,
}

impl CubeFile {
    pub fn open(header_path: &Path) -> CliResult<Self> {
        require_file(header_path)?;
        let header = envi::read_header_file(header_path).map_err(with_path(header_path))?;
        let raster = envi::raster_path_for(header_path).map_err(|e| {
            let mut c = CliError::from(e);
            c.code = 2;
            c
        })?;
        Ok(Self { header, raster })
    }

    /// Extent of the stored cube in absolute coordinates.
    pub fn extent(&self) -> CliResult<Region> {
        Ok(self.header.region("scene")?)
    }

    pub fn read(&self, window: &Region) -> CliResult<SpectralCube> {
        self.read_raw(window).map_err(with_path(&self.raster))
    }

    fn read_raw(&self, window: &Region) -> hsdetect::Result<SpectralCube> {
        let f = File::open(&self.raster)?;
        read_cube(&self.header, &mut BufReader::new(f), Some(window))
    }
}

/// Consecutive strips of at most [`STRIP_LINES`] lines covering `region`.
pub fn strips(region: &Region) -> Vec<Region> {
    (0..region.lines)
        .step_by(STRIP_LINES)
        .map(|l| {
            Region::new(
                region.name.clone(),
                region.line_offset + l,
                region.sample_offset,
                STRIP_LINES.min(region.lines - l),
                region.samples,
            )
            .expect("strip extents are positive")
        })
        .collect()
}

/// A region of a cube file visited strip by strip, optionally without the
/// pixels a mask marks as targets.
pub struct StripSource<'a> {
    pub file: &'a CubeFile,
    pub region: Region,
    pub exclude: Option<&'a GroundTruthMask>,
}

impl PixelSource for StripSource<'_> {
    fn bands(&self) -> usize {
        self.file.header.bands
    }

    fn visit(&self, f: &mut dyn FnMut(&[f64]) -> hsdetect::Result<()>) -> hsdetect::Result<()> {
        let mut kept = Vec::new();
        for strip in strips(&self.region) {
            let cube = self.file.read_raw(&strip)?;
            match self.exclude {
                None => f(cube.values())?,
                Some(mask) => {
                    kept.clear();
                    let b = cube.bands();
                    for (i, px) in cube.values().chunks_exact(b).enumerate() {
                        let line = strip.line_offset + i / strip.samples;
                        let sample = strip.sample_offset + i % strip.samples;
                        if mask.get(line, sample) != Some(1) {
                            kept.extend_from_slice(px);
                        }
                    }
                    f(&kept)?;
                }
            }
        }
        Ok(())
    }
}

pub fn read_mask_file(header_path: &Path) -> CliResult<GroundTruthMask> {
    let file = CubeFile::open(header_path)?;
    let f = File::open(&file.raster)
        .map_err(|e| CliError::runtime(format!("{}: {e}", file.raster.display())))?;
    envi::read_mask(&file.header, &mut BufReader::new(f)).map_err(with_path(header_path))
}

pub fn read_scoremap_file(header_path: &Path) -> CliResult<hsdetect::ScoreMap> {
    let file = CubeFile::open(header_path)?;
    let f = File::open(&file.raster)
        .map_err(|e| CliError::runtime(format!("{}: {e}", file.raster.display())))?;
    envi::read_scoremap(&file.header, &mut BufReader::new(f)).map_err(with_path(header_path))
}

fn presets(args: &RegionArgs) -> CliResult<RegionPresets> {
    match &args.regions {
        Some(path) => Ok(RegionPresets::parse(&read_text(path)?).map_err(with_path(path))?),
        None => Ok(RegionPresets::pfm1_benchmark()),
    }
}

/// Resolve a region name against the preset file (or the built-in
/// presets). `scene` is the whole stored cube.
pub fn named_region(args: &RegionArgs, name: &str, extent: &Region) -> CliResult<Region> {
    if name == "scene" {
        return Ok(extent.renamed("scene"));
    }
    presets(args)?
        .get(name)
        .cloned()
        .ok_or_else(|| CliError::validation(format!("unknown region `{name}`")))
}

/// The region selected by --window or --region, checked against the cube.
pub fn resolve_region(args: &RegionArgs, extent: &Region) -> CliResult<Region> {
    let region = if let Some(w) = &args.window {
        let parts: Vec<usize> = w
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|_| CliError::validation(format!("bad --window `{w}`")))?;
        match parts.as_slice() {
            [lo, so, l, s] => Region::new("window", *lo, *so, *l, *s)?,
            _ => return Err(CliError::validation(format!("bad --window `{w}`"))),
        }
    } else {
        named_region(args, args.region.as_deref().unwrap_or("scene"), extent)?
    };
    check_inside(&region, extent)?;
    Ok(region)
}

pub fn check_inside(region: &Region, extent: &Region) -> CliResult<()> {
    if extent.contains(region) {
        Ok(())
    } else {
        Err(CliError::validation(format!(
            "region {region} lies outside the cube extent {extent}"
        )))
    }
}

/// Append one line to `dir/runs.jsonl`, replacing the file atomically.
pub fn append_run_log(dir: &Path, line: &str) -> CliResult<()> {
    let path = dir.join("runs.jsonl");
    let mut text = if path.is_file() {
        fs::read_to_string(&path)
            .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?
    } else {
        String::new()
    };
    text.push_str(line);
    Ok(envi::write_atomic(&path, text.as_bytes())?)
}
