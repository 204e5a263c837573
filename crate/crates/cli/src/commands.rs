use std::path::Path;

use hsdetect::detectors::{finish_map, CemVariant, Detector, RunReport};
use hsdetect::envi::{self, write_atomic};
use hsdetect::metrics::{self, curve_csv, log_grid, log_roc_resample, render_svg};
use hsdetect::nn::{self, PositiveWeight, SpectralNet, TrainConfig};
use hsdetect::scene::{flatten, split_train_test};
use hsdetect::synth::{self, SynthSpec};
use hsdetect::{BackgroundModel, DataType, EnviHeader, Method, RegionPresets, ScoreMap};
use serde::Serialize;

use crate::args::{
    ClassicalMethod, DetectArgs, EvalArgs, ReportArgs, ScoreNnArgs, SynthArgs, TrainArgs,
};
use crate::files::{
    append_run_log, create_out_dir, named_region, read_bytes, read_mask_file,
    read_scoremap_file, read_text, resolve_region, strips, CliError, CliResult, CubeFile,
    StripSource,
};
use crate::table::SummaryTable;

fn log(stage: &str, msg: impl AsRef<str>) {
    eprintln!("[{stage}] {}", msg.as_ref());
}

fn write_map(map: &ScoreMap, out: &Path) -> CliResult<String> {
    let stem = format!("{}_{}", map.region().name, map.method().as_str());
    envi::write_scoremap(
        map,
        &out.join(format!("{stem}.hdr")),
        &out.join(format!("{stem}.img")),
    )?;
    Ok(stem)
}

impl From<ClassicalMethod> for Method {
    fn from(m: ClassicalMethod) -> Self {
        match m {
            ClassicalMethod::Sam => Method::Sam,
            ClassicalMethod::Mf => Method::Mf,
            ClassicalMethod::Ace => Method::Ace,
            ClassicalMethod::Cem => Method::Cem,
        }
    }
}

pub fn detect(a: &DetectArgs) -> CliResult<()> {
    let method = Method::from(a.method);
    let file = CubeFile::open(&a.cube)?;
    let extent = file.extent()?;
    let label = a
        .signature
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let signature = envi::parse_signature(&read_text(&a.signature)?, file.header.bands, &label)
        .map_err(|e| CliError::validation(format!("{}: {e}", a.signature.display())))?;
    let region = resolve_region(&a.region, &extent)?;
    let mask = a.mask.as_deref().map(read_mask_file).transpose()?;
    create_out_dir(&a.out)?;

    let variant = if a.centered_cem {
        CemVariant::Centered
    } else {
        CemVariant::Uncentered
    };
    let model = if method.needs_background() {
        let bg_region = match &a.background_region {
            Some(name) => {
                let r = named_region(&a.region, name, &extent)?;
                crate::files::check_inside(&r, &extent)?;
                r
            }
            None => region.clone(),
        };
        let source = StripSource {
            file: &file,
            region: bg_region.clone(),
            exclude: if a.exclude_positives { mask.as_ref() } else { None },
        };
        let m = BackgroundModel::estimate_from(&source)?;
        log(
            "detect",
            format!(
                "background statistics over {bg_region}: {} pixels, ridge {:e}",
                m.sample_count(),
                m.ridge()
            ),
        );
        Some(m)
    } else {
        None
    };

    let detector = Detector::prepare(method, &signature, model.as_ref(), variant)?;
    let mut raw = vec![0.0; region.pixel_count()];
    let mut dead = 0;
    let mut at = 0;
    for strip in strips(&region) {
        let cube = file.read(&strip)?;
        let n = strip.pixel_count();
        dead += detector.score_pixels(cube.values(), &mut raw[at..at + n])?;
        at += n;
    }
    let map = finish_map(region, method, raw, dead)?;
    let stem = write_map(&map, &a.out)?;
    let report = RunReport::new(
        &map,
        detector.cem_variant(),
        model.as_ref(),
        a.exclude_positives,
    );
    append_run_log(&a.out, &report.to_json_line())?;
    log(
        "detect",
        format!(
            "{} on {}: wrote {stem}.hdr ({} dead pixels)",
            method.as_str(),
            map.region(),
            map.dead_pixels()
        ),
    );
    Ok(())
}

pub fn train_nn(a: &TrainArgs, seed: u64, parallel: bool) -> CliResult<()> {
    let positive_weight = match a.positive_weight.trim() {
        "auto" => PositiveWeight::Auto,
        w => PositiveWeight::Fixed(w.parse::<f64>().map_err(|_| {
            CliError::validation(format!("bad --positive-weight `{w}`"))
        })?),
    };
    let file = CubeFile::open(&a.cube)?;
    let extent = file.extent()?;
    let region = resolve_region(&a.region, &extent)?;
    let mask = read_mask_file(&a.mask)?.crop(&region)?;
    create_out_dir(&a.out)?;

    let cube = file.read(&region)?;
    let pixels = flatten(&cube, Some(&mask))?;
    log(
        "train-nn",
        format!(
            "{} pixels from {region} ({} positive)",
            pixels.len(),
            pixels.positive_count()
        ),
    );
    let config = TrainConfig {
        epochs: a.epochs,
        learning_rate: a.learning_rate,
        batch_size: a.batch_size,
        positive_weight,
        seed,
        standardize: !a.no_standardize,
        hidden1: a.hidden1,
        hidden2: a.hidden2,
        parallel,
        ..TrainConfig::default()
    };
    let outcome = nn::train(&pixels, &config)?;
    write_atomic(&a.out.join("nn_model.bin"), &outcome.net.to_bytes()?)?;
    write_atomic(&a.out.join("nn_loss.csv"), outcome.loss_csv().as_bytes())?;
    log(
        "train-nn",
        format!(
            "{} epochs, final mean loss {:.6}, positive weight {}",
            outcome.epoch_losses.len(),
            outcome.epoch_losses.last().copied().unwrap_or(f64::NAN),
            outcome.positive_weight
        ),
    );
    Ok(())
}

pub fn score_nn(a: &ScoreNnArgs) -> CliResult<()> {
    let net = SpectralNet::from_bytes(&read_bytes(&a.model)?)
        .map_err(|e| CliError::validation(format!("{}: {e}", a.model.display())))?;
    let file = CubeFile::open(&a.cube)?;
    if net.bands() != file.header.bands {
        return Err(CliError::validation(format!(
            "model expects {} bands but {} has {}",
            net.bands(),
            a.cube.display(),
            file.header.bands
        )));
    }
    let extent = file.extent()?;
    let region = resolve_region(&a.region, &extent)?;
    create_out_dir(&a.out)?;

    let mut scores = Vec::with_capacity(region.pixel_count());
    for strip in strips(&region) {
        let cube = file.read(&strip)?;
        scores.extend(nn::score_region(&cube, &net)?.scores());
    }
    let map = ScoreMap::new(region, Method::Nn, scores)?;
    let stem = write_map(&map, &a.out)?;
    append_run_log(&a.out, &RunReport::new(&map, None, None, false).to_json_line())?;
    log("score-nn", format!("wrote {stem}.hdr"));
    Ok(())
}

pub fn eval(a: &EvalArgs) -> CliResult<()> {
    if !(a.grid_min > 0.0 && a.grid_min < 1.0) || a.grid_points < 2 {
        return Err(CliError::validation(
            "--grid-min must lie in (0, 1) and --grid-points be at least 2",
        ));
    }
    let map = read_scoremap_file(&a.scores)?;
    let mask = read_mask_file(&a.mask)?.crop(map.region())?;
    create_out_dir(&a.out)?;
    let ev = metrics::evaluate(&map, &mask)?;
    let log_roc = log_roc_resample(&ev.roc, &log_grid(a.grid_min, a.grid_points))?;

    let stem = a
        .scores
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scores".into());
    let out = |suffix: &str| a.out.join(format!("{stem}_{suffix}"));
    write_atomic(&out("roc.csv"), curve_csv(&ev.roc, "fpr", "tpr").as_bytes())?;
    write_atomic(&out("pr.csv"), curve_csv(&ev.pr, "recall", "precision").as_bytes())?;
    write_atomic(&out("roc_log.csv"), curve_csv(&log_roc, "fpr", "tpr").as_bytes())?;
    let mut summary = serde_json::to_string_pretty(&ev.summary)
        .map_err(|e| CliError::runtime(e.to_string()))?;
    summary.push('\n');
    write_atomic(&out("summary.json"), summary.as_bytes())?;
    if a.svg {
        let name = ev.summary.method.as_str();
        let roc = render_svg(&[(name, &ev.roc)], &format!("ROC {stem}"), "FPR", "TPR", false);
        let pr = render_svg(&[(name, &ev.pr)], &format!("PR {stem}"), "Recall", "Precision", false);
        write_atomic(&out("roc.svg"), roc.as_bytes())?;
        write_atomic(&out("pr.svg"), pr.as_bytes())?;
    }
    log(
        "eval",
        format!(
            "{stem}: AUC {:.6}, AP {:.6} ({} positives, {} negatives)",
            ev.summary.auc, ev.summary.ap, ev.summary.positives, ev.summary.negatives
        ),
    );
    Ok(())
}

#[derive(Serialize)]
struct SynthRecord {
    lines: usize,
    samples: usize,
    bands: usize,
    seed: u64,
    targets: usize,
    abundance: f64,
    deflection: f64,
    noise: f64,
    contamination: bool,
    split: usize,
}

pub fn synth(a: &SynthArgs, seed: u64) -> CliResult<()> {
    if !(a.deflection > 0.0 && a.deflection.is_finite()) {
        return Err(CliError::validation("--deflection must be positive"));
    }
    let split = a.split.unwrap_or(a.samples / 2);
    let mut spec = SynthSpec::new(a.lines, a.samples, a.bands, seed);
    spec.noise_floor = a.noise;
    spec.contamination = a.contamination;
    spec.plants = synth::random_plants(a.lines, a.samples, a.targets, (1.0, 1.0), seed)?;
    let abundance = synth::abundance_for_deflection(&spec, a.deflection)?;
    spec.plants.iter_mut().for_each(|p| p.abundance = abundance);
    let scene = synth::generate(&spec)?;
    let full = scene.cube.region().renamed("full");
    let (train, test) = split_train_test(&full, split)?;
    let mut presets = RegionPresets::default();
    for r in [full, train, test] {
        presets.insert(r)?;
    }

    create_out_dir(&a.out)?;
    let layout = EnviHeader::new(a.samples, a.lines, a.bands, DataType::F32);
    envi::write_cube(
        &scene.cube,
        &layout,
        &a.out.join("cube.hdr"),
        &a.out.join("cube.img"),
    )?;
    envi::write_mask(&scene.mask, &a.out.join("mask.hdr"), &a.out.join("mask.img"))?;
    write_atomic(
        &a.out.join("signature.csv"),
        envi::format_signature(&scene.signature, scene.cube.wavelengths()).as_bytes(),
    )?;
    write_atomic(&a.out.join("regions.txt"), presets.to_text().as_bytes())?;
    let record = SynthRecord {
        lines: a.lines,
        samples: a.samples,
        bands: a.bands,
        seed,
        targets: a.targets,
        abundance,
        deflection: synth::snr_of(&spec)?,
        noise: a.noise,
        contamination: a.contamination,
        split,
    };
    let mut json =
        serde_json::to_string_pretty(&record).map_err(|e| CliError::runtime(e.to_string()))?;
    json.push('\n');
    write_atomic(&a.out.join("synth.json"), json.as_bytes())?;
    if record.deflection < a.deflection * (1.0 - 1e-9) {
        eprintln!(
            "warning: pure target pixels only reach deflection {:.3} against this background",
            record.deflection
        );
    }
    log(
        "synth",
        format!(
            "{}x{}x{} scene, {} targets at abundance {abundance:.4} (deflection {:.3})",
            a.lines, a.samples, a.bands, a.targets, record.deflection
        ),
    );
    Ok(())
}

pub fn report(a: &ReportArgs) -> CliResult<()> {
    let mut table = SummaryTable::default();
    for path in &a.summaries {
        let summary: metrics::EvalSummary = serde_json::from_str(&read_text(path)?)
            .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        if let Some(previous) = table.insert(summary) {
            eprintln!(
                "warning: {} replaces an earlier {} summary for region {}",
                path.display(),
                previous.method.as_str(),
                previous.region
            );
        }
    }
    print!("{}", table.to_text());
    if let Some(csv) = &a.csv {
        write_atomic(csv, table.to_csv().as_bytes())?;
    }
    Ok(())
}
