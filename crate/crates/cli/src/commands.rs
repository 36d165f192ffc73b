use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde_json::json;

use cellseg::metrics::overlap_counts;
use cellseg::{
    crop_manifest_csv, distance_map_with, has_instances, instance_segment, load_labels, load_raster, map_score,
    max_project, pcc, random_crops, save_labels, save_raster, summarize, synth_instances, BinaryMask, CropManifestRow,
    CropSpec, DistanceScale, Format, Grid, ImageRecord, LabelMap, OverlapPolicy, OverlapTable, PipelineConfig, Raster,
    SynthSpec, ZStack,
};

use crate::manifest::{read_manifest, ManifestRow, Prediction};
use crate::{defaults_note, CliError, CliResult, PipelineArgs};

/// Writes a line to stdout. A closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> CliResult {
    let mut out = io::stdout().lock();
    match writeln!(out, "{text}").and_then(|_| out.flush()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(CliError::io(format!("stdout: {e}"))),
        _ => Ok(()),
    }
}

fn print_json(value: &serde_json::Value) -> CliResult {
    emit(&value.to_string())
}

fn write_text(path: &Path, text: &str) -> CliResult {
    fs::write(path, text).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse::<Format>().map_err(|e| e.to_string())
}

/// Nonzero samples of any raster file form the mask.
fn load_mask(path: &Path) -> CliResult<BinaryMask> {
    let r = load_raster(path, Format::Auto)?;
    Ok(BinaryMask::from_fn(r.width(), r.height(), |x, y| r.get(x, y) != 0.0)?)
}

#[derive(Args, Debug)]
pub struct PostprocessArgs {
    /// Predicted distance map
    #[arg(long)]
    distance: PathBuf,
    /// Predicted semantic map, as logits
    #[arg(long)]
    semantic: PathBuf,
    /// Output instance label map (.ras stores u32, .png stores 16-bit)
    #[arg(long)]
    out: PathBuf,
    /// Output format: auto (from extension), png16 or ras
    #[arg(long, default_value = "auto", value_parser = parse_format)]
    format: Format,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

pub fn postprocess(args: &PostprocessArgs) -> CliResult {
    let cfg = args.pipeline.config()?;
    let dist = load_raster(&args.distance, Format::Auto)?;
    let semantic = load_raster(&args.semantic, Format::Auto)?;
    let labels = instance_segment(&dist, &semantic, &cfg)?;
    save_labels(&labels, &args.out, args.format)?;
    print_json(&json!({ "instances": labels.instance_count() }))?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    /// Mean precision over the IoU thresholds 0.50, 0.55, ..., 0.95 (10 values)
    Map,
    /// Foreground IoU; an empty union scores 1
    Iou,
    /// Pearson correlation of two rasters
    Pcc,
}

impl Metric {
    fn name(self) -> &'static str {
        match self {
            Metric::Map => "map",
            Metric::Iou => "iou",
            Metric::Pcc => "pcc",
        }
    }
}

#[derive(Args, Debug)]
#[command(after_help = concat!(defaults_note!(), "\n\nManifest CSV columns: image_id,gt,pred[,dist,semantic]. Leave pred empty to segment dist + semantic \
with the pipeline flags. Relative paths resolve against the manifest's directory."))]
pub struct EvaluateArgs {
    /// Ground truth file
    #[arg(long, required_unless_present = "manifest", conflicts_with = "manifest")]
    gt: Option<PathBuf>,
    /// Prediction file
    #[arg(long, required_unless_present = "manifest", conflicts_with = "manifest")]
    pred: Option<PathBuf>,
    /// Metric to compute; repeat for several in manifest mode [default: map, or map and iou with a manifest]
    #[arg(long, value_enum)]
    metric: Vec<Metric>,
    /// Evaluate every row of a manifest CSV and emit a full report
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Also write the JSON result to this file
    #[arg(long)]
    json: Option<PathBuf>,
    /// Write the manifest report as CSV to this file
    #[arg(long, requires = "manifest")]
    csv: Option<PathBuf>,
    /// Add dataset-pooled IoU (summed intersections over summed unions) to the report
    #[arg(long)]
    pooled: bool,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

pub fn evaluate(args: &EvaluateArgs) -> CliResult {
    match &args.manifest {
        Some(manifest) => evaluate_manifest(args, manifest),
        None => evaluate_pair(args),
    }
}

fn evaluate_pair(args: &EvaluateArgs) -> CliResult {
    let (Some(gt), Some(pred)) = (&args.gt, &args.pred) else {
        return Err(CliError::usage("--gt and --pred are required without --manifest"));
    };
    let metric = match args.metric.as_slice() {
        [] => Metric::Map,
        [m] => *m,
        _ => return Err(CliError::usage("give a single --metric without --manifest")),
    };
    let value = match metric {
        Metric::Map => map_score(&load_labels(gt, Format::Auto)?, &load_labels(pred, Format::Auto)?)?,
        Metric::Iou => cellseg::iou(&load_mask(gt)?, &load_mask(pred)?)?,
        Metric::Pcc => pcc(&load_raster(gt, Format::Auto)?, &load_raster(pred, Format::Auto)?)?,
    };
    let out = json!({ "metric": metric.name(), "value": value });
    if let Some(path) = &args.json {
        write_text(path, &format!("{out}\n"))?;
    }
    print_json(&out)?;
    Ok(())
}

struct RowResult {
    record: ImageRecord,
    /// Intersection and union pixel counts, when IoU was requested.
    overlap: Option<(u64, u64)>,
}

fn evaluate_row(row: &ManifestRow, metrics: &[Metric], cfg: &PipelineConfig) -> CliResult<RowResult> {
    let mut record = ImageRecord::new(row.image_id.clone());
    let mut overlap = None;
    let computed = match &row.pred {
        Prediction::Computed { dist, semantic } => {
            let dist = load_raster(dist, Format::Auto)?;
            let semantic = load_raster(semantic, Format::Auto)?;
            Some(instance_segment(&dist, &semantic, cfg)?)
        }
        Prediction::File(_) => None,
    };
    let pred_labels = || -> CliResult<LabelMap> {
        match (&computed, &row.pred) {
            (Some(l), _) => Ok(l.clone()),
            (None, Prediction::File(p)) => Ok(load_labels(p, Format::Auto)?),
            (None, Prediction::Computed { .. }) => unreachable!(),
        }
    };
    for metric in metrics {
        match metric {
            Metric::Map => {
                let table = OverlapTable::new(&load_labels(&row.gt, Format::Auto)?, &pred_labels()?)?;
                let precisions = table.precisions();
                record.map = Some(precisions.iter().sum::<f64>() / precisions.len() as f64);
                record = record.with_precisions(&precisions);
            }
            Metric::Iou => {
                let gt = load_mask(&row.gt)?;
                let pred = match (&computed, &row.pred) {
                    (Some(l), _) => l.foreground(),
                    (None, Prediction::File(p)) => load_mask(p)?,
                    (None, Prediction::Computed { .. }) => unreachable!(),
                };
                let (inter, union) = overlap_counts(&gt, &pred)?;
                record.iou = Some(cellseg::iou(&gt, &pred)?);
                overlap = Some((inter, union));
            }
            Metric::Pcc => {
                let Prediction::File(p) = &row.pred else {
                    return Err(CliError::usage(format!(
                        "row {}: pcc needs a pred raster, not a computed segmentation",
                        row.image_id
                    )));
                };
                record.pcc = Some(pcc(
                    &load_raster(&row.gt, Format::Auto)?,
                    &load_raster(p, Format::Auto)?,
                )?);
            }
        }
    }
    Ok(RowResult { record, overlap })
}

fn evaluate_manifest(args: &EvaluateArgs, manifest: &Path) -> CliResult {
    let cfg = args.pipeline.config()?;
    let mut metrics: Vec<Metric> = Vec::new();
    for m in &args.metric {
        if !metrics.contains(m) {
            metrics.push(*m);
        }
    }
    if metrics.is_empty() {
        metrics = vec![Metric::Map, Metric::Iou];
    }
    if args.pooled && !metrics.contains(&Metric::Iou) {
        metrics.push(Metric::Iou);
    }
    let rows = read_manifest(manifest)?;
    let results = rows
        .par_iter()
        .map(|row| {
            evaluate_row(row, &metrics, &cfg).map_err(|mut e| {
                e.message = format!("{}: {}", row.image_id, e.message);
                e
            })
        })
        .collect::<Vec<_>>();
    let mut records = Vec::with_capacity(results.len());
    let (mut inter, mut union) = (0u64, 0u64);
    for result in results {
        let result = result?;
        if let Some((i, u)) = result.overlap {
            inter += i;
            union += u;
        }
        records.push(result.record);
    }
    let mut report = summarize(records)?;
    if args.pooled {
        report.pooled_iou = Some(if union == 0 { 1.0 } else { inter as f64 / union as f64 });
    }
    let text = report.to_json()?;
    if let Some(path) = &args.json {
        write_text(path, &format!("{text}\n"))?;
    }
    if let Some(path) = &args.csv {
        write_text(path, &report.to_csv()?)?;
    }
    emit(&text)?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct DistmapArgs {
    /// Instance label map
    #[arg(long)]
    labels: PathBuf,
    /// Output distance raster (.ras keeps f32; .png requires integer distances)
    #[arg(long)]
    out: PathBuf,
    /// Scale each instance so its peak is 1
    #[arg(long)]
    normalize: bool,
}

pub fn distmap(args: &DistmapArgs) -> CliResult {
    let labels = load_labels(&args.labels, Format::Auto)?;
    let scale = if args.normalize {
        DistanceScale::UnitPerInstance
    } else {
        DistanceScale::Raw
    };
    let dist = distance_map_with(&labels, scale);
    save_raster(&dist, &args.out, Format::Auto)?;
    let peak = dist.samples().iter().copied().fold(0.0f32, f32::max);
    print_json(&json!({ "instances": labels.instance_count(), "max_distance": peak }))?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct ProjectArgs {
    /// Focal planes, all the same size
    #[arg(required = true)]
    planes: Vec<PathBuf>,
    /// Output projection
    #[arg(long)]
    out: PathBuf,
}

pub fn project(args: &ProjectArgs) -> CliResult {
    let planes = args
        .planes
        .par_iter()
        .map(|p| load_raster(p, Format::Auto))
        .collect::<cellseg::Result<Vec<Raster>>>()?;
    let stack = ZStack::new(planes)?;
    let projection = max_project(&stack);
    save_raster(&projection, &args.out, Format::Auto)?;
    print_json(&json!({ "planes": args.planes.len() }))?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct CropArgs {
    /// Image to crop
    #[arg(long)]
    image: PathBuf,
    /// Paired label map, cropped at the same offsets
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Directory receiving the crops (created if missing)
    #[arg(long)]
    out: PathBuf,
    /// Crop side length in pixels
    #[arg(long, default_value_t = cellseg::dataset::DEFAULT_CROP_SIZE)]
    size: usize,
    /// Crops per image
    #[arg(long, default_value_t = cellseg::dataset::DEFAULT_CROP_COUNT)]
    count: usize,
    /// RNG seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Numeric image id; crops of one image depend only on (seed, image id, crop index)
    #[arg(long, default_value_t = 0)]
    image_id: u64,
    /// Name used for output files and the manifest [default: image file stem]
    #[arg(long)]
    name: Option<String>,
    /// Skip the image when its label map has no instances
    #[arg(long, requires = "labels")]
    require_instances: bool,
}

fn crop_file(dir: &Path, name: &str, kind: &str, index: usize) -> PathBuf {
    dir.join(format!("{name}_{kind}_{index:03}.ras"))
}

pub fn crop(args: &CropArgs) -> CliResult {
    let spec = CropSpec {
        count: args.count,
        size: args.size,
        seed: args.seed,
    };
    let image = load_raster(&args.image, Format::Auto)?;
    let labels = match &args.labels {
        Some(p) => {
            let l = load_labels(p, Format::Auto)?;
            cellseg::raster::ensure_same_dims(&image, &l)?;
            Some(l)
        }
        None => None,
    };
    if args.require_instances && !labels.as_ref().is_some_and(has_instances) {
        eprintln!("skipping {}: label map has no instances", args.image.display());
        print_json(&json!({ "crops": 0, "skipped": true }))?;
        return Ok(());
    }
    let name = match &args.name {
        Some(n) => n.clone(),
        None => args
            .image
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| args.image_id.to_string()),
    };

    let image_crops = random_crops(&image, &spec, args.image_id)?;
    let label_crops = labels
        .as_ref()
        .map(|l| random_crops(l, &spec, args.image_id))
        .transpose()?;
    fs::create_dir_all(&args.out).map_err(|e| CliError::io(format!("{}: {e}", args.out.display())))?;

    image_crops.par_iter().try_for_each(|(offset, crop)| {
        save_raster(crop, crop_file(&args.out, &name, "image", offset.index), Format::Ras)
    })?;
    if let Some(crops) = &label_crops {
        crops.par_iter().try_for_each(|(offset, crop)| {
            save_labels(crop, crop_file(&args.out, &name, "labels", offset.index), Format::Ras)
        })?;
    }
    let rows: Vec<CropManifestRow> = image_crops
        .iter()
        .map(|(offset, _)| CropManifestRow::new(name.clone(), offset))
        .collect();
    write_text(&args.out.join(format!("{name}_crops.csv")), &crop_manifest_csv(&rows)?)?;
    print_json(&json!({ "crops": rows.len(), "skipped": false }))?;
    Ok(())
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PolicyArg {
    Touching,
    Disjoint,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Directory receiving labels.ras, distance.ras and semantic.ras
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 512)]
    width: usize,
    #[arg(long, default_value_t = 512)]
    height: usize,
    /// Number of cells to place
    #[arg(long, default_value_t = 30)]
    cells: usize,
    #[arg(long, default_value_t = 14.0)]
    radius_min: f64,
    #[arg(long, default_value_t = 22.0)]
    radius_max: f64,
    /// Lower bound on each cell's distance peak
    #[arg(long, default_value_t = 12.0)]
    min_peak: f64,
    /// Whether cells may share a boundary
    #[arg(long, value_enum, default_value = "touching")]
    policy: PolicyArg,
    /// RNG seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Magnitude of the saturated semantic logits
    #[arg(long, default_value_t = 40.0)]
    logit: f32,
}

pub fn synth(args: &SynthArgs) -> CliResult {
    let spec = SynthSpec {
        width: args.width,
        height: args.height,
        cells: args.cells,
        radius_min: args.radius_min,
        radius_max: args.radius_max,
        min_peak: args.min_peak,
        policy: match args.policy {
            PolicyArg::Touching => OverlapPolicy::TouchingAllowed,
            PolicyArg::Disjoint => OverlapPolicy::Disjoint,
        },
        seed: args.seed,
    };
    if !(args.logit.is_finite() && args.logit > 0.0) {
        return Err(CliError::usage(format!("--logit must be positive, got {}", args.logit)));
    }
    let sample = synth_instances(&spec)?;
    fs::create_dir_all(&args.out).map_err(|e| CliError::io(format!("{}: {e}", args.out.display())))?;
    save_labels(&sample.labels, args.out.join("labels.ras"), Format::Ras)?;
    save_raster(&sample.distance, args.out.join("distance.ras"), Format::Ras)?;
    save_raster(
        &sample.semantic.to_logits(args.logit),
        args.out.join("semantic.ras"),
        Format::Ras,
    )?;
    print_json(&json!({ "instances": sample.labels.instance_count() }))?;
    Ok(())
}
