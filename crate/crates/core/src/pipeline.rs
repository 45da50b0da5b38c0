//! End-to-end processing of a frame sequence: detection, segmentation,
//! tracking and filtering, with results written atomically.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basins::{extract_basins, find_critical_points, significant_minima, BasinMap};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::gravity::{build_kernels, fields, force_field, GravityKernelSet};
use crate::image::{normalize, Image2D, LabelMap, Vec2};
use crate::io::{
    load_frame, save_image_u16_normalized, save_label_map, save_rgb_png, SequenceMeta,
};
use crate::overlay::render_overlay;
use crate::preprocess::{kuwahara_anisotropic, log_brighten};
use crate::segmentation::{enhance, segment_enhanced, CellMaskSet};
use crate::tracking::{
    filter_tracklets, track_sequence, write_res_track, TrackFrame, TrackGraph, TrackRecord,
};

/// Seconds spent per stage, summed over frames.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub load: f64,
    pub preprocess: f64,
    pub gravity: f64,
    pub basins: f64,
    pub segmentation: f64,
    pub tracking: f64,
    pub filtering: f64,
    /// Wall-clock time of the whole run.
    pub total: f64,
}

impl StageTimings {
    fn add_frame(&mut self, o: &StageTimings) {
        self.load += o.load;
        self.preprocess += o.preprocess;
        self.gravity += o.gravity;
        self.basins += o.basins;
        self.segmentation += o.segmentation;
    }
}

/// Summary of one run, written next to the outputs as `run_report.toml`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub detections_per_frame: Vec<usize>,
    pub tracklets_before_filter: usize,
    pub tracklets: usize,
    pub recovered_cells: usize,
    pub timings: StageTimings,
}

/// Detection and segmentation results for one frame.
#[derive(Debug, Clone)]
pub struct FrameResult {
    pub minima: Vec<Vec2>,
    pub track: TrackFrame,
    pub timings: StageTimings,
}

/// Tracked output of a whole sequence.
#[derive(Debug, Clone)]
pub struct SequenceResult {
    pub masks: Vec<LabelMap>,
    pub records: Vec<TrackRecord>,
    pub graph: TrackGraph,
    pub cells: Vec<CellMaskSet>,
    pub report: RunReport,
}

fn in_stage<T>(stage: &'static str, frame: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        stage,
        frame,
        source: Box::new(e),
    })
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

/// Normalized, log-brightened frame and its anisotropic Kuwahara smoothing.
pub fn preprocess_frame(raw: &Image2D, cfg: &PipelineConfig) -> Result<(Image2D, Image2D)> {
    let logged = log_brighten(&normalize(raw), cfg.preprocess.log_gain)?;
    let smoothed = kuwahara_anisotropic(&logged, &cfg.kuwahara())?;
    Ok((logged, smoothed))
}

/// Basins of the force field of `smoothed` and the positions of the
/// minima whose basins are large enough to be cells.
pub fn detect(
    smoothed: &Image2D,
    kernels: &GravityKernelSet,
    cfg: &PipelineConfig,
    timings: &mut StageTimings,
) -> Result<(BasinMap, Vec<Vec2>)> {
    let t = Instant::now();
    let f = force_field(smoothed, kernels)?;
    timings.gravity += secs(t);
    let t = Instant::now();
    let cps = find_critical_points(&f);
    let basins = extract_basins(&f, &cps, &cfg.integrator());
    let minima = significant_minima(&basins, cfg.min_area())
        .into_iter()
        .filter_map(|l| basins.minimum(l))
        .collect();
    timings.basins += secs(t);
    Ok((basins, minima))
}

/// Runs every per-frame stage on one raw frame.
pub fn process_frame(
    raw: &Image2D,
    index: usize,
    kernels: &GravityKernelSet,
    cfg: &PipelineConfig,
) -> Result<FrameResult> {
    let mut timings = StageTimings::default();
    let t = Instant::now();
    let (logged, smoothed) = in_stage("preprocess", index, preprocess_frame(raw, cfg))?;
    timings.preprocess = secs(t);
    let (basins, minima) = in_stage(
        "detection",
        index,
        detect(&smoothed, kernels, cfg, &mut timings),
    )?;
    let t = Instant::now();
    let seg = cfg.seg();
    let enhanced = in_stage("segmentation", index, enhance(&logged, &seg))?;
    let cells = in_stage(
        "segmentation",
        index,
        segment_enhanced(&enhanced, &minima, &seg),
    )?;
    timings.segmentation = secs(t);
    Ok(FrameResult {
        minima,
        track: TrackFrame {
            cells,
            basins,
            enhanced,
        },
        timings,
    })
}

/// Runs the pipeline on in-memory frames, which must share one size.
pub fn run_frames(frames: &[Image2D], cfg: &PipelineConfig) -> Result<SequenceResult> {
    let start = Instant::now();
    cfg.validate()?;
    let Some(first) = frames.first() else {
        return Err(Error::NoFrames(PathBuf::new()));
    };
    let (w, h) = (first.width(), first.height());
    if let Some(bad) = frames.iter().find(|f| (f.width(), f.height()) != (w, h)) {
        return Err(Error::Dimensions {
            expected_width: w,
            expected_height: h,
            width: bad.width(),
            height: bad.height(),
        });
    }
    let kernels = build_kernels(cfg.gravity.radius, cfg.gravity.softening_eps)?;
    let results: Vec<FrameResult> = frames
        .par_iter()
        .enumerate()
        .map(|(i, raw)| process_frame(raw, i, &kernels, cfg))
        .collect::<Result<_>>()?;

    let mut timings = StageTimings::default();
    for r in &results {
        timings.add_frame(&r.timings);
    }
    let detections_per_frame = results.iter().map(|r| r.minima.len()).collect();
    let mut track_frames: Vec<TrackFrame> = results.into_iter().map(|r| r.track).collect();

    let tp = cfg.track();
    let t = Instant::now();
    let graph = track_sequence(&mut track_frames, &tp, &cfg.seg())?;
    timings.tracking = secs(t);
    let t = Instant::now();
    let kept = filter_tracklets(&graph, tp.lower_area, tp.upper_area, tp.min_contrast);
    let cells: Vec<CellMaskSet> = track_frames.into_iter().map(|f| f.cells).collect();
    let masks = kept.render(&cells);
    timings.filtering = secs(t);
    timings.total = secs(start);

    let report = RunReport {
        frames: frames.len(),
        width: w,
        height: h,
        detections_per_frame,
        tracklets_before_filter: graph.tracklets.len(),
        tracklets: kept.tracklets.len(),
        recovered_cells: cells
            .iter()
            .map(|c| c.recovered.iter().filter(|&&r| r).count())
            .sum(),
        timings,
    };
    Ok(SequenceResult {
        masks,
        records: kept.records(),
        graph: kept,
        cells,
        report,
    })
}

/// Loads every frame of a directory in order, in parallel.
pub fn load_sequence(dir: &Path) -> Result<Vec<Image2D>> {
    let meta = SequenceMeta::scan(dir)?;
    meta.frame_paths
        .par_iter()
        .enumerate()
        .map(|(i, p)| in_stage("load", i, load_frame(p)))
        .collect()
}

/// Name of the `t`-th mask file.
pub fn mask_file_name(t: usize) -> String {
    format!("mask{t:03}.tif")
}

pub const TRACK_FILE: &str = "res_track.txt";
pub const REPORT_FILE: &str = "run_report.toml";

/// Files are written to a hidden directory inside the destination and
/// moved into place only once all of them exist. A staged directory
/// replaces a destination directory of the same name. Dropping an uncommitted
/// stage removes what was written.
pub struct Staging {
    dest: PathBuf,
    tmp: PathBuf,
    committed: bool,
}

impl Staging {
    pub fn new(dest: &Path) -> Result<Self> {
        std::fs::create_dir_all(dest).map_err(|e| Error::io(dest, e))?;
        let tmp = dest.join(format!(".partial-{}", std::process::id()));
        if tmp.exists() {
            std::fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
        }
        std::fs::create_dir(&tmp).map_err(|e| Error::io(&tmp, e))?;
        Ok(Self {
            dest: dest.to_path_buf(),
            tmp,
            committed: false,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.tmp.join(name)
    }

    pub fn commit(mut self) -> Result<()> {
        let mut names: Vec<_> = std::fs::read_dir(&self.tmp)
            .map_err(|e| Error::io(&self.tmp, e))?
            .map(|e| e.map(|e| e.file_name()))
            .collect::<std::io::Result<_>>()
            .map_err(|e| Error::io(&self.tmp, e))?;
        names.sort();
        for name in names {
            let to = self.dest.join(&name);
            if to.is_dir() {
                std::fs::remove_dir_all(&to).map_err(|e| Error::io(&to, e))?;
            }
            std::fs::rename(self.tmp.join(&name), &to).map_err(|e| Error::io(&to, e))?;
        }
        std::fs::remove_dir(&self.tmp).map_err(|e| Error::io(&self.tmp, e))?;
        self.committed = true;
        Ok(())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            let _ = std::fs::remove_dir_all(&self.tmp);
        }
    }
}

/// Writes masks, the track file and the run report into `dest`.
/// With `overlay_frames`, also writes `overlayNNN.png`.
pub fn write_outputs(
    dest: &Path,
    result: &SequenceResult,
    overlay_frames: Option<&[Image2D]>,
) -> Result<()> {
    let stage = Staging::new(dest)?;
    result
        .masks
        .par_iter()
        .enumerate()
        .try_for_each(|(t, m)| save_label_map(&stage.path(&mask_file_name(t)), m))?;
    write_res_track(&stage.path(TRACK_FILE), &result.records)?;
    if let Some(frames) = overlay_frames {
        frames
            .par_iter()
            .zip(&result.masks)
            .enumerate()
            .try_for_each(|(t, (f, m))| {
                let rgb = render_overlay(f, m);
                save_rgb_png(
                    &stage.path(&format!("overlay{t:03}.png")),
                    f.width(),
                    f.height(),
                    &rgb,
                )
            })?;
    }
    let report = toml::to_string(&result.report).expect("report always serializes");
    let p = stage.path(REPORT_FILE);
    std::fs::write(&p, report).map_err(|e| Error::io(&p, e))?;
    stage.commit()
}

/// Reads a run report written by [`write_outputs`].
pub fn read_report(path: &Path) -> Result<RunReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::param("threads", e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Loads `input`, runs the pipeline and writes results to `output`.
pub fn run_pipeline(cfg: &PipelineConfig, input: &Path, output: &Path) -> Result<RunReport> {
    cfg.validate()?;
    with_pool(cfg.io.threads, || {
        let t = Instant::now();
        let frames = load_sequence(input)?;
        let load = secs(t);
        let mut result = run_frames(&frames, cfg)?;
        result.report.timings.load = load;
        result.report.timings.total += load;
        write_outputs(output, &result, cfg.io.overlay.then_some(frames.as_slice()))?;
        Ok(result.report)
    })?
}

/// Writes the potential, force components, force magnitude and basin
/// labels of one frame as 16-bit TIFFs.
pub fn dump_field(cfg: &PipelineConfig, frame: &Path, dest: &Path) -> Result<BasinMap> {
    cfg.validate()?;
    let raw = in_stage("load", 0, load_frame(frame))?;
    let (_, smoothed) = in_stage("preprocess", 0, preprocess_frame(&raw, cfg))?;
    let kernels = build_kernels(cfg.gravity.radius, cfg.gravity.softening_eps)?;
    let (f, phi) = in_stage("gravity", 0, fields(&smoothed, &kernels))?;
    let cps = find_critical_points(&f);
    let basins = extract_basins(&f, &cps, &cfg.integrator());
    let (w, h) = (f.width(), f.height());
    let stage = Staging::new(dest)?;
    save_image_u16_normalized(&stage.path("smoothed.tif"), &smoothed)?;
    save_image_u16_normalized(&stage.path("phi.tif"), &phi.to_image())?;
    save_image_u16_normalized(
        &stage.path("force_x.tif"),
        &Image2D::from_vec(w, h, f.fx().to_vec()),
    )?;
    save_image_u16_normalized(
        &stage.path("force_y.tif"),
        &Image2D::from_vec(w, h, f.fy().to_vec()),
    )?;
    save_image_u16_normalized(&stage.path("force_mag.tif"), &f.magnitude())?;
    save_label_map(&stage.path("basins.tif"), &basins.labels)?;
    stage.commit()?;
    Ok(basins)
}
