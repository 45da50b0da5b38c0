//! Synthetic fluorescence sequences with known masks and tracks.
//!
//! Blobs are Gaussians with sigma equal to half their radius; the ground
//! truth mask of a blob is the disk of that radius.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image2D, LabelMap, Vec2};
use crate::io::{save_image_u16, save_label_map};
use crate::pipeline::Staging;
use crate::tracking::{format_records, TrackRecord};

/// Placement retries before a layout is declared infeasible.
const MAX_LAYOUTS: usize = 200;
const MAX_DRAWS: usize = 2000;

/// One blob replaced by two children from `frame` on. Children have the
/// parent's radius over the square root of two, but no less than the
/// minimum radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mitosis {
    pub frame: usize,
    /// Index of the initial blob that divides.
    pub blob: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub blobs: usize,
    pub radius_min: f64,
    pub radius_max: f64,
    /// Pixels per frame; directions are random.
    pub speed: f64,
    pub noise_sigma: f64,
    pub peak: f64,
    pub background: f64,
    /// Minimum centre distance over the whole sequence, in units of the
    /// maximum radius. Sister cells are exempt.
    pub keep_apart: f64,
    pub mitoses: Vec<Mitosis>,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            frames: 20,
            blobs: 10,
            radius_min: 10.0,
            radius_max: 14.0,
            speed: 2.0,
            noise_sigma: 0.05,
            peak: 0.8,
            background: 0.05,
            keep_apart: 2.5,
            mitoses: Vec::new(),
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.frames == 0 {
            return Err(Error::param(
                "synth",
                "width, height and frames must be >= 1",
            ));
        }
        if !(self.radius_min > 0.0)
            || !(self.radius_max >= self.radius_min)
            || !self.radius_max.is_finite()
        {
            return Err(Error::param(
                "synth.radius",
                "need 0 < radius_min <= radius_max",
            ));
        }
        for (name, v) in [
            ("synth.speed", self.speed),
            ("synth.noise_sigma", self.noise_sigma),
            ("synth.keep_apart", self.keep_apart),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::param(name, "must be finite and >= 0"));
            }
        }
        if !(0.0..=1.0).contains(&self.background) || !(self.background..=1.0).contains(&self.peak)
        {
            return Err(Error::param(
                "synth.peak",
                "need 0 <= background <= peak <= 1",
            ));
        }
        let mut seen = vec![false; self.blobs];
        for m in &self.mitoses {
            if m.blob >= self.blobs || m.frame == 0 || m.frame >= self.frames {
                return Err(Error::param(
                    "synth.mitoses",
                    format!("blob {} at frame {} is out of range", m.blob, m.frame),
                ));
            }
            if std::mem::replace(&mut seen[m.blob], true) {
                return Err(Error::param(
                    "synth.mitoses",
                    format!("blob {} divides twice", m.blob),
                ));
            }
        }
        Ok(())
    }
}

/// Position and radius of one track in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobState {
    pub track: u32,
    pub center: Vec2,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSequence {
    pub frames: Vec<Image2D>,
    pub masks: Vec<LabelMap>,
    pub tracks: Vec<TrackRecord>,
    pub states: Vec<Vec<BlobState>>,
}

#[derive(Debug, Clone)]
struct Body {
    record: TrackRecord,
    radius: f64,
    /// Centre per frame from `record.begin`.
    path: Vec<Vec2>,
}

fn reflect(p: &mut f64, v: &mut f64, lo: f64, hi: f64) {
    if hi <= lo {
        *p = 0.5 * (lo + hi);
        *v = 0.0;
        return;
    }
    for _ in 0..4 {
        if *p < lo {
            *p = 2.0 * lo - *p;
            *v = -*v;
        } else if *p > hi {
            *p = 2.0 * hi - *p;
            *v = -*v;
        } else {
            break;
        }
    }
    *p = p.clamp(lo, hi);
}

fn simulate(start: Vec2, vel: Vec2, r: f64, steps: usize, w: usize, h: usize) -> Vec<Vec2> {
    let (mut p, mut v) = (start, vel);
    let mut out = Vec::with_capacity(steps);
    for k in 0..steps {
        if k > 0 {
            p = p + v;
        }
        reflect(&mut p.x, &mut v.x, r, w as f64 - 1.0 - r);
        reflect(&mut p.y, &mut v.y, r, h as f64 - 1.0 - r);
        out.push(p);
    }
    out
}

fn velocity_at(path: &[Vec2], k: usize) -> Vec2 {
    if path.len() < 2 {
        return Vec2::new(0.0, 0.0);
    }
    let k = k.clamp(1, path.len() - 1);
    path[k] - path[k - 1]
}

fn random_direction(rng: &mut ChaCha8Rng) -> Vec2 {
    let a = rng.random_range(0.0..std::f64::consts::TAU);
    Vec2::new(a.cos(), a.sin())
}

fn try_layout(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Option<Vec<Body>> {
    let (w, h, n) = (spec.width, spec.height, spec.frames);
    let rmax = spec.radius_max;
    let mut starts: Vec<Vec2> = Vec::with_capacity(spec.blobs);
    for _ in 0..spec.blobs {
        let mut placed = None;
        for _ in 0..MAX_DRAWS {
            let c = Vec2::new(
                rng.random_range(rmax..=(w as f64 - 1.0 - rmax)),
                rng.random_range(rmax..=(h as f64 - 1.0 - rmax)),
            );
            if starts.iter().all(|s| s.distance(c) >= 3.0 * rmax) {
                placed = Some(c);
                break;
            }
        }
        starts.push(placed?);
    }

    let mut bodies = Vec::new();
    for (i, &s) in starts.iter().enumerate() {
        let r = rng.random_range(spec.radius_min..=spec.radius_max);
        let v = random_direction(rng) * spec.speed;
        let end = spec
            .mitoses
            .iter()
            .find(|m| m.blob == i)
            .map_or(n - 1, |m| m.frame - 1);
        bodies.push(Body {
            record: TrackRecord {
                label: i as u32 + 1,
                begin: 0,
                end,
                parent: 0,
            },
            radius: r,
            path: simulate(s, v, r, end + 1, w, h),
        });
    }
    let mut schedule = spec.mitoses.clone();
    schedule.sort_by_key(|m| (m.frame, m.blob));
    for m in schedule {
        let parent = bodies[m.blob].clone();
        let rc = (parent.radius / std::f64::consts::SQRT_2).max(spec.radius_min);
        let axis = random_direction(rng);
        let pv = velocity_at(&parent.path, parent.path.len() - 1);
        let last = *parent.path.last().expect("non-empty path");
        let split = spec.speed.max(1.0);
        for sign in [1.0, -1.0] {
            let start = last + pv + axis * (sign * (rc + 1.0));
            let vel = pv + axis * (sign * split);
            let label = bodies.len() as u32 + 1;
            bodies.push(Body {
                record: TrackRecord {
                    label,
                    begin: m.frame,
                    end: n - 1,
                    parent: parent.record.label,
                },
                radius: rc,
                path: simulate(start, vel, rc, n - m.frame, w, h),
            });
        }
    }

    let min_dist = spec.keep_apart * rmax;
    for a in 0..bodies.len() {
        for b in a + 1..bodies.len() {
            let (ba, bb) = (&bodies[a], &bodies[b]);
            let sisters = ba.record.parent != 0 && ba.record.parent == bb.record.parent;
            if sisters || ba.record.label == bb.record.parent {
                continue;
            }
            let lo = ba.record.begin.max(bb.record.begin);
            let hi = ba.record.end.min(bb.record.end);
            for t in lo..=hi.min(n - 1) {
                if lo > hi {
                    break;
                }
                let pa = ba.path[t - ba.record.begin];
                let pb = bb.path[t - bb.record.begin];
                if pa.distance(pb) < min_dist {
                    return None;
                }
            }
        }
    }
    Some(bodies)
}

/// Generates a sequence; the same spec always gives the same output.
pub fn synth(spec: &SynthSpec) -> Result<SynthSequence> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    if 2.0 * spec.radius_max + 1.0 > w.min(h) as f64 {
        return Err(Error::Infeasible(format!(
            "radius {} does not fit in {w}x{h}",
            spec.radius_max
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let bodies = (0..MAX_LAYOUTS)
        .find_map(|_| try_layout(spec, &mut rng))
        .ok_or_else(|| {
            Error::Infeasible(format!(
                "no layout of {} blobs of radius up to {} in {w}x{h} after {MAX_LAYOUTS} attempts",
                spec.blobs, spec.radius_max
            ))
        })?;

    let states: Vec<Vec<BlobState>> = (0..spec.frames)
        .map(|t| {
            bodies
                .iter()
                .filter(|b| b.record.begin <= t && t <= b.record.end)
                .map(|b| BlobState {
                    track: b.record.label,
                    center: b.path[t - b.record.begin],
                    radius: b.radius,
                })
                .collect()
        })
        .collect();

    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::param("synth.noise_sigma", e.to_string()))?;
    let mut frames = Vec::with_capacity(spec.frames);
    let mut masks = Vec::with_capacity(spec.frames);
    for blobs in &states {
        let mut img = Image2D::filled(w, h, spec.background);
        let mut labels = LabelMap::new(w, h);
        let mut nearest = vec![f64::INFINITY; w * h];
        for b in blobs {
            let sigma = b.radius / 2.0;
            let reach = (4.0 * sigma).max(b.radius + 1.0);
            let x0 = (b.center.x - reach).floor().max(0.0) as usize;
            let y0 = (b.center.y - reach).floor().max(0.0) as usize;
            let x1 = ((b.center.x + reach).ceil() as usize).min(w - 1);
            let y1 = ((b.center.y + reach).ceil() as usize).min(h - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let d2 = (x as f64 - b.center.x).powi(2) + (y as f64 - b.center.y).powi(2);
                    let v = spec.background
                        + (spec.peak - spec.background) * (-d2 / (2.0 * sigma * sigma)).exp();
                    let i = y * w + x;
                    if v > img.data()[i] {
                        img.data_mut()[i] = v;
                    }
                    let rel = d2.sqrt() / b.radius;
                    if rel <= 1.0 && rel < nearest[i] {
                        nearest[i] = rel;
                        labels.labels_mut()[i] = b.track;
                    }
                }
            }
        }
        if spec.noise_sigma > 0.0 {
            for v in img.data_mut() {
                *v = (*v + noise.sample(&mut rng)).clamp(0.0, 1.0);
            }
        }
        frames.push(img);
        masks.push(labels);
    }
    let mut tracks: Vec<TrackRecord> = bodies.iter().map(|b| b.record).collect();
    tracks.sort();
    Ok(SynthSequence {
        frames,
        masks,
        tracks,
        states,
    })
}

pub const GT_DIR: &str = "gt";
pub const GT_TRACK_FILE: &str = "man_track.txt";

pub fn gt_mask_file_name(t: usize) -> String {
    format!("man_track{t:03}.tif")
}

/// Writes frames as `tNNN.tif` (16-bit) and the ground truth under `gt/`.
pub fn write_synth(seq: &SynthSequence, dest: &Path) -> Result<()> {
    let stage = Staging::new(dest)?;
    for (t, f) in seq.frames.iter().enumerate() {
        save_image_u16(&stage.path(&format!("t{t:03}.tif")), f)?;
    }
    let gt = stage.path(GT_DIR);
    std::fs::create_dir(&gt).map_err(|e| Error::io(&gt, e))?;
    for (t, m) in seq.masks.iter().enumerate() {
        save_label_map(&gt.join(gt_mask_file_name(t)), m)?;
    }
    let p = gt.join(GT_TRACK_FILE);
    std::fs::write(&p, format_records(&seq.tracks)).map_err(|e| Error::io(&p, e))?;
    stage.commit()
}
