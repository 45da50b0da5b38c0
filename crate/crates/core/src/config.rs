//! Pipeline configuration as a TOML file with one table per stage.
//!
//! Every key is optional; missing keys take their defaults and unknown
//! keys are rejected.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::basins::IntegratorConfig;
use crate::error::{Error, Result};
use crate::preprocess::{ClaheParams, KuwaharaParams};
use crate::segmentation::SegParams;
use crate::tracking::TrackParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub log_gain: f64,
    pub kuwahara_radius: f64,
    pub kuwahara_sectors: usize,
    pub kuwahara_sharpness: f64,
    pub kuwahara_tensor_sigma: f64,
    pub clahe_tile: usize,
    pub clahe_clip: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        let k = KuwaharaParams::default();
        let c = ClaheParams::default();
        Self {
            log_gain: 100.0,
            kuwahara_radius: k.radius,
            kuwahara_sectors: k.sector_count,
            kuwahara_sharpness: k.sharpness_q,
            kuwahara_tensor_sigma: k.tensor_smoothing_sigma,
            clahe_tile: c.tile_size,
            clahe_clip: c.clip_limit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GravityConfig {
    pub radius: usize,
    pub softening_eps: f64,
}

impl Default for GravityConfig {
    fn default() -> Self {
        Self {
            radius: 20,
            softening_eps: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorSection {
    pub tol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
    pub stagnation_tol: f64,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        let c = IntegratorConfig::default();
        Self {
            tol: c.tol,
            h_init: c.h_init,
            h_min: c.h_min,
            h_max: c.h_max,
            max_steps: c.max_steps,
            stagnation_tol: c.stagnation_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BasinsConfig {
    /// Defaults to the area of a disk of half the gravity radius.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_area: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegConfig {
    pub contrast_delta: f64,
    pub cv_iterations: usize,
    pub cv_smoothness_mu: f64,
    pub h_maxima_h: f64,
    pub min_seed_separation: f64,
}

impl Default for SegConfig {
    fn default() -> Self {
        let s = SegParams::default();
        Self {
            contrast_delta: s.contrast_delta,
            cv_iterations: s.cv_iterations,
            cv_smoothness_mu: s.cv_smoothness_mu,
            h_maxima_h: s.h_maxima_h,
            min_seed_separation: s.min_seed_separation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackConfig {
    pub match_min_fraction: f64,
    pub contrast_accept_ratio: f64,
    /// Defaults to a quarter of `basins.min_area`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower_area: Option<f64>,
    /// Defaults to `basins.min_area`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper_area: Option<f64>,
    pub min_contrast: f64,
}

impl Default for TrackConfig {
    fn default() -> Self {
        let t = TrackParams::default();
        Self {
            match_min_fraction: t.match_min_fraction,
            contrast_accept_ratio: t.contrast_accept_ratio,
            lower_area: None,
            upper_area: None,
            min_contrast: t.min_contrast,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Worker threads; all cores when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Also write contour overlays as PNG.
    pub overlay: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub preprocess: PreprocessConfig,
    pub gravity: GravityConfig,
    pub integrator: IntegratorSection,
    pub basins: BasinsConfig,
    pub seg: SegConfig,
    pub track: TrackConfig,
    pub io: IoConfig,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn kuwahara(&self) -> KuwaharaParams {
        KuwaharaParams {
            radius: self.preprocess.kuwahara_radius,
            sector_count: self.preprocess.kuwahara_sectors,
            sharpness_q: self.preprocess.kuwahara_sharpness,
            tensor_smoothing_sigma: self.preprocess.kuwahara_tensor_sigma,
        }
    }

    pub fn clahe(&self) -> ClaheParams {
        ClaheParams {
            tile_size: self.preprocess.clahe_tile,
            clip_limit: self.preprocess.clahe_clip,
        }
    }

    pub fn integrator(&self) -> IntegratorConfig {
        let i = &self.integrator;
        IntegratorConfig {
            tol: i.tol,
            h_init: i.h_init,
            h_min: i.h_min,
            h_max: i.h_max,
            max_steps: i.max_steps,
            stagnation_tol: i.stagnation_tol,
        }
    }

    pub fn min_area(&self) -> f64 {
        self.basins.min_area.unwrap_or_else(|| {
            let r = self.gravity.radius as f64 / 2.0;
            PI * r * r
        })
    }

    pub fn seg(&self) -> SegParams {
        let s = &self.seg;
        SegParams {
            contrast_delta: s.contrast_delta,
            cv_iterations: s.cv_iterations,
            cv_smoothness_mu: s.cv_smoothness_mu,
            h_maxima_h: s.h_maxima_h,
            min_seed_separation: s.min_seed_separation,
            clahe: self.clahe(),
        }
    }

    pub fn track(&self) -> TrackParams {
        let base = TrackParams::for_min_area(self.min_area());
        TrackParams {
            match_min_fraction: self.track.match_min_fraction,
            contrast_accept_ratio: self.track.contrast_accept_ratio,
            lower_area: self.track.lower_area.unwrap_or(base.lower_area),
            upper_area: self.track.upper_area.unwrap_or(base.upper_area),
            min_contrast: self.track.min_contrast,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.preprocess.log_gain > 0.0) || !self.preprocess.log_gain.is_finite() {
            return Err(Error::param(
                "preprocess.log_gain",
                "must be finite and > 0",
            ));
        }
        self.kuwahara().validate()?;
        if self.gravity.radius < 1 {
            return Err(Error::param("gravity.radius", "must be >= 1"));
        }
        if !(self.gravity.softening_eps >= 0.0) || !self.gravity.softening_eps.is_finite() {
            return Err(Error::param(
                "gravity.softening_eps",
                "must be finite and >= 0",
            ));
        }
        self.integrator().validate()?;
        let a = self.min_area();
        if !(a >= 0.0) || !a.is_finite() {
            return Err(Error::param("basins.min_area", "must be finite and >= 0"));
        }
        self.seg().validate()?;
        self.track().validate()?;
        if self.io.threads == Some(0) {
            return Err(Error::param("io.threads", "must be >= 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = PipelineConfig::from_toml_str("").unwrap();
        assert_eq!(c, PipelineConfig::default());
        assert!((c.min_area() - PI * 100.0).abs() < 1e-9);
        let t = c.track();
        assert!((t.lower_area - PI * 25.0).abs() < 1e-9);
        assert!((t.upper_area - PI * 100.0).abs() < 1e-9);
        assert_eq!(c.seg(), SegParams::default());
        assert_eq!(c.integrator(), IntegratorConfig::default());
    }

    #[test]
    fn keys_are_read() {
        let c = PipelineConfig::from_toml_str(
            "[gravity]\nradius = 12\n[basins]\nmin_area = 50.0\n[seg]\nh_maxima_h = 3.0\n\
             [io]\nthreads = 2\noverlay = true\n",
        )
        .unwrap();
        assert_eq!(c.gravity.radius, 12);
        assert_eq!(c.min_area(), 50.0);
        assert_eq!(c.track().upper_area, 50.0);
        assert_eq!(c.seg().h_maxima_h, 3.0);
        assert_eq!(c.io.threads, Some(2));
        assert!(c.io.overlay);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            PipelineConfig::from_toml_str("[gravity]\nradiuss = 3\n"),
            Err(Error::Config(_))
        ));
        assert!(PipelineConfig::from_toml_str("[nope]\n").is_err());
    }

    #[test]
    fn out_of_range_values_are_rejected() {
        for text in [
            "[gravity]\nradius = 0\n",
            "[seg]\ncontrast_delta = 1.5\n",
            "[integrator]\nh_min = 5.0\n",
            "[track]\nlower_area = 100.0\nupper_area = 10.0\n",
            "[io]\nthreads = 0\n",
        ] {
            let e = PipelineConfig::from_toml_str(text).unwrap_err();
            assert!(e.is_config_error(), "{text}: {e}");
        }
    }

    #[test]
    fn defaults_round_trip() {
        let c = PipelineConfig::default();
        let again = PipelineConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(again, c);
    }

    proptest! {
        #[test]
        fn round_trip(
            gain in 0.1f64..1000.0,
            radius in 1usize..64,
            delta in 0.01f64..0.99,
            iters in 1usize..200,
            min_area in proptest::option::of(1.0f64..1000.0),
            threads in proptest::option::of(1usize..64),
            overlay: bool,
        ) {
            let mut c = PipelineConfig::default();
            c.preprocess.log_gain = gain;
            c.gravity.radius = radius;
            c.seg.contrast_delta = delta;
            c.seg.cv_iterations = iters;
            c.basins.min_area = min_area;
            c.io.threads = threads;
            c.io.overlay = overlay;
            c.io.input = Some(PathBuf::from("in dir"));
            let text = c.to_toml_string();
            let parsed = PipelineConfig::from_toml_str(&text).unwrap();
            prop_assert_eq!(&parsed, &c);
            prop_assert_eq!(parsed.to_toml_string(), text);
        }
    }
}
