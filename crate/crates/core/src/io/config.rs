//! Flat `key=value` run configuration.
//!
//! The key set is closed: unknown keys, malformed values and out-of-range
//! settings are rejected, never guessed at. Lines starting with `#` and
//! blank lines are ignored. Every key, its meaning and its default:
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `geom.n_angles` | 180 | projection angles, uniform on [0, pi) |
//! | `geom.n_bins` | 0 | detector bins; 0 = smallest odd count covering the diagonal |
//! | `img.size` | 128 | slice side in pixels |
//! | `img.pixel_spacing` | 1.0 | pixel pitch (same unit as bin spacing) |
//! | `window.min` | -1024 | lower HU bound mapped to 0 |
//! | `window.max` | 3071 | upper HU bound mapped to 1 |
//! | `pipeline.variant` | full | full, inpaint_only, image_only or limar |
//! | `pipeline.metal_threshold` | 2500 | detection threshold in HU |
//! | `pipeline.metal_hu` | 3071 | HU of inserted objects (normalization ceiling) |
//! | `pipeline.filter` | ramlak | FBP filter: ramlak or ramlak_hann |
//! | `pipeline.sino_divisor` | 0 | sinogram scale to unit range; 0 = size * pixel_spacing |
//! | `gen.seed` | 1 | mask generator seed |
//! | `gen.max_volume_fraction` | 0.10 | range side bound, fraction of image side |
//! | `gen.primitive_count_min` | 1 | primitives per object, lower bound |
//! | `gen.primitive_count_max` | 25 | primitives per object, upper bound |
//! | `gen.primitive_max_size` | 10 | primitive linear size bound in voxels |
//! | `gen.outlier_count_max` | 30 | outliers per object, upper bound |
//! | `gen.outlier_size_min` | 1 | outlier linear size lower bound |
//! | `gen.outlier_size_max` | 3 | outlier linear size upper bound |
//! | `gen.overlap_min` | 0.95 | required object/brain overlap fraction |
//! | `gen.objects_per_scan_max` | 10 | objects per scene, upper bound |
//! | `gen.masks_per_scan` | 30 | mask sets generated per scan |
//! | `gen.closing_radius` | 2 | closing structuring-element radius in voxels |
//! | `phantom.count` | 30 | phantoms to generate |
//! | `phantom.slices` | 9 | slices per phantom |
//! | `phantom.seed` | 1 | phantom generator seed |
//! | `split.train_inpaint` | 0.4 | phantom fraction for inpainter training |
//! | `split.train_refine` | 0.4 | phantom fraction for refiner training |
//! | `split.test` | 0.2 | phantom fraction held out for evaluation |
//! | `split.seed` | 1 | split shuffle seed |
//! | `train.epochs_inpaint` | 50 | inpainter epochs |
//! | `train.epochs_refine` | 30 | refiner / image-model epochs |
//! | `train.batch_size` | 4 | training batch size |
//! | `train.seed` | 1 | weight init and shuffling seed |
//! | `train.lr` | 5e-3 | initial Adam learning rate |
//! | `train.schedule` | desk | milestone preset: desk (rescaled) or full |
//! | `train.hole_weight` | 6 | L1 weight on hole pixels for the inpainter |
//! | `model.depth` | 4 | UNet resolution levels |
//! | `model.base_channels` | 16 | channels at full resolution |

use crate::error::{MarError, Result};
use std::fmt;

/// Milestone preset for the learning-rate schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchedulePreset {
    /// Milestones rescaled proportionally to the configured epoch budget.
    Desk,
    /// The full-scale 500/200-epoch milestone sets, unscaled.
    Full,
}

impl fmt::Display for SchedulePreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchedulePreset::Desk => write!(f, "desk"),
            SchedulePreset::Full => write!(f, "full"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub geom_n_angles: usize,
    pub geom_n_bins: usize,
    pub img_size: usize,
    pub img_pixel_spacing: f64,
    pub window_min: f64,
    pub window_max: f64,
    pub pipeline_variant: String,
    pub pipeline_metal_threshold: f64,
    pub pipeline_metal_hu: f64,
    pub pipeline_filter: String,
    pub pipeline_sino_divisor: f64,
    pub gen_seed: u64,
    pub gen_max_volume_fraction: f64,
    pub gen_primitive_count_min: usize,
    pub gen_primitive_count_max: usize,
    pub gen_primitive_max_size: usize,
    pub gen_outlier_count_max: usize,
    pub gen_outlier_size_min: usize,
    pub gen_outlier_size_max: usize,
    pub gen_overlap_min: f64,
    pub gen_objects_per_scan_max: usize,
    pub gen_masks_per_scan: usize,
    pub gen_closing_radius: usize,
    pub phantom_count: usize,
    pub phantom_slices: usize,
    pub phantom_seed: u64,
    pub split_train_inpaint: f64,
    pub split_train_refine: f64,
    pub split_test: f64,
    pub split_seed: u64,
    pub train_epochs_inpaint: usize,
    pub train_epochs_refine: usize,
    pub train_batch_size: usize,
    pub train_seed: u64,
    pub train_lr: f64,
    pub train_schedule: SchedulePreset,
    pub train_hole_weight: f64,
    pub model_depth: usize,
    pub model_base_channels: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            geom_n_angles: 180,
            geom_n_bins: 0,
            img_size: 128,
            img_pixel_spacing: 1.0,
            window_min: -1024.0,
            window_max: 3071.0,
            pipeline_variant: "full".to_string(),
            pipeline_metal_threshold: 2500.0,
            pipeline_metal_hu: 3071.0,
            pipeline_filter: "ramlak".to_string(),
            pipeline_sino_divisor: 0.0,
            gen_seed: 1,
            gen_max_volume_fraction: 0.10,
            gen_primitive_count_min: 1,
            gen_primitive_count_max: 25,
            gen_primitive_max_size: 10,
            gen_outlier_count_max: 30,
            gen_outlier_size_min: 1,
            gen_outlier_size_max: 3,
            gen_overlap_min: 0.95,
            gen_objects_per_scan_max: 10,
            gen_masks_per_scan: 30,
            gen_closing_radius: 2,
            phantom_count: 30,
            phantom_slices: 9,
            phantom_seed: 1,
            split_train_inpaint: 0.4,
            split_train_refine: 0.4,
            split_test: 0.2,
            split_seed: 1,
            train_epochs_inpaint: 50,
            train_epochs_refine: 30,
            train_batch_size: 4,
            train_seed: 1,
            train_lr: 5e-3,
            train_schedule: SchedulePreset::Desk,
            train_hole_weight: 6.0,
            model_depth: 4,
            model_base_channels: 16,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| MarError::format(format!("bad value '{v}' for {key}")))
}

impl RunConfig {
    /// Apply one `key=value` assignment; unknown keys are an error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "geom.n_angles" => self.geom_n_angles = parse_num(key, v)?,
            "geom.n_bins" => self.geom_n_bins = parse_num(key, v)?,
            "img.size" => self.img_size = parse_num(key, v)?,
            "img.pixel_spacing" => self.img_pixel_spacing = parse_num(key, v)?,
            "window.min" => self.window_min = parse_num(key, v)?,
            "window.max" => self.window_max = parse_num(key, v)?,
            "pipeline.variant" => {
                if !["full", "inpaint_only", "image_only", "limar"].contains(&v) {
                    return Err(MarError::format(format!("unknown variant '{v}'")));
                }
                self.pipeline_variant = v.to_string();
            }
            "pipeline.metal_threshold" => self.pipeline_metal_threshold = parse_num(key, v)?,
            "pipeline.metal_hu" => self.pipeline_metal_hu = parse_num(key, v)?,
            "pipeline.filter" => {
                if !["ramlak", "ramlak_hann"].contains(&v) {
                    return Err(MarError::format(format!("unknown filter '{v}'")));
                }
                self.pipeline_filter = v.to_string();
            }
            "pipeline.sino_divisor" => self.pipeline_sino_divisor = parse_num(key, v)?,
            "gen.seed" => self.gen_seed = parse_num(key, v)?,
            "gen.max_volume_fraction" => self.gen_max_volume_fraction = parse_num(key, v)?,
            "gen.primitive_count_min" => self.gen_primitive_count_min = parse_num(key, v)?,
            "gen.primitive_count_max" => self.gen_primitive_count_max = parse_num(key, v)?,
            "gen.primitive_max_size" => self.gen_primitive_max_size = parse_num(key, v)?,
            "gen.outlier_count_max" => self.gen_outlier_count_max = parse_num(key, v)?,
            "gen.outlier_size_min" => self.gen_outlier_size_min = parse_num(key, v)?,
            "gen.outlier_size_max" => self.gen_outlier_size_max = parse_num(key, v)?,
            "gen.overlap_min" => self.gen_overlap_min = parse_num(key, v)?,
            "gen.objects_per_scan_max" => self.gen_objects_per_scan_max = parse_num(key, v)?,
            "gen.masks_per_scan" => self.gen_masks_per_scan = parse_num(key, v)?,
            "gen.closing_radius" => self.gen_closing_radius = parse_num(key, v)?,
            "phantom.count" => self.phantom_count = parse_num(key, v)?,
            "phantom.slices" => self.phantom_slices = parse_num(key, v)?,
            "phantom.seed" => self.phantom_seed = parse_num(key, v)?,
            "split.train_inpaint" => self.split_train_inpaint = parse_num(key, v)?,
            "split.train_refine" => self.split_train_refine = parse_num(key, v)?,
            "split.test" => self.split_test = parse_num(key, v)?,
            "split.seed" => self.split_seed = parse_num(key, v)?,
            "train.epochs_inpaint" => self.train_epochs_inpaint = parse_num(key, v)?,
            "train.epochs_refine" => self.train_epochs_refine = parse_num(key, v)?,
            "train.batch_size" => self.train_batch_size = parse_num(key, v)?,
            "train.seed" => self.train_seed = parse_num(key, v)?,
            "train.lr" => self.train_lr = parse_num(key, v)?,
            "train.schedule" => {
                self.train_schedule = match v {
                    "desk" => SchedulePreset::Desk,
                    "full" => SchedulePreset::Full,
                    _ => return Err(MarError::format(format!("unknown schedule '{v}'"))),
                }
            }
            "train.hole_weight" => self.train_hole_weight = parse_num(key, v)?,
            "model.depth" => self.model_depth = parse_num(key, v)?,
            "model.base_channels" => self.model_base_channels = parse_num(key, v)?,
            other => return Err(MarError::format(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Parse a config file body on top of the defaults.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        cfg.apply(text)?;
        Ok(cfg)
    }

    /// Apply a config file body to this config.
    pub fn apply(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(MarError::format(format!(
                    "line {}: expected key=value, got '{line}'",
                    lineno + 1
                )));
            };
            self.set(k, v)?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_min >= self.window_max {
            return Err(MarError::config("window.min must be below window.max"));
        }
        if self.geom_n_angles == 0 {
            return Err(MarError::config("geom.n_angles must be positive"));
        }
        if self.img_size < 16 {
            return Err(MarError::config("img.size must be at least 16"));
        }
        let split_sum = self.split_train_inpaint + self.split_train_refine + self.split_test;
        if (split_sum - 1.0).abs() > 1e-9 {
            return Err(MarError::config(format!(
                "split fractions sum to {split_sum}, not 1"
            )));
        }
        if self.train_batch_size == 0 {
            return Err(MarError::config("train.batch_size must be positive"));
        }
        Ok(())
    }

    /// Full `key=value` snapshot, one key per line, in documented order.
    pub fn snapshot(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| s.push_str(&format!("{k}={v}\n"));
        kv("geom.n_angles", self.geom_n_angles.to_string());
        kv("geom.n_bins", self.geom_n_bins.to_string());
        kv("img.size", self.img_size.to_string());
        kv("img.pixel_spacing", self.img_pixel_spacing.to_string());
        kv("window.min", self.window_min.to_string());
        kv("window.max", self.window_max.to_string());
        kv("pipeline.variant", self.pipeline_variant.clone());
        kv(
            "pipeline.metal_threshold",
            self.pipeline_metal_threshold.to_string(),
        );
        kv("pipeline.metal_hu", self.pipeline_metal_hu.to_string());
        kv("pipeline.filter", self.pipeline_filter.clone());
        kv(
            "pipeline.sino_divisor",
            self.pipeline_sino_divisor.to_string(),
        );
        kv("gen.seed", self.gen_seed.to_string());
        kv(
            "gen.max_volume_fraction",
            self.gen_max_volume_fraction.to_string(),
        );
        kv(
            "gen.primitive_count_min",
            self.gen_primitive_count_min.to_string(),
        );
        kv(
            "gen.primitive_count_max",
            self.gen_primitive_count_max.to_string(),
        );
        kv(
            "gen.primitive_max_size",
            self.gen_primitive_max_size.to_string(),
        );
        kv(
            "gen.outlier_count_max",
            self.gen_outlier_count_max.to_string(),
        );
        kv("gen.outlier_size_min", self.gen_outlier_size_min.to_string());
        kv("gen.outlier_size_max", self.gen_outlier_size_max.to_string());
        kv("gen.overlap_min", self.gen_overlap_min.to_string());
        kv(
            "gen.objects_per_scan_max",
            self.gen_objects_per_scan_max.to_string(),
        );
        kv("gen.masks_per_scan", self.gen_masks_per_scan.to_string());
        kv("gen.closing_radius", self.gen_closing_radius.to_string());
        kv("phantom.count", self.phantom_count.to_string());
        kv("phantom.slices", self.phantom_slices.to_string());
        kv("phantom.seed", self.phantom_seed.to_string());
        kv("split.train_inpaint", self.split_train_inpaint.to_string());
        kv("split.train_refine", self.split_train_refine.to_string());
        kv("split.test", self.split_test.to_string());
        kv("split.seed", self.split_seed.to_string());
        kv(
            "train.epochs_inpaint",
            self.train_epochs_inpaint.to_string(),
        );
        kv("train.epochs_refine", self.train_epochs_refine.to_string());
        kv("train.batch_size", self.train_batch_size.to_string());
        kv("train.seed", self.train_seed.to_string());
        kv("train.lr", self.train_lr.to_string());
        kv("train.schedule", self.train_schedule.to_string());
        kv("train.hole_weight", self.train_hole_weight.to_string());
        kv("model.depth", self.model_depth.to_string());
        kv("model.base_channels", self.model_base_channels.to_string());
        s
    }
}
