//! Synthetic site generator.
//!
//! Each site gets a simple star polygon, a double-logistic seasonal
//! phenology curve for its vegetation index, and — when labeled grazing —
//! one or more abrupt grazing events (sharp index drop, a hold period while
//! animals are present, then linear regrowth). The index maps affinely to
//! 13 spectral bands (NIR/red-edge loaded positively, red negatively),
//! plus white noise and optional bright cloud blobs.
//!
//! All randomness flows through per-site streams derived from
//! (seed, site_id, purpose), so generation is deterministic, order-free,
//! and label-independent except for the event stream: regenerating a site
//! with the opposite label yields an identical "phenology twin".

use super::polygon::{mask_area, rasterize_polygon, FieldPolygon};
use super::types::{
    ImageFrame, Label, SampleTimeSeries, MIN_POLYGON_PIXELS, REFLECTANCE_MAX, SEASON_END,
    SEASON_START,
};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rng::{stream_rng, Stream};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const BAND_COUNT: usize = 13;

/// Affine band model: reflectance = base + load · index.
/// Order B01..B09, B10, B11, B12; NIR (B08/B8A) and red edge (B05–B07)
/// positive, red (B04) and SWIR negative.
const BAND_BASE: [f64; BAND_COUNT] = [
    0.08, 0.06, 0.08, 0.16, 0.10, 0.12, 0.14, 0.16, 0.16, 0.10, 0.04, 0.22, 0.18,
];
const BAND_LOAD: [f64; BAND_COUNT] = [
    0.02, 0.02, 0.06, -0.13, 0.10, 0.28, 0.34, 0.38, 0.40, 0.05, 0.00, -0.08, -0.10,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n_samples: usize,
    /// Fraction of sites labeled grazing.
    pub grazing_fraction: f64,
    /// Mean days between acquisitions.
    pub cadence_days: u16,
    /// Uniform jitter ± on each acquisition gap; must stay below cadence.
    pub cadence_jitter: u16,
    /// Probability a frame carries cloud blobs.
    pub cloud_prob: f64,
    /// White-noise standard deviation added to every band.
    pub noise: f64,
    /// 0 = trivially separable, 1 = hardest the generator produces.
    pub difficulty: f64,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub year: u16,
    /// Consecutive sites share a farm cluster of this size (spatial grouping
    /// for leakage-free splits).
    pub sites_per_cluster: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_samples: 407,
            grazing_fraction: 0.62,
            cadence_days: 5,
            cadence_jitter: 2,
            cloud_prob: 0.15,
            noise: 0.02,
            difficulty: 0.5,
            height: 45,
            width: 45,
            channels: BAND_COUNT,
            year: 2023,
            sites_per_cluster: 4,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::InvalidConfig("n_samples must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.grazing_fraction) {
            return Err(Error::InvalidConfig("grazing_fraction must lie in [0,1]".into()));
        }
        if self.cadence_days == 0 || self.cadence_jitter >= self.cadence_days {
            return Err(Error::InvalidConfig(
                "cadence_days must be positive and exceed cadence_jitter".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.cloud_prob) {
            return Err(Error::InvalidConfig("cloud_prob must lie in [0,1)".into()));
        }
        if self.noise < 0.0 || !(0.0..=1.0).contains(&self.difficulty) {
            return Err(Error::InvalidConfig("noise must be ≥ 0 and difficulty in [0,1]".into()));
        }
        if self.height < 10 || self.width < 10 {
            return Err(Error::InvalidConfig("chip must be at least 10×10".into()));
        }
        if self.channels != BAND_COUNT {
            return Err(Error::InvalidConfig(format!(
                "band model is fixed at {BAND_COUNT} channels"
            )));
        }
        if self.sites_per_cluster == 0 {
            return Err(Error::InvalidConfig("sites_per_cluster must be positive".into()));
        }
        Ok(())
    }

    pub fn grazing_count(&self) -> usize {
        (self.n_samples as f64 * self.grazing_fraction).round() as usize
    }

    pub fn cluster_of(&self, site_id: u32) -> u32 {
        site_id / self.sites_per_cluster as u32
    }
}

/// Evenly interleaved label sequence with exactly `grazing_count` grazing
/// sites (Bresenham spacing keeps clusters mixed-label).
pub fn site_labels(config: &SynthConfig) -> Vec<Label> {
    let n = config.n_samples;
    let gz = config.grazing_count();
    (0..n)
        .map(|i| {
            if ((i + 1) * gz) / n > (i * gz) / n {
                Label::Grazing
            } else {
                Label::NoActivity
            }
        })
        .collect()
}

fn sigmoid(x: f64) -> f64 {
    crate::numerics::sigmoid(x)
}

/// Seasonal green-up / plateau / senescence curve parameters.
#[derive(Debug, Clone)]
struct Phenology {
    base: f64,
    peak: f64,
    greenup_mid: f64,
    greenup_rate: f64,
    senescence_mid: f64,
    senescence_rate: f64,
}

impl Phenology {
    fn draw(rng: &mut ChaCha8Rng, difficulty: f64) -> Self {
        Self {
            base: rng.random_range(0.12..0.17),
            peak: rng.random_range(0.62..0.80),
            // At difficulty 0 green-up completes before the season window;
            // harder settings push it into the observed range.
            greenup_mid: rng.random_range(60.0..75.0) + 30.0 * difficulty,
            greenup_rate: rng.random_range(0.20..0.30),
            senescence_mid: rng.random_range(330.0..350.0) - 35.0 * difficulty,
            senescence_rate: rng.random_range(0.10..0.15),
        }
    }

    fn index(&self, day: f64) -> f64 {
        let up = sigmoid(self.greenup_rate * (day - self.greenup_mid));
        let down = sigmoid(self.senescence_rate * (self.senescence_mid - day));
        self.base + (self.peak - self.base) * up * down
    }
}

/// One grazing event: instant drop, flat hold while grazed, linear recovery.
#[derive(Debug, Clone)]
struct GrazeEvent {
    start: f64,
    depth: f64,
    hold: f64,
    recovery: f64,
}

impl GrazeEvent {
    fn draw(rng: &mut ChaCha8Rng, difficulty: f64) -> Self {
        Self {
            start: rng.random_range(100.0..280.0),
            depth: rng.random_range(0.62..0.78) * (1.0 - 0.45 * difficulty),
            hold: rng.random_range(12.0..20.0) * (1.0 - 0.30 * difficulty),
            recovery: rng.random_range(25.0..45.0),
        }
    }

    /// Fraction of the event depth still active at `day`.
    fn profile(&self, day: f64) -> f64 {
        if day < self.start {
            0.0
        } else if day <= self.start + self.hold {
            1.0
        } else {
            (1.0 - (day - self.start - self.hold) / self.recovery).max(0.0)
        }
    }
}

fn draw_events(rng: &mut ChaCha8Rng, difficulty: f64) -> Vec<GrazeEvent> {
    let extra = Poisson::new(2.0).expect("valid Poisson rate").sample(rng) as usize;
    let count = (1 + extra).min(5);
    (0..count).map(|_| GrazeEvent::draw(rng, difficulty)).collect()
}

fn event_drop(events: &[GrazeEvent], day: f64) -> f64 {
    events
        .iter()
        .map(|e| e.depth * e.profile(day))
        .fold(0.0, f64::max)
}

/// Star polygon with randomized radii; simple by construction because vertex
/// angles increase monotonically.
fn draw_polygon(rng: &mut ChaCha8Rng, site_id: u32, config: &SynthConfig) -> (FieldPolygon, Vec<u8>) {
    let (h, w) = (config.height, config.width);
    for _ in 0..30 {
        let cx = rng.random_range(0.3 * w as f64..0.7 * w as f64);
        let cy = rng.random_range(0.3 * h as f64..0.7 * h as f64);
        let n_vertices = rng.random_range(5..=9);
        let base_radius: f64 = rng.random_range(3.5..10.0);
        let margin = [cx, cy, w as f64 - cx, h as f64 - cy]
            .into_iter()
            .fold(f64::INFINITY, f64::min)
            - 0.5;
        let mut vertices = Vec::with_capacity(n_vertices);
        for k in 0..n_vertices {
            let angle = 2.0 * PI * (k as f64 + rng.random_range(-0.25..0.25)) / n_vertices as f64;
            let radius = (base_radius * rng.random_range(0.6..1.4)).min(margin.max(2.0));
            vertices.push((cx + radius * angle.cos(), cy + radius * angle.sin()));
        }
        let poly = FieldPolygon { vertices, site_id, location: None };
        if poly.validate().is_err() {
            continue;
        }
        let mask = match rasterize_polygon(&poly, h, w) {
            Ok(m) => m,
            Err(_) => continue,
        };
        if mask_area(&mask) >= MIN_POLYGON_PIXELS {
            return (poly, mask);
        }
    }
    // Fallback: a guaranteed-valid centered square.
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let poly = FieldPolygon {
        vertices: vec![
            (cx - 3.0, cy - 3.0),
            (cx + 3.0, cy - 3.0),
            (cx + 3.0, cy + 3.0),
            (cx - 3.0, cy + 3.0),
        ],
        site_id,
        location: None,
    };
    let mask = rasterize_polygon(&poly, h, w).expect("square fallback rasterizes");
    (poly, mask)
}

fn draw_days(rng: &mut ChaCha8Rng, config: &SynthConfig) -> Vec<u16> {
    let jitter = config.cadence_jitter as i32;
    let mut day = SEASON_START as i32 + rng.random_range(0..config.cadence_days as i32);
    let mut days = Vec::new();
    while day <= SEASON_END as i32 {
        days.push(day as u16);
        day += config.cadence_days as i32 + rng.random_range(-jitter..=jitter);
    }
    days
}

/// Round through f32 so in-memory values match the on-disk encoding exactly.
fn quantize(v: f64) -> f64 {
    v as f32 as f64
}

/// Generates one site deterministically from (seed, site_id, label).
/// Everything except the grazing events is label-independent, so the two
/// labels yield phenology twins.
pub fn generate_site(
    config: &SynthConfig,
    seed: u64,
    site_id: u32,
    label: Label,
) -> SampleTimeSeries {
    let sid = site_id as u64;
    let mut phen_rng = stream_rng(seed, Stream::SiteGen, &[sid, 0]);
    let mut event_rng = stream_rng(seed, Stream::SiteGen, &[sid, 1]);
    let mut poly_rng = stream_rng(seed, Stream::SiteGen, &[sid, 2]);
    let mut cloud_rng = stream_rng(seed, Stream::SiteGen, &[sid, 3]);
    let mut noise_rng = stream_rng(seed, Stream::SiteGen, &[sid, 4]);
    let mut day_rng = stream_rng(seed, Stream::SiteGen, &[sid, 5]);
    let mut bg_rng = stream_rng(seed, Stream::SiteGen, &[sid, 6]);

    let (h, w, c) = (config.height, config.width, config.channels);
    let phenology = Phenology::draw(&mut phen_rng, config.difficulty);
    let events = match label {
        Label::Grazing => draw_events(&mut event_rng, config.difficulty),
        Label::NoActivity => Vec::new(),
    };
    let (mut polygon, mask) = draw_polygon(&mut poly_rng, site_id, config);
    let cluster = config.cluster_of(site_id);
    polygon.location = Some((
        57.0 + 0.05 * cluster as f64 + poly_rng.random_range(-0.01..0.01),
        14.0 + 0.03 * cluster as f64 + poly_rng.random_range(-0.01..0.01),
    ));
    let days = draw_days(&mut day_rng, config);

    // Static out-of-polygon background texture.
    let background: Vec<f64> = (0..h * w).map(|_| bg_rng.random_range(0.15..0.40)).collect();

    let noise_sd = config.noise + 0.015 * config.difficulty;
    let mut frames = Vec::with_capacity(days.len());
    for &day in &days {
        let idx_inside = phenology.index(day as f64) * (1.0 - event_drop(&events, day as f64));

        let mut reflectance = Tensor::zeros(&[h, w, c]);
        let data = reflectance.data_mut();
        for px in 0..h * w {
            let index = if mask[px] != 0 { idx_inside } else { background[px] };
            let base = px * c;
            for band in 0..c {
                let mut v = BAND_BASE[band] + BAND_LOAD[band] * index;
                if noise_sd > 0.0 {
                    let eps: f64 = rand_distr::StandardNormal.sample(&mut noise_rng);
                    v += noise_sd * eps;
                }
                data[base + band] = v.clamp(0.0, REFLECTANCE_MAX);
            }
        }

        // Cloud blobs: bright disks marked in the cloud mask.
        let mut cloud_mask = vec![0u8; h * w];
        if cloud_rng.random_range(0.0..1.0) < config.cloud_prob {
            let blobs = cloud_rng.random_range(1..=2);
            for _ in 0..blobs {
                let bx = cloud_rng.random_range(0.0..w as f64);
                let by = cloud_rng.random_range(0.0..h as f64);
                let radius = cloud_rng.random_range(3.0..9.0);
                let brightness = cloud_rng.random_range(0.55..0.85);
                for y in 0..h {
                    for x in 0..w {
                        let dx = x as f64 + 0.5 - bx;
                        let dy = y as f64 + 0.5 - by;
                        if dx * dx + dy * dy <= radius * radius {
                            let px = y * w + x;
                            cloud_mask[px] = 1;
                            let base = px * c;
                            for band in 0..c {
                                data[base + band] =
                                    (data[base + band].max(brightness)).min(REFLECTANCE_MAX);
                            }
                        }
                    }
                }
            }
        }

        for v in data.iter_mut() {
            *v = quantize(*v);
        }
        frames.push(ImageFrame { day_of_year: day, reflectance, cloud_mask });
    }

    SampleTimeSeries {
        site_id,
        polygon: Some(polygon),
        polygon_mask: mask,
        frames,
        label,
        year: config.year,
    }
}

/// Generates the whole dataset in memory. Large configurations should prefer
/// the streaming writer in the io module.
pub fn synth_generate(config: &SynthConfig, seed: u64) -> Result<Vec<SampleTimeSeries>> {
    config.validate()?;
    let labels = site_labels(config);
    Ok((0..config.n_samples)
        .map(|i| generate_site(config, seed, i as u32, labels[i]))
        .collect())
}

/// In-polygon mean NDVI, minimized over the season — the diagnostic quantity
/// the difficulty-0 separability guarantee is stated on. Uses B08 (NIR) and
/// B04 (red).
pub fn seasonal_min_ndvi(sample: &SampleTimeSeries) -> f64 {
    let c = sample.channels();
    let (h, w) = (sample.height(), sample.width());
    let mut min_val = f64::INFINITY;
    for frame in &sample.frames {
        let data = frame.reflectance.data();
        let mut acc = 0.0;
        let mut n = 0usize;
        for px in 0..h * w {
            if sample.polygon_mask[px] == 0 {
                continue;
            }
            let nir = data[px * c + 7];
            let red = data[px * c + 3];
            acc += (nir - red) / (nir + red).max(1e-9);
            n += 1;
        }
        if n > 0 {
            min_val = min_val.min(acc / n as f64);
        }
    }
    min_val
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fast_config(n: usize) -> SynthConfig {
        SynthConfig {
            n_samples: n,
            height: 24,
            width: 24,
            cadence_days: 10,
            cadence_jitter: 2,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn balance_contract_exact_counts() {
        let config = SynthConfig { n_samples: 4, grazing_fraction: 0.5, ..fast_config(4) };
        let labels = site_labels(&config);
        assert_eq!(labels.iter().filter(|&&l| l == Label::Grazing).count(), 2);
        let samples = synth_generate(&config, 11).unwrap();
        assert_eq!(samples.iter().filter(|s| s.label == Label::Grazing).count(), 2);
    }

    #[test]
    fn labels_interleave_across_clusters() {
        let config = SynthConfig { grazing_fraction: 0.5, ..fast_config(16) };
        let labels = site_labels(&config);
        // Every 4-site cluster sees both labels at 50% balance.
        for cluster in labels.chunks(4) {
            assert!(cluster.iter().any(|&l| l == Label::Grazing));
            assert!(cluster.iter().any(|&l| l == Label::NoActivity));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let config = fast_config(3);
        let a = synth_generate(&config, 5).unwrap();
        let b = synth_generate(&config, 5).unwrap();
        assert_eq!(a, b);
        let c = synth_generate(&config, 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn samples_validate_and_meet_area_rule() {
        let config = fast_config(6);
        for sample in synth_generate(&config, 17).unwrap() {
            sample.validate().unwrap();
            assert!(sample.polygon_pixels() >= MIN_POLYGON_PIXELS);
            assert!(sample.polygon.as_ref().unwrap().location.is_some());
        }
    }

    #[test]
    fn difficulty_zero_is_threshold_separable() {
        let config = SynthConfig {
            difficulty: 0.0,
            noise: 0.0,
            cloud_prob: 0.0,
            ..fast_config(24)
        };
        let samples = synth_generate(&config, 29).unwrap();
        let grazed_max = samples
            .iter()
            .filter(|s| s.label == Label::Grazing)
            .map(|s| seasonal_min_ndvi(s))
            .fold(f64::NEG_INFINITY, f64::max);
        let ungrazed_min = samples
            .iter()
            .filter(|s| s.label == Label::NoActivity)
            .map(|s| seasonal_min_ndvi(s))
            .fold(f64::INFINITY, f64::min);
        assert!(
            grazed_max < ungrazed_min,
            "expected clean margin, got grazed max {grazed_max} vs ungrazed min {ungrazed_min}"
        );
    }

    #[test]
    fn phenology_twins_differ_only_by_events() {
        let config = SynthConfig { noise: 0.0, cloud_prob: 0.0, ..fast_config(4) };
        let grazed = generate_site(&config, 41, 2, Label::Grazing);
        let ungrazed = generate_site(&config, 41, 2, Label::NoActivity);
        assert_eq!(grazed.polygon_mask, ungrazed.polygon_mask);
        assert_eq!(
            grazed.frames.iter().map(|f| f.day_of_year).collect::<Vec<_>>(),
            ungrazed.frames.iter().map(|f| f.day_of_year).collect::<Vec<_>>()
        );
        assert!(seasonal_min_ndvi(&grazed) < seasonal_min_ndvi(&ungrazed));
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(SynthConfig { n_samples: 0, ..SynthConfig::default() }.validate().is_err());
        assert!(SynthConfig { cadence_jitter: 5, cadence_days: 5, ..SynthConfig::default() }
            .validate()
            .is_err());
        assert!(SynthConfig { channels: 12, ..SynthConfig::default() }.validate().is_err());
        assert!(SynthConfig { difficulty: 1.5, ..SynthConfig::default() }.validate().is_err());
    }

    #[test]
    fn values_quantize_to_f32_exactly() {
        let config = fast_config(2);
        for sample in synth_generate(&config, 3).unwrap() {
            for frame in &sample.frames {
                for &v in frame.reflectance.data() {
                    assert_eq!(v, v as f32 as f64);
                }
            }
        }
    }

    #[test]
    fn cloudy_frames_get_marked() {
        let config = SynthConfig { cloud_prob: 0.9, ..fast_config(3) };
        let samples = synth_generate(&config, 53).unwrap();
        let any_clouds = samples
            .iter()
            .flat_map(|s| &s.frames)
            .any(|f| f.cloud_mask.iter().any(|&m| m != 0));
        assert!(any_clouds);
    }
}
