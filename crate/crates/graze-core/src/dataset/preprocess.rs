//! Preprocessing pipeline. Order is fixed: rasterize → cloud-filter →
//! tiny-polygon rejection → normalize+mask; statistics always come from the
//! training split.

use super::types::{ChannelStats, PreparedSample, SampleTimeSeries, MIN_POLYGON_PIXELS};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const CLOUD_THRESHOLD: f64 = 0.01;
pub const STD_FLOOR: f64 = 1e-6;

/// Drops every frame whose in-polygon cloudy fraction is at least
/// `threshold` ("at least 1% cloudy pixels"). Returns the number of dropped
/// frames; a sample left with no frames is reported as empty so the caller
/// can discard it.
pub fn filter_cloudy_frames(sample: &mut SampleTimeSeries, threshold: f64) -> Result<usize> {
    let poly_px = sample.polygon_pixels();
    if poly_px == 0 {
        return Err(Error::EmptySample { site_id: sample.site_id });
    }
    let mask = sample.polygon_mask.clone();
    let before = sample.frames.len();
    sample.frames.retain(|frame| {
        let cloudy_inside = frame
            .cloud_mask
            .iter()
            .zip(&mask)
            .filter(|&(&c, &m)| c != 0 && m != 0)
            .count();
        (cloudy_inside as f64 / poly_px as f64) < threshold
    });
    if sample.frames.is_empty() {
        return Err(Error::EmptySample { site_id: sample.site_id });
    }
    Ok(before - sample.frames.len())
}

/// Area rule for "smaller than 3×3 pixels": accept iff at least 9 rasterized
/// pixels.
pub fn reject_tiny_polygon(mask: &[u8]) -> bool {
    super::polygon::mask_area(mask) >= MIN_POLYGON_PIXELS
}

/// Population mean/std per channel over the in-polygon pixels of every frame
/// of every training sample; std floored at 1e-6.
pub fn compute_channel_stats(samples: &[SampleTimeSeries]) -> Result<ChannelStats> {
    let channels = samples.first().map(|s| s.channels()).ok_or_else(|| {
        Error::InvalidConfig("channel stats need at least one sample".into())
    })?;
    let mut sum = vec![0.0f64; channels];
    let mut sum_sq = vec![0.0f64; channels];
    let mut count = 0u64;
    for sample in samples {
        if sample.channels() != channels {
            return Err(Error::shape("channel_stats", format!("{channels} channels"), format!("{}", sample.channels())));
        }
        let (h, w) = (sample.height(), sample.width());
        for frame in &sample.frames {
            let data = frame.reflectance.data();
            for px in 0..h * w {
                if sample.polygon_mask[px] == 0 {
                    continue;
                }
                let base = px * channels;
                for c in 0..channels {
                    let v = data[base + c];
                    sum[c] += v;
                    sum_sq[c] += v * v;
                }
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::InvalidConfig("no in-polygon pixels for channel stats".into()));
    }
    let n = count as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std: Vec<f64> = sum_sq
        .iter()
        .zip(&mean)
        .map(|(sq, m)| ((sq / n - m * m).max(0.0)).sqrt().max(STD_FLOOR))
        .collect();
    Ok(ChannelStats { mean, std })
}

/// (v − mean)/std on in-polygon pixels; out-of-polygon pixels are exactly 0,
/// i.e. the post-normalization channel mean. Identical at train and
/// inference time.
pub fn normalize_and_mask(sample: &SampleTimeSeries, stats: &ChannelStats) -> Result<PreparedSample> {
    normalize(sample, stats, true)
}

/// Normalization without masking (full unmasked chip); used by the
/// polygon-free ablations. Statistics are still the in-polygon training
/// stats.
pub fn normalize_unmasked(sample: &SampleTimeSeries, stats: &ChannelStats) -> Result<PreparedSample> {
    normalize(sample, stats, false)
}

fn normalize(sample: &SampleTimeSeries, stats: &ChannelStats, mask_out: bool) -> Result<PreparedSample> {
    let channels = sample.channels();
    if stats.mean.len() != channels || stats.std.len() != channels {
        return Err(Error::shape("normalize", format!("{channels}-channel stats"), format!("{}", stats.mean.len())));
    }
    let (h, w) = (sample.height(), sample.width());
    let mut frames = Vec::with_capacity(sample.frames.len());
    for frame in &sample.frames {
        let mut out = Tensor::zeros(&[h, w, channels]);
        let src = frame.reflectance.data();
        let dst = out.data_mut();
        for px in 0..h * w {
            if mask_out && sample.polygon_mask[px] == 0 {
                continue;
            }
            let base = px * channels;
            for c in 0..channels {
                dst[base + c] = (src[base + c] - stats.mean[c]) / stats.std[c];
            }
        }
        frames.push(out);
    }
    Ok(PreparedSample {
        site_id: sample.site_id,
        frames,
        days: sample.frames.iter().map(|f| f.day_of_year).collect(),
        polygon_mask: sample.polygon_mask.clone(),
        label: sample.label,
    })
}

/// Full pipeline for one already-rasterized sample. Returns `None` when the
/// sample is dropped by the cloud filter (no frames left) or the tiny-polygon
/// rule. `mask` controls whether out-of-polygon pixels are zeroed; the
/// polygon-free model ablations read the full chip.
pub fn prepare_sample(
    sample: &SampleTimeSeries,
    stats: &ChannelStats,
    mask: bool,
) -> Result<Option<PreparedSample>> {
    if !reject_tiny_polygon(&sample.polygon_mask) {
        return Ok(None);
    }
    let mut filtered = sample.clone();
    match filter_cloudy_frames(&mut filtered, CLOUD_THRESHOLD) {
        Ok(_) => {}
        Err(Error::EmptySample { .. }) => return Ok(None),
        Err(e) => return Err(e),
    }
    let normalize = if mask { normalize_and_mask } else { normalize_unmasked };
    Ok(Some(normalize(&filtered, stats)?))
}

/// Cloud-filters a whole set and keeps the survivors; used before computing
/// training statistics so stats see exactly the frames the model will see.
pub fn cloud_filter_set(samples: Vec<SampleTimeSeries>) -> Vec<SampleTimeSeries> {
    samples
        .into_iter()
        .filter_map(|mut s| {
            if !reject_tiny_polygon(&s.polygon_mask) {
                return None;
            }
            match filter_cloudy_frames(&mut s, CLOUD_THRESHOLD) {
                Ok(_) => Some(s),
                Err(_) => None,
            }
        })
        .collect()
}
