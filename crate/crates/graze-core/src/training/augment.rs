//! Training-time augmentation: axis flips, random crop with zero padding
//! back to the input size, and temporal dropout.
//!
//! All three transforms leave the label untouched, keep the polygon mask and
//! imagery aligned, and never emit a sample with an empty mask or zero
//! frames. Each draws from the caller's RNG in a fixed order, so a given
//! stream position always produces the same augmented sample.

use crate::dataset::{PreparedSample, MIN_POLYGON_PIXELS};
use crate::numerics::Tensor;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemporalDropoutConfig {
    /// Probability that a series is subjected to dropout at all.
    pub series_prob: f64,
    /// Per-frame removal probability once the series is selected.
    pub step_prob: f64,
    /// Frames restored (latest-dated first) when too few survive.
    pub min_keep: usize,
}

impl Default for TemporalDropoutConfig {
    fn default() -> Self {
        Self { series_prob: 0.5, step_prob: 0.35, min_keep: 4 }
    }
}

fn flip_pixels<T: Copy>(data: &[T], h: usize, w: usize, per_px: usize, horizontal: bool, vertical: bool, out: &mut Vec<T>) {
    out.clear();
    out.reserve(data.len());
    for y in 0..h {
        let sy = if vertical { h - 1 - y } else { y };
        for x in 0..w {
            let sx = if horizontal { w - 1 - x } else { x };
            let base = (sy * w + sx) * per_px;
            out.extend_from_slice(&data[base..base + per_px]);
        }
    }
}

/// Flips left-right with probability `prob`, and independently top-down with
/// probability `prob`; imagery and polygon mask flip together.
pub fn augment_flip(sample: &PreparedSample, prob: f64, rng: &mut impl Rng) -> PreparedSample {
    let horizontal = rng.random::<f64>() < prob;
    let vertical = rng.random::<f64>() < prob;
    if !horizontal && !vertical {
        return sample.clone();
    }
    let (h, w) = sample_extent(sample);
    let channels = sample.frames[0].shape()[2];
    let mut out = sample.clone();
    let mut buf = Vec::new();
    for (dst, src) in out.frames.iter_mut().zip(&sample.frames) {
        flip_pixels(src.data(), h, w, channels, horizontal, vertical, &mut buf);
        dst.data_mut().copy_from_slice(&buf);
    }
    let mut mask_buf = Vec::new();
    flip_pixels(&sample.polygon_mask, h, w, 1, horizontal, vertical, &mut mask_buf);
    out.polygon_mask = mask_buf;
    out
}

fn sample_extent(sample: &PreparedSample) -> (usize, usize) {
    let shape = sample.frames[0].shape();
    (shape[0], shape[1])
}

/// Crops a random square window and zero-pads it back to the full chip at
/// the top-left. The side is uniform over the ten sizes `[h−9, h]` (36–45
/// for standard chips) and the placement uniform; a window leaving fewer
/// than 9 polygon pixels is rejected and redrawn, and after 10 rejections
/// the crop is skipped.
pub fn augment_crop(sample: &PreparedSample, rng: &mut impl Rng) -> PreparedSample {
    let (h, w) = sample_extent(sample);
    let lo = h.min(w).saturating_sub(9).max(1);
    for _ in 0..10 {
        let side = rng.random_range(lo..=h.min(w));
        let top = rng.random_range(0..=h - side);
        let left = rng.random_range(0..=w - side);
        if side == h && side == w {
            return sample.clone();
        }
        let kept = (top..top + side)
            .map(|y| {
                sample.polygon_mask[y * w + left..y * w + left + side]
                    .iter()
                    .filter(|&&m| m != 0)
                    .count()
            })
            .sum::<usize>();
        if kept < MIN_POLYGON_PIXELS {
            continue;
        }
        let channels = sample.frames[0].shape()[2];
        let mut out = sample.clone();
        for (dst, src) in out.frames.iter_mut().zip(&sample.frames) {
            let mut cropped = Tensor::zeros(&[h, w, channels]);
            for y in 0..side {
                let src_base = ((top + y) * w + left) * channels;
                let dst_base = y * w * channels;
                cropped.data_mut()[dst_base..dst_base + side * channels]
                    .copy_from_slice(&src.data()[src_base..src_base + side * channels]);
            }
            *dst = cropped;
        }
        let mut mask = vec![0u8; h * w];
        for y in 0..side {
            mask[y * w..y * w + side]
                .copy_from_slice(&sample.polygon_mask[(top + y) * w + left..(top + y) * w + left + side]);
        }
        out.polygon_mask = mask;
        return out;
    }
    sample.clone()
}

/// Removes random frames: the whole series is selected for dropout with
/// `series_prob`, then each frame drops independently with `step_prob`.
/// When fewer than `min_keep` frames survive, the latest-dated removed
/// frames are restored until `min_keep` remain (or all, for shorter series).
pub fn temporal_dropout(
    sample: &PreparedSample,
    cfg: &TemporalDropoutConfig,
    rng: &mut impl Rng,
) -> PreparedSample {
    if rng.random::<f64>() >= cfg.series_prob {
        return sample.clone();
    }
    let t = sample.frames.len();
    let mut dropped: Vec<bool> = (0..t).map(|_| rng.random::<f64>() < cfg.step_prob).collect();
    let floor = cfg.min_keep.min(t);
    let mut kept = dropped.iter().filter(|&&d| !d).count();
    if kept < floor {
        // Restore latest-dated first; ties broken toward the later index.
        let mut candidates: Vec<usize> = (0..t).filter(|&i| dropped[i]).collect();
        candidates.sort_by_key(|&i| (std::cmp::Reverse(sample.days[i]), std::cmp::Reverse(i)));
        for i in candidates {
            if kept >= floor {
                break;
            }
            dropped[i] = false;
            kept += 1;
        }
    }
    let keep: Vec<usize> = (0..t).filter(|&i| !dropped[i]).collect();
    PreparedSample {
        site_id: sample.site_id,
        frames: keep.iter().map(|&i| sample.frames[i].clone()).collect(),
        days: keep.iter().map(|&i| sample.days[i]).collect(),
        polygon_mask: sample.polygon_mask.clone(),
        label: sample.label,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Label;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_sample(h: usize, w: usize, t: usize) -> PreparedSample {
        let channels = 2usize;
        let mut mask = vec![0u8; h * w];
        // A solid polygon block in the upper-left quadrant.
        for y in 2..2 + h / 2 {
            for x in 1..1 + w / 2 {
                mask[y * w + x] = 1;
            }
        }
        let frames: Vec<Tensor> = (0..t)
            .map(|f| {
                let mut tensor = Tensor::zeros(&[h, w, channels]);
                for px in 0..h * w {
                    if mask[px] == 1 {
                        for c in 0..channels {
                            tensor.data_mut()[px * channels + c] =
                                (f * h * w + px) as f64 * 0.01 + c as f64;
                        }
                    }
                }
                tensor
            })
            .collect();
        PreparedSample {
            site_id: 1,
            frames,
            days: (0..t).map(|i| 100 + 5 * i as u16).collect(),
            polygon_mask: mask,
            label: Label::Grazing,
        }
    }

    fn mask_count(mask: &[u8]) -> usize {
        mask.iter().filter(|&&m| m != 0).count()
    }

    #[test]
    fn double_flip_is_identity() {
        let sample = toy_sample(12, 12, 2);
        // prob=1 forces both axes; applying twice restores the original.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let once = augment_flip(&sample, 1.0, &mut rng);
        let twice = augment_flip(&once, 1.0, &mut rng);
        assert_eq!(twice.frames[0].data(), sample.frames[0].data());
        assert_eq!(twice.polygon_mask, sample.polygon_mask);
        assert_ne!(once.frames[0].data(), sample.frames[0].data());
    }

    #[test]
    fn flip_moves_mask_and_image_together() {
        let sample = toy_sample(10, 14, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let flipped = augment_flip(&sample, 1.0, &mut rng);
        assert_eq!(mask_count(&flipped.polygon_mask), mask_count(&sample.polygon_mask));
        // Nonzero pixels sit exactly where the mask is.
        let c = 2;
        for px in 0..10 * 14 {
            let nonzero = (0..c).any(|ch| flipped.frames[0].data()[px * c + ch] != 0.0);
            assert_eq!(nonzero, flipped.polygon_mask[px] == 1, "pixel {px}");
        }
    }

    #[test]
    fn zero_prob_flip_is_identity() {
        let sample = toy_sample(9, 9, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = augment_flip(&sample, 0.0, &mut rng);
        assert_eq!(out.frames[1].data(), sample.frames[1].data());
        assert_eq!(out.polygon_mask, sample.polygon_mask);
    }

    #[test]
    fn crop_preserves_shape_and_mask_floor() {
        let sample = toy_sample(45, 45, 2);
        for seed in 0..30 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = augment_crop(&sample, &mut rng);
            assert_eq!(out.frames[0].shape(), &[45, 45, 2]);
            assert!(mask_count(&out.polygon_mask) >= MIN_POLYGON_PIXELS);
            // Imagery stays inside the surviving mask.
            for px in 0..45 * 45 {
                if out.polygon_mask[px] == 0 {
                    assert_eq!(out.frames[0].data()[px * 2], 0.0);
                }
            }
        }
    }

    #[test]
    fn full_size_crop_is_identity() {
        let sample = toy_sample(45, 45, 1);
        // Find a seed whose first side draw is 45.
        for seed in 0..200 {
            let mut probe = ChaCha8Rng::seed_from_u64(seed);
            if probe.random_range(36..=45usize) == 45 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let out = augment_crop(&sample, &mut rng);
                assert_eq!(out.frames[0].data(), sample.frames[0].data());
                return;
            }
        }
        panic!("no identity-crop seed found in 200 tries");
    }

    #[test]
    fn hopeless_crop_skips_after_retries() {
        // Polygon hugging the bottom-right corner, 3×3 = 9 pixels: most
        // crops lose part of it, so the skip path must kick in sometimes.
        let mut sample = toy_sample(45, 45, 1);
        sample.polygon_mask = vec![0u8; 45 * 45];
        for y in 42..45 {
            for x in 42..45 {
                sample.polygon_mask[y * 45 + x] = 1;
            }
        }
        let mut seen_skip = false;
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = augment_crop(&sample, &mut rng);
            assert!(mask_count(&out.polygon_mask) >= 9, "seed {seed}");
            if out.polygon_mask == sample.polygon_mask {
                seen_skip = true;
            }
        }
        assert!(seen_skip);
    }

    #[test]
    fn dropout_identity_branch_keeps_everything() {
        let sample = toy_sample(8, 8, 6);
        let cfg = TemporalDropoutConfig { series_prob: 0.0, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let out = temporal_dropout(&sample, &cfg, &mut rng);
        assert_eq!(out.frames.len(), 6);
        assert_eq!(out.days, sample.days);
    }

    #[test]
    fn dropout_floor_restores_latest_dated() {
        let sample = toy_sample(8, 8, 6);
        let cfg = TemporalDropoutConfig { series_prob: 1.0, step_prob: 1.0, min_keep: 4 };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // Every frame drops, so exactly the 4 latest-dated come back.
        let out = temporal_dropout(&sample, &cfg, &mut rng);
        assert_eq!(out.days, vec![110, 115, 120, 125]);
    }

    #[test]
    fn dropout_short_series_survives_whole() {
        let sample = toy_sample(8, 8, 3);
        let cfg = TemporalDropoutConfig { series_prob: 1.0, step_prob: 1.0, min_keep: 4 };
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = temporal_dropout(&sample, &cfg, &mut rng);
            assert_eq!(out.frames.len(), 3, "seed {seed}");
        }
    }

    #[test]
    fn dropout_keeps_frame_order_and_alignment() {
        let sample = toy_sample(8, 8, 12);
        let cfg = TemporalDropoutConfig::default();
        for seed in 0..40 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = temporal_dropout(&sample, &cfg, &mut rng);
            assert!(out.frames.len() >= 4);
            assert!(out.days.windows(2).all(|w| w[0] < w[1]), "seed {seed}");
            // Each surviving frame still matches its day's original content.
            for (frame, day) in out.frames.iter().zip(&out.days) {
                let orig = (day - 100) / 5;
                assert_eq!(frame.data(), sample.frames[orig as usize].data());
            }
        }
    }

    #[test]
    fn dropout_survivor_rate_near_expectation() {
        let sample = toy_sample(4, 4, 40);
        let cfg = TemporalDropoutConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let draws = 20_000usize;
        let mut total = 0usize;
        for _ in 0..draws {
            total += temporal_dropout(&sample, &cfg, &mut rng).frames.len();
        }
        let mean = total as f64 / draws as f64 / 40.0;
        // sd of the per-draw fraction is 0.183; 4 sigma at 20k draws.
        assert!((mean - 0.825).abs() < 4.0 * 0.183 / (draws as f64).sqrt(), "{mean}");
    }
}
