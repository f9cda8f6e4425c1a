//! Sample data model: labeled polygon-masked image time series.

use super::polygon::{mask_area, FieldPolygon};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use serde::{Deserialize, Serialize};

/// Observation window: April 1 through October 31 as days of year.
pub const SEASON_START: u16 = 91;
pub const SEASON_END: u16 = 304;

/// Reflectance ceiling before normalization.
pub const REFLECTANCE_MAX: f64 = 1.5;

/// Minimum rasterized polygon area in pixels (3×3).
pub const MIN_POLYGON_PIXELS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "no_activity")]
    NoActivity,
    #[serde(rename = "grazing")]
    Grazing,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::NoActivity => 0,
            Label::Grazing => 1,
        }
    }

    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Label::NoActivity),
            1 => Ok(Label::Grazing),
            other => Err(Error::Format(format!("invalid label byte {other}"))),
        }
    }

    /// Training target: grazing is the positive class.
    pub fn target(self) -> f64 {
        self.as_u8() as f64
    }
}

/// One acquisition: 13-band reflectance chip plus its cloud mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageFrame {
    pub day_of_year: u16,
    /// `[H, W, C]`.
    pub reflectance: Tensor,
    /// Row-major 0/1 bytes, H·W.
    pub cloud_mask: Vec<u8>,
}

/// One site's full season of observations.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTimeSeries {
    pub site_id: u32,
    /// Vertex ring when known (synthesis or manifest); the rasterized mask
    /// below is the operational field.
    pub polygon: Option<FieldPolygon>,
    /// Row-major 0/1 bytes, H·W.
    pub polygon_mask: Vec<u8>,
    pub frames: Vec<ImageFrame>,
    pub label: Label,
    pub year: u16,
}

impl SampleTimeSeries {
    pub fn height(&self) -> usize {
        self.frames.first().map(|f| f.reflectance.shape()[0]).unwrap_or(0)
    }

    pub fn width(&self) -> usize {
        self.frames.first().map(|f| f.reflectance.shape()[1]).unwrap_or(0)
    }

    pub fn channels(&self) -> usize {
        self.frames.first().map(|f| f.reflectance.shape()[2]).unwrap_or(0)
    }

    pub fn polygon_pixels(&self) -> usize {
        mask_area(&self.polygon_mask)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::EmptySample { site_id: self.site_id });
        }
        let (h, w, c) = (self.height(), self.width(), self.channels());
        if self.polygon_mask.len() != h * w {
            return Err(Error::shape("sample mask", format!("{}×{}", h, w), format!("{} bytes", self.polygon_mask.len())));
        }
        let mut prev_day = 0u16;
        for (i, frame) in self.frames.iter().enumerate() {
            let shape = frame.reflectance.shape();
            if shape != [h, w, c] {
                return Err(Error::shape("sample frames", format!("{h}×{w}×{c}"), format!("{shape:?}")));
            }
            if frame.cloud_mask.len() != h * w {
                return Err(Error::shape("cloud mask", format!("{}", h * w), format!("{}", frame.cloud_mask.len())));
            }
            if frame.day_of_year < SEASON_START || frame.day_of_year > SEASON_END {
                return Err(Error::Format(format!(
                    "site {}: day {} outside season window",
                    self.site_id, frame.day_of_year
                )));
            }
            if i > 0 && frame.day_of_year <= prev_day {
                return Err(Error::Format(format!(
                    "site {}: frame days not strictly increasing at index {i}",
                    self.site_id
                )));
            }
            prev_day = frame.day_of_year;
            for &v in frame.reflectance.data() {
                if !(0.0..=REFLECTANCE_MAX).contains(&v) {
                    return Err(Error::Format(format!(
                        "site {}: reflectance {v} outside [0, {REFLECTANCE_MAX}]",
                        self.site_id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Per-channel normalization statistics from the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// A sample after the full preprocessing pipeline: normalized f64 frames
/// ready for the model, with the mask and acquisition days retained.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSample {
    pub site_id: u32,
    /// `[H, W, C]` per frame, time-ordered.
    pub frames: Vec<Tensor>,
    pub days: Vec<u16>,
    pub polygon_mask: Vec<u8>,
    pub label: Label,
}

impl PreparedSample {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}
