//! Architecture configuration and the named ablation table.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Band order backing `band_subset` indices 0..13 (Sentinel-2 L2A order).
pub const BAND_NAMES: [&str; 13] = [
    "B01", "B02", "B03", "B04", "B05", "B06", "B07", "B08", "B8A", "B09", "B10", "B11", "B12",
];

pub const ABLATION_NAMES: [&str; 7] = [
    "main",
    "only_last",
    "no_poly",
    "poly_input",
    "no_rgb",
    "no_rgb_no_veg",
    "only_rgb_veg",
];

/// How per-step probabilities turn into a single prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierMode {
    /// Median of the last `vote_window` per-step probabilities.
    LastFour,
    /// Threshold the final step's probability alone.
    OnlyLast,
}

/// How the polygon enters the input tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    /// Out-of-polygon pixels zeroed.
    Masked,
    /// Full chip, no polygon information at all.
    NoPoly,
    /// Full chip plus the binary polygon mask as an extra channel.
    PolyExtraChannel,
}

impl InputMode {
    pub fn masks(self) -> bool {
        matches!(self, InputMode::Masked)
    }

    pub fn adds_polygon_channel(self) -> bool {
        matches!(self, InputMode::PolyExtraChannel)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_channels: usize,
    pub conv_filters: usize,
    pub conv_kernel: usize,
    pub pool_window: usize,
    pub pool_stride: usize,
    pub lstm_hidden: usize,
    /// Number of trailing per-step probabilities in the deployment vote.
    pub vote_window: usize,
    pub classifier_mode: ClassifierMode,
    pub input_mode: InputMode,
    /// Indices into the 13-band order that reach the model, ascending.
    pub band_subset: Vec<usize>,
    pub height: usize,
    pub width: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_channels: 13,
            conv_filters: 8,
            conv_kernel: 7,
            pool_window: 3,
            pool_stride: 3,
            lstm_hidden: 16,
            vote_window: 4,
            classifier_mode: ClassifierMode::LastFour,
            input_mode: InputMode::Masked,
            band_subset: (0..13).collect(),
            height: 45,
            width: 45,
        }
    }
}

impl ModelConfig {
    pub fn main() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        if self.conv_kernel % 2 == 0 || self.conv_kernel == 0 {
            return Err(Error::InvalidConfig(format!(
                "conv kernel must be odd and positive, got {}",
                self.conv_kernel
            )));
        }
        for (name, v) in [
            ("input_channels", self.input_channels),
            ("conv_filters", self.conv_filters),
            ("pool_window", self.pool_window),
            ("pool_stride", self.pool_stride),
            ("lstm_hidden", self.lstm_hidden),
            ("vote_window", self.vote_window),
            ("height", self.height),
            ("width", self.width),
        ] {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if !self.band_subset.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidConfig(
                "band_subset must be strictly ascending".into(),
            ));
        }
        if let Some(&max) = self.band_subset.last() {
            if max >= BAND_NAMES.len() {
                return Err(Error::InvalidConfig(format!(
                    "band index {max} out of range (13 bands)"
                )));
            }
        }
        let extra = usize::from(self.input_mode.adds_polygon_channel());
        if self.band_subset.len() + extra != self.input_channels {
            return Err(Error::InvalidConfig(format!(
                "band_subset length {} + {extra} polygon channel != input_channels {}",
                self.band_subset.len(),
                self.input_channels
            )));
        }
        Ok(())
    }

    pub fn pooled_height(&self) -> usize {
        self.height.div_ceil(self.pool_stride)
    }

    pub fn pooled_width(&self) -> usize {
        self.width.div_ceil(self.pool_stride)
    }

    /// Length of the flattened per-frame feature vector fed to the biLSTM.
    pub fn feature_len(&self) -> usize {
        self.pooled_height() * self.pooled_width() * self.conv_filters
    }

    /// Length of one biLSTM step output (both directions concatenated).
    pub fn lstm_output_len(&self) -> usize {
        2 * self.lstm_hidden
    }
}

/// The named configurations evaluated in the ablation study. RGB is B02-B04
/// and the vegetation red-edge group is B05-B07; the 60 m atmospheric band
/// B01 is grouped with whichever block is being dropped, so the reduced
/// inputs are 9 (no RGB) and 6 (neither / only RGB+red-edge) channels.
pub fn configure_ablation(name: &str) -> Result<ModelConfig> {
    let mut config = ModelConfig::main();
    match name {
        "main" => {}
        "only_last" => config.classifier_mode = ClassifierMode::OnlyLast,
        "no_poly" => config.input_mode = InputMode::NoPoly,
        "poly_input" => {
            config.input_mode = InputMode::PolyExtraChannel;
            config.input_channels = 14;
        }
        "no_rgb" => {
            config.band_subset = (4..13).collect();
            config.input_channels = 9;
        }
        "no_rgb_no_veg" => {
            config.band_subset = (7..13).collect();
            config.input_channels = 6;
        }
        "only_rgb_veg" => {
            config.band_subset = (1..7).collect();
            config.input_channels = 6;
        }
        other => return Err(Error::UnknownAblation(other.to_string())),
    }
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn main_config_is_valid_and_13_channel() {
        let c = ModelConfig::main();
        c.validate().unwrap();
        assert_eq!(c.input_channels, 13);
        assert_eq!(c.feature_len(), 15 * 15 * 8);
        assert_eq!(c.lstm_output_len(), 32);
    }

    #[test]
    fn ablation_channel_counts_match_the_table() {
        let counts: Vec<(usize, &str)> = ABLATION_NAMES
            .iter()
            .map(|n| (configure_ablation(n).unwrap().input_channels, *n))
            .collect();
        assert_eq!(
            counts,
            vec![
                (13, "main"),
                (13, "only_last"),
                (13, "no_poly"),
                (14, "poly_input"),
                (9, "no_rgb"),
                (6, "no_rgb_no_veg"),
                (6, "only_rgb_veg"),
            ]
        );
    }

    #[test]
    fn ablation_modes_set_exactly_the_right_flags() {
        assert_eq!(
            configure_ablation("only_last").unwrap().classifier_mode,
            ClassifierMode::OnlyLast
        );
        assert_eq!(
            configure_ablation("no_poly").unwrap().input_mode,
            InputMode::NoPoly
        );
        assert_eq!(
            configure_ablation("poly_input").unwrap().input_mode,
            InputMode::PolyExtraChannel
        );
        // Band-subset ablations keep the default masked mode and vote.
        let nr = configure_ablation("no_rgb").unwrap();
        assert_eq!(nr.input_mode, InputMode::Masked);
        assert_eq!(nr.classifier_mode, ClassifierMode::LastFour);
        assert_eq!(nr.band_subset, (4..13).collect::<Vec<_>>());
        assert_eq!(
            configure_ablation("only_rgb_veg").unwrap().band_subset,
            (1..7).collect::<Vec<_>>()
        );
        assert_eq!(
            configure_ablation("no_rgb_no_veg").unwrap().band_subset,
            (7..13).collect::<Vec<_>>()
        );
    }

    #[test]
    fn unknown_ablation_is_rejected_by_name() {
        let err = configure_ablation("attention").unwrap_err();
        assert!(err.to_string().contains("attention"));
    }

    #[test]
    fn subset_length_invariant_enforced() {
        let mut c = ModelConfig::main();
        c.band_subset = vec![0, 1, 2];
        assert!(c.validate().is_err());
        c.input_channels = 3;
        c.validate().unwrap();
        // Polygon channel counts toward input_channels but not the subset.
        c.input_mode = InputMode::PolyExtraChannel;
        assert!(c.validate().is_err());
        c.input_channels = 4;
        c.validate().unwrap();
    }

    #[test]
    fn config_round_trips_through_json() {
        let c = configure_ablation("poly_input").unwrap();
        let json = serde_json::to_string(&c).unwrap();
        assert!(json.contains("poly_extra_channel"));
        let back: ModelConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
    }
}
