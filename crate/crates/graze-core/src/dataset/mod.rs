//! Polygon-labeled image time series: data model, preprocessing rules,
//! synthetic generation, persistence, and leakage-free splitting.

pub mod io;
pub mod polygon;
pub mod preprocess;
pub mod split;
pub mod synth;
pub mod types;

pub use io::{
    decode_sample, encode_sample, generate_to_dir, load_dataset, load_manifest, load_sample,
    save_dataset, DatasetManifest, ManifestEntry, GRZ_MAGIC, GRZ_VERSION, MANIFEST_NAME,
};
pub use polygon::{mask_area, rasterize_polygon, FieldPolygon};
pub use preprocess::{
    cloud_filter_set, compute_channel_stats, filter_cloudy_frames, normalize_and_mask,
    normalize_unmasked, prepare_sample, reject_tiny_polygon, CLOUD_THRESHOLD, STD_FLOOR,
};
pub use split::split_train_val;
pub use synth::{
    generate_site, seasonal_min_ndvi, site_labels, synth_generate, SynthConfig, BAND_COUNT,
};
pub use types::{
    ChannelStats, ImageFrame, Label, PreparedSample, SampleTimeSeries, MIN_POLYGON_PIXELS,
    REFLECTANCE_MAX, SEASON_END, SEASON_START,
};
