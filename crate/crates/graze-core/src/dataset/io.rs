//! On-disk dataset format.
//!
//! Per-sample binary (`.grz`): magic "GRZ1", version u16, then u32 T, H, W,
//! C, then T·H·W·C reflectance f32 values (frame-major, row-major within a
//! frame), then H·W polygon-mask bytes, then T u16 day-of-year values, then
//! T·H·W cloud-mask bytes, then a CRC32 of everything before it. All
//! integers little-endian.
//!
//! `manifest.json` lists the samples with label/year/path/frame counts plus
//! the generator config and seed for synthetic sets. Entries also carry the
//! spatial cluster id and the polygon ring so splits and round trips lose
//! nothing.

use super::polygon::FieldPolygon;
use super::synth::{generate_site, site_labels, SynthConfig};
use super::types::{ImageFrame, Label, SampleTimeSeries};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::Path;

pub const GRZ_MAGIC: [u8; 4] = *b"GRZ1";
pub const GRZ_VERSION: u16 = 1;
pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub site_id: u32,
    pub label: Label,
    pub year: u16,
    pub path: String,
    pub frames: u32,
    /// Spatial cluster id; sites sharing a cluster never straddle a split.
    pub cluster: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polygon: Option<Vec<(f64, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u16,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator_config: Option<SynthConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub samples: Vec<ManifestEntry>,
}

fn push_u16(buf: &mut Vec<u8>, v: u16) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

/// Serializes one sample to the GRZ1 byte layout.
pub fn encode_sample(sample: &SampleTimeSeries) -> Result<Vec<u8>> {
    sample.validate()?;
    let (t, h, w, c) = (
        sample.frames.len(),
        sample.height(),
        sample.width(),
        sample.channels(),
    );
    let mut buf = Vec::with_capacity(24 + t * h * w * (4 * c + 1) + h * w + 2 * t);
    buf.extend_from_slice(&GRZ_MAGIC);
    push_u16(&mut buf, GRZ_VERSION);
    for dim in [t, h, w, c] {
        push_u32(&mut buf, dim as u32);
    }
    for frame in &sample.frames {
        for &v in frame.reflectance.data() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    buf.extend_from_slice(&sample.polygon_mask);
    for frame in &sample.frames {
        push_u16(&mut buf, frame.day_of_year);
    }
    for frame in &sample.frames {
        buf.extend_from_slice(&frame.cloud_mask);
    }
    let crc = crc32fast::hash(&buf);
    push_u32(&mut buf, crc);
    Ok(buf)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format(format!(
                "truncated sample file: wanted {} bytes at offset {}, file has {}",
                n,
                self.pos,
                self.bytes.len()
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Parses GRZ1 bytes. Identity metadata (site id, label, year, polygon ring)
/// lives in the manifest and is supplied by the caller.
pub fn decode_sample(bytes: &[u8], entry: &ManifestEntry) -> Result<SampleTimeSeries> {
    if bytes.len() < 4 {
        return Err(Error::Format("file shorter than magic".into()));
    }
    let crc_stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    let crc_computed = crc32fast::hash(&bytes[..bytes.len() - 4]);
    if crc_stored != crc_computed {
        return Err(Error::Checksum { stored: crc_stored, computed: crc_computed });
    }
    let mut cur = Cursor { bytes: &bytes[..bytes.len() - 4], pos: 0 };
    if cur.take(4)? != GRZ_MAGIC {
        return Err(Error::Format("bad magic (not a GRZ1 sample file)".into()));
    }
    let version = cur.u16()?;
    if version != GRZ_VERSION {
        return Err(Error::Format(format!(
            "unsupported sample format version {version} (expected {GRZ_VERSION})"
        )));
    }
    let t = cur.u32()? as usize;
    let h = cur.u32()? as usize;
    let w = cur.u32()? as usize;
    let c = cur.u32()? as usize;
    if t == 0 || h == 0 || w == 0 || c == 0 {
        return Err(Error::Format(format!("degenerate dimensions T={t} H={h} W={w} C={c}")));
    }

    let mut reflectance = Vec::with_capacity(t);
    for _ in 0..t {
        let raw = cur.take(h * w * c * 4)?;
        let mut data = Vec::with_capacity(h * w * c);
        for chunk in raw.chunks_exact(4) {
            data.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
        }
        reflectance.push(Tensor::new(vec![h, w, c], data)?);
    }
    let polygon_mask = cur.take(h * w)?.to_vec();
    let mut days = Vec::with_capacity(t);
    for _ in 0..t {
        days.push(cur.u16()?);
    }
    let mut cloud_masks = Vec::with_capacity(t);
    for _ in 0..t {
        cloud_masks.push(cur.take(h * w)?.to_vec());
    }
    if cur.pos != cur.bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after sample payload",
            cur.bytes.len() - cur.pos
        )));
    }
    if polygon_mask.iter().chain(cloud_masks.iter().flatten()).any(|&b| b > 1) {
        return Err(Error::Format("mask bytes must be 0 or 1".into()));
    }

    let polygon = entry.polygon.as_ref().map(|ring| FieldPolygon {
        vertices: ring.clone(),
        site_id: entry.site_id,
        location: entry.location,
    });
    let frames = reflectance
        .into_iter()
        .zip(days)
        .zip(cloud_masks)
        .map(|((refl, day), cloud)| ImageFrame {
            day_of_year: day,
            reflectance: refl,
            cloud_mask: cloud,
        })
        .collect();
    let sample = SampleTimeSeries {
        site_id: entry.site_id,
        polygon,
        polygon_mask,
        frames,
        label: entry.label,
        year: entry.year,
    };
    sample.validate()?;
    Ok(sample)
}

fn entry_for(sample: &SampleTimeSeries, cluster: u32, path: String) -> ManifestEntry {
    ManifestEntry {
        site_id: sample.site_id,
        label: sample.label,
        year: sample.year,
        path,
        frames: sample.frames.len() as u32,
        cluster,
        polygon: sample.polygon.as_ref().map(|p| p.vertices.clone()),
        location: sample.polygon.as_ref().and_then(|p| p.location),
    }
}

fn sample_file_name(site_id: u32) -> String {
    format!("site_{site_id:05}.grz")
}

fn write_manifest(manifest: &DatasetManifest, dir: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(manifest)?;
    let mut f = fs::File::create(dir.join(MANIFEST_NAME))?;
    f.write_all(json.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Saves an in-memory dataset. `cluster_of` assigns the spatial cluster per
/// sample index.
pub fn save_dataset(
    samples: &[SampleTimeSeries],
    clusters: &[u32],
    generator_config: Option<&SynthConfig>,
    seed: Option<u64>,
    dir: &Path,
) -> Result<DatasetManifest> {
    if samples.len() != clusters.len() {
        return Err(Error::InvalidConfig("one cluster id per sample required".into()));
    }
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(samples.len());
    for (sample, &cluster) in samples.iter().zip(clusters) {
        let name = sample_file_name(sample.site_id);
        fs::write(dir.join(&name), encode_sample(sample)?)?;
        entries.push(entry_for(sample, cluster, name));
    }
    let manifest = DatasetManifest {
        version: GRZ_VERSION,
        generator_config: generator_config.cloned(),
        seed,
        samples: entries,
    };
    write_manifest(&manifest, dir)?;
    Ok(manifest)
}

/// Generates a synthetic dataset straight to disk, one site resident at a
/// time (full 407-site seasons do not fit comfortably in memory).
pub fn generate_to_dir(config: &SynthConfig, seed: u64, dir: &Path) -> Result<DatasetManifest> {
    config.validate()?;
    fs::create_dir_all(dir)?;
    let labels = site_labels(config);
    let mut entries = Vec::with_capacity(config.n_samples);
    for i in 0..config.n_samples {
        let sample = generate_site(config, seed, i as u32, labels[i]);
        let name = sample_file_name(sample.site_id);
        fs::write(dir.join(&name), encode_sample(&sample)?)?;
        entries.push(entry_for(&sample, config.cluster_of(i as u32), name));
    }
    let manifest = DatasetManifest {
        version: GRZ_VERSION,
        generator_config: Some(config.clone()),
        seed: Some(seed),
        samples: entries,
    };
    write_manifest(&manifest, dir)?;
    Ok(manifest)
}

pub fn load_manifest(dir: &Path) -> Result<DatasetManifest> {
    let manifest: DatasetManifest =
        serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_NAME))?)?;
    if manifest.version != GRZ_VERSION {
        return Err(Error::Format(format!(
            "unsupported manifest version {} (expected {GRZ_VERSION})",
            manifest.version
        )));
    }
    let mut seen = std::collections::HashSet::new();
    for entry in &manifest.samples {
        if !seen.insert(entry.site_id) {
            return Err(Error::Format(format!("duplicate site_id {} in manifest", entry.site_id)));
        }
    }
    Ok(manifest)
}

pub fn load_sample(dir: &Path, entry: &ManifestEntry) -> Result<SampleTimeSeries> {
    let bytes = fs::read(dir.join(&entry.path))?;
    let sample = decode_sample(&bytes, entry)?;
    if sample.frames.len() as u32 != entry.frames {
        return Err(Error::Format(format!(
            "site {}: manifest lists {} frames but file holds {}",
            entry.site_id,
            entry.frames,
            sample.frames.len()
        )));
    }
    Ok(sample)
}

/// Loads the manifest and every sample.
pub fn load_dataset(dir: &Path) -> Result<(DatasetManifest, Vec<SampleTimeSeries>)> {
    let manifest = load_manifest(dir)?;
    let samples = manifest
        .samples
        .iter()
        .map(|entry| load_sample(dir, entry))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synth::synth_generate;

    fn small_config() -> SynthConfig {
        SynthConfig {
            n_samples: 3,
            height: 16,
            width: 16,
            cadence_days: 20,
            cadence_jitter: 3,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let config = small_config();
        let samples = synth_generate(&config, 77).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let clusters: Vec<u32> = (0..samples.len()).map(|i| config.cluster_of(i as u32)).collect();
        save_dataset(&samples, &clusters, Some(&config), Some(77), dir.path()).unwrap();
        let (manifest, loaded) = load_dataset(dir.path()).unwrap();
        assert_eq!(manifest.seed, Some(77));
        assert_eq!(manifest.generator_config.as_ref(), Some(&config));
        assert_eq!(loaded, samples);
    }

    #[test]
    fn corrupted_magic_rejected() {
        let samples = synth_generate(&small_config(), 7).unwrap();
        let mut bytes = encode_sample(&samples[0]).unwrap();
        bytes[0] = b'X';
        // Fix the checksum so the failure is attributed to the magic.
        let crc = crc32fast::hash(&bytes[..bytes.len() - 4]);
        let n = bytes.len();
        bytes[n - 4..].copy_from_slice(&crc.to_le_bytes());
        let entry = entry_for(&samples[0], 0, "x.grz".into());
        assert!(matches!(decode_sample(&bytes, &entry), Err(Error::Format(_))));
    }

    #[test]
    fn bit_flip_caught_by_checksum() {
        let samples = synth_generate(&small_config(), 7).unwrap();
        let mut bytes = encode_sample(&samples[0]).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        let entry = entry_for(&samples[0], 0, "x.grz".into());
        assert!(matches!(decode_sample(&bytes, &entry), Err(Error::Checksum { .. })));
    }

    #[test]
    fn truncated_file_rejected() {
        let samples = synth_generate(&small_config(), 7).unwrap();
        let bytes = encode_sample(&samples[0]).unwrap();
        let entry = entry_for(&samples[0], 0, "x.grz".into());
        for cut in [3, 10, bytes.len() / 2] {
            assert!(decode_sample(&bytes[..cut], &entry).is_err());
        }
    }

    #[test]
    fn manifest_frame_counts_match_file_headers() {
        let config = small_config();
        let dir = tempfile::tempdir().unwrap();
        let manifest = generate_to_dir(&config, 13, dir.path()).unwrap();
        for entry in &manifest.samples {
            let sample = load_sample(dir.path(), entry).unwrap();
            assert_eq!(sample.frames.len() as u32, entry.frames);
        }
    }

    #[test]
    fn streaming_writer_matches_in_memory_generation() {
        let config = small_config();
        let dir = tempfile::tempdir().unwrap();
        generate_to_dir(&config, 99, dir.path()).unwrap();
        let (_, loaded) = load_dataset(dir.path()).unwrap();
        let expected = synth_generate(&config, 99).unwrap();
        assert_eq!(loaded, expected);
    }

    #[test]
    fn identical_seeds_identical_bytes() {
        let config = small_config();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        generate_to_dir(&config, 21, d1.path()).unwrap();
        generate_to_dir(&config, 21, d2.path()).unwrap();
        for name in ["manifest.json", "site_00000.grz", "site_00002.grz"] {
            let a = fs::read(d1.path().join(name)).unwrap();
            let b = fs::read(d2.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between runs");
        }
    }
}
