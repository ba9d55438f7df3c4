//! Dataset manifest: sample lineage, file references, and config fingerprint.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetConfig, Split};
use crate::error::CoreError;
use crate::raster::{CityParams, ElevationGrid, GeometricTransform, TxLocation};
use crate::rng::stable_hash_hex;
use crate::Result;

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Where the base scenes came from, as recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SceneSourceSpec {
    /// Synthetic cities; scene `i` is regenerable from the master seed.
    Synthetic { params: CityParams, count: usize },
    /// Caller-provided grids, pinned by a content digest.
    Grids { count: usize, digest: String },
}

impl SceneSourceSpec {
    pub fn scene_count(&self) -> usize {
        match self {
            SceneSourceSpec::Synthetic { count, .. } => *count,
            SceneSourceSpec::Grids { count, .. } => *count,
        }
    }
}

/// Content digest of a grid list; order-sensitive.
pub fn scene_digest(grids: &[ElevationGrid]) -> String {
    let mut bytes = Vec::new();
    for g in grids {
        bytes.extend_from_slice(&(g.width_px as u64).to_le_bytes());
        bytes.extend_from_slice(&(g.height_px as u64).to_le_bytes());
        bytes.extend_from_slice(&g.resolution_m.to_le_bytes());
        bytes.extend_from_slice(&g.origin_x_m.to_le_bytes());
        bytes.extend_from_slice(&g.origin_y_m.to_le_bytes());
        for h in &g.heights {
            bytes.extend_from_slice(&h.to_le_bytes());
        }
    }
    stable_hash_hex(&bytes)
}

/// Everything that determines dataset content besides the master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub source: SceneSourceSpec,
    /// Transmitter draws per scene.
    pub n_tx: usize,
    pub dataset: DatasetConfig,
}

impl GeneratorConfig {
    /// Fingerprint over the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("generator config serializes");
        stable_hash_hex(text.as_bytes())
    }
}

/// One stored sample: a (input, target) container pair plus lineage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    /// `{base_id}-{transform}`.
    pub id: String,
    /// Lineage key shared by all variants of one (scene, tx) pair.
    pub base_id: String,
    pub scene_id: String,
    /// Transmitter in the source scene frame, snapped to its cell center;
    /// identical across the variants of a base.
    pub tx: TxLocation,
    pub extent_m: f64,
    pub transform: GeometricTransform,
    /// Fold index of the base scenario, set by `apply_assignment`.
    pub fold: Option<usize>,
    /// Split in the applied fold rotation.
    pub split: Option<Split>,
    /// Container base paths relative to the manifest directory.
    pub input: String,
    pub target: String,
}

/// A base scenario dropped during generation, with the reason kept on record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkippedRecord {
    pub base_id: String,
    pub scene_id: String,
    /// Absent when the scene's transmitter draw itself failed.
    pub tx: Option<TxLocation>,
    pub reason: String,
}

/// Completion marker and index of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub master_seed: u64,
    pub config: GeneratorConfig,
    pub config_hash: String,
    pub records: Vec<SampleRecord>,
    pub skipped: Vec<SkippedRecord>,
}

impl DatasetManifest {
    /// Unique base ids, in first-appearance order.
    pub fn base_ids(&self) -> Vec<&str> {
        let mut seen = std::collections::BTreeSet::new();
        let mut out: Vec<&str> = Vec::new();
        for r in &self.records {
            if seen.insert(r.base_id.as_str()) {
                out.push(&r.base_id);
            }
        }
        out
    }

    /// Records belonging to one base scenario, in variant order.
    pub fn records_for_base<'a>(&'a self, base_id: &str) -> Vec<&'a SampleRecord> {
        self.records
            .iter()
            .filter(|r| r.base_id == base_id)
            .collect()
    }

    /// Records carrying the given split assignment.
    pub fn records_in_split(&self, split: Split) -> Vec<&SampleRecord> {
        self.records
            .iter()
            .filter(|r| r.split == Some(split))
            .collect()
    }

    /// Structural checks that need no file access.
    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(CoreError::invalid(format!(
                "manifest version {} unsupported (expected {MANIFEST_VERSION})",
                self.version
            )));
        }
        if self.config.n_tx == 0 {
            return Err(CoreError::invalid("manifest config has n_tx = 0"));
        }
        self.config.dataset.validate()?;
        let expect = self.config.hash();
        if self.config_hash != expect {
            return Err(CoreError::invalid(format!(
                "config hash {} does not match the config ({expect})",
                self.config_hash
            )));
        }

        let mut ids = std::collections::BTreeSet::new();
        for r in &self.records {
            if !ids.insert(r.id.as_str()) {
                return Err(CoreError::invalid(format!("duplicate sample id {}", r.id)));
            }
            if r.id != format!("{}-{}", r.base_id, r.transform.id()) {
                return Err(CoreError::invalid(format!(
                    "sample id {} does not encode base {} and transform {}",
                    r.id,
                    r.base_id,
                    r.transform.id()
                )));
            }
            if Path::new(&r.input).is_absolute() || Path::new(&r.target).is_absolute() {
                return Err(CoreError::invalid(format!(
                    "sample {} uses absolute file refs",
                    r.id
                )));
            }
        }

        // Variants of one base share lineage, fold, and split.
        let mut by_base: BTreeMap<&str, &SampleRecord> = BTreeMap::new();
        for r in &self.records {
            let first = by_base.entry(r.base_id.as_str()).or_insert(r);
            let same = first.scene_id == r.scene_id
                && first.tx == r.tx
                && first.extent_m.to_bits() == r.extent_m.to_bits()
                && first.fold == r.fold
                && first.split == r.split;
            if !same {
                return Err(CoreError::invalid(format!(
                    "variants of base {} disagree on lineage or split",
                    r.base_id
                )));
            }
        }
        Ok(())
    }

    /// [`validate`](Self::validate) plus existence of every referenced file.
    pub fn validate_files(&self, dir: &Path) -> Result<()> {
        self.validate()?;
        for r in &self.records {
            for base in [&r.input, &r.target] {
                for ext in ["json", "f32"] {
                    let p = dir.join(format!("{base}.{ext}"));
                    if !p.is_file() {
                        return Err(CoreError::MalformedArtifact {
                            path: p,
                            reason: format!("file referenced by sample {} is missing", r.id),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Serialize the manifest into `dir`, atomically via a temporary file.
/// Returns the manifest path.
pub fn save_manifest(dir: &Path, manifest: &DatasetManifest) -> Result<PathBuf> {
    manifest.validate()?;
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(manifest).map_err(|e| {
        CoreError::MalformedArtifact {
            path: path.clone(),
            reason: e.to_string(),
        }
    })?;
    text.push('\n');
    let tmp = dir.join(format!("{MANIFEST_FILE}.tmp"));
    fs::write(&tmp, text).map_err(|e| CoreError::io(&tmp, e))?;
    fs::rename(&tmp, &path).map_err(|e| CoreError::io(&path, e))?;
    Ok(path)
}

/// Load and validate a manifest, checking that every file ref resolves
/// relative to the manifest's directory.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| CoreError::MalformedArtifact {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    manifest.validate_files(dir)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagate::PropagationConfig;

    fn config() -> GeneratorConfig {
        GeneratorConfig {
            source: SceneSourceSpec::Synthetic {
                params: CityParams::default(),
                count: 3,
            },
            n_tx: 2,
            dataset: DatasetConfig::default(),
        }
    }

    fn record(base: &str, t: GeometricTransform) -> SampleRecord {
        let id = format!("{base}-{}", t.id());
        SampleRecord {
            id: id.clone(),
            base_id: base.to_string(),
            scene_id: "scene-0000".to_string(),
            tx: TxLocation {
                x_m: 5.0,
                y_m: 5.0,
                height_m: 10.0,
            },
            extent_m: 600.0,
            transform: t,
            fold: None,
            split: None,
            input: format!("samples/{id}.input"),
            target: format!("samples/{id}.target"),
        }
    }

    fn manifest() -> DatasetManifest {
        let config = config();
        let config_hash = config.hash();
        DatasetManifest {
            version: MANIFEST_VERSION,
            master_seed: 7,
            config,
            config_hash,
            records: vec![
                record("scene-0000-tx00", GeometricTransform::Identity),
                record("scene-0000-tx00", GeometricTransform::Rot90),
            ],
            skipped: vec![],
        }
    }

    #[test]
    fn validate_accepts_consistent_manifest() {
        manifest().validate().unwrap();
    }

    #[test]
    fn validate_rejects_duplicate_and_mismatched_ids() {
        let mut m = manifest();
        m.records[1] = m.records[0].clone();
        assert!(m.validate().is_err());

        let mut m = manifest();
        m.records[1].id = "wrong".to_string();
        assert!(m.validate().is_err());
    }

    #[test]
    fn validate_rejects_split_disagreement_within_base() {
        let mut m = manifest();
        m.records[1].split = Some(Split::Test);
        assert!(m.validate().is_err());
    }

    #[test]
    fn validate_rejects_stale_config_hash() {
        let mut m = manifest();
        m.config.n_tx = 3;
        assert!(m.validate().is_err());
        m.config_hash = m.config.hash();
        m.validate().unwrap();
    }

    /// Changing any generator config field must change the fingerprint.
    #[test]
    fn config_hash_tracks_every_field() {
        let base = config().hash();
        let mut variants: Vec<GeneratorConfig> = Vec::new();

        let mut c = config();
        c.n_tx = 3;
        variants.push(c);

        let mut c = config();
        c.source = SceneSourceSpec::Synthetic {
            params: CityParams {
                building_density: 0.31,
                ..CityParams::default()
            },
            count: 3,
        };
        variants.push(c);

        let mut c = config();
        c.source = SceneSourceSpec::Synthetic {
            params: CityParams::default(),
            count: 4,
        };
        variants.push(c);

        let mut c = config();
        c.source = SceneSourceSpec::Grids {
            count: 3,
            digest: "deadbeef".to_string(),
        };
        variants.push(c);

        let mut c = config();
        c.dataset.out_px = 32;
        variants.push(c);

        let mut c = config();
        c.dataset.extent_min_m = 700.0;
        variants.push(c);

        let mut c = config();
        c.dataset.extent_max_m = 2000.0;
        variants.push(c);

        let mut c = config();
        c.dataset.augment_variants = 3;
        variants.push(c);

        let mut c = config();
        c.dataset.tx_height_m = 12.0;
        variants.push(c);

        let mut c = config();
        c.dataset.propagation = PropagationConfig {
            max_depth: 5,
            ..PropagationConfig::default()
        };
        variants.push(c);

        let mut hashes: Vec<String> = variants.iter().map(GeneratorConfig::hash).collect();
        hashes.push(base.clone());
        let distinct: std::collections::BTreeSet<&String> = hashes.iter().collect();
        assert_eq!(distinct.len(), hashes.len(), "all hashes must differ");
        assert_eq!(config().hash(), base, "hash is pure");
    }

    #[test]
    fn scene_digest_is_content_sensitive() {
        let g1 = ElevationGrid::new(2, 2, 1.0, 0.0, 0.0, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let mut g2 = g1.clone();
        g2.heights[3] = 4.0;
        let d1 = scene_digest(std::slice::from_ref(&g1));
        assert_eq!(d1, scene_digest(&[g1.clone()]));
        assert_ne!(d1, scene_digest(&[g2.clone()]));
        assert_ne!(
            scene_digest(&[g1.clone(), g2.clone()]),
            scene_digest(&[g2, g1])
        );
    }

    #[test]
    fn save_load_round_trip_and_missing_file_detection() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = manifest();
        m.records.truncate(1);

        // Materialize the referenced containers.
        std::fs::create_dir_all(dir.path().join("samples")).unwrap();
        let img = crate::raster::NormalizedImage {
            px: 8,
            resolution_m: 75.0,
            origin_x_m: 0.0,
            origin_y_m: 0.0,
            values: vec![0.5; 64],
        };
        for base in [&m.records[0].input, &m.records[0].target] {
            crate::raster::save_image(&dir.path().join(base), &img).unwrap();
        }

        let path = save_manifest(dir.path(), &m).unwrap();
        let back = load_manifest(&path).unwrap();
        assert_eq!(m, back);
        assert!(!dir.path().join("manifest.json.tmp").exists());

        std::fs::remove_file(dir.path().join(format!("{}.f32", m.records[0].target))).unwrap();
        match load_manifest(&path) {
            Err(CoreError::MalformedArtifact { reason, .. }) => {
                assert!(reason.contains("missing"), "reason: {reason}");
            }
            other => panic!("expected MalformedArtifact, got {other:?}"),
        }
    }

    #[test]
    fn load_rejects_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let m = DatasetManifest {
            records: vec![],
            ..manifest()
        };
        let path = save_manifest(dir.path(), &m).unwrap();
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replacen("\"version\"", "\"surprise\": 1, \"version\"", 1);
        std::fs::write(&path, text).unwrap();
        assert!(load_manifest(&path).is_err());
    }
}
