//! Content-addressed cache for attacked datasets.
//!
//! Generating fake profiles can dominate a grid run, so injected datasets are
//! persisted under a key derived from everything that determines their
//! content. A hit must be byte-identical to what a fresh generation would
//! produce; a corrupt entry is discarded and regenerated.

use std::collections::hash_map::RandomState;
use std::hash::{BuildHasher, Hasher};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{FeedbackKind, Interaction, InteractionDataset, Origin, RatingScale};
use crate::error::{Error, Result};

/// Environment variable overriding the cache root directory.
pub const CACHE_ROOT_ENV: &str = "SHILLBENCH_CACHE_DIR";

const META_FILE: &str = "meta.json";
const DATA_FILE: &str = "interactions.tsv";

/// Content hash identifying one attacked-dataset artifact.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CacheKey(String);

impl CacheKey {
    /// Key over everything that determines an attacked dataset: source
    /// dataset id, preprocessing description, attack name, canonical attack
    /// parameters and the seed.
    pub fn for_attack(
        dataset_id: &str,
        preprocessing: &str,
        attack_name: &str,
        attack_params: &str,
        seed: u64,
    ) -> Self {
        let mut h = Sha256::new();
        for part in [
            dataset_id,
            preprocessing,
            attack_name,
            attack_params,
            &seed.to_string(),
        ] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        let digest = h.finalize();
        let mut hex = String::with_capacity(64);
        for b in digest {
            hex.push_str(&format!("{b:02x}"));
        }
        CacheKey(hex)
    }

    /// Key over an arbitrary list of canonical strings. `kind` namespaces
    /// the key so different artifact families never collide.
    pub fn from_parts(kind: &str, parts: &[&str]) -> Self {
        let mut h = Sha256::new();
        h.update((kind.len() as u64).to_le_bytes());
        h.update(kind.as_bytes());
        for part in parts {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        let digest = h.finalize();
        let mut hex = String::with_capacity(64);
        for b in digest {
            hex.push_str(&format!("{b:02x}"));
        }
        CacheKey(hex)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

#[derive(Serialize, Deserialize)]
struct CacheMeta {
    version: u32,
    name: String,
    feedback: FeedbackKind,
    scale: RatingScale,
    user_ids: Vec<String>,
    item_ids: Vec<String>,
    origin: Option<Vec<Origin>>,
    n_interactions: usize,
}

const CACHE_VERSION: u32 = 1;

pub struct DatasetCache {
    root: PathBuf,
}

impl DatasetCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DatasetCache { root: root.into() }
    }

    /// Cache under `default_root`, unless the `SHILLBENCH_CACHE_DIR`
    /// environment variable points somewhere else.
    pub fn from_env(default_root: impl Into<PathBuf>) -> Self {
        match std::env::var_os(CACHE_ROOT_ENV) {
            Some(dir) if !dir.is_empty() => DatasetCache::new(PathBuf::from(dir)),
            _ => DatasetCache::new(default_root),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn entry_dir(&self, key: &CacheKey) -> PathBuf {
        self.root.join(key.as_str())
    }

    /// Serialize `d` under `key`. The entry is staged in a scratch directory
    /// and renamed into place so readers never observe a partial write.
    pub fn persist_attacked(&self, d: &InteractionDataset, key: &CacheKey) -> Result<()> {
        let final_dir = self.entry_dir(key);
        if final_dir.exists() {
            return Ok(());
        }
        std::fs::create_dir_all(&self.root).map_err(|e| Error::io(&self.root, e))?;

        let mut salt_hasher = RandomState::new().build_hasher();
        salt_hasher.write_u32(std::process::id());
        let tmp = self.root.join(format!(
            ".tmp-{}-{:x}",
            &key.as_str()[..16],
            salt_hasher.finish()
        ));
        std::fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;

        let meta = CacheMeta {
            version: CACHE_VERSION,
            name: d.name().to_string(),
            feedback: d.feedback(),
            scale: d.scale(),
            user_ids: d.user_ids().to_vec(),
            item_ids: d.item_ids().to_vec(),
            origin: d.origin().map(|o| o.to_vec()),
            n_interactions: d.n_interactions(),
        };
        let meta_path = tmp.join(META_FILE);
        let meta_json =
            serde_json::to_string_pretty(&meta).map_err(|e| Error::Cache(e.to_string()))?;
        std::fs::write(&meta_path, meta_json).map_err(|e| Error::io(&meta_path, e))?;

        let data_path = tmp.join(DATA_FILE);
        std::fs::write(&data_path, interactions_to_tsv(d)).map_err(|e| Error::io(&data_path, e))?;

        match std::fs::rename(&tmp, &final_dir) {
            Ok(()) => Ok(()),
            Err(e) => {
                let _ = std::fs::remove_dir_all(&tmp);
                if final_dir.exists() {
                    // lost a benign race with another writer of the same key
                    Ok(())
                } else {
                    Err(Error::io(&final_dir, e))
                }
            }
        }
    }

    /// Load the entry for `key`, or None on a miss. A corrupt entry is
    /// removed, logged, and reported as a miss so the caller regenerates it.
    pub fn load_cached(&self, key: &CacheKey) -> Option<InteractionDataset> {
        let dir = self.entry_dir(key);
        if !dir.exists() {
            return None;
        }
        match read_entry(&dir) {
            Ok(d) => Some(d),
            Err(e) => {
                log::warn!(
                    "discarding corrupt cache entry {}: {e}",
                    dir.display()
                );
                let _ = std::fs::remove_dir_all(&dir);
                None
            }
        }
    }
}

fn read_entry(dir: &Path) -> Result<InteractionDataset> {
    let meta_path = dir.join(META_FILE);
    let meta_text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: CacheMeta =
        serde_json::from_str(&meta_text).map_err(|e| Error::Cache(e.to_string()))?;
    if meta.version != CACHE_VERSION {
        return Err(Error::Cache(format!(
            "cache version {} does not match {CACHE_VERSION}",
            meta.version
        )));
    }

    let data_path = dir.join(DATA_FILE);
    let data = std::fs::read_to_string(&data_path).map_err(|e| Error::io(&data_path, e))?;
    let mut interactions = Vec::with_capacity(meta.n_interactions);
    for (i, line) in data.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        let parse_err = || Error::Cache(format!("{}: bad row {}", data_path.display(), i + 1));
        let user: u32 = cols.next().ok_or_else(parse_err)?.parse().map_err(|_| parse_err())?;
        let item: u32 = cols.next().ok_or_else(parse_err)?.parse().map_err(|_| parse_err())?;
        let rating: f64 = cols.next().ok_or_else(parse_err)?.parse().map_err(|_| parse_err())?;
        let ts_raw = cols.next().ok_or_else(parse_err)?;
        let timestamp = if ts_raw.is_empty() {
            None
        } else {
            Some(ts_raw.parse().map_err(|_| parse_err())?)
        };
        interactions.push(Interaction {
            user,
            item,
            rating,
            timestamp,
        });
    }
    if interactions.len() != meta.n_interactions {
        return Err(Error::Cache(format!(
            "{}: expected {} interactions, found {}",
            data_path.display(),
            meta.n_interactions,
            interactions.len()
        )));
    }

    InteractionDataset::from_parts(
        meta.name,
        meta.user_ids,
        meta.item_ids,
        interactions,
        meta.feedback,
        meta.scale,
        meta.origin,
    )
    .map_err(|e| Error::Cache(format!("{}: {e}", dir.display())))
}

/// Canonical interaction dump; floats use the shortest round-tripping form.
fn interactions_to_tsv(d: &InteractionDataset) -> String {
    let mut out = String::with_capacity(d.n_interactions() * 16);
    for it in d.interactions() {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            it.user,
            it.item,
            it.rating,
            it.timestamp.map(|t| t.to_string()).unwrap_or_default()
        ));
    }
    out
}

/// Full canonical serialization (metadata plus interactions) used by the
/// byte-stability tests.
#[cfg(test)]
pub(crate) fn canonical_bytes(d: &InteractionDataset) -> Vec<u8> {
    let meta = CacheMeta {
        version: CACHE_VERSION,
        name: d.name().to_string(),
        feedback: d.feedback(),
        scale: d.scale(),
        user_ids: d.user_ids().to_vec(),
        item_ids: d.item_ids().to_vec(),
        origin: d.origin().map(|o| o.to_vec()),
        n_interactions: d.n_interactions(),
    };
    let mut bytes = serde_json::to_vec_pretty(&meta).expect("meta serializes");
    bytes.push(b'\n');
    bytes.extend_from_slice(interactions_to_tsv(d).as_bytes());
    bytes
}

/// Export in the interchange layout: raw ids, rating, timestamp and an
/// origin column, tab separated with a header.
pub fn export_delimited(d: &InteractionDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("user\titem\trating\ttimestamp\torigin\n");
    for it in d.interactions() {
        let origin = match d.origin() {
            Some(labels) if labels[it.user as usize] == Origin::Fake => "fake",
            _ => "genuine",
        };
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            d.user_ids()[it.user as usize],
            d.item_ids()[it.item as usize],
            it.rating,
            it.timestamp.map(|t| t.to_string()).unwrap_or_default(),
            origin
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
