//! Versioned JSON checkpoints: named tensors plus a free-form metadata map
//! (vocabularies, dimensions, training settings).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::params::{Param, ParamStore};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("tensor {name} has {got} values, shape implies {want}")]
    Shape { name: String, got: usize, want: usize },
}

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointDoc {
    version: u32,
    meta: BTreeMap<String, serde_json::Value>,
    tensors: Vec<TensorRecord>,
}

pub struct Checkpoint {
    pub meta: BTreeMap<String, serde_json::Value>,
    pub store: ParamStore,
}

pub fn save_checkpoint(
    path: &Path,
    store: &ParamStore,
    meta: &BTreeMap<String, serde_json::Value>,
) -> Result<(), CheckpointError> {
    let doc = CheckpointDoc {
        version: CHECKPOINT_VERSION,
        meta: meta.clone(),
        tensors: (0..store.len())
            .map(|i| {
                let p = store.entry(i);
                TensorRecord {
                    name: store.name(i).to_string(),
                    rows: p.rows,
                    cols: p.cols,
                    data: p.data.clone(),
                }
            })
            .collect(),
    };
    fs::write(path, serde_json::to_string(&doc)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let text = fs::read_to_string(path)?;
    let doc: CheckpointDoc = serde_json::from_str(&text)?;
    if doc.version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(doc.version));
    }
    let mut store = ParamStore::new();
    for t in doc.tensors {
        if t.data.len() != t.rows * t.cols {
            return Err(CheckpointError::Shape {
                name: t.name,
                got: t.data.len(),
                want: t.rows * t.cols,
            });
        }
        store.insert(
            &t.name,
            Param {
                data: t.data,
                rows: t.rows,
                cols: t.cols,
            },
        );
    }
    Ok(Checkpoint {
        meta: doc.meta,
        store,
    })
}

pub fn meta_usize(meta: &BTreeMap<String, serde_json::Value>, key: &str) -> Option<usize> {
    meta.get(key)?.as_u64().map(|v| v as usize)
}

pub fn meta_strings(meta: &BTreeMap<String, serde_json::Value>, key: &str) -> Option<Vec<String>> {
    meta.get(key)?
        .as_array()?
        .iter()
        .map(|v| v.as_str().map(|s| s.to_string()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_preserves_values_and_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        store.add_matrix("dec.w", 3, 4, &mut rng);
        store.add_vector("dec.b", 3, &mut rng);
        let mut meta = BTreeMap::new();
        meta.insert("hidden".into(), serde_json::json!(3));
        meta.insert("vocab".into(), serde_json::json!(["a", "b"]));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_checkpoint(&path, &store, &meta).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.store.len(), 2);
        assert_eq!(back.store.name(0), "dec.w");
        assert_eq!(back.store.get("dec.b").unwrap(), store.get("dec.b").unwrap());
        assert_eq!(meta_usize(&back.meta, "hidden"), Some(3));
        assert_eq!(
            meta_strings(&back.meta, "vocab"),
            Some(vec!["a".to_string(), "b".to_string()])
        );
    }

    #[test]
    fn bad_shape_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(
            &path,
            r#"{"version":1,"meta":{},"tensors":[{"name":"x","rows":2,"cols":2,"data":[1.0]}]}"#,
        )
        .unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(CheckpointError::Shape { .. })
        ));
    }

    #[test]
    fn future_version_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v9.json");
        std::fs::write(&path, r#"{"version":9,"meta":{},"tensors":[]}"#).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(CheckpointError::Version(9))
        ));
    }
}
