//! Dataset schema, on-disk layout, and paragraph-disjoint splitting.
//!
//! Directory layout: `maps/<id>.map` (map documents), `demos.jsonl` (one
//! record per line), `lexicon.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path as FsPath;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lexicon::Lexicon;
use crate::cas::{parse_cas, AttrValue, CasCommand};
use crate::worldmodel::{load_map, save_map, segment_path, Path, Pose, WorldMap};

use super::CorpusError;

#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub map_id: String,
    pub poses: Vec<Pose>,
    /// One command per path segment.
    pub cas: Vec<CasCommand>,
    /// One sentence per path segment.
    pub instruction: Vec<String>,
    pub instructor_id: String,
    pub paragraph_id: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DemoRecord {
    map_id: String,
    poses: Vec<Pose>,
    cas: Vec<String>,
    instruction: Vec<String>,
    instructor_id: String,
    paragraph_id: String,
}

#[derive(Debug, Default)]
pub struct Dataset {
    pub maps: BTreeMap<String, WorldMap>,
    pub demos: Vec<Demonstration>,
    pub lexicon: Lexicon,
    pub warnings: Vec<String>,
}

/// Every entity label a map can support in a command.
fn map_labels(map: &WorldMap) -> std::collections::BTreeSet<String> {
    let mut labels: std::collections::BTreeSet<String> = map.object_vocab().into_iter().collect();
    labels.extend(map.floor_color_vocab().into_iter().map(|c| format!("{c}_floor")));
    labels.extend(map.floor_texture_vocab().into_iter().map(|t| format!("{t}_texture")));
    labels.extend(map.wall_feature_vocab().into_iter().map(|w| format!("{w}_wall")));
    labels
}

fn validate_demo(
    demo: &Demonstration,
    maps: &BTreeMap<String, WorldMap>,
    line: usize,
    warnings: &mut Vec<String>,
) -> bool {
    let Some(map) = maps.get(&demo.map_id) else {
        warnings.push(format!("record {line}: unknown map '{}'", demo.map_id));
        return false;
    };
    let path = match Path::new(map, demo.poses.clone()) {
        Ok(p) => p,
        Err(e) => {
            warnings.push(format!("record {line}: invalid path: {e}"));
            return false;
        }
    };
    let segments = segment_path(&path).len();
    if segments != demo.cas.len() || segments != demo.instruction.len() {
        warnings.push(format!(
            "record {line}: {} path segments but {} commands / {} sentences",
            segments,
            demo.cas.len(),
            demo.instruction.len()
        ));
        return false;
    }
    let labels = map_labels(map);
    for cmd in &demo.cas {
        for action in &cmd.actions {
            for slot in &action.attrs {
                if let Some(AttrValue::Entity(e)) = &slot.value {
                    if !labels.contains(e) {
                        warnings.push(format!(
                            "record {line}: entity '{e}' not present on map '{}'",
                            demo.map_id
                        ));
                    }
                }
            }
        }
    }
    true
}

pub fn load_dataset(dir: &FsPath) -> Result<Dataset, CorpusError> {
    let mut maps = BTreeMap::new();
    let maps_dir = dir.join("maps");
    if maps_dir.is_dir() {
        let mut entries: Vec<_> = fs::read_dir(&maps_dir)?
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "map"))
            .collect();
        entries.sort();
        for path in entries {
            let id = path.file_stem().unwrap().to_string_lossy().to_string();
            let map = load_map(fs::File::open(&path)?)?;
            maps.insert(id, map);
        }
    }
    let mut warnings = Vec::new();
    let mut demos = Vec::new();
    let demos_path = dir.join("demos.jsonl");
    if demos_path.is_file() {
        for (i, text) in fs::read_to_string(&demos_path)?.lines().enumerate() {
            let line = i + 1;
            if text.trim().is_empty() {
                continue;
            }
            let record: DemoRecord = match serde_json::from_str(text) {
                Ok(r) => r,
                Err(e) => {
                    warnings.push(format!("record {line}: malformed: {e}"));
                    continue;
                }
            };
            let mut cas = Vec::with_capacity(record.cas.len());
            let mut ok = true;
            for s in &record.cas {
                match parse_cas(s) {
                    Ok(c) => cas.push(c),
                    Err(e) => {
                        warnings.push(format!("record {line}: bad command '{s}': {e}"));
                        ok = false;
                        break;
                    }
                }
            }
            if !ok {
                continue;
            }
            let demo = Demonstration {
                map_id: record.map_id,
                poses: record.poses,
                cas,
                instruction: record.instruction,
                instructor_id: record.instructor_id,
                paragraph_id: record.paragraph_id,
            };
            if validate_demo(&demo, &maps, line, &mut warnings) {
                demos.push(demo);
            }
        }
    }
    let lexicon_path = dir.join("lexicon.json");
    let lexicon = if lexicon_path.is_file() {
        Lexicon::load(fs::File::open(&lexicon_path)?)?
    } else {
        Lexicon::default()
    };
    Ok(Dataset {
        maps,
        demos,
        lexicon,
        warnings,
    })
}

pub fn save_dataset(
    dir: &FsPath,
    maps: &BTreeMap<String, WorldMap>,
    demos: &[Demonstration],
    lexicon: &Lexicon,
) -> Result<(), CorpusError> {
    fs::create_dir_all(dir.join("maps"))?;
    for (id, map) in maps {
        fs::write(dir.join("maps").join(format!("{id}.map")), save_map(map))?;
    }
    let mut lines = String::new();
    for d in demos {
        let record = DemoRecord {
            map_id: d.map_id.clone(),
            poses: d.poses.clone(),
            cas: d.cas.iter().map(|c| c.serialize()).collect(),
            instruction: d.instruction.clone(),
            instructor_id: d.instructor_id.clone(),
            paragraph_id: d.paragraph_id.clone(),
        };
        lines.push_str(&serde_json::to_string(&record)?);
        lines.push('\n');
    }
    fs::write(dir.join("demos.jsonl"), lines)?;
    fs::write(dir.join("lexicon.json"), lexicon.to_json())?;
    Ok(())
}

#[derive(Debug, Default)]
pub struct DatasetSplit {
    pub train: Vec<Demonstration>,
    pub validation: Vec<Demonstration>,
    pub test: Vec<Demonstration>,
}

/// Paragraph-disjoint split: whole paragraphs are shuffled under the seed
/// and dealt into train/validation/test by the requested proportions.
pub fn split(
    demos: &[Demonstration],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetSplit, CorpusError> {
    let sum = ratios.0 + ratios.1 + ratios.2;
    if (sum - 1.0).abs() > 1e-9 || ratios.0 < 0.0 || ratios.1 < 0.0 || ratios.2 < 0.0 {
        return Err(CorpusError::BadRatios(ratios.0, ratios.1, ratios.2));
    }
    let mut paragraphs: Vec<&str> = Vec::new();
    for d in demos {
        if !paragraphs.contains(&d.paragraph_id.as_str()) {
            paragraphs.push(&d.paragraph_id);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    paragraphs.shuffle(&mut rng);
    let k = paragraphs.len();
    let n_train = (k as f64 * ratios.0).round() as usize;
    let n_val = ((k as f64 * ratios.1).round() as usize).min(k - n_train.min(k));
    let n_train = n_train.min(k);
    let train_set: std::collections::BTreeSet<&str> = paragraphs[..n_train].iter().copied().collect();
    let val_set: std::collections::BTreeSet<&str> =
        paragraphs[n_train..n_train + n_val].iter().copied().collect();
    let mut out = DatasetSplit::default();
    for d in demos {
        if train_set.contains(d.paragraph_id.as_str()) {
            out.train.push(d.clone());
        } else if val_set.contains(d.paragraph_id.as_str()) {
            out.validation.push(d.clone());
        } else {
            out.test.push(d.clone());
        }
    }
    Ok(out)
}
