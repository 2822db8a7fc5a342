//! Dataset directory format.
//!
//! ```text
//! <root>/manifest.json
//! <root>/<split>/<id>.csv        header of channel names, one row per step
//! <root>/<split>/<id>.meta.json  SequenceMeta sidecar
//! ```
//!
//! Values are written with Rust's shortest round-trip float formatting, so
//! reading a directory back reproduces the generated arrays bit for bit.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::Sequence;
use crate::syndata::{DatasetConfig, Record, SequenceMeta, Split};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub rate: f64,
    pub channel_names: Vec<String>,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    /// Generator settings, when the data is synthetic.
    pub generator: Option<DatasetConfig>,
}

impl Manifest {
    pub fn ids(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    fn ids_mut(&mut self, split: Split) -> &mut Vec<String> {
        match split {
            Split::Train => &mut self.train,
            Split::Val => &mut self.val,
            Split::Test => &mut self.test,
        }
    }
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Dataset {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

pub fn sequence_path(root: &Path, split: Split, id: &str) -> PathBuf {
    root.join(split.as_str()).join(format!("{id}.csv"))
}

pub fn meta_path(root: &Path, split: Split, id: &str) -> PathBuf {
    root.join(split.as_str()).join(format!("{id}.meta.json"))
}

pub fn write_sequence_csv(path: &Path, seq: &Sequence) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&seq.channel_names)?;
    for row in seq.values.rows() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sequence_csv(path: &Path, id: &str, rate: f64) -> Result<Sequence> {
    let malformed = |detail: String| Error::Dataset {
        path: path.to_path_buf(),
        detail,
    };
    let mut r = csv::Reader::from_path(path)?;
    let names: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let d = names.len();
    let mut flat = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row?;
        if row.len() != d {
            return Err(malformed(format!("row {i} has {} fields, expected {d}", row.len())));
        }
        for field in row.iter() {
            flat.push(
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| malformed(format!("row {i}: {e}")))?,
            );
        }
    }
    let t = flat.len() / d.max(1);
    let values = Array2::from_shape_vec((t, d), flat).map_err(|e| malformed(e.to_string()))?;
    Sequence::new(id, rate, names, values).map_err(|e| malformed(e.to_string()))
}

/// Writes every record plus the manifest. Existing files are overwritten.
pub fn write_dataset(root: &Path, records: &[Record], generator: Option<&DatasetConfig>) -> Result<Manifest> {
    let first = records.first().ok_or(Error::Empty("dataset"))?;
    let mut manifest = Manifest {
        version: FORMAT_VERSION,
        rate: first.sequence.rate,
        channel_names: first.sequence.channel_names.clone(),
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
        generator: generator.cloned(),
    };
    for rec in records {
        if rec.sequence.channel_names != manifest.channel_names || rec.sequence.rate != manifest.rate {
            return Err(Error::InvalidArgument(format!(
                "sequence {} does not share the dataset layout",
                rec.meta.id
            )));
        }
        let split = rec.meta.split;
        write_sequence_csv(&sequence_path(root, split, &rec.meta.id), &rec.sequence)?;
        save_json(&meta_path(root, split, &rec.meta.id), &rec.meta)?;
        manifest.ids_mut(split).push(rec.meta.id.clone());
    }
    save_json(&root.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn load_manifest(root: &Path) -> Result<Manifest> {
    let m: Manifest = load_json(&root.join(MANIFEST_FILE))?;
    if m.version != FORMAT_VERSION {
        return Err(Error::Dataset {
            path: root.join(MANIFEST_FILE),
            detail: format!("unsupported format version {}", m.version),
        });
    }
    Ok(m)
}

pub fn load_record(root: &Path, manifest: &Manifest, split: Split, id: &str) -> Result<Record> {
    let meta: SequenceMeta = load_json(&meta_path(root, split, id))?;
    let path = sequence_path(root, split, id);
    let sequence = read_sequence_csv(&path, id, meta.rate)?;
    if sequence.channel_names != manifest.channel_names {
        return Err(Error::Dataset {
            path,
            detail: "channel names differ from the manifest".into(),
        });
    }
    if meta.ground_truth.len != sequence.len() {
        return Err(Error::Dataset {
            path,
            detail: format!(
                "ground truth covers {} steps, sequence has {}",
                meta.ground_truth.len,
                sequence.len()
            ),
        });
    }
    Ok(Record { sequence, meta })
}

pub fn load_split(root: &Path, manifest: &Manifest, split: Split) -> Result<Vec<Record>> {
    manifest
        .ids(split)
        .iter()
        .map(|id| load_record(root, manifest, split, id))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::GroundTruth;
    use crate::syndata::{build_dataset, InitState};

    fn record(id: &str, split: Split, values: Array2<f64>) -> Record {
        let d = values.ncols();
        let len = values.nrows();
        Record {
            sequence: Sequence::new(id, 2.0, (0..d).map(|j| format!("c{j}")).collect(), values).unwrap(),
            meta: SequenceMeta {
                id: id.into(),
                split,
                rate: 2.0,
                cycle_class: 0,
                cycle_name: "x".into(),
                init_state: InitState {
                    soc: 0.5,
                    battery_temp: 25.0,
                    rotor_temp: 25.0,
                    stator_temp: 25.0,
                    inverter_temp: 25.0,
                },
                anomaly: None,
                ground_truth: GroundTruth::normal(len),
            },
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let values = Array2::from_shape_fn((5, 3), |(t, c)| (t as f64 * 0.1 + c as f64).sin() / 3.0 + 1e-300);
        let recs = vec![
            record("a", Split::Train, values.clone()),
            record("b", Split::Test, -values),
        ];
        let m = write_dataset(dir.path(), &recs, None).unwrap();
        assert_eq!(load_manifest(dir.path()).unwrap(), m);
        assert_eq!(load_split(dir.path(), &m, Split::Train).unwrap(), vec![recs[0].clone()]);
        assert_eq!(load_split(dir.path(), &m, Split::Test).unwrap(), vec![recs[1].clone()]);
        assert!(load_split(dir.path(), &m, Split::Val).unwrap().is_empty());
    }

    #[test]
    fn generated_dataset_round_trips() {
        let cfg = DatasetConfig {
            budget_hours: 1.0,
            sequences_per_hour: 2.0,
            cycle_classes: 1,
            duration_scale: 0.2,
            ..DatasetConfig::default()
        };
        let recs = build_dataset(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let m = write_dataset(dir.path(), &recs, Some(&cfg)).unwrap();
        assert_eq!(m.generator.as_ref(), Some(&cfg));
        let mut back = Vec::new();
        for split in Split::ALL {
            back.extend(load_split(dir.path(), &m, split).unwrap());
        }
        assert_eq!(back, recs);
    }

    #[test]
    fn malformed_files_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "a,b\n1,2\n3,oops\n").unwrap();
        let err = read_sequence_csv(&path, "bad", 2.0).unwrap_err();
        assert!(matches!(err, Error::Dataset { .. }), "{err}");
        fs::write(&path, "a,b\n1,2\n3\n").unwrap();
        assert!(read_sequence_csv(&path, "bad", 2.0).is_err());
        assert!(load_manifest(dir.path()).is_err());
    }
}
