use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::pair::EditPair;
use crate::error::{invalid, Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(invalid(format!(
                "unknown split {other:?} (expected train, val or test)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// One manifest line. Image paths are stored as written; relative paths resolve
/// against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub input: PathBuf,
    pub target: PathBuf,
    pub descriptions: Vec<String>,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub buckets: Vec<usize>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub reversed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub base_dir: PathBuf,
    pub records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    pub fn new(base_dir: impl Into<PathBuf>, records: Vec<ManifestRecord>) -> Self {
        Self {
            base_dir: base_dir.into(),
            records,
        }
    }

    pub fn counts(&self) -> SplitCounts {
        let mut c = SplitCounts::default();
        for r in &self.records {
            match r.split {
                Split::Train => c.train += 1,
                Split::Val => c.val += 1,
                Split::Test => c.test += 1,
            }
        }
        c
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn records_in(&self, split: Split) -> impl Iterator<Item = &ManifestRecord> + '_ {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn load_pair(&self, record: &ManifestRecord) -> Result<EditPair> {
        let input = Image::load(self.resolve(&record.input))?;
        let target = Image::load(self.resolve(&record.target))?;
        let mut pair = EditPair::new(input, target, record.descriptions.clone())?
            .with_buckets(record.buckets.iter().copied());
        pair.reversed = record.reversed;
        Ok(pair)
    }

    pub fn load_split(&self, split: Split) -> Result<Vec<EditPair>> {
        self.records_in(split).map(|r| self.load_pair(r)).collect()
    }

    /// Serializes one compact JSON object per line, in record order.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_jsonl()?).map_err(|e| Error::io(path, e))
    }
}

/// Reads and validates a JSON-lines manifest. Each record must parse, carry at least one
/// description and reference two existing images of equal size.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base_dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let mut manifest = DatasetManifest::new(base_dir, Vec::new());
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fail = |message: String| Error::Validation {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let record: ManifestRecord =
            serde_json::from_str(line).map_err(|e| fail(format!("malformed record: {e}")))?;
        if record.descriptions.iter().all(|d| d.trim().is_empty()) {
            return Err(fail("record has no non-empty description".into()));
        }
        let dims = |p: &Path| {
            let full = manifest.resolve(p);
            image::image_dimensions(&full)
                .map_err(|e| fail(format!("cannot read {}: {e}", full.display())))
        };
        let (a, b) = (dims(&record.input)?, dims(&record.target)?);
        if a != b {
            return Err(fail(format!(
                "input is {}x{} but target is {}x{}",
                a.0, a.1, b.0, b.1
            )));
        }
        manifest.records.push(record);
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_image(dir: &Path, name: &str, h: usize, w: usize) {
        Image::filled(h, w, [0.5, 0.25, 0.75])
            .unwrap()
            .save(dir.join(name))
            .unwrap();
    }

    fn line(input: &str, target: &str, split: &str) -> String {
        format!(
            r#"{{"input":"{input}","target":"{target}","descriptions":["make it brighter"],"split":"{split}"}}"#
        )
    }

    #[test]
    fn counts_splits() {
        let dir = tempfile::tempdir().unwrap();
        write_image(dir.path(), "a.png", 8, 8);
        write_image(dir.path(), "b.png", 8, 8);
        let text = [
            line("a.png", "b.png", "train"),
            line("b.png", "a.png", "train"),
            line("a.png", "a.png", "val"),
        ]
        .join("\n");
        let path = dir.path().join("m.jsonl");
        std::fs::write(&path, text).unwrap();
        let m = load_manifest(&path).unwrap();
        assert_eq!(m.records.len(), 3);
        assert_eq!(
            m.counts(),
            SplitCounts {
                train: 2,
                val: 1,
                test: 0
            }
        );
        let pair = m.load_pair(&m.records[0]).unwrap();
        assert_eq!(pair.input.dims(), (8, 8));
    }

    #[test]
    fn size_mismatch_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        write_image(dir.path(), "big.png", 256, 256);
        write_image(dir.path(), "small.png", 128, 128);
        let text = [
            line("big.png", "big.png", "train"),
            line("big.png", "small.png", "train"),
        ]
        .join("\n");
        let path = dir.path().join("m.jsonl");
        std::fs::write(&path, text).unwrap();
        match load_manifest(&path) {
            Err(Error::Validation { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_and_missing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        std::fs::write(&path, "{\"input\": 3}\n").unwrap();
        assert!(matches!(
            load_manifest(&path),
            Err(Error::Validation { line: 1, .. })
        ));
        assert!(matches!(
            load_manifest(dir.path().join("nope.jsonl")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        write_image(dir.path(), "a.png", 4, 4);
        let rec = ManifestRecord {
            input: "a.png".into(),
            target: "a.png".into(),
            descriptions: vec!["it is good".into()],
            split: Split::Test,
            buckets: vec![0, 2],
            reversed: true,
        };
        let m = DatasetManifest::new(dir.path(), vec![rec]);
        let path = dir.path().join("m.jsonl");
        m.save(&path).unwrap();
        assert_eq!(load_manifest(&path).unwrap(), m);
    }
}
