use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Task;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::config(format!("unknown split {s:?}; expected train, val or test"))),
        }
    }
}

/// One recording. Paths are relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub id: String,
    pub audio: PathBuf,
    pub frames: PathBuf,
    pub landmarks: PathBuf,
    pub label: f64,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub task: Task,
    pub frame_rate: f64,
    pub records: Vec<SampleRecord>,
}

/// First line of a manifest file.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    task: Task,
    frame_rate: f64,
    samples: usize,
}

impl DatasetManifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &SampleRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.records {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::config(format!("duplicate sample id {:?}", r.id)));
            }
            self.task.check_label(r.label)?;
        }
        Ok(())
    }
}

/// JSON Lines: a header object, then one record per line.
pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    manifest.validate()?;
    let mut out = Vec::new();
    let header = Header {
        task: manifest.task,
        frame_rate: manifest.frame_rate,
        samples: manifest.records.len(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.push(b'\n');
    for r in &manifest.records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    // write beside the target and rename so readers never see a partial file
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&out)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let parse_err = |line: usize, detail: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        detail,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((i, first)) = lines.next() else {
        return Err(Error::Empty("manifest"));
    };
    let header: Header = serde_json::from_str(first).map_err(|e| parse_err(i + 1, e.to_string()))?;
    let mut records = Vec::new();
    for (i, line) in lines {
        let r: SampleRecord = serde_json::from_str(line).map_err(|e| parse_err(i + 1, e.to_string()))?;
        records.push(r);
    }
    if records.is_empty() {
        return Err(Error::Empty("manifest"));
    }
    if records.len() != header.samples {
        return Err(parse_err(
            1,
            format!("header announces {} samples, found {}", header.samples, records.len()),
        ));
    }
    let m = DatasetManifest {
        task: header.task,
        frame_rate: header.frame_rate,
        records,
    };
    m.validate()?;
    Ok(m)
}

/// `(train, val, test)` sizes: val = round(0.1·n), test = round(0.3·n).
pub fn split_sizes(n: usize) -> Result<(usize, usize, usize)> {
    if n < 10 {
        return Err(Error::DatasetTooSmall(n));
    }
    let val = (0.1 * n as f64).round() as usize;
    let test = (0.3 * n as f64).round() as usize;
    Ok((n - val - test, val, test))
}

/// Assigns splits in place by seeded shuffle. Classification labels are
/// stratified: each class is shuffled, then classes are interleaved by
/// fractional rank, so every prefix of the order keeps the class mix.
pub fn split_dataset(manifest: &mut DatasetManifest, seed: u64) -> Result<()> {
    let n = manifest.records.len();
    let (_, n_val, n_test) = split_sizes(n)?;
    let mut r = rng::stream(seed, "split", &[]);
    let order: Vec<usize> = match manifest.task {
        Task::Regression => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut r);
            idx
        }
        Task::Classification => {
            let mut keyed: Vec<(f64, u8, usize)> = Vec::with_capacity(n);
            for class in [0u8, 1] {
                let mut members: Vec<usize> =
                    (0..n).filter(|&i| manifest.records[i].label == f64::from(class)).collect();
                members.shuffle(&mut r);
                let len = members.len() as f64;
                for (rank, i) in members.into_iter().enumerate() {
                    keyed.push(((rank as f64 + 0.5) / len, class, i));
                }
            }
            keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            keyed.into_iter().map(|(_, _, i)| i).collect()
        }
    };
    for (pos, i) in order.into_iter().enumerate() {
        manifest.records[i].split = if pos < n_val {
            Split::Val
        } else if pos < n_val + n_test {
            Split::Test
        } else {
            Split::Train
        };
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(n: usize, task: Task) -> DatasetManifest {
        let records = (0..n)
            .map(|i| SampleRecord {
                id: format!("s{i:04}"),
                audio: format!("s{i:04}/audio.wav").into(),
                frames: format!("s{i:04}/frames").into(),
                landmarks: format!("s{i:04}/landmarks.txt").into(),
                label: match task {
                    Task::Classification => (i % 2) as f64,
                    Task::Regression => (i % 64) as f64,
                },
                split: Split::Train,
            })
            .collect();
        DatasetManifest {
            task,
            frame_rate: 4.0,
            records,
        }
    }

    #[test]
    fn split_sizes_follow_rounding_rule() {
        assert_eq!(split_sizes(10).unwrap(), (6, 1, 3));
        assert_eq!(split_sizes(188).unwrap(), (113, 19, 56));
        assert!(split_sizes(9).is_err());
    }

    #[test]
    fn split_is_exhaustive_and_stratified() {
        let mut m = manifest(188, Task::Classification);
        split_dataset(&mut m, 3).unwrap();
        assert_eq!((m.count(Split::Train), m.count(Split::Val), m.count(Split::Test)), (113, 19, 56));
        for split in [Split::Val, Split::Test] {
            let pos = m.split(split).filter(|r| r.label == 1.0).count();
            let total = m.count(split);
            assert!(pos > 0 && pos < total);
            assert!((pos as f64 / total as f64 - 0.5).abs() < 0.1);
        }
    }

    #[test]
    fn split_depends_only_on_seed() {
        let mut a = manifest(40, Task::Regression);
        let mut b = manifest(40, Task::Regression);
        split_dataset(&mut a, 9).unwrap();
        split_dataset(&mut b, 9).unwrap();
        assert_eq!(a, b);
        let mut c = manifest(40, Task::Regression);
        split_dataset(&mut c, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("manifest.jsonl");
        let mut m = manifest(12, Task::Regression);
        split_dataset(&mut m, 1).unwrap();
        write_manifest(&p, &m).unwrap();
        assert_eq!(read_manifest(&p).unwrap(), m);
        assert!(!p.with_extension("jsonl.tmp").exists());
    }

    #[test]
    fn missing_field_names_field_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        let m = manifest(2, Task::Classification);
        write_manifest(&p, &m).unwrap();
        let text = std::fs::read_to_string(&p).unwrap().replace(",\"label\":1.0", "");
        std::fs::write(&p, text).unwrap();
        match read_manifest(&p) {
            Err(Error::Parse { line, detail, .. }) => {
                assert_eq!(line, 3);
                assert!(detail.contains("label"), "{detail}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_manifest_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        std::fs::write(&p, "").unwrap();
        assert!(matches!(read_manifest(&p), Err(Error::Empty(_))));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut m = manifest(3, Task::Classification);
        m.records[2].id = m.records[0].id.clone();
        assert!(m.validate().is_err());
    }
}
