//! Class-per-directory datasets, stratified splits and batch ordering.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::preprocess::probe_image;
use crate::rng::{derive_seed, Rng};

/// Stream tags for seed derivation.
const TAG_SPLIT: u64 = 0x5350_4c49_54; // "SPLIT"
const TAG_EPOCH: u64 = 0x4550_4f43_48; // "EPOCH"

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    /// Path relative to the dataset root, `/`-separated.
    pub path: String,
    pub class_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub root: PathBuf,
    /// Sorted by byte value.
    pub class_names: Vec<String>,
    /// Sorted by (class, file name).
    pub samples: Vec<Sample>,
}

/// Files that were skipped while scanning.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScanReport {
    pub skipped: Vec<(String, String)>,
}

impl Dataset {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn absolute(&self, sample: &Sample) -> PathBuf {
        self.root.join(&sample.path)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_names.len()];
        for s in &self.samples {
            counts[s.class_index] += 1;
        }
        counts
    }

    /// Keep at most `per_class` samples of each class, in scan order.
    pub fn truncate_per_class(&self, per_class: usize) -> Dataset {
        let mut seen = vec![0; self.class_names.len()];
        let samples = self
            .samples
            .iter()
            .filter(|s| {
                seen[s.class_index] += 1;
                seen[s.class_index] <= per_class
            })
            .cloned()
            .collect();
        Dataset {
            root: self.root.clone(),
            class_names: self.class_names.clone(),
            samples,
        }
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut entries = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.starts_with('.') {
            continue;
        }
        entries.push((name, entry.path()));
    }
    entries.sort_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
    Ok(entries)
}

/// One class per immediate subdirectory of `root`; every readable image file
/// inside becomes a sample. Files whose header cannot be decoded are skipped
/// with a warning and listed in the report.
pub fn scan_dataset(root: &Path) -> Result<(Dataset, ScanReport)> {
    let mut report = ScanReport::default();
    let mut class_names = Vec::new();
    let mut samples = Vec::new();
    for (class_name, dir) in sorted_entries(root)? {
        if !dir.is_dir() {
            continue;
        }
        let class_index = class_names.len();
        let mut found = 0;
        for (file, path) in sorted_entries(&dir)? {
            if !path.is_file() {
                continue;
            }
            let rel = format!("{class_name}/{file}");
            match probe_image(&path) {
                Ok(_) => {
                    samples.push(Sample {
                        path: rel,
                        class_index,
                    });
                    found += 1;
                }
                Err(e) => {
                    log::warn!("skipping {rel}: {e}");
                    report.skipped.push((rel, e.to_string()));
                }
            }
        }
        if found > 0 {
            class_names.push(class_name);
        }
    }
    if samples.is_empty() {
        return Err(Error::Data(format!(
            "no class directories with decodable images under {}",
            root.display()
        )));
    }
    Ok((
        Dataset {
            root: root.to_path_buf(),
            class_names,
            samples,
        },
        report,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
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

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Argument(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub sample: Sample,
    pub split: Split,
}

/// Train/validation/test assignment for every sample of a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitManifest {
    pub class_names: Vec<String>,
    pub entries: Vec<ManifestEntry>,
    /// `None` when loaded from a file (the file does not record it).
    pub seed: Option<u64>,
}

/// Per class `n`: `floor(n/10)` test, `floor(n/10)` validation, rest train.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let tenth = n / 10;
    (n - 2 * tenth, tenth, tenth)
}

/// Shuffle each class with a seed derived from `(seed, class index)`, then
/// assign the first tenth to test, the next tenth to validation and the rest
/// to training. Entries stay in (class, file name) order.
pub fn stratified_split(ds: &Dataset, seed: u64) -> SplitManifest {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in ds.samples.iter().enumerate() {
        by_class.entry(s.class_index).or_default().push(i);
    }
    let mut assignment = vec![Split::Train; ds.samples.len()];
    for (class, mut idx) in by_class {
        // Scan order is already sorted, but sort again so the split only
        // depends on the sample set.
        idx.sort_by(|&a, &b| ds.samples[a].path.cmp(&ds.samples[b].path));
        let mut rng = Rng::derive(seed, &[TAG_SPLIT, class as u64]);
        rng.shuffle(&mut idx);
        let (_, n_val, n_test) = split_sizes(idx.len());
        for (pos, &i) in idx.iter().enumerate() {
            assignment[i] = if pos < n_test {
                Split::Test
            } else if pos < n_test + n_val {
                Split::Val
            } else {
                Split::Train
            };
        }
    }
    let mut entries: Vec<ManifestEntry> = ds
        .samples
        .iter()
        .zip(assignment)
        .map(|(s, split)| ManifestEntry {
            sample: s.clone(),
            split,
        })
        .collect();
    entries.sort_by(|a, b| {
        (a.sample.class_index, a.sample.path.as_bytes())
            .cmp(&(b.sample.class_index, b.sample.path.as_bytes()))
    });
    SplitManifest {
        class_names: ds.class_names.clone(),
        entries,
        seed: Some(seed),
    }
}

impl SplitManifest {
    pub fn samples(&self, split: Split) -> Vec<Sample> {
        self.entries
            .iter()
            .filter(|e| e.split == split)
            .map(|e| e.sample.clone())
            .collect()
    }

    /// `[train, val, test]` counts per class.
    pub fn per_class_counts(&self) -> Vec<[usize; 3]> {
        let mut counts = vec![[0; 3]; self.class_names.len()];
        for e in &self.entries {
            let slot = match e.split {
                Split::Train => 0,
                Split::Val => 1,
                Split::Test => 2,
            };
            counts[e.sample.class_index][slot] += 1;
        }
        counts
    }

    /// CSV with header `path,class,split`, LF line endings.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(["path", "class", "split"])
            .expect("in-memory write");
        for e in &self.entries {
            w.write_record([
                e.sample.path.as_str(),
                self.class_names[e.sample.class_index].as_str(),
                e.split.as_str(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| Error::Data(format!("manifest header: {e}")))?;
        if headers != vec!["path", "class", "split"] {
            return Err(Error::Data(format!(
                "manifest header must be path,class,split, got {headers:?}"
            )));
        }
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::Data(format!("manifest row {}: {e}", i + 2)))?;
            let split: Split = rec[2]
                .parse()
                .map_err(|e| Error::Data(format!("manifest row {}: {e}", i + 2)))?;
            rows.push((rec[0].to_string(), rec[1].to_string(), split));
        }
        let mut class_names: Vec<String> = rows.iter().map(|r| r.1.clone()).collect();
        class_names.sort_by(|a, b| a.as_bytes().cmp(b.as_bytes()));
        class_names.dedup();
        let entries = rows
            .into_iter()
            .map(|(path, class, split)| ManifestEntry {
                sample: Sample {
                    path,
                    class_index: class_names.binary_search(&class).expect("collected above"),
                },
                split,
            })
            .collect();
        Ok(Self {
            class_names,
            entries,
            seed: None,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

/// Index order for one epoch: identity when not shuffling, otherwise a
/// permutation seeded by `(seed, epoch)`.
pub fn epoch_order(len: usize, shuffle: bool, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    if shuffle {
        Rng::derive(seed, &[TAG_EPOCH, epoch as u64]).shuffle(&mut order);
    }
    order
}

/// Consecutive chunks of `batch_size` indices; the final partial batch is kept.
pub fn batches(order: &[usize], batch_size: usize) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Argument("batch size must be >= 1".into()));
    }
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Seed for augmenting sample `index` in `epoch`.
pub fn augment_seed(seed: u64, epoch: usize, index: usize) -> u64 {
    derive_seed(seed, &[0x4155_47, epoch as u64, index as u64])
}
