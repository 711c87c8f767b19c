//! Mixed all-weather datasets: every clean scene is degraded once per kind,
//! and groups of (haze, rain, snow) siblings are split together so no file
//! appears in both splits.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::hash::Hasher;
use std::path::{Path, PathBuf};

use fnv::FnvHasher;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{apply, load_image, save_image, DegradationSpec, Image, WeatherError, WeatherKind};

pub const TRAIN_MANIFEST: &str = "train.manifest";
pub const TEST_MANIFEST: &str = "test.manifest";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            Split::Train => TRAIN_MANIFEST,
            Split::Test => TEST_MANIFEST,
        }
    }
}

/// Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub kind: WeatherKind,
    pub clean: PathBuf,
    pub degraded: PathBuf,
    pub spec_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub split: Split,
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

fn rel(path: &Path) -> String {
    path.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

impl DatasetManifest {
    pub fn count(&self, kind: WeatherKind) -> usize {
        self.entries.iter().filter(|e| e.kind == kind).count()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn path(&self) -> PathBuf {
        self.root.join(self.split.file_name())
    }

    pub fn resolve(&self, relative: &Path) -> PathBuf {
        self.root.join(relative)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("# split={}\n", self.split.name());
        for e in &self.entries {
            let _ = writeln!(out, "{}\t{}\t{}\t{}", e.kind, rel(&e.clean), rel(&e.degraded), e.spec_hash);
        }
        out
    }

    /// FNV-1a digest of the serialized manifest, hex encoded.
    pub fn digest(&self) -> String {
        let mut h = FnvHasher::default();
        h.write(self.to_text().as_bytes());
        format!("{:016x}", h.finish())
    }

    pub fn write(&self) -> Result<PathBuf, WeatherError> {
        let path = self.path();
        std::fs::write(&path, self.to_text()).map_err(|e| WeatherError::io(&path, e))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self, WeatherError> {
        let text = std::fs::read_to_string(path).map_err(|e| WeatherError::io(path, e))?;
        let mut split = None;
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if let Some(meta) = line.strip_prefix('#') {
                match meta.trim() {
                    "split=train" => split = Some(Split::Train),
                    "split=test" => split = Some(Split::Test),
                    _ => {}
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [kind, clean, degraded, hash] = fields[..] else {
                return Err(WeatherError::Manifest(format!(
                    "{}:{}: expected 4 tab-separated fields, got {}",
                    path.display(),
                    n + 1,
                    fields.len()
                )));
            };
            entries.push(ManifestEntry {
                kind: kind.parse()?,
                clean: PathBuf::from(clean),
                degraded: PathBuf::from(degraded),
                spec_hash: hash.to_string(),
            });
        }
        let split = match split {
            Some(s) => s,
            None if path.file_name().is_some_and(|f| f == TEST_MANIFEST) => Split::Test,
            None => Split::Train,
        };
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { split, root, entries })
    }
}

#[derive(Debug, Clone)]
pub struct BuiltDataset {
    pub train: DatasetManifest,
    pub test: DatasetManifest,
}

/// Sorted PNG/PPM files directly inside `dir`.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>, WeatherError> {
    let read = std::fs::read_dir(dir).map_err(|e| WeatherError::io(dir, e))?;
    let mut out = Vec::new();
    for entry in read {
        let path = entry.map_err(|e| WeatherError::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && matches!(ext.as_deref(), Some("png" | "ppm")) {
            out.push(path);
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(WeatherError::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no .png or .ppm images found"),
        ));
    }
    Ok(out)
}

/// Synthesizes `per_kind` degraded pairs for each weather kind into `out_dir`
/// and writes the train and test manifests there.
pub fn build_dataset(
    clean_dir: &Path,
    out_dir: &Path,
    per_kind: usize,
    split_ratio: f64,
    seed: u64,
) -> Result<BuiltDataset, WeatherError> {
    if per_kind == 0 {
        return Err(WeatherError::Param("per_kind must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&split_ratio) {
        return Err(WeatherError::Param(format!("split ratio {split_ratio} outside [0, 1]")));
    }
    let sources = list_images(clean_dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let clean_out = out_dir.join("clean");
    let mut clean = Vec::with_capacity(sources.len());
    for src in &sources {
        let img = load_image(src)?;
        let stem = src.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let name = PathBuf::from("clean").join(format!("{stem}.png"));
        save_image(&clean_out.join(format!("{stem}.png")), &img)?;
        clean.push((name, img));
    }

    let train_groups = ((per_kind as f64) * split_ratio).round() as usize;
    let mut groups: Vec<usize> = (0..per_kind).collect();
    groups.shuffle(&mut rng);
    let mut is_train = vec![false; per_kind];
    for &g in &groups[..train_groups] {
        is_train[g] = true;
    }

    // Clean scenes are split too, so a scene never feeds both splits unless
    // there is only one of it.
    let mut order: Vec<usize> = (0..clean.len()).collect();
    order.shuffle(&mut rng);
    let n = clean.len();
    let cut = if n < 2 || train_groups == 0 || train_groups == per_kind {
        if train_groups == 0 {
            0
        } else {
            n
        }
    } else {
        ((n as f64 * split_ratio).round() as usize).clamp(1, n - 1)
    };
    let (train_pool, test_pool) = if n < 2 {
        (order.clone(), order.clone())
    } else {
        (order[..cut].to_vec(), order[cut..].to_vec())
    };

    let mut train = Vec::new();
    let mut test = Vec::new();
    let (mut train_rank, mut test_rank) = (0, 0);
    for (j, &in_train) in is_train.iter().enumerate() {
        let idx = if in_train {
            train_rank += 1;
            train_pool[(train_rank - 1) % train_pool.len()]
        } else {
            test_rank += 1;
            test_pool[(test_rank - 1) % test_pool.len()]
        };
        let (clean_rel, img) = &clean[idx];
        let s = img.shape();
        for kind in WeatherKind::ALL {
            let spec = DegradationSpec::random(kind, s.height, s.width, &mut rng);
            let degraded_rel = PathBuf::from("degraded").join(format!("{kind}_{j:05}.png"));
            save_image(&out_dir.join(&degraded_rel), &apply(img, &spec)?)?;
            let entry = ManifestEntry {
                kind,
                clean: clean_rel.clone(),
                degraded: degraded_rel,
                spec_hash: spec.hash_hex(),
            };
            if in_train {
                train.push(entry);
            } else {
                test.push(entry);
            }
        }
    }
    train.shuffle(&mut rng);

    let built = BuiltDataset {
        train: DatasetManifest {
            split: Split::Train,
            root: out_dir.to_path_buf(),
            entries: train,
        },
        test: DatasetManifest {
            split: Split::Test,
            root: out_dir.to_path_buf(),
            entries: test,
        },
    };
    built.train.write()?;
    built.test.write()?;
    Ok(built)
}

/// A loaded training or evaluation example.
#[derive(Debug, Clone)]
pub struct Pair {
    pub kind: WeatherKind,
    pub degraded: Image,
    pub clean: Image,
}

/// Loads every entry; shared clean images are decoded once.
pub fn load_pairs(manifest: &DatasetManifest) -> Result<Vec<Pair>, WeatherError> {
    let mut cache: HashMap<PathBuf, Image> = HashMap::new();
    manifest
        .entries
        .iter()
        .map(|e| {
            let clean = match cache.get(&e.clean) {
                Some(img) => img.clone(),
                None => {
                    let img = load_image(&manifest.resolve(&e.clean))?;
                    cache.insert(e.clean.clone(), img.clone());
                    img
                }
            };
            let degraded = load_image(&manifest.resolve(&e.degraded))?;
            if degraded.shape() != clean.shape() {
                return Err(WeatherError::Manifest(format!(
                    "{} and {} differ in size",
                    e.degraded.display(),
                    e.clean.display()
                )));
            }
            Ok(Pair {
                kind: e.kind,
                degraded,
                clean,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weather::scene::write_scenes;
    use std::collections::HashSet;

    #[test]
    fn split_is_stratified_and_disjoint() {
        let dir = tempfile::tempdir().unwrap();
        let clean = dir.path().join("src");
        write_scenes(&clean, 12, 16, 16, 1).unwrap();
        let built = build_dataset(&clean, &dir.path().join("out"), 20, 0.9, 4).unwrap();
        assert_eq!(built.train.len(), 54);
        assert_eq!(built.test.len(), 6);
        for kind in WeatherKind::ALL {
            assert_eq!(built.train.count(kind), 18);
            assert_eq!(built.test.count(kind), 2);
        }
        let files = |m: &DatasetManifest| -> HashSet<PathBuf> {
            m.entries.iter().flat_map(|e| [e.clean.clone(), e.degraded.clone()]).collect()
        };
        assert!(files(&built.train).is_disjoint(&files(&built.test)));

        let reloaded = DatasetManifest::load(&built.train.path()).unwrap();
        assert_eq!(reloaded, built.train);
        let pairs = load_pairs(&built.test).unwrap();
        assert_eq!(pairs.len(), 6);
    }

    #[test]
    fn empty_dir_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = build_dataset(dir.path(), &dir.path().join("out"), 3, 0.5, 0).unwrap_err();
        assert!(matches!(err, WeatherError::Io { .. }));
    }

    #[test]
    fn malformed_manifest_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(TRAIN_MANIFEST);
        std::fs::write(&path, "haze\tonly-two\n").unwrap();
        assert!(matches!(DatasetManifest::load(&path), Err(WeatherError::Manifest(_))));
        std::fs::write(&path, "fog\ta\tb\tc\n").unwrap();
        assert!(DatasetManifest::load(&path).is_err());
    }
}
