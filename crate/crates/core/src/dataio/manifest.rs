use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::landmarks::LandmarkSet;
use super::registry::LabelRegistry;
use super::shape_io::{load_shape, Shape};
use crate::error::{LmptError, Result};
use crate::geometry::{sample_surface, subsample_cloud, PointCloud, Strategy};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn toggled(self) -> Self {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    /// Left out of both splits by [`split_dataset`].
    Unused,
}

impl std::str::FromStr for Split {
    type Err = LmptError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "unused" => Ok(Split::Unused),
            other => Err(LmptError::Config(format!("unknown split {other:?}"))),
        }
    }
}

/// One manifest row.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub shape: PathBuf,
    pub species: String,
    pub side: Side,
    pub split: Split,
    pub landmarks: LandmarkSet<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub samples: Vec<ManifestEntry>,
}

/// A shape held in memory together with its annotation.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<S> {
    pub id: String,
    pub cloud: PointCloud<S>,
    pub species: String,
    pub side: Side,
    pub split: Split,
    pub landmarks: LandmarkSet<S>,
}

#[derive(Deserialize)]
struct RawManifest {
    samples: Vec<RawEntry>,
}

#[derive(Deserialize)]
struct RawEntry {
    shape: PathBuf,
    species: String,
    side: Side,
    split: Split,
    landmarks: Value,
}

impl DatasetManifest {
    pub fn count(&self, split: Split) -> usize {
        self.samples.iter().filter(|s| s.split == split).count()
    }

    pub fn to_json(&self) -> Value {
        let samples: Vec<Value> = self
            .samples
            .iter()
            .map(|s| {
                json!({
                    "shape": s.shape.to_string_lossy(),
                    "species": s.species,
                    "side": s.side,
                    "split": s.split,
                    "landmarks": s.landmarks.to_json(),
                })
            })
            .collect();
        json!({ "samples": samples })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.to_json())? + "\n")?;
        Ok(())
    }
}

/// Parses and validates a manifest. Relative shape paths resolve against the
/// manifest's directory.
pub fn load_manifest(path: &Path, registry: &LabelRegistry) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| LmptError::Config(format!("manifest {}: {e}", path.display())))?;
    let raw: RawManifest =
        serde_json::from_str(&text).map_err(|e| LmptError::Format(format!("manifest {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut samples = Vec::with_capacity(raw.samples.len());
    for (i, e) in raw.samples.into_iter().enumerate() {
        let at = |msg: String| LmptError::Schema(format!("manifest sample {i} ({}): {msg}", e.shape.display()));
        let schema = registry.species(&e.species).map_err(|_| at(format!("unknown species {}", e.species)))?;
        let landmarks = LandmarkSet::<f64>::from_json(&e.landmarks).map_err(|err| at(err.to_string()))?;
        if let Some(bad) = landmarks.names().find(|n| !schema.classes.iter().any(|c| c == n)) {
            return Err(at(format!("landmark {bad} is not in the {} schema", e.species)));
        }
        let resolved = if e.shape.is_absolute() { e.shape.clone() } else { base.join(&e.shape) };
        if !resolved.is_file() {
            return Err(at(format!("missing shape file {}", resolved.display())));
        }
        samples.push(ManifestEntry { shape: resolved, species: e.species, side: e.side, split: e.split, landmarks });
    }
    Ok(DatasetManifest { samples })
}

/// Loads every manifest shape as a cloud of `points` points. Meshes are
/// surface-sampled; clouds larger than `points` are randomly subsampled.
pub fn load_samples<S: Scalar>(manifest: &DatasetManifest, points: usize, seed: u64) -> Result<Vec<Sample<S>>> {
    manifest
        .samples
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let sample_seed = seed.wrapping_add(i as u64);
            let cloud = match load_shape::<S>(&e.shape)? {
                Shape::Mesh(m) => sample_surface(&m, points, sample_seed)?,
                Shape::Cloud(c) if c.len() > points => subsample_cloud(&c, points, sample_seed, Strategy::Random)?,
                Shape::Cloud(c) => c,
            };
            Ok(Sample {
                id: e.shape.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| format!("{i}")),
                cloud,
                species: e.species.clone(),
                side: e.side,
                split: e.split,
                landmarks: e.landmarks.cast(),
            })
        })
        .collect()
}

/// Seeded shuffle and split assignment, stratified by species. Samples left
/// over after `train_count + test_count` are marked [`Split::Unused`].
pub fn split_dataset<T: HasSpecies>(items: &mut [T], train_count: usize, test_count: usize, seed: u64) -> Result<()> {
    let total = items.len();
    if train_count + test_count > total {
        return Err(LmptError::Range(format!(
            "split {train_count}+{test_count} exceeds {total} samples"
        )));
    }
    let mut by_species: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, it) in items.iter().enumerate() {
        by_species.entry(it.species().to_string()).or_default().push(i);
    }
    let sizes: Vec<usize> = by_species.values().map(Vec::len).collect();
    let train_alloc = apportion(train_count, &sizes, &vec![usize::MAX; sizes.len()]);
    let room: Vec<usize> = sizes.iter().zip(&train_alloc).map(|(n, t)| n - t).collect();
    let test_alloc = apportion(test_count, &sizes, &room);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (g, members) in by_species.values_mut().enumerate() {
        members.shuffle(&mut rng);
        for (rank, &i) in members.iter().enumerate() {
            let split = if rank < train_alloc[g] {
                Split::Train
            } else if rank < train_alloc[g] + test_alloc[g] {
                Split::Test
            } else {
                Split::Unused
            };
            items[i].set_split(split);
        }
    }
    Ok(())
}

/// Largest-remainder allocation of `total` proportional to `sizes`, capped
/// per group.
fn apportion(total: usize, sizes: &[usize], caps: &[usize]) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    if n == 0 {
        return vec![0; sizes.len()];
    }
    let mut alloc: Vec<usize> = sizes.iter().zip(caps).map(|(&s, &c)| (total * s / n).min(c).min(s)).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by_key(|&g| std::cmp::Reverse((total * sizes[g]) % n));
    while alloc.iter().sum::<usize>() < total {
        let before: usize = alloc.iter().sum();
        for &g in &order {
            if alloc.iter().sum::<usize>() == total {
                break;
            }
            if alloc[g] < caps[g].min(sizes[g]) {
                alloc[g] += 1;
            }
        }
        if alloc.iter().sum::<usize>() == before {
            break;
        }
    }
    alloc
}

/// Anything [`split_dataset`] can assign to a split.
pub trait HasSpecies {
    fn species(&self) -> &str;
    fn set_split(&mut self, split: Split);
}

impl HasSpecies for ManifestEntry {
    fn species(&self) -> &str {
        &self.species
    }

    fn set_split(&mut self, split: Split) {
        self.split = split;
    }
}

impl<S> HasSpecies for Sample<S> {
    fn species(&self) -> &str {
        &self.species
    }

    fn set_split(&mut self, split: Split) {
        self.split = split;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::registry::build_registry;

    struct Item(String, Split);

    impl HasSpecies for Item {
        fn species(&self) -> &str {
            &self.0
        }
        fn set_split(&mut self, split: Split) {
            self.1 = split;
        }
    }

    fn items(counts: &[(&str, usize)]) -> Vec<Item> {
        counts
            .iter()
            .flat_map(|(s, n)| (0..*n).map(move |_| Item(s.to_string(), Split::Unused)))
            .collect()
    }

    fn count(items: &[Item], species: &str, split: Split) -> usize {
        items.iter().filter(|i| i.0 == species && i.1 == split).count()
    }

    #[test]
    fn human_and_dog_single_species_splits() {
        let mut h = items(&[("human", 20)]);
        split_dataset(&mut h, 16, 4, 1).unwrap();
        assert_eq!((count(&h, "human", Split::Train), count(&h, "human", Split::Test)), (16, 4));
        let mut d = items(&[("dog", 14)]);
        split_dataset(&mut d, 10, 4, 1).unwrap();
        assert_eq!((count(&d, "dog", Split::Train), count(&d, "dog", Split::Test)), (10, 4));
    }

    #[test]
    fn stratified_combined_split() {
        let mut all = items(&[("human", 20), ("dog", 14)]);
        split_dataset(&mut all, 26, 8, 5).unwrap();
        let global = 26.0 / 34.0;
        for (s, n) in [("human", 20.0), ("dog", 14.0)] {
            let t = count(&all, s, Split::Train) as f64;
            assert!((t - global * n).abs() <= 1.0, "{s}: {t}");
        }
        assert_eq!(all.iter().filter(|i| i.1 == Split::Train).count(), 26);
        assert_eq!(all.iter().filter(|i| i.1 == Split::Test).count(), 8);
    }

    #[test]
    fn oversized_split_is_range_error() {
        let mut h = items(&[("human", 3)]);
        assert!(matches!(split_dataset(&mut h, 3, 1, 0), Err(LmptError::Range(_))));
    }

    fn registry() -> LabelRegistry {
        build_registry(
            &[
                ("human".into(), vec!["PITC".into(), "LEC".into(), "MEC".into()]),
                ("dog".into(), vec!["LEC".into(), "MEC".into()]),
            ],
            &[("LEC".into(), "MEC".into())],
        )
        .unwrap()
    }

    #[test]
    fn empty_manifest_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        std::fs::write(&p, r#"{"samples": []}"#).unwrap();
        assert!(load_manifest(&p, &registry()).unwrap().samples.is_empty());
    }

    #[test]
    fn dog_with_human_only_landmark_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.obj"), "v 0 0 0\n").unwrap();
        let p = dir.path().join("m.json");
        std::fs::write(
            &p,
            r#"{"samples": [{"shape": "a.obj", "species": "dog", "side": "left", "split": "train",
                "landmarks": {"PITC": [0, 0, 0]}}]}"#,
        )
        .unwrap();
        let err = load_manifest(&p, &registry()).unwrap_err();
        assert!(matches!(&err, LmptError::Schema(m) if m.contains("PITC")), "{err}");
    }

    #[test]
    fn missing_file_and_unknown_species() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        std::fs::write(
            &p,
            r#"{"samples": [{"shape": "nope.ply", "species": "dog", "side": "left", "split": "train", "landmarks": {}}]}"#,
        )
        .unwrap();
        assert!(matches!(load_manifest(&p, &registry()), Err(LmptError::Schema(_))));
        std::fs::write(dir.path().join("a.obj"), "v 0 0 0\n").unwrap();
        std::fs::write(
            &p,
            r#"{"samples": [{"shape": "a.obj", "species": "cat", "side": "left", "split": "train", "landmarks": {}}]}"#,
        )
        .unwrap();
        assert!(matches!(load_manifest(&p, &registry()), Err(LmptError::Schema(_))));
    }

    #[test]
    fn twenty_sample_manifest_counts() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.obj"), "v 0 0 0\nv 1 0 0\n").unwrap();
        let mut m = DatasetManifest::default();
        for i in 0..20 {
            let mut lm = LandmarkSet::new();
            lm.insert("LEC", [i as f64, 0.0, 0.0]).unwrap();
            m.samples.push(ManifestEntry {
                shape: PathBuf::from("a.obj"),
                species: "human".into(),
                side: if i % 2 == 0 { Side::Left } else { Side::Right },
                split: Split::Unused,
                landmarks: lm,
            });
        }
        split_dataset(&mut m.samples, 16, 4, 3).unwrap();
        let p = dir.path().join("m.json");
        m.write(&p).unwrap();
        let loaded = load_manifest(&p, &registry()).unwrap();
        assert_eq!((loaded.count(Split::Train), loaded.count(Split::Test)), (16, 4));
    }
}
