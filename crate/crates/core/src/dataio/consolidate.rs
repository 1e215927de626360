use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::landmarks::LandmarkSet;
use crate::error::{LmptError, Result};
use crate::geometry::{medoid, Point3};
use crate::scalar::Scalar;

/// Per-name medoid over every round that annotates that name.
pub fn consolidate_annotations<S: Scalar>(rounds: &[LandmarkSet<S>]) -> Result<LandmarkSet<S>> {
    let mut by_name: BTreeMap<&str, Vec<Point3<S>>> = BTreeMap::new();
    for round in rounds {
        for (name, p) in round.iter() {
            by_name.entry(name).or_default().push(*p);
        }
    }
    if by_name.is_empty() {
        return Err(LmptError::EmptySet);
    }
    by_name
        .into_iter()
        .map(|(name, pts)| Ok((name.to_string(), medoid(&pts)?)))
        .collect()
}

/// Round files (`*.json`) in a directory, sorted by file name.
pub fn round_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    Ok(files)
}

pub fn read_rounds<S: Scalar>(dir: &Path) -> Result<Vec<LandmarkSet<S>>> {
    let files = round_files(dir)?;
    if files.is_empty() {
        return Err(LmptError::EmptySet);
    }
    files.iter().map(|f| LandmarkSet::read(f)).collect()
}
