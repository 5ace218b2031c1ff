//! Identifiers from file paths.
//!
//! The shared leading directories of all paths are removed (whole segments only), then
//! the longest shared trailing text of the file names. The suffix never consumes a whole
//! file name, so every id keeps at least one character of it. A lone path keeps its
//! file stem.

use std::collections::{BTreeMap, HashSet};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IdError {
    #[error("no paths to assign identifiers to")]
    Empty,
    #[error("path {0:?} listed twice")]
    DuplicatePath(String),
    #[error("paths {0:?} and {1:?} map to the same id {2:?}")]
    Collision(String, String, String),
}

fn file_stem(name: &str) -> &str {
    match name.rfind('.') {
        Some(i) if i > 0 => &name[..i],
        _ => name,
    }
}

/// Maps every path to its identifier.
pub fn assign_ids(paths: &[String]) -> Result<BTreeMap<String, String>, IdError> {
    if paths.is_empty() {
        return Err(IdError::Empty);
    }
    let mut seen = HashSet::new();
    for p in paths {
        if !seen.insert(p.as_str()) {
            return Err(IdError::DuplicatePath(p.clone()));
        }
    }

    let split: Vec<Vec<&str>> = paths.iter().map(|p| p.split('/').collect()).collect();
    let mut ids = Vec::with_capacity(paths.len());

    if paths.len() == 1 {
        let last = split[0].last().copied().unwrap_or("");
        let stem = file_stem(last);
        ids.push(if stem.is_empty() {
            paths[0].clone()
        } else {
            stem.to_string()
        });
    } else {
        // Common leading segments, never including a file name.
        let max_prefix = split.iter().map(|s| s.len() - 1).min().unwrap_or(0);
        let prefix = (0..max_prefix)
            .take_while(|&i| split.iter().all(|s| s[i] == split[0][i]))
            .count();

        let names: Vec<Vec<char>> = split
            .iter()
            .map(|s| s.last().unwrap().chars().collect())
            .collect();
        let max_suffix = names
            .iter()
            .map(|n| n.len().saturating_sub(1))
            .min()
            .unwrap_or(0);
        let suffix = (0..max_suffix)
            .take_while(|&k| {
                let c = names[0][names[0].len() - 1 - k];
                names.iter().all(|n| n[n.len() - 1 - k] == c)
            })
            .count();

        for ((segments, name), path) in split.iter().zip(&names).zip(paths) {
            let mut parts: Vec<String> = segments[prefix..segments.len() - 1]
                .iter()
                .map(|s| s.to_string())
                .collect();
            parts.push(name[..name.len() - suffix].iter().collect());
            let id = parts.join("/");
            // Only reachable for paths with an empty file name, e.g. `dir/`.
            ids.push(if id.is_empty() { path.clone() } else { id });
        }
    }

    let mut out = BTreeMap::new();
    let mut by_id: BTreeMap<&str, &str> = BTreeMap::new();
    for (path, id) in paths.iter().zip(&ids) {
        if let Some(other) = by_id.insert(id, path) {
            return Err(IdError::Collision(
                other.to_string(),
                path.clone(),
                id.clone(),
            ));
        }
        out.insert(path.clone(), id.clone());
    }
    Ok(out)
}
