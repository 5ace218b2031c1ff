//! Raw dataset -> OPTIMADE JSON Lines.

pub mod attributes;
pub mod entry;
pub mod ids;
pub mod info;
pub mod jsonl;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use attributes::{derive_attributes, DeriveError};
pub use entry::{Species, StructureAttributes, StructureEntry};
pub use ids::{assign_ids, IdError};
pub use info::{build_info_document, InfoDocument, PropertyInfo};
pub use jsonl::{read_jsonl, read_jsonl_file, write_jsonl, JsonLinesArchive, JsonlError};

use crate::config::{self, ConfigError, DatasetConfig, EntryType, PropertyDefinition};
use crate::ingest::{
    self, ArchiveError, PropertyError, PropertyTable, RawEntrySource, StructureParseError,
};

#[derive(Debug, thiserror::Error)]
pub enum ConvertError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error(transparent)]
    Parse(#[from] StructureParseError),
    #[error(transparent)]
    Derive(#[from] DeriveError),
    #[error(transparent)]
    Ids(#[from] IdError),
    #[error(transparent)]
    Property(#[from] PropertyError),
    #[error("{file}: row {row}: key {key:?} matches no entry id or path")]
    UnmatchedKey {
        file: String,
        row: usize,
        key: String,
    },
    #[error("{file}: row {row}: key {key:?} is the id of {as_id:?} but the path of {as_path:?}")]
    AmbiguousKey {
        file: String,
        row: usize,
        key: String,
        as_id: String,
        as_path: String,
    },
    #[error(
        "{file}: property {property:?} of entry {id:?} is already set by another property file"
    )]
    PropertyConflict {
        file: String,
        id: String,
        property: String,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Decorates entries with custom properties under `_<prefix>_<name>`.
///
/// Table keys resolve first as entry ids, then as full relative paths via `path_to_id`.
pub fn attach_properties(
    entries: &mut [StructureEntry],
    tables: &[PropertyTable],
    defs: &[PropertyDefinition],
    prefix: &str,
    path_to_id: &BTreeMap<String, String>,
) -> Result<(), ConvertError> {
    let index: HashMap<String, usize> = entries
        .iter()
        .enumerate()
        .map(|(i, e)| (e.id.clone(), i))
        .collect();
    let names: HashMap<&str, String> = defs
        .iter()
        .map(|d| (d.name.as_str(), d.prefixed_name(prefix)))
        .collect();
    for table in tables {
        for row in &table.rows {
            let as_id = index.get(&row.key).copied();
            let as_path = path_to_id
                .get(&row.key)
                .and_then(|id| index.get(id))
                .copied();
            let target = match (as_id, as_path) {
                (Some(a), Some(b)) if a != b => {
                    return Err(ConvertError::AmbiguousKey {
                        file: table.source_path.clone(),
                        row: row.row,
                        key: row.key.clone(),
                        as_id: entries[a].id.clone(),
                        as_path: entries[b].id.clone(),
                    })
                }
                (Some(i), _) | (None, Some(i)) => i,
                (None, None) => {
                    return Err(ConvertError::UnmatchedKey {
                        file: table.source_path.clone(),
                        row: row.row,
                        key: row.key.clone(),
                    })
                }
            };
            let entry = &mut entries[target];
            for (name, value) in &row.values {
                let key = names
                    .get(name.as_str())
                    .cloned()
                    .unwrap_or_else(|| format!("_{prefix}_{name}"));
                if entry
                    .attributes
                    .custom
                    .insert(key.clone(), value.to_json())
                    .is_some()
                {
                    return Err(ConvertError::PropertyConflict {
                        file: table.source_path.clone(),
                        id: entry.id.clone(),
                        property: key,
                    });
                }
            }
        }
    }
    Ok(())
}

/// Reads every raw structure file a manifest entry points at.
pub fn collect_sources(
    cfg: &config::EntryConfig,
    dataset_dir: &Path,
) -> Result<Vec<RawEntrySource>, ConvertError> {
    let mut all = Vec::new();
    for src in &cfg.entry_paths {
        all.extend(ingest::open_source(
            &dataset_dir.join(&src.file),
            &src.file,
            &src.matches,
        )?);
    }
    all.sort_by(|a, b| a.relative_path.cmp(&b.relative_path));
    all.dedup_by(|a, b| a.relative_path == b.relative_path);
    Ok(all)
}

pub fn read_property_tables(
    cfg: &config::EntryConfig,
    dataset_dir: &Path,
) -> Result<Vec<PropertyTable>, ConvertError> {
    cfg.property_paths
        .iter()
        .map(|p| {
            let path = dataset_dir.join(p);
            let bytes = std::fs::read(&path).map_err(|source| ConvertError::Io { path, source })?;
            Ok(ingest::parse_properties(
                &RawEntrySource::new(p.clone(), bytes),
                &cfg.property_definitions,
            )?)
        })
        .collect()
}

/// Parses and derives entries for a set of sources; ids are assigned from their paths.
pub fn build_entries(
    sources: &[RawEntrySource],
) -> Result<(Vec<StructureEntry>, BTreeMap<String, String>), ConvertError> {
    if sources.is_empty() {
        return Ok((Vec::new(), BTreeMap::new()));
    }
    let attributes: Vec<StructureAttributes> = sources
        .par_iter()
        .map(|src| {
            let parsed = ingest::parse_structure(src)?;
            Ok(derive_attributes(&parsed)?)
        })
        .collect::<Result<_, ConvertError>>()?;
    let paths: Vec<String> = sources.iter().map(|s| s.relative_path.clone()).collect();
    let ids = assign_ids(&paths)?;
    let mut entries: Vec<StructureEntry> = paths
        .iter()
        .zip(attributes)
        .map(|(p, a)| StructureEntry::new(ids[p].clone(), a))
        .collect();
    entries.sort_by(|a, b| a.id.cmp(&b.id));
    Ok((entries, ids))
}

/// Full conversion of a dataset directory holding `optimade.yaml`.
pub fn convert_dataset(
    dataset_dir: &Path,
) -> Result<(DatasetConfig, JsonLinesArchive), ConvertError> {
    let cfg = config::load_config_from_dir(dataset_dir)?;
    let archive = convert_with_config(&cfg, dataset_dir)?;
    Ok((cfg, archive))
}

pub fn convert_with_config(
    cfg: &DatasetConfig,
    dataset_dir: &Path,
) -> Result<JsonLinesArchive, ConvertError> {
    let entry_cfg = cfg
        .entry(EntryType::Structures)
        .expect("validated manifests have a structures entry");
    let sources = collect_sources(entry_cfg, dataset_dir)?;
    let (mut entries, path_to_id) = build_entries(&sources)?;
    let tables = read_property_tables(entry_cfg, dataset_dir)?;
    attach_properties(
        &mut entries,
        &tables,
        &entry_cfg.property_definitions,
        &cfg.provider_prefix,
        &path_to_id,
    )?;
    Ok(JsonLinesArchive {
        description: cfg.database_description.clone(),
        info: vec![build_info_document(
            &entry_cfg.property_definitions,
            &cfg.provider_prefix,
            &cfg.database_description,
        )],
        entries,
    })
}

/// Writes `archive` to `path` through a temporary file renamed into place.
pub fn write_jsonl_atomic(archive: &JsonLinesArchive, path: &Path) -> Result<u64, ConvertError> {
    let io_err = |source| ConvertError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err)?;
    }
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{file_name}.tmp-{}", std::process::id()));
    let result = std::fs::File::create(&tmp).and_then(|f| {
        let n = write_jsonl(archive, &f)?;
        f.sync_all()?;
        Ok(n)
    });
    match result {
        Ok(n) => {
            std::fs::rename(&tmp, path).map_err(io_err)?;
            Ok(n)
        }
        Err(e) => {
            let _ = std::fs::remove_file(&tmp);
            Err(io_err(e))
        }
    }
}
