//! Immutable in-memory snapshot of one dataset with filtering, sorting and paging.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde_json::{Map, Value};

use crate::config::DEFAULT_PROVIDER_PREFIX;
use crate::convert::{build_info_document, InfoDocument, JsonLinesArchive, StructureEntry};
use crate::filter::{matching_indices, FilterAst, FilterError};

pub const DEFAULT_PAGE_LIMIT: usize = 20;
pub const MAX_PAGE_LIMIT: usize = 100;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StoreError {
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error("unknown sort property {0:?}")]
    UnknownSortProperty(String),
    #[error("property {0:?} cannot be sorted on")]
    UnsortableProperty(String),
    #[error("page limit must be between 1 and {MAX_PAGE_LIMIT}, got {0}")]
    InvalidLimit(usize),
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
}

#[derive(Debug)]
pub struct DatasetSnapshot {
    pub database_id: String,
    pub description: String,
    pub info: InfoDocument,
    entries: Vec<StructureEntry>,
    documents: Vec<Map<String, Value>>,
    by_id: HashMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Page<'a> {
    pub items: Vec<&'a StructureEntry>,
    pub offset: usize,
    pub limit: usize,
    pub more: bool,
    pub total_matching: usize,
}

/// Builds a snapshot; entries are sorted by id and ids must be unique.
pub fn load_snapshot(
    archive: JsonLinesArchive,
    database_id: &str,
) -> Result<DatasetSnapshot, StoreError> {
    let JsonLinesArchive {
        description,
        info,
        mut entries,
    } = archive;
    entries.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(w) = entries.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(StoreError::DuplicateId(w[0].id.clone()));
    }
    let info = info
        .into_iter()
        .find(|i| i.id == "structures")
        .unwrap_or_else(|| build_info_document(&[], DEFAULT_PROVIDER_PREFIX, &description));
    let documents = entries.iter().map(StructureEntry::to_document).collect();
    let by_id = entries
        .iter()
        .enumerate()
        .map(|(i, e)| (e.id.clone(), i))
        .collect();
    Ok(DatasetSnapshot {
        database_id: database_id.to_string(),
        description,
        info,
        entries,
        documents,
        by_id,
    })
}

fn sort_value<'a>(doc: &'a Map<String, Value>, key: &str) -> Option<&'a Value> {
    doc.get(key).filter(|v| !v.is_null())
}

fn compare_values(a: &Value, b: &Value) -> Ordering {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => match (x.as_i64(), y.as_i64()) {
            (Some(x), Some(y)) => x.cmp(&y),
            _ => x
                .as_f64()
                .unwrap_or(f64::NAN)
                .total_cmp(&y.as_f64().unwrap_or(f64::NAN)),
        },
        (Value::String(x), Value::String(y)) => x.cmp(y),
        (Value::Bool(x), Value::Bool(y)) => x.cmp(y),
        _ => Ordering::Equal,
    }
}

impl DatasetSnapshot {
    pub fn total(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[StructureEntry] {
        &self.entries
    }

    pub fn get(&self, id: &str) -> Option<&StructureEntry> {
        self.by_id.get(id).map(|&i| &self.entries[i])
    }

    /// Flat document (id, type and attributes) of the entry at `index`.
    pub fn document(&self, index: usize) -> &Map<String, Value> {
        &self.documents[index]
    }

    /// Filters, sorts by an optional single key (`-` prefix for descending; entries
    /// lacking the key last; ties by id) and slices `[offset, offset + limit)`.
    pub fn query(
        &self,
        filter: Option<&FilterAst>,
        offset: usize,
        limit: usize,
        sort: Option<&str>,
    ) -> Result<Page<'_>, StoreError> {
        if limit == 0 || limit > MAX_PAGE_LIMIT {
            return Err(StoreError::InvalidLimit(limit));
        }
        let mut matches = matching_indices(filter, &self.documents)?;
        if let Some(sort) = sort {
            let (key, descending) = match sort.strip_prefix('-') {
                Some(k) => (k, true),
                None => (sort.strip_prefix('+').unwrap_or(sort), false),
            };
            if self.info.property(key).is_none() {
                return Err(StoreError::UnknownSortProperty(key.to_string()));
            }
            let sortable =
                |v: &Value| matches!(v, Value::Number(_) | Value::String(_) | Value::Bool(_));
            if self
                .documents
                .iter()
                .filter_map(|d| sort_value(d, key))
                .any(|v| !sortable(v))
            {
                return Err(StoreError::UnsortableProperty(key.to_string()));
            }
            // Indices already follow id order, so a stable sort keeps id as the tie-break.
            matches.sort_by(|&a, &b| {
                match (
                    sort_value(&self.documents[a], key),
                    sort_value(&self.documents[b], key),
                ) {
                    (Some(x), Some(y)) => {
                        let ord = compare_values(x, y);
                        if descending {
                            ord.reverse()
                        } else {
                            ord
                        }
                    }
                    (Some(_), None) => Ordering::Less,
                    (None, Some(_)) => Ordering::Greater,
                    (None, None) => Ordering::Equal,
                }
            });
        }
        let total_matching = matches.len();
        let items: Vec<&StructureEntry> = matches
            .iter()
            .skip(offset)
            .take(limit)
            .map(|&i| &self.entries[i])
            .collect();
        let more = offset.saturating_add(items.len()) < total_matching;
        Ok(Page {
            items,
            offset,
            limit,
            more,
            total_matching,
        })
    }
}
