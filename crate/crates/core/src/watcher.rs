//! Polling reconciler for a root directory of datasets.
//!
//! Each immediate subdirectory holding `optimade.yaml` is a dataset. Content is
//! fingerprinted by bytes; new or changed datasets are converted (with a per-dataset
//! cache) and swapped into the server's mount table.

use std::collections::BTreeMap;
use std::future::Future;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, SystemTime};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::{load_config_from_dir, MANIFEST_FILE};
use crate::convert::{convert_with_config, read_jsonl_file, write_jsonl_atomic};
use crate::ingest::archive::CACHE_DIR;
use crate::server::{MountedDataset, ServerState};
use crate::store::load_snapshot;

pub const DEFAULT_INTERVAL: Duration = Duration::from_secs(30);
pub const CACHE_FILE: &str = "structures.jsonl";
pub const FINGERPRINT_FILE: &str = "fingerprint";

/// Directory name to slug: lowercase, characters outside `[a-z0-9-]` become `-`,
/// leading dashes dropped.
pub fn slugify(name: &str) -> Option<String> {
    let slug: String = name
        .chars()
        .map(|c| c.to_ascii_lowercase())
        .map(|c| {
            if c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-' {
                c
            } else {
                '-'
            }
        })
        .collect();
    let slug = slug.trim_start_matches('-').to_string();
    (!slug.is_empty()).then_some(slug)
}

#[derive(Debug, Clone)]
pub struct DatasetFingerprint {
    pub slug: String,
    pub dir: PathBuf,
    pub manifest_digest: String,
    pub content_digest: String,
    pub converted_at: Option<SystemTime>,
}

/// Equal iff slug and both digests match; the directory and timestamp are bookkeeping.
impl PartialEq for DatasetFingerprint {
    fn eq(&self, other: &Self) -> bool {
        self.slug == other.slug
            && self.manifest_digest == other.manifest_digest
            && self.content_digest == other.content_digest
    }
}

impl Eq for DatasetFingerprint {}

impl DatasetFingerprint {
    fn cache_record(&self) -> String {
        format!("{}\n{}\n", self.manifest_digest, self.content_digest)
    }
}

fn sha256_file(path: &Path) -> std::io::Result<(u64, String)> {
    let mut file = std::fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut size = 0u64;
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        size += n as u64;
        hasher.update(&buf[..n]);
    }
    Ok((size, hex::encode(hasher.finalize())))
}

/// Fingerprints one dataset directory: a digest of the manifest bytes and an ordered
/// digest of every other file's relative path, size and content hash.
pub fn fingerprint_dir(dir: &Path, slug: &str) -> std::io::Result<DatasetFingerprint> {
    let manifest = std::fs::read(dir.join(MANIFEST_FILE))?;
    let manifest_digest = hex::encode(Sha256::digest(&manifest));
    let mut content = Sha256::new();
    let walker = walkdir::WalkDir::new(dir)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| e.depth() == 0 || e.file_name() != CACHE_DIR);
    for entry in walker {
        let entry = entry.map_err(std::io::Error::other)?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(dir).unwrap_or(entry.path());
        let rel = rel.to_string_lossy().replace('\\', "/");
        let (size, hash) = sha256_file(entry.path())?;
        content.update(format!("{rel}\0{size}\0{hash}\n").as_bytes());
    }
    Ok(DatasetFingerprint {
        slug: slug.to_string(),
        dir: dir.to_path_buf(),
        manifest_digest,
        content_digest: hex::encode(content.finalize()),
        converted_at: None,
    })
}

#[derive(Debug, Default)]
pub struct ScanResult {
    pub candidates: BTreeMap<String, DatasetFingerprint>,
    pub diagnostics: Vec<String>,
}

pub fn scan(root: &Path) -> ScanResult {
    let mut out = ScanResult::default();
    let dirs = match std::fs::read_dir(root) {
        Ok(d) => d,
        Err(e) => {
            out.diagnostics.push(format!("{}: {e}", root.display()));
            return out;
        }
    };
    let mut dirs: Vec<PathBuf> = dirs
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    for dir in dirs {
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        if name.starts_with('.') || !dir.join(MANIFEST_FILE).is_file() {
            continue;
        }
        let Some(slug) = slugify(&name) else {
            out.diagnostics.push(format!(
                "{}: cannot derive a slug from the directory name",
                dir.display()
            ));
            continue;
        };
        if out.candidates.contains_key(&slug) {
            out.diagnostics.push(format!(
                "{}: slug {slug:?} is already taken; skipped",
                dir.display()
            ));
            continue;
        }
        match fingerprint_dir(&dir, &slug) {
            Ok(fp) => {
                out.candidates.insert(slug, fp);
            }
            Err(e) => out.diagnostics.push(format!("{}: {e}", dir.display())),
        }
    }
    out
}

/// Turns a dataset directory into a mounted dataset.
pub trait Converter: Send + Sync {
    fn prepare(&self, fingerprint: &DatasetFingerprint) -> Result<MountedDataset, String>;
}

/// Full pipeline with a JSONL cache under `.optimade-cache/`, reused while the stored
/// fingerprint matches.
#[derive(Debug, Default, Clone, Copy)]
pub struct PipelineConverter;

impl Converter for PipelineConverter {
    fn prepare(&self, fp: &DatasetFingerprint) -> Result<MountedDataset, String> {
        prepare_dataset(fp).map(|(ds, _)| ds)
    }
}

/// Converts (or loads from the cache) the dataset described by `fp`.
/// Returns the mounted dataset and whether the cache was used.
pub fn prepare_dataset(fp: &DatasetFingerprint) -> Result<(MountedDataset, bool), String> {
    let cfg = load_config_from_dir(&fp.dir).map_err(|e| e.to_string())?;
    let cache_dir = fp.dir.join(CACHE_DIR);
    let cache_file = cache_dir.join(CACHE_FILE);
    let record_file = cache_dir.join(FINGERPRINT_FILE);
    let cached = std::fs::read_to_string(&record_file)
        .ok()
        .is_some_and(|r| r == fp.cache_record());
    let from_cache = if cached {
        read_jsonl_file(&cache_file).ok()
    } else {
        None
    };
    let hit = from_cache.is_some();
    let archive = match from_cache {
        Some(a) => a,
        None => {
            let archive = convert_with_config(&cfg, &fp.dir).map_err(|e| e.to_string())?;
            // Drop the old record first so an interrupted write never vouches for new bytes.
            let _ = std::fs::remove_file(&record_file);
            write_jsonl_atomic(&archive, &cache_file).map_err(|e| e.to_string())?;
            write_atomic(&record_file, fp.cache_record().as_bytes())
                .map_err(|e| format!("{}: {e}", record_file.display()))?;
            archive
        }
    };
    let snapshot = load_snapshot(archive, &fp.slug).map_err(|e| e.to_string())?;
    Ok((
        MountedDataset::new(&fp.slug, snapshot, &cfg.provider_prefix)?,
        hit,
    ))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension(format!("tmp-{}", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct ReconcileReport {
    pub added: Vec<String>,
    pub updated: Vec<String>,
    pub removed: Vec<String>,
    pub failed: Vec<String>,
    /// Diagnostic per failed slug.
    pub diagnostics: BTreeMap<String, String>,
    /// Problems found while scanning (unreadable or unnamed directories).
    pub scan_diagnostics: Vec<String>,
}

impl ReconcileReport {
    /// True when nothing was mounted, replaced, unmounted or newly failed.
    pub fn is_empty(&self) -> bool {
        self.added.is_empty()
            && self.updated.is_empty()
            && self.removed.is_empty()
            && self.failed.is_empty()
    }
}

pub struct Registry {
    root: PathBuf,
    state: Arc<ServerState>,
    converter: Arc<dyn Converter>,
    mounted: BTreeMap<String, DatasetFingerprint>,
    failures: BTreeMap<String, (DatasetFingerprint, String)>,
    conversions: usize,
}

impl Registry {
    pub fn new(
        root: impl Into<PathBuf>,
        state: Arc<ServerState>,
        converter: Arc<dyn Converter>,
    ) -> Self {
        Registry {
            root: root.into(),
            state,
            converter,
            mounted: BTreeMap::new(),
            failures: BTreeMap::new(),
            conversions: 0,
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn mounted(&self) -> &BTreeMap<String, DatasetFingerprint> {
        &self.mounted
    }

    /// Datasets whose current content failed to convert, with the diagnostic.
    pub fn failures(&self) -> BTreeMap<String, String> {
        self.failures
            .iter()
            .map(|(k, (_, d))| (k.clone(), d.clone()))
            .collect()
    }

    /// Number of conversions attempted so far.
    pub fn conversions(&self) -> usize {
        self.conversions
    }

    /// One scan-and-apply cycle. A failed conversion keeps any previous version mounted
    /// and is not retried until the dataset's content changes.
    pub fn reconcile(&mut self) -> ReconcileReport {
        let ScanResult {
            candidates,
            diagnostics,
        } = scan(&self.root);
        let mut report = ReconcileReport {
            scan_diagnostics: diagnostics,
            ..Default::default()
        };

        let todo: Vec<&DatasetFingerprint> = candidates
            .values()
            .filter(|fp| self.mounted.get(&fp.slug) != Some(fp))
            .filter(|fp| self.failures.get(&fp.slug).map(|(f, _)| f) != Some(fp))
            .collect();
        self.conversions += todo.len();
        let converter = &self.converter;
        let results: Vec<(DatasetFingerprint, Result<MountedDataset, String>)> = todo
            .par_iter()
            .map(|fp| {
                let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
                    converter.prepare(fp)
                }))
                .unwrap_or_else(|_| Err("conversion panicked".to_string()));
                ((*fp).clone(), result)
            })
            .collect();

        let vanished: Vec<String> = self
            .mounted
            .keys()
            .filter(|s| !candidates.contains_key(*s))
            .cloned()
            .collect();
        // A failure only stands while the content that caused it is still present.
        self.failures
            .retain(|slug, (f, _)| candidates.get(slug) == Some(f));
        if results.is_empty() && vanished.is_empty() {
            return report;
        }

        let mut table = (*self.state.mounts()).clone();
        for slug in vanished {
            table.remove(&slug);
            self.mounted.remove(&slug);
            report.removed.push(slug);
        }
        for (mut fp, result) in results {
            let slug = fp.slug.clone();
            match result {
                Ok(ds) => {
                    fp.converted_at = Some(SystemTime::now());
                    table.insert(slug.clone(), Arc::new(ds));
                    self.failures.remove(&slug);
                    if self.mounted.insert(slug.clone(), fp).is_some() {
                        report.updated.push(slug);
                    } else {
                        report.added.push(slug);
                    }
                }
                Err(diagnostic) => {
                    tracing::warn!(slug = %slug, "conversion failed: {diagnostic}");
                    report.diagnostics.insert(slug.clone(), diagnostic.clone());
                    self.failures.insert(slug.clone(), (fp, diagnostic));
                    report.failed.push(slug);
                }
            }
        }
        self.state.swap_mounts(table);
        report
    }
}

/// Reconciles every `interval` until `shutdown` resolves. A cycle in progress is
/// always completed first. Returns the registry for inspection.
pub async fn run_loop<F, R>(
    mut registry: Registry,
    interval: Duration,
    shutdown: F,
    mut on_report: R,
) -> Registry
where
    F: Future<Output = ()>,
    R: FnMut(&ReconcileReport),
{
    tokio::pin!(shutdown);
    loop {
        let (back, report) = tokio::task::spawn_blocking(move || {
            let report = registry.reconcile();
            (registry, report)
        })
        .await
        .expect("reconcile does not panic");
        registry = back;
        if !report.is_empty() {
            tracing::info!(
                added = ?report.added,
                updated = ?report.updated,
                removed = ?report.removed,
                failed = ?report.failed,
                "reconciled"
            );
        }
        for d in &report.scan_diagnostics {
            tracing::warn!("{d}");
        }
        on_report(&report);
        tokio::select! {
            _ = &mut shutdown => break,
            _ = tokio::time::sleep(interval) => {}
        }
    }
    registry
}
