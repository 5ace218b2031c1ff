use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use tokio::net::TcpListener;

use optimake_forge_core::config::{self, Diagnostic, Severity, MANIFEST_FILE};
use optimake_forge_core::convert::{self, read_jsonl_file, write_jsonl_atomic};
use optimake_forge_core::ingest::{self, PropertyTable};
use optimake_forge_core::server::{self, mount_table, MountTable, MountedDataset, ServerState};
use optimake_forge_core::store::load_snapshot;
use optimake_forge_core::watcher::{
    self, fingerprint_dir, prepare_dataset, slugify, PipelineConverter, Registry,
};

#[derive(Parser)]
#[command(
    name = "optimake-forge",
    version,
    about = "Turn raw structure archives into OPTIMADE APIs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a dataset directory into an OPTIMADE JSON Lines archive.
    Convert {
        /// Dataset directory holding optimade.yaml (or the manifest itself).
        path: PathBuf,
        /// Output file; defaults to structures.jsonl beside the manifest.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Serve a dataset directory, a JSON Lines archive, or (with --watch-root) a root of datasets.
    Serve {
        path: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 5000)]
        port: u16,
        /// Treat PATH as a root whose subdirectories are datasets, and keep watching it.
        #[arg(long)]
        watch_root: bool,
        /// Run the conversion pipeline and exit without serving.
        #[arg(long)]
        prepare_only: bool,
        /// Poll interval in seconds for --watch-root.
        #[arg(long, default_value_t = watcher::DEFAULT_INTERVAL.as_secs_f64())]
        interval: f64,
    },
    /// Check a dataset's manifest and parse every file it references.
    Validate { path: PathBuf },
}

fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_env("OPTIMAKE_LOG")
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_target(false)
        .init();
}

/// Dataset directory for a path that is either the directory or its manifest.
fn dataset_dir(path: &Path) -> PathBuf {
    if path.file_name().is_some_and(|n| n == MANIFEST_FILE) {
        path.parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."))
    } else {
        path.to_path_buf()
    }
}

fn dir_slug(dir: &Path) -> String {
    let canonical = dir.canonicalize().unwrap_or_else(|_| dir.to_path_buf());
    canonical
        .file_name()
        .and_then(|n| slugify(&n.to_string_lossy()))
        .unwrap_or_else(|| "dataset".into())
}

fn cmd_convert(path: &Path, output: Option<&Path>) -> Result<()> {
    let dir = dataset_dir(path);
    let (_, archive) = convert::convert_dataset(&dir)?;
    let out = output
        .map(Path::to_path_buf)
        .unwrap_or_else(|| dir.join("structures.jsonl"));
    write_jsonl_atomic(&archive, &out)?;
    println!(
        "converted {} structures to {}",
        archive.entries.len(),
        out.display()
    );
    Ok(())
}

fn print_diagnostics(diags: &[Diagnostic]) {
    for d in diags {
        let sev = match d.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        eprintln!("{sev:<8} {:<40} {}", d.path, d.message);
    }
}

fn cmd_validate(path: &Path) -> Result<bool> {
    let dir = dataset_dir(path);
    let mut diags = Vec::new();
    match config::load_config_from_dir(&dir) {
        Err(e) => diags.push(Diagnostic::error(
            e.field_path().unwrap_or(MANIFEST_FILE),
            e.to_string(),
        )),
        Ok(cfg) => {
            diags.extend(config::validate_config(&cfg, &dir));
            if !diags.iter().any(|d| d.severity == Severity::Error) {
                diags.extend(dry_run(&cfg, &dir));
            }
        }
    }
    print_diagnostics(&diags);
    let errors = diags
        .iter()
        .filter(|d| d.severity == Severity::Error)
        .count();
    println!("{errors} errors, {} warnings", diags.len() - errors);
    Ok(errors == 0)
}

/// Parses every matched structure and property file, reporting each failure.
fn dry_run(cfg: &config::DatasetConfig, dir: &Path) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    for entry in &cfg.entries {
        let sources = match convert::collect_sources(entry, dir) {
            Ok(s) => s,
            Err(e) => {
                diags.push(Diagnostic::error(entry.entry_type.as_str(), e.to_string()));
                continue;
            }
        };
        let mut parsed_ok = true;
        for src in &sources {
            if let Err(e) = ingest::parse_structure(src) {
                parsed_ok = false;
                let reasons: Vec<String> = e
                    .failures
                    .iter()
                    .map(|f| format!("{}: {}", f.parser, f.reason))
                    .collect();
                diags.push(Diagnostic::error(&src.relative_path, reasons.join("; ")));
            }
        }
        let tables: Vec<PropertyTable> = entry
            .property_paths
            .iter()
            .filter_map(|p| {
                let bytes = std::fs::read(dir.join(p)).ok()?;
                match ingest::parse_properties(
                    &ingest::RawEntrySource::new(p.clone(), bytes),
                    &entry.property_definitions,
                ) {
                    Ok(t) => Some(t),
                    Err(e) => {
                        diags.push(Diagnostic::error(p, e.to_string()));
                        None
                    }
                }
            })
            .collect();
        if parsed_ok && tables.len() == entry.property_paths.len() {
            let attached = convert::build_entries(&sources).and_then(|(mut entries, ids)| {
                convert::attach_properties(
                    &mut entries,
                    &tables,
                    &entry.property_definitions,
                    &cfg.provider_prefix,
                    &ids,
                )
            });
            if let Err(e) = attached {
                diags.push(Diagnostic::error(entry.entry_type.as_str(), e.to_string()));
            }
        }
    }
    diags
}

fn load_jsonl_dataset(file: &Path) -> Result<MountedDataset> {
    let archive = read_jsonl_file(file).with_context(|| format!("reading {}", file.display()))?;
    let parent = file
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let manifest = config::load_config_from_dir(parent).ok();
    let prefix = manifest
        .as_ref()
        .map(|c| c.provider_prefix.clone())
        .unwrap_or_else(|| config::DEFAULT_PROVIDER_PREFIX.into());
    let slug = if manifest.is_some() {
        dir_slug(parent)
    } else {
        file.file_stem()
            .and_then(|s| slugify(&s.to_string_lossy()))
            .unwrap_or_else(|| "dataset".into())
    };
    let snapshot = load_snapshot(archive, &slug)?;
    MountedDataset::new(&slug, snapshot, &prefix).map_err(anyhow::Error::msg)
}

fn prepare_dir(dir: &Path) -> Result<MountedDataset> {
    let slug = dir_slug(dir);
    if !dir.join(MANIFEST_FILE).is_file() {
        bail!("{} has no {MANIFEST_FILE}", dir.display());
    }
    let fp = fingerprint_dir(dir, &slug).with_context(|| format!("reading {}", dir.display()))?;
    let (ds, cached) = prepare_dataset(&fp).map_err(anyhow::Error::msg)?;
    tracing::info!(slug = %slug, cached, "prepared {} structures", ds.snapshot.total());
    Ok(ds)
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}

async fn bind(host: &str, port: u16) -> Result<TcpListener> {
    let listener = TcpListener::bind((host, port))
        .await
        .with_context(|| format!("cannot listen on {host}:{port}"))?;
    let addr: SocketAddr = listener.local_addr()?;
    println!("listening on http://{addr}");
    std::io::stdout().flush()?;
    Ok(listener)
}

async fn cmd_serve(
    path: &Path,
    host: &str,
    port: u16,
    watch_root: bool,
    prepare_only: bool,
    interval: f64,
) -> Result<()> {
    if watch_root {
        if !path.is_dir() {
            bail!("{} is not a directory", path.display());
        }
        if !(interval.is_finite() && interval > 0.0) {
            bail!("--interval must be positive");
        }
        let state = ServerState::new(MountTable::new());
        let mut registry = Registry::new(path, state.clone(), Arc::new(PipelineConverter));
        if prepare_only {
            let report = tokio::task::spawn_blocking(move || registry.reconcile()).await?;
            for (slug, diag) in &report.diagnostics {
                eprintln!("error    {slug:<20} {diag}");
            }
            println!(
                "prepared {} datasets, {} failed",
                report.added.len(),
                report.failed.len()
            );
            if !report.failed.is_empty() {
                bail!("{} datasets failed to convert", report.failed.len());
            }
            return Ok(());
        }
        let listener = bind(host, port).await?;
        let (stop_tx, stop_rx) = tokio::sync::watch::channel(false);
        let mut loop_stop = stop_rx.clone();
        let watcher = tokio::spawn(watcher::run_loop(
            registry,
            Duration::from_secs_f64(interval),
            async move {
                let _ = loop_stop.wait_for(|s| *s).await;
            },
            |_| {},
        ));
        server::serve(listener, state, async move {
            shutdown_signal().await;
            let _ = stop_tx.send(true);
        })
        .await?;
        let _ = watcher.await;
        return Ok(());
    }

    let dataset = if path.is_file() && path.extension().is_some_and(|e| e == "jsonl") {
        if prepare_only {
            println!("{} is already converted", path.display());
            return Ok(());
        }
        load_jsonl_dataset(path)?
    } else {
        let dir = dataset_dir(path);
        let ds = tokio::task::spawn_blocking(move || prepare_dir(&dir)).await??;
        if prepare_only {
            println!(
                "prepared {} structures for {}",
                ds.snapshot.total(),
                ds.slug
            );
            return Ok(());
        }
        ds
    };
    let listener = bind(host, port).await?;
    tracing::info!("serving {} at /archives/{}/v1/", dataset.slug, dataset.slug);
    let state = ServerState::new(mount_table([Arc::new(dataset)]));
    server::serve(listener, state, shutdown_signal()).await?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging();
    let result = match cli.command {
        Command::Convert { path, output } => cmd_convert(&path, output.as_deref()).map(|_| true),
        Command::Validate { path } => cmd_validate(&path),
        Command::Serve {
            path,
            host,
            port,
            watch_root,
            prepare_only,
            interval,
        } => {
            match tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
            {
                Ok(rt) => rt
                    .block_on(cmd_serve(
                        &path,
                        &host,
                        port,
                        watch_root,
                        prepare_only,
                        interval,
                    ))
                    .map(|_| true),
                Err(e) => Err(e.into()),
            }
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
