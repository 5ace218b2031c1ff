//! Reading raw files out of directories and compressed archives.

use std::fs::File;
use std::io::{self, BufReader, Read};
use std::path::{Component, Path, PathBuf};

use globset::{GlobBuilder, GlobSet, GlobSetBuilder};

use super::RawEntrySource;

/// Directory name used for converted output; never treated as raw input.
pub const CACHE_DIR: &str = ".optimade-cache";

#[derive(Debug, thiserror::Error)]
pub enum ArchiveError {
    #[error("{}: unsupported archive kind (expected a directory, .zip, .tar.gz, .tgz or .tar.bz2)", .0.display())]
    Unsupported(PathBuf),
    #[error("{}: corrupt archive: {message}", path.display())]
    Corrupt { path: PathBuf, message: String },
    #[error("{}: member {member:?} escapes the archive root", archive.display())]
    PathTraversal { archive: PathBuf, member: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("invalid glob {pattern:?}: {message}")]
    Glob { pattern: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchiveKind {
    Directory,
    Zip,
    TarGz,
    TarBz2,
}

impl ArchiveKind {
    pub fn detect(path: &Path) -> Option<ArchiveKind> {
        if path.is_dir() {
            return Some(ArchiveKind::Directory);
        }
        let name = path.file_name()?.to_str()?.to_ascii_lowercase();
        if name.ends_with(".zip") {
            Some(ArchiveKind::Zip)
        } else if name.ends_with(".tar.gz") || name.ends_with(".tgz") {
            Some(ArchiveKind::TarGz)
        } else if name.ends_with(".tar.bz2") {
            Some(ArchiveKind::TarBz2)
        } else {
            None
        }
    }
}

pub fn glob_matcher(patterns: &[String]) -> Result<GlobSet, ArchiveError> {
    let mut builder = GlobSetBuilder::new();
    for pattern in patterns {
        let glob = GlobBuilder::new(pattern)
            .literal_separator(false)
            .build()
            .map_err(|e| ArchiveError::Glob {
                pattern: pattern.clone(),
                message: e.to_string(),
            })?;
        builder.add(glob);
    }
    builder.build().map_err(|e| ArchiveError::Glob {
        pattern: patterns.join(","),
        message: e.to_string(),
    })
}

/// Cleans a member name into a `/`-separated relative path, rejecting traversal.
fn member_path(archive: &Path, raw: &str) -> Result<String, ArchiveError> {
    let traversal = || ArchiveError::PathTraversal {
        archive: archive.to_path_buf(),
        member: raw.to_string(),
    };
    let mut parts = Vec::new();
    for part in raw.split(['/', '\\']) {
        match part {
            "" | "." => continue,
            ".." => return Err(traversal()),
            p => parts.push(p),
        }
    }
    if raw.starts_with('/') || parts.first().is_some_and(|p| p.ends_with(':')) {
        return Err(traversal());
    }
    Ok(parts.join("/"))
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ArchiveError + '_ {
    move |source| ArchiveError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Visits every regular file inside `path`; `visit` returns whether to read its content.
fn for_each_member(
    path: &Path,
    mut want: impl FnMut(&str) -> bool,
    mut visit: impl FnMut(String, Option<Vec<u8>>),
) -> Result<(), ArchiveError> {
    let kind = ArchiveKind::detect(path).ok_or_else(|| ArchiveError::Unsupported(path.into()))?;
    match kind {
        ArchiveKind::Directory => {
            let walker = walkdir::WalkDir::new(path)
                .follow_links(false)
                .sort_by_file_name();
            for dent in walker
                .into_iter()
                .filter_entry(|d| d.file_name() != CACHE_DIR)
            {
                let dent = dent.map_err(|e| ArchiveError::Io {
                    path: path.to_path_buf(),
                    source: e.into(),
                })?;
                if !dent.file_type().is_file() {
                    continue;
                }
                let rel = dent
                    .path()
                    .strip_prefix(path)
                    .expect("walkdir yields children");
                let rel: Vec<String> = rel
                    .components()
                    .filter_map(|c| match c {
                        Component::Normal(s) => Some(s.to_string_lossy().into_owned()),
                        _ => None,
                    })
                    .collect();
                let rel = rel.join("/");
                let bytes = if want(&rel) {
                    Some(std::fs::read(dent.path()).map_err(io_err(dent.path()))?)
                } else {
                    None
                };
                visit(rel, bytes);
            }
        }
        ArchiveKind::Zip => {
            let file = File::open(path).map_err(io_err(path))?;
            let corrupt = |e: zip::result::ZipError| ArchiveError::Corrupt {
                path: path.into(),
                message: e.to_string(),
            };
            let mut zip = zip::ZipArchive::new(BufReader::new(file)).map_err(corrupt)?;
            for i in 0..zip.len() {
                let mut member = zip.by_index(i).map_err(corrupt)?;
                if member.is_dir() {
                    continue;
                }
                let name = member.name().map_err(corrupt)?.into_owned();
                let rel = member_path(path, &name)?;
                let bytes = if want(&rel) {
                    let mut buf = Vec::with_capacity(member.size() as usize);
                    member
                        .read_to_end(&mut buf)
                        .map_err(|e| ArchiveError::Corrupt {
                            path: path.into(),
                            message: format!("{rel}: {e}"),
                        })?;
                    Some(buf)
                } else {
                    None
                };
                visit(rel, bytes);
            }
        }
        ArchiveKind::TarGz | ArchiveKind::TarBz2 => {
            let file = BufReader::new(File::open(path).map_err(io_err(path))?);
            let reader: Box<dyn Read> = if kind == ArchiveKind::TarGz {
                Box::new(flate2::read::GzDecoder::new(file))
            } else {
                Box::new(bzip2::read::BzDecoder::new(file))
            };
            let corrupt = |e: io::Error| ArchiveError::Corrupt {
                path: path.into(),
                message: e.to_string(),
            };
            let mut tar = tar::Archive::new(reader);
            for member in tar.entries().map_err(corrupt)? {
                let mut member = member.map_err(corrupt)?;
                if !member.header().entry_type().is_file() {
                    continue;
                }
                let raw = String::from_utf8_lossy(&member.path_bytes()).into_owned();
                let rel = member_path(path, &raw)?;
                let bytes = if want(&rel) {
                    let mut buf = Vec::new();
                    member.read_to_end(&mut buf).map_err(corrupt)?;
                    Some(buf)
                } else {
                    None
                };
                visit(rel, bytes);
            }
        }
    }
    Ok(())
}

/// Relative paths of all regular files inside a directory or archive, sorted.
pub fn list_members(path: &Path) -> Result<Vec<String>, ArchiveError> {
    let mut names = Vec::new();
    for_each_member(path, |_| false, |name, _| names.push(name))?;
    names.sort();
    Ok(names)
}

/// Reads every member matching any of `matches`, sorted by relative path.
///
/// `prefix` is prepended to member names (`structures.zip` + `cifs/x.cif` gives
/// `structures.zip/cifs/x.cif`). Empty members are skipped.
pub fn open_source(
    path: &Path,
    prefix: &str,
    matches: &[String],
) -> Result<Vec<RawEntrySource>, ArchiveError> {
    let globs = glob_matcher(matches)?;
    let prefix = prefix.trim_end_matches('/');
    let mut out = Vec::new();
    for_each_member(
        path,
        |name| globs.is_match(name),
        |name, bytes| match bytes {
            Some(bytes) if !bytes.is_empty() => {
                let relative_path = if prefix.is_empty() {
                    name
                } else {
                    format!("{prefix}/{name}")
                };
                out.push(RawEntrySource {
                    relative_path,
                    bytes,
                });
            }
            Some(_) => tracing::warn!(member = %name, "skipping empty file"),
            None => {}
        },
    )?;
    out.sort_by(|a, b| a.relative_path.cmp(&b.relative_path));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_zip(path: &Path, members: &[(&str, &str)]) {
        let mut zip = zip::ZipWriter::new(File::create(path).unwrap());
        for (name, body) in members {
            zip.start_file(*name, zip::write::SimpleFileOptions::default())
                .unwrap();
            zip.write_all(body.as_bytes()).unwrap();
        }
        zip.finish().unwrap();
    }

    fn globs(g: &[&str]) -> Vec<String> {
        g.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn zip_members_sorted_and_prefixed() {
        let dir = tempfile::tempdir().unwrap();
        let zip = dir.path().join("structures.zip");
        write_zip(
            &zip,
            &[
                ("cifs/set2/102.cif", "b"),
                ("cifs/set1/101.cif", "a"),
                ("readme.txt", "x"),
            ],
        );
        let got = open_source(&zip, "structures.zip", &globs(&["*.cif"])).unwrap();
        let names: Vec<_> = got.iter().map(|s| s.relative_path.as_str()).collect();
        assert_eq!(
            names,
            [
                "structures.zip/cifs/set1/101.cif",
                "structures.zip/cifs/set2/102.cif"
            ]
        );
        assert_eq!(got[0].bytes, b"a");
        assert_eq!(list_members(&zip).unwrap().len(), 3);
    }

    #[test]
    fn empty_directory() {
        let dir = tempfile::tempdir().unwrap();
        assert!(open_source(dir.path(), "data", &globs(&["*"]))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn directory_skips_cache() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("sub")).unwrap();
        std::fs::create_dir_all(dir.path().join(CACHE_DIR)).unwrap();
        std::fs::write(dir.path().join("sub/b.xyz"), "1\n\nH 0 0 0\n").unwrap();
        std::fs::write(dir.path().join("a.xyz"), "1\n\nH 0 0 0\n").unwrap();
        std::fs::write(dir.path().join(CACHE_DIR).join("c.xyz"), "x").unwrap();
        let got = open_source(dir.path(), "raw", &globs(&["*.xyz"])).unwrap();
        let names: Vec<_> = got.iter().map(|s| s.relative_path.as_str()).collect();
        assert_eq!(names, ["raw/a.xyz", "raw/sub/b.xyz"]);
    }

    fn tar_with_raw_name(path: &Path, name: &str, gz: bool) {
        let mut header = tar::Header::new_old();
        let bytes = name.as_bytes();
        header.as_old_mut().name[..bytes.len()].copy_from_slice(bytes);
        header.set_size(3);
        header.set_mode(0o644);
        header.set_entry_type(tar::EntryType::Regular);
        header.set_cksum();
        let file = File::create(path).unwrap();
        if gz {
            let enc = flate2::write::GzEncoder::new(file, flate2::Compression::default());
            let mut b = tar::Builder::new(enc);
            b.append(&header, &b"abc"[..]).unwrap();
            b.into_inner().unwrap().finish().unwrap();
        } else {
            let enc = bzip2::write::BzEncoder::new(file, bzip2::Compression::default());
            let mut b = tar::Builder::new(enc);
            b.append(&header, &b"abc"[..]).unwrap();
            b.into_inner().unwrap().finish().unwrap();
        }
    }

    #[test]
    fn tar_traversal_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.tar.gz");
        tar_with_raw_name(&path, "a/../b.cif", true);
        let err = open_source(&path, "bad.tar.gz", &globs(&["*"])).unwrap_err();
        assert!(matches!(err, ArchiveError::PathTraversal { .. }), "{err}");
    }

    #[test]
    fn tar_gz_and_bz2_read() {
        let dir = tempfile::tempdir().unwrap();
        for (name, gz) in [("ok.tgz", true), ("ok.tar.bz2", false)] {
            let path = dir.path().join(name);
            tar_with_raw_name(&path, "./x/a.cif", gz);
            let got = open_source(&path, name, &globs(&["*.cif"])).unwrap();
            assert_eq!(got.len(), 1);
            assert_eq!(got[0].relative_path, format!("{name}/x/a.cif"));
            assert_eq!(got[0].bytes, b"abc");
        }
    }

    #[test]
    fn unsupported_and_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let rar = dir.path().join("x.rar");
        std::fs::write(&rar, "nope").unwrap();
        assert!(matches!(
            open_source(&rar, "x", &globs(&["*"])),
            Err(ArchiveError::Unsupported(_))
        ));
        let zip = dir.path().join("x.zip");
        std::fs::write(&zip, "not a zip").unwrap();
        assert!(matches!(
            open_source(&zip, "x", &globs(&["*"])),
            Err(ArchiveError::Corrupt { .. })
        ));
    }

    #[test]
    fn member_path_rules() {
        let a = Path::new("a.zip");
        assert_eq!(member_path(a, "./x//y.cif").unwrap(), "x/y.cif");
        assert!(member_path(a, "/etc/passwd").is_err());
        assert!(member_path(a, "x/../../y").is_err());
        assert!(member_path(a, "C:/x").is_err());
    }
}
