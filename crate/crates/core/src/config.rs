//! The `optimade.yaml` dataset manifest.
//!
//! A manifest names the raw files that hold structures (`entry_paths`), the auxiliary
//! files that hold per-structure properties (`property_paths`), and typed metadata for
//! each such property (`property_definitions`). Loading is strict: unknown keys, bad
//! identifiers and unsupported versions are rejected with the path of the offending
//! field.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

use crate::convert::entry::STANDARD_PROPERTIES;
use crate::ingest::archive;

pub const MANIFEST_FILE: &str = "optimade.yaml";
pub const SUPPORTED_CONFIG_VERSIONS: &[&str] = &["1"];
pub const DEFAULT_PROVIDER_PREFIX: &str = "local";

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("malformed YAML: {0}")]
    Syntax(String),
    #[error("invalid manifest at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("unsupported config_version {0:?} (supported: {supported})", supported = SUPPORTED_CONFIG_VERSIONS.join(", "))]
    Version(String),
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl ConfigError {
    fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Field path of a schema error, if any.
    pub fn field_path(&self) -> Option<&str> {
        match self {
            ConfigError::Schema { path, .. } => Some(path),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(deserialize_with = "version_string")]
    pub config_version: String,
    #[serde(default)]
    pub database_description: String,
    #[serde(default = "default_prefix")]
    pub provider_prefix: String,
    pub entries: Vec<EntryConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryType {
    Structures,
}

impl EntryType {
    pub fn as_str(self) -> &'static str {
        match self {
            EntryType::Structures => "structures",
        }
    }
}

impl fmt::Display for EntryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryConfig {
    pub entry_type: EntryType,
    pub entry_paths: Vec<SourceSpec>,
    #[serde(default)]
    pub property_paths: Vec<String>,
    #[serde(default)]
    pub property_definitions: Vec<PropertyDefinition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub file: String,
    #[serde(default = "default_matches")]
    pub matches: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropertyType {
    Float,
    Integer,
    String,
    Boolean,
}

impl PropertyType {
    pub fn as_str(self) -> &'static str {
        match self {
            PropertyType::Float => "float",
            PropertyType::Integer => "integer",
            PropertyType::String => "string",
            PropertyType::Boolean => "boolean",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertyDefinition {
    pub name: String,
    pub title: String,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    #[serde(rename = "type")]
    pub kind: PropertyType,
}

impl PropertyDefinition {
    /// Attribute key under which the property is stored and served.
    pub fn prefixed_name(&self, prefix: &str) -> String {
        format!("_{prefix}_{}", self.name)
    }
}

fn default_prefix() -> String {
    DEFAULT_PROVIDER_PREFIX.to_string()
}

fn default_matches() -> Vec<String> {
    vec!["*".to_string()]
}

// Accepts `config_version: 1` as well as `config_version: "1"`.
fn version_string<'de, D: Deserializer<'de>>(de: D) -> Result<String, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Str(String),
        Int(i64),
    }
    Ok(match Raw::deserialize(de)? {
        Raw::Str(s) => s,
        Raw::Int(i) => i.to_string(),
    })
}

/// `[a-z_][a-z_0-9]*`
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase() || c == '_')
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// Glob patterns may only use `*`, `?`, `**` and literal text.
fn check_glob(pattern: &str) -> Result<(), String> {
    if pattern.is_empty() {
        return Err("empty glob pattern".into());
    }
    if let Some(c) = pattern
        .chars()
        .find(|c| matches!(c, '[' | ']' | '{' | '}' | '\\'))
    {
        return Err(format!("unsupported glob syntax {c:?} in {pattern:?}"));
    }
    Ok(())
}

fn check_relative_path(path: &str) -> Result<(), String> {
    if path.is_empty() {
        return Err("empty path".into());
    }
    let p = Path::new(path);
    if p.is_absolute() {
        return Err(format!("{path:?} must be relative to the manifest"));
    }
    if p.components()
        .any(|c| matches!(c, std::path::Component::ParentDir))
    {
        return Err(format!("{path:?} must not contain `..`"));
    }
    Ok(())
}

/// Parses and validates a manifest document.
pub fn load_config(text: &str) -> Result<DatasetConfig, ConfigError> {
    let value: serde_yaml::Value =
        serde_yaml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;

    if let Some(version) = value.get("config_version") {
        let v = match version {
            serde_yaml::Value::String(s) => Some(s.clone()),
            serde_yaml::Value::Number(n) => Some(n.to_string()),
            _ => None,
        };
        if let Some(v) = v {
            if !SUPPORTED_CONFIG_VERSIONS.contains(&v.as_str()) {
                return Err(ConfigError::Version(v));
            }
        }
    }

    let cfg: DatasetConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::schema(
            if path == "." { String::new() } else { path },
            e.into_inner().to_string(),
        )
    })?;
    cfg.check()?;
    Ok(cfg)
}

/// Reads `optimade.yaml` from a dataset directory.
pub fn load_config_from_dir(dir: &Path) -> Result<DatasetConfig, ConfigError> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| ConfigError::Io {
        path: path.clone(),
        message: e.to_string(),
    })?;
    load_config(&text)
}

impl DatasetConfig {
    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("manifest serialization cannot fail")
    }

    pub fn entry(&self, entry_type: EntryType) -> Option<&EntryConfig> {
        self.entries.iter().find(|e| e.entry_type == entry_type)
    }

    fn check(&self) -> Result<(), ConfigError> {
        if !is_identifier(&self.provider_prefix) {
            return Err(ConfigError::schema(
                "provider_prefix",
                format!("{:?} must match [a-z_][a-z_0-9]*", self.provider_prefix),
            ));
        }
        if self.entries.is_empty() {
            return Err(ConfigError::schema(
                "entries",
                "at least one entry is required",
            ));
        }
        for (i, entry) in self.entries.iter().enumerate() {
            if self.entries[..i]
                .iter()
                .any(|e| e.entry_type == entry.entry_type)
            {
                return Err(ConfigError::schema(
                    format!("entries[{i}].entry_type"),
                    format!("duplicate entry type {}", entry.entry_type),
                ));
            }
            entry.check(&format!("entries[{i}]"))?;
        }
        Ok(())
    }
}

impl EntryConfig {
    fn check(&self, at: &str) -> Result<(), ConfigError> {
        if self.entry_paths.is_empty() {
            return Err(ConfigError::schema(
                format!("{at}.entry_paths"),
                "must not be empty",
            ));
        }
        for (i, src) in self.entry_paths.iter().enumerate() {
            check_relative_path(&src.file)
                .map_err(|m| ConfigError::schema(format!("{at}.entry_paths[{i}].file"), m))?;
            if src.matches.is_empty() {
                return Err(ConfigError::schema(
                    format!("{at}.entry_paths[{i}].matches"),
                    "must not be empty",
                ));
            }
            for (j, pattern) in src.matches.iter().enumerate() {
                check_glob(pattern).map_err(|m| {
                    ConfigError::schema(format!("{at}.entry_paths[{i}].matches[{j}]"), m)
                })?;
            }
        }
        for (i, path) in self.property_paths.iter().enumerate() {
            check_relative_path(path)
                .map_err(|m| ConfigError::schema(format!("{at}.property_paths[{i}]"), m))?;
        }
        for (i, def) in self.property_definitions.iter().enumerate() {
            let field = format!("{at}.property_definitions[{i}].name");
            if !is_identifier(&def.name) {
                return Err(ConfigError::schema(
                    field,
                    format!("{:?} must match [a-z_][a-z_0-9]*", def.name),
                ));
            }
            if STANDARD_PROPERTIES.contains(&def.name.as_str()) {
                return Err(ConfigError::schema(
                    field,
                    format!("{:?} collides with a standard OPTIMADE attribute", def.name),
                ));
            }
            if self.property_definitions[..i]
                .iter()
                .any(|d| d.name == def.name)
            {
                return Err(ConfigError::schema(
                    field,
                    format!("duplicate property {:?}", def.name),
                ));
            }
        }
        Ok(())
    }

    pub fn definition(&self, name: &str) -> Option<&PropertyDefinition> {
        self.property_definitions.iter().find(|d| d.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Severity {
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Warning => "warning",
            Severity::Error => "error",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub path: String,
    pub message: String,
}

impl Diagnostic {
    pub fn error(path: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Error,
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn warning(path: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Warning,
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.severity, self.path, self.message)
    }
}

/// Checks that every file the manifest references exists and every glob matches.
pub fn validate_config(cfg: &DatasetConfig, dataset_root: &Path) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for entry in &cfg.entries {
        for src in &entry.entry_paths {
            let path = dataset_root.join(&src.file);
            if !path.exists() {
                out.push(Diagnostic::error(
                    &src.file,
                    "referenced file does not exist",
                ));
                continue;
            }
            let members = match archive::list_members(&path) {
                Ok(m) => m,
                Err(e) => {
                    out.push(Diagnostic::error(&src.file, e.to_string()));
                    continue;
                }
            };
            for pattern in &src.matches {
                match archive::glob_matcher(std::slice::from_ref(pattern)) {
                    Ok(m) if !members.iter().any(|name| m.is_match(name)) => {
                        out.push(Diagnostic::warning(
                            &src.file,
                            format!("glob {pattern:?} matches no files"),
                        ))
                    }
                    Ok(_) => {}
                    Err(e) => out.push(Diagnostic::error(&src.file, e.to_string())),
                }
            }
        }
        for prop in &entry.property_paths {
            if !dataset_root.join(prop).is_file() {
                out.push(Diagnostic::error(
                    prop,
                    "referenced property file does not exist",
                ));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const ENERGY_MANIFEST: &str = r#"
config_version: "1"
database_description: Demo dataset of binary and ternary structures
entries:
  - entry_type: structures
    entry_paths:
      - file: structures.zip
        matches: ["*.cif"]
    property_paths: ["properties.csv"]
    property_definitions:
      - name: energy
        title: Total energy per atom
        description: The floating-point total energy per atom
        unit: eV/atom
        type: float
"#;

    #[test]
    fn loads_manifest() {
        let cfg = load_config(ENERGY_MANIFEST).unwrap();
        assert_eq!(cfg.entries.len(), 1);
        assert_eq!(cfg.provider_prefix, "local");
        let defs = &cfg.entries[0].property_definitions;
        assert_eq!(defs.len(), 1);
        assert_eq!(defs[0].kind, PropertyType::Float);
        assert_eq!(defs[0].unit.as_deref(), Some("eV/atom"));
        assert_eq!(cfg.entries[0].entry_paths[0].matches, vec!["*.cif"]);
    }

    #[test]
    fn minimal_manifest_gets_defaults() {
        let cfg = load_config(
            "config_version: 1\nentries:\n  - entry_type: structures\n    entry_paths:\n      - file: data\n",
        )
        .unwrap();
        let entry = &cfg.entries[0];
        assert!(entry.property_definitions.is_empty());
        assert!(entry.property_paths.is_empty());
        assert_eq!(entry.entry_paths[0].matches, vec!["*"]);
        assert_eq!(cfg.database_description, "");
    }

    #[test]
    fn standard_attribute_collision() {
        let text = ENERGY_MANIFEST.replace("name: energy", "name: nelements");
        let err = load_config(&text).unwrap_err();
        assert_eq!(
            err.field_path(),
            Some("entries[0].property_definitions[0].name")
        );
    }

    #[test]
    fn unknown_key_rejected() {
        let text = ENERGY_MANIFEST.replace(
            "        unit: eV/atom",
            "        unit: eV/atom\n        units: eV",
        );
        let err = load_config(&text).unwrap_err();
        assert!(matches!(err, ConfigError::Schema { .. }), "{err}");
        assert_eq!(
            err.field_path(),
            Some("entries[0].property_definitions[0].units")
        );
        // Same document, same first error.
        assert_eq!(load_config(&text).unwrap_err(), err);
    }

    #[test]
    fn error_kinds() {
        assert!(matches!(
            load_config("a: [1, 2"),
            Err(ConfigError::Syntax(_))
        ));
        assert!(matches!(
            load_config(&ENERGY_MANIFEST.replace("config_version: \"1\"", "config_version: \"7\"")),
            Err(ConfigError::Version(v)) if v == "7"
        ));
        let missing = load_config("config_version: \"1\"\n").unwrap_err();
        assert!(matches!(missing, ConfigError::Schema { .. }));
        let wrong_type =
            load_config(&ENERGY_MANIFEST.replace("type: float", "type: list")).unwrap_err();
        assert_eq!(
            wrong_type.field_path(),
            Some("entries[0].property_definitions[0].type")
        );
        let bad_prefix = load_config(&ENERGY_MANIFEST.replace(
            "database_description",
            "provider_prefix: Bad-Prefix\ndatabase_description",
        ))
        .unwrap_err();
        assert_eq!(bad_prefix.field_path(), Some("provider_prefix"));
        let bad_glob = load_config(&ENERGY_MANIFEST.replace("*.cif", "[ab].cif")).unwrap_err();
        assert_eq!(
            bad_glob.field_path(),
            Some("entries[0].entry_paths[0].matches[0]")
        );
    }

    #[test]
    fn duplicate_entry_type() {
        let text = "config_version: \"1\"\nentries:\n  - entry_type: structures\n    entry_paths: [{file: a}]\n  - entry_type: structures\n    entry_paths: [{file: b}]\n";
        assert_eq!(
            load_config(text).unwrap_err().field_path(),
            Some("entries[1].entry_type")
        );
    }

    #[test]
    fn json_document_is_accepted() {
        let cfg = load_config(
            r#"{"config_version": "1", "entries": [{"entry_type": "structures", "entry_paths": [{"file": "x.zip"}]}]}"#,
        )
        .unwrap();
        assert_eq!(cfg.entries[0].entry_paths[0].file, "x.zip");
    }

    #[test]
    fn yaml_round_trip() {
        let cfg = load_config(ENERGY_MANIFEST).unwrap();
        assert_eq!(load_config(&cfg.to_yaml()).unwrap(), cfg);
    }

    #[test]
    fn identifiers() {
        assert!(is_identifier("local"));
        assert!(is_identifier("_mc_archive2"));
        assert!(!is_identifier("2abc"));
        assert!(!is_identifier("Abc"));
        assert!(!is_identifier(""));
    }
}
