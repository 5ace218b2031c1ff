//! Raw file ingestion: archives, structure parsers and property tables.

pub mod archive;
pub mod cif;
pub mod elements;
pub mod lattice;
pub mod properties;
pub mod xyz;

use std::fmt;

pub use archive::{open_source, ArchiveError};
pub use lattice::{Matrix3, Vec3};
pub use properties::{parse_properties, PropertyError, PropertyTable, PropertyValue};

/// One raw file, addressed by its path relative to the manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawEntrySource {
    pub relative_path: String,
    pub bytes: Vec<u8>,
}

impl RawEntrySource {
    pub fn new(relative_path: impl Into<String>, bytes: impl Into<Vec<u8>>) -> Self {
        RawEntrySource {
            relative_path: relative_path.into(),
            bytes: bytes.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coordinates {
    Fractional,
    Cartesian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Site {
    pub element: &'static str,
    pub position: Vec3,
    pub occupancy: f64,
}

/// Format-neutral crystal or molecule as produced by the parsers.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedStructure {
    pub lattice: Option<Matrix3>,
    pub periodic: [bool; 3],
    pub coordinates: Coordinates,
    pub sites: Vec<Site>,
    pub source_path: String,
}

impl ParsedStructure {
    /// Checks the invariants every parser must uphold.
    pub fn check(&self) -> Result<(), String> {
        if self.lattice.is_none() {
            if self.periodic.iter().any(|&p| p) {
                return Err("periodic structure without a lattice".into());
            }
            if self.coordinates != Coordinates::Cartesian {
                return Err("fractional coordinates without a lattice".into());
            }
        }
        if self.sites.is_empty() {
            return Err("structure has no sites".into());
        }
        for site in &self.sites {
            if !elements::is_symbol(site.element) {
                return Err(format!("unknown element {:?}", site.element));
            }
            if !(site.occupancy > 0.0 && site.occupancy <= 1.0) {
                return Err(format!("occupancy {} outside (0, 1]", site.occupancy));
            }
            if site.position.iter().any(|x| !x.is_finite()) {
                return Err("non-finite site position".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParserFailure {
    pub parser: &'static str,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct StructureParseError {
    pub path: String,
    pub failures: Vec<ParserFailure>,
}

impl fmt::Display for StructureParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: no parser could read this file", self.path)?;
        for fail in &self.failures {
            write!(f, "; {}: {}", fail.parser, fail.reason)?;
        }
        Ok(())
    }
}

type ParserFn = fn(&[u8]) -> Result<ParsedStructure, String>;

/// Registered structure parsers, tried in order.
pub const PARSERS: &[(&str, ParserFn)] = &[
    ("cif", cif::parse_cif),
    ("extxyz", xyz::parse_extended_xyz),
    ("xyz", xyz::parse_plain_xyz),
];

/// Runs each registered parser in turn and returns the first success.
pub fn parse_structure(source: &RawEntrySource) -> Result<ParsedStructure, StructureParseError> {
    let mut failures = Vec::new();
    for (name, parse) in PARSERS {
        match parse(&source.bytes).and_then(|mut ps| {
            ps.check()?;
            ps.source_path = source.relative_path.clone();
            Ok(ps)
        }) {
            Ok(ps) => return Ok(ps),
            Err(reason) => failures.push(ParserFailure {
                parser: name,
                reason,
            }),
        }
    }
    Err(StructureParseError {
        path: source.relative_path.clone(),
        failures,
    })
}

/// Strips a trailing parenthesized uncertainty: `5.431(2)` -> `5.431`.
pub(crate) fn parse_number(token: &str) -> Option<f64> {
    let t = match token.find('(') {
        Some(i) if token.ends_with(')') => &token[..i],
        Some(_) => return None,
        None => token,
    };
    if t.is_empty()
        || !t
            .chars()
            .all(|c| c.is_ascii_digit() || matches!(c, '+' | '-' | '.' | 'e' | 'E'))
    {
        return None;
    }
    t.parse().ok()
}
