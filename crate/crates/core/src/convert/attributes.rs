//! Standard structure attributes from a parsed structure.

use std::collections::BTreeMap;

use super::entry::{Species, StructureAttributes};
use crate::ingest::lattice::{determinant, to_cartesian};
use crate::ingest::{Coordinates, ParsedStructure};

pub const SINGULAR_LATTICE_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DeriveError {
    #[error("{path}: singular lattice (determinant {det:e} Å³)")]
    SingularLattice { path: String, det: f64 },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn count_suffix(n: u64) -> String {
    if n == 1 {
        String::new()
    } else {
        n.to_string()
    }
}

fn reduced_counts(
    composition: &BTreeMap<String, u64>,
) -> (u64, impl Iterator<Item = (&String, u64)>) {
    let divisor = composition.values().copied().fold(0, gcd).max(1);
    (
        divisor,
        composition.iter().map(move |(e, &n)| (e, n / divisor)),
    )
}

/// Counts divided by their gcd, elements in alphabetical order: `{Fe: 4, O: 6}` -> `Fe2O3`.
pub fn reduced_formula(composition: &BTreeMap<String, u64>) -> String {
    let (_, counts) = reduced_counts(composition);
    counts
        .map(|(e, n)| format!("{e}{}", count_suffix(n)))
        .collect()
}

/// Letter sequence A..Z, Aa..Za, Ab..Zb, ...
pub fn anonymous_symbol(index: usize) -> String {
    let upper = (b'A' + (index % 26) as u8) as char;
    if index < 26 {
        upper.to_string()
    } else {
        format!("{upper}{}", (b'a' + ((index / 26 - 1) % 26) as u8) as char)
    }
}

/// Reduced counts in descending order labelled A, B, ...; ties keep alphabetical element order.
pub fn anonymous_formula(composition: &BTreeMap<String, u64>) -> String {
    let (_, counts) = reduced_counts(composition);
    let mut counts: Vec<u64> = counts.map(|(_, n)| n).collect();
    // Stable sort over the alphabetical order breaks ties deterministically.
    counts.sort_by(|a, b| b.cmp(a));
    counts
        .iter()
        .enumerate()
        .map(|(i, &n)| format!("{}{}", anonymous_symbol(i), count_suffix(n)))
        .collect()
}

/// Groups sites by (element, occupancy). The fully or most occupied group of an element
/// is named by its symbol, further groups get a numeric suffix (`Fe`, `Fe2`, ...).
fn build_species(ps: &ParsedStructure) -> (Vec<Species>, Vec<String>) {
    let mut occupancies: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for site in &ps.sites {
        let list = occupancies.entry(site.element).or_default();
        if !list.iter().any(|o| o.to_bits() == site.occupancy.to_bits()) {
            list.push(site.occupancy);
        }
    }
    let mut names: BTreeMap<(&str, u64), String> = BTreeMap::new();
    let mut species = Vec::new();
    for (element, list) in occupancies.iter_mut() {
        list.sort_by(|a, b| b.total_cmp(a));
        for (k, &occ) in list.iter().enumerate() {
            let name = if k == 0 {
                element.to_string()
            } else {
                format!("{element}{}", k + 1)
            };
            names.insert((element, occ.to_bits()), name.clone());
            species.push(Species {
                name,
                chemical_symbols: vec![element.to_string()],
                concentration: vec![occ],
            });
        }
    }
    species.sort_by(|a, b| a.name.cmp(&b.name));
    let at_sites = ps
        .sites
        .iter()
        .map(|s| names[&(s.element, s.occupancy.to_bits())].clone())
        .collect();
    (species, at_sites)
}

pub fn derive_attributes(ps: &ParsedStructure) -> Result<StructureAttributes, DeriveError> {
    ps.check().map_err(|message| DeriveError::Invalid {
        path: ps.source_path.clone(),
        message,
    })?;
    if let Some(lattice) = &ps.lattice {
        let det = determinant(lattice);
        if det.abs() < SINGULAR_LATTICE_THRESHOLD {
            return Err(DeriveError::SingularLattice {
                path: ps.source_path.clone(),
                det,
            });
        }
    }

    let cartesian_site_positions: Vec<[f64; 3]> = match (ps.coordinates, &ps.lattice) {
        (Coordinates::Fractional, Some(lattice)) => ps
            .sites
            .iter()
            .map(|s| to_cartesian(lattice, s.position))
            .collect(),
        _ => ps.sites.iter().map(|s| s.position).collect(),
    };

    let mut composition: BTreeMap<String, u64> = BTreeMap::new();
    for site in &ps.sites {
        *composition.entry(site.element.to_string()).or_default() += 1;
    }
    let nsites = ps.sites.len();
    let elements: Vec<String> = composition.keys().cloned().collect();
    let elements_ratios = composition
        .values()
        .map(|&n| n as f64 / nsites as f64)
        .collect();
    let reduced = reduced_formula(&composition);

    let dimension_types = ps.periodic.map(u8::from);
    let nperiodic_dimensions = dimension_types.iter().sum();
    let (species, species_at_sites) = build_species(ps);
    let disordered = species
        .iter()
        .any(|s| s.concentration.iter().any(|&c| c < 1.0));

    Ok(StructureAttributes {
        nelements: elements.len(),
        elements,
        elements_ratios,
        chemical_formula_anonymous: anonymous_formula(&composition),
        chemical_formula_descriptive: reduced.clone(),
        chemical_formula_reduced: reduced,
        dimension_types,
        nperiodic_dimensions,
        lattice_vectors: if nperiodic_dimensions == 0 {
            None
        } else {
            ps.lattice
        },
        cartesian_site_positions,
        nsites,
        species,
        species_at_sites,
        structure_features: if disordered {
            vec!["disorder".to_string()]
        } else {
            Vec::new()
        },
        last_modified: None,
        custom: BTreeMap::new(),
    })
}
