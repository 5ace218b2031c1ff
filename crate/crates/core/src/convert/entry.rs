use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::config::EntryType;

/// Standard structure attribute names produced by conversion (plus `id` and `type`).
pub const STANDARD_PROPERTIES: &[&str] = &[
    "id",
    "type",
    "immutable_id",
    "last_modified",
    "elements",
    "nelements",
    "elements_ratios",
    "chemical_formula_descriptive",
    "chemical_formula_reduced",
    "chemical_formula_hill",
    "chemical_formula_anonymous",
    "dimension_types",
    "nperiodic_dimensions",
    "lattice_vectors",
    "cartesian_site_positions",
    "nsites",
    "species",
    "species_at_sites",
    "assemblies",
    "structure_features",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Species {
    pub name: String,
    pub chemical_symbols: Vec<String>,
    pub concentration: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureAttributes {
    pub elements: Vec<String>,
    pub nelements: usize,
    pub elements_ratios: Vec<f64>,
    pub chemical_formula_reduced: String,
    pub chemical_formula_anonymous: String,
    pub chemical_formula_descriptive: String,
    pub dimension_types: [u8; 3],
    pub nperiodic_dimensions: u8,
    pub lattice_vectors: Option<[[f64; 3]; 3]>,
    pub cartesian_site_positions: Vec<[f64; 3]>,
    pub nsites: usize,
    pub species: Vec<Species>,
    pub species_at_sites: Vec<String>,
    pub structure_features: Vec<String>,
    pub last_modified: Option<String>,
    /// Provider-prefixed custom properties (`_<prefix>_<name>`).
    #[serde(flatten)]
    pub custom: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureEntry {
    pub id: String,
    #[serde(rename = "type")]
    pub entry_type: EntryType,
    pub attributes: StructureAttributes,
}

impl StructureEntry {
    pub fn new(id: impl Into<String>, attributes: StructureAttributes) -> Self {
        StructureEntry {
            id: id.into(),
            entry_type: EntryType::Structures,
            attributes,
        }
    }

    /// Flat property map (`id`, `type` and every attribute) used for filtering and output.
    pub fn to_document(&self) -> Map<String, Value> {
        let mut doc = match serde_json::to_value(&self.attributes) {
            Ok(Value::Object(m)) => m,
            _ => unreachable!("attributes serialize to an object"),
        };
        doc.insert("id".into(), Value::from(self.id.as_str()));
        doc.insert("type".into(), Value::from(self.entry_type.as_str()));
        doc
    }

    /// Checks the structural invariants of a derived entry.
    pub fn check(&self) -> Result<(), String> {
        let a = &self.attributes;
        if a.elements.windows(2).any(|w| w[0] >= w[1]) {
            return Err("elements not strictly sorted".into());
        }
        if a.nelements != a.elements.len() || a.elements_ratios.len() != a.elements.len() {
            return Err("nelements / elements_ratios length mismatch".into());
        }
        let sum: f64 = a.elements_ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || a.elements_ratios.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
            return Err(format!("elements_ratios invalid (sum {sum})"));
        }
        if a.species_at_sites.len() != a.nsites || a.cartesian_site_positions.len() != a.nsites {
            return Err("site arrays disagree with nsites".into());
        }
        let periodic: u8 = a.dimension_types.iter().sum();
        if periodic != a.nperiodic_dimensions
            || a.lattice_vectors.is_none() != (a.nperiodic_dimensions == 0)
        {
            return Err("periodicity fields inconsistent".into());
        }
        let disordered = a
            .species
            .iter()
            .any(|s| s.concentration.iter().any(|&c| c < 1.0));
        if disordered != a.structure_features.iter().any(|f| f == "disorder") {
            return Err("disorder flag inconsistent with species".into());
        }
        Ok(())
    }
}
