//! The `/info/structures` document describing every served property.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::PropertyDefinition;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertyInfo {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    #[serde(rename = "type")]
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InfoDocument {
    /// Entry type described, e.g. `structures`.
    pub id: String,
    #[serde(rename = "type")]
    pub doc_type: String,
    pub description: String,
    pub formats: Vec<String>,
    pub output_fields_by_format: BTreeMap<String, Vec<String>>,
    pub properties: BTreeMap<String, PropertyInfo>,
}

impl InfoDocument {
    pub fn property(&self, name: &str) -> Option<&PropertyInfo> {
        self.properties.get(name)
    }
}

// (name, type, unit, description)
const STANDARD: &[(&str, &str, Option<&str>, &str)] = &[
    (
        "id",
        "string",
        None,
        "Unique identifier of the entry within this database",
    ),
    ("type", "string", None, "Entry type, always `structures`"),
    (
        "last_modified",
        "timestamp",
        None,
        "Date and time of the last modification of the entry",
    ),
    (
        "elements",
        "list",
        None,
        "Chemical symbols of the elements present, in alphabetical order",
    ),
    ("nelements", "integer", None, "Number of distinct elements"),
    (
        "elements_ratios",
        "list",
        None,
        "Relative proportions of the elements, aligned with `elements`",
    ),
    (
        "chemical_formula_descriptive",
        "string",
        None,
        "Chemical formula as given by the data provider",
    ),
    (
        "chemical_formula_reduced",
        "string",
        None,
        "Reduced chemical formula with elements in alphabetical order",
    ),
    (
        "chemical_formula_anonymous",
        "string",
        None,
        "Anonymous formula with element identities replaced by letters in descending-count order",
    ),
    (
        "dimension_types",
        "list",
        None,
        "Periodicity along each lattice vector (1 periodic, 0 not)",
    ),
    (
        "nperiodic_dimensions",
        "integer",
        None,
        "Number of periodic dimensions",
    ),
    (
        "lattice_vectors",
        "list",
        Some("Å"),
        "Three lattice vectors in Cartesian coordinates",
    ),
    (
        "cartesian_site_positions",
        "list",
        Some("Å"),
        "Cartesian positions of every site",
    ),
    ("nsites", "integer", None, "Number of sites"),
    (
        "species",
        "list",
        None,
        "Species present at the sites, with chemical symbols and concentrations",
    ),
    (
        "species_at_sites",
        "list",
        None,
        "Species name of every site, aligned with `cartesian_site_positions`",
    ),
    (
        "structure_features",
        "list",
        None,
        "Notable features of the structure, e.g. `disorder`",
    ),
];

/// Info document for the structures entry type with every standard property plus each
/// custom property under its prefixed name.
pub fn build_info_document(
    defs: &[PropertyDefinition],
    prefix: &str,
    description: &str,
) -> InfoDocument {
    let mut properties: BTreeMap<String, PropertyInfo> = STANDARD
        .iter()
        .map(|&(name, kind, unit, desc)| {
            (
                name.to_string(),
                PropertyInfo {
                    title: None,
                    description: desc.to_string(),
                    unit: unit.map(str::to_string),
                    kind: kind.to_string(),
                },
            )
        })
        .collect();
    for def in defs {
        properties.insert(
            def.prefixed_name(prefix),
            PropertyInfo {
                title: Some(def.title.clone()),
                description: def.description.clone(),
                unit: def.unit.clone(),
                kind: def.kind.as_str().to_string(),
            },
        );
    }
    let fields = properties.keys().cloned().collect();
    InfoDocument {
        id: "structures".into(),
        doc_type: "info".into(),
        description: description.to_string(),
        formats: vec!["json".into()],
        output_fields_by_format: BTreeMap::from([("json".to_string(), fields)]),
        properties,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PropertyType;

    fn def(name: &str, unit: Option<&str>) -> PropertyDefinition {
        PropertyDefinition {
            name: name.into(),
            title: format!("{name} title"),
            description: format!("{name} description"),
            unit: unit.map(str::to_string),
            kind: PropertyType::Float,
        }
    }

    #[test]
    fn custom_energy() {
        let info = build_info_document(&[def("energy", Some("eV/atom"))], "local", "");
        let p = info.property("_local_energy").unwrap();
        assert_eq!(p.kind, "float");
        assert_eq!(p.unit.as_deref(), Some("eV/atom"));
        assert_eq!(p.description, "energy description");
        assert!(info.property("nelements").is_some());
    }

    #[test]
    fn standard_only() {
        let info = build_info_document(&[], "local", "");
        assert_eq!(info.properties.len(), STANDARD.len());
        assert!(info.properties.keys().all(|k| !k.starts_with('_')));
    }

    #[test]
    fn order_independent() {
        let a = build_info_document(&[def("x", None), def("y", None)], "p", "");
        let b = build_info_document(&[def("y", None), def("x", None)], "p", "");
        assert_eq!(a, b);
        assert!(a.property("_p_x").is_some() && a.property("_p_y").is_some());
    }
}
