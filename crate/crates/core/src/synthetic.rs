//! Deterministic synthetic datasets for tests and benchmarks.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::path::Path;

use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};

use crate::config::MANIFEST_FILE;
use crate::ingest::RawEntrySource;

pub const ELEMENT_POOL: &[&str] = &[
    "Ag", "Al", "Ba", "C", "Ca", "Cl", "Co", "Cu", "F", "Fe", "Ga", "Ge", "H", "K", "Li", "Mg",
    "N", "Na", "Ni", "O", "P", "S", "Si", "Sr", "Ti", "Zn",
];

pub type Composition = Vec<(&'static str, usize)>;

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// `nelements` distinct elements from the pool, alphabetical, each with 1..=`max_count` sites.
pub fn random_composition(rng: &mut impl Rng, nelements: usize, max_count: usize) -> Composition {
    let mut els: Vec<&'static str> = ELEMENT_POOL
        .choose_multiple(rng, nelements)
        .copied()
        .collect();
    els.sort_unstable();
    els.into_iter()
        .map(|e| (e, rng.random_range(1..=max_count)))
        .collect()
}

fn fractional_grid(i: usize) -> [f64; 3] {
    // Distinct points on a 5x5x5 grid, well apart from the merge tolerance.
    [
        (i % 5) as f64 / 5.0,
        ((i / 5) % 5) as f64 / 5.0,
        ((i / 25) % 5) as f64 / 5.0 + 0.01,
    ]
}

fn site_list<'a>(comp: &[(&'a str, usize)]) -> Vec<&'a str> {
    comp.iter()
        .flat_map(|&(e, n)| std::iter::repeat_n(e, n))
        .collect()
}

/// P1 cubic CIF with one site per atom of `comp`.
pub fn cubic_cif(block: &str, comp: &[(&str, usize)], a: f64) -> String {
    let mut s = format!(
        "data_{block}\n_cell_length_a {a}\n_cell_length_b {a}\n_cell_length_c {a}\n\
         _cell_angle_alpha 90\n_cell_angle_beta 90\n_cell_angle_gamma 90\n\
         _symmetry_space_group_name_H-M 'P 1'\nloop_\n_atom_site_label\n_atom_site_type_symbol\n\
         _atom_site_fract_x\n_atom_site_fract_y\n_atom_site_fract_z\n"
    );
    for (i, el) in site_list(comp).into_iter().enumerate() {
        let [x, y, z] = fractional_grid(i);
        s.push_str(&format!("{el}{} {el} {x:.4} {y:.4} {z:.4}\n", i + 1));
    }
    s
}

/// Extended XYZ in a cubic cell of edge `a`.
pub fn cubic_xyz(comp: &[(&str, usize)], a: f64) -> String {
    let sites = site_list(comp);
    let mut s = format!(
        "{}\nLattice=\"{a} 0 0 0 {a} 0 0 0 {a}\" Properties=species:S:1:pos:R:3 pbc=\"T T T\"\n",
        sites.len()
    );
    for (i, el) in sites.into_iter().enumerate() {
        let [x, y, z] = fractional_grid(i);
        s.push_str(&format!("{el} {:.5} {:.5} {:.5}\n", x * a, y * a, z * a));
    }
    s
}

/// Plain XYZ molecule (no cell).
pub fn molecule_xyz(comp: &[(&str, usize)]) -> String {
    let sites = site_list(comp);
    let mut s = format!("{}\nsynthetic molecule\n", sites.len());
    for (i, el) in sites.into_iter().enumerate() {
        s.push_str(&format!("{el} {:.3} 0.0 0.0\n", i as f64 * 1.1));
    }
    s
}

fn write_zip(path: &Path, members: &[(String, String)]) -> io::Result<()> {
    let mut zip = zip::ZipWriter::new(std::fs::File::create(path)?);
    let opts = zip::write::SimpleFileOptions::default()
        .compression_method(zip::CompressionMethod::Deflated);
    for (name, text) in members {
        zip.start_file(name.as_str(), opts)
            .map_err(io::Error::other)?;
        zip.write_all(text.as_bytes())?;
    }
    zip.finish().map_err(io::Error::other)?;
    Ok(())
}

pub const ENERGY_MANIFEST: &str = r#"config_version: "1"
database_description: Synthetic binary and ternary structures
entries:
  - entry_type: structures
    entry_paths:
      - file: structures.zip
        matches: ["cifs/**/*.cif"]
    property_paths: ["properties.csv"]
    property_definitions:
      - name: energy
        title: Total energy per atom
        description: Total energy per atom of the relaxed structure
        unit: eV/atom
        type: float
"#;

#[derive(Debug, Clone)]
pub struct EnergyFixture {
    pub total: usize,
    pub binary: usize,
    /// Entry id to energy.
    pub energies: BTreeMap<String, f64>,
    /// Entry id to number of elements.
    pub nelements: BTreeMap<String, usize>,
}

/// 20 CIFs in `structures.zip` (8 binary under `cifs/set1`, 12 ternary under
/// `cifs/set2`) plus a CSV of energies, in `dir`.
pub fn write_energy_dataset(dir: &Path, seed: u64) -> io::Result<EnergyFixture> {
    std::fs::create_dir_all(dir)?;
    let mut rng = rng(seed);
    let mut members = Vec::new();
    let mut fixture = EnergyFixture {
        total: 20,
        binary: 8,
        energies: BTreeMap::new(),
        nelements: BTreeMap::new(),
    };
    let mut csv = String::from("id,energy\n");
    for k in 0..20 {
        let (set, n) = if k < 8 { ("set1", 2) } else { ("set2", 3) };
        let number = 101 + k;
        let comp = random_composition(&mut rng, n, 4);
        members.push((
            format!("cifs/{set}/{number}.cif"),
            cubic_cif(&number.to_string(), &comp, 4.0 + k as f64 * 0.1),
        ));
        let id = format!("{set}/{number}");
        let energy = -(rng.random_range(100..900) as f64) / 100.0;
        csv.push_str(&format!("{id},{energy}\n"));
        fixture.energies.insert(id.clone(), energy);
        fixture.nelements.insert(id, n);
    }
    write_zip(&dir.join("structures.zip"), &members)?;
    std::fs::write(dir.join("properties.csv"), csv)?;
    std::fs::write(dir.join(MANIFEST_FILE), ENERGY_MANIFEST)?;
    Ok(fixture)
}

pub const XYZ_MANIFEST: &str = r#"config_version: "1"
database_description: Synthetic extended XYZ structures
entries:
  - entry_type: structures
    entry_paths:
      - file: xyz
        matches: ["*.xyz"]
"#;

/// `n` extended-XYZ files under `dir/xyz`, with 1-4 elements and up to 16 sites each.
pub fn write_xyz_dataset(dir: &Path, n: usize, seed: u64) -> io::Result<()> {
    let xyz_dir = dir.join("xyz");
    std::fs::create_dir_all(&xyz_dir)?;
    let mut rng = rng(seed);
    for i in 0..n {
        let nel = rng.random_range(1..=4);
        let comp = random_composition(&mut rng, nel, 4);
        std::fs::write(xyz_dir.join(format!("s{i:06}.xyz")), cubic_xyz(&comp, 6.0))?;
    }
    std::fs::write(dir.join(MANIFEST_FILE), XYZ_MANIFEST)
}

pub const HULL_MANIFEST: &str = r#"config_version: "1"
database_description: Synthetic hypothetical structures with stability descriptors
entries:
  - entry_type: structures
    entry_paths:
      - file: cifs
        matches: ["*.cif"]
    property_paths: ["descriptors.csv"]
    property_definitions:
      - name: convex_hull_distance
        title: Distance to the convex hull
        description: Energy above the convex hull
        unit: eV/atom
        type: float
      - name: elf_max
        title: Maximum ELF
        description: Maximum of the electron localization function
        type: float
"#;

#[derive(Debug, Clone)]
pub struct HullRow {
    pub id: String,
    pub convex_hull_distance: Option<f64>,
    pub elf_max: Option<f64>,
}

/// `n` CIFs with `convex_hull_distance` and `elf_max`, some cells left empty and some
/// values exactly on the 0.025 / 0.5 boundaries.
pub fn write_hull_dataset(dir: &Path, n: usize, seed: u64) -> io::Result<Vec<HullRow>> {
    let cif_dir = dir.join("cifs");
    std::fs::create_dir_all(&cif_dir)?;
    let mut rng = rng(seed);
    let mut rows = Vec::new();
    let mut csv = String::from("id,convex_hull_distance,elf_max\n");
    for i in 0..n {
        let nel = rng.random_range(1..=3);
        let comp = random_composition(&mut rng, nel, 3);
        let id = format!("h{i:04}");
        std::fs::write(
            cif_dir.join(format!("{id}.cif")),
            cubic_cif(&id, &comp, 5.0),
        )?;
        let hull = match rng.random_range(0..10) {
            0 => None,
            1 => Some(0.025),
            _ => Some((rng.random_range(0..1000) as f64) / 10_000.0),
        };
        let elf = match rng.random_range(0..10) {
            0 => None,
            1 => Some(0.5),
            _ => Some((rng.random_range(0..1000) as f64) / 1000.0),
        };
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        csv.push_str(&format!("{id},{},{}\n", cell(hull), cell(elf)));
        rows.push(HullRow {
            id,
            convex_hull_distance: hull,
            elf_max: elf,
        });
    }
    std::fs::write(dir.join("descriptors.csv"), csv)?;
    std::fs::write(dir.join(MANIFEST_FILE), HULL_MANIFEST)?;
    Ok(rows)
}

/// Mixed in-memory sources: periodic CIFs and extended XYZ plus a few molecules.
pub fn mixed_sources(n: usize, seed: u64) -> Vec<RawEntrySource> {
    let mut rng = rng(seed);
    (0..n)
        .map(|i| {
            let nel = rng.random_range(1..=4);
            let comp = random_composition(&mut rng, nel, 3);
            match i % 5 {
                4 => RawEntrySource::new(format!("mix/m{i:03}.xyz"), molecule_xyz(&comp)),
                3 => RawEntrySource::new(format!("mix/x{i:03}.xyz"), cubic_xyz(&comp, 5.0)),
                _ => RawEntrySource::new(
                    format!("mix/c{i:03}.cif"),
                    cubic_cif(&i.to_string(), &comp, 4.5),
                ),
            }
        })
        .collect()
}
