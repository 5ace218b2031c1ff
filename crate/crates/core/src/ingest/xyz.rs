//! Plain and extended XYZ.

use super::{elements, Coordinates, Matrix3, ParsedStructure, Site};

struct Frame<'a> {
    comment: &'a str,
    atom_lines: Vec<&'a str>,
}

fn split_frame(bytes: &[u8]) -> Result<Frame<'_>, String> {
    let text = std::str::from_utf8(bytes).map_err(|_| "not UTF-8 text".to_string())?;
    let mut lines = text.lines();
    let first = lines.next().ok_or("empty file")?.trim();
    let count: usize = first
        .parse()
        .map_err(|_| format!("first line {first:?} is not an atom count"))?;
    let comment = lines.next().unwrap_or("");
    let atom_lines: Vec<&str> = lines.filter(|l| !l.trim().is_empty()).collect();
    if atom_lines.len() != count {
        return Err(format!(
            "declared {count} atoms but found {} coordinate lines",
            atom_lines.len()
        ));
    }
    if count == 0 {
        return Err("no atoms".into());
    }
    Ok(Frame {
        comment,
        atom_lines,
    })
}

/// Value of `key=...` in an extended-XYZ comment line; quoted values may contain spaces.
fn comment_value<'a>(comment: &'a str, key: &str) -> Option<&'a str> {
    let mut rest = comment;
    while let Some(pos) = rest.find('=') {
        let name = rest[..pos].split_whitespace().last().unwrap_or("");
        let after = &rest[pos + 1..];
        let (value, tail) = if let Some(stripped) = after.strip_prefix('"') {
            let end = stripped.find('"')?;
            (&stripped[..end], &stripped[end + 1..])
        } else {
            let end = after.find(char::is_whitespace).unwrap_or(after.len());
            (&after[..end], &after[end..])
        };
        if name.eq_ignore_ascii_case(key) {
            return Some(value);
        }
        rest = tail;
    }
    None
}

fn parse_floats(s: &str) -> Result<Vec<f64>, String> {
    s.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| format!("cannot parse {t:?} as a number"))
        })
        .collect()
}

/// Column offsets of species and positions from a `Properties=` descriptor.
fn property_columns(desc: &str) -> Result<(usize, usize), String> {
    let parts: Vec<&str> = desc.split(':').collect();
    if !parts.len().is_multiple_of(3) {
        return Err(format!("malformed Properties descriptor {desc:?}"));
    }
    let (mut species, mut pos, mut col) = (None, None, 0usize);
    for chunk in parts.chunks(3) {
        let width: usize = chunk[2]
            .parse()
            .map_err(|_| format!("malformed Properties descriptor {desc:?}"))?;
        match chunk[0].to_ascii_lowercase().as_str() {
            "species" => species = Some(col),
            "pos" if width == 3 => pos = Some(col),
            _ => {}
        }
        col += width;
    }
    Ok((
        species.ok_or("Properties lacks species")?,
        pos.ok_or("Properties lacks pos:R:3")?,
    ))
}

fn read_sites(frame: &Frame<'_>, species_col: usize, pos_col: usize) -> Result<Vec<Site>, String> {
    frame
        .atom_lines
        .iter()
        .enumerate()
        .map(|(i, line)| {
            let cols: Vec<&str> = line.split_whitespace().collect();
            let need = species_col.max(pos_col + 2) + 1;
            if cols.len() < need {
                return Err(format!(
                    "atom line {}: expected at least {need} columns",
                    i + 1
                ));
            }
            let element = elements::normalize(cols[species_col]).ok_or_else(|| {
                format!(
                    "atom line {}: unknown element {:?}",
                    i + 1,
                    cols[species_col]
                )
            })?;
            let mut position = [0.0f64; 3];
            for (k, p) in position.iter_mut().enumerate() {
                let raw = cols[pos_col + k];
                *p = raw
                    .parse()
                    .map_err(|_| format!("atom line {}: cannot parse {raw:?}", i + 1))?;
            }
            if position.iter().any(|x| !x.is_finite()) {
                return Err(format!("atom line {}: non-finite coordinate", i + 1));
            }
            Ok(Site {
                element,
                position,
                occupancy: 1.0,
            })
        })
        .collect()
}

/// Extended XYZ: requires `Lattice="ax ay az bx by bz cx cy cz"` in the comment line.
pub fn parse_extended_xyz(bytes: &[u8]) -> Result<ParsedStructure, String> {
    let frame = split_frame(bytes)?;
    let lattice_text =
        comment_value(frame.comment, "Lattice").ok_or("comment line has no Lattice=")?;
    let values = parse_floats(lattice_text)?;
    if values.len() != 9 {
        return Err(format!("Lattice needs 9 numbers, got {}", values.len()));
    }
    let lattice: Matrix3 = [
        [values[0], values[1], values[2]],
        [values[3], values[4], values[5]],
        [values[6], values[7], values[8]],
    ];
    let periodic = match comment_value(frame.comment, "pbc") {
        None => [true; 3],
        Some(p) => {
            let flags: Vec<bool> = p
                .split_whitespace()
                .map(|t| match t {
                    "T" | "t" | "True" | "true" | "1" => Ok(true),
                    "F" | "f" | "False" | "false" | "0" => Ok(false),
                    _ => Err(format!("bad pbc flag {t:?}")),
                })
                .collect::<Result<_, _>>()?;
            <[bool; 3]>::try_from(flags).map_err(|_| "pbc needs 3 flags".to_string())?
        }
    };
    let (species_col, pos_col) = match comment_value(frame.comment, "Properties") {
        Some(desc) => property_columns(desc)?,
        None => (0, 1),
    };
    let sites = read_sites(&frame, species_col, pos_col)?;
    let non_periodic = !periodic.iter().any(|&p| p);
    Ok(ParsedStructure {
        lattice: if non_periodic { None } else { Some(lattice) },
        periodic,
        coordinates: Coordinates::Cartesian,
        sites,
        source_path: String::new(),
    })
}

/// Plain XYZ: a molecule with cartesian positions and no cell.
pub fn parse_plain_xyz(bytes: &[u8]) -> Result<ParsedStructure, String> {
    let frame = split_frame(bytes)?;
    let sites = read_sites(&frame, 0, 1)?;
    Ok(ParsedStructure {
        lattice: None,
        periodic: [false; 3],
        coordinates: Coordinates::Cartesian,
        sites,
        source_path: String::new(),
    })
}

/// Either XYZ flavour, extended first.
pub fn parse_xyz(bytes: &[u8]) -> Result<ParsedStructure, String> {
    parse_extended_xyz(bytes).or_else(|_| parse_plain_xyz(bytes))
}
