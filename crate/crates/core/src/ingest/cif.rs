//! Reader for the subset of CIF 1.1 that describes a crystal: cell parameters, the
//! `_atom_site_*` loop and optional symmetry operators. Only the first data block is read.

use std::collections::HashMap;

use super::lattice::{lattice_from_parameters, Vec3};
use super::{elements, parse_number, Coordinates, ParsedStructure, Site};

/// Symmetry-equivalent sites closer than this (per fractional component, modulo 1) merge.
pub const DEDUP_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Data,
    Loop,
    Tag(String),
    Value(String),
}

/// Splits CIF text into tokens, honoring quotes, comments and `;` text fields.
fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut lines = text.lines().peekable();
    while let Some(line) = lines.next() {
        if let Some(first) = line.strip_prefix(';') {
            let mut field = first.to_string();
            for next in lines.by_ref() {
                if next.starts_with(';') {
                    break;
                }
                field.push('\n');
                field.push_str(next);
            }
            tokens.push(Token::Value(field.trim().to_string()));
            continue;
        }
        let bytes: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i];
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            if c == '#' {
                break;
            }
            if c == '\'' || c == '"' {
                // A closing quote only counts when followed by whitespace or end of line.
                let mut j = i + 1;
                while j < bytes.len()
                    && !(bytes[j] == c && (j + 1 == bytes.len() || bytes[j + 1].is_whitespace()))
                {
                    j += 1;
                }
                tokens.push(Token::Value(
                    bytes[i + 1..j.min(bytes.len())].iter().collect(),
                ));
                i = j + 1;
                continue;
            }
            let start = i;
            while i < bytes.len() && !bytes[i].is_whitespace() {
                i += 1;
            }
            let word: String = bytes[start..i].iter().collect();
            let lower = word.to_ascii_lowercase();
            tokens.push(if lower.starts_with("data_") {
                Token::Data
            } else if lower == "loop_" {
                Token::Loop
            } else if word.starts_with('_') {
                Token::Tag(lower)
            } else {
                Token::Value(word)
            });
        }
    }
    tokens
}

#[derive(Debug, Default)]
struct Block {
    items: HashMap<String, String>,
    loops: Vec<Loop>,
}

#[derive(Debug)]
struct Loop {
    tags: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Loop {
    fn column(&self, tag: &str) -> Option<usize> {
        self.tags.iter().position(|t| t == tag)
    }
}

fn read_block(tokens: &[Token]) -> Result<Block, String> {
    let mut block = Block::default();
    let mut i = 0;
    let mut seen_data = false;
    while i < tokens.len() {
        match &tokens[i] {
            Token::Data => {
                if seen_data {
                    break;
                }
                seen_data = true;
                i += 1;
            }
            Token::Loop => {
                i += 1;
                let mut tags = Vec::new();
                while let Some(Token::Tag(t)) = tokens.get(i) {
                    tags.push(t.clone());
                    i += 1;
                }
                let mut values = Vec::new();
                while let Some(Token::Value(v)) = tokens.get(i) {
                    values.push(v.clone());
                    i += 1;
                }
                if tags.is_empty() {
                    return Err("loop_ without tags".into());
                }
                if values.len() % tags.len() != 0 {
                    return Err(format!(
                        "loop over {} has {} values, not a multiple of {} columns",
                        tags[0],
                        values.len(),
                        tags.len()
                    ));
                }
                let rows = values.chunks(tags.len()).map(|r| r.to_vec()).collect();
                block.loops.push(Loop { tags, rows });
            }
            Token::Tag(tag) => match tokens.get(i + 1) {
                Some(Token::Value(v)) => {
                    block.items.insert(tag.clone(), v.clone());
                    i += 2;
                }
                _ => return Err(format!("tag {tag} has no value")),
            },
            Token::Value(_) => i += 1,
        }
    }
    Ok(block)
}

/// An affine operator on fractional coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SymOp {
    pub rotation: [[f64; 3]; 3],
    pub translation: Vec3,
}

impl SymOp {
    pub fn identity() -> Self {
        SymOp {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    pub fn apply(&self, f: Vec3) -> Vec3 {
        let mut out = self.translation;
        for (row, o) in self.rotation.iter().zip(out.iter_mut()) {
            *o += row[0] * f[0] + row[1] * f[1] + row[2] * f[2];
        }
        out
    }

    /// Parses operator strings such as `-x+1/2, y, z-x`.
    pub fn parse(text: &str) -> Result<SymOp, String> {
        let parts: Vec<&str> = text.split(',').collect();
        if parts.len() != 3 {
            return Err(format!("symmetry operator {text:?} needs three components"));
        }
        let mut op = SymOp {
            rotation: [[0.0; 3]; 3],
            translation: [0.0; 3],
        };
        for (k, part) in parts.iter().enumerate() {
            let (row, t) =
                parse_component(part).map_err(|e| format!("symmetry operator {text:?}: {e}"))?;
            op.rotation[k] = row;
            op.translation[k] = t;
        }
        Ok(op)
    }
}

fn parse_component(s: &str) -> Result<([f64; 3], f64), String> {
    let chars: Vec<char> = s.chars().filter(|c| !c.is_whitespace()).collect();
    if chars.is_empty() {
        return Err("empty component".into());
    }
    let mut row = [0.0; 3];
    let mut constant = 0.0;
    let mut i = 0;
    while i < chars.len() {
        let mut sign = 1.0;
        match chars[i] {
            '+' => i += 1,
            '-' => {
                sign = -1.0;
                i += 1;
            }
            _ if i > 0 => return Err(format!("unexpected {:?}", chars[i])),
            _ => {}
        }
        let mut number = None;
        let start = i;
        while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
            i += 1;
        }
        if i > start {
            let mut value: f64 = chars[start..i]
                .iter()
                .collect::<String>()
                .parse()
                .map_err(|_| "bad number")?;
            if chars.get(i) == Some(&'/') {
                i += 1;
                let ds = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let denom: f64 = chars[ds..i]
                    .iter()
                    .collect::<String>()
                    .parse()
                    .map_err(|_| "bad fraction")?;
                if denom == 0.0 {
                    return Err("zero denominator".into());
                }
                value /= denom;
            }
            number = Some(value);
            if chars.get(i) == Some(&'*') {
                i += 1;
            }
        }
        match chars.get(i).map(|c| c.to_ascii_lowercase()) {
            Some(v @ ('x' | 'y' | 'z')) => {
                let axis = (v as u8 - b'x') as usize;
                row[axis] += sign * number.unwrap_or(1.0);
                i += 1;
            }
            _ => match number {
                Some(n) => constant += sign * n,
                None => return Err(format!("cannot parse {s:?}")),
            },
        }
    }
    Ok((row, constant))
}

fn wrap(x: f64) -> f64 {
    let w = x - x.floor();
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// Component-wise distance modulo 1 below the dedup tolerance.
pub fn coincident(a: Vec3, b: Vec3) -> bool {
    a.iter().zip(b.iter()).all(|(x, y)| {
        let d = (x - y).abs().fract();
        d.min(1.0 - d) < DEDUP_TOLERANCE
    })
}

/// Applies every operator to every site, wraps into [0, 1) and merges coincident
/// images of the same element.
pub fn expand_symmetry(sites: &[Site], ops: &[SymOp]) -> Vec<Site> {
    let mut out: Vec<Site> = Vec::new();
    for site in sites {
        for op in ops {
            let p = op.apply(site.position);
            let p = [wrap(p[0]), wrap(p[1]), wrap(p[2])];
            if !out
                .iter()
                .any(|o| o.element == site.element && coincident(o.position, p))
            {
                out.push(Site {
                    element: site.element,
                    position: p,
                    occupancy: site.occupancy,
                });
            }
        }
    }
    out
}

fn is_placeholder(v: &str) -> bool {
    v == "?" || v == "."
}

pub fn parse_cif(bytes: &[u8]) -> Result<ParsedStructure, String> {
    let text = std::str::from_utf8(bytes).map_err(|_| "not UTF-8 text".to_string())?;
    let tokens = tokenize(text);
    if !tokens.iter().any(|t| matches!(t, Token::Data)) {
        return Err("no data_ block".into());
    }
    let block = read_block(&tokens)?;

    let cell = |tag: &str| -> Result<f64, String> {
        let raw = block
            .items
            .get(tag)
            .ok_or_else(|| format!("missing {tag}"))?;
        parse_number(raw).ok_or_else(|| format!("{tag}: cannot parse {raw:?} as a number"))
    };
    let lattice = lattice_from_parameters(
        cell("_cell_length_a")?,
        cell("_cell_length_b")?,
        cell("_cell_length_c")?,
        cell("_cell_angle_alpha")?,
        cell("_cell_angle_beta")?,
        cell("_cell_angle_gamma")?,
    )?;

    let atoms = block
        .loops
        .iter()
        .find(|l| l.column("_atom_site_fract_x").is_some())
        .ok_or("missing _atom_site_fract_* loop")?;
    let col = |tag: &str| atoms.column(tag).ok_or_else(|| format!("missing {tag}"));
    let (cx, cy, cz) = (
        col("_atom_site_fract_x")?,
        col("_atom_site_fract_y")?,
        col("_atom_site_fract_z")?,
    );
    let symbol_col = atoms.column("_atom_site_type_symbol");
    let label_col = atoms.column("_atom_site_label");
    if symbol_col.is_none() && label_col.is_none() {
        return Err(
            "atom-site loop has neither _atom_site_type_symbol nor _atom_site_label".into(),
        );
    }
    let occ_col = atoms.column("_atom_site_occupancy");

    let mut sites = Vec::with_capacity(atoms.rows.len());
    for row in &atoms.rows {
        let element = symbol_col
            .map(|c| &row[c])
            .filter(|v| !is_placeholder(v))
            .and_then(|v| elements::from_label(v))
            .or_else(|| label_col.and_then(|c| elements::from_label(&row[c])))
            .ok_or_else(|| format!("cannot determine element for atom site {:?}", row[0]))?;
        let coord = |c: usize| {
            parse_number(&row[c])
                .ok_or_else(|| format!("atom site {:?}: cannot parse {:?}", row[0], row[c]))
        };
        let occupancy = match occ_col.map(|c| row[c].as_str()) {
            None => 1.0,
            Some(v) if is_placeholder(v) => 1.0,
            Some(v) => parse_number(v)
                .ok_or_else(|| format!("atom site {:?}: bad occupancy {v:?}", row[0]))?,
        };
        sites.push(Site {
            element,
            position: [coord(cx)?, coord(cy)?, coord(cz)?],
            occupancy,
        });
    }

    let op_strings: Vec<String> = [
        "_symmetry_equiv_pos_as_xyz",
        "_space_group_symop_operation_xyz",
    ]
    .iter()
    .find_map(|tag| {
        block
            .loops
            .iter()
            .find_map(|l| {
                l.column(tag)
                    .map(|c| l.rows.iter().map(|r| r[c].clone()).collect())
            })
            .or_else(|| block.items.get(*tag).map(|v| vec![v.clone()]))
    })
    .unwrap_or_default();
    let ops = if op_strings.is_empty() {
        vec![SymOp::identity()]
    } else {
        op_strings
            .iter()
            .map(|s| SymOp::parse(s))
            .collect::<Result<Vec<_>, _>>()?
    };

    Ok(ParsedStructure {
        lattice: Some(lattice),
        periodic: [true; 3],
        coordinates: Coordinates::Fractional,
        sites: expand_symmetry(&sites, &ops),
        source_path: String::new(),
    })
}
