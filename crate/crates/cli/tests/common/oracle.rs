//! Brute-force filter interpreter and random filter generator, written from the grammar
//! and semantics tables without using the crate's parser or AST.

use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::Rng;
use serde_json::{Map, Value};

#[derive(Debug, Clone)]
pub enum Val {
    S(String),
    I(i64),
    F(f64),
}

#[derive(Debug, Clone)]
pub enum Expr {
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    Cmp {
        prop: String,
        op: &'static str,
        val: Val,
        reversed: bool,
    },
    Str {
        prop: String,
        mode: &'static str,
        s: String,
    },
    Set {
        prop: String,
        mode: &'static str,
        vals: Vec<Val>,
    },
    Len {
        prop: String,
        op: Option<&'static str>,
        n: i64,
    },
    Known {
        prop: String,
        unknown: bool,
    },
}

/// Three-valued truth: `None` is unknown.
pub type Tri = Option<bool>;

fn and3(a: Tri, b: Tri) -> Tri {
    match (a, b) {
        (Some(false), _) | (_, Some(false)) => Some(false),
        (Some(true), Some(true)) => Some(true),
        _ => None,
    }
}

fn or3(a: Tri, b: Tri) -> Tri {
    match (a, b) {
        (Some(true), _) | (_, Some(true)) => Some(true),
        (Some(false), Some(false)) => Some(false),
        _ => None,
    }
}

fn num(v: &Value) -> Option<f64> {
    v.as_f64()
}

fn val_num(v: &Val) -> Option<f64> {
    match v {
        Val::I(i) => Some(*i as f64),
        Val::F(f) => Some(*f),
        Val::S(_) => None,
    }
}

fn apply(op: &str, ord: std::cmp::Ordering) -> bool {
    use std::cmp::Ordering::*;
    match op {
        "=" => ord == Equal,
        "!=" => ord != Equal,
        "<" => ord == Less,
        "<=" => ord != Greater,
        ">" => ord == Greater,
        ">=" => ord != Less,
        _ => unreachable!(),
    }
}

fn mirror(op: &'static str) -> &'static str {
    match op {
        "<" => ">",
        ">" => "<",
        "<=" => ">=",
        ">=" => "<=",
        o => o,
    }
}

fn same(item: &Value, v: &Val) -> bool {
    match (item, v) {
        (Value::String(a), Val::S(b)) => a == b,
        (Value::Number(_), Val::I(_) | Val::F(_)) => num(item) == val_num(v),
        _ => false,
    }
}

/// Ok(truth) or Err(()) for a type error.
pub fn eval(e: &Expr, doc: &Map<String, Value>) -> Result<Tri, ()> {
    let get = |p: &str| doc.get(p).filter(|v| !v.is_null());
    match e {
        Expr::And(a, b) => {
            let (x, y) = (eval(a, doc), eval(b, doc));
            Ok(and3(x?, y?))
        }
        Expr::Or(a, b) => {
            let (x, y) = (eval(a, doc), eval(b, doc));
            Ok(or3(x?, y?))
        }
        Expr::Not(a) => Ok(eval(a, doc)?.map(|b| !b)),
        Expr::Known { prop, unknown } => Ok(Some(get(prop).is_some() != *unknown)),
        Expr::Cmp {
            prop,
            op,
            val,
            reversed,
        } => {
            // `value OP prop` means `prop mirror(OP) value`.
            let op = if *reversed { mirror(op) } else { *op };
            if matches!(val, Val::S(_)) && !matches!(op, "=" | "!=") {
                return Err(());
            }
            let Some(v) = get(prop) else { return Ok(None) };
            match (v, val) {
                (Value::String(s), Val::S(l)) => Ok(Some(apply(op, s.as_str().cmp(l.as_str())))),
                (Value::Number(_), Val::I(_) | Val::F(_)) => {
                    let (a, b) = (num(v).unwrap(), val_num(val).unwrap());
                    Ok(a.partial_cmp(&b).map(|o| apply(op, o)))
                }
                _ => Err(()),
            }
        }
        Expr::Str { prop, mode, s } => match get(prop) {
            None => Ok(None),
            Some(Value::String(v)) => Ok(Some(match *mode {
                "CONTAINS" => v.contains(s.as_str()),
                "STARTS WITH" => v.starts_with(s.as_str()),
                "ENDS WITH" => v.ends_with(s.as_str()),
                _ => unreachable!(),
            })),
            Some(_) => Err(()),
        },
        Expr::Set { prop, mode, vals } => match get(prop) {
            None => Ok(None),
            Some(Value::Array(items)) => {
                let present = |v: &Val| items.iter().any(|i| same(i, v));
                Ok(Some(match *mode {
                    "HAS" | "HAS ALL" => vals.iter().all(present),
                    "HAS ANY" => vals.iter().any(present),
                    "HAS ONLY" => items.iter().all(|i| vals.iter().any(|v| same(i, v))),
                    _ => unreachable!(),
                }))
            }
            Some(_) => Err(()),
        },
        Expr::Len { prop, op, n } => match get(prop) {
            None => Ok(None),
            Some(Value::Array(items)) => {
                Ok(Some(apply(op.unwrap_or("="), (items.len() as i64).cmp(n))))
            }
            Some(_) => Err(()),
        },
    }
}

/// Ids selected (exactly true), or Err if any document raises a type error.
pub fn select(e: &Expr, docs: &[Map<String, Value>]) -> Result<Vec<String>, ()> {
    let mut out = Vec::new();
    for d in docs {
        if eval(e, d)? == Some(true) {
            out.push(d["id"].as_str().unwrap().to_string());
        }
    }
    Ok(out)
}

fn lit(v: &Val) -> String {
    match v {
        Val::S(s) => format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\"")),
        Val::I(i) => i.to_string(),
        Val::F(f) => {
            let s = f.to_string();
            if s.contains('.') || s.contains('e') {
                s
            } else {
                format!("{s}.0")
            }
        }
    }
}

fn sp(rng: &mut impl Rng) -> &'static str {
    ["", " ", "  "][rng.random_range(0..3)]
}

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Or(..) => 1,
        Expr::And(..) => 2,
        _ => 3,
    }
}

/// Renders with randomized spacing, parentheses only where precedence needs them
/// (plus occasional redundant ones).
pub fn render(e: &Expr, rng: &mut StdRng) -> String {
    fn group(child: &Expr, min: u8, rng: &mut StdRng) -> String {
        let text = render(child, rng);
        if prec(child) < min || rng.random_bool(0.15) {
            format!("({text})")
        } else {
            text
        }
    }
    match e {
        Expr::Or(a, b) => {
            let (l, r) = (group(a, 1, rng), group(b, 1, rng));
            format!("{l} OR {r}")
        }
        Expr::And(a, b) => {
            let (l, r) = (group(a, 2, rng), group(b, 2, rng));
            format!("{l} AND {r}")
        }
        Expr::Not(a) => {
            let inner = render(a, rng);
            if prec(a) < 3 || matches!(**a, Expr::Not(_)) || rng.random_bool(0.5) {
                format!("NOT ({inner})")
            } else {
                format!("NOT {inner}")
            }
        }
        Expr::Cmp {
            prop,
            op,
            val,
            reversed,
        } => {
            let (s1, s2) = (sp(rng), sp(rng));
            if *reversed {
                format!("{}{s1}{op}{s2}{prop}", lit(val))
            } else {
                format!("{prop}{s1}{op}{s2}{}", lit(val))
            }
        }
        Expr::Str { prop, mode, s } => format!("{prop} {mode} {}", lit(&Val::S(s.clone()))),
        Expr::Set { prop, mode, vals } => {
            let items: Vec<String> = vals.iter().map(lit).collect();
            format!(
                "{prop} {mode} {}",
                items.join(&format!("{},{}", sp(rng), sp(rng)))
            )
        }
        Expr::Len { prop, op, n } => match op {
            Some(op) => format!("{prop} LENGTH {op}{}{n}", sp(rng)),
            None => format!("{prop} LENGTH {n}"),
        },
        Expr::Known { prop, unknown } => {
            format!("{prop} IS {}", if *unknown { "UNKNOWN" } else { "KNOWN" })
        }
    }
}

/// Value pools drawn from the fixture so predicates often hit.
pub struct Pools {
    pub strings: Vec<String>,
    pub floats: Vec<f64>,
}

impl Pools {
    pub fn from_docs(docs: &[Map<String, Value>]) -> Self {
        let mut strings = Vec::new();
        let mut floats = Vec::new();
        for d in docs {
            for key in [
                "id",
                "chemical_formula_reduced",
                "chemical_formula_anonymous",
                "_local_label",
            ] {
                if let Some(s) = d.get(key).and_then(Value::as_str) {
                    strings.push(s.to_string());
                }
            }
            if let Some(f) = d.get("_local_energy").and_then(Value::as_f64) {
                floats.push(f);
            }
        }
        strings.sort();
        strings.dedup();
        Pools { strings, floats }
    }
}

const INT_PROPS: &[&str] = &[
    "nelements",
    "nsites",
    "nperiodic_dimensions",
    "_local_count",
];
const FLOAT_PROPS: &[&str] = &["_local_energy"];
const STR_PROPS: &[&str] = &[
    "id",
    "chemical_formula_reduced",
    "chemical_formula_anonymous",
    "_local_label",
    "type",
];
const STR_LIST_PROPS: &[&str] = &["elements", "species_at_sites"];
const NUM_LIST_PROPS: &[&str] = &["dimension_types", "elements_ratios"];
const OTHER_PROPS: &[&str] = &[
    "lattice_vectors",
    "structure_features",
    "_local_missing",
    "cartesian_site_positions",
];
const ELEMENTS: &[&str] = &[
    "Ag", "Al", "Ba", "C", "Cl", "Fe", "H", "Na", "O", "Si", "Zz",
];
const OPS: &[&str] = &["=", "!=", "<", "<=", ">", ">="];

fn any_prop(rng: &mut impl Rng) -> String {
    let all: Vec<&&str> = INT_PROPS
        .iter()
        .chain(FLOAT_PROPS)
        .chain(STR_PROPS)
        .chain(STR_LIST_PROPS)
        .chain(NUM_LIST_PROPS)
        .chain(OTHER_PROPS)
        .collect();
    all.choose(rng).unwrap().to_string()
}

fn pick(rng: &mut impl Rng, pool: &[&str]) -> String {
    pool.choose(rng).unwrap().to_string()
}

fn substring(rng: &mut impl Rng, s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    if chars.is_empty() {
        return String::new();
    }
    let a = rng.random_range(0..chars.len());
    let b = rng.random_range(a..=chars.len());
    chars[a..b].iter().collect()
}

fn number(rng: &mut impl Rng, pools: &Pools, float_prop: bool) -> Val {
    if float_prop && !pools.floats.is_empty() && rng.random_bool(0.6) {
        return Val::F(*pools.floats.choose(rng).unwrap());
    }
    match rng.random_range(0..3) {
        0 => Val::F(rng.random_range(-50..150) as f64 / 10.0),
        _ => Val::I(rng.random_range(-2..12)),
    }
}

fn string_val(rng: &mut impl Rng, pools: &Pools) -> String {
    if rng.random_bool(0.85) {
        pools.strings.choose(rng).cloned().unwrap_or_default()
    } else {
        ["", "x", "O", "A2", "set", "\"", "\\"][rng.random_range(0..7)].to_string()
    }
}

/// One predicate; with probability `mismatch` the property is drawn from every kind,
/// which may yield type errors.
fn leaf(rng: &mut impl Rng, pools: &Pools, mismatch: f64) -> Expr {
    let wild = rng.random_bool(mismatch);
    match rng.random_range(0..10) {
        0..=3 => {
            let (prop, val) = match rng.random_range(0..3) {
                0 => (pick(rng, INT_PROPS), number(rng, pools, false)),
                1 => (pick(rng, FLOAT_PROPS), number(rng, pools, true)),
                _ => (pick(rng, STR_PROPS), Val::S(string_val(rng, pools))),
            };
            let op = if matches!(val, Val::S(_)) && !wild {
                ["=", "!="][rng.random_range(0..2)]
            } else {
                pick_op(rng)
            };
            let prop = if wild { any_prop(rng) } else { prop };
            Expr::Cmp {
                prop,
                op,
                val,
                reversed: rng.random_bool(0.3),
            }
        }
        4 => {
            let prop = if wild {
                any_prop(rng)
            } else {
                pick(rng, STR_PROPS)
            };
            let base = string_val(rng, pools);
            let mode = ["CONTAINS", "STARTS WITH", "ENDS WITH"][rng.random_range(0..3)];
            Expr::Str {
                prop,
                mode,
                s: substring(rng, &base),
            }
        }
        5..=7 => {
            let numeric = rng.random_bool(0.25);
            let prop = if wild {
                any_prop(rng)
            } else if numeric {
                pick(rng, NUM_LIST_PROPS)
            } else {
                pick(rng, STR_LIST_PROPS)
            };
            let mode = ["HAS", "HAS ALL", "HAS ANY", "HAS ONLY"][rng.random_range(0..4)];
            let n = if mode == "HAS" {
                1
            } else {
                rng.random_range(1..4)
            };
            let vals = (0..n)
                .map(|_| {
                    if numeric {
                        if rng.random_bool(0.5) {
                            Val::I(rng.random_range(0..2))
                        } else {
                            Val::F([0.25, 0.5, 1.0, 0.2][rng.random_range(0..4)])
                        }
                    } else {
                        Val::S(pick(rng, ELEMENTS))
                    }
                })
                .collect();
            Expr::Set { prop, mode, vals }
        }
        8 => {
            let prop = if wild {
                any_prop(rng)
            } else {
                pick(
                    rng,
                    &[
                        "elements",
                        "species_at_sites",
                        "dimension_types",
                        "lattice_vectors",
                        "cartesian_site_positions",
                    ],
                )
            };
            let op = if rng.random_bool(0.3) {
                None
            } else {
                Some(pick_op(rng))
            };
            Expr::Len {
                prop,
                op,
                n: rng.random_range(0..6),
            }
        }
        _ => Expr::Known {
            prop: any_prop(rng),
            unknown: rng.random_bool(0.5),
        },
    }
}

fn pick_op(rng: &mut impl Rng) -> &'static str {
    OPS[rng.random_range(0..OPS.len())]
}

pub fn random_expr(rng: &mut impl Rng, pools: &Pools, depth: usize, mismatch: f64) -> Expr {
    if depth == 0 || rng.random_bool(0.35) {
        return leaf(rng, pools, mismatch);
    }
    match rng.random_range(0..5) {
        0 | 1 => Expr::And(
            Box::new(random_expr(rng, pools, depth - 1, mismatch)),
            Box::new(random_expr(rng, pools, depth - 1, mismatch)),
        ),
        2 | 3 => Expr::Or(
            Box::new(random_expr(rng, pools, depth - 1, mismatch)),
            Box::new(random_expr(rng, pools, depth - 1, mismatch)),
        ),
        _ => Expr::Not(Box::new(random_expr(rng, pools, depth - 1, mismatch))),
    }
}
