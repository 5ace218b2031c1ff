//! Kleene three-valued evaluation against entry documents.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde_json::{Map, Value};

use super::{FilterAst, FilterError, Literal, SetMode, StringMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalResult {
    True,
    False,
    Unknown,
}

impl EvalResult {
    fn from_bool(b: bool) -> Self {
        if b {
            EvalResult::True
        } else {
            EvalResult::False
        }
    }

    pub fn and(self, other: Self) -> Self {
        use EvalResult::*;
        match (self, other) {
            (False, _) | (_, False) => False,
            (True, True) => True,
            _ => Unknown,
        }
    }

    pub fn or(self, other: Self) -> Self {
        use EvalResult::*;
        match (self, other) {
            (True, _) | (_, True) => True,
            (False, False) => False,
            _ => Unknown,
        }
    }
}

impl std::ops::Not for EvalResult {
    type Output = Self;

    fn not(self) -> Self {
        match self {
            EvalResult::True => EvalResult::False,
            EvalResult::False => EvalResult::True,
            EvalResult::Unknown => EvalResult::Unknown,
        }
    }
}

/// Anything with named fields a filter can inspect. `null` counts as absent.
pub trait Document {
    fn field(&self, name: &str) -> Option<&Value>;
}

impl Document for Map<String, Value> {
    fn field(&self, name: &str) -> Option<&Value> {
        self.get(name)
    }
}

fn type_error(property: &str, message: impl Into<String>) -> FilterError {
    FilterError::Type {
        property: property.to_string(),
        message: message.into(),
    }
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "a list",
        Value::Object(_) => "an object",
    }
}

fn numeric_cmp(v: &serde_json::Number, lit: &Literal) -> Option<Ordering> {
    match (lit, v.as_i64()) {
        (Literal::Int(l), Some(i)) => Some(i.cmp(l)),
        (Literal::Int(l), None) => v.as_f64()?.partial_cmp(&(*l as f64)),
        (Literal::Float(l), _) => v.as_f64()?.partial_cmp(l),
        (Literal::Str(_), _) => None,
    }
}

fn literal_eq(v: &Value, lit: &Literal) -> bool {
    match (v, lit) {
        (Value::String(s), Literal::Str(l)) => s == l,
        (Value::Number(n), Literal::Int(_) | Literal::Float(_)) => {
            numeric_cmp(n, lit) == Some(Ordering::Equal)
        }
        _ => false,
    }
}

fn present<'a, D: Document + ?Sized>(doc: &'a D, property: &str) -> Option<&'a Value> {
    doc.field(property).filter(|v| !v.is_null())
}

/// Errors that do not depend on any entry.
fn check_static(ast: &FilterAst) -> Result<(), FilterError> {
    match ast {
        FilterAst::And(l, r) | FilterAst::Or(l, r) => {
            check_static(l)?;
            check_static(r)
        }
        FilterAst::Not(x) => check_static(x),
        FilterAst::Comparison {
            property,
            op,
            value: Literal::Str(_),
        } if op.is_ordering() => Err(type_error(
            property,
            format!("'{}' is not defined for strings", op.as_str()),
        )),
        _ => Ok(()),
    }
}

/// Evaluates every subtree (no short-circuit), so type errors do not depend on operand order.
pub fn evaluate<D: Document + ?Sized>(ast: &FilterAst, doc: &D) -> Result<EvalResult, FilterError> {
    check_static(ast)?;
    eval(ast, doc)
}

fn eval<D: Document + ?Sized>(ast: &FilterAst, doc: &D) -> Result<EvalResult, FilterError> {
    Ok(match ast {
        FilterAst::And(l, r) => {
            let (l, r) = (eval(l, doc)?, eval(r, doc)?);
            l.and(r)
        }
        FilterAst::Or(l, r) => {
            let (l, r) = (eval(l, doc)?, eval(r, doc)?);
            l.or(r)
        }
        FilterAst::Not(x) => !eval(x, doc)?,
        FilterAst::Known { property, negated } => {
            EvalResult::from_bool(present(doc, property).is_some() != *negated)
        }
        FilterAst::Comparison {
            property,
            op,
            value,
        } => {
            let Some(v) = present(doc, property) else {
                return Ok(EvalResult::Unknown);
            };
            match (v, value) {
                (Value::String(s), Literal::Str(l)) => {
                    EvalResult::from_bool(op.holds(s.as_str().cmp(l.as_str())))
                }
                (Value::Number(n), Literal::Int(_) | Literal::Float(_)) => {
                    match numeric_cmp(n, value) {
                        Some(ord) => EvalResult::from_bool(op.holds(ord)),
                        None => EvalResult::Unknown,
                    }
                }
                (v, Literal::Str(_)) => {
                    return Err(type_error(
                        property,
                        format!("cannot compare {} with a string", kind(v)),
                    ))
                }
                (v, _) => {
                    return Err(type_error(
                        property,
                        format!("cannot compare {} with a number", kind(v)),
                    ))
                }
            }
        }
        FilterAst::StringMatch {
            property,
            mode,
            value,
        } => {
            let Some(v) = present(doc, property) else {
                return Ok(EvalResult::Unknown);
            };
            let Value::String(s) = v else {
                return Err(type_error(
                    property,
                    format!("{} requires a string, found {}", mode.as_str(), kind(v)),
                ));
            };
            EvalResult::from_bool(match mode {
                StringMode::Contains => s.contains(value.as_str()),
                StringMode::StartsWith => s.starts_with(value.as_str()),
                StringMode::EndsWith => s.ends_with(value.as_str()),
            })
        }
        FilterAst::SetMembership {
            property,
            mode,
            values,
        } => {
            let Some(v) = present(doc, property) else {
                return Ok(EvalResult::Unknown);
            };
            let Value::Array(items) = v else {
                return Err(type_error(
                    property,
                    format!("{} requires a list, found {}", mode.as_str(), kind(v)),
                ));
            };
            let has = |lit: &Literal| items.iter().any(|item| literal_eq(item, lit));
            EvalResult::from_bool(match mode {
                SetMode::Has | SetMode::HasAll => values.iter().all(has),
                SetMode::HasAny => values.iter().any(has),
                SetMode::HasOnly => items
                    .iter()
                    .filter(|i| !i.is_null())
                    .all(|item| values.iter().any(|lit| literal_eq(item, lit))),
            })
        }
        FilterAst::Length {
            property,
            op,
            value,
        } => {
            let Some(v) = present(doc, property) else {
                return Ok(EvalResult::Unknown);
            };
            let Value::Array(items) = v else {
                return Err(type_error(
                    property,
                    format!("LENGTH requires a list, found {}", kind(v)),
                ));
            };
            EvalResult::from_bool(op.holds((items.len() as i64).cmp(value)))
        }
    })
}

/// Indices of the items the filter selects (result exactly true), in order.
/// The first type error in item order is reported.
pub fn matching_indices<D: Document + Sync>(
    ast: Option<&FilterAst>,
    items: &[D],
) -> Result<Vec<usize>, FilterError> {
    let Some(ast) = ast else {
        return Ok((0..items.len()).collect());
    };
    check_static(ast)?;
    let results: Vec<Result<EvalResult, FilterError>> =
        items.par_iter().map(|d| eval(ast, d)).collect();
    let mut out = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        if r? == EvalResult::True {
            out.push(i);
        }
    }
    Ok(out)
}

/// The ordered subsequence of items selected by the filter; `None` selects everything.
pub fn selectivity_filter<'a, D: Document + Sync>(
    ast: Option<&FilterAst>,
    items: &'a [D],
) -> Result<Vec<&'a D>, FilterError> {
    Ok(matching_indices(ast, items)?
        .into_iter()
        .map(|i| &items[i])
        .collect())
}
