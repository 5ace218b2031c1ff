//! CSV and JSON property tables keyed by entry id or path.

use std::collections::BTreeMap;

use serde_json::Value;

use super::RawEntrySource;
use crate::config::{PropertyDefinition, PropertyType};

#[derive(Debug, Clone, PartialEq)]
pub enum PropertyValue {
    Float(f64),
    Integer(i64),
    String(String),
    Boolean(bool),
}

impl PropertyValue {
    pub fn to_json(&self) -> Value {
        match self {
            PropertyValue::Float(f) => serde_json::Number::from_f64(*f)
                .map(Value::Number)
                .unwrap_or(Value::Null),
            PropertyValue::Integer(i) => Value::from(*i),
            PropertyValue::String(s) => Value::from(s.as_str()),
            PropertyValue::Boolean(b) => Value::from(*b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PropertyError {
    #[error("{file}: column {column:?} has no property definition")]
    UndeclaredColumn { file: String, column: String },
    #[error("{file}: row {row}, column {column:?}: cannot read {value:?} as {expected}")]
    Coercion {
        file: String,
        row: usize,
        column: String,
        value: String,
        expected: &'static str,
    },
    #[error("{file}: row {row}: duplicate key {key:?}")]
    DuplicateKey {
        file: String,
        row: usize,
        key: String,
    },
    #[error("{file}: {message}")]
    Malformed { file: String, message: String },
}

/// One keyed record. `row` is the 1-based data row (CSV) or record position (JSON).
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyRow {
    pub key: String,
    pub row: usize,
    pub values: BTreeMap<String, PropertyValue>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyTable {
    pub source_path: String,
    pub rows: Vec<PropertyRow>,
}

fn is_integer_literal(s: &str) -> bool {
    let digits = s.strip_prefix(['+', '-']).unwrap_or(s);
    !digits.is_empty() && digits.chars().all(|c| c.is_ascii_digit())
}

fn is_float_literal(s: &str) -> bool {
    let body = s.strip_prefix(['+', '-']).unwrap_or(s);
    let (mantissa, exponent) = match body.find(['e', 'E']) {
        Some(i) => (&body[..i], Some(&body[i + 1..])),
        None => (body, None),
    };
    let mut parts = mantissa.splitn(2, '.');
    let int = parts.next().unwrap_or("");
    let frac = parts.next();
    let digits = |t: &str| t.chars().all(|c| c.is_ascii_digit());
    let mantissa_ok = digits(int)
        && frac.is_none_or(digits)
        && !(int.is_empty() && frac.unwrap_or("").is_empty());
    mantissa_ok && exponent.is_none_or(is_integer_literal)
}

/// Coerces a text cell to the declared type.
pub fn coerce_str(text: &str, kind: PropertyType) -> Option<PropertyValue> {
    let t = text.trim();
    match kind {
        PropertyType::String => Some(PropertyValue::String(text.to_string())),
        PropertyType::Integer if is_integer_literal(t) => {
            t.parse().ok().map(PropertyValue::Integer)
        }
        PropertyType::Float if is_float_literal(t) => t
            .parse::<f64>()
            .ok()
            .filter(|f| f.is_finite())
            .map(PropertyValue::Float),
        PropertyType::Boolean if t.eq_ignore_ascii_case("true") => {
            Some(PropertyValue::Boolean(true))
        }
        PropertyType::Boolean if t.eq_ignore_ascii_case("false") => {
            Some(PropertyValue::Boolean(false))
        }
        _ => None,
    }
}

/// A JSON value that cannot represent the declared type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mistyped;

/// Coerces a JSON value; `Ok(None)` marks an unknown (null) value.
pub fn coerce_json(value: &Value, kind: PropertyType) -> Result<Option<PropertyValue>, Mistyped> {
    match (value, kind) {
        (Value::Null, _) => Ok(None),
        (Value::String(s), _) => coerce_str(s, kind).map(Some).ok_or(Mistyped),
        (Value::Number(n), PropertyType::Integer) => n
            .as_i64()
            .map(|i| Some(PropertyValue::Integer(i)))
            .ok_or(Mistyped),
        (Value::Number(n), PropertyType::Float) => n
            .as_f64()
            .map(|f| Some(PropertyValue::Float(f)))
            .ok_or(Mistyped),
        (Value::Number(n), PropertyType::String) => Ok(Some(PropertyValue::String(n.to_string()))),
        (Value::Bool(b), PropertyType::Boolean) => Ok(Some(PropertyValue::Boolean(*b))),
        (Value::Bool(b), PropertyType::String) => Ok(Some(PropertyValue::String(b.to_string()))),
        _ => Err(Mistyped),
    }
}

fn looks_like_json(source: &RawEntrySource) -> bool {
    let lower = source.relative_path.to_ascii_lowercase();
    if lower.ends_with(".json") {
        return true;
    }
    if lower.ends_with(".csv") {
        return false;
    }
    source.bytes.iter().find(|b| !b.is_ascii_whitespace()) == Some(&b'{')
}

/// Reads a property table and coerces every value to its declared type.
pub fn parse_properties(
    source: &RawEntrySource,
    defs: &[PropertyDefinition],
) -> Result<PropertyTable, PropertyError> {
    let rows = if looks_like_json(source) {
        parse_json(source, defs)?
    } else {
        parse_csv(source, defs)?
    };
    let mut seen = std::collections::HashMap::new();
    for row in &rows {
        if seen.insert(row.key.as_str(), row.row).is_some() {
            return Err(PropertyError::DuplicateKey {
                file: source.relative_path.clone(),
                row: row.row,
                key: row.key.clone(),
            });
        }
    }
    Ok(PropertyTable {
        source_path: source.relative_path.clone(),
        rows,
    })
}

fn definition<'d>(
    file: &str,
    defs: &'d [PropertyDefinition],
    column: &str,
) -> Result<&'d PropertyDefinition, PropertyError> {
    defs.iter()
        .find(|d| d.name == column)
        .ok_or_else(|| PropertyError::UndeclaredColumn {
            file: file.to_string(),
            column: column.to_string(),
        })
}

fn parse_csv(
    source: &RawEntrySource,
    defs: &[PropertyDefinition],
) -> Result<Vec<PropertyRow>, PropertyError> {
    let file = source.relative_path.as_str();
    let malformed = |e: csv::Error| PropertyError::Malformed {
        file: file.to_string(),
        message: e.to_string(),
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(source.bytes.as_slice());
    let headers = reader.headers().map_err(malformed)?.clone();
    if headers.is_empty() {
        return Err(PropertyError::Malformed {
            file: file.into(),
            message: "missing header row".into(),
        });
    }
    let columns: Vec<(&str, &PropertyDefinition)> = headers
        .iter()
        .skip(1)
        .map(|h| definition(file, defs, h.trim()).map(|d| (h, d)))
        .collect::<Result<_, _>>()?;

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(malformed)?;
        let row = i + 1;
        let key = record.get(0).unwrap_or("").trim().to_string();
        if key.is_empty() {
            return Err(PropertyError::Malformed {
                file: file.into(),
                message: format!("row {row}: empty key"),
            });
        }
        let mut values = BTreeMap::new();
        for (cell, (column, def)) in record.iter().skip(1).zip(&columns) {
            if cell.trim().is_empty() {
                continue;
            }
            let value = coerce_str(cell, def.kind).ok_or_else(|| PropertyError::Coercion {
                file: file.into(),
                row,
                column: column.to_string(),
                value: cell.to_string(),
                expected: def.kind.as_str(),
            })?;
            values.insert(def.name.clone(), value);
        }
        rows.push(PropertyRow { key, row, values });
    }
    Ok(rows)
}

fn parse_json(
    source: &RawEntrySource,
    defs: &[PropertyDefinition],
) -> Result<Vec<PropertyRow>, PropertyError> {
    let file = source.relative_path.as_str();
    let malformed = |message: String| PropertyError::Malformed {
        file: file.to_string(),
        message,
    };
    let doc: serde_json::Map<String, Value> =
        serde_json::from_slice(&source.bytes).map_err(|e| malformed(e.to_string()))?;
    let mut rows = Vec::new();
    for (i, (key, record)) in doc.into_iter().enumerate() {
        let row = i + 1;
        let Value::Object(fields) = record else {
            return Err(malformed(format!("record {key:?} is not an object")));
        };
        let mut values = BTreeMap::new();
        for (column, raw) in &fields {
            let def = definition(file, defs, column)?;
            let value = coerce_json(raw, def.kind).map_err(|Mistyped| PropertyError::Coercion {
                file: file.into(),
                row,
                column: column.clone(),
                value: raw.to_string(),
                expected: def.kind.as_str(),
            })?;
            if let Some(v) = value {
                values.insert(def.name.clone(), v);
            }
        }
        rows.push(PropertyRow { key, row, values });
    }
    Ok(rows)
}
