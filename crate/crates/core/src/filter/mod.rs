//! OPTIMADE filter language: parsing, canonical rendering, and three-valued evaluation.

mod eval;
mod parser;

use std::fmt;

pub use eval::{evaluate, matching_indices, selectivity_filter, Document, EvalResult};
pub use parser::parse_filter;

pub const MAX_FILTER_LEN: usize = 10_000;
pub const MAX_DEPTH: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Str(String),
    Int(i64),
    Float(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CompOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CompOp {
    pub const ALL: [CompOp; 6] = [
        CompOp::Eq,
        CompOp::Ne,
        CompOp::Lt,
        CompOp::Le,
        CompOp::Gt,
        CompOp::Ge,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CompOp::Eq => "=",
            CompOp::Ne => "!=",
            CompOp::Lt => "<",
            CompOp::Le => "<=",
            CompOp::Gt => ">",
            CompOp::Ge => ">=",
        }
    }

    /// The operator with operands swapped: `2 < x` is `x > 2`.
    pub fn flip(self) -> CompOp {
        match self {
            CompOp::Lt => CompOp::Gt,
            CompOp::Le => CompOp::Ge,
            CompOp::Gt => CompOp::Lt,
            CompOp::Ge => CompOp::Le,
            op => op,
        }
    }

    pub fn is_ordering(self) -> bool {
        !matches!(self, CompOp::Eq | CompOp::Ne)
    }

    pub fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CompOp::Eq => ord == Equal,
            CompOp::Ne => ord != Equal,
            CompOp::Lt => ord == Less,
            CompOp::Le => ord != Greater,
            CompOp::Gt => ord == Greater,
            CompOp::Ge => ord != Less,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StringMode {
    Contains,
    StartsWith,
    EndsWith,
}

impl StringMode {
    pub fn as_str(self) -> &'static str {
        match self {
            StringMode::Contains => "CONTAINS",
            StringMode::StartsWith => "STARTS WITH",
            StringMode::EndsWith => "ENDS WITH",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetMode {
    Has,
    HasAll,
    HasAny,
    HasOnly,
}

impl SetMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SetMode::Has => "HAS",
            SetMode::HasAll => "HAS ALL",
            SetMode::HasAny => "HAS ANY",
            SetMode::HasOnly => "HAS ONLY",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FilterAst {
    And(Box<FilterAst>, Box<FilterAst>),
    Or(Box<FilterAst>, Box<FilterAst>),
    Not(Box<FilterAst>),
    Comparison {
        property: String,
        op: CompOp,
        value: Literal,
    },
    StringMatch {
        property: String,
        mode: StringMode,
        value: String,
    },
    /// `HAS` carries exactly one value; the other modes one or more.
    SetMembership {
        property: String,
        mode: SetMode,
        values: Vec<Literal>,
    },
    Length {
        property: String,
        op: CompOp,
        value: i64,
    },
    Known {
        property: String,
        negated: bool,
    },
}

impl FilterAst {
    pub fn depth(&self) -> usize {
        match self {
            FilterAst::And(l, r) | FilterAst::Or(l, r) => 1 + l.depth().max(r.depth()),
            FilterAst::Not(x) => 1 + x.depth(),
            _ => 1,
        }
    }

    /// Every property name referenced, in first-occurrence order.
    pub fn properties(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_properties(&mut out);
        out
    }

    fn collect_properties<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            FilterAst::And(l, r) | FilterAst::Or(l, r) => {
                l.collect_properties(out);
                r.collect_properties(out);
            }
            FilterAst::Not(x) => x.collect_properties(out),
            FilterAst::Comparison { property, .. }
            | FilterAst::StringMatch { property, .. }
            | FilterAst::SetMembership { property, .. }
            | FilterAst::Length { property, .. }
            | FilterAst::Known { property, .. } => {
                if !out.contains(&property.as_str()) {
                    out.push(property);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FilterError {
    #[error("syntax error at byte {offset}: expected {expected}, found {found}")]
    Syntax {
        offset: usize,
        expected: String,
        found: String,
    },
    #[error("filter is {0} bytes long; the limit is {MAX_FILTER_LEN}")]
    TooLong(usize),
    #[error("filter nests deeper than {MAX_DEPTH} levels")]
    TooDeep,
    #[error("type error on property {property:?}: {message}")]
    Type { property: String, message: String },
}

pub(crate) fn write_string(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_str("\"")?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            c => write!(f, "{c}")?,
        }
    }
    f.write_str("\"")
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Str(s) => write_string(f, s),
            Literal::Int(i) => write!(f, "{i}"),
            // Debug keeps a decimal point or exponent, so the literal re-lexes as a float.
            Literal::Float(x) => write!(f, "{x:?}"),
        }
    }
}

/// Canonical text: every binary node parenthesized, `NOT` always followed by a group.
impl fmt::Display for FilterAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterAst::And(l, r) => write!(f, "({l} AND {r})"),
            FilterAst::Or(l, r) => write!(f, "({l} OR {r})"),
            FilterAst::Not(x) => match **x {
                FilterAst::And(..) | FilterAst::Or(..) => write!(f, "NOT {x}"),
                _ => write!(f, "NOT ({x})"),
            },
            FilterAst::Comparison {
                property,
                op,
                value,
            } => write!(f, "{property} {} {value}", op.as_str()),
            FilterAst::StringMatch {
                property,
                mode,
                value,
            } => {
                write!(f, "{property} {} ", mode.as_str())?;
                write_string(f, value)
            }
            FilterAst::SetMembership {
                property,
                mode,
                values,
            } => {
                write!(f, "{property} {} ", mode.as_str())?;
                for (i, v) in values.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                Ok(())
            }
            FilterAst::Length {
                property,
                op,
                value,
            } => write!(f, "{property} LENGTH {} {value}", op.as_str()),
            FilterAst::Known { property, negated } => {
                write!(
                    f,
                    "{property} IS {}",
                    if *negated { "UNKNOWN" } else { "KNOWN" }
                )
            }
        }
    }
}
