//! Lexer and recursive-descent parser.

use super::{
    CompOp, FilterAst, FilterError, Literal, SetMode, StringMode, MAX_DEPTH, MAX_FILTER_LEN,
};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    LParen,
    RParen,
    Comma,
    Op(CompOp),
    Str(String),
    Num(Literal),
    Ident(String),
    Kw(&'static str),
    /// A word that is neither a keyword nor a valid property name.
    Word(String),
    Eof,
}

const KEYWORDS: &[&str] = &[
    "AND", "OR", "NOT", "CONTAINS", "STARTS", "ENDS", "WITH", "HAS", "ALL", "ANY", "ONLY",
    "LENGTH", "IS", "KNOWN", "UNKNOWN",
];

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::LParen => "'('".into(),
        Tok::RParen => "')'".into(),
        Tok::Comma => "','".into(),
        Tok::Op(op) => format!("'{}'", op.as_str()),
        Tok::Str(_) => "a string".into(),
        Tok::Num(_) => "a number".into(),
        Tok::Ident(s) => format!("property {s:?}"),
        Tok::Kw(k) => format!("keyword {k}"),
        Tok::Word(w) => format!("{w:?}"),
        Tok::Eof => "end of input".into(),
    }
}

fn syntax(offset: usize, expected: &str, found: String) -> FilterError {
    FilterError::Syntax {
        offset,
        expected: expected.into(),
        found,
    }
}

fn is_ident(word: &str) -> bool {
    let mut chars = word.chars();
    matches!(chars.next(), Some('a'..='z' | '_'))
        && chars.all(|c| matches!(c, 'a'..='z' | '0'..='9' | '_'))
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, FilterError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'(' => {
                out.push((start, Tok::LParen));
                i += 1;
            }
            b')' => {
                out.push((start, Tok::RParen));
                i += 1;
            }
            b',' => {
                out.push((start, Tok::Comma));
                i += 1;
            }
            b'=' => {
                out.push((start, Tok::Op(CompOp::Eq)));
                i += 1;
            }
            b'!' if bytes.get(i + 1) == Some(&b'=') => {
                out.push((start, Tok::Op(CompOp::Ne)));
                i += 2;
            }
            b'<' | b'>' => {
                let eq = bytes.get(i + 1) == Some(&b'=');
                let op = match (c, eq) {
                    (b'<', false) => CompOp::Lt,
                    (b'<', true) => CompOp::Le,
                    (_, false) => CompOp::Gt,
                    (_, true) => CompOp::Ge,
                };
                out.push((start, Tok::Op(op)));
                i += if eq { 2 } else { 1 };
            }
            b'"' => {
                let mut s = String::new();
                i += 1;
                loop {
                    // Char boundaries: '"' and '\\' are ASCII, so byte scanning is safe.
                    let rest = &text[i..];
                    let Some(pos) = rest.find(['"', '\\']) else {
                        return Err(syntax(start, "closing '\"'", "end of input".into()));
                    };
                    s.push_str(&rest[..pos]);
                    i += pos;
                    if bytes[i] == b'"' {
                        i += 1;
                        break;
                    }
                    match bytes.get(i + 1) {
                        Some(b'"') => s.push('"'),
                        Some(b'\\') => s.push('\\'),
                        _ => {
                            return Err(syntax(
                                i,
                                "'\\\"' or '\\\\' escape",
                                "another escape".into(),
                            ))
                        }
                    }
                    i += 2;
                }
                out.push((start, Tok::Str(s)));
            }
            b'0'..=b'9' | b'.' | b'-' | b'+' => {
                let (tok, len) = lex_number(&text[i..])
                    .ok_or_else(|| syntax(start, "a number", "malformed number".into()))?;
                out.push((start, tok));
                i += len;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                let word = &text[start..i];
                let tok = if let Some(k) = KEYWORDS.iter().find(|&&k| k == word) {
                    Tok::Kw(k)
                } else if is_ident(word) {
                    Tok::Ident(word.to_string())
                } else {
                    Tok::Word(word.to_string())
                };
                out.push((start, tok));
            }
            _ => {
                let ch = text[i..].chars().next().unwrap_or('?');
                return Err(syntax(start, "a token", format!("{ch:?}")));
            }
        }
    }
    out.push((text.len(), Tok::Eof));
    Ok(out)
}

/// `[+-]? (digits [. digits?] | . digits) ([eE] [+-]? digits)?`
fn lex_number(s: &str) -> Option<(Tok, usize)> {
    let b = s.as_bytes();
    let mut i = 0;
    if matches!(b.first(), Some(b'+' | b'-')) {
        i += 1;
    }
    let digits = |i: &mut usize| {
        let from = *i;
        while *i < b.len() && b[*i].is_ascii_digit() {
            *i += 1;
        }
        *i - from
    };
    let int_digits = digits(&mut i);
    let mut is_float = false;
    let mut frac_digits = 0;
    if b.get(i) == Some(&b'.') {
        is_float = true;
        i += 1;
        frac_digits = digits(&mut i);
    }
    if int_digits + frac_digits == 0 {
        return None;
    }
    if matches!(b.get(i), Some(b'e' | b'E')) {
        is_float = true;
        i += 1;
        if matches!(b.get(i), Some(b'+' | b'-')) {
            i += 1;
        }
        if digits(&mut i) == 0 {
            return None;
        }
    }
    if b.get(i)
        .is_some_and(|c| c.is_ascii_alphabetic() || *c == b'_' || *c == b'.')
    {
        return None;
    }
    let text = &s[..i];
    let lit = if is_float {
        Literal::Float(text.parse::<f64>().ok().filter(|x| x.is_finite())?)
    } else {
        match text.parse::<i64>() {
            Ok(n) => Literal::Int(n),
            Err(_) => Literal::Float(text.parse::<f64>().ok().filter(|x| x.is_finite())?),
        }
    };
    Some((Tok::Num(lit), i))
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    depth: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].1
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].0
    }

    fn next(&mut self) -> Tok {
        let t = self.toks[self.pos].1.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn fail<T>(&self, expected: &str) -> Result<T, FilterError> {
        Err(syntax(self.offset(), expected, describe(self.peek())))
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if *self.peek() == Tok::Kw(kw_static(kw)) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), FilterError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.fail(kw)
        }
    }

    fn enter(&mut self) -> Result<(), FilterError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(FilterError::TooDeep);
        }
        Ok(())
    }

    fn or(&mut self) -> Result<FilterAst, FilterError> {
        let mut left = self.and()?;
        while self.eat_kw("OR") {
            let right = self.and()?;
            left = FilterAst::Or(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn and(&mut self) -> Result<FilterAst, FilterError> {
        let mut left = self.not()?;
        while self.eat_kw("AND") {
            let right = self.not()?;
            left = FilterAst::And(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn not(&mut self) -> Result<FilterAst, FilterError> {
        if self.eat_kw("NOT") {
            Ok(FilterAst::Not(Box::new(self.atom()?)))
        } else {
            self.atom()
        }
    }

    fn atom(&mut self) -> Result<FilterAst, FilterError> {
        match self.peek().clone() {
            Tok::LParen => {
                self.next();
                self.enter()?;
                let inner = self.or()?;
                self.depth -= 1;
                if *self.peek() != Tok::RParen {
                    return self.fail("AND, OR or ')'");
                }
                self.next();
                Ok(inner)
            }
            Tok::Ident(property) => {
                self.next();
                self.predicate(property)
            }
            Tok::Str(_) | Tok::Num(_) => {
                let value = self.value()?;
                let Tok::Op(op) = self.peek().clone() else {
                    return self.fail("a comparison operator");
                };
                self.next();
                let Tok::Ident(property) = self.peek().clone() else {
                    return self.fail("a property name");
                };
                self.next();
                Ok(FilterAst::Comparison {
                    property,
                    op: op.flip(),
                    value,
                })
            }
            _ => self.fail("a property name, string, number, NOT or '('"),
        }
    }

    fn value(&mut self) -> Result<Literal, FilterError> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.next();
                Ok(Literal::Str(s))
            }
            Tok::Num(n) => {
                self.next();
                Ok(n)
            }
            _ => self.fail("a string or number"),
        }
    }

    fn string(&mut self) -> Result<String, FilterError> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.next();
                Ok(s)
            }
            _ => self.fail("a string"),
        }
    }

    fn predicate(&mut self, property: String) -> Result<FilterAst, FilterError> {
        match self.peek().clone() {
            Tok::Op(op) => {
                self.next();
                let value = self.value()?;
                Ok(FilterAst::Comparison {
                    property,
                    op,
                    value,
                })
            }
            Tok::Kw("CONTAINS") => {
                self.next();
                Ok(FilterAst::StringMatch {
                    property,
                    mode: StringMode::Contains,
                    value: self.string()?,
                })
            }
            Tok::Kw(kw @ ("STARTS" | "ENDS")) => {
                self.next();
                self.expect_kw("WITH")?;
                let mode = if kw == "STARTS" {
                    StringMode::StartsWith
                } else {
                    StringMode::EndsWith
                };
                Ok(FilterAst::StringMatch {
                    property,
                    mode,
                    value: self.string()?,
                })
            }
            Tok::Kw("HAS") => {
                self.next();
                let mode = if self.eat_kw("ALL") {
                    SetMode::HasAll
                } else if self.eat_kw("ANY") {
                    SetMode::HasAny
                } else if self.eat_kw("ONLY") {
                    SetMode::HasOnly
                } else {
                    SetMode::Has
                };
                let mut values = vec![self.value()?];
                if mode != SetMode::Has {
                    while *self.peek() == Tok::Comma {
                        self.next();
                        values.push(self.value()?);
                    }
                }
                Ok(FilterAst::SetMembership {
                    property,
                    mode,
                    values,
                })
            }
            Tok::Kw("LENGTH") => {
                self.next();
                let op = match self.peek().clone() {
                    Tok::Op(op) => {
                        self.next();
                        op
                    }
                    _ => CompOp::Eq,
                };
                match self.peek().clone() {
                    Tok::Num(Literal::Int(value)) => {
                        self.next();
                        Ok(FilterAst::Length {
                            property,
                            op,
                            value,
                        })
                    }
                    _ => self.fail("an integer"),
                }
            }
            Tok::Kw("IS") => {
                self.next();
                let negated = if self.eat_kw("KNOWN") {
                    false
                } else if self.eat_kw("UNKNOWN") {
                    true
                } else {
                    return self.fail("KNOWN or UNKNOWN");
                };
                Ok(FilterAst::Known { property, negated })
            }
            _ => self
                .fail("a comparison operator, CONTAINS, STARTS WITH, ENDS WITH, HAS, LENGTH or IS"),
        }
    }
}

fn kw_static(kw: &str) -> &'static str {
    KEYWORDS
        .iter()
        .find(|&&k| k == kw)
        .copied()
        .expect("known keyword")
}

/// Parses a filter string.
pub fn parse_filter(text: &str) -> Result<FilterAst, FilterError> {
    if text.len() > MAX_FILTER_LEN {
        return Err(FilterError::TooLong(text.len()));
    }
    let toks = lex(text)?;
    let mut parser = Parser {
        toks,
        pos: 0,
        depth: 0,
    };
    let ast = parser.or()?;
    if *parser.peek() != Tok::Eof {
        return parser.fail("AND, OR or end of input");
    }
    if ast.depth() > MAX_DEPTH {
        return Err(FilterError::TooDeep);
    }
    Ok(ast)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cmp(p: &str, op: CompOp, v: Literal) -> FilterAst {
        FilterAst::Comparison {
            property: p.into(),
            op,
            value: v,
        }
    }

    #[test]
    fn binary_example() {
        assert_eq!(
            parse_filter("nelements=2").unwrap(),
            cmp("nelements", CompOp::Eq, Literal::Int(2))
        );
    }

    #[test]
    fn custom_property_conjunction() {
        let ast = parse_filter(
            "_mcloudarchive_convex_hull_distance < 0.025 AND _mcloudarchive_elf_max > 0.5",
        )
        .unwrap();
        assert_eq!(
            ast,
            FilterAst::And(
                Box::new(cmp(
                    "_mcloudarchive_convex_hull_distance",
                    CompOp::Lt,
                    Literal::Float(0.025)
                )),
                Box::new(cmp(
                    "_mcloudarchive_elf_max",
                    CompOp::Gt,
                    Literal::Float(0.5)
                ))
            )
        );
    }

    #[test]
    fn precedence_and_grouping() {
        let a = || Box::new(cmp("a", CompOp::Eq, Literal::Int(1)));
        let b = || Box::new(cmp("b", CompOp::Eq, Literal::Int(2)));
        let c = || Box::new(cmp("c", CompOp::Eq, Literal::Int(3)));
        assert_eq!(
            parse_filter("NOT (a=1 OR b=2)").unwrap(),
            FilterAst::Not(Box::new(FilterAst::Or(a(), b())))
        );
        assert_eq!(
            parse_filter("a=1 OR b=2 AND c=3").unwrap(),
            FilterAst::Or(a(), Box::new(FilterAst::And(b(), c())))
        );
        assert_eq!(
            parse_filter("NOT a=1 AND b=2").unwrap(),
            FilterAst::And(Box::new(FilterAst::Not(a())), b())
        );
        assert_eq!(
            parse_filter("a=1 AND b=2 AND c=3").unwrap(),
            FilterAst::And(Box::new(FilterAst::And(a(), b())), c())
        );
    }

    #[test]
    fn set_membership() {
        assert_eq!(
            parse_filter(r#"elements HAS ALL "Si","O""#).unwrap(),
            FilterAst::SetMembership {
                property: "elements".into(),
                mode: SetMode::HasAll,
                values: vec![Literal::Str("Si".into()), Literal::Str("O".into())]
            }
        );
        assert!(parse_filter(r#"elements HAS "Si", "O""#).is_err());
    }

    #[test]
    fn reversed_comparison_flips() {
        assert_eq!(
            parse_filter("2 < nelements").unwrap(),
            cmp("nelements", CompOp::Gt, Literal::Int(2))
        );
        assert_eq!(
            parse_filter("\"x\" != id").unwrap(),
            cmp("id", CompOp::Ne, Literal::Str("x".into()))
        );
    }

    #[test]
    fn other_predicates() {
        assert_eq!(
            parse_filter("elements LENGTH 3").unwrap(),
            FilterAst::Length {
                property: "elements".into(),
                op: CompOp::Eq,
                value: 3
            }
        );
        assert_eq!(
            parse_filter("elements LENGTH>=3").unwrap(),
            FilterAst::Length {
                property: "elements".into(),
                op: CompOp::Ge,
                value: 3
            }
        );
        assert_eq!(
            parse_filter("x IS UNKNOWN").unwrap(),
            FilterAst::Known {
                property: "x".into(),
                negated: true
            }
        );
        assert_eq!(
            parse_filter("id STARTS WITH \"set1/\"").unwrap(),
            FilterAst::StringMatch {
                property: "id".into(),
                mode: StringMode::StartsWith,
                value: "set1/".into()
            }
        );
    }

    #[test]
    fn numbers() {
        for (text, lit) in [
            ("x=-3", Literal::Int(-3)),
            ("x=+3", Literal::Int(3)),
            ("x=.5", Literal::Float(0.5)),
            ("x=5.", Literal::Float(5.0)),
            ("x=1E3", Literal::Float(1000.0)),
            ("x=2.5e-3", Literal::Float(0.0025)),
            ("x=99999999999999999999", Literal::Float(1e20)),
        ] {
            assert_eq!(
                parse_filter(text).unwrap(),
                cmp("x", CompOp::Eq, lit),
                "{text}"
            );
        }
        for bad in ["x=1e", "x=-", "x=1.2.3", "x=1e999", "x=3abc"] {
            assert!(parse_filter(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn syntax_errors_carry_offset_and_hint() {
        match parse_filter("elements HAS Zz") {
            Err(FilterError::Syntax {
                offset, expected, ..
            }) => {
                assert_eq!(offset, 13);
                assert_eq!(expected, "a string or number");
            }
            other => panic!("{other:?}"),
        }
        match parse_filter("nelements = 2 AND") {
            Err(FilterError::Syntax { offset, found, .. }) => {
                assert_eq!(offset, 17);
                assert_eq!(found, "end of input");
            }
            other => panic!("{other:?}"),
        }
        for bad in [
            "",
            "(a=1",
            "a=1)",
            "a == 1",
            "NOT NOT a=1",
            "a and b",
            "Nelements=2",
            "a=\"x",
            "a=\"\\n\"",
            "a # 1",
        ] {
            assert!(
                matches!(parse_filter(bad), Err(FilterError::Syntax { .. })),
                "{bad}"
            );
        }
    }

    #[test]
    fn limits() {
        let long = format!("a=\"{}\"", "x".repeat(MAX_FILTER_LEN));
        assert!(matches!(parse_filter(&long), Err(FilterError::TooLong(_))));
        let nested = format!("{}a=1{}", "(".repeat(150), ")".repeat(150));
        assert_eq!(parse_filter(&nested), Err(FilterError::TooDeep));
        let chain = vec!["a=1"; 150].join(" AND ");
        assert_eq!(parse_filter(&chain), Err(FilterError::TooDeep));
        let ok = format!("{}a=1{}", "(".repeat(50), ")".repeat(50));
        assert!(parse_filter(&ok).is_ok());
    }

    #[test]
    fn unicode_strings() {
        assert_eq!(
            parse_filter("s CONTAINS \"Å→\"").unwrap(),
            FilterAst::StringMatch {
                property: "s".into(),
                mode: StringMode::Contains,
                value: "Å→".into()
            }
        );
        assert!(parse_filter("s = é").is_err());
    }
}
