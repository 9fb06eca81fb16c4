//! Pre/post-condition expressions.
//!
//! ```text
//! expr    := or
//! or      := and {"or" and}
//! and     := unary {"and" unary}
//! unary   := ["not"] primary
//! primary := "(" expr ")" | path cmp literal
//! cmp     := "==" | "!=" | "<" | "<=" | ">" | ">="
//! path    := ident {"." ident}
//! literal := number | quoted string | "true" | "false"
//! ```

use std::fmt;

use thiserror::Error;

use super::blackboard::{Blackboard, Value};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("condition syntax error at byte {pos}: {message}")]
pub struct SyntaxError {
    pub pos: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConditionError {
    #[error("condition references undeclared blackboard path `{0}`")]
    UnknownPath(String),
    #[error("cannot apply `{op}` to {left} `{path}` and {right} literal")]
    Type { path: String, op: CmpOp, left: &'static str, right: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConditionExpr {
    /// An absent condition.
    Always,
    Or(Vec<ConditionExpr>),
    And(Vec<ConditionExpr>),
    Not(Box<ConditionExpr>),
    Cmp {
        path: String,
        op: CmpOp,
        literal: Value,
    },
}

impl ConditionExpr {
    pub fn parse(src: &str) -> Result<Self, SyntaxError> {
        let tokens = lex(src)?;
        let mut p = Parser { tokens, pos: 0, src_len: src.len() };
        let expr = p.or()?;
        if let Some((pos, tok)) = p.tokens.get(p.pos) {
            return Err(SyntaxError { pos: *pos, message: format!("unexpected {tok}") });
        }
        Ok(expr)
    }

    pub fn is_always(&self) -> bool {
        matches!(self, ConditionExpr::Always)
    }

    pub fn eval(&self, bb: &Blackboard) -> Result<bool, ConditionError> {
        match self {
            ConditionExpr::Always => Ok(true),
            ConditionExpr::Or(terms) => {
                for t in terms {
                    if t.eval(bb)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
            ConditionExpr::And(terms) => {
                for t in terms {
                    if !t.eval(bb)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            ConditionExpr::Not(inner) => Ok(!inner.eval(bb)?),
            ConditionExpr::Cmp { path, op, literal } => {
                let value = bb.get(path).ok_or_else(|| ConditionError::UnknownPath(path.clone()))?;
                compare(path, value, *op, literal)
            }
        }
    }

    /// Every blackboard path the expression reads.
    pub fn paths(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_paths(&mut out);
        out
    }

    fn collect_paths<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            ConditionExpr::Always => {}
            ConditionExpr::Or(ts) | ConditionExpr::And(ts) => ts.iter().for_each(|t| t.collect_paths(out)),
            ConditionExpr::Not(inner) => inner.collect_paths(out),
            ConditionExpr::Cmp { path, .. } => out.push(path),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            ConditionExpr::Or(_) => 1,
            ConditionExpr::And(_) => 2,
            ConditionExpr::Not(_) => 3,
            ConditionExpr::Cmp { .. } | ConditionExpr::Always => 4,
        }
    }

    fn fmt_child(&self, f: &mut fmt::Formatter<'_>, parent: u8) -> fmt::Result {
        // Same-precedence children are parenthesized so the printed form
        // re-parses into the same tree (no re-association).
        if self.precedence() <= parent {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

fn compare(path: &str, value: &Value, op: CmpOp, literal: &Value) -> Result<bool, ConditionError> {
    use std::cmp::Ordering;
    let type_err =
        || ConditionError::Type { path: path.to_owned(), op, left: value.type_name(), right: literal.type_name() };
    let ordering: Option<Ordering> = match (value, literal) {
        (Value::Number(a), Value::Number(b)) => a.partial_cmp(b),
        (Value::Text(a), Value::Text(b)) if matches!(op, CmpOp::Eq | CmpOp::Ne) => Some(a.cmp(b)),
        (Value::Bool(a), Value::Bool(b)) if matches!(op, CmpOp::Eq | CmpOp::Ne) => Some(a.cmp(b)),
        _ => return Err(type_err()),
    };
    let Some(ord) = ordering else {
        // NaN compares unequal to everything.
        return Ok(op == CmpOp::Ne);
    };
    Ok(match op {
        CmpOp::Eq => ord == Ordering::Equal,
        CmpOp::Ne => ord != Ordering::Equal,
        CmpOp::Lt => ord == Ordering::Less,
        CmpOp::Le => ord != Ordering::Greater,
        CmpOp::Gt => ord == Ordering::Greater,
        CmpOp::Ge => ord != Ordering::Less,
    })
}

impl fmt::Display for ConditionExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConditionExpr::Always => f.write_str("true"),
            ConditionExpr::Or(terms) | ConditionExpr::And(terms) => {
                let (sep, prec) = if matches!(self, ConditionExpr::Or(_)) { (" or ", 1) } else { (" and ", 2) };
                for (i, t) in terms.iter().enumerate() {
                    if i > 0 {
                        f.write_str(sep)?;
                    }
                    t.fmt_child(f, prec)?;
                }
                Ok(())
            }
            ConditionExpr::Not(inner) => {
                f.write_str("not ")?;
                inner.fmt_child(f, 3)
            }
            ConditionExpr::Cmp { path, op, literal } => {
                write!(f, "{path} {op} ")?;
                match literal {
                    Value::Bool(b) => write!(f, "{b}"),
                    Value::Number(n) => write!(f, "{n:?}"),
                    Value::Text(s) => write_quoted(f, s),
                }
            }
        }
    }
}

fn write_quoted(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
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

// ---- lexer -----------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Token {
    LParen,
    RParen,
    Dot,
    And,
    Or,
    Not,
    Cmp(CmpOp),
    Ident(String),
    Literal(Value),
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::LParen => f.write_str("`(`"),
            Token::RParen => f.write_str("`)`"),
            Token::Dot => f.write_str("`.`"),
            Token::And => f.write_str("`and`"),
            Token::Or => f.write_str("`or`"),
            Token::Not => f.write_str("`not`"),
            Token::Cmp(op) => write!(f, "`{op}`"),
            Token::Ident(s) => write!(f, "identifier `{s}`"),
            Token::Literal(v) => write!(f, "literal {v}"),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(usize, Token)>, SyntaxError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |pos: usize, message: String| SyntaxError { pos, message };
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'(' => {
                out.push((start, Token::LParen));
                i += 1;
            }
            b')' => {
                out.push((start, Token::RParen));
                i += 1;
            }
            b'.' => {
                out.push((start, Token::Dot));
                i += 1;
            }
            b'=' | b'!' | b'<' | b'>' => {
                let two = bytes.get(i + 1) == Some(&b'=');
                let op = match (c, two) {
                    (b'=', true) => CmpOp::Eq,
                    (b'!', true) => CmpOp::Ne,
                    (b'<', true) => CmpOp::Le,
                    (b'>', true) => CmpOp::Ge,
                    (b'<', false) => CmpOp::Lt,
                    (b'>', false) => CmpOp::Gt,
                    _ => return Err(err(start, format!("unexpected `{}`", c as char))),
                };
                i += if two { 2 } else { 1 };
                out.push((start, Token::Cmp(op)));
            }
            b'"' | b'\'' => {
                let quote = c;
                i += 1;
                let mut s = String::new();
                loop {
                    let Some(ch) = src[i..].chars().next() else {
                        return Err(err(start, "unterminated string".into()));
                    };
                    i += ch.len_utf8();
                    match ch {
                        '\\' => {
                            let Some(esc) = src[i..].chars().next() else {
                                return Err(err(start, "unterminated string".into()));
                            };
                            i += esc.len_utf8();
                            s.push(esc);
                        }
                        ch if ch as u32 == quote as u32 => break,
                        ch => s.push(ch),
                    }
                }
                out.push((start, Token::Literal(Value::Text(s))));
            }
            b'-' | b'0'..=b'9' => {
                i += 1;
                while i < bytes.len() && matches!(bytes[i], b'0'..=b'9' | b'.' | b'e' | b'E' | b'+' | b'-') {
                    // a '.' directly followed by a letter would be a path, but
                    // paths never start with a digit, so numbers are greedy
                    if matches!(bytes[i], b'+' | b'-') && !matches!(bytes[i - 1], b'e' | b'E') {
                        break;
                    }
                    i += 1;
                }
                let text = &src[start..i];
                let n: f64 = text.parse().map_err(|_| err(start, format!("bad number `{text}`")))?;
                out.push((start, Token::Literal(Value::Number(n))));
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                let tok = match &src[start..i] {
                    "and" => Token::And,
                    "or" => Token::Or,
                    "not" => Token::Not,
                    "true" => Token::Literal(Value::Bool(true)),
                    "false" => Token::Literal(Value::Bool(false)),
                    word => Token::Ident(word.to_owned()),
                };
                out.push((start, tok));
            }
            _ => {
                let ch = src[i..].chars().next().unwrap_or('?');
                return Err(err(start, format!("unexpected character `{ch}`")));
            }
        }
    }
    Ok(out)
}

// ---- parser ----------------------------------------------------------------

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    src_len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn here(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.src_len, |(p, _)| *p)
    }

    fn fail<T>(&self, expected: &str) -> Result<T, SyntaxError> {
        let found = self.peek().map_or_else(|| "end of input".to_owned(), Token::to_string);
        Err(SyntaxError { pos: self.here(), message: format!("expected {expected}, found {found}") })
    }

    fn eat(&mut self, tok: &Token) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn or(&mut self) -> Result<ConditionExpr, SyntaxError> {
        let mut terms = vec![self.and()?];
        while self.eat(&Token::Or) {
            terms.push(self.and()?);
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { ConditionExpr::Or(terms) })
    }

    fn and(&mut self) -> Result<ConditionExpr, SyntaxError> {
        let mut terms = vec![self.unary()?];
        while self.eat(&Token::And) {
            terms.push(self.unary()?);
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { ConditionExpr::And(terms) })
    }

    fn unary(&mut self) -> Result<ConditionExpr, SyntaxError> {
        if self.eat(&Token::Not) {
            Ok(ConditionExpr::Not(Box::new(self.primary()?)))
        } else {
            self.primary()
        }
    }

    fn primary(&mut self) -> Result<ConditionExpr, SyntaxError> {
        if self.eat(&Token::LParen) {
            let inner = self.or()?;
            if !self.eat(&Token::RParen) {
                return self.fail("`)`");
            }
            return Ok(inner);
        }
        let path = self.path()?;
        let op = match self.peek() {
            Some(Token::Cmp(op)) => *op,
            _ => return self.fail("comparison operator"),
        };
        self.pos += 1;
        let literal = match self.peek() {
            Some(Token::Literal(v)) => v.clone(),
            _ => return self.fail("literal"),
        };
        self.pos += 1;
        Ok(ConditionExpr::Cmp { path, op, literal })
    }

    fn path(&mut self) -> Result<String, SyntaxError> {
        let mut path = match self.peek() {
            Some(Token::Ident(s)) => s.clone(),
            _ => return self.fail("blackboard path"),
        };
        self.pos += 1;
        while self.eat(&Token::Dot) {
            match self.peek() {
                Some(Token::Ident(s)) => {
                    path.push('.');
                    path.push_str(s);
                    self.pos += 1;
                }
                _ => return self.fail("identifier after `.`"),
            }
        }
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bb() -> Blackboard {
        Blackboard::new().with("mouth.open", false).with("food.count", 3.0).with("user.name", "natalia")
    }

    #[test]
    fn simple_comparisons() {
        let b = bb();
        let eval = |s: &str| ConditionExpr::parse(s).unwrap().eval(&b).unwrap();
        assert!(!eval("mouth.open == true"));
        assert!(eval("mouth.open != true"));
        assert!(eval("food.count >= 3 and food.count < 3.5"));
        assert!(eval("not mouth.open == true"));
        assert!(eval("mouth.open == true or user.name == \"natalia\""));
        assert!(eval("user.name == 'natalia'"));
        assert!(!eval("not (food.count > 1 and food.count < 10)"));
        assert!(eval("food.count == -1 or food.count > 2e0"));
    }

    #[test]
    fn type_and_path_errors() {
        let b = bb();
        let e = ConditionExpr::parse("user.name > 3").unwrap().eval(&b).unwrap_err();
        assert!(matches!(e, ConditionError::Type { .. }));
        let e = ConditionExpr::parse("food.count == \"3\"").unwrap().eval(&b).unwrap_err();
        assert!(matches!(e, ConditionError::Type { .. }));
        let e = ConditionExpr::parse("missing.key == 1").unwrap().eval(&b).unwrap_err();
        assert_eq!(e, ConditionError::UnknownPath("missing.key".into()));
    }

    #[test]
    fn syntax_errors() {
        for bad in
            ["", "true", "a ==", "a == b", "(a == 1", "a == 1 and", "not not a == 1", "a = 1", "a. == 1", "a == \"x"]
        {
            assert!(ConditionExpr::parse(bad).is_err(), "{bad:?} should not parse");
        }
    }

    #[test]
    fn printing_keeps_structure() {
        for src in [
            "a == 1 or b == 2 and c == 3",
            "(a == 1 or b == 2) and c == 3",
            "(a == 1 or b == 2) or c == 3",
            "not (a == 1 and b == \"x \\\" y\")",
            "not (not a == true)",
            "x.y.z <= 0.25",
        ] {
            let e = ConditionExpr::parse(src).unwrap();
            let printed = e.to_string();
            assert_eq!(ConditionExpr::parse(&printed).unwrap(), e, "{src} -> {printed}");
        }
    }

    fn arb_expr() -> impl Strategy<Value = ConditionExpr> {
        let literal = prop_oneof![
            any::<bool>().prop_map(Value::Bool),
            (-1e6f64..1e6).prop_map(Value::Number),
            "[a-z \"\\\\]{0,6}".prop_map(Value::Text),
        ];
        let ops = prop_oneof![
            Just(CmpOp::Eq),
            Just(CmpOp::Ne),
            Just(CmpOp::Lt),
            Just(CmpOp::Le),
            Just(CmpOp::Gt),
            Just(CmpOp::Ge)
        ];
        let leaf = ("[a-z][a-z0-9_]{0,4}(\\.[a-z][a-z0-9_]{0,4}){0,2}", ops, literal)
            .prop_filter("keywords are reserved", |(p, _, _)| {
                p.split('.').all(|s| !["and", "or", "not", "true", "false"].contains(&s))
            })
            .prop_map(|(path, op, literal)| ConditionExpr::Cmp { path, op, literal });
        leaf.prop_recursive(4, 24, 4, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 2..4).prop_map(ConditionExpr::Or),
                prop::collection::vec(inner.clone(), 2..4).prop_map(ConditionExpr::And),
                inner.prop_map(|e| ConditionExpr::Not(Box::new(e))),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(e in arb_expr()) {
            let printed = e.to_string();
            prop_assert_eq!(ConditionExpr::parse(&printed).unwrap(), e);
        }
    }
}
