//! Runtime values exchanged with the sandbox and stored in question banks.
//!
//! Two encodings exist:
//!
//! * a literal syntax close to Python's (`[1, 'ab', None, 2.5]`), used in
//!   question files and in human-readable transcripts;
//! * a tagged JSON form (`{"int": 1}`, `{"float": "2.5"}`, ...), used on the
//!   sandbox wire and in journals. Floats travel as shortest round-trip
//!   strings so non-finite values survive.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Maximum list nesting depth accepted anywhere in the system.
pub const MAX_DEPTH: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Value {
    Int(i64),
    #[serde(with = "float_repr")]
    Float(f64),
    Bool(bool),
    Text(String),
    List(Vec<Value>),
    None,
}

impl Value {
    /// Nesting depth: scalars are 0, a flat list is 1.
    pub fn depth(&self) -> usize {
        match self {
            Value::List(items) => 1 + items.iter().map(Value::depth).max().unwrap_or(0),
            _ => 0,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Int(_) => "int",
            Value::Float(_) => "float",
            Value::Bool(_) => "bool",
            Value::Text(_) => "str",
            Value::List(_) => "list",
            Value::None => "None",
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_owned())
    }
}

impl<T: Into<Value>> From<Vec<T>> for Value {
    fn from(v: Vec<T>) -> Self {
        Value::List(v.into_iter().map(Into::into).collect())
    }
}

mod float_repr {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_float(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        let raw = String::deserialize(d)?;
        parse_float(&raw).ok_or_else(|| serde::de::Error::custom(format!("bad float {raw:?}")))
    }
}

pub(crate) fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        // Debug formatting is shortest round-trip and always keeps a '.' or exponent.
        format!("{v:?}")
    }
}

pub(crate) fn parse_float(raw: &str) -> Option<f64> {
    match raw {
        "nan" | "NaN" => Some(f64::NAN),
        "inf" | "Infinity" => Some(f64::INFINITY),
        "-inf" | "-Infinity" => Some(f64::NEG_INFINITY),
        _ => raw.parse().ok(),
    }
}

fn write_text(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_str("'")?;
    for c in s.chars() {
        match c {
            '\\' => f.write_str("\\\\")?,
            '\'' => f.write_str("\\'")?,
            '\n' => f.write_str("\\n")?,
            '\r' => f.write_str("\\r")?,
            '\t' => f.write_str("\\t")?,
            c if c.is_control() => write!(f, "\\u{:04x}", c as u32)?,
            c => write!(f, "{c}")?,
        }
    }
    f.write_str("'")
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Float(v) => f.write_str(&format_float(*v)),
            Value::Bool(true) => f.write_str("True"),
            Value::Bool(false) => f.write_str("False"),
            Value::Text(s) => write_text(f, s),
            Value::None => f.write_str("None"),
            Value::List(items) => {
                f.write_str("[")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str("]")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("literal parse error at byte {offset}: {message}")]
pub struct LiteralError {
    pub offset: usize,
    pub message: String,
}

/// Recursive-descent parser over the literal syntax.
pub(crate) struct LiteralParser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> LiteralParser<'a> {
    pub(crate) fn new(src: &'a str) -> Self {
        Self { src, pos: 0 }
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, LiteralError> {
        Err(LiteralError { offset: self.pos, message: message.into() })
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    pub(crate) fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    pub(crate) fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    pub(crate) fn expect(&mut self, c: char) -> Result<(), LiteralError> {
        if self.eat(c) { Ok(()) } else { self.err(format!("expected '{c}'")) }
    }

    pub(crate) fn finish(&mut self) -> Result<(), LiteralError> {
        self.skip_ws();
        if self.pos == self.src.len() { Ok(()) } else { self.err("trailing input") }
    }

    pub(crate) fn value(&mut self, depth: usize) -> Result<Value, LiteralError> {
        self.skip_ws();
        match self.peek() {
            None => self.err("unexpected end of input"),
            Some('[') => {
                if depth >= MAX_DEPTH {
                    return self.err(format!("nesting deeper than {MAX_DEPTH}"));
                }
                self.pos += 1;
                let items = self.sequence(']', depth + 1)?;
                Ok(Value::List(items))
            }
            Some(q @ ('\'' | '"')) => self.text(q).map(Value::Text),
            Some(c) if c == '-' || c == '+' || c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_alphabetic() => {
                let start = self.pos;
                while let Some(c) = self.peek().filter(|c| c.is_alphanumeric() || *c == '_') {
                    self.pos += c.len_utf8();
                }
                match &self.src[start..self.pos] {
                    "None" => Ok(Value::None),
                    "True" => Ok(Value::Bool(true)),
                    "False" => Ok(Value::Bool(false)),
                    "inf" => Ok(Value::Float(f64::INFINITY)),
                    "nan" => Ok(Value::Float(f64::NAN)),
                    word => {
                        self.pos = start;
                        self.err(format!("unknown word {word:?}"))
                    }
                }
            }
            Some(c) => self.err(format!("unexpected character {c:?}")),
        }
    }

    /// Comma separated values up to `close`, trailing comma allowed.
    pub(crate) fn sequence(&mut self, close: char, depth: usize) -> Result<Vec<Value>, LiteralError> {
        let mut items = Vec::new();
        loop {
            if self.eat(close) {
                return Ok(items);
            }
            items.push(self.value(depth)?);
            if !self.eat(',') {
                self.expect(close)?;
                return Ok(items);
            }
        }
    }

    fn number(&mut self) -> Result<Value, LiteralError> {
        let start = self.pos;
        if matches!(self.peek(), Some('-' | '+')) {
            self.pos += 1;
        }
        if self.rest().starts_with("inf") {
            self.pos += 3;
            let neg = self.src[start..].starts_with('-');
            return Ok(Value::Float(if neg { f64::NEG_INFINITY } else { f64::INFINITY }));
        }
        let mut is_float = false;
        while let Some(c) = self.peek() {
            match c {
                '0'..='9' | '_' => {}
                '.' => is_float = true,
                'e' | 'E' => {
                    is_float = true;
                    if matches!(self.rest()[1..].chars().next(), Some('+' | '-')) {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
            self.pos += 1;
        }
        let raw: String = self.src[start..self.pos].chars().filter(|&c| c != '_').collect();
        if is_float {
            match raw.parse::<f64>() {
                Ok(v) => Ok(Value::Float(v)),
                Err(_) => {
                    self.pos = start;
                    self.err(format!("bad float {raw:?}"))
                }
            }
        } else {
            match raw.parse::<i64>() {
                Ok(v) => Ok(Value::Int(v)),
                Err(_) => {
                    self.pos = start;
                    self.err(format!("bad integer {raw:?}"))
                }
            }
        }
    }

    fn hex_escape(&mut self, digits: usize) -> Result<u32, LiteralError> {
        let rest = self.rest();
        if rest.len() < digits || !rest.is_char_boundary(digits) {
            return self.err("truncated escape");
        }
        let code = u32::from_str_radix(&rest[..digits], 16);
        match code {
            Ok(code) => {
                self.pos += digits;
                Ok(code)
            }
            Err(_) => self.err("bad hex escape"),
        }
    }

    fn text(&mut self, quote: char) -> Result<String, LiteralError> {
        self.pos += 1;
        let mut out = String::new();
        loop {
            let Some(c) = self.peek() else {
                return self.err("unterminated string");
            };
            self.pos += c.len_utf8();
            if c == quote {
                return Ok(out);
            }
            if c != '\\' {
                out.push(c);
                continue;
            }
            let Some(esc) = self.peek() else {
                return self.err("unterminated escape");
            };
            self.pos += esc.len_utf8();
            let code = match esc {
                'n' => '\n' as u32,
                'r' => '\r' as u32,
                't' => '\t' as u32,
                'b' => 0x08,
                'f' => 0x0c,
                '0' => 0,
                '\\' | '\'' | '"' | '/' => esc as u32,
                'x' => self.hex_escape(2)?,
                'u' => {
                    let hi = self.hex_escape(4)?;
                    if (0xd800..0xdc00).contains(&hi) && self.rest().starts_with("\\u") {
                        self.pos += 2;
                        let lo = self.hex_escape(4)?;
                        0x10000 + ((hi - 0xd800) << 10) + (lo.wrapping_sub(0xdc00) & 0x3ff)
                    } else {
                        hi
                    }
                }
                'U' => self.hex_escape(8)?,
                other => return self.err(format!("unknown escape \\{other}")),
            };
            match char::from_u32(code) {
                Some(ch) => out.push(ch),
                None => return self.err(format!("invalid code point {code:#x}")),
            }
        }
    }
}

impl FromStr for Value {
    type Err = LiteralError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut p = LiteralParser::new(s);
        let v = p.value(0)?;
        p.finish()?;
        Ok(v)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_scalars_and_lists() {
        assert_eq!("3".parse::<Value>().unwrap(), Value::Int(3));
        assert_eq!("-3.5".parse::<Value>().unwrap(), Value::Float(-3.5));
        assert_eq!("1e3".parse::<Value>().unwrap(), Value::Float(1000.0));
        assert_eq!("True".parse::<Value>().unwrap(), Value::Bool(true));
        assert_eq!("None".parse::<Value>().unwrap(), Value::None);
        assert_eq!(
            "[1, 'a', [\"b\"], ]".parse::<Value>().unwrap(),
            Value::List(vec![1i64.into(), "a".into(), Value::List(vec!["b".into()])])
        );
        assert_eq!("'\\u0905\\n'".parse::<Value>().unwrap(), Value::Text("\u{905}\n".into()));
        assert_eq!("'\\ud83d\\ude00'".parse::<Value>().unwrap(), Value::Text("😀".into()));
    }

    #[test]
    fn rejects_excess_nesting_and_garbage() {
        assert!("[[[[1]]]]".parse::<Value>().is_ok());
        assert!("[[[[[1]]]]]".parse::<Value>().is_err());
        assert!("foo".parse::<Value>().is_err());
        assert!("ñé".parse::<Value>().is_err());
        assert!("'open".parse::<Value>().is_err());
        assert!("1 2".parse::<Value>().is_err());
        assert!("99999999999999999999".parse::<Value>().is_err());
    }

    #[test]
    fn float_formatting_keeps_type() {
        assert_eq!(Value::Float(3.0).to_string(), "3.0");
        assert_eq!(Value::Float(0.1 + 0.2).to_string(), "0.30000000000000004");
        assert_eq!(Value::Float(f64::NEG_INFINITY).to_string(), "-inf");
        let json = serde_json::to_string(&Value::Float(f64::INFINITY)).unwrap();
        assert_eq!(json, r#"{"float":"inf"}"#);
    }

    pub(crate) fn arb_value() -> impl Strategy<Value = Value> {
        let leaf = prop_oneof![
            any::<i64>().prop_map(Value::Int),
            any::<f64>().prop_filter("finite", |f| f.is_finite()).prop_map(Value::Float),
            any::<bool>().prop_map(Value::Bool),
            ".{0,8}".prop_map(Value::Text),
            Just(Value::None),
        ];
        leaf.prop_recursive(MAX_DEPTH as u32, 24, 4, |inner| {
            prop::collection::vec(inner, 0..4).prop_map(Value::List)
        })
    }

    proptest! {
        #[test]
        fn literal_round_trip(v in arb_value()) {
            let text = v.to_string();
            prop_assert_eq!(text.parse::<Value>().unwrap(), v);
        }

        #[test]
        fn tagged_json_round_trip(v in arb_value()) {
            let json = serde_json::to_string(&v).unwrap();
            prop_assert_eq!(serde_json::from_str::<Value>(&json).unwrap(), v);
        }
    }
}
