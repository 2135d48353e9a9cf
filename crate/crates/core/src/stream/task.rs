//! Stream task scripts: `stream |from("m") |window(5d, 2h) |httpOut("name")`.

use std::fmt;
use std::str::FromStr;

use chrono::TimeDelta;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A positive duration with nanosecond resolution, written like `5d` or `250ms`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Span {
    nanos: i64,
}

const UNITS: [(&str, i64); 9] = [
    ("w", 7 * 86_400_000_000_000),
    ("d", 86_400_000_000_000),
    ("h", 3_600_000_000_000),
    ("m", 60_000_000_000),
    ("s", 1_000_000_000),
    ("ms", 1_000_000),
    ("us", 1_000),
    ("u", 1_000),
    ("ns", 1),
];

impl Span {
    pub fn from_nanos(nanos: i64) -> Self {
        Span { nanos }
    }

    pub fn minutes(m: i64) -> Self {
        Span {
            nanos: m * 60_000_000_000,
        }
    }

    pub fn hours(h: i64) -> Self {
        Span::minutes(h * 60)
    }

    pub fn days(d: i64) -> Self {
        Span::hours(d * 24)
    }

    pub fn nanos(self) -> i64 {
        self.nanos
    }

    pub fn as_delta(self) -> TimeDelta {
        TimeDelta::nanoseconds(self.nanos)
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.nanos == 0 {
            return f.write_str("0s");
        }
        let (unit, size) = UNITS
            .iter()
            .find(|(_, size)| self.nanos % size == 0)
            .expect("ns divides everything");
        write!(f, "{}{}", self.nanos / size, unit)
    }
}

impl FromStr for Span {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let split = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
        let (digits, unit) = s.split_at(split);
        if digits.is_empty() {
            return Err(format!("duration {s:?} has no magnitude"));
        }
        let unit = if unit == "µs" { "us" } else { unit };
        let size = UNITS
            .iter()
            .find(|(u, _)| *u == unit)
            .map(|&(_, size)| size)
            .ok_or_else(|| format!("unknown duration unit {unit:?} in {s:?}"))?;
        let n: i64 = digits.parse().map_err(|_| format!("duration {s:?} out of range"))?;
        n.checked_mul(size)
            .map(Span::from_nanos)
            .ok_or_else(|| format!("duration {s:?} out of range"))
    }
}

impl TryFrom<String> for Span {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
    }
}

impl From<Span> for String {
    fn from(s: Span) -> String {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamTaskSpec {
    pub measurement: String,
    pub period: Span,
    pub every: Span,
    /// Route serving the latest batch, `/` + the httpOut name.
    pub out_path: String,
}

impl Default for StreamTaskSpec {
    fn default() -> Self {
        StreamTaskSpec {
            measurement: "water".into(),
            period: Span::days(5),
            every: Span::hours(2),
            out_path: "/batch".into(),
        }
    }
}

impl StreamTaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.every.nanos() <= 0 {
            return Err(Error::TaskValidation(format!(
                "every = {} must be positive",
                self.every
            )));
        }
        if self.period < self.every {
            return Err(Error::TaskValidation(format!(
                "period {} is shorter than every {}",
                self.period, self.every
            )));
        }
        if self.measurement.is_empty() {
            return Err(Error::TaskValidation("empty measurement name".into()));
        }
        Ok(())
    }

    /// Canonical script text; `define_task` parses it back to the same spec.
    pub fn to_script(&self) -> String {
        format!(
            "stream\n    |from(\"{}\")\n    |window({}, {})\n    |httpOut(\"{}\")\n",
            self.measurement,
            self.period,
            self.every,
            self.out_path.trim_start_matches('/')
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Duration(String),
    Pipe,
    Open,
    Close,
    Comma,
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Str(s) => write!(f, "string {s:?}"),
            Tok::Duration(s) => write!(f, "duration {s}"),
            Tok::Pipe => f.write_str("`|`"),
            Tok::Open => f.write_str("`(`"),
            Tok::Close => f.write_str("`)`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::End => f.write_str("end of script"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::TaskSyntax {
        line,
        column,
        message: message.into(),
    }
}

fn lex(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
                continue;
            }
            c if c.is_whitespace() => {
                i += 1;
                col += 1;
                continue;
            }
            '/' if chars.get(i + 1) == Some(&'/') => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                continue;
            }
            '|' | '(' | ')' | ',' => {
                let tok = match c {
                    '|' => Tok::Pipe,
                    '(' => Tok::Open,
                    ')' => Tok::Close,
                    _ => Tok::Comma,
                };
                i += 1;
                col += 1;
                out.push(Token {
                    tok,
                    line: l0,
                    column: c0,
                });
            }
            '"' | '\'' => {
                let start = i + 1;
                let end = chars[start..]
                    .iter()
                    .position(|&q| q == c || q == '\n')
                    .map(|p| start + p)
                    .filter(|&e| chars[e] == c)
                    .ok_or_else(|| syntax(l0, c0, "unterminated string"))?;
                let text: String = chars[start..end].iter().collect();
                col += end + 1 - i;
                i = end + 1;
                out.push(Token {
                    tok: Tok::Str(text),
                    line: l0,
                    column: c0,
                });
            }
            c if c.is_ascii_digit() => {
                let start = i;
                while i < chars.len() && chars[i].is_alphanumeric() {
                    i += 1;
                }
                col += i - start;
                let text: String = chars[start..i].iter().collect();
                out.push(Token {
                    tok: Tok::Duration(text),
                    line: l0,
                    column: c0,
                });
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                col += i - start;
                let text: String = chars[start..i].iter().collect();
                out.push(Token {
                    tok: Tok::Ident(text),
                    line: l0,
                    column: c0,
                });
            }
            other => return Err(syntax(l0, c0, format!("unexpected character {other:?}"))),
        }
    }
    out.push(Token {
        tok: Tok::End,
        line,
        column: col,
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, context: &str) -> Result<Token> {
        let t = self.next();
        if t.tok != want {
            return Err(syntax(
                t.line,
                t.column,
                format!("expected {want} {context}, found {}", t.tok),
            ));
        }
        Ok(t)
    }

    fn name_arg(&mut self, node: &str) -> Result<String> {
        let t = self.next();
        match t.tok {
            Tok::Str(s) | Tok::Ident(s) if !s.is_empty() => Ok(s),
            other => Err(syntax(
                t.line,
                t.column,
                format!("{node}() takes a name, found {other}"),
            )),
        }
    }

    fn span_arg(&mut self, what: &str) -> Result<Span> {
        let t = self.next();
        match t.tok {
            Tok::Duration(s) => s.parse().map_err(|e: String| syntax(t.line, t.column, e)),
            other => Err(syntax(
                t.line,
                t.column,
                format!("window() {what} must be a duration, found {other}"),
            )),
        }
    }

    /// `| name (` for the expected node, naming it if absent.
    fn node(&mut self, want: &str) -> Result<()> {
        let t = self.peek().clone();
        if t.tok != Tok::Pipe {
            return Err(syntax(
                t.line,
                t.column,
                format!("missing `{want}` node: expected `|`, found {}", t.tok),
            ));
        }
        self.next();
        let t = self.next();
        match &t.tok {
            Tok::Ident(name) if name == want => {}
            Tok::Ident(name) if KNOWN.contains(&name.as_str()) => {
                return Err(syntax(
                    t.line,
                    t.column,
                    format!("missing `{want}` node before `{name}`"),
                ));
            }
            Tok::Ident(name) => return Err(syntax(t.line, t.column, format!("unknown node `{name}`"))),
            other => return Err(syntax(t.line, t.column, format!("expected node name, found {other}"))),
        }
        self.expect(Tok::Open, &format!("after `{want}`"))?;
        Ok(())
    }
}

const KNOWN: [&str; 4] = ["stream", "from", "window", "httpOut"];

/// Parses a task script. Nodes must appear exactly once, in the order
/// `stream`, `from`, `window`, `httpOut`.
pub fn define_task(script: &str) -> Result<StreamTaskSpec> {
    let mut p = Parser {
        toks: lex(script)?,
        pos: 0,
    };
    let t = p.next();
    match &t.tok {
        Tok::Ident(s) if s == "stream" => {}
        other => {
            return Err(syntax(
                t.line,
                t.column,
                format!("script must start with `stream`, found {other}"),
            ))
        }
    }
    p.node("from")?;
    let measurement = p.name_arg("from")?;
    p.expect(Tok::Close, "to close `from(`")?;
    p.node("window")?;
    let period = p.span_arg("period")?;
    p.expect(Tok::Comma, "between window period and every")?;
    let every = p.span_arg("every")?;
    p.expect(Tok::Close, "to close `window(`")?;
    p.node("httpOut")?;
    let name = p.name_arg("httpOut")?;
    let close = p.expect(Tok::Close, "to close `httpOut(`")?;
    if !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
        return Err(syntax(
            close.line,
            close.column,
            format!("httpOut name {name:?} is not a plain route segment"),
        ));
    }
    let t = p.next();
    match t.tok {
        Tok::End => {}
        Tok::Pipe => {
            let n = p.next();
            let msg = match n.tok {
                Tok::Ident(name) if KNOWN.contains(&name.as_str()) => format!("duplicate node `{name}`"),
                Tok::Ident(name) => format!("unknown node `{name}`"),
                other => format!("expected node name, found {other}"),
            };
            return Err(syntax(n.line, n.column, msg));
        }
        other => return Err(syntax(t.line, t.column, format!("unexpected {other} after `httpOut`"))),
    }
    let spec = StreamTaskSpec {
        measurement,
        period,
        every,
        out_path: format!("/{name}"),
    };
    spec.validate()?;
    Ok(spec)
}
