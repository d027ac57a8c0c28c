//! Text syntax for MTL formulas.
//!
//! ```text
//! formula   := implies
//! implies   := or ( "->" implies )?
//! or        := and ( "\/" and )*
//! and       := until ( "/\" until )*
//! until     := unary ( "U" interval until )?
//! unary     := "!" unary | "[]" interval? unary | "<>" interval? unary | primary
//! primary   := "true" | "false" | "(" formula ")" | atom
//! atom      := signal ( "@" int )? op number
//!            | ( "lM" | "lI" ) ( "==" | "!=" ) ( "lM" | "lI" )
//!            | custom-name
//! signal    := ( "y" | "yM" | "yI" | "err" | "diff" ) component?
//! op        := "<" | "<=" | ">" | ">="
//! interval  := "_" ( "[" | "(" ) number "," ( number | "inf" ) ( "]" | ")" )
//! ```
//!
//! A bare signal compared with `<` is a norm bound (`err < 0.3` is `||y_M - y_I|| < 0.3`); a
//! numbered signal such as `yM2` reads one component (1-based). `@k` applies the shift
//! operator `S_k` to the shifted operand. Temporal operators without an interval range over
//! `[0, inf)`.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use super::formula::{CmpOp, CustomPredicate, Formula, Interval, Predicate, Signal};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown predicate `{name}` at position {pos}")]
    UnknownPredicate { pos: usize, name: String },
    #[error("malformed interval at position {pos}: {msg}")]
    MalformedInterval { pos: usize, msg: String },
}

impl ParseError {
    pub fn position(&self) -> usize {
        match self {
            ParseError::Syntax { pos, .. }
            | ParseError::UnknownPredicate { pos, .. }
            | ParseError::MalformedInterval { pos, .. } => *pos,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    LParen,
    RParen,
    LBrack,
    RBrack,
    Comma,
    Underscore,
    At,
    Box,
    Diamond,
    Bang,
    EqEq,
    NotEq,
    And,
    Or,
    Implies,
    Cmp(CmpOp),
    Ident(String),
    Num(f64),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::LBrack => f.write_str("`[`"),
            Tok::RBrack => f.write_str("`]`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Underscore => f.write_str("`_`"),
            Tok::At => f.write_str("`@`"),
            Tok::Box => f.write_str("`[]`"),
            Tok::Diamond => f.write_str("`<>`"),
            Tok::Bang => f.write_str("`!`"),
            Tok::EqEq => f.write_str("`==`"),
            Tok::NotEq => f.write_str("`!=`"),
            Tok::And => f.write_str("`/\\`"),
            Tok::Or => f.write_str("`\\/`"),
            Tok::Implies => f.write_str("`->`"),
            Tok::Cmp(op) => write!(f, "`{}`", op.symbol()),
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Num(x) => write!(f, "`{x}`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

fn syntax(pos: usize, msg: impl Into<String>) -> ParseError {
    ParseError::Syntax { pos, msg: msg.into() }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let next = bytes.get(i + 1).map(|&b| b as char);
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let (tok, width) = match (c, next) {
            ('(', _) => (Tok::LParen, 1),
            (')', _) => (Tok::RParen, 1),
            ('[', Some(']')) => (Tok::Box, 2),
            ('[', _) => (Tok::LBrack, 1),
            (']', _) => (Tok::RBrack, 1),
            (',', _) => (Tok::Comma, 1),
            ('_', _) => (Tok::Underscore, 1),
            ('@', _) => (Tok::At, 1),
            ('<', Some('>')) => (Tok::Diamond, 2),
            ('<', Some('=')) => (Tok::Cmp(CmpOp::Le), 2),
            ('<', _) => (Tok::Cmp(CmpOp::Lt), 1),
            ('>', Some('=')) => (Tok::Cmp(CmpOp::Ge), 2),
            ('>', _) => (Tok::Cmp(CmpOp::Gt), 1),
            ('!', Some('=')) => (Tok::NotEq, 2),
            ('!', _) => (Tok::Bang, 1),
            ('=', Some('=')) => (Tok::EqEq, 2),
            ('/', Some('\\')) => (Tok::And, 2),
            ('\\', Some('/')) => (Tok::Or, 2),
            ('-', Some('>')) => (Tok::Implies, 2),
            (c, _) if c.is_ascii_alphabetic() => {
                let len = text[i..]
                    .find(|ch: char| !ch.is_ascii_alphanumeric())
                    .unwrap_or(text.len() - i);
                (Tok::Ident(text[i..i + len].to_string()), len)
            }
            (c, _) if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' => {
                let mut j = i + 1;
                while j < bytes.len() {
                    let d = bytes[j] as char;
                    let exp_sign = (d == '-' || d == '+') && matches!(bytes[j - 1], b'e' | b'E');
                    if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                        j += 1;
                    } else {
                        break;
                    }
                }
                let s = &text[i..j];
                let x: f64 = s.parse().map_err(|_| syntax(i, format!("invalid number `{s}`")))?;
                (Tok::Num(x), j - i)
            }
            (c, _) => return Err(syntax(i, format!("unexpected character `{c}`"))),
        };
        out.push((tok, start));
        i += width;
    }
    out.push((Tok::Eof, text.len()));
    Ok(out)
}

/// Formula parser with an optional registry of named custom predicates.
#[derive(Debug, Default, Clone)]
pub struct Parser {
    custom: HashMap<String, CustomPredicate>,
}

impl Parser {
    pub fn new() -> Self {
        Self::default()
    }

    /// Makes `pred` available under its name.
    pub fn with_custom(mut self, pred: CustomPredicate) -> Self {
        self.custom.insert(pred.name.clone(), pred);
        self
    }

    pub fn parse(&self, text: &str) -> Result<Formula, ParseError> {
        let toks = lex(text)?;
        let mut st = State { toks, pos: 0, custom: &self.custom };
        let f = st.implies()?;
        match st.peek() {
            Tok::Eof => Ok(f),
            Tok::RParen => Err(syntax(st.offset(), "unmatched `)`")),
            t => Err(syntax(st.offset(), format!("unexpected {t}"))),
        }
    }
}

/// Parses with the built-in predicates only.
pub fn parse(text: &str) -> Result<Formula, ParseError> {
    Parser::new().parse(text)
}

struct State<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    custom: &'a HashMap<String, CustomPredicate>,
}

impl State<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if t != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn implies(&mut self) -> Result<Formula, ParseError> {
        let lhs = self.or()?;
        if *self.peek() == Tok::Implies {
            self.bump();
            let rhs = self.implies()?;
            return Ok(Formula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Formula, ParseError> {
        let mut items = vec![self.and()?];
        while *self.peek() == Tok::Or {
            self.bump();
            items.push(self.and()?);
        }
        Ok(Formula::or(items))
    }

    fn and(&mut self) -> Result<Formula, ParseError> {
        let mut items = vec![self.until()?];
        while *self.peek() == Tok::And {
            self.bump();
            items.push(self.until()?);
        }
        Ok(Formula::and(items))
    }

    fn until(&mut self) -> Result<Formula, ParseError> {
        let lhs = self.unary()?;
        if matches!(self.peek(), Tok::Ident(s) if s == "U") {
            self.bump();
            let interval = self.interval()?.unwrap_or_else(Interval::unbounded);
            let rhs = self.until()?;
            return Ok(Formula::until(interval, lhs, rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        match self.peek() {
            Tok::Bang => {
                self.bump();
                Ok(Formula::not(self.unary()?))
            }
            Tok::Box => {
                self.bump();
                let i = self.interval()?.unwrap_or_else(Interval::unbounded);
                Ok(Formula::always(i, self.unary()?))
            }
            Tok::Diamond => {
                self.bump();
                let i = self.interval()?.unwrap_or_else(Interval::unbounded);
                Ok(Formula::eventually(i, self.unary()?))
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Formula, ParseError> {
        let start = self.offset();
        match self.bump() {
            Tok::LParen => {
                let f = self.implies()?;
                if *self.peek() != Tok::RParen {
                    return Err(syntax(
                        self.offset(),
                        format!("unmatched `(` at position {start}: expected `)`, found {}", self.peek()),
                    ));
                }
                self.bump();
                Ok(f)
            }
            Tok::Ident(name) => self.atom(name, start),
            t => Err(syntax(start, format!("expected a formula, found {t}"))),
        }
    }

    fn atom(&mut self, name: String, start: usize) -> Result<Formula, ParseError> {
        match name.as_str() {
            "true" => return Ok(Formula::True),
            "false" => return Ok(Formula::not(Formula::True)),
            "lM" | "lI" => {
                let op = self.bump();
                let other = match self.bump() {
                    Tok::Ident(s) if (s == "lM" || s == "lI") && s != name => s,
                    t => return Err(syntax(start, format!("mode atom must compare lM with lI, found {t}"))),
                };
                debug_assert_ne!(other, name);
                return match op {
                    Tok::EqEq => Ok(Formula::Atom(Predicate::ModeEquals)),
                    Tok::NotEq => Ok(Formula::Atom(Predicate::ModeDiffers)),
                    t => Err(syntax(start, format!("expected `==` or `!=`, found {t}"))),
                };
            }
            _ => {}
        }
        if let Some((signal, component)) = signal_name(&name) {
            let component = match component {
                Some("") | None => None,
                Some(digits) => match digits.parse::<usize>() {
                    Ok(c) if c >= 1 => Some(c),
                    _ => return Err(ParseError::UnknownPredicate { pos: start, name }),
                },
            };
            let shift = if *self.peek() == Tok::At {
                self.bump();
                let at = self.offset();
                match self.bump() {
                    Tok::Num(x) if x.fract() == 0.0 && x.abs() < 1e15 => x as i64,
                    t => return Err(syntax(at, format!("expected an integer shift, found {t}"))),
                }
            } else {
                0
            };
            let op = match self.bump() {
                Tok::Cmp(op) => op,
                t => return Err(syntax(start, format!("expected a comparison after `{name}`, found {t}"))),
            };
            let at = self.offset();
            let threshold = match self.bump() {
                Tok::Num(x) => x,
                t => return Err(syntax(at, format!("expected a number, found {t}"))),
            };
            let pred = if component.is_none() && op == CmpOp::Lt {
                Predicate::NormLessThan { signal, shift, threshold }
            } else {
                Predicate::Compare { signal, component, shift, op, threshold }
            };
            return Ok(Formula::Atom(pred));
        }
        match self.custom.get(&name) {
            Some(p) => Ok(Formula::Atom(Predicate::Custom(p.clone()))),
            None => Err(ParseError::UnknownPredicate { pos: start, name }),
        }
    }

    fn interval(&mut self) -> Result<Option<Interval>, ParseError> {
        if *self.peek() != Tok::Underscore {
            return Ok(None);
        }
        self.bump();
        let start = self.offset();
        let bad = |msg: &str| ParseError::MalformedInterval { pos: start, msg: msg.to_string() };
        let lower_closed = match self.bump() {
            Tok::LBrack => true,
            Tok::LParen => false,
            _ => return Err(bad("expected `[` or `(`")),
        };
        let lower = match self.bump() {
            Tok::Num(x) => x,
            _ => return Err(bad("expected a lower bound")),
        };
        if self.bump() != Tok::Comma {
            return Err(bad("expected `,`"));
        }
        let upper = match self.bump() {
            Tok::Num(x) => x,
            Tok::Ident(s) if s == "inf" => f64::INFINITY,
            _ => return Err(bad("expected an upper bound or `inf`")),
        };
        let upper_closed = match self.bump() {
            Tok::RBrack => upper.is_finite(),
            Tok::RParen => false,
            _ => return Err(bad("expected `]` or `)`")),
        };
        let i = Interval { lower, upper, lower_closed, upper_closed };
        if !i.is_valid() {
            return Err(bad("interval must be non-empty with 0 <= lower <= upper"));
        }
        Ok(Some(i))
    }
}

fn signal_name(name: &str) -> Option<(Signal, Option<&str>)> {
    let table: [(&str, Signal); 5] = [
        ("yM", Signal::Model),
        ("yI", Signal::Implementation),
        ("err", Signal::Difference),
        ("diff", Signal::Difference),
        ("y", Signal::Model),
    ];
    for (prefix, signal) in table {
        if let Some(rest) = name.strip_prefix(prefix) {
            if rest.chars().all(|c| c.is_ascii_digit()) {
                return Some((signal, Some(rest)));
            }
        }
    }
    None
}
