//! Combinational expressions hosted by pipeline steps.
//!
//! Width rules: `add`/`sub`/`xor`/`and`/`or` take the wider operand width
//! (narrower operand zero-extended), `mul` sums the widths, shifts and `not`
//! keep the operand width, `mux` needs a 1-bit selector and equal arms,
//! `slice hi lo` yields `hi - lo + 1` bits and `concat` sums its parts.
//! Nothing truncates implicitly.

use std::fmt;
use std::ops;

use crate::bits::Bits;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Const(Bits),
    Ref(String),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Xor(Box<Expr>, Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    Shl(Box<Expr>, u32),
    Shr(Box<Expr>, u32),
    Mux(Box<Expr>, Box<Expr>, Box<Expr>),
    Slice(Box<Expr>, u32, u32),
    Concat(Vec<Expr>),
}

/// Reference to a signal by name.
pub fn var(name: &str) -> Expr {
    Expr::Ref(name.to_string())
}

pub fn constant(value: u64, width: u32) -> Expr {
    Expr::Const(Bits::from_u64(value, width))
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WidthError {
    #[error("unknown signal `{0}`")]
    Unknown(String),
    #[error("mux selector must be 1 bit wide, got {0}")]
    Selector(u32),
    #[error("mux arms differ in width ({0} vs {1})")]
    Arms(u32, u32),
    #[error("slice [{hi}:{lo}] out of range for a {width}-bit operand")]
    Slice { hi: u32, lo: u32, width: u32 },
    #[error("empty concatenation")]
    EmptyConcat,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("expression syntax error at offset {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

impl Expr {
    pub fn mux(sel: Expr, a: Expr, b: Expr) -> Expr {
        Expr::Mux(Box::new(sel), Box::new(a), Box::new(b))
    }

    pub fn shl(self, k: u32) -> Expr {
        Expr::Shl(Box::new(self), k)
    }

    pub fn shr(self, k: u32) -> Expr {
        Expr::Shr(Box::new(self), k)
    }

    pub fn slice(self, hi: u32, lo: u32) -> Expr {
        Expr::Slice(Box::new(self), hi, lo)
    }

    pub fn concat(parts: Vec<Expr>) -> Expr {
        Expr::Concat(parts)
    }

    /// Result width given the widths of referenced signals.
    pub fn width(&self, lookup: &dyn Fn(&str) -> Option<u32>) -> Result<u32, WidthError> {
        use Expr::*;
        Ok(match self {
            Const(v) => v.width(),
            Ref(n) => lookup(n).ok_or_else(|| WidthError::Unknown(n.clone()))?,
            Add(a, b) | Sub(a, b) | Xor(a, b) | And(a, b) | Or(a, b) => {
                a.width(lookup)?.max(b.width(lookup)?)
            }
            Mul(a, b) => a.width(lookup)? + b.width(lookup)?,
            Not(a) | Shl(a, _) | Shr(a, _) => a.width(lookup)?,
            Mux(s, a, b) => {
                let sw = s.width(lookup)?;
                if sw != 1 {
                    return Err(WidthError::Selector(sw));
                }
                let (wa, wb) = (a.width(lookup)?, b.width(lookup)?);
                if wa != wb {
                    return Err(WidthError::Arms(wa, wb));
                }
                wa
            }
            Slice(a, hi, lo) => {
                let width = a.width(lookup)?;
                if hi < lo || *hi >= width {
                    return Err(WidthError::Slice { hi: *hi, lo: *lo, width });
                }
                hi - lo + 1
            }
            Concat(parts) => {
                if parts.is_empty() {
                    return Err(WidthError::EmptyConcat);
                }
                let mut w = 0;
                for p in parts {
                    w += p.width(lookup)?;
                }
                w
            }
        })
    }

    /// Signal names referenced, in first-occurrence order.
    pub fn refs(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_refs(&mut out);
        out
    }

    fn collect_refs(&self, out: &mut Vec<String>) {
        use Expr::*;
        match self {
            Const(_) => {}
            Ref(n) => {
                if !out.contains(n) {
                    out.push(n.clone());
                }
            }
            Add(a, b) | Sub(a, b) | Mul(a, b) | Xor(a, b) | And(a, b) | Or(a, b) => {
                a.collect_refs(out);
                b.collect_refs(out);
            }
            Not(a) | Shl(a, _) | Shr(a, _) | Slice(a, _, _) => a.collect_refs(out),
            Mux(s, a, b) => {
                s.collect_refs(out);
                a.collect_refs(out);
                b.collect_refs(out);
            }
            Concat(parts) => parts.iter().for_each(|p| p.collect_refs(out)),
        }
    }

    /// Evaluates with the widths fixed by [`Expr::width`].
    pub fn eval(&self, env: &dyn Fn(&str) -> Option<Bits>) -> Result<Bits, WidthError> {
        use Expr::*;
        Ok(match self {
            Const(v) => v.clone(),
            Ref(n) => env(n).ok_or_else(|| WidthError::Unknown(n.clone()))?,
            Add(a, b) => a.eval(env)?.add(&b.eval(env)?),
            Sub(a, b) => a.eval(env)?.sub(&b.eval(env)?),
            Mul(a, b) => a.eval(env)?.mul(&b.eval(env)?),
            Xor(a, b) => a.eval(env)?.xor(&b.eval(env)?),
            And(a, b) => a.eval(env)?.and(&b.eval(env)?),
            Or(a, b) => a.eval(env)?.or(&b.eval(env)?),
            Not(a) => a.eval(env)?.not(),
            Shl(a, k) => a.eval(env)?.shl(*k),
            Shr(a, k) => a.eval(env)?.shr(*k),
            Mux(s, a, b) => Bits::mux(&s.eval(env)?, &a.eval(env)?, &b.eval(env)?),
            Slice(a, hi, lo) => a.eval(env)?.slice(*hi, *lo),
            Concat(parts) => {
                let vals = parts.iter().map(|p| p.eval(env)).collect::<Result<Vec<_>, _>>()?;
                Bits::concat(&vals.iter().collect::<Vec<_>>())
            }
        })
    }

    /// Parses the prefix s-expression form, e.g. `(xor sum2XY mulXY)`.
    pub fn parse(text: &str) -> Result<Expr, ParseError> {
        let mut p = Parser { src: text, pos: 0 };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != text.len() {
            return Err(p.err("trailing input"));
        }
        Ok(e)
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, message: &str) -> ParseError {
        ParseError { offset: self.pos, message: message.to_string() }
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    fn atom(&mut self) -> Result<&str, ParseError> {
        self.skip_ws();
        let start = self.pos;
        while let Some(c) = self.src[self.pos..].chars().next() {
            if c.is_whitespace() || c == '(' || c == ')' {
                break;
            }
            self.pos += c.len_utf8();
        }
        if start == self.pos {
            return Err(self.err("expected an atom"));
        }
        Ok(&self.src[start..self.pos])
    }

    fn number(&mut self) -> Result<u32, ParseError> {
        let at = self.pos;
        let a = self.atom()?;
        a.parse().map_err(|_| ParseError { offset: at, message: format!("expected an integer, got `{a}`") })
    }

    fn expect_close(&mut self) -> Result<(), ParseError> {
        self.skip_ws();
        if self.src[self.pos..].starts_with(')') {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err("expected `)`"))
        }
    }

    fn peek_close(&mut self) -> bool {
        self.skip_ws();
        self.src[self.pos..].starts_with(')')
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.skip_ws();
        if !self.src[self.pos..].starts_with('(') {
            let at = self.pos;
            let a = self.atom()?;
            if a.chars().next().is_some_and(|c| c.is_ascii_digit()) {
                return Err(ParseError {
                    offset: at,
                    message: format!("bare literal `{a}`; use (const value width)"),
                });
            }
            return Ok(Expr::Ref(a.to_string()));
        }
        self.pos += 1;
        let op_at = self.pos;
        let op = self.atom()?.to_string();
        let bin = |p: &mut Self, f: fn(Box<Expr>, Box<Expr>) -> Expr| -> Result<Expr, ParseError> {
            let a = p.expr()?;
            let b = p.expr()?;
            Ok(f(Box::new(a), Box::new(b)))
        };
        let e = match op.as_str() {
            "const" => {
                let at = self.pos;
                let v = self.atom()?.to_string();
                let w = self.number()?;
                if w == 0 {
                    return Err(ParseError { offset: at, message: "zero-width constant".into() });
                }
                let bits = Bits::parse(&v, w)
                    .ok_or_else(|| ParseError { offset: at, message: format!("bad constant `{v}`") })?;
                let wide = Bits::parse(&v, w + 64).unwrap();
                if wide.resize(w).resize(w + 64) != wide {
                    return Err(ParseError { offset: at, message: format!("constant `{v}` does not fit in {w} bits") });
                }
                Expr::Const(bits)
            }
            "add" => bin(self, Expr::Add)?,
            "sub" => bin(self, Expr::Sub)?,
            "mul" => bin(self, Expr::Mul)?,
            "xor" => bin(self, Expr::Xor)?,
            "and" => bin(self, Expr::And)?,
            "or" => bin(self, Expr::Or)?,
            "not" => Expr::Not(Box::new(self.expr()?)),
            "shl" => {
                let a = self.expr()?;
                Expr::Shl(Box::new(a), self.number()?)
            }
            "shr" => {
                let a = self.expr()?;
                Expr::Shr(Box::new(a), self.number()?)
            }
            "mux" => {
                let s = self.expr()?;
                let a = self.expr()?;
                let b = self.expr()?;
                Expr::mux(s, a, b)
            }
            "slice" => {
                let a = self.expr()?;
                let hi = self.number()?;
                let lo = self.number()?;
                Expr::Slice(Box::new(a), hi, lo)
            }
            "concat" => {
                let mut parts = Vec::new();
                while !self.peek_close() {
                    parts.push(self.expr()?);
                }
                Expr::Concat(parts)
            }
            other => {
                return Err(ParseError { offset: op_at, message: format!("unknown operator `{other}`") })
            }
        };
        self.expect_close()?;
        Ok(e)
    }
}

impl std::str::FromStr for Expr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Expr, ParseError> {
        Expr::parse(s)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Expr::*;
        match self {
            Const(v) => write!(f, "(const {} {})", v, v.width()),
            Ref(n) => write!(f, "{n}"),
            Add(a, b) => write!(f, "(add {a} {b})"),
            Sub(a, b) => write!(f, "(sub {a} {b})"),
            Mul(a, b) => write!(f, "(mul {a} {b})"),
            Xor(a, b) => write!(f, "(xor {a} {b})"),
            And(a, b) => write!(f, "(and {a} {b})"),
            Or(a, b) => write!(f, "(or {a} {b})"),
            Not(a) => write!(f, "(not {a})"),
            Shl(a, k) => write!(f, "(shl {a} {k})"),
            Shr(a, k) => write!(f, "(shr {a} {k})"),
            Mux(s, a, b) => write!(f, "(mux {s} {a} {b})"),
            Slice(a, hi, lo) => write!(f, "(slice {a} {hi} {lo})"),
            Concat(parts) => {
                write!(f, "(concat")?;
                for p in parts {
                    write!(f, " {p}")?;
                }
                write!(f, ")")
            }
        }
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $variant:ident) => {
        impl ops::$trait for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::$variant(Box::new(self), Box::new(rhs))
            }
        }
    };
}

binop!(Add, add, Add);
binop!(Sub, sub, Sub);
binop!(Mul, mul, Mul);
binop!(BitXor, bitxor, Xor);
binop!(BitAnd, bitand, And);
binop!(BitOr, bitor, Or);

impl ops::Not for Expr {
    type Output = Expr;
    fn not(self) -> Expr {
        Expr::Not(Box::new(self))
    }
}
