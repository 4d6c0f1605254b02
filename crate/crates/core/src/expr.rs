//! Arithmetic expressions in the ambient coordinates, evaluated on jets.
//!
//! Grammar: numbers, the variables `x y z w`, the constants `pi` and `e`,
//! caller-supplied named parameters, binary `+ - * / ^` (`^` binds tightest
//! and associates to the right), unary minus, parentheses and the functions
//! `sin cos sinh cosh exp ln sqrt`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{Field, ScalarField};
use crate::jet::Jet;

pub const VARIABLES: [&str; 4] = ["x", "y", "z", "w"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Sinh,
    Cosh,
    Exp,
    Ln,
    Sqrt,
}

impl Func {
    fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
        }
    }

    fn jet(self, a: &Jet) -> Jet {
        match self {
            Func::Sin => a.sin(),
            Func::Cos => a.cos(),
            Func::Sinh => a.sinh(),
            Func::Cosh => a.cosh(),
            Func::Exp => a.exp(),
            Func::Ln => a.ln(),
            Func::Sqrt => a.sqrt(),
        }
    }

    fn f64(self, a: f64) -> f64 {
        match self {
            Func::Sin => a.sin(),
            Func::Cos => a.cos(),
            Func::Sinh => a.sinh(),
            Func::Cosh => a.cosh(),
            Func::Exp => a.exp(),
            Func::Ln => a.ln(),
            Func::Sqrt => a.sqrt(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    /// Value of a subexpression that does not depend on the variables.
    pub fn constant_value(&self) -> Option<f64> {
        match self {
            Expr::Num(v) => Some(*v),
            Expr::Var(_) => None,
            Expr::Neg(a) => a.constant_value().map(|v| -v),
            Expr::Call(f, a) => a.constant_value().map(|v| f.f64(v)),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.constant_value()?, b.constant_value()?);
                Some(match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                })
            }
        }
    }

    /// Largest variable index used, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Num(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(a) | Expr::Call(_, a) => a.max_var(),
            Expr::Bin(_, a, b) => a.max_var().max(b.max_var()),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(i) => x[*i],
            Expr::Neg(a) => -a.eval(x),
            Expr::Call(f, a) => f.f64(a.eval(x)),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(x), b.eval(x));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                }
            }
        }
    }

    pub fn eval_jets(&self, x: &[Jet]) -> Jet {
        match self {
            Expr::Num(v) => Jet::constant(*v),
            Expr::Var(i) => x[*i],
            Expr::Neg(a) => -a.eval_jets(x),
            Expr::Call(f, a) => f.jet(&a.eval_jets(x)),
            Expr::Bin(BinOp::Pow, a, b) => {
                let base = a.eval_jets(x);
                match b.constant_value() {
                    Some(p) if p.fract() == 0.0 && p.abs() <= i32::MAX as f64 => base.powi(p as i32),
                    Some(p) => base.powf(p),
                    None => (b.eval_jets(x) * base.ln()).exp(),
                }
            }
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval_jets(x), b.eval_jets(x));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => unreachable!(),
                }
            }
        }
    }

    /// The expression as a scalar field on a chart of dimension `dim`.
    pub fn into_field(self, dim: usize) -> Result<Field> {
        if let Some(i) = self.max_var() {
            if i >= dim {
                return Err(Error::Parse(format!(
                    "variable `{}` is not a coordinate of a {dim}-dimensional chart",
                    VARIABLES[i]
                )));
            }
        }
        Ok(Arc::new(ExprField(self)))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(i) => f.write_str(VARIABLES[*i]),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
            Expr::Bin(op, a, b) => {
                let s = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({a} {s} {b})")
            }
        }
    }
}

struct ExprField(Expr);

impl ScalarField for ExprField {
    fn jet(&self, p: &[f64], order: usize) -> Jet {
        self.0.eval_jets(&Jet::seed(p, order)).truncate(order)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>> {
    let b = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let c = b[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'.') {
                i += 1;
            }
            if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
                let mut j = i + 1;
                if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
                    j += 1;
                }
                if j < b.len() && b[j].is_ascii_digit() {
                    i = j;
                    while i < b.len() && b[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let v: f64 = text
                .parse()
                .map_err(|_| Error::Parse(format!("bad number `{text}` at {start}")))?;
            out.push((start, Tok::Num(v)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
        } else if "+-*/^".contains(c) {
            out.push((i, Tok::Op(c)));
            i += 1;
        } else if c == '(' {
            out.push((i, Tok::LParen));
            i += 1;
        } else if c == ')' {
            out.push((i, Tok::RParen));
            i += 1;
        } else {
            return Err(Error::Parse(format!("unexpected character `{c}` at {i}")));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    len: usize,
    params: &'a BTreeMap<String, f64>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.1)
    }

    fn at(&self) -> usize {
        self.toks.get(self.pos).map_or(self.len, |t| t.0)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.1.clone());
        self.pos += 1;
        t
    }

    fn expr(&mut self, min_bp: u8) -> Result<Expr> {
        let at = self.at();
        let mut lhs = match self.next() {
            Some(Tok::Num(v)) => Expr::Num(v),
            Some(Tok::Op('-')) => Expr::Neg(Box::new(self.expr(5)?)),
            Some(Tok::LParen) => {
                let e = self.expr(0)?;
                self.expect_rparen()?;
                e
            }
            Some(Tok::Ident(name)) => self.ident(&name, at)?,
            Some(t) => return Err(Error::Parse(format!("unexpected `{t:?}` at {at}"))),
            None => return Err(Error::Parse("unexpected end of input".into())),
        };
        loop {
            let op = match self.peek() {
                Some(Tok::Op(c)) => *c,
                Some(Tok::RParen) | None => break,
                Some(t) => return Err(Error::Parse(format!("expected an operator, found `{t:?}` at {}", self.at()))),
            };
            let (op, lbp, rbp) = match op {
                '+' => (BinOp::Add, 1, 2),
                '-' => (BinOp::Sub, 1, 2),
                '*' => (BinOp::Mul, 3, 4),
                '/' => (BinOp::Div, 3, 4),
                '^' => (BinOp::Pow, 7, 6),
                _ => unreachable!(),
            };
            if lbp < min_bp {
                break;
            }
            self.pos += 1;
            let rhs = self.expr(rbp)?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn ident(&mut self, name: &str, at: usize) -> Result<Expr> {
        if let Some(f) = Func::from_name(name) {
            if self.next() != Some(Tok::LParen) {
                return Err(Error::Parse(format!("`{name}` at {at} must be followed by `(`")));
            }
            let arg = self.expr(0)?;
            self.expect_rparen()?;
            return Ok(Expr::Call(f, Box::new(arg)));
        }
        if let Some(i) = VARIABLES.iter().position(|v| *v == name) {
            return Ok(Expr::Var(i));
        }
        if let Some(v) = self.params.get(name) {
            return Ok(Expr::Num(*v));
        }
        match name {
            "pi" => Ok(Expr::Num(std::f64::consts::PI)),
            "e" => Ok(Expr::Num(std::f64::consts::E)),
            _ => Err(Error::Parse(format!("unknown identifier `{name}` at {at}"))),
        }
    }

    fn expect_rparen(&mut self) -> Result<()> {
        let at = self.at();
        match self.next() {
            Some(Tok::RParen) => Ok(()),
            _ => Err(Error::Parse(format!("expected `)` at {at}"))),
        }
    }
}

/// Parses `src`; identifiers found in `params` are replaced by their values.
pub fn parse(src: &str, params: &BTreeMap<String, f64>) -> Result<Expr> {
    for name in params.keys() {
        if VARIABLES.contains(&name.as_str()) || Func::from_name(name).is_some() {
            return Err(Error::Parse(format!("parameter name `{name}` is reserved")));
        }
    }
    let toks = tokenize(src)?;
    let mut p = Parser { toks, pos: 0, len: src.len(), params };
    let e = p.expr(0)?;
    if p.pos < p.toks.len() {
        return Err(Error::Parse(format!("unexpected `)` at {}", p.at())));
    }
    Ok(e)
}

/// Parses `src` into a field on a chart of dimension `dim`.
pub fn parse_field(src: &str, params: &BTreeMap<String, f64>, dim: usize) -> Result<Field> {
    parse(src, params)?.into_field(dim)
}
