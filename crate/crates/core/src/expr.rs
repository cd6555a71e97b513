//! A small arithmetic expression language with symbolic differentiation.
//!
//! Used to define damping, nonlinearities, initial data and exact solutions
//! from configuration strings. Operators `+ - * / ^` (also `− × ÷`),
//! functions `sin cos exp abs`, constants `pi` (`π`) and `e`.

use std::f64::consts::{E, PI};
use std::fmt::Write as _;

use crate::error::{PinnError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Abs,
    /// Only produced by differentiation of non-constant exponents.
    Ln,
    /// Derivative of `abs`; `sign(0) = 0`.
    Sign,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Abs => "abs",
            Func::Ln => "ln",
            Func::Sign => "sign",
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Exp => x.exp(),
            Func::Abs => x.abs(),
            Func::Ln => x.ln(),
            Func::Sign => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

fn as_num(e: &Expr) -> Option<f64> {
    match e {
        Expr::Num(v) => Some(*v),
        _ => None,
    }
}

// Constructors fold constants so derivative trees stay small.
impl Expr {
    pub fn num(v: f64) -> Self {
        Expr::Num(v)
    }

    pub fn neg(a: Expr) -> Self {
        match a {
            Expr::Num(v) => Expr::Num(-v),
            Expr::Neg(b) => *b,
            a => Expr::Neg(Box::new(a)),
        }
    }

    pub fn add(a: Expr, b: Expr) -> Self {
        match (as_num(&a), as_num(&b)) {
            (Some(x), Some(y)) => Expr::Num(x + y),
            (Some(x), _) if x == 0.0 => b,
            (_, Some(y)) if y == 0.0 => a,
            _ => Expr::Add(Box::new(a), Box::new(b)),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Self {
        match (as_num(&a), as_num(&b)) {
            (Some(x), Some(y)) => Expr::Num(x - y),
            (_, Some(y)) if y == 0.0 => a,
            (Some(x), _) if x == 0.0 => Expr::neg(b),
            _ => Expr::Sub(Box::new(a), Box::new(b)),
        }
    }

    pub fn mul(a: Expr, b: Expr) -> Self {
        match (as_num(&a), as_num(&b)) {
            (Some(x), Some(y)) => Expr::Num(x * y),
            (Some(x), _) | (_, Some(x)) if x == 0.0 => Expr::Num(0.0),
            (Some(x), _) if x == 1.0 => b,
            (_, Some(y)) if y == 1.0 => a,
            (Some(x), _) if x == -1.0 => Expr::neg(b),
            (_, Some(y)) if y == -1.0 => Expr::neg(a),
            _ => Expr::Mul(Box::new(a), Box::new(b)),
        }
    }

    pub fn div(a: Expr, b: Expr) -> Self {
        match (as_num(&a), as_num(&b)) {
            (Some(x), Some(y)) if y != 0.0 => Expr::Num(x / y),
            (Some(x), _) if x == 0.0 => Expr::Num(0.0),
            (_, Some(y)) if y == 1.0 => a,
            _ => Expr::Div(Box::new(a), Box::new(b)),
        }
    }

    pub fn pow(a: Expr, b: Expr) -> Self {
        match (as_num(&a), as_num(&b)) {
            (Some(x), Some(y)) => Expr::Num(powf(x, y)),
            (_, Some(y)) if y == 0.0 => Expr::Num(1.0),
            (_, Some(y)) if y == 1.0 => a,
            _ => Expr::Pow(Box::new(a), Box::new(b)),
        }
    }

    pub fn call(f: Func, a: Expr) -> Self {
        match a {
            Expr::Num(v) => Expr::Num(f.apply(v)),
            a => Expr::Call(f, Box::new(a)),
        }
    }

    pub fn eval(&self, vars: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(i) => vars[*i],
            Expr::Neg(a) => -a.eval(vars),
            Expr::Add(a, b) => a.eval(vars) + b.eval(vars),
            Expr::Sub(a, b) => a.eval(vars) - b.eval(vars),
            Expr::Mul(a, b) => a.eval(vars) * b.eval(vars),
            Expr::Div(a, b) => a.eval(vars) / b.eval(vars),
            Expr::Pow(a, b) => powf(a.eval(vars), b.eval(vars)),
            Expr::Call(f, a) => f.apply(a.eval(vars)),
        }
    }

    pub fn depends_on(&self, var: usize) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(i) => *i == var,
            Expr::Neg(a) | Expr::Call(_, a) => a.depends_on(var),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.depends_on(var) || b.depends_on(var)
            }
        }
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Num(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(a) | Expr::Call(_, a) => a.max_var(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.max_var().max(b.max_var())
            }
        }
    }

    /// Symbolic partial derivative with respect to variable `var`.
    pub fn derivative(&self, var: usize) -> Expr {
        use Expr as X;
        match self {
            X::Num(_) => X::Num(0.0),
            X::Var(i) => X::Num(if *i == var { 1.0 } else { 0.0 }),
            X::Neg(a) => X::neg(a.derivative(var)),
            X::Add(a, b) => X::add(a.derivative(var), b.derivative(var)),
            X::Sub(a, b) => X::sub(a.derivative(var), b.derivative(var)),
            X::Mul(a, b) => X::add(
                X::mul(a.derivative(var), (**b).clone()),
                X::mul((**a).clone(), b.derivative(var)),
            ),
            X::Div(a, b) => X::div(
                X::sub(
                    X::mul(a.derivative(var), (**b).clone()),
                    X::mul((**a).clone(), b.derivative(var)),
                ),
                X::pow((**b).clone(), X::Num(2.0)),
            ),
            X::Pow(a, b) => {
                let da = a.derivative(var);
                if !b.depends_on(var) {
                    X::mul(
                        X::mul((**b).clone(), X::pow((**a).clone(), X::sub((**b).clone(), X::Num(1.0)))),
                        da,
                    )
                } else {
                    X::mul(
                        self.clone(),
                        X::add(
                            X::mul(b.derivative(var), X::call(Func::Ln, (**a).clone())),
                            X::div(X::mul((**b).clone(), da), (**a).clone()),
                        ),
                    )
                }
            }
            X::Call(f, a) => {
                let da = a.derivative(var);
                let outer = match f {
                    Func::Sin => X::call(Func::Cos, (**a).clone()),
                    Func::Cos => X::neg(X::call(Func::Sin, (**a).clone())),
                    Func::Exp => self.clone(),
                    Func::Abs => X::call(Func::Sign, (**a).clone()),
                    Func::Ln => X::div(X::Num(1.0), (**a).clone()),
                    Func::Sign => X::Num(0.0),
                };
                X::mul(outer, da)
            }
        }
    }

    /// Fully parenthesised source text that parses back to the same tree.
    pub fn render(&self, names: &[&str]) -> String {
        let mut s = String::new();
        self.render_into(names, &mut s);
        s
    }

    fn render_into(&self, names: &[&str], s: &mut String) {
        let bin = |s: &mut String, a: &Expr, op: &str, b: &Expr| {
            s.push('(');
            a.render_into(names, s);
            s.push_str(op);
            b.render_into(names, s);
            s.push(')');
        };
        match self {
            Expr::Num(v) if *v < 0.0 => {
                let _ = write!(s, "(-{})", -v);
            }
            Expr::Num(v) => {
                let _ = write!(s, "{v}");
            }
            Expr::Var(i) => s.push_str(names[*i]),
            Expr::Neg(a) => {
                s.push_str("(-");
                a.render_into(names, s);
                s.push(')');
            }
            Expr::Add(a, b) => bin(s, a, " + ", b),
            Expr::Sub(a, b) => bin(s, a, " - ", b),
            Expr::Mul(a, b) => bin(s, a, " * ", b),
            Expr::Div(a, b) => bin(s, a, " / ", b),
            Expr::Pow(a, b) => bin(s, a, "^", b),
            Expr::Call(f, a) => {
                s.push_str(f.name());
                s.push('(');
                a.render_into(names, s);
                s.push(')');
            }
        }
    }
}

fn powf(x: f64, y: f64) -> f64 {
    if y.fract() == 0.0 && y.abs() < 1024.0 {
        x.powi(y as i32)
    } else {
        x.powf(y)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(src: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v = text
                .parse::<f64>()
                .map_err(|_| PinnError::Expr(format!("bad number literal `{text}`")))?;
            out.push(Tok::Num(v));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else {
            let op = match c {
                '+' | '-' | '*' | '/' | '^' | '(' | ')' => c,
                '−' => '-',
                '×' | '·' => '*',
                '÷' => '/',
                _ => return Err(PinnError::Expr(format!("unexpected character `{c}` at offset {i}"))),
            };
            out.push(Tok::Op(op));
            i += 1;
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Tok>,
    pos: usize,
    vars: &'a [(&'a str, usize)],
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn eat(&mut self, op: char) -> bool {
        if self.peek() == Some(&Tok::Op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, op: char) -> Result<()> {
        if self.eat(op) {
            Ok(())
        } else {
            Err(PinnError::Expr(format!("expected `{op}` at token {}", self.pos)))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Expr::add(lhs, self.term()?);
            } else if self.eat('-') {
                lhs = Expr::sub(lhs, self.term()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Expr::mul(lhs, self.unary()?);
            } else if self.eat('/') {
                lhs = Expr::div(lhs, self.unary()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            Ok(Expr::neg(self.unary()?))
        } else if self.eat('+') {
            self.unary()
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat('^') {
            Ok(Expr::pow(base, self.unary()?))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        let tok = self.peek().cloned();
        self.pos += 1;
        match tok {
            Some(Tok::Num(v)) => Ok(Expr::Num(v)),
            Some(Tok::Op('(')) => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                let func = match name.as_str() {
                    "sin" => Some(Func::Sin),
                    "cos" => Some(Func::Cos),
                    "exp" => Some(Func::Exp),
                    "abs" => Some(Func::Abs),
                    _ => None,
                };
                if let Some(f) = func {
                    self.expect('(')?;
                    let arg = self.expr()?;
                    self.expect(')')?;
                    return Ok(Expr::call(f, arg));
                }
                if let Some(&(_, i)) = self.vars.iter().find(|v| v.0 == name) {
                    return Ok(Expr::Var(i));
                }
                match name.as_str() {
                    "pi" | "π" => Ok(Expr::Num(PI)),
                    "e" => Ok(Expr::Num(E)),
                    _ => Err(PinnError::Expr(format!(
                        "unknown identifier `{name}` (variables: {})",
                        self.vars.iter().map(|v| v.0).collect::<Vec<_>>().join(", ")
                    ))),
                }
            }
            Some(Tok::Op(c)) => Err(PinnError::Expr(format!("unexpected `{c}`"))),
            None => Err(PinnError::Expr("unexpected end of expression".into())),
        }
    }
}

/// Parses `src` with the given variable names (indexed by position).
pub fn parse(src: &str, vars: &[&str]) -> Result<Expr> {
    let table: Vec<(&str, usize)> = vars.iter().enumerate().map(|(i, v)| (*v, i)).collect();
    parse_aliased(src, &table)
}

/// Parses `src` where several names may map to the same variable index.
pub fn parse_aliased(src: &str, vars: &[(&str, usize)]) -> Result<Expr> {
    let toks = tokenize(src)?;
    if toks.is_empty() {
        return Err(PinnError::Expr("empty expression".into()));
    }
    let mut p = Parser { toks, pos: 0, vars };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(PinnError::Expr(format!("trailing input at token {}", p.pos)));
    }
    Ok(e)
}
