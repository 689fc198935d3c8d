//! Closed-form scalar expressions of one variable `t`.
//!
//! Network coefficients, delays, inputs, and initial histories are all
//! written in this little language so experiment descriptions stay pure
//! data. Grammar (EBNF):
//!
//! ```text
//! expr   := term   { ("+" | "-") term }
//! term   := unary  { ("*" | "/") unary }
//! unary  := "-" unary | power
//! power  := atom [ "^" unary ]            (right associative)
//! atom   := number | "t" | "pi" | func "(" expr ")" | "(" expr ")"
//! func   := "sin" | "cos" | "tan" | "exp" | "ln" | "sqrt" | "abs" | "arctan"
//! ```
//!
//! Evaluation is IEEE double; domain violations (ln or sqrt of a
//! non-positive/negative argument, division by zero, non-finite results)
//! are reported as errors rather than silently propagated as NaN.

use crate::timescale::{ScaleError, TimeScale};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    SyntaxError { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("domain error: {op} at t = {t}")]
    DomainError { op: &'static str, t: f64 },
}

/// Error from scanning an expression over a time-scale window.
#[derive(Debug, Error)]
pub enum ScanError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Scale(#[from] ScaleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Arctan,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Arctan => "arctan",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var,
    Pi,
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn eval(&self, t: f64) -> Result<f64, ExprError> {
        let v = match self {
            Expr::Num(c) => *c,
            Expr::Var => t,
            Expr::Pi => std::f64::consts::PI,
            Expr::Neg(e) => -e.eval(t)?,
            Expr::Bin(op, l, r) => {
                let a = l.eval(t)?;
                let b = r.eval(t)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(ExprError::DomainError { op: "division by zero", t });
                        }
                        a / b
                    }
                    BinOp::Pow => {
                        if a == 0.0 && b == 0.0 {
                            1.0
                        } else if a == 0.0 && b < 0.0 {
                            return Err(ExprError::DomainError { op: "zero to a negative power", t });
                        } else if a < 0.0 && b.fract() != 0.0 {
                            return Err(ExprError::DomainError {
                                op: "fractional power of a negative base",
                                t,
                            });
                        } else {
                            a.powf(b)
                        }
                    }
                }
            }
            Expr::Call(f, e) => {
                let a = e.eval(t)?;
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Tan => a.tan(),
                    Func::Exp => a.exp(),
                    Func::Ln => {
                        if a <= 0.0 {
                            return Err(ExprError::DomainError { op: "ln of a non-positive argument", t });
                        }
                        a.ln()
                    }
                    Func::Sqrt => {
                        if a < 0.0 {
                            return Err(ExprError::DomainError { op: "sqrt of a negative argument", t });
                        }
                        a.sqrt()
                    }
                    Func::Abs => a.abs(),
                    Func::Arctan => a.atan(),
                }
            }
        };
        if !v.is_finite() {
            return Err(ExprError::DomainError { op: "non-finite result", t });
        }
        Ok(v)
    }

    /// Canonical printing; `parse(pretty(e))` evaluates identically and
    /// printing is idempotent on parsed strings.
    pub fn pretty(&self) -> String {
        fn prec(e: &Expr) -> u8 {
            match e {
                Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
                Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
                // a negative literal prints as an applied unary minus, so it
                // must parenthesize exactly like one
                Expr::Neg(_) => 3,
                Expr::Num(c) if *c < 0.0 => 3,
                Expr::Bin(BinOp::Pow, ..) => 4,
                _ => 5,
            }
        }
        fn wrap(e: &Expr, need: bool) -> String {
            let s = e.pretty();
            if need {
                format!("({s})")
            } else {
                s
            }
        }
        match self {
            Expr::Num(c) => {
                if *c < 0.0 {
                    // negative literals print like applied unary minus
                    format!("-{}", -c)
                } else {
                    format!("{c}")
                }
            }
            Expr::Var => "t".to_string(),
            Expr::Pi => "pi".to_string(),
            Expr::Neg(e) => format!("-{}", wrap(e, prec(e) < 3)),
            Expr::Bin(op, l, r) => {
                let (sym, my) = match op {
                    BinOp::Add => ("+", 1),
                    BinOp::Sub => ("-", 1),
                    BinOp::Mul => ("*", 2),
                    BinOp::Div => ("/", 2),
                    BinOp::Pow => ("^", 4),
                };
                let (lp, rp) = if *op == BinOp::Pow {
                    // right associative: parenthesize an equal-precedence left child
                    (prec(l) <= my, prec(r) < my)
                } else {
                    // left associative: parenthesize an equal-precedence right child
                    (prec(l) < my, prec(r) <= my)
                };
                format!("{}{}{}", wrap(l, lp), sym, wrap(r, rp))
            }
            Expr::Call(f, e) => format!("{}({})", f.name(), e.pretty()),
        }
    }
}

impl std::fmt::Display for Expr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.pretty())
    }
}

pub fn parse(src: &str) -> Result<Expr, ExprError> {
    let mut p = Parser { src: src.as_bytes(), pos: 0 };
    p.skip_ws();
    if p.at_end() {
        return Err(ExprError::SyntaxError { offset: 0, message: "empty expression".into() });
    }
    let e = p.expr()?;
    p.skip_ws();
    if !p.at_end() {
        return Err(ExprError::SyntaxError {
            offset: p.pos,
            message: format!("unexpected trailing input starting with `{}`", p.peek_char()),
        });
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn peek(&self) -> u8 {
        if self.at_end() {
            0
        } else {
            self.src[self.pos]
        }
    }

    fn peek_char(&self) -> char {
        self.peek() as char
    }

    fn skip_ws(&mut self) {
        while !self.at_end() && (self.src[self.pos] as char).is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.peek() == c {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut acc = self.term()?;
        loop {
            if self.eat(b'+') {
                acc = Expr::Bin(BinOp::Add, Box::new(acc), Box::new(self.term()?));
            } else if self.eat(b'-') {
                acc = Expr::Bin(BinOp::Sub, Box::new(acc), Box::new(self.term()?));
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut acc = self.unary()?;
        loop {
            if self.eat(b'*') {
                acc = Expr::Bin(BinOp::Mul, Box::new(acc), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                acc = Expr::Bin(BinOp::Div, Box::new(acc), Box::new(self.unary()?));
            } else {
                return Ok(acc);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.eat(b'-') {
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.eat(b'^') {
            // exponent at unary level keeps ^ right associative and
            // admits forms like 2^-3
            Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(self.unary()?)))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        self.skip_ws();
        let start = self.pos;
        if self.at_end() {
            return Err(ExprError::SyntaxError { offset: start, message: "unexpected end of input".into() });
        }
        let c = self.peek();
        if c == b'(' {
            self.pos += 1;
            let e = self.expr()?;
            if !self.eat(b')') {
                return Err(ExprError::SyntaxError {
                    offset: self.pos,
                    message: "expected `)`".into(),
                });
            }
            return Ok(e);
        }
        if c.is_ascii_digit() || c == b'.' {
            return self.number(start);
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            return self.identifier(start);
        }
        Err(ExprError::SyntaxError {
            offset: start,
            message: format!("unexpected character `{}`", c as char),
        })
    }

    fn number(&mut self, start: usize) -> Result<Expr, ExprError> {
        while self.peek().is_ascii_digit() {
            self.pos += 1;
        }
        if self.peek() == b'.' {
            self.pos += 1;
            while self.peek().is_ascii_digit() {
                self.pos += 1;
            }
        }
        if self.peek() == b'e' || self.peek() == b'E' {
            let mark = self.pos;
            self.pos += 1;
            if self.peek() == b'+' || self.peek() == b'-' {
                self.pos += 1;
            }
            if self.peek().is_ascii_digit() {
                while self.peek().is_ascii_digit() {
                    self.pos += 1;
                }
            } else {
                // `e` belonged to something else; not part of the literal
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii slice");
        text.parse::<f64>()
            .map(Expr::Num)
            .map_err(|_| ExprError::SyntaxError {
                offset: start,
                message: format!("malformed number `{text}`"),
            })
    }

    fn identifier(&mut self, start: usize) -> Result<Expr, ExprError> {
        while self.peek().is_ascii_alphanumeric() || self.peek() == b'_' {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii slice");
        match name {
            "t" => Ok(Expr::Var),
            "pi" => Ok(Expr::Pi),
            _ => {
                let func = match name {
                    "sin" => Func::Sin,
                    "cos" => Func::Cos,
                    "tan" => Func::Tan,
                    "exp" => Func::Exp,
                    "ln" => Func::Ln,
                    "sqrt" => Func::Sqrt,
                    "abs" => Func::Abs,
                    "arctan" => Func::Arctan,
                    _ => {
                        return Err(ExprError::UnknownIdentifier {
                            name: name.to_string(),
                            offset: start,
                        })
                    }
                };
                if !self.eat(b'(') {
                    return Err(ExprError::SyntaxError {
                        offset: self.pos,
                        message: format!("function `{name}` requires a parenthesized argument"),
                    });
                }
                let arg = self.expr()?;
                if !self.eat(b')') {
                    return Err(ExprError::SyntaxError {
                        offset: self.pos,
                        message: "expected `)`".into(),
                    });
                }
                Ok(Expr::Call(func, Box::new(arg)))
            }
        }
    }
}

/// Min and max of |e| sampled over the window's enumeration grid, the
/// numeric stand-in for inf/sup over the whole scale. The scan density
/// on continuum segments is the scale's `resolution`.
pub fn bound_scan(e: &Expr, ts: &TimeScale, window: (f64, f64)) -> Result<(f64, f64), ScanError> {
    let pts = ts.enumerate_grid(window.0, window.1)?;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for gp in pts {
        let v = e.eval(gp.t)?.abs();
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok((lo, hi))
}
