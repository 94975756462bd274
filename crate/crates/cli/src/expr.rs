//! Arithmetic expressions in one variable `x`, for `--h-expr`.
//!
//! Grammar: numbers, `x`, `+ - * / ^`, parentheses and the functions
//! `ln`, `log` (natural), `log10`, `sqrt`, `exp`. `^` is right-associative
//! and binds tighter than unary minus.

use bigjump::boundary::LittleH;

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    X,
    Neg(Box<Expr>),
    Bin(char, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Func {
    Ln,
    Log10,
    Sqrt,
    Exp,
}

impl Expr {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::X => x,
            Expr::Neg(e) => -e.eval(x),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(x), b.eval(x));
                match op {
                    '+' => a + b,
                    '-' => a - b,
                    '*' => a * b,
                    '/' => a / b,
                    _ => a.powf(b),
                }
            }
            Expr::Call(f, e) => {
                let v = e.eval(x);
                match f {
                    Func::Ln => v.ln(),
                    Func::Log10 => v.log10(),
                    Func::Sqrt => v.sqrt(),
                    Func::Exp => v.exp(),
                }
            }
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, what: &str) -> CliError {
        CliError::Usage(format!("h expression `{}`: {what} at offset {}", self.src, self.pos))
    }

    fn skip_ws(&mut self) {
        while self.src[self.pos..].starts_with(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, CliError> {
        let mut lhs = self.term()?;
        while let Some(op @ ('+' | '-')) = self.peek() {
            self.pos += 1;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, CliError> {
        let mut lhs = self.unary()?;
        while let Some(op @ ('*' | '/')) = self.peek() {
            self.pos += 1;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, CliError> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, CliError> {
        let base = self.atom()?;
        if self.eat('^') {
            return Ok(Expr::Bin('^', Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, CliError> {
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return Err(self.err("expected `)`"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.src[self.pos..].starts_with(|c: char| c.is_ascii_alphanumeric()) {
                    self.pos += 1;
                }
                let func = match &self.src[start..self.pos] {
                    "x" => return Ok(Expr::X),
                    "ln" | "log" => Func::Ln,
                    "log10" => Func::Log10,
                    "sqrt" => Func::Sqrt,
                    "exp" => Func::Exp,
                    other => {
                        self.pos = start;
                        return Err(self.err(&format!("unknown name `{other}`")));
                    }
                };
                if !self.eat('(') {
                    return Err(self.err("expected `(`"));
                }
                let arg = self.expr()?;
                if !self.eat(')') {
                    return Err(self.err("expected `)`"));
                }
                Ok(Expr::Call(func, Box::new(arg)))
            }
            _ => Err(self.err("expected a number, `x`, a function or `(`")),
        }
    }

    fn number(&mut self) -> Result<Expr, CliError> {
        let rest = &self.src[self.pos..];
        let mut end = rest.find(|c: char| !(c.is_ascii_digit() || c == '.')).unwrap_or(rest.len());
        // exponent part
        if rest[end..].starts_with(['e', 'E']) {
            let tail = &rest[end + 1..];
            let sign = usize::from(tail.starts_with(['+', '-']));
            let digits = tail[sign..].find(|c: char| !c.is_ascii_digit()).unwrap_or(tail.len() - sign);
            if digits > 0 {
                end += 1 + sign + digits;
            }
        }
        let v: f64 = rest[..end].parse().map_err(|_| self.err("malformed number"))?;
        self.pos += end;
        Ok(Expr::Num(v))
    }
}

pub fn parse(src: &str) -> Result<Expr, CliError> {
    let mut p = Parser { src, pos: 0 };
    let e = p.expr()?;
    if p.peek().is_some() {
        return Err(p.err("trailing input"));
    }
    Ok(e)
}

/// Candidate little-h function from an expression in `x`.
pub fn parse_h(src: &str) -> Result<LittleH, CliError> {
    let e = parse(src)?;
    Ok(LittleH::new(src.to_string(), move |x| e.eval(x)))
}
