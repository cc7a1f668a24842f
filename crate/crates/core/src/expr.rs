//! A tiny expression language for user-defined drifts.
//!
//! ```text
//! expr   := term ('+' term)*
//! term   := factor (('*' | '·') factor)*
//! factor := number | 'x' | 'e' | 'pow(' expr ',' expr ')'
//!         | 'ln(' expr ')' | 'min(' expr ',' expr ')' | '(' expr ')'
//! ```
//!
//! `x` is the state variable and `e` is Euler's number. Example:
//! `x*pow(ln(e+x), 2)`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Var,
    Const(f64),
    Add(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Ln(Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let mut p = Parser { src, pos: 0 };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != src.len() {
            return Err(p.error("trailing input"));
        }
        Ok(e)
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Expr::Var => x,
            Expr::Const(c) => *c,
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Pow(a, b) => a.eval(x).powf(b.eval(x)),
            Expr::Ln(a) => a.eval(x).ln(),
            Expr::Min(a, b) => a.eval(x).min(b.eval(x)),
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn error(&self, msg: &str) -> Error {
        Error::Parse {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn eat(&mut self, tok: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(tok) {
            self.pos += tok.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: &str) -> Result<()> {
        if self.eat(tok) {
            Ok(())
        } else {
            Err(self.error(&format!("expected `{tok}`")))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while self.eat("+") {
            let rhs = self.term()?;
            lhs = Expr::Add(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        while self.eat("*") || self.eat("·") {
            let rhs = self.factor()?;
            lhs = Expr::Mul(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn binary_call(&mut self) -> Result<(Expr, Expr)> {
        self.expect("(")?;
        let a = self.expr()?;
        self.expect(",")?;
        let b = self.expr()?;
        self.expect(")")?;
        Ok((a, b))
    }

    fn factor(&mut self) -> Result<Expr> {
        self.skip_ws();
        if self.eat("(") {
            let e = self.expr()?;
            self.expect(")")?;
            return Ok(e);
        }
        let ident: String = self
            .rest()
            .chars()
            .take_while(|c| c.is_ascii_alphabetic())
            .collect();
        if !ident.is_empty() {
            self.pos += ident.len();
            return match ident.as_str() {
                "x" => Ok(Expr::Var),
                "e" => Ok(Expr::Const(std::f64::consts::E)),
                "pow" => {
                    let (a, b) = self.binary_call()?;
                    Ok(Expr::Pow(Box::new(a), Box::new(b)))
                }
                "min" => {
                    let (a, b) = self.binary_call()?;
                    Ok(Expr::Min(Box::new(a), Box::new(b)))
                }
                "ln" => {
                    self.expect("(")?;
                    let a = self.expr()?;
                    self.expect(")")?;
                    Ok(Expr::Ln(Box::new(a)))
                }
                other => {
                    self.pos -= other.len();
                    Err(self.error(&format!("unknown identifier `{other}`")))
                }
            };
        }
        let num: String = self
            .rest()
            .chars()
            .take_while(|c| c.is_ascii_digit() || *c == '.')
            .collect();
        if num.is_empty() {
            return Err(self.error("expected a number, `x`, `e`, a function or `(`"));
        }
        let mut len = num.len();
        // optional exponent: 1e-3, 2E5
        let tail = &self.rest()[len..];
        if let Some(exp) = tail.strip_prefix(['e', 'E']) {
            let sign = usize::from(exp.starts_with(['+', '-']));
            let digits = exp[sign..]
                .chars()
                .take_while(|c| c.is_ascii_digit())
                .count();
            if digits > 0 {
                len += 1 + sign + digits;
            }
        }
        let text = &self.rest()[..len];
        let value: f64 = text
            .parse()
            .map_err(|_| self.error(&format!("malformed number `{text}`")))?;
        self.pos += len;
        Ok(Expr::Const(value))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_builtin_shapes() {
        let sq = Expr::parse("pow(x, 2)").unwrap();
        assert_eq!(sq.eval(3.0), 9.0);
        let xl = Expr::parse("x * pow(ln(e + x), 2)").unwrap();
        let x = 2.0f64;
        assert!((xl.eval(x) - x * (std::f64::consts::E + x).ln().powi(2)).abs() < 1e-14);
        let capped = Expr::parse("min(x*x, 100)").unwrap();
        assert_eq!(capped.eval(20.0), 100.0);
        assert_eq!(Expr::parse("2·x + 1.5e1").unwrap().eval(1.0), 17.0);
        // `e` followed by a non-exponent stays Euler's number
        assert!((Expr::parse("2*e").unwrap().eval(0.0) - 2.0 * std::f64::consts::E).abs() < 1e-15);
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(Expr::parse("x +"), Err(Error::Parse { .. })));
        assert!(matches!(
            Expr::parse("sin(x)"),
            Err(Error::Parse { pos: 0, .. })
        ));
        assert!(Expr::parse("pow(x 2)").is_err());
        assert!(Expr::parse("x x").is_err());
    }
}
