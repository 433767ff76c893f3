//! Text format for polynomial systems.
//!
//! One polynomial per line; blank lines and everything after `#` are ignored.
//!
//! ```text
//! system  := line*
//! line    := expr? comment?
//! expr    := sign? term (('+' | '-') term)*
//! term    := factor ('*' factor)*
//! factor  := '-' factor | power
//! power   := atom ('^' integer)?
//! atom    := number | variable | 'i' | '(' expr ')'
//! variable:= 'x' integer            (1-based; 'z' is an alias in complex systems)
//! ```
//!
//! Numbers accept decimal and exponent notation (`2`, `1.5`, `.5`, `3e-4`).
//! The number of variables is the largest index that appears anywhere in the
//! file. The imaginary unit `i` is only accepted by the complex parser, where
//! each `x_k` is a complex variable.

use num_complex::Complex64;

use super::{ComplexPolynomial, PolySystem};
use crate::error::{Error, Result};

/// Largest exponent accepted after `^`.
const MAX_EXPONENT: u32 = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Tok {
    Num(f64),
    Var(usize),
    Imag,
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
}

#[derive(Debug, Clone)]
enum Expr {
    Num(f64),
    Imag,
    Var(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, u32),
}

fn err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

fn tokenize(text: &str, line: usize, complex: bool) -> Result<Vec<(Tok, usize)>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        match c {
            ' ' | '\t' | '\r' => i += 1,
            '+' | '-' | '*' | '^' | '(' | ')' => {
                out.push((
                    match c {
                        '+' => Tok::Plus,
                        '-' => Tok::Minus,
                        '*' => Tok::Star,
                        '^' => Tok::Caret,
                        '(' => Tok::LParen,
                        _ => Tok::RParen,
                    },
                    col,
                ));
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                if i < chars.len() && matches!(chars[i], 'e' | 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && matches!(chars[j], '+' | '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        while j < chars.len() && chars[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let s: String = chars[start..i].iter().collect();
                let v: f64 = s
                    .parse()
                    .map_err(|_| err(line, col, format!("malformed number '{s}'")))?;
                if !v.is_finite() {
                    return Err(err(line, col, format!("number '{s}' is not finite")));
                }
                out.push((Tok::Num(v), col));
            }
            'z' if !complex => {
                return Err(err(
                    line,
                    col,
                    "'z' variables are only allowed in complex systems",
                ))
            }
            'x' | 'z' => {
                let start = i + 1;
                i = start;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let digits: String = chars[start..i].iter().collect();
                let k: usize = digits.parse().map_err(|_| {
                    err(line, col, format!("expected a variable index after '{c}'"))
                })?;
                if k == 0 {
                    return Err(err(line, col, "variable indices start at 1"));
                }
                out.push((Tok::Var(k), col));
            }
            'i' if complex => {
                if chars.get(i + 1).is_some_and(|n| n.is_alphanumeric()) {
                    return Err(err(
                        line,
                        col + 1,
                        format!("unexpected character '{}'", chars[i + 1]),
                    ));
                }
                out.push((Tok::Imag, col));
                i += 1;
            }
            'i' => return Err(err(line, col, "'i' is only allowed in complex systems")),
            other => return Err(err(line, col, format!("unexpected character '{other}'"))),
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: &'a [(Tok, usize)],
    pos: usize,
    line: usize,
    end_col: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<Tok> {
        self.toks.get(self.pos).map(|t| t.0)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |t| t.1)
    }

    fn fail<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(err(self.line, self.col(), message))
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = match self.peek() {
            Some(Tok::Plus) => {
                self.pos += 1;
                self.term()?
            }
            Some(Tok::Minus) => {
                self.pos += 1;
                Expr::Neg(Box::new(self.term()?))
            }
            _ => self.term()?,
        };
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        while self.peek() == Some(Tok::Star) {
            self.pos += 1;
            lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr> {
        if self.peek() == Some(Tok::Minus) {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.factor()?)));
        }
        let base = self.atom()?;
        if self.peek() != Some(Tok::Caret) {
            return Ok(base);
        }
        self.pos += 1;
        match self.peek() {
            Some(Tok::Num(v)) if v.fract() == 0.0 && v >= 0.0 && v <= MAX_EXPONENT as f64 => {
                self.pos += 1;
                Ok(Expr::Pow(Box::new(base), v as u32))
            }
            _ => self.fail(format!(
                "exponent must be an integer between 0 and {MAX_EXPONENT}"
            )),
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        let tok = match self.peek() {
            Some(t) => t,
            None => return self.fail("unexpected end of line"),
        };
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::Var(k) => Ok(Expr::Var(k)),
            Tok::Imag => Ok(Expr::Imag),
            Tok::LParen => {
                let inner = self.expr()?;
                if self.peek() != Some(Tok::RParen) {
                    return self.fail("expected ')'");
                }
                self.pos += 1;
                Ok(inner)
            }
            _ => {
                self.pos -= 1;
                self.fail("expected a number, variable or '('")
            }
        }
    }
}

fn max_var(e: &Expr) -> usize {
    match e {
        Expr::Var(k) => *k,
        Expr::Num(_) | Expr::Imag => 0,
        Expr::Neg(a) | Expr::Pow(a, _) => max_var(a),
        Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => max_var(a).max(max_var(b)),
    }
}

fn build(e: &Expr, m: usize) -> ComplexPolynomial {
    match e {
        Expr::Num(v) => ComplexPolynomial::constant(m, Complex64::new(*v, 0.0)),
        Expr::Imag => ComplexPolynomial::constant(m, Complex64::new(0.0, 1.0)),
        Expr::Var(k) => ComplexPolynomial::variable(m, k - 1),
        Expr::Add(a, b) => &build(a, m) + &build(b, m),
        Expr::Sub(a, b) => &build(a, m) - &build(b, m),
        Expr::Mul(a, b) => &build(a, m) * &build(b, m),
        Expr::Neg(a) => -&build(a, m),
        Expr::Pow(a, k) => build(a, m).pow(*k),
    }
}

/// Parses every non-blank line. With `num_vars = None` the variable count is
/// inferred from the largest index used.
pub(super) fn parse_lines_with(
    text: &str,
    num_vars: Option<usize>,
    complex: bool,
) -> Result<Vec<ComplexPolynomial>> {
    let mut exprs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("");
        let toks = tokenize(body, line, complex)?;
        if toks.is_empty() {
            continue;
        }
        let mut p = Parser {
            toks: &toks,
            pos: 0,
            line,
            end_col: body.chars().count() + 1,
        };
        let e = p.expr()?;
        if p.pos != toks.len() {
            return p.fail("unexpected token");
        }
        exprs.push((line, e));
    }
    if exprs.is_empty() {
        return Err(err(1, 1, "no polynomials found"));
    }
    let used = exprs.iter().map(|(_, e)| max_var(e)).max().unwrap_or(0);
    let m = match num_vars {
        Some(n) if used > n => {
            let (line, _) = exprs
                .iter()
                .find(|(_, e)| max_var(e) > n)
                .expect("some line uses the largest index");
            return Err(err(
                *line,
                1,
                format!("variable x{used} exceeds the {n} declared variables"),
            ));
        }
        Some(n) => n,
        None => used.max(1),
    };
    Ok(exprs.iter().map(|(_, e)| build(e, m)).collect())
}

/// Parses a real polynomial system.
pub fn parse_system(text: &str) -> Result<PolySystem> {
    let polys = parse_lines_with(text, None, false)?
        .iter()
        .map(ComplexPolynomial::real_part_exact)
        .collect::<Result<Vec<_>>>()?;
    PolySystem::new(polys)
}

/// Parses a system with complex coefficients (`i` is the imaginary unit) in
/// complex variables `x1..xm`.
pub fn parse_complex_system(text: &str) -> Result<Vec<ComplexPolynomial>> {
    parse_lines_with(text, None, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polysys::Polynomial;

    fn parse_err(text: &str) -> (usize, usize) {
        match parse_system(text) {
            Err(Error::Parse { line, column, .. }) => (line, column),
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn parses_documented_example() {
        let sys = parse_system("3*x1^2*x2 - 1.5*x2 + 2").unwrap();
        assert_eq!(sys.num_vars(), 2);
        let p = &sys.polynomials()[0];
        assert_eq!(p.eval(&[2.0, 1.0]).unwrap(), 12.0 - 1.5 + 2.0);
        assert_eq!(p.degree(), 3);
    }

    #[test]
    fn comments_and_blank_lines() {
        let text = "# circle\nx1^2 + x2^2 - 1  # unit\n\n   \nx1 - x2\n";
        let sys = parse_system(text).unwrap();
        assert_eq!(sys.polynomials().len(), 2);
        assert_eq!(sys.residual(&[0.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn variable_count_spans_all_lines() {
        let sys = parse_system("x1\nx3 + 1").unwrap();
        assert_eq!(sys.num_vars(), 3);
        assert!(sys.polynomials().iter().all(|p| p.num_vars() == 3));
        assert_eq!(parse_system("7").unwrap().num_vars(), 1);
    }

    #[test]
    fn precedence_and_grouping() {
        let p = Polynomial::parse("-x1^2", 1).unwrap();
        assert_eq!(p.eval(&[3.0]).unwrap(), -9.0);
        let p = Polynomial::parse("(x1 + 1)^2 - 2*(x1)", 1).unwrap();
        assert_eq!(p, Polynomial::parse("x1^2 + 1", 1).unwrap());
        let p = Polynomial::parse("2*-x1 + 1e-1 + .5", 1).unwrap();
        assert_eq!(p.eval(&[1.0]).unwrap(), -2.0 + 0.1 + 0.5);
        let p = Polynomial::parse("x1 - x1", 1).unwrap();
        assert!(p.is_zero());
        let p = Polynomial::parse("x1^0", 1).unwrap();
        assert_eq!(p.eval(&[5.0]).unwrap(), 1.0);
    }

    #[test]
    fn reports_positions() {
        assert_eq!(parse_err("x1 + \n"), (1, 6));
        assert_eq!(parse_err("x1\nx2 ** 2"), (2, 5));
        assert_eq!(parse_err("x1 + y"), (1, 6));
        assert_eq!(parse_err("x0"), (1, 1));
        assert_eq!(parse_err("x1^1.5"), (1, 4));
        assert_eq!(parse_err("(x1 + 1"), (1, 8));
        assert_eq!(parse_err("x1 x2"), (1, 4));
        assert_eq!(parse_err("2*i"), (1, 3));
        assert_eq!(parse_err("# nothing\n"), (1, 1));
    }

    #[test]
    fn declared_variable_count_is_enforced() {
        assert!(matches!(
            Polynomial::parse("x3", 2),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            Polynomial::parse("x1\nx2", 2),
            Err(Error::Parse { .. })
        ));
        assert_eq!(Polynomial::parse("x1", 3).unwrap().num_vars(), 3);
    }

    #[test]
    fn complex_parser_accepts_i() {
        let polys = parse_complex_system("x1^2 + 1\n(2 - 3*i)*x2").unwrap();
        assert_eq!(polys.len(), 2);
        assert_eq!(polys[0].num_vars(), 2);
        let z = [Complex64::new(0.0, 1.0), Complex64::new(1.0, 0.0)];
        assert_eq!(polys[0].eval(&z).unwrap(), Complex64::new(0.0, 0.0));
        assert_eq!(polys[1].eval(&z).unwrap(), Complex64::new(2.0, -3.0));
        assert!(matches!(
            parse_complex_system("ix1"),
            Err(Error::Parse { .. })
        ));
        assert_eq!(
            parse_complex_system("z1^2 - 1").unwrap(),
            parse_complex_system("x1^2 - 1").unwrap()
        );
        assert_eq!(parse_err("z1"), (1, 1));
        // i^2 = -1
        let p = &parse_complex_system("i^2 + 1 + 0*x1").unwrap()[0];
        assert!(p.is_zero());
    }

    #[test]
    fn real_parser_rejects_complex_coefficients_only_via_i() {
        let sys = parse_system("x1*x1 - 2").unwrap();
        assert_eq!(sys.cost_degree(), 4);
    }
}
