//! Arithmetic expression syntax: tokenizer, recursive-descent parser and
//! exact rational evaluation.
//!
//! Grammar (see `docs/expr-grammar.md`):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor | factor)*     -- juxtaposition multiplies
//! factor := '-' factor | power
//! power  := atom ('^' factor)?
//! atom   := number | letter | '(' expr ')'
//! ```
//!
//! Variables are single ASCII letters, so `2xy` reads as `2 * x * y`.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at offset {offset}: {message}")]
pub struct ParseError {
    /// Byte offset into the input.
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unbound variable {0:?}")]
    UnboundVariable(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("exponent must be an integer")]
    NonIntegerExponent,
    #[error("exponent {0} out of range")]
    ExponentOutOfRange(String),
}

/// Abstract syntax tree over rationals and single-letter variables.
///
/// The parser produces binary `Add`/`Mul` nodes; canonical forms use the
/// same variants with flattened, sorted operand lists.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ExprNode {
    Num(BigRational),
    Var(String),
    Neg(Box<ExprNode>),
    Add(Vec<ExprNode>),
    Sub(Box<ExprNode>, Box<ExprNode>),
    Mul(Vec<ExprNode>),
    Div(Box<ExprNode>, Box<ExprNode>),
    Pow(Box<ExprNode>, Box<ExprNode>),
}

impl ExprNode {
    pub fn int(v: i64) -> Self {
        ExprNode::Num(BigRational::from_integer(BigInt::from(v)))
    }

    pub fn var(name: &str) -> Self {
        ExprNode::Var(name.to_string())
    }

    pub fn add(a: ExprNode, b: ExprNode) -> Self {
        ExprNode::Add(vec![a, b])
    }

    pub fn mul(a: ExprNode, b: ExprNode) -> Self {
        ExprNode::Mul(vec![a, b])
    }

    pub fn div(a: ExprNode, b: ExprNode) -> Self {
        ExprNode::Div(Box::new(a), Box::new(b))
    }

    pub fn pow(a: ExprNode, b: ExprNode) -> Self {
        ExprNode::Pow(Box::new(a), Box::new(b))
    }

    /// Evaluates exactly; `env` supplies variable values.
    pub fn eval(&self, env: &dyn Fn(&str) -> Option<BigRational>) -> Result<BigRational, EvalError> {
        Ok(match self {
            ExprNode::Num(v) => v.clone(),
            ExprNode::Var(name) => env(name).ok_or_else(|| EvalError::UnboundVariable(name.clone()))?,
            ExprNode::Neg(e) => -e.eval(env)?,
            ExprNode::Add(items) => {
                let mut acc = BigRational::zero();
                for item in items {
                    acc += item.eval(env)?;
                }
                acc
            }
            ExprNode::Sub(a, b) => a.eval(env)? - b.eval(env)?,
            ExprNode::Mul(items) => {
                let mut acc = BigRational::one();
                for item in items {
                    acc *= item.eval(env)?;
                }
                acc
            }
            ExprNode::Div(a, b) => {
                let d = b.eval(env)?;
                if d.is_zero() {
                    return Err(EvalError::DivisionByZero);
                }
                a.eval(env)? / d
            }
            ExprNode::Pow(a, b) => {
                let base = a.eval(env)?;
                let exp = b.eval(env)?;
                if !exp.is_integer() {
                    return Err(EvalError::NonIntegerExponent);
                }
                let e = exp
                    .to_integer()
                    .to_i32()
                    .filter(|e| e.abs() <= 64)
                    .ok_or_else(|| EvalError::ExponentOutOfRange(exp.to_string()))?;
                if e < 0 && base.is_zero() {
                    return Err(EvalError::DivisionByZero);
                }
                num_traits::pow::Pow::pow(&base, e)
            }
        })
    }

    /// Evaluates an expression that contains no variables.
    pub fn eval_constant(&self) -> Result<BigRational, EvalError> {
        self.eval(&|_| None)
    }

    pub fn variables(&self) -> std::collections::BTreeSet<String> {
        let mut out = std::collections::BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut std::collections::BTreeSet<String>) {
        match self {
            ExprNode::Num(_) => {}
            ExprNode::Var(v) => {
                out.insert(v.clone());
            }
            ExprNode::Neg(e) => e.collect_vars(out),
            ExprNode::Add(items) | ExprNode::Mul(items) => items.iter().for_each(|i| i.collect_vars(out)),
            ExprNode::Sub(a, b) | ExprNode::Div(a, b) | ExprNode::Pow(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// True when every literal fraction `a/b` in the tree is in lowest terms.
    pub fn fractions_simplified(&self) -> bool {
        match self {
            ExprNode::Num(_) | ExprNode::Var(_) => true,
            ExprNode::Div(a, b) => {
                if let (Some(n), Some(d)) = (literal_int(a), literal_int(b)) {
                    use num_integer::Integer;
                    if d.is_zero() || d.is_negative() || !n.gcd(&d).is_one() || d.is_one() {
                        return false;
                    }
                }
                a.fractions_simplified() && b.fractions_simplified()
            }
            ExprNode::Neg(e) => e.fractions_simplified(),
            ExprNode::Add(items) | ExprNode::Mul(items) => items.iter().all(ExprNode::fractions_simplified),
            ExprNode::Sub(a, b) | ExprNode::Pow(a, b) => a.fractions_simplified() && b.fractions_simplified(),
        }
    }
}

fn literal_int(e: &ExprNode) -> Option<BigInt> {
    match e {
        ExprNode::Num(v) if v.is_integer() => Some(v.to_integer()),
        ExprNode::Neg(inner) => literal_int(inner).map(|v| -v),
        _ => None,
    }
}

fn fmt_rational(v: &BigRational, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if v.is_integer() {
        if v.is_negative() {
            write!(f, "({})", v.to_integer())
        } else {
            write!(f, "{}", v.to_integer())
        }
    } else if let Some(text) = terminating_decimal(v) {
        f.write_str(&text)
    } else {
        write!(f, "({}/{})", v.numer(), v.denom())
    }
}

/// Exact decimal text for rationals whose denominator is 2^a * 5^b.
fn terminating_decimal(v: &BigRational) -> Option<String> {
    let mut d = v.denom().clone();
    let (two, five) = (BigInt::from(2), BigInt::from(5));
    let (mut twos, mut fives) = (0usize, 0usize);
    while (&d % &two).is_zero() {
        d /= &two;
        twos += 1;
    }
    while (&d % &five).is_zero() {
        d /= &five;
        fives += 1;
    }
    if !d.is_one() || v.is_negative() {
        return None;
    }
    let places = twos.max(fives);
    let scaled = v.numer() * num_traits::pow(BigInt::from(10), places) / v.denom();
    let digits = format!("{:0>width$}", scaled.to_string(), width = places + 1);
    let (int, frac) = digits.split_at(digits.len() - places);
    Some(format!("{int}.{frac}"))
}

/// Fully parenthesized rendering that parses back to an equal tree.
impl fmt::Display for ExprNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |f: &mut fmt::Formatter<'_>, items: &[ExprNode], op: &str| -> fmt::Result {
            f.write_str("(")?;
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    f.write_str(op)?;
                }
                write!(f, "{item}")?;
            }
            f.write_str(")")
        };
        match self {
            ExprNode::Num(v) => fmt_rational(v, f),
            ExprNode::Var(v) => f.write_str(v),
            ExprNode::Neg(e) => write!(f, "(-{e})"),
            ExprNode::Add(items) => join(f, items, " + "),
            ExprNode::Mul(items) => join(f, items, " * "),
            ExprNode::Sub(a, b) => write!(f, "({a} - {b})"),
            ExprNode::Div(a, b) => write!(f, "({a} / {b})"),
            ExprNode::Pow(a, b) => write!(f, "({a} ^ {b})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(BigRational),
    Var(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(pos, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
            let mut int_part = String::new();
            let mut frac_part = String::new();
            let mut seen_dot = false;
            while let Some(&(_, d)) = chars.peek() {
                if d.is_ascii_digit() {
                    if seen_dot {
                        frac_part.push(d);
                    } else {
                        int_part.push(d);
                    }
                } else if d == '.' && !seen_dot {
                    seen_dot = true;
                } else {
                    break;
                }
                chars.next();
            }
            if int_part.is_empty() && frac_part.is_empty() {
                return Err(ParseError {
                    offset: pos,
                    message: "lone decimal point".into(),
                });
            }
            let digits = format!("{int_part}{frac_part}");
            let numer: BigInt = digits.parse().expect("ascii digits");
            let denom = num_traits::pow(BigInt::from(10), frac_part.len());
            out.push((pos, Tok::Num(BigRational::new(numer, denom))));
            continue;
        }
        let tok = match c {
            'a'..='z' | 'A'..='Z' => Tok::Var(c.to_string()),
            '+' => Tok::Plus,
            '-' | '\u{2212}' => Tok::Minus,
            '*' | '\u{00d7}' | '\u{00b7}' => Tok::Star,
            '/' | '\u{00f7}' => Tok::Slash,
            '^' => Tok::Caret,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            other => {
                return Err(ParseError {
                    offset: pos,
                    message: format!("unexpected character {other:?}"),
                })
            }
        };
        chars.next();
        out.push((pos, tok));
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(o, _)| *o)
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError {
            offset: self.offset(),
            message: message.into(),
        }
    }

    fn expr(&mut self) -> Result<ExprNode, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = ExprNode::add(lhs, rhs);
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = ExprNode::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<ExprNode, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    lhs = ExprNode::mul(lhs, rhs);
                }
                Some(Tok::Slash) => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    lhs = ExprNode::div(lhs, rhs);
                }
                Some(Tok::Num(_)) | Some(Tok::Var(_)) | Some(Tok::LParen) => {
                    let rhs = self.factor()?;
                    lhs = ExprNode::mul(lhs, rhs);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<ExprNode, ParseError> {
        if let Some(Tok::Minus) = self.peek() {
            self.pos += 1;
            let inner = self.factor()?;
            return Ok(ExprNode::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<ExprNode, ParseError> {
        let base = self.atom()?;
        if let Some(Tok::Caret) = self.peek() {
            self.pos += 1;
            let exp = self.factor()?;
            return Ok(ExprNode::pow(base, exp));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<ExprNode, ParseError> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(ExprNode::Num(v))
            }
            Some(Tok::Var(v)) => {
                self.pos += 1;
                Ok(ExprNode::Var(v))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.expr()?;
                match self.peek() {
                    Some(Tok::RParen) => {
                        self.pos += 1;
                        Ok(inner)
                    }
                    _ => Err(self.error("expected ')'")),
                }
            }
            Some(other) => Err(self.error(format!("unexpected token {other:?}"))),
            None => Err(self.error("unexpected end of input")),
        }
    }
}

pub fn parse_expr(text: &str) -> Result<ExprNode, ParseError> {
    let toks = tokenize(text)?;
    let mut parser = Parser {
        toks,
        pos: 0,
        end: text.len(),
    };
    let expr = parser.expr()?;
    if parser.pos != parser.toks.len() {
        return Err(parser.error("unexpected trailing input"));
    }
    Ok(expr)
}

/// Parses a constant numeric answer such as `0.5`, `1/2` or `-3`.
pub fn parse_number(text: &str) -> Option<BigRational> {
    parse_expr(text).ok()?.eval_constant().ok()
}
