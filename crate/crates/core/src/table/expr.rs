//! Row-wise arithmetic expressions for `compute_column`.
//!
//! Grammar: `+ - * /`, unary minus, parentheses, numeric literals and column
//! references. Column names that are not plain identifiers can be quoted
//! with backticks, double quotes or square brackets.

use super::{CellValue, Result, Table, TableError};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Int(i64),
    Float(f64),
    Column(String),
    Neg(Box<Expr>),
    Binary(Box<Expr>, BinOp, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(String),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn lex(src: &str) -> Result<Vec<Token>> {
    let err = |m: String| TableError::ExpressionParse(m);
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '+' | '-' | '*' | '/' => {
                out.push(Token::Op(c));
                i += 1;
            }
            '(' => {
                out.push(Token::LParen);
                i += 1;
            }
            ')' => {
                out.push(Token::RParen);
                i += 1;
            }
            '`' | '"' | '[' => {
                let close = if c == '[' { ']' } else { c };
                let start = i + 1;
                let end = chars[start..]
                    .iter()
                    .position(|&x| x == close)
                    .ok_or_else(|| err(format!("unterminated quoted column starting at {i}")))?;
                out.push(Token::Ident(chars[start..start + end].iter().collect()));
                i = start + end + 1;
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                out.push(Token::Num(chars[start..i].iter().collect()));
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Token::Ident(chars[start..i].iter().collect()));
            }
            other => return Err(err(format!("unexpected character `{other}`"))),
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(Token::Op(c @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Expr::Binary(Box::new(lhs), op, Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(Token::Op(c @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Expr::Binary(Box::new(lhs), op, Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if let Some(Token::Op('-')) = self.peek() {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if let Some(Token::Op('+')) = self.peek() {
            self.pos += 1;
            return self.unary();
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.next() {
            Some(Token::Num(s)) => {
                if let Ok(i) = s.parse::<i64>() {
                    Ok(Expr::Int(i))
                } else {
                    s.parse::<f64>()
                        .map(Expr::Float)
                        .map_err(|_| TableError::ExpressionParse(format!("bad number `{s}`")))
                }
            }
            Some(Token::Ident(name)) => Ok(Expr::Column(name)),
            Some(Token::LParen) => {
                let e = self.expr()?;
                match self.next() {
                    Some(Token::RParen) => Ok(e),
                    _ => Err(TableError::ExpressionParse("missing `)`".into())),
                }
            }
            Some(t) => Err(TableError::ExpressionParse(format!("unexpected token {t:?}"))),
            None => Err(TableError::ExpressionParse("unexpected end of expression".into())),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Num {
    I(i64),
    F(f64),
}

impl Num {
    fn f(self) -> f64 {
        match self {
            Num::I(i) => i as f64,
            Num::F(f) => f,
        }
    }
}

/// Expression with column references resolved to indices.
pub(crate) struct BoundExpr {
    expr: Expr,
    indices: Vec<(String, usize)>,
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = lex(src)?;
        if tokens.is_empty() {
            return Err(TableError::ExpressionParse("empty expression".into()));
        }
        let mut p = Parser { tokens, pos: 0 };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(TableError::ExpressionParse(format!(
                "trailing input at token {}",
                p.pos
            )));
        }
        Ok(e)
    }

    fn columns<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Column(c) => out.push(c),
            Expr::Neg(e) => e.columns(out),
            Expr::Binary(a, _, b) => {
                a.columns(out);
                b.columns(out);
            }
            Expr::Int(_) | Expr::Float(_) => {}
        }
    }

    pub(crate) fn bind(&self, table: &Table) -> Result<BoundExpr> {
        let mut cols = Vec::new();
        self.columns(&mut cols);
        let indices = cols
            .into_iter()
            .map(|c| table.column_index(c).map(|i| (c.to_string(), i)))
            .collect::<Result<_>>()?;
        Ok(BoundExpr { expr: self.clone(), indices })
    }
}

impl BoundExpr {
    fn lookup(&self, name: &str) -> usize {
        self.indices.iter().find(|(n, _)| n == name).map(|(_, i)| *i).expect("bound column")
    }

    fn eval_num(&self, e: &Expr, row: &[CellValue]) -> Option<Num> {
        match e {
            Expr::Int(i) => Some(Num::I(*i)),
            Expr::Float(f) => Some(Num::F(*f)),
            Expr::Column(c) => match &row[self.lookup(c)] {
                CellValue::Int(i) => Some(Num::I(*i)),
                other => other.as_number().map(Num::F),
            },
            Expr::Neg(inner) => match self.eval_num(inner, row)? {
                Num::I(i) => Some(i.checked_neg().map(Num::I).unwrap_or(Num::F(-(i as f64)))),
                Num::F(f) => Some(Num::F(-f)),
            },
            Expr::Binary(a, op, b) => {
                let x = self.eval_num(a, row)?;
                let y = self.eval_num(b, row)?;
                if let (Num::I(p), Num::I(q)) = (x, y) {
                    let exact = match op {
                        BinOp::Add => p.checked_add(q),
                        BinOp::Sub => p.checked_sub(q),
                        BinOp::Mul => p.checked_mul(q),
                        BinOp::Div => None,
                    };
                    if let Some(v) = exact {
                        return Some(Num::I(v));
                    }
                }
                let (p, q) = (x.f(), y.f());
                let v = match op {
                    BinOp::Add => p + q,
                    BinOp::Sub => p - q,
                    BinOp::Mul => p * q,
                    BinOp::Div => {
                        if q == 0.0 {
                            return None;
                        }
                        p / q
                    }
                };
                v.is_finite().then_some(Num::F(v))
            }
        }
    }

    pub(crate) fn eval(&self, row: &[CellValue]) -> CellValue {
        match self.eval_num(&self.expr, row) {
            Some(Num::I(i)) => CellValue::Int(i),
            Some(Num::F(f)) => CellValue::float(f),
            None => CellValue::Null,
        }
    }
}
