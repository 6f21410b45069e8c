//! Prefix grammar for functionals and separator functions.
//!
//! ```text
//! expr   := number | var | call
//! var    := "x" digits                      (0-based coordinate)
//! call   := name "(" expr ("," expr)* ")"
//! name   := add | sub | mul | neg | pow | sq | exp | sin | cos | max | min | abs
//! ```
//!
//! `add`, `mul`, `max`, `min` take one or more arguments; `sub` takes two;
//! `pow(e, p)` needs a literal integer `p >= 1`; the others take one.

use crate::error::{Error, Result};
use crate::functionals::expr::{FunctionalExpr, Node, UnaryFn};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64, String),
    LParen,
    RParen,
    Comma,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> Result<Vec<(Tok, usize)>> {
        let mut lx = Lexer { src, pos: 0 };
        let mut out = Vec::new();
        while let Some(t) = lx.next_tok()? {
            out.push(t);
        }
        Ok(out)
    }

    fn next_tok(&mut self) -> Result<Option<(Tok, usize)>> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if self.pos >= bytes.len() {
            return Ok(None);
        }
        let start = self.pos;
        let c = bytes[self.pos] as char;
        let tok = match c {
            '(' => {
                self.pos += 1;
                Tok::LParen
            }
            ')' => {
                self.pos += 1;
                Tok::RParen
            }
            ',' => {
                self.pos += 1;
                Tok::Comma
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                while self.pos < bytes.len()
                    && (bytes[self.pos].is_ascii_alphanumeric() || bytes[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                Tok::Ident(self.src[start..self.pos].to_string())
            }
            c if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' => {
                self.pos += 1;
                while self.pos < bytes.len() {
                    let b = bytes[self.pos];
                    let prev = bytes[self.pos - 1];
                    let exp_sign = (b == b'-' || b == b'+') && (prev == b'e' || prev == b'E');
                    if b.is_ascii_digit() || b == b'.' || b == b'e' || b == b'E' || exp_sign {
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
                let text = &self.src[start..self.pos];
                let v: f64 = text.parse().map_err(|_| Error::Parse {
                    token: text.to_string(),
                    position: start,
                    message: "malformed number".into(),
                })?;
                Tok::Num(v, text.to_string())
            }
            _ => {
                let end = self.src[start..]
                    .char_indices()
                    .nth(1)
                    .map_or(self.src.len(), |(i, _)| start + i);
                return Err(Error::Parse {
                    token: self.src[start..end].to_string(),
                    position: start,
                    message: "unexpected character".into(),
                });
            }
        };
        Ok(Some((tok, start)))
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
    end: usize,
}

fn tok_text(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => s.clone(),
        Tok::Num(_, s) => s.clone(),
        Tok::LParen => "(".into(),
        Tok::RParen => ")".into(),
        Tok::Comma => ",".into(),
    }
}

impl Parser {
    fn err<X>(&self, message: &str) -> Result<X> {
        let (token, position) = match self.toks.get(self.at) {
            Some((t, p)) => (tok_text(t), *p),
            None => ("<end of input>".to_string(), self.end),
        };
        Err(Error::Parse {
            token,
            position,
            message: message.to_string(),
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|t| &t.0)
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<()> {
        if self.peek() == Some(&want) {
            self.at += 1;
            Ok(())
        } else {
            self.err(&format!("expected {what}"))
        }
    }

    fn expr<T: Scalar>(&mut self) -> Result<Node<T>> {
        match self.peek().cloned() {
            Some(Tok::Num(v, _)) => {
                self.at += 1;
                Ok(Node::Const(T::lit(v)))
            }
            Some(Tok::Ident(name)) => {
                if self.toks.get(self.at + 1).map(|t| &t.0) == Some(&Tok::LParen) {
                    self.call(&name)
                } else if let Some(idx) = name.strip_prefix('x').and_then(|d| d.parse().ok()) {
                    self.at += 1;
                    Ok(Node::Coord(idx))
                } else {
                    self.err("unknown variable (coordinates are x0, x1, ...)")
                }
            }
            _ => self.err("expected a number, variable or function call"),
        }
    }

    fn call<T: Scalar>(&mut self, name: &str) -> Result<Node<T>> {
        let name_at = self.at;
        self.at += 2;
        let mut args = vec![self.expr::<T>()?];
        while self.peek() == Some(&Tok::Comma) {
            self.at += 1;
            args.push(self.expr::<T>()?);
        }
        self.expect(Tok::RParen, "`)` or `,`")?;
        let arity_err = |p: &mut Parser, want: &str| -> Result<Node<T>> {
            p.at = name_at;
            p.err(&format!("`{name}` takes {want}"))
        };
        let one = |args: Vec<Node<T>>| Box::new(args.into_iter().next().unwrap());
        match name {
            "add" => Ok(Node::Sum(args)),
            "mul" => Ok(Node::Product(args)),
            "max" => Ok(Node::Max(args)),
            "min" => Ok(Node::Min(args)),
            "sub" => {
                if args.len() != 2 {
                    return arity_err(self, "two arguments");
                }
                let mut it = args.into_iter();
                let a = it.next().unwrap();
                let b = it.next().unwrap();
                Ok(Node::Sum(vec![a, Node::Product(vec![Node::Const(-T::one()), b])]))
            }
            "neg" | "sq" | "exp" | "sin" | "cos" | "abs" => {
                if args.len() != 1 {
                    return arity_err(self, "one argument");
                }
                let a = one(args);
                Ok(match name {
                    "neg" => Node::Product(vec![Node::Const(-T::one()), *a]),
                    "sq" => Node::Pow(a, 2),
                    "exp" => Node::Unary(UnaryFn::Exp, a),
                    "sin" => Node::Unary(UnaryFn::Sin, a),
                    "cos" => Node::Unary(UnaryFn::Cos, a),
                    _ => Node::Abs(a),
                })
            }
            "pow" => {
                if args.len() != 2 {
                    return arity_err(self, "two arguments");
                }
                let mut it = args.into_iter();
                let base = it.next().unwrap();
                match it.next().unwrap() {
                    Node::Const(p) => {
                        let pf = p.to_f64_lossy();
                        if pf >= 1.0 && pf.fract() == 0.0 && pf <= u32::MAX as f64 {
                            Ok(Node::Pow(Box::new(base), pf as u32))
                        } else {
                            arity_err(self, "an integer exponent >= 1")
                        }
                    }
                    _ => arity_err(self, "a literal integer exponent"),
                }
            }
            _ => {
                self.at = name_at;
                self.err("unknown function")
            }
        }
    }
}

/// Parses an expression over `dim` coordinates.
pub fn parse_expr<T: Scalar>(src: &str, dim: usize) -> Result<FunctionalExpr<T>> {
    let toks = Lexer::tokens(src)?;
    let mut p = Parser {
        toks,
        at: 0,
        end: src.len(),
    };
    let root = p.expr::<T>()?;
    if p.at != p.toks.len() {
        return p.err("trailing input");
    }
    FunctionalExpr::new(root, dim).map_err(|e| match e {
        Error::Usage(m) => Error::Parse {
            token: src.to_string(),
            position: 0,
            message: m,
        },
        other => other,
    })
}

/// Parses a comma-separated point such as `-1,0`.
pub fn parse_point<T: Scalar>(src: &str) -> Result<crate::functionals::Point<T>> {
    let mut coords = Vec::new();
    let mut offset = 0;
    for part in src.split(',') {
        let t = part.trim();
        let v: f64 = t.parse().map_err(|_| Error::Parse {
            token: t.to_string(),
            position: offset,
            message: "malformed coordinate".into(),
        })?;
        coords.push(T::lit(v));
        offset += part.len() + 1;
    }
    crate::functionals::Point::new(coords)
}
