//! A small expression language for dynamics, majorants and bound functions
//! in scenario files.
//!
//! Grammar, loosest to tightest binding:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?          (right-associative)
//! primary := number | ident | func '(' expr ')' | '(' expr ')'
//! ```
//!
//! Identifiers are resolved at parse time against the variable list the
//! caller supplies; `pi` is a constant. Functions: `sin cos exp abs tanh ln sign`.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Abs,
    Tanh,
    Ln,
    Sign,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "abs" => Func::Abs,
            "tanh" => Func::Tanh,
            "ln" => Func::Ln,
            "sign" => Func::Sign,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Abs => "abs",
            Func::Tanh => "tanh",
            Func::Ln => "ln",
            Func::Sign => "sign",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Call(Func, Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at position {position}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    /// Byte offset into the source text.
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("empty expression")]
    Empty,
    #[error("unexpected {0:?}")]
    Unexpected(String),
    #[error("unexpected end of input")]
    UnexpectedEnd,
    #[error("unknown identifier {0:?}")]
    UnknownIdentifier(String),
    #[error("{func} takes {expected} argument(s), got {found}")]
    Arity {
        func: String,
        expected: usize,
        found: usize,
    },
    #[error("malformed number {0:?}")]
    BadNumber(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("ln of non-positive argument {0}")]
    LogDomain(f64),
    #[error("division by zero")]
    DivisionByZero,
    #[error("{base}^{exponent} is not real")]
    NonRealPower { base: f64, exponent: f64 },
    #[error("expected {expected} variable values, got {found}")]
    VariableCount { expected: usize, found: usize },
}

/// A parsed expression together with the variable names it was resolved against.
#[derive(Debug, Clone)]
pub struct Expression {
    root: Node,
    names: Arc<[String]>,
}

impl PartialEq for Expression {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root && self.names == other.names
    }
}

impl Expression {
    pub fn parse<S: AsRef<str>>(text: &str, variables: &[S]) -> Result<Self, ParseError> {
        let names: Arc<[String]> = variables.iter().map(|s| s.as_ref().to_string()).collect();
        let tokens = lex(text)?;
        if tokens.is_empty() {
            return Err(ParseError {
                kind: ParseErrorKind::Empty,
                position: 0,
            });
        }
        let mut p = Parser {
            tokens: &tokens,
            pos: 0,
            names: &names,
            end: text.len(),
        };
        let root = p.expr()?;
        if let Some(tok) = p.peek() {
            return Err(ParseError {
                kind: ParseErrorKind::Unexpected(tok.tok.to_string()),
                position: tok.pos,
            });
        }
        Ok(Self { root, names })
    }

    pub fn from_node(root: Node, names: Arc<[String]>) -> Self {
        Self { root, names }
    }

    pub fn node(&self) -> &Node {
        &self.root
    }

    pub fn variables(&self) -> &[String] {
        &self.names
    }

    /// Indices of the variables that actually occur in the expression.
    pub fn used_variables(&self) -> Vec<usize> {
        fn walk(n: &Node, out: &mut Vec<usize>) {
            match n {
                Node::Num(_) => {}
                Node::Var(i) => {
                    if !out.contains(i) {
                        out.push(*i)
                    }
                }
                Node::Neg(a) | Node::Call(_, a) => walk(a, out),
                Node::Bin(_, a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out.sort_unstable();
        out
    }

    /// Evaluates with `values[i]` bound to variable `i`.
    pub fn eval(&self, values: &[f64]) -> Result<f64, EvalError> {
        if values.len() < self.names.len() {
            return Err(EvalError::VariableCount {
                expected: self.names.len(),
                found: values.len(),
            });
        }
        eval_node(&self.root, values)
    }

    /// Symbolic partial derivative with respect to variable `var`.
    pub fn derivative(&self, var: usize) -> Expression {
        Expression {
            root: diff(&self.root, var),
            names: self.names.clone(),
        }
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(f, &self.root, &self.names, 0)
    }
}

fn eval_node(n: &Node, v: &[f64]) -> Result<f64, EvalError> {
    Ok(match n {
        Node::Num(x) => *x,
        Node::Var(i) => v[*i],
        Node::Neg(a) => -eval_node(a, v)?,
        Node::Call(func, a) => {
            let x = eval_node(a, v)?;
            match func {
                Func::Sin => x.sin(),
                Func::Cos => x.cos(),
                Func::Exp => x.exp(),
                Func::Abs => x.abs(),
                Func::Tanh => x.tanh(),
                Func::Ln => {
                    if x <= 0.0 {
                        return Err(EvalError::LogDomain(x));
                    }
                    x.ln()
                }
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
        Node::Bin(op, a, b) => {
            let x = eval_node(a, v)?;
            let y = eval_node(b, v)?;
            match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => {
                    if y == 0.0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    x / y
                }
                BinOp::Pow => {
                    if y.fract() == 0.0 && y.abs() <= i32::MAX as f64 {
                        if x == 0.0 && y < 0.0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        x.powi(y as i32)
                    } else {
                        if x < 0.0 {
                            return Err(EvalError::NonRealPower {
                                base: x,
                                exponent: y,
                            });
                        }
                        x.powf(y)
                    }
                }
            }
        }
    })
}

// ---------------------------------------------------------------------------
// derivative

fn num(x: f64) -> Node {
    Node::Num(x)
}

fn is_num(n: &Node, x: f64) -> bool {
    matches!(n, Node::Num(y) if *y == x)
}

fn add(a: Node, b: Node) -> Node {
    if is_num(&a, 0.0) {
        b
    } else if is_num(&b, 0.0) {
        a
    } else {
        Node::Bin(BinOp::Add, Box::new(a), Box::new(b))
    }
}

fn sub(a: Node, b: Node) -> Node {
    if is_num(&b, 0.0) {
        a
    } else if is_num(&a, 0.0) {
        neg(b)
    } else {
        Node::Bin(BinOp::Sub, Box::new(a), Box::new(b))
    }
}

fn mul(a: Node, b: Node) -> Node {
    if is_num(&a, 0.0) || is_num(&b, 0.0) {
        num(0.0)
    } else if is_num(&a, 1.0) {
        b
    } else if is_num(&b, 1.0) {
        a
    } else {
        Node::Bin(BinOp::Mul, Box::new(a), Box::new(b))
    }
}

fn div(a: Node, b: Node) -> Node {
    if is_num(&a, 0.0) {
        num(0.0)
    } else {
        Node::Bin(BinOp::Div, Box::new(a), Box::new(b))
    }
}

fn neg(a: Node) -> Node {
    match a {
        Node::Num(0.0) => num(0.0),
        Node::Neg(inner) => *inner,
        other => Node::Neg(Box::new(other)),
    }
}

fn call(f: Func, a: Node) -> Node {
    Node::Call(f, Box::new(a))
}

fn pow(a: Node, b: Node) -> Node {
    Node::Bin(BinOp::Pow, Box::new(a), Box::new(b))
}

fn depends_on(n: &Node, var: usize) -> bool {
    match n {
        Node::Num(_) => false,
        Node::Var(i) => *i == var,
        Node::Neg(a) | Node::Call(_, a) => depends_on(a, var),
        Node::Bin(_, a, b) => depends_on(a, var) || depends_on(b, var),
    }
}

fn diff(n: &Node, var: usize) -> Node {
    if !depends_on(n, var) {
        return num(0.0);
    }
    match n {
        Node::Num(_) => num(0.0),
        Node::Var(_) => num(1.0),
        Node::Neg(a) => neg(diff(a, var)),
        Node::Call(f, a) => {
            let inner = diff(a, var);
            let a = (**a).clone();
            let outer = match f {
                Func::Sin => call(Func::Cos, a),
                Func::Cos => neg(call(Func::Sin, a)),
                Func::Exp => call(Func::Exp, a),
                Func::Abs => call(Func::Sign, a),
                Func::Tanh => sub(num(1.0), pow(call(Func::Tanh, a), num(2.0))),
                Func::Ln => div(num(1.0), a),
                Func::Sign => num(0.0),
            };
            mul(outer, inner)
        }
        Node::Bin(op, a, b) => {
            let da = diff(a, var);
            let db = diff(b, var);
            let (a, b) = ((**a).clone(), (**b).clone());
            match op {
                BinOp::Add => add(da, db),
                BinOp::Sub => sub(da, db),
                BinOp::Mul => add(mul(da, b.clone()), mul(a, db)),
                BinOp::Div => div(
                    sub(mul(da, b.clone()), mul(a, db)),
                    pow(b, num(2.0)),
                ),
                BinOp::Pow => {
                    if !depends_on(&b, var) {
                        // b * a^(b-1) * a'
                        let lowered = match &b {
                            Node::Num(k) => num(k - 1.0),
                            _ => sub(b.clone(), num(1.0)),
                        };
                        mul(mul(b, pow(a, lowered)), da)
                    } else {
                        // a^b * (b' ln a + b a'/a)
                        let whole = pow(a.clone(), b.clone());
                        let term = add(
                            mul(db, call(Func::Ln, a.clone())),
                            div(mul(b, da), a),
                        );
                        mul(whole, term)
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// printing

const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_NEG: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

fn prec(n: &Node) -> u8 {
    match n {
        Node::Num(x) if x.is_sign_negative() => PREC_NEG,
        Node::Num(_) | Node::Var(_) | Node::Call(..) => PREC_ATOM,
        Node::Neg(_) => PREC_NEG,
        Node::Bin(BinOp::Add | BinOp::Sub, ..) => PREC_ADD,
        Node::Bin(BinOp::Mul | BinOp::Div, ..) => PREC_MUL,
        Node::Bin(BinOp::Pow, ..) => PREC_POW,
    }
}

fn write_node(f: &mut fmt::Formatter<'_>, n: &Node, names: &[String], min: u8) -> fmt::Result {
    let paren = prec(n) < min;
    if paren {
        f.write_str("(")?;
    }
    match n {
        Node::Num(x) => write!(f, "{x}")?,
        Node::Var(i) => f.write_str(&names[*i])?,
        Node::Neg(a) => {
            f.write_str("-")?;
            write_node(f, a, names, PREC_NEG)?;
        }
        Node::Call(func, a) => {
            write!(f, "{}(", func.name())?;
            write_node(f, a, names, 0)?;
            f.write_str(")")?;
        }
        Node::Bin(op, a, b) => {
            let (lmin, rmin) = match op {
                BinOp::Add | BinOp::Sub => (PREC_ADD, PREC_MUL),
                BinOp::Mul | BinOp::Div => (PREC_MUL, PREC_NEG),
                BinOp::Pow => (PREC_ATOM, PREC_NEG),
            };
            write_node(f, a, names, lmin)?;
            if *op == BinOp::Pow {
                f.write_str("^")?;
            } else {
                write!(f, " {} ", op.symbol())?;
            }
            write_node(f, b, names, rmin)?;
        }
    }
    if paren {
        f.write_str(")")?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// lexing and parsing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(x) => write!(f, "{x}"),
            Tok::Ident(s) => f.write_str(s),
            Tok::Op(c) => write!(f, "{c}"),
        }
    }
}

struct Spanned {
    tok: Tok,
    pos: usize,
}

fn lex(text: &str) -> Result<Vec<Spanned>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let s = &text[start..i];
            let v: f64 = s.parse().map_err(|_| ParseError {
                kind: ParseErrorKind::BadNumber(s.to_string()),
                position: start,
            })?;
            out.push(Spanned {
                tok: Tok::Num(v),
                pos: start,
            });
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Spanned {
                tok: Tok::Ident(text[start..i].to_string()),
                pos: start,
            });
        } else if "+-*/^(),".contains(c) {
            out.push(Spanned {
                tok: Tok::Op(c),
                pos: i,
            });
            i += 1;
        } else {
            let ch = text[i..].chars().next().unwrap_or(c);
            return Err(ParseError {
                kind: ParseErrorKind::Unexpected(ch.to_string()),
                position: i,
            });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: &'a [Spanned],
    pos: usize,
    names: &'a [String],
    end: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Spanned> {
        self.tokens.get(self.pos)
    }

    fn peek_op(&self) -> Option<char> {
        match self.peek() {
            Some(Spanned { tok: Tok::Op(c), .. }) => Some(*c),
            _ => None,
        }
    }

    fn here(&self) -> usize {
        self.peek().map_or(self.end, |t| t.pos)
    }

    fn fail<T>(&self) -> Result<T, ParseError> {
        Err(match self.peek() {
            Some(t) => ParseError {
                kind: ParseErrorKind::Unexpected(t.tok.to_string()),
                position: t.pos,
            },
            None => ParseError {
                kind: ParseErrorKind::UnexpectedEnd,
                position: self.end,
            },
        })
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.peek_op() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            self.fail()
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        while let Some(c @ ('+' | '-')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(c @ ('*' | '/')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.unary()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        if self.peek_op() == Some('-') {
            self.pos += 1;
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.primary()?;
        if self.peek_op() == Some('^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node, ParseError> {
        let Some(tok) = self.peek() else {
            return self.fail();
        };
        let pos = tok.pos;
        match &tok.tok {
            Tok::Num(x) => {
                let x = *x;
                self.pos += 1;
                Ok(Node::Num(x))
            }
            Tok::Op('(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(')')?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                let name = name.clone();
                self.pos += 1;
                if let Some(func) = Func::from_name(&name) {
                    return self.call(func, &name, pos);
                }
                if let Some(i) = self.names.iter().position(|n| *n == name) {
                    return Ok(Node::Var(i));
                }
                if name == "pi" {
                    return Ok(Node::Num(std::f64::consts::PI));
                }
                Err(ParseError {
                    kind: ParseErrorKind::UnknownIdentifier(name),
                    position: pos,
                })
            }
            Tok::Op(_) => self.fail(),
        }
    }

    fn call(&mut self, func: Func, name: &str, pos: usize) -> Result<Node, ParseError> {
        if self.peek_op() != Some('(') {
            return Err(ParseError {
                kind: ParseErrorKind::Arity {
                    func: name.to_string(),
                    expected: 1,
                    found: 0,
                },
                position: pos,
            });
        }
        self.pos += 1;
        if self.peek_op() == Some(')') {
            return Err(ParseError {
                kind: ParseErrorKind::Arity {
                    func: name.to_string(),
                    expected: 1,
                    found: 0,
                },
                position: pos,
            });
        }
        let mut args = vec![self.expr()?];
        while self.peek_op() == Some(',') {
            self.pos += 1;
            args.push(self.expr()?);
        }
        let close = self.here();
        self.expect(')')?;
        if args.len() != 1 {
            return Err(ParseError {
                kind: ParseErrorKind::Arity {
                    func: name.to_string(),
                    expected: 1,
                    found: args.len(),
                },
                position: close.min(pos),
            });
        }
        Ok(Node::Call(func, Box::new(args.pop().unwrap())))
    }
}
