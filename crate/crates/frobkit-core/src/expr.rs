//! A small infix expression language for scalar fields.
//!
//! Grammar: standard infix arithmetic over `+ - * / ^` with `^`
//! right-associative and binding tighter than unary minus, function
//! application by `name(args)`, and double-precision literals. The chart
//! coordinates are `x1, x2, x3` with aliases `x, y, z`.

use crate::error::{Error, Result};
use std::fmt;
use std::sync::Arc;

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
    Exp,
    Ln,
    Abs,
    Sqrt,
    Pow,
    Min,
    Max,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "abs" => Func::Abs,
            "sqrt" => Func::Sqrt,
            "pow" => Func::Pow,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    fn name(&self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
            Func::Pow => "pow",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    fn arity(&self) -> usize {
        match self {
            Func::Pow | Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

/// An immutable parsed expression. Evaluation is reentrant; expressions can
/// be shared freely across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    root: Arc<Node>,
    var_names: Arc<Vec<String>>,
}

impl Expression {
    /// Parse with the chart variables `x1, x2, x3` (aliases `x, y, z`).
    pub fn parse(text: &str) -> Result<Expression> {
        Self::parse_with_vars(text, &["x1", "x2", "x3"], true)
    }

    /// Parse with a caller-supplied variable list; `name[i]` maps to
    /// coordinate slot `i`. Used for one-variable moduli (`t`).
    pub fn parse_with_vars(text: &str, names: &[&str], chart_aliases: bool) -> Result<Expression> {
        let tokens = lex(text)?;
        let mut p = Parser {
            tokens,
            pos: 0,
            names,
            chart_aliases,
        };
        let root = p.parse_expr(0)?;
        match p.peek() {
            Token::End => {}
            tok => {
                return Err(Error::Syntax {
                    offset: p.offset(),
                    message: format!("unexpected `{tok}`"),
                })
            }
        }
        Ok(Expression {
            root: Arc::new(root),
            var_names: Arc::new(names.iter().map(|s| s.to_string()).collect()),
        })
    }

    /// Which coordinate slots the expression references.
    pub fn vars_used(&self) -> [bool; 3] {
        let mut used = [false; 3];
        collect_vars(&self.root, &mut used);
        used
    }

    pub fn max_var(&self) -> Option<usize> {
        let used = self.vars_used();
        (0..3).rev().find(|&i| used[i])
    }

    pub fn evaluate(&self, p: &[f64; 3]) -> Result<f64> {
        eval_node(&self.root, p, &self.var_names)
    }

    /// Canonical printed form; reparsing it evaluates identically.
    pub fn print(&self) -> String {
        format!("{self}")
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(f, &self.root, &self.var_names)
    }
}

fn collect_vars(node: &Node, used: &mut [bool; 3]) {
    match node {
        Node::Num(_) => {}
        Node::Var(i) => used[*i] = true,
        Node::Neg(a) => collect_vars(a, used),
        Node::Bin(_, a, b) => {
            collect_vars(a, used);
            collect_vars(b, used);
        }
        Node::Call(_, args) => {
            for a in args {
                collect_vars(a, used);
            }
        }
    }
}

fn write_node(f: &mut fmt::Formatter<'_>, node: &Node, names: &[String]) -> fmt::Result {
    match node {
        Node::Num(v) => write!(f, "{v}"),
        Node::Var(i) => write!(f, "{}", names.get(*i).map(|s| s.as_str()).unwrap_or("x?")),
        Node::Neg(a) => {
            write!(f, "(-")?;
            write_node(f, a, names)?;
            write!(f, ")")
        }
        Node::Bin(op, a, b) => {
            let sym = match op {
                BinOp::Add => "+",
                BinOp::Sub => "-",
                BinOp::Mul => "*",
                BinOp::Div => "/",
                BinOp::Pow => "^",
            };
            write!(f, "(")?;
            write_node(f, a, names)?;
            write!(f, " {sym} ")?;
            write_node(f, b, names)?;
            write!(f, ")")
        }
        Node::Call(func, args) => {
            write!(f, "{}(", func.name())?;
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write_node(f, a, names)?;
            }
            write!(f, ")")
        }
    }
}

fn singularity(node: &Node, p: &[f64; 3], names: &[String], message: &str) -> Error {
    struct Disp<'a>(&'a Node, &'a [String]);
    impl fmt::Display for Disp<'_> {
        fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            write_node(f, self.0, self.1)
        }
    }
    Error::Singularity {
        expr: Disp(node, names).to_string(),
        point: *p,
        message: message.to_string(),
    }
}

fn eval_node(node: &Node, p: &[f64; 3], names: &[String]) -> Result<f64> {
    let v = match node {
        Node::Num(v) => *v,
        Node::Var(i) => p[*i],
        Node::Neg(a) => -eval_node(a, p, names)?,
        Node::Bin(op, a, b) => {
            let va = eval_node(a, p, names)?;
            let vb = eval_node(b, p, names)?;
            match op {
                BinOp::Add => va + vb,
                BinOp::Sub => va - vb,
                BinOp::Mul => va * vb,
                BinOp::Div => {
                    if vb == 0.0 {
                        return Err(singularity(node, p, names, "division by zero"));
                    }
                    va / vb
                }
                BinOp::Pow => va.powf(vb),
            }
        }
        Node::Call(func, args) => {
            let a0 = eval_node(&args[0], p, names)?;
            match func {
                Func::Sin => a0.sin(),
                Func::Cos => a0.cos(),
                Func::Exp => a0.exp(),
                Func::Ln => {
                    if a0 <= 0.0 {
                        return Err(singularity(node, p, names, "ln of a non-positive value"));
                    }
                    a0.ln()
                }
                Func::Abs => a0.abs(),
                Func::Sqrt => {
                    if a0 < 0.0 {
                        return Err(singularity(node, p, names, "sqrt of a negative value"));
                    }
                    a0.sqrt()
                }
                Func::Pow => a0.powf(eval_node(&args[1], p, names)?),
                Func::Min => a0.min(eval_node(&args[1], p, names)?),
                Func::Max => a0.max(eval_node(&args[1], p, names)?),
            }
        }
    };
    if !v.is_finite() {
        return Err(singularity(node, p, names, "non-finite value"));
    }
    Ok(v)
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    End,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Num(v) => write!(f, "{v}"),
            Token::Ident(s) => write!(f, "{s}"),
            Token::Plus => write!(f, "+"),
            Token::Minus => write!(f, "-"),
            Token::Star => write!(f, "*"),
            Token::Slash => write!(f, "/"),
            Token::Caret => write!(f, "^"),
            Token::LParen => write!(f, "("),
            Token::RParen => write!(f, ")"),
            Token::Comma => write!(f, ","),
            Token::End => write!(f, "end of input"),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(Token, usize)>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'+' => {
                out.push((Token::Plus, i));
                i += 1;
            }
            b'-' => {
                out.push((Token::Minus, i));
                i += 1;
            }
            b'*' => {
                out.push((Token::Star, i));
                i += 1;
            }
            b'/' => {
                out.push((Token::Slash, i));
                i += 1;
            }
            b'^' => {
                out.push((Token::Caret, i));
                i += 1;
            }
            b'(' => {
                out.push((Token::LParen, i));
                i += 1;
            }
            b')' => {
                out.push((Token::RParen, i));
                i += 1;
            }
            b',' => {
                out.push((Token::Comma, i));
                i += 1;
            }
            b'0'..=b'9' | b'.' => {
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
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let s = &text[start..i];
                let v: f64 = s.parse().map_err(|_| Error::Syntax {
                    offset: start,
                    message: format!("malformed number `{s}`"),
                })?;
                out.push((Token::Num(v), start));
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                out.push((Token::Ident(text[start..i].to_string()), start));
            }
            _ => {
                return Err(Error::Syntax {
                    offset: i,
                    message: format!("unexpected byte `{}`", text[i..].chars().next().unwrap()),
                })
            }
        }
    }
    out.push((Token::End, bytes.len()));
    Ok(out)
}

// ---------------------------------------------------------------------------
// Pratt parser
// ---------------------------------------------------------------------------

struct Parser<'a> {
    tokens: Vec<(Token, usize)>,
    pos: usize,
    names: &'a [&'a str],
    chart_aliases: bool,
}

impl Parser<'_> {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos].0
    }

    fn offset(&self) -> usize {
        self.tokens[self.pos].1
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].0.clone();
        self.pos += 1;
        t
    }

    fn expect(&mut self, tok: Token) -> Result<()> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(Error::Syntax {
                offset: self.offset(),
                message: format!("expected `{tok}`, found `{}`", self.peek()),
            })
        }
    }

    fn resolve_var(&self, name: &str, offset: usize) -> Result<Node> {
        if let Some(i) = self.names.iter().position(|n| *n == name) {
            return Ok(Node::Var(i));
        }
        if self.chart_aliases {
            let alias = match name {
                "x" => Some(0),
                "y" => Some(1),
                "z" => Some(2),
                _ => None,
            };
            if let Some(i) = alias {
                return Ok(Node::Var(i));
            }
        }
        Err(Error::UnknownIdentifier {
            name: name.to_string(),
            offset,
        })
    }

    // Binding powers: + - (1), * / (3), unary - (5), ^ (7, right-assoc).
    fn parse_expr(&mut self, min_bp: u8) -> Result<Node> {
        let mut lhs = self.parse_prefix()?;
        loop {
            let (op, bp) = match self.peek() {
                Token::Plus => (BinOp::Add, 1),
                Token::Minus => (BinOp::Sub, 1),
                Token::Star => (BinOp::Mul, 3),
                Token::Slash => (BinOp::Div, 3),
                Token::Caret => (BinOp::Pow, 7),
                _ => break,
            };
            if bp < min_bp {
                break;
            }
            self.bump();
            // Right associativity for ^: recurse at the same binding power.
            let rhs = if op == BinOp::Pow {
                self.parse_expr(bp)?
            } else {
                self.parse_expr(bp + 1)?
            };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_prefix(&mut self) -> Result<Node> {
        let offset = self.offset();
        match self.bump() {
            Token::Num(v) => self.parse_power_tail(Node::Num(v)),
            Token::Minus => {
                let inner = self.parse_expr(5)?;
                Ok(Node::Neg(Box::new(inner)))
            }
            Token::Plus => self.parse_prefix(),
            Token::LParen => {
                let inner = self.parse_expr(0)?;
                self.expect(Token::RParen)?;
                self.parse_power_tail(inner)
            }
            Token::Ident(name) => {
                if *self.peek() == Token::LParen {
                    let func = Func::from_name(&name).ok_or_else(|| Error::UnknownIdentifier {
                        name: name.clone(),
                        offset,
                    })?;
                    self.bump();
                    let mut args = Vec::new();
                    if *self.peek() != Token::RParen {
                        loop {
                            args.push(self.parse_expr(0)?);
                            if *self.peek() == Token::Comma {
                                self.bump();
                            } else {
                                break;
                            }
                        }
                    }
                    self.expect(Token::RParen)?;
                    if args.len() != func.arity() {
                        return Err(Error::Arity {
                            name: func.name().to_string(),
                            expected: func.arity(),
                            got: args.len(),
                        });
                    }
                    self.parse_power_tail(Node::Call(func, args))
                } else {
                    let var = self.resolve_var(&name, offset)?;
                    self.parse_power_tail(var)
                }
            }
            tok => Err(Error::Syntax {
                offset,
                message: format!("unexpected `{tok}`"),
            }),
        }
    }

    // `^` binds tighter than unary minus, so -x^2 parses as -(x^2); the
    // prefix path handles the exponent chain directly on atoms.
    fn parse_power_tail(&mut self, base: Node) -> Result<Node> {
        if *self.peek() == Token::Caret {
            self.bump();
            let exp = self.parse_expr(7)?;
            Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exp)))
        } else {
            Ok(base)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(text: &str, p: [f64; 3]) -> f64 {
        Expression::parse(text).unwrap().evaluate(&p).unwrap()
    }

    #[test]
    fn linear_arithmetic() {
        assert_eq!(eval("x1 + 2*x2", [1.0, 3.0, 0.0]), 7.0);
    }

    #[test]
    fn power_is_sqrt() {
        assert_eq!(eval("x^0.5", [4.0, 0.0, 0.0]), 2.0);
    }

    #[test]
    fn mixed_aliases() {
        let e = Expression::parse("pow(x1,0.5)*z^2").unwrap();
        assert_eq!(e.vars_used(), [true, false, true]);
        assert_eq!(e.evaluate(&[4.0, 0.0, 3.0]).unwrap(), 18.0);
    }

    #[test]
    fn precedence_exact() {
        assert_eq!(eval("2+3*4^2", [0.0; 3]), 50.0);
    }

    #[test]
    fn caret_right_associative() {
        // 2^3^2 = 2^9 = 512
        assert_eq!(eval("2^3^2", [0.0; 3]), 512.0);
    }

    #[test]
    fn unary_minus_below_caret() {
        assert_eq!(eval("-2^2", [0.0; 3]), -4.0);
        assert_eq!(eval("(-2)^2", [0.0; 3]), 4.0);
    }

    #[test]
    fn ln_singularity() {
        let e = Expression::parse("ln(x1)").unwrap();
        let err = e.evaluate(&[0.0, 0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::Singularity { .. }));
    }

    #[test]
    fn division_by_zero_carries_subexpression() {
        let e = Expression::parse("1 + 1/x1").unwrap();
        match e.evaluate(&[0.0, 0.0, 0.0]).unwrap_err() {
            Error::Singularity { expr, .. } => assert!(expr.contains("/")),
            other => panic!("expected singularity, got {other:?}"),
        }
    }

    #[test]
    fn abs_negative() {
        assert_eq!(eval("abs(x1)", [-2.0, 0.0, 0.0]), 2.0);
    }

    #[test]
    fn pythagorean_identity() {
        for &t in &[0.0, 0.3, -1.7, 2.9, 14.2] {
            let v = eval("sin(x1)^2 + cos(x1)^2", [t, 0.0, 0.0]);
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn syntax_error_offset() {
        match Expression::parse("1 + * 2").unwrap_err() {
            Error::Syntax { offset, .. } => assert_eq!(offset, 4),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_identifier() {
        assert!(matches!(
            Expression::parse("foo + 1").unwrap_err(),
            Error::UnknownIdentifier { .. }
        ));
    }

    #[test]
    fn arity_mismatch() {
        assert!(matches!(
            Expression::parse("min(1)").unwrap_err(),
            Error::Arity { expected: 2, got: 1, .. }
        ));
    }

    #[test]
    fn univariate_modulus_variable() {
        let e = Expression::parse_with_vars("t^0.5", &["t"], false).unwrap();
        assert_eq!(e.evaluate(&[0.25, 0.0, 0.0]).unwrap(), 0.5);
        assert!(Expression::parse_with_vars("x1", &["t"], false).is_err());
    }

    #[test]
    fn whitespace_insensitive() {
        assert_eq!(eval("  1+ 2 *x1 ", [3.0, 0.0, 0.0]), 7.0);
        assert_eq!(eval("1+2*x1", [3.0, 0.0, 0.0]), 7.0);
    }

    #[test]
    fn print_round_trip_evaluates_identically() {
        let sources = [
            "x1 + 2*x2 - x3/4",
            "sin(x)*cos(y) + exp(-z^2)",
            "pow(abs(x1), 0.5) * max(x2, 1.5) - min(x3, -0.5)",
            "-x^2 + 2^-x2",
            "sqrt(abs(x1*x2))/(1 + x3^2)",
        ];
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 4.0 - 2.0
        };
        for src in sources {
            let a = Expression::parse(src).unwrap();
            let b = Expression::parse(&a.print()).unwrap();
            for _ in 0..100 {
                let p = [next(), next(), next()];
                let va = a.evaluate(&p).unwrap();
                let vb = b.evaluate(&p).unwrap();
                let scale = va.abs().max(1.0);
                assert!((va - vb).abs() <= 1e-12 * scale, "{src}: {va} vs {vb}");
            }
        }
    }
}
