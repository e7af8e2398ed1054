//! Small arithmetic expression grammar over the space-time variables
//! `x1..xn` and `t`: numbers, `+ - * / ^`, parentheses, unary minus, the
//! functions `sin`, `cos`, `exp`, `sqrt`, and the constant `pi`. Enough to
//! define manufactured solutions in configuration files.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
}

#[derive(Debug, Clone)]
enum Node {
    Num(f64),
    /// Variable slot: `0..dim` are `x1..xn`, `dim` is `t`.
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// A parsed expression over `dim` spatial variables plus time.
#[derive(Debug, Clone)]
pub struct Expr {
    root: Node,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at byte {}: {}", self.position, self.message)
    }
}

impl std::error::Error for ParseError {}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    dim: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, message: impl Into<String>) -> ParseError {
        ParseError {
            position: self.pos,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expression(&mut self) -> Result<Node, ParseError> {
        let mut node = self.term()?;
        loop {
            if self.eat(b'+') {
                node = Node::Add(Box::new(node), Box::new(self.term()?));
            } else if self.eat(b'-') {
                node = Node::Sub(Box::new(node), Box::new(self.term()?));
            } else {
                return Ok(node);
            }
        }
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut node = self.unary()?;
        loop {
            if self.eat(b'*') {
                node = Node::Mul(Box::new(node), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                node = Node::Div(Box::new(node), Box::new(self.unary()?));
            } else {
                return Ok(node);
            }
        }
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        if self.eat(b'-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.primary()?;
        if self.eat(b'^') {
            // Right associative; the exponent may itself carry a sign.
            let exponent = self.unary()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node, ParseError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expression()?;
                if !self.eat(b')') {
                    return Err(self.err("expected ')'"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
            Some(c) => Err(self.err(format!("unexpected character '{}'", c as char))),
            None => Err(self.err("unexpected end of expression")),
        }
    }

    fn number(&mut self) -> Result<Node, ParseError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.')
        {
            self.pos += 1;
        }
        // Scientific notation tail, e.g. 1.5e-3.
        if self.pos < self.src.len() && (self.src[self.pos] | 0x20) == b'e' {
            let mark = self.pos;
            self.pos += 1;
            if self.pos < self.src.len()
                && (self.src[self.pos] == b'+' || self.src[self.pos] == b'-')
            {
                self.pos += 1;
            }
            if self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            } else {
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse::<f64>()
            .map(Node::Num)
            .map_err(|_| self.err(format!("bad number '{text}'")))
    }

    fn identifier(&mut self) -> Result<Node, ParseError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        match name {
            "pi" => return Ok(Node::Num(std::f64::consts::PI)),
            "t" => return Ok(Node::Var(self.dim)),
            "x" if self.dim == 1 => return Ok(Node::Var(0)),
            _ => {}
        }
        if let Some(rest) = name.strip_prefix('x') {
            if let Ok(k) = rest.parse::<usize>() {
                if k >= 1 && k <= self.dim {
                    return Ok(Node::Var(k - 1));
                }
                return Err(self.err(format!(
                    "variable '{name}' out of range for {} spatial dimensions",
                    self.dim
                )));
            }
        }
        let func = match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            _ => return Err(self.err(format!("unknown identifier '{name}'"))),
        };
        if !self.eat(b'(') {
            return Err(self.err(format!("function '{name}' needs parentheses")));
        }
        let arg = self.expression()?;
        if !self.eat(b')') {
            return Err(self.err("expected ')'"));
        }
        Ok(Node::Call(func, Box::new(arg)))
    }
}

impl Expr {
    /// Parses `src` as an expression over `dim` spatial variables plus `t`.
    pub fn parse(src: &str, dim: usize) -> Result<Self, ParseError> {
        let mut parser = Parser {
            src: src.as_bytes(),
            pos: 0,
            dim,
        };
        let root = parser.expression()?;
        parser.skip_ws();
        if parser.pos != parser.src.len() {
            return Err(parser.err("trailing input"));
        }
        Ok(Expr { root })
    }

    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        eval_node(&self.root, x, t)
    }
}

fn eval_node(node: &Node, x: &[f64], t: f64) -> f64 {
    match node {
        Node::Num(v) => *v,
        Node::Var(slot) => {
            if *slot < x.len() {
                x[*slot]
            } else {
                t
            }
        }
        Node::Neg(a) => -eval_node(a, x, t),
        Node::Add(a, b) => eval_node(a, x, t) + eval_node(b, x, t),
        Node::Sub(a, b) => eval_node(a, x, t) - eval_node(b, x, t),
        Node::Mul(a, b) => eval_node(a, x, t) * eval_node(b, x, t),
        Node::Div(a, b) => eval_node(a, x, t) / eval_node(b, x, t),
        Node::Pow(a, b) => {
            let base = eval_node(a, x, t);
            let exp = eval_node(b, x, t);
            if exp.fract() == 0.0 && exp.abs() <= 64.0 {
                base.powi(exp as i32)
            } else {
                base.powf(exp)
            }
        }
        Node::Call(f, a) => {
            let v = eval_node(a, x, t);
            match f {
                Func::Sin => v.sin(),
                Func::Cos => v.cos(),
                Func::Exp => v.exp(),
                Func::Sqrt => v.sqrt(),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn parses_polynomials_and_functions() {
        let e = Expr::parse("sin(pi*x1)*cos(pi*t) + x2^3 - 2*x1*x2", 2).unwrap();
        let v = e.eval(&[0.5, 0.25], 1.0);
        let expected = (PI * 0.5).sin() * PI.cos() + 0.25f64.powi(3) - 2.0 * 0.5 * 0.25;
        assert!((v - expected).abs() < 1e-15);
    }

    #[test]
    fn precedence_and_unary_minus() {
        let e = Expr::parse("-2^2 + 3*4", 1).unwrap();
        // Unary minus binds the whole power: -(2^2) + 12 = 8.
        assert_eq!(e.eval(&[0.0], 0.0), 8.0);
        let e = Expr::parse("2*(1 + 3)^2", 1).unwrap();
        assert_eq!(e.eval(&[0.0], 0.0), 32.0);
    }

    #[test]
    fn scientific_numbers() {
        let e = Expr::parse("1.5e-3 * x", 1).unwrap();
        assert!((e.eval(&[2.0], 0.0) - 3e-3).abs() < 1e-18);
    }

    #[test]
    fn rejects_unknown_identifiers_and_bad_syntax() {
        assert!(Expr::parse("foo(x1)", 1).is_err());
        assert!(Expr::parse("x3", 2).is_err());
        assert!(Expr::parse("1 +", 1).is_err());
        assert!(Expr::parse("(1", 1).is_err());
        assert!(Expr::parse("1 2", 1).is_err());
    }

    #[test]
    fn time_variable_slot() {
        let e = Expr::parse("t*t - x1", 3).unwrap();
        assert_eq!(e.eval(&[1.0, 0.0, 0.0], 3.0), 8.0);
    }
}
