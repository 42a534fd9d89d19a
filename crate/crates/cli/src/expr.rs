//! Weight expressions: radial functions of `s` written in a small infix
//! language.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := '-' factor | number | 's' | func '(' args ')' | '(' expr ')'
//! func   := log | exp | min | max | tanh | sech | fs | lse
//! lse    := slope ':' intercept (',' slope ':' intercept)* ';' tau
//! ```
//!
//! `fs(a) = a log(1 + e^s)` and `lse(a1:b1, ...; tau) = tau log sum exp((a_i s + b_i)/tau)`.
//! Expressions evaluate with their first two derivatives, so potentials
//! written this way carry exact curvature.

use std::fmt;

use kqlab_core::families::{logistic, sech, softplus, SoftMax};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Log,
    Exp,
    Min,
    Max,
    Tanh,
    Sech,
    Fs,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "log" => Self::Log,
            "exp" => Self::Exp,
            "min" => Self::Min,
            "max" => Self::Max,
            "tanh" => Self::Tanh,
            "sech" => Self::Sech,
            "fs" => Self::Fs,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Self::Log => "log",
            Self::Exp => "exp",
            Self::Min => "min",
            Self::Max => "max",
            Self::Tanh => "tanh",
            Self::Sech => "sech",
            Self::Fs => "fs",
        }
    }

    fn arity(self) -> usize {
        match self {
            Self::Min | Self::Max => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            Self::Add => '+',
            Self::Sub => '-',
            Self::Mul => '*',
            Self::Div => '/',
        }
    }

    fn precedence(self) -> u8 {
        match self {
            Self::Add | Self::Sub => 1,
            Self::Mul | Self::Div => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WeightExpr {
    Num(f64),
    Var,
    Neg(Box<WeightExpr>),
    Bin(BinOp, Box<WeightExpr>, Box<WeightExpr>),
    Call(Func, Vec<WeightExpr>),
    Lse { terms: Vec<(f64, f64)>, tau: f64 },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown identifier '{0}'")]
    UnknownIdentifier(String),
    #[error("{func} takes {expected} argument(s), got {got}")]
    Arity { func: &'static str, expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{kind} at line {line}, column {column}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
    End,
}

struct Lexer {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
}

fn lex(text: &str) -> Result<Lexer, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut toks = Vec::new();
    let (mut line, mut col) = (1, 1);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            col += 1;
            i += 1;
            continue;
        }
        let start = (line, col);
        if c.is_ascii_digit() || c == '.' {
            let mut j = i;
            while j < chars.len() && (chars[j].is_ascii_digit() || chars[j] == '.') {
                j += 1;
            }
            if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                let mut k = j + 1;
                if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                    k += 1;
                }
                if k < chars.len() && chars[k].is_ascii_digit() {
                    while k < chars.len() && chars[k].is_ascii_digit() {
                        k += 1;
                    }
                    j = k;
                }
            }
            let lit: String = chars[i..j].iter().collect();
            let v = lit.parse::<f64>().map_err(|_| ParseError {
                kind: ParseErrorKind::Syntax(format!("malformed number '{lit}'")),
                line: start.0,
                column: start.1,
            })?;
            toks.push((Tok::Num(v), start.0, start.1));
            col += j - i;
            i = j;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let mut j = i;
            while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                j += 1;
            }
            toks.push((Tok::Ident(chars[i..j].iter().collect()), start.0, start.1));
            col += j - i;
            i = j;
        } else if "+-*/(),:;".contains(c) {
            toks.push((Tok::Sym(c), start.0, start.1));
            col += 1;
            i += 1;
        } else {
            return Err(ParseError {
                kind: ParseErrorKind::Syntax(format!("unexpected character '{c}'")),
                line,
                column: col,
            });
        }
    }
    toks.push((Tok::End, line, col));
    Ok(Lexer { toks, pos: 0 })
}

impl Lexer {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn next(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, kind: ParseErrorKind) -> ParseError {
        let (_, line, column) = self.toks[self.pos];
        ParseError { kind, line, column }
    }

    fn unexpected(&self, wanted: &str) -> ParseError {
        let found = match self.peek() {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("'{s}'"),
            Tok::Sym(c) => format!("'{c}'"),
            Tok::End => "end of input".into(),
        };
        self.error(ParseErrorKind::Syntax(format!("expected {wanted}, found {found}")))
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if *self.peek() == Tok::Sym(c) {
            self.next();
            Ok(())
        } else {
            Err(self.unexpected(&format!("'{c}'")))
        }
    }

    fn expr(&mut self) -> Result<WeightExpr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('+') => BinOp::Add,
                Tok::Sym('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.next();
            lhs = WeightExpr::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
    }

    fn term(&mut self) -> Result<WeightExpr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('*') => BinOp::Mul,
                Tok::Sym('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.next();
            lhs = WeightExpr::Bin(op, Box::new(lhs), Box::new(self.factor()?));
        }
    }

    fn factor(&mut self) -> Result<WeightExpr, ParseError> {
        match self.peek().clone() {
            Tok::Sym('-') => {
                self.next();
                Ok(WeightExpr::Neg(Box::new(self.factor()?)))
            }
            Tok::Num(v) => {
                self.next();
                Ok(WeightExpr::Num(v))
            }
            Tok::Sym('(') => {
                self.next();
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) if name == "s" => {
                self.next();
                Ok(WeightExpr::Var)
            }
            Tok::Ident(name) if name == "lse" => {
                self.next();
                self.expect('(')?;
                self.lse()
            }
            Tok::Ident(name) => {
                let Some(func) = Func::from_name(&name) else {
                    return Err(self.error(ParseErrorKind::UnknownIdentifier(name)));
                };
                let at = self.pos;
                self.next();
                self.expect('(')?;
                let mut args = vec![self.expr()?];
                while *self.peek() == Tok::Sym(',') {
                    self.next();
                    args.push(self.expr()?);
                }
                self.expect(')')?;
                if args.len() != func.arity() {
                    let (_, line, column) = self.toks[at];
                    return Err(ParseError {
                        kind: ParseErrorKind::Arity {
                            func: func.name(),
                            expected: func.arity(),
                            got: args.len(),
                        },
                        line,
                        column,
                    });
                }
                Ok(WeightExpr::Call(func, args))
            }
            _ => Err(self.unexpected("a number, 's', a function or '('")),
        }
    }

    fn signed(&mut self) -> Result<f64, ParseError> {
        let mut sign = 1.0;
        while let Tok::Sym(c @ ('-' | '+')) = self.peek() {
            if *c == '-' {
                sign = -sign;
            }
            self.next();
        }
        match self.next() {
            Tok::Num(v) => Ok(sign * v),
            _ => {
                self.pos -= 1;
                Err(self.unexpected("a number"))
            }
        }
    }

    fn lse(&mut self) -> Result<WeightExpr, ParseError> {
        let mut terms = Vec::new();
        loop {
            let a = self.signed()?;
            self.expect(':')?;
            let b = self.signed()?;
            terms.push((a, b));
            match self.peek() {
                Tok::Sym(',') => {
                    self.next();
                }
                Tok::Sym(';') => {
                    self.next();
                    break;
                }
                _ => return Err(self.unexpected("',' or ';'")),
            }
        }
        let (_, line, column) = self.toks[self.pos];
        let tau = self.signed()?;
        self.expect(')')?;
        if !(tau > 0.0) {
            return Err(ParseError {
                kind: ParseErrorKind::Syntax(format!("lse sharpness must be positive, got {tau}")),
                line,
                column,
            });
        }
        Ok(WeightExpr::Lse { terms, tau })
    }
}

pub fn parse_weight(text: &str) -> Result<WeightExpr, ParseError> {
    let mut lx = lex(text)?;
    if *lx.peek() == Tok::End {
        return Err(lx.error(ParseErrorKind::Syntax("empty expression".into())));
    }
    let e = lx.expr()?;
    if *lx.peek() != Tok::End {
        return Err(lx.unexpected("end of input"));
    }
    Ok(e)
}

/// Value with first and second derivative in `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet(pub [f64; 3]);

impl Jet {
    fn constant(c: f64) -> Self {
        Jet([c, 0.0, 0.0])
    }

    /// `g(u)` from `g, g', g''` at `u`.
    fn chain(self, g: [f64; 3]) -> Self {
        let [_, d1, d2] = self.0;
        Jet([g[0], g[1] * d1, g[2] * d1 * d1 + g[1] * d2])
    }
}

impl WeightExpr {
    pub fn eval(&self, s: f64) -> f64 {
        self.jet(s).0[0]
    }

    pub fn jet(&self, s: f64) -> Jet {
        match self {
            Self::Num(c) => Jet::constant(*c),
            Self::Var => Jet([s, 1.0, 0.0]),
            Self::Neg(e) => {
                let [a, b, c] = e.jet(s).0;
                Jet([-a, -b, -c])
            }
            Self::Bin(op, l, r) => {
                let [a, a1, a2] = l.jet(s).0;
                let [b, b1, b2] = r.jet(s).0;
                Jet(match op {
                    BinOp::Add => [a + b, a1 + b1, a2 + b2],
                    BinOp::Sub => [a - b, a1 - b1, a2 - b2],
                    BinOp::Mul => [a * b, a1 * b + a * b1, a2 * b + 2.0 * a1 * b1 + a * b2],
                    BinOp::Div => {
                        let q = a / b;
                        let q1 = (a1 - q * b1) / b;
                        [q, q1, (a2 - 2.0 * q1 * b1 - q * b2) / b]
                    }
                })
            }
            Self::Call(f, args) => {
                let u = args[0].jet(s);
                let x = u.0[0];
                match f {
                    Func::Log => u.chain([x.ln(), 1.0 / x, -1.0 / (x * x)]),
                    Func::Exp => {
                        let e = x.exp();
                        u.chain([e, e, e])
                    }
                    Func::Tanh => {
                        let t = x.tanh();
                        let d = 1.0 - t * t;
                        u.chain([t, d, -2.0 * t * d])
                    }
                    Func::Sech => {
                        let h = sech(x);
                        let t = x.tanh();
                        u.chain([h, -h * t, h * (1.0 - 2.0 * h * h)])
                    }
                    Func::Fs => {
                        // a * softplus(s), derivatives in s through the product rule.
                        let a = u;
                        let sp = softplus(s);
                        let sg = logistic(s);
                        let sd = sg * (1.0 - sg);
                        let [a0, a1, a2] = a.0;
                        Jet([a0 * sp, a1 * sp + a0 * sg, a2 * sp + 2.0 * a1 * sg + a0 * sd])
                    }
                    Func::Min | Func::Max => {
                        let v = args[1].jet(s);
                        let pick_u = if *f == Func::Min { u.0[0] <= v.0[0] } else { u.0[0] >= v.0[0] };
                        if pick_u {
                            u
                        } else {
                            v
                        }
                    }
                }
            }
            Self::Lse { terms, tau } => {
                let sm = SoftMax::new(terms.clone(), *tau).expect("validated by the parser");
                let [v, m, c] = sm.jet(s);
                Jet([v, m, c])
            }
        }
    }

    /// The value when the expression does not depend on `s`.
    pub fn constant(&self) -> Option<f64> {
        match self {
            Self::Num(c) => Some(*c),
            Self::Var | Self::Lse { .. } => None,
            Self::Neg(e) => e.constant().map(|c| -c),
            Self::Bin(..) | Self::Call(..) => {
                if self.mentions_s() {
                    None
                } else {
                    Some(self.eval(0.0))
                }
            }
        }
    }

    fn mentions_s(&self) -> bool {
        match self {
            Self::Num(_) => false,
            Self::Var | Self::Lse { .. } => true,
            Self::Neg(e) => e.mentions_s(),
            Self::Bin(_, l, r) => l.mentions_s() || r.mentions_s(),
            // fs(a) is a * softplus(s): always depends on s unless a = 0.
            Self::Call(Func::Fs, args) => args[0].constant() != Some(0.0),
            Self::Call(_, args) => args.iter().any(|a| a.mentions_s()),
        }
    }

    /// Asymptotic slopes `(a-, a+)` read off the structure: `fs` and `lse`
    /// terms, `s`, constants, sums, scalings, and bounded functions of
    /// bounded arguments. `None` when the structure does not determine them.
    pub fn slopes(&self) -> Option<(f64, f64)> {
        if self.constant().is_some() {
            return Some((0.0, 0.0));
        }
        match self {
            Self::Num(_) => Some((0.0, 0.0)),
            Self::Var => Some((1.0, 1.0)),
            Self::Neg(e) => e.slopes().map(|(l, r)| (-l, -r)),
            Self::Bin(op, l, r) => match op {
                BinOp::Add | BinOp::Sub => {
                    let (a, b) = (l.slopes()?, r.slopes()?);
                    let sg = if *op == BinOp::Add { 1.0 } else { -1.0 };
                    Some((a.0 + sg * b.0, a.1 + sg * b.1))
                }
                BinOp::Mul => {
                    if let Some(c) = l.constant() {
                        r.slopes().map(|(a, b)| (c * a, c * b))
                    } else if let Some(c) = r.constant() {
                        l.slopes().map(|(a, b)| (c * a, c * b))
                    } else {
                        let (a, b) = (l.slopes()?, r.slopes()?);
                        (a == (0.0, 0.0) && b == (0.0, 0.0)).then_some((0.0, 0.0))
                    }
                }
                BinOp::Div => {
                    let c = r.constant()?;
                    l.slopes().map(|(a, b)| (a / c, b / c))
                }
            },
            Self::Call(f, args) => match f {
                Func::Tanh | Func::Sech => Some((0.0, 0.0)),
                Func::Fs => args[0].constant().map(|a| (0.0, a)),
                Func::Log | Func::Exp => (args[0].slopes()? == (0.0, 0.0)).then_some((0.0, 0.0)),
                Func::Min | Func::Max => {
                    let (a, b) = (args[0].slopes()?, args[1].slopes()?);
                    Some(if *f == Func::Min {
                        (a.0.max(b.0), a.1.min(b.1))
                    } else {
                        (a.0.min(b.0), a.1.max(b.1))
                    })
                }
            },
            Self::Lse { terms, .. } => {
                let lo = terms.iter().map(|t| t.0).fold(f64::INFINITY, f64::min);
                let hi = terms.iter().map(|t| t.0).fold(f64::NEG_INFINITY, f64::max);
                Some((lo, hi))
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Self::Bin(op, ..) => op.precedence(),
            Self::Neg(_) => 3,
            _ => 4,
        }
    }
}

fn write_num(f: &mut fmt::Formatter<'_>, v: f64) -> fmt::Result {
    // `{:?}` is the shortest representation that parses back to `v`.
    let t = format!("{v:?}");
    f.write_str(&t)
}

impl fmt::Display for WeightExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Num(v) => write_num(f, *v),
            Self::Var => f.write_str("s"),
            Self::Neg(e) => {
                if e.precedence() < 3 {
                    write!(f, "-({e})")
                } else {
                    write!(f, "-{e}")
                }
            }
            Self::Bin(op, l, r) => {
                let p = op.precedence();
                if l.precedence() < p {
                    write!(f, "({l})")?;
                } else {
                    write!(f, "{l}")?;
                }
                write!(f, " {} ", op.symbol())?;
                // Left associative: an equal-precedence right operand needs parentheses.
                if r.precedence() <= p {
                    write!(f, "({r})")
                } else {
                    write!(f, "{r}")
                }
            }
            Self::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
            Self::Lse { terms, tau } => {
                f.write_str("lse(")?;
                for (i, (a, b)) in terms.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write_num(f, *a)?;
                    f.write_str(":")?;
                    write_num(f, *b)?;
                }
                f.write_str("; ")?;
                write_num(f, *tau)?;
                f.write_str(")")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regression_weight_parses() {
        let e = parse_weight("0.5*(lse(0:0, 2:-2; 1.0) - fs(2))").unwrap();
        assert_eq!(e.slopes(), Some((0.0, 0.0)));
        let want = 0.5 * (SoftMax::new(vec![(0.0, 0.0), (2.0, -2.0)], 1.0).unwrap().value(0.3) - 2.0 * softplus(0.3));
        assert!((e.eval(0.3) - want).abs() < 1e-15);
    }

    #[test]
    fn unclosed_call_reports_column() {
        let err = parse_weight("fs(1").unwrap_err();
        assert_eq!((err.line, err.column), (1, 5));
        assert!(matches!(err.kind, ParseErrorKind::Syntax(_)));
    }

    #[test]
    fn sech_weight_is_bounded() {
        assert_eq!(parse_weight("0.4*sech(s)").unwrap().slopes(), Some((0.0, 0.0)));
    }

    #[test]
    fn errors_carry_position_and_kind() {
        let e = parse_weight("1 +\n  foo(s)").unwrap_err();
        assert_eq!((e.line, e.column), (2, 3));
        assert!(matches!(e.kind, ParseErrorKind::UnknownIdentifier(_)));
        let e = parse_weight("min(s)").unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::Arity { expected: 2, got: 1, .. }));
        assert!(parse_weight("").is_err());
        assert!(parse_weight("s s").is_err());
        assert!(parse_weight("lse(0:0; 0)").is_err());
    }

    #[test]
    fn slopes_of_common_shapes() {
        let cases = [
            ("fs(2)", Some((0.0, 2.0))),
            ("lse(0:0, 1:0, 3:-1; 0.5)", Some((0.0, 3.0))),
            ("2*fs(1) - s", Some((-1.0, 1.0))),
            ("max(0, s)", Some((0.0, 1.0))),
            ("min(0, s)", Some((1.0, 0.0))),
            ("exp(s)", None),
            ("fs(1)/2", Some((0.0, 0.5))),
            ("log(2 + tanh(s))", Some((0.0, 0.0))),
        ];
        for (text, want) in cases {
            assert_eq!(parse_weight(text).unwrap().slopes(), want, "{text}");
        }
    }

    #[test]
    fn jets_match_finite_differences() {
        let e = parse_weight("0.3*sech(s)*tanh(s/2) + fs(2)/(2 + tanh(s)) - exp(-s*s)").unwrap();
        let h = 1e-4;
        for s in [-2.0, -0.3, 0.0, 0.8, 3.0] {
            let [v, d1, d2] = e.jet(s).0;
            let (a, b) = (e.eval(s - h), e.eval(s + h));
            assert!((d1 - (b - a) / (2.0 * h)).abs() < 1e-7);
            assert!((d2 - (b - 2.0 * v + a) / (h * h)).abs() < 1e-5);
        }
    }

    #[test]
    fn printing_round_trips() {
        for text in ["1 - (2 - s)", "-(s + 1) * 3", "s / (2 / s)", "--s", "lse(0:-0.5, 2:1e-3; 0.25)", "1.5e300 * s"] {
            let e = parse_weight(text).unwrap();
            assert_eq!(parse_weight(&e.to_string()).unwrap(), e, "{text} -> {e}");
        }
    }
}
