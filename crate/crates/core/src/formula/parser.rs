use super::{Atom, BinOp, Confidence, Expr, Formula, TimeInterval, UnaryFn};
use crate::error::{ParseError, ParseErrorKind};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    Lt,
    Le,
    Gt,
    Ge,
    At,
    Question,
    Bang,
    Amp,
    Pipe,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(n) => format!("number {n}"),
            Tok::Ident(s) => format!("`{s}`"),
            Tok::End => "end of input".into(),
            other => format!("{other:?}"),
        }
    }
}

type PResult<T> = Result<T, ParseError>;

fn syntax(position: usize, message: impl Into<String>) -> ParseError {
    ParseError { kind: ParseErrorKind::Syntax, position, message: message.into() }
}

fn lex(src: &str) -> PResult<Vec<(Tok, usize)>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let two = |next: u8| bytes.get(i + 1) == Some(&next);
        let tok = match c {
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'[' => Tok::LBracket,
            b']' => Tok::RBracket,
            b',' => Tok::Comma,
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'@' => Tok::At,
            b'?' => Tok::Question,
            b'!' => Tok::Bang,
            b'<' if two(b'=') => {
                i += 1;
                Tok::Le
            }
            b'>' if two(b'=') => {
                i += 1;
                Tok::Ge
            }
            b'<' => Tok::Lt,
            b'>' => Tok::Gt,
            b'&' => {
                if two(b'&') {
                    i += 1;
                }
                Tok::Amp
            }
            b'|' => {
                if two(b'|') {
                    i += 1;
                }
                Tok::Pipe
            }
            b'0'..=b'9' | b'.' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_digit() || bytes[j] == b'.') {
                    j += 1;
                }
                if j < bytes.len() && (bytes[j] == b'e' || bytes[j] == b'E') {
                    let mut k = j + 1;
                    if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                        k += 1;
                    }
                    if k < bytes.len() && bytes[k].is_ascii_digit() {
                        while k < bytes.len() && bytes[k].is_ascii_digit() {
                            k += 1;
                        }
                        j = k;
                    }
                }
                let text = &src[i..j];
                let value: f64 = text.parse().map_err(|_| syntax(start, format!("malformed number `{text}`")))?;
                i = j;
                out.push((Tok::Num(value), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                    j += 1;
                }
                out.push((Tok::Ident(src[i..j].to_string()), start));
                i = j;
                continue;
            }
            _ => {
                let ch = src[i..].chars().next().unwrap_or('?');
                return Err(syntax(start, format!("unexpected character `{ch}`")));
            }
        };
        i += 1;
        out.push((tok, start));
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

const RESERVED: &[&str] = &["not", "and", "or", "always", "eventually", "until"];

fn is_kw(ident: &str, kw: &str) -> bool {
    ident.eq_ignore_ascii_case(kw)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

/// Parses a formula; see the module docs for the grammar.
pub fn parse(text: &str) -> Result<Formula, ParseError> {
    let mut p = Parser { toks: lex(text)?, pos: 0 };
    let phi = p.formula()?;
    match p.peek() {
        Tok::End => Ok(phi),
        t => Err(syntax(p.offset(), format!("unexpected {} after formula", t.describe()))),
    }
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> PResult<()> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(syntax(self.offset(), format!("expected {what}, found {}", self.peek().describe())))
        }
    }

    fn peek_ident_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if is_kw(s, kw))
    }

    /// `G`, `F`, `U` are operators only when an interval follows.
    fn peek_short_op(&self, letter: &str) -> bool {
        self.peek_ident_kw(letter) && *self.peek_at(1) == Tok::LBracket
    }

    fn formula(&mut self) -> PResult<Formula> {
        let lhs = self.or()?;
        if self.peek_ident_kw("until") || self.peek_short_op("u") {
            self.bump();
            let i = self.interval()?;
            let rhs = self.or()?;
            return Ok(Formula::until(i, lhs, rhs));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> PResult<Formula> {
        let mut lhs = self.and()?;
        while self.peek_ident_kw("or") || *self.peek() == Tok::Pipe {
            self.bump();
            let rhs = self.and()?;
            lhs = Formula::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> PResult<Formula> {
        let mut lhs = self.unary()?;
        while self.peek_ident_kw("and") || *self.peek() == Tok::Amp {
            self.bump();
            let rhs = self.unary()?;
            lhs = Formula::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Formula> {
        if self.peek_ident_kw("not") || *self.peek() == Tok::Bang {
            self.bump();
            return Ok(Formula::not(self.unary()?));
        }
        if self.peek_ident_kw("always") || self.peek_short_op("g") {
            self.bump();
            let i = self.interval()?;
            return Ok(Formula::always(i, self.unary()?));
        }
        if self.peek_ident_kw("eventually") || self.peek_short_op("f") {
            self.bump();
            let i = self.interval()?;
            return Ok(Formula::eventually(i, self.unary()?));
        }
        if *self.peek() == Tok::LParen {
            // Either a parenthesized formula or an atom whose left side starts with `(`.
            let save = self.pos;
            let atom_err = match self.atom() {
                Ok(a) => return Ok(a),
                Err(e) => e,
            };
            if atom_err.kind != ParseErrorKind::Syntax {
                return Err(atom_err);
            }
            self.pos = save;
            self.bump();
            let inner = self.formula().and_then(|f| self.expect(Tok::RParen, "`)`").map(|_| f));
            return match inner {
                Ok(f) => Ok(f),
                Err(e) if e.position >= atom_err.position => Err(e),
                Err(_) => Err(atom_err),
            };
        }
        self.atom()
    }

    fn nat(&mut self) -> PResult<u32> {
        let at = self.offset();
        match self.bump() {
            Tok::Num(n) if n >= 0.0 && n.fract() == 0.0 && n <= u32::MAX as f64 => Ok(n as u32),
            t => Err(syntax(at, format!("expected a natural number, found {}", t.describe()))),
        }
    }

    fn interval(&mut self) -> PResult<TimeInterval> {
        let at = self.offset();
        self.expect(Tok::LBracket, "`[`")?;
        let lo = self.nat()?;
        self.expect(Tok::Comma, "`,`")?;
        let hi = self.nat()?;
        self.expect(Tok::RBracket, "`]`")?;
        TimeInterval::new(lo, hi).map_err(|_| ParseError {
            kind: ParseErrorKind::Range,
            position: at,
            message: format!("empty interval [{lo},{hi}]"),
        })
    }

    fn atom(&mut self) -> PResult<Formula> {
        let start = self.offset();
        let (lhs, lhs_zero) = self.side()?;
        let at = self.offset();
        let greater = match self.bump() {
            Tok::Gt | Tok::Ge => true,
            Tok::Lt | Tok::Le => false,
            t => return Err(syntax(at, format!("expected a comparison, found {}", t.describe()))),
        };
        let (rhs, rhs_zero) = self.side()?;
        let expr = match (greater, lhs_zero, rhs_zero) {
            (true, _, true) => lhs,
            (true, _, false) => Expr::difference(lhs, rhs),
            (false, true, _) => rhs,
            (false, false, _) => Expr::difference(rhs, lhs),
        };
        let conf = if *self.peek() == Tok::At {
            self.bump();
            let at = self.offset();
            match self.bump() {
                Tok::Question => Confidence::Unspecified,
                Tok::Num(l) if l > 0.0 && l < 1.0 => Confidence::Level(l),
                Tok::Num(l) => {
                    return Err(ParseError {
                        kind: ParseErrorKind::Range,
                        position: at,
                        message: format!("confidence level {l} outside (0,1)"),
                    })
                }
                t => return Err(syntax(at, format!("expected a confidence level or `?`, found {}", t.describe()))),
            }
        } else {
            Confidence::Unspecified
        };
        let vars = expr.variables();
        if vars.len() != 1 {
            return Err(ParseError {
                kind: ParseErrorKind::SingleVariable,
                position: start,
                message: format!(
                    "atom must reference exactly one variable, found {}{}",
                    vars.len(),
                    if vars.is_empty() {
                        String::new()
                    } else {
                        format!(" ({})", vars.into_iter().collect::<Vec<_>>().join(", "))
                    }
                ),
            });
        }
        let variable = vars.into_iter().next().unwrap_or_default().to_string();
        Ok(Formula::Atom(Atom { expr, variable, conf }))
    }

    /// One side of a comparison; the flag marks a bare `0` literal.
    fn side(&mut self) -> PResult<(Expr, bool)> {
        let before = self.pos;
        let e = self.expr()?;
        let bare_zero = self.pos == before + 1 && e.is_positive_zero_literal();
        Ok((e, bare_zero))
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::binary(op, lhs, self.term()?);
        }
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::binary(op, lhs, self.factor()?);
        }
    }

    fn factor(&mut self) -> PResult<Expr> {
        if *self.peek() == Tok::Minus {
            self.bump();
            // `-3` is a literal; `-(3)`, `-x` and `-2^2` are negations.
            if let Tok::Num(n) = *self.peek() {
                if *self.peek_at(1) != Tok::Caret {
                    self.bump();
                    return Ok(Expr::Const(-n));
                }
            }
            return Ok(self.factor()?.negated());
        }
        self.power()
    }

    fn power(&mut self) -> PResult<Expr> {
        let base = self.primary()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let exp = self.factor()?;
            return Ok(Expr::binary(BinOp::Pow, base, exp));
        }
        Ok(base)
    }

    fn primary(&mut self) -> PResult<Expr> {
        let at = self.offset();
        match self.bump() {
            Tok::Num(n) => Ok(Expr::Const(n)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if *self.peek() == Tok::LParen {
                    let f =
                        UnaryFn::from_name(&name).ok_or_else(|| syntax(at, format!("unknown function `{name}`")))?;
                    self.bump();
                    let arg = self.expr()?;
                    self.expect(Tok::RParen, "`)`")?;
                    return Ok(Expr::func(f, arg));
                }
                if RESERVED.iter().any(|kw| is_kw(&name, kw)) {
                    return Err(syntax(at, format!("keyword `{name}` cannot be used in an expression")));
                }
                Ok(Expr::Var(name))
            }
            t => Err(syntax(at, format!("expected an expression, found {}", t.describe()))),
        }
    }
}
