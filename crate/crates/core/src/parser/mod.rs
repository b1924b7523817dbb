//! The `.spacetime` definition language.
//!
//! ```text
//! # Minkowski plane
//! spacetime "minkowski" {
//!   coords: t, x;
//!   domain: t in [-2, 2], x in [-2, 2];
//!   g_tt = -1;
//!   g_tx = 0;
//!   g_xx = 1;
//! }
//! ```
//!
//! Expressions use precedence `^` > unary `-` > `*`,`/` > `+`,`-`, with `^`
//! right-associative. Parsing is fail-fast: the first error aborts.

mod expr;
mod lexer;

use thiserror::Error;

pub use expr::{BinOp, EvalError, Expr, Func};
pub use lexer::{tokenize, Token, TokenKind};

use crate::geometry::{Interval, SpacetimeSpec, TimeOrientation};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{line}:{column}: {message} (at `{token}`)")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub token: String,
}

impl ParseError {
    fn at(tok: &Token, message: impl Into<String>) -> ParseError {
        ParseError {
            line: tok.line,
            column: tok.column,
            message: message.into(),
            token: tok.text.clone(),
        }
    }
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    vars: &'a [String],
}

impl<'a> Parser<'a> {
    fn new(tokens: Vec<Token>, vars: &'a [String]) -> Self {
        Parser {
            tokens,
            pos: 0,
            vars,
        }
    }

    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, kind: &TokenKind, what: &str) -> Result<Token, ParseError> {
        if &self.peek().kind == kind {
            Ok(self.next())
        } else {
            Err(ParseError::at(self.peek(), format!("expected {what}")))
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<(String, Token), ParseError> {
        match &self.peek().kind {
            TokenKind::Ident(name) => {
                let name = name.clone();
                Ok((name, self.next()))
            }
            _ => Err(ParseError::at(self.peek(), format!("expected {what}"))),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().kind {
                TokenKind::Plus => BinOp::Add,
                TokenKind::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.next();
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek().kind {
                TokenKind::Star => BinOp::Mul,
                TokenKind::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.next();
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.peek().kind == TokenKind::Minus {
            self.next();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if self.peek().kind == TokenKind::Caret {
            self.next();
            let exponent = self.unary()?;
            return Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    /// Parse a bracketed group. Errors that run into the end of the statement
    /// are reported at the unmatched opening token.
    fn group<T>(
        &mut self,
        open: &Token,
        body: impl FnOnce(&mut Self) -> Result<T, ParseError>,
    ) -> Result<T, ParseError> {
        let unbalanced = || ParseError::at(open, format!("unbalanced `{}`", open.text));
        let value = match body(self) {
            Ok(v) => v,
            Err(e) => {
                let tok = &self.tokens[self.pos];
                if tok.is_statement_end() && e.line == tok.line && e.column == tok.column {
                    return Err(unbalanced());
                }
                return Err(e);
            }
        };
        if self.peek().kind != TokenKind::RParen {
            if self.peek().is_statement_end() {
                return Err(unbalanced());
            }
            return Err(ParseError::at(self.peek(), "expected `)`"));
        }
        self.next();
        Ok(value)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let tok = self.peek().clone();
        match &tok.kind {
            TokenKind::Number(v) => {
                self.next();
                Ok(Expr::Const(*v))
            }
            TokenKind::LParen => {
                self.next();
                self.group(&tok, |p| p.expr())
            }
            TokenKind::Ident(name) => {
                self.next();
                if let Some(func) = Func::from_name(name) {
                    let open = self.expect(&TokenKind::LParen, "`(` after function name")?;
                    let args = self.group(&open, |p| {
                        let mut args = vec![p.expr()?];
                        while p.peek().kind == TokenKind::Comma {
                            p.next();
                            args.push(p.expr()?);
                        }
                        Ok(args)
                    })?;
                    if args.len() != func.arity() {
                        return Err(ParseError::at(
                            &tok,
                            format!(
                                "`{}` takes {} argument(s), got {}",
                                func.name(),
                                func.arity(),
                                args.len()
                            ),
                        ));
                    }
                    return Ok(Expr::Call(func, args));
                }
                match self.vars.iter().position(|v| v == name) {
                    Some(index) => Ok(Expr::Coord {
                        index,
                        name: name.clone(),
                    }),
                    None => Err(ParseError::at(&tok, format!("unknown identifier `{name}`"))),
                }
            }
            TokenKind::RParen => Err(ParseError::at(&tok, "unbalanced `)`")),
            _ => Err(ParseError::at(&tok, "expected expression")),
        }
    }

    fn signed_number(&mut self) -> Result<f64, ParseError> {
        let neg = if self.peek().kind == TokenKind::Minus {
            self.next();
            true
        } else {
            if self.peek().kind == TokenKind::Plus {
                self.next();
            }
            false
        };
        match self.peek().kind {
            TokenKind::Number(v) => {
                self.next();
                Ok(if neg { -v } else { v })
            }
            _ => Err(ParseError::at(self.peek(), "expected interval bound")),
        }
    }
}

/// Parse a standalone expression over the given coordinate names.
pub fn parse_expr(source: &str, vars: &[String]) -> Result<Expr, ParseError> {
    let tokens = tokenize(source)?;
    let mut p = Parser::new(tokens, vars);
    let e = p.expr()?;
    if p.peek().kind != TokenKind::Eof {
        let tok = p.peek();
        let msg = if tok.kind == TokenKind::RParen {
            "unbalanced `)`"
        } else {
            "unexpected token after expression"
        };
        return Err(ParseError::at(tok, msg));
    }
    Ok(e)
}

/// Parse one `spacetime "<name>" { ... }` block.
pub fn parse_spec(source: &str) -> Result<SpacetimeSpec, ParseError> {
    let tokens = tokenize(source)?;
    // coordinate names are not known until `coords:` is read; parse header first
    let no_vars: Vec<String> = Vec::new();
    let mut p = Parser::new(tokens, &no_vars);

    let (kw, kw_tok) = p.expect_ident("`spacetime`")?;
    if kw != "spacetime" {
        return Err(ParseError::at(&kw_tok, "expected `spacetime`"));
    }
    let name = match &p.peek().kind {
        TokenKind::Str(s) => {
            let s = s.clone();
            p.next();
            s
        }
        _ => return Err(ParseError::at(p.peek(), "expected quoted spacetime name")),
    };
    let open = p.expect(&TokenKind::LBrace, "`{`")?;

    let (kw, kw_tok) = p.expect_ident("`coords`")?;
    if kw != "coords" {
        return Err(ParseError::at(&kw_tok, "expected `coords` as the first statement"));
    }
    p.expect(&TokenKind::Colon, "`:`")?;
    let (c0, c0_tok) = p.expect_ident("time coordinate name")?;
    p.expect(&TokenKind::Comma, "`,`")?;
    let (c1, c1_tok) = p.expect_ident("space coordinate name")?;
    if c1 == c0 {
        return Err(ParseError::at(&c1_tok, "duplicate coordinate name"));
    }
    for (n, t) in [(&c0, &c0_tok), (&c1, &c1_tok)] {
        if Func::from_name(n).is_some() || is_keyword(n) {
            return Err(ParseError::at(t, format!("`{n}` is reserved")));
        }
    }
    p.expect(&TokenKind::Semicolon, "`;`")?;
    let coords = vec![c0, c1];

    let rest = p.tokens.split_off(p.pos);
    let mut p = Parser::new(rest, &coords);

    let mut domain: Option<[Interval; 2]> = None;
    let mut comps: [Option<Expr>; 3] = [None, None, None];
    loop {
        let tok = p.peek().clone();
        match &tok.kind {
            TokenKind::RBrace => {
                p.next();
                break;
            }
            TokenKind::Eof => return Err(ParseError::at(&open, "unbalanced `{`")),
            TokenKind::Ident(kw) if kw == "domain" => {
                if domain.is_some() {
                    return Err(ParseError::at(&tok, "duplicate `domain`"));
                }
                p.next();
                p.expect(&TokenKind::Colon, "`:`")?;
                let mut parsed: [Option<Interval>; 2] = [None, None];
                loop {
                    let (cname, ctok) = p.expect_ident("coordinate name")?;
                    let idx = coords
                        .iter()
                        .position(|c| *c == cname)
                        .ok_or_else(|| ParseError::at(&ctok, format!("unknown identifier `{cname}`")))?;
                    if parsed[idx].is_some() {
                        return Err(ParseError::at(&ctok, "coordinate interval given twice"));
                    }
                    let (kw_in, in_tok) = p.expect_ident("`in`")?;
                    if kw_in != "in" {
                        return Err(ParseError::at(&in_tok, "expected `in`"));
                    }
                    let lb = p.expect(&TokenKind::LBracket, "`[`")?;
                    let lo = p.signed_number()?;
                    p.expect(&TokenKind::Comma, "`,` in interval")?;
                    let hi = p.signed_number()?;
                    if p.peek().kind != TokenKind::RBracket {
                        return Err(ParseError::at(&lb, "malformed interval: missing `]`"));
                    }
                    p.next();
                    if !(hi > lo) {
                        return Err(ParseError::at(&lb, "malformed interval: empty or reversed"));
                    }
                    parsed[idx] = Some(Interval { lo, hi });
                    if p.peek().kind == TokenKind::Comma {
                        p.next();
                        continue;
                    }
                    break;
                }
                p.expect(&TokenKind::Semicolon, "`;`")?;
                match parsed {
                    [Some(a), Some(b)] => domain = Some([a, b]),
                    _ => return Err(ParseError::at(&tok, "domain must give both coordinates")),
                }
            }
            TokenKind::Ident(kw) if matches!(kw.as_str(), "g_tt" | "g_tx" | "g_xx") => {
                let slot = match kw.as_str() {
                    "g_tt" => 0,
                    "g_tx" => 1,
                    _ => 2,
                };
                if comps[slot].is_some() {
                    return Err(ParseError::at(&tok, format!("duplicate `{kw}`")));
                }
                p.next();
                p.expect(&TokenKind::Eq, "`=`")?;
                let e = p.expr()?;
                if p.peek().kind == TokenKind::RParen {
                    return Err(ParseError::at(p.peek(), "unbalanced `)`"));
                }
                p.expect(&TokenKind::Semicolon, "`;`")?;
                comps[slot] = Some(e);
            }
            TokenKind::Ident(other) => {
                return Err(ParseError::at(&tok, format!("unknown identifier `{other}`")))
            }
            _ => return Err(ParseError::at(&tok, "expected statement")),
        }
    }
    if p.peek().kind != TokenKind::Eof {
        return Err(ParseError::at(p.peek(), "unexpected token after spacetime block"));
    }
    let close = &p.tokens[p.pos.saturating_sub(1)];
    let domain = domain.ok_or_else(|| ParseError::at(close, "missing `domain`"))?;
    let [g_tt, g_tx, g_xx] = comps;
    let missing = |n: &str| ParseError::at(close, format!("missing component `{n}`"));
    Ok(SpacetimeSpec {
        name,
        coord_names: [coords[0].clone(), coords[1].clone()],
        domain,
        metric_exprs: [
            g_tt.ok_or_else(|| missing("g_tt"))?,
            g_tx.ok_or_else(|| missing("g_tx"))?,
            g_xx.ok_or_else(|| missing("g_xx"))?,
        ],
        time_orientation: TimeOrientation::IncreasingT,
    })
}

fn is_keyword(name: &str) -> bool {
    matches!(
        name,
        "spacetime" | "coords" | "domain" | "in" | "g_tt" | "g_tx" | "g_xx"
    )
}

/// Render a spec back into the definition language.
pub fn format_spec(spec: &SpacetimeSpec) -> String {
    let [t, x] = &spec.coord_names;
    let [dt, dx] = &spec.domain;
    format!(
        "spacetime \"{}\" {{\n  coords: {t}, {x};\n  domain: {t} in [{:?}, {:?}], {x} in [{:?}, {:?}];\n  g_tt = {};\n  g_tx = {};\n  g_xx = {};\n}}\n",
        spec.name,
        dt.lo,
        dt.hi,
        dx.lo,
        dx.hi,
        spec.metric_exprs[0],
        spec.metric_exprs[1],
        spec.metric_exprs[2],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    const EXAMPLE_EX: &str = r#"
        # conformally flat half plane
        spacetime "example-ex" {
          coords: t, x;
          domain: t in [-4, 4], x in [0.05, 4];
          g_tt = -1/(x*x);
          g_tx = 0;
          g_xx = 1/(x*x);
        }
    "#;

    #[test]
    fn parses_half_plane_spec() {
        let spec = parse_spec(EXAMPLE_EX).unwrap();
        assert_eq!(spec.name, "example-ex");
        assert_eq!(spec.domain[1].lo, 0.05);
        let g = spec.metric_exprs[0].eval(&[0.0, 2.0]).unwrap();
        assert_eq!(g, -0.25);
    }

    #[test]
    fn parses_minkowski_whitespace_insensitive() {
        let src = "spacetime \"m\"{coords:t,x;domain:t in[-1,1],x in[-1,1];g_tt=-1;g_tx=0;g_xx=1;}";
        let spec = parse_spec(src).unwrap();
        assert_eq!(spec.metric_exprs[0].eval(&[0.0, 0.0]).unwrap(), -1.0);
    }

    #[test]
    fn dangling_paren_reported_at_paren() {
        let src = "spacetime \"b\" {\n coords: t, x;\n domain: t in [0,1], x in [1,2];\n g_tt = -1/(x*\n;\n}";
        let err = parse_spec(src).unwrap_err();
        assert_eq!((err.line, err.column), (4, 12), "{err}");
        assert_eq!(err.token, "(");
    }

    #[test]
    fn standalone_dangling_paren() {
        let err = parse_expr("-1/(x*", &vars(&["t", "x"])).unwrap_err();
        assert_eq!(err.column, 4);
        assert_eq!(err.token, "(");
    }

    #[test]
    fn unknown_identifier() {
        let err = parse_expr("t + y", &vars(&["t", "x"])).unwrap_err();
        assert_eq!(err.column, 5);
        assert!(err.message.contains("unknown identifier"));
    }

    #[test]
    fn missing_component_and_bad_interval() {
        let src = "spacetime \"m\" { coords: t, x; domain: t in [0,1], x in [0,1]; g_tt = -1; g_xx = 1; }";
        assert!(parse_spec(src).unwrap_err().message.contains("g_tx"));
        let src = "spacetime \"m\" { coords: t, x; domain: t in [1,0], x in [0,1]; }";
        assert!(parse_spec(src).unwrap_err().message.contains("malformed interval"));
        let src = "spacetime \"m\" { coords: t, x; domain: t in [0,1, x in [0,1]; }";
        assert!(parse_spec(src).is_err());
    }

    #[test]
    fn eval_examples() {
        let v = vars(&["x"]);
        assert_eq!(parse_expr("-1/(x*x)", &v).unwrap().eval(&[2.0]).unwrap(), -0.25);
        let d = vars(&["d"]);
        let j = parse_expr("exp(-1/(d^2))", &d).unwrap().eval(&[2.0]).unwrap();
        assert!((j - (-0.25f64).exp()).abs() < 1e-15);
        assert!((j - 0.7788).abs() < 1e-4);
        assert!(matches!(
            parse_expr("1/x", &v).unwrap().eval(&[0.0]),
            Err(EvalError::DivisionByZero { .. })
        ));
        assert!(matches!(
            parse_expr("log(x)", &v).unwrap().eval(&[-1.0]),
            Err(EvalError::LogDomain { .. })
        ));
        assert!(matches!(
            parse_expr("sqrt(x)", &v).unwrap().eval(&[-1.0]),
            Err(EvalError::SqrtDomain { .. })
        ));
    }

    #[test]
    fn precedence_rules() {
        let v = vars(&["a", "b", "c"]);
        let e = |s: &str| parse_expr(s, &v).unwrap();
        assert_eq!(e("a+b*c"), e("a+(b*c)"));
        assert_eq!(e("a^b^c"), e("a^(b^c)"));
        assert_eq!(e("-a^b"), e("-(a^b)"));
        assert_eq!(e("a-b-c"), e("(a-b)-c"));
        assert_eq!(e("2^-1").eval(&[0.0, 0.0, 0.0]).unwrap(), 0.5);
    }

    #[test]
    fn arity_checked() {
        assert!(parse_expr("min(1)", &[]).is_err());
        assert!(parse_expr("exp(1, 2)", &[]).is_err());
        assert_eq!(parse_expr("max(1, 2)", &[]).unwrap().eval(&[]).unwrap(), 2.0);
    }

    #[test]
    fn format_spec_reparses() {
        let spec = parse_spec(EXAMPLE_EX).unwrap();
        let again = parse_spec(&format_spec(&spec)).unwrap();
        assert_eq!(spec.metric_exprs, again.metric_exprs);
        assert_eq!(spec.domain, again.domain);
    }
}
