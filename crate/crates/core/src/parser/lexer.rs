//! Tokenizer for `.spacetime` sources and standalone expressions.

use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Number(f64),
    Ident(String),
    Str(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Colon,
    Semicolon,
    Eq,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    Eof,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub line: usize,
    pub column: usize,
}

impl Token {
    pub fn is_statement_end(&self) -> bool {
        matches!(
            self.kind,
            TokenKind::Semicolon | TokenKind::RBrace | TokenKind::Eof
        )
    }
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    column: usize,
}

impl Cursor<'_> {
    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }
}

pub fn tokenize(source: &str) -> Result<Vec<Token>, ParseError> {
    let mut cur = Cursor {
        chars: source.chars().peekable(),
        line: 1,
        column: 1,
    };
    let mut out = Vec::new();
    loop {
        // whitespace and `#` line comments
        while let Some(c) = cur.peek() {
            if c.is_whitespace() {
                cur.bump();
            } else if c == '#' {
                while let Some(c) = cur.peek() {
                    if c == '\n' {
                        break;
                    }
                    cur.bump();
                }
            } else {
                break;
            }
        }
        let (line, column) = (cur.line, cur.column);
        let Some(c) = cur.peek() else {
            out.push(Token {
                kind: TokenKind::Eof,
                text: String::new(),
                line,
                column,
            });
            return Ok(out);
        };
        let simple = match c {
            '{' => Some(TokenKind::LBrace),
            '}' => Some(TokenKind::RBrace),
            '(' => Some(TokenKind::LParen),
            ')' => Some(TokenKind::RParen),
            '[' => Some(TokenKind::LBracket),
            ']' => Some(TokenKind::RBracket),
            ',' => Some(TokenKind::Comma),
            ':' => Some(TokenKind::Colon),
            ';' => Some(TokenKind::Semicolon),
            '=' => Some(TokenKind::Eq),
            '+' => Some(TokenKind::Plus),
            '-' => Some(TokenKind::Minus),
            '*' => Some(TokenKind::Star),
            '/' => Some(TokenKind::Slash),
            '^' => Some(TokenKind::Caret),
            _ => None,
        };
        if let Some(kind) = simple {
            cur.bump();
            out.push(Token {
                kind,
                text: c.to_string(),
                line,
                column,
            });
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
            let text = lex_number(&mut cur);
            let value: f64 = text.parse().map_err(|_| ParseError {
                line,
                column,
                message: format!("malformed number literal `{text}`"),
                token: text.clone(),
            })?;
            out.push(Token {
                kind: TokenKind::Number(value),
                text,
                line,
                column,
            });
        } else if c.is_alphabetic() || c == '_' {
            let mut text = String::new();
            while let Some(c) = cur.peek() {
                if c.is_alphanumeric() || c == '_' {
                    text.push(c);
                    cur.bump();
                } else {
                    break;
                }
            }
            out.push(Token {
                kind: TokenKind::Ident(text.clone()),
                text,
                line,
                column,
            });
        } else if c == '"' {
            cur.bump();
            let mut text = String::new();
            loop {
                match cur.bump() {
                    Some('"') => break,
                    Some('\n') | None => {
                        return Err(ParseError {
                            line,
                            column,
                            message: "unterminated string literal".into(),
                            token: format!("\"{text}"),
                        })
                    }
                    Some(c) => text.push(c),
                }
            }
            out.push(Token {
                kind: TokenKind::Str(text.clone()),
                text: format!("\"{text}\""),
                line,
                column,
            });
        } else {
            return Err(ParseError {
                line,
                column,
                message: format!("unexpected character `{c}`"),
                token: c.to_string(),
            });
        }
    }
}

/// Decimal digits, optional fraction, optional exponent. No hex, no suffixes.
fn lex_number(cur: &mut Cursor<'_>) -> String {
    let mut text = String::new();
    let take_digits = |cur: &mut Cursor<'_>, text: &mut String| {
        while let Some(c) = cur.peek() {
            if c.is_ascii_digit() {
                text.push(c);
                cur.bump();
            } else {
                break;
            }
        }
    };
    take_digits(cur, &mut text);
    if cur.peek() == Some('.') {
        text.push('.');
        cur.bump();
        take_digits(cur, &mut text);
    }
    if matches!(cur.peek(), Some('e') | Some('E')) {
        text.push('e');
        cur.bump();
        if let Some(sign @ ('+' | '-')) = cur.peek() {
            text.push(sign);
            cur.bump();
        }
        take_digits(cur, &mut text);
    }
    // trailing identifier characters make the literal malformed (e.g. `0x1f`, `2m`)
    while let Some(c) = cur.peek() {
        if c.is_alphanumeric() || c == '_' {
            text.push(c);
            cur.bump();
        } else {
            break;
        }
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_positions() {
        let toks = tokenize("# header\n  g_tt = -1.5e-1; # trailing\n").unwrap();
        assert_eq!(toks[0].kind, TokenKind::Ident("g_tt".into()));
        assert_eq!((toks[0].line, toks[0].column), (2, 3));
        assert_eq!(toks[3].kind, TokenKind::Number(0.15));
        assert_eq!(toks.last().unwrap().kind, TokenKind::Eof);
    }

    #[test]
    fn hex_and_suffix_rejected() {
        assert!(tokenize("0x1f").is_err());
        assert!(tokenize("3m").is_err());
    }
}
