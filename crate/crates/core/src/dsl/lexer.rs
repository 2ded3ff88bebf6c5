use crate::diag::{Diagnostic, SourceSpan};

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Str(String),
    Number(f64),
    LBrace,
    RBrace,
    Arrow,
    FatArrow,
    Comma,
    Dot,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Str(_) => "string".into(),
            Tok::Number(_) => "number".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::FatArrow => "`=>`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub span: SourceSpan,
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, Diagnostic> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);

    while i < chars.len() {
        let c = chars[i];
        let start = (line, col);
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
                col += 1;
            }
            continue;
        }
        let single = |tok| Token {
            tok,
            span: SourceSpan::new(start.0, start.1, 1),
        };
        match c {
            '{' => {
                out.push(single(Tok::LBrace));
                i += 1;
                col += 1;
            }
            '}' => {
                out.push(single(Tok::RBrace));
                i += 1;
                col += 1;
            }
            ',' => {
                out.push(single(Tok::Comma));
                i += 1;
                col += 1;
            }
            '.' => {
                out.push(single(Tok::Dot));
                i += 1;
                col += 1;
            }
            '-' | '=' if chars.get(i + 1) == Some(&'>') => {
                let tok = if c == '-' { Tok::Arrow } else { Tok::FatArrow };
                out.push(Token {
                    tok,
                    span: SourceSpan::new(start.0, start.1, 2),
                });
                i += 2;
                col += 2;
            }
            '"' => {
                let mut text = String::new();
                let mut j = i + 1;
                let mut len = 1;
                loop {
                    match chars.get(j) {
                        None | Some('\n') => {
                            return Err(Diagnostic::error(
                                "lex",
                                "unterminated string literal",
                                Some(SourceSpan::new(start.0, start.1, len)),
                            ));
                        }
                        Some('"') => {
                            len += 1;
                            j += 1;
                            break;
                        }
                        Some('\\') => {
                            let esc = match chars.get(j + 1) {
                                Some('"') => '"',
                                Some('\\') => '\\',
                                Some('n') => '\n',
                                _ => {
                                    return Err(Diagnostic::error(
                                        "lex",
                                        "invalid escape in string literal",
                                        Some(SourceSpan::new(start.0, start.1 + len, 1)),
                                    ));
                                }
                            };
                            text.push(esc);
                            j += 2;
                            len += 2;
                        }
                        Some(&ch) => {
                            text.push(ch);
                            j += 1;
                            len += 1;
                        }
                    }
                }
                out.push(Token {
                    tok: Tok::Str(text),
                    span: SourceSpan::new(start.0, start.1, len),
                });
                i = j;
                col += len;
            }
            c if c.is_ascii_digit() => {
                let mut j = i;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
                if chars.get(j) == Some(&'.') && chars.get(j + 1).is_some_and(|d| d.is_ascii_digit())
                {
                    j += 1;
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                }
                let text: String = chars[i..j].iter().collect();
                let len = j - i;
                let value = text.parse::<f64>().map_err(|_| {
                    Diagnostic::error(
                        "lex",
                        format!("invalid number `{text}`"),
                        Some(SourceSpan::new(start.0, start.1, len)),
                    )
                })?;
                out.push(Token {
                    tok: Tok::Number(value),
                    span: SourceSpan::new(start.0, start.1, len),
                });
                i = j;
                col += len;
            }
            c if c.is_ascii_alphabetic() => {
                let mut j = i;
                while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                let len = j - i;
                out.push(Token {
                    tok: Tok::Ident(chars[i..j].iter().collect()),
                    span: SourceSpan::new(start.0, start.1, len),
                });
                i = j;
                col += len;
            }
            other => {
                return Err(Diagnostic::error(
                    "lex",
                    format!("unexpected character `{other}`"),
                    Some(SourceSpan::new(start.0, start.1, 1)),
                ));
            }
        }
    }
    // EOF sits on the last character so the span stays inside the text.
    let eof_span = match out.last() {
        Some(t) => SourceSpan::new(t.span.line, t.span.column + t.span.length - 1, 1),
        None => SourceSpan::new(1, 1, 1),
    };
    out.push(Token {
        tok: Tok::Eof,
        span: eof_span,
    });
    Ok(out)
}
