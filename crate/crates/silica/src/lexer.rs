//! Hand-rolled lexer. ASCII identifiers, `#` line comments, and a small
//! fixed token set.

use crate::diag::{codes, Diagnostic, SourceSpan};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    // keywords
    Contract,
    Interface,
    Asset,
    State,
    Transaction,
    Private,
    Let,
    In,
    New,
    If,
    Else,
    Disown,
    Pack,
    Main,
    Implements,
    Where,
    Returns,
    Unit,
    // punctuation
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Lt,
    Gt,
    GtGt,
    At,
    Dot,
    Comma,
    Colon,
    ColonEq,
    Semi,
    Pipe,
    Arrow, // ->
    Eq,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Contract => "`contract`".into(),
            Tok::Interface => "`interface`".into(),
            Tok::Asset => "`asset`".into(),
            Tok::State => "`state`".into(),
            Tok::Transaction => "`transaction`".into(),
            Tok::Private => "`private`".into(),
            Tok::Let => "`let`".into(),
            Tok::In => "`in`".into(),
            Tok::New => "`new`".into(),
            Tok::If => "`if`".into(),
            Tok::Else => "`else`".into(),
            Tok::Disown => "`disown`".into(),
            Tok::Pack => "`pack`".into(),
            Tok::Main => "`main`".into(),
            Tok::Implements => "`implements`".into(),
            Tok::Where => "`where`".into(),
            Tok::Returns => "`returns`".into(),
            Tok::Unit => "`unit`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Lt => "`<`".into(),
            Tok::Gt => "`>`".into(),
            Tok::GtGt => "`>>`".into(),
            Tok::At => "`@`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Colon => "`:`".into(),
            Tok::ColonEq => "`:=`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Pipe => "`|`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub span: SourceSpan,
}

fn keyword(s: &str) -> Option<Tok> {
    Some(match s {
        "contract" => Tok::Contract,
        "interface" => Tok::Interface,
        "asset" => Tok::Asset,
        "state" => Tok::State,
        "transaction" => Tok::Transaction,
        "private" => Tok::Private,
        "let" => Tok::Let,
        "in" => Tok::In,
        "new" => Tok::New,
        "if" => Tok::If,
        "else" => Tok::Else,
        "disown" => Tok::Disown,
        "pack" => Tok::Pack,
        "main" => Tok::Main,
        "implements" => Tok::Implements,
        "where" => Tok::Where,
        "returns" => Tok::Returns,
        "unit" => Tok::Unit,
        _ => return None,
    })
}

pub fn lex(source: &str) -> Result<Vec<Token>, Diagnostic> {
    let mut out = Vec::new();
    let bytes = source.as_bytes();
    let mut i = 0usize;
    let mut line = 1u32;
    let mut col = 1u32;

    macro_rules! push {
        ($tok:expr, $l:expr, $c:expr, $len:expr) => {
            out.push(Token { tok: $tok, span: SourceSpan::new($l, $c, $l, $c + $len - 1) })
        };
    }

    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b' ' | b'\t' | b'\r' => {
                i += 1;
                col += 1;
            }
            b'\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            b'#' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b'{' => { push!(Tok::LBrace, line, col, 1); i += 1; col += 1; }
            b'}' => { push!(Tok::RBrace, line, col, 1); i += 1; col += 1; }
            b'(' => { push!(Tok::LParen, line, col, 1); i += 1; col += 1; }
            b')' => { push!(Tok::RParen, line, col, 1); i += 1; col += 1; }
            b'[' => { push!(Tok::LBracket, line, col, 1); i += 1; col += 1; }
            b']' => { push!(Tok::RBracket, line, col, 1); i += 1; col += 1; }
            b'<' => { push!(Tok::Lt, line, col, 1); i += 1; col += 1; }
            b'>' => {
                if i + 1 < bytes.len() && bytes[i + 1] == b'>' {
                    push!(Tok::GtGt, line, col, 2);
                    i += 2;
                    col += 2;
                } else {
                    push!(Tok::Gt, line, col, 1);
                    i += 1;
                    col += 1;
                }
            }
            b'@' => { push!(Tok::At, line, col, 1); i += 1; col += 1; }
            b'.' => { push!(Tok::Dot, line, col, 1); i += 1; col += 1; }
            b',' => { push!(Tok::Comma, line, col, 1); i += 1; col += 1; }
            b';' => { push!(Tok::Semi, line, col, 1); i += 1; col += 1; }
            b'|' => { push!(Tok::Pipe, line, col, 1); i += 1; col += 1; }
            b'=' => { push!(Tok::Eq, line, col, 1); i += 1; col += 1; }
            b':' => {
                if i + 1 < bytes.len() && bytes[i + 1] == b'=' {
                    push!(Tok::ColonEq, line, col, 2);
                    i += 2;
                    col += 2;
                } else {
                    push!(Tok::Colon, line, col, 1);
                    i += 1;
                    col += 1;
                }
            }
            b'-' => {
                if i + 1 < bytes.len() && bytes[i + 1] == b'>' {
                    push!(Tok::Arrow, line, col, 2);
                    i += 2;
                    col += 2;
                } else {
                    return Err(Diagnostic::error(
                        codes::SYN001,
                        SourceSpan::point(line, col),
                        "lex",
                        "unexpected character `-`",
                    ));
                }
            }
            b'A'..=b'Z' | b'a'..=b'z' | b'_' => {
                let start = i;
                let c0 = col;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                    col += 1;
                }
                let text = &source[start..i];
                let tok = keyword(text).unwrap_or_else(|| Tok::Ident(text.to_string()));
                out.push(Token {
                    tok,
                    span: SourceSpan::new(line, c0, line, col - 1),
                });
            }
            _ => {
                return Err(Diagnostic::error(
                    codes::SYN001,
                    SourceSpan::point(line, col),
                    "lex",
                    format!("unexpected character `{}`", b as char),
                ));
            }
        }
    }
    out.push(Token { tok: Tok::Eof, span: SourceSpan::point(line, col) });
    Ok(out)
}
