//! S-expression reader shared by the SyGuS-IF parser, the SMT model reader,
//! and candidate extraction from LLM responses.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

/// 1-based line and column of a token.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Atom {
    Symbol(String),
    Keyword(String),
    Numeral(String),
    /// `#b...` digits without the prefix.
    Binary(String),
    /// `#x...` digits without the prefix.
    Hex(String),
    Str(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SExpr {
    Atom(Atom, Pos),
    List(Vec<SExpr>, Pos),
}

impl SExpr {
    pub fn pos(&self) -> Pos {
        match self {
            SExpr::Atom(_, p) | SExpr::List(_, p) => *p,
        }
    }

    pub fn as_symbol(&self) -> Option<&str> {
        match self {
            SExpr::Atom(Atom::Symbol(s), _) => Some(s),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[SExpr]> {
        match self {
            SExpr::List(items, _) => Some(items),
            _ => None,
        }
    }

    /// Head symbol of a non-empty list.
    pub fn head(&self) -> Option<&str> {
        self.as_list().and_then(|l| l.first()).and_then(SExpr::as_symbol)
    }
}

impl fmt::Display for SExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SExpr::Atom(a, _) => match a {
                Atom::Symbol(s) | Atom::Numeral(s) => f.write_str(s),
                Atom::Keyword(s) => write!(f, ":{}", s),
                Atom::Binary(s) => write!(f, "#b{}", s),
                Atom::Hex(s) => write!(f, "#x{}", s),
                Atom::Str(s) => write!(f, "\"{}\"", s.replace('"', "\"\"")),
            },
            SExpr::List(items, _) => {
                f.write_str("(")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{}", item)?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{pos}: {message}")]
pub struct SyntaxError {
    pub pos: Pos,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Open,
    Close,
    Atom(Atom),
}

struct Lexer<'a> {
    chars: core::iter::Peekable<core::str::Chars<'a>>,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        Lexer {
            chars: text.chars().peekable(),
            line: 1,
            col: 1,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            col: self.col,
        }
    }

    fn err(&self, pos: Pos, message: impl Into<String>) -> SyntaxError {
        SyntaxError {
            pos,
            message: message.into(),
        }
    }

    fn next_token(&mut self) -> Result<Option<(Tok, Pos)>, SyntaxError> {
        loop {
            match self.chars.peek() {
                None => return Ok(None),
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some(';') => {
                    while let Some(c) = self.bump() {
                        if c == '\n' {
                            break;
                        }
                    }
                }
                Some(_) => break,
            }
        }
        let pos = self.pos();
        let c = self.bump().expect("peeked");
        let tok = match c {
            '(' => Tok::Open,
            ')' => Tok::Close,
            '"' => {
                let mut s = String::new();
                loop {
                    match self.bump() {
                        None => return Err(self.err(pos, "unterminated string literal")),
                        Some('"') => {
                            if self.chars.peek() == Some(&'"') {
                                self.bump();
                                s.push('"');
                            } else {
                                break;
                            }
                        }
                        Some(ch) => s.push(ch),
                    }
                }
                Tok::Atom(Atom::Str(s))
            }
            '|' => {
                let mut s = String::new();
                loop {
                    match self.bump() {
                        None => return Err(self.err(pos, "unterminated quoted symbol")),
                        Some('|') => break,
                        Some(ch) => s.push(ch),
                    }
                }
                Tok::Atom(Atom::Symbol(s))
            }
            '#' => {
                let kind = self.bump();
                let digits = self.take_word();
                match kind {
                    Some('b') if !digits.is_empty() && digits.chars().all(|d| d == '0' || d == '1') => {
                        Tok::Atom(Atom::Binary(digits))
                    }
                    Some('x') if !digits.is_empty() && digits.chars().all(|d| d.is_ascii_hexdigit()) => {
                        Tok::Atom(Atom::Hex(digits))
                    }
                    _ => return Err(self.err(pos, "malformed bitvector literal")),
                }
            }
            ':' => {
                let word = self.take_word();
                if word.is_empty() {
                    return Err(self.err(pos, "empty keyword"));
                }
                Tok::Atom(Atom::Keyword(word))
            }
            _ => {
                let mut word = String::new();
                word.push(c);
                word.push_str(&self.take_word());
                if word.chars().all(|d| d.is_ascii_digit()) {
                    Tok::Atom(Atom::Numeral(word))
                } else {
                    Tok::Atom(Atom::Symbol(word))
                }
            }
        };
        Ok(Some((tok, pos)))
    }

    fn take_word(&mut self) -> String {
        let mut s = String::new();
        while let Some(&c) = self.chars.peek() {
            if c.is_whitespace() || c == '(' || c == ')' || c == ';' || c == '"' || c == '|' {
                break;
            }
            s.push(c);
            self.bump();
        }
        s
    }
}

/// Reads every top-level S-expression in `text`.
pub fn parse_all(text: &str) -> Result<Vec<SExpr>, SyntaxError> {
    Ok(parse_counting(text)?.0)
}

/// Like [`parse_all`] but also returns the number of lexical tokens
/// (parentheses included) in the source.
pub fn parse_counting(text: &str) -> Result<(Vec<SExpr>, usize), SyntaxError> {
    let mut lexer = Lexer::new(text);
    let mut stack: Vec<(Vec<SExpr>, Pos)> = Vec::new();
    let mut top = Vec::new();
    let mut count = 0usize;
    while let Some((tok, pos)) = lexer.next_token()? {
        count += 1;
        match tok {
            Tok::Open => stack.push((Vec::new(), pos)),
            Tok::Close => {
                let (items, open) = stack
                    .pop()
                    .ok_or_else(|| lexer.err(pos, "unexpected ')'"))?;
                let list = SExpr::List(items, open);
                match stack.last_mut() {
                    Some((parent, _)) => parent.push(list),
                    None => top.push(list),
                }
            }
            Tok::Atom(a) => {
                let atom = SExpr::Atom(a, pos);
                match stack.last_mut() {
                    Some((parent, _)) => parent.push(atom),
                    None => top.push(atom),
                }
            }
        }
    }
    if let Some((_, open)) = stack.last() {
        return Err(lexer.err(*open, "unclosed '('"));
    }
    Ok((top, count))
}

/// Reads exactly one S-expression.
pub fn parse_one(text: &str) -> Result<SExpr, SyntaxError> {
    let mut all = parse_all(text)?;
    match all.len() {
        1 => Ok(all.pop().unwrap()),
        0 => Err(SyntaxError {
            pos: Pos { line: 1, col: 1 },
            message: "empty input".to_string(),
        }),
        _ => Err(SyntaxError {
            pos: all[1].pos(),
            message: "trailing input after expression".to_string(),
        }),
    }
}

/// Finds the first balanced parenthesized form in free text whose head symbol
/// is `head`, returning its byte span. Text outside the form (prose, code
/// fences) is ignored.
pub fn find_form(text: &str, head: &str) -> Option<(usize, usize)> {
    let bytes = text.as_bytes();
    let mut search = 0;
    while let Some(rel) = text[search..].find('(') {
        let start = search + rel;
        let after = text[start + 1..].trim_start();
        let skipped = text.len() - after.len();
        if after.starts_with(head)
            && after[head.len()..]
                .chars()
                .next()
                .is_some_and(|c| c.is_whitespace() || c == '(')
        {
            let mut depth = 0i32;
            for (i, &b) in bytes.iter().enumerate().skip(start) {
                match b {
                    b'(' => depth += 1,
                    b')' => {
                        depth -= 1;
                        if depth == 0 {
                            return Some((start, i + 1));
                        }
                    }
                    _ => {}
                }
            }
            return None;
        }
        search = skipped.max(start + 1);
    }
    None
}
