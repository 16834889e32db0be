use super::ast::Span;
use super::SyntaxError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Number(f64),
    Str(String),
    Ident(String),
    // keywords
    If,
    Then,
    Else,
    For,
    In,
    Return,
    And,
    Or,
    Not,
    True,
    False,
    Null,
    // punctuation
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Comma,
    Colon,
    Semi,
    Dot,
    Assign,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Number(n) => format!("number {}", crate::value::format_number(*n)),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::Ident(s) => format!("identifier '{s}'"),
            Tok::Eof => "end of input".to_string(),
            other => format!("'{}'", other.symbol()),
        }
    }

    pub fn symbol(&self) -> &'static str {
        match self {
            Tok::If => "if",
            Tok::Then => "then",
            Tok::Else => "else",
            Tok::For => "for",
            Tok::In => "in",
            Tok::Return => "return",
            Tok::And => "and",
            Tok::Or => "or",
            Tok::Not => "not",
            Tok::True => "true",
            Tok::False => "false",
            Tok::Null => "null",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::Comma => ",",
            Tok::Colon => ":",
            Tok::Semi => ";",
            Tok::Dot => ".",
            Tok::Assign => "=",
            Tok::Eq => "==",
            Tok::Ne => "!=",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::Percent => "%",
            Tok::Number(_) | Tok::Str(_) | Tok::Ident(_) | Tok::Eof => "",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

fn keyword(word: &str) -> Option<Tok> {
    Some(match word {
        "if" => Tok::If,
        "then" => Tok::Then,
        "else" => Tok::Else,
        "for" => Tok::For,
        "in" => Tok::In,
        "return" => Tok::Return,
        "and" => Tok::And,
        "or" => Tok::Or,
        "not" => Tok::Not,
        "true" => Tok::True,
        "false" => Tok::False,
        "null" => Tok::Null,
        _ => return None,
    })
}

pub fn is_keyword(word: &str) -> bool {
    keyword(word).is_some()
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: u32,
    col: u32,
}

impl Lexer<'_> {
    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
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

    fn span(&self) -> Span {
        Span::new(self.line, self.col)
    }

    fn error(&self, span: Span, found: String, expected: &str) -> SyntaxError {
        SyntaxError {
            line: span.line,
            col: span.col,
            found,
            expected: expected.to_string(),
        }
    }

    fn number(&mut self, start: Span) -> Result<Tok, SyntaxError> {
        let mut text = String::new();
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() || c == '_' {
                text.push(c);
                self.bump();
            } else {
                break;
            }
        }
        if self.peek() == Some('.') {
            // only a fraction if a digit follows; `1.foo` is not valid either way
            let mut look = self.chars.clone();
            look.next();
            if look.peek().is_some_and(|c| c.is_ascii_digit()) {
                text.push('.');
                self.bump();
                while let Some(c) = self.peek().filter(|c| c.is_ascii_digit()) {
                    text.push(c);
                    self.bump();
                }
            }
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            let mut look = self.chars.clone();
            look.next();
            let next = look.peek().copied();
            let has_exp = match next {
                Some(c) if c.is_ascii_digit() => true,
                Some('+' | '-') => {
                    look.next();
                    look.peek().is_some_and(|c| c.is_ascii_digit())
                }
                _ => false,
            };
            if has_exp {
                text.push('e');
                self.bump();
                if let Some(sign @ ('+' | '-')) = self.peek() {
                    text.push(sign);
                    self.bump();
                }
                while let Some(c) = self.peek().filter(|c| c.is_ascii_digit()) {
                    text.push(c);
                    self.bump();
                }
            }
        }
        let cleaned: String = text.chars().filter(|&c| c != '_').collect();
        match cleaned.parse::<f64>() {
            Ok(n) if n.is_finite() => Ok(Tok::Number(n)),
            _ => Err(self.error(start, format!("number {text}"), "a finite number literal")),
        }
    }

    fn string(&mut self, quote: char, start: Span) -> Result<Tok, SyntaxError> {
        self.bump();
        let mut out = String::new();
        loop {
            match self.bump() {
                None => {
                    return Err(self.error(self.span(), "end of input".into(), "closing quote"))
                }
                Some(c) if c == quote => return Ok(Tok::Str(out)),
                Some('\\') => {
                    let esc = self.span();
                    match self.bump() {
                        Some('n') => out.push('\n'),
                        Some('t') => out.push('\t'),
                        Some('r') => out.push('\r'),
                        Some('0') => out.push('\0'),
                        Some('\\') => out.push('\\'),
                        Some('"') => out.push('"'),
                        Some('\'') => out.push('\''),
                        Some('u') => {
                            let mut hex = String::new();
                            for _ in 0..4 {
                                match self.bump() {
                                    Some(h) if h.is_ascii_hexdigit() => hex.push(h),
                                    _ => {
                                        return Err(self.error(
                                            esc,
                                            "malformed escape".into(),
                                            "\\u followed by 4 hex digits",
                                        ))
                                    }
                                }
                            }
                            let code = u32::from_str_radix(&hex, 16).expect("hex digits");
                            match char::from_u32(code) {
                                Some(c) => out.push(c),
                                None => {
                                    return Err(self.error(
                                        esc,
                                        format!("\\u{hex}"),
                                        "a unicode scalar value",
                                    ))
                                }
                            }
                        }
                        Some(other) => {
                            return Err(self.error(
                                esc,
                                format!("escape '\\{other}'"),
                                "one of \\n \\t \\r \\0 \\\\ \\\" \\' \\uXXXX",
                            ))
                        }
                        None => {
                            return Err(self.error(start, "end of input".into(), "closing quote"))
                        }
                    }
                }
                Some(c) => out.push(c),
            }
        }
    }
}

pub fn tokenize(source: &str) -> Result<Vec<Token>, SyntaxError> {
    let mut lx = Lexer {
        chars: source.chars().peekable(),
        line: 1,
        col: 1,
    };
    let mut out = Vec::new();
    loop {
        while let Some(c) = lx.peek() {
            if c.is_whitespace() {
                lx.bump();
            } else if c == '#' {
                while lx.peek().is_some_and(|c| c != '\n') {
                    lx.bump();
                }
            } else {
                break;
            }
        }
        let span = lx.span();
        let Some(c) = lx.peek() else {
            out.push(Token { tok: Tok::Eof, span });
            return Ok(out);
        };
        let tok = if c.is_ascii_digit() {
            lx.number(span)?
        } else if c == '"' || c == '\'' {
            lx.string(c, span)?
        } else if c.is_alphabetic() || c == '_' {
            let mut word = String::new();
            while let Some(c) = lx.peek().filter(|c| c.is_alphanumeric() || *c == '_') {
                word.push(c);
                lx.bump();
            }
            keyword(&word).unwrap_or(Tok::Ident(word))
        } else {
            lx.bump();
            let two = |lx: &mut Lexer, next: char, yes: Tok, no: Tok| {
                if lx.peek() == Some(next) {
                    lx.bump();
                    yes
                } else {
                    no
                }
            };
            match c {
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                '[' => Tok::LBracket,
                ']' => Tok::RBracket,
                '{' => Tok::LBrace,
                '}' => Tok::RBrace,
                ',' => Tok::Comma,
                ':' => Tok::Colon,
                ';' => Tok::Semi,
                '.' => Tok::Dot,
                '+' => Tok::Plus,
                '-' => Tok::Minus,
                '*' => Tok::Star,
                '/' => Tok::Slash,
                '%' => Tok::Percent,
                '=' => two(&mut lx, '=', Tok::Eq, Tok::Assign),
                '<' => two(&mut lx, '=', Tok::Le, Tok::Lt),
                '>' => two(&mut lx, '=', Tok::Ge, Tok::Gt),
                '!' => {
                    if lx.peek() == Some('=') {
                        lx.bump();
                        Tok::Ne
                    } else {
                        return Err(lx.error(span, "'!'".into(), "'!=' (use `not` for negation)"));
                    }
                }
                other => {
                    return Err(lx.error(span, format!("character {other:?}"), "a token"));
                }
            }
        };
        out.push(Token { tok, span });
    }
}
