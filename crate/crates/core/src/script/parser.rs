use super::ast::{BinaryOp, Expr, Literal, Span, Stmt, UnaryOp};
use super::lexer::{tokenize, Tok, Token};
use super::SyntaxError;

const MAX_DEPTH: usize = 200;

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    depth: usize,
}

type PResult<T> = Result<T, SyntaxError>;

pub fn parse_program(source: &str) -> PResult<Vec<Stmt>> {
    let tokens = tokenize(source)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        depth: 0,
    };
    let body = p.statements(true)?;
    Ok(body)
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn span(&self) -> Span {
        self.tokens[self.pos].span
    }

    fn prev_line(&self) -> u32 {
        if self.pos == 0 {
            0
        } else {
            self.tokens[self.pos - 1].span.line
        }
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.advance();
            true
        } else {
            false
        }
    }

    fn error(&self, expected: impl Into<String>) -> SyntaxError {
        let t = &self.tokens[self.pos];
        SyntaxError {
            line: t.span.line,
            col: t.span.col,
            found: t.tok.describe(),
            expected: expected.into(),
        }
    }

    fn expect(&mut self, tok: Tok) -> PResult<Span> {
        if *self.peek() == tok {
            Ok(self.advance().span)
        } else {
            Err(self.error(format!("'{}'", tok.symbol())))
        }
    }

    fn enter(&mut self) -> PResult<()> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(self.error(format!("nesting no deeper than {MAX_DEPTH}")));
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.advance();
                Ok(name)
            }
            _ => Err(self.error("an identifier")),
        }
    }

    fn statements(&mut self, top_level: bool) -> PResult<Vec<Stmt>> {
        let mut body = Vec::new();
        loop {
            while self.eat(&Tok::Semi) {}
            match self.peek() {
                Tok::Eof if top_level => return Ok(body),
                Tok::RBrace if !top_level => return Ok(body),
                Tok::Eof => return Err(self.error("'}'")),
                _ => body.push(self.statement()?),
            }
        }
    }

    fn block(&mut self) -> PResult<Vec<Stmt>> {
        self.expect(Tok::LBrace)?;
        self.enter()?;
        let body = self.statements(false)?;
        self.leave();
        self.expect(Tok::RBrace)?;
        Ok(body)
    }

    fn statement(&mut self) -> PResult<Stmt> {
        let span = self.span();
        match self.peek() {
            Tok::Return => {
                self.advance();
                // a value must start on the same line as `return`
                if matches!(self.peek(), Tok::RBrace | Tok::Eof | Tok::Semi)
                    || self.span().line != self.prev_line()
                {
                    Ok(Stmt::Return(None, span))
                } else {
                    Ok(Stmt::Return(Some(self.expr()?), span))
                }
            }
            Tok::For => {
                self.advance();
                let var = self.ident()?;
                self.expect(Tok::In)?;
                let iter = self.expr()?;
                let body = self.block()?;
                Ok(Stmt::For {
                    var,
                    iter,
                    body,
                    span,
                })
            }
            Tok::If => self.if_statement(),
            _ => {
                let expr = self.expr()?;
                if *self.peek() == Tok::Assign {
                    if !expr.is_place() {
                        return Err(SyntaxError {
                            line: span.line,
                            col: span.col,
                            found: "'='".into(),
                            expected: "an assignable path on the left of '='".into(),
                        });
                    }
                    self.advance();
                    let value = self.expr()?;
                    Ok(Stmt::Assign {
                        target: expr,
                        value,
                        span,
                    })
                } else {
                    Ok(Stmt::Expr(expr, span))
                }
            }
        }
    }

    fn if_statement(&mut self) -> PResult<Stmt> {
        let span = self.expect(Tok::If)?;
        let cond = self.expr()?;
        if *self.peek() == Tok::Then {
            // `if c then a else b` used as a statement
            self.advance();
            let then = self.expr()?;
            self.expect(Tok::Else)?;
            let otherwise = self.expr()?;
            return Ok(Stmt::Expr(
                Expr::Cond {
                    cond: Box::new(cond),
                    then: Box::new(then),
                    otherwise: Box::new(otherwise),
                    span,
                },
                span,
            ));
        }
        if *self.peek() != Tok::LBrace {
            return Err(self.error("'{' or 'then'"));
        }
        let then_body = self.block()?;
        let else_body = if self.eat(&Tok::Else) {
            if *self.peek() == Tok::If {
                self.enter()?;
                let nested = self.if_statement()?;
                self.leave();
                Some(vec![nested])
            } else {
                Some(self.block()?)
            }
        } else {
            None
        };
        Ok(Stmt::If {
            cond,
            then_body,
            else_body,
            span,
        })
    }

    pub fn expr(&mut self) -> PResult<Expr> {
        self.enter()?;
        let e = self.or_expr();
        self.leave();
        e
    }

    fn or_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.and_expr()?;
        while *self.peek() == Tok::Or {
            let span = self.advance().span;
            let rhs = self.and_expr()?;
            lhs = Expr::Binary(BinaryOp::Or, Box::new(lhs), Box::new(rhs), span);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.not_expr()?;
        while *self.peek() == Tok::And {
            let span = self.advance().span;
            let rhs = self.not_expr()?;
            lhs = Expr::Binary(BinaryOp::And, Box::new(lhs), Box::new(rhs), span);
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> PResult<Expr> {
        if *self.peek() == Tok::Not {
            let span = self.advance().span;
            self.enter()?;
            let inner = self.not_expr();
            self.leave();
            return Ok(Expr::Unary(UnaryOp::Not, Box::new(inner?), span));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> PResult<Expr> {
        let lhs = self.additive()?;
        let op = match self.peek() {
            Tok::Eq => BinaryOp::Eq,
            Tok::Ne => BinaryOp::Ne,
            Tok::Lt => BinaryOp::Lt,
            Tok::Le => BinaryOp::Le,
            Tok::Gt => BinaryOp::Gt,
            Tok::Ge => BinaryOp::Ge,
            _ => return Ok(lhs),
        };
        let span = self.advance().span;
        let rhs = self.additive()?;
        Ok(Expr::Binary(op, Box::new(lhs), Box::new(rhs), span))
    }

    fn additive(&mut self) -> PResult<Expr> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinaryOp::Add,
                Tok::Minus => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            let span = self.advance().span;
            let rhs = self.multiplicative()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs), span);
        }
    }

    fn multiplicative(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinaryOp::Mul,
                Tok::Slash => BinaryOp::Div,
                Tok::Percent => BinaryOp::Rem,
                _ => return Ok(lhs),
            };
            let span = self.advance().span;
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs), span);
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        if *self.peek() == Tok::Minus {
            let span = self.advance().span;
            self.enter()?;
            let inner = self.unary();
            self.leave();
            return Ok(Expr::Unary(UnaryOp::Neg, Box::new(inner?), span));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        loop {
            match self.peek() {
                Tok::Dot => {
                    let span = self.advance().span;
                    let name = self.ident()?;
                    e = Expr::Field(Box::new(e), name, span);
                }
                // an opening bracket on a new line starts a new statement
                Tok::LBracket if self.span().line == self.prev_line() => {
                    let span = self.advance().span;
                    let idx = self.expr()?;
                    self.expect(Tok::RBracket)?;
                    e = Expr::Index(Box::new(e), Box::new(idx), span);
                }
                _ => return Ok(e),
            }
        }
    }

    fn primary(&mut self) -> PResult<Expr> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Number(n) => {
                self.advance();
                Ok(Expr::Literal(Literal::Number(n), span))
            }
            Tok::Str(s) => {
                self.advance();
                Ok(Expr::Literal(Literal::String(s), span))
            }
            Tok::True => {
                self.advance();
                Ok(Expr::Literal(Literal::Bool(true), span))
            }
            Tok::False => {
                self.advance();
                Ok(Expr::Literal(Literal::Bool(false), span))
            }
            Tok::Null => {
                self.advance();
                Ok(Expr::Literal(Literal::Null, span))
            }
            Tok::Ident(name) => {
                self.advance();
                if *self.peek() == Tok::LParen && self.span().line == self.prev_line() {
                    self.advance();
                    let args = self.comma_list(Tok::RParen)?;
                    Ok(Expr::Call(name, args, span))
                } else {
                    Ok(Expr::Ident(name, span))
                }
            }
            Tok::LParen => {
                self.advance();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::LBracket => {
                self.advance();
                let items = self.comma_list(Tok::RBracket)?;
                Ok(Expr::List(items, span))
            }
            Tok::LBrace => {
                self.advance();
                let mut entries = Vec::new();
                loop {
                    if self.eat(&Tok::RBrace) {
                        break;
                    }
                    let key = match self.peek().clone() {
                        Tok::Str(s) => s,
                        Tok::Ident(s) => s,
                        _ => return Err(self.error("a map key (string or identifier)")),
                    };
                    self.advance();
                    self.expect(Tok::Colon)?;
                    let value = self.expr()?;
                    entries.push((key, value));
                    if !self.eat(&Tok::Comma) {
                        self.expect(Tok::RBrace)?;
                        break;
                    }
                }
                Ok(Expr::Map(entries, span))
            }
            Tok::If => {
                self.advance();
                let cond = self.expr()?;
                self.expect(Tok::Then)?;
                let then = self.expr()?;
                self.expect(Tok::Else)?;
                let otherwise = self.expr()?;
                Ok(Expr::Cond {
                    cond: Box::new(cond),
                    then: Box::new(then),
                    otherwise: Box::new(otherwise),
                    span,
                })
            }
            _ => Err(self.error("an expression")),
        }
    }

    fn comma_list(&mut self, close: Tok) -> PResult<Vec<Expr>> {
        let mut items = Vec::new();
        loop {
            if self.eat(&close) {
                return Ok(items);
            }
            items.push(self.expr()?);
            if !self.eat(&Tok::Comma) {
                self.expect(close)?;
                return Ok(items);
            }
        }
    }
}
