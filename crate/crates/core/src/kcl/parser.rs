//! Recursive-descent parser for KCL. The accepted grammar is written out in
//! `docs/kcl-grammar.md`.

use super::ast::*;
use super::lexer::{lex, Token, TokenKind};
use thiserror::Error;

/// Nesting limit for expressions and blocks; deeper input is rejected instead
/// of risking stack exhaustion.
const MAX_DEPTH: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: expected {expected}, found {found}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub expected: String,
    pub found: String,
}

/// Parses one kernel function from raw bytes. Invalid UTF-8 is a parse error.
pub fn parse_kernel_bytes(bytes: &[u8]) -> Result<KernelAst, ParseError> {
    match std::str::from_utf8(bytes) {
        Ok(s) => parse_kernel(s),
        Err(e) => Err(ParseError {
            line: 1,
            column: e.valid_up_to() + 1,
            expected: "UTF-8 text".into(),
            found: "invalid byte".into(),
        }),
    }
}

pub fn parse_kernel(source: &str) -> Result<KernelAst, ParseError> {
    let tokens = lex(source).map_err(|e| ParseError {
        line: e.line,
        column: e.column,
        expected: "a valid token".into(),
        found: e.message,
    })?;
    let (eof_line, eof_col) = tokens
        .last()
        .map(|t| (t.line, t.column + t.text.chars().count()))
        .unwrap_or((1, 1));
    let mut p = Parser {
        tokens,
        pos: 0,
        depth: 0,
        eof: (eof_line, eof_col),
    };
    let kernel = p.kernel()?;
    if let Some(t) = p.peek() {
        return Err(p.error_at(t.clone(), "end of input"));
    }
    Ok(kernel)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    depth: usize,
    eof: (usize, usize),
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_kind(&self) -> Option<&TokenKind> {
        self.peek().map(|t| &t.kind)
    }

    fn peek_kind_at(&self, offset: usize) -> Option<&TokenKind> {
        self.tokens.get(self.pos + offset).map(|t| &t.kind)
    }

    fn error_at(&self, tok: Token, expected: &str) -> ParseError {
        ParseError {
            line: tok.line,
            column: tok.column,
            expected: expected.to_string(),
            found: tok.kind.to_string(),
        }
    }

    fn error(&self, expected: &str) -> ParseError {
        match self.peek() {
            Some(t) => self.error_at(t.clone(), expected),
            None => ParseError {
                line: self.eof.0,
                column: self.eof.1,
                expected: expected.to_string(),
                found: "end of input".into(),
            },
        }
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek_kind(), Some(TokenKind::Punct(q)) if *q == p)
    }

    fn is_keyword(&self, k: &str) -> bool {
        matches!(self.peek_kind(), Some(TokenKind::Keyword(q)) if *q == k)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> Result<(), ParseError> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            Err(self.error(&format!("`{p}`")))
        }
    }

    fn expect_keyword(&mut self, k: &str) -> Result<(), ParseError> {
        if self.is_keyword(k) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("`{k}`")))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek_kind() {
            Some(TokenKind::Ident(name)) => {
                let name = name.clone();
                self.pos += 1;
                Ok(name)
            }
            _ => Err(self.error("identifier")),
        }
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            Err(self.error("shallower nesting"))
        } else {
            Ok(())
        }
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    fn base_type(&mut self) -> Option<BaseType> {
        let ty = match self.peek_kind() {
            Some(TokenKind::Keyword("int")) => BaseType::Int,
            Some(TokenKind::Keyword("float")) => BaseType::Float,
            Some(TokenKind::Keyword("bool")) => BaseType::Bool,
            _ => return None,
        };
        self.pos += 1;
        Some(ty)
    }

    fn kernel(&mut self) -> Result<KernelAst, ParseError> {
        self.expect_keyword("kernel")?;
        self.expect_keyword("void")?;
        let name = self.ident()?;
        self.expect_punct("(")?;
        let mut params = Vec::new();
        if !self.eat_punct(")") {
            loop {
                params.push(self.param()?);
                if self.eat_punct(")") {
                    break;
                }
                if !self.eat_punct(",") {
                    return Err(self.error("`,` or `)`"));
                }
            }
        }
        let body = self.block()?;
        Ok(KernelAst { name, params, body })
    }

    fn param(&mut self) -> Result<Param, ParseError> {
        let qualifier = if self.is_keyword("global") {
            self.pos += 1;
            Qualifier::Global
        } else if self.is_keyword("local") {
            self.pos += 1;
            Qualifier::Local
        } else {
            Qualifier::None
        };
        let ty = self.base_type().ok_or_else(|| self.error("type"))?;
        let is_pointer = self.eat_punct("*");
        let name = self.ident()?;
        Ok(Param {
            qualifier,
            ty,
            is_pointer,
            name,
        })
    }

    fn block(&mut self) -> Result<Vec<Stmt>, ParseError> {
        self.enter()?;
        self.expect_punct("{")?;
        let mut stmts = Vec::new();
        while !self.eat_punct("}") {
            if self.peek().is_none() {
                return Err(self.error("`}`"));
            }
            if let Some(s) = self.statement()? {
                stmts.push(s);
            }
        }
        self.leave();
        Ok(stmts)
    }

    /// Returns `None` for an empty statement.
    fn statement(&mut self) -> Result<Option<Stmt>, ParseError> {
        if self.eat_punct(";") {
            return Ok(None);
        }
        let stmt = match self.peek_kind() {
            Some(TokenKind::Keyword("if")) => self.if_stmt()?,
            Some(TokenKind::Keyword("for")) => {
                self.pos += 1;
                self.expect_punct("(")?;
                let init = self.simple_stmt()?;
                self.expect_punct(";")?;
                let cond = self.expr()?;
                self.expect_punct(";")?;
                let step = self.assignment()?;
                self.expect_punct(")")?;
                let body = self.block()?;
                Stmt::For {
                    init: Box::new(init),
                    cond,
                    step: Box::new(step),
                    body,
                }
            }
            Some(TokenKind::Keyword("barrier")) => {
                self.pos += 1;
                self.expect_punct("(")?;
                self.expect_punct(")")?;
                self.expect_punct(";")?;
                Stmt::Barrier
            }
            Some(TokenKind::Keyword("atomic_add")) => {
                self.pos += 1;
                self.expect_punct("(")?;
                self.expect_punct("&")?;
                let array = self.ident()?;
                self.expect_punct("[")?;
                let index = self.expr()?;
                self.expect_punct("]")?;
                self.expect_punct(",")?;
                let value = self.expr()?;
                self.expect_punct(")")?;
                self.expect_punct(";")?;
                Stmt::AtomicAdd {
                    array,
                    index,
                    value,
                }
            }
            _ => {
                let s = self.simple_stmt()?;
                self.expect_punct(";")?;
                s
            }
        };
        Ok(Some(stmt))
    }

    fn if_stmt(&mut self) -> Result<Stmt, ParseError> {
        self.enter()?;
        self.expect_keyword("if")?;
        self.expect_punct("(")?;
        let cond = self.expr()?;
        self.expect_punct(")")?;
        let then_body = self.block()?;
        let else_body = if self.is_keyword("else") {
            self.pos += 1;
            if self.is_keyword("if") {
                Some(vec![self.if_stmt()?])
            } else {
                Some(self.block()?)
            }
        } else {
            None
        };
        self.leave();
        Ok(Stmt::If {
            cond,
            then_body,
            else_body,
        })
    }

    /// A declaration or an assignment, without the trailing `;`.
    fn simple_stmt(&mut self) -> Result<Stmt, ParseError> {
        if let Some(ty) = self.base_type() {
            let name = self.ident()?;
            self.expect_punct("=")?;
            let init = self.expr()?;
            Ok(Stmt::Decl { ty, name, init })
        } else {
            self.assignment()
        }
    }

    fn assignment(&mut self) -> Result<Stmt, ParseError> {
        let name = self.ident()?;
        let target = if self.eat_punct("[") {
            let index = self.expr()?;
            self.expect_punct("]")?;
            LValue::Index { array: name, index }
        } else {
            LValue::Var(name)
        };
        self.expect_punct("=")?;
        let value = self.expr()?;
        Ok(Stmt::Assign { target, value })
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.enter()?;
        let lhs = self.additive()?;
        let op = match self.peek_kind() {
            Some(TokenKind::Punct("<")) => Some(BinOp::Lt),
            Some(TokenKind::Punct(">")) => Some(BinOp::Gt),
            Some(TokenKind::Punct("<=")) => Some(BinOp::Le),
            Some(TokenKind::Punct(">=")) => Some(BinOp::Ge),
            Some(TokenKind::Punct("==")) => Some(BinOp::Eq),
            Some(TokenKind::Punct("!=")) => Some(BinOp::Ne),
            _ => None,
        };
        let result = match op {
            Some(op) => {
                self.pos += 1;
                let rhs = self.additive()?;
                Expr::binary(op, lhs, rhs)
            }
            None => lhs,
        };
        self.leave();
        Ok(result)
    }

    fn additive(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek_kind() {
                Some(TokenKind::Punct("+")) => BinOp::Add,
                Some(TokenKind::Punct("-")) => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.multiplicative()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn multiplicative(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek_kind() {
                Some(TokenKind::Punct("*")) => BinOp::Mul,
                Some(TokenKind::Punct("/")) => BinOp::Div,
                Some(TokenKind::Punct("%")) => BinOp::Rem,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        self.enter()?;
        let e = if self.eat_punct("-") {
            Expr::Neg(Box::new(self.unary()?))
        } else if self.is_punct("(")
            && matches!(
                self.peek_kind_at(1),
                Some(TokenKind::Keyword("int" | "float" | "bool"))
            )
        {
            self.pos += 1;
            let ty = self.base_type().expect("checked above");
            self.expect_punct(")")?;
            Expr::Cast {
                ty,
                expr: Box::new(self.unary()?),
            }
        } else {
            self.primary()?
        };
        self.leave();
        Ok(e)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let Some(tok) = self.peek().cloned() else {
            return Err(self.error("expression"));
        };
        match tok.kind {
            TokenKind::Int(v) => {
                self.pos += 1;
                Ok(Expr::Int(v))
            }
            TokenKind::Float(v) => {
                self.pos += 1;
                Ok(Expr::Float(v))
            }
            TokenKind::Keyword("true") => {
                self.pos += 1;
                Ok(Expr::Bool(true))
            }
            TokenKind::Keyword("false") => {
                self.pos += 1;
                Ok(Expr::Bool(false))
            }
            TokenKind::Keyword(k @ ("get_global_id" | "get_local_id")) => {
                self.pos += 1;
                self.expect_punct("(")?;
                let dim = self.expr()?;
                self.expect_punct(")")?;
                let func = if k == "get_global_id" {
                    Builtin::GlobalId
                } else {
                    Builtin::LocalId
                };
                Ok(Expr::Builtin {
                    func,
                    dim: Box::new(dim),
                })
            }
            TokenKind::Ident(name) => {
                self.pos += 1;
                if self.eat_punct("[") {
                    let index = self.expr()?;
                    self.expect_punct("]")?;
                    Ok(Expr::Index {
                        array: name,
                        index: Box::new(index),
                    })
                } else {
                    Ok(Expr::Var(name))
                }
            }
            TokenKind::Punct("(") => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            _ => Err(self.error_at(tok, "expression")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_elementwise_kernel() {
        let k = parse_kernel(
            "kernel void k(global int* a){ int i = get_global_id(0); a[i] = a[i] + 1; }",
        )
        .unwrap();
        assert_eq!(k.name, "k");
        assert_eq!(k.params.len(), 1);
        assert!(k.params[0].is_pointer);
        assert_eq!(k.params[0].qualifier, Qualifier::Global);
        assert_eq!(k.body.len(), 2);
    }

    #[test]
    fn empty_statements_are_dropped() {
        let k = parse_kernel("kernel void k(){ ; }").unwrap();
        assert!(k.params.is_empty());
        assert!(k.body.is_empty());
    }

    #[test]
    fn error_points_at_brace() {
        let err = parse_kernel("kernel void k(int a{").unwrap_err();
        assert_eq!((err.line, err.column), (1, 20));
        assert!(err.found.contains('{'), "{err}");
        assert!(err.expected.contains(','), "{err}");
    }

    #[test]
    fn precedence_and_associativity() {
        let k = parse_kernel("kernel void k(){ int x = 1 - 2 - 3 * 4; }").unwrap();
        let Stmt::Decl { init, .. } = &k.body[0] else {
            panic!()
        };
        let expected = Expr::binary(
            BinOp::Sub,
            Expr::binary(BinOp::Sub, Expr::Int(1), Expr::Int(2)),
            Expr::binary(BinOp::Mul, Expr::Int(3), Expr::Int(4)),
        );
        assert_eq!(init, &expected);
    }

    #[test]
    fn else_if_chain() {
        let k = parse_kernel(
            "kernel void k(int n){ int x = 0; if (n < 1) { x = 1; } else if (n < 2) { x = 2; } else { x = 3; } }",
        )
        .unwrap();
        let Stmt::If { else_body, .. } = &k.body[1] else {
            panic!()
        };
        assert!(matches!(else_body.as_deref(), Some([Stmt::If { .. }])));
    }

    #[test]
    fn deep_nesting_is_an_error_not_a_crash() {
        let src = format!(
            "kernel void k(){{ int x = {}1{}; }}",
            "(".repeat(5000),
            ")".repeat(5000)
        );
        assert!(parse_kernel(&src).is_err());
    }

    #[test]
    fn truncated_input_reports_end() {
        let err = parse_kernel("kernel void k(){ int x = 1;").unwrap_err();
        assert_eq!(err.found, "end of input");
    }
}
