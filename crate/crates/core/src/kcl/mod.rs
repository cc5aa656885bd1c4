//! KCL, a small OpenCL-flavoured kernel language: lexer, parser, semantic
//! checker and canonical renderer.

pub mod ast;
pub mod check;
pub mod lexer;
pub mod parser;
pub mod render;

pub use ast::{BaseType, BinOp, Builtin, Expr, KernelAst, LValue, Param, Qualifier, Stmt};
pub use check::{check_kernel, SemanticError};
pub use parser::{parse_kernel, parse_kernel_bytes, ParseError};
pub use render::render_source;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompileError {
    #[error("parse error: {0}")]
    Parse(#[from] ParseError),
    #[error("semantic error: {0}")]
    Semantic(#[from] SemanticError),
}

/// The compile oracle: parse and check in one step.
pub fn compile(source: &str) -> Result<KernelAst, CompileError> {
    let ast = parse_kernel(source)?;
    check_kernel(&ast)?;
    Ok(ast)
}
