//! Identifier rewriting. Every declaration (kernel name, parameters, locals,
//! including shadowing ones) receives a distinct name from the sequence
//! a, b, ..., z, aa, ab, ..., in a random order.

use crate::kcl::ast::*;
use crate::kcl::check::Scopes;
use crate::kcl::lexer::KEYWORDS;
use crate::kcl::render_source;
use rand::seq::SliceRandom;
use rand::Rng;

/// The `n`-th name of a, b, ..., z, aa, ab, ... (bijective base 26).
pub fn fresh_name(mut n: usize) -> String {
    let mut chars = Vec::new();
    loop {
        chars.push((b'a' + (n % 26) as u8) as char);
        if n < 26 {
            break;
        }
        n = n / 26 - 1;
    }
    chars.iter().rev().collect()
}

fn name_pool(count: usize) -> Vec<String> {
    (0..)
        .map(fresh_name)
        .filter(|n| !KEYWORDS.contains(&n.as_str()))
        .take(count)
        .collect()
}

fn count_decls(stmts: &[Stmt]) -> usize {
    stmts
        .iter()
        .map(|s| match s {
            Stmt::Decl { .. } => 1,
            Stmt::If {
                then_body,
                else_body,
                ..
            } => count_decls(then_body) + else_body.as_deref().map_or(0, count_decls),
            Stmt::For { init, body, .. } => {
                count_decls(std::slice::from_ref(init.as_ref())) + count_decls(body)
            }
            _ => 0,
        })
        .sum()
}

/// Renames in declaration order with no shuffling; two kernels equal up to
/// naming render identically here.
pub fn canonical_source(ast: &KernelAst) -> String {
    let n = 1 + ast.params.len() + count_decls(&ast.body);
    render_source(&Renamer::run(ast, name_pool(n)))
}

pub fn rewrite_identifiers<R: Rng + ?Sized>(ast: &KernelAst, rng: &mut R) -> KernelAst {
    let n = 1 + ast.params.len() + count_decls(&ast.body);
    let mut pool = name_pool(n);
    pool.shuffle(rng);
    Renamer::run(ast, pool)
}

struct Renamer {
    pool: std::vec::IntoIter<String>,
    scopes: Scopes<String>,
}

impl Renamer {
    fn run(ast: &KernelAst, pool: Vec<String>) -> KernelAst {
        let mut r = Renamer {
            pool: pool.into_iter(),
            scopes: Scopes::new(),
        };
        let name = r.next();
        let params = ast
            .params
            .iter()
            .map(|p| Param {
                name: r.declare(&p.name),
                ..p.clone()
            })
            .collect();
        let body = r.stmts(&ast.body);
        KernelAst { name, params, body }
    }

    fn next(&mut self) -> String {
        self.pool.next().expect("pool sized to declaration count")
    }

    fn declare(&mut self, old: &str) -> String {
        let new = self.next();
        self.scopes.declare(old, new.clone());
        new
    }

    fn resolve(&self, old: &str) -> String {
        self.scopes
            .lookup(old)
            .cloned()
            .unwrap_or_else(|| old.to_string())
    }

    fn block(&mut self, stmts: &[Stmt]) -> Vec<Stmt> {
        self.scopes.push();
        let out = self.stmts(stmts);
        self.scopes.pop();
        out
    }

    fn stmts(&mut self, stmts: &[Stmt]) -> Vec<Stmt> {
        stmts.iter().map(|s| self.stmt(s)).collect()
    }

    fn stmt(&mut self, s: &Stmt) -> Stmt {
        match s {
            Stmt::Decl { ty, name, init } => {
                let init = self.expr(init);
                Stmt::Decl {
                    ty: *ty,
                    name: self.declare(name),
                    init,
                }
            }
            Stmt::Assign { target, value } => Stmt::Assign {
                target: match target {
                    LValue::Var(n) => LValue::Var(self.resolve(n)),
                    LValue::Index { array, index } => LValue::Index {
                        array: self.resolve(array),
                        index: self.expr(index),
                    },
                },
                value: self.expr(value),
            },
            Stmt::If {
                cond,
                then_body,
                else_body,
            } => Stmt::If {
                cond: self.expr(cond),
                then_body: self.block(then_body),
                else_body: else_body.as_ref().map(|e| self.block(e)),
            },
            Stmt::For {
                init,
                cond,
                step,
                body,
            } => {
                self.scopes.push();
                let init = Box::new(self.stmt(init));
                let cond = self.expr(cond);
                let body = self.block(body);
                let step = Box::new(self.stmt(step));
                self.scopes.pop();
                Stmt::For {
                    init,
                    cond,
                    step,
                    body,
                }
            }
            Stmt::Barrier => Stmt::Barrier,
            Stmt::AtomicAdd {
                array,
                index,
                value,
            } => Stmt::AtomicAdd {
                array: self.resolve(array),
                index: self.expr(index),
                value: self.expr(value),
            },
        }
    }

    fn expr(&self, e: &Expr) -> Expr {
        match e {
            Expr::Int(_) | Expr::Float(_) | Expr::Bool(_) => e.clone(),
            Expr::Var(n) => Expr::Var(self.resolve(n)),
            Expr::Index { array, index } => Expr::Index {
                array: self.resolve(array),
                index: Box::new(self.expr(index)),
            },
            Expr::Binary { op, lhs, rhs } => Expr::Binary {
                op: *op,
                lhs: Box::new(self.expr(lhs)),
                rhs: Box::new(self.expr(rhs)),
            },
            Expr::Neg(inner) => Expr::Neg(Box::new(self.expr(inner))),
            Expr::Cast { ty, expr } => Expr::Cast {
                ty: *ty,
                expr: Box::new(self.expr(expr)),
            },
            Expr::Builtin { func, dim } => Expr::Builtin {
                func: *func,
                dim: Box::new(self.expr(dim)),
            },
        }
    }
}
