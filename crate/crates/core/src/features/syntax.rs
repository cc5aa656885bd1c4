//! SYNTAX8: counts over the checked syntax tree.
//!
//! An access `p[e]` is coalesced when `e` is `get_global_id(d)`, a variable
//! whose every assignment is itself coalesced, or either of those plus or
//! minus a constant. Variables are resolved by declaration, so shadowing is
//! respected. The variable rule is a greatest fixpoint: `i = get_global_id(0)`
//! followed by `i = i + 1` keeps `i` coalesced.

use super::{ratio, FeatureSpace, FeatureVector};
use crate::kcl::ast::*;
use crate::kcl::check::{const_value, Scopes};

/// What an index expression reduces to once constant offsets are peeled off.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Base {
    GlobalId,
    Decl(usize),
    Other,
}

#[derive(Debug, Clone, Copy)]
struct Decl {
    id: usize,
    local: bool,
}

#[derive(Default)]
struct Counter {
    computational: usize,
    relational: usize,
    atomic: usize,
    /// (index base, through a local pointer)
    accesses: Vec<(Base, bool)>,
    /// Bases of every value assigned to each declaration.
    assigned: Vec<Vec<Base>>,
}

pub fn extract_syntax8(ast: &KernelAst) -> FeatureVector {
    let mut c = Counter::default();
    let mut scopes: Scopes<Decl> = Scopes::new();
    for p in &ast.params {
        let id = c.new_decl(Base::Other);
        scopes.declare(
            &p.name,
            Decl {
                id,
                local: p.is_pointer && p.qualifier == Qualifier::Local,
            },
        );
    }
    c.stmts(&ast.body, &mut scopes);

    let mut derived: Vec<bool> = c
        .assigned
        .iter()
        .map(|bases| !bases.contains(&Base::Other))
        .collect();
    loop {
        let mut changed = false;
        for (d, bases) in c.assigned.iter().enumerate() {
            if derived[d] && bases.iter().any(|b| matches!(b, Base::Decl(o) if !derived[*o])) {
                derived[d] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mem = c.accesses.len() as f64;
    let local = c.accesses.iter().filter(|(_, l)| *l).count() as f64;
    let coalesced = c
        .accesses
        .iter()
        .filter(|(b, _)| match b {
            Base::GlobalId => true,
            Base::Decl(d) => derived[*d],
            Base::Other => false,
        })
        .count() as f64;
    let comp = c.computational as f64;
    FeatureVector {
        space: FeatureSpace::Syntax8,
        values: vec![
            comp,
            c.relational as f64,
            c.atomic as f64,
            mem,
            local,
            coalesced,
            ratio(comp, mem),
            ratio(coalesced, mem),
        ],
    }
}

impl Counter {
    fn new_decl(&mut self, init: Base) -> usize {
        self.assigned.push(vec![init]);
        self.assigned.len() - 1
    }

    fn stmts(&mut self, stmts: &[Stmt], scopes: &mut Scopes<Decl>) {
        for s in stmts {
            self.stmt(s, scopes);
        }
    }

    fn block(&mut self, stmts: &[Stmt], scopes: &mut Scopes<Decl>) {
        scopes.push();
        self.stmts(stmts, scopes);
        scopes.pop();
    }

    fn stmt(&mut self, s: &Stmt, scopes: &mut Scopes<Decl>) {
        match s {
            Stmt::Decl { name, init, .. } => {
                self.expr(init, scopes);
                let base = base_of(init, scopes);
                let id = self.new_decl(base);
                scopes.declare(name, Decl { id, local: false });
            }
            Stmt::Assign { target, value } => {
                self.expr(value, scopes);
                match target {
                    LValue::Var(name) => {
                        let base = base_of(value, scopes);
                        let d = scopes.lookup(name).expect("checked").id;
                        self.assigned[d].push(base);
                    }
                    LValue::Index { array, index } => {
                        self.expr(index, scopes);
                        self.access(array, index, scopes);
                    }
                }
            }
            Stmt::If {
                cond,
                then_body,
                else_body,
            } => {
                self.expr(cond, scopes);
                self.block(then_body, scopes);
                if let Some(e) = else_body {
                    self.block(e, scopes);
                }
            }
            Stmt::For {
                init,
                cond,
                step,
                body,
            } => {
                scopes.push();
                self.stmt(init, scopes);
                self.expr(cond, scopes);
                self.block(body, scopes);
                self.stmt(step, scopes);
                scopes.pop();
            }
            Stmt::Barrier => {}
            Stmt::AtomicAdd { index, value, .. } => {
                self.atomic += 1;
                self.expr(index, scopes);
                self.expr(value, scopes);
            }
        }
    }

    fn access(&mut self, array: &str, index: &Expr, scopes: &Scopes<Decl>) {
        let local = scopes.lookup(array).expect("checked").local;
        self.accesses.push((base_of(index, scopes), local));
    }

    fn expr(&mut self, e: &Expr, scopes: &Scopes<Decl>) {
        match e {
            Expr::Int(_) | Expr::Float(_) | Expr::Bool(_) | Expr::Var(_) => {}
            Expr::Index { array, index } => {
                self.access(array, index, scopes);
                self.expr(index, scopes);
            }
            Expr::Binary { op, lhs, rhs } => {
                if op.is_arithmetic() {
                    self.computational += 1;
                } else {
                    self.relational += 1;
                }
                self.expr(lhs, scopes);
                self.expr(rhs, scopes);
            }
            Expr::Neg(inner) => {
                if !matches!(**inner, Expr::Int(_) | Expr::Float(_)) {
                    self.computational += 1;
                }
                self.expr(inner, scopes);
            }
            Expr::Cast { expr, .. } => self.expr(expr, scopes),
            Expr::Builtin { dim, .. } => self.expr(dim, scopes),
        }
    }
}

fn base_of(e: &Expr, scopes: &Scopes<Decl>) -> Base {
    match e {
        Expr::Builtin {
            func: Builtin::GlobalId,
            ..
        } => Base::GlobalId,
        Expr::Var(name) => match scopes.lookup(name) {
            Some(d) => Base::Decl(d.id),
            None => Base::Other,
        },
        Expr::Binary {
            op: BinOp::Add,
            lhs,
            rhs,
        } => {
            if const_value(rhs).is_some() {
                base_of(lhs, scopes)
            } else if const_value(lhs).is_some() {
                base_of(rhs, scopes)
            } else {
                Base::Other
            }
        }
        Expr::Binary {
            op: BinOp::Sub,
            lhs,
            rhs,
        } if const_value(rhs).is_some() => base_of(lhs, scopes),
        _ => Base::Other,
    }
}
