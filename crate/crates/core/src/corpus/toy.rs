//! Random well-typed kernels, used as a toy corpus and as property-test input.

use crate::kcl::ast::*;
use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Debug, Clone)]
pub struct ToyConfig {
    /// Statements at the top level of the body (excluding the thread-id line).
    pub max_stmts: usize,
    /// Statements inside an if or for body.
    pub max_block_stmts: usize,
    /// Nesting depth of if/for.
    pub max_nesting: usize,
    /// Depth of generated expressions.
    pub max_expr_depth: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            max_stmts: 4,
            max_block_stmts: 2,
            max_nesting: 2,
            max_expr_depth: 2,
        }
    }
}

#[derive(Clone)]
struct Gen<'c> {
    cfg: &'c ToyConfig,
    /// (name, type) of visible scalars.
    scalars: Vec<(String, BaseType)>,
    /// (name, element type, qualifier) of pointer params.
    arrays: Vec<(String, BaseType, Qualifier)>,
    next_local: usize,
}

/// A random kernel that always passes `check_kernel`.
pub fn random_kernel<R: Rng + ?Sized>(rng: &mut R, cfg: &ToyConfig) -> KernelAst {
    let mut params = Vec::new();
    let pool = [
        ("in", BaseType::Float, Qualifier::Global),
        ("out", BaseType::Float, Qualifier::Global),
        ("idx", BaseType::Int, Qualifier::Global),
        ("tmp", BaseType::Float, Qualifier::Local),
        ("cnt", BaseType::Int, Qualifier::Global),
    ];
    let n_arrays = rng.gen_range(1..=3);
    let mut chosen: Vec<_> = pool.choose_multiple(rng, n_arrays).cloned().collect();
    chosen.sort_by_key(|c| c.0);
    let mut g = Gen {
        cfg,
        scalars: Vec::new(),
        arrays: Vec::new(),
        next_local: 0,
    };
    for (name, ty, q) in chosen {
        params.push(Param {
            qualifier: q,
            ty,
            is_pointer: true,
            name: name.to_string(),
        });
        g.arrays.push((name.to_string(), ty, q));
    }
    if rng.gen_bool(0.7) {
        params.push(Param {
            qualifier: Qualifier::None,
            ty: BaseType::Int,
            is_pointer: false,
            name: "n".into(),
        });
        g.scalars.push(("n".into(), BaseType::Int));
    }
    let mut body = Vec::new();
    if rng.gen_bool(0.85) {
        body.push(Stmt::Decl {
            ty: BaseType::Int,
            name: "gid".into(),
            init: Expr::global_id(0),
        });
        g.scalars.push(("gid".into(), BaseType::Int));
    }
    let count = rng.gen_range(1..=cfg.max_stmts.max(1));
    for _ in 0..count {
        body.push(g.stmt(rng, 0));
    }
    KernelAst {
        name: "k".into(),
        params,
        body,
    }
}

impl Gen<'_> {
    fn fresh(&mut self) -> String {
        self.next_local += 1;
        format!("v{}", self.next_local)
    }

    fn block<R: Rng + ?Sized>(&mut self, rng: &mut R, depth: usize) -> Vec<Stmt> {
        let saved = self.scalars.len();
        let n = rng.gen_range(1..=self.cfg.max_block_stmts.max(1));
        let out = (0..n).map(|_| self.stmt(rng, depth)).collect();
        self.scalars.truncate(saved);
        out
    }

    fn stmt<R: Rng + ?Sized>(&mut self, rng: &mut R, depth: usize) -> Stmt {
        let nest = depth < self.cfg.max_nesting;
        loop {
            match rng.gen_range(0..10) {
                0..=2 => {
                    let (array, ty, _) = self.arrays.choose(rng).cloned().expect("one array");
                    let index = self.index(rng);
                    let value = self.expr(rng, ty, self.cfg.max_expr_depth);
                    return Stmt::Assign {
                        target: LValue::Index { array, index },
                        value,
                    };
                }
                3 | 4 => {
                    let ty = if rng.gen_bool(0.5) {
                        BaseType::Int
                    } else {
                        BaseType::Float
                    };
                    let init = self.expr(rng, ty, self.cfg.max_expr_depth);
                    let name = self.fresh();
                    self.scalars.push((name.clone(), ty));
                    return Stmt::Decl { ty, name, init };
                }
                5 => {
                    let candidates: Vec<_> = self
                        .scalars
                        .iter()
                        .filter(|(n, _)| n.starts_with('v'))
                        .cloned()
                        .collect();
                    if let Some((name, ty)) = candidates.choose(rng).cloned() {
                        let value = self.expr(rng, ty, self.cfg.max_expr_depth);
                        return Stmt::Assign {
                            target: LValue::Var(name),
                            value,
                        };
                    }
                }
                6 if nest => {
                    let cond = self.cond(rng);
                    let then_body = self.block(rng, depth + 1);
                    let else_body = if rng.gen_bool(0.3) {
                        Some(self.block(rng, depth + 1))
                    } else {
                        None
                    };
                    return Stmt::If {
                        cond,
                        then_body,
                        else_body,
                    };
                }
                7 if nest => {
                    let var = self.fresh();
                    let bound = match self.scalars.iter().find(|(n, _)| n == "n") {
                        Some(_) if rng.gen_bool(0.6) => Expr::var("n"),
                        _ => Expr::Int(rng.gen_range(2..=16)),
                    };
                    let init = Stmt::Decl {
                        ty: BaseType::Int,
                        name: var.clone(),
                        init: Expr::Int(0),
                    };
                    self.scalars.push((var.clone(), BaseType::Int));
                    let body = self.block(rng, depth + 1);
                    self.scalars.pop();
                    return Stmt::For {
                        init: Box::new(init),
                        cond: Expr::binary(BinOp::Lt, Expr::var(&var), bound),
                        step: Box::new(Stmt::Assign {
                            target: LValue::Var(var.clone()),
                            value: Expr::binary(BinOp::Add, Expr::var(&var), Expr::Int(1)),
                        }),
                        body,
                    };
                }
                8 => {
                    let ints: Vec<_> = self
                        .arrays
                        .iter()
                        .filter(|a| a.1 == BaseType::Int)
                        .cloned()
                        .collect();
                    if let Some((array, _, _)) = ints.choose(rng).cloned() {
                        let index = self.index(rng);
                        let value = self.expr(rng, BaseType::Int, 1);
                        return Stmt::AtomicAdd {
                            array,
                            index,
                            value,
                        };
                    }
                }
                9 if rng.gen_bool(0.3) => return Stmt::Barrier,
                _ => {}
            }
        }
    }

    fn int_vars(&self) -> Vec<String> {
        self.scalars
            .iter()
            .filter(|(_, t)| *t == BaseType::Int)
            .map(|(n, _)| n.clone())
            .collect()
    }

    fn index<R: Rng + ?Sized>(&self, rng: &mut R) -> Expr {
        let has_gid = self.scalars.iter().any(|(n, _)| n == "gid");
        match rng.gen_range(0..6) {
            0..=2 if has_gid => Expr::var("gid"),
            3 if has_gid => Expr::binary(
                if rng.gen_bool(0.5) {
                    BinOp::Add
                } else {
                    BinOp::Sub
                },
                Expr::var("gid"),
                Expr::Int(rng.gen_range(1..=4)),
            ),
            4 => Expr::global_id(0),
            _ => match self.int_vars().choose(rng) {
                Some(v) => Expr::Var(v.clone()),
                None => Expr::Int(rng.gen_range(0..8)),
            },
        }
    }

    fn cond<R: Rng + ?Sized>(&self, rng: &mut R) -> Expr {
        let op = *[BinOp::Lt, BinOp::Gt, BinOp::Le, BinOp::Ge, BinOp::Eq, BinOp::Ne]
            .choose(rng)
            .expect("nonempty");
        let ty = if rng.gen_bool(0.7) {
            BaseType::Int
        } else {
            BaseType::Float
        };
        Expr::binary(op, self.expr(rng, ty, 1), self.expr(rng, ty, 1))
    }

    fn leaf<R: Rng + ?Sized>(&self, rng: &mut R, ty: BaseType) -> Expr {
        let vars: Vec<_> = self.scalars.iter().filter(|(_, t)| *t == ty).collect();
        let arrays: Vec<_> = self.arrays.iter().filter(|a| a.1 == ty).collect();
        match rng.gen_range(0..3) {
            0 if !vars.is_empty() => Expr::Var(vars.choose(rng).expect("nonempty").0.clone()),
            1 if !arrays.is_empty() => Expr::Index {
                array: arrays.choose(rng).expect("nonempty").0.clone(),
                index: Box::new(self.index(rng)),
            },
            _ => match ty {
                BaseType::Int => Expr::Int(rng.gen_range(1..10)),
                BaseType::Float => Expr::Float(rng.gen_range(1..8) as f64 * 0.5),
                BaseType::Bool => Expr::Bool(rng.gen_bool(0.5)),
            },
        }
    }

    fn expr<R: Rng + ?Sized>(&self, rng: &mut R, ty: BaseType, depth: usize) -> Expr {
        if depth == 0 || rng.gen_bool(0.35) {
            return self.leaf(rng, ty);
        }
        let ops: &[BinOp] = match ty {
            BaseType::Int => &[BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Rem],
            _ => &[BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div],
        };
        let op = *ops.choose(rng).expect("nonempty");
        let lhs = self.expr(rng, ty, depth - 1);
        let rhs = if matches!(op, BinOp::Div | BinOp::Rem) {
            match ty {
                BaseType::Int => Expr::Int(rng.gen_range(2..8)),
                _ => Expr::Float(rng.gen_range(2..8) as f64),
            }
        } else {
            self.expr(rng, ty, depth - 1)
        };
        Expr::binary(op, lhs, rhs)
    }
}
