//! Lowering of checked KCL to SSA form.
//!
//! Locals never touch memory: each scalar variable maps to its current SSA
//! value while the structured body is walked. Loop headers receive a phi for
//! every visible scalar, if-joins receive a phi for every scalar whose value
//! differs between the two arms, and a final pass folds trivial phis
//! (all incoming values equal, ignoring self references). The result matches
//! promoting per-variable allocas to registers on this structured CFG.
//!
//! A for-loop produces three blocks after the preheader: `header` (phis,
//! condition, branch), `body` (whose final block also runs the step and jumps
//! back, acting as the latch) and `exit`.

use super::*;
use crate::kcl::ast::*;
use crate::kcl::check::{Scopes, Ty};

#[derive(Debug, Clone)]
struct Var {
    ty: Ty,
    value: Operand,
}

struct Lowerer {
    func: IrFunction,
    cur: usize,
    next_value: u32,
    next_block: u32,
    env: Scopes<Var>,
}

fn ir_type(b: BaseType) -> IrType {
    match b {
        BaseType::Int => IrType::Int,
        BaseType::Float => IrType::Float,
        BaseType::Bool => IrType::Bool,
    }
}

/// Lowers a kernel that passed `check_kernel`. Unchecked input may panic.
pub fn lower_to_ir(ast: &KernelAst) -> IrFunction {
    let mut env = Scopes::new();
    let mut params = Vec::new();
    for (i, p) in ast.params.iter().enumerate() {
        let ty = if p.is_pointer {
            params.push(IrType::Ptr);
            Ty::Pointer(p.ty, p.qualifier)
        } else {
            params.push(ir_type(p.ty));
            Ty::Scalar(p.ty)
        };
        env.declare(
            &p.name,
            Var {
                ty,
                value: Operand::Arg(i as u32),
            },
        );
    }
    let mut l = Lowerer {
        func: IrFunction {
            name: ast.name.clone(),
            params,
            blocks: Vec::new(),
        },
        cur: 0,
        next_value: 0,
        next_block: 0,
        env,
    };
    let entry = l.alloc_block();
    l.start_block(entry, "entry".into());
    l.stmts(&ast.body);
    l.emit(IrType::Void, Op::Ret);
    fold_trivial_phis(&mut l.func);
    l.func
}

impl Lowerer {
    fn alloc_block(&mut self) -> BlockId {
        let id = BlockId(self.next_block);
        self.next_block += 1;
        id
    }

    fn start_block(&mut self, id: BlockId, label: String) {
        self.func.blocks.push(BasicBlock {
            id,
            label,
            insts: Vec::new(),
        });
        self.cur = self.func.blocks.len() - 1;
    }

    fn cur_id(&self) -> BlockId {
        self.func.blocks[self.cur].id
    }

    fn emit(&mut self, ty: IrType, op: Op) -> Operand {
        let result = if ty == IrType::Void {
            None
        } else {
            let v = ValueId(self.next_value);
            self.next_value += 1;
            Some(v)
        };
        self.func.blocks[self.cur]
            .insts
            .push(Instruction { result, ty, op });
        result.map(Operand::Value).unwrap_or(Operand::Int(0))
    }

    fn label(id: BlockId, kind: &str) -> String {
        format!("{kind}{}", id.0)
    }

    fn stmts(&mut self, stmts: &[Stmt]) {
        for s in stmts {
            self.stmt(s);
        }
    }

    fn block(&mut self, stmts: &[Stmt]) {
        self.env.push();
        self.stmts(stmts);
        self.env.pop();
    }

    /// Every visible scalar variable as (frame, slot) coordinates.
    fn scalar_slots(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (fi, frame) in self.env.frames.iter().enumerate() {
            for (si, (_, var)) in frame.iter().enumerate() {
                if matches!(var.ty, Ty::Scalar(_)) {
                    out.push((fi, si));
                }
            }
        }
        out
    }

    fn slot(&mut self, (fi, si): (usize, usize)) -> &mut Var {
        &mut self.env.frames[fi][si].1
    }

    fn stmt(&mut self, stmt: &Stmt) {
        match stmt {
            Stmt::Decl { ty, name, init } => {
                let v = self.expr_as(init, *ty);
                self.env.declare(
                    name,
                    Var {
                        ty: Ty::Scalar(*ty),
                        value: v,
                    },
                );
            }
            Stmt::Assign { target, value } => match target {
                LValue::Var(name) => {
                    let Some(Var {
                        ty: Ty::Scalar(ty), ..
                    }) = self.env.lookup(name).cloned()
                    else {
                        unreachable!("checked: {name} is a scalar")
                    };
                    let v = self.expr_as(value, ty);
                    self.env.lookup_mut(name).expect("declared").value = v;
                }
                LValue::Index { array, index } => {
                    let elem = self.element_type(array);
                    let v = self.expr_as(value, elem);
                    let ptr = self.address(array, index);
                    self.emit(IrType::Void, Op::Store { ptr, value: v });
                }
            },
            Stmt::If {
                cond,
                then_body,
                else_body,
            } => self.if_stmt(cond, then_body, else_body.as_deref()),
            Stmt::For {
                init,
                cond,
                step,
                body,
            } => self.for_stmt(init, cond, step, body),
            Stmt::Barrier => {
                self.emit(IrType::Void, Op::Call(Callee::Barrier, vec![]));
            }
            Stmt::AtomicAdd {
                array,
                index,
                value,
            } => {
                let ptr = self.address(array, index);
                let v = self.expr_as(value, BaseType::Int);
                self.emit(IrType::Void, Op::Call(Callee::AtomicAdd, vec![ptr, v]));
            }
        }
    }

    fn if_stmt(&mut self, cond: &Expr, then_body: &[Stmt], else_body: Option<&[Stmt]>) {
        let (c, _) = self.expr(cond);
        let then_id = self.alloc_block();
        let else_id = else_body.map(|_| self.alloc_block());
        let join_id = self.alloc_block();
        self.emit(
            IrType::Void,
            Op::CondBr {
                cond: c,
                then_bb: then_id,
                else_bb: else_id.unwrap_or(join_id),
            },
        );
        let pre_env = self.env.clone();
        let pre_block = self.cur_id();

        self.start_block(then_id, Self::label(then_id, "then"));
        self.block(then_body);
        let then_end = self.cur_id();
        self.emit(IrType::Void, Op::Br(join_id));
        let then_env = std::mem::replace(&mut self.env, pre_env.clone());

        let (else_end, else_env) = match (else_body, else_id) {
            (Some(body), Some(id)) => {
                self.start_block(id, Self::label(id, "else"));
                self.block(body);
                let end = self.cur_id();
                self.emit(IrType::Void, Op::Br(join_id));
                (end, self.env.clone())
            }
            _ => (pre_block, pre_env),
        };

        self.start_block(join_id, Self::label(join_id, "join"));
        self.env = else_env.clone();
        for slot in self.scalar_slots() {
            let (fi, si) = slot;
            let tv = then_env.frames[fi][si].1.value;
            let ev = else_env.frames[fi][si].1.value;
            if tv != ev {
                let Ty::Scalar(b) = then_env.frames[fi][si].1.ty else {
                    unreachable!()
                };
                let phi = self.emit(ir_type(b), Op::Phi(vec![(tv, then_end), (ev, else_end)]));
                self.slot(slot).value = phi;
            }
        }
    }

    fn for_stmt(&mut self, init: &Stmt, cond: &Expr, step: &Stmt, body: &[Stmt]) {
        self.env.push();
        self.stmt(init);
        let pre = self.cur_id();
        let header = self.alloc_block();
        self.emit(IrType::Void, Op::Br(header));
        self.start_block(header, Self::label(header, "header"));

        let slots = self.scalar_slots();
        let mut phis = Vec::with_capacity(slots.len());
        for &slot in &slots {
            let var = self.slot(slot).clone();
            let Ty::Scalar(b) = var.ty else {
                unreachable!()
            };
            let phi = self.emit(ir_type(b), Op::Phi(vec![(var.value, pre)]));
            self.slot(slot).value = phi;
            phis.push(phi);
        }
        let header_idx = self.cur;

        let (c, _) = self.expr(cond);
        let body_id = self.alloc_block();
        let exit_id = self.alloc_block();
        self.emit(
            IrType::Void,
            Op::CondBr {
                cond: c,
                then_bb: body_id,
                else_bb: exit_id,
            },
        );
        // Anything the condition evaluates is part of the header block, so
        // the header's own values are what the exit sees.
        let header_env = self.env.clone();

        self.start_block(body_id, Self::label(body_id, "body"));
        self.block(body);
        self.stmt(step);
        let latch = self.cur_id();
        self.emit(IrType::Void, Op::Br(header));

        for (k, &slot) in slots.iter().enumerate() {
            let back = self.slot(slot).value;
            let phi_idx = k;
            if let Op::Phi(incoming) = &mut self.func.blocks[header_idx].insts[phi_idx].op {
                incoming.push((back, latch));
            }
            debug_assert_eq!(
                self.func.blocks[header_idx].insts[phi_idx].result.map(Operand::Value),
                Some(phis[k])
            );
        }

        self.env = header_env;
        self.start_block(exit_id, Self::label(exit_id, "exit"));
        self.env.pop();
    }

    fn element_type(&self, array: &str) -> BaseType {
        match self.env.lookup(array) {
            Some(Var {
                ty: Ty::Pointer(b, _),
                ..
            }) => *b,
            _ => unreachable!("checked: {array} is a pointer"),
        }
    }

    fn address(&mut self, array: &str, index: &Expr) -> Operand {
        let base = self.env.lookup(array).expect("declared").value;
        let idx = self.expr_as(index, BaseType::Int);
        self.emit(IrType::Ptr, Op::Gep { base, index: idx })
    }

    fn coerce(&mut self, v: Operand, from: BaseType, to: BaseType) -> Operand {
        if from == to {
            return v;
        }
        match v {
            Operand::Int(i) if to == BaseType::Float => Operand::Float(i as f64),
            Operand::Float(f) if to == BaseType::Int => Operand::Int(f.trunc() as i64),
            _ => self.emit(ir_type(to), Op::Cast(ir_type(to), v)),
        }
    }

    fn expr_as(&mut self, e: &Expr, to: BaseType) -> Operand {
        let (v, from) = self.expr(e);
        self.coerce(v, from, to)
    }

    fn expr(&mut self, e: &Expr) -> (Operand, BaseType) {
        match e {
            Expr::Int(v) => (Operand::Int(*v), BaseType::Int),
            Expr::Float(v) => (Operand::Float(*v), BaseType::Float),
            Expr::Bool(b) => (Operand::Bool(*b), BaseType::Bool),
            Expr::Var(name) => {
                let var = self.env.lookup(name).expect("checked");
                let Ty::Scalar(b) = var.ty else {
                    unreachable!("checked: {name} is a scalar")
                };
                (var.value, b)
            }
            Expr::Index { array, index } => {
                let elem = self.element_type(array);
                let ptr = self.address(array, index);
                (self.emit(ir_type(elem), Op::Load(ptr)), elem)
            }
            Expr::Binary { op, lhs, rhs } => {
                let (l, lt) = self.expr(lhs);
                let (r, rt) = self.expr(rhs);
                let operand_ty = if lt == BaseType::Float || rt == BaseType::Float {
                    BaseType::Float
                } else {
                    lt
                };
                let l = self.coerce(l, lt, operand_ty);
                let r = self.coerce(r, rt, operand_ty);
                if op.is_arithmetic() {
                    let bop = match op {
                        BinOp::Add => BinaryOp::Add,
                        BinOp::Sub => BinaryOp::Sub,
                        BinOp::Mul => BinaryOp::Mul,
                        BinOp::Div => BinaryOp::Div,
                        _ => BinaryOp::Rem,
                    };
                    (
                        self.emit(ir_type(operand_ty), Op::Binary(bop, l, r)),
                        operand_ty,
                    )
                } else {
                    let pred = match op {
                        BinOp::Lt => CmpPred::Lt,
                        BinOp::Gt => CmpPred::Gt,
                        BinOp::Le => CmpPred::Le,
                        BinOp::Ge => CmpPred::Ge,
                        BinOp::Eq => CmpPred::Eq,
                        _ => CmpPred::Ne,
                    };
                    (self.emit(IrType::Bool, Op::Cmp(pred, l, r)), BaseType::Bool)
                }
            }
            Expr::Neg(inner) => {
                let (v, t) = self.expr(inner);
                match v {
                    Operand::Int(i) => (Operand::Int(-i), t),
                    Operand::Float(f) => (Operand::Float(-f), t),
                    _ => {
                        let zero = if t == BaseType::Float {
                            Operand::Float(0.0)
                        } else {
                            Operand::Int(0)
                        };
                        (self.emit(ir_type(t), Op::Binary(BinaryOp::Sub, zero, v)), t)
                    }
                }
            }
            Expr::Cast { ty, expr } => {
                let (v, t) = self.expr(expr);
                (self.coerce(v, t, *ty), *ty)
            }
            Expr::Builtin { func, dim } => {
                let d = self.expr_as(dim, BaseType::Int);
                let callee = match func {
                    Builtin::GlobalId => Callee::GetGlobalId,
                    Builtin::LocalId => Callee::GetLocalId,
                };
                (self.emit(IrType::Int, Op::Call(callee, vec![d])), BaseType::Int)
            }
        }
    }
}

/// Removes phis whose incoming values are all one value `v` (ignoring the
/// phi itself) by substituting `v` for every use, until a fixpoint.
fn fold_trivial_phis(f: &mut IrFunction) {
    loop {
        let mut replacement: Option<(ValueId, Operand)> = None;
        'search: for b in &f.blocks {
            for inst in &b.insts {
                let (Some(res), Op::Phi(incoming)) = (inst.result, &inst.op) else {
                    continue;
                };
                let mut unique: Option<Operand> = None;
                let mut trivial = true;
                for (v, _) in incoming {
                    if *v == Operand::Value(res) {
                        continue;
                    }
                    match unique {
                        None => unique = Some(*v),
                        Some(u) if u == *v => {}
                        Some(_) => {
                            trivial = false;
                            break;
                        }
                    }
                }
                if trivial {
                    if let Some(u) = unique {
                        replacement = Some((res, u));
                        break 'search;
                    }
                }
            }
        }
        let Some((dead, with)) = replacement else {
            return;
        };
        for b in &mut f.blocks {
            b.insts.retain(|i| i.result != Some(dead));
            for inst in &mut b.insts {
                for op in inst.op.operands_mut() {
                    if *op == Operand::Value(dead) {
                        *op = with;
                    }
                }
            }
        }
    }
}
