//! A mini three-address SSA IR with a closed set of 16 instruction kinds,
//! lowered from checked KCL and cleaned by dead-code elimination.

pub mod dce;
pub mod lower;

pub use dce::run_dce;
pub use lower::lower_to_ir;

use crate::kcl::render::render_float;
use std::collections::{HashMap, HashSet};
use std::fmt::{self, Write};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ValueId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IrType {
    Void,
    Int,
    Float,
    Bool,
    Ptr,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Operand {
    Value(ValueId),
    Arg(u32),
    Int(i64),
    Float(f64),
    Bool(bool),
}

impl Operand {
    pub fn is_const(&self) -> bool {
        matches!(self, Operand::Int(_) | Operand::Float(_) | Operand::Bool(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpPred {
    Lt,
    Gt,
    Le,
    Ge,
    Eq,
    Ne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Callee {
    GetGlobalId,
    GetLocalId,
    Barrier,
    AtomicAdd,
}

impl Callee {
    pub fn name(self) -> &'static str {
        match self {
            Callee::GetGlobalId => "get_global_id",
            Callee::GetLocalId => "get_local_id",
            Callee::Barrier => "barrier",
            Callee::AtomicAdd => "atomic_add",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Binary(BinaryOp, Operand, Operand),
    Cmp(CmpPred, Operand, Operand),
    Load(Operand),
    Store { ptr: Operand, value: Operand },
    Alloca(IrType),
    Br(BlockId),
    CondBr {
        cond: Operand,
        then_bb: BlockId,
        else_bb: BlockId,
    },
    Phi(Vec<(Operand, BlockId)>),
    Call(Callee, Vec<Operand>),
    Ret,
    Cast(IrType, Operand),
    Gep { base: Operand, index: Operand },
}

/// The closed set of instruction kinds, in feature-vector order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InstKind {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Cmp,
    Load,
    Store,
    Alloca,
    Br,
    CondBr,
    Phi,
    Call,
    Ret,
    Cast,
    Gep,
}

impl InstKind {
    pub const ALL: [InstKind; 16] = [
        InstKind::Add,
        InstKind::Sub,
        InstKind::Mul,
        InstKind::Div,
        InstKind::Rem,
        InstKind::Cmp,
        InstKind::Load,
        InstKind::Store,
        InstKind::Alloca,
        InstKind::Br,
        InstKind::CondBr,
        InstKind::Phi,
        InstKind::Call,
        InstKind::Ret,
        InstKind::Cast,
        InstKind::Gep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InstKind::Add => "add",
            InstKind::Sub => "sub",
            InstKind::Mul => "mul",
            InstKind::Div => "div",
            InstKind::Rem => "rem",
            InstKind::Cmp => "cmp",
            InstKind::Load => "load",
            InstKind::Store => "store",
            InstKind::Alloca => "alloca",
            InstKind::Br => "br",
            InstKind::CondBr => "condbr",
            InstKind::Phi => "phi",
            InstKind::Call => "call",
            InstKind::Ret => "ret",
            InstKind::Cast => "cast",
            InstKind::Gep => "gep",
        }
    }

    pub fn index(self) -> usize {
        InstKind::ALL.iter().position(|k| *k == self).expect("listed")
    }
}

impl Op {
    pub fn kind(&self) -> InstKind {
        match self {
            Op::Binary(BinaryOp::Add, ..) => InstKind::Add,
            Op::Binary(BinaryOp::Sub, ..) => InstKind::Sub,
            Op::Binary(BinaryOp::Mul, ..) => InstKind::Mul,
            Op::Binary(BinaryOp::Div, ..) => InstKind::Div,
            Op::Binary(BinaryOp::Rem, ..) => InstKind::Rem,
            Op::Cmp(..) => InstKind::Cmp,
            Op::Load(_) => InstKind::Load,
            Op::Store { .. } => InstKind::Store,
            Op::Alloca(_) => InstKind::Alloca,
            Op::Br(_) => InstKind::Br,
            Op::CondBr { .. } => InstKind::CondBr,
            Op::Phi(_) => InstKind::Phi,
            Op::Call(..) => InstKind::Call,
            Op::Ret => InstKind::Ret,
            Op::Cast(..) => InstKind::Cast,
            Op::Gep { .. } => InstKind::Gep,
        }
    }

    pub fn is_terminator(&self) -> bool {
        matches!(self, Op::Br(_) | Op::CondBr { .. } | Op::Ret)
    }

    /// Instructions that must survive DCE regardless of uses.
    pub fn has_side_effects(&self) -> bool {
        matches!(self, Op::Store { .. } | Op::Call(..)) || self.is_terminator()
    }

    pub fn operands(&self) -> Vec<Operand> {
        match self {
            Op::Binary(_, a, b) | Op::Cmp(_, a, b) => vec![*a, *b],
            Op::Load(p) => vec![*p],
            Op::Store { ptr, value } => vec![*ptr, *value],
            Op::Alloca(_) | Op::Br(_) | Op::Ret => vec![],
            Op::CondBr { cond, .. } => vec![*cond],
            Op::Phi(incoming) => incoming.iter().map(|(v, _)| *v).collect(),
            Op::Call(_, args) => args.clone(),
            Op::Cast(_, v) => vec![*v],
            Op::Gep { base, index } => vec![*base, *index],
        }
    }

    pub fn operands_mut(&mut self) -> Vec<&mut Operand> {
        match self {
            Op::Binary(_, a, b) | Op::Cmp(_, a, b) => vec![a, b],
            Op::Load(p) => vec![p],
            Op::Store { ptr, value } => vec![ptr, value],
            Op::Alloca(_) | Op::Br(_) | Op::Ret => vec![],
            Op::CondBr { cond, .. } => vec![cond],
            Op::Phi(incoming) => incoming.iter_mut().map(|(v, _)| v).collect(),
            Op::Call(_, args) => args.iter_mut().collect(),
            Op::Cast(_, v) => vec![v],
            Op::Gep { base, index } => vec![base, index],
        }
    }

    pub fn successors(&self) -> Vec<BlockId> {
        match self {
            Op::Br(t) => vec![*t],
            Op::CondBr {
                then_bb, else_bb, ..
            } => vec![*then_bb, *else_bb],
            _ => vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instruction {
    pub result: Option<ValueId>,
    pub ty: IrType,
    pub op: Op,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasicBlock {
    pub id: BlockId,
    pub label: String,
    /// Instructions in order; the last one is the block's terminator.
    pub insts: Vec<Instruction>,
}

impl BasicBlock {
    pub fn terminator(&self) -> Option<&Instruction> {
        self.insts.last().filter(|i| i.op.is_terminator())
    }

    pub fn successors(&self) -> Vec<BlockId> {
        self.terminator()
            .map(|t| t.op.successors())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrFunction {
    pub name: String,
    pub params: Vec<IrType>,
    /// Blocks in layout order; the first is the entry.
    pub blocks: Vec<BasicBlock>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid IR in block {block}: {message}")]
pub struct IrError {
    pub block: String,
    pub message: String,
}

impl IrFunction {
    pub fn instruction_count(&self) -> usize {
        self.blocks.iter().map(|b| b.insts.len()).sum()
    }

    pub fn block(&self, id: BlockId) -> Option<&BasicBlock> {
        self.blocks.iter().find(|b| b.id == id)
    }

    pub fn instructions(&self) -> impl Iterator<Item = &Instruction> {
        self.blocks.iter().flat_map(|b| b.insts.iter())
    }

    pub fn predecessors(&self) -> HashMap<BlockId, Vec<BlockId>> {
        let mut preds: HashMap<BlockId, Vec<BlockId>> =
            self.blocks.iter().map(|b| (b.id, Vec::new())).collect();
        for b in &self.blocks {
            for s in b.successors() {
                preds.entry(s).or_default().push(b.id);
            }
        }
        preds
    }

    /// Blocks reachable from the entry.
    pub fn reachable(&self) -> HashSet<BlockId> {
        let mut seen = HashSet::new();
        let Some(entry) = self.blocks.first() else {
            return seen;
        };
        let mut stack = vec![entry.id];
        while let Some(b) = stack.pop() {
            if seen.insert(b) {
                if let Some(block) = self.block(b) {
                    stack.extend(block.successors());
                }
            }
        }
        seen
    }

    /// Dominator sets over reachable blocks (iterative dataflow).
    pub fn dominators(&self) -> HashMap<BlockId, HashSet<BlockId>> {
        let reachable = self.reachable();
        let order: Vec<BlockId> = self
            .blocks
            .iter()
            .map(|b| b.id)
            .filter(|b| reachable.contains(b))
            .collect();
        let preds = self.predecessors();
        let all: HashSet<BlockId> = order.iter().copied().collect();
        let mut dom: HashMap<BlockId, HashSet<BlockId>> = HashMap::new();
        for (i, b) in order.iter().enumerate() {
            if i == 0 {
                dom.insert(*b, HashSet::from([*b]));
            } else {
                dom.insert(*b, all.clone());
            }
        }
        let mut changed = true;
        while changed {
            changed = false;
            for b in order.iter().skip(1) {
                let mut new: Option<HashSet<BlockId>> = None;
                for p in preds[b].iter().filter(|p| reachable.contains(p)) {
                    new = Some(match new {
                        None => dom[p].clone(),
                        Some(acc) => acc.intersection(&dom[p]).copied().collect(),
                    });
                }
                let mut new = new.unwrap_or_default();
                new.insert(*b);
                if new != dom[b] {
                    dom.insert(*b, new);
                    changed = true;
                }
            }
        }
        dom
    }

    /// Checks the structural invariants: one terminator per block at the
    /// end, phi arity matching predecessors, and definitions dominating uses.
    pub fn validate(&self) -> Result<(), IrError> {
        let err = |b: &BasicBlock, m: String| IrError {
            block: b.label.clone(),
            message: m,
        };
        if self.blocks.is_empty() {
            return Err(IrError {
                block: "<none>".into(),
                message: "function has no blocks".into(),
            });
        }
        let ids: HashSet<BlockId> = self.blocks.iter().map(|b| b.id).collect();
        if ids.len() != self.blocks.len() {
            return Err(err(&self.blocks[0], "duplicate block ids".into()));
        }
        let mut def_site: HashMap<ValueId, (BlockId, usize)> = HashMap::new();
        for b in &self.blocks {
            for (i, inst) in b.insts.iter().enumerate() {
                let last = i + 1 == b.insts.len();
                if inst.op.is_terminator() != last {
                    return Err(err(b, format!("terminator misplaced at position {i}")));
                }
                if let Some(v) = inst.result {
                    if def_site.insert(v, (b.id, i)).is_some() {
                        return Err(err(b, format!("value %{} defined twice", v.0)));
                    }
                }
                for s in inst.op.successors() {
                    if !ids.contains(&s) {
                        return Err(err(b, format!("branch to unknown block {}", s.0)));
                    }
                }
            }
            if b.insts.is_empty() {
                return Err(err(b, "empty block".into()));
            }
        }
        let preds = self.predecessors();
        let dom = self.dominators();
        let dominates = |a: BlockId, b: BlockId| dom.get(&b).is_some_and(|d| d.contains(&a));
        for b in &self.blocks {
            if !dom.contains_key(&b.id) {
                continue;
            }
            let mut seen_non_phi = false;
            for (i, inst) in b.insts.iter().enumerate() {
                if let Op::Phi(incoming) = &inst.op {
                    if seen_non_phi {
                        return Err(err(b, "phi after a non-phi instruction".into()));
                    }
                    let mut expected: Vec<BlockId> = preds[&b.id].clone();
                    let mut got: Vec<BlockId> = incoming.iter().map(|(_, p)| *p).collect();
                    expected.sort();
                    got.sort();
                    if expected != got {
                        return Err(err(b, "phi incoming blocks differ from predecessors".into()));
                    }
                    for (v, p) in incoming {
                        if let Operand::Value(v) = v {
                            let Some(&(db, _)) = def_site.get(v) else {
                                return Err(err(b, format!("use of undefined %{}", v.0)));
                            };
                            if dom.contains_key(p) && !dominates(db, *p) {
                                return Err(err(b, format!("%{} does not reach phi edge", v.0)));
                            }
                        }
                    }
                    continue;
                }
                seen_non_phi = true;
                for op in inst.op.operands() {
                    if let Operand::Value(v) = op {
                        let Some(&(db, di)) = def_site.get(&v) else {
                            return Err(err(b, format!("use of undefined %{}", v.0)));
                        };
                        let ok = if db == b.id { di < i } else { dominates(db, b.id) };
                        if !ok {
                            return Err(err(b, format!("%{} used before definition", v.0)));
                        }
                    }
                    if let Operand::Arg(a) = op {
                        if a as usize >= self.params.len() {
                            return Err(err(b, format!("argument {a} out of range")));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Textual form: one `label:` line per block, one instruction per line.
    /// Values are renumbered densely in layout order.
    pub fn to_text(&self) -> String {
        let mut numbering: HashMap<ValueId, usize> = HashMap::new();
        for inst in self.instructions() {
            if let Some(v) = inst.result {
                let n = numbering.len();
                numbering.insert(v, n);
            }
        }
        let labels: HashMap<BlockId, &str> = self
            .blocks
            .iter()
            .map(|b| (b.id, b.label.as_str()))
            .collect();
        let opnd = |o: &Operand| match o {
            Operand::Value(v) => match numbering.get(v) {
                Some(n) => format!("%{n}"),
                None => format!("%?{}", v.0),
            },
            Operand::Arg(a) => format!("%arg{a}"),
            Operand::Int(i) => i.to_string(),
            Operand::Float(f) => render_float(*f),
            Operand::Bool(b) => b.to_string(),
        };
        let label = |b: &BlockId| labels.get(b).copied().unwrap_or("?").to_string();
        let mut out = String::new();
        for b in &self.blocks {
            let _ = writeln!(out, "{}:", b.label);
            for inst in &b.insts {
                out.push_str("  ");
                if let Some(v) = inst.result {
                    let _ = write!(out, "%{} = ", numbering[&v]);
                }
                let kind = inst.op.kind().name();
                let body = match &inst.op {
                    Op::Binary(_, a, b2) => format!("{kind} {}, {}", opnd(a), opnd(b2)),
                    Op::Cmp(p, a, b2) => {
                        let p = format!("{p:?}").to_lowercase();
                        format!("cmp {p} {}, {}", opnd(a), opnd(b2))
                    }
                    Op::Load(p) => format!("load {}", opnd(p)),
                    Op::Store { ptr, value } => format!("store {}, {}", opnd(ptr), opnd(value)),
                    Op::Alloca(t) => format!("alloca {t:?}").to_lowercase(),
                    Op::Br(t) => format!("br {}", label(t)),
                    Op::CondBr {
                        cond,
                        then_bb,
                        else_bb,
                    } => format!("condbr {}, {}, {}", opnd(cond), label(then_bb), label(else_bb)),
                    Op::Phi(incoming) => {
                        let parts: Vec<String> = incoming
                            .iter()
                            .map(|(v, p)| format!("[{}, {}]", opnd(v), label(p)))
                            .collect();
                        format!("phi {}", parts.join(", "))
                    }
                    Op::Call(c, args) => {
                        let a: Vec<String> = args.iter().map(opnd).collect();
                        format!("call {}({})", c.name(), a.join(", "))
                    }
                    Op::Ret => "ret".to_string(),
                    Op::Cast(t, v) => format!("cast {} {}", format!("{t:?}").to_lowercase(), opnd(v)),
                    Op::Gep { base, index } => format!("gep {}, {}", opnd(base), opnd(index)),
                };
                out.push_str(&body);
                out.push('\n');
            }
        }
        out
    }
}

impl fmt::Display for IrFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}
