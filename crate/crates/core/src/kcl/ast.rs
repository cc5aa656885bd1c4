//! Syntax tree of a single KCL kernel.
//!
//! Nodes carry no source positions so that two trees compare equal exactly
//! when they describe the same program text up to layout.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Qualifier {
    Global,
    Local,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaseType {
    Int,
    Float,
    Bool,
}

impl BaseType {
    pub fn keyword(self) -> &'static str {
        match self {
            BaseType::Int => "int",
            BaseType::Float => "float",
            BaseType::Bool => "bool",
        }
    }
}

impl fmt::Display for BaseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub qualifier: Qualifier,
    pub ty: BaseType,
    pub is_pointer: bool,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelAst {
    pub name: String,
    pub params: Vec<Param>,
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Lt,
    Gt,
    Le,
    Ge,
    Eq,
    Ne,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Lt => "<",
            BinOp::Gt => ">",
            BinOp::Le => "<=",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
        }
    }

    pub fn is_arithmetic(self) -> bool {
        matches!(
            self,
            BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Rem
        )
    }

    pub fn is_relational(self) -> bool {
        !self.is_arithmetic()
    }

    /// Binding strength: relational 1, additive 2, multiplicative 3.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Mul | BinOp::Div | BinOp::Rem => 3,
            BinOp::Add | BinOp::Sub => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Builtin {
    GlobalId,
    LocalId,
}

impl Builtin {
    pub fn name(self) -> &'static str {
        match self {
            Builtin::GlobalId => "get_global_id",
            Builtin::LocalId => "get_local_id",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Int(i64),
    Float(f64),
    Bool(bool),
    Var(String),
    Index {
        array: String,
        index: Box<Expr>,
    },
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Neg(Box<Expr>),
    Cast {
        ty: BaseType,
        expr: Box<Expr>,
    },
    Builtin {
        func: Builtin,
        dim: Box<Expr>,
    },
}

impl Expr {
    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn index(array: &str, index: Expr) -> Expr {
        Expr::Index {
            array: array.to_string(),
            index: Box::new(index),
        }
    }

    pub fn global_id(dim: i64) -> Expr {
        Expr::Builtin {
            func: Builtin::GlobalId,
            dim: Box::new(Expr::Int(dim)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LValue {
    Var(String),
    Index { array: String, index: Expr },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Decl {
        ty: BaseType,
        name: String,
        init: Expr,
    },
    Assign {
        target: LValue,
        value: Expr,
    },
    If {
        cond: Expr,
        then_body: Vec<Stmt>,
        else_body: Option<Vec<Stmt>>,
    },
    For {
        init: Box<Stmt>,
        cond: Expr,
        step: Box<Stmt>,
        body: Vec<Stmt>,
    },
    Barrier,
    /// `atomic_add(&array[index], value);`
    AtomicAdd {
        array: String,
        index: Expr,
        value: Expr,
    },
}

/// Pre-order visit of every expression in a statement list, including
/// expressions nested in control flow headers and lvalue indices.
pub fn visit_exprs<'a>(stmts: &'a [Stmt], f: &mut impl FnMut(&'a Expr)) {
    fn walk<'a>(e: &'a Expr, f: &mut impl FnMut(&'a Expr)) {
        f(e);
        match e {
            Expr::Index { index, .. } => walk(index, f),
            Expr::Binary { lhs, rhs, .. } => {
                walk(lhs, f);
                walk(rhs, f);
            }
            Expr::Neg(inner) | Expr::Cast { expr: inner, .. } => walk(inner, f),
            Expr::Builtin { dim, .. } => walk(dim, f),
            Expr::Int(_) | Expr::Float(_) | Expr::Bool(_) | Expr::Var(_) => {}
        }
    }
    for stmt in stmts {
        match stmt {
            Stmt::Decl { init, .. } => walk(init, f),
            Stmt::Assign { target, value } => {
                if let LValue::Index { index, .. } = target {
                    walk(index, f);
                }
                walk(value, f);
            }
            Stmt::If {
                cond,
                then_body,
                else_body,
            } => {
                walk(cond, f);
                visit_exprs(then_body, f);
                if let Some(e) = else_body {
                    visit_exprs(e, f);
                }
            }
            Stmt::For {
                init,
                cond,
                step,
                body,
            } => {
                visit_exprs(std::slice::from_ref(init.as_ref()), f);
                walk(cond, f);
                visit_exprs(std::slice::from_ref(step.as_ref()), f);
                visit_exprs(body, f);
            }
            Stmt::Barrier => {}
            Stmt::AtomicAdd { index, value, .. } => {
                walk(index, f);
                walk(value, f);
            }
        }
    }
}
