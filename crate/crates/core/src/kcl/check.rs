//! Semantic checking: scoping and typing. A kernel "compiles" iff it parses and
//! passes [`check_kernel`].

use super::ast::*;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SemanticError {
    #[error("undeclared: {0}")]
    Undeclared(String),
    #[error("redeclared in the same scope: {0}")]
    Redeclared(String),
    #[error("type mismatch in {context}: expected {expected}, found {found}")]
    TypeMismatch {
        context: String,
        expected: String,
        found: String,
    },
    #[error("not an array: {0}")]
    NotAnArray(String),
    #[error("pointer used as a value: {0}")]
    PointerAsValue(String),
    #[error("division by constant zero")]
    DivisionByZero,
}

/// Static type of a name or expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ty {
    Scalar(BaseType),
    Pointer(BaseType, Qualifier),
}

impl std::fmt::Display for Ty {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Ty::Scalar(b) => write!(f, "{b}"),
            Ty::Pointer(b, _) => write!(f, "{b}*"),
        }
    }
}

/// Lexically scoped symbol table shared by the checker and the lowering.
/// Frames keep declaration order so iteration is deterministic.
#[derive(Debug, Clone, Default)]
pub(crate) struct Scopes<V> {
    pub(crate) frames: Vec<Vec<(String, V)>>,
}

impl<V: Clone> Scopes<V> {
    pub fn new() -> Self {
        Scopes {
            frames: vec![Vec::new()],
        }
    }

    pub fn push(&mut self) {
        self.frames.push(Vec::new());
    }

    pub fn pop(&mut self) {
        self.frames.pop();
    }

    pub fn lookup(&self, name: &str) -> Option<&V> {
        self.frames
            .iter()
            .rev()
            .find_map(|f| f.iter().find(|(n, _)| n == name).map(|(_, v)| v))
    }

    pub fn lookup_mut(&mut self, name: &str) -> Option<&mut V> {
        self.frames
            .iter_mut()
            .rev()
            .find_map(|f| f.iter_mut().find(|(n, _)| n == name).map(|(_, v)| v))
    }

    pub fn declared_here(&self, name: &str) -> bool {
        self.frames
            .last()
            .is_some_and(|f| f.iter().any(|(n, _)| n == name))
    }

    pub fn declare(&mut self, name: &str, v: V) {
        self.frames
            .last_mut()
            .expect("at least one scope")
            .push((name.to_string(), v));
    }
}

/// Evaluates expressions built only from literals; used to reject division by
/// a constant zero.
pub fn const_value(e: &Expr) -> Option<f64> {
    match e {
        Expr::Int(v) => Some(*v as f64),
        Expr::Float(v) => Some(*v),
        Expr::Neg(inner) => const_value(inner).map(|v| -v),
        Expr::Cast { ty, expr } => {
            let v = const_value(expr)?;
            match ty {
                BaseType::Int => Some(v.trunc()),
                _ => Some(v),
            }
        }
        Expr::Binary { op, lhs, rhs } if op.is_arithmetic() => {
            let (a, b) = (const_value(lhs)?, const_value(rhs)?);
            match op {
                BinOp::Add => Some(a + b),
                BinOp::Sub => Some(a - b),
                BinOp::Mul => Some(a * b),
                BinOp::Div if b != 0.0 => Some(a / b),
                BinOp::Rem if b != 0.0 => Some(a % b),
                _ => None,
            }
        }
        _ => None,
    }
}

pub fn check_kernel(ast: &KernelAst) -> Result<(), SemanticError> {
    let mut scopes = Scopes::new();
    for p in &ast.params {
        if scopes.declared_here(&p.name) {
            return Err(SemanticError::Redeclared(p.name.clone()));
        }
        let ty = if p.is_pointer {
            Ty::Pointer(p.ty, p.qualifier)
        } else {
            Ty::Scalar(p.ty)
        };
        scopes.declare(&p.name, ty);
    }
    // The outermost body block shares the parameter scope.
    check_stmts(&ast.body, &mut scopes)
}

fn check_stmts(stmts: &[Stmt], scopes: &mut Scopes<Ty>) -> Result<(), SemanticError> {
    stmts.iter().try_for_each(|s| check_stmt(s, scopes))
}

fn check_block(stmts: &[Stmt], scopes: &mut Scopes<Ty>) -> Result<(), SemanticError> {
    scopes.push();
    let r = check_stmts(stmts, scopes);
    scopes.pop();
    r
}

fn assignable(to: BaseType, from: BaseType) -> bool {
    to == from || (to == BaseType::Float && from == BaseType::Int)
}

fn expect_assignable(context: &str, to: BaseType, from: BaseType) -> Result<(), SemanticError> {
    if assignable(to, from) {
        Ok(())
    } else {
        Err(SemanticError::TypeMismatch {
            context: context.to_string(),
            expected: to.to_string(),
            found: from.to_string(),
        })
    }
}

fn check_stmt(stmt: &Stmt, scopes: &mut Scopes<Ty>) -> Result<(), SemanticError> {
    match stmt {
        Stmt::Decl { ty, name, init } => {
            let init_ty = type_of(init, scopes)?;
            expect_assignable(&format!("declaration of {name}"), *ty, init_ty)?;
            if scopes.declared_here(name) {
                return Err(SemanticError::Redeclared(name.clone()));
            }
            scopes.declare(name, Ty::Scalar(*ty));
            Ok(())
        }
        Stmt::Assign { target, value } => {
            let value_ty = type_of(value, scopes)?;
            let target_ty = match target {
                LValue::Var(name) => match scopes.lookup(name) {
                    None => return Err(SemanticError::Undeclared(name.clone())),
                    Some(Ty::Pointer(..)) => {
                        return Err(SemanticError::PointerAsValue(name.clone()))
                    }
                    Some(Ty::Scalar(b)) => *b,
                },
                LValue::Index { array, index } => element_type(array, index, scopes)?,
            };
            expect_assignable("assignment", target_ty, value_ty)
        }
        Stmt::If {
            cond,
            then_body,
            else_body,
        } => {
            expect_bool("if condition", cond, scopes)?;
            check_block(then_body, scopes)?;
            if let Some(e) = else_body {
                check_block(e, scopes)?;
            }
            Ok(())
        }
        Stmt::For {
            init,
            cond,
            step,
            body,
        } => {
            scopes.push();
            let r = (|| {
                check_stmt(init, scopes)?;
                expect_bool("for condition", cond, scopes)?;
                check_stmt(step, scopes)?;
                check_block(body, scopes)
            })();
            scopes.pop();
            r
        }
        Stmt::Barrier => Ok(()),
        Stmt::AtomicAdd {
            array,
            index,
            value,
        } => {
            let elem = element_type(array, index, scopes)?;
            expect_assignable("atomic_add target", BaseType::Int, elem)?;
            let v = type_of(value, scopes)?;
            expect_assignable("atomic_add value", BaseType::Int, v)
        }
    }
}

fn expect_bool(context: &str, e: &Expr, scopes: &Scopes<Ty>) -> Result<(), SemanticError> {
    let t = type_of(e, scopes)?;
    if t == BaseType::Bool {
        Ok(())
    } else {
        Err(SemanticError::TypeMismatch {
            context: context.to_string(),
            expected: "bool".into(),
            found: t.to_string(),
        })
    }
}

fn element_type(array: &str, index: &Expr, scopes: &Scopes<Ty>) -> Result<BaseType, SemanticError> {
    let elem = match scopes.lookup(array) {
        None => return Err(SemanticError::Undeclared(array.to_string())),
        Some(Ty::Scalar(_)) => return Err(SemanticError::NotAnArray(array.to_string())),
        Some(Ty::Pointer(b, _)) => *b,
    };
    let it = type_of(index, scopes)?;
    if it != BaseType::Int {
        return Err(SemanticError::TypeMismatch {
            context: format!("index of {array}"),
            expected: "int".into(),
            found: it.to_string(),
        });
    }
    Ok(elem)
}

fn numeric(context: &str, t: BaseType) -> Result<BaseType, SemanticError> {
    if t == BaseType::Bool {
        Err(SemanticError::TypeMismatch {
            context: context.to_string(),
            expected: "int or float".into(),
            found: "bool".into(),
        })
    } else {
        Ok(t)
    }
}

/// Type of a scalar expression under the checker's rules.
pub(crate) fn type_of(e: &Expr, scopes: &Scopes<Ty>) -> Result<BaseType, SemanticError> {
    match e {
        Expr::Int(_) => Ok(BaseType::Int),
        Expr::Float(_) => Ok(BaseType::Float),
        Expr::Bool(_) => Ok(BaseType::Bool),
        Expr::Var(name) => match scopes.lookup(name) {
            None => Err(SemanticError::Undeclared(name.clone())),
            Some(Ty::Pointer(..)) => Err(SemanticError::PointerAsValue(name.clone())),
            Some(Ty::Scalar(b)) => Ok(*b),
        },
        Expr::Index { array, index } => element_type(array, index, scopes),
        Expr::Binary { op, lhs, rhs } => {
            let l = type_of(lhs, scopes)?;
            let r = type_of(rhs, scopes)?;
            let ctx = format!("operator {}", op.symbol());
            if op.is_arithmetic() {
                numeric(&ctx, l)?;
                numeric(&ctx, r)?;
                if matches!(op, BinOp::Div | BinOp::Rem) && const_value(rhs) == Some(0.0) {
                    return Err(SemanticError::DivisionByZero);
                }
                if *op == BinOp::Rem && (l != BaseType::Int || r != BaseType::Int) {
                    return Err(SemanticError::TypeMismatch {
                        context: ctx,
                        expected: "int".into(),
                        found: "float".into(),
                    });
                }
                Ok(if l == BaseType::Float || r == BaseType::Float {
                    BaseType::Float
                } else {
                    BaseType::Int
                })
            } else {
                let both_bool = l == BaseType::Bool && r == BaseType::Bool;
                let equality = matches!(op, BinOp::Eq | BinOp::Ne);
                if !(equality && both_bool) {
                    numeric(&ctx, l)?;
                    numeric(&ctx, r)?;
                }
                Ok(BaseType::Bool)
            }
        }
        Expr::Neg(inner) => numeric("negation", type_of(inner, scopes)?),
        Expr::Cast { ty, expr } => {
            numeric("cast", type_of(expr, scopes)?)?;
            numeric("cast target", *ty)
        }
        Expr::Builtin { func, dim } => {
            let t = type_of(dim, scopes)?;
            if t != BaseType::Int {
                return Err(SemanticError::TypeMismatch {
                    context: func.name().to_string(),
                    expected: "int".into(),
                    found: t.to_string(),
                });
            }
            Ok(BaseType::Int)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kcl::parse_kernel;

    fn check(src: &str) -> Result<(), SemanticError> {
        check_kernel(&parse_kernel(src).unwrap())
    }

    #[test]
    fn accepts_elementwise_kernel() {
        assert_eq!(
            check("kernel void k(global int* a){ int i = get_global_id(0); a[i] = a[i] + 1; }"),
            Ok(())
        );
    }

    #[test]
    fn undeclared_identifier_is_named() {
        let err = check("kernel void k(global int* a){ a[j] = 1; }").unwrap_err();
        assert_eq!(err.to_string(), "undeclared: j");
    }

    #[test]
    fn float_to_int_needs_cast() {
        assert!(matches!(
            check("kernel void k(){ float f = 1; int i = f + 1; }"),
            Err(SemanticError::TypeMismatch { .. })
        ));
        assert_eq!(check("kernel void k(){ float f = 1; int i = (int)f + 1; }"), Ok(()));
    }

    #[test]
    fn bool_is_not_arithmetic() {
        assert!(check("kernel void k(){ bool b = true; int i = b + 1; }").is_err());
        assert!(check("kernel void k(){ bool b = 1 < 2; bool c = b == true; }").is_ok());
    }

    #[test]
    fn division_by_constant_zero() {
        assert_eq!(
            check("kernel void k(int n){ int x = n / (1 - 1); }"),
            Err(SemanticError::DivisionByZero)
        );
        assert_eq!(
            check("kernel void k(int n){ int x = n % 0; }"),
            Err(SemanticError::DivisionByZero)
        );
        assert_eq!(check("kernel void k(int n){ int x = n / n; }"), Ok(()));
    }

    #[test]
    fn scoping_rules() {
        // Shadowing in a nested block is fine, redeclaring in the same one is not.
        assert!(check("kernel void k(int n){ int x = 1; if (n < 2) { int x = 2; } }").is_ok());
        assert!(check("kernel void k(int n){ int x = 1; int x = 2; }").is_err());
        assert!(check("kernel void k(int n){ int n = 2; }").is_err());
        // Loop variables are not visible after the loop.
        assert!(check("kernel void k(int n){ for (int i = 0; i < n; i = i + 1) { } n = i; }").is_err());
        // Declaration is not visible in its own initializer.
        assert!(check("kernel void k(){ int x = x + 1; }").is_err());
    }

    #[test]
    fn pointer_misuse() {
        assert!(check("kernel void k(global int* a){ int x = a; }").is_err());
        assert!(check("kernel void k(int a){ int x = a[0]; }").is_err());
        assert!(check("kernel void k(global int* a){ a[1.5] = 1; }").is_err());
        assert!(check("kernel void k(global float* a){ atomic_add(&a[0], 1); }").is_err());
        assert!(check("kernel void k(global int* a){ atomic_add(&a[0], 1); }").is_ok());
    }

    #[test]
    fn conditions_must_be_bool() {
        assert!(check("kernel void k(int n){ if (n) { } }").is_err());
        assert!(check("kernel void k(int n){ for (int i = 0; i; i = i + 1) { } }").is_err());
    }
}
