//! Canonical pretty-printer for KCL.

use super::ast::*;
use std::fmt::Write;

const INDENT: &str = "    ";

pub fn render_source(ast: &KernelAst) -> String {
    let mut out = String::new();
    let params: Vec<String> = ast.params.iter().map(render_param).collect();
    let _ = write!(out, "kernel void {}({}) {{\n", ast.name, params.join(", "));
    render_stmts(&ast.body, 1, &mut out);
    out.push_str("}\n");
    out
}

fn render_param(p: &Param) -> String {
    let qual = match p.qualifier {
        Qualifier::Global => "global ",
        Qualifier::Local => "local ",
        Qualifier::None => "",
    };
    let star = if p.is_pointer { "*" } else { "" };
    format!("{qual}{}{star} {}", p.ty, p.name)
}

fn render_stmts(stmts: &[Stmt], depth: usize, out: &mut String) {
    for s in stmts {
        out.push_str(&INDENT.repeat(depth));
        render_stmt(s, depth, out);
        out.push('\n');
    }
}

fn render_simple(stmt: &Stmt) -> String {
    match stmt {
        Stmt::Decl { ty, name, init } => format!("{ty} {name} = {}", render_expr(init)),
        Stmt::Assign { target, value } => {
            let lhs = match target {
                LValue::Var(n) => n.clone(),
                LValue::Index { array, index } => format!("{array}[{}]", render_expr(index)),
            };
            format!("{lhs} = {}", render_expr(value))
        }
        _ => unreachable!("only declarations and assignments are simple statements"),
    }
}

fn render_block(body: &[Stmt], depth: usize, out: &mut String) {
    out.push_str("{\n");
    render_stmts(body, depth + 1, out);
    out.push_str(&INDENT.repeat(depth));
    out.push('}');
}

fn render_stmt(stmt: &Stmt, depth: usize, out: &mut String) {
    match stmt {
        Stmt::Decl { .. } | Stmt::Assign { .. } => {
            out.push_str(&render_simple(stmt));
            out.push(';');
        }
        Stmt::If {
            cond,
            then_body,
            else_body,
        } => {
            let _ = write!(out, "if ({}) ", render_expr(cond));
            render_block(then_body, depth, out);
            match else_body.as_deref() {
                None => {}
                Some([nested @ Stmt::If { .. }]) => {
                    out.push_str(" else ");
                    render_stmt(nested, depth, out);
                }
                Some(body) => {
                    out.push_str(" else ");
                    render_block(body, depth, out);
                }
            }
        }
        Stmt::For {
            init,
            cond,
            step,
            body,
        } => {
            let _ = write!(
                out,
                "for ({}; {}; {}) ",
                render_simple(init),
                render_expr(cond),
                render_simple(step)
            );
            render_block(body, depth, out);
        }
        Stmt::Barrier => out.push_str("barrier();"),
        Stmt::AtomicAdd {
            array,
            index,
            value,
        } => {
            let _ = write!(
                out,
                "atomic_add(&{array}[{}], {});",
                render_expr(index),
                render_expr(value)
            );
        }
    }
}

pub fn render_float(v: f64) -> String {
    let s = format!("{v}");
    if s.contains('.') {
        s
    } else {
        format!("{s}.0")
    }
}

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Binary { op, .. } => op.precedence(),
        _ => 4,
    }
}

pub fn render_expr(e: &Expr) -> String {
    match e {
        Expr::Int(v) => v.to_string(),
        Expr::Float(v) => render_float(*v),
        Expr::Bool(b) => b.to_string(),
        Expr::Var(n) => n.clone(),
        Expr::Index { array, index } => format!("{array}[{}]", render_expr(index)),
        Expr::Binary { op, lhs, rhs } => {
            let p = op.precedence();
            let lhs_paren = precedence(lhs) < p || (op.is_relational() && precedence(lhs) == p);
            let rhs_paren = precedence(rhs) <= p;
            format!(
                "{} {} {}",
                paren(lhs, lhs_paren),
                op.symbol(),
                paren(rhs, rhs_paren)
            )
        }
        Expr::Neg(inner) => {
            let needs = matches!(**inner, Expr::Binary { .. } | Expr::Neg(_));
            format!("-{}", paren(inner, needs))
        }
        Expr::Cast { ty, expr } => {
            let needs = matches!(**expr, Expr::Binary { .. });
            format!("({ty}){}", paren(expr, needs))
        }
        Expr::Builtin { func, dim } => format!("{}({})", func.name(), render_expr(dim)),
    }
}

fn paren(e: &Expr, wrap: bool) -> String {
    if wrap {
        format!("({})", render_expr(e))
    } else {
        render_expr(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kcl::parse_kernel;

    #[test]
    fn round_trip_and_fixpoint() {
        let src = "kernel void k(global int* a){ int i = get_global_id(0); a[i] = a[i] + 1; }";
        let ast = parse_kernel(src).unwrap();
        let text = render_source(&ast);
        assert_eq!(parse_kernel(&text).unwrap(), ast);
        assert_eq!(render_source(&parse_kernel(&text).unwrap()), text);
    }

    #[test]
    fn nested_if_else_layout() {
        let src = "kernel void k(int n){int x=0;if(n<1){if(n<0){x=1;}else{x=2;}}else if(n>5){x=3;}else{x=4;}}";
        let text = render_source(&parse_kernel(src).unwrap());
        let expected = "\
kernel void k(int n) {
    int x = 0;
    if (n < 1) {
        if (n < 0) {
            x = 1;
        } else {
            x = 2;
        }
    } else if (n > 5) {
        x = 3;
    } else {
        x = 4;
    }
}
";
        assert_eq!(text, expected);
    }

    #[test]
    fn parenthesization_preserves_structure() {
        let src = "kernel void k(int n){ int x = (n - (1 - 2)) * -(n + 1); bool b = (n < 1) == (2 > n); float f = (float)(n % 3) / 2.5; }";
        let ast = parse_kernel(src).unwrap();
        assert_eq!(parse_kernel(&render_source(&ast)).unwrap(), ast);
    }

    #[test]
    fn floats_keep_a_decimal_point() {
        assert_eq!(render_float(2.0), "2.0");
        assert_eq!(render_float(0.125), "0.125");
        assert_eq!(render_float(1e-7), "0.0000001");
    }
}
