//! IRCOUNT and IRPHASE over (already DCE'd) IR.

use super::{FeatureSpace, FeatureVector};
use crate::ir::{InstKind, IrFunction, Op};

pub fn extract_ircount(ir: &IrFunction) -> FeatureVector {
    let mut v = vec![0.0; 19];
    for inst in ir.instructions() {
        v[inst.op.kind().index()] += 1.0;
    }
    v[16] = ir.instruction_count() as f64;
    v[17] = ir.blocks.len() as f64;
    v[18] = 1.0;
    FeatureVector {
        space: FeatureSpace::IrCount,
        values: v,
    }
}

pub fn extract_irphase(ir: &IrFunction) -> FeatureVector {
    let mut phi_count = 0;
    let mut phi_args = 0;
    let mut mem = 0;
    let mut branches = 0;
    let mut binary = 0;
    let mut cmp = 0;
    let mut consts = 0;
    for inst in ir.instructions() {
        match inst.op.kind() {
            InstKind::Phi => phi_count += 1,
            InstKind::Load | InstKind::Store => mem += 1,
            InstKind::Br | InstKind::CondBr => branches += 1,
            InstKind::Add | InstKind::Sub | InstKind::Mul | InstKind::Div | InstKind::Rem => {
                binary += 1
            }
            InstKind::Cmp => cmp += 1,
            _ => {}
        }
        if let Op::Phi(incoming) = &inst.op {
            phi_args += incoming.len();
        }
        consts += inst.op.operands().iter().filter(|o| o.is_const()).count();
    }
    let succ = |n: usize| ir.blocks.iter().filter(|b| b.successors().len() == n).count();
    let max_block = ir.blocks.iter().map(|b| b.insts.len()).max().unwrap_or(0);
    let values = [
        phi_count,
        phi_args,
        mem,
        branches,
        ir.blocks.len(),
        succ(1),
        succ(2),
        binary,
        cmp,
        consts,
        ir.instruction_count(),
        max_block,
    ]
    .iter()
    .map(|&x| x as f64)
    .collect();
    FeatureVector {
        space: FeatureSpace::IrPhase,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{lower_to_ir, run_dce};
    use crate::kcl::compile;

    fn ir(src: &str) -> IrFunction {
        run_dce(&lower_to_ir(&compile(src).unwrap()))
    }

    #[test]
    fn empty_kernel_counts() {
        let v = extract_ircount(&ir("kernel void k(){ }")).values;
        assert_eq!(v[InstKind::Ret.index()], 1.0);
        assert_eq!(v.iter().take(16).sum::<f64>(), 1.0);
        assert_eq!(&v[16..], &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn elementwise_counts() {
        let v = extract_ircount(&ir(
            "kernel void k(global int* a){ int i=get_global_id(0); a[i]=a[i]+1; }",
        ))
        .values;
        assert_eq!(v[InstKind::Gep.index()], 2.0);
        assert_eq!(v[InstKind::Load.index()], 1.0);
        assert_eq!(v[InstKind::Add.index()], 1.0);
        assert_eq!(v[InstKind::Store.index()], 1.0);
    }

    #[test]
    fn loop_phase() {
        let v = extract_irphase(&ir(
            "kernel void k(global int* a, int n){ for(int i=0;i<n;i=i+1){ a[i] = 0; } }",
        ))
        .values;
        assert_eq!(v[0], 1.0);
        assert_eq!(v[1], 2.0);
        let v = extract_irphase(&ir("kernel void k(global int* a){ a[0] = 1; }")).values;
        assert_eq!(v[0], 0.0);
        assert_eq!(v[4], 1.0);
        assert_eq!(v[5], 0.0);
    }
}
