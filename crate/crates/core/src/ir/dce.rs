//! Dead-code elimination: unreachable-block removal followed by a mark/sweep
//! over instruction liveness. Dead phi cycles are removed too.

use super::{IrFunction, Op, Operand, ValueId};
use std::collections::{HashMap, HashSet};

pub fn run_dce(ir: &IrFunction) -> IrFunction {
    let mut f = ir.clone();
    remove_unreachable(&mut f);

    let mut def: HashMap<ValueId, (usize, usize)> = HashMap::new();
    for (bi, b) in f.blocks.iter().enumerate() {
        for (ii, inst) in b.insts.iter().enumerate() {
            if let Some(v) = inst.result {
                def.insert(v, (bi, ii));
            }
        }
    }

    let mut live: HashSet<(usize, usize)> = HashSet::new();
    let mut work: Vec<(usize, usize)> = Vec::new();
    for (bi, b) in f.blocks.iter().enumerate() {
        for (ii, inst) in b.insts.iter().enumerate() {
            if inst.op.has_side_effects() {
                live.insert((bi, ii));
                work.push((bi, ii));
            }
        }
    }
    while let Some((bi, ii)) = work.pop() {
        for op in f.blocks[bi].insts[ii].op.operands() {
            if let Operand::Value(v) = op {
                if let Some(&site) = def.get(&v) {
                    if live.insert(site) {
                        work.push(site);
                    }
                }
            }
        }
    }

    for (bi, b) in f.blocks.iter_mut().enumerate() {
        let mut ii = 0;
        b.insts.retain(|_| {
            let keep = live.contains(&(bi, ii));
            ii += 1;
            keep
        });
    }
    f
}

fn remove_unreachable(f: &mut IrFunction) {
    let reachable = f.reachable();
    if reachable.len() == f.blocks.len() {
        return;
    }
    f.blocks.retain(|b| reachable.contains(&b.id));
    for b in &mut f.blocks {
        for inst in &mut b.insts {
            if let Op::Phi(incoming) = &mut inst.op {
                incoming.retain(|(_, p)| reachable.contains(p));
            }
        }
    }
}
