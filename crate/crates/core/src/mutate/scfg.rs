//! Structured control-flow insertion.
//!
//! A block is split into a source (head) and a sink (tail plus the old
//! terminator). Between them sits a small random region of new blocks
//! that is entered only from the source and left only through the sink or
//! a return, so dominance among the pre-existing blocks does not change.

use rand::seq::SliceRandom;
use rand::Rng;

use super::source::{available_at_end, Cursor};
use super::{MutateError, Mutator};
use crate::ir::{Block, BlockId, Const, DomTree, Module, Terminator, Type, Value};

const MAX_REGION: usize = 8;

fn base_label(l: &str) -> &str {
    l.strip_suffix("Src").or_else(|| l.strip_suffix("Sink")).filter(|b| !b.is_empty()).unwrap_or(l)
}

impl Mutator {
    pub fn insert_scfg(&mut self, m: &mut Module) -> Result<(), MutateError> {
        let func = self.pick_function(m)?;
        let nblocks = m.functions[func].blocks.len();
        if nblocks + 2 > self.cfg.max_blocks {
            return Err(MutateError::LimitExceeded);
        }
        let max_new = MAX_REGION.min(self.cfg.max_blocks - nblocks - 1);
        let n = self.rng.gen_range(1..=max_new);
        let src = BlockId(self.rng.gen_range(0..nblocks as u32));
        let k = self.rng.gen_range(0..=m.functions[func].block(src).body.len());

        // Node 0 is the source, 1..=n the region, n+1 the sink.
        let sink_node = n + 1;
        let id = |node: usize| if node == 0 { src } else { BlockId((nblocks + node - 1) as u32) };
        let mut targets: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
        targets[0].push(1);
        for j in 2..=n {
            let parent = self.rng.gen_range(0..j);
            targets[parent].push(j);
        }
        let exit = self.rng.gen_range(1..=n);
        for (node, t) in targets.iter_mut().enumerate() {
            if node == exit || (node > 0 && t.is_empty() && self.rng.gen_bool(0.8)) {
                t.push(sink_node);
            }
            if node > 0 && self.rng.gen_bool(0.3) {
                t.push(self.rng.gen_range(1..=n));
            }
            if node == 0 && self.rng.gen_bool(0.3) {
                t.push(sink_node);
            }
            let mut seen = Vec::with_capacity(t.len());
            t.retain(|x| {
                let fresh = !seen.contains(x);
                seen.push(*x);
                fresh
            });
        }

        let f = &mut m.functions[func];
        let base = base_label(&f.block(src).label).to_string();
        let sink_id = id(sink_node);
        let old = f.block_mut(src);
        let tail = old.body.split_off(k);
        let term = std::mem::replace(&mut old.term, Terminator::Ret(None));
        let old_succs = term.successors();
        for i in 1..=n {
            let label = f.fresh_label(&format!("sCFG_{i}"));
            f.blocks.push(Block::new(label, Terminator::Ret(None)));
        }
        let sink_label = f.fresh_label(&format!("{base}Sink"));
        let mut sink = Block::new(sink_label, term);
        sink.body = tail;
        f.blocks.push(sink);
        debug_assert_eq!(f.blocks.len() - 1, sink_id.index());
        let mut seen = Vec::new();
        for s in old_succs {
            if !seen.contains(&s) {
                seen.push(s);
                f.retarget_phis(s, src, sink_id);
            }
        }
        let src_label = f.fresh_label(&format!("{base}Src"));
        f.block_mut(src).label = src_label;

        // Shape terminators with placeholder operands, then fill them once
        // dominance of the new CFG is known.
        let ret_ty = f.ret;
        for (node, t) in targets.iter().enumerate() {
            let ids: Vec<BlockId> = t.iter().map(|x| id(*x)).collect();
            let term = self.shape_terminator(&ids, ret_ty);
            f.block_mut(id(node)).term = term;
        }
        let dom = DomTree::compute(&m.functions[func]);
        for node in 0..=n {
            self.fill_terminator(m, &dom, func, id(node));
        }

        // Phis in region blocks that merge paths.
        let preds = m.functions[func].predecessors();
        for node in 1..=n {
            let b = id(node);
            if preds[b.index()].len() >= 2 && self.rng.gen_bool(0.5) {
                if let Some(ty) = self.cfg.universe.pick(&mut self.rng, |t| t.is_single_value() && !t.is_vector()) {
                    self.add_phi(m, func, b, ty, &preds[b.index()]);
                }
            }
        }
        Ok(())
    }

    fn shape_terminator(&mut self, targets: &[BlockId], ret_ty: Type) -> Terminator {
        match targets.len() {
            0 => Terminator::Ret((!ret_ty.is_void()).then(|| Value::Const(Const::undef(ret_ty)))),
            1 if self.rng.gen_bool(0.8) => Terminator::Br(targets[0]),
            2 if self.rng.gen_bool(0.7) => Terminator::CondBr {
                cond: Value::Const(Const::undef(Type::I1)),
                then_to: targets[0],
                else_to: targets[1],
            },
            _ => {
                let ty = self
                    .cfg
                    .universe
                    .pick(&mut self.rng, |t| t.is_int() && t.int_width() >= Some(8))
                    .unwrap_or(Type::I32);
                let w = ty.int_width().unwrap_or(32);
                let mut cases: Vec<(u128, BlockId)> = Vec::new();
                let start: u128 = self.rng.gen_range(0..4);
                let consecutive = self.rng.gen_bool(0.5);
                let next_case = |rng: &mut rand_chacha::ChaCha8Rng, cases: &[(u128, BlockId)]| loop {
                    let c = if consecutive {
                        start + cases.len() as u128
                    } else {
                        crate::ir::mask(rng.gen_range(0..64u128), w)
                    };
                    if !cases.iter().any(|(x, _)| *x == c) {
                        return c;
                    }
                    if consecutive {
                        unreachable!("consecutive cases are distinct");
                    }
                };
                for t in &targets[1..] {
                    let c = next_case(&mut self.rng, &cases);
                    cases.push((c, *t));
                }
                // A neighbouring case to the same block, like `x == 2 || x == 3`.
                if targets.len() > 1 && self.rng.gen_bool(0.3) {
                    let t = *targets[1..].choose(&mut self.rng).expect("non-empty");
                    let c = next_case(&mut self.rng, &cases);
                    cases.push((c, t));
                }
                Terminator::Switch { value: Value::Const(Const::undef(ty)), default: targets[0], cases }
            }
        }
    }

    /// Replaces placeholder terminator operands with sourced values.
    fn fill_terminator(&mut self, m: &mut Module, dom: &DomTree, func: usize, b: BlockId) {
        let tys: Vec<Type> = match &m.functions[func].block(b).term {
            Terminator::Ret(Some(v)) | Terminator::CondBr { cond: v, .. } | Terminator::Switch { value: v, .. } => {
                vec![m.type_of(func, v).expect("placeholder constant")]
            }
            _ => return,
        };
        let avail = available_at_end(m, dom, func, b);
        let mut cur = Cursor { func, block: b, pos: m.functions[func].block(b).body.len() };
        let v = self.source(m, &mut cur, tys[0], &avail);
        if let Some(slot) = m.functions[func].block_mut(b).term.operands_mut().into_iter().next() {
            *slot = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{MutatorConfig, Strategy, StrategyWeights};
    use super::*;
    use crate::ir::{parse_module, print_module, Function};
    use crate::verify::verify_module;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mutator(seed: u64) -> Mutator {
        let cfg =
            MutatorConfig { seed, weights: StrategyWeights::only(Strategy::InsertScfg), ..MutatorConfig::default() };
        Mutator::new(cfg).unwrap()
    }

    const LISTING2: &str = "define i64 @f(i32 %a) {
Entry:
  %Mem = alloca i64
  %L = load i64, ptr %Mem
  ret i64 %L
}";

    #[test]
    fn listing_three_shape() {
        let mut saw_switch = false;
        for seed in 0..40 {
            let mut m = parse_module(LISTING2).unwrap();
            mutator(seed).insert_scfg(&mut m).unwrap();
            assert!(verify_module(&m).is_empty(), "{}", print_module(&m));
            let f = &m.functions[0];
            assert_eq!(f.blocks[0].label, "EntrySrc");
            let sink = f.blocks.last().unwrap();
            assert_eq!(sink.label, "EntrySink");
            assert!(matches!(sink.term, Terminator::Ret(Some(_))));
            assert!(f.blocks[1..f.blocks.len() - 1].iter().all(|b| b.label.starts_with("sCFG_")));
            saw_switch |= matches!(f.blocks[0].term, Terminator::Switch { .. });
        }
        assert!(saw_switch);
    }

    #[test]
    fn empty_halves_split() {
        let mut m = parse_module("define void @f() { E: ret void }").unwrap();
        mutator(3).insert_scfg(&mut m).unwrap();
        assert!(verify_module(&m).is_empty());
        assert!(m.functions[0].blocks.len() >= 3);
    }

    #[test]
    fn self_loop_phis_follow_the_sink() {
        let src = "define i32 @f(i1 %c) {
E:
  br label %L
L:
  %p = phi i32 [ 0, %E ], [ %n, %L ]
  %n = add i32 %p, 1
  br i1 %c, label %L, label %X
X:
  ret i32 %n
}";
        for seed in 0..60 {
            let mut m = parse_module(src).unwrap();
            mutator(seed).insert_scfg(&mut m).unwrap();
            assert!(verify_module(&m).is_empty(), "seed {seed}\n{}", print_module(&m));
        }
    }

    /// A random CFG of up to `max` blocks with constant branch conditions.
    fn random_cfg(rng: &mut ChaCha8Rng, max: usize) -> Module {
        let n = rng.gen_range(1..=max);
        let mut f = Function::new("f", vec![], Type::Void);
        for i in 0..n {
            let pick = |rng: &mut ChaCha8Rng| BlockId(rng.gen_range(1..n.max(2) as u32).min(n as u32 - 1));
            let term = if n == 1 || rng.gen_bool(0.15) {
                Terminator::Ret(None)
            } else if rng.gen_bool(0.4) {
                Terminator::Br(pick(rng))
            } else if rng.gen_bool(0.6) {
                Terminator::CondBr {
                    cond: Value::Const(Const::int(Type::I1, 1)),
                    then_to: pick(rng),
                    else_to: pick(rng),
                }
            } else {
                let cases = (0..rng.gen_range(1..4u128)).map(|c| (c, pick(rng))).collect();
                Terminator::Switch { value: Value::Const(Const::int(Type::I8, 0)), default: pick(rng), cases }
            };
            let term = if i > 0 || n > 1 { term } else { Terminator::Ret(None) };
            f.blocks.push(Block::new(format!("B{i}"), term));
        }
        Module { functions: vec![f], ..Module::default() }
    }

    #[test]
    fn dominance_of_existing_blocks_is_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for trial in 0..300 {
            let mut m = random_cfg(&mut rng, 50);
            assert!(verify_module(&m).is_empty());
            let n = m.functions[0].blocks.len();
            let before = DomTree::compute(&m.functions[0]);
            mutator(trial).insert_scfg(&mut m).unwrap();
            assert!(verify_module(&m).is_empty(), "{}", print_module(&m));
            let after = DomTree::compute(&m.functions[0]);
            for a in 0..n as u32 {
                for b in 0..n as u32 {
                    let (a, b) = (BlockId(a), BlockId(b));
                    assert_eq!(before.dominates(a, b), after.dominates(a, b), "trial {trial}: {a:?} {b:?}");
                }
            }
        }
    }
}
