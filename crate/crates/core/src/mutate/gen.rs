//! Function, instruction and call generation, dead-value sinking and
//! placeholder fixup.

use rand::seq::SliceRandom;
use rand::Rng;

use super::model::{model, plan};
use super::source::{available, available_at_end, random_const, Cursor};
use super::{MutateError, Mutator, GUIDED_SHARE};
use crate::ir::{
    Block, BlockId, Decl, DomTree, Function, Imm, Inst, Module, Opcode, Param, Terminator, Type, Value, ValueId,
};
use crate::target::{Root, TypeClass};

/// An opcode draw, possibly steered by guidance.
struct Draw {
    op: Opcode,
    vector: Option<bool>,
    classes: Vec<TypeClass>,
}

fn sized(t: Type) -> bool {
    !t.is_void() && t.is_valid()
}

impl Mutator {
    /// Adds a function with 0..=6 random parameters. A non-void return is
    /// fed by a load from a fresh stack slot, to be filled later.
    pub fn generate_function(&mut self, m: &mut Module) -> Result<(), MutateError> {
        if m.functions.len() >= self.cfg.max_functions {
            return Err(MutateError::LimitExceeded);
        }
        let nparams = self.rng.gen_range(0..=6);
        let params: Vec<Param> = (0..nparams)
            .map(|i| Param {
                name: format!("a{i}"),
                ty: self.cfg.universe.pick(&mut self.rng, |t| t.is_single_value()).expect("universe has scalars"),
            })
            .collect();
        let ret = if self.rng.gen_bool(0.2) {
            Type::Void
        } else {
            self.cfg.universe.pick(&mut self.rng, |t| t.is_single_value()).expect("universe has scalars")
        };
        let name = m.fresh_function_name("f");
        let mut f = Function::new(name, params, ret);
        let mut entry = Block::new("Entry", Terminator::Ret(None));
        if !ret.is_void() {
            let mem = f.new_value("Mem", Type::ADDR);
            let l = f.new_value("L", ret);
            entry.body.push(Inst::new(Opcode::Alloca, Some(mem), vec![], Imm::Type(ret)));
            entry.body.push(Inst::new(Opcode::Load, Some(l), vec![Value::Inst(mem)], Imm::None));
            entry.term = Terminator::Ret(Some(Value::Inst(l)));
        }
        f.blocks.push(entry);
        m.functions.push(f);
        Ok(())
    }

    fn draw_opcode(&mut self) -> Draw {
        let vectors = !self.cfg.universe.vectors.is_empty();
        if let Some(g) = &self.cfg.guidance {
            let guided: Vec<(Draw, u32)> = g
                .roots
                .iter()
                .filter_map(|r| match r.root {
                    Root::Op { op, vector } if op != Opcode::Call && (vectors || !vector) => {
                        Some((Draw { op, vector: Some(vector), classes: r.types.clone() }, r.weight))
                    }
                    _ => None,
                })
                .collect();
            if !guided.is_empty() && self.rng.gen_bool(GUIDED_SHARE) {
                let total: u32 = guided.iter().map(|(_, w)| *w).sum();
                let mut x = self.rng.gen_range(0..total);
                for (d, w) in guided {
                    if x < w {
                        return d;
                    }
                    x -= w;
                }
            }
        }
        let op = *self.opcodes.choose(&mut self.rng).expect("opcodes");
        Draw { op, vector: None, classes: Vec::new() }
    }

    /// Inserts one instruction at a random point, sourcing operands from
    /// dominating values or the fallback chain.
    pub fn generate_instruction(&mut self, m: &mut Module) -> Result<(), MutateError> {
        let mut cur = self.pick_cursor(m)?;
        let draw = self.draw_opcode();
        match draw.op {
            Opcode::Phi => return self.generate_phi(m, cur.func),
            Opcode::Call => return self.generate_call(m),
            _ => {}
        }
        let dom = DomTree::compute(&m.functions[cur.func]);
        let avail = available(m, &dom, cur);
        let universe = self.cfg.universe.clone();
        let (op, operands, result, imm) = match draw.op {
            Opcode::Alloca => {
                let t = universe.pick(&mut self.rng, sized).ok_or(MutateError::NoCandidateOpcode)?;
                (Opcode::Alloca, vec![], Some(Type::ADDR), Imm::Type(t))
            }
            Opcode::Load => {
                let t = universe.pick(&mut self.rng, sized).ok_or(MutateError::NoCandidateOpcode)?;
                (Opcode::Load, vec![Type::ADDR], Some(t), Imm::None)
            }
            Opcode::Store => {
                let t = universe.pick(&mut self.rng, sized).ok_or(MutateError::NoCandidateOpcode)?;
                (Opcode::Store, vec![t, Type::ADDR], None, Imm::None)
            }
            op => {
                debug_assert!(model(op).is_some());
                let use_classes = !draw.classes.is_empty() && self.rng.gen_bool(0.75);
                let classes = draw.classes;
                let vector = draw.vector;
                let primary = move |t: Type| {
                    vector.is_none_or(|v| t.is_vector() == v) && (!use_classes || classes.iter().any(|c| c.matches(t)))
                };
                let p = plan(&mut self.rng, op, &universe, &primary).ok_or(MutateError::NoCandidateOpcode)?;
                (p.op, p.operands, p.result, p.imm)
            }
        };
        let mut values = Vec::with_capacity(operands.len());
        for t in operands {
            values.push(self.source(m, &mut cur, t, &avail));
        }
        let r = result.map(|t| m.functions[cur.func].new_value("v", t));
        self.insert(m, &mut cur, Inst::new(op, r, values, imm));
        Ok(())
    }

    /// A phi at the top of a block with predecessors, one incoming value
    /// per predecessor.
    pub(crate) fn generate_phi(&mut self, m: &mut Module, func: usize) -> Result<(), MutateError> {
        let f = &m.functions[func];
        let preds = f.predecessors();
        let max = self.cfg.max_instrs;
        let candidates: Vec<BlockId> = f
            .block_ids()
            .filter(|b| !preds[b.index()].is_empty() && f.block(*b).phis.len() + f.block(*b).body.len() < max)
            .collect();
        let b = *candidates.choose(&mut self.rng).ok_or(MutateError::LimitExceeded)?;
        let ty =
            self.cfg.universe.pick(&mut self.rng, |t| t.is_single_value()).ok_or(MutateError::NoCandidateOpcode)?;
        self.add_phi(m, func, b, ty, &preds[b.index()]);
        Ok(())
    }

    pub(crate) fn add_phi(&mut self, m: &mut Module, func: usize, b: BlockId, ty: Type, preds: &[BlockId]) {
        let dom = DomTree::compute(&m.functions[func]);
        let mut incoming = Vec::with_capacity(preds.len());
        for p in preds {
            let avail = available_at_end(m, &dom, func, *p);
            let cands: Vec<&Value> = avail.iter().filter(|(_, t)| *t == ty).map(|(v, _)| v).collect();
            let v = match cands.choose(&mut self.rng) {
                Some(v) if self.rng.gen_bool(0.8) => (*v).clone(),
                _ => Value::Const(random_const(&mut self.rng, ty)),
            };
            incoming.push(v);
        }
        let f = &mut m.functions[func];
        let r = f.new_value("PHI", ty);
        f.block_mut(b).phis.push(Inst::new(Opcode::Phi, Some(r), incoming, Imm::Incoming(preds.to_vec())));
    }

    /// Inserts a call to a defined function, a declared intrinsic or an
    /// intrinsic named by guidance (declared on first use).
    pub fn generate_call(&mut self, m: &mut Module) -> Result<(), MutateError> {
        let mut callables: Vec<(String, Vec<Type>, Type)> = m
            .functions
            .iter()
            .map(|f| (f.name.clone(), f.params.iter().map(|p| p.ty).collect(), f.ret))
            .chain(m.decls.iter().map(|d| (d.name.clone(), d.params.clone(), d.ret)))
            .collect();
        let guided: Vec<(Decl, u32)> = self
            .cfg
            .guidance
            .as_ref()
            .map(|g| {
                g.intrinsics
                    .iter()
                    .filter(|i| {
                        i.decl.params.iter().chain([&i.decl.ret]).all(|t| t.is_void() || self.cfg.universe.contains(*t))
                            && m.function_index(&i.decl.name).is_none()
                    })
                    .map(|i| (i.decl.clone(), i.weight))
                    .collect()
            })
            .unwrap_or_default();
        if callables.is_empty() && guided.is_empty() {
            return Err(MutateError::NoCallable);
        }
        let mut cur = self.pick_cursor(m)?;
        let (name, params, ret) = if !guided.is_empty() && (callables.is_empty() || self.rng.gen_bool(0.5)) {
            let total: u32 = guided.iter().map(|(_, w)| *w).sum();
            let mut x = self.rng.gen_range(0..total);
            let decl = guided
                .iter()
                .find(|(_, w)| {
                    let hit = x < *w;
                    x = x.saturating_sub(*w);
                    hit
                })
                .map(|(d, _)| d.clone())
                .expect("weights cover the draw");
            if m.decl(&decl.name).is_none() {
                m.decls.push(decl.clone());
            }
            (decl.name, decl.params, decl.ret)
        } else {
            let i = self.rng.gen_range(0..callables.len());
            callables.swap_remove(i)
        };
        let dom = DomTree::compute(&m.functions[cur.func]);
        let avail = available(m, &dom, cur);
        let args: Vec<Value> = params.iter().map(|t| self.source(m, &mut cur, *t, &avail)).collect();
        let r = (!ret.is_void()).then(|| m.functions[cur.func].new_value("call", ret));
        self.insert(m, &mut cur, Inst::new(Opcode::Call, r, args, Imm::Callee(name)));
        Ok(())
    }

    /// Gives a dead value a use: replace a same-typed operand of a later,
    /// dominated instruction, or store it to a new global or stack slot.
    pub fn sink_value(&mut self, m: &mut Module) -> Result<(), MutateError> {
        let mut dead: Vec<(usize, BlockId, usize, ValueId, Type)> = Vec::new();
        for (fi, f) in m.functions.iter().enumerate() {
            let uses = f.use_counts();
            for b in f.block_ids() {
                for (pos, inst) in f.block(b).insts().enumerate() {
                    if let Some(r) = inst.result {
                        let ty = f.value_ty(r).unwrap_or(Type::Void);
                        if uses[r.index()] == 0 && sized(ty) {
                            dead.push((fi, b, pos, r, ty));
                        }
                    }
                }
            }
        }
        let &(fi, b, pos, r, ty) = dead.choose(&mut self.rng).ok_or(MutateError::NothingDead)?;
        if self.rng.gen_bool(0.5) && self.replace_later_operand(m, fi, b, pos, r, ty) {
            return Ok(());
        }
        if m.inst_count() >= self.cfg.max_module_instrs {
            return Err(MutateError::LimitExceeded);
        }
        let nphis = m.functions[fi].block(b).phis.len();
        let mut cur = Cursor { func: fi, block: b, pos: if pos < nphis { 0 } else { pos - nphis + 1 } };
        let addr = if self.rng.gen_bool(0.5) { self.new_global(m, ty) } else { self.stack_slot(m, &mut cur, ty) };
        self.insert(m, &mut cur, Inst::new(Opcode::Store, None, vec![Value::Inst(r), addr], Imm::None));
        Ok(())
    }

    fn replace_later_operand(
        &mut self,
        m: &mut Module,
        fi: usize,
        b: BlockId,
        pos: usize,
        r: ValueId,
        ty: Type,
    ) -> bool {
        let f = &m.functions[fi];
        let dom = DomTree::compute(f);
        // (block, body index or None for the terminator, operand index)
        let mut slots: Vec<(BlockId, Option<usize>, usize)> = Vec::new();
        let nphis = f.block(b).phis.len();
        let same_ty = |v: &Value| v.as_inst() != Some(r) && m.type_of(fi, v).ok() == Some(ty);
        for d in f.block_ids() {
            let block = f.block(d);
            let first = if d == b {
                pos.saturating_sub(nphis) + usize::from(pos >= nphis)
            } else if dom.is_reachable(d) && dom.strictly_dominates(b, d) {
                0
            } else {
                continue;
            };
            for (i, inst) in block.body.iter().enumerate().skip(first) {
                for (k, v) in inst.operands.iter().enumerate() {
                    if same_ty(v) {
                        slots.push((d, Some(i), k));
                    }
                }
            }
            for (k, v) in block.term.operands().into_iter().enumerate() {
                if same_ty(v) {
                    slots.push((d, None, k));
                }
            }
        }
        let Some(&(d, at, k)) = slots.choose(&mut self.rng) else { return false };
        let block = m.functions[fi].block_mut(d);
        match at {
            Some(i) => block.body[i].operands[k] = Value::Inst(r),
            None => *block.term.operands_mut()[k] = Value::Inst(r),
        }
        true
    }

    /// Every load from a stack slot with no dominating store either gets a
    /// store right before it or is replaced by an available value.
    pub fn fixup_placeholders(&mut self, m: &mut Module) -> Result<(), MutateError> {
        let mut removed = false;
        for fi in 0..m.functions.len() {
            loop {
                let f = &m.functions[fi];
                let dom = DomTree::compute(f);
                let Some((b, i, slot)) = unstored_loads(f, &dom).into_iter().next() else { break };
                let load = f.block(b).body[i].clone();
                let r = load.result.expect("load has a result");
                let ty = f.value_ty(r).expect("load type");
                let cur = Cursor { func: fi, block: b, pos: i };
                let avail = available(m, &dom, cur);
                let cands: Vec<Value> =
                    avail.into_iter().filter(|(v, t)| *t == ty && v.as_inst() != Some(slot)).map(|(v, _)| v).collect();
                match cands.choose(&mut self.rng).cloned() {
                    Some(v) if self.rng.gen_bool(0.5) => {
                        let f = &mut m.functions[fi];
                        f.replace_all_uses(r, &v);
                        f.block_mut(b).body.remove(i);
                        removed = true;
                    }
                    pick => {
                        let v = pick.unwrap_or_else(|| Value::Const(random_const(&mut self.rng, ty)));
                        let store = Inst::new(Opcode::Store, None, vec![v, Value::Inst(slot)], Imm::None);
                        m.functions[fi].block_mut(b).body.insert(i, store);
                    }
                }
            }
        }
        if removed {
            m.canonicalize();
        }
        Ok(())
    }
}

/// Loads from an `alloca` result with no store to that slot earlier in the
/// same block or in a strictly dominating block: `(block, body index, slot)`.
fn unstored_loads(f: &Function, dom: &DomTree) -> Vec<(BlockId, usize, ValueId)> {
    let mut slots: Vec<ValueId> = Vec::new();
    for block in &f.blocks {
        for inst in block.insts() {
            if inst.op == Opcode::Alloca {
                slots.extend(inst.result);
            }
        }
    }
    if slots.is_empty() {
        return Vec::new();
    }
    let mut stores: Vec<(BlockId, usize, ValueId)> = Vec::new();
    let mut loads: Vec<(BlockId, usize, ValueId)> = Vec::new();
    for b in f.block_ids() {
        for (i, inst) in f.block(b).body.iter().enumerate() {
            let addr = match inst.op {
                Opcode::Store => inst.operands.get(1),
                Opcode::Load => inst.operands.first(),
                _ => None,
            };
            let Some(slot) = addr.and_then(Value::as_inst).filter(|s| slots.contains(s)) else { continue };
            if inst.op == Opcode::Store {
                stores.push((b, i, slot));
            } else {
                loads.push((b, i, slot));
            }
        }
    }
    loads
        .into_iter()
        .filter(|&(b, i, slot)| {
            !stores.iter().any(|&(sb, si, s)| s == slot && ((sb == b && si < i) || dom.strictly_dominates(sb, b)))
        })
        .collect()
}

/// Number of loads from stack slots that no store dominates.
pub fn unstored_placeholder_loads(m: &Module) -> usize {
    m.functions.iter().map(|f| unstored_loads(f, &DomTree::compute(f)).len()).sum()
}

#[cfg(test)]
mod tests {
    use super::super::{MutatorConfig, Strategy, StrategyWeights, TypeUniverse};
    use super::*;
    use crate::feedback::{GuidanceReport, UncoveredIntrinsic, UncoveredRoot};
    use crate::ir::{parse_module, print_module};
    use crate::verify::verify_module;

    fn mutator(seed: u64) -> Mutator {
        Mutator::new(MutatorConfig { seed, ..MutatorConfig::default() }).unwrap()
    }

    #[test]
    fn empty_module_gets_the_placeholder_shape() {
        for seed in 0..50 {
            let mut mu = mutator(seed);
            let mut m = Module::default();
            mu.generate_function(&mut m).unwrap();
            assert!(verify_module(&m).is_empty());
            let f = &m.functions[0];
            let ops: Vec<Opcode> = f.blocks[0].body.iter().map(|i| i.op).collect();
            if f.ret.is_void() {
                assert!(ops.is_empty());
                assert_eq!(f.blocks[0].term, Terminator::Ret(None));
            } else {
                assert_eq!(ops, [Opcode::Alloca, Opcode::Load]);
                assert!(matches!(f.blocks[0].term, Terminator::Ret(Some(Value::Inst(_)))));
                assert_eq!(unstored_placeholder_loads(&m), 1);
            }
        }
    }

    #[test]
    fn function_cap() {
        let mut mu = Mutator::new(MutatorConfig { max_functions: 2, ..MutatorConfig::default() }).unwrap();
        let mut m = Module::default();
        mu.generate_function(&mut m).unwrap();
        mu.generate_function(&mut m).unwrap();
        assert_eq!(mu.generate_function(&mut m), Err(MutateError::LimitExceeded));
    }

    #[test]
    fn zext_from_a_phi() {
        let src = "define i64 @f(i32 %a, i1 %c) {
E:
  br i1 %c, label %B, label %C
B:
  br label %D
C:
  br label %D
D:
  %PHI = phi i32 [ %a, %B ], [ 7, %C ]
  ret i64 0
}";
        let mut seen = false;
        for seed in 0..400 {
            let mut m = parse_module(src).unwrap();
            let mut mu = mutator(seed);
            if mu.generate_instruction(&mut m).is_err() {
                continue;
            }
            assert!(verify_module(&m).is_empty(), "{}", print_module(&m));
            let text = print_module(&m);
            if text.contains("= zext i32 %PHI to i64") {
                seen = true;
                break;
            }
        }
        assert!(seen);
    }

    #[test]
    fn guidance_biases_opcodes() {
        let count = |guidance: Option<GuidanceReport>| {
            let cfg = MutatorConfig { seed: 11, guidance, ..MutatorConfig::default() };
            let mut mu = Mutator::new(cfg).unwrap();
            (0..2000).filter(|_| mu.draw_opcode().op == Opcode::FNeg).count()
        };
        let report = GuidanceReport {
            roots: vec![UncoveredRoot { root: Root::parse("fneg").unwrap(), weight: 10, types: vec![] }],
            intrinsics: vec![],
            epoch: 1,
        };
        let base = count(None) as f64;
        let guided = count(Some(report)) as f64;
        // 2x2 chi-square on (fneg, other) counts; 6.63 is the 1% point at one
        // degree of freedom.
        let n = 2000.0;
        let (a, b, c, d) = (guided, n - guided, base, n - base);
        let chi = 2.0 * n * (a * d - b * c).powi(2) / ((a + b) * (c + d) * (a + c) * (b + d));
        assert!(guided > base && chi > 6.63, "guided {guided} base {base} chi {chi}");
    }

    #[test]
    fn guided_intrinsic_is_declared_and_called() {
        let decl = parse_module("declare i64 @llvm.smax.i64(i64, i64)").unwrap().decls.remove(0);
        let report =
            GuidanceReport { roots: vec![], intrinsics: vec![UncoveredIntrinsic { decl, weight: 1 }], epoch: 1 };
        let mut m = parse_module("define void @f() { E: ret void }").unwrap();
        let cfg = MutatorConfig { seed: 5, guidance: Some(report), ..MutatorConfig::default() };
        let mut mu = Mutator::new(cfg).unwrap();
        for _ in 0..20 {
            mu.generate_call(&mut m).unwrap();
            if m.decl("llvm.smax.i64").is_some() {
                break;
            }
        }
        let text = print_module(&m);
        assert!(text.starts_with("declare i64 @llvm.smax.i64(i64, i64)"), "{text}");
        assert!(text.contains("call i64 @llvm.smax.i64("));
        assert!(verify_module(&m).is_empty());
    }

    #[test]
    fn call_to_void_function() {
        let mut m = parse_module("define void @f() { E: ret void }").unwrap();
        mutator(1).generate_call(&mut m).unwrap();
        assert!(print_module(&m).contains("call void @f()"));
        let mut empty = Module::default();
        assert_eq!(mutator(1).generate_call(&mut empty), Err(MutateError::NoCallable));
    }

    #[test]
    fn sinking_dead_values() {
        let src = "define i64 @f(i64 %a) {
E:
  %d = add i64 %a, 1
  %u = mul i64 %a, %a
  ret i64 %u
}";
        let (mut replaced, mut stored) = (false, false);
        for seed in 0..60 {
            let mut m = parse_module(src).unwrap();
            mutator(seed).sink_value(&mut m).unwrap();
            assert!(verify_module(&m).is_empty());
            let text = print_module(&m);
            replaced |= text.contains("mul i64 %d,") || text.contains(", %d\n") || text.contains("ret i64 %d");
            stored |= text.contains("store i64 %d, ptr @G") || text.contains("store i64 %d, ptr %Mem");
        }
        assert!(replaced && stored);
        let mut used = parse_module("define i64 @f(i64 %a) { E: ret i64 %a }").unwrap();
        assert_eq!(mutator(0).sink_value(&mut used), Err(MutateError::NothingDead));
    }

    #[test]
    fn fixup_stores_before_placeholder_loads() {
        let src = "define i64 @f(i32 %a, i64 %PHI) {
Entry:
  %Mem = alloca i64
  br label %Loop
Loop:
  %L = load i64, ptr %Mem
  br label %Loop
}";
        for seed in 0..30 {
            let mut m = parse_module(src).unwrap();
            assert_eq!(unstored_placeholder_loads(&m), 1);
            mutator(seed).fixup_placeholders(&mut m).unwrap();
            assert_eq!(unstored_placeholder_loads(&m), 0);
            assert!(verify_module(&m).is_empty(), "{}", print_module(&m));
        }
        let mut plain = parse_module("define i64 @f(i64 %a) { E: ret i64 %a }").unwrap();
        let before = plain.clone();
        mutator(0).fixup_placeholders(&mut plain).unwrap();
        assert_eq!(plain, before);
    }

    #[test]
    fn listing_four_store_shape() {
        let src = "define i64 @f(i32 %a) {
EntrySrc:
  %Mem = alloca i64
  switch i32 %a, label %sCFG_Default [ i32 1, label %sCFG_1 ]
sCFG_Default:
  br label %EntrySink
sCFG_1:
  br label %EntrySink
EntrySink:
  %PHI = phi i64 [ 1, %sCFG_Default ], [ 2, %sCFG_1 ]
  %L = load i64, ptr %Mem
  ret i64 %L
}";
        let mut seen = false;
        for seed in 0..30 {
            let mut m = parse_module(src).unwrap();
            mutator(seed).fixup_placeholders(&mut m).unwrap();
            assert!(verify_module(&m).is_empty());
            let text = print_module(&m);
            if text.contains("store i64 %PHI, ptr %Mem\n  %L = load i64, ptr %Mem") {
                seen = true;
            }
        }
        assert!(seen);
    }

    #[test]
    fn scalar_universe_never_emits_vectors() {
        let cfg = MutatorConfig {
            seed: 9,
            universe: TypeUniverse::default(),
            weights: StrategyWeights::only(Strategy::GenerateInstruction),
            ..MutatorConfig::default()
        };
        let mut mu = Mutator::new(cfg).unwrap();
        let mut m = Module::default();
        for _ in 0..500 {
            mu.mutate_step(&mut m);
        }
        assert!(!print_module(&m).contains('<'), "{}", print_module(&m));
    }
}
