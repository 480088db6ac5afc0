//! Operand sourcing: which values are usable at a program point, random
//! constants, and the fallback chain for when nothing fits.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{MutateError, Mutator};
use crate::ir::{BlockId, Const, ConstVal, DomTree, Global, Imm, Inst, Module, Opcode, Scalar, Type, Value};

/// Insertion point: before body instruction `pos` of `block`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cursor {
    pub func: usize,
    pub block: BlockId,
    pub pos: usize,
}

/// Values usable at `cur`, in search order: globals, arguments, values of
/// strictly dominating blocks, then earlier values of the same block.
pub fn available(m: &Module, dom: &DomTree, cur: Cursor) -> Vec<(Value, Type)> {
    let f = &m.functions[cur.func];
    let mut out: Vec<(Value, Type)> = (0..m.globals.len() as u32).map(|g| (Value::Global(g), Type::ADDR)).collect();
    out.extend(f.params.iter().enumerate().map(|(i, p)| (Value::Arg(i as u32), p.ty)));
    let result = |inst: &Inst| inst.result.and_then(|r| f.value_ty(r).map(|t| (Value::Inst(r), t)));
    for d in f.block_ids() {
        if dom.strictly_dominates(d, cur.block) {
            out.extend(f.block(d).insts().filter_map(result));
        }
    }
    let here = f.block(cur.block);
    out.extend(here.phis.iter().chain(here.body.iter().take(cur.pos)).filter_map(result));
    out
}

/// Values available at the end of `b` (for phi incoming values and
/// terminator operands).
pub fn available_at_end(m: &Module, dom: &DomTree, func: usize, b: BlockId) -> Vec<(Value, Type)> {
    let pos = m.functions[func].block(b).body.len();
    available(m, dom, Cursor { func, block: b, pos })
}

fn random_int_bits<R: Rng>(rng: &mut R, w: u16) -> u128 {
    let all_ones = if w >= 128 { u128::MAX } else { (1u128 << w) - 1 };
    match rng.gen_range(0..8) {
        0 => 0,
        1 => 1,
        2 => all_ones,
        3 => 1u128 << rng.gen_range(0..w.max(1)),
        4 | 5 => rng.gen_range(0..=32),
        6 => (rng.gen_range(1..=8u128)).wrapping_neg(),
        _ => rng.gen(),
    }
}

fn random_float_bits<R: Rng>(rng: &mut R, s: Scalar) -> u64 {
    let v: f64 = *[0.0, 1.0, -1.0, 0.5, 2.0, 1e10, -0.0].choose(rng).expect("non-empty");
    let v = if rng.gen_bool(0.3) { rng.gen_range(-1000.0..1000.0) } else { v };
    match s {
        Scalar::F32 => (v as f32).to_bits() as u64,
        _ => v.to_bits(),
    }
}

fn random_lane<R: Rng>(rng: &mut R, s: Scalar) -> ConstVal {
    match s {
        Scalar::Int(w) => ConstVal::Int(crate::ir::mask(random_int_bits(rng, w), w)),
        Scalar::F32 | Scalar::F64 => ConstVal::Float(random_float_bits(rng, s)),
        Scalar::Addr => ConstVal::Zero,
    }
}

/// A random constant of `ty`; undef and poison each come up 5% of the time.
pub fn random_const<R: Rng>(rng: &mut R, ty: Type) -> Const {
    let roll = rng.gen_range(0..100);
    if roll < 5 {
        return Const::undef(ty);
    }
    if roll < 10 {
        return Const::poison(ty);
    }
    let val = match ty {
        Type::Scalar(s) => random_lane(rng, s),
        Type::Vector(Scalar::Addr, _) => ConstVal::Zero,
        Type::Vector(s, n) => {
            if rng.gen_bool(0.3) {
                ConstVal::Zero
            } else {
                ConstVal::Vector((0..n).map(|_| random_lane(rng, s)).collect())
            }
        }
        _ => ConstVal::Zero,
    };
    Const { ty, val }
}

impl Mutator {
    /// Inserts `inst` at the cursor and advances past it.
    pub(crate) fn insert(&mut self, m: &mut Module, cur: &mut Cursor, inst: Inst) {
        m.functions[cur.func].block_mut(cur.block).body.insert(cur.pos, inst);
        cur.pos += 1;
    }

    /// A fresh `alloca` at the top of the entry block.
    pub(crate) fn stack_slot(&mut self, m: &mut Module, cur: &mut Cursor, ty: Type) -> Value {
        let f = &mut m.functions[cur.func];
        let slot = f.new_value("Mem", Type::ADDR);
        f.block_mut(BlockId::ENTRY).body.insert(0, Inst::new(Opcode::Alloca, Some(slot), vec![], Imm::Type(ty)));
        if cur.block == BlockId::ENTRY {
            cur.pos += 1;
        }
        Value::Inst(slot)
    }

    pub(crate) fn new_global(&mut self, m: &mut Module, ty: Type) -> Value {
        let name = m.fresh_global_name("G");
        m.globals.push(Global { name, ty, init: Some(Const::zero(ty)) });
        Value::Global(m.globals.len() as u32 - 1)
    }

    pub(crate) fn load(&mut self, m: &mut Module, cur: &mut Cursor, ty: Type, addr: Value) -> Value {
        let r = m.functions[cur.func].new_value("L", ty);
        self.insert(m, cur, Inst::new(Opcode::Load, Some(r), vec![addr], Imm::None));
        Value::Inst(r)
    }

    /// A value of exactly `ty` usable at the cursor. Existing values are
    /// preferred; otherwise a load from an existing address, a new global,
    /// a constant or a new stack slot is made.
    pub(crate) fn source(&mut self, m: &mut Module, cur: &mut Cursor, ty: Type, avail: &[(Value, Type)]) -> Value {
        let cands: Vec<&Value> = avail.iter().filter(|(_, t)| *t == ty).map(|(v, _)| v).collect();
        if !cands.is_empty() && self.rng.gen_bool(0.85) {
            return (*cands.choose(&mut self.rng).expect("non-empty")).clone();
        }
        self.fallback(m, cur, ty, avail)
    }

    pub(crate) fn fallback(&mut self, m: &mut Module, cur: &mut Cursor, ty: Type, avail: &[(Value, Type)]) -> Value {
        let addrs: Vec<&Value> = avail.iter().filter(|(_, t)| *t == Type::ADDR).map(|(v, _)| v).collect();
        if !addrs.is_empty() && self.rng.gen_bool(0.25) {
            let addr = (*addrs.choose(&mut self.rng).expect("non-empty")).clone();
            return self.load(m, cur, ty, addr);
        }
        match self.rng.gen_range(0..6) {
            0 => {
                let g = self.new_global(m, ty);
                self.load(m, cur, ty, g)
            }
            1 => {
                let slot = self.stack_slot(m, cur, ty);
                self.load(m, cur, ty, slot)
            }
            _ => Value::Const(random_const(&mut self.rng, ty)),
        }
    }

    /// Picks a function index at random; errors on a module without one.
    pub(crate) fn pick_function(&mut self, m: &Module) -> Result<usize, MutateError> {
        let with_blocks: Vec<usize> = (0..m.functions.len()).filter(|i| !m.functions[*i].blocks.is_empty()).collect();
        with_blocks.choose(&mut self.rng).copied().ok_or(MutateError::NoFunction)
    }

    /// A random insertion point in a block that still has room.
    pub(crate) fn pick_cursor(&mut self, m: &Module) -> Result<Cursor, MutateError> {
        if m.inst_count() >= self.cfg.max_module_instrs {
            return Err(MutateError::LimitExceeded);
        }
        let func = self.pick_function(m)?;
        let f = &m.functions[func];
        let b = BlockId(self.rng.gen_range(0..f.blocks.len() as u32));
        let block = f.block(b);
        if block.phis.len() + block.body.len() >= self.cfg.max_instrs {
            return Err(MutateError::LimitExceeded);
        }
        let pos = self.rng.gen_range(0..=block.body.len());
        Ok(Cursor { func, block: b, pos })
    }
}
