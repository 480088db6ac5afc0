//! Structural validity of modules.
//!
//! Checks operand typing, def-use dominance, phi arity against
//! predecessors, terminator well-formedness and aggregate indices.
//! Violations are data; `verify_module` never fails.

use std::collections::HashSet;
use std::fmt;

use crate::ir::{
    BlockId, Const, ConstVal, DomTree, Function, Imm, Inst, Module, Opcode, Scalar, Terminator, Type, Value,
    VECTOR_COUNTS,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ViolationKind {
    TypeMismatch,
    UseBeforeDef,
    DominanceViolation,
    PhiArity,
    BadTerminator,
    BadIndex,
    NameClash,
    /// Reference to a global, argument or callee that does not exist.
    UnknownSymbol,
}

/// Where a violation sits. Module-level problems (globals, declarations)
/// have no function; function-level ones have no block; `index` is the
/// position in `phis ++ body`, or `None` for the terminator.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Location {
    pub function: Option<usize>,
    pub block: Option<BlockId>,
    pub index: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Violation {
    pub kind: ViolationKind,
    pub location: Location,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.kind)?;
        if let Some(func) = self.location.function {
            write!(f, " fn#{func}")?;
        }
        if let Some(b) = self.location.block {
            write!(f, " bb{}", b.0)?;
            match self.location.index {
                Some(i) => write!(f, " #{i}")?,
                None => write!(f, " term")?,
            }
        }
        write!(f, ": {}", self.message)
    }
}

impl Violation {
    /// Renders the location with the module's own names.
    pub fn describe(&self, m: &Module) -> String {
        let mut out = format!("{:?}", self.kind);
        if let Some(f) = self.location.function.and_then(|i| m.functions.get(i)) {
            out.push_str(&format!(" @{}", f.name));
            if let Some(b) = self.location.block.and_then(|b| f.blocks.get(b.index())) {
                out.push_str(&format!(" %{}", b.label));
                match self.location.index {
                    Some(i) => out.push_str(&format!(" #{i}")),
                    None => out.push_str(" term"),
                }
            }
        }
        out.push_str(": ");
        out.push_str(&self.message);
        out
    }
}

/// All violations in `m`, in a deterministic order. Empty means valid.
pub fn verify_module(m: &Module) -> Vec<Violation> {
    let mut v = Verifier { m, out: Vec::new() };
    v.module();
    v.out
}

pub fn is_valid(m: &Module) -> bool {
    verify_module(m).is_empty()
}

struct Verifier<'a> {
    m: &'a Module,
    out: Vec<Violation>,
}

struct FnCtx<'a> {
    fi: usize,
    f: &'a Function,
    dom: DomTree,
    preds: Vec<Vec<BlockId>>,
    /// Definition block and position of every value slot.
    defs: Vec<Option<(BlockId, usize)>>,
}

fn loc(function: Option<usize>, block: Option<BlockId>, index: Option<usize>) -> Location {
    Location { function, block, index }
}

impl Verifier<'_> {
    fn push(&mut self, kind: ViolationKind, location: Location, message: impl Into<String>) {
        self.out.push(Violation { kind, location, message: message.into() });
    }

    fn module(&mut self) {
        let m = self.m;
        let mut globals = HashSet::new();
        for g in &m.globals {
            if !globals.insert(g.name.as_str()) {
                self.push(ViolationKind::NameClash, loc(None, None, None), format!("global @{} defined twice", g.name));
            }
            if g.ty.is_void() || !g.ty.is_valid() {
                self.push(
                    ViolationKind::TypeMismatch,
                    loc(None, None, None),
                    format!("global @{} has invalid type {}", g.name, g.ty),
                );
            }
            if let Some(c) = &g.init {
                if c.ty != g.ty {
                    self.push(
                        ViolationKind::TypeMismatch,
                        loc(None, None, None),
                        format!("initializer of @{} has type {}, expected {}", g.name, c.ty, g.ty),
                    );
                } else if let Err(e) = check_const(c) {
                    self.push(ViolationKind::TypeMismatch, loc(None, None, None), e);
                }
            }
        }
        let mut callables = HashSet::new();
        for d in &m.decls {
            if !callables.insert(d.name.as_str()) {
                self.push(ViolationKind::NameClash, loc(None, None, None), format!("@{} declared twice", d.name));
            }
            if d.params.iter().any(|t| t.is_void() || !t.is_valid()) || !d.ret.is_valid() {
                self.push(
                    ViolationKind::TypeMismatch,
                    loc(None, None, None),
                    format!("declaration @{} has an invalid type", d.name),
                );
            }
        }
        for (fi, f) in m.functions.iter().enumerate() {
            if !callables.insert(f.name.as_str()) {
                self.push(ViolationKind::NameClash, loc(Some(fi), None, None), format!("@{} defined twice", f.name));
            }
            self.function(fi, f);
        }
    }

    fn function(&mut self, fi: usize, f: &Function) {
        let floc = loc(Some(fi), None, None);
        if f.blocks.is_empty() {
            self.push(ViolationKind::BadTerminator, floc, "function has no blocks");
            return;
        }
        if f.params.iter().any(|p| p.ty.is_void() || !p.ty.is_valid()) || !f.ret.is_valid() {
            self.push(ViolationKind::TypeMismatch, floc.clone(), "invalid parameter or return type");
        }
        self.names(fi, f);

        let mut defs: Vec<Option<(BlockId, usize)>> = vec![None; f.values.len()];
        for b in f.block_ids() {
            for (pos, inst) in f.block(b).insts().enumerate() {
                let Some(r) = inst.result else { continue };
                match defs.get_mut(r.index()) {
                    Some(slot @ None) => *slot = Some((b, pos)),
                    Some(Some(_)) => self.push(
                        ViolationKind::NameClash,
                        loc(Some(fi), Some(b), Some(pos)),
                        format!("value slot {} defined twice", r.0),
                    ),
                    None => self.push(
                        ViolationKind::UnknownSymbol,
                        loc(Some(fi), Some(b), Some(pos)),
                        format!("result slot {} outside the value table", r.0),
                    ),
                }
            }
        }

        let n = f.blocks.len();
        let mut bad_target = false;
        for b in f.block_ids() {
            for s in f.successors(b) {
                if s.index() >= n {
                    bad_target = true;
                    self.push(
                        ViolationKind::BadTerminator,
                        loc(Some(fi), Some(b), None),
                        format!("branch to missing block {}", s.0),
                    );
                }
            }
        }
        if bad_target {
            // Dominance over a broken CFG is meaningless.
            return;
        }
        let preds = f.predecessors();
        if !preds[0].is_empty() {
            self.push(
                ViolationKind::BadTerminator,
                loc(Some(fi), Some(BlockId::ENTRY), None),
                "entry block has predecessors",
            );
        }
        let dom = DomTree::compute(f);
        let cx = FnCtx { fi, f, dom, preds, defs };
        for b in f.block_ids() {
            let block = f.block(b);
            for (pos, inst) in block.phis.iter().enumerate() {
                self.phi(&cx, b, pos, inst);
            }
            for (i, inst) in block.body.iter().enumerate() {
                let pos = block.phis.len() + i;
                if inst.op == Opcode::Phi {
                    self.push(
                        ViolationKind::PhiArity,
                        loc(Some(fi), Some(b), Some(pos)),
                        "phi after a non-phi instruction",
                    );
                    continue;
                }
                for op in &inst.operands {
                    self.use_of(&cx, b, Some(pos), op);
                }
                self.inst(&cx, b, pos, inst);
            }
            self.terminator(&cx, b);
        }
    }

    fn names(&mut self, fi: usize, f: &Function) {
        let mut labels = HashSet::new();
        for (i, b) in f.blocks.iter().enumerate() {
            if !labels.insert(b.label.as_str()) {
                self.push(
                    ViolationKind::NameClash,
                    loc(Some(fi), Some(BlockId(i as u32)), None),
                    format!("label %{} used twice", b.label),
                );
            }
        }
        let mut names = HashSet::new();
        for n in f.params.iter().map(|p| &p.name).chain(f.values.iter().map(|v| &v.name)) {
            if !names.insert(n.as_str()) {
                self.push(ViolationKind::NameClash, loc(Some(fi), None, None), format!("value name %{n} used twice"));
            }
        }
    }

    fn type_of(&mut self, cx: &FnCtx, at: &Location, v: &Value) -> Option<Type> {
        match v {
            Value::Const(c) => match check_const(c) {
                Ok(()) => Some(c.ty),
                Err(e) => {
                    self.push(ViolationKind::TypeMismatch, at.clone(), e);
                    None
                }
            },
            _ => match self.m.type_of(cx.fi, v) {
                Ok(t) => Some(t),
                Err(e) => {
                    self.push(ViolationKind::UnknownSymbol, at.clone(), e.to_string());
                    None
                }
            },
        }
    }

    /// Dominance of an ordinary (non-phi) use at `pos` in block `b`.
    /// `pos == None` is the terminator.
    fn use_of(&mut self, cx: &FnCtx, b: BlockId, pos: Option<usize>, v: &Value) {
        let Value::Inst(id) = v else { return };
        let at = loc(Some(cx.fi), Some(b), pos);
        let Some(def) = cx.defs.get(id.index()).copied() else {
            self.push(ViolationKind::UnknownSymbol, at, format!("use of unknown value slot {}", id.0));
            return;
        };
        let Some((db, dpos)) = def else {
            self.push(ViolationKind::UseBeforeDef, at, format!("use of never-defined value {}", name(cx.f, *id)));
            return;
        };
        if !cx.dom.is_reachable(b) {
            return;
        }
        if db == b {
            if pos.is_some_and(|p| dpos >= p) {
                self.push(ViolationKind::UseBeforeDef, at, format!("{} used before its definition", name(cx.f, *id)));
            }
        } else if !cx.dom.dominates(db, b) {
            self.push(
                ViolationKind::DominanceViolation,
                at,
                format!("definition of {} does not dominate this use", name(cx.f, *id)),
            );
        }
    }

    fn phi(&mut self, cx: &FnCtx, b: BlockId, pos: usize, inst: &Inst) {
        let at = loc(Some(cx.fi), Some(b), Some(pos));
        if inst.op != Opcode::Phi {
            self.push(ViolationKind::PhiArity, at, format!("{} in the phi section", inst.op));
            return;
        }
        let Some(rt) = self.result_ty(cx, &at, inst) else { return };
        let Imm::Incoming(incoming) = &inst.imm else {
            self.push(ViolationKind::PhiArity, at, "phi without incoming blocks");
            return;
        };
        if incoming.len() != inst.operands.len() {
            self.push(ViolationKind::PhiArity, at, "phi values and blocks differ in number");
            return;
        }
        let preds = &cx.preds[b.index()];
        let mut seen = HashSet::new();
        let arity_ok = incoming.len() == preds.len() && incoming.iter().all(|p| preds.contains(p) && seen.insert(*p));
        if !arity_ok || preds.is_empty() {
            self.push(
                ViolationKind::PhiArity,
                at.clone(),
                format!("phi has {} incoming edges for {} predecessors", incoming.len(), preds.len()),
            );
        }
        if !rt.is_single_value() {
            self.push(ViolationKind::TypeMismatch, at.clone(), format!("phi of non-first-class type {rt}"));
        }
        for (v, p) in inst.operands.iter().zip(incoming) {
            if let Some(t) = self.type_of(cx, &at, v) {
                if t != rt {
                    self.push(ViolationKind::TypeMismatch, at.clone(), format!("phi incoming {t}, expected {rt}"));
                }
            }
            // The value must be available at the end of the predecessor.
            let Value::Inst(id) = v else { continue };
            match cx.defs.get(id.index()).copied() {
                None => self.push(ViolationKind::UnknownSymbol, at.clone(), format!("unknown value slot {}", id.0)),
                Some(None) => self.push(
                    ViolationKind::UseBeforeDef,
                    at.clone(),
                    format!("use of never-defined value {}", name(cx.f, *id)),
                ),
                Some(Some((db, _))) => {
                    if p.index() < cx.f.blocks.len() && cx.dom.is_reachable(*p) && !cx.dom.dominates(db, *p) {
                        self.push(
                            ViolationKind::DominanceViolation,
                            at.clone(),
                            format!("{} does not dominate the edge from %{}", name(cx.f, *id), cx.f.block(*p).label),
                        );
                    }
                }
            }
        }
    }

    fn result_ty(&mut self, cx: &FnCtx, at: &Location, inst: &Inst) -> Option<Type> {
        match inst.result {
            None => {
                self.push(ViolationKind::TypeMismatch, at.clone(), format!("{} needs a result", inst.op));
                None
            }
            Some(r) => match cx.f.value_ty(r) {
                Some(t) if t.is_valid() && !t.is_void() => Some(t),
                Some(t) => {
                    self.push(ViolationKind::TypeMismatch, at.clone(), format!("invalid result type {t}"));
                    None
                }
                None => None,
            },
        }
    }

    fn inst(&mut self, cx: &FnCtx, b: BlockId, pos: usize, inst: &Inst) {
        let at = loc(Some(cx.fi), Some(b), Some(pos));
        if let Some(n) = inst.op.arity() {
            if inst.operands.len() != n {
                self.push(
                    ViolationKind::TypeMismatch,
                    at,
                    format!("{} takes {n} operands, got {}", inst.op, inst.operands.len()),
                );
                return;
            }
        }
        let mut tys = Vec::with_capacity(inst.operands.len());
        for op in &inst.operands {
            match self.type_of(cx, &at, op) {
                Some(t) => tys.push(t),
                None => return,
            }
        }
        if inst.op == Opcode::Call {
            self.call(cx, &at, inst, &tys);
            return;
        }
        if inst.op == Opcode::Store {
            if inst.result.is_some() {
                self.push(ViolationKind::TypeMismatch, at.clone(), "store produces no value");
            }
            if let Err(e) = store_rule(&tys) {
                self.push(ViolationKind::TypeMismatch, at, e);
            }
            return;
        }
        let Some(rt) = self.result_ty(cx, &at, inst) else { return };
        if let Err((kind, e)) = type_rule(inst, &tys, rt) {
            self.push(kind, at, e);
        }
    }

    fn call(&mut self, cx: &FnCtx, at: &Location, inst: &Inst, tys: &[Type]) {
        let Some(callee) = inst.callee() else {
            self.push(ViolationKind::UnknownSymbol, at.clone(), "call without a callee");
            return;
        };
        let Some(sig) = self.m.signature(callee) else {
            self.push(ViolationKind::UnknownSymbol, at.clone(), format!("call to undeclared @{callee}"));
            return;
        };
        if sig.params.as_slice() != tys {
            self.push(
                ViolationKind::TypeMismatch,
                at.clone(),
                format!("arguments do not match the signature of @{callee}"),
            );
        }
        let rt = inst.result.and_then(|r| cx.f.value_ty(r)).unwrap_or(Type::Void);
        if rt != sig.ret {
            self.push(
                ViolationKind::TypeMismatch,
                at.clone(),
                format!("call of @{callee} yields {rt}, declared {}", sig.ret),
            );
        }
    }

    fn terminator(&mut self, cx: &FnCtx, b: BlockId) {
        let at = loc(Some(cx.fi), Some(b), None);
        let term = &cx.f.block(b).term;
        for op in term.operands() {
            self.use_of(cx, b, None, op);
        }
        match term {
            Terminator::Ret(None) => {
                if !cx.f.ret.is_void() {
                    self.push(
                        ViolationKind::TypeMismatch,
                        at,
                        format!("ret void in a function returning {}", cx.f.ret),
                    );
                }
            }
            Terminator::Ret(Some(v)) => {
                if let Some(t) = self.type_of(cx, &at, v) {
                    if t != cx.f.ret || t.is_void() {
                        self.push(
                            ViolationKind::TypeMismatch,
                            at,
                            format!("ret {t} in a function returning {}", cx.f.ret),
                        );
                    }
                }
            }
            Terminator::Br(_) => {}
            Terminator::CondBr { cond, .. } => {
                if let Some(t) = self.type_of(cx, &at, cond) {
                    if t != Type::I1 {
                        self.push(ViolationKind::TypeMismatch, at, format!("branch condition of type {t}"));
                    }
                }
            }
            Terminator::Switch { value, cases, .. } => {
                let Some(t) = self.type_of(cx, &at, value) else { return };
                let Some(w) = t.int_width().filter(|_| t.is_int()) else {
                    self.push(ViolationKind::TypeMismatch, at, format!("switch over {t}"));
                    return;
                };
                let mut seen = HashSet::new();
                for (c, _) in cases {
                    if crate::ir::mask(*c, w) != *c {
                        self.push(ViolationKind::BadTerminator, at.clone(), format!("case {c} does not fit {t}"));
                    }
                    if !seen.insert(*c) {
                        self.push(ViolationKind::BadTerminator, at.clone(), format!("duplicate case {c}"));
                    }
                }
            }
        }
    }
}

fn name(f: &Function, id: crate::ir::ValueId) -> String {
    f.values.get(id.index()).map(|v| format!("%{}", v.name)).unwrap_or_else(|| format!("slot {}", id.0))
}

/// Payload/type agreement for a constant.
pub fn check_const(c: &Const) -> Result<(), String> {
    if !c.ty.is_valid() || c.ty.is_void() {
        return Err(format!("constant of invalid type {}", c.ty));
    }
    payload_fits(c.ty, &c.val).then_some(()).ok_or_else(|| format!("constant payload does not fit {}", c.ty))
}

fn payload_fits(ty: Type, val: &ConstVal) -> bool {
    match val {
        ConstVal::Undef | ConstVal::Poison | ConstVal::Zero => true,
        ConstVal::Int(v) => match ty {
            Type::Scalar(Scalar::Int(w)) => crate::ir::mask(*v, w) == *v,
            _ => false,
        },
        ConstVal::Float(bits) => match ty {
            Type::Scalar(Scalar::F32) => *bits <= u32::MAX as u64,
            Type::Scalar(Scalar::F64) => true,
            _ => false,
        },
        ConstVal::Vector(lanes) => match ty {
            Type::Vector(s, n) => {
                lanes.len() == n as usize
                    && lanes.iter().all(|l| !matches!(l, ConstVal::Vector(_)) && payload_fits(Type::Scalar(s), l))
            }
            _ => false,
        },
    }
}

fn store_rule(tys: &[Type]) -> Result<(), String> {
    if tys[0].is_void() {
        return Err("store of void".into());
    }
    if tys[1] != Type::ADDR {
        return Err(format!("store address of type {}", tys[1]));
    }
    Ok(())
}

fn same_shape(a: Type, b: Type) -> bool {
    match (a, b) {
        (Type::Scalar(_), Type::Scalar(_)) => true,
        (Type::Vector(_, n), Type::Vector(_, m)) => n == m,
        _ => false,
    }
}

fn is_sized(t: Type) -> bool {
    !t.is_void() && t.is_valid()
}

type RuleResult = Result<(), (ViolationKind, String)>;

fn mismatch(msg: String) -> RuleResult {
    Err((ViolationKind::TypeMismatch, msg))
}

/// Operand and result typing of every value-producing opcode except call
/// and phi.
fn type_rule(inst: &Inst, t: &[Type], rt: Type) -> RuleResult {
    use Opcode::*;
    let op = inst.op;
    let want = |ok: bool, what: &str| -> RuleResult {
        if ok {
            Ok(())
        } else {
            mismatch(format!("{op}: {what} (operands {}, result {rt})", join(t)))
        }
    };
    match op {
        FNeg => want(t[0].is_fp_or_vec_fp() && rt == t[0], "expects a float or float vector"),
        o if o.is_int_binary() => {
            want(t[0].is_int_or_vec_int(), "expects integers")?;
            want(t[1] == t[0] && rt == t[0], "operands must share the first operand's type")
        }
        o if o.is_fp_binary() => {
            want(t[0].is_fp_or_vec_fp(), "expects floats")?;
            want(t[1] == t[0] && rt == t[0], "operands must share the first operand's type")
        }
        ExtractElement => {
            want(t[0].is_vector(), "expects a vector")?;
            want(t[1].is_int(), "index must be an integer")?;
            want(Some(rt) == t[0].element(), "result must be the lane type")
        }
        InsertElement => {
            want(t[0].is_vector(), "expects a vector")?;
            want(Some(t[1]) == t[0].element(), "inserted value must match the lane type")?;
            want(t[2].is_int(), "index must be an integer")?;
            want(rt == t[0], "result must be the vector type")
        }
        ShuffleVector => {
            want(t[0].is_vector(), "expects a vector")?;
            want(t[1] == t[0], "both inputs must have the same type")?;
            let Imm::Mask(mask) = &inst.imm else {
                return mismatch("shufflevector without a constant mask".into());
            };
            let n = t[0].lanes().unwrap_or(0) as u32;
            if !VECTOR_COUNTS.contains(&(mask.len() as u8)) || mask.len() > 16 {
                return Err((ViolationKind::BadIndex, format!("mask of {} lanes", mask.len())));
            }
            if let Some(bad) = mask.iter().find(|&&l| l >= 2 * n) {
                return Err((ViolationKind::BadIndex, format!("mask lane {bad} out of range")));
            }
            want(
                t[0].scalar().and_then(|s| Type::vector(Type::Scalar(s), mask.len() as u8)) == Some(rt),
                "result must have the mask's length",
            )
        }
        ExtractValue | InsertValue => {
            want(t[0].is_array(), "expects an array")?;
            let Imm::Index(i) = inst.imm else {
                return mismatch(format!("{op} without a constant index"));
            };
            let len = t[0].array_len().unwrap_or(0) as u32;
            if i >= len {
                return Err((ViolationKind::BadIndex, format!("index {i} outside [{} x ...]", len)));
            }
            if op == ExtractValue {
                want(Some(rt) == t[0].element(), "result must be the element type")
            } else {
                want(Some(t[1]) == t[0].element(), "inserted value must match the element type")?;
                want(rt == t[0], "result must be the array type")
            }
        }
        GetElementPtr => {
            let Imm::Type(base) = inst.imm else {
                return mismatch("getelementptr without a source type".into());
            };
            want(is_sized(base), "source type must be sized")?;
            want(t[0] == Type::ADDR, "base must be an address")?;
            want(t[1].is_int(), "index must be an integer")?;
            want(rt == Type::ADDR, "result must be an address")
        }
        Trunc => want(
            t[0].is_int_or_vec_int()
                && t[0].int_width() != Some(1)
                && rt.is_int_or_vec_int()
                && same_shape(t[0], rt)
                && rt.int_width() < t[0].int_width(),
            "destination must be a narrower integer of the same shape",
        ),
        ZExt | SExt => want(
            t[0].is_int_or_vec_int()
                && rt.is_int_or_vec_int()
                && same_shape(t[0], rt)
                && rt.int_width() > t[0].int_width(),
            "destination must be a wider integer of the same shape",
        ),
        FPTrunc => want(
            t[0].is_fp_or_vec_fp()
                && rt.is_fp_or_vec_fp()
                && same_shape(t[0], rt)
                && rt.scalar().map(Scalar::bits) < t[0].scalar().map(Scalar::bits),
            "destination must be a narrower float of the same shape",
        ),
        FPToUI | FPToSI => want(
            t[0].is_fp_or_vec_fp() && rt.is_int_or_vec_int() && same_shape(t[0], rt),
            "expects float to integer of the same shape",
        ),
        UIToFP | SIToFP => want(
            t[0].is_int_or_vec_int() && rt.is_fp_or_vec_fp() && same_shape(t[0], rt),
            "expects integer to float of the same shape",
        ),
        PtrToInt => want(
            t[0].is_addr_or_vec_addr() && rt.is_int_or_vec_int() && same_shape(t[0], rt),
            "expects address to integer of the same shape",
        ),
        IntToPtr => want(
            t[0].is_int_or_vec_int() && rt.is_addr_or_vec_addr() && same_shape(t[0], rt),
            "expects integer to address of the same shape",
        ),
        BitCast => want(
            t[0].is_single_value()
                && rt.is_single_value()
                && !t[0].is_addr_or_vec_addr()
                && !rt.is_addr_or_vec_addr()
                && t[0].bit_width() == rt.bit_width(),
            "expects non-address types of equal bit width",
        ),
        ICmp | FCmp => {
            let ok = if op == ICmp {
                matches!(inst.imm, Imm::IntPred(_)) && t[0].is_int_or_vec_int()
            } else {
                matches!(inst.imm, Imm::FloatPred(_)) && t[0].is_fp_or_vec_fp()
            };
            want(ok, "operand kind and predicate disagree")?;
            want(t[1] == t[0], "operands must share a type")?;
            want(Some(rt) == t[0].bool_of_shape(), "result must be i1 of the operand shape")
        }
        Select => {
            want(t[0].is_bool_or_vec_bool(), "condition must be i1 or a vector of i1")?;
            want(t[1].is_single_value(), "selected values must be first-class")?;
            if let Some(n) = t[0].lanes() {
                want(t[1].lanes() == Some(n), "vector condition must match the value length")?;
            }
            want(t[2] == t[1] && rt == t[1], "both values and the result must share a type")
        }
        Alloca => {
            let Imm::Type(a) = inst.imm else {
                return mismatch("alloca without a type".into());
            };
            want(is_sized(a) && rt == Type::ADDR, "allocates a sized type and yields an address")
        }
        Load => want(t[0] == Type::ADDR && is_sized(rt), "loads a sized type from an address"),
        Store | Call | Phi => Ok(()),
        _ => Ok(()),
    }
}

fn join(ts: &[Type]) -> String {
    ts.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(", ")
}
