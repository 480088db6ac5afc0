//! Blocks, functions and modules.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use super::inst::{BlockId, Imm, Inst, Terminator, Value, ValueId};
use super::types::Type;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Block {
    pub label: String,
    pub phis: Vec<Inst>,
    pub body: Vec<Inst>,
    pub term: Terminator,
}

impl Block {
    pub fn new(label: impl Into<String>, term: Terminator) -> Block {
        Block { label: label.into(), phis: Vec::new(), body: Vec::new(), term }
    }

    /// Phis followed by body instructions.
    pub fn insts(&self) -> impl Iterator<Item = &Inst> {
        self.phis.iter().chain(self.body.iter())
    }

    pub fn insts_mut(&mut self) -> impl Iterator<Item = &mut Inst> {
        self.phis.iter_mut().chain(self.body.iter_mut())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Param {
    pub name: String,
    pub ty: Type,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ValueInfo {
    pub name: String,
    pub ty: Type,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Function {
    pub name: String,
    pub params: Vec<Param>,
    pub ret: Type,
    pub blocks: Vec<Block>,
    /// Result slots of value-producing instructions, indexed by `ValueId`.
    pub values: Vec<ValueInfo>,
}

/// Where a value is defined: block and position in `phis ++ body`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DefSite {
    pub block: BlockId,
    pub pos: usize,
}

impl Function {
    pub fn new(name: impl Into<String>, params: Vec<Param>, ret: Type) -> Function {
        Function { name: name.into(), params, ret, blocks: Vec::new(), values: Vec::new() }
    }

    pub fn block(&self, b: BlockId) -> &Block {
        &self.blocks[b.index()]
    }

    pub fn block_mut(&mut self, b: BlockId) -> &mut Block {
        &mut self.blocks[b.index()]
    }

    pub fn block_ids(&self) -> impl Iterator<Item = BlockId> {
        (0..self.blocks.len() as u32).map(BlockId)
    }

    pub fn value_ty(&self, id: ValueId) -> Option<Type> {
        self.values.get(id.index()).map(|v| v.ty)
    }

    pub fn inst_count(&self) -> usize {
        self.blocks.iter().map(|b| b.phis.len() + b.body.len()).sum()
    }

    /// Allocates a fresh result slot with a name not used elsewhere in the
    /// function.
    pub fn new_value(&mut self, hint: &str, ty: Type) -> ValueId {
        let mut n = self.values.len();
        let name = loop {
            let candidate = format!("{hint}{n}");
            let taken =
                self.values.iter().any(|v| v.name == candidate) || self.params.iter().any(|p| p.name == candidate);
            if !taken {
                break candidate;
            }
            n += 1;
        };
        self.values.push(ValueInfo { name, ty });
        ValueId(self.values.len() as u32 - 1)
    }

    pub fn fresh_label(&self, hint: &str) -> String {
        let taken: HashSet<&str> = self.blocks.iter().map(|b| b.label.as_str()).collect();
        if !taken.contains(hint) {
            return hint.to_string();
        }
        (1..).map(|n| format!("{hint}{n}")).find(|c| !taken.contains(c.as_str())).expect("label space exhausted")
    }

    pub fn successors(&self, b: BlockId) -> Vec<BlockId> {
        self.block(b).term.successors()
    }

    /// Distinct predecessors of every block, ordered by block id.
    pub fn predecessors(&self) -> Vec<Vec<BlockId>> {
        let mut preds = vec![Vec::new(); self.blocks.len()];
        for b in self.block_ids() {
            for s in self.successors(b) {
                if let Some(p) = preds.get_mut(s.index()) {
                    if !p.contains(&b) {
                        p.push(b);
                    }
                }
            }
        }
        preds
    }

    /// Definition site of every value id that is defined by an instruction.
    pub fn def_sites(&self) -> Vec<Option<DefSite>> {
        let mut sites = vec![None; self.values.len()];
        for b in self.block_ids() {
            for (pos, inst) in self.block(b).insts().enumerate() {
                if let Some(r) = inst.result {
                    if let Some(slot) = sites.get_mut(r.index()) {
                        *slot = Some(DefSite { block: b, pos });
                    }
                }
            }
        }
        sites
    }

    /// Number of uses of each value id, terminators included.
    pub fn use_counts(&self) -> Vec<u32> {
        let mut counts = vec![0u32; self.values.len()];
        let mut bump = |v: &Value| {
            if let Value::Inst(id) = v {
                if let Some(c) = counts.get_mut(id.index()) {
                    *c += 1;
                }
            }
        };
        for block in &self.blocks {
            for inst in block.insts() {
                inst.operands.iter().for_each(&mut bump);
            }
            block.term.operands().into_iter().for_each(&mut bump);
        }
        counts
    }

    /// Renumbers value ids in textual order (phis, then body, block by
    /// block) and drops slots no instruction defines. Operands referring
    /// to undefined slots are kept, renumbered after all defined ones.
    pub fn canonicalize(&mut self) {
        let mut map: HashMap<ValueId, ValueId> = HashMap::new();
        let mut values = Vec::with_capacity(self.values.len());
        for block in &self.blocks {
            for inst in block.insts() {
                if let Some(r) = inst.result {
                    if map.contains_key(&r) {
                        continue;
                    }
                    map.insert(r, ValueId(values.len() as u32));
                    values.push(self.slot_info(r));
                }
            }
        }
        if values.len() == self.values.len() && map.iter().all(|(k, v)| k == v) {
            return;
        }
        let old = std::mem::take(&mut self.values);
        let info = |id: ValueId| {
            old.get(id.index()).cloned().unwrap_or(ValueInfo { name: format!("dangling{}", id.0), ty: Type::Void })
        };
        let remap = |v: &mut Value, map: &mut HashMap<ValueId, ValueId>, values: &mut Vec<ValueInfo>| {
            if let Value::Inst(id) = v {
                let next = ValueId(values.len() as u32);
                let n = *map.entry(*id).or_insert_with(|| {
                    values.push(info(*id));
                    next
                });
                *id = n;
            }
        };
        for block in &mut self.blocks {
            for inst in block.phis.iter_mut().chain(block.body.iter_mut()) {
                if let Some(r) = inst.result.as_mut() {
                    *r = map[r];
                }
                for op in &mut inst.operands {
                    remap(op, &mut map, &mut values);
                }
            }
            for op in block.term.operands_mut() {
                remap(op, &mut map, &mut values);
            }
        }
        self.values = values;
    }

    fn slot_info(&self, id: ValueId) -> ValueInfo {
        self.values.get(id.index()).cloned().unwrap_or(ValueInfo { name: format!("dangling{}", id.0), ty: Type::Void })
    }

    /// Replaces every use of `from` with `to`, terminators included.
    pub fn replace_all_uses(&mut self, from: ValueId, to: &Value) {
        for block in &mut self.blocks {
            for inst in block.phis.iter_mut().chain(block.body.iter_mut()) {
                for op in &mut inst.operands {
                    if op.as_inst() == Some(from) {
                        *op = to.clone();
                    }
                }
            }
            for op in block.term.operands_mut() {
                if op.as_inst() == Some(from) {
                    *op = to.clone();
                }
            }
        }
    }

    /// Rewrites phi incoming blocks `from` to `to` in block `b`.
    pub fn retarget_phis(&mut self, b: BlockId, from: BlockId, to: BlockId) {
        for phi in &mut self.block_mut(b).phis {
            if let Imm::Incoming(blocks) = &mut phi.imm {
                for inc in blocks.iter_mut() {
                    if *inc == from {
                        *inc = to;
                    }
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Global {
    pub name: String,
    pub ty: Type,
    pub init: Option<super::inst::Const>,
}

/// A body-less function declaration (intrinsics).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Decl {
    pub name: String,
    pub params: Vec<Type>,
    pub ret: Type,
}

impl std::fmt::Display for Decl {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "declare {} @{}(", self.ret, self.name)?;
        for (i, p) in self.params.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{p}")?;
        }
        f.write_str(")")
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Module {
    pub globals: Vec<Global>,
    pub decls: Vec<Decl>,
    pub functions: Vec<Function>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IrError {
    #[error("dangling value reference {0:?}")]
    DanglingRef(Value),
}

/// Signature of something callable: a defined function or a declaration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Signature {
    pub name: String,
    pub params: Vec<Type>,
    pub ret: Type,
    pub is_decl: bool,
}

impl Module {
    pub fn is_empty(&self) -> bool {
        self.globals.is_empty() && self.decls.is_empty() && self.functions.is_empty()
    }

    /// Type of an operand used inside `func`.
    pub fn type_of(&self, func: usize, v: &Value) -> Result<Type, IrError> {
        let dangling = || IrError::DanglingRef(v.clone());
        match v {
            Value::Const(c) => Ok(c.ty),
            Value::Global(g) => self.globals.get(*g as usize).map(|_| Type::ADDR).ok_or_else(dangling),
            Value::Arg(i) => {
                self.functions.get(func).and_then(|f| f.params.get(*i as usize)).map(|p| p.ty).ok_or_else(dangling)
            }
            Value::Inst(id) => self.functions.get(func).and_then(|f| f.value_ty(*id)).ok_or_else(dangling),
        }
    }

    pub fn function_index(&self, name: &str) -> Option<usize> {
        self.functions.iter().position(|f| f.name == name)
    }

    pub fn decl(&self, name: &str) -> Option<&Decl> {
        self.decls.iter().find(|d| d.name == name)
    }

    pub fn signature(&self, name: &str) -> Option<Signature> {
        if let Some(f) = self.functions.iter().find(|f| f.name == name) {
            return Some(Signature {
                name: f.name.clone(),
                params: f.params.iter().map(|p| p.ty).collect(),
                ret: f.ret,
                is_decl: false,
            });
        }
        self.decl(name).map(|d| Signature { name: d.name.clone(), params: d.params.clone(), ret: d.ret, is_decl: true })
    }

    pub fn global_index(&self, name: &str) -> Option<u32> {
        self.globals.iter().position(|g| g.name == name).map(|i| i as u32)
    }

    pub fn fresh_global_name(&self, hint: &str) -> String {
        let taken: HashSet<&str> = self.globals.iter().map(|g| g.name.as_str()).collect();
        (self.globals.len()..)
            .map(|n| format!("{hint}{n}"))
            .find(|c| !taken.contains(c.as_str()))
            .expect("global name space exhausted")
    }

    pub fn fresh_function_name(&self, hint: &str) -> String {
        let taken: HashSet<&str> =
            self.functions.iter().map(|f| f.name.as_str()).chain(self.decls.iter().map(|d| d.name.as_str())).collect();
        (self.functions.len()..)
            .map(|n| format!("{hint}{n}"))
            .find(|c| !taken.contains(c.as_str()))
            .expect("function name space exhausted")
    }

    pub fn inst_count(&self) -> usize {
        self.functions.iter().map(Function::inst_count).sum()
    }

    pub fn canonicalize(&mut self) {
        for f in &mut self.functions {
            f.canonicalize();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::inst::{Const, Opcode};

    fn tiny() -> Function {
        let mut f = Function::new("f", vec![Param { name: "a".into(), ty: Type::I32 }], Type::I32);
        let b = f.new_value("v", Type::I32);
        let a = f.new_value("v", Type::I32);
        let mut block = Block::new("E", Terminator::Ret(Some(Value::Inst(b))));
        block.body.push(Inst::new(
            Opcode::Add,
            Some(a),
            vec![Value::Arg(0), Value::Const(Const::int(Type::I32, 1))],
            Imm::None,
        ));
        block.body.push(Inst::new(Opcode::Mul, Some(b), vec![Value::Inst(a), Value::Inst(a)], Imm::None));
        f.blocks.push(block);
        f
    }

    #[test]
    fn canonicalize_orders_by_definition() {
        let mut f = tiny();
        f.canonicalize();
        assert_eq!(f.block(BlockId::ENTRY).body[0].result, Some(ValueId(0)));
        assert_eq!(f.block(BlockId::ENTRY).body[1].operands[0], Value::Inst(ValueId(0)));
        assert_eq!(f.block(BlockId::ENTRY).term, Terminator::Ret(Some(Value::Inst(ValueId(1)))));
        assert_eq!(f.values[0].name, "v1");
    }

    #[test]
    fn use_counts_include_terminators() {
        let f = tiny();
        assert_eq!(f.use_counts(), vec![1, 2]);
    }

    #[test]
    fn fresh_names_avoid_params() {
        let mut f = Function::new("f", vec![Param { name: "v0".into(), ty: Type::I8 }], Type::Void);
        let id = f.new_value("v", Type::I8);
        assert_eq!(f.values[id.index()].name, "v1");
    }

    #[test]
    fn type_of_reports_dangling() {
        let mut m = Module::default();
        m.functions.push(tiny());
        assert_eq!(m.type_of(0, &Value::Arg(0)), Ok(Type::I32));
        assert!(matches!(m.type_of(0, &Value::Arg(3)), Err(IrError::DanglingRef(_))));
        assert!(matches!(m.type_of(0, &Value::Global(0)), Err(IrError::DanglingRef(_))));
    }
}
