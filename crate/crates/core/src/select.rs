//! The program under test: a matcher-table interpreter that selects a
//! pattern for every instruction of a module.
//!
//! Every table byte the interpreter reads is recorded in the run's
//! matcher bitmap; a handful of coarse probes (pipeline stages, per-root
//! dispatch, per-instruction outcome) feed the edge map.

use std::fmt;

use thiserror::Error;

use crate::coverage::CoverageState;
use crate::ir::{parse_module, Const, Inst, Module, Opcode, Terminator, Type, Value};
use crate::target::{
    decode_entry, Entry, EntryKind, FaultEffect, FeatureSet, MatcherProgram, Root, TargetSpec, Trigger, TypeClass,
    RESULT_SLOT,
};
use crate::verify::verify_module;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FindingKind {
    MissingPattern,
    InjectedAbort,
    HangSentinel,
    VerifierReject,
}

impl FindingKind {
    pub fn name(self) -> &'static str {
        match self {
            FindingKind::MissingPattern => "MissingPattern",
            FindingKind::InjectedAbort => "InjectedAbort",
            FindingKind::HangSentinel => "HangSentinel",
            FindingKind::VerifierReject => "VerifierReject",
        }
    }

    pub fn parse(s: &str) -> Option<FindingKind> {
        [
            FindingKind::MissingPattern,
            FindingKind::InjectedAbort,
            FindingKind::HangSentinel,
            FindingKind::VerifierReject,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }
}

/// Deduplication key of a failure.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FailureSignature {
    pub kind: FindingKind,
    pub root: String,
    /// Operand types, then `->` and the result type.
    pub types: String,
    pub byte_index: u32,
    pub target: String,
}

impl FailureSignature {
    /// 64-bit FNV-1a of the textual form.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.to_string().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }

    pub fn hash_hex(&self) -> String {
        format!("{:016x}", self.hash())
    }

    pub fn parse(text: &str) -> Option<FailureSignature> {
        let mut kind = None;
        let (mut root, mut types, mut index, mut target) = (None, None, None, None);
        for line in text.lines() {
            let (k, v) = line.split_once('=')?;
            match k {
                "kind" => kind = FindingKind::parse(v),
                "root" => root = Some(v.to_string()),
                "types" => types = Some(v.to_string()),
                "index" => index = v.parse().ok(),
                "target" => target = Some(v.to_string()),
                _ => return None,
            }
        }
        Some(FailureSignature { kind: kind?, root: root?, types: types?, byte_index: index?, target: target? })
    }
}

impl fmt::Display for FailureSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "kind={}", self.kind.name())?;
        writeln!(f, "root={}", self.root)?;
        writeln!(f, "types={}", self.types)?;
        writeln!(f, "index={}", self.byte_index)?;
        writeln!(f, "target={}", self.target)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Ok,
    Finding(FailureSignature),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SelectionResult {
    /// Pattern chosen for each selected instruction, in selection order.
    pub matched: Vec<u16>,
    pub verdict: Verdict,
}

impl SelectionResult {
    pub fn finding(&self) -> Option<&FailureSignature> {
        match &self.verdict {
            Verdict::Finding(s) => Some(s),
            Verdict::Ok => None,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SelectError {
    #[error("malformed matcher table at byte {0}")]
    MalformedTable(usize),
}

/// Outcome of selecting one instruction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InstOutcome {
    Matched(u16),
    Failed { kind: FindingKind, byte_index: u32 },
}

/// What the matcher sees of an instruction or terminator.
#[derive(Clone, Debug, PartialEq)]
pub struct InstView {
    pub root: Root,
    pub code: u16,
    pub operands: Vec<(Type, Option<Const>)>,
    pub result: Type,
}

impl InstView {
    pub fn slot_type(&self, slot: u8) -> Option<Type> {
        if slot == RESULT_SLOT {
            return Some(self.result).filter(|t| !t.is_void());
        }
        self.operands.get(slot as usize).map(|(t, _)| *t)
    }

    fn slot_const(&self, slot: u8) -> Option<&Const> {
        self.operands.get(slot as usize).and_then(|(_, c)| c.as_ref())
    }

    /// Signed value of an integer constant operand; undef and poison have
    /// none.
    pub fn slot_int(&self, slot: u8) -> Option<i128> {
        let c = self.slot_const(slot)?;
        c.as_signed()
    }

    pub fn slot_is_const(&self, slot: u8) -> bool {
        self.slot_const(slot).is_some()
    }

    pub fn type_summary(&self) -> String {
        let ops: Vec<String> = self.operands.iter().map(|(t, _)| t.to_string()).collect();
        format!("{}->{}", ops.join(","), self.result)
    }

    fn triggers(&self, t: &Trigger) -> bool {
        match t {
            Trigger::Width(w) => self
                .operands
                .iter()
                .map(|(t, _)| *t)
                .chain(std::iter::once(self.result))
                .any(|t| t.int_width() == Some(*w)),
            Trigger::Root(r) => &self.root == r,
        }
    }
}

fn operand_view(m: &Module, fi: usize, v: &Value) -> (Type, Option<Const>) {
    let ty = m.type_of(fi, v).unwrap_or(Type::Void);
    let c = match v {
        Value::Const(c) => Some(c.clone()),
        _ => None,
    };
    (ty, c)
}

/// Builds the matcher's view of a body instruction.
pub fn view_instruction(t: &TargetSpec, m: &Module, fi: usize, inst: &Inst) -> InstView {
    let f = &m.functions[fi];
    let operands: Vec<_> = inst.operands.iter().map(|v| operand_view(m, fi, v)).collect();
    let result = inst.result.and_then(|r| f.value_ty(r)).unwrap_or(Type::Void);
    let root = match inst.op {
        Opcode::Call => match inst.callee() {
            Some(c) if m.decl(c).is_some() => Root::Intrinsic(c.to_string()),
            _ => Root::Call,
        },
        op => {
            let vector = result.is_vector() || operands.iter().any(|(t, _)| t.is_vector());
            Root::Op { op, vector }
        }
    };
    InstView { code: t.root_code(&root), root, operands, result }
}

pub fn view_terminator(t: &TargetSpec, m: &Module, fi: usize, term: &Terminator) -> InstView {
    let root = match term {
        Terminator::Ret(_) => Root::Ret,
        Terminator::Br(_) => Root::Br,
        Terminator::CondBr { .. } => Root::CondBr,
        Terminator::Switch { .. } => Root::Switch,
    };
    let operands = term.operands().into_iter().map(|v| operand_view(m, fi, v)).collect();
    InstView { code: t.root_code(&root), root, operands, result: Type::Void }
}

/// Probe ids. Stage probes are fixed; dispatch probes mix the root code.
pub mod probe {
    pub const PARSE: u16 = 0x9c41;
    pub const PARSE_FAIL: u16 = 0x2b17;
    pub const VERIFY_OK: u16 = 0x63d2;
    pub const VERIFY_FAIL: u16 = 0xd08e;
    pub const MATCHED: u16 = 0x4a35;
    pub const FAILED: u16 = 0xf1c9;
    pub const DONE_OK: u16 = 0x1e6b;
    pub const DONE_FINDING: u16 = 0x87a0;

    pub fn dispatch(code: u16) -> u16 {
        let x = (code as u32 ^ 0x5bd1_e995).wrapping_mul(0x9e37_79b1);
        (x >> 16) as u16
    }
}

/// A configured selector: a target, its compiled table and enabled features.
pub struct Selector<'a> {
    pub target: &'a TargetSpec,
    pub program: &'a MatcherProgram,
    pub features: FeatureSet,
    /// Receives `(byte index, entry kind)` for every byte read when set.
    pub trace: Option<Vec<(u32, EntryKind)>>,
    stack: Vec<usize>,
    decoded: Vec<Option<Entry>>,
}

impl<'a> Selector<'a> {
    pub fn new(target: &'a TargetSpec, program: &'a MatcherProgram, features: FeatureSet) -> Selector<'a> {
        let decoded = vec![None; program.size()];
        Selector { target, program, features, trace: None, stack: Vec::with_capacity(8), decoded }
    }

    pub fn with_trace(mut self) -> Selector<'a> {
        self.trace = Some(Vec::new());
        self
    }

    /// The entry at `pc`, decoded on first visit and cached.
    fn entry(&mut self, pc: usize) -> Result<Entry, SelectError> {
        if let Some(Some(e)) = self.decoded.get(pc) {
            return Ok(*e);
        }
        let e = decode_entry(&self.program.bytes, pc).map_err(|_| SelectError::MalformedTable(pc))?;
        if let Entry::Scope { resume, .. } = e {
            if resume as usize > self.program.size() {
                return Err(SelectError::MalformedTable(pc));
            }
        }
        self.decoded[pc] = Some(e);
        Ok(e)
    }

    #[inline]
    fn read(&mut self, cov: &mut CoverageState, at: usize, kind: EntryKind) {
        let size = kind.size();
        cov.matcher.mark_range(at, size);
        if let Some(tr) = &mut self.trace {
            tr.extend((at..at + size).map(|i| (i as u32, kind)));
        }
    }

    /// Interprets the table from byte 0 for one instruction.
    pub fn select_instruction(&mut self, view: &InstView, cov: &mut CoverageState) -> Result<InstOutcome, SelectError> {
        let budget = self.program.size().saturating_mul(10);
        self.stack.clear();
        let mut pc = 0usize;
        let mut steps = 0usize;
        loop {
            steps += 1;
            if steps > budget {
                return Ok(InstOutcome::Failed { kind: FindingKind::HangSentinel, byte_index: pc as u32 });
            }
            let entry = self.entry(pc)?;
            let kind = entry.kind();
            self.read(cov, pc, kind);
            let pass = match entry {
                Entry::Scope { resume, .. } => {
                    self.stack.push(resume as usize);
                    true
                }
                Entry::CheckOpcode { root, .. } => root == view.code,
                Entry::CheckType { slot, class, .. } => {
                    let class = TypeClass::from_code(class).ok_or(SelectError::MalformedTable(pc))?;
                    view.slot_type(slot).is_some_and(|t| class.matches(t))
                }
                Entry::CheckFeature { feature, .. } => self.features.contains(feature as usize),
                Entry::CheckIsConst { slot, .. } => view.slot_is_const(slot),
                Entry::CheckConstRange { slot, lo, hi, .. } => {
                    view.slot_int(slot).is_some_and(|v| lo as i128 <= v && v <= hi as i128)
                }
                Entry::Emit { pattern, .. } => {
                    for fault in &self.target.faults {
                        if view.triggers(&fault.trigger) {
                            let kind = match fault.effect {
                                FaultEffect::Abort => FindingKind::InjectedAbort,
                                FaultEffect::Hang => FindingKind::HangSentinel,
                            };
                            return Ok(InstOutcome::Failed { kind, byte_index: pc as u32 });
                        }
                    }
                    return Ok(InstOutcome::Matched(pattern));
                }
                Entry::Fail { .. } => false,
            };
            if pass {
                pc += kind.size();
            } else {
                match self.stack.pop() {
                    Some(r) => pc = r,
                    None => {
                        return Ok(InstOutcome::Failed { kind: FindingKind::MissingPattern, byte_index: pc as u32 })
                    }
                }
            }
        }
    }

    /// Selects every instruction and terminator of a module, in function,
    /// block and instruction order. The first failure ends selection.
    pub fn select_module(&mut self, m: &Module, cov: &mut CoverageState) -> Result<SelectionResult, SelectError> {
        cov.record_probe_edge(probe::PARSE);
        if let Some(v) = verify_module(m).first() {
            cov.record_probe_edge(probe::VERIFY_FAIL);
            let sig = FailureSignature {
                kind: FindingKind::VerifierReject,
                root: format!("{:?}", v.kind),
                types: String::new(),
                byte_index: 0,
                target: self.target.name.clone(),
            };
            return Ok(SelectionResult { matched: Vec::new(), verdict: Verdict::Finding(sig) });
        }
        cov.record_probe_edge(probe::VERIFY_OK);
        let mut matched = Vec::with_capacity(m.inst_count());
        for (fi, f) in m.functions.iter().enumerate() {
            for block in &f.blocks {
                let views = block
                    .insts()
                    .map(|i| view_instruction(self.target, m, fi, i))
                    .chain(std::iter::once(view_terminator(self.target, m, fi, &block.term)));
                for view in views {
                    cov.record_probe_edge(probe::dispatch(view.code));
                    match self.select_instruction(&view, cov)? {
                        InstOutcome::Matched(p) => {
                            cov.record_probe_edge(probe::MATCHED);
                            matched.push(p);
                        }
                        InstOutcome::Failed { kind, byte_index } => {
                            cov.record_probe_edge(probe::FAILED);
                            cov.record_probe_edge(probe::DONE_FINDING);
                            let sig = FailureSignature {
                                kind,
                                root: view.root.to_string(),
                                types: view.type_summary(),
                                byte_index,
                                target: self.target.name.clone(),
                            };
                            return Ok(SelectionResult { matched, verdict: Verdict::Finding(sig) });
                        }
                    }
                }
            }
        }
        cov.record_probe_edge(probe::DONE_OK);
        Ok(SelectionResult { matched, verdict: Verdict::Ok })
    }

    /// Parses then selects. Parse failures are returned as errors after
    /// recording the parse-failure probe.
    pub fn select_text(
        &mut self,
        text: &str,
        cov: &mut CoverageState,
    ) -> Result<Result<SelectionResult, crate::ir::SyntaxError>, SelectError> {
        match parse_module(text) {
            Ok(m) => self.select_module(&m, cov).map(Ok),
            Err(e) => {
                cov.record_probe_edge(probe::PARSE_FAIL);
                Ok(Err(e))
            }
        }
    }
}

/// Convenience wrapper: one selection with a throwaway selector.
pub fn select_module(
    program: &MatcherProgram,
    target: &TargetSpec,
    features: FeatureSet,
    m: &Module,
    cov: &mut CoverageState,
) -> Result<SelectionResult, SelectError> {
    Selector::new(target, program, features).select_module(m, cov)
}
