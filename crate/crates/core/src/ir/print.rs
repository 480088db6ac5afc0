//! Textual serialization.

use std::fmt::Write;

use super::inst::{Const, ConstVal, Imm, Inst, Opcode, Terminator, Value};
use super::module::{Function, Module};
use super::types::{Scalar, Type};

/// Renders a module. Output is deterministic; an empty module prints as
/// the empty string.
pub fn print_module(m: &Module) -> String {
    let mut out = String::new();
    for g in &m.globals {
        write!(out, "@{} = global {}", g.name, g.ty).unwrap();
        if let Some(c) = &g.init {
            out.push(' ');
            write_const_payload(&mut out, c);
        }
        out.push('\n');
    }
    for d in &m.decls {
        writeln!(out, "{d}").unwrap();
    }
    for (fi, f) in m.functions.iter().enumerate() {
        if fi > 0 || !m.globals.is_empty() || !m.decls.is_empty() {
            out.push('\n');
        }
        print_function(&mut out, m, fi, f);
    }
    out
}

fn print_function(out: &mut String, m: &Module, fi: usize, f: &Function) {
    write!(out, "define {} @{}(", f.ret, f.name).unwrap();
    for (i, p) in f.params.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write!(out, "{} %{}", p.ty, p.name).unwrap();
    }
    out.push_str(") {\n");
    let p = Printer { m, fi, f };
    for block in &f.blocks {
        writeln!(out, "{}:", block.label).unwrap();
        for inst in block.insts() {
            out.push_str("  ");
            p.inst(out, inst);
            out.push('\n');
        }
        out.push_str("  ");
        p.term(out, &block.term);
        out.push('\n');
    }
    out.push_str("}\n");
}

struct Printer<'a> {
    m: &'a Module,
    fi: usize,
    f: &'a Function,
}

impl Printer<'_> {
    fn ty(&self, v: &Value) -> Type {
        self.m.type_of(self.fi, v).unwrap_or(Type::Void)
    }

    fn result_ty(&self, inst: &Inst) -> Type {
        inst.result.and_then(|r| self.f.value_ty(r)).unwrap_or(Type::Void)
    }

    fn value(&self, out: &mut String, v: &Value) {
        match v {
            Value::Inst(id) => match self.f.values.get(id.index()) {
                Some(info) => write!(out, "%{}", info.name).unwrap(),
                None => write!(out, "%dangling{}", id.0).unwrap(),
            },
            Value::Arg(i) => match self.f.params.get(*i as usize) {
                Some(p) => write!(out, "%{}", p.name).unwrap(),
                None => write!(out, "%arg{i}").unwrap(),
            },
            Value::Global(g) => match self.m.globals.get(*g as usize) {
                Some(gl) => write!(out, "@{}", gl.name).unwrap(),
                None => write!(out, "@global{g}").unwrap(),
            },
            Value::Const(c) => write_const_payload(out, c),
        }
    }

    fn typed(&self, out: &mut String, v: &Value) {
        write!(out, "{} ", self.ty(v)).unwrap();
        self.value(out, v);
    }

    fn label(&self, out: &mut String, b: super::inst::BlockId) {
        match self.f.blocks.get(b.index()) {
            Some(block) => write!(out, "label %{}", block.label).unwrap(),
            None => write!(out, "label %missing{}", b.0).unwrap(),
        }
    }

    fn inst(&self, out: &mut String, inst: &Inst) {
        if let Some(r) = inst.result {
            self.value(out, &Value::Inst(r));
            out.push_str(" = ");
        }
        let ops = &inst.operands;
        let op = |i: usize| ops.get(i).cloned().unwrap_or(Value::Const(Const::undef(Type::Void)));
        out.push_str(inst.op.name());
        out.push(' ');
        match inst.op {
            o if o.is_int_binary() || o.is_fp_binary() => {
                write!(out, "{} ", self.result_ty(inst)).unwrap();
                self.value(out, &op(0));
                out.push_str(", ");
                self.value(out, &op(1));
            }
            Opcode::FNeg => self.typed(out, &op(0)),
            Opcode::ICmp | Opcode::FCmp => {
                let pred = match &inst.imm {
                    Imm::IntPred(p) => p.name(),
                    Imm::FloatPred(p) => p.name(),
                    _ => "?",
                };
                write!(out, "{pred} ").unwrap();
                self.typed(out, &op(0));
                out.push_str(", ");
                self.value(out, &op(1));
            }
            Opcode::Select => {
                self.typed(out, &op(0));
                out.push_str(", ");
                self.typed(out, &op(1));
                out.push_str(", ");
                self.typed(out, &op(2));
            }
            Opcode::ExtractElement => {
                self.typed(out, &op(0));
                out.push_str(", ");
                self.typed(out, &op(1));
            }
            Opcode::InsertElement => {
                self.typed(out, &op(0));
                out.push_str(", ");
                self.typed(out, &op(1));
                out.push_str(", ");
                self.typed(out, &op(2));
            }
            Opcode::ShuffleVector => {
                self.typed(out, &op(0));
                out.push_str(", ");
                self.typed(out, &op(1));
                out.push_str(", ");
                let mask = match &inst.imm {
                    Imm::Mask(m) => m.as_slice(),
                    _ => &[],
                };
                write!(out, "<{} x i32> <", mask.len()).unwrap();
                for (i, lane) in mask.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    write!(out, "i32 {lane}").unwrap();
                }
                out.push('>');
            }
            Opcode::ExtractValue => {
                self.typed(out, &op(0));
                write!(out, ", {}", index_imm(inst)).unwrap();
            }
            Opcode::InsertValue => {
                self.typed(out, &op(0));
                out.push_str(", ");
                self.typed(out, &op(1));
                write!(out, ", {}", index_imm(inst)).unwrap();
            }
            Opcode::GetElementPtr => {
                write!(out, "{}, ", type_imm(inst)).unwrap();
                self.typed(out, &op(0));
                out.push_str(", ");
                self.typed(out, &op(1));
            }
            o if o.is_cast() => {
                self.typed(out, &op(0));
                write!(out, " to {}", self.result_ty(inst)).unwrap();
            }
            Opcode::Alloca => write!(out, "{}", type_imm(inst)).unwrap(),
            Opcode::Load => {
                write!(out, "{}, ", self.result_ty(inst)).unwrap();
                self.typed(out, &op(0));
            }
            Opcode::Store => {
                self.typed(out, &op(0));
                out.push_str(", ");
                self.typed(out, &op(1));
            }
            Opcode::Call => {
                let callee = inst.callee().unwrap_or("?");
                let ret = if inst.result.is_some() { self.result_ty(inst) } else { Type::Void };
                write!(out, "{ret} @{callee}(").unwrap();
                for (i, a) in ops.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    self.typed(out, a);
                }
                out.push(')');
            }
            Opcode::Phi => {
                write!(out, "{}", self.result_ty(inst)).unwrap();
                for (i, (v, b)) in ops.iter().zip(inst.incoming()).enumerate() {
                    out.push_str(if i > 0 { ", [ " } else { " [ " });
                    self.value(out, v);
                    match self.f.blocks.get(b.index()) {
                        Some(block) => write!(out, ", %{} ]", block.label).unwrap(),
                        None => write!(out, ", %missing{} ]", b.0).unwrap(),
                    }
                }
            }
            _ => unreachable!("all opcodes handled"),
        }
    }

    fn term(&self, out: &mut String, t: &Terminator) {
        match t {
            Terminator::Ret(None) => out.push_str("ret void"),
            Terminator::Ret(Some(v)) => {
                out.push_str("ret ");
                self.typed(out, v);
            }
            Terminator::Br(b) => {
                out.push_str("br ");
                self.label(out, *b);
            }
            Terminator::CondBr { cond, then_to, else_to } => {
                out.push_str("br ");
                self.typed(out, cond);
                out.push_str(", ");
                self.label(out, *then_to);
                out.push_str(", ");
                self.label(out, *else_to);
            }
            Terminator::Switch { value, default, cases } => {
                out.push_str("switch ");
                self.typed(out, value);
                out.push_str(", ");
                self.label(out, *default);
                out.push_str(" [");
                let ty = self.ty(value);
                for (c, b) in cases {
                    write!(out, " {ty} {c}, ").unwrap();
                    self.label(out, *b);
                }
                out.push_str(" ]");
            }
        }
    }
}

fn index_imm(inst: &Inst) -> u32 {
    match inst.imm {
        Imm::Index(i) => i,
        _ => 0,
    }
}

fn type_imm(inst: &Inst) -> Type {
    match inst.imm {
        Imm::Type(t) => t,
        _ => Type::Void,
    }
}

/// Writes a constant without its type prefix.
pub fn write_const_payload(out: &mut String, c: &Const) {
    write_payload(out, c.ty, &c.val);
}

fn write_payload(out: &mut String, ty: Type, val: &ConstVal) {
    match val {
        ConstVal::Int(v) => write!(out, "{v}").unwrap(),
        ConstVal::Float(bits) => match ty.scalar() {
            Some(Scalar::F32) => write!(out, "0x{:08X}", *bits as u32).unwrap(),
            _ => write!(out, "0x{bits:016X}").unwrap(),
        },
        ConstVal::Undef => out.push_str("undef"),
        ConstVal::Poison => out.push_str("poison"),
        ConstVal::Zero if ty == Type::ADDR => out.push_str("null"),
        ConstVal::Zero => out.push_str("zeroinitializer"),
        ConstVal::Vector(lanes) => {
            let lane = ty.element().unwrap_or(Type::Void);
            out.push('<');
            for (i, l) in lanes.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write!(out, "{lane} ").unwrap();
                write_payload(out, lane, l);
            }
            out.push('>');
        }
    }
}
