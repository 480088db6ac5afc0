//! Values, constants, instructions and terminators.

use std::fmt;

use super::types::Type;

/// Index into a function's value table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ValueId(pub u32);

/// Index into a function's block list. `BlockId(0)` is the entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockId(pub u32);

impl BlockId {
    pub const ENTRY: BlockId = BlockId(0);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl ValueId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ConstVal {
    /// Raw bits, masked to the integer width.
    Int(u128),
    /// Raw IEEE bits of the float's own width.
    Float(u64),
    Undef,
    Poison,
    /// `zeroinitializer`, or `null` for addresses.
    Zero,
    Vector(Vec<ConstVal>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Const {
    pub ty: Type,
    pub val: ConstVal,
}

impl Const {
    pub fn int(ty: Type, bits: u128) -> Const {
        let w = ty.int_width().unwrap_or(128);
        Const { ty, val: ConstVal::Int(mask(bits, w)) }
    }

    pub fn undef(ty: Type) -> Const {
        Const { ty, val: ConstVal::Undef }
    }

    pub fn poison(ty: Type) -> Const {
        Const { ty, val: ConstVal::Poison }
    }

    pub fn zero(ty: Type) -> Const {
        Const { ty, val: ConstVal::Zero }
    }

    /// Integer payload, if this is a plain integer constant.
    pub fn as_int(&self) -> Option<u128> {
        match self.val {
            ConstVal::Int(v) => Some(v),
            ConstVal::Zero if self.ty.is_int() => Some(0),
            _ => None,
        }
    }

    /// Signed interpretation of an integer constant.
    pub fn as_signed(&self) -> Option<i128> {
        let w = self.ty.int_width()?;
        self.as_int().map(|v| sign_extend(v, w))
    }
}

pub fn mask(bits: u128, width: u16) -> u128 {
    if width >= 128 {
        bits
    } else {
        bits & ((1u128 << width) - 1)
    }
}

pub fn sign_extend(bits: u128, width: u16) -> i128 {
    if width >= 128 {
        return bits as i128;
    }
    let shift = 128 - width as u32;
    ((bits << shift) as i128) >> shift
}

/// An operand. Instruction results and arguments are function-scoped;
/// globals index the module's global list and evaluate to an address.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Value {
    Inst(ValueId),
    Arg(u32),
    Global(u32),
    Const(Const),
}

impl Value {
    pub fn is_const(&self) -> bool {
        matches!(self, Value::Const(_))
    }

    pub fn as_inst(&self) -> Option<ValueId> {
        match self {
            Value::Inst(id) => Some(*id),
            _ => None,
        }
    }
}

macro_rules! opcodes {
    ($($variant:ident => $name:literal,)*) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum Opcode { $($variant,)* }

        impl Opcode {
            pub const ALL: &'static [Opcode] = &[$(Opcode::$variant,)*];

            pub fn name(self) -> &'static str {
                match self { $(Opcode::$variant => $name,)* }
            }

            pub fn from_name(s: &str) -> Option<Opcode> {
                match s { $($name => Some(Opcode::$variant),)* _ => None }
            }
        }
    };
}

opcodes! {
    FNeg => "fneg",
    Add => "add",
    Sub => "sub",
    Mul => "mul",
    SDiv => "sdiv",
    UDiv => "udiv",
    SRem => "srem",
    URem => "urem",
    FAdd => "fadd",
    FSub => "fsub",
    FMul => "fmul",
    FDiv => "fdiv",
    FRem => "frem",
    Shl => "shl",
    LShr => "lshr",
    AShr => "ashr",
    And => "and",
    Or => "or",
    Xor => "xor",
    ExtractElement => "extractelement",
    InsertElement => "insertelement",
    ShuffleVector => "shufflevector",
    ExtractValue => "extractvalue",
    InsertValue => "insertvalue",
    GetElementPtr => "getelementptr",
    Trunc => "trunc",
    ZExt => "zext",
    SExt => "sext",
    FPTrunc => "fptrunc",
    FPToUI => "fptoui",
    FPToSI => "fptosi",
    UIToFP => "uitofp",
    SIToFP => "sitofp",
    PtrToInt => "ptrtoint",
    IntToPtr => "inttoptr",
    BitCast => "bitcast",
    ICmp => "icmp",
    FCmp => "fcmp",
    Select => "select",
    Alloca => "alloca",
    Load => "load",
    Store => "store",
    Call => "call",
    Phi => "phi",
}

impl Opcode {
    pub fn is_int_binary(self) -> bool {
        use Opcode::*;
        matches!(self, Add | Sub | Mul | SDiv | UDiv | SRem | URem | Shl | LShr | AShr | And | Or | Xor)
    }

    pub fn is_fp_binary(self) -> bool {
        use Opcode::*;
        matches!(self, FAdd | FSub | FMul | FDiv | FRem)
    }

    pub fn is_cast(self) -> bool {
        use Opcode::*;
        matches!(
            self,
            Trunc | ZExt | SExt | FPTrunc | FPToUI | FPToSI | UIToFP | SIToFP | PtrToInt | IntToPtr | BitCast
        )
    }

    /// Number of value operands; `None` for variadic opcodes (call, phi).
    pub fn arity(self) -> Option<usize> {
        use Opcode::*;
        match self {
            Call | Phi => None,
            Alloca => Some(0),
            FNeg | ExtractValue | Load => Some(1),
            o if o.is_cast() => Some(1),
            InsertValue | ExtractElement | GetElementPtr | Store | ICmp | FCmp | ShuffleVector => Some(2),
            InsertElement | Select => Some(3),
            _ => Some(2),
        }
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

macro_rules! predicates {
    ($ty:ident { $($variant:ident => $name:literal,)* }) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
        pub enum $ty { $($variant,)* }

        impl $ty {
            pub const ALL: &'static [$ty] = &[$($ty::$variant,)*];

            pub fn name(self) -> &'static str {
                match self { $($ty::$variant => $name,)* }
            }

            pub fn from_name(s: &str) -> Option<$ty> {
                match s { $($name => Some($ty::$variant),)* _ => None }
            }
        }
    };
}

predicates!(IntPredicate {
    Eq => "eq",
    Ne => "ne",
    Ugt => "ugt",
    Uge => "uge",
    Ult => "ult",
    Ule => "ule",
    Sgt => "sgt",
    Sge => "sge",
    Slt => "slt",
    Sle => "sle",
});

predicates!(FloatPredicate {
    False => "false",
    Oeq => "oeq",
    Ogt => "ogt",
    Oge => "oge",
    Olt => "olt",
    Ole => "ole",
    One => "one",
    Ord => "ord",
    Ueq => "ueq",
    Ugt => "ugt",
    Uge => "uge",
    Ult => "ult",
    Ule => "ule",
    Une => "une",
    Uno => "uno",
    True => "true",
});

/// Opcode-specific immediates.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Imm {
    None,
    IntPred(IntPredicate),
    FloatPred(FloatPredicate),
    /// shufflevector lane selectors.
    Mask(Vec<u32>),
    /// extractvalue / insertvalue index.
    Index(u32),
    /// Allocated type for alloca, element type for getelementptr.
    Type(Type),
    Callee(String),
    /// Incoming blocks of a phi, parallel to its operands.
    Incoming(Vec<BlockId>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Inst {
    pub op: Opcode,
    pub result: Option<ValueId>,
    pub operands: Vec<Value>,
    pub imm: Imm,
}

impl Inst {
    pub fn new(op: Opcode, result: Option<ValueId>, operands: Vec<Value>, imm: Imm) -> Inst {
        Inst { op, result, operands, imm }
    }

    pub fn callee(&self) -> Option<&str> {
        match &self.imm {
            Imm::Callee(c) => Some(c),
            _ => None,
        }
    }

    pub fn incoming(&self) -> &[BlockId] {
        match &self.imm {
            Imm::Incoming(b) => b,
            _ => &[],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Terminator {
    Ret(Option<Value>),
    Br(BlockId),
    CondBr { cond: Value, then_to: BlockId, else_to: BlockId },
    Switch { value: Value, default: BlockId, cases: Vec<(u128, BlockId)> },
}

impl Terminator {
    /// Distinct successor blocks, in first-mention order.
    pub fn successors(&self) -> Vec<BlockId> {
        let mut out = Vec::new();
        let mut push = |b: BlockId| {
            if !out.contains(&b) {
                out.push(b);
            }
        };
        match self {
            Terminator::Ret(_) => {}
            Terminator::Br(b) => push(*b),
            Terminator::CondBr { then_to, else_to, .. } => {
                push(*then_to);
                push(*else_to);
            }
            Terminator::Switch { default, cases, .. } => {
                push(*default);
                for (_, b) in cases {
                    push(*b);
                }
            }
        }
        out
    }

    pub fn operands(&self) -> Vec<&Value> {
        match self {
            Terminator::Ret(v) => v.iter().collect(),
            Terminator::Br(_) => vec![],
            Terminator::CondBr { cond, .. } => vec![cond],
            Terminator::Switch { value, .. } => vec![value],
        }
    }

    pub fn operands_mut(&mut self) -> Vec<&mut Value> {
        match self {
            Terminator::Ret(v) => v.iter_mut().collect(),
            Terminator::Br(_) => vec![],
            Terminator::CondBr { cond, .. } => vec![cond],
            Terminator::Switch { value, .. } => vec![value],
        }
    }

    pub fn targets_mut(&mut self) -> Vec<&mut BlockId> {
        match self {
            Terminator::Ret(_) => vec![],
            Terminator::Br(b) => vec![b],
            Terminator::CondBr { then_to, else_to, .. } => vec![then_to, else_to],
            Terminator::Switch { default, cases, .. } => {
                let mut v = vec![default];
                v.extend(cases.iter_mut().map(|(_, b)| b));
                v
            }
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Terminator::Ret(_) => "ret",
            Terminator::Br(_) => "br",
            Terminator::CondBr { .. } => "condbr",
            Terminator::Switch { .. } => "switch",
        }
    }
}
