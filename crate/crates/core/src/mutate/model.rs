//! Declarative operand modeling of the non-memory instructions.
//!
//! Each modeled opcode lists one constraint per argument position. For
//! casts the second position is the destination type; for getelementptr
//! the first is the source element type; `VecOfConstI32` and `AnyConstInt`
//! positions become immediates (a shuffle mask, an aggregate index).

use rand::seq::SliceRandom;
use rand::Rng;

use super::universe::TypeUniverse;
use crate::ir::{FloatPredicate, Imm, IntPredicate, Opcode, Scalar, Type, VECTOR_COUNTS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OperandConstraint {
    AnyIntOrVecInt,
    AnyFPOrVecFP,
    AnyFloatPointOrVectorFloatPoint,
    SameAsFirst,
    AnyVector,
    AnyInt,
    MatchScalarOfFirst,
    MatchLengthOfFirst,
    VecOfConstI32,
    AnyAggregateOrArray,
    AnyConstInt,
    PointerOfFirst,
    AnySized,
    AnyNonBoolIntOrVecInt,
    AnyIntOrVecIntWithLowerPrecision,
    AnyIntOrVecIntWithHigherPrecision,
    AnyNonHalfFPOrVecFP,
    /// fptrunc destination: a float of the first operand's shape with
    /// strictly fewer bits.
    AndFPOrVecFPWHigherPrecision,
    MatchLengthOfFirstWithInt,
    MatchLengthOfFirstWithFP,
    MatchLengthOfFirstWithPtr,
    AnyTypeWithSameBitWidth,
    AnyBoolOrVecBool,
    SameAsSecond,
    AnyType,
    AnyPtrOrVecPtr,
}

fn same_shape(a: Type, b: Type) -> bool {
    match (a, b) {
        (Type::Scalar(_), Type::Scalar(_)) => true,
        (Type::Vector(_, n), Type::Vector(_, m)) => n == m,
        _ => false,
    }
}

fn bits(t: Type) -> Option<u32> {
    t.scalar().map(Scalar::bits)
}

impl OperandConstraint {
    /// Whether `t` is acceptable at this position given the types chosen
    /// for the earlier positions.
    pub fn accepts(self, t: Type, earlier: &[Type]) -> bool {
        use OperandConstraint::*;
        let first = earlier.first().copied();
        let first_is = |f: &dyn Fn(Type) -> bool| first.is_some_and(f);
        match self {
            AnyIntOrVecInt => t.is_int_or_vec_int(),
            AnyFPOrVecFP | AnyFloatPointOrVectorFloatPoint => t.is_fp_or_vec_fp(),
            SameAsFirst => Some(t) == first,
            AnyVector => t.is_vector(),
            AnyInt => t.is_int(),
            MatchScalarOfFirst => first_is(&|f| f.element() == Some(t)),
            MatchLengthOfFirst => first_is(&|f| match f.lanes() {
                Some(n) => t.lanes() == Some(n),
                None => t.is_single_value(),
            }),
            VecOfConstI32 => t.is_vector() && t.scalar() == Some(Scalar::Int(32)),
            AnyAggregateOrArray => t.is_array(),
            AnyConstInt => t.is_int(),
            PointerOfFirst => t == Type::ADDR && first.is_some(),
            AnySized => !t.is_void() && t.is_valid(),
            AnyNonBoolIntOrVecInt => t.is_int_or_vec_int() && t.int_width() != Some(1),
            AnyIntOrVecIntWithLowerPrecision => {
                first_is(&|f| t.is_int_or_vec_int() && same_shape(f, t) && t.int_width() < f.int_width())
            }
            AnyIntOrVecIntWithHigherPrecision => {
                first_is(&|f| t.is_int_or_vec_int() && same_shape(f, t) && t.int_width() > f.int_width())
            }
            AnyNonHalfFPOrVecFP => t.is_fp_or_vec_fp(),
            AndFPOrVecFPWHigherPrecision => first_is(&|f| t.is_fp_or_vec_fp() && same_shape(f, t) && bits(t) < bits(f)),
            MatchLengthOfFirstWithInt => first_is(&|f| t.is_int_or_vec_int() && same_shape(f, t)),
            MatchLengthOfFirstWithFP => first_is(&|f| t.is_fp_or_vec_fp() && same_shape(f, t)),
            MatchLengthOfFirstWithPtr => first_is(&|f| t.is_addr_or_vec_addr() && same_shape(f, t)),
            AnyTypeWithSameBitWidth => {
                first_is(&|f| t.is_single_value() && !t.is_addr_or_vec_addr() && t.bit_width() == f.bit_width())
            }
            AnyBoolOrVecBool => t.is_bool_or_vec_bool(),
            SameAsSecond => earlier.get(1) == Some(&t),
            AnyType => t.is_single_value() && !t.is_addr_or_vec_addr(),
            AnyPtrOrVecPtr => t.is_addr_or_vec_addr(),
        }
    }
}

/// Argument constraints of a modeled opcode, or `None` for opcodes with
/// custom generators (memory, call, phi).
pub fn model(op: Opcode) -> Option<&'static [OperandConstraint]> {
    use Opcode::*;
    use OperandConstraint::*;
    Some(match op {
        FNeg => &[AnyFloatPointOrVectorFloatPoint],
        Add | Sub | Mul | SDiv | UDiv | SRem | URem => &[AnyIntOrVecInt, SameAsFirst],
        FAdd | FSub | FMul | FDiv | FRem => &[AnyFPOrVecFP, SameAsFirst],
        Shl | LShr | AShr | And | Or | Xor => &[AnyIntOrVecInt, SameAsFirst],
        ExtractElement => &[AnyVector, AnyInt],
        InsertElement => &[AnyVector, MatchScalarOfFirst, AnyInt],
        // Both inputs share one type.
        ShuffleVector => &[AnyVector, SameAsFirst, VecOfConstI32],
        ExtractValue => &[AnyAggregateOrArray, AnyConstInt],
        InsertValue => &[AnyAggregateOrArray, MatchScalarOfFirst, AnyConstInt],
        GetElementPtr => &[AnySized, PointerOfFirst, AnyInt],
        Trunc => &[AnyNonBoolIntOrVecInt, AnyIntOrVecIntWithLowerPrecision],
        ZExt | SExt => &[AnyIntOrVecInt, AnyIntOrVecIntWithHigherPrecision],
        FPTrunc => &[AnyNonHalfFPOrVecFP, AndFPOrVecFPWHigherPrecision],
        FPToUI | FPToSI => &[AnyFPOrVecFP, MatchLengthOfFirstWithInt],
        UIToFP | SIToFP => &[AnyIntOrVecInt, MatchLengthOfFirstWithFP],
        PtrToInt => &[AnyPtrOrVecPtr, MatchLengthOfFirstWithInt],
        IntToPtr => &[AnyIntOrVecInt, MatchLengthOfFirstWithPtr],
        BitCast => &[AnyType, AnyTypeWithSameBitWidth],
        ICmp => &[AnyIntOrVecInt, SameAsFirst],
        FCmp => &[AnyFPOrVecFP, SameAsFirst],
        Select => &[AnyBoolOrVecBool, MatchLengthOfFirst, SameAsSecond],
        Alloca | Load | Store | Call | Phi => return None,
    })
}

/// Opcodes the instruction generator draws from.
pub fn generated_opcodes() -> Vec<Opcode> {
    Opcode::ALL.iter().copied().filter(|o| *o != Opcode::Call).collect()
}

/// A fully typed instruction shape, before operand values are chosen.
#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    pub op: Opcode,
    pub operands: Vec<Type>,
    pub result: Option<Type>,
    pub imm: Imm,
}

/// Chooses types for a modeled opcode. `primary` narrows the first
/// position (guidance); it is ignored when it leaves nothing.
pub fn plan<R: Rng>(rng: &mut R, op: Opcode, universe: &TypeUniverse, primary: &dyn Fn(Type) -> bool) -> Option<Plan> {
    use OperandConstraint::*;
    let cons = model(op)?;
    let mut chosen: Vec<Type> = Vec::with_capacity(cons.len());
    let mut imm = Imm::None;
    for (i, c) in cons.iter().enumerate() {
        match c {
            VecOfConstI32 => {
                let n = chosen[0].lanes()? as u32;
                let len = *VECTOR_COUNTS.choose(rng)?;
                imm = Imm::Mask((0..len).map(|_| rng.gen_range(0..2 * n)).collect());
            }
            AnyConstInt => {
                let len = chosen[0].array_len()? as u32;
                imm = Imm::Index(rng.gen_range(0..len));
            }
            _ => {
                let earlier = chosen.as_slice();
                let ok = |t: Type| c.accepts(t, earlier);
                let t = if i == 0 {
                    // The first choice must leave the second position satisfiable.
                    let viable = |t: Type| match cons.get(1) {
                        Some(VecOfConstI32 | AnyConstInt) | None => true,
                        Some(next) => universe.all().any(|u| next.accepts(u, &[t])),
                    };
                    universe
                        .pick(rng, |t| ok(t) && viable(t) && primary(t))
                        .or_else(|| universe.pick(rng, |t| ok(t) && viable(t)))?
                } else {
                    universe.pick(rng, ok)?
                };
                chosen.push(t);
            }
        }
    }
    let result = match op {
        Opcode::FNeg => chosen[0],
        o if o.is_int_binary() || o.is_fp_binary() => chosen[0],
        Opcode::ExtractElement | Opcode::ExtractValue => chosen[0].element()?,
        Opcode::InsertElement | Opcode::InsertValue => chosen[0],
        Opcode::ShuffleVector => {
            let Imm::Mask(m) = &imm else { return None };
            Type::vector(chosen[0].element()?, m.len() as u8)?
        }
        Opcode::GetElementPtr => Type::ADDR,
        o if o.is_cast() => chosen.pop()?,
        Opcode::ICmp | Opcode::FCmp => chosen[0].bool_of_shape()?,
        Opcode::Select => chosen[1],
        _ => return None,
    };
    match op {
        Opcode::GetElementPtr => imm = Imm::Type(chosen.remove(0)),
        Opcode::ICmp => imm = Imm::IntPred(*IntPredicate::ALL.choose(rng)?),
        Opcode::FCmp => imm = Imm::FloatPred(*FloatPredicate::ALL.choose(rng)?),
        _ => {}
    }
    Some(Plan { op, operands: chosen, result: Some(result), imm })
}
