//! A miniature typed SSA IR: types, values, instructions, blocks,
//! functions and modules, with a textual form and dominance analysis.

mod dom;
mod inst;
mod module;
mod parse;
mod print;
mod types;

pub use dom::DomTree;
pub use inst::{
    mask, sign_extend, BlockId, Const, ConstVal, FloatPredicate, Imm, Inst, IntPredicate, Opcode, Terminator, Value,
    ValueId,
};
pub use module::{Block, Decl, DefSite, Function, Global, IrError, Module, Param, Signature, ValueInfo};
pub use parse::{parse_module, SyntaxError};
pub use print::{print_module, write_const_payload};
pub use types::{Elem, Scalar, Type, ADDR_BITS, MAX_ARRAY_LEN, MAX_INT_WIDTH, VECTOR_COUNTS};

/// Dominator tree of one function.
pub fn compute_dominators(f: &Function) -> DomTree {
    DomTree::compute(f)
}
