//! Parser for the textual IR.
//!
//! The grammar is token based, so line breaks are insignificant. Local
//! names may be referenced before their definition (blocks need not appear
//! in dominance order); every referenced name must be defined somewhere in
//! the function.

use std::collections::HashMap;

use thiserror::Error;

use super::inst::{
    BlockId, Const, ConstVal, FloatPredicate, Imm, Inst, IntPredicate, Opcode, Terminator, Value, ValueId,
};
use super::module::{Block, Decl, Function, Global, Module, Param, ValueInfo};
use super::types::{Scalar, Type, MAX_INT_WIDTH};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{line}:{col}: {message}")]
pub struct SyntaxError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Word(String),
    Local(String),
    GlobalName(String),
    Int(i128),
    Hex(u128),
    Punct(char),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '$' | '-')
}

fn lex(src: &str) -> Result<Vec<Token>, SyntaxError> {
    let chars: Vec<char> = src.chars().collect();
    let mut toks = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, col, message: String| SyntaxError { line, col, message };
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == ';' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let (tl, tc) = (line, col);
        let start = i;
        let tok = match c {
            '%' | '@' => {
                i += 1;
                while i < chars.len() && is_name_char(chars[i]) {
                    i += 1;
                }
                let name: String = chars[start + 1..i].iter().collect();
                if name.is_empty() {
                    return Err(err(tl, tc, format!("expected a name after '{c}'")));
                }
                if c == '%' {
                    Tok::Local(name)
                } else {
                    Tok::GlobalName(name)
                }
            }
            '0' if chars.get(i + 1) == Some(&'x') => {
                i += 2;
                while i < chars.len() && chars[i].is_ascii_hexdigit() {
                    i += 1;
                }
                let digits: String = chars[start + 2..i].iter().collect();
                let v = u128::from_str_radix(&digits, 16)
                    .map_err(|_| err(tl, tc, format!("bad hex literal '0x{digits}'")))?;
                Tok::Hex(v)
            }
            '-' | '0'..='9' => {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                if text == "-" {
                    return Err(err(tl, tc, "stray '-'".into()));
                }
                let v: i128 = if let Some(stripped) = text.strip_prefix('-') {
                    stripped
                        .parse::<u128>()
                        .ok()
                        .filter(|v| *v <= 1u128 << 127)
                        .map(|v| (v as i128).wrapping_neg())
                        .ok_or_else(|| err(tl, tc, format!("integer literal '{text}' out of range")))?
                } else {
                    match text.parse::<i128>() {
                        Ok(v) => v,
                        Err(_) => {
                            let u = text
                                .parse::<u128>()
                                .map_err(|_| err(tl, tc, format!("integer literal '{text}' out of range")))?;
                            toks.push(Token { tok: Tok::Hex(u), line: tl, col: tc });
                            col += i - start;
                            continue;
                        }
                    }
                };
                Tok::Int(v)
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                while i < chars.len() && is_name_char(chars[i]) {
                    i += 1;
                }
                Tok::Word(chars[start..i].iter().collect())
            }
            '=' | ',' | '(' | ')' | '{' | '}' | '[' | ']' | '<' | '>' | ':' | '*' => {
                i += 1;
                Tok::Punct(c)
            }
            other => return Err(err(tl, tc, format!("unexpected character '{other}'"))),
        };
        col += i - start;
        toks.push(Token { tok, line: tl, col: tc });
    }
    toks.push(Token { tok: Tok::Eof, line, col });
    Ok(toks)
}

/// Operand as written, before local names are resolved.
#[derive(Debug, Clone)]
enum RawValue {
    Local(String, usize),
    Global(String, usize),
    Const(Const),
}

struct RawInst {
    op: Opcode,
    result: Option<(String, Type, usize)>,
    operands: Vec<RawValue>,
    imm: RawImm,
}

enum RawImm {
    Plain(Imm),
    Incoming(Vec<(String, usize)>),
}

enum RawTerm {
    Ret(Option<RawValue>),
    Br(String, usize),
    CondBr(RawValue, (String, usize), (String, usize)),
    Switch(RawValue, (String, usize), Vec<(u128, String, usize)>),
}

struct RawBlock {
    label: String,
    at: usize,
    insts: Vec<RawInst>,
    term: RawTerm,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, SyntaxError>;

/// Parses a module from its textual form.
pub fn parse_module(src: &str) -> Result<Module, SyntaxError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0 };
    let mut m = Module::default();
    let mut raw_funcs = Vec::new();
    loop {
        match p.peek().clone() {
            Tok::Eof => break,
            Tok::GlobalName(name) => {
                p.bump();
                p.expect_punct('=')?;
                p.expect_word("global")?;
                let ty = p.parse_type()?;
                if ty.is_void() {
                    return Err(p.err_prev("global of void type"));
                }
                let init = if p.at_const_start() { Some(p.parse_const(ty)?) } else { None };
                m.globals.push(Global { name, ty, init });
            }
            Tok::Word(w) if w == "declare" => {
                p.bump();
                let ret = p.parse_type()?;
                let name = p.expect_global_name()?;
                p.expect_punct('(')?;
                let mut params = Vec::new();
                if !p.eat_punct(')') {
                    loop {
                        params.push(p.parse_first_class()?);
                        if p.eat_punct(')') {
                            break;
                        }
                        p.expect_punct(',')?;
                    }
                }
                m.decls.push(Decl { name, params, ret });
            }
            Tok::Word(w) if w == "define" => {
                p.bump();
                raw_funcs.push(p.parse_function()?);
            }
            _ => return Err(p.err_here("expected 'define', 'declare' or a global")),
        }
    }
    for (f, blocks) in raw_funcs {
        let f = resolve_function(&p, &m, f, blocks)?;
        m.functions.push(f);
    }
    Ok(m)
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)].tok
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn err_at(&self, idx: usize, msg: impl Into<String>) -> SyntaxError {
        let t = &self.toks[idx.min(self.toks.len() - 1)];
        SyntaxError { line: t.line, col: t.col, message: msg.into() }
    }

    fn err_here(&self, msg: impl Into<String>) -> SyntaxError {
        let found = describe(self.peek());
        self.err_at(self.pos, format!("{}, found {found}", msg.into()))
    }

    fn err_prev(&self, msg: impl Into<String>) -> SyntaxError {
        self.err_at(self.pos.saturating_sub(1), msg)
    }

    fn eat_punct(&mut self, c: char) -> bool {
        if *self.peek() == Tok::Punct(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, c: char) -> PResult<()> {
        if self.eat_punct(c) {
            Ok(())
        } else {
            Err(self.err_here(format!("expected '{c}'")))
        }
    }

    fn eat_word(&mut self, w: &str) -> bool {
        if matches!(self.peek(), Tok::Word(x) if x == w) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_word(&mut self, w: &str) -> PResult<()> {
        if self.eat_word(w) {
            Ok(())
        } else {
            Err(self.err_here(format!("expected '{w}'")))
        }
    }

    fn expect_any_word(&mut self, what: &str) -> PResult<String> {
        match self.peek().clone() {
            Tok::Word(w) => {
                self.bump();
                Ok(w)
            }
            _ => Err(self.err_here(format!("expected {what}"))),
        }
    }

    fn expect_global_name(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::GlobalName(n) => {
                self.bump();
                Ok(n)
            }
            _ => Err(self.err_here("expected '@name'")),
        }
    }

    fn expect_local(&mut self) -> PResult<(String, usize)> {
        match self.peek().clone() {
            Tok::Local(n) => {
                let at = self.pos;
                self.bump();
                Ok((n, at))
            }
            _ => Err(self.err_here("expected '%name'")),
        }
    }

    fn expect_u32(&mut self) -> PResult<u32> {
        match *self.peek() {
            Tok::Int(v) if (0..=u32::MAX as i128).contains(&v) => {
                self.bump();
                Ok(v as u32)
            }
            _ => Err(self.err_here("expected an unsigned integer")),
        }
    }

    fn parse_scalar_word(&self, w: &str) -> Option<Scalar> {
        match w {
            "f32" => Some(Scalar::F32),
            "f64" => Some(Scalar::F64),
            "ptr" => Some(Scalar::Addr),
            _ => {
                let width: u16 = w.strip_prefix('i')?.parse().ok()?;
                Some(Scalar::Int(width))
            }
        }
    }

    fn parse_type(&mut self) -> PResult<Type> {
        let start = self.pos;
        match self.peek().clone() {
            Tok::Word(w) if w == "void" => {
                self.bump();
                Ok(Type::Void)
            }
            Tok::Word(w) => {
                let s = self.parse_scalar_word(&w).ok_or_else(|| self.err_here("expected a type"))?;
                if let Scalar::Int(width) = s {
                    if !(1..=MAX_INT_WIDTH).contains(&width) {
                        return Err(self.err_at(start, format!("integer width {width} outside 1..={MAX_INT_WIDTH}")));
                    }
                }
                self.bump();
                Ok(Type::Scalar(s))
            }
            Tok::Punct(open @ ('<' | '[')) => {
                self.bump();
                let count = self.expect_u32()?;
                self.expect_word("x")?;
                let inner = self.parse_type()?;
                self.expect_punct(if open == '<' { '>' } else { ']' })?;
                let count = u8::try_from(count).ok();
                let built =
                    count.and_then(|n| if open == '<' { Type::vector(inner, n) } else { Type::array(inner, n) });
                built.ok_or_else(|| self.err_at(start, "illegal vector or array type"))
            }
            _ => Err(self.err_here("expected a type")),
        }
    }

    fn parse_first_class(&mut self) -> PResult<Type> {
        let ty = self.parse_type()?;
        if ty.is_void() {
            return Err(self.err_prev("void is not a value type"));
        }
        Ok(ty)
    }

    fn at_const_start(&self) -> bool {
        match self.peek() {
            Tok::Int(_) | Tok::Hex(_) | Tok::Punct('<') => true,
            Tok::Word(w) => {
                matches!(w.as_str(), "undef" | "poison" | "zeroinitializer" | "null" | "true" | "false")
            }
            _ => false,
        }
    }

    fn parse_const(&mut self, ty: Type) -> PResult<Const> {
        let start = self.pos;
        let val = match self.peek().clone() {
            Tok::Word(w) => {
                self.bump();
                match w.as_str() {
                    "undef" => ConstVal::Undef,
                    "poison" => ConstVal::Poison,
                    "zeroinitializer" => ConstVal::Zero,
                    "null" if ty == Type::ADDR => ConstVal::Zero,
                    "true" if ty == Type::I1 => ConstVal::Int(1),
                    "false" if ty == Type::I1 => ConstVal::Int(0),
                    _ => return Err(self.err_at(start, format!("'{w}' is not a {ty} constant"))),
                }
            }
            Tok::Int(v) => {
                self.bump();
                let w = ty
                    .int_width()
                    .filter(|_| ty.is_int())
                    .ok_or_else(|| self.err_at(start, format!("integer literal for type {ty}")))?;
                ConstVal::Int(super::inst::mask(v as u128, w))
            }
            Tok::Hex(v) => {
                self.bump();
                match ty {
                    Type::Scalar(Scalar::F32) if v <= u32::MAX as u128 => ConstVal::Float(v as u64),
                    Type::Scalar(Scalar::F64) if v <= u64::MAX as u128 => ConstVal::Float(v as u64),
                    Type::Scalar(Scalar::Int(w)) => ConstVal::Int(super::inst::mask(v, w)),
                    _ => return Err(self.err_at(start, format!("hex literal for type {ty}"))),
                }
            }
            Tok::Punct('<') => {
                self.bump();
                let (lane, count) = match ty {
                    Type::Vector(s, n) => (Type::Scalar(s), n),
                    _ => return Err(self.err_at(start, format!("vector literal for type {ty}"))),
                };
                let mut lanes = Vec::new();
                loop {
                    let lt = self.parse_type()?;
                    if lt != lane {
                        return Err(self.err_prev(format!("lane type {lt} does not match {lane}")));
                    }
                    lanes.push(self.parse_const(lane)?.val);
                    if self.eat_punct('>') {
                        break;
                    }
                    self.expect_punct(',')?;
                }
                if lanes.len() != count as usize {
                    return Err(
                        self.err_at(start, format!("vector literal has {} lanes, type has {count}", lanes.len()))
                    );
                }
                ConstVal::Vector(lanes)
            }
            _ => return Err(self.err_here("expected a constant")),
        };
        Ok(Const { ty, val })
    }

    fn parse_value(&mut self, ty: Type) -> PResult<RawValue> {
        match self.peek().clone() {
            Tok::Local(n) => {
                let at = self.pos;
                self.bump();
                Ok(RawValue::Local(n, at))
            }
            Tok::GlobalName(n) => {
                let at = self.pos;
                self.bump();
                Ok(RawValue::Global(n, at))
            }
            _ if self.at_const_start() => Ok(RawValue::Const(self.parse_const(ty)?)),
            _ => Err(self.err_here("expected a value")),
        }
    }

    fn parse_typed_value(&mut self) -> PResult<(Type, RawValue)> {
        let ty = self.parse_first_class()?;
        let v = self.parse_value(ty)?;
        Ok((ty, v))
    }

    fn parse_label_ref(&mut self) -> PResult<(String, usize)> {
        self.expect_word("label")?;
        self.expect_local()
    }

    fn parse_function(&mut self) -> PResult<(Function, Vec<RawBlock>)> {
        let ret = self.parse_type()?;
        let name = self.expect_global_name()?;
        self.expect_punct('(')?;
        let mut params = Vec::new();
        if !self.eat_punct(')') {
            loop {
                let ty = self.parse_first_class()?;
                let (pname, _) = self.expect_local()?;
                params.push(Param { name: pname, ty });
                if self.eat_punct(')') {
                    break;
                }
                self.expect_punct(',')?;
            }
        }
        self.expect_punct('{')?;
        let mut blocks = Vec::new();
        while !self.eat_punct('}') {
            blocks.push(self.parse_block()?);
        }
        if blocks.is_empty() {
            return Err(self.err_prev(format!("function @{name} has no blocks")));
        }
        Ok((Function::new(name, params, ret), blocks))
    }

    fn parse_block(&mut self) -> PResult<RawBlock> {
        let at = self.pos;
        let label = match (self.peek().clone(), self.peek_at(1).clone()) {
            (Tok::Word(w), Tok::Punct(':')) => w,
            _ => return Err(self.err_here("expected a block label")),
        };
        self.bump();
        self.bump();
        let mut insts = Vec::new();
        loop {
            if let Some(term) = self.try_parse_terminator()? {
                return Ok(RawBlock { label, at, insts, term });
            }
            insts.push(self.parse_inst()?);
        }
    }

    fn try_parse_terminator(&mut self) -> PResult<Option<RawTerm>> {
        let w = match self.peek() {
            Tok::Word(w) => w.clone(),
            _ => return Ok(None),
        };
        let term = match w.as_str() {
            "ret" => {
                self.bump();
                let ty = self.parse_type()?;
                if ty.is_void() {
                    RawTerm::Ret(None)
                } else {
                    RawTerm::Ret(Some(self.parse_value(ty)?))
                }
            }
            "br" => {
                self.bump();
                if matches!(self.peek(), Tok::Word(w) if w == "label") {
                    let (l, at) = self.parse_label_ref()?;
                    RawTerm::Br(l, at)
                } else {
                    let (_, cond) = self.parse_typed_value()?;
                    self.expect_punct(',')?;
                    let t = self.parse_label_ref()?;
                    self.expect_punct(',')?;
                    let e = self.parse_label_ref()?;
                    RawTerm::CondBr(cond, t, e)
                }
            }
            "switch" => {
                self.bump();
                let (ty, v) = self.parse_typed_value()?;
                self.expect_punct(',')?;
                let default = self.parse_label_ref()?;
                self.expect_punct('[')?;
                let mut cases = Vec::new();
                while !self.eat_punct(']') {
                    let cty = self.parse_first_class()?;
                    if cty != ty || !ty.is_int() {
                        return Err(self.err_prev("switch case type must match an integer scrutinee"));
                    }
                    let c = self.parse_const(cty)?;
                    let bits = c.as_int().ok_or_else(|| self.err_prev("switch case must be an integer"))?;
                    self.expect_punct(',')?;
                    let (l, at) = self.parse_label_ref()?;
                    cases.push((bits, l, at));
                }
                RawTerm::Switch(v, default, cases)
            }
            _ => return Ok(None),
        };
        Ok(Some(term))
    }

    fn parse_inst(&mut self) -> PResult<RawInst> {
        let mut result_name = None;
        if let (Tok::Local(n), Tok::Punct('=')) = (self.peek().clone(), self.peek_at(1).clone()) {
            result_name = Some((n, self.pos));
            self.bump();
            self.bump();
        }
        let op_at = self.pos;
        let word = self.expect_any_word("an instruction")?;
        let op = Opcode::from_name(&word)
            .filter(|o| *o != Opcode::Phi || result_name.is_some())
            .ok_or_else(|| self.err_at(op_at, format!("unknown instruction '{word}'")))?;
        let mut operands = Vec::new();
        let mut imm = RawImm::Plain(Imm::None);
        let result_ty: Type = match op {
            o if o.is_int_binary() || o.is_fp_binary() => {
                let ty = self.parse_first_class()?;
                operands.push(self.parse_value(ty)?);
                self.expect_punct(',')?;
                operands.push(self.parse_value(ty)?);
                ty
            }
            Opcode::FNeg => {
                let (ty, v) = self.parse_typed_value()?;
                operands.push(v);
                ty
            }
            Opcode::ICmp | Opcode::FCmp => {
                let pw = self.expect_any_word("a predicate")?;
                let pred = if op == Opcode::ICmp {
                    IntPredicate::from_name(&pw).map(Imm::IntPred)
                } else {
                    FloatPredicate::from_name(&pw).map(Imm::FloatPred)
                };
                imm = RawImm::Plain(pred.ok_or_else(|| self.err_prev(format!("unknown predicate '{pw}'")))?);
                let (ty, a) = self.parse_typed_value()?;
                self.expect_punct(',')?;
                let b = self.parse_value(ty)?;
                operands.extend([a, b]);
                ty.bool_of_shape().ok_or_else(|| self.err_prev("comparison of aggregate"))?
            }
            Opcode::Select => {
                let (_, c) = self.parse_typed_value()?;
                self.expect_punct(',')?;
                let (ty, a) = self.parse_typed_value()?;
                self.expect_punct(',')?;
                let (_, b) = self.parse_typed_value()?;
                operands.extend([c, a, b]);
                ty
            }
            Opcode::ExtractElement => {
                let (vty, v) = self.parse_typed_value()?;
                self.expect_punct(',')?;
                let (_, i) = self.parse_typed_value()?;
                operands.extend([v, i]);
                vty.element()
                    .filter(|_| vty.is_vector())
                    .ok_or_else(|| self.err_prev("extractelement needs a vector"))?
            }
            Opcode::InsertElement => {
                let (vty, v) = self.parse_typed_value()?;
                self.expect_punct(',')?;
                let (_, e) = self.parse_typed_value()?;
                self.expect_punct(',')?;
                let (_, i) = self.parse_typed_value()?;
                operands.extend([v, e, i]);
                vty
            }
            Opcode::ShuffleVector => {
                let (vty, a) = self.parse_typed_value()?;
                self.expect_punct(',')?;
                let (_, b) = self.parse_typed_value()?;
                self.expect_punct(',')?;
                let mty = self.parse_first_class()?;
                let mask = self.parse_const(mty)?;
                let lanes = match (&mask.val, mty) {
                    (ConstVal::Vector(l), Type::Vector(Scalar::Int(32), _)) => l
                        .iter()
                        .map(|c| match c {
                            ConstVal::Int(v) => Ok(*v as u32),
                            _ => Err(self.err_prev("shufflevector mask lanes must be integers")),
                        })
                        .collect::<PResult<Vec<u32>>>()?,
                    _ => return Err(self.err_prev("shufflevector mask must be a constant <N x i32> vector")),
                };
                operands.extend([a, b]);
                imm = RawImm::Plain(Imm::Mask(lanes));
                let lane = vty
                    .scalar()
                    .filter(|_| vty.is_vector())
                    .ok_or_else(|| self.err_prev("shufflevector needs vectors"))?;
                Type::Vector(lane, mty.lanes().unwrap_or(0))
            }
            Opcode::ExtractValue => {
                let (aty, a) = self.parse_typed_value()?;
                self.expect_punct(',')?;
                let idx = self.expect_u32()?;
                operands.push(a);
                imm = RawImm::Plain(Imm::Index(idx));
                aty.element().filter(|_| aty.is_array()).ok_or_else(|| self.err_prev("extractvalue needs an array"))?
            }
            Opcode::InsertValue => {
                let (aty, a) = self.parse_typed_value()?;
                self.expect_punct(',')?;
                let (_, e) = self.parse_typed_value()?;
                self.expect_punct(',')?;
                let idx = self.expect_u32()?;
                operands.extend([a, e]);
                imm = RawImm::Plain(Imm::Index(idx));
                aty
            }
            Opcode::GetElementPtr => {
                let elem = self.parse_first_class()?;
                self.expect_punct(',')?;
                let (_, base) = self.parse_typed_value()?;
                self.expect_punct(',')?;
                let (_, idx) = self.parse_typed_value()?;
                operands.extend([base, idx]);
                imm = RawImm::Plain(Imm::Type(elem));
                Type::ADDR
            }
            o if o.is_cast() => {
                let (_, v) = self.parse_typed_value()?;
                self.expect_word("to")?;
                operands.push(v);
                self.parse_first_class()?
            }
            Opcode::Alloca => {
                let ty = self.parse_first_class()?;
                imm = RawImm::Plain(Imm::Type(ty));
                Type::ADDR
            }
            Opcode::Load => {
                let ty = self.parse_first_class()?;
                self.expect_punct(',')?;
                self.eat_word("ptr");
                operands.push(self.parse_value(Type::ADDR)?);
                ty
            }
            Opcode::Store => {
                let (_, v) = self.parse_typed_value()?;
                self.expect_punct(',')?;
                self.eat_word("ptr");
                operands.extend([v, self.parse_value(Type::ADDR)?]);
                Type::Void
            }
            Opcode::Call => {
                let ret = self.parse_type()?;
                let callee = self.expect_global_name()?;
                self.expect_punct('(')?;
                if !self.eat_punct(')') {
                    loop {
                        let (_, a) = self.parse_typed_value()?;
                        operands.push(a);
                        if self.eat_punct(')') {
                            break;
                        }
                        self.expect_punct(',')?;
                    }
                }
                imm = RawImm::Plain(Imm::Callee(callee));
                ret
            }
            Opcode::Phi => {
                let ty = self.parse_first_class()?;
                let mut incoming = Vec::new();
                loop {
                    self.expect_punct('[')?;
                    operands.push(self.parse_value(ty)?);
                    self.expect_punct(',')?;
                    incoming.push(self.expect_local()?);
                    self.expect_punct(']')?;
                    if !self.eat_punct(',') {
                        break;
                    }
                }
                imm = RawImm::Incoming(incoming);
                ty
            }
            _ => unreachable!(),
        };
        let result = match (result_name, result_ty.is_void()) {
            (Some((n, at)), false) => Some((n, result_ty, at)),
            (None, true) => None,
            (Some((_, at)), true) => return Err(self.err_at(at, format!("'{}' produces no value to name", op.name()))),
            (None, false) if op == Opcode::Call => return Err(self.err_at(op_at, "non-void call result must be named")),
            (None, false) => return Err(self.err_at(op_at, format!("'{}' result must be named", op.name()))),
        };
        Ok(RawInst { op, result, operands, imm })
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Word(w) => format!("'{w}'"),
        Tok::Local(n) => format!("'%{n}'"),
        Tok::GlobalName(n) => format!("'@{n}'"),
        Tok::Int(v) => format!("'{v}'"),
        Tok::Hex(v) => format!("'0x{v:X}'"),
        Tok::Punct(c) => format!("'{c}'"),
        Tok::Eof => "end of input".into(),
    }
}

fn resolve_function(p: &Parser, m: &Module, mut f: Function, blocks: Vec<RawBlock>) -> PResult<Function> {
    let mut labels: HashMap<String, BlockId> = HashMap::new();
    for (i, b) in blocks.iter().enumerate() {
        if labels.insert(b.label.clone(), BlockId(i as u32)).is_some() {
            return Err(p.err_at(b.at, format!("duplicate label '{}'", b.label)));
        }
    }
    let mut names: HashMap<String, Value> = HashMap::new();
    for (i, param) in f.params.iter().enumerate() {
        if names.insert(param.name.clone(), Value::Arg(i as u32)).is_some() {
            return Err(p.err_at(0, format!("duplicate parameter '%{}'", param.name)));
        }
    }
    for b in &blocks {
        for inst in &b.insts {
            if let Some((name, ty, at)) = &inst.result {
                let id = ValueId(f.values.len() as u32);
                if names.insert(name.clone(), Value::Inst(id)).is_some() {
                    return Err(p.err_at(*at, format!("redefinition of '%{name}'")));
                }
                f.values.push(ValueInfo { name: name.clone(), ty: *ty });
            }
        }
    }
    let value = |rv: RawValue| -> PResult<Value> {
        match rv {
            RawValue::Const(c) => Ok(Value::Const(c)),
            RawValue::Local(n, at) => {
                names.get(&n).cloned().ok_or_else(|| p.err_at(at, format!("use of undefined value '%{n}'")))
            }
            RawValue::Global(n, at) => m
                .global_index(&n)
                .map(Value::Global)
                .ok_or_else(|| p.err_at(at, format!("use of undefined global '@{n}'"))),
        }
    };
    let label = |(n, at): (String, usize)| -> PResult<BlockId> {
        labels.get(n.as_str()).copied().ok_or_else(|| p.err_at(at, format!("unknown label '%{n}'")))
    };
    let mut next_id = 0u32;
    for b in blocks {
        let term = match b.term {
            RawTerm::Ret(v) => Terminator::Ret(v.map(&value).transpose()?),
            RawTerm::Br(l, at) => Terminator::Br(label((l, at))?),
            RawTerm::CondBr(c, t, e) => Terminator::CondBr { cond: value(c)?, then_to: label(t)?, else_to: label(e)? },
            RawTerm::Switch(v, d, cases) => Terminator::Switch {
                value: value(v)?,
                default: label(d)?,
                cases: cases.into_iter().map(|(c, l, at)| Ok((c, label((l, at))?))).collect::<PResult<_>>()?,
            },
        };
        let mut block = Block::new(b.label, term);
        let mut seen_body = false;
        for ri in b.insts {
            let result = ri.result.as_ref().map(|_| {
                let id = ValueId(next_id);
                next_id += 1;
                id
            });
            let operands = ri.operands.into_iter().map(&value).collect::<PResult<Vec<_>>>()?;
            let imm = match ri.imm {
                RawImm::Plain(i) => i,
                RawImm::Incoming(ls) => Imm::Incoming(ls.into_iter().map(&label).collect::<PResult<_>>()?),
            };
            let inst = Inst { op: ri.op, result, operands, imm };
            if ri.op == Opcode::Phi {
                if seen_body {
                    let at = ri.result.map(|r| r.2).unwrap_or(0);
                    return Err(p.err_at(at, "phi after a non-phi instruction"));
                }
                block.phis.push(inst);
            } else {
                seen_body = true;
                block.body.push(inst);
            }
        }
        f.blocks.push(block);
    }
    Ok(f)
}
