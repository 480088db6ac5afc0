//! The IR type algebra.

use std::fmt;

/// Widest integer the IR admits.
pub const MAX_INT_WIDTH: u16 = 128;
/// Legal lane counts for fixed vectors.
pub const VECTOR_COUNTS: [u8; 4] = [2, 4, 8, 16];
/// Largest fixed array.
pub const MAX_ARRAY_LEN: u8 = 16;
/// Bit width of the opaque address type.
pub const ADDR_BITS: u32 = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scalar {
    Int(u16),
    F32,
    F64,
    Addr,
}

impl Scalar {
    pub fn is_int(self) -> bool {
        matches!(self, Scalar::Int(_))
    }

    pub fn is_float(self) -> bool {
        matches!(self, Scalar::F32 | Scalar::F64)
    }

    pub fn bits(self) -> u32 {
        match self {
            Scalar::Int(w) => w as u32,
            Scalar::F32 => 32,
            Scalar::F64 => 64,
            Scalar::Addr => ADDR_BITS,
        }
    }

    pub fn is_valid(self) -> bool {
        match self {
            Scalar::Int(w) => (1..=MAX_INT_WIDTH).contains(&w),
            _ => true,
        }
    }
}

/// Element of a fixed array: anything first-class except another array.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Elem {
    Scalar(Scalar),
    Vector(Scalar, u8),
}

impl Elem {
    pub fn to_type(self) -> Type {
        match self {
            Elem::Scalar(s) => Type::Scalar(s),
            Elem::Vector(s, n) => Type::Vector(s, n),
        }
    }
}

/// A type descriptor. All variants are `Copy`; nesting is bounded by
/// construction (vectors hold scalars, arrays hold scalars or vectors).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Type {
    Void,
    Scalar(Scalar),
    Vector(Scalar, u8),
    Array(Elem, u8),
}

impl Type {
    pub const I1: Type = Type::Scalar(Scalar::Int(1));
    pub const I8: Type = Type::Scalar(Scalar::Int(8));
    pub const I16: Type = Type::Scalar(Scalar::Int(16));
    pub const I32: Type = Type::Scalar(Scalar::Int(32));
    pub const I64: Type = Type::Scalar(Scalar::Int(64));
    pub const F32: Type = Type::Scalar(Scalar::F32);
    pub const F64: Type = Type::Scalar(Scalar::F64);
    pub const ADDR: Type = Type::Scalar(Scalar::Addr);

    pub fn int(width: u16) -> Type {
        Type::Scalar(Scalar::Int(width))
    }

    pub fn vector(lane: Type, count: u8) -> Option<Type> {
        match lane {
            Type::Scalar(s) if VECTOR_COUNTS.contains(&count) => Some(Type::Vector(s, count)),
            _ => None,
        }
    }

    pub fn array(elem: Type, count: u8) -> Option<Type> {
        if !(1..=MAX_ARRAY_LEN).contains(&count) {
            return None;
        }
        match elem {
            Type::Scalar(s) => Some(Type::Array(Elem::Scalar(s), count)),
            Type::Vector(s, n) => Some(Type::Array(Elem::Vector(s, n), count)),
            _ => None,
        }
    }

    /// Structural well-formedness: widths and counts inside their ranges.
    pub fn is_valid(self) -> bool {
        match self {
            Type::Void => true,
            Type::Scalar(s) => s.is_valid(),
            Type::Vector(s, n) => s.is_valid() && VECTOR_COUNTS.contains(&n),
            Type::Array(e, n) => (1..=MAX_ARRAY_LEN).contains(&n) && e.to_type().is_valid(),
        }
    }

    pub fn is_void(self) -> bool {
        self == Type::Void
    }

    pub fn is_vector(self) -> bool {
        matches!(self, Type::Vector(..))
    }

    pub fn is_array(self) -> bool {
        matches!(self, Type::Array(..))
    }

    /// Scalar or vector of scalars.
    pub fn is_single_value(self) -> bool {
        matches!(self, Type::Scalar(_) | Type::Vector(..))
    }

    /// Lane type of a vector, or the scalar itself.
    pub fn scalar(self) -> Option<Scalar> {
        match self {
            Type::Scalar(s) | Type::Vector(s, _) => Some(s),
            _ => None,
        }
    }

    pub fn lanes(self) -> Option<u8> {
        match self {
            Type::Vector(_, n) => Some(n),
            _ => None,
        }
    }

    pub fn is_int(self) -> bool {
        matches!(self, Type::Scalar(Scalar::Int(_)))
    }

    pub fn is_int_or_vec_int(self) -> bool {
        self.scalar().is_some_and(Scalar::is_int)
    }

    pub fn is_fp_or_vec_fp(self) -> bool {
        self.scalar().is_some_and(Scalar::is_float)
    }

    pub fn is_addr_or_vec_addr(self) -> bool {
        self.scalar() == Some(Scalar::Addr)
    }

    pub fn is_bool_or_vec_bool(self) -> bool {
        self.scalar() == Some(Scalar::Int(1))
    }

    pub fn int_width(self) -> Option<u16> {
        match self.scalar() {
            Some(Scalar::Int(w)) => Some(w),
            _ => None,
        }
    }

    /// Same shape (scalar or vector of the same length) with a new lane.
    pub fn with_lane(self, lane: Scalar) -> Option<Type> {
        match self {
            Type::Scalar(_) => Some(Type::Scalar(lane)),
            Type::Vector(_, n) => Some(Type::Vector(lane, n)),
            _ => None,
        }
    }

    /// `i1` or `<N x i1>` matching this type's shape.
    pub fn bool_of_shape(self) -> Option<Type> {
        self.with_lane(Scalar::Int(1))
    }

    /// Element type of an array, lane type of a vector.
    pub fn element(self) -> Option<Type> {
        match self {
            Type::Vector(s, _) => Some(Type::Scalar(s)),
            Type::Array(e, _) => Some(e.to_type()),
            _ => None,
        }
    }

    pub fn array_len(self) -> Option<u8> {
        match self {
            Type::Array(_, n) => Some(n),
            _ => None,
        }
    }

    /// Total bit width of a non-aggregate type.
    pub fn bit_width(self) -> Option<u32> {
        match self {
            Type::Scalar(s) => Some(s.bits()),
            Type::Vector(s, n) => Some(s.bits() * n as u32),
            _ => None,
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Int(w) => write!(f, "i{w}"),
            Scalar::F32 => f.write_str("f32"),
            Scalar::F64 => f.write_str("f64"),
            Scalar::Addr => f.write_str("ptr"),
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Void => f.write_str("void"),
            Type::Scalar(s) => write!(f, "{s}"),
            Type::Vector(s, n) => write!(f, "<{n} x {s}>"),
            Type::Array(e, n) => write!(f, "[{n} x {}]", e.to_type()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spelling() {
        assert_eq!(Type::vector(Type::I32, 4).unwrap().to_string(), "<4 x i32>");
        let v = Type::vector(Type::F64, 2).unwrap();
        assert_eq!(Type::array(v, 3).unwrap().to_string(), "[3 x <2 x f64>]");
        assert_eq!(Type::int(20).to_string(), "i20");
    }

    #[test]
    fn nesting_rules() {
        let v = Type::vector(Type::I8, 16).unwrap();
        assert!(Type::vector(v, 2).is_none());
        let a = Type::array(Type::I8, 4).unwrap();
        assert!(Type::array(a, 2).is_none());
        assert!(Type::vector(Type::I8, 3).is_none());
        assert!(Type::array(Type::I8, 17).is_none());
        assert!(Type::array(Type::Void, 1).is_none());
    }

    #[test]
    fn width_range() {
        assert!(Type::int(1).is_valid());
        assert!(Type::int(20).is_valid());
        assert!(Type::int(128).is_valid());
        assert!(!Type::int(0).is_valid());
        assert!(!Type::int(129).is_valid());
    }

    #[test]
    fn shape_helpers() {
        let v = Type::vector(Type::I32, 8).unwrap();
        assert_eq!(v.bool_of_shape(), Type::vector(Type::I1, 8));
        assert_eq!(v.bit_width(), Some(256));
        assert_eq!(v.element(), Some(Type::I32));
        assert_eq!(Type::ADDR.bit_width(), Some(64));
    }
}
