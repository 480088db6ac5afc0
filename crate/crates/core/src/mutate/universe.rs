//! The set of types the mutator may introduce.

use rand::Rng;

use crate::ir::{Scalar, Type, VECTOR_COUNTS};
use crate::target::{FeatureSet, TargetSpec};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeUniverse {
    pub scalars: Vec<Type>,
    pub vectors: Vec<Type>,
    pub arrays: Vec<Type>,
}

const ARRAY_LENS: [u8; 2] = [2, 4];

impl TypeUniverse {
    pub fn new(int_widths: &[u16], vectors: bool) -> TypeUniverse {
        let mut lanes: Vec<Scalar> = int_widths.iter().map(|w| Scalar::Int(*w)).collect();
        lanes.extend([Scalar::F32, Scalar::F64, Scalar::Addr]);
        let scalars: Vec<Type> = lanes.iter().map(|s| Type::Scalar(*s)).collect();
        let vectors = if vectors {
            lanes.iter().flat_map(|s| VECTOR_COUNTS.iter().map(move |n| Type::Vector(*s, *n))).collect()
        } else {
            Vec::new()
        };
        let arrays = scalars
            .iter()
            .filter(|t| **t != Type::I1 && **t != Type::ADDR)
            .flat_map(|t| ARRAY_LENS.iter().filter_map(move |n| Type::array(*t, *n)))
            .collect();
        TypeUniverse { scalars, vectors, arrays }
    }

    pub fn for_target(t: &TargetSpec, features: FeatureSet) -> TypeUniverse {
        TypeUniverse::new(&t.int_widths(features), t.vectors_enabled(features))
    }

    pub fn contains(&self, t: Type) -> bool {
        match t {
            Type::Void => false,
            Type::Scalar(_) => self.scalars.contains(&t),
            Type::Vector(..) => self.vectors.contains(&t),
            Type::Array(..) => self.arrays.contains(&t),
        }
    }

    pub fn all(&self) -> impl Iterator<Item = Type> + '_ {
        self.scalars.iter().chain(&self.vectors).chain(&self.arrays).copied()
    }

    /// Draws from the types accepted by `keep`: scalars, vectors and
    /// arrays are weighted 3:2:1 as groups, uniform inside a group.
    pub fn pick<R: Rng>(&self, rng: &mut R, keep: impl Fn(Type) -> bool) -> Option<Type> {
        let groups: [(&[Type], u32); 3] = [(&self.scalars, 3), (&self.vectors, 2), (&self.arrays, 1)];
        let filtered: Vec<(Vec<Type>, u32)> = groups
            .iter()
            .map(|(g, w)| (g.iter().copied().filter(|t| keep(*t)).collect::<Vec<_>>(), *w))
            .filter(|(g, _)| !g.is_empty())
            .collect();
        let total: u32 = filtered.iter().map(|(_, w)| w).sum();
        if total == 0 {
            return None;
        }
        let mut x = rng.gen_range(0..total);
        for (g, w) in &filtered {
            if x < *w {
                return Some(g[rng.gen_range(0..g.len())]);
            }
            x -= w;
        }
        unreachable!("weights cover the draw")
    }
}

impl Default for TypeUniverse {
    /// Scalar-only universe over the common integer widths.
    fn default() -> Self {
        TypeUniverse::new(&[1, 8, 16, 32, 64], false)
    }
}
