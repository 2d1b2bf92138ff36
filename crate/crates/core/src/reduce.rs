//! Reduction functions. User-defined operations are identified by a
//! registration name so that a checkpoint image can name them; every backend
//! calls back into a [`ReductionRegistry`] to execute them.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use crate::typemap::NamedType;

/// `inout[i] = input[i] (op) inout[i]` over elements of the given type.
pub type ReduceFn = fn(NamedType, &[u8], &mut [u8]);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BuiltinOp {
    Sum,
    Prod,
    Max,
    Min,
}

impl BuiltinOp {
    pub const ALL: [BuiltinOp; 4] = [BuiltinOp::Sum, BuiltinOp::Prod, BuiltinOp::Max, BuiltinOp::Min];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinOp::Sum => "SUM",
            BuiltinOp::Prod => "PROD",
            BuiltinOp::Max => "MAX",
            BuiltinOp::Min => "MIN",
        }
    }

    pub fn from_name(name: &str) -> Option<BuiltinOp> {
        BuiltinOp::ALL.into_iter().find(|o| o.name() == name)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn apply(self, elem: NamedType, input: &[u8], inout: &mut [u8]) {
        match self {
            BuiltinOp::Sum => apply_elementwise(elem, input, inout, Arith::Sum),
            BuiltinOp::Prod => apply_elementwise(elem, input, inout, Arith::Prod),
            BuiltinOp::Max => apply_elementwise(elem, input, inout, Arith::Max),
            BuiltinOp::Min => apply_elementwise(elem, input, inout, Arith::Min),
        }
    }
}

#[derive(Clone, Copy)]
enum Arith {
    Sum,
    Prod,
    Max,
    Min,
}

macro_rules! elementwise {
    ($ty:ty, $input:expr, $inout:expr, $op:expr, $sum:expr, $prod:expr) => {{
        const W: usize = std::mem::size_of::<$ty>();
        for (a, b) in $input.chunks_exact(W).zip($inout.chunks_exact_mut(W)) {
            let x = <$ty>::from_le_bytes(a.try_into().unwrap());
            let y = <$ty>::from_le_bytes((&*b).try_into().unwrap());
            let r: $ty = match $op {
                Arith::Sum => $sum(x, y),
                Arith::Prod => $prod(x, y),
                Arith::Max => if x > y { x } else { y },
                Arith::Min => if x < y { x } else { y },
            };
            b.copy_from_slice(&r.to_le_bytes());
        }
    }};
}

fn apply_elementwise(elem: NamedType, input: &[u8], inout: &mut [u8], op: Arith) {
    match elem {
        NamedType::Byte => elementwise!(u8, input, inout, op, u8::wrapping_add, u8::wrapping_mul),
        NamedType::Char | NamedType::Int8 => {
            elementwise!(i8, input, inout, op, i8::wrapping_add, i8::wrapping_mul)
        }
        NamedType::Int => elementwise!(i32, input, inout, op, i32::wrapping_add, i32::wrapping_mul),
        NamedType::Int64 => elementwise!(i64, input, inout, op, i64::wrapping_add, i64::wrapping_mul),
        NamedType::Double => elementwise!(f64, input, inout, op, |a: f64, b: f64| a + b, |a: f64, b: f64| a * b),
    }
}

/// Name-keyed table of user reduction functions.
#[derive(Default)]
pub struct ReductionRegistry {
    fns: RwLock<HashMap<String, ReduceFn>>,
}

impl ReductionRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registering the same name twice with the same function is a no-op;
    /// a different function under an existing name is rejected.
    pub fn register(&self, name: &str, f: ReduceFn) -> bool {
        let mut fns = self.fns.write().unwrap();
        match fns.get(name) {
            Some(existing) => std::ptr::fn_addr_eq(*existing, f),
            None => {
                fns.insert(name.to_owned(), f);
                true
            }
        }
    }

    pub fn lookup(&self, name: &str) -> Option<ReduceFn> {
        self.fns.read().unwrap().get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.fns.read().unwrap().contains_key(name)
    }
}

/// The process-wide registry used unless a runtime is given its own.
pub fn global() -> Arc<ReductionRegistry> {
    static GLOBAL: OnceLock<Arc<ReductionRegistry>> = OnceLock::new();
    GLOBAL.get_or_init(|| Arc::new(ReductionRegistry::new())).clone()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn i64s(v: &[i64]) -> Vec<u8> {
        v.iter().flat_map(|x| x.to_le_bytes()).collect()
    }

    #[test]
    fn builtin_sum_and_max() {
        let mut acc = i64s(&[1, 5]);
        BuiltinOp::Sum.apply(NamedType::Int64, &i64s(&[2, 3]), &mut acc);
        assert_eq!(acc, i64s(&[3, 8]));
        BuiltinOp::Max.apply(NamedType::Int64, &i64s(&[4, 1]), &mut acc);
        assert_eq!(acc, i64s(&[4, 8]));
    }

    fn first(_: NamedType, _: &[u8], _: &mut [u8]) {}
    fn second(_: NamedType, input: &[u8], inout: &mut [u8]) {
        inout.copy_from_slice(input);
    }

    #[test]
    fn registry_rejects_conflicting_names() {
        let r = ReductionRegistry::new();
        assert!(r.register("f", first));
        assert!(r.register("f", first));
        assert!(!r.register("f", second));
        assert!(r.lookup("f").is_some());
        assert!(r.lookup("g").is_none());
    }
}
