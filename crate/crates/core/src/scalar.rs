//! Element types carried in chunks and the reductions defined over them.
//!
//! Integer elements reduce with wrapping addition, which is associative and
//! commutative, so every schedule must reproduce the oracle bit for bit.
//! Floating-point elements reduce with ordinary addition and are compared
//! against the oracle with a relative tolerance.

use std::fmt::Debug;

use num_traits::{Float, PrimInt, WrappingAdd};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when comparing floating-point reductions.
pub const FLOAT_REL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReduceOp {
    WrappingIntSum,
    FloatSum,
}

/// A scalar that can travel inside a chunk.
pub trait Element: Copy + Debug + PartialEq + Send + Sync + 'static {
    const NAME: &'static str;

    /// Combine two values under `op`, or `None` when the op is not defined
    /// for this element type.
    fn reduce(self, other: Self, op: ReduceOp) -> Option<Self>;

    /// The reduction this type supports natively.
    fn native_op() -> ReduceOp;

    fn random<R: Rng + ?Sized>(rng: &mut R) -> Self;

    fn from_index(i: usize) -> Self;

    /// Exact equality for integers; relative tolerance for floats.
    fn matches(self, expected: Self) -> bool;
}

fn int_matches<T: PrimInt>(a: T, b: T) -> bool {
    a == b
}

fn float_matches<T: Float>(a: T, b: T) -> bool {
    if a == b {
        return true;
    }
    let tol = T::from(FLOAT_REL_TOLERANCE).unwrap();
    let scale = a.abs().max(b.abs()).max(T::min_positive_value());
    (a - b).abs() <= tol * scale
}

macro_rules! impl_int_element {
    ($($t:ty),*) => {$(
        impl Element for $t {
            const NAME: &'static str = stringify!($t);

            fn reduce(self, other: Self, op: ReduceOp) -> Option<Self> {
                match op {
                    ReduceOp::WrappingIntSum => Some(WrappingAdd::wrapping_add(&self, &other)),
                    ReduceOp::FloatSum => None,
                }
            }

            fn native_op() -> ReduceOp {
                ReduceOp::WrappingIntSum
            }

            fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
                rng.gen()
            }

            fn from_index(i: usize) -> Self {
                i as $t
            }

            fn matches(self, expected: Self) -> bool {
                int_matches(self, expected)
            }
        }
    )*};
}

macro_rules! impl_float_element {
    ($($t:ty),*) => {$(
        impl Element for $t {
            const NAME: &'static str = stringify!($t);

            fn reduce(self, other: Self, op: ReduceOp) -> Option<Self> {
                match op {
                    ReduceOp::FloatSum => Some(self + other),
                    ReduceOp::WrappingIntSum => None,
                }
            }

            fn native_op() -> ReduceOp {
                ReduceOp::FloatSum
            }

            // uniform in [0, 1)
            fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
                rng.gen::<$t>()
            }

            fn from_index(i: usize) -> Self {
                i as $t
            }

            fn matches(self, expected: Self) -> bool {
                float_matches(self, expected)
            }
        }
    )*};
}

impl_int_element!(i32, i64, u32, u64);
impl_float_element!(f32, f64);

/// Element-wise reduction of two equally sized chunks.
pub fn reduce_chunks<T: Element>(acc: &mut [T], other: &[T], op: ReduceOp) -> Result<()> {
    debug_assert_eq!(acc.len(), other.len());
    for (a, b) in acc.iter_mut().zip(other) {
        *a = a.reduce(*b, op).ok_or(Error::UnsupportedOp {
            op,
            element: T::NAME,
        })?;
    }
    Ok(())
}

/// Fails with `UnsupportedOp` unless `op` is defined for `T`.
pub fn check_op<T: Element>(op: ReduceOp) -> Result<()> {
    if T::from_index(0).reduce(T::from_index(0), op).is_some() {
        Ok(())
    } else {
        Err(Error::UnsupportedOp {
            op,
            element: T::NAME,
        })
    }
}
