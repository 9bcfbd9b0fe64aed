//! Scalar abstraction for the numeric core.
//!
//! Policy math and the RL objectives are generic over [`Real`]; the
//! orchestrator and environments pin `f64` through the aliases at the
//! crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + ScalarOperand
    + LinalgScalar
    + Sum
    + Display
    + Debug
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Lossless-enough constant conversion for literals in formulas.
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("constant representable")
    }
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + ScalarOperand
        + LinalgScalar
        + Sum
        + Display
        + Debug
        + Serialize
        + DeserializeOwned
        + Send
        + Sync
        + 'static
{
}
