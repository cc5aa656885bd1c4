//! Feature-directed synthesis of compute kernels: a small kernel language and
//! its IR, three feature spaces, an infilling transformer, beam search toward
//! feature targets, query-by-committee active learning and a device-mapping
//! harness.

pub mod active;
pub mod corpus;
pub mod downstream;
pub mod features;
pub mod io;
pub mod ir;
pub mod kcl;
pub mod model;
pub mod nn;
pub mod search;
pub mod tokenizer;

/// Floating-point element type of model parameters and numeric kernels.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + std::ops::DivAssign
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}
