pub mod conv;
mod elementwise;
mod reduce;
mod sample;
mod shape;

use crate::Scalar;

pub(crate) fn cast<T: Scalar>(v: f64) -> T {
    T::from_f64_lossy(v)
}
