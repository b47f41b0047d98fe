use core::fmt::{Debug, Display};

use num_traits::Float;

/// Floating point element type of every tensor. Implemented for `f32`
/// (training default) and `f64` (gradient checks).
pub trait Scalar: Float + Debug + Display + Default + Send + Sync + 'static {
    /// Width of one element in the checkpoint byte stream.
    const BYTES: usize;
    const NAME: &'static str;

    fn of(x: f64) -> Self;
    fn as_f64(self) -> f64;
    fn write_le(self, out: &mut alloc::vec::Vec<u8>);
    /// `bytes` has exactly `Self::BYTES` entries.
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const BYTES: usize = 4;
    const NAME: &'static str = "f32";

    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn write_le(self, out: &mut alloc::vec::Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        let mut b = [0u8; 4];
        b.copy_from_slice(bytes);
        f32::from_le_bytes(b)
    }
}

impl Scalar for f64 {
    const BYTES: usize = 8;
    const NAME: &'static str = "f64";

    #[inline]
    fn of(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
    fn write_le(self, out: &mut alloc::vec::Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        let mut b = [0u8; 8];
        b.copy_from_slice(bytes);
        f64::from_le_bytes(b)
    }
}
