//! Scalar abstraction shared by every matrix type in the crate.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real floating-point element type. Implemented for `f32` (the default
/// precision throughout the CLI) and `f64`.
pub trait Scalar:
    Float
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + FromStr
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Width in bytes of the little-endian encoding.
    const BYTES: usize;
    /// Short name used in dumps and reports ("f32", "f64").
    const NAME: &'static str;
    /// Per-element relative tolerance used when checking against the oracles.
    const ORACLE_RTOL: f64;

    fn write_le(self, out: &mut Vec<u8>);
    /// Decodes from exactly `Self::BYTES` bytes.
    fn read_le(bytes: &[u8]) -> Self;

    #[inline]
    fn from_f64_lossy(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).unwrap_or_else(Self::nan)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    const BYTES: usize = 4;
    const NAME: &'static str = "f32";
    const ORACLE_RTOL: f64 = 1e-5;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        let mut buf = [0u8; 4];
        buf.copy_from_slice(bytes);
        f32::from_le_bytes(buf)
    }
}

impl Scalar for f64 {
    const BYTES: usize = 8;
    const NAME: &'static str = "f64";
    const ORACLE_RTOL: f64 = 1e-12;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        let mut buf = [0u8; 8];
        buf.copy_from_slice(bytes);
        f64::from_le_bytes(buf)
    }
}
