//! IEEE 754 binary16 conversion.
//!
//! The emulated accelerator stores activations and weights in half precision.
//! Arithmetic still happens in `f32`; values are pushed through
//! [`Half::from_f32`] and back whenever the device would have rounded them.
//!
//! Conversion uses round-to-nearest, ties-to-even. NaN payloads are not
//! carried over: every NaN becomes the canonical quiet NaN of its sign.

use std::fmt;

use crate::tensor::Tensor;

const SIGN_MASK: u16 = 0x8000;
const EXP_MASK: u16 = 0x7C00;
const MAN_MASK: u16 = 0x03FF;
const QUIET_NAN: u16 = 0x7E00;

/// A binary16 bit pattern: 1 sign bit, 5 exponent bits, 10 mantissa bits.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
#[repr(transparent)]
pub struct Half(u16);

impl Half {
    pub const ZERO: Half = Half(0x0000);
    pub const NEG_ZERO: Half = Half(0x8000);
    pub const ONE: Half = Half(0x3C00);
    pub const INFINITY: Half = Half(0x7C00);
    pub const NEG_INFINITY: Half = Half(0xFC00);
    pub const NAN: Half = Half(QUIET_NAN);
    /// Largest finite value, 65504.
    pub const MAX: Half = Half(0x7BFF);
    /// Smallest positive normal value, 2^-14.
    pub const MIN_POSITIVE: Half = Half(0x0400);
    /// Smallest positive subnormal value, 2^-24.
    pub const MIN_POSITIVE_SUBNORMAL: Half = Half(0x0001);

    #[inline]
    pub const fn from_bits(bits: u16) -> Half {
        Half(bits)
    }

    #[inline]
    pub const fn to_bits(self) -> u16 {
        self.0
    }

    /// Rounds `x` to the nearest binary16 value, ties to even.
    ///
    /// Magnitudes at or above 65520 (the midpoint between 65504 and 2^16)
    /// become infinity.
    pub fn from_f32(x: f32) -> Half {
        let bits = x.to_bits();
        let sign = ((bits >> 16) as u16) & SIGN_MASK;
        let exp = ((bits >> 23) & 0xFF) as i32;
        let man = bits & 0x007F_FFFF;

        if exp == 0xFF {
            return Half(if man == 0 { sign | EXP_MASK } else { sign | QUIET_NAN });
        }

        let unbiased = exp - 127;
        if unbiased > 15 {
            return Half(sign | EXP_MASK);
        }

        if unbiased >= -14 {
            // Normal range. Drop 13 mantissa bits and round; a carry out of
            // the mantissa bumps the exponent, and out of exponent 30 lands
            // exactly on the infinity pattern.
            let base = (((unbiased + 15) as u32) << 10) | (man >> 13);
            let rem = man & 0x1FFF;
            let round_up = rem > 0x1000 || (rem == 0x1000 && base & 1 == 1);
            return Half(sign | (base + round_up as u32) as u16);
        }

        // Subnormal result. Anything below 2^-25 is closer to zero than to
        // the smallest subnormal; exactly 2^-25 ties to the even zero.
        if unbiased < -25 {
            return Half(sign);
        }
        let full = man | 0x0080_0000;
        let shift = (-unbiased - 1) as u32; // 14..=24
        let base = full >> shift;
        let rem = full & ((1u32 << shift) - 1);
        let halfway = 1u32 << (shift - 1);
        let round_up = rem > halfway || (rem == halfway && base & 1 == 1);
        Half(sign | (base + round_up as u32) as u16)
    }

    /// Exact widening conversion.
    pub fn to_f32(self) -> f32 {
        let sign = ((self.0 & SIGN_MASK) as u32) << 16;
        let exp = ((self.0 & EXP_MASK) >> 10) as u32;
        let man = (self.0 & MAN_MASK) as u32;
        match exp {
            0 => {
                // mantissa * 2^-24, exact in f32
                let magnitude = man as f32 * f32::from_bits(0x3380_0000);
                f32::from_bits(sign | magnitude.to_bits())
            }
            0x1F => f32::from_bits(sign | 0x7F80_0000 | (man << 13)),
            _ => f32::from_bits(sign | ((exp + 112) << 23) | (man << 13)),
        }
    }

    #[inline]
    pub fn is_nan(self) -> bool {
        self.0 & EXP_MASK == EXP_MASK && self.0 & MAN_MASK != 0
    }

    #[inline]
    pub fn is_infinite(self) -> bool {
        self.0 & !SIGN_MASK == EXP_MASK
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.0 & EXP_MASK != EXP_MASK
    }

    #[inline]
    pub fn is_subnormal(self) -> bool {
        self.0 & EXP_MASK == 0 && self.0 & MAN_MASK != 0
    }
}

impl From<f32> for Half {
    fn from(x: f32) -> Self {
        Half::from_f32(x)
    }
}

impl From<Half> for f32 {
    fn from(h: Half) -> Self {
        h.to_f32()
    }
}

impl fmt::Debug for Half {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Half({:#06x} = {:?})", self.0, self.to_f32())
    }
}

impl fmt::Display for Half {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.to_f32(), f)
    }
}

/// Encodes an `f32` into its nearest binary16 pattern.
#[inline]
pub fn encode(x: f32) -> Half {
    Half::from_f32(x)
}

/// Decodes a binary16 pattern into the `f32` it represents.
#[inline]
pub fn decode(h: Half) -> f32 {
    h.to_f32()
}

/// Rounds a single value through binary16.
#[inline]
pub fn round_f32(x: f32) -> f32 {
    Half::from_f32(x).to_f32()
}

/// Rounds a slice in place through binary16.
pub fn quantize_slice(values: &mut [f32]) {
    for v in values {
        *v = round_f32(*v);
    }
}

/// Elementwise `decode(encode(x))`; the shape is unchanged.
pub fn quantize(t: &Tensor) -> Tensor {
    let mut out = t.clone();
    quantize_slice(out.data_mut());
    out
}
