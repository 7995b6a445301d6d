//! Prime-field arithmetic for the market values.
//!
//! The modulus is chosen at runtime (one prime per supported input bit length)
//! and kept below 2^96 so products can be reduced with two 128-bit multiplies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported modulus bit length.
pub const MAX_MODULUS_BITS: u32 = 96;

/// Smallest prime above 2^34, the default modulus for 32-bit inputs.
pub const P_32: u128 = (1u128 << 34) + 25;
/// Smallest prime above 2^66, the default modulus for 64-bit inputs.
pub const P_64: u128 = (1u128 << 66) + 9;

/// An element of the market field, always reduced (`0 <= value < p`).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FieldElem(u128);

impl FieldElem {
    pub const ZERO: FieldElem = FieldElem(0);
    pub const ONE: FieldElem = FieldElem(1);

    #[inline]
    pub fn value(self) -> u128 {
        self.0
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

/// A prime field `Z/pZ` together with the input bit length it was sized for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimeField {
    p: u128,
    input_bits: u32,
}

impl PrimeField {
    /// Field for `input_bits`-bit inputs using the default prime for that width.
    pub fn for_input_bits(input_bits: u32) -> Result<Self> {
        match input_bits {
            32 => Self::new(P_32, 32),
            64 => Self::new(P_64, 64),
            l if (1..=92).contains(&l) => Self::new(next_prime(1u128 << (l + 2)), l),
            l => Err(Error::ConfigInvalid(format!("unsupported input bit length {l}"))),
        }
    }

    /// Field with an explicit modulus. The modulus must be prime, below 2^96 and
    /// at least `2^(input_bits + 2)`.
    pub fn new(p: u128, input_bits: u32) -> Result<Self> {
        if input_bits == 0 {
            return Err(Error::ConfigInvalid("input bit length must be positive".into()));
        }
        if p >> MAX_MODULUS_BITS != 0 {
            return Err(Error::ConfigInvalid(format!("modulus {p} exceeds {MAX_MODULUS_BITS} bits")));
        }
        if input_bits + 2 >= 128 || p < (1u128 << (input_bits + 2)) {
            return Err(Error::ConfigInvalid(format!(
                "modulus {p} is shorter than input length {input_bits} plus two bits"
            )));
        }
        if !is_prime(p) {
            return Err(Error::ConfigInvalid(format!("modulus {p} is not prime")));
        }
        Ok(PrimeField { p, input_bits })
    }

    #[inline]
    pub fn modulus(&self) -> u128 {
        self.p
    }

    /// Bit length `l` of the values this field is sized to compare.
    #[inline]
    pub fn input_bits(&self) -> u32 {
        self.input_bits
    }

    /// Bit length of the modulus.
    #[inline]
    pub fn modulus_bits(&self) -> u32 {
        128 - self.p.leading_zeros()
    }

    /// Serialized width of one element: `ceil(bits(p) / 8)` bytes.
    #[inline]
    pub fn byte_width(&self) -> usize {
        self.modulus_bits().div_ceil(8) as usize
    }

    #[inline]
    pub fn elem(&self, v: u128) -> FieldElem {
        FieldElem(v % self.p)
    }

    #[inline]
    pub fn from_u64(&self, v: u64) -> FieldElem {
        self.elem(v as u128)
    }

    /// Maps a signed integer to its residue.
    pub fn from_i128(&self, v: i128) -> FieldElem {
        let m = v.unsigned_abs() % self.p;
        if v < 0 {
            self.neg(FieldElem(m))
        } else {
            FieldElem(m)
        }
    }

    /// Interprets an element as a signed integer in `(-p/2, p/2]`.
    pub fn to_signed(&self, a: FieldElem) -> i128 {
        if a.0 > self.p / 2 {
            -((self.p - a.0) as i128)
        } else {
            a.0 as i128
        }
    }

    #[inline]
    pub fn add(&self, a: FieldElem, b: FieldElem) -> FieldElem {
        let s = a.0 + b.0;
        FieldElem(if s >= self.p { s - self.p } else { s })
    }

    #[inline]
    pub fn sub(&self, a: FieldElem, b: FieldElem) -> FieldElem {
        FieldElem(if a.0 >= b.0 { a.0 - b.0 } else { a.0 + self.p - b.0 })
    }

    #[inline]
    pub fn neg(&self, a: FieldElem) -> FieldElem {
        if a.0 == 0 {
            a
        } else {
            FieldElem(self.p - a.0)
        }
    }

    #[inline]
    pub fn mul(&self, a: FieldElem, b: FieldElem) -> FieldElem {
        FieldElem(mul_mod(a.0, b.0, self.p))
    }

    pub fn pow(&self, mut base: FieldElem, mut exp: u128) -> FieldElem {
        let mut acc = FieldElem::ONE;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse; `None` for zero.
    pub fn inv(&self, a: FieldElem) -> Option<FieldElem> {
        (!a.is_zero()).then(|| self.pow(a, self.p - 2))
    }

    /// `2^i` as a field element.
    #[inline]
    pub fn pow2(&self, i: u32) -> FieldElem {
        self.elem(1u128 << i)
    }

    /// Samples a uniform element by rejection from 128-bit draws.
    pub fn sample<R: rand::RngCore + ?Sized>(&self, rng: &mut R) -> FieldElem {
        let bound = u128::MAX - (u128::MAX % self.p);
        loop {
            let mut buf = [0u8; 16];
            rng.fill_bytes(&mut buf);
            let v = u128::from_le_bytes(buf);
            if v < bound {
                return FieldElem(v % self.p);
            }
        }
    }

    /// Reduces a 128-bit pseudo-random block by rejection; `None` asks for another block.
    #[inline]
    pub fn from_block(&self, v: u128) -> Option<FieldElem> {
        let bound = u128::MAX - (u128::MAX % self.p);
        (v < bound).then(|| FieldElem(v % self.p))
    }

    /// Fixed-width little-endian encoding.
    pub fn encode_into(&self, a: FieldElem, out: &mut Vec<u8>) {
        out.extend_from_slice(&a.0.to_le_bytes()[..self.byte_width()]);
    }

    pub fn decode(&self, bytes: &[u8]) -> Result<FieldElem> {
        if bytes.len() != self.byte_width() {
            return Err(Error::Malformed(format!(
                "field element of {} bytes, expected {}",
                bytes.len(),
                self.byte_width()
            )));
        }
        let mut buf = [0u8; 16];
        buf[..bytes.len()].copy_from_slice(bytes);
        let v = u128::from_le_bytes(buf);
        if v >= self.p {
            return Err(Error::Malformed("field element not reduced".into()));
        }
        Ok(FieldElem(v))
    }

    pub fn encode_slice(&self, xs: &[FieldElem]) -> Vec<u8> {
        let mut out = Vec::with_capacity(xs.len() * self.byte_width());
        for &x in xs {
            self.encode_into(x, &mut out);
        }
        out
    }

    pub fn decode_slice(&self, bytes: &[u8]) -> Result<Vec<FieldElem>> {
        let w = self.byte_width();
        if !bytes.len().is_multiple_of(w) {
            return Err(Error::Malformed("field payload length not a multiple of element width".into()));
        }
        bytes.chunks_exact(w).map(|c| self.decode(c)).collect()
    }
}

/// `a * b mod p` for `p < 2^96`, Horner over the 32-bit limbs of `b`.
#[inline]
pub fn mul_mod(a: u128, b: u128, p: u128) -> u128 {
    debug_assert!(p >> MAX_MODULUS_BITS == 0 && a < p && b < p);
    if p >> 64 == 0 {
        // both operands fit in 64 bits
        return (a * b) % p;
    }
    const M: u128 = 0xffff_ffff;
    let mut r = (a * (b >> 64)) % p;
    r = ((r << 32) % p + a * ((b >> 32) & M)) % p;
    ((r << 32) % p + a * (b & M)) % p
}

fn pow_mod(mut base: u128, mut exp: u128, p: u128) -> u128 {
    let mut acc = 1u128 % p;
    base %= p;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, p);
        }
        base = mul_mod(base, base, p);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin for moduli below 2^96.
pub fn is_prime(n: u128) -> bool {
    if n < 2 {
        return false;
    }
    const BASES: [u128; 13] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41];
    for &b in &BASES {
        if n == b {
            return true;
        }
        if n.is_multiple_of(b) {
            return false;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Smallest prime strictly above `n`.
pub fn next_prime(n: u128) -> u128 {
    let mut c = n + 1;
    while !is_prime(c) {
        c += 1;
    }
    c
}
