//! Replicated XOR sharing of bit vectors packed into `u128` words.
//!
//! Layout mirrors the arithmetic case: party `i` holds `(w_i, w_{i+1})` and the
//! secret is `w_1 ^ w_2 ^ w_3`. Words carry at most 128 bits; callers pass the
//! number of meaningful low bits so only those go on the wire.

use crate::error::{Error, Result};
use crate::net::frame::PayloadKind;
use crate::prss::domain;
use crate::session::Party;
use crate::share::{next, prev};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BitShare {
    pub lo: u128,
    pub hi: u128,
}

#[inline]
pub fn width_mask(width: u32) -> u128 {
    if width >= 128 {
        u128::MAX
    } else {
        (1u128 << width) - 1
    }
}

impl BitShare {
    pub const ZERO: BitShare = BitShare { lo: 0, hi: 0 };

    pub fn new(lo: u128, hi: u128) -> Self {
        BitShare { lo, hi }
    }

    /// Public word as a share (held in component 0).
    #[inline]
    pub fn constant(party: usize, c: u128) -> Self {
        match party {
            0 => BitShare { lo: c, hi: 0 },
            2 => BitShare { lo: 0, hi: c },
            _ => BitShare::ZERO,
        }
    }

    #[inline]
    pub fn xor(self, o: Self) -> Self {
        BitShare { lo: self.lo ^ o.lo, hi: self.hi ^ o.hi }
    }

    #[inline]
    pub fn xor_const(self, party: usize, c: u128) -> Self {
        self.xor(BitShare::constant(party, c))
    }

    /// Bitwise complement over the low `width` bits.
    #[inline]
    pub fn not(self, party: usize, width: u32) -> Self {
        self.xor_const(party, width_mask(width))
    }

    #[inline]
    pub fn and_const(self, c: u128) -> Self {
        BitShare { lo: self.lo & c, hi: self.hi & c }
    }

    #[inline]
    pub fn shl(self, s: u32) -> Self {
        BitShare { lo: self.lo << s, hi: self.hi << s }
    }

    #[inline]
    pub fn shr(self, s: u32) -> Self {
        BitShare { lo: self.lo >> s, hi: self.hi >> s }
    }

    #[inline]
    pub fn mask(self, width: u32) -> Self {
        self.and_const(width_mask(width))
    }

    /// Bit `i` moved to position 0.
    #[inline]
    pub fn bit(self, i: u32) -> Self {
        BitShare { lo: (self.lo >> i) & 1, hi: (self.hi >> i) & 1 }
    }

    /// Copies bit 0 across the low `width` bits.
    #[inline]
    pub fn broadcast(self, width: u32) -> Self {
        let m = width_mask(width);
        BitShare { lo: if self.lo & 1 == 1 { m } else { 0 }, hi: if self.hi & 1 == 1 { m } else { 0 } }
    }

    #[inline]
    fn and_local(self, o: Self) -> u128 {
        (self.lo & o.lo) ^ (self.lo & o.hi) ^ (self.hi & o.lo)
    }
}

fn encode_words(w: &[u128], width: u32) -> Vec<u8> {
    let nb = width.div_ceil(8) as usize;
    let mut out = Vec::with_capacity(w.len() * nb);
    for x in w {
        out.extend_from_slice(&x.to_le_bytes()[..nb]);
    }
    out
}

fn decode_words(b: &[u8], width: u32, expect: usize) -> Result<Vec<u128>> {
    let nb = width.div_ceil(8) as usize;
    if b.len() != nb * expect {
        return Err(Error::Malformed(format!("bit payload of {} bytes, expected {}", b.len(), nb * expect)));
    }
    Ok(b.chunks_exact(nb)
        .map(|c| {
            let mut buf = [0u8; 16];
            buf[..nb].copy_from_slice(c);
            u128::from_le_bytes(buf) & width_mask(width)
        })
        .collect())
}

impl Party {
    /// XOR summands of `n` sharings of the zero word.
    fn zero_words(&mut self, n: usize) -> Vec<u128> {
        let base = self.alloc_counters(n as u64);
        (0..n as u64)
            .map(|k| self.seeds.lo.block(domain::ZERO_BITS, base + k, 0) ^ self.seeds.hi.block(domain::ZERO_BITS, base + k, 0))
            .collect()
    }

    /// Element-wise AND of the low `width` bits, one round.
    pub fn and_bits(&mut self, x: &[BitShare], y: &[BitShare], width: u32) -> Result<Vec<BitShare>> {
        assert_eq!(x.len(), y.len(), "and operands differ in length");
        let m = width_mask(width);
        let beta = self.zero_words(x.len());
        let z: Vec<u128> = x.iter().zip(y).zip(beta).map(|((a, b), r)| (a.and_local(*b) ^ r) & m).collect();
        let payload = encode_words(&z, width);
        let got = self.exchange(PayloadKind::Bits, vec![(prev(self.id()), payload, z.len() as u64)], &[next(self.id())])?;
        let hi = decode_words(&got[0], width, z.len())?;
        Ok(z.into_iter().zip(hi).map(|(lo, hi)| BitShare::new(lo, hi)).collect())
    }

    /// Reveals the low `width` bits of each word, one round.
    pub fn open_bits(&mut self, x: &[BitShare], width: u32) -> Result<Vec<u128>> {
        let m = width_mask(width);
        let lo: Vec<u128> = x.iter().map(|s| s.lo & m).collect();
        let payload = encode_words(&lo, width);
        let got = self.exchange(PayloadKind::Bits, vec![(next(self.id()), payload, x.len() as u64)], &[prev(self.id())])?;
        let third = decode_words(&got[0], width, x.len())?;
        Ok(x.iter().zip(third).map(|(s, t)| (s.lo ^ s.hi ^ t) & m).collect())
    }

    #[inline]
    pub fn bit_constant(&self, c: u128) -> BitShare {
        BitShare::constant(self.id(), c)
    }
}

/// Dealer-side XOR sharing of a word.
pub fn share_bits<R: rand::RngCore + ?Sized>(x: u128, rng: &mut R) -> [BitShare; 3] {
    let a = ((rng.next_u64() as u128) << 64) | rng.next_u64() as u128;
    let b = ((rng.next_u64() as u128) << 64) | rng.next_u64() as u128;
    let c = x ^ a ^ b;
    [BitShare::new(a, b), BitShare::new(b, c), BitShare::new(c, a)]
}
