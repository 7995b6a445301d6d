//! Pairwise PRF keys and the non-interactive randomness derived from them.
//!
//! Key `K_j` is shared by the two parties owning share component `j`, so party
//! `i` holds `(K_i, K_{i+1})`. The PRF is AES-128 over a block carrying a
//! domain tag, a session counter and a block index.

use aes::cipher::{BlockEncrypt, KeyInit};
use aes::Aes128;
use k256::elliptic_curve::ops::Reduce;
use k256::{Scalar, U256};
use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::field::{FieldElem, PrimeField};

pub type PrfKey = [u8; 16];

/// Domain tags keep independent uses of one key apart.
pub mod domain {
    pub const RAND_FIELD: u32 = 1;
    pub const ZERO_FIELD: u32 = 2;
    pub const RAND_SCALAR: u32 = 3;
    pub const ZERO_SCALAR: u32 = 4;
    pub const ZERO_BITS: u32 = 5;
    pub const MASK_BITS: u32 = 6;
    pub const SHUFFLE_PERM: u32 = 7;
    pub const SHUFFLE_OUT: u32 = 8;
    pub const SHUFFLE_MASK: u32 = 9;
    pub const ZERO_POINT: u32 = 10;
}

#[derive(Clone)]
pub struct Prf {
    cipher: Aes128,
}

impl std::fmt::Debug for Prf {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Prf(..)")
    }
}

impl Prf {
    pub fn new(key: &PrfKey) -> Self {
        Prf { cipher: Aes128::new(key.into()) }
    }

    #[inline]
    pub fn block(&self, dom: u32, counter: u64, idx: u32) -> u128 {
        let mut b = [0u8; 16];
        b[..4].copy_from_slice(&dom.to_le_bytes());
        b[4..12].copy_from_slice(&counter.to_le_bytes());
        b[12..].copy_from_slice(&idx.to_le_bytes());
        let mut block = b.into();
        self.cipher.encrypt_block(&mut block);
        u128::from_le_bytes(block.into())
    }

    /// Uniform field element by rejection over successive blocks.
    pub fn field(&self, f: &PrimeField, dom: u32, counter: u64) -> FieldElem {
        let mut idx = 0;
        loop {
            if let Some(v) = f.from_block(self.block(dom, counter, idx)) {
                return v;
            }
            idx += 1;
        }
    }

    /// Scalar mod n from a 256-bit draw (bias below 2^-127).
    pub fn scalar(&self, dom: u32, counter: u64) -> Scalar {
        let mut bytes = [0u8; 32];
        bytes[..16].copy_from_slice(&self.block(dom, counter, 0).to_be_bytes());
        bytes[16..].copy_from_slice(&self.block(dom, counter, 1).to_be_bytes());
        <Scalar as Reduce<U256>>::reduce_bytes(&bytes.into())
    }

    /// Seeded generator for bulk draws such as permutations.
    pub fn rng(&self, dom: u32, counter: u64) -> ChaCha12Rng {
        let mut seed = [0u8; 32];
        seed[..16].copy_from_slice(&self.block(dom, counter, 0).to_le_bytes());
        seed[16..].copy_from_slice(&self.block(dom, counter, 1).to_le_bytes());
        ChaCha12Rng::from_seed(seed)
    }
}

/// Fresh random keys for the three components, as produced at session setup.
pub fn generate_keys<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> [PrfKey; 3] {
    let mut k = [[0u8; 16]; 3];
    for key in &mut k {
        rng.fill_bytes(key);
    }
    k
}

/// One party's PRF keys and its session counter.
#[derive(Clone, Debug)]
pub struct CorrelatedSeeds {
    /// Keys for components `i` and `i + 1`.
    pub lo: Prf,
    pub hi: Prf,
    next_counter: u64,
}

impl CorrelatedSeeds {
    pub fn new(lo: &PrfKey, hi: &PrfKey) -> Self {
        CorrelatedSeeds { lo: Prf::new(lo), hi: Prf::new(hi), next_counter: 0 }
    }

    /// Seeds for party `i` from the full key triple (dealer or test setup).
    pub fn for_party(keys: &[PrfKey; 3], i: usize) -> Self {
        Self::new(&keys[i], &keys[(i + 1) % 3])
    }

    /// Reserves `n` consecutive counters and returns the first.
    pub fn alloc(&mut self, n: u64) -> u64 {
        let c = self.next_counter;
        self.next_counter += n;
        c
    }

    /// Claims a specific counter; fails if it was already handed out.
    pub fn claim(&mut self, counter: u64) -> Result<u64> {
        if counter < self.next_counter {
            return Err(Error::CounterDesync(counter));
        }
        self.next_counter = counter + 1;
        Ok(counter)
    }

    pub fn counter(&self) -> u64 {
        self.next_counter
    }
}
