//! Three-party replicated sharing over the market field.
//!
//! A secret `x = x1 + x2 + x3 (mod p)` is held so that party `i` (0-based) owns
//! the components `(x_i, x_{i+1})`. Component `j` is therefore known to parties
//! `j` and `j - 1`.

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldElem, PrimeField};

/// Index of the next party around the ring.
#[inline]
pub fn next(i: usize) -> usize {
    (i + 1) % 3
}

/// Index of the previous party around the ring.
#[inline]
pub fn prev(i: usize) -> usize {
    (i + 2) % 3
}

/// One party's view `(x_i, x_{i+1})` of a shared field element.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicatedShare {
    pub lo: FieldElem,
    pub hi: FieldElem,
}

impl ReplicatedShare {
    pub const ZERO: ReplicatedShare = ReplicatedShare { lo: FieldElem::ZERO, hi: FieldElem::ZERO };

    pub fn new(lo: FieldElem, hi: FieldElem) -> Self {
        ReplicatedShare { lo, hi }
    }

    /// Sharing of a public constant: the value sits in component 0.
    pub fn constant(party: usize, c: FieldElem) -> Self {
        match party {
            0 => ReplicatedShare { lo: c, hi: FieldElem::ZERO },
            2 => ReplicatedShare { lo: FieldElem::ZERO, hi: c },
            _ => ReplicatedShare::ZERO,
        }
    }

    /// Sharing of a value known to the pair owning component `comp`.
    ///
    /// The pair `(comp - 1, comp)` passes `Some(v)`; the third party passes `None`.
    pub fn from_component(party: usize, comp: usize, v: Option<FieldElem>) -> Self {
        let v = v.unwrap_or_default();
        if party == comp {
            ReplicatedShare { lo: v, hi: FieldElem::ZERO }
        } else if next(party) == comp {
            ReplicatedShare { lo: FieldElem::ZERO, hi: v }
        } else {
            ReplicatedShare::ZERO
        }
    }

    #[inline]
    pub fn add(self, f: &PrimeField, o: Self) -> Self {
        ReplicatedShare { lo: f.add(self.lo, o.lo), hi: f.add(self.hi, o.hi) }
    }

    #[inline]
    pub fn sub(self, f: &PrimeField, o: Self) -> Self {
        ReplicatedShare { lo: f.sub(self.lo, o.lo), hi: f.sub(self.hi, o.hi) }
    }

    #[inline]
    pub fn neg(self, f: &PrimeField) -> Self {
        ReplicatedShare { lo: f.neg(self.lo), hi: f.neg(self.hi) }
    }

    #[inline]
    pub fn scale(self, f: &PrimeField, a: FieldElem) -> Self {
        ReplicatedShare { lo: f.mul(self.lo, a), hi: f.mul(self.hi, a) }
    }

    #[inline]
    pub fn add_const(self, f: &PrimeField, party: usize, c: FieldElem) -> Self {
        self.add(f, ReplicatedShare::constant(party, c))
    }

    /// `a * self + y`, all local.
    #[inline]
    pub fn axpy(self, f: &PrimeField, a: FieldElem, y: Self) -> Self {
        self.scale(f, a).add(f, y)
    }

    /// This party's summand of the product of two shared values.
    #[inline]
    pub fn mul_local(self, f: &PrimeField, o: Self) -> FieldElem {
        let t = f.add(f.mul(self.lo, o.lo), f.mul(self.lo, o.hi));
        f.add(t, f.mul(self.hi, o.lo))
    }
}

/// Dealer-side sharing of `x`; entry `i` goes to party `i`.
pub fn share<R: RngCore + CryptoRng + ?Sized>(f: &PrimeField, x: FieldElem, rng: &mut R) -> [ReplicatedShare; 3] {
    let x1 = f.sample(rng);
    let x2 = f.sample(rng);
    let x3 = f.sub(f.sub(x, x1), x2);
    share_from_components([x1, x2, x3])
}

/// Arranges three components `c` into per-party `(lo, hi)` pairs.
pub fn replicate<T: Copy>(c: [T; 3]) -> [(T, T); 3] {
    [(c[0], c[1]), (c[1], c[2]), (c[2], c[0])]
}

/// Field shares from explicit components.
pub fn share_from_components(c: [FieldElem; 3]) -> [ReplicatedShare; 3] {
    replicate(c).map(|(lo, hi)| ReplicatedShare { lo, hi })
}

/// Reconstructs from the shares of at least two parties.
///
/// `shares[i]` is party `i`'s share if present. Duplicated components held by
/// two present parties must agree.
pub fn open_shares(f: &PrimeField, shares: &[Option<ReplicatedShare>; 3]) -> Result<FieldElem> {
    let mut comp: [Option<FieldElem>; 3] = [None; 3];
    for (i, s) in shares.iter().enumerate() {
        let Some(s) = s else { continue };
        for (j, v) in [(i, s.lo), (next(i), s.hi)] {
            match comp[j] {
                Some(prev) if prev != v => {
                    return Err(Error::InconsistentShares(format!("component {j} disagrees")));
                }
                _ => comp[j] = Some(v),
            }
        }
    }
    let mut acc = FieldElem::ZERO;
    for c in comp {
        let c = c.ok_or_else(|| Error::InconsistentShares("fewer than two shares".into()))?;
        acc = f.add(acc, c);
    }
    Ok(acc)
}

/// Reconstructs from all three shares.
pub fn open3(f: &PrimeField, s: &[ReplicatedShare; 3]) -> Result<FieldElem> {
    open_shares(f, &[Some(s[0]), Some(s[1]), Some(s[2])])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn field(l: u32) -> PrimeField {
        PrimeField::for_input_bits(l).unwrap()
    }

    #[test]
    fn zero_roundtrip() {
        let f = field(32);
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        assert_eq!(open3(&f, &share(&f, FieldElem::ZERO, &mut rng)).unwrap(), FieldElem::ZERO);
    }

    #[test]
    fn exhaustive_l8_roundtrip() {
        let f = field(8);
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for x in 0..256u64 {
            let s = share(&f, f.from_u64(x), &mut rng);
            assert_eq!(open3(&f, &s).unwrap().value(), x as u128);
            // any two parties suffice
            for skip in 0..3 {
                let mut o = [Some(s[0]), Some(s[1]), Some(s[2])];
                o[skip] = None;
                assert_eq!(open_shares(&f, &o).unwrap().value(), x as u128);
            }
        }
    }

    #[test]
    fn random_roundtrip_and_linearity() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for l in [32, 64] {
            let f = field(l);
            for _ in 0..1000 {
                let (a, x, y) = (f.sample(&mut rng), f.sample(&mut rng), f.sample(&mut rng));
                let sx = share(&f, x, &mut rng);
                let sy = share(&f, y, &mut rng);
                assert_eq!(open3(&f, &sx).unwrap(), x);
                let z: Vec<_> = (0..3).map(|i| sx[i].axpy(&f, a, sy[i])).collect();
                let z = [z[0], z[1], z[2]];
                assert_eq!(open3(&f, &z).unwrap(), f.add(f.mul(a, x), y));
            }
        }
    }

    #[test]
    fn small_local_ops() {
        let f = field(32);
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let s3 = share(&f, f.from_u64(3), &mut rng);
        let s4 = share(&f, f.from_u64(4), &mut rng);
        let sum = [0, 1, 2].map(|i| s3[i].add(&f, s4[i]));
        assert_eq!(open3(&f, &sum).unwrap().value(), 7);
        let same = [0, 1, 2].map(|i| s3[i].axpy(&f, FieldElem::ONE, ReplicatedShare::ZERO));
        assert_eq!(open3(&f, &same).unwrap().value(), 3);
        let only_y = [0, 1, 2].map(|i| s3[i].axpy(&f, FieldElem::ZERO, s4[i]));
        assert_eq!(open3(&f, &only_y).unwrap().value(), 4);
        let c = [0, 1, 2].map(|i| s3[i].add_const(&f, i, f.from_u64(10)));
        assert_eq!(open3(&f, &c).unwrap().value(), 13);
    }

    #[test]
    fn local_products_sum_to_product() {
        let f = field(64);
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let (x, y) = (f.sample(&mut rng), f.sample(&mut rng));
        let sx = share(&f, x, &mut rng);
        let sy = share(&f, y, &mut rng);
        let z = (0..3).fold(FieldElem::ZERO, |acc, i| f.add(acc, sx[i].mul_local(&f, sy[i])));
        assert_eq!(z, f.mul(x, y));
    }

    #[test]
    fn tamper_detected() {
        let f = field(32);
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let mut s = share(&f, f.from_u64(42), &mut rng);
        assert_eq!(open3(&f, &s).unwrap().value(), 42);
        s[1].hi = f.add(s[1].hi, FieldElem::ONE);
        assert!(matches!(open3(&f, &s), Err(Error::InconsistentShares(_))));
    }

    #[test]
    fn single_party_view_is_uniform() {
        // chi-square over 16 buckets of each coordinate of party 0's pair for x = 7
        let f = field(32);
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let trials = 100_000;
        let mut lo = [0u64; 16];
        let mut hi = [0u64; 16];
        let x = f.from_u64(7);
        for _ in 0..trials {
            let s = share(&f, x, &mut rng)[0];
            lo[(s.lo.value() * 16 / f.modulus()) as usize] += 1;
            hi[(s.hi.value() * 16 / f.modulus()) as usize] += 1;
        }
        for counts in [lo, hi] {
            let e = trials as f64 / 16.0;
            let chi: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
            // 15 degrees of freedom, p = 0.01 critical value
            assert!(chi < 30.578, "chi-square {chi}");
        }
    }

    #[test]
    fn component_placement() {
        let f = field(32);
        let v = f.from_u64(9);
        for comp in 0..3 {
            let s = [0, 1, 2].map(|i| {
                let knows = i == comp || next(i) == comp;
                ReplicatedShare::from_component(i, comp, knows.then_some(v))
            });
            assert_eq!(open3(&f, &s).unwrap(), v);
        }
    }
}
