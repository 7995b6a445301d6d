//! Comparison, equality and bit decomposition over shared field elements.
//!
//! All three protocols mask the input with a [`BitwiseMask`], open the masked
//! value and finish with a binary circuit over the mask's XOR-shared bits. The
//! circuit's output bit is brought back to the field with a one-bit mask.

use std::io::{Read, Write};
use std::path::Path;

use crate::binary::{width_mask, BitShare};
use crate::error::{Error, Result};
use crate::field::{FieldElem, PrimeField};
use crate::prss::domain;
use crate::session::{Party, Share};

/// A shared value constrained to `{0, 1}`.
pub type SharedBit = Share;

/// A random `r` shared arithmetically, bit by bit, and as an XOR-shared word.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitwiseMask {
    pub r: Share,
    pub bits: Vec<Share>,
    pub word: BitShare,
}

#[derive(Debug, Default)]
struct SubPool {
    nbits: u32,
    items: Vec<Option<BitwiseMask>>,
    cursor: usize,
}

impl SubPool {
    fn push(&mut self, nbits: u32, masks: Vec<BitwiseMask>) {
        if self.items.is_empty() {
            self.nbits = nbits;
        }
        assert_eq!(self.nbits, nbits, "mask width changed within a pool");
        self.items.extend(masks.into_iter().map(Some));
    }

    fn remaining(&self) -> usize {
        self.items[self.cursor.min(self.items.len())..].iter().filter(|m| m.is_some()).count()
    }

    fn take(&mut self) -> Result<BitwiseMask> {
        while self.cursor < self.items.len() {
            let i = self.cursor;
            self.cursor += 1;
            if let Some(m) = self.items[i].take() {
                return Ok(m);
            }
        }
        Err(Error::MaskExhausted)
    }

    fn take_at(&mut self, idx: usize) -> Result<BitwiseMask> {
        match self.items.get_mut(idx) {
            None => Err(Error::MaskExhausted),
            Some(slot) => slot.take().ok_or(Error::MaskReuse(idx)),
        }
    }
}

/// Offline masks owned by one party: wide masks of `l + 2` bits and single-bit
/// masks used for converting a binary result bit to the field.
#[derive(Debug, Default)]
pub struct MaskPool {
    wide: SubPool,
    single: SubPool,
}

const POOL_MAGIC: &[u8; 8] = b"PLEMMASK";
const POOL_VERSION: u16 = 1;

impl MaskPool {
    pub fn push_wide(&mut self, nbits: u32, masks: Vec<BitwiseMask>) {
        self.wide.push(nbits, masks);
    }

    pub fn push_single(&mut self, masks: Vec<BitwiseMask>) {
        self.single.push(1, masks);
    }

    pub fn remaining_wide(&self) -> usize {
        self.wide.remaining()
    }

    pub fn remaining_single(&self) -> usize {
        self.single.remaining()
    }

    pub fn take_wide(&mut self) -> Result<BitwiseMask> {
        self.wide.take()
    }

    pub fn take_single(&mut self) -> Result<BitwiseMask> {
        self.single.take()
    }

    /// Takes a specific wide mask; a consumed slot yields [`Error::MaskReuse`].
    pub fn take_wide_at(&mut self, idx: usize) -> Result<BitwiseMask> {
        self.wide.take_at(idx)
    }

    fn ensure(&self, wide: usize, single: usize) -> Result<()> {
        if self.remaining_wide() < wide || self.remaining_single() < single {
            return Err(Error::MaskExhausted);
        }
        Ok(())
    }

    /// Writes the unconsumed masks to `path`.
    ///
    /// Layout: magic, version u16, party u8, modulus u128, section count u8, then
    /// per section: kind u8, bit count u32, record count u64, records. A record
    /// is `r` (two field elements), the word (two u128), then one field pair per bit.
    pub fn save(&self, path: &Path, field: &PrimeField, party: usize) -> Result<()> {
        let mut out = Vec::new();
        out.extend_from_slice(POOL_MAGIC);
        out.extend_from_slice(&POOL_VERSION.to_le_bytes());
        out.push(party as u8);
        out.extend_from_slice(&field.modulus().to_le_bytes());
        out.push(2);
        for (kind, sub) in [(0u8, &self.wide), (1u8, &self.single)] {
            let live: Vec<&BitwiseMask> = sub.items.iter().flatten().collect();
            out.push(kind);
            out.extend_from_slice(&sub.nbits.to_le_bytes());
            out.extend_from_slice(&(live.len() as u64).to_le_bytes());
            for m in live {
                field.encode_into(m.r.lo, &mut out);
                field.encode_into(m.r.hi, &mut out);
                out.extend_from_slice(&m.word.lo.to_le_bytes());
                out.extend_from_slice(&m.word.hi.to_le_bytes());
                for b in &m.bits {
                    field.encode_into(b.lo, &mut out);
                    field.encode_into(b.hi, &mut out);
                }
            }
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(&out)?;
        Ok(())
    }

    /// Reads a pool written by [`MaskPool::save`] for the same field and party.
    pub fn load(path: &Path, field: &PrimeField, party: usize) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        let mut rd = Reader { b: &buf, pos: 0 };
        if rd.take(8)? != POOL_MAGIC {
            return Err(Error::Malformed("not a mask pool file".into()));
        }
        let version = u16::from_le_bytes(rd.take(2)?.try_into().unwrap());
        if version != POOL_VERSION {
            return Err(Error::Malformed(format!("mask pool version {version}")));
        }
        if rd.take(1)?[0] as usize != party {
            return Err(Error::Malformed("mask pool belongs to another party".into()));
        }
        if u128::from_le_bytes(rd.take(16)?.try_into().unwrap()) != field.modulus() {
            return Err(Error::Malformed("mask pool modulus mismatch".into()));
        }
        let sections = rd.take(1)?[0];
        let mut pool = MaskPool::default();
        let w = field.byte_width();
        for _ in 0..sections {
            let kind = rd.take(1)?[0];
            let nbits = u32::from_le_bytes(rd.take(4)?.try_into().unwrap());
            let count = u64::from_le_bytes(rd.take(8)?.try_into().unwrap()) as usize;
            let mut masks = Vec::with_capacity(count);
            for _ in 0..count {
                let r = Share::new(field.decode(rd.take(w)?)?, field.decode(rd.take(w)?)?);
                let lo = u128::from_le_bytes(rd.take(16)?.try_into().unwrap());
                let hi = u128::from_le_bytes(rd.take(16)?.try_into().unwrap());
                let mut bits = Vec::with_capacity(nbits as usize);
                for _ in 0..nbits {
                    bits.push(Share::new(field.decode(rd.take(w)?)?, field.decode(rd.take(w)?)?));
                }
                masks.push(BitwiseMask { r, bits, word: BitShare::new(lo, hi) });
            }
            match kind {
                0 => pool.wide.push(nbits, masks),
                1 => pool.single.push(nbits, masks),
                k => return Err(Error::Malformed(format!("mask section kind {k}"))),
            }
        }
        if rd.pos != buf.len() {
            return Err(Error::Malformed("trailing bytes in mask pool".into()));
        }
        Ok(pool)
    }
}

struct Reader<'a> {
    b: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.b.len() {
            return Err(Error::Malformed("truncated mask pool".into()));
        }
        let s = &self.b[self.pos..end];
        self.pos = end;
        Ok(s)
    }
}

/// Bit width of the masks used for `l`-bit inputs.
pub fn mask_bits(field: &PrimeField) -> u32 {
    field.input_bits() + 2
}

/// Adder width that holds `c + p + 1 + (2^W - 1 - r)` with its carry-out at bit `W`.
fn adder_width(field: &PrimeField) -> u32 {
    field.modulus_bits() + 1
}

impl Party {
    /// Offline generation of `count` masks of `nbits` random bits.
    ///
    /// The XOR word's components come straight from the PRF keys; the field
    /// bits are obtained by two rounds of arithmetic XOR over those components.
    pub fn gen_masks(&mut self, count: usize, nbits: u32) -> Result<Vec<BitwiseMask>> {
        assert!((1..=self.field().input_bits() + 2).contains(&nbits), "mask width out of range");
        let f = *self.field();
        let id = self.id();
        let base = self.alloc_counters(count as u64);
        let m = width_mask(nbits);
        let words: Vec<BitShare> = (0..count as u64)
            .map(|k| {
                BitShare::new(
                    self.seeds.lo.block(domain::MASK_BITS, base + k, 0) & m,
                    self.seeds.hi.block(domain::MASK_BITS, base + k, 0) & m,
                )
            })
            .collect();
        // field shares of each component bit, known to the pair owning it
        let comp_bit = |w: &BitShare, comp: usize, k: u32| -> Share {
            let v = if comp == id {
                Some((w.lo >> k) & 1)
            } else if comp == (id + 1) % 3 {
                Some((w.hi >> k) & 1)
            } else {
                None
            };
            Share::from_component(id, comp, v.map(|b| f.elem(b)))
        };
        let n = count * nbits as usize;
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        let mut c = Vec::with_capacity(n);
        for w in &words {
            for k in 0..nbits {
                a.push(comp_bit(w, 0, k));
                b.push(comp_bit(w, 1, k));
                c.push(comp_bit(w, 2, k));
            }
        }
        let two = f.from_u64(2);
        let ab = self.mul(&a, &b)?;
        let u: Vec<Share> = (0..n).map(|i| a[i].add(&f, b[i]).sub(&f, ab[i].scale(&f, two))).collect();
        let uc = self.mul(&u, &c)?;
        let bits: Vec<Share> = (0..n).map(|i| u[i].add(&f, c[i]).sub(&f, uc[i].scale(&f, two))).collect();
        Ok(words
            .into_iter()
            .enumerate()
            .map(|(j, word)| {
                let bs = bits[j * nbits as usize..(j + 1) * nbits as usize].to_vec();
                let r = bs
                    .iter()
                    .enumerate()
                    .fold(Share::ZERO, |acc, (k, s)| acc.add(&f, s.scale(&f, f.pow2(k as u32))));
                BitwiseMask { r, bits: bs, word }
            })
            .collect())
    }

    /// Fills the pool with `wide` masks of `l + 2` bits and `single` one-bit masks.
    pub fn preprocess_masks(&mut self, wide: usize, single: usize) -> Result<()> {
        let nb = mask_bits(self.field());
        if wide > 0 {
            let w = self.gen_masks(wide, nb)?;
            self.masks.push_wide(nb, w);
        }
        if single > 0 {
            let s = self.gen_masks(single, 1)?;
            self.masks.push_single(s);
        }
        Ok(())
    }

    /// Generates only what the pool lacks for `wide` and `single` masks, so a
    /// pool loaded from disk is used before any fresh masks are made.
    pub fn top_up_masks(&mut self, wide: usize, single: usize) -> Result<()> {
        let w = wide.saturating_sub(self.masks.remaining_wide());
        let s = single.saturating_sub(self.masks.remaining_single());
        self.preprocess_masks(w, s)
    }

    /// Converts bit 0 of each XOR-shared word to a field share, one round.
    pub fn b2a(&mut self, bits: &[BitShare]) -> Result<Vec<SharedBit>> {
        self.masks.ensure(0, bits.len())?;
        let ds: Vec<BitwiseMask> = (0..bits.len()).map(|_| self.masks.take_single()).collect::<Result<_>>()?;
        let masked: Vec<BitShare> = bits.iter().zip(&ds).map(|(b, d)| b.bit(0).xor(d.word)).collect();
        let e = self.open_bits(&masked, 1)?;
        let f = *self.field();
        Ok(ds
            .iter()
            .zip(e)
            .map(|(d, e)| if e == 1 { d.bits[0].neg(&f).add_const(&f, self.id(), FieldElem::ONE) } else { d.bits[0] })
            .collect())
    }

    /// Kogge-Stone carry computation for `a + b` with public `a`.
    ///
    /// Returns the propagate word `a ^ b` and the final generate word, whose bit
    /// `i` is the carry out of position `i`.
    fn carries(&mut self, a: &[u128], b: &[BitShare], width: u32) -> Result<(Vec<BitShare>, Vec<BitShare>)> {
        let id = self.id();
        let m = width_mask(width);
        let p0: Vec<BitShare> = a.iter().zip(b).map(|(&a, b)| b.xor_const(id, a).mask(width)).collect();
        let mut g: Vec<BitShare> = a.iter().zip(b).map(|(&a, b)| b.and_const(a & m)).collect();
        let mut p = p0.clone();
        let n = a.len();
        let mut s = 1;
        while s < width {
            let last = s * 2 >= width;
            let mut lhs: Vec<BitShare> = p.clone();
            let mut rhs: Vec<BitShare> = g.iter().map(|g| g.shl(s).mask(width)).collect();
            if !last {
                lhs.extend(p.iter().copied());
                rhs.extend(p.iter().map(|p| p.shl(s).mask(width)));
            }
            let prod = self.and_bits(&lhs, &rhs, width)?;
            for i in 0..n {
                g[i] = g[i].xor(prod[i]);
            }
            if !last {
                p = prod[n..].to_vec();
            }
            s *= 2;
        }
        Ok((p0, g))
    }

    /// Opens `a + r` for each input and evaluates both candidate differences
    /// `c - r` and `c + p - r` in binary. Returns, per input, the two sums'
    /// shares (bits above position 0 are the difference bits) and the wrap bit
    /// (`1` when `c < r`, meaning the second candidate is correct).
    fn unmask(&mut self, a: &[Share], masks: &[BitwiseMask]) -> Result<Vec<(BitShare, BitShare, BitShare)>> {
        let f = *self.field();
        let id = self.id();
        let masked: Vec<Share> = a.iter().zip(masks).map(|(a, m)| a.add(&f, m.r)).collect();
        let c = self.open(&masked)?;
        let w = adder_width(&f);
        let wm = width_mask(w);
        let mut pub_a = Vec::with_capacity(2 * a.len());
        let mut sec_b = Vec::with_capacity(2 * a.len());
        for (c, m) in c.iter().zip(masks) {
            let nr = m.word.xor_const(id, wm);
            pub_a.push(c.value() + 1);
            sec_b.push(nr);
            pub_a.push(c.value() + f.modulus() + 1);
            sec_b.push(nr);
        }
        let (p0, g) = self.carries(&pub_a, &sec_b, w + 1)?;
        let n = a.len();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let s0 = p0[2 * i].xor(g[2 * i].shl(1)).mask(w + 1);
            let s1 = p0[2 * i + 1].xor(g[2 * i + 1].shl(1)).mask(w + 1);
            // carry out at bit w means c >= r
            let wrap = s0.bit(w).xor_const(id, 1);
            out.push((s0.mask(w), s1.mask(w), wrap));
        }
        Ok(out)
    }

    /// `[x < y]` for inputs below `2^l`.
    pub fn lt(&mut self, x: &[Share], y: &[Share]) -> Result<Vec<SharedBit>> {
        assert_eq!(x.len(), y.len(), "lt operands differ in length");
        let n = x.len();
        self.masks.ensure(n, n)?;
        let f = *self.field();
        let l = f.input_bits();
        let id = self.id();
        let masks: Vec<BitwiseMask> = (0..n).map(|_| self.masks.take_wide()).collect::<Result<_>>()?;
        let shift = f.pow2(l);
        let a: Vec<Share> = x.iter().zip(y).map(|(x, y)| x.sub(&f, *y).add_const(&f, id, shift)).collect();
        let cand = self.unmask(&a, &masks)?;
        // bit l of the true difference: pick candidate 1 where wrap is set
        let t0: Vec<BitShare> = cand.iter().map(|(s0, _, _)| s0.bit(l)).collect();
        let d: Vec<BitShare> = cand.iter().map(|(s0, s1, _)| s0.bit(l).xor(s1.bit(l))).collect();
        let wrap: Vec<BitShare> = cand.iter().map(|(_, _, w)| *w).collect();
        let sel = self.and_bits(&wrap, &d, 1)?;
        let ge: Vec<BitShare> = t0.iter().zip(sel).map(|(t, s)| t.xor(s)).collect();
        let ge = self.b2a(&ge)?;
        Ok(ge.into_iter().map(|b| b.neg(&f).add_const(&f, id, FieldElem::ONE)).collect())
    }

    /// `[x == y]` via a zero test of the masked difference.
    pub fn eq(&mut self, x: &[Share], y: &[Share]) -> Result<Vec<SharedBit>> {
        assert_eq!(x.len(), y.len(), "eq operands differ in length");
        let n = x.len();
        self.masks.ensure(n, n)?;
        let f = *self.field();
        let id = self.id();
        let nb = mask_bits(&f);
        let masks: Vec<BitwiseMask> = (0..n).map(|_| self.masks.take_wide()).collect::<Result<_>>()?;
        let masked: Vec<Share> = x.iter().zip(y).zip(&masks).map(|((x, y), m)| x.sub(&f, *y).add(&f, m.r)).collect();
        let c = self.open(&masked)?;
        // x == y iff c == r; c above the mask width can never equal r
        let public_ne: Vec<bool> = c.iter().map(|c| c.value() >> nb != 0).collect();
        let mut v: Vec<BitShare> = c.iter().zip(&masks).map(|(c, m)| m.word.xor_const(id, c.value() & width_mask(nb))).collect();
        let mut span = 1;
        while span < nb {
            let shifted: Vec<BitShare> = v.iter().map(|w| w.shr(span)).collect();
            let both = self.and_bits(&v, &shifted, nb)?;
            for i in 0..n {
                v[i] = v[i].xor(shifted[i]).xor(both[i]);
            }
            span *= 2;
        }
        let z: Vec<BitShare> = v.iter().map(|w| w.bit(0).xor_const(id, 1)).collect();
        let eq = self.b2a(&z)?;
        Ok(eq
            .into_iter()
            .zip(public_ne)
            .map(|(e, ne)| if ne { Share::ZERO } else { e })
            .collect())
    }

    /// Field shares of the low `l` bits of each input (inputs below `2^l`).
    ///
    /// Consumes two wide masks per input: one to open the masked value and one
    /// to convert the recovered bits back to the field.
    pub fn bit_decompose(&mut self, x: &[Share]) -> Result<Vec<Vec<SharedBit>>> {
        let n = x.len();
        self.masks.ensure(2 * n, 0)?;
        let f = *self.field();
        let l = f.input_bits();
        let id = self.id();
        let first: Vec<BitwiseMask> = (0..n).map(|_| self.masks.take_wide()).collect::<Result<_>>()?;
        let second: Vec<BitwiseMask> = (0..n).map(|_| self.masks.take_wide()).collect::<Result<_>>()?;
        let cand = self.unmask(x, &first)?;
        // bit 0 of the sums is the true low bit because the adders computed c - r directly
        let s0: Vec<BitShare> = cand.iter().map(|(s0, _, _)| s0.mask(l)).collect();
        let d: Vec<BitShare> = cand.iter().map(|(s0, s1, _)| s0.xor(*s1).mask(l)).collect();
        let wb: Vec<BitShare> = cand.iter().map(|(_, _, w)| w.broadcast(l)).collect();
        let sel = self.and_bits(&wb, &d, l)?;
        let words: Vec<BitShare> = s0.iter().zip(sel).map(|(a, s)| a.xor(s)).collect();
        let masked: Vec<BitShare> = words.iter().zip(&second).map(|(w, m)| w.xor(m.word).mask(l)).collect();
        let e = self.open_bits(&masked, l)?;
        Ok(e.iter()
            .zip(&second)
            .map(|(&e, m)| {
                (0..l)
                    .map(|k| {
                        let d = m.bits[k as usize];
                        if (e >> k) & 1 == 1 {
                            d.neg(&f).add_const(&f, id, FieldElem::ONE)
                        } else {
                            d
                        }
                    })
                    .collect()
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::run3;
    use crate::share::{open3, share};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn dealt(f: &PrimeField, vals: &[u128], seed: u64) -> Vec<[Share; 3]> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        vals.iter().map(|&v| share(f, f.elem(v), &mut rng)).collect()
    }

    fn col(v: &[[Share; 3]], i: usize) -> Vec<Share> {
        v.iter().map(|s| s[i]).collect()
    }

    #[test]
    fn masks_recompose() {
        let f = PrimeField::for_input_bits(32).unwrap();
        let out = run3(f, 1, |p| {
            let m = p.gen_masks(300, 34)?;
            let r: Vec<_> = m.iter().map(|m| m.r).collect();
            let bits: Vec<_> = m.iter().flat_map(|m| m.bits.clone()).collect();
            let words: Vec<_> = m.iter().map(|m| m.word).collect();
            Ok((p.open(&r)?, p.open(&bits)?, p.open_bits(&words, 34)?))
        })
        .unwrap();
        let (r, bits, words) = &out[0];
        for j in 0..300 {
            let mut acc = 0u128;
            for k in 0..34 {
                let b = bits[j * 34 + k].value();
                assert!(b <= 1);
                acc |= b << k;
            }
            assert_eq!(acc, r[j].value());
            assert_eq!(words[j], r[j].value());
        }
        // top bit of a 34-bit mask is set about half the time
        let high = r.iter().filter(|v| v.value() >> 33 == 1).count();
        assert!((100..200).contains(&high));
    }

    #[test]
    fn lt_small_cases() {
        let f = PrimeField::for_input_bits(32).unwrap();
        let xs = dealt(&f, &[3, 7, 0, (1 << 32) - 1, 5], 2);
        let ys = dealt(&f, &[5, 7, 0, 0, (1 << 32) - 1], 3);
        let out = run3(f, 2, |p| {
            p.preprocess_masks(5, 5)?;
            let c = p.lt(&col(&xs, p.id()), &col(&ys, p.id()))?;
            p.open(&c)
        })
        .unwrap();
        let got: Vec<u128> = out[0].iter().map(|v| v.value()).collect();
        assert_eq!(got, vec![1, 0, 0, 0, 1]);
    }

    #[test]
    fn lt_eq_exhaustive_l6() {
        let f = PrimeField::for_input_bits(6).unwrap();
        let mut xv = vec![];
        let mut yv = vec![];
        for x in 0..64u128 {
            for y in 0..64u128 {
                xv.push(x);
                yv.push(y);
            }
        }
        let xs = dealt(&f, &xv, 4);
        let ys = dealt(&f, &yv, 5);
        let n = xv.len();
        let out = run3(f, 3, |p| {
            p.preprocess_masks(2 * n, 2 * n)?;
            let i = p.id();
            let lt = p.lt(&col(&xs, i), &col(&ys, i))?;
            let eq = p.eq(&col(&xs, i), &col(&ys, i))?;
            Ok((p.open(&lt)?, p.open(&eq)?))
        })
        .unwrap();
        let (lt, eq) = &out[1];
        for k in 0..n {
            assert_eq!(lt[k].value(), (xv[k] < yv[k]) as u128, "lt {} {}", xv[k], yv[k]);
            assert_eq!(eq[k].value(), (xv[k] == yv[k]) as u128, "eq {} {}", xv[k], yv[k]);
        }
    }

    #[test]
    fn lt_eq_random_wide() {
        for l in [32u32, 64] {
            let f = PrimeField::for_input_bits(l).unwrap();
            let mut rng = ChaCha12Rng::seed_from_u64(l as u64);
            let n = 10_000;
            let top = 1u128 << l;
            let mut xv: Vec<u128> = (0..n).map(|_| rng.gen::<u128>() % top).collect();
            let mut yv: Vec<u128> = (0..n).map(|_| rng.gen::<u128>() % top).collect();
            // plenty of equal and near-equal pairs
            for k in 0..n / 10 {
                yv[k] = xv[k];
                xv[k + n / 10] = yv[k + n / 10].saturating_add(1) % top;
            }
            let xs = dealt(&f, &xv, 6);
            let ys = dealt(&f, &yv, 7);
            let out = run3(f, 4, |p| {
                p.preprocess_masks(2 * n, 2 * n)?;
                let i = p.id();
                let lt = p.lt(&col(&xs, i), &col(&ys, i))?;
                let eq = p.eq(&col(&xs, i), &col(&ys, i))?;
                Ok((p.open(&lt)?, p.open(&eq)?))
            })
            .unwrap();
            for k in 0..n {
                assert_eq!(out[0].0[k].value(), (xv[k] < yv[k]) as u128);
                assert_eq!(out[0].1[k].value(), (xv[k] == yv[k]) as u128);
            }
        }
    }

    #[test]
    fn batching_does_not_add_rounds() {
        let f = PrimeField::for_input_bits(64).unwrap();
        let xs = dealt(&f, &(0..50).collect::<Vec<_>>(), 8);
        let out = run3(f, 5, |p| {
            p.preprocess_masks(51, 51)?;
            let i = p.id();
            let r0 = p.rounds();
            p.lt(&col(&xs[..1], i), &col(&xs[1..2], i))?;
            let one = p.rounds() - r0;
            let r1 = p.rounds();
            p.lt(&col(&xs, i), &col(&xs, i))?;
            Ok((one, p.rounds() - r1))
        })
        .unwrap();
        assert_eq!(out[0].0, out[0].1);
        assert!(out[0].0 <= 12);
    }

    #[test]
    fn bit_decompose_matches() {
        let f = PrimeField::for_input_bits(32).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let mut xv: Vec<u128> = (0..200).map(|_| rng.gen::<u32>() as u128).collect();
        xv.extend([0, 1, u32::MAX as u128]);
        let xs = dealt(&f, &xv, 10);
        let out = run3(f, 6, |p| {
            p.preprocess_masks(2 * xv.len(), 0)?;
            let bits = p.bit_decompose(&col(&xs, p.id()))?;
            let flat: Vec<Share> = bits.into_iter().flatten().collect();
            p.open(&flat)
        })
        .unwrap();
        for (j, &x) in xv.iter().enumerate() {
            for k in 0..32 {
                assert_eq!(out[2][j * 32 + k].value(), (x >> k) & 1);
            }
        }
    }

    #[test]
    fn exhaustion_and_reuse() {
        let f = PrimeField::for_input_bits(32).unwrap();
        let xs = dealt(&f, &[1, 2], 11);
        let out = run3(f, 7, |p| {
            p.preprocess_masks(1, 1)?;
            let i = p.id();
            let e = p.lt(&col(&xs, i), &col(&xs, i));
            let first = p.masks.take_wide_at(0);
            let again = p.masks.take_wide_at(0);
            Ok((matches!(e, Err(Error::MaskExhausted)), first.is_ok(), matches!(again, Err(Error::MaskReuse(0)))))
        })
        .unwrap();
        assert_eq!(out[0], (true, true, true));
    }

    #[test]
    fn pool_file_roundtrip() {
        let f = PrimeField::for_input_bits(64).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let dirp = dir.path().to_path_buf();
        let xs = dealt(&f, &[10, 20, 30], 12);
        let ys = dealt(&f, &[20, 20, 20], 13);
        let out = run3(f, 8, |p| {
            p.preprocess_masks(5, 5)?;
            let path = dirp.join(format!("pool{}.bin", p.id()));
            p.masks.save(&path, p.field(), p.id())?;
            p.masks = MaskPool::load(&path, p.field(), p.id())?;
            let c = p.lt(&col(&xs, p.id()), &col(&ys, p.id()))?;
            Ok((p.open(&c)?, p.masks.remaining_wide()))
        })
        .unwrap();
        assert_eq!(out[0].0.iter().map(|v| v.value()).collect::<Vec<_>>(), vec![1, 0, 0]);
        assert_eq!(out[0].1, 2);
        let wrong = MaskPool::load(&dir.path().join("pool0.bin"), &f, 1);
        assert!(wrong.is_err());
    }

    #[test]
    fn outputs_are_bits() {
        let f = PrimeField::for_input_bits(32).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(14);
        let v: Vec<u128> = (0..100).map(|_| rng.gen::<u32>() as u128).collect();
        let xs = dealt(&f, &v, 15);
        let ys = dealt(&f, &v.iter().rev().copied().collect::<Vec<_>>(), 16);
        let out = run3(f, 9, |p| {
            p.preprocess_masks(100, 100)?;
            let c = p.lt(&col(&xs, p.id()), &col(&ys, p.id()))?;
            Ok(c)
        })
        .unwrap();
        for k in 0..100 {
            let b = open3(&f, &[out[0][k], out[1][k], out[2][k]]).unwrap();
            assert_eq!(f.mul(b, f.sub(FieldElem::ONE, b)), FieldElem::ZERO);
        }
    }
}
