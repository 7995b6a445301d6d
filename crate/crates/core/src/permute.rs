//! Oblivious shuffle and sort of shared tables.
//!
//! A shuffle is three resharing legs. In leg `a` the pair `(a, a+1)` shares
//! PRF key `K_{a+1}`, derives a permutation from it and hands the third party
//! a fresh sharing of the permuted rows. No single server knows the composed
//! permutation.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha12Rng;

use crate::ec::{decode_points, encode_points, mul_g, random_scalar, ProjectivePoint, SharedPoint};
use crate::error::{Error, Result};
use crate::field::{FieldElem, PrimeField};
use crate::net::frame::PayloadKind;
use crate::prss::domain;
use crate::session::{Party, Share};
use crate::share::{next, prev};

/// Column-major shared table. Field and point columns are permuted together.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SharedVector {
    rows: usize,
    pub field_cols: Vec<Vec<Share>>,
    pub point_cols: Vec<Vec<SharedPoint>>,
}

impl SharedVector {
    pub fn new(field_cols: Vec<Vec<Share>>, point_cols: Vec<Vec<SharedPoint>>) -> Self {
        let rows = field_cols
            .first()
            .map(Vec::len)
            .or_else(|| point_cols.first().map(Vec::len))
            .unwrap_or(0);
        assert!(
            field_cols.iter().all(|c| c.len() == rows) && point_cols.iter().all(|c| c.len() == rows),
            "ragged shared table"
        );
        SharedVector { rows, field_cols, point_cols }
    }

    pub fn from_fields(cols: Vec<Vec<Share>>) -> Self {
        Self::new(cols, Vec::new())
    }

    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    /// Rows reordered so that row `k` moves to position `dest[k]`.
    fn place(&self, dest: &[usize]) -> Self {
        SharedVector {
            rows: self.rows,
            field_cols: self.field_cols.iter().map(|c| scatter(c, dest)).collect(),
            point_cols: self.point_cols.iter().map(|c| scatter(c, dest)).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SortOrder {
    Ascending,
    Descending,
}

fn gather<T: Copy>(col: &[T], pi: &[usize]) -> Vec<T> {
    pi.iter().map(|&j| col[j]).collect()
}

fn scatter<T: Copy + Default>(col: &[T], dest: &[usize]) -> Vec<T> {
    let mut out = vec![T::default(); col.len()];
    for (v, &d) in col.iter().zip(dest) {
        out[d] = *v;
    }
    out
}

/// Checks that opened destinations form a permutation of `0..m`.
fn as_permutation(f: &PrimeField, vals: &[FieldElem]) -> Result<Vec<usize>> {
    let m = vals.len();
    let mut seen = vec![false; m];
    let mut out = Vec::with_capacity(m);
    for v in vals {
        let d = f.to_signed(*v);
        if d < 0 || d as usize >= m || seen[d as usize] {
            return Err(Error::InconsistentShares(format!("opened position {d} is not a permutation entry")));
        }
        seen[d as usize] = true;
        out.push(d as usize);
    }
    Ok(out)
}

struct LegStreams {
    perm: Vec<usize>,
    out: ChaCha12Rng,
    mask: ChaCha12Rng,
}

fn field_stream(f: &PrimeField, rng: &mut ChaCha12Rng, n: usize) -> Vec<FieldElem> {
    (0..n).map(|_| f.sample(rng)).collect()
}

fn point_stream(rng: &mut ChaCha12Rng, n: usize) -> Vec<ProjectivePoint> {
    (0..n).map(|_| mul_g(&random_scalar(rng))).collect()
}

impl Party {
    /// Uniformly permutes the rows of `v`. Three rounds; per field column each
    /// round moves `2m` elements in total.
    pub fn shuffle(&mut self, v: &SharedVector) -> Result<SharedVector> {
        let mut cur = v.clone();
        for a in 0..3 {
            cur = self.shuffle_leg(a, cur)?;
        }
        Ok(cur)
    }

    fn leg_streams(&self, dom_key_hi: bool, c: u64, m: usize) -> LegStreams {
        let prf = if dom_key_hi { &self.seeds.hi } else { &self.seeds.lo };
        let mut perm: Vec<usize> = (0..m).collect();
        perm.shuffle(&mut prf.rng(domain::SHUFFLE_PERM, c));
        LegStreams { perm, out: prf.rng(domain::SHUFFLE_OUT, c), mask: prf.rng(domain::SHUFFLE_MASK, c) }
    }

    fn shuffle_leg(&mut self, a: usize, v: SharedVector) -> Result<SharedVector> {
        let c = self.alloc_counters(1);
        let id = self.id();
        let f = *self.field();
        let m = v.rows;
        let (nf, np) = (v.field_cols.len(), v.point_cols.len());
        let b = next(a);
        let third = prev(a);

        if id == third {
            let mut recvs = Vec::new();
            for from in [a, b] {
                if nf > 0 {
                    recvs.push((from, PayloadKind::Field));
                }
                if np > 0 {
                    recvs.push((from, PayloadKind::Point));
                }
            }
            let got = self.exchange_mixed(Vec::new(), &recvs)?;
            let per = got.len() / 2;
            let (from_a, from_b) = got.split_at(per);
            let (fa, pa) = decode_leg(&f, from_a, nf, np, m)?;
            let (fb, pb) = decode_leg(&f, from_b, nf, np, m)?;
            // component a comes from A and is our hi; component a+2 (ours) from B is lo
            let field_cols = fb
                .into_iter()
                .zip(fa)
                .map(|(lo, hi)| lo.into_iter().zip(hi).map(|(l, h)| Share::new(l, h)).collect())
                .collect();
            let point_cols = pb
                .into_iter()
                .zip(pa)
                .map(|(lo, hi)| lo.into_iter().zip(hi).map(|(l, h)| SharedPoint::new(l, h)).collect())
                .collect();
            return Ok(SharedVector { rows: m, field_cols, point_cols });
        }

        let is_a = id == a;
        let mut s = self.leg_streams(is_a, c, m);
        let mut field_cols = Vec::with_capacity(nf);
        let mut point_cols = Vec::with_capacity(np);
        let mut sent_f = Vec::with_capacity(nf * m);
        let mut sent_p = Vec::with_capacity(np * m);
        for col in &v.field_cols {
            let x: Vec<FieldElem> = col.iter().map(|s| if is_a { f.add(s.lo, s.hi) } else { s.hi }).collect();
            let x = gather(&x, &s.perm);
            let y1 = field_stream(&f, &mut s.out, m);
            let z = field_stream(&f, &mut s.mask, m);
            let new: Vec<Share> = if is_a {
                x.iter()
                    .zip(&y1)
                    .zip(&z)
                    .map(|((x, y1), z)| {
                        let y0 = f.sub(f.sub(*x, *y1), *z);
                        sent_f.push(y0);
                        Share::new(y0, *y1)
                    })
                    .collect()
            } else {
                x.iter()
                    .zip(&y1)
                    .zip(&z)
                    .map(|((x, y1), z)| {
                        let y2 = f.add(*x, *z);
                        sent_f.push(y2);
                        Share::new(*y1, y2)
                    })
                    .collect()
            };
            field_cols.push(new);
        }
        for col in &v.point_cols {
            let x: Vec<ProjectivePoint> = col.iter().map(|s| if is_a { s.lo + s.hi } else { s.hi }).collect();
            let x = gather(&x, &s.perm);
            let y1 = point_stream(&mut s.out, m);
            let z = point_stream(&mut s.mask, m);
            let new: Vec<SharedPoint> = x
                .iter()
                .zip(&y1)
                .zip(&z)
                .map(|((x, y1), z)| {
                    if is_a {
                        let y0 = *x - y1 - z;
                        sent_p.push(y0);
                        SharedPoint::new(y0, *y1)
                    } else {
                        let y2 = *x + z;
                        sent_p.push(y2);
                        SharedPoint::new(*y1, y2)
                    }
                })
                .collect();
            point_cols.push(new);
        }
        let mut sends = Vec::new();
        if nf > 0 {
            sends.push((third, PayloadKind::Field, f.encode_slice(&sent_f), sent_f.len() as u64));
        }
        if np > 0 {
            sends.push((third, PayloadKind::Point, encode_points(&sent_p), sent_p.len() as u64));
        }
        self.exchange_mixed(sends, &[])?;
        Ok(SharedVector { rows: m, field_cols, point_cols })
    }

    /// Sorts rows by the field column `key` (values below `2^l`). Ties end up
    /// in a uniformly random order.
    ///
    /// Consumes `2m` wide masks. The table itself is shuffled once; the radix
    /// passes only carry the key bits and a row index.
    pub fn sort_by_key(&mut self, v: &SharedVector, key: usize, order: SortOrder) -> Result<SharedVector> {
        let m = v.len();
        if m <= 1 {
            return Ok(v.clone());
        }
        let f = *self.field();
        let id = self.id();
        let idx: Vec<Share> = (0..m as u64).map(|i| self.constant_u64(i)).collect();
        let w = self.shuffle(&SharedVector::from_fields(vec![v.field_cols[key].clone(), idx]))?;
        let bits = self.bit_decompose(&w.field_cols[0])?;
        let l = f.input_bits() as usize;
        let one = self.constant_u64(1);
        let mut bitcols: Vec<Vec<Share>> = (0..l)
            .map(|b| {
                bits.iter()
                    .map(|row| match order {
                        SortOrder::Ascending => row[b],
                        SortOrder::Descending => one.sub(&f, row[b]),
                    })
                    .collect()
            })
            .collect();
        let mut idx = w.field_cols[1].clone();

        for b in 0..l {
            let x = std::mem::take(&mut bitcols[b]);
            // S1 prefix sums; S0_i = i + 1 - S1_i and Z = m - S1_{m-1}
            let mut s1 = Vec::with_capacity(m);
            let mut acc = Share::ZERO;
            for xi in &x {
                acc = acc.add(&f, *xi);
                s1.push(acc);
            }
            let z = self.constant_u64(m as u64).sub(&f, s1[m - 1]);
            let two = f.from_u64(2);
            let t: Vec<Share> = s1
                .iter()
                .enumerate()
                .map(|(i, s)| s.axpy(&f, two, z).add_const(&f, id, f.neg(f.from_u64(i as u64 + 1))))
                .collect();
            let prod = self.mul(&x, &t)?;
            let dest: Vec<Share> = s1
                .iter()
                .zip(&prod)
                .enumerate()
                .map(|(i, (s, p))| p.sub(&f, *s).add_const(&f, id, f.from_u64(i as u64)))
                .collect();
            let mut cols = vec![dest];
            cols.extend(bitcols.drain(b + 1..));
            cols.push(idx);
            let sh = self.shuffle(&SharedVector::from_fields(cols))?;
            let opened = self.open(&sh.field_cols[0])?;
            let d = as_permutation(&f, &opened)?;
            let mut placed = sh.place(&d).field_cols;
            idx = placed.pop().expect("index column");
            bitcols.truncate(b + 1);
            bitcols.extend(placed.drain(1..));
        }

        // position of every original row in the sorted order
        let s: Vec<Share> = (0..m as u64).map(|i| self.constant_u64(i)).collect();
        let sh = self.shuffle(&SharedVector::from_fields(vec![idx, s]))?;
        let orig = self.open(&sh.field_cols[0])?;
        let orig = as_permutation(&f, &orig)?;
        let pos = scatter(&sh.field_cols[1], &orig);

        let mut table = v.clone();
        table.field_cols.push(pos);
        let sh = self.shuffle(&table)?;
        let opened = self.open(sh.field_cols.last().expect("position column"))?;
        let d = as_permutation(&f, &opened)?;
        let mut out = sh.place(&d);
        out.field_cols.pop();
        Ok(out)
    }
}

type LegCols = (Vec<Vec<FieldElem>>, Vec<Vec<ProjectivePoint>>);

fn decode_leg(f: &PrimeField, frames: &[Vec<u8>], nf: usize, np: usize, m: usize) -> Result<LegCols> {
    let mut it = frames.iter();
    let mut fc = Vec::new();
    let mut pc = Vec::new();
    if nf > 0 {
        let v = f.decode_slice(it.next().expect("field frame"))?;
        if v.len() != nf * m {
            return Err(Error::Malformed("shuffle field payload length".into()));
        }
        fc = v.chunks(m.max(1)).map(<[FieldElem]>::to_vec).collect();
        fc.resize(nf, Vec::new());
    }
    if np > 0 {
        let v = decode_points(it.next().expect("point frame"))?;
        if v.len() != np * m {
            return Err(Error::Malformed("shuffle point payload length".into()));
        }
        pc = v.chunks(m.max(1)).map(<[ProjectivePoint]>::to_vec).collect();
        pc.resize(np, Vec::new());
    }
    Ok((fc, pc))
}
