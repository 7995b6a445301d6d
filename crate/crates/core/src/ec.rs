//! Replicated sharing over secp256k1: shared points, shared scalars mod `n`,
//! local linear maps and the one-round secret-scalar by secret-point product.

use k256::elliptic_curve::group::prime::PrimeCurveAffine;
use k256::elliptic_curve::group::{Curve, GroupEncoding};
use k256::elliptic_curve::ops::{MulByGenerator, Reduce};
use k256::elliptic_curve::PrimeField as _;
use k256::{AffinePoint, CompressedPoint, U256};
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};

pub use k256::{ProjectivePoint, Scalar};

use crate::error::{Error, Result};
use crate::net::frame::PayloadKind;
use crate::prss::domain;
use crate::session::Party;
use crate::share::{next, prev};

pub const POINT_LEN: usize = 33;
pub const SCALAR_LEN: usize = 32;

/// Compressed SEC1 encoding; the identity is 33 zero bytes.
pub fn encode_point(p: &ProjectivePoint) -> [u8; POINT_LEN] {
    encode_affine(&p.to_affine())
}

fn encode_affine(a: &AffinePoint) -> [u8; POINT_LEN] {
    let mut out = [0u8; POINT_LEN];
    if !bool::from(a.is_identity()) {
        out.copy_from_slice(&a.to_bytes());
    }
    out
}

/// Encodes many points with a single field inversion.
pub fn encode_points(ps: &[ProjectivePoint]) -> Vec<u8> {
    if ps.is_empty() {
        return Vec::new();
    }
    // batch inversion cannot take the identity, so it stands in as G
    let ident: Vec<bool> = ps.iter().map(|p| *p == ProjectivePoint::IDENTITY).collect();
    let fixed: Vec<ProjectivePoint> =
        ps.iter().zip(&ident).map(|(p, &i)| if i { ProjectivePoint::GENERATOR } else { *p }).collect();
    let mut aff = vec![AffinePoint::IDENTITY; ps.len()];
    ProjectivePoint::batch_normalize(&fixed, &mut aff);
    let mut out = Vec::with_capacity(ps.len() * POINT_LEN);
    for (a, &i) in aff.iter().zip(&ident) {
        if i {
            out.extend_from_slice(&[0u8; POINT_LEN]);
        } else {
            out.extend_from_slice(&encode_affine(a));
        }
    }
    out
}

pub fn decode_point(b: &[u8]) -> Result<ProjectivePoint> {
    if b.len() != POINT_LEN {
        return Err(Error::Malformed(format!("point of {} bytes", b.len())));
    }
    if b.iter().all(|&x| x == 0) {
        return Ok(ProjectivePoint::IDENTITY);
    }
    if b[0] != 0x02 && b[0] != 0x03 {
        return Err(Error::OffCurve);
    }
    let repr = CompressedPoint::clone_from_slice(b);
    Option::<AffinePoint>::from(AffinePoint::from_bytes(&repr))
        .map(ProjectivePoint::from)
        .ok_or(Error::OffCurve)
}

pub fn decode_points(b: &[u8]) -> Result<Vec<ProjectivePoint>> {
    if !b.len().is_multiple_of(POINT_LEN) {
        return Err(Error::Malformed("point payload length".into()));
    }
    b.chunks_exact(POINT_LEN).map(decode_point).collect()
}

/// Big-endian 32-byte encoding.
pub fn encode_scalar(s: &Scalar) -> [u8; SCALAR_LEN] {
    s.to_bytes().into()
}

/// Rejects non-canonical encodings (values at or above `n`).
pub fn decode_scalar(b: &[u8]) -> Result<Scalar> {
    if b.len() != SCALAR_LEN {
        return Err(Error::Malformed(format!("scalar of {} bytes", b.len())));
    }
    let repr = k256::FieldBytes::clone_from_slice(b);
    Option::<Scalar>::from(Scalar::from_repr(repr)).ok_or_else(|| Error::Malformed("scalar not reduced".into()))
}

pub fn decode_scalars(b: &[u8]) -> Result<Vec<Scalar>> {
    if !b.len().is_multiple_of(SCALAR_LEN) {
        return Err(Error::Malformed("scalar payload length".into()));
    }
    b.chunks_exact(SCALAR_LEN).map(decode_scalar).collect()
}

pub fn random_scalar<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> Scalar {
    let mut b = [0u8; 64];
    rng.fill_bytes(&mut b);
    // reduce a 512-bit draw: hi * 2^256 + lo
    let hi = <Scalar as Reduce<U256>>::reduce_bytes(&k256::FieldBytes::clone_from_slice(&b[..32]));
    let lo = <Scalar as Reduce<U256>>::reduce_bytes(&k256::FieldBytes::clone_from_slice(&b[32..]));
    let two_128 = Scalar::from_u128(1u128 << 64).square();
    hi * two_128.square() + lo
}

pub fn random_nonzero_scalar<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> Scalar {
    loop {
        let s = random_scalar(rng);
        if !bool::from(s.is_zero()) {
            return s;
        }
    }
}

#[inline]
pub fn mul_g(k: &Scalar) -> ProjectivePoint {
    ProjectivePoint::mul_by_generator(k)
}

/// A primitive sixth root of unity `t` mod `n` (so `t^2 - t + 1 = 0`), which
/// lets each party fold its three cross terms into one multiplication.
pub fn twist() -> Scalar {
    let bytes = hex32("ac9c52b33fa3cf1f5ad9e3fd77ed9ba4a880b9fc8ec739c2e0cfc810b51283cf");
    Option::from(Scalar::from_repr(bytes.into())).expect("constant is reduced")
}

fn hex32(s: &str) -> [u8; 32] {
    let mut out = [0u8; 32];
    for i in 0..32 {
        out[i] = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).unwrap();
    }
    out
}

/// A point with no known discrete logarithm, derived by hashing a fixed label
/// to an x-coordinate. Used where a slot must never match a real identity.
pub fn reserved_point(label: &str) -> ProjectivePoint {
    let mut ctr = 0u32;
    loop {
        let mut h = Sha256::new();
        h.update(b"plem reserved point");
        h.update(label.as_bytes());
        h.update(ctr.to_le_bytes());
        let x = h.finalize();
        let mut enc = [0u8; POINT_LEN];
        enc[0] = 0x02;
        enc[1..].copy_from_slice(&x);
        if let Ok(p) = decode_point(&enc) {
            return p;
        }
        ctr += 1;
    }
}

/// Identity placed in unused peer slots.
pub fn pad_point() -> ProjectivePoint {
    use std::sync::OnceLock;
    static P: OnceLock<ProjectivePoint> = OnceLock::new();
    *P.get_or_init(|| reserved_point("padding"))
}

/// One party's components of a shared point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SharedPoint {
    pub lo: ProjectivePoint,
    pub hi: ProjectivePoint,
}

impl Default for SharedPoint {
    fn default() -> Self {
        SharedPoint::IDENTITY
    }
}

impl SharedPoint {
    pub const IDENTITY: SharedPoint = SharedPoint { lo: ProjectivePoint::IDENTITY, hi: ProjectivePoint::IDENTITY };

    pub fn new(lo: ProjectivePoint, hi: ProjectivePoint) -> Self {
        SharedPoint { lo, hi }
    }

    /// A public point as a share (held in component 0).
    pub fn constant(party: usize, p: ProjectivePoint) -> Self {
        match party {
            0 => SharedPoint { lo: p, hi: ProjectivePoint::IDENTITY },
            2 => SharedPoint { lo: ProjectivePoint::IDENTITY, hi: p },
            _ => SharedPoint::IDENTITY,
        }
    }

    #[inline]
    pub fn add(&self, o: &Self) -> Self {
        SharedPoint { lo: self.lo + o.lo, hi: self.hi + o.hi }
    }

    #[inline]
    pub fn sub(&self, o: &Self) -> Self {
        SharedPoint { lo: self.lo - o.lo, hi: self.hi - o.hi }
    }

    #[inline]
    pub fn neg(&self) -> Self {
        SharedPoint { lo: -self.lo, hi: -self.hi }
    }

    #[inline]
    pub fn mul(&self, a: &Scalar) -> Self {
        SharedPoint { lo: self.lo * a, hi: self.hi * a }
    }

    /// `lo + t^-1 * hi`: the only form of the point needed by
    /// [`Party::scalar_point_mul`], so callers can precompute it per share.
    pub fn twisted(&self) -> ProjectivePoint {
        self.lo + self.hi * twist_inv()
    }

    pub fn to_bytes(&self) -> [u8; 2 * POINT_LEN] {
        let mut out = [0u8; 2 * POINT_LEN];
        out[..POINT_LEN].copy_from_slice(&encode_point(&self.lo));
        out[POINT_LEN..].copy_from_slice(&encode_point(&self.hi));
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        if b.len() != 2 * POINT_LEN {
            return Err(Error::Malformed("shared point length".into()));
        }
        Ok(SharedPoint { lo: decode_point(&b[..POINT_LEN])?, hi: decode_point(&b[POINT_LEN..])? })
    }
}

fn twist_inv() -> Scalar {
    use std::sync::OnceLock;
    static T: OnceLock<Scalar> = OnceLock::new();
    *T.get_or_init(|| twist().invert().expect("nonzero"))
}

fn twist_cached() -> Scalar {
    use std::sync::OnceLock;
    static T: OnceLock<Scalar> = OnceLock::new();
    *T.get_or_init(twist)
}

/// One party's components of a scalar shared mod `n`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ScalarShare {
    pub lo: Scalar,
    pub hi: Scalar,
}

impl ScalarShare {
    pub fn new(lo: Scalar, hi: Scalar) -> Self {
        ScalarShare { lo, hi }
    }

    pub fn constant(party: usize, c: Scalar) -> Self {
        match party {
            0 => ScalarShare { lo: c, hi: Scalar::ZERO },
            2 => ScalarShare { lo: Scalar::ZERO, hi: c },
            _ => ScalarShare::default(),
        }
    }

    #[inline]
    pub fn add(&self, o: &Self) -> Self {
        ScalarShare { lo: self.lo + o.lo, hi: self.hi + o.hi }
    }

    #[inline]
    pub fn scale(&self, a: &Scalar) -> Self {
        ScalarShare { lo: self.lo * a, hi: self.hi * a }
    }

    /// Local map `[k] -> <k G>`.
    pub fn base_mul(&self) -> SharedPoint {
        SharedPoint { lo: mul_g(&self.lo), hi: mul_g(&self.hi) }
    }
}

/// Dealer-side sharing of a point.
pub fn share_point<R: RngCore + CryptoRng + ?Sized>(p: &ProjectivePoint, rng: &mut R) -> [SharedPoint; 3] {
    let x1 = mul_g(&random_scalar(rng));
    let x2 = mul_g(&random_scalar(rng));
    let x3 = *p - x1 - x2;
    [SharedPoint::new(x1, x2), SharedPoint::new(x2, x3), SharedPoint::new(x3, x1)]
}

/// Dealer-side sharing of a scalar.
pub fn share_scalar<R: RngCore + CryptoRng + ?Sized>(k: &Scalar, rng: &mut R) -> [ScalarShare; 3] {
    let a = random_scalar(rng);
    let b = random_scalar(rng);
    let c = *k - a - b;
    [ScalarShare::new(a, b), ScalarShare::new(b, c), ScalarShare::new(c, a)]
}

/// Reconstructs a point from at least two parties' shares, checking duplicates.
pub fn open_point_shares(shares: &[Option<SharedPoint>; 3]) -> Result<ProjectivePoint> {
    let mut comp: [Option<ProjectivePoint>; 3] = [None; 3];
    for (i, s) in shares.iter().enumerate() {
        let Some(s) = s else { continue };
        for (j, v) in [(i, s.lo), (next(i), s.hi)] {
            match comp[j] {
                Some(p) if p != v => return Err(Error::InconsistentShares(format!("point component {j} disagrees"))),
                _ => comp[j] = Some(v),
            }
        }
    }
    let mut acc = ProjectivePoint::IDENTITY;
    for c in comp {
        acc += c.ok_or_else(|| Error::InconsistentShares("fewer than two point shares".into()))?;
    }
    Ok(acc)
}

pub fn open_scalar_shares(s: &[ScalarShare; 3]) -> Result<Scalar> {
    for i in 0..3 {
        if s[i].hi != s[next(i)].lo {
            return Err(Error::InconsistentShares(format!("scalar component {} disagrees", next(i))));
        }
    }
    Ok(s[0].lo + s[1].lo + s[2].lo)
}

/// `sum a_i X_i` on shares, no communication.
pub fn lincomb_public(a: &[Scalar], x: &[SharedPoint]) -> SharedPoint {
    assert_eq!(a.len(), x.len(), "lincomb length mismatch");
    let lo: Vec<(ProjectivePoint, Scalar)> = x.iter().zip(a).map(|(p, a)| (p.lo, *a)).collect();
    let hi: Vec<(ProjectivePoint, Scalar)> = x.iter().zip(a).map(|(p, a)| (p.hi, *a)).collect();
    SharedPoint { lo: msm(&lo), hi: msm(&hi) }
}

/// Multi-scalar multiplication.
pub fn msm(terms: &[(ProjectivePoint, Scalar)]) -> ProjectivePoint {
    use k256::elliptic_curve::ops::LinearCombinationExt;
    if terms.is_empty() {
        return ProjectivePoint::IDENTITY;
    }
    ProjectivePoint::lincomb_ext(terms)
}

impl Party {
    /// `n` pseudo-random scalar shares, no communication.
    pub fn rand_scalars(&mut self, n: usize) -> Vec<ScalarShare> {
        let base = self.alloc_counters(n as u64);
        (0..n as u64)
            .map(|k| {
                ScalarShare::new(
                    self.seeds.lo.scalar(domain::RAND_SCALAR, base + k),
                    self.seeds.hi.scalar(domain::RAND_SCALAR, base + k),
                )
            })
            .collect()
    }

    fn zero_scalar_summands(&mut self, n: usize) -> Vec<Scalar> {
        let base = self.alloc_counters(n as u64);
        (0..n as u64)
            .map(|k| self.seeds.lo.scalar(domain::ZERO_SCALAR, base + k) - self.seeds.hi.scalar(domain::ZERO_SCALAR, base + k))
            .collect()
    }

    /// Reveals shared scalars, one round.
    pub fn open_scalars(&mut self, x: &[ScalarShare]) -> Result<Vec<Scalar>> {
        let mut payload = Vec::with_capacity(x.len() * SCALAR_LEN);
        for s in x {
            payload.extend_from_slice(&encode_scalar(&s.lo));
        }
        let got = self.exchange(PayloadKind::Scalar, vec![(next(self.id()), payload, x.len() as u64)], &[prev(self.id())])?;
        let third = decode_scalars(&got[0])?;
        if third.len() != x.len() {
            return Err(Error::Malformed("scalar open length".into()));
        }
        Ok(x.iter().zip(third).map(|(s, t)| s.lo + s.hi + t).collect())
    }

    /// Reveals shared points, one round.
    pub fn open_points(&mut self, x: &[SharedPoint]) -> Result<Vec<ProjectivePoint>> {
        let lo: Vec<ProjectivePoint> = x.iter().map(|s| s.lo).collect();
        let got = self.exchange(
            PayloadKind::Point,
            vec![(next(self.id()), encode_points(&lo), x.len() as u64)],
            &[prev(self.id())],
        )?;
        let third = decode_points(&got[0])?;
        if third.len() != x.len() {
            return Err(Error::Malformed("point open length".into()));
        }
        Ok(x.iter().zip(third).map(|(s, t)| s.lo + s.hi + t).collect())
    }

    /// This party's additive summands of `r_k * D_k`, masked by a fresh zero
    /// sharing. `dt` holds the twisted form of each `D_k`.
    fn product_summands(&mut self, r: &[ScalarShare], dt: &[ProjectivePoint]) -> Vec<ProjectivePoint> {
        assert_eq!(r.len(), dt.len(), "scalar/point length mismatch");
        let alpha = self.zero_scalar_summands(r.len());
        let t = twist_cached();
        r.iter()
            .zip(dt)
            .zip(alpha)
            .map(|((r, d), a)| *d * (t * r.lo + r.hi) + mul_g(&a))
            .collect()
    }

    /// `<r_k * D_k>` in one round with one point sent per product.
    pub fn scalar_point_mul(&mut self, r: &[ScalarShare], d: &[SharedPoint]) -> Result<Vec<SharedPoint>> {
        let dt: Vec<ProjectivePoint> = d.iter().map(|d| d.twisted()).collect();
        let z = self.product_summands(r, &dt);
        let got = self.exchange(PayloadKind::Point, vec![(prev(self.id()), encode_points(&z), z.len() as u64)], &[next(self.id())])?;
        let hi = decode_points(&got[0])?;
        if hi.len() != z.len() {
            return Err(Error::Malformed("point reshare length".into()));
        }
        Ok(z.into_iter().zip(hi).map(|(lo, hi)| SharedPoint::new(lo, hi)).collect())
    }

    /// Tests `r_k * D_k == O` for every `k` in a single round: each party sends
    /// its masked summand to both others and all three check the sum.
    ///
    /// `dt` holds twisted points (see [`SharedPoint::twisted`]); twisting is
    /// linear, so callers may form differences of precomputed twisted shares.
    pub fn masked_identity_test(&mut self, r: &[ScalarShare], dt: &[ProjectivePoint]) -> Result<Vec<bool>> {
        let z = self.product_summands(r, dt);
        let payload = encode_points(&z);
        let n = z.len() as u64;
        let id = self.id();
        let got = self.exchange(
            PayloadKind::Point,
            vec![(next(id), payload.clone(), n), (prev(id), payload, n)],
            &[next(id), prev(id)],
        )?;
        if got[0].len() != z.len() * POINT_LEN || got[1].len() != z.len() * POINT_LEN {
            return Err(Error::Malformed("identity test payload length".into()));
        }
        // z_self + z_next + z_prev == O  <=>  enc(-(z_self + z_next)) == enc(z_prev)
        let mut partial = Vec::with_capacity(z.len());
        for (k, zs) in z.iter().enumerate() {
            let zn = decode_point(&got[0][k * POINT_LEN..(k + 1) * POINT_LEN])?;
            partial.push(-(*zs + zn));
        }
        let want = encode_points(&partial);
        Ok((0..z.len())
            .map(|k| want[k * POINT_LEN..(k + 1) * POINT_LEN] == got[1][k * POINT_LEN..(k + 1) * POINT_LEN])
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::PrimeField;
    use crate::session::run3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn f() -> PrimeField {
        PrimeField::for_input_bits(32).unwrap()
    }

    #[test]
    fn twist_is_sixth_root() {
        let t = twist();
        assert_eq!(t * t - t + Scalar::ONE, Scalar::ZERO);
        assert_eq!(t + twist_inv(), Scalar::ONE);
    }

    #[test]
    fn encoding_roundtrip() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let ps: Vec<_> = (0..50).map(|_| mul_g(&random_scalar(&mut rng))).chain([ProjectivePoint::IDENTITY]).collect();
        let enc = encode_points(&ps);
        assert_eq!(decode_points(&enc).unwrap(), ps);
        for p in &ps {
            assert_eq!(decode_point(&encode_point(p)).unwrap(), *p);
        }
        assert_eq!(encode_point(&ProjectivePoint::IDENTITY), [0u8; 33]);
        let mut bad = encode_point(&ps[0]);
        bad[0] = 0x05;
        assert!(decode_point(&bad).is_err());
        // an x-coordinate with no curve point
        let mut off = [0u8; 33];
        off[0] = 0x02;
        off[32] = 5;
        let mut found_off = false;
        for x in 0..50u8 {
            off[32] = x;
            if matches!(decode_point(&off), Err(Error::OffCurve)) {
                found_off = true;
                break;
            }
        }
        assert!(found_off);
        let s = random_scalar(&mut rng);
        assert_eq!(decode_scalar(&encode_scalar(&s)).unwrap(), s);
        assert!(decode_scalar(&[0xff; 32]).is_err());
    }

    #[test]
    fn point_share_roundtrip() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let g = ProjectivePoint::GENERATOR;
        let s = share_point(&g, &mut rng);
        assert_eq!(open_point_shares(&[Some(s[0]), Some(s[1]), Some(s[2])]).unwrap(), g);
        let s = share_point(&ProjectivePoint::IDENTITY, &mut rng);
        assert_eq!(open_point_shares(&[Some(s[0]), None, Some(s[2])]).unwrap(), ProjectivePoint::IDENTITY);
        for _ in 0..100 {
            let p = mul_g(&random_scalar(&mut rng));
            let s = share_point(&p, &mut rng);
            assert_eq!(open_point_shares(&[Some(s[0]), Some(s[1]), None]).unwrap(), p);
        }
        let mut s = share_point(&g, &mut rng);
        s[1].hi += g;
        assert!(matches!(open_point_shares(&[Some(s[0]), Some(s[1]), Some(s[2])]), Err(Error::InconsistentShares(_))));
    }

    #[test]
    fn local_linear_ops() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let pts: Vec<_> = (0..5).map(|_| mul_g(&random_scalar(&mut rng))).collect();
        let a: Vec<_> = (0..5).map(|_| random_scalar(&mut rng)).collect();
        let sh: Vec<_> = pts.iter().map(|p| share_point(p, &mut rng)).collect();
        let comb: Vec<_> = (0..3).map(|i| lincomb_public(&a, &sh.iter().map(|s| s[i]).collect::<Vec<_>>())).collect();
        let want = pts.iter().zip(&a).fold(ProjectivePoint::IDENTITY, |acc, (p, a)| acc + *p * a);
        assert_eq!(open_point_shares(&[Some(comb[0]), Some(comb[1]), Some(comb[2])]).unwrap(), want);
        let one: Vec<_> = (0..3).map(|i| lincomb_public(&[Scalar::ONE], &[sh[0][i]])).collect();
        assert_eq!(open_point_shares(&[Some(one[0]), Some(one[1]), Some(one[2])]).unwrap(), pts[0]);
        let zero: Vec<_> = (0..3).map(|i| lincomb_public(&[Scalar::ZERO], &[sh[0][i]])).collect();
        assert_eq!(open_point_shares(&[Some(zero[0]), Some(zero[1]), Some(zero[2])]).unwrap(), ProjectivePoint::IDENTITY);
    }

    #[test]
    fn base_mul_local() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let mut ks = vec![Scalar::ZERO, Scalar::ONE];
        ks.extend((0..100).map(|_| random_scalar(&mut rng)));
        for k in ks {
            let s = share_scalar(&k, &mut rng);
            let p: Vec<_> = s.iter().map(|s| s.base_mul()).collect();
            assert_eq!(open_point_shares(&[Some(p[0]), Some(p[1]), Some(p[2])]).unwrap(), mul_g(&k));
        }
    }

    #[test]
    fn scalar_point_mul_matches_plaintext() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let n = 1000;
        let mut rs: Vec<Scalar> = (0..n).map(|_| random_scalar(&mut rng)).collect();
        let mut ds: Vec<ProjectivePoint> = (0..n).map(|_| mul_g(&random_scalar(&mut rng))).collect();
        rs[0] = Scalar::ZERO;
        ds[1] = ProjectivePoint::GENERATOR;
        let rsh: Vec<_> = rs.iter().map(|r| share_scalar(r, &mut rng)).collect();
        let dsh: Vec<_> = ds.iter().map(|d| share_point(d, &mut rng)).collect();
        let out = run3(f(), 6, |p| {
            let i = p.id();
            let r: Vec<_> = rsh.iter().map(|s| s[i]).collect();
            let d: Vec<_> = dsh.iter().map(|s| s[i]).collect();
            let before = p.meter.totals();
            let z = p.scalar_point_mul(&r, &d)?;
            let st = p.meter.totals().since(&before);
            Ok((p.open_points(&z)?, st))
        })
        .unwrap();
        for k in 0..n {
            assert_eq!(out[0].0[k], ds[k] * rs[k]);
        }
        assert_eq!(out[0].0[0], ProjectivePoint::IDENTITY);
        for k in 2..n {
            assert_ne!(out[0].0[k], ProjectivePoint::IDENTITY);
        }
        assert_eq!(out[1].1.rounds, 1);
        assert_eq!(out[1].1.point_elems_out, n as u64);
    }

    #[test]
    fn batch_encoding_handles_identity() {
        let ps = [mul_g(&Scalar::from(3u32)), ProjectivePoint::IDENTITY, ProjectivePoint::GENERATOR];
        let enc = encode_points(&ps);
        for (k, p) in ps.iter().enumerate() {
            assert_eq!(&enc[k * POINT_LEN..(k + 1) * POINT_LEN], &encode_point(p));
        }
        assert!(encode_points(&[]).is_empty());
    }

    #[test]
    fn identity_test_detects_equal_points() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let a: Vec<_> = (0..40).map(|_| mul_g(&random_scalar(&mut rng))).collect();
        let mut b = a.clone();
        for k in (0..40).step_by(3) {
            b[k] = mul_g(&random_scalar(&mut rng));
        }
        let ash: Vec<_> = a.iter().map(|p| share_point(p, &mut rng)).collect();
        let bsh: Vec<_> = b.iter().map(|p| share_point(p, &mut rng)).collect();
        let out = run3(f(), 8, |p| {
            let i = p.id();
            let r = p.rand_scalars(40);
            let dt: Vec<_> = (0..40).map(|k| ash[k][i].twisted() - bsh[k][i].twisted()).collect();
            let r0 = p.rounds();
            let res = p.masked_identity_test(&r, &dt)?;
            assert_eq!(p.rounds() - r0, 1);
            Ok(res)
        })
        .unwrap();
        for k in 0..40 {
            assert_eq!(out[0][k], k % 3 != 0);
            assert_eq!(out[0][k], out[1][k]);
            assert_eq!(out[1][k], out[2][k]);
        }
    }

    #[test]
    fn scalar_open_and_rand() {
        let out = run3(f(), 9, |p| {
            let r = p.rand_scalars(10);
            let v = p.open_scalars(&r)?;
            Ok((r, v))
        })
        .unwrap();
        for k in 0..10 {
            let s = [out[0].0[k], out[1].0[k], out[2].0[k]];
            assert_eq!(open_scalar_shares(&s).unwrap(), out[0].1[k]);
        }
        assert_eq!(out[0].1, out[2].1);
    }

    #[test]
    fn reserved_point_is_stable_and_valid() {
        let p = reserved_point("padding");
        assert_eq!(p, reserved_point("padding"));
        assert_ne!(p, reserved_point("other"));
        assert_ne!(p, ProjectivePoint::IDENTITY);
    }
}
