//! Schnorr identification over secp256k1: prover side, single and batch
//! verification, and the three-server batch check on shared commitments.

use std::collections::HashSet;

use k256::elliptic_curve::PrimeField as _;
use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::ec::{
    decode_point, decode_scalar, encode_point, encode_scalar, mul_g, msm, random_nonzero_scalar, ProjectivePoint,
    Scalar, SharedPoint, POINT_LEN, SCALAR_LEN,
};
use crate::error::{Error, Result};
use crate::session::Party;

pub const TRANSCRIPT_LEN: usize = POINT_LEN + 2 * SCALAR_LEN;

/// Width of the verifier's random batch scalars.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchWidth {
    #[default]
    Short128,
    Full,
}

pub struct SchnorrKeyPair {
    d: Scalar,
    pub public: ProjectivePoint,
    spent: HashSet<[u8; POINT_LEN]>,
}

impl std::fmt::Debug for SchnorrKeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SchnorrKeyPair").field("public", &encode_point(&self.public)).finish_non_exhaustive()
    }
}

/// A prover's secret nonce together with its commitment `R = k·G`.
#[derive(Clone, Debug)]
pub struct Nonce {
    k: Scalar,
    pub commitment: ProjectivePoint,
}

impl Nonce {
    pub fn secret(&self) -> &Scalar {
        &self.k
    }
}

pub fn keygen<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> SchnorrKeyPair {
    SchnorrKeyPair::from_secret(random_nonzero_scalar(rng)).expect("nonzero secret")
}

impl SchnorrKeyPair {
    pub fn from_secret(d: Scalar) -> Result<Self> {
        if bool::from(d.is_zero()) {
            return Err(Error::Malformed("zero secret key".into()));
        }
        Ok(SchnorrKeyPair { d, public: mul_g(&d), spent: HashSet::new() })
    }

    pub fn secret(&self) -> &Scalar {
        &self.d
    }

    pub fn commit<R: RngCore + CryptoRng + ?Sized>(&self, rng: &mut R) -> Nonce {
        let k = random_nonzero_scalar(rng);
        Nonce { k, commitment: mul_g(&k) }
    }

    /// Nonce from a caller-chosen `k`, for replay tests and precomputed pools.
    pub fn commit_with(&self, k: Scalar) -> Nonce {
        Nonce { k, commitment: mul_g(&k) }
    }

    /// `s = k + e·d`. Each nonce answers one challenge only.
    pub fn respond(&mut self, nonce: &Nonce, e: &Scalar) -> Result<Scalar> {
        if !self.spent.insert(encode_point(&nonce.commitment)) {
            return Err(Error::NonceReuse);
        }
        Ok(nonce.k + *e * self.d)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Transcript {
    pub r: ProjectivePoint,
    pub e: Scalar,
    pub s: Scalar,
}

impl Transcript {
    /// `R (33) | e (32) | s (32)`.
    pub fn to_bytes(&self) -> [u8; TRANSCRIPT_LEN] {
        let mut out = [0u8; TRANSCRIPT_LEN];
        out[..POINT_LEN].copy_from_slice(&encode_point(&self.r));
        out[POINT_LEN..POINT_LEN + SCALAR_LEN].copy_from_slice(&encode_scalar(&self.e));
        out[POINT_LEN + SCALAR_LEN..].copy_from_slice(&encode_scalar(&self.s));
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        if b.len() != TRANSCRIPT_LEN {
            return Err(Error::Malformed(format!("transcript of {} bytes", b.len())));
        }
        Ok(Transcript {
            r: decode_point(&b[..POINT_LEN])?,
            e: decode_scalar(&b[POINT_LEN..POINT_LEN + SCALAR_LEN])?,
            s: decode_scalar(&b[POINT_LEN + SCALAR_LEN..])?,
        })
    }
}

pub fn verify_single(p: &ProjectivePoint, r: &ProjectivePoint, e: &Scalar, s: &Scalar) -> bool {
    mul_g(s) == *r + *p * e
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BatchItem {
    pub r: ProjectivePoint,
    pub p: ProjectivePoint,
    pub e: Scalar,
    pub s: Scalar,
}

/// Nonzero batch scalars expanded from a seed.
pub fn batch_scalars(seed: [u8; 32], count: usize, width: BatchWidth) -> Vec<Scalar> {
    let mut rng = ChaCha12Rng::from_seed(seed);
    (0..count)
        .map(|_| loop {
            let a = match width {
                BatchWidth::Short128 => {
                    let mut b = [0u8; 16];
                    rng.fill_bytes(&mut b);
                    Scalar::from_u128(u128::from_le_bytes(b))
                }
                BatchWidth::Full => random_nonzero_scalar(&mut rng),
            };
            if !bool::from(a.is_zero()) {
                break a;
            }
        })
        .collect()
}

/// Batch check with fresh scalars drawn from `rng`.
pub fn verify_batch<R: RngCore + CryptoRng + ?Sized>(items: &[BatchItem], width: BatchWidth, rng: &mut R) -> bool {
    let mut seed = [0u8; 32];
    rng.fill_bytes(&mut seed);
    verify_batch_with(items, &batch_scalars(seed, items.len(), width))
}

/// `(sum a_i s_i)·G == sum a_i R_i + sum a_i e_i P_i`.
pub fn verify_batch_with(items: &[BatchItem], a: &[Scalar]) -> bool {
    assert_eq!(items.len(), a.len(), "one batch scalar per item");
    let mut lhs = Scalar::ZERO;
    let mut terms = Vec::with_capacity(2 * items.len());
    for (it, a) in items.iter().zip(a) {
        lhs += *a * it.s;
        terms.push((it.r, *a));
        terms.push((it.p, *a * it.e));
    }
    mul_g(&lhs) == msm(&terms)
}

/// One batch item as held by a server: shared commitment and identity,
/// public challenge and response.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SharedBatchItem {
    pub r: SharedPoint,
    pub id: SharedPoint,
    pub e: Scalar,
    pub s: Scalar,
}

fn shared_combination(items: &[SharedBatchItem], a: &[Scalar]) -> (SharedPoint, Scalar) {
    let mut lo = Vec::with_capacity(2 * items.len());
    let mut hi = Vec::with_capacity(2 * items.len());
    let mut lhs = Scalar::ZERO;
    for (it, a) in items.iter().zip(a) {
        let ae = *a * it.e;
        lo.push((it.r.lo, *a));
        lo.push((it.id.lo, ae));
        hi.push((it.r.hi, *a));
        hi.push((it.id.hi, ae));
        lhs += *a * it.s;
    }
    (SharedPoint::new(msm(&lo), msm(&hi)), lhs)
}

impl Party {
    /// Jointly random challenges for `n` users plus a seed for the batch
    /// scalars, revealed to the servers in one round.
    pub fn joint_challenges(&mut self, n: usize) -> Result<(Vec<Scalar>, [u8; 32])> {
        let r = self.rand_scalars(n + 1);
        let mut v = self.open_scalars(&r)?;
        let seed = encode_scalar(&v.pop().expect("seed scalar"));
        // a zero challenge has probability 2^-256; map it to one so all servers agree
        let e = v.into_iter().map(|e| if bool::from(e.is_zero()) { Scalar::ONE } else { e }).collect();
        Ok((e, seed))
    }

    /// Batch verification on shared commitments and identities. Opens `X` in
    /// exactly one round whatever the batch size.
    pub fn mpc_verify_batch(&mut self, items: &[SharedBatchItem], a: &[Scalar]) -> Result<bool> {
        assert_eq!(items.len(), a.len(), "one batch scalar per item");
        let (x, lhs) = shared_combination(items, a);
        let x = self.open_points(&[x])?[0];
        Ok(mul_g(&lhs) == x)
    }

    /// Per-group verdicts, one opened combination per group, all in one round.
    /// Used to isolate failing users after a rejected batch.
    pub fn mpc_verify_groups(&mut self, groups: &[Vec<SharedBatchItem>], a: &[Vec<Scalar>]) -> Result<Vec<bool>> {
        let (xs, lhs): (Vec<SharedPoint>, Vec<Scalar>) =
            groups.iter().zip(a).map(|(g, a)| shared_combination(g, a)).unzip();
        let opened = self.open_points(&xs)?;
        Ok(opened.iter().zip(&lhs).map(|(x, l)| mul_g(l) == *x).collect())
    }
}
