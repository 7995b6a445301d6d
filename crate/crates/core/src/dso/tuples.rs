//! Signed, per-server fee tuple shares.
//!
//! A tuple share for server `l` carries that server's pair of the owner's
//! identity point, its pair of the peer identity encrypted under the key the
//! grid operator shares with server `l`, and its pair of the fee. Each share
//! is signed on its own.

use std::path::Path;

use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{Aes256Gcm, Nonce as GcmNonce};
use rand::{CryptoRng, RngCore};
use rsa::pkcs8::{DecodePrivateKey, DecodePublicKey, EncodePrivateKey, EncodePublicKey, LineEnding};
use rsa::pss::{Signature, SigningKey, VerifyingKey};
use rsa::signature::{RandomizedSigner, SignatureEncoding, Verifier};
use rsa::{RsaPrivateKey, RsaPublicKey};
use sha2::Sha256;

use crate::ec::{share_point, ProjectivePoint, SharedPoint, POINT_LEN};
use crate::error::{Error, Result};
use crate::field::PrimeField;
use crate::session::Share;
use crate::share::{open_shares, share};

pub const RSA_BITS: usize = 2048;
pub const GCM_NONCE_LEN: usize = 12;
const SHARE_PAIR_LEN: usize = 2 * POINT_LEN;

/// AES-256 key shared between the grid operator and one server.
#[derive(Clone, PartialEq, Eq)]
pub struct ServerKey(pub [u8; 32]);

impl std::fmt::Debug for ServerKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("ServerKey(..)")
    }
}

impl ServerKey {
    pub fn random<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> Self {
        let mut k = [0u8; 32];
        rng.fill_bytes(&mut k);
        ServerKey(k)
    }

    /// Hex text, one key per file.
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, hex(&self.0) + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)?;
        let b = unhex(s.trim()).ok_or_else(|| Error::KeyMissing(format!("{} is not a hex key", path.display())))?;
        let k: [u8; 32] = b.try_into().map_err(|_| Error::KeyMissing(format!("{} is not a 256-bit key", path.display())))?;
        Ok(ServerKey(k))
    }
}

pub(crate) fn hex(b: &[u8]) -> String {
    b.iter().map(|x| format!("{x:02x}")).collect()
}

pub(crate) fn unhex(s: &str) -> Option<Vec<u8>> {
    if !s.len().is_multiple_of(2) {
        return None;
    }
    (0..s.len()).step_by(2).map(|i| u8::from_str_radix(s.get(i..i + 2)?, 16).ok()).collect()
}

pub struct DsoSigningKey {
    key: SigningKey<Sha256>,
    private: RsaPrivateKey,
}

impl DsoSigningKey {
    pub fn generate<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> Result<Self> {
        let private = RsaPrivateKey::new(&mut Rng(rng), RSA_BITS).map_err(|e| Error::KeyMissing(e.to_string()))?;
        Ok(Self::from_private(private))
    }

    fn from_private(private: RsaPrivateKey) -> Self {
        DsoSigningKey { key: SigningKey::<Sha256>::new(private.clone()), private }
    }

    pub fn public(&self) -> DsoPublicKey {
        DsoPublicKey::from_rsa(self.private.to_public_key())
    }

    pub fn sign<R: RngCore + CryptoRng + ?Sized>(&self, rng: &mut R, msg: &[u8]) -> Vec<u8> {
        self.key.sign_with_rng(&mut Rng(rng), msg).to_vec()
    }

    pub fn to_pem(&self) -> Result<String> {
        Ok(self.private.to_pkcs8_pem(LineEnding::LF).map_err(|e| Error::KeyMissing(e.to_string()))?.to_string())
    }

    pub fn from_pem(pem: &str) -> Result<Self> {
        let k = RsaPrivateKey::from_pkcs8_pem(pem).map_err(|e| Error::KeyMissing(e.to_string()))?;
        Ok(Self::from_private(k))
    }
}

#[derive(Clone, Debug)]
pub struct DsoPublicKey {
    key: VerifyingKey<Sha256>,
    public: RsaPublicKey,
}

impl DsoPublicKey {
    fn from_rsa(public: RsaPublicKey) -> Self {
        DsoPublicKey { key: VerifyingKey::<Sha256>::new(public.clone()), public }
    }

    pub fn verify(&self, msg: &[u8], sig: &[u8]) -> bool {
        match Signature::try_from(sig) {
            Ok(s) => self.key.verify(msg, &s).is_ok(),
            Err(_) => false,
        }
    }

    pub fn to_pem(&self) -> Result<String> {
        self.public.to_public_key_pem(LineEnding::LF).map_err(|e| Error::KeyMissing(e.to_string()))
    }

    pub fn from_pem(pem: &str) -> Result<Self> {
        let k = RsaPublicKey::from_public_key_pem(pem).map_err(|e| Error::KeyMissing(e.to_string()))?;
        Ok(Self::from_rsa(k))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_pem(&std::fs::read_to_string(path)?)
    }
}

/// Adapter so `?Sized` rngs can be handed to the rsa crate.
struct Rng<'a, R: ?Sized>(&'a mut R);

impl<R: RngCore + ?Sized> RngCore for Rng<'_, R> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.0.fill_bytes(dest)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.0.try_fill_bytes(dest)
    }
}

impl<R: CryptoRng + ?Sized> CryptoRng for Rng<'_, R> {}

/// Whether the tuple went to the user being registered or to an existing
/// user as the mirrored half of the pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Direction {
    Issued = 0,
    Mirrored = 1,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignedTupleShare {
    pub server: u8,
    pub direction: Direction,
    pub id_share: [u8; SHARE_PAIR_LEN],
    pub nonce: [u8; GCM_NONCE_LEN],
    pub ciphertext: Vec<u8>,
    pub fee_share: Vec<u8>,
    pub signature: Vec<u8>,
}

impl SignedTupleShare {
    /// Bytes covered by the signature.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(SHARE_PAIR_LEN + GCM_NONCE_LEN + self.ciphertext.len() + self.fee_share.len() + 2);
        out.extend_from_slice(&self.id_share);
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&self.ciphertext);
        out.extend_from_slice(&self.fee_share);
        out.push(self.server);
        out.push(self.direction as u8);
        out
    }

    pub fn verify(&self, pk: &DsoPublicKey) -> bool {
        pk.verify(&self.canonical_bytes(), &self.signature)
    }

    pub fn id_share(&self) -> Result<SharedPoint> {
        SharedPoint::from_bytes(&self.id_share)
    }

    pub fn fee_share(&self, f: &PrimeField) -> Result<Share> {
        let v = f.decode_slice(&self.fee_share)?;
        match v[..] {
            [lo, hi] => Ok(Share::new(lo, hi)),
            _ => Err(Error::Malformed("fee share width".into())),
        }
    }

    /// Server-side decryption of the peer identity share.
    pub fn decrypt_peer(&self, key: &ServerKey) -> Result<SharedPoint> {
        let c = Aes256Gcm::new_from_slice(&key.0).expect("256-bit key");
        let pt = c
            .decrypt(GcmNonce::from_slice(&self.nonce), Payload { msg: &self.ciphertext, aad: &self.id_share })
            .map_err(|_| Error::DecryptFailed(self.server as usize))?;
        SharedPoint::from_bytes(&pt)
    }

    /// `server | direction | id share | nonce | u16 ct len | ct | u16 fee len | fee | u16 sig len | sig`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![self.server, self.direction as u8];
        out.extend_from_slice(&self.id_share);
        out.extend_from_slice(&self.nonce);
        for part in [&self.ciphertext, &self.fee_share, &self.signature] {
            out.extend_from_slice(&(part.len() as u16).to_le_bytes());
            out.extend_from_slice(part);
        }
        out
    }

    /// Parses one share from the front of `b`, returning it and the bytes consumed.
    pub fn from_bytes(b: &[u8]) -> Result<(Self, usize)> {
        let bad = || Error::Malformed("truncated tuple share".into());
        let head = 2 + SHARE_PAIR_LEN + GCM_NONCE_LEN;
        if b.len() < head {
            return Err(bad());
        }
        let direction = match b[1] {
            0 => Direction::Issued,
            1 => Direction::Mirrored,
            d => return Err(Error::Malformed(format!("tuple direction {d}"))),
        };
        let mut pos = head;
        let mut parts = Vec::with_capacity(3);
        for _ in 0..3 {
            let len = u16::from_le_bytes(b.get(pos..pos + 2).ok_or_else(bad)?.try_into().unwrap()) as usize;
            pos += 2;
            parts.push(b.get(pos..pos + len).ok_or_else(bad)?.to_vec());
            pos += len;
        }
        let signature = parts.pop().unwrap();
        let fee_share = parts.pop().unwrap();
        let ciphertext = parts.pop().unwrap();
        Ok((
            SignedTupleShare {
                server: b[0],
                direction,
                id_share: b[2..2 + SHARE_PAIR_LEN].try_into().unwrap(),
                nonce: b[2 + SHARE_PAIR_LEN..head].try_into().unwrap(),
                ciphertext,
                fee_share,
                signature,
            },
            pos,
        ))
    }
}

/// Opaque reference to a peer, stable per (owner, peer) and meaningless to the owner.
pub type PeerHandle = [u8; 16];

/// The three server shares of one fee tuple, as delivered to its owner.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TupleBundle {
    pub peer: PeerHandle,
    pub shares: [SignedTupleShare; 3],
}

impl TupleBundle {
    /// The fee, recombined from the three fee shares.
    pub fn fee(&self, f: &PrimeField) -> Result<u64> {
        let s = [self.shares[0].fee_share(f)?, self.shares[1].fee_share(f)?, self.shares[2].fee_share(f)?];
        let v = open_shares(f, &[Some(s[0]), Some(s[1]), Some(s[2])])?;
        u64::try_from(v.value()).map_err(|_| Error::Malformed("fee exceeds 64 bits".into()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.peer.to_vec();
        for s in &self.shares {
            out.extend_from_slice(&s.to_bytes());
        }
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<(Self, usize)> {
        if b.len() < 16 {
            return Err(Error::Malformed("truncated tuple bundle".into()));
        }
        let peer: PeerHandle = b[..16].try_into().unwrap();
        let mut pos = 16;
        let mut shares = Vec::with_capacity(3);
        for _ in 0..3 {
            let (s, n) = SignedTupleShare::from_bytes(&b[pos..])?;
            shares.push(s);
            pos += n;
        }
        Ok((TupleBundle { peer, shares: shares.try_into().unwrap() }, pos))
    }
}

/// Builds and signs the three shares of `(owner, peer, fee)`.
#[allow(clippy::too_many_arguments)]
pub fn build_tuple<R: RngCore + CryptoRng + ?Sized>(
    rng: &mut R,
    field: &PrimeField,
    owner: &ProjectivePoint,
    peer: &ProjectivePoint,
    peer_handle: PeerHandle,
    fee: u64,
    direction: Direction,
    keys: &[ServerKey; 3],
    sk: &DsoSigningKey,
) -> TupleBundle {
    let ids = share_point(owner, rng);
    let pids = share_point(peer, rng);
    let fees = share(field, field.from_u64(fee), rng);
    let shares = std::array::from_fn(|l| {
        let id_share = ids[l].to_bytes();
        let mut nonce = [0u8; GCM_NONCE_LEN];
        rng.fill_bytes(&mut nonce);
        let c = Aes256Gcm::new_from_slice(&keys[l].0).expect("256-bit key");
        let ciphertext = c
            .encrypt(GcmNonce::from_slice(&nonce), Payload { msg: &pids[l].to_bytes(), aad: &id_share })
            .expect("gcm encryption");
        let fee_share = field.encode_slice(&[fees[l].lo, fees[l].hi]);
        let mut t = SignedTupleShare {
            server: l as u8,
            direction,
            id_share,
            nonce,
            ciphertext,
            fee_share,
            signature: Vec::new(),
        };
        t.signature = sk.sign(rng, &t.canonical_bytes());
        t
    });
    TupleBundle { peer: peer_handle, shares }
}
