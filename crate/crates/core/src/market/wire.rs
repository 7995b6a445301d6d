//! Payloads exchanged between the servers and the client/supplier side.

use crate::ec::{decode_scalar, encode_point, encode_scalar, ProjectivePoint, Scalar, SharedPoint, POINT_LEN, SCALAR_LEN};
use crate::error::{Error, Result};
use crate::field::PrimeField;
use crate::session::Share;

fn count(b: &[u8], what: &str) -> Result<usize> {
    b.get(..4)
        .map(|h| u32::from_le_bytes(h.try_into().unwrap()) as usize)
        .ok_or_else(|| Error::Malformed(format!("{what} header")))
}

fn check_len(b: &[u8], n: usize, rec: usize, what: &str) -> Result<()> {
    if n.checked_mul(rec).and_then(|x| x.checked_add(4)) != Some(b.len()) {
        return Err(Error::Malformed(format!("{what} length")));
    }
    Ok(())
}

/// `n | (user u32 | scalar)*`, used for challenges and responses.
pub fn encode_user_scalars(list: &[(u32, Scalar)]) -> Vec<u8> {
    let mut out = (list.len() as u32).to_le_bytes().to_vec();
    for (u, s) in list {
        out.extend_from_slice(&u.to_le_bytes());
        out.extend_from_slice(&encode_scalar(s));
    }
    out
}

pub fn decode_user_scalars(b: &[u8]) -> Result<Vec<(u32, Scalar)>> {
    let n = count(b, "scalar list")?;
    let rec = 4 + SCALAR_LEN;
    check_len(b, n, rec, "scalar list")?;
    (0..n)
        .map(|i| {
            let r = &b[4 + i * rec..4 + (i + 1) * rec];
            Ok((u32::from_le_bytes(r[..4].try_into().unwrap()), decode_scalar(&r[4..])?))
        })
        .collect()
}

fn push_share(f: &PrimeField, s: &Share, out: &mut Vec<u8>) {
    f.encode_into(s.lo, out);
    f.encode_into(s.hi, out);
}

fn read_share(f: &PrimeField, b: &[u8]) -> Result<Share> {
    let v = f.decode_slice(b)?;
    Ok(Share::new(v[0], v[1]))
}

/// `n | (opened id | total share)*`.
pub fn encode_totals(f: &PrimeField, rows: &[(ProjectivePoint, Share)]) -> Vec<u8> {
    let mut out = (rows.len() as u32).to_le_bytes().to_vec();
    for (id, s) in rows {
        out.extend_from_slice(&encode_point(id));
        push_share(f, s, &mut out);
    }
    out
}

pub fn decode_totals(f: &PrimeField, b: &[u8]) -> Result<Vec<([u8; POINT_LEN], Share)>> {
    let n = count(b, "totals")?;
    let w = f.byte_width();
    let rec = POINT_LEN + 2 * w;
    check_len(b, n, rec, "totals")?;
    (0..n)
        .map(|i| {
            let r = &b[4 + i * rec..4 + (i + 1) * rec];
            Ok((r[..POINT_LEN].try_into().unwrap(), read_share(f, &r[POINT_LEN..])?))
        })
        .collect()
}

/// One shuffled bill row as sent to a supplier: the opened supplier id and
/// shares of the user id and both legs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BillRow {
    pub supplier: u32,
    pub id: SharedPoint,
    pub energy: Share,
    pub network: Share,
}

pub fn encode_bills(f: &PrimeField, rows: &[BillRow]) -> Vec<u8> {
    let mut out = (rows.len() as u32).to_le_bytes().to_vec();
    for r in rows {
        out.extend_from_slice(&r.supplier.to_le_bytes());
        out.extend_from_slice(&r.id.to_bytes());
        push_share(f, &r.energy, &mut out);
        push_share(f, &r.network, &mut out);
    }
    out
}

pub fn decode_bills(f: &PrimeField, b: &[u8]) -> Result<Vec<BillRow>> {
    let n = count(b, "bills")?;
    let w = f.byte_width();
    let rec = 4 + 2 * POINT_LEN + 4 * w;
    check_len(b, n, rec, "bills")?;
    (0..n)
        .map(|i| {
            let r = &b[4 + i * rec..4 + (i + 1) * rec];
            let id_end = 4 + 2 * POINT_LEN;
            Ok(BillRow {
                supplier: u32::from_le_bytes(r[..4].try_into().unwrap()),
                id: SharedPoint::from_bytes(&r[4..id_end])?,
                energy: read_share(f, &r[id_end..id_end + 2 * w])?,
                network: read_share(f, &r[id_end + 2 * w..])?,
            })
        })
        .collect()
}

pub fn encode_price(p: u64) -> Vec<u8> {
    p.to_le_bytes().to_vec()
}

pub fn decode_price(b: &[u8]) -> Result<u64> {
    Ok(u64::from_le_bytes(b.try_into().map_err(|_| Error::Malformed("price payload".into()))?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ec::{mul_g, share_point};
    use crate::share::share;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn roundtrips() {
        let f = PrimeField::for_input_bits(64).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let list = vec![(3u32, Scalar::from(7u64)), (9, Scalar::from(11u64))];
        assert_eq!(decode_user_scalars(&encode_user_scalars(&list)).unwrap(), list);
        let s = share(&f, f.from_u64(42), &mut rng)[1];
        let p = mul_g(&Scalar::from(5u64));
        let t = decode_totals(&f, &encode_totals(&f, &[(p, s)])).unwrap();
        assert_eq!(t, vec![(encode_point(&p), s)]);
        let row = BillRow { supplier: 2, id: share_point(&p, &mut rng)[0], energy: s, network: s };
        assert_eq!(decode_bills(&f, &encode_bills(&f, &[row, row])).unwrap(), vec![row, row]);
        assert!(decode_bills(&f, &encode_bills(&f, &[row])[..50]).is_err());
        assert_eq!(decode_price(&encode_price(77)).unwrap(), 77);
    }
}
