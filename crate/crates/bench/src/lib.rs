//! Inputs shared by the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use plem::ec::random_nonzero_scalar;
use plem::identity::{keygen, BatchItem};
use plem::share::share;
use plem::{PrimeField, Share};

/// `n` values below `2^l`, dealt into three parties' shares.
pub fn dealt(f: &PrimeField, n: usize, seed: u64) -> [Vec<Share>; 3] {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mask = (1u128 << f.input_bits()) - 1;
    let mut out: [Vec<Share>; 3] = Default::default();
    for _ in 0..n {
        let x = f.elem(rand::Rng::gen::<u128>(&mut rng) & mask);
        for (o, s) in out.iter_mut().zip(share(f, x, &mut rng)) {
            o.push(s);
        }
    }
    out
}

/// `n` honest Schnorr transcripts with distinct keys.
pub fn honest_items(n: usize, seed: u64) -> Vec<BatchItem> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut kp = keygen(&mut rng);
            let nonce = kp.commit(&mut rng);
            let e = random_nonzero_scalar(&mut rng);
            let s = kp.respond(&nonce, &e).expect("fresh nonce");
            BatchItem { r: nonce.commitment, p: kp.public, e, s }
        })
        .collect()
}
