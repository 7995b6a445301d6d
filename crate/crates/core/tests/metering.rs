use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use plem::harness::{meter_assert, sum_servers, Expectation};
use plem::permute::SharedVector;
use plem::session::run3;
use plem::share::share;
use plem::PrimeField;

fn phases_of(m: usize, cols: usize) -> Vec<Vec<plem::net::PhaseStats>> {
    let f = PrimeField::for_input_bits(32).unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(m as u64);
    let dealt: Vec<Vec<_>> = (0..cols).map(|_| (0..m).map(|k| share(&f, f.from_u64(k as u64), &mut rng)).collect()).collect();
    run3(f, 1, |p| {
        let mine = |c: &Vec<[plem::Share; 3]>| c.iter().map(|s| s[p.id()]).collect::<Vec<_>>();
        let table: Vec<_> = dealt.iter().map(mine).collect();
        p.meter.begin("rand", true);
        p.rand(m);
        p.meter.begin("shuffle", true);
        p.shuffle(&SharedVector::from_fields(table.clone()))?;
        p.meter.begin("mul", true);
        p.mul(&table[0], &table[0])?;
        Ok(p.meter.phases())
    })
    .unwrap()
    .to_vec()
}

#[test]
fn shuffle_of_hundred_rows_moves_six_hundred_elements() {
    let s = sum_servers(&phases_of(100, 1));
    meter_assert(&s, &[Expectation::shuffle_total("shuffle", 100, 1)]).unwrap();
}

#[test]
fn shuffle_scales_with_columns() {
    let s = sum_servers(&phases_of(40, 3));
    meter_assert(&s, &[Expectation::shuffle_total("shuffle", 40, 3)]).unwrap();
}

#[test]
fn fifty_muls_send_fifty_elements_per_server() {
    for s in phases_of(50, 1) {
        meter_assert(&s, &[Expectation::mul_batch("mul", 50)]).unwrap();
    }
}

#[test]
fn rand_is_silent() {
    for s in phases_of(64, 1) {
        meter_assert(&s, &[Expectation::silent("rand")]).unwrap();
    }
}

#[test]
fn wrong_expectation_reports_the_counter() {
    let s = sum_servers(&phases_of(10, 1));
    let v = meter_assert(&s, &[Expectation::shuffle_total("shuffle", 11, 1)]).unwrap_err();
    assert_eq!(v.len(), 1);
    assert_eq!(v[0].counter, "field_elems_out");
    assert_eq!((v[0].expected, v[0].measured), (66, Some(60)));
}
