//! Field arithmetic checked against arbitrary-precision integers.

use num_bigint::BigUint;
use num_traits::{One, Zero};
use proptest::prelude::*;
use star_core::field::{FieldId, Fp129, Fp255, PrimeField};

fn modulus(id: FieldId) -> BigUint {
    BigUint::from_bytes_le(&id.modulus_le_bytes())
}

fn to_big<F: PrimeField>(v: &F) -> BigUint {
    BigUint::from_bytes_le(&v.to_le_vec())
}

fn from_big<F: PrimeField>(v: &BigUint) -> F {
    let mut bytes = v.to_bytes_le();
    bytes.resize(F::BYTES, 0);
    F::from_le(&bytes).expect("reduced value")
}

/// Miller-Rabin with the first 20 primes as bases, written against BigUint.
fn oracle_is_prime(n: &BigUint) -> bool {
    let small: [u32; 20] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71];
    for &q in &small {
        let q = BigUint::from(q);
        if *n == q {
            return true;
        }
        if (n % &q).is_zero() {
            return false;
        }
    }
    let one = BigUint::one();
    let n1 = n - &one;
    let s = n1.trailing_zeros().unwrap();
    let d = &n1 >> s;
    'bases: for &a in &small {
        let mut x = BigUint::from(a).modpow(&d, n);
        if x == one || x == n1 {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&BigUint::from(2u32), n);
            if x == n1 {
                continue 'bases;
            }
        }
        return false;
    }
    true
}

#[test]
fn f129_is_the_least_prime_above_2_pow_128() {
    let p = modulus(FieldId::F129);
    let base = BigUint::one() << 128;
    assert_eq!(p, &base + BigUint::from(51u32));
    assert!(oracle_is_prime(&p));
    let mut n = base;
    while n < p {
        assert!(!oracle_is_prime(&n), "{n} should be composite");
        n += 1u32;
    }
    assert_eq!(FieldId::F129.modulus_bits(), 129);
}

#[test]
fn f255_is_curve25519_prime() {
    let p = modulus(FieldId::F255);
    assert_eq!(p, (BigUint::one() << 255) - BigUint::from(19u32));
    assert!(oracle_is_prime(&p));
    assert_eq!(FieldId::F255.modulus_bits(), 255);
}

#[test]
fn builtin_primality_check_agrees() {
    for id in FieldId::ALL {
        assert!(id.check_modulus(), "{id}");
    }
}

fn check_ops<F: PrimeField>(a_bytes: &[u8; 64], b_bytes: &[u8; 64]) {
    let p = modulus(F::ID);
    let a = F::from_uniform_bytes(a_bytes);
    let b = F::from_uniform_bytes(b_bytes);
    let ab = BigUint::from_bytes_le(a_bytes) % &p;
    let bb = BigUint::from_bytes_le(b_bytes) % &p;
    assert_eq!(to_big(&a), ab);
    assert_eq!(to_big(&b), bb);
    assert_eq!(to_big(&(a + b)), (&ab + &bb) % &p);
    assert_eq!(to_big(&(a - b)), (&ab + &p - &bb) % &p);
    assert_eq!(to_big(&(a * b)), (&ab * &bb) % &p);
    assert_eq!(to_big(&(-a)), (&p - &ab) % &p);
    assert_eq!(to_big(&a.square()), (&ab * &ab) % &p);
    match a.invert() {
        Some(inv) => assert_eq!(to_big(&inv), ab.modpow(&(&p - 2u32), &p)),
        None => assert!(ab.is_zero()),
    }
    assert_eq!(from_big::<F>(&ab), a);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn f129_matches_bigint(a in prop::array::uniform32(any::<u8>()), b in prop::array::uniform32(any::<u8>()),
                           c in prop::array::uniform32(any::<u8>()), d in prop::array::uniform32(any::<u8>())) {
        let mut x = [0u8; 64];
        let mut y = [0u8; 64];
        x[..32].copy_from_slice(&a);
        x[32..].copy_from_slice(&b);
        y[..32].copy_from_slice(&c);
        y[32..].copy_from_slice(&d);
        check_ops::<Fp129>(&x, &y);
    }

    #[test]
    fn f255_matches_bigint(a in prop::array::uniform32(any::<u8>()), b in prop::array::uniform32(any::<u8>()),
                           c in prop::array::uniform32(any::<u8>()), d in prop::array::uniform32(any::<u8>())) {
        let mut x = [0u8; 64];
        let mut y = [0u8; 64];
        x[..32].copy_from_slice(&a);
        x[32..].copy_from_slice(&b);
        y[..32].copy_from_slice(&c);
        y[32..].copy_from_slice(&d);
        check_ops::<Fp255>(&x, &y);
    }

    #[test]
    fn non_canonical_encodings_rejected(offset in 0u64..1000) {
        for id in FieldId::ALL {
            let v = modulus(id) + BigUint::from(offset);
            let mut bytes = v.to_bytes_le();
            bytes.resize(id.byte_len(), 0);
            match id {
                FieldId::F129 => prop_assert!(Fp129::from_le(&bytes).is_none()),
                FieldId::F255 => prop_assert!(Fp255::from_le(&bytes).is_none()),
            }
        }
    }
}

#[test]
fn edge_values() {
    fn edges<F: PrimeField>() {
        let p = modulus(F::ID);
        let max = from_big::<F>(&(&p - 1u32));
        assert_eq!(max + F::ONE, F::ZERO);
        assert_eq!(max * max, F::ONE);
        assert_eq!(F::ZERO.invert(), None);
        let all_ones = [0xffu8; 64];
        assert_eq!(to_big(&F::from_uniform_bytes(&all_ones)), BigUint::from_bytes_le(&all_ones) % &p);
    }
    edges::<Fp129>();
    edges::<Fp255>();
}
