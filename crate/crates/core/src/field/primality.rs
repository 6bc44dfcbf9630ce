//! Miller-Rabin check of a field's own modulus, run with the field's arithmetic.

use alloc::vec::Vec;

use super::PrimeField;

const BASES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Probabilistic primality test of the modulus of `F` over 16 fixed bases.
pub fn is_probable_prime<F: PrimeField>() -> bool {
    let modulus = F::modulus_limbs();
    if modulus[0] & 1 == 0 {
        return false;
    }
    // p - 1 = d * 2^s
    let mut d: Vec<u64> = modulus.to_vec();
    d[0] -= 1;
    let mut s = 0u32;
    while d[0] & 1 == 0 {
        shr1(&mut d);
        s += 1;
    }

    let minus_one = -F::ONE;
    'bases: for &a in BASES.iter() {
        let mut x = F::from_u64(a).pow_vartime(&d);
        if x == F::ONE || x == minus_one {
            continue;
        }
        for _ in 1..s {
            x = x.square();
            if x == minus_one {
                continue 'bases;
            }
            if x == F::ONE {
                return false;
            }
        }
        return false;
    }
    true
}

fn shr1(v: &mut [u64]) {
    let mut carry = 0u64;
    for w in v.iter_mut().rev() {
        let next = *w & 1;
        *w = (*w >> 1) | (carry << 63);
        carry = next;
    }
}
