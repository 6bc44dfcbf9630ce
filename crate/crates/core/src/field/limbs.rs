//! Fixed-width little-endian limb arithmetic and Montgomery multiplication.
//!
//! Every routine here is generic over the limb count `N` and usable in
//! `const` context, so the per-field Montgomery constants are derived from
//! the modulus at compile time instead of being pasted in as magic numbers.

#[inline(always)]
pub(crate) const fn adc(a: u64, b: u64, carry: u64) -> (u64, u64) {
    let t = (a as u128) + (b as u128) + (carry as u128);
    (t as u64, (t >> 64) as u64)
}

#[inline(always)]
pub(crate) const fn sbb(a: u64, b: u64, borrow: u64) -> (u64, u64) {
    let t = (a as u128).wrapping_sub((b as u128) + ((borrow >> 63) as u128));
    (t as u64, (t >> 64) as u64)
}

/// `acc + a * b + carry`, returning (low, high).
#[inline(always)]
pub(crate) const fn mac(acc: u64, a: u64, b: u64, carry: u64) -> (u64, u64) {
    let t = (acc as u128) + (a as u128) * (b as u128) + (carry as u128);
    (t as u64, (t >> 64) as u64)
}

/// Returns `a >= b` as plain integers.
pub(crate) const fn geq<const N: usize>(a: &[u64; N], b: &[u64; N]) -> bool {
    let mut i = N;
    while i > 0 {
        i -= 1;
        if a[i] > b[i] {
            return true;
        }
        if a[i] < b[i] {
            return false;
        }
    }
    true
}

/// `a - b`, returning the wrapped difference and a borrow mask (all ones on underflow).
pub(crate) const fn sub_n<const N: usize>(a: &[u64; N], b: &[u64; N]) -> ([u64; N], u64) {
    let mut out = [0u64; N];
    let mut borrow = 0u64;
    let mut i = 0;
    while i < N {
        let (d, br) = sbb(a[i], b[i], borrow);
        out[i] = d;
        borrow = br;
        i += 1;
    }
    (out, borrow)
}

pub(crate) const fn add_n<const N: usize>(a: &[u64; N], b: &[u64; N]) -> ([u64; N], u64) {
    let mut out = [0u64; N];
    let mut carry = 0u64;
    let mut i = 0;
    while i < N {
        let (s, c) = adc(a[i], b[i], carry);
        out[i] = s;
        carry = c;
        i += 1;
    }
    (out, carry)
}

/// `(a + b) mod m` for `a, b < m`.
pub(crate) const fn add_mod<const N: usize>(a: &[u64; N], b: &[u64; N], m: &[u64; N]) -> [u64; N] {
    let (sum, carry) = add_n(a, b);
    if carry != 0 || geq(&sum, m) {
        sub_n(&sum, m).0
    } else {
        sum
    }
}

/// `(a - b) mod m` for `a, b < m`.
pub(crate) const fn sub_mod<const N: usize>(a: &[u64; N], b: &[u64; N], m: &[u64; N]) -> [u64; N] {
    let (diff, borrow) = sub_n(a, b);
    if borrow != 0 {
        add_n(&diff, m).0
    } else {
        diff
    }
}

/// `-m^{-1} mod 2^64` for odd `m0`, by Newton iteration.
pub(crate) const fn mont_inv(m0: u64) -> u64 {
    let mut inv = 1u64;
    let mut i = 0;
    while i < 6 {
        inv = inv.wrapping_mul(2u64.wrapping_sub(m0.wrapping_mul(inv)));
        i += 1;
    }
    inv.wrapping_neg()
}

/// `2^bits mod m`, built by repeated modular doubling of one.
pub(crate) const fn pow2_mod<const N: usize>(m: &[u64; N], bits: usize) -> [u64; N] {
    let mut acc = [0u64; N];
    acc[0] = 1;
    let mut i = 0;
    while i < bits {
        acc = add_mod(&acc, &acc, m);
        i += 1;
    }
    acc
}

/// Montgomery product `a * b * R^{-1} mod m` with `R = 2^(64N)` (CIOS).
#[inline]
pub(crate) const fn mont_mul<const N: usize>(
    a: &[u64; N],
    b: &[u64; N],
    m: &[u64; N],
    inv: u64,
) -> [u64; N] {
    let mut t = [0u64; N];
    let mut t_hi = 0u64;
    let mut i = 0;
    while i < N {
        let mut carry = 0u64;
        let mut j = 0;
        while j < N {
            let (lo, hi) = mac(t[j], a[j], b[i], carry);
            t[j] = lo;
            carry = hi;
            j += 1;
        }
        let (s, top) = adc(t_hi, carry, 0);
        t_hi = s;

        let k = t[0].wrapping_mul(inv);
        let (_, mut carry) = mac(t[0], k, m[0], 0);
        let mut j = 1;
        while j < N {
            let (lo, hi) = mac(t[j], k, m[j], carry);
            t[j - 1] = lo;
            carry = hi;
            j += 1;
        }
        let (s, c) = adc(t_hi, carry, 0);
        t[N - 1] = s;
        t_hi = top + c;
        i += 1;
    }
    if t_hi != 0 || geq(&t, m) {
        sub_n(&t, m).0
    } else {
        t
    }
}

/// Number of significant bits in `a`.
pub(crate) const fn bit_len<const N: usize>(a: &[u64; N]) -> u32 {
    let mut i = N;
    while i > 0 {
        i -= 1;
        if a[i] != 0 {
            return (i as u32) * 64 + (64 - a[i].leading_zeros());
        }
    }
    0
}
