//! Dense univariate polynomials over a [`PrimeField`], with interpolation and
//! Gao's Reed-Solomon decoder.
//!
//! The aggregator uses the decoder to recover a group's sharing polynomial
//! when some of the shares in the group were not produced honestly.

use alloc::vec;
use alloc::vec::Vec;

use crate::field::{batch_invert, PrimeField};

/// Coefficients in ascending order, without trailing zeros.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Poly<F: PrimeField> {
    coeffs: Vec<F>,
}

impl<F: PrimeField> Poly<F> {
    pub fn zero() -> Self {
        Poly { coeffs: Vec::new() }
    }

    pub fn from_coeffs(mut coeffs: Vec<F>) -> Self {
        while coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        Poly { coeffs }
    }

    pub fn coeffs(&self) -> &[F] {
        &self.coeffs
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn eval(&self, x: F) -> F {
        self.coeffs.iter().rev().fold(F::ZERO, |acc, &c| acc * x + c)
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        let mut out = vec![F::ZERO; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self::from_coeffs(out)
    }

    pub fn sub(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        let out = (0..n)
            .map(|i| {
                let a = self.coeffs.get(i).copied().unwrap_or(F::ZERO);
                let b = other.coeffs.get(i).copied().unwrap_or(F::ZERO);
                a - b
            })
            .collect();
        Self::from_coeffs(out)
    }

    /// Euclidean division. Panics if `divisor` is zero.
    pub fn div_rem(&self, divisor: &Self) -> (Self, Self) {
        let d_deg = divisor.degree().expect("division by the zero polynomial");
        let lead_inv = divisor.coeffs[d_deg].invert().expect("nonzero leading coefficient");
        let mut rem = self.coeffs.clone();
        if rem.len() <= d_deg {
            return (Self::zero(), self.clone());
        }
        let mut quot = vec![F::ZERO; rem.len() - d_deg];
        for i in (0..quot.len()).rev() {
            let c = rem[i + d_deg] * lead_inv;
            quot[i] = c;
            if c.is_zero() {
                continue;
            }
            for (j, &dc) in divisor.coeffs.iter().enumerate() {
                rem[i + j] -= c * dc;
            }
        }
        rem.truncate(d_deg);
        (Self::from_coeffs(quot), Self::from_coeffs(rem))
    }

    /// `prod (X - x_i)`.
    pub fn vanishing(xs: &[F]) -> Self {
        Self::from_coeffs(vanishing_coeffs(xs))
    }
}

/// Divides `v` by `(X - root)`, assuming `root` is a root of `v`.
fn deflate<F: PrimeField>(v: &[F], root: F) -> Vec<F> {
    // v has degree n, result has degree n - 1
    let n = v.len() - 1;
    let mut out = vec![F::ZERO; n];
    let mut carry = F::ZERO;
    for i in (0..n).rev() {
        carry = v[i + 1] + carry * root;
        out[i] = carry;
    }
    out
}

/// Lagrange interpolation through `points` in `O(n^2)` with one inversion.
///
/// Returns `None` if two points share an x-coordinate.
pub fn interpolate<F: PrimeField>(points: &[(F, F)]) -> Option<Poly<F>> {
    if points.is_empty() {
        return Some(Poly::zero());
    }
    let xs: Vec<F> = points.iter().map(|p| p.0).collect();
    let vanishing = vanishing_coeffs(&xs);
    let mut weights: Vec<F> = xs
        .iter()
        .enumerate()
        .map(|(i, &xi)| {
            xs.iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .fold(F::ONE, |acc, (_, &xj)| acc * (xi - xj))
        })
        .collect();
    if !batch_invert(&mut weights) {
        return None;
    }
    let mut out = vec![F::ZERO; points.len()];
    for ((&xi, &(_, yi)), w) in xs.iter().zip(points).zip(weights) {
        let scale = yi * w;
        if scale.is_zero() {
            continue;
        }
        for (o, b) in out.iter_mut().zip(deflate(&vanishing, xi)) {
            *o += scale * b;
        }
    }
    Some(Poly::from_coeffs(out))
}

fn vanishing_coeffs<F: PrimeField>(xs: &[F]) -> Vec<F> {
    let mut coeffs = Vec::with_capacity(xs.len() + 1);
    coeffs.push(F::ONE);
    for &x in xs {
        coeffs.push(F::ZERO);
        for i in (1..coeffs.len()).rev() {
            let prev = coeffs[i - 1];
            coeffs[i] = prev - x * coeffs[i];
        }
        coeffs[0] = -x * coeffs[0];
    }
    coeffs
}

/// Gao's decoder: finds the unique polynomial of degree `< k` that agrees
/// with all but at most `(n - k) / 2` of the `n` points.
///
/// Returns `None` if the points are not within that error radius (or share
/// an x-coordinate).
pub fn gao_decode<F: PrimeField>(points: &[(F, F)], k: usize) -> Option<Poly<F>> {
    let n = points.len();
    if k == 0 || n < k {
        return None;
    }
    let xs: Vec<F> = points.iter().map(|p| p.0).collect();
    let g0 = Poly::from_coeffs(vanishing_coeffs(&xs));
    let g1 = interpolate(points)?;

    // partial extended Euclid on (g0, g1), tracking the g1 cofactor
    let (mut r_prev, mut r) = (g0, g1);
    let (mut v_prev, mut v) = (Poly::zero(), Poly::from_coeffs(vec![F::ONE]));
    while r.degree().is_some_and(|d| 2 * d >= n + k) {
        let (q, rem) = r_prev.div_rem(&r);
        let v_next = v_prev.sub(&q.mul(&v));
        r_prev = core::mem::replace(&mut r, rem);
        v_prev = core::mem::replace(&mut v, v_next);
    }
    let (f, rem) = r.div_rem(&v);
    if !rem.is_zero() || f.degree().is_some_and(|d| d >= k) {
        return None;
    }
    Some(f)
}
