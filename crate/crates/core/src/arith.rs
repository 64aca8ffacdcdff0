//! Multiplicative arithmetic functions: divisor sums, the second Jordan
//! function, the Dedekind psi function and the correlated divisor sums
//! `s_delta`, `s_delta[r]` built from them.
//!
//! Every function returns an exact [`BigInt`]. Arguments are machine integers
//! since factorization is by trial division and only meant for desk-scale
//! inputs.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Zero};

use crate::error::{Error, Result};

/// Canonical prime factorization, primes strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Factorization {
    factors: Vec<(u64, u32)>,
}

impl Factorization {
    pub fn factors(&self) -> &[(u64, u32)] {
        &self.factors
    }

    /// p-adic valuation; zero for primes not in the factorization.
    pub fn valuation(&self, p: u64) -> u32 {
        self.factors
            .iter()
            .find(|&&(q, _)| q == p)
            .map_or(0, |&(_, e)| e)
    }

    pub fn value(&self) -> u64 {
        self.factors.iter().map(|&(p, e)| p.pow(e)).product()
    }

    /// All positive divisors in increasing order.
    pub fn divisors(&self) -> Vec<u64> {
        let mut divs = vec![1u64];
        for &(p, e) in &self.factors {
            let mut next = Vec::with_capacity(divs.len() * (e as usize + 1));
            for &d in &divs {
                let mut pk = 1;
                for _ in 0..=e {
                    next.push(d * pk);
                    pk *= p;
                }
            }
            divs = next;
        }
        divs.sort_unstable();
        divs
    }
}

pub fn factorize(n: u64) -> Result<Factorization> {
    if n == 0 {
        return Err(Error::Zero("n"));
    }
    let mut factors = Vec::new();
    let mut m = n;
    let mut p = 2u64;
    while p * p <= m {
        if m % p == 0 {
            let mut e = 0;
            while m % p == 0 {
                m /= p;
                e += 1;
            }
            factors.push((p, e));
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if m > 1 {
        factors.push((m, 1));
    }
    Ok(Factorization { factors })
}

/// Divisors of `n` in increasing order (empty for `n = 0`).
pub fn divisors(n: u64) -> Vec<u64> {
    factorize(n).map(|f| f.divisors()).unwrap_or_default()
}

/// Primes dividing `n`, increasing.
pub fn prime_divisors(n: u64) -> Vec<u64> {
    factorize(n)
        .map(|f| f.factors.iter().map(|&(p, _)| p).collect())
        .unwrap_or_default()
}

fn nonzero(x: u64, name: &'static str) -> Result<()> {
    if x == 0 {
        Err(Error::Zero(name))
    } else {
        Ok(())
    }
}

fn big_pow(p: u64, e: u32) -> BigInt {
    num_traits::pow(BigInt::from(p), e as usize)
}

/// sigma(p^e) = 1 + p + ... + p^e
fn sigma_prime_power(p: u64, e: u32) -> BigInt {
    let mut total = BigInt::zero();
    let mut pk = BigInt::one();
    for _ in 0..=e {
        total += &pk;
        pk *= p;
    }
    total
}

/// Sum of divisors.
pub fn sigma(a: u64) -> Result<BigInt> {
    let f = factorize(a)?;
    Ok(f.factors
        .iter()
        .map(|&(p, e)| sigma_prime_power(p, e))
        .product())
}

/// `sigma(a / d)` when `d | a`, zero otherwise.
pub fn sigma_bar(d: u64, a: u64) -> Result<BigInt> {
    nonzero(d, "d")?;
    nonzero(a, "a")?;
    if a % d == 0 {
        sigma(a / d)
    } else {
        Ok(BigInt::zero())
    }
}

/// sigma_bar restricted to prime powers: sigma_bar^{p^i}(p^alpha).
fn sigma_bar_pp(p: u64, i: u32, alpha: u32) -> BigInt {
    if i <= alpha {
        sigma_prime_power(p, alpha - i)
    } else {
        BigInt::zero()
    }
}

/// Second Jordan function: number of elements of order exactly `d` in (Z/d)^2.
pub fn jordan2(d: u64) -> Result<BigInt> {
    let f = factorize(d)?;
    Ok(f.factors
        .iter()
        .map(|&(p, e)| big_pow(p, 2 * e - 2) * (BigInt::from(p) * p - 1))
        .product())
}

/// Dedekind psi: number of primitive index-`n` sublattices of Z^2.
pub fn dedekind_psi(n: u64) -> Result<BigInt> {
    let f = factorize(n)?;
    Ok(f.factors
        .iter()
        .map(|&(p, e)| big_pow(p, e - 1) * (p + 1))
        .product())
}

/// The coefficient function `Upsilon^delta_d(a)`: a product over primes of
/// `(sigma_bar^{p^i} - [i < nu_p(delta)] sigma_bar^{p^{i+1}})(p^{nu_p(a)})`
/// with `i = nu_p(d)`.
pub fn upsilon(delta: u64, d: u64, a: u64) -> Result<BigInt> {
    nonzero(delta, "delta")?;
    nonzero(d, "d")?;
    nonzero(a, "a")?;
    if delta % d != 0 {
        return Err(Error::NotDivisor { d, n: delta });
    }
    let fd = factorize(d)?;
    let fdelta = factorize(delta)?;
    let fa = factorize(a)?;
    let mut out = BigInt::one();
    for p in prime_divisors(delta * a) {
        let i = fd.valuation(p);
        let alpha = fa.valuation(p);
        let mut term = sigma_bar_pp(p, i, alpha);
        if i < fdelta.valuation(p) {
            term -= sigma_bar_pp(p, i + 1, alpha);
        }
        out *= term;
    }
    Ok(out)
}

/// `s_delta(a) = sum_{d | delta} J2(d) sigma_bar^d(a)`.
pub fn s_delta(delta: u64, a: u64) -> Result<BigInt> {
    nonzero(delta, "delta")?;
    nonzero(a, "a")?;
    let mut total = BigInt::zero();
    for d in divisors(delta) {
        if a % d == 0 {
            total += jordan2(d)? * sigma(a / d)?;
        }
    }
    Ok(total)
}

/// `s_delta(a)` evaluated as a sum over sublattice types:
/// `sum_{k^2 | a} gcd(k, delta) gcd(a/k, delta) psi(a/k^2)`.
pub fn s_via_lattice(delta: u64, a: u64) -> Result<BigInt> {
    nonzero(delta, "delta")?;
    nonzero(a, "a")?;
    let mut total = BigInt::zero();
    let mut k = 1u64;
    while k * k <= a {
        if a % (k * k) == 0 {
            let weight = k.gcd(&delta) * (a / k).gcd(&delta);
            total += dedekind_psi(a / (k * k))? * weight;
        }
        k += 1;
    }
    Ok(total)
}

/// Local factor of `s_{p^big_d}[p^rho](p^alpha)`.
fn s_order_pp(p: u64, big_d: u32, rho: u32, alpha: u32) -> BigInt {
    let s_pp = |d: u32| -> BigInt {
        (0..=d)
            .map(|j| {
                let j2 = if j == 0 {
                    BigInt::one()
                } else {
                    big_pow(p, 2 * j - 2) * (BigInt::from(p) * p - 1)
                };
                j2 * sigma_bar_pp(p, j, alpha)
            })
            .sum()
    };
    if rho == 0 {
        s_pp(big_d)
    } else {
        let e = big_d - rho;
        s_pp(e) - big_pow(p, 2 * e) * sigma_bar_pp(p, e + 1, alpha)
    }
}

/// `s_delta[r](a)`, the normalized coefficient of an order-`r` correlator,
/// assembled multiplicatively from its prime-power values.
pub fn s_delta_order(delta: u64, r: u64, a: u64) -> Result<BigInt> {
    nonzero(delta, "delta")?;
    nonzero(r, "r")?;
    nonzero(a, "a")?;
    if delta % r != 0 {
        return Err(Error::NotDivisor { d: r, n: delta });
    }
    let fdelta = factorize(delta)?;
    let fr = factorize(r)?;
    let fa = factorize(a)?;
    let mut out = BigInt::one();
    for p in prime_divisors(delta * a) {
        out *= s_order_pp(p, fdelta.valuation(p), fr.valuation(p), fa.valuation(p));
    }
    Ok(out)
}
