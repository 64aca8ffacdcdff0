//! The refined divisor sum `sigma_delta(a)` with values in Q[Tor_delta(E)]
//! and the closed form of the local correlated invariant.

use std::collections::HashMap;
use std::sync::{OnceLock, RwLock};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;

use crate::arith::{self, factorize};
use crate::error::{Error, Result};
use crate::torsion::{int, GroupAlgebraElement, ThetaSum, TorsionPoint};

fn check_divisor(d: u64, delta: u64) -> Result<()> {
    if delta == 0 {
        return Err(Error::Zero("delta"));
    }
    if d == 0 || delta % d != 0 {
        return Err(Error::NotDivisor { d, n: delta });
    }
    Ok(())
}

/// `prod_p (theta_{p^i} - [i < nu_p(delta)] theta_{p^{i+1}})` with `i = nu_p(d)`,
/// in theta-coordinates.
pub fn theta_delta_d_sum(delta: u64, d: u64) -> Result<ThetaSum> {
    check_divisor(d, delta)?;
    let fd = factorize(d)?;
    let mut out = ThetaSum::unit(delta);
    for &(p, big) in factorize(delta)?.factors() {
        let i = fd.valuation(p);
        let pi = p.pow(i);
        let mut factor = ThetaSum::theta(delta, pi)?;
        if i < big {
            factor = factor.sub(&ThetaSum::theta(delta, pi * p)?);
        }
        out = out.mul(&factor);
    }
    Ok(out)
}

pub fn theta_delta_d(delta: u64, d: u64) -> Result<GroupAlgebraElement> {
    Ok(theta_delta_d_sum(delta, d)?.materialize())
}

/// `sigma_delta(a) = sum_{d | delta} sigma_bar^{delta/d}(a) theta_delta(d)`.
pub fn bold_sigma_by_sigma_bar(delta: u64, a: u64) -> Result<ThetaSum> {
    check_divisor(1, delta)?;
    let mut out = ThetaSum::zero(delta);
    for d in arith::divisors(delta) {
        let c = arith::sigma_bar(delta / d, a)?;
        if !c.is_zero() {
            out = out.add(&theta_delta_d_sum(delta, d)?.scale(&BigRational::from_integer(c)));
        }
    }
    Ok(out)
}

/// `sigma_delta(a) = sum_{d | delta} Upsilon^delta_d(a) theta_{delta/d}`.
pub fn bold_sigma_by_upsilon(delta: u64, a: u64) -> Result<ThetaSum> {
    check_divisor(1, delta)?;
    let mut out = ThetaSum::zero(delta);
    for d in arith::divisors(delta) {
        out.add_theta(delta / d, BigRational::from_integer(arith::upsilon(delta, d, a)?));
    }
    Ok(out)
}

fn should_cross_check(delta: u64, a: u64) -> bool {
    cfg!(debug_assertions) || (delta.wrapping_mul(31).wrapping_add(a)) % 16 == 0
}

type Cache = RwLock<HashMap<(u64, u64), GroupAlgebraElement>>;

fn cache() -> &'static Cache {
    static CACHE: OnceLock<Cache> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// `sigma_delta(a)` at ambient level `delta`. Both expressions above are
/// evaluated and compared (always in debug builds, on a fixed sample of
/// arguments otherwise).
pub fn bold_sigma(delta: u64, a: u64) -> Result<GroupAlgebraElement> {
    if a == 0 {
        return Err(Error::Zero("a"));
    }
    if let Some(x) = cache().read().expect("cache lock").get(&(delta, a)) {
        return Ok(x.clone());
    }
    let via_upsilon = bold_sigma_by_upsilon(delta, a)?.materialize();
    if should_cross_check(delta, a) {
        let via_sigma_bar = bold_sigma_by_sigma_bar(delta, a)?.materialize();
        if via_sigma_bar != via_upsilon {
            return Err(Error::Consistency(format!(
                "the two expressions of sigma_{delta}({a}) disagree"
            )));
        }
    }
    cache()
        .write()
        .expect("cache lock")
        .insert((delta, a), via_upsilon.clone());
    Ok(via_upsilon)
}

/// `a^(n-1) w1^2 sigma_delta(a)`, translated by the special correlator.
pub fn local_invariant(
    a: u64,
    w1: u64,
    n: u32,
    delta: u64,
    shift: Option<TorsionPoint>,
) -> Result<GroupAlgebraElement> {
    if a == 0 {
        return Err(Error::Zero("a"));
    }
    check_divisor(delta, w1)?;
    if n < 2 {
        return Err(Error::InvalidProfile(format!("n = {n} but at least 2 ends are needed")));
    }
    let scale = BigInt::from(a).pow(n - 1) * BigInt::from(w1).pow(2);
    let x = bold_sigma(delta, a)?.scale(&BigRational::from_integer(scale));
    match shift {
        None => Ok(x),
        Some(p) => x.translate(p),
    }
}

/// Coefficient of any order-`r` point in `delta^2 sigma_delta(a)`.
pub fn coefficient_by_order(delta: u64, a: u64, r: u64) -> Result<BigRational> {
    check_divisor(r, delta)?;
    let x = bold_sigma(delta, a)?;
    Ok(x.coefficient(delta / r, 0) * int(delta * delta))
}

/// Total mass `a^(n-1) sigma(a) w1^2` of the local invariant.
pub fn local_mass(a: u64, w1: u64, n: u32) -> Result<BigInt> {
    Ok(BigInt::from(a).pow(n.saturating_sub(1)) * arith::sigma(a)? * BigInt::from(w1).pow(2))
}
