//! Brute-force model of degree-`a` covers of E as index-`a` sublattices of
//! Z^2. Used as an independent oracle for the closed forms in [`crate::sigma`].

use std::collections::BTreeSet;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::torsion::GroupAlgebraElement;

/// Hermite normal form basis `{(d1, 0), (c, d2)}` with `0 <= c < d1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sublattice {
    pub d1: u64,
    pub c: u64,
    pub d2: u64,
}

impl Sublattice {
    pub fn new(d1: u64, c: u64, d2: u64) -> Result<Self> {
        if d1 == 0 || d2 == 0 {
            return Err(Error::Zero("diagonal entry"));
        }
        if c >= d1 {
            return Err(Error::InvalidProfile(format!("HNF requires c < d1, got c={c}, d1={d1}")));
        }
        Ok(Sublattice { d1, c, d2 })
    }

    pub fn index(&self) -> u64 {
        self.d1 * self.d2
    }
}

/// All index-`a` sublattices, ordered by `d1` then `c`.
pub fn enumerate_sublattices(a: u64) -> Vec<Sublattice> {
    let mut out = Vec::new();
    for d1 in crate::arith::divisors(a) {
        for c in 0..d1 {
            out.push(Sublattice { d1, c, d2: a / d1 });
        }
    }
    out
}

/// Elementary divisors `(k, a/k)`; `k` is the gcd of the basis entries.
pub fn lattice_type(l: &Sublattice) -> (u64, u64) {
    let k = l.d1.gcd(&l.c).gcd(&l.d2);
    (k, l.index() / k)
}

fn torsion_image_points(l: &Sublattice, delta: u64) -> BTreeSet<(u64, u64)> {
    let mut pts = BTreeSet::new();
    for i in 0..delta {
        for j in 0..delta {
            pts.insert(((i * l.d1 + j * l.c) % delta, (j * l.d2) % delta));
        }
    }
    pts
}

/// Indicator of `((1/delta) L + Z^2) / Z^2` inside Tor_delta, enumerated point
/// by point. The size is checked against the elementary-divisor formula.
pub fn torsion_image(l: &Sublattice, delta: u64) -> Result<GroupAlgebraElement> {
    if delta == 0 {
        return Err(Error::Zero("delta"));
    }
    let pts = torsion_image_points(l, delta);
    let (k, m) = lattice_type(l);
    let expected = delta * delta / (k.gcd(&delta) * m.gcd(&delta));
    if pts.len() as u64 != expected {
        return Err(Error::Consistency(format!(
            "torsion image of {l:?} at level {delta} has {} points, expected {expected}",
            pts.len()
        )));
    }
    GroupAlgebraElement::from_terms(
        delta,
        pts.into_iter()
            .map(|(u, v)| (u, v, BigRational::from_integer(1.into()))),
    )
}

/// Weight carried by each correlator in the image of one cover.
pub fn cover_weight(l: &Sublattice, w1: u64, n: u32, delta: u64) -> BigRational {
    let (k, m) = lattice_type(l);
    let a = l.index();
    BigRational::new(
        BigInt::from(a).pow(n - 1)
            * BigInt::from(w1).pow(2)
            * BigInt::from(k.gcd(&delta) * m.gcd(&delta)),
        BigInt::from(delta * delta),
    )
}

/// `a^(n-1) (w1/delta)^2 sum_L gcd(k,delta) gcd(a/k,delta) [image of L]`.
pub fn oracle_local_invariant(a: u64, w1: u64, n: u32, delta: u64) -> Result<GroupAlgebraElement> {
    if a == 0 {
        return Err(Error::Zero("a"));
    }
    if delta == 0 || w1 % delta != 0 {
        return Err(Error::NotDivisor { d: delta, n: w1 });
    }
    if n < 2 {
        return Err(Error::InvalidProfile(format!("n = {n} but at least 2 ends are needed")));
    }
    let parts = enumerate_sublattices(a)
        .par_iter()
        .map(|l| Ok(torsion_image(l, delta)?.scale(&cover_weight(l, w1, n, delta))))
        .collect::<Result<Vec<_>>>()?;
    let mut total = GroupAlgebraElement::zero(delta)?;
    for p in &parts {
        total.add_assign_checked(p)?;
    }
    Ok(total)
}
