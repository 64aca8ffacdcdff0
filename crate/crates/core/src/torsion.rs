//! The group algebra Q[Tor_delta(E)] of the delta-torsion of an elliptic
//! curve, modelled as (Z/delta)^2 under E = (R/Z)^2.
//!
//! Elements are pinned to one ambient level `delta`. Moving between levels is
//! explicit through [`GroupAlgebraElement::rebase`]; the pushforward along
//! multiplication by `k` and its averaging section stay inside one level.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Rational = BigRational;

pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: impl Into<BigInt>) -> Rational {
    Rational::from_integer(n.into())
}

/// A point of Tor_delta(E), i.e. a pair of residues mod `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TorsionPoint {
    delta: u64,
    u: u64,
    v: u64,
}

impl TorsionPoint {
    /// Coordinates are reduced mod `delta`.
    pub fn new(delta: u64, u: u64, v: u64) -> Result<Self> {
        if delta == 0 {
            return Err(Error::Zero("delta"));
        }
        Ok(TorsionPoint {
            delta,
            u: u % delta,
            v: v % delta,
        })
    }

    pub fn zero(delta: u64) -> Result<Self> {
        Self::new(delta, 0, 0)
    }

    pub fn delta(&self) -> u64 {
        self.delta
    }

    pub fn coords(&self) -> (u64, u64) {
        (self.u, self.v)
    }

    /// Smallest `n >= 1` with `n * self = 0`.
    pub fn order(&self) -> u64 {
        self.delta / self.u.gcd(&self.v).gcd(&self.delta)
    }
}

pub fn order_of(delta: u64, u: u64, v: u64) -> u64 {
    delta / u.gcd(&v).gcd(&delta)
}

/// A finitely supported rational function on Tor_delta(E). Zero coefficients
/// are never stored, so derived equality is exact equality of elements.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupAlgebraElement {
    delta: u64,
    terms: BTreeMap<(u64, u64), Rational>,
}

impl GroupAlgebraElement {
    pub fn zero(delta: u64) -> Result<Self> {
        if delta == 0 {
            return Err(Error::Zero("delta"));
        }
        Ok(GroupAlgebraElement {
            delta,
            terms: BTreeMap::new(),
        })
    }

    /// The unit `(0)`, equal to `theta(delta, 1)`.
    pub fn unit(delta: u64) -> Result<Self> {
        Self::point(TorsionPoint::zero(delta)?)
    }

    pub fn point(p: TorsionPoint) -> Result<Self> {
        let mut x = Self::zero(p.delta)?;
        x.terms.insert(p.coords(), Rational::one());
        Ok(x)
    }

    /// Builds an element from `(u, v, coefficient)` triples, summing repeats.
    pub fn from_terms<I>(delta: u64, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u64, u64, Rational)>,
    {
        let mut x = Self::zero(delta)?;
        for (u, v, c) in terms {
            x.add_term((u % delta, v % delta), c);
        }
        Ok(x)
    }

    /// The projector `theta_d = (1/d^2) sum_{d theta = 0} (theta)` at level `delta`.
    pub fn theta(delta: u64, d: u64) -> Result<Self> {
        if delta == 0 {
            return Err(Error::Zero("delta"));
        }
        if d == 0 || delta % d != 0 {
            return Err(Error::NotDivisor { d, n: delta });
        }
        let step = delta / d;
        let weight = rat(1, (d * d) as i64);
        let mut x = Self::zero(delta)?;
        for i in 0..d {
            for j in 0..d {
                x.terms.insert((i * step, j * step), weight.clone());
            }
        }
        Ok(x)
    }

    pub fn delta(&self) -> u64 {
        self.delta
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (TorsionPoint, &Rational)> + '_ {
        let delta = self.delta;
        self.terms
            .iter()
            .map(move |(&(u, v), c)| (TorsionPoint { delta, u, v }, c))
    }

    pub fn support(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.terms.keys().copied()
    }

    pub fn coefficient(&self, u: u64, v: u64) -> Rational {
        self.terms
            .get(&(u % self.delta, v % self.delta))
            .cloned()
            .unwrap_or_else(Rational::zero)
    }

    pub fn total_mass(&self) -> Rational {
        self.terms.values().sum()
    }

    fn add_term(&mut self, key: (u64, u64), c: Rational) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(key) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if e.get().is_zero() {
                    e.remove();
                }
            }
        }
    }

    fn check_level(&self, other: &Self) -> Result<()> {
        if self.delta != other.delta {
            Err(Error::LevelMismatch {
                left: self.delta,
                right: other.delta,
            })
        } else {
            Ok(())
        }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.add_assign_checked(other)?;
        Ok(out)
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.try_add(&other.scale(&-Rational::one()))
    }

    pub fn add_assign_checked(&mut self, other: &Self) -> Result<()> {
        self.check_level(other)?;
        for (&k, c) in &other.terms {
            self.add_term(k, c.clone());
        }
        Ok(())
    }

    pub fn scale(&self, c: &Rational) -> Self {
        if c.is_zero() {
            return GroupAlgebraElement {
                delta: self.delta,
                terms: BTreeMap::new(),
            };
        }
        GroupAlgebraElement {
            delta: self.delta,
            terms: self.terms.iter().map(|(&k, v)| (k, v * c)).collect(),
        }
    }

    /// Group-algebra product: `(x y)(theta) = sum_{a + b = theta} x(a) y(b)`.
    pub fn convolve(&self, other: &Self) -> Result<Self> {
        self.check_level(other)?;
        let delta = self.delta;
        let n = delta as usize;
        let mut acc: Vec<Option<Rational>> = vec![None; n * n];
        for (&(u1, v1), c1) in &self.terms {
            for (&(u2, v2), c2) in &other.terms {
                let idx = (((u1 + u2) % delta) * delta + (v1 + v2) % delta) as usize;
                let prod = c1 * c2;
                match &mut acc[idx] {
                    Some(s) => *s += prod,
                    slot => *slot = Some(prod),
                }
            }
        }
        let mut out = Self::zero(delta)?;
        for (idx, c) in acc.into_iter().enumerate() {
            if let Some(c) = c {
                if !c.is_zero() {
                    let idx = idx as u64;
                    out.terms.insert((idx / delta, idx % delta), c);
                }
            }
        }
        Ok(out)
    }

    /// Translation by a point: convolution with `(p)`.
    pub fn translate(&self, p: TorsionPoint) -> Result<Self> {
        if p.delta != self.delta {
            return Err(Error::LevelMismatch {
                left: self.delta,
                right: p.delta,
            });
        }
        let delta = self.delta;
        Ok(GroupAlgebraElement {
            delta,
            terms: self
                .terms
                .iter()
                .map(|(&(u, v), c)| (((u + p.u) % delta, (v + p.v) % delta), c.clone()))
                .collect(),
        })
    }

    /// Pushforward along multiplication by `k`: `(theta) -> (k theta)`.
    pub fn m_push(&self, k: u64) -> Self {
        let delta = self.delta;
        let mut out = GroupAlgebraElement {
            delta,
            terms: BTreeMap::new(),
        };
        for (&(u, v), c) in &self.terms {
            out.add_term(((k % delta) * u % delta, (k % delta) * v % delta), c.clone());
        }
        out
    }

    /// Averaging section of `m_push(k)`: each `(theta)` becomes the average of
    /// its `k^2` k-th roots inside Tor_delta.
    pub fn divide(&self, k: u64) -> Result<Self> {
        let delta = self.delta;
        if k == 0 || delta % k != 0 {
            return Err(Error::NotDivisor { d: k, n: delta });
        }
        if k == 1 {
            return Ok(self.clone());
        }
        let step = delta / k;
        let weight = rat(1, (k * k) as i64);
        let mut out = Self::zero(delta)?;
        for (&(u, v), c) in &self.terms {
            if u % k != 0 || v % k != 0 {
                return Err(Error::NoRoot { u, v, k, delta });
            }
            // one root is (u/k, v/k); the others differ by the k-torsion step lattice
            let (u0, v0) = (u / k, v / k);
            let c = c * &weight;
            for i in 0..k {
                for j in 0..k {
                    out.add_term(((u0 + i * step) % delta, (v0 + j * step) % delta), c.clone());
                }
            }
        }
        Ok(out)
    }

    /// Represents the same element of Q[E] at level `target`, either by the
    /// inclusion Tor_delta in Tor_target (target a multiple of delta) or by
    /// restriction when every support point is target-torsion.
    pub fn rebase(&self, target: u64) -> Result<Self> {
        let delta = self.delta;
        if target == 0 {
            return Err(Error::Zero("target"));
        }
        if target == delta {
            return Ok(self.clone());
        }
        if target % delta == 0 {
            let f = target / delta;
            return Ok(GroupAlgebraElement {
                delta: target,
                terms: self
                    .terms
                    .iter()
                    .map(|(&(u, v), c)| ((u * f, v * f), c.clone()))
                    .collect(),
            });
        }
        if delta % target == 0 {
            let f = delta / target;
            let mut terms = BTreeMap::new();
            for (&(u, v), c) in &self.terms {
                if u % f != 0 || v % f != 0 {
                    return Err(Error::IncompatibleLevel {
                        from: delta,
                        to: target,
                    });
                }
                terms.insert((u / f, v / f), c.clone());
            }
            return Ok(GroupAlgebraElement {
                delta: target,
                terms,
            });
        }
        Err(Error::IncompatibleLevel {
            from: delta,
            to: target,
        })
    }

    /// Coefficient shared by all points of order `r`, or `None` if the
    /// element is not constant on that order class.
    pub fn coefficient_by_order(&self, r: u64) -> Option<Rational> {
        let delta = self.delta;
        let mut seen: Option<Rational> = None;
        for u in 0..delta {
            for v in 0..delta {
                if order_of(delta, u, v) != r {
                    continue;
                }
                let c = self.coefficient(u, v);
                match &seen {
                    None => seen = Some(c),
                    Some(s) if *s != c => return None,
                    _ => {}
                }
            }
        }
        seen
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ElementJson::from(self)).expect("element serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: ElementJson = serde_json::from_str(s)?;
        raw.try_into()
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(ElementJson::from(self)).expect("element serializes")
    }
}

impl fmt::Display for GroupAlgebraElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (&(u, v), c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{}*({},{})", c, u, v)?;
        }
        Ok(())
    }
}

/// Exact JSON number for an arbitrary-size integer.
pub fn json_number(n: &BigInt) -> serde_json::Number {
    n.to_string().parse().expect("integer literal is a JSON number")
}

pub(crate) fn parse_json_int(n: &serde_json::Number) -> Result<BigInt> {
    n.to_string()
        .parse::<BigInt>()
        .map_err(|_| Error::Json(format!("expected an integer, got {n}")))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermJson {
    u: u64,
    v: u64,
    num: serde_json::Number,
    den: serde_json::Number,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ElementJson {
    delta: u64,
    terms: Vec<TermJson>,
}

impl From<&GroupAlgebraElement> for ElementJson {
    fn from(x: &GroupAlgebraElement) -> Self {
        ElementJson {
            delta: x.delta,
            terms: x
                .terms
                .iter()
                .map(|(&(u, v), c)| TermJson {
                    u,
                    v,
                    num: json_number(c.numer()),
                    den: json_number(c.denom()),
                })
                .collect(),
        }
    }
}

impl TryFrom<ElementJson> for GroupAlgebraElement {
    type Error = Error;

    fn try_from(raw: ElementJson) -> Result<Self> {
        let mut x = GroupAlgebraElement::zero(raw.delta)?;
        let mut last: Option<(u64, u64)> = None;
        for t in raw.terms {
            if t.u >= raw.delta || t.v >= raw.delta {
                return Err(Error::Json(format!("point ({},{}) outside level {}", t.u, t.v, raw.delta)));
            }
            if last.is_some_and(|l| l >= (t.u, t.v)) {
                return Err(Error::Json("terms must be strictly sorted by (u,v)".into()));
            }
            last = Some((t.u, t.v));
            let num = parse_json_int(&t.num)?;
            let den = parse_json_int(&t.den)?;
            if !den.is_positive() || num.is_zero() || !num.gcd(&den).is_one() {
                return Err(Error::Json(format!("{num}/{den} is not a nonzero reduced fraction")));
            }
            x.terms.insert((t.u, t.v), Rational::new_raw(num, den));
        }
        Ok(x)
    }
}

/// A rational combination `sum_m c_m theta_m` of projectors at level `delta`,
/// multiplied with the rule `theta_a theta_b = theta_lcm(a,b)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThetaSum {
    delta: u64,
    coeffs: BTreeMap<u64, Rational>,
}

impl ThetaSum {
    pub fn zero(delta: u64) -> Self {
        ThetaSum {
            delta,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn theta(delta: u64, d: u64) -> Result<Self> {
        if d == 0 || delta % d != 0 {
            return Err(Error::NotDivisor { d, n: delta });
        }
        let mut s = Self::zero(delta);
        s.coeffs.insert(d, Rational::one());
        Ok(s)
    }

    pub fn unit(delta: u64) -> Self {
        Self::theta(delta, 1).expect("1 divides every level")
    }

    pub fn delta(&self) -> u64 {
        self.delta
    }

    pub fn coeffs(&self) -> &BTreeMap<u64, Rational> {
        &self.coeffs
    }

    pub fn coeff(&self, d: u64) -> Rational {
        self.coeffs.get(&d).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn add_theta(&mut self, d: u64, c: Rational) {
        if c.is_zero() {
            return;
        }
        let e = self.coeffs.entry(d).or_insert_with(Rational::zero);
        *e += c;
        if e.is_zero() {
            self.coeffs.remove(&d);
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.delta, other.delta);
        let mut out = self.clone();
        for (&d, c) in &other.coeffs {
            out.add_theta(d, c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(&-Rational::one()))
    }

    pub fn scale(&self, c: &Rational) -> Self {
        let mut out = Self::zero(self.delta);
        for (&d, x) in &self.coeffs {
            out.add_theta(d, x * c);
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        debug_assert_eq!(self.delta, other.delta);
        let mut out = Self::zero(self.delta);
        for (&d1, c1) in &self.coeffs {
            for (&d2, c2) in &other.coeffs {
                out.add_theta(d1.lcm(&d2), c1 * c2);
            }
        }
        out
    }

    /// Image under the division operator `d[1/k]` composed with the inclusion
    /// into level `k * delta`: `theta_m -> theta_{k m}`.
    pub fn divide_into(&self, k: u64) -> Self {
        let mut out = Self::zero(self.delta * k);
        for (&d, c) in &self.coeffs {
            out.add_theta(d * k, c.clone());
        }
        out
    }

    /// Dense group-algebra element. A point of order `r` receives
    /// `sum_{r | m} c_m / m^2`.
    pub fn materialize(&self) -> GroupAlgebraElement {
        let delta = self.delta;
        let mut by_order: BTreeMap<u64, Rational> = BTreeMap::new();
        let mut out = GroupAlgebraElement {
            delta,
            terms: BTreeMap::new(),
        };
        for u in 0..delta {
            for v in 0..delta {
                let r = order_of(delta, u, v);
                let c = by_order
                    .entry(r)
                    .or_insert_with(|| {
                        self.coeffs
                            .iter()
                            .filter(|(&m, _)| m % r == 0)
                            .map(|(&m, c)| c / int(m * m))
                            .sum()
                    })
                    .clone();
                out.add_term((u, v), c);
            }
        }
        out
    }

    /// Recovers the theta-coordinates of an element, failing if it is not a
    /// combination of the projectors `theta_d`, `d | delta`.
    pub fn from_element(x: &GroupAlgebraElement) -> Result<Self> {
        let delta = x.delta;
        let divs = crate::arith::divisors(delta);
        let mut out = Self::zero(delta);
        // c_r = sum_{r | m} P_m / m^2, solved from the largest order down
        for &r in divs.iter().rev() {
            let c_r = x.coefficient_by_order(r).ok_or_else(|| {
                Error::Consistency(format!("coefficients of order-{r} points differ"))
            })?;
            let higher: Rational = out
                .coeffs
                .iter()
                .filter(|(&m, _)| m != r && m % r == 0)
                .map(|(&m, c)| c / int(m * m))
                .sum();
            out.add_theta(r, (c_r - higher) * int(r * r));
        }
        if out.materialize() != *x {
            return Err(Error::Consistency("element is not in the span of the projectors".into()));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gae(delta: u64, pts: &[(u64, u64, i64, i64)]) -> GroupAlgebraElement {
        GroupAlgebraElement::from_terms(delta, pts.iter().map(|&(u, v, n, d)| (u, v, rat(n, d)))).unwrap()
    }

    #[test]
    fn theta_basics() {
        let t = GroupAlgebraElement::theta(5, 1).unwrap();
        assert_eq!(t, GroupAlgebraElement::unit(5).unwrap());
        let t22 = GroupAlgebraElement::theta(2, 2).unwrap();
        assert_eq!(t22.terms().count(), 4);
        assert!(t22.terms().all(|(_, c)| *c == rat(1, 4)));
        assert_eq!(t22.total_mass(), rat(1, 1));
        let prod = GroupAlgebraElement::theta(6, 2)
            .unwrap()
            .convolve(&GroupAlgebraElement::theta(6, 3).unwrap())
            .unwrap();
        assert_eq!(prod, GroupAlgebraElement::theta(6, 6).unwrap());
        assert!(matches!(GroupAlgebraElement::theta(6, 4), Err(Error::NotDivisor { .. })));
    }

    #[test]
    fn order_examples() {
        assert_eq!(TorsionPoint::new(6, 0, 0).unwrap().order(), 1);
        assert_eq!(TorsionPoint::new(6, 3, 0).unwrap().order(), 2);
        assert_eq!(TorsionPoint::new(6, 2, 3).unwrap().order(), 6);
        // brute force smallest n with n * (2,3) = 0 mod 6
        let n = (1..=6).find(|n| (2 * n) % 6 == 0 && (3 * n) % 6 == 0).unwrap();
        assert_eq!(n, 6);
    }

    #[test]
    fn generators_multiply_by_group_law() {
        let a = GroupAlgebraElement::point(TorsionPoint::new(4, 1, 3).unwrap()).unwrap();
        let b = GroupAlgebraElement::point(TorsionPoint::new(4, 3, 2).unwrap()).unwrap();
        assert_eq!(
            a.convolve(&b).unwrap(),
            GroupAlgebraElement::point(TorsionPoint::new(4, 0, 1).unwrap()).unwrap()
        );
        let x = gae(4, &[(1, 2, 3, 5), (0, 3, -1, 2)]);
        assert_eq!(x.convolve(&GroupAlgebraElement::unit(4).unwrap()).unwrap(), x);
        assert!(matches!(
            x.convolve(&GroupAlgebraElement::unit(2).unwrap()),
            Err(Error::LevelMismatch { .. })
        ));
    }

    #[test]
    fn push_and_divide() {
        let x = gae(6, &[(1, 2, 3, 5), (0, 3, -1, 2)]);
        assert_eq!(x.m_push(1), x);
        assert_eq!(
            x.m_push(6),
            GroupAlgebraElement::unit(6).unwrap().scale(&x.total_mass())
        );
        assert_eq!(
            GroupAlgebraElement::theta(2, 2).unwrap().m_push(2),
            GroupAlgebraElement::theta(2, 1).unwrap()
        );
        assert_eq!(x.divide(1).unwrap(), x);
        assert_eq!(
            GroupAlgebraElement::theta(2, 1).unwrap().divide(2).unwrap(),
            GroupAlgebraElement::theta(2, 2).unwrap()
        );
        assert!(matches!(x.divide(2), Err(Error::NoRoot { .. })));
        assert!(matches!(x.divide(4), Err(Error::NotDivisor { .. })));
    }

    #[test]
    fn rebase_levels() {
        assert_eq!(
            GroupAlgebraElement::theta(2, 2).unwrap().rebase(4).unwrap(),
            GroupAlgebraElement::theta(4, 2).unwrap()
        );
        let x = gae(6, &[(1, 2, 3, 5)]);
        assert_eq!(x.rebase(6).unwrap(), x);
        let order4 = GroupAlgebraElement::point(TorsionPoint::new(4, 1, 0).unwrap()).unwrap();
        assert!(matches!(order4.rebase(2), Err(Error::IncompatibleLevel { .. })));
        assert!(matches!(x.rebase(4), Err(Error::IncompatibleLevel { .. })));
        let back = GroupAlgebraElement::theta(4, 2).unwrap().rebase(2).unwrap();
        assert_eq!(back, GroupAlgebraElement::theta(2, 2).unwrap());
    }

    #[test]
    fn json_shape() {
        let x = gae(3, &[(2, 1, -6, 4), (0, 0, 1, 1)]);
        assert_eq!(
            x.to_json(),
            r#"{"delta":3,"terms":[{"u":0,"v":0,"num":1,"den":1},{"u":2,"v":1,"num":-3,"den":2}]}"#
        );
        assert_eq!(GroupAlgebraElement::from_json(&x.to_json()).unwrap(), x);
        for bad in [
            r#"{"delta":3,"terms":[{"u":2,"v":1,"num":-6,"den":4}]}"#,
            r#"{"delta":3,"terms":[{"u":2,"v":1,"num":1,"den":-2}]}"#,
            r#"{"delta":3,"terms":[{"u":2,"v":1,"num":1,"den":2},{"u":0,"v":0,"num":1,"den":1}]}"#,
            r#"{"delta":3,"terms":[{"u":3,"v":1,"num":1,"den":2}]}"#,
        ] {
            assert!(GroupAlgebraElement::from_json(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn theta_sum_materializes_like_convolution() {
        for delta in 1..=12u64 {
            let divs = crate::arith::divisors(delta);
            for &d1 in &divs {
                for &d2 in &divs {
                    let s = ThetaSum::theta(delta, d1)
                        .unwrap()
                        .scale(&rat(3, 1))
                        .sub(&ThetaSum::theta(delta, d2).unwrap());
                    let t = ThetaSum::theta(delta, d2).unwrap();
                    let direct = s.materialize().convolve(&t.materialize()).unwrap();
                    assert_eq!(s.mul(&t).materialize(), direct);
                    assert_eq!(ThetaSum::from_element(&direct).unwrap(), s.mul(&t));
                }
            }
        }
    }
}
