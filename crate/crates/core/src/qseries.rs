//! Truncated generating series in the class direction and the check that the
//! invariant series factors through products of refined divisor-sum series.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_rational::BigRational;
use rayon::prelude::*;
use serde_json::json;

use crate::arith;
use crate::diagrams::{self, FloorDiagram, Labels, TangencyProfile};
use crate::error::{Error, Result};
use crate::sigma::{bold_sigma_by_upsilon, local_invariant};
use crate::torsion::{GroupAlgebraElement, ThetaSum};

/// `sum_{a=1}^N c_a q^a` with coefficients in Q[Tor_delta].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GASeries {
    delta: u64,
    coeffs: Vec<GroupAlgebraElement>,
}

impl GASeries {
    pub fn zero(delta: u64, n: usize) -> Result<Self> {
        Ok(GASeries {
            delta,
            coeffs: vec![GroupAlgebraElement::zero(delta)?; n],
        })
    }

    /// Builds a series from its coefficients at `a = 1..=N`.
    pub fn from_coefficients(delta: u64, coeffs: Vec<GroupAlgebraElement>) -> Result<Self> {
        if let Some(c) = coeffs.iter().find(|c| c.delta() != delta) {
            return Err(Error::LevelMismatch {
                left: delta,
                right: c.delta(),
            });
        }
        if delta == 0 {
            return Err(Error::Zero("delta"));
        }
        Ok(GASeries { delta, coeffs })
    }

    pub fn delta(&self) -> u64 {
        self.delta
    }

    pub fn truncation(&self) -> usize {
        self.coeffs.len()
    }

    /// Coefficient of `q^a`, `1 <= a <= N`.
    pub fn coefficient(&self, a: usize) -> Option<&GroupAlgebraElement> {
        a.checked_sub(1).and_then(|i| self.coeffs.get(i))
    }

    pub fn coefficients(&self) -> &[GroupAlgebraElement] {
        &self.coeffs
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(x, y)| x.try_add(y))
            .collect::<Result<Vec<_>>>()?;
        Ok(GASeries { delta: self.delta, coeffs })
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        GASeries {
            delta: self.delta,
            coeffs: self.coeffs.iter().map(|x| x.scale(c)).collect(),
        }
    }

    fn check(&self, other: &Self) -> Result<()> {
        if self.delta != other.delta {
            return Err(Error::LevelMismatch {
                left: self.delta,
                right: other.delta,
            });
        }
        if self.coeffs.len() != other.coeffs.len() {
            return Err(Error::InvalidProfile(format!(
                "truncations differ: {} and {}",
                self.coeffs.len(),
                other.coeffs.len()
            )));
        }
        Ok(())
    }

    /// Truncated Cauchy product; both factors start at `q^1`.
    pub fn cauchy(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let n = self.coeffs.len();
        let mut out = GASeries::zero(self.delta, n)?;
        for a in 2..=n {
            for i in 1..a {
                let term = self.coeffs[i - 1].convolve(&other.coeffs[a - i - 1])?;
                out.coeffs[a - 1].add_assign_checked(&term)?;
            }
        }
        Ok(out)
    }

    /// `q d/dq`: multiplies the coefficient of `q^a` by `a`.
    pub fn q_derivative(&self) -> Self {
        GASeries {
            delta: self.delta,
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .map(|(i, x)| x.scale(&BigRational::from_integer(BigInt::from(i + 1))))
                .collect(),
        }
    }

    /// One row per `a`, one column per point in the union of supports.
    pub fn to_csv(&self) -> String {
        let cols: BTreeSet<(u64, u64)> = self.coeffs.iter().flat_map(|c| c.support()).collect();
        let mut out = String::from("a");
        for (u, v) in &cols {
            out.push_str(&format!(",{u}:{v}"));
        }
        out.push('\n');
        for (i, c) in self.coeffs.iter().enumerate() {
            out.push_str(&(i + 1).to_string());
            for &(u, v) in &cols {
                let x = c.coefficient(u, v);
                out.push_str(&format!(",{}/{}", x.numer(), x.denom()));
            }
            out.push('\n');
        }
        out
    }
}

/// `sigma_bar^d(a)` for `a = 1..=N`.
pub fn sigma_series(d: u64, n: usize) -> Result<Vec<BigInt>> {
    (1..=n as u64).map(|a| arith::sigma_bar(d, a)).collect()
}

/// `q d/dq` on a scalar series indexed from `q^1`.
pub fn q_derivative(s: &[BigInt]) -> Vec<BigInt> {
    s.iter().enumerate().map(|(i, c)| c * BigInt::from(i + 1)).collect()
}

/// Coefficient of `q^a` is `local_invariant(a, w1, n, delta)`.
pub fn local_series(n_ends: u32, w1: u64, delta: u64, n: usize) -> Result<GASeries> {
    let coeffs = (1..=n as u64)
        .into_par_iter()
        .map(|a| local_invariant(a, w1, n_ends, delta, None))
        .collect::<Result<Vec<_>>>()?;
    GASeries::from_coefficients(delta, coeffs)
}

/// Coefficient of `q^a` is the diagram sum `invariant(g, a, profile, delta)`.
pub fn invariant_series(g: u64, profile: &TangencyProfile, delta: u64, n: usize) -> Result<GASeries> {
    profile.check_delta(delta)?;
    let coeffs = (1..=n as u64)
        .into_par_iter()
        .map(|a| diagrams::invariant(g, a, profile, delta))
        .collect::<Result<Vec<_>>>()?;
    GASeries::from_coefficients(delta, coeffs)
}

/// One unlabelled diagram in a factorization report.
#[derive(Debug, Clone)]
pub struct TemplateTerm {
    /// The diagram with every floor label set to 1.
    pub diagram: FloorDiagram,
    pub edge_factor: BigInt,
    pub delta_gcd: u64,
    /// Valence of each floor, bottom to top.
    pub valences: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct FactorizationReport {
    pub g: u64,
    pub profile: TangencyProfile,
    pub delta: u64,
    pub truncation: usize,
    pub templates: Vec<TemplateTerm>,
    /// Values of `a` where the two sides differ.
    pub mismatches: Vec<usize>,
}

impl FactorizationReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "g": self.g,
            "profile": self.profile.weights(),
            "delta": self.delta,
            "truncation": self.truncation,
            "templates": self.templates.iter().map(|t| json!({
                "diagram": serde_json::from_str::<serde_json::Value>(&t.diagram.to_json()).expect("diagram json"),
                "W": crate::torsion::json_number(&t.edge_factor),
                "delta_gcd": t.delta_gcd,
                "valences": t.valences,
            })).collect::<Vec<_>>(),
            "mismatches": self.mismatches,
            "pass": self.passed(),
        })
    }
}

type ThetaSeries = Vec<ThetaSum>;

fn theta_cauchy(x: &ThetaSeries, y: &ThetaSeries, level: u64) -> ThetaSeries {
    let n = x.len();
    let mut out = vec![ThetaSum::zero(level); n];
    for a in 2..=n {
        for i in 1..a {
            let term = x[i - 1].mul(&y[a - i - 1]);
            out[a - 1] = out[a - 1].add(&term);
        }
    }
    out
}

/// Series of one template: `W d[1/(delta/delta_D)] prod_V sum_a a^(n_V-1) sigma_{delta_D}(a) q^a`.
pub fn template_series(t: &TemplateTerm, delta: u64, n: usize) -> Result<GASeries> {
    let dd = t.delta_gcd;
    let mut prod: Option<ThetaSeries> = None;
    for &n_v in &t.valences {
        let factor = (1..=n as u64)
            .map(|a| {
                let c = BigInt::from(a).pow(n_v.saturating_sub(1) as u32);
                Ok(bold_sigma_by_upsilon(dd, a)?.scale(&BigRational::from_integer(c)))
            })
            .collect::<Result<ThetaSeries>>()?;
        prod = Some(match prod {
            None => factor,
            Some(p) => theta_cauchy(&p, &factor, dd),
        });
    }
    let w = BigRational::from_integer(t.edge_factor.clone());
    let coeffs = match prod {
        Some(p) => p
            .iter()
            .map(|x| x.divide_into(delta / dd).scale(&w).materialize())
            .collect(),
        None => vec![GroupAlgebraElement::zero(delta)?; n],
    };
    GASeries::from_coefficients(delta, coeffs)
}

/// Unlabelled diagrams of genus `g` and the given profile, with their
/// multiplicity data at level `delta`.
pub fn templates(g: u64, profile: &TangencyProfile, delta: u64) -> Result<Vec<TemplateTerm>> {
    let shapes = diagrams::enumerate_with(g, profile, Labels::Free)?;
    Ok(shapes
        .into_iter()
        .map(|d| {
            let valences = d.floors().map(|(i, _)| d.valence(i)).collect();
            TemplateTerm {
                edge_factor: d.edge_factor(),
                delta_gcd: d.delta_gcd(delta),
                valences,
                diagram: d,
            }
        })
        .collect())
}

/// Compares the invariant series with the sum over unlabelled templates of
/// their factorized series, coefficient by coefficient up to `q^N`.
pub fn factorization_check(g: u64, profile: &TangencyProfile, delta: u64, n: usize) -> Result<FactorizationReport> {
    profile.check_delta(delta)?;
    let terms = templates(g, profile, delta)?;
    let parts = terms
        .par_iter()
        .map(|t| template_series(t, delta, n))
        .collect::<Result<Vec<_>>>()?;
    let mut factored = GASeries::zero(delta, n)?;
    for p in &parts {
        factored = factored.try_add(p)?;
    }
    let direct = invariant_series(g, profile, delta, n)?;
    let mismatches = (1..=n)
        .filter(|&a| factored.coefficient(a) != direct.coefficient(a))
        .collect();
    Ok(FactorizationReport {
        g,
        profile: profile.clone(),
        delta,
        truncation: n,
        templates: terms,
        mismatches,
    })
}

/// Number of distinct unlabelled, unweighted diagrams among `ds`.
pub fn count_shapes(ds: &[FloorDiagram]) -> usize {
    let keys: BTreeSet<Vec<u8>> = ds
        .iter()
        .map(|d| crate::polynomial::DiagramTemplate::from_diagram(&d.strip_labels()).canonical_key())
        .collect();
    keys.len()
}

/// Coefficients of `sum_a sigma_2(a) q^a` split along theta_1 and theta_2.
pub fn delta_two_blocks(n: usize) -> Result<BTreeMap<u64, Vec<BigRational>>> {
    let s1 = sigma_series(1, n)?;
    let s2 = sigma_series(2, n)?;
    let mut out = BTreeMap::new();
    out.insert(1, s2.iter().cloned().map(BigRational::from_integer).collect());
    out.insert(
        2,
        s1.iter().zip(&s2).map(|(a, b)| BigRational::from_integer(a - b)).collect(),
    );
    Ok(out)
}
