//! Unweighted diagram templates, their flow polytopes, and exact polynomial
//! fits of template contributions in the end weights.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde_json::json;

use crate::arith::{divisors, upsilon};
use crate::diagrams::{
    forest_violation, search, DiagramJson, Edge, Endpoint, FloorDiagram, Labels, Level, TangencyProfile, Weights,
};
use crate::error::{Error, Result};
use crate::torsion::{json_number, GroupAlgebraElement, ThetaSum};

/// A floor diagram with its edge weights forgotten. Floor labels are kept.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DiagramTemplate {
    levels: Vec<Level>,
    edges: Vec<(Endpoint, Endpoint)>,
}

impl DiagramTemplate {
    pub fn new(levels: Vec<Level>, mut edges: Vec<(Endpoint, Endpoint)>) -> Result<Self> {
        // weight 1 everywhere gives the malformed-input checks for free
        FloorDiagram::new(levels.clone(), edges.iter().map(|&(lo, hi)| Edge { lo, hi, w: 1 }).collect())?;
        edges.sort_unstable();
        Ok(DiagramTemplate { levels, edges })
    }

    pub fn from_diagram(d: &FloorDiagram) -> Self {
        DiagramTemplate {
            levels: d.levels().to_vec(),
            edges: d.edges().iter().map(|e| (e.lo, e.hi)).collect(),
        }
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn edges(&self) -> &[(Endpoint, Endpoint)] {
        &self.edges
    }

    fn skeleton(&self) -> FloorDiagram {
        FloorDiagram::new(
            self.levels.clone(),
            self.edges.iter().map(|&(lo, hi)| Edge { lo, hi, w: 1 }).collect(),
        )
        .expect("template checked on construction")
    }

    pub fn sources(&self) -> usize {
        self.edges.iter().filter(|e| e.0 == Endpoint::Bottom).count()
    }

    pub fn sinks(&self) -> usize {
        self.edges.iter().filter(|e| e.1 == Endpoint::Top).count()
    }

    fn floors(&self) -> Vec<(u64, usize)> {
        self.levels
            .iter()
            .enumerate()
            .filter_map(|(i, l)| match l {
                Level::Floor { a } => Some((*a, self.valence(i))),
                Level::Flat => None,
            })
            .collect()
    }

    fn valence(&self, i: usize) -> usize {
        let v = Endpoint::Level(i);
        self.edges.iter().filter(|e| e.0 == v || e.1 == v).count()
    }

    pub fn genus(&self) -> i64 {
        self.skeleton().genus()
    }

    /// First Betti number; the dimension of every flow polytope of the template.
    pub fn betti(&self) -> i64 {
        self.genus() - self.floors().len() as i64
    }

    /// Checks the clauses that do not involve weights: flats are bivalent,
    /// floors have incoming and outgoing edges, the graph is connected, the
    /// genus is `g` and the cut graph is a forest with one end per component.
    pub fn check(&self, g: u64) -> Result<()> {
        for (i, l) in self.levels.iter().enumerate() {
            let v = Endpoint::Level(i);
            let ins = self.edges.iter().filter(|e| e.1 == v).count();
            let outs = self.edges.iter().filter(|e| e.0 == v).count();
            let ok = match l {
                Level::Flat => ins == 1 && outs == 1,
                Level::Floor { a } => *a > 0 && ins >= 1 && outs >= 1,
            };
            if !ok {
                return Err(Error::MalformedDiagram(format!("level {i} has {ins} in and {outs} out edges")));
            }
        }
        if self.skeleton().components() != 1 {
            return Err(Error::MalformedDiagram("template is disconnected".into()));
        }
        if self.genus() != g as i64 {
            return Err(Error::MalformedDiagram(format!("genus is {}, expected {g}", self.genus())));
        }
        if let Some(msg) = forest_violation(&self.levels, self.edges.iter().map(|&(lo, hi)| (lo, Some(hi)))) {
            return Err(Error::MalformedDiagram(msg));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&DiagramJson::from_parts(&self.levels, self.edges.iter().map(|&(lo, hi)| (lo, hi, None))))
            .expect("template serializes")
    }

    /// Accepts diagram JSON with or without weights; weights are dropped.
    pub fn from_json(s: &str) -> Result<Self> {
        let raw: DiagramJson = serde_json::from_str(s)?;
        let (levels, edges) = raw.into_parts()?;
        Self::new(levels, edges.into_iter().map(|(lo, hi, _)| (lo, hi)).collect())
    }

    pub fn canonical_key(&self) -> Vec<u8> {
        self.to_json().into_bytes()
    }

    /// Rows are the levels followed by one vertex per infinite end (in edge
    /// order); columns are edges. An edge has `-1` at its lower and `+1` at
    /// its upper vertex.
    pub fn adjacency_matrix(&self) -> Vec<Vec<i64>> {
        let l = self.levels.len();
        let ends: Vec<usize> = (0..self.edges.len())
            .filter(|&k| matches!(self.edges[k].0, Endpoint::Bottom) || matches!(self.edges[k].1, Endpoint::Top))
            .collect();
        let mut m = vec![vec![0i64; self.edges.len()]; l + ends.len()];
        for (k, &(lo, hi)) in self.edges.iter().enumerate() {
            let row = |p: Endpoint| match p {
                Endpoint::Level(i) => i,
                _ => l + ends.iter().position(|&j| j == k).expect("end edge"),
            };
            m[row(lo)][k] -= 1;
            m[row(hi)][k] += 1;
        }
        m
    }

    /// Right-hand side of `A w = d` for a weighting whose end edges carry
    /// `end_weights` (in edge order): zero on levels, `-w` at sources and
    /// `+w` at sinks.
    pub fn flow_rhs(&self, end_weights: &[u64]) -> Result<Vec<i64>> {
        let mut rhs = vec![0i64; self.levels.len()];
        let mut it = end_weights.iter();
        for &(lo, hi) in &self.edges {
            let w = if lo == Endpoint::Bottom || hi == Endpoint::Top {
                *it.next().ok_or_else(|| Error::InvalidProfile("too few end weights".into()))? as i64
            } else {
                continue;
            };
            rhs.push(if lo == Endpoint::Bottom { -w } else { w });
        }
        if it.next().is_some() {
            return Err(Error::InvalidProfile("too many end weights".into()));
        }
        Ok(rhs)
    }

    /// The weighted diagram for `w` (in edge order).
    pub fn weighted(&self, w: &[u64]) -> Result<FloorDiagram> {
        if w.len() != self.edges.len() {
            return Err(Error::MalformedDiagram(format!("{} weights for {} edges", w.len(), self.edges.len())));
        }
        FloorDiagram::new(
            self.levels.clone(),
            self.edges.iter().zip(w).map(|(&(lo, hi), &w)| Edge { lo, hi, w }).collect(),
        )
    }

    /// `prod_{E_b} w_e prod_{E_o} w_e^2`.
    pub fn edge_factor(&self, w: &[u64]) -> BigInt {
        let flat = |p: Endpoint| matches!(p, Endpoint::Level(i) if self.levels[i] == Level::Flat);
        let mut out = BigInt::one();
        for (&(lo, hi), &x) in self.edges.iter().zip(w) {
            let mut e = 0;
            if lo != Endpoint::Bottom && hi != Endpoint::Top {
                e += 1;
            }
            if !flat(lo) && !flat(hi) {
                e += 2;
            }
            out *= BigInt::from(x).pow(e);
        }
        out
    }

    /// `|E_b| + 2 |E_o| + b_1`.
    pub fn degree_bound(&self) -> u32 {
        let mut deg = 0u32;
        let flat = |p: Endpoint| matches!(p, Endpoint::Level(i) if self.levels[i] == Level::Flat);
        for &(lo, hi) in &self.edges {
            if lo != Endpoint::Bottom && hi != Endpoint::Top {
                deg += 1;
            }
            if !flat(lo) && !flat(hi) {
                deg += 2;
            }
        }
        deg + self.betti().max(0) as u32
    }

    /// Positive integral flows with end weights `profile`, one per distinct
    /// weighted diagram. Each weighting lists edge weights in edge order.
    pub fn weightings(&self, profile: &TangencyProfile) -> Result<Vec<Vec<u64>>> {
        let src_edges: Vec<usize> = (0..self.edges.len()).filter(|&k| self.edges[k].0 == Endpoint::Bottom).collect();
        let snk_edges: Vec<usize> = (0..self.edges.len()).filter(|&k| self.edges[k].1 == Endpoint::Top).collect();
        if src_edges.len() != profile.sources().len() || snk_edges.len() != profile.sinks().len() {
            return Err(Error::InvalidProfile(format!(
                "template has {}+{} ends, profile {profile} does not match",
                src_edges.len(),
                snk_edges.len()
            )));
        }
        let sinks = profile.sinks();
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        for perm in multiset_permutations(&profile.sources()) {
            let mut w = vec![0u64; self.edges.len()];
            for (&k, &x) in src_edges.iter().zip(&perm) {
                w[k] = x;
            }
            self.fill(0, &mut w, &mut |w| {
                let mut got: Vec<u64> = snk_edges.iter().map(|&k| w[k]).collect();
                got.sort_unstable();
                if got == sinks {
                    let d = self.weighted(w).expect("positive weights");
                    if seen.insert(d) {
                        out.push(w.to_vec());
                    }
                }
            });
        }
        Ok(out)
    }

    fn fill(&self, i: usize, w: &mut Vec<u64>, emit: &mut dyn FnMut(&[u64])) {
        if i == self.levels.len() {
            emit(w);
            return;
        }
        let v = Endpoint::Level(i);
        let inflow: u64 = (0..self.edges.len()).filter(|&k| self.edges[k].1 == v).map(|k| w[k]).sum();
        let outs: Vec<usize> = (0..self.edges.len()).filter(|&k| self.edges[k].0 == v).collect();
        for parts in compositions(inflow, outs.len()) {
            for (&k, &p) in outs.iter().zip(&parts) {
                w[k] = p;
            }
            self.fill(i + 1, w, emit);
        }
        for &k in &outs {
            w[k] = 0;
        }
    }

    /// `Upsilon^D_d(e) = prod_V a_V^(n_V-1) * sum over (d_V) with gcd d of prod_V Upsilon^e_{d_V}(a_V)`.
    pub fn upsilon(&self, d: u64, e: u64) -> Result<BigInt> {
        let floors = self.floors();
        let divs = divisors(e);
        let mut total = BigInt::zero();
        let mut idx = vec![0usize; floors.len()];
        'outer: loop {
            let g = idx.iter().fold(0u64, |g, &k| g.gcd(&divs[k]));
            if g == d {
                let mut term = BigInt::one();
                for (&(a, _), &k) in floors.iter().zip(&idx) {
                    term *= upsilon(e, divs[k], a)?;
                }
                total += term;
            }
            for slot in idx.iter_mut() {
                *slot += 1;
                if *slot < divs.len() {
                    continue 'outer;
                }
                *slot = 0;
            }
            break;
        }
        let pre: BigInt = floors.iter().map(|&(a, n)| BigInt::from(a).pow(n.saturating_sub(1) as u32)).product();
        Ok(pre * total)
    }

    /// Divisor-sum multiplicity of a weighting with `delta_D = e`, before the
    /// edge factor: `sum_{d | e} Upsilon^D_d(e) theta_{delta/d}`.
    fn phi(&self, e: u64, delta: u64) -> Result<ThetaSum> {
        let mut out = ThetaSum::zero(delta);
        for d in divisors(e) {
            out.add_theta(delta / d, BigRational::from_integer(self.upsilon(d, e)?));
        }
        Ok(out)
    }

    /// The coefficients `gamma_d`, `d | delta`, determined by
    /// `sum_{d | e} gamma_d = phi(e)` for every `e | delta`.
    pub fn gamma_theta(&self, delta: u64) -> Result<BTreeMap<u64, ThetaSum>> {
        if delta == 0 {
            return Err(Error::Zero("delta"));
        }
        let mut out: BTreeMap<u64, ThetaSum> = BTreeMap::new();
        for e in divisors(delta) {
            let mut g = self.phi(e, delta)?;
            for (&d, c) in &out {
                if e % d == 0 {
                    g = g.sub(c);
                }
            }
            out.insert(e, g);
        }
        Ok(out)
    }

    pub fn gamma_coeffs(&self, delta: u64) -> Result<BTreeMap<u64, GroupAlgebraElement>> {
        Ok(self.gamma_theta(delta)?.into_iter().map(|(d, t)| (d, t.materialize())).collect())
    }

    /// `sum_{d | delta} gamma_d sum_{w in Omega(profile/d)} f(d w)`.
    pub fn invariant_theta(&self, profile: &TangencyProfile, delta: u64) -> Result<ThetaSum> {
        profile.check_delta(delta)?;
        let mut out = ThetaSum::zero(delta);
        for (d, gamma) in self.gamma_theta(delta)? {
            let scaled = TangencyProfile::new(profile.weights().iter().map(|&x| x / d as i64).collect())?;
            let mut s = BigInt::zero();
            for w in self.weightings(&scaled)? {
                let dw: Vec<u64> = w.iter().map(|x| x * d).collect();
                s += self.edge_factor(&dw);
            }
            out = out.add(&gamma.scale(&BigRational::from_integer(s)));
        }
        Ok(out)
    }

    pub fn invariant(&self, profile: &TangencyProfile, delta: u64) -> Result<GroupAlgebraElement> {
        Ok(self.invariant_theta(profile, delta)?.materialize())
    }

    /// Sum of multiplicities of all weightings, computed diagram by diagram.
    pub fn direct_sum(&self, profile: &TangencyProfile, delta: u64) -> Result<GroupAlgebraElement> {
        profile.check_delta(delta)?;
        let mut out = GroupAlgebraElement::zero(delta)?;
        for w in self.weightings(profile)? {
            out.add_assign_checked(&self.weighted(&w)?.multiplicity(delta)?)?;
        }
        Ok(out)
    }
}

/// Contribution of `t` to the invariant at level `delta`.
pub fn invariant_by_template(t: &DiagramTemplate, profile: &TangencyProfile, delta: u64) -> Result<GroupAlgebraElement> {
    t.invariant(profile, delta)
}

pub fn gamma_coeffs(t: &DiagramTemplate, delta: u64) -> Result<BTreeMap<u64, GroupAlgebraElement>> {
    t.gamma_coeffs(delta)
}

/// Coordinates of `x` along the projectors `theta_d`, `d | delta`.
pub fn theta_coordinates(x: &GroupAlgebraElement) -> Result<BTreeMap<u64, BigRational>> {
    let t = ThetaSum::from_element(x)?;
    Ok(divisors(x.delta()).into_iter().map(|d| (d, t.coeff(d))).collect())
}

/// All templates of genus `g` with the given end counts, in search order.
pub fn enumerate_templates(g: u64, sources: usize, sinks: usize, labels: Labels) -> Result<Vec<DiagramTemplate>> {
    if sources == 0 || sinks == 0 {
        return Err(Error::InvalidProfile("need at least one source and one sink".into()));
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for raw in search(g, Weights::Free { sources, sinks }, labels)? {
        let t = DiagramTemplate::new(raw.levels, raw.edges.iter().map(|e| (e.lo, e.hi)).collect())?;
        if t.skeleton().components() != 1 {
            continue;
        }
        t.check(g)
            .map_err(|e| Error::Consistency(format!("enumerated an invalid template: {e}")))?;
        if seen.insert(t.canonical_key()) {
            out.push(t);
        }
    }
    Ok(out)
}

/// Distinct permutations of a multiset, in lexicographic order.
fn multiset_permutations(items: &[u64]) -> Vec<Vec<u64>> {
    let mut v = items.to_vec();
    v.sort_unstable();
    let mut out = vec![v.clone()];
    while let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) {
        let j = (i..v.len()).rev().find(|&j| v[j] > v[i - 1]).expect("pivot exists");
        v.swap(i - 1, j);
        v[i..].reverse();
        out.push(v.clone());
    }
    out
}

/// Ordered ways to write `s` as `k` positive parts.
fn compositions(s: u64, k: usize) -> Vec<Vec<u64>> {
    fn go(s: u64, k: usize, cur: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if k == 1 {
            if s >= 1 {
                cur.push(s);
                out.push(cur.clone());
                cur.pop();
            }
            return;
        }
        for p in 1..s {
            if s - p < (k - 1) as u64 {
                break;
            }
            cur.push(p);
            go(s - p, k - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k > 0 {
        go(s, k, &mut Vec::new(), &mut out);
    }
    out
}

/// Residue class imposed on every fit variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Chamber {
    pub modulus: u64,
    pub residue: u64,
}

impl Chamber {
    pub fn new(modulus: u64, residue: u64) -> Result<Self> {
        if modulus == 0 {
            return Err(Error::Zero("chamber modulus"));
        }
        Ok(Chamber { modulus, residue: residue % modulus })
    }

    pub fn contains(&self, vars: &[i64]) -> bool {
        vars.iter().all(|&x| x.rem_euclid(self.modulus as i64) as u64 == self.residue)
    }
}

impl std::str::FromStr for Chamber {
    type Err = Error;

    /// `"m:r"`.
    fn from_str(s: &str) -> Result<Self> {
        let (m, r) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidProfile(format!("chamber {s:?} is not of the form m:r")))?;
        let parse = |t: &str| {
            t.trim()
                .parse::<u64>()
                .map_err(|_| Error::InvalidProfile(format!("cannot parse {t:?} in chamber")))
        };
        Chamber::new(parse(m)?, parse(r)?)
    }
}

/// Exponent vectors of total degree at most `deg` in `k` variables, by degree
/// then lexicographically.
pub fn monomials(k: usize, deg: u32) -> Vec<Vec<u32>> {
    fn go(k: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == k {
            if left == 0 {
                out.push(cur.clone());
            }
            return;
        }
        for e in (0..=left).rev() {
            cur.push(e);
            go(k, left - e, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for d in 0..=deg {
        go(k, d, &mut Vec::new(), &mut out);
    }
    out
}

fn eval_monomial(e: &[u32], x: &[i64]) -> BigRational {
    BigRational::from_integer(e.iter().zip(x).map(|(&e, &x)| BigInt::from(x).pow(e)).product())
}

pub enum Solution {
    Unique(Vec<Vec<BigRational>>),
    Underdetermined { rank: usize },
    Inconsistent,
}

/// Solves `m x = b` exactly for every column of `b`.
pub fn solve_exact(mut m: Vec<Vec<BigRational>>, mut b: Vec<Vec<BigRational>>) -> Solution {
    let rows = m.len();
    let cols = m.first().map_or(0, |r| r.len());
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..rows).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(r, p);
        b.swap(r, p);
        let inv = m[r][c].recip();
        for x in m[r].iter_mut() {
            *x *= &inv;
        }
        for x in b[r].iter_mut() {
            *x *= &inv;
        }
        for i in 0..rows {
            if i != r && !m[i][c].is_zero() {
                let f = m[i][c].clone();
                for j in 0..cols {
                    let t = &f * &m[r][j];
                    m[i][j] -= t;
                }
                for j in 0..b[i].len() {
                    let t = &f * &b[r][j];
                    b[i][j] -= t;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    if b[r..].iter().any(|row| row.iter().any(|x| !x.is_zero())) {
        return Solution::Inconsistent;
    }
    if r < cols {
        return Solution::Underdetermined { rank: r };
    }
    Solution::Unique(b.into_iter().take(cols).collect())
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub template: DiagramTemplate,
    pub delta: u64,
    pub chamber: Chamber,
    pub degree_bound: u32,
    pub fit: Vec<TangencyProfile>,
    pub holdout: Vec<TangencyProfile>,
    /// Per theta index, the nonzero coefficients by exponent vector.
    pub polynomials: BTreeMap<u64, Vec<(Vec<u32>, BigRational)>>,
    pub failure: Option<String>,
}

impl FitReport {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }

    /// Value of the fitted polynomial for theta index `d` at `vars`.
    pub fn evaluate(&self, d: u64, vars: &[i64]) -> BigRational {
        self.polynomials
            .get(&d)
            .map(|p| p.iter().map(|(e, c)| c * eval_monomial(e, vars)).sum())
            .unwrap_or_else(BigRational::zero)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let frac = |c: &BigRational| json!({"num": json_number(c.numer()), "den": json_number(c.denom())});
        json!({
            "template": serde_json::from_str::<serde_json::Value>(&self.template.to_json()).expect("template json"),
            "delta": self.delta,
            "chamber": {"modulus": self.chamber.modulus, "residue": self.chamber.residue},
            "degree_bound": self.degree_bound,
            "fit": self.fit.iter().map(|p| p.weights().to_vec()).collect::<Vec<_>>(),
            "holdout": self.holdout.iter().map(|p| p.weights().to_vec()).collect::<Vec<_>>(),
            "polynomials": self.polynomials.iter().map(|(d, p)| json!({
                "theta": d,
                "terms": p.iter().map(|(e, c)| json!({"exponents": e, "coefficient": frac(c)})).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
            "pass": self.passed(),
            "failure": self.failure,
        })
    }
}

fn fit_vars(p: &TangencyProfile) -> Vec<i64> {
    let w = p.weights();
    w[..w.len() - 1].to_vec()
}

/// Interpolates each theta-coordinate of the template contribution by a
/// polynomial of degree at most [`DiagramTemplate::degree_bound`] in the first
/// `n-1` profile entries, using `fit`, then checks it on `holdout`.
pub fn polynomial_fit(
    t: &DiagramTemplate,
    delta: u64,
    chamber: Chamber,
    fit: &[TangencyProfile],
    holdout: &[TangencyProfile],
) -> Result<FitReport> {
    let deg = t.degree_bound();
    let mut report = FitReport {
        template: t.clone(),
        delta,
        chamber,
        degree_bound: deg,
        fit: fit.to_vec(),
        holdout: holdout.to_vec(),
        polynomials: BTreeMap::new(),
        failure: None,
    };
    let n = t.sources() + t.sinks();
    if let Some(p) = fit.iter().chain(holdout).find(|p| p.n() != n) {
        return Err(Error::InvalidProfile(format!("profile {p} does not have {n} entries")));
    }
    if let Some(p) = fit.iter().chain(holdout).find(|p| !chamber.contains(&fit_vars(p))) {
        report.failure = Some(format!(
            "sample {p} lies outside the chamber {}:{}",
            chamber.modulus, chamber.residue
        ));
        return Ok(report);
    }
    let divs = divisors(delta);
    let coords = |p: &TangencyProfile| -> Result<Vec<BigRational>> {
        let x = t.invariant_theta(p, delta)?;
        Ok(divs.iter().map(|&d| x.coeff(d)).collect())
    };
    let monos = monomials(n - 1, deg);
    let m: Vec<Vec<BigRational>> =
        fit.iter().map(|p| monos.iter().map(|e| eval_monomial(e, &fit_vars(p))).collect()).collect();
    let b = fit.iter().map(coords).collect::<Result<Vec<_>>>()?;
    let sol = match solve_exact(m, b) {
        Solution::Unique(x) => x,
        Solution::Underdetermined { rank } => {
            report.failure = Some(format!(
                "{} samples of rank {rank} do not determine the {} coefficients",
                fit.len(),
                monos.len()
            ));
            return Ok(report);
        }
        Solution::Inconsistent => {
            report.failure = Some(format!("no polynomial of degree at most {deg} fits the samples"));
            return Ok(report);
        }
    };
    for (j, &d) in divs.iter().enumerate() {
        let terms: Vec<(Vec<u32>, BigRational)> = monos
            .iter()
            .zip(&sol)
            .filter(|(_, row)| !row[j].is_zero())
            .map(|(e, row)| (e.clone(), row[j].clone()))
            .collect();
        report.polynomials.insert(d, terms);
    }
    for p in holdout {
        let actual = coords(p)?;
        let vars = fit_vars(p);
        if let Some(j) = (0..divs.len()).find(|&j| report.evaluate(divs[j], &vars) != actual[j]) {
            report.failure = Some(format!("held-out sample {p} disagrees at theta_{}", divs[j]));
            return Ok(report);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagrams::enumerate;
    use crate::torsion::rat;
    use Endpoint::{Bottom as B, Level as L, Top as T};

    fn fl(a: u64) -> Level {
        Level::Floor { a }
    }

    fn second_kind(a1: u64, a2: u64) -> DiagramTemplate {
        DiagramTemplate::new(
            vec![Level::Flat, fl(a1), Level::Flat, fl(a2)],
            vec![(B, L(0)), (L(0), L(1)), (L(1), L(2)), (L(2), L(3)), (L(1), L(3)), (L(3), T)],
        )
        .unwrap()
    }

    #[test]
    fn helpers() {
        assert_eq!(compositions(4, 2), vec![vec![1, 3], vec![2, 2], vec![3, 1]]);
        assert!(compositions(1, 2).is_empty());
        assert_eq!(multiset_permutations(&[2, 1, 1]).len(), 3);
        assert_eq!(monomials(1, 3), vec![vec![0], vec![1], vec![2], vec![3]]);
        assert_eq!(monomials(2, 2).len(), 6);
        assert_eq!("2:1".parse::<Chamber>().unwrap(), Chamber { modulus: 2, residue: 1 });
    }

    #[test]
    fn single_edge_matrix() {
        let t = DiagramTemplate::new(vec![fl(1)], vec![(B, L(0)), (L(0), T)]).unwrap();
        assert_eq!(t.adjacency_matrix(), vec![vec![1, -1], vec![-1, 0], vec![0, 1]]);
        assert_eq!(t.flow_rhs(&[3, 3]).unwrap(), vec![0, -3, 3]);
    }

    #[test]
    fn second_kind_template() {
        let t = second_kind(1, 2);
        t.check(3).unwrap();
        assert_eq!(t.degree_bound(), 9);
        let p = TangencyProfile::symmetric(6).unwrap();
        assert_eq!(t.weightings(&p).unwrap().len(), 5);
        for delta in [1u64, 2, 3, 6] {
            assert_eq!(t.invariant(&p, delta).unwrap(), t.direct_sum(&p, delta).unwrap(), "delta={delta}");
        }
        let back = DiagramTemplate::from_json(&t.to_json()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn gamma_at_prime_level() {
        let t = second_kind(2, 3);
        let p = 3u64;
        let g = t.gamma_theta(p).unwrap();
        let u = |d, e| BigRational::from_integer(t.upsilon(d, e).unwrap());
        let mut g1 = ThetaSum::zero(p);
        g1.add_theta(p, u(1, 1));
        let mut gp = ThetaSum::zero(p);
        gp.add_theta(p, u(1, p) - u(1, 1));
        gp.add_theta(1, u(p, p));
        assert_eq!(g[&1], g1);
        assert_eq!(g[&p], gp);
    }

    #[test]
    fn templates_reproduce_invariant() {
        let p = TangencyProfile::symmetric(4).unwrap();
        for g in 1..=3u64 {
            for a in 1..=4u64 {
                let ts = enumerate_templates(g, 1, 1, Labels::Class(a)).unwrap();
                for delta in [1u64, 2, 4] {
                    let mut sum = GroupAlgebraElement::zero(delta).unwrap();
                    for t in &ts {
                        sum.add_assign_checked(&invariant_by_template(t, &p, delta).unwrap()).unwrap();
                    }
                    assert_eq!(sum, crate::diagrams::invariant(g, a, &p, delta).unwrap(), "g={g} a={a} delta={delta}");
                }
                let weighted: usize = ts.iter().map(|t| t.weightings(&p).unwrap().len()).sum();
                assert_eq!(weighted, enumerate(g, a, &p).unwrap().len());
            }
        }
    }

    #[test]
    fn exact_solver() {
        let m = vec![vec![rat(1, 1), rat(1, 1)], vec![rat(1, 1), rat(-1, 1)]];
        let b = vec![vec![rat(3, 1)], vec![rat(1, 1)]];
        match solve_exact(m, b) {
            Solution::Unique(x) => assert_eq!(x, vec![vec![rat(2, 1)], vec![rat(1, 1)]]),
            _ => panic!("expected a unique solution"),
        }
        let m = vec![vec![rat(1, 1), rat(1, 1)]];
        assert!(matches!(solve_exact(m, vec![vec![rat(1, 1)]]), Solution::Underdetermined { rank: 1 }));
    }

    #[test]
    fn fit_small_template() {
        // one floor and one flat: the contribution is w^3
        let t = DiagramTemplate::new(vec![fl(1), Level::Flat], vec![(B, L(0)), (L(0), L(1)), (L(1), T)]).unwrap();
        let prof = |w: i64| TangencyProfile::new(vec![w, -w]).unwrap();
        let fit: Vec<_> = (1..=5).map(prof).collect();
        let r = polynomial_fit(&t, 1, Chamber::new(1, 0).unwrap(), &fit, &[prof(9)]).unwrap();
        assert!(r.passed(), "{:?}", r.failure);
        let bad = polynomial_fit(&t, 1, Chamber::new(2, 0).unwrap(), &fit, &[]).unwrap();
        assert!(!bad.passed());
    }
}
