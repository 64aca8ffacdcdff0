//! Floor diagrams for curves in E x P^1: data model, validation, enumeration
//! and correlated multiplicities.
//!
//! Levels are numbered from 0. An edge runs from `lo` to `hi`, where an
//! endpoint is a level, the source side [`Endpoint::Bottom`] or the sink side
//! [`Endpoint::Top`]. Every edge touching `Bottom` or `Top` is an infinite end
//! with its own univalent vertex.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::sigma::{bold_sigma, bold_sigma_by_upsilon};
use crate::torsion::{GroupAlgebraElement, ThetaSum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    Flat,
    Floor { a: u64 },
}

impl Level {
    pub fn is_flat(&self) -> bool {
        matches!(self, Level::Flat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Endpoint {
    Bottom,
    Level(usize),
    Top,
}

impl Endpoint {
    fn position(self, n_levels: usize) -> i64 {
        match self {
            Endpoint::Bottom => -1,
            Endpoint::Level(i) => i as i64,
            Endpoint::Top => n_levels as i64,
        }
    }

    pub fn level(self) -> Option<usize> {
        match self {
            Endpoint::Level(i) => Some(i),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub lo: Endpoint,
    pub hi: Endpoint,
    pub w: u64,
}

impl Edge {
    pub fn is_end(&self) -> bool {
        self.lo == Endpoint::Bottom || self.hi == Endpoint::Top
    }

    pub fn is_bounded(&self) -> bool {
        !self.is_end()
    }
}

/// Signed contact orders with the two boundary divisors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TangencyProfile {
    weights: Vec<i64>,
}

impl TangencyProfile {
    pub fn new(weights: Vec<i64>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::InvalidProfile("a profile needs at least two ends".into()));
        }
        if weights.contains(&0) {
            return Err(Error::InvalidProfile("tangency orders must be non-zero".into()));
        }
        if weights.iter().sum::<i64>() != 0 {
            return Err(Error::InvalidProfile(format!("{weights:?} does not sum to zero")));
        }
        Ok(TangencyProfile { weights })
    }

    pub fn symmetric(w: u64) -> Result<Self> {
        Self::new(vec![w as i64, -(w as i64)])
    }

    pub fn weights(&self) -> &[i64] {
        &self.weights
    }

    pub fn n(&self) -> usize {
        self.weights.len()
    }

    /// `b(w)`: total positive flow.
    pub fn flow(&self) -> u64 {
        self.weights.iter().filter(|&&w| w > 0).map(|&w| w as u64).sum()
    }

    /// Source weights (negative entries), increasing.
    pub fn sources(&self) -> Vec<u64> {
        let mut v: Vec<u64> = self.weights.iter().filter(|&&w| w < 0).map(|&w| w.unsigned_abs()).collect();
        v.sort_unstable();
        v
    }

    /// Sink weights (positive entries), increasing.
    pub fn sinks(&self) -> Vec<u64> {
        let mut v: Vec<u64> = self.weights.iter().filter(|&&w| w > 0).map(|&w| w as u64).collect();
        v.sort_unstable();
        v
    }

    pub fn gcd(&self) -> u64 {
        self.weights.iter().fold(0u64, |g, &w| g.gcd(&w.unsigned_abs()))
    }

    pub fn check_delta(&self, delta: u64) -> Result<()> {
        if delta == 0 {
            return Err(Error::Zero("delta"));
        }
        if self.gcd() % delta != 0 {
            return Err(Error::InvalidProfile(format!(
                "delta = {delta} does not divide every tangency order of {:?}",
                self.weights
            )));
        }
        Ok(())
    }

    fn sorted(&self) -> Vec<i64> {
        let mut v = self.weights.clone();
        v.sort_unstable();
        v
    }
}

impl FromStr for TangencyProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let weights = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<i64>()
                    .map_err(|_| Error::InvalidProfile(format!("cannot parse {t:?} as an integer")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(weights)
    }
}

impl fmt::Display for TangencyProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.weights.iter().map(|w| w.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Outcome of [`FloorDiagram::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Valid,
    Invalid(String),
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, Verdict::Valid)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FloorDiagram {
    levels: Vec<Level>,
    edges: Vec<Edge>,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new() -> Self {
        UnionFind { parent: Vec::new() }
    }

    fn add(&mut self) -> usize {
        self.parent.push(self.parent.len());
        self.parent.len() - 1
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// False if `x` and `y` were already joined.
    fn union(&mut self, x: usize, y: usize) -> bool {
        let (rx, ry) = (self.find(x), self.find(y));
        if rx == ry {
            return false;
        }
        self.parent[rx] = ry;
        true
    }
}

/// Checks the forest condition on a possibly unfinished diagram, where an edge
/// with `hi = None` is still open upward. Flat vertices are cut, so each
/// side of a flat becomes its own stub. Returns the first violation.
pub(crate) fn forest_violation<I>(levels: &[Level], edges: I) -> Option<String>
where
    I: IntoIterator<Item = (Endpoint, Option<Endpoint>)>,
{
    let mut uf = UnionFind::new();
    let mut floor_node: BTreeMap<usize, usize> = BTreeMap::new();
    let mut ends: Vec<u32> = Vec::new();
    let mut open: Vec<u32> = Vec::new();
    let mut node = |uf: &mut UnionFind, ends: &mut Vec<u32>, open: &mut Vec<u32>, e: Option<Endpoint>| {
        let fresh = |uf: &mut UnionFind, ends: &mut Vec<u32>, open: &mut Vec<u32>, end, op| {
            let id = uf.add();
            ends.push(end);
            open.push(op);
            id
        };
        match e {
            None => fresh(uf, ends, open, 0, 1),
            Some(Endpoint::Bottom) | Some(Endpoint::Top) => fresh(uf, ends, open, 1, 0),
            Some(Endpoint::Level(i)) => match levels[i] {
                Level::Flat => fresh(uf, ends, open, 0, 0),
                Level::Floor { .. } => *floor_node
                    .entry(i)
                    .or_insert_with(|| fresh(uf, ends, open, 0, 0)),
            },
        }
    };
    for (lo, hi) in edges {
        let x = node(&mut uf, &mut ends, &mut open, Some(lo));
        let y = node(&mut uf, &mut ends, &mut open, hi);
        if !uf.union(x, y) {
            return Some(format!("forest condition: cycle through edge {lo:?} -> {hi:?}"));
        }
    }
    let mut comp: BTreeMap<usize, (u32, u32)> = BTreeMap::new();
    for id in 0..ends.len() {
        let r = uf.find(id);
        let c = comp.entry(r).or_default();
        c.0 += ends[id];
        c.1 += open[id];
    }
    for (e, o) in comp.values() {
        if *e > 1 {
            return Some(format!("forest condition: a component contains {e} infinite ends"));
        }
        if *e == 0 && *o == 0 {
            return Some("forest condition: a component contains no infinite end".into());
        }
    }
    None
}

impl FloorDiagram {
    /// Builds a diagram, rejecting references to nonexistent levels, edges
    /// that do not go strictly upward and zero weights. Edges are stored in
    /// sorted order.
    pub fn new(levels: Vec<Level>, mut edges: Vec<Edge>) -> Result<Self> {
        let n = levels.len();
        for e in &edges {
            for p in [e.lo, e.hi] {
                if let Endpoint::Level(i) = p {
                    if i >= n {
                        return Err(Error::MalformedDiagram(format!("edge refers to level {i} of {n}")));
                    }
                }
            }
            if e.lo == Endpoint::Top || e.hi == Endpoint::Bottom || e.lo >= e.hi {
                return Err(Error::MalformedDiagram(format!("edge {:?} -> {:?} is not upward", e.lo, e.hi)));
            }
            if e.w == 0 {
                return Err(Error::MalformedDiagram("edge weights must be positive".into()));
            }
        }
        edges.sort_unstable();
        Ok(FloorDiagram { levels, edges })
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn floors(&self) -> impl Iterator<Item = (usize, u64)> + '_ {
        self.levels.iter().enumerate().filter_map(|(i, l)| match l {
            Level::Floor { a } => Some((i, *a)),
            Level::Flat => None,
        })
    }

    pub fn floor_count(&self) -> usize {
        self.floors().count()
    }

    /// Number of edges adjacent to level `i`.
    pub fn valence(&self, i: usize) -> usize {
        let v = Endpoint::Level(i);
        self.edges.iter().filter(|e| e.lo == v || e.hi == v).count()
    }

    pub fn class(&self) -> u64 {
        self.floors().map(|(_, a)| a).sum()
    }

    /// Signed end weights: `+w` for sinks, `-w` for sources, increasing.
    pub fn profile_weights(&self) -> Vec<i64> {
        let mut v: Vec<i64> = self
            .edges
            .iter()
            .filter_map(|e| {
                if e.hi == Endpoint::Top {
                    Some(e.w as i64)
                } else if e.lo == Endpoint::Bottom {
                    Some(-(e.w as i64))
                } else {
                    None
                }
            })
            .collect();
        v.sort_unstable();
        v
    }

    pub fn end_count(&self) -> usize {
        self.edges.iter().filter(|e| e.is_end()).count()
    }

    /// `gcd(delta, all edge weights)`.
    pub fn delta_gcd(&self, delta: u64) -> u64 {
        self.edges.iter().fold(delta, |g, e| g.gcd(&e.w))
    }

    /// Sum of weights crossing each gap, from below level 0 to above the last level.
    pub fn cross_flows(&self) -> Vec<u64> {
        let n = self.levels.len();
        (0..=n as i64)
            .map(|k| {
                self.edges
                    .iter()
                    .filter(|e| e.lo.position(n) < k && e.hi.position(n) >= k)
                    .map(|e| e.w)
                    .sum()
            })
            .collect()
    }

    pub(crate) fn components(&self) -> usize {
        let n = self.levels.len();
        let mut uf = UnionFind::new();
        for _ in 0..n {
            uf.add();
        }
        for e in &self.edges {
            let mut side = |p: Endpoint| match p {
                Endpoint::Level(i) => i,
                _ => uf.add(),
            };
            let (x, y) = (side(e.lo), side(e.hi));
            uf.union(x, y);
        }
        let total = uf.parent.len();
        (0..total).filter(|&x| uf.find(x) == x).count()
    }

    /// `b_1 + #floors`, computed on the graph with one vertex per infinite end.
    pub fn genus(&self) -> i64 {
        let vertices = (self.levels.len() + self.end_count()) as i64;
        let b1 = self.edges.len() as i64 - vertices + self.components() as i64;
        b1 + self.floor_count() as i64
    }

    fn local_violation(&self) -> Option<String> {
        for (i, level) in self.levels.iter().enumerate() {
            let v = Endpoint::Level(i);
            let ins: Vec<u64> = self.edges.iter().filter(|e| e.hi == v).map(|e| e.w).collect();
            let outs: Vec<u64> = self.edges.iter().filter(|e| e.lo == v).map(|e| e.w).collect();
            match level {
                Level::Floor { a } => {
                    if *a == 0 {
                        return Some(format!("floor at level {i} has label 0"));
                    }
                    if ins.iter().sum::<u64>() != outs.iter().sum::<u64>() {
                        return Some(format!("balancing fails at floor {i}"));
                    }
                }
                Level::Flat => {
                    if ins.len() != 1 || outs.len() != 1 {
                        return Some(format!("flat vertex at level {i} is not bivalent"));
                    }
                    if ins[0] != outs[0] {
                        return Some(format!("balancing fails at flat vertex {i}"));
                    }
                }
            }
        }
        None
    }

    /// Checks every defining clause and the genus, class and profile. The
    /// verdict names the first clause that fails.
    pub fn validate(&self, g: u64, a: u64, profile: &TangencyProfile) -> Verdict {
        let expected_levels = profile.n() as u64 + g - 1;
        if self.levels.len() as u64 != expected_levels {
            return Verdict::Invalid(format!(
                "level count {} differs from n+g-1 = {expected_levels}",
                self.levels.len()
            ));
        }
        if let Some(msg) = self.local_violation() {
            return Verdict::Invalid(msg);
        }
        if self.components() != 1 {
            return Verdict::Invalid("diagram is disconnected".into());
        }
        let genus = self.genus();
        if genus != g as i64 {
            return Verdict::Invalid(format!("genus is {genus}, expected {g}"));
        }
        if self.class() != a {
            return Verdict::Invalid(format!("class is {}, expected {a}", self.class()));
        }
        if let Some(msg) = forest_violation(&self.levels, self.edges.iter().map(|e| (e.lo, Some(e.hi)))) {
            return Verdict::Invalid(msg);
        }
        if self.profile_weights() != profile.sorted() {
            return Verdict::Invalid(format!(
                "tangency profile is {:?}, expected {:?}",
                self.profile_weights(),
                profile.sorted()
            ));
        }
        let b = profile.flow();
        if let Some(k) = self.cross_flows().iter().position(|&f| f != b) {
            return Verdict::Invalid(format!("cross flow at gap {k} differs from b = {b}"));
        }
        Verdict::Valid
    }

    /// `prod_{E_b} w_e * prod_{E_o} w_e^2`.
    pub fn edge_factor(&self) -> BigInt {
        let flat = |p: Endpoint| p.level().is_some_and(|i| self.levels[i].is_flat());
        let mut out = BigInt::from(1);
        for e in &self.edges {
            if e.is_bounded() {
                out *= e.w;
            }
            if !flat(e.lo) && !flat(e.hi) {
                out *= e.w * e.w;
            }
        }
        out
    }

    fn check_refinement(&self, delta: u64) -> Result<()> {
        if delta == 0 {
            return Err(Error::Zero("delta"));
        }
        for e in self.edges.iter().filter(|e| e.is_end()) {
            if e.w % delta != 0 {
                return Err(Error::InvalidProfile(format!(
                    "delta = {delta} does not divide the end weight {}",
                    e.w
                )));
            }
        }
        Ok(())
    }

    /// Correlated multiplicity in theta-coordinates at level `delta`.
    pub fn multiplicity_theta(&self, delta: u64) -> Result<ThetaSum> {
        self.check_refinement(delta)?;
        let dd = self.delta_gcd(delta);
        let mut prod = ThetaSum::unit(dd);
        for (i, a) in self.floors() {
            let n_v = self.valence(i) as u32;
            let scale = BigInt::from(a).pow(n_v.saturating_sub(1));
            prod = prod.mul(&bold_sigma_by_upsilon(dd, a)?.scale(&BigRational::from_integer(scale)));
        }
        Ok(prod
            .divide_into(delta / dd)
            .scale(&BigRational::from_integer(self.edge_factor())))
    }

    /// Correlated multiplicity evaluated directly in the group algebra:
    /// convolve at level `delta_D`, embed into level `delta`, then divide.
    pub fn multiplicity(&self, delta: u64) -> Result<GroupAlgebraElement> {
        self.check_refinement(delta)?;
        let dd = self.delta_gcd(delta);
        let mut prod = GroupAlgebraElement::unit(dd)?;
        for (i, a) in self.floors() {
            let n_v = self.valence(i) as u32;
            let scale = BigInt::from(a).pow(n_v.saturating_sub(1));
            prod = prod.convolve(&bold_sigma(dd, a)?.scale(&BigRational::from_integer(scale)))?;
        }
        Ok(prod
            .rebase(delta)?
            .divide(delta / dd)?
            .scale(&BigRational::from_integer(self.edge_factor())))
    }

    /// Byte string identifying the diagram; equal keys iff equal diagrams.
    pub fn canonical_key(&self) -> Vec<u8> {
        self.to_json().into_bytes()
    }

    /// The same diagram with every floor label replaced by 1.
    pub fn strip_labels(&self) -> FloorDiagram {
        FloorDiagram {
            levels: self
                .levels
                .iter()
                .map(|l| match l {
                    Level::Floor { .. } => Level::Floor { a: 1 },
                    Level::Flat => Level::Flat,
                })
                .collect(),
            edges: self.edges.clone(),
        }
    }

    pub fn with_labels(&self, labels: &[u64]) -> Result<FloorDiagram> {
        if labels.len() != self.floor_count() {
            return Err(Error::MalformedDiagram(format!(
                "{} labels for {} floors",
                labels.len(),
                self.floor_count()
            )));
        }
        let mut it = labels.iter();
        let levels = self
            .levels
            .iter()
            .map(|l| match l {
                Level::Floor { .. } => Level::Floor { a: *it.next().expect("label count checked") },
                Level::Flat => Level::Flat,
            })
            .collect();
        FloorDiagram::new(levels, self.edges.clone())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&DiagramJson::from_parts(&self.levels, self.edges.iter().map(|e| (e.lo, e.hi, Some(e.w)))))
            .expect("diagram serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: DiagramJson = serde_json::from_str(s)?;
        let (levels, edges) = raw.into_parts()?;
        let edges = edges
            .into_iter()
            .map(|(lo, hi, w)| {
                w.map(|w| Edge { lo, hi, w })
                    .ok_or_else(|| Error::MalformedDiagram("edge without weight".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        FloorDiagram::new(levels, edges)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum LevelJson {
    Floor { a: u64 },
    Flat,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeJson {
    lo: Value,
    hi: Value,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    w: Option<u64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct DiagramJson {
    levels: Vec<LevelJson>,
    edges: Vec<EdgeJson>,
}

fn endpoint_to_json(p: Endpoint) -> Value {
    match p {
        Endpoint::Bottom => Value::String("B".into()),
        Endpoint::Top => Value::String("T".into()),
        Endpoint::Level(i) => Value::Number((i as u64).into()),
    }
}

fn endpoint_from_json(v: &Value) -> Result<Endpoint> {
    match v {
        Value::String(s) if s == "B" => Ok(Endpoint::Bottom),
        Value::String(s) if s == "T" => Ok(Endpoint::Top),
        Value::Number(n) => n
            .as_u64()
            .map(|i| Endpoint::Level(i as usize))
            .ok_or_else(|| Error::MalformedDiagram(format!("bad level index {n}"))),
        other => Err(Error::MalformedDiagram(format!("bad endpoint {other}"))),
    }
}

impl DiagramJson {
    pub(crate) fn from_parts<I>(levels: &[Level], edges: I) -> Self
    where
        I: IntoIterator<Item = (Endpoint, Endpoint, Option<u64>)>,
    {
        DiagramJson {
            levels: levels
                .iter()
                .map(|l| match l {
                    Level::Floor { a } => LevelJson::Floor { a: *a },
                    Level::Flat => LevelJson::Flat,
                })
                .collect(),
            edges: edges
                .into_iter()
                .map(|(lo, hi, w)| EdgeJson {
                    lo: endpoint_to_json(lo),
                    hi: endpoint_to_json(hi),
                    w,
                })
                .collect(),
        }
    }

    pub(crate) fn into_parts(self) -> Result<(Vec<Level>, Vec<(Endpoint, Endpoint, Option<u64>)>)> {
        let levels = self
            .levels
            .into_iter()
            .map(|l| match l {
                LevelJson::Floor { a } => Level::Floor { a },
                LevelJson::Flat => Level::Flat,
            })
            .collect();
        let edges = self
            .edges
            .iter()
            .map(|e| Ok((endpoint_from_json(&e.lo)?, endpoint_from_json(&e.hi)?, e.w)))
            .collect::<Result<Vec<_>>>()?;
        Ok((levels, edges))
    }
}

/// Invariant of a bivalent genus-0 vertex: 1 if it carries the marked point,
/// `1/w` otherwise.
pub fn bivalent_contribution(w: u64, marked: bool) -> Result<BigRational> {
    if w == 0 {
        return Err(Error::Zero("w"));
    }
    Ok(if marked {
        BigRational::from_integer(1.into())
    } else {
        BigRational::new(1.into(), w.into())
    })
}

/// Integer partitions of `s` into at most `max_parts` parts, each part
/// listed in non-increasing order, partitions in decreasing lexicographic order.
pub(crate) fn partitions(s: u64, max_parts: usize) -> Vec<Vec<u64>> {
    fn go(s: u64, cap: u64, max_parts: usize, cur: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if s == 0 {
            out.push(cur.clone());
            return;
        }
        if cur.len() == max_parts {
            return;
        }
        for p in (1..=cap.min(s)).rev() {
            cur.push(p);
            go(s - p, p, max_parts, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if s > 0 {
        go(s, s, max_parts, &mut Vec::new(), &mut out);
    }
    out
}

/// Floor labelling mode for [`enumerate_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Labels {
    /// Labels are positive and sum to the given class.
    Class(u64),
    /// Every floor carries the placeholder label 1 and the class is free.
    Free,
}

/// Edge weighting mode of the search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Weights<'a> {
    Profile(&'a TangencyProfile),
    /// Unweighted shapes; every edge carries weight 0.
    Free { sources: usize, sinks: usize },
}

/// A component of the diagram cut at its flat vertices, restricted to the
/// levels placed so far.
#[derive(Clone, Copy, Debug)]
struct Comp {
    ends: u32,
    open: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Open {
    w: u64,
    origin: Endpoint,
    comp: usize,
    // connected component of the uncut graph
    whole: usize,
}

#[derive(Clone)]
struct State {
    levels: Vec<Level>,
    closed: Vec<Edge>,
    open: Vec<Open>,
    comps: Vec<Comp>,
    a_left: u64,
    floors: u64,
    ins: usize,
    // sum over live components of ends + open - 1; flats lower it by one,
    // a floor with o outgoing edges raises it by o - 1, and it must end at 0
    excess: usize,
}

impl State {
    /// Indices of the first open edge of each (weight, origin) class; edges in
    /// one class are interchangeable.
    fn classes(&self) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for (k, e) in self.open.iter().enumerate() {
            match out.last() {
                Some(&j) if (self.open[j].w, self.open[j].origin) == (e.w, e.origin) => {}
                _ => out.push(k),
            }
        }
        out
    }

    fn push_open(&mut self, w: u64, origin: Endpoint, comp: usize, whole: usize) {
        let e = Open { w, origin, comp, whole };
        let pos = self.open.partition_point(|x| (x.w, x.origin) <= (w, origin));
        self.open.insert(pos, e);
    }
}

pub(crate) struct RawDiagram {
    pub levels: Vec<Level>,
    pub edges: Vec<Edge>,
}

struct Search<'a> {
    n_levels: usize,
    g: u64,
    in_total: usize,
    weights: Weights<'a>,
    labels: Labels,
    found: Vec<RawDiagram>,
}

impl Search<'_> {
    fn run(&mut self, s: State) {
        let i = s.levels.len();
        let left = self.n_levels - i;
        if left == 0 {
            self.finish(s);
            return;
        }
        if s.excess > left {
            return;
        }
        // only floors join components of the uncut graph, each by at most
        // its in-degree minus one
        let mut wholes: Vec<usize> = s.open.iter().map(|e| e.whole).collect();
        wholes.sort_unstable();
        wholes.dedup();
        let no_more_floors = s.floors >= self.g || s.excess == left;
        if wholes.len() > 1 && (no_more_floors || wholes.len() > self.in_total - s.ins) {
            return;
        }
        let classes = s.classes();
        // a flat vertex is only admissible on a component that still has
        // an edge to spare
        for &k in &classes {
            let e = s.open[k];
            let c = s.comps[e.comp];
            if c.ends + c.open < 2 {
                continue;
            }
            let mut t = s.clone();
            t.open.remove(k);
            t.comps[e.comp].open -= 1;
            t.levels.push(Level::Flat);
            t.closed.push(Edge { lo: e.origin, hi: Endpoint::Level(i), w: e.w });
            t.comps.push(Comp { ends: 0, open: 1 });
            let id = t.comps.len() - 1;
            t.push_open(e.w, Endpoint::Level(i), id, e.whole);
            t.excess -= 1;
            self.run(t);
        }
        if no_more_floors {
            return;
        }
        let labels: Vec<u64> = match self.labels {
            Labels::Class(_) => (1..=s.a_left).collect(),
            Labels::Free => vec![1],
        };
        // outgoing edges of all remaining floors number exactly left - excess
        let outs_left = left - s.excess;
        for &a in &labels {
            for mask in 1u64..(1u64 << classes.len()) {
                let picked: Vec<usize> = (0..classes.len())
                    .filter(|b| mask >> b & 1 == 1)
                    .map(|b| classes[b])
                    .collect();
                let mut comps: Vec<usize> = picked.iter().map(|&k| s.open[k].comp).collect();
                comps.sort_unstable();
                if comps.windows(2).any(|p| p[0] == p[1]) {
                    continue;
                }
                let ends: u32 = comps.iter().map(|&c| s.comps[c].ends).sum();
                if ends > 1 || s.ins + picked.len() > self.in_total {
                    continue;
                }
                let mut base = s.clone();
                base.levels.push(Level::Floor { a });
                base.floors += 1;
                base.ins += picked.len();
                let joined: Vec<usize> = picked.iter().map(|&k| s.open[k].whole).collect();
                let whole = joined[0];
                for e in base.open.iter_mut() {
                    if joined.contains(&e.whole) {
                        e.whole = whole;
                    }
                }
                if let Labels::Class(_) = self.labels {
                    base.a_left -= a;
                }
                let mut flow = 0;
                for &k in picked.iter().rev() {
                    let e = base.open.remove(k);
                    base.closed.push(Edge { lo: e.origin, hi: Endpoint::Level(i), w: e.w });
                    flow += e.w;
                }
                let merged_open: u32 = comps.iter().map(|&c| s.comps[c].open).sum::<u32>() - picked.len() as u32;
                for &c in &comps {
                    base.comps[c].open = 0;
                }
                base.comps.push(Comp { ends, open: merged_open });
                let id = base.comps.len() - 1;
                for e in base.open.iter_mut() {
                    if comps.binary_search(&e.comp).is_ok() {
                        e.comp = id;
                    }
                }
                let out_choices: Vec<Vec<u64>> = match self.weights {
                    Weights::Profile(_) => partitions(flow, outs_left),
                    Weights::Free { .. } => (1..=outs_left).map(|o| vec![0; o]).collect(),
                };
                for parts in out_choices {
                    let mut t = base.clone();
                    t.comps[id].open += parts.len() as u32;
                    t.excess += parts.len() - 1;
                    for &p in &parts {
                        t.push_open(p, Endpoint::Level(i), id, whole);
                    }
                    self.run(t);
                }
            }
        }
    }

    fn finish(&mut self, s: State) {
        if s.excess != 0 {
            return;
        }
        if let Labels::Class(_) = self.labels {
            if s.a_left != 0 {
                return;
            }
        }
        match self.weights {
            Weights::Profile(p) => {
                let mut ws: Vec<u64> = s.open.iter().map(|e| e.w).collect();
                ws.sort_unstable();
                if ws != p.sinks() {
                    return;
                }
            }
            Weights::Free { sinks, .. } => {
                if s.open.len() != sinks {
                    return;
                }
            }
        }
        let mut edges = s.closed;
        edges.extend(s.open.iter().map(|e| Edge { lo: e.origin, hi: Endpoint::Top, w: e.w }));
        edges.sort_unstable();
        self.found.push(RawDiagram { levels: s.levels, edges });
    }
}

pub(crate) fn search(g: u64, weights: Weights<'_>, labels: Labels) -> Result<Vec<RawDiagram>> {
    if g == 0 {
        return Err(Error::InvalidProfile("genus must be at least 1".into()));
    }
    let (sources, n): (Vec<u64>, usize) = match weights {
        Weights::Profile(p) => (p.sources(), p.n()),
        Weights::Free { sources, sinks } => (vec![0; sources], sources + sinks),
    };
    let a_left = match labels {
        Labels::Class(0) => return Err(Error::Zero("a")),
        Labels::Class(a) => a,
        Labels::Free => 0,
    };
    let mut search = Search {
        n_levels: n + g as usize - 1,
        g,
        in_total: g as usize + sources.len() - 1,
        weights,
        labels,
        found: Vec::new(),
    };
    let mut state = State {
        levels: Vec::new(),
        closed: Vec::new(),
        open: Vec::new(),
        comps: Vec::new(),
        a_left,
        floors: 0,
        ins: 0,
        excess: sources.len(),
    };
    for &w in &sources {
        state.comps.push(Comp { ends: 1, open: 1 });
        let id = state.comps.len() - 1;
        state.push_open(w, Endpoint::Bottom, id, id);
    }
    search.run(state);
    Ok(search.found)
}

/// Depth-first level-by-level enumeration of floor diagrams of genus `g` with
/// the given profile. Output order is deterministic.
pub fn enumerate_with(g: u64, profile: &TangencyProfile, labels: Labels) -> Result<Vec<FloorDiagram>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for raw in search(g, Weights::Profile(profile), labels)? {
        let d = FloorDiagram::new(raw.levels, raw.edges)?;
        if d.components() != 1 {
            continue;
        }
        let class = match labels {
            Labels::Class(a) => a,
            Labels::Free => d.class(),
        };
        if let Verdict::Invalid(msg) = d.validate(g, class, profile) {
            return Err(Error::Consistency(format!("enumerated an invalid diagram: {msg}")));
        }
        if seen.insert(d.clone()) {
            out.push(d);
        }
    }
    Ok(out)
}

/// All floor diagrams of genus `g`, class `a` and profile `profile`.
pub fn enumerate(g: u64, a: u64, profile: &TangencyProfile) -> Result<Vec<FloorDiagram>> {
    enumerate_with(g, profile, Labels::Class(a))
}

/// `sum_D m_delta(D)` in theta-coordinates.
pub fn invariant_theta(g: u64, a: u64, profile: &TangencyProfile, delta: u64) -> Result<ThetaSum> {
    profile.check_delta(delta)?;
    let diagrams = enumerate(g, a, profile)?;
    let terms = diagrams
        .par_iter()
        .map(|d| d.multiplicity_theta(delta))
        .collect::<Result<Vec<_>>>()?;
    Ok(terms.iter().fold(ThetaSum::zero(delta), |acc, t| acc.add(t)))
}

/// The correlated invariant as a sum of diagram multiplicities.
pub fn invariant(g: u64, a: u64, profile: &TangencyProfile, delta: u64) -> Result<GroupAlgebraElement> {
    Ok(invariant_theta(g, a, profile, delta)?.materialize())
}
