//! Good/bad classification of dyadic squares, the alternating selection of
//! maximal bad and good squares, and the resulting contour `Γ = ⋃ Γᵢ`.
//!
//! Regions are unions of closed top halves on the dyadic grid. Their
//! boundaries live on a fixed integer grid: radius level `m` is the circle
//! `r = 1 − 2^−m` and angular position `a` is the angle `2πa / 2^D` with
//! `D = d_max + 1`, so edge cancellation and loop tracing are exact.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::f64::consts::{FRAC_PI_2, PI, TAU};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blaschke::{find_witness, BlaschkeProduct};
use crate::dyadic::{omega_k_sup_with, DyadicSquare, Hull, Region};
use crate::error::{Error, Result};
use crate::geometry::{hyp_dist, normalize_angle, outward_direction, point_at_distance, DiskPoint};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourParams {
    pub epsilon: f64,
    pub k: f64,
    pub delta: f64,
    pub big_n: u32,
    pub mesh: f64,
    pub d_max: u32,
}

impl ContourParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!("epsilon {} not in (0,1)", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta < self.epsilon) {
            return Err(Error::InvalidParameter(format!("delta {} not in (0, epsilon)", self.delta)));
        }
        if !(self.k > 0.0) || !self.k.is_finite() {
            return Err(Error::InvalidParameter(format!("K {} must be positive", self.k)));
        }
        if !(self.mesh > 0.0) {
            return Err(Error::InvalidParameter(format!("mesh {} must be positive", self.mesh)));
        }
        if self.d_max < 1 || self.d_max + 1 > crate::dyadic::MAX_LEVEL {
            return Err(Error::InvalidParameter(format!("d_max {} out of range", self.d_max)));
        }
        Ok(())
    }
}

/// Inputs of [`build_contour_with`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourConfig {
    pub epsilon: f64,
    pub big_n: u32,
    /// Neighborhood radius; `2N` when absent.
    pub k: Option<f64>,
    pub mesh: f64,
    pub d_max: u32,
    /// Initial `δ`; `ε/4` when absent.
    pub delta_start: Option<f64>,
    /// Maximal number of `|B|` evaluations spent on one sup estimate.
    pub sample_budget: u64,
}

impl ContourConfig {
    pub fn new(epsilon: f64, big_n: u32) -> Self {
        Self { epsilon, big_n, k: None, mesh: 0.1, d_max: 16, delta_start: None, sample_budget: 200_000 }
    }

    pub fn k_value(&self) -> f64 {
        self.k.unwrap_or(2.0 * self.big_n as f64)
    }
}

pub const DELTA_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SquareKind {
    Good,
    Bad,
    Neutral,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedSquare {
    pub square: DyadicSquare,
    pub kind: SquareKind,
    /// Largest sampled `|B|` on `Ω_K(T(Q))`.
    pub sup_estimate: f64,
    /// Certified upper bound for the sup, when one was computed.
    pub sup_upper: Option<f64>,
    /// The estimate hit the sample budget before covering `Ω_K(T(Q))`.
    pub truncated: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Radial,
    Arc,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarPoint {
    pub r: f64,
    pub theta: f64,
}

impl PolarPoint {
    pub fn to_disk(self) -> DiskPoint {
        DiskPoint::from_complex_clamped(Complex64::from_polar(self.r, self.theta))
    }
}

/// A radial segment or a circular arc. `sweep` is the signed angle of an arc
/// (positive counterclockwise) and 0 for radial edges.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub kind: EdgeKind,
    pub start: PolarPoint,
    pub end: PolarPoint,
    #[serde(default)]
    pub sweep: f64,
}

impl Edge {
    pub fn length(&self) -> f64 {
        match self.kind {
            EdgeKind::Arc => self.start.r * self.sweep.abs(),
            EdgeKind::Radial => (self.end.r - self.start.r).abs(),
        }
    }

    pub fn hyp_length(&self) -> f64 {
        hyp_length_between(self, 0.0, self.length())
    }

    /// Point at Euclidean arclength `s` from the start.
    pub fn point_at(&self, s: f64) -> DiskPoint {
        self.polar_at(s).to_disk()
    }

    pub fn polar_at(&self, s: f64) -> PolarPoint {
        match self.kind {
            EdgeKind::Arc => {
                let r = self.start.r;
                PolarPoint { r, theta: self.start.theta + self.sweep.signum() * s / r }
            }
            EdgeKind::Radial => {
                let dir = (self.end.r - self.start.r).signum();
                PolarPoint { r: self.start.r + dir * s, theta: self.start.theta }
            }
        }
    }

    /// Euclidean distance from `z` and the arclength of the nearest point.
    pub fn euclid_nearest(&self, z: Complex64) -> (f64, f64) {
        match self.kind {
            EdgeKind::Arc => {
                let r = self.start.r;
                let span = self.sweep.abs();
                let s = if z.norm_sqr() == 0.0 {
                    0.0
                } else {
                    let off = if self.sweep >= 0.0 {
                        normalize_angle(z.arg() - self.start.theta)
                    } else {
                        normalize_angle(self.start.theta - z.arg())
                    };
                    if off <= span {
                        off * r
                    } else if TAU - off < off - span {
                        0.0
                    } else {
                        span * r
                    }
                };
                let p = self.polar_at(s);
                ((z - Complex64::from_polar(p.r, p.theta)).norm(), s)
            }
            EdgeKind::Radial => {
                let u = Complex64::from_polar(1.0, self.start.theta);
                let proj = (z * u.conj()).re;
                let (lo, hi) = (self.start.r.min(self.end.r), self.start.r.max(self.end.r));
                let t = proj.clamp(lo, hi);
                let s = (t - self.start.r).abs();
                ((z - u * t).norm(), s)
            }
        }
    }

    /// Hyperbolic distance from `z` to the edge.
    pub fn hyp_dist_to(&self, z: DiskPoint) -> f64 {
        match self.kind {
            EdgeKind::Arc => {
                // ρ(z, R e^{iφ}) increases with the angular gap, so the nearest
                // point is the angular clamp of arg z.
                let (_, s) = self.euclid_nearest(z.to_complex());
                hyp_dist(z, self.point_at(s))
            }
            EdgeKind::Radial => {
                let len = self.length();
                let f = |s: f64| hyp_dist(z, self.point_at(s));
                let hyp = self.hyp_length();
                let n = ((hyp / 0.05).ceil() as usize).max(1);
                let mut best = (f64::INFINITY, 0usize);
                let knots: Vec<f64> = (0..=n).map(|i| radial_s_at_hyp_fraction(self, i as f64 / n as f64)).collect();
                for (i, &s) in knots.iter().enumerate() {
                    let v = f(s);
                    if v < best.0 {
                        best = (v, i);
                    }
                }
                let lo = knots[best.1.saturating_sub(1)];
                let hi = knots[(best.1 + 1).min(n)];
                golden_min(f, lo, hi, 1e-12 * len.max(1e-300)).min(best.0)
            }
        }
    }
}

fn radial_s_at_hyp_fraction(e: &Edge, frac: f64) -> f64 {
    let (a, b) = (e.start.r.atanh(), e.end.r.atanh());
    ((a + (b - a) * frac).tanh() - e.start.r).abs()
}

/// Hyperbolic length of the piece `[s0, s1]` of an edge.
pub fn hyp_length_between(e: &Edge, s0: f64, s1: f64) -> f64 {
    match e.kind {
        EdgeKind::Arc => {
            let r = e.start.r;
            (s1 - s0) / (1.0 - r * r)
        }
        EdgeKind::Radial => {
            let r0 = e.polar_at(s0).r;
            let r1 = e.polar_at(s1).r;
            (r1.atanh() - r0.atanh()).abs()
        }
    }
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let mut iter = 0;
    while (b - a).abs() > tol && iter < 200 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
        iter += 1;
    }
    fc.min(fd).min(f(a)).min(f(b))
}

/// A connected component `Rᵢ` of the selected region with boundary `Γᵢ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub id: usize,
    /// Outer boundary, positively oriented, starting at `start_anchor`.
    pub edges: Vec<Edge>,
    /// Inner boundary loops (negatively oriented). Nonempty only for multiply
    /// connected components.
    #[serde(default)]
    pub holes: Vec<Vec<Edge>>,
    /// The interior is the interior of the union of the closed top halves.
    pub cells: Vec<DyadicSquare>,
    pub arclength: f64,
    pub start_anchor: PolarPoint,
}

impl Component {
    pub fn is_simply_connected(&self) -> bool {
        self.holes.is_empty()
    }

    pub fn all_edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter().chain(self.holes.iter().flatten())
    }

    /// Cumulative arclength at the start of each outer edge.
    pub fn edge_offsets(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.edges
            .iter()
            .map(|e| {
                let s = acc;
                acc += e.length();
                s
            })
            .collect()
    }

    /// Index of the outer edge containing arclength `s` and the local offset.
    pub fn locate(&self, offsets: &[f64], s: f64) -> (usize, f64) {
        let i = match offsets.binary_search_by(|o| o.partial_cmp(&s).unwrap()) {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        let i = i.min(self.edges.len() - 1);
        (i, (s - offsets[i]).clamp(0.0, self.edges[i].length()))
    }

    pub fn point_at(&self, offsets: &[f64], s: f64) -> DiskPoint {
        let (i, local) = self.locate(offsets, s);
        self.edges[i].point_at(local)
    }

    /// Euclidean diameter bound of the outer loop.
    pub fn euclid_extent(&self) -> f64 {
        let pts: Vec<Complex64> = self.edges.iter().map(|e| e.start.to_disk().to_complex()).collect();
        let r_max = self.edges.iter().map(|e| e.start.r.max(e.end.r)).fold(0.0, f64::max);
        let mut d: f64 = 0.0;
        for (i, a) in pts.iter().enumerate() {
            for b in &pts[i + 1..] {
                d = d.max((a - b).norm());
            }
        }
        if self.edges.iter().any(|e| e.kind == EdgeKind::Arc && e.sweep.abs() > PI / 2.0) {
            d = d.max(2.0 * r_max);
        }
        d.max(1e-300)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    pub components: Vec<Component>,
    pub params: ContourParams,
}

impl Contour {
    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn arclength(&self) -> f64 {
        self.components.iter().map(|c| c.arclength).sum()
    }

    pub fn all_edges(&self) -> impl Iterator<Item = &Edge> {
        self.components.iter().flat_map(|c| c.all_edges())
    }

    /// Index of the component whose interior contains `z`.
    pub fn component_of(&self, z: DiskPoint) -> Option<usize> {
        self.components.iter().position(|c| point_in_interior(z, c) == Containment::Inside)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Containment {
    Inside,
    Outside,
    Boundary,
}

const BOUNDARY_TOL: f64 = 1e-12;

/// Ray crossing along the outward ray from `z`, against the outer loop and
/// the holes. Arcs are counted with half-open angular spans.
pub fn point_in_interior(z: DiskPoint, c: &Component) -> Containment {
    let zc = z.to_complex();
    if c.all_edges().any(|e| e.euclid_nearest(zc).0 < BOUNDARY_TOL) {
        return Containment::Boundary;
    }
    let r = z.abs();
    let th = z.angle();
    let mut crossings = 0usize;
    for e in c.all_edges() {
        if e.kind != EdgeKind::Arc || e.start.r <= r {
            continue;
        }
        let span = e.sweep.abs();
        let lo = if e.sweep >= 0.0 { e.start.theta } else { e.end.theta };
        if span >= TAU - 1e-15 || normalize_angle(th - lo) < span {
            crossings += 1;
        }
    }
    if crossings % 2 == 1 {
        Containment::Inside
    } else {
        Containment::Outside
    }
}

/// Hyperbolic distance from `z` to the nearest edge of `Γ`; `+∞` for an
/// empty contour.
pub fn dist_to_contour(z: DiskPoint, contour: &Contour) -> f64 {
    contour.all_edges().map(|e| e.hyp_dist_to(z)).fold(f64::INFINITY, f64::min)
}

pub fn dist_to_component(z: DiskPoint, c: &Component) -> f64 {
    c.all_edges().map(|e| e.hyp_dist_to(z)).fold(f64::INFINITY, f64::min)
}

/// Mass carried by the Carleson-norm computation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Atom {
    Point {
        point: DiskPoint,
        mass: f64,
    },
    /// Arclength measure on an edge.
    Edge(Edge),
}

/// `4 · max μ(Q)/ℓ(Q)` over closed dyadic squares of level at most `d_max`
/// (including the whole disk).
pub fn carleson_norm(atoms: &[Atom], d_max: u32) -> f64 {
    4.0 * dyadic_carleson_sup(atoms, d_max)
}

pub fn dyadic_carleson_sup(atoms: &[Atom], d_max: u32) -> f64 {
    let mut mass: HashMap<(u32, u64), f64> = HashMap::new();
    let mut add = |n: u32, j: u64, m: f64| *mass.entry((n, j)).or_insert(0.0) += m;
    for atom in atoms {
        match *atom {
            Atom::Point { point, mass } => {
                for n in 0..=d_max {
                    if point.abs() < 1.0 - 0.5f64.powi(n as i32) - 1e-15 {
                        break;
                    }
                    for j in closed_square_indices(point.angle(), n) {
                        add(n, j, mass);
                    }
                }
            }
            Atom::Edge(e) => {
                for (n, j, m) in edge_square_masses(&e, d_max) {
                    add(n, j, m);
                }
            }
        }
    }
    mass.into_iter().map(|((n, _), m)| m * 2f64.powi(n as i32)).fold(0.0, f64::max)
}

/// Indices of the level-`n` closed squares whose angular span contains `theta`.
fn closed_square_indices(theta: f64, n: u32) -> Vec<u64> {
    if n == 0 {
        return vec![0];
    }
    let count = 1u64 << n;
    let x = theta / TAU * count as f64;
    let j = (x.floor() as u64).min(count - 1);
    let mut out = vec![j];
    let frac = x - x.floor();
    if frac < 1e-12 {
        out.push((j + count - 1) % count);
    } else if 1.0 - frac < 1e-12 {
        out.push((j + 1) % count);
    }
    out
}

/// Split of an edge's arclength among closed dyadic squares.
fn edge_square_masses(e: &Edge, d_max: u32) -> Vec<(u32, u64, f64)> {
    let mut out = Vec::new();
    match e.kind {
        EdgeKind::Radial => {
            let (lo, hi) = (e.start.r.min(e.end.r), e.start.r.max(e.end.r));
            for n in 0..=d_max {
                let rn = 1.0 - 0.5f64.powi(n as i32);
                if rn > hi - 1e-15 && n > 0 {
                    break;
                }
                let m = hi - lo.max(rn);
                if m <= 0.0 {
                    continue;
                }
                for j in closed_square_indices(e.start.theta, n) {
                    out.push((n, j, m));
                }
            }
        }
        EdgeKind::Arc => {
            let r = e.start.r;
            let lo = if e.sweep >= 0.0 { e.start.theta } else { e.end.theta };
            let span = e.sweep.abs();
            for n in 0..=d_max {
                let rn = 1.0 - 0.5f64.powi(n as i32);
                if rn > r + 1e-15 && n > 0 {
                    break;
                }
                if n == 0 {
                    out.push((0, 0, r * span));
                    continue;
                }
                let count = 1u64 << n;
                let w = TAU / count as f64;
                // Walk the level-n squares met by [lo, lo + span].
                let mut t = lo;
                let end = lo + span;
                while t < end - 1e-15 {
                    let tn = normalize_angle(t);
                    let x = tn / w;
                    let mut j = (x.floor() as u64).min(count - 1);
                    if (x - x.floor()) > 1.0 - 1e-12 {
                        j = (j + 1) % count;
                    }
                    let sq_hi = (j + 1) as f64 * w;
                    let rem = if tn > sq_hi { sq_hi + TAU - tn } else { sq_hi - tn };
                    let step = rem.max(1e-300).min(end - t);
                    out.push((n, j, r * step));
                    t += step;
                }
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingCheck {
    pub good_parent: DyadicSquare,
    pub bad_side_sum: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionCheck {
    pub bad_square: DyadicSquare,
    pub boundary_length: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassificationStats {
    pub classified: u64,
    pub good: u64,
    pub bad: u64,
    pub neutral: u64,
    pub truncated: u64,
}

/// Everything produced by [`build_contour_with`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourBuild {
    pub contour: Contour,
    pub delta: f64,
    pub delta_history: Vec<f64>,
    pub maximal_bad: Vec<ClassifiedSquare>,
    pub maximal_good: Vec<ClassifiedSquare>,
    pub scaling: Vec<ScalingCheck>,
    pub regions: Vec<RegionCheck>,
    pub stats: ClassificationStats,
}

impl ContourBuild {
    pub fn scaling_holds(&self) -> bool {
        self.scaling.iter().all(|s| s.holds)
    }
}

/// Builds `Γ` with `K = 2N`, `mesh = 0.1` and `d_max = 16`.
pub fn build_contour(b: &BlaschkeProduct, epsilon: f64, big_n: u32) -> Result<(Contour, f64)> {
    let out = build_contour_with(b, &ContourConfig::new(epsilon, big_n))?;
    Ok((out.contour, out.delta))
}

pub fn build_contour_with(b: &BlaschkeProduct, cfg: &ContourConfig) -> Result<ContourBuild> {
    let k = cfg.k_value();
    let mut delta = cfg.delta_start.unwrap_or(cfg.epsilon / 4.0);
    let params = ContourParams { epsilon: cfg.epsilon, k, delta, big_n: cfg.big_n, mesh: cfg.mesh, d_max: cfg.d_max };
    params.validate()?;
    let mut classifier = Classifier::new(b, params, cfg.sample_budget);
    let mut history = Vec::new();
    loop {
        history.push(delta);
        classifier.params.delta = delta;
        let alt = classifier.alternate()?;
        if alt.scaling.iter().all(|s| s.holds) {
            log::debug!("contour: delta {delta:e} after {} attempts", history.len());
            let params = classifier.params;
            let components = extract_components(&alt.cells, params.d_max)?;
            let stats = classifier.stats();
            return Ok(ContourBuild {
                contour: Contour { components, params },
                delta,
                delta_history: history,
                maximal_bad: alt.maximal_bad,
                maximal_good: alt.maximal_good,
                scaling: alt.scaling,
                regions: alt.regions,
                stats,
            });
        }
        delta *= 0.5;
        if delta < DELTA_FLOOR {
            return Err(Error::DeltaExhausted(delta));
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Entry {
    lower: f64,
    quick_done: bool,
    full_done: bool,
    truncated: bool,
    /// `(value, exact)`: an exact certified upper bound, or a lower bound on
    /// it once the sweep stopped early.
    upper: Option<(f64, bool)>,
}

struct Classifier<'a> {
    b: &'a BlaschkeProduct,
    params: ContourParams,
    budget: u64,
    cache: HashMap<DyadicSquare, Entry>,
}

struct Alternation {
    maximal_bad: Vec<ClassifiedSquare>,
    maximal_good: Vec<ClassifiedSquare>,
    scaling: Vec<ScalingCheck>,
    regions: Vec<RegionCheck>,
    cells: Vec<DyadicSquare>,
}

/// Classifies one square without caching.
pub fn classify(b: &BlaschkeProduct, q: DyadicSquare, params: &ContourParams) -> ClassifiedSquare {
    Classifier::new(b, *params, 200_000).classify(q)
}

impl<'a> Classifier<'a> {
    fn new(b: &'a BlaschkeProduct, params: ContourParams, budget: u64) -> Self {
        Self { b, params, budget, cache: HashMap::new() }
    }

    fn stats(&self) -> ClassificationStats {
        let mut s = ClassificationStats::default();
        for &q in self.cache.keys() {
            s.classified += 1;
            let c = self.kind_of(q);
            match c.kind {
                SquareKind::Good => s.good += 1,
                SquareKind::Bad => s.bad += 1,
                SquareKind::Neutral => s.neutral += 1,
            }
            if c.truncated {
                s.truncated += 1;
            }
        }
        s
    }

    fn kind_of(&self, q: DyadicSquare) -> ClassifiedSquare {
        let e = self.cache[&q];
        let p = &self.params;
        let kind = if e.lower > p.epsilon {
            SquareKind::Good
        } else if matches!(e.upper, Some((u, true)) if u < p.delta) {
            SquareKind::Bad
        } else {
            SquareKind::Neutral
        };
        ClassifiedSquare {
            square: q,
            kind,
            sup_estimate: e.lower,
            sup_upper: e.upper.filter(|u| u.1).map(|u| u.0),
            truncated: e.truncated && kind == SquareKind::Neutral,
        }
    }

    fn classify(&mut self, q: DyadicSquare) -> ClassifiedSquare {
        let p = self.params;
        if self.b.is_constant() {
            self.cache.insert(
                q,
                Entry { lower: 1.0, quick_done: true, full_done: true, truncated: false, upper: Some((1.0, true)) },
            );
            return self.kind_of(q);
        }
        let mut e = self.cache.get(&q).copied().unwrap_or(Entry {
            lower: 0.0,
            quick_done: false,
            full_done: false,
            truncated: false,
            upper: None,
        });
        let t = q.top_half();
        if !e.quick_done {
            e.lower = quick_lower_bound(self.b, q, p.k, p.epsilon);
            e.quick_done = true;
        }
        if e.lower <= p.epsilon {
            // An inexact cached bound already reached a larger δ.
            if e.upper.is_none() {
                e.upper = Some(certified_upper(self.b, &t, p.k, p.mesh, p.delta, self.budget));
            }
            let is_bad = matches!(e.upper, Some((u, true)) if u < p.delta);
            if !is_bad && !e.full_done {
                let est = omega_k_sup_with(self.b, &t, p.k, p.mesh, self.budget, p.epsilon);
                e.lower = e.lower.max(est.value);
                e.truncated = est.truncated;
                e.full_done = true;
            }
        }
        self.cache.insert(q, e);
        self.kind_of(q)
    }

    fn alternate(&mut self) -> Result<Alternation> {
        let d_max = self.params.d_max;
        let mut out = Alternation {
            maximal_bad: Vec::new(),
            maximal_good: Vec::new(),
            scaling: Vec::new(),
            regions: Vec::new(),
            cells: Vec::new(),
        };
        let mut bad_queue = self.search_bad(vec![DyadicSquare::ROOT])?;
        while let Some(qb) = bad_queue.pop() {
            out.maximal_bad.push(self.kind_of(qb));
            let (goods, cells) = self.search_good(qb)?;
            let len = boundary_length(&cells, d_max);
            let bound = 17.0 * qb.side();
            out.regions.push(RegionCheck { bad_square: qb, boundary_length: len, bound, holds: len <= bound });
            out.cells.extend(cells);
            for g in goods {
                out.maximal_good.push(self.kind_of(g));
                let bads = if g.level < d_max { self.search_bad(g.children().to_vec())? } else { Vec::new() };
                let sum: f64 = bads.iter().map(|q| q.side()).sum();
                let bound = 0.5 * g.side();
                out.scaling.push(ScalingCheck { good_parent: g, bad_side_sum: sum, bound, holds: sum <= bound });
                bad_queue.extend(bads);
            }
        }
        out.maximal_bad.sort_by_key(|c| c.square);
        out.maximal_good.sort_by_key(|c| c.square);
        out.scaling.sort_by_key(|c| c.good_parent);
        out.regions.sort_by_key(|c| c.bad_square);
        out.cells.sort();
        Ok(out)
    }

    /// Maximal bad squares among `roots` and their descendants.
    fn search_bad(&mut self, roots: Vec<DyadicSquare>) -> Result<Vec<DyadicSquare>> {
        let d_max = self.params.d_max;
        let mut stack = roots;
        let mut found = Vec::new();
        while let Some(q) = stack.pop() {
            if box_clear_of(self.b, q, self.params.k, self.params.delta) {
                continue;
            }
            let c = self.classify(q);
            if c.kind == SquareKind::Bad {
                if q.level >= d_max {
                    return Err(Error::BadAtDepthLimit { level: q.level, index: q.index });
                }
                found.push(q);
            } else if q.level < d_max {
                stack.extend(q.children());
            }
        }
        found.sort();
        Ok(found)
    }

    /// Maximal good squares strictly inside `qb` and the top halves forming `R(qb)`.
    fn search_good(&mut self, qb: DyadicSquare) -> Result<(Vec<DyadicSquare>, Vec<DyadicSquare>)> {
        let d_max = self.params.d_max;
        let mut goods = Vec::new();
        let mut cells = vec![qb];
        let mut stack: Vec<DyadicSquare> = qb.children().to_vec();
        while let Some(q) = stack.pop() {
            let c = self.classify(q);
            if c.kind == SquareKind::Good {
                goods.push(q);
                continue;
            }
            if q.level >= d_max {
                return Err(Error::RegionAtDepthLimit { level: qb.level, index: qb.index });
            }
            cells.push(q);
            stack.extend(q.children());
        }
        goods.sort();
        Ok((goods, cells))
    }
}

/// True when `|B| > δ` on the `K`-neighborhood of the whole box
/// `{r ≥ 1 − 2^−n, θ ∈ I(Q)}`, so no square at or below `q` is bad.
fn box_clear_of(b: &BlaschkeProduct, q: DyadicSquare, k: f64, delta: f64) -> bool {
    if b.is_constant() {
        return true;
    }
    if q.level == 0 {
        return false;
    }
    let span = Some((q.theta_lo(), q.theta_hi()));
    let log_delta = delta.ln();
    let mut acc = 0.0;
    for z in b.all_zeros() {
        let d = polar_dist_lower_bound(z, q.r_inner(), 1.0, span) - k;
        if d <= 0.0 {
            return false;
        }
        acc += d.tanh().ln();
        if acc <= log_delta {
            return false;
        }
    }
    true
}

/// Lower bound for the distance from `z` to `{r_lo ≤ r ≤ r_hi, θ ∈ span}`.
fn polar_dist_lower_bound(z: DiskPoint, r_lo: f64, r_hi: f64, span: Option<(f64, f64)>) -> f64 {
    let r = z.abs();
    let pd = |a: f64, b: f64| ((b - a) / (1.0 - a * b)).atanh();
    let d_rad = if r < r_lo {
        pd(r, r_lo)
    } else if r > r_hi {
        pd(r_hi, r)
    } else {
        0.0
    };
    let d_ang = match span {
        Some((lo, hi)) => {
            let off = normalize_angle(z.angle() - lo);
            let gap = if off <= hi - lo { 0.0 } else { (off - (hi - lo)).min(TAU - off) };
            // Distance to the nearest bounding ray through the origin.
            0.5 * (2.0 * r * gap.min(FRAC_PI_2).sin() / ((1.0 - r) * (1.0 + r))).asinh()
        }
        None => 0.0,
    };
    d_rad.max(d_ang)
}

/// Zeros farther than this from a hull are dropped from its certified upper
/// bound; each dropped factor is below 1, so the bound stays valid.
const NEAR_CUTOFF: f64 = 6.0;

fn near_factor(b: &BlaschkeProduct, hull: &Hull) -> BlaschkeProduct {
    let (r_lo, r_hi, span) = match *hull {
        Hull::Disk { r_hi } => (0.0, r_hi, None),
        Hull::Annulus { r_lo, r_hi } => (r_lo, r_hi, None),
        Hull::Sector { r_lo, r_hi, th_lo, th_hi } => (r_lo, r_hi, Some((th_lo, th_hi))),
    };
    BlaschkeProduct::from_zeros(b.all_zeros().filter(|&z| polar_dist_lower_bound(z, r_lo, r_hi, span) < NEAR_CUTOFF))
}

/// Largest `|B|` over a few points of `Ω_K(T(Q))`: the corners and center of
/// `T(Q)` and a circle of radius just below `K` around the center, outward
/// directions first.
fn quick_lower_bound(b: &BlaschkeProduct, q: DyadicSquare, k: f64, stop: f64) -> f64 {
    let center = if q.level == 0 {
        DiskPoint::ORIGIN
    } else {
        let r = (0.5 * (q.r_inner().atanh() + q.r_mid().atanh())).tanh();
        DiskPoint::from_complex_clamped(Complex64::from_polar(r, q.theta_mid()))
    };
    let out = outward_direction(center);
    let mut pts: Vec<DiskPoint> = (0..16)
        .map(|i| {
            let step = ((i + 1) / 2) as f64 * if i % 2 == 1 { 1.0 } else { -1.0 };
            point_at_distance(center, out + step * TAU / 16.0, 0.999_999 * k)
        })
        .collect();
    pts.push(center);
    if q.level > 0 {
        for &r in &[q.r_inner(), q.r_mid()] {
            for &th in &[q.theta_lo(), q.theta_hi()] {
                pts.push(DiskPoint::from_complex_clamped(Complex64::from_polar(r, th)));
            }
        }
    }
    let mut best: f64 = 0.0;
    for w in pts {
        best = best.max(b.eval_modulus(w));
        if best > stop {
            break;
        }
    }
    best
}

/// Rigorous upper bound for `sup |B|` over `Ω_K(E)` via the maximum principle
/// on a polar superset. Returns `(value, exact)`; the sweep stops as soon as
/// the bound reaches `stop`, in which case `value` only bounds it from below.
fn certified_upper(b: &BlaschkeProduct, e: &Region, k: f64, mesh: f64, stop: f64, budget: u64) -> (f64, bool) {
    let hull = e.neighborhood_hull(k);
    let near = near_factor(b, &hull);
    let b = &near;
    let mut last = (f64::INFINITY, false);
    for spacing in [mesh, 0.25 * mesh] {
        let count = hull.boundary_sample_count(spacing);
        let t = (0.5 * spacing).tanh();
        let mut u: f64 = 0.0;
        let mut raw: f64 = 0.0;
        let mut complete = count <= budget as f64;
        for (i, w) in hull.boundary_points(spacing).enumerate() {
            if i as u64 >= budget {
                complete = false;
                break;
            }
            u = u.max(b.modulus_upper_bound(w, t));
            raw = raw.max(b.eval_modulus(w));
            if u >= stop && raw >= stop {
                return (u, false);
            }
        }
        if complete {
            if u < stop || raw >= stop {
                return (u, true);
            }
            last = (u, true);
        } else {
            last = (u.max(stop), false);
        }
    }
    last
}

// ---------------------------------------------------------------------------
// Grid geometry

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum EdgeKey {
    /// Atomic arc on radius level `m` from angular position `a`.
    Arc { m: u32, a: u64 },
    /// Radial piece at position `a` from radius level `m` to `m + 1`.
    Radial { m: u32, a: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Vertex {
    m: u32,
    a: u64,
}

/// Headings in the local frame (outward radial = east, counterclockwise = north).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Dir {
    E = 0,
    N = 1,
    W = 2,
    S = 3,
}

#[derive(Clone, Copy, Debug)]
struct GridEdge {
    from: Vertex,
    to: Vertex,
    dir: Dir,
    key: EdgeKey,
}

struct Grid {
    d: u32,
}

impl Grid {
    fn full(&self) -> u64 {
        1u64 << self.d
    }

    fn arc_units(&self, m: u32) -> u64 {
        1u64 << (self.d - m)
    }

    fn cell_edges(&self, q: DyadicSquare, out: &mut Vec<(EdgeKey, i32)>) {
        if q.level == 0 {
            let h = self.arc_units(1);
            out.push((EdgeKey::Arc { m: 1, a: 0 }, 1));
            out.push((EdgeKey::Arc { m: 1, a: h }, 1));
            return;
        }
        let n = q.level;
        let u = self.arc_units(n);
        let a0 = q.index * u;
        let a1 = (a0 + u) % self.full();
        out.push((EdgeKey::Radial { m: n, a: a0 }, 1));
        out.push((EdgeKey::Arc { m: n + 1, a: a0 }, 1));
        out.push((EdgeKey::Arc { m: n + 1, a: a0 + u / 2 }, 1));
        out.push((EdgeKey::Radial { m: n, a: a1 }, -1));
        out.push((EdgeKey::Arc { m: n, a: a0 }, -1));
    }

    fn directed(&self, key: EdgeKey, sign: i32) -> GridEdge {
        match key {
            EdgeKey::Arc { m, a } => {
                let b = (a + self.arc_units(m)) % self.full();
                let (p, q) = (Vertex { m, a }, Vertex { m, a: b });
                if sign > 0 {
                    GridEdge { from: p, to: q, dir: Dir::N, key }
                } else {
                    GridEdge { from: q, to: p, dir: Dir::S, key }
                }
            }
            EdgeKey::Radial { m, a } => {
                let (p, q) = (Vertex { m, a }, Vertex { m: m + 1, a });
                if sign > 0 {
                    GridEdge { from: p, to: q, dir: Dir::E, key }
                } else {
                    GridEdge { from: q, to: p, dir: Dir::W, key }
                }
            }
        }
    }

    fn radius(&self, m: u32) -> f64 {
        1.0 - 0.5f64.powi(m as i32)
    }

    fn angle(&self, a: u64) -> f64 {
        TAU * a as f64 / self.full() as f64
    }

    fn key_length(&self, key: EdgeKey) -> f64 {
        match key {
            EdgeKey::Arc { m, .. } => self.radius(m) * TAU * self.arc_units(m) as f64 / self.full() as f64,
            EdgeKey::Radial { m, .. } => self.radius(m + 1) - self.radius(m),
        }
    }

    fn signed_area(&self, lp: &[GridEdge]) -> f64 {
        lp.iter()
            .map(|e| match e.key {
                EdgeKey::Arc { m, .. } => {
                    let r = self.radius(m);
                    let dth = TAU * self.arc_units(m) as f64 / self.full() as f64;
                    0.5 * r * r * if e.dir == Dir::N { dth } else { -dth }
                }
                EdgeKey::Radial { .. } => 0.0,
            })
            .sum()
    }
}

/// Boundary edges of a union of closed top halves after cancelling shared
/// edges.
fn boundary_keys(grid: &Grid, cells: &[DyadicSquare]) -> Vec<(EdgeKey, i32)> {
    let mut acc: BTreeMap<EdgeKey, i32> = BTreeMap::new();
    let mut buf = Vec::new();
    for &q in cells {
        buf.clear();
        grid.cell_edges(q, &mut buf);
        for &(k, s) in &buf {
            *acc.entry(k).or_insert(0) += s;
        }
    }
    acc.into_iter().filter(|&(_, s)| s != 0).collect()
}

/// Euclidean length of the boundary of a union of top halves.
pub fn boundary_length(cells: &[DyadicSquare], d_max: u32) -> f64 {
    let grid = Grid { d: d_max + 1 };
    boundary_keys(&grid, cells).iter().map(|&(k, s)| grid.key_length(k) * s.unsigned_abs() as f64).sum()
}

fn neighbors(q: DyadicSquare) -> Vec<DyadicSquare> {
    let mut out = Vec::new();
    if q.level == 0 {
        out.extend(q.children());
        return out;
    }
    let count = 1u64 << q.level;
    if count > 1 {
        out.push(DyadicSquare { level: q.level, index: (q.index + 1) % count });
        out.push(DyadicSquare { level: q.level, index: (q.index + count - 1) % count });
    }
    out.extend(q.children());
    if let Some(p) = q.parent() {
        out.push(p);
    }
    out
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Groups cells into edge-connected components and traces their boundaries.
pub fn extract_components(cells: &[DyadicSquare], d_max: u32) -> Result<Vec<Component>> {
    let index: HashMap<DyadicSquare, usize> = cells.iter().enumerate().map(|(i, &q)| (q, i)).collect();
    let mut parent: Vec<usize> = (0..cells.len()).collect();
    for (i, &q) in cells.iter().enumerate() {
        for nb in neighbors(q) {
            if let Some(&j) = index.get(&nb) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<DyadicSquare>> = BTreeMap::new();
    for (i, &q) in cells.iter().enumerate() {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(q);
    }
    let grid = Grid { d: d_max + 1 };
    let mut comps = Vec::new();
    for (_, mut group) in groups {
        group.sort();
        let (outer, holes, anchor) = trace(&grid, &group)?;
        let edges = to_edges(&grid, &outer);
        let arclength = edges.iter().map(|e| e.length()).sum();
        comps.push(Component {
            id: 0,
            holes: holes.iter().map(|h| to_edges(&grid, h)).collect(),
            edges,
            cells: group,
            arclength,
            start_anchor: PolarPoint { r: grid.radius(anchor.m), theta: grid.angle(anchor.a) },
        });
    }
    comps.sort_by(|a, b| {
        (a.start_anchor.theta, a.start_anchor.r).partial_cmp(&(b.start_anchor.theta, b.start_anchor.r)).unwrap()
    });
    for (i, c) in comps.iter_mut().enumerate() {
        c.id = i;
    }
    Ok(comps)
}

type Loop = Vec<GridEdge>;

fn turn_rank(incoming: Dir, outgoing: Dir) -> u8 {
    // right, straight, left, back
    match (outgoing as u8 + 4 - incoming as u8) % 4 {
        3 => 0,
        0 => 1,
        1 => 2,
        _ => 3,
    }
}

fn trace(grid: &Grid, cells: &[DyadicSquare]) -> Result<(Loop, Vec<Loop>, Vertex)> {
    let keys = boundary_keys(grid, cells);
    let mut edges = Vec::new();
    for (k, s) in keys {
        if s.abs() != 1 {
            return Err(Error::Polyline(format!("edge {k:?} has multiplicity {s}")));
        }
        edges.push(grid.directed(k, s));
    }
    let mut out_of: HashMap<Vertex, Vec<usize>> = HashMap::new();
    for (i, e) in edges.iter().enumerate() {
        out_of.entry(e.from).or_default().push(i);
    }
    let mut used = vec![false; edges.len()];
    let mut loops: Vec<Loop> = Vec::new();
    for start in 0..edges.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let mut lp = vec![edges[start]];
        let mut cur = edges[start];
        loop {
            let cands = out_of.get(&cur.to).map(|v| v.as_slice()).unwrap_or(&[]);
            let mut best: Option<(u8, usize)> = None;
            for &i in cands {
                if used[i] && i != start {
                    continue;
                }
                let rank = turn_rank(cur.dir, edges[i].dir);
                if best.is_none_or(|(r, _)| rank < r) {
                    best = Some((rank, i));
                }
            }
            match best {
                Some((_, i)) if i == start => break,
                Some((_, i)) => {
                    used[i] = true;
                    lp.push(edges[i]);
                    cur = edges[i];
                }
                None => return Err(Error::Polyline("open boundary loop".into())),
            }
        }
        loops.push(lp);
    }
    let mut outer: Option<Loop> = None;
    let mut holes = Vec::new();
    for lp in loops {
        if grid.signed_area(&lp) > 0.0 {
            if outer.is_some() {
                return Err(Error::Polyline("component with two outer loops".into()));
            }
            outer = Some(lp);
        } else {
            holes.push(lp);
        }
    }
    let mut outer = outer.ok_or_else(|| Error::Polyline("component without outer loop".into()))?;
    let pos = (0..outer.len()).min_by_key(|&i| (outer[i].from.a, outer[i].from.m)).unwrap();
    outer.rotate_left(pos);
    let anchor = outer[0].from;
    Ok((outer, holes, anchor))
}

fn to_edges(grid: &Grid, lp: &[GridEdge]) -> Vec<Edge> {
    let mut out: Vec<Edge> = Vec::new();
    for e in lp {
        let start = PolarPoint { r: grid.radius(e.from.m), theta: grid.angle(e.from.a) };
        let end = PolarPoint { r: grid.radius(e.to.m), theta: grid.angle(e.to.a) };
        let (kind, sweep) = match e.key {
            EdgeKey::Arc { m, .. } => {
                let dth = TAU * grid.arc_units(m) as f64 / grid.full() as f64;
                (EdgeKind::Arc, if e.dir == Dir::N { dth } else { -dth })
            }
            EdgeKey::Radial { .. } => (EdgeKind::Radial, 0.0),
        };
        if let Some(last) = out.last_mut() {
            let same_arc = kind == EdgeKind::Arc
                && last.kind == EdgeKind::Arc
                && last.start.r == start.r
                && last.sweep.signum() == sweep.signum();
            let same_ray = kind == EdgeKind::Radial
                && last.kind == EdgeKind::Radial
                && last.start.theta == start.theta
                && (last.end.r - last.start.r).signum() == (end.r - start.r).signum();
            if same_arc {
                last.end = end;
                last.sweep += sweep;
                continue;
            }
            if same_ray {
                last.end = end;
                continue;
            }
        }
        out.push(Edge { kind, start, end, sweep });
    }
    out
}

// ---------------------------------------------------------------------------
// Conclusion audits

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerCheck {
    pub samples: usize,
    pub max_modulus: f64,
    pub bound: f64,
    pub holds: bool,
}

fn random_cell_point(rng: &mut ChaCha8Rng, q: DyadicSquare) -> DiskPoint {
    if q.level == 0 {
        let r = 0.5 * rng.random::<f64>().sqrt();
        return DiskPoint::from_complex_clamped(Complex64::from_polar(r, rng.random::<f64>() * TAU));
    }
    let (a, b) = (q.r_inner().atanh(), q.r_mid().atanh());
    let r = (a + (b - a) * rng.random::<f64>()).tanh();
    let th = q.theta_lo() + (q.theta_hi() - q.theta_lo()) * rng.random::<f64>();
    DiskPoint::from_complex_clamped(Complex64::from_polar(r, th))
}

/// Samples points of `Ω_K(int Γ)` and checks `|B| ≤ bound`.
pub fn check_inner_bound(
    b: &BlaschkeProduct,
    contour: &Contour,
    k: f64,
    bound: f64,
    samples: usize,
    seed: u64,
) -> InnerCheck {
    let cells: Vec<DyadicSquare> = contour.components.iter().flat_map(|c| c.cells.iter().copied()).collect();
    let mut out = InnerCheck { samples: 0, max_modulus: 0.0, bound, holds: true };
    if cells.is_empty() {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let q = cells[rng.random_range(0..cells.len())];
        let base = random_cell_point(&mut rng, q);
        let w = point_at_distance(base, rng.random::<f64>() * TAU, k * rng.random::<f64>());
        out.max_modulus = out.max_modulus.max(b.eval_modulus(w));
        out.samples += 1;
    }
    out.holds = out.max_modulus <= bound;
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExteriorCheck {
    pub samples: usize,
    pub failures: usize,
    pub radius: f64,
    pub threshold: f64,
    pub holds: bool,
}

/// Samples points outside every `int Γᵢ` (down to depth `2^−d_max`) and
/// searches each for a point within `radius` where `|B| > threshold`.
pub fn check_exterior_witness(
    b: &BlaschkeProduct,
    contour: &Contour,
    threshold: f64,
    radius: f64,
    samples: usize,
    seed: u64,
) -> ExteriorCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d_max = contour.params.d_max as f64;
    let mut out = ExteriorCheck { samples: 0, failures: 0, radius, threshold, holds: true };
    let mut attempts = 0;
    while out.samples < samples && attempts < 20 * samples {
        attempts += 1;
        let depth = if rng.random::<f64>() < 0.2 {
            1.0 - 0.5 * rng.random::<f64>().sqrt()
        } else {
            0.5f64.powf(1.0 + (d_max - 1.0) * rng.random::<f64>())
        };
        let z = DiskPoint::from_complex_clamped(Complex64::from_polar(1.0 - depth, rng.random::<f64>() * TAU));
        if contour.components.iter().any(|c| point_in_interior(z, c) != Containment::Outside) {
            continue;
        }
        out.samples += 1;
        if find_witness(b, z, threshold, radius).point.is_none() && b.eval_modulus(z) <= threshold {
            out.failures += 1;
        }
    }
    out.holds = out.failures == 0;
    out
}

/// Cells of `Γ` that touch the grid rings, for rendering.
pub fn cell_set(contour: &Contour) -> HashSet<DyadicSquare> {
    contour.components.iter().flat_map(|c| c.cells.iter().copied()).collect()
}
