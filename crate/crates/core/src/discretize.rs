//! Unit-mass arc splitting of each boundary measure and moment-matched zero
//! placement: `1 − |ξ|² = ∫_arc (1 − |ζ|²) dμ(ζ)`.

use serde::{Deserialize, Serialize};

use crate::blaschke::BlaschkeProduct;
use crate::contour::{hyp_length_between, Component, Contour, Edge, EdgeKind};
use crate::error::{Error, Result};
use crate::geometry::DiskPoint;
use crate::harmonic::BoundaryMeasure;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArcSegment {
    pub component_id: usize,
    /// 1-based position along the component from its start anchor.
    pub index: usize,
    pub s_lo: f64,
    pub s_hi: f64,
    pub mass: f64,
    pub hyp_length: f64,
    pub placed_zero: DiskPoint,
    /// Arclength of the placed zero.
    pub placed_s: f64,
    pub moment_target: f64,
    /// `|(1 − |ξ|²) − target| / target`.
    pub moment_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationResult {
    pub arcs: Vec<ArcSegment>,
    pub i1: BlaschkeProduct,
    pub i1_odd: BlaschkeProduct,
    pub i1_even: BlaschkeProduct,
    /// `δ^{2e^{2(K+14)}}`; underflows to 0 for all practical parameters.
    pub length_floor: f64,
    pub log_length_floor: f64,
}

impl DiscretizationResult {
    pub fn empty(delta: f64, k: f64) -> Self {
        Self {
            arcs: Vec::new(),
            i1: BlaschkeProduct::identity(),
            i1_odd: BlaschkeProduct::identity(),
            i1_even: BlaschkeProduct::identity(),
            length_floor: length_floor(delta, k),
            log_length_floor: log_length_floor(delta, k),
        }
    }

    pub fn max_moment_residual(&self) -> f64 {
        self.arcs.iter().map(|a| a.moment_residual).fold(0.0, f64::max)
    }

    pub fn min_hyp_length(&self) -> f64 {
        self.arcs.iter().map(|a| a.hyp_length).fold(f64::INFINITY, f64::min)
    }

    pub fn max_mass_error(&self) -> f64 {
        self.arcs.iter().map(|a| (a.mass - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Measured minimal hyperbolic arc length is at least the floor.
    pub fn length_floor_holds(&self) -> bool {
        self.arcs.is_empty() || self.min_hyp_length().ln() >= self.log_length_floor
    }
}

/// `ln δ^{2e^{2(K+14)}}`. With `K = 2N`.
pub fn log_length_floor(delta: f64, k: f64) -> f64 {
    2.0 * (2.0 * (k + 14.0)).exp() * delta.ln()
}

pub fn length_floor(delta: f64, k: f64) -> f64 {
    log_length_floor(delta, k).exp()
}

fn mass_count(mu: &BoundaryMeasure) -> Result<usize> {
    let m = mu.total.round();
    if (mu.total - m).abs() > 1e-9 || m < 0.0 {
        return Err(Error::InvalidParameter(format!("measure total {} is not an integer", mu.total)));
    }
    Ok(m as usize)
}

/// Arclength positions where the cumulative mass reaches `1, …, M − 1`.
pub fn split_component(_c: &Component, mu: &BoundaryMeasure) -> Result<Vec<f64>> {
    let m = mass_count(mu)?;
    if m == 0 {
        return Ok(Vec::new());
    }
    let cum = mu.cumulative();
    let mut cuts = Vec::with_capacity(m - 1);
    let mut b = 0;
    for k in 1..m {
        let target = k as f64;
        while b < mu.bin_count() && cum[b + 1] < target {
            b += 1;
        }
        let b = b.min(mu.bin_count() - 1);
        let mass = mu.bin_masses[b];
        let frac = if mass > 0.0 { ((target - cum[b]) / mass).clamp(0.0, 1.0) } else { 0.0 };
        cuts.push(mu.bin_edges[b] + frac * (mu.bin_edges[b + 1] - mu.bin_edges[b]));
    }
    Ok(cuts)
}

/// Mass of `[0, s]` under the piecewise-uniform bin density.
fn cum_at(mu: &BoundaryMeasure, cum: &[f64], s: f64) -> f64 {
    let nb = mu.bin_count();
    if s <= 0.0 {
        return 0.0;
    }
    if s >= mu.arclength {
        return cum[nb];
    }
    let w = mu.bin_width();
    let b = ((s / w) as usize).min(nb - 1);
    let b = if s < mu.bin_edges[b] {
        b - 1
    } else if b + 1 < nb && s >= mu.bin_edges[b + 1] {
        b + 1
    } else {
        b
    };
    cum[b] + mu.bin_masses[b] * (s - mu.bin_edges[b]) / (mu.bin_edges[b + 1] - mu.bin_edges[b])
}

/// `∫_{s0}^{s1} (1 − |ζ(s)|²) ds` along one edge (local arclengths).
fn weight_integral(e: &Edge, s0: f64, s1: f64) -> f64 {
    match e.kind {
        EdgeKind::Arc => (1.0 - e.start.r * e.start.r) * (s1 - s0),
        EdgeKind::Radial => {
            let r0 = e.polar_at(s0).r;
            let r1 = e.polar_at(s1).r;
            (s1 - s0) - (r1.powi(3) - r0.powi(3)).abs() / 3.0
        }
    }
}

struct Piece {
    edge: usize,
    /// Local arclengths on the edge.
    lo: f64,
    hi: f64,
    /// Global arclength of `lo`.
    global: f64,
}

/// Pieces of `[a, b]` split at edge boundaries.
fn pieces(c: &Component, offsets: &[f64], a: f64, b: f64) -> Vec<Piece> {
    let mut out = Vec::new();
    for (i, e) in c.edges.iter().enumerate() {
        let (e0, e1) = (offsets[i], offsets[i] + e.length());
        let lo = a.max(e0);
        let hi = b.min(e1);
        if hi > lo {
            out.push(Piece { edge: i, lo: lo - e0, hi: hi - e0, global: lo });
        }
    }
    out
}

/// `∫_{[a,b]} (1 − |ζ|²) dμ` with the bin density, split at bin and edge boundaries.
fn moment(c: &Component, offsets: &[f64], mu: &BoundaryMeasure, a: f64, b: f64) -> f64 {
    let w = mu.bin_width();
    let mut acc = 0.0;
    for p in pieces(c, offsets, a, b) {
        let e = &c.edges[p.edge];
        let g0 = p.global;
        let g1 = p.global + (p.hi - p.lo);
        let mut bin = ((g0 / w) as usize).min(mu.bin_count() - 1);
        while bin > 0 && mu.bin_edges[bin] > g0 {
            bin -= 1;
        }
        let mut s = g0;
        while s < g1 && bin < mu.bin_count() {
            let t = g1.min(mu.bin_edges[bin + 1]);
            if t > s {
                let density = mu.bin_masses[bin] / (mu.bin_edges[bin + 1] - mu.bin_edges[bin]);
                let local0 = p.lo + (s - g0);
                let local1 = p.lo + (t - g0);
                acc += density * weight_integral(e, local0, local1);
            }
            s = t;
            bin += 1;
        }
    }
    acc
}

/// First point of `[a, b]` with `1 − |ζ|² = target`.
pub fn place_zero(c: &Component, offsets: &[f64], a: f64, b: f64, target: f64) -> (DiskPoint, f64) {
    let r_star = (1.0 - target).max(0.0).sqrt();
    let mut best: Option<(f64, f64)> = None;
    for p in pieces(c, offsets, a, b) {
        let e = &c.edges[p.edge];
        match e.kind {
            EdgeKind::Arc => {
                let w = 1.0 - e.start.r * e.start.r;
                let res = (w - target).abs();
                if res <= 1e-12 * target.max(1e-300) {
                    return (e.point_at(p.lo), p.global);
                }
                if best.is_none_or(|(r, _)| res < r) {
                    best = Some((res, p.global));
                }
            }
            EdgeKind::Radial => {
                let r0 = e.polar_at(p.lo).r;
                let r1 = e.polar_at(p.hi).r;
                let (lo, hi) = (r0.min(r1), r0.max(r1));
                if r_star >= lo && r_star <= hi {
                    let local = (p.lo + (r_star - r0).abs()).clamp(p.lo, p.hi);
                    return (e.point_at(local), p.global + (local - p.lo));
                }
                for (local, r) in [(p.lo, r0), (p.hi, r1)] {
                    let res = ((1.0 - r * r) - target).abs();
                    if best.is_none_or(|(x, _)| res < x) {
                        best = Some((res, p.global + (local - p.lo)));
                    }
                }
            }
        }
    }
    let s = best.map(|b| b.1).unwrap_or(a);
    (c.point_at(offsets, s), s)
}

/// Arcs and placed zeros for one component.
pub fn discretize_component(c: &Component, mu: &BoundaryMeasure) -> Result<Vec<ArcSegment>> {
    let m = mass_count(mu)?;
    if m == 0 {
        return Ok(Vec::new());
    }
    let cuts = split_component(c, mu)?;
    let offsets = c.edge_offsets();
    let cum = mu.cumulative();
    let mut bounds = vec![0.0];
    bounds.extend(cuts);
    bounds.push(c.arclength);
    let mut arcs = Vec::with_capacity(m);
    for k in 0..m {
        let (a, b) = (bounds[k], bounds[k + 1]);
        let hi = if k + 1 == m { cum[mu.bin_count()] } else { cum_at(mu, &cum, b) };
        let mass = hi - cum_at(mu, &cum, a);
        let target = moment(c, &offsets, mu, a, b);
        let (xi, s) = place_zero(c, &offsets, a, b, target);
        let residual = ((1.0 - xi.norm_sqr()) - target).abs() / target.max(f64::MIN_POSITIVE);
        let hyp: f64 = pieces(c, &offsets, a, b).iter().map(|p| hyp_length_between(&c.edges[p.edge], p.lo, p.hi)).sum();
        arcs.push(ArcSegment {
            component_id: c.id,
            index: k + 1,
            s_lo: a,
            s_hi: b,
            mass,
            hyp_length: hyp,
            placed_zero: xi,
            placed_s: s,
            moment_target: target,
            moment_residual: residual,
        });
    }
    Ok(arcs)
}

/// Parity split by arc index within each component.
pub fn odd_even_factor(arcs: &[ArcSegment]) -> (BlaschkeProduct, BlaschkeProduct) {
    let odd = arcs.iter().filter(|a| a.index % 2 == 1).map(|a| a.placed_zero);
    let even = arcs.iter().filter(|a| a.index % 2 == 0).map(|a| a.placed_zero);
    (BlaschkeProduct::from_zeros(odd), BlaschkeProduct::from_zeros(even))
}

/// Discretizes every component that carries mass.
pub fn discretize(contour: &Contour, measures: &[BoundaryMeasure], delta: f64) -> Result<DiscretizationResult> {
    let mut out = DiscretizationResult::empty(delta, contour.params.k);
    for mu in measures {
        let c = contour
            .components
            .iter()
            .find(|c| c.id == mu.component_id)
            .ok_or_else(|| Error::InvalidParameter(format!("no component {}", mu.component_id)))?;
        out.arcs.extend(discretize_component(c, mu)?);
    }
    out.i1 = BlaschkeProduct::from_zeros(out.arcs.iter().map(|a| a.placed_zero));
    let (odd, even) = odd_even_factor(&out.arcs);
    out.i1_odd = odd;
    out.i1_even = even;
    Ok(out)
}
