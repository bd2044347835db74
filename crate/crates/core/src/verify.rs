//! Measurements on the finished construction: interpolation conditions,
//! the sup-norm modulus difference, arc-class diagnostics, and the `|B₁|`
//! floor on the contour.

use std::f64::consts::{PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blaschke::BlaschkeProduct;
use crate::contour::{carleson_norm, dist_to_contour, point_in_interior, Atom, Containment, Contour, EdgeKind};
use crate::discretize::{log_length_floor, DiscretizationResult};
use crate::dyadic::CarlesonSquare;
use crate::error::{Error, Result};
use crate::geometry::{angular_gap, circle_points, pseudo_dist, DiskPoint, HyperbolicNet, NetCircle};
use crate::harmonic::BoundaryMeasure;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpolationReport {
    pub separation: f64,
    pub carleson_norm: f64,
    pub pairs: u64,
}

impl InterpolationReport {
    pub fn passes(&self) -> bool {
        self.separation > 0.0 && self.carleson_norm.is_finite()
    }
}

/// Pairwise separation `inf ρ(zₙ, zₘ)` and the Carleson norm of
/// `Σ (1 − |zₙ|) δ_{zₙ}`.
pub fn interpolation_report(zeros: &[DiskPoint], d_max: u32) -> InterpolationReport {
    let n = zeros.len();
    let pairs = (n as u64) * (n.saturating_sub(1) as u64) / 2;
    let separation = if n < 2 {
        1.0
    } else {
        (0..n)
            .into_par_iter()
            .map(|i| zeros[i + 1..].iter().map(|&w| pseudo_dist(zeros[i], w)).fold(1.0, f64::min))
            .reduce(|| 1.0, f64::min)
    };
    let atoms: Vec<Atom> = zeros.iter().map(|&z| Atom::Point { point: z, mass: z.depth() }).collect();
    InterpolationReport { separation, carleson_norm: carleson_norm(&atoms, d_max), pairs }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupDiffReport {
    pub sup_diff: f64,
    pub mesh: f64,
    /// `2 tanh(mesh)`.
    pub slack: f64,
    pub argmax: DiskPoint,
    pub points: u64,
    /// Net circles searched, innermost first; the tail circle is the last.
    pub circles_searched: usize,
    /// Radius `R` of the tail circle, past every zero of `B` and `I`
    /// outside a common factor.
    pub tail_radius: f64,
    /// Bound for `|log|B| − log|I||` on `|z| ≥ R`: its sampled maximum on
    /// the tail circle plus a Lipschitz term for the gaps between samples.
    /// The difference is harmonic there and vanishes on the unit circle.
    pub tail_log_bound: f64,
    /// `1 − exp(−tail_log_bound)`, a bound on `||B| − |I||` for `|z| ≥ R`.
    pub tail_bound: f64,
    /// `min(|B|, |I|) ≥ tail_floor` on the deepest net circle and beyond,
    /// from `ρ(z, zₙ) ≥ ρ(|z|, |zₙ|)`.
    pub tail_floor: f64,
    pub zeros_inside_tail: bool,
}

impl SupDiffReport {
    pub fn certified_bound(&self) -> f64 {
        self.sup_diff + self.slack
    }

    /// `sup_diff + slack ≤ ε` on the net and the tail bound is at most `ε`.
    pub fn passes(&self, epsilon: f64) -> bool {
        self.certified_bound() <= epsilon && self.zeros_inside_tail && self.tail_bound <= epsilon
    }
}

/// Lower bound for `|B(z)|` on `|z| ≥ r`, from `ρ(z, zₙ) ≥ ρ(|z|, |zₙ|)`.
pub fn radial_floor(b: &BlaschkeProduct, r: f64) -> f64 {
    b.all_zeros()
        .map(|z| {
            let a = z.abs();
            if a >= r {
                0.0
            } else {
                (r - a) / (1.0 - r * a)
            }
        })
        .product()
}

/// The tail circle is the first circle past the differing zeros whose tail
/// bound is at most this; failing that, the best of the first
/// `TAIL_ATTEMPTS` circles past them.
const TAIL_TARGET: f64 = 0.05;
const TAIL_ATTEMPTS: usize = 24;

/// `max ||B| − |I||` over the net, with a bound beyond the tail circle.
pub fn sup_modulus_diff(b: &BlaschkeProduct, i: &BlaschkeProduct, net: &HyperbolicNet) -> SupDiffReport {
    sup_diff_impl(
        net,
        |z, _| (b.eval_modulus(z) - i.eval_modulus(z)).abs(),
        b,
        i,
        |r| radial_floor(b, r).min(radial_floor(i, r)),
    )
}

/// Same as [`sup_modulus_diff`] for `B = B₁B₂` and `I = I₁B₂`, using
/// `||B| − |I|| = |B₂| · ||B₁| − |I₁||` and skipping `B₂` where the first
/// factor alone cannot raise the maximum.
pub fn sup_modulus_diff_split(
    b1: &BlaschkeProduct,
    i1: &BlaschkeProduct,
    b2: &BlaschkeProduct,
    net: &HyperbolicNet,
) -> SupDiffReport {
    sup_diff_impl(
        net,
        |z, best| {
            let d1 = (b1.eval_modulus(z) - i1.eval_modulus(z)).abs();
            if d1 <= best {
                return 0.0;
            }
            d1 * b2.eval_modulus(z)
        },
        b1,
        i1,
        |r| radial_floor(b1, r).min(radial_floor(i1, r)) * radial_floor(b2, r),
    )
}

fn sup_diff_impl(
    net: &HyperbolicNet,
    diff: impl Fn(DiskPoint, f64) -> f64 + Sync,
    b: &BlaschkeProduct,
    i: &BlaschkeProduct,
    floor: impl Fn(f64) -> f64,
) -> SupDiffReport {
    let differing: Vec<DiskPoint> = b.all_zeros().chain(i.all_zeros()).collect();
    let r_max = differing.iter().map(|z| z.abs()).fold(0.0, f64::max);
    let n_circles = net.circles.len();
    let first = net
        .circles
        .iter()
        .position(|c| c.radius > r_max && ((c.radius - r_max) / (1.0 - c.radius * r_max)).atanh() >= 0.5);
    let (tail, tail_log_bound) = match first {
        None => (n_circles.saturating_sub(1), if differing.is_empty() { 0.0 } else { f64::INFINITY }),
        Some(f) if differing.is_empty() => (f, 0.0),
        Some(f) => {
            let mut pick = (f, f64::INFINITY);
            for ci in f..n_circles.min(f + TAIL_ATTEMPTS) {
                let v = tail_log_bound_on(b, &differing, &net.circles[ci]);
                if v < pick.1 {
                    pick = (ci, v);
                }
                if -(-v).exp_m1() <= TAIL_TARGET {
                    break;
                }
            }
            pick
        }
    };
    // One circle past the tail keeps every |z| ≤ R within mesh of a searched point.
    let searched = (tail + 2).min(n_circles);
    let (best, arg, points) = net.circles[..searched]
        .par_iter()
        .enumerate()
        .map(|(ci, c)| {
            let mut best = (0.0f64, ci, 0u64);
            let mut pts = 0u64;
            for (k, z) in circle_points(c).enumerate() {
                pts += 1;
                let d = diff(z, best.0);
                if d > best.0 {
                    best = (d, ci, k as u64);
                }
            }
            (best, pts)
        })
        .map(|(b, p)| (b.0, (b.1, b.2), p))
        .reduce(
            || (0.0, (usize::MAX, 0), 0),
            |a, b| {
                let pick = if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b.1 } else { a.1 };
                (a.0.max(b.0), pick, a.2 + b.2)
            },
        );
    let argmax = if arg.0 == usize::MAX || net.circles.is_empty() {
        DiskPoint::ORIGIN
    } else {
        circle_points(&net.circles[arg.0]).nth(arg.1 as usize).unwrap_or(DiskPoint::ORIGIN)
    };
    let tail_radius = net.circles.get(tail).map_or(0.0, |c| c.radius);
    let zeros_inside_tail = r_max < tail_radius || differing.is_empty();
    SupDiffReport {
        sup_diff: best,
        mesh: net.mesh,
        slack: 2.0 * net.mesh.tanh(),
        argmax,
        points,
        circles_searched: searched,
        tail_radius,
        tail_log_bound,
        tail_bound: if tail_log_bound.is_finite() { -(-tail_log_bound).exp_m1() } else { 1.0 },
        tail_floor: net.circles.last().map_or(1.0, |c| floor(c.radius)),
        zeros_inside_tail,
    }
}

/// Bound for `|log|B| − log|I||` on the circle `c`, hence on `|z| ≥ c.radius`.
///
/// Each sample adds `L·step/2`, with `L = Σ 2/sinh(2(β(z, a) − step/2))`
/// bounding the gradient along the arc to its neighbors.
fn tail_log_bound_on(b: &BlaschkeProduct, differing: &[DiskPoint], c: &NetCircle) -> f64 {
    let r = c.radius;
    let step = r * TAU / c.count.max(1) as f64 / ((1.0 - r) * (1.0 + r));
    let (ch, sh) = (step.cosh(), step.sinh());
    let n_b = b.degree();
    circle_points(c)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&z| {
            let mut h = 0.0;
            let mut lip = 0.0;
            for (k, &a) in differing.iter().enumerate() {
                let rho = pseudo_dist(z, a);
                let q = 1.0 - rho * rho;
                // sinh(2β − step) from sinh 2β = 2ρ/(1−ρ²), cosh 2β = (1+ρ²)/(1−ρ²).
                let den = 2.0 * rho * ch - (2.0 - q) * sh;
                if !(den > 0.0) {
                    return f64::INFINITY;
                }
                lip += 2.0 * q / den;
                h += if k < n_b { rho.ln() } else { -rho.ln() };
            }
            h.abs() + 0.5 * step * lip
        })
        .reduce(|| 0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "class", content = "n", rename_all = "snake_case")]
pub enum ArcClass {
    /// Contained in `2^N Q_z`.
    Boundary,
    Short(u32),
    Long(u32),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArcClassDiagnostics {
    pub z: DiskPoint,
    pub q_z: CarlesonSquare,
    pub classes: Vec<ArcClass>,
    pub h: Vec<f64>,
    pub e_b1: f64,
    pub e_b2: f64,
    pub e_b: f64,
    pub e_s: f64,
    pub e_l: f64,
    /// `Σ H_{i,k}(z)`.
    pub total: f64,
    /// `log|B₁(z)| − log|I₁(z)|` evaluated directly.
    pub direct: f64,
}

impl ArcClassDiagnostics {
    pub fn identity_gap(&self) -> f64 {
        (self.total - self.direct).abs()
    }
}

/// Whether `z` is at least `required` away from every interior.
pub fn admissible(z: DiskPoint, contour: &Contour, required: f64) -> std::result::Result<(), f64> {
    if contour.components.iter().any(|c| point_in_interior(z, c) != Containment::Outside) {
        return Err(0.0);
    }
    let d = dist_to_contour(z, contour);
    if d >= required {
        Ok(())
    } else {
        Err(d)
    }
}

fn square_contains_piece(q: &CarlesonSquare, e: &crate::contour::Edge, lo: f64, hi: f64) -> bool {
    if q.is_whole_disk() {
        return true;
    }
    let a = e.polar_at(lo);
    let b = e.polar_at(hi);
    let inside = |p: crate::contour::PolarPoint| {
        let d = 1.0 - p.r;
        d > 0.0 && d < q.side && angular_gap(p.theta, q.center_angle) < PI * q.side
    };
    if !inside(a) || !inside(b) {
        return false;
    }
    if e.kind == EdgeKind::Arc {
        // The angular gap over a contiguous sweep is maximal at an endpoint
        // unless the sweep passes the antipode of the center.
        let start = a.theta.min(b.theta);
        let span = (b.theta - a.theta).abs();
        let anti = crate::geometry::normalize_angle(q.center_angle + PI - start);
        if anti <= span || span >= 2.0 * PI - 1e-15 {
            return false;
        }
    }
    true
}

/// Arc classes and the terms of `log|B₁(z)| − log|I₁(z)| = Σ H_{i,k}(z)`.
pub fn arc_class_diagnostics(
    z: DiskPoint,
    contour: &Contour,
    disc: &DiscretizationResult,
    measures: &[BoundaryMeasure],
    b1: &BlaschkeProduct,
    big_n: u32,
    required: f64,
) -> Result<ArcClassDiagnostics> {
    if let Err(d) = admissible(z, contour, required) {
        return Err(Error::NotAdmissible { distance: d, required });
    }
    let q_z = CarlesonSquare::with_top_midpoint(z);
    let mut classes = Vec::with_capacity(disc.arcs.len());
    let mut h = Vec::with_capacity(disc.arcs.len());
    let (mut sb1, mut sb2, mut sb, mut ss, mut sl) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (idx, arc) in disc.arcs.iter().enumerate() {
        let comp = contour
            .components
            .iter()
            .find(|c| c.id == arc.component_id)
            .ok_or_else(|| Error::InvalidParameter(format!("no component {}", arc.component_id)))?;
        let mu = measures
            .iter()
            .find(|m| m.component_id == arc.component_id)
            .ok_or_else(|| Error::InvalidParameter(format!("no measure for component {}", arc.component_id)))?;
        let offsets = comp.edge_offsets();

        let contained = |q: &CarlesonSquare| {
            comp.edges.iter().enumerate().all(|(i, e)| {
                let (e0, e1) = (offsets[i], offsets[i] + e.length());
                let lo = arc.s_lo.max(e0);
                let hi = arc.s_hi.min(e1);
                hi <= lo || square_contains_piece(q, e, lo - e0, hi - e0)
            })
        };
        let class = if contained(&q_z.dilate(2f64.powi(big_n as i32))) {
            ArcClass::Boundary
        } else {
            let mut found = None;
            for n in big_n + 1..=big_n + 64 {
                if contained(&q_z.dilate(2f64.powi(n as i32))) {
                    found = Some(if arc.hyp_length < 1.0 { ArcClass::Short(n) } else { ArcClass::Long(n) });
                    break;
                }
            }
            found.ok_or(Error::OrphanArc { component: arc.component_id, index: idx })?
        };

        // Bin quadrature over bins ∩ arc.
        let rho_k = pseudo_dist(z, arc.placed_zero);
        let (mut hk, mut t1, mut t2) = (0.0, 0.0, 0.0);
        for b in 0..mu.bin_count() {
            let lo = mu.bin_edges[b].max(arc.s_lo);
            let hi = mu.bin_edges[b + 1].min(arc.s_hi);
            if hi <= lo || mu.bin_masses[b] == 0.0 {
                continue;
            }
            let mass = mu.bin_masses[b] * (hi - lo) / (mu.bin_edges[b + 1] - mu.bin_edges[b]);
            let xi = comp.point_at(&offsets, 0.5 * (lo + hi));
            let rho = pseudo_dist(z, xi);
            let t = 1.0 - (rho * rho) / (rho_k * rho_k);
            hk += (rho / rho_k).ln() * mass;
            t1 += t * mass;
            t2 += ((1.0 - t).ln() + t) * mass;
        }
        // The arc's unit mass against log ρ(z, ξ_k) is carried by the bins.
        match class {
            ArcClass::Boundary => {
                sb += hk;
                sb1 += t1;
                sb2 += t2;
            }
            ArcClass::Short(_) => ss += hk,
            ArcClass::Long(_) => sl += hk,
        }
        classes.push(class);
        h.push(hk);
    }
    let total: f64 = h.iter().sum();
    let lb1 = if b1.is_constant() { 0.0 } else { b1.log_modulus(z)? };
    let li1 = if disc.i1.is_constant() { 0.0 } else { disc.i1.log_modulus(z)? };
    Ok(ArcClassDiagnostics {
        z,
        q_z,
        classes,
        h,
        e_b1: 0.5 * sb1.abs(),
        e_b2: 0.5 * sb2.abs(),
        e_b: sb.abs(),
        e_s: ss.abs(),
        e_l: sl.abs(),
        total,
        direct: lb1 - li1,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaFloorReport {
    pub min_modulus: f64,
    pub samples: usize,
    pub log_floor: f64,
    pub holds: bool,
}

/// `min |B₁|` over sampled contour points against `δ^{2e^{2(K+14)}}`.
pub fn delta_floor_check(b1: &BlaschkeProduct, contour: &Contour, delta: f64) -> DeltaFloorReport {
    let log_floor = log_length_floor(delta, contour.params.k);
    let mut min_modulus: f64 = 1.0;
    let mut samples = 0;
    for e in contour.all_edges() {
        let n = 64;
        for i in 0..=n {
            let z = e.point_at(e.length() * i as f64 / n as f64);
            min_modulus = min_modulus.min(b1.eval_modulus(z));
            samples += 1;
        }
    }
    DeltaFloorReport { min_modulus, samples, log_floor, holds: min_modulus.ln() >= log_floor }
}
