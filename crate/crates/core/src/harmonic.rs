//! Harmonic measure of contour components seen from the `B₁` zeros inside,
//! `dμᵢ = Σₙ ω(zₙ, ·; int Γᵢ)`, by walk-on-spheres.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blaschke::BlaschkeProduct;
use crate::contour::{point_in_interior, Component, Containment, Edge, EdgeKind};
use crate::error::{Error, Result};
use crate::geometry::{pseudo_dist, DiskPoint};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    MonteCarlo { walks_per_source: u64 },
    Grid { spacing: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryMeasure {
    pub component_id: usize,
    pub arclength: f64,
    /// `bin_edges[i]..bin_edges[i+1]` is bin `i`, measured from the start anchor.
    pub bin_edges: Vec<f64>,
    pub bin_masses: Vec<f64>,
    pub total: f64,
    pub method: Method,
    pub seed: u64,
    /// Standard error of `raw_total` from walks that hit the step limit.
    pub stat_error: f64,
    /// Total before renormalization (walks that terminated, per source).
    pub raw_total: f64,
    pub renormalization: f64,
    pub sources: usize,
}

impl BoundaryMeasure {
    pub fn bin_count(&self) -> usize {
        self.bin_masses.len()
    }

    pub fn bin_width(&self) -> f64 {
        if self.bin_masses.is_empty() {
            0.0
        } else {
            self.arclength / self.bin_masses.len() as f64
        }
    }

    pub fn bin_mid(&self, i: usize) -> f64 {
        0.5 * (self.bin_edges[i] + self.bin_edges[i + 1])
    }

    pub fn walks_per_source(&self) -> u64 {
        match self.method {
            Method::MonteCarlo { walks_per_source } => walks_per_source,
            Method::Grid { .. } => 0,
        }
    }

    /// Standard error of one bin mass under multinomial sampling.
    pub fn bin_stat_error(&self, i: usize) -> f64 {
        let w = self.walks_per_source();
        if w == 0 || self.sources == 0 {
            return 0.0;
        }
        let p = self.bin_masses[i] / self.sources as f64;
        (self.sources as f64 * p * (1.0 - p) / w as f64).sqrt()
    }

    pub fn cumulative(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.bin_masses.len() + 1);
        out.push(0.0);
        for m in &self.bin_masses {
            acc += m;
            out.push(acc);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicDomain {
    pub boundary: Component,
    pub sources: Vec<DiskPoint>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonicConfig {
    pub walks_per_source: u64,
    pub seed: u64,
    /// Exit tolerance relative to the component diameter.
    pub exit_tolerance: f64,
    pub max_steps: u32,
    /// Number of leading steps driven by a randomly shifted Halton sequence.
    pub qmc_steps: usize,
}

impl Default for HarmonicConfig {
    fn default() -> Self {
        Self { walks_per_source: 100_000, seed: 0, exit_tolerance: 1e-6, max_steps: 10_000, qmc_steps: 8 }
    }
}

/// Bin count for a boundary of length `l`: width at most `min(0.01, l/1024)`.
pub fn bin_count_for(l: f64) -> usize {
    let w = 0.01f64.min(l / 1024.0);
    ((l / w).ceil() as usize).max(1)
}

pub const MAX_BINS: usize = 1 << 16;

/// Bin count for a component: the rule of [`bin_count_for`], refined so a
/// bin is at most a quarter of the smallest `1 − |ξ|` on the boundary, up to
/// [`MAX_BINS`].
pub fn bin_count_for_component(c: &Component) -> usize {
    let l = c.arclength;
    let base = bin_count_for(l);
    let depth = c.all_edges().map(|e| 1.0 - e.start.r.max(e.end.r)).fold(1.0, f64::min);
    let fine = (4.0 * l / depth).ceil();
    if fine.is_finite() {
        base.max((fine as usize).min(MAX_BINS))
    } else {
        base.max(MAX_BINS)
    }
}

pub fn harmonic_measure(dom: &HarmonicDomain, cfg: &HarmonicConfig) -> Result<BoundaryMeasure> {
    let comp = &dom.boundary;
    if !comp.is_simply_connected() {
        return Err(Error::MultiplyConnected(comp.id));
    }
    for &s in &dom.sources {
        if point_in_interior(s, comp) != Containment::Inside {
            return Err(Error::SourceNotInterior { component: comp.id, re: s.re, im: s.im });
        }
    }
    if cfg.walks_per_source == 0 {
        return Err(Error::InvalidParameter("walks_per_source must be positive".into()));
    }
    let l = comp.arclength;
    let nb = bin_count_for_component(comp);
    let width = l / nb as f64;
    let bin_edges: Vec<f64> = (0..=nb).map(|i| if i == nb { l } else { i as f64 * width }).collect();
    let bvh = Bvh::new(comp);
    let tol = cfg.exit_tolerance * comp.euclid_extent();

    let (counts, mut done_per_source) = dom
        .sources
        .par_iter()
        .enumerate()
        .fold(
            || (vec![0u64; nb], Vec::new()),
            |(mut counts, mut dones), (si, &src)| {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, comp.id as u64, si as u64));
                let shifts: Vec<f64> = (0..cfg.qmc_steps).map(|_| rng.random::<f64>()).collect();
                let mut done = 0u64;
                for w in 0..cfg.walks_per_source {
                    if let Some(s) = walk(&bvh, src, tol, cfg.max_steps, w, &shifts, &mut rng) {
                        let b = ((s / width) as usize).min(nb - 1);
                        counts[b] += 1;
                        done += 1;
                    }
                }
                dones.push((si, done));
                (counts, dones)
            },
        )
        .reduce(
            || (vec![0u64; nb], Vec::new()),
            |(mut a, mut da), (b, db)| {
                for (x, y) in a.iter_mut().zip(&b) {
                    *x += y;
                }
                da.extend(db);
                (a, da)
            },
        );
    done_per_source.sort_unstable();
    let done: u64 = done_per_source.iter().map(|&(_, d)| d).sum();
    let m = dom.sources.len();
    let walks = cfg.walks_per_source as f64;
    let raw_total = done as f64 / walks;
    let escape: f64 = done_per_source
        .iter()
        .map(|(_, d)| {
            let p = *d as f64 / walks;
            p * (1.0 - p) / walks
        })
        .sum();
    let stat_error = escape.sqrt();
    let mut bin_masses: Vec<f64>;
    let renormalization;
    if m == 0 {
        bin_masses = vec![0.0; nb];
        renormalization = 1.0;
    } else {
        if done == 0 {
            return Err(Error::InvalidParameter(format!("no walk terminated in component {}", comp.id)));
        }
        renormalization = m as f64 / raw_total;
        let scale = m as f64 / done as f64;
        bin_masses = counts.iter().map(|&c| c as f64 * scale).collect();
        let sum: f64 = bin_masses.iter().sum();
        let imax = (0..nb).max_by(|&a, &b| bin_masses[a].partial_cmp(&bin_masses[b]).unwrap()).unwrap();
        bin_masses[imax] += m as f64 - sum;
        if (raw_total - m as f64).abs() > 0.02 * m as f64 {
            log::warn!(
                "component {}: raw harmonic-measure total {raw_total} deviates from {m} by more than 2%",
                comp.id
            );
        }
    }
    Ok(BoundaryMeasure {
        component_id: comp.id,
        arclength: l,
        bin_edges,
        bin_masses,
        total: m as f64,
        method: Method::MonteCarlo { walks_per_source: cfg.walks_per_source },
        seed: cfg.seed,
        stat_error,
        raw_total,
        renormalization,
        sources: m,
    })
}

fn mix_seed(seed: u64, component: u64, source: u64) -> u64 {
    // splitmix64 over the three words
    let mut x = seed ^ component.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ source.wrapping_mul(0xD1B5_4A32_D192_ED03);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    out
}

/// One walk; returns the arclength of the exit point.
fn walk(
    bvh: &Bvh,
    src: DiskPoint,
    tol: f64,
    max_steps: u32,
    index: u64,
    shifts: &[f64],
    rng: &mut ChaCha8Rng,
) -> Option<f64> {
    let mut x = src.to_complex();
    for step in 0..max_steps as usize {
        let (d, s) = bvh.nearest(x);
        if d < tol {
            return Some(s);
        }
        let u = if step < shifts.len() && step < PRIMES.len() {
            (radical_inverse(index + 1, PRIMES[step]) + shifts[step]).fract()
        } else {
            rng.random::<f64>()
        };
        x += Complex64::from_polar(d, TAU * u);
    }
    None
}

struct BvhNode {
    bbox: [f64; 4],
    left: usize,
    right: usize,
    start: usize,
    end: usize,
}

struct Bvh {
    edges: Vec<(Edge, f64)>,
    boxes: Vec<[f64; 4]>,
    nodes: Vec<BvhNode>,
}

fn edge_bbox(e: &Edge) -> [f64; 4] {
    let mut pts = vec![e.start.to_disk().to_complex(), e.end.to_disk().to_complex()];
    if e.kind == EdgeKind::Arc {
        let lo = if e.sweep >= 0.0 { e.start.theta } else { e.end.theta };
        for k in 0..4 {
            let a = k as f64 * TAU / 4.0;
            if crate::geometry::normalize_angle(a - lo) <= e.sweep.abs() {
                pts.push(Complex64::from_polar(e.start.r, a));
            }
        }
    }
    let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for p in pts {
        b[0] = b[0].min(p.re);
        b[1] = b[1].min(p.im);
        b[2] = b[2].max(p.re);
        b[3] = b[3].max(p.im);
    }
    b
}

fn merge(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    [a[0].min(b[0]), a[1].min(b[1]), a[2].max(b[2]), a[3].max(b[3])]
}

fn box_dist(b: &[f64; 4], x: Complex64) -> f64 {
    let dx = (b[0] - x.re).max(0.0).max(x.re - b[2]);
    let dy = (b[1] - x.im).max(0.0).max(x.im - b[3]);
    dx.hypot(dy)
}

impl Bvh {
    fn new(c: &Component) -> Self {
        let offsets = c.edge_offsets();
        let mut edges: Vec<(Edge, f64)> = c.edges.iter().copied().zip(offsets).collect();
        let mut boxes: Vec<[f64; 4]> = edges.iter().map(|(e, _)| edge_bbox(e)).collect();
        let mut order: Vec<usize> = (0..edges.len()).collect();
        let mut nodes = Vec::new();
        build(&mut order, 0, edges.len(), &boxes, &mut nodes);
        edges = order.iter().map(|&i| edges[i]).collect();
        boxes = order.iter().map(|&i| boxes[i]).collect();
        Bvh { edges, boxes, nodes }
    }

    /// Nearest boundary point: distance and arclength, ties to the lower arclength.
    fn nearest(&self, x: Complex64) -> (f64, f64) {
        let mut best = (f64::INFINITY, f64::INFINITY);
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if box_dist(&node.bbox, x) > best.0 {
                continue;
            }
            if node.left == usize::MAX {
                for i in node.start..node.end {
                    if box_dist(&self.boxes[i], x) > best.0 {
                        continue;
                    }
                    let (e, off) = &self.edges[i];
                    let (d, s) = e.euclid_nearest(x);
                    let s = off + s;
                    if d < best.0 || (d == best.0 && s < best.1) {
                        best = (d, s);
                    }
                }
            } else {
                stack.push(node.left);
                stack.push(node.right);
            }
        }
        best
    }
}

fn build(order: &mut [usize], start: usize, end: usize, boxes: &[[f64; 4]], nodes: &mut Vec<BvhNode>) -> usize {
    let bbox = order[start..end]
        .iter()
        .fold([f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY], |a, &i| merge(a, boxes[i]));
    let id = nodes.len();
    nodes.push(BvhNode { bbox, left: usize::MAX, right: usize::MAX, start, end });
    if end - start <= 4 {
        return id;
    }
    let wide = bbox[2] - bbox[0] >= bbox[3] - bbox[1];
    let key = |i: usize| {
        let b = boxes[i];
        if wide {
            b[0] + b[2]
        } else {
            b[1] + b[3]
        }
    };
    order[start..end].sort_by(|&a, &b| key(a).partial_cmp(&key(b)).unwrap());
    let mid = (start + end) / 2;
    let l = build(order, start, mid, boxes, nodes);
    let r = build(order, mid, end, boxes, nodes);
    nodes[id].left = l;
    nodes[id].right = r;
    id
}

/// `|log|B₁(z)| − Σ_bins log ρ(z, ξ_bin)·mass|` with `ξ_bin` the bin midpoint.
pub fn mean_value_check(b1_component: &BlaschkeProduct, mu: &BoundaryMeasure, comp: &Component, z: DiskPoint) -> f64 {
    let lhs = if b1_component.is_constant() { 0.0 } else { b1_component.log_modulus(z).unwrap_or(f64::NEG_INFINITY) };
    (lhs - mean_value_quadrature(mu, comp, z)).abs()
}

pub fn mean_value_quadrature(mu: &BoundaryMeasure, comp: &Component, z: DiskPoint) -> f64 {
    if mu.sources == 0 {
        return 0.0;
    }
    let offsets = comp.edge_offsets();
    (0..mu.bin_count())
        .filter(|&i| mu.bin_masses[i] != 0.0)
        .map(|i| pseudo_dist(z, comp.point_at(&offsets, mu.bin_mid(i))).ln() * mu.bin_masses[i])
        .sum()
}

/// Standard error of the quadrature in [`mean_value_check`] propagated from
/// the multinomial bin counts.
pub fn mean_value_error(mu: &BoundaryMeasure, comp: &Component, z: DiskPoint) -> f64 {
    let w = mu.walks_per_source();
    if mu.sources == 0 || w == 0 {
        return 0.0;
    }
    let offsets = comp.edge_offsets();
    let f: Vec<f64> =
        (0..mu.bin_count()).map(|i| pseudo_dist(z, comp.point_at(&offsets, mu.bin_mid(i))).ln()).collect();
    let m = mu.total;
    let mean: f64 = f.iter().zip(&mu.bin_masses).map(|(f, w)| f * w).sum::<f64>() / m;
    let var: f64 = f.iter().zip(&mu.bin_masses).map(|(f, w)| w * (f - mean).powi(2)).sum();
    (var / w as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contour::{extract_components, PolarPoint};
    use crate::dyadic::DyadicSquare;

    fn circle(r: f64) -> Component {
        let e = Edge {
            kind: EdgeKind::Arc,
            start: PolarPoint { r, theta: 0.0 },
            end: PolarPoint { r, theta: 0.0 },
            sweep: TAU,
        };
        Component {
            id: 0,
            edges: vec![e],
            holes: vec![],
            cells: vec![],
            arclength: TAU * r,
            start_anchor: PolarPoint { r, theta: 0.0 },
        }
    }

    /// Exact harmonic measure of the arc `[θ₀, θ₁]` of the circle `|z| = r`
    /// seen from `a`: the angle swept by its image under `φ_{a/r}`.
    fn poisson_arc(r: f64, a: Complex64, t0: f64, t1: f64) -> f64 {
        let b = a / r;
        let img = |t: f64| {
            let z = Complex64::from_polar(1.0, t);
            (z - b) / (Complex64::new(1.0, 0.0) - b.conj() * z)
        };
        let (u, v) = (img(t0), img(t1));
        let mut d = (v / u).arg();
        if d < 0.0 {
            d += TAU;
        }
        d / TAU
    }

    fn tv(mu: &BoundaryMeasure, exact: &[f64]) -> f64 {
        0.5 * mu.bin_masses.iter().zip(exact).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }

    #[test]
    fn bin_width_rule() {
        assert_eq!(bin_count_for(TAU * 0.5), 1024);
        assert_eq!(bin_count_for(20.0), 2000);
        assert_eq!(bin_count_for_component(&circle(0.5)), 1024);
        let deep = extract_components(&[DyadicSquare::new(12, 0).unwrap()], 14).unwrap().remove(0);
        let nb = bin_count_for_component(&deep);
        assert!(nb <= MAX_BINS);
        assert!(deep.arclength / nb as f64 <= 0.25 * 0.5f64.powi(13) || nb == MAX_BINS);
    }

    #[test]
    fn centered_source_gives_uniform_bins() {
        let comp = circle(0.5);
        let dom = HarmonicDomain { boundary: comp, sources: vec![DiskPoint::ORIGIN] };
        let cfg = HarmonicConfig { walks_per_source: 20_000, seed: 1, ..Default::default() };
        let mu = harmonic_measure(&dom, &cfg).unwrap();
        assert!((mu.bin_masses.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let p = 1.0 / mu.bin_count() as f64;
        for i in 0..mu.bin_count() {
            let se = (p * (1.0 - p) / 20_000.0).sqrt();
            assert!((mu.bin_masses[i] - p).abs() <= 3.0 * se + 1e-12, "bin {i}: {}", mu.bin_masses[i]);
        }
        assert!(mu.bin_masses.iter().all(|&m| m >= 0.0));
    }

    #[test]
    fn off_center_source_matches_poisson_kernel() {
        let r = 0.5;
        let comp = circle(r);
        let a = Complex64::new(r / 2.0, 0.0);
        let dom = HarmonicDomain { boundary: comp, sources: vec![DiskPoint::from_complex_clamped(a)] };
        let cfg = HarmonicConfig { walks_per_source: 20_000, seed: 2, ..Default::default() };
        let mu = harmonic_measure(&dom, &cfg).unwrap();
        let exact: Vec<f64> =
            (0..mu.bin_count()).map(|i| poisson_arc(r, a, mu.bin_edges[i] / r, mu.bin_edges[i + 1] / r)).collect();
        assert!((exact.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let d = tv(&mu, &exact);
        assert!(d < 0.1, "tv {d}");
    }

    #[test]
    fn symmetric_domain_has_symmetric_mass() {
        // Two level-2 cells sharing a radial edge; the union is symmetric under
        // reflection across that edge.
        let cells = vec![DyadicSquare::new(2, 0).unwrap(), DyadicSquare::new(2, 1).unwrap()];
        let comp = extract_components(&cells, 4).unwrap().remove(0);
        let src = DiskPoint::from_polar((0.5 * (0.75f64.atanh() + 0.875f64.atanh())).tanh(), TAU / 4.0).unwrap();
        let dom = HarmonicDomain { boundary: comp.clone(), sources: vec![src] };
        let cfg = HarmonicConfig { walks_per_source: 20_000, seed: 3, ..Default::default() };
        let mu = harmonic_measure(&dom, &cfg).unwrap();
        let offsets = comp.edge_offsets();
        let (mut left, mut right) = (0.0, 0.0);
        for i in 0..mu.bin_count() {
            let p = comp.point_at(&offsets, mu.bin_mid(i));
            if p.angle() < TAU / 4.0 {
                right += mu.bin_masses[i];
            } else {
                left += mu.bin_masses[i];
            }
        }
        let se = (0.25 / 20_000f64).sqrt();
        assert!((left - right).abs() < 6.0 * se, "{left} vs {right}");
    }

    #[test]
    fn rejects_exterior_source_and_holes() {
        let dom = HarmonicDomain { boundary: circle(0.5), sources: vec![DiskPoint::new(0.7, 0.0).unwrap()] };
        assert!(matches!(harmonic_measure(&dom, &HarmonicConfig::default()), Err(Error::SourceNotInterior { .. })));
        let ring: Vec<_> = (0..4).map(|j| DyadicSquare::new(2, j).unwrap()).collect();
        let comp = extract_components(&ring, 4).unwrap().remove(0);
        let dom = HarmonicDomain { boundary: comp, sources: vec![] };
        assert!(matches!(harmonic_measure(&dom, &HarmonicConfig::default()), Err(Error::MultiplyConnected(0))));
    }

    #[test]
    fn deterministic_given_seed() {
        let dom = HarmonicDomain { boundary: circle(0.6), sources: vec![DiskPoint::new(0.1, 0.2).unwrap()] };
        let cfg = HarmonicConfig { walks_per_source: 2000, seed: 9, ..Default::default() };
        assert_eq!(harmonic_measure(&dom, &cfg).unwrap(), harmonic_measure(&dom, &cfg).unwrap());
    }

    #[test]
    fn mean_value_with_exact_disk_measure() {
        let r = 0.5;
        let comp = circle(r);
        let a = Complex64::new(0.2, 0.1);
        let nb = bin_count_for(comp.arclength);
        let w = comp.arclength / nb as f64;
        let edges: Vec<f64> = (0..=nb).map(|i| i as f64 * w).collect();
        let masses: Vec<f64> = (0..nb).map(|i| poisson_arc(r, a, edges[i] / r, edges[i + 1] / r)).collect();
        let mu = BoundaryMeasure {
            component_id: 0,
            arclength: comp.arclength,
            bin_edges: edges,
            bin_masses: masses,
            total: 1.0,
            method: Method::MonteCarlo { walks_per_source: 1 },
            seed: 0,
            stat_error: 0.0,
            raw_total: 1.0,
            renormalization: 1.0,
            sources: 1,
        };
        let b1 = BlaschkeProduct::from_zeros([DiskPoint::from_complex_clamped(a)]);
        let z = DiskPoint::new(-0.8, 0.3).unwrap();
        let res = mean_value_check(&b1, &mu, &comp, z);
        assert!(res < 1e-4, "residual {res}");
        let empty = BoundaryMeasure { sources: 0, total: 0.0, bin_masses: vec![0.0; nb], ..mu };
        assert_eq!(mean_value_check(&BlaschkeProduct::identity(), &empty, &comp, z), 0.0);
    }
}
