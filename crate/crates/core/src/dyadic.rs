//! Dyadic Carleson squares, their top halves, and sup estimates of `|B|` over
//! hyperbolic neighborhoods `Ω_K(E) = {z : β(z, E) ≤ K}`.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::blaschke::BlaschkeProduct;
use crate::error::{Error, Result};
use crate::geometry::{angular_gap, hyperbolic_ball_euclidean, normalize_angle, point_at_distance, DiskPoint};

/// `Q(n, j) = {r e^{iθ} : 1 − 2^−n < r < 1, 2πj 2^−n < θ < 2π(j+1) 2^−n}`.
///
/// Level 0 is the whole disk, used as the root of the dyadic tree; its top
/// half is the disk `|z| < 1/2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicSquare {
    #[serde(rename = "n")]
    pub level: u32,
    #[serde(rename = "j")]
    pub index: u64,
}

/// Deepest level representable with exact angle arithmetic.
pub const MAX_LEVEL: u32 = 48;

impl DyadicSquare {
    pub const ROOT: DyadicSquare = DyadicSquare { level: 0, index: 0 };

    pub fn new(level: u32, index: u64) -> Result<Self> {
        if level > MAX_LEVEL {
            return Err(Error::InvalidParameter(format!("dyadic level {level} exceeds {MAX_LEVEL}")));
        }
        if index >= 1u64 << level {
            return Err(Error::InvalidParameter(format!("index {index} out of range at level {level}")));
        }
        Ok(Self { level, index })
    }

    /// Side length `ℓ(Q) = 2^−n`.
    pub fn side(self) -> f64 {
        0.5f64.powi(self.level as i32)
    }

    /// Radius of the side facing the origin, `1 − 2^−n`.
    pub fn r_inner(self) -> f64 {
        1.0 - self.side()
    }

    /// Outer radius of the top half, `1 − 2^−n−1`.
    pub fn r_mid(self) -> f64 {
        1.0 - 0.5 * self.side()
    }

    pub fn theta_lo(self) -> f64 {
        TAU * self.index as f64 * self.side()
    }

    pub fn theta_hi(self) -> f64 {
        TAU * (self.index + 1) as f64 * self.side()
    }

    pub fn theta_mid(self) -> f64 {
        TAU * (self.index as f64 + 0.5) * self.side()
    }

    pub fn top_half(self) -> Region {
        if self.level == 0 {
            Region::Disk { radius: 0.5 }
        } else {
            Region::PolarRect {
                r_lo: self.r_inner(),
                r_hi: self.r_mid(),
                th_lo: self.theta_lo(),
                th_hi: self.theta_hi(),
            }
        }
    }

    pub fn children(self) -> [DyadicSquare; 2] {
        let level = self.level + 1;
        if self.level == 0 {
            return [DyadicSquare { level, index: 0 }, DyadicSquare { level, index: 1 }];
        }
        [DyadicSquare { level, index: 2 * self.index }, DyadicSquare { level, index: 2 * self.index + 1 }]
    }

    pub fn parent(self) -> Option<DyadicSquare> {
        match self.level {
            0 => None,
            1 => Some(Self::ROOT),
            n => Some(DyadicSquare { level: n - 1, index: self.index / 2 }),
        }
    }

    /// Whether `other` lies inside `self` (not necessarily strictly).
    pub fn contains_square(self, other: DyadicSquare) -> bool {
        if other.level < self.level {
            return false;
        }
        if self.level == 0 {
            return true;
        }
        other.index >> (other.level - self.level) == self.index
    }

    /// Open-square membership.
    pub fn contains(self, z: DiskPoint) -> bool {
        if self.level == 0 {
            return true;
        }
        let r = z.abs();
        let th = z.angle();
        r > self.r_inner() && th > self.theta_lo() && th < self.theta_hi()
    }

    /// The level-`n` square whose closure contains `z` (ties to the lower index).
    pub fn containing(z: DiskPoint, level: u32) -> Option<DyadicSquare> {
        if level == 0 {
            return Some(Self::ROOT);
        }
        let side = 0.5f64.powi(level as i32);
        if z.depth() > side {
            return None;
        }
        let j = ((z.angle() / TAU) / side).floor() as u64;
        Some(DyadicSquare { level, index: j.min((1u64 << level) - 1) })
    }

    /// The level at which `z` sits in a top half (`1 − 2^−n ≤ |z| < 1 − 2^−n−1`).
    pub fn top_half_level(z: DiskPoint) -> u32 {
        let d = z.depth();
        if d > 0.5 {
            return 0;
        }
        // d ∈ (2^−n−1, 2^−n]
        let mut n = (-d.log2()).floor() as u32;
        while n > 0 && d > 0.5f64.powi(n as i32) {
            n -= 1;
        }
        while d <= 0.5f64.powi(n as i32 + 1) {
            n += 1;
        }
        n
    }

    /// The square whose top half contains `z`.
    pub fn top_half_owner(z: DiskPoint) -> DyadicSquare {
        let n = Self::top_half_level(z);
        Self::containing(z, n).unwrap_or(Self::ROOT)
    }
}

/// Regions used as the base set `E` of `Ω_K(E)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    Point {
        point: DiskPoint,
    },
    /// `{r e^{iθ} : r_lo < r < r_hi, th_lo < θ < th_hi}` with `th_hi − th_lo ≤ 2π`.
    PolarRect {
        r_lo: f64,
        r_hi: f64,
        th_lo: f64,
        th_hi: f64,
    },
    Disk {
        radius: f64,
    },
}

impl Region {
    pub fn contains(&self, z: DiskPoint) -> bool {
        match *self {
            Region::Point { point } => point == z,
            Region::PolarRect { r_lo, r_hi, th_lo, th_hi } => {
                let r = z.abs();
                let off = normalize_angle(z.angle() - th_lo);
                r > r_lo && r < r_hi && off > 0.0 && off < th_hi - th_lo
            }
            Region::Disk { radius } => z.abs() < radius,
        }
    }

    /// Points on the boundary with consecutive samples at most `spacing`
    /// apart hyperbolically (measured along the boundary).
    pub fn boundary_samples(&self, spacing: f64) -> Vec<DiskPoint> {
        match *self {
            Region::Point { point } => vec![point],
            Region::PolarRect { r_lo, r_hi, th_lo, th_hi } => {
                let mut out = Vec::new();
                out.extend(arc_samples(r_lo, th_lo, th_hi, spacing));
                out.extend(arc_samples(r_hi, th_lo, th_hi, spacing));
                out.extend(radial_samples(th_lo, r_lo, r_hi, spacing));
                out.extend(radial_samples(th_hi, r_lo, r_hi, spacing));
                out
            }
            Region::Disk { radius } => arc_samples(radius, 0.0, TAU, spacing).collect(),
        }
    }

    /// Maximal pairwise hyperbolic distance among boundary samples.
    pub fn sampled_diameter(&self, spacing: f64) -> f64 {
        let pts = self.boundary_samples(spacing);
        let mut best: f64 = 0.0;
        for (i, &a) in pts.iter().enumerate() {
            for &b in &pts[i + 1..] {
                best = best.max(crate::geometry::hyp_dist(a, b));
            }
        }
        best
    }

    /// A polar region containing `Ω_K(self)`.
    pub fn neighborhood_hull(&self, k: f64) -> Hull {
        let (r_lo, r_hi, th_lo, th_hi) = match *self {
            Region::Point { point } => {
                let r = point.abs();
                let th = point.angle();
                (r, r, th, th)
            }
            Region::PolarRect { r_lo, r_hi, th_lo, th_hi } => (r_lo, r_hi, th_lo, th_hi),
            Region::Disk { radius } => (0.0, radius, 0.0, TAU),
        };
        let outer = (r_hi.atanh() + k).tanh();
        let inner_b = r_lo.atanh() - k;
        if inner_b <= 0.0 {
            return Hull::Disk { r_hi: outer };
        }
        let inner = inner_b.tanh();
        // The ball around a point at radius s is a Euclidean disk; its angular
        // half-width asin(R/c) decreases in s, so the inner radius dominates.
        let (c, rad) = hyperbolic_ball_euclidean(DiskPoint { re: r_lo, im: 0.0 }, k);
        let half = (rad / c.re).clamp(0.0, 1.0).asin();
        if th_hi - th_lo + 2.0 * half >= TAU {
            Hull::Annulus { r_lo: inner, r_hi: outer }
        } else {
            Hull::Sector { r_lo: inner, r_hi: outer, th_lo: th_lo - half, th_hi: th_hi + half }
        }
    }
}

/// Closed polar regions bounding `Ω_K(E)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Hull {
    Disk { r_hi: f64 },
    Annulus { r_lo: f64, r_hi: f64 },
    Sector { r_lo: f64, r_hi: f64, th_lo: f64, th_hi: f64 },
}

impl Hull {
    /// Number of boundary samples at hyperbolic spacing `spacing`.
    pub fn boundary_sample_count(&self, spacing: f64) -> f64 {
        let arc = |r: f64, span: f64| (r * span / ((1.0 - r * r) * spacing)).ceil() + 1.0;
        let rad = |a: f64, b: f64| ((b.atanh() - a.atanh()) / spacing).ceil() + 1.0;
        match *self {
            Hull::Disk { r_hi } => arc(r_hi, TAU),
            Hull::Annulus { r_lo, r_hi } => arc(r_hi, TAU) + arc(r_lo, TAU),
            Hull::Sector { r_lo, r_hi, th_lo, th_hi } => {
                arc(r_hi, th_hi - th_lo) + arc(r_lo, th_hi - th_lo) + 2.0 * rad(r_lo, r_hi)
            }
        }
    }

    /// Boundary samples, outermost arc first.
    pub fn boundary_points(&self, spacing: f64) -> Box<dyn Iterator<Item = DiskPoint>> {
        match *self {
            Hull::Disk { r_hi } => Box::new(arc_samples(r_hi, 0.0, TAU, spacing)),
            Hull::Annulus { r_lo, r_hi } => {
                Box::new(arc_samples(r_hi, 0.0, TAU, spacing).chain(arc_samples(r_lo, 0.0, TAU, spacing)))
            }
            Hull::Sector { r_lo, r_hi, th_lo, th_hi } => Box::new(
                arc_samples(r_hi, th_lo, th_hi, spacing)
                    .chain(arc_samples(r_lo, th_lo, th_hi, spacing))
                    .chain(radial_samples(th_lo, r_lo, r_hi, spacing))
                    .chain(radial_samples(th_hi, r_lo, r_hi, spacing)),
            ),
        }
    }
}

pub(crate) fn arc_samples(r: f64, th_lo: f64, th_hi: f64, spacing: f64) -> impl Iterator<Item = DiskPoint> {
    let len = r * (th_hi - th_lo) / (1.0 - r * r);
    let n = ((len / spacing).ceil().max(1.0)).min(u64::MAX as f64 / 2.0) as u64;
    let full = th_hi - th_lo >= TAU - 1e-15;
    let count = if full { n } else { n + 1 };
    (0..count).map(move |k| {
        let th = th_lo + (th_hi - th_lo) * k as f64 / n as f64;
        DiskPoint::from_complex_clamped(Complex64::from_polar(r, th))
    })
}

pub(crate) fn radial_samples(th: f64, r_lo: f64, r_hi: f64, spacing: f64) -> impl Iterator<Item = DiskPoint> {
    let (b_lo, b_hi) = (r_lo.atanh(), r_hi.atanh());
    let n = (((b_hi - b_lo) / spacing).ceil().max(1.0)) as u64;
    (0..=n).map(move |k| {
        let r = (b_lo + (b_hi - b_lo) * k as f64 / n as f64).tanh();
        DiskPoint::from_complex_clamped(Complex64::from_polar(r, th))
    })
}

/// Result of sampling `|B|` over `Ω_K(E)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupEstimate {
    pub value: f64,
    pub argmax: Option<DiskPoint>,
    pub samples: u64,
    /// Sampling stopped early because a value exceeded the requested stop level.
    pub stopped_early: bool,
    /// The sample budget was exhausted before the sampling was complete.
    pub truncated: bool,
}

/// Net estimate of `sup{|B(z)| : β(z, E) ≤ K}`.
///
/// By the maximum principle the sup over `Ω_K(E)` is attained on its
/// boundary, and each boundary point is at distance exactly `K` from
/// `∂E`. Samples of `∂E` at spacing `mesh/2` are therefore surrounded by
/// hyperbolic circles of radius `K` sampled at spacing `mesh/2`. Every sample
/// lies in `Ω_K(E)`, and every boundary point of `Ω_K(E)` is within `mesh` of
/// a sample, so the estimate is at least the true sup minus `tanh(mesh)`.
pub fn omega_k_sup(b: &BlaschkeProduct, e: &Region, k: f64, mesh: f64) -> f64 {
    omega_k_sup_with(b, e, k, mesh, u64::MAX, f64::INFINITY).value
}

pub fn omega_k_sup_with(
    b: &BlaschkeProduct,
    e: &Region,
    k: f64,
    mesh: f64,
    budget: u64,
    stop_above: f64,
) -> SupEstimate {
    let mut est = SupEstimate { value: 0.0, argmax: None, samples: 0, stopped_early: false, truncated: false };
    if b.is_constant() {
        est.value = 1.0;
        return est;
    }
    let half = 0.5 * mesh;
    let base = e.boundary_samples(half);
    let per_circle = if k > 0.0 { ((PI * (2.0 * k).sinh() / half).ceil() as u64).max(4) } else { 1 };
    let visit = |w: DiskPoint, est: &mut SupEstimate| -> bool {
        est.samples += 1;
        let m = b.eval_modulus(w);
        if m > est.value || est.argmax.is_none() {
            est.value = m.max(est.value);
            if m >= est.value {
                est.argmax = Some(w);
            }
        }
        if m > stop_above {
            est.stopped_early = true;
            return false;
        }
        if est.samples >= budget {
            est.truncated = true;
            return false;
        }
        true
    };
    for &c in &base {
        if k == 0.0 {
            if !visit(c, &mut est) {
                return est;
            }
            continue;
        }
        for i in 0..per_circle {
            let w = point_at_distance(c, TAU * i as f64 / per_circle as f64, k);
            if !visit(w, &mut est) {
                return est;
            }
        }
    }
    est
}

/// Carleson square `{r e^{iθ} : 0 < 1 − r < ℓ, |θ − θ₀| < πℓ}`. A side of 1 or
/// more is treated as the whole disk.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarlesonSquare {
    pub center_angle: f64,
    pub side: f64,
}

impl CarlesonSquare {
    /// The square with `z` at the midpoint of its top side.
    pub fn with_top_midpoint(z: DiskPoint) -> Self {
        Self { center_angle: z.angle(), side: z.depth() }
    }

    pub fn is_whole_disk(&self) -> bool {
        self.side >= 1.0
    }

    /// Centered dilation, capped at side 1.
    pub fn dilate(&self, factor: f64) -> Self {
        Self { center_angle: self.center_angle, side: (self.side * factor).min(1.0) }
    }

    pub fn contains(&self, z: DiskPoint) -> bool {
        if self.is_whole_disk() {
            return true;
        }
        let d = z.depth();
        d > 0.0 && d < self.side && angular_gap(z.angle(), self.center_angle) < PI * self.side
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::hyp_dist;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn top_half_of_first_square() {
        let q = DyadicSquare::new(1, 0).unwrap();
        match q.top_half() {
            Region::PolarRect { r_lo, r_hi, th_lo, th_hi } => {
                assert_eq!((r_lo, r_hi, th_lo), (0.5, 0.75, 0.0));
                assert!((th_hi - PI).abs() < 1e-15);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn top_half_contains_center_of_top_side() {
        for &(n, j) in &[(1u32, 1u64), (3, 5), (9, 300)] {
            let q = DyadicSquare::new(n, j).unwrap();
            let z = DiskPoint::from_polar(q.r_inner() + 0.25 * q.side(), q.theta_mid()).unwrap();
            assert!(q.top_half().contains(z));
            assert!(q.contains(z));
        }
    }

    #[test]
    fn top_half_diameter_bounded_by_fourteen() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..40 {
            let n = rng.random_range(1..=20u32);
            let j = rng.random_range(0..(1u64 << n));
            let d = DyadicSquare::new(n, j).unwrap().top_half().sampled_diameter(0.2);
            assert!(d <= 14.0, "diameter {d}");
        }
        assert!(DyadicSquare::ROOT.top_half().sampled_diameter(0.1) <= 14.0);
    }

    #[test]
    fn children_partition_parent() {
        let q = DyadicSquare::new(1, 0).unwrap();
        let [a, b] = q.children();
        assert_eq!((a.level, a.index, b.level, b.index), (2, 0, 2, 1));
        assert_eq!(a.side() + b.side(), q.side());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = DyadicSquare::new(4, 11).unwrap();
        for c in q.children() {
            for _ in 0..200 {
                let r = 1.0 - c.side() * rng.random::<f64>();
                let th = c.theta_lo() + (c.theta_hi() - c.theta_lo()) * rng.random::<f64>();
                let z = DiskPoint::from_polar(r.min(1.0 - 1e-12), th).unwrap();
                if c.contains(z) {
                    assert!(q.contains(z));
                }
            }
            assert!(q.contains_square(c));
            assert_eq!(c.parent(), Some(q));
        }
    }

    #[test]
    fn top_half_owner_is_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            let r = 1.0 - 2f64.powf(-12.0 * rng.random::<f64>());
            let z = DiskPoint::from_polar(r, rng.random::<f64>() * TAU).unwrap();
            let q = DyadicSquare::top_half_owner(z);
            if q.level > 0 {
                assert!(z.abs() >= q.r_inner() && z.abs() < q.r_mid() + 1e-15);
            } else {
                assert!(z.abs() < 0.5 + 1e-15);
            }
        }
    }

    #[test]
    fn omega_k_sup_point_and_constant() {
        let z0 = DiskPoint::new(0.3, 0.2).unwrap();
        let b = BlaschkeProduct::from_zeros([DiskPoint::new(-0.4, 0.1).unwrap()]);
        let p = DiskPoint::new(0.5, 0.5).unwrap();
        let v = omega_k_sup(&b, &Region::Point { point: p }, 0.0, 0.1);
        assert_eq!(v, b.eval_modulus(p));
        let one = BlaschkeProduct::identity();
        assert_eq!(omega_k_sup(&one, &Region::Point { point: z0 }, 2.0, 0.1), 1.0);
    }

    #[test]
    fn omega_k_sup_single_zero_closed_form() {
        // |B(z)| = ρ(z, z₀); over the ball of radius K around z₀ the sup is tanh K.
        let z0 = DiskPoint::new(0.6, 0.1).unwrap();
        let b = BlaschkeProduct::from_zeros([z0]);
        for &k in &[0.5, 1.0, 2.0] {
            let v = omega_k_sup(&b, &Region::Point { point: z0 }, k, 0.05);
            assert!((v - k.tanh()).abs() < 1e-9, "K={k}: {v}");
        }
    }

    #[test]
    fn omega_k_sup_mesh_refinement_is_stable() {
        let zs: Vec<_> = (0..6).map(|k| DiskPoint::from_polar(0.8, 0.3 * k as f64).unwrap()).collect();
        let b = BlaschkeProduct::from_zeros(zs);
        let q = DyadicSquare::new(3, 0).unwrap().top_half();
        let mut prev: Option<(f64, f64)> = None;
        for &mesh in &[0.4, 0.2, 0.1] {
            let v = omega_k_sup(&b, &q, 0.5, mesh);
            if let Some((pv, pm)) = prev {
                assert!(v >= pv - pm.tanh(), "{v} vs {pv}");
            }
            prev = Some((v, mesh));
        }
    }

    #[test]
    fn omega_k_sup_monotone_in_k() {
        let zs: Vec<_> = (0..5).map(|k| DiskPoint::from_polar(0.9, 0.1 * k as f64).unwrap()).collect();
        let b = BlaschkeProduct::from_zeros(zs);
        let q = DyadicSquare::new(4, 0).unwrap().top_half();
        let small = omega_k_sup(&b, &q, 0.3, 0.1);
        let large = omega_k_sup(&b, &q, 1.0, 0.1);
        assert!(large >= small - 0.1f64.tanh());
    }

    #[test]
    fn hull_contains_neighborhood() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for &(n, j, k) in &[(3u32, 2u64, 0.5), (6, 17, 1.0), (2, 1, 3.0), (10, 5, 0.2)] {
            let e = DyadicSquare::new(n, j).unwrap().top_half();
            let hull = e.neighborhood_hull(k);
            for base in e.boundary_samples(0.3) {
                for _ in 0..20 {
                    let w = point_at_distance(base, rng.random::<f64>() * TAU, k * rng.random::<f64>());
                    assert!(hull_contains(&hull, w), "{hull:?} misses {w:?}");
                }
            }
        }
    }

    fn hull_contains(h: &Hull, z: DiskPoint) -> bool {
        let r = z.abs();
        let eps = 1e-9;
        match *h {
            Hull::Disk { r_hi } => r <= r_hi + eps,
            Hull::Annulus { r_lo, r_hi } => r >= r_lo - eps && r <= r_hi + eps,
            Hull::Sector { r_lo, r_hi, th_lo, th_hi } => {
                let off = normalize_angle(z.angle() - th_lo);
                r >= r_lo - eps && r <= r_hi + eps && off <= th_hi - th_lo + eps
            }
        }
    }

    #[test]
    fn carleson_square_dilation_caps_at_disk() {
        let z = DiskPoint::from_polar(0.9, 1.0).unwrap();
        let q = CarlesonSquare::with_top_midpoint(z);
        assert!((q.side - 0.1).abs() < 1e-12);
        assert!(!q.is_whole_disk());
        assert!(q.dilate(16.0).is_whole_disk());
        let inside = DiskPoint::from_polar(0.95, 1.0 + 0.1).unwrap();
        assert!(q.contains(inside));
        assert!(!q.contains(DiskPoint::from_polar(0.95, 1.0 + 0.5).unwrap()));
        let _ = hyp_dist(z, inside);
    }
}
