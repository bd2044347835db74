//! Hyperbolic geometry of the unit disk.
//!
//! Distances use the pseudohyperbolic metric `ρ(z, w) = |z − w| / |1 − w̄z|`
//! and the hyperbolic metric `β = artanh ρ`, whose length element is
//! `|dz| / (1 − |z|²)`.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point strictly inside the unit disk.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiskPoint {
    pub re: f64,
    pub im: f64,
}

impl DiskPoint {
    pub const ORIGIN: DiskPoint = DiskPoint { re: 0.0, im: 0.0 };

    pub fn new(re: f64, im: f64) -> Result<Self> {
        if !(re.is_finite() && im.is_finite()) || re * re + im * im >= 1.0 {
            return Err(Error::OutsideDisk { re, im });
        }
        Ok(Self { re, im })
    }

    pub fn from_polar(r: f64, theta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&r) {
            return Err(Error::OutsideDisk { re: r * theta.cos(), im: r * theta.sin() });
        }
        let (s, c) = theta.sin_cos();
        Self::new(r * c, r * s)
    }

    pub(crate) fn from_complex_unchecked(z: Complex64) -> Self {
        Self { re: z.re, im: z.im }
    }

    /// Radial clamp for points produced by floating-point maps that may land
    /// on or past the unit circle.
    pub(crate) fn from_complex_clamped(z: Complex64) -> Self {
        let r = z.norm();
        let cap = 1.0 - f64::EPSILON;
        if r >= cap {
            let s = cap / r;
            Self { re: z.re * s, im: z.im * s }
        } else {
            Self { re: z.re, im: z.im }
        }
    }

    #[inline]
    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }

    #[inline]
    pub fn norm_sqr(self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    #[inline]
    pub fn abs(self) -> f64 {
        self.re.hypot(self.im)
    }

    /// Argument normalized to `[0, 2π)`.
    pub fn angle(self) -> f64 {
        normalize_angle(self.im.atan2(self.re))
    }

    /// `1 − |z|`, the Euclidean distance to the unit circle.
    #[inline]
    pub fn depth(self) -> f64 {
        1.0 - self.abs()
    }
}

/// Reduce an angle to `[0, 2π)`.
pub fn normalize_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    if t >= TAU {
        0.0
    } else {
        t
    }
}

/// Absolute angular separation on the circle, in `[0, π]`.
pub fn angular_gap(a: f64, b: f64) -> f64 {
    let d = normalize_angle(a - b);
    if d > PI {
        TAU - d
    } else {
        d
    }
}

#[inline]
fn pseudo_dist_c(z: Complex64, w: Complex64) -> f64 {
    let den = (Complex64::new(1.0, 0.0) - w.conj() * z).norm();
    if den == 0.0 {
        return 1.0;
    }
    ((z - w).norm() / den).min(1.0)
}

/// Pseudohyperbolic distance `|(z − w)/(1 − w̄z)|`.
#[inline]
pub fn pseudo_dist(z: DiskPoint, w: DiskPoint) -> f64 {
    pseudo_dist_c(z.to_complex(), w.to_complex())
}

/// `1 − ρ(z, w)²` computed without cancellation:
/// `(1 − |z|²)(1 − |w|²) / |1 − w̄z|²`.
#[inline]
pub fn one_minus_pseudo_sq(z: DiskPoint, w: DiskPoint) -> f64 {
    let zc = z.to_complex();
    let wc = w.to_complex();
    let den = (Complex64::new(1.0, 0.0) - wc.conj() * zc).norm_sqr();
    (1.0 - z.norm_sqr()) * (1.0 - w.norm_sqr()) / den
}

/// Hyperbolic distance `artanh ρ(z, w)`.
pub fn hyp_dist(z: DiskPoint, w: DiskPoint) -> f64 {
    let rho = pseudo_dist(z, w);
    if rho >= 1.0 {
        return f64::INFINITY;
    }
    // For ρ near 1, artanh loses digits; use ½ log((1+ρ)²/(1−ρ²)).
    if rho > 0.5 {
        let oms = one_minus_pseudo_sq(z, w);
        0.5 * ((1.0 + rho) * (1.0 + rho) / oms).ln()
    } else {
        rho.atanh()
    }
}

/// The disk automorphism `φ_a(z) = (a − z)/(1 − āz)`. It is an involution,
/// swaps `a` and `0`, and preserves `ρ` and `β`.
pub fn mobius_to_origin(a: DiskPoint) -> impl Fn(DiskPoint) -> DiskPoint {
    move |z| mobius(a, z)
}

pub fn mobius(a: DiskPoint, z: DiskPoint) -> DiskPoint {
    let ac = a.to_complex();
    let zc = z.to_complex();
    let w = (ac - zc) / (Complex64::new(1.0, 0.0) - ac.conj() * zc);
    DiskPoint::from_complex_clamped(w)
}

/// The point at hyperbolic distance `beta` from `center`, in the direction
/// `angle` as seen after moving `center` to the origin.
pub fn point_at_distance(center: DiskPoint, angle: f64, beta: f64) -> DiskPoint {
    let t = beta.tanh();
    let zeta = DiskPoint::from_complex_unchecked(Complex64::from_polar(t, angle));
    mobius(center, zeta)
}

/// The direction (for [`point_at_distance`]) pointing radially away from the
/// origin at `center`.
pub fn outward_direction(center: DiskPoint) -> f64 {
    if center.norm_sqr() == 0.0 {
        0.0
    } else {
        // φ_c maps −ĉ·t to a point beyond c on the same ray.
        normalize_angle(center.angle() + PI)
    }
}

/// The hyperbolic ball `{w : β(w, center) ≤ beta}` is a Euclidean disk; returns
/// its Euclidean center and radius.
pub fn hyperbolic_ball_euclidean(center: DiskPoint, beta: f64) -> (Complex64, f64) {
    let t = beta.tanh();
    let c = center.to_complex();
    let s2 = center.norm_sqr();
    let den = 1.0 - t * t * s2;
    (c * ((1.0 - t * t) / den), t * (1.0 - s2) / den)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetCircle {
    pub radius: f64,
    pub count: u64,
}

/// A hyperbolic net: every point `z` with `1 − |z| ≥ 2^−depth_limit` lies within
/// hyperbolic distance `mesh` of a net point.
///
/// Points sit on concentric circles whose radii are equally spaced in
/// `artanh r` (spacing `mesh`), plus one circle exactly on the truncation
/// radius. Each circle carries a power-of-two count of equally spaced points
/// with adjacent points at most `mesh` apart along the circle. Points are
/// generated on demand; large nets are never materialized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicNet {
    pub mesh: f64,
    pub depth_limit: u32,
    pub circles: Vec<NetCircle>,
}

pub fn build_net(mesh: f64, depth_limit: u32) -> Result<HyperbolicNet> {
    if !(mesh > 0.0 && mesh.is_finite()) {
        return Err(Error::InvalidParameter(format!("net mesh must be positive, got {mesh}")));
    }
    if depth_limit < 1 {
        return Err(Error::InvalidParameter("net depth_limit must be at least 1".into()));
    }
    if depth_limit > 40 {
        return Err(Error::InvalidParameter(format!(
            "net depth_limit {depth_limit} exceeds double precision resolution"
        )));
    }
    let r_limit = 1.0 - 0.5f64.powi(depth_limit as i32);
    let b_limit = r_limit.atanh();
    let mut circles = vec![NetCircle { radius: 0.0, count: 1 }];
    let mut m = 1u64;
    loop {
        let b = m as f64 * mesh;
        if b >= b_limit {
            break;
        }
        let radius = b.tanh();
        circles.push(NetCircle { radius, count: circle_count(radius, mesh) });
        m += 1;
    }
    circles.push(NetCircle { radius: r_limit, count: circle_count(r_limit, mesh) });
    Ok(HyperbolicNet { mesh, depth_limit, circles })
}

fn circle_count(radius: f64, mesh: f64) -> u64 {
    let circumference = TAU * radius / (1.0 - radius * radius);
    let needed = (circumference / mesh).ceil().max(1.0) as u64;
    needed.next_power_of_two()
}

impl HyperbolicNet {
    pub fn len(&self) -> u64 {
        self.circles.iter().map(|c| c.count).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.circles.is_empty()
    }

    /// The truncation radius `1 − 2^−depth_limit`.
    pub fn limit_radius(&self) -> f64 {
        1.0 - 0.5f64.powi(self.depth_limit as i32)
    }

    pub fn iter(&self) -> impl Iterator<Item = DiskPoint> + '_ {
        self.circles.iter().flat_map(circle_points)
    }

    pub fn points(&self) -> Vec<DiskPoint> {
        self.iter().collect()
    }

    /// Nearest net point by brute force over the nearest circles.
    pub fn nearest(&self, z: DiskPoint) -> (DiskPoint, f64) {
        let bz = z.abs().atanh();
        let mut best = (DiskPoint::ORIGIN, f64::INFINITY);
        for c in &self.circles {
            let bc = c.radius.atanh();
            if (bc - bz).abs() > 2.0 * self.mesh + 1e-12 {
                continue;
            }
            let step = TAU / c.count as f64;
            let k = (z.angle() / step).round() as i64;
            for dk in -1..=1 {
                let idx = (k + dk).rem_euclid(c.count as i64) as f64;
                let p = DiskPoint::from_complex_unchecked(Complex64::from_polar(c.radius, idx * step));
                let d = hyp_dist(p, z);
                if d < best.1 {
                    best = (p, d);
                }
            }
        }
        best
    }
}

pub(crate) fn circle_points(c: &NetCircle) -> impl Iterator<Item = DiskPoint> + '_ {
    let step = TAU / c.count as f64;
    (0..c.count).map(move |k| {
        let (s, co) = (k as f64 * step).sin_cos();
        DiskPoint::from_complex_unchecked(Complex64::new(c.radius * co, c.radius * s))
    })
}
