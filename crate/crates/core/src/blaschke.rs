//! Finite Blaschke products `B(z) = c · z^m · Π (z̄ₙ/|zₙ|) (zₙ − z)/(1 − z̄ₙz)`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::contour::{dist_to_contour, point_in_interior, Containment, Contour};
use crate::error::{Error, Result};
use crate::geometry::{hyp_dist, normalize_angle, outward_direction, point_at_distance, pseudo_dist, DiskPoint};

/// Products with more zeros than this are evaluated in log space.
pub const LOG_SPACE_THRESHOLD: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlaschkeProduct {
    origin_multiplicity: u32,
    zeros: Vec<DiskPoint>,
    unimodular_constant: f64,
}

impl Default for BlaschkeProduct {
    fn default() -> Self {
        Self::identity()
    }
}

impl BlaschkeProduct {
    /// The constant product `1`.
    pub fn identity() -> Self {
        Self { origin_multiplicity: 0, zeros: Vec::new(), unimodular_constant: 0.0 }
    }

    pub fn new(origin_multiplicity: u32, zeros: Vec<DiskPoint>, unimodular_constant: f64) -> Result<Self> {
        for z in &zeros {
            if z.norm_sqr() == 0.0 {
                return Err(Error::InvalidParameter("zeros at the origin belong in origin_multiplicity".into()));
            }
            DiskPoint::new(z.re, z.im)?;
        }
        if !unimodular_constant.is_finite() {
            return Err(Error::InvalidParameter("unimodular constant must be finite".into()));
        }
        Ok(Self { origin_multiplicity, zeros, unimodular_constant: normalize_angle(unimodular_constant) })
    }

    /// Builds a product from a multiset of zeros, folding zeros at the origin
    /// into the `z^m` factor.
    pub fn from_zeros(points: impl IntoIterator<Item = DiskPoint>) -> Self {
        let mut m = 0;
        let mut zeros = Vec::new();
        for z in points {
            if z.norm_sqr() == 0.0 {
                m += 1;
            } else {
                zeros.push(z);
            }
        }
        Self { origin_multiplicity: m, zeros, unimodular_constant: 0.0 }
    }

    pub fn origin_multiplicity(&self) -> u32 {
        self.origin_multiplicity
    }

    /// Nonzero zeros, with multiplicity.
    pub fn zeros(&self) -> &[DiskPoint] {
        &self.zeros
    }

    pub fn unimodular_constant(&self) -> f64 {
        self.unimodular_constant
    }

    /// Total zero count including the origin factor.
    pub fn degree(&self) -> usize {
        self.zeros.len() + self.origin_multiplicity as usize
    }

    pub fn is_constant(&self) -> bool {
        self.degree() == 0
    }

    /// All zeros with multiplicity, origin zeros first.
    pub fn all_zeros(&self) -> impl Iterator<Item = DiskPoint> + '_ {
        std::iter::repeat_n(DiskPoint::ORIGIN, self.origin_multiplicity as usize).chain(self.zeros.iter().copied())
    }

    pub fn product(&self, other: &BlaschkeProduct) -> BlaschkeProduct {
        let mut zeros = self.zeros.clone();
        zeros.extend_from_slice(&other.zeros);
        BlaschkeProduct {
            origin_multiplicity: self.origin_multiplicity + other.origin_multiplicity,
            zeros,
            unimodular_constant: normalize_angle(self.unimodular_constant + other.unimodular_constant),
        }
    }

    /// `|B(z)| = |z|^m · Π ρ(z, zₙ)`.
    pub fn eval_modulus(&self, z: DiskPoint) -> f64 {
        if self.degree() > LOG_SPACE_THRESHOLD {
            return match self.log_modulus(z) {
                Ok(l) => l.exp(),
                Err(_) => 0.0,
            };
        }
        let mut v = z.abs().powi(self.origin_multiplicity as i32);
        for &zn in &self.zeros {
            v *= pseudo_dist(z, zn);
        }
        v
    }

    /// `log |B(z)| = m log|z| + Σ log ρ(z, zₙ)`.
    pub fn log_modulus(&self, z: DiskPoint) -> Result<f64> {
        let mut acc = 0.0;
        if self.origin_multiplicity > 0 {
            let r = z.abs();
            if r == 0.0 {
                return Err(Error::AtZero);
            }
            acc += self.origin_multiplicity as f64 * r.ln();
        }
        for &zn in &self.zeros {
            let rho = pseudo_dist(z, zn);
            if rho == 0.0 {
                return Err(Error::AtZero);
            }
            acc += rho.ln();
        }
        Ok(acc)
    }

    /// Complex value `B(z)`.
    pub fn eval(&self, z: DiskPoint) -> Complex64 {
        let zc = z.to_complex();
        let one = Complex64::new(1.0, 0.0);
        let mut v = Complex64::from_polar(1.0, self.unimodular_constant) * zc.powu(self.origin_multiplicity);
        for &zn in &self.zeros {
            let a = zn.to_complex();
            v *= (a.conj() / a.norm()) * (a - zc) / (one - a.conj() * zc);
        }
        v
    }

    /// Upper bound for `|B|` on the pseudohyperbolic disk of radius `t` around
    /// `z`: each factor obeys `ρ(ζ, zₙ) ≤ (ρ(z, zₙ) + t)/(1 + t ρ(z, zₙ))`.
    pub fn modulus_upper_bound(&self, z: DiskPoint, t: f64) -> f64 {
        let lift = |r: f64| ((r + t) / (1.0 + r * t)).min(1.0);
        let mut log_acc = self.origin_multiplicity as f64 * lift(z.abs()).ln();
        for &zn in &self.zeros {
            log_acc += lift(pseudo_dist(z, zn)).ln();
        }
        log_acc.exp()
    }
}

/// A point `w` near a zero of `B₂` with `|B₂(w)| > δ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub zero: DiskPoint,
    pub point: Option<DiskPoint>,
    pub distance: Option<f64>,
    pub modulus: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub b1: BlaschkeProduct,
    pub b2: BlaschkeProduct,
    /// Component index of each nonzero `b1` zero (origin zeros first).
    pub b1_component: Vec<usize>,
    pub witness_radius: f64,
    pub witnesses: Vec<Witness>,
}

impl SplitResult {
    pub fn witness_coverage(&self) -> f64 {
        if self.witnesses.is_empty() {
            return 1.0;
        }
        let found = self.witnesses.iter().filter(|w| w.point.is_some()).count();
        found as f64 / self.witnesses.len() as f64
    }

    /// Zeros of `b1` (with multiplicity) lying in component `id`.
    pub fn component_zeros(&self, id: usize) -> Vec<DiskPoint> {
        self.b1.all_zeros().zip(&self.b1_component).filter(|(_, &c)| c == id).map(|(z, _)| z).collect()
    }

    pub fn component_product(&self, id: usize) -> BlaschkeProduct {
        BlaschkeProduct::from_zeros(self.component_zeros(id))
    }
}

/// Minimal hyperbolic distance from a `B₁` zero to its contour component.
pub const B1_SEPARATION: f64 = 1.0;

/// Splits `B = B₁·B₂`: `B₁` takes the zeros lying inside some component at
/// hyperbolic distance more than 1 from it, `B₂` keeps the rest. For every
/// `B₂` zero a witness `w` with `β(w, zero) ≤ 2N + 15` and `|B₂(w)| > δ` is
/// searched.
pub fn split_by_contour(b: &BlaschkeProduct, contour: &Contour, delta: f64, big_n: u32) -> SplitResult {
    let radius = 2.0 * big_n as f64 + 15.0;
    split_by_contour_with_radius(b, contour, delta, radius)
}

pub fn split_by_contour_with_radius(
    b: &BlaschkeProduct,
    contour: &Contour,
    delta: f64,
    witness_radius: f64,
) -> SplitResult {
    let mut b1_zeros = Vec::new();
    let mut b1_component = Vec::new();
    let mut b2_zeros = Vec::new();
    for z in b.all_zeros() {
        let owner = contour.components.iter().find(|c| point_in_interior(z, c) == Containment::Inside);
        match owner {
            Some(c) if dist_to_contour(z, contour) > B1_SEPARATION => {
                b1_zeros.push(z);
                b1_component.push(c.id);
            }
            _ => b2_zeros.push(z),
        }
    }
    // all_zeros() yields origin zeros first, so from_zeros keeps b1_component aligned.
    let b1 = BlaschkeProduct::from_zeros(b1_zeros);
    let b2 = BlaschkeProduct::from_zeros(b2_zeros);
    let witnesses = b2.all_zeros().map(|z| find_witness(&b2, z, delta, witness_radius)).collect();
    SplitResult { b1, b2, b1_component, witness_radius, witnesses }
}

/// Searches for `w` with `β(w, z) ≤ radius` and `|B(w)| > threshold`.
///
/// Candidates are visited in order of increasing distance: hyperbolic circles
/// around `z` with 32 directions each, the outward radial direction first.
/// Points closer than `1e−13` to the unit circle are skipped.
pub fn find_witness(b: &BlaschkeProduct, z: DiskPoint, threshold: f64, radius: f64) -> Witness {
    let out = outward_direction(z);
    let mut d = 0.25;
    while d <= radius + 1e-12 {
        for k in 0..32 {
            // Alternate around the outward direction: 0, +1, −1, +2, ...
            let step = ((k + 1) / 2) as f64 * if k % 2 == 1 { 1.0 } else { -1.0 };
            let w = point_at_distance(z, out + step * TAU / 32.0, d);
            if w.depth() < 1e-13 {
                continue;
            }
            let m = b.eval_modulus(w);
            if m > threshold {
                return Witness { zero: z, point: Some(w), distance: Some(hyp_dist(z, w)), modulus: Some(m) };
            }
        }
        d += if d < 2.0 { 0.25 } else { 1.0 };
    }
    Witness { zero: z, point: None, distance: None, modulus: None }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(re: f64, im: f64) -> DiskPoint {
        DiskPoint::new(re, im).unwrap()
    }

    fn random_point(rng: &mut ChaCha8Rng) -> DiskPoint {
        let r = 0.999 * rng.random::<f64>().sqrt();
        DiskPoint::from_polar(r, rng.random::<f64>() * TAU).unwrap()
    }

    #[test]
    fn modulus_examples() {
        let b = BlaschkeProduct::from_zeros([p(0.5, 0.0)]);
        assert!((b.eval_modulus(DiskPoint::ORIGIN) - 0.5).abs() < 1e-15);
        assert_eq!(b.eval_modulus(p(0.5, 0.0)), 0.0);
        let b = BlaschkeProduct::from_zeros([p(0.5, 0.0), p(0.0, 0.5)]);
        assert!((b.eval_modulus(DiskPoint::ORIGIN) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn log_modulus_examples() {
        let b = BlaschkeProduct::from_zeros([p(0.5, 0.0)]);
        assert!((b.log_modulus(DiskPoint::ORIGIN).unwrap() - 0.5f64.ln()).abs() < 1e-15);
        assert_eq!(BlaschkeProduct::identity().log_modulus(p(0.3, 0.3)).unwrap(), 0.0);
        assert!(matches!(b.log_modulus(p(0.5, 0.0)), Err(Error::AtZero)));
        let m = BlaschkeProduct::from_zeros([DiskPoint::ORIGIN]);
        assert!(matches!(m.log_modulus(DiskPoint::ORIGIN), Err(Error::AtZero)));
    }

    #[test]
    fn origin_zeros_fold_into_power() {
        let b = BlaschkeProduct::from_zeros([DiskPoint::ORIGIN, p(0.2, 0.1), DiskPoint::ORIGIN]);
        assert_eq!(b.origin_multiplicity(), 2);
        assert_eq!(b.zeros().len(), 1);
        assert_eq!(b.degree(), 3);
        let z = p(0.4, -0.3);
        assert!((b.eval_modulus(z) - 0.25 * pseudo_dist(z, p(0.2, 0.1))).abs() < 1e-15);
        assert!(BlaschkeProduct::new(0, vec![DiskPoint::ORIGIN], 0.0).is_err());
    }

    #[test]
    fn complex_value_matches_modulus() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let zeros: Vec<_> = (0..10).map(|_| random_point(&mut rng)).collect();
        let b = BlaschkeProduct::new(2, zeros, 1.3).unwrap();
        for _ in 0..100 {
            let z = random_point(&mut rng);
            assert!((b.eval(z).norm() - b.eval_modulus(z)).abs() < 1e-12);
        }
    }

    #[test]
    fn log_space_agrees_with_direct_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let zeros: Vec<_> = (0..40).map(|_| random_point(&mut rng)).collect();
        let full = BlaschkeProduct::from_zeros(zeros.clone());
        for _ in 0..50 {
            let z = random_point(&mut rng);
            let direct: f64 = zeros.iter().map(|&w| pseudo_dist(z, w)).product();
            let v = full.eval_modulus(z);
            assert!((v - direct).abs() <= 1e-10 * direct.max(1e-300));
        }
    }

    #[test]
    fn upper_bound_dominates_nearby_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let zeros: Vec<_> = (0..12).map(|_| random_point(&mut rng)).collect();
        let b = BlaschkeProduct::new(1, zeros, 0.0).unwrap();
        for _ in 0..200 {
            let z = random_point(&mut rng);
            let t = 0.1f64.tanh();
            let w = point_at_distance(z, rng.random::<f64>() * TAU, 0.1 * rng.random::<f64>());
            assert!(b.eval_modulus(w) <= b.modulus_upper_bound(z, t) + 1e-12);
        }
    }
}
