use std::f64::consts::TAU;

use blaschke_approx::dyadic::DyadicSquare;
use blaschke_approx::geometry::{build_net, hyp_dist, mobius, point_at_distance, pseudo_dist};
use blaschke_approx::harmonic::{BoundaryMeasure, Method};
use blaschke_approx::pipeline::{parse_zero_set, zero_set_json, GeneratorSpec, InputSpec, RunConfig};
use blaschke_approx::{BlaschkeProduct, DiskPoint};
use proptest::prelude::*;

fn point(r_max: f64) -> impl Strategy<Value = DiskPoint> {
    (0.0..1.0f64, 0.0..TAU).prop_map(move |(u, t)| DiskPoint::from_polar(r_max * u.sqrt(), t).unwrap())
}

fn product(max_degree: usize) -> impl Strategy<Value = BlaschkeProduct> {
    (0u32..3, prop::collection::vec(point(0.995), 0..max_degree), 0.0..TAU).prop_map(|(m, zs, c)| {
        let zs = zs.into_iter().filter(|z| z.norm_sqr() > 0.0).collect();
        BlaschkeProduct::new(m, zs, c).unwrap()
    })
}

fn sorted(mut v: Vec<DiskPoint>) -> Vec<(f64, f64)> {
    v.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
    v.into_iter().map(|z| (z.re, z.im)).collect()
}

proptest! {
    #[test]
    fn beta_is_artanh_rho(z in point(0.999), w in point(0.999)) {
        let rho = pseudo_dist(z, w);
        prop_assert!((0.0..1.0).contains(&rho));
        let beta = hyp_dist(z, w);
        prop_assert!((beta - rho.atanh()).abs() <= 1e-12 * beta.max(1.0));
        prop_assert_eq!(pseudo_dist(z, w), pseudo_dist(w, z));
    }

    #[test]
    fn beta_triangle_inequality(z in point(0.99), w in point(0.99), v in point(0.99)) {
        prop_assert!(hyp_dist(z, v) <= hyp_dist(z, w) + hyp_dist(w, v) + 1e-10);
    }

    #[test]
    fn mobius_is_an_isometric_involution(a in point(0.95), z in point(0.99), w in point(0.99)) {
        let back = mobius(a, mobius(a, z));
        prop_assert!((back.to_complex() - z.to_complex()).norm() <= 1e-9);
        prop_assert!((pseudo_dist(mobius(a, z), mobius(a, w)) - pseudo_dist(z, w)).abs() <= 1e-12);
        prop_assert!(mobius(a, a).abs() <= 1e-15);
    }

    #[test]
    fn point_at_distance_has_that_distance(c in point(0.9), t in 0.0..TAU, beta in 0.0..6.0f64) {
        let p = point_at_distance(c, t, beta);
        prop_assert!((hyp_dist(c, p) - beta).abs() <= 1e-8 * beta.max(1.0));
    }

    #[test]
    fn blaschke_is_inner(b in product(40), z in point(0.999)) {
        let m = b.eval_modulus(z);
        prop_assert!((0.0..=1.0).contains(&m));
        prop_assert!((b.eval(z).norm() - m).abs() <= 1e-12);
        if m > 0.0 {
            prop_assert!((b.log_modulus(z).unwrap().exp() - m).abs() <= 1e-10 * m);
        }
        for &zn in b.zeros() {
            prop_assert!(b.eval_modulus(zn) <= 1e-12);
        }
    }

    #[test]
    fn modulus_is_multiplicative(b1 in product(20), b2 in product(20), z in point(0.99)) {
        let p = b1.product(&b2);
        prop_assert_eq!(p.degree(), b1.degree() + b2.degree());
        let lhs = p.eval_modulus(z);
        let rhs = b1.eval_modulus(z) * b2.eval_modulus(z);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1e-300));
    }

    #[test]
    fn schwarz_pick_upper_bound(b in product(30), z in point(0.99), t in 0.0..0.9f64, s in 0.0..1.0f64, th in 0.0..TAU) {
        let w = point_at_distance(z, th, (s * t).atanh());
        prop_assert!(b.eval_modulus(w) <= b.modulus_upper_bound(z, t) * (1.0 + 1e-9) + 1e-15);
    }

    #[test]
    fn children_partition_the_parent(level in 0u32..30, seed in any::<u64>(), z in point(0.999999)) {
        let index = if level == 0 { 0 } else { seed % (1u64 << level) };
        let q = DyadicSquare::new(level, index).unwrap();
        let [a, b] = q.children();
        prop_assert_eq!(a.parent(), Some(q));
        prop_assert_eq!(b.parent(), Some(q));
        prop_assert!(q.contains_square(a) && q.contains_square(b));
        prop_assert!(!a.contains_square(b) && !b.contains_square(a));
        prop_assert_eq!(a.side(), 0.5 * q.side());
        prop_assert_eq!(b.side(), a.side());
        prop_assert_eq!(a.theta_hi(), b.theta_lo());
        if level > 0 {
            prop_assert_eq!(a.theta_lo(), q.theta_lo());
            prop_assert_eq!(b.theta_hi(), q.theta_hi());
        }
        if q.contains(z) && z.depth() < a.side() {
            prop_assert!(a.contains(z) || b.contains(z) || (z.angle() - a.theta_hi()).abs() < 1e-12);
            prop_assert!(!(a.contains(z) && b.contains(z)));
        }
    }

    #[test]
    fn containing_square_contains(z in point(0.999999), level in 0u32..20) {
        if let Some(q) = DyadicSquare::containing(z, level) {
            prop_assert_eq!(q.level, level);
            prop_assert!(z.depth() <= q.side());
            prop_assert!(z.angle() >= q.theta_lo() - 1e-12 && z.angle() <= q.theta_hi() + 1e-12);
        } else {
            prop_assert!(z.depth() > 0.5f64.powi(level as i32));
        }
    }

    #[test]
    fn net_covers_to_its_depth(mesh in 0.05..0.5f64, depth in 2u32..10, u in 0.0..1.0f64, t in 0.0..TAU) {
        let net = build_net(mesh, depth).unwrap();
        let r = net.limit_radius() * u.sqrt();
        let z = DiskPoint::from_polar(r, t).unwrap();
        let (_, d) = net.nearest(z);
        prop_assert!(d <= mesh, "distance {} > mesh {}", d, mesh);
    }

    #[test]
    fn zero_set_json_round_trip(zs in prop::collection::vec(point(0.999), 0..30), dup in 0usize..5) {
        let mut zs = zs;
        if let Some(&z) = zs.first() {
            zs.extend(std::iter::repeat_n(z, dup));
        }
        let back = parse_zero_set(&zero_set_json(&zs).unwrap()).unwrap();
        prop_assert_eq!(sorted(back), sorted(zs));
    }

    #[test]
    fn measure_json_round_trip(masses in prop::collection::vec(0.0..2.0f64, 1..50), seed in any::<u64>()) {
        let l = 1.5;
        let nb = masses.len();
        let mu = BoundaryMeasure {
            component_id: 3,
            arclength: l,
            bin_edges: (0..=nb).map(|i| l * i as f64 / nb as f64).collect(),
            total: masses.iter().sum(),
            bin_masses: masses,
            method: Method::MonteCarlo { walks_per_source: 1000 },
            seed,
            stat_error: 0.0,
            raw_total: 1.0,
            renormalization: 1.0,
            sources: 1,
        };
        let back: BoundaryMeasure = serde_json::from_str(&serde_json::to_string(&mu).unwrap()).unwrap();
        prop_assert_eq!(&back, &mu);
        let cum = mu.cumulative();
        prop_assert!(cum.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn config_json_round_trip(eps in 0.01..0.99f64, n in 1u32..8, seed in any::<u64>(), count in 1usize..500) {
        let cfg = RunConfig {
            input: InputSpec::Generated { spec: GeneratorSpec::Uniform { count, max_depth: 6 } },
            epsilon: eps,
            big_n: n,
            seed,
            ..Default::default()
        };
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
