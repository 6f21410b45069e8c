use mpass::bench::brute_force_min_norm;
use mpass::clarke::{
    descent_direction, gen_dir_derivative, min_norm_element, min_norm_weights, DescentResult,
    SubdiffPolytope,
};
use mpass::functionals::{parse_expr, FunctionalExpr, Node, UnaryFn};
use mpass::geometry::{delta_distance, delta_lower_bound, DeltaOptions};
use mpass::paths::{deform, rho, SubPath};
use mpass::{cli::RunConfig, Point, SolverParams};
use proptest::prelude::*;

fn coord() -> impl Strategy<Value = f64> {
    -4.0..4.0f64
}

fn point2() -> impl Strategy<Value = Point> {
    (coord(), coord()).prop_map(|(a, b)| Point::new(vec![a, b]).unwrap())
}

fn generators(max_n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1..=max_n).prop_flat_map(|n| prop::collection::vec(prop::collection::vec(-3.0..3.0f64, n), 1..=5))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn delta_is_between_lower_bound_and_norm(x in point2(), y in point2()) {
        let d = delta_distance(&x, &y, &DeltaOptions::default()).unwrap();
        prop_assert!(d <= x.dist(&y) + 1e-12);
        prop_assert!(d >= delta_lower_bound(x.coords(), y.coords()) - 1e-6);
    }

    #[test]
    fn delta_is_symmetric(x in point2(), y in point2()) {
        let o = DeltaOptions::default();
        let a = delta_distance(&x, &y, &o).unwrap();
        let b = delta_distance(&y, &x, &o).unwrap();
        prop_assert!((a - b).abs() <= 1e-4 * (1.0 + a));
    }

    #[test]
    fn delta_triangle_inequality(x in point2(), y in point2(), z in point2()) {
        let o = DeltaOptions::default();
        let d = |a: &Point, b: &Point| delta_distance(a, b, &o).unwrap();
        prop_assert!(d(&x, &z) <= d(&x, &y) + d(&y, &z) + 1e-3);
    }

    #[test]
    fn delta_along_a_ray_is_log(a in 0.0..20.0f64, theta in 0.0..6.3f64) {
        let o = Point::origin(2);
        let y = Point::new(vec![a * theta.cos(), a * theta.sin()]).unwrap();
        let d = delta_distance(&o, &y, &DeltaOptions::default()).unwrap();
        prop_assert!((d - a.ln_1p()).abs() <= 1e-3 * a.ln_1p() + 1e-12);
    }

    #[test]
    fn min_norm_matches_brute_force(gens in generators(3)) {
        let n = gens[0].len();
        let poly = SubdiffPolytope::new(gens.clone(), Point::origin(n)).unwrap();
        let (g, gn) = min_norm_element(&poly);
        prop_assert!((gn - brute_force_min_norm(&gens)).abs() <= 1e-6);
        prop_assert!((norm(&g) - gn).abs() <= 1e-9);
        // first-order optimality over the generators
        for p in &gens {
            prop_assert!(dot(&g, p) >= gn * gn - 1e-6);
        }
        let w = min_norm_weights(&gens);
        prop_assert!(w.iter().all(|&x| x >= -1e-12));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn generalized_derivative_is_a_support_function(
        gens in generators(3),
        seed_v in prop::collection::vec(-2.0..2.0f64, 3),
        seed_w in prop::collection::vec(-2.0..2.0f64, 3),
        s in 0.0..5.0f64,
    ) {
        let n = gens[0].len();
        let (v, w) = (&seed_v[..n], &seed_w[..n]);
        let poly = SubdiffPolytope::new(gens.clone(), Point::origin(n)).unwrap();
        let dd = |u: &[f64]| gen_dir_derivative(&poly, u).unwrap();
        let brute = gens.iter().map(|g| dot(g, v)).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!((dd(v) - brute).abs() <= 1e-12 * (1.0 + brute.abs()));
        let sv: Vec<f64> = v.iter().map(|x| s * x).collect();
        prop_assert!((dd(&sv) - s * dd(v)).abs() <= 1e-9 * (1.0 + dd(v).abs()));
        let vw: Vec<f64> = v.iter().zip(w).map(|(a, b)| a + b).collect();
        prop_assert!(dd(&vw) <= dd(v) + dd(w) + 1e-9);
    }

    #[test]
    fn descent_direction_is_certified(gens in generators(3), base in prop::collection::vec(-3.0..3.0f64, 3)) {
        let n = gens[0].len();
        let x = Point::new(base[..n].to_vec()).unwrap();
        let poly = SubdiffPolytope::new(gens, x.clone()).unwrap();
        let margin = 0.1;
        match descent_direction(&poly, &x, margin).unwrap() {
            DescentResult::Direction { direction, slope_bound, .. } => {
                prop_assert!((norm(&direction) - (1.0 + x.norm())).abs() <= 1e-9 * (1.0 + x.norm()));
                prop_assert!(slope_bound < -margin);
                prop_assert!(gen_dir_derivative(&poly, &direction).unwrap() <= slope_bound + 1e-9);
            }
            DescentResult::NearCritical { min_norm, scaled_min_norm } => {
                prop_assert!(scaled_min_norm <= margin);
                prop_assert!((scaled_min_norm - (1.0 + x.norm()) * min_norm).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn deformation_moves_nodes_at_most_h_times_field(
        h in 0.0..1.0f64,
        field in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 3),
    ) {
        let nodes: Vec<Point> = (0..5)
            .map(|i| Point::new(vec![-1.0 + 0.5 * i as f64, 0.3]).unwrap())
            .collect();
        let f = SubPath::new(0.2, 0.8, nodes).unwrap();
        let mut v = vec![vec![0.0, 0.0]];
        v.extend(field.iter().map(|&(a, b)| vec![a, b]));
        v.push(vec![0.0, 0.0]);
        let g = deform(&f, &v, h).unwrap();
        prop_assert_eq!(g.nodes()[0].coords(), f.nodes()[0].coords());
        prop_assert_eq!(g.nodes()[4].coords(), f.nodes()[4].coords());
        let vmax = v.iter().map(|x| norm(x)).fold(0.0, f64::max);
        let r = rho(&g, &f, &DeltaOptions::default()).unwrap();
        prop_assert!(r <= h * vmax + 1e-12);
    }

    #[test]
    fn config_dump_round_trips(
        n_max in 1usize..200,
        grid_m in 2usize..256,
        seed in any::<u64>(),
        beta in 0.01..0.99f64,
        norm_mode in any::<bool>(),
    ) {
        let mut cfg = RunConfig::default();
        cfg.params = SolverParams { n_max, grid_m, seed, beta, ..SolverParams::default() };
        if norm_mode {
            cfg.mode = mpass::DistanceMode::Norm;
        }
        prop_assert_eq!(RunConfig::parse(&cfg.dump()).unwrap(), cfg);
    }
}

fn expr_node() -> impl Strategy<Value = Node<f64>> {
    let leaf = prop_oneof![
        (0usize..3).prop_map(Node::Coord),
        (-5i32..5).prop_map(|c| Node::Const(c as f64 * 0.5)),
    ];
    leaf.prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..4).prop_map(Node::Sum),
            prop::collection::vec(inner.clone(), 2..3).prop_map(Node::Product),
            prop::collection::vec(inner.clone(), 2..4).prop_map(Node::Max),
            prop::collection::vec(inner.clone(), 2..4).prop_map(Node::Min),
            inner.clone().prop_map(|n| Node::Abs(Box::new(n))),
            (inner.clone(), 1u32..4).prop_map(|(n, p)| Node::Pow(Box::new(n), p)),
            inner.prop_map(|n| Node::Unary(UnaryFn::Sin, Box::new(n))),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn printed_expressions_parse_back(node in expr_node()) {
        let e = FunctionalExpr::new(node, 3).unwrap();
        let back = parse_expr::<f64>(&e.to_string(), 3).unwrap();
        let x = Point::new(vec![0.3, -0.7, 1.1]).unwrap();
        let (a, b) = (e.evaluate(&x).unwrap(), back.evaluate(&x).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()) || (a.is_nan() && b.is_nan()));
        prop_assert_eq!(back.to_string(), e.to_string());
    }

    #[test]
    fn active_pieces_span_the_generalized_gradient(node in expr_node(), v in prop::collection::vec(-1.0..1.0f64, 3)) {
        // for max-type trees Φ⁰(x, v) bounds the one-sided derivative
        let e = FunctionalExpr::new(node, 3).unwrap();
        let x = Point::new(vec![0.3, -0.7, 1.1]).unwrap();
        let poly = SubdiffPolytope::new(e.active_pieces(&x, 1e-9).unwrap(), x.clone()).unwrap();
        let t = 1e-7;
        let y: Vec<f64> = x.coords().iter().zip(&v).map(|(a, b)| a + t * b).collect();
        let fd = (e.evaluate_slice(&y).unwrap() - e.evaluate(&x).unwrap()) / t;
        let dd = gen_dir_derivative(&poly, &v).unwrap();
        let scale = 1.0 + dd.abs() + fd.abs();
        prop_assert!(fd <= dd + 1e-4 * scale, "fd {} > Φ⁰ {}", fd, dd);
    }
}

#[test]
fn generic_over_f32() {
    let x = mpass::functionals::Point::<f32>::new(vec![0.0, 0.0]).unwrap();
    let y = mpass::functionals::Point::<f32>::new(vec![1.0, 0.0]).unwrap();
    let d = delta_distance(&x, &y, &DeltaOptions::default()).unwrap();
    assert!((d - 2f32.ln()).abs() < 1e-4);
    let poly = SubdiffPolytope::new(vec![vec![-2.0f32, 0.0], vec![2.0, 0.0]], x).unwrap();
    assert!(min_norm_element(&poly).1 < 1e-6);
    let e = parse_expr::<f32>("min(sq(sub(x0,1)),sq(add(x0,1)))", 2).unwrap();
    assert_eq!(e.evaluate(&y).unwrap(), 0.0);
}
