use super::*;
use crate::solver::{ComplexField, PerEdge};

fn disc(ppw: u32) -> Discretization {
    Discretization { points_per_wavelength: ppw, pml_widths: PerEdge::uniform(0.5), ..Discretization::default() }
}

fn problem(n: usize, length: f64, delta: f64, k: f64, regime: Regime, collapsed: bool) -> SchwarzProblem {
    let d = build_decomposition(n, length, delta).unwrap();
    SchwarzProblem::new(d, SchwarzConfig { k, regime, disc: disc(12), collapsed }).unwrap()
}

fn rel(a: &[C64], b: &[C64]) -> f64 {
    let d: Vec<C64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    vec_norm(&d) / vec_norm(b).max(1e-300)
}

fn exterior_g(p: &SchwarzProblem) -> ExteriorData {
    let g = &p.grid;
    let wave = |t: f64| C64::from_polar(1.0, 3.0 * t);
    ExteriorData {
        left: (0..=g.ny).map(|j| wave(g.y(j as isize))).collect(),
        right: vec![C64::new(0.5, 0.0); g.ny + 1],
        top: (0..=g.nx).map(|i| wave(g.x(i as isize)) * 0.3).collect(),
        bottom: vec![C64::new(0.0, -0.2); g.nx + 1],
    }
}

#[test]
fn uniform_layout_example() {
    let d = build_decomposition(2, 2.0, 1.0 / 3.0).unwrap();
    assert_eq!(d.bounds[0].0, 0.0);
    assert!((d.bounds[0].1 - (1.0 + 1.0 / 6.0)).abs() < 1e-15);
    assert!((d.bounds[1].0 - (1.0 - 1.0 / 6.0)).abs() < 1e-15);
    assert_eq!(d.bounds[1].1, 2.0);
    // Γ₁⁺ lies right of Γ₂⁻
    assert!(d.bounds[0].1 > d.bounds[1].0);
    assert!((d.overlaps()[0] - 1.0 / 3.0).abs() < 1e-15);
    assert!((d.widths()[0] - 7.0 / 6.0).abs() < 1e-15);
}

#[test]
fn invalid_layouts() {
    assert!(matches!(build_decomposition(1, 2.0, 0.2), Err(Error::LayoutInvalid(_))));
    assert!(matches!(build_decomposition(3, 3.0, 1.5), Err(Error::LayoutInvalid(_))));
    assert!(matches!(build_decomposition(2, 2.0, 0.0), Err(Error::LayoutInvalid(_))));
    assert!(matches!(
        build_decomposition_explicit(2.0, vec![(0.0, 1.0), (1.2, 2.0)]),
        Err(Error::LayoutInvalid(_))
    ));
}

#[test]
fn partition_of_unity() {
    let p = problem(3, 3.0, 0.6, 10.0, Regime::ImpedanceExterior, false);
    assert!(p.pou.sum_defect() <= 1e-12);
    let (lo, hi) = (p.grid.i_min(), p.grid.i_max());
    for l in 0..3 {
        let (a, b) = p.ends[l];
        for i in lo..=hi {
            let c = p.pou.at(l, i);
            assert!((0.0..=1.0).contains(&c));
            if i < a || i > b {
                assert_eq!(c, 0.0);
            }
        }
        // zero on the strip's own interior ends, one on the neighbours' ends
        if l > 0 {
            assert_eq!(p.pou.at(l, a), 0.0);
            for d in -1..=1 {
                assert_eq!(p.pou.at(l, p.ends[l - 1].1 + d), 1.0);
            }
        }
        if l < 2 {
            assert_eq!(p.pou.at(l, b), 0.0);
            for d in -1..=1 {
                assert_eq!(p.pou.at(l, p.ends[l + 1].0 + d), 1.0);
            }
        }
    }
}

#[test]
fn smoothstep_shape() {
    assert_eq!(smoothstep(-1.0), 0.0);
    assert_eq!(smoothstep(0.5), 0.5);
    assert_eq!(smoothstep(2.0), 1.0);
}

#[test]
fn error_norm_of_plane_wave() {
    let p = problem(3, 3.0, 0.6, 10.0, Regime::ImpedanceExterior, false);
    let g = &p.grid;
    let kappa = (1.0 - 0.5 * (10.0 * g.hx).powi(2)).acos() / g.hx;
    let u: Vec<C64> = g.nodes().map(|(i, _)| C64::from_polar(1.0, kappa * g.x(i))).collect();
    let d = p.transmission_data(&u).unwrap();
    let plus = d.slot_index(Slot { subdomain: 1, side: Side::Plus }).unwrap();
    let minus = d.slot_index(Slot { subdomain: 1, side: Side::Minus }).unwrap();
    assert!(d.slot_norm(plus) <= 1e-12 * d.kd);
    let expect = (2.0 * d.kd).powi(2) * 1.0;
    assert!((d.slot_norm(minus).powi(2) - expect).abs() <= 1e-12 * expect);
    assert_eq!(error_norm(&p.zero_data()), 0.0);
    let a = C64::new(-2.0, 1.5);
    assert!((error_norm(&d.scaled(a)) - a.norm() * error_norm(&d)).abs() <= 1e-12 * error_norm(&d) * a.norm());
}

#[test]
fn exact_solution_is_a_fixed_point() {
    for regime in [Regime::ImpedanceExterior, Regime::OutgoingExterior] {
        let p = problem(3, 3.0, 0.6, 10.0, regime, false);
        let f = gaussian_source(&p.grid, 10.0, 0.7, 0.4);
        let g = (regime == Regime::ImpedanceExterior).then(|| exterior_g(&p));
        let u = p.exact_solution(Some(&f), g.as_ref()).unwrap();
        let s0 = p.state_from_global(u.clone()).unwrap();
        let s1 = p.iterate(&s0, Some(&f), g.as_ref()).unwrap();
        assert!(rel(&s1.glued, &u) <= 1e-10, "{regime:?}: {}", rel(&s1.glued, &u));
        // gluing the restrictions returns the field
        assert!(rel(&p.glue(&s0.fields).unwrap(), &u) <= 1e-14);
    }
}

#[test]
fn iteration_reproduces_t() {
    for regime in [Regime::ImpedanceExterior, Regime::OutgoingExterior] {
        let p = problem(3, 3.0, 0.6, 10.0, regime, false);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = p.random_data(&mut rng);
        let s0 = p.state_from_data(&d).unwrap();
        let s1 = p.iterate(&s0, None, None).unwrap();
        let t = p.apply_t(&d).unwrap();
        assert!(rel(&s1.data.flatten(), &t.flatten()) <= 1e-10);
        // errors are −uⁿ, so their data is −𝓣d
        let e = p.error_data(&s1, &vec![ZERO; p.grid.len()]).unwrap();
        assert!(rel(&e.flatten(), &t.scaled(C64::new(-1.0, 0.0)).flatten()) <= 1e-10);
    }
}

#[test]
fn matrix_matches_apply_t() {
    let p = problem(3, 3.0, 0.6, 10.0, Regime::OutgoingExterior, false);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let d = p.random_data(&mut rng);
    let t = p.t_matrix().unwrap();
    let via = &t * nalgebra::DVector::from_vec(d.flatten());
    assert!(rel(via.as_slice(), &p.apply_t(&d).unwrap().flatten()) <= 1e-12);
    assert_eq!(error_norm(&p.apply_t(&p.zero_data()).unwrap()), 0.0);
}

#[test]
fn t_is_block_tridiagonal() {
    let p = problem(4, 4.0, 0.6, 10.0, Regime::ImpedanceExterior, false);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for l in 0..4 {
        let mut d = p.random_data(&mut rng);
        for (s, slot) in d.slots.clone().iter().enumerate() {
            if slot.subdomain != l {
                d.traces[s] = vec![ZERO; d.weights.len()];
            }
        }
        let out = p.apply_t(&d).unwrap();
        for (s, slot) in out.slots.iter().enumerate() {
            let neighbour = slot.subdomain + 1 == l || slot.subdomain == l + 1;
            if !neighbour {
                assert_eq!(out.slot_norm(s), 0.0, "source {l}, slot {slot:?}");
            }
        }
        assert!(error_norm(&out) > 0.0);
    }
}

/// Away from a flat χ the product trace carries the (1/(i k_d))(∂_n χ) v term.
#[test]
fn trace_of_product_has_normal_derivative_term() {
    let p = problem(2, 2.0, 0.6, 10.0, Regime::ImpedanceExterior, false);
    let g = p.grid.clone();
    let k = p.config.k;
    let kd = p.kd();
    let chi = |x: f64| 0.5 + 0.4 * (2.0 * x).sin();
    let dchi = |x: f64| 0.8 * (2.0 * x).cos();
    let v = |x: f64, y: f64| C64::from_polar(1.0 + 0.3 * y, k * 0.6 * x + 2.0 * y);
    let prod = ComplexField::from_fn(&g, k, |x, y| chi(x) * v(x, y));
    let plain = ComplexField::from_fn(&g, k, |x, y| v(x, y));
    let i = g.nx as isize / 10;
    let x = g.x(i);
    let tp = p.slot_trace(&g, &prod.values, i, Side::Plus).unwrap();
    let tv = p.slot_trace(&g, &plain.values, i, Side::Plus).unwrap();
    let mut worst: f64 = 0.0;
    for (j, (a, b)) in tp.iter().zip(&tv).enumerate() {
        let y = g.y(j as isize);
        let expect = chi(x) * b + dchi(x) * v(x, y) / (C64::new(0.0, 1.0) * kd);
        worst = worst.max((a - expect).norm());
    }
    // centered differences of the product: O(h²)
    assert!(worst < 2.0 * g.hx * g.hx * k, "{worst}");
    // the ∂χ term is not negligible here
    assert!(dchi(x).abs() / kd > 10.0 * worst, "{} vs {worst}", dchi(x).abs() / kd);
}

#[test]
fn one_dimensional_strips_are_nilpotent() {
    let p = problem(3, 3.0, 0.6, 10.0, Regime::ImpedanceExterior, true);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let d = p.random_data(&mut rng);
    let h = p.homogeneous_history(&d, 3).unwrap();
    assert!(h[3].error_norm <= 1e-8 * h[0].error_norm, "{:?}", h);
    // from u⁰ = 0 the first error lies outside the homogeneous space
    let f = gaussian_source(&p.grid, 10.0, 1.3, 0.0);
    let h = p.convergence_history(Some(&f), None, 4).unwrap();
    assert!(h[4].error_norm <= 1e-8 * h[1].error_norm, "{:?}", h);
}

#[test]
fn power_norm_estimates() {
    let p = problem(2, 2.4, 0.8, 10.0, Regime::OutgoingExterior, false);
    let e0 = p.power_norm_estimate(0, 1, 1).unwrap();
    assert_eq!(e0.estimate, 1.0);
    assert!((error_norm(&e0.data) - 1.0).abs() < 1e-12);
    let e1 = p.power_norm_estimate(1, 3, 1).unwrap();
    let e2 = p.power_norm_estimate(2, 3, 1).unwrap();
    let x1 = p.power_norm_exact(1).unwrap();
    assert!(e1.estimate <= x1 * (1.0 + 1e-12) && e1.estimate >= 0.95 * x1, "{} vs {x1}", e1.estimate);
    assert!(e2.estimate <= e1.estimate.powi(2) + 0.05);
    // the maximizer attains the estimate
    let out = p.apply_t(&p.apply_t(&e2.data).unwrap()).unwrap();
    assert!((error_norm(&out) - e2.estimate).abs() <= 1e-9 * e2.estimate);
    assert!((error_norm(&e2.data) - 1.0).abs() < 1e-12);
}
