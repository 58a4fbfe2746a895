use std::collections::BTreeMap;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use relaxstab::cli::{self, Pipeline, RunConfig};
use relaxstab::dichotomy::{block_diagonalize, propagate_subspaces, verify_dichotomy, DichotomyOptions};
use relaxstab::discrete::{derivative_stack, l2_norm, sobolev_norm, HatNorm, Samples};
use relaxstab::field::Bvp;
use relaxstab::linalg::{self, c64, CMat, CVec, RMat, RVec};
use relaxstab::model::hypotheses::{
    check_all, check_chf, check_kawashima, chf_grid, unit_directions, HypothesisSettings, HypothesisTolerances,
};
use relaxstab::model::{assemble_symbol, JinXin, JinXin2d, LinearSystem, RelaxationSystem, SaintVenant};
use relaxstab::profile::{solve_profile_jinxin_on, solve_profile_shooting, ShootingOptions, WaveProfile};
use relaxstab::resolvent::{
    frequency_grid, FrequencyPoint, Perturbation, ResolventField, ResolventSolver, WavePacket, WeightedField,
};
use relaxstab::symmetrizer::{default_theta_req, symmetrizer_from_dichotomy, verify_symmetrizer};
use relaxstab::timedomain::{
    smoothstep, verify_classical_damping, verify_integrated_damping, CutoffPair, FitCaps, Mode, RunSpec, SimOptions,
    SimState, Simulator, Weight,
};

fn front(half_width: f64, nodes: usize) -> WaveProfile {
    solve_profile_jinxin_on(2.0, 1.0, 0.0, Some(half_width), nodes).unwrap()
}

// ---------------------------------------------------------------- model

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn symbol_is_homogeneous(
        u in -2.0f64..2.0,
        p in -2.0f64..2.0,
        q in -1.0f64..1.0,
        e1 in -5.0f64..5.0,
        e2 in -5.0f64..5.0,
        a in -10.0f64..10.0,
    ) {
        let sys = JinXin2d::new(2.0, 1.0, 0.3);
        let w = RVec::from_vec(vec![u, p, q]);
        let t = assemble_symbol(&sys, &w, &[e1, e2]).unwrap().matrix;
        let ta = assemble_symbol(&sys, &w, &[a * e1, a * e2]).unwrap().matrix;
        let scale = t.amax().max(1.0) * a.abs().max(1.0);
        prop_assert!((ta - t * a).amax() <= 1e-12 * scale);
    }

    #[test]
    fn cutoff_product_is_a_partition(t in -1.0f64..12.0, u in 0.0f64..1.0) {
        let c = CutoffPair::new(1.0, 10.0).unwrap();
        let v = c.product(t);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert!((smoothstep(u) + smoothstep(1.0 - u) - 1.0).abs() < 1e-14);
    }
}

#[test]
fn chf_matches_subcharacteristic_condition() {
    let tol = HypothesisTolerances::default();
    let grid = chf_grid(1, 10.0, 1e3, 20, 2);
    for a in [0.5, 1.0, 2.0, 3.0] {
        for ratio in [-1.6, -1.2, -0.8, -0.4, 0.0, 0.3, 0.7, 0.9, 1.1, 1.5, 2.0] {
            let sys = JinXin::new(a);
            let u0 = ratio * a;
            let r = check_chf(&sys, &sys.equilibrium(u0), 10.0, &grid, 1e-3, &tol).unwrap();
            let sub = JinXin::equilibrium_speed(u0).abs() < a;
            assert_eq!(r.pass, sub, "a = {a}, u0 = {u0}: theta {}", r.theta);
        }
    }
}

#[test]
fn kawashima_implies_chf_on_corpus() {
    let tol = HypothesisTolerances::default();
    let corpus: Vec<(Box<dyn RelaxationSystem>, RVec)> = vec![
        (Box::new(JinXin::new(2.0)), JinXin::new(2.0).equilibrium(0.5)),
        (Box::new(JinXin::new(1.0)), JinXin::new(1.0).equilibrium(2.0)),
        (Box::new(JinXin2d::new(2.0, 1.0, 0.3)), JinXin2d::new(2.0, 1.0, 0.3).equilibrium(0.3)),
        (Box::new(SaintVenant::new(1.5)), SaintVenant::new(1.5).equilibrium(1.0)),
        (Box::new(SaintVenant::new(2.5)), SaintVenant::new(2.5).equilibrium(1.0)),
        (Box::new(LinearSystem::partially_damped(2.0, 0.0, 0.5)), RVec::zeros(3)),
        (Box::new(LinearSystem::skew_coupled(0.5)), RVec::zeros(3)),
        (Box::new(LinearSystem::symmetric_damped(0.7)), RVec::zeros(2)),
    ];
    let mut implications = 0;
    for (sys, w0) in &corpus {
        let d = sys.space_dim();
        let k = check_kawashima(sys.as_ref(), w0, &unit_directions(d, 8), &tol).unwrap();
        let c = check_chf(sys.as_ref(), w0, 10.0, &chf_grid(d, 10.0, 1e4, 30, 8), 1e-6, &tol).unwrap();
        if k.pass {
            implications += 1;
            assert!(c.pass, "{}: Kawashima passes but chf theta = {}", sys.name(), c.theta);
        }
    }
    assert!(implications >= 3);
}

#[test]
fn structural_checks_are_deterministic() {
    let sys = JinXin::new(2.0);
    let p = front(30.0, 601);
    let states = [sys.equilibrium(1.0), sys.equilibrium(0.0)];
    let settings = HypothesisSettings::default();
    let a = check_all(&sys, &p, &states, &settings).unwrap();
    let b = check_all(&sys, &p, &states, &settings).unwrap();
    assert_eq!(a, b);
}

// ---------------------------------------------------------------- profile

#[test]
fn shooting_profiles_meet_residual_bounds() {
    for (a, um, up) in [(2.0, 1.0, 0.0), (3.0, 1.5, -0.5), (1.5, 0.8, 0.2)] {
        let sys = JinXin::new(a);
        let (wm, wp) = (sys.equilibrium(um), sys.equilibrium(up));
        let s = 0.5 * (um + up);
        let p = solve_profile_shooting(&sys, &wm, &wp, s, &ShootingOptions::default()).unwrap();
        assert!(p.residual(&sys).unwrap() <= 1e-6, "a = {a}");
        assert!(sys.source(&p.endstates.0).amax() <= 1e-10);
        assert!(sys.source(&p.endstates.1).amax() <= 1e-10);
    }
}

#[test]
fn shooting_anchor_is_a_translation() {
    let sys = JinXin::new(2.0);
    let (wm, wp) = (sys.equilibrium(1.0), sys.equilibrium(0.0));
    let base = ShootingOptions {
        half_width: Some(30.0),
        nodes: 1201,
        ..Default::default()
    };
    let p0 = solve_profile_shooting(&sys, &wm, &wp, 0.5, &base).unwrap();
    let p1 = solve_profile_shooting(&sys, &wm, &wp, 0.5, &ShootingOptions { anchor: 1.5, ..base }).unwrap();
    assert!((p1.grid[0] - p0.grid[0] - 1.5).abs() < 1e-12);
    assert_eq!(p0.speed, p1.speed);
    assert!((&p0.endstates.0 - &p1.endstates.0).amax() <= 1e-8);
    assert!((&p0.endstates.1 - &p1.endstates.1).amax() <= 1e-8);
    assert!((p0.decay_rate - p1.decay_rate).abs() <= 1e-8);
    let gap = p0
        .values
        .iter()
        .zip(&p1.values)
        .map(|(a, b)| (a - b).amax())
        .fold(0.0, f64::max);
    assert!(gap <= 1e-8, "realigned gap {gap:e}");
}

// ---------------------------------------------------------------- resolvent

#[test]
fn hat_norm_at_zero_frequency_is_sobolev_plus_l2() {
    let h = 0.02;
    let v = Samples::from_fn(400, 2, |i, z| {
        let x = i as f64 * h - 4.0;
        z[0] = c64((-x * x).exp(), 0.0);
        z[1] = c64(0.0, x * (-x * x).exp());
    });
    for s in 0..=3 {
        let stack = derivative_stack(&v, None, s, h);
        let expect = sobolev_norm(&stack, h) + l2_norm(&v, h);
        assert_eq!(HatNorm::new(s, 0.0).eval(&v, None, h), expect);
    }
}

#[test]
fn resolvent_solutions_have_small_residual_and_are_phase_equivariant() {
    let sys = JinXin::new(2.0);
    let p = front(30.0, 1201);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for lambda in [c64(1.0, 0.0), c64(0.5, 20.0), c64(30.0, -40.0)] {
        let f = ResolventField::new(&sys, &p, FrequencyPoint::new(vec![], lambda), None).unwrap();
        let solver = ResolventSolver::new(&f, 1, 0.1).unwrap();
        for r in solver.trials(8, 1, &mut rng).unwrap() {
            assert!(r.solution.residual / r.f_l2 <= 1e-8, "{lambda}: {}", r.solution.residual);
        }
        let packet = WavePacket::random(&mut rng, 2, (-10.0, 10.0), solver.max_wavenumber());
        let forcing = solver.sample(&|x| packet.eval(x));
        let phase = Complex64::from_polar(1.0, 0.7);
        let v = solver.respond(&forcing).unwrap().solution.v;
        let w = solver.respond(&forcing.scale(phase)).unwrap().solution.v;
        let scale = l2_norm(&v, solver.h());
        for k in 0..v.len() {
            for i in 0..2 {
                assert!((w.node(k)[i] - v.node(k)[i] * phase).norm() <= 1e-10 * scale.max(1.0));
            }
        }
    }
}

/// Gains `‖v‖/‖f‖` over shared wave-packet forcings for the field and its
/// `e^{αx}` conjugate.
fn gains(field: &ResolventField<'_>, alpha: f64, nodes: usize, packets: &[WavePacket]) -> f64 {
    let weighted = WeightedField { inner: field, alpha };
    let bvp = Bvp::new(&weighted, nodes).unwrap();
    packets
        .iter()
        .map(|pk| {
            let sol = bvp.solve(&|x| pk.eval(x)).unwrap();
            sol.l2() / l2_norm(&sol.b, sol.h)
        })
        .fold(0.0, f64::max)
}

#[test]
fn weighted_variant_keeps_pass_fail_conclusions() {
    let sys = JinXin::new(2.0);
    let p = front(30.0, 1201);
    let gamma_star = -0.1;
    let grid = frequency_grid(10.0, 300.0, 6, 3, &[]);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut measures: BTreeMap<u64, Vec<(f64, f64)>> = BTreeMap::new();
    for fp in &grid {
        let f = ResolventField::new(&sys, &p, fp.clone(), None).unwrap();
        let solver = ResolventSolver::new(&f, 1, 0.1).unwrap();
        let nodes = solver.bvp.nodes();
        let packets: Vec<WavePacket> = (0..8)
            .map(|_| WavePacket::random(&mut rng, 2, (-15.0, 15.0), solver.max_wavenumber()))
            .collect();
        let margin = fp.lambda.re - gamma_star;
        for (k, alpha) in [0.0, 0.05].into_iter().enumerate() {
            measures
                .entry(k as u64)
                .or_default()
                .push((fp.modulus(), gains(&f, alpha, nodes, &packets) * margin));
        }
    }
    // calibrate on the upper half of |λ| as the sweep does, then classify
    let verdicts: Vec<Vec<bool>> = measures
        .values()
        .map(|m| {
            let mut by_size: Vec<&(f64, f64)> = m.iter().collect();
            by_size.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
            let c = by_size[..m.len() / 2].iter().map(|p| p.1).fold(0.0, f64::max) * 2.0;
            m.iter().map(|p| p.1 <= c).collect()
        })
        .collect();
    assert_eq!(verdicts[0], verdicts[1]);
}

// ---------------------------------------------------------------- dichotomy

#[test]
fn accepted_dichotomies_satisfy_axioms() {
    let sys = JinXin::new(2.0);
    let p = front(30.0, 1201);
    for lambda in [c64(2.0, 0.0), c64(0.5, 3.0), c64(1.0, -8.0)] {
        let f = ResolventField::new(&sys, &p, FrequencyPoint::new(vec![], lambda), None).unwrap();
        let d = propagate_subspaces(&f, &DichotomyOptions::default()).unwrap();
        let id = linalg::identity(2);
        for i in 0..d.nodes() {
            let (pp, pm) = (d.p_plus(i), d.p_minus(i));
            let scale = linalg::norm2(&pp).max(1.0);
            assert!((&pp * &pp - &pp).norm() <= 1e-10 * scale * scale);
            assert!((&pp * &pm).norm() <= 1e-10 * scale * scale);
            assert!((&pp + &pm - &id).norm() <= 1e-10 * scale);
        }
        let rep = verify_dichotomy(&d, 50, 1e-6, 7).unwrap();
        assert!(rep.commuting_error <= 1e-6, "{lambda}: {rep:?}");
        assert!(rep.decay_ratio <= 1.0, "{lambda}: {rep:?}");
        assert!(rep.pass);
    }
}

#[test]
fn block_residual_converges_under_refinement() {
    let sys = JinXin::new(2.0);
    let p = front(30.0, 2401);
    let f = ResolventField::new(&sys, &p, FrequencyPoint::new(vec![], c64(1.0, 2.0)), None).unwrap();
    let residual = |h_max: f64| {
        let opts = DichotomyOptions {
            h_max,
            ..Default::default()
        };
        block_diagonalize(&propagate_subspaces(&f, &opts).unwrap()).unwrap().residual
    };
    let (r1, r2) = (residual(0.2), residual(0.1));
    let order = (r1 / r2).log2();
    assert!(order > 3.0, "residuals {r1:e} {r2:e}, order {order}");
}

// ---------------------------------------------------------------- symmetrizer

fn certified_theta(lambda: Complex64, h_max: f64) -> f64 {
    let sys = JinXin::new(2.0);
    let p = front(30.0, 1201);
    let f = ResolventField::new(&sys, &p, FrequencyPoint::new(vec![], lambda), None).unwrap();
    let d = propagate_subspaces(
        &f,
        &DichotomyOptions {
            h_max,
            ..Default::default()
        },
    )
    .unwrap();
    let (sym, _) = symmetrizer_from_dichotomy(&d).unwrap();
    let req = default_theta_req(&d.frames());
    let cert = verify_symmetrizer(&sym, d.g_nodes(), req).unwrap();
    cert.theta_measured
}

#[test]
fn symmetrizer_is_hermitian_and_bounded() {
    let sys = JinXin::new(2.0);
    let p = front(30.0, 1201);
    for lambda in [c64(2.0, 0.0), c64(0.3, 5.0)] {
        let f = ResolventField::new(&sys, &p, FrequencyPoint::new(vec![], lambda), None).unwrap();
        let d = propagate_subspaces(&f, &DichotomyOptions::default()).unwrap();
        let (sym, _) = symmetrizer_from_dichotomy(&d).unwrap();
        assert!(sym.hermitian_error() <= 1e-10);
        for s in &sym.s {
            assert!(linalg::norm2(s) <= sym.c0 * (1.0 + 1e-12));
        }
    }
}

/// One RK4 step of `z′ = Λ z` with the block sampled at nodes and midpoints.
fn rk4(z: &CVec, l0: &CMat, lm: &CMat, l1: &CMat, h: f64) -> CVec {
    let hh = c64(0.5 * h, 0.0);
    let k1 = l0 * z;
    let k2 = lm * (z + &k1 * hh);
    let k3 = lm * (z + &k2 * hh);
    let k4 = l1 * (z + &k3 * c64(h, 0.0));
    z + (k1 + (k2 + k3) * c64(2.0, 0.0) + k4) * c64(h / 6.0, 0.0)
}

#[test]
fn lyapunov_derivative_identity_along_trajectories() {
    let sys = JinXin::new(2.0);
    let p = front(30.0, 1201);
    let f = ResolventField::new(&sys, &p, FrequencyPoint::new(vec![], c64(1.0, 1.0)), None).unwrap();
    let d = propagate_subspaces(&f, &DichotomyOptions::default()).unwrap();
    let (_, forms) = symmetrizer_from_dichotomy(&d).unwrap();
    let (plus, _) = d.blocks();
    let h = d.h;
    let m = d.nodes();
    let j = plus.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let start = rng.gen_range(0..m - 200);
        let mut z = CVec::from_iterator(j, (0..j).map(|_| c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))));
        let mut phi = Vec::new();
        let mut mass = Vec::new();
        for i in start..start + 100 {
            phi.push((z.adjoint() * &forms.q_plus[i] * &z)[(0, 0)].re);
            mass.push(z.norm_squared());
            z = rk4(&z, &plus.nodes[i], &plus.mids[i], &plus.nodes[i + 1], h);
        }
        for k in 2..phi.len() - 2 {
            let dphi = (phi[k - 2] - 8.0 * phi[k - 1] + 8.0 * phi[k + 1] - phi[k + 2]) / (12.0 * h);
            worst = worst.max((dphi + mass[k]).abs() / mass[k]);
        }
    }
    assert!(worst < 1e-4, "relative identity defect {worst:e} at h = {h}");
}

#[test]
fn certified_theta_settles_under_refinement() {
    let lambda = c64(1.0, 2.0);
    let t: Vec<f64> = [0.1, 0.05, 0.025].iter().map(|&h| certified_theta(lambda, h)).collect();
    let (d1, d2) = ((t[0] - t[1]).abs(), (t[1] - t[2]).abs());
    assert!(d2 <= d1 + 1e-10, "theta sequence {t:?}");
    assert!(d2 <= 1e-3 * t[2], "theta sequence {t:?}");
}

#[test]
fn perturbed_certificates_converge_to_unperturbed() {
    // certify frozen perturbations of the field with the v = 0 symmetrizer;
    // v enters through the transverse flux, so the front is the planar 2-d one
    let sys = JinXin2d::new(2.0, 1.0, 0.3);
    let p = front(30.0, 1201).embedded(1);
    let fp = FrequencyPoint::new(vec![1.0], c64(2.0, 1.0));
    let f0 = ResolventField::new(&sys, &p, fp.clone(), None).unwrap();
    let d = propagate_subspaces(&f0, &DichotomyOptions::default()).unwrap();
    let (sym, _) = symmetrizer_from_dichotomy(&d).unwrap();
    let req = default_theta_req(&d.frames());
    let cert0 = verify_symmetrizer(&sym, d.g_nodes(), req).unwrap();
    let theta0 = cert0.theta_measured;
    // θ is a minimum over x, so the bump sits where the minimum is attained
    let theta = |amplitude: f64| {
        let bump = Perturbation {
            amplitude,
            direction: vec![1.0, 0.3, 0.0],
            center: cert0.worst_x,
            width: 1.5,
        };
        let fv = ResolventField::new(&sys, &p, fp.clone(), Some(bump)).unwrap();
        let g: Vec<CMat> = sym.grid.iter().map(|&x| fv.at(x).unwrap().0).collect();
        verify_symmetrizer(&sym, &g, req).unwrap().theta_measured
    };
    let diffs: Vec<f64> = [0.04, 0.02, 0.01].iter().map(|&a| (theta(a) - theta0).abs()).collect();
    assert!(diffs[2] < diffs[1] && diffs[1] < diffs[0], "{diffs:?}");
    // first order in the amplitude: halving roughly halves the defect
    for w in diffs.windows(2) {
        let r = w[0] / w[1];
        assert!((1.5..=2.6).contains(&r), "{diffs:?}");
    }
}

// ---------------------------------------------------------------- time domain

#[test]
fn integrated_check_follows_pointwise_fit() {
    let sys = JinXin::new(2.0);
    let p = front(30.0, 1201);
    let sim = Simulator::front(&sys, &p, 20.0, 401, SimOptions::default()).unwrap();
    let dt = 0.8 * sim.cfl_limit(Mode::Linearized);
    let spec = RunSpec {
        t_end: 4.0,
        dt,
        mode: Mode::Linearized,
        record_every: ((0.02 / dt).ceil() as usize).max(1),
        s: 2,
        weight: Weight::Unit,
        keep_history: false,
    };
    let mut fitted = 0;
    for (center, width) in [(0.0, 1.0), (2.0, 0.7), (-3.0, 1.5)] {
        let init = SimState::from_fn(&sim.grid, 2, |x, z| {
            let g = (-((x - center) / width).powi(2)).exp();
            z[0] = 1e-3 * g;
            z[1] = -2e-3 * (x - center) * g;
        });
        let run = sim.run(init, &spec, None).unwrap();
        let fit = verify_classical_damping(&run.trace, (0.0, 4.0), FitCaps::default()).unwrap();
        if fit.feasible {
            fitted += 1;
            let chk = verify_integrated_damping(&run.trace, fit.eta, fit.c);
            assert!(chk.min_relative_slack >= -1e-6, "center {center}: {chk:?}");
        }
    }
    assert!(fitted >= 2);
}

#[test]
fn constant_coefficient_energy_is_nonincreasing_for_dissipative_system() {
    // symmetric transport with isotropic damping: E(t) ≤ E(0) e^{−2θt}
    let a = RMat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let e = RMat::identity(2, 2) * 0.5;
    let sim = Simulator::constant(&a, &e, 10.0, 257, true, SimOptions::default()).unwrap();
    let dt = 0.5 * sim.cfl_limit(Mode::Linearized);
    let spec = RunSpec {
        t_end: 2.0,
        dt,
        mode: Mode::Linearized,
        record_every: 4,
        s: 1,
        weight: Weight::Unit,
        keep_history: false,
    };
    let init = SimState::from_fn(&sim.grid, 2, |x, z| {
        z[0] = (-x * x).exp();
        z[1] = 0.0;
    });
    let run = sim.run(init, &spec, None).unwrap();
    let tr = &run.trace;
    for k in 0..tr.len() {
        assert!(tr.e_values[k] <= tr.e_values[0] * (-tr.times[k]).exp() * (1.0 + 1e-3) + 1e-14);
    }
}

// ---------------------------------------------------------------- cli

#[test]
fn summaries_are_deterministic_and_carry_constants() {
    let cfg = RunConfig::jin_xin_default();
    let a = cli::run(&cfg, Some(Pipeline::Hypotheses), None, false).unwrap();
    let b = cli::run(&cfg, Some(Pipeline::Hypotheses), None, false).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert!(!a.checks.is_empty());
    for (name, c) in &a.checks {
        assert!(!c.constants.is_empty(), "{name} has no constants");
    }
}
