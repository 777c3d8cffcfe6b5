//! Acceptance suite: one test per shipped guarantee, each printing a
//! single PASS/FAIL line (run with `--nocapture` to see them).
//!
//! Every tolerance is pinned here, in code. The suite covers the dimension
//! formulas, convergence orders, polynomial exactness, the kernel/inf-sup
//! properties, the form-assembly oracle, constraint residuals, the
//! canonical-form structure of the evolution pencil, midpoint
//! self-convergence, factorization reuse, and zero-input fixed points.

mod common;

use std::time::Instant;

use common::{three_strut_net, FieldEval};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use strutnet_core::assembly::Assembler;
use strutnet_core::dynamics::{trajectory_difference, DynamicOperator, InitialData};
use strutnet_core::fields::MixedSolution;
use strutnet_core::layout::{DofLayout, FeOrders};
use strutnet_core::linalg::null_space_basis;
use strutnet_core::loads::Load;
use strutnet_core::network::{palmaz, square_section_01mm, steel, zigzag_cylinder, StentNetwork};
use strutnet_core::rod::{CrossSection, Material};
use strutnet_core::solver::{
    check_solution, convergence_study, error_norms, solve_static, SolverOptions, StaticProblem,
};

fn verdict(id: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "ACCEPTANCE {id:02} {name}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
}

#[test]
fn c01_dimension_formulas() {
    let started = Instant::now();
    let net = palmaz(square_section_01mm(), steel());
    assert_eq!((net.n_vertices(), net.n_struts()), (144, 276));
    let total = DofLayout::new(&net, FeOrders::new(1)).dim_total();
    let fine = net.refine(8);
    assert_eq!((fine.n_vertices(), fine.n_struts()), (2076, 2208));
    let total8 = DofLayout::new(&fine, FeOrders::new(1)).dim_total();
    let pass = total == 12462 && total8 == 105198;
    verdict(
        1,
        "dimension formulas",
        pass,
        &format!("split 1 -> {total}, split 8 -> {total8}, {:?}", started.elapsed()),
    );
    assert!(pass);
    assert!(started.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn c02_static_convergence_order() {
    let started = Instant::now();
    let net = zigzag_cylinder(
        6,
        4,
        1.5e-3,
        8e-3,
        false,
        square_section_01mm(),
        steel(),
    )
    .unwrap();
    let table = convergence_study(
        &net,
        FeOrders::new(1),
        &Load::radial_quadratic(),
        &[1, 2, 4, 8],
        32,
        &SolverOptions::default(),
        4,
    )
    .unwrap();
    let band = 1.7..=2.3;
    let mut failures = Vec::new();
    let mut details = Vec::new();
    for (quantity, norm) in [("u", "H1semi"), ("u", "L2"), ("p", "L2")] {
        let rate = table
            .last_rate(quantity, norm)
            .expect("nonzero errors expected");
        details.push(format!("{quantity}/{norm} rate {rate:.3}"));
        if !band.contains(&rate) {
            failures.push(format!("{quantity}/{norm} rate {rate:.3} outside [1.7, 2.3]"));
        }
    }
    let pass = failures.is_empty();
    verdict(
        2,
        "static convergence order",
        pass,
        &format!("{}; {:?}", details.join(", "), started.elapsed()),
    );
    assert!(started.elapsed().as_secs_f64() < 120.0, "runtime budget");
    assert!(
        pass,
        "rates outside the stated band: {failures:?}. The scheme superconverges \
         in the L2 norm of the displacement (measured ~3, one order above the \
         H1 prediction of the error estimate), as the reference data's own \
         error tables show for the rotation field; the band rejects behavior \
         that is better than predicted."
    );
}

#[test]
fn c03_polynomial_exactness() {
    let started = Instant::now();
    let net = zigzag_cylinder(
        3,
        2,
        1.0,
        2.0,
        false,
        CrossSection::new(0.1, 0.1),
        Material::new(1.0, 1.0, 1.0),
    )
    .unwrap();
    let orders = FeOrders::new(3);
    let load = Load::Constant {
        direction: [0.2, -0.4, 0.9],
    };
    let solve = |n: &StentNetwork| {
        solve_static(&StaticProblem {
            net: n,
            orders,
            load: load.clone(),
            options: SolverOptions::default(),
        })
        .unwrap()
    };
    let coarse = solve(&net);
    let fine_net = net.refine(2);
    let fine = solve(&fine_net);
    let report = error_norms(&net, &coarse.fields, &fine_net, &fine.fields, orders).unwrap();
    // global solution scale: the constant load is carried by alpha alone
    let mut scale = coarse.fields.alpha.amax().max(coarse.fields.beta.amax());
    for coeffs in coarse.fields.u.iter().chain(coarse.fields.omega.iter()) {
        for c in coeffs {
            scale = scale.max(c.amax());
        }
    }
    let worst = report
        .entries
        .iter()
        .map(|e| e.error)
        .fold(0.0f64, f64::max);
    let pass = worst <= 1e-8 * scale;
    verdict(
        3,
        "polynomial exactness",
        pass,
        &format!(
            "max change {worst:.3e} vs solution scale {scale:.3e}, {:?}",
            started.elapsed()
        ),
    );
    assert!(pass);
    assert!(started.elapsed().as_secs_f64() < 10.0);
}

#[test]
fn c04_kernel_and_inf_sup_properties() {
    let started = Instant::now();
    let section = CrossSection::new(0.1, 0.1);
    let material = Material::new(1.0, 1.0, 1.0);
    let nets = [
        zigzag_cylinder(3, 2, 1.0, 2.0, false, section, material).unwrap(), // 6 struts
        zigzag_cylinder(3, 2, 1.0, 2.0, true, section, material).unwrap(),  // 9 struts
        zigzag_cylinder(4, 2, 0.8, 1.5, true, section, material).unwrap(),  // 12 struts
    ];
    let mut detail = Vec::new();
    for net in &nets {
        for k in [0usize, 1] {
            let asm = Assembler::new(net, FeOrders::new(k)).unwrap();
            let sys = asm.system(&Load::Constant { direction: [0.0; 3] }, 0.0);
            let b = sys.b_dense();
            let svd = b.clone().svd(false, false);
            let smin = svd.singular_values.min();
            let smax = svd.singular_values.max();
            assert!(smin > 1e-10 * smax, "sigma_min(B^T) = {smin:e}");
            let (z, _) = null_space_basis(&b);
            if z.ncols() > 0 {
                let reduced = z.transpose() * sys.a_dense() * &z;
                let min_eig = reduced.symmetric_eigen().eigenvalues.min();
                assert!(min_eig > 0.0, "Z^T A Z min eig {min_eig:e}");
            }
            let eig = sys.k_dense().symmetric_eigen();
            let mut min_abs = f64::INFINITY;
            let mut max_abs = 0.0f64;
            for ev in eig.eigenvalues.iter() {
                min_abs = min_abs.min(ev.abs());
                max_abs = max_abs.max(ev.abs());
            }
            assert!(min_abs > 1e-12 * max_abs, "K near-singular: {min_abs:e}");
            detail.push(format!(
                "{} struts k={k}: sigma_min/max {:.1e}",
                net.n_struts(),
                smin / smax
            ));
        }
    }
    verdict(
        4,
        "kernel and inf-sup properties",
        true,
        &format!("{}; {:?}", detail.join(", "), started.elapsed()),
    );
    assert!(started.elapsed().as_secs_f64() < 30.0);
}

#[test]
fn c05_form_assembly_oracle() {
    let started = Instant::now();
    let net = three_strut_net();
    let orders = FeOrders::new(1);
    let asm = Assembler::new(&net, orders).unwrap();
    let sys = asm.system(&Load::Constant { direction: [0.0; 3] }, 0.0);
    let eval = FieldEval::new(&net, orders, &asm);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let dim = sys.layout.dim_total();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let x = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
        let y = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
        let sigma = MixedSolution::decode(&x, &sys.layout);
        let psi = MixedSolution::decode(&y, &sys.layout);
        let mut from_matrix = 0.0;
        for &(r, c, v) in &sys.b_entries {
            from_matrix += y[r] * v * x[c];
        }
        let from_oracle = eval.b_form(&sigma, &psi);
        let rel = (from_matrix - from_oracle).abs()
            / from_matrix.abs().max(from_oracle.abs()).max(1e-300);
        worst = worst.max(rel);
    }
    let pass = worst <= 1e-12;
    verdict(
        5,
        "form-assembly oracle",
        pass,
        &format!("worst relative deviation {worst:.3e} over 100 pairs, {:?}", started.elapsed()),
    );
    assert!(pass);
}

#[test]
fn c06_constraint_residuals() {
    let started = Instant::now();
    let cases: Vec<(String, StentNetwork, Load, usize)> = vec![
        (
            "palmaz f1".into(),
            palmaz(square_section_01mm(), steel()),
            Load::bell_f1(1.68e-2),
            1,
        ),
        (
            "cylinder radial-quadratic".into(),
            zigzag_cylinder(6, 4, 1.5e-3, 8e-3, false, square_section_01mm(), steel()).unwrap(),
            Load::radial_quadratic(),
            1,
        ),
        (
            "six-strut constant".into(),
            zigzag_cylinder(
                3,
                2,
                1.0,
                2.0,
                false,
                CrossSection::new(0.1, 0.1),
                Material::new(1.0, 1.0, 1.0),
            )
            .unwrap(),
            Load::Constant {
                direction: [0.1, 0.7, -0.2],
            },
            2,
        ),
    ];
    let mut detail = Vec::new();
    let mut pass = true;
    for (name, net, load, k) in &cases {
        let orders = FeOrders::new(*k);
        let sol = solve_static(&StaticProblem {
            net,
            orders,
            load: load.clone(),
            options: SolverOptions::default(),
        })
        .unwrap();
        let diag = check_solution(net, orders, &sol.fields);
        let rel = diag.worst_relative();
        detail.push(format!("{name}: {rel:.2e}"));
        pass &= rel <= 1e-9;
    }
    verdict(
        6,
        "constraint residuals",
        pass,
        &format!("{}; {:?}", detail.join(", "), started.elapsed()),
    );
    assert!(pass);
}

#[test]
fn c07_dynamics_canonical_structure() {
    let started = Instant::now();
    // reference-style parameters: unit moduli, 0.1 mm section, rho = 2000
    let net = zigzag_cylinder(
        3,
        2,
        1.5e-3,
        5e-3,
        false,
        CrossSection::new(1e-4, 1e-4),
        Material::new(1.0, 1.0, 2000.0),
    )
    .unwrap();
    let op = DynamicOperator::new(&net, FeOrders::new(1)).unwrap();
    let canon = op.canonical_form().unwrap();
    let congruence_ok = canon.residual_e <= 1e-10
        && canon.residual_k <= 1e-10
        && canon.zero_pattern_defect <= 1e-10;
    let load = Load::reference_wave();
    let options = SolverOptions::default();
    let init = op
        .consistent_initial_state(&load, &InitialData::default(), Some(&canon))
        .unwrap();
    let dt = 0.5f64.powi(5);
    let steps = (2.0 / dt).round() as usize;
    let handle = op.precompute_factorization(dt, &options).unwrap();
    let traj = op
        .integrate_midpoint(&load, dt, steps, &init.state, Some(&handle), &options)
        .unwrap();
    let mut zmax = 0.0f64;
    let mut constrained = 0.0f64;
    let mut z4_rel = 0.0f64;
    for state in &traj.states {
        zmax = zmax.max(state.z.norm());
        let norms = canon.component_norms(&state.z);
        constrained = constrained.max(norms[0]).max(norms[2]).max(norms[4]);
        let zh = canon.transform(&state.z);
        let r2 = canon.block_range(1);
        let r4 = canon.block_range(3);
        let z2 = zh.rows(r2.start, r2.len()).into_owned();
        let z4 = zh.rows(r4.start, r4.len()).into_owned();
        if z4.norm() > 0.0 {
            z4_rel = z4_rel.max((canon.z4_from_z2(&z2) - &z4).norm() / z4.norm());
        }
    }
    let components_ok = zmax > 0.0 && constrained <= 1e-8 * zmax;
    let recovery_ok = z4_rel <= 1e-7;
    let pass = congruence_ok && components_ok && recovery_ok;
    verdict(
        7,
        "dynamics canonical structure",
        pass,
        &format!(
            "congruence K {:.1e}, constrained/|z| {:.1e}, z4 recovery {:.1e}, {:?}",
            canon.residual_k,
            constrained / zmax.max(1e-300),
            z4_rel,
            started.elapsed()
        ),
    );
    assert!(pass);
    assert!(started.elapsed().as_secs_f64() < 60.0);
}

#[test]
fn c08_midpoint_self_convergence() {
    let started = Instant::now();
    let net = zigzag_cylinder(
        3,
        2,
        1.0,
        2.0,
        false,
        CrossSection::new(0.5, 0.5),
        Material::new(1.0, 1.0, 10.0),
    )
    .unwrap();
    let load = Load::TravelingWave {
        amplitude: 0.01,
        speed: 0.5,
        onset: 0.75,
        support_width: 2.0,
    };
    let op = DynamicOperator::new(&net, FeOrders::new(1)).unwrap();
    let options = SolverOptions::default();
    let init = op
        .consistent_initial_state(&load, &InitialData::default(), None)
        .unwrap();
    let t_end = 2.0;
    let mut errors = Vec::new();
    for p in [3i32, 4, 5] {
        let dt = 0.5f64.powi(p);
        let steps = (t_end / dt).round() as usize;
        let hc = op.precompute_factorization(dt, &options).unwrap();
        let coarse = op
            .integrate_midpoint(&load, dt, steps, &init.state, Some(&hc), &options)
            .unwrap();
        let hf = op.precompute_factorization(dt / 4.0, &options).unwrap();
        let fine = op
            .integrate_midpoint(&load, dt / 4.0, steps * 4, &init.state, Some(&hf), &options)
            .unwrap();
        errors.push(trajectory_difference(&op, &coarse, &fine));
    }
    let monotone = errors[0] > errors[1] && errors[1] > errors[2];
    let ratio = errors[1] / errors[2];
    let pass = monotone && (2.0..=5.0).contains(&ratio);
    verdict(
        8,
        "midpoint self-convergence",
        pass,
        &format!(
            "errors {:.2e} {:.2e} {:.2e}, final ratio {ratio:.2}, {:?}",
            errors[0], errors[1], errors[2], started.elapsed()
        ),
    );
    assert!(pass);
}

#[test]
fn c09_factorization_reuse() {
    let started = Instant::now();
    let net = zigzag_cylinder(
        6,
        4,
        1.0,
        4.0,
        true,
        CrossSection::new(0.3, 0.3),
        Material::new(1.0, 1.0, 10.0),
    )
    .unwrap()
    .refine(2);
    // onset delayed so the load vanishes around t = 0 and the zero state
    // is consistent without any analysis
    let load = Load::TravelingWave {
        amplitude: 0.01,
        speed: 1.0,
        onset: 1.5,
        support_width: 2.0,
    };
    let op = DynamicOperator::new(&net, FeOrders::new(1)).unwrap();
    let options = SolverOptions::default();
    let init = op
        .consistent_initial_state(&load, &InitialData::default(), None)
        .unwrap();
    let dt = 1.0 / 32.0;
    let steps = 64;
    let reuse_started = Instant::now();
    let handle = op.precompute_factorization(dt, &options).unwrap();
    let with = op
        .integrate_midpoint(&load, dt, steps, &init.state, Some(&handle), &options)
        .unwrap();
    let reuse_time = reuse_started.elapsed().as_secs_f64();
    let fresh_started = Instant::now();
    let without = op
        .integrate_midpoint(&load, dt, steps, &init.state, None, &options)
        .unwrap();
    let fresh_time = fresh_started.elapsed().as_secs_f64();
    let mut worst = 0.0f64;
    for (a, b) in with.states.iter().zip(without.states.iter()) {
        worst = worst.max((&a.z - &b.z).norm() / a.z.norm().max(1e-300));
    }
    let pass = worst <= 1e-10 && reuse_time < fresh_time;
    verdict(
        9,
        "factorization reuse",
        pass,
        &format!(
            "deviation {worst:.1e}, reuse {reuse_time:.2}s vs fresh {fresh_time:.2}s \
             ({} unknowns, {steps} steps), {:?}",
            op.dim(),
            started.elapsed()
        ),
    );
    assert!(pass);
}

#[test]
fn c10_zero_input_fixed_points() {
    let started = Instant::now();
    let net = zigzag_cylinder(
        3,
        2,
        1.0,
        2.0,
        true,
        CrossSection::new(0.1, 0.1),
        Material::new(1.0, 1.0, 1.0),
    )
    .unwrap();
    let zero = Load::Constant { direction: [0.0; 3] };
    let sol = solve_static(&StaticProblem {
        net: &net,
        orders: FeOrders::new(1),
        load: zero.clone(),
        options: SolverOptions::default(),
    })
    .unwrap();
    let static_ok = sol.z.amax() == 0.0;
    let op = DynamicOperator::new(&net, FeOrders::new(1)).unwrap();
    let options = SolverOptions::default();
    let init = op
        .consistent_initial_state(&zero, &InitialData::default(), None)
        .unwrap();
    let handle = op.precompute_factorization(1.0 / 16.0, &options).unwrap();
    let traj = op
        .integrate_midpoint(&zero, 1.0 / 16.0, 100, &init.state, Some(&handle), &options)
        .unwrap();
    let dyn_ok = traj
        .states
        .iter()
        .all(|s| s.z.amax() == 0.0 && s.zdot.amax() == 0.0);
    let pass = static_ok && dyn_ok;
    verdict(
        10,
        "zero-input fixed points",
        pass,
        &format!(
            "static |z| = {:.1e}, dynamic 100 steps exactly zero: {dyn_ok}, {:?}",
            sol.z.amax(),
            started.elapsed()
        ),
    );
    assert!(pass);
}
