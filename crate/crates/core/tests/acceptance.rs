//! Acceptance gate. Each test prints one `PASS` or `FAIL` line to stderr
//! (bypassing output capture) and then asserts the same condition.

use std::f64::consts::PI;
use std::io::Write;

use lattice_zeta::domains::{boundary_layer, build_domain, path_domain, Shape, Site};
use lattice_zeta::experiments::{run_g_fit, run_pi_table, FitShape, TraceBackend};
use lattice_zeta::kernel::{evolve_full, evolve_killed, EvolutionConfig, FullSpaceKernel};
use lattice_zeta::operator::{assemble, WalkSource};
use lattice_zeta::spectra::{
    dense_spectrum, ground_state, iu_diagnostic, kirchhoff_check, zeta_exact, zeta_exact_with,
    zeta_from_spectrum, zeta_hutchinson, ExactStrategy, SimpleGraph,
};
use lattice_zeta::walks::{sample_environment, BuiltinWalk, Extent, StepSet};

const TOL: f64 = 1e-10;

fn verdict(id: u32, pass: bool, detail: &str) {
    let line = format!(
        "{} criterion {id}: {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
}

fn walk(w: BuiltinWalk) -> StepSet {
    StepSet::builtin(w, None).unwrap()
}

#[test]
fn criterion_1_pi_table() {
    let targets = [
        (BuiltinWalk::King, 100usize, 3.11197),
        (BuiltinWalk::Triangular, 120, 3.12629),
        (BuiltinWalk::Knight, 120, 3.13482),
    ];
    let mut pass = true;
    let mut detail = Vec::new();
    for (w, r, want) in targets {
        let est = &run_pi_table(&[walk(w)], &[r], TraceBackend::Exact, TOL).unwrap()[0];
        let got = est.pi_approx();
        let ok = (got - want).abs() <= 5e-4;
        pass &= ok;
        detail.push(format!("{}(R={r})={got:.5} want {want}", w.name()));
    }
    // dense cross-check of the exact trace at a small size
    for w in [BuiltinWalk::King, BuiltinWalk::Triangular, BuiltinWalk::Knight] {
        let exact = &run_pi_table(&[walk(w)], &[30], TraceBackend::Exact, TOL).unwrap()[0];
        let dense = &run_pi_table(&[walk(w)], &[30], TraceBackend::Dense, TOL).unwrap()[0];
        let rel = (exact.trace.value / dense.trace.value - 1.0).abs();
        pass &= rel < 1e-9;
        detail.push(format!("{} R=30 dense/exact rel {rel:.1e}", w.name()));
    }
    verdict(1, pass, &detail.join("; "));
    assert!(pass, "{detail:?}");
}

#[test]
fn criterion_2_heat_kernel_constant() {
    let s = evolve_full(&walk(BuiltinWalk::Lsrw), Site::new(0, 0), 2000).unwrap();
    let g = 2.0 / PI;
    let d500 = (500.0 * s.values[500] - g).abs();
    let d2000 = (2000.0 * s.values[2000] - g).abs();
    let pass = d2000 <= 5e-3 && d2000 < d500;
    verdict(
        2,
        pass,
        &format!("|t p_t - 2/pi| = {d2000:.3e} at t=2000, {d500:.3e} at t=500"),
    );
    assert!(pass);
}

#[test]
fn criterion_3_leading_constant_regression() {
    let rs: Vec<usize> = (20..=100).step_by(10).collect();
    let lsrw = run_g_fit(&walk(BuiltinWalk::Lsrw), &rs, FitShape::Square, TOL).unwrap();
    let srw = run_g_fit(&walk(BuiltinWalk::Srw), &rs, FitShape::Square, TOL).unwrap();
    let ratio = lsrw.a / srw.a;
    let e_l = (lsrw.a / (2.0 / PI) - 1.0).abs();
    let e_s = (srw.a / (1.0 / PI) - 1.0).abs();
    let pass = e_l <= 0.05 && e_s <= 0.05 && (1.9..=2.1).contains(&ratio);
    let bc = |f: &lattice_zeta::FitReport| {
        f.boundary_corrected
            .map_or(String::from("n/a"), |b| format!("{:.5}", b.a))
    };
    verdict(
        3,
        pass,
        &format!(
            "a_lsrw={:.5} (rel {e_l:.3}), a_srw={:.5} (rel {e_s:.3}), ratio={ratio:.6}; \
             with perimeter terms a_lsrw={}, a_srw={}",
            lsrw.a,
            srw.a,
            bc(&lsrw),
            bc(&srw)
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_4_trace_methods_agree() {
    let mut worst = 0.0f64;
    let mut count = 0;
    let mut lattice = Vec::new();
    for (w, r) in [
        (BuiltinWalk::Lsrw, 8usize),
        (BuiltinWalk::Srw, 15),
        (BuiltinWalk::King, 20),
        (BuiltinWalk::Triangular, 25),
        (BuiltinWalk::Knight, 30),
        (BuiltinWalk::Lsrw, 35),
        (BuiltinWalk::King, 44),
    ] {
        lattice.push((walk(w), Shape::Square { side: r }));
    }
    lattice.push((walk(BuiltinWalk::Srw), Shape::Ball { center: Site::new(0, 0), radius: 12 }));
    lattice.push((walk(BuiltinWalk::King), Shape::Rect { width: 10, height: 40 }));
    lattice.push((walk(BuiltinWalk::Triangular), Shape::Ball { center: Site::new(0, 0), radius: 9 }));
    for (w, shape) in &lattice {
        let dom = build_domain(*shape, w).unwrap();
        assert!(dom.len() <= 2000);
        let op = assemble(w, &dom).unwrap();
        let dense = zeta_from_spectrum(&dense_spectrum(&op).unwrap()).value;
        let cg = zeta_exact_with(&op, TOL, ExactStrategy::ColumnCg).unwrap().value;
        worst = worst.max((cg / dense - 1.0).abs());
        count += 1;
    }
    for (k, r) in [6usize, 10, 14, 18, 22, 26, 30, 34, 38, 42].into_iter().enumerate() {
        let env = sample_environment(Extent::square(r), 0.5, 2.0, 100 + k as u64).unwrap();
        let lazy = if k % 2 == 0 { 0.0 } else { 0.5 };
        let dom = build_domain(Shape::Square { side: r }, &walk(BuiltinWalk::Srw)).unwrap();
        let op = assemble(WalkSource::Conductances { env: &env, laziness: lazy }, &dom).unwrap();
        let dense = zeta_from_spectrum(&dense_spectrum(&op).unwrap()).value;
        let cg = zeta_exact_with(&op, TOL, ExactStrategy::ColumnCg).unwrap().value;
        worst = worst.max((cg / dense - 1.0).abs());
        count += 1;
    }

    // Hutchinson coverage at N = 500
    let w = walk(BuiltinWalk::Lsrw);
    let dom = build_domain(Shape::Rect { width: 20, height: 25 }, &w).unwrap();
    assert_eq!(dom.len(), 500);
    let op = assemble(&w, &dom).unwrap();
    let exact = zeta_exact(&op, TOL).unwrap().value;
    let covered = (0..100u64)
        .filter(|&seed| {
            let est = zeta_hutchinson(&op, 64, TOL, seed).unwrap();
            let (lo, hi) = est.confidence_interval(1.959_963_984_540_054).unwrap();
            lo <= exact && exact <= hi
        })
        .count();
    let pass = count == 20 && worst < 1e-7 && covered >= 90;
    verdict(
        4,
        pass,
        &format!("{count} instances, worst dense/column rel diff {worst:.2e}; Hutchinson 95% CI covered {covered}/100"),
    );
    assert!(pass);
}

#[test]
fn criterion_5_kirchhoff() {
    let (mut worst, mut worst_abs) = (0.0f64, 0.0f64);
    let k2 = kirchhoff_check(&SimpleGraph::complete(2)).unwrap();
    let p3 = kirchhoff_check(&SimpleGraph::path(3)).unwrap();
    let mut pass = (k2.k_resistance - 1.0).abs() < 1e-9
        && (k2.k_spectral - 1.0).abs() < 1e-9
        && (p3.k_resistance - 4.0).abs() < 1e-9
        && (p3.k_spectral - 4.0).abs() < 1e-9;
    for seed in 0..20u64 {
        let n = 5 + (seed as usize * 7) % 56;
        let g = SimpleGraph::random_connected(n, 0.15, seed);
        let k = kirchhoff_check(&g).unwrap();
        let d = (k.k_resistance - k.k_spectral).abs();
        worst_abs = worst_abs.max(d);
        worst = worst.max(d / k.k_resistance.max(1.0));
    }
    pass &= worst < 1e-9 && worst_abs < 1e-9;
    verdict(
        5,
        pass,
        &format!(
            "K2={:.12}, P3={:.12} (vol form {:.6}), 20 random graphs worst rel {worst:.1e} (abs {worst_abs:.1e})",
            k2.k_spectral, p3.k_spectral, p3.k_volume
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_6_boundary_layer_scaling() {
    let w = walk(BuiltinWalk::Lsrw);
    let ratios: Vec<f64> = [40usize, 80, 160]
        .iter()
        .map(|&r| {
            let dom = build_domain(Shape::Square { side: r }, &w).unwrap();
            let p = boundary_layer(&dom, 0.25).unwrap();
            p.layer.len() as f64 / (dom.len() as f64).powf(0.875)
        })
        .collect();
    let hi = ratios.iter().cloned().fold(f64::MIN, f64::max);
    let lo = ratios.iter().cloned().fold(f64::MAX, f64::min);
    let pass = hi / lo < 2.0;
    verdict(6, pass, &format!("|E_n|/N^0.875 = {ratios:.4?}, max/min {:.3}", hi / lo));
    assert!(pass);
}

#[test]
fn criterion_7_domination_and_survival() {
    let w = walk(BuiltinWalk::Lsrw);
    let dom = build_domain(Shape::Square { side: 40 }, &w).unwrap();
    let op = assemble(&w, &dom).unwrap();
    let v = dom.center();
    let killed = evolve_killed(&op, &dom, v, 5000).unwrap();
    let full = evolve_full(&w, Site::new(0, 0), 5000).unwrap();
    let violations = (0..=5000)
        .filter(|&t| killed.returns.values[t] > full.values[t] * (1.0 + 1e-12))
        .count();
    let monotone = killed.survival.windows(2).all(|s| s[1] <= s[0]);
    // mass of the fields that produced p_t up to t = 5000
    let mut k = FullSpaceKernel::new(&w, &EvolutionConfig::default());
    let mut mass_err = 0.0f64;
    for _ in 0..2500 {
        k.step().unwrap();
        mass_err = mass_err.max((k.mass() - 1.0).abs());
    }
    let pass = violations == 0 && monotone && mass_err <= 1e-12;
    verdict(
        7,
        pass,
        &format!(
            "domination violations {violations}/5001, survival monotone {monotone}, \
             survival(5000)={:.3e}, full-space mass error {mass_err:.1e}",
            killed.survival[5000]
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_8_faber_krahn_and_iu() {
    let w = walk(BuiltinWalk::Lsrw);
    let mut fk = Vec::new();
    for r in (10..=60).step_by(10) {
        let dom = build_domain(Shape::Square { side: r }, &w).unwrap();
        let op = assemble(&w, &dom).unwrap();
        let g = ground_state(&op, 1e-12).unwrap();
        fk.push(g.lambda1 * (r * r) as f64);
    }
    let fk_ok = fk.iter().all(|x| (0.1..=50.0).contains(x));
    let mut worst: f64 = 0.0;
    for r in [20usize, 30] {
        let dom = build_domain(Shape::Square { side: r }, &w).unwrap();
        let op = assemble(&w, &dom).unwrap();
        let g = ground_state(&op, 1e-12).unwrap();
        for v in [dom.center(), Site::new(2, 2)] {
            let rows = iu_diagnostic(&op, &dom, &g, v, &[r * r, 4 * r * r]).unwrap();
            for row in rows {
                worst = worst.max(row.ratio);
            }
        }
    }
    let pass = fk_ok && worst <= 10.0;
    verdict(
        8,
        pass,
        &format!("lambda1 R^2 for R=10..60: {fk:.4?}; max IU ratio {worst:.4}"),
    );
    assert!(pass);
}

#[test]
fn criterion_9_dimension_sanity() {
    let path = StepSet::path_srw();
    let z = |r: usize| {
        let dom = path_domain(r).unwrap();
        zeta_exact(&assemble(&path, &dom).unwrap(), TOL).unwrap().value
    };
    let z2 = z(2);
    let q100 = z(100) / 1e4;
    let q200 = z(200) / 4e4;
    let pass = (z2 - 8.0 / 3.0).abs() < 1e-12 && (q200 / q100 - 1.0).abs() < 0.25;
    verdict(
        9,
        pass,
        &format!("Z(path 2)={z2:.15}, Z/N^2 = {q100:.5} (R=100), {q200:.5} (R=200)"),
    );
    assert!(pass);
}
