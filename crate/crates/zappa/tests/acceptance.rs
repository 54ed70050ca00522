//! Acceptance suite: one test per shipped guarantee, each printing a
//! pass/fail line (run with `--nocapture` to see them all). Tolerances are
//! pinned here, not configurable; docs/convergence.md records the
//! grid-refinement study behind the measured-threshold choices.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use zappa::config::RunConfig;
use zappa::diagnostics::{
    compare_micro_macro, defect_residual, log_log_slope, shape_check, transient_decay,
};
use zappa::kernel::JumpKernel;
use zappa::macroscale::{solve_spectral, MacroField};
use zappa::manifold::{block_operator, derive, zero_eigenspace};
use zappa::mc::{fit_transport_coefficients, simulate, McConfig};
use zappa::micro::{initial_condition, InitialCondition, MicroRunConfig, Simulator};
use zappa::pipeline::Pipeline;
use zappa::poly::YPolynomial;
use zappa::profile::{CrossSection, VelocityProfile};
use zappa::rational::{rat, rat_int};

struct Criterion {
    name: &'static str,
    budget_s: f64,
    t0: Instant,
}

impl Criterion {
    fn start(name: &'static str, budget_s: f64) -> Self {
        Self {
            name,
            budget_s,
            t0: Instant::now(),
        }
    }

    fn finish(self, pass: bool, detail: String) {
        let elapsed = self.t0.elapsed().as_secs_f64();
        let in_budget = elapsed < self.budget_s;
        let verdict = if pass && in_budget { "PASS" } else { "FAIL" };
        println!(
            "{} [{verdict}] {detail} (runtime {elapsed:.2}s, budget {}s)",
            self.name, self.budget_s
        );
        assert!(pass, "{}: {detail}", self.name);
        assert!(
            in_budget,
            "{}: runtime {elapsed:.2}s exceeds {}s",
            self.name, self.budget_s
        );
    }
}

#[test]
fn criterion_1_exact_coefficients() {
    let c = Criterion::start("criterion 1 (exact coefficients)", 1.0);
    let cs = CrossSection::gauss_legendre(16).unwrap();
    let sm = derive(
        &JumpKernel::Exponential,
        &VelocityProfile::parabolic(),
        2,
        &cs,
    )
    .unwrap();
    let a = sm.a_exact.as_ref().expect("polynomial path must be exact");
    let v = sm.v_exact.as_ref().expect("polynomial path must be exact");
    let a_ok = a[0] == rat(-2, 3) && a[1] == rat(28, 45);
    let v1_ok = v[1] == YPolynomial::new(vec![rat(-1, 3), rat_int(0), rat_int(1)]);
    let v2_ok = v[2]
        == YPolynomial::new(vec![
            rat(22, 45),
            rat_int(0),
            rat(-8, 3),
            rat_int(0),
            rat_int(2),
        ]);
    c.finish(
        a_ok && v1_ok && v2_ok,
        format!(
            "A1 = {}, A2 = {}, V1/V2 exact: {}",
            zappa::rational::rat_to_string(&a[0]),
            zappa::rational::rat_to_string(&a[1]),
            v1_ok && v2_ok
        ),
    );
}

/// Random polynomial of degree <= 6, shifted to stay above 0.2 on [-1, 1].
fn random_positive_profile(rng: &mut ChaCha8Rng) -> VelocityProfile {
    let mut coeffs: Vec<f64> = (0..7).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let partial = VelocityProfile::from_f64_coeffs(&coeffs).unwrap();
    let min = match &partial {
        VelocityProfile::Polynomial(p) => p.grid_min(2000),
        _ => unreachable!(),
    };
    coeffs[0] += 0.2 - min.min(0.0);
    VelocityProfile::from_f64_coeffs(&coeffs).unwrap()
}

#[test]
fn criterion_2_path_equivalence() {
    let c = Criterion::start("criterion 2 (path equivalence)", 10.0);
    let cs = CrossSection::gauss_legendre(16).unwrap();
    let kernel = JumpKernel::Exponential;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed2);
    let mut worst: f64 = 0.0;
    let mut profiles = vec![VelocityProfile::parabolic()];
    profiles.extend((0..20).map(|_| random_positive_profile(&mut rng)));
    for v in &profiles {
        let sm = derive(&kernel, v, 2, &cs).unwrap();
        let b = block_operator(&kernel, v, 2, &cs).unwrap();
        let es = zero_eigenspace(&b, &cs).unwrap();
        for (a, b) in sm.a.iter().zip(&es.a) {
            worst = worst.max((a - b).abs());
        }
        for n in 0..=2 {
            for (x, y) in sm.v[n].values().iter().zip(es.v[n].values()) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    c.finish(
        worst <= 1e-11,
        format!(
            "hierarchy vs eigenspace over {} profiles, worst |diff| = {worst:.3e} <= 1e-11",
            profiles.len()
        ),
    );
}

#[test]
fn criterion_3_monte_carlo_cross_validation() {
    let c = Criterion::start("criterion 3 (monte carlo cross-validation)", 60.0);
    let cfg = McConfig::new(
        100_000,
        20260811,
        (0..=8).map(|k| k as f64 * 25.0).collect(),
    );
    let stats = simulate(&cfg, &VelocityProfile::parabolic()).unwrap();
    let fit = fit_transport_coefficients(&stats).unwrap();
    assert_eq!(fit.window, (100.0, 200.0));
    let drift_target = 2.0 / 3.0;
    let var_target = 56.0 / 45.0;
    let drift_z = (fit.drift - drift_target) / fit.drift_se;
    let var_z = (fit.var_rate - var_target) / fit.var_rate_se;
    c.finish(
        drift_z.abs() <= 3.0 && var_z.abs() <= 3.0,
        format!(
            "drift {:.5} (target {:.5}, z = {:+.2}), var rate {:.5} (target {:.5}, z = {:+.2}), both within 3 se",
            fit.drift, drift_target, drift_z, fit.var_rate, var_target, var_z
        ),
    );
}

fn reference_micro() -> (Simulator, Vec<zappa::micro::MicroField>) {
    let cfg = RunConfig::default();
    let grid = cfg.build_grid().unwrap();
    let sim = Simulator::new(
        grid,
        &JumpKernel::Exponential,
        &VelocityProfile::parabolic(),
    )
    .unwrap();
    let ic = initial_condition(&cfg.build_ic().unwrap(), sim.grid()).unwrap();
    let run = sim.run(&cfg.micro_run_config(), &ic).unwrap();
    (sim, run.snapshots)
}

#[test]
fn criterion_4_micro_macro_agreement() {
    let c = Criterion::start("criterion 4 (micro/macro agreement)", 300.0);
    let (sim, snapshots) = reference_micro();
    let cs = &sim.grid().cs;
    let sm = derive(
        &JumpKernel::Exponential,
        &VelocityProfile::parabolic(),
        2,
        cs,
    )
    .unwrap();
    let u0 = MacroField::new(snapshots[0].cross_mean_profile(cs), 0.0);
    let macros: Vec<MacroField> = snapshots
        .iter()
        .map(|s| solve_spectral(sm.a1(), sm.a2(), &u0, sim.grid().length, s.time).unwrap())
        .collect();
    let report = compare_micro_macro(&snapshots, &macros, cs).unwrap();
    let at_50 = report.l2_rel[report.times.iter().position(|&t| t == 50.0).unwrap()];
    c.finish(
        at_50 <= 1e-2,
        format!(
            "relative L2 error at t = 50: {at_50:.3e} <= 1e-2 (worst over times {:.3e})",
            report.worst_l2
        ),
    );
}

#[test]
fn criterion_5_emergence_rate() {
    let c = Criterion::start("criterion 5 (emergence rate)", 10.0);
    let cs = CrossSection::gauss_legendre(16).unwrap();
    let grid =
        zappa::micro::MicroGrid::new(25.0, 64, zappa::micro::Boundary::Periodic, cs).unwrap();
    let sim = Simulator::new(
        grid,
        &JumpKernel::Exponential,
        &VelocityProfile::parabolic(),
    )
    .unwrap();
    let ic = initial_condition(
        &InitialCondition::Table {
            x_values: None,
            y_coeffs: Some(vec![1.0, 1.0]),
        },
        sim.grid(),
    )
    .unwrap();
    let outputs: Vec<f64> = (0..=30).map(|k| k as f64 * 0.5).collect();
    let run = sim
        .run(
            &MicroRunConfig {
                dt: 0.05,
                t_end: 15.0,
                output_times: outputs,
            },
            &ic,
        )
        .unwrap();
    let report = transient_decay(&run.snapshots, &sim.grid().cs).unwrap();
    let rate = report.rate.expect("off-manifold start");
    c.finish(
        (rate - 1.0).abs() <= 1e-6,
        format!(
            "fitted off-manifold decay rate {rate:.9}, |rate - 1| = {:.2e} <= 1e-6",
            (rate - 1.0).abs()
        ),
    );
}

#[test]
fn criterion_6_third_order_residual_scaling() {
    let c = Criterion::start("criterion 6 (third-order residual scaling)", 600.0);
    // The criterion fixes the widths and the order claim; grid and matched
    // time are pinned by the convergence study (docs/convergence.md):
    // nx = 2048 keeps spatial-discretization residual well below the
    // third-order signal at sigma = 10, and t = 10 is past the transient
    // while limiting diffusive widening.
    let sigmas = [10.0, 20.0, 40.0];
    let mut normalized = Vec::new();
    for &sigma in &sigmas {
        let cfg = RunConfig::from_toml_with_overrides(
            "",
            &[
                "grid.nx=2048".into(),
                format!("micro.ic.sigma={sigma}"),
                "micro.t_end=10.0".into(),
                "micro.output_times=[10.0]".into(),
            ],
        )
        .unwrap();
        let grid = cfg.build_grid().unwrap();
        let sim = Simulator::new(
            grid,
            &JumpKernel::Exponential,
            &VelocityProfile::parabolic(),
        )
        .unwrap();
        let ic = initial_condition(&cfg.build_ic().unwrap(), sim.grid()).unwrap();
        let run = sim.run(&cfg.micro_run_config(), &ic).unwrap();
        let sm = derive(
            &JumpKernel::Exponential,
            &VelocityProfile::parabolic(),
            2,
            &sim.grid().cs,
        )
        .unwrap();
        let res = defect_residual(&run.snapshots[0], &sm, &sim).unwrap();
        // Unit-mass starts have amplitude ~ 1/sigma; scaling by sigma maps
        // onto the fixed-amplitude self-similar family (the dynamics are
        // linear, so the rescaling is exact).
        normalized.push(res.norm_inf * sigma);
    }
    let slope = log_log_slope(&sigmas, &normalized).unwrap();
    let r1 = normalized[0] / normalized[1];
    let r2 = normalized[1] / normalized[2];
    c.finish(
        (slope + 3.0).abs() <= 0.4 && (5.5..=11.0).contains(&r1) && (5.5..=11.0).contains(&r2),
        format!(
            "log-log slope {slope:.3} within -3 +/- 0.4; halving ratios {r1:.2}, {r2:.2} within [5.5, 11]"
        ),
    );
}

#[test]
fn criterion_7_conservation_and_determinism() {
    let c = Criterion::start("criterion 7 (conservation and determinism)", 120.0);
    // Mass over exactly 1000 periodic steps.
    let cfg = RunConfig::default();
    let grid = cfg.build_grid().unwrap();
    let sim = Simulator::new(
        grid,
        &JumpKernel::Exponential,
        &VelocityProfile::parabolic(),
    )
    .unwrap();
    let ic = initial_condition(&cfg.build_ic().unwrap(), sim.grid()).unwrap();
    let m0 = ic.mass(sim.grid());
    let mut u = ic;
    for _ in 0..1000 {
        u = sim.step(&u, 0.05).unwrap();
    }
    let drift = ((u.mass(sim.grid()) - m0) / m0).abs();

    // Byte-identical outputs across thread counts, seeds fixed.
    let small = RunConfig::from_toml_with_overrides(
        "",
        &[
            "grid.nx=256".into(),
            "grid.length=100.0".into(),
            "micro.t_end=5.0".into(),
            "micro.output_times=[0.0, 5.0]".into(),
            "micro.ic.center=50.0".into(),
            "micro.ic.sigma=8.0".into(),
            "mc.n_particles=20000".into(),
            "mc.t_outputs=[0.0, 5.0, 10.0, 15.0, 20.0]".into(),
        ],
    )
    .unwrap();
    let mut dirs = Vec::new();
    for threads in [1usize, 4] {
        let dir = tempfile::tempdir().unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        let pipeline = Pipeline::new(small.clone(), dir.path().to_path_buf()).unwrap();
        pool.install(|| {
            pipeline.cmd_micro().unwrap();
            pipeline.cmd_mc().unwrap();
        });
        dirs.push(dir);
    }
    let mut identical = true;
    for name in [
        "micro_snapshots.csv",
        "micro_summary.json",
        "mc_stats.csv",
        "mc_summary.json",
    ] {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(name)).unwrap();
        identical &= a == b;
    }
    c.finish(
        drift <= 1e-10 && identical,
        format!(
            "relative mass drift {drift:.2e} <= 1e-10 over 1000 steps; outputs byte-identical across 1 vs 4 threads: {identical}"
        ),
    );
}

#[test]
fn criterion_8_quasistationary_shape() {
    let c = Criterion::start("criterion 8 (quasistationary shape)", 120.0);
    let cfg = RunConfig::from_toml_with_overrides(
        "",
        &[
            "micro.t_end=20.0".into(),
            "micro.output_times=[20.0]".into(),
        ],
    )
    .unwrap();
    let grid = cfg.build_grid().unwrap();
    let sim = Simulator::new(
        grid,
        &JumpKernel::Exponential,
        &VelocityProfile::parabolic(),
    )
    .unwrap();
    let ic = initial_condition(&cfg.build_ic().unwrap(), sim.grid()).unwrap();
    let run = sim.run(&cfg.micro_run_config(), &ic).unwrap();
    let sm = derive(
        &JumpKernel::Exponential,
        &VelocityProfile::parabolic(),
        2,
        &sim.grid().cs,
    )
    .unwrap();
    let report = shape_check(&run.snapshots[0], &sm, sim.grid()).unwrap();
    c.finish(
        report.relative_deviation <= 0.1 && !report.pre_emergent,
        format!(
            "relative deviation from U + V1 Ux + V2 Uxx at t = 20: {:.4e} <= 0.1",
            report.relative_deviation
        ),
    );
}
