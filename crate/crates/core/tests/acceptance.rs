//! Acceptance gate: one test per release criterion, each printing a
//! PASS/FAIL line. The heavy benchmark behind the last three criteria runs
//! once and is shared.

mod common;

use std::sync::OnceLock;
use std::time::Instant;

use mklearn::bounds::{
    generalization_bound, literature_consistency_report, rademacher_bound, BoundParams,
};
use mklearn::kernels::{GramMatrix, KernelSet};
use mklearn::model::{model_to_string, predict_scores, train, CrossKernelSet};
use mklearn::objective::{dual_gradient, dual_objective, DualPoint, LabeledProblem, Loss, MklConfig};
use mklearn::solver::{solve, SolverConfig};
use mklearn::sweep::{run_sweep, sweep_csv, SweepGrid, SweepRow, SweepScenario};
use mklearn::synth::{bayes_error, generate, Scenario};
use mklearn::weights::{duality_gap, elasticnet_residuals, kernel_norms, recover_elasticnet};
use nalgebra::DVector;
use rand_chacha::rand_core::RngCore;

use common::{fd_gradient, newton_elasticnet, random_problem, raw_from, report, rng, uniform};

const P_GRID: [f64; 5] = [64.0 / 63.0, 4.0 / 3.0, 2.0, 4.0, 64.0];
const MU_GRID: [f64; 3] = [0.0, 0.1, 10.0];

#[test]
fn acceptance_1_solver_matches_projected_gradient_oracle() {
    let started = Instant::now();
    let mut worst = 0.0f64;
    for i in 0..50u64 {
        let mut r = rng(1000 + i);
        let n = 3 + (r.next_u64() % 6) as usize;
        let m = 1 + (r.next_u64() % 3) as usize;
        let p = P_GRID[(i % 5) as usize];
        let mu = MU_GRID[((i / 5) % 3) as usize];
        let loss = if i % 10 == 9 { Loss::Squared } else { Loss::Hinge };
        let config = MklConfig::new(p, mu, 1.0, loss).unwrap();
        let prob = random_problem(&mut r, n, m, config);

        let cfg = SolverConfig {
            tol: 1e-9,
            max_iter: 50_000,
            ..SolverConfig::default()
        };
        let res = solve(&prob, &cfg).unwrap();
        let oracle = raw_from(&prob).solve_projected_gradient();
        worst = worst.max((res.objective - oracle).abs());
    }
    let elapsed = started.elapsed().as_secs_f64();
    report(
        1,
        "solver-vs-oracle",
        worst <= 1e-6 && elapsed < 60.0,
        &format!("max |objective diff| {worst:.3e} over 50 instances, {elapsed:.1}s"),
    );
}

#[test]
fn acceptance_2_gradient_matches_finite_differences() {
    let mut worst = 0.0f64;
    let mut count = 0;
    for idx in 0..105u64 {
        let p = P_GRID[(idx % 5) as usize];
        let mu = MU_GRID[((idx / 5) % 3) as usize];
        let loss = if idx % 2 == 0 { Loss::Hinge } else { Loss::Squared };
        let mut r = rng(2000 + idx);
        let config = MklConfig::new(p, mu, 1.0, loss).unwrap();
        let prob = random_problem(&mut r, 6, 2, config);
        let n = prob.n();

        let alpha: Vec<f64> = (0..n).map(|_| 0.1 + 0.8 * uniform(&mut r)).collect();
        let gamma: Vec<f64> = (0..n)
            .map(|_| if mu > 0.0 { uniform(&mut r) - 0.5 } else { 0.0 })
            .collect();
        let dim = if mu > 0.0 { 2 * n } else { n };
        let x: Vec<f64> = alpha.iter().chain(&gamma).take(dim).copied().collect();

        let f = |x: &[f64]| {
            let a = DVector::from_column_slice(&x[..n]);
            let g = if mu > 0.0 {
                DVector::from_column_slice(&x[n..])
            } else {
                DVector::zeros(n)
            };
            dual_objective(&DualPoint::new(a, g).unwrap(), &prob).unwrap()
        };
        let fd = fd_gradient(f, &x, 1e-6);

        let point = DualPoint::new(
            DVector::from_vec(alpha),
            DVector::from_vec(gamma),
        )
        .unwrap();
        let (ga, gg) = dual_gradient(&point, &prob).unwrap();
        let mut analytic: Vec<f64> = ga.iter().copied().collect();
        if let Some(gg) = gg {
            analytic.extend(gg.iter());
        }

        let scale = analytic.iter().fold(1.0f64, |acc, g| acc.max(g.abs()));
        for (a, b) in analytic.iter().zip(&fd) {
            worst = worst.max((a - b).abs() / scale);
        }
        count += 1;
    }
    report(
        2,
        "gradient-vs-fd",
        worst <= 1e-4,
        &format!("max relative error {worst:.3e} over {count} points"),
    );
}

#[test]
fn acceptance_3_reduces_to_single_kernel_svm_at_p2() {
    let cfg = SolverConfig {
        tol: 1e-10,
        max_iter: 50_000,
        ..SolverConfig::default()
    };
    let mut worst_score = 0.0f64;
    let mut worst_theta = 0.0f64;
    for i in 0..10u64 {
        let mut r = rng(3000 + i);
        let n = 10 + (r.next_u64() % 31) as usize;
        let m = 2 + (r.next_u64() % 2) as usize;
        let config = MklConfig::new(2.0, 0.0, 1.0, Loss::Hinge).unwrap();
        let prob = random_problem(&mut r, n, m, config.clone());

        let summed = GramMatrix::from_matrix(prob.kernels().summed()).unwrap();
        let single_set = KernelSet::new(vec![summed], vec!["sum".into()]).unwrap();
        let labels: Vec<f64> = prob.labels().iter().copied().collect();
        let single = LabeledProblem::new(single_set, labels, config).unwrap();

        let mkl_model = train(&prob, &cfg).unwrap();
        let svm_model = train(&single, &cfg).unwrap();

        let mkl_scores =
            predict_scores(&mkl_model, &CrossKernelSet::from_kernel_set(prob.kernels())).unwrap();
        let svm_scores =
            predict_scores(&svm_model, &CrossKernelSet::from_kernel_set(single.kernels())).unwrap();
        for (a, b) in mkl_scores.iter().zip(svm_scores.iter()) {
            worst_score = worst_score.max((a - b).abs());
        }
        for t in mkl_model.theta.theta() {
            worst_theta = worst_theta.max((t - 1.0).abs());
        }
    }
    report(
        3,
        "svm-reduction",
        worst_score <= 1e-6 && worst_theta <= 1e-10,
        &format!("max |score diff| {worst_score:.3e}, max |theta - 1| {worst_theta:.3e}"),
    );
}

#[test]
fn acceptance_4_duality_gap_closes() {
    let cfg = SolverConfig {
        tol: 1e-8,
        max_iter: 30_000,
        ..SolverConfig::default()
    };
    let cases = [
        (4.0 / 3.0, 20, 0.5),
        (4.0 / 3.0, 50, 1.0),
        (1.45, 30, 1.0),
        (1.6, 35, 1.0),
        (2.0, 50, 0.5),
        (2.0, 30, 2.0),
        (2.4, 45, 1.0),
        (2.8, 25, 0.5),
        (3.2, 50, 1.0),
        (3.5, 40, 2.0),
        (4.0, 50, 1.0),
        (4.0, 24, 0.5),
    ];
    let mut worst_rel = 0.0f64;
    for (i, &(p, n, c)) in cases.iter().enumerate() {
        let mut r = rng(4000 + i as u64);
        let m = 2 + i % 2;
        let config = MklConfig::new(p, 0.0, c, Loss::Hinge).unwrap();
        let prob = random_problem(&mut r, n, m, config);
        let sol = solve(&prob, &cfg).unwrap();
        let gap = duality_gap(&sol, &prob).unwrap();
        assert!(gap >= -1e-8, "gap {gap} negative beyond roundoff");
        worst_rel = worst_rel.max(gap / (1.0 + sol.objective.abs()));
    }
    report(
        4,
        "duality-gap",
        worst_rel <= 1e-4,
        &format!("max gap / (1 + |dual|) = {worst_rel:.3e} over {} instances", cases.len()),
    );
}

#[test]
fn acceptance_5_elasticnet_weights_solve_the_stationarity_system() {
    // End to end: residuals of the recovered weights at trained solutions.
    let cfg = SolverConfig {
        tol: 1e-8,
        max_iter: 30_000,
        ..SolverConfig::default()
    };
    let mut worst_res = 0.0f64;
    for (i, mu) in [0.1, 1.0, 10.0, 0.3, 3.0, 0.05].iter().enumerate() {
        let mut r = rng(5000 + i as u64);
        let n = 8 + (r.next_u64() % 13) as usize;
        let m = 1 + (r.next_u64() % 3) as usize;
        let config = MklConfig::new(4.0 / 3.0, *mu, 1.0, Loss::Hinge).unwrap();
        let prob = random_problem(&mut r, n, m, config);
        let model = train(&prob, &cfg).unwrap();
        let norms = kernel_norms(&model.v, prob.kernels()).unwrap();
        for res in elasticnet_residuals(model.theta.theta(), &norms, *mu, prob.config().en_eps) {
            worst_res = worst_res.max(res.abs());
        }
    }

    // Against an independent damped-Newton root-finder on small systems.
    let systems: [(&[f64], f64); 6] = [
        (&[1.3], 0.7),
        (&[0.4, 2.2], 0.05),
        (&[0.4, 2.2], 5.0),
        (&[0.05, 1.0, 3.0], 0.7),
        (&[1.5, 1.5, 1.5], 0.2),
        (&[0.9, 1.1, 2.7], 12.0),
    ];
    let eps = MklConfig::DEFAULT_EN_EPS;
    let mut worst_newton = 0.0f64;
    for (h, mu) in systems {
        let norms = mklearn::weights::DualKernelNorms::new(h.to_vec()).unwrap();
        let ours = recover_elasticnet(&norms, mu, eps, 1e-10, 100_000).unwrap();
        let start: Vec<f64> = h.iter().map(|_| 1.0 / (mu + h.len() as f64)).collect();
        let newton = newton_elasticnet(h, mu, eps, &start)
            .or_else(|| newton_elasticnet(h, mu, eps, &vec![0.5 / mu; h.len()]))
            .expect("independent root-finder converged");
        for (a, b) in ours.theta().iter().zip(&newton) {
            worst_newton = worst_newton.max((a - b).abs());
        }
    }
    report(
        5,
        "elasticnet-roots",
        worst_res <= 1e-8 && worst_newton <= 1e-6,
        &format!("max residual {worst_res:.3e}, max diff vs Newton {worst_newton:.3e}"),
    );
}

#[test]
fn acceptance_6_bound_calculator_reproduces_scaling_claims() {
    let n = 200;
    let mut ok = true;
    let mut notes = Vec::new();

    // l1 scaling across M: library ratios against plain-arithmetic ratios.
    let l1 = |m: usize| {
        rademacher_bound(&BoundParams::single_exponent(m, n, 1.0).unwrap())
    };
    let l1_oracle = |m: usize| {
        let mf = m as f64;
        (2.0 * mf.ln() / n as f64).sqrt() + (1.0 / n as f64).sqrt()
    };
    for m in [16usize, 64] {
        let got = l1(m) / l1(4);
        let want = l1_oracle(m) / l1_oracle(4);
        if (got / want - 1.0).abs() > 0.05 {
            ok = false;
            notes.push(format!("l1 ratio M={m}: {got} vs {want}"));
        }
    }

    // l4/3 block norm: prefactor M^(1/4) on top of the l1 curve, and the
    // whole bound scales as 1/sqrt(n).
    for m in [4usize, 16, 64] {
        let quarter = rademacher_bound(&BoundParams::single_exponent(m, n, 4.0 / 3.0).unwrap());
        let want = (m as f64).powf(0.25) * l1(m);
        if ((quarter - want) / want).abs() > 1e-12 {
            ok = false;
            notes.push(format!("l4/3 prefactor M={m}"));
        }
    }
    let r_n = rademacher_bound(&BoundParams::single_exponent(16, 100, 4.0 / 3.0).unwrap());
    let r_4n = rademacher_bound(&BoundParams::single_exponent(16, 400, 4.0 / 3.0).unwrap());
    if ((r_n / r_4n - 2.0).abs()) > 1e-12 {
        ok = false;
        notes.push("1/sqrt(n) scaling".into());
    }

    // Elastic-net interpolation endpoints and growth cap.
    for m in [4usize, 16, 64] {
        let rows = literature_consistency_report(m, n).unwrap();
        let l1_row = rows.iter().find(|r| r.label == "l1").unwrap().general;
        let elastic: Vec<&mklearn::bounds::ReportRow> =
            rows.iter().filter(|r| r.label.starts_with("elastic")).collect();
        if elastic.first().unwrap().general != l1_row {
            ok = false;
            notes.push(format!("elastic c1=1 != l1 at M={m}"));
        }
        let cap = (m as f64).sqrt() * (1.0 + 1e-12);
        for pair in elastic.windows(2) {
            if pair[1].general < pair[0].general || pair[1].general > cap * l1_row {
                ok = false;
                notes.push(format!("elastic growth at M={m}"));
            }
        }
        let last = elastic.last().unwrap().general;
        if ((last - (m as f64).sqrt() * l1_row) / last).abs() > 1e-12 {
            ok = false;
            notes.push(format!("elastic c1=0 endpoint at M={m}"));
        }
    }

    // Exact evaluations against independent arithmetic.
    let mut worst = 0.0f64;
    for m in [2usize, 4, 16, 64] {
        for n in [50usize, 1000] {
            for (p, q, c1, c2) in [
                (1.0, 1.0, 1.0, 0.0),
                (4.0 / 3.0, 4.0 / 3.0, 1.0, 0.0),
                (2.0, 2.0, 1.0, 0.0),
                (1.0, 2.0, 0.3, 0.7),
                (2.0, 4.0, 0.5, 0.5),
            ] {
                let params = BoundParams::new(m, n, p, q, c1, c2).unwrap();
                let got = rademacher_bound(&params);
                let mf = m as f64;
                let nf = n as f64;
                let pre = mf / (c1 * (mf.ln() / p).exp() + c2 * (mf.ln() / q).exp());
                let want = if p >= 2.0 && q >= 2.0 {
                    pre * (1.0 / nf).sqrt()
                } else {
                    pre * ((2.0 * mf.ln() / nf).sqrt() + (1.0 / nf).sqrt())
                };
                worst = worst.max(((got - want) / want).abs());

                let with_risk = params.with_risk(0.17, 0.9, 0.07).unwrap();
                let total = generalization_bound(&with_risk, got).unwrap();
                let want_total =
                    0.17 + 2.0 * 0.9 * got + (8.0 * (2.0 / 0.07f64).ln() / nf).sqrt();
                worst = worst.max(((total - want_total) / want_total).abs());
            }
        }
    }
    if worst > 1e-12 {
        ok = false;
        notes.push(format!("arithmetic oracle diff {worst:.3e}"));
    }

    report(
        6,
        "bound-calculator",
        ok,
        &if notes.is_empty() {
            format!("all scaling claims hold, arithmetic diff {worst:.3e}")
        } else {
            notes.join("; ")
        },
    );
}

struct Experiment {
    rows: Vec<SweepRow>,
    bayes: f64,
    elapsed: f64,
}

static EXPERIMENT: OnceLock<Experiment> = OnceLock::new();

/// Twenty-seed benchmark over both extreme scenarios and three exponents;
/// shared by the last three criteria.
fn experiment() -> &'static Experiment {
    EXPERIMENT.get_or_init(|| {
        let grid = SweepGrid {
            scenario: SweepScenario {
                m: 6,
                block_dim: 5,
                bayes_target: 0.1,
                n_train: 500,
                n_test: 2000,
            },
            nus: vec![0.0, 1.0],
            ps: vec![64.0 / 63.0, 4.0 / 3.0, 64.0],
            mus: vec![0.0],
            // A tight box keeps most training points at the cap, so the
            // learned weights respond to the raw per-block statistics and
            // the sparse/uniform contrast between exponents shows cleanly.
            seeds: (0..20).collect(),
            c: 0.01,
            loss: Loss::Hinge,
            solver: SolverConfig {
                tol: 1e-5,
                max_iter: 1500,
                ..SolverConfig::default()
            },
        };
        let started = Instant::now();
        let rows = run_sweep(&grid).unwrap();
        assert!(rows.iter().all(|r| r.seeds_ok == 20), "replicates failed");
        let bayes = bayes_error(&Scenario::new(6, 5, 0.0, 0.1, 500, 2000, 0).unwrap());
        Experiment {
            rows,
            bayes,
            elapsed: started.elapsed().as_secs_f64(),
        }
    })
}

fn mean_error(rows: &[SweepRow], nu: f64, p: f64) -> f64 {
    rows.iter()
        .find(|r| r.nu == nu && (r.p - p).abs() < 1e-12)
        .expect("cell present")
        .mean_error
}

#[test]
fn acceptance_7_sparsity_ordering_matches_scenario() {
    let exp = experiment();
    let rows = &exp.rows;
    let near_l1 = 64.0 / 63.0;

    let sparse = [
        mean_error(rows, 1.0, near_l1),
        mean_error(rows, 1.0, 4.0 / 3.0),
        mean_error(rows, 1.0, 64.0),
    ];
    let uniform = [
        mean_error(rows, 0.0, near_l1),
        mean_error(rows, 0.0, 4.0 / 3.0),
        mean_error(rows, 0.0, 64.0),
    ];
    let best_sparse = sparse.iter().copied().fold(f64::INFINITY, f64::min);
    let best_uniform = uniform.iter().copied().fold(f64::INFINITY, f64::min);

    let ordering = sparse[0] <= sparse[2] && uniform[2] <= uniform[0];
    let robust = (sparse[1] - best_sparse) <= 0.02 && (uniform[1] - best_uniform) <= 0.02;
    let in_time = exp.elapsed < 600.0;
    report(
        7,
        "scenario-ordering",
        ordering && robust && in_time,
        &format!(
            "sparse errs (p->1, 4/3, p->inf) = {:.4}/{:.4}/{:.4}, uniform = {:.4}/{:.4}/{:.4}, {:.0}s",
            sparse[0], sparse[1], sparse[2], uniform[0], uniform[1], uniform[2], exp.elapsed
        ),
    );
}

#[test]
fn acceptance_8_best_model_reaches_bayes_error() {
    let exp = experiment();
    let near_l1 = 64.0 / 63.0;
    let mut worst_excess = 0.0f64;
    for nu in [0.0, 1.0] {
        let best = [near_l1, 4.0 / 3.0, 64.0]
            .iter()
            .map(|&p| mean_error(&exp.rows, nu, p))
            .fold(f64::INFINITY, f64::min);
        worst_excess = worst_excess.max((best - exp.bayes).abs());
    }
    report(
        8,
        "bayes-consistency",
        worst_excess <= 0.03,
        &format!("max |best - bayes| = {worst_excess:.4} (bayes {:.4})", exp.bayes),
    );
}

#[test]
fn acceptance_9_pipelines_are_deterministic() {
    let run_pipeline = || {
        let scn = Scenario::new(3, 4, 0.7, 0.15, 60, 40, 77).unwrap();
        let data = generate(&scn).unwrap();
        let config = MklConfig::new(4.0 / 3.0, 0.5, 1.0, Loss::Hinge).unwrap();
        let prob = LabeledProblem::new(data.kernels, data.y_train, config).unwrap();
        let model = train(&prob, &SolverConfig::default()).unwrap();
        let scores = predict_scores(&model, &data.cross).unwrap();
        let bits: Vec<u64> = scores.iter().map(|s| s.to_bits()).collect();
        (model_to_string(&model).unwrap(), bits)
    };
    let (text_a, bits_a) = run_pipeline();
    let (text_b, bits_b) = run_pipeline();

    let grid = SweepGrid {
        scenario: SweepScenario {
            m: 2,
            block_dim: 3,
            bayes_target: 0.2,
            n_train: 30,
            n_test: 40,
        },
        nus: vec![0.3],
        ps: vec![4.0 / 3.0],
        mus: vec![0.0, 0.5],
        seeds: vec![1, 2],
        c: 1.0,
        loss: Loss::Hinge,
        solver: SolverConfig::default(),
    };
    let csv_a = sweep_csv(&run_sweep(&grid).unwrap());
    let csv_b = sweep_csv(&run_sweep(&grid).unwrap());

    report(
        9,
        "determinism",
        text_a == text_b && bits_a == bits_b && csv_a == csv_b,
        "model text, score bits, and sweep CSV byte-identical across reruns",
    );
}
