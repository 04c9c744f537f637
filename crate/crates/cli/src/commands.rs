//! One function per subcommand. Every command validates its inputs fully
//! before writing anything, writes through the atomic helpers, and drops a
//! manifest next to each file output.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mklearn::bounds::{
    generalization_bound, literature_consistency_report, rademacher_bound,
    rademacher_bound_general, rademacher_bound_improved, BoundParams,
};
use mklearn::kernels::{
    self, check_psd, compute_gram, name_kernels, GramMatrix, KernelKind, KernelSet, KernelSpec,
    SampleSet, DEFAULT_PSD_TOL,
};
use mklearn::model::{
    accuracy, auc, load_model, model_to_string, partial_auc, predict_scores, train,
    CrossKernelSet,
};
use mklearn::objective::{LabeledProblem, Loss, MklConfig};
use mklearn::solver::SolverConfig;
use mklearn::sweep::{run_sweep, sweep_csv, SweepGrid, SweepScenario};
use mklearn::synth::{bayes_error, generate, Scenario};

use crate::fileio::{self, atomic_write, atomically};
use crate::manifest::Manifest;
use crate::{
    BoundArgs, Command, EvalArgs, Failure, GramArgs, PredictArgs, SweepArgs, SynthArgs,
    TrainArgs, WeightsArgs,
};

pub fn run(cmd: Command) -> Result<i32, Failure> {
    match cmd {
        Command::Gram(a) => gram(a),
        Command::Train(a) => train_cmd(a),
        Command::Predict(a) => predict(a),
        Command::Weights(a) => weights(a),
        Command::Bound(a) => bound(a),
        Command::Synth(a) => synth(a),
        Command::Sweep(a) => sweep(a),
        Command::Eval(a) => eval(a),
    }
}

/// `1` and `inf` are the symbolic endpoints and map to the solvable
/// surrogates 64/63 and 64; a `num/den` fraction or a plain real is taken
/// literally. The symbolic `1` insists on a ridge term: the exact l1 block
/// norm only arises as the elastic net's p = 1 + epsilon limit.
fn parse_p(token: &str, ridge_present: bool) -> Result<f64, Failure> {
    let token = token.trim();
    match token {
        "1" => {
            if ridge_present {
                Ok(64.0 / 63.0)
            } else {
                Err(Failure::validation(
                    "--p 1 needs --mu > 0 (elastic net); for plain block norms pass an \
                     explicit exponent such as 64/63",
                ))
            }
        }
        "inf" => Ok(64.0),
        other => {
            if let Some((num, den)) = other.split_once('/') {
                let num: f64 = num.trim().parse().map_err(|_| bad_p(other))?;
                let den: f64 = den.trim().parse().map_err(|_| bad_p(other))?;
                if den == 0.0 {
                    return Err(bad_p(other));
                }
                Ok(num / den)
            } else {
                other.parse().map_err(|_| bad_p(other))
            }
        }
    }
}

fn bad_p(token: &str) -> Failure {
    Failure::validation(format!(
        "exponent `{token}` is not a real, a fraction, or one of the tokens 1, inf"
    ))
}

fn parse_loss(name: &str) -> Result<Loss, Failure> {
    match name {
        "hinge" => Ok(Loss::Hinge),
        "squared" => Ok(Loss::Squared),
        other => Err(Failure::validation(format!(
            "loss `{other}` is neither hinge nor squared"
        ))),
    }
}

fn parse_reals(list: &str, flag: &str) -> Result<Vec<f64>, Failure> {
    list.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse().map_err(|_| {
                Failure::validation(format!("{flag}: `{t}` is not a number"))
            })
        })
        .collect()
}

/// A bare count N means seeds 0..N; any comma makes it an explicit list.
fn parse_seeds(list: &str) -> Result<Vec<u64>, Failure> {
    let bad = |t: &str| Failure::validation(format!("--seeds: `{t}` is not an integer"));
    if list.contains(',') {
        list.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| t.parse().map_err(|_| bad(t)))
            .collect()
    } else {
        let count: u64 = list.trim().parse().map_err(|_| bad(list))?;
        Ok((0..count).collect())
    }
}

/// File stems when they are unique and whitespace-free, else positional.
fn kernel_names(paths: &[PathBuf]) -> Vec<String> {
    let stems: Vec<String> = paths
        .iter()
        .map(|p| {
            p.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        })
        .collect();
    let mut seen = HashSet::new();
    let usable = stems
        .iter()
        .all(|s| !s.is_empty() && !s.contains(char::is_whitespace) && seen.insert(s));
    if usable {
        stems
    } else {
        name_kernels(paths.len())
    }
}

fn write_gram(k: &GramMatrix, path: &Path, binary: bool) -> Result<(), Failure> {
    atomically(path, |tmp| {
        if binary {
            kernels::io::write_gram_binary(k, tmp)
        } else {
            kernels::io::write_gram_text(k, tmp)
        }
        .map_err(Failure::from)
    })
}

fn gram(a: GramArgs) -> Result<i32, Failure> {
    let kind = match a.kernel.as_str() {
        "linear" => KernelKind::Linear,
        "rbf" => KernelKind::Rbf { bandwidth: a.bandwidth },
        "poly" => KernelKind::Polynomial { degree: a.degree, offset: a.offset },
        "spectrum" => KernelKind::Spectrum { k: a.k },
        "precomputed" => {
            let path = a
                .input
                .clone()
                .ok_or_else(|| Failure::usage("--kernel precomputed needs --input"))?;
            KernelKind::Precomputed { path }
        }
        other => {
            return Err(Failure::validation(format!(
                "kernel `{other}` is not linear, rbf, poly, spectrum, or precomputed"
            )))
        }
    };
    let spec = KernelSpec::new(kind, !a.no_normalize)?;

    let samples = match (&a.data, &a.strings) {
        (Some(_), Some(_)) => {
            return Err(Failure::usage("--data and --strings are mutually exclusive"))
        }
        (Some(p), None) => SampleSet::Vectors(fileio::read_vectors(p)?),
        (None, Some(p)) => SampleSet::Strings(fileio::read_strings(p)?),
        (None, None) => {
            if matches!(spec.kind, KernelKind::Precomputed { .. }) {
                SampleSet::Vectors(Vec::new())
            } else {
                return Err(Failure::usage("one of --data or --strings is required"));
            }
        }
    };

    let gram = compute_gram(&spec, &samples)?;
    if let Some(report) = check_psd(&gram, DEFAULT_PSD_TOL) {
        if !report.psd {
            eprintln!(
                "mklearn: warning: smallest eigenvalue {:e} is below the PSD slack {:e}",
                report.min_eigenvalue, report.threshold
            );
        }
    }
    write_gram(&gram, &a.out, a.binary)?;

    let mut man = Manifest::new("gram");
    man.push("param.kernel", &a.kernel);
    match &spec.kind {
        KernelKind::Rbf { bandwidth } => man.push("param.bandwidth", bandwidth),
        KernelKind::Polynomial { degree, offset } => {
            man.push("param.degree", degree);
            man.push("param.offset", offset);
        }
        KernelKind::Spectrum { k } => man.push("param.k", k),
        _ => {}
    }
    man.push("param.normalize", !a.no_normalize);
    man.push("param.binary", a.binary);
    man.push("param.n", gram.n());
    if let Some(p) = &a.data {
        man.input("data", p)?;
    }
    if let Some(p) = &a.strings {
        man.input("strings", p)?;
    }
    if let Some(p) = &a.input {
        man.input("gram", p)?;
    }
    man.push("output.gram", a.out.display());
    man.write_for(&a.out)?;
    Ok(0)
}

fn train_cmd(a: TrainArgs) -> Result<i32, Failure> {
    let p_effective = parse_p(&a.p, a.mu > 0.0)?;
    let loss = parse_loss(&a.loss)?;
    let labels = fileio::read_labels(&a.labels)?;
    let mut grams = Vec::with_capacity(a.kernels.len());
    for path in &a.kernels {
        grams.push(kernels::io::read_gram(path)?);
    }
    let set = KernelSet::new(grams, kernel_names(&a.kernels))?;
    let config = MklConfig::new(p_effective, a.mu, a.c, loss)?;
    let prob = LabeledProblem::new(set, labels, config)?;
    let solver = SolverConfig {
        tol: a.tol,
        max_iter: a.max_iter,
        ..SolverConfig::default()
    };
    let model = train(&prob, &solver)?;
    atomic_write(&a.out, model_to_string(&model)?.as_bytes())?;

    let diag = model.diagnostics.as_ref().expect("train fills diagnostics");
    let mut man = Manifest::new("train");
    man.push("param.p_requested", &a.p);
    man.push("param.p_effective", p_effective);
    man.push("param.mu", a.mu);
    man.push("param.c", a.c);
    man.push("param.loss", &a.loss);
    man.push("param.tol", a.tol);
    man.push("param.max_iter", a.max_iter);
    man.push("param.n", prob.n());
    man.push("param.kernels", prob.m());
    for (i, path) in a.kernels.iter().enumerate() {
        man.input(&format!("kernel{}", i + 1), path)?;
    }
    man.input("labels", &a.labels)?;
    man.push("output.model", a.out.display());
    man.push("result.objective", diag.objective);
    man.push("result.iterations", diag.iterations);
    man.push("result.converged", diag.converged);
    man.push("result.projected_grad_norm", diag.projected_grad_norm);
    man.push("result.duality_gap", diag.duality_gap);
    man.write_for(&a.out)?;

    if diag.converged {
        Ok(0)
    } else {
        eprintln!(
            "mklearn: solver stopped before tolerance (projected gradient {:e}); model written anyway",
            diag.projected_grad_norm
        );
        Ok(5)
    }
}

fn predict(a: PredictArgs) -> Result<i32, Failure> {
    let model = load_model(&a.model)?;
    let mut mats = Vec::with_capacity(a.crosses.len());
    for path in &a.crosses {
        mats.push(kernels::io::read_cross(path)?);
    }
    let cross = CrossKernelSet::new(mats)?;
    let labels = a.labels.as_ref().map(|p| fileio::read_labels(p)).transpose()?;
    let scores = predict_scores(&model, &cross)?;
    let scores: Vec<f64> = scores.iter().copied().collect();

    let mut man = Manifest::new("predict");
    man.input("model", &a.model)?;
    for (i, path) in a.crosses.iter().enumerate() {
        man.input(&format!("cross{}", i + 1), path)?;
    }
    man.push("param.fpr", a.fpr);
    man.push("param.n_test", scores.len());
    man.push("output.scores", a.out.display());

    if let Some(labels) = &labels {
        let acc = accuracy(&scores, labels)?;
        let roc = auc(&scores, labels)?;
        let pauc = partial_auc(&scores, labels, a.fpr)?;
        man.input("labels", a.labels.as_ref().unwrap())?;
        man.push("result.accuracy", acc);
        man.push("result.auc", roc);
        man.push("result.partial_auc", pauc);
        println!("accuracy {acc}");
        println!("auc {roc}");
        println!("partial_auc@{} {pauc}", a.fpr);
    }

    atomic_write(&a.out, fileio::scores_text(&scores).as_bytes())?;
    man.write_for(&a.out)?;
    Ok(0)
}

fn weights(a: WeightsArgs) -> Result<i32, Failure> {
    let model = load_model(&a.model)?;
    let theta = model.theta.theta();
    let shares = model.theta.shares()?;

    let mut out = String::new();
    if a.csv {
        out.push_str("kernel,theta,share\n");
        for (i, name) in model.kernel_names.iter().enumerate() {
            writeln!(out, "{name},{},{}", theta[i], shares.get(i)).unwrap();
        }
    } else {
        let w = model
            .kernel_names
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(0)
            .max("kernel".len());
        writeln!(out, "{:<w$}  {:>23}  {:>23}", "kernel", "theta", "share").unwrap();
        for (i, name) in model.kernel_names.iter().enumerate() {
            writeln!(
                out,
                "{name:<w$}  {:>23}  {:>23}",
                format!("{:.16e}", theta[i]),
                format!("{:.16e}", shares.get(i))
            )
            .unwrap();
        }
    }

    match &a.out {
        Some(path) => {
            atomic_write(path, out.as_bytes())?;
            let mut man = Manifest::new("weights");
            man.input("model", &a.model)?;
            man.push("param.csv", a.csv);
            man.push("output.report", path.display());
            man.write_for(path)?;
        }
        None => print!("{out}"),
    }
    Ok(0)
}

fn bound(a: BoundArgs) -> Result<i32, Failure> {
    if a.consistency {
        let rows = literature_consistency_report(a.m, a.n)?;
        if a.csv {
            println!("setting,p,q,c1,general,improved");
            for r in rows {
                let improved = r.improved.map(|v| v.to_string()).unwrap_or_default();
                println!("{},{},{},{},{},{improved}", r.label, r.p, r.q, r.c1, r.general);
            }
        } else {
            println!(
                "{:<16} {:>10} {:>10} {:>6} {:>23} {:>23}",
                "setting", "p", "q", "c1", "general", "improved"
            );
            for r in rows {
                let improved = r
                    .improved
                    .map(|v| format!("{v:.16e}"))
                    .unwrap_or_else(|| "-".to_string());
                println!(
                    "{:<16} {:>10.6} {:>10.6} {:>6} {:>23.16e} {improved:>23}",
                    r.label, r.p, r.q, r.c1, r.general
                );
            }
        }
        return Ok(0);
    }

    let q = a.q.unwrap_or(a.p);
    let mut params = BoundParams::new(a.m, a.n, a.p, q, a.c1, 1.0 - a.c1)?;
    let with_risk = a.emp_risk.is_some();
    if let Some(emp) = a.emp_risk {
        params = params.with_risk(emp, a.lipschitz, a.delta)?;
    }
    let general = rademacher_bound_general(&params);
    let improved = rademacher_bound_improved(&params);
    let effective = rademacher_bound(&params);
    let risk = with_risk
        .then(|| generalization_bound(&params, effective))
        .transpose()?;

    if a.csv {
        println!("quantity,value");
        println!("rademacher_general,{general}");
        if let Some(v) = improved {
            println!("rademacher_improved,{v}");
        }
        println!("rademacher,{effective}");
        if let Some(v) = risk {
            println!("risk_bound,{v}");
        }
    } else {
        println!("rademacher_general {general}");
        if let Some(v) = improved {
            println!("rademacher_improved {v}");
        }
        println!("rademacher {effective}");
        if let Some(v) = risk {
            println!("risk_bound {v}");
        }
    }
    Ok(0)
}

fn synth(a: SynthArgs) -> Result<i32, Failure> {
    let scn = Scenario::new(
        a.m,
        a.block_dim,
        a.sparsity,
        a.bayes,
        a.n_train,
        a.n_test,
        a.seed,
    )?;
    let data = generate(&scn)?;
    std::fs::create_dir_all(&a.out_dir)
        .map_err(|e| Failure::io(format!("{}: {e}", a.out_dir.display())))?;

    let mut man = Manifest::new("synth");
    man.push("param.m", scn.m);
    man.push("param.block_dim", scn.block_dim);
    man.push("param.sparsity", scn.sparsity);
    man.push("param.bayes_target", scn.bayes_target);
    man.push("param.n_train", scn.n_train);
    man.push("param.n_test", scn.n_test);
    man.push("param.seed", scn.seed);
    man.push("param.binary", a.binary);
    man.push("result.bayes_error", bayes_error(&scn));

    for m in 0..scn.m {
        let gram_path = a.out_dir.join(format!("k{}.gram", m + 1));
        write_gram(data.kernels.get(m), &gram_path, a.binary)?;
        man.push(&format!("output.kernel{}", m + 1), gram_path.display());

        let cross_path = a.out_dir.join(format!("k{}.cross", m + 1));
        atomically(&cross_path, |tmp| {
            if a.binary {
                kernels::io::write_cross_binary(data.cross.get(m), tmp)
            } else {
                kernels::io::write_cross_text(data.cross.get(m), tmp)
            }
            .map_err(Failure::from)
        })?;
        man.push(&format!("output.cross{}", m + 1), cross_path.display());
    }

    let train_labels = a.out_dir.join("train.labels");
    atomic_write(&train_labels, fileio::labels_text(&data.y_train).as_bytes())?;
    man.push("output.train_labels", train_labels.display());
    let test_labels = a.out_dir.join("test.labels");
    atomic_write(&test_labels, fileio::labels_text(&data.y_test).as_bytes())?;
    man.push("output.test_labels", test_labels.display());

    // Scenario manifest: the generator inputs alone, for re-runs elsewhere.
    let mut scn_text = String::new();
    writeln!(scn_text, "m {}", scn.m).unwrap();
    writeln!(scn_text, "block_dim {}", scn.block_dim).unwrap();
    writeln!(scn_text, "sparsity {}", scn.sparsity).unwrap();
    writeln!(scn_text, "bayes_target {}", scn.bayes_target).unwrap();
    writeln!(scn_text, "n_train {}", scn.n_train).unwrap();
    writeln!(scn_text, "n_test {}", scn.n_test).unwrap();
    writeln!(scn_text, "seed {}", scn.seed).unwrap();
    writeln!(scn_text, "bayes_error {}", bayes_error(&scn)).unwrap();
    let scn_path = a.out_dir.join("scenario.manifest");
    atomic_write(&scn_path, scn_text.as_bytes())?;
    man.push("output.scenario", scn_path.display());

    man.write_for(&a.out_dir.join("synth"))?;
    println!(
        "wrote {} kernels with cross matrices, labels, and manifests to {}",
        scn.m,
        a.out_dir.display()
    );
    Ok(0)
}

fn sweep(a: SweepArgs) -> Result<i32, Failure> {
    let loss = parse_loss(&a.loss)?;
    let mus = parse_reals(&a.mus, "--mus")?;
    let ridge_present = !mus.is_empty() && mus.iter().all(|&mu| mu > 0.0);
    let ps = a
        .ps
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| parse_p(t, ridge_present))
        .collect::<Result<Vec<_>, _>>()?;
    let nus = parse_reals(&a.nus, "--nus")?;
    let seeds = parse_seeds(&a.seeds)?;

    let grid = SweepGrid {
        scenario: SweepScenario {
            m: a.m,
            block_dim: a.block_dim,
            bayes_target: a.bayes,
            n_train: a.n_train,
            n_test: a.n_test,
        },
        nus,
        ps,
        mus,
        seeds,
        c: a.c,
        loss,
        solver: SolverConfig {
            tol: a.tol,
            max_iter: a.max_iter,
            ..SolverConfig::default()
        },
    };
    let rows = run_sweep(&grid)?;
    atomic_write(&a.out, sweep_csv(&rows).as_bytes())?;

    println!(
        "{:>6} {:>12} {:>8} {:>10} {:>10} {:>4} {:>6}",
        "nu", "p", "mu", "mean_err", "stderr", "ok", "failed"
    );
    for r in &rows {
        println!(
            "{:>6} {:>12.8} {:>8} {:>10.4} {:>10.4} {:>4} {:>6}",
            r.nu, r.p, r.mu, r.mean_error, r.stderr, r.seeds_ok, r.seeds_failed
        );
    }
    let failed: usize = rows.iter().map(|r| r.seeds_failed).sum();
    if failed > 0 {
        eprintln!("mklearn: warning: {failed} replicate(s) failed; cells aggregate the survivors");
    }

    let mut man = Manifest::new("sweep");
    man.push("param.m", grid.scenario.m);
    man.push("param.block_dim", grid.scenario.block_dim);
    man.push("param.bayes_target", grid.scenario.bayes_target);
    man.push("param.n_train", grid.scenario.n_train);
    man.push("param.n_test", grid.scenario.n_test);
    man.push("param.nus", join(&grid.nus));
    man.push("param.ps", join(&grid.ps));
    man.push("param.mus", join(&grid.mus));
    man.push("param.seeds", join(&grid.seeds));
    man.push("param.c", grid.c);
    man.push("param.loss", &a.loss);
    man.push("param.tol", grid.solver.tol);
    man.push("param.max_iter", grid.solver.max_iter);
    man.push("output.csv", a.out.display());
    man.write_for(&a.out)?;
    Ok(0)
}

fn join<T: ToString>(values: &[T]) -> String {
    values
        .iter()
        .map(T::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn eval(a: EvalArgs) -> Result<i32, Failure> {
    let scores = fileio::read_scores(&a.scores)?;
    let labels = fileio::read_labels(&a.labels)?;
    let acc = accuracy(&scores, &labels)?;
    let roc = auc(&scores, &labels)?;
    let pauc = partial_auc(&scores, &labels, a.fpr)?;
    println!("accuracy {acc}");
    println!("auc {roc}");
    println!("partial_auc@{} {pauc}", a.fpr);
    Ok(0)
}
