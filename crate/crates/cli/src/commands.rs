use std::fs;
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, ensure, Context, Result};
use robust_fqi::approx::{FeatureMap, FeatureSpec};
use robust_fqi::data::{exhaustive_dataset, generate_dataset, mu_from_policy, uniform_mu, Dataset};
use robust_fqi::dual::TvBall;
use robust_fqi::eval::{self, Benchmark, ProbeSettings, ORACLE_TOL};
use robust_fqi::planner::{default_max_iter, nonrobust_vi, rqi, DEFAULT_TOL};
use robust_fqi::rfqi::{run_fqi, run_rfqi, MdpShape, RfqiConfig, RfqiResult};
use robust_fqi::{Policy, SaTable, TabularRmdp};
use serde_json::{json, Value};

use crate::config::{parse_params, Layered};
use crate::output::{num, OutDir};
use crate::{
    Algo, BenchmarkArgs, DiagnoseArgs, EvalArgs, GenDataArgs, OracleArgs, Outcome, SolveArgs, SweepArgs, TrainArgs,
};

fn load_rmdp(path: &Path) -> Result<TabularRmdp> {
    TabularRmdp::load(path).with_context(|| format!("rmdp: loading {}", path.display()))
}

fn load_policy(path: &Path) -> Result<Policy> {
    let text = fs::read_to_string(path).with_context(|| format!("reading policy {}", path.display()))?;
    let mut value: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if let Some(inner) = value.get_mut("policy") {
        value = inner.take();
    }
    serde_json::from_value(value).with_context(|| format!("{} holds no policy", path.display()))
}

fn load_mu(path: &Path, rmdp: &TabularRmdp) -> Result<SaTable> {
    let text = fs::read_to_string(path).with_context(|| format!("reading mu {}", path.display()))?;
    let rows: Vec<Vec<f64>> = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let mu = SaTable::try_from(rows).map_err(anyhow::Error::msg)?;
    ensure!(
        mu.n_states() == rmdp.n_states() && mu.n_actions() == rmdp.n_actions(),
        "mu is {}x{}, model is {}x{}",
        mu.n_states(),
        mu.n_actions(),
        rmdp.n_states(),
        rmdp.n_actions()
    );
    Ok(mu)
}

fn check_rho(rho: f64) -> Result<()> {
    ensure!(rho >= 0.0 && rho.is_finite(), "rho must be finite and non-negative, got {rho}");
    Ok(())
}

fn policy_rows(policy: &Policy, n_actions: usize) -> Vec<Vec<String>> {
    (0..policy.n_states())
        .flat_map(|s| (0..n_actions).map(move |a| (s, a)))
        .map(|(s, a)| vec![s.to_string(), a.to_string(), num(policy.prob(s, a))])
        .collect()
}

fn q_rows(q: &SaTable) -> Vec<Vec<String>> {
    (0..q.n_states())
        .flat_map(|s| (0..q.n_actions()).map(move |a| (s, a)))
        .map(|(s, a)| vec![s.to_string(), a.to_string(), num(q.get(s, a))])
        .collect()
}

pub fn benchmark(args: BenchmarkArgs) -> Result<Outcome> {
    let cfg = Layered::load(args.common.config.as_deref())?;
    let name: String = cfg.require(args.name, "name")?;
    let params = parse_params(&args.params, cfg.raw().get("params"))?;
    let bench = Benchmark::from_params(&name, &params).context("benchmark")?;
    let rmdp = bench.build().context("benchmark")?;
    let out = OutDir::create(&args.common.out)?;
    rmdp.save(out.path("rmdp.json")).context("writing rmdp.json")?;
    let mut meta = json!({ "benchmark": bench });
    if let Ok(t) = bench.risky_safe_threshold() {
        meta["rho_threshold"] = json!(t);
        meta["fail_prob_crossover"] = json!(bench.risky_safe_crossover()?);
    }
    out.json("benchmark.json", &meta)?;
    Ok(Outcome::Ok)
}

pub fn solve(args: SolveArgs) -> Result<Outcome> {
    let cfg = Layered::load(args.common.config.as_deref())?;
    let path = cfg.input(args.rmdp, "rmdp")?;
    let mut rmdp = load_rmdp(&path)?;
    if let Some(rho) = cfg.pick(args.rho, "rho")? {
        check_rho(rho)?;
        rmdp = rmdp.with_rho(rho);
    }
    let tol: f64 = cfg.pick(args.tol, "tol")?.unwrap_or(DEFAULT_TOL);
    ensure!(tol > 0.0, "tol must be positive");
    let max_iter: usize = cfg.pick(args.max_iter, "max_iter")?.unwrap_or_else(|| default_max_iter(rmdp.gamma(), tol));
    ensure!(max_iter > 0, "max_iter must be positive");
    let nonrobust = args.nonrobust || cfg.pick(None, "nonrobust")?.unwrap_or(false);
    let out = OutDir::create(&args.common.out)?;

    let plan = if nonrobust {
        nonrobust_vi(&rmdp, tol, max_iter).context("planner")?
    } else {
        rqi(&rmdp, &TvBall::for_rmdp(&rmdp), tol, max_iter).context("planner")?
    };
    out.json("plan.json", &plan)?;
    out.json("policy.json", &plan.policy)?;
    out.csv("q.csv", &["s", "a", "q"], q_rows(&plan.q))?;
    if !plan.converged {
        eprintln!("planner: no convergence after {} iterations (residual {:e})", plan.iterations, plan.residual);
        return Ok(Outcome::NotConverged);
    }
    Ok(Outcome::Ok)
}

pub fn gen_data(args: GenDataArgs) -> Result<Outcome> {
    let cfg = Layered::load(args.common.config.as_deref())?;
    let rmdp = load_rmdp(&cfg.input(args.rmdp, "rmdp")?)?;
    let exhaustive = args.exhaustive || cfg.pick(None, "exhaustive")?.unwrap_or(false);
    let mu = if let Some(p) = cfg.optional_input(args.mu_file, "mu_file")? {
        load_mu(&p, &rmdp)?
    } else if let Some(p) = cfg.optional_input(args.mu_policy, "mu_policy")? {
        let eps: f64 = cfg.pick(args.mu_eps, "mu_eps")?.unwrap_or(0.0);
        mu_from_policy(&rmdp, &load_policy(&p)?, eps).context("offline-data")?
    } else {
        uniform_mu(rmdp.n_states(), rmdp.n_actions())
    };
    let dataset = if exhaustive {
        exhaustive_dataset(&rmdp, &mu).context("offline-data")?
    } else {
        let n: usize = cfg.require(args.n, "n")?;
        let seed: u64 = cfg.require(args.seed, "seed")?;
        generate_dataset(&rmdp, &mu, n, seed).context("offline-data")?
    };
    let out = OutDir::create(&args.common.out)?;
    dataset.save(out.path("dataset.jsonl")).context("writing dataset.jsonl")?;
    Ok(Outcome::Ok)
}

pub fn train(args: TrainArgs) -> Result<Outcome> {
    let cfg = Layered::load(args.common.config.as_deref())?;
    let data_path = cfg.input(args.data, "data")?;
    let rmdp = load_rmdp(&cfg.input(args.rmdp, "rmdp")?)?;
    let mut config: RfqiConfig =
        serde_json::from_value(Value::Object(cfg.raw().clone())).context("parsing training config")?;
    if let Some(rho) = args.rho {
        config.rho = rho;
    }
    if let Some(k) = args.k_iters {
        config.k_iters = Some(k);
    }
    if let Some(r) = args.ridge {
        config.ridge = r;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if args.cold_start {
        config.warm_start = false;
    }
    check_rho(config.rho)?;
    ensure!(config.ridge >= 0.0 && config.ridge.is_finite(), "ridge must be finite and non-negative");
    if args.algo == Algo::Rfqi {
        ensure!(config.rho > 0.0, "RFQI needs rho > 0; use --algo fqi for rho = 0");
    }

    let dataset =
        Dataset::load(&data_path).with_context(|| format!("offline-data: loading {}", data_path.display()))?;
    let shape = MdpShape::of(&rmdp);
    let out = OutDir::create(&args.common.out)?;
    let result = match args.algo {
        Algo::Rfqi => run_rfqi(&dataset, &shape, &config).context("rfqi")?,
        Algo::Fqi => run_fqi(&dataset, &shape, &config).context("rfqi (fqi baseline)")?,
    };
    write_training(&out, &config, &result)?;
    Ok(Outcome::Ok)
}

fn write_training(out: &OutDir, config: &RfqiConfig, result: &RfqiResult) -> Result<()> {
    out.json("config.json", config)?;
    out.json("result.json", result)?;
    out.json("policy.json", &result.policy)?;
    out.csv("q.csv", &["s", "a", "q"], q_rows(&result.q_final))?;
    let rows = result.per_iteration.iter().enumerate().map(|(k, it)| {
        vec![k.to_string(), it.dual_loss.map(num).unwrap_or_default(), num(it.regression_residual), num(it.q_change)]
    });
    out.csv("trace.csv", &["k", "dual_loss", "regression_residual", "q_change"], rows)
}

pub fn eval(args: EvalArgs) -> Result<Outcome> {
    let cfg = Layered::load(args.common.config.as_deref())?;
    let mut rmdp = load_rmdp(&cfg.input(args.rmdp, "rmdp")?)?;
    let policy = load_policy(&cfg.input(args.policy, "policy")?)?;
    if let Some(rho) = cfg.pick(args.rho, "rho")? {
        check_rho(rho)?;
        rmdp = rmdp.with_rho(rho);
    }
    let out = OutDir::create(&args.common.out)?;
    let report = eval::evaluate_policy(&policy, &rmdp).context("eval-harness")?;
    out.json("eval.json", &report)?;
    out.csv(
        "eval.csv",
        &["rho", "nominal_j", "robust_j"],
        [vec![num(rmdp.rho()), num(report.nominal_j), num(report.robust_j)]],
    )?;
    out.csv("policy.csv", &["s", "a", "prob"], policy_rows(&policy, rmdp.n_actions()))?;
    Ok(Outcome::Ok)
}

pub fn sweep(args: SweepArgs) -> Result<Outcome> {
    let cfg = Layered::load(args.common.config.as_deref())?;
    let name: String = cfg.require(args.benchmark, "benchmark")?;
    let params = parse_params(&args.params, cfg.raw().get("params"))?;
    let bench = Benchmark::from_params(&name, &params).context("eval-harness")?;
    let policy = load_policy(&cfg.input(args.policy, "policy")?)?;
    let knob: String = cfg.require(args.knob, "knob")?;
    let values: Vec<f64> = cfg.pick((!args.values.is_empty()).then_some(args.values), "values")?.unwrap_or_default();
    if values.is_empty() {
        bail!("missing required setting --values");
    }
    let rmdp = bench.build()?;
    let report = eval::evaluate_policy(&policy, &rmdp).context("eval-harness")?;
    let points = eval::perturbation_sweep(&policy, &bench, &knob, &values).context("eval-harness")?;
    let out = OutDir::create(&args.common.out)?;
    let rows = points.iter().map(|p| vec![num(p.value), num(p.j), num(p.tv_radius), p.inside_ball.to_string()]);
    out.csv("sweep.csv", &["value", "j", "tv_radius", "inside_ball"], rows)?;
    out.json("sweep.json", &eval::EvalReport { sweep: points, ..report })?;
    Ok(Outcome::Ok)
}

fn feature_spec(text: Option<String>) -> Result<Option<FeatureSpec>> {
    text.map(|t| serde_json::from_str(&t).with_context(|| format!("feature spec {t:?}"))).transpose()
}

pub fn diagnose(args: DiagnoseArgs) -> Result<Outcome> {
    let cfg = Layered::load(args.common.config.as_deref())?;
    let rmdp = load_rmdp(&cfg.input(args.rmdp, "rmdp")?)?;
    let mu = if let Some(p) = cfg.optional_input(args.data, "data")? {
        Dataset::load(&p).with_context(|| format!("offline-data: loading {}", p.display()))?.mu
    } else if let Some(p) = cfg.optional_input(args.mu_file, "mu_file")? {
        load_mu(&p, &rmdp)?
    } else {
        uniform_mu(rmdp.n_states(), rmdp.n_actions())
    };
    let fspec = match feature_spec(args.features)? {
        Some(s) => s,
        None => cfg.pick(None, "features")?.unwrap_or_default(),
    };
    let gspec = match feature_spec(args.dual_features)? {
        Some(s) => s,
        None => cfg.pick(None, "dual_features")?.unwrap_or_else(|| fspec.clone()),
    };
    let (ns, na) = (rmdp.n_states(), rmdp.n_actions());
    let fmap = Arc::new(FeatureMap::from_spec(&fspec, ns, na).context("func-approx")?);
    let gmap = Arc::new(FeatureMap::from_spec(&gspec, ns, na).context("func-approx")?);
    let n_policies: usize = cfg.pick(args.policies, "policies")?.unwrap_or(64);
    let probes = ProbeSettings {
        n_probes: cfg.pick(args.probes, "probes")?.unwrap_or(16),
        seed: cfg.pick(args.seed, "seed")?.unwrap_or(0),
    };
    let report = eval::diagnose(&rmdp, &mu, &fmap, &gmap, n_policies, probes).context("eval-harness")?;
    let out = OutDir::create(&args.common.out)?;
    out.json("diagnostics.json", &report)?;
    out.csv(
        "diagnostics.csv",
        &["c_estimate", "eps_c_estimate", "eps_dual_estimate", "mu_coverage"],
        [vec![
            num(report.c_estimate),
            num(report.eps_c_estimate),
            num(report.eps_dual_estimate),
            num(report.mu_coverage),
        ]],
    )?;
    Ok(Outcome::Ok)
}

pub fn oracle_check(args: OracleArgs) -> Result<Outcome> {
    let cfg = Layered::load(args.common.config.as_deref())?;
    let cases: usize = cfg.pick(args.cases, "cases")?.unwrap_or(1000);
    let seed: u64 = cfg.pick(args.seed, "seed")?.unwrap_or(0);
    let rows = eval::oracle_check(cases, seed).context("robust-dual")?;
    let out = OutDir::create(&args.common.out)?;
    let join = |xs: &[f64]| xs.iter().map(|x| num(*x)).collect::<Vec<_>>().join(";");
    out.csv(
        "oracle.csv",
        &["case", "n", "rho", "gamma", "reduced", "p0", "v", "primal", "dual", "gap"],
        rows.iter().map(|r| {
            vec![
                r.case.to_string(),
                r.n.to_string(),
                num(r.rho),
                num(r.gamma),
                r.reduced.to_string(),
                join(&r.p0),
                join(&r.v),
                num(r.primal),
                num(r.dual),
                num(r.gap),
            ]
        }),
    )?;
    let worst = rows.iter().map(|r| r.gap).fold(0.0, f64::max);
    let failures = rows.iter().filter(|r| r.gap > ORACLE_TOL).count();
    out.json("summary.json", &json!({ "cases": cases, "seed": seed, "max_gap": worst, "failures": failures }))?;
    if failures > 0 {
        eprintln!("oracle-check: {failures} of {cases} cases exceed {ORACLE_TOL:e} (worst {worst:e})");
        return Ok(Outcome::PropertyFailure);
    }
    Ok(Outcome::Ok)
}
