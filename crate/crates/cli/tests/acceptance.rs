//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Every tolerance and time limit is pinned
//! below.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robust_fqi::approx::{apply_tg_exact, dual_loss_population, mu_norm};
use robust_fqi::dual::{dual_minimizers, tv_inner_inf_dual, tv_inner_inf_primal, TvBall};
use robust_fqi::eval::{self, Benchmark, RISKY, SAFE};
use robust_fqi::planner::{enumerate_deterministic, rqi, rqi_observed};
use robust_fqi::rfqi::{run_fqi, run_rfqi, run_rfqi_observed, theorem1_bound, BoundInputs, MdpShape, RfqiConfig};
use robust_fqi::{exhaustive_dataset, generate_dataset, robust_bellman_apply, uniform_mu, QTable, TabularRmdp};

const C1_CASES: usize = 1000;
const C1_TOL: f64 = 1e-9;
const C1_LIMIT: Duration = Duration::from_secs(1);

const C2_PAIRS: usize = 500;
const C2_SLACK: f64 = 1e-12;
const C2_LIMIT: Duration = Duration::from_secs(5);

const C3_MODELS: usize = 24;
const C3_SLACK: f64 = 1e-7;
const C3_LIMIT: Duration = Duration::from_secs(30);

const C4_K: usize = 200;
const C4_GAMMA: f64 = 0.9;
const C4_TOL: f64 = 1e-4;
const C4_LIMIT: Duration = Duration::from_secs(10);

const C6_N: usize = 100_000;
const C6_SEEDS: u64 = 20;
const C6_MIN_WINS: usize = 18;
const C6_RHO: f64 = 0.2;
const C6_LIMIT: Duration = Duration::from_secs(120);

const C7_NS: [usize; 3] = [1_000, 10_000, 100_000];
const C7_SEEDS: u64 = 20;
const C7_MIN_RATIO: f64 = 2.5;
const C7_LIMIT: Duration = Duration::from_secs(300);

const C8_TUPLES: usize = 100;
/// Relative agreement; the bound spans many orders of magnitude.
const C8_REL_TOL: f64 = 1e-12;

const Q_STAR_TOL: f64 = 1e-12;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Verdict) -> Verdict {
    let t = Instant::now();
    let v = f();
    let el = t.elapsed();
    let limit_text = limit.map(|l| format!(" (limit {}s)", l.as_secs_f64())).unwrap_or_default();
    Verdict {
        pass: v.pass && limit.is_none_or(|l| el < l),
        detail: format!("{}; runtime {:.3}s{limit_text}", v.detail, el.as_secs_f64()),
    }
}

fn random_distribution(rng: &mut ChaCha8Rng, n: usize, zero_prob: f64) -> Vec<f64> {
    loop {
        let mut p: Vec<f64> = (0..n).map(|_| if rng.gen_bool(zero_prob) { 0.0 } else { rng.gen::<f64>() }).collect();
        let total: f64 = p.iter().sum();
        if total > 0.0 {
            p.iter_mut().for_each(|x| *x /= total);
            return p;
        }
    }
}

/// Random model; with `fail` the last state is absorbing with zero reward.
fn random_rmdp(rng: &mut ChaCha8Rng, max_s: usize, max_a: usize, fail: bool) -> TabularRmdp {
    let ns = rng.gen_range(2..=max_s);
    let na = rng.gen_range(1..=max_a);
    let gamma = rng.gen_range(0.5..0.95);
    let rho = if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(0.0..1.0) };
    let fail_state = fail.then_some(ns - 1);
    let mut kernel = Vec::with_capacity(ns * na * ns);
    let mut reward = Vec::with_capacity(ns * na);
    for s in 0..ns {
        for _ in 0..na {
            if fail_state == Some(s) {
                kernel.extend((0..ns).map(|j| if j == s { 1.0 } else { 0.0 }));
                reward.push(0.0);
            } else {
                kernel.extend(random_distribution(rng, ns, 0.3));
                reward.push(rng.gen());
            }
        }
    }
    let live = if fail { ns - 1 } else { ns };
    let mut init = random_distribution(rng, live, 0.0);
    init.resize(ns, 0.0);
    TabularRmdp::new(ns, na, kernel, reward, gamma, init, fail_state, rho).unwrap()
}

fn q_star(rmdp: &TabularRmdp) -> QTable {
    let plan = rqi(rmdp, &TvBall::for_rmdp(rmdp), Q_STAR_TOL, 100_000).unwrap();
    assert!(plan.converged);
    plan.q
}

fn hinge_objective(p0: &[f64], v: &[f64], rho: f64, m: f64, eta: f64) -> f64 {
    let mut h = -eta + rho * (eta - m).max(0.0);
    for (p, x) in p0.iter().zip(v) {
        if *x < eta {
            h += p * (eta - x);
        }
    }
    h
}

/// Primal value of a feasible kernel is an upper bound on the infimum, every
/// dual point a lower bound; a small sandwich certifies both solvers.
fn criterion_1() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    let mut infeasible = 0;
    for _ in 0..C1_CASES {
        let n = rng.gen_range(1..=12);
        let p0 = random_distribution(&mut rng, n, 0.25);
        let gamma = rng.gen_range(0.5..0.99);
        let vmax = 1.0 / (1.0 - gamma);
        let coarse = rng.gen_bool(0.5);
        let mut v: Vec<f64> = (0..n)
            .map(|_| if coarse { rng.gen_range(0..5) as f64 * vmax / 4.0 } else { rng.gen::<f64>() * vmax })
            .collect();
        let reduced = rng.gen_bool(0.3);
        if reduced {
            let i = rng.gen_range(0..n);
            v[i] = 0.0;
        }
        let rho = if rng.gen_bool(0.1) { 1.0 } else { 1.0 - rng.gen::<f64>() };

        let (primal, q) = tv_inner_inf_primal(&p0, &v, rho).unwrap();
        let dual = tv_inner_inf_dual(&p0, &v, &TvBall::new(rho, reduced), gamma).unwrap();

        let mass: f64 = q.iter().sum();
        let tv: f64 = 0.5 * q.iter().zip(&p0).map(|(a, b)| (a - b).abs()).sum::<f64>();
        if (mass - 1.0).abs() > 1e-12 || q.iter().any(|x| *x < 0.0) || tv > rho + 1e-12 {
            infeasible += 1;
        }
        let upper: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
        let m = if reduced { 0.0 } else { v.iter().copied().fold(f64::INFINITY, f64::min) };
        let lower = -hinge_objective(&p0, &v, rho, m, dual.eta_star);
        worst = worst.max((upper - lower).abs()).max((primal - dual.value).abs());
    }
    let lib = eval::oracle_check(C1_CASES, 7).unwrap();
    let lib_worst = lib.iter().map(|r| r.gap).fold(0.0, f64::max);
    verdict(
        worst <= C1_TOL && lib_worst <= C1_TOL && infeasible == 0,
        format!(
            "{C1_CASES} cases, max |dual - primal| {worst:.2e}, oracle-check max gap {lib_worst:.2e}, \
             infeasible primal kernels {infeasible} (tol {C1_TOL:e})"
        ),
    )
}

fn random_q(rng: &mut ChaCha8Rng, rmdp: &TabularRmdp) -> QTable {
    let hi = rmdp.value_bound();
    QTable::from_fn(rmdp.n_states(), rmdp.n_actions(), |s, _| {
        if rmdp.fail_state() == Some(s) {
            0.0
        } else {
            rng.gen::<f64>() * hi
        }
    })
}

fn criterion_2() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst_excess = f64::NEG_INFINITY;
    for i in 0..C2_PAIRS {
        let rmdp = random_rmdp(&mut rng, 8, 4, i % 2 == 0);
        let ball = TvBall::for_rmdp(&rmdp);
        let q1 = random_q(&mut rng, &rmdp);
        let q2 = if rng.gen_bool(0.5) {
            random_q(&mut rng, &rmdp)
        } else {
            // small perturbation of q1
            let hi = rmdp.value_bound();
            QTable::from_fn(rmdp.n_states(), rmdp.n_actions(), |s, a| {
                if rmdp.fail_state() == Some(s) {
                    0.0
                } else {
                    (q1.get(s, a) + rng.gen_range(-1e-3..1e-3)).clamp(0.0, hi)
                }
            })
        };
        let t1 = robust_bellman_apply(&q1, &rmdp, &ball).unwrap();
        let t2 = robust_bellman_apply(&q2, &rmdp, &ball).unwrap();
        let excess = t1.sup_distance(&t2) - rmdp.gamma() * q1.sup_distance(&q2);
        worst_excess = worst_excess.max(excess);
    }
    verdict(
        worst_excess <= C2_SLACK,
        format!("{C2_PAIRS} pairs, max |TQ-TQ'| - gamma |Q-Q'| = {worst_excess:.2e} (slack {C2_SLACK:e})"),
    )
}

fn criterion_3() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = f64::NEG_INFINITY;
    let mut policies = 0;
    for i in 0..C3_MODELS {
        let rmdp = random_rmdp(&mut rng, 4, 3, i % 3 == 0);
        let plan = rqi(&rmdp, &TvBall::for_rmdp(&rmdp), 1e-12, 100_000).unwrap();
        let j_rqi = eval::robust_j(&plan.policy, &rmdp).unwrap();
        for pi in enumerate_deterministic(rmdp.n_states(), rmdp.n_actions()) {
            let j = eval::robust_j(&pi, &rmdp).unwrap();
            worst = worst.max(j - j_rqi);
            policies += 1;
        }
    }
    verdict(
        worst <= C3_SLACK,
        format!(
            "{C3_MODELS} models, {policies} deterministic policies, max J(pi) - J(pi_RQI) = {worst:.2e} \
             (slack {C3_SLACK:e})"
        ),
    )
}

fn fail_state_models() -> Vec<(String, TabularRmdp)> {
    let mut out: Vec<(String, TabularRmdp)> = vec![
        ("risky-safe".into(), Benchmark::risky_safe().build().unwrap()),
        ("chain".into(), Benchmark::chain(5).with_param("fail_prob", 0.05).unwrap().build().unwrap()),
        ("gridworld".into(), Benchmark::gridworld(3, 3).with_param("fail_prob", 0.05).unwrap().build().unwrap()),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for i in 0..3 {
        let mut m = random_rmdp(&mut rng, 6, 3, true);
        if m.rho() == 0.0 {
            m = m.with_rho(0.3);
        }
        out.push((format!("random-{i}"), m));
    }
    out
}

fn criterion_4() -> Verdict {
    let mut worst = 0.0f64;
    let mut names = Vec::new();
    for (name, rmdp) in fail_state_models() {
        let rmdp = TabularRmdp::new(
            rmdp.n_states(),
            rmdp.n_actions(),
            rmdp.kernel().to_vec(),
            rmdp.rewards().to_vec(),
            C4_GAMMA,
            rmdp.init_dist().to_vec(),
            rmdp.fail_state(),
            rmdp.rho(),
        )
        .unwrap();
        let qs = q_star(&rmdp);
        let data = exhaustive_dataset(&rmdp, &uniform_mu(rmdp.n_states(), rmdp.n_actions())).unwrap();
        let cfg = RfqiConfig { k_iters: Some(C4_K), rho: rmdp.rho(), ..Default::default() };
        let res = run_rfqi(&data, &MdpShape::of(&rmdp), &cfg).unwrap();
        let gap = res.q_final.sup_distance(&qs);
        worst = worst.max(gap);
        names.push(format!("{name} {gap:.1e}"));
    }
    verdict(
        worst <= C4_TOL,
        format!("K={C4_K}, gamma={C4_GAMMA}, |Q_K - Q*|_inf per model [{}] (tol {C4_TOL:e})", names.join(", ")),
    )
}

fn criterion_5() -> Verdict {
    let mut checked = 0usize;
    let mut violations = 0usize;
    let mut inspect = |q: &QTable, sf: usize| {
        checked += 1;
        if q.row(sf).iter().any(|x| *x != 0.0) {
            violations += 1;
        }
    };
    for (i, (_, rmdp)) in fail_state_models().into_iter().enumerate() {
        let sf = rmdp.fail_state().unwrap();
        rqi_observed(&rmdp, &TvBall::for_rmdp(&rmdp), 1e-12, 100_000, |_, q| inspect(q, sf)).unwrap();
        let mu = uniform_mu(rmdp.n_states(), rmdp.n_actions());
        let shape = MdpShape::of(&rmdp);
        let cfg = RfqiConfig { k_iters: Some(60), rho: rmdp.rho(), ..Default::default() };
        for data in [exhaustive_dataset(&rmdp, &mu).unwrap(), generate_dataset(&rmdp, &mu, 2000, i as u64).unwrap()] {
            let res = run_rfqi_observed(&data, &shape, &cfg, |step| {
                inspect(step.q_prev, sf);
                inspect(step.q_next, sf);
            })
            .unwrap();
            inspect(&res.q_final, sf);
        }
    }
    verdict(violations == 0, format!("{checked} iterates inspected, {violations} with a non-zero fail-state row"))
}

fn criterion_6() -> Verdict {
    let bench = match Benchmark::risky_safe() {
        Benchmark::RiskySafe { fail_prob, risky_reward, safe_reward, gamma, .. } => {
            Benchmark::RiskySafe { fail_prob, risky_reward, safe_reward, gamma, rho: C6_RHO }
        }
        _ => unreachable!(),
    };
    let rmdp = bench.build().unwrap();
    let crossover = bench.risky_safe_crossover().unwrap();
    let grid: Vec<f64> = (0..=30).map(|i| i as f64 * 0.02).collect();
    let beyond: Vec<f64> = grid.iter().copied().filter(|x| *x > crossover).collect();
    let mu = uniform_mu(rmdp.n_states(), rmdp.n_actions());
    let shape = MdpShape::of(&rmdp);
    let cfg = RfqiConfig { rho: C6_RHO, ..Default::default() };

    let (mut wins, mut strict, mut sweep_ok) = (0, 0, 0);
    let mut choices = (0, 0);
    for seed in 1..=C6_SEEDS {
        let data = generate_dataset(&rmdp, &mu, C6_N, seed).unwrap();
        let robust = run_rfqi(&data, &shape, &cfg).unwrap().policy;
        let plain = run_fqi(&data, &shape, &cfg).unwrap().policy;
        if robust.prob(0, SAFE) == 1.0 {
            choices.0 += 1;
        }
        if plain.prob(0, RISKY) == 1.0 {
            choices.1 += 1;
        }
        let jr = eval::robust_j(&robust, &rmdp).unwrap();
        let jf = eval::robust_j(&plain, &rmdp).unwrap();
        wins += usize::from(jr >= jf);
        strict += usize::from(jr > jf);
        let sr = eval::perturbation_sweep(&robust, &bench, "fail_prob", &beyond).unwrap();
        let sf = eval::perturbation_sweep(&plain, &bench, "fail_prob", &beyond).unwrap();
        if sr.iter().zip(&sf).all(|(a, b)| a.j > b.j) {
            sweep_ok += 1;
        }
    }
    let seeds = C6_SEEDS as usize;
    verdict(
        wins >= C6_MIN_WINS && sweep_ok == seeds,
        format!(
            "rho={C6_RHO}, N={C6_N}: robust_J(RFQI) >= robust_J(FQI) on {wins}/{seeds} seeds ({strict} strict, \
             need {C6_MIN_WINS}); RFQI safe on {}/{seeds}, FQI risky on {}/{seeds}; sweep beyond crossover \
             {crossover:.4} ({} grid points) won on {sweep_ok}/{seeds} seeds",
            choices.0,
            choices.1,
            beyond.len()
        ),
    )
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn criterion_7() -> Verdict {
    let bench = Benchmark::chain(5).with_param("fail_prob", 0.1).unwrap().with_param("slip", 0.2).unwrap();
    let rmdp = bench.build().unwrap();
    let rho = rmdp.rho();
    let qs = q_star(&rmdp);
    let mu = uniform_mu(rmdp.n_states(), rmdp.n_actions());
    let shape = MdpShape::of(&rmdp);
    let cfg = RfqiConfig { rho, ..Default::default() };
    let reduced = TvBall::new(rho, true);

    let mut err_med = Vec::new();
    let mut erm_mean = Vec::new();
    let mut reg_mean = Vec::new();
    for &n in &C7_NS {
        let (mut errs, mut erm, mut reg) = (Vec::new(), Vec::new(), Vec::new());
        for seed in 0..C7_SEEDS {
            let data = generate_dataset(&rmdp, &mu, n, 1000 + seed).unwrap();
            let (mut ex, mut rg) = (Vec::new(), Vec::new());
            let res = run_rfqi_observed(&data, &shape, &cfg, |step| {
                let g = step.g.unwrap();
                let best = dual_minimizers(step.q_prev, &rmdp, &reduced).unwrap();
                let l = dual_loss_population(g, step.q_prev, &rmdp, &mu, rho).unwrap();
                let l_opt = dual_loss_population(&best, step.q_prev, &rmdp, &mu, rho).unwrap();
                ex.push(l - l_opt);
                let target = apply_tg_exact(step.q_prev, g, &rmdp, rho).unwrap();
                rg.push(mu_norm(&target, step.q_next, &mu, 2.0));
            })
            .unwrap();
            errs.push(mu_norm(&res.q_final, &qs, &mu, 1.0));
            erm.push(mean(&ex));
            reg.push(mean(&rg));
        }
        err_med.push(median(errs));
        erm_mean.push(mean(&erm));
        reg_mean.push(mean(&reg));
    }
    let decreasing = err_med.windows(2).all(|w| w[1] < w[0]);
    let erm_ratio = erm_mean[0] / erm_mean[2];
    let reg_ratio = reg_mean[0] / reg_mean[2];
    let fmt = |xs: &[f64]| xs.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(" > ");
    verdict(
        decreasing && erm_ratio >= C7_MIN_RATIO && reg_ratio >= C7_MIN_RATIO,
        format!(
            "N={C7_NS:?}, {C7_SEEDS} seeds: median |Q_K - Q*|_1,mu {}; ERM excess loss {} (ratio {erm_ratio:.1}); \
             regression error {} (ratio {reg_ratio:.1}); need ratio >= {C7_MIN_RATIO}",
            fmt(&err_med),
            fmt(&erm_mean),
            fmt(&reg_mean)
        ),
    )
}

/// Written from the formula, term by term, without sharing code with the library.
fn bound_reference(b: &BoundInputs) -> f64 {
    let one_minus = 1.0 - b.gamma;
    let mut gk = 1.0;
    for _ in 0..b.k_iters {
        gk *= b.gamma;
    }
    let first = gk / one_minus.powi(2);
    let second = b.c_conc.sqrt() * (6.0 * b.eps_c).sqrt() / one_minus.powi(2)
        + b.c_conc.sqrt() * b.gamma * b.eps_dual / one_minus.powi(2);
    let log_term = 2f64.ln() + b.card_f.ln() + b.card_g.ln() - b.delta.ln();
    let third = 16.0 / (b.rho * one_minus.powi(3)) * (18.0 * b.c_conc * log_term).sqrt() / b.n.sqrt();
    first + second + third
}

fn criterion_8() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut worst_rel = 0.0f64;
    let mut worst_abs = 0.0f64;
    for _ in 0..C8_TUPLES {
        let b = BoundInputs {
            k_iters: rng.gen_range(0..300),
            n: 10f64.powf(rng.gen_range(1.0..7.0)),
            gamma: rng.gen_range(0.01..0.99),
            rho: rng.gen_range(0.01..1.0),
            c_conc: 10f64.powf(rng.gen_range(0.0..3.0)),
            eps_c: rng.gen_range(0.0..0.5),
            eps_dual: rng.gen_range(0.0..0.5),
            card_f: 10f64.powf(rng.gen_range(0.0..6.0)),
            card_g: 10f64.powf(rng.gen_range(0.0..6.0)),
            delta: rng.gen_range(0.001..0.5),
        };
        let got = theorem1_bound(&b).unwrap();
        let want = bound_reference(&b);
        worst_abs = worst_abs.max((got - want).abs());
        worst_rel = worst_rel.max((got - want).abs() / want.abs().max(1.0));
    }
    let first = BoundInputs {
        k_iters: 1,
        n: f64::INFINITY,
        gamma: 0.5,
        rho: 0.5,
        c_conc: 1.0,
        eps_c: 0.0,
        eps_dual: 0.0,
        card_f: 1.0,
        card_g: 1.0,
        delta: 0.5,
    };
    let exact = theorem1_bound(&first).unwrap();
    verdict(
        worst_rel <= C8_REL_TOL && exact == 2.0,
        format!(
            "{C8_TUPLES} tuples, max relative diff {worst_rel:.2e} (tol {C8_REL_TOL:e}, absolute {worst_abs:.2e}); \
             gamma=0.5, K=1 first term = {exact}"
        ),
    )
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_robust-rmdp")).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn pipeline(root: &Path, threads: &str) -> Result<Vec<(String, Vec<u8>)>, String> {
    let p = |name: &str| root.join(name).display().to_string();
    run_cli(&["benchmark", "--name", "risky-safe", "--out", &p("model")])?;
    let rmdp = p("model/rmdp.json");
    run_cli(&["--threads", threads, "gen-data", "--rmdp", &rmdp, "--n", "20000", "--seed", "17", "--out", &p("data")])?;
    let data = p("data/dataset.jsonl");
    run_cli(&[
        "--threads",
        threads,
        "train",
        "--data",
        &data,
        "--rmdp",
        &rmdp,
        "--rho",
        "0.2",
        "--seed",
        "17",
        "--out",
        &p("rfqi"),
    ])?;
    run_cli(&["--threads", threads, "train", "--algo", "fqi", "--data", &data, "--rmdp", &rmdp, "--out", &p("fqi")])?;
    for algo in ["rfqi", "fqi"] {
        run_cli(&[
            "--threads",
            threads,
            "eval",
            "--rmdp",
            &rmdp,
            "--policy",
            &p(&format!("{algo}/policy.json")),
            "--rho",
            "0.2",
            "--out",
            &p(&format!("eval-{algo}")),
        ])?;
    }
    let mut files = Vec::new();
    for dir in ["model", "data", "rfqi", "fqi", "eval-rfqi", "eval-fqi"] {
        let mut entries: Vec<_> = fs::read_dir(root.join(dir)).map_err(|e| e.to_string())?.flatten().collect();
        entries.sort_by_key(|e| e.file_name());
        for e in entries {
            let bytes = fs::read(e.path()).map_err(|e| e.to_string())?;
            files.push((format!("{dir}/{}", e.file_name().to_string_lossy()), bytes));
        }
    }
    Ok(files)
}

fn criterion_9() -> Verdict {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let runs = pipeline(a.path(), "1").and_then(|x| pipeline(b.path(), "4").map(|y| (x, y)));
    match runs {
        Err(e) => verdict(false, format!("pipeline failed: {e}")),
        Ok((x, y)) => {
            let names: Vec<&str> = x.iter().map(|f| f.0.as_str()).collect();
            let differing: Vec<&str> = x.iter().zip(&y).filter(|(p, q)| p != q).map(|(p, _)| p.0.as_str()).collect();
            let same = x.len() == y.len() && differing.is_empty();
            verdict(
                same && !x.is_empty(),
                format!(
                    "{} output files compared across two runs (1 and 4 threads), {} differ{}",
                    names.len(),
                    differing.len(),
                    if differing.is_empty() { String::new() } else { format!(": {differing:?}") }
                ),
            )
        }
    }
}

type Criterion = (&'static str, Option<Duration>, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 9] = [
        ("dual-primal equivalence", Some(C1_LIMIT), criterion_1),
        ("contraction", Some(C2_LIMIT), criterion_2),
        ("RQI optimality", Some(C3_LIMIT), criterion_3),
        ("tabular RFQI matches RQI", Some(C4_LIMIT), criterion_4),
        ("fail-state pinning", None, criterion_5),
        ("robustness payoff", Some(C6_LIMIT), criterion_6),
        ("sample-error decay", Some(C7_LIMIT), criterion_7),
        ("bound arithmetic", None, criterion_8),
        ("reproducibility", None, criterion_9),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.into_iter().enumerate() {
        let label = format!("criterion {} {name}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| label.contains(f.as_str())) {
            continue;
        }
        let v = timed(limit, check);
        println!("{} {label}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
