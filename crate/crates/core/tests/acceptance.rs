//! End-to-end acceptance checks. Each check prints one PASS/FAIL/SKIP line
//! and a summary follows. Failures only change the exit status when
//! `ACCEPTANCE_STRICT=1` is set.
//!
//! Run a subset with `cargo test -p mmesbm --test acceptance -- <name>`.

use std::path::PathBuf;
use std::time::Instant;

use mmesbm::data::{ColumnKind, CovariateMatrix};
use mmesbm::diagnostics::geodesic_distribution;
use mmesbm::gating::{beta_gradient, beta_hessian, DirichletPriorTable};
use mmesbm::vb::{compute_elbo, update_gamma, update_zeta, VariationalState};
use mmesbm::*;
use ndarray::{array, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;

type Outcome = Result<String, String>;

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let checks: [(&str, fn() -> Outcome); 10] = [
        ("gradient_hessian", gradient_hessian),
        ("elbo_monotone", elbo_monotone),
        ("single_group_exact", single_group_exact),
        ("small_instance_bound", small_instance_bound),
        ("parameter_recovery", parameter_recovery),
        ("covariate_sign", covariate_sign),
        ("model_selection", model_selection),
        ("predictive_normalization", predictive_normalization),
        ("eom_and_geodesics", eom_and_geodesics),
        ("friendship_network", friendship_network),
    ];
    let (mut passed, mut failed, mut skipped) = (0, 0, 0);
    for (name, check) in checks {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) if detail.starts_with("skipped") => {
                skipped += 1;
                println!("SKIP {name}: {detail} [{secs:.1}s]");
            }
            Ok(detail) => {
                passed += 1;
                println!("PASS {name}: {detail} [{secs:.1}s]");
            }
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    println!("acceptance: {passed} passed, {failed} failed, {skipped} skipped");
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}

fn random_network<R: Rng>(n: usize, density: f64, rng: &mut R) -> Network {
    let adj: Vec<bool> = (0..n * n).map(|_| rng.random::<f64>() < density).collect();
    Network::from_adjacency(n, &adj)
}

fn random_covariates<R: Rng>(n: usize, p: usize, rng: &mut R) -> CovariateMatrix<f64> {
    let cols = (1..p)
        .map(|c| {
            if c % 2 == 1 {
                let raw = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
                (format!("x{c}"), ColumnKind::Continuous, raw)
            } else {
                let raw = (0..n).map(|i| if i % 2 == 0 || rng.random::<f64>() < 0.3 { 1.0 } else { 0.0 }).collect();
                (format!("b{c}"), ColumnKind::Binary, raw)
            }
        })
        .collect();
    CovariateMatrix::from_columns(n, cols).expect("valid covariates")
}

fn planted_three_groups(seed: u64) -> (Network, Array2<f64>, Array2<f64>, CovariateMatrix<f64>) {
    let n = 100;
    let cov = CovariateMatrix::<f64>::intercept_only(n);
    let theta = Array2::from_shape_fn((3, 3), |(g, h)| if g == h { 0.8 } else { 0.05 });
    let spec = GenerativeSpec {
        covariates: cov.clone(),
        beta: array![[-3.0], [-3.0], [-3.0]],
        theta: ThetaSpec::Fixed(theta.clone()),
        seed,
    };
    let (net, latent) = sample_network(&spec).expect("valid spec");
    (net, latent.tau, theta, cov)
}

fn argmax(row: ndarray::ArrayView1<'_, f64>) -> usize {
    row.iter().enumerate().fold(0, |best, (k, &v)| if v > row[best] { k } else { best })
}

fn gradient_hessian() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_grad, mut worst_hess, mut worst_sym) = (0.0f64, 0.0f64, 0.0f64);
    let h = 1e-5;
    for _ in 0..100 {
        let n = rng.random_range(2..=10);
        let g = rng.random_range(1..=3);
        let p = rng.random_range(1..=3);
        let net = random_network(n, rng.random_range(0.1..0.6), &mut rng);
        let cov = random_covariates(n, p, &mut rng);
        let alpha = Array2::<f64>::ones((g, g));
        let mut state = VariationalState::random(&net, g, 0.5, &mut rng);
        update_gamma(&mut state, &net, &DirichletPriorTable::ones(n, g));
        update_zeta(&mut state, &net, &alpha, &alpha);
        let beta = Array2::from_shape_fn((g, p), |_| rng.random_range(-1.5..1.5));

        let elbo_at = |b: &Array2<f64>| {
            let delta = DirichletPriorTable::from_beta(b, &cov).unwrap();
            compute_elbo(&state, &net, &delta, &alpha, &alpha)
        };
        let grad = beta_gradient(&beta, &cov, &state.gamma).map_err(|e| e.to_string())?;
        let hess = beta_hessian(&beta, &cov, &state.gamma).map_err(|e| e.to_string())?;
        for k in 0..g * p {
            let (a, b) = (k / p, k % p);
            let mut up = beta.clone();
            up[[a, b]] += h;
            let mut down = beta.clone();
            down[[a, b]] -= h;
            let fd = (elbo_at(&up) - elbo_at(&down)) / (2.0 * h);
            worst_grad = worst_grad.max((fd - grad[k]).abs() / grad[k].abs().max(1.0));

            let g_up = beta_gradient(&up, &cov, &state.gamma).unwrap();
            let g_down = beta_gradient(&down, &cov, &state.gamma).unwrap();
            let fd_col: Array1<f64> = (&g_up - &g_down) / (2.0 * h);
            for r in 0..g * p {
                worst_hess = worst_hess.max((fd_col[r] - hess[[r, k]]).abs() / hess[[r, k]].abs().max(1.0));
                worst_sym = worst_sym.max((hess[[r, k]] - hess[[k, r]]).abs());
            }
        }
    }
    let detail = format!("max rel err gradient {worst_grad:.2e}, hessian {worst_hess:.2e}, asymmetry {worst_sym:.2e}");
    if worst_grad < 1e-5 && worst_hess < 1e-4 && worst_sym <= 1e-10 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn elbo_monotone() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_drop = 0.0f64;
    let mut sweeps = 0;
    for run in 0..20u64 {
        let n = 30;
        let g = [2, 3, 4][run as usize % 3];
        let net = random_network(n, rng.random_range(0.05..0.4), &mut rng);
        let cov = random_covariates(n, 3, &mut rng);
        let mut config = ModelConfig::new(g).with_seed(run).with_restarts(1);
        if run % 2 == 1 {
            config.init = InitStrategy::Random;
        }
        let res = fit(&net, &cov, None, &config).map_err(|e| format!("fit {run}: {e}"))?;
        let trace = &res.summary.elbo_trace;
        sweeps += trace.len();
        for w in trace.windows(2) {
            worst_drop = worst_drop.max(w[0] - w[1]);
        }
    }
    let detail = format!("largest decrease {worst_drop:.2e} over {sweeps} recorded sweeps");
    if worst_drop <= 1e-8 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn single_group_exact() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for run in 0..10u64 {
        let n = rng.random_range(5..=40);
        let mut net = random_network(n, rng.random_range(0.02..0.7), &mut rng);
        if run % 2 == 1 {
            // hide one fold so the counts cover observed dyads only
            let folds = mmesbm::data::make_folds(&net, 4, run).unwrap();
            net = mmesbm::data::mask_fold(&net, &folds, 1).unwrap();
        }
        let cov = random_covariates(n, 2, &mut rng);
        let res = fit(&net, &cov, None, &ModelConfig::new(1).with_seed(run)).map_err(|e| e.to_string())?;
        let total = net.n_observed() as f64;
        let links = net.n_observed_links() as f64;
        let exact = ln_beta(1.0 + links, 1.0 + total - links) - ln_beta(1.0, 1.0);
        worst = worst.max((res.summary.elbo - exact).abs());
        let theta = res.summary.theta_hat[[0, 0]];
        let want = (links + 1.0) / (total + 2.0);
        if theta != want {
            return Err(format!("network {run}: theta {theta} but (m+1)/(M+2) = {want}"));
        }
    }
    let detail = format!("max |elbo - log marginal| {worst:.2e}; theta exact on all 10");
    if worst < 1e-8 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// log ∫ Π_k τ_{z_k} dDir(τ | δ) for an ordered sequence with group counts c.
fn ln_dirichlet_multinomial(delta: &[f64], counts: &[usize]) -> f64 {
    let total_delta: f64 = delta.iter().sum();
    let total: usize = counts.iter().sum();
    let mut v = ln_gamma(total_delta) - ln_gamma(total_delta + total as f64);
    for (&d, &c) in delta.iter().zip(counts) {
        v += ln_gamma(d + c as f64) - ln_gamma(d);
    }
    v
}

fn exact_log_marginal(net: &Network, delta: &Array2<f64>) -> f64 {
    let n = net.n_actors();
    let g = delta.ncols();
    let dyads: Vec<(usize, usize)> = net.observed_dyads().collect();
    let configs = (g * g).pow(dyads.len() as u32);
    let mut terms = Vec::with_capacity(configs);
    for code in 0..configs {
        let mut rest = code;
        let mut counts = vec![vec![0usize; g]; n];
        let mut ones = vec![0usize; g * g];
        let mut zeros = vec![0usize; g * g];
        for &(i, j) in &dyads {
            let pair = rest % (g * g);
            rest /= g * g;
            let (a, b) = (pair / g, pair % g);
            counts[i][a] += 1;
            counts[j][b] += 1;
            if net.link(i, j) {
                ones[pair] += 1;
            } else {
                zeros[pair] += 1;
            }
        }
        let mut v = 0.0;
        for (i, c) in counts.iter().enumerate() {
            v += ln_dirichlet_multinomial(&delta.row(i).to_vec(), c);
        }
        for cell in 0..g * g {
            v += ln_beta(1.0 + ones[cell] as f64, 1.0 + zeros[cell] as f64) - ln_beta(1.0, 1.0);
        }
        terms.push(v);
    }
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

fn small_instance_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_gap = 0.0f64;
    let mut details = Vec::new();
    for run in 0..8u64 {
        let net = random_network(3, [0.2, 0.5, 0.8][run as usize % 3], &mut rng);
        let cov = CovariateMatrix::<f64>::intercept_only(3);
        let mut config = ModelConfig::new(2).with_seed(run);
        config.tolerance = 1e-12;
        config.max_iterations = 5000;
        let res = fit(&net, &cov, None, &config).map_err(|e| e.to_string())?;
        let delta = DirichletPriorTable::from_beta(&res.summary.beta, &cov).unwrap();
        let elbo = compute_elbo(&res.state, &net, &delta, &config.alpha1, &config.alpha2);
        let exact = exact_log_marginal(&net, delta.values());
        let gap = exact - elbo;
        details.push(format!("{gap:.3}"));
        if gap < -1e-9 {
            return Err(format!("network {run}: elbo {elbo} exceeds exact log marginal {exact}"));
        }
        worst_gap = worst_gap.max(gap);
    }
    let detail = format!("gaps [{}] nats, max {worst_gap:.3}", details.join(", "));
    if worst_gap < 0.5 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn parameter_recovery() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for seed in [500u64, 501, 502] {
        let (net, tau, theta, cov) = planted_three_groups(seed);
        let res = fit(&net, &cov, None, &ModelConfig::new(3).with_seed(seed)).map_err(|e| e.to_string())?;
        let s = &res.summary;
        let perm = align_groups(&tau, &s.tau_hat);
        let mut err = 0.0f64;
        for g in 0..3 {
            for h in 0..3 {
                err = err.max((s.theta_hat[[perm[g], perm[h]]] - theta[[g, h]]).abs());
            }
        }
        let agree = (0..net.n_actors())
            .filter(|&i| perm[argmax(tau.row(i))] == argmax(s.tau_hat.row(i)))
            .count() as f64
            / net.n_actors() as f64;
        ok &= err < 0.1 && agree >= 0.9;
        details.push(format!("seed {seed}: theta err {err:.3}, agreement {:.0}%", 100.0 * agree));
    }
    let detail = details.join("; ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn covariate_sign() -> Outcome {
    let n = 100;
    let d: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
    let cov = CovariateMatrix::<f64>::from_columns(n, vec![("d".into(), ColumnKind::Binary, d)]).unwrap();
    let mut passed = 0;
    let mut misses = Vec::new();
    for rep in 0..100u64 {
        let sign = if rep % 2 == 0 { 1.0 } else { -1.0 };
        let spec = GenerativeSpec {
            covariates: cov.clone(),
            beta: array![[-1.0, 2.0 * sign], [-1.0, 0.0]],
            theta: ThetaSpec::Fixed(array![[0.5, 0.05], [0.05, 0.5]]),
            seed: 1000 + rep,
        };
        let (net, latent) = sample_network(&spec).map_err(|e| e.to_string())?;
        let mut config = ModelConfig::new(2).with_seed(rep * 10);
        config.tolerance = 1e-5;
        let res = match fit(&net, &cov, None, &config) {
            Ok(r) => r,
            Err(e) => {
                misses.push(format!("{rep}: fit {e}"));
                continue;
            }
        };
        let group = align_groups(&latent.tau, &res.summary.tau_hat)[0];
        let boot = BootstrapConfig { replicates: 50, seed: rep * 100, ..Default::default() };
        let intervals = match bootstrap_beta(&res.summary, &net, &cov, &boot).and_then(|b| b.intervals()) {
            Ok(iv) => iv,
            Err(e) => {
                misses.push(format!("{rep}: bootstrap {e}"));
                continue;
            }
        };
        let row = intervals.iter().find(|r| r.group == group && r.covariate == "d").expect("interval for d");
        if res.summary.beta[[group, 1]].signum() == sign && row.significant && row.lower.signum() == sign {
            passed += 1;
        } else {
            misses.push(format!("{rep}: est {:.2} [{:.2}, {:.2}]", res.summary.beta[[group, 1]], row.lower, row.upper));
        }
    }
    let detail = format!("{passed}/100 correct sign with interval excluding zero; misses {misses:?}");
    if passed >= 80 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn model_selection() -> Outcome {
    let mut chosen = Vec::new();
    for rep in 0..10u64 {
        let (net, _, _, cov) = planted_three_groups(500 + rep);
        let mut model = ModelConfig::new(1).with_restarts(3).with_seed(rep);
        model.tolerance = 1e-5;
        let config = CvConfig { groups: (1..=5).collect(), k: 5, fold_seed: rep, model };
        let report = cross_validate(&net, &cov, &config).map_err(|e| e.to_string())?;
        chosen.push(report.chosen_groups);
    }
    let hits = chosen.iter().filter(|&&g| g == 3).count();
    let detail = format!("chose G=3 in {hits}/10 (choices {chosen:?})");
    if hits >= 8 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn predictive_normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    let simplex = |g: usize, rng: &mut ChaCha8Rng| {
        let raw: Vec<f64> = (0..g).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
        let total: f64 = raw.iter().sum();
        Array1::from_iter(raw.into_iter().map(|v| v / total))
    };
    for _ in 0..1000 {
        let g = rng.random_range(1..=6);
        let theta = Array2::from_shape_fn((g, g), |_| rng.random_range(0.001..0.999));
        let (ti, tj) = (simplex(g, &mut rng), simplex(g, &mut rng));
        let total = holdout_loglik(&theta, ti.view(), tj.view(), true).exp()
            + holdout_loglik(&theta, ti.view(), tj.view(), false).exp();
        worst = worst.max((total - 1.0).abs());
    }
    let detail = format!("max |sum - 1| {worst:.2e} over 1000 cases");
    if worst <= 1e-12 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn floyd_warshall(net: &Network) -> Vec<Vec<usize>> {
    let n = net.n_actors();
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j && net.is_observed(i, j) && net.link(i, j) {
                d[i][j] = 1;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

fn eom_and_geodesics() -> Outcome {
    let cases: [(Array2<f64>, f64); 4] = [
        (array![[1.0, 0.0, 0.0]], 1.0),
        (array![[0.25, 0.25, 0.25, 0.25]], 4.0),
        (array![[0.5, 0.5, 0.0, 0.0]], 2.0),
        (array![[0.0, 1.0]], 1.0),
    ];
    for (tau, want) in &cases {
        let got = eom_scores(tau)[0];
        if (got - want).abs() > 1e-12 {
            return Err(format!("EoM of {tau} is {got}, expected {want}"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for run in 0..50 {
        let n = rng.random_range(1..=20);
        let net = random_network(n, rng.random_range(0.0..0.3), &mut rng);
        let d = floyd_warshall(&net);
        let mut by_distance = vec![0usize; n.saturating_sub(1)];
        let mut unreachable = 0;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                if d[i][j] < n {
                    by_distance[d[i][j] - 1] += 1;
                } else {
                    unreachable += 1;
                }
            }
        }
        let got = geodesic_distribution(&net);
        if got.by_distance != by_distance || got.unreachable != unreachable {
            return Err(format!("network {run} (N={n}): {got:?} vs brute force {by_distance:?} + {unreachable}"));
        }
    }
    Ok("4 closed-form EoM cases exact; geodesics match Floyd-Warshall on 50 networks".into())
}

fn friendship_dir() -> Option<PathBuf> {
    let candidates = [
        std::env::var_os("LAZEGA_DIR").map(PathBuf::from),
        Some(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/lazega")),
    ];
    candidates
        .into_iter()
        .flatten()
        .find(|d| d.join("ELfriend.dat").is_file() && d.join("ELattr.dat").is_file())
}

fn read_table(path: &std::path::Path) -> Result<Vec<Vec<f64>>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|e| format!("{}: {e}", path.display())))
                .collect()
        })
        .collect()
}

fn friendship_network() -> Outcome {
    let Some(dir) = friendship_dir() else {
        return Ok("skipped: set LAZEGA_DIR to a directory holding ELfriend.dat and ELattr.dat".into());
    };
    let adj = read_table(&dir.join("ELfriend.dat"))?;
    let attr = read_table(&dir.join("ELattr.dat"))?;
    let n = adj.len();
    if attr.len() != n || adj.iter().any(|r| r.len() != n) || attr.iter().any(|r| r.len() < 8) {
        return Err(format!("expected a square adjacency and 8 attribute columns for {n} actors"));
    }
    let flat: Vec<bool> = adj.iter().flatten().map(|&v| v != 0.0).collect();
    let net = Network::from_adjacency(n, &flat);
    // columns: id, status, gender, office, years, age, practice, law school
    let column = |c: usize| attr.iter().map(|r| r[c]).collect::<Vec<f64>>();
    let indicator = |c: usize, level: f64| attr.iter().map(|r| if r[c] == level { 1.0 } else { 0.0 }).collect();
    let cov = CovariateMatrix::from_columns(
        n,
        vec![
            ("seniority".into(), ColumnKind::Continuous, column(4)),
            ("age".into(), ColumnKind::Continuous, column(5)),
            ("associate".into(), ColumnKind::Binary, indicator(1, 2.0)),
            ("female".into(), ColumnKind::Binary, indicator(2, 2.0)),
            ("corporate".into(), ColumnKind::Binary, indicator(6, 2.0)),
            ("school_uconn".into(), ColumnKind::Dummy, indicator(7, 2.0)),
            ("school_other".into(), ColumnKind::Dummy, indicator(7, 3.0)),
        ],
    )
    .map_err(|e| e.to_string())?;
    let model = ModelConfig::new(4).with_seed(0);
    let res = fit(&net, &cov, None, &model).map_err(|e| e.to_string())?;
    let theta = &res.summary.theta_hat;
    let cv = CvConfig { groups: vec![4], k: 10, fold_seed: 0, model };
    let report = cross_validate(&net, &cov, &cv).map_err(|e| e.to_string())?;
    let auc = report.summary[0].pooled_auc.unwrap_or(0.0);
    let strong_diagonal = (0..4).filter(|&g| theta[[g, g]] > 0.5).count();
    let isolated = (0..4).any(|g| (0..4).all(|h| theta[[g, h]] < 0.05 && theta[[h, g]] < 0.05));
    let detail = format!("pooled AUC {auc:.3}, {strong_diagonal} diagonal > 0.5, isolated group {isolated}, theta {theta:.2}");
    if auc >= 0.80 && strong_diagonal >= 3 && isolated {
        Ok(detail)
    } else {
        Err(detail)
    }
}
