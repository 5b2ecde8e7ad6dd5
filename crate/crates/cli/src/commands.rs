use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use mmesbm::bootstrap::{approximate_standard_errors, write_intervals_csv};
use mmesbm::data::{load_covariates, load_dense_csv, load_edge_list, CovariateSchema};
use mmesbm::diagnostics::{eom_scores, write_eom_csv};
use mmesbm::gating::BetaConfig;
use mmesbm::generator::{sample_network, write_membership_csv};
use mmesbm::selection::link_probability;
use mmesbm::{
    bootstrap_beta, cross_validate, fit, gof_compare, link_probability_separation, BootstrapConfig, Config,
    Covariates, CvConfig, FitError, InitStrategy, Network, Spec, Summary, ThetaSource, ThetaSpec,
};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::args::{BootstrapArgs, CvArgs, DataArgs, FitArgs, GofArgs, InitArg, ModelArgs, PredictArgs, SimulateArgs, ThetaSourceArg};
use crate::error::CliError;

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

fn out_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))
}

fn flatten(value: &serde_json::Value, out: &mut Vec<(String, String)>) {
    if let serde_json::Value::Object(map) = value {
        for (k, v) in map {
            match v {
                serde_json::Value::Object(_) => flatten(v, out),
                serde_json::Value::Null => {}
                serde_json::Value::String(s) => out.push((k.replace('_', "-"), s.clone())),
                other => out.push((k.replace('_', "-"), other.to_string())),
            }
        }
    }
}

/// Writes the resolved settings as a run file accepted by `--config`.
fn echo_config<T: Serialize>(dir: &Path, command: &str, args: &T) -> Result<(), CliError> {
    let mut pairs = Vec::new();
    flatten(&serde_json::to_value(args)?, &mut pairs);
    let mut w = create(dir, "config.txt")?;
    writeln!(w, "# mmesbm {command} --config config.txt")?;
    for (k, v) in pairs {
        writeln!(w, "{k} = {v}")?;
    }
    Ok(())
}

/// Relative input paths become absolute so the echoed config works from
/// any directory.
fn absolute(data: &mut DataArgs) {
    for p in [&mut data.edges, &mut data.adjacency, &mut data.covariates, &mut data.schema].into_iter().flatten() {
        if let Ok(abs) = fs::canonicalize(&*p) {
            *p = abs;
        }
    }
}

fn load_network(data: &DataArgs, fallback_n: Option<usize>) -> Result<Network, CliError> {
    match (&data.edges, &data.adjacency) {
        (Some(path), _) => {
            let n = data.n_actors.or(fallback_n).ok_or_else(|| CliError::Input("--edges needs --n-actors".into()))?;
            load_edge_list(open(path)?, n).map_err(|e| CliError::from(e).context(path.display()))
        }
        (None, Some(path)) => load_dense_csv(open(path)?).map_err(|e| CliError::from(e).context(path.display())),
        (None, None) => Err(CliError::Input("give the network with --edges or --adjacency".into())),
    }
}

fn load_design(data: &DataArgs, n_actors: usize) -> Result<Covariates, CliError> {
    let Some(path) = &data.covariates else {
        return Ok(Covariates::intercept_only(n_actors));
    };
    let schema_path = data.schema.as_ref().ok_or_else(|| CliError::Input("--covariates needs --schema".into()))?;
    let text = fs::read_to_string(schema_path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", schema_path.display())))?;
    let schema = CovariateSchema::parse(&text).map_err(|e| CliError::from(e).context(schema_path.display()))?;
    load_covariates(open(path)?, &schema, n_actors).map_err(|e| CliError::from(e).context(path.display()))
}

fn model_config(args: &ModelArgs, groups: usize) -> Result<Config, CliError> {
    let config = Config {
        n_groups: groups,
        alpha1: Array2::from_elem((groups, groups), args.prior_a),
        alpha2: Array2::from_elem((groups, groups), args.prior_b),
        max_iterations: args.max_iterations,
        tolerance: args.tolerance,
        n_restarts: args.restarts,
        init: match args.init {
            InitArg::Spectral => InitStrategy::Spectral,
            InitArg::Random => InitStrategy::Random,
        },
        init_noise: args.init_noise,
        seed: args.seed,
        beta: BetaConfig {
            clip_bound: args.clip_bound,
            update_interval: args.beta_interval,
            estimate: !args.fixed_beta,
            ..BetaConfig::default()
        },
        ..Config::new(groups)
    };
    config.validate()?;
    Ok(config)
}

fn load_fit(path: &Path) -> Result<Summary, CliError> {
    serde_json::from_reader(open(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn check_design(fit: &Summary, design: &Covariates) -> Result<(), CliError> {
    if fit.covariate_names != design.names() {
        return Err(CliError::Input(format!(
            "covariates {:?} do not match the fit's {:?}",
            design.names(),
            fit.covariate_names
        )));
    }
    Ok(())
}

fn write_matrix<W: Write>(mut w: W, row_label: &str, columns: &[String], m: &Array2<f64>) -> std::io::Result<()> {
    write!(w, "{row_label}")?;
    for c in columns {
        write!(w, ",{c}")?;
    }
    writeln!(w)?;
    for (g, row) in m.rows().into_iter().enumerate() {
        write!(w, "{}", g + 1)?;
        for v in row {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

fn group_labels(g: usize) -> Vec<String> {
    (1..=g).map(|k| k.to_string()).collect()
}

pub fn fit_cmd(mut args: FitArgs) -> Result<(), CliError> {
    absolute(&mut args.data);
    let network = load_network(&args.data, None)?;
    let design = load_design(&args.data, network.n_actors())?;
    let config = model_config(&args.model, args.groups)?;
    out_dir(&args.out)?;
    echo_config(&args.out, "fit", &args)?;
    let result = match fit(&network, &design, None, &config) {
        Ok(r) => r,
        Err(FitError::NonFinite(dump)) => {
            serde_json::to_writer_pretty(create(&args.out, "state_dump.json")?, &dump)?;
            return Err(CliError::Numeric(format!(
                "lower bound became non-finite at sweep {}; last finite state in state_dump.json",
                dump.iteration
            )));
        }
        Err(e) => return Err(e.into()),
    };
    let s = &result.summary;
    serde_json::to_writer_pretty(create(&args.out, "fit.json")?, s)?;
    write_membership_csv(&s.tau_hat, create(&args.out, "tau.csv")?)?;
    write_matrix(create(&args.out, "theta.csv")?, "group", &group_labels(s.n_groups), &s.theta_hat)?;
    write_matrix(create(&args.out, "beta.csv")?, "group", &s.covariate_names, &s.beta)?;
    let mut w = create(&args.out, "elbo_trace.csv")?;
    writeln!(w, "iteration,elbo")?;
    for (k, v) in s.elbo_trace.iter().enumerate() {
        writeln!(w, "{k},{v}")?;
    }
    write_eom_csv(&eom_scores(&s.tau_hat), create(&args.out, "eom.csv")?)?;
    link_probability_separation(s, &network).write_csv(create(&args.out, "separation.csv")?)?;
    if s.n_groups > 1 {
        match approximate_standard_errors(s, &design) {
            Ok(se) => write_matrix(create(&args.out, "beta_se_approx.csv")?, "group", &s.covariate_names, &se)?,
            Err(e) => log::warn!("approximate standard errors unavailable: {e}"),
        }
    }
    if !s.converged {
        log::warn!("fit stopped after {} sweeps without converging", s.iterations);
    }
    println!(
        "groups={} elbo={} converged={} sweeps={} restart={}",
        s.n_groups, s.elbo, s.converged, s.iterations, s.restart
    );
    Ok(())
}

pub fn parse_groups(text: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::Input(format!("cannot read group counts from `{text}`; use `1..9` or `1,2,4`"));
    let groups: Vec<usize> = if let Some((a, b)) = text.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        (a..=b).collect()
    } else {
        text.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?
    };
    if groups.is_empty() || groups.contains(&0) {
        return Err(bad());
    }
    Ok(groups)
}

pub fn cv_cmd(mut args: CvArgs) -> Result<(), CliError> {
    absolute(&mut args.data);
    let groups = parse_groups(&args.groups)?;
    let network = load_network(&args.data, None)?;
    let design = load_design(&args.data, network.n_actors())?;
    let config = CvConfig { groups, k: args.folds, fold_seed: args.model.seed, model: model_config(&args.model, 1)? };
    let folds = mmesbm::data::make_folds(&network, args.folds, args.model.seed)?;
    out_dir(&args.out)?;
    echo_config(&args.out, "cv", &args)?;
    let report = cross_validate(&network, &design, &config)?;
    folds.write_csv(create(&args.out, "folds.csv")?)?;
    report.write_folds_csv(create(&args.out, "cv.csv")?)?;
    report.write_summary_csv(create(&args.out, "cv_summary.csv")?)?;
    match report.roc(report.chosen_groups) {
        Ok(curve) => curve.write_csv(create(&args.out, "roc.csv")?)?,
        Err(e) => log::warn!("no ROC curve: {e}"),
    }
    let mut w = create(&args.out, "auc.csv")?;
    writeln!(w, "G,pooled_auc")?;
    for s in &report.summary {
        writeln!(w, "{},{}", s.n_groups, s.pooled_auc.map(|v| v.to_string()).unwrap_or_default())?;
    }
    let chosen = report.summary.iter().find(|s| s.n_groups == report.chosen_groups);
    println!(
        "chosen_G={} pooled_auc={}",
        report.chosen_groups,
        chosen.and_then(|s| s.pooled_auc).map(|v| v.to_string()).unwrap_or_else(|| "NA".into())
    );
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BetaShapes {
    pub shape1: Vec<Vec<f64>>,
    pub shape2: Vec<Vec<f64>>,
}

/// JSON form of a generative spec. Relative covariate paths are read
/// relative to the spec file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    pub n_actors: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariates: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<PathBuf>,
    /// One row per group, one column per covariate (intercept first).
    pub beta: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_prior: Option<BetaShapes>,
    #[serde(default)]
    pub seed: u64,
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<Array2<f64>, CliError> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(CliError::Input(format!("`{what}` must be a non-empty rectangular matrix")));
    }
    Ok(Array2::from_shape_fn((rows.len(), ncols), |(i, j)| rows[i][j]))
}

pub fn simulate_cmd(args: SimulateArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.spec)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", args.spec.display())))?;
    let mut spec: SimulationSpec =
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", args.spec.display())))?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let base = args.spec.parent().unwrap_or(Path::new("."));
    for p in [&mut spec.covariates, &mut spec.schema].into_iter().flatten() {
        if p.is_relative() {
            *p = base.join(&*p);
        }
        if let Ok(abs) = fs::canonicalize(&*p) {
            *p = abs;
        }
    }
    let data = DataArgs {
        edges: None,
        adjacency: None,
        n_actors: Some(spec.n_actors),
        covariates: spec.covariates.clone(),
        schema: spec.schema.clone(),
    };
    if data.covariates.is_some() && data.schema.is_none() {
        return Err(CliError::Input("spec `covariates` needs `schema`".into()));
    }
    let design = load_design(&data, spec.n_actors)?;
    let theta = match (&spec.theta, &spec.theta_prior) {
        (Some(t), None) => ThetaSpec::Fixed(matrix(t, "theta")?),
        (None, Some(p)) => ThetaSpec::Beta { shape1: matrix(&p.shape1, "shape1")?, shape2: matrix(&p.shape2, "shape2")? },
        _ => return Err(CliError::Input("spec needs exactly one of `theta` and `theta_prior`".into())),
    };
    let generative = Spec { covariates: design, beta: matrix(&spec.beta, "beta")?, theta, seed: spec.seed };
    let (network, latent) = sample_network(&generative)?;
    out_dir(&args.out)?;
    serde_json::to_writer_pretty(create(&args.out, "spec.json")?, &spec)?;
    network.write_edge_list(create(&args.out, "network.edges")?)?;
    latent.write_tau_csv(create(&args.out, "tau_true.csv")?)?;
    latent.write_roles_csv(create(&args.out, "roles.csv")?)?;
    println!("actors={} links={} density={}", network.n_actors(), network.n_observed_links(), network.density());
    Ok(())
}

pub fn bootstrap_cmd(mut args: BootstrapArgs) -> Result<(), CliError> {
    absolute(&mut args.data);
    if args.replicates < 2 {
        return Err(CliError::Input("quantile intervals need at least 2 replicates".into()));
    }
    let reference = load_fit(&args.fit)?;
    let network = load_network(&args.data, Some(reference.n_actors))?;
    let design = load_design(&args.data, network.n_actors())?;
    check_design(&reference, &design)?;
    let config = BootstrapConfig {
        replicates: args.replicates,
        seed: args.seed,
        theta_source: match args.theta_source {
            ThetaSourceArg::PosteriorMean => ThetaSource::PosteriorMean,
            ThetaSourceArg::PosteriorDraw => ThetaSource::PosteriorDraw,
        },
        ..BootstrapConfig::default()
    };
    out_dir(&args.out)?;
    echo_config(&args.out, "bootstrap", &args)?;
    let report = bootstrap_beta(&reference, &network, &design, &config)?;
    report.write_samples_csv(create(&args.out, "bootstrap_samples.csv")?)?;
    let rows = report.intervals().map_err(|e| CliError::Numeric(e.to_string()))?;
    write_intervals_csv(&rows, create(&args.out, "bootstrap_summary.csv")?)?;
    println!(
        "replicates={} non_converged={} significant={}",
        args.replicates,
        report.n_failed,
        rows.iter().filter(|r| r.significant).count()
    );
    Ok(())
}

pub fn gof_cmd(mut args: GofArgs) -> Result<(), CliError> {
    absolute(&mut args.data);
    let reference = load_fit(&args.fit)?;
    let network = load_network(&args.data, Some(reference.n_actors))?;
    let design = load_design(&args.data, network.n_actors())?;
    check_design(&reference, &design)?;
    out_dir(&args.out)?;
    echo_config(&args.out, "gof", &args)?;
    let report = gof_compare(&reference, &network, &design, args.simulations, args.seed)?;
    report.write_csv(create(&args.out, "gof.csv")?)?;
    write_eom_csv(&eom_scores(&reference.tau_hat), create(&args.out, "eom.csv")?)?;
    link_probability_separation(&reference, &network).write_csv(create(&args.out, "separation.csv")?)?;
    println!("simulations={}", report.simulated.len());
    Ok(())
}

pub fn predict_cmd(args: PredictArgs) -> Result<(), CliError> {
    let reference = load_fit(&args.fit)?;
    let n = reference.n_actors;
    let pairs: Vec<(usize, usize)> = match &args.pairs {
        Some(path) => {
            let net = load_edge_list(open(path)?, n).map_err(|e| CliError::from(e).context(path.display()))?;
            net.observed_links().collect()
        }
        None => Network::empty(n).all_dyads().collect(),
    };
    out_dir(&args.out)?;
    echo_config(&args.out, "predict", &args)?;
    let mut w = create(&args.out, "predictions.csv")?;
    writeln!(w, "i,j,p_hat")?;
    for (i, j) in pairs {
        let p = link_probability(&reference.theta_hat, reference.tau_hat.row(i), reference.tau_hat.row(j));
        writeln!(w, "{},{},{}", i + 1, j + 1, p)?;
    }
    Ok(())
}
