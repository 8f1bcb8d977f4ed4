//! One function per subcommand. Each reads its inputs, runs the library,
//! writes its artifacts plus `manifest.toml` under `out`, and returns a short
//! text summary for stdout.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fsc::completion::{cluster_model, restore_observed, ClusterModel};
use fsc::metrics::{clustering_error, completion_rmse, Scope};
use fsc::selection::{
    default_lambda_grid, fit_score, fused_groups, lambda_path, lambda_path_to_single, rank_sweep,
    score_bases, select_model, LambdaPathReport, SelectionOptions,
};
use fsc::spectral::{cluster, pairwise_distances};
use fsc::synth::{gen_mask_with_floor, gen_uos, UosParams};
use fsc::{BasisSet, FscConfig, MaskedMatrix};
use serde::Serialize;

use crate::config::{CommandKind, RunConfig};
use crate::error::CliError;
use crate::io::{
    fmt_f64, read_labels, read_mask, read_matrix, write_labels, write_mask, write_masked,
    write_matrix, write_table, write_text,
};

pub const MANIFEST: &str = "manifest.toml";

/// Runs a configuration and returns what to print.
pub fn run(cfg: &RunConfig) -> Result<String, CliError> {
    match cfg.command {
        CommandKind::Fit => cmd_fit(cfg),
        CommandKind::Path => cmd_path(cfg),
        CommandKind::Complete => cmd_complete(cfg),
        CommandKind::Synth => cmd_synth(cfg),
        CommandKind::Eval => cmd_eval(cfg),
        CommandKind::RankSweep => cmd_rank_sweep(cfg),
    }
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, CliError> {
    p.as_deref()
        .ok_or_else(|| CliError::Usage(format!("missing {what}")))
}

fn out_dir(cfg: &RunConfig) -> Result<&Path, CliError> {
    required(&cfg.out, "output directory (--out)")
}

fn load_input(cfg: &RunConfig) -> Result<MaskedMatrix<f64>, CliError> {
    read_matrix(required(&cfg.input, "input matrix")?, cfg.mask.as_deref())
}

/// Writes the manifest with the λ actually used.
fn write_manifest(cfg: &RunConfig, solver: &FscConfig) -> Result<(), CliError> {
    let mut m = cfg.with_absolute_inputs();
    m.solver = solver.clone();
    m.version = Some(env!("CARGO_PKG_VERSION").to_owned());
    write_text(&out_dir(cfg)?.join(MANIFEST), &m.to_toml()?)
}

fn write_summary<S: Serialize>(path: &Path, summary: &S) -> Result<(), CliError> {
    let text = toml::to_string(summary)
        .map_err(|e| CliError::Usage(format!("cannot serialize summary: {e}")))?;
    write_text(path, &text)
}

fn selection_options(solver: &FscConfig) -> SelectionOptions {
    SelectionOptions {
        cluster_seed: solver.seed,
        ..Default::default()
    }
}

/// The solver settings with λ defaulted to `1/(n·d)` when it was not given.
fn resolve_solver(cfg: &RunConfig, x: &MaskedMatrix<f64>, lambda_given: bool) -> FscConfig {
    let mut s = cfg.solver.clone();
    if !lambda_given {
        s.lambda = fsc::default_lambda(x.nrows(), x.ncols());
    }
    s
}

/// Labels for a fixed `k`, by fit score, or (at λ = 0, where nothing couples
/// the columns) the fused groups, with the cluster model.
fn model_for(
    x: &MaskedMatrix<f64>,
    bases: &BasisSet<f64>,
    k: Option<usize>,
    solver: &FscConfig,
) -> Result<(ClusterModel<f64>, f64), CliError> {
    let fixed = match k {
        Some(k) => Some(cluster(bases, Some(k), None, solver.seed)?),
        None if solver.lambda == 0.0 => Some(fused_groups(
            &pairwise_distances(bases)?,
            fsc::selection::FUSE_TOL,
        )),
        None => None,
    };
    match fixed {
        Some(labels) => {
            let model = cluster_model(x, bases, &labels)?;
            let score = fit_score(x, &model)?;
            Ok((model, score))
        }
        None => {
            let scored = score_bases(x, bases, &selection_options(solver))?;
            Ok((scored.model, scored.fit_score))
        }
    }
}

fn write_cluster_bases(dir: &Path, model: &ClusterModel<f64>) -> Result<(), CliError> {
    for (k, b) in model.cluster_bases.iter().enumerate() {
        write_matrix(
            &dir.join(format!("cluster_{}.csv", k + 1)),
            b.matrix(),
            None,
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct FitSummary {
    d: usize,
    n: usize,
    rank: usize,
    lambda: f64,
    observed_fraction: f64,
    iterations: usize,
    converged: bool,
    objective: f64,
    fused_groups: usize,
    clusters: usize,
    fit_score: f64,
}

fn cmd_fit(cfg: &RunConfig) -> Result<String, CliError> {
    cmd_fit_with(cfg, true)
}

/// `lambda_given = false` applies the default λ.
pub fn cmd_fit_with(cfg: &RunConfig, lambda_given: bool) -> Result<String, CliError> {
    let out = out_dir(cfg)?;
    let x = load_input(cfg)?;
    let solver = resolve_solver(cfg, &x, lambda_given);
    let (bases, trace) = fsc::fit(&x, &solver)?;
    let fused = fused_groups(&pairwise_distances(&bases)?, fsc::selection::FUSE_TOL);
    let (model, score) = model_for(&x, &bases, cfg.k, &solver)?;

    write_labels(&out.join("labels.txt"), &model.labels)?;
    write_labels(&out.join("fused.txt"), &fused)?;
    write_cluster_bases(&out.join("bases"), &model)?;
    let rows: Vec<Vec<String>> = trace
        .objectives
        .iter()
        .enumerate()
        .map(|(i, f)| vec![i.to_string(), fmt_f64(*f)])
        .collect();
    write_table(&out.join("trace.tsv"), &["iteration", "objective"], &rows)?;
    let summary = FitSummary {
        d: x.nrows(),
        n: x.ncols(),
        rank: solver.rank,
        lambda: solver.lambda,
        observed_fraction: x.observed_count() as f64 / (x.nrows() * x.ncols()) as f64,
        iterations: trace.iterations,
        converged: trace.converged,
        objective: trace.final_objective(),
        fused_groups: fused.num_clusters(),
        clusters: model.num_clusters(),
        fit_score: score,
    };
    write_summary(&out.join("summary.toml"), &summary)?;
    write_manifest(cfg, &solver)?;

    Ok(format!(
        "clusters\t{}\nfused_groups\t{}\niterations\t{}\nobjective\t{}\nfit_score\t{}\n",
        summary.clusters,
        summary.fused_groups,
        summary.iterations,
        fmt_f64(summary.objective),
        fmt_f64(summary.fit_score)
    ))
}

#[derive(Serialize)]
struct PathSummary {
    selected_lambda: f64,
    selected_clusters: usize,
    fit_score: f64,
    entries: usize,
    failed_entries: usize,
    single_group_lambda: Option<f64>,
}

fn path_rows(report: &LambdaPathReport<f64>) -> Vec<Vec<String>> {
    report
        .entries
        .iter()
        .map(|e| match &e.outcome {
            Ok(f) => vec![
                fmt_f64(e.lambda),
                f.cluster_count().to_string(),
                f.selected_k().to_string(),
                fmt_f64(f.objective),
                fmt_f64(f.fit_score()),
                f.trace.iterations.to_string(),
                f.trace.converged.to_string(),
                "ok".into(),
            ],
            Err(err) => vec![
                fmt_f64(e.lambda),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                format!("error: {err}"),
            ],
        })
        .collect()
}

fn cmd_path(cfg: &RunConfig) -> Result<String, CliError> {
    let out = out_dir(cfg)?;
    let x = load_input(cfg)?;
    let solver = cfg.solver.clone();
    let grid = cfg
        .grid
        .clone()
        .unwrap_or_else(|| default_lambda_grid(x.nrows(), x.ncols()));
    let opts = selection_options(&solver);
    let (report, single) = if cfg.to_single {
        lambda_path_to_single(&x, &grid, &solver, &opts)?
    } else {
        (lambda_path(&x, &grid, &solver, &opts)?, None)
    };

    write_table(
        &out.join("path.tsv"),
        &[
            "lambda",
            "cluster_count",
            "selected_k",
            "objective",
            "fit_score",
            "iterations",
            "converged",
            "status",
        ],
        &path_rows(&report),
    )?;
    for (i, e) in report.entries.iter().enumerate() {
        if let Ok(f) = &e.outcome {
            write_labels(
                &out.join("labels").join(format!("lambda_{:03}.txt", i + 1)),
                f.labels(),
            )?;
        }
    }
    let best = select_model(&report)?;
    write_labels(&out.join("labels.txt"), best.labels())?;
    write_cluster_bases(&out.join("bases"), best.model())?;
    let summary = PathSummary {
        selected_lambda: best.lambda,
        selected_clusters: best.selected_k(),
        fit_score: best.fit_score(),
        entries: report.entries.len(),
        failed_entries: report.entries.iter().filter(|e| e.outcome.is_err()).count(),
        single_group_lambda: single,
    };
    write_summary(&out.join("summary.toml"), &summary)?;
    let mut manifest = cfg.clone();
    manifest.grid = Some(grid);
    write_manifest(&manifest, &solver)?;

    let mut text = String::new();
    for e in &report.entries {
        match &e.outcome {
            Ok(f) => writeln!(
                text,
                "lambda {}\tcount {}\tK {}",
                fmt_f64(e.lambda),
                f.cluster_count(),
                f.selected_k()
            ),
            Err(err) => writeln!(text, "lambda {}\tfailed: {err}", fmt_f64(e.lambda)),
        }
        .expect("writing to a String");
    }
    writeln!(
        text,
        "selected lambda {} with {} clusters",
        fmt_f64(best.lambda),
        best.selected_k()
    )
    .expect("writing to a String");
    Ok(text)
}

#[derive(Serialize)]
struct CompleteSummary {
    lambda: f64,
    clusters: usize,
    observed_rss: f64,
    fit_score: f64,
    smooth: bool,
}

fn cmd_complete(cfg: &RunConfig) -> Result<String, CliError> {
    cmd_complete_with(cfg, true)
}

pub fn cmd_complete_with(cfg: &RunConfig, lambda_given: bool) -> Result<String, CliError> {
    let out = out_dir(cfg)?;
    let x = load_input(cfg)?;
    let solver = resolve_solver(cfg, &x, lambda_given);
    let (bases, _) = fsc::fit(&x, &solver)?;
    let (model, score) = match &cfg.labels {
        Some(p) => {
            let labels = read_labels(p)?;
            if labels.len() != x.ncols() {
                return Err(CliError::Usage(format!(
                    "{} labels for {} columns",
                    labels.len(),
                    x.ncols()
                )));
            }
            let model = cluster_model(&x, &bases, &labels)?;
            let score = fit_score(&x, &model)?;
            (model, score)
        }
        None => model_for(&x, &bases, cfg.k, &solver)?,
    };
    let mut completed = model.reconstruct();
    if !cfg.smooth {
        restore_observed(&mut completed, &x);
    }
    write_matrix(&out.join("completed.csv"), &completed, None)?;
    write_labels(&out.join("labels.txt"), &model.labels)?;
    let summary = CompleteSummary {
        lambda: solver.lambda,
        clusters: model.num_clusters(),
        observed_rss: model.observed_rss(&x),
        fit_score: score,
        smooth: cfg.smooth,
    };
    write_summary(&out.join("summary.toml"), &summary)?;
    write_manifest(cfg, &solver)?;
    Ok(format!(
        "clusters\t{}\nobserved_rss\t{}\n",
        summary.clusters,
        fmt_f64(summary.observed_rss)
    ))
}

fn cmd_synth(cfg: &RunConfig) -> Result<String, CliError> {
    let out = out_dir(cfg)?;
    let s = &cfg.synth;
    let inst = gen_uos::<f64>(UosParams {
        d: s.d,
        k: s.subspaces,
        r: s.rank,
        n_k: s.per_cluster,
        sigma: s.sigma,
        seed: s.seed,
    })?;
    let n = inst.params.n();
    let mask = gen_mask_with_floor(s.d, n, s.p, s.min_observed.max(1), s.seed)?;
    let x = MaskedMatrix::new(inst.x.clone(), mask.mask.clone())?;

    write_masked(&out.join("x.csv"), &x)?;
    write_mask(&out.join("mask.csv"), &mask.mask)?;
    write_matrix(&out.join("full.csv"), &inst.x, None)?;
    write_labels(&out.join("truth.txt"), &inst.true_labels)?;
    for (k, b) in inst.true_bases.iter().enumerate() {
        write_matrix(
            &out.join("bases").join(format!("true_{}.csv", k + 1)),
            b.matrix(),
            None,
        )?;
    }
    write_manifest(cfg, &cfg.solver)?;
    Ok(format!(
        "d\t{}\nn\t{}\nobserved_fraction\t{}\nresampled_columns\t{}\n",
        s.d,
        n,
        fmt_f64(mask.observed_fraction()),
        mask.resampled_columns.len()
    ))
}

fn cmd_eval(cfg: &RunConfig) -> Result<String, CliError> {
    let mut rows: Vec<Vec<String>> = Vec::new();
    if cfg.labels.is_some() || cfg.truth.is_some() {
        let pred = read_labels(required(&cfg.labels, "predicted labels (--pred)")?)?;
        let truth = read_labels(required(&cfg.truth, "reference labels (--truth)")?)?;
        let err = clustering_error(&pred, &truth)?;
        rows.push(vec!["clustering_error".into(), fmt_f64(err)]);
    }
    if cfg.completed.is_some() || cfg.reference.is_some() {
        let xhat = read_matrix(required(&cfg.completed, "completed matrix")?, None)?;
        let x = read_matrix(required(&cfg.reference, "reference matrix")?, None)?;
        let all = completion_rmse(xhat.values(), x.values(), Scope::All)?;
        rows.push(vec!["rmse_all".into(), fmt_f64(all)]);
        if let Some(mp) = &cfg.mask {
            let mask = read_mask(mp)?;
            let unobserved = completion_rmse(xhat.values(), x.values(), Scope::Unobserved(&mask))?;
            rows.push(vec!["rmse_unobserved".into(), fmt_f64(unobserved)]);
        }
    }
    if rows.is_empty() {
        return Err(CliError::Usage(
            "nothing to evaluate: give --pred/--truth and/or --completed/--reference".into(),
        ));
    }
    if let Some(out) = &cfg.out {
        write_table(&out.join("eval.tsv"), &["metric", "value"], &rows)?;
        write_manifest(cfg, &cfg.solver)?;
    }
    Ok(rows
        .iter()
        .map(|r| format!("{}\t{}\n", r[0], r[1]))
        .collect())
}

fn cmd_rank_sweep(cfg: &RunConfig) -> Result<String, CliError> {
    let out = out_dir(cfg)?;
    let x = load_input(cfg)?;
    if cfg.ranks.is_empty() {
        return Err(CliError::Usage("missing ranks (--ranks)".into()));
    }
    let solver = cfg.solver.clone();
    let report = rank_sweep(&x, &cfg.ranks, &solver, &selection_options(&solver))?;
    let one_based = |cols: &[usize]| {
        cols.iter()
            .map(|c| (c + 1).to_string())
            .collect::<Vec<_>>()
            .join(",")
    };
    let rows: Vec<Vec<String>> = report
        .levels
        .iter()
        .map(|l| {
            vec![
                l.rank.to_string(),
                l.columns.len().to_string(),
                l.explained.len().to_string(),
                l.selected_k.to_string(),
                l.fit_score.map(fmt_f64).unwrap_or_default(),
                fmt_f64(l.residual_mean),
                fmt_f64(l.residual_median),
                fmt_f64(l.residual_max),
                one_based(&l.explained),
            ]
        })
        .collect();
    write_table(
        &out.join("ranks.tsv"),
        &[
            "rank",
            "active",
            "explained",
            "selected_k",
            "fit_score",
            "residual_mean",
            "residual_median",
            "residual_max",
            "explained_columns",
        ],
        &rows,
    )?;
    write_manifest(cfg, &solver)?;
    let mut text = String::new();
    for l in &report.levels {
        writeln!(
            text,
            "rank {}\tactive {}\texplained {}\tK {}",
            l.rank,
            l.columns.len(),
            l.explained.len(),
            l.selected_k
        )
        .expect("writing to a String");
    }
    writeln!(text, "unexplained {}", report.unexplained.len()).expect("writing to a String");
    Ok(text)
}
