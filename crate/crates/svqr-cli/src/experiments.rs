//! The five benchmark experiments.
//!
//! Each experiment sweeps a fixed parameter grid, runs every (cell, trial)
//! pair independently (in parallel up to `--jobs`), and emits
//! `report.json`, an aggregate `table.csv` and `plot_*.csv` series into
//! the output directory. Cell parameters the source tables leave
//! unstated (kernel width, C, the noise scale of the first sweep) are
//! fixed here and recorded in the report metadata.

use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use svqr::data::Dataset;
use svqr::error::{Error, Result};
use svqr::kernel::KernelSpec;
use svqr::loss::Tau;
use svqr::metrics::{mae_vs_truth, rmse_vs_truth, sparsity, tube_stats};
use svqr::model::{fit, sv_zero_tolerance, FitConfig, TrainedModel};
use svqr::synth::{generate, true_quantile, NoiseModel, SynthSpec};

use crate::dataio::{fmt_f64, load_servo, Scaling};
use crate::report::{cell, derive_seed, mean_of, CellRecord, ExperimentReport, ReportMeta, Table};

pub struct ExperimentOpts {
    pub trials: Option<usize>,
    pub seed: u64,
    pub jobs: usize,
    pub out: PathBuf,
    pub sigma: Option<f64>,
    pub servo: PathBuf,
    pub tol: f64,
    pub max_iter: usize,
    pub max_l: Option<usize>,
}

type MetricFn = fn(&CellRecord) -> Option<f64>;

const TEST_POINTS: usize = 1000;
const TEST_STREAM: u64 = 0x7E57;

pub fn run(id: u8, opts: &ExperimentOpts) -> Result<ExperimentReport> {
    std::fs::create_dir_all(&opts.out)
        .map_err(|e| Error::invalid(format!("cannot create {}: {e}", opts.out.display())))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    let report = pool.install(|| match id {
        1 => exp1(opts),
        2 => exp2(opts),
        3 => exp3(opts),
        4 => exp4(opts),
        5 => exp5(opts),
        other => Err(Error::invalid(format!("unknown experiment id {other}"))),
    })?;
    report.write_json(&opts.out)?;
    Ok(report)
}

/// Fit one nu-model cell on synthetic data and evaluate it on 1000 fresh
/// points drawn from a seed derived from the training seed.
#[allow(clippy::too_many_arguments)]
fn synth_nu_record(
    noise: NoiseModel,
    l: usize,
    tau: Tau,
    nu: f64,
    q: f64,
    c: f64,
    seed: u64,
    trial: usize,
    tol: f64,
    max_iter: usize,
) -> Result<CellRecord> {
    let start = Instant::now();
    let train_spec = SynthSpec { noise, len: l, seed };
    let train = generate(&train_spec)?;
    let cfg = FitConfig::nu_svqr(tau, c, nu, KernelSpec::rbf(q)).with_solver(tol, max_iter);
    let model = fit(&train, &cfg)?;
    let stats = tube_stats(&model, &train)?;

    let test_spec = SynthSpec {
        noise,
        len: TEST_POINTS,
        seed: derive_seed(seed, TEST_STREAM, 0),
    };
    let test = generate(&test_spec)?;
    let preds = model.predict(&test.x)?;
    let truth: Vec<f64> = (0..test.len())
        .map(|i| true_quantile(&test_spec, tau, test.x.get(i, 0)))
        .collect::<Result<_>>()?;

    let mut rec = CellRecord::blank(tau.value(), c, q, l, seed, trial);
    rec.nu = Some(nu);
    if let NoiseModel::Ad1 { sigma } = noise {
        rec.sigma = Some(sigma);
    }
    rec.eps_recovered = Some(model.eps_width);
    rec.frac_sv = Some(stats.frac_sv);
    rec.frac_errors = Some(stats.frac_errors);
    rec.ratio = stats.ratio_above_below.is_finite().then_some(stats.ratio_above_below);
    rec.rmse = Some(rmse_vs_truth(&preds, &truth)?);
    rec.mae = Some(mae_vs_truth(&preds, &truth)?);
    rec.degenerate = model.diagnostics.recovery_degenerate;
    rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(rec)
}

fn nu_grid() -> Vec<f64> {
    (1..=20).map(|k| k as f64 / 20.0).collect()
}

/// Tube-budget sweep: nu from 0.05 to 1.0 for four quantile levels on the
/// Gaussian-noise dataset.
fn exp1(opts: &ExperimentOpts) -> Result<ExperimentReport> {
    let taus = [0.2, 0.5, 0.7, 0.8];
    let nus = nu_grid();
    let trials = opts.trials.unwrap_or(10);
    let sigma = opts.sigma.unwrap_or(0.2);
    let (l, q) = (200usize, 0.125);
    let c = l as f64;

    let mut jobs = Vec::new();
    for (ti, &tau) in taus.iter().enumerate() {
        for (ni, &nu) in nus.iter().enumerate() {
            for trial in 0..trials {
                let cell_idx = (ti * nus.len() + ni) as u64;
                jobs.push((tau, nu, derive_seed(opts.seed, cell_idx, trial as u64), trial));
            }
        }
    }
    let records: Vec<CellRecord> = jobs
        .par_iter()
        .map(|&(tau, nu, seed, trial)| {
            synth_nu_record(
                NoiseModel::Ad1 { sigma },
                l,
                Tau::new(tau)?,
                nu,
                q,
                c,
                seed,
                trial,
                opts.tol,
                opts.max_iter,
            )
        })
        .collect::<Result<_>>()?;

    let mut table = Table::new(
        std::iter::once("tau".to_string())
            .chain(std::iter::once("metric".to_string()))
            .chain(nus.iter().map(|n| format!("nu_{n:.2}")))
            .collect(),
    );
    for &tau in &taus {
        let mut plot = Table::new(
            ["nu", "eps", "sv", "error", "rmse", "mae"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        );
        let metrics: [(&str, MetricFn); 5] = [
            ("eps", |r| r.eps_recovered),
            ("sv", |r| r.frac_sv),
            ("error", |r| r.frac_errors),
            ("rmse", |r| r.rmse),
            ("mae", |r| r.mae),
        ];
        for (name, get) in metrics {
            let mut row = vec![fmt_f64(tau), name.to_string()];
            for &nu in &nus {
                let cells: Vec<&CellRecord> = records
                    .iter()
                    .filter(|r| r.tau == tau && r.nu == Some(nu))
                    .collect();
                row.push(cell(mean_of(&cells, get)));
            }
            table.push(row);
        }
        for &nu in &nus {
            let cells: Vec<&CellRecord> = records
                .iter()
                .filter(|r| r.tau == tau && r.nu == Some(nu))
                .collect();
            plot.push(vec![
                fmt_f64(nu),
                cell(mean_of(&cells, |r| r.eps_recovered)),
                cell(mean_of(&cells, |r| r.frac_sv)),
                cell(mean_of(&cells, |r| r.frac_errors)),
                cell(mean_of(&cells, |r| r.rmse)),
                cell(mean_of(&cells, |r| r.mae)),
            ]);
        }
        plot.write(&opts.out.join(format!("plot_exp1_tau{tau}.csv")))?;
    }
    table.write(&opts.out.join("table.csv"))?;

    Ok(ExperimentReport::new(
        ReportMeta {
            experiment: "exp1".into(),
            seed: opts.seed,
            trials,
            jobs: opts.jobs,
            solver_tol: opts.tol,
            solver_max_iter: opts.max_iter,
            sigma: Some(sigma),
            preprocessing: "none".into(),
            grid: format!("ad1 l={l} q={q} C={c}; tau in {taus:?}; nu 0.05..1.00 step 0.05"),
        },
        records,
    ))
}

/// Sample-size sweep at nu = 0.8: the support-vector and error fractions
/// converge to nu and the above/below ratio to (1-tau)/tau.
fn exp2(opts: &ExperimentOpts) -> Result<ExperimentReport> {
    let taus = [0.1, 0.3, 0.7, 0.9];
    let all_sizes = [100usize, 200, 500, 1000, 3000, 5000];
    let sizes: Vec<usize> = all_sizes
        .iter()
        .copied()
        .filter(|&l| opts.max_l.is_none_or(|cap| l <= cap))
        .collect();
    let trials = opts.trials.unwrap_or(1);
    let sigma = opts.sigma.unwrap_or(0.2);
    let (nu, q) = (0.8, 1.0);

    let mut jobs = Vec::new();
    for (ti, &tau) in taus.iter().enumerate() {
        for (li, &l) in sizes.iter().enumerate() {
            for trial in 0..trials {
                let cell_idx = (ti * sizes.len() + li) as u64;
                jobs.push((tau, l, derive_seed(opts.seed, cell_idx, trial as u64), trial));
            }
        }
    }
    let records: Vec<CellRecord> = jobs
        .par_iter()
        .map(|&(tau, l, seed, trial)| {
            synth_nu_record(
                NoiseModel::Ad1 { sigma },
                l,
                Tau::new(tau)?,
                nu,
                q,
                2.0 * l as f64,
                seed,
                trial,
                opts.tol,
                opts.max_iter,
            )
        })
        .collect::<Result<_>>()?;

    let mut table = Table::new(
        ["tau", "metric"]
            .iter()
            .map(|s| s.to_string())
            .chain(sizes.iter().map(|l| format!("l_{l}")))
            .collect(),
    );
    for &tau in &taus {
        let metrics: [(&str, MetricFn); 5] = [
            ("sv", |r| r.frac_sv),
            ("error", |r| r.frac_errors),
            ("ratio", |r| r.ratio),
            ("eps", |r| r.eps_recovered),
            ("rmse", |r| r.rmse),
        ];
        let mut plot = Table::new(
            ["l", "sv", "error", "ratio", "eps", "rmse"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        );
        for (name, get) in metrics {
            let mut row = vec![fmt_f64(tau), name.to_string()];
            for &l in &sizes {
                let cells: Vec<&CellRecord> = records
                    .iter()
                    .filter(|r| r.tau == tau && r.l == l)
                    .collect();
                row.push(cell(mean_of(&cells, get)));
            }
            table.push(row);
        }
        for &l in &sizes {
            let cells: Vec<&CellRecord> = records
                .iter()
                .filter(|r| r.tau == tau && r.l == l)
                .collect();
            plot.push(vec![
                l.to_string(),
                cell(mean_of(&cells, |r| r.frac_sv)),
                cell(mean_of(&cells, |r| r.frac_errors)),
                cell(mean_of(&cells, |r| r.ratio)),
                cell(mean_of(&cells, |r| r.eps_recovered)),
                cell(mean_of(&cells, |r| r.rmse)),
            ]);
        }
        plot.write(&opts.out.join(format!("plot_exp2_tau{tau}.csv")))?;
    }
    table.write(&opts.out.join("table.csv"))?;

    Ok(ExperimentReport::new(
        ReportMeta {
            experiment: "exp2".into(),
            seed: opts.seed,
            trials,
            jobs: opts.jobs,
            solver_tol: opts.tol,
            solver_max_iter: opts.max_iter,
            sigma: Some(sigma),
            preprocessing: "none".into(),
            grid: format!("ad1 nu={nu} q={q} C=2l; tau in {taus:?}; l in {sizes:?}"),
        },
        records,
    ))
}

/// Noise sweep at fixed nu = 0.4: the recovered tube width tracks the
/// noise scale while the outside fraction stays pinned at nu.
fn exp3(opts: &ExperimentOpts) -> Result<ExperimentReport> {
    let taus = [0.1, 0.3, 0.5, 0.7, 0.9];
    let sigmas: Vec<f64> = (1..=10).map(|k| k as f64 / 10.0).collect();
    let trials = opts.trials.unwrap_or(3);
    let (l, nu, q) = (500usize, 0.4, 0.125);
    let c = l as f64;

    let mut jobs = Vec::new();
    for (ti, &tau) in taus.iter().enumerate() {
        for (si, &sigma) in sigmas.iter().enumerate() {
            for trial in 0..trials {
                let cell_idx = (ti * sigmas.len() + si) as u64;
                jobs.push((tau, sigma, derive_seed(opts.seed, cell_idx, trial as u64), trial));
            }
        }
    }
    let records: Vec<CellRecord> = jobs
        .par_iter()
        .map(|&(tau, sigma, seed, trial)| {
            synth_nu_record(
                NoiseModel::Ad1 { sigma },
                l,
                Tau::new(tau)?,
                nu,
                q,
                c,
                seed,
                trial,
                opts.tol,
                opts.max_iter,
            )
        })
        .collect::<Result<_>>()?;

    let mut table = Table::new(
        ["tau", "metric"]
            .iter()
            .map(|s| s.to_string())
            .chain(sigmas.iter().map(|s| format!("sigma_{s:.1}")))
            .collect(),
    );
    for &tau in &taus {
        let metrics: [(&str, MetricFn); 4] = [
            ("eps", |r| r.eps_recovered),
            ("error", |r| r.frac_errors),
            ("sv", |r| r.frac_sv),
            ("rmse", |r| r.rmse),
        ];
        let mut plot = Table::new(
            ["sigma", "eps", "error", "sv", "rmse"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        );
        for (name, get) in metrics {
            let mut row = vec![fmt_f64(tau), name.to_string()];
            for &sigma in &sigmas {
                let cells: Vec<&CellRecord> = records
                    .iter()
                    .filter(|r| r.tau == tau && r.sigma == Some(sigma))
                    .collect();
                row.push(cell(mean_of(&cells, get)));
            }
            table.push(row);
        }
        for &sigma in &sigmas {
            let cells: Vec<&CellRecord> = records
                .iter()
                .filter(|r| r.tau == tau && r.sigma == Some(sigma))
                .collect();
            plot.push(vec![
                fmt_f64(sigma),
                cell(mean_of(&cells, |r| r.eps_recovered)),
                cell(mean_of(&cells, |r| r.frac_errors)),
                cell(mean_of(&cells, |r| r.frac_sv)),
                cell(mean_of(&cells, |r| r.rmse)),
            ]);
        }
        plot.write(&opts.out.join(format!("plot_exp3_tau{tau}.csv")))?;
    }
    table.write(&opts.out.join("table.csv"))?;

    Ok(ExperimentReport::new(
        ReportMeta {
            experiment: "exp3".into(),
            seed: opts.seed,
            trials,
            jobs: opts.jobs,
            solver_tol: opts.tol,
            solver_max_iter: opts.max_iter,
            sigma: None,
            preprocessing: "none".into(),
            grid: format!("ad1 l={l} nu={nu} q={q} C={c}; tau in {taus:?}; sigma 0.1..1.0 step 0.1"),
        },
        records,
    ))
}

pub struct Exp4Phase {
    pub label: String,
    pub nu_rmse: f64,
    pub eps_rmse: f64,
    pub nu_width: f64,
}

/// Robustness pair: both models tuned on small uniform noise, then hit
/// with 50x larger noise without retuning. The nu model adapts its tube.
fn exp4(opts: &ExperimentOpts) -> Result<ExperimentReport> {
    let trials = opts.trials.unwrap_or(3);

    // Per-phase, per-model aggregate table.
    let mut table = Table::new(
        ["phase", "model", "rmse", "mae", "tube_width"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    );
    let mut records = Vec::new();
    for (pi, (a, b)) in [(-0.1, 0.1), (-5.0, 5.0)].iter().enumerate() {
        for trial in 0..trials {
            let seed = derive_seed(opts.seed, pi as u64, trial as u64);
            let (nu_rec, eps_rec) = exp4_trial(*a, *b, seed, trial, opts)?;
            records.push(nu_rec);
            records.push(eps_rec);
        }
    }
    // records are pushed phase-major, nu before eps within each trial
    for (pi, label) in [(0usize, "U(-0.1,0.1)"), (1, "U(-5,5)")] {
        for model in ["nu", "eps"] {
            let phase_records: Vec<&CellRecord> = records
                .iter()
                .enumerate()
                .filter(|(i, r)| i / (2 * trials) == pi && (model == "nu") == r.nu.is_some())
                .map(|(_, r)| r)
                .collect();
            table.push(vec![
                label.to_string(),
                model.to_string(),
                cell(mean_of(&phase_records, |r| r.rmse)),
                cell(mean_of(&phase_records, |r| r.mae)),
                cell(mean_of(&phase_records, |r| r.eps_recovered)),
            ]);
        }
    }
    table.write(&opts.out.join("table.csv"))?;

    // Plot series: fitted curves of the trial-0 models over the input range.
    for (pi, (a, b)) in [(-0.1, 0.1), (-5.0, 5.0)].into_iter().enumerate() {
        let seed = derive_seed(opts.seed, pi as u64, 0);
        let (nu_model, eps_model, spec) = exp4_models(a, b, seed, opts)?;
        let tau = Tau::new(0.3).unwrap();
        let mut plot = Table::new(
            ["x", "truth", "nu_pred", "eps_pred"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        );
        let grid: Vec<f64> = (0..=400).map(|k| -4.0 + 8.0 * k as f64 / 400.0).collect();
        let gx = svqr::data::Mat::column(&grid);
        let np = nu_model.predict(&gx)?;
        let ep = eps_model.predict(&gx)?;
        for (k, &x) in grid.iter().enumerate() {
            plot.push(vec![
                fmt_f64(x),
                fmt_f64(true_quantile(&spec, tau, x)?),
                fmt_f64(np[k]),
                fmt_f64(ep[k]),
            ]);
        }
        plot.write(&opts.out.join(format!("plot_exp4_phase{}.csv", pi + 1)))?;
    }

    Ok(ExperimentReport::new(
        ReportMeta {
            experiment: "exp4".into(),
            seed: opts.seed,
            trials,
            jobs: opts.jobs,
            solver_tol: opts.tol,
            solver_max_iter: opts.max_iter,
            sigma: None,
            preprocessing: "none".into(),
            grid: "ad2 l=500 tau=0.3 q=1; nu model (nu=0.5, C=500) vs eps model (eps=0.1, C=1); noise U(-0.1,0.1) then U(-5,5)".into(),
        },
        records,
    ))
}

fn exp4_models(
    a: f64,
    b: f64,
    seed: u64,
    opts: &ExperimentOpts,
) -> Result<(TrainedModel, TrainedModel, SynthSpec)> {
    let l = 500;
    let tau = Tau::new(0.3).unwrap();
    let q = 1.0;
    let spec = SynthSpec::ad2(l, a, b, seed);
    let train = generate(&spec)?;
    let nu_cfg = FitConfig::nu_svqr(tau, 500.0, 0.5, KernelSpec::rbf(q))
        .with_solver(opts.tol, opts.max_iter);
    let eps_cfg = FitConfig::eps_svqr(tau, 1.0, 0.1, KernelSpec::rbf(q))
        .with_solver(opts.tol, opts.max_iter);
    Ok((fit(&train, &nu_cfg)?, fit(&train, &eps_cfg)?, spec))
}

fn exp4_trial(
    a: f64,
    b: f64,
    seed: u64,
    trial: usize,
    opts: &ExperimentOpts,
) -> Result<(CellRecord, CellRecord)> {
    let start = Instant::now();
    let (nu_model, eps_model, spec) = exp4_models(a, b, seed, opts)?;
    let tau = Tau::new(0.3).unwrap();
    let test_spec = SynthSpec::ad2(TEST_POINTS, a, b, derive_seed(seed, TEST_STREAM, 0));
    let test = generate(&test_spec)?;
    let truth: Vec<f64> = (0..test.len())
        .map(|i| true_quantile(&spec, tau, test.x.get(i, 0)))
        .collect::<Result<_>>()?;

    let mut nu_rec = CellRecord::blank(0.3, 500.0, 1.0, 500, seed, trial);
    nu_rec.nu = Some(0.5);
    let preds = nu_model.predict(&test.x)?;
    nu_rec.rmse = Some(rmse_vs_truth(&preds, &truth)?);
    nu_rec.mae = Some(mae_vs_truth(&preds, &truth)?);
    nu_rec.eps_recovered = Some(nu_model.eps_width);
    nu_rec.degenerate = nu_model.diagnostics.recovery_degenerate;
    nu_rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;

    let mut eps_rec = CellRecord::blank(0.3, 1.0, 1.0, 500, seed, trial);
    eps_rec.eps_param = Some(0.1);
    let preds = eps_model.predict(&test.x)?;
    eps_rec.rmse = Some(rmse_vs_truth(&preds, &truth)?);
    eps_rec.mae = Some(mae_vs_truth(&preds, &truth)?);
    eps_rec.eps_recovered = Some(eps_model.eps_width);
    eps_rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok((nu_rec, eps_rec))
}

/// Aggregate view of exp4 used by tests: mean RMSE per model per phase and
/// the mean adapted tube width of the nu model.
pub fn exp4_phases(opts: &ExperimentOpts) -> Result<Vec<Exp4Phase>> {
    let trials = opts.trials.unwrap_or(3);
    let mut out = Vec::new();
    for (pi, (a, b, label)) in [(-0.1, 0.1, "U(-0.1,0.1)"), (-5.0, 5.0, "U(-5,5)")]
        .iter()
        .enumerate()
    {
        let runs: Vec<(CellRecord, CellRecord)> = (0..trials)
            .into_par_iter()
            .map(|trial| {
                exp4_trial(*a, *b, derive_seed(opts.seed, pi as u64, trial as u64), trial, opts)
            })
            .collect::<Result<_>>()?;
        let n = runs.len() as f64;
        out.push(Exp4Phase {
            label: label.to_string(),
            nu_rmse: runs.iter().map(|(r, _)| r.rmse.unwrap()).sum::<f64>() / n,
            eps_rmse: runs.iter().map(|(_, r)| r.rmse.unwrap()).sum::<f64>() / n,
            nu_width: runs.iter().map(|(r, _)| r.eps_recovered.unwrap()).sum::<f64>() / n,
        });
    }
    Ok(out)
}

/// Real-data sweep on the UCI Servo set: coverage error and sparsity over
/// the (tau, nu) grid, averaged over random 80/20 splits.
fn exp5(opts: &ExperimentOpts) -> Result<ExperimentReport> {
    let servo = load_servo(&opts.servo)?;
    let taus: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0).collect();
    let nus: Vec<f64> = (2..=20).map(|k| k as f64 / 20.0).collect();
    let trials = opts.trials.unwrap_or(100);
    let (q, c_per_l) = (64.0, 1.0);

    let mut jobs = Vec::new();
    for (ti, &tau) in taus.iter().enumerate() {
        for (ni, &nu) in nus.iter().enumerate() {
            for trial in 0..trials {
                let cell_idx = (ti * nus.len() + ni) as u64;
                jobs.push((tau, nu, derive_seed(opts.seed, cell_idx, trial as u64), trial));
            }
        }
    }
    let records: Vec<CellRecord> = jobs
        .par_iter()
        .map(|&(tau, nu, seed, trial)| servo_record(&servo, tau, nu, q, c_per_l, seed, trial, opts))
        .collect::<Result<_>>()?;

    // Two aggregate blocks: coverage error and sparsity percentage.
    let mut table = Table::new(
        ["block", "nu"]
            .iter()
            .map(|s| s.to_string())
            .chain(taus.iter().map(|t| format!("tau_{t:.1}")))
            .collect(),
    );
    for block in ["etau", "sparsity_pct"] {
        for &nu in &nus {
            let mut row = vec![block.to_string(), fmt_f64(nu)];
            for &tau in &taus {
                let cells: Vec<&CellRecord> = records
                    .iter()
                    .filter(|r| r.tau == tau && r.nu == Some(nu))
                    .collect();
                let v = if block == "etau" {
                    // coverage protocol: average p_tau over trials first
                    mean_of(&cells, |r| r.e_tau).map(|p| (p - tau).abs())
                } else {
                    mean_of(&cells, |r| r.sparsity_pct)
                };
                row.push(cell(v));
            }
            table.push(row);
        }
    }
    table.write(&opts.out.join("table.csv"))?;

    for &tau in &[0.1, 0.5, 0.9] {
        let mut plot = Table::new(
            ["nu", "etau", "sparsity_pct"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        );
        for &nu in &nus {
            let cells: Vec<&CellRecord> = records
                .iter()
                .filter(|r| (r.tau - tau).abs() < 1e-9 && r.nu == Some(nu))
                .collect();
            plot.push(vec![
                fmt_f64(nu),
                cell(mean_of(&cells, |r| r.e_tau).map(|p| (p - tau).abs())),
                cell(mean_of(&cells, |r| r.sparsity_pct)),
            ]);
        }
        plot.write(&opts.out.join(format!("plot_exp5_tau{tau}.csv")))?;
    }

    Ok(ExperimentReport::new(
        ReportMeta {
            experiment: "exp5".into(),
            seed: opts.seed,
            trials,
            jobs: opts.jobs,
            solver_tol: opts.tol,
            solver_max_iter: opts.max_iter,
            sigma: None,
            preprocessing: "servo one-hot (motor, screw) + min-max scaling of all feature columns to [0,1], fit on each training split".into(),
            grid: format!("servo q={q} C={c_per_l}*l_train; tau 0.1..0.9 step 0.1; nu 0.10..1.00 step 0.05; 80/20 splits"),
        },
        records,
    ))
}

/// One Servo trial: random 80/20 split, min-max scaling fit on the
/// training split, nu-model fit, coverage probability on the test split
/// and sparsity of the dual coefficients. The record's `e_tau` field
/// holds the per-trial coverage probability p_tau; the aggregation step
/// averages those before subtracting tau.
#[allow(clippy::too_many_arguments)]
fn servo_record(
    servo: &Dataset,
    tau: f64,
    nu: f64,
    q: f64,
    c_per_l: f64,
    seed: u64,
    trial: usize,
    opts: &ExperimentOpts,
) -> Result<CellRecord> {
    let start = Instant::now();
    let t = Tau::new(tau)?;
    let (train, test) = split_dataset(servo, 0.8, seed)?;
    let scaling = Scaling::fit(&train.x);
    let train_scaled = Dataset::new(scaling.apply(&train.x)?, train.y.clone())?;
    let test_scaled = scaling.apply(&test.x)?;

    let cfg = FitConfig::nu_svqr(t, c_per_l * train.len() as f64, nu, KernelSpec::rbf(q))
        .with_solver(opts.tol, opts.max_iter);
    let model = fit(&train_scaled, &cfg)?;

    let preds = model.predict(&test_scaled)?;
    let below = test
        .y
        .iter()
        .zip(&preds)
        .filter(|(yi, pi)| yi <= pi)
        .count();
    let p_tau = below as f64 / test.y.len() as f64;
    let zero_tol = sv_zero_tolerance(&cfg, train.len());

    let mut rec = CellRecord::blank(tau, cfg.c, q, train.len(), seed, trial);
    rec.nu = Some(nu);
    rec.e_tau = Some(p_tau);
    rec.sparsity_pct = Some(100.0 * sparsity(&model.coeffs, zero_tol)?);
    rec.eps_recovered = Some(model.eps_width);
    rec.frac_sv = Some(model.sv_indices.len() as f64 / train.len() as f64);
    rec.degenerate = model.diagnostics.recovery_degenerate;
    rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(rec)
}

/// Deterministic random split by a Fisher-Yates shuffle of indices.
pub fn split_dataset(data: &Dataset, train_frac: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let l = data.len();
    let n_train = ((l as f64) * train_frac).round() as usize;
    if n_train == 0 || n_train >= l {
        return Err(Error::invalid(format!(
            "split fraction {train_frac} leaves an empty side for l={l}"
        )));
    }
    let mut idx: Vec<usize> = (0..l).collect();
    let mut state = seed;
    for i in (1..l).rev() {
        // splitmix-style index shuffle
        state = state
            .wrapping_add(0x9E3779B97F4A7C15)
            .wrapping_mul(0xBF58476D1CE4E5B9);
        let j = (state >> 16) as usize % (i + 1);
        idx.swap(i, j);
    }
    let take = |ids: &[usize]| -> Result<Dataset> {
        let rows: Vec<Vec<f64>> = ids.iter().map(|&i| data.x.row(i).to_vec()).collect();
        let y: Vec<f64> = ids.iter().map(|&i| data.y[i]).collect();
        Dataset::new(svqr::data::Mat::from_rows(&rows)?, y)
    };
    Ok((take(&idx[..n_train])?, take(&idx[n_train..])?))
}
