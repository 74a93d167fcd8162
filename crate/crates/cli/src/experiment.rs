//! Experiment orchestration: instance generation, the (method x instance x
//! seed) run matrix, epoch-grid aggregation, and CSV emission.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use vrkm_core::inclusion::{run_inclusion, InclusionProblem, MaximalOperator};
use vrkm_core::problem_io::{load_problem, save_problem};
use vrkm_core::{
    baselines, generate_minimax, plan_step_size, run, seed, Budget, CocoercivityCertificate,
    Diagnostics, EstimatorKind, FiniteSumProblem, MinimaxSpec, Regime, Schedule, SolverTrace,
};

use crate::config::{
    Algorithm, EstimatorChoice, ExperimentConfig, MethodConfig, ScheduleChoice,
};

const INSTANCE_TAG: u64 = 0xA11C_E000;
const RUN_TAG: u64 = 0x5EED_0000;

pub fn instances_dir(out: &Path) -> PathBuf {
    out.join("instances")
}

pub fn traces_dir(out: &Path) -> PathBuf {
    out.join("traces")
}

fn instance_path(out: &Path, idx: usize) -> PathBuf {
    instances_dir(out).join(format!("inst_{idx:02}.bin"))
}

/// Generates and writes the problem instances, printing `L`, `sigma`,
/// `kappa` per instance. Byte-identical files for identical master seeds.
pub fn generate(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<CocoercivityCertificate>> {
    fs::create_dir_all(instances_dir(out))?;
    let mut certs = Vec::new();
    for idx in 0..cfg.problem.instances {
        let mut spec = MinimaxSpec::new(
            cfg.problem.p1,
            cfg.problem.p2,
            cfg.problem.n,
            seed::derive(cfg.problem.master_seed, &[INSTANCE_TAG, idx as u64]),
        );
        spec.psd_floor = cfg.problem.psd_floor;
        spec.coupling_scale = cfg.problem.coupling_scale;
        let (problem, cert) =
            generate_minimax(&spec).with_context(|| format!("generating instance {idx}"))?;
        save_problem(&instance_path(out, idx), &problem, &cert)?;
        println!(
            "instance {idx:02}: n = {}, p = {}, L = {:.6e}, sigma = {:.6e}, kappa = {:.3e}",
            problem.n(),
            problem.dim(),
            cert.l,
            cert.sigma,
            cert.kappa()
        );
        certs.push(cert);
    }
    // echo the configuration next to the data
    fs::write(out.join("config.toml"), cfg.to_toml())?;
    Ok(certs)
}

pub fn load_instances(
    out: &Path,
    count: usize,
) -> Result<Vec<(FiniteSumProblem, CocoercivityCertificate)>> {
    (0..count)
        .map(|idx| {
            load_problem(&instance_path(out, idx))
                .with_context(|| format!("loading instance {idx}"))})
        .collect()
}

/// Resolved per-method run parameters.
struct ResolvedMethod {
    name: String,
    algorithm: Algorithm,
    kind: EstimatorKind,
    schedule: Option<Schedule>,
    eta: f64,
    stride: usize,
}

/// Constants a method's step sizes can be quoted against: `l_experiment`
/// is the aggregate-operator constant (the denominator of the `*_over_l`
/// ratios, matching the experiment convention), `l_theory` the finite-sum
/// constant used by the closed-form plans.
struct PlanConstants {
    l_experiment: f64,
    l_theory: f64,
    sigma: f64,
}

fn resolve_method(
    m: &MethodConfig,
    n: usize,
    consts: &PlanConstants,
    samples_per_epoch: f64,
) -> Result<ResolvedMethod> {
    let batch = if m.batch == 0 { ExperimentConfig::default_batch(n) } else { m.batch };
    let switch_prob =
        if m.switch_prob == 0.0 { ExperimentConfig::default_switch_prob(n) } else { m.switch_prob };
    let kind = match m.estimator {
        EstimatorChoice::Full => EstimatorKind::FullBatch,
        EstimatorChoice::Svrg => EstimatorKind::LooplessSvrg { batch, switch_prob },
        EstimatorChoice::Saga => EstimatorKind::Saga { batch },
    };
    let beta = if m.beta_over_l > 0.0 {
        m.beta_over_l / consts.l_experiment
    } else {
        match m.schedule {
            ScheduleChoice::Sublinear => {
                plan_step_size(&kind, n, consts.l_theory, None, Regime::Sublinear)?.beta
            }
            ScheduleChoice::Constant => {
                plan_step_size(&kind, n, consts.l_theory, Some(consts.sigma), Regime::Linear)?.beta
            }
        }
    };
    let schedule = match m.algorithm {
        Algorithm::Vfkm | Algorithm::DetFkm => Some(match m.schedule {
            ScheduleChoice::Sublinear => Schedule::sublinear(m.r, beta)?,
            ScheduleChoice::Constant => Schedule::constant(beta)?,
        }),
        _ => None,
    };
    let eta = if m.eta_over_l > 0.0 {
        m.eta_over_l / consts.l_experiment
    } else {
        0.5 / consts.l_experiment
    };
    // expected component evaluations per iteration, for the trace stride
    let opi: f64 = match (m.algorithm, &kind) {
        (Algorithm::Vfkm | Algorithm::DetFkm, EstimatorKind::FullBatch) => n as f64,
        (Algorithm::Vfkm | Algorithm::DetFkm, EstimatorKind::LooplessSvrg { batch, switch_prob }) => {
            3.0 * *batch as f64 + switch_prob * n as f64
        }
        (Algorithm::Vfkm | Algorithm::DetFkm, EstimatorKind::Saga { batch }) => 2.0 * *batch as f64,
        (Algorithm::Og, _) => n as f64,
        (Algorithm::PlainVr, EstimatorKind::Saga { batch }) => *batch as f64,
        (Algorithm::PlainVr, EstimatorKind::LooplessSvrg { batch, switch_prob }) => {
            2.0 * *batch as f64 + switch_prob * n as f64
        }
        (Algorithm::PlainVr, EstimatorKind::FullBatch) => n as f64,
    };
    let stride = ((n as f64 / (opi * samples_per_epoch)).round() as usize).max(1);
    Ok(ResolvedMethod { name: m.name.clone(), algorithm: m.algorithm, kind, schedule, eta, stride })
}

#[derive(Debug, Clone, Serialize)]
pub struct CellSummary {
    pub method: String,
    pub instance: usize,
    pub seed_index: usize,
    pub run_seed: u64,
    pub ok: bool,
    pub error: Option<String>,
    pub iterations: usize,
    pub oracle_total: u64,
    pub epochs: f64,
    pub initial_residual: f64,
    pub final_residual: f64,
    pub final_rel_residual: f64,
    pub svrg_switches: u64,
    pub wall_time_s: f64,
}

struct CellOutcome {
    summary: CellSummary,
    /// (epoch, relative residual) points, starting at (0, 1).
    curve: Vec<(f64, f64)>,
    csv: String,
    csv_name: String,
}

fn trace_to_curve(trace: &SolverTrace) -> Vec<(f64, f64)> {
    let denom = trace.summary.initial_residual.max(f64::MIN_POSITIVE);
    let mut curve = vec![(0.0, 1.0)];
    for rec in &trace.records {
        curve.push((rec.epoch, rec.residual / denom));
    }
    curve
}

fn trace_to_csv(trace: &SolverTrace, constrained: bool) -> String {
    let mut s = String::new();
    if constrained {
        s.push_str("k,epoch,residual,step_norm,lyapunov,delta_k,bfs_residual,fbs_residual\n");
    } else {
        s.push_str("k,epoch,residual,step_norm,lyapunov,delta_k\n");
    }
    let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for rec in &trace.records {
        s.push_str(&format!(
            "{},{},{},{},{},{}",
            rec.k,
            rec.epoch,
            rec.residual,
            fmt_opt(rec.step_norm),
            fmt_opt(rec.lyapunov),
            fmt_opt(rec.delta),
        ));
        if constrained {
            s.push_str(&format!(",{},{}", rec.residual, fmt_opt(rec.fbs_residual)));
        }
        s.push('\n');
    }
    s
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    cfg: &ExperimentConfig,
    method: &MethodConfig,
    problem: &FiniteSumProblem,
    consts: &PlanConstants,
    inclusion: Option<&InclusionProblem>,
    instance: usize,
    seed_index: usize,
) -> Result<CellOutcome> {
    let n = problem.n();
    let resolved = resolve_method(method, n, consts, cfg.run.samples_per_epoch)?;
    let run_seed = seed::derive(
        cfg.problem.master_seed,
        &[RUN_TAG, instance as u64, hash_name(&resolved.name), seed_index as u64],
    );
    let x0 = DVector::from_element(problem.dim(), 1.0);
    let budget = Budget::epochs(cfg.run.epochs);
    let diag = Diagnostics { stride: resolved.stride, ..Default::default() };

    let trace = match (inclusion, resolved.algorithm) {
        (None, Algorithm::Vfkm | Algorithm::DetFkm) => run(
            problem,
            &x0,
            &resolved.kind,
            resolved.schedule.as_ref().expect("km schedule"),
            &budget,
            run_seed,
            &diag,
        )?,
        (None, Algorithm::Og) => baselines::run_og(problem, &x0, resolved.eta, &budget, &diag)?,
        (None, Algorithm::PlainVr) => baselines::run_plain_vr_forward(
            problem,
            &x0,
            &resolved.kind,
            resolved.eta,
            &budget,
            run_seed,
            &diag,
        )?,
        (Some(inc), Algorithm::Vfkm | Algorithm::DetFkm) => {
            let (trace, _u) = run_inclusion(
                inc,
                &x0,
                &resolved.kind,
                resolved.schedule.as_ref().expect("km schedule"),
                &budget,
                run_seed,
                &diag,
            )?;
            trace
        }
        (Some(_), Algorithm::Og | Algorithm::PlainVr) => {
            bail!("method {} is not supported in constrained mode", resolved.name)
        }
    };

    let curve = trace_to_curve(&trace);
    let csv = trace_to_csv(&trace, inclusion.is_some());
    let csv_name = format!("{}__i{instance:02}_s{seed_index:02}.csv", resolved.name);
    Ok(CellOutcome {
        summary: CellSummary {
            method: resolved.name,
            instance,
            seed_index,
            run_seed,
            ok: true,
            error: None,
            iterations: trace.summary.iterations,
            oracle_total: trace.summary.oracle_total,
            epochs: trace.summary.epochs,
            initial_residual: trace.summary.initial_residual,
            final_residual: trace.summary.final_residual,
            final_rel_residual: trace.final_rel_residual(),
            svrg_switches: trace.summary.svrg_switches,
            wall_time_s: trace.summary.wall_time_s,
        },
        curve,
        csv,
        csv_name,
    })
}

fn hash_name(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x1000_0000_01b3)
    })
}

/// Log-linear interpolation of a relative-residual curve onto integer
/// epochs `0..=max_epoch`.
pub fn interpolate_epochs(curve: &[(f64, f64)], max_epoch: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(max_epoch + 1);
    let mut j = 0usize;
    for e in 0..=max_epoch {
        let target = e as f64;
        while j + 1 < curve.len() && curve[j + 1].0 <= target {
            j += 1;
        }
        let value = if j + 1 >= curve.len() {
            curve[curve.len() - 1].1
        } else {
            let (e0, v0) = curve[j];
            let (e1, v1) = curve[j + 1];
            if e1 <= e0 {
                v1
            } else {
                let t = (target - e0) / (e1 - e0);
                if v0 > 0.0 && v1 > 0.0 {
                    (v0.ln() + t * (v1.ln() - v0.ln())).exp()
                } else {
                    v0 + t * (v1 - v0)
                }
            }
        };
        out.push(value);
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct AggregatedRow {
    pub method: String,
    pub epoch: usize,
    pub mean_rel_residual: f64,
    pub se_rel_residual: f64,
}

/// Runs every (method x instance x seed) cell, writes the per-run CSV
/// traces, the summary JSON and the aggregated mean curve.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, threads: usize) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("building worker pool")?;
    let instances = load_instances(out, cfg.problem.instances)?;
    fs::create_dir_all(traces_dir(out))?;

    // The experiment convention quotes step sizes against the aggregate
    // co-coercivity constant; the finite-sum constant stays available for
    // the closed-form plans.
    let aggregates: Vec<CocoercivityCertificate> = instances
        .iter()
        .map(|(p, _)| p.aggregate_cocoercivity(1e-8).map_err(Into::into))
        .collect::<Result<Vec<_>>>()?;

    // Constrained mode wraps every instance into its splitting problem,
    // with `lambda = 1/L` against the aggregate constant.
    let inclusions: Vec<Option<InclusionProblem>> = if cfg.run.constrained {
        instances
            .iter()
            .zip(&aggregates)
            .map(|((p, _), agg)| {
                let t = MaximalOperator::SimplexNormalCone {
                    p1: cfg.problem.p1,
                    p2: cfg.problem.p2,
                };
                let lambda = 1.0 / agg.l;
                Ok(Some(InclusionProblem::new(p.clone(), t, lambda, agg.l)?))
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        instances.iter().map(|_| None).collect()
    };

    let mut cells = Vec::new();
    for (mi, _method) in cfg.methods.iter().enumerate() {
        for ii in 0..cfg.problem.instances {
            for si in 0..cfg.run.seeds_per_method {
                cells.push((mi, ii, si));
            }
        }
    }

    let outcomes: Vec<(usize, usize, usize, Result<CellOutcome>)> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(mi, ii, si)| {
                let (problem, cert) = &instances[ii];
                let inc = inclusions[ii].as_ref();
                // constrained runs quote step sizes against the splitting
                // constant derived from the aggregate certificate
                let consts = PlanConstants {
                    l_experiment: inc.map(|i| i.l).unwrap_or(aggregates[ii].l),
                    l_theory: inc.map(|i| i.l).unwrap_or(cert.l),
                    sigma: cert.sigma,
                };
                let outcome = run_cell(cfg, &cfg.methods[mi], problem, &consts, inc, ii, si);
                (mi, ii, si, outcome)
            })
            .collect()
    });

    // deterministic order for summaries and CSV writes
    let mut sorted = outcomes;
    sorted.sort_by_key(|&(mi, ii, si, _)| (mi, ii, si));

    let epochs = cfg.run.epochs.ceil() as usize;
    let mut summaries: Vec<CellSummary> = Vec::new();
    // per method: accumulated per-epoch values across cells
    let mut per_method: Vec<Vec<Vec<f64>>> =
        vec![vec![Vec::new(); epochs + 1]; cfg.methods.len()];
    for (mi, ii, si, outcome) in sorted {
        match outcome {
            Ok(cell) => {
                fs::write(traces_dir(out).join(&cell.csv_name), &cell.csv)?;
                let grid = interpolate_epochs(&cell.curve, epochs);
                for (e, v) in grid.into_iter().enumerate() {
                    per_method[mi][e].push(v);
                }
                summaries.push(cell.summary);
            }
            Err(err) => {
                summaries.push(CellSummary {
                    method: cfg.methods[mi].name.clone(),
                    instance: ii,
                    seed_index: si,
                    run_seed: 0,
                    ok: false,
                    error: Some(format!("{err:#}")),
                    iterations: 0,
                    oracle_total: 0,
                    epochs: 0.0,
                    initial_residual: f64::NAN,
                    final_residual: f64::NAN,
                    final_rel_residual: f64::NAN,
                    svrg_switches: 0,
                    wall_time_s: 0.0,
                });
            }
        }
    }

    let mut agg = String::from("method,epoch,mean_rel_residual,se_rel_residual\n");
    for (mi, method) in cfg.methods.iter().enumerate() {
        for (e, values) in per_method[mi].iter().enumerate() {
            if values.is_empty() {
                continue;
            }
            let m = values.iter().sum::<f64>() / values.len() as f64;
            let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
                / (values.len() as f64 - 1.0).max(1.0);
            let se = (var / values.len() as f64).sqrt();
            agg.push_str(&format!("{},{},{},{}\n", method.name, e, m, se));
        }
    }
    fs::write(out.join("aggregated.csv"), agg)?;
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summaries)?)?;

    let failures = summaries.iter().filter(|s| !s.ok).count();
    if failures > 0 {
        eprintln!("warning: {failures} cells failed (see summary.json)");
    }
    Ok(())
}

/// Epochs-to-threshold comparison across one or more aggregated CSVs.
pub fn compare(dirs: &[PathBuf]) -> Result<String> {
    const THRESHOLDS: [f64; 3] = [1e-2, 1e-4, 1e-8];
    let mut rows: Vec<(String, Vec<Option<usize>>)> = Vec::new();
    for dir in dirs {
        let text = fs::read_to_string(dir.join("aggregated.csv"))
            .with_context(|| format!("reading {}", dir.display()))?;
        let mut methods: Vec<(String, Vec<(usize, f64)>)> = Vec::new();
        for line in text.lines().skip(1) {
            let mut parts = line.split(',');
            let method = parts.next().ok_or_else(|| anyhow!("bad row"))?.to_string();
            let epoch: usize = parts.next().ok_or_else(|| anyhow!("bad row"))?.parse()?;
            let mean: f64 = parts.next().ok_or_else(|| anyhow!("bad row"))?.parse()?;
            match methods.iter_mut().find(|(m, _)| *m == method) {
                Some((_, v)) => v.push((epoch, mean)),
                None => methods.push((method, vec![(epoch, mean)])),
            }
        }
        for (method, curve) in methods {
            let hits = THRESHOLDS
                .iter()
                .map(|&t| curve.iter().find(|(_, v)| *v <= t).map(|(e, _)| *e))
                .collect();
            let label = if dirs.len() > 1 {
                format!("{}:{}", dir.display(), method)
            } else {
                method
            };
            rows.push((label, hits));
        }
    }
    let mut table = String::new();
    table.push_str(&format!(
        "{:<40} {:>12} {:>12} {:>12}\n",
        "method", "to 1e-2", "to 1e-4", "to 1e-8"
    ));
    for (label, hits) in rows {
        let fmt = |h: Option<usize>| match h {
            Some(e) => format!("{e}"),
            None => "not reached".to_string(),
        };
        table.push_str(&format!(
            "{:<40} {:>12} {:>12} {:>12}\n",
            label,
            fmt(hits[0]),
            fmt(hits[1]),
            fmt(hits[2])
        ));
    }
    Ok(table)
}

/// Epochs to reach a threshold on an aggregated per-epoch curve.
pub fn epochs_to_threshold(curve: &[f64], threshold: f64) -> Option<usize> {
    curve.iter().position(|v| *v <= threshold)
}
