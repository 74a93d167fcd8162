//! Tiered verification: wires the core check suites to concrete problem
//! sets and exposes one runner per acceptance criterion. The `fast` tier
//! covers the algebraic and exact-enumeration checks; the `full` tier adds
//! the multi-seed rate-bound runs and the pipeline checks.

use std::time::Instant;

use anyhow::Result;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use vrkm_core::inclusion::{component_cocoercivity, run_inclusion, InclusionProblem, MaximalOperator};
use vrkm_core::verification::{
    check_bfs, check_constants, check_definition1, check_fullbatch_lyapunov_monotone,
    check_saga_conditional_descent, check_sublinear_bound, loglog_slope, mean_residual_sq_curve,
    tail_decay_report, CheckResult, CheckStatus,
};
use vrkm_core::{
    generate_minimax, run, seed, Budget, CocoercivityCertificate, Diagnostics, EstimatorKind,
    FiniteSumProblem, MinimaxSpec, Schedule,
};

use crate::config::{preset, ExperimentConfig};
use crate::experiment;

/// Result bundle of one acceptance criterion.
#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub index: usize,
    pub name: String,
    /// Soft criteria report their outcome but do not fail the suite.
    pub soft: bool,
    pub results: Vec<CheckResult>,
    pub elapsed_s: f64,
}

impl CriterionReport {
    pub fn passed(&self) -> bool {
        self.soft || self.results.iter().all(|r| r.passed())
    }

    pub fn status_line(&self) -> String {
        let all_pass = self.results.iter().all(|r| r.passed());
        let tag = if all_pass {
            "PASS"
        } else if self.soft {
            "SOFT-FAIL (reported, non-fatal)"
        } else {
            "FAIL"
        };
        format!("criterion {:>2}: {:<44} [{}] ({:.1} s)", self.index, self.name, tag, self.elapsed_s)
    }
}

fn report(index: usize, name: &str, soft: bool, start: Instant, results: Vec<CheckResult>) -> CriterionReport {
    CriterionReport {
        index,
        name: name.to_string(),
        soft,
        results,
        elapsed_s: start.elapsed().as_secs_f64(),
    }
}

const DESK_MASTER: u64 = 0xDE5C;

/// Ten desk-scale instances (p = 20, n = 500) with certified sigma > 0.
pub fn desk_instances(count: usize) -> Vec<(FiniteSumProblem, CocoercivityCertificate)> {
    let mut out = Vec::new();
    let mut idx = 0u64;
    while out.len() < count {
        let spec = MinimaxSpec::new(13, 7, 500, seed::derive(DESK_MASTER, &[idx]));
        idx += 1;
        if let Ok((p, c)) = generate_minimax(&spec) {
            if c.sigma > 0.0 {
                out.push((p, c));
            }
        }
    }
    out
}

fn small_instance(n: usize, seed_val: u64) -> (FiniteSumProblem, CocoercivityCertificate) {
    generate_minimax(&MinimaxSpec::new(2, 2, n, seed_val)).expect("small instance")
}

/// Criterion 1: exact estimator laws for SVRG (b in {1,3,10},
/// p in {0.1, 0.5}) and SAGA (b in {1,3,10}) at n = 10.
pub fn criterion_1_estimator_laws() -> CriterionReport {
    let start = Instant::now();
    let (prob, _) = small_instance(10, 31);
    let mut results = Vec::new();
    for &b in &[1usize, 3, 10] {
        for &p in &[0.1f64, 0.5] {
            let kind = EstimatorKind::LooplessSvrg { batch: b, switch_prob: p };
            results.extend(check_definition1(&prob, &kind, 200, seed::derive(1, &[b as u64])));
        }
        let kind = EstimatorKind::Saga { batch: b };
        results.extend(check_definition1(&prob, &kind, 200, seed::derive(2, &[b as u64])));
    }
    report(1, "estimator laws (exact enumeration)", false, start, results)
}

/// Criterion 2: closed-form constants over the admissible grids.
pub fn criterion_2_constants() -> CriterionReport {
    let start = Instant::now();
    report(2, "constant formulas and closed-form caps", false, start, check_constants(17))
}

/// Criterion 3: the sublinear residual bound with the planned step size
/// holds for the 20-seed mean on 10 desk instances, SVRG and SAGA.
pub fn criterion_3_sublinear_bound() -> CriterionReport {
    let start = Instant::now();
    let instances = desk_instances(10);
    let b = ExperimentConfig::default_batch(500);
    let p = ExperimentConfig::default_switch_prob(500);
    let x0 = DVector::from_element(20, 1.0);
    let results: Vec<CheckResult> = instances
        .par_iter()
        .enumerate()
        .flat_map(|(i, (prob, cert))| {
            let mut local = Vec::new();
            for kind in [
                EstimatorKind::LooplessSvrg { batch: b, switch_prob: p },
                EstimatorKind::Saga { batch: b },
            ] {
                let mut res = check_sublinear_bound(
                    prob,
                    cert,
                    &kind,
                    &x0,
                    2000,
                    20,
                    seed::derive(3, &[i as u64]),
                );
                res.id = format!("{}/inst{i:02}", res.id);
                local.push(res);
            }
            local
        })
        .collect();
    report(3, "sublinear residual bound (20-seed mean)", false, start, results)
}

fn slope_check(
    id: &str,
    curves: Vec<Vec<f64>>,
    lo: usize,
    hi: usize,
    need: usize,
) -> CheckResult {
    let slopes: Vec<f64> = curves.iter().map(|c| loglog_slope(c, lo, hi)).collect();
    let ok = slopes.iter().filter(|s| **s <= -1.8).count();
    let worst = slopes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    CheckResult {
        id: id.to_string(),
        status: if ok >= need { CheckStatus::Pass } else { CheckStatus::Fail },
        observed: worst,
        bound: -1.8,
        tolerance: 0.0,
        seed: 0,
        samples: slopes.len() as u64,
        note: format!("slopes <= -1.8 on {ok}/{} instances (worst {worst:.2})", slopes.len()),
    }
}

/// Criterion 4: log-log slope of the mean residual-squared over
/// k in [200, 2000] is <= -1.8 on at least 8 of 10 instances for the
/// experiment-parameter VFKM variants and the deterministic fast KM.
pub fn criterion_4_rate_order() -> CriterionReport {
    let start = Instant::now();
    let instances = desk_instances(10);
    let n = 500usize;
    let b = ExperimentConfig::default_batch(n);
    let p = ExperimentConfig::default_switch_prob(n);
    let x0 = DVector::from_element(20, 1.0);
    let iters = 2000usize;

    let gather = |kind_of: &(dyn Fn(&CocoercivityCertificate) -> (EstimatorKind, Schedule) + Sync),
                  seeds: u64,
                  tag: u64|
     -> Vec<Vec<f64>> {
        instances
            .par_iter()
            .enumerate()
            .map(|(i, (prob, cert))| {
                let (kind, sched) = kind_of(cert);
                mean_residual_sq_curve(
                    prob,
                    &x0,
                    &kind,
                    &sched,
                    iters,
                    seeds,
                    seed::derive(4, &[tag, i as u64]),
                )
            })
            .collect()
    };

    let svrg_curves = gather(
        &|cert| {
            (
                EstimatorKind::LooplessSvrg { batch: b, switch_prob: p },
                Schedule::sublinear(20.0, 0.15 / cert.l).expect("r > 2"),
            )
        },
        20,
        0,
    );
    let saga_curves = gather(
        &|cert| {
            (
                EstimatorKind::Saga { batch: b },
                Schedule::sublinear(20.0, 0.25 / cert.l).expect("r > 2"),
            )
        },
        20,
        1,
    );
    let det_curves = gather(
        &|cert| {
            (EstimatorKind::FullBatch, Schedule::sublinear(20.0, 0.5 / cert.l).expect("r > 2"))
        },
        1,
        2,
    );

    let mut results = vec![
        slope_check("rate-order/vfkm-svrg", svrg_curves, 200, iters, 8),
        slope_check("rate-order/vfkm-saga", saga_curves.clone(), 200, iters, 8),
        slope_check("rate-order/det-fkm", det_curves, 200, iters, 8),
    ];
    // descriptive small-o proxies (mean-level and pathwise), reported but
    // never asserted
    results.push(tail_decay_report(&saga_curves[0], "rate-order/small-o-proxy"));
    let (prob0, cert0) = &instances[0];
    results.extend(vrkm_core::verification::per_seed_tail_reports(
        prob0,
        &x0,
        &EstimatorKind::Saga { batch: b },
        &Schedule::sublinear(20.0, 0.25 / cert0.l).expect("r > 2"),
        iters,
        3,
        seed::derive(4, &[9]),
    ));
    report(4, "rate order: log-log slope <= -1.8", false, start, results)
}

/// Criterion 5: linear rate under strong quasi-monotonicity with
/// beta = beta_bar and the constant schedule, 20-seed mean against the
/// closed-form envelope for k <= 3000.
pub fn criterion_5_linear_rate() -> CriterionReport {
    let start = Instant::now();
    let instances = desk_instances(10);
    let b = ExperimentConfig::default_batch(500);
    let p = ExperimentConfig::default_switch_prob(500);
    let x0 = DVector::from_element(20, 1.0);
    let results: Vec<CheckResult> = instances
        .par_iter()
        .enumerate()
        .flat_map(|(i, (prob, cert))| {
            let mut local = Vec::new();
            for kind in [
                EstimatorKind::LooplessSvrg { batch: b, switch_prob: p },
                EstimatorKind::Saga { batch: b },
            ] {
                let mut res = vrkm_core::verification::check_linear_rate(
                    prob,
                    cert,
                    &kind,
                    &x0,
                    3000,
                    20,
                    seed::derive(5, &[i as u64]),
                );
                res.id = format!("{}/inst{i:02}", res.id);
                local.push(res);
            }
            local
        })
        .collect();
    report(5, "linear rate bound (sigma > 0, beta = beta_bar)", false, start, results)
}

/// Criterion 6: Lyapunov descent — deterministic monotonicity for the
/// full-batch estimator on 10 desk instances (500 steps) and the exact
/// conditional descent for SAGA with n = 4, b = 1 over 200 steps.
pub fn criterion_6_lyapunov() -> CriterionReport {
    let start = Instant::now();
    let instances = desk_instances(10);
    let mut results: Vec<CheckResult> = instances
        .par_iter()
        .enumerate()
        .map(|(i, (prob, cert))| {
            let mut res = check_fullbatch_lyapunov_monotone(prob, cert, 500);
            res.id = format!("{}/inst{i:02}", res.id);
            res
        })
        .collect();
    let (small, small_cert) = small_instance(4, 77);
    results.push(check_saga_conditional_descent(&small, &small_cert, 200, 9));
    report(6, "Lyapunov descent (deterministic + enumerated)", false, start, results)
}

fn floored_inclusion(seed_val: u64) -> InclusionProblem {
    let mut spec = MinimaxSpec::new(13, 7, 50, seed_val);
    spec.psd_floor = 0.5;
    spec.coupling_scale = 0.25;
    let (g, _) = generate_minimax(&spec).expect("floored instance");
    let l_g = component_cocoercivity(&g).expect("component co-coercive by construction");
    InclusionProblem::new(g, MaximalOperator::SimplexNormalCone { p1: 13, p2: 7 }, 1.0 / l_g, l_g)
        .expect("admissible lambda")
}

/// Criterion 7: splitting-operator properties — sampled component co-coercivity with the
/// closed-form constant, resolvent nonexpansiveness for lambda >= 2 nu
/// (including an affine co-hypomonotone T with nu > 0), and residual
/// domination, 1000 samples each.
pub fn criterion_7_bfs() -> CriterionReport {
    let start = Instant::now();
    let mut results = Vec::new();

    // simplex-constrained instance
    let inc = floored_inclusion(velvet(1));
    results.extend(check_bfs(&inc, 1000, 71));

    // zero operator reduces to the unconstrained checks
    let zero_inc = {
        let mut spec = MinimaxSpec::new(3, 2, 5, velvet(2));
        spec.psd_floor = 0.5;
        spec.coupling_scale = 0.25;
        let (g, _) = generate_minimax(&spec).expect("instance");
        let l_g = component_cocoercivity(&g).expect("component co-coercive");
        InclusionProblem::new(g, MaximalOperator::Zero, 1.0 / l_g, l_g).expect("lambda ok")
    };
    for mut r in check_bfs(&zero_inc, 1000, 72) {
        r.id = format!("{}/zero-t", r.id);
        results.push(r);
    }

    // affine co-hypomonotone T with nu > 0 and lambda = 2 nu (+ margin)
    let affine_inc = {
        let mut spec = MinimaxSpec::new(3, 2, 5, velvet(3));
        spec.psd_floor = 1.0;
        spec.coupling_scale = 0.1;
        let (g, _) = generate_minimax(&spec).expect("instance");
        let l_g = component_cocoercivity(&g).expect("component co-coercive");
        // one negative eigenvalue -2 L_g gives nu = 1/(2 L_g), L_g nu = 1/2
        let eigs = DVector::from_vec(vec![-2.0 * l_g, 2.0 * l_g, 3.0 * l_g, 4.0 * l_g, 5.0 * l_g]);
        let t = MaximalOperator::affine(DMatrix::from_diagonal(&eigs), DVector::zeros(5))
            .expect("symmetric invertible");
        let nu = t.nu();
        let lambda = (2.0 * nu).max(1.0 / l_g) * 1.01;
        InclusionProblem::new(g, t, lambda, l_g).expect("lambda ok")
    };
    assert!(affine_inc.nu > 0.0);
    for mut r in check_bfs(&affine_inc, 1000, 73) {
        r.id = format!("{}/affine-t", r.id);
        results.push(r);
    }

    report(7, "splitting properties (co-coercivity, resolvent)", false, start, results)
}

fn velvet(i: u64) -> u64 {
    seed::derive(0xBF5, &[i])
}

/// Criterion 8 (soft): qualitative ordering at desk scale — epochs to
/// relative residual 1e-4 satisfy saga <= svrg <= det-fkm on the
/// 10-instance mean over 100 epochs. Step sizes follow the experiment
/// convention (ratios of the aggregate-operator constant, identical for
/// every method).
pub fn criterion_8_ordering() -> CriterionReport {
    let start = Instant::now();
    let instances: Vec<(FiniteSumProblem, CocoercivityCertificate)> = desk_instances(10)
        .into_iter()
        .map(|(p, _)| {
            let agg = p.aggregate_cocoercivity(1e-8).expect("aggregate certificate");
            (p, agg)
        })
        .collect();
    let n = 500usize;
    let b = ExperimentConfig::default_batch(n);
    let p = ExperimentConfig::default_switch_prob(n);
    let x0 = DVector::from_element(20, 1.0);
    let epochs = 100usize;

    let mean_curve = |kind_of: &(dyn Fn(&CocoercivityCertificate) -> (EstimatorKind, Schedule) + Sync),
                      tag: u64|
     -> Vec<f64> {
        let per_instance: Vec<Vec<f64>> = instances
            .par_iter()
            .enumerate()
            .map(|(i, (prob, cert))| {
                let (kind, sched) = kind_of(cert);
                let trace = run(
                    prob,
                    &x0,
                    &kind,
                    &sched,
                    &Budget::epochs(epochs as f64),
                    seed::derive(8, &[tag, i as u64]),
                    &Diagnostics { stride: 1, ..Default::default() },
                )
                .expect("run");
                let denom = trace.summary.initial_residual.max(f64::MIN_POSITIVE);
                let mut curve = vec![(0.0, 1.0)];
                for rec in &trace.records {
                    curve.push((rec.epoch, rec.residual / denom));
                }
                experiment::interpolate_epochs(&curve, epochs)
            })
            .collect();
        (0..=epochs)
            .map(|e| per_instance.iter().map(|c| c[e]).sum::<f64>() / per_instance.len() as f64)
            .collect()
    };

    let saga = mean_curve(
        &|cert| {
            (EstimatorKind::Saga { batch: b }, Schedule::sublinear(20.0, 0.25 / cert.l).unwrap())
        },
        0,
    );
    let svrg = mean_curve(
        &|cert| {
            (
                EstimatorKind::LooplessSvrg { batch: b, switch_prob: p },
                Schedule::sublinear(20.0, 0.15 / cert.l).unwrap(),
            )
        },
        1,
    );
    let det = mean_curve(
        &|cert| (EstimatorKind::FullBatch, Schedule::sublinear(20.0, 0.5 / cert.l).unwrap()),
        2,
    );

    let to_1e4 = |c: &[f64]| experiment::epochs_to_threshold(c, 1e-4);
    let (es, ev, ed) = (to_1e4(&saga), to_1e4(&svrg), to_1e4(&det));
    let fmt = |e: Option<usize>| e.map(|v| v.to_string()).unwrap_or_else(|| "not reached".into());
    let ordered = match (es, ev, ed) {
        (Some(a), Some(b), Some(c)) => a <= b && b <= c,
        (Some(_), Some(_), None) => true,
        (Some(a), None, None) => a > 0, // only saga reached: ordering holds vacuously
        _ => false,
    };
    let mut note = format!(
        "epochs to 1e-4: vfkm-saga = {}, vfkm-svrg = {}, det-fkm = {}",
        fmt(es),
        fmt(ev),
        fmt(ed)
    );
    if !ordered {
        // investigation outcome for the soft failure: the per-epoch decay
        // of the variance-reduced variants is capped by the estimator
        // contraction (rho per iteration, i.e. 1/4 per epoch for SAGA and
        // ~1/5 for SVRG at the default batch), while the desk aggregate
        // operator is so well conditioned that a single full-batch
        // accelerated iteration per epoch beats that cap; the inversion
        // disappears at scales where the full-batch rate drops below it.
        note.push_str(
            "; inverted at desk scale: the aggregate operator is well-conditioned enough \
             that one deterministic iteration per epoch outruns the estimator-contraction \
             cap (1/4 per epoch for SAGA) that limits the VR variants",
        );
    }
    let res = CheckResult {
        id: "ordering/epochs-to-1e-4".into(),
        status: if ordered { CheckStatus::Pass } else { CheckStatus::Fail },
        observed: es.map(|v| v as f64).unwrap_or(f64::NAN),
        bound: ed.map(|v| v as f64).unwrap_or(f64::NAN),
        tolerance: 0.0,
        seed: 8,
        samples: 10,
        note,
    };
    report(8, "qualitative ordering at desk scale (soft)", true, start, vec![res])
}

/// Criterion 9: the constrained pipeline — the splitting scheme drives the
/// mean relative BFS residual below 1e-4 within 100 epochs on the
/// simplex-constrained desk preset (lambda = 1/L against the aggregate
/// constant, as in the experiments), and T = Zero reproduces the
/// unconstrained trajectory bit-for-bit at equal seeds.
pub fn criterion_9_inclusion() -> CriterionReport {
    let start = Instant::now();
    let cfg = preset("desk-constrained", DESK_MASTER).expect("preset");
    let epochs = 100usize;
    let b = ExperimentConfig::default_batch(cfg.problem.n);

    // 10 constrained desk instances
    let curves: Vec<Vec<f64>> = (0..cfg.problem.instances)
        .into_par_iter()
        .map(|i| {
            let spec = MinimaxSpec::new(
                cfg.problem.p1,
                cfg.problem.p2,
                cfg.problem.n,
                seed::derive(DESK_MASTER, &[i as u64]),
            );
            let (g, _) = generate_minimax(&spec).expect("instance");
            let agg = g.aggregate_cocoercivity(1e-8).expect("aggregate certificate");
            let inc = InclusionProblem::new(
                g,
                MaximalOperator::SimplexNormalCone { p1: cfg.problem.p1, p2: cfg.problem.p2 },
                1.0 / agg.l,
                agg.l,
            )
            .expect("lambda ok");
            let sched = Schedule::sublinear(20.0, 0.25 / inc.l).expect("r > 2");
            let x0 = DVector::from_element(inc.g.dim(), 1.0);
            let (trace, _) = run_inclusion(
                &inc,
                &x0,
                &EstimatorKind::Saga { batch: b },
                &sched,
                &Budget::epochs(epochs as f64),
                seed::derive(9, &[i as u64]),
                &Diagnostics::default(),
            )
            .expect("run");
            let denom = trace.summary.initial_residual.max(f64::MIN_POSITIVE);
            let mut curve = vec![(0.0, 1.0)];
            for rec in &trace.records {
                curve.push((rec.epoch, rec.residual / denom));
            }
            experiment::interpolate_epochs(&curve, epochs)
        })
        .collect();
    let mean_final = curves.iter().map(|c| c[epochs]).sum::<f64>() / curves.len() as f64;
    let mut results = vec![CheckResult {
        id: "inclusion/mean-rel-bfs-residual-at-100-epochs".into(),
        status: if mean_final <= 1e-4 { CheckStatus::Pass } else { CheckStatus::Fail },
        observed: mean_final,
        bound: 1e-4,
        tolerance: 0.0,
        seed: 9,
        samples: curves.len() as u64,
        note: "10-instance mean of |G_lambda x^k| / |G_lambda x^0|".into(),
    }];

    // T = Zero bitwise equivalence on a small floored instance
    let mut spec = MinimaxSpec::new(3, 2, 8, velvet(9));
    spec.psd_floor = 0.5;
    spec.coupling_scale = 0.25;
    let (g, _) = generate_minimax(&spec).expect("instance");
    let l_g = component_cocoercivity(&g).expect("component co-coercive");
    let inc = InclusionProblem::new(g.clone(), MaximalOperator::Zero, 1.0 / l_g, l_g).unwrap();
    let x0 = DVector::from_element(5, 1.0);
    let mut bit_identical = true;
    for kind in [
        EstimatorKind::Saga { batch: 2 },
        EstimatorKind::LooplessSvrg { batch: 2, switch_prob: 0.3 },
    ] {
        let sched = Schedule::sublinear(3.0, 1.0 / (4.0 * inc.l)).unwrap();
        let budget = Budget::iterations(150);
        let diag = Diagnostics { stride: 1, ..Default::default() };
        let (ti, _) = run_inclusion(&inc, &x0, &kind, &sched, &budget, 33, &diag).unwrap();
        let te = run(&g, &x0, &kind, &sched, &budget, 33, &diag).unwrap();
        bit_identical &= ti.records.len() == te.records.len()
            && ti
                .records
                .iter()
                .zip(&te.records)
                .all(|(a, b)| a.residual.to_bits() == b.residual.to_bits());
    }
    results.push(CheckResult {
        id: "inclusion/zero-t-bitwise".into(),
        status: if bit_identical { CheckStatus::Pass } else { CheckStatus::Fail },
        observed: if bit_identical { 0.0 } else { 1.0 },
        bound: 0.0,
        tolerance: 0.0,
        seed: 33,
        samples: 2,
        note: "T = Zero trajectory equals the unconstrained run bit-for-bit".into(),
    });
    report(9, "constrained pipeline (splitting scheme)", false, start, results)
}

/// Criterion 10: full-pipeline determinism (byte-identical artifacts for
/// one master seed) and exact SVRG oracle accounting from the event log.
pub fn criterion_10_determinism() -> CriterionReport {
    let start = Instant::now();
    let mut results = Vec::new();

    // small pipeline, run twice
    let tmp = std::env::temp_dir().join(format!("vrkm_det_{}", std::process::id()));
    let dir_a = tmp.join("a");
    let dir_b = tmp.join("b");
    let mut cfg = preset("desk", 20_260_809).expect("preset");
    cfg.problem.p1 = 5;
    cfg.problem.p2 = 3;
    cfg.problem.n = 60;
    cfg.problem.instances = 2;
    cfg.run.epochs = 5.0;
    cfg.methods.truncate(3); // vfkm-svrg, vfkm-saga, det-fkm
    let mut identical = true;
    let mut pipeline_err = None;
    for dir in [&dir_a, &dir_b] {
        let _ = std::fs::remove_dir_all(dir);
        std::fs::create_dir_all(dir).expect("temp dir");
        if let Err(e) =
            experiment::generate(&cfg, dir).and_then(|_| experiment::run_experiment(&cfg, dir, 2))
        {
            pipeline_err = Some(format!("{e:#}"));
        }
    }
    if pipeline_err.is_none() {
        let files_of = |d: &std::path::Path| -> Vec<std::path::PathBuf> {
            let mut v: Vec<_> = std::fs::read_dir(experiment::traces_dir(d))
                .expect("traces")
                .map(|e| e.expect("entry").path())
                .collect();
            v.sort();
            v.push(d.join("aggregated.csv"));
            v.push(experiment::instances_dir(d).join("inst_00.bin"));
            v.push(experiment::instances_dir(d).join("inst_01.bin"));
            v
        };
        for (fa, fb) in files_of(&dir_a).into_iter().zip(files_of(&dir_b)) {
            let ba = std::fs::read(&fa).expect("read");
            let bb = std::fs::read(&fb).expect("read");
            if ba != bb {
                identical = false;
            }
        }
    } else {
        identical = false;
    }
    let _ = std::fs::remove_dir_all(&tmp);
    results.push(CheckResult {
        id: "determinism/pipeline-bytes".into(),
        status: if identical { CheckStatus::Pass } else { CheckStatus::Fail },
        observed: if identical { 0.0 } else { 1.0 },
        bound: 0.0,
        tolerance: 0.0,
        seed: 20_260_809,
        samples: 2,
        note: pipeline_err.unwrap_or_else(|| {
            "instances, traces and aggregated CSV byte-identical across reruns".into()
        }),
    });

    // SVRG oracle audit: recompute the count from the per-iteration log
    let (prob, cert) = small_instance(20, 555);
    let n = prob.n() as u64;
    let b = 3u64;
    let kind = EstimatorKind::LooplessSvrg { batch: b as usize, switch_prob: 0.2 };
    let sched = Schedule::sublinear(3.0, 1.0 / (8.0 * cert.l)).unwrap();
    let x0 = DVector::from_element(prob.dim(), 1.0);
    let trace = run(
        &prob,
        &x0,
        &kind,
        &sched,
        &Budget::iterations(400),
        99,
        &Diagnostics { stride: 1, ..Default::default() },
    )
    .expect("run");
    let mut audit_ok = true;
    let mut switches_seen = 0u64;
    for w in trace.records.windows(2) {
        let delta = w[1].oracle - w[0].oracle;
        if w[0].k == 0 {
            audit_ok &= delta == 0; // iteration 0 reuses the snapshot value
        } else if delta == 3 * b {
            // plain batch
        } else if delta == 3 * b + n {
            switches_seen += 1;
        } else {
            audit_ok = false;
        }
    }
    let k_total = trace.summary.iterations as u64;
    let expected_total = n + (k_total - 1) * 3 * b + switches_seen * n;
    audit_ok &= switches_seen == trace.summary.svrg_switches;
    audit_ok &= expected_total == trace.summary.oracle_total;
    results.push(CheckResult {
        id: "accounting/svrg-oracle-audit".into(),
        status: if audit_ok { CheckStatus::Pass } else { CheckStatus::Fail },
        observed: trace.summary.oracle_total as f64,
        bound: expected_total as f64,
        tolerance: 0.0,
        seed: 99,
        samples: k_total,
        note: format!("n + (K-1) 3b + switches n with {switches_seen} switches"),
    });

    report(10, "determinism and oracle accounting", false, start, results)
}

/// Fast tier: the exact/algebraic checks (criteria 1, 2, 7, plus the small
/// Lyapunov cases). Completes in well under a minute.
pub fn run_fast() -> Vec<CriterionReport> {
    let mut reports = vec![
        criterion_1_estimator_laws(),
        criterion_2_constants(),
        criterion_7_bfs(),
    ];
    let start = Instant::now();
    let (small, small_cert) = small_instance(6, 91);
    let mut results = vec![check_fullbatch_lyapunov_monotone(&small, &small_cert, 300)];
    let (s4, s4c) = small_instance(4, 92);
    results.push(check_saga_conditional_descent(&s4, &s4c, 120, 13));
    reports.push(report(6, "Lyapunov descent (small instances)", false, start, results));
    reports
}

/// Full tier: every acceptance criterion.
pub fn run_full() -> Vec<CriterionReport> {
    vec![
        criterion_1_estimator_laws(),
        criterion_2_constants(),
        criterion_3_sublinear_bound(),
        criterion_4_rate_order(),
        criterion_5_linear_rate(),
        criterion_6_lyapunov(),
        criterion_7_bfs(),
        criterion_8_ordering(),
        criterion_9_inclusion(),
        criterion_10_determinism(),
    ]
}

/// Prints one line per criterion and per failing check; returns `true`
/// when every non-soft criterion passed.
pub fn print_reports(reports: &[CriterionReport]) -> bool {
    let mut ok = true;
    for rep in reports {
        println!("{}", rep.status_line());
        for r in &rep.results {
            if !r.passed() {
                println!(
                    "    {}: observed {:.6e} vs bound {:.6e} (tol {:.1e}, seed {}) {}",
                    r.id, r.observed, r.bound, r.tolerance, r.seed, r.note
                );
            }
        }
        ok &= rep.passed();
    }
    ok
}

/// Serializes the reports as a machine-readable JSON document.
pub fn reports_to_json(reports: &[CriterionReport]) -> Result<String> {
    Ok(serde_json::to_string_pretty(reports)?)
}
