//! The iterative driver: simulate, adjust tours to the counts, derive
//! quasi-observations, re-estimate every block, and repeat.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adjust::{apply_adjustment, gap_vector, ridge_solve, round_and_repair, Adjustment, TargetTours};
use crate::demand::{Contract, EstablishmentId};
use crate::error::{Error, Result};
use crate::estimate::{
    quasi_flows, quasi_observations, reassign_suppliers, reestimate_generation, reestimate_shipment_size,
    reestimate_supplier_model, sample_choice_sets, BlockReport, QuasiObservations, Reassignment, SmlOptions,
};
use crate::io;
use crate::linalg::spd_solve;
use crate::rng::derive_seed;
use crate::scenario::{simulate, DemandParams, Scenario, SimulationOutput};
use crate::slb::{extract_classes, MappingMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub rmse: f64,
    pub mae: f64,
    /// MAE over the mean observed count.
    pub mae_ratio: f64,
}

pub fn metrics(observed: &[f64], simulated: &[f64]) -> Result<Metrics> {
    if observed.is_empty() {
        return Err(Error::EmptyInput("screenline counts"));
    }
    if simulated.len() != observed.len() {
        return Err(Error::DimensionMismatch { expected: observed.len(), actual: simulated.len() });
    }
    let n = observed.len() as f64;
    let sq: f64 = observed.iter().zip(simulated).map(|(o, s)| (o - s).powi(2)).sum();
    let abs: f64 = observed.iter().zip(simulated).map(|(o, s)| (o - s).abs()).sum();
    let mae = abs / n;
    let mean_obs = observed.iter().sum::<f64>() / n;
    let mae_ratio = if mae == 0.0 { 0.0 } else { mae / mean_obs };
    Ok(Metrics { rmse: (sq / n).sqrt(), mae, mae_ratio })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoocvResult {
    pub lambda: f64,
    /// (λ, CV-RMSE) in grid order.
    pub curve: Vec<(f64, f64)>,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return Err(Error::InvalidConfig("λ grid must be non-empty and strictly positive".into()));
    }
    Ok(())
}

/// Leave-one-screenline-out cross-validation of the ridge penalty. Each fold
/// solves on the remaining screenlines and predicts the held-out count change
/// through the full mapping matrix. Ties go to the largest λ.
pub fn loocv_lambda(a: &MappingMatrix, y: &[f64], grid: &[f64]) -> Result<LoocvResult> {
    check_grid(grid)?;
    let k = a.n_cols();
    if k < 2 {
        return Err(Error::InvalidConfig("cross-validation needs at least two screenlines".into()));
    }
    if y.len() != k {
        return Err(Error::DimensionMismatch { expected: k, actual: y.len() });
    }
    let g = a.gram();
    let curve: Vec<(f64, f64)> = grid
        .par_iter()
        .map(|&lambda| {
            let mut sq = Vec::with_capacity(k);
            for held in 0..k {
                let keep: Vec<usize> = (0..k).filter(|&j| j != held).collect();
                let m =
                    DMatrix::from_fn(k - 1, k - 1, |i, j| g[keep[i] * k + keep[j]] + if i == j { lambda } else { 0.0 });
                let rhs = DVector::from_iterator(k - 1, keep.iter().map(|&j| y[j]));
                let z = spd_solve(m, &rhs).expect("Gram plus positive ridge is positive definite");
                let predicted: f64 = keep.iter().zip(z.iter()).map(|(&j, zj)| g[held * k + j] * zj).sum();
                sq.push((y[held] - predicted).powi(2));
            }
            (lambda, (sq.iter().sum::<f64>() / k as f64).sqrt())
        })
        .collect();
    let mut best = 0;
    for i in 1..curve.len() {
        let (l, v) = curve[i];
        let (bl, bv) = curve[best];
        if v < bv * (1.0 - 1e-12) || (v <= bv * (1.0 + 1e-12) && l > bl) {
            best = i;
        }
    }
    Ok(LoocvResult { lambda: curve[best].0, curve })
}

/// Seven-point log grid used when none is configured.
pub fn default_lambda_grid() -> Vec<f64> {
    (-2..=4).map(|e| 10f64.powi(e)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub lambda_grid: Vec<f64>,
    /// Skips cross-validation when set.
    pub lambda: Option<f64>,
    /// Threshold on |ΔRMSE|; defaults to 0.5% of the mean observed count.
    pub epsilon: Option<f64>,
    pub max_iter: usize,
    pub seed: u64,
    /// Re-run cross-validation at every adjustment instead of once.
    pub reselect_lambda: bool,
    pub draws: usize,
    pub grad_tol: f64,
    pub sml_max_iter: usize,
    pub min_obs_generation: usize,
    pub min_obs_shipment_size: usize,
    pub min_obs_supplier_choice: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            lambda_grid: default_lambda_grid(),
            lambda: None,
            epsilon: None,
            max_iter: 15,
            seed: 0,
            reselect_lambda: false,
            draws: 100,
            grad_tol: 1e-5,
            sml_max_iter: 500,
            min_obs_generation: 0,
            min_obs_shipment_size: 5,
            min_obs_supplier_choice: 30,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        check_grid(&self.lambda_grid)?;
        if let Some(l) = self.lambda {
            if !(l > 0.0) {
                return Err(Error::InvalidConfig("λ must be positive".into()));
            }
        }
        if let Some(e) = self.epsilon {
            if !(e >= 0.0) {
                return Err(Error::InvalidConfig("ε must be non-negative".into()));
            }
        }
        if self.max_iter < 1 {
            return Err(Error::InvalidConfig("max iterations must be at least 1".into()));
        }
        if self.draws < 1 {
            return Err(Error::InvalidConfig("at least one estimation draw is required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub metrics: Metrics,
    /// Penalty used by the adjustment that led to this iteration.
    pub lambda: Option<f64>,
    pub params: DemandParams,
    /// Simulated binary counts per screenline position.
    pub simulated: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationState {
    pub k: usize,
    pub history: Vec<IterationRecord>,
    pub lambda: Option<f64>,
    pub loocv: Option<LoocvResult>,
    pub converged: bool,
}

impl CalibrationState {
    pub fn params(&self) -> &DemandParams {
        &self.history.last().expect("at least one iteration").params
    }
}

/// Diagnostics of one adjustment round.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustmentRound {
    pub gap: Vec<f64>,
    pub adjustment: Adjustment,
    pub target: TargetTours,
    /// ‖y − Aᵀr‖² after applying the rounded adjustment `r`.
    pub post_objective: f64,
    /// ‖y‖² plus the rounding slack; `post_objective` never exceeds it.
    pub bound: f64,
}

/// Solves for and applies the class adjustment closing `gap`, then checks
/// the rounding-slack bound on the re-extracted counts.
pub fn adjustment_round(
    scenario: &Scenario,
    sim: &SimulationOutput,
    gap: &[f64],
    lambda: f64,
    seed: u64,
) -> Result<AdjustmentRound> {
    let a = &sim.matrix;
    let solution = ridge_solve(a, gap, lambda)?;
    if !solution.satisfies_first_order() {
        log::warn!("ridge residual {:e} exceeds tolerance {:e}", solution.residual, solution.tolerance);
    }
    let adjustment = round_and_repair(a, gap, lambda, &solution.x, &sim.class_counts())?;
    let target = apply_adjustment(&sim.plan.tours, &sim.extraction.classes, &adjustment.rounded, seed)?;

    let routes = target.routes(&sim.routes);
    let after = extract_classes(&target.tours, &routes, &scenario.screenlines)?;
    let before_counts = &sim.counts;
    let after_counts =
        crate::slb::assemble_matrix(&after.classes, &scenario.screenlines)?.transpose_mul(&after.counts())?;
    let delta: Vec<f64> = after_counts.iter().zip(before_counts).map(|(a, b)| a - b).collect();
    let post_objective: f64 = gap.iter().zip(&delta).map(|(y, d)| (y - d).powi(2)).sum();
    let fitted = a.transpose_mul(&solution.x)?;
    let rounding =
        a.transpose_mul(&adjustment.rounded_f64().iter().zip(&solution.x).map(|(r, x)| r - x).collect::<Vec<_>>())?;
    let resid_norm = gap.iter().zip(&fitted).map(|(y, f)| (y - f).powi(2)).sum::<f64>().sqrt();
    let rounding_norm = rounding.iter().map(|v| v * v).sum::<f64>().sqrt();
    let y_norm2: f64 = gap.iter().map(|v| v * v).sum();
    let bound = y_norm2 + rounding_norm.powi(2) + 2.0 * resid_norm * rounding_norm;
    if post_objective > bound * (1.0 + 1e-9) + 1e-9 {
        return Err(Error::InvalidConfig(format!("rounding-slack bound violated: {post_objective} > {bound}")));
    }
    Ok(AdjustmentRound { gap: gap.to_vec(), adjustment, target, post_objective, bound })
}

/// Quasi-observations and the re-estimated parameters of one round.
#[derive(Debug, Clone)]
pub struct Reestimation {
    pub quasi: QuasiObservations,
    pub reassignments: Vec<Reassignment>,
    pub params: DemandParams,
    pub reports: Vec<BlockReport>,
}

/// Derives quasi-observations from the target tours and re-estimates the
/// three blocks. A failed block keeps its previous parameters.
pub fn reestimate(
    scenario: &Scenario,
    sim: &SimulationOutput,
    target: &TargetTours,
    params: &DemandParams,
    config: &CalibrationConfig,
    seed: u64,
) -> Result<Reestimation> {
    let ctx = &scenario.ctx;
    let quasi = quasi_observations(ctx, &sim.contracts, &sim.shipments, &sim.plan.instances, &sim.plan.tours, target)?;
    let (q_prod, q_cons) = quasi_flows(ctx, &sim.contracts, &quasi.contract_sizes, &sim.flows);
    let (generation, mut reports) =
        reestimate_generation(ctx, &q_prod, &q_cons, &params.generation, config.min_obs_generation);
    let (shipment, ship_reports) = reestimate_shipment_size(
        ctx,
        &sim.contracts,
        &sim.shipments,
        &quasi.contract_sizes,
        &params.shipment,
        config.min_obs_shipment_size,
    );
    reports.extend(ship_reports);

    let observed: Vec<Contract> =
        sim.contracts.iter().zip(&quasi.contract_sizes).filter(|(_, &x)| x > 0.0).map(|(c, _)| c.clone()).collect();
    let reassignments =
        reassign_suppliers(ctx, &observed, &quasi.origins, &sim.flows, &params.supplier, derive_seed(seed, 1))?;
    let pairs: Vec<(&Contract, EstablishmentId)> =
        observed.iter().zip(&reassignments).map(|(c, r)| (c, r.supplier)).collect();
    let choices = sample_choice_sets(ctx, &sim.flows, &pairs, derive_seed(seed, 2))?;
    let opts = SmlOptions {
        draws: config.draws,
        seed: derive_seed(config.seed, 0xE57),
        grad_tol: config.grad_tol,
        max_iter: config.sml_max_iter,
    };
    let (supplier, choice_reports, _) =
        reestimate_supplier_model(&choices, &params.supplier, &opts, config.min_obs_supplier_choice);
    reports.extend(choice_reports);

    Ok(Reestimation { quasi, reassignments, params: DemandParams { generation, supplier, shipment }, reports })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|l| l.to_string()).unwrap_or_default()
}

fn write_convergence(path: &Path, history: &[IterationRecord]) -> Result<()> {
    let mut s = String::from("k,rmse,mae,mae_ratio,lambda\n");
    for r in history {
        let _ =
            writeln!(s, "{},{},{},{},{}", r.k, r.metrics.rmse, r.metrics.mae, r.metrics.mae_ratio, fmt_opt(r.lambda));
    }
    fs::write(path, s)?;
    Ok(())
}

fn write_loocv(path: &Path, result: &LoocvResult) -> Result<()> {
    let mut s = String::from("lambda,cv_rmse\n");
    for (l, v) in &result.curve {
        let _ = writeln!(s, "{l},{v}");
    }
    fs::write(path, s)?;
    Ok(())
}

fn write_simulation(dir: &Path, scenario: &Scenario, sim: &SimulationOutput) -> Result<()> {
    io::write_contracts(&dir.join("contracts.csv"), &sim.contracts)?;
    io::write_shipments(&dir.join("shipments.csv"), &sim.shipments)?;
    io::write_tours(&dir.join("tours.csv"), &sim.plan.tours)?;
    io::write_slb_classes(&dir.join("slb_classes.csv"), &sim.extraction.classes)?;
    io::write_matrix_market(&dir.join("mapping_matrix.mtx"), &sim.matrix)?;
    io::write_simulated_counts(&dir.join("slb_report.csv"), &scenario.screenlines, &sim.counts, &sim.physical)
}

#[derive(Serialize)]
struct ReportRow<'a> {
    block: &'a str,
    key: &'a str,
    status: &'a str,
    n_obs: usize,
    fit: f64,
    draws: usize,
}

#[derive(Serialize)]
struct QoRow {
    contract_id: u64,
    frequency: f64,
    qo_frequency: f64,
    contract_size_kg: f64,
    qo_contract_size_kg: f64,
    supplier_id: u32,
    qo_supplier_id: Option<u32>,
}

#[derive(Serialize)]
struct OriginRow {
    dest_zone: u32,
    origin_zone: Option<u32>,
    probability: Option<f64>,
}

fn write_reestimation(out: &Path, k: usize, sim: &SimulationOutput, est: &Reestimation) -> Result<()> {
    io::write_parameters_long(&out.join(format!("parameters_{k}.csv")), &est.params)?;
    io::write_csv(
        &out.join(format!("estimation_report_{k}.csv")),
        est.reports.iter().map(|r| ReportRow {
            block: r.block,
            key: &r.key,
            status: r.status.as_str(),
            n_obs: r.n_obs,
            fit: r.fit,
            draws: r.draws,
        }),
    )?;
    let quasi_supplier: HashMap<u64, u32> = est.reassignments.iter().map(|r| (r.contract_id, r.supplier)).collect();
    io::write_csv(
        &out.join(format!("qo_shipments_{k}.csv")),
        sim.contracts.iter().enumerate().map(|(i, c)| QoRow {
            contract_id: c.id,
            frequency: sim.shipments[i].frequency,
            qo_frequency: est.quasi.frequencies[i],
            contract_size_kg: c.size_kg,
            qo_contract_size_kg: est.quasi.contract_sizes[i],
            supplier_id: c.supplier,
            qo_supplier_id: quasi_supplier.get(&c.id).copied(),
        }),
    )?;
    let mut rows = Vec::new();
    for (&d, row) in &est.quasi.origins.rows {
        rows.extend(row.iter().map(|&(o, p)| OriginRow { dest_zone: d, origin_zone: Some(o), probability: Some(p) }));
    }
    rows.extend(est.quasi.origins.empty.iter().map(|&d| OriginRow {
        dest_zone: d,
        origin_zone: None,
        probability: None,
    }));
    rows.sort_by_key(|r| (r.dest_zone, r.origin_zone));
    io::write_csv(&out.join(format!("origin_distribution_{k}.csv")), rows)
}

/// Runs the calibration loop. Iteration 1 simulates with the initial
/// parameters; each later iteration adjusts the previous simulation's tours,
/// re-estimates from the quasi-observations and re-simulates. Stops when
/// |RMSE_k − RMSE_{k−1}| < ε or at `max_iter`. When `out_dir` is given every
/// per-iteration artifact is written there.
pub fn run_calibration(
    scenario: &Scenario,
    initial: &DemandParams,
    config: &CalibrationConfig,
    out_dir: Option<&Path>,
) -> Result<CalibrationState> {
    config.validate()?;
    let observed = scenario.observed();
    let mean_obs = observed.iter().sum::<f64>() / observed.len() as f64;
    let epsilon = config.epsilon.unwrap_or(0.005 * mean_obs);
    if let Some(out) = out_dir {
        fs::create_dir_all(out)?;
    }

    let mut params = initial.clone();
    let mut sim = simulate(scenario, &params, config.seed)?;
    let mut state =
        CalibrationState { k: 1, history: Vec::new(), lambda: config.lambda, loocv: None, converged: false };
    let record = |k, sim: &SimulationOutput, lambda, params: &DemandParams| -> Result<IterationRecord> {
        Ok(IterationRecord {
            k,
            metrics: metrics(&observed, &sim.counts)?,
            lambda,
            params: params.clone(),
            simulated: sim.counts.clone(),
        })
    };
    state.history.push(record(1, &sim, None, &params)?);
    log::info!("k = 1: {:?}", state.history[0].metrics);
    if let Some(out) = out_dir {
        io::write_scatter(&out.join("scatter_1.csv"), &scenario.screenlines, &sim.counts)?;
        io::write_parameters_long(&out.join("parameters_1.csv"), &params)?;
        write_simulation(&out.join("iter_1"), scenario, &sim)?;
        write_convergence(&out.join("convergence.csv"), &state.history)?;
    }

    for k in 2..=config.max_iter {
        let gap = gap_vector(&observed, &sim.counts)?;
        let lambda = match state.lambda {
            Some(l) if !config.reselect_lambda || config.lambda.is_some() => l,
            _ => {
                let cv = loocv_lambda(&sim.matrix, &gap, &config.lambda_grid)?;
                log::info!("k = {k}: cross-validated λ = {}", cv.lambda);
                if let Some(out) = out_dir {
                    write_loocv(&out.join("loocv_curve.csv"), &cv)?;
                    if config.reselect_lambda {
                        write_loocv(&out.join(format!("loocv_curve_{k}.csv")), &cv)?;
                    }
                }
                let l = cv.lambda;
                state.loocv = Some(cv);
                l
            }
        };
        state.lambda = Some(lambda);

        let iter_seed = derive_seed(config.seed, k as u64);
        let round = adjustment_round(scenario, &sim, &gap, lambda, iter_seed)?;
        let est = reestimate(scenario, &sim, &round.target, &params, config, iter_seed)?;
        if let Some(out) = out_dir {
            let dir = out.join(format!("iter_{k}"));
            io::write_adjustment(&dir.join("adjustment.csv"), &round.adjustment)?;
            io::write_target_tours(&dir, &round.target)?;
            write_reestimation(out, k, &sim, &est)?;
        }
        params = est.params;
        sim = simulate(scenario, &params, config.seed)?;
        let rec = record(k, &sim, Some(lambda), &params)?;
        let delta = (rec.metrics.rmse - state.history.last().unwrap().metrics.rmse).abs();
        log::info!("k = {k}: {:?}", rec.metrics);
        state.history.push(rec);
        state.k = k;
        if let Some(out) = out_dir {
            io::write_scatter(&out.join(format!("scatter_{k}.csv")), &scenario.screenlines, &sim.counts)?;
            write_simulation(&out.join(format!("iter_{k}")), scenario, &sim)?;
            write_convergence(&out.join("convergence.csv"), &state.history)?;
        }
        if delta < epsilon {
            state.converged = true;
            break;
        }
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_counts_have_zero_error() {
        let m = metrics(&[3.0, 5.0], &[3.0, 5.0]).unwrap();
        assert_eq!((m.rmse, m.mae, m.mae_ratio), (0.0, 0.0, 0.0));
    }

    #[test]
    fn hand_computed_metrics() {
        let m = metrics(&[10.0, 10.0], &[7.0, 14.0]).unwrap();
        assert!((m.rmse - 12.5f64.sqrt()).abs() < 1e-12);
        assert!((m.mae - 3.5).abs() < 1e-12);
        assert!((m.mae_ratio - 0.35).abs() < 1e-12);
    }

    #[test]
    fn metrics_scale_homogeneously() {
        let o = [4.0, 9.0, 1.0];
        let s = [5.0, 7.0, 2.5];
        let base = metrics(&o, &s).unwrap();
        let c = 3.5;
        let scaled = metrics(&o.map(|v| v * c), &s.map(|v| v * c)).unwrap();
        assert!((scaled.rmse - c * base.rmse).abs() < 1e-12);
        assert!((scaled.mae - c * base.mae).abs() < 1e-12);
        assert!((scaled.mae_ratio - base.mae_ratio).abs() < 1e-12);
    }

    #[test]
    fn metrics_reject_bad_input() {
        assert!(matches!(metrics(&[], &[]), Err(Error::EmptyInput(_))));
        assert!(matches!(metrics(&[1.0], &[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
    }

    fn fig2() -> MappingMatrix {
        MappingMatrix::from_rows(vec![vec![0, 1], vec![1, 3], vec![2, 3]], 4)
    }

    #[test]
    fn single_point_grid() {
        let r = loocv_lambda(&fig2(), &[1.0, 0.0, -1.0, 2.0], &[3.0]).unwrap();
        assert_eq!(r.lambda, 3.0);
        assert_eq!(r.curve.len(), 1);
    }

    #[test]
    fn flat_curve_prefers_largest_lambda() {
        let r = loocv_lambda(&fig2(), &[0.0; 4], &[0.1, 10.0, 1.0]).unwrap();
        assert_eq!(r.lambda, 10.0);
    }

    #[test]
    fn fold_prediction_matches_explicit_refit() {
        let a = fig2();
        let y = [1.0, 0.0, -1.0, 2.0];
        let lambda = 0.7;
        let r = loocv_lambda(&a, &y, &[lambda]).unwrap();
        // refit each fold with the column physically removed
        let mut sq = 0.0;
        for held in 0..4 {
            let keep: Vec<usize> = (0..4).filter(|&j| j != held).collect();
            let rows: Vec<Vec<usize>> = (0..a.n_rows())
                .map(|l| a.row(l).iter().filter_map(|c| keep.iter().position(|k| k == c)).collect())
                .collect();
            let sub = MappingMatrix::from_rows(rows, 3);
            let y_sub: Vec<f64> = keep.iter().map(|&j| y[j]).collect();
            let x = ridge_solve(&sub, &y_sub, lambda).unwrap().x;
            let pred = a.transpose_mul(&x).unwrap()[held];
            sq += (y[held] - pred).powi(2);
        }
        assert!((r.curve[0].1 - (sq / 4.0).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn config_validation() {
        assert!(CalibrationConfig::default().validate().is_ok());
        let bad = [
            CalibrationConfig { lambda_grid: vec![], ..Default::default() },
            CalibrationConfig { lambda_grid: vec![1.0, 0.0], ..Default::default() },
            CalibrationConfig { epsilon: Some(-1.0), ..Default::default() },
            CalibrationConfig { max_iter: 0, ..Default::default() },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))));
        }
    }
}
