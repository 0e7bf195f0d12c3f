//! Quasi-observed supplier choices and simulated maximum likelihood for the
//! error-component logit mixture.

use std::collections::BTreeMap;

use rand::seq::index;
use rayon::prelude::*;

use super::{BlockReport, BlockStatus, OriginDistribution};
use crate::demand::{
    candidates, error_component, sample_index, softmax, systematic_utility, AltAttributes, Contract, DemandContext,
    Epg, ErrorDraws, EstablishmentFlows, EstablishmentId, FunctionType, SupplierChoiceParams, SupplierCoefs,
};
use crate::error::{Error, Result};
use crate::linalg::compensated_sum;
use crate::rng::{derive_seed, substream, Domain};

/// Alternatives per sampled choice set, the chosen supplier included.
pub const CHOICE_SET_SIZE: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReassignFallback {
    EmptyOriginRow,
    NoSupplierInZone,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reassignment {
    pub contract_id: u64,
    pub supplier: EstablishmentId,
    pub fallback: Option<ReassignFallback>,
}

/// Two-step reassignment: draw an origin zone from the receiver zone's origin
/// distribution, then a supplier inside that zone from the logit
/// probabilities renormalized over the receiver's candidates in that zone.
pub fn reassign_suppliers(
    ctx: &DemandContext,
    contracts: &[Contract],
    origins: &OriginDistribution,
    flows: &EstablishmentFlows,
    params: &SupplierChoiceParams,
    seed: u64,
) -> Result<Vec<Reassignment>> {
    let ests = ctx.establishments();
    contracts
        .par_iter()
        .map(|c| {
            let r = ctx.position(c.receiver).ok_or(Error::UnknownNode(c.receiver))?;
            let keep = |fallback| Reassignment { contract_id: c.id, supplier: c.supplier, fallback: Some(fallback) };
            let Ok(row) = origins.row(ests[r].zone) else {
                log::debug!("contract {}: {}", c.id, Error::EmptyOriginRow(ests[r].zone));
                return Ok(keep(ReassignFallback::EmptyOriginRow));
            };
            let mut rng = substream(seed, Domain::Reassignment, c.id);
            let probs: Vec<f64> = row.iter().map(|&(_, p)| p).collect();
            let zone = row[sample_index(&probs, &mut rng)].0;
            let cands: Vec<usize> = candidates(ctx, flows, r).into_iter().filter(|&s| ests[s].zone == zone).collect();
            if cands.is_empty() {
                log::debug!("contract {}: no candidate supplier in zone {zone}", c.id);
                return Ok(keep(ReassignFallback::NoSupplierInZone));
            }
            let draws = ErrorDraws::sample(&mut rng);
            let utilities = cands
                .iter()
                .map(|&s| {
                    let coefs = params.coefs(&ctx.epg(r, s))?;
                    let attrs = alt_attributes(ctx, flows, r, s, c.size_kg);
                    Ok(systematic_utility(coefs, &attrs)? + error_component(coefs, attrs.function, &draws))
                })
                .collect::<Result<Vec<_>>>()?;
            let pick = cands[sample_index(&softmax(&utilities), &mut rng)];
            Ok(Reassignment { contract_id: c.id, supplier: ests[pick].id, fallback: None })
        })
        .collect()
}

fn alt_attributes(
    ctx: &DemandContext,
    flows: &EstablishmentFlows,
    receiver: usize,
    supplier: usize,
    demand: f64,
) -> AltAttributes {
    AltAttributes {
        time_s: ctx.supplier_time(supplier, receiver),
        production: flows.production[supplier],
        demand,
        function: ctx.establishments()[supplier].function,
    }
}

/// One quasi-observed supplier choice.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceObservation {
    pub epg: Epg,
    pub alternatives: Vec<AltAttributes>,
    /// Establishment ids aligned with `alternatives`.
    pub suppliers: Vec<EstablishmentId>,
    pub chosen: usize,
    /// Fewer than [`CHOICE_SET_SIZE`] same-group suppliers were available.
    pub short: bool,
}

/// Builds a choice set per contract: the quasi-observed supplier plus up to
/// 49 other suppliers of the same pair group drawn uniformly without
/// replacement from the receiver's candidate suppliers, the universe the
/// simulation chooses from. `quasi` pairs each contract with its
/// quasi-observed supplier.
pub fn sample_choice_sets(
    ctx: &DemandContext,
    flows: &EstablishmentFlows,
    quasi: &[(&Contract, EstablishmentId)],
    seed: u64,
) -> Result<Vec<ChoiceObservation>> {
    let ests = ctx.establishments();
    let mut universe: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(c, _) in quasi {
        let r = ctx.position(c.receiver).ok_or(Error::UnknownNode(c.receiver))?;
        universe.entry(r).or_default();
    }
    let receivers: Vec<usize> = universe.keys().copied().collect();
    let lists: Vec<Vec<usize>> = receivers.par_iter().map(|&r| candidates(ctx, flows, r)).collect();
    universe = receivers.into_iter().zip(lists).collect();
    quasi
        .par_iter()
        .map(|&(c, supplier)| {
            let r = ctx.position(c.receiver).ok_or(Error::UnknownNode(c.receiver))?;
            let s = ctx.position(supplier).ok_or(Error::UnknownNode(supplier))?;
            let function = ests[s].function;
            let pool: Vec<usize> =
                universe[&r].iter().copied().filter(|&i| i != s && ests[i].function == function).collect();
            let want = CHOICE_SET_SIZE - 1;
            let mut members = vec![s];
            let short = pool.len() < want;
            if short {
                members.extend(&pool);
            } else {
                let mut rng = substream(seed, Domain::ChoiceSets, c.id);
                members.extend(index::sample(&mut rng, pool.len(), want).into_iter().map(|i| pool[i]));
            }
            Ok(ChoiceObservation {
                epg: ctx.epg(r, s),
                alternatives: members.iter().map(|&a| alt_attributes(ctx, flows, r, a, c.size_kg)).collect(),
                suppliers: members.iter().map(|&a| ests[a].id).collect(),
                chosen: 0,
                short,
            })
        })
        .collect()
}

const P: usize = SupplierCoefs::LEN;

fn nest_indicators(f: FunctionType) -> [f64; 3] {
    match f {
        FunctionType::Office | FunctionType::Retail => [1.0, 0.0, 1.0],
        FunctionType::LogisticsFacility => [0.0, 1.0, 1.0],
        FunctionType::Factory => [0.0, 0.0, 0.0],
    }
}

/// Observation laid out for repeated likelihood evaluation.
struct Prepared {
    base: Vec<[f64; 4]>,
    nests: Vec<[f64; 3]>,
    chosen: usize,
    /// One triple per draw; a single zero triple when the error components
    /// cancel within the choice set.
    draws: Vec<[f64; 3]>,
}

fn varies<F: Fn(usize) -> f64>(n: usize, f: F) -> bool {
    let first = f(0);
    (1..n).any(|j| (f(j) - first).abs() > 1e-12 * (1.0 + first.abs()))
}

fn prepare(obs: &[ChoiceObservation], draws: usize, seed: u64) -> Result<Vec<Prepared>> {
    obs.iter()
        .enumerate()
        .map(|(i, o)| {
            if o.alternatives.is_empty() || o.chosen >= o.alternatives.len() {
                return Err(Error::EmptyInput("choice set"));
            }
            let mut base = Vec::with_capacity(o.alternatives.len());
            for a in &o.alternatives {
                // routed through the utility to share its log checks
                let unit = SupplierCoefs::default();
                systematic_utility(&unit, a)?;
                base.push([a.time_s.ln(), a.production.ln(), a.demand.ln(), 1.0]);
            }
            let nests: Vec<[f64; 3]> = o.alternatives.iter().map(|a| nest_indicators(a.function)).collect();
            let mixed = (0..3).any(|q| varies(nests.len(), |j| nests[j][q]));
            let draws = if mixed {
                let mut rng = substream(seed, Domain::EstimationDraws, i as u64);
                (0..draws.max(1))
                    .map(|_| {
                        let d = ErrorDraws::sample(&mut rng);
                        [d.or, d.lf, d.dws]
                    })
                    .collect()
            } else {
                vec![[0.0; 3]]
            };
            Ok(Prepared { base, nests, chosen: o.chosen, draws })
        })
        .collect()
}

/// Parameters whose regressor varies within at least one choice set. The
/// others cancel out of every logit probability and cannot be estimated.
fn identified(prepared: &[Prepared]) -> [bool; P] {
    let mut free = [false; P];
    for p in prepared {
        let n = p.base.len();
        for (q, f) in free.iter_mut().take(4).enumerate() {
            *f |= varies(n, |j| p.base[j][q]);
        }
        for q in 0..3 {
            free[4 + q] |= varies(n, |j| p.nests[j][q]);
        }
    }
    free
}

/// Simulated log-likelihood contribution and its gradient for one observation.
fn contribution(p: &Prepared, theta: &[f64; P]) -> (f64, [f64; P]) {
    let n = p.base.len();
    let mut utilities = vec![0.0; n];
    let mut features = vec![[0.0; P]; n];
    let mut log_p = Vec::with_capacity(p.draws.len());
    let mut scores = Vec::with_capacity(p.draws.len());
    for d in &p.draws {
        for j in 0..n {
            let f = &mut features[j];
            f[..4].copy_from_slice(&p.base[j]);
            for q in 0..3 {
                f[4 + q] = p.nests[j][q] * d[q];
            }
            utilities[j] = f.iter().zip(theta).map(|(a, b)| a * b).sum();
        }
        let max = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for u in &mut utilities {
            *u = (*u - max).exp();
            total += *u;
        }
        log_p.push((utilities[p.chosen] / total).ln());
        let mut score = features[p.chosen];
        for j in 0..n {
            let w = utilities[j] / total;
            for q in 0..P {
                score[q] -= w * features[j][q];
            }
        }
        scores.push(score);
    }
    let max = log_p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_p.iter().map(|l| (l - max).exp()).collect();
    let wsum: f64 = weights.iter().sum();
    let ll = max + (wsum / p.draws.len() as f64).ln();
    let mut grad = [0.0; P];
    for (w, s) in weights.iter().zip(&scores) {
        for q in 0..P {
            grad[q] += w * s[q] / wsum;
        }
    }
    (ll, grad)
}

fn evaluate(prepared: &[Prepared], theta: &[f64; P]) -> (f64, [f64; P]) {
    let parts: Vec<(f64, [f64; P])> = prepared.par_iter().map(|p| contribution(p, theta)).collect();
    let ll = compensated_sum(parts.iter().map(|(l, _)| *l));
    let mut grad = [0.0; P];
    for (q, g) in grad.iter_mut().enumerate() {
        *g = compensated_sum(parts.iter().map(|(_, s)| s[q]));
    }
    (ll, grad)
}

/// Simulated log-likelihood: per observation, the log of the chosen
/// alternative's logit probability averaged over `draws` error-component
/// draws taken from a fixed seed.
pub fn simulated_log_likelihood(
    obs: &[ChoiceObservation],
    coefs: &SupplierCoefs,
    draws: usize,
    seed: u64,
) -> Result<f64> {
    let prepared = prepare(obs, draws, seed)?;
    let theta: [f64; P] = coefs.as_array();
    Ok(evaluate(&prepared, &theta).0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmlOptions {
    pub draws: usize,
    pub seed: u64,
    pub grad_tol: f64,
    pub max_iter: usize,
}

impl Default for SmlOptions {
    fn default() -> Self {
        Self { draws: 100, seed: 0, grad_tol: 1e-5, max_iter: 500 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmlFit {
    /// Estimates with error-component scales reported as absolute values.
    pub coefs: SupplierCoefs,
    pub log_likelihood: f64,
    pub n_obs: usize,
    pub draws: usize,
    pub iterations: usize,
    pub grad_norm: f64,
    /// Which coefficients were estimated; the rest kept their start values.
    pub free: [bool; P],
    /// Standard errors from the numerical Hessian; NaN for fixed entries.
    pub std_errors: [f64; P],
}

/// Mean log-likelihood above which the chosen alternatives carry more than
/// 0.999 of the probability on average.
const SEPARATION_MEAN_LL: f64 = -1e-3;

/// Smallest admissible eigenvalue of the observed information relative to
/// the largest; below it some direction is not identified by the data.
const MIN_INFO_RATIO: f64 = 1e-10;

fn inf_norm(g: &[f64]) -> f64 {
    g.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Maximizes the simulated log-likelihood by BFGS over the identified
/// coefficients, with the analytic gradient.
pub fn estimate_mixed_logit(obs: &[ChoiceObservation], start: &SupplierCoefs, opts: &SmlOptions) -> Result<SmlFit> {
    let label = obs.first().map_or_else(|| "choice".to_string(), |o| o.epg.to_string());
    if obs.is_empty() {
        return Err(Error::EmptyInput("choice observations"));
    }
    let prepared = prepare(obs, opts.draws, opts.seed)?;
    let free = identified(&prepared);
    let idx: Vec<usize> = (0..P).filter(|&q| free[q]).collect();
    let m = idx.len();
    let mut theta: [f64; P] = start.as_array();

    // minimize f = -LL over the free block
    let eval = |x: &[f64], theta: &mut [f64; P]| {
        for (k, &q) in idx.iter().enumerate() {
            theta[q] = x[k];
        }
        let (ll, g) = evaluate(&prepared, theta);
        (-ll, idx.iter().map(|&q| -g[q]).collect::<Vec<f64>>())
    };

    let mut x: Vec<f64> = idx.iter().map(|&q| theta[q]).collect();
    let (mut f, mut g) = eval(&x, &mut theta);
    let mut h = identity(m);
    let mut iterations = 0;
    let mut converged = inf_norm(&g) <= opts.grad_tol;
    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let mut d: Vec<f64> = (0..m).map(|i| -(0..m).map(|j| h[i][j] * g[j]).sum::<f64>()).collect();
        let mut slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        if slope >= 0.0 {
            h = identity(m);
            d = g.iter().map(|v| -v).collect();
            slope = -g.iter().map(|v| v * v).sum::<f64>();
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            let (ft, gt) = eval(&trial, &mut theta);
            let armijo = ft <= f + 1e-4 * step * slope;
            let flat = (ft - f).abs() <= 1e-12 * (1.0 + f.abs()) && inf_norm(&gt) < inf_norm(&g);
            if ft.is_finite() && (armijo || flat) {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gn)) = accepted else { break };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
        if sy > 1e-300 {
            if iterations == 1 {
                let yy: f64 = yv.iter().map(|v| v * v).sum();
                h = identity(m);
                for (i, row) in h.iter_mut().enumerate() {
                    row[i] = sy / yy;
                }
            }
            bfgs_update(&mut h, &s, &yv, sy);
        }
        x = xn;
        f = fnew;
        g = gn;
        converged = inf_norm(&g) <= opts.grad_tol;
    }
    let grad_norm = inf_norm(&g);
    if !converged {
        return Err(Error::NonConvergence { group: label, iterations, grad_norm });
    }
    for (k, &q) in idx.iter().enumerate() {
        theta[q] = x[k];
    }
    let std_errors = standard_errors(&prepared, &theta, &idx);
    // separated data leave the likelihood rising towards a finite limit,
    // which shows as a vanishing mean loss or a flat information direction
    let separated = m > 0 && -f / obs.len() as f64 > SEPARATION_MEAN_LL;
    if separated || idx.iter().any(|&q| !std_errors[q].is_finite()) {
        return Err(Error::Separation(label));
    }
    let mut coefs = SupplierCoefs::from_slice(&theta);
    coefs.sigma_or = coefs.sigma_or.abs();
    coefs.sigma_lf = coefs.sigma_lf.abs();
    coefs.sigma_dws = coefs.sigma_dws.abs();
    Ok(SmlFit {
        coefs,
        log_likelihood: -f,
        n_obs: obs.len(),
        draws: prepared.iter().map(|p| p.draws.len()).max().unwrap_or(1),
        iterations,
        grad_norm,
        free,
        std_errors,
    })
}

fn identity(m: usize) -> Vec<Vec<f64>> {
    (0..m).map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

/// Inverse-Hessian BFGS update.
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let m = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..m).map(|i| (0..m).map(|j| h[i][j] * y[j]).sum()).collect();
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    for i in 0..m {
        for j in 0..m {
            h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

/// Square roots of the diagonal of the inverse observed information, with the
/// Hessian from central differences of the analytic gradient; all NaN when the
/// information is singular or ill-conditioned.
fn standard_errors(prepared: &[Prepared], theta: &[f64; P], idx: &[usize]) -> [f64; P] {
    let m = idx.len();
    if m == 0 {
        return [f64::NAN; P];
    }
    let mut hess = nalgebra::DMatrix::<f64>::zeros(m, m);
    for (a, &q) in idx.iter().enumerate() {
        let step = 1e-4 * (1.0 + theta[q].abs());
        let mut up = *theta;
        let mut down = *theta;
        up[q] += step;
        down[q] -= step;
        let (_, gu) = evaluate(prepared, &up);
        let (_, gd) = evaluate(prepared, &down);
        for (b, &r) in idx.iter().enumerate() {
            hess[(b, a)] = -(gu[r] - gd[r]) / (2.0 * step);
        }
    }
    let sym = (&hess + hess.transpose()) * 0.5;
    let mut out = [f64::NAN; P];
    let eig = sym.clone().symmetric_eigenvalues();
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v.abs())));
    if !(lo > MIN_INFO_RATIO * hi) {
        return out;
    }
    if let Some(inv) = sym.try_inverse() {
        for (a, &q) in idx.iter().enumerate() {
            let v = inv[(a, a)];
            if v > 0.0 {
                out[q] = v.sqrt();
            }
        }
    }
    out
}

/// Re-estimates every pair group with at least `min_obs` observations; the
/// others, and any that fail to converge, keep their previous coefficients.
pub fn reestimate_supplier_model(
    obs: &[ChoiceObservation],
    previous: &SupplierChoiceParams,
    opts: &SmlOptions,
    min_obs: usize,
) -> (SupplierChoiceParams, Vec<BlockReport>, BTreeMap<Epg, SmlFit>) {
    let mut by_epg: BTreeMap<&Epg, Vec<ChoiceObservation>> = BTreeMap::new();
    for o in obs {
        by_epg.entry(&o.epg).or_default().push(o.clone());
    }
    for epg in previous.epgs.keys() {
        by_epg.entry(epg).or_default();
    }
    let groups: Vec<(usize, &Epg, Vec<ChoiceObservation>)> =
        by_epg.into_iter().enumerate().map(|(i, (e, v))| (i, e, v)).collect();
    let results: Vec<(Epg, BlockReport, Option<SmlFit>)> = groups
        .into_par_iter()
        .map(|(i, epg, group_obs)| {
            let mut report = BlockReport {
                block: "supplier_choice",
                key: epg.to_string(),
                status: BlockStatus::Updated,
                n_obs: group_obs.len(),
                fit: f64::NAN,
                draws: opts.draws,
            };
            if group_obs.len() < min_obs {
                report.status = BlockStatus::InsufficientObservations;
                return (epg.clone(), report, None);
            }
            let start = previous.epgs.get(epg).copied().unwrap_or_default();
            let local = SmlOptions { seed: derive_seed(opts.seed, i as u64), ..*opts };
            match estimate_mixed_logit(&group_obs, &start, &local) {
                Ok(fit) => {
                    report.fit = fit.log_likelihood;
                    report.draws = fit.draws;
                    (epg.clone(), report, Some(fit))
                }
                Err(e) => {
                    log::warn!("supplier choice `{epg}` kept previous parameters: {e}");
                    report.status = match e {
                        Error::NonConvergence { .. } => BlockStatus::NonConvergence,
                        _ => BlockStatus::Failed,
                    };
                    (epg.clone(), report, None)
                }
            }
        })
        .collect();
    let mut out = previous.clone();
    let mut reports = Vec::with_capacity(results.len());
    let mut fits = BTreeMap::new();
    for (epg, report, fit) in results {
        if let Some(fit) = fit {
            out.epgs.insert(epg.clone(), fit.coefs);
            fits.insert(epg, fit);
        }
        reports.push(report);
    }
    (out, reports, fits)
}
