//! Supplier selection: an error-component logit mixture over candidate
//! suppliers, simulated with one error-component draw per contract.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DemandContext, Epg, EstablishmentFlows, EstablishmentId, FunctionType};
use crate::error::{Error, Result};
use crate::rng::{substream, Domain};

/// Floor applied to supplier-receiver travel times so intra-zonal pairs keep a
/// finite log.
pub const MIN_TRAVEL_TIME_S: f64 = 60.0;
/// Candidate suppliers considered per contract, nearest first.
pub const MAX_CANDIDATES: usize = 200;
/// Contract ids are `receiver * CONTRACT_STRIDE + index`, stable across runs.
pub const CONTRACT_STRIDE: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SupplierCoefs {
    pub time: f64,
    pub prod: f64,
    pub demand: f64,
    pub constant: f64,
    pub sigma_or: f64,
    pub sigma_lf: f64,
    pub sigma_dws: f64,
}

impl SupplierCoefs {
    pub const LEN: usize = 7;

    pub fn as_array(&self) -> [f64; 7] {
        [self.time, self.prod, self.demand, self.constant, self.sigma_or, self.sigma_lf, self.sigma_dws]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self { time: v[0], prod: v[1], demand: v[2], constant: v[3], sigma_or: v[4], sigma_lf: v[5], sigma_dws: v[6] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupplierChoiceParams {
    pub epgs: BTreeMap<Epg, SupplierCoefs>,
    /// Error-component draws per observation when estimating.
    pub draws: usize,
}

impl Default for SupplierChoiceParams {
    fn default() -> Self {
        Self { epgs: BTreeMap::new(), draws: 100 }
    }
}

impl SupplierChoiceParams {
    pub fn coefs(&self, epg: &Epg) -> Result<&SupplierCoefs> {
        self.epgs.get(epg).ok_or_else(|| Error::MissingGroupParams(epg.to_string()))
    }
}

/// Standard-normal error components shared by all alternatives of one choice.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorDraws {
    pub or: f64,
    pub lf: f64,
    pub dws: f64,
}

impl ErrorDraws {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self { or: rng.sample(StandardNormal), lf: rng.sample(StandardNormal), dws: rng.sample(StandardNormal) }
    }
}

/// Attributes of one supplier alternative for one receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AltAttributes {
    pub time_s: f64,
    pub production: f64,
    pub demand: f64,
    pub function: FunctionType,
}

/// Error component carried by a supplier of the given function type.
pub fn error_component(coefs: &SupplierCoefs, function: FunctionType, draws: &ErrorDraws) -> f64 {
    match function {
        FunctionType::Office | FunctionType::Retail => coefs.sigma_or * draws.or + coefs.sigma_dws * draws.dws,
        FunctionType::LogisticsFacility => coefs.sigma_lf * draws.lf + coefs.sigma_dws * draws.dws,
        FunctionType::Factory => 0.0,
    }
}

fn ln_checked(what: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 {
        Ok(value.ln())
    } else {
        Err(Error::NonPositiveLogArgument { what, value })
    }
}

/// Systematic utility without the error components.
pub fn systematic_utility(coefs: &SupplierCoefs, attrs: &AltAttributes) -> Result<f64> {
    Ok(coefs.time * ln_checked("x_time", attrs.time_s)?
        + coefs.prod * ln_checked("x_prod", attrs.production)?
        + coefs.demand * ln_checked("x_demand", attrs.demand)?
        + coefs.constant)
}

/// Systematic utility plus error components. The Gumbel term is not sampled;
/// the logit formula integrates it out.
pub fn supplier_utility(coefs: &SupplierCoefs, attrs: &AltAttributes, draws: &ErrorDraws) -> Result<f64> {
    Ok(systematic_utility(coefs, attrs)? + error_component(coefs, attrs.function, draws))
}

/// Numerically stable softmax.
pub fn softmax(utilities: &[f64]) -> Vec<f64> {
    let max = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = utilities.iter().map(|u| (u - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

/// Logit choice probabilities conditional on one error-component draw.
pub fn choice_probabilities(alts: &[(&SupplierCoefs, AltAttributes)], draws: &ErrorDraws) -> Result<Vec<f64>> {
    let utilities = alts.iter().map(|(c, a)| supplier_utility(c, a, draws)).collect::<Result<Vec<_>>>()?;
    Ok(softmax(&utilities))
}

/// Index drawn from a discrete distribution with one uniform variate.
pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

#[derive(Debug, Clone, PartialEq)]
pub struct Contract {
    pub id: u64,
    pub receiver: EstablishmentId,
    pub supplier: EstablishmentId,
    pub commodity: String,
    /// Annual contract size in kg.
    pub size_kg: f64,
    pub epg: Epg,
}

/// Equal split of annual consumption into contract-based demands.
pub fn split_demand(consumption: f64, mean_contract_size: f64) -> (usize, f64) {
    if consumption <= 0.0 {
        return (0, 0.0);
    }
    let n = (consumption / mean_contract_size).ceil().max(1.0) as usize;
    (n, consumption / n as f64)
}

/// Candidate suppliers for a receiver, nearest first by zone travel time,
/// capped at [`MAX_CANDIDATES`].
pub(crate) fn candidates(ctx: &DemandContext, flows: &EstablishmentFlows, receiver: usize) -> Vec<usize> {
    let commodity = ctx.commodity_of(receiver);
    let ests = ctx.establishments();
    let mut cands: Vec<usize> = (0..ests.len())
        .filter(|&s| s != receiver && flows.production[s] > 0.0 && ctx.commodity_of(s) == commodity)
        .collect();
    cands.sort_by(|&a, &b| {
        ctx.supplier_time(a, receiver).total_cmp(&ctx.supplier_time(b, receiver)).then(ests[a].id.cmp(&ests[b].id))
    });
    cands.truncate(MAX_CANDIDATES);
    cands
}

/// Splits every receiver's consumption into contracts and picks a supplier
/// for each by sampling from the logit probabilities under a per-contract
/// error-component draw.
pub fn supplier_selection(
    ctx: &DemandContext,
    flows: &EstablishmentFlows,
    params: &SupplierChoiceParams,
    mean_contract_size: f64,
    seed: u64,
) -> Result<Vec<Contract>> {
    if !(mean_contract_size > 0.0) {
        return Err(Error::InvalidConfig("mean contract size must be positive".into()));
    }
    let ests = ctx.establishments();
    let per_receiver: Vec<Result<Vec<Contract>>> = (0..ests.len())
        .into_par_iter()
        .map(|r| {
            let (count, size) = split_demand(flows.consumption[r], mean_contract_size);
            if count == 0 {
                return Ok(Vec::new());
            }
            if count as u64 >= CONTRACT_STRIDE {
                return Err(Error::InvalidConfig(format!(
                    "receiver {} would need {count} contracts; raise the mean contract size",
                    ests[r].id
                )));
            }
            let cands = candidates(ctx, flows, r);
            if cands.is_empty() {
                return Err(Error::NoCandidateSupplier { receiver: ests[r].id });
            }
            let mut coefs = Vec::with_capacity(cands.len());
            let mut systematic = Vec::with_capacity(cands.len());
            for &s in &cands {
                let c = params.coefs(&ctx.epg(r, s))?;
                let attrs = AltAttributes {
                    time_s: ctx.supplier_time(s, r),
                    production: flows.production[s],
                    demand: size,
                    function: ests[s].function,
                };
                systematic.push(systematic_utility(c, &attrs)?);
                coefs.push(c);
            }
            let mut out = Vec::with_capacity(count);
            let mut utilities = vec![0.0; cands.len()];
            for k in 0..count {
                let id = ests[r].id as u64 * CONTRACT_STRIDE + k as u64;
                let mut rng = substream(seed, Domain::SupplierSelection, id);
                let draws = ErrorDraws::sample(&mut rng);
                for (j, &s) in cands.iter().enumerate() {
                    utilities[j] = systematic[j] + error_component(coefs[j], ests[s].function, &draws);
                }
                let pick = cands[sample_index(&softmax(&utilities), &mut rng)];
                out.push(Contract {
                    id,
                    receiver: ests[r].id,
                    supplier: ests[pick].id,
                    commodity: ctx.commodity_of(r).to_string(),
                    size_kg: size,
                    epg: ctx.epg(r, pick),
                });
            }
            Ok(out)
        })
        .collect();
    let mut contracts = Vec::new();
    for r in per_receiver {
        contracts.extend(r?);
    }
    Ok(contracts)
}
