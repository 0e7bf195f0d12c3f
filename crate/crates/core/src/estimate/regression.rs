//! Least-squares re-estimation of the generation and shipment-size blocks.

use std::collections::{BTreeMap, HashMap};

use super::{BlockReport, BlockStatus};
use crate::demand::{
    ConsumptionCoefs, Contract, DemandContext, EstablishmentFlows, GenerationParams, ProductionCoefs, Shipment,
    ShipmentSizeCoefs, ShipmentSizeParams,
};
use crate::linalg::ols;

/// Quasi-observed production and consumption per establishment position.
/// Consumption is the quasi contract size summed by receiver. Production is
/// the simulated production scaled by the ratio of quasi to initial contract
/// sizes summed by supplier, so an unadjusted iteration returns it unchanged;
/// suppliers without contracts keep their production.
pub fn quasi_flows(
    ctx: &DemandContext,
    contracts: &[Contract],
    sizes_kg: &[f64],
    initial: &EstablishmentFlows,
) -> (Vec<f64>, Vec<f64>) {
    let n = ctx.establishments().len();
    let mut supplied = vec![0.0; n];
    let mut quasi_supplied = vec![0.0; n];
    let mut consumption = vec![0.0; n];
    for (c, &x) in contracts.iter().zip(sizes_kg) {
        if let Some(s) = ctx.position(c.supplier) {
            supplied[s] += c.size_kg;
            quasi_supplied[s] += x;
        }
        if let Some(r) = ctx.position(c.receiver) {
            consumption[r] += x;
        }
    }
    let production = (0..n)
        .map(|i| {
            if supplied[i] > 0.0 {
                initial.production[i] * quasi_supplied[i] / supplied[i]
            } else {
                initial.production[i]
            }
        })
        .collect();
    (production, consumption)
}

fn fit_block(
    block: &'static str,
    key: &str,
    rows: &[Vec<f64>],
    y: &[f64],
    min_obs: usize,
) -> (Option<Vec<f64>>, BlockReport) {
    let need = min_obs.max(rows.first().map_or(1, |r| r.len() + 1));
    let mut report = BlockReport {
        block,
        key: key.to_string(),
        status: BlockStatus::Updated,
        n_obs: rows.len(),
        fit: f64::NAN,
        draws: 0,
    };
    if rows.len() < need {
        report.status = BlockStatus::InsufficientObservations;
        return (None, report);
    }
    match ols(rows, y) {
        Some(fit) => {
            report.fit = fit.r_squared;
            (Some(fit.coefficients), report)
        }
        None => {
            report.status = BlockStatus::RankDeficient;
            (None, report)
        }
    }
}

/// Refits the production and consumption forms per group on quasi-observed
/// flows. Groups without enough observations, or with a singular design,
/// keep their previous coefficients.
pub fn reestimate_generation(
    ctx: &DemandContext,
    production: &[f64],
    consumption: &[f64],
    previous: &GenerationParams,
    min_obs: usize,
) -> (GenerationParams, Vec<BlockReport>) {
    let mut by_group: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in ctx.establishments().iter().enumerate() {
        by_group.entry(e.group.as_str()).or_default().push(i);
    }
    let mut out = previous.clone();
    let mut reports = Vec::new();
    for (group, members) in by_group {
        let ests = ctx.establishments();
        let prod_rows: Vec<Vec<f64>> = members
            .iter()
            .map(|&i| {
                let e = &ests[i];
                vec![1.0, e.floor_area, e.employment, e.floor_area * e.employment]
            })
            .collect();
        let prod_y: Vec<f64> = members.iter().map(|&i| production[i]).collect();
        let cons_rows: Vec<Vec<f64>> =
            prod_rows.iter().zip(&prod_y).map(|(r, &p)| r.iter().copied().chain([p]).collect()).collect();
        let cons_y: Vec<f64> = members.iter().map(|&i| consumption[i]).collect();

        let (prod, rp) = fit_block("production", group, &prod_rows, &prod_y, min_obs);
        let (cons, rc) = fit_block("consumption", group, &cons_rows, &cons_y, min_obs);
        let entry = out.groups.entry(group.to_string()).or_default();
        if let Some(b) = prod {
            entry.production = ProductionCoefs::from_slice(&b);
        }
        if let Some(b) = cons {
            entry.consumption = ConsumptionCoefs::from_slice(&b);
        }
        reports.push(rp);
        reports.push(rc);
    }
    (out, reports)
}

/// Refits `ln s` on `(1, ln x̂, ln dist, ln dense)` per receiver group.
/// Contracts whose quasi-observed size is zero are left out.
pub fn reestimate_shipment_size(
    ctx: &DemandContext,
    contracts: &[Contract],
    shipments: &[Shipment],
    sizes_kg: &[f64],
    previous: &ShipmentSizeParams,
    min_obs: usize,
) -> (ShipmentSizeParams, Vec<BlockReport>) {
    let receivers: HashMap<u64, usize> =
        contracts.iter().filter_map(|c| ctx.position(c.receiver).map(|r| (c.id, r))).collect();
    let mut by_group: BTreeMap<&str, (Vec<Vec<f64>>, Vec<f64>)> = BTreeMap::new();
    for e in ctx.establishments() {
        by_group.entry(e.group.as_str()).or_default();
    }
    for (s, &x) in shipments.iter().zip(sizes_kg) {
        if !(x > 0.0) {
            continue;
        }
        let Some(&r) = receivers.get(&s.contract_id) else { continue };
        let group = ctx.establishments()[r].group.as_str();
        let (rows, y) = by_group.get_mut(group).expect("group registered");
        rows.push(vec![1.0, x.ln(), s.dist_km.ln(), s.density.ln()]);
        y.push(s.size_kg.ln());
    }
    let mut out = previous.clone();
    let mut reports = Vec::new();
    for (group, (rows, y)) in by_group {
        let (coefs, report) = fit_block("shipment_size", group, &rows, &y, min_obs);
        if let Some(b) = coefs {
            out.groups.insert(group.to_string(), ShipmentSizeCoefs::from_slice(&b));
        }
        reports.push(report);
    }
    (out, reports)
}
