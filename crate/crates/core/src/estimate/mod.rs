//! Quasi-observations derived from the target tours, and re-estimation of
//! every demand-model block from them.

mod choice;
mod quasi;
mod regression;

use std::fmt;

pub use choice::{
    estimate_mixed_logit, reassign_suppliers, reestimate_supplier_model, sample_choice_sets, simulated_log_likelihood,
    ChoiceObservation, ReassignFallback, Reassignment, SmlFit, SmlOptions, CHOICE_SET_SIZE,
};
pub use quasi::{origin_distribution, quasi_contract_size, quasi_contract_sizes, quasi_shipments, OriginDistribution};
pub use regression::{quasi_flows, reestimate_generation, reestimate_shipment_size};

use crate::adjust::TargetTours;
use crate::demand::{Contract, DemandContext, NodeTour, Shipment, ShipmentInstance};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockStatus {
    Updated,
    InsufficientObservations,
    RankDeficient,
    NonConvergence,
    Failed,
}

impl BlockStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Updated => "updated",
            Self::InsufficientObservations => "insufficient_observations",
            Self::RankDeficient => "rank_deficient",
            Self::NonConvergence => "non_convergence",
            Self::Failed => "failed",
        }
    }
}

impl fmt::Display for BlockStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of re-estimating one parameter block for one group.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockReport {
    pub block: &'static str,
    pub key: String,
    pub status: BlockStatus,
    pub n_obs: usize,
    /// R² for least-squares blocks, log-likelihood for the choice model.
    pub fit: f64,
    pub draws: usize,
}

/// Quasi-observed quantities for one iteration, aligned with the contracts.
#[derive(Debug, Clone, PartialEq)]
pub struct QuasiObservations {
    /// Adjusted annual shipment frequency.
    pub frequencies: Vec<f64>,
    /// Adjusted annual contract size in kg.
    pub contract_sizes: Vec<f64>,
    pub origins: OriginDistribution,
}

/// Derives adjusted frequencies, contract sizes and the origin distribution
/// of quasi-observed shipments (supplier zone to receiver zone).
pub fn quasi_observations(
    ctx: &DemandContext,
    contracts: &[Contract],
    shipments: &[Shipment],
    instances: &[ShipmentInstance],
    initial: &[NodeTour],
    target: &TargetTours,
) -> Result<QuasiObservations> {
    if contracts.len() != shipments.len() {
        return Err(Error::DimensionMismatch { expected: contracts.len(), actual: shipments.len() });
    }
    let frequencies = quasi_shipments(initial, target, instances, shipments);
    let sizes: Vec<f64> = contracts.iter().map(|c| c.size_kg).collect();
    let contract_sizes = quasi_contract_sizes(shipments, &frequencies, &sizes)?;
    let ests = ctx.establishments();
    let mut flows = Vec::with_capacity(contracts.len());
    for (c, &f) in contracts.iter().zip(&frequencies) {
        let s = ctx.establishment(c.supplier).ok_or(Error::UnknownNode(c.supplier))?;
        let r = ctx.establishment(c.receiver).ok_or(Error::UnknownNode(c.receiver))?;
        flows.push((s.zone, r.zone, f));
    }
    let mut zones: Vec<_> = ests.iter().map(|e| e.zone).collect();
    zones.sort_unstable();
    zones.dedup();
    let origins = origin_distribution(&flows, &zones);
    Ok(QuasiObservations { frequencies, contract_sizes, origins })
}
