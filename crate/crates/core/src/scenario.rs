//! One pass of the demand chain from parameters to screenline counts.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::demand::{
    form_tours, freight_generation, shipment_size_frequency, supplier_selection, Contract, DemandContext,
    EstablishmentFlows, GenerationParams, Shipment, ShipmentSizeParams, SupplierChoiceParams, TourPlan,
};
use crate::error::{Error, Result};
use crate::network::{Route, ScreenlineSet};
use crate::slb::{assemble_matrix, extract_classes, physical_crossings, MappingMatrix, SlbExtraction};

/// The three parameter blocks subject to calibration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DemandParams {
    pub generation: GenerationParams,
    pub supplier: SupplierChoiceParams,
    pub shipment: ShipmentSizeParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSettings {
    pub mean_contract_size_kg: f64,
    pub vehicle_capacity_kg: f64,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        Self { mean_contract_size_kg: 50_000.0, vehicle_capacity_kg: 1_000.0 }
    }
}

impl SimulationSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.mean_contract_size_kg > 0.0) || !(self.vehicle_capacity_kg > 0.0) {
            return Err(Error::InvalidConfig("contract size and vehicle capacity must be positive".into()));
        }
        Ok(())
    }
}

/// Validated inputs of a calibration run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub ctx: DemandContext,
    /// Screenlines carrying the observed counts.
    pub screenlines: ScreenlineSet,
    pub settings: SimulationSettings,
}

impl Scenario {
    pub fn new(ctx: DemandContext, screenlines: ScreenlineSet, settings: SimulationSettings) -> Result<Self> {
        settings.validate()?;
        if screenlines.len() < 2 {
            return Err(Error::InvalidConfig("at least two screenlines are required".into()));
        }
        Ok(Self { ctx, screenlines, settings })
    }

    pub fn observed(&self) -> Vec<f64> {
        self.screenlines.observed()
    }
}

/// Everything one simulation produces, down to the simulated counts.
#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub flows: EstablishmentFlows,
    pub contracts: Vec<Contract>,
    /// Aligned with `contracts`.
    pub shipments: Vec<Shipment>,
    pub plan: TourPlan,
    pub routes: BTreeMap<u64, Route>,
    pub extraction: SlbExtraction,
    pub matrix: MappingMatrix,
    /// Binary counts `Aᵀ x^o` per screenline position.
    pub counts: Vec<f64>,
    /// Every pass counted, per screenline position.
    pub physical: Vec<f64>,
}

impl SimulationOutput {
    pub fn class_counts(&self) -> Vec<f64> {
        self.extraction.counts()
    }
}

pub fn route_tours(ctx: &DemandContext, plan: &TourPlan) -> Result<BTreeMap<u64, Route>> {
    let routes = plan
        .tours
        .par_iter()
        .map(|t| Ok((t.id, ctx.router.route(&ctx.network, &t.node_sequence())?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(routes.into_iter().collect())
}

/// Runs generation, supplier selection, shipment sizing, tour formation,
/// routing and class extraction with one seed.
pub fn simulate(scenario: &Scenario, params: &DemandParams, seed: u64) -> Result<SimulationOutput> {
    let ctx = &scenario.ctx;
    let flows = freight_generation(ctx.establishments(), &params.generation)?;
    let contracts = supplier_selection(ctx, &flows, &params.supplier, scenario.settings.mean_contract_size_kg, seed)?;
    let shipments = shipment_size_frequency(ctx, &contracts, &params.shipment)?;
    let plan = form_tours(ctx, &contracts, &shipments, scenario.settings.vehicle_capacity_kg, seed)?;
    let routes = route_tours(ctx, &plan)?;
    let extraction = extract_classes(&plan.tours, &routes, &scenario.screenlines)?;
    let matrix = assemble_matrix(&extraction.classes, &scenario.screenlines)?;
    let counts = matrix.transpose_mul(&extraction.counts())?;
    let physical = physical_crossings(&extraction.classes, &scenario.screenlines);
    log::info!(
        "simulated {} contracts, {} shipments today, {} tours, {} classes",
        contracts.len(),
        plan.instances.len(),
        plan.tours.len(),
        extraction.classes.len()
    );
    Ok(SimulationOutput { flows, contracts, shipments, plan, routes, extraction, matrix, counts, physical })
}
