use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Establishment, EstablishmentFlows};
use crate::error::{Error, Result};

/// Linear production model coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ProductionCoefs {
    pub constant: f64,
    pub floor: f64,
    pub emp: f64,
    pub floor_emp: f64,
}

/// Linear consumption model coefficients; `prod` multiplies the
/// establishment's own production.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConsumptionCoefs {
    pub constant: f64,
    pub floor: f64,
    pub emp: f64,
    pub floor_emp: f64,
    pub prod: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GroupGeneration {
    pub production: ProductionCoefs,
    pub consumption: ConsumptionCoefs,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GenerationParams {
    pub groups: BTreeMap<String, GroupGeneration>,
}

impl ProductionCoefs {
    pub fn as_array(&self) -> [f64; 4] {
        [self.constant, self.floor, self.emp, self.floor_emp]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self { constant: v[0], floor: v[1], emp: v[2], floor_emp: v[3] }
    }

    pub fn evaluate(&self, floor: f64, emp: f64) -> f64 {
        self.constant + self.floor * floor + self.emp * emp + self.floor_emp * floor * emp
    }
}

impl ConsumptionCoefs {
    pub fn as_array(&self) -> [f64; 5] {
        [self.constant, self.floor, self.emp, self.floor_emp, self.prod]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self { constant: v[0], floor: v[1], emp: v[2], floor_emp: v[3], prod: v[4] }
    }

    pub fn evaluate(&self, floor: f64, emp: f64, production: f64) -> f64 {
        self.constant + self.floor * floor + self.emp * emp + self.floor_emp * floor * emp + self.prod * production
    }
}

/// Annual production and consumption per establishment. Negative raw values
/// of either linear form are clamped to zero; consumption sees the clamped
/// production.
pub fn freight_generation(ests: &[Establishment], params: &GenerationParams) -> Result<EstablishmentFlows> {
    let mut production = Vec::with_capacity(ests.len());
    let mut consumption = Vec::with_capacity(ests.len());
    for e in ests {
        let g = params.groups.get(&e.group).ok_or_else(|| Error::MissingGroupParams(e.group.clone()))?;
        let prod = g.production.evaluate(e.floor_area, e.employment).max(0.0);
        let cons = g.consumption.evaluate(e.floor_area, e.employment, prod).max(0.0);
        production.push(prod);
        consumption.push(cons);
    }
    Ok(EstablishmentFlows { production, consumption })
}
