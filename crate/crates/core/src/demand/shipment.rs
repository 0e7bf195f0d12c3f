use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Contract, DemandContext};
use crate::error::{Error, Result};

/// Log-linear shipment size coefficients for one receiver group.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ShipmentSizeCoefs {
    pub constant: f64,
    pub size: f64,
    pub dist: f64,
    pub dense: f64,
}

impl ShipmentSizeCoefs {
    pub fn as_array(&self) -> [f64; 4] {
        [self.constant, self.size, self.dist, self.dense]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self { constant: v[0], size: v[1], dist: v[2], dense: v[3] }
    }

    /// Shipment size in kg, capped at the contract size.
    pub fn size_kg(&self, contract_kg: f64, dist_km: f64, density: f64) -> f64 {
        let ln_s = self.constant + self.size * contract_kg.ln() + self.dist * dist_km.ln() + self.dense * density.ln();
        ln_s.exp().min(contract_kg)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ShipmentSizeParams {
    pub groups: BTreeMap<String, ShipmentSizeCoefs>,
}

/// Size and annual frequency of a contract's shipments.
#[derive(Debug, Clone, PartialEq)]
pub struct Shipment {
    pub contract_id: u64,
    pub size_kg: f64,
    /// Shipments per year.
    pub frequency: f64,
    /// Regressors used for the size, kept for re-estimation.
    pub dist_km: f64,
    pub density: f64,
}

pub fn shipment_size_frequency(
    ctx: &DemandContext,
    contracts: &[Contract],
    params: &ShipmentSizeParams,
) -> Result<Vec<Shipment>> {
    contracts
        .iter()
        .map(|c| {
            let r = ctx.position(c.receiver).ok_or(Error::UnknownNode(c.receiver))?;
            let s = ctx.position(c.supplier).ok_or(Error::UnknownNode(c.supplier))?;
            let group = &ctx.establishments()[r].group;
            let coefs = params.groups.get(group).ok_or_else(|| Error::MissingGroupParams(group.clone()))?;
            let dist_km = ctx.distance_km(s, r);
            let density = ctx.density_at(r);
            let size_kg = coefs.size_kg(c.size_kg, dist_km, density);
            Ok(Shipment { contract_id: c.id, size_kg, frequency: c.size_kg / size_kg, dist_km, density })
        })
        .collect()
}
