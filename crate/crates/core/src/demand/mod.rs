//! Synthetic long-term commodity-flow chain and the tour-formation heuristic
//! that turns daily shipments into node-based tours.

mod generation;
mod shipment;
mod supplier;
mod tours;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{NodeId, RoadNetwork, Router, ZoneId, ZoneSkim};

pub use generation::{freight_generation, ConsumptionCoefs, GenerationParams, GroupGeneration, ProductionCoefs};
pub use shipment::{shipment_size_frequency, Shipment, ShipmentSizeCoefs, ShipmentSizeParams};
pub(crate) use supplier::{candidates, sample_index};
pub use supplier::{
    choice_probabilities, error_component, softmax, split_demand, supplier_selection, supplier_utility,
    systematic_utility, AltAttributes, Contract, ErrorDraws, SupplierChoiceParams, SupplierCoefs, CONTRACT_STRIDE,
    MAX_CANDIDATES, MIN_TRAVEL_TIME_S,
};
pub use tours::{form_tours, NodeTour, ShipmentInstance, Stop, TourPlan};

pub type EstablishmentId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionType {
    Office,
    Retail,
    LogisticsFacility,
    Factory,
}

impl FunctionType {
    pub const ALL: [FunctionType; 4] = [Self::Office, Self::Retail, Self::LogisticsFacility, Self::Factory];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Office => "office",
            Self::Retail => "retail",
            Self::LogisticsFacility => "logistics_facility",
            Self::Factory => "factory",
        }
    }
}

impl fmt::Display for FunctionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FunctionType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL.into_iter().find(|f| f.as_str() == s).ok_or_else(|| format!("unknown function type `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Establishment {
    pub id: EstablishmentId,
    pub node: NodeId,
    #[serde(skip)]
    pub zone: ZoneId,
    pub floor_area: f64,
    pub employment: f64,
    pub group: String,
    pub function: FunctionType,
    pub is_carrier: bool,
}

/// Establishment pair group: commodity, receiver function and supplier
/// function. Each supplier alternative in a choice is scored with the
/// coefficients of its own pair group.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Epg {
    pub commodity: String,
    pub receiver: FunctionType,
    pub supplier: FunctionType,
}

impl fmt::Display for Epg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}|{}", self.commodity, self.receiver, self.supplier)
    }
}

impl FromStr for Epg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split('|').collect();
        match parts.as_slice() {
            [c, r, p] if !c.is_empty() => {
                Ok(Epg { commodity: (*c).to_string(), receiver: r.parse()?, supplier: p.parse()? })
            }
            _ => Err(format!("malformed establishment pair group `{s}`")),
        }
    }
}

/// Configured establishment groups and the commodity each one trades.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Taxonomy {
    pub groups: BTreeMap<String, String>,
}

impl Taxonomy {
    pub fn commodity(&self, group: &str) -> Result<&str> {
        self.groups.get(group).map(String::as_str).ok_or_else(|| Error::MissingGroupParams(group.to_string()))
    }
}

/// Immutable inputs shared by every stage of the demand chain.
#[derive(Debug, Clone)]
pub struct DemandContext {
    pub network: RoadNetwork,
    pub router: Router,
    pub skim: ZoneSkim,
    pub taxonomy: Taxonomy,
    establishments: Vec<Establishment>,
    position: HashMap<EstablishmentId, usize>,
    node_pos: Vec<usize>,
    zone_pos: Vec<usize>,
    /// Establishments per km² by zone position.
    density: Vec<f64>,
    carrier: Vec<usize>,
}

impl DemandContext {
    pub fn new(network: RoadNetwork, mut establishments: Vec<Establishment>, taxonomy: Taxonomy) -> Result<Self> {
        establishments.sort_by_key(|e| e.id);
        let mut position = HashMap::with_capacity(establishments.len());
        for (i, e) in establishments.iter_mut().enumerate() {
            if position.insert(e.id, i).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate establishment id {}", e.id)));
            }
            e.zone = network.zone_of(e.node).ok_or(Error::UnknownNode(e.node))?;
            if !(e.floor_area > 0.0) || !(e.employment > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "establishment {} needs positive floor area and employment",
                    e.id
                )));
            }
            taxonomy.commodity(&e.group)?;
        }
        let mut used: Vec<NodeId> = establishments.iter().map(|e| e.node).collect();
        used.sort_unstable();
        used.dedup();
        network.validate_strongly_connected(&used)?;

        let router = Router::new(&network);
        let skim = crate::network::travel_time_skim_with(&network, &router)?;
        let node_pos: Vec<usize> = establishments.iter().map(|e| network.node_position(e.node).unwrap()).collect();
        let zone_pos: Vec<usize> = establishments.iter().map(|e| network.zone_position(e.zone).unwrap()).collect();
        let mut counts = vec![0usize; network.zones().len()];
        for &z in &zone_pos {
            counts[z] += 1;
        }
        let density = network.zones().iter().zip(&counts).map(|(z, &c)| c as f64 / (z.area_m2 / 1e6)).collect();

        let carriers: Vec<usize> = (0..establishments.len()).filter(|&i| establishments[i].is_carrier).collect();
        let carrier = (0..establishments.len())
            .map(|i| {
                if establishments[i].is_carrier || carriers.is_empty() {
                    return i;
                }
                *carriers
                    .iter()
                    .min_by(|&&a, &&b| {
                        router
                            .time(node_pos[a], node_pos[i])
                            .total_cmp(&router.time(node_pos[b], node_pos[i]))
                            .then(establishments[a].id.cmp(&establishments[b].id))
                    })
                    .unwrap()
            })
            .collect();

        Ok(Self { network, router, skim, taxonomy, establishments, position, node_pos, zone_pos, density, carrier })
    }

    pub fn establishments(&self) -> &[Establishment] {
        &self.establishments
    }

    pub fn position(&self, id: EstablishmentId) -> Option<usize> {
        self.position.get(&id).copied()
    }

    pub fn establishment(&self, id: EstablishmentId) -> Option<&Establishment> {
        self.position(id).map(|i| &self.establishments[i])
    }

    pub fn commodity_of(&self, pos: usize) -> &str {
        self.taxonomy.groups[&self.establishments[pos].group].as_str()
    }

    /// Zone-skim travel time from supplier to receiver, floored for
    /// intra-zonal pairs.
    pub fn supplier_time(&self, supplier: usize, receiver: usize) -> f64 {
        self.skim.at(self.zone_pos[supplier], self.zone_pos[receiver]).max(MIN_TRAVEL_TIME_S)
    }

    /// Network distance in km along the minimum-time path, floored at 0.1 km.
    pub fn distance_km(&self, from: usize, to: usize) -> f64 {
        (self.router.distance(self.node_pos[from], self.node_pos[to]) / 1000.0).max(0.1)
    }

    pub fn node_time(&self, from: NodeId, to: NodeId) -> f64 {
        let a = self.network.node_position(from).expect("known node");
        let b = self.network.node_position(to).expect("known node");
        self.router.time(a, b)
    }

    pub fn density_at(&self, pos: usize) -> f64 {
        self.density[self.zone_pos[pos]]
    }

    pub fn zone_position_of(&self, pos: usize) -> usize {
        self.zone_pos[pos]
    }

    /// Position of the carrier that moves this supplier's goods.
    pub fn carrier_of(&self, supplier: usize) -> usize {
        self.carrier[supplier]
    }

    pub fn epg(&self, receiver: usize, supplier: usize) -> Epg {
        Epg {
            commodity: self.commodity_of(receiver).to_string(),
            receiver: self.establishments[receiver].function,
            supplier: self.establishments[supplier].function,
        }
    }
}

/// Production and consumption per establishment position, in kg/year.
#[derive(Debug, Clone, PartialEq)]
pub struct EstablishmentFlows {
    pub production: Vec<f64>,
    pub consumption: Vec<f64>,
}
