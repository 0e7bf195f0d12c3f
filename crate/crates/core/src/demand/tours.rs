//! Daily realization of annual shipments and greedy nearest-neighbor tour
//! building per carrier.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;

use super::{Contract, DemandContext, EstablishmentId, Shipment};
use crate::error::{Error, Result};
use crate::network::NodeId;
use crate::rng::{substream, Domain};

/// One shipment moved on the simulated day.
#[derive(Debug, Clone, PartialEq)]
pub struct ShipmentInstance {
    pub id: u64,
    pub contract_id: u64,
    pub receiver_node: NodeId,
    pub weight_kg: f64,
    pub carrier: EstablishmentId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stop {
    pub node: NodeId,
    pub shipments: Vec<u64>,
}

/// A vehicle tour as a node sequence: depot, stops, depot.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeTour {
    pub id: u64,
    pub carrier: EstablishmentId,
    pub depot: NodeId,
    pub stops: Vec<Stop>,
    pub capacity_kg: f64,
}

impl NodeTour {
    /// Depot, every stop, depot.
    pub fn node_sequence(&self) -> Vec<NodeId> {
        let mut seq = Vec::with_capacity(self.stops.len() + 2);
        seq.push(self.depot);
        seq.extend(self.stops.iter().map(|s| s.node));
        seq.push(self.depot);
        seq
    }

    pub fn shipment_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.stops.iter().flat_map(|s| s.shipments.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TourPlan {
    pub instances: Vec<ShipmentInstance>,
    pub tours: Vec<NodeTour>,
}

/// Number of shipments a contract makes on the simulated day: the integer
/// part of `f / 365` plus a Bernoulli draw on the fractional part.
fn daily_count<R: Rng + ?Sized>(frequency: f64, rng: &mut R) -> u32 {
    let rate = frequency / 365.0;
    let whole = rate.floor();
    let extra = rng.random::<f64>() < rate - whole;
    whole as u32 + u32::from(extra)
}

/// Realizes the day's shipments and groups them into tours. `contracts` and
/// `shipments` are aligned by index.
pub fn form_tours(
    ctx: &DemandContext,
    contracts: &[Contract],
    shipments: &[Shipment],
    capacity_kg: f64,
    seed: u64,
) -> Result<TourPlan> {
    if contracts.len() != shipments.len() {
        return Err(Error::DimensionMismatch { expected: contracts.len(), actual: shipments.len() });
    }
    let ests = ctx.establishments();
    let mut instances = Vec::new();
    for (c, s) in contracts.iter().zip(shipments) {
        debug_assert_eq!(c.id, s.contract_id);
        let mut rng = substream(seed, Domain::DailyRealization, c.id);
        let n = daily_count(s.frequency, &mut rng);
        if n == 0 {
            continue;
        }
        if s.size_kg > capacity_kg {
            return Err(Error::ShipmentExceedsCapacity { shipment: c.id, weight: s.size_kg, capacity: capacity_kg });
        }
        let supplier = ctx.position(c.supplier).ok_or(Error::UnknownNode(c.supplier))?;
        let receiver = ctx.establishment(c.receiver).ok_or(Error::UnknownNode(c.receiver))?;
        let carrier = ests[ctx.carrier_of(supplier)].id;
        for _ in 0..n {
            instances.push(ShipmentInstance {
                id: instances.len() as u64 + 1,
                contract_id: c.id,
                receiver_node: receiver.node,
                weight_kg: s.size_kg,
                carrier,
            });
        }
    }

    let mut by_carrier: BTreeMap<EstablishmentId, Vec<usize>> = BTreeMap::new();
    for (i, inst) in instances.iter().enumerate() {
        by_carrier.entry(inst.carrier).or_default().push(i);
    }
    let groups: Vec<(EstablishmentId, Vec<usize>)> = by_carrier.into_iter().collect();
    let drafts: Vec<Vec<(NodeId, Vec<Stop>)>> = groups
        .par_iter()
        .map(|(carrier, members)| {
            let depot = ctx.establishment(*carrier).expect("carrier exists").node;
            let pending: Vec<&ShipmentInstance> = members.iter().map(|&i| &instances[i]).collect();
            nearest_neighbor_tours(ctx, depot, pending, capacity_kg).into_iter().map(|stops| (depot, stops)).collect()
        })
        .collect();

    let mut tours = Vec::new();
    for ((carrier, _), carrier_tours) in groups.iter().zip(drafts) {
        for (depot, stops) in carrier_tours {
            tours.push(NodeTour { id: tours.len() as u64 + 1, carrier: *carrier, depot, stops, capacity_kg });
        }
    }
    Ok(TourPlan { instances, tours })
}

/// Greedy tours from one depot: repeatedly drive to the nearest node with a
/// pending shipment, unload everything for that node that still fits, and
/// return to the depot once the nearest pending shipment no longer fits.
fn nearest_neighbor_tours(
    ctx: &DemandContext,
    depot: NodeId,
    mut pending: Vec<&ShipmentInstance>,
    capacity_kg: f64,
) -> Vec<Vec<Stop>> {
    let mut tours = Vec::new();
    while !pending.is_empty() {
        let mut at = depot;
        let mut load = 0.0;
        let mut stops: Vec<Stop> = Vec::new();
        while let Some(next) = pending
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                ctx.node_time(at, a.receiver_node)
                    .total_cmp(&ctx.node_time(at, b.receiver_node))
                    .then(a.receiver_node.cmp(&b.receiver_node))
                    .then(a.id.cmp(&b.id))
            })
            .map(|(i, _)| i)
        {
            if load + pending[next].weight_kg > capacity_kg {
                break;
            }
            let node = pending[next].receiver_node;
            let mut served = Vec::new();
            let mut full = false;
            let mut i = 0;
            while i < pending.len() {
                if pending[i].receiver_node == node {
                    if load + pending[i].weight_kg <= capacity_kg {
                        load += pending[i].weight_kg;
                        served.push(pending.remove(i).id);
                        continue;
                    }
                    full = true;
                }
                i += 1;
            }
            served.sort_unstable();
            stops.push(Stop { node, shipments: served });
            at = node;
            if full {
                break;
            }
        }
        tours.push(stops);
    }
    tours
}
