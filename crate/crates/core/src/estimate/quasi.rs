use std::collections::{BTreeMap, HashMap};

use crate::adjust::TargetTours;
use crate::demand::{NodeTour, Shipment, ShipmentInstance};
use crate::error::{Error, Result};
use crate::network::ZoneId;

fn instances_per_contract<'a>(
    tours: impl IntoIterator<Item = &'a NodeTour>,
    instances: &HashMap<u64, &ShipmentInstance>,
) -> HashMap<u64, usize> {
    let mut out = HashMap::new();
    for t in tours {
        for sid in t.shipment_ids() {
            if let Some(inst) = instances.get(&sid) {
                *out.entry(inst.contract_id).or_insert(0) += 1;
            }
        }
    }
    out
}

/// Adjusted annual frequency per shipment record: the initial frequency
/// scaled by the ratio of the contract's daily instances in the target tours
/// to those in the initial tours. Contracts with no initial daily instance
/// keep their frequency.
pub fn quasi_shipments(
    initial: &[NodeTour],
    target: &TargetTours,
    instances: &[ShipmentInstance],
    shipments: &[Shipment],
) -> Vec<f64> {
    let lookup: HashMap<u64, &ShipmentInstance> = instances.iter().map(|i| (i.id, i)).collect();
    let before = instances_per_contract(initial, &lookup);
    let after = instances_per_contract(&target.tours, &lookup);
    shipments
        .iter()
        .map(|s| match before.get(&s.contract_id) {
            Some(&n) if n > 0 => s.frequency * after.get(&s.contract_id).copied().unwrap_or(0) as f64 / n as f64,
            _ => s.frequency,
        })
        .collect()
}

/// Quasi-observed contract size `(f̂ / f) · x_size`.
pub fn quasi_contract_size(frequency: f64, adjusted: f64, size_kg: f64) -> Option<f64> {
    (frequency > 0.0).then(|| adjusted / frequency * size_kg)
}

pub fn quasi_contract_sizes(shipments: &[Shipment], adjusted: &[f64], sizes_kg: &[f64]) -> Result<Vec<f64>> {
    if adjusted.len() != shipments.len() || sizes_kg.len() != shipments.len() {
        return Err(Error::DimensionMismatch { expected: shipments.len(), actual: adjusted.len().min(sizes_kg.len()) });
    }
    shipments
        .iter()
        .zip(adjusted)
        .zip(sizes_kg)
        .map(|((s, &fh), &x)| quasi_contract_size(s.frequency, fh, x).ok_or(Error::ZeroInitialFrequency(s.contract_id)))
        .collect()
}

/// Share of quasi-observed shipments arriving in each destination zone by
/// origin zone.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OriginDistribution {
    /// Destination zone to (origin zone, probability), origins ascending,
    /// zero-probability origins omitted.
    pub rows: BTreeMap<ZoneId, Vec<(ZoneId, f64)>>,
    /// Destination zones that received no quasi-observed shipment.
    pub empty: Vec<ZoneId>,
}

impl OriginDistribution {
    pub fn row(&self, dest: ZoneId) -> Result<&[(ZoneId, f64)]> {
        self.rows.get(&dest).map(Vec::as_slice).ok_or(Error::EmptyOriginRow(dest))
    }
}

/// `P_kr = q_kr / Σ_z q_zr` from weighted (origin, destination) flows.
pub fn origin_distribution(flows: &[(ZoneId, ZoneId, f64)], zones: &[ZoneId]) -> OriginDistribution {
    let mut q: BTreeMap<ZoneId, BTreeMap<ZoneId, f64>> = BTreeMap::new();
    for &(o, d, w) in flows {
        if w > 0.0 {
            *q.entry(d).or_default().entry(o).or_insert(0.0) += w;
        }
    }
    let mut rows = BTreeMap::new();
    let mut empty = Vec::new();
    for &z in zones {
        match q.get(&z) {
            Some(origins) => {
                let total: f64 = origins.values().sum();
                rows.insert(z, origins.iter().map(|(&o, &w)| (o, w / total)).collect());
            }
            None => empty.push(z),
        }
    }
    OriginDistribution { rows, empty }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::Stop;

    fn inst(id: u64, contract: u64) -> ShipmentInstance {
        ShipmentInstance { id, contract_id: contract, receiver_node: 1, weight_kg: 1.0, carrier: 1 }
    }

    fn tour(id: u64, shipments: &[u64]) -> NodeTour {
        NodeTour {
            id,
            carrier: 1,
            depot: 1,
            stops: vec![Stop { node: 2, shipments: shipments.to_vec() }],
            capacity_kg: 10.0,
        }
    }

    fn ship(contract: u64, frequency: f64) -> Shipment {
        Shipment { contract_id: contract, size_kg: 1.0, frequency, dist_km: 1.0, density: 1.0 }
    }

    #[test]
    fn unadjusted_tours_keep_frequencies() {
        let tours = vec![tour(1, &[1, 2])];
        let target = TargetTours { tours: tours.clone(), ..Default::default() };
        let f = quasi_shipments(
            &tours,
            &target,
            &[inst(1, 10), inst(2, 11)],
            &[ship(10, 50.0), ship(11, 70.0), ship(12, 9.0)],
        );
        assert_eq!(f, vec![50.0, 70.0, 9.0]);
    }

    #[test]
    fn cloned_tour_doubles_frequency() {
        let tours = vec![tour(1, &[1])];
        let mut clone = tours[0].clone();
        clone.id = 2;
        let target = TargetTours { tours: vec![tours[0].clone(), clone], clones: vec![(1, 2)], removed: vec![] };
        let f = quasi_shipments(&tours, &target, &[inst(1, 10)], &[ship(10, 50.0)]);
        assert_eq!(f, vec![100.0]);
    }

    #[test]
    fn removed_tour_zeroes_frequency() {
        let tours = vec![tour(1, &[1])];
        let target = TargetTours { tours: vec![], clones: vec![], removed: vec![1] };
        let f = quasi_shipments(&tours, &target, &[inst(1, 10)], &[ship(10, 50.0)]);
        assert_eq!(f, vec![0.0]);
    }

    #[test]
    fn contract_size_ratio() {
        assert_eq!(quasi_contract_size(2.0, 4.0, 10.0), Some(20.0));
        assert_eq!(quasi_contract_size(3.0, 3.0, 10.0), Some(10.0));
        assert_eq!(quasi_contract_size(3.0, 0.0, 10.0), Some(0.0));
        assert_eq!(quasi_contract_size(0.0, 1.0, 10.0), None);
        let err = quasi_contract_sizes(&[ship(5, 0.0)], &[1.0], &[1.0]).unwrap_err();
        assert!(matches!(err, Error::ZeroInitialFrequency(5)));
    }

    #[test]
    fn origin_shares() {
        let flows = [(1, 9, 2.0), (2, 9, 3.0), (3, 9, 5.0), (4, 8, 1.0)];
        let p = origin_distribution(&flows, &[7, 8, 9]);
        assert_eq!(p.row(9).unwrap(), &[(1, 0.2), (2, 0.3), (3, 0.5)]);
        assert_eq!(p.row(8).unwrap(), &[(4, 1.0)]);
        assert_eq!(p.empty, vec![7]);
        assert!(matches!(p.row(7), Err(Error::EmptyOriginRow(7))));
    }
}
