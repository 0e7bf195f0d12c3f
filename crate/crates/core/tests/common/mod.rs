#![allow(dead_code)]

use std::collections::BTreeMap;

use sltc_core::demand::{DemandContext, Establishment, FunctionType, NodeTour, Stop, Taxonomy};
use sltc_core::network::{Link, Node, RoadNetwork, Route, Screenline, ScreenlineSet, ZoneId};
use sltc_core::slb::MappingMatrix;

pub const COMMODITY: &str = "general";

/// Nodes `1..=n` one kilometre apart on a line. Link `2i-1` runs `i → i+1`,
/// link `2i` runs back, each taking `secs` seconds.
pub fn line_network(n: u32, secs: f64, zone: impl Fn(u32) -> ZoneId) -> RoadNetwork {
    let nodes = (1..=n).map(|i| Node { id: i, x: 1000.0 * i as f64, y: 0.0, zone: zone(i) }).collect();
    let mut links = Vec::new();
    for i in 1..n {
        links.push(Link { id: 2 * i - 1, from: i, to: i + 1, length_m: 1000.0, travel_time_s: secs });
        links.push(Link { id: 2 * i, from: i + 1, to: i, length_m: 1000.0, travel_time_s: secs });
    }
    RoadNetwork::new(nodes, links, &BTreeMap::new()).unwrap()
}

pub fn est(id: u32, node: u32, function: FunctionType, is_carrier: bool) -> Establishment {
    Establishment {
        id,
        node,
        zone: 0,
        floor_area: 100.0,
        employment: 10.0,
        group: function.as_str().to_string(),
        function,
        is_carrier,
    }
}

/// One group per function type, all trading the same commodity.
pub fn taxonomy() -> Taxonomy {
    Taxonomy { groups: FunctionType::ALL.iter().map(|f| (f.as_str().to_string(), COMMODITY.to_string())).collect() }
}

pub fn context(net: RoadNetwork, ests: Vec<Establishment>) -> DemandContext {
    DemandContext::new(net, ests, taxonomy()).unwrap()
}

/// Hub node 1 with spokes to nodes 2..=6. Link `10+k` leaves the hub for
/// node k, link `20+k` returns. Screenlines A..D (ids 1..4) are the links
/// 1→2, 3→1, 1→4 and 5→1.
pub fn star_network() -> RoadNetwork {
    let mut nodes = vec![Node { id: 1, x: 0.0, y: 0.0, zone: 1 }];
    let mut links = Vec::new();
    for k in 2..=6u32 {
        let angle = k as f64;
        nodes.push(Node { id: k, x: 1000.0 * angle.cos(), y: 1000.0 * angle.sin(), zone: k });
        links.push(Link { id: 10 + k, from: 1, to: k, length_m: 1000.0, travel_time_s: 60.0 });
        links.push(Link { id: 20 + k, from: k, to: 1, length_m: 1000.0, travel_time_s: 60.0 });
    }
    RoadNetwork::new(nodes, links, &BTreeMap::new()).unwrap()
}

pub fn star_screenlines(net: &RoadNetwork) -> ScreenlineSet {
    let lines = [(1, 12), (2, 23), (3, 14), (4, 25)]
        .into_iter()
        .map(|(id, link)| Screenline { id, links: vec![link], observed_count: 0.0 })
        .collect();
    ScreenlineSet::new(lines, net).unwrap()
}

pub fn tour(id: u64, depot: u32, stops: &[u32]) -> NodeTour {
    NodeTour {
        id,
        carrier: 0,
        depot,
        stops: stops.iter().map(|&node| Stop { node, shipments: Vec::new() }).collect(),
        capacity_kg: 1000.0,
    }
}

/// The five tours of the illustrative example on the star network: two
/// crossing A then B, two crossing B then D, one crossing C then D. Tours
/// sharing a signature visit different nodes.
pub fn example_tours() -> Vec<NodeTour> {
    vec![tour(1, 1, &[2, 3]), tour(2, 1, &[6, 2, 3]), tour(3, 1, &[3, 5]), tour(4, 1, &[6, 3, 5]), tour(5, 1, &[4, 5])]
}

pub fn route_all(net: &RoadNetwork, tours: &[NodeTour]) -> BTreeMap<u64, Route> {
    let router = sltc_core::network::Router::new(net);
    tours.iter().map(|t| (t.id, router.route(net, &t.node_sequence()).unwrap())).collect()
}

/// The example's 3×4 mapping matrix.
pub fn example_matrix() -> MappingMatrix {
    MappingMatrix::from_rows(vec![vec![0, 1], vec![1, 3], vec![2, 3]], 4)
}

/// Dense Gaussian elimination with partial pivoting.
pub fn dense_solve(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
        m.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            let pivot = m[col].clone();
            for (dst, src) in m[row][col..].iter_mut().zip(&pivot[col..]) {
                *dst -= f * src;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| m[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / m[row][row];
    }
    x
}

/// Ridge minimizer from the class-space normal equations
/// `(AAᵀ + λI)x = Ay`, with A given densely.
pub fn dense_ridge(a: &[Vec<f64>], y: &[f64], lambda: f64) -> Vec<f64> {
    let l = a.len();
    let m = (0..l)
        .map(|i| {
            (0..l)
                .map(|j| a[i].iter().zip(&a[j]).map(|(p, q)| p * q).sum::<f64>() + if i == j { lambda } else { 0.0 })
                .collect()
        })
        .collect();
    let rhs = a.iter().map(|row| row.iter().zip(y).map(|(p, q)| p * q).sum()).collect();
    dense_solve(m, rhs)
}

pub fn inf_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
