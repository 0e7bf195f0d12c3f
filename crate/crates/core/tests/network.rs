use std::collections::BTreeMap;

use proptest::prelude::*;
use sltc_core::network::{
    crossings, shortest_path, travel_time_skim, Link, Node, RoadNetwork, Router, Screenline, ScreenlineSet,
};

/// Ring `1 → 2 → … → n → 1` in both directions plus random directed chords,
/// all with random costs. Every node is its own zone.
fn graph() -> impl Strategy<Value = RoadNetwork> {
    (3u32..=8)
        .prop_flat_map(|n| {
            let ring = prop::collection::vec(1.0..100.0f64, 2 * n as usize);
            let chords = prop::collection::vec((1..=n, 1..=n, 1.0..100.0f64), 0..10);
            (Just(n), ring, chords)
        })
        .prop_map(|(n, ring, chords)| {
            let nodes = (1..=n).map(|i| Node { id: i, x: i as f64, y: (i * i) as f64, zone: i }).collect();
            let mut links = Vec::new();
            for i in 1..=n {
                let j = i % n + 1;
                let c = ring[2 * (i as usize - 1)];
                let d = ring[2 * (i as usize - 1) + 1];
                links.push(Link { id: links.len() as u32 + 1, from: i, to: j, length_m: c, travel_time_s: c });
                links.push(Link { id: links.len() as u32 + 1, from: j, to: i, length_m: d, travel_time_s: d });
            }
            for (a, b, c) in chords {
                if a != b {
                    links.push(Link { id: links.len() as u32 + 1, from: a, to: b, length_m: c, travel_time_s: c });
                }
            }
            RoadNetwork::new(nodes, links, &BTreeMap::new()).unwrap()
        })
}

/// Cheapest simple path cost by depth-first enumeration.
fn enumerate_best(net: &RoadNetwork, at: u32, dest: u32, seen: &mut Vec<u32>) -> f64 {
    if at == dest {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    let out: Vec<&Link> = net.links().iter().filter(|l| l.from == at && !seen.contains(&l.to)).collect();
    for l in out {
        seen.push(l.to);
        best = best.min(l.travel_time_s + enumerate_best(net, l.to, dest, seen));
        seen.pop();
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shortest_path_beats_every_simple_path(net in graph()) {
        let ids: Vec<u32> = net.nodes().iter().map(|n| n.id).collect();
        for &o in &ids {
            for &d in &ids {
                let leg = shortest_path(&net, o, d).unwrap();
                let best = enumerate_best(&net, o, d, &mut vec![o]);
                prop_assert!((leg.cost - best).abs() <= 1e-9 * (1.0 + best));
                let summed: f64 = leg.links.iter().map(|&l| net.link(l).unwrap().travel_time_s).sum();
                prop_assert!((summed - leg.cost).abs() <= 1e-9 * (1.0 + best));
            }
        }
    }

    #[test]
    fn skim_obeys_the_triangle_inequality(net in graph()) {
        let skim = travel_time_skim(&net).unwrap();
        for a in 0..skim.len() {
            prop_assert_eq!(skim.at(a, a), 0.0);
            for b in 0..skim.len() {
                for c in 0..skim.len() {
                    prop_assert!(skim.at(a, c) <= skim.at(a, b) + skim.at(b, c) + 1e-9);
                }
            }
        }
    }

    #[test]
    fn splitting_a_leg_on_its_path_keeps_crossings(net in graph(), o in 1u32..=8, d in 1u32..=8, pick in any::<prop::sample::Index>(), members in prop::collection::vec(any::<bool>(), 30)) {
        let n = net.nodes().len() as u32;
        let (o, d) = ((o - 1) % n + 1, (d - 1) % n + 1);
        let links: Vec<u32> = net.links().iter().map(|l| l.id).filter(|&l| members[l as usize % members.len()]).collect();
        prop_assume!(!links.is_empty());
        let lines = ScreenlineSet::new(
            links.iter().enumerate().map(|(i, &l)| Screenline { id: i as u32 + 1, links: vec![l], observed_count: 0.0 }).collect(),
            &net,
        ).unwrap();
        let router = Router::new(&net);
        let direct = router.route(&net, &[o, d]).unwrap();
        let path: Vec<u32> = direct.links().collect();
        prop_assume!(!path.is_empty());
        let via = net.link(path[pick.index(path.len())]).unwrap().to;
        let split = router.route(&net, &[o, via, d]).unwrap();
        prop_assert_eq!(crossings(&direct, &lines), crossings(&split, &lines));
    }
}
