//! Road graph, static shortest-path routing, travel-time skims and
//! screenline crossing detection.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use rayon::prelude::*;

use crate::error::{Error, Result};

pub type NodeId = u32;
pub type LinkId = u32;
pub type ZoneId = u32;
pub type ScreenlineId = u32;

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
    pub zone: ZoneId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub id: LinkId,
    pub from: NodeId,
    pub to: NodeId,
    pub length_m: f64,
    pub travel_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Zone {
    pub id: ZoneId,
    pub area_m2: f64,
    /// Lowest node id in the zone; zone-to-zone times are measured between
    /// representatives.
    pub representative: NodeId,
}

/// Directed road graph with zones.
#[derive(Debug, Clone)]
pub struct RoadNetwork {
    nodes: Vec<Node>,
    links: Vec<Link>,
    zones: Vec<Zone>,
    node_index: HashMap<NodeId, usize>,
    link_index: HashMap<LinkId, usize>,
    zone_index: HashMap<ZoneId, usize>,
    /// Outgoing link indices per node index, sorted by link id.
    outgoing: Vec<Vec<usize>>,
}

impl RoadNetwork {
    /// Builds and validates a network. Zones without an explicit area get the
    /// bounding box of their nodes padded by half the mean link length.
    pub fn new(mut nodes: Vec<Node>, mut links: Vec<Link>, zone_areas: &BTreeMap<ZoneId, f64>) -> Result<Self> {
        nodes.sort_by_key(|n| n.id);
        links.sort_by_key(|l| l.id);
        if nodes.is_empty() {
            return Err(Error::InvalidNetwork("no nodes".into()));
        }
        let mut node_index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if node_index.insert(n.id, i).is_some() {
                return Err(Error::InvalidNetwork(format!("duplicate node id {}", n.id)));
            }
        }
        let mut link_index = HashMap::with_capacity(links.len());
        let mut outgoing = vec![Vec::new(); nodes.len()];
        for (i, l) in links.iter().enumerate() {
            if link_index.insert(l.id, i).is_some() {
                return Err(Error::InvalidNetwork(format!("duplicate link id {}", l.id)));
            }
            let from = *node_index.get(&l.from).ok_or(Error::UnknownNode(l.from))?;
            if !node_index.contains_key(&l.to) {
                return Err(Error::UnknownNode(l.to));
            }
            if !(l.travel_time_s > 0.0) || !(l.length_m > 0.0) {
                return Err(Error::InvalidNetwork(format!("link {} must have positive length and travel time", l.id)));
            }
            outgoing[from].push(i);
        }

        let mean_len =
            if links.is_empty() { 0.0 } else { links.iter().map(|l| l.length_m).sum::<f64>() / links.len() as f64 };
        let mut by_zone: BTreeMap<ZoneId, Vec<&Node>> = BTreeMap::new();
        for n in &nodes {
            by_zone.entry(n.zone).or_default().push(n);
        }
        let mut zones = Vec::with_capacity(by_zone.len());
        for (&id, members) in &by_zone {
            let area_m2 = match zone_areas.get(&id) {
                Some(&a) if a > 0.0 => a,
                Some(&a) => {
                    return Err(Error::InvalidNetwork(format!("zone {id} has area {a}")));
                }
                None => {
                    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
                    for n in members {
                        x0 = x0.min(n.x);
                        x1 = x1.max(n.x);
                        y0 = y0.min(n.y);
                        y1 = y1.max(n.y);
                    }
                    ((x1 - x0 + mean_len) * (y1 - y0 + mean_len)).max(1.0)
                }
            };
            zones.push(Zone { id, area_m2, representative: members[0].id });
        }
        let zone_index = zones.iter().enumerate().map(|(i, z)| (z.id, i)).collect();
        Ok(Self { nodes, links, zones, node_index, link_index, zone_index, outgoing })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn zones(&self) -> &[Zone] {
        &self.zones
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.node_index.get(&id).map(|&i| &self.nodes[i])
    }

    pub fn link(&self, id: LinkId) -> Option<&Link> {
        self.link_index.get(&id).map(|&i| &self.links[i])
    }

    pub fn zone(&self, id: ZoneId) -> Option<&Zone> {
        self.zone_index.get(&id).map(|&i| &self.zones[i])
    }

    pub fn zone_position(&self, id: ZoneId) -> Option<usize> {
        self.zone_index.get(&id).copied()
    }

    pub fn node_position(&self, id: NodeId) -> Option<usize> {
        self.node_index.get(&id).copied()
    }

    pub fn zone_of(&self, node: NodeId) -> Option<ZoneId> {
        self.node(node).map(|n| n.zone)
    }

    /// Checks that every node in `subset` can reach and be reached from every
    /// other node in `subset`.
    pub fn validate_strongly_connected(&self, subset: &[NodeId]) -> Result<()> {
        let Some(&first) = subset.first() else {
            return Ok(());
        };
        let root = *self.node_index.get(&first).ok_or(Error::UnknownNode(first))?;
        let forward = self.reachable(root, false);
        let backward = self.reachable(root, true);
        for &n in subset {
            let i = *self.node_index.get(&n).ok_or(Error::UnknownNode(n))?;
            if !forward[i] {
                return Err(Error::UnreachableDestination { origin: first, dest: n });
            }
            if !backward[i] {
                return Err(Error::UnreachableDestination { origin: n, dest: first });
            }
        }
        Ok(())
    }

    fn reachable(&self, root: usize, reverse: bool) -> Vec<bool> {
        let mut incoming = vec![Vec::new(); self.nodes.len()];
        if reverse {
            for l in &self.links {
                incoming[self.node_index[&l.to]].push(self.node_index[&l.from]);
            }
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![root];
        seen[root] = true;
        while let Some(u) = stack.pop() {
            let next: Vec<usize> = if reverse {
                incoming[u].clone()
            } else {
                self.outgoing[u].iter().map(|&li| self.node_index[&self.links[li].to]).collect()
            };
            for v in next {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    }

    /// Single-source Dijkstra over travel time. Among equal-cost predecessors
    /// the one entering through the smallest link id wins.
    fn shortest_tree(&self, origin: usize) -> Tree {
        let n = self.nodes.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut pred: Vec<Option<usize>> = vec![None; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        dist[origin] = 0.0;
        heap.push(HeapEntry { cost: 0.0, node: origin });
        while let Some(HeapEntry { cost, node }) = heap.pop() {
            if done[node] {
                continue;
            }
            done[node] = true;
            for &li in &self.outgoing[node] {
                let link = &self.links[li];
                let v = self.node_index[&link.to];
                if done[v] {
                    continue;
                }
                let c = cost + link.travel_time_s;
                let better = match c.total_cmp(&dist[v]) {
                    Ordering::Less => true,
                    Ordering::Equal => pred[v].is_some_and(|p| link.id < self.links[p].id),
                    Ordering::Greater => false,
                };
                if better {
                    dist[v] = c;
                    pred[v] = Some(li);
                    heap.push(HeapEntry { cost: c, node: v });
                }
            }
        }
        Tree { dist, pred }
    }

    fn unwind(&self, tree: &Tree, origin: usize, dest: usize) -> Result<Vec<LinkId>> {
        if !tree.dist[dest].is_finite() {
            return Err(Error::UnreachableDestination { origin: self.nodes[origin].id, dest: self.nodes[dest].id });
        }
        let mut path = Vec::new();
        let mut at = dest;
        while at != origin {
            let li = tree.pred[at].expect("finite distance implies a predecessor");
            path.push(self.links[li].id);
            at = self.node_index[&self.links[li].from];
        }
        path.reverse();
        Ok(path)
    }
}

struct Tree {
    dist: Vec<f64>,
    pred: Vec<Option<usize>>,
}

#[derive(PartialEq)]
struct HeapEntry {
    cost: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.cost.total_cmp(&self.cost).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A minimum-travel-time path between two nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PathLeg {
    pub links: Vec<LinkId>,
    pub cost: f64,
}

pub fn shortest_path(net: &RoadNetwork, origin: NodeId, dest: NodeId) -> Result<PathLeg> {
    let o = net.node_position(origin).ok_or(Error::UnknownNode(origin))?;
    let d = net.node_position(dest).ok_or(Error::UnknownNode(dest))?;
    let tree = net.shortest_tree(o);
    let links = net.unwind(&tree, o, d)?;
    Ok(PathLeg { links, cost: tree.dist[d] })
}

/// All-pairs shortest-path trees, precomputed once per network.
#[derive(Debug, Clone)]
pub struct Router {
    n: usize,
    time: Vec<f64>,
    distance: Vec<f64>,
    pred: Vec<Option<u32>>,
}

impl Router {
    pub fn new(net: &RoadNetwork) -> Self {
        let n = net.nodes.len();
        type Row = (Vec<f64>, Vec<f64>, Vec<Option<u32>>);
        let rows: Vec<Row> = (0..n)
            .into_par_iter()
            .map(|o| {
                let tree = net.shortest_tree(o);
                // Path lengths accumulate along the tree in order of travel time.
                let mut order: Vec<usize> = (0..n).filter(|&v| tree.dist[v].is_finite()).collect();
                order.sort_by(|&a, &b| tree.dist[a].total_cmp(&tree.dist[b]).then(a.cmp(&b)));
                let mut length = vec![f64::INFINITY; n];
                length[o] = 0.0;
                for v in order {
                    if let Some(li) = tree.pred[v] {
                        let link = &net.links[li];
                        length[v] = length[net.node_index[&link.from]] + link.length_m;
                    }
                }
                let pred = tree.pred.iter().map(|p| p.map(|li| li as u32)).collect();
                (tree.dist, length, pred)
            })
            .collect();
        let mut time = Vec::with_capacity(n * n);
        let mut distance = Vec::with_capacity(n * n);
        let mut pred = Vec::with_capacity(n * n);
        for (t, d, p) in rows {
            time.extend(t);
            distance.extend(d);
            pred.extend(p);
        }
        Self { n, time, distance, pred }
    }

    /// Travel time in seconds between two node positions.
    pub fn time(&self, o: usize, d: usize) -> f64 {
        self.time[o * self.n + d]
    }

    /// Length in meters of the minimum-time path between two node positions.
    pub fn distance(&self, o: usize, d: usize) -> f64 {
        self.distance[o * self.n + d]
    }

    pub fn path(&self, net: &RoadNetwork, origin: NodeId, dest: NodeId) -> Result<Vec<LinkId>> {
        let o = net.node_position(origin).ok_or(Error::UnknownNode(origin))?;
        let d = net.node_position(dest).ok_or(Error::UnknownNode(dest))?;
        if !self.time(o, d).is_finite() {
            return Err(Error::UnreachableDestination { origin, dest });
        }
        let mut path = Vec::new();
        let mut at = d;
        while at != o {
            let li = self.pred[o * self.n + at].expect("reachable node has predecessor") as usize;
            let link = &net.links[li];
            path.push(link.id);
            at = net.node_index[&link.from];
        }
        path.reverse();
        Ok(path)
    }

    /// Routes a closed stop sequence, one leg per consecutive stop pair.
    pub fn route(&self, net: &RoadNetwork, stops: &[NodeId]) -> Result<Route> {
        let legs = stops.windows(2).map(|w| self.path(net, w[0], w[1])).collect::<Result<Vec<_>>>()?;
        Ok(Route { legs })
    }
}

/// Zone-to-zone travel times between zone representatives.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoneSkim {
    pub zones: Vec<ZoneId>,
    times: Vec<f64>,
}

impl ZoneSkim {
    pub fn len(&self) -> usize {
        self.zones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zones.is_empty()
    }

    /// Time by zone position.
    pub fn at(&self, a: usize, b: usize) -> f64 {
        self.times[a * self.zones.len() + b]
    }
}

pub fn travel_time_skim(net: &RoadNetwork) -> Result<ZoneSkim> {
    travel_time_skim_with(net, &Router::new(net))
}

pub fn travel_time_skim_with(net: &RoadNetwork, router: &Router) -> Result<ZoneSkim> {
    let zones: Vec<ZoneId> = net.zones.iter().map(|z| z.id).collect();
    let reps: Vec<usize> = net.zones.iter().map(|z| net.node_index[&z.representative]).collect();
    let mut times = Vec::with_capacity(reps.len() * reps.len());
    for &a in &reps {
        for &b in &reps {
            let t = router.time(a, b);
            if !t.is_finite() {
                return Err(Error::UnreachableDestination { origin: net.nodes[a].id, dest: net.nodes[b].id });
            }
            times.push(t);
        }
    }
    Ok(ZoneSkim { zones, times })
}

/// A routed tour: one link sequence per consecutive stop pair.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Route {
    pub legs: Vec<Vec<LinkId>>,
}

impl Route {
    pub fn links(&self) -> impl Iterator<Item = LinkId> + '_ {
        self.legs.iter().flatten().copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Screenline {
    pub id: ScreenlineId,
    pub links: Vec<LinkId>,
    pub observed_count: f64,
}

/// Validated screenlines with a link lookup. Lines are kept sorted by id; the
/// position of a line in [`ScreenlineSet::lines`] is its column in the mapping
/// matrix.
#[derive(Debug, Clone)]
pub struct ScreenlineSet {
    lines: Vec<Screenline>,
    by_link: HashMap<LinkId, ScreenlineId>,
    position: HashMap<ScreenlineId, usize>,
}

impl ScreenlineSet {
    pub fn new(mut lines: Vec<Screenline>, net: &RoadNetwork) -> Result<Self> {
        lines.sort_by_key(|s| s.id);
        let mut by_link = HashMap::new();
        let mut position = HashMap::new();
        for (i, s) in lines.iter_mut().enumerate() {
            if position.insert(s.id, i).is_some() {
                return Err(Error::InvalidNetwork(format!("duplicate screenline id {}", s.id)));
            }
            if s.links.is_empty() {
                return Err(Error::InvalidNetwork(format!("screenline {} has no links", s.id)));
            }
            if !(s.observed_count >= 0.0) {
                return Err(Error::InvalidNetwork(format!("screenline {} has negative observed count", s.id)));
            }
            s.links.sort_unstable();
            s.links.dedup();
            for &l in &s.links {
                if net.link(l).is_none() {
                    return Err(Error::InvalidNetwork(format!("screenline {} references unknown link {l}", s.id)));
                }
                if let Some(other) = by_link.insert(l, s.id) {
                    return Err(Error::InvalidNetwork(format!("link {l} belongs to screenlines {other} and {}", s.id)));
                }
            }
        }
        Ok(Self { lines, by_link, position })
    }

    pub fn lines(&self) -> &[Screenline] {
        &self.lines
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn line_of(&self, link: LinkId) -> Option<ScreenlineId> {
        self.by_link.get(&link).copied()
    }

    pub fn position(&self, id: ScreenlineId) -> Option<usize> {
        self.position.get(&id).copied()
    }

    pub fn observed(&self) -> Vec<f64> {
        self.lines.iter().map(|s| s.observed_count).collect()
    }

    pub fn with_observed(&self, counts: &[f64]) -> Self {
        let mut out = self.clone();
        for (s, &c) in out.lines.iter_mut().zip(counts) {
            s.observed_count = c;
        }
        out
    }
}

/// Screenline ids crossed by a route, in travel order, with multiplicity.
pub fn crossings(route: &Route, screenlines: &ScreenlineSet) -> Vec<ScreenlineId> {
    route.links().filter_map(|l| screenlines.line_of(l)).collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn link(id: LinkId, from: NodeId, to: NodeId, t: f64) -> Link {
        Link { id, from, to, length_m: t * 10.0, travel_time_s: t }
    }

    pub(crate) fn node(id: NodeId, zone: ZoneId) -> Node {
        Node { id, x: id as f64 * 100.0, y: 0.0, zone }
    }

    fn diamond() -> RoadNetwork {
        // 1 -> 2 -> 4 (top, 2+2); 1 -> 3 -> 4 (bottom, 3+2)
        let nodes = (1..=4).map(|i| node(i, i)).collect();
        let links = vec![link(1, 1, 2, 2.0), link(2, 2, 4, 2.0), link(3, 1, 3, 3.0), link(4, 3, 4, 2.0)];
        RoadNetwork::new(nodes, links, &BTreeMap::new()).unwrap()
    }

    #[test]
    fn single_link_path() {
        let net = RoadNetwork::new(vec![node(1, 1), node(2, 1)], vec![link(7, 1, 2, 5.0)], &BTreeMap::new()).unwrap();
        let p = shortest_path(&net, 1, 2).unwrap();
        assert_eq!(p.links, vec![7]);
        assert_eq!(p.cost, 5.0);
    }

    #[test]
    fn origin_equals_destination_is_empty() {
        let p = shortest_path(&diamond(), 3, 3).unwrap();
        assert!(p.links.is_empty());
        assert_eq!(p.cost, 0.0);
    }

    #[test]
    fn diamond_takes_top_path() {
        let p = shortest_path(&diamond(), 1, 4).unwrap();
        assert_eq!(p.links, vec![1, 2]);
        assert_eq!(p.cost, 4.0);
    }

    #[test]
    fn unreachable_destination() {
        let err = shortest_path(&diamond(), 4, 1).unwrap_err();
        assert!(matches!(err, Error::UnreachableDestination { origin: 4, dest: 1 }));
    }

    #[test]
    fn equal_cost_tie_breaks_on_smallest_link() {
        // two parallel 1 -> 2 links of equal time, and two equal-cost two-hop routes to 4
        let nodes = (1..=4).map(|i| node(i, 1)).collect();
        let links =
            vec![link(9, 1, 2, 1.0), link(3, 1, 2, 1.0), link(10, 2, 4, 2.0), link(5, 1, 3, 2.0), link(11, 3, 4, 1.0)];
        let net = RoadNetwork::new(nodes, links, &BTreeMap::new()).unwrap();
        assert_eq!(shortest_path(&net, 1, 2).unwrap().links, vec![3]);
        assert_eq!(shortest_path(&net, 1, 4).unwrap().links, vec![3, 10]);
        let router = Router::new(&net);
        assert_eq!(router.path(&net, 1, 4).unwrap(), vec![3, 10]);
    }

    #[test]
    fn rejects_bad_links() {
        let err = RoadNetwork::new(vec![node(1, 1)], vec![link(1, 1, 2, 1.0)], &BTreeMap::new());
        assert!(matches!(err, Err(Error::UnknownNode(2))));
        let err = RoadNetwork::new(vec![node(1, 1), node(2, 1)], vec![link(1, 1, 2, 0.0)], &BTreeMap::new());
        assert!(matches!(err, Err(Error::InvalidNetwork(_))));
    }

    #[test]
    fn connectivity_validation() {
        let net = diamond();
        assert!(net.validate_strongly_connected(&[1]).is_ok());
        assert!(net.validate_strongly_connected(&[1, 4]).is_err());
    }

    #[test]
    fn skim_diagonal_and_symmetry() {
        let nodes = vec![node(1, 1), node(2, 2)];
        let links = vec![link(1, 1, 2, 4.0), link(2, 2, 1, 4.0)];
        let net = RoadNetwork::new(nodes, links, &BTreeMap::new()).unwrap();
        let skim = travel_time_skim(&net).unwrap();
        assert_eq!(skim.at(0, 0), 0.0);
        assert_eq!(skim.at(1, 1), 0.0);
        assert_eq!(skim.at(0, 1), skim.at(1, 0));
    }

    #[test]
    fn skim_line_graph_is_cumulative() {
        // zones 1,2,3 along a line with times 5 and 7 each way
        let nodes = vec![node(1, 1), node(2, 2), node(3, 3)];
        let links = vec![link(1, 1, 2, 5.0), link(2, 2, 1, 5.0), link(3, 2, 3, 7.0), link(4, 3, 2, 7.0)];
        let net = RoadNetwork::new(nodes, links, &BTreeMap::new()).unwrap();
        let skim = travel_time_skim(&net).unwrap();
        assert_eq!(skim.at(0, 1), 5.0);
        assert_eq!(skim.at(0, 2), 12.0);
        assert_eq!(skim.at(2, 0), 12.0);
        assert_eq!(skim.at(1, 2), 7.0);
    }

    #[test]
    fn zone_representative_is_lowest_node() {
        let nodes = vec![node(5, 1), node(3, 1), node(4, 2)];
        let links = vec![link(1, 5, 3, 1.0), link(2, 3, 4, 1.0), link(3, 4, 5, 1.0)];
        let net = RoadNetwork::new(nodes, links, &BTreeMap::new()).unwrap();
        assert_eq!(net.zone(1).unwrap().representative, 3);
    }

    fn screenlines(net: &RoadNetwork, sets: &[(ScreenlineId, &[LinkId])]) -> ScreenlineSet {
        let lines =
            sets.iter().map(|&(id, links)| Screenline { id, links: links.to_vec(), observed_count: 0.0 }).collect();
        ScreenlineSet::new(lines, net).unwrap()
    }

    #[test]
    fn crossings_follow_travel_order_with_multiplicity() {
        let net = diamond();
        let sl = screenlines(&net, &[(10, &[1]), (20, &[2]), (30, &[3])]);
        let route = Route { legs: vec![vec![1, 2]] };
        assert_eq!(crossings(&route, &sl), vec![10, 20]);
        let twice = Route { legs: vec![vec![1], vec![1, 2]] };
        assert_eq!(crossings(&twice, &sl), vec![10, 10, 20]);
        let none = Route { legs: vec![vec![4]] };
        assert!(crossings(&none, &sl).is_empty());
    }

    #[test]
    fn screenlines_must_be_disjoint() {
        let net = diamond();
        let lines = vec![
            Screenline { id: 1, links: vec![1, 2], observed_count: 1.0 },
            Screenline { id: 2, links: vec![2], observed_count: 1.0 },
        ];
        assert!(ScreenlineSet::new(lines, &net).is_err());
    }
}
