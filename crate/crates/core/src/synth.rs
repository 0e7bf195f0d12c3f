//! Deterministic synthetic scenarios: a jittered grid network, block zones,
//! half-cut screenlines, establishments, ground-truth and perturbed
//! parameters, and counts observed from a ground-truth simulation.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::demand::{
    ConsumptionCoefs, DemandContext, Epg, Establishment, FunctionType, GenerationParams, GroupGeneration,
    ProductionCoefs, ShipmentSizeCoefs, ShipmentSizeParams, SupplierChoiceParams, SupplierCoefs, Taxonomy,
};
use crate::error::{Error, Result};
use crate::io;
use crate::network::{Link, LinkId, Node, RoadNetwork, Screenline, ScreenlineSet, ZoneId};
use crate::rng::{derive_seed, substream, Domain};
use crate::scenario::{simulate, DemandParams, Scenario, SimulationOutput, SimulationSettings};

/// Salt of the seed used for the ground-truth realization.
pub const TRUTH_SALT: u64 = 0x7207;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub cols: usize,
    pub rows: usize,
    pub spacing_m: f64,
    /// Node displacement as a fraction of the spacing.
    pub jitter: f64,
    pub min_speed_mps: f64,
    pub max_speed_mps: f64,
    /// Side of the square node block forming one zone.
    pub zone_block: usize,
    /// Share of grid edges kept; edges whose removal would isolate a node
    /// are always kept.
    pub link_density: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            cols: 10,
            rows: 8,
            spacing_m: 500.0,
            jitter: 0.2,
            min_speed_mps: 8.0,
            max_speed_mps: 15.0,
            zone_block: 2,
            link_density: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScreenlineConfig {
    /// Number of one-directional half-cut segments. Cuts alternate between
    /// vertical and horizontal lines spread evenly over the grid; each cut
    /// line yields two halves.
    pub count: usize,
}

impl Default for ScreenlineConfig {
    fn default() -> Self {
        Self { count: 12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupConfig {
    pub name: String,
    pub commodity: String,
    pub function: FunctionType,
    pub count: usize,
    pub is_carrier: bool,
    /// Medians of the log-normal size attributes.
    pub floor_area_m2: f64,
    pub employment: f64,
}

/// Supplier-choice coefficients shared by every pair group, with a constant
/// per supplier function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupplierTruth {
    pub time: f64,
    pub prod: f64,
    pub demand: f64,
    pub sigma_or: f64,
    pub sigma_lf: f64,
    pub sigma_dws: f64,
    /// Function name to constant.
    pub constants: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthConfig {
    pub generation: BTreeMap<String, GroupGeneration>,
    pub supplier: SupplierTruth,
    pub shipment_size: BTreeMap<String, ShipmentSizeCoefs>,
}

/// Relative perturbations turning ground truth into initial parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationConfig {
    /// Generation coefficients scaled by `1 − p` (own-production term kept).
    pub generation: f64,
    /// Travel-time coefficient scaled by `1 + p`.
    pub supplier_time: f64,
    /// Shipment sizes scaled by `1 + p` through the constant.
    pub shipment_size: f64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self { generation: 0.3, supplier_time: 0.3, shipment_size: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub network: GridConfig,
    pub screenlines: ScreenlineConfig,
    pub groups: Vec<GroupConfig>,
    pub truth: TruthConfig,
    pub perturbation: PerturbationConfig,
    pub simulation: SimulationSettings,
    /// Standard deviation of the multiplicative noise on observed counts.
    pub count_noise: f64,
}

fn group(name: &str, function: FunctionType, count: usize, floor: f64, emp: f64) -> GroupConfig {
    GroupConfig {
        name: name.into(),
        commodity: "general".into(),
        function,
        count,
        is_carrier: function == FunctionType::LogisticsFacility,
        floor_area_m2: floor,
        employment: emp,
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let groups = vec![
            group("office", FunctionType::Office, 150, 800.0, 30.0),
            group("retail", FunctionType::Retail, 175, 500.0, 12.0),
            group("logistics", FunctionType::LogisticsFacility, 75, 3000.0, 25.0),
            group("factory", FunctionType::Factory, 100, 2500.0, 40.0),
        ];
        let gen = |p: [f64; 4], c: [f64; 5]| GroupGeneration {
            production: ProductionCoefs::from_slice(&p),
            consumption: ConsumptionCoefs::from_slice(&c),
        };
        let generation = BTreeMap::from([
            ("office".to_string(), gen([20_000.0, 40.0, 1_500.0, 0.5], [60_000.0, 150.0, 6_000.0, 2.0, 0.05])),
            ("retail".to_string(), gen([20_000.0, 60.0, 2_000.0, 1.0], [150_000.0, 400.0, 12_000.0, 4.0, 0.05])),
            ("logistics".to_string(), gen([80_000.0, 120.0, 4_000.0, 0.5], [60_000.0, 60.0, 3_000.0, 0.5, 0.10])),
            ("factory".to_string(), gen([150_000.0, 200.0, 6_000.0, 1.0], [40_000.0, 40.0, 2_000.0, 0.5, 0.10])),
        ]);
        let constants = BTreeMap::from([
            ("factory".to_string(), 0.0),
            ("logistics_facility".to_string(), 0.5),
            ("retail".to_string(), -0.5),
            ("office".to_string(), -1.0),
        ]);
        let size = ShipmentSizeCoefs { constant: 0.8, size: 0.4, dist: 0.1, dense: -0.1 };
        Self {
            seed: 20_240_917,
            network: GridConfig::default(),
            screenlines: ScreenlineConfig::default(),
            groups,
            truth: TruthConfig {
                generation,
                supplier: SupplierTruth {
                    time: -1.0,
                    prod: 0.8,
                    demand: 0.0,
                    sigma_or: 0.5,
                    sigma_lf: 0.5,
                    sigma_dws: 0.3,
                    constants,
                },
                shipment_size: ["office", "retail", "logistics", "factory"]
                    .into_iter()
                    .map(|g| (g.to_string(), size))
                    .collect(),
            },
            perturbation: PerturbationConfig::default(),
            simulation: SimulationSettings { mean_contract_size_kg: 50_000.0, vehicle_capacity_kg: 1_000.0 },
            count_noise: 0.0,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let n = &self.network;
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if n.cols < 2 || n.rows < 2 {
            return bad("the grid needs at least 2 columns and 2 rows");
        }
        if n.zone_block == 0 || n.cols.div_ceil(n.zone_block) * n.rows.div_ceil(n.zone_block) < 2 {
            return bad("the zone block must leave at least 2 zones");
        }
        if !(n.spacing_m > 0.0) || !(n.min_speed_mps > 0.0) || n.max_speed_mps < n.min_speed_mps {
            return bad("spacing and speeds must be positive with min ≤ max");
        }
        if !(0.0..0.5).contains(&n.jitter) {
            return bad("jitter must lie in [0, 0.5)");
        }
        if !(n.link_density > 0.0 && n.link_density <= 1.0) {
            return bad("link density must lie in (0, 1]");
        }
        if self.screenlines.count < 2 {
            return bad("at least 2 screenlines are required");
        }
        let lines = self.screenlines.count.div_ceil(4);
        if lines >= n.cols || lines >= n.rows {
            return bad("too many screenlines for the grid");
        }
        if self.groups.is_empty() {
            return bad("at least one establishment group is required");
        }
        for g in &self.groups {
            if g.count == 0 || !(g.floor_area_m2 > 0.0) || !(g.employment > 0.0) {
                return bad("groups need a positive count and positive size medians");
            }
            if !self.truth.generation.contains_key(&g.name) || !self.truth.shipment_size.contains_key(&g.name) {
                return Err(Error::MissingGroupParams(g.name.clone()));
            }
        }
        for f in self.groups.iter().map(|g| g.function) {
            if !self.truth.supplier.constants.contains_key(f.as_str()) {
                return Err(Error::InvalidConfig(format!("no supplier constant for function `{f}`")));
            }
        }
        if !(self.count_noise >= 0.0) {
            return bad("count noise must be non-negative");
        }
        self.simulation.validate()
    }
}

/// A generated scenario with both parameter sets.
#[derive(Debug, Clone)]
pub struct SynthScenario {
    pub scenario: Scenario,
    pub truth: DemandParams,
    pub initial: DemandParams,
    pub seed: u64,
    /// Ground-truth simulation the observed counts come from.
    pub truth_run: SimulationOutput,
}

fn grid_network(cfg: &GridConfig, seed: u64) -> Result<RoadNetwork> {
    let mut rng = substream(seed, Domain::Synthesis, 1);
    let id = |r: usize, c: usize| (r * cfg.cols + c + 1) as u32;
    let zone_cols = cfg.cols.div_ceil(cfg.zone_block);
    let mut nodes = Vec::with_capacity(cfg.cols * cfg.rows);
    for r in 0..cfg.rows {
        for c in 0..cfg.cols {
            let jx = (rng.random::<f64>() - 0.5) * 2.0 * cfg.jitter * cfg.spacing_m;
            let jy = (rng.random::<f64>() - 0.5) * 2.0 * cfg.jitter * cfg.spacing_m;
            nodes.push(Node {
                id: id(r, c),
                x: c as f64 * cfg.spacing_m + jx,
                y: r as f64 * cfg.spacing_m + jy,
                zone: ((r / cfg.zone_block) * zone_cols + c / cfg.zone_block + 1) as ZoneId,
            });
        }
    }
    let mut edges = Vec::new();
    for r in 0..cfg.rows {
        for c in 0..cfg.cols {
            if c + 1 < cfg.cols {
                edges.push((id(r, c), id(r, c + 1)));
            }
            if r + 1 < cfg.rows {
                edges.push((id(r, c), id(r + 1, c)));
            }
        }
    }
    let mut degree = vec![0usize; nodes.len() + 1];
    for &(a, b) in &edges {
        degree[a as usize] += 1;
        degree[b as usize] += 1;
    }
    let mut links = Vec::new();
    for (a, b) in edges {
        let drop = rng.random::<f64>() >= cfg.link_density;
        if drop && degree[a as usize] > 2 && degree[b as usize] > 2 {
            degree[a as usize] -= 1;
            degree[b as usize] -= 1;
            continue;
        }
        let speed = rng.random_range(cfg.min_speed_mps..=cfg.max_speed_mps);
        let (na, nb) = (&nodes[a as usize - 1], &nodes[b as usize - 1]);
        let length = ((na.x - nb.x).powi(2) + (na.y - nb.y).powi(2)).sqrt();
        for (from, to) in [(a, b), (b, a)] {
            links.push(Link {
                id: links.len() as LinkId + 1,
                from,
                to,
                length_m: length,
                travel_time_s: length / speed,
            });
        }
    }
    let mut areas = BTreeMap::new();
    let zone_rows = cfg.rows.div_ceil(cfg.zone_block);
    for zr in 0..zone_rows {
        for zc in 0..zone_cols {
            let w = (cfg.cols - zc * cfg.zone_block).min(cfg.zone_block) as f64;
            let h = (cfg.rows - zr * cfg.zone_block).min(cfg.zone_block) as f64;
            areas.insert((zr * zone_cols + zc + 1) as ZoneId, w * h * cfg.spacing_m * cfg.spacing_m);
        }
    }
    let net = RoadNetwork::new(nodes, links, &areas)?;
    let all: Vec<u32> = net.nodes().iter().map(|n| n.id).collect();
    net.validate_strongly_connected(&all)
        .map_err(|e| Error::InvalidConfig(format!("link density left the grid disconnected: {e}")))?;
    Ok(net)
}

fn cut_positions(lines: usize, extent: usize) -> Vec<usize> {
    (0..lines).map(|i| ((extent * (i + 1)) as f64 / (lines + 1) as f64).round().max(1.0) as usize).collect()
}

fn place_screenlines(cfg: &GridConfig, count: usize, net: &RoadNetwork) -> Result<ScreenlineSet> {
    let lines = count.div_ceil(4);
    let id = |r: usize, c: usize| (r * cfg.cols + c + 1) as u32;
    let link_between = |a: u32, b: u32| net.links().iter().find(|l| l.from == a && l.to == b).map(|l| l.id);
    // (node pairs in the forward direction) per half segment
    let mut vertical: Vec<Vec<(u32, u32)>> = Vec::new();
    for c in cut_positions(lines, cfg.cols) {
        let mid = cfg.rows / 2;
        for range in [0..mid, mid..cfg.rows] {
            vertical.push(range.map(|r| (id(r, c - 1), id(r, c))).collect());
        }
    }
    let mut horizontal: Vec<Vec<(u32, u32)>> = Vec::new();
    for r in cut_positions(lines, cfg.rows) {
        let mid = cfg.cols / 2;
        for range in [0..mid, mid..cfg.cols] {
            horizontal.push(range.map(|c| (id(r - 1, c), id(r, c))).collect());
        }
    }
    let mut segments = Vec::with_capacity(count);
    let (mut v, mut h) = (vertical.into_iter(), horizontal.into_iter());
    while segments.len() < count {
        let next = if segments.len() % 2 == 0 { v.next().or_else(|| h.next()) } else { h.next().or_else(|| v.next()) };
        match next {
            Some(s) => segments.push(s),
            None => return Err(Error::InvalidConfig("not enough room for the requested screenlines".into())),
        }
    }
    let mut out = Vec::with_capacity(count);
    for (i, pairs) in segments.into_iter().enumerate() {
        let forward = (i / 2) % 2 == 0;
        let links: Vec<LinkId> = pairs
            .into_iter()
            .filter_map(|(a, b)| if forward { link_between(a, b) } else { link_between(b, a) })
            .collect();
        if links.is_empty() {
            return Err(Error::InvalidConfig(format!("screenline {} lost all its links", i + 1)));
        }
        out.push(Screenline { id: i as u32 + 1, links, observed_count: 0.0 });
    }
    ScreenlineSet::new(out, net)
}

fn establishments(cfg: &ScenarioConfig, net: &RoadNetwork, seed: u64) -> Result<Vec<Establishment>> {
    let mut rng = substream(seed, Domain::Synthesis, 2);
    let nodes: Vec<u32> = net.nodes().iter().map(|n| n.id).collect();
    let mut out = Vec::new();
    for g in &cfg.groups {
        let floor = LogNormal::new(g.floor_area_m2.ln(), 0.5).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        for _ in 0..g.count {
            let floor_area: f64 = floor.sample(&mut rng);
            // employment follows floor area with its own dispersion
            let z: f64 = rng.sample(StandardNormal);
            let employment = (g.employment * (floor_area / g.floor_area_m2).powf(0.7) * (0.3 * z).exp()).max(1.0);
            out.push(Establishment {
                id: out.len() as u32 + 1,
                node: nodes[rng.random_range(0..nodes.len())],
                zone: 0,
                floor_area: floor_area.round().max(10.0),
                employment: employment.round().max(1.0),
                group: g.name.clone(),
                function: g.function,
                is_carrier: g.is_carrier,
            });
        }
    }
    Ok(out)
}

fn truth_params(cfg: &ScenarioConfig) -> Result<DemandParams> {
    let names: Vec<&str> = cfg.groups.iter().map(|g| g.name.as_str()).collect();
    let generation =
        GenerationParams { groups: names.iter().map(|&g| (g.to_string(), cfg.truth.generation[g])).collect() };
    let shipment =
        ShipmentSizeParams { groups: names.iter().map(|&g| (g.to_string(), cfg.truth.shipment_size[g])).collect() };
    let t = &cfg.truth.supplier;
    let mut supplier = SupplierChoiceParams::default();
    let mut commodities: Vec<&str> = cfg.groups.iter().map(|g| g.commodity.as_str()).collect();
    commodities.sort_unstable();
    commodities.dedup();
    let mut functions: Vec<FunctionType> = cfg.groups.iter().map(|g| g.function).collect();
    functions.sort_unstable();
    functions.dedup();
    for c in &commodities {
        for &r in &functions {
            for &s in &functions {
                let constant = t.constants[s.as_str()];
                supplier.epgs.insert(
                    Epg { commodity: c.to_string(), receiver: r, supplier: s },
                    SupplierCoefs {
                        time: t.time,
                        prod: t.prod,
                        demand: t.demand,
                        constant,
                        sigma_or: t.sigma_or,
                        sigma_lf: t.sigma_lf,
                        sigma_dws: t.sigma_dws,
                    },
                );
            }
        }
    }
    Ok(DemandParams { generation, supplier, shipment })
}

/// Applies the configured perturbation to ground-truth parameters.
pub fn perturb(truth: &DemandParams, p: &PerturbationConfig) -> DemandParams {
    let mut out = truth.clone();
    let g = 1.0 - p.generation;
    for c in out.generation.groups.values_mut() {
        let pr = &mut c.production;
        (pr.constant, pr.floor, pr.emp, pr.floor_emp) = (pr.constant * g, pr.floor * g, pr.emp * g, pr.floor_emp * g);
        let co = &mut c.consumption;
        (co.constant, co.floor, co.emp, co.floor_emp) = (co.constant * g, co.floor * g, co.emp * g, co.floor_emp * g);
    }
    for c in out.supplier.epgs.values_mut() {
        c.time *= 1.0 + p.supplier_time;
    }
    for c in out.shipment.groups.values_mut() {
        c.constant += (1.0 + p.shipment_size).ln();
    }
    out
}

/// Multiplicative Gaussian noise per screenline, rounded to whole vehicles.
pub fn noisy_counts(counts: &[f64], ids: &[u32], noise: f64, seed: u64) -> Vec<f64> {
    counts
        .iter()
        .zip(ids)
        .map(|(&c, &id)| {
            if noise == 0.0 {
                return c.round();
            }
            let mut rng = substream(seed, Domain::CountNoise, id as u64);
            let z: f64 = rng.sample(StandardNormal);
            (c * (1.0 + noise * z)).max(0.0).round()
        })
        .collect()
}

/// Builds a scenario and observes its counts from a ground-truth run.
pub fn synth(cfg: &ScenarioConfig) -> Result<SynthScenario> {
    cfg.validate()?;
    let seed = cfg.seed;
    let net = grid_network(&cfg.network, seed)?;
    let screenlines = place_screenlines(&cfg.network, cfg.screenlines.count, &net)?;
    let ests = establishments(cfg, &net, seed)?;
    let taxonomy = Taxonomy { groups: cfg.groups.iter().map(|g| (g.name.clone(), g.commodity.clone())).collect() };
    let ctx = DemandContext::new(net, ests, taxonomy)?;
    let truth = truth_params(cfg)?;
    let initial = perturb(&truth, &cfg.perturbation);
    let blank = Scenario::new(ctx, screenlines, cfg.simulation)?;
    let truth_run = simulate(&blank, &truth, derive_seed(seed, TRUTH_SALT))?;
    let ids: Vec<u32> = blank.screenlines.lines().iter().map(|s| s.id).collect();
    let observed = noisy_counts(&truth_run.counts, &ids, cfg.count_noise, seed);
    let screenlines = blank.screenlines.with_observed(&observed);
    let scenario = Scenario { screenlines, ..blank };
    Ok(SynthScenario { scenario, truth, initial, seed, truth_run })
}

/// Writes every scenario input and both parameter sets into `dir`.
pub fn write_scenario(dir: &Path, s: &SynthScenario) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let ctx = &s.scenario.ctx;
    io::write_manifest(&dir.join(io::MANIFEST), &io::Manifest { seed: s.seed, simulation: s.scenario.settings })?;
    io::write_network(dir, &ctx.network)?;
    io::write_screenlines(&dir.join(io::SCREENLINES), &s.scenario.screenlines)?;
    io::write_establishments(&dir.join(io::ESTABLISHMENTS), ctx.establishments())?;
    io::write_taxonomy(&dir.join(io::GROUPS), &ctx.taxonomy)?;
    io::write_params(&dir.join(io::INITIAL_PARAMS), &s.initial)?;
    io::write_params(&dir.join(io::TRUTH_PARAMS), &s.truth)
}
