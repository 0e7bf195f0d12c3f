//! CSV and TOML input/output for scenarios, parameters and run artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::adjust::{Adjustment, TargetTours};
use crate::demand::{
    ConsumptionCoefs, Contract, DemandContext, Epg, Establishment, FunctionType, GenerationParams, NodeTour,
    ProductionCoefs, Shipment, ShipmentSizeCoefs, ShipmentSizeParams, SupplierChoiceParams, SupplierCoefs, Taxonomy,
};
use crate::error::{Error, Result};
use crate::network::{Link, Node, RoadNetwork, Screenline, ScreenlineSet, ZoneId};
use crate::scenario::{DemandParams, Scenario, SimulationSettings};
use crate::slb::{MappingMatrix, SlbClass};

pub const NODES: &str = "nodes.csv";
pub const LINKS: &str = "links.csv";
pub const ZONES: &str = "zones.csv";
pub const SCREENLINES: &str = "screenlines.csv";
pub const ESTABLISHMENTS: &str = "establishments.csv";
pub const GROUPS: &str = "groups.csv";
pub const MANIFEST: &str = "scenario.toml";
pub const GENERATION: &str = "generation.csv";
pub const SUPPLIER_CHOICE: &str = "supplier_choice.csv";
pub const SHIPMENT_SIZE: &str = "shipment_size.csv";
/// Parameter directories inside a scenario.
pub const INITIAL_PARAMS: &str = "params/initial";
pub const TRUTH_PARAMS: &str = "params/truth";

fn schema(file: &Path, row: usize, message: impl Into<String>) -> Error {
    Error::SchemaViolation { file: file.to_path_buf(), row, message: message.into() }
}

/// Reads a headed CSV file; `row` in errors counts data rows from 1.
pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    if !path.is_file() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    let mut reader =
        csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| schema(path, 0, e.to_string()))?;
    reader.deserialize().enumerate().map(|(i, rec)| rec.map_err(|e| schema(path, i + 1, e.to_string()))).collect()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut writer = csv::Writer::from_path(path).map_err(csv_io)?;
    for row in rows {
        writer.serialize(row).map_err(csv_io)?;
    }
    writer.flush()?;
    Ok(())
}

/// Writes a header-only file when `rows` is empty.
fn write_csv_with_header<T: Serialize>(path: &Path, header: &[&str], rows: Vec<T>) -> Result<()> {
    if !rows.is_empty() {
        return write_csv(path, rows);
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, format!("{}\n", header.join(",")))?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

fn join<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

fn split_ids<T: std::str::FromStr>(file: &Path, row: usize, text: &str) -> Result<Vec<T>> {
    text.split_whitespace().map(|t| t.parse().map_err(|_| schema(file, row, format!("invalid id `{t}`")))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub node_id: u32,
    pub x: f64,
    pub y: f64,
    pub zone_id: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkRecord {
    pub link_id: u32,
    pub from_node: u32,
    pub to_node: u32,
    pub length_m: f64,
    pub travel_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneRecord {
    pub zone_id: u32,
    pub area_m2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenlineRecord {
    pub screenline_id: u32,
    pub link_id: u32,
    pub observed_count: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstablishmentRecord {
    pub id: u32,
    pub node_id: u32,
    pub floor_area_m2: f64,
    pub employment: f64,
    pub group: String,
    pub function: FunctionType,
    pub is_carrier: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRecord {
    pub group: String,
    pub commodity: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub group: String,
    /// `production` or `consumption`.
    pub block: String,
    pub constant: f64,
    pub floor: f64,
    pub emp: f64,
    pub floor_emp: f64,
    /// Blank for production rows.
    pub prod: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupplierChoiceRecord {
    pub commodity: String,
    pub receiver_function: FunctionType,
    pub supplier_function: FunctionType,
    pub time: f64,
    pub prod: f64,
    pub demand: f64,
    pub constant: f64,
    pub sigma_or: f64,
    pub sigma_lf: f64,
    pub sigma_dws: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShipmentSizeRecord {
    pub group: String,
    pub constant: f64,
    pub size: f64,
    pub dist: f64,
    pub dense: f64,
}

/// Reads nodes, links and the optional zone areas.
pub fn read_network(dir: &Path) -> Result<RoadNetwork> {
    let nodes: Vec<NodeRecord> = read_csv(&dir.join(NODES))?;
    let links: Vec<LinkRecord> = read_csv(&dir.join(LINKS))?;
    let zones_path = dir.join(ZONES);
    let areas: BTreeMap<ZoneId, f64> = if zones_path.is_file() {
        read_csv::<ZoneRecord>(&zones_path)?.into_iter().map(|z| (z.zone_id, z.area_m2)).collect()
    } else {
        BTreeMap::new()
    };
    RoadNetwork::new(
        nodes.into_iter().map(|n| Node { id: n.node_id, x: n.x, y: n.y, zone: n.zone_id }).collect(),
        links
            .into_iter()
            .map(|l| Link {
                id: l.link_id,
                from: l.from_node,
                to: l.to_node,
                length_m: l.length_m,
                travel_time_s: l.travel_time_s,
            })
            .collect(),
        &areas,
    )
}

pub fn write_network(dir: &Path, net: &RoadNetwork) -> Result<()> {
    write_csv(
        &dir.join(NODES),
        net.nodes().iter().map(|n| NodeRecord { node_id: n.id, x: n.x, y: n.y, zone_id: n.zone }),
    )?;
    write_csv(
        &dir.join(LINKS),
        net.links().iter().map(|l| LinkRecord {
            link_id: l.id,
            from_node: l.from,
            to_node: l.to,
            length_m: l.length_m,
            travel_time_s: l.travel_time_s,
        }),
    )?;
    write_csv(&dir.join(ZONES), net.zones().iter().map(|z| ZoneRecord { zone_id: z.id, area_m2: z.area_m2 }))
}

/// Reads screenline membership; every row of a screenline must repeat the
/// same observed count.
pub fn read_screenlines(path: &Path, net: &RoadNetwork) -> Result<ScreenlineSet> {
    let rows: Vec<ScreenlineRecord> = read_csv(path)?;
    let mut lines: BTreeMap<u32, Screenline> = BTreeMap::new();
    for (i, r) in rows.into_iter().enumerate() {
        let line = lines.entry(r.screenline_id).or_insert_with(|| Screenline {
            id: r.screenline_id,
            links: Vec::new(),
            observed_count: r.observed_count,
        });
        if line.observed_count != r.observed_count {
            return Err(schema(
                path,
                i + 1,
                format!("screenline {} repeats a different observed_count", r.screenline_id),
            ));
        }
        line.links.push(r.link_id);
    }
    ScreenlineSet::new(lines.into_values().collect(), net)
}

pub fn write_screenlines(path: &Path, set: &ScreenlineSet) -> Result<()> {
    write_csv(
        path,
        set.lines().iter().flat_map(|s| {
            s.links.iter().map(move |&l| ScreenlineRecord {
                screenline_id: s.id,
                link_id: l,
                observed_count: s.observed_count,
            })
        }),
    )
}

pub fn read_establishments(path: &Path) -> Result<Vec<Establishment>> {
    Ok(read_csv::<EstablishmentRecord>(path)?
        .into_iter()
        .map(|r| Establishment {
            id: r.id,
            node: r.node_id,
            zone: 0,
            floor_area: r.floor_area_m2,
            employment: r.employment,
            group: r.group,
            function: r.function,
            is_carrier: r.is_carrier,
        })
        .collect())
}

pub fn write_establishments(path: &Path, ests: &[Establishment]) -> Result<()> {
    write_csv(
        path,
        ests.iter().map(|e| EstablishmentRecord {
            id: e.id,
            node_id: e.node,
            floor_area_m2: e.floor_area,
            employment: e.employment,
            group: e.group.clone(),
            function: e.function,
            is_carrier: e.is_carrier,
        }),
    )
}

pub fn read_taxonomy(path: &Path) -> Result<Taxonomy> {
    let mut groups = BTreeMap::new();
    for (i, r) in read_csv::<GroupRecord>(path)?.into_iter().enumerate() {
        if groups.insert(r.group.clone(), r.commodity).is_some() {
            return Err(schema(path, i + 1, format!("duplicate group `{}`", r.group)));
        }
    }
    Ok(Taxonomy { groups })
}

pub fn write_taxonomy(path: &Path, taxonomy: &Taxonomy) -> Result<()> {
    write_csv(path, taxonomy.groups.iter().map(|(g, c)| GroupRecord { group: g.clone(), commodity: c.clone() }))
}

/// Reads the three parameter blocks from one directory.
pub fn read_params(dir: &Path) -> Result<DemandParams> {
    let gen_path = dir.join(GENERATION);
    let mut generation = GenerationParams::default();
    let mut seen = BTreeMap::new();
    for (i, r) in read_csv::<GenerationRecord>(&gen_path)?.into_iter().enumerate() {
        let row = i + 1;
        if seen.insert((r.group.clone(), r.block.clone()), ()).is_some() {
            return Err(schema(&gen_path, row, format!("duplicate {} row for group `{}`", r.block, r.group)));
        }
        let entry = generation.groups.entry(r.group.clone()).or_default();
        match r.block.as_str() {
            "production" => {
                entry.production =
                    ProductionCoefs { constant: r.constant, floor: r.floor, emp: r.emp, floor_emp: r.floor_emp }
            }
            "consumption" => {
                let prod = r.prod.ok_or_else(|| schema(&gen_path, row, "consumption row needs `prod`"))?;
                entry.consumption =
                    ConsumptionCoefs { constant: r.constant, floor: r.floor, emp: r.emp, floor_emp: r.floor_emp, prod }
            }
            other => return Err(schema(&gen_path, row, format!("unknown block `{other}`"))),
        }
    }
    for group in generation.groups.keys() {
        for block in ["production", "consumption"] {
            if !seen.contains_key(&(group.clone(), block.to_string())) {
                return Err(schema(&gen_path, 0, format!("group `{group}` has no {block} row")));
            }
        }
    }

    let mut supplier = SupplierChoiceParams::default();
    let sc_path = dir.join(SUPPLIER_CHOICE);
    for (i, r) in read_csv::<SupplierChoiceRecord>(&sc_path)?.into_iter().enumerate() {
        let epg = Epg { commodity: r.commodity, receiver: r.receiver_function, supplier: r.supplier_function };
        let coefs = SupplierCoefs {
            time: r.time,
            prod: r.prod,
            demand: r.demand,
            constant: r.constant,
            sigma_or: r.sigma_or,
            sigma_lf: r.sigma_lf,
            sigma_dws: r.sigma_dws,
        };
        if supplier.epgs.insert(epg.clone(), coefs).is_some() {
            return Err(schema(&sc_path, i + 1, format!("duplicate pair group `{epg}`")));
        }
    }

    let mut shipment = ShipmentSizeParams::default();
    let ss_path = dir.join(SHIPMENT_SIZE);
    for (i, r) in read_csv::<ShipmentSizeRecord>(&ss_path)?.into_iter().enumerate() {
        let coefs = ShipmentSizeCoefs { constant: r.constant, size: r.size, dist: r.dist, dense: r.dense };
        if shipment.groups.insert(r.group.clone(), coefs).is_some() {
            return Err(schema(&ss_path, i + 1, format!("duplicate group `{}`", r.group)));
        }
    }
    Ok(DemandParams { generation, supplier, shipment })
}

pub fn write_params(dir: &Path, params: &DemandParams) -> Result<()> {
    write_csv(
        &dir.join(GENERATION),
        params.generation.groups.iter().flat_map(|(g, c)| {
            [
                GenerationRecord {
                    group: g.clone(),
                    block: "production".into(),
                    constant: c.production.constant,
                    floor: c.production.floor,
                    emp: c.production.emp,
                    floor_emp: c.production.floor_emp,
                    prod: None,
                },
                GenerationRecord {
                    group: g.clone(),
                    block: "consumption".into(),
                    constant: c.consumption.constant,
                    floor: c.consumption.floor,
                    emp: c.consumption.emp,
                    floor_emp: c.consumption.floor_emp,
                    prod: Some(c.consumption.prod),
                },
            ]
        }),
    )?;
    write_csv(
        &dir.join(SUPPLIER_CHOICE),
        params.supplier.epgs.iter().map(|(e, c)| SupplierChoiceRecord {
            commodity: e.commodity.clone(),
            receiver_function: e.receiver,
            supplier_function: e.supplier,
            time: c.time,
            prod: c.prod,
            demand: c.demand,
            constant: c.constant,
            sigma_or: c.sigma_or,
            sigma_lf: c.sigma_lf,
            sigma_dws: c.sigma_dws,
        }),
    )?;
    write_csv(
        &dir.join(SHIPMENT_SIZE),
        params.shipment.groups.iter().map(|(g, c)| ShipmentSizeRecord {
            group: g.clone(),
            constant: c.constant,
            size: c.size,
            dist: c.dist,
            dense: c.dense,
        }),
    )
}

#[derive(Debug, Clone, Serialize)]
struct ParameterRow<'a> {
    block: &'a str,
    key: String,
    coefficient: &'a str,
    value: f64,
}

/// All blocks in long format: block, key, coefficient, value.
pub fn write_parameters_long(path: &Path, params: &DemandParams) -> Result<()> {
    let mut rows = Vec::new();
    for (g, c) in &params.generation.groups {
        for (name, v) in ["constant", "floor", "emp", "floor_emp"].into_iter().zip(c.production.as_array()) {
            rows.push(ParameterRow { block: "production", key: g.clone(), coefficient: name, value: v });
        }
        for (name, v) in ["constant", "floor", "emp", "floor_emp", "prod"].into_iter().zip(c.consumption.as_array()) {
            rows.push(ParameterRow { block: "consumption", key: g.clone(), coefficient: name, value: v });
        }
    }
    for (e, c) in &params.supplier.epgs {
        let names = ["time", "prod", "demand", "constant", "sigma_or", "sigma_lf", "sigma_dws"];
        for (name, v) in names.into_iter().zip(c.as_array()) {
            rows.push(ParameterRow { block: "supplier_choice", key: e.to_string(), coefficient: name, value: v });
        }
    }
    for (g, c) in &params.shipment.groups {
        for (name, v) in ["constant", "size", "dist", "dense"].into_iter().zip(c.as_array()) {
            rows.push(ParameterRow { block: "shipment_size", key: g.clone(), coefficient: name, value: v });
        }
    }
    write_csv(path, rows)
}

/// Scenario-level settings stored next to the input tables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub seed: u64,
    pub simulation: SimulationSettings,
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    if !path.is_file() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| schema(path, 0, e.to_string()))
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let text = toml::to_string(manifest).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

/// Loads a scenario directory: manifest, network, screenlines,
/// establishments and groups.
pub fn load_scenario(dir: &Path) -> Result<(Scenario, Manifest)> {
    let manifest = read_manifest(&dir.join(MANIFEST))?;
    let network = read_network(dir)?;
    let screenlines = read_screenlines(&dir.join(SCREENLINES), &network)?;
    let establishments = read_establishments(&dir.join(ESTABLISHMENTS))?;
    let taxonomy = read_taxonomy(&dir.join(GROUPS))?;
    let ctx = DemandContext::new(network, establishments, taxonomy)?;
    Ok((Scenario::new(ctx, screenlines, manifest.simulation)?, manifest))
}

#[derive(Debug, Clone, Serialize)]
struct ContractRow<'a> {
    contract_id: u64,
    receiver_id: u32,
    supplier_id: u32,
    commodity: &'a str,
    size_kg: f64,
    epg: String,
}

pub fn write_contracts(path: &Path, contracts: &[Contract]) -> Result<()> {
    write_csv(
        path,
        contracts.iter().map(|c| ContractRow {
            contract_id: c.id,
            receiver_id: c.receiver,
            supplier_id: c.supplier,
            commodity: &c.commodity,
            size_kg: c.size_kg,
            epg: c.epg.to_string(),
        }),
    )
}

#[derive(Debug, Clone, Serialize)]
struct ShipmentRow {
    contract_id: u64,
    shipment_size_kg: f64,
    frequency_per_year: f64,
    dist_km: f64,
    density: f64,
}

pub fn write_shipments(path: &Path, shipments: &[Shipment]) -> Result<()> {
    write_csv(
        path,
        shipments.iter().map(|s| ShipmentRow {
            contract_id: s.contract_id,
            shipment_size_kg: s.size_kg,
            frequency_per_year: s.frequency,
            dist_km: s.dist_km,
            density: s.density,
        }),
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TourRow {
    pub tour_id: u64,
    pub seq: usize,
    pub node_id: u32,
    /// Space-separated shipment instance ids; blank at the depot.
    pub shipment_ids: String,
}

/// One row per visited node: depot (seq 0), stops, depot.
pub fn write_tours(path: &Path, tours: &[NodeTour]) -> Result<()> {
    let mut rows = Vec::new();
    for t in tours {
        rows.push(TourRow { tour_id: t.id, seq: 0, node_id: t.depot, shipment_ids: String::new() });
        for (i, s) in t.stops.iter().enumerate() {
            rows.push(TourRow { tour_id: t.id, seq: i + 1, node_id: s.node, shipment_ids: join(&s.shipments) });
        }
        rows.push(TourRow { tour_id: t.id, seq: t.stops.len() + 1, node_id: t.depot, shipment_ids: String::new() });
    }
    write_csv_with_header(path, &["tour_id", "seq", "node_id", "shipment_ids"], rows)
}

/// Tour id, node sequence and shipment ids per stop.
pub type TourRecord = (u64, Vec<u32>, Vec<Vec<u64>>);

pub fn read_tours(path: &Path) -> Result<Vec<TourRecord>> {
    let rows: Vec<TourRow> = read_csv(path)?;
    let mut out: Vec<TourRecord> = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        let ids = split_ids(path, i + 1, &r.shipment_ids)?;
        match out.last_mut() {
            Some((id, nodes, ships)) if *id == r.tour_id => {
                if r.seq != nodes.len() {
                    return Err(schema(path, i + 1, format!("tour {} skips to seq {}", r.tour_id, r.seq)));
                }
                nodes.push(r.node_id);
                ships.push(ids);
            }
            _ => {
                if r.seq != 0 {
                    return Err(schema(path, i + 1, format!("tour {} must start at seq 0", r.tour_id)));
                }
                out.push((r.tour_id, vec![r.node_id], vec![ids]));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
struct ClassRow {
    class_index: usize,
    signature: String,
    count: usize,
    member_tour_ids: String,
}

pub fn write_slb_classes(path: &Path, classes: &[SlbClass]) -> Result<()> {
    let rows = classes
        .iter()
        .enumerate()
        .map(|(i, c)| ClassRow {
            class_index: i,
            signature: join(&c.signature),
            count: c.count(),
            member_tour_ids: join(&c.members),
        })
        .collect();
    write_csv_with_header(path, &["class_index", "signature", "count", "member_tour_ids"], rows)
}

pub fn write_matrix_market(path: &Path, a: &MappingMatrix) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, a.to_matrix_market())?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct AdjustmentRow {
    class_index: usize,
    x_star: f64,
    rounded: i64,
    pinned_flag: u8,
}

pub fn write_adjustment(path: &Path, adj: &Adjustment) -> Result<()> {
    let rows = (0..adj.rounded.len())
        .map(|l| AdjustmentRow {
            class_index: l,
            x_star: adj.x_star[l],
            rounded: adj.rounded[l],
            pinned_flag: u8::from(adj.pinned[l]),
        })
        .collect();
    write_csv_with_header(path, &["class_index", "x_star", "rounded", "pinned_flag"], rows)
}

#[derive(Debug, Clone, Serialize)]
struct CloneRow {
    source_tour_id: u64,
    clone_tour_id: u64,
}

#[derive(Debug, Clone, Serialize)]
struct RemovalRow {
    tour_id: u64,
}

/// Writes target_tours.csv, clone_log.csv and removal_log.csv into `dir`.
pub fn write_target_tours(dir: &Path, target: &TargetTours) -> Result<()> {
    write_tours(&dir.join("target_tours.csv"), &target.tours)?;
    write_csv_with_header(
        &dir.join("clone_log.csv"),
        &["source_tour_id", "clone_tour_id"],
        target.clones.iter().map(|&(s, c)| CloneRow { source_tour_id: s, clone_tour_id: c }).collect(),
    )?;
    write_csv_with_header(
        &dir.join("removal_log.csv"),
        &["tour_id"],
        target.removed.iter().map(|&t| RemovalRow { tour_id: t }).collect(),
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CountRow {
    pub screenline_id: u32,
    pub observed: f64,
    pub simulated: f64,
}

/// Observed against simulated counts per screenline.
pub fn write_scatter(path: &Path, set: &ScreenlineSet, simulated: &[f64]) -> Result<()> {
    write_csv(
        path,
        set.lines().iter().zip(simulated).map(|(s, &v)| CountRow {
            screenline_id: s.id,
            observed: s.observed_count,
            simulated: v,
        }),
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulatedCountRow {
    pub screenline_id: u32,
    pub binary_count: f64,
    pub physical_crossings: f64,
}

pub fn write_simulated_counts(path: &Path, set: &ScreenlineSet, binary: &[f64], physical: &[f64]) -> Result<()> {
    write_csv(
        path,
        set.lines().iter().zip(binary).zip(physical).map(|((s, &b), &p)| SimulatedCountRow {
            screenline_id: s.id,
            binary_count: b,
            physical_crossings: p,
        }),
    )
}

pub fn ensure_dir(dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    Ok(dir.to_path_buf())
}
