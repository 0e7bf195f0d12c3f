mod common;

use std::collections::BTreeMap;

use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sltc_core::demand::{
    shipment_size_frequency, AltAttributes, ConsumptionCoefs, Contract, DemandContext, Epg, Establishment,
    EstablishmentFlows, FunctionType, GenerationParams, GroupGeneration, ProductionCoefs, Shipment, ShipmentSizeCoefs,
    ShipmentSizeParams, SupplierChoiceParams, SupplierCoefs, Taxonomy,
};
use sltc_core::estimate::{
    estimate_mixed_logit, origin_distribution, quasi_contract_sizes, reassign_suppliers, reestimate_generation,
    reestimate_shipment_size, reestimate_supplier_model, sample_choice_sets, simulated_log_likelihood, BlockReport,
    BlockStatus, ChoiceObservation, OriginDistribution, ReassignFallback, SmlOptions, CHOICE_SET_SIZE,
};
use sltc_core::Error;

/// Least squares through the normal equations `XᵀXβ = Xᵀy`.
fn normal_equations(rows: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = rows[0].len();
    let xtx = (0..p).map(|i| (0..p).map(|j| rows.iter().map(|r| r[i] * r[j]).sum()).collect()).collect();
    let xty = (0..p).map(|i| rows.iter().zip(y).map(|(r, v)| r[i] * v).sum()).collect();
    dense_solve(xtx, xty)
}

/// Retail establishments with varied floor area and employment.
fn generation_fixture(n: u32, seed: u64) -> DemandContext {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ests = (1..=n)
        .map(|id| Establishment {
            floor_area: rng.random_range(1.0..10.0),
            employment: rng.random_range(1.0..10.0),
            ..est(id, (id % 8) + 1, FunctionType::Retail, false)
        })
        .collect();
    context(line_network(8, 60.0, |n| n), ests)
}

fn design(ctx: &DemandContext) -> Vec<Vec<f64>> {
    ctx.establishments().iter().map(|e| vec![1.0, e.floor_area, e.employment, e.floor_area * e.employment]).collect()
}

#[test]
fn noiseless_generation_is_recovered() {
    let ctx = generation_fixture(40, 1);
    let prod = ProductionCoefs { constant: 1.0, floor: 0.5, emp: 2.0, floor_emp: 0.0 };
    let cons = ConsumptionCoefs { constant: 0.3, floor: 0.1, emp: 0.2, floor_emp: 0.01, prod: 0.5 };
    let production: Vec<f64> = ctx.establishments().iter().map(|e| prod.evaluate(e.floor_area, e.employment)).collect();
    let (fit, reports) = reestimate_generation(&ctx, &production, &production, &GenerationParams::default(), 0);
    let g = &fit.groups["retail"];
    assert!(inf_dist(&g.production.as_array(), &prod.as_array()) < 1e-8, "{:?}", g.production);
    assert_eq!(reports[0].status, BlockStatus::Updated);
    // Exact production is collinear with the consumption design.
    assert_eq!(reports[1].status, BlockStatus::RankDeficient);

    let supplied: Vec<f64> = ctx.establishments().iter().map(|e| e.floor_area.powi(2) + e.employment.sqrt()).collect();
    let consumption: Vec<f64> = ctx
        .establishments()
        .iter()
        .zip(&supplied)
        .map(|(e, &p)| cons.evaluate(e.floor_area, e.employment, p))
        .collect();
    let (fit, reports) = reestimate_generation(&ctx, &supplied, &consumption, &GenerationParams::default(), 0);
    let g = &fit.groups["retail"];
    assert!(inf_dist(&g.consumption.as_array(), &cons.as_array()) < 1e-8, "{:?}", g.consumption);
    assert!(reports[1].status == BlockStatus::Updated && (reports[1].fit - 1.0).abs() < 1e-10);
}

#[test]
fn constant_production_gives_flat_slopes() {
    let ctx = generation_fixture(25, 2);
    let production = vec![7.5; 25];
    let (fit, _) = reestimate_generation(&ctx, &production, &production, &GenerationParams::default(), 0);
    let p = fit.groups["retail"].production.as_array();
    assert!(inf_dist(&p, &[7.5, 0.0, 0.0, 0.0]) < 1e-8, "{p:?}");
}

#[test]
fn noisy_generation_matches_normal_equations() {
    let ctx = generation_fixture(60, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let production: Vec<f64> = ctx
        .establishments()
        .iter()
        .map(|e| 2.0 + 0.4 * e.floor_area + 1.5 * e.employment + rng.random_range(-3.0..3.0))
        .collect();
    let consumption: Vec<f64> = production.iter().map(|p| 0.8 * p + rng.random_range(0.0..5.0)).collect();
    let (fit, _) = reestimate_generation(&ctx, &production, &consumption, &GenerationParams::default(), 0);
    let rows = design(&ctx);
    let oracle = normal_equations(&rows, &production);
    assert!(inf_dist(&fit.groups["retail"].production.as_array(), &oracle) < 1e-8);
    let cons_rows: Vec<Vec<f64>> = rows.iter().zip(&production).map(|(r, &p)| [r.as_slice(), &[p]].concat()).collect();
    let oracle = normal_equations(&cons_rows, &consumption);
    assert!(inf_dist(&fit.groups["retail"].consumption.as_array(), &oracle) < 1e-8);
}

#[test]
fn small_groups_keep_previous_coefficients() {
    let ctx = generation_fixture(4, 5);
    let mut previous = GenerationParams::default();
    let kept = GroupGeneration {
        production: ProductionCoefs { constant: 9.0, ..Default::default() },
        consumption: ConsumptionCoefs { prod: 1.0, ..Default::default() },
    };
    previous.groups.insert("retail".into(), kept);
    let (fit, reports) = reestimate_generation(&ctx, &[1.0; 4], &[1.0; 4], &previous, 0);
    assert_eq!(fit.groups["retail"], kept);
    assert!(reports.iter().all(|r| r.status == BlockStatus::InsufficientObservations));
}

/// Receivers spread over the line with uneven zone densities; contracts
/// from a supplier at node 1 with varied annual sizes.
fn shipment_fixture(n: u64, seed: u64) -> (DemandContext, Vec<Contract>) {
    let mut ests = vec![est(1000, 1, FunctionType::Factory, true)];
    let mut id = 1;
    for node in 2..=8u32 {
        for _ in 0..node {
            ests.push(est(id, node, FunctionType::Retail, false));
            id += 1;
        }
    }
    let receivers = id - 1;
    let ctx = context(line_network(8, 60.0, |n| n), ests);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let epg = Epg { commodity: COMMODITY.into(), receiver: FunctionType::Retail, supplier: FunctionType::Factory };
    let contracts = (0..n)
        .map(|i| Contract {
            id: i + 1,
            receiver: rng.random_range(1..=receivers),
            supplier: 1000,
            commodity: COMMODITY.into(),
            size_kg: 10f64.powf(rng.random_range(3.0..6.0)),
            epg: epg.clone(),
        })
        .collect();
    (ctx, contracts)
}

fn retail(reports: &[BlockReport]) -> &BlockReport {
    reports.iter().find(|r| r.key == "retail").unwrap()
}

fn size_params(c: ShipmentSizeCoefs) -> ShipmentSizeParams {
    ShipmentSizeParams { groups: [("retail".to_string(), c)].into() }
}

#[test]
fn unadjusted_contracts_return_the_generating_size_model() {
    let (ctx, contracts) = shipment_fixture(200, 6);
    let truth = ShipmentSizeCoefs { constant: 0.8, size: 0.4, dist: 0.1, dense: -0.1 };
    let shipments = shipment_size_frequency(&ctx, &contracts, &size_params(truth)).unwrap();
    assert!(shipments.iter().zip(&contracts).all(|(s, c)| s.size_kg < c.size_kg));
    let sizes: Vec<f64> = contracts.iter().map(|c| c.size_kg).collect();
    let (fit, reports) =
        reestimate_shipment_size(&ctx, &contracts, &shipments, &sizes, &ShipmentSizeParams::default(), 5);
    assert!(inf_dist(&fit.groups["retail"].as_array(), &truth.as_array()) < 1e-8, "{:?}", fit.groups["retail"]);
    assert_eq!(retail(&reports).status, BlockStatus::Updated);
}

#[test]
fn noisy_shipment_sizes_match_normal_equations() {
    let (ctx, contracts) = shipment_fixture(150, 7);
    let truth = ShipmentSizeCoefs { constant: 0.8, size: 0.4, dist: 0.1, dense: -0.1 };
    let mut shipments = shipment_size_frequency(&ctx, &contracts, &size_params(truth)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for s in &mut shipments {
        s.size_kg *= rng.random_range(0.7..1.3f64);
    }
    let mut sizes: Vec<f64> = contracts.iter().map(|c| c.size_kg * rng.random_range(0.5..2.0)).collect();
    sizes[0] = 0.0;
    let (fit, reports) =
        reestimate_shipment_size(&ctx, &contracts, &shipments, &sizes, &ShipmentSizeParams::default(), 5);
    assert_eq!(retail(&reports).n_obs, 149);
    let rows: Vec<Vec<f64>> = shipments[1..]
        .iter()
        .zip(&sizes[1..])
        .map(|(s, x)| vec![1.0, x.ln(), s.dist_km.ln(), s.density.ln()])
        .collect();
    let y: Vec<f64> = shipments[1..].iter().map(|s| s.size_kg.ln()).collect();
    assert!(inf_dist(&fit.groups["retail"].as_array(), &normal_equations(&rows, &y)) < 1e-8);
}

#[test]
fn too_few_shipments_keep_previous_size_model() {
    let (ctx, contracts) = shipment_fixture(4, 9);
    let previous = size_params(ShipmentSizeCoefs { constant: 1.0, ..Default::default() });
    let shipments = shipment_size_frequency(&ctx, &contracts, &previous).unwrap();
    let sizes: Vec<f64> = contracts.iter().map(|c| c.size_kg).collect();
    let (fit, reports) = reestimate_shipment_size(&ctx, &contracts, &shipments, &sizes, &previous, 5);
    assert_eq!(fit, previous);
    assert_eq!(retail(&reports).status, BlockStatus::InsufficientObservations);
}

#[test]
fn quasi_sizes_aggregate_to_the_weighted_frequency_ratio() {
    let shipment = |id, frequency| Shipment { contract_id: id, size_kg: 10.0, frequency, dist_km: 1.0, density: 1.0 };
    let shipments = [shipment(1, 2.0), shipment(2, 4.0), shipment(3, 5.0)];
    let adjusted = [4.0, 2.0, 5.0];
    let sizes = [20.0, 40.0, 50.0];
    let q = quasi_contract_sizes(&shipments, &adjusted, &sizes).unwrap();
    assert_eq!(q, vec![40.0, 20.0, 50.0]);
    // (2·20 + 0.5·40 + 1·50) / 110
    let ratio = q.iter().sum::<f64>() / sizes.iter().sum::<f64>();
    assert!((ratio - 110.0 / 110.0).abs() < 1e-15);
    let zero = [shipment(4, 0.0)];
    assert!(quasi_contract_sizes(&zero, &[1.0], &[1.0]).is_err());
}

proptest! {
    #[test]
    fn origin_rows_sum_to_one(flows in prop::collection::vec((1u32..6, 1u32..6, 0.0..100.0f64), 0..40)) {
        let zones: Vec<u32> = (1..6).collect();
        let dist = origin_distribution(&flows, &zones);
        for (dest, row) in &dist.rows {
            prop_assert!((row.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(!dist.empty.contains(dest));
        }
        prop_assert_eq!(dist.rows.len() + dist.empty.len(), zones.len());
    }
}

/// Receiver 1 (retail) at node 1; office suppliers 2 and 3 in zones 3 and 6;
/// a producer of another commodity alone in zone 5.
fn reassignment_fixture() -> (DemandContext, EstablishmentFlows) {
    let mut taxonomy: Taxonomy = taxonomy();
    taxonomy.groups.insert("steel".into(), "steel".into());
    let ests = vec![
        est(1, 1, FunctionType::Retail, false),
        est(2, 3, FunctionType::Office, false),
        est(3, 6, FunctionType::Office, false),
        Establishment { group: "steel".into(), ..est(4, 5, FunctionType::Factory, false) },
    ];
    let ctx = DemandContext::new(line_network(8, 60.0, |n| n), ests, taxonomy).unwrap();
    let flows =
        EstablishmentFlows { production: vec![0.0, 100.0, 100.0, 100.0], consumption: vec![50.0, 0.0, 0.0, 0.0] };
    (ctx, flows)
}

fn contracts_for(receiver: u32, supplier: u32, n: u64) -> Vec<Contract> {
    let epg = Epg { commodity: COMMODITY.into(), receiver: FunctionType::Retail, supplier: FunctionType::Office };
    (1..=n)
        .map(|id| Contract { id, receiver, supplier, commodity: COMMODITY.into(), size_kg: 5.0, epg: epg.clone() })
        .collect()
}

fn choice_params() -> SupplierChoiceParams {
    let coefs = SupplierCoefs { time: -1.0, prod: 1.0, sigma_or: 1.0, sigma_dws: 0.5, ..Default::default() };
    let mut epgs = BTreeMap::new();
    for r in FunctionType::ALL {
        for s in FunctionType::ALL {
            epgs.insert(Epg { commodity: COMMODITY.into(), receiver: r, supplier: s }, coefs);
        }
    }
    SupplierChoiceParams { epgs, draws: 100 }
}

fn single_row(dest: u32, row: Vec<(u32, f64)>) -> OriginDistribution {
    OriginDistribution { rows: [(dest, row)].into(), empty: Vec::new() }
}

#[test]
fn degenerate_origin_row_picks_its_only_supplier() {
    let (ctx, flows) = reassignment_fixture();
    let contracts = contracts_for(1, 3, 200);
    let out =
        reassign_suppliers(&ctx, &contracts, &single_row(1, vec![(3, 1.0)]), &flows, &choice_params(), 1).unwrap();
    assert!(out.iter().all(|r| r.supplier == 2 && r.fallback.is_none()));
}

#[test]
fn uniform_origin_row_splits_evenly() {
    let (ctx, flows) = reassignment_fixture();
    let n = 10_000;
    let contracts = contracts_for(1, 2, n);
    let origins = single_row(1, vec![(3, 0.5), (6, 0.5)]);
    let out = reassign_suppliers(&ctx, &contracts, &origins, &flows, &choice_params(), 2).unwrap();
    let share = out.iter().filter(|r| r.supplier == 2).count() as f64 / n as f64;
    assert!((share - 0.5).abs() <= 3.0 * (0.25 / n as f64).sqrt(), "share {share}");
}

#[test]
fn reassignment_falls_back_to_the_current_supplier() {
    let (ctx, flows) = reassignment_fixture();
    let contracts = contracts_for(1, 3, 5);
    let out =
        reassign_suppliers(&ctx, &contracts, &single_row(1, vec![(5, 1.0)]), &flows, &choice_params(), 3).unwrap();
    assert!(out.iter().all(|r| r.supplier == 3 && r.fallback == Some(ReassignFallback::NoSupplierInZone)));
    let out =
        reassign_suppliers(&ctx, &contracts, &OriginDistribution::default(), &flows, &choice_params(), 3).unwrap();
    assert!(out.iter().all(|r| r.supplier == 3 && r.fallback == Some(ReassignFallback::EmptyOriginRow)));
}

/// Receiver 1 with `offices` office suppliers (ids from 2) and 30 logistics
/// suppliers (ids from 500).
fn choice_set_fixture(offices: u32) -> (DemandContext, EstablishmentFlows) {
    let mut ests = vec![est(1, 1, FunctionType::Retail, false)];
    ests.extend((0..offices).map(|i| est(2 + i, 2 + i % 7, FunctionType::Office, false)));
    ests.extend((0..30).map(|i| est(500 + i, 2 + i % 7, FunctionType::LogisticsFacility, true)));
    let ctx = context(line_network(8, 60.0, |n| n), ests);
    let n = ctx.establishments().len();
    let production = (0..n).map(|i| if i == 0 { 0.0 } else { 10.0 + i as f64 }).collect();
    (ctx, EstablishmentFlows { production, consumption: vec![0.0; n] })
}

#[test]
fn exactly_fifty_suppliers_form_the_whole_set() {
    let (ctx, flows) = choice_set_fixture(50);
    let contracts = contracts_for(1, 7, 3);
    let quasi: Vec<(&Contract, u32)> = contracts.iter().map(|c| (c, 7)).collect();
    let sets = sample_choice_sets(&ctx, &flows, &quasi, 1).unwrap();
    for s in &sets {
        assert!(!s.short);
        let mut ids = s.suppliers.clone();
        ids.sort_unstable();
        assert_eq!(ids, (2..52).collect::<Vec<_>>());
        assert_eq!(s.suppliers[s.chosen], 7);
    }
}

#[test]
fn thirty_suppliers_give_a_short_set() {
    let (ctx, flows) = choice_set_fixture(50);
    let contracts = contracts_for(1, 510, 2);
    let quasi: Vec<(&Contract, u32)> = contracts.iter().map(|c| (c, 510)).collect();
    let sets = sample_choice_sets(&ctx, &flows, &quasi, 1).unwrap();
    assert!(sets.iter().all(|s| s.short && s.suppliers.len() == 30));
}

#[test]
fn sampled_sets_always_hold_the_chosen_supplier() {
    let (ctx, flows) = choice_set_fixture(120);
    let contracts = contracts_for(1, 2, 1000);
    let quasi: Vec<(&Contract, u32)> = contracts.iter().map(|c| (c, 2 + (c.id as u32 * 7) % 120)).collect();
    let sets = sample_choice_sets(&ctx, &flows, &quasi, 5).unwrap();
    let mut distinct = std::collections::BTreeSet::new();
    for (s, (_, chosen)) in sets.iter().zip(&quasi) {
        assert_eq!(s.suppliers.len(), CHOICE_SET_SIZE);
        assert_eq!(s.suppliers[s.chosen], *chosen);
        let mut ids = s.suppliers.clone();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), CHOICE_SET_SIZE);
        assert!(s.alternatives.iter().all(|a| a.function == FunctionType::Office));
        distinct.insert(ids);
    }
    assert!(distinct.len() > 900);
}

fn epg(supplier: FunctionType) -> Epg {
    Epg { commodity: COMMODITY.into(), receiver: FunctionType::Retail, supplier }
}

/// Choices drawn from the logit (with an error component when `sigma_or` is
/// set) over `alts` alternatives with random travel time and production.
fn logit_data(
    n: usize,
    alts: usize,
    truth: &SupplierCoefs,
    functions: &[FunctionType],
    seed: u64,
) -> Vec<ChoiceObservation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let alternatives: Vec<AltAttributes> = (0..alts)
                .map(|j| AltAttributes {
                    time_s: rng.random_range(60f64.ln()..3600f64.ln()).exp(),
                    production: rng.random_range(0.0..10.0f64).exp(),
                    demand: 10.0,
                    function: functions[j % functions.len()],
                })
                .collect();
            let eta: f64 = rng.sample(rand_distr::StandardNormal);
            let u: Vec<f64> = alternatives
                .iter()
                .map(|a| {
                    let nest = matches!(a.function, FunctionType::Office | FunctionType::Retail) as u8 as f64;
                    truth.time * a.time_s.ln() + truth.prod * a.production.ln() + truth.sigma_or * nest * eta
                })
                .collect();
            let max = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = u.iter().map(|v| (v - max).exp()).collect();
            let mut pick = rng.random::<f64>() * w.iter().sum::<f64>();
            let mut chosen = alts - 1;
            for (j, v) in w.iter().enumerate() {
                if pick < *v {
                    chosen = j;
                    break;
                }
                pick -= v;
            }
            ChoiceObservation {
                epg: epg(functions[0]),
                suppliers: (0..alts as u32).collect(),
                alternatives,
                chosen,
                short: false,
            }
        })
        .collect()
}

#[test]
fn plain_logit_time_coefficient_is_recovered() {
    let truth = SupplierCoefs { time: -1.0, prod: 0.5, ..Default::default() };
    let obs = logit_data(20_000, CHOICE_SET_SIZE, &truth, &[FunctionType::Factory], 11);
    let fit =
        estimate_mixed_logit(&obs, &SupplierCoefs::default(), &SmlOptions { seed: 1, ..Default::default() }).unwrap();
    assert!((-1.15..=-0.85).contains(&fit.coefs.time), "{:?}", fit.coefs);
    assert!(fit.grad_norm <= 1e-5);
    assert_eq!(fit.free, [true, true, false, false, false, false, false]);
    assert_eq!(fit.draws, 1);
}

#[test]
fn generating_parameters_dominate_a_perturbed_time_coefficient() {
    let truth = SupplierCoefs { time: -1.0, prod: 0.5, sigma_or: 1.0, ..Default::default() };
    let obs = logit_data(5_000, 20, &truth, &[FunctionType::Office, FunctionType::Factory], 12);
    let at_truth = simulated_log_likelihood(&obs, &truth, 100, 3).unwrap();
    let perturbed = SupplierCoefs { time: truth.time + 0.5, ..truth };
    assert!(at_truth >= simulated_log_likelihood(&obs, &perturbed, 100, 3).unwrap());
}

#[test]
fn mixed_data_estimates_the_error_scale() {
    let truth = SupplierCoefs { time: -1.0, prod: 0.5, sigma_or: 1.5, ..Default::default() };
    let obs = logit_data(3_000, 10, &truth, &[FunctionType::Office, FunctionType::Factory], 13);
    let start = SupplierCoefs { sigma_or: 0.5, ..Default::default() };
    let fit = estimate_mixed_logit(&obs, &start, &SmlOptions { seed: 2, ..Default::default() }).unwrap();
    assert!(fit.free[4] && fit.draws == 100);
    assert!((fit.coefs.time + 1.0).abs() < 3.0 * fit.std_errors[0] + 0.05, "{:?} {:?}", fit.coefs, fit.std_errors);
    assert!(fit.coefs.sigma_or >= 0.0);
}

#[test]
fn uninformative_choices_give_an_insignificant_time_coefficient() {
    let truth = SupplierCoefs::default();
    let obs = logit_data(2_000, 10, &truth, &[FunctionType::Factory], 14);
    let fit = estimate_mixed_logit(&obs, &SupplierCoefs::default(), &SmlOptions::default()).unwrap();
    assert!(fit.coefs.time.abs() <= 2.0 * fit.std_errors[0], "{} ± {}", fit.coefs.time, fit.std_errors[0]);
}

#[test]
fn constant_attributes_leave_the_coefficients_fixed() {
    let alt = AltAttributes { time_s: 300.0, production: 5.0, demand: 2.0, function: FunctionType::Factory };
    let obs: Vec<ChoiceObservation> = (0..40)
        .map(|i| ChoiceObservation {
            epg: epg(FunctionType::Factory),
            alternatives: vec![alt; 5],
            suppliers: (0..5).collect(),
            chosen: i % 5,
            short: false,
        })
        .collect();
    let start = SupplierCoefs { time: -0.7, ..Default::default() };
    let fit = estimate_mixed_logit(&obs, &start, &SmlOptions::default()).unwrap();
    assert_eq!(fit.free, [false; 7]);
    assert_eq!(fit.coefs, start);
    assert!((fit.log_likelihood - 40.0 * 0.2f64.ln()).abs() < 1e-9);
}

#[test]
fn separated_choices_keep_previous_parameters() {
    // the farthest supplier is always chosen, so the likelihood grows without bound in the time coefficient
    let obs: Vec<ChoiceObservation> = (0..40)
        .map(|i| ChoiceObservation {
            epg: epg(FunctionType::Factory),
            alternatives: (0..5)
                .map(|a| AltAttributes {
                    time_s: 100.0 * (a + 1 + i % 3) as f64,
                    production: 5.0,
                    demand: 2.0,
                    function: FunctionType::Factory,
                })
                .collect(),
            suppliers: (0..5).collect(),
            chosen: 4,
            short: false,
        })
        .collect();
    let kept = SupplierCoefs { time: -1.0, ..Default::default() };
    assert!(matches!(estimate_mixed_logit(&obs, &kept, &SmlOptions::default()), Err(Error::Separation(_))));
    let mut previous = SupplierChoiceParams::default();
    previous.epgs.insert(epg(FunctionType::Factory), kept);
    let (out, reports, fits) = reestimate_supplier_model(&obs, &previous, &SmlOptions::default(), 30);
    assert_eq!(out.epgs[&epg(FunctionType::Factory)], kept);
    assert_eq!(reports[0].status, BlockStatus::Failed);
    assert!(fits.is_empty());
}

#[test]
fn starved_pair_groups_keep_previous_parameters() {
    let truth = SupplierCoefs { time: -1.0, ..Default::default() };
    let mut obs = logit_data(200, 10, &truth, &[FunctionType::Factory], 15);
    obs.truncate(10);
    let mut previous = SupplierChoiceParams::default();
    let kept = SupplierCoefs { time: -2.0, ..Default::default() };
    previous.epgs.insert(epg(FunctionType::Factory), kept);
    let (out, reports, fits) = reestimate_supplier_model(&obs, &previous, &SmlOptions::default(), 30);
    assert_eq!(out.epgs[&epg(FunctionType::Factory)], kept);
    assert_eq!(reports[0].status, BlockStatus::InsufficientObservations);
    assert!(fits.is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn likelihood_ignores_alternative_order(seed in any::<u64>(), shuffle_seed in any::<u64>()) {
        let truth = SupplierCoefs { time: -1.0, prod: 0.5, sigma_or: 0.8, sigma_dws: 0.4, ..Default::default() };
        let obs = logit_data(20, 6, &truth, &[FunctionType::Office, FunctionType::Factory, FunctionType::LogisticsFacility], seed);
        let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
        let shuffled: Vec<ChoiceObservation> = obs
            .iter()
            .map(|o| {
                let mut order: Vec<usize> = (0..o.alternatives.len()).collect();
                rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
                ChoiceObservation {
                    alternatives: order.iter().map(|&j| o.alternatives[j]).collect(),
                    suppliers: order.iter().map(|&j| o.suppliers[j]).collect(),
                    chosen: order.iter().position(|&j| j == o.chosen).unwrap(),
                    ..o.clone()
                }
            })
            .collect();
        let a = simulated_log_likelihood(&obs, &truth, 50, 9).unwrap();
        let b = simulated_log_likelihood(&shuffled, &truth, 50, 9).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
    }
}
