//! Evaluation-harness behavior over controlled rosters.

mod common;

use std::sync::Arc;

use swarmgeo::agents::{AgentProfile, SimWorld};
use swarmgeo::discussion::DiscussionConfig;
use swarmgeo::harness::{
    build_roster, evaluate, split_dataset, synth_world, AgentSpec, EvalOptions, RosterSpec,
};

fn world_pieces(
    seed: u64,
) -> (
    swarmgeo::harness::SynthWorld,
    Arc<SimWorld>,
    Vec<swarmgeo::harness::DatasetRecord>,
    Vec<swarmgeo::harness::DatasetRecord>,
) {
    let world = synth_world(4, 3, 60, seed).unwrap();
    let sim = Arc::new(SimWorld::from_gazetteer(
        world.gazetteer.clone(),
        50.0,
        0.15,
    ));
    let (train, test) = split_dataset(&world.dataset, 0.8, seed);
    (world, sim, train, test)
}

fn uniform_roster(
    sim: Arc<SimWorld>,
    regions: Vec<String>,
    accuracy: f64,
) -> swarmgeo::agents::Roster {
    let spec = RosterSpec {
        agents: (0..4)
            .map(|i| AgentSpec {
                name: format!("agent-{i}"),
                profile: Some(AgentProfile {
                    home_regions: regions.clone(),
                    home_accuracy: accuracy,
                    away_accuracy: accuracy,
                    seed: 50 + i as u64,
                    persuadability: 0.0,
                }),
                endpoint: None,
                timeout_s: None,
            })
            .collect(),
    };
    build_roster(&spec, sim).unwrap()
}

fn opts(seed: u64) -> EvalOptions<'static> {
    EvalOptions {
        discussion: DiscussionConfig {
            k: 2,
            r: 1,
            z: 4,
            th_km: 50.0,
            retrieval_enabled: false,
        },
        image_token_cost: 1000,
        seed,
        model: None,
        config_echo: serde_json::Value::Null,
        log_dir: None,
    }
}

#[test]
fn oracle_roster_scores_perfect_accuracy() {
    let (world, sim, train, test) = world_pieces(11);
    let all_regions: Vec<String> = world
        .dataset
        .iter()
        .map(|r| r.region_key.clone())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let roster = uniform_roster(sim, all_regions, 1.0);
    let report = evaluate(&roster, &world.gazetteer, &opts(11), &train, &test).unwrap();
    assert_eq!(report.accuracy, 1.0);
}

#[test]
fn always_wrong_roster_scores_zero() {
    let (world, sim, train, test) = world_pieces(12);
    let roster = uniform_roster(sim, vec![], 0.0);
    let report = evaluate(&roster, &world.gazetteer, &opts(12), &train, &test).unwrap();
    assert_eq!(report.accuracy, 0.0);
}

#[test]
fn report_token_total_is_exact_sum_of_verdicts() {
    let (world, sim, train, test) = world_pieces(13);
    let roster = uniform_roster(sim, vec![], 0.5);
    let report = evaluate(&roster, &world.gazetteer, &opts(13), &train, &test).unwrap();
    let sum: u64 = report.samples.iter().map(|s| s.tokens_estimate).sum();
    assert_eq!(report.total_tokens, sum);
    assert_eq!(report.avg_tokens, sum as f64 / report.samples.len() as f64);
}

#[test]
fn coverage_consistency_match_region_sets() {
    let (world, sim, train, test) = world_pieces(14);
    let roster = uniform_roster(sim, vec![], 0.5);
    let report = evaluate(&roster, &world.gazetteer, &opts(14), &train, &test).unwrap();
    let regions = |records: &[swarmgeo::harness::DatasetRecord]| {
        records
            .iter()
            .map(|r| r.region_key.clone())
            .collect::<std::collections::BTreeSet<_>>()
    };
    let (cov, cons) =
        swarmgeo::geo::coverage_consistency(&regions(&train), &regions(&test)).unwrap();
    assert_eq!(report.coverage, Some(cov));
    assert_eq!(report.consistency, Some(cons));
}

#[test]
fn median_is_nearest_rank_percentile() {
    let (world, sim, train, test) = world_pieces(15);
    let roster = uniform_roster(sim, vec![], 0.5);
    let report = evaluate(&roster, &world.gazetteer, &opts(15), &train, &test).unwrap();
    let mut elapsed: Vec<u64> = report.samples.iter().map(|s| s.elapsed_ms).collect();
    elapsed.sort_unstable();
    let expect = elapsed[elapsed.len().div_ceil(2) - 1] as f64;
    assert_eq!(report.rt_med_ms, expect);
}
