//! Per-image training targets, estimated by running the discussion
//! pipeline for L rounds with Bernoulli agent election.
//!
//! The election vector starts at 1/2 everywhere (the non-participation
//! value) and the collaboration graph starts fully connected with unit
//! weights. Each round elects agents with their current probabilities,
//! judges every answer agent's final reply against the truth box, writes
//! 1/0 into its election entry, and applies the streak-attenuated link
//! update toward its reviewers. Entries of agents that never answer stay
//! at 1/2; streaks and the graph persist across all L rounds, so the
//! round-L values are the targets.

use ndarray::{Array1, Array2};

use super::{LearnError, MAX_GEODESIC_KM};
use crate::agents::{ImageRef, Roster};
use crate::discussion::{DiscussionConfig, Pipeline, PipelineError};
use crate::geo::{box_distance_km, geocode, GazetteerEntry, GeoBox};
use crate::graph::{
    election_target, update_links, CollaborationGraph, ElectionMode, ElectionVector, StreakState,
};
use crate::seeding::rng_stream;

/// What the model is trained toward for one image.
#[derive(Debug, Clone)]
pub struct TrainTargets {
    /// Entries in {0, 1/2, 1} exactly.
    pub lst_hat: Array1<f64>,
    /// Off-diagonal entries in (0, 1], zero diagonal; each entry is a
    /// product of link-update factors starting from 1.
    pub a_hat: Array2<f64>,
}

/// Targets plus the round-L evidence the objective's distance term and
/// training-time accuracy reporting need.
#[derive(Debug, Clone)]
pub struct TargetEstimate {
    pub targets: TrainTargets,
    /// Round-L distance per agent; `Some` exactly for agents that
    /// answered in round L. Ungeocodable answers carry the
    /// half-circumference bound.
    pub final_distances: Vec<Option<f64>>,
    /// Whether the round-L concluded verdict was within threshold.
    pub final_verdict_correct: bool,
    /// Rounds in which each agent answered, for diagnostics.
    pub rounds_participated: Vec<u32>,
    /// Rounds whose pipeline failed outright (all elected unavailable);
    /// they contribute non-participation for every agent.
    pub failed_rounds: u32,
}

/// Estimate optimal election probabilities and link weights for one
/// image; see the module docs for the procedure.
pub fn estimate_targets(
    roster: &Roster,
    gazetteer: &[GazetteerEntry],
    image: &ImageRef,
    truth_box: &GeoBox,
    l_rounds: u32,
    cfg: &DiscussionConfig,
    seed: u64,
) -> Result<TrainTargets, LearnError> {
    estimate_targets_detailed(roster, gazetteer, image, truth_box, l_rounds, cfg, seed)
        .map(|e| e.targets)
}

pub fn estimate_targets_detailed(
    roster: &Roster,
    gazetteer: &[GazetteerEntry],
    image: &ImageRef,
    truth_box: &GeoBox,
    l_rounds: u32,
    cfg: &DiscussionConfig,
    seed: u64,
) -> Result<TargetEstimate, LearnError> {
    let n = roster.len();
    if n == 0 {
        return Err(LearnError::Shape("empty roster".into()));
    }
    let pipeline = Pipeline::new(roster, gazetteer, cfg.clone());
    let mut lst: Vec<f64> = vec![0.5; n];
    let mut graph = CollaborationGraph::fresh(n);
    let mut streaks = StreakState::new(n);
    let mut final_distances: Vec<Option<f64>> = vec![None; n];
    let mut final_verdict_correct = false;
    let mut rounds_participated = vec![0u32; n];
    let mut failed_rounds = 0u32;

    for round in 1..=l_rounds {
        let election =
            ElectionVector::new(lst.clone()).map_err(|e| LearnError::Shape(e.to_string()))?;
        let round_seed = round_seed(seed, round);
        let outcome = match pipeline.run(
            image,
            &election,
            &graph,
            ElectionMode::Bernoulli,
            round_seed,
        ) {
            Ok(o) => o,
            Err(PipelineError::AllAgentsUnavailable(_)) => {
                failed_rounds += 1;
                continue;
            }
            Err(other) => return Err(LearnError::Pipeline(other)),
        };
        let last = round == l_rounds;
        if last {
            let verdict_d =
                distance_to_truth(&outcome.verdict.answer.location_text, truth_box, gazetteer);
            final_verdict_correct = verdict_d <= cfg.th_km;
        }
        for rec in &outcome.answerers {
            let Some(answer) = &rec.final_answer else {
                continue;
            };
            let d = distance_to_truth(&answer.location_text, truth_box, gazetteer);
            let correct = d <= cfg.th_km;
            lst[rec.agent_index] = election_target(true, correct);
            update_links(
                &mut graph,
                rec.agent_index,
                &rec.reviewers,
                correct,
                &mut streaks,
            );
            rounds_participated[rec.agent_index] += 1;
            if last {
                final_distances[rec.agent_index] = Some(d);
            }
        }
    }

    let a_hat = Array2::from_shape_fn((n, n), |(i, j)| graph.weight(i, j));
    Ok(TargetEstimate {
        targets: TrainTargets {
            lst_hat: Array1::from_vec(lst),
            a_hat,
        },
        final_distances,
        final_verdict_correct,
        rounds_participated,
        failed_rounds,
    })
}

fn round_seed(seed: u64, round: u32) -> u64 {
    use rand::Rng;
    rng_stream(seed, "target-round", &[&round.to_le_bytes()]).gen()
}

/// Geodesic distance of a free-text reply to the truth box; replies
/// that do not geocode score the maximum possible distance.
pub fn distance_to_truth(text: &str, truth_box: &GeoBox, gazetteer: &[GazetteerEntry]) -> f64 {
    match geocode(text, gazetteer) {
        Ok(b) => box_distance_km(&b, truth_box),
        Err(_) => MAX_GEODESIC_KM,
    }
}
