//! End-to-end evaluation: run the pipeline over a labeled dataset and
//! aggregate accuracy, token, call, and timing statistics into a report.

use serde::Serialize;

use super::dataset::DatasetRecord;
use super::HarnessError;
use crate::agents::Roster;
use crate::discussion::{DiscussionConfig, Pipeline, PipelineError};
use crate::geo::{
    accuracy, box_distance_km, coverage_consistency, geocode, EvalOutcome, GazetteerEntry,
};
use crate::graph::{CollaborationGraph, ElectionMode, ElectionVector};
use crate::learn::{FeatureExtractor, SelectionModel};
use crate::seeding::rng_stream;

/// Per-sample verdict row of the report. `distance_km` is null when the
/// final answer could not be geocoded.
#[derive(Debug, Clone, Serialize)]
pub struct SampleReport {
    pub id: String,
    pub answer: String,
    pub confidence: f64,
    pub correct: bool,
    pub distance_km: Option<f64>,
    pub consensus: bool,
    pub rounds_used: u32,
    pub fallback_used: bool,
    pub elected: Vec<usize>,
    pub agent_calls: u64,
    pub tokens_estimate: u64,
    pub elapsed_ms: u64,
    pub failed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub accuracy: f64,
    /// Exact sum of per-verdict token estimates.
    pub total_tokens: u64,
    pub avg_tokens: f64,
    pub avg_agent_calls: f64,
    pub rt_avg_ms: f64,
    /// Exact nearest-rank 50th percentile of per-sample elapsed times.
    pub rt_med_ms: f64,
    pub coverage: Option<f64>,
    pub consistency: Option<f64>,
    pub samples: Vec<SampleReport>,
    pub config_echo: serde_json::Value,
    pub notes: Vec<String>,
}

pub struct EvalOptions<'a> {
    pub discussion: DiscussionConfig,
    pub image_token_cost: u64,
    pub seed: u64,
    pub model: Option<(&'a SelectionModel, &'a dyn FeatureExtractor)>,
    pub config_echo: serde_json::Value,
    /// When set, each sample's audit log is written to
    /// `<dir>/<sample_id>.jsonl` (bit-stable at fixed seeds).
    pub log_dir: Option<std::path::PathBuf>,
}

/// Evaluate the pipeline on `test_records`. `train_records` only feeds
/// the coverage/consistency location-overlap metrics and may be empty.
pub fn evaluate(
    roster: &Roster,
    gazetteer: &[GazetteerEntry],
    opts: &EvalOptions,
    train_records: &[DatasetRecord],
    test_records: &[DatasetRecord],
) -> Result<RunReport, HarnessError> {
    if test_records.is_empty() {
        return Err(HarnessError::Validation("empty test set".into()));
    }
    if let Some((model, extractor)) = &opts.model {
        if model.n != roster.len() {
            return Err(HarnessError::Validation(format!(
                "model was trained for {} agents, roster has {}",
                model.n,
                roster.len()
            )));
        }
        if extractor.dim() != model.d_k {
            return Err(HarnessError::Validation(format!(
                "extractor dim {} != model d_k {}",
                extractor.dim(),
                model.d_k
            )));
        }
    }
    let mut pipeline = Pipeline::new(roster, gazetteer, opts.discussion.clone());
    pipeline.image_token_cost = opts.image_token_cost;
    let n = roster.len();

    let mut samples = Vec::with_capacity(test_records.len());
    let mut outcomes = Vec::with_capacity(test_records.len());
    for record in test_records {
        let image = record.image_ref();
        let sample_seed: u64 = {
            use rand::Rng;
            rng_stream(opts.seed, "sample", &[record.id.as_bytes()]).gen()
        };
        let (lst, graph) = match &opts.model {
            Some((model, extractor)) => {
                let x = extractor
                    .extract(&image)
                    .map_err(|e| HarnessError::Runtime(e.to_string()))?;
                let fwd = model
                    .forward(&x)
                    .map_err(|e| HarnessError::Runtime(e.to_string()))?;
                let lst = ElectionVector::new(fwd.lst.to_vec())
                    .map_err(|e| HarnessError::Runtime(e.to_string()))?;
                let weights = (0..n)
                    .map(|i| (0..n).map(|j| fwd.a[[i, j]]).collect())
                    .collect();
                let graph = CollaborationGraph::from_weights(weights)
                    .map_err(|e| HarnessError::Runtime(e.to_string()))?;
                (lst, graph)
            }
            None => (ElectionVector::uniform(n), CollaborationGraph::fresh(n)),
        };
        match pipeline.run(&image, &lst, &graph, ElectionMode::TopK, sample_seed) {
            Ok(outcome) => {
                if let Some(dir) = &opts.log_dir {
                    std::fs::create_dir_all(dir)
                        .and_then(|()| {
                            std::fs::write(
                                dir.join(format!("{}.jsonl", record.id)),
                                outcome.log.to_jsonl(),
                            )
                        })
                        .map_err(|e| HarnessError::Io(format!("audit log: {e}")))?;
                }
                let answer = &outcome.verdict.answer;
                let distance = geocode(&answer.location_text, gazetteer)
                    .ok()
                    .map(|b| box_distance_km(&b, &record.truth_box));
                let correct = distance.is_some_and(|d| d <= opts.discussion.th_km);
                outcomes.push(EvalOutcome {
                    sample_id: record.id.clone(),
                    distance_km: distance.unwrap_or(f64::INFINITY),
                    correct,
                });
                samples.push(SampleReport {
                    id: record.id.clone(),
                    answer: answer.location_text.clone(),
                    confidence: answer.confidence_pct,
                    correct,
                    distance_km: distance,
                    consensus: outcome.verdict.consensus,
                    rounds_used: outcome.verdict.rounds_used,
                    fallback_used: outcome.verdict.fallback_used,
                    elected: outcome.answerers.iter().map(|a| a.agent_index).collect(),
                    agent_calls: outcome.verdict.agent_calls,
                    tokens_estimate: outcome.verdict.tokens_estimate,
                    elapsed_ms: outcome.verdict.elapsed_ms,
                    failed: false,
                });
            }
            Err(PipelineError::AllAgentsUnavailable(_)) => {
                // Scored incorrect and flagged; the run continues.
                outcomes.push(EvalOutcome {
                    sample_id: record.id.clone(),
                    distance_km: f64::INFINITY,
                    correct: false,
                });
                samples.push(SampleReport {
                    id: record.id.clone(),
                    answer: String::new(),
                    confidence: 0.0,
                    correct: false,
                    distance_km: None,
                    consensus: false,
                    rounds_used: 0,
                    fallback_used: false,
                    elected: Vec::new(),
                    agent_calls: 0,
                    tokens_estimate: 0,
                    elapsed_ms: 0,
                    failed: true,
                });
            }
            Err(other) => return Err(HarnessError::Runtime(other.to_string())),
        }
    }

    let locations = |records: &[DatasetRecord]| {
        records
            .iter()
            .map(|r| r.region_key.clone())
            .collect::<std::collections::BTreeSet<String>>()
    };
    let (coverage, consistency) = if train_records.is_empty() {
        (None, None)
    } else {
        let (cov, cons) = coverage_consistency(&locations(train_records), &locations(test_records))
            .map_err(|e| HarnessError::Validation(e.to_string()))?;
        (Some(cov), Some(cons))
    };

    let count = samples.len() as f64;
    let mut elapsed: Vec<u64> = samples.iter().map(|s| s.elapsed_ms).collect();
    elapsed.sort_unstable();
    let rt_med_ms = elapsed[(elapsed.len().div_ceil(2)) - 1] as f64;
    let total_tokens: u64 = samples.iter().map(|s| s.tokens_estimate).sum();
    Ok(RunReport {
        accuracy: accuracy(&outcomes).map_err(|e| HarnessError::Runtime(e.to_string()))?,
        total_tokens,
        avg_tokens: total_tokens as f64 / count,
        avg_agent_calls: samples.iter().map(|s| s.agent_calls).sum::<u64>() as f64 / count,
        rt_avg_ms: samples.iter().map(|s| s.elapsed_ms).sum::<u64>() as f64 / count,
        rt_med_ms,
        coverage,
        consistency,
        samples,
        config_echo: opts.config_echo.clone(),
        notes: vec![
            "response times cover orchestration plus simulated-agent latency only; \
             they are not comparable to wall-clock LVLM deployments"
                .to_string(),
        ],
    })
}

/// Accuracy of one agent answering alone (no protocol), the ablation
/// baseline the swarm must beat.
pub fn solo_accuracy(
    roster: &Roster,
    agent_index: usize,
    records: &[DatasetRecord],
    retrieval_enabled: bool,
    th_km: f64,
    gazetteer: &[GazetteerEntry],
) -> Result<f64, HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::Validation("empty record set".into()));
    }
    if agent_index >= roster.len() {
        return Err(HarnessError::Validation(format!(
            "agent index {agent_index} outside roster of {}",
            roster.len()
        )));
    }
    let agent = roster.get(agent_index);
    let mut correct = 0usize;
    for record in records {
        let image = record.image_ref();
        if let Ok(ans) = agent.answer(&image, retrieval_enabled) {
            let ok = geocode(&ans.location_text, gazetteer)
                .map(|b| box_distance_km(&b, &record.truth_box) <= th_km)
                .unwrap_or(false);
            if ok {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / records.len() as f64)
}

#[derive(Debug, Clone, Serialize)]
pub struct DebateReport {
    pub accuracy: f64,
    pub avg_agent_calls: f64,
    pub avg_tokens: f64,
}

/// Evaluate the all-agents-debate baseline on the same records.
pub fn evaluate_debate(
    roster: &Roster,
    gazetteer: &[GazetteerEntry],
    discussion: &DiscussionConfig,
    image_token_cost: u64,
    records: &[DatasetRecord],
    seed: u64,
) -> Result<DebateReport, HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::Validation("empty record set".into()));
    }
    let mut pipeline = Pipeline::new(roster, gazetteer, discussion.clone());
    pipeline.image_token_cost = image_token_cost;
    let mut correct = 0usize;
    let mut calls = 0u64;
    let mut tokens = 0u64;
    for record in records {
        let image = record.image_ref();
        let sample_seed: u64 = {
            use rand::Rng;
            rng_stream(seed, "sample", &[record.id.as_bytes()]).gen()
        };
        let outcome = pipeline
            .run_debate(&image, sample_seed)
            .map_err(|e| HarnessError::Runtime(e.to_string()))?;
        calls += outcome.verdict.agent_calls;
        tokens += outcome.verdict.tokens_estimate;
        let ok = geocode(&outcome.verdict.answer.location_text, gazetteer)
            .map(|b| box_distance_km(&b, &record.truth_box) <= discussion.th_km)
            .unwrap_or(false);
        if ok {
            correct += 1;
        }
    }
    let count = records.len() as f64;
    Ok(DebateReport {
        accuracy: correct as f64 / count,
        avg_agent_calls: calls as f64 / count,
        avg_tokens: tokens as f64 / count,
    })
}
