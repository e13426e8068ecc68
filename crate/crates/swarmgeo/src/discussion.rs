//! The three-stage protocol orchestrator.
//!
//! Stage 1 elects answer agents and collects their primary analyses.
//! Stage 2 picks reviewers for each answerer by a weighted random walk,
//! gathers comments, and has each answerer summarize. Stage 3 runs up
//! to `z` rounds of free discussion over a shared dialog history and
//! concludes by the minority-majority rule, early-stopping as soon as
//! one reply cluster holds a strict majority. Every run produces a
//! verdict with full call/token accounting and a bit-stable audit log.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentError, ImageRef, LocationAnswer, ReviewComment, Roster, Utterance};
use crate::consensus::{best_member, cluster, Position};
use crate::geo::GazetteerEntry;
use crate::graph::{elect, select_reviewers, CollaborationGraph, ElectionMode, ElectionVector};
use crate::seeding::rng_stream;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("pipeline failed: all elected agents unavailable for image {0}")]
    AllAgentsUnavailable(String),
    #[error("configuration: {0}")]
    Config(String),
}

/// Protocol knobs. `k` answer agents, `r` reviewers per answerer, at
/// most `z` free-discussion rounds, geodesic agreement threshold
/// `th_km`, and whether agents may consult the retrieval provider.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscussionConfig {
    pub k: usize,
    pub r: usize,
    pub z: u32,
    pub th_km: f64,
    pub retrieval_enabled: bool,
}

impl Default for DiscussionConfig {
    fn default() -> Self {
        Self {
            k: 2,
            r: 2,
            z: 10,
            th_km: 50.0,
            retrieval_enabled: true,
        }
    }
}

impl DiscussionConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.k < 1 {
            return Err(PipelineError::Config("k must be >= 1".into()));
        }
        if self.z < 1 {
            return Err(PipelineError::Config("z must be >= 1".into()));
        }
        if self.th_km.is_nan() || self.th_km <= 0.0 {
            return Err(PipelineError::Config("th must be positive".into()));
        }
        Ok(())
    }
}

/// Append-only, totally ordered dialog history (`diag`).
#[derive(Debug, Default, Clone)]
pub struct DialogHistory {
    entries: Vec<Utterance>,
}

impl DialogHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[Utterance] {
        &self.entries
    }

    /// Append one utterance; sequence numbers are contiguous from 1 and
    /// each speaker may appear at most once per round.
    pub fn append(
        &mut self,
        round: u32,
        speaker: crate::agents::AgentId,
        answer: LocationAnswer,
    ) -> Result<u64, String> {
        if self
            .entries
            .iter()
            .any(|u| u.round == round && u.speaker.index == speaker.index)
        {
            return Err(format!(
                "speaker {} already spoke in round {round}",
                speaker.name
            ));
        }
        let seq = self.entries.len() as u64 + 1;
        self.entries.push(Utterance {
            seq,
            round,
            speaker,
            answer,
        });
        Ok(seq)
    }
}

/// The final product of one pipeline run.
#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub answer: LocationAnswer,
    pub consensus: bool,
    pub rounds_used: u32,
    pub fallback_used: bool,
    pub agent_calls: u64,
    pub tokens_estimate: u64,
    pub elapsed_ms: u64,
}

/// One accounted message (a prompt sent to an agent or its reply).
#[derive(Debug, Clone, Serialize)]
pub struct MessageRecord {
    pub chars: u64,
}

/// Everything that crossed an agent boundary during a run, for exact
/// token accounting. Only successful calls contribute; a call that
/// failed with `Unavailable` is skipped entirely.
#[derive(Debug, Clone, Serialize)]
pub struct Transcript {
    pub messages: Vec<MessageRecord>,
    pub image_sends: u64,
    pub image_token_cost: u64,
}

impl Transcript {
    pub fn new(image_token_cost: u64) -> Self {
        Self {
            messages: Vec::new(),
            image_sends: 0,
            image_token_cost,
        }
    }

    fn push_exchange(&mut self, prompt: &str, reply: &str, sends_image: bool) {
        self.messages.push(MessageRecord {
            chars: prompt.chars().count() as u64,
        });
        self.messages.push(MessageRecord {
            chars: reply.chars().count() as u64,
        });
        if sends_image {
            self.image_sends += 1;
        }
    }
}

/// Word-piece estimate over a transcript: ceil(chars / 4) per message
/// plus a flat per-image constant for every image transmission.
pub fn account_tokens(transcript: &Transcript) -> u64 {
    let text: u64 = transcript
        .messages
        .iter()
        .map(|m| m.chars.div_ceil(4))
        .sum();
    text + transcript.image_token_cost * transcript.image_sends
}

/// One audit-log event; the JSONL run log is bit-stable at fixed seeds.
#[derive(Debug, Clone, Serialize)]
pub struct AuditEvent {
    pub seq: u64,
    pub stage: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agent: Option<String>,
    pub kind: &'static str,
    pub payload: serde_json::Value,
}

#[derive(Debug, Default, Clone, Serialize)]
pub struct RunLog {
    pub events: Vec<AuditEvent>,
}

impl RunLog {
    fn push(
        &mut self,
        stage: &'static str,
        agent: Option<String>,
        kind: &'static str,
        payload: serde_json::Value,
    ) {
        let seq = self.events.len() as u64 + 1;
        self.events.push(AuditEvent {
            seq,
            stage,
            agent,
            kind,
            payload,
        });
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("audit events serialize"));
            out.push('\n');
        }
        out
    }
}

/// Per-answerer trace of a run, consumed by training-target estimation.
#[derive(Debug, Clone, Serialize)]
pub struct AnswererRecord {
    pub agent_index: usize,
    pub reviewers: Vec<usize>,
    pub stage1: Option<LocationAnswer>,
    pub summarized: Option<LocationAnswer>,
    /// The agent's position after Stage 3 (its last utterance).
    pub final_answer: Option<LocationAnswer>,
}

#[derive(Debug, Serialize)]
pub struct RunOutcome {
    pub verdict: Verdict,
    pub answerers: Vec<AnswererRecord>,
    pub transcript: Transcript,
    #[serde(skip)]
    pub log: RunLog,
    pub dialog: Vec<Utterance>,
}

// Canonical prompt builders. These mirror what the HTTP transport puts
// on the wire so token accounting is backend-independent.

fn answer_prompt(image: &ImageRef, retrieval: bool) -> String {
    format!(
        "role: answer\nimage: {}\nretrieval: {}\nformat: location/confidence/explanation",
        image.id,
        if retrieval { "on" } else { "off" }
    )
}

fn review_prompt(image: &ImageRef, subject: &LocationAnswer) -> String {
    format!(
        "role: review\nimage: {}\nsubject:\n{}",
        image.id,
        subject.canonical_text()
    )
}

fn summarize_prompt(own: &LocationAnswer, reviews: &[ReviewComment]) -> String {
    let mut s = format!("role: summarize\nown:\n{}", own.canonical_text());
    for r in reviews {
        s.push('\n');
        s.push_str(&r.canonical_text());
    }
    s
}

fn discuss_prompt(snapshot: &[Utterance], own: &LocationAnswer) -> String {
    // Context economy: only the freshest position per speaker is sent.
    let mut latest: std::collections::BTreeMap<usize, &Utterance> = Default::default();
    for u in snapshot {
        let keep = latest
            .get(&u.speaker.index)
            .is_none_or(|prev| u.seq > prev.seq);
        if keep {
            latest.insert(u.speaker.index, u);
        }
    }
    let mut s = String::from("role: discuss");
    for u in latest.values() {
        s.push_str(&format!(
            "\nspeaker {}: {}",
            u.speaker.name,
            u.answer.canonical_text()
        ));
    }
    s.push_str(&format!("\nyour position:\n{}", own.canonical_text()));
    s
}

struct Participant {
    roster_index: usize,
    current: LocationAnswer,
    last_seq: u64,
}

/// The orchestrator: a roster, the gazetteer used for agreement
/// clustering, the protocol config, and the flat token cost charged per
/// image transmission.
pub struct Pipeline<'a> {
    pub roster: &'a Roster,
    pub gazetteer: &'a [GazetteerEntry],
    pub cfg: DiscussionConfig,
    pub image_token_cost: u64,
}

pub const DEFAULT_IMAGE_TOKEN_COST: u64 = 1000;

impl<'a> Pipeline<'a> {
    pub fn new(roster: &'a Roster, gazetteer: &'a [GazetteerEntry], cfg: DiscussionConfig) -> Self {
        Self {
            roster,
            gazetteer,
            cfg,
            image_token_cost: DEFAULT_IMAGE_TOKEN_COST,
        }
    }

    /// Run the full three-stage protocol on one image.
    pub fn run(
        &self,
        image: &ImageRef,
        lst: &ElectionVector,
        g: &CollaborationGraph,
        mode: ElectionMode,
        seed: u64,
    ) -> Result<RunOutcome, PipelineError> {
        let started = Instant::now();
        self.cfg.validate()?;
        let n = self.roster.len();
        if n == 0 {
            return Err(PipelineError::Config("roster is empty".into()));
        }
        if lst.len() != n || g.n() != n {
            return Err(PipelineError::Config(format!(
                "sizes disagree: roster {n}, lst {}, graph {}",
                lst.len(),
                g.n()
            )));
        }

        let mut log = RunLog::default();
        let mut transcript = Transcript::new(self.image_token_cost);
        let mut agent_calls: u64 = 0;

        // Stage 1: election and primary answers.
        let mut rng = rng_stream(seed, "elect", &[image.id.as_bytes()]);
        let elected = elect(lst, self.cfg.k.min(n), mode, &mut rng);
        log.push(
            "stage1",
            None,
            "elect",
            serde_json::json!({ "elected": elected, "mode": mode }),
        );

        let mut answerers: Vec<AnswererRecord> = elected
            .iter()
            .map(|&i| AnswererRecord {
                agent_index: i,
                reviewers: Vec::new(),
                stage1: None,
                summarized: None,
                final_answer: None,
            })
            .collect();

        for rec in &mut answerers {
            let backend = self.roster.get(rec.agent_index);
            let prompt = answer_prompt(image, self.cfg.retrieval_enabled);
            match backend.answer(image, self.cfg.retrieval_enabled) {
                Ok(ans) => {
                    agent_calls += 1;
                    transcript.push_exchange(&prompt, &ans.canonical_text(), true);
                    log.push(
                        "stage1",
                        Some(backend.id().name.clone()),
                        "answer",
                        serde_json::json!({ "answer": ans }),
                    );
                    rec.stage1 = Some(ans);
                }
                Err(AgentError::Unavailable(why)) | Err(AgentError::InvalidAnswer(why)) => {
                    log.push(
                        "stage1",
                        Some(backend.id().name.clone()),
                        "unavailable",
                        serde_json::json!({ "reason": why }),
                    );
                }
            }
        }
        if answerers.iter().all(|r| r.stage1.is_none()) {
            return Err(PipelineError::AllAgentsUnavailable(image.id.clone()));
        }

        // Stage 2: reviewer walks, reviews, summaries.
        let r_eff = self.cfg.r.min(n.saturating_sub(1));
        for rec in &mut answerers {
            let Some(stage1) = rec.stage1.clone() else {
                continue;
            };
            let backend = self.roster.get(rec.agent_index);
            let mut comments: Vec<ReviewComment> = Vec::new();
            if r_eff > 0 {
                let mut walk_rng = rng_stream(
                    seed,
                    "walk",
                    &[image.id.as_bytes(), &(rec.agent_index as u64).to_le_bytes()],
                );
                let selection = select_reviewers(g, rec.agent_index, r_eff, &mut walk_rng)
                    .map_err(|e| PipelineError::Config(e.to_string()))?;
                if selection.fallback_used {
                    log.push(
                        "stage2",
                        Some(backend.id().name.clone()),
                        "walk_fallback",
                        serde_json::json!({ "reviewers": selection.reviewers }),
                    );
                }
                rec.reviewers = selection.reviewers.clone();
                log.push(
                    "stage2",
                    Some(backend.id().name.clone()),
                    "reviewers",
                    serde_json::json!({ "reviewers": rec.reviewers }),
                );
                for &j in &rec.reviewers {
                    let reviewer = self.roster.get(j);
                    let prompt = review_prompt(image, &stage1);
                    match reviewer.review(image, &stage1, self.cfg.retrieval_enabled) {
                        Ok(comment) => {
                            agent_calls += 1;
                            transcript.push_exchange(&prompt, &comment.canonical_text(), true);
                            log.push(
                                "stage2",
                                Some(reviewer.id().name.clone()),
                                "review",
                                serde_json::json!({ "comment": comment }),
                            );
                            comments.push(comment);
                        }
                        Err(AgentError::Unavailable(why)) | Err(AgentError::InvalidAnswer(why)) => {
                            log.push(
                                "stage2",
                                Some(reviewer.id().name.clone()),
                                "unavailable",
                                serde_json::json!({ "reason": why }),
                            );
                        }
                    }
                }
            }
            let prompt = summarize_prompt(&stage1, &comments);
            match backend.summarize(image, &stage1, &comments) {
                Ok(summary) => {
                    agent_calls += 1;
                    transcript.push_exchange(&prompt, &summary.canonical_text(), false);
                    log.push(
                        "stage2",
                        Some(backend.id().name.clone()),
                        "summarize",
                        serde_json::json!({ "answer": summary }),
                    );
                    rec.summarized = Some(summary);
                }
                Err(AgentError::Unavailable(why)) | Err(AgentError::InvalidAnswer(why)) => {
                    // The stage-1 answer still stands as this agent's
                    // position; only the refinement call is lost.
                    log.push(
                        "stage2",
                        Some(backend.id().name.clone()),
                        "summarize_failed",
                        serde_json::json!({ "reason": why }),
                    );
                    rec.summarized = Some(stage1);
                }
            }
        }

        // Stage 3: bounded free discussion and conclusion.
        let mut participants: Vec<Participant> = answerers
            .iter()
            .filter_map(|rec| {
                rec.summarized.as_ref().map(|s| Participant {
                    roster_index: rec.agent_index,
                    current: s.clone(),
                    last_seq: 0,
                })
            })
            .collect();
        let first_elected = participants[0].roster_index;
        let mut dialog = DialogHistory::new();
        let (final_answer, consensus, rounds_used, fallback_used) = self.conclude(
            image,
            &mut participants,
            &mut dialog,
            seed,
            &mut transcript,
            &mut agent_calls,
            &mut log,
            first_elected,
        );

        for rec in &mut answerers {
            rec.final_answer = participants
                .iter()
                .find(|p| p.roster_index == rec.agent_index)
                .map(|p| p.current.clone());
        }

        let verdict = Verdict {
            answer: final_answer,
            consensus,
            rounds_used,
            fallback_used,
            agent_calls,
            tokens_estimate: account_tokens(&transcript),
            elapsed_ms: started.elapsed().as_millis() as u64,
        };
        log.push(
            "stage3",
            None,
            "verdict",
            serde_json::json!({
                "answer": verdict.answer,
                "consensus": verdict.consensus,
                "rounds_used": verdict.rounds_used,
                "fallback_used": verdict.fallback_used,
            }),
        );
        Ok(RunOutcome {
            verdict,
            answerers,
            transcript,
            log,
            dialog: dialog.entries().to_vec(),
        })
    }

    /// Stage 3 proper: up to `z` rounds in which every participant
    /// speaks once (in a seeded random order, each reading the dialog
    /// snapshot current at its turn), with the minority-majority early
    /// stop and the first-elected-agent fallback.
    #[allow(clippy::too_many_arguments)]
    fn conclude(
        &self,
        image: &ImageRef,
        participants: &mut [Participant],
        dialog: &mut DialogHistory,
        seed: u64,
        transcript: &mut Transcript,
        agent_calls: &mut u64,
        log: &mut RunLog,
        first_elected: usize,
    ) -> (LocationAnswer, bool, u32, bool) {
        use rand::seq::SliceRandom;

        let count = participants.len();
        let mut rounds_used = 0;
        for round in 1..=self.cfg.z {
            rounds_used = round;
            let mut order: Vec<usize> = (0..count).collect();
            let mut order_rng =
                rng_stream(seed, "order", &[image.id.as_bytes(), &round.to_le_bytes()]);
            order.shuffle(&mut order_rng);
            for &p in &order {
                let backend = self.roster.get(participants[p].roster_index);
                let snapshot = dialog.entries().to_vec();
                let prompt = discuss_prompt(&snapshot, &participants[p].current);
                match backend.discuss(image, &snapshot, &participants[p].current, round) {
                    Ok(next) => {
                        *agent_calls += 1;
                        transcript.push_exchange(&prompt, &next.canonical_text(), false);
                        let seq = dialog
                            .append(round, backend.id().clone(), next.clone())
                            .expect("each participant speaks once per round");
                        log.push(
                            "stage3",
                            Some(backend.id().name.clone()),
                            "utterance",
                            serde_json::json!({ "round": round, "seq": seq, "answer": next }),
                        );
                        participants[p].current = next;
                        participants[p].last_seq = seq;
                    }
                    Err(AgentError::Unavailable(why)) | Err(AgentError::InvalidAnswer(why)) => {
                        log.push(
                            "stage3",
                            Some(backend.id().name.clone()),
                            "unavailable",
                            serde_json::json!({ "round": round, "reason": why }),
                        );
                    }
                }
            }

            let positions = positions_of(participants);
            let clusters = cluster(&positions, self.gazetteer, self.cfg.th_km);
            log.push(
                "stage3",
                None,
                "round_clusters",
                serde_json::json!({
                    "round": round,
                    "clusters": clusters
                        .iter()
                        .map(|c| c.iter().map(|&i| positions[i].member).collect::<Vec<_>>())
                        .collect::<Vec<_>>(),
                }),
            );
            if let Some(majority) = clusters.iter().find(|c| c.len() * 2 > count) {
                let winner = best_member(majority, &positions);
                let answer = participants[winner].current.clone();
                return (answer, true, rounds_used, false);
            }
        }

        // No strict majority within z rounds.
        let positions = positions_of(participants);
        let clusters = cluster(&positions, self.gazetteer, self.cfg.th_km);
        let max_size = clusters.iter().map(Vec::len).max().unwrap_or(1);
        if max_size <= 1 {
            // All clusters are singletons: keep the first elected
            // agent's reply.
            let p = participants
                .iter()
                .position(|p| p.roster_index == first_elected)
                .unwrap_or(0);
            return (participants[p].current.clone(), false, rounds_used, true);
        }
        let candidates: Vec<&Vec<usize>> =
            clusters.iter().filter(|c| c.len() == max_size).collect();
        let chosen = candidates
            .iter()
            .find(|c| {
                c.iter()
                    .any(|&i| participants[i].roster_index == first_elected)
            })
            .copied()
            .unwrap_or_else(|| {
                // Deterministic residual tie-break: earliest position.
                candidates
                    .iter()
                    .min_by_key(|c| c.iter().map(|&i| positions[i].seq).min())
                    .copied()
                    .expect("at least one candidate cluster")
            });
        let winner = best_member(chosen, &positions);
        (
            participants[winner].current.clone(),
            false,
            rounds_used,
            false,
        )
    }

    /// The all-agents-debate baseline: no election, no reviewers, every
    /// agent answers in round 1 and re-discusses in every later round,
    /// the image is retransmitted with every prompt, and there is no
    /// early stop. The final answer is the majority cluster after all
    /// `z` rounds.
    pub fn run_debate(&self, image: &ImageRef, seed: u64) -> Result<RunOutcome, PipelineError> {
        let started = Instant::now();
        self.cfg.validate()?;
        let n = self.roster.len();
        if n == 0 {
            return Err(PipelineError::Config("roster is empty".into()));
        }
        let mut log = RunLog::default();
        let mut transcript = Transcript::new(self.image_token_cost);
        let mut agent_calls: u64 = 0;
        let mut dialog = DialogHistory::new();
        let mut participants: Vec<Participant> = Vec::new();
        let mut answerers: Vec<AnswererRecord> = Vec::new();

        for i in 0..n {
            let backend = self.roster.get(i);
            let prompt = answer_prompt(image, self.cfg.retrieval_enabled);
            match backend.answer(image, self.cfg.retrieval_enabled) {
                Ok(ans) => {
                    agent_calls += 1;
                    transcript.push_exchange(&prompt, &ans.canonical_text(), true);
                    let seq = dialog
                        .append(1, backend.id().clone(), ans.clone())
                        .expect("first utterance per agent");
                    answerers.push(AnswererRecord {
                        agent_index: i,
                        reviewers: Vec::new(),
                        stage1: Some(ans.clone()),
                        summarized: None,
                        final_answer: None,
                    });
                    participants.push(Participant {
                        roster_index: i,
                        current: ans,
                        last_seq: seq,
                    });
                }
                Err(AgentError::Unavailable(why)) | Err(AgentError::InvalidAnswer(why)) => {
                    log.push(
                        "debate",
                        Some(backend.id().name.clone()),
                        "unavailable",
                        serde_json::json!({ "reason": why }),
                    );
                }
            }
        }
        if participants.is_empty() {
            return Err(PipelineError::AllAgentsUnavailable(image.id.clone()));
        }

        use rand::seq::SliceRandom;
        for round in 2..=self.cfg.z {
            let mut order: Vec<usize> = (0..participants.len()).collect();
            let mut order_rng = rng_stream(
                seed,
                "debate-order",
                &[image.id.as_bytes(), &round.to_le_bytes()],
            );
            order.shuffle(&mut order_rng);
            for &p in &order {
                let backend = self.roster.get(participants[p].roster_index);
                let snapshot = dialog.entries().to_vec();
                let prompt = discuss_prompt(&snapshot, &participants[p].current);
                match backend.discuss(image, &snapshot, &participants[p].current, round) {
                    Ok(next) => {
                        agent_calls += 1;
                        // Debate baselines resend the image with every
                        // turn; that is the cost contrast under test.
                        transcript.push_exchange(&prompt, &next.canonical_text(), true);
                        let seq = dialog
                            .append(round, backend.id().clone(), next.clone())
                            .expect("one utterance per round");
                        participants[p].current = next;
                        participants[p].last_seq = seq;
                    }
                    Err(AgentError::Unavailable(why)) | Err(AgentError::InvalidAnswer(why)) => {
                        log.push(
                            "debate",
                            Some(backend.id().name.clone()),
                            "unavailable",
                            serde_json::json!({ "round": round, "reason": why }),
                        );
                    }
                }
            }
        }

        let positions = positions_of(&participants);
        let clusters = cluster(&positions, self.gazetteer, self.cfg.th_km);
        let max_size = clusters.iter().map(Vec::len).max().unwrap_or(1);
        let (answer, consensus, fallback_used) = if max_size <= 1 {
            (participants[0].current.clone(), false, true)
        } else {
            let chosen = clusters
                .iter()
                .filter(|c| c.len() == max_size)
                .min_by_key(|c| c.iter().map(|&i| positions[i].seq).min())
                .expect("non-empty clusters");
            let winner = best_member(chosen, &positions);
            (
                participants[winner].current.clone(),
                max_size * 2 > participants.len(),
                false,
            )
        };

        for rec in &mut answerers {
            rec.final_answer = participants
                .iter()
                .find(|p| p.roster_index == rec.agent_index)
                .map(|p| p.current.clone());
        }
        let verdict = Verdict {
            answer,
            consensus,
            rounds_used: self.cfg.z,
            fallback_used,
            agent_calls,
            tokens_estimate: account_tokens(&transcript),
            elapsed_ms: started.elapsed().as_millis() as u64,
        };
        Ok(RunOutcome {
            verdict,
            answerers,
            transcript,
            log,
            dialog: dialog.entries().to_vec(),
        })
    }
}

fn positions_of(participants: &[Participant]) -> Vec<Position> {
    participants
        .iter()
        .map(|p| Position {
            member: p.roster_index,
            text: p.current.location_text.clone(),
            confidence: p.current.confidence_pct,
            seq: p.last_seq,
        })
        .collect()
}
