//! Deterministic simulated agents: profile-driven stand-ins for
//! heterogeneous vision-language models.
//!
//! A simulated agent holds a fixed "belief" about every image — the
//! ground-truth location with a profile-dependent probability, a decoy
//! otherwise — drawn from a stream keyed by (agent seed, image, stage,
//! round). Identical inputs therefore produce byte-identical replies in
//! any call order, on any platform.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    retrieve, AgentBackend, AgentError, AgentId, ImageRef, LocationAnswer, RetrievalDoc,
    ReviewComment, Utterance,
};
use crate::consensus::{best_member, cluster, Position};
use crate::geo::{box_distance_km, geocode, geocode_entry, GazetteerEntry};
use crate::seeding::rng_stream;

/// Behavioral knobs of one simulated agent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentProfile {
    /// Region keys this agent is a specialist for.
    pub home_regions: Vec<String>,
    /// Probability of answering correctly on a home-region image.
    pub home_accuracy: f64,
    /// Probability of answering correctly elsewhere.
    pub away_accuracy: f64,
    pub seed: u64,
    /// Willingness to adopt a dissenting or majority position in [0, 1].
    pub persuadability: f64,
}

impl AgentProfile {
    pub fn validate(&self) -> Result<(), AgentError> {
        let unit = |v: f64| v.is_finite() && (0.0..=1.0).contains(&v);
        if !unit(self.home_accuracy) || !unit(self.away_accuracy) || !unit(self.persuadability) {
            return Err(AgentError::InvalidAnswer(
                "profile probabilities must lie in [0, 1]".into(),
            ));
        }
        if self.home_accuracy < self.away_accuracy {
            return Err(AgentError::InvalidAnswer(
                "home_accuracy must be >= away_accuracy".into(),
            ));
        }
        Ok(())
    }
}

/// Shared immutable context the simulated roster runs against: the
/// gazetteer, the decoy pool wrong answers are drawn from, the offline
/// retrieval corpus, and the agreement threshold.
#[derive(Debug, Clone)]
pub struct SimWorld {
    pub gazetteer: Vec<GazetteerEntry>,
    pub decoy_pool: Vec<String>,
    pub corpus: Vec<RetrievalDoc>,
    pub th_km: f64,
    /// Success-probability bonus when retrieval returns evidence,
    /// clamped so probabilities stay <= 1.
    pub retrieval_bonus: f64,
}

impl SimWorld {
    /// Build a world whose decoy pool and retrieval corpus both derive
    /// from the gazetteer's canonical names.
    pub fn from_gazetteer(
        gazetteer: Vec<GazetteerEntry>,
        th_km: f64,
        retrieval_bonus: f64,
    ) -> Self {
        let decoy_pool: Vec<String> = gazetteer.iter().map(|e| e.canonical_name.clone()).collect();
        let corpus = gazetteer
            .iter()
            .map(|e| RetrievalDoc {
                key: e.canonical_name.to_lowercase(),
                text: format!(
                    "field notes and imagery associated with {}",
                    e.canonical_name
                ),
            })
            .collect();
        Self {
            gazetteer,
            decoy_pool,
            corpus,
            th_km,
            retrieval_bonus,
        }
    }
}

pub struct SimulatedAgent {
    id: AgentId,
    profile: AgentProfile,
    world: Arc<SimWorld>,
}

impl SimulatedAgent {
    pub fn new(
        id: AgentId,
        profile: AgentProfile,
        world: Arc<SimWorld>,
    ) -> Result<Self, AgentError> {
        profile.validate()?;
        Ok(Self { id, profile, world })
    }

    pub fn profile(&self) -> &AgentProfile {
        &self.profile
    }

    /// The agent's fixed opinion about an image. Both `answer` and the
    /// silent judgement inside `review` use this same stream, so one
    /// agent never contradicts itself within a pipeline run.
    fn belief(&self, image: &ImageRef, retrieval_enabled: bool) -> LocationAnswer {
        let mut rng = rng_stream(self.profile.seed, "answer", &[image.id.as_bytes()]);
        let mut p = if self.profile.home_regions.contains(&image.region_key) {
            self.profile.home_accuracy
        } else {
            self.profile.away_accuracy
        };
        if retrieval_enabled && !retrieve(&image.truth_text, &self.world.corpus).is_empty() {
            p = (p + self.world.retrieval_bonus).min(1.0);
        }
        let hit = rng.gen::<f64>() < p;
        let conf_unit = rng.gen::<f64>();
        let (location, confidence) = if hit {
            (image.truth_text.clone(), 70.0 + conf_unit * 25.0)
        } else {
            let decoys: Vec<&String> = self
                .world
                .decoy_pool
                .iter()
                .filter(|d| d.as_str() != image.truth_text)
                .collect();
            let loc = if decoys.is_empty() {
                "an unidentifiable place".to_string()
            } else {
                decoys[rng.gen_range(0..decoys.len())].clone()
            };
            (loc, 40.0 + conf_unit * 40.0)
        };
        let explanation = format!("landmark and scene cues point to {location}");
        LocationAnswer {
            location_text: location,
            confidence_pct: confidence,
            explanation,
        }
    }
}

impl AgentBackend for SimulatedAgent {
    fn id(&self) -> &AgentId {
        &self.id
    }

    fn answer(
        &self,
        image: &ImageRef,
        retrieval_enabled: bool,
    ) -> Result<LocationAnswer, AgentError> {
        Ok(self.belief(image, retrieval_enabled))
    }

    fn review(
        &self,
        image: &ImageRef,
        subject: &LocationAnswer,
        retrieval_enabled: bool,
    ) -> Result<ReviewComment, AgentError> {
        let own = self.belief(image, retrieval_enabled);
        let gaz = &self.world.gazetteer;
        let agrees = match (
            geocode(&subject.location_text, gaz),
            geocode(&own.location_text, gaz),
        ) {
            (Ok(s), Ok(o)) => box_distance_km(&s, &o) <= self.world.th_km,
            _ => false,
        };
        let mut rng = rng_stream(
            self.profile.seed,
            "review",
            &[image.id.as_bytes(), subject.location_text.as_bytes()],
        );
        let comment = if agrees {
            ReviewComment {
                reviewer: self.id.clone(),
                text: format!(
                    "agree: independent cues also indicate {}",
                    subject.location_text
                ),
                confidence_pct: 70.0 + rng.gen::<f64>() * 25.0,
            }
        } else {
            ReviewComment {
                reviewer: self.id.clone(),
                text: format!("disagree: evidence favors {}", own.location_text),
                confidence_pct: own.confidence_pct,
            }
        };
        Ok(comment)
    }

    fn summarize(
        &self,
        _image: &ImageRef,
        own: &LocationAnswer,
        reviews: &[ReviewComment],
    ) -> Result<LocationAnswer, AgentError> {
        let gaz = &self.world.gazetteer;
        let own_box = geocode(&own.location_text, gaz).ok();
        let mut agree_mass = 0.0;
        let mut dissents: Vec<(&ReviewComment, &GazetteerEntry)> = Vec::new();
        for r in reviews {
            // A comment that names no known place carries no usable
            // position and is ignored.
            if let Ok(entry) = geocode_entry(&r.text, gaz) {
                let agrees = own_box
                    .as_ref()
                    .is_some_and(|ob| box_distance_km(&entry.bounds, ob) <= self.world.th_km);
                if agrees {
                    agree_mass += r.confidence_pct;
                } else {
                    dissents.push((r, entry));
                }
            }
        }
        let dissent_mass: f64 = dissents.iter().map(|(r, _)| r.confidence_pct).sum();
        // Adopt the strongest dissent when persuadability-weighted
        // dissent outweighs the agent's own confidence.
        if self.profile.persuadability * dissent_mass > own.confidence_pct {
            let (top, entry) = dissents
                .iter()
                .fold(
                    None::<&(&ReviewComment, &GazetteerEntry)>,
                    |acc, d| match acc {
                        Some(best) if best.0.confidence_pct >= d.0.confidence_pct => Some(best),
                        _ => Some(d),
                    },
                )
                .expect("dissent mass > 0 implies at least one dissent");
            Ok(LocationAnswer {
                location_text: entry.canonical_name.clone(),
                confidence_pct: (top.confidence_pct * 0.9).clamp(1.0, 100.0),
                explanation: format!(
                    "revised after reviewer feedback pointing to {}",
                    entry.canonical_name
                ),
            })
        } else {
            let mut kept = own.clone();
            if agree_mass > 0.0 {
                kept.confidence_pct = (kept.confidence_pct + agree_mass).min(100.0);
            }
            Ok(kept)
        }
    }

    fn discuss(
        &self,
        image: &ImageRef,
        snapshot: &[Utterance],
        own_latest: &LocationAnswer,
        round: u32,
    ) -> Result<LocationAnswer, AgentError> {
        // Current position of every other speaker: its latest utterance.
        let mut latest: BTreeMap<usize, &Utterance> = BTreeMap::new();
        for u in snapshot {
            if u.speaker.index == self.id.index {
                continue;
            }
            let keep = latest
                .get(&u.speaker.index)
                .is_none_or(|prev| u.seq > prev.seq);
            if keep {
                latest.insert(u.speaker.index, u);
            }
        }
        let mut positions: Vec<Position> = latest
            .values()
            .map(|u| Position {
                member: u.speaker.index,
                text: u.answer.location_text.clone(),
                confidence: u.answer.confidence_pct,
                seq: u.seq,
            })
            .collect();
        let own_pos = positions.len();
        positions.push(Position {
            member: self.id.index,
            text: own_latest.location_text.clone(),
            confidence: own_latest.confidence_pct,
            seq: u64::MAX, // the agent is about to speak; latest by definition
        });
        let clusters = cluster(&positions, &self.world.gazetteer, self.world.th_km);
        let own_size = clusters
            .iter()
            .find(|c| c.contains(&own_pos))
            .map_or(1, |c| c.len());
        let largest = clusters
            .iter()
            .max_by(|a, b| {
                let min_seq = |c: &[usize]| c.iter().map(|&i| positions[i].seq).min().unwrap();
                a.len().cmp(&b.len()).then(min_seq(b).cmp(&min_seq(a)))
            })
            .expect("positions is never empty");
        let mut rng = rng_stream(
            self.profile.seed,
            "discuss",
            &[image.id.as_bytes(), &round.to_le_bytes()],
        );
        if largest.len() > own_size && rng.gen::<f64>() < self.profile.persuadability {
            let lead = best_member(largest, &positions);
            let text = positions[lead].text.clone();
            Ok(LocationAnswer {
                confidence_pct: positions[lead].confidence,
                explanation: format!("aligning with the majority view on {text}"),
                location_text: text,
            })
        } else {
            Ok(own_latest.clone())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{GeoBox, GeoPoint};

    fn gaz() -> Vec<GazetteerEntry> {
        let mk = |name: &str, lat: f64, lon: f64| {
            GazetteerEntry::new(
                name,
                vec![name.to_lowercase()],
                GeoBox::point(GeoPoint::new(lat, lon).unwrap()),
            )
            .unwrap()
        };
        vec![
            mk("Alpha", 0.0, 0.0),
            mk("Beta", 20.0, 20.0),
            mk("Gamma", -40.0, -40.0),
        ]
    }

    fn world() -> Arc<SimWorld> {
        Arc::new(SimWorld::from_gazetteer(gaz(), 50.0, 0.15))
    }

    fn agent(index: usize, profile: AgentProfile) -> SimulatedAgent {
        SimulatedAgent::new(
            AgentId {
                index,
                name: format!("agent-{index}"),
            },
            profile,
            world(),
        )
        .unwrap()
    }

    fn specialist(index: usize, seed: u64) -> SimulatedAgent {
        agent(
            index,
            AgentProfile {
                home_regions: vec!["r-alpha".into()],
                home_accuracy: 1.0,
                away_accuracy: 0.0,
                seed,
                persuadability: 0.5,
            },
        )
    }

    fn image(id: &str, region: &str, truth: &str) -> ImageRef {
        ImageRef {
            id: id.into(),
            content_seed: 11,
            region_key: region.into(),
            truth_text: truth.into(),
        }
    }

    #[test]
    fn home_specialist_answers_truth() {
        let a = specialist(0, 42);
        let img = image("img-1", "r-alpha", "Alpha");
        let ans = a.answer(&img, false).unwrap();
        assert_eq!(ans.location_text, "Alpha");
        assert!((70.0..95.0).contains(&ans.confidence_pct));
        assert!(!ans.explanation.is_empty());
    }

    #[test]
    fn away_zero_accuracy_yields_decoy() {
        let a = specialist(0, 42);
        let img = image("img-2", "r-beta", "Beta");
        let ans = a.answer(&img, false).unwrap();
        assert_ne!(ans.location_text, "Beta");
        assert!((40.0..80.0).contains(&ans.confidence_pct));
    }

    #[test]
    fn answers_are_replay_identical() {
        let a = specialist(0, 7);
        let img = image("img-3", "r-beta", "Beta");
        let first = a.answer(&img, true).unwrap();
        for _ in 0..3 {
            assert_eq!(a.answer(&img, true).unwrap(), first);
        }
    }

    #[test]
    fn retrieval_bonus_can_flip_an_answer() {
        // away accuracy 0.9 + bonus 0.15 clamps to >= 1 only with
        // retrieval; hunt a seed where the bare draw misses but the
        // boosted draw hits.
        let mut flipped = false;
        for seed in 0..200 {
            let a = agent(
                0,
                AgentProfile {
                    home_regions: vec![],
                    home_accuracy: 0.9,
                    away_accuracy: 0.9,
                    seed,
                    persuadability: 0.0,
                },
            );
            let img = image("img-4", "r-alpha", "Alpha");
            let plain = a.answer(&img, false).unwrap();
            let boosted = a.answer(&img, true).unwrap();
            if plain.location_text != "Alpha" && boosted.location_text == "Alpha" {
                flipped = true;
                break;
            }
        }
        assert!(flipped, "no seed produced a retrieval-driven flip");
    }

    #[test]
    fn reviewer_matching_subject_agrees_confidently() {
        let a = specialist(1, 9);
        let img = image("img-5", "r-alpha", "Alpha");
        let subject = LocationAnswer::new("Alpha", 66.0, "seen it").unwrap();
        let c = a.review(&img, &subject, false).unwrap();
        assert!(c.text.starts_with("agree:"), "{}", c.text);
        assert!(c.confidence_pct >= 70.0);
        assert_eq!(c.reviewer.index, 1);
    }

    #[test]
    fn reviewer_certain_of_elsewhere_disagrees_naming_it() {
        // Away accuracy 0 forces a decoy belief; the decoy pool minus
        // the truth leaves Beta or Gamma.
        let a = specialist(1, 9);
        let img = image("img-6", "r-beta", "Alpha");
        let own = a.answer(&img, false).unwrap();
        let subject = LocationAnswer::new("Alpha", 66.0, "looks right").unwrap();
        let c = a.review(&img, &subject, false).unwrap();
        assert!(c.text.starts_with("disagree:"), "{}", c.text);
        assert!(c.text.contains(&own.location_text));
    }

    #[test]
    fn review_of_ungeocodable_subject_disagrees() {
        let a = specialist(1, 9);
        let img = image("img-7", "r-alpha", "Alpha");
        let subject = LocationAnswer::new("the far side of nowhere", 90.0, "hmm").unwrap();
        let c = a.review(&img, &subject, false).unwrap();
        assert!(c.text.starts_with("disagree:"));
    }

    #[test]
    fn summarize_all_agreeing_raises_and_clamps() {
        let a = specialist(0, 3);
        let img = image("img-8", "r-alpha", "Alpha");
        let own = LocationAnswer::new("Alpha", 80.0, "spire shape").unwrap();
        let reviews = vec![
            ReviewComment {
                reviewer: AgentId {
                    index: 1,
                    name: "b".into(),
                },
                text: "agree: independent cues also indicate Alpha".into(),
                confidence_pct: 75.0,
            },
            ReviewComment {
                reviewer: AgentId {
                    index: 2,
                    name: "c".into(),
                },
                text: "agree: independent cues also indicate Alpha".into(),
                confidence_pct: 80.0,
            },
        ];
        let out = a.summarize(&img, &own, &reviews).unwrap();
        assert_eq!(out.location_text, "Alpha");
        assert_eq!(out.confidence_pct, 100.0); // 80 + 155, clamped
    }

    #[test]
    fn summarize_adopts_strong_dissent_when_fully_persuadable() {
        // persuadability 1.0, one dissent at 90 vs own 50:
        // 1.0 * 90 > 50, so the dissenting location is adopted.
        let a = agent(
            0,
            AgentProfile {
                home_regions: vec![],
                home_accuracy: 0.5,
                away_accuracy: 0.5,
                seed: 1,
                persuadability: 1.0,
            },
        );
        let img = image("img-9", "r-alpha", "Alpha");
        let own = LocationAnswer::new("Alpha", 50.0, "hunch").unwrap();
        let reviews = vec![ReviewComment {
            reviewer: AgentId {
                index: 1,
                name: "b".into(),
            },
            text: "disagree: evidence favors Beta".into(),
            confidence_pct: 90.0,
        }];
        let out = a.summarize(&img, &own, &reviews).unwrap();
        assert_eq!(out.location_text, "Beta");
        assert!(out.confidence_pct < 90.0);
    }

    #[test]
    fn summarize_same_dissent_not_adopted_when_immovable() {
        let a = agent(
            0,
            AgentProfile {
                home_regions: vec![],
                home_accuracy: 0.5,
                away_accuracy: 0.5,
                seed: 1,
                persuadability: 0.0,
            },
        );
        let img = image("img-10", "r-alpha", "Alpha");
        let own = LocationAnswer::new("Alpha", 50.0, "hunch").unwrap();
        let reviews = vec![ReviewComment {
            reviewer: AgentId {
                index: 1,
                name: "b".into(),
            },
            text: "disagree: evidence favors Beta".into(),
            confidence_pct: 90.0,
        }];
        let out = a.summarize(&img, &own, &reviews).unwrap();
        assert_eq!(out.location_text, "Alpha");
    }

    #[test]
    fn summarize_empty_reviews_is_identity() {
        let a = specialist(0, 3);
        let img = image("img-11", "r-alpha", "Alpha");
        let own = LocationAnswer::new("Alpha", 61.25, "spire shape").unwrap();
        let out = a.summarize(&img, &own, &[]).unwrap();
        assert_eq!(out, own);
    }

    fn utter(seq: u64, round: u32, speaker: usize, loc: &str, conf: f64) -> Utterance {
        Utterance {
            seq,
            round,
            speaker: AgentId {
                index: speaker,
                name: format!("agent-{speaker}"),
            },
            answer: LocationAnswer::new(loc, conf, "said so").unwrap(),
        }
    }

    #[test]
    fn discuss_restates_when_already_with_majority() {
        let a = specialist(0, 5);
        let img = image("img-12", "r-alpha", "Alpha");
        let own = LocationAnswer::new("Alpha", 80.0, "mine").unwrap();
        let snapshot = vec![utter(1, 1, 1, "Alpha", 70.0), utter(2, 1, 2, "Alpha", 75.0)];
        let out = a.discuss(&img, &snapshot, &own, 2).unwrap();
        assert_eq!(out, own);
    }

    #[test]
    fn discuss_immovable_agent_never_switches() {
        let a = agent(
            0,
            AgentProfile {
                home_regions: vec![],
                home_accuracy: 0.5,
                away_accuracy: 0.5,
                seed: 8,
                persuadability: 0.0,
            },
        );
        let img = image("img-13", "r-alpha", "Alpha");
        let own = LocationAnswer::new("Gamma", 45.0, "mine").unwrap();
        let snapshot = vec![
            utter(1, 1, 1, "Alpha", 70.0),
            utter(2, 1, 2, "Alpha", 75.0),
            utter(3, 1, 3, "Alpha", 90.0),
        ];
        for round in 1..5 {
            assert_eq!(a.discuss(&img, &snapshot, &own, round).unwrap(), own);
        }
    }

    #[test]
    fn discuss_fully_persuadable_agent_joins_bigger_cluster() {
        let a = agent(
            0,
            AgentProfile {
                home_regions: vec![],
                home_accuracy: 0.5,
                away_accuracy: 0.5,
                seed: 8,
                persuadability: 1.0,
            },
        );
        let img = image("img-14", "r-alpha", "Alpha");
        let own = LocationAnswer::new("Gamma", 45.0, "mine").unwrap();
        let snapshot = vec![
            utter(1, 1, 1, "Alpha", 70.0),
            utter(2, 1, 2, "Alpha", 90.0),
            utter(3, 1, 3, "Alpha", 75.0),
        ];
        let out = a.discuss(&img, &snapshot, &own, 1).unwrap();
        assert_eq!(out.location_text, "Alpha");
        assert_eq!(out.confidence_pct, 90.0);
    }

    #[test]
    fn discuss_uses_latest_position_per_speaker() {
        let a = agent(
            0,
            AgentProfile {
                home_regions: vec![],
                home_accuracy: 0.5,
                away_accuracy: 0.5,
                seed: 8,
                persuadability: 1.0,
            },
        );
        let img = image("img-15", "r-alpha", "Alpha");
        let own = LocationAnswer::new("Gamma", 45.0, "mine").unwrap();
        // Speaker 1 moved from Alpha to Beta; only Beta counts, so no
        // cluster outnumbers the agent's own singleton.
        let snapshot = vec![utter(1, 1, 1, "Alpha", 70.0), utter(2, 2, 1, "Beta", 70.0)];
        let out = a.discuss(&img, &snapshot, &own, 2).unwrap();
        assert_eq!(out, own);
    }

    #[test]
    fn profile_validation() {
        let bad = AgentProfile {
            home_regions: vec![],
            home_accuracy: 0.3,
            away_accuracy: 0.5,
            seed: 0,
            persuadability: 0.5,
        };
        assert!(bad.validate().is_err());
    }
}
