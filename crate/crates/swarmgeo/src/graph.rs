//! The agent collaboration social network: weighted adjacency storage,
//! transfer probabilities, random-walk reviewer selection, election
//! targets, link updates with streak attenuation, and agent election.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::AgentId;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("row {0} has no positive outgoing weight")]
    DegenerateRow(usize),
    #[error("invalid graph: {0}")]
    Invalid(String),
    #[error("need {requested} reviewers but only {available} other agents exist")]
    TooManyReviewers { requested: usize, available: usize },
}

/// Per-image weighted adjacency over N agents. Fresh graphs are fully
/// connected with unit weights and a zero diagonal.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CollaborationGraph {
    n: usize,
    weights: Vec<Vec<f64>>,
}

impl CollaborationGraph {
    /// The initial per-image graph: off-diagonal 1, diagonal 0.
    pub fn fresh(n: usize) -> Self {
        let weights = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0.0 } else { 1.0 }).collect())
            .collect();
        Self { n, weights }
    }

    /// Adopt externally predicted weights (e.g. a model's adjacency).
    pub fn from_weights(weights: Vec<Vec<f64>>) -> Result<Self, GraphError> {
        let n = weights.len();
        for (i, row) in weights.iter().enumerate() {
            if row.len() != n {
                return Err(GraphError::Invalid(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (j, &w) in row.iter().enumerate() {
                if !w.is_finite() || w < 0.0 {
                    return Err(GraphError::Invalid(format!(
                        "weight[{i}][{j}] = {w} is not a finite non-negative value"
                    )));
                }
                if i == j && w != 0.0 {
                    return Err(GraphError::Invalid(format!(
                        "diagonal weight[{i}][{i}] = {w} must be 0"
                    )));
                }
            }
        }
        Ok(Self { n, weights })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i][j]
    }

    pub fn weights(&self) -> &Vec<Vec<f64>> {
        &self.weights
    }

    /// JSON snapshot for audit logs.
    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::json!({ "n": self.n, "weights": self.weights })
    }
}

/// Per-image agent election probabilities.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ElectionVector {
    p: Vec<f64>,
}

impl ElectionVector {
    pub fn new(p: Vec<f64>) -> Result<Self, GraphError> {
        for (i, &v) in p.iter().enumerate() {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(GraphError::Invalid(format!(
                    "election probability p[{i}] = {v} outside [0, 1]"
                )));
            }
        }
        Ok(Self { p })
    }

    /// The untrained prior: every agent at probability 1/2.
    pub fn uniform(n: usize) -> Self {
        Self { p: vec![0.5; n] }
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.p[i]
    }

    pub fn set(&mut self, i: usize, v: f64) {
        debug_assert!((0.0..=1.0).contains(&v));
        self.p[i] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.p
    }
}

/// Consecutive same-outcome run lengths per agent. At most one of the
/// two runs is non-zero for any agent; rounds where an agent does not
/// answer leave its runs untouched.
#[derive(Debug, Clone, Default)]
pub struct StreakState {
    correct_run: Vec<u32>,
    incorrect_run: Vec<u32>,
}

impl StreakState {
    pub fn new(n: usize) -> Self {
        Self {
            correct_run: vec![0; n],
            incorrect_run: vec![0; n],
        }
    }

    /// Record this round's outcome for `agent` and return the length of
    /// the now-current run (>= 1). This is the `tt` that attenuates the
    /// link update.
    pub fn advance(&mut self, agent: usize, correct: bool) -> u32 {
        if correct {
            self.incorrect_run[agent] = 0;
            self.correct_run[agent] += 1;
            self.correct_run[agent]
        } else {
            self.correct_run[agent] = 0;
            self.incorrect_run[agent] += 1;
            self.incorrect_run[agent]
        }
    }

    pub fn runs(&self, agent: usize) -> (u32, u32) {
        (self.correct_run[agent], self.incorrect_run[agent])
    }
}

/// Transfer probability from node `i` to node `j`: the row-normalized
/// edge weight, or 0 when the edge is absent.
pub fn transfer_probability(g: &CollaborationGraph, i: usize, j: usize) -> Result<f64, GraphError> {
    let row_sum: f64 = g.weights[i].iter().sum();
    if row_sum <= 0.0 {
        return Err(GraphError::DegenerateRow(i));
    }
    Ok(g.weights[i][j] / row_sum)
}

/// One weighted step of the walk from `from`; falls back to a uniform
/// step over the other nodes when the row is all-zero.
fn walk_step<R: Rng>(g: &CollaborationGraph, from: usize, rng: &mut R) -> usize {
    let row = &g.weights[from];
    let total: f64 = row.iter().sum();
    if total > 0.0 {
        let mut u = rng.gen::<f64>() * total;
        for (j, &w) in row.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            if u < w {
                return j;
            }
            u -= w;
        }
        // Rounding left us past the last positive weight.
        row.iter().rposition(|&w| w > 0.0).unwrap_or(from)
    } else {
        let mut others: Vec<usize> = (0..g.n).filter(|&j| j != from).collect();
        let pick = rng.gen_range(0..others.len());
        others.swap_remove(pick)
    }
}

/// Result of reviewer selection: the chosen ids plus whether the
/// deterministic fallback had to fill any slot (flagged in run logs).
#[derive(Debug, Clone)]
pub struct ReviewerSelection {
    pub reviewers: Vec<usize>,
    pub fallback_used: bool,
}

/// Choose `r` distinct reviewers by a transfer-probability random walk
/// from `start`, skipping `start` itself. A walk stuck after `50 * r`
/// steps is completed with the highest-weight unvisited neighbors of
/// `start` (ties to the lower index).
pub fn select_reviewers<R: Rng>(
    g: &CollaborationGraph,
    start: usize,
    r: usize,
    rng: &mut R,
) -> Result<ReviewerSelection, GraphError> {
    if r > g.n.saturating_sub(1) {
        return Err(GraphError::TooManyReviewers {
            requested: r,
            available: g.n.saturating_sub(1),
        });
    }
    let mut reviewers: Vec<usize> = Vec::with_capacity(r);
    let mut current = start;
    let mut steps = 0usize;
    let max_steps = 50 * r.max(1);
    while reviewers.len() < r && steps < max_steps {
        current = walk_step(g, current, rng);
        steps += 1;
        if current != start && !reviewers.contains(&current) {
            reviewers.push(current);
        }
    }
    let mut fallback_used = false;
    if reviewers.len() < r {
        fallback_used = true;
        let mut candidates: Vec<usize> = (0..g.n)
            .filter(|&j| j != start && !reviewers.contains(&j))
            .collect();
        candidates.sort_by(|&a, &b| {
            g.weights[start][b]
                .partial_cmp(&g.weights[start][a])
                .expect("weights are finite")
                .then(a.cmp(&b))
        });
        reviewers.extend(candidates.into_iter().take(r - reviewers.len()));
    }
    Ok(ReviewerSelection {
        reviewers,
        fallback_used,
    })
}

/// The per-round election probability target: 1 for a correct answer,
/// 0 for an incorrect one, 1/2 for an agent that did not participate.
pub fn election_target(participated: bool, correct: bool) -> f64 {
    match (participated, correct) {
        (true, true) => 1.0,
        (true, false) => 0.0,
        (false, _) => 0.5,
    }
}

/// Update the links from `answerer` to each selected reviewer after an
/// answer was judged. The streak advances first; with `tt` the current
/// run length, a correct answer multiplies each edge by (tt+1)/(2*tt)
/// and an incorrect one by (2*tt-1)/(2*tt). Only row `answerer`,
/// columns `reviewers`, change.
pub fn update_links(
    g: &mut CollaborationGraph,
    answerer: usize,
    reviewers: &[usize],
    correct: bool,
    streaks: &mut StreakState,
) {
    let tt = streaks.advance(answerer, correct) as f64;
    let factor = if correct {
        (tt + 1.0) / (2.0 * tt)
    } else {
        (2.0 * tt - 1.0) / (2.0 * tt)
    };
    for &j in reviewers {
        debug_assert_ne!(j, answerer);
        g.weights[answerer][j] *= factor;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElectionMode {
    /// The k highest-probability agents, descending, ties to the lower
    /// index. Used at inference.
    TopK,
    /// Independent per-agent draws; an empty outcome falls back to the
    /// single top-probability agent. Used while estimating targets.
    Bernoulli,
}

/// Elect answer agents from the election vector. The first element of
/// the result is "the first answer agent elected", which Stage 3 uses
/// as the no-consensus fallback.
pub fn elect<R: Rng>(
    lst: &ElectionVector,
    k: usize,
    mode: ElectionMode,
    rng: &mut R,
) -> Vec<usize> {
    let n = lst.len();
    match mode {
        ElectionMode::TopK => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| {
                lst.get(b)
                    .partial_cmp(&lst.get(a))
                    .expect("election probabilities are finite")
                    .then(a.cmp(&b))
            });
            order.truncate(k.min(n));
            order
        }
        ElectionMode::Bernoulli => {
            let mut chosen: Vec<usize> = Vec::new();
            for i in 0..n {
                if rng.gen::<f64>() < lst.get(i) {
                    chosen.push(i);
                }
            }
            if chosen.is_empty() {
                let top = (0..n)
                    .max_by(|&a, &b| {
                        lst.get(a)
                            .partial_cmp(&lst.get(b))
                            .expect("finite")
                            .then(b.cmp(&a))
                    })
                    .expect("non-empty roster");
                chosen.push(top);
            }
            chosen
        }
    }
}

/// Convenience: wrap raw indices as `AgentId`s against a name roster.
pub fn to_agent_ids(indices: &[usize], names: &[String]) -> Vec<AgentId> {
    indices
        .iter()
        .map(|&i| AgentId {
            index: i,
            name: names[i].clone(),
        })
        .collect()
}
