//! Geodesic agreement clustering shared by the discussion stages.
//!
//! Two replies "agree" when both geocode and their boxes lie within the
//! correctness threshold of each other; clusters are the transitive
//! closure of that relation. Replies that do not geocode are singleton
//! clusters.

use crate::geo::{box_distance_km, geocode, GazetteerEntry, GeoBox};

/// One clusterable position: an opaque member key, the reply text, its
/// confidence, and a sequence number for deterministic tie-breaking.
#[derive(Debug, Clone)]
pub struct Position {
    pub member: usize,
    pub text: String,
    pub confidence: f64,
    pub seq: u64,
}

/// Cluster positions by geodesic proximity at `th_km`. Returns groups
/// of indices into `positions`, ordered by their smallest index.
pub fn cluster(
    positions: &[Position],
    gazetteer: &[GazetteerEntry],
    th_km: f64,
) -> Vec<Vec<usize>> {
    let boxes: Vec<Option<GeoBox>> = positions
        .iter()
        .map(|p| geocode(&p.text, gazetteer).ok())
        .collect();
    let mut parent: Vec<usize> = (0..positions.len()).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    for i in 0..positions.len() {
        for j in (i + 1)..positions.len() {
            if let (Some(a), Some(b)) = (&boxes[i], &boxes[j]) {
                if box_distance_km(a, b) <= th_km {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    if ri != rj {
                        parent[rj.max(ri)] = rj.min(ri);
                    }
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..positions.len() {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    groups.into_values().collect()
}

/// The representative reply of a cluster: highest confidence, ties to
/// the earliest sequence number.
pub fn best_member(cluster: &[usize], positions: &[Position]) -> usize {
    let mut best = cluster[0];
    for &i in &cluster[1..] {
        let better = positions[i].confidence > positions[best].confidence
            || (positions[i].confidence == positions[best].confidence
                && positions[i].seq < positions[best].seq);
        if better {
            best = i;
        }
    }
    best
}
