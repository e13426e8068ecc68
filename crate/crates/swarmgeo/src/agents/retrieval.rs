//! Keyed offline retrieval provider: the desk-scale stand-in for
//! network search. A query "hits" every corpus document whose key
//! appears, case-folded, somewhere in the query text.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AgentError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalDoc {
    pub key: String,
    pub text: String,
}

/// Return the corpus docs whose case-folded keys occur in the query,
/// in corpus order. An empty result is valid.
pub fn retrieve<'a>(query: &str, corpus: &'a [RetrievalDoc]) -> Vec<&'a RetrievalDoc> {
    let folded = query.to_lowercase();
    corpus
        .iter()
        .filter(|doc| !doc.key.is_empty() && folded.contains(&doc.key.to_lowercase()))
        .collect()
}

/// Load a corpus from JSONL, one `{"key": .., "text": ..}` per line.
/// Keys must be unique.
pub fn load_corpus(path: &Path) -> Result<Vec<RetrievalDoc>, AgentError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| AgentError::InvalidAnswer(format!("corpus {}: {e}", path.display())))?;
    let mut docs: Vec<RetrievalDoc> = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: RetrievalDoc = serde_json::from_str(line).map_err(|e| {
            AgentError::InvalidAnswer(format!("corpus {} line {}: {e}", path.display(), i + 1))
        })?;
        if docs.iter().any(|d| d.key == doc.key) {
            return Err(AgentError::InvalidAnswer(format!(
                "corpus {} line {}: duplicate key {:?}",
                path.display(),
                i + 1,
                doc.key
            )));
        }
        docs.push(doc);
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> Vec<RetrievalDoc> {
        vec![
            RetrievalDoc {
                key: "eiffel tower".into(),
                text: "wrought-iron lattice tower in paris".into(),
            },
            RetrievalDoc {
                key: "tower bridge".into(),
                text: "bascule bridge over the thames".into(),
            },
        ]
    }

    #[test]
    fn query_containing_key_hits() {
        let c = corpus();
        let hits = retrieve("photo near the Eiffel Tower at dusk", &c);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].key, "eiffel tower");
    }

    #[test]
    fn query_with_no_keys_is_empty() {
        assert!(retrieve("a bowl of noodles", &corpus()).is_empty());
    }

    #[test]
    fn two_keys_hit_in_corpus_order() {
        let c = corpus();
        let hits = retrieve("tower bridge or the eiffel tower?", &c);
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].key, "eiffel tower");
        assert_eq!(hits[1].key, "tower bridge");
    }

    #[test]
    fn corpus_jsonl_round_trip_and_dupes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        std::fs::write(
            &path,
            "{\"key\":\"a\",\"text\":\"1\"}\n{\"key\":\"b\",\"text\":\"2\"}\n",
        )
        .unwrap();
        let docs = load_corpus(&path).unwrap();
        assert_eq!(docs.len(), 2);
        std::fs::write(
            &path,
            "{\"key\":\"a\",\"text\":\"1\"}\n{\"key\":\"a\",\"text\":\"2\"}\n",
        )
        .unwrap();
        assert!(load_corpus(&path).is_err());
    }
}
