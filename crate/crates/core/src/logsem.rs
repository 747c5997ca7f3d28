//! The log channel: filter a raw job log to failure-indicative lines,
//! normalize away volatile tokens, embed the result as a unit vector, retrieve
//! the most similar labeled training logs, and score the neighborhood with
//! logistic regression to produce P_log.
//!
//! The embedder is a hashed term-frequency map (FNV-1a buckets, sublinear tf,
//! L2 norm). Any other deterministic text-to-unit-vector function can stand in
//! behind the same types; the model document records which one was used.

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::errmark;
use crate::fnv::fnv1a64;
use crate::learners::logistic::{self, LogisticConfig};

/// Embedding dimension of the default hashed term-frequency embedder.
pub const EMBED_DIM: usize = 512;
/// Identifier recorded in model documents for the default embedder.
pub const EMBEDDER_ID: &str = "hashed-tf-fnv1a-512";
/// Similarity and label used to pad retrieval results past the index size.
pub const PAD_PAIR: (f64, f64) = (0.0, 0.5);

/// A log carried through every stage of the channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogDocument {
    pub job_ref: String,
    pub raw: String,
    pub filtered_lines: Vec<String>,
    pub normalized: String,
    pub embedding: Vec<f64>,
}

impl LogDocument {
    /// Runs filter, normalize, and embed over a raw log.
    pub fn build(job_ref: impl Into<String>, raw: impl Into<String>) -> Self {
        let raw = raw.into();
        let filtered_lines = preprocess(&raw);
        let normalized = normalize(&filtered_lines);
        let embedding = embed(&normalized);
        LogDocument { job_ref: job_ref.into(), raw, filtered_lines, normalized, embedding }
    }
}

/// Keeps failure-indicative lines, in order, with trailing carriage returns
/// stripped.
pub fn preprocess(raw: &str) -> Vec<String> {
    raw.lines()
        .map(|l| l.trim_end_matches('\r'))
        .filter(|l| errmark::is_failure_indicative(l))
        .map(str::to_string)
        .collect()
}

static URL_RE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r#"[a-z][a-z0-9+.-]*://[^\s'"<>⟨⟩]+"#).unwrap());
static TS_RE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(concat!(
        r"\b\d{4}-\d{2}-\d{2}[T ]\d{2}:\d{2}:\d{2}(?:\.\d+)?(?:Z|[+-]\d{2}:?\d{2})?",
        r"|\b\d{4}-\d{2}-\d{2}\b",
        r"|\b\d{2}:\d{2}:\d{2}(?:\.\d+)?\b",
    ))
    .unwrap()
});
static PATH_RE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?:~?/|[A-Za-z]:\\)[\w.@%+\\/~-]+").unwrap());
static ADDR_RE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"\b(?:0x[0-9a-fA-F]+|[0-9a-f]{8,})\b").unwrap());
static NUM_RE: Lazy<Regex> = Lazy::new(|| Regex::new(r"\b\d{5,}\b").unwrap());

/// Replaces volatile tokens with placeholders: URLs, then timestamps, then
/// absolute paths, then hex addresses, then long integers. Two logs that
/// differ only in such tokens normalize to the same string.
pub fn normalize(filtered_lines: &[String]) -> String {
    let joined = filtered_lines.join("\n");
    let s = URL_RE.replace_all(&joined, "\u{27e8}URL\u{27e9}");
    let s = TS_RE.replace_all(&s, "\u{27e8}TS\u{27e9}");
    let s = PATH_RE.replace_all(&s, "\u{27e8}PATH\u{27e9}");
    // A bare hex run must mix digits and letters to count as an address;
    // pure-digit runs fall through to the number pass and pure-letter runs
    // are ordinary words.
    let s = ADDR_RE.replace_all(&s, |caps: &regex::Captures<'_>| {
        let token = &caps[0];
        let hexish = token.starts_with("0x")
            || (token.chars().any(|c| c.is_ascii_digit())
                && token.chars().any(|c| c.is_ascii_alphabetic()));
        if hexish {
            "\u{27e8}ADDR\u{27e9}".to_string()
        } else {
            token.to_string()
        }
    });
    let s = NUM_RE.replace_all(&s, "\u{27e8}NUM\u{27e9}");
    s.into_owned()
}

/// Hashed term-frequency embedding: lowercase alphanumeric tokens bucketed by
/// FNV-1a into [`EMBED_DIM`] slots, sublinear weights 1+ln(tf), L2-normalized.
/// Text with no tokens embeds to the zero vector.
pub fn embed(normalized: &str) -> Vec<f64> {
    let mut tf = vec![0u32; EMBED_DIM];
    for token in normalized
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
    {
        let bucket = (fnv1a64(token.to_lowercase().as_bytes()) % EMBED_DIM as u64) as usize;
        tf[bucket] += 1;
    }
    let mut v: Vec<f64> = tf
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { 1.0 + f64::from(c).ln() })
        .collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

/// Cosine similarity; zero vectors compare as 0.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// One labeled training log in the index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub embedding: Vec<f64>,
    pub label: u8,
    pub job_ref: String,
    pub timestamp: i64,
}

/// A labeled document with its ordering key, the unit the channel trains on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDoc {
    pub doc: LogDocument,
    pub label: u8,
    pub timestamp: i64,
}

/// Exact brute-force cosine index over training-split documents. Immutable
/// once built; `built_from` names the split it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorIndex {
    entries: Vec<IndexEntry>,
    built_from: String,
}

impl VectorIndex {
    pub fn build(built_from: impl Into<String>, docs: &[LabeledDoc]) -> Self {
        let entries = docs
            .iter()
            .map(|d| IndexEntry {
                embedding: d.doc.embedding.clone(),
                label: d.label,
                job_ref: d.doc.job_ref.clone(),
                timestamp: d.timestamp,
            })
            .collect();
        VectorIndex { entries, built_from: built_from.into() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn built_from(&self) -> &str {
        &self.built_from
    }

    pub fn job_refs(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.job_ref.as_str())
    }

    /// Exact top-k neighbors as (similarity, label) pairs, most similar
    /// first. Similarity ties prefer the newer entry, then the smaller
    /// job_ref. Results shorter than k are padded with [`PAD_PAIR`].
    pub fn retrieve(&self, query: &[f64], k: usize) -> Vec<(f64, f64)> {
        self.retrieve_filtered(query, k, None)
    }

    /// Like [`VectorIndex::retrieve`] but skipping one job_ref, so training
    /// never retrieves the example being featurized.
    pub fn retrieve_excluding(&self, query: &[f64], k: usize, exclude: &str) -> Vec<(f64, f64)> {
        self.retrieve_filtered(query, k, Some(exclude))
    }

    fn retrieve_filtered(
        &self,
        query: &[f64],
        k: usize,
        exclude: Option<&str>,
    ) -> Vec<(f64, f64)> {
        assert!(k >= 1, "retrieval needs k >= 1");
        let mut scored: Vec<(f64, &IndexEntry)> = self
            .entries
            .iter()
            .filter(|e| exclude.is_none_or(|x| e.job_ref != x))
            .map(|e| (cosine(query, &e.embedding), e))
            .collect();
        scored.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then_with(|| b.1.timestamp.cmp(&a.1.timestamp))
                .then_with(|| a.1.job_ref.cmp(&b.1.job_ref))
        });
        let mut out: Vec<(f64, f64)> = scored
            .into_iter()
            .take(k)
            .map(|(s, e)| (s, f64::from(e.label)))
            .collect();
        out.resize(k, PAD_PAIR);
        out
    }
}

/// Similarity/label features laid out [S1..Sk, L1..Lk].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborFeatureVector {
    pub values: Vec<f64>,
    pub k: usize,
}

impl NeighborFeatureVector {
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        let mut values = Vec::with_capacity(pairs.len() * 2);
        values.extend(pairs.iter().map(|p| p.0));
        values.extend(pairs.iter().map(|p| p.1));
        NeighborFeatureVector { values, k: pairs.len() }
    }
}

/// Logistic scorer over neighbor features, with everything needed to rebuild
/// the feature space recorded alongside the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogScoreModel {
    pub schema_version: u32,
    pub embedder: String,
    pub dim: usize,
    pub k: usize,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub lambda: f64,
}

impl LogScoreModel {
    /// Sigmoid of the linear score. The feature vector must be built with
    /// the same k the model was trained with.
    pub fn score(&self, fv: &NeighborFeatureVector) -> Result<f64, LogsemError> {
        if fv.values.len() != 2 * self.k {
            return Err(LogsemError::DimensionMismatch {
                expected: 2 * self.k,
                got: fv.values.len(),
            });
        }
        let z: f64 =
            self.weights.iter().zip(&fv.values).map(|(w, x)| w * x).sum::<f64>() + self.bias;
        Ok(logistic::sigmoid(z))
    }
}

/// Trains the channel scorer: each training document is featurized against
/// the index with itself excluded, then a logistic model is fit.
pub fn train_log_model(
    index: &VectorIndex,
    train: &[LabeledDoc],
    k: usize,
    config: LogisticConfig,
) -> LogScoreModel {
    let rows: Vec<Vec<f64>> = train
        .iter()
        .map(|d| {
            let pairs = index.retrieve_excluding(&d.doc.embedding, k, &d.doc.job_ref);
            NeighborFeatureVector::from_pairs(&pairs).values
        })
        .collect();
    let labels: Vec<u8> = train.iter().map(|d| d.label).collect();
    let fitted = logistic::fit(&rows, &labels, config);
    LogScoreModel {
        schema_version: crate::SCHEMA_VERSION,
        embedder: EMBEDDER_ID.to_string(),
        dim: EMBED_DIM,
        k,
        weights: fitted.weights,
        bias: fitted.bias,
        lambda: config.l2,
    }
}

/// Full inference path: embed is already inside the document; retrieve
/// neighbors and score. This is the channel's P_log.
pub fn p_log(model: &LogScoreModel, index: &VectorIndex, doc: &LogDocument) -> f64 {
    let pairs = index.retrieve(&doc.embedding, model.k);
    let fv = NeighborFeatureVector::from_pairs(&pairs);
    model.score(&fv).expect("feature vector built with the model's own k")
}

#[derive(Debug, thiserror::Error)]
pub enum LogsemError {
    #[error("feature vector has {got} values, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn preprocess_keeps_failure_lines_in_order() {
        let raw = "INFO starting\nFATAL: disk full\nINFO cleanup\nError: boom\n";
        assert_eq!(preprocess(raw), vec!["FATAL: disk full", "Error: boom"]);
        assert!(preprocess("INFO a\nINFO b\n").is_empty());
        let structured = "time=\"x\" level=fatal msg=\"gone\"";
        assert_eq!(preprocess(structured), vec![structured]);
    }

    #[test]
    fn normalize_replaces_volatile_tokens() {
        let lines = |s: &str| vec![s.to_string()];
        assert_eq!(
            normalize(&lines("at 2024-01-02T03:04:05Z failed")),
            "at \u{27e8}TS\u{27e9} failed"
        );
        assert_eq!(normalize(&lines("0x7ffce3a1")), "\u{27e8}ADDR\u{27e9}");
        assert_eq!(
            normalize(&lines("open /var/log/app.log failed")),
            "open \u{27e8}PATH\u{27e9} failed"
        );
        assert_eq!(
            normalize(&lines("waited 123456 ms, retry 3")),
            "waited \u{27e8}NUM\u{27e9} ms, retry 3"
        );
        assert_eq!(
            normalize(&lines("worker deadbeef42 died")),
            "worker \u{27e8}ADDR\u{27e9} died"
        );
        // Pure-letter hex-shaped words and short numbers stay.
        assert_eq!(normalize(&lines("restarting cafebabe 42")), "restarting cafebabe 42");
        // Long pure-digit runs are numbers, not addresses.
        assert_eq!(
            normalize(&lines("run id 123456789")),
            "run id \u{27e8}NUM\u{27e9}"
        );
    }

    #[test]
    fn logs_differing_only_in_volatile_tokens_normalize_identically() {
        let a = vec!["Error: GET https://host-a.example/path1 failed at 2024-01-01T00:00:00Z".to_string()];
        let b = vec!["Error: GET https://other.example/zz failed at 2025-06-07T08:09:10Z".to_string()];
        assert_eq!(normalize(&a), normalize(&b));
    }

    #[test]
    fn embedding_is_unit_norm_or_zero() {
        let v = embed("Error: connection reset");
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
        assert_eq!(v.len(), EMBED_DIM);
        let z = embed("");
        assert!(z.iter().all(|&x| x == 0.0));
        assert_eq!(z.len(), EMBED_DIM);
    }

    #[test]
    fn identical_text_embeds_identically() {
        let a = embed("Error: remote host terminated the handshake");
        let b = embed("Error: remote host terminated the handshake");
        assert_eq!(a, b);
        assert!((cosine(&a, &b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn token_disjoint_texts_have_zero_cosine() {
        // Chosen so the token buckets do not collide.
        let a = embed("alpha beta gamma");
        let b = embed("delta epsilon zeta");
        assert_eq!(cosine(&a, &b), 0.0);
    }

    #[test]
    fn sublinear_tf_dampens_repeats() {
        let once = embed("error timeout");
        let many = embed("error error error error timeout");
        let sim = cosine(&once, &many);
        assert!(sim > 0.8 && sim < 1.0, "sim = {sim}");
    }

    #[test]
    fn cosine_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let a: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
            assert!((cosine(&a, &b) - cosine(&b, &a)).abs() < 1e-9);
        }
    }

    fn doc(job_ref: &str, text: &str) -> LogDocument {
        LogDocument::build(job_ref, format!("Error: {text}\n"))
    }

    fn labeled(job_ref: &str, text: &str, label: u8, timestamp: i64) -> LabeledDoc {
        LabeledDoc { doc: doc(job_ref, text), label, timestamp }
    }

    #[test]
    fn index_exposes_size_and_origin() {
        let docs = vec![
            labeled("a#1", "connection reset by peer", 1, 10),
            labeled("b#1", "compilation failed hard", 0, 20),
            labeled("c#1", "disk is full", 0, 30),
        ];
        let index = VectorIndex::build("train-fold-0", &docs);
        assert_eq!(index.len(), 3);
        assert_eq!(index.built_from(), "train-fold-0");
        assert_eq!(index.job_refs().count(), 3);
    }

    #[test]
    fn retrieval_finds_exact_match_first_and_pads() {
        let docs = vec![
            labeled("a#1", "connection reset by peer", 1, 10),
            labeled("b#1", "compilation failed hard", 0, 20),
        ];
        let index = VectorIndex::build("t", &docs);
        let query = doc("q#1", "connection reset by peer");
        let pairs = index.retrieve(&query.embedding, 5);
        assert_eq!(pairs.len(), 5);
        assert!((pairs[0].0 - 1.0).abs() < 1e-9);
        assert_eq!(pairs[0].1, 1.0);
        assert_eq!(pairs[2], PAD_PAIR);
        assert_eq!(pairs[3], PAD_PAIR);
        assert_eq!(pairs[4], PAD_PAIR);
    }

    #[test]
    fn similarity_ties_prefer_newer_then_lexicographic() {
        let d1 = labeled("zzz#1", "identical text", 0, 100);
        let d2 = labeled("aaa#1", "identical text", 1, 200);
        let d3 = labeled("mmm#1", "identical text", 1, 100);
        let index = VectorIndex::build("t", &[d1, d2, d3]);
        let query = doc("q#1", "identical text");
        let pairs = index.retrieve(&query.embedding, 3);
        // Newest first; equal timestamps fall back to job_ref order.
        assert_eq!(pairs[0].1, 1.0); // aaa, ts 200
        assert_eq!(pairs[1].1, 1.0); // mmm, ts 100, before zzz
        assert_eq!(pairs[2].1, 0.0); // zzz
    }

    #[test]
    fn empty_index_pads_fully() {
        let index = VectorIndex::build("t", &[]);
        let query = doc("q#1", "anything");
        let pairs = index.retrieve(&query.embedding, 4);
        assert_eq!(pairs, vec![PAD_PAIR; 4]);
    }

    #[test]
    fn retrieval_matches_full_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut docs = Vec::new();
        for i in 0..50 {
            let words: Vec<String> = (0..6)
                .map(|_| format!("tok{}", rng.gen_range(0..40)))
                .collect();
            docs.push(labeled(
                &format!("j{i}#1"),
                &words.join(" "),
                rng.gen_range(0..2) as u8,
                rng.gen_range(0..1000),
            ));
        }
        let index = VectorIndex::build("t", &docs);
        for _ in 0..10 {
            let q_words: Vec<String> =
                (0..6).map(|_| format!("tok{}", rng.gen_range(0..40))).collect();
            let q = doc("q#1", &q_words.join(" "));
            let got = index.retrieve(&q.embedding, 7);

            // Oracle: score every entry, sort with an explicit comparator.
            let mut all: Vec<(f64, i64, String, f64)> = docs
                .iter()
                .map(|d| {
                    (
                        cosine(&q.embedding, &d.doc.embedding),
                        d.timestamp,
                        d.doc.job_ref.clone(),
                        f64::from(d.label),
                    )
                })
                .collect();
            all.sort_by(|a, b| {
                b.0.total_cmp(&a.0)
                    .then(b.1.cmp(&a.1))
                    .then(a.2.cmp(&b.2))
            });
            let want: Vec<(f64, f64)> = all.iter().take(7).map(|e| (e.0, e.3)).collect();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn neighbor_features_are_block_ordered() {
        let fv = NeighborFeatureVector::from_pairs(&[(0.9, 1.0), (0.5, 0.0), (0.0, 0.5)]);
        assert_eq!(fv.k, 3);
        assert_eq!(fv.values, vec![0.9, 0.5, 0.0, 1.0, 0.0, 0.5]);
    }

    #[test]
    fn zero_model_scores_half_and_checks_dimensions() {
        let model = LogScoreModel {
            schema_version: crate::SCHEMA_VERSION,
            embedder: EMBEDDER_ID.into(),
            dim: EMBED_DIM,
            k: 2,
            weights: vec![0.0; 4],
            bias: 0.0,
            lambda: 1e-3,
        };
        let fv = NeighborFeatureVector::from_pairs(&[(0.4, 1.0), (0.1, 0.0)]);
        assert_eq!(model.score(&fv).unwrap(), 0.5);
        let wrong = NeighborFeatureVector::from_pairs(&[(0.4, 1.0)]);
        assert!(matches!(
            model.score(&wrong),
            Err(LogsemError::DimensionMismatch { expected: 4, got: 2 })
        ));
    }

    #[test]
    fn saturated_bias_approaches_one() {
        let model = LogScoreModel {
            schema_version: crate::SCHEMA_VERSION,
            embedder: EMBEDDER_ID.into(),
            dim: EMBED_DIM,
            k: 1,
            weights: vec![0.0; 2],
            bias: 20.0,
            lambda: 0.0,
        };
        let fv = NeighborFeatureVector::from_pairs(&[(0.0, 0.5)]);
        assert!(model.score(&fv).unwrap() > 0.9999);
    }

    fn toy_corpus() -> Vec<LabeledDoc> {
        let flaky = [
            "connection reset by peer during download",
            "connection timed out waiting for registry",
            "remote host terminated the handshake",
            "network unreachable while fetching dependency",
            "connection refused by service endpoint",
            "read timed out talking to remote host",
        ];
        let legit = [
            "compilation failed cannot find symbol widget",
            "compilation failed incompatible types in module",
            "test assertion expected five but was four",
            "cannot find symbol method render in class",
            "incompatible types string cannot convert to int",
            "assertion failure expected true but was false",
        ];
        let mut docs = Vec::new();
        for (i, t) in flaky.iter().enumerate() {
            docs.push(labeled(&format!("f{i}#1"), t, 1, i as i64));
        }
        for (i, t) in legit.iter().enumerate() {
            docs.push(labeled(&format!("l{i}#1"), t, 0, 100 + i as i64));
        }
        docs
    }

    #[test]
    fn trained_channel_separates_toy_corpus() {
        let docs = toy_corpus();
        let index = VectorIndex::build("train", &docs);
        let model = train_log_model(&index, &docs, 3, LogisticConfig::default());
        assert_eq!(model.weights.len(), 6);
        let flaky_query = doc("q1#1", "connection reset by peer during upload");
        let legit_query = doc("q2#1", "compilation failed cannot find symbol gadget");
        let p_f = p_log(&model, &index, &flaky_query);
        let p_l = p_log(&model, &index, &legit_query);
        assert!(p_f > 0.5, "flaky-looking query scored {p_f}");
        assert!(p_l < 0.5, "legit-looking query scored {p_l}");
    }

    #[test]
    fn pipeline_is_deterministic_end_to_end() {
        let docs = toy_corpus();
        let index = VectorIndex::build("train", &docs);
        let model = train_log_model(&index, &docs, 5, LogisticConfig::default());
        let raw = "INFO step\nError: connection reset by peer\n";
        let a = p_log(&model, &index, &LogDocument::build("x#1", raw));
        let b = p_log(&model, &index, &LogDocument::build("x#1", raw));
        assert_eq!(a, b);
    }

    #[test]
    fn model_serialization_round_trips_predictions() {
        let docs = toy_corpus();
        let index = VectorIndex::build("train", &docs);
        let model = train_log_model(&index, &docs, 4, LogisticConfig::default());
        let json = serde_json::to_string(&model).unwrap();
        let back: LogScoreModel = serde_json::from_str(&json).unwrap();
        assert_eq!(model, back);
        let q = doc("q#1", "network unreachable while fetching artifact");
        assert_eq!(p_log(&model, &index, &q), p_log(&back, &index, &q));
    }

    #[test]
    fn training_retrieval_excludes_the_example_itself() {
        // One document's label disagrees with every similar neighbor. If
        // training retrieved it for itself, S1 would be 1.0 with its own
        // label, which padding-free exclusion makes impossible.
        let docs = vec![
            labeled("a#1", "connection reset by peer", 1, 1),
            labeled("b#1", "connection reset by peer", 1, 2),
            labeled("odd#1", "connection reset by peer", 0, 3),
        ];
        let index = VectorIndex::build("train", &docs);
        let pairs = index.retrieve_excluding(&docs[2].doc.embedding, 2, "odd#1");
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].1, 1.0);
        assert_eq!(pairs[1].1, 1.0);
    }
}
