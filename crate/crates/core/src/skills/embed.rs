//! Embedding providers.
//!
//! [`HashingEmbedder`] is the deterministic reference backend: lowercased
//! word unigrams and bigrams are hashed (FNV-1a) into signed buckets and the
//! result is L2-normalized. [`RemoteEmbedder`] talks to an external
//! embedding service over HTTP.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::SkillsError;

pub trait EmbeddingProvider: Send + Sync {
    /// Stable identifier, bound into the derivation policy digest.
    fn id(&self) -> String;

    fn dimension(&self) -> usize;

    /// Unit-normalized embedding of `text`.
    fn embed(&self, text: &str) -> Result<Vec<f64>, SkillsError>;
}

pub const DEFAULT_DIMENSION: usize = 256;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

// Function words carry no skill signal and would otherwise give every
// sentence/skill pair a spurious positive cosine.
const STOP_WORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "how", "in", "into", "is",
    "it", "its", "of", "on", "or", "such", "that", "the", "their", "this", "to", "using", "with",
    "will", "students", "student", "course", "able",
];

#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dim: usize,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self {
            dim: DEFAULT_DIMENSION,
        }
    }
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

/// Lowercased word tokens. `+` and `#` stay inside tokens so that "C++" and
/// "C#" remain distinct from "C".
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !(c.is_alphanumeric() || c == '+' || c == '#'))
        .filter(|t| t.chars().any(char::is_alphanumeric))
        .filter(|t| !STOP_WORDS.contains(t))
        .map(str::to_string)
        .collect()
}

impl EmbeddingProvider for HashingEmbedder {
    fn id(&self) -> String {
        format!("hashing-fnv1a-uni-bi-{}", self.dim)
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, SkillsError> {
        let tokens = tokenize(text);
        let mut v = vec![0.0f64; self.dim];
        let mut add = |feature: &str| {
            let h = fnv1a(feature.as_bytes());
            let bucket = (h % self.dim as u64) as usize;
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            v[bucket] += sign;
        };
        for t in &tokens {
            add(&format!("u:{t}"));
        }
        for w in tokens.windows(2) {
            add(&format!("b:{} {}", w[0], w[1]));
        }
        normalize(v).ok_or(SkillsError::EmptyText)
    }
}

pub(crate) fn normalize(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}

/// Dot product of two equal-length vectors; the cosine for unit vectors.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    embedding: Vec<f64>,
}

/// Client for a remote embedding service: `POST {endpoint}` with
/// `{"text": ...}`, answered by `{"embedding": [...]}`.
///
/// Failures surface as [`SkillsError::ProviderUnavailable`]; there is no
/// silent fallback to another backend.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    endpoint: String,
    model: String,
    dim: usize,
    agent: ureq::Agent,
}

impl RemoteEmbedder {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, dim: usize) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(30))
            .build();
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            dim,
            agent,
        }
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn id(&self) -> String {
        format!("remote:{}:{}", self.model, self.dim)
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, SkillsError> {
        let unavailable = |e: String| SkillsError::ProviderUnavailable(e);
        let resp: EmbedResponse = self
            .agent
            .post(&self.endpoint)
            .send_json(EmbedRequest { text })
            .map_err(|e| unavailable(e.to_string()))?
            .into_json()
            .map_err(|e| unavailable(e.to_string()))?;
        if resp.embedding.len() != self.dim {
            return Err(SkillsError::DimensionMismatch {
                expected: self.dim,
                got: resp.embedding.len(),
            });
        }
        normalize(resp.embedding).ok_or(SkillsError::EmptyText)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    #[test]
    fn hashing_is_deterministic_and_unit_norm() {
        let e = HashingEmbedder::default();
        let a = e.embed("Implement sorting algorithms in Java").unwrap();
        let b = e.embed("Implement sorting algorithms in Java").unwrap();
        assert_eq!(a, b);
        let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn case_and_punctuation_do_not_matter() {
        let e = HashingEmbedder::default();
        let a = e.embed("Version Control (Git)").unwrap();
        let b = e.embed("version control git").unwrap();
        assert!((dot(&a, &b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cpp_and_csharp_stay_distinct() {
        assert_eq!(tokenize("C++ and C#, or C"), vec!["c++", "c#", "c"]);
    }

    #[test]
    fn empty_text_is_an_error() {
        let e = HashingEmbedder::default();
        assert!(matches!(e.embed("  the and of "), Err(SkillsError::EmptyText)));
    }

    fn one_shot_server(body: &'static str) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut content_length = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    content_length = v.trim().parse().unwrap();
                }
            }
            let mut buf = vec![0u8; content_length];
            reader.read_exact(&mut buf).unwrap();
            let resp = format!(
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{}",
                body.len(),
                body
            );
            stream.write_all(resp.as_bytes()).unwrap();
        });
        format!("http://{addr}/embed")
    }

    #[test]
    fn remote_embedder_normalizes_response() {
        let url = one_shot_server(r#"{"embedding":[3.0,4.0]}"#);
        let e = RemoteEmbedder::new(url, "test", 2);
        let v = e.embed("anything").unwrap();
        assert!((v[0] - 0.6).abs() < 1e-12 && (v[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn remote_embedder_checks_dimension() {
        let url = one_shot_server(r#"{"embedding":[1.0]}"#);
        let e = RemoteEmbedder::new(url, "test", 2);
        assert!(matches!(
            e.embed("x"),
            Err(SkillsError::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn unreachable_service_is_unavailable() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        drop(listener);
        let e = RemoteEmbedder::new(format!("http://{addr}/embed"), "test", 2);
        assert!(matches!(e.embed("x"), Err(SkillsError::ProviderUnavailable(_))));
    }
}
