use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::RecognitionError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Leader,
    NotLeader,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Classification {
    pub label: Label,
    /// `(leader votes - k/2) / k`, in `[-0.5, 0.5]`.
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq)]
struct Sample {
    seq: u64,
    embedding: Vec<f64>,
}

/// Online KNN over appearance embeddings. Positives grow without bound;
/// negatives live in a ring buffer that evicts the oldest point.
#[derive(Clone, Debug, PartialEq)]
pub struct KnnModel {
    k: usize,
    negative_cap: usize,
    positives: Vec<Sample>,
    negatives: VecDeque<Sample>,
    next_seq: u64,
}

impl KnnModel {
    pub fn new(k: usize, negative_cap: usize) -> Self {
        assert!(k % 2 == 1, "k must be odd");
        Self {
            k,
            negative_cap: negative_cap.max(1),
            positives: Vec::new(),
            negatives: VecDeque::new(),
            next_seq: 0,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn positive_count(&self) -> usize {
        self.positives.len()
    }

    pub fn negative_count(&self) -> usize {
        self.negatives.len()
    }

    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn seq(&mut self) -> u64 {
        let s = self.next_seq;
        self.next_seq += 1;
        s
    }

    pub fn add_positive(&mut self, embedding: Vec<f64>) {
        let seq = self.seq();
        self.positives.push(Sample { seq, embedding });
    }

    pub fn add_negative(&mut self, embedding: Vec<f64>) {
        let seq = self.seq();
        if self.negatives.len() == self.negative_cap {
            self.negatives.pop_front();
        }
        self.negatives.push_back(Sample { seq, embedding });
    }

    /// Majority vote among the `k` nearest stored points (Euclidean). Equal
    /// distances are broken in favour of the older point. When fewer than `k`
    /// points are stored, all of them vote.
    pub fn classify(&self, e: &[f64]) -> Result<Classification, RecognitionError> {
        if self.is_empty() {
            return Err(RecognitionError::Uninitialised);
        }
        let mut scored: Vec<(f64, u64, bool)> = self
            .positives
            .iter()
            .map(|s| (sq_dist(e, &s.embedding), s.seq, true))
            .chain(self.negatives.iter().map(|s| (sq_dist(e, &s.embedding), s.seq, false)))
            .collect();
        let k = self.k.min(scored.len());
        let cmp = |a: &(f64, u64, bool), b: &(f64, u64, bool)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, cmp);
        }
        let leader_votes = scored[..k].iter().filter(|s| s.2).count();
        let label = if 2 * leader_votes > k { Label::Leader } else { Label::NotLeader };
        Ok(Classification {
            label,
            margin: (leader_votes as f64 - k as f64 / 2.0) / k as f64,
        })
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
