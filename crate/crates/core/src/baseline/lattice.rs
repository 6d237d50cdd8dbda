//! Exact inference on a linear-chain lattice: sequence scores, the log
//! partition function, marginals and k-best Viterbi.

use std::cmp::Ordering;

/// Log-potentials of one sentence. `emissions` is `len x n_tags`,
/// `transitions` is `n_tags x n_tags` indexed `[prev][next]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Potentials {
    pub n_tags: usize,
    pub emissions: Vec<f64>,
    pub transitions: Vec<f64>,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
}

/// Posterior marginals from forward-backward.
#[derive(Debug, Clone)]
pub struct Marginals {
    pub log_z: f64,
    /// `len x n_tags`
    pub nodes: Vec<f64>,
    /// `(len-1) x n_tags x n_tags`
    pub edges: Vec<f64>,
}

/// A label path with its unnormalized log score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPath {
    pub tags: Vec<usize>,
    pub score: f64,
}

/// Higher score first; equal scores by ascending tag sequence.
pub fn path_order(a: &ScoredPath, b: &ScoredPath) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.tags.cmp(&b.tags))
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

impl Potentials {
    /// All-zero potentials: every sequence is equally likely.
    pub fn zeros(len: usize, n_tags: usize) -> Self {
        Potentials { n_tags, emissions: vec![0.0; len * n_tags], transitions: vec![0.0; n_tags * n_tags], start: vec![0.0; n_tags], end: vec![0.0; n_tags] }
    }

    pub fn len(&self) -> usize {
        self.emissions.len() / self.n_tags
    }

    pub fn is_empty(&self) -> bool {
        self.emissions.is_empty()
    }

    #[inline]
    pub fn emission(&self, i: usize, tag: usize) -> f64 {
        self.emissions[i * self.n_tags + tag]
    }

    #[inline]
    pub fn transition(&self, prev: usize, next: usize) -> f64 {
        self.transitions[prev * self.n_tags + next]
    }

    /// Unnormalized log score, summed left to right.
    pub fn score(&self, tags: &[usize]) -> f64 {
        assert_eq!(tags.len(), self.len(), "tag sequence length");
        let mut s = self.start[tags[0]];
        s += self.emission(0, tags[0]);
        for i in 1..tags.len() {
            s += self.transition(tags[i - 1], tags[i]);
            s += self.emission(i, tags[i]);
        }
        s + self.end[tags[tags.len() - 1]]
    }

    /// Forward log-alphas, `len x n_tags`.
    fn forward(&self) -> Vec<f64> {
        let (n, t) = (self.len(), self.n_tags);
        let mut alpha = vec![0.0; n * t];
        for y in 0..t {
            alpha[y] = self.start[y] + self.emission(0, y);
        }
        let mut buf = vec![0.0; t];
        for i in 1..n {
            for y in 0..t {
                for (p, b) in buf.iter_mut().enumerate() {
                    *b = alpha[(i - 1) * t + p] + self.transition(p, y);
                }
                alpha[i * t + y] = log_sum_exp(&buf) + self.emission(i, y);
            }
        }
        alpha
    }

    fn backward(&self) -> Vec<f64> {
        let (n, t) = (self.len(), self.n_tags);
        let mut beta = vec![0.0; n * t];
        beta[(n - 1) * t..].copy_from_slice(&self.end);
        let mut buf = vec![0.0; t];
        for i in (0..n - 1).rev() {
            for y in 0..t {
                for (q, b) in buf.iter_mut().enumerate() {
                    *b = self.transition(y, q) + self.emission(i + 1, q) + beta[(i + 1) * t + q];
                }
                beta[i * t + y] = log_sum_exp(&buf);
            }
        }
        beta
    }

    pub fn log_partition(&self) -> f64 {
        let (n, t) = (self.len(), self.n_tags);
        let alpha = self.forward();
        let last: Vec<f64> = (0..t).map(|y| alpha[(n - 1) * t + y] + self.end[y]).collect();
        log_sum_exp(&last)
    }

    pub fn marginals(&self) -> Marginals {
        let (n, t) = (self.len(), self.n_tags);
        let alpha = self.forward();
        let beta = self.backward();
        let last: Vec<f64> = (0..t).map(|y| alpha[(n - 1) * t + y] + self.end[y]).collect();
        let log_z = log_sum_exp(&last);
        let nodes = alpha.iter().zip(&beta).map(|(a, b)| (a + b - log_z).exp()).collect();
        let mut edges = vec![0.0; n.saturating_sub(1) * t * t];
        for i in 0..n.saturating_sub(1) {
            for p in 0..t {
                for q in 0..t {
                    let lp = alpha[i * t + p] + self.transition(p, q) + self.emission(i + 1, q) + beta[(i + 1) * t + q] - log_z;
                    edges[(i * t + p) * t + q] = lp.exp();
                }
            }
        }
        Marginals { log_z, nodes, edges }
    }

    /// The `k` best paths in [`path_order`]; all of them when fewer exist.
    pub fn kbest(&self, k: usize) -> Vec<ScoredPath> {
        assert!(k >= 1, "k must be positive");
        let (n, t) = (self.len(), self.n_tags);
        // cells[y]: best partial paths ending in tag y at the current position.
        let mut cells: Vec<Vec<ScoredPath>> = (0..t).map(|y| vec![ScoredPath { tags: vec![y], score: self.start[y] + self.emission(0, y) }]).collect();
        for i in 1..n {
            let mut next = Vec::with_capacity(t);
            for y in 0..t {
                let mut cands: Vec<ScoredPath> = Vec::with_capacity(t * k);
                for (p, cell) in cells.iter().enumerate() {
                    let trans = self.transition(p, y);
                    for partial in cell {
                        let mut tags = Vec::with_capacity(i + 1);
                        tags.extend_from_slice(&partial.tags);
                        tags.push(y);
                        cands.push(ScoredPath { tags, score: partial.score + trans + self.emission(i, y) });
                    }
                }
                cands.sort_by(path_order);
                cands.truncate(k);
                next.push(cands);
            }
            cells = next;
        }
        let mut finals: Vec<ScoredPath> = cells
            .into_iter()
            .enumerate()
            .flat_map(|(y, cell)| {
                let end = self.end[y];
                cell.into_iter().map(move |p| ScoredPath { score: p.score + end, tags: p.tags })
            })
            .collect();
        finals.sort_by(path_order);
        finals.truncate(k);
        finals
    }

    pub fn viterbi(&self) -> ScoredPath {
        self.kbest(1).remove(0)
    }
}
