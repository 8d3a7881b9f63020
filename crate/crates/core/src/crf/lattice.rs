use crate::{Error, Result};

/// `ln(sum(exp(xs)))`, stable for large magnitudes. `-inf` for an empty or
/// all `-inf` input.
pub fn log_sum_exp(xs: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    max + xs.into_iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Per-position emission scores plus a label-to-label transition matrix.
/// A sequence scores the sum of its emissions and adjacent transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    len: usize,
    n_labels: usize,
    emissions: Vec<f64>,
    transitions: Vec<f64>,
}

/// Node and edge posteriors of a lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    pub len: usize,
    pub n_labels: usize,
    pub log_partition: f64,
    /// `node[t * L + y]`
    pub node: Vec<f64>,
    /// `edge[(t * L + a) * L + b]`: label `a` at `t` and `b` at `t + 1`.
    pub edge: Vec<f64>,
}

impl Marginals {
    pub fn node(&self, t: usize, y: usize) -> f64 {
        self.node[t * self.n_labels + y]
    }

    pub fn edge(&self, t: usize, a: usize, b: usize) -> f64 {
        self.edge[(t * self.n_labels + a) * self.n_labels + b]
    }
}

impl Lattice {
    /// `emissions` is row-major `len x n_labels`, `transitions` is
    /// `n_labels x n_labels` indexed `[prev][next]`.
    pub fn new(len: usize, n_labels: usize, emissions: Vec<f64>, transitions: Vec<f64>) -> Result<Self> {
        if n_labels == 0 {
            return Err(Error::Invalid("lattice needs at least one label".into()));
        }
        if emissions.len() != len * n_labels {
            return Err(Error::Invalid(format!(
                "expected {} emission scores, got {}",
                len * n_labels,
                emissions.len()
            )));
        }
        if transitions.len() != n_labels * n_labels {
            return Err(Error::Invalid(format!(
                "expected {} transition scores, got {}",
                n_labels * n_labels,
                transitions.len()
            )));
        }
        Ok(Self {
            len,
            n_labels,
            emissions,
            transitions,
        })
    }

    pub fn zeros(len: usize, n_labels: usize) -> Self {
        Self::new(len, n_labels, vec![0.0; len * n_labels], vec![0.0; n_labels * n_labels])
            .expect("consistent shapes")
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn n_labels(&self) -> usize {
        self.n_labels
    }

    pub fn emission(&self, t: usize, y: usize) -> f64 {
        self.emissions[t * self.n_labels + y]
    }

    pub fn transition(&self, prev: usize, next: usize) -> f64 {
        self.transitions[prev * self.n_labels + next]
    }

    pub fn emissions_mut(&mut self) -> &mut [f64] {
        &mut self.emissions
    }

    pub fn transitions_mut(&mut self) -> &mut [f64] {
        &mut self.transitions
    }

    /// Log-potential of one label sequence.
    pub fn score(&self, labels: &[usize]) -> Result<f64> {
        if labels.len() != self.len {
            return Err(Error::Invalid(format!(
                "sequence has {} labels for a lattice of length {}",
                labels.len(),
                self.len
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= self.n_labels) {
            return Err(Error::Invalid(format!("label index {bad} out of range")));
        }
        let mut score = 0.0;
        for (t, &y) in labels.iter().enumerate() {
            score += self.emission(t, y);
            if t > 0 {
                score += self.transition(labels[t - 1], y);
            }
        }
        Ok(score)
    }

    /// `alpha[t * L + y]`: log-sum over prefixes ending in `y` at `t`.
    fn forward(&self) -> Vec<f64> {
        let l = self.n_labels;
        let mut alpha = vec![0.0; self.len * l];
        let head = l.min(alpha.len());
        alpha[..head].copy_from_slice(&self.emissions[..head]);
        let mut scratch = vec![0.0; l];
        for t in 1..self.len {
            for y in 0..l {
                for (p, s) in scratch.iter_mut().enumerate() {
                    *s = alpha[(t - 1) * l + p] + self.transition(p, y);
                }
                alpha[t * l + y] = self.emission(t, y) + log_sum_exp(scratch.iter().copied());
            }
        }
        alpha
    }

    /// `beta[t * L + y]`: log-sum over suffixes after `y` at `t`.
    fn backward(&self) -> Vec<f64> {
        let l = self.n_labels;
        let mut beta = vec![0.0; self.len * l];
        let mut scratch = vec![0.0; l];
        for t in (0..self.len.saturating_sub(1)).rev() {
            for y in 0..l {
                for (n, s) in scratch.iter_mut().enumerate() {
                    *s = self.transition(y, n) + self.emission(t + 1, n) + beta[(t + 1) * l + n];
                }
                beta[t * l + y] = log_sum_exp(scratch.iter().copied());
            }
        }
        beta
    }

    /// Log of the sum of `exp(score)` over every label sequence.
    pub fn log_partition(&self) -> f64 {
        if self.len == 0 {
            return 0.0;
        }
        let alpha = self.forward();
        let l = self.n_labels;
        log_sum_exp(alpha[(self.len - 1) * l..].iter().copied())
    }

    pub fn marginals(&self) -> Marginals {
        let l = self.n_labels;
        let alpha = self.forward();
        let beta = self.backward();
        let log_z = if self.len == 0 {
            0.0
        } else {
            log_sum_exp(alpha[(self.len - 1) * l..].iter().copied())
        };
        let node = alpha
            .iter()
            .zip(&beta)
            .map(|(a, b)| (a + b - log_z).exp())
            .collect();
        let mut edge = vec![0.0; self.len.saturating_sub(1) * l * l];
        for t in 0..self.len.saturating_sub(1) {
            for a in 0..l {
                for b in 0..l {
                    let lp = alpha[t * l + a]
                        + self.transition(a, b)
                        + self.emission(t + 1, b)
                        + beta[(t + 1) * l + b]
                        - log_z;
                    edge[(t * l + a) * l + b] = lp.exp();
                }
            }
        }
        Marginals {
            len: self.len,
            n_labels: l,
            log_partition: log_z,
            node,
            edge,
        }
    }

    /// Highest-scoring sequence and its score. Ties go to the lowest label
    /// index, both at each back-pointer and at the final position.
    pub fn viterbi(&self) -> (Vec<usize>, f64) {
        if self.len == 0 {
            return (Vec::new(), 0.0);
        }
        let l = self.n_labels;
        let mut delta = self.emissions[..l].to_vec();
        let mut back = vec![0usize; self.len * l];
        let mut next = vec![0.0; l];
        for t in 1..self.len {
            for y in 0..l {
                let mut best = (0, f64::NEG_INFINITY);
                for (p, d) in delta.iter().enumerate() {
                    let s = d + self.transition(p, y);
                    if s > best.1 {
                        best = (p, s);
                    }
                }
                back[t * l + y] = best.0;
                next[y] = best.1 + self.emission(t, y);
            }
            std::mem::swap(&mut delta, &mut next);
        }
        let mut last = (0, f64::NEG_INFINITY);
        for (y, &d) in delta.iter().enumerate() {
            if d > last.1 {
                last = (y, d);
            }
        }
        let mut path = vec![0usize; self.len];
        path[self.len - 1] = last.0;
        for t in (1..self.len).rev() {
            path[t - 1] = back[t * l + path[t]];
        }
        (path, last.1)
    }
}
