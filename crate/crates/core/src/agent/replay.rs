use rand::Rng;

use super::{AgentError, Transition};

/// Binary tree of priority sums over a fixed number of leaves.
#[derive(Debug, Clone)]
struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    fn new(capacity: usize) -> Self {
        let leaves = capacity.next_power_of_two().max(1);
        Self {
            leaves,
            nodes: vec![0.0; 2 * leaves],
        }
    }

    fn total(&self) -> f64 {
        self.nodes[1]
    }

    fn get(&self, i: usize) -> f64 {
        self.nodes[self.leaves + i]
    }

    fn set(&mut self, i: usize, value: f64) {
        let mut n = self.leaves + i;
        self.nodes[n] = value;
        while n > 1 {
            n /= 2;
            self.nodes[n] = self.nodes[2 * n] + self.nodes[2 * n + 1];
        }
    }

    /// Leaf whose cumulative range contains `u`, never descending into an empty subtree.
    fn find(&self, mut u: f64) -> usize {
        let mut n = 1;
        while n < self.leaves {
            let left = self.nodes[2 * n];
            let right = self.nodes[2 * n + 1];
            if u < left || right <= 0.0 {
                n *= 2;
            } else {
                u -= left;
                n = 2 * n + 1;
            }
        }
        n - self.leaves
    }
}

/// Proportional prioritized replay: `P(i) ∝ p_i^alpha`, importance weights
/// `(N P(i))^-beta` normalized by the batch maximum.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
    tree: SumTree,
    max_priority: f64,
    alpha: f64,
    epsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledBatch {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, alpha: f64, epsilon: f64) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
            tree: SumTree::new(capacity),
            max_priority: 1.0,
            alpha,
            epsilon,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    /// Stores a transition with the largest priority seen so far, overwriting the oldest
    /// entry once full.
    pub fn push(&mut self, t: Transition) {
        let slot = self.next;
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[slot] = t;
        }
        self.tree.set(slot, self.max_priority.powf(self.alpha));
        self.next = (self.next + 1) % self.capacity;
    }

    /// Raw priority (before the exponent) of entry `i`.
    pub fn priority(&self, i: usize) -> f64 {
        self.tree.get(i).powf(1.0 / self.alpha.max(f64::MIN_POSITIVE))
    }

    pub fn probability(&self, i: usize) -> f64 {
        self.tree.get(i) / self.tree.total()
    }

    /// Sets priorities to `|td| + epsilon`.
    pub fn update_priorities(&mut self, indices: &[usize], td_abs: &[f64]) {
        for (&i, &td) in indices.iter().zip(td_abs) {
            let p = td.abs() + self.epsilon;
            self.max_priority = self.max_priority.max(p);
            self.tree.set(i, p.powf(self.alpha));
        }
    }

    pub fn sample<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        beta: f64,
        rng: &mut R,
    ) -> Result<SampledBatch, AgentError> {
        if batch_size == 0 || self.len() < batch_size {
            return Err(AgentError::Underfull {
                size: self.len(),
                batch: batch_size,
            });
        }
        let total = self.tree.total();
        let n = self.len() as f64;
        let indices: Vec<usize> = (0..batch_size)
            .map(|_| {
                let u = rng.random::<f64>() * total;
                self.tree.find(u).min(self.len() - 1)
            })
            .collect();
        let raw: Vec<f64> = indices
            .iter()
            .map(|&i| (n * self.tree.get(i) / total).powf(-beta))
            .collect();
        let max = raw.iter().cloned().fold(f64::MIN, f64::max);
        let weights = raw.iter().map(|w| w / max).collect();
        Ok(SampledBatch { indices, weights })
    }
}

/// Samples a batch with importance weights.
pub fn per_sample<R: Rng + ?Sized>(
    buffer: &ReplayBuffer,
    batch_size: usize,
    beta: f64,
    rng: &mut R,
) -> Result<SampledBatch, AgentError> {
    buffer.sample(batch_size, beta, rng)
}
