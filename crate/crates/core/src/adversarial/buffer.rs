use rand::Rng;

/// Paired agent / reference observation windows collected during rollouts.
///
/// Holds at most `capacity` pairs; once full, new pairs replace random old ones.
#[derive(Debug, Clone, Default)]
pub struct PairBuffer {
    capacity: usize,
    agent: Vec<Vec<f64>>,
    reference: Vec<Vec<f64>>,
    seen: usize,
}

impl PairBuffer {
    pub fn new(capacity: usize) -> Self {
        PairBuffer { capacity, agent: Vec::new(), reference: Vec::new(), seen: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.agent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agent.is_empty()
    }

    pub fn agent(&self) -> &[Vec<f64>] {
        &self.agent
    }

    pub fn reference(&self) -> &[Vec<f64>] {
        &self.reference
    }

    /// Adds a pair; past capacity this is reservoir sampling over everything pushed.
    pub fn push<R: Rng + ?Sized>(&mut self, agent: Vec<f64>, reference: Vec<f64>, rng: &mut R) {
        self.seen += 1;
        if self.agent.len() < self.capacity {
            self.agent.push(agent);
            self.reference.push(reference);
        } else {
            let k = rng.random_range(0..self.seen);
            if k < self.capacity {
                self.agent[k] = agent;
                self.reference[k] = reference;
            }
        }
    }

    /// Appends another buffer's pairs in order.
    pub fn extend<R: Rng + ?Sized>(&mut self, other: PairBuffer, rng: &mut R) {
        for (a, r) in other.agent.into_iter().zip(other.reference) {
            self.push(a, r, rng);
        }
    }

    pub fn clear(&mut self) {
        self.agent.clear();
        self.reference.clear();
        self.seen = 0;
    }
}
