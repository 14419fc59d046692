use crate::error::{Error, Result};
use crate::gamma::NStepWindow;
use crate::numerics::{Matrix, Rng};

/// One environment transition, tagged with its episode and position so that
/// consecutive transitions can be stitched into n-step windows.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
    pub episode: u64,
    pub step: u64,
}

/// Column-major view of a sampled minibatch.
#[derive(Debug, Clone)]
pub struct Batch {
    pub states: Matrix,
    pub actions: Matrix,
    pub rewards: Vec<f64>,
    pub next_states: Matrix,
    /// 1.0 for true terminals, 0.0 otherwise.
    pub dones: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> Batch {
        let pick = |m: &Matrix| {
            let mut data = Vec::with_capacity(idx.len() * m.cols());
            for &i in idx {
                data.extend_from_slice(m.row(i));
            }
            Matrix::from_vec(idx.len(), m.cols(), data).expect("row selection keeps shape")
        };
        Batch {
            states: pick(&self.states),
            actions: pick(&self.actions),
            rewards: idx.iter().map(|&i| self.rewards[i]).collect(),
            next_states: pick(&self.next_states),
            dones: idx.iter().map(|&i| self.dones[i]).collect(),
        }
    }
}

/// Fixed-capacity ring buffer of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    act_dim: usize,
    states: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    next_states: Vec<f64>,
    terminals: Vec<bool>,
    episodes: Vec<u64>,
    steps: Vec<u64>,
    /// Slot the next push writes to.
    head: usize,
    len: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidRange {
                name: "replay capacity",
                reason: "must be at least 1".into(),
            });
        }
        Ok(Self {
            capacity,
            obs_dim,
            act_dim,
            states: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            next_states: Vec::new(),
            terminals: Vec::new(),
            episodes: Vec::new(),
            steps: Vec::new(),
            head: 0,
            len: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        if t.state.len() != self.obs_dim || t.next_state.len() != self.obs_dim {
            return Err(Error::Shape {
                expected: self.obs_dim,
                got: t.state.len().max(t.next_state.len()),
            });
        }
        if t.action.len() != self.act_dim {
            return Err(Error::Shape {
                expected: self.act_dim,
                got: t.action.len(),
            });
        }
        if self.len < self.capacity {
            self.states.extend_from_slice(&t.state);
            self.actions.extend_from_slice(&t.action);
            self.rewards.push(t.reward);
            self.next_states.extend_from_slice(&t.next_state);
            self.terminals.push(t.terminal);
            self.episodes.push(t.episode);
            self.steps.push(t.step);
            self.len += 1;
        } else {
            let i = self.head;
            let (o, a) = (self.obs_dim, self.act_dim);
            self.states[i * o..(i + 1) * o].copy_from_slice(&t.state);
            self.actions[i * a..(i + 1) * a].copy_from_slice(&t.action);
            self.rewards[i] = t.reward;
            self.next_states[i * o..(i + 1) * o].copy_from_slice(&t.next_state);
            self.terminals[i] = t.terminal;
            self.episodes[i] = t.episode;
            self.steps[i] = t.step;
        }
        self.head = (self.head + 1) % self.capacity;
        Ok(())
    }

    pub fn get(&self, i: usize) -> Transition {
        let (o, a) = (self.obs_dim, self.act_dim);
        Transition {
            state: self.states[i * o..(i + 1) * o].to_vec(),
            action: self.actions[i * a..(i + 1) * a].to_vec(),
            reward: self.rewards[i],
            next_state: self.next_states[i * o..(i + 1) * o].to_vec(),
            terminal: self.terminals[i],
            episode: self.episodes[i],
            step: self.steps[i],
        }
    }

    fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    fn next_state(&self, i: usize) -> &[f64] {
        &self.next_states[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn sample_indices(&self, n: usize, rng: &mut Rng) -> Result<Vec<usize>> {
        if self.len == 0 || n == 0 {
            return Err(Error::EmptyBatch);
        }
        Ok((0..n).map(|_| rng.below(self.len)).collect())
    }

    pub fn batch(&self, idx: &[usize]) -> Batch {
        let (o, a) = (self.obs_dim, self.act_dim);
        let mut s = Vec::with_capacity(idx.len() * o);
        let mut act = Vec::with_capacity(idx.len() * a);
        let mut ns = Vec::with_capacity(idx.len() * o);
        for &i in idx {
            s.extend_from_slice(self.state(i));
            act.extend_from_slice(&self.actions[i * a..(i + 1) * a]);
            ns.extend_from_slice(self.next_state(i));
        }
        Batch {
            states: Matrix::from_vec(idx.len(), o, s).expect("shape"),
            actions: Matrix::from_vec(idx.len(), a, act).expect("shape"),
            rewards: idx.iter().map(|&i| self.rewards[i]).collect(),
            next_states: Matrix::from_vec(idx.len(), o, ns).expect("shape"),
            dones: idx.iter().map(|&i| if self.terminals[i] { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn sample(&self, n: usize, rng: &mut Rng) -> Result<Batch> {
        let idx = self.sample_indices(n, rng)?;
        Ok(self.batch(&idx))
    }

    /// States of up to the `n` most recent transitions, oldest first.
    pub fn recent_states(&self, n: usize) -> Matrix {
        let n = n.min(self.len);
        let mut data = Vec::with_capacity(n * self.obs_dim);
        for k in (1..=n).rev() {
            let i = (self.head + self.capacity - k) % self.capacity;
            data.extend_from_slice(self.state(i));
        }
        Matrix::from_vec(n, self.obs_dim, data).expect("shape")
    }

    /// Slot holding the transition that directly follows slot `i` in the
    /// same episode, if it is still stored.
    fn successor(&self, i: usize) -> Option<usize> {
        if self.terminals[i] {
            return None;
        }
        let j = (i + 1) % self.capacity;
        if j >= self.len || j == self.head {
            return None;
        }
        (self.episodes[j] == self.episodes[i] && self.steps[j] == self.steps[i] + 1).then_some(j)
    }

    /// Up to `n` consecutive transitions starting at slot `i`. The window
    /// stops early at a terminal, at an episode boundary, or where the ring
    /// has overwritten the continuation.
    pub fn window(&self, i: usize, n: usize) -> Result<NStepWindow> {
        if n < 1 {
            return Err(Error::InvalidHorizon(n));
        }
        let mut rewards = vec![self.rewards[i]];
        let mut last = i;
        while rewards.len() < n {
            match self.successor(last) {
                Some(j) => {
                    rewards.push(self.rewards[j]);
                    last = j;
                }
                None => break,
            }
        }
        Ok(NStepWindow {
            state: self.state(i).to_vec(),
            rewards,
            next_state: self.next_state(i).to_vec(),
            last_state: self.next_state(last).to_vec(),
            terminal: self.terminals[last],
        })
    }

    pub fn sample_windows(&self, batch: usize, n: usize, rng: &mut Rng) -> Result<Vec<NStepWindow>> {
        self.sample_indices(batch, rng)?
            .into_iter()
            .map(|i| self.window(i, n))
            .collect()
    }
}
