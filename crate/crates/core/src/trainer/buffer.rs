use std::collections::VecDeque;

use rand::Rng;

use crate::error::{Error, Result};
use crate::world_model::{Segment, Transition};

#[derive(Clone, Debug)]
struct Stored {
    transition: Transition,
    episode: u64,
}

/// Ring buffer of transitions that remembers episode boundaries.
///
/// A window start is valid when `H` transitions of the same episode follow
/// it, or when it opens a finished episode shorter than `H`. Valid starts
/// are kept incrementally for a fixed `H`.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    horizon: usize,
    items: VecDeque<Stored>,
    /// Global index of `items[0]`.
    first: u64,
    episode: u64,
    episode_start: u64,
    starts: VecDeque<u64>,
    total_pushed: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, horizon: usize) -> Result<Self> {
        if capacity == 0 || horizon == 0 {
            return Err(Error::Parameter("replay capacity and horizon must be >= 1".into()));
        }
        Ok(Self {
            capacity,
            horizon,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
            first: 0,
            episode: 0,
            episode_start: 0,
            starts: VecDeque::new(),
            total_pushed: 0,
        })
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

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn total_pushed(&self) -> u64 {
        self.total_pushed
    }

    /// Number of distinct windows that can currently be sampled.
    pub fn num_windows(&self) -> usize {
        self.starts.len()
    }

    /// Valid window starts as indices into the stored transitions.
    pub fn window_starts(&self) -> Vec<usize> {
        self.starts.iter().map(|&g| (g - self.first) as usize).collect()
    }

    pub fn transitions(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter().map(|s| &s.transition)
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i).map(|s| &s.transition)
    }

    pub fn get_mut(&mut self, i: usize) -> Option<&mut Transition> {
        self.items.get_mut(i).map(|s| &mut s.transition)
    }

    /// Closes the running episode without a terminal flag, e.g. when the
    /// caller truncates it.
    pub fn end_episode(&mut self) {
        let len = self.total_pushed - self.episode_start;
        if len > 0 {
            self.episode += 1;
            self.episode_start = self.total_pushed;
        }
    }

    pub fn push(&mut self, transition: Transition) {
        let done = transition.done;
        let g = self.total_pushed;
        if self.items.len() == self.capacity {
            self.items.pop_front();
            self.first += 1;
            while self.starts.front().is_some_and(|&s| s < self.first) {
                self.starts.pop_front();
            }
        }
        self.items.push_back(Stored {
            transition,
            episode: self.episode,
        });
        self.total_pushed += 1;
        let h = self.horizon as u64;
        let len = g + 1 - self.episode_start;
        if len >= h {
            self.starts.push_back(g + 1 - h);
        } else if done && self.episode_start >= self.first {
            self.starts.push_back(self.episode_start);
        }
        if done {
            self.episode += 1;
            self.episode_start = self.total_pushed;
        }
    }

    /// The window starting at stored index `start`, padded with absorbing
    /// records past a terminal transition.
    pub fn window(&self, start: usize, gamma: f64) -> Result<Segment> {
        let h = self.horizon;
        let head = self
            .items
            .get(start)
            .ok_or_else(|| Error::Parameter(format!("window start {start} outside buffer")))?;
        let mut records = Vec::with_capacity(h);
        let mut mask = Vec::with_capacity(h);
        for i in start..start + h {
            match self.items.get(i) {
                Some(s) if s.episode == head.episode => {
                    records.push(s.transition.clone());
                    mask.push(true);
                }
                _ => {
                    let last: &Transition = records.last().expect("window head present");
                    if !last.done {
                        return Err(Error::Parameter(format!("window at {start} crosses an unfinished episode")));
                    }
                    let pad = Transition {
                        state: last.next_state.clone(),
                        action: last.action.clone(),
                        reward: 0.0,
                        next_state: last.next_state.clone(),
                        done: true,
                    };
                    records.push(pad);
                    mask.push(false);
                }
            }
        }
        Ok(Segment::from_parts(records, mask, gamma))
    }

    /// `batch_size` windows drawn uniformly with replacement.
    pub fn sample_segments<R: Rng + ?Sized>(&self, batch_size: usize, gamma: f64, rng: &mut R) -> Result<Vec<Segment>> {
        if self.starts.is_empty() {
            return Err(Error::Warmup(format!(
                "no complete window of length {} in the replay buffer",
                self.horizon
            )));
        }
        if batch_size == 0 {
            return Err(Error::Parameter("batch size must be >= 1".into()));
        }
        (0..batch_size)
            .map(|_| {
                let g = self.starts[rng.random_range(0..self.starts.len())];
                self.window((g - self.first) as usize, gamma)
            })
            .collect()
    }
}
