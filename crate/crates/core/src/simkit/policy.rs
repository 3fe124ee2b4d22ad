use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::engine::{ChoiceClass, Sim};
use super::schedule::Decision;

/// Picks the next decision among the enabled ones; `None` ends the run.
pub trait Policy {
    fn choose(&mut self, sim: &Sim) -> Option<Decision>;
}

/// Deterministic fair policy: deliveries oldest-first, then handler steps
/// oldest-handler-first (spinning handlers last), then timeouts, then new
/// invocations.
#[derive(Clone, Copy, Debug, Default)]
pub struct FairPolicy {
    /// Invoke every client's next transaction as soon as possible.
    pub eager_invoke: bool,
}

impl FairPolicy {
    pub fn sequential() -> Self {
        Self { eager_invoke: false }
    }

    pub fn concurrent() -> Self {
        Self { eager_invoke: true }
    }
}

impl Policy for FairPolicy {
    fn choose(&mut self, sim: &Sim) -> Option<Decision> {
        let choices = sim.progress_choices();
        let rank = |d: &Decision| -> (u8, u64) {
            match sim.classify(d) {
                ChoiceClass::Invoke if self.eager_invoke => (0, 0),
                ChoiceClass::Deliver { msg_id } => (1, msg_id),
                ChoiceClass::Handler { h, spinning: false } => (2, h),
                ChoiceClass::Handler { h, spinning: true } => (3, h),
                ChoiceClass::Timeout => (4, 0),
                ChoiceClass::Invoke => (5, 0),
                ChoiceClass::Crash => (6, 0),
            }
        };
        choices.into_iter().enumerate().min_by_key(|(i, d)| (rank(d), *i)).map(|(_, d)| d)
    }
}

/// Uniform choice among progress choices, with occasional crashes while the
/// budget lasts.
#[derive(Clone, Debug)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
    crash_prob: f64,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), crash_prob: 0.0 }
    }

    pub fn with_crashes(mut self, prob: f64) -> Self {
        self.crash_prob = prob;
        self
    }
}

impl Policy for RandomPolicy {
    fn choose(&mut self, sim: &Sim) -> Option<Decision> {
        let choices = sim.progress_choices();
        if choices.is_empty() {
            return None;
        }
        if self.crash_prob > 0.0 && sim.crash_budget_left() > 0 && self.rng.gen_bool(self.crash_prob) {
            let live: Vec<usize> = (0..sim.layout().n_nodes).filter(|&n| !sim.is_crashed(n)).collect();
            if !live.is_empty() {
                let node = live[self.rng.gen_range(0..live.len())];
                return Some(Decision::Crash { node });
            }
        }
        let i = self.rng.gen_range(0..choices.len());
        Some(choices[i].clone())
    }
}
