//! Analytically tractable Markov reward processes, offline datasets and
//! ground-truth return laws.
//!
//! Three chains are provided:
//!
//! - **Solitaire dice**: one state; each roll terminates with probability 1/6
//!   (reward 0), otherwise pays 1 and continues.
//! - **Bernoulli**: one state that never terminates and pays a fair 0/1
//!   reward. At discount 1/2 the return is uniform on `[0, 2]`.
//! - **Discrete Monte Carlo chain**: `n` states in a line with absorbing ends
//!   and nearest-neighbour moves biased by a two-well potential. A move into
//!   an interior state pays 1, entering an absorbing state pays 0.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{config, usage, Result};
use crate::law::ReturnLaw;
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MrpKind {
    SolitaireDice,
    Bernoulli,
    DiscreteMc,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MrpSpec {
    pub kind: MrpKind,
    /// Chain length; only meaningful for [`MrpKind::DiscreteMc`].
    pub n_states: usize,
    pub gamma_default: f64,
}

impl MrpSpec {
    pub fn solitaire() -> Self {
        Self {
            kind: MrpKind::SolitaireDice,
            n_states: 1,
            gamma_default: 0.9,
        }
    }

    pub fn bernoulli() -> Self {
        Self {
            kind: MrpKind::Bernoulli,
            n_states: 1,
            gamma_default: 0.5,
        }
    }

    pub fn discrete_mc(n_states: usize) -> Self {
        Self {
            kind: MrpKind::DiscreteMc,
            n_states,
            gamma_default: 0.95,
        }
    }

    /// Stable identifier used in file names and reports.
    pub fn id(&self) -> String {
        match self.kind {
            MrpKind::SolitaireDice => "solitaire".into(),
            MrpKind::Bernoulli => "bernoulli".into(),
            MrpKind::DiscreteMc => format!("discrete_mc{}", self.n_states),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: usize,
    pub reward: f64,
    /// `None` is the terminal sentinel.
    pub next_state: Option<usize>,
    pub done: bool,
}

impl Transition {
    pub fn terminal(state: usize, reward: f64) -> Self {
        Self {
            state,
            reward,
            next_state: None,
            done: true,
        }
    }

    pub fn step(state: usize, reward: f64, next_state: usize) -> Self {
        Self {
            state,
            reward,
            next_state: Some(next_state),
            done: false,
        }
    }
}

pub fn solitaire_sample_transition(rng: &mut RngStream) -> Transition {
    if rng.index(6) == 0 {
        Transition::terminal(0, 0.0)
    } else {
        Transition::step(0, 1.0, 0)
    }
}

pub fn bernoulli_sample_transition(rng: &mut RngStream) -> Transition {
    Transition::step(0, rng.index(2) as f64, 0)
}

/// Dense row-stochastic transition matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    n: usize,
    probs: Vec<f64>,
}

impl Kernel {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.probs[i * self.n..(i + 1) * self.n]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.probs[i * self.n + j]
    }

    pub fn is_absorbing(&self, i: usize) -> bool {
        i == 0 || i == self.n - 1
    }

    fn sample_next(&self, i: usize, rng: &mut RngStream) -> usize {
        let u = rng.uniform();
        let mut acc = 0.0;
        let row = self.row(i);
        let lo = i.saturating_sub(1);
        let hi = (i + 1).min(self.n - 1);
        for (j, &p) in row.iter().enumerate().take(hi + 1).skip(lo) {
            acc += p;
            if u < acc {
                return j;
            }
        }
        hi
    }
}

/// Unnormalized potential `exp((n-1)/(4π) cos(4π(i-1)/(n-1)))`.
fn potential(i: isize, n: usize) -> f64 {
    let m = (n - 1) as f64;
    libm::exp(m / (4.0 * PI) * libm::cos(4.0 * PI * (i as f64 - 1.0) / m))
}

/// Nearest-neighbour kernel with `P(i, i±1) = ½ p(i±1) / (p(i) + p(i±1))`
/// and absorbing end states.
pub fn discrete_mc_kernel(n: usize) -> Result<Kernel> {
    if n < 3 {
        return Err(config("discrete chain needs at least 3 states"));
    }
    let mut probs = vec![0.0; n * n];
    probs[0] = 1.0;
    probs[n * n - 1] = 1.0;
    for i in 1..n - 1 {
        let pi = potential(i as isize, n);
        let pl = potential(i as isize - 1, n);
        let pr = potential(i as isize + 1, n);
        let left = 0.5 * pl / (pi + pl);
        let right = 0.5 * pr / (pi + pr);
        probs[i * n + i - 1] = left;
        probs[i * n + i + 1] = right;
        probs[i * n + i] = 1.0 - left - right;
    }
    Ok(Kernel { n, probs })
}

pub fn discrete_mc_sample_transition(
    state: usize,
    kernel: &Kernel,
    rng: &mut RngStream,
) -> Result<Transition> {
    if state >= kernel.n() || kernel.is_absorbing(state) {
        return Err(usage(format!("cannot step from absorbing or unknown state {state}")));
    }
    let next = kernel.sample_next(state, rng);
    Ok(if kernel.is_absorbing(next) {
        Transition::terminal(state, 0.0)
    } else {
        Transition::step(state, 1.0, next)
    })
}

/// Atoms `(1 - γ^k)/(1 - γ)` with mass `(1/6)(5/6)^k`, truncated at the first
/// `k` whose remaining tail mass is at most `tail_eps`; the tail is lumped
/// onto the last atom.
pub fn solitaire_return_law(gamma: f64, tail_eps: f64) -> Result<ReturnLaw> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(config("solitaire law needs gamma in (0, 1)"));
    }
    if !(tail_eps > 0.0 && tail_eps <= 1e-3) {
        return Err(config("tail_eps must lie in (0, 1e-3]"));
    }
    let mut values = Vec::new();
    let mut probs = Vec::new();
    let mut k = 0;
    loop {
        values.push((1.0 - libm::pow(gamma, k as f64)) / (1.0 - gamma));
        probs.push(libm::pow(5.0 / 6.0, k as f64) / 6.0);
        let tail = libm::pow(5.0 / 6.0, (k + 1) as f64);
        if tail <= tail_eps {
            *probs.last_mut().unwrap() += tail;
            break;
        }
        k += 1;
    }
    // Atoms can collide in floating point for large k; merge them.
    let mut merged_v: Vec<f64> = Vec::with_capacity(values.len());
    let mut merged_p: Vec<f64> = Vec::with_capacity(values.len());
    for (v, p) in values.into_iter().zip(probs) {
        match merged_v.last() {
            Some(&last) if last >= v => *merged_p.last_mut().unwrap() += p,
            _ => {
                merged_v.push(v);
                merged_p.push(p);
            }
        }
    }
    let total: f64 = merged_p.iter().sum();
    merged_p.iter_mut().for_each(|p| *p /= total);
    ReturnLaw::atoms(merged_v, merged_p)
}

/// Uniform on `[0, 2]`: the exact return law of the Bernoulli chain at γ = 1/2.
pub fn bernoulli_return_law() -> ReturnLaw {
    ReturnLaw::uniform(0.0, 2.0).expect("valid bounds")
}

/// An environment instance with any derived tables precomputed.
#[derive(Debug, Clone)]
pub struct Mrp {
    spec: MrpSpec,
    kernel: Option<Kernel>,
}

impl Mrp {
    pub fn new(spec: MrpSpec) -> Result<Self> {
        let kernel = match spec.kind {
            MrpKind::DiscreteMc => Some(discrete_mc_kernel(spec.n_states)?),
            _ => None,
        };
        Ok(Self { spec, kernel })
    }

    pub fn spec(&self) -> &MrpSpec {
        &self.spec
    }

    pub fn kernel(&self) -> Option<&Kernel> {
        self.kernel.as_ref()
    }

    /// Number of state indices, and the length of the one-hot context.
    pub fn n_states(&self) -> usize {
        match self.spec.kind {
            MrpKind::DiscreteMc => self.spec.n_states,
            _ => 1,
        }
    }

    /// Non-terminal states: episode starts and evaluation targets.
    pub fn interior_states(&self) -> Vec<usize> {
        match self.spec.kind {
            MrpKind::DiscreteMc => (1..self.spec.n_states - 1).collect(),
            _ => vec![0],
        }
    }

    pub fn max_reward(&self) -> f64 {
        1.0
    }

    pub fn sample_start(&self, rng: &mut RngStream) -> usize {
        match self.spec.kind {
            MrpKind::DiscreteMc => 1 + rng.index(self.spec.n_states - 2),
            _ => 0,
        }
    }

    pub fn sample_transition(&self, state: usize, rng: &mut RngStream) -> Result<Transition> {
        match self.spec.kind {
            MrpKind::SolitaireDice | MrpKind::Bernoulli if state != 0 => {
                Err(usage(format!("single-state chain has no state {state}")))
            }
            MrpKind::SolitaireDice => Ok(solitaire_sample_transition(rng)),
            MrpKind::Bernoulli => Ok(bernoulli_sample_transition(rng)),
            MrpKind::DiscreteMc => {
                discrete_mc_sample_transition(state, self.kernel.as_ref().unwrap(), rng)
            }
        }
    }

    /// One-hot context for `state`.
    pub fn encode(&self, state: usize) -> Vec<f64> {
        let mut c = vec![0.0; self.n_states()];
        c[state] = 1.0;
        c
    }

    /// Closed-form return law where one exists.
    pub fn analytic_law(&self, gamma: f64) -> Option<ReturnLaw> {
        match self.spec.kind {
            MrpKind::SolitaireDice => solitaire_return_law(gamma, 1e-12).ok(),
            MrpKind::Bernoulli if gamma == 0.5 => Some(bernoulli_return_law()),
            _ => None,
        }
    }
}

/// Rollout limits for Monte Carlo return estimation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutLimits {
    /// Hard cap on episode length.
    pub horizon_cap: usize,
    /// A rollout also stops once the largest possible remaining discounted
    /// reward, `γ^k r_max / (1 - γ)`, drops below this.
    pub tail_tol: f64,
}

impl Default for RolloutLimits {
    fn default() -> Self {
        Self {
            horizon_cap: 2000,
            tail_tol: 1e-10,
        }
    }
}

/// Sorted Monte Carlo return samples plus truncation bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSamples {
    pub law: ReturnLaw,
    /// Largest remaining-reward bound among rollouts that were cut short.
    pub truncation_tail: f64,
    pub truncated_rollouts: usize,
}

/// Discounted returns of `n_rollouts` full episodes from `start`.
pub fn mc_return_oracle(
    mrp: &Mrp,
    start: usize,
    gamma: f64,
    n_rollouts: usize,
    limits: RolloutLimits,
    rng: &mut RngStream,
) -> Result<OracleSamples> {
    if n_rollouts == 0 {
        return Err(usage("oracle needs at least one rollout"));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(config("gamma must lie in (0, 1)"));
    }
    if !mrp.interior_states().contains(&start) {
        return Err(usage(format!("state {start} is not a valid start state")));
    }
    let tail_scale = mrp.max_reward() / (1.0 - gamma);
    let mut samples = Vec::with_capacity(n_rollouts);
    let mut truncation_tail: f64 = 0.0;
    let mut truncated = 0;
    for _ in 0..n_rollouts {
        let mut state = start;
        let mut g = 0.0;
        let mut discount = 1.0;
        let mut steps = 0;
        loop {
            let tr = mrp.sample_transition(state, rng)?;
            g += discount * tr.reward;
            discount *= gamma;
            steps += 1;
            match tr.next_state {
                None => break,
                Some(s) => state = s,
            }
            let tail = discount * tail_scale;
            if steps >= limits.horizon_cap || tail < limits.tail_tol {
                truncation_tail = truncation_tail.max(tail);
                truncated += 1;
                break;
            }
        }
        samples.push(g);
    }
    Ok(OracleSamples {
        law: ReturnLaw::empirical(samples)?,
        truncation_tail,
        truncated_rollouts: truncated,
    })
}

/// Harvests `n` transitions by rolling episodes and restarting on termination.
pub fn generate_dataset(mrp: &Mrp, n: usize, rng: &mut RngStream) -> Result<Vec<Transition>> {
    if n == 0 {
        return Err(usage("dataset size must be positive"));
    }
    let mut out = Vec::with_capacity(n);
    let mut state = mrp.sample_start(rng);
    while out.len() < n {
        let tr = mrp.sample_transition(state, rng)?;
        out.push(tr);
        state = match tr.next_state {
            Some(s) => s,
            None => mrp.sample_start(rng),
        };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solitaire_transitions() {
        let mut rng = RngStream::new(1);
        let n = 1_000_000;
        let mut done = 0;
        for _ in 0..n {
            let tr = solitaire_sample_transition(&mut rng);
            if tr.done {
                done += 1;
                assert_eq!(tr.reward, 0.0);
                assert_eq!(tr.next_state, None);
            } else {
                assert_eq!(tr.reward, 1.0);
                assert_eq!(tr.next_state, Some(0));
            }
        }
        let rate = done as f64 / n as f64;
        assert!((rate - 1.0 / 6.0).abs() < 0.002, "done rate {rate}");
    }

    #[test]
    fn bernoulli_transitions() {
        let mut rng = RngStream::new(2);
        let n = 1_000_000;
        let mut total = 0.0;
        for _ in 0..n {
            let tr = bernoulli_sample_transition(&mut rng);
            assert!(!tr.done);
            assert_eq!(tr.next_state, Some(0));
            total += tr.reward;
        }
        assert!((total / n as f64 - 0.5).abs() < 0.002);
    }

    #[test]
    fn solitaire_law_head_atoms() {
        for gamma in [0.5, 0.9, 0.99] {
            let law = solitaire_return_law(gamma, 1e-9).unwrap();
            let ReturnLaw::Atoms { values, probs } = &law else {
                panic!("expected atoms")
            };
            assert_eq!(values[0], 0.0);
            assert!((probs[0] - 1.0 / 6.0).abs() < 1e-15);
            assert!((values[1] - 1.0).abs() < 1e-15);
            assert!((probs[1] - 5.0 / 36.0).abs() < 1e-15);
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(solitaire_return_law(1.0, 1e-6).is_err());
        assert!(solitaire_return_law(0.9, 0.1).is_err());
    }

    #[test]
    fn bernoulli_law_points() {
        let law = bernoulli_return_law();
        assert_eq!(law.cdf(1.0), 0.5);
        assert_eq!(law.cdf(0.0), 0.0);
        assert_eq!(law.cdf(2.0), 1.0);
        assert_eq!(law.cdf(0.5), 0.25);
    }

    #[test]
    fn kernel_is_stochastic() {
        for n in [3, 5, 11, 21, 41] {
            let k = discrete_mc_kernel(n).unwrap();
            for i in 0..n {
                let row = k.row(i);
                assert!(row.iter().all(|&p| p >= 0.0), "n={n} row {i}");
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                for (j, &p) in row.iter().enumerate() {
                    if j + 1 < i || j > i + 1 {
                        assert_eq!(p, 0.0);
                    }
                }
            }
            assert_eq!(k.get(0, 0), 1.0);
            assert_eq!(k.get(n - 1, n - 1), 1.0);
        }
        assert!(discrete_mc_kernel(2).is_err());
    }

    #[test]
    fn chain_transitions_follow_kernel() {
        let k = discrete_mc_kernel(21).unwrap();
        let mut rng = RngStream::new(4);
        let n = 1_000_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            let tr = discrete_mc_sample_transition(1, &k, &mut rng).unwrap();
            assert_eq!(tr.done, tr.reward == 0.0);
            let j = match tr.next_state {
                None => 0,
                Some(s) => s,
            };
            assert!(j <= 2);
            counts[j] += 1;
        }
        for j in 0..3 {
            let freq = counts[j] as f64 / n as f64;
            assert!((freq - k.get(1, j)).abs() < 0.003, "col {j}: {freq}");
        }
        assert!(discrete_mc_sample_transition(0, &k, &mut rng).is_err());
        assert!(discrete_mc_sample_transition(20, &k, &mut rng).is_err());
    }

    #[test]
    fn dataset_statistics() {
        let n = 100_000;
        let sol = Mrp::new(MrpSpec::solitaire()).unwrap();
        let d = generate_dataset(&sol, n, &mut RngStream::new(5)).unwrap();
        let rate = d.iter().filter(|t| t.done).count() as f64 / n as f64;
        assert!((rate - 1.0 / 6.0).abs() < 0.01);

        let ber = Mrp::new(MrpSpec::bernoulli()).unwrap();
        let d = generate_dataset(&ber, n, &mut RngStream::new(5)).unwrap();
        assert!(d.iter().all(|t| !t.done));

        let mc = Mrp::new(MrpSpec::discrete_mc(21)).unwrap();
        let d = generate_dataset(&mc, n, &mut RngStream::new(5)).unwrap();
        let mut seen = [0usize; 21];
        for t in &d {
            seen[t.state] += 1;
            assert_eq!(t.done, t.next_state.is_none());
        }
        assert!(seen[1..20].iter().all(|&c| c >= 1));
        assert_eq!(seen[0] + seen[20], 0);
    }

    #[test]
    fn oracle_is_deterministic_and_bounded() {
        let gamma = 0.9;
        for spec in [MrpSpec::solitaire(), MrpSpec::discrete_mc(21)] {
            let mrp = Mrp::new(spec).unwrap();
            let start = mrp.interior_states()[0];
            let a = mc_return_oracle(&mrp, start, gamma, 2000, RolloutLimits::default(), &mut RngStream::new(3))
                .unwrap();
            let b = mc_return_oracle(&mrp, start, gamma, 2000, RolloutLimits::default(), &mut RngStream::new(3))
                .unwrap();
            assert_eq!(a, b);
            let (lo, hi) = a.law.support();
            assert!(lo >= 0.0 && hi <= 1.0 / (1.0 - gamma));
        }
        let ber = Mrp::new(MrpSpec::bernoulli()).unwrap();
        let o = mc_return_oracle(&ber, 0, 0.5, 5000, RolloutLimits::default(), &mut RngStream::new(3))
            .unwrap();
        let (lo, hi) = o.law.support();
        assert!(lo >= 0.0 && hi <= 2.0);
        assert_eq!(o.truncated_rollouts, 5000);
        assert!(o.truncation_tail < 1e-10);
    }
}
