//! Trajectory simulation, exact position evaluation, and the renewal
//! decomposition induced by visits to the distinguished direction (or by
//! split-chain regeneration marks in the Doeblin variant).

use rand::Rng;
use thiserror::Error;

use crate::directions::{
    doeblin_step, sample_categorical, step, DirectionSet, DoeblinKernel, TransitionKernel,
};
use crate::numeric::{norm2, CompensatedSum};
use crate::waiting::{sample_waiting, WaitingTimeModel};

#[derive(Debug, Error)]
pub enum WalkError {
    #[error("time {t} exceeds the simulated horizon {horizon}")]
    OutOfHorizon { t: f64, horizon: f64 },
    #[error("time {0} is negative")]
    NegativeTime(f64),
    #[error("the distinguished direction never occurs within the horizon; retry with a larger horizon")]
    NoRegeneration,
    #[error("horizon must be positive, got {0}")]
    BadHorizon(f64),
}

/// Where the direction chain starts.
#[derive(Debug, Clone, Copy, Default)]
pub enum InitialState {
    /// Draw eta_1 from the stationary distribution.
    #[default]
    Stationary,
    /// Start at a fixed state (the limit behavior does not depend on the initial law).
    Fixed(usize),
}

/// One realized walk: (direction index, duration) events plus cumulative
/// change times s_n with s_1 = 0. Positions are recomputed on demand from
/// cached prefix sums, so memory scales with the number of events.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Direction index of leg n (0-based storage; leg n = events[n-1]).
    directions: Vec<u32>,
    durations: Vec<f64>,
    /// s_n for n = 1..=N+1: s_1 = 0 and s_{n+1} = s_n + T_n.
    cumulative_times: Vec<f64>,
    /// Prefix positions: position at s_n, flattened d per entry.
    prefix_positions: Vec<f64>,
    dim: usize,
    horizon: f64,
    /// Split-chain regeneration marks, if the walk was driven by a Doeblin
    /// kernel: regen[n-1] is true when leg n started a fresh block.
    regeneration_marks: Option<Vec<bool>>,
}

impl Trajectory {
    fn build(
        directions: Vec<u32>,
        durations: Vec<f64>,
        dirs: &DirectionSet,
        horizon: f64,
        regeneration_marks: Option<Vec<bool>>,
    ) -> Self {
        let n = durations.len();
        let dim = dirs.dim();
        let mut cumulative_times = Vec::with_capacity(n + 1);
        let mut clock = CompensatedSum::new();
        cumulative_times.push(0.0);
        let mut prefix_positions = vec![0.0; (n + 1) * dim];
        let mut pos: Vec<CompensatedSum> = vec![CompensatedSum::new(); dim];
        for i in 0..n {
            clock.add(durations[i]);
            cumulative_times.push(clock.value());
            let v = dirs.vector(directions[i] as usize);
            for (c, acc) in pos.iter_mut().enumerate() {
                acc.add(durations[i] * v[c]);
                prefix_positions[(i + 1) * dim + c] = acc.value();
            }
        }
        Self {
            directions,
            durations,
            cumulative_times,
            prefix_positions,
            dim,
            horizon,
            regeneration_marks,
        }
    }

    /// Number of legs N (with s_{N+1} >= horizon).
    pub fn num_events(&self) -> usize {
        self.durations.len()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Direction index of leg n (1-based, matching s_n).
    pub fn direction(&self, n: usize) -> usize {
        self.directions[n - 1] as usize
    }

    pub fn duration(&self, n: usize) -> f64 {
        self.durations[n - 1]
    }

    /// s_n for n in 1..=N+1.
    pub fn change_time(&self, n: usize) -> f64 {
        self.cumulative_times[n - 1]
    }

    pub fn regeneration_marks(&self) -> Option<&[bool]> {
        self.regeneration_marks.as_deref()
    }

    /// N_t = sup{k >= 1 : s_k <= t}; at least 1 since s_1 = 0.
    pub fn count_at(&self, t: f64) -> usize {
        // cumulative_times[i] = s_{i+1}; find the last index with s_k <= t
        let mut lo = 0usize;
        let mut hi = self.cumulative_times.len();
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.cumulative_times[mid] <= t {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        lo.max(1)
    }

    /// Exact position X_t: completed legs plus the partial current leg.
    pub fn position_at(&self, dirs: &DirectionSet, t: f64) -> Result<Vec<f64>, WalkError> {
        if t < 0.0 {
            return Err(WalkError::NegativeTime(t));
        }
        if t > self.horizon {
            return Err(WalkError::OutOfHorizon {
                t,
                horizon: self.horizon,
            });
        }
        let n_t = self.count_at(t);
        let s_nt = self.change_time(n_t);
        let mut x = self.prefix_positions[(n_t - 1) * self.dim..n_t * self.dim].to_vec();
        if n_t <= self.num_events() {
            let v = dirs.vector(self.direction(n_t));
            for (c, xi) in x.iter_mut().enumerate() {
                *xi += (t - s_nt) * v[c];
            }
        }
        Ok(x)
    }

    /// Position increment over legs (from, to], i.e. sum of T_j eta_j.
    fn leg_sum(&self, from: usize, to: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for c in 0..self.dim {
            out[c] =
                self.prefix_positions[to * self.dim + c] - self.prefix_positions[from * self.dim + c];
        }
        out
    }
}

/// Simulates one trajectory: directions from the kernel, durations i.i.d.
/// from the model, legs generated until the cumulative time first reaches
/// the horizon (the in-flight leg is kept, as the position formula needs it).
pub fn simulate<R: Rng + ?Sized>(
    dirs: &DirectionSet,
    kernel: &TransitionKernel,
    model: &WaitingTimeModel,
    initial: InitialState,
    initial_law: &[f64],
    horizon: f64,
    rng: &mut R,
) -> Result<Trajectory, WalkError> {
    if !(horizon > 0.0) {
        return Err(WalkError::BadHorizon(horizon));
    }
    let mut state = match initial {
        InitialState::Stationary => sample_categorical(initial_law, rng),
        InitialState::Fixed(s) => s,
    };
    let mut directions = Vec::new();
    let mut durations = Vec::new();
    let mut clock = CompensatedSum::new();
    loop {
        directions.push(state as u32);
        let t = sample_waiting(model, rng);
        durations.push(t);
        clock.add(t);
        if clock.value() >= horizon {
            break;
        }
        state = step(kernel, state, rng);
    }
    Ok(Trajectory::build(directions, durations, dirs, horizon, None))
}

/// Doeblin variant: the chain advances by split-chain steps and each leg
/// records whether it regenerated (drew from the base measure).
pub fn simulate_doeblin<R: Rng + ?Sized>(
    dirs: &DirectionSet,
    kernel: &DoeblinKernel,
    model: &WaitingTimeModel,
    initial: InitialState,
    initial_law: &[f64],
    horizon: f64,
    rng: &mut R,
) -> Result<Trajectory, WalkError> {
    if !(horizon > 0.0) {
        return Err(WalkError::BadHorizon(horizon));
    }
    let mut state = match initial {
        InitialState::Stationary => sample_categorical(initial_law, rng),
        InitialState::Fixed(s) => s,
    };
    let mut directions = Vec::new();
    let mut durations = Vec::new();
    // marks[j-1] is the regeneration coin of the step leaving leg j, so a
    // cycle (tau_i, tau_{i+1}] starts at a state drawn fresh from the base
    // measure -- that alignment is what makes the blocks i.i.d.
    let mut marks = Vec::new();
    let mut clock = CompensatedSum::new();
    loop {
        directions.push(state as u32);
        let t = sample_waiting(model, rng);
        durations.push(t);
        clock.add(t);
        if clock.value() >= horizon {
            marks.push(false);
            break;
        }
        let (next, regen) = doeblin_step(kernel, state, rng);
        marks.push(regen);
        state = next;
    }
    Ok(Trajectory::build(
        directions,
        durations,
        dirs,
        horizon,
        Some(marks),
    ))
}

/// Evaluates positions at a sorted ascending list of times while the walk
/// is generated, without storing the trajectory. Draws the duration and
/// chain streams in the same order as `simulate`, so a given seed yields
/// the same walk. `advance` supplies the chain step (finite or split-chain).
pub fn stream_positions<R: Rng + ?Sized>(
    dirs: &DirectionSet,
    model: &WaitingTimeModel,
    mut state: usize,
    times: &[f64],
    mut advance: impl FnMut(usize, &mut R) -> usize,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let dim = dirs.dim();
    let mut out = Vec::with_capacity(times.len());
    let mut idx = 0usize;
    let mut clock = CompensatedSum::new();
    let mut pos: Vec<CompensatedSum> = vec![CompensatedSum::new(); dim];
    while idx < times.len() {
        let dur = sample_waiting(model, rng);
        let s_n = clock.value();
        clock.add(dur);
        let s_next = clock.value();
        let v = dirs.vector(state);
        while idx < times.len() && times[idx] < s_next {
            let frac = times[idx] - s_n;
            out.push(
                (0..dim)
                    .map(|c| pos[c].value() + frac * v[c])
                    .collect::<Vec<f64>>(),
            );
            idx += 1;
        }
        for (c, acc) in pos.iter_mut().enumerate() {
            acc.add(dur * v[c]);
        }
        if idx == times.len() {
            break;
        }
        state = advance(state, rng);
    }
    out
}

/// Per-trajectory renewal data: regeneration step indices tau_i, cycle
/// increments xi_i, cycle time-lengths r_k, and the count functions c(t)
/// and c_v(t).
#[derive(Debug, Clone)]
pub struct RenewalDecomposition {
    /// tau_0 = 0 < tau_1 < tau_2 < ... (step indices of regenerations).
    pub tau: Vec<usize>,
    /// xi_i = sum_{j = tau_i + 1}^{tau_{i+1}} T_j eta_j for each completed cycle.
    pub xi: Vec<Vec<f64>>,
    /// r_k = sum_{j = tau_k + 1}^{tau_{k+1}} T_j.
    pub r: Vec<f64>,
    /// s_{tau_i} for i >= 1, for evaluating c(t) by binary search.
    regeneration_times: Vec<f64>,
    /// Per-direction change times: sorted s_j for each direction v.
    direction_times: Vec<Vec<f64>>,
    num_directions: usize,
}

impl RenewalDecomposition {
    /// Number of completed regeneration cycles before time t.
    pub fn count(&self, t: f64) -> usize {
        self.regeneration_times.partition_point(|&s| s <= t)
    }

    /// c_v(t): occurrences of direction v among the first N_t legs.
    pub fn direction_count(&self, v: usize, t: f64) -> usize {
        self.direction_times[v].partition_point(|&s| s <= t)
    }

    /// c_v(t) / t for every direction.
    pub fn occupation_rates(&self, t: f64) -> Vec<f64> {
        (0..self.num_directions)
            .map(|v| self.direction_count(v, t) as f64 / t)
            .collect()
    }

    /// Cycle step-lengths tau_{i+1} - tau_i, one per completed cycle,
    /// excluding the initial (non-i.i.d.) segment.
    pub fn cycle_lengths(&self) -> Vec<usize> {
        self.tau.windows(2).skip(1).map(|w| w[1] - w[0]).collect()
    }
}

/// Extracts the renewal decomposition with regenerations at visits to the
/// distinguished direction u_1 (or at split-chain marks when present).
pub fn decompose(
    traj: &Trajectory,
    dirs: &DirectionSet,
) -> Result<RenewalDecomposition, WalkError> {
    let n = traj.num_events();
    let mut tau = vec![0usize];
    match traj.regeneration_marks() {
        Some(marks) => {
            for j in 1..=n {
                if marks[j - 1] {
                    tau.push(j);
                }
            }
        }
        None => {
            let u1 = dirs.distinguished() as u32;
            for j in 1..=n {
                if traj.directions[j - 1] == u1 {
                    tau.push(j);
                }
            }
        }
    }
    if tau.len() < 2 {
        return Err(WalkError::NoRegeneration);
    }
    let mut xi = Vec::with_capacity(tau.len() - 1);
    let mut r = Vec::with_capacity(tau.len() - 1);
    for w in tau.windows(2) {
        let (a, b) = (w[0], w[1]);
        xi.push(traj.leg_sum(a, b));
        r.push(traj.change_time(b + 1) - traj.change_time(a + 1));
    }
    let regeneration_times = tau[1..]
        .iter()
        .map(|&j| traj.change_time(j))
        .collect();
    let mut direction_times = vec![Vec::new(); dirs.len()];
    for j in 1..=n {
        direction_times[traj.direction(j)].push(traj.change_time(j));
    }
    Ok(RenewalDecomposition {
        tau,
        xi,
        r,
        regeneration_times,
        direction_times,
        num_directions: dirs.len(),
    })
}

/// Residual of the reconstruction identity at time t: the position must
/// equal xi_0 + sum_{i=1}^{c(t)-1} xi_i + the partial-cycle legs + the
/// in-flight fragment, exactly.
pub fn reconstruction_residual(
    traj: &Trajectory,
    dirs: &DirectionSet,
    decomp: &RenewalDecomposition,
    t: f64,
) -> Result<f64, WalkError> {
    let x = traj.position_at(dirs, t)?;
    let n_t = traj.count_at(t);
    // legs 1..=full are complete at time t; leg n_t contributes only its
    // elapsed fragment
    let full = n_t - 1;
    let mut c = decomp.count(t);
    // c(t) counts regeneration legs that have started by t; the last one
    // may be the in-flight leg itself, whose cycle is then still open
    if c > 0 && decomp.tau[c] > full {
        c -= 1;
    }
    let mut recon = vec![0.0; traj.dim()];
    // xi_0 + sum of completed cycle increments
    for xi in &decomp.xi[..c] {
        for (acc, &v) in recon.iter_mut().zip(xi) {
            *acc += v;
        }
    }
    // whole legs of the open cycle: j in (tau_c, full]
    let partial = traj.leg_sum(decomp.tau[c], full);
    for (acc, v) in recon.iter_mut().zip(partial) {
        *acc += v;
    }
    // in-flight fragment
    let s_nt = traj.change_time(n_t);
    if n_t <= traj.num_events() {
        let v = dirs.vector(traj.direction(n_t));
        for (acc, &vc) in recon.iter_mut().zip(v) {
            *acc += (t - s_nt) * vc;
        }
    }
    let diff: Vec<f64> = x.iter().zip(&recon).map(|(a, b)| a - b).collect();
    Ok(norm2(&diff))
}

/// Empirical tail report for cycle step-lengths, against the exponential
/// bound on P(tau_{i+1} - tau_i > t).
#[derive(Debug, Clone)]
pub struct CycleLengthTail {
    /// (threshold, empirical exceedance probability), at integer thresholds
    /// with at least one exceedance.
    pub exceedance: Vec<(usize, f64)>,
    /// Decay rate of the fitted exponential on the log-tail.
    pub decay_rate: f64,
    /// R^2 of the log-linear fit.
    pub r_squared: f64,
    pub mean_length: f64,
}

/// Fits an exponential envelope to the empirical tail of cycle lengths.
pub fn cycle_length_tail(lengths: &[usize]) -> CycleLengthTail {
    let n = lengths.len() as f64;
    let max_len = lengths.iter().copied().max().unwrap_or(0);
    let mut exceedance = Vec::new();
    for k in 0..max_len {
        let count = lengths.iter().filter(|&&l| l > k).count();
        if count == 0 {
            break;
        }
        exceedance.push((k, count as f64 / n));
    }
    // fit log P(len > k) ~ intercept - rate * k on thresholds with enough
    // mass for the empirical log to be stable
    let pts: Vec<(f64, f64)> = exceedance
        .iter()
        .filter(|(_, p)| *p * n >= 10.0)
        .map(|&(k, p)| (k as f64, p.ln()))
        .collect();
    let (decay_rate, r_squared) = if pts.len() >= 2 {
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let (slope, _, r2) = crate::numeric::linear_fit(&xs, &ys);
        (-slope, r2)
    } else {
        (f64::INFINITY, 1.0)
    };
    let mean_length = lengths.iter().map(|&l| l as f64).sum::<f64>() / n;
    CycleLengthTail {
        exceedance,
        decay_rate,
        r_squared,
        mean_length,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::directions::stationary_distribution;
    use crate::numeric::{dot, mean, norm2, variance};
    use crate::rng::member_rng;

    fn two_cycle() -> (DirectionSet, TransitionKernel) {
        let dirs = DirectionSet::new(2, vec![vec![1.0, 0.0], vec![0.0, 1.0]], 0).unwrap();
        let kernel = TransitionKernel::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        (dirs, kernel)
    }

    fn four_dirs() -> (DirectionSet, TransitionKernel) {
        let dirs = DirectionSet::new(
            2,
            vec![
                vec![1.0, 0.0],
                vec![0.0, 1.0],
                vec![-1.0, 0.0],
                vec![0.0, -1.0],
            ],
            0,
        )
        .unwrap();
        let kernel = TransitionKernel::new(vec![
            vec![0.4, 0.3, 0.2, 0.1],
            vec![0.25, 0.35, 0.25, 0.15],
            vec![0.2, 0.2, 0.4, 0.2],
            vec![0.3, 0.2, 0.1, 0.4],
        ])
        .unwrap();
        (dirs, kernel)
    }

    fn simulate_fixed(
        dirs: &DirectionSet,
        kernel: &TransitionKernel,
        model: &WaitingTimeModel,
        horizon: f64,
        seed: u64,
    ) -> Trajectory {
        let law = stationary_distribution(kernel, dirs).unwrap();
        let mut rng = member_rng(seed, 0);
        simulate(
            dirs,
            kernel,
            model,
            InitialState::Stationary,
            &law.pi,
            horizon,
            &mut rng,
        )
        .unwrap()
    }

    #[test]
    fn deterministic_alternating_walk() {
        let (dirs, kernel) = two_cycle();
        let model = WaitingTimeModel::Deterministic { c: 1.0 };
        let mut rng = member_rng(20, 0);
        let traj = simulate(
            &dirs,
            &kernel,
            &model,
            InitialState::Fixed(0),
            &[0.5, 0.5],
            3.5,
            &mut rng,
        )
        .unwrap();
        assert_eq!(traj.num_events(), 4);
        for n in 1..=4 {
            assert_eq!(traj.change_time(n), (n - 1) as f64);
            assert_eq!(traj.direction(n), (n - 1) % 2);
        }
        assert_eq!(traj.change_time(5), 4.0);
    }

    #[test]
    fn event_count_lower_bound() {
        let (dirs, kernel) = four_dirs();
        let model = WaitingTimeModel::Exponential { rate: 1.0 };
        let traj = simulate_fixed(&dirs, &kernel, &model, 500.0, 21);
        let max_dur = (1..=traj.num_events())
            .map(|n| traj.duration(n))
            .fold(0.0, f64::max);
        assert!(traj.num_events() >= (traj.horizon() / max_dur).ceil() as usize);
    }

    #[test]
    fn renewal_rate_matches_mean_duration() {
        let (dirs, kernel) = four_dirs();
        let model = WaitingTimeModel::Exponential { rate: 1.0 };
        let t = 1e5;
        let traj = simulate_fixed(&dirs, &kernel, &model, t, 22);
        let rate = traj.count_at(t) as f64 / t;
        assert!((rate - 1.0).abs() < 0.01, "N_t / t = {rate}");
    }

    #[test]
    fn position_at_zero_is_origin() {
        let (dirs, kernel) = four_dirs();
        let model = WaitingTimeModel::Exponential { rate: 1.0 };
        let traj = simulate_fixed(&dirs, &kernel, &model, 100.0, 23);
        assert_eq!(traj.position_at(&dirs, 0.0).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn position_hand_case_partial_leg() {
        // legs (e1, 2), (e2, 3): X_4 = (2, 2)
        let dirs = DirectionSet::new(2, vec![vec![1.0, 0.0], vec![0.0, 1.0]], 0).unwrap();
        let traj = Trajectory::build(vec![0, 1], vec![2.0, 3.0], &dirs, 4.5, None);
        let x = traj.position_at(&dirs, 4.0).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-12);
        assert!((x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn unit_speed_bound() {
        let (dirs, kernel) = four_dirs();
        let model = WaitingTimeModel::Pareto {
            alpha: 1.5,
            scale: 1.0,
        };
        let traj = simulate_fixed(&dirs, &kernel, &model, 1000.0, 24);
        let mut rng = member_rng(25, 0);
        for _ in 0..100 {
            let t: f64 = rand::Rng::gen_range(&mut rng, 0.0..1000.0);
            let x = traj.position_at(&dirs, t).unwrap();
            assert!(norm2(&x) <= t + 1e-9);
        }
    }

    #[test]
    fn out_of_horizon_rejected() {
        let (dirs, kernel) = two_cycle();
        let model = WaitingTimeModel::Deterministic { c: 1.0 };
        let traj = simulate_fixed(&dirs, &kernel, &model, 5.0, 26);
        assert!(matches!(
            traj.position_at(&dirs, 5.5),
            Err(WalkError::OutOfHorizon { .. })
        ));
    }

    #[test]
    fn decompose_deterministic_two_cycle() {
        // u_1 = e1 at index 0, chain alternates 0,1,0,1,...; visits to u_1
        // after step 0 are steps 1, 3, 5, ... and every complete cycle is
        // (e2 then e1) = (1, 1)
        let (dirs, kernel) = two_cycle();
        let model = WaitingTimeModel::Deterministic { c: 1.0 };
        let mut rng = member_rng(27, 0);
        let traj = simulate(
            &dirs,
            &kernel,
            &model,
            InitialState::Fixed(0),
            &[0.5, 0.5],
            20.5,
            &mut rng,
        )
        .unwrap();
        let d = decompose(&traj, &dirs).unwrap();
        for (i, &tau) in d.tau.iter().enumerate().skip(1) {
            assert_eq!(tau, 2 * i - 1);
        }
        for xi in d.xi.iter().skip(1) {
            assert!((xi[0] - 1.0).abs() < 1e-12);
            assert!((xi[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reconstruction_identity_exact() {
        let (dirs, kernel) = four_dirs();
        let models = [
            WaitingTimeModel::Exponential { rate: 1.0 },
            WaitingTimeModel::Pareto {
                alpha: 1.5,
                scale: 1.0,
            },
            WaitingTimeModel::Lognormal { m: 0.0, s: 1.0 },
        ];
        let mut rng = member_rng(28, 0);
        for (i, model) in models.iter().enumerate() {
            let traj = simulate_fixed(&dirs, &kernel, model, 2000.0, 29 + i as u64);
            let d = decompose(&traj, &dirs).unwrap();
            for _ in 0..100 {
                let t: f64 = rand::Rng::gen_range(&mut rng, 0.0..2000.0);
                let res = reconstruction_residual(&traj, &dirs, &d, t).unwrap();
                assert!(res < 1e-9, "residual {res} at t={t}");
            }
        }
    }

    #[test]
    fn xi_norm_bounded_by_cycle_duration() {
        let (dirs, kernel) = four_dirs();
        let model = WaitingTimeModel::Pareto {
            alpha: 1.2,
            scale: 1.0,
        };
        let traj = simulate_fixed(&dirs, &kernel, &model, 5000.0, 30);
        let d = decompose(&traj, &dirs).unwrap();
        for (xi, &r) in d.xi.iter().zip(&d.r) {
            assert!(norm2(xi) <= r + 1e-9);
        }
    }

    #[test]
    fn count_brackets_n_t() {
        let (dirs, kernel) = four_dirs();
        let model = WaitingTimeModel::Exponential { rate: 1.0 };
        let traj = simulate_fixed(&dirs, &kernel, &model, 2000.0, 31);
        let d = decompose(&traj, &dirs).unwrap();
        let mut rng = member_rng(32, 0);
        for _ in 0..50 {
            let t: f64 = rand::Rng::gen_range(&mut rng, 1.0..2000.0);
            let c = d.count(t);
            let n_t = traj.count_at(t);
            assert!(d.tau[c.min(d.tau.len() - 1)] <= n_t);
            if c + 1 < d.tau.len() {
                assert!(n_t < d.tau[c + 1]);
            }
        }
    }

    #[test]
    fn direction_counts_partition_steps() {
        let (dirs, kernel) = four_dirs();
        let model = WaitingTimeModel::Exponential { rate: 1.0 };
        let traj = simulate_fixed(&dirs, &kernel, &model, 2000.0, 33);
        let d = decompose(&traj, &dirs).unwrap();
        for t in [1.0, 17.3, 500.0, 1999.0] {
            let total: usize = (0..dirs.len()).map(|v| d.direction_count(v, t)).sum();
            assert_eq!(total, traj.count_at(t));
        }
        // c_{u_1}(t) = c(t)
        assert_eq!(d.direction_count(0, 1500.0), d.count(1500.0));
    }

    #[test]
    fn occupation_rates_symmetric_chain() {
        let dirs = DirectionSet::new(2, vec![vec![1.0, 0.0], vec![0.0, 1.0]], 0).unwrap();
        let kernel = TransitionKernel::new(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let model = WaitingTimeModel::Exponential { rate: 1.0 };
        let t = 1e5;
        let traj = simulate_fixed(&dirs, &kernel, &model, t, 34);
        let d = decompose(&traj, &dirs).unwrap();
        for rate in d.occupation_rates(t) {
            assert!((rate - 0.5).abs() < 0.005, "rate {rate}");
        }
    }

    #[test]
    fn occupation_rate_heavy_durations() {
        let (dirs, kernel) = four_dirs();
        let model = WaitingTimeModel::Pareto {
            alpha: 1.5,
            scale: 1.0,
        };
        let law = stationary_distribution(&kernel, &dirs).unwrap();
        let t = 1e5;
        let traj = simulate_fixed(&dirs, &kernel, &model, t, 35);
        let d = decompose(&traj, &dirs).unwrap();
        let expected = law.pi[0] / 3.0; // E T = 3
        let rate = d.count(t) as f64 / t;
        assert!(
            (rate - expected).abs() / expected < 0.02,
            "c(t)/t = {rate}, expected {expected}"
        );
    }

    #[test]
    fn cycle_mean_increment_identity() {
        // E(xi) = pi_1^{-1} mu E(T)
        let (dirs, kernel) = four_dirs();
        let model = WaitingTimeModel::Exponential { rate: 1.0 };
        let law = stationary_distribution(&kernel, &dirs).unwrap();
        let traj = simulate_fixed(&dirs, &kernel, &model, 2e5, 36);
        let d = decompose(&traj, &dirs).unwrap();
        let cycles: Vec<&Vec<f64>> = d.xi.iter().skip(1).collect();
        assert!(cycles.len() >= 10_000);
        for c in 0..2 {
            let vals: Vec<f64> = cycles.iter().map(|xi| xi[c]).collect();
            let m = mean(&vals);
            let se = (variance(&vals) / vals.len() as f64).sqrt();
            let expected = law.drift[c] / law.pi[0]; // E T = 1
            assert!(
                (m - expected).abs() < 3.0 * se,
                "component {c}: {m} vs {expected} (se {se})"
            );
        }
    }

    #[test]
    fn cycle_pairs_uncorrelated_at_lag_one() {
        let (dirs, kernel) = four_dirs();
        let model = WaitingTimeModel::Exponential { rate: 1.0 };
        let traj = simulate_fixed(&dirs, &kernel, &model, 1e5, 37);
        let d = decompose(&traj, &dirs).unwrap();
        let lens: Vec<f64> = d.cycle_lengths().iter().map(|&l| l as f64).collect();
        let xi_x: Vec<f64> = d.xi.iter().skip(1).map(|xi| xi[0]).collect();
        for series in [&lens, &xi_x] {
            let n = series.len() - 1;
            let mu = mean(series);
            let var = variance(series);
            let cov: f64 = series
                .windows(2)
                .map(|w| (w[0] - mu) * (w[1] - mu))
                .sum::<f64>()
                / n as f64;
            let rho = cov / var;
            assert!(rho.abs() < 3.0 / (n as f64).sqrt(), "lag-1 rho {rho}");
        }
    }

    #[test]
    fn centering_identity_shifted_directions() {
        // the walk over eta - mu differs from the walk over eta by exactly
        // mu * t; re-evaluate positions with shifted direction vectors
        let (dirs, kernel) = four_dirs();
        let law = stationary_distribution(&kernel, &dirs).unwrap();
        let model = WaitingTimeModel::Exponential { rate: 1.0 };
        let traj = simulate_fixed(&dirs, &kernel, &model, 1000.0, 38);
        // shifted "directions" are not unit vectors; evaluate by hand
        let mut rng = member_rng(39, 0);
        for _ in 0..20 {
            let t: f64 = rand::Rng::gen_range(&mut rng, 0.0..1000.0);
            let x = traj.position_at(&dirs, t).unwrap();
            let n_t = traj.count_at(t);
            let mut shifted = vec![0.0; 2];
            for j in 1..n_t {
                let v = dirs.vector(traj.direction(j));
                for c in 0..2 {
                    shifted[c] += traj.duration(j) * (v[c] - law.drift[c]);
                }
            }
            if n_t <= traj.num_events() {
                let v = dirs.vector(traj.direction(n_t));
                for c in 0..2 {
                    shifted[c] += (t - traj.change_time(n_t)) * (v[c] - law.drift[c]);
                }
            }
            for c in 0..2 {
                let lhs = x[c] - shifted[c];
                let rhs = law.drift[c] * t;
                assert!((lhs - rhs).abs() < 1e-8, "t={t}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let (dirs, kernel) = four_dirs();
        let model = WaitingTimeModel::Pareto {
            alpha: 1.5,
            scale: 1.0,
        };
        let a = simulate_fixed(&dirs, &kernel, &model, 1000.0, 40);
        let b = simulate_fixed(&dirs, &kernel, &model, 1000.0, 40);
        assert_eq!(a.num_events(), b.num_events());
        for n in 1..=a.num_events() {
            assert_eq!(a.direction(n), b.direction(n));
            assert_eq!(a.duration(n).to_bits(), b.duration(n).to_bits());
        }
    }

    #[test]
    fn cycle_tail_deterministic_two_cycle() {
        let (dirs, kernel) = two_cycle();
        let model = WaitingTimeModel::Deterministic { c: 1.0 };
        let mut rng = member_rng(41, 0);
        let traj = simulate(
            &dirs,
            &kernel,
            &model,
            InitialState::Fixed(0),
            &[0.5, 0.5],
            5000.0,
            &mut rng,
        )
        .unwrap();
        let d = decompose(&traj, &dirs).unwrap();
        let lengths = d.cycle_lengths();
        assert!(lengths.iter().all(|&l| l == 2));
        let tail = cycle_length_tail(&lengths);
        assert_eq!(tail.mean_length, 2.0);
        assert!(tail.exceedance.iter().all(|&(k, p)| k >= 2 || p > 0.0));
        assert!(!tail.exceedance.iter().any(|&(k, _)| k > 1));
    }

    #[test]
    fn cycle_tail_geometric_return() {
        // uniform i.i.d. kernel over 4 states: return to u_1 each step with
        // probability 1/4, so lengths are geometric(1/4)
        let dirs = DirectionSet::new(
            2,
            vec![
                vec![1.0, 0.0],
                vec![0.0, 1.0],
                vec![-1.0, 0.0],
                vec![0.0, -1.0],
            ],
            0,
        )
        .unwrap();
        let kernel = TransitionKernel::new(vec![vec![0.25; 4]; 4]).unwrap();
        let model = WaitingTimeModel::Exponential { rate: 1.0 };
        let traj = simulate_fixed(&dirs, &kernel, &model, 2e5, 42);
        let d = decompose(&traj, &dirs).unwrap();
        let lengths = d.cycle_lengths();
        let n = lengths.len() as f64;
        let tail = cycle_length_tail(&lengths);
        for &(k, p) in tail.exceedance.iter().take(8) {
            let expected = 0.75f64.powi(k as i32);
            let sigma = (expected * (1.0 - expected) / n).sqrt();
            assert!(
                (p - expected).abs() < 3.0 * sigma.max(1e-4),
                "threshold {k}: {p} vs {expected}"
            );
        }
        // mean cycle length -> pi_1^{-1} = 4
        assert!((tail.mean_length - 4.0).abs() / 4.0 < 0.02);
        // log-tail is linear for a geometric law
        assert!(tail.r_squared > 0.99);
        assert!((tail.decay_rate - (0.75f64.ln().abs())).abs() < 0.02);
    }

    #[test]
    fn doeblin_walk_has_marks_and_decomposes() {
        let n = 4;
        let psi = vec![0.25; n];
        let mut rows = Vec::new();
        for x in 0..n {
            let mut row = vec![0.0; n];
            for (j, r) in row.iter_mut().enumerate() {
                let smear = if j == x { 0.7 } else { 0.1 };
                *r = 0.5 * 0.25 + 0.5 * smear;
            }
            rows.push(row);
        }
        let doeblin = DoeblinKernel::new(psi, 2.0, rows).unwrap();
        let dirs = DirectionSet::new(
            2,
            vec![
                vec![1.0, 0.0],
                vec![0.0, 1.0],
                vec![-1.0, 0.0],
                vec![0.0, -1.0],
            ],
            0,
        )
        .unwrap();
        let model = WaitingTimeModel::Exponential { rate: 1.0 };
        let mut rng = member_rng(43, 0);
        let traj = simulate_doeblin(
            &dirs,
            &doeblin,
            &model,
            InitialState::Fixed(0),
            &[0.25; 4],
            2e4,
            &mut rng,
        )
        .unwrap();
        let d = decompose(&traj, &dirs).unwrap();
        // cycle lengths geometric(1/2): mean 2
        let lengths = d.cycle_lengths();
        let m = mean(&lengths.iter().map(|&l| l as f64).collect::<Vec<_>>());
        assert!((m - 2.0).abs() < 0.1, "mean doeblin cycle length {m}");
        // reconstruction identity holds with split-chain regenerations too
        for t in [13.0, 500.0, 1.9e4] {
            let res = reconstruction_residual(&traj, &dirs, &d, t).unwrap();
            assert!(res < 1e-9);
        }
    }

    #[test]
    fn no_regeneration_reported() {
        let (dirs, kernel) = two_cycle();
        let model = WaitingTimeModel::Deterministic { c: 10.0 };
        let mut rng = member_rng(44, 0);
        // horizon shorter than one leg starting from state 1: chain never
        // revisits u_1 within the horizon
        let traj = simulate(
            &dirs,
            &kernel,
            &model,
            InitialState::Fixed(1),
            &[0.0, 1.0],
            5.0,
            &mut rng,
        )
        .unwrap();
        assert!(matches!(
            decompose(&traj, &dirs),
            Err(WalkError::NoRegeneration)
        ));
    }

    #[test]
    fn stream_positions_matches_stored_trajectory() {
        let (dirs, kernel) = four_dirs();
        let model = WaitingTimeModel::Pareto {
            alpha: 1.5,
            scale: 1.0,
        };
        let times: Vec<f64> = vec![0.0, 3.7, 50.0, 333.3, 999.0];
        let mut rng = member_rng(46, 0);
        let streamed = stream_positions(
            &dirs,
            &model,
            2,
            &times,
            |s, r| step(&kernel, s, r),
            &mut rng,
        );
        let mut rng = member_rng(46, 0);
        let traj = simulate(
            &dirs,
            &kernel,
            &model,
            InitialState::Fixed(2),
            &[0.25; 4],
            1000.0,
            &mut rng,
        )
        .unwrap();
        for (t, sx) in times.iter().zip(&streamed) {
            let x = traj.position_at(&dirs, *t).unwrap();
            for c in 0..2 {
                assert!((x[c] - sx[c]).abs() < 1e-9, "t={t}");
            }
        }
    }

    #[test]
    fn lln_direction_projection() {
        // X_t / t -> mu
        let (dirs, kernel) = four_dirs();
        let law = stationary_distribution(&kernel, &dirs).unwrap();
        let model = WaitingTimeModel::Exponential { rate: 1.0 };
        let t = 1e5;
        let traj = simulate_fixed(&dirs, &kernel, &model, t, 45);
        let x = traj.position_at(&dirs, t).unwrap();
        let err: Vec<f64> = x.iter().zip(&law.drift).map(|(a, b)| a / t - b).collect();
        assert!(norm2(&err) < 0.02, "drift error {}", norm2(&err));
        let _ = dot(&x, &law.drift);
    }
}
