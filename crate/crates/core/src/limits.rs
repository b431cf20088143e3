//! Scaled statistics for the walk's limit regimes: LLN error, diffusive
//! paths, stable-normalized positions, ballistic ratios, the i.i.d.
//! cycle-sum oracle, and iterated-logarithm envelopes.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::directions::{
    doeblin_step, sample_categorical, stationary_distribution, step, DirectionError, DirectionSet,
    DoeblinKernel, StationaryLaw, TransitionKernel,
};
use crate::numeric::{dot, norm2};
use crate::rng::member_rng;
use crate::waiting::{norming, sample_waiting, WaitingError, WaitingTimeModel};
use crate::walk::{
    simulate, simulate_doeblin, stream_positions, InitialState, Trajectory, WalkError,
};

#[derive(Debug, Error)]
pub enum LimitsError {
    #[error(transparent)]
    Walk(#[from] WalkError),
    #[error(transparent)]
    Waiting(#[from] WaitingError),
    #[error(transparent)]
    Direction(#[from] DirectionError),
    #[error("statistic requires tail index in {expected}, model has {got:?}")]
    RegimeMismatch {
        expected: &'static str,
        got: Option<f64>,
    },
    #[error("E(T_1) is not finite; the cycle rate b is undefined")]
    MeanUnavailable,
    #[error("iterated-logarithm normalizer undefined at t = {0} (ln ln t <= 0)")]
    DomainError(f64),
}

/// Direction chain driving the walk: a finite kernel with regeneration at
/// the distinguished direction, or a Doeblin-minorized kernel with
/// split-chain regeneration.
#[derive(Debug, Clone)]
pub enum Chain {
    Finite(TransitionKernel),
    Doeblin(DoeblinKernel),
}

/// Everything needed to simulate: directions, chain, waiting-time model,
/// and the derived stationary law. Immutable and shared across threads;
/// each simulation owns its random stream.
#[derive(Debug, Clone)]
pub struct System {
    pub dirs: DirectionSet,
    pub chain: Chain,
    pub model: WaitingTimeModel,
    pub law: StationaryLaw,
    pub initial: InitialState,
}

impl System {
    pub fn new(
        dirs: DirectionSet,
        chain: Chain,
        model: WaitingTimeModel,
        initial: InitialState,
    ) -> Result<Self, LimitsError> {
        let law = match &chain {
            Chain::Finite(k) => stationary_distribution(k, &dirs)?,
            Chain::Doeblin(k) => stationary_distribution(&k.as_transition_kernel()?, &dirs)?,
        };
        Ok(Self {
            dirs,
            chain,
            model,
            law,
            initial,
        })
    }

    fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match self.initial {
            InitialState::Stationary => sample_categorical(&self.law.pi, rng),
            InitialState::Fixed(s) => s,
        }
    }

    fn advance<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        match &self.chain {
            Chain::Finite(k) => step(k, state, rng),
            Chain::Doeblin(k) => doeblin_step(k, state, rng).0,
        }
    }

    pub fn simulate_trajectory<R: Rng + ?Sized>(
        &self,
        horizon: f64,
        rng: &mut R,
    ) -> Result<Trajectory, WalkError> {
        match &self.chain {
            Chain::Finite(k) => simulate(
                &self.dirs,
                k,
                &self.model,
                self.initial,
                &self.law.pi,
                horizon,
                rng,
            ),
            Chain::Doeblin(k) => simulate_doeblin(
                &self.dirs,
                k,
                &self.model,
                self.initial,
                &self.law.pi,
                horizon,
                rng,
            ),
        }
    }

    /// Positions at sorted times, streamed (no trajectory stored).
    pub fn positions_at<R: Rng + ?Sized>(&self, times: &[f64], rng: &mut R) -> Vec<Vec<f64>> {
        let start = self.initial_state(rng);
        stream_positions(
            &self.dirs,
            &self.model,
            start,
            times,
            |s, r| self.advance(s, r),
            rng,
        )
    }

    /// Per-step regeneration probability: pi_{u_1} for the finite chain,
    /// c_r^{-1} for the split chain.
    pub fn regeneration_rate(&self) -> f64 {
        match &self.chain {
            Chain::Finite(_) => self.law.pi[self.dirs.distinguished()],
            Chain::Doeblin(k) => 1.0 / k.ratio_bound(),
        }
    }

    /// Regeneration cycles per unit walk time, b = regeneration rate / E(T_1).
    pub fn cycle_rate(&self) -> Result<f64, LimitsError> {
        let mean = self.model.mean().ok_or(LimitsError::MeanUnavailable)?;
        Ok(self.regeneration_rate() / mean)
    }

    /// E(xi_1) by the cycle mean identity: (regeneration rate)^{-1} mu E(T_1).
    pub fn cycle_increment_identity(&self) -> Result<Vec<f64>, LimitsError> {
        let mean = self.model.mean().ok_or(LimitsError::MeanUnavailable)?;
        let rate = self.regeneration_rate();
        Ok(self.law.drift.iter().map(|&m| m * mean / rate).collect())
    }

    /// Simulates n i.i.d. regeneration cycles directly, restarting the
    /// chain at the regeneration state each time.
    pub fn simulate_cycles<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Cycle> {
        let dim = self.dirs.dim();
        let mut out = Vec::with_capacity(n);
        match &self.chain {
            Chain::Finite(kernel) => {
                let u1 = self.dirs.distinguished();
                let mut state = u1;
                for _ in 0..n {
                    let mut cycle = Cycle::zero(dim);
                    loop {
                        state = step(kernel, state, rng);
                        let dur = sample_waiting(&self.model, rng);
                        cycle.push_leg(self.dirs.vector(state), dur);
                        if state == u1 {
                            break;
                        }
                    }
                    out.push(cycle);
                }
            }
            Chain::Doeblin(kernel) => {
                // a block starts at a state drawn from the base measure and
                // ends with the leg whose outgoing step regenerates
                let mut state = sample_categorical(kernel.base_measure(), rng);
                for _ in 0..n {
                    let mut cycle = Cycle::zero(dim);
                    loop {
                        let dur = sample_waiting(&self.model, rng);
                        cycle.push_leg(self.dirs.vector(state), dur);
                        let (next, regen) = doeblin_step(kernel, state, rng);
                        state = next;
                        if regen {
                            break;
                        }
                    }
                    out.push(cycle);
                }
            }
        }
        out
    }
}

/// One regeneration cycle: vector increment, time length, step count.
#[derive(Debug, Clone)]
pub struct Cycle {
    pub xi: Vec<f64>,
    pub r: f64,
    pub len: usize,
}

impl Cycle {
    fn zero(dim: usize) -> Self {
        Self {
            xi: vec![0.0; dim],
            r: 0.0,
            len: 0,
        }
    }

    fn push_leg(&mut self, v: &[f64], dur: f64) {
        for (acc, &vc) in self.xi.iter_mut().zip(v) {
            *acc += dur * vc;
        }
        self.r += dur;
        self.len += 1;
    }
}

/// Which scaled statistic a sample holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticKind {
    LlnError,
    DiffusivePath,
    StableScaled,
    BallisticRatio,
    LilEnvelope,
}

/// Normalization used to produce a scaled sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Normalization {
    pub mu: Vec<f64>,
    /// a_t, sqrt(n), or t, depending on the statistic; one per grid time.
    pub scale: Vec<f64>,
    pub grid: Vec<f64>,
}

/// Ensemble of scaled d-vector statistics on a time grid:
/// values[member][grid_index] is a d-vector.
#[derive(Debug, Clone)]
pub struct ScaledSample {
    pub kind: StatisticKind,
    pub times: Vec<f64>,
    pub values: Vec<Vec<Vec<f64>>>,
    pub normalization: Normalization,
}

impl ScaledSample {
    /// Projection of every member onto x at one grid time.
    pub fn project(&self, grid_index: usize, x: &[f64]) -> Vec<f64> {
        self.values
            .iter()
            .map(|member| dot(&member[grid_index], x))
            .collect()
    }

    pub fn ensemble_size(&self) -> usize {
        self.values.len()
    }
}

/// Runs one closure per ensemble member on the rayon pool. Member i always
/// sees the stream (seed, i), and results come back indexed by member, so
/// output is independent of thread count.
pub fn par_members<T: Send>(
    ensemble: usize,
    seed: u64,
    f: impl Fn(usize, &mut ChaCha8Rng) -> T + Sync,
) -> Vec<T> {
    (0..ensemble)
        .into_par_iter()
        .map(|i| {
            let mut rng = member_rng(seed, i as u64);
            f(i, &mut rng)
        })
        .collect()
}

/// LLN diagnostics at grid times: ||X_t - mu t|| / t^(1/p) and the plain
/// error ||X_t / t - mu||.
#[derive(Debug, Clone, Serialize)]
pub struct LlnPoint {
    pub t: f64,
    pub scaled: f64,
    pub plain: f64,
}

pub fn lln_error(
    traj: &Trajectory,
    dirs: &DirectionSet,
    mu: &[f64],
    times: &[f64],
    p: f64,
) -> Result<Vec<LlnPoint>, WalkError> {
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let x = traj.position_at(dirs, t)?;
        let err: Vec<f64> = x.iter().zip(mu).map(|(a, b)| a - b * t).collect();
        let n = norm2(&err);
        out.push(LlnPoint {
            t,
            scaled: if t > 0.0 { n / t.powf(1.0 / p) } else { 0.0 },
            plain: if t > 0.0 { n / t } else { 0.0 },
        });
    }
    Ok(out)
}

/// S_n(t) = (X_{nt} - mu n t) / sqrt(n) on a grid of t in [0, 1], one path
/// per ensemble member. Meant for finite-variance waiting times.
pub fn diffusive_path(
    system: &System,
    ensemble: usize,
    n: f64,
    grid: &[f64],
    seed: u64,
) -> ScaledSample {
    let times: Vec<f64> = grid.iter().map(|&g| g * n).collect();
    let sqrt_n = n.sqrt();
    let mu = system.law.drift.clone();
    let values = par_members(ensemble, seed, |_, rng| {
        let positions = system.positions_at(&times, rng);
        positions
            .iter()
            .zip(&times)
            .map(|(x, &t)| {
                x.iter()
                    .zip(&mu)
                    .map(|(xi, m)| (xi - m * t) / sqrt_n)
                    .collect::<Vec<f64>>()
            })
            .collect::<Vec<Vec<f64>>>()
    });
    ScaledSample {
        kind: StatisticKind::DiffusivePath,
        times: grid.to_vec(),
        values,
        normalization: Normalization {
            mu,
            scale: vec![sqrt_n; grid.len()],
            grid: grid.to_vec(),
        },
    }
}

/// S_t = (X_t - mu t) / a_t per ensemble member, for heavy tails with
/// alpha in (1, 2].
pub fn stable_scaled(
    system: &System,
    ensemble: usize,
    t: f64,
    seed: u64,
) -> Result<ScaledSample, LimitsError> {
    match system.model.tail_index() {
        Some(alpha) if alpha > 1.0 && alpha <= 2.0 => {}
        got => {
            return Err(LimitsError::RegimeMismatch {
                expected: "(1, 2]",
                got,
            })
        }
    }
    let a_t = norming(&system.model, t)?;
    let mu = system.law.drift.clone();
    let times = [t];
    let values = par_members(ensemble, seed, |_, rng| {
        let x = &system.positions_at(&times, rng)[0];
        vec![x
            .iter()
            .zip(&mu)
            .map(|(xi, m)| (xi - m * t) / a_t)
            .collect::<Vec<f64>>()]
    });
    Ok(ScaledSample {
        kind: StatisticKind::StableScaled,
        times: vec![t],
        values,
        normalization: Normalization {
            mu,
            scale: vec![a_t],
            grid: vec![t],
        },
    })
}

/// X_t / t per member, for alpha in (0, 1). Every value is inside the
/// closed unit ball; that bound is asserted, not tested statistically.
pub fn ballistic_ratio(
    system: &System,
    ensemble: usize,
    t: f64,
    seed: u64,
) -> Result<ScaledSample, LimitsError> {
    match system.model.tail_index() {
        Some(alpha) if alpha > 0.0 && alpha < 1.0 => {}
        got => {
            return Err(LimitsError::RegimeMismatch {
                expected: "(0, 1)",
                got,
            })
        }
    }
    let times = [t];
    let values = par_members(ensemble, seed, |_, rng| {
        let x = &system.positions_at(&times, rng)[0];
        let ratio: Vec<f64> = x.iter().map(|xi| xi / t).collect();
        assert!(
            norm2(&ratio) <= 1.0 + 1e-9,
            "unit-speed bound violated: ||X_t/t|| = {}",
            norm2(&ratio)
        );
        vec![ratio]
    });
    Ok(ScaledSample {
        kind: StatisticKind::BallisticRatio,
        times: vec![t],
        values,
        normalization: Normalization {
            mu: vec![0.0; system.dirs.dim()],
            scale: vec![t],
            grid: vec![t],
        },
    })
}

/// Output of the cycle-sum oracle.
#[derive(Debug, Clone)]
pub struct OracleSample {
    /// Cycles per member, m = floor(b t).
    pub m: usize,
    pub a_t: f64,
    pub b: f64,
    /// One centered scaled d-vector per member.
    pub values: Vec<Vec<f64>>,
}

/// Independent sample from (asymptotically) the same law as stable_scaled
/// at time t, built from i.i.d. regeneration cycles instead of one long
/// walk: sum_{k<=m} (xi_k - mu r_k) / a_t with m = floor(b t).
///
/// The centering mu * r_k comes from the drift-removed walk, whose cycle
/// increments have mean zero; the deterministic-index sum then shares the
/// walk's limit because the cycle count concentrates at b t.
pub fn cycle_sum_oracle(
    system: &System,
    t: f64,
    ensemble: usize,
    seed: u64,
) -> Result<OracleSample, LimitsError> {
    match system.model.tail_index() {
        Some(alpha) if alpha > 0.0 && alpha < 2.0 => {}
        got => {
            return Err(LimitsError::RegimeMismatch {
                expected: "(0, 2)",
                got,
            })
        }
    }
    let b = system.cycle_rate()?;
    let a_t = norming(&system.model, t)?;
    let m = (b * t).floor() as usize;
    let mu = system.law.drift.clone();
    let dim = system.dirs.dim();
    let values = par_members(ensemble, seed, |_, rng| {
        let mut sum = vec![0.0; dim];
        if m > 0 {
            for cycle in system.simulate_cycles(m, rng) {
                for (acc, (&x, &mc)) in sum.iter_mut().zip(cycle.xi.iter().zip(&mu)) {
                    *acc += x - mc * cycle.r;
                }
            }
        }
        for v in sum.iter_mut() {
            *v /= a_t;
        }
        sum
    });
    Ok(OracleSample { m, a_t, b, values })
}

/// Empirical mean of xi over a dedicated cycle pre-run, paired with the
/// closed-form identity value for cross-checking.
pub fn mean_cycle_increment(
    system: &System,
    n_cycles: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>), LimitsError> {
    let identity = system.cycle_increment_identity()?;
    let dim = system.dirs.dim();
    let chunks = par_members(64, seed, |_, rng| {
        let mut sum = vec![0.0; dim];
        for cycle in system.simulate_cycles(n_cycles / 64 + 1, rng) {
            for (acc, &x) in sum.iter_mut().zip(&cycle.xi) {
                *acc += x;
            }
        }
        (sum, n_cycles / 64 + 1)
    });
    let mut total = vec![0.0; dim];
    let mut count = 0usize;
    for (sum, n) in chunks {
        for (acc, x) in total.iter_mut().zip(sum) {
            *acc += x;
        }
        count += n;
    }
    for v in total.iter_mut() {
        *v /= count as f64;
    }
    Ok((total, identity))
}

/// Normalizer mode for the iterated-logarithm envelope.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum LilMode {
    /// (X_t - mu t) . x / sqrt(t ln ln t), for finite-variance durations.
    FiniteVariance,
    /// (X_t - mu t) . x / (a_t (ln t)^(1/alpha + epsilon)), heavy tails.
    Heavy { epsilon: f64 },
}

/// Running envelope ratios over a time grid, plus the running sup. These
/// are diagnostics: limsup statements are not falsifiable from one finite
/// path, so acceptance works with seed-ensemble quantiles of the sup.
#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeReport {
    pub times: Vec<f64>,
    pub ratios: Vec<f64>,
    pub running_sup: Vec<f64>,
    pub sup: f64,
}

pub fn lil_envelope(
    system: &System,
    x: &[f64],
    mode: LilMode,
    grid: &[f64],
    seed: u64,
) -> Result<EnvelopeReport, LimitsError> {
    for &t in grid {
        if t.ln().ln() <= 0.0 {
            return Err(LimitsError::DomainError(t));
        }
    }
    let normalizers: Vec<f64> = match mode {
        LilMode::FiniteVariance => grid.iter().map(|&t| (t * t.ln().ln()).sqrt()).collect(),
        LilMode::Heavy { epsilon } => {
            let alpha = system
                .model
                .tail_index()
                .ok_or(LimitsError::RegimeMismatch {
                    expected: "(1, 2)",
                    got: None,
                })?;
            let mut out = Vec::with_capacity(grid.len());
            for &t in grid {
                let a_t = norming(&system.model, t)?;
                out.push(a_t * t.ln().powf(1.0 / alpha + epsilon));
            }
            out
        }
    };
    let mu = &system.law.drift;
    let mut rng = member_rng(seed, 0);
    let positions = system.positions_at(grid, &mut rng);
    let mut ratios = Vec::with_capacity(grid.len());
    let mut running_sup = Vec::with_capacity(grid.len());
    let mut sup = f64::NEG_INFINITY;
    for ((pos, &t), &norm) in positions.iter().zip(grid).zip(&normalizers) {
        let centered: Vec<f64> = pos.iter().zip(mu).map(|(xi, m)| xi - m * t).collect();
        let ratio = dot(&centered, x) / norm;
        sup = sup.max(ratio);
        ratios.push(ratio);
        running_sup.push(sup);
    }
    Ok(EnvelopeReport {
        times: grid.to_vec(),
        ratios,
        running_sup,
        sup,
    })
}

/// Geometric time grid from t0 to at least t1 with the given number of
/// points per doubling.
pub fn geometric_grid(t0: f64, t1: f64, points_per_octave: usize) -> Vec<f64> {
    let ratio = 2f64.powf(1.0 / points_per_octave as f64);
    let mut out = vec![t0];
    let mut t = t0;
    while t < t1 {
        t *= ratio;
        out.push(t.min(t1));
    }
    out
}

/// Default projection set: the standard basis directions lying in span(U)
/// plus the all-ones direction, Gram-Schmidt-reduced to an orthonormal set.
pub fn default_projections(dirs: &DirectionSet) -> Vec<Vec<f64>> {
    let d = dirs.dim();
    // orthonormal basis of span(U)
    let mut span: Vec<Vec<f64>> = Vec::new();
    for v in dirs.vectors() {
        let mut res = v.clone();
        for b in &span {
            let c = dot(&res, b);
            for (r, &bc) in res.iter_mut().zip(b) {
                *r -= c * bc;
            }
        }
        let n = norm2(&res);
        if n > 1e-10 {
            for r in res.iter_mut() {
                *r /= n;
            }
            span.push(res);
        }
    }
    let mut candidates: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            let mut e = vec![0.0; d];
            e[i] = 1.0;
            e
        })
        .collect();
    candidates.push(vec![1.0 / (d as f64).sqrt(); d]);
    let mut accepted: Vec<Vec<f64>> = Vec::new();
    for cand in candidates {
        // restrict to span(U)
        let mut proj = vec![0.0; d];
        for b in &span {
            let c = dot(&cand, b);
            for (p, &bc) in proj.iter_mut().zip(b) {
                *p += c * bc;
            }
        }
        let mut res = proj;
        for a in &accepted {
            let c = dot(&res, a);
            for (r, &ac) in res.iter_mut().zip(a) {
                *r -= c * ac;
            }
        }
        let n = norm2(&res);
        if n > 1e-8 {
            for r in res.iter_mut() {
                *r /= n;
            }
            accepted.push(res);
        }
    }
    accepted
}
