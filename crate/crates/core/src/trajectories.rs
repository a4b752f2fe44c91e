//! Quantum-jump unraveling of the master equation.
//!
//! Each trajectory carries an unnormalized pure state. A step of length `h`
//! first draws one uniform number: with probability `h·rate_k‖J_k ψ‖²/‖ψ‖²`
//! the state jumps through channel `k` (recorded at the end of the step) and
//! is normalized; otherwise it is propagated by the fourth-order Taylor
//! polynomial of `exp(−i H_eff h)`, which is exactly one classical RK4 step
//! for this linear equation. No-jump stretches are renormalized every few
//! steps and at the end of every segment.
//!
//! Trajectory `i` of an ensemble is seeded with `base_seed + i`, so results
//! do not depend on how work is scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};
use crate::liouville::DensityMatrix;
use crate::model::{Channel, EngineParams, OperatorSet, QuantumOperator, DIM};
use crate::numerics::{eig, vec_norm, C64};

/// Largest admissible `dt·max(E_J', rates)`.
pub const DT_SAFETY: f64 = 0.01;

/// No-jump steps between renormalizations of the state.
const RENORMALIZE_EVERY: usize = 32;

/// One recorded jump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    /// ns
    pub time: f64,
    /// Position of the channel in the process's channel list.
    pub channel: usize,
}

impl JumpEvent {
    /// Engine channel of this event, for records produced by
    /// [`EngineUnraveling`].
    pub fn engine_channel(&self) -> Option<Channel> {
        Channel::ALL.get(self.channel).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub dt: f64,
    pub jumps: Vec<JumpEvent>,
    #[serde(skip)]
    pub final_state: Vec<C64>,
}

impl TrajectoryRecord {
    pub fn count(&self, channel: usize) -> usize {
        self.jumps.iter().filter(|j| j.channel == channel).count()
    }
}

type Mat<const D: usize> = [[C64; D]; D];

fn matvec<const D: usize>(m: &Mat<D>, v: &[C64; D]) -> [C64; D] {
    let mut out = [C64::new(0.0, 0.0); D];
    for (o, row) in out.iter_mut().zip(m) {
        let mut acc = C64::new(0.0, 0.0);
        for (a, b) in row.iter().zip(v) {
            acc += a * b;
        }
        *o = acc;
    }
    out
}

fn to_array<const D: usize>(m: &QuantumOperator) -> Result<Mat<D>> {
    if m.rows() != D || m.cols() != D {
        return Err(EngineError::Dimension(format!(
            "expected {D}x{D} operator, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let mut out = [[C64::new(0.0, 0.0); D]; D];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            *x = m[(i, j)];
        }
    }
    Ok(out)
}

fn normalize<const D: usize>(v: &mut [C64; D]) -> f64 {
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let inv = 1.0 / n;
    for z in v.iter_mut() {
        *z *= inv;
    }
    n
}

/// `rate·J†J`, stored as a diagonal when it is one.
#[derive(Debug, Clone)]
enum Weight<const D: usize> {
    Diagonal([f64; D]),
    Full(Mat<D>),
}

impl<const D: usize> Weight<D> {
    fn new(m: &Mat<D>) -> Self {
        let off_diag = (0..D).any(|i| (0..D).any(|j| i != j && m[i][j] != C64::new(0.0, 0.0)));
        if off_diag {
            Weight::Full(*m)
        } else {
            Weight::Diagonal(std::array::from_fn(|i| m[i][i].re))
        }
    }

    /// `(⟨ψ|ψ⟩, ⟨ψ|W|ψ⟩)` for an unnormalized `ψ`.
    fn norm_and_expectation(&self, psi: &[C64; D]) -> (f64, f64) {
        let norm2 = psi.iter().map(|z| z.norm_sqr()).sum();
        let w = match self {
            Weight::Diagonal(d) => d.iter().zip(psi).map(|(w, z)| w * z.norm_sqr()).sum(),
            Weight::Full(m) => {
                let mv = matvec(m, psi);
                psi.iter().zip(&mv).map(|(a, b)| (a.conj() * b).re).sum()
            }
        };
        (norm2, w)
    }
}

#[derive(Debug, Clone)]
struct JumpOp<const D: usize> {
    op: Mat<D>,
    weight: Weight<D>,
}

/// Jump process for a `D`-level system: Hamiltonian plus rated channels.
#[derive(Debug, Clone)]
pub struct JumpProcess<const D: usize> {
    hamiltonian: Mat<D>,
    h_eff: Mat<D>,
    jumps: Vec<JumpOp<D>>,
    total_weight: Weight<D>,
    energy_scale: f64,
    max_rate: f64,
}

/// Fixed step length and the matching propagator for one time segment.
#[derive(Debug, Clone)]
struct Segment<const D: usize> {
    steps: usize,
    h: f64,
    propagator: Mat<D>,
}

impl<const D: usize> JumpProcess<D> {
    /// `channels` lists `(J_k, rate_k)`. The energy scale used by the step
    /// precondition is `2·max|H_ij|`, which is `E_J'` for the engine.
    pub fn new(hamiltonian: &QuantumOperator, channels: &[(&QuantumOperator, f64)]) -> Result<Self> {
        let h = to_array::<D>(hamiltonian)?;
        let mut h_eff = h;
        let mut jumps = Vec::with_capacity(channels.len());
        let mut total = [[C64::new(0.0, 0.0); D]; D];
        let mut max_rate: f64 = 0.0;
        for &(op, rate) in channels {
            if !(rate >= 0.0 && rate.is_finite()) {
                return Err(EngineError::invalid("rate", format!("jump rate {rate} is not a finite non-negative number")));
            }
            max_rate = max_rate.max(rate);
            let a = to_array::<D>(op)?;
            let mut w = [[C64::new(0.0, 0.0); D]; D];
            for i in 0..D {
                for j in 0..D {
                    w[i][j] = (0..D).map(|k| a[k][i].conj() * a[k][j]).sum::<C64>() * rate;
                }
            }
            for i in 0..D {
                for j in 0..D {
                    h_eff[i][j] -= C64::new(0.0, 0.5) * w[i][j];
                    total[i][j] += w[i][j];
                }
            }
            jumps.push(JumpOp { op: a, weight: Weight::new(&w) });
        }
        Ok(Self {
            hamiltonian: h,
            h_eff,
            jumps,
            total_weight: Weight::new(&total),
            energy_scale: 2.0 * hamiltonian.max_abs(),
            max_rate,
        })
    }

    pub fn channel_count(&self) -> usize {
        self.jumps.len()
    }

    /// Largest step admitted by the precondition (infinite for a static,
    /// dissipation-free process).
    pub fn max_dt(&self) -> f64 {
        DT_SAFETY / self.energy_scale.max(self.max_rate)
    }

    /// Checks `T > 0` and `0 < dt ≤ 0.01/max(E_J', rates)`.
    pub fn check_step(&self, t: f64, dt: f64) -> Result<()> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(EngineError::invalid("T", format!("window must be positive, got {t}")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(EngineError::invalid("dt", format!("step must be positive, got {dt}")));
        }
        let limit = self.max_dt();
        if dt > limit * (1.0 + 1e-12) {
            return Err(EngineError::invalid(
                "dt",
                format!("step {dt:.4e} ns exceeds the admissible {limit:.4e} ns"),
            ));
        }
        Ok(())
    }

    fn segment(&self, duration: f64, dt: f64) -> Segment<D> {
        let steps = ((duration / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let h = duration / steps as f64;
        // Σ_{k≤4} (−i H_eff h)^k / k!
        let a: Mat<D> = std::array::from_fn(|i| std::array::from_fn(|j| C64::new(0.0, -h) * self.h_eff[i][j]));
        let mut term: Mat<D> = std::array::from_fn(|i| std::array::from_fn(|j| if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }));
        let mut sum = term;
        for k in 1..=4 {
            let mut next = [[C64::new(0.0, 0.0); D]; D];
            for i in 0..D {
                for j in 0..D {
                    next[i][j] = (0..D).map(|m| term[i][m] * a[m][j]).sum::<C64>() / k as f64;
                }
            }
            term = next;
            for i in 0..D {
                for j in 0..D {
                    sum[i][j] += term[i][j];
                }
            }
        }
        Segment { steps, h, propagator: sum }
    }

    /// Advances `psi` through one segment starting at `t0`, calling
    /// `on_jump(time, channel)` for every jump.
    fn run_segment(
        &self,
        seg: &Segment<D>,
        t0: f64,
        psi: &mut [C64; D],
        rng: &mut ChaCha8Rng,
        on_jump: &mut impl FnMut(f64, usize),
    ) {
        let mut lanes = [*psi];
        self.run_lanes(seg, t0, &mut lanes, std::slice::from_mut(rng), &mut |_, time, ch| on_jump(time, ch));
        *psi = lanes[0];
    }

    /// Advances `B` independent trajectories in lockstep. Each lane performs
    /// exactly the arithmetic of a single-lane run; interleaving only exposes
    /// instruction-level parallelism. `on_jump(lane, time, channel)`.
    fn run_lanes<const B: usize>(
        &self,
        seg: &Segment<D>,
        t0: f64,
        psi: &mut [[C64; D]; B],
        rng: &mut [ChaCha8Rng],
        on_jump: &mut impl FnMut(usize, f64, usize),
    ) {
        debug_assert_eq!(rng.len(), B);
        let mut threshold = [0.0; B];
        let mut limit = [0.0; B];
        for n in 0..seg.steps {
            for l in 0..B {
                let (norm2, rate) = self.total_weight.norm_and_expectation(&psi[l]);
                let u: f64 = rng[l].gen();
                threshold[l] = u * norm2;
                limit[l] = seg.h * rate;
            }
            for l in 0..B {
                let state = &mut psi[l];
                if threshold[l] < limit[l] {
                    let mut acc = 0.0;
                    let mut chosen = self.jumps.len() - 1;
                    for (k, j) in self.jumps.iter().enumerate() {
                        acc += seg.h * j.weight.norm_and_expectation(state).1;
                        if threshold[l] < acc {
                            chosen = k;
                            break;
                        }
                    }
                    *state = matvec(&self.jumps[chosen].op, state);
                    normalize(state);
                    on_jump(l, t0 + (n + 1) as f64 * seg.h, chosen);
                } else {
                    *state = matvec(&seg.propagator, state);
                    if n % RENORMALIZE_EVERY == RENORMALIZE_EVERY - 1 {
                        normalize(state);
                    }
                }
            }
        }
        psi.iter_mut().for_each(|s| {
            normalize(s);
        });
    }

    /// One trajectory over `[0, t]` from `psi0`.
    pub fn run(&self, psi0: &[C64], t: f64, dt: f64, seed: u64) -> Result<TrajectoryRecord> {
        self.check_step(t, dt)?;
        let mut psi = self.initial(psi0)?;
        let seg = self.segment(t, dt);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut jumps = Vec::new();
        self.run_segment(&seg, 0.0, &mut psi, &mut rng, &mut |time, channel| {
            jumps.push(JumpEvent { time, channel })
        });
        Ok(TrajectoryRecord {
            seed,
            dt: seg.h,
            jumps,
            final_state: psi.to_vec(),
        })
    }

    fn initial(&self, psi0: &[C64]) -> Result<[C64; D]> {
        if psi0.len() != D {
            return Err(EngineError::Dimension(format!("initial state has length {}, expected {D}", psi0.len())));
        }
        let mut psi: [C64; D] = std::array::from_fn(|i| psi0[i]);
        let n = normalize(&mut psi);
        if !(n > 0.0 && n.is_finite()) {
            return Err(EngineError::InvalidState("initial state has zero or non-finite norm".into()));
        }
        Ok(psi)
    }

    pub fn hamiltonian(&self) -> QuantumOperator {
        QuantumOperator::from_fn(D, D, |i, j| self.hamiltonian[i][j])
    }
}

/// Engine jump process, channels in [`Channel::ALL`] order.
pub type EngineUnraveling = JumpProcess<DIM>;

pub fn engine_process(ops: &OperatorSet) -> Result<EngineUnraveling> {
    let channels: Vec<(&QuantumOperator, f64)> = ops.jump_ops.iter().map(|j| (&j.operator, j.rate)).collect();
    JumpProcess::new(&ops.hamiltonian, &channels)
}

/// Single engine trajectory over `[0, t]` started in `psi0`.
pub fn run_trajectory(ops: &OperatorSet, psi0: &[C64], t: f64, dt: f64, seed: u64) -> Result<TrajectoryRecord> {
    engine_process(ops)?.run(psi0, t, dt, seed)
}

/// Pure-state decomposition of a density matrix, sampled by probability.
#[derive(Debug, Clone)]
pub struct StateSampler {
    cumulative: Vec<f64>,
    states: Vec<Vec<C64>>,
}

impl StateSampler {
    /// Eigen-decomposes `rho`; eigenvectors within (near-)degenerate
    /// clusters are re-orthonormalized.
    pub fn new(rho: &DensityMatrix) -> Result<Self> {
        let n = rho.dim();
        let e = eig(rho.matrix())?;
        let mut states: Vec<Vec<C64>> = Vec::with_capacity(n);
        for k in 0..n {
            let mut v = e.vectors.column(k);
            for u in &states {
                let overlap: C64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                for (x, y) in v.iter_mut().zip(u) {
                    *x -= overlap * y;
                }
            }
            let nv = vec_norm(&v);
            if nv < 1e-8 {
                return Err(EngineError::breakdown("StateSampler", "eigenvectors are linearly dependent"));
            }
            v.iter_mut().for_each(|x| *x /= nv);
            states.push(v);
        }
        let weights: Vec<f64> = e.values.iter().map(|z| z.re.max(0.0)).collect();
        let total: f64 = weights.iter().sum();
        let recon = QuantumOperator::from_fn(n, n, |i, j| {
            (0..n).map(|k| states[k][i] * states[k][j].conj() * (weights[k] / total)).sum()
        });
        let err = (&recon - rho.matrix()).max_abs();
        if err > 1e-8 {
            return Err(EngineError::breakdown("StateSampler", format!("decomposition error {err:.3e}")));
        }
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        Ok(Self { cumulative, states })
    }

    pub fn sample(&self, rng: &mut impl Rng) -> &[C64] {
        let u: f64 = rng.gen();
        let k = self
            .cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.states.len() - 1);
        &self.states[k]
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Sample moments of one counted quantity with delta-method errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountMoments {
    pub mean: f64,
    pub variance: f64,
    /// `variance / mean`; `None` when the mean vanishes.
    pub fano: Option<f64>,
    pub mean_stderr: f64,
    pub variance_stderr: f64,
    pub fano_stderr: Option<f64>,
}

impl CountMoments {
    /// Moments of `samples` summed in slice order.
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mut s = CompensatedSum::default();
        samples.iter().for_each(|&x| s.add(x));
        let mean = s.value() / n;
        let (mut m2, mut m3, mut m4) = (CompensatedSum::default(), CompensatedSum::default(), CompensatedSum::default());
        for &x in samples {
            let d = x - mean;
            m2.add(d * d);
            m3.add(d * d * d);
            m4.add(d * d * d * d);
        }
        let (mu2, mu3, mu4) = (m2.value() / n, m3.value() / n, m4.value() / n);
        let variance = if samples.len() > 1 { m2.value() / (n - 1.0) } else { 0.0 };
        let var_mean = variance / n;
        let var_var = ((mu4 - mu2 * mu2) / n).max(0.0);
        let cov = mu3 / n;
        let (fano, fano_stderr) = if mean != 0.0 {
            let f = variance / mean;
            let vf = var_var / mean.powi(2) - 2.0 * variance * cov / mean.powi(3) + variance.powi(2) * var_mean / mean.powi(4);
            (Some(f), Some(vf.max(0.0).sqrt()))
        } else {
            (None, None)
        };
        Self {
            mean,
            variance,
            fano,
            mean_stderr: var_mean.sqrt(),
            variance_stderr: var_var.sqrt(),
            fano_stderr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelCounts {
    pub channel: Channel,
    #[serde(flatten)]
    pub moments: CountMoments,
}

/// Ensemble counting statistics over a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountingStatistics {
    pub trajectories: usize,
    /// ns
    pub window: f64,
    pub dt: f64,
    pub base_seed: u64,
    pub channels: Vec<ChannelCounts>,
    /// Cold emissions minus cold absorptions per trajectory.
    pub net_cold: CountMoments,
}

impl CountingStatistics {
    pub fn channel(&self, ch: Channel) -> &CountMoments {
        &self.channels[ch.index()].moments
    }

    /// Mean and variance of the work `2eV·N_net` in internal units.
    pub fn work_moments(&self, pair_energy: f64) -> (f64, f64) {
        (pair_energy * self.net_cold.mean, pair_energy.powi(2) * self.net_cold.variance)
    }

    /// Mean signed cold heat `ħω_c·N_net`.
    pub fn heat_cold_mean(&self, omega_c: f64) -> f64 {
        omega_c * self.net_cold.mean
    }
}

fn check_ensemble(n: usize) -> Result<()> {
    if n == 0 {
        return Err(EngineError::invalid("N", "ensemble needs at least one trajectory"));
    }
    Ok(())
}

/// Step length used when none is given: the admissible maximum.
pub fn default_dt(p: &EngineParams) -> Result<f64> {
    Ok(engine_process(&OperatorSet::new(p))?.max_dt())
}

/// Runs `n` engine trajectories of length `t` from the stationary state and
/// reports per-channel counts.
pub fn ensemble_counts(p: &EngineParams, t: f64, n: usize, base_seed: u64, dt: f64) -> Result<CountingStatistics> {
    let (stats, _) = ensemble_inner(p, t, n, base_seed, dt, false)?;
    Ok(stats)
}

/// As [`ensemble_counts`], also returning every jump as
/// `(trajectory_index, event)` in index and time order.
pub fn ensemble_records(
    p: &EngineParams,
    t: f64,
    n: usize,
    base_seed: u64,
    dt: f64,
) -> Result<(CountingStatistics, Vec<(usize, JumpEvent)>)> {
    ensemble_inner(p, t, n, base_seed, dt, true)
}

/// Per-trajectory observer for batched ensembles.
trait Recorder: Send {
    fn jump(&mut self, time: f64, channel: usize);
    fn mark(&mut self, _psi: &[C64; DIM]) {}
}

struct CountRecorder {
    counts: [u64; 4],
    events: Option<Vec<JumpEvent>>,
}

impl Recorder for CountRecorder {
    fn jump(&mut self, time: f64, channel: usize) {
        self.counts[channel] += 1;
        if let Some(ev) = &mut self.events {
            ev.push(JumpEvent { time, channel });
        }
    }
}

struct StateRecorder(Vec<[C64; DIM * DIM]>);

impl Recorder for StateRecorder {
    fn jump(&mut self, _time: f64, _channel: usize) {}

    fn mark(&mut self, psi: &[C64; DIM]) {
        self.0.push(std::array::from_fn(|k| psi[k / DIM] * psi[k % DIM].conj()));
    }
}

const LANES: usize = 4;

/// Consecutive segments `(start time, segment)`; `None` marks a zero-length
/// interval. Recorders see `mark` after every entry.
type Schedule = [(f64, Option<Segment<DIM>>)];

fn run_ensemble<R: Recorder>(
    process: &EngineUnraveling,
    schedule: &Schedule,
    n: usize,
    base_seed: u64,
    init: &(dyn Fn(&mut ChaCha8Rng) -> [C64; DIM] + Sync),
    fresh: &(dyn Fn() -> R + Sync),
) -> Vec<R> {
    let batches = n.div_ceil(LANES);
    let per_batch: Vec<Vec<R>> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let first = b * LANES;
            let len = LANES.min(n - first);
            if len == LANES {
                run_batch::<LANES, R>(process, schedule, first, base_seed, init, fresh)
            } else {
                (first..first + len)
                    .flat_map(|i| run_batch::<1, R>(process, schedule, i, base_seed, init, fresh))
                    .collect()
            }
        })
        .collect();
    per_batch.into_iter().flatten().collect()
}

fn run_batch<const B: usize, R: Recorder>(
    process: &EngineUnraveling,
    schedule: &Schedule,
    first: usize,
    base_seed: u64,
    init: &(dyn Fn(&mut ChaCha8Rng) -> [C64; DIM] + Sync),
    fresh: &(dyn Fn() -> R + Sync),
) -> Vec<R> {
    let mut rngs: Vec<ChaCha8Rng> = (0..B)
        .map(|l| ChaCha8Rng::seed_from_u64(base_seed.wrapping_add((first + l) as u64)))
        .collect();
    let mut psi: [[C64; DIM]; B] = std::array::from_fn(|l| init(&mut rngs[l]));
    let mut recs: Vec<R> = (0..B).map(|_| fresh()).collect();
    for (t0, seg) in schedule {
        if let Some(seg) = seg {
            process.run_lanes(seg, *t0, &mut psi, &mut rngs, &mut |l, time, ch| recs[l].jump(time, ch));
        }
        for (rec, state) in recs.iter_mut().zip(&psi) {
            rec.mark(state);
        }
    }
    recs
}

fn ensemble_inner(
    p: &EngineParams,
    t: f64,
    n: usize,
    base_seed: u64,
    dt: f64,
    keep_events: bool,
) -> Result<(CountingStatistics, Vec<(usize, JumpEvent)>)> {
    p.validate()?;
    check_ensemble(n)?;
    let ops = OperatorSet::new(p);
    let process = engine_process(&ops)?;
    process.check_step(t, dt)?;
    let l = crate::liouville::build_liouvillian(&ops);
    let sampler = StateSampler::new(l.steady_state()?)?;
    let seg = process.segment(t, dt);
    let h = seg.h;
    let schedule = [(0.0, Some(seg))];

    let init = |rng: &mut ChaCha8Rng| {
        let drawn = sampler.sample(rng);
        std::array::from_fn(|k| drawn[k])
    };
    let fresh = || CountRecorder {
        counts: [0; 4],
        events: keep_events.then(Vec::new),
    };
    let per_traj = run_ensemble(&process, &schedule, n, base_seed, &init, &fresh);

    let column = |k: usize| -> Vec<f64> { per_traj.iter().map(|r| r.counts[k] as f64).collect() };
    let channels = Channel::ALL
        .iter()
        .map(|&ch| ChannelCounts {
            channel: ch,
            moments: CountMoments::from_samples(&column(ch.index())),
        })
        .collect();
    let net: Vec<f64> = per_traj
        .iter()
        .map(|r| r.counts[Channel::ColdEmit.index()] as f64 - r.counts[Channel::ColdAbsorb.index()] as f64)
        .collect();
    let events = per_traj
        .into_iter()
        .enumerate()
        .flat_map(|(i, r)| r.events.unwrap_or_default().into_iter().map(move |e| (i, e)))
        .collect();
    Ok((
        CountingStatistics {
            trajectories: n,
            window: t,
            dt: h,
            base_seed,
            channels,
            net_cold: CountMoments::from_samples(&net),
        },
        events,
    ))
}

/// Trajectory-averaged `|ψ⟩⟨ψ|` at each time of `t_grid` (ascending,
/// non-negative), starting every trajectory in `psi0`.
pub fn ensemble_average_state(
    p: &EngineParams,
    psi0: &[C64],
    t_grid: &[f64],
    n: usize,
    base_seed: u64,
    dt: f64,
) -> Result<Vec<DensityMatrix>> {
    p.validate()?;
    check_ensemble(n)?;
    if t_grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || t_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(EngineError::invalid("t_grid", "times must be finite, non-negative and ascending"));
    }
    let ops = OperatorSet::new(p);
    let process = engine_process(&ops)?;
    let horizon = t_grid.last().copied().unwrap_or(0.0);
    process.check_step(horizon.max(dt), dt)?;
    let start = process.initial(psi0)?;

    let mut schedule = Vec::with_capacity(t_grid.len());
    let mut prev = 0.0;
    for &t in t_grid {
        schedule.push((prev, (t > prev).then(|| process.segment(t - prev, dt))));
        prev = t;
    }

    let per_traj = run_ensemble(
        &process,
        &schedule,
        n,
        base_seed,
        &|_| start,
        &|| StateRecorder(Vec::with_capacity(t_grid.len())),
    );

    (0..t_grid.len())
        .map(|g| {
            let mut re = [CompensatedSum::default(); DIM * DIM];
            let mut im = [CompensatedSum::default(); DIM * DIM];
            for traj in &per_traj {
                for k in 0..DIM * DIM {
                    re[k].add(traj.0[g][k].re);
                    im[k].add(traj.0[g][k].im);
                }
            }
            let m = QuantumOperator::from_fn(DIM, DIM, |i, j| {
                C64::new(re[i * DIM + j].value(), im[i * DIM + j].value()) / n as f64
            });
            Ok(DensityMatrix::new_unchecked(m))
        })
        .collect()
}
