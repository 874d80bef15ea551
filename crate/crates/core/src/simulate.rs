//! Forward simulation of the branching particle system.
//!
//! Each particle carries an accumulated breeding integral that races an
//! independent Exp(1) threshold: the particle branches when the integral
//! crosses the threshold (exponential time-change). This stays correct for
//! unbounded breeding rates without a global rate bound and costs O(1) per
//! step. Branching is strictly dyadic: the particle is replaced by two
//! offspring at its current position, each with a fresh clock.
//!
//! Motion is one Euler-Maruyama step per `dt`, except that linear drifts
//! with constant scalar diffusion use the exact Ornstein-Uhlenbeck
//! transition when `use_exact_ou` is set. Branch events are placed at the
//! end of the step in which the threshold is crossed (O(dt) bias).
//!
//! A single simulation is sequential; replicates are independent and may
//! run concurrently, each deriving its RNG stream from
//! `(seed, replicate_index)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::model::{DiffusionField, DriftField, Model};
use crate::{Error, Result};

/// One particle of the system.
#[derive(Clone, Debug, PartialEq)]
pub struct Particle {
    pub position: Vec<f64>,
    /// 1 for the plain process; `phi(position)` in the weighted view.
    pub weight: f64,
    /// Accumulated breeding integral since the last branch event.
    pub beta_integral: f64,
    /// Exp(1) draw the breeding integral races against.
    pub clock_threshold: f64,
    pub lineage_id: u64,
}

/// Snapshot of the particle system at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSystem {
    pub time: f64,
    pub particles: Vec<Particle>,
}

impl ParticleSystem {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn is_alive(&self) -> bool {
        !self.particles.is_empty()
    }

    /// `sum_i f(x_i)` against the plain atomic measure.
    pub fn measure<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        self.particles.iter().map(|p| f(&p.position)).sum()
    }

    /// `e^{-lambda_c t} sum_i weight_i`: total mass of the weighted view.
    pub fn weighted_mass(&self, lambda_c: f64) -> f64 {
        (-lambda_c * self.time).exp() * self.particles.iter().map(|p| p.weight).sum::<f64>()
    }

    /// Largest Euclidean norm among particle positions (0 when empty).
    pub fn support_radius(&self) -> f64 {
        self.particles
            .iter()
            .map(|p| p.position.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

/// Simulation controls. `snapshot_delta` produces the lattice `{k delta}`;
/// `extra_snapshots` adds arbitrary times. `t_end` is always recorded.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    pub snapshot_delta: Option<f64>,
    pub extra_snapshots: Vec<f64>,
    /// Hard blow-up guard: the run stops (flagged, not silently subsampled)
    /// when the population exceeds this.
    pub max_particles: usize,
    pub seed: u64,
    pub use_exact_ou: bool,
}

impl SimConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        SimConfig {
            dt,
            t_end,
            snapshot_delta: None,
            extra_snapshots: Vec::new(),
            max_particles: 1_000_000,
            seed: 0,
            use_exact_ou: true,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_lattice(mut self, delta: f64) -> Self {
        self.snapshot_delta = Some(delta);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.dt) || !positive(self.t_end) || self.dt > self.t_end {
            return Err(Error::Config(format!(
                "need 0 < dt <= t_end, got dt = {}, t_end = {}",
                self.dt, self.t_end
            )));
        }
        if self.max_particles == 0 {
            return Err(Error::Config("max_particles must be >= 1".into()));
        }
        Ok(())
    }

    /// Sorted, deduplicated snapshot times in `[0, t_end]`, always
    /// containing 0 and `t_end`.
    pub fn snapshot_times(&self) -> Vec<f64> {
        let mut times = vec![0.0, self.t_end];
        if let Some(delta) = self.snapshot_delta {
            if delta > 0.0 {
                let mut k = 1usize;
                while delta * k as f64 <= self.t_end + 1e-12 {
                    times.push((delta * k as f64).min(self.t_end));
                    k += 1;
                }
            }
        }
        times.extend(
            self.extra_snapshots
                .iter()
                .copied()
                .filter(|t| *t >= 0.0 && *t <= self.t_end),
        );
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        times
    }
}

/// Trajectory of snapshots. `capped` marks a run truncated by the
/// `max_particles` guard.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<ParticleSystem>,
    pub capped: bool,
}

impl Trajectory {
    pub fn last(&self) -> &ParticleSystem {
        self.snapshots.last().expect("trajectory has snapshots")
    }

    /// Snapshot at time `t` (within tolerance), if recorded.
    pub fn at(&self, t: f64) -> Option<&ParticleSystem> {
        self.snapshots.iter().find(|s| (s.time - t).abs() < 1e-9)
    }
}

/// Precomputed per-step motion coefficients.
enum StepPlan {
    /// Exact OU transition: `x -> x * mul + sd * xi`.
    ExactOu { mul: f64, sd: f64 },
    /// Euler-Maruyama with constant scalar diffusion.
    EulerScalar { sd: f64 },
    /// Euler-Maruyama with a full diffusion matrix (Cholesky per step).
    EulerGeneral,
}

fn make_plan(drift: &DriftField, diffusion: &DiffusionField, use_exact_ou: bool, h: f64) -> StepPlan {
    match (drift.linear_rate(), diffusion.scalar()) {
        (Some(rate), Some(a)) if use_exact_ou => {
            let mul = (rate * h).exp();
            let var = if rate.abs() < 1e-14 {
                a * h
            } else {
                a * (2.0 * rate * h).exp_m1() / (2.0 * rate)
            };
            StepPlan::ExactOu {
                mul,
                sd: var.sqrt(),
            }
        }
        (_, Some(a)) => StepPlan::EulerScalar { sd: (a * h).sqrt() },
        _ => StepPlan::EulerGeneral,
    }
}

fn apply_plan<R: Rng>(
    plan: &StepPlan,
    drift: &DriftField,
    diffusion: &DiffusionField,
    h: f64,
    pos: &mut [f64],
    buf: &mut [f64],
    rng: &mut R,
) {
    match plan {
        StepPlan::ExactOu { mul, sd } => {
            for p in pos.iter_mut() {
                let xi: f64 = rng.sample(StandardNormal);
                *p = *p * mul + sd * xi;
            }
        }
        StepPlan::EulerScalar { sd } => {
            drift.eval(pos, buf);
            for (p, b) in pos.iter_mut().zip(buf.iter()) {
                let xi: f64 = rng.sample(StandardNormal);
                *p += b * h + sd * xi;
            }
        }
        StepPlan::EulerGeneral => {
            let dim = pos.len();
            drift.eval(pos, buf);
            let a = diffusion.matrix(pos, dim) * h;
            let chol = a
                .cholesky()
                .expect("diffusion matrix must be positive definite");
            let noise: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let dw = chol.l() * nalgebra::DVector::from_vec(noise);
            for i in 0..dim {
                pos[i] += buf[i] * h + dw[i];
            }
        }
    }
}

/// One motion increment from `position` over `dt`. With `drift_override`
/// the step follows the override field (used for the spine motion) instead
/// of the model drift. Returns `None` when the move exits a killed
/// boundary.
pub fn step_motion<R: Rng>(
    model: &Model,
    position: &[f64],
    dt: f64,
    drift_override: Option<&DriftField>,
    use_exact_ou: bool,
    rng: &mut R,
) -> Option<Vec<f64>> {
    let drift = drift_override.unwrap_or(&model.drift);
    let plan = make_plan(drift, &model.diffusion, use_exact_ou, dt);
    let mut pos = position.to_vec();
    let mut buf = vec![0.0; model.dim];
    apply_plan(&plan, drift, &model.diffusion, dt, &mut pos, &mut buf, rng);
    if model.domain.contains(&pos) {
        Some(pos)
    } else {
        None
    }
}

/// Advance the particle's branch clock across one motion step, using the
/// trapezoid of the breeding rate at the pre- and post-move positions.
/// On a branch the integral resets and a fresh Exp(1) threshold is drawn.
pub fn advance_branch_clock<R: Rng>(
    particle: &mut Particle,
    model: &Model,
    dt: f64,
    pre_pos: &[f64],
    post_pos: &[f64],
    rng: &mut R,
) -> bool {
    particle.beta_integral += 0.5 * dt * (model.breeding(pre_pos) + model.breeding(post_pos));
    if particle.beta_integral >= particle.clock_threshold {
        particle.beta_integral = 0.0;
        particle.clock_threshold = rng.sample(Exp1);
        true
    } else {
        false
    }
}

fn validate_init(model: &Model, init: &[Vec<f64>]) -> Result<()> {
    if init.is_empty() {
        return Err(Error::EmptyInit);
    }
    for x in init {
        if x.len() != model.dim || !model.domain.contains(x) {
            return Err(Error::InitOutsideDomain);
        }
    }
    Ok(())
}

/// Simulate the plain branching diffusion from `init`, self-seeded from
/// `cfg.seed`. Deterministic: identical `(model, init, cfg)` produce
/// bit-identical trajectories.
pub fn simulate(model: &Model, init: &[Vec<f64>], cfg: &SimConfig) -> Result<Trajectory> {
    cfg.validate()?;
    validate_init(model, init)?;
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    Ok(simulate_with_rng(model, init, cfg, &mut rng))
}

/// As [`simulate`] with an externally managed RNG (replicate streams).
pub fn simulate_with_rng<R: Rng>(
    model: &Model,
    init: &[Vec<f64>],
    cfg: &SimConfig,
    rng: &mut R,
) -> Trajectory {
    let mut next_id: u64 = 0;
    let mut particles: Vec<Particle> = init
        .iter()
        .map(|x| {
            let p = Particle {
                position: x.clone(),
                weight: 1.0,
                beta_integral: 0.0,
                clock_threshold: rng.sample(Exp1),
                lineage_id: next_id,
            };
            next_id += 1;
            p
        })
        .collect();

    let snaps = cfg.snapshot_times();
    let mut out = Vec::with_capacity(snaps.len());
    let mut capped = false;
    let mut t = 0.0;
    let mut buf = vec![0.0; model.dim];

    'snapshots: for &ts in &snaps {
        while ts - t > 1e-12 {
            let h = cfg.dt.min(ts - t);
            let plan = make_plan(&model.drift, &model.diffusion, cfg.use_exact_ou, h);
            let n0 = particles.len();
            let mut dead: Vec<usize> = Vec::new();
            for i in 0..n0 {
                let beta_pre = model.breeding(&particles[i].position);
                apply_plan(
                    &plan,
                    &model.drift,
                    &model.diffusion,
                    h,
                    &mut particles[i].position,
                    &mut buf,
                    rng,
                );
                if !model.domain.contains(&particles[i].position) {
                    dead.push(i);
                    continue;
                }
                let p = &mut particles[i];
                p.beta_integral += 0.5 * h * (beta_pre + model.breeding(&p.position));
                if p.beta_integral >= p.clock_threshold {
                    p.beta_integral = 0.0;
                    p.clock_threshold = rng.sample(Exp1);
                    let child = Particle {
                        position: p.position.clone(),
                        weight: 1.0,
                        beta_integral: 0.0,
                        clock_threshold: rng.sample(Exp1),
                        lineage_id: next_id,
                    };
                    next_id += 1;
                    particles.push(child);
                }
            }
            if !dead.is_empty() {
                let mut keep = 0usize;
                let mut d = 0usize;
                particles.retain(|_| {
                    let idx = keep;
                    keep += 1;
                    if d < dead.len() && idx == dead[d] {
                        d += 1;
                        false
                    } else {
                        true
                    }
                });
            }
            t += h;
            if particles.len() > cfg.max_particles {
                capped = true;
                break 'snapshots;
            }
        }
        t = ts;
        out.push(ParticleSystem {
            time: ts,
            particles: particles.clone(),
        });
    }

    Trajectory {
        snapshots: out,
        capped,
    }
}

/// Weighted-process view: identical particle tree, but snapshot particles
/// carry weight `phi(position)` so that `weighted_mass(lambda_c)` is the
/// additive martingale `W_t^phi` and the plain view is recovered by
/// `<g, X_t> = e^{lambda_c t} <g / phi, weighted measure>`.
#[derive(Clone, Debug)]
pub struct WeightedTrajectory {
    pub trajectory: Trajectory,
    /// `(t, W_t^phi)` per snapshot.
    pub w_series: Vec<(f64, f64)>,
}

impl WeightedTrajectory {
    /// Plain-process view: same atoms with unit weight.
    pub fn plain(&self) -> Trajectory {
        let mut t = self.trajectory.clone();
        for s in &mut t.snapshots {
            for p in &mut s.particles {
                p.weight = 1.0;
            }
        }
        t
    }
}

/// Simulate the weighted branching diffusion (`h = phi`).
pub fn simulate_weighted(model: &Model, init: &[Vec<f64>], cfg: &SimConfig) -> Result<WeightedTrajectory> {
    cfg.validate()?;
    validate_init(model, init)?;
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    Ok(simulate_weighted_with_rng(model, init, cfg, &mut rng))
}

/// As [`simulate_weighted`] with an externally managed RNG.
pub fn simulate_weighted_with_rng<R: Rng>(
    model: &Model,
    init: &[Vec<f64>],
    cfg: &SimConfig,
    rng: &mut R,
) -> WeightedTrajectory {
    let mut trajectory = simulate_with_rng(model, init, cfg, rng);
    let lambda_c = model.lambda_c();
    let mut w_series = Vec::with_capacity(trajectory.snapshots.len());
    for snap in &mut trajectory.snapshots {
        for p in &mut snap.particles {
            p.weight = model.phi(&p.position);
        }
        w_series.push((snap.time, snap.weighted_mass(lambda_c)));
    }
    WeightedTrajectory {
        trajectory,
        w_series,
    }
}

/// Run independent replicates in parallel, mapping each trajectory through
/// `f`. Replicate `i` uses RNG stream `i` over `cfg.seed`, so results do
/// not depend on thread scheduling.
pub fn run_replicates<T, F>(
    model: &Model,
    init: &[Vec<f64>],
    cfg: &SimConfig,
    replicates: usize,
    f: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &Trajectory) -> T + Send + Sync,
{
    cfg.validate()?;
    validate_init(model, init)?;
    Ok((0..replicates)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replicate_rng(cfg.seed, rep);
            let traj = simulate_with_rng(model, init, cfg, &mut rng);
            f(rep, &traj)
        })
        .collect())
}

/// RNG stream for one replicate.
pub fn replicate_rng(seed: u64, replicate: usize) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64);
    rng
}

/// Format a float for CSV output (exponent form round-trips and never
/// produces locale-dependent or padded digits).
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

/// Write trajectories as CSV: one row per particle per snapshot.
pub fn write_trajectories_csv<W: std::io::Write>(
    out: &mut W,
    trajectories: &[Trajectory],
    dim: usize,
) -> std::io::Result<()> {
    let mut header = String::from("replicate,t,id");
    for i in 0..dim {
        header.push_str(&format!(",pos{i}"));
    }
    header.push_str(",weight\n");
    out.write_all(header.as_bytes())?;
    for (rep, traj) in trajectories.iter().enumerate() {
        for snap in &traj.snapshots {
            for p in &snap.particles {
                let mut row = format!("{rep},{},{}", fmt_f64(snap.time), p.lineage_id);
                for c in &p.position {
                    row.push(',');
                    row.push_str(&fmt_f64(*c));
                }
                row.push(',');
                row.push_str(&fmt_f64(p.weight));
                row.push('\n');
                out.write_all(row.as_bytes())?;
            }
        }
    }
    Ok(())
}

/// Compact per-snapshot summary for JSON export.
#[derive(Clone, Debug, Serialize)]
pub struct SnapshotSummary {
    pub t: f64,
    pub count: usize,
    pub w_phi: f64,
    pub support_radius: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrajectorySummary {
    pub capped: bool,
    pub snapshots: Vec<SnapshotSummary>,
}

pub fn trajectory_summary(traj: &Trajectory, model: &Model) -> TrajectorySummary {
    TrajectorySummary {
        capped: traj.capped,
        snapshots: traj
            .snapshots
            .iter()
            .map(|s| SnapshotSummary {
                t: s.time,
                count: s.len(),
                w_phi: crate::stats::w_phi(s, model),
                support_radius: s.support_radius(),
            })
            .collect(),
    }
}
