//! Crude nested Monte Carlo, multilevel (MLMC) and weighted multilevel (ML2R)
//! estimators.
//!
//! Stream layout: the replicates of level `j` are cut into chunks of
//! [`STREAM_CHUNK`] consecutive indices; chunk `c` owns the key `root / j / c`
//! and draws its replicates in order, each taking its outer draw and then its
//! inner draws from the chunk stream. Chunks are grouped in blocks whose
//! partial statistics are merged in block order, so results do not depend on
//! the worker count.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::exec::Executor;
use crate::model::{inner_sum, InnerProblem, NestedModel, StreamKey, StreamRng};
use crate::stats::Accumulator;
use crate::weights::WeightVector;

/// Upper bound on the finest inner sample count.
const MAX_INNER: u64 = 1 << 40;

/// Consecutive replicates sharing one generator stream.
pub const STREAM_CHUNK: u64 = 64;

/// Minimum replicates per level, so a variance can be estimated.
pub const MIN_LEVEL_SAMPLES: u64 = 2;

/// Biases `h_j = h / M^{j-1}` with `h = 1/K_0`, i.e. inner counts `K_j = K_0 M^{j-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelGeometry {
    pub k0: u64,
    pub m: u64,
    pub r: usize,
}

impl LevelGeometry {
    pub fn new(k0: u64, m: u64, r: usize) -> Result<Self> {
        let g = Self { k0, m, r };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k0 == 0 {
            return invalid("coarsest inner count K0 must be >= 1");
        }
        if self.m < 2 {
            return invalid(format!("level root M must be >= 2, got {}", self.m));
        }
        if self.r == 0 {
            return invalid("depth R must be >= 1");
        }
        let finest = (1..self.r).try_fold(self.k0, |k, _| k.checked_mul(self.m));
        match finest {
            Some(k) if k <= MAX_INNER => Ok(()),
            _ => invalid(format!(
                "finest inner count K0 * M^(R-1) overflows the limit {MAX_INNER} (K0={}, M={}, R={})",
                self.k0, self.m, self.r
            )),
        }
    }

    /// `h = 1/K_0`.
    pub fn h(&self) -> f64 {
        1.0 / self.k0 as f64
    }

    /// `K_j`, 1-based.
    pub fn inner_count(&self, j: usize) -> u64 {
        self.k0 * self.m.pow((j - 1) as u32)
    }

    /// `h_j = 1/K_j`, 1-based.
    pub fn h_level(&self, j: usize) -> f64 {
        1.0 / self.inner_count(j) as f64
    }
}

/// `N_j = max(ceil(q_j N), 2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub n: u64,
    pub q: Vec<f64>,
}

impl Allocation {
    pub fn new(n: u64, q: Vec<f64>) -> Result<Self> {
        let a = Self { n, q };
        a.validate()?;
        Ok(a)
    }

    /// Same share on every level.
    pub fn uniform(n: u64, r: usize) -> Result<Self> {
        Self::new(n, vec![1.0 / r as f64; r])
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return invalid("allocation budget N must be >= 1");
        }
        if self.q.is_empty() {
            return invalid("allocation needs at least one level share");
        }
        if self.q.iter().any(|q| !(q.is_finite() && *q > 0.0)) {
            return invalid("allocation shares q_j must be positive");
        }
        let total: f64 = self.q.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return invalid(format!("allocation shares must sum to 1, got {total}"));
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.q.len()
    }

    /// `N_j`, 1-based.
    pub fn level_samples(&self, j: usize) -> u64 {
        ((self.q[j - 1] * self.n as f64).ceil() as u64).max(MIN_LEVEL_SAMPLES)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingMode {
    /// Coarse term reuses the first `K_{j-1}` of the `K_j` inner draws.
    #[default]
    Standard,
    /// Fine mean against the average payoff of `M` disjoint coarse groups.
    Antithetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Crude,
    Mlmc,
    Ml2r,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub level: usize,
    pub h: f64,
    pub inner_count: u64,
    pub n: u64,
    pub mean: f64,
    pub var: f64,
    /// `n * level_cost(j)`, in evaluations of `F`.
    pub cost: f64,
    /// Inner evaluations actually performed, `n * K_j`.
    pub evaluations: f64,
    /// Multiplier of this level in the estimate (`W_j` for ML2R, else 1).
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub estimator: EstimatorKind,
    pub value: f64,
    pub std_error: f64,
    pub total_cost: f64,
    pub total_evaluations: f64,
    pub levels: Vec<LevelStats>,
    pub geometry: LevelGeometry,
    pub allocation: Option<Allocation>,
    pub weights: Option<WeightVector>,
    pub coupling: CouplingMode,
    pub seed: StreamKey,
}

/// `kappa K_1` for `j = 1`, `kappa (K_j + K_{j-1})` above, with `kappa = 1`.
pub fn level_cost(geometry: &LevelGeometry, j: usize) -> f64 {
    if j <= 1 {
        geometry.inner_count(1) as f64
    } else {
        (geometry.inner_count(j) + geometry.inner_count(j - 1)) as f64
    }
}

/// One replicate of level `j`, read from `rng`.
fn draw_level<P: InnerProblem>(
    model: &NestedModel<P>,
    geometry: &LevelGeometry,
    j: usize,
    mode: CouplingMode,
    rng: &mut StreamRng,
) -> Result<f64> {
    let problem = &model.problem;
    let y = problem.sample_outer(rng);
    let fine = geometry.inner_count(j);
    if j == 1 {
        let s = inner_sum(problem, &y, fine, 1, rng)?;
        return model.payoff_checked(s / fine as f64);
    }
    let coarse = geometry.inner_count(j - 1);
    match mode {
        CouplingMode::Standard => {
            let head = inner_sum(problem, &y, coarse, 1, rng)?;
            let tail = inner_sum(problem, &y, fine - coarse, coarse + 1, rng)?;
            let f_fine = model.payoff_checked((head + tail) / fine as f64)?;
            let f_coarse = model.payoff_checked(head / coarse as f64)?;
            Ok(f_fine - f_coarse)
        }
        CouplingMode::Antithetic => {
            let mut total = 0.0;
            let mut coarse_payoffs = 0.0;
            for g in 0..geometry.m {
                let s = inner_sum(problem, &y, coarse, g * coarse + 1, rng)?;
                total += s;
                coarse_payoffs += model.payoff_checked(s / coarse as f64)?;
            }
            let f_fine = model.payoff_checked(total / fine as f64)?;
            Ok(f_fine - coarse_payoffs / geometry.m as f64)
        }
    }
}

/// One level-`j` difference `Y_{h_j} - Y_{h_{j-1}}` (or its antithetic
/// counterpart) drawn from the start of the stream of `key`.
pub fn level_difference_sample<P: InnerProblem>(
    model: &NestedModel<P>,
    geometry: &LevelGeometry,
    j: usize,
    mode: CouplingMode,
    key: StreamKey,
) -> Result<f64> {
    geometry.validate()?;
    if j < 2 || j > geometry.r {
        return invalid(format!("level difference needs 2 <= j <= R = {}, got {j}", geometry.r));
    }
    draw_level(model, geometry, j, mode, &mut key.rng())
}

/// Accumulates `f` over `n` replicates laid out in chunk streams of `key`.
/// `init` builds per-block scratch state.
pub(crate) fn accumulate_replicates<S, I, F>(exec: &Executor, n: u64, key: StreamKey, init: I, f: F) -> Result<Accumulator>
where
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, &mut StreamRng) -> Result<f64> + Sync + Send,
{
    let n_chunks = n.div_ceil(STREAM_CHUNK);
    let per_block = (exec.block_size() as u64 / STREAM_CHUNK).max(1);
    let blocks = exec.map_blocks(n_chunks.div_ceil(per_block) as usize, |b| -> Result<Accumulator> {
        let mut acc = Accumulator::new();
        let mut state = init();
        let first = b as u64 * per_block;
        for c in first..(first + per_block).min(n_chunks) {
            let mut rng = key.child(c).rng();
            for _ in c * STREAM_CHUNK..((c + 1) * STREAM_CHUNK).min(n) {
                acc.push(f(&mut state, &mut rng)?);
            }
        }
        Ok(acc)
    });
    let mut acc = Accumulator::new();
    for b in blocks {
        acc.merge(&b?);
    }
    Ok(acc)
}

/// `n` replicates of level `j` (payoffs for `j = 1`, differences above), chunk
/// `c` drawn from `key / c`.
pub fn sample_level<P: InnerProblem>(
    model: &NestedModel<P>,
    geometry: &LevelGeometry,
    j: usize,
    mode: CouplingMode,
    n: u64,
    key: StreamKey,
    exec: &Executor,
) -> Result<Accumulator> {
    sample_level_mapped(model, geometry, j, mode, n, key, exec, |v| v)
}

/// As [`sample_level`], accumulating `map(sample)` instead of the sample.
#[allow(clippy::too_many_arguments)]
pub fn sample_level_mapped<P, G>(
    model: &NestedModel<P>,
    geometry: &LevelGeometry,
    j: usize,
    mode: CouplingMode,
    n: u64,
    key: StreamKey,
    exec: &Executor,
    map: G,
) -> Result<Accumulator>
where
    P: InnerProblem,
    G: Fn(f64) -> f64 + Sync + Send,
{
    geometry.validate()?;
    if j == 0 || j > geometry.r {
        return invalid(format!("level index {j} outside 1..={}", geometry.r));
    }
    accumulate_replicates(exec, n, key, || (), |_, rng| Ok(map(draw_level(model, geometry, j, mode, rng)?)))
}

/// `n` draws of `g(y, X_coarse, X_fine)` where both inner means share the outer
/// draw and `X_coarse` averages the first `k_coarse` of the `k_fine` inner draws.
pub fn sample_coupled<P, G>(
    model: &NestedModel<P>,
    k_coarse: u64,
    k_fine: u64,
    n: u64,
    key: StreamKey,
    exec: &Executor,
    g: G,
) -> Result<Accumulator>
where
    P: InnerProblem,
    G: Fn(&P::Outer, f64, f64) -> f64 + Sync + Send,
{
    if k_coarse == 0 || k_fine < k_coarse {
        return invalid(format!("coupled sampling needs 1 <= k_coarse <= k_fine, got {k_coarse}, {k_fine}"));
    }
    if k_fine == k_coarse {
        return sample_prefix_means(model, &[k_coarse], n, key, exec, |y, x| g(y, x[0], x[0]));
    }
    sample_prefix_means(model, &[k_coarse, k_fine], n, key, exec, |y, x| g(y, x[0], x[1]))
}

/// `n` draws of `g(y, [X_{1/k} for k in counts])`, all inner means taken over
/// prefixes of one inner stream. `counts` must be strictly increasing.
pub fn sample_prefix_means<P, G>(
    model: &NestedModel<P>,
    counts: &[u64],
    n: u64,
    key: StreamKey,
    exec: &Executor,
    g: G,
) -> Result<Accumulator>
where
    P: InnerProblem,
    G: Fn(&P::Outer, &[f64]) -> f64 + Sync + Send,
{
    if counts.is_empty() || counts[0] == 0 || counts.windows(2).any(|w| w[0] >= w[1]) {
        return invalid(format!("prefix counts must be positive and strictly increasing, got {counts:?}"));
    }
    let problem = &model.problem;
    accumulate_replicates(
        exec,
        n,
        key,
        || vec![0.0; counts.len()],
        |means, rng| {
            let y = problem.sample_outer(rng);
            let (mut sum, mut done) = (0.0, 0);
            for (slot, &k) in means.iter_mut().zip(counts) {
                sum += inner_sum(problem, &y, k - done, done + 1, rng)?;
                done = k;
                *slot = sum / k as f64;
            }
            Ok(g(&y, means))
        },
    )
}

fn warn_on_mode<P: InnerProblem>(model: &NestedModel<P>, mode: CouplingMode) {
    if mode == CouplingMode::Antithetic && model.payoff.is_indicator() {
        log::warn!(
            "antithetic coupling with indicator payoff '{}': the improved strong rate needs a Hölder derivative",
            model.payoff.label()
        );
    }
}

fn run_levels<P: InnerProblem>(
    model: &NestedModel<P>,
    geometry: &LevelGeometry,
    allocation: &Allocation,
    factors: &[f64],
    mode: CouplingMode,
    key: StreamKey,
    exec: &Executor,
) -> Result<(f64, f64, Vec<LevelStats>)> {
    let mut value = 0.0;
    let mut var_sum = 0.0;
    let mut levels = Vec::with_capacity(geometry.r);
    for j in 1..=geometry.r {
        let n = allocation.level_samples(j);
        let acc = sample_level(model, geometry, j, mode, n, key.child(j as u64), exec)?;
        let w = factors[j - 1];
        value += w * acc.mean();
        var_sum += w * w * acc.variance() / n as f64;
        log::debug!("level {j}: N = {n}, mean = {:e}, var = {:e}", acc.mean(), acc.variance());
        levels.push(LevelStats {
            level: j,
            h: geometry.h_level(j),
            inner_count: geometry.inner_count(j),
            n,
            mean: acc.mean(),
            var: acc.variance(),
            cost: n as f64 * level_cost(geometry, j),
            evaluations: n as f64 * geometry.inner_count(j) as f64,
            weight: w,
        });
    }
    Ok((value, var_sum.sqrt(), levels))
}

fn check_allocation(geometry: &LevelGeometry, allocation: &Allocation) -> Result<()> {
    geometry.validate()?;
    allocation.validate()?;
    if allocation.depth() != geometry.r {
        return invalid(format!(
            "allocation has {} level shares but geometry has R = {}",
            allocation.depth(),
            geometry.r
        ));
    }
    Ok(())
}

/// Mean of `n` i.i.d. copies of `f(X_h)` with `h = 1/k`, drawn like level 1 of
/// a multilevel run with `K_0 = k`.
pub fn estimate_crude<P: InnerProblem>(
    model: &NestedModel<P>,
    k: u64,
    n: u64,
    key: StreamKey,
    exec: &Executor,
) -> Result<EstimateResult> {
    if n < 2 {
        return invalid(format!("crude estimate needs N >= 2, got {n}"));
    }
    let geometry = LevelGeometry::new(k, 2, 1)?;
    let allocation = Allocation::new(n, vec![1.0])?;
    let (value, std_error, levels) =
        run_levels(model, &geometry, &allocation, &[1.0], CouplingMode::Standard, key, exec)?;
    Ok(finish(EstimatorKind::Crude, value, std_error, levels, geometry, Some(allocation), None, CouplingMode::Standard, key))
}

pub fn estimate_mlmc<P: InnerProblem>(
    model: &NestedModel<P>,
    geometry: &LevelGeometry,
    allocation: &Allocation,
    mode: CouplingMode,
    key: StreamKey,
    exec: &Executor,
) -> Result<EstimateResult> {
    check_allocation(geometry, allocation)?;
    warn_on_mode(model, mode);
    let factors = vec![1.0; geometry.r];
    let (value, std_error, levels) = run_levels(model, geometry, allocation, &factors, mode, key, exec)?;
    Ok(finish(EstimatorKind::Mlmc, value, std_error, levels, *geometry, Some(allocation.clone()), None, mode, key))
}

pub fn estimate_ml2r<P: InnerProblem>(
    model: &NestedModel<P>,
    geometry: &LevelGeometry,
    allocation: &Allocation,
    weights: &WeightVector,
    mode: CouplingMode,
    key: StreamKey,
    exec: &Executor,
) -> Result<EstimateResult> {
    check_allocation(geometry, allocation)?;
    if weights.depth() != geometry.r || weights.spec.r != geometry.r || weights.spec.m != geometry.m {
        return invalid(format!(
            "weights solved for (M={}, R={}) do not match geometry (M={}, R={})",
            weights.spec.m, weights.spec.r, geometry.m, geometry.r
        ));
    }
    warn_on_mode(model, mode);
    let (value, std_error, levels) =
        run_levels(model, geometry, allocation, &weights.cumulative, mode, key, exec)?;
    Ok(finish(
        EstimatorKind::Ml2r,
        value,
        std_error,
        levels,
        *geometry,
        Some(allocation.clone()),
        Some(weights.clone()),
        mode,
        key,
    ))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    estimator: EstimatorKind,
    value: f64,
    std_error: f64,
    levels: Vec<LevelStats>,
    geometry: LevelGeometry,
    allocation: Option<Allocation>,
    weights: Option<WeightVector>,
    coupling: CouplingMode,
    seed: StreamKey,
) -> EstimateResult {
    let total_cost = levels.iter().map(|l| l.cost).sum();
    let total_evaluations = levels.iter().map(|l| l.evaluations).sum();
    EstimateResult {
        estimator,
        value,
        std_error,
        total_cost,
        total_evaluations,
        levels,
        geometry,
        allocation,
        weights,
        coupling,
        seed,
    }
}
