//! The outer factorization driver: rank escalation with warm-started PALM,
//! threshold-grid rounding under the description length, class-specificity
//! enforcement, trivial-product removal, and the rank-gap stopping rule.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rayon::prelude::*;

use crate::binmat::{theta_t, BinaryMatrix, ClassPartition};
use crate::objective::{
    description_length_with_residual, residual_boolean, ObjectiveContext, RelaxedState,
};
use crate::palm::{optimize, optimize_frozen_v, PalmConfig, PalmTrace};
use crate::{dim_mismatch, Error, Result, Scalar};

/// A rounded factorization: binary patterns `X`, per-class alterations
/// `V^(a)`, and usage `Y` in canonical class-block layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorModel {
    x: BinaryMatrix,
    v: Vec<BinaryMatrix>,
    y: BinaryMatrix,
    partition: ClassPartition,
}

impl FactorModel {
    pub fn new(
        x: BinaryMatrix,
        v: Vec<BinaryMatrix>,
        y: BinaryMatrix,
        partition: ClassPartition,
    ) -> Result<Self> {
        let (n, r) = (x.rows(), x.cols());
        if v.len() != partition.class_count() {
            return dim_mismatch(
                "factor model",
                format!("{} V blocks", partition.class_count()),
                format!("{}", v.len()),
            );
        }
        if y.rows() != partition.total_rows() || y.cols() != r {
            return dim_mismatch(
                "factor model",
                format!("Y {}x{r}", partition.total_rows()),
                format!("Y {}x{}", y.rows(), y.cols()),
            );
        }
        if v.iter().any(|b| b.rows() != n || b.cols() != r) {
            return dim_mismatch("factor model", format!("V blocks {n}x{r}"), "other");
        }
        Ok(Self { x, v, y, partition })
    }

    /// Model of rank zero.
    pub fn empty(n: usize, partition: ClassPartition) -> Self {
        let c = partition.class_count();
        let m = partition.total_rows();
        Self {
            x: BinaryMatrix::zeros(n, 0),
            v: vec![BinaryMatrix::zeros(n, 0); c],
            y: BinaryMatrix::zeros(m, 0),
            partition,
        }
    }

    pub fn x(&self) -> &BinaryMatrix {
        &self.x
    }

    pub fn v(&self, class: usize) -> &BinaryMatrix {
        &self.v[class]
    }

    pub fn v_blocks(&self) -> &[BinaryMatrix] {
        &self.v
    }

    pub fn y(&self) -> &BinaryMatrix {
        &self.y
    }

    pub fn partition(&self) -> &ClassPartition {
        &self.partition
    }

    /// Number of columns (outer products) the model carries.
    pub fn rank(&self) -> usize {
        self.x.cols()
    }

    pub fn items(&self) -> usize {
        self.x.rows()
    }

    pub fn class_count(&self) -> usize {
        self.v.len()
    }

    /// Class-wise rank `r^(a)`: columns used by at least two transactions of
    /// the class whose effective pattern covers at least two items.
    pub fn class_rank(&self, class: usize) -> Result<usize> {
        let y_a = self.y.class_block(&self.partition, class)?;
        let usage = y_a.column_counts();
        let x_counts = self.x.column_counts();
        let v_counts = self.v[class].column_counts();
        Ok((0..self.rank())
            .filter(|&s| usage[s] >= 2 && x_counts[s] + v_counts[s] >= 2)
            .count())
    }

    pub fn class_ranks(&self) -> Result<Vec<usize>> {
        (0..self.class_count()).map(|a| self.class_rank(a)).collect()
    }

    /// Both class-specificity conditions, entry-wise: no alteration overlaps
    /// its pattern, and no cell is altered in every class at once.
    pub fn satisfies_class_specific(&self) -> bool {
        for v_a in &self.v {
            let overlap = self.x.hadamard(v_a).expect("shapes checked at construction");
            if !overlap.is_empty() {
                return false;
            }
        }
        let mut shared = match self.v.first() {
            Some(first) => first.clone(),
            None => return true,
        };
        for v_a in &self.v[1..] {
            shared = shared.hadamard(v_a).expect("shapes checked at construction");
        }
        shared.is_empty()
    }

    /// Boolean reconstruction `theta(Y^(a)(X + V^(a))^T)` stacked over classes.
    pub fn reconstruction(&self) -> Result<BinaryMatrix> {
        let blocks = (0..self.class_count())
            .map(|a| {
                let altered = self.x.union(&self.v[a])?;
                let y_a = self.y.class_block(&self.partition, a)?;
                y_a.boolean_product(&altered)
            })
            .collect::<Result<Vec<_>>>()?;
        BinaryMatrix::vstack(&blocks)
    }

    /// `|N|` against the given data.
    pub fn boolean_rss(&self, data: &BinaryMatrix) -> Result<usize> {
        Ok(residual_boolean(data, self)?.total)
    }

    /// Relaxed copy of the model (binary entries as reals).
    pub fn to_relaxed<F: Scalar>(&self) -> RelaxedState<F> {
        RelaxedState {
            x: self.x.to_real(),
            v: self.v.iter().map(BinaryMatrix::to_real).collect(),
            y: self.y.to_real(),
        }
    }

    /// Re-express a model computed on column-filtered data over the full item
    /// set: filtered item `i` maps to original item `kept[i]`, dropped items
    /// get all-zero pattern and alteration rows.
    pub fn expand_items(&self, total_items: usize, kept: &[usize]) -> Result<FactorModel> {
        Ok(FactorModel {
            x: self.x.expand_rows(total_items, kept)?,
            v: self
                .v
                .iter()
                .map(|b| b.expand_rows(total_items, kept))
                .collect::<Result<Vec<_>>>()?,
            y: self.y.clone(),
            partition: self.partition.clone(),
        })
    }
}

/// Driver parameters: rank increment per stage, the rank cap for runs where
/// the gap rule never fires, the PALM loop settings, the number of random
/// initializations tried per stage, and the RNG seed.
#[derive(Debug, Clone)]
pub struct CsaltConfig<F> {
    pub delta_r: usize,
    pub max_rank: usize,
    pub palm: PalmConfig<F>,
    /// Independent random draws of the appended columns per rank stage; the
    /// candidate with the lowest rounded description length wins. One draw
    /// runs the plain single-initialization escalation.
    pub stage_draws: usize,
    pub seed: u64,
}

impl<F: Scalar> Default for CsaltConfig<F> {
    fn default() -> Self {
        Self {
            delta_r: 10,
            max_rank: 200,
            palm: PalmConfig::default(),
            stage_draws: 4,
            seed: 0,
        }
    }
}

/// The 21-point rounding threshold grid `{0.05 k | k = 0..20}`.
pub fn threshold_grid<F: Scalar>() -> Vec<F> {
    (0..=20).map(|k| F::from_f64c(0.05 * k as f64)).collect()
}

/// Upper bound on fresh alteration entries at initialization; biases the
/// optimization toward common structure first.
const V_INIT_CAP: f64 = 0.1;

/// Append `delta_r` random columns to every factor block, keeping existing
/// columns bit-identical (warm start). Pattern and usage entries are uniform
/// on `[0,1]`; alteration entries uniform on `[0, 0.1]`, or exactly zero when
/// `with_alterations` is false.
pub fn increase_rank<F: Scalar>(
    state: &mut RelaxedState<F>,
    delta_r: usize,
    rng: &mut ChaCha8Rng,
    with_alterations: bool,
) {
    state.x = append_columns(&state.x, delta_r, || F::from_f64c(rng.gen_range(0.0..1.0)));
    let v = std::mem::take(&mut state.v);
    state.v = v
        .into_iter()
        .map(|block| {
            append_columns(&block, delta_r, || {
                if with_alterations {
                    F::from_f64c(rng.gen_range(0.0..V_INIT_CAP))
                } else {
                    F::zero()
                }
            })
        })
        .collect();
    state.y = append_columns(&state.y, delta_r, || F::from_f64c(rng.gen_range(0.0..1.0)));
}

/// Redraw columns that died during optimization. A column whose usage is
/// identically zero (or with no pattern and no alteration mass) sits at a
/// locked stationary point of the PALM dynamics and would waste allotted rank
/// in every later stage; it is indistinguishable from an unallocated column,
/// so it is refilled like one.
pub fn revive_dead_columns<F: Scalar>(
    state: &mut RelaxedState<F>,
    rng: &mut ChaCha8Rng,
    with_alterations: bool,
) -> usize {
    let mut revived = 0;
    for s in 0..state.rank() {
        let usage: F = state.y.column(s).sum();
        let pattern: F = state.x.column(s).sum()
            + state
                .v
                .iter()
                .fold(F::zero(), |acc, block| acc + block.column(s).sum());
        if usage > F::zero() && pattern > F::zero() {
            continue;
        }
        for j in 0..state.x.nrows() {
            state.x[(j, s)] = F::from_f64c(rng.gen_range(0.0..1.0));
        }
        for block in &mut state.v {
            for j in 0..block.nrows() {
                block[(j, s)] = if with_alterations {
                    F::from_f64c(rng.gen_range(0.0..V_INIT_CAP))
                } else {
                    F::zero()
                };
            }
        }
        for j in 0..state.y.nrows() {
            state.y[(j, s)] = F::from_f64c(rng.gen_range(0.0..1.0));
        }
        revived += 1;
    }
    revived
}

fn append_columns<F: Scalar>(
    block: &Array2<F>,
    extra: usize,
    mut draw: impl FnMut() -> F,
) -> Array2<F> {
    let (rows, cols) = block.dim();
    let mut out = Array2::zeros((rows, cols + extra));
    out.slice_mut(ndarray::s![.., ..cols]).assign(block);
    for s in cols..cols + extra {
        for j in 0..rows {
            out[(j, s)] = draw();
        }
    }
    out
}

/// Zero out alteration entries that violate class specificity: entries under
/// a set pattern bit, and entries set in every class simultaneously.
pub fn enforce_class_specific(x: &BinaryMatrix, v: &[BinaryMatrix]) -> Vec<BinaryMatrix> {
    let mut out: Vec<BinaryMatrix> = v.to_vec();
    if out.is_empty() {
        return out;
    }
    let mut shared = out[0].clone();
    for block in &out[1..] {
        shared = shared.hadamard(block).expect("alteration blocks share shape");
    }
    for block in &mut out {
        for (i, s) in x.iter_ones() {
            block.set(i, s, false);
        }
        for (i, s) in shared.iter_ones() {
            block.set(i, s, false);
        }
    }
    out
}

/// Drop trivial outer products: columns used by fewer than two transactions,
/// or whose effective pattern covers fewer than two items in every class.
pub fn remove_trivial(model: &FactorModel) -> FactorModel {
    let usage = model.y.column_counts();
    let x_counts = model.x.column_counts();
    let v_counts: Vec<Vec<usize>> = model.v.iter().map(BinaryMatrix::column_counts).collect();
    let keep: Vec<usize> = (0..model.rank())
        .filter(|&s| {
            usage[s] >= 2 && v_counts.iter().any(|vc| x_counts[s] + vc[s] >= 2)
        })
        .collect();
    FactorModel {
        x: model.x.select_columns(&keep),
        v: model.v.iter().map(|b| b.select_columns(&keep)).collect(),
        y: model.y.select_columns(&keep),
        partition: model.partition.clone(),
    }
}

/// Result of rounding a relaxed state on the threshold grid.
#[derive(Debug, Clone)]
pub struct RoundOutcome<F> {
    pub model: FactorModel,
    /// Description length of the final (trimmed and pruned) model.
    pub f: F,
    /// Description length of the best grid candidate before trivial removal.
    pub f_before_trim: F,
    /// `|N|` of the final model.
    pub rss: usize,
    /// Winning `(t1, t2)` thresholds.
    pub thresholds: (F, F),
    /// Rank right after trivial removal, before redundancy pruning; this is
    /// the capacity the stage actually engaged and what the rank-gap rule
    /// compares against.
    pub engaged_rank: usize,
}

/// Round a relaxed state to a binary model: try all `(t1, t2)` on the grid
/// (`t1` thresholds patterns and alterations, `t2` usage), enforce class
/// specificity, keep the candidate of minimal description length (ties to the
/// lexicographically smaller thresholds), remove trivial products, then drop
/// redundant columns while that lowers the description length further.
pub fn round<F: Scalar>(
    ctx: &ObjectiveContext<F>,
    state: &RelaxedState<F>,
) -> Result<RoundOutcome<F>> {
    let grid = threshold_grid::<F>();
    let indices: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|i| (0..grid.len()).map(move |j| (i, j)))
        .collect();
    let scored = indices
        .par_iter()
        .map(|&(i, j)| {
            let model = threshold_candidate(ctx, state, grid[i], grid[j])?;
            let residual = residual_boolean(ctx.data(), &model)?;
            let f = description_length_with_residual(ctx, &model, &residual)?;
            Ok((i, j, f))
        })
        .collect::<Result<Vec<_>>>()?;
    let &(best_i, best_j, f_before_trim) = scored
        .iter()
        .min_by(|(i1, j1, f1), (i2, j2, f2)| {
            f1.partial_cmp(f2)
                .expect("description length is finite")
                .then_with(|| (i1, j1).cmp(&(i2, j2)))
        })
        .expect("grid is nonempty");

    let candidate = threshold_candidate(ctx, state, grid[best_i], grid[best_j])?;
    let trimmed = remove_trivial(&candidate);
    let engaged_rank = trimmed.rank();
    let (model, f, rss) = prune_redundant(ctx, trimmed)?;
    Ok(RoundOutcome {
        model,
        f,
        f_before_trim,
        rss,
        thresholds: (grid[best_i], grid[best_j]),
        engaged_rank,
    })
}

/// Greedily drop the column whose removal lowers `f` the most, until no
/// removal helps. Duplicate outer products (a stalled symmetric split of one
/// pattern over two columns) and chance tiles cost description length without
/// explaining anything the rest of the model does not.
fn prune_redundant<F: Scalar>(
    ctx: &ObjectiveContext<F>,
    mut model: FactorModel,
) -> Result<(FactorModel, F, usize)> {
    let residual = residual_boolean(ctx.data(), &model)?;
    let mut f = description_length_with_residual(ctx, &model, &residual)?;
    let mut rss = residual.total;
    loop {
        let rank = model.rank();
        if rank == 0 {
            break;
        }
        let candidates = (0..rank)
            .into_par_iter()
            .map(|drop| {
                let keep: Vec<usize> = (0..rank).filter(|&s| s != drop).collect();
                let submodel = FactorModel {
                    x: model.x.select_columns(&keep),
                    v: model.v.iter().map(|b| b.select_columns(&keep)).collect(),
                    y: model.y.select_columns(&keep),
                    partition: model.partition.clone(),
                };
                let residual = residual_boolean(ctx.data(), &submodel)?;
                let f_sub = description_length_with_residual(ctx, &submodel, &residual)?;
                Ok((drop, submodel, f_sub, residual.total))
            })
            .collect::<Result<Vec<_>>>()?;
        let best = candidates
            .into_iter()
            .min_by(|(i, _, f1, _), (j, _, f2, _)| {
                f1.partial_cmp(f2)
                    .expect("description length is finite")
                    .then(i.cmp(j))
            })
            .expect("rank > 0");
        if best.2 < f {
            model = best.1;
            f = best.2;
            rss = best.3;
        } else {
            break;
        }
    }
    Ok((model, f, rss))
}

fn threshold_candidate<F: Scalar>(
    ctx: &ObjectiveContext<F>,
    state: &RelaxedState<F>,
    t1: F,
    t2: F,
) -> Result<FactorModel> {
    let x = theta_t(&state.x.view(), t1);
    let v_raw: Vec<BinaryMatrix> = state
        .v
        .iter()
        .map(|block| theta_t(&block.view(), t1))
        .collect();
    let y = theta_t(&state.y.view(), t2);
    let v = enforce_class_specific(&x, &v_raw);
    FactorModel::new(x, v, y, ctx.partition().clone())
}

/// Per-stage summary of the rank-escalation loop.
#[derive(Debug, Clone)]
pub struct StageSummary<F> {
    /// Rank allotted to this stage.
    pub rank: usize,
    /// PALM sweeps run.
    pub iterations: usize,
    /// Composite objective after the last sweep.
    pub final_objective: F,
    /// Description length of the stage's trimmed model.
    pub rounded_f: F,
    /// Rank of the stage's trimmed model.
    pub rounded_rank: usize,
}

/// Output of [`factorize`]: the selected model with its description length and
/// residual, plus the per-stage summaries and PALM traces.
#[derive(Debug, Clone)]
pub struct FactorizeResult<F> {
    pub model: FactorModel,
    pub f: F,
    pub rss: usize,
    pub thresholds: (F, F),
    pub stages: Vec<StageSummary<F>>,
    pub traces: Vec<PalmTrace<F>>,
}

/// Factorize class-labeled binary data with automatic rank selection.
///
/// Ranks are tried in steps of `delta_r` with PALM warm-started from the
/// previous stage's relaxed iterates; the loop returns as soon as a rounded
/// model leaves a rank gap greater than one, and otherwise the best model by
/// description length once `max_rank` is reached.
pub fn factorize<F: Scalar>(
    data: &BinaryMatrix,
    partition: &ClassPartition,
    config: &CsaltConfig<F>,
) -> Result<FactorizeResult<F>> {
    factorize_impl(data, partition, config, true)
}

/// [`factorize`] with alterations disabled: all `V` blocks stay zero, which
/// reduces the objective to the unsupervised description length.
pub fn factorize_unsupervised<F: Scalar>(
    data: &BinaryMatrix,
    partition: &ClassPartition,
    config: &CsaltConfig<F>,
) -> Result<FactorizeResult<F>> {
    factorize_impl(data, partition, config, false)
}

fn factorize_impl<F: Scalar>(
    data: &BinaryMatrix,
    partition: &ClassPartition,
    config: &CsaltConfig<F>,
    with_alterations: bool,
) -> Result<FactorizeResult<F>> {
    if data.is_empty() {
        return Err(Error::InvalidInput("data matrix has no ones".into()));
    }
    if config.delta_r == 0 || config.max_rank < config.delta_r {
        return Err(Error::InvalidInput(
            "need max_rank >= delta_r >= 1".into(),
        ));
    }
    if config.stage_draws == 0 {
        return Err(Error::InvalidInput("need at least one draw per stage".into()));
    }
    let ctx = ObjectiveContext::<F>::new(data.clone(), partition.clone())?;
    let mut state = RelaxedState::empty(ctx.items(), ctx.transactions(), ctx.class_count());
    let mut stages = Vec::new();
    let mut traces = Vec::new();
    let mut best: Option<RoundOutcome<F>> = None;

    let mut rank = 0;
    let mut stage_index = 0u64;
    while rank < config.max_rank {
        rank = (rank + config.delta_r).min(config.max_rank);
        let missing = rank - state.rank();

        // Independent draws of the appended columns (dead carried columns are
        // redrawn too); the candidate with the lowest description length after
        // rounding becomes the stage result.
        let draws: Vec<(RelaxedState<F>, PalmTrace<F>, RoundOutcome<F>)> = (0..config
            .stage_draws)
            .into_par_iter()
            .map(|draw| {
                let mut draw_rng =
                    ChaCha8Rng::seed_from_u64(draw_seed(config.seed, stage_index, draw as u64));
                let mut candidate = state.clone();
                revive_dead_columns(&mut candidate, &mut draw_rng, with_alterations);
                increase_rank(&mut candidate, missing, &mut draw_rng, with_alterations);
                let trace = if with_alterations {
                    optimize(&ctx, &mut candidate, &config.palm)?
                } else {
                    optimize_frozen_v(&ctx, &mut candidate, &config.palm)?
                };
                let outcome = round(&ctx, &candidate)?;
                Ok((candidate, trace, outcome))
            })
            .collect::<Result<Vec<_>>>()?;
        let (winner, _) = draws
            .iter()
            .enumerate()
            .min_by(|(i, (_, _, a)), (j, (_, _, b))| {
                a.f.partial_cmp(&b.f)
                    .expect("description length is finite")
                    .then(i.cmp(j))
            })
            .map(|(i, _)| (i, ()))
            .expect("at least one draw");
        let (chosen_state, trace, outcome) = draws.into_iter().nth(winner).expect("index valid");
        state = chosen_state;

        log::info!(
            "rank {rank}: {} iterations, objective {:?}, rounded f {:?}, model rank {}",
            trace.iterations(),
            trace.last_objective(),
            outcome.f,
            outcome.model.rank()
        );
        stages.push(StageSummary {
            rank,
            iterations: trace.iterations(),
            final_objective: trace.last_objective().unwrap_or_else(F::zero),
            rounded_f: outcome.f,
            rounded_rank: outcome.model.rank(),
        });
        traces.push(trace);

        let gap_hit = rank - outcome.engaged_rank > 1;
        let improved = best.as_ref().is_none_or(|prev| outcome.f < prev.f);
        if improved {
            best = Some(outcome.clone());
        }
        if gap_hit {
            return Ok(finish(outcome, stages, traces));
        }
        stage_index += 1;
    }
    let outcome = best.expect("at least one stage ran");
    Ok(finish(outcome, stages, traces))
}

fn draw_seed(seed: u64, stage: u64, draw: u64) -> u64 {
    // splitmix-style mixing keeps per-draw streams decorrelated.
    let mut z = seed
        .wrapping_add(stage.wrapping_mul(0x9e3779b97f4a7c15))
        .wrapping_add(draw.wrapping_mul(0xbf58476d1ce4e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn finish<F: Scalar>(
    outcome: RoundOutcome<F>,
    stages: Vec<StageSummary<F>>,
    traces: Vec<PalmTrace<F>>,
) -> FactorizeResult<F> {
    FactorizeResult {
        model: outcome.model,
        f: outcome.f,
        rss: outcome.rss,
        thresholds: outcome.thresholds,
        stages,
        traces,
    }
}
