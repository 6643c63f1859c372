//! Proximal alternating linearized minimization over the factor blocks.
//!
//! One sweep updates `X`, then every alteration block `V^(a)` in ascending
//! class order, then the whole usage matrix `Y`, each with a gradient step of
//! size `1 / (gamma * M_block)` followed by the entry-wise prox of the binary
//! penalty. Gradients are always evaluated at the freshest blocks.

use ndarray::Array2;

use crate::objective::{
    alteration_sum, data_usage_correlation, grad_v_with, grad_x, grad_y_with, lipschitz_moduli,
    relaxed_f, usage_log_row, ObjectiveContext, RelaxedState,
};
use crate::{Error, Result, Scalar};

/// PALM loop parameters. Defaults match the stop criterion used throughout:
/// step-size safety factor `gamma = 1.00001`, at most 10000 iterations, and a
/// minimum average decrease of 0.005 over the last 500 iterations.
#[derive(Debug, Clone)]
pub struct PalmConfig<F> {
    pub gamma: F,
    pub max_iterations: usize,
    pub window: usize,
    pub min_avg_decrease: F,
}

impl<F: Scalar> Default for PalmConfig<F> {
    fn default() -> Self {
        Self {
            gamma: F::from_f64c(1.00001),
            max_iterations: 10_000,
            window: 500,
            min_avg_decrease: F::from_f64c(0.005),
        }
    }
}

impl<F: Scalar> PalmConfig<F> {
    fn validate(&self) -> Result<()> {
        if !(self.gamma > F::one()) {
            return Err(Error::InvalidInput("gamma must exceed 1".into()));
        }
        if self.window == 0 || self.max_iterations < self.window {
            return Err(Error::InvalidInput(
                "need max_iterations >= window >= 1".into(),
            ));
        }
        if self.min_avg_decrease < F::zero() {
            return Err(Error::InvalidInput("min_avg_decrease must be >= 0".into()));
        }
        Ok(())
    }
}

/// Step sizes taken by one sweep: `alpha` for `X`, `nu[a]` per alteration
/// block, `beta` for `Y`.
#[derive(Debug, Clone)]
pub struct StepSizes<F> {
    pub alpha: F,
    pub nu: Vec<F>,
    pub beta: F,
}

/// Objective values (the composite `F + phi`) and step sizes per iteration.
/// `objectives[0]` is the value at the initial state; one entry follows per
/// sweep.
#[derive(Debug, Clone)]
pub struct PalmTrace<F> {
    pub objectives: Vec<F>,
    pub steps: Vec<StepSizes<F>>,
}

impl<F> Default for PalmTrace<F> {
    fn default() -> Self {
        Self {
            objectives: Vec::new(),
            steps: Vec::new(),
        }
    }
}

impl<F: Scalar> PalmTrace<F> {
    /// Number of sweeps recorded.
    pub fn iterations(&self) -> usize {
        self.steps.len()
    }

    pub fn last_objective(&self) -> Option<F> {
        self.objectives.last().copied()
    }
}

/// Binary penalty `Lambda(x) = 1 - |1 - 2x|` on `[0,1]`, infinite outside.
pub fn lambda<F: Scalar>(x: F) -> F {
    if x < F::zero() || x > F::one() {
        F::infinity()
    } else {
        F::one() - (F::one() - F::from_f64c(2.0) * x).abs()
    }
}

/// `phi(M) = sum_ij Lambda(M_ij)`.
pub fn phi<F: Scalar>(m: &Array2<F>) -> F {
    m.iter().fold(F::zero(), |acc, &x| acc + lambda(x))
}

/// Entry-wise prox of `alpha * Lambda`:
/// `max{0, x - 2 alpha}` for `x <= 0.5`, else `min{1, x + 2 alpha}`.
pub fn prox_lambda<F: Scalar>(x: F, alpha: F) -> F {
    debug_assert!(alpha >= F::zero());
    let half = F::from_f64c(0.5);
    let two = F::from_f64c(2.0);
    if x <= half {
        (x - two * alpha).max(F::zero())
    } else {
        (x + two * alpha).min(F::one())
    }
}

/// Entry-wise [`prox_lambda`] over a matrix.
pub fn prox_matrix<F: Scalar>(m: &Array2<F>, alpha: F) -> Array2<F> {
    m.mapv(|x| prox_lambda(x, alpha))
}

/// Composite PALM objective `F + phi(X) + sum_a phi(V^(a)) + phi(Y)`.
pub fn composite_objective<F: Scalar>(
    ctx: &ObjectiveContext<F>,
    state: &RelaxedState<F>,
) -> Result<F> {
    let mut value = relaxed_f(ctx, state)? + phi(&state.x) + phi(&state.y);
    for v_a in &state.v {
        value = value + phi(v_a);
    }
    Ok(value)
}

/// One PALM iteration in block order X, V^(0..c), Y. Returns the step sizes
/// used. Fails with [`Error::NonFinite`] if a gradient goes NaN or infinite.
pub fn palm_sweep<F: Scalar>(
    ctx: &ObjectiveContext<F>,
    state: &mut RelaxedState<F>,
    config: &PalmConfig<F>,
) -> Result<StepSizes<F>> {
    palm_sweep_impl(ctx, state, config, true)
}

/// Sweep with the alteration blocks pinned at zero (unsupervised mode).
pub fn palm_sweep_frozen_v<F: Scalar>(
    ctx: &ObjectiveContext<F>,
    state: &mut RelaxedState<F>,
    config: &PalmConfig<F>,
) -> Result<StepSizes<F>> {
    palm_sweep_impl(ctx, state, config, false)
}

fn palm_sweep_impl<F: Scalar>(
    ctx: &ObjectiveContext<F>,
    state: &mut RelaxedState<F>,
    config: &PalmConfig<F>,
    update_v: bool,
) -> Result<StepSizes<F>> {
    config.validate()?;
    let c = ctx.class_count();

    // X step: modulus from (V_k, Y_k).
    let moduli = lipschitz_moduli(ctx, state)?;
    let alpha = (config.gamma * moduli.x).recip();
    let gx = grad_x(ctx, state)?;
    check_finite(&gx, "grad_X")?;
    apply_prox_step(&mut state.x, &gx, alpha);

    // V steps: gradients at (X_{k+1}, V_k, Y_k); the blocks are mutually
    // independent given those, so each uses the pre-sweep V of its own class
    // only. D^T Y is class-independent and computed once.
    let mut nu = vec![F::zero(); c];
    if update_v {
        let moduli = lipschitz_moduli(ctx, state)?;
        let w_total = data_usage_correlation(ctx, &state.y);
        let mut updated = Vec::with_capacity(c);
        for a in 0..c {
            nu[a] = (config.gamma * moduli.v[a]).recip();
            let gv = grad_v_with(ctx, state, a, &w_total);
            check_finite(&gv, "grad_V")?;
            let mut block = state.v[a].clone();
            apply_prox_step(&mut block, &gv, nu[a]);
            updated.push(block);
        }
        state.v = updated;
    }

    // Y step: modulus from (X_{k+1}, V_{k+1}), gradient at Y_k.
    let moduli = lipschitz_moduli(ctx, state)?;
    let beta = (config.gamma * moduli.y).recip();
    let log_term = usage_log_row(state);
    let v_sum = alteration_sum(state);
    let gy_blocks: Vec<Array2<F>> = (0..c)
        .map(|a| grad_y_with(ctx, state, a, &log_term, &v_sum))
        .collect();
    for block in &gy_blocks {
        check_finite(block, "grad_Y")?;
    }
    for a in 0..c {
        let range = ctx.partition().range(a)?;
        let mut y_block = state.y.slice_mut(ndarray::s![range, ..]);
        ndarray::Zip::from(&mut y_block)
            .and(&gy_blocks[a])
            .for_each(|y, &g| *y = prox_lambda(*y - beta * g, beta));
    }

    Ok(StepSizes { alpha, nu, beta })
}

/// Stop test: converged when `k >= max_iterations`, or `k >= window` and the
/// average decrease over the last `window` iterations fell below
/// `min_avg_decrease`.
pub fn has_converged<F: Scalar>(trace: &PalmTrace<F>, config: &PalmConfig<F>) -> bool {
    let k = trace.iterations();
    if k >= config.max_iterations {
        return true;
    }
    if k >= config.window {
        let newest = trace.objectives[k];
        let oldest = trace.objectives[k - config.window];
        let avg = (oldest - newest) / F::from_count(config.window);
        return avg < config.min_avg_decrease;
    }
    false
}

/// Run sweeps until [`has_converged`], recording the composite objective per
/// iteration.
pub fn optimize<F: Scalar>(
    ctx: &ObjectiveContext<F>,
    state: &mut RelaxedState<F>,
    config: &PalmConfig<F>,
) -> Result<PalmTrace<F>> {
    optimize_impl(ctx, state, config, true)
}

/// [`optimize`] with alteration blocks pinned at zero.
pub fn optimize_frozen_v<F: Scalar>(
    ctx: &ObjectiveContext<F>,
    state: &mut RelaxedState<F>,
    config: &PalmConfig<F>,
) -> Result<PalmTrace<F>> {
    optimize_impl(ctx, state, config, false)
}

fn optimize_impl<F: Scalar>(
    ctx: &ObjectiveContext<F>,
    state: &mut RelaxedState<F>,
    config: &PalmConfig<F>,
    update_v: bool,
) -> Result<PalmTrace<F>> {
    config.validate()?;
    let mut trace = PalmTrace::default();
    let initial = composite_objective(ctx, state)?;
    if !initial.is_finite() {
        return Err(Error::NonFinite("initial objective"));
    }
    trace.objectives.push(initial);
    while !has_converged(&trace, config) {
        let steps = palm_sweep_impl(ctx, state, config, update_v)?;
        let value = composite_objective(ctx, state)?;
        if !value.is_finite() {
            return Err(Error::NonFinite("objective"));
        }
        trace.objectives.push(value);
        trace.steps.push(steps);
    }
    Ok(trace)
}

fn apply_prox_step<F: Scalar>(block: &mut Array2<F>, grad: &Array2<F>, step: F) {
    ndarray::Zip::from(block)
        .and(grad)
        .for_each(|x, &g| *x = prox_lambda(*x - step * g, step));
}

fn check_finite<F: Scalar>(m: &Array2<F>, what: &'static str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
