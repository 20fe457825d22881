//! Segmented backpropagation through time.
//!
//! The forward pass runs each step on a short-lived tape and keeps plain
//! state snapshots every `seg_len` steps. The reverse pass walks segments
//! from the last to the first, re-recording each segment forward from its
//! snapshot before accumulating adjoints, so peak retained memory is one
//! live segment plus the snapshot list. Gradients match a single full tape
//! because the identical operations replay in the identical order.

use super::{Grads, Seed, Tape, Var};
use crate::error::{CookError, Result};
use crate::field::Field;

/// Plain (untaped) state crossing segment boundaries.
#[derive(Debug, Clone, Default)]
pub struct StateBundle {
    pub fields: Vec<Field>,
    pub scalars: Vec<f64>,
}

impl StateBundle {
    pub fn all_finite(&self) -> bool {
        self.fields.iter().all(Field::all_finite) && self.scalars.iter().all(|s| s.is_finite())
    }
}

/// Taped counterpart of [`StateBundle`]; same ordering of entries.
#[derive(Debug, Clone)]
pub struct StateVars {
    pub fields: Vec<Var>,
    pub scalars: Vec<Var>,
}

impl StateVars {
    pub fn inject(tp: &Tape, bundle: &StateBundle) -> StateVars {
        StateVars {
            fields: bundle.fields.iter().map(|f| tp.leaf_f(f.clone())).collect(),
            scalars: bundle.scalars.iter().map(|&s| tp.leaf_s(s)).collect(),
        }
    }

    pub fn extract(&self, tp: &Tape) -> StateBundle {
        StateBundle {
            fields: self.fields.iter().map(|&v| tp.value_f(v).as_ref().clone()).collect(),
            scalars: self.scalars.iter().map(|&v| tp.value_s(v)).collect(),
        }
    }
}

/// A differentiable unrolled iteration with external scalar parameters.
///
/// `step` advances the taped state by one step; `loss` maps the final taped
/// state to a scalar. Both may read the per-segment parameter leaves, which
/// mirror `params` in order.
pub struct Rollout<'a> {
    pub n_steps: usize,
    /// Checkpoint segment length (`>= 1`); `>= n_steps` means full tape.
    pub seg_len: usize,
    pub params: Vec<f64>,
    #[allow(clippy::type_complexity)]
    pub step: Box<dyn Fn(&Tape, &[Var], &StateVars, usize) -> StateVars + 'a>,
    #[allow(clippy::type_complexity)]
    pub loss: Box<dyn Fn(&Tape, &[Var], &StateVars) -> Var + 'a>,
}

/// Result of a checkpointed loss-and-gradient evaluation.
pub struct RolloutGrad {
    pub loss: f64,
    pub final_state: StateBundle,
    /// Adjoint of the initial state (same layout as the input bundle).
    pub d_init: StateBundle,
    /// Adjoint of each external parameter.
    pub d_params: Vec<f64>,
}

/// Forward-only rollout (no snapshots kept beyond the live step).
pub fn rollout_forward(r: &Rollout, init: &StateBundle) -> Result<StateBundle> {
    let mut state = init.clone();
    for n in 0..r.n_steps {
        state = run_one_step(r, &state, n)?;
    }
    Ok(state)
}

fn run_one_step(r: &Rollout, state: &StateBundle, n: usize) -> Result<StateBundle> {
    let tp = Tape::new();
    let pvars: Vec<Var> = r.params.iter().map(|&p| tp.leaf_s(p)).collect();
    let svars = StateVars::inject(&tp, state);
    let next = (r.step)(&tp, &pvars, &svars, n);
    let out = next.extract(&tp);
    if !out.all_finite() {
        return Err(CookError::SolverDiverged { step: n, what: "state".into() });
    }
    Ok(out)
}

/// Loss and exact reverse-mode gradient of `r.loss` after `r.n_steps`
/// applications of `r.step`, using segment checkpointing.
pub fn checkpointed_grad(r: &Rollout, init: &StateBundle) -> Result<RolloutGrad> {
    if r.seg_len == 0 {
        return Err(CookError::InvalidConfig("checkpoint segment length must be >= 1".into()));
    }
    let k = r.seg_len;
    let n = r.n_steps;

    // Forward: detached stepping, snapshot at every segment boundary.
    let mut snapshots: Vec<StateBundle> = Vec::with_capacity(n / k + 2);
    let mut state = init.clone();
    for step in 0..n {
        if step % k == 0 {
            snapshots.push(state.clone());
        }
        state = run_one_step(r, &state, step)?;
    }
    let final_state = state;

    // Reverse: last segment carries the loss node.
    let n_segments = snapshots.len().max(if n == 0 { 0 } else { 1 });
    let mut d_params = vec![0.0; r.params.len()];
    let mut carried: Option<StateBundle> = None;
    let mut loss_value = 0.0;

    if n == 0 {
        // Degenerate rollout: loss of the initial state.
        let tp = Tape::new();
        let pvars: Vec<Var> = r.params.iter().map(|&p| tp.leaf_s(p)).collect();
        let svars = StateVars::inject(&tp, init);
        let loss = (r.loss)(&tp, &pvars, &svars);
        loss_value = tp.value_s(loss);
        let grads = tp.backward(vec![(loss, Seed::S(1.0))]);
        let d_init = collect_state_adjoint(&grads, &svars, init);
        for (slot, &pv) in d_params.iter_mut().zip(pvars.iter()) {
            *slot += grads.scalar(pv);
        }
        return Ok(RolloutGrad { loss: loss_value, final_state: init.clone(), d_init, d_params });
    }

    for seg in (0..n_segments).rev() {
        let seg_start = seg * k;
        let seg_end = ((seg + 1) * k).min(n);

        let tp = Tape::new();
        let pvars: Vec<Var> = r.params.iter().map(|&p| tp.leaf_s(p)).collect();
        let entry_vars = StateVars::inject(&tp, &snapshots[seg]);
        let mut sv = entry_vars.clone();
        for step in seg_start..seg_end {
            sv = (r.step)(&tp, &pvars, &sv, step);
        }

        let mut seeds: Vec<(Var, Seed)> = Vec::new();
        if seg == n_segments - 1 {
            let loss = (r.loss)(&tp, &pvars, &sv);
            loss_value = tp.value_s(loss);
            seeds.push((loss, Seed::S(1.0)));
        }
        if let Some(c) = carried.take() {
            for (var, f) in sv.fields.iter().zip(c.fields) {
                seeds.push((*var, Seed::F(f)));
            }
            for (var, s) in sv.scalars.iter().zip(c.scalars) {
                seeds.push((*var, Seed::S(s)));
            }
        }

        let grads = tp.backward(seeds);
        for (slot, &pv) in d_params.iter_mut().zip(pvars.iter()) {
            *slot += grads.scalar(pv);
        }
        let entry_adj = collect_state_adjoint(&grads, &entry_vars, &snapshots[seg]);
        if !entry_adj.all_finite() {
            return Err(CookError::NonFiniteAdjoint { step: seg_start });
        }
        carried = Some(entry_adj);
    }

    let d_init = carried.unwrap();
    if d_params.iter().any(|p| !p.is_finite()) {
        return Err(CookError::NonFiniteAdjoint { step: 0 });
    }

    Ok(RolloutGrad { loss: loss_value, final_state, d_init, d_params })
}

fn collect_state_adjoint(grads: &Grads, vars: &StateVars, shape_of: &StateBundle) -> StateBundle {
    StateBundle {
        fields: vars
            .fields
            .iter()
            .zip(shape_of.fields.iter())
            .map(|(&v, f)| grads.field_or_zeros(v, f.dims))
            .collect(),
        scalars: vars.scalars.iter().map(|&v| grads.scalar(v)).collect(),
    }
}
