use super::checkpoint::{checkpointed_grad, Rollout, StateBundle, StateVars};
use super::{Seed, Tape, Var};
use crate::field::Field;

fn sample_field(dims: [usize; 3], seed: u64, lo: f64, hi: f64) -> Field {
    let mut s = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(0x2545f4914f6cdd1d);
    Field::from_fn(dims, |_, _, _| {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        let u = (s >> 11) as f64 / (1u64 << 53) as f64;
        lo + u * (hi - lo)
    })
}

/// Central-difference check of `build`'s gradient w.r.t. every input entry.
fn fd_check(
    fields: &[Field],
    scalars: &[f64],
    build: &dyn Fn(&Tape, &[Var], &[Var]) -> Var,
    tol: f64,
) -> Vec<usize> {
    let eval = |fields: &[Field], scalars: &[f64]| -> f64 {
        let tp = Tape::new();
        let fv: Vec<Var> = fields.iter().map(|f| tp.leaf_f(f.clone())).collect();
        let sv: Vec<Var> = scalars.iter().map(|&s| tp.leaf_s(s)).collect();
        let out = build(&tp, &fv, &sv);
        tp.value_s(out)
    };

    let tp = Tape::new();
    let fv: Vec<Var> = fields.iter().map(|f| tp.leaf_f(f.clone())).collect();
    let sv: Vec<Var> = scalars.iter().map(|&s| tp.leaf_s(s)).collect();
    let out = build(&tp, &fv, &sv);
    let kinds = kind_coverage(&tp);
    let grads = tp.backward(vec![(out, Seed::S(1.0))]);

    let h = 1e-6;
    for (fi, f) in fields.iter().enumerate() {
        let g = grads.field_or_zeros(fv[fi], f.dims);
        for e in 0..f.len() {
            let mut plus = fields.to_vec();
            plus[fi].data[e] += h;
            let mut minus = fields.to_vec();
            minus[fi].data[e] -= h;
            let fd = (eval(&plus, scalars) - eval(&minus, scalars)) / (2.0 * h);
            let got = g.data[e];
            let scale = fd.abs().max(got.abs()).max(1e-6);
            assert!(
                (fd - got).abs() / scale < tol,
                "field {fi} entry {e}: fd {fd} vs adjoint {got}"
            );
        }
    }
    for (si, _) in scalars.iter().enumerate() {
        let mut plus = scalars.to_vec();
        plus[si] += h;
        let mut minus = scalars.to_vec();
        minus[si] -= h;
        let fd = (eval(fields, &plus) - eval(fields, &minus)) / (2.0 * h);
        let got = grads.scalar(sv[si]);
        let scale = fd.abs().max(got.abs()).max(1e-6);
        assert!((fd - got).abs() / scale < tol, "scalar {si}: fd {fd} vs adjoint {got}");
    }
    kinds
}

fn kind_coverage(tp: &Tape) -> Vec<usize> {
    tp.nodes.borrow().iter().map(|n| n.op.kind_index()).collect()
}

#[test]
fn quadratic_oracle_gradient_is_exact() {
    let tp = Tape::new();
    let theta = sample_field([2, 3, 1], 7, -2.0, 2.0);
    let x = tp.leaf_f(theta.clone());
    let sq = tp.f_mul(x, x);
    let loss = tp.sum(sq);
    let grads = tp.backward(vec![(loss, Seed::S(1.0))]);
    let g = grads.field(x).unwrap();
    for (gv, tv) in g.data.iter().zip(theta.data.iter()) {
        assert_eq!(*gv, 2.0 * tv);
    }
}

#[test]
fn gradient_linearity() {
    let f = sample_field([3, 2, 2], 3, 0.5, 1.5);
    let grad_of = |a: f64, b: f64| -> Vec<f64> {
        let tp = Tape::new();
        let x = tp.leaf_f(f.clone());
        let sig = tp.f_sigmoid(x, 2.0);
        let l1 = tp.sum(sig);
        let sq = tp.f_mul(x, x);
        let l2 = tp.sum(sq);
        let l1s = tp.s_affine(l1, a, 0.0);
        let l2s = tp.s_affine(l2, b, 0.0);
        let total = tp.s_add(l1s, l2s);
        let g = tp.backward(vec![(total, Seed::S(1.0))]);
        g.field(x).unwrap().data.clone()
    };
    let ga = grad_of(1.0, 0.0);
    let gb = grad_of(0.0, 1.0);
    let gc = grad_of(2.5, -0.75);
    for i in 0..ga.len() {
        let expect = 2.5 * ga[i] - 0.75 * gb[i];
        assert!((gc[i] - expect).abs() <= 1e-10 * expect.abs().max(1.0));
    }
}

#[test]
fn gradients_are_bit_deterministic() {
    let run = || -> Vec<u64> {
        let tp = Tape::new();
        let x = tp.leaf_f(sample_field([4, 4, 3], 11, -1.0, 1.0));
        let d = tp.leaf_f(sample_field([4, 4, 3], 12, -0.4, 0.4));
        let adv = tp.f_upwind1(x, d, 2, 2.0);
        let moved = tp.f_sub(x, adv);
        let sq = tp.f_mul(moved, moved);
        let loss = tp.sum(sq);
        let g = tp.backward(vec![(loss, Seed::S(1.0))]);
        g.field(x).unwrap().data.iter().map(|v| v.to_bits()).collect()
    };
    assert_eq!(run(), run());
}

// ---- full adjoint audit -------------------------------------------------

/// Every op kind must appear in at least one finite-difference-verified
/// program; the assertion at the end fails when a new op is added without
/// audit coverage.
#[test]
fn audit_all_ops_have_verified_adjoints() {
    let mut covered = vec![false; super::Op::KIND_COUNT];
    let mut run = |fields: &[Field], scalars: &[f64], build: &dyn Fn(&Tape, &[Var], &[Var]) -> Var| {
        for k in fd_check(fields, scalars, build, 2e-5) {
            covered[k] = true;
        }
    };

    let f3 = sample_field([2, 3, 2], 1, 0.5, 2.0);
    let g3 = sample_field([2, 3, 2], 2, 0.5, 2.0);
    let sgn = sample_field([2, 3, 2], 3, -1.5, 1.5);

    // Scalar ops chained into one program.
    run(&[], &[0.8, -0.35], &|tp, _, s| {
        let a = tp.s_add(s[0], s[1]);
        let b = tp.s_sub(s[0], s[1]);
        let c = tp.s_mul(a, b);
        let d = tp.s_div(c, s[0]);
        let e = tp.s_neg(d);
        let f = tp.s_affine(e, 1.7, 0.2);
        let g = tp.s_sigmoid(f, 2.0);
        let h = tp.s_softplus(g, 3.0);
        let i = tp.s_exp(h);
        tp.s_ln(i)
    });

    // Field arithmetic.
    run(&[f3.clone(), g3.clone()], &[1.3], &|tp, f, s| {
        let a = tp.f_add(f[0], f[1]);
        let b = tp.f_sub(a, f[0]);
        let c = tp.f_mul(b, f[1]);
        let d = tp.f_div(c, f[0]);
        let e = tp.f_neg(d);
        let g = tp.f_affine(e, 0.6, 0.1);
        let h = tp.f_scale(g, s[0]);
        let i = tp.f_shift_scalar(h, s[0]);
        tp.sum(i)
    });

    // Field nonlinearities.
    run(&[sgn.clone()], &[], &|tp, f, _| {
        let a = tp.f_sigmoid(f[0], 2.5);
        let b = tp.f_softplus(f[0], 3.0);
        let c = tp.f_swish(f[0]);
        let d = tp.f_exp(a);
        let e = tp.f_sqrt_eps(b, 1e-3);
        let ab = tp.f_add(a, b);
        let cd = tp.f_add(c, d);
        let all = tp.f_add(ab, cd);
        let all = tp.f_add(all, e);
        tp.sum(all)
    });

    // Hard max against a constant (inputs kept away from the kink).
    run(&[f3.clone()], &[], &|tp, f, _| {
        let m = tp.f_max_const(f[0], 1.0);
        tp.sum(m)
    });

    // Smooth two-argument max and harmonic face average.
    run(&[f3.clone(), g3.clone()], &[], &|tp, f, _| {
        let m = tp.f_smax2(f[0], f[1], 3.0);
        let h = tp.f_harmonic(f[0], f[1]);
        let s = tp.f_add(m, h);
        tp.sum(s)
    });

    // Upwind increment in every axis (displacements away from zero).
    for axis in 0..3usize {
        let disp = sample_field([2, 3, 2], 40 + axis as u64, 0.2, 0.9);
        let dneg = disp.map(|v| -v);
        for d in [disp, dneg] {
            run(&[f3.clone(), d.clone()], &[], &|tp, f, _| {
                let inc = tp.f_upwind1(f[0], f[1], axis, 1.7);
                let moved = tp.f_sub(f[0], inc);
                let sq = tp.f_mul(moved, moved);
                tp.sum(sq)
            });
        }
    }

    // Shifts, mirror, roll, broadcast.
    for axis in 0..3usize {
        for dir in [-1isize, 1] {
            run(&[f3.clone()], &[], &|tp, f, _| {
                let a = tp.f_shift_rep(f[0], axis, dir);
                let b = tp.f_shift_zero(f[0], axis, dir);
                let c = tp.f_add(a, b);
                let w = tp.f_mul(c, f[0]);
                tp.sum(w)
            });
        }
    }
    run(&[sample_field([2, 2, 4], 5, -1.0, 1.0)], &[], &|tp, f, _| {
        let m = tp.f_mirror_z(f[0]);
        let r = tp.f_roll_z(m, 3);
        let w = tp.f_mul(r, f[0]);
        tp.sum(w)
    });
    run(&[sample_field([2, 3, 1], 6, -1.0, 1.0)], &[], &|tp, f, _| {
        let b = tp.f_broadcast_z(f[0], 4);
        let sq = tp.f_mul(b, b);
        tp.sum(sq)
    });

    // Morphology.
    run(&[sample_field([5, 5, 1], 8, 0.0, 1.0)], &[], &|tp, f, _| {
        let d = tp.f_dilate_lse(f[0], 4.0);
        let e = tp.f_erode_lse(d, 4.0);
        let sq = tp.f_mul(e, e);
        tp.sum(sq)
    });

    // Reductions.
    run(&[sgn.clone(), f3.clone()], &[], &|tp, f, _| {
        let d = tp.dot(f[0], f[1]);
        let w = tp.wlse(f[0], f[1], 2.0);
        let s = tp.s_add(d, w);
        let t = tp.sum(f[0]);
        tp.s_add(s, t)
    });

    // Matrix product and bias row.
    run(
        &[
            sample_field([3, 4, 1], 9, -1.0, 1.0),
            sample_field([4, 2, 1], 10, -1.0, 1.0),
            sample_field([1, 2, 1], 11, -0.5, 0.5),
        ],
        &[],
        &|tp, f, _| {
            let mm = tp.matmul(f[0], f[1]);
            let biased = tp.add_row(mm, f[2]);
            let sq = tp.f_mul(biased, biased);
            tp.sum(sq)
        },
    );

    let missing: Vec<usize> =
        (0..super::Op::KIND_COUNT).filter(|&k| !covered[k]).collect();
    assert!(missing.is_empty(), "op kinds without adjoint audit coverage: {missing:?}");
}

// ---- checkpointing ------------------------------------------------------

fn toy_rollout(seg_len: usize, n_steps: usize) -> Rollout<'static> {
    Rollout {
        n_steps,
        seg_len,
        params: vec![0.9, 1.7],
        step: Box::new(|tp, p, sv, _n| {
            // Nonlinear diffusion-flavored toy update with parameter coupling.
            let x = sv.fields[0];
            let left = tp.f_shift_rep(x, 0, -1);
            let right = tp.f_shift_rep(x, 0, 1);
            let lap0 = tp.f_add(left, right);
            let two_x = tp.f_affine(x, 2.0, 0.0);
            let lap = tp.f_sub(lap0, two_x);
            let lap_scaled = tp.f_affine(lap, 0.15, 0.0);
            let gated = tp.f_sigmoid(x, 1.2);
            let gate_term0 = tp.f_scale(gated, p[0]);
            let gate_term = tp.f_affine(gate_term0, 0.05, 0.0);
            let next0 = tp.f_add(x, lap_scaled);
            let next = tp.f_add(next0, gate_term);
            let acc = sv.scalars[0];
            let x_sum = tp.sum(x);
            let x_sum_scaled = tp.s_mul(x_sum, p[1]);
            let x_sum_small = tp.s_affine(x_sum_scaled, 0.01, 0.0);
            let acc_next = tp.s_add(acc, x_sum_small);
            StateVars { fields: vec![next], scalars: vec![acc_next] }
        }),
        loss: Box::new(|tp, p, sv| {
            let sq = tp.f_mul(sv.fields[0], sv.fields[0]);
            let l0 = tp.sum(sq);
            let l1 = tp.s_mul(sv.scalars[0], p[0]);
            tp.s_add(l0, l1)
        }),
    }
}

fn toy_init() -> StateBundle {
    StateBundle { fields: vec![sample_field([12, 1, 1], 21, -1.0, 1.0)], scalars: vec![0.0] }
}

#[test]
fn checkpointed_gradients_match_full_tape() {
    let init = toy_init();
    let n = 20;
    let full = checkpointed_grad(&toy_rollout(n, n), &init).unwrap();
    for k in [1usize, 3, 5, 7] {
        let seg = checkpointed_grad(&toy_rollout(k, n), &init).unwrap();
        assert!((seg.loss - full.loss).abs() <= 1e-12 * full.loss.abs());
        for (a, b) in seg.d_params.iter().zip(full.d_params.iter()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "K={k}: {a} vs {b}");
        }
        for (fa, fb) in seg.d_init.fields.iter().zip(full.d_init.fields.iter()) {
            for (a, b) in fa.data.iter().zip(fb.data.iter()) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }
}

#[test]
fn checkpointed_gradient_matches_finite_differences() {
    let init = toy_init();
    let r = toy_rollout(4, 15);
    let g = checkpointed_grad(&r, &init).unwrap();

    let h = 1e-6;
    for pi in 0..2 {
        let mut rp = toy_rollout(4, 15);
        rp.params[pi] += h;
        let mut rm = toy_rollout(4, 15);
        rm.params[pi] -= h;
        let lp = loss_of(&rp, &init);
        let lm = loss_of(&rm, &init);
        let fd = (lp - lm) / (2.0 * h);
        assert!(
            (fd - g.d_params[pi]).abs() / fd.abs().max(1.0) < 1e-6,
            "param {pi}: fd {fd} vs {g:?}",
            g = g.d_params[pi]
        );
    }
    // Spot-check a few initial-state entries.
    for e in [0usize, 5, 11] {
        let mut ip = init.clone();
        ip.fields[0].data[e] += h;
        let mut im = init.clone();
        im.fields[0].data[e] -= h;
        let r = toy_rollout(4, 15);
        let fd = (loss_of(&r, &ip) - loss_of(&r, &im)) / (2.0 * h);
        let got = g.d_init.fields[0].data[e];
        assert!((fd - got).abs() / fd.abs().max(1.0) < 1e-6, "init {e}: fd {fd} vs {got}");
    }
}

fn loss_of(r: &Rollout, init: &StateBundle) -> f64 {
    let final_state = super::checkpoint::rollout_forward(r, init).unwrap();
    let tp = Tape::new();
    let pvars: Vec<Var> = r.params.iter().map(|&p| tp.leaf_s(p)).collect();
    let sv = StateVars::inject(&tp, &final_state);
    let loss = (r.loss)(&tp, &pvars, &sv);
    tp.value_s(loss)
}

#[test]
fn zero_steps_returns_initial_state() {
    let init = toy_init();
    let r = toy_rollout(3, 0);
    let g = checkpointed_grad(&r, &init).unwrap();
    assert_eq!(g.final_state.fields[0].data, init.fields[0].data);
}

#[test]
fn invalid_segment_length_errors() {
    let init = toy_init();
    let r = toy_rollout(0, 5);
    assert!(checkpointed_grad(&r, &init).is_err());
}
