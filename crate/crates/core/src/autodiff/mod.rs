//! Field-level reverse-mode automatic differentiation.
//!
//! Programs are recorded on a [`Tape`] as operations over two value kinds:
//! scalars and dense [`Field`]s. Calling [`Tape::backward`] consumes the
//! tape and accumulates exact adjoints in reverse recording order, so two
//! identical programs produce bit-identical gradients. Rollout-scale memory
//! is bounded by the segment checkpointing in [`checkpoint`].

mod backward;
pub mod checkpoint;

pub use backward::{AdjVal, Grads};
pub use checkpoint::{checkpointed_grad, Rollout, StateBundle, StateVars};

use crate::field::Field;
use crate::smooth;
use std::cell::RefCell;
use std::rc::Rc;

/// Initial adjoint injected into [`Tape::backward`].
#[derive(Debug, Clone)]
pub enum Seed {
    S(f64),
    F(Field),
}

/// Handle to a recorded value. Cheap to copy; only meaningful together
/// with the tape that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

#[derive(Debug, Clone)]
pub enum Value {
    S(f64),
    F(Rc<Field>),
}

impl Value {
    pub fn as_scalar(&self) -> f64 {
        match self {
            Value::S(v) => *v,
            Value::F(_) => panic!("expected scalar value"),
        }
    }
    pub fn as_field(&self) -> Rc<Field> {
        match self {
            Value::F(f) => Rc::clone(f),
            Value::S(_) => panic!("expected field value"),
        }
    }
}

/// Operation record. Constants baked into a variant are not differentiated;
/// every `Var` argument is.
#[derive(Debug, Clone)]
pub(crate) enum Op {
    SLeaf,
    SAdd(Var, Var),
    SSub(Var, Var),
    SMul(Var, Var),
    SDiv(Var, Var),
    SNeg(Var),
    SAffine(Var, f64, f64),
    SSigmoid(Var, f64),
    SSoftplus(Var, f64),
    SExp(Var),
    SLn(Var),

    FLeaf,
    FAdd(Var, Var),
    FSub(Var, Var),
    FMul(Var, Var),
    FDiv(Var, Var),
    FNeg(Var),
    FAffine(Var, f64, f64),
    FScale(Var, Var),
    FShiftScalar(Var, Var),
    FSigmoid(Var, f64),
    FSoftplus(Var, f64),
    FSwish(Var),
    FExp(Var),
    FSqrtEps(Var, f64),
    FMaxConst(Var, f64),
    FSmax2(Var, Var, f64),
    FHarmonic(Var, Var),
    FUpwind1 { field: Var, disp: Var, axis: usize, inv_delta: f64 },
    FShiftRep(Var, usize, isize),
    FShiftZero(Var, usize, isize),
    FMirrorZ(Var),
    FRollZ(Var, usize),
    FBroadcastZ(Var, usize),
    FDilateLse(Var, f64),

    RSum(Var),
    RDot(Var, Var),
    RWLse(Var, Var, f64),
    MatMul(Var, Var),
    AddRow(Var, Var),
}

impl Op {
    /// Stable index of the op kind, used by the adjoint-coverage audit.
    pub(crate) fn kind_index(&self) -> usize {
        use Op::*;
        match self {
            SLeaf => 0,
            SAdd(..) => 1,
            SSub(..) => 2,
            SMul(..) => 3,
            SDiv(..) => 4,
            SNeg(..) => 5,
            SAffine(..) => 6,
            SSigmoid(..) => 7,
            SSoftplus(..) => 8,
            SExp(..) => 9,
            SLn(..) => 10,
            FLeaf => 11,
            FAdd(..) => 12,
            FSub(..) => 13,
            FMul(..) => 14,
            FDiv(..) => 15,
            FNeg(..) => 16,
            FAffine(..) => 17,
            FScale(..) => 18,
            FShiftScalar(..) => 19,
            FSigmoid(..) => 20,
            FSoftplus(..) => 21,
            FSwish(..) => 22,
            FExp(..) => 23,
            FSqrtEps(..) => 24,
            FMaxConst(..) => 25,
            FSmax2(..) => 26,
            FHarmonic(..) => 27,
            FUpwind1 { .. } => 28,
            FShiftRep(..) => 29,
            FShiftZero(..) => 30,
            FMirrorZ(..) => 31,
            FRollZ(..) => 32,
            FBroadcastZ(..) => 33,
            FDilateLse(..) => 34,
            RSum(..) => 35,
            RDot(..) => 36,
            RWLse(..) => 37,
            MatMul(..) => 38,
            AddRow(..) => 39,
        }
    }

    pub(crate) const KIND_COUNT: usize = 40;
}

pub(crate) struct Node {
    pub op: Op,
    pub val: Value,
}

/// Recording tape. Interior-mutable so op builders take `&self`.
pub struct Tape {
    pub(crate) nodes: RefCell<Vec<Node>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: RefCell::new(Vec::new()) }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    fn push(&self, op: Op, val: Value) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { op, val });
        Var(nodes.len() - 1)
    }

    pub fn value_s(&self, v: Var) -> f64 {
        self.nodes.borrow()[v.0].val.as_scalar()
    }

    pub fn value_f(&self, v: Var) -> Rc<Field> {
        self.nodes.borrow()[v.0].val.as_field()
    }

    // ---- leaves ------------------------------------------------------

    pub fn leaf_s(&self, v: f64) -> Var {
        self.push(Op::SLeaf, Value::S(v))
    }

    pub fn leaf_f(&self, f: Field) -> Var {
        self.push(Op::FLeaf, Value::F(Rc::new(f)))
    }

    pub fn leaf_f_shared(&self, f: Rc<Field>) -> Var {
        self.push(Op::FLeaf, Value::F(f))
    }

    // ---- scalar ops --------------------------------------------------

    pub fn s_add(&self, a: Var, b: Var) -> Var {
        let v = self.value_s(a) + self.value_s(b);
        self.push(Op::SAdd(a, b), Value::S(v))
    }

    pub fn s_sub(&self, a: Var, b: Var) -> Var {
        let v = self.value_s(a) - self.value_s(b);
        self.push(Op::SSub(a, b), Value::S(v))
    }

    pub fn s_mul(&self, a: Var, b: Var) -> Var {
        let v = self.value_s(a) * self.value_s(b);
        self.push(Op::SMul(a, b), Value::S(v))
    }

    pub fn s_div(&self, a: Var, b: Var) -> Var {
        let v = self.value_s(a) / self.value_s(b);
        self.push(Op::SDiv(a, b), Value::S(v))
    }

    pub fn s_neg(&self, a: Var) -> Var {
        let v = -self.value_s(a);
        self.push(Op::SNeg(a), Value::S(v))
    }

    /// `m * a + c` with constant coefficients.
    pub fn s_affine(&self, a: Var, m: f64, c: f64) -> Var {
        let v = m * self.value_s(a) + c;
        self.push(Op::SAffine(a, m, c), Value::S(v))
    }

    /// `sigmoid(beta * a)`, output clamped to the open unit interval so
    /// bounded parameter maps stay strictly interior in f64.
    pub fn s_sigmoid(&self, a: Var, beta: f64) -> Var {
        let v = smooth::sigmoid(beta * self.value_s(a)).clamp(1e-12, 1.0 - 1e-12);
        self.push(Op::SSigmoid(a, beta), Value::S(v))
    }

    pub fn s_softplus(&self, a: Var, alpha: f64) -> Var {
        let v = smooth::softplus_alpha(self.value_s(a), alpha);
        self.push(Op::SSoftplus(a, alpha), Value::S(v))
    }

    pub fn s_exp(&self, a: Var) -> Var {
        let v = self.value_s(a).exp();
        self.push(Op::SExp(a), Value::S(v))
    }

    pub fn s_ln(&self, a: Var) -> Var {
        let v = self.value_s(a).ln();
        self.push(Op::SLn(a), Value::S(v))
    }

    // ---- field elementwise ops ----------------------------------------

    fn zip(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Field {
        let fa = self.value_f(a);
        let fb = self.value_f(b);
        assert_eq!(fa.dims, fb.dims, "field dims mismatch");
        let data = fa.data.iter().zip(fb.data.iter()).map(|(&x, &y)| f(x, y)).collect();
        Field { dims: fa.dims, data }
    }

    pub fn f_add(&self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |x, y| x + y);
        self.push(Op::FAdd(a, b), Value::F(Rc::new(v)))
    }

    pub fn f_sub(&self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |x, y| x - y);
        self.push(Op::FSub(a, b), Value::F(Rc::new(v)))
    }

    pub fn f_mul(&self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |x, y| x * y);
        self.push(Op::FMul(a, b), Value::F(Rc::new(v)))
    }

    pub fn f_div(&self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |x, y| x / y);
        self.push(Op::FDiv(a, b), Value::F(Rc::new(v)))
    }

    pub fn f_neg(&self, a: Var) -> Var {
        let v = self.value_f(a).map(|x| -x);
        self.push(Op::FNeg(a), Value::F(Rc::new(v)))
    }

    /// `m * a + c` elementwise with constant coefficients.
    pub fn f_affine(&self, a: Var, m: f64, c: f64) -> Var {
        let v = self.value_f(a).map(|x| m * x + c);
        self.push(Op::FAffine(a, m, c), Value::F(Rc::new(v)))
    }

    /// Field times scalar variable.
    pub fn f_scale(&self, a: Var, s: Var) -> Var {
        let sv = self.value_s(s);
        let v = self.value_f(a).map(|x| x * sv);
        self.push(Op::FScale(a, s), Value::F(Rc::new(v)))
    }

    /// Field plus scalar variable (broadcast).
    pub fn f_shift_scalar(&self, a: Var, s: Var) -> Var {
        let sv = self.value_s(s);
        let v = self.value_f(a).map(|x| x + sv);
        self.push(Op::FShiftScalar(a, s), Value::F(Rc::new(v)))
    }

    pub fn f_sigmoid(&self, a: Var, beta: f64) -> Var {
        let v = self.value_f(a).map(|x| smooth::sigmoid(beta * x));
        self.push(Op::FSigmoid(a, beta), Value::F(Rc::new(v)))
    }

    pub fn f_softplus(&self, a: Var, alpha: f64) -> Var {
        let v = self.value_f(a).map(|x| smooth::softplus_alpha(x, alpha));
        self.push(Op::FSoftplus(a, alpha), Value::F(Rc::new(v)))
    }

    pub fn f_swish(&self, a: Var) -> Var {
        let v = self.value_f(a).map(smooth::swish);
        self.push(Op::FSwish(a), Value::F(Rc::new(v)))
    }

    pub fn f_exp(&self, a: Var) -> Var {
        let v = self.value_f(a).map(f64::exp);
        self.push(Op::FExp(a), Value::F(Rc::new(v)))
    }

    /// `sqrt(a + eps)` elementwise; `eps > 0` keeps the derivative finite.
    pub fn f_sqrt_eps(&self, a: Var, eps: f64) -> Var {
        let v = self.value_f(a).map(|x| (x + eps).sqrt());
        self.push(Op::FSqrtEps(a, eps), Value::F(Rc::new(v)))
    }

    /// Hard elementwise `max(a, c)`; subgradient passes only where `a > c`.
    pub fn f_max_const(&self, a: Var, c: f64) -> Var {
        let v = self.value_f(a).map(|x| x.max(c));
        self.push(Op::FMaxConst(a, c), Value::F(Rc::new(v)))
    }

    /// Two-argument LSE soft maximum with sharpness `beta`.
    pub fn f_smax2(&self, a: Var, b: Var, beta: f64) -> Var {
        let v = self.zip(a, b, |x, y| smooth::smooth_max2(x, y, beta));
        self.push(Op::FSmax2(a, b, beta), Value::F(Rc::new(v)))
    }

    /// Harmonic mean `2ab/(a+b)` elementwise (flux-consistent face average).
    pub fn f_harmonic(&self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |x, y| 2.0 * x * y / (x + y).max(1e-300));
        self.push(Op::FHarmonic(a, b), Value::F(Rc::new(v)))
    }

    /// First-order upwind convective increment along `axis`:
    /// `d+ * (f - f[-1]) * inv_delta + d- * (f[+1] - f) * inv_delta`
    /// with replicated (one-sided) boundary values. Subtract the result,
    /// i.e. `f_next = f - upwind1(f, d)` advects `f` by displacement `d`.
    pub fn f_upwind1(&self, field: Var, disp: Var, axis: usize, inv_delta: f64) -> Var {
        let f = self.value_f(field);
        let d = self.value_f(disp);
        assert_eq!(f.dims, d.dims);
        let out = upwind1_forward(&f, &d, axis, inv_delta);
        self.push(Op::FUpwind1 { field, disp, axis, inv_delta }, Value::F(Rc::new(out)))
    }

    /// Neighbor gather `out[i] = a[i + dir]` along `axis`, replicating the
    /// boundary value outside the domain.
    pub fn f_shift_rep(&self, a: Var, axis: usize, dir: isize) -> Var {
        let f = self.value_f(a);
        let out = shift_forward(&f, axis, dir, ShiftFill::Replicate);
        self.push(Op::FShiftRep(a, axis, dir), Value::F(Rc::new(out)))
    }

    /// Neighbor gather `out[i] = a[i + dir]` along `axis`, zero outside.
    pub fn f_shift_zero(&self, a: Var, axis: usize, dir: isize) -> Var {
        let f = self.value_f(a);
        let out = shift_forward(&f, axis, dir, ShiftFill::Zero);
        self.push(Op::FShiftZero(a, axis, dir), Value::F(Rc::new(out)))
    }

    /// Mirror the field in the z axis (`k -> nz-1-k`).
    pub fn f_mirror_z(&self, a: Var) -> Var {
        let f = self.value_f(a);
        let out = mirror_z(&f);
        self.push(Op::FMirrorZ(a), Value::F(Rc::new(out)))
    }

    /// Circular roll downward in z: `out[k] = a[(k + shift) mod nz]`.
    pub fn f_roll_z(&self, a: Var, shift: usize) -> Var {
        let f = self.value_f(a);
        let out = roll_z(&f, shift);
        self.push(Op::FRollZ(a, shift), Value::F(Rc::new(out)))
    }

    /// Broadcast a 2D `[nx, ny, 1]` field to `[nx, ny, nz]`.
    pub fn f_broadcast_z(&self, a: Var, nz: usize) -> Var {
        let f = self.value_f(a);
        assert_eq!(f.dims[2], 1, "broadcast_z expects a 2D field");
        let mut out = Field::zeros([f.dims[0], f.dims[1], nz]);
        for c in 0..f.data.len() {
            let base = c * nz;
            out.data[base..base + nz].fill(f.data[c]);
        }
        self.push(Op::FBroadcastZ(a, nz), Value::F(Rc::new(out)))
    }

    /// LSE soft dilation over a 5x5 window of a 2D field; soft erosion is
    /// `-dilate(-a)`.
    pub fn f_dilate_lse(&self, a: Var, beta: f64) -> Var {
        let f = self.value_f(a);
        assert_eq!(f.dims[2], 1, "dilate expects a 2D field");
        let out = dilate_lse_forward(&f, beta);
        self.push(Op::FDilateLse(a, beta), Value::F(Rc::new(out)))
    }

    // ---- reductions and linear algebra ---------------------------------

    pub fn sum(&self, a: Var) -> Var {
        let v = self.value_f(a).data.iter().sum();
        self.push(Op::RSum(a), Value::S(v))
    }

    pub fn dot(&self, a: Var, b: Var) -> Var {
        let fa = self.value_f(a);
        let fb = self.value_f(b);
        assert_eq!(fa.dims, fb.dims);
        let v = fa.data.iter().zip(fb.data.iter()).map(|(&x, &y)| x * y).sum();
        self.push(Op::RDot(a, b), Value::S(v))
    }

    /// Weight-normalized LSE soft maximum over a field (see
    /// [`smooth::smooth_max`]). The caller guarantees a nonempty mask.
    pub fn wlse(&self, values: Var, weights: Var, beta: f64) -> Var {
        let v = self.value_f(values);
        let w = self.value_f(weights);
        let out = smooth::smooth_max(&v.data, &w.data, beta)
            .expect("wlse requires a nonempty mask");
        self.push(Op::RWLse(values, weights, beta), Value::S(out))
    }

    /// Row-major matrix product `[n,k] x [k,m] -> [n,m]`.
    pub fn matmul(&self, a: Var, b: Var) -> Var {
        let fa = self.value_f(a);
        let fb = self.value_f(b);
        assert_eq!(fa.dims[2], 1);
        assert_eq!(fb.dims[2], 1);
        let (n, ka) = (fa.dims[0], fa.dims[1]);
        let (kb, m) = (fb.dims[0], fb.dims[1]);
        assert_eq!(ka, kb, "matmul inner dims mismatch");
        let out = matmul_forward(&fa, &fb, n, ka, m);
        self.push(Op::MatMul(a, b), Value::F(Rc::new(out)))
    }

    /// Broadcast-add a `[1,m]` row to every row of `[n,m]`.
    pub fn add_row(&self, a: Var, row: Var) -> Var {
        let fa = self.value_f(a);
        let fr = self.value_f(row);
        assert_eq!(fr.dims[0], 1);
        assert_eq!(fr.dims[1], fa.dims[1]);
        let m = fa.dims[1];
        let mut out = fa.as_ref().clone();
        for r in 0..fa.dims[0] {
            for c in 0..m {
                out.data[r * m + c] += fr.data[c];
            }
        }
        self.push(Op::AddRow(a, row), Value::F(Rc::new(out)))
    }

    // ---- composite helpers ---------------------------------------------

    /// Weighted mean `dot(v, w) / sum(w)`.
    pub fn wmean(&self, values: Var, weights: Var) -> Var {
        let num = self.dot(values, weights);
        let den = self.sum(weights);
        self.s_div(num, den)
    }

    /// Mean of a field.
    pub fn mean(&self, a: Var) -> Var {
        let n = self.value_f(a).len() as f64;
        let s = self.sum(a);
        self.s_affine(s, 1.0 / n, 0.0)
    }

    /// Field minus scalar variable.
    pub fn f_sub_scalar(&self, a: Var, s: Var) -> Var {
        let ns = self.s_neg(s);
        self.f_shift_scalar(a, ns)
    }

    /// LSE soft erosion (dual of [`Tape::f_dilate_lse`]).
    pub fn f_erode_lse(&self, a: Var, beta: f64) -> Var {
        let n = self.f_neg(a);
        let d = self.f_dilate_lse(n, beta);
        self.f_neg(d)
    }

    /// Smooth absolute value of a field: `softplus_a(x) + softplus_a(-x)`.
    pub fn f_smooth_abs(&self, a: Var, alpha: f64) -> Var {
        let p = self.f_softplus(a, alpha);
        let na = self.f_neg(a);
        let np = self.f_softplus(na, alpha);
        self.f_add(p, np)
    }

    /// Overflow-safe Log-Sum-Exp of scalar variables:
    /// `(1/beta) ln sum_i exp(beta x_i)`.
    pub fn s_lse(&self, xs: &[Var], beta: f64) -> Var {
        assert!(!xs.is_empty());
        // Hard-max shift; treating it as a constant is exact for gradients.
        let m = xs.iter().map(|&x| self.value_s(x)).fold(f64::NEG_INFINITY, f64::max);
        let mut acc: Option<Var> = None;
        for &x in xs {
            let shifted = self.s_affine(x, beta, -beta * m);
            let e = self.s_exp(shifted);
            acc = Some(match acc {
                None => e,
                Some(a) => self.s_add(a, e),
            });
        }
        let ln = self.s_ln(acc.unwrap());
        self.s_affine(ln, 1.0 / beta, m)
    }
}

// ---- shared forward kernels (also used by the backward pass) -----------

#[derive(Clone, Copy, PartialEq)]
pub(crate) enum ShiftFill {
    Replicate,
    Zero,
}

/// Iterate lines along `axis`, calling `f(base, stride, len)`.
pub(crate) fn for_each_line(dims: [usize; 3], axis: usize, mut f: impl FnMut(usize, usize, usize)) {
    let [d0, d1, d2] = dims;
    match axis {
        0 => {
            let stride = d1 * d2;
            for j in 0..d1 {
                for k in 0..d2 {
                    f(j * d2 + k, stride, d0);
                }
            }
        }
        1 => {
            for i in 0..d0 {
                for k in 0..d2 {
                    f(i * d1 * d2 + k, d2, d1);
                }
            }
        }
        _ => {
            for i in 0..d0 {
                for j in 0..d1 {
                    f((i * d1 + j) * d2, 1, d2);
                }
            }
        }
    }
}

pub(crate) fn shift_forward(f: &Field, axis: usize, dir: isize, fill: ShiftFill) -> Field {
    let mut out = Field::zeros(f.dims);
    for_each_line(f.dims, axis, |base, stride, len| {
        for i in 0..len {
            let src = i as isize + dir;
            let v = if src < 0 || src >= len as isize {
                match fill {
                    ShiftFill::Replicate => f.data[base + src.clamp(0, len as isize - 1) as usize * stride],
                    ShiftFill::Zero => 0.0,
                }
            } else {
                f.data[base + src as usize * stride]
            };
            out.data[base + i * stride] = v;
        }
    });
    out
}

pub(crate) fn upwind1_forward(f: &Field, d: &Field, axis: usize, inv_delta: f64) -> Field {
    let mut out = Field::zeros(f.dims);
    for_each_line(f.dims, axis, |base, stride, len| {
        for i in 0..len {
            let idx = base + i * stride;
            let dv = d.data[idx];
            let fc = f.data[idx];
            let fm = if i > 0 { f.data[idx - stride] } else { fc };
            let fp = if i + 1 < len { f.data[idx + stride] } else { fc };
            let dpos = dv.max(0.0);
            let dneg = dv.min(0.0);
            out.data[idx] = (dpos * (fc - fm) + dneg * (fp - fc)) * inv_delta;
        }
    });
    out
}

pub(crate) fn mirror_z(f: &Field) -> Field {
    let nz = f.dims[2];
    let mut out = Field::zeros(f.dims);
    for c in 0..f.dims[0] * f.dims[1] {
        let base = c * nz;
        for k in 0..nz {
            out.data[base + k] = f.data[base + (nz - 1 - k)];
        }
    }
    out
}

pub(crate) fn roll_z(f: &Field, shift: usize) -> Field {
    let nz = f.dims[2];
    let s = shift % nz.max(1);
    let mut out = Field::zeros(f.dims);
    for c in 0..f.dims[0] * f.dims[1] {
        let base = c * nz;
        for k in 0..nz {
            out.data[base + k] = f.data[base + (k + s) % nz];
        }
    }
    out
}

pub(crate) fn matmul_forward(a: &Field, b: &Field, n: usize, k: usize, m: usize) -> Field {
    let mut out = Field::zeros([n, m, 1]);
    for i in 0..n {
        for p in 0..k {
            let av = a.data[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b.data[p * m..(p + 1) * m];
            let orow = &mut out.data[i * m..(i + 1) * m];
            for c in 0..m {
                orow[c] += av * brow[c];
            }
        }
    }
    out
}

pub(crate) const MORPH_RADIUS: isize = 2;

pub(crate) fn dilate_lse_forward(f: &Field, beta: f64) -> Field {
    let (n, m) = (f.dims[0], f.dims[1]);
    let mut out = Field::zeros(f.dims);
    for i in 0..n as isize {
        for j in 0..m as isize {
            let mut wmax = f64::NEG_INFINITY;
            let mut count = 0usize;
            for di in -MORPH_RADIUS..=MORPH_RADIUS {
                for dj in -MORPH_RADIUS..=MORPH_RADIUS {
                    let (ii, jj) = (i + di, j + dj);
                    if ii >= 0 && ii < n as isize && jj >= 0 && jj < m as isize {
                        wmax = wmax.max(f.data[(ii as usize) * m + jj as usize]);
                        count += 1;
                    }
                }
            }
            let mut acc = 0.0;
            for di in -MORPH_RADIUS..=MORPH_RADIUS {
                for dj in -MORPH_RADIUS..=MORPH_RADIUS {
                    let (ii, jj) = (i + di, j + dj);
                    if ii >= 0 && ii < n as isize && jj >= 0 && jj < m as isize {
                        acc += (beta * (f.data[(ii as usize) * m + jj as usize] - wmax)).exp();
                    }
                }
            }
            out.data[(i as usize) * m + j as usize] = wmax + (acc / count as f64).ln() / beta;
        }
    }
    out
}

#[cfg(test)]
mod tests;
