//! Reverse pass over a recorded tape.

use super::{for_each_line, mirror_z, roll_z, Op, Seed, Tape, Value, Var, MORPH_RADIUS};
use crate::field::Field;
use crate::smooth;

/// Accumulated adjoint of one node.
#[derive(Debug, Clone)]
pub enum AdjVal {
    S(f64),
    F(Field),
}

/// Adjoints produced by [`Tape::backward`], indexed by the originating
/// [`Var`]s. Nodes the seeds do not reach have no adjoint.
pub struct Grads {
    adj: Vec<Option<AdjVal>>,
}

impl Grads {
    /// Scalar adjoint (zero when unreached).
    pub fn scalar(&self, v: Var) -> f64 {
        match self.adj.get(v.0) {
            Some(Some(AdjVal::S(s))) => *s,
            _ => 0.0,
        }
    }

    /// Field adjoint, if the seed reached this node.
    pub fn field(&self, v: Var) -> Option<&Field> {
        match self.adj.get(v.0) {
            Some(Some(AdjVal::F(f))) => Some(f),
            _ => None,
        }
    }

    /// Field adjoint or zeros of the given dims.
    pub fn field_or_zeros(&self, v: Var, dims: [usize; 3]) -> Field {
        self.field(v).cloned().unwrap_or_else(|| Field::zeros(dims))
    }

    pub fn take_field(&mut self, v: Var) -> Option<Field> {
        match self.adj.get_mut(v.0).and_then(Option::take) {
            Some(AdjVal::F(f)) => Some(f),
            _ => None,
        }
    }
}

fn acc_s(adj: &mut [Option<AdjVal>], v: Var, delta: f64) {
    match &mut adj[v.0] {
        Some(AdjVal::S(s)) => *s += delta,
        slot @ None => *slot = Some(AdjVal::S(delta)),
        _ => panic!("adjoint kind mismatch (expected scalar)"),
    }
}

fn acc_f(adj: &mut [Option<AdjVal>], v: Var, delta: Field) {
    match &mut adj[v.0] {
        Some(AdjVal::F(f)) => {
            debug_assert_eq!(f.dims, delta.dims);
            for (a, d) in f.data.iter_mut().zip(delta.data.iter()) {
                *a += d;
            }
        }
        slot @ None => *slot = Some(AdjVal::F(delta)),
        _ => panic!("adjoint kind mismatch (expected field)"),
    }
}

impl Tape {
    /// Run the reverse pass, consuming the tape. `seeds` initialize the
    /// adjoints of the listed nodes (typically the loss with seed 1.0).
    /// Node adjoints are accumulated in strict reverse recording order, so
    /// gradients are bit-reproducible.
    pub fn backward(self, seeds: Vec<(Var, Seed)>) -> Grads {
        let mut nodes = self.nodes.into_inner();
        let n = nodes.len();
        let mut adj: Vec<Option<AdjVal>> = Vec::with_capacity(n);
        adj.resize_with(n, || None);

        for (var, seed) in seeds {
            match seed {
                Seed::S(s) => acc_s(&mut adj, var, s),
                Seed::F(f) => acc_f(&mut adj, var, f),
            }
        }

        for i in (0..n).rev() {
            let Some(gbar) = adj[i].take() else {
                // Unreached node; release its value early anyway.
                nodes[i].val = Value::S(0.0);
                continue;
            };
            let op = nodes[i].op.clone();
            let out_val = nodes[i].val.clone();
            // Keep leaf adjoints; everything else is consumed here.
            let is_leaf = matches!(op, Op::SLeaf | Op::FLeaf);
            if is_leaf {
                adj[i] = Some(gbar);
                continue;
            }

            let val_s = |v: Var| nodes[v.0].val.as_scalar();
            let val_f = |v: Var| nodes[v.0].val.as_field();

            match op {
                Op::SLeaf | Op::FLeaf => unreachable!(),

                // ---- scalar ops ----
                Op::SAdd(a, b) => {
                    let g = as_s(&gbar);
                    acc_s(&mut adj, a, g);
                    acc_s(&mut adj, b, g);
                }
                Op::SSub(a, b) => {
                    let g = as_s(&gbar);
                    acc_s(&mut adj, a, g);
                    acc_s(&mut adj, b, -g);
                }
                Op::SMul(a, b) => {
                    let g = as_s(&gbar);
                    let (va, vb) = (val_s(a), val_s(b));
                    acc_s(&mut adj, a, g * vb);
                    acc_s(&mut adj, b, g * va);
                }
                Op::SDiv(a, b) => {
                    let g = as_s(&gbar);
                    let vb = val_s(b);
                    let out = out_val.as_scalar();
                    acc_s(&mut adj, a, g / vb);
                    acc_s(&mut adj, b, -g * out / vb);
                }
                Op::SNeg(a) => acc_s(&mut adj, a, -as_s(&gbar)),
                Op::SAffine(a, m, _) => acc_s(&mut adj, a, m * as_s(&gbar)),
                Op::SSigmoid(a, beta) => {
                    let s = out_val.as_scalar();
                    acc_s(&mut adj, a, as_s(&gbar) * beta * s * (1.0 - s));
                }
                Op::SSoftplus(a, alpha) => {
                    let d = smooth::sigmoid(alpha * val_s(a));
                    acc_s(&mut adj, a, as_s(&gbar) * d);
                }
                Op::SExp(a) => acc_s(&mut adj, a, as_s(&gbar) * out_val.as_scalar()),
                Op::SLn(a) => acc_s(&mut adj, a, as_s(&gbar) / val_s(a)),

                // ---- field elementwise ----
                Op::FAdd(a, b) => {
                    let g = as_f(&gbar);
                    acc_f(&mut adj, a, g.clone());
                    acc_f(&mut adj, b, g.clone());
                }
                Op::FSub(a, b) => {
                    let g = as_f(&gbar);
                    acc_f(&mut adj, a, g.clone());
                    acc_f(&mut adj, b, g.map(|x| -x));
                }
                Op::FMul(a, b) => {
                    let g = as_f(&gbar);
                    let (va, vb) = (val_f(a), val_f(b));
                    acc_f(&mut adj, a, zip_new(g, &vb, |g, y| g * y));
                    acc_f(&mut adj, b, zip_new(g, &va, |g, x| g * x));
                }
                Op::FDiv(a, b) => {
                    let g = as_f(&gbar);
                    let vb = val_f(b);
                    let out = out_val.as_field();
                    acc_f(&mut adj, a, zip_new(g, &vb, |g, y| g / y));
                    let mut gb = Field::zeros(g.dims);
                    for idx in 0..g.data.len() {
                        gb.data[idx] = -g.data[idx] * out.data[idx] / vb.data[idx];
                    }
                    acc_f(&mut adj, b, gb);
                }
                Op::FNeg(a) => acc_f(&mut adj, a, as_f(&gbar).map(|x| -x)),
                Op::FAffine(a, m, _) => acc_f(&mut adj, a, as_f(&gbar).map(|x| m * x)),
                Op::FScale(a, s) => {
                    let g = as_f(&gbar);
                    let vs = val_s(s);
                    let va = val_f(a);
                    acc_f(&mut adj, a, g.map(|x| x * vs));
                    let d: f64 = g.data.iter().zip(va.data.iter()).map(|(&g, &x)| g * x).sum();
                    acc_s(&mut adj, s, d);
                }
                Op::FShiftScalar(a, s) => {
                    let g = as_f(&gbar);
                    acc_s(&mut adj, s, g.sum());
                    acc_f(&mut adj, a, g.clone());
                }
                Op::FSigmoid(a, beta) => {
                    let g = as_f(&gbar);
                    let out = out_val.as_field();
                    acc_f(&mut adj, a, zip_new(g, &out, |g, s| g * beta * s * (1.0 - s)));
                }
                Op::FSoftplus(a, alpha) => {
                    let g = as_f(&gbar);
                    let va = val_f(a);
                    acc_f(&mut adj, a, zip_new(g, &va, |g, x| g * smooth::sigmoid(alpha * x)));
                }
                Op::FSwish(a) => {
                    let g = as_f(&gbar);
                    let va = val_f(a);
                    acc_f(&mut adj, a, zip_new(g, &va, |g, x| g * smooth::swish_deriv(x)));
                }
                Op::FExp(a) => {
                    let g = as_f(&gbar);
                    let out = out_val.as_field();
                    acc_f(&mut adj, a, zip_new(g, &out, |g, e| g * e));
                }
                Op::FSqrtEps(a, _) => {
                    let g = as_f(&gbar);
                    let out = out_val.as_field();
                    acc_f(&mut adj, a, zip_new(g, &out, |g, r| 0.5 * g / r));
                }
                Op::FMaxConst(a, c) => {
                    let g = as_f(&gbar);
                    let va = val_f(a);
                    acc_f(&mut adj, a, zip_new(g, &va, |g, x| if x > c { g } else { 0.0 }));
                }
                Op::FSmax2(a, b, beta) => {
                    let g = as_f(&gbar);
                    let (va, vb) = (val_f(a), val_f(b));
                    let mut ga = Field::zeros(g.dims);
                    let mut gb = Field::zeros(g.dims);
                    for idx in 0..g.data.len() {
                        let w = smooth::sigmoid(beta * (va.data[idx] - vb.data[idx]));
                        ga.data[idx] = g.data[idx] * w;
                        gb.data[idx] = g.data[idx] * (1.0 - w);
                    }
                    acc_f(&mut adj, a, ga);
                    acc_f(&mut adj, b, gb);
                }
                Op::FHarmonic(a, b) => {
                    let g = as_f(&gbar);
                    let (va, vb) = (val_f(a), val_f(b));
                    let mut ga = Field::zeros(g.dims);
                    let mut gb = Field::zeros(g.dims);
                    for idx in 0..g.data.len() {
                        let (x, y) = (va.data[idx], vb.data[idx]);
                        let d = (x + y).max(1e-300);
                        let d2 = d * d;
                        ga.data[idx] = g.data[idx] * 2.0 * y * y / d2;
                        gb.data[idx] = g.data[idx] * 2.0 * x * x / d2;
                    }
                    acc_f(&mut adj, a, ga);
                    acc_f(&mut adj, b, gb);
                }
                Op::FUpwind1 { field, disp, axis, inv_delta } => {
                    let g = as_f(&gbar);
                    let f = val_f(field);
                    let d = val_f(disp);
                    let mut gf = Field::zeros(g.dims);
                    let mut gd = Field::zeros(g.dims);
                    for_each_line(g.dims, axis, |base, stride, len| {
                        for iq in 0..len {
                            let idx = base + iq * stride;
                            let gv = g.data[idx];
                            if gv == 0.0 {
                                continue;
                            }
                            let dv = d.data[idx];
                            let fc = f.data[idx];
                            let fm = if iq > 0 { f.data[idx - stride] } else { fc };
                            let fp = if iq + 1 < len { f.data[idx + stride] } else { fc };
                            let dpos = dv.max(0.0);
                            let dneg = dv.min(0.0);
                            // d-part: branch derivative of the positive/negative split.
                            let dd = if dv > 0.0 {
                                (fc - fm) * inv_delta
                            } else if dv < 0.0 {
                                (fp - fc) * inv_delta
                            } else {
                                0.0
                            };
                            gd.data[idx] += gv * dd;
                            // f-part, scattered with boundary clamping.
                            gf.data[idx] += gv * (dpos - dneg) * inv_delta;
                            let im = if iq > 0 { idx - stride } else { idx };
                            gf.data[im] -= gv * dpos * inv_delta;
                            let ip = if iq + 1 < len { idx + stride } else { idx };
                            gf.data[ip] += gv * dneg * inv_delta;
                        }
                    });
                    acc_f(&mut adj, field, gf);
                    acc_f(&mut adj, disp, gd);
                }
                Op::FShiftRep(a, axis, dir) => {
                    let g = as_f(&gbar);
                    let mut ga = Field::zeros(g.dims);
                    for_each_line(g.dims, axis, |base, stride, len| {
                        for iq in 0..len {
                            let src = (iq as isize + dir).clamp(0, len as isize - 1) as usize;
                            ga.data[base + src * stride] += g.data[base + iq * stride];
                        }
                    });
                    acc_f(&mut adj, a, ga);
                }
                Op::FShiftZero(a, axis, dir) => {
                    let g = as_f(&gbar);
                    let mut ga = Field::zeros(g.dims);
                    for_each_line(g.dims, axis, |base, stride, len| {
                        for iq in 0..len {
                            let src = iq as isize + dir;
                            if src >= 0 && src < len as isize {
                                ga.data[base + src as usize * stride] += g.data[base + iq * stride];
                            }
                        }
                    });
                    acc_f(&mut adj, a, ga);
                }
                Op::FMirrorZ(a) => acc_f(&mut adj, a, mirror_z(as_f(&gbar))),
                Op::FRollZ(a, shift) => {
                    let g = as_f(&gbar);
                    let nz = g.dims[2];
                    let inv = (nz - shift % nz) % nz;
                    acc_f(&mut adj, a, roll_z(g, inv));
                }
                Op::FBroadcastZ(a, nz) => {
                    let g = as_f(&gbar);
                    let mut ga = Field::zeros([g.dims[0], g.dims[1], 1]);
                    for c in 0..ga.data.len() {
                        let base = c * nz;
                        ga.data[c] = g.data[base..base + nz].iter().sum();
                    }
                    acc_f(&mut adj, a, ga);
                }
                Op::FDilateLse(a, beta) => {
                    let g = as_f(&gbar);
                    let x = val_f(a);
                    let out = out_val.as_field();
                    let (n, m) = (x.dims[0], x.dims[1]);
                    let mut ga = Field::zeros(x.dims);
                    for i in 0..n as isize {
                        for j in 0..m as isize {
                            let c = (i as usize) * m + j as usize;
                            let gv = g.data[c];
                            if gv == 0.0 {
                                continue;
                            }
                            let mut count = 0usize;
                            for di in -MORPH_RADIUS..=MORPH_RADIUS {
                                for dj in -MORPH_RADIUS..=MORPH_RADIUS {
                                    let (ii, jj) = (i + di, j + dj);
                                    if ii >= 0 && ii < n as isize && jj >= 0 && jj < m as isize {
                                        count += 1;
                                    }
                                }
                            }
                            for di in -MORPH_RADIUS..=MORPH_RADIUS {
                                for dj in -MORPH_RADIUS..=MORPH_RADIUS {
                                    let (ii, jj) = (i + di, j + dj);
                                    if ii >= 0 && ii < n as isize && jj >= 0 && jj < m as isize {
                                        let w = (ii as usize) * m + jj as usize;
                                        let p = (beta * (x.data[w] - out.data[c])).exp()
                                            / count as f64;
                                        ga.data[w] += gv * p;
                                    }
                                }
                            }
                        }
                    }
                    acc_f(&mut adj, a, ga);
                }

                // ---- reductions / linear algebra ----
                Op::RSum(a) => {
                    let g = as_s(&gbar);
                    let dims = val_f(a).dims;
                    acc_f(&mut adj, a, Field::full(dims, g));
                }
                Op::RDot(a, b) => {
                    let g = as_s(&gbar);
                    let (va, vb) = (val_f(a), val_f(b));
                    acc_f(&mut adj, a, vb.map(|y| g * y));
                    acc_f(&mut adj, b, va.map(|x| g * x));
                }
                Op::RWLse(v, w, beta) => {
                    let g = as_s(&gbar);
                    let (vv, vw) = (val_f(v), val_f(w));
                    let out = out_val.as_scalar();
                    let wsum: f64 = vw.data.iter().sum();
                    let mut gv = Field::zeros(vv.dims);
                    let mut gw = Field::zeros(vv.dims);
                    for idx in 0..vv.data.len() {
                        let u = (beta * (vv.data[idx] - out)).exp();
                        gv.data[idx] = g * vw.data[idx] * u / wsum;
                        gw.data[idx] = g * (u - 1.0) / (beta * wsum);
                    }
                    acc_f(&mut adj, v, gv);
                    acc_f(&mut adj, w, gw);
                }
                Op::MatMul(a, b) => {
                    let g = as_f(&gbar);
                    let (va, vb) = (val_f(a), val_f(b));
                    let (n, k) = (va.dims[0], va.dims[1]);
                    let m = vb.dims[1];
                    // dA = gbar * B^T
                    let mut ga = Field::zeros(va.dims);
                    for r in 0..n {
                        for p in 0..k {
                            let mut s = 0.0;
                            let grow = &g.data[r * m..(r + 1) * m];
                            let brow = &vb.data[p * m..(p + 1) * m];
                            for c in 0..m {
                                s += grow[c] * brow[c];
                            }
                            ga.data[r * k + p] = s;
                        }
                    }
                    // dB = A^T * gbar
                    let mut gb = Field::zeros(vb.dims);
                    for r in 0..n {
                        let grow = &g.data[r * m..(r + 1) * m];
                        for p in 0..k {
                            let av = va.data[r * k + p];
                            if av == 0.0 {
                                continue;
                            }
                            let brow = &mut gb.data[p * m..(p + 1) * m];
                            for c in 0..m {
                                brow[c] += av * grow[c];
                            }
                        }
                    }
                    acc_f(&mut adj, a, ga);
                    acc_f(&mut adj, b, gb);
                }
                Op::AddRow(a, row) => {
                    let g = as_f(&gbar);
                    let m = g.dims[1];
                    let mut grow = Field::zeros([1, m, 1]);
                    for r in 0..g.dims[0] {
                        for c in 0..m {
                            grow.data[c] += g.data[r * m + c];
                        }
                    }
                    acc_f(&mut adj, a, g.clone());
                    acc_f(&mut adj, row, grow);
                }
            }

            // Release the node value; all of its consumers are processed.
            nodes[i].val = Value::S(0.0);
        }

        Grads { adj }
    }
}

fn as_s(adj: &AdjVal) -> f64 {
    match adj {
        AdjVal::S(s) => *s,
        AdjVal::F(_) => panic!("adjoint kind mismatch (expected scalar)"),
    }
}

fn as_f(adj: &AdjVal) -> &Field {
    match adj {
        AdjVal::F(f) => f,
        AdjVal::S(_) => panic!("adjoint kind mismatch (expected field)"),
    }
}

fn zip_new(g: &Field, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
    debug_assert_eq!(g.dims, other.dims);
    let data = g.data.iter().zip(other.data.iter()).map(|(&a, &b)| f(a, b)).collect();
    Field { dims: g.dims, data }
}
