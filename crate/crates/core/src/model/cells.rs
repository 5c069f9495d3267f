use super::params::{Gate, LstmParams, QkLstmParams, GATES};
use crate::error::{Error, Result};
use crate::numerics::sigmoid;
use crate::qkernel::{kernel_value, kernel_value_and_grad};

/// Hidden state and cell memory of one recurrent layer.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl CellState {
    pub fn zeros(n: usize) -> Self {
        Self {
            h: vec![0.0; n],
            c: vec![0.0; n],
        }
    }
}

/// Gate activations shared by both cell kinds.
#[derive(Debug, Clone, PartialEq)]
pub struct GateValues {
    /// `f`, `i`, `C_hat`, `o` after their nonlinearities.
    pub act: [Vec<f64>; 4],
    pub c_prev: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QkCellCache {
    /// `[h_{t-1}; x_t]`
    pub v: Vec<f64>,
    /// Per gate, kernel values against each landmark.
    pub kernels: [Vec<f64>; 4],
    pub gates: GateValues,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmCellCache {
    pub v: Vec<f64>,
    pub gates: GateValues,
}

fn concat(h: &[f64], x: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(h.len() + x.len());
    v.extend_from_slice(h);
    v.extend_from_slice(x);
    v
}

fn check_dims(n: usize, p: usize, x: &[f64], prev: &CellState) -> Result<()> {
    if x.len() != p || prev.h.len() != n || prev.c.len() != n {
        return Err(Error::Shape(format!(
            "cell expects input {p} and state {n}, got input {} and state ({}, {})",
            x.len(),
            prev.h.len(),
            prev.c.len()
        )));
    }
    Ok(())
}

/// Applies the gate nonlinearities and the memory update to raw pre-activations.
fn combine(pre: [Vec<f64>; 4], prev: &CellState) -> (CellState, GateValues) {
    let [f, i, c_hat, o] = pre;
    let f: Vec<f64> = f.into_iter().map(sigmoid).collect();
    let i: Vec<f64> = i.into_iter().map(sigmoid).collect();
    let c_hat: Vec<f64> = c_hat.into_iter().map(f64::tanh).collect();
    let o: Vec<f64> = o.into_iter().map(sigmoid).collect();
    let n = f.len();
    let c: Vec<f64> = (0..n).map(|u| f[u] * prev.c[u] + i[u] * c_hat[u]).collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h: Vec<f64> = (0..n).map(|u| o[u] * tanh_c[u]).collect();
    (
        CellState { h, c },
        GateValues {
            act: [f, i, c_hat, o],
            c_prev: prev.c.clone(),
            tanh_c,
        },
    )
}

/// Backpropagates through the memory update and gate nonlinearities.
/// Returns per-gate gradients w.r.t. the pre-activations and `dL/dC_{t-1}`.
fn uncombine(g: &GateValues, dh: &[f64], dc: &[f64]) -> ([Vec<f64>; 4], Vec<f64>) {
    let [f, i, c_hat, o] = &g.act;
    let n = f.len();
    let mut da = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut dc_prev = vec![0.0; n];
    for u in 0..n {
        let tc = g.tanh_c[u];
        let d_o = dh[u] * tc;
        let d_c = dc[u] + dh[u] * o[u] * (1.0 - tc * tc);
        let d_f = d_c * g.c_prev[u];
        let d_i = d_c * c_hat[u];
        let d_chat = d_c * i[u];
        dc_prev[u] = d_c * f[u];
        da[0][u] = d_f * f[u] * (1.0 - f[u]);
        da[1][u] = d_i * i[u] * (1.0 - i[u]);
        da[2][u] = d_chat * (1.0 - c_hat[u] * c_hat[u]);
        da[3][u] = d_o * o[u] * (1.0 - o[u]);
    }
    (da, dc_prev)
}

/// One QK-LSTM step: each gate's pre-activation is `sum_j kappa_g(v, z_j) beta_g[j]`.
pub fn qklstm_cell_forward(x: &[f64], prev: &CellState, p: &QkLstmParams) -> Result<(CellState, QkCellCache)> {
    let n = p.hidden;
    check_dims(n, p.input_dim(), x, prev)?;
    let v = concat(&prev.h, x);
    let n_land = p.num_landmarks();
    let mut kernels: [Vec<f64>; 4] = Default::default();
    let mut pre: [Vec<f64>; 4] = Default::default();
    for g in GATES {
        let gi = g.index();
        let w = p.scale[gi].data();
        let k = (0..n_land)
            .map(|j| kernel_value(&v, p.landmarks.row(j), w, &p.kernel))
            .collect::<Result<Vec<f64>>>()?;
        let mut a = match &p.bias {
            Some(b) => b[gi].data().to_vec(),
            None => vec![0.0; n],
        };
        let beta = &p.beta[gi];
        for (j, &kj) in k.iter().enumerate() {
            for (au, bu) in a.iter_mut().zip(beta.row(j)) {
                *au += kj * bu;
            }
        }
        kernels[gi] = k;
        pre[gi] = a;
    }
    let (state, gates) = combine(pre, prev);
    Ok((state, QkCellCache { v, kernels, gates }))
}

/// Reverse pass of [`qklstm_cell_forward`]. Parameter gradients are
/// accumulated into `grads`; returns `(dh_prev, dc_prev, dx)`.
pub fn qklstm_cell_backward(
    cache: &QkCellCache,
    p: &QkLstmParams,
    dh: &[f64],
    dc: &[f64],
    grads: &mut QkLstmParams,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let n = p.hidden;
    if dh.len() != n || dc.len() != n || cache.v.len() != p.kernel.feature_dim {
        return Err(Error::StaleCache("QK-LSTM cell dimensions changed".into()));
    }
    let (da, dc_prev) = uncombine(&cache.gates, dh, dc);
    let mut dv = vec![0.0; cache.v.len()];
    for g in GATES {
        let gi = g.index();
        if let Some(b) = grads.bias.as_mut() {
            for (acc, d) in b[gi].data_mut().iter_mut().zip(&da[gi]) {
                *acc += d;
            }
        }
        let w = p.scale[gi].data();
        for j in 0..p.num_landmarks() {
            let kj = cache.kernels[gi][j];
            let beta_row = p.beta[gi].row(j);
            let mut dk = 0.0;
            for (dbeta, (&d, &b)) in grads.beta[gi].row_mut(j).iter_mut().zip(da[gi].iter().zip(beta_row)) {
                *dbeta += kj * d;
                dk += b * d;
            }
            if dk == 0.0 {
                continue;
            }
            let (_, kg) = kernel_value_and_grad(&cache.v, p.landmarks.row(j), w, &p.kernel)?;
            for (acc, d) in dv.iter_mut().zip(&kg.da) {
                *acc += dk * d;
            }
            for (acc, d) in grads.landmarks.row_mut(j).iter_mut().zip(&kg.db) {
                *acc += dk * d;
            }
            for (acc, d) in grads.scale[gi].data_mut().iter_mut().zip(&kg.dw) {
                *acc += dk * d;
            }
        }
    }
    let dx = dv.split_off(n);
    Ok((dv, dc_prev, dx))
}

/// One classical LSTM step with affine gates over `[h_{t-1}; x_t]`.
pub fn classical_lstm_cell_forward(x: &[f64], prev: &CellState, p: &LstmParams) -> Result<(CellState, LstmCellCache)> {
    let n = p.hidden;
    check_dims(n, p.input_dim(), x, prev)?;
    let v = concat(&prev.h, x);
    let pre = GATES.map(|g| {
        let gi = g.index();
        (0..n)
            .map(|u| {
                let row = p.weight[gi].row(u);
                p.bias[gi].data()[u] + row.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect::<Vec<f64>>()
    });
    let (state, gates) = combine(pre, prev);
    Ok((state, LstmCellCache { v, gates }))
}

pub fn classical_lstm_cell_backward(
    cache: &LstmCellCache,
    p: &LstmParams,
    dh: &[f64],
    dc: &[f64],
    grads: &mut LstmParams,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let n = p.hidden;
    if dh.len() != n || dc.len() != n || cache.v.len() != p.weight[0].shape()[1] {
        return Err(Error::StaleCache("LSTM cell dimensions changed".into()));
    }
    let (da, dc_prev) = uncombine(&cache.gates, dh, dc);
    let mut dv = vec![0.0; cache.v.len()];
    for g in GATES {
        let gi = g.index();
        for u in 0..n {
            let d = da[gi][u];
            grads.bias[gi].data_mut()[u] += d;
            let w_row = p.weight[gi].row(u);
            for ((gw, &vv), (acc, &w)) in grads.weight[gi]
                .row_mut(u)
                .iter_mut()
                .zip(&cache.v)
                .zip(dv.iter_mut().zip(w_row))
            {
                *gw += d * vv;
                *acc += d * w;
            }
        }
    }
    let dx = dv.split_off(n);
    Ok((dv, dc_prev, dx))
}

/// Gate lookup helper for tests and diagnostics.
pub fn gate_values(g: &GateValues, gate: Gate) -> &[f64] {
    &g.act[gate.index()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_grad, relative_error, ParamTree, Rng, Tensor};
    use crate::qkernel::KernelConfig;

    fn rand_tensor(shape: &[usize], scale: f64, rng: &mut Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| scale * rng.normal()).collect()).unwrap()
    }

    fn qk_params(n: usize, p: usize, land: usize, rng: &mut Rng) -> QkLstmParams {
        let d = n + p;
        QkLstmParams {
            hidden: n,
            kernel: KernelConfig::new(d, 4, 0).unwrap(),
            landmarks: rand_tensor(&[land, d], 0.5, rng),
            beta: [(); 4].map(|_| rand_tensor(&[land, n], 1.0, rng)),
            scale: [(); 4].map(|_| rand_tensor(&[d], 1.0, rng)),
            bias: None,
        }
    }

    fn zero_qk(n: usize, p: usize, land: usize) -> QkLstmParams {
        let d = n + p;
        QkLstmParams {
            hidden: n,
            kernel: KernelConfig::new(d, 4, 0).unwrap(),
            landmarks: Tensor::zeros(&[land, d]),
            beta: [(); 4].map(|_| Tensor::zeros(&[land, n])),
            scale: [(); 4].map(|_| Tensor::filled(&[d], 1.0)),
            bias: None,
        }
    }

    /// Straight transcription of the gate equations with explicit loops.
    fn reference_qk_cell(x: &[f64], h: &[f64], c: &[f64], p: &QkLstmParams) -> (Vec<f64>, Vec<f64>) {
        let n = p.hidden;
        let v: Vec<f64> = h.iter().chain(x).copied().collect();
        let kappa = |g: usize, j: usize| -> f64 {
            let mut prod = 1.0;
            for k in 0..v.len() {
                let w = p.scale[g].data()[k];
                let z = p.landmarks.data()[j * v.len() + k];
                prod *= (w * (v[k] - z) / 2.0).cos().powi(2);
            }
            prod
        };
        let pre = |g: usize, u: usize| -> f64 {
            (0..p.num_landmarks())
                .map(|j| p.beta[g].data()[j * n + u] * kappa(g, j))
                .sum()
        };
        let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
        let mut c_new = vec![0.0; n];
        let mut h_new = vec![0.0; n];
        for u in 0..n {
            let f = sig(pre(0, u));
            let i = sig(pre(1, u));
            let ch = pre(2, u).tanh();
            let o = sig(pre(3, u));
            c_new[u] = f * c[u] + i * ch;
            h_new[u] = o * c_new[u].tanh();
        }
        (h_new, c_new)
    }

    #[test]
    fn zero_memory_gives_input_times_candidate() {
        let mut rng = Rng::new(1);
        let p = qk_params(3, 2, 4, &mut rng);
        let prev = CellState {
            h: vec![0.1, -0.2, 0.3],
            c: vec![0.0; 3],
        };
        let (s, cache) = qklstm_cell_forward(&[0.5, -1.0], &prev, &p).unwrap();
        for u in 0..3 {
            assert_eq!(s.c[u], cache.gates.act[1][u] * cache.gates.act[2][u]);
        }
    }

    #[test]
    fn zero_coefficients_halve_memory() {
        let p = zero_qk(2, 2, 3);
        let prev = CellState {
            h: vec![0.3, -0.4],
            c: vec![1.0, -2.0],
        };
        let (s, cache) = qklstm_cell_forward(&[0.7, 0.1], &prev, &p).unwrap();
        for g in [Gate::Forget, Gate::Input, Gate::Output] {
            assert!(gate_values(&cache.gates, g).iter().all(|&v| v == 0.5));
        }
        assert!(gate_values(&cache.gates, Gate::Candidate).iter().all(|&v| v == 0.0));
        assert_eq!(s.c, vec![0.5, -1.0]);
        assert_eq!(s.h, vec![0.5 * 0.5f64.tanh(), 0.5 * (-1.0f64).tanh()]);
    }

    #[test]
    fn matches_reference_transcription() {
        let mut rng = Rng::new(2);
        let p = qk_params(3, 2, 4, &mut rng);
        let prev = CellState {
            h: vec![0.2, -0.5, 0.1],
            c: vec![0.4, 0.3, -0.8],
        };
        let x = [0.9, -0.3];
        let (s, _) = qklstm_cell_forward(&x, &prev, &p).unwrap();
        let (h_ref, c_ref) = reference_qk_cell(&x, &prev.h, &prev.c, &p);
        for u in 0..3 {
            assert!((s.h[u] - h_ref[u]).abs() < 1e-12);
            assert!((s.c[u] - c_ref[u]).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let p = zero_qk(2, 2, 3);
        assert!(qklstm_cell_forward(&[0.0; 3], &CellState::zeros(2), &p).is_err());
        assert!(qklstm_cell_forward(&[0.0; 2], &CellState::zeros(3), &p).is_err());
    }

    #[test]
    fn classical_zero_weights_match_qk_zero_coefficients() {
        let lstm = LstmParams {
            hidden: 2,
            weight: [(); 4].map(|_| Tensor::zeros(&[2, 4])),
            bias: [(); 4].map(|_| Tensor::zeros(&[2])),
        };
        let qk = zero_qk(2, 2, 3);
        let mut a = CellState {
            h: vec![0.1, 0.2],
            c: vec![0.8, -0.6],
        };
        let mut b = a.clone();
        for t in 0..5 {
            let x = [t as f64 * 0.3, -0.2];
            a = classical_lstm_cell_forward(&x, &a, &lstm).unwrap().0;
            b = qklstm_cell_forward(&x, &b, &qk).unwrap().0;
            assert_eq!(a, b);
        }
    }

    #[test]
    fn classical_single_unit_hand_case() {
        // n = 1, p = 1, only the candidate gate has a bias of 1
        let mut lstm = LstmParams {
            hidden: 1,
            weight: [(); 4].map(|_| Tensor::zeros(&[1, 2])),
            bias: [(); 4].map(|_| Tensor::zeros(&[1])),
        };
        lstm.bias[2] = Tensor::from_vec(vec![1.0]);
        let (s, _) = classical_lstm_cell_forward(&[0.0], &CellState::zeros(1), &lstm).unwrap();
        let c = 0.5 * 1f64.tanh();
        assert!((s.c[0] - c).abs() < 1e-15);
        assert!((s.h[0] - 0.5 * c.tanh()).abs() < 1e-15);
    }

    /// Loss `sum(gh * h) + sum(gc * c)` for fixed random weights gh, gc.
    fn cell_fd_check<P, F, B>(params: P, to_tree: impl Fn(&P, &[f64], &CellState) -> ParamTree, from_tree: impl Fn(&ParamTree) -> (P, Vec<f64>, CellState), fwd: F, bwd: B, tol: f64)
    where
        F: Fn(&[f64], &CellState, &P) -> CellState,
        B: Fn(&[f64], &CellState, &P, &[f64], &[f64]) -> (ParamTree, Vec<f64>, Vec<f64>, Vec<f64>),
    {
        let mut rng = Rng::new(9);
        let x: Vec<f64> = (0..2).map(|_| rng.normal()).collect();
        let prev = CellState {
            h: (0..3).map(|_| 0.5 * rng.normal()).collect(),
            c: (0..3).map(|_| rng.normal()).collect(),
        };
        let gh: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
        let gc: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
        let tree = to_tree(&params, &x, &prev);
        let loss = |t: &ParamTree| {
            let (p, x, prev) = from_tree(t);
            let s = fwd(&x, &prev, &p);
            s.h.iter().zip(&gh).map(|(a, b)| a * b).sum::<f64>() + s.c.iter().zip(&gc).map(|(a, b)| a * b).sum::<f64>()
        };
        let fd = finite_diff_grad(loss, &tree, 1e-5);
        let (mut analytic, dh_prev, dc_prev, dx) = bwd(&x, &prev, &params, &gh, &gc);
        analytic.insert("x", Tensor::from_vec(dx)).unwrap();
        analytic.insert("h", Tensor::from_vec(dh_prev)).unwrap();
        analytic.insert("c", Tensor::from_vec(dc_prev)).unwrap();
        for (name, t) in fd.iter() {
            for (a, b) in analytic.get(name).unwrap().data().iter().zip(t.data()) {
                let rel = relative_error(*a, *b, 1e-4);
                assert!(rel <= tol, "{name}: analytic {a} vs fd {b} (rel {rel})");
            }
        }
    }

    fn qk_grad_tree(p: &QkLstmParams) -> ParamTree {
        let mut t = ParamTree::new();
        t.insert("landmarks", p.landmarks.clone()).unwrap();
        for g in GATES {
            t.insert(format!("beta_{}", g.suffix()), p.beta[g.index()].clone()).unwrap();
            t.insert(format!("scale_{}", g.suffix()), p.scale[g.index()].clone()).unwrap();
        }
        t
    }

    fn qk_tree(p: &QkLstmParams, x: &[f64], prev: &CellState) -> ParamTree {
        let mut t = qk_grad_tree(p);
        t.insert("x", Tensor::from_vec(x.to_vec())).unwrap();
        t.insert("h", Tensor::from_vec(prev.h.clone())).unwrap();
        t.insert("c", Tensor::from_vec(prev.c.clone())).unwrap();
        t
    }

    #[test]
    fn qk_backward_matches_finite_differences() {
        let mut rng = Rng::new(3);
        let params = qk_params(3, 2, 4, &mut rng);
        let template = params.clone();
        let from_tree = move |t: &ParamTree| {
            let mut p = template.clone();
            p.landmarks = t.get("landmarks").unwrap().clone();
            for g in GATES {
                p.beta[g.index()] = t.get(&format!("beta_{}", g.suffix())).unwrap().clone();
                p.scale[g.index()] = t.get(&format!("scale_{}", g.suffix())).unwrap().clone();
            }
            let x = t.get("x").unwrap().data().to_vec();
            let prev = CellState {
                h: t.get("h").unwrap().data().to_vec(),
                c: t.get("c").unwrap().data().to_vec(),
            };
            (p, x, prev)
        };
        cell_fd_check(
            params,
            qk_tree,
            from_tree,
            |x, prev, p| qklstm_cell_forward(x, prev, p).unwrap().0,
            |x, prev, p, gh, gc| {
                let (_, cache) = qklstm_cell_forward(x, prev, p).unwrap();
                let mut grads = p.clone();
                grads.landmarks = Tensor::zeros(p.landmarks.shape());
                grads.beta = [(); 4].map(|_| Tensor::zeros(p.beta[0].shape()));
                grads.scale = [(); 4].map(|_| Tensor::zeros(p.scale[0].shape()));
                let (dh, dc, dx) = qklstm_cell_backward(&cache, p, gh, gc, &mut grads).unwrap();
                (qk_grad_tree(&grads), dh, dc, dx)
            },
            1e-6,
        );
    }

    #[test]
    fn classical_backward_matches_finite_differences() {
        let mut rng = Rng::new(4);
        let params = LstmParams {
            hidden: 3,
            weight: [(); 4].map(|_| rand_tensor(&[3, 5], 0.7, &mut rng)),
            bias: [(); 4].map(|_| rand_tensor(&[3], 0.5, &mut rng)),
        };
        let to_tree = |p: &LstmParams, x: &[f64], prev: &CellState| {
            let mut t = ParamTree::new();
            for g in GATES {
                t.insert(format!("weight_{}", g.suffix()), p.weight[g.index()].clone()).unwrap();
                t.insert(format!("bias_{}", g.suffix()), p.bias[g.index()].clone()).unwrap();
            }
            t.insert("x", Tensor::from_vec(x.to_vec())).unwrap();
            t.insert("h", Tensor::from_vec(prev.h.clone())).unwrap();
            t.insert("c", Tensor::from_vec(prev.c.clone())).unwrap();
            t
        };
        let from_tree = |t: &ParamTree| {
            let p = LstmParams {
                hidden: 3,
                weight: GATES.map(|g| t.get(&format!("weight_{}", g.suffix())).unwrap().clone()),
                bias: GATES.map(|g| t.get(&format!("bias_{}", g.suffix())).unwrap().clone()),
            };
            let x = t.get("x").unwrap().data().to_vec();
            let prev = CellState {
                h: t.get("h").unwrap().data().to_vec(),
                c: t.get("c").unwrap().data().to_vec(),
            };
            (p, x, prev)
        };
        cell_fd_check(
            params,
            to_tree,
            from_tree,
            |x, prev, p| classical_lstm_cell_forward(x, prev, p).unwrap().0,
            |x, prev, p, gh, gc| {
                let (_, cache) = classical_lstm_cell_forward(x, prev, p).unwrap();
                let mut grads = LstmParams {
                    hidden: 3,
                    weight: [(); 4].map(|_| Tensor::zeros(&[3, 5])),
                    bias: [(); 4].map(|_| Tensor::zeros(&[3])),
                };
                let (dh, dc, dx) = classical_lstm_cell_backward(&cache, p, gh, gc, &mut grads).unwrap();
                let mut t = ParamTree::new();
                for g in GATES {
                    t.insert(format!("weight_{}", g.suffix()), grads.weight[g.index()].clone()).unwrap();
                    t.insert(format!("bias_{}", g.suffix()), grads.bias[g.index()].clone()).unwrap();
                }
                (t, dh, dc, dx)
            },
            1e-6,
        );
    }
}
