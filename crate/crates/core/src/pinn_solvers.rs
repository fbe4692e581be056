//! Training formulations for physics-informed networks on transport problems.
//!
//! * LS: gradient descent on `𝒥 = 𝒥^(1) + μ𝒥^(2)`, gradients by reverse
//!   accumulation through the forward and tangent recursions.
//! * PM: alternating minimization of `𝒥_P`, which penalizes the state
//!   constraints `a_l^(k) = W_lσ(a_{l−1}^(k)) + b_l𝟙ᵀ` and the tangent
//!   constraints `d_{l,i} = W_l(σ′(a_{l−1}^(1)) ∗ d_{l−1,i})`.
//! * SAPM: as PM, with the layer-`l` penalties scaled by `ω_l` and the
//!   interior state penalties column-weighted by
//!   `Ω_l[n]² = γ_{n,l} = Σᵢ Σ_{j=l}^{L−1} ‖d_{j,i}[n]‖²`.
//!
//! Layer indices are 1-based throughout, matching `W_1 … W_L`.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fnn::{backprop, forward, init_params, Activation, FnnGradient, FnnParams};
use crate::fnn_solvers::{omega_weights, Armijo, Formulation};
use crate::linalg::{solve_row_ls, solve_spd, Matrix};
use crate::pinn::{combine_tangents, loss_j, require_smooth, tangent_forward, PinnData, PinnLoss};
use crate::rng::Stream;

/// Auxiliary states on interior (`a1`) and boundary (`a2`) points and the
/// tangent variables `d[l−1][i] = d_{l,i}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PinnAuxState {
    pub a1: Vec<Matrix>,
    pub a2: Vec<Matrix>,
    pub d: Vec<Vec<Matrix>>,
}

impl PinnAuxState {
    /// `U(−1, 1)` entries drawn in the order `a1`, `a2`, `d` (layer by layer,
    /// then by input coordinate), each matrix row-major.
    pub fn random(
        depth: usize,
        width: usize,
        dim: usize,
        n1: usize,
        n2: usize,
        rng: &mut Stream,
    ) -> Self {
        let a1 = (1..depth)
            .map(|_| rng.uniform_matrix(width, n1, -1.0, 1.0))
            .collect();
        let a2 = (1..depth)
            .map(|_| rng.uniform_matrix(width, n2, -1.0, 1.0))
            .collect();
        let d = (1..=depth)
            .map(|l| {
                let rows = if l == depth { 1 } else { width };
                (0..dim)
                    .map(|_| rng.uniform_matrix(rows, n1, -1.0, 1.0))
                    .collect()
            })
            .collect();
        Self { a1, a2, d }
    }

    pub fn zeros(depth: usize, width: usize, dim: usize, n1: usize, n2: usize) -> Self {
        Self {
            a1: vec![Matrix::zeros(width, n1); depth - 1],
            a2: vec![Matrix::zeros(width, n2); depth - 1],
            d: (1..=depth)
                .map(|l| vec![Matrix::zeros(if l == depth { 1 } else { width }, n1); dim])
                .collect(),
        }
    }

    /// States and tangents of the network itself.
    pub fn feasible(params: &FnnParams, data: &PinnData) -> Result<Self> {
        let t = tangent_forward(params, &data.x1)?;
        Ok(Self {
            a1: t.pre,
            a2: forward(params, &data.x2)?.pre,
            d: t.tangents,
        })
    }

    fn check(&self, params: &FnnParams, data: &PinnData) -> Result<()> {
        let depth = params.depth();
        let m = params.width();
        let ok = self.a1.len() + 1 == depth
            && self.a2.len() + 1 == depth
            && self.d.len() == depth
            && self.a1.iter().all(|a| a.shape() == (m, data.n1()))
            && self.a2.iter().all(|a| a.shape() == (m, data.n2()))
            && self.d.iter().enumerate().all(|(l, ds)| {
                let rows = if l + 1 == depth { 1 } else { m };
                ds.len() == data.dim() && ds.iter().all(|t| t.shape() == (rows, data.n1()))
            })
            && params.input_dim() == data.dim();
        if ok {
            Ok(())
        } else {
            Err(Error::Shape(
                "auxiliary state does not match network and data".into(),
            ))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PinnPenaltyWeights {
    /// `β_l^(1)`, `l = 1..L−1`.
    pub beta1: Vec<f64>,
    /// `α_l^(1)`, `l = 1..L`.
    pub alpha1: Vec<f64>,
    /// `β_l^(2)`, `l = 1..L−1`.
    pub beta2: Vec<f64>,
    pub mu: f64,
}

impl PinnPenaltyWeights {
    pub fn unit(depth: usize) -> Self {
        Self {
            beta1: vec![1.0; depth - 1],
            alpha1: vec![1.0; depth],
            beta2: vec![1.0; depth - 1],
            mu: 1.0,
        }
    }

    pub fn validate(&self, depth: usize) -> Result<()> {
        if self.beta1.len() + 1 != depth
            || self.beta2.len() + 1 != depth
            || self.alpha1.len() != depth
        {
            return Err(Error::Config(format!(
                "penalty weights do not match depth {depth}"
            )));
        }
        let all = self
            .beta1
            .iter()
            .chain(&self.alpha1)
            .chain(&self.beta2)
            .chain(std::iter::once(&self.mu));
        for v in all {
            if !(*v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("penalty weight {v} is not positive")));
            }
        }
        Ok(())
    }

    /// `β_l^(1)`, with `β_L^(1) = 1`.
    fn b1(&self, l: usize) -> f64 {
        self.beta1.get(l - 1).copied().unwrap_or(1.0)
    }

    /// `β_l^(2)`, with `β_L^(2) = 1` for the boundary data-fit term.
    fn b2(&self, l: usize) -> f64 {
        self.beta2.get(l - 1).copied().unwrap_or(1.0)
    }

    fn a(&self, l: usize) -> f64 {
        self.alpha1[l - 1]
    }
}

fn input1<'a>(
    params: &FnnParams,
    aux: &PinnAuxState,
    data: &'a PinnData,
    l: usize,
) -> Cow<'a, Matrix> {
    if l == 1 {
        Cow::Borrowed(&data.x1)
    } else {
        Cow::Owned(params.activation.apply(&aux.a1[l - 2]))
    }
}

fn input2<'a>(
    params: &FnnParams,
    aux: &PinnAuxState,
    data: &'a PinnData,
    l: usize,
) -> Cow<'a, Matrix> {
    if l == 1 {
        Cow::Borrowed(&data.x2)
    } else {
        Cow::Owned(params.activation.apply(&aux.a2[l - 2]))
    }
}

/// `Z_{l,i} = σ′(a_{l−1}^(1)) ∗ d_{l−1,i}`, `l ≥ 2`.
fn z_block(params: &FnnParams, aux: &PinnAuxState, l: usize, i: usize) -> Matrix {
    let act = params.activation;
    aux.a1[l - 2].zip_map(&aux.d[l - 2][i], |z, t| act.deriv(z) * t)
}

/// `D_{l,i}`: `W_1(:,i)𝟙ᵀ` for `l = 1`, else `W_lZ_{l,i}`.
fn big_d(params: &FnnParams, aux: &PinnAuxState, l: usize, i: usize) -> Matrix {
    if l == 1 {
        let w = &params.weights[0];
        Matrix::from_fn(w.rows(), aux.d[0][i].cols(), |r, _| w.get(r, i))
    } else {
        params.weights[l - 1].matmul(&z_block(params, aux, l, i))
    }
}

/// Interior state residual `W_lA_l^(1) + b_l𝟙ᵀ − a_l^(1)`, `l < L`.
fn r1(params: &FnnParams, aux: &PinnAuxState, data: &PinnData, l: usize) -> Matrix {
    params.weights[l - 1]
        .matmul(&input1(params, aux, data, l))
        .add_col(&params.biases[l - 1])
        .sub(&aux.a1[l - 1])
}

/// Boundary residual; for `l = L` the data fit `W_LA_L^(2) + b_L𝟙ᵀ − Y^(2)`.
fn r2(params: &FnnParams, aux: &PinnAuxState, data: &PinnData, l: usize) -> Matrix {
    let lhs = params.weights[l - 1]
        .matmul(&input2(params, aux, data, l))
        .add_col(&params.biases[l - 1]);
    if l == params.depth() {
        lhs.sub(&data.y2)
    } else {
        lhs.sub(&aux.a2[l - 1])
    }
}

/// `Σᵢ‖d_{l,i}[n]‖²` for every layer `l = 1..L−1`, per sample.
fn tangent_norms(aux: &PinnAuxState) -> Vec<Vec<f64>> {
    let depth = aux.d.len();
    aux.d[..depth - 1]
        .iter()
        .map(|ds| {
            let mut acc = vec![0.0; ds[0].cols()];
            for t in ds {
                for (a, v) in acc.iter_mut().zip(t.col_norms_sq()) {
                    *a += v;
                }
            }
            acc
        })
        .collect()
}

/// `γ_{n,l} = Σᵢ Σ_{m=l}^{L−1}‖d_{m,i}[n]‖²` for `l = 1..L` (zero at `L`).
pub fn gamma(aux: &PinnAuxState) -> Vec<Vec<f64>> {
    let norms = tangent_norms(aux);
    let depth = aux.d.len();
    let n1 = aux.d[0][0].cols();
    let mut out = vec![vec![0.0; n1]; depth];
    for l in (0..depth - 1).rev() {
        for n in 0..n1 {
            out[l][n] = out[l + 1][n] + norms[l][n];
        }
    }
    out
}

/// Squared column weights of the interior state penalties: `γ_{·,l}` for
/// SAPM, `1` for PM (`0` at `l = L`, which has no interior state term).
fn state_weights(formulation: Formulation, aux: &PinnAuxState) -> Vec<Vec<f64>> {
    match formulation {
        Formulation::SelfAdaptive => gamma(aux),
        Formulation::Penalty => {
            let depth = aux.d.len();
            let n1 = aux.d[0][0].cols();
            (1..=depth)
                .map(|l| vec![if l < depth { 1.0 } else { 0.0 }; n1])
                .collect()
        }
    }
}

fn layer_weights(formulation: Formulation, params: &FnnParams) -> Vec<f64> {
    match formulation {
        Formulation::SelfAdaptive => omega_weights(params),
        Formulation::Penalty => vec![1.0; params.depth()],
    }
}

fn weighted_norm_sq(r: &Matrix, col_weights: &[f64]) -> f64 {
    r.col_norms_sq()
        .iter()
        .zip(col_weights)
        .map(|(a, w)| a * w)
        .sum()
}

/// `𝒥_P` or `𝒥_S` with its interior and boundary parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyLoss {
    pub total: f64,
    pub interior: f64,
    pub boundary: f64,
}

pub fn loss_penalty_pinn(
    formulation: Formulation,
    params: &FnnParams,
    aux: &PinnAuxState,
    data: &PinnData,
    w: &PinnPenaltyWeights,
) -> Result<PenaltyLoss> {
    aux.check(params, data)?;
    w.validate(params.depth())?;
    let depth = params.depth();
    let omega = layer_weights(formulation, params);
    let cols = state_weights(formulation, aux);
    let mut interior = combine_tangents(&data.coeff, &aux.d[depth - 1])
        .sub(&data.y1)
        .frobenius_norm_sq();
    let mut boundary = r2(params, aux, data, depth).frobenius_norm_sq();
    for l in 1..depth {
        interior +=
            w.b1(l) * omega[l - 1] * weighted_norm_sq(&r1(params, aux, data, l), &cols[l - 1]);
        boundary += w.b2(l) * omega[l - 1] * r2(params, aux, data, l).frobenius_norm_sq();
    }
    for l in 1..=depth {
        for i in 0..data.dim() {
            interior += w.a(l)
                * omega[l - 1]
                * big_d(params, aux, l, i)
                    .sub(&aux.d[l - 1][i])
                    .frobenius_norm_sq();
        }
    }
    let interior = interior / data.n1() as f64;
    let boundary = boundary / data.n2() as f64;
    Ok(PenaltyLoss {
        total: interior + w.mu * boundary,
        interior,
        boundary,
    })
}

/// `𝒥_P`.
pub fn loss_pm_pinn(
    params: &FnnParams,
    aux: &PinnAuxState,
    data: &PinnData,
    w: &PinnPenaltyWeights,
) -> Result<PenaltyLoss> {
    loss_penalty_pinn(Formulation::Penalty, params, aux, data, w)
}

/// `𝒥_S`.
pub fn loss_sapm_pinn(
    params: &FnnParams,
    aux: &PinnAuxState,
    data: &PinnData,
    w: &PinnPenaltyWeights,
) -> Result<PenaltyLoss> {
    loss_penalty_pinn(Formulation::SelfAdaptive, params, aux, data, w)
}

/// Derived quantities of the self-adaptive model for block `l`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockWorkspace {
    pub l: usize,
    /// `ω_1 … ω_L`.
    pub omega: Vec<f64>,
    /// `ω̃_m = Π_{k=m+1}^{l−1}‖W_k‖²`, `m = 1..l−1`.
    pub omega_tilde: Vec<f64>,
    /// Diagonal of `Ω̃_m²` (`Σᵢ Σ_{j=m}^{l−1}‖d_{j,i}[n]‖²`), `m = 1..l−1`.
    pub omega_tilde_sq: Vec<Vec<f64>>,
    /// Diagonal of `Ω_l²`, i.e. `γ_{n,l}` (zero for `l = L`).
    pub omega_sq: Vec<f64>,
    pub eta: f64,
    /// Ridge coefficient of the `W_l` subproblem.
    pub lambda: f64,
    /// `θ_l[n] = Σ_{k=l}^{L−1}Σᵢ‖d_{k,i}[n]‖²`.
    pub theta: Vec<f64>,
    /// `δ_{n,l+1} = γ_{n,l+1}` (empty for `l = L`).
    pub delta_next: Vec<f64>,
    /// `ξ_{n,l} = Σ_{j≤l} β_j(Π_{k=j+1}^{l+1}‖W_k‖²)‖W_jA_j^(1)[n] − P_j^(1)[n]‖²` (empty for `l = L`).
    pub xi: Vec<f64>,
}

/// Literal evaluation of every block-`l` quantity of the self-adaptive model.
pub fn build_workspace(
    params: &FnnParams,
    aux: &PinnAuxState,
    data: &PinnData,
    w: &PinnPenaltyWeights,
    l: usize,
) -> Result<BlockWorkspace> {
    aux.check(params, data)?;
    let depth = params.depth();
    if l == 0 || l > depth {
        return Err(Error::Config(format!("layer index {l} out of range")));
    }
    let n1 = data.n1();
    let norms_w = params.weight_norms_sq();
    let omega = omega_weights(params);
    let tn = tangent_norms(aux);
    let gam = gamma(aux);
    let eta = if l == depth { 0.0 } else { 1.0 };

    let mut omega_tilde = vec![0.0; l.saturating_sub(1)];
    let mut omega_tilde_sq = vec![vec![0.0; n1]; l.saturating_sub(1)];
    for m in (1..l).rev() {
        omega_tilde[m - 1] = if m + 1 == l {
            1.0
        } else {
            omega_tilde[m] * norms_w[m]
        };
        for n in 0..n1 {
            let above = if m + 1 == l {
                0.0
            } else {
                omega_tilde_sq[m][n]
            };
            omega_tilde_sq[m - 1][n] = above + tn[m - 1][n];
        }
    }

    let inv1 = 1.0 / n1 as f64;
    let inv2 = w.mu / data.n2() as f64;
    let tangent_term = |m: usize| -> f64 {
        (0..data.dim())
            .map(|i| {
                big_d(params, aux, m, i)
                    .sub(&aux.d[m - 1][i])
                    .frobenius_norm_sq()
            })
            .sum::<f64>()
            * w.a(m)
    };
    let lambda = if l == 1 {
        0.0
    } else if l == 2 {
        let r = r1(params, aux, data, 1);
        inv1 * (tangent_term(1) + w.b1(1) * weighted_norm_sq(&r, &gam[0]))
            + inv2 * w.b2(1) * r2(params, aux, data, 1).frobenius_norm_sq()
    } else {
        let mut interior = 0.0;
        let mut boundary = 0.0;
        for m in 1..l {
            let ot = omega_tilde[m - 1];
            let r = r1(params, aux, data, m);
            interior += ot * tangent_term(m);
            interior += eta * ot * w.b1(m) * weighted_norm_sq(&r, &gam[l - 1]);
            interior += ot * w.b1(m) * weighted_norm_sq(&r, &omega_tilde_sq[m - 1]);
            boundary += ot * w.b2(m) * r2(params, aux, data, m).frobenius_norm_sq();
        }
        inv1 * interior + inv2 * boundary
    };

    let (delta_next, xi) = if l < depth {
        let mut xi = vec![0.0; n1];
        let mut chain = norms_w[l];
        for j in (1..=l).rev() {
            let r = r1(params, aux, data, j).col_norms_sq();
            for (x, v) in xi.iter_mut().zip(r) {
                *x += w.b1(j) * chain * v;
            }
            chain *= norms_w[j - 1];
        }
        (gam[l].clone(), xi)
    } else {
        (Vec::new(), Vec::new())
    };

    Ok(BlockWorkspace {
        l,
        omega,
        omega_tilde,
        omega_tilde_sq,
        omega_sq: gam[l - 1].clone(),
        eta,
        lambda,
        theta: gam[l - 1].clone(),
        delta_next,
        xi,
    })
}

/// Ridge coefficient of the `W_l` subproblem in the compact form
/// `Σ_{m<l} ω̃_m T_m` with `T_m` the full layer-`m` penalty (unweighted by
/// `ω_m`).
pub fn lambda_compact(
    params: &FnnParams,
    aux: &PinnAuxState,
    data: &PinnData,
    w: &PinnPenaltyWeights,
    l: usize,
) -> f64 {
    let norms_w = params.weight_norms_sq();
    let gam = gamma(aux);
    let mut lambda = 0.0;
    let mut chain = 1.0;
    for m in (1..l).rev() {
        let mut t = w.b1(m) * weighted_norm_sq(&r1(params, aux, data, m), &gam[m - 1]);
        for i in 0..data.dim() {
            t += w.a(m)
                * big_d(params, aux, m, i)
                    .sub(&aux.d[m - 1][i])
                    .frobenius_norm_sq();
        }
        let t = t / data.n1() as f64
            + w.mu * w.b2(m) * r2(params, aux, data, m).frobenius_norm_sq() / data.n2() as f64;
        lambda += chain * t;
        chain *= norms_w[m - 1];
    }
    lambda
}

/// Exact minimizer of the loss over `W_l`: the least-squares solution of the
/// stacked row system `W_l[√(α_l/N₁)Z_l  √(β_l/N₁)Ã_l  √(μβ_l^(2)/N₂)A_l^(2)  √λ_l I]
/// = [√(α_l/N₁)D_l  √(β_l/N₁)P̃_l  √(μβ_l^(2)/N₂)P_l^(2)  O]`.
///
/// For `l = 1` the block `Z_1` holds the unit vector `e_i` in every column of
/// input coordinate `i`; `Ã_l`, `P̃_l` scale column `n` by `√γ_{n,l}` (by 1
/// for PM), and PM has no ridge.
pub fn solve_w_block(
    formulation: Formulation,
    params: &mut FnnParams,
    aux: &PinnAuxState,
    data: &PinnData,
    w: &PinnPenaltyWeights,
    l: usize,
) -> Result<()> {
    let depth = params.depth();
    let dim = data.dim();
    let (n1, n2) = (data.n1(), data.n2());
    let cols_w = state_weights(formulation, aux);
    let lambda = match formulation {
        Formulation::SelfAdaptive => build_workspace(params, aux, data, w, l)?.lambda,
        Formulation::Penalty => 0.0,
    };
    let in_dim = params.weights[l - 1].cols();
    let out_dim = params.weights[l - 1].rows();
    let state_cols: Vec<usize> = if l < depth {
        (0..n1).filter(|&n| cols_w[l - 1][n] > 0.0).collect()
    } else {
        Vec::new()
    };
    let ridge = if lambda > 0.0 { in_dim } else { 0 };
    let total = dim * n1 + state_cols.len() + n2 + ridge;
    let mut a = Matrix::zeros(in_dim, total);
    let mut b = Matrix::zeros(out_dim, total);

    let s_t = (w.a(l) / n1 as f64).sqrt();
    for i in 0..dim {
        let off = i * n1;
        if l == 1 {
            for n in 0..n1 {
                a.set(i, off + n, s_t);
            }
        } else {
            let z = z_block(params, aux, l, i);
            for r in 0..in_dim {
                for n in 0..n1 {
                    a.set(r, off + n, s_t * z.get(r, n));
                }
            }
        }
        let t = &aux.d[l - 1][i];
        for r in 0..out_dim {
            for n in 0..n1 {
                b.set(r, off + n, s_t * t.get(r, n));
            }
        }
    }
    let mut off = dim * n1;
    if !state_cols.is_empty() {
        let inp = input1(params, aux, data, l);
        let s = (w.b1(l) / n1 as f64).sqrt();
        let bias = &params.biases[l - 1];
        for (k, &n) in state_cols.iter().enumerate() {
            let g = s * cols_w[l - 1][n].sqrt();
            for r in 0..in_dim {
                a.set(r, off + k, g * inp.get(r, n));
            }
            for r in 0..out_dim {
                b.set(r, off + k, g * (aux.a1[l - 1].get(r, n) - bias.get(r, 0)));
            }
        }
        off += state_cols.len();
    }
    let inp = input2(params, aux, data, l);
    let s = (w.mu * w.b2(l) / n2 as f64).sqrt();
    let bias = &params.biases[l - 1];
    for n in 0..n2 {
        for r in 0..in_dim {
            a.set(r, off + n, s * inp.get(r, n));
        }
        for r in 0..out_dim {
            let target = if l == depth {
                data.y2.get(0, n)
            } else {
                aux.a2[l - 1].get(r, n)
            };
            b.set(r, off + n, s * (target - bias.get(r, 0)));
        }
    }
    off += n2;
    if ridge > 0 {
        let root = lambda.sqrt();
        for r in 0..in_dim {
            a.set(r, off + r, root);
        }
    }
    params.weights[l - 1] = solve_row_ls(&a, &b)?;
    Ok(())
}

/// Exact minimizer over `b_l`: for `l < L` the weighted column mean of
/// `a_l^(k) − W_lA_l^(k)` with weights `β_lθ_l[n]/N₁` (interior) and
/// `μβ_l^(2)/N₂` (boundary); for `l = L` the mean of `Y^(2) − W_LA_L^(2)`.
pub fn solve_b_block(
    formulation: Formulation,
    params: &mut FnnParams,
    aux: &PinnAuxState,
    data: &PinnData,
    w: &PinnPenaltyWeights,
    l: usize,
) -> Result<()> {
    let depth = params.depth();
    let wl = &params.weights[l - 1];
    let bnd = if l == depth {
        data.y2.sub(&wl.matmul(&input2(params, aux, data, l)))
    } else {
        aux.a2[l - 1].sub(&wl.matmul(&input2(params, aux, data, l)))
    };
    let rows = wl.rows();
    let mut num = vec![0.0; rows];
    let c2 = w.mu * w.b2(l) / data.n2() as f64;
    let mut den = c2 * data.n2() as f64;
    for (r, acc) in num.iter_mut().enumerate() {
        *acc = c2 * bnd.row(r).iter().sum::<f64>();
    }
    if l < depth {
        let theta = &state_weights(formulation, aux)[l - 1];
        let inner = aux.a1[l - 1].sub(&wl.matmul(&input1(params, aux, data, l)));
        let c1 = w.b1(l) / data.n1() as f64;
        den += c1 * theta.iter().sum::<f64>();
        for (r, acc) in num.iter_mut().enumerate() {
            *acc += c1
                * inner
                    .row(r)
                    .iter()
                    .zip(theta)
                    .map(|(v, t)| v * t)
                    .sum::<f64>();
        }
    }
    params.biases[l - 1] = Matrix::from_vec(rows, 1, num.iter().map(|v| v / den).collect())?;
    Ok(())
}

/// Exact minimizer over `d_{l,i}[n]` for `l < L`, all `i` and `n`: the
/// least-squares solution of
/// `[√α_{l+1}W_{l+1}diag(σ′(a_l^(1)[n])); √α_l κI; √ξ_{n,l}I] d = [√α_{l+1}d_{l+1,i}[n]; √α_l κD_{l,i}[n]; 0]`
/// with `κ = ‖W_{l+1}‖` for SAPM (`1` and `ξ = 0` for PM), solved through its
/// normal equations.
pub fn solve_d_block(
    formulation: Formulation,
    params: &FnnParams,
    aux: &mut PinnAuxState,
    data: &PinnData,
    w: &PinnPenaltyWeights,
    l: usize,
) -> Result<()> {
    let depth = params.depth();
    if l == depth {
        solve_d_last(params, aux, data, w);
        return Ok(());
    }
    let dim = data.dim();
    let n1 = data.n1();
    let act = params.activation;
    let wn = &params.weights[l];
    let m = wn.cols();
    let rows = wn.rows();
    let (kappa2, xi) = match formulation {
        Formulation::SelfAdaptive => (
            wn.frobenius_norm_sq(),
            build_workspace(params, aux, data, w, l)?.xi,
        ),
        Formulation::Penalty => (1.0, vec![0.0; n1]),
    };
    let (alpha, alpha_next) = (w.a(l), w.a(l + 1));
    let gram = wn.tr_matmul(wn);
    let anchors: Vec<Matrix> = (0..dim).map(|i| big_d(params, aux, l, i)).collect();
    let sp = aux.a1[l - 1].map(|z| act.deriv(z));
    let mut g = vec![0.0; m * m];
    let mut rhs = vec![0.0; m * dim];
    let mut wt = vec![0.0; m];
    for n in 0..n1 {
        let s: Vec<f64> = (0..m).map(|k| sp.get(k, n)).collect();
        let shift = alpha * kappa2 + xi[n];
        for r in 0..m {
            for c in 0..m {
                g[r * m + c] = alpha_next * s[r] * gram.get(r, c) * s[c];
            }
            g[r * m + r] += shift;
        }
        for i in 0..dim {
            let next = &aux.d[l][i];
            wt.iter_mut().for_each(|v| *v = 0.0);
            for r in 0..rows {
                let t = next.get(r, n);
                for (k, wk) in wn.row(r).iter().enumerate() {
                    wt[k] += wk * t;
                }
            }
            for k in 0..m {
                rhs[i * m + k] = alpha_next * s[k] * wt[k] + alpha * kappa2 * anchors[i].get(k, n);
            }
        }
        if !solve_spd(&mut g, m, &mut rhs, dim) {
            stacked_d_solve(
                wn, &s, alpha, alpha_next, kappa2, xi[n], aux, &anchors, l, n, &mut rhs,
            )?;
        }
        for i in 0..dim {
            for k in 0..m {
                aux.d[l - 1][i].set(k, n, rhs[i * m + k]);
            }
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn stacked_d_solve(
    wn: &Matrix,
    s: &[f64],
    alpha: f64,
    alpha_next: f64,
    kappa2: f64,
    xi: f64,
    aux: &PinnAuxState,
    anchors: &[Matrix],
    l: usize,
    n: usize,
    out: &mut [f64],
) -> Result<()> {
    // transpose of the stacked column system, solved as a row system
    let m = s.len();
    let rows = wn.rows();
    let (sa, sk, sx) = (alpha_next.sqrt(), (alpha * kappa2).sqrt(), xi.sqrt());
    let k = rows + 2 * m;
    let mut a = Matrix::zeros(m, k);
    for r in 0..rows {
        for c in 0..m {
            a.set(c, r, sa * wn.get(r, c) * s[c]);
        }
    }
    for c in 0..m {
        a.set(c, rows + c, sk);
        a.set(c, rows + m + c, sx);
    }
    for (i, anchor) in anchors.iter().enumerate() {
        let mut b = Matrix::zeros(1, k);
        for r in 0..rows {
            b.set(0, r, sa * aux.d[l][i].get(r, n));
        }
        for c in 0..m {
            b.set(0, rows + c, sk * anchor.get(c, n));
        }
        let x = solve_row_ls(&a, &b)?;
        out[i * m..(i + 1) * m].copy_from_slice(x.as_slice());
    }
    Ok(())
}

/// Exact minimizer over `d_{L,·}[n]`: `|Σᵢcᵢd_i − y_n|² + α_LΣᵢ|d_i − D_{L,i}[n]|²`,
/// i.e. `d = D + c(y − c·D)/(α_L + |c|²)`.
pub fn solve_d_last(
    params: &FnnParams,
    aux: &mut PinnAuxState,
    data: &PinnData,
    w: &PinnPenaltyWeights,
) {
    let depth = params.depth();
    let dim = data.dim();
    let alpha = w.a(depth);
    let anchors: Vec<Matrix> = (0..dim).map(|i| big_d(params, aux, depth, i)).collect();
    for n in 0..data.n1() {
        let mut fit = data.y1.get(0, n);
        let mut c2 = alpha;
        for (i, anchor) in anchors.iter().enumerate() {
            let c = data.coeff.get(i, n);
            fit -= c * anchor.get(0, n);
            c2 += c * c;
        }
        let k = fit / c2;
        for (i, anchor) in anchors.iter().enumerate() {
            aux.d[depth - 1][i].set(0, n, anchor.get(0, n) + data.coeff.get(i, n) * k);
        }
    }
}

/// Column-separable objective of one auxiliary block, scaled so that the
/// proximity term reads `κ²β_l‖a − c‖²`:
///
/// `F_n(v) = p_n‖v − c_n‖² + f_n‖Wσ(v) − t_n‖² + αΣᵢ‖W(σ′(v) ∗ d_{i,n}) − e_{i,n}‖²`.
///
/// Matrices are stored transposed so column `n` is a contiguous row.
struct ColumnBlock {
    act: Activation,
    w: Matrix,
    prox: Vec<f64>,
    anchor: Matrix,
    fit: Vec<f64>,
    target: Matrix,
    alpha: f64,
    tang: Vec<Matrix>,
    tang_next: Vec<Matrix>,
}

impl ColumnBlock {
    fn interior(
        formulation: Formulation,
        params: &FnnParams,
        aux: &PinnAuxState,
        data: &PinnData,
        w: &PinnPenaltyWeights,
        l: usize,
    ) -> Result<Self> {
        require_smooth(params.activation)?;
        let depth = params.depth();
        let wn = &params.weights[l];
        let kappa2 = kappa_sq(formulation, wn);
        let cols = state_weights(formulation, aux);
        let anchor = params.weights[l - 1]
            .matmul(&input1(params, aux, data, l))
            .add_col(&params.biases[l - 1]);
        let (fit, target) = if l + 1 < depth {
            let t = aux.a1[l].sub(&Matrix::zeros(wn.rows(), data.n1()).add_col(&params.biases[l]));
            (
                cols[l].iter().map(|g| w.b1(l + 1) * g).collect(),
                t.transpose(),
            )
        } else {
            (vec![0.0; data.n1()], Matrix::zeros(data.n1(), 1))
        };
        Ok(Self {
            act: params.activation,
            w: wn.clone(),
            prox: cols[l - 1].iter().map(|g| kappa2 * w.b1(l) * g).collect(),
            anchor: anchor.transpose(),
            fit,
            target,
            alpha: w.a(l + 1),
            tang: aux.d[l - 1].iter().map(Matrix::transpose).collect(),
            tang_next: aux.d[l].iter().map(Matrix::transpose).collect(),
        })
    }

    fn boundary(
        formulation: Formulation,
        params: &FnnParams,
        aux: &PinnAuxState,
        data: &PinnData,
        w: &PinnPenaltyWeights,
        l: usize,
    ) -> Self {
        let depth = params.depth();
        let n2 = data.n2();
        let wn = &params.weights[l];
        let kappa2 = kappa_sq(formulation, wn);
        let anchor = params.weights[l - 1]
            .matmul(&input2(params, aux, data, l))
            .add_col(&params.biases[l - 1]);
        let next = if l + 1 == depth { &data.y2 } else { &aux.a2[l] };
        let target = next.sub(&Matrix::zeros(wn.rows(), n2).add_col(&params.biases[l]));
        Self {
            act: params.activation,
            w: wn.clone(),
            prox: vec![kappa2 * w.b2(l); n2],
            anchor: anchor.transpose(),
            fit: vec![w.b2(l + 1); n2],
            target: target.transpose(),
            alpha: 0.0,
            tang: Vec::new(),
            tang_next: Vec::new(),
        }
    }

    fn n(&self) -> usize {
        self.anchor.rows()
    }

    fn value(&self, n: usize, v: &[f64]) -> f64 {
        self.value_in(n, v, &mut Vec::with_capacity(v.len()))
    }

    fn value_in(&self, n: usize, v: &[f64], buf: &mut Vec<f64>) -> f64 {
        let m = v.len();
        buf.resize(3 * m, 0.0);
        let (s, rest) = buf.split_at_mut(m);
        let (sp, u) = rest.split_at_mut(m);
        for k in 0..m {
            (s[k], sp[k]) = self.act.eval_deriv(v[k]);
        }
        let c = self.anchor.row(n);
        let mut total = self.prox[n] * v.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        if self.fit[n] != 0.0 {
            let t = self.target.row(n);
            let mut acc = 0.0;
            for r in 0..self.w.rows() {
                let res = crate::linalg::dot(self.w.row(r), s) - t[r];
                acc += res * res;
            }
            total += self.fit[n] * acc;
        }
        if self.alpha != 0.0 {
            let mut acc = 0.0;
            for (d, e) in self.tang.iter().zip(&self.tang_next) {
                for ((u, a), b) in u.iter_mut().zip(sp.iter()).zip(d.row(n)) {
                    *u = a * b;
                }
                let e = e.row(n);
                for r in 0..self.w.rows() {
                    let res = crate::linalg::dot(self.w.row(r), u) - e[r];
                    acc += res * res;
                }
            }
            total += self.alpha * acc;
        }
        total
    }

    fn gradient(&self, n: usize, v: &[f64]) -> Vec<f64> {
        let m = v.len();
        let c = self.anchor.row(n);
        let mut g: Vec<f64> = v
            .iter()
            .zip(c)
            .map(|(a, b)| 2.0 * self.prox[n] * (a - b))
            .collect();
        let sp: Vec<f64> = v.iter().map(|&z| self.act.deriv(z)).collect();
        if self.fit[n] != 0.0 {
            let s: Vec<f64> = v.iter().map(|&z| self.act.eval(z)).collect();
            let t = self.target.row(n);
            for r in 0..self.w.rows() {
                let wr = self.w.row(r);
                let res = 2.0 * self.fit[n] * (crate::linalg::dot(wr, &s) - t[r]);
                for k in 0..m {
                    g[k] += res * wr[k] * sp[k];
                }
            }
        }
        if self.alpha != 0.0 {
            let spp: Vec<f64> = v
                .iter()
                .map(|&z| self.act.second_deriv(z).unwrap_or(0.0))
                .collect();
            for (d, e) in self.tang.iter().zip(&self.tang_next) {
                let d = d.row(n);
                let u: Vec<f64> = sp.iter().zip(d).map(|(a, b)| a * b).collect();
                let e = e.row(n);
                for r in 0..self.w.rows() {
                    let wr = self.w.row(r);
                    let res = 2.0 * self.alpha * (crate::linalg::dot(wr, &u) - e[r]);
                    for k in 0..m {
                        g[k] += res * wr[k] * d[k] * spp[k];
                    }
                }
            }
        }
        g
    }

    fn gradient_matrix(&self, current: &Matrix) -> Matrix {
        let mut g = Matrix::zeros(current.rows(), current.cols());
        for n in 0..self.n() {
            g.set_col(n, &self.gradient(n, &current.col(n)));
        }
        g
    }

    fn total(&self, current: &Matrix) -> f64 {
        (0..self.n()).map(|n| self.value(n, &current.col(n))).sum()
    }

    fn step(&self, current: &mut Matrix, armijo: &Armijo) -> usize {
        let mut accepted = 0;
        let mut buf = Vec::with_capacity(3 * current.rows());
        for n in 0..self.n() {
            let mut v = current.col(n);
            let g = self.gradient(n, &v);
            let f0 = self.value(n, &v);
            if armijo.step(&mut v, &g, f0, |t| self.value_in(n, t, &mut buf)) {
                current.set_col(n, &v);
                accepted += 1;
            }
        }
        accepted
    }
}

fn kappa_sq(formulation: Formulation, w_next: &Matrix) -> f64 {
    match formulation {
        Formulation::SelfAdaptive => w_next.frobenius_norm_sq(),
        Formulation::Penalty => 1.0,
    }
}

fn check_aux_layer(params: &FnnParams, l: usize) -> Result<()> {
    if l == 0 || l >= params.depth() {
        return Err(Error::Config(format!("auxiliary layer {l} out of range")));
    }
    Ok(())
}

/// `(N₁/ω_{l+1})∇_{a_l^(1)}` of the penalty loss (`N₁∇` for PM), column `n`
/// being the gradient with respect to `a_l^(1)[n]`.
pub fn grad_a1(
    formulation: Formulation,
    params: &FnnParams,
    aux: &PinnAuxState,
    data: &PinnData,
    w: &PinnPenaltyWeights,
    l: usize,
) -> Result<Matrix> {
    check_aux_layer(params, l)?;
    aux.check(params, data)?;
    let block = ColumnBlock::interior(formulation, params, aux, data, w, l)?;
    Ok(block.gradient_matrix(&aux.a1[l - 1]))
}

/// `(N₂/(μω_{l+1}))∇_{a_l^(2)}` of the penalty loss.
pub fn grad_a2(
    formulation: Formulation,
    params: &FnnParams,
    aux: &PinnAuxState,
    data: &PinnData,
    w: &PinnPenaltyWeights,
    l: usize,
) -> Result<Matrix> {
    check_aux_layer(params, l)?;
    aux.check(params, data)?;
    let block = ColumnBlock::boundary(formulation, params, aux, data, w, l);
    Ok(block.gradient_matrix(&aux.a2[l - 1]))
}

/// The part of the penalty loss that depends on `a_l^(1)`, scaled as in
/// [`grad_a1`].
pub fn block_objective_a1(
    formulation: Formulation,
    params: &FnnParams,
    aux: &PinnAuxState,
    data: &PinnData,
    w: &PinnPenaltyWeights,
    l: usize,
) -> Result<f64> {
    check_aux_layer(params, l)?;
    aux.check(params, data)?;
    Ok(ColumnBlock::interior(formulation, params, aux, data, w, l)?.total(&aux.a1[l - 1]))
}

/// The part of the penalty loss that depends on `a_l^(2)`, scaled as in
/// [`grad_a2`].
pub fn block_objective_a2(
    formulation: Formulation,
    params: &FnnParams,
    aux: &PinnAuxState,
    data: &PinnData,
    w: &PinnPenaltyWeights,
    l: usize,
) -> Result<f64> {
    check_aux_layer(params, l)?;
    aux.check(params, data)?;
    Ok(ColumnBlock::boundary(formulation, params, aux, data, w, l).total(&aux.a2[l - 1]))
}

#[allow(clippy::too_many_arguments)]
pub fn step_a1(
    formulation: Formulation,
    params: &FnnParams,
    aux: &mut PinnAuxState,
    data: &PinnData,
    w: &PinnPenaltyWeights,
    l: usize,
    armijo: &Armijo,
) -> Result<usize> {
    check_aux_layer(params, l)?;
    let block = ColumnBlock::interior(formulation, params, aux, data, w, l)?;
    Ok(block.step(&mut aux.a1[l - 1], armijo))
}

#[allow(clippy::too_many_arguments)]
pub fn step_a2(
    formulation: Formulation,
    params: &FnnParams,
    aux: &mut PinnAuxState,
    data: &PinnData,
    w: &PinnPenaltyWeights,
    l: usize,
    armijo: &Armijo,
) -> Result<usize> {
    check_aux_layer(params, l)?;
    let block = ColumnBlock::boundary(formulation, params, aux, data, w, l);
    Ok(block.step(&mut aux.a2[l - 1], armijo))
}

/// `𝒥` and its gradient with respect to every `W_l`, `b_l`.
pub fn loss_j_gradient(
    params: &FnnParams,
    data: &PinnData,
    mu: f64,
) -> Result<(PinnLoss, FnnGradient)> {
    let depth = params.depth();
    let dim = data.dim();
    let act = params.activation;
    let n1 = data.n1() as f64;
    let trace = tangent_forward(params, &data.x1)?;
    let phi = combine_tangents(&data.coeff, &trace.tangents[depth - 1]);
    let res = phi.sub(&data.y1);
    let interior = res.frobenius_norm_sq() / n1;

    let mut gw: Vec<Matrix> = params
        .weights
        .iter()
        .map(|w| Matrix::zeros(w.rows(), w.cols()))
        .collect();
    let mut gb: Vec<Matrix> = params
        .biases
        .iter()
        .map(|b| Matrix::zeros(b.rows(), 1))
        .collect();
    // adjoints of d_{l,i} and of the pre-activations a_l
    let mut gt: Vec<Matrix> = (0..dim)
        .map(|i| {
            Matrix::from_fn(1, data.n1(), |_, n| {
                2.0 / n1 * res.get(0, n) * data.coeff.get(i, n)
            })
        })
        .collect();
    let mut gz: Option<Matrix> = None;
    for l in (2..=depth).rev() {
        let wl = &params.weights[l - 1];
        let z = &trace.pre[l - 2];
        let sp = act.apply_deriv(z);
        let spp = z.map(|v| act.second_deriv(v).unwrap_or(0.0));
        let mut gz_prev = Matrix::zeros(z.rows(), z.cols());
        if let Some(g) = &gz {
            let h = act.apply(z);
            gw[l - 1].add_assign(&g.matmul_tr(&h));
            gb[l - 1].add_assign(&g.row_sums());
            gz_prev = wl.tr_matmul(g).zip_map(&sp, |a, b| a * b);
        }
        let mut next = Vec::with_capacity(dim);
        for (i, g) in gt.iter().enumerate() {
            let t = &trace.tangents[l - 2][i];
            let u = sp.zip_map(t, |a, b| a * b);
            gw[l - 1].add_assign(&g.matmul_tr(&u));
            let gu = wl.tr_matmul(g);
            let curv = t.zip_map(&spp, |a, b| a * b);
            gz_prev.add_assign(&gu.zip_map(&curv, |a, b| a * b));
            next.push(gu.zip_map(&sp, |a, b| a * b));
        }
        gt = next;
        gz = Some(gz_prev);
    }
    for (i, g) in gt.iter().enumerate() {
        let sums = g.row_sums();
        for r in 0..gw[0].rows() {
            let v = gw[0].get(r, i) + sums.get(r, 0);
            gw[0].set(r, i, v);
        }
    }
    if let Some(g) = &gz {
        gw[0].add_assign(&g.matmul_tr(&data.x1));
        gb[0].add_assign(&g.row_sums());
    }

    let trace2 = forward(params, &data.x2)?;
    let res2 = trace2.output.sub(&data.y2);
    let n2 = data.n2() as f64;
    let boundary = res2.frobenius_norm_sq() / n2;
    let g2 = backprop(params, &data.x2, &trace2, res2.scale(2.0 * mu / n2));
    for l in 0..depth {
        gw[l].add_assign(&g2.weights[l]);
        gb[l].add_assign(&g2.biases[l]);
    }
    let total = interior + mu * boundary;
    if !total.is_finite() {
        return Err(Error::NonFinite("physics-informed loss".into()));
    }
    Ok((
        PinnLoss {
            total,
            interior,
            boundary,
        },
        FnnGradient {
            weights: gw,
            biases: gb,
        },
    ))
}

/// `C̃` bounding `𝒥 ≤ C̃·d·L(L+1)·𝒥_S` for smooth activations with
/// constants `(B_σ′, C_σ, C_σ′)` and coefficients bounded by `B_c`.
pub fn pinn_bound_constant(
    act: Activation,
    depth: usize,
    bound_c: f64,
    w: &PinnPenaltyWeights,
) -> Result<f64> {
    let (b, c, cp) = act.smooth_constants().ok_or(Error::UnsupportedActivation(
        act,
        "physics-informed networks",
    ))?;
    let l = depth as i32;
    let bc2 = bound_c * bound_c;
    let inv1 = w
        .alpha1
        .iter()
        .chain(&w.beta1)
        .fold(1.0f64, |m, v| m.max(1.0 / v));
    let inv2 = w.beta2.iter().fold(1.0f64, |m, v| m.max(1.0 / v));
    let interior = [
        1.0,
        bc2,
        bc2 * b.powi(2 * l - 2),
        bc2 * cp * cp * b.powi(2 * l - 4).max(c.powi(2 * l - 4)),
        bc2 * cp * cp * b.powi(2 * l - 6).max(c.powi(2 * l - 6)),
    ]
    .into_iter()
    .fold(0.0f64, f64::max);
    let boundary = 1f64.max(c.powi(2 * l - 2));
    Ok((inv1 * interior).max(inv2 * boundary))
}

/// One recorded iterate of a PINN solver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PinnTraceRow {
    pub iter: usize,
    /// The loss being minimized (`𝒥`, `𝒥_P` or `𝒥_S`).
    pub actual: f64,
    /// `𝒥` of the network itself and its two parts.
    pub j: f64,
    pub j1: f64,
    pub j2: f64,
    /// `𝒥 / (C̃·d·L(L+1)·actual)`.
    pub bound_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PinnSolverConfig {
    pub depth: usize,
    pub width: usize,
    pub iterations: usize,
    pub weights: PinnPenaltyWeights,
    pub armijo: Armijo,
    pub lr0: f64,
    pub lr_decay: f64,
    /// Bound on the transport coefficients, for the trace's bound ratio.
    pub bound_c: f64,
}

impl PinnSolverConfig {
    pub fn new(depth: usize, width: usize, iterations: usize) -> Self {
        Self {
            depth,
            width,
            iterations,
            weights: PinnPenaltyWeights::unit(depth),
            armijo: Armijo::default(),
            lr0: 1e-3,
            lr_decay: 1e4,
            bound_c: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 || self.width == 0 {
            return Err(Error::Config("need depth ≥ 2 and width ≥ 1".into()));
        }
        self.weights.validate(self.depth)?;
        let a = &self.armijo;
        if !(a.tau > 0.0) || !(a.factor > 0.0 && a.factor < 1.0) || !(a.c > 0.0 && a.c < 1.0) {
            return Err(Error::Config("invalid line-search constants".into()));
        }
        if !(self.lr0 > 0.0) || !(self.lr_decay > 0.0) || !(self.bound_c >= 0.0) {
            return Err(Error::Config(
                "invalid learning-rate schedule or coefficient bound".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct PinnRun {
    pub params: FnnParams,
    pub aux: Option<PinnAuxState>,
    pub trace: Vec<PinnTraceRow>,
}

impl PinnRun {
    pub fn initial(&self) -> &PinnTraceRow {
        &self.trace[0]
    }

    pub fn last(&self) -> &PinnTraceRow {
        self.trace.last().unwrap()
    }
}

/// Initial network and auxiliaries for one seed: parameters, then `a^(1)`,
/// `a^(2)` and `d`, all from the same stream.
pub fn initial_pinn_state(
    cfg: &PinnSolverConfig,
    data: &PinnData,
    rng: &mut Stream,
) -> (FnnParams, PinnAuxState) {
    let params = init_params(cfg.depth, cfg.width, data.dim(), Activation::Sin, rng);
    let aux = PinnAuxState::random(cfg.depth, cfg.width, data.dim(), data.n1(), data.n2(), rng);
    (params, aux)
}

fn blowup(iteration: usize, block: String) -> Error {
    Error::Blowup { iteration, block }
}

fn ensure_finite(m: &Matrix, iteration: usize, block: impl FnOnce() -> String) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(blowup(iteration, block()))
    }
}

fn record(
    formulation: Option<Formulation>,
    params: &FnnParams,
    aux: Option<&PinnAuxState>,
    data: &PinnData,
    cfg: &PinnSolverConfig,
    bound: f64,
    iter: usize,
) -> Result<PinnTraceRow> {
    let j = loss_j(params, data, cfg.weights.mu)
        .map_err(|_| blowup(iter, "physics-informed loss".into()))?;
    let actual = match (formulation, aux) {
        (Some(f), Some(aux)) => loss_penalty_pinn(f, params, aux, data, &cfg.weights)?.total,
        _ => j.total,
    };
    if !actual.is_finite() {
        return Err(blowup(iter, "loss".into()));
    }
    let denom = bound * actual;
    let bound_ratio = if denom > 0.0 {
        j.total / denom
    } else if j.total == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(PinnTraceRow {
        iter,
        actual,
        j: j.total,
        j1: j.interior,
        j2: j.boundary,
        bound_ratio,
    })
}

fn bound_factor(cfg: &PinnSolverConfig, dim: usize) -> Result<f64> {
    let c = pinn_bound_constant(Activation::Sin, cfg.depth, cfg.bound_c, &cfg.weights)?;
    Ok(c * (dim * cfg.depth * (cfg.depth + 1)) as f64)
}

/// One alternating sweep: `W_L`, `b_L`, `d_L`, then for `l = L−1 … 1` the
/// blocks `W_l`, `b_l`, `d_l`, `a_l^(1)`, `a_l^(2)`.
pub fn pinn_sweep(
    formulation: Formulation,
    cfg: &PinnSolverConfig,
    params: &mut FnnParams,
    aux: &mut PinnAuxState,
    data: &PinnData,
    k: usize,
) -> Result<()> {
    let depth = params.depth();
    let w = &cfg.weights;
    for l in (1..=depth).rev() {
        solve_w_block(formulation, params, aux, data, w, l)?;
        ensure_finite(&params.weights[l - 1], k, || format!("W{l}"))?;
        solve_b_block(formulation, params, aux, data, w, l)?;
        ensure_finite(&params.biases[l - 1], k, || format!("b{l}"))?;
        solve_d_block(formulation, params, aux, data, w, l)?;
        for t in &aux.d[l - 1] {
            ensure_finite(t, k, || format!("d{l}"))?;
        }
        if l < depth {
            step_a1(formulation, params, aux, data, w, l, &cfg.armijo)?;
            ensure_finite(&aux.a1[l - 1], k, || format!("a{l}(1)"))?;
            step_a2(formulation, params, aux, data, w, l, &cfg.armijo)?;
            ensure_finite(&aux.a2[l - 1], k, || format!("a{l}(2)"))?;
        }
    }
    Ok(())
}

pub fn alternating_pinn_run(
    formulation: Formulation,
    cfg: &PinnSolverConfig,
    mut params: FnnParams,
    mut aux: PinnAuxState,
    data: &PinnData,
) -> Result<PinnRun> {
    cfg.validate()?;
    params.validate()?;
    require_smooth(params.activation)?;
    aux.check(&params, data)?;
    let bound = bound_factor(cfg, data.dim())?;
    let mut trace = Vec::with_capacity(cfg.iterations + 1);
    trace.push(record(
        Some(formulation),
        &params,
        Some(&aux),
        data,
        cfg,
        bound,
        0,
    )?);
    for k in 1..=cfg.iterations {
        pinn_sweep(formulation, cfg, &mut params, &mut aux, data, k)?;
        trace.push(record(
            Some(formulation),
            &params,
            Some(&aux),
            data,
            cfg,
            bound,
            k,
        )?);
    }
    Ok(PinnRun {
        params,
        aux: Some(aux),
        trace,
    })
}

pub fn sapm_pinn_run(
    cfg: &PinnSolverConfig,
    params: FnnParams,
    aux: PinnAuxState,
    data: &PinnData,
) -> Result<PinnRun> {
    alternating_pinn_run(Formulation::SelfAdaptive, cfg, params, aux, data)
}

pub fn pm_pinn_run(
    cfg: &PinnSolverConfig,
    params: FnnParams,
    aux: PinnAuxState,
    data: &PinnData,
) -> Result<PinnRun> {
    alternating_pinn_run(Formulation::Penalty, cfg, params, aux, data)
}

/// Full-batch gradient descent on `𝒥` with `τ_k = lr0/(1 + k/lr_decay)`.
pub fn ls_pinn_run(
    cfg: &PinnSolverConfig,
    mut params: FnnParams,
    data: &PinnData,
) -> Result<PinnRun> {
    cfg.validate()?;
    params.validate()?;
    require_smooth(params.activation)?;
    let bound = bound_factor(cfg, data.dim())?;
    let mut trace = Vec::with_capacity(cfg.iterations + 1);
    trace.push(record(None, &params, None, data, cfg, bound, 0)?);
    for k in 1..=cfg.iterations {
        let lr = cfg.lr0 / (1.0 + (k - 1) as f64 / cfg.lr_decay);
        let (_, g) = loss_j_gradient(&params, data, cfg.weights.mu)
            .map_err(|_| blowup(k, "gradient".into()))?;
        for l in 0..params.depth() {
            params.weights[l].axpy(-lr, &g.weights[l]);
            params.biases[l].axpy(-lr, &g.biases[l]);
            ensure_finite(&params.weights[l], k, || format!("W{}", l + 1))?;
        }
        trace.push(record(None, &params, None, data, cfg, bound, k)?);
    }
    Ok(PinnRun {
        params,
        aux: None,
        trace,
    })
}
