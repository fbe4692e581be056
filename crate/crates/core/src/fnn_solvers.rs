//! Training formulations for fully-connected networks.
//!
//! * LS: full-batch gradient descent on `𝓛 = (1/N)‖φ(X) − Y‖²`.
//! * PM: alternating minimization of the penalty loss `𝓛_P`.
//! * SAPM: alternating minimization of the weighted penalty loss `𝓛_S`,
//!   where the penalty on layer `l` carries `ω_l = Π_{j>l}‖W_j‖²`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fnn::{forward, init_params, mse_gradient, Activation, FnnParams};
use crate::linalg::{solve_ridge_row_ls, Matrix};
use crate::rng::Stream;

/// Auxiliary pre-activations `a_1 … a_{L−1}`, each `M×N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FnnAuxState {
    pub a: Vec<Matrix>,
}

impl FnnAuxState {
    /// Entries i.i.d. `U(−1, 1)`, drawn `a_1` first, each row-major.
    pub fn random(depth: usize, width: usize, n: usize, rng: &mut Stream) -> Self {
        Self {
            a: (1..depth)
                .map(|_| rng.uniform_matrix(width, n, -1.0, 1.0))
                .collect(),
        }
    }

    /// The pre-activations of the network itself, so every penalty vanishes.
    pub fn feasible(params: &FnnParams, x: &Matrix) -> Result<Self> {
        Ok(Self {
            a: forward(params, x)?.pre,
        })
    }

    pub fn zeros(depth: usize, width: usize, n: usize) -> Self {
        Self {
            a: (1..depth).map(|_| Matrix::zeros(width, n)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyWeights {
    /// `β_1 … β_{L−1}`.
    pub beta: Vec<f64>,
}

impl PenaltyWeights {
    pub fn unit(depth: usize) -> Self {
        Self {
            beta: vec![1.0; depth - 1],
        }
    }

    pub fn validate(&self, depth: usize) -> Result<()> {
        if self.beta.len() + 1 != depth {
            return Err(Error::Config(format!(
                "expected {} penalty weights, got {}",
                depth - 1,
                self.beta.len()
            )));
        }
        if let Some(b) = self.beta.iter().find(|b| !(**b > 0.0) || !b.is_finite()) {
            return Err(Error::Config(format!("penalty weight {b} is not positive")));
        }
        Ok(())
    }

    /// `β_l` for `l = 1..L`, with `β_L = 1` for the data-fit term.
    pub fn at(&self, l: usize) -> f64 {
        if l > self.beta.len() {
            1.0
        } else {
            self.beta[l - 1]
        }
    }
}

/// Which penalty loss an alternating solver minimizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    Penalty,
    SelfAdaptive,
}

/// `ω_1 … ω_L` with `ω_l = Π_{j=l+1}^{L}‖W_j‖²` and `ω_L = 1`.
pub fn omega_weights(params: &FnnParams) -> Vec<f64> {
    let norms = params.weight_norms_sq();
    let depth = norms.len();
    let mut omega = vec![1.0; depth];
    for l in (0..depth - 1).rev() {
        omega[l] = omega[l + 1] * norms[l + 1];
    }
    omega
}

fn layer_input<'a>(
    params: &FnnParams,
    aux: &'a FnnAuxState,
    x: &'a Matrix,
    l: usize,
) -> LayerInput<'a> {
    if l == 1 {
        LayerInput::Borrowed(x)
    } else {
        LayerInput::Owned(params.activation.apply(&aux.a[l - 2]))
    }
}

enum LayerInput<'a> {
    Borrowed(&'a Matrix),
    Owned(Matrix),
}

impl std::ops::Deref for LayerInput<'_> {
    type Target = Matrix;
    fn deref(&self) -> &Matrix {
        match self {
            LayerInput::Borrowed(m) => m,
            LayerInput::Owned(m) => m,
        }
    }
}

/// Target `P_l`: `a_l − b_l𝟙ᵀ` for hidden layers, `Y − b_L𝟙ᵀ` for the last.
fn target(params: &FnnParams, aux: &FnnAuxState, y: &Matrix, l: usize) -> Matrix {
    let b = params.biases[l - 1].scale(-1.0);
    if l == params.depth() {
        y.add_col(&b)
    } else {
        aux.a[l - 1].add_col(&b)
    }
}

/// `W_lA_l + b_l𝟙ᵀ − a_l` for every layer, the last one against `Y`.
pub fn residuals(
    params: &FnnParams,
    aux: &FnnAuxState,
    x: &Matrix,
    y: &Matrix,
) -> Result<Vec<Matrix>> {
    check_state(params, aux, x, y)?;
    Ok((1..=params.depth())
        .map(|l| {
            let input = layer_input(params, aux, x, l);
            params.weights[l - 1]
                .matmul(&input)
                .add_col(&params.biases[l - 1])
                .sub(if l == params.depth() {
                    y
                } else {
                    &aux.a[l - 1]
                })
        })
        .collect())
}

fn check_state(params: &FnnParams, aux: &FnnAuxState, x: &Matrix, y: &Matrix) -> Result<()> {
    let n = x.cols();
    if aux.a.len() + 1 != params.depth()
        || aux.a.iter().any(|a| a.shape() != (params.width(), n))
        || y.shape() != (1, n)
        || x.rows() != params.input_dim()
    {
        return Err(Error::Shape(
            "auxiliary state does not match network and data".into(),
        ));
    }
    Ok(())
}

fn weighted_loss(residuals: &[Matrix], beta: &PenaltyWeights, omega: Option<&[f64]>) -> f64 {
    let depth = residuals.len();
    let n = residuals[0].cols() as f64;
    let mut total = residuals[depth - 1].frobenius_norm_sq();
    for l in 1..depth {
        let w = omega.map_or(1.0, |o| o[l - 1]);
        total += beta.at(l) * w * residuals[l - 1].frobenius_norm_sq();
    }
    total / n
}

/// `𝓛_P = (1/N)[‖W_Lσ(a_{L−1}) + b_L𝟙ᵀ − Y‖² + Σ_l β_l‖R_l‖²]`.
pub fn loss_pm(
    params: &FnnParams,
    aux: &FnnAuxState,
    x: &Matrix,
    y: &Matrix,
    beta: &PenaltyWeights,
) -> Result<f64> {
    Ok(weighted_loss(&residuals(params, aux, x, y)?, beta, None))
}

/// `𝓛_S`: as [`loss_pm`] with penalty `l` additionally scaled by `ω_l`.
pub fn loss_sapm(
    params: &FnnParams,
    aux: &FnnAuxState,
    x: &Matrix,
    y: &Matrix,
    beta: &PenaltyWeights,
) -> Result<f64> {
    let omega = omega_weights(params);
    Ok(weighted_loss(
        &residuals(params, aux, x, y)?,
        beta,
        Some(&omega),
    ))
}

pub fn loss(
    formulation: Formulation,
    params: &FnnParams,
    aux: &FnnAuxState,
    x: &Matrix,
    y: &Matrix,
    beta: &PenaltyWeights,
) -> Result<f64> {
    match formulation {
        Formulation::Penalty => loss_pm(params, aux, x, y, beta),
        Formulation::SelfAdaptive => loss_sapm(params, aux, x, y, beta),
    }
}

/// Ridge coefficient of the `W_l` subproblem,
/// `λ_l = Σ_{m<l} β_m (Π_{k=m+1}^{l−1}‖W_k‖²) ‖W_mA_m − P_m‖²` (`l` is 1-based).
pub fn sapm_lambda(
    params: &FnnParams,
    aux: &FnnAuxState,
    x: &Matrix,
    y: &Matrix,
    beta: &PenaltyWeights,
    l: usize,
) -> Result<f64> {
    if l == 0 || l > params.depth() {
        return Err(Error::Config(format!("layer index {l} out of range")));
    }
    check_state(params, aux, x, y)?;
    let norms = params.weight_norms_sq();
    let mut lambda = 0.0;
    let mut chain = 1.0;
    for m in (1..l).rev() {
        let input = layer_input(params, aux, x, m);
        let r = params.weights[m - 1]
            .matmul(&input)
            .add_col(&params.biases[m - 1])
            .sub(&aux.a[m - 1]);
        lambda += beta.at(m) * chain * r.frobenius_norm_sq();
        chain *= norms[m - 1];
    }
    Ok(lambda)
}

/// `κ² = ‖W_{l+1}‖²` for SAPM, `1` for PM: the weight of the layer-`l`
/// penalty relative to the layer-`(l+1)` term once `𝓛` is divided by `ω_{l+1}`.
fn proximity_weight(formulation: Formulation, params: &FnnParams, l: usize) -> f64 {
    match formulation {
        Formulation::Penalty => 1.0,
        Formulation::SelfAdaptive => params.weights[l].frobenius_norm_sq(),
    }
}

/// `𝒮_l(a_l) = β_{l+1}‖W_{l+1}σ(a_l) − P_{l+1}‖² + κ²β_l‖W_lA_l + b_l𝟙ᵀ − a_l‖²`.
pub fn block_objective_a(
    formulation: Formulation,
    params: &FnnParams,
    aux: &FnnAuxState,
    x: &Matrix,
    y: &Matrix,
    beta: &PenaltyWeights,
    l: usize,
) -> Result<f64> {
    let parts = ABlock::new(formulation, params, aux, x, y, beta, l)?;
    Ok((0..parts.n())
        .map(|n| parts.column_value(n, &aux.a[l - 1].col(n)))
        .sum())
}

/// `∇_{a_l}𝒮_l = 2[β_{l+1}(W_{l+1}ᵀ(W_{l+1}σ(a_l) − P_{l+1})) ∗ σ′(a_l) + κ²β_l(a_l − W_lA_l − b_l𝟙ᵀ)]`.
pub fn grad_a(
    formulation: Formulation,
    params: &FnnParams,
    aux: &FnnAuxState,
    x: &Matrix,
    y: &Matrix,
    beta: &PenaltyWeights,
    l: usize,
) -> Result<Matrix> {
    let parts = ABlock::new(formulation, params, aux, x, y, beta, l)?;
    Ok(parts.gradient(&aux.a[l - 1]))
}

/// Fixed data of the `a_l` subproblem.
struct ABlock<'a> {
    w_next: &'a Matrix,
    target_next: Matrix,
    anchor: Matrix,
    beta_next: f64,
    prox: f64,
    act: Activation,
}

impl<'a> ABlock<'a> {
    fn new(
        formulation: Formulation,
        params: &'a FnnParams,
        aux: &FnnAuxState,
        x: &Matrix,
        y: &Matrix,
        beta: &PenaltyWeights,
        l: usize,
    ) -> Result<Self> {
        if l == 0 || l >= params.depth() {
            return Err(Error::Config(format!("auxiliary index {l} out of range")));
        }
        check_state(params, aux, x, y)?;
        let input = layer_input(params, aux, x, l);
        Ok(Self {
            w_next: &params.weights[l],
            target_next: target(params, aux, y, l + 1),
            anchor: params.weights[l - 1]
                .matmul(&input)
                .add_col(&params.biases[l - 1]),
            beta_next: beta.at(l + 1),
            prox: proximity_weight(formulation, params, l) * beta.at(l),
            act: params.activation,
        })
    }

    fn n(&self) -> usize {
        self.anchor.cols()
    }

    fn column_value(&self, n: usize, v: &[f64]) -> f64 {
        let w = self.w_next;
        let mut fit = 0.0;
        for r in 0..w.rows() {
            let mut s = -self.target_next.get(r, n);
            for (wk, vk) in w.row(r).iter().zip(v) {
                s += wk * self.act.eval(*vk);
            }
            fit += s * s;
        }
        let mut prox = 0.0;
        for (k, vk) in v.iter().enumerate() {
            let e = vk - self.anchor.get(k, n);
            prox += e * e;
        }
        self.beta_next * fit + self.prox * prox
    }

    fn gradient(&self, a: &Matrix) -> Matrix {
        let r = self
            .w_next
            .matmul(&self.act.apply(a))
            .sub(&self.target_next);
        let back = self.w_next.tr_matmul(&r);
        let mut g = back.zip_map(a, |b, z| 2.0 * self.beta_next * b * self.act.deriv(z));
        g.axpy(2.0 * self.prox, &a.sub(&self.anchor));
        g
    }
}

/// Backtracking line search: start at `tau`, shrink by `factor`, accept when
/// `f(x − t·g) ≤ f(x) − c·t·‖g‖²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Armijo {
    pub tau: f64,
    pub factor: f64,
    pub c: f64,
    pub max_backtracks: usize,
}

impl Default for Armijo {
    fn default() -> Self {
        Self {
            tau: 1.0,
            factor: 0.5,
            c: 1e-4,
            max_backtracks: 20,
        }
    }
}

impl Armijo {
    /// Updates `x` in place; returns `false` (leaving `x` untouched) when no
    /// step passes the sufficient-decrease test.
    pub fn step(
        &self,
        x: &mut [f64],
        grad: &[f64],
        f0: f64,
        mut f: impl FnMut(&[f64]) -> f64,
    ) -> bool {
        let g2: f64 = grad.iter().map(|g| g * g).sum();
        if g2 == 0.0 {
            return false;
        }
        let mut trial = vec![0.0; x.len()];
        let mut t = self.tau;
        for _ in 0..=self.max_backtracks {
            for ((tr, xi), gi) in trial.iter_mut().zip(x.iter()).zip(grad) {
                *tr = xi - t * gi;
            }
            let ft = f(&trial);
            if ft <= f0 - self.c * t * g2 {
                x.copy_from_slice(&trial);
                return true;
            }
            t *= self.factor;
        }
        false
    }
}

/// One line-searched gradient step on `a_l`, column by column. Returns the
/// number of accepted columns.
pub fn step_a(
    formulation: Formulation,
    params: &FnnParams,
    aux: &mut FnnAuxState,
    x: &Matrix,
    y: &Matrix,
    beta: &PenaltyWeights,
    l: usize,
    armijo: &Armijo,
) -> Result<usize> {
    let parts = ABlock::new(formulation, params, aux, x, y, beta, l)?;
    let a = &mut aux.a[l - 1];
    let g = parts.gradient(a);
    let mut accepted = 0;
    for n in 0..parts.n() {
        let mut v = a.col(n);
        let gn = g.col(n);
        let f0 = parts.column_value(n, &v);
        if armijo.step(&mut v, &gn, f0, |t| parts.column_value(n, t)) {
            a.set_col(n, &v);
            accepted += 1;
        }
    }
    Ok(accepted)
}

/// Exact minimizer of the loss over `W_l`: the least-squares solution of
/// `W_l[A_l √(λ_l/β_l)I] = [P_l O]` (no ridge for PM).
pub fn solve_w(
    formulation: Formulation,
    params: &mut FnnParams,
    aux: &FnnAuxState,
    x: &Matrix,
    y: &Matrix,
    beta: &PenaltyWeights,
    l: usize,
) -> Result<()> {
    let lambda = match formulation {
        Formulation::Penalty => 0.0,
        Formulation::SelfAdaptive => sapm_lambda(params, aux, x, y, beta, l)? / beta.at(l),
    };
    let input = layer_input(params, aux, x, l);
    let p = target(params, aux, y, l);
    let w = solve_ridge_row_ls(&input, &p, lambda)?;
    params.weights[l - 1] = w;
    Ok(())
}

/// Exact minimizer over `b_l`: the column mean of `a_l − W_lA_l` (or
/// `Y − W_LA_L`).
pub fn solve_b(
    params: &mut FnnParams,
    aux: &FnnAuxState,
    x: &Matrix,
    y: &Matrix,
    l: usize,
) -> Result<()> {
    let input = layer_input(params, aux, x, l);
    let lhs = if l == params.depth() {
        y
    } else {
        &aux.a[l - 1]
    };
    let r = lhs.sub(&params.weights[l - 1].matmul(&input));
    params.biases[l - 1] = r.column_mean()?;
    Ok(())
}

/// `C_{B,β} = max{1, B^{2L−2}}·max_l{1, 1/β_l}`.
pub fn fnn_bound_constant(act: Activation, depth: usize, beta: &PenaltyWeights) -> f64 {
    let b = act.lipschitz();
    let inv = beta.beta.iter().fold(1.0f64, |m, v| m.max(1.0 / v));
    1f64.max(b.powi(2 * depth as i32 - 2)) * inv
}

/// One recorded iterate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    /// The loss being minimized (`𝓛`, `𝓛_P` or `𝓛_S`).
    pub actual: f64,
    /// The mean squared loss `𝓛` of the network itself.
    pub mse: f64,
    /// `𝓛 / (C_{B,β}·L·actual)`.
    pub bound_ratio: f64,
}

/// Settings shared by the three FNN solvers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FnnSolverConfig {
    pub depth: usize,
    pub width: usize,
    pub activation: Activation,
    pub iterations: usize,
    pub beta: PenaltyWeights,
    pub armijo: Armijo,
    /// Gradient-descent schedule `τ_k = lr0/(1 + k/lr_decay)`.
    pub lr0: f64,
    pub lr_decay: f64,
}

impl FnnSolverConfig {
    pub fn new(depth: usize, width: usize, activation: Activation, iterations: usize) -> Self {
        Self {
            depth,
            width,
            activation,
            iterations,
            beta: PenaltyWeights::unit(depth),
            armijo: Armijo::default(),
            lr0: 1e-2,
            lr_decay: 1e4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 || self.width == 0 {
            return Err(Error::Config("need depth ≥ 2 and width ≥ 1".into()));
        }
        self.beta.validate(self.depth)?;
        let a = &self.armijo;
        if !(a.tau > 0.0) || !(a.factor > 0.0 && a.factor < 1.0) || !(a.c > 0.0 && a.c < 1.0) {
            return Err(Error::Config("invalid line-search constants".into()));
        }
        if !(self.lr0 > 0.0) || !(self.lr_decay > 0.0) {
            return Err(Error::Config("invalid learning-rate schedule".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct FnnRun {
    pub params: FnnParams,
    pub aux: Option<FnnAuxState>,
    pub trace: Vec<TraceRow>,
}

impl FnnRun {
    pub fn initial(&self) -> &TraceRow {
        &self.trace[0]
    }

    pub fn last(&self) -> &TraceRow {
        self.trace.last().unwrap()
    }
}

fn ratio(mse: f64, bound: f64, actual: f64) -> f64 {
    let denom = bound * actual;
    if denom > 0.0 {
        mse / denom
    } else if mse == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

fn blowup(iteration: usize, block: String) -> Error {
    Error::Blowup { iteration, block }
}

fn check_finite(m: &Matrix, iteration: usize, block: impl FnOnce() -> String) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(blowup(iteration, block()))
    }
}

fn record(
    formulation: Option<Formulation>,
    params: &FnnParams,
    aux: Option<&FnnAuxState>,
    x: &Matrix,
    y: &Matrix,
    beta: &PenaltyWeights,
    bound: f64,
    iter: usize,
) -> Result<TraceRow> {
    let mse = match crate::fnn::mse_loss(params, x, y) {
        Ok(v) if v.is_finite() => v,
        _ => return Err(blowup(iter, "mean squared loss".into())),
    };
    let actual = match (formulation, aux) {
        (Some(f), Some(aux)) => loss(f, params, aux, x, y, beta)?,
        _ => mse,
    };
    if !actual.is_finite() {
        return Err(blowup(iter, "loss".into()));
    }
    Ok(TraceRow {
        iter,
        actual,
        mse,
        bound_ratio: ratio(mse, bound, actual),
    })
}

/// Initial network and auxiliaries for one seed: parameters first, then the
/// auxiliaries, all from the same stream.
pub fn initial_state(
    cfg: &FnnSolverConfig,
    x: &Matrix,
    rng: &mut Stream,
) -> (FnnParams, FnnAuxState) {
    let params = init_params(cfg.depth, cfg.width, x.rows(), cfg.activation, rng);
    let aux = FnnAuxState::random(cfg.depth, cfg.width, x.cols(), rng);
    (params, aux)
}

/// Alternating sweep: `W_L`, `b_L`, then for `l = L−1 … 1` an `a_l` step
/// followed by exact `W_l` and `b_l` solves.
pub fn alternating_run(
    formulation: Formulation,
    cfg: &FnnSolverConfig,
    mut params: FnnParams,
    mut aux: FnnAuxState,
    x: &Matrix,
    y: &Matrix,
) -> Result<FnnRun> {
    cfg.validate()?;
    params.validate()?;
    check_state(&params, &aux, x, y)?;
    let depth = params.depth();
    let beta = &cfg.beta;
    let bound = fnn_bound_constant(params.activation, depth, beta) * depth as f64;
    let mut trace = Vec::with_capacity(cfg.iterations + 1);
    trace.push(record(
        Some(formulation),
        &params,
        Some(&aux),
        x,
        y,
        beta,
        bound,
        0,
    )?);
    for k in 1..=cfg.iterations {
        solve_w(formulation, &mut params, &aux, x, y, beta, depth)?;
        check_finite(&params.weights[depth - 1], k, || format!("W{depth}"))?;
        solve_b(&mut params, &aux, x, y, depth)?;
        check_finite(&params.biases[depth - 1], k, || format!("b{depth}"))?;
        for l in (1..depth).rev() {
            step_a(formulation, &params, &mut aux, x, y, beta, l, &cfg.armijo)?;
            check_finite(&aux.a[l - 1], k, || format!("a{l}"))?;
            solve_w(formulation, &mut params, &aux, x, y, beta, l)?;
            check_finite(&params.weights[l - 1], k, || format!("W{l}"))?;
            solve_b(&mut params, &aux, x, y, l)?;
            check_finite(&params.biases[l - 1], k, || format!("b{l}"))?;
        }
        trace.push(record(
            Some(formulation),
            &params,
            Some(&aux),
            x,
            y,
            beta,
            bound,
            k,
        )?);
    }
    Ok(FnnRun {
        params,
        aux: Some(aux),
        trace,
    })
}

pub fn sapm_fnn_run(
    cfg: &FnnSolverConfig,
    params: FnnParams,
    aux: FnnAuxState,
    x: &Matrix,
    y: &Matrix,
) -> Result<FnnRun> {
    alternating_run(Formulation::SelfAdaptive, cfg, params, aux, x, y)
}

pub fn pm_fnn_run(
    cfg: &FnnSolverConfig,
    params: FnnParams,
    aux: FnnAuxState,
    x: &Matrix,
    y: &Matrix,
) -> Result<FnnRun> {
    alternating_run(Formulation::Penalty, cfg, params, aux, x, y)
}

/// Full-batch gradient descent on `𝓛` with `τ_k = lr0/(1 + k/lr_decay)`.
pub fn ls_fnn_run(
    cfg: &FnnSolverConfig,
    mut params: FnnParams,
    x: &Matrix,
    y: &Matrix,
) -> Result<FnnRun> {
    cfg.validate()?;
    params.validate()?;
    let depth = params.depth();
    let bound = fnn_bound_constant(params.activation, depth, &cfg.beta) * depth as f64;
    let mut trace = Vec::with_capacity(cfg.iterations + 1);
    trace.push(record(None, &params, None, x, y, &cfg.beta, bound, 0)?);
    for k in 1..=cfg.iterations {
        let lr = cfg.lr0 / (1.0 + (k - 1) as f64 / cfg.lr_decay);
        let (_, g) = mse_gradient(&params, x, y).map_err(|_| blowup(k, "gradient".into()))?;
        for l in 0..depth {
            params.weights[l].axpy(-lr, &g.weights[l]);
            params.biases[l].axpy(-lr, &g.biases[l]);
            check_finite(&params.weights[l], k, || format!("W{}", l + 1))?;
        }
        trace.push(record(None, &params, None, x, y, &cfg.beta, bound, k)?);
    }
    Ok(FnnRun {
        params,
        aux: None,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fnn::mse_loss;

    fn instance(
        seed: u64,
        act: Activation,
        depth: usize,
        width: usize,
        n: usize,
    ) -> (FnnParams, FnnAuxState, Matrix, Matrix) {
        let mut rng = Stream::new(seed);
        let p = init_params(depth, width, 2, act, &mut rng);
        let x = rng.uniform_matrix(2, n, -1.0, 1.0);
        let y = rng.uniform_matrix(1, n, -1.0, 1.0);
        let aux = FnnAuxState::random(depth, width, n, &mut rng);
        (p, aux, x, y)
    }

    // Naive triple loops over samples and neurons.
    fn scalar_loss(
        p: &FnnParams,
        aux: &FnnAuxState,
        x: &Matrix,
        y: &Matrix,
        beta: &[f64],
        omega: &[f64],
    ) -> f64 {
        let depth = p.depth();
        let n = x.cols();
        let mut total = 0.0;
        for s in 0..n {
            for l in 1..=depth {
                let w = &p.weights[l - 1];
                for r in 0..w.rows() {
                    let mut z = p.biases[l - 1].get(r, 0);
                    for c in 0..w.cols() {
                        let input = if l == 1 {
                            x.get(c, s)
                        } else {
                            p.activation.eval(aux.a[l - 2].get(c, s))
                        };
                        z += w.get(r, c) * input;
                    }
                    let e = if l == depth {
                        z - y.get(0, s)
                    } else {
                        z - aux.a[l - 1].get(r, s)
                    };
                    let weight = if l == depth {
                        1.0
                    } else {
                        beta[l - 1] * omega[l - 1]
                    };
                    total += weight * e * e;
                }
            }
        }
        total / n as f64
    }

    #[test]
    fn feasible_aux_reproduces_mse() {
        let (p, _, x, y) = instance(1, Activation::Sin, 5, 6, 7);
        let aux = FnnAuxState::feasible(&p, &x).unwrap();
        let beta = PenaltyWeights::unit(5);
        let mse = mse_loss(&p, &x, &y).unwrap();
        assert!((loss_pm(&p, &aux, &x, &y, &beta).unwrap() - mse).abs() <= 1e-12 * (1.0 + mse));
        assert!((loss_sapm(&p, &aux, &x, &y, &beta).unwrap() - mse).abs() <= 1e-12 * (1.0 + mse));
    }

    #[test]
    fn zero_state_has_zero_loss() {
        let p = FnnParams::zeros(3, 4, 2, Activation::Relu);
        let aux = FnnAuxState::zeros(3, 4, 5);
        let x = Matrix::filled(2, 5, 0.3);
        let y = Matrix::zeros(1, 5);
        let beta = PenaltyWeights::unit(3);
        assert_eq!(loss_pm(&p, &aux, &x, &y, &beta).unwrap(), 0.0);
        assert_eq!(loss_sapm(&p, &aux, &x, &y, &beta).unwrap(), 0.0);
    }

    #[test]
    fn losses_match_scalar_oracle() {
        let (p, aux, x, y) = instance(2, Activation::Relu, 4, 3, 5);
        let beta = PenaltyWeights {
            beta: vec![0.5, 2.0, 1.5],
        };
        let pm = scalar_loss(&p, &aux, &x, &y, &beta.beta, &[1.0; 4]);
        let norms: Vec<f64> = p
            .weights
            .iter()
            .map(|w| w.as_slice().iter().map(|v| v * v).sum())
            .collect();
        let omega = [
            norms[1] * norms[2] * norms[3],
            norms[2] * norms[3],
            norms[3],
            1.0,
        ];
        let sa = scalar_loss(&p, &aux, &x, &y, &beta.beta, &omega);
        assert!((loss_pm(&p, &aux, &x, &y, &beta).unwrap() - pm).abs() <= 1e-12 * pm);
        assert!((loss_sapm(&p, &aux, &x, &y, &beta).unwrap() - sa).abs() <= 1e-12 * sa);
    }

    #[test]
    fn omega_examples() {
        let mut p = FnnParams::zeros(3, 1, 1, Activation::Relu);
        p.weights[0].set(0, 0, 1.0);
        p.weights[1].set(0, 0, 2.0);
        p.weights[2].set(0, 0, 3.0);
        assert_eq!(omega_weights(&p), vec![36.0, 9.0, 1.0]);
        p.weights[2].set(0, 0, 1.0);
        p.weights[1].set(0, 0, 1.0);
        assert_eq!(omega_weights(&p), vec![1.0, 1.0, 1.0]);
        p.weights[1].set(0, 0, 0.0);
        assert_eq!(omega_weights(&p)[0], 0.0);
    }

    #[test]
    fn unit_norm_weights_reduce_sapm_to_pm() {
        let (mut p, aux, x, y) = instance(3, Activation::Sin, 4, 3, 6);
        for w in p.weights.iter_mut() {
            let s = 1.0 / w.frobenius_norm();
            *w = w.scale(s);
        }
        let beta = PenaltyWeights::unit(4);
        let a = loss_pm(&p, &aux, &x, &y, &beta).unwrap();
        let b = loss_sapm(&p, &aux, &x, &y, &beta).unwrap();
        assert!((a - b).abs() <= 1e-14 * a);
    }

    #[test]
    fn lambda_examples() {
        let (p, aux, x, y) = instance(4, Activation::Sin, 3, 3, 4);
        let beta = PenaltyWeights::unit(3);
        assert_eq!(sapm_lambda(&p, &aux, &x, &y, &beta, 1).unwrap(), 0.0);
        let feas = FnnAuxState::feasible(&p, &x).unwrap();
        assert!(sapm_lambda(&p, &feas, &x, &y, &beta, 3).unwrap() < 1e-28);

        // λ_3 = ‖W_2‖²‖R_1‖² + ‖R_2‖² by scalar loops
        let r = |l: usize| -> f64 {
            let mut s = 0.0;
            for n in 0..4 {
                for i in 0..3 {
                    let mut z = p.biases[l - 1].get(i, 0);
                    for j in 0..p.weights[l - 1].cols() {
                        let input = if l == 1 {
                            x.get(j, n)
                        } else {
                            aux.a[l - 2].get(j, n).sin()
                        };
                        z += p.weights[l - 1].get(i, j) * input;
                    }
                    s += (z - aux.a[l - 1].get(i, n)).powi(2);
                }
            }
            s
        };
        let w2: f64 = p.weights[1].as_slice().iter().map(|v| v * v).sum();
        let oracle = w2 * r(1) + r(2);
        let got = sapm_lambda(&p, &aux, &x, &y, &beta, 3).unwrap();
        assert!((got - oracle).abs() <= 1e-12 * oracle);
    }

    fn fd_check(f: impl Fn(&Matrix) -> f64, at: &Matrix, g: &Matrix) {
        let h = 1e-6;
        for k in 0..at.as_slice().len() {
            let mut p = at.clone();
            let mut m = at.clone();
            p.as_mut_slice()[k] += h;
            m.as_mut_slice()[k] -= h;
            let fd = (f(&p) - f(&m)) / (2.0 * h);
            let an = g.as_slice()[k];
            assert!(
                (fd - an).abs() <= 1e-5 * an.abs() || (fd - an).abs() <= 1e-8,
                "entry {k}: fd {fd} analytic {an}"
            );
        }
    }

    #[test]
    fn grad_a_matches_finite_differences() {
        for seed in 0..5 {
            let (p, aux, x, y) = instance(10 + seed, Activation::Sin, 4, 3, 4);
            let beta = PenaltyWeights {
                beta: vec![1.0, 0.7, 1.3],
            };
            for f in [Formulation::Penalty, Formulation::SelfAdaptive] {
                for l in 1..4 {
                    let g = grad_a(f, &p, &aux, &x, &y, &beta, l).unwrap();
                    let obj = |a: &Matrix| {
                        let mut s = aux.clone();
                        s.a[l - 1] = a.clone();
                        block_objective_a(f, &p, &s, &x, &y, &beta, l).unwrap()
                    };
                    fd_check(obj, &aux.a[l - 1], &g);
                }
            }
        }
    }

    #[test]
    fn block_objective_is_scaled_loss() {
        // 𝒮_l differences equal N/ω_{l+1} times 𝓛_S differences
        let (p, aux, x, y) = instance(7, Activation::Sin, 4, 3, 5);
        let beta = PenaltyWeights::unit(4);
        let omega = omega_weights(&p);
        let l = 2;
        let mut moved = aux.clone();
        moved.a[l - 1] = moved.a[l - 1].map(|v| v + 0.1);
        let ds = block_objective_a(Formulation::SelfAdaptive, &p, &moved, &x, &y, &beta, l)
            .unwrap()
            - block_objective_a(Formulation::SelfAdaptive, &p, &aux, &x, &y, &beta, l).unwrap();
        let dl = loss_sapm(&p, &moved, &x, &y, &beta).unwrap()
            - loss_sapm(&p, &aux, &x, &y, &beta).unwrap();
        assert!((ds * omega[l] / 5.0 - dl).abs() <= 1e-10 * dl.abs());
    }

    #[test]
    fn grad_a_vanishes_without_next_layer() {
        let (mut p, _, x, y) = instance(8, Activation::Sin, 3, 3, 4);
        p.weights[1] = Matrix::zeros(3, 3);
        let beta = PenaltyWeights::unit(3);
        let g = grad_a(
            Formulation::SelfAdaptive,
            &p,
            &FnnAuxState::feasible(&p, &x).unwrap(),
            &x,
            &y,
            &beta,
            1,
        )
        .unwrap();
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn block_solves_do_not_increase_loss() {
        for seed in 0..5 {
            for f in [Formulation::Penalty, Formulation::SelfAdaptive] {
                let (mut p, mut aux, x, y) = instance(20 + seed, Activation::Relu, 4, 3, 8);
                let beta = PenaltyWeights::unit(4);
                for l in (1..=4).rev() {
                    let before = loss(f, &p, &aux, &x, &y, &beta).unwrap();
                    solve_w(f, &mut p, &aux, &x, &y, &beta, l).unwrap();
                    let mid = loss(f, &p, &aux, &x, &y, &beta).unwrap();
                    solve_b(&mut p, &aux, &x, &y, l).unwrap();
                    let after = loss(f, &p, &aux, &x, &y, &beta).unwrap();
                    assert!(mid <= before + 1e-10, "{f:?} W{l}: {before} → {mid}");
                    assert!(after <= mid + 1e-10, "{f:?} b{l}: {mid} → {after}");
                    if l < 4 {
                        let s0 = block_objective_a(f, &p, &aux, &x, &y, &beta, l).unwrap();
                        step_a(f, &p, &mut aux, &x, &y, &beta, l, &Armijo::default()).unwrap();
                        let s1 = block_objective_a(f, &p, &aux, &x, &y, &beta, l).unwrap();
                        assert!(s1 <= s0);
                    }
                }
            }
        }
    }

    #[test]
    fn zero_problem_is_a_fixed_point() {
        let x = Stream::new(1).uniform_matrix(1, 6, -1.0, 1.0);
        let y = Matrix::zeros(1, 6);
        let cfg = FnnSolverConfig::new(3, 4, Activation::Relu, 5);
        let p = FnnParams::zeros(3, 4, 1, Activation::Relu);
        let aux = FnnAuxState::zeros(3, 4, 6);
        for run in [
            sapm_fnn_run(&cfg, p.clone(), aux.clone(), &x, &y).unwrap(),
            pm_fnn_run(&cfg, p.clone(), aux.clone(), &x, &y).unwrap(),
            ls_fnn_run(&cfg, p.clone(), &x, &y).unwrap(),
        ] {
            assert_eq!(run.trace.len(), 6);
            assert!(run.trace.iter().all(|r| r.actual == 0.0 && r.mse == 0.0));
            assert_eq!(run.params, p);
        }
    }

    #[test]
    fn gd_step_decreases_smooth_loss() {
        let (p, _, x, y) = instance(30, Activation::Sin, 3, 5, 10);
        let mut cfg = FnnSolverConfig::new(3, 5, Activation::Sin, 1);
        cfg.lr0 = 1e-3;
        let run = ls_fnn_run(&cfg, p, &x, &y).unwrap();
        assert!(run.trace[1].mse < run.trace[0].mse);
    }

    #[test]
    fn sapm_trace_respects_bound() {
        let (p, aux, x, y) = instance(40, Activation::Relu, 4, 5, 20);
        let cfg = FnnSolverConfig::new(4, 5, Activation::Relu, 50);
        let run = sapm_fnn_run(&cfg, p, aux, &x, &y).unwrap();
        let c = fnn_bound_constant(Activation::Relu, 4, &cfg.beta);
        for r in &run.trace {
            assert!(r.mse <= c * 4.0 * r.actual + 1e-9);
            assert!(r.bound_ratio <= 1.0);
        }
        assert!(run.last().actual < run.initial().actual);
    }

    #[test]
    fn armijo_rejects_ascent() {
        let a = Armijo::default();
        let mut x = [1.0];
        // wrong-sign gradient: no step decreases x²
        assert!(!a.step(&mut x, &[-2.0], 1.0, |v| v[0] * v[0]));
        assert_eq!(x, [1.0]);
        assert!(a.step(&mut x, &[2.0], 1.0, |v| v[0] * v[0]));
        assert!(x[0].abs() < 1.0);
    }
}
