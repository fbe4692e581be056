//! First-order linear transport problems `c(x)·∇u = f` and physics-informed
//! networks `φ = Σᵢ cᵢ ∂_{xᵢ}ψ` built on top of an [`FnnParams`] network `ψ`.
//!
//! Points are `x = (t, x_1, …, x_{d_s})`; the time-dependent equation
//! `u_t − v·∇_x u = f` is written with `c = (1, −v_1, …, −v_{d_s})`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fnn::{relative_l2, Activation, FnnParams};
use crate::linalg::Matrix;
use crate::sampling::{sample_domain, sample_transport_boundary, Domain};

pub type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Writes `c_1(x) … c_d(x)` into the output slice.
pub type VectorField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

#[derive(Clone)]
pub struct TransportProblem {
    pub name: String,
    spatial_dim: usize,
    horizon: f64,
    /// Bound on every `|c_i|` over the closed domain.
    pub bound_c: f64,
    pub coefficients: VectorField,
    pub source: ScalarField,
    /// Lateral boundary data `g(t, x)`.
    pub boundary: ScalarField,
    /// Initial data `u_0(x)` (called with the spatial part only).
    pub initial: ScalarField,
    pub exact: Option<ScalarField>,
}

impl fmt::Debug for TransportProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TransportProblem")
            .field("name", &self.name)
            .field("spatial_dim", &self.spatial_dim)
            .field("horizon", &self.horizon)
            .field("bound_c", &self.bound_c)
            .finish_non_exhaustive()
    }
}

impl TransportProblem {
    pub fn spatial_dim(&self) -> usize {
        self.spatial_dim
    }

    /// Input dimension `d = 1 + d_s`.
    pub fn dim(&self) -> usize {
        self.spatial_dim + 1
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn domain(&self) -> Domain {
        let spatial = if self.spatial_dim == 1 {
            Domain::Interval
        } else {
            Domain::Hypercube {
                dim: self.spatial_dim,
            }
        };
        Domain::TimeCylinder {
            horizon: self.horizon,
            spatial: Box::new(spatial),
        }
    }

    /// `u_t − (t + x + 3/2)u_x = f` on `[0,1]×[−1,1]`, exact `u = eᵗ sin x`.
    pub fn transport_1d() -> Self {
        let horizon = 1.0;
        let v = |p: &[f64]| p[0] + p[1] + 1.5;
        let exact: ScalarField = Arc::new(|p: &[f64]| p[0].exp() * p[1].sin());
        Self {
            name: "t1d".into(),
            spatial_dim: 1,
            horizon,
            bound_c: horizon + 2.5,
            coefficients: Arc::new(move |p: &[f64], c: &mut [f64]| {
                c[0] = 1.0;
                c[1] = -v(p);
            }),
            source: Arc::new(move |p: &[f64]| {
                let et = p[0].exp();
                et * p[1].sin() - v(p) * et * p[1].cos()
            }),
            boundary: exact.clone(),
            initial: Arc::new(|x: &[f64]| x[0].sin()),
            exact: Some(exact),
        }
    }

    /// `u_t − Σ(x_i + 2)∂_i u = f` on `[0,1]×[−1,1]³`, exact
    /// `u = Σ(t + x_i) sin x_i`.
    pub fn transport_3d() -> Self {
        let exact: ScalarField = Arc::new(|p: &[f64]| {
            let t = p[0];
            p[1..].iter().map(|&x| (t + x) * x.sin()).sum()
        });
        Self {
            name: "t3d".into(),
            spatial_dim: 3,
            horizon: 1.0,
            bound_c: 3.0,
            coefficients: Arc::new(|p: &[f64], c: &mut [f64]| {
                c[0] = 1.0;
                for (ci, &x) in c[1..].iter_mut().zip(&p[1..]) {
                    *ci = -(x + 2.0);
                }
            }),
            source: Arc::new(|p: &[f64]| {
                let t = p[0];
                p[1..]
                    .iter()
                    .map(|&x| x.sin() - (x + 2.0) * (x.sin() + (t + x) * x.cos()))
                    .sum()
            }),
            boundary: exact.clone(),
            initial: Arc::new(|x: &[f64]| x.iter().map(|&x| x * x.sin()).sum()),
            exact: Some(exact),
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "t1d" => Ok(Self::transport_1d()),
            "t3d" => Ok(Self::transport_3d()),
            other => Err(Error::Config(format!(
                "unknown transport problem `{other}`"
            ))),
        }
    }

    /// `c_i(X)` as a `d×N` matrix.
    pub fn coefficient_matrix(&self, x: &Matrix) -> Matrix {
        let d = self.dim();
        let mut out = Matrix::zeros(d, x.cols());
        let mut c = vec![0.0; d];
        for n in 0..x.cols() {
            (self.coefficients)(&x.col(n), &mut c);
            for (i, &v) in c.iter().enumerate() {
                out.set(i, n, v);
            }
        }
        out
    }

    /// Data on `Γ ∪ {t=0}`: `u_0` on the initial slice, `g` elsewhere.
    pub fn boundary_value(&self, p: &[f64]) -> f64 {
        if p[0] == 0.0 {
            (self.initial)(&p[1..])
        } else {
            (self.boundary)(p)
        }
    }
}

/// Collocation data: interior points with source labels, boundary points with
/// Dirichlet labels, and the coefficient values `c_i(X^(1))`.
#[derive(Clone, Debug)]
pub struct PinnData {
    pub x1: Matrix,
    pub y1: Matrix,
    pub coeff: Matrix,
    pub x2: Matrix,
    pub y2: Matrix,
}

impl PinnData {
    pub fn new(x1: Matrix, y1: Matrix, coeff: Matrix, x2: Matrix, y2: Matrix) -> Result<Self> {
        let d = x1.rows();
        if x2.rows() != d
            || coeff.shape() != (d, x1.cols())
            || y1.shape() != (1, x1.cols())
            || y2.shape() != (1, x2.cols())
            || x1.cols() == 0
            || x2.cols() == 0
        {
            return Err(Error::Shape("inconsistent collocation data".into()));
        }
        Ok(Self {
            x1,
            y1,
            coeff,
            x2,
            y2,
        })
    }

    pub fn dim(&self) -> usize {
        self.x1.rows()
    }

    pub fn n1(&self) -> usize {
        self.x1.cols()
    }

    pub fn n2(&self) -> usize {
        self.x2.cols()
    }
}

/// Training data plus a test set of `(points, exact values)`.
#[derive(Clone, Debug)]
pub struct TransportData {
    pub train: PinnData,
    pub test_points: Matrix,
    pub test_values: Matrix,
}

/// Interior Halton points (`n1`), boundary points (`n2`) and a disjoint test
/// set (`n_test` interior points skipping the first `n1`).
pub fn build_transport_data(
    problem: &TransportProblem,
    n1: usize,
    n2: usize,
    n_test: usize,
) -> Result<TransportData> {
    let domain = problem.domain();
    let x1 = sample_domain(&domain, n1, 0)?;
    let y1 = label(&x1, |p| (problem.source)(p))?;
    let coeff = problem.coefficient_matrix(&x1);
    let x2 = sample_transport_boundary(problem, n2)?;
    let y2 = label(&x2, |p| problem.boundary_value(p))?;
    let test_points = sample_domain(&domain, n_test, n1)?;
    let exact = problem.exact.clone().ok_or_else(|| {
        Error::Config(format!("problem `{}` has no exact solution", problem.name))
    })?;
    let test_values = label(&test_points, |p| exact(p))?;
    Ok(TransportData {
        train: PinnData::new(x1, y1, coeff, x2, y2)?,
        test_points,
        test_values,
    })
}

fn label(x: &Matrix, f: impl Fn(&[f64]) -> f64) -> Result<Matrix> {
    let mut y = Matrix::zeros(1, x.cols());
    for n in 0..x.cols() {
        let p = x.col(n);
        let v = f(&p);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("label at point {p:?}")));
        }
        y.set(0, n, v);
    }
    Ok(y)
}

/// Pre-activations and input tangents of a network evaluated on `X`.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentTrace {
    /// `a_1 … a_{L−1}`.
    pub pre: Vec<Matrix>,
    /// `tangents[l−1][i]` is `d_{l,i}`, `l = 1..L`.
    pub tangents: Vec<Vec<Matrix>>,
    /// `ψ(X)`, the row `a_L`.
    pub output: Matrix,
}

pub fn tangent_forward(params: &FnnParams, x: &Matrix) -> Result<TangentTrace> {
    let act = params.activation;
    if act.second_deriv(0.0).is_none() {
        return Err(Error::UnsupportedActivation(
            act,
            "physics-informed networks",
        ));
    }
    let trace = crate::fnn::forward(params, x)?;
    let depth = params.depth();
    let d = params.input_dim();
    let n = x.cols();
    let mut tangents: Vec<Vec<Matrix>> = Vec::with_capacity(depth);
    let w1 = &params.weights[0];
    tangents.push(
        (0..d)
            .map(|i| Matrix::from_fn(w1.rows(), n, |r, _| w1.get(r, i)))
            .collect(),
    );
    for l in 1..depth {
        let sp = act.apply_deriv(&trace.pre[l - 1]);
        let next = tangents[l - 1]
            .iter()
            .map(|t| params.weights[l].matmul(&sp.zip_map(t, |s, v| s * v)))
            .collect();
        tangents.push(next);
    }
    Ok(TangentTrace {
        pre: trace.pre,
        tangents,
        output: trace.output,
    })
}

/// `Σᵢ cᵢ ∗ d_{L,i}` for coefficient rows `coeff` (`d×N`).
pub(crate) fn combine_tangents(coeff: &Matrix, last: &[Matrix]) -> Matrix {
    let n = coeff.cols();
    let mut out = Matrix::zeros(1, n);
    for (i, t) in last.iter().enumerate() {
        for (k, o) in out.as_mut_slice().iter_mut().enumerate() {
            *o += coeff.get(i, k) * t.get(0, k);
        }
    }
    out
}

/// `φ(x) = Σᵢ cᵢ(x) ∂_{xᵢ}ψ(x)` per column of `x`.
pub fn pinn_eval(problem: &TransportProblem, params: &FnnParams, x: &Matrix) -> Result<Matrix> {
    let trace = tangent_forward(params, x)?;
    let coeff = problem.coefficient_matrix(x);
    Ok(combine_tangents(&coeff, trace.tangents.last().unwrap()))
}

/// `𝒥 = 𝒥^(1) + μ𝒥^(2)` with its two parts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PinnLoss {
    pub total: f64,
    pub interior: f64,
    pub boundary: f64,
}

pub fn loss_j(params: &FnnParams, data: &PinnData, mu: f64) -> Result<PinnLoss> {
    if params.input_dim() != data.dim() {
        return Err(Error::Shape(
            "network input dimension differs from data".into(),
        ));
    }
    let trace = tangent_forward(params, &data.x1)?;
    let phi = combine_tangents(&data.coeff, trace.tangents.last().unwrap());
    let interior = phi.sub(&data.y1).frobenius_norm_sq() / data.n1() as f64;
    let out2 = crate::fnn::forward(params, &data.x2)?.output;
    let boundary = out2.sub(&data.y2).frobenius_norm_sq() / data.n2() as f64;
    let total = interior + mu * boundary;
    if !total.is_finite() {
        return Err(Error::NonFinite("physics-informed loss".into()));
    }
    Ok(PinnLoss {
        total,
        interior,
        boundary,
    })
}

/// Relative ℓ² error of `ψ` against exact values on test points.
pub fn solution_error(params: &FnnParams, points: &Matrix, exact: &Matrix) -> Result<f64> {
    let out = crate::fnn::forward(params, points)?.output;
    if out.shape() != exact.shape() {
        return Err(Error::Shape("exact values do not match test points".into()));
    }
    relative_l2(&out, exact)
}

pub(crate) fn require_smooth(act: Activation) -> Result<()> {
    if act.second_deriv(0.0).is_none() {
        return Err(Error::UnsupportedActivation(
            act,
            "physics-informed networks",
        ));
    }
    Ok(())
}
