//! Fully-connected networks `φ(x) = W_L σ(… σ(W_1 x + b_1) …) + b_L`.
//!
//! Shapes follow the usual convention: `W_1` is `M×d`, `W_2 … W_{L−1}` are
//! `M×M`, `W_L` is `1×M`; biases are columns. Inputs are stored one sample per
//! column.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::g17;
use crate::linalg::Matrix;
use crate::rng::Stream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sin,
}

impl Activation {
    #[inline]
    pub fn eval(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sin => z.sin(),
        }
    }

    /// First derivative; `σ′(0) = 0` for relu.
    #[inline]
    pub fn deriv(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sin => z.cos(),
        }
    }

    /// `(σ(z), σ′(z))`.
    #[inline]
    pub fn eval_deriv(self, z: f64) -> (f64, f64) {
        match self {
            Activation::Relu => (self.eval(z), self.deriv(z)),
            Activation::Sin => z.sin_cos(),
        }
    }

    /// Second derivative, only defined for smooth activations.
    #[inline]
    pub fn second_deriv(self, z: f64) -> Option<f64> {
        match self {
            Activation::Relu => None,
            Activation::Sin => Some(-z.sin()),
        }
    }

    /// Lipschitz constant `B` of σ.
    pub fn lipschitz(self) -> f64 {
        1.0
    }

    /// `(C_σ, C_σ′, B_σ′)` for activations with a Lipschitz derivative.
    pub fn smooth_constants(self) -> Option<(f64, f64, f64)> {
        match self {
            Activation::Relu => None,
            Activation::Sin => Some((1.0, 1.0, 1.0)),
        }
    }

    pub fn apply(self, z: &Matrix) -> Matrix {
        z.map(|v| self.eval(v))
    }

    pub fn apply_deriv(self, z: &Matrix) -> Matrix {
        z.map(|v| self.deriv(v))
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sin => "sin",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "sin" => Ok(Activation::Sin),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FnnParams {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Matrix>,
    pub activation: Activation,
}

impl FnnParams {
    pub fn zeros(depth: usize, width: usize, input_dim: usize, activation: Activation) -> Self {
        let mut weights = Vec::with_capacity(depth);
        let mut biases = Vec::with_capacity(depth);
        for l in 0..depth {
            let (rows, cols) = layer_shape(l, depth, width, input_dim);
            weights.push(Matrix::zeros(rows, cols));
            biases.push(Matrix::zeros(rows, 1));
        }
        Self {
            weights,
            biases,
            activation,
        }
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn width(&self) -> usize {
        self.weights[0].rows()
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].cols()
    }

    pub fn validate(&self) -> Result<()> {
        let depth = self.depth();
        if depth < 2 || self.biases.len() != depth {
            return Err(Error::Shape(format!(
                "need depth ≥ 2 with one bias per layer, got {depth} weights and {} biases",
                self.biases.len()
            )));
        }
        let (m, d) = (self.width(), self.input_dim());
        for l in 0..depth {
            let (rows, cols) = layer_shape(l, depth, m, d);
            if self.weights[l].shape() != (rows, cols) || self.biases[l].shape() != (rows, 1) {
                return Err(Error::Shape(format!("layer {} has wrong shape", l + 1)));
            }
            if !self.weights[l].is_finite() || !self.biases[l].is_finite() {
                return Err(Error::NonFinite(format!("parameters of layer {}", l + 1)));
            }
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.as_slice().len() + b.as_slice().len())
            .sum()
    }

    /// All entries in layer order: `W_1` (row-major), `b_1`, `W_2`, ….
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b.as_slice());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params());
        let mut k = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for m in [w, b] {
                let n = m.as_slice().len();
                m.as_mut_slice().copy_from_slice(&flat[k..k + n]);
                k += n;
            }
        }
    }

    /// Squared Frobenius norms `‖W_l‖²`, `l = 1..L`.
    pub fn weight_norms_sq(&self) -> Vec<f64> {
        self.weights.iter().map(Matrix::frobenius_norm_sq).collect()
    }

    /// Text checkpoint: a `#` header line with depth, width, input dimension
    /// and activation, then one line per matrix
    /// `name,rows,cols,v_1,...,v_{rows·cols}` (row-major, `%.17g`) in the
    /// order `W1,b1,W2,b2,…`.
    pub fn to_checkpoint(&self) -> String {
        let mut s = format!(
            "# depth={} width={} input_dim={} activation={}\n",
            self.depth(),
            self.width(),
            self.input_dim(),
            self.activation
        );
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            for (name, m) in [("W", w), ("b", b)] {
                let _ = write!(s, "{name}{},{},{}", l + 1, m.rows(), m.cols());
                for v in m.as_slice() {
                    let _ = write!(s, ",{}", g17(*v));
                }
                s.push('\n');
            }
        }
        s
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .and_then(|h| h.strip_prefix("# "))
            .ok_or_else(|| Error::Parse("missing header".into()))?;
        let mut depth = None;
        let mut width = None;
        let mut input_dim = None;
        let mut activation = None;
        for field in header.split_whitespace() {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad header field `{field}`")))?;
            let num = || v.parse::<usize>().map_err(|e| Error::Parse(e.to_string()));
            match k {
                "depth" => depth = Some(num()?),
                "width" => width = Some(num()?),
                "input_dim" => input_dim = Some(num()?),
                "activation" => activation = Some(v.parse()?),
                _ => return Err(Error::Parse(format!("unknown header key `{k}`"))),
            }
        }
        let missing = || Error::Parse("incomplete header".into());
        let mut params = Self::zeros(
            depth.ok_or_else(missing)?,
            width.ok_or_else(missing)?,
            input_dim.ok_or_else(missing)?,
            activation.ok_or_else(missing)?,
        );
        for l in 0..params.depth() {
            for (name, m) in [("W", &mut params.weights[l]), ("b", &mut params.biases[l])] {
                let line = lines
                    .next()
                    .ok_or_else(|| Error::Parse(format!("missing {name}{}", l + 1)))?;
                let mut it = line.split(',');
                let tag = it.next().unwrap_or_default();
                if tag != format!("{name}{}", l + 1) {
                    return Err(Error::Parse(format!(
                        "expected {name}{}, got `{tag}`",
                        l + 1
                    )));
                }
                let rows: usize = parse_field(it.next())?;
                let cols: usize = parse_field(it.next())?;
                if (rows, cols) != m.shape() {
                    return Err(Error::Parse(format!("{tag} has shape {rows}×{cols}")));
                }
                let values = it
                    .map(|v| v.parse::<f64>().map_err(|e| Error::Parse(e.to_string())))
                    .collect::<Result<Vec<_>>>()?;
                *m = Matrix::from_vec(rows, cols, values)?;
            }
        }
        params.validate()?;
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&std::fs::read_to_string(path)?)
    }
}

fn parse_field<T: FromStr>(s: Option<&str>) -> Result<T>
where
    T::Err: fmt::Display,
{
    s.ok_or_else(|| Error::Parse("truncated line".into()))?
        .parse()
        .map_err(|e: T::Err| Error::Parse(e.to_string()))
}

pub(crate) fn layer_shape(
    l: usize,
    depth: usize,
    width: usize,
    input_dim: usize,
) -> (usize, usize) {
    let rows = if l + 1 == depth { 1 } else { width };
    let cols = if l == 0 { input_dim } else { width };
    (rows, cols)
}

/// Every entry drawn from `U(−M^{−1/2}, M^{−1/2})`, layer by layer (`W_l`
/// row-major, then `b_l`).
pub fn init_params(
    depth: usize,
    width: usize,
    input_dim: usize,
    activation: Activation,
    rng: &mut Stream,
) -> FnnParams {
    let r = 1.0 / (width as f64).sqrt();
    let mut params = FnnParams::zeros(depth, width, input_dim, activation);
    for (w, b) in params.weights.iter_mut().zip(params.biases.iter_mut()) {
        *w = rng.uniform_matrix(w.rows(), w.cols(), -r, r);
        *b = rng.uniform_matrix(b.rows(), 1, -r, r);
    }
    params
}

/// Pre-activations `a_1 … a_{L−1}` and the network output.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub pre: Vec<Matrix>,
    pub output: Matrix,
}

pub fn forward(params: &FnnParams, x: &Matrix) -> Result<ForwardTrace> {
    if x.rows() != params.input_dim() || x.cols() == 0 {
        return Err(Error::Shape(format!(
            "input is {}×{}, network expects {} rows",
            x.rows(),
            x.cols(),
            params.input_dim()
        )));
    }
    let depth = params.depth();
    let act = params.activation;
    let mut pre = Vec::with_capacity(depth - 1);
    let mut z = params.weights[0].matmul(x).add_col(&params.biases[0]);
    for l in 1..depth {
        if !z.is_finite() {
            return Err(Error::NonFinite(format!("pre-activation of layer {l}")));
        }
        let next = params.weights[l]
            .matmul(&act.apply(&z))
            .add_col(&params.biases[l]);
        pre.push(z);
        z = next;
    }
    if !z.is_finite() {
        return Err(Error::NonFinite("network output".into()));
    }
    Ok(ForwardTrace { pre, output: z })
}

/// `(1/N)‖φ(X) − Y‖²`.
pub fn mse_loss(params: &FnnParams, x: &Matrix, y: &Matrix) -> Result<f64> {
    let out = forward(params, x)?.output;
    check_labels(&out, y)?;
    Ok(out.sub(y).frobenius_norm_sq() / y.cols() as f64)
}

fn check_labels(out: &Matrix, y: &Matrix) -> Result<()> {
    if out.shape() != y.shape() {
        return Err(Error::Shape(format!(
            "labels are {:?}, outputs are {:?}",
            y.shape(),
            out.shape()
        )));
    }
    Ok(())
}

/// Gradient of [`mse_loss`] with respect to every `W_l` and `b_l`.
#[derive(Clone, Debug, PartialEq)]
pub struct FnnGradient {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Matrix>,
}

impl FnnGradient {
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b.as_slice());
        }
        out
    }
}

pub fn mse_gradient(params: &FnnParams, x: &Matrix, y: &Matrix) -> Result<(f64, FnnGradient)> {
    let trace = forward(params, x)?;
    check_labels(&trace.output, y)?;
    let n = y.cols() as f64;
    let residual = trace.output.sub(y);
    let loss = residual.frobenius_norm_sq() / n;
    let seed = residual.scale(2.0 / n);
    let grad = backprop(params, x, &trace, seed);
    Ok((loss, grad))
}

/// Reverse pass for an output adjoint `seed = ∂loss/∂φ(X)`.
pub(crate) fn backprop(
    params: &FnnParams,
    x: &Matrix,
    trace: &ForwardTrace,
    seed: Matrix,
) -> FnnGradient {
    let depth = params.depth();
    let act = params.activation;
    let mut gw = vec![Matrix::zeros(0, 0); depth];
    let mut gb = vec![Matrix::zeros(0, 0); depth];
    let mut gz = seed;
    for l in (0..depth).rev() {
        let input = if l == 0 {
            x.clone()
        } else {
            act.apply(&trace.pre[l - 1])
        };
        gw[l] = gz.matmul_tr(&input);
        gb[l] = gz.row_sums();
        if l > 0 {
            let gh = params.weights[l].tr_matmul(&gz);
            gz = gh.zip_map(&trace.pre[l - 1], |g, z| g * act.deriv(z));
        }
    }
    FnnGradient {
        weights: gw,
        biases: gb,
    }
}

/// Relative error `(Σ|φ − y|² / Σ|y|²)^{1/2}`.
pub fn l2_error(params: &FnnParams, x: &Matrix, y: &Matrix) -> Result<f64> {
    let out = forward(params, x)?.output;
    check_labels(&out, y)?;
    relative_l2(&out, y)
}

pub(crate) fn relative_l2(approx: &Matrix, exact: &Matrix) -> Result<f64> {
    let denom = exact.frobenius_norm_sq();
    if denom == 0.0 {
        return Err(Error::ZeroNorm("relative ℓ² error"));
    }
    Ok((approx.sub(exact).frobenius_norm_sq() / denom).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_forward(params: &FnnParams, x: &[f64]) -> f64 {
        let act = params.activation;
        let mut h: Vec<f64> = x.to_vec();
        for l in 0..params.depth() {
            let w = &params.weights[l];
            let mut z = vec![0.0; w.rows()];
            for i in 0..w.rows() {
                z[i] = params.biases[l].get(i, 0);
                for j in 0..w.cols() {
                    z[i] += w.get(i, j) * h[j];
                }
            }
            h = if l + 1 == params.depth() {
                z
            } else {
                z.iter().map(|&v| act.eval(v)).collect()
            };
        }
        h[0]
    }

    fn random_instance(seed: u64, act: Activation) -> (FnnParams, Matrix, Matrix) {
        let mut rng = Stream::new(seed);
        let p = init_params(3, 4, 2, act, &mut rng);
        let x = rng.uniform_matrix(2, 5, -1.0, 1.0);
        let y = rng.uniform_matrix(1, 5, -1.0, 1.0);
        (p, x, y)
    }

    #[test]
    fn init_support_and_determinism() {
        let p = init_params(4, 100, 3, Activation::Relu, &mut Stream::new(1));
        assert!(p.to_flat().iter().all(|v| v.abs() <= 0.1));
        let q = init_params(4, 100, 3, Activation::Relu, &mut Stream::new(1));
        assert_eq!(p, q);
        p.validate().unwrap();
    }

    #[test]
    fn init_mean_oracle() {
        // 10⁵ draws of U(−r, r) with r = 10^{−1/2}: mean within 3σ of 0
        let mut rng = Stream::new(99);
        let r = 1.0 / 10f64.sqrt();
        let n = 100_000;
        let mut all = Vec::with_capacity(n);
        while all.len() < n {
            all.extend(init_params(2, 10, 1, Activation::Sin, &mut rng).to_flat());
        }
        all.truncate(n);
        let mean = all.iter().sum::<f64>() / n as f64;
        let bound = 3.0 * (2.0 * r) / (12.0 * n as f64).sqrt();
        assert!(mean.abs() < bound, "mean {mean} bound {bound}");
    }

    #[test]
    fn forward_examples() {
        let mut p = FnnParams::zeros(3, 4, 2, Activation::Relu);
        p.biases[2].set(0, 0, 1.7);
        let x = Matrix::filled(2, 3, 0.3);
        assert_eq!(forward(&p, &x).unwrap().output, Matrix::filled(1, 3, 1.7));
        p.activation = Activation::Sin;
        assert_eq!(forward(&p, &x).unwrap().output, Matrix::filled(1, 3, 1.7));

        let mut p = FnnParams::zeros(2, 1, 1, Activation::Relu);
        p.weights[0].set(0, 0, 1.0);
        p.weights[1].set(0, 0, 1.0);
        let x = Matrix::from_rows(&[&[-2.0, 3.0]]).unwrap();
        assert_eq!(forward(&p, &x).unwrap().output.as_slice(), &[0.0, 3.0]);
    }

    #[test]
    fn forward_trace_recursion_is_exact() {
        let (p, x, _) = random_instance(3, Activation::Sin);
        let t = forward(&p, &x).unwrap();
        assert_eq!(t.pre[0], p.weights[0].matmul(&x).add_col(&p.biases[0]));
        assert_eq!(
            t.pre[1],
            p.weights[1]
                .matmul(&p.activation.apply(&t.pre[0]))
                .add_col(&p.biases[1])
        );
        assert_eq!(t, forward(&p, &x).unwrap());
        for n in 0..x.cols() {
            let s = scalar_forward(&p, &x.col(n));
            assert!((t.output.get(0, n) - s).abs() < 1e-14);
        }
    }

    #[test]
    fn mse_examples() {
        let mut p = FnnParams::zeros(2, 3, 1, Activation::Relu);
        p.biases[1].set(0, 0, 2.0);
        let x = Matrix::zeros(1, 1);
        assert_eq!(mse_loss(&p, &x, &Matrix::zeros(1, 1)).unwrap(), 4.0);
        assert_eq!(mse_loss(&p, &x, &Matrix::filled(1, 1, 2.0)).unwrap(), 0.0);

        let (p, x, y) = random_instance(5, Activation::Relu);
        let mut oracle = 0.0;
        for n in 0..x.cols() {
            let e = scalar_forward(&p, &x.col(n)) - y.get(0, n);
            oracle += e * e;
        }
        oracle /= x.cols() as f64;
        let loss = mse_loss(&p, &x, &y).unwrap();
        assert!((loss - oracle).abs() <= 1e-12 * oracle);
    }

    #[test]
    fn l2_error_examples() {
        let (p, x, _) = random_instance(8, Activation::Sin);
        let out = forward(&p, &x).unwrap().output;
        assert_eq!(l2_error(&p, &x, &out).unwrap(), 0.0);
        let zero = FnnParams::zeros(3, 4, 2, Activation::Sin);
        assert_eq!(l2_error(&zero, &x, &out).unwrap(), 1.0);
        let half = out.scale(0.5);
        assert!((l2_error(&p, &x, &half).unwrap() - 1.0).abs() < 1e-14);
        assert!(matches!(
            l2_error(&p, &x, &Matrix::zeros(1, 5)),
            Err(Error::ZeroNorm(_))
        ));
    }

    #[test]
    fn loss_and_error_identity() {
        let (p, x, y) = random_instance(12, Activation::Sin);
        let loss = mse_loss(&p, &x, &y).unwrap();
        let e = l2_error(&p, &x, &y).unwrap();
        let lhs = y.frobenius_norm_sq() / y.cols() as f64 * e * e;
        assert!((loss - lhs).abs() <= 1e-12 * loss);
    }

    #[test]
    fn gradient_zero_at_interpolation() {
        let (p, x, _) = random_instance(4, Activation::Relu);
        let y = forward(&p, &x).unwrap().output;
        let (loss, g) = mse_gradient(&p, &x, &y).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.to_flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_matches_central_differences() {
        for (seed, act) in [(31, Activation::Sin), (32, Activation::Relu)] {
            let (p, x, y) = random_instance(seed, act);
            let (_, g) = mse_gradient(&p, &x, &y).unwrap();
            let flat = p.to_flat();
            let h = 1e-6;
            for (k, gk) in g.to_flat().into_iter().enumerate() {
                let at = |v: f64| {
                    let mut q = p.clone();
                    let mut f = flat.clone();
                    f[k] = v;
                    q.set_flat(&f);
                    mse_loss(&q, &x, &y).unwrap()
                };
                let fd = (at(flat[k] + h) - at(flat[k] - h)) / (2.0 * h);
                assert!(
                    (gk - fd).abs() <= 1e-6 * fd.abs().max(1e-2),
                    "{act} entry {k}: {gk} vs {fd}"
                );
            }
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let (p, _, _) = random_instance(21, Activation::Sin);
        let q = FnnParams::from_checkpoint(&p.to_checkpoint()).unwrap();
        assert_eq!(p, q);
        assert!(FnnParams::from_checkpoint("# depth=2").is_err());
    }

    #[test]
    fn non_finite_forward_names_layer() {
        let mut p = FnnParams::zeros(3, 2, 1, Activation::Relu);
        p.weights[0].set(0, 0, 1e308);
        p.weights[1].set(0, 0, 1e308);
        let err = forward(&p, &Matrix::filled(1, 1, 10.0)).unwrap_err();
        assert!(
            matches!(err, Error::NonFinite(ref s) if s.contains("layer")),
            "{err}"
        );
    }
}
