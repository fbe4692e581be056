//! Halton point sets and dataset assembly.
//!
//! Box domains map Halton points affinely. The unit ball rejects points of the
//! enclosing cube while consuming the Halton stream in order, so the `k`-th
//! accepted point depends only on `(d, k)`. In dimension 10 only about 0.25%
//! of candidates land inside the ball: 10⁴ points cost roughly 4·10⁶ Halton
//! evaluations.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::format::g17;
use crate::linalg::Matrix;
use crate::pinn::TransportProblem;

/// Largest supported Halton dimension.
pub const MAX_HALTON_DIM: usize = 64;

const PRIMES: [u64; MAX_HALTON_DIM] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193,
    197, 199, 211, 223, 227, 229, 233, 239, 241, 251, 257, 263, 269, 271, 277, 281, 283, 293, 307,
    311,
];

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("Halton dimension {0} exceeds the supported maximum of {MAX_HALTON_DIM}")]
    UnsupportedDimension(usize),
    #[error("label for point {index} {point:?} is not finite ({value})")]
    NonFiniteLabel {
        index: usize,
        point: Vec<f64>,
        value: f64,
    },
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while index > 0 {
        r += (index % base) as f64 * f;
        index /= base;
        f *= inv;
    }
    r
}

fn check_dim(dim: usize) -> Result<(), SamplingError> {
    if dim == 0 || dim > MAX_HALTON_DIM {
        return Err(SamplingError::UnsupportedDimension(dim));
    }
    Ok(())
}

/// `dim × count` matrix whose column `j` is Halton point number `skip + j + 1`
/// in `(0,1)^dim`, using the first `dim` primes as bases.
pub fn halton(count: usize, dim: usize, skip: usize) -> Result<Matrix, SamplingError> {
    check_dim(dim)?;
    Ok(Matrix::from_fn(dim, count, |i, j| {
        radical_inverse((skip + j + 1) as u64, PRIMES[i])
    }))
}

/// Sampling domains. Spatial boxes are `[-1, 1]^d`; the time cylinder is
/// `[0, T] × spatial`.
#[derive(Clone, Debug, PartialEq)]
pub enum Domain {
    Interval,
    Hypercube { dim: usize },
    UnitBall { dim: usize },
    TimeCylinder { horizon: f64, spatial: Box<Domain> },
}

impl Domain {
    pub fn dim(&self) -> usize {
        match self {
            Domain::Interval => 1,
            Domain::Hypercube { dim } | Domain::UnitBall { dim } => *dim,
            Domain::TimeCylinder { spatial, .. } => 1 + spatial.dim(),
        }
    }

    fn is_box(&self) -> bool {
        match self {
            Domain::Interval | Domain::Hypercube { .. } => true,
            Domain::UnitBall { .. } => false,
            Domain::TimeCylinder { spatial, .. } => spatial.is_box(),
        }
    }

    /// Closed-domain membership (small tolerance for rounding on faces).
    pub fn contains(&self, x: &[f64]) -> bool {
        const EPS: f64 = 1e-12;
        if x.len() != self.dim() {
            return false;
        }
        match self {
            Domain::Interval | Domain::Hypercube { .. } => {
                x.iter().all(|v| (-1.0 - EPS..=1.0 + EPS).contains(v))
            }
            Domain::UnitBall { .. } => x.iter().map(|v| v * v).sum::<f64>() <= 1.0 + EPS,
            Domain::TimeCylinder { horizon, spatial } => {
                (-EPS..=horizon + EPS).contains(&x[0]) && spatial.contains(&x[1..])
            }
        }
    }

    fn validate(&self) -> Result<(), SamplingError> {
        match self {
            Domain::Hypercube { dim } | Domain::UnitBall { dim } if *dim == 0 => {
                Err(SamplingError::InvalidDomain("zero dimension".into()))
            }
            Domain::TimeCylinder { horizon, spatial } => {
                if !(*horizon > 0.0) || !horizon.is_finite() {
                    return Err(SamplingError::InvalidDomain(format!("horizon {horizon}")));
                }
                if matches!(**spatial, Domain::TimeCylinder { .. }) {
                    return Err(SamplingError::InvalidDomain("nested time cylinder".into()));
                }
                spatial.validate()
            }
            _ => Ok(()),
        }
    }

    // Map a point of the unit cube onto the bounding box of the domain.
    fn map_unit(&self, u: &[f64], out: &mut [f64]) {
        match self {
            Domain::TimeCylinder { horizon, .. } => {
                out[0] = horizon * u[0];
                for (o, v) in out[1..].iter_mut().zip(&u[1..]) {
                    *o = 2.0 * v - 1.0;
                }
            }
            _ => {
                for (o, v) in out.iter_mut().zip(u) {
                    *o = 2.0 * v - 1.0;
                }
            }
        }
    }
}

/// `count` deterministic points inside `domain`, skipping the first `skip`
/// accepted points.
pub fn sample_domain(domain: &Domain, count: usize, skip: usize) -> Result<Matrix, SamplingError> {
    domain.validate()?;
    let dim = domain.dim();
    check_dim(dim)?;
    let mut out = Matrix::zeros(dim, count);
    let mut u = vec![0.0; dim];
    let mut x = vec![0.0; dim];
    if domain.is_box() {
        for j in 0..count {
            let index = (skip + j + 1) as u64;
            for (k, uk) in u.iter_mut().enumerate() {
                *uk = radical_inverse(index, PRIMES[k]);
            }
            domain.map_unit(&u, &mut x);
            out.set_col(j, &x);
        }
        return Ok(out);
    }
    let mut accepted = 0usize;
    let mut index = 0u64;
    while accepted < skip + count {
        index += 1;
        for (k, uk) in u.iter_mut().enumerate() {
            *uk = radical_inverse(index, PRIMES[k]);
        }
        domain.map_unit(&u, &mut x);
        if domain.contains(&x) {
            if accepted >= skip {
                out.set_col(accepted - skip, &x);
            }
            accepted += 1;
        }
    }
    Ok(out)
}

/// Features (`d × N`, one point per column) and labels (`1 × N`).
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Matrix,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.features.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.rows()
    }

    /// Labels `y_n = f(x_n)` for the given feature columns.
    pub fn label(features: Matrix, f: impl Fn(&[f64]) -> f64) -> Result<Self, SamplingError> {
        let mut labels = Matrix::zeros(1, features.cols());
        for n in 0..features.cols() {
            let x = features.col(n);
            let y = f(&x);
            if !y.is_finite() {
                return Err(SamplingError::NonFiniteLabel {
                    index: n,
                    point: x,
                    value: y,
                });
            }
            labels.set(0, n, y);
        }
        Ok(Self { features, labels })
    }

    /// CSV with header `x1,...,xd,y` and `%.17g` values.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let header: Vec<String> = (1..=self.dim()).map(|i| format!("x{i}")).collect();
        let _ = writeln!(s, "{},y", header.join(","));
        for n in 0..self.len() {
            for i in 0..self.dim() {
                let _ = write!(s, "{},", g17(self.features.get(i, n)));
            }
            let _ = writeln!(s, "{}", g17(self.labels.get(0, n)));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), SamplingError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

pub fn build_regression_dataset(
    target: impl Fn(&[f64]) -> f64,
    domain: &Domain,
    count: usize,
    skip: usize,
) -> Result<Dataset, SamplingError> {
    let features = sample_domain(domain, count, skip)?;
    Dataset::label(features, target)
}

/// `count` points `(t, x)` on the initial slice `{0}×Ω` and the lateral
/// boundary `(0,T]×∂Ω` of a transport problem on `[-1,1]^d`.
///
/// The first `⌈count/2⌉` points lie on the initial slice; the rest cycle
/// through the faces `x_1=−1, x_1=+1, x_2=−1, …` with time and the free face
/// coordinates taken from the Halton stream.
pub fn sample_transport_boundary(
    problem: &TransportProblem,
    count: usize,
) -> Result<Matrix, SamplingError> {
    let ds = problem.spatial_dim();
    let horizon = problem.horizon();
    check_dim(ds)?;
    let n_init = count.div_ceil(2);
    let n_lat = count - n_init;
    let mut out = Matrix::zeros(ds + 1, count);

    let init = halton(n_init, ds, 0)?;
    for j in 0..n_init {
        out.set(0, j, 0.0);
        for k in 0..ds {
            out.set(k + 1, j, 2.0 * init.get(k, j) - 1.0);
        }
    }
    let lat = halton(n_lat, ds, 0)?;
    let faces = 2 * ds;
    for j in 0..n_lat {
        let col = n_init + j;
        let face = j % faces;
        let axis = face / 2;
        let side = if face % 2 == 0 { -1.0 } else { 1.0 };
        out.set(0, col, horizon * lat.get(0, j));
        let mut free = 1;
        for k in 0..ds {
            if k == axis {
                out.set(k + 1, col, side);
            } else {
                out.set(k + 1, col, 2.0 * lat.get(free, j) - 1.0);
                free += 1;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    // independent brute-force radical inverse over the digit expansion
    fn radical_inverse_oracle(i: u64, base: u64) -> f64 {
        let mut digits = Vec::new();
        let mut k = i;
        while k > 0 {
            digits.push(k % base);
            k /= base;
        }
        digits
            .iter()
            .enumerate()
            .map(|(pos, &dg)| dg as f64 / (base as f64).powi(pos as i32 + 1))
            .sum()
    }

    #[test]
    fn halton_examples() {
        let h = halton(3, 1, 0).unwrap();
        assert_eq!(h.as_slice(), &[0.5, 0.25, 0.75]);
        let h = halton(1, 2, 0).unwrap();
        assert_eq!(h.get(0, 0), 0.5);
        assert!((h.get(1, 0) - 1.0 / 3.0).abs() < 1e-16);
        let h = halton(200, 7, 13).unwrap();
        assert!(h.as_slice().iter().all(|&v| v > 0.0 && v < 1.0));
        for j in 0..200 {
            for i in 0..7 {
                let o = radical_inverse_oracle(13 + j as u64 + 1, PRIMES[i]);
                assert!((h.get(i, j) - o).abs() < 1e-15);
            }
        }
        assert!(matches!(
            halton(1, 65, 0),
            Err(SamplingError::UnsupportedDimension(65))
        ));
    }

    #[test]
    fn halton_is_reproducible() {
        assert_eq!(halton(50, 5, 3).unwrap(), halton(50, 5, 3).unwrap());
    }

    #[test]
    fn domain_examples() {
        let p = sample_domain(&Domain::Interval, 1, 0).unwrap();
        assert_eq!(p.get(0, 0), 0.0);
        let p = sample_domain(&Domain::Hypercube { dim: 2 }, 1, 0).unwrap();
        assert_eq!(p.get(0, 0), 0.0);
        assert!((p.get(1, 0) + 1.0 / 3.0).abs() < 1e-15);
        let ball = Domain::UnitBall { dim: 3 };
        let p = sample_domain(&ball, 300, 0).unwrap();
        for j in 0..300 {
            let c = p.col(j);
            assert!(c.iter().map(|v| v * v).sum::<f64>() <= 1.0);
        }
    }

    #[test]
    fn skip_continues_the_stream() {
        for domain in [Domain::Interval, Domain::UnitBall { dim: 4 }] {
            let all = sample_domain(&domain, 30, 0).unwrap();
            let tail = sample_domain(&domain, 10, 20).unwrap();
            assert_eq!(all.col_range(20, 30), tail);
            let train = sample_domain(&domain, 20, 0).unwrap();
            for j in 0..10 {
                for k in 0..20 {
                    assert_ne!(tail.col(j), train.col(k));
                }
            }
        }
    }

    #[test]
    fn regression_labels() {
        let ds = build_regression_dataset(|_| 0.0, &Domain::Interval, 10, 0).unwrap();
        assert!(ds.labels.as_slice().iter().all(|&y| y == 0.0));
        let ds =
            build_regression_dataset(|x| (x[0] * x[0]).sin(), &Domain::Interval, 100, 0).unwrap();
        for n in 0..100 {
            let x = ds.features.get(0, n);
            assert_eq!(ds.labels.get(0, n), (x * x).sin());
        }
        let err = build_regression_dataset(|x| 1.0 / x[0], &Domain::Interval, 1, 0).unwrap_err();
        assert!(matches!(
            err,
            SamplingError::NonFiniteLabel { index: 0, .. }
        ));
    }

    #[test]
    fn csv_layout() {
        let ds =
            build_regression_dataset(|x| x[0] + x[1], &Domain::Hypercube { dim: 2 }, 2, 0).unwrap();
        let csv = ds.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("x1,x2,y"));
        assert_eq!(
            lines.next(),
            Some("0,-0.33333333333333337,-0.33333333333333337")
        );
    }

    #[test]
    fn transport_boundary_split() {
        let p = TransportProblem::transport_1d();
        let pts = sample_transport_boundary(&p, 2).unwrap();
        assert_eq!(pts.get(0, 0), 0.0);
        assert!(pts.get(1, 1).abs() == 1.0);
        let pts = sample_transport_boundary(&p, 400).unwrap();
        let init = (0..400).filter(|&j| pts.get(0, j) == 0.0).count();
        assert_eq!(init, 200);
        let lateral = (0..400).filter(|&j| pts.get(1, j).abs() == 1.0).count();
        assert_eq!(lateral, 200);
        let cyl = p.domain();
        for j in 0..400 {
            assert!(cyl.contains(&pts.col(j)));
        }
        let p3 = TransportProblem::transport_3d();
        let pts = sample_transport_boundary(&p3, 1600).unwrap();
        let mut per_face = [0usize; 6];
        for j in 800..1600 {
            let c = pts.col(j);
            let axis = (1..4).find(|&k| c[k].abs() == 1.0).unwrap() - 1;
            let side = usize::from(c[axis + 1] > 0.0);
            per_face[2 * axis + side] += 1;
            assert!(c[0] > 0.0 && c[0] <= p3.horizon());
        }
        assert!(per_face.iter().all(|&n| n == 800 / 6 || n == 800 / 6 + 1));
    }
}
