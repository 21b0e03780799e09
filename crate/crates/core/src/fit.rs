//! Small nonlinear and linear least-squares fits.

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{storage::Owned, DMatrix, DVector, Dyn};

/// Model evaluated at `x`: value and gradient with respect to the parameters.
type Model = fn(&[f64], f64) -> (f64, Vec<f64>);

struct CurveProblem<'a> {
    params: DVector<f64>,
    x: &'a [f64],
    y: &'a [f64],
    weights: &'a [f64],
    model: Model,
}

impl LeastSquaresProblem<f64, Dyn, Dyn> for CurveProblem<'_> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, p: &DVector<f64>) {
        self.params.copy_from(p);
    }

    fn params(&self) -> DVector<f64> {
        self.params.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let p = self.params.as_slice();
        let r = DVector::from_iterator(
            self.x.len(),
            self.x.iter().zip(self.y).zip(self.weights).map(|((&x, &y), &w)| w * ((self.model)(p, x).0 - y)),
        );
        r.iter().all(|v| v.is_finite()).then_some(r)
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        let p = self.params.as_slice();
        let mut j = DMatrix::zeros(self.x.len(), p.len());
        for (row, (&x, &w)) in self.x.iter().zip(self.weights).enumerate() {
            let (_, grad) = (self.model)(p, x);
            for (col, g) in grad.into_iter().enumerate() {
                j[(row, col)] = w * g;
            }
        }
        j.iter().all(|v| v.is_finite()).then_some(j)
    }
}

struct RawFit {
    params: Vec<f64>,
    /// `(J^T W J)^{-1}` at the optimum, if invertible.
    cov: Option<DMatrix<f64>>,
    chi2: f64,
    converged: bool,
}

fn least_squares(model: Model, x: &[f64], y: &[f64], weights: &[f64], init: &[f64]) -> RawFit {
    let problem = CurveProblem { params: DVector::from_column_slice(init), x, y, weights, model };
    let (problem, report) = LevenbergMarquardt::new().with_patience(200).minimize(problem);
    let converged = report.termination.was_successful() && report.objective_function.is_finite();
    let chi2 = problem.residuals().map_or(f64::INFINITY, |r| r.norm_squared());
    let cov = problem.jacobian().and_then(|j| (j.transpose() * &j).try_inverse());
    RawFit { params: problem.params.as_slice().to_vec(), cov, chi2, converged }
}

/// `E(x) = e_inf + A exp(-beta x)` with `A, beta >= 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayFit {
    pub e_inf: f64,
    pub amplitude: f64,
    pub rate: f64,
    /// Root-mean-square residual per point.
    pub rms: f64,
    pub converged: bool,
}

impl DecayFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.e_inf + self.amplitude * (-self.rate * x).exp()
    }
}

// Parameters (e_inf, a, b) with A = a^2, beta = b^2 keep both non-negative.
fn decay_model(p: &[f64], x: f64) -> (f64, Vec<f64>) {
    let ex = (-p[2] * p[2] * x).exp();
    let v = p[0] + p[1] * p[1] * ex;
    (v, vec![1.0, 2.0 * p[1] * ex, -2.0 * p[1] * p[1] * p[2] * x * ex])
}

/// Fit a non-negative exponential decay, initialized from (min, range, 1).
/// Three or fewer points are interpolated exactly and report zero rms.
pub fn fit_decay(x: &[f64], y: &[f64]) -> DecayFit {
    assert_eq!(x.len(), y.len());
    let min = y.iter().copied().fold(f64::INFINITY, f64::min);
    let max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !min.is_finite() || !max.is_finite() {
        return DecayFit { e_inf: f64::NAN, amplitude: f64::NAN, rate: f64::NAN, rms: f64::INFINITY, converged: false };
    }
    if x.len() <= 3 {
        return DecayFit { e_inf: min, amplitude: max - min, rate: 1.0, rms: 0.0, converged: true };
    }
    let weights = vec![1.0; x.len()];
    let init = [min, (max - min).max(1e-12).sqrt(), 1.0];
    let raw = least_squares(decay_model, x, y, &weights, &init);
    let fit = DecayFit {
        e_inf: raw.params[0],
        amplitude: raw.params[1] * raw.params[1],
        rate: raw.params[2] * raw.params[2],
        rms: (raw.chi2 / x.len() as f64).sqrt(),
        converged: raw.converged,
    };
    let finite = fit.e_inf.is_finite() && fit.amplitude.is_finite() && fit.rate.is_finite() && fit.rms.is_finite();
    DecayFit { converged: fit.converged && finite, ..fit }
}

/// Two-parameter weighted fit with parameter covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedFit {
    /// `(a, b)`: intercept/amplitude and slope/rate.
    pub params: [f64; 2],
    pub std: [f64; 2],
    pub chi2: f64,
    pub converged: bool,
}

/// Inverse-std weights, or unit weights when any std is zero or missing.
pub fn weights_from_std(stds: Option<&[f64]>, n: usize) -> (Vec<f64>, bool) {
    match stds {
        Some(s) if s.len() == n && s.iter().all(|&v| v > 0.0 && v.is_finite()) => {
            (s.iter().map(|v| 1.0 / v).collect(), true)
        }
        _ => (vec![1.0; n], false),
    }
}

fn finish(raw: RawFit, n: usize, weighted: bool) -> WeightedFit {
    // Unweighted residuals carry no absolute scale: rescale by chi2 / dof.
    let scale = if weighted || n <= 2 { 1.0 } else { raw.chi2 / (n - 2) as f64 };
    let std = match &raw.cov {
        Some(c) => [(c[(0, 0)] * scale).abs().sqrt(), (c[(1, 1)] * scale).abs().sqrt()],
        None => [f64::INFINITY, f64::INFINITY],
    };
    WeightedFit { params: [raw.params[0], raw.params[1]], std, chi2: raw.chi2, converged: raw.converged }
}

fn exponential_model(p: &[f64], x: f64) -> (f64, Vec<f64>) {
    let e = (-p[1] * x).exp();
    (p[0] * e, vec![e, -p[0] * x * e])
}

/// `y = a + b x`.
pub fn fit_linear(x: &[f64], y: &[f64], stds: Option<&[f64]>) -> WeightedFit {
    let (w, weighted) = weights_from_std(stds, x.len());
    let n = x.len();
    let a = DMatrix::from_fn(n, 2, |i, j| w[i] * if j == 0 { 1.0 } else { x[i] });
    let b = DVector::from_fn(n, |i, _| w[i] * y[i]);
    let normal = a.transpose() * &a;
    let params = normal
        .clone()
        .try_inverse()
        .map(|inv| inv * a.transpose() * &b)
        .unwrap_or_else(|| DVector::from_column_slice(&[y.iter().sum::<f64>() / n as f64, 0.0]));
    let chi2 = (&a * &params - &b).norm_squared();
    let raw = RawFit { params: vec![params[0], params[1]], cov: normal.try_inverse(), chi2, converged: true };
    finish(raw, n, weighted)
}

/// `y = a exp(-b x)`, initialized from a log-linear fit where possible.
pub fn fit_exponential(x: &[f64], y: &[f64], stds: Option<&[f64]>) -> WeightedFit {
    let (w, weighted) = weights_from_std(stds, x.len());
    let init = if y.iter().all(|&v| v > 0.0) || y.iter().all(|&v| v < 0.0) {
        let sign = y[0].signum();
        let logs: Vec<f64> = y.iter().map(|v| (v * sign).ln()).collect();
        let lin = fit_linear(x, &logs, None);
        [sign * lin.params[0].exp(), -lin.params[1]]
    } else {
        [y[0], 0.0]
    };
    let raw = least_squares(exponential_model, x, y, &w, &init);
    finish(raw, x.len(), weighted)
}
