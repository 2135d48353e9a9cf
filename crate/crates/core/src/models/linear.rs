use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{ClassWeights, LogisticParams, SvmParams};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Column-wise z-scoring fit on training data. Constant columns map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Standardizer<T> {
    pub mean: Vec<T>,
    pub scale: Vec<T>,
}

impl<T: Scalar> Standardizer<T> {
    pub fn fit(x: &Matrix<T>) -> Self {
        let n = T::from_count(x.rows().max(1));
        let d = x.cols();
        let mut mean = vec![T::zero(); d];
        for r in x.row_iter() {
            for (m, &v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![T::zero(); d];
        for r in x.row_iter() {
            for ((s, &m), &v) in var.iter_mut().zip(&mean).zip(r) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > T::zero() {
                    sd
                } else {
                    T::one()
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn transform_row(&self, row: &[T], out: &mut [T]) {
        for (((o, &v), &m), &s) in out.iter_mut().zip(row).zip(&self.mean).zip(&self.scale) {
            *o = (v - m) / s;
        }
    }

    pub fn transform(&self, x: &Matrix<T>) -> Matrix<T> {
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for i in 0..x.rows() {
            self.transform_row(x.row(i), out.row_mut(i));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    Logistic,
    Hinge,
}

/// β·z(x) + b on standardized inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LinearModel<T> {
    pub loss: Loss,
    pub standardizer: Standardizer<T>,
    pub coef: Vec<T>,
    pub intercept: T,
    /// Optimizer steps taken.
    pub iterations: usize,
    /// ∞-norm of the objective gradient at the returned point (logistic only).
    pub gradient_norm: Option<T>,
}

impl<T: Scalar> LinearModel<T> {
    pub fn coefficients(&self) -> &[T] {
        &self.coef
    }

    pub fn decision(&self, row: &[T]) -> T {
        let mut z = self.intercept;
        for (((&v, &m), &s), &c) in row
            .iter()
            .zip(&self.standardizer.mean)
            .zip(&self.standardizer.scale)
            .zip(&self.coef)
        {
            z += c * ((v - m) / s);
        }
        z
    }

    /// Positive iff the margin is strictly positive (probability strictly above ½).
    pub fn predict_row(&self, row: &[T]) -> bool {
        self.decision(row) > T::zero()
    }

    pub fn probability(&self, row: &[T]) -> T {
        sigmoid(self.decision(row))
    }
}

fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// log(1 + e^z) without overflow.
fn softplus<T: Scalar>(z: T) -> T {
    if z > T::zero() {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

struct LogisticObjective<'a, T> {
    z: &'a Matrix<T>,
    y: &'a [bool],
    w: Vec<T>,
    lambda: T,
    inv_n: T,
}

impl<T: Scalar> LogisticObjective<'_, T> {
    /// Parameters are [β…, b]; returns (value, gradient).
    fn eval(&self, theta: &[T]) -> (T, Vec<T>) {
        let d = self.z.cols();
        let mut grad = vec![T::zero(); d + 1];
        let mut value = T::zero();
        for (i, row) in self.z.row_iter().enumerate() {
            let mut s = theta[d];
            for (&c, &v) in theta[..d].iter().zip(row) {
                s += c * v;
            }
            let target = if self.y[i] { T::one() } else { T::zero() };
            value += self.w[i] * (softplus(s) - target * s);
            let r = self.w[i] * (sigmoid(s) - target);
            for (g, &v) in grad[..d].iter_mut().zip(row) {
                *g += r * v;
            }
            grad[d] += r;
        }
        value *= self.inv_n;
        for g in grad.iter_mut() {
            *g *= self.inv_n;
        }
        let half = T::lit(0.5);
        for (g, &c) in grad[..d].iter_mut().zip(&theta[..d]) {
            *g += self.lambda * c;
            value += half * self.lambda * c * c;
        }
        (value, grad)
    }
}

fn inf_norm<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |a, &b| a.max(b.abs()))
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Minimizes the weighted logistic loss with L-BFGS (memory 10, Armijo backtracking).
pub(super) fn fit_logistic<T: Scalar>(
    x: &Matrix<T>,
    y: &[bool],
    weights: &ClassWeights,
    params: &LogisticParams,
) -> LinearModel<T> {
    let standardizer = Standardizer::fit(x);
    let z = standardizer.transform(x);
    let d = x.cols();
    let obj = LogisticObjective {
        z: &z,
        y,
        w: y.iter().map(|&l| T::lit(weights.for_label(l))).collect(),
        lambda: T::lit(params.lambda),
        inv_n: T::one() / T::from_count(x.rows()),
    };
    let tol = T::lit(params.tolerance);
    let mut theta = vec![T::zero(); d + 1];
    let (mut f, mut g) = obj.eval(&theta);
    let mut history: VecDeque<(Vec<T>, Vec<T>, T)> = VecDeque::new();
    let mut iterations = 0;

    while iterations < params.max_epochs && inf_norm(&g) >= tol {
        // two-loop recursion for the search direction
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, yv, rho) in history.iter().rev() {
            let a = *rho * dot(s, &q);
            for (qi, &yi) in q.iter_mut().zip(yv) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, yv, _)) = history.back() {
            let gamma = dot(s, yv) / dot(yv, yv);
            q.iter_mut().for_each(|qi| *qi *= gamma);
        } else {
            let gn = inf_norm(&g);
            if gn > T::one() {
                q.iter_mut().for_each(|qi| *qi /= gn);
            }
        }
        for ((s, yv, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
            let b = *rho * dot(yv, &q);
            for (qi, &si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        let mut dir: Vec<T> = q.into_iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if slope >= T::zero() {
            // not a descent direction; restart from steepest descent
            history.clear();
            dir = g.iter().map(|&v| -v).collect();
            slope = dot(&g, &dir);
        }

        let mut step = T::one();
        let c1 = T::lit(1e-4);
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<T> = theta.iter().zip(&dir).map(|(&t, &p)| t + step * p).collect();
            let (fc, gc) = obj.eval(&cand);
            if fc <= f + c1 * step * slope {
                accepted = Some((cand, fc, gc));
                break;
            }
            step *= T::lit(0.5);
        }
        iterations += 1;
        let Some((cand, fc, gc)) = accepted else {
            break;
        };
        let s: Vec<T> = cand.iter().zip(&theta).map(|(&a, &b)| a - b).collect();
        let yv: Vec<T> = gc.iter().zip(&g).map(|(&a, &b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > T::epsilon() * dot(&yv, &yv) {
            if history.len() == 10 {
                history.pop_front();
            }
            history.push_back((s, yv, T::one() / sy));
        }
        theta = cand;
        f = fc;
        g = gc;
    }

    LinearModel {
        loss: Loss::Logistic,
        standardizer,
        intercept: theta[d],
        coef: theta[..d].to_vec(),
        iterations,
        gradient_norm: Some(inf_norm(&g)),
    }
}

/// Full-batch subgradient descent on λ‖β‖²/2 + (1/n)·Σ w_i·max(0, 1 − ỹ_i(β·x_i + b))
/// for exactly `iterations` steps with η_t = 1/(λ(t + t0)).
pub(super) fn fit_svm<T: Scalar>(
    x: &Matrix<T>,
    y: &[bool],
    weights: &ClassWeights,
    params: &SvmParams,
) -> LinearModel<T> {
    let standardizer = Standardizer::fit(x);
    let z = standardizer.transform(x);
    let d = x.cols();
    let lambda = T::lit(params.lambda);
    let t0 = T::lit(params.t0);
    let inv_n = T::one() / T::from_count(x.rows());
    let signed_w: Vec<T> = y
        .iter()
        .map(|&l| {
            let w = T::lit(weights.for_label(l));
            if l {
                w
            } else {
                -w
            }
        })
        .collect();
    let mut coef = vec![T::zero(); d];
    let mut b = T::zero();
    let mut g = vec![T::zero(); d];
    // Suffix averaging: the returned model is the mean of the last half of the iterates.
    let tail_start = params.iterations / 2;
    let mut avg_coef = vec![T::zero(); d];
    let mut avg_b = T::zero();
    for t in 0..params.iterations {
        let eta = T::one() / (lambda * (T::from_count(t) + t0));
        g.iter_mut().zip(&coef).for_each(|(gi, &c)| *gi = lambda * c);
        let mut gb = T::zero();
        for (i, row) in z.row_iter().enumerate() {
            let ysign = if y[i] { T::one() } else { -T::one() };
            let margin = ysign * (dot(&coef, row) + b);
            if margin < T::one() {
                let sw = signed_w[i] * inv_n;
                for (gi, &v) in g.iter_mut().zip(row) {
                    *gi -= sw * v;
                }
                gb -= sw;
            }
        }
        coef.iter_mut().zip(&g).for_each(|(c, &gi)| *c -= eta * gi);
        b -= eta * gb;
        if t >= tail_start {
            avg_coef.iter_mut().zip(&coef).for_each(|(a, &c)| *a += c);
            avg_b += b;
        }
    }
    let tail = T::from_count((params.iterations - tail_start).max(1));
    avg_coef.iter_mut().for_each(|a| *a /= tail);
    avg_b /= tail;
    LinearModel {
        loss: Loss::Hinge,
        standardizer,
        coef: avg_coef,
        intercept: avg_b,
        iterations: params.iterations,
        gradient_norm: None,
    }
}
