//! Monic orthogonal polynomials for `w(x; t)`.
//!
//! The recurrence is built by the discretised Stieltjes procedure on the
//! measures of [`Quadrature`]; the Hankel moment matrix only serves as a
//! small-degree cross-check because it is exponentially ill-conditioned.

use std::sync::Arc;

use rug::Float;

use crate::error::{Error, Result};
use crate::numeric::{rel_diff, unit_scale, Complex};
use crate::quadrature::{DiscreteMeasure, Quadrature};
use crate::weight::WeightSpec;

/// Largest size for which [`OrthoSystem::hankel_det`] also evaluates the
/// moment determinant directly.
pub const DIRECT_DET_MAX: usize = 8;
pub const DEFAULT_N_MAX: usize = 16;

/// Recurrence data up to degree `n_max`.
#[derive(Debug, Clone)]
pub struct OrthoSystem {
    spec: WeightSpec,
    quad: Arc<Quadrature>,
    level: usize,
    n_max: usize,
    h: Vec<Float>,
    alpha: Vec<Float>,
    beta: Vec<Float>,
    p: Vec<Float>,
    coeffs: Vec<Vec<Float>>,
    moments: Vec<Float>,
    agreement_digits: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Recurrence {
    h: Vec<Float>,
    alpha: Vec<Float>,
    beta: Vec<Float>,
}

fn stieltjes(m: &DiscreteMeasure, n_max: usize) -> Result<Recurrence> {
    let p = m.prec();
    let len = m.len();
    let mut prev = vec![Float::new(p); len];
    let mut cur = vec![Float::with_val(p, 1); len];
    let mut h = Vec::with_capacity(n_max + 1);
    let mut alpha = Vec::with_capacity(n_max + 1);
    let mut beta = Vec::with_capacity(n_max + 1);
    for k in 0..=n_max {
        let mut hk = Float::new(p);
        let mut xk = Float::new(p);
        for i in 0..len {
            let wp2 = Float::with_val(p, cur[i].square_ref()) * &m.weights[i];
            xk += Float::with_val(p, &wp2 * &m.nodes[i]);
            hk += wp2;
        }
        if hk <= 0 {
            return Err(Error::PrecisionExhausted {
                degree: k,
                detail: "squared norm is not positive".into(),
            });
        }
        let ak = xk / &hk;
        let bk = if k == 0 {
            Float::new(p)
        } else {
            Float::with_val(p, &hk / &h[k - 1])
        };
        if k < n_max {
            for i in 0..len {
                let mut next = Float::with_val(p, &m.nodes[i] - &ak);
                next *= &cur[i];
                next -= Float::with_val(p, &bk * &prev[i]);
                prev[i] = std::mem::replace(&mut cur[i], next);
            }
        }
        h.push(hk);
        alpha.push(ak);
        beta.push(bk);
    }
    Ok(Recurrence { h, alpha, beta })
}

fn recurrence_deviation(a: &Recurrence, b: &Recurrence) -> Vec<Float> {
    let p = a.h[0].prec();
    let one = Float::with_val(p, 1);
    (0..a.h.len())
        .map(|k| {
            let mut d = rel_diff(&a.h[k], &b.h[k], &Float::new(p));
            for v in [rel_diff(&a.alpha[k], &b.alpha[k], &one), rel_diff(&a.beta[k], &b.beta[k], &one)] {
                if v > d {
                    d = v;
                }
            }
            d
        })
        .collect()
}

/// Moments `mu_0 .. mu_{k_max}` at quad_tol.
pub fn compute_moments(spec: &WeightSpec, k_max: usize) -> Result<Vec<Float>> {
    moments_with(&Quadrature::new(spec), 0, k_max).map(|(m, _)| m)
}

fn moments_with(quad: &Quadrature, start: usize, k_max: usize) -> Result<(Vec<Float>, usize)> {
    let p = quad.spec().prec();
    let eval = |m: &DiscreteMeasure| -> Result<(Vec<Float>, Vec<Float>)> {
        let mut sums = vec![Float::new(p); k_max + 1];
        let mut scales = vec![Float::new(p); k_max + 1];
        for (x, w) in m.nodes.iter().zip(&m.weights) {
            let mut term = w.clone();
            for k in 0..=k_max {
                scales[k] += Float::with_val(p, term.abs_ref());
                sums[k] += &term;
                term *= x;
            }
        }
        Ok((sums, scales))
    };
    let ((sums, _), level) = quad.converge("moments", start, eval, |a, b| {
        (0..=k_max).all(|k| quad.within_tol(&a.0[k], &b.0[k], &b.1[k]))
    })?;
    Ok((sums, level))
}

/// Builds the system up to degree `n_max` with an adaptive quadrature.
pub fn build_system(spec: &WeightSpec, n_max: usize) -> Result<OrthoSystem> {
    OrthoSystem::build(Arc::new(Quadrature::new(spec)), n_max)
}

impl OrthoSystem {
    /// Builds on a given quadrature (possibly pinned to a level).
    pub fn build(quad: Arc<Quadrature>, n_max: usize) -> Result<OrthoSystem> {
        let spec = quad.spec().clone();
        let p = spec.prec();
        let tol = spec.quad_tol().clone();

        let mut last_dev: Vec<Float> = Vec::new();
        let (rec, level) = {
            let dev_cell = std::cell::RefCell::new(Vec::new());
            let out = quad.converge(
                "Stieltjes recurrence",
                0,
                |m| stieltjes(m, n_max),
                |a, b| {
                    let dev = recurrence_deviation(a, b);
                    let ok = dev.iter().all(|d| *d <= tol);
                    *dev_cell.borrow_mut() = dev;
                    ok
                },
            );
            last_dev.extend(dev_cell.into_inner());
            out.map_err(|e| match e {
                Error::NoConvergence { .. } => {
                    let degree = last_dev.iter().position(|d| *d > tol).unwrap_or(n_max);
                    Error::PrecisionExhausted {
                        degree,
                        detail: "recurrence coefficients did not stabilise under refinement".into(),
                    }
                }
                other => other,
            })?
        };
        let agreement_digits = last_dev
            .iter()
            .map(|d| if d.is_zero() { f64::from(p) * std::f64::consts::LOG10_2 } else { -d.to_f64().log10() })
            .collect();

        let mut coeffs: Vec<Vec<Float>> = vec![vec![Float::with_val(p, 1)]];
        for k in 0..n_max {
            let cur = &coeffs[k];
            let mut next = vec![Float::new(p); k + 2];
            for (i, c) in cur.iter().enumerate() {
                next[i + 1] += c;
                next[i] -= Float::with_val(p, c * &rec.alpha[k]);
            }
            if k >= 1 {
                for (i, c) in coeffs[k - 1].iter().enumerate() {
                    next[i] -= Float::with_val(p, c * &rec.beta[k]);
                }
            }
            coeffs.push(next);
        }
        let pcoef = (0..=n_max)
            .map(|n| if n == 0 { Float::new(p) } else { coeffs[n][n - 1].clone() })
            .collect();

        let moment_start = level.saturating_sub(1);
        let (moments, _) = if quad.pinned().is_some() {
            moments_with(&quad, level, 2 * n_max + 1)?
        } else {
            moments_with(&quad, moment_start, 2 * n_max + 1)?
        };

        let sys = OrthoSystem {
            spec,
            quad,
            level,
            n_max,
            h: rec.h,
            alpha: rec.alpha,
            beta: rec.beta,
            p: pcoef,
            coeffs,
            moments,
            agreement_digits,
        };
        sys.check_orthogonality()?;
        Ok(sys)
    }

    fn check_orthogonality(&self) -> Result<()> {
        let pr = self.prec();
        let m = self.quad.measure(self.level)?;
        let values: Vec<Vec<Float>> = m
            .nodes
            .iter()
            .map(|x| (0..=self.n_max).map(|n| self.eval_p_table(n, x)).collect())
            .collect();
        for a in 0..=self.n_max {
            for b in 0..a {
                let mut s = Float::new(pr);
                for (vals, w) in values.iter().zip(&m.weights) {
                    s += Float::with_val(pr, &vals[a] * &vals[b]) * w;
                }
                let bound = Float::with_val(pr, &self.h[a] * &self.h[b]).sqrt() * self.spec.quad_tol();
                if s.abs() > bound {
                    return Err(Error::PrecisionExhausted {
                        degree: a,
                        detail: format!("P_{a} and P_{b} are not orthogonal to quad_tol"),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn spec(&self) -> &WeightSpec {
        &self.spec
    }

    pub fn quadrature(&self) -> &Arc<Quadrature> {
        &self.quad
    }

    /// Quadrature level the recurrence was accepted at.
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn prec(&self) -> u32 {
        self.spec.prec()
    }

    pub fn h(&self, n: usize) -> &Float {
        &self.h[n]
    }

    pub fn alpha(&self, n: usize) -> &Float {
        &self.alpha[n]
    }

    /// `beta_n`, with `beta_0 = 0`.
    pub fn beta(&self, n: usize) -> &Float {
        &self.beta[n]
    }

    /// Coefficient of `x^{n-1}` in `P_n`; `p(0) = 0`.
    pub fn p_coeff(&self, n: usize) -> &Float {
        &self.p[n]
    }

    /// Ascending monomial coefficients of `P_n`.
    pub fn coeffs(&self, n: usize) -> &[Float] {
        &self.coeffs[n]
    }

    pub fn moments(&self) -> &[Float] {
        &self.moments
    }

    /// Decimal digits of agreement between the last two quadrature levels,
    /// per degree. This is the observed digit budget of each coefficient.
    pub fn agreement_digits(&self) -> &[f64] {
        &self.agreement_digits
    }

    /// `-sum_{j<n} alpha_j`, which must equal `p(n)`.
    pub fn p_from_alpha_sum(&self, n: usize) -> Float {
        let mut s = Float::new(self.prec());
        for a in &self.alpha[..n] {
            s -= a;
        }
        s
    }

    /// `D_n = prod_{j<n} h_j`. For `1 <= n <= 8` the moment determinant is
    /// computed as well and must agree to `10^3 quad_tol`.
    pub fn hankel_det(&self, n: usize) -> Result<Float> {
        if n > self.n_max + 1 {
            return Err(Error::BadConfig(format!("D_{n} needs n_max >= {}", n - 1)));
        }
        let pr = self.prec();
        let prod = self.h[..n].iter().fold(Float::with_val(pr, 1), |acc, h| acc * h);
        if (1..=DIRECT_DET_MAX).contains(&n) {
            let direct = self.moment_determinant(n)?;
            let bound = Float::with_val(pr, self.spec.quad_tol() * 1000u32);
            if rel_diff(&prod, &direct, &Float::new(pr)) > bound {
                return Err(Error::PrecisionExhausted {
                    degree: n,
                    detail: "Hankel determinant disagrees with the product of norms".into(),
                });
            }
        }
        Ok(prod)
    }

    /// `ln D_n` without forming the product.
    pub fn ln_hankel_det(&self, n: usize) -> Float {
        let mut s = Float::new(self.prec());
        for h in &self.h[..n] {
            s += Float::with_val(self.prec(), h.ln_ref());
        }
        s
    }

    /// `det(mu_{i+j})_{i,j<n}` by Gaussian elimination with partial pivoting.
    pub fn moment_determinant(&self, n: usize) -> Result<Float> {
        if 2 * n > self.moments.len() + 1 {
            return Err(Error::BadConfig(format!("not enough moments for a {n}x{n} determinant")));
        }
        Ok(hankel_determinant(&self.moments, n, self.prec()))
    }

    /// Recurrence coefficients from the moments by the Chebyshev algorithm:
    /// `(alpha_0..alpha_{n-1}, beta_0..beta_{n-1})` with `beta_0 = 0`.
    pub fn moment_path_recurrence(&self, n: usize) -> (Vec<Float>, Vec<Float>) {
        chebyshev_algorithm(&self.moments[..2 * n], self.prec())
    }

    /// `(P_n(x), P_n'(x))` by the forward recurrence.
    pub fn eval_with_derivative(&self, n: usize, x: &Float) -> (Float, Float) {
        let pr = self.prec();
        let mut p_prev = Float::new(pr);
        let mut p = Float::with_val(pr, 1);
        let mut d_prev = Float::new(pr);
        let mut d = Float::new(pr);
        for k in 0..n {
            let xa = Float::with_val(pr, x - &self.alpha[k]);
            let pn = Float::with_val(pr, &xa * &p) - Float::with_val(pr, &self.beta[k] * &p_prev);
            let dn = Float::with_val(pr, &xa * &d) + &p - Float::with_val(pr, &self.beta[k] * &d_prev);
            p_prev = std::mem::replace(&mut p, pn);
            d_prev = std::mem::replace(&mut d, dn);
        }
        (p, d)
    }

    pub fn eval_p(&self, n: usize, x: &Float) -> Float {
        self.eval_with_derivative(n, x).0
    }

    pub fn eval_p_prime(&self, n: usize, x: &Float) -> Float {
        self.eval_with_derivative(n, x).1
    }

    /// `(P_n(z), P_n'(z))` at a complex point.
    pub fn eval_complex_with_derivative(&self, n: usize, z: &Complex) -> (Complex, Complex) {
        let pr = self.prec();
        let mut p_prev = Complex::zero(pr);
        let mut p = Complex::from_real(Float::with_val(pr, 1));
        let mut d_prev = Complex::zero(pr);
        let mut d = Complex::zero(pr);
        for k in 0..n {
            let za = z.add_real(&Float::with_val(pr, -&self.alpha[k]));
            let pn = &(&za * &p) - &p_prev.scale(&self.beta[k]);
            let dn = &(&(&za * &d) + &p) - &d_prev.scale(&self.beta[k]);
            p_prev = std::mem::replace(&mut p, pn);
            d_prev = std::mem::replace(&mut d, dn);
        }
        (p, d)
    }

    pub fn eval_p_complex(&self, n: usize, z: &Complex) -> Complex {
        self.eval_complex_with_derivative(n, z).0
    }

    pub fn eval_p_prime_complex(&self, n: usize, z: &Complex) -> Complex {
        self.eval_complex_with_derivative(n, z).1
    }

    /// Horner evaluation from the coefficient table.
    pub fn eval_p_table(&self, n: usize, x: &Float) -> Float {
        let pr = self.prec();
        let mut acc = Float::new(pr);
        for c in self.coeffs[n].iter().rev() {
            acc *= x;
            acc += c;
        }
        acc
    }

    pub fn eval_p_table_complex(&self, n: usize, z: &Complex) -> Complex {
        let pr = self.prec();
        let mut acc = Complex::zero(pr);
        for c in self.coeffs[n].iter().rev() {
            acc = (&acc * z).add_real(c);
        }
        acc
    }

    /// Values `P_0(x_i) .. P_{n_max}(x_i)` at every node of `m`.
    pub fn node_values(&self, m: &DiscreteMeasure) -> Vec<Vec<Float>> {
        let pr = self.prec();
        m.nodes
            .iter()
            .map(|x| {
                let mut vals = Vec::with_capacity(self.n_max + 1);
                vals.push(Float::with_val(pr, 1));
                let mut prev = Float::new(pr);
                for k in 0..self.n_max {
                    let mut next = Float::with_val(pr, x - &self.alpha[k]);
                    next *= &vals[k];
                    next -= Float::with_val(pr, &self.beta[k] * &prev);
                    prev = vals[k].clone();
                    vals.push(next);
                }
                vals
            })
            .collect()
    }

    /// Christoffel–Darboux residual at real `x != y`, normalised by
    /// `max(1, |lhs|, |rhs|)`.
    pub fn christoffel_darboux_residual(&self, n: usize, x: &Float, y: &Float) -> Float {
        let pr = self.prec();
        let mut lhs = Float::new(pr);
        for k in 0..n {
            lhs += Float::with_val(pr, self.eval_p(k, x) * self.eval_p(k, y)) / &self.h[k];
        }
        let num = Float::with_val(pr, self.eval_p(n, x) * self.eval_p(n - 1, y))
            - Float::with_val(pr, self.eval_p(n, y) * self.eval_p(n - 1, x));
        let den = Float::with_val(pr, &self.h[n - 1] * Float::with_val(pr, x - y));
        let rhs = num / den;
        let scale = unit_scale(pr, [&lhs, &rhs]);
        Float::with_val(pr, &lhs - &rhs).abs() / scale
    }

    /// `|int P_a P_b w| / sqrt(h_a h_b)` using an independent adaptive
    /// integration of the coefficient-table polynomials.
    pub fn orthogonality_residual(&self, a: usize, b: usize) -> Result<Float> {
        let pr = self.prec();
        let v = self.quad.integrate(|x| self.eval_p_table(a, x) * self.eval_p_table(b, x))?;
        Ok(v.abs() / Float::with_val(pr, &self.h[a] * &self.h[b]).sqrt())
    }
}

/// Determinant of the Hankel matrix `(mu_{i+j})_{i,j<n}`.
pub fn hankel_determinant(moments: &[Float], n: usize, prec: u32) -> Float {
    let mut a: Vec<Vec<Float>> = (0..n)
        .map(|i| (0..n).map(|j| Float::with_val(prec, &moments[i + j])).collect())
        .collect();
    let mut det = Float::with_val(prec, 1);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&r, &s| a[r][col].cmp_abs(&a[s][col]).unwrap_or(std::cmp::Ordering::Equal))
            .unwrap();
        if a[pivot][col].is_zero() {
            return Float::new(prec);
        }
        if pivot != col {
            a.swap(pivot, col);
            det = -det;
        }
        det *= &a[col][col];
        for r in col + 1..n {
            let factor = Float::with_val(prec, &a[r][col] / &a[col][col]);
            for c in col..n {
                let sub = Float::with_val(prec, &factor * &a[col][c]);
                a[r][c] -= sub;
            }
        }
    }
    det
}

/// Classical Chebyshev algorithm: recurrence coefficients from the first
/// `2n` moments.
pub fn chebyshev_algorithm(moments: &[Float], prec: u32) -> (Vec<Float>, Vec<Float>) {
    let n = moments.len() / 2;
    let mut alpha = Vec::with_capacity(n);
    let mut beta = Vec::with_capacity(n);
    if n == 0 {
        return (alpha, beta);
    }
    let width = 2 * n;
    let mut sig_prev = vec![Float::new(prec); width];
    let mut sig: Vec<Float> = moments.iter().map(|m| Float::with_val(prec, m)).collect();
    alpha.push(Float::with_val(prec, &moments[1] / &moments[0]));
    beta.push(Float::new(prec));
    let mut beta_k = Float::with_val(prec, &moments[0]);
    for k in 1..n {
        let mut next = vec![Float::new(prec); width];
        for l in k..(width - k) {
            next[l] = Float::with_val(prec, &sig[l + 1])
                - Float::with_val(prec, &alpha[k - 1] * &sig[l])
                - Float::with_val(prec, &beta_k * &sig_prev[l]);
        }
        let ak = Float::with_val(prec, &next[k + 1] / &next[k]) - Float::with_val(prec, &sig[k] / &sig[k - 1]);
        let bk = Float::with_val(prec, &next[k] / &sig[k - 1]);
        alpha.push(ak);
        beta.push(bk.clone());
        beta_k = bk;
        sig_prev = std::mem::replace(&mut sig, next);
    }
    (alpha, beta)
}
