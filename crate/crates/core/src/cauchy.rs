//! Cauchy-type integrals against `w`.
//!
//! Two kinds occur. Principal values at the singular points feed the
//! auxiliary quantities `R_{n,j}`, `r_{n,j}`; transforms at non-real `z`
//! feed the ladder functions `A_n(z)`, `B_n(z)`.
//!
//! Indices `j` are zero-based throughout.

use rug::Float;

use crate::error::{Error, Result};
use crate::numeric::Complex;
use crate::orthopoly::OrthoSystem;
use crate::quadrature::{integrate_weighted_complex, DiscreteMeasure, Quadrature};
use crate::weight::WeightSpec;

/// `PV int w(y) / (y - t_j) dy` for every `j`.
#[derive(Debug, Clone)]
pub struct PVConstants {
    pub values: Vec<Float>,
    pub half_widths: Vec<Float>,
    /// Difference between the last two quadrature levels.
    pub error_estimates: Vec<Float>,
}

/// Which auxiliary quantity: `R_{n,j}` pairs `P_n^2` with `h_n`, `r_{n,j}`
/// pairs `P_n P_{n-1}` with `h_{n-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuxKind {
    Big,
    Small,
}

/// How the singular integral inside `R_{n,j}`, `r_{n,j}` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuxPath {
    /// Exact division by `y - t_j`, leaving a regular integral plus a
    /// multiple of the principal value constant.
    Division,
    /// Principal-value quadrature of the full integrand.
    Direct,
}

/// `R_{n,j}` and `r_{n,j}` for `0 <= n <= n_max`, indexed `[n][j]`.
#[derive(Debug, Clone)]
pub struct AuxTable {
    pub big: Vec<Vec<Float>>,
    pub small: Vec<Vec<Float>>,
    pub pv: PVConstants,
    pub level: usize,
}

/// Principal value of `w / (y - t_j)`.
pub fn pv_weight_transform(spec: &WeightSpec, j: usize) -> Result<Float> {
    Ok(pv_constants(&Quadrature::new(spec), 0)?.values.swap_remove(j))
}

/// All principal value constants, converged from level `start`.
pub fn pv_constants(quad: &Quadrature, start: usize) -> Result<PVConstants> {
    let spec = quad.spec();
    let eval = |m: &DiscreteMeasure| -> Result<Vec<(Float, Float)>> {
        Ok((0..spec.len()).map(|j| m.pv_sum(spec, j, |_, _| one(m.prec()))).collect())
    };
    let mut prev: Option<Vec<(Float, Float)>> = None;
    let (vals, _) = quad.converge("principal value", start, eval, |a, b| {
        let ok = a.iter().zip(b).all(|(x, y)| quad.within_tol(&x.0, &y.0, &y.1));
        prev = Some(a.clone());
        ok
    })?;
    let p = spec.prec();
    let error_estimates = match &prev {
        Some(a) => a.iter().zip(&vals).map(|(x, y)| Float::with_val(p, &x.0 - &y.0).abs()).collect(),
        None => vec![Float::new(p); spec.len()],
    };
    Ok(PVConstants {
        values: vals.into_iter().map(|v| v.0).collect(),
        half_widths: quad.plan().half_widths.clone(),
        error_estimates,
    })
}

fn one(p: u32) -> Float {
    Float::with_val(p, 1)
}

/// `int f(y) w(y) / (z - y) dy` for non-real `z`.
pub fn cauchy_complex<F: Fn(&Float) -> Float>(spec: &WeightSpec, f: F, z: &Complex) -> Result<Complex> {
    if z.im.is_zero() {
        return Err(Error::RealAxisPole);
    }
    integrate_weighted_complex(spec, |y| {
        let d = z.add_real(&Float::with_val(spec.prec(), -y));
        d.recip().scale(&f(y))
    })
}

/// Cauchy transforms of the products appearing in the ladder functions.
#[derive(Debug, Clone)]
pub struct CauchyRow {
    pub z: Complex,
    /// `int P_n^2 w / (z - y) dy`, `0 <= n <= n_max`.
    pub diag: Vec<Complex>,
    /// `int P_n P_{n-1} w / (z - y) dy`; entry 0 is zero.
    pub off: Vec<Complex>,
}

/// Both product transforms for every degree at one point `z`.
pub fn cauchy_row(sys: &OrthoSystem, z: &Complex) -> Result<CauchyRow> {
    if z.im.is_zero() {
        return Err(Error::RealAxisPole);
    }
    let p = sys.prec();
    let n_max = sys.n_max();
    let quad = sys.quadrature();
    let eval = |m: &DiscreteMeasure| -> Result<(Vec<Complex>, Vec<Complex>, Vec<Float>, Vec<Float>)> {
        let vals = sys.node_values(m);
        let mut diag = vec![Complex::zero(p); n_max + 1];
        let mut off = vec![Complex::zero(p); n_max + 1];
        let mut dscale = vec![Float::new(p); n_max + 1];
        let mut oscale = vec![Float::new(p); n_max + 1];
        for (i, (y, w)) in m.nodes.iter().zip(&m.weights).enumerate() {
            let kernel = z.add_real(&Float::with_val(p, -y)).recip();
            let kabs = kernel.abs();
            for n in 0..=n_max {
                let sq = Float::with_val(p, vals[i][n].square_ref()) * w;
                dscale[n] += Float::with_val(p, sq.abs_ref()) * &kabs;
                diag[n].add_scaled(&sq, &kernel);
                if n >= 1 {
                    let pr = Float::with_val(p, &vals[i][n] * &vals[i][n - 1]) * w;
                    oscale[n] += Float::with_val(p, pr.abs_ref()) * &kabs;
                    off[n].add_scaled(&pr, &kernel);
                }
            }
        }
        Ok((diag, off, dscale, oscale))
    };
    let close = |a: &(Vec<Complex>, Vec<Complex>, Vec<Float>, Vec<Float>),
                 b: &(Vec<Complex>, Vec<Complex>, Vec<Float>, Vec<Float>)| {
        let tol = sys.spec().quad_tol();
        (0..=n_max).all(|n| {
            (&a.0[n] - &b.0[n]).abs() <= Float::with_val(p, &b.2[n] * tol)
                && (&a.1[n] - &b.1[n]).abs() <= Float::with_val(p, &b.3[n] * tol)
        })
    };
    let ((diag, off, _, _), _) = quad.converge("Cauchy transform", sys.level().saturating_sub(1), eval, close)?;
    Ok(CauchyRow { z: z.clone(), diag, off })
}

/// Product of two ascending coefficient vectors.
pub fn poly_mul(a: &[Float], b: &[Float], p: u32) -> Vec<Float> {
    let mut out = vec![Float::new(p); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (k, y) in b.iter().enumerate() {
            out[i + k] += Float::with_val(p, x * y);
        }
    }
    out
}

/// Divides an ascending polynomial by `(y - t)`, returning the quotient and
/// the remainder (the value at `t`).
pub fn synthetic_division(c: &[Float], t: &Float) -> (Vec<Float>, Float) {
    let p = c[0].prec();
    let d = c.len() - 1;
    if d == 0 {
        return (vec![Float::new(p)], c[0].clone());
    }
    let mut q = vec![Float::new(p); d];
    q[d - 1] = c[d].clone();
    for k in (1..d).rev() {
        q[k - 1] = Float::with_val(p, &q[k] * t) + &c[k];
    }
    let rem = Float::with_val(p, &q[0] * t) + &c[0];
    (q, rem)
}

pub fn horner(c: &[Float], x: &Float) -> Float {
    let mut acc = Float::new(c[0].prec());
    for v in c.iter().rev() {
        acc *= x;
        acc += v;
    }
    acc
}

/// One auxiliary quantity on the adaptive quadrature of `sys`.
pub fn aux_integral(sys: &OrthoSystem, n: usize, j: usize, kind: AuxKind) -> Result<Float> {
    let table = aux_table(sys, AuxPath::Division)?;
    Ok(match kind {
        AuxKind::Big => table.big[n][j].clone(),
        AuxKind::Small => table.small[n][j].clone(),
    })
}

/// Same as [`aux_integral`] by principal-value quadrature of the whole
/// singular integrand.
pub fn aux_integral_direct(sys: &OrthoSystem, n: usize, j: usize, kind: AuxKind) -> Result<Float> {
    let table = aux_table(sys, AuxPath::Direct)?;
    Ok(match kind {
        AuxKind::Big => table.big[n][j].clone(),
        AuxKind::Small => table.small[n][j].clone(),
    })
}

type Entries = Vec<Vec<(Float, Float)>>;

struct Products {
    /// `(P_n^2, h_n)` and `(P_n P_{n-1}, h_{n-1})` coefficient vectors.
    diag: Vec<Vec<Float>>,
    off: Vec<Vec<Float>>,
}

fn products(sys: &OrthoSystem) -> Products {
    let p = sys.prec();
    let diag = (0..=sys.n_max()).map(|n| poly_mul(sys.coeffs(n), sys.coeffs(n), p)).collect();
    let off = (0..=sys.n_max())
        .map(|n| {
            if n == 0 {
                vec![Float::new(p)]
            } else {
                poly_mul(sys.coeffs(n), sys.coeffs(n - 1), p)
            }
        })
        .collect();
    Products { diag, off }
}

/// `(value, scale)` of `gamma / h * [int Q w + rem * pv]`.
fn division_entry(m: &DiscreteMeasure, c: &[Float], t: &Float, pv: &(Float, Float), gamma: &Float, h: &Float) -> (Float, Float) {
    let p = m.prec();
    let (q, rem) = synthetic_division(c, t);
    let (iq, iqs) = m.sum(|_, x| horner(&q, x));
    let factor = Float::with_val(p, gamma / h);
    let value = (iq + Float::with_val(p, &rem * &pv.0)) * &factor;
    let scale = (iqs + Float::with_val(p, rem.abs_ref()) * &pv.1) * factor.abs();
    (value, scale)
}

fn table_on(sys: &OrthoSystem, m: &DiscreteMeasure, path: AuxPath, prods: &Products) -> (Entries, Entries, Vec<(Float, Float)>) {
    let p = sys.prec();
    let spec = sys.spec();
    let n_max = sys.n_max();
    let big_n = spec.len();
    let zero = || (Float::new(p), Float::new(p));
    let mut big = vec![vec![zero(); big_n]; n_max + 1];
    let mut small = vec![vec![zero(); big_n]; n_max + 1];
    let pvs: Vec<(Float, Float)> = (0..big_n).map(|j| m.pv_sum(spec, j, |_, _| one(p))).collect();
    let node_vals = match path {
        AuxPath::Direct => Some(sys.node_values(m)),
        AuxPath::Division => None,
    };
    for j in 0..big_n {
        let gamma = spec.exponent(j);
        if gamma.is_zero() {
            continue;
        }
        let t = spec.position(j);
        for n in 0..=n_max {
            big[n][j] = match &node_vals {
                None => division_entry(m, &prods.diag[n], t, &pvs[j], gamma, sys.h(n)),
                Some(v) => {
                    let (s, sc) = m.pv_sum(spec, j, |i, _| Float::with_val(p, v[i][n].square_ref()));
                    let f = Float::with_val(p, gamma / sys.h(n));
                    (s * &f, sc * f.abs())
                }
            };
            if n >= 1 {
                small[n][j] = match &node_vals {
                    None => division_entry(m, &prods.off[n], t, &pvs[j], gamma, sys.h(n - 1)),
                    Some(v) => {
                        let (s, sc) = m.pv_sum(spec, j, |i, _| Float::with_val(p, &v[i][n] * &v[i][n - 1]));
                        let f = Float::with_val(p, gamma / sys.h(n - 1));
                        (s * &f, sc * f.abs())
                    }
                };
            }
        }
    }
    (big, small, pvs)
}

/// `R_{n,j}`, `r_{n,j}` for all `n <= n_max` and all `j`.
pub fn aux_table(sys: &OrthoSystem, path: AuxPath) -> Result<AuxTable> {
    let p = sys.prec();
    let quad = sys.quadrature();
    let prods = products(sys);
    let tol = sys.spec().quad_tol().clone();
    let entries_close = |a: &Entries, b: &Entries| {
        a.iter().flatten().zip(b.iter().flatten()).all(|(x, y)| {
            let diff = Float::with_val(p, &x.0 - &y.0).abs();
            diff <= Float::with_val(p, &y.1 * &tol)
        })
    };
    let mut prev_pv: Option<Vec<(Float, Float)>> = None;
    let ((big, small, pvs), level) = quad
        .converge(
            "auxiliary quantities",
            sys.level().saturating_sub(1),
            |m| Ok(table_on(sys, m, path, &prods)),
            |a, b| {
                prev_pv = Some(a.2.clone());
                entries_close(&a.0, &b.0)
                    && entries_close(&a.1, &b.1)
                    && a.2.iter().zip(&b.2).all(|(x, y)| quad.within_tol(&x.0, &y.0, &y.1))
            },
        )
        .map_err(|e| match e {
            Error::NoConvergence { .. } => Error::PrecisionExhausted {
                degree: sys.n_max(),
                detail: "auxiliary integrals did not stabilise under refinement".into(),
            },
            other => other,
        })?;
    let error_estimates = match &prev_pv {
        Some(a) => a.iter().zip(&pvs).map(|(x, y)| Float::with_val(p, &x.0 - &y.0).abs()).collect(),
        None => vec![Float::new(p); pvs.len()],
    };
    let strip = |t: Entries| t.into_iter().map(|row| row.into_iter().map(|e| e.0).collect()).collect();
    Ok(AuxTable {
        big: strip(big),
        small: strip(small),
        pv: PVConstants {
            values: pvs.into_iter().map(|v| v.0).collect(),
            half_widths: quad.plan().half_widths.clone(),
            error_estimates,
        },
        level,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{pi, rel_diff, sqrt_pi};
    use crate::orthopoly::build_system;

    fn spec(ts: &[f64], gs: &[f64]) -> WeightSpec {
        WeightSpec::from_f64(ts, gs, 256, 1e-30).unwrap()
    }

    #[test]
    fn pv_vanishes_at_symmetric_point() {
        for g in [-0.5, 0.0, 1.0, 2.5] {
            let v = pv_weight_transform(&spec(&[0.0], &[g]), 0).unwrap();
            assert!(v.abs() < 1e-60, "gamma = {g}");
        }
    }

    #[test]
    fn pv_with_even_exponent_is_a_polynomial_moment() {
        // (y - 1/2)^2 / (y - 1/2) = y - 1/2, so the integral is -sqrt(pi)/2.
        let v = pv_weight_transform(&spec(&[0.5], &[2.0]), 0).unwrap();
        let expected = -sqrt_pi(256) / 2u32;
        assert!(rel_diff(&v, &expected, &Float::new(256)) < 1e-55);
    }

    #[test]
    fn pv_is_odd_under_reflection() {
        let s = spec(&[-0.6, 0.8], &[-0.5, 1.5]);
        let r = s.reflected();
        let a = pv_weight_transform(&s, 0).unwrap();
        let b = pv_weight_transform(&r, 1).unwrap();
        assert!(Float::with_val(256, &a + &b).abs() < 1e-40);
    }

    #[test]
    fn gaussian_cauchy_transform_at_i() {
        // int e^{-y^2} / (i - y) dy = -i pi e erfc(1)
        let s = spec(&[0.0], &[0.0]);
        let z = Complex::from_f64(256, 0.0, 1.0);
        let v = cauchy_complex(&s, |_| Float::with_val(256, 1), &z).unwrap();
        let e = Float::with_val(256, 1).exp();
        let expected = -(pi(256) * e * Float::with_val(256, 1).erfc());
        assert!(v.re.clone().abs() < 1e-60);
        assert!(rel_diff(&v.im, &expected, &Float::new(256)) < 1e-50);
    }

    #[test]
    fn cauchy_transform_rejects_real_points() {
        let s = spec(&[0.0], &[1.0]);
        let z = Complex::from_f64(256, 0.3, 0.0);
        assert_eq!(cauchy_complex(&s, |_| Float::with_val(256, 1), &z).unwrap_err(), Error::RealAxisPole);
    }

    #[test]
    fn cauchy_transform_is_schwarz_symmetric_and_decays() {
        let s = spec(&[-0.6, 0.8], &[0.5, 1.5]);
        let f = |y: &Float| Float::with_val(256, y * y) + 1u32;
        let z = Complex::from_f64(256, 0.7, 0.9);
        let a = cauchy_complex(&s, f, &z).unwrap();
        let b = cauchy_complex(&s, f, &z.conj()).unwrap();
        assert!((&a.conj() - &b).abs() < 1e-50);

        let far = Complex::from_f64(256, 0.0, 1e6);
        let v = cauchy_complex(&s, f, &far).unwrap();
        let mass = crate::quadrature::integrate_weighted(&s, f).unwrap();
        let lead = far.recip().scale(&mass);
        let rel = (&v - &lead).abs() / lead.abs();
        assert!(rel < 1e-5);
    }

    #[test]
    fn division_and_direct_paths_agree() {
        for gs in [[0.5, 1.5], [-0.5, 1.5]] {
            let sys = build_system(&spec(&[-0.6, 0.8], &gs), 8).unwrap();
            let a = aux_table(&sys, AuxPath::Division).unwrap();
            let b = aux_table(&sys, AuxPath::Direct).unwrap();
            let one = Float::with_val(256, 1);
            for n in 0..=8 {
                for j in 0..2 {
                    assert!(rel_diff(&a.big[n][j], &b.big[n][j], &one) < 1e-25, "R[{n}][{j}]");
                    assert!(rel_diff(&a.small[n][j], &b.small[n][j], &one) < 1e-25, "r[{n}][{j}]");
                }
            }
        }
    }

    #[test]
    fn sum_rules_hold() {
        let sys = build_system(&spec(&[-0.6, 0.8], &[0.5, 1.5]), 8).unwrap();
        let t = aux_table(&sys, AuxPath::Division).unwrap();
        for n in 0..=8 {
            let sr = Float::with_val(256, &t.big[n][0] + &t.big[n][1]);
            let two_alpha = Float::with_val(256, sys.alpha(n) * 2u32);
            assert!(Float::with_val(256, &sr - &two_alpha).abs() < 1e-27, "sum R at {n}");
            let ss = Float::with_val(256, &t.small[n][0] + &t.small[n][1]);
            let rhs = Float::with_val(256, sys.beta(n) * 2u32) - n as u32;
            assert!(Float::with_val(256, &ss - &rhs).abs() < 1e-27, "sum r at {n}");
        }
        assert!(t.small[0].iter().all(|v| v.is_zero()));
    }

    #[test]
    fn synthetic_division_reconstructs() {
        let p = 128;
        let c: Vec<Float> = [3.0, -2.0, 0.5, 1.0].iter().map(|v| Float::with_val(p, *v)).collect();
        let t = Float::with_val(p, 0.75);
        let (q, rem) = synthetic_division(&c, &t);
        assert_eq!(rem, horner(&c, &t));
        let x = Float::with_val(p, -1.3);
        let back = horner(&q, &x) * Float::with_val(p, &x - &t) + &rem;
        assert!((back - horner(&c, &x)).abs() < 1e-30);
    }
}
