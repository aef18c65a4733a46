//! Algebraic identities between the recurrence coefficients and the
//! auxiliary quantities, and the difference system that propagates the
//! auxiliary quantities in `n`.

use rug::Float;
use serde::{Deserialize, Serialize};

use crate::cauchy::{aux_table, AuxPath};
use crate::error::{Error, Result};
use crate::numeric::{pow2, unit_scale, Complex, fmt_real};
use crate::orthopoly::OrthoSystem;
use crate::weight::WeightSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Quadrature,
    Iterated,
}

/// `R_{n,j}` and `r_{n,j}` indexed `[n][j]`, `j` zero-based.
#[derive(Debug, Clone)]
pub struct AuxQuantities {
    big: Vec<Vec<Float>>,
    small: Vec<Vec<Float>>,
    pv: Option<Vec<Float>>,
    provenance: Provenance,
}

impl AuxQuantities {
    pub fn new(big: Vec<Vec<Float>>, small: Vec<Vec<Float>>, provenance: Provenance) -> Self {
        AuxQuantities { big, small, pv: None, provenance }
    }

    /// Quadrature values through exact division by `y - t_j`.
    pub fn from_system(sys: &OrthoSystem) -> Result<Self> {
        Self::from_system_path(sys, AuxPath::Division)
    }

    pub fn from_system_path(sys: &OrthoSystem, path: AuxPath) -> Result<Self> {
        let t = aux_table(sys, path)?;
        Ok(AuxQuantities {
            big: t.big,
            small: t.small,
            pv: Some(t.pv.values),
            provenance: Provenance::Quadrature,
        })
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Largest degree covered.
    pub fn n_max(&self) -> usize {
        self.big.len() - 1
    }

    /// Number of singular points.
    pub fn len(&self) -> usize {
        self.big.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn big_r(&self, n: usize, j: usize) -> &Float {
        &self.big[n][j]
    }

    pub fn small_r(&self, n: usize, j: usize) -> &Float {
        &self.small[n][j]
    }

    pub fn big_row(&self, n: usize) -> &[Float] {
        &self.big[n]
    }

    pub fn small_row(&self, n: usize) -> &[Float] {
        &self.small[n]
    }

    /// Principal value constants, when computed by quadrature.
    pub fn pv_constants(&self) -> Option<&[Float]> {
        self.pv.as_deref()
    }

    pub fn sum_big(&self, n: usize) -> Float {
        sum(&self.big[n])
    }

    pub fn sum_small(&self, n: usize) -> Float {
        sum(&self.small[n])
    }
}

fn sum(v: &[Float]) -> Float {
    let mut s = Float::new(v.first().map_or(64, Float::prec));
    for x in v {
        s += x;
    }
    s
}

/// One checked identity instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub identity: String,
    /// The identity in formula form.
    pub anchor: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<f64>,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ResidualReport {
    pub fn new(identity: &str, anchor: &str, residual: &Float, tolerance: f64) -> Self {
        let r = residual.to_f64().abs();
        ResidualReport {
            identity: identity.to_string(),
            anchor: anchor.to_string(),
            n: None,
            j: None,
            k: None,
            z: None,
            step: None,
            order: None,
            residual: r,
            tolerance,
            pass: r <= tolerance,
            note: None,
        }
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = Some(n);
        self
    }

    pub fn with_j(mut self, j: usize) -> Self {
        self.j = Some(j);
        self
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = Some(k);
        self
    }

    pub fn with_z(mut self, z: &Complex) -> Self {
        self.z = Some(format!("{}{:+}i", fmt_real(&z.re, 17), z.im.to_f64()));
        self
    }

    pub fn with_step(mut self, h: f64) -> Self {
        self.step = Some(h);
        self
    }

    pub fn with_order(mut self, order: f64) -> Self {
        self.order = Some(order);
        self
    }

    pub fn with_note(mut self, note: &str) -> Self {
        self.note = Some(note.to_string());
        self
    }

    /// Replaces the tolerance and recomputes `pass`.
    pub fn retolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self.pass = self.residual <= tolerance;
        self
    }

    /// One JSON object on a single line.
    pub fn to_record(&self) -> String {
        serde_json::to_string(self).expect("report serialises")
    }

    pub fn from_record(line: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }
}

/// `|lhs - rhs| / max(1, |terms|...)`.
pub fn normalized_residual(lhs: &Float, rhs: &Float, terms: &[&Float]) -> Float {
    let p = lhs.prec();
    let scale = unit_scale(p, terms.iter().copied().chain([lhs, rhs]));
    Float::with_val(p, lhs - rhs).abs() / scale
}

/// `10^3 quad_tol`, the tolerance of every algebraic identity.
pub fn identity_tolerance(spec: &WeightSpec) -> f64 {
    1e3 * spec.quad_tol().to_f64()
}

/// `2^{-bits/2}`, below which a divisor counts as zero.
pub fn degeneracy_threshold(prec: u32) -> Float {
    pow2(prec, -(prec as i32) / 2)
}

fn check_range(sys: &OrthoSystem, aux: &AuxQuantities, n: usize) -> Result<()> {
    let top = sys.n_max().min(aux.n_max());
    if n + 1 > top {
        return Err(Error::BadConfig(format!(
            "identities at degree {n} need data up to degree {}, have {top}",
            n + 1
        )));
    }
    Ok(())
}

/// Residuals of the difference equations that follow from the
/// compatibility conditions, at degree `n` (needs `n - 1`, `n`, `n + 1`).
pub fn verify_section3(sys: &OrthoSystem, aux: &AuxQuantities, n: usize) -> Result<Vec<ResidualReport>> {
    check_range(sys, aux, n)?;
    let spec = sys.spec();
    let p = sys.prec();
    let tol = identity_tolerance(spec);
    let f = |v: Float| v;
    let zero = Float::new(p);
    let alpha = sys.alpha(n);
    let beta = sys.beta(n);
    let beta1 = sys.beta(n + 1);
    let big_prev = |j: usize| if n == 0 { &zero } else { aux.big_r(n - 1, j) };
    let mut out = Vec::new();

    let sum_r = aux.sum_big(n);
    let two_alpha = f(Float::with_val(p, alpha * 2u32));
    let mut terms: Vec<&Float> = aux.big_row(n).iter().collect();
    terms.push(&two_alpha);
    out.push(
        ResidualReport::new("sum_R_equals_2alpha", "sum_j R[n,j] = 2 alpha_n", &normalized_residual(&sum_r, &two_alpha, &terms), tol)
            .with_n(n),
    );

    for j in 0..spec.len() {
        let t = spec.position(j);
        let g = spec.exponent(j);
        let lhs = Float::with_val(p, aux.small_r(n + 1, j) + aux.small_r(n, j));
        let ta = Float::with_val(p, t - alpha);
        let tr = Float::with_val(p, &ta * aux.big_r(n, j));
        let rhs = Float::with_val(p, &tr + g);
        let res = normalized_residual(&lhs, &rhs, &[aux.small_r(n + 1, j), aux.small_r(n, j), &tr, g]);
        out.push(
            ResidualReport::new("r_step_sum", "r[n+1,j] + r[n,j] = (t_j - alpha_n) R[n,j] + gamma_j", &res, tol)
                .with_n(n)
                .with_j(j),
        );
    }

    let mut lhs = Float::with_val(p, 1);
    for j in 0..spec.len() {
        lhs += aux.small_r(n + 1, j);
        lhs -= aux.small_r(n, j);
    }
    let rhs = Float::with_val(p, beta1 - beta) * 2u32;
    let mut terms: Vec<&Float> = aux.small_row(n + 1).iter().chain(aux.small_row(n)).collect();
    let b2 = Float::with_val(p, beta1 * 2u32);
    let b1 = Float::with_val(p, beta * 2u32);
    terms.extend([&b2, &b1]);
    out.push(
        ResidualReport::new(
            "r_step_difference_sum",
            "1 + sum_j (r[n+1,j] - r[n,j]) = 2 (beta_{n+1} - beta_n)",
            &normalized_residual(&lhs, &rhs, &terms),
            tol,
        )
        .with_n(n),
    );

    for j in 0..spec.len() {
        let t = spec.position(j);
        let ta = Float::with_val(p, t - alpha);
        let dr = Float::with_val(p, aux.small_r(n + 1, j) - aux.small_r(n, j));
        let lhs = Float::with_val(p, &ta * &dr);
        let up = Float::with_val(p, beta1 * aux.big_r(n + 1, j));
        let down = Float::with_val(p, beta * big_prev(j));
        let rhs = Float::with_val(p, &up - &down);
        let tr1 = Float::with_val(p, &ta * aux.small_r(n + 1, j));
        let tr0 = Float::with_val(p, &ta * aux.small_r(n, j));
        let res = normalized_residual(&lhs, &rhs, &[&tr1, &tr0, &up, &down]);
        out.push(
            ResidualReport::new(
                "r_step_difference",
                "(t_j - alpha_n)(r[n+1,j] - r[n,j]) = beta_{n+1} R[n+1,j] - beta_n R[n-1,j]",
                &res,
                tol,
            )
            .with_n(n)
            .with_j(j),
        );
    }

    let sum_s = aux.sum_small(n);
    let lhs = Float::with_val(p, &sum_s + n as u32);
    let rhs = Float::with_val(p, beta * 2u32);
    let mut terms: Vec<&Float> = aux.small_row(n).iter().collect();
    let nf = Float::with_val(p, n as u32);
    terms.push(&nf);
    out.push(
        ResidualReport::new("sum_r_equals_2beta_minus_n", "n + sum_j r[n,j] = 2 beta_n", &normalized_residual(&lhs, &rhs, &terms), tol)
            .with_n(n),
    );

    for j in 0..spec.len() {
        let g = spec.exponent(j);
        let r = aux.small_r(n, j);
        let sq = Float::with_val(p, r.square_ref());
        let gr = Float::with_val(p, g * r);
        let lhs = Float::with_val(p, &sq - &gr);
        let rhs = Float::with_val(p, beta * aux.big_r(n, j)) * big_prev(j);
        let res = normalized_residual(&lhs, &rhs, &[&sq, &gr]);
        out.push(
            ResidualReport::new("r_quadratic", "r[n,j]^2 - gamma_j r[n,j] = beta_n R[n,j] R[n-1,j]", &res, tol)
                .with_n(n)
                .with_j(j),
        );
    }

    let half = Float::with_val(p, &sum_r / 2u32);
    out.push(
        ResidualReport::new("alpha_from_R", "alpha_n = (1/2) sum_j R[n,j]", &normalized_residual(alpha, &half, &[]), tol)
            .with_n(n),
    );
    let beta_aux = Float::with_val(p, &sum_s + n as u32) / 2u32;
    out.push(
        ResidualReport::new("beta_from_r", "beta_n = n/2 + (1/2) sum_j r[n,j]", &normalized_residual(beta, &beta_aux, &[]), tol)
            .with_n(n),
    );

    // The two j-summed forms of the partial-fraction comparisons.
    let mut lhs = Float::new(p);
    let mut rhs = Float::new(p);
    for j in 0..spec.len() {
        lhs += Float::with_val(p, aux.small_r(n + 1, j) + aux.small_r(n, j));
        let ta = Float::with_val(p, spec.position(j) - alpha);
        rhs += Float::with_val(p, &ta * aux.big_r(n, j)) + spec.exponent(j);
    }
    out.push(
        ResidualReport::new(
            "summed_r_step_sum",
            "sum_j (r[n+1,j] + r[n,j]) = sum_j ((t_j - alpha_n) R[n,j] + gamma_j)",
            &normalized_residual(&lhs, &rhs, &[]),
            tol,
        )
        .with_n(n),
    );
    let mut lhs = Float::new(p);
    let mut rhs = Float::new(p);
    for j in 0..spec.len() {
        let ta = Float::with_val(p, spec.position(j) - alpha);
        lhs += ta * Float::with_val(p, aux.small_r(n + 1, j) - aux.small_r(n, j));
        rhs += Float::with_val(p, beta1 * aux.big_r(n + 1, j));
        rhs -= Float::with_val(p, beta * big_prev(j));
    }
    out.push(
        ResidualReport::new(
            "summed_r_step_difference",
            "sum_j (t_j - alpha_n)(r[n+1,j] - r[n,j]) = sum_j (beta_{n+1} R[n+1,j] - beta_n R[n-1,j])",
            &normalized_residual(&lhs, &rhs, &[]),
            tol,
        )
        .with_n(n),
    );
    Ok(out)
}

/// Residual of the expression of `p(n, t)` through `R_{n,j}`, `r_{n,j}`.
pub fn verify_p_expression(sys: &OrthoSystem, aux: &AuxQuantities, n: usize) -> Result<ResidualReport> {
    let spec = sys.spec();
    let p = sys.prec();
    let thr = degeneracy_threshold(p);
    for j in 0..spec.len() {
        if aux.big_r(n, j).cmp_abs(&thr) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::DegenerateR { n, j });
        }
    }
    let sum_s = aux.sum_small(n);
    let sum_b = aux.sum_big(n);
    let mut tr = Float::new(p);
    let mut quot = Float::new(p);
    for j in 0..spec.len() {
        tr += Float::with_val(p, spec.position(j) * aux.small_r(n, j));
        let r = aux.small_r(n, j);
        let q = Float::with_val(p, r.square_ref()) - Float::with_val(p, spec.exponent(j) * r);
        quot += q / aux.big_r(n, j);
    }
    let mid = Float::with_val(p, &sum_s + n as u32) * &sum_b / 2u32;
    let rhs = Float::with_val(p, &tr - &mid) - &quot;
    let res = normalized_residual(sys.p_coeff(n), &rhs, &[&tr, &mid, &quot]);
    Ok(ResidualReport::new(
        "p_from_aux",
        "p(n) = sum_j t_j r[n,j] - (1/2)(n + sum_j r[n,j]) sum_j R[n,j] - sum_j (r[n,j]^2 - gamma_j r[n,j]) / R[n,j]",
        &res,
        identity_tolerance(spec),
    )
    .with_n(n))
}

/// Initial data of the difference system.
#[derive(Debug, Clone)]
pub struct IterationSeed {
    /// `R_{0,j}`.
    pub big0: Vec<Float>,
    /// Optional `R_{1,j}`; when absent it is produced by the system itself.
    pub big1: Option<Vec<Float>>,
}

impl IterationSeed {
    /// Seed read off a quadrature table: `R_{0,.}`, plus `R_{1,.}` when
    /// `bootstrap` is set.
    pub fn from_aux(aux: &AuxQuantities, bootstrap: bool) -> Self {
        IterationSeed {
            big0: aux.big_row(0).to_vec(),
            big1: if bootstrap && aux.n_max() >= 1 { Some(aux.big_row(1).to_vec()) } else { None },
        }
    }
}

/// Result of [`iterate_difference_system`]; on breakdown `aux` holds the
/// degrees reached before it.
#[derive(Debug, Clone)]
pub struct IterationOutcome {
    pub aux: AuxQuantities,
    /// Index used as the reference singularity in the quotient formula.
    pub pivot: usize,
    pub breakdown: Option<Error>,
}

/// The singularity with largest `|gamma_j|`; the first on ties.
pub fn pivot_index(spec: &WeightSpec) -> usize {
    let mut best = 0;
    for j in 1..spec.len() {
        if spec.exponent(j).cmp_abs(spec.exponent(best)) == Some(std::cmp::Ordering::Greater) {
            best = j;
        }
    }
    best
}

/// Runs `r_{n+1,j} = (t_j - (1/2) sum R_n) R_{n,j} + gamma_j - r_{n,j}`,
/// then `R_{n+1}` at the pivot from the `beta`-quadratic and at the other
/// indices from the quotient formula, up to degree `n_max`.
pub fn iterate_difference_system(spec: &WeightSpec, n_max: usize, seed: &IterationSeed) -> IterationOutcome {
    let p = spec.prec();
    let nn = spec.len();
    let piv = pivot_index(spec);
    let thr = degeneracy_threshold(p);
    let zero_row = || vec![Float::new(p); nn];
    let mut big = vec![seed.big0.clone()];
    let mut small = vec![zero_row()];
    let mut breakdown = None;
    let small_enough = |x: &Float| x.cmp_abs(&thr) != Some(std::cmp::Ordering::Greater);

    for n in 0..n_max {
        let half_sum = Float::with_val(p, sum(&big[n]) / 2u32);
        let mut next_small = zero_row();
        for j in 0..nn {
            let ta = Float::with_val(p, spec.position(j) - &half_sum);
            next_small[j] = ta * &big[n][j] + spec.exponent(j) - &small[n][j];
        }
        let m = n + 1;
        let mut next_big = zero_row();
        match (&seed.big1, m) {
            (Some(b1), 1) => next_big = b1.clone(),
            _ => {
                if !spec.exponent(piv).is_zero() {
                    let rp = &next_small[piv];
                    let qp = Float::with_val(p, rp * Float::with_val(p, rp - spec.exponent(piv)));
                    let denom = Float::with_val(p, &sum(&next_small) + m as u32) * &big[n][piv];
                    if small_enough(&denom) {
                        breakdown = Some(Error::DivisionBreakdown { n: m });
                        break;
                    }
                    next_big[piv] = Float::with_val(p, &qp * 2u32) / &denom;
                    for j in 0..nn {
                        if j == piv || spec.exponent(j).is_zero() {
                            continue;
                        }
                        let den = Float::with_val(p, &qp * &big[n][j]);
                        if small_enough(&den) {
                            breakdown = Some(Error::DivisionBreakdown { n: m });
                            break;
                        }
                        let rj = &next_small[j];
                        let qj = Float::with_val(p, rj * Float::with_val(p, rj - spec.exponent(j)));
                        next_big[j] = qj * &next_big[piv] * &big[n][piv] / den;
                    }
                    if breakdown.is_some() {
                        break;
                    }
                }
            }
        }
        big.push(next_big);
        small.push(next_small);
    }
    IterationOutcome {
        aux: AuxQuantities::new(big, small, Provenance::Iterated),
        pivot: piv,
        breakdown,
    }
}

/// Per-degree relative deviation `max_j |iter - quad| / max(|quad|, floor)`
/// for `R` and `r`, `floor = 1`.
pub fn iteration_deviation(iterated: &AuxQuantities, quadrature: &AuxQuantities) -> Vec<(f64, f64)> {
    let top = iterated.n_max().min(quadrature.n_max());
    (0..=top)
        .map(|n| {
            let dev = |a: &[Float], b: &[Float]| {
                a.iter()
                    .zip(b)
                    .map(|(x, y)| {
                        let p = x.prec();
                        let d = Float::with_val(p, x - y).abs();
                        (d / unit_scale(p, [y])).to_f64()
                    })
                    .fold(0.0f64, f64::max)
            };
            (
                dev(iterated.big_row(n), quadrature.big_row(n)),
                dev(iterated.small_row(n), quadrature.small_row(n)),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orthopoly::build_system;

    fn spec(ts: &[f64], gs: &[f64]) -> WeightSpec {
        WeightSpec::from_f64(ts, gs, 256, 1e-30).unwrap()
    }

    fn setup(ts: &[f64], gs: &[f64], n_max: usize) -> (OrthoSystem, AuxQuantities) {
        let sys = build_system(&spec(ts, gs), n_max).unwrap();
        let aux = AuxQuantities::from_system(&sys).unwrap();
        (sys, aux)
    }

    #[test]
    fn gaussian_reduction_is_exact() {
        let (sys, aux) = setup(&[0.0], &[0.0], 6);
        for n in 0..6 {
            for r in verify_section3(&sys, &aux, n).unwrap() {
                assert!(r.pass, "{r:?}");
            }
            assert!(aux.big_row(n).iter().chain(aux.small_row(n)).all(|v| v.is_zero()));
        }
    }

    #[test]
    fn single_singularity_identities() {
        let (sys, aux) = setup(&[0.5], &[1.0], 6);
        for r in verify_section3(&sys, &aux, 4).unwrap() {
            assert!(r.pass, "{r:?}");
        }
        assert!(verify_p_expression(&sys, &aux, 3).unwrap().pass);
    }

    #[test]
    fn two_singularity_identities() {
        let (sys, aux) = setup(&[-0.6, 0.8], &[0.5, 1.5], 10);
        let reports = verify_section3(&sys, &aux, 9).unwrap();
        assert_eq!(reports.len(), 1 + 2 + 1 + 2 + 1 + 2 + 2 + 2);
        for r in reports {
            assert!(r.pass, "{r:?}");
        }
        assert!(verify_p_expression(&sys, &aux, 6).unwrap().pass);
    }

    #[test]
    fn symmetric_point_is_degenerate_for_p_expression() {
        let (sys, aux) = setup(&[0.0], &[1.0], 4);
        assert_eq!(verify_p_expression(&sys, &aux, 2).unwrap_err(), Error::DegenerateR { n: 2, j: 0 });
        for n in 0..=4 {
            assert!(sys.p_coeff(n).clone().abs() < 1e-40);
        }
    }

    #[test]
    fn out_of_range_degree_is_rejected() {
        let (sys, aux) = setup(&[0.5], &[1.0], 3);
        assert!(matches!(verify_section3(&sys, &aux, 3), Err(Error::BadConfig(_))));
    }

    #[test]
    fn zero_exponents_iterate_to_zero() {
        let s = spec(&[-0.3, 0.4], &[0.0, 0.0]);
        let seed = IterationSeed { big0: vec![Float::new(256); 2], big1: None };
        let out = iterate_difference_system(&s, 8, &seed);
        assert!(out.breakdown.is_none());
        assert_eq!(out.aux.n_max(), 8);
        for n in 0..=8 {
            assert!(out.aux.big_row(n).iter().chain(out.aux.small_row(n)).all(|v| v.is_zero()));
        }
    }

    #[test]
    fn iteration_reproduces_quadrature() {
        for (ts, gs) in [(vec![0.5], vec![1.0]), (vec![-0.6, 0.8], vec![0.5, 1.5])] {
            let (_, aux) = setup(&ts, &gs, 10);
            for bootstrap in [false, true] {
                let out = iterate_difference_system(&spec(&ts, &gs), 10, &IterationSeed::from_aux(&aux, bootstrap));
                assert!(out.breakdown.is_none());
                for (n, (dr, ds)) in iteration_deviation(&out.aux, &aux).into_iter().enumerate() {
                    assert!(dr <= 1e-12 && ds <= 1e-12, "n = {n}: {dr:e} {ds:e}");
                }
            }
        }
    }

    #[test]
    fn pivot_prefers_largest_exponent() {
        assert_eq!(pivot_index(&spec(&[-0.6, 0.8], &[0.5, 1.5])), 1);
        assert_eq!(pivot_index(&spec(&[-0.6, 0.8], &[-0.5, 0.5])), 0);
    }

    #[test]
    fn report_round_trips_as_one_line() {
        let r = ResidualReport::new("x", "a = b", &Float::with_val(64, 1e-40), 1e-27).with_n(3).with_j(1);
        let line = r.to_record();
        assert!(!line.contains('\n'));
        assert_eq!(ResidualReport::from_record(&line).unwrap(), r);
        assert!(r.pass);
        assert!(!r.retolerance(0.0).pass);
    }
}
