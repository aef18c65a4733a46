//! Ladder functions `A_n(z)`, `B_n(z)` and the relations they satisfy.

use rayon::prelude::*;
use rug::Float;

use crate::cauchy::{cauchy_row, CauchyRow};
use crate::error::{Error, Result};
use crate::identities::{identity_tolerance, AuxQuantities, ResidualReport};
use crate::numeric::Complex;
use crate::orthopoly::OrthoSystem;

#[derive(Debug, Clone)]
pub struct LadderPair {
    pub n: usize,
    pub z: Complex,
    pub a: Complex,
    pub b: Complex,
}

/// `A_n`, `B_n` for every degree at one point.
#[derive(Debug, Clone)]
pub struct LadderTable {
    pub z: Complex,
    pub pairs: Vec<LadderPair>,
}

/// `2i`, `0.3 + 1.1i`, `-1 + 0.8i` and their conjugates.
pub fn default_points(prec: u32) -> Vec<Complex> {
    let base = [(0.0, 2.0), (0.3, 1.1), (-1.0, 0.8)];
    let mut out: Vec<Complex> = base
        .iter()
        .map(|&(re, im)| Complex::new(Float::with_val(prec, Float::parse(format!("{re}")).unwrap()), Float::with_val(prec, Float::parse(format!("{im}")).unwrap())))
        .collect();
    let conj: Vec<Complex> = out.iter().map(Complex::conj).collect();
    out.extend(conj);
    out
}

fn pair_from_row(sys: &OrthoSystem, aux: &AuxQuantities, row: &CauchyRow, n: usize) -> LadderPair {
    let p = sys.prec();
    let spec = sys.spec();
    let z = &row.z;
    let mut a = Complex::from_real(Float::with_val(p, 2));
    let mut b = Complex::zero(p);
    for j in 0..spec.len() {
        let inv = z.add_real(&Float::with_val(p, -spec.position(j))).recip();
        let g = spec.exponent(j);
        let mut num = row.diag[n].scale(&Float::with_val(p, g / sys.h(n)));
        num.re += aux.big_r(n, j);
        a = &a + &(&num * &inv);
        if n >= 1 {
            let mut num = row.off[n].scale(&Float::with_val(p, g / sys.h(n - 1)));
            num.re += aux.small_r(n, j);
            b = &b + &(&num * &inv);
        }
    }
    LadderPair { n, z: z.clone(), a, b }
}

/// `A_n(z)` and `B_n(z)`.
pub fn eval_ladder(sys: &OrthoSystem, aux: &AuxQuantities, n: usize, z: &Complex) -> Result<LadderPair> {
    let row = cauchy_row(sys, z)?;
    Ok(pair_from_row(sys, aux, &row, n))
}

/// Every degree up to `min(n_max, aux.n_max())` at `z`.
pub fn ladder_table(sys: &OrthoSystem, aux: &AuxQuantities, z: &Complex) -> Result<LadderTable> {
    let row = cauchy_row(sys, z)?;
    let top = sys.n_max().min(aux.n_max());
    Ok(LadderTable {
        z: z.clone(),
        pairs: (0..=top).map(|n| pair_from_row(sys, aux, &row, n)).collect(),
    })
}

/// `|sum of terms| / max |term|`.
pub fn signed_sum_residual(terms: &[Complex]) -> Float {
    let p = terms[0].prec();
    let mut total = Complex::zero(p);
    let mut scale = Float::new(p);
    for t in terms {
        total = &total + t;
        let m = t.abs();
        if m > scale {
            scale = m;
        }
    }
    if scale.is_zero() {
        return scale;
    }
    total.abs() / scale
}

fn check_point(z: &Complex) -> Result<()> {
    if z.im.is_zero() {
        Err(Error::RealAxisPole)
    } else {
        Ok(())
    }
}

/// `P_n' + B_n P_n - beta_n A_n P_{n-1}`, normalised.
pub fn lowering_residual(sys: &OrthoSystem, table: &LadderTable, n: usize) -> Float {
    let z = &table.z;
    let (pn, dpn) = sys.eval_complex_with_derivative(n, z);
    let pm = sys.eval_p_complex(n - 1, z);
    let pair = &table.pairs[n];
    signed_sum_residual(&[dpn, &pair.b * &pn, -&(&pair.a * &pm).scale(sys.beta(n))])
}

/// `P_{n-1}' - (B_n + 2z) P_{n-1} + A_{n-1} P_n`, normalised.
pub fn raising_residual(sys: &OrthoSystem, table: &LadderTable, n: usize) -> Float {
    let z = &table.z;
    let p = sys.prec();
    let pn = sys.eval_p_complex(n, z);
    let (pm, dpm) = sys.eval_complex_with_derivative(n - 1, z);
    let two_z = z.scale(&Float::with_val(p, 2));
    signed_sum_residual(&[
        dpm,
        -&(&table.pairs[n].b * &pm),
        -&(&two_z * &pm),
        &table.pairs[n - 1].a * &pn,
    ])
}

/// `B_{n+1} + B_n - (z - alpha_n) A_n + 2z`.
pub fn s1_residual(sys: &OrthoSystem, table: &LadderTable, n: usize) -> Float {
    let z = &table.z;
    let p = sys.prec();
    let za = z.add_real(&Float::with_val(p, -sys.alpha(n)));
    signed_sum_residual(&[
        table.pairs[n + 1].b.clone(),
        table.pairs[n].b.clone(),
        -&(&za * &table.pairs[n].a),
        z.scale(&Float::with_val(p, 2)),
    ])
}

/// `1 + (z - alpha_n)(B_{n+1} - B_n) - beta_{n+1} A_{n+1} + beta_n A_{n-1}`.
pub fn s2_residual(sys: &OrthoSystem, table: &LadderTable, n: usize) -> Float {
    let z = &table.z;
    let p = sys.prec();
    let za = z.add_real(&Float::with_val(p, -sys.alpha(n)));
    let mut terms = vec![
        Complex::from_real(Float::with_val(p, 1)),
        &za * &table.pairs[n + 1].b,
        -&(&za * &table.pairs[n].b),
        -&table.pairs[n + 1].a.scale(sys.beta(n + 1)),
    ];
    if n >= 1 {
        terms.push(table.pairs[n - 1].a.scale(sys.beta(n)));
    }
    signed_sum_residual(&terms)
}

/// `B_n^2 + 2z B_n + sum_{j<n} A_j - beta_n A_n A_{n-1}`.
pub fn s2prime_residual(sys: &OrthoSystem, table: &LadderTable, n: usize) -> Float {
    let z = &table.z;
    let p = sys.prec();
    let b = &table.pairs[n].b;
    let mut acc = Complex::zero(p);
    for pair in &table.pairs[..n] {
        acc = &acc + &pair.a;
    }
    let mut terms = vec![b.square(), &z.scale(&Float::with_val(p, 2)) * b, acc];
    if n >= 1 {
        terms.push(-&(&table.pairs[n].a * &table.pairs[n - 1].a).scale(sys.beta(n)));
    }
    signed_sum_residual(&terms)
}

/// All five ladder checks for `1 <= n <= n_top` at each point. `n_top`
/// must leave room for degree `n_top + 1`.
pub fn verify_ladder(sys: &OrthoSystem, aux: &AuxQuantities, points: &[Complex], n_top: usize) -> Result<Vec<ResidualReport>> {
    if n_top + 1 > sys.n_max().min(aux.n_max()) {
        return Err(Error::BadConfig(format!("ladder checks up to degree {n_top} need data to degree {}", n_top + 1)));
    }
    for z in points {
        check_point(z)?;
    }
    let tol = identity_tolerance(sys.spec());
    let tables: Vec<LadderTable> = points.par_iter().map(|z| ladder_table(sys, aux, z)).collect::<Result<_>>()?;
    let mut out = Vec::new();
    for table in &tables {
        for n in 1..=n_top {
            let checks: [(&str, &str, Float); 5] = [
                ("lowering", "P_n' + B_n P_n - beta_n A_n P_{n-1} = 0", lowering_residual(sys, table, n)),
                ("raising", "P_{n-1}' - (B_n + 2z) P_{n-1} + A_{n-1} P_n = 0", raising_residual(sys, table, n)),
                ("s1", "B_{n+1} + B_n = (z - alpha_n) A_n - 2z", s1_residual(sys, table, n)),
                ("s2", "1 + (z - alpha_n)(B_{n+1} - B_n) = beta_{n+1} A_{n+1} - beta_n A_{n-1}", s2_residual(sys, table, n)),
                ("s2_prime", "B_n^2 + 2z B_n + sum_{j<n} A_j = beta_n A_n A_{n-1}", s2prime_residual(sys, table, n)),
            ];
            for (name, anchor, res) in checks {
                out.push(ResidualReport::new(name, anchor, &res, tol).with_n(n).with_z(&table.z));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orthopoly::build_system;
    use crate::weight::WeightSpec;

    fn setup(ts: &[f64], gs: &[f64], n_max: usize) -> (OrthoSystem, AuxQuantities) {
        let spec = WeightSpec::from_f64(ts, gs, 256, 1e-30).unwrap();
        let sys = build_system(&spec, n_max).unwrap();
        let aux = AuxQuantities::from_system(&sys).unwrap();
        (sys, aux)
    }

    #[test]
    fn gaussian_ladder_is_constant() {
        let (sys, aux) = setup(&[0.0], &[0.0], 5);
        let z = Complex::from_f64(256, 0.0, 1.0);
        let t = ladder_table(&sys, &aux, &z).unwrap();
        for pair in &t.pairs {
            assert_eq!(pair.a, Complex::from_f64(256, 2.0, 0.0));
            assert_eq!(pair.b, Complex::zero(256));
        }
        assert!(lowering_residual(&sys, &t, 3) < 1e-60);
        assert!(s1_residual(&sys, &t, 2) < 1e-60);
    }

    #[test]
    fn b0_vanishes() {
        let (sys, aux) = setup(&[-0.6, 0.8], &[0.5, 1.5], 3);
        let z = Complex::from_f64(256, 0.1, 0.9);
        assert_eq!(eval_ladder(&sys, &aux, 0, &z).unwrap().b, Complex::zero(256));
    }

    #[test]
    fn real_points_are_rejected() {
        let (sys, aux) = setup(&[0.5], &[1.0], 3);
        let z = Complex::from_f64(256, 0.5, 0.0);
        assert_eq!(eval_ladder(&sys, &aux, 1, &z).unwrap_err(), Error::RealAxisPole);
    }

    #[test]
    fn single_singularity_lowering() {
        let (sys, aux) = setup(&[0.5], &[1.0], 3);
        let t = ladder_table(&sys, &aux, &Complex::from_f64(256, 1.0, 1.0)).unwrap();
        assert!(lowering_residual(&sys, &t, 2) < 1e-27);
        let t = ladder_table(&sys, &aux, &Complex::from_f64(256, 0.0, 2.0)).unwrap();
        assert!(lowering_residual(&sys, &t, 1) < 1e-27);
        assert!(raising_residual(&sys, &t, 1) < 1e-27);
        assert!(s2prime_residual(&sys, &t, 1) < 1e-27);
    }

    #[test]
    fn two_singularity_suite() {
        let (sys, aux) = setup(&[-0.6, 0.8], &[0.5, 1.5], 6);
        let pts = [Complex::from_f64(256, 0.7, 0.9), Complex::from_f64(256, 0.3, 1.1)];
        for r in verify_ladder(&sys, &aux, &pts, 5).unwrap() {
            assert!(r.pass, "{r:?}");
        }
    }

    #[test]
    fn schwarz_symmetry_and_decay() {
        let (sys, aux) = setup(&[-0.6, 0.8], &[0.5, 1.5], 4);
        let z = Complex::from_f64(256, 0.3, 1.1);
        let a = eval_ladder(&sys, &aux, 3, &z).unwrap();
        let b = eval_ladder(&sys, &aux, 3, &z.conj()).unwrap();
        assert!((&a.a.conj() - &b.a).abs() < 1e-50);
        assert!((&a.b.conj() - &b.b).abs() < 1e-50);

        let two = Complex::from_f64(256, 2.0, 0.0);
        let far3 = eval_ladder(&sys, &aux, 3, &Complex::from_f64(256, 0.0, 1e3)).unwrap();
        let far6 = eval_ladder(&sys, &aux, 3, &Complex::from_f64(256, 0.0, 1e6)).unwrap();
        let d3 = (&far3.a - &two).abs();
        let d6 = (&far6.a - &two).abs();
        let ratio = (d3 / d6).to_f64();
        assert!((ratio / 1e3 - 1.0).abs() < 1e-2, "ratio {ratio}");
    }
}
