//! Acceptance criteria, one line each. Every tolerance below is fixed by
//! the criterion it checks.

use std::time::Instant;

use fh_gauss::{cmd_verify, RunConfig};
use fh_gauss_core::cauchy::{aux_table, AuxPath};
use fh_gauss_core::dynamics::{verify_dynamics, DerivativeStencil, Direction, DynamicsContext, DynamicsGroup, Quantity};
use fh_gauss_core::identities::{
    iterate_difference_system, iteration_deviation, verify_p_expression, verify_section3, AuxQuantities, IterationSeed,
    ResidualReport,
};
use fh_gauss_core::ladder::{default_points, verify_ladder};
use fh_gauss_core::numeric::{parse_real, pi, rel_diff};
use fh_gauss_core::orthopoly::{build_system, OrthoSystem};
use fh_gauss_core::WeightSpec;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rug::ops::Pow;
use rug::Float;

const PREC: u32 = 256;
const QUAD_TOL: &str = "1e-30";
const STEP: f64 = 1e-8;
const N_MAX: usize = 12;

struct Outcome {
    id: &'static str,
    title: &'static str,
    pass: bool,
    detail: String,
}

fn spec(ts: &[&str], gs: &[&str]) -> WeightSpec {
    WeightSpec::from_decimal(ts, gs, PREC, QUAD_TOL).unwrap()
}

fn single() -> WeightSpec {
    spec(&["0.5"], &["1"])
}

fn double() -> WeightSpec {
    spec(&["-0.6", "0.8"], &["0.5", "1.5"])
}

fn principal_value() -> WeightSpec {
    spec(&["-0.6", "0.8"], &["-0.5", "1.5"])
}

fn rel(a: &Float, b: &Float) -> f64 {
    rel_diff(a, b, &Float::new(PREC)).to_f64()
}

fn half_power(x: &Float, n: usize) -> Float {
    Float::with_val(PREC, Pow::pow(x, &(Float::with_val(PREC, n) / 2u32)))
}

fn worst(reports: &[ResidualReport]) -> f64 {
    reports.iter().map(|r| r.residual).fold(0.0, f64::max)
}

fn gaussian_reduction() -> Outcome {
    let sys = build_system(&spec(&["-0.3", "0.9"], &["0", "0"]), 10).unwrap();
    let two_pi = Float::with_val(PREC, pi(PREC) * 2u32);
    let mut err = 0.0f64;
    for n in 1..=10usize {
        let mut c = half_power(&two_pi, n) / half_power(&Float::with_val(PREC, 2), n * n);
        for j in 1..n {
            c *= Float::with_val(PREC, Float::factorial(j as u32));
        }
        err = err.max(rel(&sys.hankel_det(n).unwrap(), &c));
        err = err.max(sys.alpha(n).to_f64().abs());
        err = err.max(rel(sys.beta(n), &Float::with_val(PREC, n as f64 / 2.0)));
    }
    Outcome {
        id: "1",
        title: "Gaussian reduction D_n = C_n, alpha_n = 0, beta_n = n/2 (n = 1..10)",
        pass: err <= 1e-25,
        detail: format!("max rel err {err:.2e} (tol 1e-25)"),
    }
}

fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn to_float(q: &BigRational) -> Float {
    parse_real(PREC, &q.numer().to_string()).unwrap() / parse_real(PREC, &q.denom().to_string()).unwrap()
}

/// Exact `mu_k / sqrt(pi)` for `prod (x - t_j)^{g_j} e^{-x^2}`.
fn exact_moments(ts: &[BigRational], gs: &[u32], k_max: usize) -> Vec<BigRational> {
    let mut poly = vec![BigRational::one()];
    for (t, &g) in ts.iter().zip(gs) {
        for _ in 0..g {
            let mut next = vec![BigRational::zero(); poly.len() + 1];
            for (i, c) in poly.iter().enumerate() {
                next[i + 1] += c;
                next[i] -= c * t;
            }
            poly = next;
        }
    }
    let gauss = |m: usize| {
        if m % 2 == 1 {
            return BigRational::zero();
        }
        (1..m as i64).step_by(2).fold(BigRational::one(), |q, k| q * ratio(k, 2))
    };
    (0..=k_max)
        .map(|k| poly.iter().enumerate().fold(BigRational::zero(), |acc, (m, c)| acc + c * gauss(m + k)))
        .collect()
}

fn exact_hankel(q: &[BigRational], n: usize) -> BigRational {
    let mut a: Vec<Vec<BigRational>> = (0..n).map(|i| (0..n).map(|j| q[i + j].clone()).collect()).collect();
    let mut det = BigRational::one();
    for c in 0..n {
        let p = (c..n).find(|&r| !a[r][c].is_zero()).unwrap();
        if p != c {
            a.swap(p, c);
            det = -det;
        }
        det *= &a[c][c];
        for r in c + 1..n {
            let f = &a[r][c] / &a[c][c];
            for k in c..n {
                let v = &f * &a[c][k];
                a[r][k] -= v;
            }
        }
    }
    det
}

fn even_exponent_oracle() -> Outcome {
    let q = exact_moments(&[ratio(-2, 5), ratio(7, 10)], &[2, 4], 13);
    let sys = build_system(&spec(&["-0.4", "0.7"], &["2", "4"]), 6).unwrap();
    let sqrt_pi = Float::with_val(PREC, pi(PREC).sqrt_ref());
    let mut err = 0.0f64;
    for (k, qk) in q.iter().enumerate() {
        let exact = to_float(qk) * &sqrt_pi;
        err = err.max(rel_diff(&sys.moments()[k], &exact, &Float::with_val(PREC, 1)).to_f64());
    }
    for n in 1..=6 {
        let exact = to_float(&exact_hankel(&q, n)) * half_power(&pi(PREC), n);
        err = err.max(rel(&sys.hankel_det(n).unwrap(), &exact));
    }
    Outcome {
        id: "2",
        title: "Even-exponent exact oracle, t = (-0.4, 0.7), gamma = (2, 4): moments and D_n, n <= 6",
        pass: err <= 1e-25,
        detail: format!("max rel err {err:.2e} (tol 1e-25)"),
    }
}

fn difference_identities(sys: &OrthoSystem, aux: &AuxQuantities) -> Outcome {
    let mut reports = Vec::new();
    for n in 0..=N_MAX {
        reports.extend(verify_section3(sys, aux, n).unwrap());
        reports.push(verify_p_expression(sys, aux, n).unwrap());
    }
    let tol = 1e3 * 1e-30;
    let bad = reports.iter().filter(|r| r.residual > tol).count();
    Outcome {
        id: "3",
        title: "Difference-equation suite (sum rules, r-steps, r-quadratic, alpha/beta and p expressions), N=2, n <= 12",
        pass: bad == 0,
        detail: format!("{} residuals, max {:.2e}, {bad} above {tol:.0e}", reports.len(), worst(&reports)),
    }
}

fn ladder_suite(systems: &[(&OrthoSystem, &AuxQuantities)]) -> Outcome {
    let mut reports = Vec::new();
    for (sys, aux) in systems {
        reports.extend(verify_ladder(sys, aux, &default_points(PREC), 10).unwrap());
    }
    let bad = reports.iter().filter(|r| r.residual > 1e-25).count();
    Outcome {
        id: "4",
        title: "Ladder suite (lowering, raising, S1, S2, S2') at 6 points, n <= 10, N=1 and N=2",
        pass: bad == 0,
        detail: format!("{} residuals, max {:.2e}, {bad} above 1e-25", reports.len(), worst(&reports)),
    }
}

fn iteration(systems: &[(&OrthoSystem, &AuxQuantities)]) -> Outcome {
    let mut err = 0.0f64;
    let mut breakdowns = 0;
    for (sys, aux) in systems {
        let out = iterate_difference_system(sys.spec(), 10, &IterationSeed::from_aux(aux, true));
        breakdowns += usize::from(out.breakdown.is_some());
        for (n, (db, ds)) in iteration_deviation(&out.aux, aux).into_iter().enumerate() {
            if n <= 10 {
                err = err.max(db).max(ds);
            }
        }
    }
    Outcome {
        id: "5",
        title: "Difference-system iteration vs quadrature, n <= 10, N=1 and N=2",
        pass: err <= 1e-12 && breakdowns == 0,
        detail: format!("max rel deviation {err:.2e} (tol 1e-12), {breakdowns} breakdowns"),
    }
}

fn finite_difference_summary(reports: &[ResidualReport]) -> (bool, String) {
    let bad = reports.iter().filter(|r| !r.pass).count();
    let orders: Vec<f64> = reports.iter().filter_map(|r| r.order).collect();
    let (lo, hi) = orders.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &o| (a.min(o), b.max(o)));
    let kappa = reports
        .iter()
        .filter_map(|r| r.note.as_deref()?.strip_prefix("condition factor ")?.split(';').next()?.parse::<f64>().ok())
        .fold(1.0f64, f64::max);
    (
        bad == 0 && !orders.is_empty(),
        format!(
            "{} residuals, max {:.2e}, {} orders in [{lo:.3}, {hi:.3}], max condition factor {kappa:.1}, {bad} failing",
            reports.len(),
            worst(reports),
            orders.len()
        ),
    )
}

fn dynamics_reports(contexts: &[&DynamicsContext], groups: &[DynamicsGroup]) -> Vec<ResidualReport> {
    let mut out = Vec::new();
    for ctx in contexts {
        for n in 1..N_MAX {
            out.extend(verify_dynamics(ctx, n, STEP, false, true, groups).unwrap());
        }
    }
    out
}

fn derivative_relations(contexts: &[&DynamicsContext]) -> Outcome {
    let reports = dynamics_reports(
        contexts,
        &[DynamicsGroup::Lemma41, DynamicsGroup::CrossPartials, DynamicsGroup::Toda, DynamicsGroup::Riccati],
    );
    let (mut pass, mut detail) = finite_difference_summary(&reports);
    // Richardson: order 4 on d ln h_n / dt_j + R[n,j] at a step where h^4 is above the noise.
    let ctx = contexts[0];
    let base = ctx.base().unwrap();
    let res: Vec<f64> = [2e-3, 1e-3]
        .iter()
        .map(|&h| {
            let st = DerivativeStencil { step: h, richardson: true, direction: Direction::Partial(0) };
            let d = ctx.derivative(Quantity::LnH(4), &st).unwrap();
            (d + base.aux.big_r(4, 0)).abs().to_f64()
        })
        .collect();
    let order = (res[0] / res[1]).log2();
    pass &= (3.8..=4.2).contains(&order);
    detail.push_str(&format!("; Richardson order {order:.3} at h = 2e-3 -> 1e-3"));
    Outcome {
        id: "6",
        title: "Derivative relations, cross-partials, Toda, Riccati: <= C h^2 at h = 1e-8, order in [1.8, 2.2]",
        pass,
        detail,
    }
}

fn pde_suite(contexts: &[&DynamicsContext]) -> Outcome {
    let reports = dynamics_reports(contexts, &[DynamicsGroup::PdeR]);
    let reductions = reports.iter().filter(|r| r.identity == "ode_R_single" || r.identity == "painleve_iv").count();
    let (pass, detail) = finite_difference_summary(&reports);
    Outcome {
        id: "7",
        title: "PDE for R[n,j]; N=1 ODE and Painleve IV form",
        pass: pass && reductions > 0,
        detail: format!("{detail}; {reductions} single-point reduction checks"),
    }
}

fn sigma_suite(contexts: &[&DynamicsContext]) -> Outcome {
    let reports = dynamics_reports(contexts, &[DynamicsGroup::Sigma]);
    let min_disc = reports
        .iter()
        .filter(|r| r.identity == "discriminant_nonnegative")
        .filter_map(|r| r.note.as_deref()?.strip_prefix("Delta_j = ")?.parse::<f64>().ok())
        .fold(f64::INFINITY, f64::min);
    let (pass, detail) = finite_difference_summary(&reports);
    Outcome {
        id: "8",
        title: "sigma suite: three paths, Delta_j >= -1e-20, R reconstruction, sigma PDE, N=1 sigma-form",
        pass: pass && min_disc >= -1e-20,
        detail: format!("{detail}; min Delta_j {min_disc:.3e}"),
    }
}

fn cross_path(systems: &[&OrthoSystem]) -> Outcome {
    let mut err = 0.0f64;
    for sys in systems {
        let div = aux_table(sys, AuxPath::Division).unwrap();
        let dir = aux_table(sys, AuxPath::Direct).unwrap();
        for n in 0..=N_MAX {
            for j in 0..sys.spec().len() {
                err = err.max(rel_diff(&div.big[n][j], &dir.big[n][j], &Float::with_val(PREC, 1)).to_f64());
                err = err.max(rel_diff(&div.small[n][j], &dir.small[n][j], &Float::with_val(PREC, 1)).to_f64());
            }
        }
    }
    Outcome {
        id: "9",
        title: "Division vs direct singular quadrature for R, r, n <= 12, incl. gamma_1 = -0.5",
        pass: err <= 1e-25,
        detail: format!("max rel diff {err:.2e} (tol 1e-25)"),
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for sub in ["first", "second"] {
        let mut cfg = RunConfig::parse("ts = [-0.6, 0.8]\ngammas = [0.5, 1.5]\nn_max = 12\n").unwrap();
        cfg.out = dir.path().join(sub);
        let out = cmd_verify(&cfg).unwrap();
        bytes.push(std::fs::read(&out.path).unwrap());
    }
    Outcome {
        id: "10",
        title: "Two consecutive verify runs give byte-identical reports",
        pass: bytes[0] == bytes[1] && !bytes[0].is_empty(),
        detail: format!("{} bytes each", bytes[0].len()),
    }
}

#[test]
fn acceptance() {
    let start = Instant::now();
    let s1 = single();
    let s2 = double();
    let s3 = principal_value();
    let sys1 = build_system(&s1, N_MAX + 1).unwrap();
    let sys2 = build_system(&s2, N_MAX + 1).unwrap();
    let sys3 = build_system(&s3, N_MAX + 1).unwrap();
    let aux1 = AuxQuantities::from_system(&sys1).unwrap();
    let aux2 = AuxQuantities::from_system(&sys2).unwrap();
    let ctx1 = DynamicsContext::new(&s1, N_MAX).unwrap();
    let ctx2 = DynamicsContext::new(&s2, N_MAX).unwrap();

    let mut outcomes = Vec::new();
    let mut record = |o: Outcome| {
        println!("[{}] criterion {:>2}: {} -- {}", if o.pass { "PASS" } else { "FAIL" }, o.id, o.title, o.detail);
        outcomes.push(o);
    };
    record(gaussian_reduction());
    record(even_exponent_oracle());
    record(difference_identities(&sys2, &aux2));
    record(ladder_suite(&[(&sys1, &aux1), (&sys2, &aux2)]));
    record(iteration(&[(&sys1, &aux1), (&sys2, &aux2)]));
    record(derivative_relations(&[&ctx1, &ctx2]));
    record(pde_suite(&[&ctx1, &ctx2]));
    record(sigma_suite(&[&ctx1, &ctx2]));
    record(cross_path(&[&sys1, &sys2, &sys3]));
    record(determinism());
    println!("acceptance finished in {:.1} s", start.elapsed().as_secs_f64());

    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
