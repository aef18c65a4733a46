//! Derivatives in the singular points `t` by finite differences, and the
//! differential relations they satisfy.
//!
//! Every perturbed system is built on a quadrature pinned to one level and
//! laid out relative to the moved points, so the discrete quantities are
//! smooth functions of `t` and difference quotients see only truncation
//! error and rounding.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use rug::Float;

use crate::cauchy::{aux_table, AuxPath};
use crate::error::{Error, Result};
use crate::identities::{degeneracy_threshold, identity_tolerance, normalized_residual, AuxQuantities, Provenance, ResidualReport};
use crate::numeric::unit_scale;
use crate::orthopoly::{build_system, OrthoSystem};
use crate::quadrature::{PartitionPlan, Quadrature};
use crate::weight::WeightSpec;

/// Default difference step.
pub const DEFAULT_STEP: f64 = 1e-8;
/// Constant `C` in the truncation bound `C h^2` of normalised residuals.
pub const TRUNCATION_CONSTANT: f64 = 1e4;
/// Residuals below this are rounding-dominated and carry no order estimate.
pub const ORDER_FLOOR: f64 = 1e-22;
/// Lower bound accepted for the discriminants `Delta_j`.
pub const DISCRIMINANT_FLOOR: f64 = -1e-20;

/// A quantity that depends on `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    /// A `t`-independent constant, useful as a control.
    Constant,
    LnH(usize),
    P(usize),
    Alpha(usize),
    Beta(usize),
    LnBeta(usize),
    BigR(usize, usize),
    SmallR(usize, usize),
    Sigma(usize),
    LnD(usize),
}

/// `d/dt_j` or the aggregate `sum_k d/dt_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Partial(usize),
    Aggregate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeStencil {
    pub step: f64,
    /// One level of Richardson extrapolation with the doubled step.
    pub richardson: bool,
    pub direction: Direction,
}

impl DerivativeStencil {
    pub fn central(step: f64, direction: Direction) -> Self {
        DerivativeStencil { step, richardson: false, direction }
    }

    /// Expected order of the truncation error.
    pub fn order(&self) -> u32 {
        if self.richardson {
            4
        } else {
            2
        }
    }
}

/// A system and its auxiliary quantities at one point `t`.
#[derive(Debug)]
pub struct Snapshot {
    pub sys: OrthoSystem,
    pub aux: AuxQuantities,
}

impl Snapshot {
    pub fn value(&self, q: Quantity) -> Float {
        let p = self.sys.prec();
        match q {
            Quantity::Constant => Float::with_val(p, 1),
            Quantity::LnH(n) => Float::with_val(p, self.sys.h(n).ln_ref()),
            Quantity::P(n) => self.sys.p_coeff(n).clone(),
            Quantity::Alpha(n) => self.sys.alpha(n).clone(),
            Quantity::Beta(n) => self.sys.beta(n).clone(),
            Quantity::LnBeta(n) => Float::with_val(p, self.sys.beta(n).ln_ref()),
            Quantity::BigR(n, j) => self.aux.big_r(n, j).clone(),
            Quantity::SmallR(n, j) => self.aux.small_r(n, j).clone(),
            Quantity::Sigma(n) => compute_sigma(&self.sys, n),
            Quantity::LnD(n) => self.sys.ln_hankel_det(n),
        }
    }
}

type SnapshotKey = (u64, Vec<i32>);

/// Perturbed systems `t + h * offset` on a shared pinned discretisation,
/// memoised by `(h, offset)`.
#[derive(Debug)]
pub struct DynamicsContext {
    spec: WeightSpec,
    n_max: usize,
    level: usize,
    tail_panels: usize,
    cache: Mutex<HashMap<SnapshotKey, Arc<Snapshot>>>,
}

impl DynamicsContext {
    /// Runs the adaptive build once to choose the level every snapshot
    /// will use.
    pub fn new(spec: &WeightSpec, n_max: usize) -> Result<Self> {
        let sys = build_system(spec, n_max)?;
        let table = aux_table(&sys, AuxPath::Division)?;
        Ok(DynamicsContext {
            spec: spec.clone(),
            n_max,
            level: sys.level().max(table.level),
            tail_panels: sys.quadrature().plan().tail_panels,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn spec(&self) -> &WeightSpec {
        &self.spec
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn level(&self) -> usize {
        self.level
    }

    fn key(h: f64, offsets: &[i32]) -> SnapshotKey {
        if offsets.iter().all(|&o| o == 0) {
            (0, offsets.to_vec())
        } else {
            (h.to_bits(), offsets.to_vec())
        }
    }

    fn build_snapshot(&self, h: f64, offsets: &[i32]) -> Result<Snapshot> {
        let p = self.spec.prec();
        let hf = Float::with_val(p, h);
        let moved: Vec<Float> = (0..self.spec.len())
            .map(|j| Float::with_val(p, &hf * offsets[j]) + self.spec.position(j))
            .collect();
        for j in 1..moved.len() {
            if moved[j] <= moved[j - 1] {
                return Err(Error::StepCollision { index: j });
            }
        }
        let spec = self.spec.with_positions(&moved)?;
        let plan = PartitionPlan::with_tail(&spec, self.tail_panels);
        let quad = Arc::new(Quadrature::with_plan(&spec, plan, Some(self.level)));
        let sys = OrthoSystem::build(quad, self.n_max)?;
        let table = aux_table(&sys, AuxPath::Division)?;
        let aux = AuxQuantities::new(table.big, table.small, Provenance::Quadrature);
        Ok(Snapshot { sys, aux })
    }

    pub fn snapshot(&self, h: f64, offsets: &[i32]) -> Result<Arc<Snapshot>> {
        let key = Self::key(h, offsets);
        if let Some(s) = self.cache.lock().unwrap().get(&key) {
            return Ok(s.clone());
        }
        let s = Arc::new(self.build_snapshot(h, offsets)?);
        self.cache.lock().unwrap().insert(key, s.clone());
        Ok(s)
    }

    /// Builds the missing snapshots in parallel.
    pub fn prefetch(&self, h: f64, offsets: &[Vec<i32>]) -> Result<()> {
        let missing: Vec<&Vec<i32>> = {
            let cache = self.cache.lock().unwrap();
            let mut seen = std::collections::HashSet::new();
            offsets
                .iter()
                .filter(|o| !cache.contains_key(&Self::key(h, o)) && seen.insert(Self::key(h, o)))
                .collect()
        };
        let built: Vec<(SnapshotKey, Arc<Snapshot>)> = missing
            .par_iter()
            .map(|o| Ok((Self::key(h, o), Arc::new(self.build_snapshot(h, o)?))))
            .collect::<Result<_>>()?;
        self.cache.lock().unwrap().extend(built);
        Ok(())
    }

    /// The unperturbed snapshot.
    pub fn base(&self) -> Result<Arc<Snapshot>> {
        self.snapshot(0.0, &vec![0; self.spec.len()])
    }

    fn direction_vector(&self, dir: Direction, scale: i32) -> Vec<i32> {
        (0..self.spec.len())
            .map(|k| match dir {
                Direction::Partial(j) => i32::from(j == k) * scale,
                Direction::Aggregate => scale,
            })
            .collect()
    }

    /// Every offset used by the full suite at step `h`.
    pub fn suite_offsets(&self, richardson: bool) -> Vec<Vec<i32>> {
        let nn = self.spec.len();
        let mults: &[i32] = if richardson { &[1, 2] } else { &[1] };
        let mut out = vec![vec![0; nn]];
        for &m in mults {
            for s in [m, -m] {
                out.push(self.direction_vector(Direction::Aggregate, s));
                for j in 0..nn {
                    out.push(self.direction_vector(Direction::Partial(j), s));
                    for s2 in [m, -m] {
                        let mut o = self.direction_vector(Direction::Partial(j), s);
                        for (x, y) in o.iter_mut().zip(self.direction_vector(Direction::Aggregate, s2)) {
                            *x += y;
                        }
                        out.push(o);
                    }
                }
            }
        }
        out
    }

    /// First derivative along `stencil.direction`.
    pub fn derivative(&self, q: Quantity, stencil: &DerivativeStencil) -> Result<Float> {
        let p = self.spec.prec();
        let h = stencil.step;
        let diff = |m: i32| -> Result<Float> {
            let plus = self.snapshot(h, &self.direction_vector(stencil.direction, m))?.value(q);
            let minus = self.snapshot(h, &self.direction_vector(stencil.direction, -m))?.value(q);
            Ok((plus - minus) / (Float::with_val(p, h) * (2 * m)))
        };
        let d1 = diff(1)?;
        if !stencil.richardson {
            return Ok(d1);
        }
        let d2 = diff(2)?;
        Ok((d1 * 4u32 - d2) / 3u32)
    }

    /// `delta^2 q` as a second difference along the all-ones direction.
    pub fn second_aggregate(&self, q: Quantity, h: f64, richardson: bool) -> Result<Float> {
        let p = self.spec.prec();
        let center = self.base()?.value(q);
        let dd = |m: i32| -> Result<Float> {
            let plus = self.snapshot(h, &self.direction_vector(Direction::Aggregate, m))?.value(q);
            let minus = self.snapshot(h, &self.direction_vector(Direction::Aggregate, -m))?.value(q);
            let hm = Float::with_val(p, h) * m;
            Ok((plus + minus - Float::with_val(p, &center * 2u32)) / hm.square())
        };
        let s1 = dd(1)?;
        if !richardson {
            return Ok(s1);
        }
        Ok((s1 * 4u32 - dd(2)?) / 3u32)
    }

    /// `d/dt_j delta q` from the four corners `+-e_j +- 1`.
    pub fn mixed_aggregate(&self, q: Quantity, j: usize, h: f64, richardson: bool) -> Result<Float> {
        let p = self.spec.prec();
        let corner = |sj: i32, sa: i32| -> Result<Float> {
            let mut o = self.direction_vector(Direction::Partial(j), sj);
            for (x, y) in o.iter_mut().zip(self.direction_vector(Direction::Aggregate, sa)) {
                *x += y;
            }
            Ok(self.snapshot(h, &o)?.value(q))
        };
        let m = |k: i32| -> Result<Float> {
            let s = corner(k, k)? - corner(k, -k)? - corner(-k, k)? + corner(-k, -k)?;
            let hk = Float::with_val(p, h) * k;
            Ok(s / (hk.square() * 4u32))
        };
        let m1 = m(1)?;
        if !richardson {
            return Ok(m1);
        }
        Ok((m1 * 4u32 - m(2)?) / 3u32)
    }
}

/// Derivative of one quantity at `spec` (builds a throwaway context).
pub fn t_derivative(spec: &WeightSpec, q: Quantity, stencil: &DerivativeStencil) -> Result<Float> {
    let n = match q {
        Quantity::Constant => 1,
        Quantity::LnH(n) | Quantity::P(n) | Quantity::Alpha(n) | Quantity::Beta(n) | Quantity::LnBeta(n) => n,
        Quantity::BigR(n, _) | Quantity::SmallR(n, _) | Quantity::Sigma(n) | Quantity::LnD(n) => n,
    };
    if q == Quantity::Constant {
        let h = stencil.step;
        let ctx = DynamicsContext::new(spec, 1)?;
        ctx.snapshot(h, &ctx.direction_vector(stencil.direction, 1))?;
        ctx.snapshot(h, &ctx.direction_vector(stencil.direction, -1))?;
        return ctx.derivative(q, stencil);
    }
    DynamicsContext::new(spec, n.max(1))?.derivative(q, stencil)
}

/// `sigma_n = delta ln D_n`, reported through its closed form `2 p(n)`.
pub fn compute_sigma(sys: &OrthoSystem, n: usize) -> Float {
    Float::with_val(sys.prec(), sys.p_coeff(n) * 2u32)
}

/// `sigma_n` from the auxiliary quantities:
/// `2 sum t_j r - (n + sum r) sum R - 2 sum (r^2 - gamma r) / R`.
pub fn sigma_from_aux(spec: &WeightSpec, aux: &AuxQuantities, n: usize) -> Result<Float> {
    let p = spec.prec();
    let thr = degeneracy_threshold(p);
    let mut tr = Float::new(p);
    let mut quot = Float::new(p);
    for j in 0..spec.len() {
        let r = aux.small_r(n, j);
        let big = aux.big_r(n, j);
        if big.cmp_abs(&thr) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::DegenerateR { n, j });
        }
        tr += Float::with_val(p, spec.position(j) * r);
        let q = Float::with_val(p, r.square_ref()) - Float::with_val(p, spec.exponent(j) * r);
        quot += q / big;
    }
    let mid = Float::with_val(p, &aux.sum_small(n) + n as u32) * aux.sum_big(n);
    Ok(tr * 2u32 - mid - quot * 2u32)
}

/// `C h^p` for a stencil of order `p`.
pub fn fd_tolerance(h: f64, richardson: bool) -> f64 {
    TRUNCATION_CONSTANT * h.powi(if richardson { 4 } else { 2 })
}

/// Shared state of one verification pass at step `h`.
struct Pass<'a> {
    ctx: &'a DynamicsContext,
    base: Arc<Snapshot>,
    h: f64,
    richardson: bool,
    tol: f64,
}

impl<'a> Pass<'a> {
    fn new(ctx: &'a DynamicsContext, h: f64, richardson: bool) -> Result<Self> {
        ctx.prefetch(h, &ctx.suite_offsets(richardson))?;
        Ok(Pass {
            ctx,
            base: ctx.base()?,
            h,
            richardson,
            tol: fd_tolerance(h, richardson),
        })
    }

    fn stencil(&self, direction: Direction) -> DerivativeStencil {
        DerivativeStencil { step: self.h, richardson: self.richardson, direction }
    }

    fn d(&self, q: Quantity, dir: Direction) -> Result<Float> {
        self.ctx.derivative(q, &self.stencil(dir))
    }

    fn report(&self, name: &str, anchor: &str, res: &Float) -> ResidualReport {
        ResidualReport::new(name, anchor, res, self.tol).with_step(self.h)
    }

    fn spec(&self) -> &WeightSpec {
        self.base.sys.spec()
    }

    fn prec(&self) -> u32 {
        self.ctx.spec.prec()
    }
}

fn check_degree(ctx: &DynamicsContext, n: usize) -> Result<()> {
    if n == 0 || n + 1 > ctx.n_max {
        return Err(Error::BadConfig(format!(
            "differential checks need 1 <= n <= n_max - 1 = {}, got {n}",
            ctx.n_max.saturating_sub(1)
        )));
    }
    Ok(())
}

fn lemma41(pass: &Pass, n: usize) -> Result<Vec<ResidualReport>> {
    let p = pass.prec();
    let aux = &pass.base.aux;
    let mut out = Vec::new();
    for j in 0..pass.spec().len() {
        let dir = Direction::Partial(j);
        let d = pass.d(Quantity::LnH(n), dir)?;
        let rhs = Float::with_val(p, -aux.big_r(n, j));
        out.push(pass.report("dlnh_dt", "d ln h_n / dt_j = -R[n,j]", &normalized_residual(&d, &rhs, &[])).with_n(n).with_j(j));

        let d = pass.d(Quantity::P(n), dir)?;
        out.push(
            pass.report("dp_dt", "d p(n) / dt_j = r[n,j]", &normalized_residual(&d, aux.small_r(n, j), &[]))
                .with_n(n)
                .with_j(j),
        );

        let d = pass.d(Quantity::LnBeta(n), dir)?;
        let rhs = Float::with_val(p, aux.big_r(n - 1, j) - aux.big_r(n, j));
        out.push(
            pass.report("dlnbeta_dt", "d ln beta_n / dt_j = R[n-1,j] - R[n,j]", &normalized_residual(&d, &rhs, &[aux.big_r(n - 1, j), aux.big_r(n, j)]))
                .with_n(n)
                .with_j(j),
        );

        let d = pass.d(Quantity::Alpha(n), dir)?;
        let rhs = Float::with_val(p, aux.small_r(n, j) - aux.small_r(n + 1, j));
        out.push(
            pass.report("dalpha_dt", "d alpha_n / dt_j = r[n,j] - r[n+1,j]", &normalized_residual(&d, &rhs, &[aux.small_r(n, j), aux.small_r(n + 1, j)]))
                .with_n(n)
                .with_j(j),
        );
    }
    Ok(out)
}

fn cross_partials(pass: &Pass, n: usize) -> Result<Vec<ResidualReport>> {
    let nn = pass.spec().len();
    let mut out = Vec::new();
    for j in 0..nn {
        for k in j + 1..nn {
            let a = pass.d(Quantity::BigR(n, k), Direction::Partial(j))?;
            let b = pass.d(Quantity::BigR(n, j), Direction::Partial(k))?;
            out.push(
                pass.report("cross_partial_R", "d R[n,k] / dt_j = d R[n,j] / dt_k", &normalized_residual(&a, &b, &[]))
                    .with_n(n)
                    .with_j(j)
                    .with_k(k),
            );
            let a = pass.d(Quantity::SmallR(n, k), Direction::Partial(j))?;
            let b = pass.d(Quantity::SmallR(n, j), Direction::Partial(k))?;
            out.push(
                pass.report("cross_partial_r", "d r[n,k] / dt_j = d r[n,j] / dt_k", &normalized_residual(&a, &b, &[]))
                    .with_n(n)
                    .with_j(j)
                    .with_k(k),
            );
        }
    }
    Ok(out)
}

fn toda(pass: &Pass, n: usize) -> Result<Vec<ResidualReport>> {
    let p = pass.prec();
    let sys = &pass.base.sys;
    let d = pass.d(Quantity::LnBeta(n), Direction::Aggregate)?;
    let rhs = Float::with_val(p, sys.alpha(n - 1) - sys.alpha(n)) * 2u32;
    let first = pass
        .report("toda_beta", "delta ln beta_n = 2 (alpha_{n-1} - alpha_n)", &normalized_residual(&d, &rhs, &[sys.alpha(n - 1), sys.alpha(n)]))
        .with_n(n);
    let d = pass.d(Quantity::Alpha(n), Direction::Aggregate)?;
    let rhs = Float::with_val(p, sys.beta(n) - sys.beta(n + 1)) * 2u32 + 1u32;
    let second = pass
        .report("toda_alpha", "delta alpha_n = 1 + 2 (beta_n - beta_{n+1})", &normalized_residual(&d, &rhs, &[sys.beta(n), sys.beta(n + 1)]))
        .with_n(n);
    Ok(vec![first, second])
}

fn riccati(pass: &Pass, n: usize) -> Result<Vec<ResidualReport>> {
    let p = pass.prec();
    let spec = pass.spec();
    let aux = &pass.base.aux;
    let sum_big = aux.sum_big(n);
    let n_sum_small = Float::with_val(p, &aux.sum_small(n) + n as u32);
    let thr = degeneracy_threshold(p);
    let mut out = Vec::new();
    for j in 0..spec.len() {
        let big = aux.big_r(n, j);
        let r = aux.small_r(n, j);
        let g = spec.exponent(j);
        let d = pass.d(Quantity::BigR(n, j), Direction::Aggregate)?;
        let four_r = Float::with_val(p, r * 4u32);
        let lin = Float::with_val(p, spec.position(j) * 2u32) - &sum_big;
        let lin = lin * big;
        let two_g = Float::with_val(p, g * 2u32);
        let rhs = Float::with_val(p, &four_r - &lin) - &two_g;
        out.push(
            pass.report(
                "riccati_R",
                "delta R[n,j] = 4 r[n,j] - (2 t_j - sum_k R[n,k]) R[n,j] - 2 gamma_j",
                &normalized_residual(&d, &rhs, &[&four_r, &lin, &two_g]),
            )
            .with_n(n)
            .with_j(j),
        );

        if big.cmp_abs(&thr) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::DegenerateR { n, j });
        }
        let d = pass.d(Quantity::SmallR(n, j), Direction::Aggregate)?;
        let quad = Float::with_val(p, r - g) * r * 2u32 / big;
        let lin = Float::with_val(p, &n_sum_small * big);
        let rhs = Float::with_val(p, &quad - &lin);
        out.push(
            pass.report(
                "riccati_r",
                "delta r[n,j] = 2 r[n,j] (r[n,j] - gamma_j) / R[n,j] - (n + sum_k r[n,k]) R[n,j]",
                &normalized_residual(&d, &rhs, &[&quad, &lin]),
            )
            .with_n(n)
            .with_j(j),
        );
    }
    Ok(out)
}

fn pde_r(pass: &Pass, n: usize) -> Result<Vec<ResidualReport>> {
    let p = pass.prec();
    let spec = pass.spec();
    let aux = &pass.base.aux;
    let thr = degeneracy_threshold(p);
    let half_sum = Float::with_val(p, aux.sum_big(n) / 2u32);
    let mut bracket = Float::new(p);
    for k in 0..spec.len() {
        let tk = Float::with_val(p, spec.position(k) - &half_sum);
        bracket += tk * aux.big_r(n, k) + spec.exponent(k);
    }
    let mut out = Vec::new();
    for j in 0..spec.len() {
        let big = aux.big_r(n, j);
        if big.cmp_abs(&thr) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::DegenerateR { n, j });
        }
        let g = spec.exponent(j);
        let q = Quantity::BigR(n, j);
        let d1 = pass.d(q, Direction::Aggregate)?;
        let d2 = pass.ctx.second_aggregate(q, pass.h, pass.richardson)?;
        let lhs = Float::with_val(p, &d2 / 2u32);
        let t1 = Float::with_val(p, d1.square_ref()) / Float::with_val(p, big * 4u32);
        let t2 = Float::with_val(p, &bracket * big);
        let tj = Float::with_val(p, spec.position(j) - &half_sum);
        let t3 = Float::with_val(p, tj.square_ref()) * big;
        let t4 = Float::with_val(p, big * (2 * n as u32 + 1));
        let t5 = Float::with_val(p, g.square_ref()) / big;
        let rhs = Float::with_val(p, &t1 - &t2) + &t3 - &t4 - &t5;
        out.push(
            pass.report(
                "pde_R",
                "(1/2) delta^2 R = (delta R)^2 / (4R) - [sum_k ((t_k - S/2) R[n,k] + gamma_k)] R + (t_j - S/2)^2 R - (2n+1) R - gamma_j^2 / R",
                &normalized_residual(&lhs, &rhs, &[&t1, &t2, &t3, &t4, &t5]),
            )
            .with_n(n)
            .with_j(j),
        );
    }
    if spec.len() == 1 {
        out.extend(single_point_reductions(pass, n)?);
    }
    Ok(out)
}

/// The one-point ODE for `R_{n,1}(t_1)` and its Painleve IV form in
/// `t = -t_1`.
fn single_point_reductions(pass: &Pass, n: usize) -> Result<Vec<ResidualReport>> {
    let p = pass.prec();
    let spec = pass.spec();
    let big = pass.base.aux.big_r(n, 0);
    let g = spec.exponent(0);
    let t1 = spec.position(0);
    let q = Quantity::BigR(n, 0);
    let d1 = pass.d(q, Direction::Partial(0))?;
    let d2 = pass.ctx.second_aggregate(q, pass.h, pass.richardson)?;
    let nn = 2 * n as u32 + 1;

    let a = Float::with_val(p, d1.square_ref()) / Float::with_val(p, big * 2u32);
    let inner = (Float::with_val(p, t1 * 2u32) - big) * big + Float::with_val(p, g * 2u32);
    let b = inner * big;
    let c = Float::with_val(p, t1 - Float::with_val(p, big / 2u32)).square() * big * 2u32;
    let d = Float::with_val(p, big * (2 * nn));
    let e = Float::with_val(p, g.square_ref()) * 2u32 / big;
    let rhs = Float::with_val(p, &a - &b) + &c - &d - &e;
    let ode = pass
        .report(
            "ode_R_single",
            "R'' = R'^2 / (2R) - [(2t_1 - R) R + 2 gamma] R + 2 (t_1 - R/2)^2 R - 2 (2n+1) R - 2 gamma^2 / R",
            &normalized_residual(&d2, &rhs, &[&a, &b, &c, &d, &e]),
        )
        .with_n(n)
        .with_j(0);

    // R_n(t) := R_{n,1}(-t): first derivative flips sign, second does not.
    let t = Float::with_val(p, -t1);
    let rp = Float::with_val(p, -&d1);
    let a = Float::with_val(p, rp.square_ref()) / Float::with_val(p, big * 2u32);
    let b = Float::with_val(p, big.square_ref()) * big * 3u32 / 2u32;
    let c = Float::with_val(p, big.square_ref()) * &t * 4u32;
    let coef = Float::with_val(p, t.square_ref()) - nn - g;
    let d = coef * big * 2u32;
    let e = Float::with_val(p, g.square_ref()) * 2u32 / big;
    let rhs = Float::with_val(p, &a + &b) + &c + &d - &e;
    let piv = pass
        .report(
            "painleve_iv",
            "R'' = R'^2 / (2R) + (3/2) R^3 + 4t R^2 + 2 (t^2 - 2n - 1 - gamma) R - 2 gamma^2 / R, t = -t_1",
            &normalized_residual(&d2, &rhs, &[&a, &b, &c, &d, &e]),
        )
        .with_n(n)
        .with_j(0);
    Ok(vec![ode, piv])
}

/// First-order amplification of input truncation error into a residual
/// normalised by `scale`: `max(1, sensitivity / scale)`.
fn condition_factor(sensitivity: f64, scale: f64) -> f64 {
    (sensitivity / scale).max(1.0)
}

fn sign_of(x: &Float, tol: &Float) -> i32 {
    if x.cmp_abs(tol) != Some(std::cmp::Ordering::Greater) {
        0
    } else if x.is_sign_positive() {
        1
    } else {
        -1
    }
}

fn sigma_suite(pass: &Pass, n: usize) -> Result<Vec<ResidualReport>> {
    let p = pass.prec();
    let spec = pass.spec();
    let sys = &pass.base.sys;
    let aux = &pass.base.aux;
    let alg_tol = identity_tolerance(spec);
    let mut out = Vec::new();

    let sigma = compute_sigma(sys, n);
    let fd_sigma = pass.d(Quantity::LnD(n), Direction::Aggregate)?;
    out.push(pass.report("sigma_fd_vs_2p", "delta ln D_n = 2 p(n)", &normalized_residual(&fd_sigma, &sigma, &[])).with_n(n));
    let aux_sigma = sigma_from_aux(spec, aux, n)?;
    out.push(
        ResidualReport::new(
            "sigma_aux_vs_2p",
            "2 p(n) = 2 sum t_j r - (n + sum r) sum R - 2 sum (r^2 - gamma r) / R",
            &normalized_residual(&aux_sigma, &sigma, &[]),
            alg_tol,
        )
        .with_n(n),
    );

    let d_sigma = pass.d(Quantity::Sigma(n), Direction::Aggregate)?;
    let denom = Float::with_val(p, &d_sigma + 2 * n as u32);
    if denom.cmp_abs(&degeneracy_threshold(p)) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::DegenerateDenominator { n });
    }

    let sign_tol = Float::with_val(p, spec.quad_tol() * 1000u32);
    let mut pde_rhs = Float::new(p);
    let mut tds = Float::new(p);
    let mut sqrt_terms: Vec<Float> = Vec::new();
    let mut degenerate = false;
    let mut pde_gain = 0.0f64;
    let mut partials = Vec::new();
    for j in 0..spec.len() {
        let g = spec.exponent(j);
        let ds = pass.d(Quantity::Sigma(n), Direction::Partial(j))?;
        let half = Float::with_val(p, &ds / 2u32);
        out.push(
            pass.report("r_from_sigma", "r[n,j] = (1/2) d sigma_n / dt_j", &normalized_residual(aux.small_r(n, j), &half, &[]))
                .with_n(n)
                .with_j(j),
        );
        let mixed = pass.ctx.mixed_aggregate(Quantity::Sigma(n), j, pass.h, pass.richardson)?;
        let t_mixed = Float::with_val(p, mixed.square_ref());
        let t_prod = Float::with_val(p, &denom * 4u32) * &ds * Float::with_val(p, &ds - Float::with_val(p, g * 2u32));
        let disc = Float::with_val(p, &t_mixed + &t_prod);
        let negative = if disc.is_sign_negative() { Float::with_val(p, -&disc) } else { Float::new(p) };
        let mut rep = ResidualReport::new("discriminant_nonnegative", "Delta_j >= 0", &negative, -DISCRIMINANT_FLOOR).with_n(n).with_j(j);
        rep.note = Some(format!("Delta_j = {:e}", disc.to_f64()));
        out.push(rep);
        let root = if disc.is_sign_negative() { Float::new(p) } else { Float::with_val(p, disc.sqrt_ref()) };

        let sum_adj = Float::with_val(p, aux.big_r(n, j) + aux.big_r(n - 1, j));
        let sgn = sign_of(&sum_adj, &sign_tol);
        let mixed_neg = Float::with_val(p, -&mixed);
        let recon = |s: i32| Float::with_val(p, &mixed_neg + Float::with_val(p, &root * s)) / Float::with_val(p, &denom * 2u32);
        let (chosen, note) = if sgn == 0 {
            degenerate = true;
            let plus = recon(1);
            let minus = recon(-1);
            let rp = normalized_residual(aux.big_r(n, j), &plus, &[]);
            let rm = normalized_residual(aux.big_r(n, j), &minus, &[]);
            if rp <= rm {
                (1, Some("sign of R[n,j] + R[n-1,j] is zero; better of both signs"))
            } else {
                (-1, Some("sign of R[n,j] + R[n-1,j] is zero; better of both signs"))
            }
        } else {
            (sgn, None)
        };
        // Input errors reach sqrt(Delta_j) multiplied by this gain.
        let gain = (t_mixed.to_f64().abs() + t_prod.to_f64().abs()) / (2.0 * root.to_f64().max(f64::MIN_POSITIVE));
        let recon_chosen = recon(chosen);
        let res = normalized_residual(aux.big_r(n, j), &recon_chosen, &[&mixed_neg, &root]);
        let scale = unit_scale(p, [&mixed_neg, &root, aux.big_r(n, j), &recon_chosen]).to_f64();
        let kappa = condition_factor(mixed.to_f64().abs() + gain, scale);
        let mut rep = ResidualReport::new(
            "R_from_sigma",
            "R[n,j] = [-d_j delta sigma + sgn(R[n,j] + R[n-1,j]) sqrt(Delta_j)] / (2 (2n + delta sigma))",
            &res,
            alg_tol + pass.tol * kappa,
        )
        .with_n(n)
        .with_j(j)
        .with_step(pass.h)
        .with_note(&format!("condition factor {kappa:.3e}"));
        if let Some(msg) = note {
            rep = rep.with_note(&format!("condition factor {kappa:.3e}; {msg}"));
        }
        out.push(rep);
        pde_gain += gain / 2.0;

        tds += Float::with_val(p, spec.position(j) * &ds);
        let term = Float::with_val(p, &root * chosen) / 2u32;
        pde_rhs -= &term;
        sqrt_terms.push(term);
        partials.push((ds, mixed));

        // Quadratic satisfied by R[n,j] with the derivative of r[n,j].
        let dr = pass.d(Quantity::SmallR(n, j), Direction::Aggregate)?;
        let big = aux.big_r(n, j);
        let r = aux.small_r(n, j);
        let a = Float::with_val(p, &aux.sum_small(n) + n as u32) * Float::with_val(p, big.square_ref());
        let b = Float::with_val(p, &dr * big);
        let c = Float::with_val(p, r - g) * r * 2u32;
        let lhs = Float::with_val(p, &a + &b);
        out.push(
            pass.report(
                "R_quadratic",
                "(n + sum_k r[n,k]) R^2 + delta r[n,j] R - 2 r (r - gamma_j) = 0",
                &normalized_residual(&lhs, &c, &[&a, &b]),
            )
            .with_n(n)
            .with_j(j),
        );
    }
    pde_rhs += &tds;
    let mut terms: Vec<&Float> = sqrt_terms.iter().collect();
    terms.push(&tds);
    let scale = unit_scale(p, terms.iter().copied().chain([&sigma, &pde_rhs])).to_f64();
    let kappa = condition_factor(tds.to_f64().abs() + pde_gain, scale);
    let mut rep = pass
        .report(
            "sigma_pde",
            "sigma = sum_j t_j d sigma / dt_j - (1/2) sum_j sgn(R[n,j] + R[n-1,j]) sqrt(Delta_j)",
            &normalized_residual(&sigma, &pde_rhs, &terms),
        )
        .retolerance(pass.tol * kappa)
        .with_n(n)
        .with_note(&format!("condition factor {kappa:.3e}"));
    if degenerate {
        rep = rep.with_note(&format!("condition factor {kappa:.3e}; sign convention ambiguous for some j"));
    }
    out.push(rep);

    if spec.len() == 1 {
        let (ds, _) = &partials[0];
        let t1 = spec.position(0);
        let g = spec.exponent(0);
        let dd = pass.ctx.second_aggregate(Quantity::Sigma(n), pass.h, pass.richardson)?;
        let lhs = Float::with_val(p, dd.square_ref());
        let a = (Float::with_val(p, t1 * ds) - &sigma).square() * 4u32;
        let b = Float::with_val(p, ds - Float::with_val(p, g * 2u32)) * ds * Float::with_val(p, ds + 2 * n as u32) * 4u32;
        let rhs = Float::with_val(p, &a - &b);
        out.push(
            pass.report(
                "sigma_form_single",
                "(sigma'')^2 = 4 (t_1 sigma' - sigma)^2 - 4 sigma' (sigma' - 2 gamma) (sigma' + 2n)",
                &normalized_residual(&lhs, &rhs, &[&a, &b]),
            )
            .with_n(n),
        );
    }
    Ok(out)
}

/// Which groups of differential checks to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DynamicsGroup {
    Lemma41,
    CrossPartials,
    Toda,
    Riccati,
    PdeR,
    Sigma,
}

pub const ALL_GROUPS: [DynamicsGroup; 6] = [
    DynamicsGroup::Lemma41,
    DynamicsGroup::CrossPartials,
    DynamicsGroup::Toda,
    DynamicsGroup::Riccati,
    DynamicsGroup::PdeR,
    DynamicsGroup::Sigma,
];

fn run_groups(ctx: &DynamicsContext, n: usize, h: f64, richardson: bool, groups: &[DynamicsGroup]) -> Result<Vec<ResidualReport>> {
    check_degree(ctx, n)?;
    let pass = Pass::new(ctx, h, richardson)?;
    let mut out = Vec::new();
    for g in groups {
        out.extend(match g {
            DynamicsGroup::Lemma41 => lemma41(&pass, n)?,
            DynamicsGroup::CrossPartials => cross_partials(&pass, n)?,
            DynamicsGroup::Toda => toda(&pass, n)?,
            DynamicsGroup::Riccati => riccati(&pass, n)?,
            DynamicsGroup::PdeR => pde_r(&pass, n)?,
            DynamicsGroup::Sigma => sigma_suite(&pass, n)?,
        });
    }
    Ok(out)
}

/// Attaches `log2(res(h) / res(h/2))` to each report whose residual is
/// above [`ORDER_FLOOR`]; a report then also requires the order to lie
/// within `0.2` of `expected`.
pub fn attach_orders(coarse: Vec<ResidualReport>, fine: &[ResidualReport], expected: f64) -> Vec<ResidualReport> {
    coarse
        .into_iter()
        .zip(fine)
        .map(|(mut c, f)| {
            if c.step.is_some() && c.residual > ORDER_FLOOR && f.residual > 0.0 {
                let order = (c.residual / f.residual).log2();
                c.order = Some(order);
                c.pass = c.pass && (order - expected).abs() <= 0.2;
            }
            c
        })
        .collect()
}

/// Runs `groups` at degree `n` with step `h`; when `measure_order` is set
/// the pass is repeated at `h / 2` and orders are attached.
pub fn verify_dynamics(
    ctx: &DynamicsContext,
    n: usize,
    h: f64,
    richardson: bool,
    measure_order: bool,
    groups: &[DynamicsGroup],
) -> Result<Vec<ResidualReport>> {
    let coarse = run_groups(ctx, n, h, richardson, groups)?;
    if !measure_order {
        return Ok(coarse);
    }
    let fine = run_groups(ctx, n, h / 2.0, richardson, groups)?;
    Ok(attach_orders(coarse, &fine, if richardson { 4.0 } else { 2.0 }))
}

pub fn verify_lemma41(ctx: &DynamicsContext, n: usize, h: f64) -> Result<Vec<ResidualReport>> {
    verify_dynamics(ctx, n, h, false, true, &[DynamicsGroup::Lemma41])
}

pub fn verify_cross_partials(ctx: &DynamicsContext, n: usize, h: f64) -> Result<Vec<ResidualReport>> {
    verify_dynamics(ctx, n, h, false, true, &[DynamicsGroup::CrossPartials])
}

pub fn verify_toda(ctx: &DynamicsContext, n: usize, h: f64) -> Result<Vec<ResidualReport>> {
    verify_dynamics(ctx, n, h, false, true, &[DynamicsGroup::Toda])
}

pub fn verify_riccati(ctx: &DynamicsContext, n: usize, h: f64) -> Result<Vec<ResidualReport>> {
    verify_dynamics(ctx, n, h, false, true, &[DynamicsGroup::Riccati])
}

pub fn verify_pde_r(ctx: &DynamicsContext, n: usize, h: f64) -> Result<Vec<ResidualReport>> {
    verify_dynamics(ctx, n, h, false, true, &[DynamicsGroup::PdeR])
}

pub fn verify_sigma_suite(ctx: &DynamicsContext, n: usize, h: f64) -> Result<Vec<ResidualReport>> {
    verify_dynamics(ctx, n, h, false, true, &[DynamicsGroup::Sigma])
}
