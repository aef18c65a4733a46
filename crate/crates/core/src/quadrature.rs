//! Integration of `f(x) w(x; t)` over the real line.
//!
//! The line is cut at every singular point. Each `t_j` gets a symmetric
//! window `[t_j - d_j, t_j + d_j]` whose two halves use a Gauss–Jacobi rule
//! with weight `|x - t_j|^gamma_j`, so the algebraic endpoint factor is
//! integrated exactly and only the smooth remainder of `w` is sampled. The
//! mirror-image node layout of a window is what makes the principal-value
//! sums in [`crate::cauchy`] work. Gaps between windows and the two Gaussian
//! tails are covered by Gauss–Legendre panels of width at most
//! [`PANEL_WIDTH`].
//!
//! A [`DiscreteMeasure`] is the full set of nodes and weights for one rule
//! order; [`Quadrature`] doubles the order until two successive measures
//! agree.

use std::collections::HashMap;
use std::ops::Range;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};
use rug::ops::Pow;
use rug::Float;

use crate::error::{Error, Result};
use crate::numeric::{pow2, Complex};
use crate::weight::WeightSpec;

/// Width of regular panels in gaps and tails.
pub const PANEL_WIDTH: f64 = 0.5;
/// Largest singular window half-width.
pub const MAX_WINDOW: f64 = 1.0;
/// Rule order at level 0; level `k` uses `BASE_ORDER * 2^k` nodes per panel.
pub const BASE_ORDER: usize = 16;
/// Cap on successive order doublings.
pub const MAX_DOUBLINGS: usize = 12;
/// How many times the tails may be doubled before giving up.
const MAX_TAIL_DOUBLINGS: usize = 4;

// ---------------------------------------------------------------------------
// Gauss rules
// ---------------------------------------------------------------------------

/// Gauss rule on `[0, 1]` for the weight `s^gamma`.
#[derive(Debug)]
pub struct GaussRule {
    pub nodes: Vec<Float>,
    pub weights: Vec<Float>,
}

type RuleKey = (u32, usize, String);

fn rule_cache() -> &'static Mutex<HashMap<RuleKey, Arc<GaussRule>>> {
    static CACHE: OnceLock<Mutex<HashMap<RuleKey, Arc<GaussRule>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl GaussRule {
    /// `order`-point rule for `s^gamma` on `[0, 1]`, cached per
    /// `(prec, order, gamma)`. `gamma = 0` is Gauss–Legendre.
    pub fn left_jacobi(order: usize, gamma: &Float, prec: u32) -> Result<Arc<GaussRule>> {
        let key = (prec, order, gamma.to_string_radix(16, None));
        if let Some(rule) = rule_cache().lock().unwrap().get(&key) {
            return Ok(rule.clone());
        }
        let rule = Arc::new(compute_left_jacobi(order, gamma, prec)?);
        rule_cache().lock().unwrap().insert(key, rule.clone());
        Ok(rule)
    }

    pub fn legendre(order: usize, prec: u32) -> Result<Arc<GaussRule>> {
        GaussRule::left_jacobi(order, &Float::new(prec), prec)
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }
}

/// Monic recurrence coefficients of the Jacobi weight `(1 + x)^beta` on
/// `[-1, 1]`.
fn jacobi_recurrence(order: usize, beta: &Float, prec: u32) -> (Vec<Float>, Vec<Float>) {
    let f = |v: f64| Float::with_val(prec, v);
    let mut a = Vec::with_capacity(order);
    let mut b = Vec::with_capacity(order);
    for k in 0..order {
        let kf = f(k as f64);
        let two_k_b = Float::with_val(prec, &kf * 2u32) + beta;
        if k == 0 {
            a.push(Float::with_val(prec, beta / Float::with_val(prec, beta + 2u32)));
            let pow = Float::with_val(prec, beta + 1u32);
            let two_pow = Float::with_val(prec, 2u32).pow(&pow);
            b.push(two_pow / pow);
        } else {
            let denom = Float::with_val(prec, &two_k_b * Float::with_val(prec, &two_k_b + 2u32));
            a.push(Float::with_val(prec, beta.square_ref()) / denom);
            let kb = Float::with_val(prec, &kf + beta);
            let bk = if k == 1 {
                let num = Float::with_val(prec, beta + 1u32) * 4u32;
                let d = Float::with_val(prec, beta + 2u32).square()
                    * Float::with_val(prec, beta + 3u32);
                num / d
            } else {
                let num = Float::with_val(prec, kf.square_ref()) * kb.square() * 4u32;
                let d = Float::with_val(prec, two_k_b.square_ref())
                    * Float::with_val(prec, &two_k_b + 1u32)
                    * Float::with_val(prec, &two_k_b - 1u32);
                num / d
            };
            b.push(bk);
        }
    }
    (a, b)
}

fn compute_left_jacobi(order: usize, gamma: &Float, prec: u32) -> Result<GaussRule> {
    if order == 0 {
        return Err(Error::BadConfig("rule order must be positive".into()));
    }
    let work = prec + 32;
    let beta = Float::with_val(work, gamma);
    let (a, b) = jacobi_recurrence(order, &beta, work);

    // Double-precision eigenvalues of the Jacobi matrix seed Newton.
    let mut jm = DMatrix::<f64>::zeros(order, order);
    for k in 0..order {
        jm[(k, k)] = a[k].to_f64();
        if k + 1 < order {
            let off = b[k + 1].to_f64().sqrt();
            jm[(k, k + 1)] = off;
            jm[(k + 1, k)] = off;
        }
    }
    let mut guesses: Vec<f64> = SymmetricEigen::new(jm).eigenvalues.iter().copied().collect();
    guesses.sort_by(|x, y| x.partial_cmp(y).unwrap());

    let eval = |x: &Float| -> (Float, Float, Float) {
        // returns (p_order(x), p_order'(x), p_{order-1}(x))
        let mut p_prev = Float::new(work);
        let mut p = Float::with_val(work, 1);
        let mut d_prev = Float::new(work);
        let mut d = Float::new(work);
        for k in 0..order {
            let xa = Float::with_val(work, x - &a[k]);
            let p_next = Float::with_val(work, &xa * &p) - Float::with_val(work, &b[k] * &p_prev);
            let d_next = Float::with_val(work, &xa * &d) + &p - Float::with_val(work, &b[k] * &d_prev);
            p_prev = std::mem::replace(&mut p, p_next);
            d_prev = std::mem::replace(&mut d, d_next);
        }
        (p, d, p_prev)
    };

    let norm_last: Float = b.iter().fold(Float::with_val(work, 1), |acc, bk| acc * bk);
    let stop = pow2(work, -(work as i32) + 8);
    let two_pow = Float::with_val(work, 2u32).pow(Float::with_val(work, &beta + 1u32));

    let mut nodes = Vec::with_capacity(order);
    let mut weights = Vec::with_capacity(order);
    for g in guesses {
        let mut x = Float::with_val(work, g);
        let mut converged = false;
        for _ in 0..60 {
            let (p, d, _) = eval(&x);
            let dx = p / d;
            x -= &dx;
            if dx.abs() <= stop {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NoConvergence {
                what: format!("Gauss-Jacobi node (order {order})"),
                levels: 60,
            });
        }
        let (_, d, p_last) = eval(&x);
        let lambda = Float::with_val(work, &norm_last / (d * p_last));
        // Map [-1, 1] -> [0, 1]: s = (1 + x) / 2, weight (2s)^beta.
        let s = (x + 1u32) / 2u32;
        nodes.push(Float::with_val(prec, s));
        weights.push(Float::with_val(prec, lambda / &two_pow));
    }
    for w in nodes.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::NoConvergence {
                what: format!("Gauss-Jacobi nodes collapsed (order {order})"),
                levels: 0,
            });
        }
    }
    Ok(GaussRule { nodes, weights })
}

// ---------------------------------------------------------------------------
// Partition
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub enum PanelKind {
    Regular,
    /// `[t_j - d, t_j]`, exponent at the right end.
    WindowLeft { j: usize },
    /// `[t_j, t_j + d]`, exponent at the left end.
    WindowRight { j: usize },
}

#[derive(Clone, Debug)]
pub struct Panel {
    pub a: Float,
    pub b: Float,
    pub kind: PanelKind,
}

/// Breakpoints and per-panel rule descriptors.
#[derive(Clone, Debug)]
pub struct PartitionPlan {
    pub panels: Vec<Panel>,
    /// Window half-widths `d_j`.
    pub half_widths: Vec<Float>,
    /// Regular panels per outer tail.
    pub tail_panels: usize,
    /// Indices into `panels` of the outermost tail panels.
    pub outer_panels: [usize; 2],
}

/// Tail length such that `exp(-X^2) X^64` is below `2^-bits`.
fn default_tail_length(bits: u32) -> f64 {
    let target = bits as f64 * std::f64::consts::LN_2 + 10.0;
    let mut x = 4.0f64;
    while x * x - 64.0 * x.ln() < target {
        x += 0.5;
    }
    x
}

impl PartitionPlan {
    pub fn new(spec: &WeightSpec) -> PartitionPlan {
        let tail = (default_tail_length(spec.prec()) / PANEL_WIDTH).ceil() as usize;
        PartitionPlan::with_tail(spec, tail)
    }

    /// Plan for `spec` with a given number of tail panels per side.
    pub fn with_tail(spec: &WeightSpec, tail_panels: usize) -> PartitionPlan {
        let p = spec.prec();
        let n = spec.len();
        let half_widths: Vec<Float> = (0..n)
            .map(|j| {
                let mut d = Float::with_val(p, MAX_WINDOW);
                for k in 0..n {
                    if k != j {
                        let gap = Float::with_val(p, spec.position(j) - spec.position(k)).abs() / 2u32;
                        if gap < d {
                            d = gap;
                        }
                    }
                }
                d
            })
            .collect();

        let width = Float::with_val(p, PANEL_WIDTH);
        let mut panels = Vec::new();
        let left_anchor = Float::with_val(p, spec.position(0) - &half_widths[0]);
        for k in (0..tail_panels).rev() {
            let b = Float::with_val(p, &left_anchor - Float::with_val(p, &width * k as u32));
            let a = Float::with_val(p, &b - &width);
            panels.push(Panel { a, b, kind: PanelKind::Regular });
        }
        let outer_left = 0;
        for j in 0..n {
            let t = spec.position(j);
            let d = &half_widths[j];
            panels.push(Panel {
                a: Float::with_val(p, t - d),
                b: t.clone(),
                kind: PanelKind::WindowLeft { j },
            });
            panels.push(Panel {
                a: t.clone(),
                b: Float::with_val(p, t + d),
                kind: PanelKind::WindowRight { j },
            });
            if j + 1 < n {
                let start = Float::with_val(p, t + d);
                let end = Float::with_val(p, spec.position(j + 1) - &half_widths[j + 1]);
                let len = Float::with_val(p, &end - &start);
                let gap = Float::with_val(p, spec.position(j + 1) - t);
                let negligible = Float::with_val(p, &gap * pow2(p, -(p as i32) / 2));
                if len > negligible {
                    let count = ((len.to_f64() / PANEL_WIDTH) - 0.25).ceil().max(1.0) as usize;
                    let step = Float::with_val(p, &len / count as u32);
                    for c in 0..count {
                        let a = Float::with_val(p, &start + Float::with_val(p, &step * c as u32));
                        let b = if c + 1 == count {
                            end.clone()
                        } else {
                            Float::with_val(p, &a + &step)
                        };
                        panels.push(Panel { a, b, kind: PanelKind::Regular });
                    }
                }
            }
        }
        let right_anchor = Float::with_val(p, spec.position(n - 1) + &half_widths[n - 1]);
        for k in 0..tail_panels {
            let a = Float::with_val(p, &right_anchor + Float::with_val(p, &width * k as u32));
            let b = Float::with_val(p, &a + &width);
            panels.push(Panel { a, b, kind: PanelKind::Regular });
        }
        let outer_right = panels.len() - 1;
        PartitionPlan {
            panels,
            half_widths,
            tail_panels,
            outer_panels: [outer_left, outer_right],
        }
    }

    /// The same structure laid over a perturbed spec (same tail count).
    pub fn reanchored(&self, spec: &WeightSpec) -> PartitionPlan {
        PartitionPlan::with_tail(spec, self.tail_panels)
    }

    pub fn breakpoints(&self) -> Vec<Float> {
        let mut pts: Vec<Float> = self.panels.iter().map(|p| p.a.clone()).collect();
        if let Some(last) = self.panels.last() {
            pts.push(last.b.clone());
        }
        pts
    }
}

// ---------------------------------------------------------------------------
// Discrete measure
// ---------------------------------------------------------------------------

/// Node layout of the window around `t_j`: node `right.start + i` sits at
/// `t_j + u[i]` and node `left.start + i` at `t_j - u[i]`.
#[derive(Clone, Debug)]
pub struct WindowNodes {
    pub u: Vec<Float>,
    pub left: Range<usize>,
    pub right: Range<usize>,
}

/// Nodes and weights with `sum_i weights[i] f(nodes[i]) ~ int f w dx`.
#[derive(Debug)]
pub struct DiscreteMeasure {
    pub nodes: Vec<Float>,
    pub weights: Vec<Float>,
    pub windows: Vec<WindowNodes>,
    pub outer: [Range<usize>; 2],
    pub order: usize,
    prec: u32,
}

impl DiscreteMeasure {
    pub fn build(spec: &WeightSpec, plan: &PartitionPlan, order: usize) -> Result<DiscreteMeasure> {
        let p = spec.prec();
        let legendre = GaussRule::legendre(order, p)?;
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let mut windows: Vec<WindowNodes> = (0..spec.len())
            .map(|_| WindowNodes { u: Vec::new(), left: 0..0, right: 0..0 })
            .collect();
        let mut outer = [0..0, 0..0];
        for (pi, panel) in plan.panels.iter().enumerate() {
            let start = nodes.len();
            match panel.kind {
                PanelKind::Regular => {
                    let len = Float::with_val(p, &panel.b - &panel.a);
                    for (s, lam) in legendre.nodes.iter().zip(&legendre.weights) {
                        let x = Float::with_val(p, &panel.a + Float::with_val(p, &len * s));
                        let w = spec.eval(&x)?;
                        weights.push(Float::with_val(p, lam * &len) * w);
                        nodes.push(x);
                    }
                }
                PanelKind::WindowLeft { j } | PanelKind::WindowRight { j } => {
                    let gamma = spec.exponent(j);
                    let rule = GaussRule::left_jacobi(order, gamma, p)?;
                    let d = &plan.half_widths[j];
                    let scale = Float::with_val(p, d).pow(Float::with_val(p, gamma + 1u32));
                    let right = matches!(panel.kind, PanelKind::WindowRight { .. });
                    let mut us = Vec::with_capacity(order);
                    for (s, lam) in rule.nodes.iter().zip(&rule.weights) {
                        let u = Float::with_val(p, d * s);
                        let x = if right {
                            Float::with_val(p, spec.position(j) + &u)
                        } else {
                            Float::with_val(p, spec.position(j) - &u)
                        };
                        let g = spec.eval_without(&x, Some(j))?;
                        weights.push(Float::with_val(p, lam * &scale) * g);
                        nodes.push(x);
                        us.push(u);
                    }
                    let range = start..nodes.len();
                    if right {
                        windows[j].right = range;
                        windows[j].u = us;
                    } else {
                        windows[j].left = range;
                    }
                }
            }
            if pi == plan.outer_panels[0] {
                outer[0] = start..nodes.len();
            }
            if pi == plan.outer_panels[1] {
                outer[1] = start..nodes.len();
            }
        }
        Ok(DiscreteMeasure { nodes, weights, windows, outer, order, prec: p })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn prec(&self) -> u32 {
        self.prec
    }

    /// `(sum W f, sum W |f|)`; `f` receives the node index and position.
    pub fn sum<F: Fn(usize, &Float) -> Float>(&self, f: F) -> (Float, Float) {
        let mut total = Float::new(self.prec);
        let mut scale = Float::new(self.prec);
        for (i, (x, w)) in self.nodes.iter().zip(&self.weights).enumerate() {
            let term = Float::with_val(self.prec, w * &f(i, x));
            scale += Float::with_val(self.prec, term.abs_ref());
            total += term;
        }
        (total, scale)
    }

    pub fn sum_complex<F: Fn(usize, &Float) -> Complex>(&self, f: F) -> (Complex, Float) {
        let mut total = Complex::zero(self.prec);
        let mut scale = Float::new(self.prec);
        for (i, (x, w)) in self.nodes.iter().zip(&self.weights).enumerate() {
            let v = f(i, x);
            total.add_scaled(w, &v);
            scale += Float::with_val(self.prec, w * v.abs());
        }
        (total, scale)
    }

    /// Sum over the outermost tail panels only.
    pub fn outer_sum<F: Fn(usize, &Float) -> Float>(&self, f: F) -> Float {
        let mut total = Float::new(self.prec);
        for range in &self.outer {
            for i in range.clone() {
                total += Float::with_val(self.prec, &self.weights[i] * &f(i, &self.nodes[i]));
            }
        }
        total
    }

    /// Principal value `PV int f(y) w(y) / (y - t_j) dy`.
    ///
    /// Outside the window of `t_j` this is an ordinary weighted sum. Inside,
    /// mirrored nodes are paired so that the rule integrates
    /// `u^gamma_j [g(t_j + u) - g(t_j - u)] / u`, whose bracket is smooth.
    /// Returns `(value, scale)`.
    pub fn pv_sum<F: Fn(usize, &Float) -> Float>(&self, spec: &WeightSpec, j: usize, f: F) -> (Float, Float) {
        let p = self.prec;
        let t = spec.position(j);
        let win = &self.windows[j];
        let mut total = Float::new(p);
        let mut scale = Float::new(p);
        for (i, (x, w)) in self.nodes.iter().zip(&self.weights).enumerate() {
            if win.left.contains(&i) || win.right.contains(&i) {
                continue;
            }
            let d = Float::with_val(p, x - t);
            let term = Float::with_val(p, w * &f(i, x)) / d;
            scale += Float::with_val(p, term.abs_ref());
            total += term;
        }
        for (k, u) in win.u.iter().enumerate() {
            let ir = win.right.start + k;
            let il = win.left.start + k;
            let plus = Float::with_val(p, &self.weights[ir] * &f(ir, &self.nodes[ir]));
            let minus = Float::with_val(p, &self.weights[il] * &f(il, &self.nodes[il]));
            let term = (plus - minus) / u;
            scale += Float::with_val(p, term.abs_ref());
            total += term;
        }
        (total, scale)
    }
}

// ---------------------------------------------------------------------------
// Adaptive driver
// ---------------------------------------------------------------------------

/// Lazily built hierarchy of discrete measures for one spec.
#[derive(Debug)]
pub struct Quadrature {
    spec: WeightSpec,
    plan: PartitionPlan,
    pinned: Option<usize>,
    levels: Mutex<Vec<Option<Arc<DiscreteMeasure>>>>,
}

impl Quadrature {
    pub fn new(spec: &WeightSpec) -> Quadrature {
        Quadrature::with_plan(spec, PartitionPlan::new(spec), None)
    }

    /// A quadrature with an explicit plan. With `pinned = Some(level)` every
    /// evaluation uses exactly that level and skips the convergence loop,
    /// which keeps the discretisation an analytic function of `t` across
    /// finite-difference stencils.
    pub fn with_plan(spec: &WeightSpec, plan: PartitionPlan, pinned: Option<usize>) -> Quadrature {
        Quadrature {
            spec: spec.clone(),
            plan,
            pinned,
            levels: Mutex::new(Vec::new()),
        }
    }

    pub fn spec(&self) -> &WeightSpec {
        &self.spec
    }

    pub fn plan(&self) -> &PartitionPlan {
        &self.plan
    }

    pub fn pinned(&self) -> Option<usize> {
        self.pinned
    }

    pub fn order_at(level: usize) -> usize {
        BASE_ORDER << level
    }

    pub fn measure(&self, level: usize) -> Result<Arc<DiscreteMeasure>> {
        {
            let levels = self.levels.lock().unwrap();
            if let Some(Some(m)) = levels.get(level) {
                return Ok(m.clone());
            }
        }
        let m = Arc::new(DiscreteMeasure::build(&self.spec, &self.plan, Quadrature::order_at(level))?);
        let mut levels = self.levels.lock().unwrap();
        if levels.len() <= level {
            levels.resize(level + 1, None);
        }
        levels[level] = Some(m.clone());
        Ok(m)
    }

    /// Evaluates `eval` on successive levels from `start` until `close`
    /// accepts a pair, returning the finer value and its level.
    pub fn converge<T, E, C>(&self, what: &str, start: usize, eval: E, mut close: C) -> Result<(T, usize)>
    where
        E: Fn(&DiscreteMeasure) -> Result<T>,
        C: FnMut(&T, &T) -> bool,
    {
        if let Some(level) = self.pinned {
            return Ok((eval(&*self.measure(level)?)?, level));
        }
        let mut prev = eval(&*self.measure(start)?)?;
        for level in start + 1..=start + MAX_DOUBLINGS {
            let cur = eval(&*self.measure(level)?)?;
            if close(&prev, &cur) {
                return Ok((cur, level));
            }
            prev = cur;
        }
        Err(Error::NoConvergence {
            what: what.to_string(),
            levels: MAX_DOUBLINGS,
        })
    }

    /// `|a - b| <= tol * scale`.
    pub fn within_tol(&self, a: &Float, b: &Float, scale: &Float) -> bool {
        let diff = Float::with_val(self.spec.prec(), a - b).abs();
        diff <= Float::with_val(self.spec.prec(), scale * self.spec.quad_tol())
    }

    /// `int f w dx` to relative tolerance `quad_tol` (relative to `int |f| w`).
    pub fn integrate<F: Fn(&Float) -> Float>(&self, f: F) -> Result<Float> {
        let (value, _) = self.converge(
            "weighted integral",
            0,
            |m| Ok(m.sum(|_, x| f(x))),
            |a, b| self.within_tol(&a.0, &b.0, &b.1),
        )?;
        Ok(value.0)
    }

    pub fn integrate_complex<F: Fn(&Float) -> Complex>(&self, f: F) -> Result<Complex> {
        let (value, _) = self.converge(
            "complex weighted integral",
            0,
            |m| Ok(m.sum_complex(|_, x| f(x))),
            |a, b| {
                let d = (&a.0 - &b.0).abs();
                d <= Float::with_val(self.spec.prec(), &b.1 * self.spec.quad_tol())
            },
        )?;
        Ok(value.0)
    }

    /// Whether the outermost tail panels of `level` carry more than
    /// `quad_tol` of the scale of `f`.
    fn tail_too_heavy<F: Fn(&Float) -> Float>(&self, level: usize, f: &F, scale: &Float) -> Result<bool> {
        let m = self.measure(level)?;
        let outer = m.outer_sum(|_, x| f(x)).abs();
        Ok(outer > Float::with_val(self.spec.prec(), scale * self.spec.quad_tol()))
    }
}

/// `int f(x) w(x; t) dx` with relative error at most `quad_tol`. Tails are
/// doubled while the outermost panels still matter.
pub fn integrate_weighted<F: Fn(&Float) -> Float>(spec: &WeightSpec, f: F) -> Result<Float> {
    let mut tail = PartitionPlan::new(spec).tail_panels;
    for _ in 0..=MAX_TAIL_DOUBLINGS {
        let quad = Quadrature::with_plan(spec, PartitionPlan::with_tail(spec, tail), None);
        let ((value, scale), level) = quad.converge(
            "weighted integral",
            0,
            |m| Ok(m.sum(|_, x| f(x))),
            |a, b| quad.within_tol(&a.0, &b.0, &b.1),
        )?;
        if !quad.tail_too_heavy(level, &f, &scale)? {
            return Ok(value);
        }
        tail *= 2;
    }
    Err(Error::NoConvergence {
        what: "tail truncation".into(),
        levels: MAX_TAIL_DOUBLINGS,
    })
}

/// Complex-valued version of [`integrate_weighted`], applied to real and
/// imaginary parts together.
pub fn integrate_weighted_complex<F: Fn(&Float) -> Complex>(spec: &WeightSpec, f: F) -> Result<Complex> {
    let mut tail = PartitionPlan::new(spec).tail_panels;
    for _ in 0..=MAX_TAIL_DOUBLINGS {
        let quad = Quadrature::with_plan(spec, PartitionPlan::with_tail(spec, tail), None);
        let ((value, scale), level) = quad.converge(
            "complex weighted integral",
            0,
            |m| Ok(m.sum_complex(|_, x| f(x))),
            |a, b| (&a.0 - &b.0).abs() <= Float::with_val(spec.prec(), &b.1 * spec.quad_tol()),
        )?;
        let re_heavy = quad.tail_too_heavy(level, &|x: &Float| f(x).re, &scale)?;
        let im_heavy = quad.tail_too_heavy(level, &|x: &Float| f(x).im, &scale)?;
        if !re_heavy && !im_heavy {
            return Ok(value);
        }
        tail *= 2;
    }
    Err(Error::NoConvergence {
        what: "tail truncation".into(),
        levels: MAX_TAIL_DOUBLINGS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::sqrt_pi;
    use rug::ops::Pow;

    fn spec(ts: &[f64], gs: &[f64]) -> WeightSpec {
        WeightSpec::from_f64(ts, gs, 256, 1e-30).unwrap()
    }

    #[test]
    fn legendre_rule_integrates_polynomials_exactly() {
        let rule = GaussRule::legendre(10, 256).unwrap();
        // int_0^1 s^19 ds = 1/20
        let sum: Float = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(s, w)| Float::with_val(256, Pow::pow(s, 19u32)) * w)
            .fold(Float::new(256), |a, b| a + b);
        assert!((sum - Float::with_val(256, 1) / 20u32).abs() < 1e-70);
    }

    #[test]
    fn jacobi_rule_absorbs_endpoint_power() {
        let gamma = Float::with_val(256, -0.5);
        let rule = GaussRule::left_jacobi(12, &gamma, 256).unwrap();
        // int_0^1 s^{-1/2} s^5 ds = 1 / 5.5
        let sum: Float = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(s, w)| Float::with_val(256, Pow::pow(s, 5u32)) * w)
            .fold(Float::new(256), |a, b| a + b);
        let expected = Float::with_val(256, 2) / 11u32;
        assert!((sum - expected).abs() < 1e-70);
        assert!(rule.nodes.iter().all(|s| *s > 0 && *s < 1));
    }

    #[test]
    fn gaussian_integrals() {
        let s = spec(&[0.0], &[0.0]);
        let one = integrate_weighted(&s, |_| Float::with_val(256, 1)).unwrap();
        assert!((one - sqrt_pi(256)).abs() < 1e-60);
        let x2 = integrate_weighted(&s, |x| Float::with_val(256, x.square_ref())).unwrap();
        assert!((x2 - sqrt_pi(256) / 2u32).abs() < 1e-60);
        let i = integrate_weighted_complex(&s, |_| Complex::from_f64(256, 0.0, 1.0)).unwrap();
        assert!(i.re.is_zero() || i.re.clone().abs() < 1e-70);
        assert!((i.im - sqrt_pi(256)).abs() < 1e-60);
    }

    #[test]
    fn even_integer_exponent_matches_polynomial_expansion() {
        // int (x - 0.3)^2 e^{-x^2} dx = sqrt(pi) (1/2 + 0.09)
        let s = spec(&[0.3], &[2.0]);
        let v = integrate_weighted(&s, |_| Float::with_val(256, 1)).unwrap();
        let expected = sqrt_pi(256) * (Float::with_val(256, 59) / 100u32);
        assert!((v - expected).abs() < 1e-55);
    }

    #[test]
    fn nodes_avoid_singular_points() {
        let s = spec(&[-0.6, 0.8], &[0.5, 1.5]);
        let q = Quadrature::new(&s);
        let m = q.measure(1).unwrap();
        for x in &m.nodes {
            for t in s.positions() {
                assert_ne!(*x, t);
            }
        }
        for w in &m.weights {
            assert!(*w > 0);
        }
    }

    #[test]
    fn window_nodes_are_mirrored() {
        let s = spec(&[-0.6, 0.8], &[-0.5, 1.5]);
        let q = Quadrature::new(&s);
        let m = q.measure(0).unwrap();
        for (j, win) in m.windows.iter().enumerate() {
            let t = s.position(j);
            for (k, u) in win.u.iter().enumerate() {
                let r = Float::with_val(256, &m.nodes[win.right.start + k] - t);
                let l = Float::with_val(256, t - &m.nodes[win.left.start + k]);
                assert!((r - u).abs() < 1e-75);
                assert!((l - u).abs() < 1e-75);
            }
        }
    }

    #[test]
    fn refinement_is_stable_once_converged() {
        let s = spec(&[-0.6, 0.8], &[0.5, 1.5]);
        let q = Quadrature::new(&s);
        let f = |_: usize, x: &Float| Float::with_val(256, Pow::pow(x, 6u32));
        let a = q.measure(2).unwrap().sum(f).0;
        let b = q.measure(3).unwrap().sum(f).0;
        assert!(q.within_tol(&a, &b, &b));
    }

    #[test]
    fn plan_structure_survives_small_shifts() {
        let s = spec(&[-0.6, 0.8], &[0.5, 1.5]);
        let plan = PartitionPlan::new(&s);
        let shifted = s
            .with_positions(&[Float::with_val(256, -0.6 + 1e-8), Float::with_val(256, 0.8)])
            .unwrap();
        let moved = plan.reanchored(&shifted);
        assert_eq!(plan.panels.len(), moved.panels.len());
        for (a, b) in plan.panels.iter().zip(&moved.panels) {
            assert_eq!(a.kind, b.kind);
        }
    }
}
