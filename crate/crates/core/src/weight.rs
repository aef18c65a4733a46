//! The weight `w(x; t) = exp(-x^2) * prod_j |x - t_j|^gamma_j` and the
//! numeric configuration that travels with it.

use std::cmp::Ordering;

use rug::Float;

use crate::error::{Error, Result};
use crate::numeric::{fmt_real, parse_real};

pub const DEFAULT_PRECISION_BITS: u32 = 256;
pub const MIN_PRECISION_BITS: u32 = 64;
/// Singular points closer than this get a conditioning warning.
pub const CLOSE_PAIR_THRESHOLD: f64 = 1e-6;

/// One root-type singularity `|x - position|^exponent`.
#[derive(Clone, Debug, PartialEq)]
pub struct Singularity {
    pub position: Float,
    pub exponent: Float,
}

/// Parameters of the weight plus the precision every derived quantity uses.
///
/// Immutable once constructed; [`WeightSpec::new`] runs [`validate`].
#[derive(Clone, Debug, PartialEq)]
pub struct WeightSpec {
    singularities: Vec<Singularity>,
    precision_bits: u32,
    quad_tol: Float,
}

impl WeightSpec {
    pub fn new(singularities: Vec<Singularity>, precision_bits: u32, quad_tol: Float) -> Result<Self> {
        let spec = WeightSpec::unchecked(singularities, precision_bits, quad_tol);
        validate(&spec)?;
        Ok(spec)
    }

    /// Builds a spec without validating it. Everything downstream assumes a
    /// valid spec, so this is only useful for exercising [`validate`].
    pub fn unchecked(singularities: Vec<Singularity>, precision_bits: u32, quad_tol: Float) -> Self {
        let prec = precision_bits.max(2);
        let singularities = singularities
            .into_iter()
            .map(|s| Singularity {
                position: Float::with_val(prec, &s.position),
                exponent: Float::with_val(prec, &s.exponent),
            })
            .collect();
        WeightSpec {
            singularities,
            precision_bits,
            quad_tol: Float::with_val(prec, &quad_tol),
        }
    }

    /// Parses positions, exponents and tolerance from decimal text at full
    /// precision.
    pub fn from_decimal(ts: &[&str], gammas: &[&str], precision_bits: u32, quad_tol: &str) -> Result<Self> {
        if ts.len() != gammas.len() {
            return Err(Error::BadConfig(format!(
                "{} positions but {} exponents",
                ts.len(),
                gammas.len()
            )));
        }
        if precision_bits < MIN_PRECISION_BITS {
            return Err(Error::BadConfig(format!(
                "precision_bits = {precision_bits} is below {MIN_PRECISION_BITS}"
            )));
        }
        let singularities = ts
            .iter()
            .zip(gammas)
            .map(|(t, g)| {
                Ok(Singularity {
                    position: parse_real(precision_bits, t)?,
                    exponent: parse_real(precision_bits, g)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        WeightSpec::new(singularities, precision_bits, parse_real(precision_bits, quad_tol)?)
    }

    /// Convenience constructor; decimal inputs go through their shortest
    /// `f64` representation so `0.3` means 3/10 rather than the nearest double.
    pub fn from_f64(ts: &[f64], gammas: &[f64], precision_bits: u32, quad_tol: f64) -> Result<Self> {
        let ts: Vec<String> = ts.iter().map(|t| format!("{t:e}")).collect();
        let gs: Vec<String> = gammas.iter().map(|g| format!("{g:e}")).collect();
        let ts: Vec<&str> = ts.iter().map(String::as_str).collect();
        let gs: Vec<&str> = gs.iter().map(String::as_str).collect();
        WeightSpec::from_decimal(&ts, &gs, precision_bits, &format!("{quad_tol:e}"))
    }

    pub fn singularities(&self) -> &[Singularity] {
        &self.singularities
    }

    pub fn len(&self) -> usize {
        self.singularities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.singularities.is_empty()
    }

    pub fn position(&self, j: usize) -> &Float {
        &self.singularities[j].position
    }

    pub fn exponent(&self, j: usize) -> &Float {
        &self.singularities[j].exponent
    }

    pub fn positions(&self) -> Vec<Float> {
        self.singularities.iter().map(|s| s.position.clone()).collect()
    }

    pub fn prec(&self) -> u32 {
        self.precision_bits
    }

    pub fn quad_tol(&self) -> &Float {
        &self.quad_tol
    }

    pub fn all_exponents_zero(&self) -> bool {
        self.singularities.iter().all(|s| s.exponent.is_zero())
    }

    pub fn with_quad_tol(&self, quad_tol: Float) -> Result<Self> {
        WeightSpec::new(self.singularities.clone(), self.precision_bits, quad_tol)
    }

    /// Same exponents, new positions. Fails if the new positions break the
    /// strict ordering.
    pub fn with_positions(&self, positions: &[Float]) -> Result<Self> {
        if positions.len() != self.len() {
            return Err(Error::BadConfig("position count mismatch".into()));
        }
        let singularities = self
            .singularities
            .iter()
            .zip(positions)
            .map(|(s, t)| Singularity {
                position: Float::with_val(self.prec(), t),
                exponent: s.exponent.clone(),
            })
            .collect();
        WeightSpec::new(singularities, self.precision_bits, self.quad_tol.clone())
    }

    /// The mirror image `t -> -t` (order reversed to stay increasing).
    pub fn reflected(&self) -> Self {
        let singularities = self
            .singularities
            .iter()
            .rev()
            .map(|s| Singularity {
                position: Float::with_val(self.prec(), -&s.position),
                exponent: s.exponent.clone(),
            })
            .collect();
        WeightSpec {
            singularities,
            precision_bits: self.precision_bits,
            quad_tol: self.quad_tol.clone(),
        }
    }

    /// Pairs of neighbouring singular points closer than
    /// [`CLOSE_PAIR_THRESHOLD`]; conditioning degrades there.
    pub fn warnings(&self) -> Vec<String> {
        self.singularities
            .windows(2)
            .enumerate()
            .filter_map(|(i, w)| {
                let gap = Float::with_val(self.prec(), &w[1].position - &w[0].position);
                (gap.to_f64() < CLOSE_PAIR_THRESHOLD).then(|| {
                    format!(
                        "t_{} and t_{} are {} apart; results are ill-conditioned",
                        i + 1,
                        i + 2,
                        fmt_real(&gap, 6)
                    )
                })
            })
            .collect()
    }

    /// `-x^2 + sum_{k != skip} gamma_k ln|x - t_k|`; `None` when a skipped-in
    /// factor vanishes (x on a singular point with positive exponent).
    pub fn log_weight(&self, x: &Float, skip: Option<usize>) -> Result<Option<Float>> {
        let p = self.prec();
        let mut acc = -Float::with_val(p, x.square_ref());
        for (k, s) in self.singularities.iter().enumerate() {
            if Some(k) == skip || s.exponent.is_zero() {
                continue;
            }
            let d = Float::with_val(p, x - &s.position).abs();
            if d.is_zero() {
                return if s.exponent.is_sign_positive() {
                    Ok(None)
                } else {
                    Err(Error::SingularEvaluation { x: fmt_real(x, 20) })
                };
            }
            acc += d.ln() * &s.exponent;
        }
        Ok(Some(acc))
    }

    /// The weight with the factor for singularity `skip` removed.
    pub fn eval_without(&self, x: &Float, skip: Option<usize>) -> Result<Float> {
        Ok(match self.log_weight(x, skip)? {
            Some(l) => l.exp(),
            None => Float::new(self.prec()),
        })
    }

    /// `w(x; t)`, computed in log space.
    pub fn eval(&self, x: &Float) -> Result<Float> {
        self.eval_without(x, None)
    }
}

/// Checks the weight's constraints.
pub fn validate(spec: &WeightSpec) -> Result<()> {
    if spec.precision_bits < MIN_PRECISION_BITS {
        return Err(Error::BadConfig(format!(
            "precision_bits = {} is below {MIN_PRECISION_BITS}",
            spec.precision_bits
        )));
    }
    if !(spec.quad_tol.is_finite() && spec.quad_tol.is_sign_positive() && !spec.quad_tol.is_zero()) {
        return Err(Error::BadConfig(format!(
            "quad_tol must be positive, got {}",
            fmt_real(&spec.quad_tol, 6)
        )));
    }
    if spec.singularities.is_empty() {
        return Err(Error::BadConfig("at least one singular point is required".into()));
    }
    for (i, s) in spec.singularities.iter().enumerate() {
        if !s.position.is_finite() {
            return Err(Error::BadConfig(format!("t_{} is not finite", i + 1)));
        }
        if !s.exponent.is_finite() || s.exponent <= -1 {
            return Err(Error::ExponentOutOfRange {
                index: i + 1,
                value: fmt_real(&s.exponent, 12),
            });
        }
    }
    for (i, w) in spec.singularities.windows(2).enumerate() {
        if w[0].position.partial_cmp(&w[1].position) != Some(Ordering::Less) {
            return Err(Error::DuplicateSingularity { index: i + 1 });
        }
    }
    Ok(())
}

/// Free-function form of [`WeightSpec::eval`].
pub fn eval_weight(spec: &WeightSpec, x: &Float) -> Result<Float> {
    spec.eval(x)
}
