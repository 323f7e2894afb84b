//! Convex integrands and their divergences on finite measures, including the
//! hockey-stick family, adjoint integrands, the hinge reconstruction of a
//! finite-slope divergence from an overflow profile, and a data-processing
//! audit used as a test oracle.
//!
//! Piecewise-linear and rational-algebraic integrands evaluate exactly in
//! rationals; transcendental ones evaluate in floating point (tolerance 1e-9
//! wherever the crate compares such values).

use crate::error::{Error, Result};
use crate::maximin::OverflowProfile;
use crate::measure::Measure;
use crate::{AtomSpace, Rational};
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::fmt;
use std::sync::Arc;

/// Exact-or-floating scalar. Exactness is contagious downward: any
/// floating operand makes the result floating.
#[derive(Debug, Clone, PartialEq)]
pub enum Scalar {
    Exact(Rational),
    Approx(f64),
}

impl Scalar {
    pub fn zero_exact() -> Scalar {
        Scalar::Exact(Rational::zero())
    }

    pub fn as_f64(&self) -> f64 {
        match self {
            Scalar::Exact(r) => r.to_f64().unwrap_or(f64::NAN),
            Scalar::Approx(x) => *x,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Scalar::Exact(_))
    }

    pub fn add(&self, other: &Scalar) -> Scalar {
        match (self, other) {
            (Scalar::Exact(a), Scalar::Exact(b)) => Scalar::Exact(a + b),
            _ => Scalar::Approx(self.as_f64() + other.as_f64()),
        }
    }

    pub fn mul(&self, other: &Scalar) -> Scalar {
        match (self, other) {
            (Scalar::Exact(a), Scalar::Exact(b)) => Scalar::Exact(a * b),
            _ => Scalar::Approx(self.as_f64() * other.as_f64()),
        }
    }

    pub fn sub(&self, other: &Scalar) -> Scalar {
        match (self, other) {
            (Scalar::Exact(a), Scalar::Exact(b)) => Scalar::Exact(a - b),
            _ => Scalar::Approx(self.as_f64() - other.as_f64()),
        }
    }
}

/// Value in R ∪ {+∞}; +∞ arises through the recession-slope convention
/// (and through integrands that blow up at 0, which is the same convention
/// applied to the adjoint).
#[derive(Debug, Clone, PartialEq)]
pub enum ExtendedValue {
    Finite(Scalar),
    PosInf,
}

impl ExtendedValue {
    pub fn exact(r: Rational) -> ExtendedValue {
        ExtendedValue::Finite(Scalar::Exact(r))
    }

    pub fn approx(x: f64) -> ExtendedValue {
        ExtendedValue::Finite(Scalar::Approx(x))
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, ExtendedValue::Finite(_))
    }

    pub fn as_f64(&self) -> f64 {
        match self {
            ExtendedValue::Finite(s) => s.as_f64(),
            ExtendedValue::PosInf => f64::INFINITY,
        }
    }

    /// Exact value when fully rational.
    pub fn exact_value(&self) -> Option<&Rational> {
        match self {
            ExtendedValue::Finite(Scalar::Exact(r)) => Some(r),
            _ => None,
        }
    }

    /// `self <= other`, exact where both sides are exact, with `tol` slack
    /// whenever floating point is involved. +∞ <= +∞ holds.
    pub fn le_with_tol(&self, other: &ExtendedValue, tol: f64) -> bool {
        match (self, other) {
            (_, ExtendedValue::PosInf) => true,
            (ExtendedValue::PosInf, ExtendedValue::Finite(_)) => false,
            (ExtendedValue::Finite(Scalar::Exact(a)), ExtendedValue::Finite(Scalar::Exact(b))) => {
                a <= b
            }
            (ExtendedValue::Finite(a), ExtendedValue::Finite(b)) => {
                a.as_f64() <= b.as_f64() + tol
            }
        }
    }

    /// Symmetric closeness; exact equality on the rational path.
    pub fn close_to(&self, other: &ExtendedValue, tol: f64) -> bool {
        match (self, other) {
            (ExtendedValue::PosInf, ExtendedValue::PosInf) => true,
            (ExtendedValue::Finite(Scalar::Exact(a)), ExtendedValue::Finite(Scalar::Exact(b))) => {
                a == b
            }
            (ExtendedValue::Finite(a), ExtendedValue::Finite(b)) => {
                (a.as_f64() - b.as_f64()).abs() <= tol
            }
            _ => false,
        }
    }
}

impl fmt::Display for ExtendedValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedValue::PosInf => write!(f, "inf"),
            ExtendedValue::Finite(Scalar::Exact(r)) => write!(f, "{}", crate::format_rational(r)),
            ExtendedValue::Finite(Scalar::Approx(x)) => write!(f, "{x}"),
        }
    }
}

/// Right derivative value, allowing the infinite endpoints convex
/// integrands can produce.
#[derive(Debug, Clone, PartialEq)]
pub enum Slope {
    Exact(Rational),
    Approx(f64),
    NegInf,
    PosInf,
}

impl Slope {
    pub fn as_f64(&self) -> f64 {
        match self {
            Slope::Exact(r) => r.to_f64().unwrap_or(f64::NAN),
            Slope::Approx(x) => *x,
            Slope::NegInf => f64::NEG_INFINITY,
            Slope::PosInf => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    /// (t - gamma)_+
    HockeyStick(Rational),
    /// (1 - gamma t)_+, the adjoint of the hockey stick
    HingeDown(Rational),
    /// t^2
    Square,
    /// 1/t (adjoint of t^2)
    Recip,
    /// e^{-t}
    ExpNeg,
    /// t e^{-1/t} (adjoint of e^{-t})
    TExpNegInv,
    /// t log t
    TLogT,
    /// -log t (adjoint of t log t)
    NegLog,
    /// |t - 1| (self-adjoint)
    AbsDev,
    /// (t - 1)^2
    ChiSq,
    /// (1 - t)^2 / t (adjoint of chi-square)
    ChiSqAdj,
    /// c0 + c1 t
    Linear(Rational, Rational),
}

/// Convex integrand with right derivative and recession slope, the data a
/// divergence evaluation needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Integrand {
    kind: Kind,
    name: String,
}

impl Integrand {
    pub fn hockey_stick_integrand(gamma: Rational) -> Integrand {
        let name = format!("hs({})", crate::format_rational(&gamma));
        Integrand { kind: Kind::HockeyStick(gamma), name }
    }

    pub fn square() -> Integrand {
        Integrand { kind: Kind::Square, name: "square".into() }
    }

    pub fn exp_neg() -> Integrand {
        Integrand { kind: Kind::ExpNeg, name: "exp-neg".into() }
    }

    pub fn t_log_t() -> Integrand {
        Integrand { kind: Kind::TLogT, name: "t-log-t".into() }
    }

    pub fn abs_dev() -> Integrand {
        Integrand { kind: Kind::AbsDev, name: "abs-dev".into() }
    }

    pub fn chi_square() -> Integrand {
        Integrand { kind: Kind::ChiSq, name: "chi-square".into() }
    }

    pub fn linear(intercept: Rational, slope: Rational) -> Integrand {
        let name = format!(
            "linear({},{})",
            crate::format_rational(&intercept),
            crate::format_rational(&slope)
        );
        Integrand { kind: Kind::Linear(intercept, slope), name }
    }

    /// The built-in family used by audits and the CLI.
    pub fn builtins() -> Vec<Integrand> {
        vec![
            Integrand::hockey_stick_integrand(Rational::one()),
            Integrand::square(),
            Integrand::exp_neg(),
            Integrand::t_log_t(),
            Integrand::abs_dev(),
            Integrand::chi_square(),
        ]
    }

    pub fn by_name(name: &str) -> Result<Integrand> {
        match name {
            "square" => Ok(Integrand::square()),
            "exp-neg" => Ok(Integrand::exp_neg()),
            "t-log-t" => Ok(Integrand::t_log_t()),
            "abs-dev" => Ok(Integrand::abs_dev()),
            "chi-square" => Ok(Integrand::chi_square()),
            other => {
                if let Some(rest) = other.strip_prefix("hs(").and_then(|r| r.strip_suffix(')')) {
                    let gamma = crate::parse_rational(rest)?;
                    if gamma <= Rational::zero() {
                        return Err(Error::Precondition("hockey-stick gamma must be positive".into()));
                    }
                    return Ok(Integrand::hockey_stick_integrand(gamma));
                }
                Err(Error::Precondition(format!("unknown integrand {other:?}")))
            }
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Whether evaluation at rational points stays rational.
    pub fn is_exact(&self) -> bool {
        matches!(
            self.kind,
            Kind::HockeyStick(_)
                | Kind::HingeDown(_)
                | Kind::Square
                | Kind::Recip
                | Kind::AbsDev
                | Kind::ChiSq
                | Kind::ChiSqAdj
                | Kind::Linear(..)
        )
    }

    pub fn strictly_convex(&self) -> bool {
        matches!(
            self.kind,
            Kind::Square
                | Kind::Recip
                | Kind::ExpNeg
                | Kind::TExpNegInv
                | Kind::TLogT
                | Kind::NegLog
                | Kind::ChiSq
                | Kind::ChiSqAdj
        )
    }

    /// Finite on all of [0, ∞)?
    pub fn finite_on_half_line(&self) -> bool {
        !matches!(self.kind, Kind::Recip | Kind::NegLog | Kind::ChiSqAdj)
    }

    pub fn eval(&self, t: &Rational) -> ExtendedValue {
        debug_assert!(*t >= Rational::zero());
        match &self.kind {
            Kind::HockeyStick(g) => {
                let d = t - g;
                ExtendedValue::exact(if d.is_positive() { d } else { Rational::zero() })
            }
            Kind::HingeDown(g) => {
                let d = Rational::one() - g * t;
                ExtendedValue::exact(if d.is_positive() { d } else { Rational::zero() })
            }
            Kind::Square => ExtendedValue::exact(t * t),
            Kind::Recip => {
                if t.is_zero() {
                    ExtendedValue::PosInf
                } else {
                    ExtendedValue::exact(t.recip())
                }
            }
            Kind::ExpNeg => ExtendedValue::approx((-t.to_f64().unwrap()).exp()),
            Kind::TExpNegInv => {
                if t.is_zero() {
                    ExtendedValue::exact(Rational::zero())
                } else {
                    let x = t.to_f64().unwrap();
                    ExtendedValue::approx(x * (-1.0 / x).exp())
                }
            }
            Kind::TLogT => {
                if t.is_zero() {
                    ExtendedValue::exact(Rational::zero())
                } else {
                    let x = t.to_f64().unwrap();
                    ExtendedValue::approx(x * x.ln())
                }
            }
            Kind::NegLog => {
                if t.is_zero() {
                    ExtendedValue::PosInf
                } else {
                    ExtendedValue::approx(-t.to_f64().unwrap().ln())
                }
            }
            Kind::AbsDev => {
                let d = t - Rational::one();
                ExtendedValue::exact(d.abs())
            }
            Kind::ChiSq => {
                let d = t - Rational::one();
                ExtendedValue::exact(&d * &d)
            }
            Kind::ChiSqAdj => {
                if t.is_zero() {
                    ExtendedValue::PosInf
                } else {
                    let d = Rational::one() - t;
                    ExtendedValue::exact(&d * &d / t)
                }
            }
            Kind::Linear(c0, c1) => ExtendedValue::exact(c0 + c1 * t),
        }
    }

    pub fn right_derivative(&self, t: &Rational) -> Slope {
        debug_assert!(*t >= Rational::zero());
        match &self.kind {
            Kind::HockeyStick(g) => {
                Slope::Exact(if t >= g { Rational::one() } else { Rational::zero() })
            }
            Kind::HingeDown(g) => {
                // kink where 1 - g t reaches 0, i.e. t = 1/g
                if t * g >= Rational::one() {
                    Slope::Exact(Rational::zero())
                } else {
                    Slope::Exact(-g.clone())
                }
            }
            Kind::Square => Slope::Exact(Rational::from_integer(2.into()) * t),
            Kind::Recip => {
                if t.is_zero() {
                    Slope::NegInf
                } else {
                    Slope::Exact(-(t * t).recip())
                }
            }
            Kind::ExpNeg => Slope::Approx(-(-t.to_f64().unwrap()).exp()),
            Kind::TExpNegInv => {
                if t.is_zero() {
                    Slope::Exact(Rational::zero())
                } else {
                    let x = t.to_f64().unwrap();
                    Slope::Approx((1.0 + 1.0 / x) * (-1.0 / x).exp())
                }
            }
            Kind::TLogT => {
                if t.is_zero() {
                    Slope::NegInf
                } else {
                    Slope::Approx(t.to_f64().unwrap().ln() + 1.0)
                }
            }
            Kind::NegLog => {
                if t.is_zero() {
                    Slope::NegInf
                } else {
                    Slope::Approx(-1.0 / t.to_f64().unwrap())
                }
            }
            Kind::AbsDev => {
                Slope::Exact(if t >= &Rational::one() { Rational::one() } else { -Rational::one() })
            }
            Kind::ChiSq => {
                Slope::Exact(Rational::from_integer(2.into()) * (t - Rational::one()))
            }
            Kind::ChiSqAdj => {
                if t.is_zero() {
                    Slope::NegInf
                } else {
                    // d/dt [(1-t)^2/t] = 1 - 1/t^2
                    Slope::Exact(Rational::one() - (t * t).recip())
                }
            }
            Kind::Linear(_, c1) => Slope::Exact(c1.clone()),
        }
    }

    /// Floating-point evaluation, for the descent oracle.
    pub fn eval_f64(&self, t: f64) -> f64 {
        debug_assert!(t >= 0.0);
        match &self.kind {
            Kind::HockeyStick(g) => (t - g.to_f64().unwrap()).max(0.0),
            Kind::HingeDown(g) => (1.0 - g.to_f64().unwrap() * t).max(0.0),
            Kind::Square => t * t,
            Kind::Recip => {
                if t == 0.0 {
                    f64::INFINITY
                } else {
                    1.0 / t
                }
            }
            Kind::ExpNeg => (-t).exp(),
            Kind::TExpNegInv => {
                if t == 0.0 {
                    0.0
                } else {
                    t * (-1.0 / t).exp()
                }
            }
            Kind::TLogT => {
                if t == 0.0 {
                    0.0
                } else {
                    t * t.ln()
                }
            }
            Kind::NegLog => {
                if t == 0.0 {
                    f64::INFINITY
                } else {
                    -t.ln()
                }
            }
            Kind::AbsDev => (t - 1.0).abs(),
            Kind::ChiSq => (t - 1.0) * (t - 1.0),
            Kind::ChiSqAdj => {
                if t == 0.0 {
                    f64::INFINITY
                } else {
                    (1.0 - t) * (1.0 - t) / t
                }
            }
            Kind::Linear(c0, c1) => c0.to_f64().unwrap() + c1.to_f64().unwrap() * t,
        }
    }

    /// Floating-point right derivative, for the descent oracle.
    pub fn right_derivative_f64(&self, t: f64) -> f64 {
        debug_assert!(t >= 0.0);
        match &self.kind {
            Kind::HockeyStick(g) => {
                if t >= g.to_f64().unwrap() {
                    1.0
                } else {
                    0.0
                }
            }
            Kind::HingeDown(g) => {
                let gf = g.to_f64().unwrap();
                if t * gf >= 1.0 {
                    0.0
                } else {
                    -gf
                }
            }
            Kind::Square => 2.0 * t,
            Kind::Recip => {
                if t == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    -1.0 / (t * t)
                }
            }
            Kind::ExpNeg => -(-t).exp(),
            Kind::TExpNegInv => {
                if t == 0.0 {
                    0.0
                } else {
                    (1.0 + 1.0 / t) * (-1.0 / t).exp()
                }
            }
            Kind::TLogT => {
                if t == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    t.ln() + 1.0
                }
            }
            Kind::NegLog => {
                if t == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    -1.0 / t
                }
            }
            Kind::AbsDev => {
                if t >= 1.0 {
                    1.0
                } else {
                    -1.0
                }
            }
            Kind::ChiSq => 2.0 * (t - 1.0),
            Kind::ChiSqAdj => {
                if t == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    1.0 - 1.0 / (t * t)
                }
            }
            Kind::Linear(_, c1) => c1.to_f64().unwrap(),
        }
    }

    /// lim eval(t)/t as t → ∞; exact for every built-in.
    pub fn recession_slope(&self) -> ExtendedValue {
        match &self.kind {
            Kind::HockeyStick(_) | Kind::AbsDev => ExtendedValue::exact(Rational::one()),
            Kind::HingeDown(_) | Kind::Recip | Kind::NegLog => {
                ExtendedValue::exact(Rational::zero())
            }
            Kind::ExpNeg => ExtendedValue::exact(Rational::zero()),
            Kind::TExpNegInv | Kind::ChiSqAdj => ExtendedValue::exact(Rational::one()),
            Kind::Square | Kind::TLogT | Kind::ChiSq => ExtendedValue::PosInf,
            Kind::Linear(_, c1) => ExtendedValue::exact(c1.clone()),
        }
    }
}

impl fmt::Display for Integrand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)
    }
}

/// Adjoint integrand t ↦ t ϑ(1/t), with ϑ'_∞ at t = 0. Satisfies
/// D_ϑ(P‖Q) = D_ϑ̂(Q‖P).
pub fn adjoint_integrand(theta: &Integrand) -> Integrand {
    let kind = match &theta.kind {
        Kind::HockeyStick(g) => Kind::HingeDown(g.clone()),
        Kind::HingeDown(g) => Kind::HockeyStick(g.clone()),
        Kind::Square => Kind::Recip,
        Kind::Recip => Kind::Square,
        Kind::ExpNeg => Kind::TExpNegInv,
        Kind::TExpNegInv => Kind::ExpNeg,
        Kind::TLogT => Kind::NegLog,
        Kind::NegLog => Kind::TLogT,
        Kind::AbsDev => Kind::AbsDev,
        Kind::ChiSq => Kind::ChiSqAdj,
        Kind::ChiSqAdj => Kind::ChiSq,
        Kind::Linear(c0, c1) => Kind::Linear(c1.clone(), c0.clone()),
    };
    let name = format!("adj[{}]", theta.name);
    let name = match &kind {
        Kind::HockeyStick(g) => format!("hs({})", crate::format_rational(g)),
        _ => name,
    };
    Integrand { kind, name }
}

/// ϑ-divergence of P from Q: Σ_{Q>0} Q ϑ(P/Q) + ϑ'_∞ · (Q-singular mass of P).
/// Atoms with P = Q = 0 contribute nothing.
pub fn f_divergence(p: &Measure, q: &Measure, theta: &Integrand) -> Result<ExtendedValue> {
    if !p.same_space(q) {
        return Err(Error::SpaceMismatch);
    }
    let mut acc = Scalar::zero_exact();
    let mut singular = Rational::zero();
    for (atom, qm) in q.iter() {
        let pm = p.mass(atom);
        if qm.is_zero() {
            singular += pm;
            continue;
        }
        let ratio = pm / qm;
        match theta.eval(&ratio) {
            ExtendedValue::PosInf => return Ok(ExtendedValue::PosInf),
            ExtendedValue::Finite(v) => acc = acc.add(&Scalar::Exact(qm.clone()).mul(&v)),
        }
    }
    if !singular.is_zero() {
        match theta.recession_slope() {
            ExtendedValue::PosInf => return Ok(ExtendedValue::PosInf),
            ExtendedValue::Finite(slope) => {
                acc = acc.add(&slope.mul(&Scalar::Exact(singular)));
            }
        }
    }
    Ok(ExtendedValue::Finite(acc))
}

/// Hockey-stick divergence HS_γ(P‖Q) = Σ (P - γQ)_+ over Q-positive atoms
/// plus the full Q-singular mass of P. Exact.
pub fn hockey_stick(p: &Measure, q: &Measure, gamma: &Rational) -> Result<Rational> {
    if *gamma <= Rational::zero() {
        return Err(Error::Precondition("hockey-stick gamma must be positive".into()));
    }
    if !p.same_space(q) {
        return Err(Error::SpaceMismatch);
    }
    let mut acc = Rational::zero();
    for (atom, qm) in q.iter() {
        let pm = p.mass(atom);
        if qm.is_zero() {
            acc += pm;
        } else {
            let d = pm - gamma * qm;
            if d.is_positive() {
                acc += d;
            }
        }
    }
    Ok(acc)
}

/// Row-stochastic kernel between two atom spaces; rows sum to one exactly.
#[derive(Debug, Clone)]
pub struct MarkovKernel {
    from: Arc<AtomSpace>,
    to: Arc<AtomSpace>,
    rows: Vec<Vec<Rational>>,
}

impl MarkovKernel {
    pub fn new(from: Arc<AtomSpace>, to: Arc<AtomSpace>, rows: Vec<Vec<Rational>>) -> Result<MarkovKernel> {
        if rows.len() != from.len() {
            return Err(Error::BadKernel("row count does not match source space".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != to.len() {
                return Err(Error::BadKernel(format!("row {i} has wrong width")));
            }
            if row.iter().any(|x| x.is_negative()) {
                return Err(Error::BadKernel(format!("row {i} has a negative entry")));
            }
            let sum: Rational = row.iter().fold(Rational::zero(), |a, b| a + b);
            if sum != Rational::one() {
                return Err(Error::BadKernel(format!("row {i} sums to {sum}, not 1")));
            }
        }
        Ok(MarkovKernel { from, to, rows })
    }

    pub fn identity(space: &Arc<AtomSpace>) -> MarkovKernel {
        let n = space.len();
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { Rational::one() } else { Rational::zero() })
                    .collect()
            })
            .collect();
        MarkovKernel { from: Arc::clone(space), to: Arc::clone(space), rows }
    }

    /// Pushforward of a measure through the kernel.
    pub fn push(&self, m: &Measure) -> Result<Measure> {
        if !m.same_space(&self.from.base_measure()) {
            return Err(Error::SpaceMismatch);
        }
        let mut mass = vec![Rational::zero(); self.to.len()];
        for (atom, w) in m.iter() {
            if w.is_zero() {
                continue;
            }
            for (j, k) in self.rows[atom].iter().enumerate() {
                if !k.is_zero() {
                    mass[j] += w * k;
                }
            }
        }
        Measure::from_mass(&self.to, mass)
    }
}

/// True iff D_ϑ(K_#P ‖ K_#Q) ≤ D_ϑ(P ‖ Q), with 1e-9 slack when floating
/// point is involved. Test oracle for the data-processing inequality.
pub fn dpi_audit(p: &Measure, q: &Measure, kernel: &MarkovKernel, theta: &Integrand) -> Result<bool> {
    let lhs = f_divergence(&kernel.push(p)?, &kernel.push(q)?, theta)?;
    let rhs = f_divergence(p, q, theta)?;
    Ok(lhs.le_with_tol(&rhs, 1e-9))
}

/// Reconstructs φ(0)·ν̄(Ω) + φ'_+(0)·ν_ι(Ω) + ∫ Over(t) dμ_φ(t) from an
/// overflow profile, where μ_φ is the Stieltjes measure of φ'_+ taken on a
/// grid of `quad_points` cells refined by the profile's breakpoints. Each
/// cell uses the zeroth and first Stieltjes moments of φ'_+ (both available
/// from φ and φ'_+ by parts), so the value is exact whenever φ evaluates
/// exactly; for piecewise-linear φ this reduces to the finite sum of kink
/// jumps.
pub fn hinge_reconstruct(
    phi: &Integrand,
    over: &OverflowProfile,
    nu_bar_total: &Rational,
    nu_iota_total: &Rational,
    quad_points: usize,
) -> Result<ExtendedValue> {
    if !phi.finite_on_half_line() {
        return Err(Error::InfiniteRecessionSlope);
    }
    let slope_inf = match phi.recession_slope() {
        ExtendedValue::PosInf => return Err(Error::InfiniteRecessionSlope),
        ExtendedValue::Finite(s) => s,
    };
    let quad_points = quad_points.max(1);

    let phi_at = |t: &Rational| -> Scalar {
        match phi.eval(t) {
            ExtendedValue::Finite(v) => v,
            ExtendedValue::PosInf => unreachable!("finite integrand"),
        }
    };
    let deriv_at = |t: &Rational| -> Scalar {
        match phi.right_derivative(t) {
            Slope::Exact(r) => Scalar::Exact(r),
            Slope::Approx(x) => Scalar::Approx(x),
            Slope::NegInf | Slope::PosInf => unreachable!("finite-slope integrand"),
        }
    };

    let zero = Rational::zero();
    // Span the grid past every profile breakpoint; beyond it the profile is
    // constant at its singular mass.
    let mut span = Rational::one();
    for b in over.breakpoints() {
        if b > &span {
            span = b.clone();
        }
    }
    let mut grid: Vec<Rational> = (0..=quad_points)
        .map(|k| &span * Rational::new(k.into(), quad_points.into()))
        .collect();
    for b in over.breakpoints() {
        if b > &zero && b < &span {
            grid.push(b.clone());
        }
    }
    grid.sort();
    grid.dedup();

    let c0 = phi_at(&zero).mul(&Scalar::Exact(nu_bar_total.clone()));
    let c1 = deriv_at(&zero).mul(&Scalar::Exact(nu_iota_total.clone()));
    let mut acc = c0.add(&c1);

    // Per cell (a, b]: mu = φ'_+(b) - φ'_+(a) and
    // m1 = b φ'_+(b) - a φ'_+(a) - (φ(b) - φ(a)); with Over linear on the
    // cell, ∫ Over dμ_φ = α·mu + β·m1.
    for w in grid.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a == b {
            continue;
        }
        let da = deriv_at(a);
        let db = deriv_at(b);
        let mu = db.sub(&da);
        let m1 = Scalar::Exact(b.clone())
            .mul(&db)
            .sub(&Scalar::Exact(a.clone()).mul(&da))
            .sub(&phi_at(b).sub(&phi_at(a)));
        let over_a = over.eval(a);
        let over_b = over.eval(b);
        let beta = (&over_b - &over_a) / (b - a);
        let alpha = over_a - &beta * a;
        acc = acc
            .add(&Scalar::Exact(alpha).mul(&mu))
            .add(&Scalar::Exact(beta).mul(&m1));
    }

    // Tail (span, ∞): the profile is the constant singular mass.
    let tail_mu = slope_inf.sub(&deriv_at(&span));
    acc = acc.add(&Scalar::Exact(over.singular_mass().clone()).mul(&tail_mu));
    Ok(ExtendedValue::Finite(acc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::Measure;
    use crate::{int, ratio};
    use num_traits::ToPrimitive;

    fn space2() -> Arc<AtomSpace> {
        AtomSpace::new([("a", int(1)), ("b", int(1))]).unwrap()
    }

    fn space3() -> Arc<AtomSpace> {
        AtomSpace::new([("a", int(1)), ("b", int(1)), ("c", int(1))]).unwrap()
    }

    #[test]
    fn divergence_identity_is_zero() {
        let s = space2();
        let p = Measure::from_mass(&s, vec![int(1), int(1)]).unwrap();
        let theta = Integrand::hockey_stick_integrand(int(1));
        let v = f_divergence(&p, &p, &theta).unwrap();
        assert_eq!(v, ExtendedValue::exact(int(0)));
    }

    #[test]
    fn divergence_infinite_on_singular_mass_with_infinite_slope() {
        let s = space3();
        let p = Measure::from_mass(&s, vec![int(2), int(5), int(3)]).unwrap();
        let q = Measure::from_mass(&s, vec![int(1), int(0), int(1)]).unwrap();
        let v = f_divergence(&p, &q, &Integrand::square()).unwrap();
        assert_eq!(v, ExtendedValue::PosInf);
    }

    #[test]
    fn divergence_exp_neg_ignores_singular() {
        let s = space3();
        let p = Measure::from_mass(&s, vec![int(2), int(5), int(3)]).unwrap();
        let q = Measure::from_mass(&s, vec![int(1), int(0), int(1)]).unwrap();
        let v = f_divergence(&p, &q, &Integrand::exp_neg()).unwrap();
        let expected = (-2.0f64).exp() + (-3.0f64).exp();
        assert!((v.as_f64() - expected).abs() < 1e-12);
    }

    #[test]
    fn hockey_stick_examples() {
        let s = space2();
        let p = Measure::from_mass(&s, vec![int(1), int(1)]).unwrap();
        assert_eq!(hockey_stick(&p, &p, &ratio(1, 2)).unwrap(), int(1));
        assert_eq!(hockey_stick(&p, &p, &int(1)).unwrap(), int(0));

        let p2 = Measure::from_mass(&s, vec![int(2), int(0)]).unwrap();
        let q2 = Measure::from_mass(&s, vec![int(0), int(1)]).unwrap();
        assert_eq!(hockey_stick(&p2, &q2, &int(3)).unwrap(), int(2));

        assert!(hockey_stick(&p, &p, &int(0)).is_err());
    }

    #[test]
    fn hockey_stick_agrees_with_f_divergence() {
        let s = space3();
        let p = Measure::from_mass(&s, vec![ratio(1, 2), int(2), int(0)]).unwrap();
        let q = Measure::from_mass(&s, vec![int(1), ratio(1, 3), int(1)]).unwrap();
        for gamma in [ratio(1, 4), int(1), int(3)] {
            let hs = hockey_stick(&p, &q, &gamma).unwrap();
            let fd = f_divergence(&p, &q, &Integrand::hockey_stick_integrand(gamma)).unwrap();
            assert_eq!(fd, ExtendedValue::exact(hs));
        }
    }

    #[test]
    fn adjoint_closed_forms() {
        // (t-1)_+ adjoint is (1-t)_+
        let hs = Integrand::hockey_stick_integrand(int(1));
        let adj = adjoint_integrand(&hs);
        assert_eq!(adj.eval(&ratio(1, 2)), ExtendedValue::exact(ratio(1, 2)));
        assert_eq!(adj.eval(&int(2)), ExtendedValue::exact(int(0)));
        assert_eq!(adj.eval(&int(0)), ExtendedValue::exact(int(1)));
        // double adjoint returns the hockey stick
        let back = adjoint_integrand(&adj);
        assert_eq!(back.eval(&int(3)), ExtendedValue::exact(int(2)));

        // t log t adjoint is -log t with +inf at 0
        let adj_tlt = adjoint_integrand(&Integrand::t_log_t());
        assert_eq!(adj_tlt.eval(&int(0)), ExtendedValue::PosInf);
        let v = adj_tlt.eval(&int(2)).as_f64();
        assert!((v + 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn adjoint_symmetry_on_random_pairs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let s = space3();
        for theta in Integrand::builtins() {
            for _ in 0..40 {
                let rand_measure = |rng: &mut rand_chacha::ChaCha8Rng| {
                    let mass = (0..3)
                        .map(|_| Rational::new(rng.gen_range(0..8).into(), rng.gen_range(1..5).into()))
                        .collect();
                    Measure::from_mass(&s, mass).unwrap()
                };
                let p = rand_measure(&mut rng);
                let q = rand_measure(&mut rng);
                let lhs = f_divergence(&p, &q, &theta).unwrap();
                let rhs = f_divergence(&q, &p, &adjoint_integrand(&theta)).unwrap();
                assert!(
                    lhs.close_to(&rhs, 1e-9),
                    "adjoint symmetry failed for {theta}: {lhs} vs {rhs}"
                );
            }
        }
    }

    #[test]
    fn divergence_scaling() {
        let s = space3();
        let p = Measure::from_mass(&s, vec![int(2), int(1), int(0)]).unwrap();
        let q = Measure::from_mass(&s, vec![int(1), int(3), int(2)]).unwrap();
        let a = ratio(3, 7);
        for theta in [Integrand::square(), Integrand::hockey_stick_integrand(ratio(1, 2))] {
            let base = f_divergence(&p, &q, &theta).unwrap();
            let scaled = f_divergence(&p.scale(&a), &q.scale(&a), &theta).unwrap();
            let expected = base.exact_value().unwrap() * &a;
            assert_eq!(scaled, ExtendedValue::exact(expected));
        }
    }

    #[test]
    fn integrand_convexity_spot_checks() {
        // midpoint inequality and nondecreasing right derivative on a sample grid
        let pts: Vec<Rational> = (1..=12).map(|k| ratio(k, 4)).collect();
        for theta in Integrand::builtins() {
            for w in pts.windows(2) {
                let (a, b) = (&w[0], &w[1]);
                let mid = (a + b) / int(2);
                let lhs = theta.eval(&mid).as_f64();
                let rhs = 0.5 * (theta.eval(a).as_f64() + theta.eval(b).as_f64());
                assert!(lhs <= rhs + 1e-12, "midpoint convexity failed for {theta}");
                let da = theta.right_derivative(a).as_f64();
                let db = theta.right_derivative(b).as_f64();
                assert!(da <= db + 1e-12, "right derivative not monotone for {theta}");
            }
            // recession slope consistency at a large argument
            let big = int(1 << 20);
            let ratio_val = theta.eval(&big).as_f64() / big.to_f64().unwrap();
            match theta.recession_slope() {
                ExtendedValue::PosInf => assert!(ratio_val > 1e3),
                ExtendedValue::Finite(s) => {
                    assert!((ratio_val - s.as_f64()).abs() < 1e-3, "slope drift for {theta}")
                }
            }
        }
    }

    #[test]
    fn dpi_identity_and_merge() {
        let s = space2();
        let p = Measure::from_mass(&s, vec![int(1), int(1)]).unwrap();
        let q = Measure::from_mass(&s, vec![ratio(1, 2), ratio(3, 2)]).unwrap();
        let id = MarkovKernel::identity(&s);
        for theta in Integrand::builtins() {
            assert!(dpi_audit(&p, &q, &id, &theta).unwrap());
        }
        // total merge: all mass to one atom
        let merge = MarkovKernel::new(
            Arc::clone(&s),
            Arc::clone(&s),
            vec![vec![int(1), int(0)], vec![int(1), int(0)]],
        )
        .unwrap();
        assert!(dpi_audit(&p, &p, &merge, &Integrand::square()).unwrap());
    }

    #[test]
    fn malformed_kernel_rejected() {
        let s = space2();
        let bad = MarkovKernel::new(
            Arc::clone(&s),
            Arc::clone(&s),
            vec![vec![ratio(1, 2), ratio(1, 3)], vec![int(1), int(0)]],
        );
        assert!(bad.is_err());
    }
}
