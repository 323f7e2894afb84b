//! Numeric reproduction of the attainment-failure family on the unit
//! square: the boundary-concentrating densities, their closed-form
//! quadratic objective, and grid discretizations where the strict relation
//! keeps the infimum away from the closed-relation minimum.

use crate::divergence::Integrand;
use crate::error::{Error, Result};
use crate::lp::min_divergence_oracle;
use crate::measure::{Instance, Side};
use crate::Rational;
use num_traits::{ToPrimitive, Zero};
use std::sync::Arc;

/// Closed form of the objective along the family: 1 + (7/6)·ε, exactly.
pub fn closed_form_value(epsilon: &Rational) -> Result<Rational> {
    check_epsilon(epsilon)?;
    Ok(Rational::from_integer(1.into()) + crate::ratio(7, 6) * epsilon)
}

fn check_epsilon(epsilon: &Rational) -> Result<()> {
    if *epsilon <= Rational::zero() || *epsilon >= crate::ratio(1, 2) {
        return Err(Error::EpsilonOutOfRange);
    }
    Ok(())
}

/// The three-branch opposite-marginal density of the family member at
/// `epsilon`: a linear ramp on [0, ε], flat 1 on (ε, 1-ε], and a
/// ramp-plus-logarithm tail on (1-ε, 1).
pub fn boundary_density(epsilon: f64, y: f64) -> f64 {
    debug_assert!((0.0..0.5).contains(&epsilon));
    if y <= epsilon {
        y / epsilon
    } else if y <= 1.0 - epsilon {
        1.0
    } else {
        (1.0 - y) / epsilon + (epsilon / (1.0 - y)).ln()
    }
}

// 8-point Gauss-Legendre nodes and weights on [-1, 1].
const GL8_NODES: [f64; 8] = [
    -0.9602898564975363,
    -0.7966664774136267,
    -0.5255324099163290,
    -0.1834346424956498,
    0.1834346424956498,
    0.5255324099163290,
    0.7966664774136267,
    0.9602898564975363,
];
const GL8_WEIGHTS: [f64; 8] = [
    0.1012285362903763,
    0.2223810344533745,
    0.3137066458778873,
    0.3626837833783620,
    0.3626837833783620,
    0.3137066458778873,
    0.2223810344533745,
    0.1012285362903763,
];

/// Integrates the squared density over the unit interval: the first two
/// branches contribute exactly, and the logarithmic branch is handled by
/// composite Gauss-Legendre panels after the substitution that removes the
/// endpoint singularity. Matches the closed form to 1e-8 from a few
/// hundred quadrature points on.
pub fn epsilon_family_value(epsilon: &Rational, quad_points: usize) -> Result<f64> {
    check_epsilon(epsilon)?;
    let eps = epsilon.to_f64().unwrap();
    // exact branches: ∫_0^ε (y/ε)^2 dy = ε/3 and the unit plateau 1 - 2ε
    let exact_part = epsilon / crate::int(3) + Rational::from_integer(1.into())
        - crate::int(2) * epsilon;

    // third branch, substituted to s = -log u on [0, S]:
    // ∫_0^1 (u - log u)^2 du = ∫_0^∞ (e^{-s} + s)^2 e^{-s} ds
    let integrand = |s: f64| {
        let u = (-s).exp();
        let v = u + s;
        v * v * u
    };
    let span = 45.0;
    let panels = (quad_points / GL8_NODES.len()).max(1);
    let h = span / panels as f64;
    let mut q = 0.0;
    for k in 0..panels {
        let a = k as f64 * h;
        let mid = a + 0.5 * h;
        let half = 0.5 * h;
        for (node, weight) in GL8_NODES.iter().zip(&GL8_WEIGHTS) {
            q += weight * half * integrand(mid + half * node);
        }
    }
    Ok(exact_part.to_f64().unwrap() + eps * q)
}

/// Which grid surrogate of the relation to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridRelation {
    /// Column index at least the row index.
    Closed,
    /// One-cell offset as the strictness surrogate; the top row keeps its
    /// diagonal cell so the instance stays feasible.
    Open,
}

impl GridRelation {
    pub fn parse(name: &str) -> Result<GridRelation> {
        match name {
            "closed" => Ok(GridRelation::Closed),
            "open" => Ok(GridRelation::Open),
            other => Err(Error::Precondition(format!("unknown relation {other:?}"))),
        }
    }
}

/// The n×n grid instance with uniform weights 1/n and the chosen relation.
pub fn grid_instance(n: usize, relation: GridRelation) -> Result<Arc<Instance>> {
    if n < 4 {
        return Err(Error::Precondition("grid size must be at least 4".into()));
    }
    let w = Rational::new(1.into(), (n as i64).into());
    let atoms0: Vec<(String, Rational)> =
        (1..=n).map(|i| (format!("x{i}"), w.clone())).collect();
    let atoms1: Vec<(String, Rational)> =
        (1..=n).map(|j| (format!("y{j}"), w.clone())).collect();
    let mut edges: Vec<(String, String)> = Vec::new();
    for i in 1..=n {
        let lo = match relation {
            GridRelation::Closed => i,
            GridRelation::Open => (i + 1).min(n),
        };
        for j in lo..=n {
            edges.push((format!("x{i}"), format!("y{j}")));
        }
    }
    let s0 = crate::AtomSpace::new(atoms0)?;
    let s1 = crate::AtomSpace::new(atoms1)?;
    let refs: Vec<(&str, &str)> = edges.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    Instance::new(s0, s1, &refs)
}

/// Descent-oracle value of the quadratic one-sided objective on the grid.
pub fn discretized_infimum(n: usize, relation: GridRelation) -> Result<f64> {
    let instance = grid_instance(n, relation)?;
    let (_, value) = min_divergence_oracle(&instance, Side::Zero, &Integrand::square(), 1e-10);
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratio;

    #[test]
    fn closed_form_examples() {
        assert_eq!(closed_form_value(&ratio(3, 10)).unwrap(), ratio(27, 20)); // 1.35
        assert_eq!(closed_form_value(&ratio(1, 10)).unwrap(), ratio(67, 60));
        assert!(closed_form_value(&ratio(1, 2)).is_err());
        assert!(closed_form_value(&ratio(0, 1)).is_err());
    }

    #[test]
    fn quadrature_matches_closed_form() {
        for eps in [ratio(1, 10), ratio(1, 4), ratio(2, 5)] {
            let numeric = epsilon_family_value(&eps, 4096).unwrap();
            let exact = closed_form_value(&eps).unwrap().to_f64().unwrap();
            assert!(
                (numeric - exact).abs() < 1e-8,
                "eps {eps}: {numeric} vs {exact}"
            );
        }
    }

    #[test]
    fn values_decrease_toward_one() {
        let v1 = epsilon_family_value(&ratio(2, 5), 1024).unwrap();
        let v2 = epsilon_family_value(&ratio(1, 5), 1024).unwrap();
        let v3 = epsilon_family_value(&ratio(1, 20), 1024).unwrap();
        assert!(v1 > v2 && v2 > v3 && v3 > 1.0);
    }

    #[test]
    fn density_branches() {
        let eps = 0.25;
        assert!((boundary_density(eps, 0.125) - 0.5).abs() < 1e-12);
        assert!((boundary_density(eps, 0.5) - 1.0).abs() < 1e-12);
        let y = 0.9;
        let expected = (1.0 - y) / eps + (eps / (1.0 - y)).ln();
        assert!((boundary_density(eps, y) - expected).abs() < 1e-12);
    }

    #[test]
    fn grid_instances_are_valid() {
        let closed = grid_instance(8, GridRelation::Closed).unwrap();
        assert_eq!(closed.edges().len(), 8 * 9 / 2);
        let open = grid_instance(8, GridRelation::Open).unwrap();
        // one-cell offset drops a diagonal but keeps the top corner cell
        assert_eq!(open.edges().len(), 7 * 8 / 2 + 1);
        assert!(grid_instance(3, GridRelation::Closed).is_err());
    }

    #[test]
    fn closed_grid_reaches_the_uniform_bound() {
        let v = discretized_infimum(8, GridRelation::Closed).unwrap();
        assert!((v - 1.0).abs() < 1e-6, "closed value {v}");
    }

    #[test]
    fn open_grid_stays_above_one() {
        let v8 = discretized_infimum(8, GridRelation::Open).unwrap();
        assert!(v8 > 1.0 + 1e-4, "open value {v8}");
        let v16 = discretized_infimum(16, GridRelation::Open).unwrap();
        assert!(v16 <= v8 + 1e-9);
        assert!(v16 >= 1.0 - 1e-9);
    }
}
