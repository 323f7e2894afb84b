//! Independent brute-force oracles for the rest of the crate: an exact
//! rational simplex restatement of the fit LP, a floating-point descent
//! oracle for convex one-sided objectives, seeded feasible-plan and instance
//! generators, and extreme-point enumeration. Nothing here shares code with
//! the solvers it checks.

use crate::divergence::Integrand;
use crate::error::{Error, Result};
use crate::measure::{Instance, Plan, Side};
use crate::Rational;
use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

/// Maximize `c·x` subject to `Ax <= b`, `x >= 0`, `b >= 0`, by the primal
/// simplex method with Bland's rule in exact rationals.
fn simplex_max(a: &[Vec<Rational>], b: &[Rational], c: &[Rational]) -> Result<Rational> {
    let m = a.len();
    let n = c.len();
    debug_assert!(b.iter().all(|v| !v.is_negative()));
    // tableau: m rows of n structural + m slack columns + rhs
    let width = n + m + 1;
    let mut tab: Vec<Vec<Rational>> = Vec::with_capacity(m);
    for i in 0..m {
        let mut row = vec![Rational::zero(); width];
        row[..n].clone_from_slice(&a[i]);
        row[n + i] = Rational::one();
        row[width - 1] = b[i].clone();
        tab.push(row);
    }
    let mut obj = vec![Rational::zero(); width];
    obj[..n].clone_from_slice(c);
    let mut obj_value = Rational::zero();
    let mut basis: Vec<usize> = (n..n + m).collect();

    loop {
        // Bland: entering column is the lowest index with positive profit.
        let Some(enter) = (0..n + m).find(|&j| obj[j].is_positive()) else {
            return Ok(obj_value);
        };
        // Ratio test; ties broken by lowest basis variable index.
        let mut leave: Option<(usize, Rational)> = None;
        for i in 0..m {
            if tab[i][enter].is_positive() {
                let ratio = &tab[i][width - 1] / &tab[i][enter];
                let better = match &leave {
                    None => true,
                    Some((li, lr)) => ratio < *lr || (ratio == *lr && basis[i] < basis[*li]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((pivot_row, _)) = leave else {
            return Err(Error::Precondition("simplex objective is unbounded".into()));
        };
        // Pivot.
        let pivot = tab[pivot_row][enter].clone();
        for v in tab[pivot_row].iter_mut() {
            *v /= &pivot;
        }
        for i in 0..m {
            if i != pivot_row && !tab[i][enter].is_zero() {
                let factor = tab[i][enter].clone();
                for j in 0..width {
                    let delta = &factor * &tab[pivot_row][j];
                    tab[i][j] -= delta;
                }
            }
        }
        if !obj[enter].is_zero() {
            let factor = obj[enter].clone();
            for j in 0..width {
                let delta = &factor * &tab[pivot_row][j];
                obj[j] -= delta;
            }
            obj_value += &factor * &tab[pivot_row][width - 1];
        }
        basis[pivot_row] = enter;
    }
}

const LP_EDGE_CAP: usize = 64;

/// Fit value restated as a linear program over edge masses: maximize total
/// mass subject to source marginals at most the base measure and opposite
/// marginals at most `t` times the opposite base measure.
pub fn lp_fit(instance: &Arc<Instance>, source_side: Side, t: &Rational) -> Result<Rational> {
    if *t < Rational::zero() {
        return Err(Error::Precondition("fit level must be nonnegative".into()));
    }
    let edges = instance.edges();
    if edges.len() > LP_EDGE_CAP {
        return Err(Error::Precondition(format!("lp_fit capped at {LP_EDGE_CAP} edges")));
    }
    let n = edges.len();
    let src = instance.space(source_side);
    let opp = instance.space(source_side.opposite());
    let mut a: Vec<Vec<Rational>> = Vec::new();
    let mut b: Vec<Rational> = Vec::new();
    for x in src.atoms() {
        let mut row = vec![Rational::zero(); n];
        for (k, &(i, j)) in edges.iter().enumerate() {
            let endpoint = match source_side {
                Side::Zero => i,
                Side::One => j,
            };
            if endpoint == x {
                row[k] = Rational::one();
            }
        }
        a.push(row);
        b.push(src.weight(x).clone());
    }
    for y in opp.atoms() {
        let mut row = vec![Rational::zero(); n];
        for (k, &(i, j)) in edges.iter().enumerate() {
            let endpoint = match source_side {
                Side::Zero => j,
                Side::One => i,
            };
            if endpoint == y {
                row[k] = Rational::one();
            }
        }
        a.push(row);
        b.push(opp.weight(y).clone() * t);
    }
    let c = vec![Rational::one(); n];
    simplex_max(&a, &b, &c)
}

/// Projection of `v` onto the simplex of total `target`, Euclidean metric.
fn project_simplex(v: &[f64], target: f64) -> Vec<f64> {
    let n = v.len();
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        acc += u;
        let candidate = (acc - target) / (k as f64 + 1.0);
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    (0..n).map(|i| (v[i] - theta).max(0.0)).collect()
}

/// Projected-gradient descent over the refinement polytope from the
/// barycentric plan, with backtracking line search and step halving. It
/// never certifies optimality: the returned value is within `tol·(1+|v|)`
/// of the best point visited, nothing more.
pub fn min_divergence_oracle(
    instance: &Arc<Instance>,
    source_side: Side,
    theta: &Integrand,
    tol: f64,
) -> (Plan, f64) {
    let src = instance.space(source_side);
    let opp = instance.space(source_side.opposite());
    let rows: Vec<(usize, f64, Vec<usize>)> = src
        .atoms()
        .filter(|&x| !src.weight(x).is_zero())
        .map(|x| {
            let nbrs = instance.neighbors(source_side, x).to_vec();
            (x, src.weight(x).to_f64().unwrap(), nbrs)
        })
        .collect();
    let opp_w: Vec<f64> = opp.atoms().map(|y| opp.weight(y).to_f64().unwrap()).collect();
    let slope_inf = theta.recession_slope().as_f64().min(1e12);

    let payload = |w: &[Vec<f64>]| -> Vec<f64> {
        let mut q = vec![0.0; opp.len()];
        for ((_, _, nbrs), row) in rows.iter().zip(w) {
            for (k, &y) in nbrs.iter().enumerate() {
                q[y] += row[k];
            }
        }
        q
    };
    let objective = |w: &[Vec<f64>]| -> f64 {
        let q = payload(w);
        let mut f = 0.0;
        for y in 0..opp.len() {
            if opp_w[y] > 0.0 {
                f += opp_w[y] * theta.eval_f64(q[y] / opp_w[y]);
            } else {
                f += slope_inf * q[y];
            }
        }
        f
    };

    // barycentric start
    let mut w: Vec<Vec<f64>> = rows
        .iter()
        .map(|(_, mass, nbrs)| vec![mass / nbrs.len() as f64; nbrs.len()])
        .collect();
    let mut value = objective(&w);
    let mut step = 1.0;
    let mut small_decreases = 0;
    for _ in 0..50_000 {
        let q = payload(&w);
        let grad_at = |y: usize| -> f64 {
            if opp_w[y] > 0.0 {
                theta.right_derivative_f64(q[y] / opp_w[y]).clamp(-1e12, 1e12)
            } else {
                slope_inf
            }
        };
        let mut improved = false;
        while step > 1e-15 {
            let cand: Vec<Vec<f64>> = rows
                .iter()
                .zip(&w)
                .map(|((_, mass, nbrs), row)| {
                    let moved: Vec<f64> = nbrs
                        .iter()
                        .zip(row)
                        .map(|(&y, &v)| v - step * grad_at(y))
                        .collect();
                    project_simplex(&moved, *mass)
                })
                .collect();
            let cand_value = objective(&cand);
            if cand_value < value {
                let decrease = value - cand_value;
                w = cand;
                value = cand_value;
                improved = true;
                if decrease < tol {
                    small_decreases += 1;
                } else {
                    small_decreases = 0;
                }
                step *= 1.3;
                break;
            }
            step *= 0.5;
        }
        if !improved || small_decreases > 8 {
            break;
        }
    }

    // Exact feasible plan: convert and rescale each row to its exact mass.
    let mut entries: BTreeMap<(usize, usize), Rational> = BTreeMap::new();
    for ((x, _, nbrs), row) in rows.iter().zip(&w) {
        let sum: f64 = row.iter().sum();
        let mass = src.weight(*x).clone();
        let mut exact_row: Vec<Rational> = row
            .iter()
            .map(|&v| Rational::from_float((v / sum).max(0.0)).unwrap_or_else(Rational::zero))
            .collect();
        let total: Rational = exact_row.iter().fold(Rational::zero(), |a, b| a + b);
        if total.is_zero() {
            exact_row[0] = Rational::one();
        }
        let total: Rational = exact_row.iter().fold(Rational::zero(), |a, b| a + b);
        for (k, &y) in nbrs.iter().enumerate() {
            let v = &exact_row[k] * &mass / &total;
            if !v.is_zero() {
                let key = match source_side {
                    Side::Zero => (*x, y),
                    Side::One => (y, *x),
                };
                *entries.entry(key).or_insert_with(Rational::zero) += v;
            }
        }
    }
    let plan = Plan::new(instance, source_side, entries).expect("oracle plan");
    (plan, value)
}

/// Best rational approximation with bounded denominator (continued
/// fractions), used to snap descent output onto small rationals.
fn approx_rational(x: &Rational, max_denom: u64) -> Rational {
    if x.denom() <= &BigInt::from(max_denom) {
        return x.clone();
    }
    let mut a = x.clone();
    let mut h_prev = BigInt::one();
    let mut h = a.to_integer();
    let mut k_prev = BigInt::zero();
    let mut k = BigInt::one();
    let mut frac = &a - Rational::from_integer(h.clone());
    while !frac.is_zero() {
        a = frac.recip();
        let q = a.to_integer();
        let h_next = &q * &h + &h_prev;
        let k_next = &q * &k + &k_prev;
        if k_next > BigInt::from(max_denom) {
            break;
        }
        h_prev = std::mem::replace(&mut h, h_next);
        k_prev = std::mem::replace(&mut k, k_next);
        frac = &a - Rational::from_integer(q);
    }
    Rational::new(h, k)
}

/// Snaps plan entries to denominators at most `max_denom` and repairs each
/// source row so the marginal is exact again.
pub fn rationalize_plan(plan: &Plan, max_denom: u64) -> Plan {
    let instance = plan.instance();
    let side = plan.source_side();
    let src = instance.space(side);
    let mut entries: BTreeMap<(usize, usize), Rational> = BTreeMap::new();
    for x in src.atoms() {
        let mass = src.weight(x).clone();
        if mass.is_zero() {
            continue;
        }
        let nbrs = instance.neighbors(side, x);
        let key_of = |y: usize| match side {
            Side::Zero => (x, y),
            Side::One => (y, x),
        };
        let mut snapped: Vec<Rational> = nbrs
            .iter()
            .map(|&y| approx_rational(&plan.entry(key_of(y)), max_denom))
            .map(|v| if v.is_negative() { Rational::zero() } else { v })
            .collect();
        let total: Rational = snapped.iter().fold(Rational::zero(), |a, b| a + b);
        if total.is_zero() {
            snapped[0] = mass.clone();
        } else if total != mass {
            let scale = &mass / &total;
            for v in snapped.iter_mut() {
                *v *= &scale;
            }
        }
        for (k, &y) in nbrs.iter().enumerate() {
            if !snapped[k].is_zero() {
                *entries.entry(key_of(y)).or_insert_with(Rational::zero) += snapped[k].clone();
            }
        }
    }
    Plan::new(instance, side, entries).expect("rationalized plan")
}

/// Seeded random refinement: each source atom splits its mass over its
/// neighbors by a random rational convex combination. Deterministic in the
/// seed.
pub fn random_feasible_plan(instance: &Arc<Instance>, source_side: Side, seed: u64) -> Plan {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let src = instance.space(source_side);
    let mut entries: BTreeMap<(usize, usize), Rational> = BTreeMap::new();
    for x in src.atoms() {
        let mass = src.weight(x);
        if mass.is_zero() {
            continue;
        }
        let nbrs = instance.neighbors(source_side, x);
        let mut parts: Vec<i64> = (0..nbrs.len()).map(|_| rng.gen_range(0..=16)).collect();
        if parts.iter().all(|&p| p == 0) {
            parts[rng.gen_range(0..parts.len())] = 1;
        }
        let total: i64 = parts.iter().sum();
        for (k, &y) in nbrs.iter().enumerate() {
            if parts[k] == 0 {
                continue;
            }
            let share = mass * crate::ratio(parts[k], total);
            let key = match source_side {
                Side::Zero => (x, y),
                Side::One => (y, x),
            };
            *entries.entry(key).or_insert_with(Rational::zero) += share;
        }
    }
    Plan::new(instance, source_side, entries).expect("random plan")
}

const ENUM_EDGE_CAP: usize = 12;

/// All vertices of the refinement polytope. With one marginal pinned the
/// polytope is a product of simplices, so the vertices are exactly the
/// plans sending each positive source atom to a single neighbor.
pub fn enumerate_extreme_plans(instance: &Arc<Instance>, source_side: Side) -> Result<Vec<Plan>> {
    if instance.edges().len() > ENUM_EDGE_CAP {
        return Err(Error::Precondition(format!(
            "extreme-plan enumeration capped at {ENUM_EDGE_CAP} edges"
        )));
    }
    let src = instance.space(source_side);
    let active: Vec<usize> = src.atoms().filter(|&x| !src.weight(x).is_zero()).collect();
    let mut plans: Vec<BTreeMap<(usize, usize), Rational>> = vec![BTreeMap::new()];
    for &x in &active {
        let nbrs = instance.neighbors(source_side, x);
        let mut next = Vec::with_capacity(plans.len() * nbrs.len());
        for partial in &plans {
            for &y in nbrs {
                let mut p = partial.clone();
                let key = match source_side {
                    Side::Zero => (x, y),
                    Side::One => (y, x),
                };
                p.insert(key, src.weight(x).clone());
                next.push(p);
            }
        }
        plans = next;
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for entries in plans {
        if seen.insert(entries.clone()) {
            out.push(Plan::new(instance, source_side, entries)?);
        }
    }
    Ok(out)
}

/// Options for the seeded instance generator used by the audit suites.
#[derive(Debug, Clone)]
pub struct InstanceGenOptions {
    pub max_atoms_per_side: usize,
    pub max_edges: usize,
    pub max_denominator: i64,
    pub zero_weight_share: f64,
}

impl Default for InstanceGenOptions {
    fn default() -> Self {
        InstanceGenOptions {
            max_atoms_per_side: 6,
            max_edges: 20,
            max_denominator: 16,
            zero_weight_share: 0.2,
        }
    }
}

/// Seeded random instance with rational weights of bounded denominator.
/// Every positive-weight atom receives at least one edge; zero-weight atoms
/// may or may not be isolated.
pub fn random_instance(seed: u64, opts: &InstanceGenOptions) -> Arc<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n0 = rng.gen_range(1..=opts.max_atoms_per_side);
    let n1 = rng.gen_range(1..=opts.max_atoms_per_side);
    let mut weights = |n: usize| -> Vec<Rational> {
        let mut w: Vec<Rational> = (0..n)
            .map(|_| {
                if rng.gen_bool(opts.zero_weight_share) {
                    Rational::zero()
                } else {
                    let den = rng.gen_range(1..=opts.max_denominator);
                    let num = rng.gen_range(1..=2 * den);
                    crate::ratio(num, den)
                }
            })
            .collect();
        if w.iter().all(|x| x.is_zero()) {
            let den = rng.gen_range(1..=opts.max_denominator);
            w[0] = crate::ratio(rng.gen_range(1..=2 * den), den);
        }
        w
    };
    let w0 = weights(n0);
    let w1 = weights(n1);

    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    for (i, w) in w0.iter().enumerate() {
        if !w.is_zero() {
            edges.insert((i, rng.gen_range(0..n1)));
        }
    }
    for (j, w) in w1.iter().enumerate() {
        if !w.is_zero() && !edges.iter().any(|&(_, jj)| jj == j) {
            edges.insert((rng.gen_range(0..n0), j));
        }
    }
    let extra = rng.gen_range(0..=opts.max_edges.saturating_sub(edges.len()));
    for _ in 0..extra {
        edges.insert((rng.gen_range(0..n0), rng.gen_range(0..n1)));
    }

    let atoms0: Vec<(String, Rational)> =
        w0.into_iter().enumerate().map(|(i, w)| (format!("x{}", i + 1), w)).collect();
    let atoms1: Vec<(String, Rational)> =
        w1.into_iter().enumerate().map(|(j, w)| (format!("y{}", j + 1), w)).collect();
    let edge_ids: Vec<(String, String)> = edges
        .into_iter()
        .map(|(i, j)| (format!("x{}", i + 1), format!("y{}", j + 1)))
        .collect();
    let space0 = crate::AtomSpace::new(atoms0).expect("generated space");
    let space1 = crate::AtomSpace::new(atoms1).expect("generated space");
    let refs: Vec<(&str, &str)> =
        edge_ids.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    Instance::new(space0, space1, &refs).expect("generated instance")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::is_refinement;
    use crate::{int, ratio};

    fn market_2x2() -> Arc<Instance> {
        Instance::from_parts(
            &[("x1", int(1)), ("x2", int(1))],
            &[("y1", int(1)), ("y2", int(1))],
            &[("x1", "y1"), ("x1", "y2"), ("x2", "y1"), ("x2", "y2")],
        )
        .unwrap()
    }

    fn chain_i2() -> Arc<Instance> {
        Instance::from_parts(
            &[("x1", int(1)), ("x2", int(1))],
            &[("y1", int(1)), ("y2", int(1))],
            &[("x1", "y1"), ("x2", "y1"), ("x2", "y2")],
        )
        .unwrap()
    }

    #[test]
    fn lp_fit_examples() {
        let market = market_2x2();
        assert_eq!(lp_fit(&market, Side::Zero, &ratio(1, 2)).unwrap(), int(1));
        assert_eq!(lp_fit(&market, Side::Zero, &int(0)).unwrap(), int(0));
        let i2 = chain_i2();
        assert_eq!(lp_fit(&i2, Side::Zero, &ratio(3, 2)).unwrap(), int(2));
    }

    #[test]
    fn lp_fit_matches_flow_on_seeded_instances() {
        for seed in 0..25 {
            let inst = random_instance(seed, &InstanceGenOptions::default());
            for k in 0..3 {
                let t = ratio(k * 2 + 1, 3);
                let by_lp = lp_fit(&inst, Side::Zero, &t).unwrap();
                let by_flow = crate::flow::fit(&inst, Side::Zero, &t).unwrap();
                assert_eq!(by_lp, by_flow, "seed {seed} level {t}");
            }
        }
    }

    #[test]
    fn oracle_finds_market_optimum() {
        let market = market_2x2();
        let (plan, value) = min_divergence_oracle(&market, Side::Zero, &Integrand::exp_neg(), 1e-10);
        assert!(is_refinement(&plan));
        let expected = 2.0 * (-1.0f64).exp();
        assert!((value - expected).abs() < 1e-6, "value {value} vs {expected}");
    }

    #[test]
    fn oracle_on_forced_instance() {
        // unique feasible plan: value is the exact objective
        let inst = Instance::from_parts(
            &[("x1", int(1)), ("x2", int(0))],
            &[("y1", int(1)), ("y2", int(0))],
            &[("x1", "y2"), ("x2", "y1")],
        )
        .unwrap();
        let (plan, value) = min_divergence_oracle(&inst, Side::Zero, &Integrand::exp_neg(), 1e-10);
        assert!(is_refinement(&plan));
        assert_eq!(plan.entry((0, 1)), int(1));
        // payload (0,1): nu(y1)*theta(0) + slope_inf * 1 = 1 + 0
        assert!((value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn random_plans_are_deterministic_refinements() {
        let inst = chain_i2();
        let a = random_feasible_plan(&inst, Side::Zero, 7);
        let b = random_feasible_plan(&inst, Side::Zero, 7);
        assert_eq!(a, b);
        for seed in 0..200 {
            let p = random_feasible_plan(&inst, Side::Zero, seed);
            assert!(is_refinement(&p));
        }
    }

    #[test]
    fn extreme_plans_on_worked_instances() {
        let market = market_2x2();
        let ext = enumerate_extreme_plans(&market, Side::Zero).unwrap();
        assert_eq!(ext.len(), 4);
        let identity =
            Plan::from_entries(&market, Side::Zero, &[("x1", "y1", int(1)), ("x2", "y2", int(1))])
                .unwrap();
        let anti =
            Plan::from_entries(&market, Side::Zero, &[("x1", "y2", int(1)), ("x2", "y1", int(1))])
                .unwrap();
        assert!(ext.contains(&identity));
        assert!(ext.contains(&anti));

        let i2 = chain_i2();
        assert_eq!(enumerate_extreme_plans(&i2, Side::Zero).unwrap().len(), 2);

        let single = Instance::from_parts(&[("x", int(1))], &[("y", int(1))], &[("x", "y")])
            .unwrap();
        assert_eq!(enumerate_extreme_plans(&single, Side::Zero).unwrap().len(), 1);
    }

    #[test]
    fn generated_instances_are_valid() {
        for seed in 0..100 {
            let inst = random_instance(seed, &InstanceGenOptions::default());
            // constructor enforces the neighborhood invariant; spot-check sides
            assert!(inst.space(Side::Zero).total_weight() > Rational::zero());
            assert!(inst.space(Side::One).total_weight() > Rational::zero());
            assert!(inst.edges().len() <= 20);
        }
    }

    #[test]
    fn rationalize_preserves_refinement() {
        let inst = market_2x2();
        let (plan, _) = min_divergence_oracle(&inst, Side::Zero, &Integrand::exp_neg(), 1e-10);
        let snapped = rationalize_plan(&plan, 1 << 12);
        assert!(is_refinement(&snapped));
    }
}
