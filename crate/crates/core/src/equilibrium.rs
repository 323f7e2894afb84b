//! Symmetric density decomposition of a level-optimal maximin pair, the
//! induced allocation–price construction, exact Walras verification,
//! extraction of a refinement pair from a feasible allocation, and the
//! structural audit of traded mass.
//!
//! Agents are the atoms of both sides; each owns the Dirac endowment of
//! itself and values only mass assigned to adjacent atoms on the opposite
//! side. All arithmetic is exact.

use crate::error::{Error, Result};
use crate::maximin::verify_lom;
use crate::measure::{is_refinement, lebesgue_decompose, marginal, Instance, Measure, Plan, Side};
use crate::pairing::FallbackPolicy;
use crate::Rational;
use num_traits::{One, Zero};
use std::collections::BTreeMap;
use std::sync::Arc;

/// Per-side symmetric density decomposition data.
#[derive(Debug, Clone)]
pub struct SddSide {
    /// Part of the base measure meeting absolutely continuous payload.
    pub nu_ac: Measure,
    /// Remainder of the base measure; its carriers trade nothing.
    pub nu_perp: Measure,
    /// Density of the a.c. payload against the base measure, on positive
    /// atoms; zero elsewhere.
    pub rho_ac: Vec<Rational>,
}

/// Symmetric density decomposition of a refinement pair.
#[derive(Debug, Clone)]
pub struct SddResult {
    pub side0: SddSide,
    pub side1: SddSide,
}

impl SddResult {
    pub fn side(&self, side: Side) -> &SddSide {
        match side {
            Side::Zero => &self.side0,
            Side::One => &self.side1,
        }
    }
}

fn sdd_side(instance: &Arc<Instance>, side: Side, opposite_plan: &Plan) -> Result<SddSide> {
    let nu = instance.base_measure(side);
    let p = marginal(opposite_plan, side);
    let split = lebesgue_decompose(&p, &nu)?;
    let p_ac = split.ac_part(&nu);
    let mut nu_ac = Measure::zero(nu.space());
    let mut nu_perp = Measure::zero(nu.space());
    for atom in nu.space().atoms() {
        if p_ac.mass(atom).is_zero() {
            nu_perp.set_mass(atom, nu.mass(atom).clone());
        } else {
            nu_ac.set_mass(atom, nu.mass(atom).clone());
        }
    }
    Ok(SddSide { nu_ac, nu_perp, rho_ac: split.density })
}

/// Splits each side's base measure against the opposite plan's absolutely
/// continuous payload. Both plans must be verified level-optimal maximin;
/// the a.c. data is then canonical, independent of the particular pair.
pub fn symmetric_density_decomposition(pi0: &Plan, pi1: &Plan) -> Result<SddResult> {
    let (pi0, pi1) = orient_pair(pi0, pi1)?;
    let instance = pi0.instance();
    Ok(SddResult {
        side0: sdd_side(instance, Side::Zero, pi1)?,
        side1: sdd_side(instance, Side::One, pi0)?,
    })
}

fn orient_pair<'a>(a: &'a Plan, b: &'a Plan) -> Result<(&'a Plan, &'a Plan)> {
    if !a.same_instance(b) {
        return Err(Error::IncompatiblePlans("different instances".into()));
    }
    match (a.source_side(), b.source_side()) {
        (Side::Zero, Side::One) => Ok((a, b)),
        (Side::One, Side::Zero) => Ok((b, a)),
        _ => Err(Error::IncompatiblePlans("pair must cover both sides".into())),
    }
}

/// A consumption bundle: a finite measure on the disjoint union of the two
/// sides, stored per side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bundle {
    pub on_side0: Measure,
    pub on_side1: Measure,
}

impl Bundle {
    pub fn zero(instance: &Arc<Instance>) -> Bundle {
        Bundle {
            on_side0: Measure::zero(instance.space(Side::Zero)),
            on_side1: Measure::zero(instance.space(Side::One)),
        }
    }

    pub fn component(&self, side: Side) -> &Measure {
        match side {
            Side::Zero => &self.on_side0,
            Side::One => &self.on_side1,
        }
    }
}

/// Bundle per agent; agents are the atoms of both sides.
#[derive(Debug, Clone)]
pub struct Allocation {
    instance: Arc<Instance>,
    bundles0: Vec<Bundle>,
    bundles1: Vec<Bundle>,
}

impl Allocation {
    pub fn new(instance: &Arc<Instance>, bundles0: Vec<Bundle>, bundles1: Vec<Bundle>) -> Result<Allocation> {
        if bundles0.len() != instance.space(Side::Zero).len()
            || bundles1.len() != instance.space(Side::One).len()
        {
            return Err(Error::BadAllocation("one bundle per atom required".into()));
        }
        Ok(Allocation { instance: Arc::clone(instance), bundles0, bundles1 })
    }

    pub fn instance(&self) -> &Arc<Instance> {
        &self.instance
    }

    pub fn bundle(&self, side: Side, atom: usize) -> &Bundle {
        match side {
            Side::Zero => &self.bundles0[atom],
            Side::One => &self.bundles1[atom],
        }
    }

    pub fn bundle_mut(&mut self, side: Side, atom: usize) -> &mut Bundle {
        match side {
            Side::Zero => &mut self.bundles0[atom],
            Side::One => &mut self.bundles1[atom],
        }
    }

    pub fn agents(&self) -> impl Iterator<Item = (Side, usize)> + '_ {
        let n0 = self.bundles0.len();
        let n1 = self.bundles1.len();
        (0..n0).map(|i| (Side::Zero, i)).chain((0..n1).map(|j| (Side::One, j)))
    }
}

/// Bounded nonnegative price per agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Price {
    values0: Vec<Rational>,
    values1: Vec<Rational>,
}

impl Price {
    pub fn new(instance: &Arc<Instance>, values0: Vec<Rational>, values1: Vec<Rational>) -> Result<Price> {
        if values0.len() != instance.space(Side::Zero).len()
            || values1.len() != instance.space(Side::One).len()
        {
            return Err(Error::BadAllocation("one price per atom required".into()));
        }
        if values0.iter().chain(&values1).any(|v| *v < Rational::zero()) {
            return Err(Error::BadAllocation("prices must be nonnegative".into()));
        }
        Ok(Price { values0, values1 })
    }

    pub fn value(&self, side: Side, atom: usize) -> &Rational {
        match side {
            Side::Zero => &self.values0[atom],
            Side::One => &self.values1[atom],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values0.iter().chain(&self.values1).all(|v| v.is_zero())
    }

    /// Inner product with a bundle.
    pub fn cost(&self, bundle: &Bundle) -> Rational {
        let mut acc = Rational::zero();
        for (atom, m) in bundle.on_side0.iter() {
            if !m.is_zero() {
                acc += m * &self.values0[atom];
            }
        }
        for (atom, m) in bundle.on_side1.iter() {
            if !m.is_zero() {
                acc += m * &self.values1[atom];
            }
        }
        acc
    }
}

/// Builds the allocation–price pair induced by a verified level-optimal
/// maximin pair: absolutely continuous carriers trade through the reverse
/// kernels of the opposite plans' a.c. parts at price ρ/(1+ρ); singular
/// carriers retain their endowment at price zero; weight-zero atoms retain
/// themselves at the guard price 2. The output is re-verified before it is
/// returned.
pub fn build_equilibrium(pi0: &Plan, pi1: &Plan) -> Result<(Allocation, Price)> {
    let (pi0, pi1) = orient_pair(pi0, pi1)?;
    let instance = pi0.instance();
    if !is_refinement(pi0) || !is_refinement(pi1) {
        return Err(Error::NotARefinement);
    }
    if !verify_lom(pi0)?.verdict || !verify_lom(pi1)?.verdict {
        return Err(Error::Precondition("both plans must be level-optimal maximin".into()));
    }
    let sdd = symmetric_density_decomposition(pi0, pi1)?;

    let nu0 = instance.base_measure(Side::Zero);
    let nu1 = instance.base_measure(Side::One);
    let ac0 = |x: usize| !sdd.side0.nu_ac.mass(x).is_zero();
    let ac1 = |y: usize| !sdd.side1.nu_ac.mass(y).is_zero();
    let perp0 = |x: usize| !sdd.side0.nu_perp.mass(x).is_zero();
    let perp1 = |y: usize| !sdd.side1.nu_perp.mass(y).is_zero();

    // Null bad neighborhoods, in their finite form: a positive-weight atom in
    // a bad set means the input pair was not level-optimal after all.
    for x in nu0.space().atoms() {
        if perp0(x) {
            for &y in instance.neighbors(Side::Zero, x) {
                if !nu1.mass(y).is_zero() {
                    return Err(Error::Construction(format!(
                        "positive-weight neighbor of a singular carrier: {}",
                        nu1.space().id(y)
                    )));
                }
            }
        }
        if ac0(x) {
            for &y in instance.neighbors(Side::Zero, x) {
                if !nu1.mass(y).is_zero() {
                    if !ac1(y) {
                        return Err(Error::Construction(format!(
                            "a.c. atom {} adjacent to non-trading positive atom {}",
                            nu0.space().id(x),
                            nu1.space().id(y)
                        )));
                    }
                    if &sdd.side0.rho_ac[x] * &sdd.side1.rho_ac[y] < Rational::one() {
                        return Err(Error::Construction(format!(
                            "reciprocal density bound fails on edge {}~{}",
                            nu0.space().id(x),
                            nu1.space().id(y)
                        )));
                    }
                }
            }
        }
    }
    for y in nu1.space().atoms() {
        if perp1(y) {
            for &x in instance.neighbors(Side::One, y) {
                if !nu0.mass(x).is_zero() {
                    return Err(Error::Construction(format!(
                        "positive-weight neighbor of a singular carrier: {}",
                        nu0.space().id(x)
                    )));
                }
            }
        }
    }

    // Reverse kernels of the a.c. plan parts. The a.c. part of pi1 is its
    // restriction to rows from a.c. side-1 carriers; its side-0 marginal
    // must be exactly the a.c. payload.
    let mut k1_rows: Vec<Bundle> = (0..nu0.space().len()).map(|_| Bundle::zero(instance)).collect();
    for (e, m) in pi1.entries() {
        let (x, y) = e;
        if !ac1(y) {
            continue;
        }
        if nu0.mass(x).is_zero() {
            return Err(Error::Construction(
                "a.c. trade lands on a weight-zero atom".into(),
            ));
        }
        let share = m / nu0.mass(x);
        k1_rows[x].on_side1.add_mass(y, &share);
    }
    let mut k0_rows: Vec<Bundle> = (0..nu1.space().len()).map(|_| Bundle::zero(instance)).collect();
    for (e, m) in pi0.entries() {
        let (x, y) = e;
        if !ac0(x) {
            continue;
        }
        if nu1.mass(y).is_zero() {
            return Err(Error::Construction(
                "a.c. trade lands on a weight-zero atom".into(),
            ));
        }
        let share = m / nu1.mass(y);
        k0_rows[y].on_side0.add_mass(x, &share);
    }

    let mut bundles0 = Vec::with_capacity(nu0.space().len());
    let mut prices0 = Vec::with_capacity(nu0.space().len());
    for x in nu0.space().atoms() {
        if ac0(x) {
            bundles0.push(std::mem::replace(&mut k1_rows[x], Bundle::zero(instance)));
            let rho = &sdd.side0.rho_ac[x];
            prices0.push(rho / (Rational::one() + rho));
        } else {
            let mut b = Bundle::zero(instance);
            b.on_side0.set_mass(x, Rational::one());
            bundles0.push(b);
            prices0.push(if perp0(x) { Rational::zero() } else { crate::int(2) });
        }
    }
    let mut bundles1 = Vec::with_capacity(nu1.space().len());
    let mut prices1 = Vec::with_capacity(nu1.space().len());
    for y in nu1.space().atoms() {
        if ac1(y) {
            bundles1.push(std::mem::replace(&mut k0_rows[y], Bundle::zero(instance)));
            let rho = &sdd.side1.rho_ac[y];
            prices1.push(rho / (Rational::one() + rho));
        } else {
            let mut b = Bundle::zero(instance);
            b.on_side1.set_mass(y, Rational::one());
            bundles1.push(b);
            prices1.push(if perp1(y) { Rational::zero() } else { crate::int(2) });
        }
    }

    let allocation = Allocation::new(instance, bundles0, bundles1)?;
    let price = Price::new(instance, prices0, prices1)?;
    let report = verify_walras(&allocation, &price, instance)?;
    if !report.passed() {
        return Err(Error::Construction(format!(
            "constructed pair failed verification: {report:?}"
        )));
    }
    Ok((allocation, price))
}

/// Exact Walras verification report.
#[derive(Debug, Clone)]
pub struct WalrasReport {
    pub feasible: bool,
    pub budget_violations: Vec<(Side, usize)>,
    pub optimality_violations: Vec<(Side, usize)>,
    pub price_nonzero: bool,
}

impl WalrasReport {
    pub fn passed(&self) -> bool {
        self.feasible
            && self.budget_violations.is_empty()
            && self.optimality_violations.is_empty()
            && self.price_nonzero
    }
}

/// Checks, exactly: feasibility (the weighted bundle sum reproduces both
/// base measures atomwise), per-agent budgets, per-agent optimality (the
/// maximal affordable utility is price(agent)/min neighbor price, with
/// zero-price agents facing all-positive neighbor prices capped at zero,
/// and the bundle attains it), and nonzero price. Budget and optimality
/// are required of every positive-weight agent.
pub fn verify_walras(
    allocation: &Allocation,
    price: &Price,
    instance: &Arc<Instance>,
) -> Result<WalrasReport> {
    if *allocation.instance().as_ref() != *instance.as_ref() {
        return Err(Error::BadAllocation("allocation built on a different instance".into()));
    }
    let nu0 = instance.base_measure(Side::Zero);
    let nu1 = instance.base_measure(Side::One);

    // Feasibility: sum of weighted bundles equals the endowment measure.
    let mut sum0 = Measure::zero(instance.space(Side::Zero));
    let mut sum1 = Measure::zero(instance.space(Side::One));
    for (side, atom) in allocation.agents() {
        let w = match side {
            Side::Zero => nu0.mass(atom),
            Side::One => nu1.mass(atom),
        };
        if w.is_zero() {
            continue;
        }
        let b = allocation.bundle(side, atom);
        for (z, m) in b.on_side0.iter() {
            if !m.is_zero() {
                sum0.add_mass(z, &(m * w));
            }
        }
        for (z, m) in b.on_side1.iter() {
            if !m.is_zero() {
                sum1.add_mass(z, &(m * w));
            }
        }
    }
    let feasible = sum0 == nu0 && sum1 == nu1;

    let mut budget_violations = Vec::new();
    let mut optimality_violations = Vec::new();
    for (side, atom) in allocation.agents() {
        let w = match side {
            Side::Zero => nu0.mass(atom),
            Side::One => nu1.mass(atom),
        };
        if w.is_zero() {
            continue;
        }
        let own_price = price.value(side, atom);
        let bundle = allocation.bundle(side, atom);
        let cost = price.cost(bundle);
        if cost > *own_price {
            budget_violations.push((side, atom));
        }
        // Utility: opposite-side bundle mass on the agent's neighborhood.
        let nbrs = instance.neighbors(side, atom);
        let opp = side.opposite();
        let utility: Rational = nbrs
            .iter()
            .map(|&z| bundle.component(opp).mass(z).clone())
            .fold(Rational::zero(), |a, b| a + b);
        let max_utility = if nbrs.is_empty() {
            Some(Rational::zero())
        } else {
            let min_price = nbrs.iter().map(|&z| price.value(opp, z)).min().unwrap();
            if min_price.is_zero() {
                // unbounded demand for a free desirable good
                None
            } else {
                Some(own_price / min_price)
            }
        };
        match max_utility {
            Some(u) if utility == u => {}
            _ => optimality_violations.push((side, atom)),
        }
    }

    Ok(WalrasReport {
        feasible,
        budget_violations,
        optimality_violations,
        price_nonzero: !price.is_zero(),
    })
}

/// Extracts a refinement pair from a feasible allocation: for each side,
/// keep the graph-compatible part of the traded mass, then route each
/// atom's deficit through the fallback kernel over its neighbors.
pub fn extract_pair(
    allocation: &Allocation,
    instance: &Arc<Instance>,
    fallback: FallbackPolicy,
) -> Result<(Plan, Plan)> {
    if *allocation.instance().as_ref() != *instance.as_ref() {
        return Err(Error::BadAllocation("allocation built on a different instance".into()));
    }
    let nu0 = instance.base_measure(Side::Zero);
    let nu1 = instance.base_measure(Side::One);

    // Side-1 refinement from side-0 agents' side-1 consumption.
    let mut entries1: BTreeMap<(usize, usize), Rational> = BTreeMap::new();
    for x in instance.space(Side::Zero).atoms() {
        let w = nu0.mass(x);
        if w.is_zero() {
            continue;
        }
        let b = allocation.bundle(Side::Zero, x);
        for &y in instance.neighbors(Side::Zero, x) {
            let m = b.on_side1.mass(y);
            if !m.is_zero() {
                *entries1.entry((x, y)).or_insert_with(Rational::zero) += m * w;
            }
        }
    }
    let tilde1 = Plan::new(instance, Side::One, entries1.clone())?;
    let got1 = marginal(&tilde1, Side::One);
    if !got1.le(&nu1) {
        return Err(Error::BadAllocation("graph-compatible consumption exceeds side-1 base".into()));
    }
    for y in instance.space(Side::One).atoms() {
        let deficit = nu1.mass(y) - got1.mass(y);
        if deficit.is_zero() {
            continue;
        }
        let nbrs = instance.neighbors(Side::One, y);
        if nbrs.is_empty() {
            return Err(Error::BadAllocation(format!(
                "deficit at {} with no neighbors",
                instance.space(Side::One).id(y)
            )));
        }
        match fallback {
            FallbackPolicy::LowestIndex => {
                *entries1.entry((nbrs[0], y)).or_insert_with(Rational::zero) += deficit;
            }
            FallbackPolicy::Uniform => {
                let share = deficit / crate::int(nbrs.len() as i64);
                for &x in nbrs {
                    *entries1.entry((x, y)).or_insert_with(Rational::zero) += share.clone();
                }
            }
        }
    }
    let pi1 = Plan::new(instance, Side::One, entries1)?;

    // Side-0 refinement from side-1 agents' side-0 consumption.
    let mut entries0: BTreeMap<(usize, usize), Rational> = BTreeMap::new();
    for y in instance.space(Side::One).atoms() {
        let w = nu1.mass(y);
        if w.is_zero() {
            continue;
        }
        let b = allocation.bundle(Side::One, y);
        for &x in instance.neighbors(Side::One, y) {
            let m = b.on_side0.mass(x);
            if !m.is_zero() {
                *entries0.entry((x, y)).or_insert_with(Rational::zero) += m * w;
            }
        }
    }
    let tilde0 = Plan::new(instance, Side::Zero, entries0.clone())?;
    let got0 = marginal(&tilde0, Side::Zero);
    if !got0.le(&nu0) {
        return Err(Error::BadAllocation("graph-compatible consumption exceeds side-0 base".into()));
    }
    for x in instance.space(Side::Zero).atoms() {
        let deficit = nu0.mass(x) - got0.mass(x);
        if deficit.is_zero() {
            continue;
        }
        let nbrs = instance.neighbors(Side::Zero, x);
        if nbrs.is_empty() {
            return Err(Error::BadAllocation(format!(
                "deficit at {} with no neighbors",
                instance.space(Side::Zero).id(x)
            )));
        }
        match fallback {
            FallbackPolicy::LowestIndex => {
                *entries0.entry((x, nbrs[0])).or_insert_with(Rational::zero) += deficit;
            }
            FallbackPolicy::Uniform => {
                let share = deficit / crate::int(nbrs.len() as i64);
                for &y in nbrs {
                    *entries0.entry((x, y)).or_insert_with(Rational::zero) += share.clone();
                }
            }
        }
    }
    let pi0 = Plan::new(instance, Side::Zero, entries0)?;

    debug_assert!(is_refinement(&pi0) && is_refinement(&pi1));
    Ok((pi0, pi1))
}

/// Structural audit of an equilibrium: positive-price neighborhoods and the
/// reciprocal bound, singularity of the fallback mass, and the exact
/// reciprocal identity on traded edges. Input should already pass
/// [`verify_walras`].
#[derive(Debug, Clone)]
pub struct StructureReport {
    /// Positive-weight atoms adjacent to a zero-price atom.
    pub zero_price_violations: Vec<(Side, usize)>,
    /// Edges between positive-price traders where ρ0·ρ1 < 1.
    pub reciprocal_bound_failures: Vec<(usize, usize)>,
    /// Whether all fallback mass projects onto weight-zero atoms.
    pub fallback_singular: bool,
    /// Traded edges where ρ0·ρ1 ≠ 1 exactly.
    pub reciprocal_identity_failures: Vec<(usize, usize)>,
}

impl StructureReport {
    pub fn passed(&self) -> bool {
        self.zero_price_violations.is_empty()
            && self.reciprocal_bound_failures.is_empty()
            && self.fallback_singular
            && self.reciprocal_identity_failures.is_empty()
    }
}

pub fn structure_audit(allocation: &Allocation, price: &Price) -> Result<StructureReport> {
    let instance = allocation.instance();
    let nu0 = instance.base_measure(Side::Zero);
    let nu1 = instance.base_measure(Side::One);

    // Allocation-derived densities: traded neighborhood mass per agent.
    let rho0: Vec<Rational> = instance
        .space(Side::Zero)
        .atoms()
        .map(|x| {
            instance
                .neighbors(Side::Zero, x)
                .iter()
                .map(|&y| allocation.bundle(Side::Zero, x).on_side1.mass(y).clone())
                .fold(Rational::zero(), |a, b| a + b)
        })
        .collect();
    let rho1: Vec<Rational> = instance
        .space(Side::One)
        .atoms()
        .map(|y| {
            instance
                .neighbors(Side::One, y)
                .iter()
                .map(|&x| allocation.bundle(Side::One, y).on_side0.mass(x).clone())
                .fold(Rational::zero(), |a, b| a + b)
        })
        .collect();

    let mut zero_price_violations = Vec::new();
    for x in instance.space(Side::Zero).atoms() {
        if price.value(Side::Zero, x).is_zero() {
            for &y in instance.neighbors(Side::Zero, x) {
                if !nu1.mass(y).is_zero() {
                    zero_price_violations.push((Side::One, y));
                }
            }
        }
    }
    for y in instance.space(Side::One).atoms() {
        if price.value(Side::One, y).is_zero() {
            for &x in instance.neighbors(Side::One, y) {
                if !nu0.mass(x).is_zero() {
                    zero_price_violations.push((Side::Zero, x));
                }
            }
        }
    }

    let mut reciprocal_bound_failures = Vec::new();
    for &(x, y) in instance.edges() {
        let traders = !nu0.mass(x).is_zero()
            && !nu1.mass(y).is_zero()
            && !price.value(Side::Zero, x).is_zero()
            && !price.value(Side::One, y).is_zero();
        if traders && &rho0[x] * &rho1[y] < Rational::one() {
            reciprocal_bound_failures.push((x, y));
        }
    }

    // Traded parts and fallback marginals.
    let mut fallback_singular = true;
    let mut reciprocal_identity_failures = Vec::new();
    // side-1 traded part: side-0 agents' graph-compatible consumption
    let mut tilde1_marginal = Measure::zero(instance.space(Side::One));
    for x in instance.space(Side::Zero).atoms() {
        let w = nu0.mass(x);
        if w.is_zero() {
            continue;
        }
        for &y in instance.neighbors(Side::Zero, x) {
            let m = allocation.bundle(Side::Zero, x).on_side1.mass(y);
            if m.is_zero() {
                continue;
            }
            tilde1_marginal.add_mass(y, &(m * w));
            if &rho0[x] * &rho1[y] != Rational::one() {
                reciprocal_identity_failures.push((x, y));
            }
        }
    }
    // deficits must sit where every neighbor has weight zero
    for y in instance.space(Side::One).atoms() {
        let deficit = nu1.mass(y) - tilde1_marginal.mass(y);
        if deficit > Rational::zero() {
            let all_null = instance
                .neighbors(Side::One, y)
                .iter()
                .all(|&x| nu0.mass(x).is_zero());
            if !all_null {
                fallback_singular = false;
            }
        }
    }
    let mut tilde0_marginal = Measure::zero(instance.space(Side::Zero));
    for y in instance.space(Side::One).atoms() {
        let w = nu1.mass(y);
        if w.is_zero() {
            continue;
        }
        for &x in instance.neighbors(Side::One, y) {
            let m = allocation.bundle(Side::One, y).on_side0.mass(x);
            if m.is_zero() {
                continue;
            }
            tilde0_marginal.add_mass(x, &(m * w));
            if &rho0[x] * &rho1[y] != Rational::one() {
                reciprocal_identity_failures.push((x, y));
            }
        }
    }
    for x in instance.space(Side::Zero).atoms() {
        let deficit = nu0.mass(x) - tilde0_marginal.mass(x);
        if deficit > Rational::zero() {
            let all_null = instance
                .neighbors(Side::Zero, x)
                .iter()
                .all(|&y| nu1.mass(y).is_zero());
            if !all_null {
                fallback_singular = false;
            }
        }
    }
    reciprocal_identity_failures.sort_unstable();
    reciprocal_identity_failures.dedup();

    Ok(StructureReport {
        zero_price_violations,
        reciprocal_bound_failures,
        fallback_singular,
        reciprocal_identity_failures,
    })
}
