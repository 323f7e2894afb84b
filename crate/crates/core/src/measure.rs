//! Finite representations of measures, bipartite instances, and refinement
//! plans, with exact Lebesgue decomposition and marginal extraction.
//!
//! Atoms of weight zero are admitted: they are the finite stand-in for
//! null sets that can still carry singular payload. Positive-weight atoms
//! must have at least one incident edge; zero-weight atoms may be isolated.

use crate::error::{Error, Result};
use crate::Rational;
use num_traits::Zero;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

/// One of the two sides of a bipartite instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Zero,
    One,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Zero => Side::One,
            Side::One => Side::Zero,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Side::Zero => 0,
            Side::One => 1,
        }
    }

    pub fn from_index(i: usize) -> Result<Side> {
        match i {
            0 => Ok(Side::Zero),
            1 => Ok(Side::One),
            _ => Err(Error::BadPlan(format!("side must be 0 or 1, got {i}"))),
        }
    }
}

/// Ordered list of labeled atoms with nonnegative rational weights.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AtomSpace {
    ids: Vec<String>,
    weights: Vec<Rational>,
    index: HashMap<String, usize>,
}

impl AtomSpace {
    pub fn new<I, S>(atoms: I) -> Result<Arc<AtomSpace>>
    where
        I: IntoIterator<Item = (S, Rational)>,
        S: Into<String>,
    {
        let mut ids = Vec::new();
        let mut weights = Vec::new();
        let mut index = HashMap::new();
        for (id, w) in atoms {
            let id = id.into();
            if w < Rational::zero() {
                return Err(Error::BadSpace(format!("atom {id:?} has negative weight")));
            }
            if index.insert(id.clone(), ids.len()).is_some() {
                return Err(Error::BadSpace(format!("duplicate atom id {id:?}")));
            }
            ids.push(id);
            weights.push(w);
        }
        if ids.is_empty() {
            return Err(Error::BadSpace("atom space must contain at least one atom".into()));
        }
        Ok(Arc::new(AtomSpace { ids, weights, index }))
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn id(&self, atom: usize) -> &str {
        &self.ids[atom]
    }

    pub fn weight(&self, atom: usize) -> &Rational {
        &self.weights[atom]
    }

    pub fn lookup(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn atoms(&self) -> impl Iterator<Item = usize> + '_ {
        0..self.ids.len()
    }

    /// The weights as a measure on this space.
    pub fn base_measure(self: &Arc<Self>) -> Measure {
        Measure { space: Arc::clone(self), mass: self.weights.clone() }
    }

    pub fn total_weight(&self) -> Rational {
        self.weights.iter().fold(Rational::zero(), |acc, w| acc + w)
    }
}

/// Nonnegative measure on an [`AtomSpace`], stored densely.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Measure {
    space: Arc<AtomSpace>,
    mass: Vec<Rational>,
}

impl Measure {
    pub fn zero(space: &Arc<AtomSpace>) -> Measure {
        Measure { space: Arc::clone(space), mass: vec![Rational::zero(); space.len()] }
    }

    pub fn from_mass(space: &Arc<AtomSpace>, mass: Vec<Rational>) -> Result<Measure> {
        if mass.len() != space.len() {
            return Err(Error::BadSpace("mass vector length does not match space".into()));
        }
        if mass.iter().any(|m| *m < Rational::zero()) {
            return Err(Error::BadSpace("measure has a negative mass".into()));
        }
        Ok(Measure { space: Arc::clone(space), mass })
    }

    pub fn from_pairs<I, S>(space: &Arc<AtomSpace>, pairs: I) -> Result<Measure>
    where
        I: IntoIterator<Item = (S, Rational)>,
        S: AsRef<str>,
    {
        let mut mass = vec![Rational::zero(); space.len()];
        for (id, m) in pairs {
            let atom = space
                .lookup(id.as_ref())
                .ok_or_else(|| Error::BadSpace(format!("unknown atom id {:?}", id.as_ref())))?;
            if m < Rational::zero() {
                return Err(Error::BadSpace("measure has a negative mass".into()));
            }
            mass[atom] += m;
        }
        Ok(Measure { space: Arc::clone(space), mass })
    }

    pub fn space(&self) -> &Arc<AtomSpace> {
        &self.space
    }

    pub fn mass(&self, atom: usize) -> &Rational {
        &self.mass[atom]
    }

    pub fn set_mass(&mut self, atom: usize, value: Rational) {
        debug_assert!(value >= Rational::zero());
        self.mass[atom] = value;
    }

    pub fn add_mass(&mut self, atom: usize, value: &Rational) {
        self.mass[atom] += value;
    }

    pub fn total(&self) -> Rational {
        self.mass.iter().fold(Rational::zero(), |acc, m| acc + m)
    }

    pub fn is_zero(&self) -> bool {
        self.mass.iter().all(|m| m.is_zero())
    }

    pub fn scale(&self, factor: &Rational) -> Measure {
        Measure {
            space: Arc::clone(&self.space),
            mass: self.mass.iter().map(|m| m * factor).collect(),
        }
    }

    pub fn same_space(&self, other: &Measure) -> bool {
        Arc::ptr_eq(&self.space, &other.space) || *self.space == *other.space
    }

    /// Atomwise sum; spaces must agree.
    pub fn add(&self, other: &Measure) -> Result<Measure> {
        if !self.same_space(other) {
            return Err(Error::SpaceMismatch);
        }
        let mass = self.mass.iter().zip(&other.mass).map(|(a, b)| a + b).collect();
        Ok(Measure { space: Arc::clone(&self.space), mass })
    }

    /// Atomwise difference; errors if the result would be negative anywhere.
    pub fn sub(&self, other: &Measure) -> Result<Measure> {
        if !self.same_space(other) {
            return Err(Error::SpaceMismatch);
        }
        let mut mass = Vec::with_capacity(self.mass.len());
        for (a, b) in self.mass.iter().zip(&other.mass) {
            if a < b {
                return Err(Error::BadSpace("measure difference is negative".into()));
            }
            mass.push(a - b);
        }
        Ok(Measure { space: Arc::clone(&self.space), mass })
    }

    pub fn le(&self, other: &Measure) -> bool {
        self.same_space(other) && self.mass.iter().zip(&other.mass).all(|(a, b)| a <= b)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &Rational)> {
        self.mass.iter().enumerate()
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.mass.iter().enumerate().filter(|(_, m)| !m.is_zero()).map(|(i, _)| i)
    }
}

/// Exact Lebesgue decomposition of `mu` with respect to `nu`:
/// `mu = density * nu + singular`, with the singular part carried by
/// the `nu`-null atoms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LebesgueSplit {
    /// Density on atoms with positive `nu`-weight; zero elsewhere.
    pub density: Vec<Rational>,
    pub singular: Measure,
}

impl LebesgueSplit {
    /// The absolutely continuous part `density * nu`.
    pub fn ac_part(&self, nu: &Measure) -> Measure {
        let mass = self
            .density
            .iter()
            .zip(nu.mass.iter())
            .map(|(r, w)| r * w)
            .collect();
        Measure { space: Arc::clone(&nu.space), mass }
    }
}

/// Density/singular split of `mu` with respect to `nu` on shared atoms.
pub fn lebesgue_decompose(mu: &Measure, nu: &Measure) -> Result<LebesgueSplit> {
    if !mu.same_space(nu) {
        return Err(Error::SpaceMismatch);
    }
    let mut density = vec![Rational::zero(); mu.space.len()];
    let mut singular = Measure::zero(&mu.space);
    for atom in mu.space.atoms() {
        if nu.mass[atom].is_zero() {
            singular.set_mass(atom, mu.mass[atom].clone());
        } else {
            density[atom] = &mu.mass[atom] / &nu.mass[atom];
        }
    }
    Ok(LebesgueSplit { density, singular })
}

/// Finite bipartite instance: two weighted atom spaces and an edge relation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    side0: Arc<AtomSpace>,
    side1: Arc<AtomSpace>,
    edges: Vec<(usize, usize)>,
    edge_set: HashSet<(usize, usize)>,
    neighbors0: Vec<Vec<usize>>, // per side-0 atom, its side-1 neighbors
    neighbors1: Vec<Vec<usize>>, // per side-1 atom, its side-0 neighbors
}

impl Instance {
    pub fn new(
        side0: Arc<AtomSpace>,
        side1: Arc<AtomSpace>,
        edge_ids: &[(&str, &str)],
    ) -> Result<Arc<Instance>> {
        let mut edges = Vec::new();
        let mut edge_set = HashSet::new();
        for (a, b) in edge_ids {
            let i = side0
                .lookup(a)
                .ok_or_else(|| Error::BadInstance(format!("edge endpoint {a:?} not on side 0")))?;
            let j = side1
                .lookup(b)
                .ok_or_else(|| Error::BadInstance(format!("edge endpoint {b:?} not on side 1")))?;
            if edge_set.insert((i, j)) {
                edges.push((i, j));
            }
        }
        edges.sort_unstable();
        let mut neighbors0 = vec![Vec::new(); side0.len()];
        let mut neighbors1 = vec![Vec::new(); side1.len()];
        for &(i, j) in &edges {
            neighbors0[i].push(j);
            neighbors1[j].push(i);
        }
        for x in side0.atoms() {
            if !side0.weight(x).is_zero() && neighbors0[x].is_empty() {
                return Err(Error::BadInstance(format!(
                    "positive-weight atom {:?} on side 0 has no incident edge",
                    side0.id(x)
                )));
            }
        }
        for y in side1.atoms() {
            if !side1.weight(y).is_zero() && neighbors1[y].is_empty() {
                return Err(Error::BadInstance(format!(
                    "positive-weight atom {:?} on side 1 has no incident edge",
                    side1.id(y)
                )));
            }
        }
        Ok(Arc::new(Instance { side0, side1, edges, edge_set, neighbors0, neighbors1 }))
    }

    /// Convenience constructor from literal atom/weight/edge lists.
    pub fn from_parts(
        atoms0: &[(&str, Rational)],
        atoms1: &[(&str, Rational)],
        edge_ids: &[(&str, &str)],
    ) -> Result<Arc<Instance>> {
        let side0 = AtomSpace::new(atoms0.iter().map(|(id, w)| (*id, w.clone())))?;
        let side1 = AtomSpace::new(atoms1.iter().map(|(id, w)| (*id, w.clone())))?;
        Instance::new(side0, side1, edge_ids)
    }

    pub fn space(&self, side: Side) -> &Arc<AtomSpace> {
        match side {
            Side::Zero => &self.side0,
            Side::One => &self.side1,
        }
    }

    pub fn base_measure(&self, side: Side) -> Measure {
        self.space(side).base_measure()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn has_edge(&self, e: (usize, usize)) -> bool {
        self.edge_set.contains(&e)
    }

    /// Neighbors of `atom` on the opposite side of `side`.
    pub fn neighbors(&self, side: Side, atom: usize) -> &[usize] {
        match side {
            Side::Zero => &self.neighbors0[atom],
            Side::One => &self.neighbors1[atom],
        }
    }

    /// Opposite-side neighborhood of a set of atoms on `side`.
    pub fn neighborhood(&self, side: Side, atoms: impl IntoIterator<Item = usize>) -> HashSet<usize> {
        let mut out = HashSet::new();
        for a in atoms {
            out.extend(self.neighbors(side, a).iter().copied());
        }
        out
    }
}

/// Nonnegative mass on atom pairs of an instance, oriented by a source side.
///
/// Entries are keyed `(side-0 atom, side-1 atom)` regardless of orientation.
/// Construction checks nonnegativity and endpoint validity but not edge
/// membership, so that support violations remain observable through
/// [`is_refinement`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plan {
    instance: Arc<Instance>,
    source_side: Side,
    entries: BTreeMap<(usize, usize), Rational>,
}

impl Plan {
    pub fn new(
        instance: &Arc<Instance>,
        source_side: Side,
        entries: BTreeMap<(usize, usize), Rational>,
    ) -> Result<Plan> {
        for (&(i, j), m) in &entries {
            if i >= instance.side0.len() || j >= instance.side1.len() {
                return Err(Error::BadPlan(format!("entry ({i},{j}) outside the instance")));
            }
            if *m < Rational::zero() {
                return Err(Error::BadPlan(format!("entry ({i},{j}) has negative mass")));
            }
        }
        let entries = entries.into_iter().filter(|(_, m)| !m.is_zero()).collect();
        Ok(Plan { instance: Arc::clone(instance), source_side, entries })
    }

    /// Entries listed by atom ids, `(source id, target id, mass)`.
    pub fn from_entries(
        instance: &Arc<Instance>,
        source_side: Side,
        list: &[(&str, &str, Rational)],
    ) -> Result<Plan> {
        let mut entries: BTreeMap<(usize, usize), Rational> = BTreeMap::new();
        for (from, to, m) in list {
            let (id0, id1) = match source_side {
                Side::Zero => (*from, *to),
                Side::One => (*to, *from),
            };
            let i = instance
                .side0
                .lookup(id0)
                .ok_or_else(|| Error::BadPlan(format!("unknown side-0 atom {id0:?}")))?;
            let j = instance
                .side1
                .lookup(id1)
                .ok_or_else(|| Error::BadPlan(format!("unknown side-1 atom {id1:?}")))?;
            *entries.entry((i, j)).or_insert_with(Rational::zero) += m.clone();
        }
        Plan::new(instance, source_side, entries)
    }

    pub fn empty(instance: &Arc<Instance>, source_side: Side) -> Plan {
        Plan { instance: Arc::clone(instance), source_side, entries: BTreeMap::new() }
    }

    pub fn instance(&self) -> &Arc<Instance> {
        &self.instance
    }

    pub fn source_side(&self) -> Side {
        self.source_side
    }

    pub fn entries(&self) -> impl Iterator<Item = ((usize, usize), &Rational)> {
        self.entries.iter().map(|(&e, m)| (e, m))
    }

    pub fn entry(&self, e: (usize, usize)) -> Rational {
        self.entries.get(&e).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn total_mass(&self) -> Rational {
        self.entries.values().fold(Rational::zero(), |acc, m| acc + m)
    }

    pub fn is_supported_on_edges(&self) -> bool {
        self.entries.keys().all(|&e| self.instance.has_edge(e))
    }

    /// Atomwise sum of two plans on the same instance and orientation.
    pub fn add(&self, other: &Plan) -> Result<Plan> {
        self.check_compatible(other)?;
        let mut entries = self.entries.clone();
        for (&e, m) in &other.entries {
            *entries.entry(e).or_insert_with(Rational::zero) += m.clone();
        }
        Plan::new(&self.instance, self.source_side, entries)
    }

    /// Entrywise difference; errors if any entry would go negative.
    pub fn sub(&self, other: &Plan) -> Result<Plan> {
        self.check_compatible(other)?;
        let mut entries = self.entries.clone();
        for (&e, m) in &other.entries {
            let slot = entries.entry(e).or_insert_with(Rational::zero);
            if &*slot < m {
                return Err(Error::BadPlan("plan difference is negative".into()));
            }
            *slot -= m.clone();
        }
        Plan::new(&self.instance, self.source_side, entries)
    }

    pub fn le(&self, other: &Plan) -> bool {
        self.entries.iter().all(|(&e, m)| *m <= other.entry(e))
    }

    pub fn same_instance(&self, other: &Plan) -> bool {
        Arc::ptr_eq(&self.instance, &other.instance) || *self.instance == *other.instance
    }

    fn check_compatible(&self, other: &Plan) -> Result<()> {
        if !self.same_instance(other) {
            return Err(Error::IncompatiblePlans("different instances".into()));
        }
        if self.source_side != other.source_side {
            return Err(Error::IncompatiblePlans("different source sides".into()));
        }
        Ok(())
    }
}

/// Sum of entry masses over edges incident to each atom of `side`.
pub fn marginal(plan: &Plan, side: Side) -> Measure {
    let space = plan.instance.space(side);
    let mut out = Measure::zero(space);
    for (&(i, j), m) in &plan.entries {
        let atom = match side {
            Side::Zero => i,
            Side::One => j,
        };
        out.add_mass(atom, m);
    }
    out
}

/// True iff the plan is supported on instance edges and its source-side
/// marginal equals the source base measure exactly.
pub fn is_refinement(plan: &Plan) -> bool {
    plan.is_supported_on_edges()
        && marginal(plan, plan.source_side) == plan.instance.base_measure(plan.source_side)
}

/// The opposite-side marginal of a refinement.
pub fn payload(plan: &Plan) -> Measure {
    marginal(plan, plan.source_side.opposite())
}

/// Truncated absolutely continuous payload `(r ∧ t) ν` at level `t`;
/// the singular part of the payload is dropped.
pub fn truncated_payload(plan: &Plan, t: &Rational) -> Result<Measure> {
    if !is_refinement(plan) {
        return Err(Error::NotARefinement);
    }
    let opposite = plan.source_side.opposite();
    let nu = plan.instance.base_measure(opposite);
    let split = lebesgue_decompose(&payload(plan), &nu)?;
    let mut out = Measure::zero(nu.space());
    for atom in nu.space().atoms() {
        let r = &split.density[atom];
        let capped = if r <= t { r.clone() } else { t.clone() };
        out.set_mass(atom, capped * nu.mass(atom));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{int, ratio};

    pub fn market_2x2() -> Arc<Instance> {
        Instance::from_parts(
            &[("x1", int(1)), ("x2", int(1))],
            &[("y1", int(1)), ("y2", int(1))],
            &[("x1", "y1"), ("x1", "y2"), ("x2", "y1"), ("x2", "y2")],
        )
        .unwrap()
    }

    pub fn chain_i2() -> Arc<Instance> {
        Instance::from_parts(
            &[("x1", int(1)), ("x2", int(1))],
            &[("y1", int(1)), ("y2", int(1))],
            &[("x1", "y1"), ("x2", "y1"), ("x2", "y2")],
        )
        .unwrap()
    }

    #[test]
    fn atom_space_rejects_duplicates_and_negatives() {
        assert!(AtomSpace::new([("a", int(1)), ("a", int(2))]).is_err());
        assert!(AtomSpace::new([("a", int(-1))]).is_err());
        assert!(AtomSpace::new(Vec::<(&str, Rational)>::new()).is_err());
    }

    #[test]
    fn instance_rejects_isolated_positive_atoms() {
        let r = Instance::from_parts(
            &[("x1", int(1))],
            &[("y1", int(1)), ("y2", int(1))],
            &[("x1", "y1")],
        );
        assert!(r.is_err());
        // Isolated zero-weight atoms are fine.
        let ok = Instance::from_parts(
            &[("x1", int(1))],
            &[("y1", int(1)), ("y2", int(0))],
            &[("x1", "y1")],
        );
        assert!(ok.is_ok());
    }

    #[test]
    fn marginal_of_cross_plan_is_uniform() {
        let inst = market_2x2();
        let pi_x = Plan::from_entries(
            &inst,
            Side::Zero,
            &[
                ("x1", "y1", ratio(1, 4)),
                ("x1", "y2", ratio(3, 4)),
                ("x2", "y1", ratio(3, 4)),
                ("x2", "y2", ratio(1, 4)),
            ],
        )
        .unwrap();
        let m = marginal(&pi_x, Side::Zero);
        assert_eq!(*m.mass(0), int(1));
        assert_eq!(*m.mass(1), int(1));
    }

    #[test]
    fn marginal_of_empty_plan_is_zero() {
        let inst = market_2x2();
        let empty = Plan::empty(&inst, Side::Zero);
        assert!(marginal(&empty, Side::One).is_zero());
    }

    #[test]
    fn marginal_hand_sum_on_chain() {
        let inst = chain_i2();
        let plan = Plan::from_entries(
            &inst,
            Side::Zero,
            &[("x1", "y1", int(1)), ("x2", "y2", int(1))],
        )
        .unwrap();
        let m = marginal(&plan, Side::One);
        assert_eq!(*m.mass(0), int(1));
        assert_eq!(*m.mass(1), int(1));
    }

    #[test]
    fn lebesgue_decompose_examples() {
        let space = AtomSpace::new([("a", int(1)), ("b", int(1)), ("c", int(1))]).unwrap();
        let mu = Measure::from_mass(&space, vec![int(2), int(5), int(3)]).unwrap();
        let nu = Measure::from_mass(&space, vec![int(1), int(0), int(1)]).unwrap();
        let split = lebesgue_decompose(&mu, &nu).unwrap();
        assert_eq!(split.density[0], int(2));
        assert_eq!(split.density[2], int(3));
        assert_eq!(*split.singular.mass(1), int(5));
        assert_eq!(*split.singular.mass(0), int(0));
        // Reconstruction is exact.
        let rebuilt = split.ac_part(&nu).add(&split.singular).unwrap();
        assert_eq!(rebuilt, mu);

        let space2 = AtomSpace::new([("a", int(1)), ("b", int(1))]).unwrap();
        let m = Measure::from_mass(&space2, vec![int(1), int(1)]).unwrap();
        let s = lebesgue_decompose(&m, &m).unwrap();
        assert_eq!(s.density, vec![int(1), int(1)]);
        assert!(s.singular.is_zero());

        let mu3 = Measure::from_mass(&space2, vec![int(0), int(4)]).unwrap();
        let nu3 = Measure::from_mass(&space2, vec![int(2), int(0)]).unwrap();
        let s3 = lebesgue_decompose(&mu3, &nu3).unwrap();
        assert_eq!(s3.density[0], int(0));
        assert_eq!(*s3.singular.mass(1), int(4));
    }

    #[test]
    fn lebesgue_decompose_space_mismatch() {
        let s1 = AtomSpace::new([("a", int(1))]).unwrap();
        let s2 = AtomSpace::new([("b", int(1))]).unwrap();
        let mu = Measure::zero(&s1);
        let nu = Measure::zero(&s2);
        assert!(matches!(lebesgue_decompose(&mu, &nu), Err(Error::SpaceMismatch)));
    }

    #[test]
    fn refinement_checks() {
        let inst = market_2x2();
        let identity = Plan::from_entries(
            &inst,
            Side::Zero,
            &[("x1", "y1", int(1)), ("x2", "y2", int(1))],
        )
        .unwrap();
        assert!(is_refinement(&identity));

        let short = Plan::from_entries(&inst, Side::Zero, &[("x1", "y1", int(2))]).unwrap();
        assert!(!is_refinement(&short));

        // Mass on a non-edge is rejected by the refinement check.
        let inst2 = chain_i2();
        let mut entries = BTreeMap::new();
        entries.insert((0, 1), int(1)); // x1-y2 is not an edge of I2
        entries.insert((1, 0), int(1));
        let bad = Plan::new(&inst2, Side::Zero, entries).unwrap();
        assert!(!bad.is_supported_on_edges());
        assert!(!is_refinement(&bad));
    }

    #[test]
    fn truncated_payload_examples() {
        let inst = market_2x2();
        let identity = Plan::from_entries(
            &inst,
            Side::Zero,
            &[("x1", "y1", int(1)), ("x2", "y2", int(1))],
        )
        .unwrap();
        let t = truncated_payload(&identity, &ratio(1, 2)).unwrap();
        assert_eq!(*t.mass(0), ratio(1, 2));
        assert_eq!(*t.mass(1), ratio(1, 2));

        let z = truncated_payload(&identity, &int(0)).unwrap();
        assert!(z.is_zero());

        // All payload singular: sits on a weight-0 atom.
        let inst4 = Instance::from_parts(
            &[("x1", int(1)), ("x2", int(0))],
            &[("y1", int(1)), ("y2", int(0))],
            &[("x1", "y2"), ("x2", "y1")],
        )
        .unwrap();
        let plan = Plan::from_entries(&inst4, Side::Zero, &[("x1", "y2", int(1))]).unwrap();
        assert!(is_refinement(&plan));
        let tp = truncated_payload(&plan, &int(5)).unwrap();
        assert!(tp.is_zero());
    }

    #[test]
    fn mass_conservation() {
        let inst = chain_i2();
        let plan = Plan::from_entries(
            &inst,
            Side::Zero,
            &[("x1", "y1", int(1)), ("x2", "y1", ratio(1, 3)), ("x2", "y2", ratio(2, 3))],
        )
        .unwrap();
        assert_eq!(marginal(&plan, Side::Zero).total(), plan.total_mass());
        assert_eq!(marginal(&plan, Side::One).total(), plan.total_mass());
    }
}
