//! JSON file formats for instances, plans, and equilibria. Rationals cross
//! the wire as "p/q" strings; decimal and integer literals are accepted on
//! input and converted exactly.

use crate::equilibrium::{Allocation, Bundle, Price};
use crate::error::{Error, Result};
use crate::measure::{AtomSpace, Instance, Measure, Plan, Side};
use crate::Rational;
use num_traits::Zero;
use serde::de::Deserializer;
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

/// Exact rational that serializes as a canonical "p/q" string and accepts
/// "p/q", integer, or decimal input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RationalText(pub Rational);

impl Serialize for RationalText {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&crate::format_rational(&self.0))
    }
}

impl<'de> Deserialize<'de> for RationalText {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let value = serde_json::Value::deserialize(deserializer)?;
        let text = match &value {
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Number(n) => n.to_string(),
            other => {
                return Err(serde::de::Error::custom(format!(
                    "expected rational string or number, got {other}"
                )))
            }
        };
        let r = crate::parse_rational(&text).map_err(serde::de::Error::custom)?;
        Ok(RationalText(r))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AtomRecord {
    pub id: String,
    pub weight: RationalText,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpaceRecord {
    pub atoms: Vec<AtomRecord>,
}

/// On-disk instance document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceFile {
    pub side0: SpaceRecord,
    pub side1: SpaceRecord,
    pub edges: Vec<(String, String)>,
}

impl InstanceFile {
    pub fn to_instance(&self) -> Result<Arc<Instance>> {
        let space = |rec: &SpaceRecord| -> Result<Arc<AtomSpace>> {
            AtomSpace::new(rec.atoms.iter().map(|a| (a.id.clone(), a.weight.0.clone())))
        };
        let s0 = space(&self.side0)?;
        let s1 = space(&self.side1)?;
        let refs: Vec<(&str, &str)> =
            self.edges.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        Instance::new(s0, s1, &refs)
    }

    pub fn from_instance(instance: &Instance) -> InstanceFile {
        let record = |side: Side| SpaceRecord {
            atoms: instance
                .space(side)
                .atoms()
                .map(|a| AtomRecord {
                    id: instance.space(side).id(a).to_string(),
                    weight: RationalText(instance.space(side).weight(a).clone()),
                })
                .collect(),
        };
        InstanceFile {
            side0: record(Side::Zero),
            side1: record(Side::One),
            edges: instance
                .edges()
                .iter()
                .map(|&(i, j)| {
                    (
                        instance.space(Side::Zero).id(i).to_string(),
                        instance.space(Side::One).id(j).to_string(),
                    )
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanEntryRecord {
    pub from: String,
    pub to: String,
    pub mass: RationalText,
}

/// On-disk plan document. `from` atoms live on the source side.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanFile {
    pub source_side: usize,
    pub entries: Vec<PlanEntryRecord>,
}

impl PlanFile {
    pub fn to_plan(&self, instance: &Arc<Instance>) -> Result<Plan> {
        let side = Side::from_index(self.source_side)?;
        let list: Vec<(&str, &str, Rational)> = self
            .entries
            .iter()
            .map(|e| (e.from.as_str(), e.to.as_str(), e.mass.0.clone()))
            .collect();
        Plan::from_entries(instance, side, &list)
    }

    pub fn from_plan(plan: &Plan) -> PlanFile {
        let instance = plan.instance();
        let s0 = instance.space(Side::Zero);
        let s1 = instance.space(Side::One);
        let entries = plan
            .entries()
            .map(|((i, j), m)| {
                let (from, to) = match plan.source_side() {
                    Side::Zero => (s0.id(i), s1.id(j)),
                    Side::One => (s1.id(j), s0.id(i)),
                };
                PlanEntryRecord {
                    from: from.to_string(),
                    to: to.to_string(),
                    mass: RationalText(m.clone()),
                }
            })
            .collect();
        PlanFile { source_side: plan.source_side().index(), entries }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentRecord {
    pub side: usize,
    pub id: String,
    pub price: RationalText,
    /// consumption on side 0, atom id -> mass
    pub bundle0: BTreeMap<String, RationalText>,
    /// consumption on side 1, atom id -> mass
    pub bundle1: BTreeMap<String, RationalText>,
}

/// On-disk allocation–price document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquilibriumFile {
    pub agents: Vec<AgentRecord>,
}

impl EquilibriumFile {
    pub fn from_equilibrium(allocation: &Allocation, price: &Price) -> EquilibriumFile {
        let instance = allocation.instance();
        let mut agents = Vec::new();
        for (side, atom) in allocation.agents() {
            let bundle = allocation.bundle(side, atom);
            let map_of = |m: &Measure, side: Side| -> BTreeMap<String, RationalText> {
                m.iter()
                    .filter(|(_, v)| !v.is_zero())
                    .map(|(z, v)| {
                        (instance.space(side).id(z).to_string(), RationalText(v.clone()))
                    })
                    .collect()
            };
            agents.push(AgentRecord {
                side: side.index(),
                id: instance.space(side).id(atom).to_string(),
                price: RationalText(price.value(side, atom).clone()),
                bundle0: map_of(&bundle.on_side0, Side::Zero),
                bundle1: map_of(&bundle.on_side1, Side::One),
            });
        }
        EquilibriumFile { agents }
    }

    pub fn to_equilibrium(&self, instance: &Arc<Instance>) -> Result<(Allocation, Price)> {
        let n0 = instance.space(Side::Zero).len();
        let n1 = instance.space(Side::One).len();
        let mut bundles0 = vec![Bundle::zero(instance); n0];
        let mut bundles1 = vec![Bundle::zero(instance); n1];
        let mut prices0 = vec![Rational::zero(); n0];
        let mut prices1 = vec![Rational::zero(); n1];
        let mut seen0 = vec![false; n0];
        let mut seen1 = vec![false; n1];
        for agent in &self.agents {
            let side = Side::from_index(agent.side)?;
            let atom = instance
                .space(side)
                .lookup(&agent.id)
                .ok_or_else(|| Error::BadAllocation(format!("unknown agent {:?}", agent.id)))?;
            let mut bundle = Bundle::zero(instance);
            for (id, mass) in &agent.bundle0 {
                let z = instance
                    .space(Side::Zero)
                    .lookup(id)
                    .ok_or_else(|| Error::BadAllocation(format!("unknown atom {id:?}")))?;
                bundle.on_side0.set_mass(z, mass.0.clone());
            }
            for (id, mass) in &agent.bundle1 {
                let z = instance
                    .space(Side::One)
                    .lookup(id)
                    .ok_or_else(|| Error::BadAllocation(format!("unknown atom {id:?}")))?;
                bundle.on_side1.set_mass(z, mass.0.clone());
            }
            match side {
                Side::Zero => {
                    bundles0[atom] = bundle;
                    prices0[atom] = agent.price.0.clone();
                    seen0[atom] = true;
                }
                Side::One => {
                    bundles1[atom] = bundle;
                    prices1[atom] = agent.price.0.clone();
                    seen1[atom] = true;
                }
            }
        }
        if !seen0.iter().all(|&s| s) || !seen1.iter().all(|&s| s) {
            return Err(Error::BadAllocation("every atom needs an agent record".into()));
        }
        let allocation = Allocation::new(instance, bundles0, bundles1)?;
        let price = Price::new(instance, prices0, prices1)?;
        Ok((allocation, price))
    }
}
