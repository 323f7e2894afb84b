//! Exact bipartite max-flow/min-cut with capacity measures, the parametric
//! fit functional with its breakpoint structure, and the augmenting-subplan
//! construction on the associated four-layer network.

use crate::error::{Error, Result};
use crate::measure::{marginal, Instance, Measure, Plan, Side};
use crate::Rational;
use num_traits::Zero;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

#[derive(Debug, Clone)]
struct Arc_ {
    to: usize,
    cap: Rational,
    rev: usize,
}

/// Exact max-flow on a small directed network (shortest augmenting paths).
struct Network {
    graph: Vec<Vec<Arc_>>,
}

impl Network {
    fn new(nodes: usize) -> Network {
        Network { graph: vec![Vec::new(); nodes] }
    }

    fn add_edge(&mut self, from: usize, to: usize, cap: Rational) -> (usize, usize) {
        debug_assert!(cap >= Rational::zero());
        let a = self.graph[from].len();
        let b = self.graph[to].len();
        self.graph[from].push(Arc_ { to, cap, rev: b });
        self.graph[to].push(Arc_ { to: from, cap: Rational::zero(), rev: a });
        (from, a)
    }

    fn max_flow(&mut self, s: usize, t: usize) -> Rational {
        let mut total = Rational::zero();
        loop {
            // BFS for a shortest augmenting path.
            let mut prev: Vec<Option<(usize, usize)>> = vec![None; self.graph.len()];
            let mut seen = vec![false; self.graph.len()];
            seen[s] = true;
            let mut queue = VecDeque::new();
            queue.push_back(s);
            while let Some(u) = queue.pop_front() {
                if u == t {
                    break;
                }
                for (i, arc) in self.graph[u].iter().enumerate() {
                    if !seen[arc.to] && arc.cap > Rational::zero() {
                        seen[arc.to] = true;
                        prev[arc.to] = Some((u, i));
                        queue.push_back(arc.to);
                    }
                }
            }
            if !seen[t] {
                return total;
            }
            // Bottleneck along the path.
            let mut bottleneck: Option<Rational> = None;
            let mut v = t;
            while v != s {
                let (u, i) = prev[v].unwrap();
                let cap = &self.graph[u][i].cap;
                bottleneck = Some(match bottleneck {
                    None => cap.clone(),
                    Some(b) if cap < &b => cap.clone(),
                    Some(b) => b,
                });
                v = u;
            }
            let aug = bottleneck.unwrap();
            let mut v = t;
            while v != s {
                let (u, i) = prev[v].unwrap();
                let rev = self.graph[u][i].rev;
                self.graph[u][i].cap -= &aug;
                self.graph[v][rev].cap += &aug;
                v = u;
            }
            total += aug;
        }
    }

    /// Nodes reachable from `s` through positive residual capacity.
    fn residual_reachable(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.graph.len()];
        seen[s] = true;
        let mut queue = VecDeque::new();
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for arc in &self.graph[u] {
                if !seen[arc.to] && arc.cap > Rational::zero() {
                    seen[arc.to] = true;
                    queue.push_back(arc.to);
                }
            }
        }
        seen
    }

    /// Flow sent along an arc equals the residual capacity of its reverse.
    fn flow_on(&self, from: usize, idx: usize) -> Rational {
        let arc = &self.graph[from][idx];
        self.graph[arc.to][arc.rev].cap.clone()
    }
}

/// Witness plan, optimal value, and certifying source-side cut for a
/// capacitated shipment problem. Strong duality holds exactly:
/// `value = a(cut) + b(N(cutᶜ))`.
#[derive(Debug, Clone)]
pub struct FlowResult {
    pub plan: Plan,
    pub value: Rational,
    pub cut: BTreeSet<usize>,
}

impl FlowResult {
    /// Exact duality gap check against capacity measures `a`, `b`.
    pub fn certifies(&self, instance: &Instance, side: Side, a: &Measure, b: &Measure) -> bool {
        let mut cut_value = Rational::zero();
        for &x in &self.cut {
            cut_value += a.mass(x);
        }
        let complement = instance
            .space(side)
            .atoms()
            .filter(|x| !self.cut.contains(x));
        for y in instance.neighborhood(side, complement) {
            cut_value += b.mass(y);
        }
        cut_value == self.value
    }
}

/// Maximum total mass of a subplan on the edges with marginals at most `a`
/// on `side` and at most `b` opposite, plus an exact min-cut certificate.
/// The cut is the set of `side` atoms unreachable in the final residual
/// network, which is the minimal minimum cut.
pub fn max_feasible_mass(
    instance: &Arc<Instance>,
    side: Side,
    a: &Measure,
    b: &Measure,
) -> Result<FlowResult> {
    let n_src = instance.space(side).len();
    let n_dst = instance.space(side.opposite()).len();
    if *a.space().as_ref() != *instance.space(side).as_ref()
        || *b.space().as_ref() != *instance.space(side.opposite()).as_ref()
    {
        return Err(Error::SpaceMismatch);
    }

    let source = 0usize;
    let sink = 1usize;
    let src_base = 2usize;
    let dst_base = 2 + n_src;
    let mut net = Network::new(2 + n_src + n_dst);

    // Interior arcs never bind: cap them by the total supply.
    let big = a.total() + Rational::from_integer(1.into());

    for x in 0..n_src {
        if !a.mass(x).is_zero() {
            net.add_edge(source, src_base + x, a.mass(x).clone());
        }
    }
    let mut edge_arcs: Vec<((usize, usize), (usize, usize))> = Vec::new();
    for &(i, j) in instance.edges() {
        let (from, to) = match side {
            Side::Zero => (i, j),
            Side::One => (j, i),
        };
        let handle = net.add_edge(src_base + from, dst_base + to, big.clone());
        edge_arcs.push(((i, j), handle));
    }
    for y in 0..n_dst {
        if !b.mass(y).is_zero() {
            net.add_edge(dst_base + y, sink, b.mass(y).clone());
        }
    }

    let value = net.max_flow(source, sink);

    let mut entries: BTreeMap<(usize, usize), Rational> = BTreeMap::new();
    for (edge, (from, idx)) in &edge_arcs {
        let f = net.flow_on(*from, *idx);
        if !f.is_zero() {
            entries.insert(*edge, f);
        }
    }
    let plan = Plan::new(instance, side, entries)?;

    let reach = net.residual_reachable(source);
    let cut: BTreeSet<usize> = (0..n_src).filter(|&x| !reach[src_base + x]).collect();

    let result = FlowResult { plan, value, cut };
    debug_assert!(result.certifies(instance, side, a, b));
    Ok(result)
}

/// Fit value at level `t`: the largest subplan mass with source marginal at
/// most the base measure and opposite marginal at most `t` times the
/// opposite base measure.
pub fn fit(instance: &Arc<Instance>, source_side: Side, t: &Rational) -> Result<Rational> {
    if *t < Rational::zero() {
        return Err(Error::Precondition("fit level must be nonnegative".into()));
    }
    let a = instance.base_measure(source_side);
    let b = instance.base_measure(source_side.opposite()).scale(t);
    Ok(max_feasible_mass(instance, source_side, &a, &b)?.value)
}

/// One affine piece of the fit curve with its certifying cut.
#[derive(Debug, Clone)]
pub struct FitSegment {
    pub start: Rational,
    /// `None` on the final segment, which extends to infinity.
    pub end: Option<Rational>,
    pub intercept: Rational,
    pub slope: Rational,
    pub cut: BTreeSet<usize>,
}

impl FitSegment {
    pub fn value_at(&self, t: &Rational) -> Rational {
        &self.intercept + &self.slope * t
    }
}

/// Exact concave piecewise-linear representation of the fit functional.
#[derive(Debug, Clone)]
pub struct FitCurve {
    segments: Vec<FitSegment>,
}

impl FitCurve {
    pub fn segments(&self) -> &[FitSegment] {
        &self.segments
    }

    /// Interior breakpoints, in increasing order.
    pub fn breakpoints(&self) -> Vec<Rational> {
        self.segments.iter().skip(1).map(|s| s.start.clone()).collect()
    }

    pub fn value(&self, t: &Rational) -> Rational {
        for seg in &self.segments {
            match &seg.end {
                Some(end) if t > end => continue,
                _ => {
                    if *t >= seg.start {
                        return seg.value_at(t);
                    }
                }
            }
        }
        // t below the first segment start cannot happen (first start is 0)
        self.segments[0].value_at(t)
    }

    /// The eventual constant value of the curve.
    pub fn eventual_value(&self) -> Rational {
        let last = self.segments.last().expect("curve has a segment");
        debug_assert!(last.slope.is_zero());
        last.intercept.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct CutLine {
    intercept: Rational,
    slope: Rational,
    cut: BTreeSet<usize>,
}

impl CutLine {
    fn at(&self, t: &Rational) -> Rational {
        &self.intercept + &self.slope * t
    }

    fn same_line(&self, other: &CutLine) -> bool {
        self.intercept == other.intercept && self.slope == other.slope
    }
}

/// Exact parametric breakpoint computation for the fit functional, by cut
/// divide-and-conquer: probe the crossing of the certifying lines at the two
/// ends and recurse until one line certifies a whole segment.
pub fn fit_breakpoints(instance: &Arc<Instance>, source_side: Side) -> Result<FitCurve> {
    let nu_src = instance.base_measure(source_side);
    let nu_opp = instance.base_measure(source_side.opposite());

    let line_from = |result: &FlowResult| -> CutLine {
        let mut intercept = Rational::zero();
        for &x in &result.cut {
            intercept += nu_src.mass(x);
        }
        let complement = instance
            .space(source_side)
            .atoms()
            .filter(|x| !result.cut.contains(x));
        let mut slope = Rational::zero();
        for y in instance.neighborhood(source_side, complement) {
            slope += nu_opp.mass(y);
        }
        CutLine { intercept, slope, cut: result.cut.clone() }
    };

    let probe = |t: &Rational| -> Result<(Rational, CutLine)> {
        let b = nu_opp.scale(t);
        let r = max_feasible_mass(instance, source_side, &nu_src, &b)?;
        let line = line_from(&r);
        debug_assert_eq!(line.at(t), r.value);
        Ok((r.value, line))
    };

    // Beyond this level the optimal cut line is flat.
    let min_pos = nu_opp
        .iter()
        .filter(|(_, w)| !w.is_zero())
        .map(|(_, w)| w.clone())
        .min();
    let t_max = match min_pos {
        Some(w) => nu_src.total() / w + Rational::from_integer(1.into()),
        None => Rational::from_integer(1.into()),
    };

    let zero = Rational::zero();
    let (_, line_lo) = probe(&zero)?;
    let (_, line_hi) = probe(&t_max)?;

    struct Piece {
        start: Rational,
        end: Rational,
        line: CutLine,
    }

    let mut pieces: Vec<Piece> = Vec::new();
    // Manual stack; each frame covers [lo_t, hi_t] with lines optimal at the ends.
    let mut stack = vec![(zero.clone(), line_lo, t_max.clone(), line_hi)];
    while let Some((lo_t, lo_line, hi_t, hi_line)) = stack.pop() {
        if lo_line.same_line(&hi_line) {
            pieces.push(Piece { start: lo_t, end: hi_t, line: lo_line });
            continue;
        }
        if lo_line.at(&lo_t) == hi_line.at(&lo_t) {
            // hi_line is optimal at both ends, hence on the whole interval
            pieces.push(Piece { start: lo_t, end: hi_t, line: hi_line });
            continue;
        }
        if lo_line.at(&hi_t) == hi_line.at(&hi_t) {
            pieces.push(Piece { start: lo_t, end: hi_t, line: lo_line });
            continue;
        }
        debug_assert!(lo_line.slope > hi_line.slope);
        let cross = (&hi_line.intercept - &lo_line.intercept) / (&lo_line.slope - &hi_line.slope);
        debug_assert!(cross > lo_t && cross < hi_t);
        let (v, mid_line) = probe(&cross)?;
        if v == lo_line.at(&cross) {
            pieces.push(Piece { start: lo_t, end: cross.clone(), line: lo_line });
            pieces.push(Piece { start: cross, end: hi_t, line: hi_line });
        } else {
            debug_assert!(v < lo_line.at(&cross));
            // evaluate both halves; order on the stack keeps pieces sorted
            stack.push((cross.clone(), mid_line.clone(), hi_t, hi_line));
            stack.push((lo_t, lo_line, cross, mid_line));
        }
    }

    pieces.sort_by(|a, b| a.start.cmp(&b.start));
    let mut segments: Vec<FitSegment> = Vec::new();
    for piece in pieces {
        if let Some(last) = segments.last_mut() {
            if last.intercept == piece.line.intercept && last.slope == piece.line.slope {
                last.end = Some(piece.end.clone());
                continue;
            }
            last.end = Some(piece.start.clone());
        }
        segments.push(FitSegment {
            start: piece.start,
            end: Some(piece.end),
            intercept: piece.line.intercept,
            slope: piece.line.slope,
            cut: piece.line.cut,
        });
    }
    let last = segments.last_mut().expect("at least one segment");
    last.end = None;
    debug_assert!(last.slope.is_zero());
    debug_assert!(segments[0].intercept.is_zero());
    debug_assert!(segments.windows(2).all(|w| w[0].slope > w[1].slope));
    Ok(FitCurve { segments })
}

/// Augmenting subplan: given subplans `sigma >= sigma0` in total mass with
/// opposite marginals dominated by `b`, produces `gamma <= sigma` and
/// `gamma0 <= sigma0` whose marginal differences augment `sigma0` toward
/// `sigma` without violating `b`. Exact network construction: source arcs
/// carry the positive part of the source-marginal difference, forward arcs
/// carry `sigma`, backward arcs carry `sigma0`, sink arcs carry the slack
/// `b - psi0`.
pub fn augmenting_subplan(
    sigma: &Plan,
    sigma0: &Plan,
    b: &Measure,
) -> Result<(Plan, Plan)> {
    if !sigma.same_instance(sigma0) || sigma.source_side() != sigma0.source_side() {
        return Err(Error::IncompatiblePlans("subplans must share instance and side".into()));
    }
    let instance = sigma.instance();
    let side = sigma.source_side();
    let opp = side.opposite();
    if *b.space().as_ref() != *instance.space(opp).as_ref() {
        return Err(Error::SpaceMismatch);
    }
    let xi = marginal(sigma, side);
    let xi0 = marginal(sigma0, side);
    let psi = marginal(sigma, opp);
    let psi0 = marginal(sigma0, opp);
    if !psi.le(b) || !psi0.le(b) {
        return Err(Error::Precondition("opposite marginals must be dominated by b".into()));
    }
    let delta = sigma.total_mass() - sigma0.total_mass();
    if delta <= Rational::zero() {
        return Err(Error::Precondition("sigma must carry more mass than sigma0".into()));
    }

    let n_src = instance.space(side).len();
    let n_dst = instance.space(opp).len();
    let source = 0usize;
    let sink = 1usize;
    let src_base = 2usize;
    let dst_base = 2 + n_src;
    let mut net = Network::new(2 + n_src + n_dst);

    for x in 0..n_src {
        let u = xi.mass(x) - xi0.mass(x);
        if u > Rational::zero() {
            net.add_edge(source, src_base + x, u);
        }
    }
    let orient = |e: (usize, usize)| -> (usize, usize) {
        match side {
            Side::Zero => e,
            Side::One => (e.1, e.0),
        }
    };
    let mut fwd: Vec<((usize, usize), (usize, usize))> = Vec::new();
    for (e, m) in sigma.entries() {
        let (x, y) = orient(e);
        fwd.push((e, net.add_edge(src_base + x, dst_base + y, m.clone())));
    }
    let mut bwd: Vec<((usize, usize), (usize, usize))> = Vec::new();
    for (e, m) in sigma0.entries() {
        let (x, y) = orient(e);
        bwd.push((e, net.add_edge(dst_base + y, src_base + x, m.clone())));
    }
    for y in 0..n_dst {
        let slack = b.mass(y) - psi0.mass(y);
        if slack > Rational::zero() {
            net.add_edge(dst_base + y, sink, slack);
        }
    }

    let value = net.max_flow(source, sink);
    if value < delta {
        return Err(Error::Precondition(
            "network flow fell short of the mass gap; preconditions violated".into(),
        ));
    }

    let mut g: BTreeMap<(usize, usize), Rational> = BTreeMap::new();
    for (e, (from, idx)) in &fwd {
        let f = net.flow_on(*from, *idx);
        if !f.is_zero() {
            g.insert(*e, f);
        }
    }
    let mut h: BTreeMap<(usize, usize), Rational> = BTreeMap::new();
    for (e, (from, idx)) in &bwd {
        let f = net.flow_on(*from, *idx);
        if !f.is_zero() {
            h.insert(*e, f);
        }
    }
    Ok((Plan::new(instance, side, g)?, Plan::new(instance, side, h)?))
}
