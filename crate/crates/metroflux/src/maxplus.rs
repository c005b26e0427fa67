//! Max-plus (tropical) scalars, polynomial matrices in the backshift operator,
//! event graphs, maximum cycle means and generalized eigenpairs.
//!
//! The scalar semiring is (R ∪ {-inf}, max, +). A polynomial matrix entry
//! `gamma^l ⊗ w` on (row i, col j) encodes the constraint
//! `x_i(k) >= w + x_j(k - l)`; equivalently an arc j -> i with weight w and
//! duration l in the associated event graph. The generalized eigenvalue of an
//! irreducible polynomial matrix equals the maximum cycle mean of that graph,
//! where a cycle's mean is (sum of weights) / (sum of durations).

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use thiserror::Error;

/// Absolute tolerance for rate comparisons inside the spectral solvers.
const TOL: f64 = 1e-10;

/// Max-plus scalar. `Eps` is the additive zero (-inf), absorbing for ⊗.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Mp {
    Eps,
    Fin(f64),
}

impl Mp {
    pub const ONE: Mp = Mp::Fin(0.0);

    pub fn oplus(self, other: Mp) -> Mp {
        match (self, other) {
            (Mp::Eps, b) => b,
            (a, Mp::Eps) => a,
            (Mp::Fin(a), Mp::Fin(b)) => Mp::Fin(a.max(b)),
        }
    }

    pub fn otimes(self, other: Mp) -> Mp {
        match (self, other) {
            (Mp::Fin(a), Mp::Fin(b)) => Mp::Fin(a + b),
            _ => Mp::Eps,
        }
    }

    pub fn is_eps(self) -> bool {
        matches!(self, Mp::Eps)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Mp::Eps => None,
            Mp::Fin(v) => Some(v),
        }
    }
}

impl fmt::Display for Mp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mp::Eps => write!(f, "eps"),
            Mp::Fin(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum MaxPlusError {
    #[error("matrix dimensions do not match: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("event graph has no cycle; asymptotic rate undefined")]
    NoCycle,
    #[error("zero-duration cycle through nodes {0:?}; the system is fully implicit")]
    ZeroDurationCycle(Vec<usize>),
    #[error("negative arc duration {dur} on arc {from} -> {to}")]
    NegativeDuration { from: usize, to: usize, dur: i64 },
    #[error("eigenvector residual {0} exceeds tolerance; matrix is numerically degenerate")]
    EigenResidual(f64),
}

/// Square matrix over max-plus polynomials in the backshift operator.
/// Entry (i, j) holds coefficients by duration; absent durations are eps.
/// Setting a duplicate (i, j, duration) keeps the max of the weights,
/// consistent with ⊕ of parallel constraints.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyMatrix {
    dim: usize,
    entries: BTreeMap<(usize, usize), BTreeMap<i64, f64>>,
}

impl PolyMatrix {
    pub fn new(dim: usize) -> Self {
        PolyMatrix { dim, entries: BTreeMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn set(&mut self, row: usize, col: usize, dur: i64, weight: f64) {
        assert!(row < self.dim && col < self.dim, "index out of range");
        let coeffs = self.entries.entry((row, col)).or_default();
        coeffs
            .entry(dur)
            .and_modify(|w| *w = w.max(weight))
            .or_insert(weight);
    }

    pub fn coeffs(&self, row: usize, col: usize) -> Option<&BTreeMap<i64, f64>> {
        self.entries.get(&(row, col))
    }

    /// Iterate all monomials as (row, col, duration, weight).
    pub fn monomials(&self) -> impl Iterator<Item = (usize, usize, i64, f64)> + '_ {
        self.entries
            .iter()
            .flat_map(|(&(i, j), cs)| cs.iter().map(move |(&d, &w)| (i, j, d, w)))
    }

    pub fn min_duration(&self) -> Option<i64> {
        self.monomials().map(|(_, _, d, _)| d).min()
    }

    pub fn oplus(&self, other: &PolyMatrix) -> Result<PolyMatrix, MaxPlusError> {
        if self.dim != other.dim {
            return Err(MaxPlusError::DimensionMismatch(self.dim, other.dim));
        }
        let mut out = self.clone();
        for (i, j, d, w) in other.monomials() {
            out.set(i, j, d, w);
        }
        Ok(out)
    }

    /// Polynomial matrix product: (A ⊗ B)_{ij} = ⊕_k A_{ik} ⊗ B_{kj},
    /// with monomial products gamma^{d1+d2} ⊗ (w1 + w2).
    pub fn otimes(&self, other: &PolyMatrix) -> Result<PolyMatrix, MaxPlusError> {
        if self.dim != other.dim {
            return Err(MaxPlusError::DimensionMismatch(self.dim, other.dim));
        }
        let mut out = PolyMatrix::new(self.dim);
        // Group B's entries by row for the inner join on k.
        let mut by_row: Vec<Vec<(usize, &BTreeMap<i64, f64>)>> = vec![Vec::new(); self.dim];
        for (&(k, j), cs) in &other.entries {
            by_row[k].push((j, cs));
        }
        for (&(i, k), ca) in &self.entries {
            for &(j, cb) in &by_row[k] {
                for (&d1, &w1) in ca {
                    for (&d2, &w2) in cb {
                        out.set(i, j, d1 + d2, w1 + w2);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Evaluate at rate `mu`: each monomial gamma^d ⊗ w becomes w - d * mu,
    /// combined by max. This is the matrix whose eigen-equation at value 0
    /// characterizes the generalized eigenpair.
    pub fn eval(&self, mu: f64) -> MpMatrix {
        let mut m = MpMatrix::eps(self.dim);
        for (i, j, d, w) in self.monomials() {
            let v = w - d as f64 * mu;
            m.set(i, j, m.get(i, j).oplus(Mp::Fin(v)));
        }
        m
    }
}

/// Dense max-plus matrix (no backshift).
#[derive(Clone, Debug, PartialEq)]
pub struct MpMatrix {
    dim: usize,
    data: Vec<Mp>,
}

impl MpMatrix {
    pub fn eps(dim: usize) -> Self {
        MpMatrix { dim, data: vec![Mp::Eps; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::eps(dim);
        for i in 0..dim {
            m.set(i, i, Mp::ONE);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> Mp {
        self.data[i * self.dim + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Mp) {
        self.data[i * self.dim + j] = v;
    }

    pub fn otimes_vec(&self, v: &[Mp]) -> Vec<Mp> {
        assert_eq!(v.len(), self.dim);
        (0..self.dim)
            .map(|i| {
                let mut acc = Mp::Eps;
                for j in 0..self.dim {
                    acc = acc.oplus(self.get(i, j).otimes(v[j]));
                }
                acc
            })
            .collect()
    }

    pub fn otimes(&self, other: &MpMatrix) -> MpMatrix {
        assert_eq!(self.dim, other.dim);
        let mut out = MpMatrix::eps(self.dim);
        for i in 0..self.dim {
            for k in 0..self.dim {
                let a = self.get(i, k);
                if a.is_eps() {
                    continue;
                }
                for j in 0..self.dim {
                    out.set(i, j, out.get(i, j).oplus(a.otimes(other.get(k, j))));
                }
            }
        }
        out
    }
}

/// One arc of an event graph: `from -> to`, carrying a weight (time) and a
/// duration (backshift degree, i.e. how many event counts the dependency spans).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Arc {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
    pub dur: i64,
}

/// Event graph over nodes 0..n. Parallel arcs are allowed.
#[derive(Clone, Debug)]
pub struct EventGraph {
    pub n: usize,
    pub arcs: Vec<Arc>,
}

impl EventGraph {
    pub fn new(n: usize) -> Self {
        EventGraph { n, arcs: Vec::new() }
    }

    pub fn add(&mut self, from: usize, to: usize, weight: f64, dur: i64) {
        assert!(from < self.n && to < self.n);
        self.arcs.push(Arc { from, to, weight, dur });
    }

    /// Graph of a polynomial matrix: monomial (row i, col j, d, w) is an arc
    /// j -> i with weight w and duration d.
    pub fn from_poly(pm: &PolyMatrix) -> Self {
        let mut g = EventGraph::new(pm.dim());
        for (i, j, d, w) in pm.monomials() {
            g.add(j, i, w, d);
        }
        g
    }

    /// Strongly connected components as lists of node ids (arbitrary order).
    pub fn sccs(&self) -> Vec<Vec<usize>> {
        let mut pg = DiGraph::<(), ()>::new();
        let idx: Vec<_> = (0..self.n).map(|_| pg.add_node(())).collect();
        for a in &self.arcs {
            pg.add_edge(idx[a.from], idx[a.to], ());
        }
        tarjan_scc(&pg)
            .into_iter()
            .map(|comp| comp.into_iter().map(|ni| ni.index()).collect())
            .collect()
    }
}

/// Result of a maximum-cycle-mean computation: the rate and an elementary
/// witness cycle given as indices into the input graph's arc list.
#[derive(Clone, Debug)]
pub struct CycleMean {
    pub mu: f64,
    pub cycle: Vec<usize>,
}

struct ZeroClosure {
    /// Longest zero-duration path lengths and parent arcs from each needed source.
    from: HashMap<usize, (Vec<f64>, Vec<Option<usize>>)>,
    order: Vec<usize>,
}

/// Longest-path data over the zero-duration subgraph, which must be acyclic.
fn zero_closure(g: &EventGraph) -> Result<ZeroClosure, MaxPlusError> {
    let zero_arcs: Vec<usize> = (0..g.arcs.len()).filter(|&i| g.arcs[i].dur == 0).collect();
    // Kahn topological sort over the zero subgraph.
    let mut indeg = vec![0usize; g.n];
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); g.n];
    for &ai in &zero_arcs {
        let a = &g.arcs[ai];
        indeg[a.to] += 1;
        out[a.from].push(ai);
    }
    let mut queue: Vec<usize> = (0..g.n).filter(|&v| indeg[v] == 0).collect();
    let mut order = Vec::with_capacity(g.n);
    while let Some(v) = queue.pop() {
        order.push(v);
        for &ai in &out[v] {
            let t = g.arcs[ai].to;
            indeg[t] -= 1;
            if indeg[t] == 0 {
                queue.push(t);
            }
        }
    }
    if order.len() < g.n {
        let stuck: Vec<usize> = (0..g.n).filter(|&v| indeg[v] > 0).collect();
        return Err(MaxPlusError::ZeroDurationCycle(stuck));
    }
    Ok(ZeroClosure { from: HashMap::new(), order })
}

impl ZeroClosure {
    /// Compute (or reuse) longest zero-paths from `src` over the zero subgraph.
    fn paths_from(&mut self, g: &EventGraph, src: usize) -> &(Vec<f64>, Vec<Option<usize>>) {
        if !self.from.contains_key(&src) {
            let mut dist = vec![f64::NEG_INFINITY; g.n];
            let mut parent = vec![None; g.n];
            dist[src] = 0.0;
            for &v in &self.order {
                if dist[v] == f64::NEG_INFINITY {
                    continue;
                }
                for (ai, a) in g.arcs.iter().enumerate() {
                    if a.dur == 0 && a.from == v {
                        let cand = dist[v] + a.weight;
                        if cand > dist[a.to] {
                            dist[a.to] = cand;
                            parent[a.to] = Some(ai);
                        }
                    }
                }
            }
            self.from.insert(src, (dist, parent));
        }
        &self.from[&src]
    }
}

/// Nodes involved in a zero-duration cycle, if one exists.
pub fn zero_duration_cycle_nodes(g: &EventGraph) -> Option<Vec<usize>> {
    match zero_closure(g) {
        Err(MaxPlusError::ZeroDurationCycle(nodes)) => Some(nodes),
        _ => None,
    }
}

#[derive(Clone, Copy)]
struct CompressedArc {
    from: usize,
    to: usize,
    weight: f64,
    dur: i64,
    /// Index of the positive-duration arc this compression starts with.
    orig: usize,
}

/// Maximum cycle mean (weights over durations) of an event graph.
///
/// Zero-duration arcs are folded into their downstream positive-duration arcs
/// (their subgraph must be acyclic, otherwise the system is implicit), then
/// durations are expanded to unit steps and each strongly connected component
/// is solved by policy iteration. The witness is an elementary cycle of
/// original arcs whose weight/duration ratio equals `mu`.
pub fn max_cycle_mean(g: &EventGraph) -> Result<CycleMean, MaxPlusError> {
    for a in &g.arcs {
        if a.dur < 0 {
            return Err(MaxPlusError::NegativeDuration { from: a.from, to: a.to, dur: a.dur });
        }
    }
    let mut zc = zero_closure(g)?;

    // Compress: positive arc u->v followed by any zero-path v ~> z.
    let mut carcs: Vec<CompressedArc> = Vec::new();
    for (ai, a) in g.arcs.iter().enumerate() {
        if a.dur == 0 {
            continue;
        }
        let (dist, _) = zc.paths_from(g, a.to).clone();
        for z in 0..g.n {
            if dist[z] > f64::NEG_INFINITY {
                carcs.push(CompressedArc {
                    from: a.from,
                    to: z,
                    weight: a.weight + dist[z],
                    dur: a.dur,
                    orig: ai,
                });
            }
        }
    }
    if carcs.is_empty() {
        return Err(MaxPlusError::NoCycle);
    }

    // Expand durations to unit arcs through fresh chain nodes.
    let mut hn = g.n;
    struct HArc {
        from: usize,
        to: usize,
        weight: f64,
        carc: Option<usize>,
    }
    let mut harcs: Vec<HArc> = Vec::new();
    for (ci, c) in carcs.iter().enumerate() {
        if c.dur == 1 {
            harcs.push(HArc { from: c.from, to: c.to, weight: c.weight, carc: Some(ci) });
        } else {
            let mut prev = c.from;
            for step in 0..c.dur {
                let nxt = if step == c.dur - 1 {
                    c.to
                } else {
                    hn += 1;
                    hn - 1
                };
                harcs.push(HArc {
                    from: prev,
                    to: nxt,
                    weight: if step == 0 { c.weight } else { 0.0 },
                    carc: if step == 0 { Some(ci) } else { None },
                });
                prev = nxt;
            }
        }
    }

    // SCCs of the expanded graph.
    let mut pg = DiGraph::<(), ()>::new();
    let idx: Vec<_> = (0..hn).map(|_| pg.add_node(())).collect();
    for a in &harcs {
        pg.add_edge(idx[a.from], idx[a.to], ());
    }
    let comps = tarjan_scc(&pg);

    let mut best: Option<(f64, Vec<usize>)> = None; // (mu, expanded arc cycle)
    for comp in comps {
        let nodes: Vec<usize> = comp.iter().map(|ni| ni.index()).collect();
        let mut local = HashMap::new();
        for (li, &v) in nodes.iter().enumerate() {
            local.insert(v, li);
        }
        let internal: Vec<usize> = (0..harcs.len())
            .filter(|&ai| {
                local.contains_key(&harcs[ai].from) && local.contains_key(&harcs[ai].to)
            })
            .collect();
        if internal.is_empty() {
            continue;
        }
        // A single node without a self-loop cannot carry a cycle.
        if nodes.len() == 1 && internal.iter().all(|&ai| harcs[ai].from != harcs[ai].to) {
            continue;
        }
        let arcs_local: Vec<(usize, usize, f64, usize)> = internal
            .iter()
            .map(|&ai| (local[&harcs[ai].from], local[&harcs[ai].to], harcs[ai].weight, ai))
            .collect();
        let (mu, cyc) = howard_unit(nodes.len(), &arcs_local);
        match &best {
            Some((b, _)) if *b >= mu => {}
            _ => best = Some((mu, cyc)),
        }
    }
    let (mu, hcycle) = best.ok_or(MaxPlusError::NoCycle)?;

    // Expanded cycle -> compressed arcs: continuation segments carry no tag.
    let start = hcycle
        .iter()
        .position(|&ai| harcs[ai].carc.is_some())
        .expect("cycle cannot consist of continuation segments only");
    let mut carc_cycle: Vec<usize> = Vec::new();
    for k in 0..hcycle.len() {
        let ai = hcycle[(start + k) % hcycle.len()];
        if let Some(ci) = harcs[ai].carc {
            carc_cycle.push(ci);
        }
    }

    // Compressed arcs -> original arcs (positive arc then its zero-path).
    let mut walk: Vec<usize> = Vec::new();
    for &ci in &carc_cycle {
        let c = &carcs[ci];
        walk.push(c.orig);
        let v = g.arcs[c.orig].to;
        let (_, parent) = zc.paths_from(g, v).clone();
        let mut chain = Vec::new();
        let mut cur = c.to;
        while cur != v {
            let pa = parent[cur].expect("zero-path parent chain broken");
            chain.push(pa);
            cur = g.arcs[pa].from;
        }
        chain.reverse();
        walk.extend(chain);
    }

    let cycle = extract_elementary(g, walk);
    Ok(CycleMean { mu, cycle })
}

/// Policy iteration for the maximum mean weight cycle of a strongly connected
/// unit-duration graph given as (from, to, weight, tag) arcs on local ids.
/// Returns the mean and a cycle as tags.
fn howard_unit(n: usize, arcs: &[(usize, usize, f64, usize)]) -> (f64, Vec<usize>) {
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (ai, &(f, _, _, _)) in arcs.iter().enumerate() {
        out[f].push(ai);
    }
    // Every node of a strongly connected component with arcs has an out-arc.
    let mut policy: Vec<usize> = out
        .iter()
        .map(|outs| *outs.first().expect("node without out-arc in SCC"))
        .collect();

    let mut rate = vec![0.0f64; n];
    let mut bias = vec![0.0f64; n];
    let mut best_cycle: Vec<usize> = Vec::new();

    let max_rounds = 20 * (n + arcs.len()) + 100;
    for _round in 0..max_rounds {
        // Evaluate the current policy (a functional graph).
        let mut state = vec![0u8; n]; // 0 unseen, 1 on stack, 2 resolved
        let mut best_mu = f64::NEG_INFINITY;
        best_cycle.clear();
        for s in 0..n {
            if state[s] == 2 {
                continue;
            }
            let mut path = Vec::new();
            let mut v = s;
            while state[v] == 0 {
                state[v] = 1;
                path.push(v);
                v = arcs[policy[v]].1;
            }
            if state[v] == 1 {
                // Found a new policy cycle starting at v.
                let pos = path.iter().position(|&x| x == v).unwrap();
                let cyc: Vec<usize> = path[pos..].to_vec();
                let wsum: f64 = cyc.iter().map(|&x| arcs[policy[x]].2).sum();
                let mu = wsum / cyc.len() as f64;
                // Biases around the cycle, fixing the entry node to 0.
                bias[v] = 0.0;
                rate[v] = mu;
                for i in (0..cyc.len()).rev() {
                    let x = cyc[i];
                    let y = arcs[policy[x]].1;
                    if x != v {
                        rate[x] = mu;
                        bias[x] = arcs[policy[x]].2 - mu + bias[y];
                    }
                    state[x] = 2;
                }
                if mu > best_mu {
                    best_mu = mu;
                    best_cycle = cyc.iter().map(|&x| arcs[policy[x]].3).collect();
                }
                // Tree part of the path feeds into the cycle.
                for i in (0..pos).rev() {
                    let x = path[i];
                    let y = arcs[policy[x]].1;
                    rate[x] = rate[y];
                    bias[x] = arcs[policy[x]].2 - rate[y] + bias[y];
                    state[x] = 2;
                }
            } else {
                // Path attaches to an already resolved region.
                for i in (0..path.len()).rev() {
                    let x = path[i];
                    let y = arcs[policy[x]].1;
                    rate[x] = rate[y];
                    bias[x] = arcs[policy[x]].2 - rate[y] + bias[y];
                    state[x] = 2;
                }
            }
        }

        // Improve: first on rate, then on bias among equal-rate successors.
        let mut improved = false;
        for x in 0..n {
            let cur_rate = rate[x];
            let mut cand = policy[x];
            let mut cand_rate = rate[arcs[cand].1];
            for &ai in &out[x] {
                let r = rate[arcs[ai].1];
                if r > cand_rate + TOL {
                    cand = ai;
                    cand_rate = r;
                }
            }
            if cand_rate > cur_rate + TOL {
                policy[x] = cand;
                improved = true;
                continue;
            }
            let cur_val = rate[x] + bias[x];
            let mut best_ai = policy[x];
            let mut best_val = arcs[best_ai].2 + bias[arcs[best_ai].1];
            for &ai in &out[x] {
                let y = arcs[ai].1;
                if (rate[y] - cur_rate).abs() <= TOL {
                    let val = arcs[ai].2 + bias[y];
                    if val > best_val + TOL {
                        best_ai = ai;
                        best_val = val;
                    }
                }
            }
            if best_ai != policy[x] && best_val > cur_val + TOL {
                policy[x] = best_ai;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }

    let mu = rate.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (mu, best_cycle)
}

/// Karp's maximum mean cycle, kept as an independent check of the policy
/// iteration. Same compression and expansion pipeline, different solver.
pub fn karp_cycle_mean(g: &EventGraph) -> Result<f64, MaxPlusError> {
    for a in &g.arcs {
        if a.dur < 0 {
            return Err(MaxPlusError::NegativeDuration { from: a.from, to: a.to, dur: a.dur });
        }
    }
    let mut zc = zero_closure(g)?;
    let mut unit: Vec<(usize, usize, f64)> = Vec::new();
    let mut hn = g.n;
    for a in g.arcs.iter() {
        if a.dur == 0 {
            continue;
        }
        let (dist, _) = zc.paths_from(g, a.to).clone();
        for z in 0..g.n {
            if dist[z] > f64::NEG_INFINITY {
                let w = a.weight + dist[z];
                if a.dur == 1 {
                    unit.push((a.from, z, w));
                } else {
                    let mut prev = a.from;
                    for step in 0..a.dur {
                        let nxt = if step == a.dur - 1 {
                            z
                        } else {
                            hn += 1;
                            hn - 1
                        };
                        unit.push((prev, nxt, if step == 0 { w } else { 0.0 }));
                        prev = nxt;
                    }
                }
            }
        }
    }
    if unit.is_empty() {
        return Err(MaxPlusError::NoCycle);
    }
    let mut pg = DiGraph::<(), ()>::new();
    let idx: Vec<_> = (0..hn).map(|_| pg.add_node(())).collect();
    for &(f, t, _) in &unit {
        pg.add_edge(idx[f], idx[t], ());
    }
    let mut best = f64::NEG_INFINITY;
    for comp in tarjan_scc(&pg) {
        let nodes: Vec<usize> = comp.iter().map(|ni| ni.index()).collect();
        let mut local = HashMap::new();
        for (li, &v) in nodes.iter().enumerate() {
            local.insert(v, li);
        }
        let arcs: Vec<(usize, usize, f64)> = unit
            .iter()
            .filter(|(f, t, _)| local.contains_key(f) && local.contains_key(t))
            .map(|&(f, t, w)| (local[&f], local[&t], w))
            .collect();
        if arcs.is_empty() {
            continue;
        }
        let nn = nodes.len();
        if nn == 1 && arcs.iter().all(|&(f, t, _)| f != t) {
            continue;
        }
        // D[k][v]: max weight of a k-arc walk from node 0 to v.
        let mut d = vec![vec![f64::NEG_INFINITY; nn]; nn + 1];
        d[0][0] = 0.0;
        for k in 1..=nn {
            for &(f, t, w) in &arcs {
                if d[k - 1][f] > f64::NEG_INFINITY {
                    let cand = d[k - 1][f] + w;
                    if cand > d[k][t] {
                        d[k][t] = cand;
                    }
                }
            }
        }
        for v in 0..nn {
            if d[nn][v] == f64::NEG_INFINITY {
                continue;
            }
            let mut worst = f64::INFINITY;
            for k in 0..nn {
                if d[k][v] > f64::NEG_INFINITY {
                    worst = worst.min((d[nn][v] - d[k][v]) / (nn - k) as f64);
                }
            }
            if worst < f64::INFINITY && worst > best {
                best = worst;
            }
        }
    }
    if best == f64::NEG_INFINITY {
        Err(MaxPlusError::NoCycle)
    } else {
        Ok(best)
    }
}

/// Reduce a closed walk of arcs to an elementary cycle of the same mean.
/// Splitting a closed walk at a repeated node yields two closed walks whose
/// weight/duration totals add up; at least one has mean >= the whole, and the
/// whole achieves the maximum, so the better part keeps it. A zero-duration
/// part cannot occur because the zero-duration subgraph is acyclic.
fn extract_elementary(g: &EventGraph, mut walk: Vec<usize>) -> Vec<usize> {
    loop {
        let mut seen: HashMap<usize, usize> = HashMap::new();
        seen.insert(g.arcs[walk[0]].from, 0);
        let mut split: Option<(usize, usize)> = None;
        for (pos, &ai) in walk.iter().enumerate() {
            let node = g.arcs[ai].to;
            if pos + 1 == walk.len() {
                break; // closing the walk at the start node is not a repeat
            }
            if let Some(&q) = seen.get(&node) {
                split = Some((q, pos + 1));
                break;
            }
            seen.insert(node, pos + 1);
        }
        let Some((q, p)) = split else {
            return walk;
        };
        let looped: Vec<usize> = walk[q..p].to_vec();
        let mut rest: Vec<usize> = walk[..q].to_vec();
        rest.extend_from_slice(&walk[p..]);
        if rest.is_empty() {
            return looped;
        }
        let mean = |arcs: &[usize]| -> (f64, f64) {
            let w: f64 = arcs.iter().map(|&a| g.arcs[a].weight).sum();
            let d: f64 = arcs.iter().map(|&a| g.arcs[a].dur as f64).sum();
            (w, d)
        };
        let (wl, dl) = mean(&looped);
        let (wr, dr) = mean(&rest);
        // Compare wl/dl vs wr/dr without dividing; both durations are > 0.
        walk = if wl * dr >= wr * dl { looped } else { rest };
    }
}

/// Eigen data of one strongly connected component.
#[derive(Clone, Debug)]
pub struct SccEigen {
    pub nodes: Vec<usize>,
    pub mu: f64,
    /// Eigenvector values for `nodes`, in the same order.
    pub v: Vec<f64>,
}

#[derive(Clone, Debug)]
pub enum EigenOutcome {
    /// The whole graph is one strongly connected component.
    Irreducible { mu: f64, v: Vec<f64> },
    /// Several components, each with its own rate and eigenvector. The model
    /// guarantees equal rates for the matrices built here; callers check.
    Reducible { components: Vec<SccEigen> },
}

impl EigenOutcome {
    /// The common rate if all components agree within `tol`, else None.
    pub fn common_mu(&self, tol: f64) -> Option<f64> {
        match self {
            EigenOutcome::Irreducible { mu, .. } => Some(*mu),
            EigenOutcome::Reducible { components } => {
                let mut mus = components.iter().map(|c| c.mu);
                let first = mus.next()?;
                if mus.all(|m| (m - first).abs() <= tol) {
                    Some(first)
                } else {
                    None
                }
            }
        }
    }
}

/// Generalized eigenvalue and eigenvectors of a polynomial matrix.
///
/// For each strongly connected component with a cycle: mu is the maximum cycle
/// mean of the component's graph; the eigenvector is the column of the
/// longest-path closure of `eval(mu)` at a node on a critical cycle. The
/// residual of the eigen-equation is verified to 1e-9.
pub fn generalized_eigenpair(pm: &PolyMatrix) -> Result<EigenOutcome, MaxPlusError> {
    let g = EventGraph::from_poly(pm);
    let comps = g.sccs();
    let mut components = Vec::new();
    for nodes in comps {
        let in_comp: Vec<bool> = {
            let mut v = vec![false; g.n];
            for &x in &nodes {
                v[x] = true;
            }
            v
        };
        let internal: Vec<&Arc> = g
            .arcs
            .iter()
            .filter(|a| in_comp[a.from] && in_comp[a.to])
            .collect();
        if internal.is_empty() {
            continue;
        }
        if nodes.len() == 1 && internal.iter().all(|a| a.from != a.to) {
            continue;
        }
        let mut local = HashMap::new();
        let mut sorted = nodes.clone();
        sorted.sort_unstable();
        for (li, &v) in sorted.iter().enumerate() {
            local.insert(v, li);
        }
        let mut sub = EventGraph::new(sorted.len());
        for a in &internal {
            sub.add(local[&a.from], local[&a.to], a.weight, a.dur);
        }
        let cm = max_cycle_mean(&sub)?;
        let mu = cm.mu;
        // Longest paths from a critical node over arc values w - d * mu.
        // All cycle sums are <= 0, so Bellman-Ford stabilizes within n rounds.
        let critical = sub.arcs[cm.cycle[0]].from;
        let nn = sorted.len();
        let mut dist = vec![f64::NEG_INFINITY; nn];
        dist[critical] = 0.0;
        for _ in 0..nn {
            let mut changed = false;
            for a in &sub.arcs {
                let val = a.weight - a.dur as f64 * mu;
                if dist[a.from] > f64::NEG_INFINITY {
                    let cand = dist[a.from] + val;
                    if cand > dist[a.to] + TOL {
                        dist[a.to] = cand;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        // Residual check of eval(mu) ⊗ v = v on the component.
        let mut worst: f64 = 0.0;
        for to in 0..nn {
            let mut acc = f64::NEG_INFINITY;
            for a in &sub.arcs {
                if a.to == to {
                    acc = acc.max(dist[a.from] + a.weight - a.dur as f64 * mu);
                }
            }
            worst = worst.max((acc - dist[to]).abs());
        }
        if worst > 1e-9 {
            return Err(MaxPlusError::EigenResidual(worst));
        }
        components.push(SccEigen { nodes: sorted, mu, v: dist });
    }
    if components.is_empty() {
        return Err(MaxPlusError::NoCycle);
    }
    if components.len() == 1 && components[0].nodes.len() == pm.dim() {
        let c = components.pop().unwrap();
        Ok(EigenOutcome::Irreducible { mu: c.mu, v: c.v })
    } else {
        Ok(EigenOutcome::Reducible { components })
    }
}

/// DOT text of a polynomial matrix's event graph; arc labels are weight/duration.
pub fn to_dot(pm: &PolyMatrix, name: &str) -> String {
    let mut s = format!("digraph {name} {{\n");
    for (i, j, d, w) in pm.monomials() {
        s.push_str(&format!("  {j} -> {i} [label=\"{w:.6}/{d}\"];\n"));
    }
    s.push_str("}\n");
    s
}
