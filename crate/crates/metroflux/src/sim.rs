//! Event-driven simulation of the departure recursion.
//!
//! Every departure is the max of its travel-time constraint (follow the
//! train ahead on the same segment) and its safe-separation constraint (wait
//! for the train in front to clear the next segment). At the junction the
//! serving branch alternates one-over-two by default; explicit overrides can
//! replace stretches of the convergence order. Departures d^k for k <= 0 are
//! all zero, matching the matrix form's initial condition.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::line::{LineConfig, Placement, Topology};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SimError {
    #[error("deadlock: circular wait through events {0:?} (node u, node j, k)")]
    Deadlock(Vec<(u8, usize, i64)>),
    #[error("event (u={0}, j={1}, k={2}) needs a departure beyond the simulated horizon; extend K or shorten overrides")]
    Starved(u8, usize, i64),
    #[error("not enough departures after burn-in; need at least {need} per node, have {have}")]
    InsufficientData { need: usize, have: usize },
    #[error("gamma = {0} outside [0, 1]")]
    BadGamma(f64),
    #[error("harmonized dynamics run on a ring; build one from the central part")]
    NotARing,
    #[error("initial vector has {got} entries, ring has {want} nodes")]
    BadInitial { got: usize, want: usize },
}

/// Dwell/run law driving the travel times.
#[derive(Clone, Debug, PartialEq)]
pub enum DwellRunLaw {
    /// Travel at the fixed lower bound t = r + w.
    FixedMinimum,
    /// Demand-dependent dwell and run; the margin is the run reserve as a
    /// fraction of the minimum run time (line-level default if None).
    DemandDependent { margin: Option<f64> },
}

/// Convergence handling at the junction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ConvergenceModel {
    #[default]
    One,
    /// Variant where each branch exit watches the other branch's convergence.
    Two,
}

/// Forced convergence order for central events k_from..=k_to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OverrideRange {
    pub k_from: i64,
    pub k_to: i64,
    pub branch: u8,
}

#[derive(Clone, Debug, Default)]
pub struct JunctionRule {
    pub model: ConvergenceModel,
    pub overrides: Vec<OverrideRange>,
}

/// Additional travel time on one segment for a run of consecutive trains.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerturbationSpec {
    pub u: u8,
    pub j: usize,
    pub start: PerturbationStart,
    pub count: u32,
    pub extra: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PerturbationStart {
    /// Trains entering the segment at or after this time are delayed.
    Time(f64),
    /// Departures k_from.. at the segment's downstream node are delayed.
    Event(i64),
}

/// Per-segment demand-law constants.
#[derive(Clone, Copy, Debug, Default)]
pub struct SegLaw {
    pub x: f64,
    pub g_lo: f64,
    pub r_min: f64,
    pub r_tilde: f64,
    /// Dwell cap, chosen so dwell and run saturate at the same headway.
    pub w_cap: f64,
    /// Headway at which the gap reaches its lower bound.
    pub h_lo: f64,
}

impl SegLaw {
    pub fn x_ratio(&self) -> f64 {
        self.x / (1.0 - self.x)
    }

    /// Constant per-event travel time of the demand law.
    pub fn t_effective(&self) -> f64 {
        self.r_tilde + self.x_ratio() * self.g_lo
    }

    pub fn dwell(&self, h: f64) -> f64 {
        (self.x * h).min(self.w_cap)
    }

    pub fn run(&self, h: f64) -> f64 {
        self.r_min.max(self.r_tilde - self.x * (h - self.h_lo))
    }
}

/// Demand-law constants of one segment under margin `rho`.
pub fn seg_law(cfg: &LineConfig, u: u8, j: usize, rho: f64) -> SegLaw {
    let seg = cfg.segment(u, j);
    let x = cfg
        .demands
        .get(&(u, j))
        .map(|d| d.lambda_out / d.alpha_out + d.lambda_in / d.alpha_in)
        .unwrap_or(0.0);
    let dr = rho * seg.r;
    let r_tilde = seg.r + dr;
    let xr = x / (1.0 - x);
    SegLaw {
        x,
        g_lo: seg.g_min,
        r_min: seg.r,
        r_tilde,
        w_cap: xr * seg.g_min + dr,
        h_lo: if x > 0.0 { seg.g_min / (1.0 - x) } else { 0.0 },
    }
}

/// Simulation output: departure and arrival times per node, the junction
/// orders used, and the travel-constraint values for slack analysis.
#[derive(Clone, Debug)]
pub struct DepartureLog {
    pub topology: Topology,
    pub law: Option<BTreeMap<(u8, usize), SegLaw>>,
    /// Central departures per junction node; branch nodes have half as many.
    pub k_central: i64,
    d: BTreeMap<(u8, usize), Vec<f64>>,
    a: BTreeMap<(u8, usize), Vec<f64>>,
    travel_bound: BTreeMap<(u8, usize), Vec<f64>>,
    pub sigma_conv: Vec<u8>,
    pub sigma_div: Vec<u8>,
    pub initial_imbalance: i64,
    /// prefix[j] = trains initially on central segments 1..=j; they depart
    /// node j before the first train that crosses the convergence.
    central_occ_prefix: Vec<i64>,
}

impl DepartureLog {
    /// Departure k from node (u, j); k <= 0 is the all-zero past.
    pub fn d(&self, u: u8, j: usize, k: i64) -> Option<f64> {
        if k <= 0 {
            return Some(0.0);
        }
        self.d.get(&(u, j))?.get(k as usize - 1).copied()
    }

    pub fn a(&self, u: u8, j: usize, k: i64) -> Option<f64> {
        if k <= 0 {
            return Some(0.0);
        }
        self.a.get(&(u, j))?.get(k as usize - 1).copied()
    }

    /// Time headway h^k = d^k - d^{k-1}.
    pub fn h(&self, u: u8, j: usize, k: i64) -> Option<f64> {
        Some(self.d(u, j, k)? - self.d(u, j, k - 1)?)
    }

    /// Time gap g^k = a^k - d^{k-1}.
    pub fn g(&self, u: u8, j: usize, k: i64) -> Option<f64> {
        Some(self.a(u, j, k)? - self.d(u, j, k - 1)?)
    }

    /// Slack of the departure over its travel constraint: waiting time at
    /// the node once the incoming run has completed its lower bound.
    pub fn travel_slack(&self, u: u8, j: usize, k: i64) -> Option<f64> {
        let bound = self.travel_bound.get(&(u, j))?.get(k as usize - 1)?;
        Some(self.d(u, j, k)? - bound)
    }

    /// Number of computed departures at a node.
    pub fn len(&self, u: u8, j: usize) -> i64 {
        self.d.get(&(u, j)).map_or(0, |v| v.len() as i64)
    }

    /// Dwell and run of the demand law at the realized headway.
    pub fn dwell_run(&self, u: u8, j: usize, k: i64) -> Option<(f64, f64)> {
        let law = self.law.as_ref()?.get(&(u, j))?;
        let h = self.h(u, j, k)?;
        Some((law.dwell(h), law.run(h)))
    }

    /// Branch imbalance after the first k central events at both junction
    /// nodes: initial m2 - m1 plus inflow minus outflow difference.
    pub fn branch_imbalance(&self, k: i64) -> i64 {
        let count = |sigma: &Vec<u8>, u: u8| -> i64 {
            sigma.iter().take(k as usize).filter(|&&b| b == u).count() as i64
        };
        let in2 = count(&self.sigma_div, 2);
        let in1 = count(&self.sigma_div, 1);
        let out2 = count(&self.sigma_conv, 2);
        let out1 = count(&self.sigma_conv, 1);
        self.initial_imbalance + (in2 - out2) - (in1 - out1)
    }
}

/// Convergence (or divergence) order for events 1..=k_max: one-over-two
/// alternation starting with branch 1, with forced ranges; after a forced
/// range the alternation resumes from the flip of the last forced branch.
pub fn junction_order(k_max: i64, overrides: &[OverrideRange]) -> Vec<u8> {
    let mut order = Vec::with_capacity(k_max as usize);
    let mut last = 2u8;
    for k in 1..=k_max {
        let forced = overrides
            .iter()
            .find(|o| o.k_from <= k && k <= o.k_to)
            .map(|o| o.branch);
        let b = forced.unwrap_or(3 - last);
        order.push(b);
        last = b;
    }
    order
}

struct JunctionTables {
    sigma_conv: Vec<u8>,
    sigma_div: Vec<u8>,
    /// count[k-1][u] = number of u-events among conv events 1..=k.
    conv_count: Vec<[i64; 2]>,
    div_count: Vec<[i64; 2]>,
    /// occurrence[u][c-1] = k of the c-th u-event.
    conv_occ: [Vec<i64>; 2],
    div_occ: [Vec<i64>; 2],
}

fn junction_tables(k_max: i64, rule: &JunctionRule) -> JunctionTables {
    let sigma_conv = junction_order(k_max, &rule.overrides);
    let sigma_div = junction_order(k_max, &[]);
    let build = |sigma: &[u8]| {
        let mut counts = Vec::with_capacity(sigma.len());
        let mut occ: [Vec<i64>; 2] = [Vec::new(), Vec::new()];
        let mut acc = [0i64; 2];
        for (i, &b) in sigma.iter().enumerate() {
            acc[b as usize - 1] += 1;
            occ[b as usize - 1].push(i as i64 + 1);
            counts.push(acc);
        }
        (counts, occ)
    };
    let (conv_count, conv_occ) = build(&sigma_conv);
    let (div_count, div_occ) = build(&sigma_div);
    JunctionTables { sigma_conv, sigma_div, conv_count, div_count, conv_occ, div_occ }
}

impl JunctionTables {
    fn conv_branch(&self, k: i64) -> u8 {
        self.sigma_conv[k as usize - 1]
    }
    fn div_branch(&self, k: i64) -> u8 {
        self.sigma_div[k as usize - 1]
    }
    /// Among convergence events 1..=k, how many served branch u.
    fn conv_served(&self, k: i64, u: u8) -> i64 {
        if k <= 0 {
            0
        } else {
            self.conv_count[k as usize - 1][u as usize - 1]
        }
    }
    fn div_served(&self, k: i64, u: u8) -> i64 {
        if k <= 0 {
            0
        } else {
            self.div_count[k as usize - 1][u as usize - 1]
        }
    }
    /// Central event index of the c-th convergence from branch u, if it
    /// falls within the horizon.
    fn conv_event_of(&self, u: u8, c: i64) -> Result<Option<i64>, ()> {
        if c <= 0 {
            return Ok(None); // boundary
        }
        match self.conv_occ[u as usize - 1].get(c as usize - 1) {
            Some(&k) => Ok(Some(k)),
            None => Err(()), // beyond horizon
        }
    }
    fn div_event_of(&self, u: u8, c: i64) -> Result<Option<i64>, ()> {
        if c <= 0 {
            return Ok(None);
        }
        match self.div_occ[u as usize - 1].get(c as usize - 1) {
            Some(&k) => Ok(Some(k)),
            None => Err(()),
        }
    }
}

/// One constraint of an event: wait for `src` (None = the all-zero past)
/// plus `weight`.
struct Constraint {
    src: Option<((u8, usize), i64)>,
    weight: f64,
    travel: bool,
    /// Perturbations targeting this constraint's segment.
    perts: Vec<usize>,
}

enum Deps {
    Ok(Vec<Constraint>),
    /// A constraint needs an event beyond the horizon.
    Starved,
}

struct EventSystem<'a> {
    cfg: &'a LineConfig,
    p: &'a Placement,
    tt: BTreeMap<(u8, usize), f64>,
    jt: Option<JunctionTables>,
    model: ConvergenceModel,
    perts: &'a [PerturbationSpec],
    k_central: i64,
}

impl<'a> EventSystem<'a> {
    fn k_limit(&self, u: u8) -> i64 {
        if u == 0 {
            self.k_central
        } else {
            self.k_central / 2
        }
    }

    fn pert_ids(&self, u: u8, j: usize) -> Vec<usize> {
        self.perts
            .iter()
            .enumerate()
            .filter(|(_, p)| p.u == u && p.j == j)
            .map(|(i, _)| i)
            .collect()
    }

    fn travel(&self, u: u8, j: usize, src: Option<((u8, usize), i64)>) -> Constraint {
        Constraint { src, weight: self.tt[&(u, j)], travel: true, perts: self.pert_ids(u, j) }
    }

    fn safe(&self, u: u8, j: usize, src: Option<((u8, usize), i64)>) -> Constraint {
        Constraint { src, weight: self.cfg.segment(u, j).s, travel: false, perts: Vec::new() }
    }

    /// Clamp a source reference: events at k <= 0 are the all-zero past.
    fn at(&self, node: (u8, usize), k: i64) -> Option<((u8, usize), i64)> {
        if k <= 0 {
            None
        } else {
            Some((node, k))
        }
    }

    fn deps(&self, u: u8, j: usize, k: i64) -> Deps {
        let mut cs = Vec::with_capacity(2);
        match self.cfg.topology {
            Topology::Ring { n0 } => {
                let seg_in = if j == 0 { n0 } else { j };
                let up = if j == 0 { n0 - 1 } else { j - 1 };
                cs.push(self.travel(0, seg_in, self.at((0, up), k - self.p.b(0, seg_in))));
                let seg_out = j + 1;
                let down = (j + 1) % n0;
                cs.push(self.safe(0, seg_out, self.at((0, down), k - self.p.b_bar(0, seg_out))));
            }
            Topology::Junction { n0, .. } => {
                let jt = self.jt.as_ref().expect("junction tables");
                let lens = [n0, self.cfg.topology.part_len(1), self.cfg.topology.part_len(2)];
                if u == 0 && j == 0 {
                    // Convergence: travel from the serving branch, safety
                    // behind toward the first central segment.
                    let bu = jt.conv_branch(k);
                    let nu = lens[bu as usize];
                    let c = jt.conv_served(k, bu) - self.p.b(bu, nu);
                    cs.push(self.travel(bu, nu, self.at((bu, nu - 1), c)));
                    cs.push(self.safe(0, 1, self.at((0, 1), k - self.p.b_bar(0, 1))));
                } else if u == 0 && j == n0 {
                    // Divergence: central travel, safety from the branch the
                    // k-th departure enters.
                    cs.push(self.travel(0, n0, self.at((0, n0 - 1), k - self.p.b(0, n0))));
                    let bu = jt.div_branch(k);
                    let c = jt.div_served(k, bu) - self.p.b_bar(bu, 1);
                    cs.push(self.safe(bu, 1, self.at((bu, 1), c)));
                } else if u == 0 {
                    cs.push(self.travel(0, j, self.at((0, j - 1), k - self.p.b(0, j))));
                    cs.push(self.safe(0, j + 1, self.at((0, j + 1), k - self.p.b_bar(0, j + 1))));
                } else {
                    let nu = lens[u as usize];
                    // Travel side: first branch node follows the divergence.
                    if j == 1 {
                        let c = k - self.p.b(u, 1);
                        match jt.div_event_of(u, c) {
                            Err(()) => return Deps::Starved,
                            Ok(src_k) => cs.push(
                                self.travel(u, 1, src_k.and_then(|kk| self.at((0, n0), kk))),
                            ),
                        }
                    } else {
                        cs.push(self.travel(u, j, self.at((u, j - 1), k - self.p.b(u, j))));
                    }
                    // Safety side: last branch node watches the convergence.
                    if j == nu - 1 {
                        let (watched, c) = match self.model {
                            ConvergenceModel::One => (u, k - self.p.b_bar(u, nu)),
                            ConvergenceModel::Two => {
                                let other = 3 - u;
                                let c = if u == 1 {
                                    k - self.p.b_bar(1, nu)
                                } else {
                                    k + 1 - self.p.b_bar(2, nu)
                                };
                                (other, c)
                            }
                        };
                        match jt.conv_event_of(watched, c) {
                            Err(()) => return Deps::Starved,
                            Ok(src_k) => cs
                                .push(self.safe(u, nu, src_k.and_then(|kk| self.at((0, 0), kk)))),
                        }
                    } else {
                        cs.push(self.safe(u, j + 1, self.at((u, j + 1), k - self.p.b_bar(u, j + 1))));
                    }
                }
            }
        }
        // A source index past its node's horizon cannot be satisfied.
        for c in &cs {
            if let Some((sn, sk)) = c.src {
                if sk > self.k_limit(sn.0) {
                    return Deps::Starved;
                }
            }
        }
        Deps::Ok(cs)
    }
}

/// Effective travel times under a law.
fn travel_times(cfg: &LineConfig, law: &DwellRunLaw) -> (BTreeMap<(u8, usize), f64>, Option<BTreeMap<(u8, usize), SegLaw>>) {
    match law {
        DwellRunLaw::FixedMinimum => {
            let tt = cfg
                .topology
                .segments()
                .into_iter()
                .map(|(u, j)| ((u, j), cfg.segment(u, j).t()))
                .collect();
            (tt, None)
        }
        DwellRunLaw::DemandDependent { margin } => {
            let rho = margin.unwrap_or(cfg.run_margin);
            let laws: BTreeMap<(u8, usize), SegLaw> = cfg
                .topology
                .segments()
                .into_iter()
                .map(|(u, j)| ((u, j), seg_law(cfg, u, j, rho)))
                .collect();
            let tt = laws.iter().map(|(&k, l)| (k, l.t_effective())).collect();
            (tt, Some(laws))
        }
    }
}

/// Run the departure recursion for `k_central` central departures per
/// junction node (branch nodes fire half as often). `k_central` is rounded
/// up to even.
pub fn simulate(
    cfg: &LineConfig,
    p: &Placement,
    law: &DwellRunLaw,
    k_central: i64,
    rule: &JunctionRule,
    perts: &[PerturbationSpec],
) -> Result<DepartureLog, SimError> {
    let k_central = k_central + k_central % 2;
    let (tt, law_data) = travel_times(cfg, law);
    let jt = match cfg.topology {
        Topology::Ring { .. } => None,
        Topology::Junction { .. } => Some(junction_tables(k_central, rule)),
    };
    let sys = EventSystem { cfg, p, tt, jt, model: rule.model, perts, k_central };

    let nodes = cfg.topology.nodes();
    let node_pos: BTreeMap<(u8, usize), usize> = nodes.iter().enumerate().map(|(i, &n)| (n, i)).collect();
    let stride = k_central as usize;
    let eid = |node: (u8, usize), k: i64| node_pos[&node] * stride + (k as usize - 1);
    let total = nodes.len() * stride;

    // Resolve dependencies once; by-event constraint lists.
    let mut deps: Vec<Option<Vec<Constraint>>> = Vec::with_capacity(total);
    deps.resize_with(total, || None);
    let mut starved: Vec<bool> = vec![false; total];
    for &(u, j) in &nodes {
        for k in 1..=sys.k_limit(u) {
            match sys.deps(u, j, k) {
                Deps::Ok(cs) => deps[eid((u, j), k)] = Some(cs),
                Deps::Starved => starved[eid((u, j), k)] = true,
            }
        }
    }

    // Kahn's scheduling over constraint sources plus per-node ordering edges.
    let mut indeg: Vec<u32> = vec![0; total];
    let mut out: Vec<Vec<u32>> = vec![Vec::new(); total];
    let mut exists: Vec<bool> = vec![false; total];
    for &(u, j) in &nodes {
        for k in 1..=sys.k_limit(u) {
            let e = eid((u, j), k);
            exists[e] = true;
            if starved[e] {
                continue;
            }
            let mut degree = 0;
            for c in deps[e].as_ref().unwrap() {
                if let Some((src, sk)) = c.src {
                    let s = eid(src, sk);
                    out[s].push(e as u32);
                    degree += 1;
                }
            }
            if k > 1 {
                let prev = eid((u, j), k - 1);
                out[prev].push(e as u32);
                degree += 1;
            }
            indeg[e] = degree;
        }
    }

    let mut d_val: Vec<f64> = vec![f64::NAN; total];
    let mut a_val: Vec<f64> = vec![f64::NAN; total];
    let mut t_bound: Vec<f64> = vec![f64::NAN; total];
    let mut pert_first: Vec<Option<i64>> = vec![None; perts.len()];
    let mut done: Vec<bool> = vec![false; total];

    let mut queue: Vec<usize> = (0..total)
        .filter(|&e| exists[e] && !starved[e] && indeg[e] == 0)
        .collect();
    let mut fired = 0usize;
    while let Some(e) = queue.pop() {
        let k = (e % stride) as i64 + 1;
        let cs = deps[e].as_ref().unwrap();
        let mut best = f64::NEG_INFINITY;
        let mut travel_val = f64::NEG_INFINITY;
        let mut arrive = f64::NEG_INFINITY;
        for c in cs {
            let src_d = match c.src {
                None => 0.0,
                Some((sn, sk)) => d_val[eid(sn, sk)],
            };
            debug_assert!(!src_d.is_nan(), "source not computed before use");
            let mut w = c.weight;
            if c.travel {
                for &pi in &c.perts {
                    let pt = &perts[pi];
                    let triggered = match pt.start {
                        PerturbationStart::Time(t0) => src_d >= t0,
                        PerturbationStart::Event(k0) => k >= k0,
                    };
                    if triggered && pert_first[pi].is_none() {
                        pert_first[pi] = Some(k);
                    }
                    if let Some(first) = pert_first[pi] {
                        if k >= first && k < first + pt.count as i64 {
                            w += pt.extra;
                        }
                    }
                }
            }
            let cand = src_d + w;
            if c.travel {
                travel_val = travel_val.max(cand);
                arrive = arrive.max(cand);
            }
            best = best.max(cand);
        }
        d_val[e] = best;
        t_bound[e] = travel_val;
        a_val[e] = arrive;
        done[e] = true;
        fired += 1;
        for &nx in &out[e] {
            let nx = nx as usize;
            if starved[nx] {
                continue;
            }
            indeg[nx] -= 1;
            if indeg[nx] == 0 {
                queue.push(nx);
            }
        }
    }

    let scheduled = (0..total).filter(|&e| exists[e] && !starved[e]).count();
    if fired < scheduled {
        // Events transitively blocked by a starved one are horizon
        // exhaustion; anything left blocked beyond those sits on a circular
        // wait. Propagate starvation forward first.
        let mut trans = starved.clone();
        let mut work: Vec<usize> = (0..total).filter(|&e| trans[e]).collect();
        while let Some(s) = work.pop() {
            for &nx in &out[s] {
                let nx = nx as usize;
                if !done[nx] && !trans[nx] {
                    trans[nx] = true;
                    work.push(nx);
                }
            }
        }
        let core: Vec<usize> = (0..total)
            .filter(|&e| exists[e] && !done[e] && !trans[e])
            .collect();
        if core.is_empty() {
            let &e = (0..total)
                .filter(|&e| exists[e] && !done[e] && !starved[e])
                .collect::<Vec<_>>()
                .first()
                .expect("some event is blocked");
            let node = nodes[e / stride];
            return Err(SimError::Starved(node.0, node.1, (e % stride) as i64 + 1));
        }
        // Every core event has an unsatisfied source that is itself core;
        // walking those sources must revisit an event.
        let next_core = |e: usize| -> usize {
            let node = nodes[e / stride];
            let k = (e % stride) as i64 + 1;
            if k > 1 {
                let prev = eid(node, k - 1);
                if !done[prev] && !trans[prev] {
                    return prev;
                }
            }
            deps[e]
                .as_ref()
                .unwrap()
                .iter()
                .find_map(|c| {
                    c.src.and_then(|(sn, sk)| {
                        let s = eid(sn, sk);
                        (!done[s] && !trans[s]).then_some(s)
                    })
                })
                .expect("core event with all sources satisfied")
        };
        let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
        let mut path: Vec<usize> = Vec::new();
        let mut cur = core[0];
        loop {
            if let Some(&pos) = seen.get(&cur) {
                let cyc: Vec<(u8, usize, i64)> = path[pos..]
                    .iter()
                    .map(|&e| {
                        let n = nodes[e / stride];
                        (n.0, n.1, (e % stride) as i64 + 1)
                    })
                    .collect();
                return Err(SimError::Deadlock(cyc));
            }
            seen.insert(cur, path.len());
            path.push(cur);
            cur = next_core(cur);
        }
    }

    // Arrivals: departure of the upstream event plus the run component at
    // the realized headway (fixed law: minimum run).
    let mut d_map = BTreeMap::new();
    let mut a_map = BTreeMap::new();
    let mut t_map = BTreeMap::new();
    for &(u, j) in &nodes {
        let lim = sys.k_limit(u);
        let mut dv = Vec::with_capacity(lim as usize);
        let mut av = Vec::with_capacity(lim as usize);
        let mut tv = Vec::with_capacity(lim as usize);
        for k in 1..=lim {
            let e = eid((u, j), k);
            if !done[e] {
                break;
            }
            dv.push(d_val[e]);
            tv.push(t_bound[e]);
            av.push(a_val[e]);
        }
        d_map.insert((u, j), dv);
        a_map.insert((u, j), av);
        t_map.insert((u, j), tv);
    }

    let (sigma_conv, sigma_div) = match &sys.jt {
        Some(jt) => (jt.sigma_conv.clone(), jt.sigma_div.clone()),
        None => (Vec::new(), Vec::new()),
    };
    let n0 = cfg.topology.part_len(0);
    let mut prefix = vec![0i64; n0 + 1];
    for j in 1..=n0 {
        prefix[j] = prefix[j - 1] + p.b(0, j);
    }
    let mut log = DepartureLog {
        topology: cfg.topology,
        law: law_data,
        k_central,
        d: d_map,
        a: a_map,
        travel_bound: t_map,
        sigma_conv,
        sigma_div,
        initial_imbalance: p.m_part[2] as i64 - p.m_part[1] as i64,
        central_occ_prefix: prefix,
    };
    fill_arrivals(cfg, &sys, &mut log);
    Ok(log)
}

/// Arrival = upstream departure + run component. The fixed law runs at the
/// minimum; the demand law's run depends on the realized headway.
fn fill_arrivals(cfg: &LineConfig, sys: &EventSystem, log: &mut DepartureLog) {
    let nodes = cfg.topology.nodes();
    for &(u, j) in &nodes {
        let lim = log.len(u, j);
        for k in 1..=lim {
            // Segment feeding this node and its upstream event.
            let (seg, src) = match cfg.topology {
                Topology::Ring { n0 } => {
                    let seg = if j == 0 { n0 } else { j };
                    let up = if j == 0 { n0 - 1 } else { j - 1 };
                    (
                        (0u8, seg),
                        log.d(0, up, k - sys.p.b(0, seg)).unwrap_or(0.0),
                    )
                }
                Topology::Junction { n0, .. } => {
                    if u == 0 && j == 0 {
                        let jt = sys.jt.as_ref().unwrap();
                        let bu = jt.conv_branch(k);
                        let nu = cfg.topology.part_len(bu);
                        let c = jt.conv_served(k, bu) - sys.p.b(bu, nu);
                        ((bu, nu), log.d(bu, nu - 1, c).unwrap_or(0.0))
                    } else if u == 0 {
                        ((0, j), log.d(0, j - 1, k - sys.p.b(0, j)).unwrap_or(0.0))
                    } else if j == 1 {
                        let jt = sys.jt.as_ref().unwrap();
                        let c = k - sys.p.b(u, 1);
                        let src = jt
                            .div_event_of(u, c)
                            .ok()
                            .flatten()
                            .and_then(|kk| log.d(0, n0, kk))
                            .unwrap_or(0.0);
                        ((u, 1), src)
                    } else {
                        ((u, j), log.d(u, j - 1, k - sys.p.b(u, j)).unwrap_or(0.0))
                    }
                }
            };
            let run = match &log.law {
                None => cfg.segment(seg.0, seg.1).r,
                Some(laws) => {
                    let h = log.h(u, j, k).unwrap_or(f64::INFINITY);
                    laws[&seg].run(h)
                }
            };
            let a = src + run;
            if let Some(slot) = log
                .a
                .get_mut(&(u, j))
                .and_then(|v| v.get_mut(k as usize - 1))
            {
                *slot = a;
            }
        }
    }
}

/// Per-part asymptotic headways measured as least-squares slopes of d vs k.
#[derive(Clone, Copy, Debug)]
pub struct EmpiricalHeadways {
    pub h0: f64,
    pub h1: Option<f64>,
    pub h2: Option<f64>,
}

pub fn empirical_headway(log: &DepartureLog, burn_in: f64) -> Result<EmpiricalHeadways, SimError> {
    let slope = |u: u8, j: usize| -> Result<f64, SimError> {
        let n = log.len(u, j);
        let k0 = ((n as f64) * burn_in).floor() as i64 + 1;
        let have = (n - k0 + 1).max(0) as usize;
        if have < 100 {
            return Err(SimError::InsufficientData { need: 100, have });
        }
        let mut sk = 0.0;
        let mut sd = 0.0;
        let mut skk = 0.0;
        let mut skd = 0.0;
        let cnt = have as f64;
        for k in k0..=n {
            let d = log.d(u, j, k).unwrap();
            sk += k as f64;
            sd += d;
            skk += (k as f64) * (k as f64);
            skd += (k as f64) * d;
        }
        Ok((cnt * skd - sk * sd) / (cnt * skk - sk * sk))
    };
    let part_avg = |u: u8| -> Result<f64, SimError> {
        let js: Vec<usize> = log
            .d
            .keys()
            .filter(|&&(uu, _)| uu == u)
            .map(|&(_, j)| j)
            .collect();
        let mut acc = 0.0;
        for &j in &js {
            acc += slope(u, j)?;
        }
        Ok(acc / js.len() as f64)
    };
    match log.topology {
        Topology::Ring { .. } => Ok(EmpiricalHeadways { h0: part_avg(0)?, h1: None, h2: None }),
        Topology::Junction { .. } => Ok(EmpiricalHeadways {
            h0: part_avg(0)?,
            h1: Some(part_avg(1)?),
            h2: Some(part_avg(2)?),
        }),
    }
}

/// Harmonization schedule for the dwell smoothing weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GammaSchedule {
    Constant(f64),
    /// gamma(k) = gamma0 * max(0, 1 - k / k_end).
    LinearDecay { gamma0: f64, k_end: i64 },
}

impl GammaSchedule {
    pub fn at(&self, k: i64) -> f64 {
        match *self {
            GammaSchedule::Constant(g) => g,
            GammaSchedule::LinearDecay { gamma0, k_end } => {
                gamma0 * (1.0 - k as f64 / k_end as f64).max(0.0)
            }
        }
    }
}

/// Harmonized dwell dynamics on a ring: each departure mixes the plain
/// demand-law constraint with the node's previous departure,
///   d^k_j = max{ (1-delta) d^{k-b}_{j-1} + delta d^{k-1}_j + (1-delta) t_j,
///                d^{k-bbar}_{j+1} + s_{j+1} },
/// with delta = gamma x / (1 + gamma x). gamma = 0 recovers the demand-law
/// recursion exactly. `d0` supplies the departure times at k = 0.
pub fn simulate_harmonized(
    cfg: &LineConfig,
    p: &Placement,
    margin: Option<f64>,
    schedule: &GammaSchedule,
    d0: &[f64],
    k_max: i64,
) -> Result<DepartureLog, SimError> {
    let Topology::Ring { n0 } = cfg.topology else {
        return Err(SimError::NotARing);
    };
    if d0.len() != n0 {
        return Err(SimError::BadInitial { got: d0.len(), want: n0 });
    }
    for k in 1..=k_max {
        let g = schedule.at(k);
        if !(0.0..=1.0).contains(&g) {
            return Err(SimError::BadGamma(g));
        }
    }
    let rho = margin.unwrap_or(cfg.run_margin);
    let laws: BTreeMap<(u8, usize), SegLaw> = (1..=n0).map(|j| ((0u8, j), seg_law(cfg, 0, j, rho))).collect();

    let mut d: Vec<Vec<f64>> = vec![Vec::with_capacity(k_max as usize); n0];
    let read = |d: &Vec<Vec<f64>>, j: usize, k: i64| -> Option<f64> {
        if k < 0 {
            Some(d0[j] - 1e9) // far past; only k-1 and k can be referenced
        } else if k == 0 {
            Some(d0[j])
        } else {
            d[j].get(k as usize - 1).copied()
        }
    };
    for k in 1..=k_max {
        let gamma = schedule.at(k);
        let mut cur: Vec<Option<f64>> = vec![None; n0];
        // Shifts are at most one deep, so a bounded number of sweeps settles
        // every node; zero-shift chains are acyclic for 0 < m < n.
        for _sweep in 0..=n0 + 1 {
            let mut changed = false;
            for j0 in 0..n0 {
                let seg_in = if j0 == 0 { n0 } else { j0 };
                let up = if j0 == 0 { n0 - 1 } else { j0 - 1 };
                let seg_out = j0 + 1;
                let down = (j0 + 1) % n0;
                let law = &laws[&(0, seg_in)];
                let delta = gamma * law.x / (1.0 + gamma * law.x);
                let kb = k - p.b(0, seg_in);
                let upstream = if kb == k { cur[up] } else { read(&d, up, kb) };
                let own_prev = read(&d, j0, k - 1);
                let travel = match (upstream, own_prev) {
                    (Some(upv), Some(pv)) => {
                        Some((1.0 - delta) * upv + delta * pv + (1.0 - delta) * law.t_effective())
                    }
                    _ => None,
                };
                let kbb = k - p.b_bar(0, seg_out);
                let ahead = if kbb == k { cur[down] } else { read(&d, down, kbb) };
                let safev = ahead.map(|av| av + cfg.segment(0, seg_out).s);
                let val = match (travel, safev) {
                    (Some(t), Some(s)) => Some(t.max(s)),
                    _ => None,
                };
                if let Some(v) = val {
                    if cur[j0].map_or(true, |old| v > old) {
                        cur[j0] = Some(v);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        for j0 in 0..n0 {
            match cur[j0] {
                Some(v) => d[j0].push(v),
                None => {
                    return Err(SimError::Deadlock(vec![(0, j0, k)]));
                }
            }
        }
    }

    let d_map: BTreeMap<(u8, usize), Vec<f64>> = d.into_iter().enumerate().map(|(j, v)| ((0u8, j), v)).collect();
    let a_map = d_map.clone();
    let t_map = d_map.clone();
    Ok(DepartureLog {
        topology: cfg.topology,
        law: Some(laws),
        k_central: k_max,
        d: d_map,
        a: a_map,
        travel_bound: t_map,
        sigma_conv: Vec::new(),
        sigma_div: Vec::new(),
        initial_imbalance: 0,
        central_occ_prefix: Vec::new(),
    })
}

/// Initial departure vector realizing target first headways at node 0 of a
/// ring. Trains sit on the last `m` segments before node 0; successive
/// upstream trains are offset so that node-0 departures are spaced by
/// `headways` when running at the demand-law travel times.
pub fn initial_departures_from_headways(
    cfg: &LineConfig,
    margin: Option<f64>,
    headways: &[f64],
) -> Result<(Placement, Vec<f64>), SimError> {
    let Topology::Ring { n0 } = cfg.topology else {
        return Err(SimError::NotARing);
    };
    let m = headways.len();
    if m == 0 || m >= n0 {
        return Err(SimError::BadInitial { got: m, want: n0 });
    }
    let rho = margin.unwrap_or(cfg.run_margin);
    let mut b = BTreeMap::new();
    for j in 1..=n0 {
        b.insert((0u8, j), u8::from(j > n0 - m));
    }
    let placement = Placement { m: m as u32, dm: 0, m_part: [m as u32, 0, 0], b };
    // Train i (1-based) is on segment n0 - i + 1, about to depart node
    // n0 - i (train 1 departs node n0-1, next serves node 0).
    let mut d0 = vec![0.0; n0];
    let mut offset = 0.0;
    for i in 1..=m {
        let node = n0 - i;
        d0[node] = offset;
        // The next train is one hop further out; its extra hop runs over
        // segment `node`. Spacing its start by the target headway minus
        // that hop makes successive node-0 departures differ by the target.
        // The m-th headway closes the lap and follows from the dynamics.
        let hop = seg_law(cfg, 0, node, rho).t_effective();
        offset += headways[i - 1] - hop;
    }
    Ok((placement, d0))
}

/// Passing-order plan shifting the branch imbalance by `d_dm`, starting at
/// convergence event `k_from`. Each unit inserts one extra service of the
/// target branch (branch 2 to decrease, branch 1 to increase) and lets the
/// alternation resume flipped: the visible pattern is two consecutive trains
/// from that branch, and the imbalance averaged over an event pair moves by
/// one. Insertions are spaced three events apart so each lands on a slot the
/// resumed alternation would have given to the other branch. A unit placed
/// on a slot already due to the target branch leaves the order unchanged, so
/// with no earlier overrides decreases start on an odd event and increases
/// on an even one.
pub fn passing_order_plan(k_from: i64, d_dm: i64) -> Vec<OverrideRange> {
    let branch = if d_dm < 0 { 2 } else { 1 };
    (0..d_dm.unsigned_abs() as i64)
        .map(|i| OverrideRange { k_from: k_from + 3 * i, k_to: k_from + 3 * i, branch })
        .collect()
}

/// CSV of the full trajectory; branch_origin is the serving branch for
/// central nodes (0 for trains initially on the central part), the node's
/// own branch otherwise.
pub fn trajectory_export(log: &DepartureLog) -> String {
    let mut out = String::from("node_u,node_j,k,depart_s,arrive_s,branch_origin\n");
    let nodes: Vec<(u8, usize)> = log.d.keys().copied().collect();
    for (u, j) in nodes {
        for k in 1..=log.len(u, j) {
            let origin = if u == 0 && !log.sigma_conv.is_empty() {
                let entered = k - log.central_occ_prefix[j];
                if entered >= 1 && entered <= log.sigma_conv.len() as i64 {
                    log.sigma_conv[entered as usize - 1]
                } else {
                    0
                }
            } else if u > 0 {
                u
            } else {
                0
            };
            out.push_str(&format!(
                "{},{},{},{:.6},{:.6},{}\n",
                u,
                j,
                k,
                log.d(u, j, k).unwrap(),
                log.a(u, j, k).unwrap(),
                origin
            ));
        }
    }
    out
}
