//! Closed-form asymptotic headways.
//!
//! The asymptotic headway is the max of four families of cycle means: the
//! forward loops (travel times over trains), the per-segment minimum
//! separation, the backward loops (safety times over free segments), and the
//! loops through both branches. Any family whose denominator is not positive
//! contributes +inf: the formulas then cover the whole (m, dm) plane, with
//! zero flow on and outside the feasibility hexagon.

use crate::line::{Aggregates, LineConfig, Topology};
use crate::sim::seg_law;

/// Term family that attains the asymptotic headway.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binding {
    /// A segment's travel plus safety time.
    MinSeparation,
    /// Travel times over train count.
    Forward,
    /// Branch loops through the junction.
    Branch,
    /// Safety times over free-segment count.
    Backward,
    /// No finite headway: empty, full, or out of the feasible region.
    NoFlow,
}

impl std::fmt::Display for Binding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Binding::MinSeparation => "min-separation",
            Binding::Forward => "forward",
            Binding::Branch => "branch",
            Binding::Backward => "backward",
            Binding::NoFlow => "no-flow",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct HeadwayReport {
    /// Asymptotic central headway in seconds; +inf when there is no flow.
    pub h0: f64,
    /// Asymptotic frequency in trains per second; 0 when there is no flow.
    pub f0: f64,
    /// Branch headways (junction lines): twice the central headway.
    pub h1: Option<f64>,
    pub h2: Option<f64>,
    pub binding: Binding,
    pub h_fw: f64,
    pub h_min: f64,
    pub h_bw: f64,
    pub h_br: Option<f64>,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        f64::INFINITY
    }
}

fn finish(h_fw: f64, h_min: f64, h_bw: f64, h_br: Option<f64>, branch: bool) -> HeadwayReport {
    // Tie precedence mirrors the phase order: min-separation, then forward,
    // branch, backward.
    let mut h0 = h_min.max(h_fw).max(h_bw);
    if let Some(hb) = h_br {
        h0 = h0.max(hb);
    }
    let binding = if !h0.is_finite() {
        Binding::NoFlow
    } else if h_min >= h0 {
        Binding::MinSeparation
    } else if h_fw >= h0 {
        Binding::Forward
    } else if h_br.is_some_and(|hb| hb >= h0) {
        Binding::Branch
    } else {
        Binding::Backward
    };
    let f0 = if h0.is_finite() { 1.0 / h0 } else { 0.0 };
    HeadwayReport {
        h0,
        f0,
        h1: branch.then_some(2.0 * h0),
        h2: branch.then_some(2.0 * h0),
        binding,
        h_fw,
        h_min,
        h_bw,
        h_br,
    }
}

pub(crate) fn junction_report(
    agg: &Aggregates,
    dims: (i64, i64, i64),
    m: i64,
    dm: i64,
) -> HeadwayReport {
    let (n0, n1, n2) = dims;
    let n = n0 + n1 + n2;
    let dn = n2 - n1;
    let (t0, t1, t2) = (agg.t[0], agg.t[1], agg.t[2]);
    let (s0, s1, s2) = (agg.s[0], agg.s[1], agg.s[2]);
    let m_bar = n - m;
    let dm_bar = dn - dm;
    let h_fw = ratio(t0 + t1, (m - dm) as f64).max(ratio(t0 + t2, (m + dm) as f64));
    let h_bw = ratio(s0 + s1, (m_bar - dm_bar) as f64).max(ratio(s0 + s2, (m_bar + dm_bar) as f64));
    let h_br = ratio(t1 + s2, 2.0 * (n2 - dm) as f64).max(ratio(s1 + t2, 2.0 * (n1 + dm) as f64));
    finish(h_fw, agg.h_min, h_bw, Some(h_br), true)
}

fn ring_report(agg: &Aggregates, n: i64, m: i64) -> HeadwayReport {
    let h_fw = ratio(agg.t[0], m as f64);
    let h_bw = ratio(agg.s[0], (n - m) as f64);
    finish(h_fw, agg.h_min, h_bw, None, false)
}

fn dims(cfg: &LineConfig) -> (i64, i64, i64) {
    (
        cfg.topology.part_len(0) as i64,
        cfg.topology.part_len(1) as i64,
        cfg.topology.part_len(2) as i64,
    )
}

/// Demand-substituted time sums: each travel time becomes the constant
/// demand-law value; safety times are unchanged.
pub fn demand_aggregates(cfg: &LineConfig, margin: Option<f64>) -> Aggregates {
    let rho = margin.unwrap_or(cfg.run_margin);
    Aggregates::from_times(
        &cfg.topology,
        &|u, j| seg_law(cfg, u, j, rho).t_effective(),
        &|u, j| cfg.segment(u, j).s,
    )
}

/// Asymptotic headway of a junction line holding m trains with branch
/// imbalance dm, at the fixed minimum travel times.
///
/// The value is exact when m = dm mod 2 and the binding family is not the
/// branch loop; at odd balance the junction admits each loop only on
/// alternate passes and the true rate can settle below this bound on
/// slower hybrid circuits. The formula never undercuts the dynamics.
pub fn headway_junction(cfg: &LineConfig, m: i64, dm: i64) -> HeadwayReport {
    junction_report(&Aggregates::of(cfg), dims(cfg), m, dm)
}

/// Same under the demand-dependent dwell/run law.
pub fn headway_junction_demand(
    cfg: &LineConfig,
    m: i64,
    dm: i64,
    margin: Option<f64>,
) -> HeadwayReport {
    junction_report(&demand_aggregates(cfg, margin), dims(cfg), m, dm)
}

/// Asymptotic headway of a ring holding m trains.
pub fn headway_linear(cfg: &LineConfig, m: i64) -> HeadwayReport {
    let n = cfg.topology.capacity() as i64;
    ring_report(&Aggregates::of(cfg), n, m)
}

/// Same under the demand-dependent dwell/run law.
pub fn headway_linear_demand(cfg: &LineConfig, m: i64, margin: Option<f64>) -> HeadwayReport {
    let n = cfg.topology.capacity() as i64;
    ring_report(&demand_aggregates(cfg, margin), n, m)
}

/// Dispatch on the configured topology.
pub fn headway(cfg: &LineConfig, m: i64, dm: i64) -> HeadwayReport {
    match cfg.topology {
        Topology::Ring { .. } => headway_linear(cfg, m),
        Topology::Junction { .. } => headway_junction(cfg, m, dm),
    }
}
