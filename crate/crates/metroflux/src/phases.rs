//! Traffic phases of a junction line in the (m, dm) plane.
//!
//! The asymptotic frequency over train count m and branch imbalance dm is a
//! min of affine planes, one per binding family and side. Eight phases tile
//! the plane: two free-flow (I), two branch-limited (II), two congested
//! (III), the max-frequency plateau (IV-a), and zero flow outside the
//! feasibility hexagon (IV-b). This module classifies points, evaluates the
//! plane formulas, computes the polygon geometry, and sweeps grids for the
//! fundamental diagram.

use crate::line::{Aggregates, Topology};
use crate::steady::{junction_report, Binding, HeadwayReport};

/// One of the eight traffic phases.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    /// Free flow on the central part and branch 1; branch 2 overloaded.
    IA,
    /// Free flow on the central part and branch 2; branch 1 overloaded.
    IB,
    /// Branch imbalance too high: the loop through branch 2 caps the rate.
    IIA,
    /// Branch imbalance too low: the loop through branch 1 caps the rate.
    IIB,
    /// Congestion on branch 2 and the central part.
    IIIA,
    /// Congestion on branch 1 and the central part.
    IIIB,
    /// Maximum frequency: a single segment's separation time binds.
    IVA,
    /// Zero flow: outside or on the border of the feasibility hexagon.
    IVB,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Phase::IA => "I-a",
            Phase::IB => "I-b",
            Phase::IIA => "II-a",
            Phase::IIB => "II-b",
            Phase::IIIA => "III-a",
            Phase::IIIB => "III-b",
            Phase::IVA => "IV-a",
            Phase::IVB => "IV-b",
        };
        f.write_str(s)
    }
}

/// A straight line dm = slope * m + intercept in the (m, dm) plane.
#[derive(Clone, Copy, Debug)]
pub struct BoundaryLine {
    pub label: &'static str,
    pub slope: f64,
    pub intercept: f64,
}

/// Vertices and boundary lines of the feasibility hexagon ABCDEF, the
/// max-frequency polygon GHIJKL inside it, and the six phase-dividing lines.
#[derive(Clone, Debug)]
pub struct PolygonGeometry {
    /// A, B, C, D, E, F counter-clockwise; f = 0 on the border.
    pub outer: [(f64, f64); 6],
    /// G, H, I, J, K, L counter-clockwise; f = f_max on and inside.
    pub inner: [(f64, f64); 6],
    /// Maximum frequency 1/h_min in trains per second.
    pub f_max: f64,
    /// AB, BC, CD, DE, EF, FA.
    pub outer_lines: [BoundaryLine; 6],
    /// GH, HI, IJ, JK, KL, LG.
    pub inner_lines: [BoundaryLine; 6],
    /// AG, BH, CI, DJ, EK, FL separating adjacent phases.
    pub dividing_lines: [BoundaryLine; 6],
    /// Labels of dividing lines with a vanishing denominator (vertical).
    pub degenerate: Vec<&'static str>,
}

fn junction_dims(topo: &Topology) -> (i64, i64, i64) {
    match *topo {
        Topology::Junction { n0, n1, n2 } => (n0 as i64, n1 as i64, n2 as i64),
        Topology::Ring { .. } => panic!("phase diagram needs a junction line"),
    }
}

/// Closed-form report for aggregate times at a junction point.
pub fn report_at(agg: &Aggregates, topo: &Topology, m: i64, dm: i64) -> HeadwayReport {
    junction_report(agg, junction_dims(topo), m, dm)
}

/// Phase of the integer point (m, dm). Points outside or on the hexagon
/// border are IV-b. Boundary ties go to the earlier phase in the order
/// IV-a, I, II, III, and to the a-side within a family.
pub fn classify(agg: &Aggregates, topo: &Topology, m: i64, dm: i64) -> Phase {
    let r = report_at(agg, topo, m, dm);
    let (n0, n1, n2) = junction_dims(topo);
    let [t0, t1, t2] = agg.t;
    let [s0, s1, s2] = agg.s;
    let (mf, dmf) = (m as f64, dm as f64);
    match r.binding {
        Binding::NoFlow => Phase::IVB,
        Binding::MinSeparation => Phase::IVA,
        Binding::Forward => {
            if ratio(t0 + t1, mf - dmf) >= ratio(t0 + t2, mf + dmf) {
                Phase::IA
            } else {
                Phase::IB
            }
        }
        Binding::Branch => {
            if ratio(t1 + s2, 2.0 * (n2 as f64 - dmf)) >= ratio(s1 + t2, 2.0 * (n1 as f64 + dmf)) {
                Phase::IIA
            } else {
                Phase::IIB
            }
        }
        Binding::Backward => {
            let mbar = (n0 + n1 + n2) as f64 - mf;
            let dmbar = (n2 - n1) as f64 - dmf;
            if ratio(s0 + s2, mbar + dmbar) >= ratio(s0 + s1, mbar - dmbar) {
                Phase::IIIA
            } else {
                Phase::IIIB
            }
        }
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        f64::INFINITY
    }
}

/// Frequency in trains per second given by the phase's plane formula at
/// (m, dm). Matches the closed-form f0 at every point by construction of
/// the classification; the sweep asserts that identity.
pub fn plane_frequency(phase: Phase, agg: &Aggregates, topo: &Topology, m: i64, dm: i64) -> f64 {
    let (n0, n1, n2) = junction_dims(topo);
    let [t0, t1, t2] = agg.t;
    let [s0, s1, s2] = agg.s;
    let (mf, dmf) = (m as f64, dm as f64);
    let mbar = (n0 + n1 + n2) as f64 - mf;
    let dmbar = (n2 - n1) as f64 - dmf;
    match phase {
        Phase::IA => (mf - dmf) / (t0 + t1),
        Phase::IB => (mf + dmf) / (t0 + t2),
        Phase::IIA => 2.0 * (n2 as f64 - dmf) / (t1 + s2),
        Phase::IIB => 2.0 * (n1 as f64 + dmf) / (s1 + t2),
        Phase::IIIA => (mbar + dmbar) / (s0 + s2),
        Phase::IIIB => (mbar - dmbar) / (s0 + s1),
        Phase::IVA => 1.0 / agg.h_min,
        Phase::IVB => 0.0,
    }
}

/// All polygon vertices and boundary lines for the given aggregates.
pub fn polygon_points(agg: &Aggregates, topo: &Topology) -> PolygonGeometry {
    let (n0i, n1i, n2i) = junction_dims(topo);
    let (n0, n1, n2) = (n0i as f64, n1i as f64, n2i as f64);
    let n = n0 + n1 + n2;
    let dn = n2 - n1;
    let [t0, t1, t2] = agg.t;
    let [s0, s1, s2] = agg.s;
    let h = agg.h_min;
    let f_max = 1.0 / h;
    let t_cap = (2.0 * t0 + t1 + t2) / 2.0;
    let dt = t2 - t1;
    let s_cap = (2.0 * s0 + s1 + s2) / 2.0;
    let ds = s2 - s1;

    let outer = [
        (0.0, 0.0),
        (n1, -n1),
        (n0 + n1, -n1),
        (n, dn),
        (n0 + n2, n2),
        (n2, n2),
    ];
    let dm_hi = (s1 + t2) / (2.0 * h) - n1;
    let dm_kl = n2 - (t1 + s2) / (2.0 * h);
    let inner = [
        (t_cap * f_max, dt * f_max / 2.0),
        ((2.0 * t0 + t2 - s1) / (2.0 * h) + n1, dm_hi),
        (n0 + n1 + (t2 - 2.0 * s0 - s1) / (2.0 * h), dm_hi),
        (n - (2.0 * s0 + s1 + s2) / (2.0 * h), dn - ds / (2.0 * h)),
        (n0 + n2 + (t1 - 2.0 * s0 - s2) / (2.0 * h), dm_kl),
        ((2.0 * t0 + t1 - s2) / (2.0 * h) + n2, dm_kl),
    ];

    let line = |label, slope, intercept| BoundaryLine { label, slope, intercept };
    let outer_lines = [
        line("AB", -1.0, 0.0),
        line("BC", 0.0, -n1),
        line("CD", 1.0, -(n0 + 2.0 * n1)),
        line("DE", -1.0, n0 + 2.0 * n2),
        line("EF", 0.0, n2),
        line("FA", 1.0, 0.0),
    ];
    let inner_lines = [
        line("GH", -1.0, (t0 + t2) / h),
        line("HI", 0.0, dm_hi),
        line("IJ", 1.0, (s0 + s1) / h - (n0 + 2.0 * n1)),
        line("JK", -1.0, n0 + 2.0 * n2 - (s0 + s2) / h),
        line("KL", 0.0, dm_kl),
        line("LG", 1.0, -(t0 + t1) / h),
    ];

    // Dividing lines: dm as an affine function of m; a vanishing denominator
    // makes the line vertical and is flagged instead of inventing a slope.
    let mut degenerate = Vec::new();
    let d_bh = s1 - 2.0 * t0 - t2;
    let d_ci = 2.0 * s0 + s1 - t2;
    let d_ek = 2.0 * s0 + s2 - t1;
    let d_fl = s2 - 2.0 * t0 - t1;
    for (label, d) in [("BH", d_bh), ("CI", d_ci), ("EK", d_ek), ("FL", d_fl)] {
        if d == 0.0 {
            degenerate.push(label);
        }
    }
    let dividing_lines = [
        line("AG", dt / (2.0 * t_cap), 0.0),
        line("BH", -(s1 + t2) / d_bh, 2.0 * n1 * (t0 + t2) / d_bh),
        line(
            "CI",
            -(s1 + t2) / d_ci,
            (-2.0 * n1 * (s0 - t2) + (s1 + t2) * n0) / d_ci,
        ),
        line("DJ", ds / (2.0 * s_cap), dn - ds * n / (2.0 * s_cap)),
        line(
            "EK",
            -(s2 + t1) / d_ek,
            (2.0 * n2 * (s0 - t1) + (s2 + t1) * n0) / d_ek,
        ),
        line("FL", (s2 + t1) / d_fl, -2.0 * n2 * (t0 + t1) / d_fl),
    ];

    PolygonGeometry {
        outer,
        inner,
        f_max,
        outer_lines,
        inner_lines,
        dividing_lines,
        degenerate,
    }
}

/// Optimal branch imbalance for a given train count: a single value off the
/// max-frequency plateau, the whole admissible interval on it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DmOptimum {
    pub lo: f64,
    pub hi: f64,
}

impl DmOptimum {
    pub fn is_interval(&self) -> bool {
        self.hi > self.lo
    }
}

/// Imbalance maximizing the asymptotic frequency at train count m: along the
/// free-flow ridge for small m, along the congestion ridge for large m, and
/// anywhere on the plateau slice in between.
pub fn optimal_dm(agg: &Aggregates, topo: &Topology, m: f64) -> DmOptimum {
    let (n0i, n1i, n2i) = junction_dims(topo);
    let (n0, n1, n2) = (n0i as f64, n1i as f64, n2i as f64);
    let n = n0 + n1 + n2;
    let dn = n2 - n1;
    let [t0, t1, t2] = agg.t;
    let [s0, s1, s2] = agg.s;
    let h = agg.h_min;
    let t_cap = (2.0 * t0 + t1 + t2) / 2.0;
    let s_cap = (2.0 * s0 + s1 + s2) / 2.0;
    let m_star = t_cap / h;
    let m_right = n - s_cap / h;
    if m <= m_star {
        let dm = (t2 - t1) / (2.0 * t_cap) * m;
        DmOptimum { lo: dm, hi: dm }
    } else if m >= m_right {
        let dm = dn + (s2 - s1) / (2.0 * s_cap) * (m - n);
        DmOptimum { lo: dm, hi: dm }
    } else {
        // Plateau slice: dm bounded by the six plane inequalities at f_max.
        let lo = ((t0 + t2) / h - m)
            .max((s1 + t2) / (2.0 * h) - n1)
            .max(m - n + dn + (s0 + s1) / h);
        let hi = (m - (t0 + t1) / h)
            .min(n2 - (t1 + s2) / (2.0 * h))
            .min(n + dn - m - (s0 + s2) / h);
        DmOptimum { lo, hi }
    }
}

/// One grid cell of the fundamental diagram.
#[derive(Clone, Copy, Debug)]
pub struct SweepRow {
    pub m: i64,
    pub dm: i64,
    /// Trains per hour.
    pub f0: f64,
    /// Seconds; +inf where there is no flow.
    pub h0: f64,
    pub phase: Phase,
}

/// Evaluate the diagram over an integer grid. Rows are in m-major order.
pub fn sweep(
    agg: &Aggregates,
    topo: &Topology,
    m_range: std::ops::RangeInclusive<i64>,
    dm_range: std::ops::RangeInclusive<i64>,
) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    for m in m_range {
        for dm in dm_range.clone() {
            let r = report_at(agg, topo, m, dm);
            rows.push(SweepRow {
                m,
                dm,
                f0: r.f0 * 3600.0,
                h0: r.h0,
                phase: classify(agg, topo, m, dm),
            });
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::line::LineConfig;

    fn uniform(n0: usize, n1: usize, n2: usize, t: f64, s: f64) -> LineConfig {
        let mut text = format!("[line]\nn0 = {n0}\nn1 = {n1}\nn2 = {n2}\n");
        for (u, len) in [(0, n0), (1, n1), (2, n2)] {
            for j in 1..=len {
                text.push_str(&format!("[segment u={u} j={j}]\nr = {t}\ns = {s}\n"));
            }
        }
        LineConfig::parse(&text).unwrap()
    }

    fn asym(n0: usize, n1: usize, n2: usize) -> LineConfig {
        let mut text = format!("[line]\nn0 = {n0}\nn1 = {n1}\nn2 = {n2}\n");
        for (u, len) in [(0, n0), (1, n1), (2, n2)] {
            for j in 1..=len {
                let t = 40.0 + 7.0 * u as f64 + 3.0 * (j % 3) as f64;
                let s = 15.0 + 2.0 * u as f64 + (j % 2) as f64;
                text.push_str(&format!("[segment u={u} j={j}]\nr = {t}\ns = {s}\n"));
            }
        }
        LineConfig::parse(&text).unwrap()
    }

    #[test]
    fn zero_and_full_are_no_flow() {
        let cfg = uniform(4, 4, 4, 60.0, 30.0);
        let agg = Aggregates::of(&cfg);
        assert_eq!(classify(&agg, &cfg.topology, 0, 0), Phase::IVB);
        assert_eq!(classify(&agg, &cfg.topology, 12, 0), Phase::IVB);
        // Hexagon border has zero flow too.
        assert_eq!(classify(&agg, &cfg.topology, 3, 3), Phase::IVB);
        assert_eq!(classify(&agg, &cfg.topology, 4, -4), Phase::IVB);
    }

    #[test]
    fn plane_formula_matches_closed_form_everywhere() {
        for cfg in [uniform(4, 4, 4, 60.0, 30.0), asym(6, 4, 6), asym(8, 6, 4)] {
            let agg = Aggregates::of(&cfg);
            let topo = &cfg.topology;
            let (n0, n1, n2) = junction_dims(topo);
            for m in 0..=(n0 + n1 + n2) {
                for dm in -n1 - 1..=n2 + 1 {
                    let phase = classify(&agg, topo, m, dm);
                    let f_plane = plane_frequency(phase, &agg, topo, m, dm);
                    let r = report_at(&agg, topo, m, dm);
                    assert!(
                        (f_plane - r.f0).abs() < 1e-9,
                        "m={m} dm={dm} {phase}: plane {f_plane} vs closed {}",
                        r.f0
                    );
                }
            }
        }
    }

    #[test]
    fn symmetric_line_is_mirror_symmetric() {
        let cfg = uniform(6, 6, 6, 45.0, 15.0);
        let agg = Aggregates::of(&cfg);
        let topo = &cfg.topology;
        let g = polygon_points(&agg, topo);
        assert!(g.inner[0].1.abs() < 1e-12, "G off the dm=0 axis");
        let rows = sweep(&agg, topo, 0..=18, -6..=6);
        for r in &rows {
            let mirror = rows
                .iter()
                .find(|q| q.m == r.m && q.dm == -r.dm)
                .unwrap();
            assert!((r.f0 - mirror.f0).abs() < 1e-9);
            // Mirrored phases swap their a/b sides.
            let swapped = match mirror.phase {
                Phase::IA => Phase::IB,
                Phase::IB => Phase::IA,
                Phase::IIA => Phase::IIB,
                Phase::IIB => Phase::IIA,
                Phase::IIIA => Phase::IIIB,
                Phase::IIIB => Phase::IIIA,
                p => p,
            };
            // Ties resolve to the a-side on both wings, so compare values,
            // not labels, on the axis.
            if r.dm != 0 {
                assert_eq!(r.phase, swapped, "m={} dm={}", r.m, r.dm);
            }
        }
    }

    #[test]
    fn plateau_is_flat_at_f_max() {
        let cfg = uniform(6, 6, 6, 45.0, 15.0);
        let agg = Aggregates::of(&cfg);
        let topo = &cfg.topology;
        let f_max = 1.0 / agg.h_min;
        let mut plateau = 0;
        for m in 0..=18 {
            for dm in -6..=6 {
                if classify(&agg, topo, m, dm) == Phase::IVA {
                    plateau += 1;
                    let r = report_at(&agg, topo, m, dm);
                    assert!((r.f0 - f_max).abs() < 1e-12);
                }
            }
        }
        assert!(plateau > 0, "no IV-a points on the toy grid");
    }

    #[test]
    fn inner_hexagon_sides_hi_and_kl_are_horizontal() {
        let cfg = asym(6, 4, 6);
        let agg = Aggregates::of(&cfg);
        let g = polygon_points(&agg, &cfg.topology);
        assert_eq!(g.inner_lines[1].slope, 0.0);
        assert_eq!(g.inner_lines[4].slope, 0.0);
        assert!((g.inner[1].1 - g.inner[2].1).abs() < 1e-12);
        assert!((g.inner[4].1 - g.inner[5].1).abs() < 1e-12);
        assert!(g.degenerate.is_empty());
    }

    #[test]
    fn optimal_dm_attains_grid_max() {
        for cfg in [uniform(6, 6, 6, 45.0, 15.0), asym(6, 4, 6)] {
            let agg = Aggregates::of(&cfg);
            let topo = &cfg.topology;
            let (n0, n1, n2) = junction_dims(topo);
            for m in 1..(n0 + n1 + n2) {
                let best = (-n1..=n2)
                    .map(|dm| report_at(&agg, topo, m, dm).f0)
                    .fold(0.0f64, f64::max);
                let opt = optimal_dm(&agg, topo, m as f64);
                let cand = [opt.lo.floor(), opt.lo.ceil(), opt.hi.floor(), opt.hi.ceil()];
                let at_opt = cand
                    .iter()
                    .map(|&dm| report_at(&agg, topo, m, dm as i64).f0)
                    .fold(0.0f64, f64::max);
                assert!(
                    (best - at_opt).abs() < 1e-9,
                    "m={m}: grid best {best} vs optimum neighborhood {at_opt}"
                );
            }
        }
    }

    #[test]
    fn plateau_interval_reported_between_ridges() {
        let cfg = uniform(6, 6, 6, 45.0, 15.0);
        let agg = Aggregates::of(&cfg);
        let topo = &cfg.topology;
        // h_min = 60, T = 540, S = 180: plateau between m = 9 and m = 15.
        let m_star = 540.0 / 60.0;
        let m_right = 18.0 - 180.0 / 60.0;
        let below = optimal_dm(&agg, topo, m_star - 1.0);
        assert!(!below.is_interval());
        let mid = optimal_dm(&agg, topo, (m_star + m_right) / 2.0);
        assert!(mid.is_interval());
        // Every integer dm inside the interval sits on the plateau.
        let m_mid = ((m_star + m_right) / 2.0) as i64;
        for dm in (mid.lo.ceil() as i64)..=(mid.hi.floor() as i64) {
            assert_eq!(classify(&agg, topo, m_mid, dm), Phase::IVA);
        }
        let above = optimal_dm(&agg, topo, m_right + 1.0);
        assert!(!above.is_interval());
    }
}
