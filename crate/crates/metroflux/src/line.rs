//! Line description: topology, per-segment times, passenger demand, the
//! text config format, and initial train placement.
//!
//! A line is either a closed ring (one part, u = 0) or a junction line:
//! a central part (u = 0) whose ends are a divergence and a convergence
//! point, plus two branches (u = 1, 2) closing the loop. Segment (u, j)
//! runs from node (u, j-1) to node (u, j); its travel time lower bound is
//! t = r + w (run plus dwell) and its safety separation is s. Branch node
//! (u, 0) is the divergence node (0, n0) and (u, n_u) is the convergence
//! node (0, 0).

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("{0}")]
    Semantic(String),
}

fn syntax(line: usize, msg: impl Into<String>) -> ConfigError {
    ConfigError::Syntax { line, msg: msg.into() }
}

/// One `[name attr=value ...]` section with its body lines.
#[derive(Clone, Debug)]
pub struct RawSection {
    pub name: String,
    pub attrs: Vec<(String, String)>,
    pub body: Vec<BodyLine>,
    pub line: usize,
}

#[derive(Clone, Debug)]
pub struct BodyLine {
    pub key: String,
    pub value: String,
    pub line: usize,
}

impl RawSection {
    pub fn attr(&self, key: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn attr_usize(&self, key: &str) -> Result<usize, ConfigError> {
        let v = self
            .attr(key)
            .ok_or_else(|| syntax(self.line, format!("[{}] requires attribute {key}", self.name)))?;
        v.parse()
            .map_err(|_| syntax(self.line, format!("attribute {key}: expected integer, got {v:?}")))
    }

    pub fn attr_i64(&self, key: &str) -> Result<i64, ConfigError> {
        let v = self
            .attr(key)
            .ok_or_else(|| syntax(self.line, format!("[{}] requires attribute {key}", self.name)))?;
        v.parse()
            .map_err(|_| syntax(self.line, format!("attribute {key}: expected integer, got {v:?}")))
    }

    pub fn get(&self, key: &str) -> Option<&BodyLine> {
        self.body.iter().find(|b| b.key == key)
    }
}

/// Parse the generic section format: `[name k=v ...]` headers, `key = value`
/// body lines, `#` comments, blank lines ignored.
pub fn parse_sections(text: &str) -> Result<Vec<RawSection>, ConfigError> {
    let mut sections: Vec<RawSection> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(inner) = line.strip_prefix('[') {
            let inner = inner
                .strip_suffix(']')
                .ok_or_else(|| syntax(lineno, "unterminated section header"))?
                .trim();
            let mut toks = inner.split_whitespace();
            let name = toks
                .next()
                .ok_or_else(|| syntax(lineno, "empty section header"))?
                .to_string();
            let mut attrs = Vec::new();
            for tok in toks {
                let (k, v) = tok
                    .split_once('=')
                    .ok_or_else(|| syntax(lineno, format!("bad attribute {tok:?}, expected key=value")))?;
                attrs.push((k.to_string(), v.to_string()));
            }
            sections.push(RawSection { name, attrs, body: Vec::new(), line: lineno });
        } else {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| syntax(lineno, format!("expected `key = value`, got {line:?}")))?;
            let sec = sections
                .last_mut()
                .ok_or_else(|| syntax(lineno, "value outside any section"))?;
            sec.body.push(BodyLine {
                key: k.trim().to_string(),
                value: v.trim().to_string(),
                line: lineno,
            });
        }
    }
    Ok(sections)
}

/// Parse a duration value: bare numbers are seconds; `s` and `min` suffixes
/// are accepted.
pub fn parse_time(value: &str, line: usize) -> Result<f64, ConfigError> {
    let v = value.trim();
    let (num, mult) = if let Some(p) = v.strip_suffix("min") {
        (p, 60.0)
    } else if let Some(p) = v.strip_suffix('s') {
        (p, 1.0)
    } else {
        (v, 1.0)
    };
    num.trim()
        .parse::<f64>()
        .map(|x| x * mult)
        .map_err(|_| syntax(line, format!("expected a duration, got {value:?}")))
}

pub fn parse_number(value: &str, line: usize) -> Result<f64, ConfigError> {
    value
        .trim()
        .parse::<f64>()
        .map_err(|_| syntax(line, format!("expected a number, got {value:?}")))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Topology {
    /// Closed ring of n0 segments (nodes 0..n0-1).
    Ring { n0: usize },
    /// Central part of n0 segments plus two branches of n1 and n2 segments.
    Junction { n0: usize, n1: usize, n2: usize },
}

impl Topology {
    /// Number of segments, which is also the train capacity.
    pub fn capacity(&self) -> usize {
        match *self {
            Topology::Ring { n0 } => n0,
            Topology::Junction { n0, n1, n2 } => n0 + n1 + n2,
        }
    }

    /// Branch imbalance capacity dn = n2 - n1 (0 for a ring).
    pub fn dn(&self) -> i64 {
        match *self {
            Topology::Ring { .. } => 0,
            Topology::Junction { n1, n2, .. } => n2 as i64 - n1 as i64,
        }
    }

    /// Number of distinct nodes carrying departure variables.
    pub fn dim(&self) -> usize {
        match *self {
            Topology::Ring { n0 } => n0,
            Topology::Junction { n0, n1, n2 } => n0 + n1 + n2 - 1,
        }
    }

    pub fn parts(&self) -> &'static [u8] {
        match self {
            Topology::Ring { .. } => &[0],
            Topology::Junction { .. } => &[0, 1, 2],
        }
    }

    pub fn part_len(&self, u: u8) -> usize {
        match (*self, u) {
            (Topology::Ring { n0 }, 0) => n0,
            (Topology::Junction { n0, .. }, 0) => n0,
            (Topology::Junction { n1, .. }, 1) => n1,
            (Topology::Junction { n2, .. }, 2) => n2,
            _ => panic!("part {u} does not exist"),
        }
    }

    /// All segment ids (u, j), j = 1..=part length, central first.
    pub fn segments(&self) -> Vec<(u8, usize)> {
        let mut out = Vec::new();
        for &u in self.parts() {
            for j in 1..=self.part_len(u) {
                out.push((u, j));
            }
        }
        out
    }

    /// Fold branch endpoint aliases onto the shared central nodes:
    /// (u, 0) is the divergence (0, n0) and (u, n_u) the convergence (0, 0).
    pub fn resolve(&self, u: u8, j: usize) -> (u8, usize) {
        match *self {
            Topology::Ring { n0 } => (0, j % n0),
            Topology::Junction { .. } if u == 0 => (0, j),
            Topology::Junction { .. } if j == 0 => (0, self.part_len(0)),
            t @ Topology::Junction { .. } if j == t.part_len(u) => (0, 0),
            _ => (u, j),
        }
    }

    /// Dense index of node (u, j): central 0..=n0, then branch interiors.
    pub fn node_index(&self, u: u8, j: usize) -> usize {
        let (u, j) = self.resolve(u, j);
        match *self {
            Topology::Ring { .. } => j,
            Topology::Junction { n0, n1, .. } => match u {
                0 => j,
                1 => n0 + 1 + (j - 1),
                2 => n0 + n1 + (j - 1),
                _ => unreachable!(),
            },
        }
    }

    /// All distinct nodes (u, j) in index order.
    pub fn nodes(&self) -> Vec<(u8, usize)> {
        match *self {
            Topology::Ring { n0 } => (0..n0).map(|j| (0, j)).collect(),
            Topology::Junction { n0, n1, n2 } => {
                let mut v: Vec<(u8, usize)> = (0..=n0).map(|j| (0, j)).collect();
                v.extend((1..n1).map(|j| (1, j)));
                v.extend((1..n2).map(|j| (2, j)));
                v
            }
        }
    }
}

/// Times of one segment. `g_min`/`g_max` bound the time gap used by the
/// demand-dependent laws; `g_min` defaults to r + s.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub r: f64,
    pub w: f64,
    pub s: f64,
    pub g_min: f64,
    pub g_max: Option<f64>,
    pub platform: bool,
}

impl Segment {
    /// Travel time lower bound of the fixed-time model.
    pub fn t(&self) -> f64 {
        self.r + self.w
    }
}

/// Passenger demand at a segment's platform.
#[derive(Clone, Debug, PartialEq)]
pub struct Demand {
    pub lambda_in: f64,
    pub lambda_out: f64,
    pub alpha_in: f64,
    pub alpha_out: f64,
    /// Passengers per hour on the segment, for capacity sizing.
    pub charge: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct LineConfig {
    pub topology: Topology,
    /// Dwell and run margin as a fraction of the minimum run time.
    pub run_margin: f64,
    /// Train capacity in passengers.
    pub kappa: f64,
    pub segments: BTreeMap<(u8, usize), Segment>,
    pub demands: BTreeMap<(u8, usize), Demand>,
}

impl LineConfig {
    pub fn parse(text: &str) -> Result<LineConfig, ConfigError> {
        let sections = parse_sections(text)?;
        Self::from_sections(&sections)
    }

    pub fn from_sections(sections: &[RawSection]) -> Result<LineConfig, ConfigError> {
        let mut line_sec: Option<&RawSection> = None;
        let mut seg_secs: Vec<&RawSection> = Vec::new();
        let mut dem_secs: Vec<&RawSection> = Vec::new();
        for sec in sections {
            match sec.name.as_str() {
                "line" => {
                    if line_sec.is_some() {
                        return Err(syntax(sec.line, "duplicate [line] section"));
                    }
                    line_sec = Some(sec);
                }
                "segment" => seg_secs.push(sec),
                "demand" => dem_secs.push(sec),
                other => {
                    return Err(syntax(sec.line, format!("unknown section [{other}] in a line config")))
                }
            }
        }
        let line_sec =
            line_sec.ok_or_else(|| ConfigError::Semantic("missing [line] section".into()))?;

        let mut n0 = None;
        let mut n1 = None;
        let mut n2 = None;
        let mut run_margin = 0.0;
        let mut kappa = 1.0;
        for b in &line_sec.body {
            match b.key.as_str() {
                "n0" => n0 = Some(parse_number(&b.value, b.line)? as usize),
                "n1" => n1 = Some(parse_number(&b.value, b.line)? as usize),
                "n2" => n2 = Some(parse_number(&b.value, b.line)? as usize),
                "run_margin" => run_margin = parse_number(&b.value, b.line)?,
                "kappa" => kappa = parse_number(&b.value, b.line)?,
                other => return Err(syntax(b.line, format!("unknown [line] key {other:?}"))),
            }
        }
        let n0 = n0.ok_or_else(|| syntax(line_sec.line, "[line] requires n0"))?;
        let topology = match (n1, n2) {
            (None, None) => {
                if n0 < 2 {
                    return Err(syntax(line_sec.line, "ring needs n0 >= 2"));
                }
                Topology::Ring { n0 }
            }
            (Some(n1), Some(n2)) => {
                for (name, v) in [("n0", n0), ("n1", n1), ("n2", n2)] {
                    if v < 2 || v % 2 != 0 {
                        return Err(syntax(
                            line_sec.line,
                            format!("junction part sizes must be even and >= 2; {name} = {v}"),
                        ));
                    }
                }
                Topology::Junction { n0, n1, n2 }
            }
            _ => {
                return Err(syntax(
                    line_sec.line,
                    "set both n1 and n2 for a junction line, or neither for a ring",
                ))
            }
        };
        if run_margin < 0.0 {
            return Err(syntax(line_sec.line, "run_margin must be >= 0"));
        }
        if kappa <= 0.0 {
            return Err(syntax(line_sec.line, "kappa must be > 0"));
        }

        let mut segments = BTreeMap::new();
        for sec in seg_secs {
            let u = sec.attr_usize("u")? as u8;
            let j = sec.attr_usize("j")?;
            let valid = topology.parts().contains(&u) && j >= 1 && j <= topology.part_len(u);
            if !valid {
                return Err(syntax(sec.line, format!("segment (u={u}, j={j}) is outside the line")));
            }
            let mut r = None;
            let mut w = 0.0;
            let mut s = None;
            let mut g_min = None;
            let mut g_max = None;
            let mut platform = false;
            for b in &sec.body {
                match b.key.as_str() {
                    "r" => r = Some(parse_time(&b.value, b.line)?),
                    "w" => w = parse_time(&b.value, b.line)?,
                    "s" => s = Some(parse_time(&b.value, b.line)?),
                    "g_min" => g_min = Some(parse_time(&b.value, b.line)?),
                    "g_max" => g_max = Some(parse_time(&b.value, b.line)?),
                    "platform" => {
                        platform = match b.value.as_str() {
                            "true" => true,
                            "false" => false,
                            v => return Err(syntax(b.line, format!("platform: expected true/false, got {v:?}"))),
                        }
                    }
                    other => return Err(syntax(b.line, format!("unknown [segment] key {other:?}"))),
                }
            }
            let r = r.ok_or_else(|| syntax(sec.line, format!("segment (u={u}, j={j}) needs r")))?;
            let s = s.ok_or_else(|| syntax(sec.line, format!("segment (u={u}, j={j}) needs s")))?;
            if r <= 0.0 || s <= 0.0 || w < 0.0 {
                return Err(syntax(sec.line, format!("segment (u={u}, j={j}): need r > 0, s > 0, w >= 0")));
            }
            let g_min = g_min.unwrap_or(r + s);
            if let Some(gm) = g_max {
                if gm < g_min {
                    return Err(syntax(sec.line, format!("segment (u={u}, j={j}): g_max < g_min")));
                }
            }
            if segments
                .insert((u, j), Segment { r, w, s, g_min, g_max, platform })
                .is_some()
            {
                return Err(syntax(sec.line, format!("duplicate segment (u={u}, j={j})")));
            }
        }
        for (u, j) in topology.segments() {
            if !segments.contains_key(&(u, j)) {
                return Err(ConfigError::Semantic(format!(
                    "({u}, {j}) gap: no [segment u={u} j={j}] section"
                )));
            }
        }

        let mut demands = BTreeMap::new();
        for sec in dem_secs {
            let u = sec.attr_usize("u")? as u8;
            let j = sec.attr_usize("j")?;
            if !segments.contains_key(&(u, j)) {
                return Err(syntax(sec.line, format!("demand for unknown segment (u={u}, j={j})")));
            }
            let mut lambda_in = 0.0;
            let mut lambda_out = 0.0;
            let mut alpha_in = None;
            let mut alpha_out = None;
            let mut charge = None;
            for b in &sec.body {
                match b.key.as_str() {
                    "lambda_in" => lambda_in = parse_number(&b.value, b.line)?,
                    "lambda_out" => lambda_out = parse_number(&b.value, b.line)?,
                    "alpha_in" => alpha_in = Some(parse_number(&b.value, b.line)?),
                    "alpha_out" => alpha_out = Some(parse_number(&b.value, b.line)?),
                    "charge" => charge = Some(parse_number(&b.value, b.line)?),
                    other => return Err(syntax(b.line, format!("unknown [demand] key {other:?}"))),
                }
            }
            let alpha_in = alpha_in
                .ok_or_else(|| syntax(sec.line, format!("demand (u={u}, j={j}) needs alpha_in")))?;
            let alpha_out = alpha_out
                .ok_or_else(|| syntax(sec.line, format!("demand (u={u}, j={j}) needs alpha_out")))?;
            if alpha_in <= 0.0 || alpha_out <= 0.0 || lambda_in < 0.0 || lambda_out < 0.0 {
                return Err(syntax(sec.line, format!("demand (u={u}, j={j}): need alpha > 0, lambda >= 0")));
            }
            let x = lambda_out / alpha_out + lambda_in / alpha_in;
            if x >= 1.0 {
                return Err(syntax(
                    sec.line,
                    format!("demand (u={u}, j={j}): arrival/service ratio {x:.3} >= 1, platform saturates"),
                ));
            }
            if demands
                .insert((u, j), Demand { lambda_in, lambda_out, alpha_in, alpha_out, charge })
                .is_some()
            {
                return Err(syntax(sec.line, format!("duplicate demand (u={u}, j={j})")));
            }
        }

        Ok(LineConfig { topology, run_margin, kappa, segments, demands })
    }

    pub fn segment(&self, u: u8, j: usize) -> &Segment {
        &self.segments[&(u, j)]
    }
}

/// Per-part sums of the fixed-time model and the minimum-separation headway.
#[derive(Clone, Debug)]
pub struct Aggregates {
    /// Travel time sums per part (seconds).
    pub t: [f64; 3],
    /// Safety time sums per part (seconds).
    pub s: [f64; 3],
    /// Largest headway forced by a single segment at any train count.
    pub h_min: f64,
}

impl Aggregates {
    pub fn of(cfg: &LineConfig) -> Aggregates {
        let t_of = |u: u8, j: usize| cfg.segment(u, j).t();
        let s_of = |u: u8, j: usize| cfg.segment(u, j).s;
        Self::from_times(&cfg.topology, &t_of, &s_of)
    }

    /// Build from arbitrary per-segment travel/safety times, so the demand
    /// model can reuse the same shapes with effective travel times.
    pub fn from_times(
        topo: &Topology,
        t_of: &dyn Fn(u8, usize) -> f64,
        s_of: &dyn Fn(u8, usize) -> f64,
    ) -> Aggregates {
        let mut t = [0.0f64; 3];
        let mut s = [0.0f64; 3];
        let mut h_min = 0.0f64;
        for &u in topo.parts() {
            let len = topo.part_len(u);
            for j in 1..=len {
                t[u as usize] += t_of(u, j);
                s[u as usize] += s_of(u, j);
                let pair = t_of(u, j) + s_of(u, j);
                let bound = if u == 0 {
                    pair
                } else if j < len {
                    // Branch events alternate, so one segment holds a train
                    // for two central departures.
                    pair / 2.0
                } else {
                    continue;
                };
                h_min = h_min.max(bound);
            }
        }
        Aggregates { t, s, h_min }
    }
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum PlaceError {
    #[error("{m} trains exceed the line capacity {cap}")]
    OverCapacity { m: u32, cap: usize },
    #[error("imbalance {dm} cannot be realized with {m} trains: {reason}")]
    Imbalance { m: u32, dm: i64, reason: String },
}

/// Initial occupancy: number of trains on each segment (0 or 1).
#[derive(Clone, Debug)]
pub struct Placement {
    pub m: u32,
    pub dm: i64,
    /// Trains per part: central, branch 1, branch 2.
    pub m_part: [u32; 3],
    pub b: BTreeMap<(u8, usize), u8>,
}

impl Placement {
    pub fn b(&self, u: u8, j: usize) -> i64 {
        self.b[&(u, j)] as i64
    }

    /// Free positions: each segment holds at most one train.
    pub fn b_bar(&self, u: u8, j: usize) -> i64 {
        1 - self.b(u, j)
    }
}

/// Spread `m_u` trains over `len` segments by quota: a segment gets a train
/// where the running quota crosses an integer, which anchors trains at the
/// downstream end of each quota window.
fn spread(m_u: u32, len: usize) -> Vec<u8> {
    (1..=len)
        .map(|j| {
            let a = (j as u64 * m_u as u64) / len as u64;
            let b = ((j - 1) as u64 * m_u as u64) / len as u64;
            (a - b) as u8
        })
        .collect()
}

/// Place `m` trains with branch imbalance `dm` (= trains on branch 2 minus
/// trains on branch 1). The central count is chosen closest to the
/// proportional share m * n0 / n subject to integrality of the branch split.
pub fn place_trains(topo: &Topology, m: u32, dm: i64) -> Result<Placement, PlaceError> {
    let cap = topo.capacity();
    if m as usize > cap {
        return Err(PlaceError::OverCapacity { m, cap });
    }
    match *topo {
        Topology::Ring { n0 } => {
            if dm != 0 {
                return Err(PlaceError::Imbalance {
                    m,
                    dm,
                    reason: "a ring has no branches".into(),
                });
            }
            let bs = spread(m, n0);
            let b = bs.iter().enumerate().map(|(i, &v)| ((0u8, i + 1), v)).collect();
            Ok(Placement { m, dm, m_part: [m, 0, 0], b })
        }
        Topology::Junction { n0, n1, n2 } => {
            let share = m as f64 * n0 as f64 / cap as f64;
            let mut best: Option<(u32, f64)> = None;
            for m0 in 0..=m.min(n0 as u32) {
                let rem = m as i64 - m0 as i64;
                if (rem - dm) % 2 != 0 {
                    continue;
                }
                let m1 = (rem - dm) / 2;
                let m2 = (rem + dm) / 2;
                if m1 < 0 || m2 < 0 || m1 > n1 as i64 || m2 > n2 as i64 {
                    continue;
                }
                let dist = (m0 as f64 - share).abs();
                if best.map_or(true, |(_, d)| dist < d) {
                    best = Some((m0, dist));
                }
            }
            let Some((m0, _)) = best else {
                return Err(PlaceError::Imbalance {
                    m,
                    dm,
                    reason: format!(
                        "no central count in 0..={} gives integer branch loads",
                        m.min(n0 as u32)
                    ),
                });
            };
            let m1 = ((m as i64 - m0 as i64 - dm) / 2) as u32;
            let m2 = ((m as i64 - m0 as i64 + dm) / 2) as u32;
            let mut b = BTreeMap::new();
            for (u, len, mu) in [(0u8, n0, m0), (1, n1, m1), (2, n2, m2)] {
                for (i, &v) in spread(mu, len).iter().enumerate() {
                    b.insert((u, i + 1), v);
                }
            }
            Ok(Placement { m, dm, m_part: [m0, m1, m2], b })
        }
    }
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "m={} dm={} (central {}, branch1 {}, branch2 {})",
            self.m, self.dm, self.m_part[0], self.m_part[1], self.m_part[2]
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = "\
[line]
n0 = 6
n1 = 4
n2 = 4
run_margin = 0.1
kappa = 500

[segment u=0 j=1]
r = 40 s
w = 10 s
s = 15 s
[segment u=0 j=2]
r = 1 min
s = 20 s
[segment u=0 j=3]
r = 45
s = 15
[segment u=0 j=4]
r = 50
s = 10
[segment u=0 j=5]
r = 55
s = 12
[segment u=0 j=6]
r = 42
s = 18
[segment u=1 j=1]
r = 60
s = 20
[segment u=1 j=2]
r = 65
s = 20
[segment u=1 j=3]
r = 70
s = 20
[segment u=1 j=4]
r = 60
s = 20
[segment u=2 j=1]
r = 80
s = 25
[segment u=2 j=2]
r = 85
s = 25
[segment u=2 j=3]
r = 80
s = 25
[segment u=2 j=4]
r = 75
s = 25
";

    #[test]
    fn parses_toy_junction() {
        let cfg = LineConfig::parse(TOY).unwrap();
        assert_eq!(cfg.topology, Topology::Junction { n0: 6, n1: 4, n2: 4 });
        assert_eq!(cfg.segment(0, 1).t(), 50.0);
        assert_eq!(cfg.segment(0, 2).t(), 60.0); // `1 min` normalized
        assert_eq!(cfg.segment(0, 1).g_min, 55.0); // defaults to r + s
        let agg = Aggregates::of(&cfg);
        assert_eq!(agg.t[0], 50.0 + 60.0 + 45.0 + 50.0 + 55.0 + 42.0);
        assert_eq!(agg.s[1], 80.0);
        // central pair max is 80 (j=2: 60+20); branch pairs are halved and smaller
        assert_eq!(agg.h_min, 80.0);
    }

    #[test]
    fn topology_indexing_covers_all_nodes() {
        let t = Topology::Junction { n0: 6, n1: 4, n2: 4 };
        assert_eq!(t.dim(), 13);
        assert_eq!(t.capacity(), 14);
        let nodes = t.nodes();
        assert_eq!(nodes.len(), 13);
        for (i, &(u, j)) in nodes.iter().enumerate() {
            assert_eq!(t.node_index(u, j), i);
        }
        // Aliases fold onto the junction nodes.
        assert_eq!(t.node_index(1, 0), t.node_index(0, 6));
        assert_eq!(t.node_index(2, 4), t.node_index(0, 0));
    }

    #[test]
    fn unknown_key_reports_line() {
        let bad = "[line]\nn0 = 4\nwheels = 8\n";
        match LineConfig::parse(bad) {
            Err(ConfigError::Syntax { line, msg }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("wheels"));
            }
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn missing_segment_names_the_gap() {
        let partial = "[line]\nn0 = 2\n[segment u=0 j=1]\nr = 10\ns = 5\n";
        match LineConfig::parse(partial) {
            Err(ConfigError::Semantic(msg)) => assert!(msg.contains("(0, 2) gap")),
            other => panic!("expected gap diagnostic, got {other:?}"),
        }
    }

    #[test]
    fn saturated_platform_is_rejected() {
        let mut text = String::from(TOY);
        text.push_str("[demand u=0 j=1]\nlambda_in = 3\nlambda_out = 3\nalpha_in = 4\nalpha_out = 4\n");
        match LineConfig::parse(&text) {
            Err(ConfigError::Syntax { msg, .. }) => assert!(msg.contains("saturates")),
            other => panic!("expected saturation error, got {other:?}"),
        }
    }

    #[test]
    fn placement_quota_spread() {
        let t = Topology::Junction { n0: 6, n1: 4, n2: 4 };
        let p = place_trains(&t, 8, 1).unwrap();
        assert_eq!(p.m_part, [3, 2, 3]);
        let central: Vec<i64> = (1..=6).map(|j| p.b(0, j)).collect();
        assert_eq!(central, vec![0, 1, 0, 1, 0, 1]);
        let b1: Vec<i64> = (1..=4).map(|j| p.b(1, j)).collect();
        assert_eq!(b1, vec![0, 1, 0, 1]);
        let b2: Vec<i64> = (1..=4).map(|j| p.b(2, j)).collect();
        assert_eq!(b2, vec![0, 1, 1, 1]);
        let total: i64 = t.segments().iter().map(|&(u, j)| p.b(u, j)).sum();
        assert_eq!(total, 8);
    }

    #[test]
    fn placement_rejects_unreachable_imbalance() {
        let t = Topology::Junction { n0: 4, n1: 4, n2: 4 };
        // dm = 5 needs 5 more trains on branch 2 than branch 1 out of 3 total.
        assert!(matches!(
            place_trains(&t, 3, 5),
            Err(PlaceError::Imbalance { .. })
        ));
        assert!(matches!(
            place_trains(&t, 99, 0),
            Err(PlaceError::OverCapacity { .. })
        ));
    }

    #[test]
    fn ring_placement() {
        let t = Topology::Ring { n0: 5 };
        let p = place_trains(&t, 2, 0).unwrap();
        let bs: Vec<i64> = (1..=5).map(|j| p.b(0, j)).collect();
        assert_eq!(bs.iter().sum::<i64>(), 2);
        assert!(bs.iter().all(|&b| b == 0 || b == 1));
        assert!(place_trains(&t, 1, 1).is_err());
    }
}
