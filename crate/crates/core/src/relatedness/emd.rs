//! Earth Mover's Distance between normalized histograms.

use serde::{Deserialize, Serialize};

use super::RelatednessError;

/// Largest signature the exact transportation solver accepts per side.
pub const MAX_SIGNATURE: usize = 64;

/// Residual capacities below this are treated as zero.
const EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bins {
    /// Strictly increasing bin positions on a numeric axis.
    Positions(Vec<f64>),
    /// Labels resolved through a ground-distance matrix.
    Categories(Vec<String>),
}

impl Bins {
    pub fn len(&self) -> usize {
        match self {
            Bins::Positions(p) => p.len(),
            Bins::Categories(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Non-negative masses over bins; total mass is positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawHistogram")]
pub struct Histogram {
    bins: Bins,
    masses: Vec<f64>,
}

#[derive(Deserialize)]
struct RawHistogram {
    bins: Bins,
    masses: Vec<f64>,
}

impl TryFrom<RawHistogram> for Histogram {
    type Error = RelatednessError;

    fn try_from(raw: RawHistogram) -> Result<Self, Self::Error> {
        Histogram::new(raw.bins, raw.masses)
    }
}

impl Histogram {
    pub fn new(bins: Bins, masses: Vec<f64>) -> Result<Self, RelatednessError> {
        let invalid = |m: &str| Err(RelatednessError::InvalidHistogram(m.to_string()));
        if bins.len() != masses.len() {
            return invalid("bins and masses differ in length");
        }
        if masses.is_empty() {
            return invalid("no bins");
        }
        if masses.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return invalid("masses must be finite and non-negative");
        }
        if masses.iter().sum::<f64>() <= 0.0 {
            return invalid("total mass is zero");
        }
        match &bins {
            Bins::Positions(p) => {
                if p.iter().any(|x| !x.is_finite()) || p.windows(2).any(|w| w[0] >= w[1]) {
                    return invalid("positions must be finite and strictly increasing");
                }
            }
            Bins::Categories(c) => {
                let mut sorted: Vec<&String> = c.iter().collect();
                sorted.sort();
                if sorted.windows(2).any(|w| w[0] == w[1]) {
                    return invalid("duplicate category");
                }
            }
        }
        Ok(Self { bins, masses })
    }

    pub fn positional(positions: Vec<f64>, masses: Vec<f64>) -> Result<Self, RelatednessError> {
        Self::new(Bins::Positions(positions), masses)
    }

    pub fn bins(&self) -> &Bins {
        &self.bins
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Masses scaled to sum to 1.
    pub fn normalized(&self) -> Vec<f64> {
        let total: f64 = self.masses.iter().sum();
        self.masses.iter().map(|m| m / total).collect()
    }
}

/// Distance between bins.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ground {
    /// `|x - y|` between positions.
    #[default]
    Absolute,
    /// Symmetric distances between labelled categories.
    Matrix {
        labels: Vec<String>,
        distances: Vec<Vec<f64>>,
    },
}

/// Minimal cost of transporting `p` onto `q`, both normalized to unit mass.
///
/// Positional histograms under [`Ground::Absolute`] use the cumulative
/// closed form on the merged axis; everything else goes through the exact
/// transportation solver.
pub fn emd(p: &Histogram, q: &Histogram, ground: &Ground) -> Result<f64, RelatednessError> {
    match (&p.bins, &q.bins, ground) {
        (Bins::Positions(xp), Bins::Positions(xq), Ground::Absolute) => {
            Ok(emd_1d(xp, &p.normalized(), xq, &q.normalized()))
        }
        (Bins::Positions(_), Bins::Positions(_), Ground::Matrix { .. }) => {
            Err(RelatednessError::DimensionMismatch(
                "positional histograms take the absolute ground distance".into(),
            ))
        }
        (Bins::Categories(cp), Bins::Categories(cq), Ground::Matrix { labels, distances }) => {
            let index = |label: &String| {
                labels.iter().position(|l| l == label).ok_or_else(|| {
                    RelatednessError::DimensionMismatch(format!(
                        "category {label:?} missing from ground matrix"
                    ))
                })
            };
            if distances.len() != labels.len() || distances.iter().any(|r| r.len() != labels.len()) {
                return Err(RelatednessError::DimensionMismatch(
                    "ground matrix is not square over its labels".into(),
                ));
            }
            let ip: Vec<usize> = cp.iter().map(index).collect::<Result<_, _>>()?;
            let iq: Vec<usize> = cq.iter().map(index).collect::<Result<_, _>>()?;
            let cost: Vec<Vec<f64>> = ip
                .iter()
                .map(|&i| iq.iter().map(|&j| distances[i][j]).collect())
                .collect();
            transport(&p.normalized(), &q.normalized(), &cost)
        }
        _ => Err(RelatednessError::DimensionMismatch(
            "histogram bins cannot be compared without a ground matrix".into(),
        )),
    }
}

/// Cumulative closed form: Σ |CDF_p − CDF_q| · spacing over the merged axis.
pub fn emd_1d(xp: &[f64], p: &[f64], xq: &[f64], q: &[f64]) -> f64 {
    let (mut i, mut j) = (0, 0);
    let (mut cp, mut cq) = (0.0f64, 0.0f64);
    let mut total = 0.0;
    let mut prev: Option<f64> = None;
    while i < xp.len() || j < xq.len() {
        let x = match (xp.get(i), xq.get(j)) {
            (Some(&a), Some(&b)) => a.min(b),
            (Some(&a), None) => a,
            (None, Some(&b)) => b,
            (None, None) => unreachable!(),
        };
        if let Some(px) = prev {
            total += (cp - cq).abs() * (x - px);
        }
        while i < xp.len() && xp[i] == x {
            cp += p[i];
            i += 1;
        }
        while j < xq.len() && xq[j] == x {
            cq += q[j];
            j += 1;
        }
        prev = Some(x);
    }
    total
}

/// Exact balanced transportation cost by successive shortest paths.
///
/// `supply` and `demand` must have equal totals; `cost[i][j]` is the
/// non-negative cost per unit mass moved from source `i` to sink `j`.
pub fn transport(supply: &[f64], demand: &[f64], cost: &[Vec<f64>]) -> Result<f64, RelatednessError> {
    let (m, n) = (supply.len(), demand.len());
    if m > MAX_SIGNATURE || n > MAX_SIGNATURE {
        return Err(RelatednessError::SizeLimit {
            rows: m,
            cols: n,
            max: MAX_SIGNATURE,
        });
    }
    if cost.len() != m || cost.iter().any(|r| r.len() != n) {
        return Err(RelatednessError::DimensionMismatch(format!(
            "cost matrix is not {m}x{n}"
        )));
    }
    if cost.iter().flatten().any(|c| !c.is_finite() || *c < 0.0) {
        return Err(RelatednessError::DimensionMismatch(
            "ground distances must be finite and non-negative".into(),
        ));
    }
    let total_supply: f64 = supply.iter().sum();
    let total_demand: f64 = demand.iter().sum();
    if (total_supply - total_demand).abs() > 1e-9 * total_supply.max(1.0) {
        return Err(RelatednessError::InvalidHistogram(format!(
            "unbalanced masses {total_supply} vs {total_demand}"
        )));
    }

    // nodes: 0 = source, 1..=m supplies, m+1..=m+n demands, m+n+1 = sink
    let nodes = m + n + 2;
    let (src, snk) = (0, m + n + 1);
    let mut residual = vec![vec![0.0f64; nodes]; nodes];
    let mut arc_cost = vec![vec![0.0f64; nodes]; nodes];
    let unbounded = total_supply.max(total_demand) * 2.0 + 1.0;
    for i in 0..m {
        residual[src][1 + i] = supply[i];
        for j in 0..n {
            let (u, v) = (1 + i, 1 + m + j);
            residual[u][v] = unbounded;
            arc_cost[u][v] = cost[i][j];
            arc_cost[v][u] = -cost[i][j];
        }
    }
    for j in 0..n {
        residual[1 + m + j][snk] = demand[j];
    }

    let mut potential = vec![0.0f64; nodes];
    let mut shipped = 0.0;
    let target = total_supply.min(total_demand);
    // every augmentation saturates an arc, so this bound is never reached
    let max_rounds = 4 * (m + 1) * (n + 1) * (m + n + 2);
    for _ in 0..max_rounds {
        if target - shipped <= EPS {
            break;
        }
        let Some((dist, parent)) = dijkstra(&residual, &arc_cost, &potential, src) else {
            break;
        };
        if !dist[snk].is_finite() {
            break;
        }
        for v in 0..nodes {
            if dist[v].is_finite() {
                potential[v] += dist[v];
            } else {
                potential[v] += dist[snk];
            }
        }
        let mut bottleneck = target - shipped;
        let mut v = snk;
        while v != src {
            let u = parent[v];
            bottleneck = bottleneck.min(residual[u][v]);
            v = u;
        }
        let mut v = snk;
        while v != src {
            let u = parent[v];
            residual[u][v] -= bottleneck;
            residual[v][u] += bottleneck;
            v = u;
        }
        shipped += bottleneck;
    }

    // flow on i -> j equals the reverse residual j -> i
    let mut total = 0.0;
    for i in 0..m {
        for j in 0..n {
            let flow = residual[1 + m + j][1 + i];
            if flow > 0.0 {
                total += flow * cost[i][j];
            }
        }
    }
    Ok(total)
}

/// Dense Dijkstra over reduced costs; `None` when the source is isolated.
fn dijkstra(
    residual: &[Vec<f64>],
    arc_cost: &[Vec<f64>],
    potential: &[f64],
    src: usize,
) -> Option<(Vec<f64>, Vec<usize>)> {
    let nodes = residual.len();
    let mut dist = vec![f64::INFINITY; nodes];
    let mut parent = vec![usize::MAX; nodes];
    let mut done = vec![false; nodes];
    dist[src] = 0.0;
    for _ in 0..nodes {
        let mut u = usize::MAX;
        let mut best = f64::INFINITY;
        for v in 0..nodes {
            if !done[v] && dist[v] < best {
                best = dist[v];
                u = v;
            }
        }
        if u == usize::MAX {
            break;
        }
        done[u] = true;
        for v in 0..nodes {
            if done[v] || residual[u][v] <= EPS {
                continue;
            }
            // rounding can leave reduced costs a hair below zero
            let reduced = (arc_cost[u][v] + potential[u] - potential[v]).max(0.0);
            let candidate = dist[u] + reduced;
            if candidate < dist[v] {
                dist[v] = candidate;
                parent[v] = u;
            }
        }
    }
    if parent.iter().all(|p| *p == usize::MAX) {
        return None;
    }
    Some((dist, parent))
}

/// Exact EMD between positional histograms through the general solver.
pub fn emd_positions_exact(p: &Histogram, q: &Histogram) -> Result<f64, RelatednessError> {
    match (&p.bins, &q.bins) {
        (Bins::Positions(xp), Bins::Positions(xq)) => {
            let cost: Vec<Vec<f64>> = xp
                .iter()
                .map(|a| xq.iter().map(|b| (a - b).abs()).collect())
                .collect();
            transport(&p.normalized(), &q.normalized(), &cost)
        }
        _ => Err(RelatednessError::DimensionMismatch(
            "positional histograms required".into(),
        )),
    }
}
