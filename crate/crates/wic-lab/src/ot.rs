//! Exact Wasserstein-1 on finite supports via the transportation LP
//! (successive shortest paths on the bipartite flow network), plus the
//! Kantorovich-Rubinstein dual gap for validating learned potentials.

use crate::grid::GridState;
use crate::{Error, Result};

const MASS_TOL: f64 = 1e-12;

/// A probability distribution on finitely many grid cells.
#[derive(Clone, Debug)]
pub struct FiniteDistribution {
    pub support: Vec<GridState>,
    pub mass: Vec<f64>,
}

impl FiniteDistribution {
    pub fn new(support: Vec<GridState>, mass: Vec<f64>) -> Result<Self> {
        if support.len() != mass.len() || support.is_empty() {
            return Err(Error::Contract("support/mass shape mismatch".into()));
        }
        let mut seen = support.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != support.len() {
            return Err(Error::Contract("support entries must be distinct".into()));
        }
        if mass.iter().any(|&m| m < 0.0) {
            return Err(Error::Contract("negative mass".into()));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::Contract(format!("masses sum to {total}, not 1")));
        }
        Ok(Self { support, mass })
    }

    pub fn dirac(s: GridState) -> Self {
        Self {
            support: vec![s],
            mass: vec![1.0],
        }
    }
}

/// Transported mass between the two supports; rows are source points.
#[derive(Clone, Debug)]
pub struct CouplingPlan {
    pub matrix: Vec<Vec<f64>>,
}

impl CouplingPlan {
    /// Checks the marginal constraints against the given distributions.
    pub fn check_marginals(&self, mu: &FiniteDistribution, nu: &FiniteDistribution) -> Result<()> {
        for (i, row) in self.matrix.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - mu.mass[i]).abs() > 1e-9 {
                return Err(Error::Contract(format!("row {i} marginal off by {}", sum - mu.mass[i])));
            }
        }
        for j in 0..nu.mass.len() {
            let sum: f64 = self.matrix.iter().map(|r| r[j]).sum();
            if (sum - nu.mass[j]).abs() > 1e-9 {
                return Err(Error::Contract(format!("col {j} marginal off by {}", sum - nu.mass[j])));
            }
        }
        Ok(())
    }
}

/// Exact Wasserstein-1 between `mu` and `nu` under the given ground metric,
/// with an optimal coupling. The metric must be non-negative and zero on
/// identical states.
pub fn exact_w1<D>(
    mu: &FiniteDistribution,
    nu: &FiniteDistribution,
    metric: D,
) -> Result<(f64, CouplingPlan)>
where
    D: Fn(GridState, GridState) -> f64,
{
    let m = mu.support.len();
    let n = nu.support.len();
    let mut cost = vec![vec![0.0; n]; m];
    for i in 0..m {
        for j in 0..n {
            let c = metric(mu.support[i], nu.support[j]);
            if c < 0.0 || !c.is_finite() {
                return Err(Error::Contract("metric entries must be finite and non-negative".into()));
            }
            if mu.support[i] == nu.support[j] && c != 0.0 {
                return Err(Error::Contract("metric must vanish on identical states".into()));
            }
            cost[i][j] = c;
        }
    }
    let plan = min_cost_transport(&mu.mass, &nu.mass, &cost);
    let value: f64 = plan
        .iter()
        .enumerate()
        .map(|(i, row)| row.iter().zip(&cost[i]).map(|(f, c)| f * c).sum::<f64>())
        .sum();
    Ok((value, CouplingPlan { matrix: plan }))
}

/// E_nu[f] - E_mu[f] for a potential verified to be 1-Lipschitz over the
/// joint support. Weak duality bounds this by the exact W1 value.
pub fn dual_gap<D, F>(
    mu: &FiniteDistribution,
    nu: &FiniteDistribution,
    metric: D,
    potential: F,
) -> Result<f64>
where
    D: Fn(GridState, GridState) -> f64,
    F: Fn(GridState) -> f64,
{
    let mut joint: Vec<GridState> = mu.support.iter().chain(&nu.support).copied().collect();
    joint.sort();
    joint.dedup();
    for (i, &x) in joint.iter().enumerate() {
        for &y in &joint[i + 1..] {
            let gap = (potential(x) - potential(y)).abs();
            let bound = metric(x, y).min(metric(y, x));
            if gap > bound + 1e-9 {
                return Err(Error::Contract(format!(
                    "Lipschitz violation between ({},{}) and ({},{}): |df|={gap} > d={bound}",
                    x.row, x.col, y.row, y.col
                )));
            }
        }
    }
    let e_nu: f64 = nu.support.iter().zip(&nu.mass).map(|(&s, &w)| w * potential(s)).sum();
    let e_mu: f64 = mu.support.iter().zip(&mu.mass).map(|(&s, &w)| w * potential(s)).sum();
    Ok(e_nu - e_mu)
}

// Successive shortest paths for the transportation problem. Supplies and
// demands are real; every augmentation exhausts at least one source or sink,
// so at most m + n iterations run. Dijkstra with Johnson potentials keeps
// reduced costs non-negative.
fn min_cost_transport(supply: &[f64], demand: &[f64], cost: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = supply.len();
    let n = demand.len();
    let total = m + n;
    let mut flow = vec![vec![0.0; n]; m];
    let mut remaining_supply = supply.to_vec();
    let mut remaining_demand = demand.to_vec();
    // node ids: sources 0..m, sinks m..m+n
    let mut potential = vec![0.0; total];

    loop {
        let Some(src) = remaining_supply.iter().position(|&s| s > MASS_TOL) else {
            break;
        };
        // Dijkstra from src over the residual graph
        let mut dist = vec![f64::INFINITY; total];
        let mut prev: Vec<Option<usize>> = vec![None; total];
        let mut done = vec![false; total];
        dist[src] = 0.0;
        for _ in 0..total {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..total {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u < m {
                for j in 0..n {
                    let v = m + j;
                    let rc = cost[u][j] + potential[u] - potential[v];
                    if dist[u] + rc < dist[v] - 1e-15 {
                        dist[v] = dist[u] + rc;
                        prev[v] = Some(u);
                    }
                }
            } else {
                let j = u - m;
                for i in 0..m {
                    if flow[i][j] > MASS_TOL {
                        let rc = -cost[i][j] + potential[u] - potential[i];
                        if dist[u] + rc < dist[i] - 1e-15 {
                            dist[i] = dist[u] + rc;
                            prev[i] = Some(u);
                        }
                    }
                }
            }
        }
        // nearest sink with remaining demand
        let mut sink = None;
        let mut best = f64::INFINITY;
        for j in 0..n {
            if remaining_demand[j] > MASS_TOL && dist[m + j] < best {
                best = dist[m + j];
                sink = Some(m + j);
            }
        }
        let sink = sink.expect("supply remains but no reachable demand");
        // bottleneck along the path
        let mut amount = remaining_supply[src].min(remaining_demand[sink - m]);
        let mut v = sink;
        while let Some(u) = prev[v] {
            if u < m {
                // forward arc u -> v has unlimited capacity
            } else {
                amount = amount.min(flow[v][u - m]);
            }
            v = u;
        }
        // apply augmentation
        let mut v = sink;
        while let Some(u) = prev[v] {
            if u < m {
                flow[u][v - m] += amount;
            } else {
                flow[v][u - m] -= amount;
            }
            v = u;
        }
        remaining_supply[src] -= amount;
        remaining_demand[sink - m] -= amount;
        for v in 0..total {
            if dist[v].is_finite() {
                potential[v] += dist[v];
            }
        }
    }
    flow
}
