//! Transportation simplex for the general (unequal sizes or non-uniform
//! weights) optimal transport instance.
//!
//! Northwest-corner initial basis, MODI potentials recomputed over the basis
//! tree, Dantzig entering rule with a Bland fallback after long degenerate
//! streaks.

use crate::error::{Error, Result};

#[derive(Clone, Copy)]
struct BasicCell {
    row: usize,
    col: usize,
    flow: f64,
    cost: f64,
}

/// Minimal total cost moving `supply` to `demand` (both sum to the same
/// total within 1e-9 relative).
pub fn solve_transportation(
    supply: &[f64],
    demand: &[f64],
    cost: &impl Fn(usize, usize) -> f64,
) -> Result<f64> {
    let m = supply.len();
    let n = demand.len();
    if m == 0 || n == 0 {
        return Err(Error::InvalidInput("empty marginals".into()));
    }
    let total_s: f64 = supply.iter().sum();
    let total_d: f64 = demand.iter().sum();
    if (total_s - total_d).abs() > 1e-9 * total_s.max(total_d).max(1.0) {
        return Err(Error::InvalidInput(format!(
            "unbalanced marginals: {total_s} vs {total_d}"
        )));
    }
    let scale = total_s / total_d;
    let demand: Vec<f64> = demand.iter().map(|d| d * scale).collect();

    if m == 1 {
        return Ok(demand.iter().enumerate().map(|(j, d)| d * cost(0, j)).sum());
    }
    if n == 1 {
        return Ok(supply.iter().enumerate().map(|(i, s)| s * cost(i, 0)).sum());
    }

    let mut basis = northwest_corner(supply, &demand, cost);
    let cost_scale = {
        let mut mx = 1.0f64;
        for i in 0..m {
            for j in 0..n {
                mx = mx.max(cost(i, j).abs());
            }
        }
        mx
    };
    let tol = 1e-11 * cost_scale;

    let max_pivots = 1000 * (m + n) + 10_000;
    let mut degenerate_streak = 0usize;
    for _ in 0..max_pivots {
        let (u, v) = potentials(m, n, &basis)?;
        let bland = degenerate_streak > 64 * (m + n);
        let entering = find_entering(m, n, cost, &u, &v, &basis, tol, bland);
        let (ei, ej) = match entering {
            None => return Ok(basis.iter().map(|c| c.flow * c.cost).sum()),
            Some(cell) => cell,
        };
        let path = tree_path(m, n, &basis, ei, ej);
        // cycle order: entering cell at position 0, then the tree path from
        // the entering column back to the entering row; odd positions lose
        let mut theta = f64::INFINITY;
        let mut leaving = usize::MAX;
        for (t, &cell_idx) in path.iter().rev().enumerate() {
            if (t + 1) % 2 == 1 {
                let fl = basis[cell_idx].flow;
                if fl < theta {
                    theta = fl;
                    leaving = cell_idx;
                }
            }
        }
        debug_assert!(leaving != usize::MAX);
        for (t, &cell_idx) in path.iter().rev().enumerate() {
            if (t + 1) % 2 == 1 {
                basis[cell_idx].flow = (basis[cell_idx].flow - theta).max(0.0);
            } else {
                basis[cell_idx].flow += theta;
            }
        }
        if theta <= 1e-15 {
            degenerate_streak += 1;
        } else {
            degenerate_streak = 0;
        }
        basis[leaving] = BasicCell { row: ei, col: ej, flow: theta, cost: cost(ei, ej) };
    }
    Err(Error::NumericalFailure(
        "transportation simplex exceeded the pivot limit".into(),
    ))
}

/// Northwest-corner rule; advancing exactly one index per step yields the
/// full m+n-1 basic cells including degenerate zeros.
fn northwest_corner(
    supply: &[f64],
    demand: &[f64],
    cost: &impl Fn(usize, usize) -> f64,
) -> Vec<BasicCell> {
    let m = supply.len();
    let n = demand.len();
    let mut s = supply.to_vec();
    let mut d = demand.to_vec();
    let mut basis = Vec::with_capacity(m + n - 1);
    let (mut i, mut j) = (0usize, 0usize);
    loop {
        let q = s[i].min(d[j]);
        basis.push(BasicCell { row: i, col: j, flow: q, cost: cost(i, j) });
        s[i] -= q;
        d[j] -= q;
        if i == m - 1 && j == n - 1 {
            break;
        }
        if (s[i] <= d[j] && i + 1 < m) || j + 1 >= n {
            i += 1;
        } else {
            j += 1;
        }
    }
    basis
}

fn basis_adjacency(m: usize, n: usize, basis: &[BasicCell]) -> Vec<Vec<(usize, usize)>> {
    // node ids: rows 0..m, columns m..m+n; edges labelled by basis index
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); m + n];
    for (idx, c) in basis.iter().enumerate() {
        adj[c.row].push((m + c.col, idx));
        adj[m + c.col].push((c.row, idx));
    }
    adj
}

/// Solve u_i + v_j = c(i,j) on the basis tree (u_0 = 0).
fn potentials(m: usize, n: usize, basis: &[BasicCell]) -> Result<(Vec<f64>, Vec<f64>)> {
    let adj = basis_adjacency(m, n, basis);
    let mut u = vec![0.0f64; m];
    let mut v = vec![0.0f64; n];
    let mut visited = vec![false; m + n];
    visited[0] = true;
    let mut stack = vec![0usize];
    while let Some(node) = stack.pop() {
        for &(next, cell_idx) in &adj[node] {
            if visited[next] {
                continue;
            }
            visited[next] = true;
            let c = basis[cell_idx].cost;
            if next >= m {
                v[next - m] = c - u[node];
            } else {
                u[next] = c - v[node - m];
            }
            stack.push(next);
        }
    }
    if visited.iter().any(|&b| !b) {
        return Err(Error::NumericalFailure(
            "transportation basis is not a spanning tree".into(),
        ));
    }
    Ok((u, v))
}

/// Most negative reduced cost (or Bland's least index after degenerate
/// streaks); None when optimal.
fn find_entering(
    m: usize,
    n: usize,
    cost: &impl Fn(usize, usize) -> f64,
    u: &[f64],
    v: &[f64],
    basis: &[BasicCell],
    tol: f64,
    bland: bool,
) -> Option<(usize, usize)> {
    let mut in_basis = vec![false; m * n];
    for c in basis {
        in_basis[c.row * n + c.col] = true;
    }
    let mut best: Option<(usize, usize)> = None;
    let mut best_red = -tol;
    for i in 0..m {
        for j in 0..n {
            if in_basis[i * n + j] {
                continue;
            }
            let red = cost(i, j) - u[i] - v[j];
            if red < -tol {
                if bland {
                    return Some((i, j));
                }
                if red < best_red {
                    best_red = red;
                    best = Some((i, j));
                }
            }
        }
    }
    best
}

/// Basis indices of the unique tree path from the entering column node back
/// to the entering row node; reversed, this lists the cycle after the
/// entering cell.
fn tree_path(m: usize, n: usize, basis: &[BasicCell], ei: usize, ej: usize) -> Vec<usize> {
    let adj = basis_adjacency(m, n, basis);
    let start = m + ej;
    let goal = ei;
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; m + n];
    let mut visited = vec![false; m + n];
    visited[start] = true;
    let mut queue = std::collections::VecDeque::from([start]);
    while let Some(node) = queue.pop_front() {
        if node == goal {
            break;
        }
        for &(next, cell_idx) in &adj[node] {
            if !visited[next] {
                visited[next] = true;
                parent[next] = Some((node, cell_idx));
                queue.push_back(next);
            }
        }
    }
    let mut path = Vec::new();
    let mut node = goal;
    while let Some((prev, cell_idx)) = parent[node] {
        path.push(cell_idx);
        node = prev;
    }
    debug_assert_eq!(node, start, "entering cell not connected through the basis");
    path
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pseudo_random(seed: u64) -> impl FnMut() -> f64 {
        let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15) | 1;
        move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        }
    }

    /// Exact minimum over the LP vertices: every basic feasible solution is
    /// a spanning tree of the bipartite support graph with flows determined
    /// by leaf elimination, so enumerating all spanning trees with
    /// non-negative flows enumerates the vertices.
    fn brute_force_vertices(
        supply: &[f64],
        demand: &[f64],
        cost: &impl Fn(usize, usize) -> f64,
    ) -> f64 {
        let m = supply.len();
        let n = demand.len();
        let n_edges = m * n;
        let n_basic = m + n - 1;
        let mut best = f64::INFINITY;
        let mut chosen: Vec<usize> = (0..n_basic).collect();
        loop {
            // evaluate the current edge subset
            if let Some(total) = tree_flow_cost(supply, demand, &chosen, n, cost) {
                best = best.min(total);
            }
            // next combination
            let mut idx = n_basic;
            loop {
                if idx == 0 {
                    return best;
                }
                idx -= 1;
                if chosen[idx] != idx + n_edges - n_basic {
                    chosen[idx] += 1;
                    for t in (idx + 1)..n_basic {
                        chosen[t] = chosen[t - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    /// Flows on an edge subset by leaf elimination; None when the subset is
    /// not a spanning tree or some flow is negative.
    fn tree_flow_cost(
        supply: &[f64],
        demand: &[f64],
        edges: &[usize],
        n: usize,
        cost: &impl Fn(usize, usize) -> f64,
    ) -> Option<f64> {
        let m = supply.len();
        let nodes = m + n;
        let mut degree = vec![0usize; nodes];
        let mut incident: Vec<Vec<usize>> = vec![Vec::new(); nodes];
        for (e, &code) in edges.iter().enumerate() {
            let (i, j) = (code / n, code % n);
            degree[i] += 1;
            degree[m + j] += 1;
            incident[i].push(e);
            incident[m + j].push(e);
        }
        if degree.iter().any(|&d| d == 0) {
            return None;
        }
        let mut balance: Vec<f64> = supply
            .iter()
            .copied()
            .chain(demand.iter().copied().map(|d| -d))
            .collect();
        let mut flow = vec![f64::NAN; edges.len()];
        let mut removed = vec![false; edges.len()];
        let mut leaves: Vec<usize> = (0..nodes).filter(|&v| degree[v] == 1).collect();
        let mut processed = 0;
        while let Some(v) = leaves.pop() {
            let e = match incident[v].iter().find(|&&e| !removed[e]) {
                Some(&e) => e,
                None => continue,
            };
            let code = edges[e];
            let (i, j) = (code / n, code % n);
            let other = if v == i { m + j } else { i };
            // the leaf's remaining balance must travel over its last edge;
            // positive flow goes from the row side to the column side
            let f = if v < m { balance[v] } else { -balance[v] };
            if f < -1e-12 {
                return None;
            }
            flow[e] = f.max(0.0);
            balance[other] += if other < m { -f } else { f };
            balance[v] = 0.0;
            removed[e] = true;
            degree[v] -= 1;
            degree[other] -= 1;
            if degree[other] == 1 {
                leaves.push(other);
            }
            processed += 1;
            if processed == edges.len() {
                break;
            }
        }
        if processed != edges.len() {
            return None; // cycle; not a tree
        }
        Some(
            edges
                .iter()
                .enumerate()
                .map(|(e, &code)| flow[e] * cost(code / n, code % n))
                .sum(),
        )
    }

    #[test]
    fn matches_vertex_enumeration() {
        for seed in 0..60 {
            let mut r = pseudo_random(seed);
            let m = 2 + (seed as usize % 3);
            let n = 2 + ((seed as usize / 3) % 3);
            let supply: Vec<f64> = (0..m).map(|_| 0.1 + r()).collect();
            let total: f64 = supply.iter().sum();
            let mut demand: Vec<f64> = (0..n).map(|_| 0.1 + r()).collect();
            let dt: f64 = demand.iter().sum();
            demand.iter_mut().for_each(|d| *d *= total / dt);
            let cm: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| r()).collect()).collect();
            let cost = |i: usize, j: usize| cm[i][j];
            let got = solve_transportation(&supply, &demand, &cost).unwrap();
            let expected = brute_force_vertices(&supply, &demand, &cost);
            assert!(
                (got - expected).abs() < 1e-9,
                "seed {seed} {m}x{n}: {got} vs {expected}"
            );
        }
    }

    #[test]
    fn degenerate_instances() {
        // equal atoms in supply and demand: optimal cost zero on diagonal
        let cost = |i: usize, j: usize| if i == j { 0.0 } else { 1.0 };
        let got = solve_transportation(&[0.5, 0.5], &[0.5, 0.5], &cost).unwrap();
        assert!(got.abs() < 1e-12);

        // single supplier
        let got = solve_transportation(&[1.0], &[0.25, 0.75], &|_, j| (j + 1) as f64).unwrap();
        assert!((got - (0.25 + 1.5)).abs() < 1e-12);

        // many ties
        let got = solve_transportation(&[0.25; 4], &[0.5, 0.5], &|_, _| 2.0).unwrap();
        assert!((got - 2.0).abs() < 1e-12);
    }

    #[test]
    fn unbalanced_rejected() {
        assert!(solve_transportation(&[1.0], &[0.5], &|_, _| 1.0).is_err());
    }
}
