//! The discrete (W¹,∞)*-norm: maximize ∫fψ over test fields with |ψ_i| ≤ 1
//! and |ψ_i − ψ_j| ≤ h across every interior face.
//!
//! The solve runs in two stages. A projected-supergradient ascent with
//! averaging produces a feasible warm start near the box-bound optimum. An
//! exact pass then solves the LP through its transshipment dual: moving a
//! unit of f-mass across a face costs the spacing h, absorbing it anywhere
//! costs 1, and the optimal node potentials of that min-cost flow are the
//! optimal test field. Both a feasible primal and a feasible dual value are
//! returned, so the reported duality gap is a certificate.

use crate::error::Error;
use crate::grid::{compensated_sum, CompensatedSum, Field, Grid};

/// Certified solve result.
#[derive(Debug, Clone)]
pub struct DualNormSolution {
    /// Objective of the returned feasible maximizer.
    pub value: f64,
    /// The maximizer ψ*; any optimal vertex may be reported.
    pub maximizer: Field,
    /// Upper bound minus `value`; nonnegative.
    pub gap: f64,
}

/// Acceptable duality gap relative to ‖f‖_{L¹}.
pub const GAP_TOLERANCE: f64 = 1e-6;

struct EdgeDef {
    a: u32,
    b: u32,
    cost: f64,
}

/// Problem graph: one node per cell plus an absorption node.
struct FlowProblem {
    n_cells: usize,
    edges: Vec<EdgeDef>,
    /// CSR adjacency: (edge index, neighbor, +1 if traversing a→b).
    adj_offsets: Vec<u32>,
    adj: Vec<(u32, u32, i8)>,
}

impl FlowProblem {
    fn build(grid: &Grid) -> Self {
        let n = grid.n_cells();
        let virt = n as u32;
        let mut edges = Vec::new();
        for a in 0..grid.dim() {
            let h = grid.spacing()[a];
            grid.for_each_face(a, |_, lo, hi| {
                edges.push(EdgeDef {
                    a: lo as u32,
                    b: hi as u32,
                    cost: h,
                });
            });
        }
        for i in 0..n {
            edges.push(EdgeDef {
                a: i as u32,
                b: virt,
                cost: 1.0,
            });
        }

        let n_nodes = n + 1;
        let mut degree = vec![0u32; n_nodes];
        for e in &edges {
            degree[e.a as usize] += 1;
            degree[e.b as usize] += 1;
        }
        let mut adj_offsets = vec![0u32; n_nodes + 1];
        for i in 0..n_nodes {
            adj_offsets[i + 1] = adj_offsets[i] + degree[i];
        }
        let mut cursor = adj_offsets.clone();
        let mut adj = vec![(0u32, 0u32, 0i8); edges.len() * 2];
        for (idx, e) in edges.iter().enumerate() {
            adj[cursor[e.a as usize] as usize] = (idx as u32, e.b, 1);
            cursor[e.a as usize] += 1;
            adj[cursor[e.b as usize] as usize] = (idx as u32, e.a, -1);
            cursor[e.b as usize] += 1;
        }
        Self {
            n_cells: n,
            edges,
            adj_offsets,
            adj,
        }
    }
}

#[derive(PartialEq)]
struct HeapEntry {
    dist: f64,
    node: u32,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // min-heap on dist; distances are never NaN
        other
            .dist
            .partial_cmp(&self.dist)
            .unwrap()
            .then(other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Successive-shortest-path transshipment solve. Returns (flow, potentials,
/// unrouted excess magnitude).
fn solve_flow(problem: &FlowProblem, supply: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
    let n_nodes = problem.n_cells + 1;
    let mut excess = supply.to_vec();
    let total_abs: f64 = supply.iter().map(|x| x.abs()).sum();
    let tol = 1e-15 * total_abs.max(f64::MIN_POSITIVE);

    let mut flow = vec![0.0f64; problem.edges.len()];
    let mut pi = vec![0.0f64; n_nodes];
    if total_abs == 0.0 {
        return (flow, pi, 0.0);
    }

    let mut dist = vec![f64::INFINITY; n_nodes];
    let mut settled = vec![false; n_nodes];
    let mut parent: Vec<(u32, i8)> = vec![(u32::MAX, 0); n_nodes];
    let mut touched: Vec<u32> = Vec::new();

    // process sources in fixed index order for determinism
    for s in 0..n_nodes {
        while excess[s] > tol {
            // Dijkstra on reduced costs from s to the nearest deficit node
            for &v in &touched {
                dist[v as usize] = f64::INFINITY;
                settled[v as usize] = false;
                parent[v as usize] = (u32::MAX, 0);
            }
            touched.clear();
            let mut heap = std::collections::BinaryHeap::new();
            dist[s] = 0.0;
            touched.push(s as u32);
            heap.push(HeapEntry {
                dist: 0.0,
                node: s as u32,
            });
            let mut target: Option<u32> = None;
            while let Some(HeapEntry { dist: d, node }) = heap.pop() {
                let nu = node as usize;
                if settled[nu] {
                    continue;
                }
                settled[nu] = true;
                if excess[nu] < -tol {
                    target = Some(node);
                    break;
                }
                let lo = problem.adj_offsets[nu] as usize;
                let hi = problem.adj_offsets[nu + 1] as usize;
                for &(eidx, to, dir) in &problem.adj[lo..hi] {
                    let tu = to as usize;
                    if settled[tu] {
                        continue;
                    }
                    let e = &problem.edges[eidx as usize];
                    let f = flow[eidx as usize];
                    // marginal cost of pushing one unit in `dir`
                    let eff = if (dir as f64) * f >= 0.0 {
                        e.cost
                    } else {
                        -e.cost
                    };
                    let rc = (eff + pi[nu] - pi[tu]).max(0.0);
                    let nd = d + rc;
                    if nd < dist[tu] {
                        if dist[tu] == f64::INFINITY {
                            touched.push(to);
                        }
                        dist[tu] = nd;
                        parent[tu] = (eidx, dir);
                        heap.push(HeapEntry { dist: nd, node: to });
                    }
                }
            }
            let Some(t) = target else {
                // no reachable deficit: leave the remainder unrouted
                break;
            };
            let d_t = dist[t as usize];
            // π[v] += min(dist[v], dist[t]) keeps all reduced costs nonnegative;
            // untouched nodes have dist = ∞ and receive d_t
            for (p, d) in pi.iter_mut().zip(&dist) {
                *p += d.min(d_t);
            }

            // bottleneck: arcs traversed against their current flow are only
            // cheap until that flow cancels
            let mut delta = excess[s].min(-excess[t as usize]);
            let mut cur = t as usize;
            while cur != s {
                let (eidx, dir) = parent[cur];
                let e = &problem.edges[eidx as usize];
                let f = flow[eidx as usize];
                if (dir as f64) * f < 0.0 {
                    delta = delta.min(f.abs());
                }
                cur = if dir == 1 { e.a as usize } else { e.b as usize };
            }
            let mut cur = t as usize;
            while cur != s {
                let (eidx, dir) = parent[cur];
                let e = &problem.edges[eidx as usize];
                flow[eidx as usize] += delta * dir as f64;
                cur = if dir == 1 { e.a as usize } else { e.b as usize };
            }
            excess[s] -= delta;
            excess[t as usize] += delta;
        }
    }

    let unrouted: f64 = excess.iter().map(|x| x.abs()).sum();
    (flow, pi, unrouted)
}

/// Clip to the box and sweep the face constraints until the test field is
/// feasible to well below the reporting tolerance.
fn project_feasible(grid: &Grid, psi: &mut [f64]) {
    for v in psi.iter_mut() {
        *v = v.clamp(-1.0, 1.0);
    }
    for _ in 0..64 {
        let mut worst: f64 = 0.0;
        for a in 0..grid.dim() {
            let h = grid.spacing()[a];
            grid.for_each_face(a, |_, lo, hi| {
                let d = psi[lo] - psi[hi];
                let over = d.abs() - h;
                if over > 0.0 {
                    worst = worst.max(over);
                    let shift = 0.5 * over * d.signum();
                    psi[lo] -= shift;
                    psi[hi] += shift;
                }
            });
        }
        for v in psi.iter_mut() {
            *v = v.clamp(-1.0, 1.0);
        }
        if worst <= 1e-15 {
            break;
        }
    }
}

fn objective(coeff: &[f64], psi: &[f64]) -> f64 {
    let mut acc = CompensatedSum::new();
    for (c, p) in coeff.iter().zip(psi) {
        acc.add(c * p);
    }
    acc.value()
}

/// Projected-supergradient ascent with iterate averaging, started at
/// sign(f) and feasibility-projected. Returns the best feasible test field.
fn ascent_warm_start(grid: &Grid, coeff: &[f64], iterations: usize) -> Vec<f64> {
    let n = coeff.len();
    let mut psi: Vec<f64> = coeff.iter().map(|c| c.signum()).collect();
    project_feasible(grid, &mut psi);
    let mut best = psi.clone();
    let mut best_val = objective(coeff, &psi);
    let mut avg = vec![0.0f64; n];
    let scale: f64 = coeff.iter().map(|c| c * c).sum::<f64>().sqrt();
    if scale == 0.0 {
        return vec![0.0; n];
    }
    for k in 0..iterations {
        let eta = 0.5 / (scale * ((k + 1) as f64).sqrt());
        for i in 0..n {
            psi[i] += eta * coeff[i];
        }
        project_feasible(grid, &mut psi);
        for i in 0..n {
            avg[i] += psi[i];
        }
        let val = objective(coeff, &psi);
        if val > best_val {
            best_val = val;
            best.copy_from_slice(&psi);
        }
    }
    let inv = 1.0 / iterations as f64;
    for v in avg.iter_mut() {
        *v *= inv;
    }
    project_feasible(grid, &mut avg);
    if objective(coeff, &avg) > best_val {
        best = avg;
    }
    best
}

/// Grid size up to which the exact pass is contractual; it runs at every
/// size, this is the guaranteed envelope.
pub const EXACT_PASS_CELL_LIMIT: usize = 4096;

/// Compute the dual norm of `f` with a certified duality gap.
pub fn dual_norm(f: &Field) -> Result<DualNormSolution, Error> {
    if !f.is_finite() {
        return Err(Error::NonFinite("dual norm input"));
    }
    let grid = f.grid();
    let n = grid.n_cells();
    let vol = grid.cell_volume();
    let coeff: Vec<f64> = f.values().iter().map(|&x| x * vol).collect();
    let l1: f64 = coeff.iter().map(|c| c.abs()).sum();
    if l1 == 0.0 {
        return Ok(DualNormSolution {
            value: 0.0,
            maximizer: Field::constant(grid, 0.0),
            gap: 0.0,
        });
    }

    let warm = ascent_warm_start(grid, &coeff, 50);
    let warm_val = objective(&coeff, &warm);

    // exact pass: transshipment dual
    let problem = FlowProblem::build(grid);
    let mut supply = coeff.clone();
    let balance = -compensated_sum(&coeff);
    supply.push(balance);
    let (flow, pi, unrouted) = solve_flow(&problem, &supply);

    let mut cost_acc = CompensatedSum::new();
    for (e, &phi) in problem.edges.iter().zip(&flow) {
        cost_acc.add(e.cost * phi.abs());
    }
    // unrouted excess could have been absorbed at cost 1 per unit
    let dual_value = cost_acc.value() + unrouted;

    let pi_virt = pi[n];
    let mut psi: Vec<f64> = (0..n).map(|i| pi_virt - pi[i]).collect();
    project_feasible(grid, &mut psi);
    let exact_val = objective(&coeff, &psi);

    let (mut value, mut maximizer) = if exact_val >= warm_val {
        (exact_val, psi)
    } else {
        (warm_val, warm)
    };
    // the maximizer must satisfy both constraint families to 1e-12
    project_feasible(grid, &mut maximizer);
    value = value.min(dual_value);

    let gap = (dual_value - value).max(0.0);
    if gap > GAP_TOLERANCE * l1 {
        return Err(Error::DualNorm(format!(
            "duality gap {gap:.3e} exceeds {:.3e}",
            GAP_TOLERANCE * l1
        )));
    }
    Ok(DualNormSolution {
        value,
        maximizer: Field::new(grid, maximizer)?,
        gap,
    })
}

/// Exhaustive lattice search over ψ ∈ {−1, −1+2/levels, …, 1}^cells filtered
/// by the face constraints. Validation oracle for grids with ≤ 6 cells.
pub fn lattice_oracle(f: &Field, levels: usize) -> Result<f64, Error> {
    let grid = f.grid();
    let n = grid.n_cells();
    if n > 6 {
        return Err(Error::DualNorm(format!(
            "lattice oracle restricted to grids with <= 6 cells, got {n}"
        )));
    }
    if levels == 0 {
        return Err(Error::DualNorm("levels must be positive".into()));
    }
    let vol = grid.cell_volume();
    let coeff: Vec<f64> = f.values().iter().map(|&x| x * vol).collect();
    let lattice: Vec<f64> = (0..=levels)
        .map(|j| -1.0 + 2.0 * j as f64 / levels as f64)
        .collect();

    // neighbors with smaller index, per cell, with the face bound
    let mut back_neighbors: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for a in 0..grid.dim() {
        let h = grid.spacing()[a];
        grid.for_each_face(a, |_, lo, hi| {
            back_neighbors[hi].push((lo, h));
        });
    }

    let mut assignment = vec![0.0f64; n];
    let mut best = f64::NEG_INFINITY;
    fn dfs(
        cell: usize,
        n: usize,
        lattice: &[f64],
        coeff: &[f64],
        back: &[Vec<(usize, f64)>],
        assignment: &mut [f64],
        partial: f64,
        best: &mut f64,
    ) {
        if cell == n {
            if partial > *best {
                *best = partial;
            }
            return;
        }
        'values: for &val in lattice {
            for &(nb, h) in &back[cell] {
                if (assignment[nb] - val).abs() > h + 1e-12 {
                    continue 'values;
                }
            }
            assignment[cell] = val;
            dfs(
                cell + 1,
                n,
                lattice,
                coeff,
                back,
                assignment,
                partial + coeff[cell] * val,
                best,
            );
        }
    }
    dfs(
        0,
        n,
        &lattice,
        &coeff,
        &back_neighbors,
        &mut assignment,
        0.0,
        &mut best,
    );
    Ok(best)
}

/// Σ_k ‖u(t_{k+1}) − u(t_k)‖_* over consecutive snapshots.
pub fn trajectory_variation(snapshots: &[Field]) -> Result<f64, Error> {
    if snapshots.len() < 2 {
        return Err(Error::DualNorm(
            "trajectory variation needs at least two snapshots".into(),
        ));
    }
    let grid = snapshots[0].grid();
    for s in snapshots.iter().skip(1) {
        if s.grid() != grid {
            return Err(Error::DualNorm("snapshots live on mismatched grids".into()));
        }
    }
    let mut acc = CompensatedSum::new();
    for pair in snapshots.windows(2) {
        let diff = pair[1].zip_with(&pair[0], |a, b| a - b);
        acc.add(dual_norm(&diff)?.value);
    }
    Ok(acc.value())
}

/// Largest violation of either constraint family.
pub fn feasibility_violation(psi: &Field) -> f64 {
    let grid = psi.grid();
    let v = psi.values();
    let mut worst = v
        .iter()
        .fold(0.0f64, |m, &x| m.max((x.abs() - 1.0).max(0.0)));
    for a in 0..grid.dim() {
        let h = grid.spacing()[a];
        grid.for_each_face(a, |_, lo, hi| {
            worst = worst.max(((v[lo] - v[hi]).abs() - h).max(0.0));
        });
    }
    worst
}
