//! Primal network simplex for the transportation problem on a bipartite
//! graph, with a spanning-tree basis and a big-M artificial root. Entering
//! arcs come from block pricing; after a run of degenerate pivots pricing
//! falls back to Bland's rule until the objective moves again. The leaving
//! arc is always chosen by Bland's rule.

/// Result of a solve: flows on the real arcs and node potentials with
/// `y[to] - y[from] = cost` on every basic arc.
#[derive(Debug, Clone)]
pub struct SimplexSolution {
    /// Flow per real arc, in the order the arcs were given.
    pub flows: Vec<f64>,
    /// Potentials of the sources.
    pub source_potentials: Vec<f64>,
    /// Potentials of the sinks.
    pub sink_potentials: Vec<f64>,
    /// Flow left on artificial arcs; positive means infeasible.
    pub artificial_flow: f64,
    /// Real arcs in the final basis.
    pub basic: Vec<bool>,
    pub pivots: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct Arc {
    pub source: usize,
    pub sink: usize,
    pub cost: f64,
}

const NONE: usize = usize::MAX;

struct Tree {
    from: Vec<usize>,
    to: Vec<usize>,
    cost: Vec<f64>,
    flow: Vec<f64>,
    in_tree: Vec<bool>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    depth: Vec<usize>,
    potential: Vec<f64>,
    children: Vec<Vec<usize>>,
}

impl Tree {
    fn reduced_cost(&self, a: usize) -> f64 {
        self.cost[a] - (self.potential[self.to[a]] - self.potential[self.from[a]])
    }

    fn detach_child(&mut self, parent: usize, child: usize) {
        let c = &mut self.children[parent];
        let pos = c.iter().position(|&x| x == child).expect("child is listed");
        c.swap_remove(pos);
    }

    /// Recomputes depth and potential below `root` from its parent link.
    fn refresh_subtree(&mut self, root: usize) {
        let mut stack = vec![root];
        while let Some(node) = stack.pop() {
            let p = self.parent[node];
            let a = self.pred[node];
            self.depth[node] = self.depth[p] + 1;
            self.potential[node] = if self.from[a] == p {
                self.potential[p] + self.cost[a]
            } else {
                self.potential[p] - self.cost[a]
            };
            stack.extend(self.children[node].iter().copied());
        }
    }

    /// Returns the step length, or `None` when the cycle is unbounded.
    fn pivot(&mut self, entering: usize) -> Option<f64> {
        let (u, v) = (self.from[entering], self.to[entering]);
        // Cycle orientation: flow rises on the entering arc u -> v and
        // returns along the tree path v -> lca -> u.
        let mut v_side = Vec::new();
        let mut u_side = Vec::new();
        let (mut a, mut b) = (v, u);
        while a != b {
            if self.depth[a] >= self.depth[b] {
                v_side.push(a);
                a = self.parent[a];
            } else {
                u_side.push(b);
                b = self.parent[b];
            }
        }
        // walking up from v: the arc pred[w] is traversed w -> parent(w)
        // walking down to u: the arc pred[w] is traversed parent(w) -> w
        let decreases_v = |t: &Tree, w: usize| t.from[t.pred[w]] != w;
        let decreases_u = |t: &Tree, w: usize| t.from[t.pred[w]] == w;
        let mut theta = f64::INFINITY;
        for &w in &v_side {
            if decreases_v(self, w) {
                theta = theta.min(self.flow[self.pred[w]]);
            }
        }
        for &w in &u_side {
            if decreases_u(self, w) {
                theta = theta.min(self.flow[self.pred[w]]);
            }
        }
        if !theta.is_finite() {
            return None;
        }
        let tie = 1e-14 * (1.0 + theta.abs());
        // Bland: among the blocking arcs, the lowest index leaves
        let mut leaving: Option<(usize, bool)> = None;
        for (&w, on_v) in v_side.iter().map(|w| (w, true)).chain(u_side.iter().map(|w| (w, false))) {
            let dec = if on_v { decreases_v(self, w) } else { decreases_u(self, w) };
            let arc = self.pred[w];
            if dec && self.flow[arc] <= theta + tie && leaving.is_none_or(|(l, _)| arc < self.pred[l]) {
                leaving = Some((w, on_v));
            }
        }
        let (w_leave, on_v_side) = leaving.expect("a blocking arc exists");
        let leave_arc = self.pred[w_leave];

        self.flow[entering] += theta;
        for &w in &v_side {
            let arc = self.pred[w];
            self.flow[arc] += if decreases_v(self, w) { -theta } else { theta };
        }
        for &w in &u_side {
            let arc = self.pred[w];
            self.flow[arc] += if decreases_u(self, w) { -theta } else { theta };
        }
        self.flow[leave_arc] = 0.0;
        for &w in v_side.iter().chain(&u_side) {
            let arc = self.pred[w];
            if self.flow[arc] < 0.0 {
                self.flow[arc] = 0.0;
            }
        }

        // Reattach the subtree cut off below w_leave through the entering arc.
        let (q, anchor) = if on_v_side { (v, u) } else { (u, v) };
        let mut path = vec![q];
        while *path.last().expect("nonempty") != w_leave {
            let last = *path.last().expect("nonempty");
            path.push(self.parent[last]);
        }
        self.detach_child(self.parent[w_leave], w_leave);
        // reverse parent links along q -> ... -> w_leave
        for k in (1..path.len()).rev() {
            let (child, par) = (path[k - 1], path[k]);
            self.detach_child(par, child);
            self.parent[par] = child;
            self.pred[par] = self.pred[child];
            self.children[child].push(par);
        }
        self.parent[q] = anchor;
        self.pred[q] = entering;
        self.children[anchor].push(q);
        self.in_tree[leave_arc] = false;
        self.in_tree[entering] = true;
        self.refresh_subtree(q);
        Some(theta)
    }
}

const DEGENERATE_LIMIT: usize = 64;

/// Most negative reduced cost within the first block, starting at `cursor`,
/// that holds an eligible arc.
fn block_search(tree: &Tree, cursor: &mut usize, block: usize, eps: f64) -> Option<usize> {
    let total = tree.cost.len();
    let mut best: Option<(f64, usize)> = None;
    let mut seen = 0;
    for k in 0..total {
        let a = (*cursor + k) % total;
        if !tree.in_tree[a] {
            let rc = tree.reduced_cost(a);
            if rc < -eps && best.is_none_or(|(b, _)| rc < b) {
                best = Some((rc, a));
            }
        }
        seen += 1;
        if seen == block {
            seen = 0;
            if best.is_some() {
                *cursor = (a + 1) % total;
                break;
            }
        }
    }
    best.map(|(_, a)| a)
}

/// Minimizes `sum cost * flow` subject to `sum_j flow(i,j) = supply_i` and
/// `sum_i flow(i,j) = demand_j`, over the given arcs only.
pub fn solve(supply: &[f64], demand: &[f64], arcs: &[Arc]) -> SimplexSolution {
    let (r, c) = (supply.len(), demand.len());
    let root = r + c;
    let nodes = r + c + 1;
    let real = arcs.len();
    let cmax = arcs.iter().map(|a| a.cost.abs()).fold(0.0, f64::max);
    let big_m = 1.0 + (nodes as f64) * (1.0 + cmax);

    let mut from = Vec::with_capacity(real + r + c);
    let mut to = Vec::with_capacity(real + r + c);
    let mut cost = Vec::with_capacity(real + r + c);
    for a in arcs {
        from.push(a.source);
        to.push(r + a.sink);
        cost.push(a.cost);
    }
    let mut flow = vec![0.0; real];
    let mut parent = vec![NONE; nodes];
    let mut pred = vec![NONE; nodes];
    let mut depth = vec![0; nodes];
    let mut potential = vec![0.0; nodes];
    let mut children = vec![Vec::new(); nodes];
    for (i, &s) in supply.iter().enumerate() {
        pred[i] = from.len();
        from.push(i);
        to.push(root);
        cost.push(big_m);
        flow.push(s);
        parent[i] = root;
        depth[i] = 1;
        potential[i] = -big_m;
        children[root].push(i);
    }
    for (j, &d) in demand.iter().enumerate() {
        pred[r + j] = from.len();
        from.push(root);
        to.push(r + j);
        cost.push(big_m);
        flow.push(d);
        parent[r + j] = root;
        depth[r + j] = 1;
        potential[r + j] = big_m;
        children[root].push(r + j);
    }
    let total = from.len();
    let mut in_tree = vec![false; total];
    in_tree[real..].iter_mut().for_each(|b| *b = true);
    let mut tree = Tree {
        from,
        to,
        cost,
        flow,
        in_tree,
        parent,
        pred,
        depth,
        potential,
        children,
    };

    let eps = 1e-12 * (1.0 + cmax);
    let block = ((total as f64).sqrt() as usize).max(16);
    let mut cursor = 0;
    let mut degenerate_run = 0;
    let mut pivots = 0;
    loop {
        let entering = if degenerate_run >= DEGENERATE_LIMIT {
            (0..total).find(|&a| !tree.in_tree[a] && tree.reduced_cost(a) < -eps)
        } else {
            block_search(&tree, &mut cursor, block, eps)
        };
        let Some(e) = entering else {
            break;
        };
        match tree.pivot(e) {
            None => break,
            Some(theta) if theta > 0.0 => degenerate_run = 0,
            Some(_) => degenerate_run += 1,
        }
        pivots += 1;
    }

    let shift = tree.potential[0];
    SimplexSolution {
        flows: tree.flow[..real].to_vec(),
        source_potentials: tree.potential[..r].iter().map(|p| p - shift).collect(),
        sink_potentials: tree.potential[r..r + c].iter().map(|p| p - shift).collect(),
        artificial_flow: tree.flow[real..].iter().sum(),
        basic: tree.in_tree[..real].to_vec(),
        pivots,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(c: &[Vec<f64>]) -> Vec<Arc> {
        let mut arcs = Vec::new();
        for (i, row) in c.iter().enumerate() {
            for (j, &cost) in row.iter().enumerate() {
                arcs.push(Arc { source: i, sink: j, cost });
            }
        }
        arcs
    }

    #[test]
    fn monotone_assignment() {
        let xs = [0.0, 1.0, 2.0];
        let ys = [0.5, 1.5, 2.5];
        let c: Vec<Vec<f64>> = xs.iter().map(|x| ys.iter().map(|y| (x - y) * (x - y) / 2.0).collect()).collect();
        let w = [1.0 / 3.0; 3];
        let s = solve(&w, &w, &dense(&c));
        let obj: f64 = s.flows.iter().zip(dense(&c)).map(|(f, a)| f * a.cost).sum();
        assert!((obj - 0.125).abs() < 1e-12);
        assert!(s.artificial_flow < 1e-12);
        // tree potentials price every basic arc exactly
        for (k, a) in dense(&c).iter().enumerate() {
            let rc = a.cost - (s.sink_potentials[a.sink] - s.source_potentials[a.source]);
            assert!(rc >= -1e-9);
            if s.basic[k] {
                assert!(rc.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn split_mass() {
        let c = vec![vec![0.5, 2.0]];
        let s = solve(&[1.0], &[0.5, 0.5], &dense(&c));
        assert!((s.flows[0] - 0.5).abs() < 1e-15 && (s.flows[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn missing_arcs_leave_artificial_flow() {
        let arcs = vec![Arc { source: 0, sink: 0, cost: 1.0 }, Arc { source: 1, sink: 0, cost: 1.0 }];
        let s = solve(&[0.5, 0.5], &[0.5, 0.5], &arcs);
        assert!(s.artificial_flow > 0.4);
    }

    #[test]
    fn degenerate_square_terminates() {
        let n = 6;
        let c: Vec<Vec<f64>> = (0..n).map(|_| vec![1.0; n]).collect();
        let w = vec![1.0 / n as f64; n];
        let s = solve(&w, &w, &dense(&c));
        let obj: f64 = s.flows.iter().sum();
        assert!((obj - 1.0).abs() < 1e-12);
    }
}
