use std::collections::VecDeque;

use super::ArcCosts;

struct Edge {
    to: usize,
    cap: f64,
}

struct Dinic {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
    level: Vec<i64>,
    next: Vec<usize>,
}

impl Dinic {
    fn new(nodes: usize) -> Self {
        Dinic {
            edges: Vec::new(),
            adj: vec![Vec::new(); nodes],
            level: vec![-1; nodes],
            next: vec![0; nodes],
        }
    }

    fn add(&mut self, a: usize, b: usize, cap: f64) {
        self.adj[a].push(self.edges.len());
        self.edges.push(Edge { to: b, cap });
        self.adj[b].push(self.edges.len());
        self.edges.push(Edge { to: a, cap: 0.0 });
    }

    fn bfs(&mut self, s: usize, t: usize, eps: f64) -> bool {
        self.level.iter_mut().for_each(|l| *l = -1);
        self.level[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(a) = queue.pop_front() {
            for &e in &self.adj[a] {
                let b = self.edges[e].to;
                if self.edges[e].cap > eps && self.level[b] < 0 {
                    self.level[b] = self.level[a] + 1;
                    queue.push_back(b);
                }
            }
        }
        self.level[t] >= 0
    }

    fn dfs(&mut self, a: usize, t: usize, pushed: f64, eps: f64) -> f64 {
        if a == t {
            return pushed;
        }
        while self.next[a] < self.adj[a].len() {
            let e = self.adj[a][self.next[a]];
            let b = self.edges[e].to;
            if self.edges[e].cap > eps && self.level[b] == self.level[a] + 1 {
                let got = self.dfs(b, t, pushed.min(self.edges[e].cap), eps);
                if got > 0.0 {
                    self.edges[e].cap -= got;
                    self.edges[e ^ 1].cap += got;
                    return got;
                }
            }
            self.next[a] += 1;
        }
        0.0
    }

    fn max_flow(&mut self, s: usize, t: usize, eps: f64) -> f64 {
        let mut total = 0.0;
        while self.bfs(s, t, eps) {
            self.next.iter_mut().for_each(|n| *n = 0);
            loop {
                let f = self.dfs(s, t, f64::INFINITY, eps);
                if f <= 0.0 {
                    break;
                }
                total += f;
            }
        }
        total
    }
}

/// Whether all supply can reach the demand over the finite arcs.
pub fn is_feasible(c: &ArcCosts, supply: &[f64], demand: &[f64]) -> bool {
    let (r, k) = (supply.len(), demand.len());
    let total: f64 = supply.iter().sum();
    if c.iter().flatten().all(Option::is_some) {
        return r > 0 && k > 0;
    }
    let (s, t) = (r + k, r + k + 1);
    let mut g = Dinic::new(r + k + 2);
    for (i, &w) in supply.iter().enumerate() {
        g.add(s, i, w);
    }
    for (j, &w) in demand.iter().enumerate() {
        g.add(r + j, t, w);
    }
    for (i, row) in c.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if v.is_some() {
                g.add(i, r + j, f64::INFINITY);
            }
        }
    }
    g.max_flow(s, t, 1e-15) >= total - 1e-9
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocked_column() {
        let c = vec![vec![Some(1.0), None], vec![Some(1.0), None]];
        assert!(!is_feasible(&c, &[0.5, 0.5], &[0.5, 0.5]));
    }

    #[test]
    fn hall_violation() {
        // two sources can only use one sink of capacity 1/3
        let c = vec![
            vec![Some(0.0), None, None],
            vec![Some(0.0), None, None],
            vec![Some(0.0), Some(0.0), Some(0.0)],
        ];
        let w = [1.0 / 3.0; 3];
        assert!(!is_feasible(&c, &w, &w));
        let ok = vec![
            vec![Some(0.0), None, None],
            vec![None, Some(0.0), None],
            vec![Some(0.0), Some(0.0), Some(0.0)],
        ];
        assert!(is_feasible(&ok, &w, &w));
    }
}
