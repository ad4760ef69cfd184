//! Exact s-t max-flow / min-cut (Dinic's algorithm) on small graphs with
//! real-valued capacities. Used to minimize the binary Potts energy.

/// A flow network with a fixed source and sink. Nodes are dense indices;
/// edges are stored as paired directed arcs with residual capacities.
#[derive(Debug, Clone)]
pub struct FlowNetwork {
    /// to, capacity; the reverse arc is at index ^ 1.
    arcs: Vec<(u32, f64)>,
    adj: Vec<Vec<u32>>,
    pub source: usize,
    pub sink: usize,
}

impl FlowNetwork {
    /// Creates a network with `n` interior nodes plus a source and sink
    /// appended at indices n and n + 1.
    pub fn new(n: usize) -> FlowNetwork {
        FlowNetwork {
            arcs: Vec::new(),
            adj: vec![Vec::new(); n + 2],
            source: n,
            sink: n + 1,
        }
    }

    /// Adds a directed arc and its zero-capacity reverse.
    pub fn add_arc(&mut self, from: usize, to: usize, capacity: f64) {
        debug_assert!(capacity >= 0.0);
        self.adj[from].push(self.arcs.len() as u32);
        self.arcs.push((to as u32, capacity));
        self.adj[to].push(self.arcs.len() as u32);
        self.arcs.push((from as u32, 0.0));
    }

    /// Adds an undirected edge: equal capacity in both directions.
    pub fn add_edge(&mut self, a: usize, b: usize, capacity: f64) {
        debug_assert!(capacity >= 0.0);
        self.adj[a].push(self.arcs.len() as u32);
        self.arcs.push((b as u32, capacity));
        self.adj[b].push(self.arcs.len() as u32);
        self.arcs.push((a as u32, capacity));
    }

    fn bfs_levels(&self) -> Option<Vec<i32>> {
        let mut level = vec![-1; self.adj.len()];
        let mut queue = std::collections::VecDeque::new();
        level[self.source] = 0;
        queue.push_back(self.source);
        while let Some(u) = queue.pop_front() {
            for &ai in &self.adj[u] {
                let (v, cap) = self.arcs[ai as usize];
                if cap > 1e-12 && level[v as usize] < 0 {
                    level[v as usize] = level[u] + 1;
                    queue.push_back(v as usize);
                }
            }
        }
        if level[self.sink] >= 0 {
            Some(level)
        } else {
            None
        }
    }

    fn dfs_push(&mut self, u: usize, pushed: f64, level: &[i32], it: &mut [usize]) -> f64 {
        if u == self.sink {
            return pushed;
        }
        while it[u] < self.adj[u].len() {
            let ai = self.adj[u][it[u]] as usize;
            let (v, cap) = self.arcs[ai];
            if cap > 1e-12 && level[v as usize] == level[u] + 1 {
                let sent = self.dfs_push(v as usize, pushed.min(cap), level, it);
                if sent > 0.0 {
                    self.arcs[ai].1 -= sent;
                    self.arcs[ai ^ 1].1 += sent;
                    return sent;
                }
            }
            it[u] += 1;
        }
        0.0
    }

    /// Runs Dinic to completion and returns the max-flow value.
    pub fn max_flow(&mut self) -> f64 {
        let mut total = 0.0;
        while let Some(level) = self.bfs_levels() {
            let mut it = vec![0; self.adj.len()];
            loop {
                let sent = self.dfs_push(self.source, f64::INFINITY, &level, &mut it);
                if sent <= 0.0 {
                    break;
                }
                total += sent;
            }
        }
        total
    }

    /// After max_flow: nodes reachable from the source in the residual
    /// graph. The min cut separates this set from the rest.
    pub fn source_side(&self) -> Vec<bool> {
        let mut seen = vec![false; self.adj.len()];
        let mut queue = std::collections::VecDeque::new();
        seen[self.source] = true;
        queue.push_back(self.source);
        while let Some(u) = queue.pop_front() {
            for &ai in &self.adj[u] {
                let (v, cap) = self.arcs[ai as usize];
                if cap > 1e-12 && !seen[v as usize] {
                    seen[v as usize] = true;
                    queue.push_back(v as usize);
                }
            }
        }
        seen
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_arc() {
        let mut net = FlowNetwork::new(0);
        let (s, t) = (net.source, net.sink);
        net.add_arc(s, t, 3.5);
        assert!((net.max_flow() - 3.5).abs() < 1e-12);
    }

    #[test]
    fn bottleneck_path() {
        // s -> 0 -> 1 -> t with capacities 5, 2, 7: flow limited to 2.
        let mut net = FlowNetwork::new(2);
        let (s, t) = (net.source, net.sink);
        net.add_arc(s, 0, 5.0);
        net.add_arc(0, 1, 2.0);
        net.add_arc(1, t, 7.0);
        assert!((net.max_flow() - 2.0).abs() < 1e-12);
        let side = net.source_side();
        assert!(side[s] && side[0]);
        assert!(!side[1] && !side[t]);
    }

    #[test]
    fn classic_diamond() {
        // Textbook two-path network:
        // s->a 10, s->b 10, a->t 9, b->t 10, a->b 1: max flow = 19.
        let mut net = FlowNetwork::new(2);
        let (s, t) = (net.source, net.sink);
        net.add_arc(s, 0, 10.0);
        net.add_arc(s, 1, 10.0);
        net.add_arc(0, t, 9.0);
        net.add_arc(1, t, 10.0);
        net.add_arc(0, 1, 1.0);
        assert!((net.max_flow() - 19.0).abs() < 1e-12);
    }

    #[test]
    fn undirected_edge_carries_flow_both_ways() {
        let mut net = FlowNetwork::new(2);
        let (s, t) = (net.source, net.sink);
        net.add_arc(s, 0, 4.0);
        net.add_edge(0, 1, 3.0);
        net.add_arc(1, t, 4.0);
        assert!((net.max_flow() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn disconnected_sink_zero_flow() {
        let mut net = FlowNetwork::new(1);
        let s = net.source;
        net.add_arc(s, 0, 5.0);
        assert_eq!(net.max_flow(), 0.0);
        let side = net.source_side();
        assert!(side[0]);
        assert!(!side[net.sink]);
    }
}
