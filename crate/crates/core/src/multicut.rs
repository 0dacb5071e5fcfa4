//! Minimum-cost multicut on signed graphs.
//!
//! Positive weights are attractive (cutting them costs), negative weights
//! repulsive. The objective of a decomposition is the total weight of its cut
//! edges, so lower is better.

use std::collections::{BTreeMap, BTreeSet};

use crate::atoms::{atom_overlap_graph_edges, Atom};
use crate::error::{Error, Result};
use crate::geometry::forward_backward_error;
use crate::numerics::{eigen_symmetric, SymmetricMatrix};
use crate::trajectory::TrajectorySet;

pub const EXACT_NODE_LIMIT: usize = 12;
const WEIGHT_CLIP: f64 = 10.0;
const WEIGHT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    node_count: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl WeightedGraph {
    /// Edges may be given in either orientation; they are stored as `i < j`,
    /// sorted.
    pub fn new(node_count: usize, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::with_capacity(edges.len());
        for (a, b, w) in edges {
            if a == b {
                return Err(Error::InvalidInput(format!("self-loop on node {a}")));
            }
            let (i, j) = (a.min(b), a.max(b));
            if j >= node_count {
                return Err(Error::InvalidInput(format!(
                    "edge ({i}, {j}) outside {node_count} nodes"
                )));
            }
            if !w.is_finite() {
                return Err(Error::InvalidInput(format!("edge ({i}, {j}) has weight {w}")));
            }
            if !seen.insert((i, j)) {
                return Err(Error::InvalidInput(format!("duplicate edge ({i}, {j})")));
            }
            out.push((i, j, w));
        }
        out.sort_by_key(|x| (x.0, x.1));
        Ok(Self {
            node_count,
            edges: out,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.node_count];
        for &(i, j, w) in &self.edges {
            adj[i].push((j, w));
            adj[j].push((i, w));
        }
        adj
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decomposition {
    node_labels: Vec<usize>,
    component_count: usize,
}

impl Decomposition {
    /// Relabels components in order of first appearance.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut map = BTreeMap::new();
        let node_labels = labels
            .iter()
            .map(|&l| {
                let next = map.len();
                *map.entry(l).or_insert(next)
            })
            .collect();
        Self {
            node_labels,
            component_count: map.len(),
        }
    }

    pub fn node_labels(&self) -> &[usize] {
        &self.node_labels
    }

    pub fn component_count(&self) -> usize {
        self.component_count
    }

    /// Total weight of edges joining different components.
    pub fn objective(&self, g: &WeightedGraph) -> f64 {
        g.edges
            .iter()
            .filter(|&&(i, j, _)| self.node_labels[i] != self.node_labels[j])
            .map(|&(_, _, w)| w)
            .sum()
    }

    /// Every component is connected through its own (uncut) edges.
    pub fn is_feasible(&self, g: &WeightedGraph) -> bool {
        if self.node_labels.len() != g.node_count {
            return false;
        }
        let mut uf = UnionFind::new(g.node_count);
        for &(i, j, _) in &g.edges {
            if self.node_labels[i] == self.node_labels[j] {
                uf.union(i, j);
            }
        }
        uf.sets() == self.component_count
    }

    fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.component_count];
        for (v, &l) in self.node_labels.iter().enumerate() {
            out[l].push(v);
        }
        out
    }
}

struct UnionFind {
    parent: Vec<usize>,
    sets: usize,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            sets: n,
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
            self.sets -= 1;
        }
    }

    fn sets(&self) -> usize {
        self.sets
    }
}

/// Log-odds edge weight from a forward-backward error: strongly positive for
/// errors well below `scale`, zero at `scale * ln 2`, negative beyond.
pub fn edge_weight_from_affinity(fb_error: f64, scale: f64) -> f64 {
    let e = (-fb_error / scale).exp();
    let w = ((2.0 * e) / (2.0 - 2.0 * e + WEIGHT_EPS)).ln();
    if w.is_nan() {
        return -WEIGHT_CLIP;
    }
    w.clamp(-WEIGHT_CLIP, WEIGHT_CLIP)
}

/// Cluster graph used by contraction: `links[c]` maps neighboring cluster ids
/// to the summed weight between them. Cluster ids are the smallest node id of
/// the cluster.
struct Contraction {
    links: Vec<BTreeMap<usize, f64>>,
    alive: Vec<bool>,
    owner: Vec<usize>,
    count: usize,
}

impl Contraction {
    fn new(g: &WeightedGraph) -> Self {
        let mut links = vec![BTreeMap::new(); g.node_count];
        for &(i, j, w) in &g.edges {
            *links[i].entry(j).or_insert(0.0) += w;
            *links[j].entry(i).or_insert(0.0) += w;
        }
        Self {
            links,
            alive: vec![true; g.node_count],
            owner: (0..g.node_count).collect(),
            count: g.node_count,
        }
    }

    fn from_decomposition(g: &WeightedGraph, d: &Decomposition) -> Self {
        let mut c = Self::new(g);
        for members in d.members() {
            for &v in &members[1..] {
                c.merge(members[0], v);
            }
        }
        c
    }

    /// Highest-weight adjacent pair, ties to the lexicographically lowest.
    fn best_pair(&self) -> Option<(usize, usize, f64)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for (a, nbrs) in self.links.iter().enumerate() {
            if !self.alive[a] {
                continue;
            }
            for (&b, &w) in nbrs.range(a + 1..) {
                if best.is_none_or(|(_, _, bw)| w > bw) {
                    best = Some((a, b, w));
                }
            }
        }
        best
    }

    fn merge(&mut self, a: usize, b: usize) {
        let (a, b) = (self.owner_of(a), self.owner_of(b));
        if a == b {
            return;
        }
        let (keep, gone) = (a.min(b), a.max(b));
        let moved = std::mem::take(&mut self.links[gone]);
        for (n, w) in moved {
            self.links[n].remove(&gone);
            if n != keep {
                *self.links[keep].entry(n).or_insert(0.0) += w;
                *self.links[n].entry(keep).or_insert(0.0) += w;
            }
        }
        self.links[keep].remove(&gone);
        self.alive[gone] = false;
        self.owner[gone] = keep;
        self.count -= 1;
    }

    fn owner_of(&mut self, mut v: usize) -> usize {
        while self.owner[v] != v {
            self.owner[v] = self.owner[self.owner[v]];
            v = self.owner[v];
        }
        v
    }

    fn decomposition(&mut self) -> Decomposition {
        let n = self.owner.len();
        let labels: Vec<usize> = (0..n).map(|v| self.owner_of(v)).collect();
        Decomposition::from_labels(&labels)
    }
}

/// Greedy additive edge contraction with the objective after each merge.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyTrace {
    pub decomposition: Decomposition,
    /// Objective of the initial all-singleton decomposition followed by the
    /// objective after every merge.
    pub objective_history: Vec<f64>,
}

pub fn solve_multicut_greedy_traced(g: &WeightedGraph, target_components: usize) -> GreedyTrace {
    let target = target_components.max(1);
    let mut c = Contraction::new(g);
    let mut objective: f64 = g.edges.iter().map(|e| e.2).sum();
    let mut history = vec![objective];
    while c.count > target {
        match c.best_pair() {
            Some((a, b, w)) if w > 0.0 => {
                c.merge(a, b);
                objective -= w;
                history.push(objective);
            }
            _ => break,
        }
    }
    GreedyTrace {
        decomposition: c.decomposition(),
        objective_history: history,
    }
}

/// Merges the pair of adjacent components with the largest positive total
/// weight until none is left or `target_components` is reached.
pub fn solve_multicut_greedy(g: &WeightedGraph, target_components: usize) -> Decomposition {
    solve_multicut_greedy_traced(g, target_components).decomposition
}

/// Exhaustive search over set partitions (restricted growth strings) for the
/// feasible decomposition of minimum objective; ties go to fewer components,
/// then to the lexicographically smallest labeling.
pub fn solve_multicut_exact(g: &WeightedGraph) -> Result<Decomposition> {
    let n = g.node_count;
    if n > EXACT_NODE_LIMIT {
        return Err(Error::TooLarge {
            nodes: n,
            limit: EXACT_NODE_LIMIT,
        });
    }
    if n == 0 {
        return Ok(Decomposition::from_labels(&[]));
    }
    let mut labels = vec![0usize; n];
    // prefix maxima of the restricted growth string
    let mut maxes = vec![0usize; n];
    let mut best: Option<(f64, usize, Vec<usize>)> = None;
    loop {
        let blocks = maxes[n - 1] + 1;
        if is_connected_partition(g, &labels, blocks) {
            let cost: f64 = g
                .edges
                .iter()
                .filter(|&&(i, j, _)| labels[i] != labels[j])
                .map(|e| e.2)
                .sum();
            let better = match &best {
                None => true,
                Some((bc, bk, _)) => {
                    let tol = 1e-12 * (1.0 + bc.abs());
                    cost < bc - tol || ((cost - bc).abs() <= tol && blocks < *bk)
                }
            };
            if better {
                best = Some((cost, blocks, labels.clone()));
            }
        }
        // next restricted growth string
        let mut i = n - 1;
        loop {
            if i == 0 {
                let (_, _, l) = best.expect("at least one partition is feasible");
                return Ok(Decomposition::from_labels(&l));
            }
            if labels[i] <= maxes[i - 1] {
                labels[i] += 1;
                maxes[i] = maxes[i - 1].max(labels[i]);
                for k in i + 1..n {
                    labels[k] = 0;
                    maxes[k] = maxes[i];
                }
                break;
            }
            i -= 1;
        }
    }
}

fn is_connected_partition(g: &WeightedGraph, labels: &[usize], blocks: usize) -> bool {
    let mut uf = UnionFind::new(g.node_count);
    for &(i, j, _) in &g.edges {
        if labels[i] == labels[j] {
            uf.union(i, j);
        }
    }
    uf.sets() == blocks
}

/// Greedy contraction, then forced merges or splits until exactly `target`
/// components remain (when the graph permits it).
///
/// Forced merges join the adjacent pair with the largest (least negative)
/// weight. Forced splits bisect the largest component along the Fiedler
/// vector of its attractive edges, keeping both halves connected.
pub fn solve_multicut_to_target(g: &WeightedGraph, target: usize) -> Decomposition {
    let target = target.max(1).min(g.node_count.max(1));
    let mut d = solve_multicut_greedy(g, target);
    if d.component_count > target {
        let mut c = Contraction::from_decomposition(g, &d);
        while c.count > target {
            let Some((a, b, _)) = c.best_pair() else {
                break;
            };
            c.merge(a, b);
        }
        d = c.decomposition();
    }
    let adj = g.adjacency();
    while d.component_count < target {
        let members = d.members();
        let Some(victim) = (0..members.len())
            .filter(|&c| members[c].len() >= 2)
            .max_by(|&a, &b| members[a].len().cmp(&members[b].len()).then(b.cmp(&a)))
        else {
            break;
        };
        let split_off = bisect_component(&members[victim], &adj);
        let mut labels = d.node_labels.clone();
        let fresh = d.component_count;
        for v in split_off {
            labels[v] = fresh;
        }
        d = Decomposition::from_labels(&labels);
    }
    d
}

/// Returns a connected proper subset `B` of the connected node set `s` such
/// that `s \ B` is connected too.
fn bisect_component(s: &[usize], adj: &[Vec<(usize, f64)>]) -> Vec<usize> {
    let n = s.len();
    let index: BTreeMap<usize, usize> = s.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut w = vec![vec![0.0; n]; n];
    for (a, &v) in s.iter().enumerate() {
        for &(u, wt) in &adj[v] {
            if let Some(&b) = index.get(&u) {
                w[a][b] = wt.max(0.0) + 1e-3;
            }
        }
    }
    let deg: Vec<f64> = w.iter().map(|r| r.iter().sum::<f64>().max(1e-12)).collect();
    let mut m = SymmetricMatrix::zeros(n);
    for a in 0..n {
        for b in a..n {
            m.set(a, b, w[a][b] / (deg[a] * deg[b]).sqrt());
        }
    }
    let fiedler: Vec<f64> = match eigen_symmetric(&m) {
        Ok(e) if n >= 2 => (0..n).map(|a| e.vectors[(a, 1)] / deg[a].sqrt()).collect(),
        _ => (0..n).map(|a| a as f64).collect(),
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| fiedler[b].total_cmp(&fiedler[a]).then(a.cmp(&b)));
    let upper: BTreeSet<usize> = order[..n / 2].iter().copied().collect();

    let sub_adj = |a: usize| -> Vec<usize> {
        adj[s[a]]
            .iter()
            .filter_map(|(u, _)| index.get(u).copied())
            .collect()
    };
    let a0 = largest_component(&upper, &sub_adj);
    let rest: BTreeSet<usize> = (0..n).filter(|a| !a0.contains(a)).collect();
    let b = largest_component(&rest, &sub_adj);
    b.into_iter().map(|a| s[a]).collect()
}

fn largest_component(nodes: &BTreeSet<usize>, nbrs: &dyn Fn(usize) -> Vec<usize>) -> BTreeSet<usize> {
    let mut seen = BTreeSet::new();
    let mut best = BTreeSet::new();
    for &start in nodes {
        if seen.contains(&start) {
            continue;
        }
        let mut comp = BTreeSet::from([start]);
        let mut stack = vec![start];
        seen.insert(start);
        while let Some(x) = stack.pop() {
            for y in nbrs(x) {
                if nodes.contains(&y) && seen.insert(y) {
                    comp.insert(y);
                    stack.push(y);
                }
            }
        }
        if comp.len() > best.len() {
            best = comp;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct FineModelConfig {
    /// Forward-backward error (pixels) at which an edge turns repulsive,
    /// up to a factor `ln 2`.
    pub weight_scale: f64,
    /// Lower bound on the scale as a multiple of the atom inlier threshold,
    /// so that noisier input tolerates larger errors. Zero disables it.
    pub threshold_multiple: f64,
    /// Nearest neighbors per atom in the overlap graph.
    pub k_neighbors: usize,
}

impl FineModelConfig {
    pub fn effective_scale(&self, inlier_threshold: f64) -> f64 {
        self.weight_scale.max(self.threshold_multiple * inlier_threshold)
    }
}

impl Default for FineModelConfig {
    fn default() -> Self {
        Self {
            weight_scale: 3.0,
            threshold_multiple: 3.0,
            k_neighbors: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FineModels {
    /// Model id per atom, in `[0, model_count)`.
    pub atom_labels: Vec<usize>,
    pub model_count: usize,
    pub graph: WeightedGraph,
}

/// Symmetric forward-backward error between two atoms: each atom's own
/// transform is undone by the other atom's transform fitted on the reversed
/// frame pair, and the worse of the two round trips is kept.
pub fn atom_pair_fb_error(a: &Atom, b: &Atom, traj: &TrajectorySet) -> f64 {
    let one_way = |x: &Atom, y: &Atom| -> f64 {
        let fr = x.frames;
        let Ok(back) = y.transform_between(traj, fr.reversed()) else {
            return f64::INFINITY;
        };
        forward_backward_error(
            &x.transform,
            &traj.points_at(&x.feature_ids, fr.l),
            &traj.points_at(&x.feature_ids, fr.r),
            &back,
        )
    };
    one_way(a, b).max(one_way(b, a))
}

/// Splits the atoms into exactly `2 * num_motions` fine motion models. Edge
/// weights use `cfg.weight_scale` as is; see
/// [`FineModelConfig::effective_scale`] for the noise-aware scale.
pub fn fine_models_from_atoms(
    atoms: &[Atom],
    traj: &TrajectorySet,
    num_motions: usize,
    cfg: &FineModelConfig,
) -> Result<FineModels> {
    if num_motions == 0 {
        return Err(Error::InvalidInput("motion count must be positive".into()));
    }
    if !(cfg.weight_scale > 0.0) {
        return Err(Error::InvalidInput("weight_scale must be positive".into()));
    }
    let target = 2 * num_motions;
    if atoms.len() < target {
        return Err(Error::InsufficientAtoms {
            required: target,
            found: atoms.len(),
        });
    }
    let mut pairs = atom_overlap_graph_edges(atoms, cfg.k_neighbors);
    pairs.extend(bridge_edges(atoms, &pairs));
    let edges = pairs
        .into_iter()
        .map(|(i, j)| {
            let fb = atom_pair_fb_error(&atoms[i], &atoms[j], traj);
            (i, j, edge_weight_from_affinity(fb, cfg.weight_scale))
        })
        .collect();
    let graph = WeightedGraph::new(atoms.len(), edges)?;
    let d = solve_multicut_to_target(&graph, target);
    Ok(FineModels {
        atom_labels: d.node_labels.clone(),
        model_count: d.component_count,
        graph,
    })
}

/// Extra edges that connect the components of the overlap graph, each
/// joining the closest pair of atoms (first-frame centroids) between a
/// component and the rest of the graph.
fn bridge_edges(atoms: &[Atom], edges: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let n = atoms.len();
    let mut uf = UnionFind::new(n);
    for &(i, j) in edges {
        uf.union(i, j);
    }
    let mut out = Vec::new();
    while uf.sets() > 1 {
        let root0 = uf.find(0);
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            if uf.find(i) != root0 {
                continue;
            }
            for j in 0..n {
                if uf.find(j) == root0 {
                    continue;
                }
                let [ax, ay] = atoms[i].centroid_per_frame[0];
                let [bx, by] = atoms[j].centroid_per_frame[0];
                let d = (ax - bx).powi(2) + (ay - by).powi(2);
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, i, j));
                }
            }
        }
        let (_, i, j) = best.expect("more than one component");
        uf.union(i, j);
        out.push((i.min(j), i.max(j)));
    }
    out
}
