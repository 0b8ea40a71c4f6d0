//! Exact Wasserstein-1 distances by the primal network simplex method.
//!
//! The transportation problem between `N` sources and `K` sinks is solved on the
//! complete bipartite graph with an artificial root (Big-M start). The spanning
//! tree is kept in thread/parent form so pivots cost time proportional to the
//! subtree they move. Supplies are scaled to integers, so every pivot is exact and
//! only the potentials carry rounding.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::GridDensity;
use crate::particles::ParticleState;

/// Upper bound on `N · K` cost-matrix entries.
pub const COST_GUARD: usize = 10_000_000;

/// Total mass after integer scaling.
const MASS_SCALE: f64 = 1e15;

const NONE: usize = usize::MAX;
const INF: i64 = i64::MAX;

/// Rounds nonnegative masses to integers summing to `MASS_SCALE` (largest remainder).
fn integer_masses(masses: &[f64]) -> Result<Vec<i64>> {
    let total: f64 = masses.iter().sum();
    if !(total > 0.0) || !total.is_finite() || masses.iter().any(|m| !(*m >= 0.0)) {
        return Err(Error::invalid("masses", "must be nonnegative with positive finite sum"));
    }
    let scaled: Vec<f64> = masses.iter().map(|m| m / total * MASS_SCALE).collect();
    let mut out: Vec<i64> = scaled.iter().map(|s| s.floor() as i64).collect();
    let short = MASS_SCALE as i64 - out.iter().sum::<i64>();
    let mut order: Vec<usize> = (0..masses.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = scaled[a] - scaled[a].floor();
        let fb = scaled[b] - scaled[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(short.max(0) as usize) {
        out[i] += 1;
    }
    Ok(out)
}

struct Simplex<'a> {
    sources: usize,
    sinks: usize,
    cost: &'a [f64],
    art_cost: f64,
    supply: Vec<i64>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    /// Whether the tree arc to the parent points upwards (node -> parent).
    up: Vec<bool>,
    /// Flow on the tree arc to the parent.
    flow: Vec<i64>,
    thread: Vec<usize>,
    rev_thread: Vec<usize>,
    succ_num: Vec<usize>,
    last_succ: Vec<usize>,
    pi: Vec<f64>,
    in_tree: Vec<bool>,
    dirty: Vec<usize>,
    block: usize,
    next_arc: usize,
    eps: f64,
}

impl<'a> Simplex<'a> {
    fn new(supply: &[i64], demand: &[i64], cost: &'a [f64]) -> Self {
        let (sources, sinks) = (supply.len(), demand.len());
        let nodes = sources + sinks;
        let root = nodes;
        let max_cost = cost.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let art_cost = (max_cost + 1.0) * nodes as f64;
        let arcs = sources * sinks;
        let mut s = Self {
            sources,
            sinks,
            cost,
            art_cost,
            supply: supply.iter().copied().chain(demand.iter().map(|d| -d)).collect(),
            parent: vec![root; nodes + 1],
            pred: (0..=nodes).map(|u| arcs + u).collect(),
            up: vec![true; nodes + 1],
            flow: vec![0; nodes + 1],
            thread: (1..=nodes + 1).collect(),
            rev_thread: vec![0; nodes + 1],
            succ_num: vec![1; nodes + 1],
            last_succ: (0..=nodes).collect(),
            pi: vec![0.0; nodes + 1],
            in_tree: vec![false; arcs],
            dirty: Vec::new(),
            block: ((arcs as f64).sqrt() as usize).max(10),
            next_arc: 0,
            eps: 64.0 * f64::EPSILON * art_cost,
        };
        for u in 0..nodes {
            s.rev_thread[u + 1] = u;
            if s.supply[u] >= 0 {
                s.up[u] = true;
                s.flow[u] = s.supply[u];
            } else {
                s.up[u] = false;
                s.flow[u] = -s.supply[u];
                s.pi[u] = art_cost;
            }
        }
        s.parent[root] = NONE;
        s.pred[root] = NONE;
        s.thread[root] = 0;
        s.rev_thread[0] = root;
        s.succ_num[root] = nodes + 1;
        s.last_succ[root] = root - 1;
        s
    }

    #[inline]
    fn endpoints(&self, arc: usize) -> (usize, usize) {
        (arc / self.sinks, self.sources + arc % self.sinks)
    }

    /// Block search for an arc with negative reduced cost.
    fn find_entering(&mut self) -> Option<usize> {
        let arcs = self.sources * self.sinks;
        let (k, off) = (self.sinks, self.sources);
        let mut best = None;
        let mut min = -self.eps;
        let mut count = self.block;
        let mut e = self.next_arc;
        let (mut i, mut j) = (e / k, e % k);
        for _ in 0..arcs {
            let c = self.cost[e] + self.pi[i] - self.pi[off + j];
            if c < min && !self.in_tree[e] {
                min = c;
                best = Some(e);
            }
            e += 1;
            j += 1;
            if j == k {
                j = 0;
                i += 1;
                if i == self.sources {
                    i = 0;
                    e = 0;
                }
            }
            count -= 1;
            if count == 0 {
                if best.is_some() {
                    break;
                }
                count = self.block;
            }
        }
        self.next_arc = e;
        best
    }

    fn find_join(&self, mut u: usize, mut v: usize) -> usize {
        while u != v {
            if self.succ_num[u] < self.succ_num[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        u
    }

    fn pivot(&mut self, in_arc: usize) -> Result<()> {
        let (first, second) = self.endpoints(in_arc);
        let join = self.find_join(first, second);

        // leaving arc: the blocking tree arc on the cycle
        let mut delta = INF;
        let mut u_out = NONE;
        let mut side = 0;
        let mut u = first;
        while u != join {
            if self.up[u] && self.flow[u] < delta {
                delta = self.flow[u];
                u_out = u;
                side = 1;
            }
            u = self.parent[u];
        }
        u = second;
        while u != join {
            if !self.up[u] && self.flow[u] <= delta {
                delta = self.flow[u];
                u_out = u;
                side = 2;
            }
            u = self.parent[u];
        }
        if side == 0 {
            return Err(Error::Numerical("transport problem is unbounded".into()));
        }
        let (u_in, v_in) = if side == 1 { (first, second) } else { (second, first) };

        if delta > 0 {
            let mut u = first;
            while u != join {
                self.flow[u] -= if self.up[u] { delta } else { -delta };
                u = self.parent[u];
            }
            u = second;
            while u != join {
                self.flow[u] += if self.up[u] { delta } else { -delta };
                u = self.parent[u];
            }
        }
        let leaving = self.pred[u_out];
        if leaving < self.in_tree.len() {
            self.in_tree[leaving] = false;
        }
        self.in_tree[in_arc] = true;

        self.update_tree(in_arc, delta, join, u_in, v_in, u_out);

        // potentials of the moved subtree
        let c = self.cost[in_arc];
        let sigma = self.pi[v_in] - self.pi[u_in] - if self.up[u_in] { c } else { -c };
        let end = self.thread[self.last_succ[u_in]];
        let mut u = u_in;
        while u != end {
            self.pi[u] += sigma;
            u = self.thread[u];
        }
        Ok(())
    }

    fn update_tree(&mut self, in_arc: usize, in_flow: i64, join: usize, u_in: usize, v_in: usize, u_out: usize) {
        let in_source = in_arc / self.sinks;
        let old_rev_thread = self.rev_thread[u_out];
        let old_succ_num = self.succ_num[u_out];
        let old_last_succ = self.last_succ[u_out];
        let v_out = self.parent[u_out];

        if u_in == u_out {
            self.parent[u_in] = v_in;
            self.pred[u_in] = in_arc;
            self.up[u_in] = u_in == in_source;
            self.flow[u_in] = in_flow;
            if self.thread[v_in] != u_out {
                let mut after = self.thread[old_last_succ];
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
                after = self.thread[v_in];
                self.thread[v_in] = u_out;
                self.rev_thread[u_out] = v_in;
                self.thread[old_last_succ] = after;
                self.rev_thread[after] = old_last_succ;
            }
        } else {
            let thread_continue = if old_rev_thread == v_in {
                self.thread[old_last_succ]
            } else {
                self.thread[v_in]
            };

            // reverse the stem u_in .. u_out in the thread and parent arrays
            let mut stem = u_in;
            let mut par_stem = v_in;
            let mut last = self.last_succ[u_in];
            let mut after = self.thread[last];
            self.thread[v_in] = u_in;
            self.dirty.clear();
            self.dirty.push(v_in);
            while stem != u_out {
                let next_stem = self.parent[stem];
                self.thread[last] = next_stem;
                self.dirty.push(last);

                let before = self.rev_thread[stem];
                self.thread[before] = after;
                self.rev_thread[after] = before;

                self.parent[stem] = par_stem;
                par_stem = stem;
                stem = next_stem;

                last = if self.last_succ[stem] == self.last_succ[par_stem] {
                    self.rev_thread[par_stem]
                } else {
                    self.last_succ[stem]
                };
                after = self.thread[last];
            }
            self.parent[u_out] = par_stem;
            self.thread[last] = thread_continue;
            self.rev_thread[thread_continue] = last;
            self.last_succ[u_out] = last;

            if old_rev_thread != v_in {
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
            }
            for k in 0..self.dirty.len() {
                let u = self.dirty[k];
                self.rev_thread[self.thread[u]] = u;
            }

            // shift pred arcs, their flows and the subtree data down the stem
            let mut tmp_sc = 0;
            let tmp_ls = self.last_succ[u_out];
            let mut u = u_out;
            while u != u_in {
                let p = self.parent[u];
                self.pred[u] = self.pred[p];
                self.up[u] = !self.up[p];
                self.flow[u] = self.flow[p];
                tmp_sc += self.succ_num[u] - self.succ_num[p];
                self.succ_num[u] = tmp_sc;
                self.last_succ[p] = tmp_ls;
                u = p;
            }
            self.pred[u_in] = in_arc;
            self.up[u_in] = u_in == in_source;
            self.flow[u_in] = in_flow;
            self.succ_num[u_in] = old_succ_num;
        }

        let up_limit_out = if self.last_succ[join] == v_in { join } else { NONE };
        let last_succ_out = self.last_succ[u_out];
        let mut u = v_in;
        while u != NONE && self.last_succ[u] == v_in {
            self.last_succ[u] = last_succ_out;
            u = self.parent[u];
        }
        if join != old_rev_thread && v_in != old_rev_thread {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = old_rev_thread;
                u = self.parent[u];
            }
        } else if last_succ_out != old_last_succ {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = last_succ_out;
                u = self.parent[u];
            }
        }
        let mut u = v_in;
        while u != join {
            self.succ_num[u] += old_succ_num;
            u = self.parent[u];
        }
        let mut u = v_out;
        while u != join {
            self.succ_num[u] -= old_succ_num;
            u = self.parent[u];
        }
    }

    fn solve(mut self) -> Result<f64> {
        while let Some(arc) = self.find_entering() {
            self.pivot(arc)?;
        }
        let arcs = self.sources * self.sinks;
        let mut total = 0.0;
        for u in 0..self.sources + self.sinks {
            let arc = self.pred[u];
            if arc >= arcs {
                if self.flow[u] != 0 {
                    return Err(Error::Numerical("transport problem is infeasible".into()));
                }
            } else {
                total += self.flow[u] as f64 * self.cost[arc];
            }
        }
        let _ = self.art_cost;
        Ok(total / MASS_SCALE)
    }
}

/// Optimal transport cost between `supply` (sources) and `demand` (sinks) for a
/// row-major `sources × sinks` cost matrix. Both mass vectors are normalized.
pub fn transport_cost(supply: &[f64], demand: &[f64], cost: &[f64]) -> Result<f64> {
    if supply.is_empty() || demand.is_empty() {
        return Err(Error::invalid("masses", "both sides need at least one point"));
    }
    if cost.len() != supply.len() * demand.len() {
        return Err(Error::DimensionMismatch {
            expected: supply.len() * demand.len(),
            got: cost.len(),
        });
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::invalid("cost", "must be finite"));
    }
    let a = integer_masses(supply)?;
    let b = integer_masses(demand)?;
    Simplex::new(&a, &b, cost).solve()
}

/// `W_1` between two weighted point clouds in `R^dim` (Euclidean ground cost).
pub fn w1_discrete(dim: usize, x: &[f64], a: &[f64], y: &[f64], b: &[f64]) -> Result<f64> {
    if x.len() != a.len() * dim || y.len() != b.len() * dim {
        return Err(Error::DimensionMismatch {
            expected: a.len() * dim,
            got: x.len(),
        });
    }
    if a.len().saturating_mul(b.len()) > COST_GUARD {
        return Err(Error::CostGuard {
            cells: b.len(),
            particles: a.len(),
            limit: COST_GUARD,
        });
    }
    let cost: Vec<f64> = x
        .chunks(dim)
        .flat_map(|p| {
            y.chunks(dim)
                .map(move |q| p.iter().zip(q).map(|(s, t)| (s - t) * (s - t)).sum::<f64>().sqrt())
        })
        .collect();
    transport_cost(a, b, &cost)
}

/// A grid density lumped into atoms: blocks of `block^d` nodes replaced by their
/// mass at the block barycentre.
#[derive(Debug, Clone, Serialize)]
pub struct QuantizedDensity {
    pub dim: usize,
    pub positions: Vec<f64>,
    pub masses: Vec<f64>,
    /// Block side in nodes.
    pub block: usize,
    /// Mass of blocks too light to keep (removed before renormalizing).
    pub dropped_mass: f64,
    /// Bound on `W_1` between the density and the atoms.
    pub uncertainty: f64,
}

/// Blocks lighter than this are dropped.
pub const DROP_MASS: f64 = 1e-13;

impl QuantizedDensity {
    /// Finest block size whose occupied blocks fit in `budget` atoms.
    pub fn new(mu: &GridDensity, budget: usize) -> Result<Self> {
        if budget == 0 {
            return Err(Error::invalid("quantization", "cell budget must be positive"));
        }
        let spec = mu.spec();
        let (d, n) = (spec.dim, spec.n);
        let dv = spec.cell_volume();
        let mut idx = vec![0usize; d];
        let mut x = vec![0.0; d];
        for block in 1..=n {
            let per_axis = n.div_ceil(block);
            let blocks = per_axis.pow(d as u32);
            let mut mass = vec![0.0; blocks];
            let mut moment = vec![0.0; blocks * d];
            for (flat, v) in mu.values().iter().enumerate() {
                if *v == 0.0 {
                    continue;
                }
                spec.unflatten(flat, &mut idx);
                let b = idx.iter().fold(0, |acc, &i| acc * per_axis + i / block);
                spec.position(flat, &mut x);
                mass[b] += v * dv;
                for a in 0..d {
                    moment[b * d + a] += v * dv * x[a];
                }
            }
            let kept = mass.iter().filter(|m| **m > DROP_MASS).count();
            if kept > budget {
                continue;
            }
            let mut positions = Vec::with_capacity(kept * d);
            let mut masses = Vec::with_capacity(kept);
            let mut dropped = 0.0;
            for (b, m) in mass.iter().enumerate() {
                if *m > DROP_MASS {
                    masses.push(*m);
                    positions.extend(moment[b * d..(b + 1) * d].iter().map(|s| s / m));
                } else {
                    dropped += m;
                }
            }
            let total: f64 = masses.iter().sum();
            masses.iter_mut().for_each(|m| *m /= total);
            let diameter = 2.0 * spec.half_width * (d as f64).sqrt();
            return Ok(Self {
                dim: d,
                positions,
                masses,
                block,
                dropped_mass: dropped,
                uncertainty: block as f64 * spec.h() * (d as f64).sqrt() + dropped * diameter,
            });
        }
        unreachable!("a single block always fits")
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }
}

/// `W_1` with the uncertainty from quantizing the density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct W1Estimate {
    pub distance: f64,
    pub uncertainty: f64,
    pub atoms: usize,
    pub block: usize,
}

/// `W_1` between the empirical measure `N^{-1} Σ m_i δ_{x_i}` and quantized atoms.
pub fn w1_to_quantized(state: &ParticleState, atoms: &QuantizedDensity, half_width: f64) -> Result<W1Estimate> {
    if state.dim() != atoms.dim {
        return Err(Error::DimensionMismatch {
            expected: atoms.dim,
            got: state.dim(),
        });
    }
    if let Some(i) = (0..state.n()).find(|&i| state.position(i).iter().any(|c| !(c.abs() <= half_width))) {
        return Err(Error::OutsideBox { index: i });
    }
    let distance = w1_discrete(state.dim(), state.positions(), state.weights(), &atoms.positions, &atoms.masses)?;
    Ok(W1Estimate {
        distance,
        uncertainty: atoms.uncertainty,
        atoms: atoms.len(),
        block: atoms.block,
    })
}

/// `W_1(μ_N, μ)` with `μ` lumped into at most `quantization` atoms.
pub fn w1_distance(state: &ParticleState, mu: &GridDensity, quantization: usize) -> Result<W1Estimate> {
    if state.n().saturating_mul(quantization) > COST_GUARD {
        return Err(Error::CostGuard {
            cells: quantization,
            particles: state.n(),
            limit: COST_GUARD,
        });
    }
    let atoms = QuantizedDensity::new(mu, quantization)?;
    w1_to_quantized(state, &atoms, mu.spec().half_width)
}
