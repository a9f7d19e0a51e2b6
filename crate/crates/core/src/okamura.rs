//! Grid approximation of the Okamura chain distance `D(P, Q)`: the infimum of
//! the total length of same-time jumps over chains that otherwise follow
//! integral curves. Lower integrals of a set are built from it.
//!
//! Jumps are restricted to slice times. Chain heads are kept at their exact
//! flowed positions; a head only snaps to a lattice node when a jump to that
//! node is recorded, so the value is always the length of an explicit chain
//! and approximates the infimum from above.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::field::{norm_diff, FieldSpec, Window};
use crate::integrate::{rk4_step, Trajectory};
use crate::report::{CheckReport, Sample};
use crate::sets::SampledSet;

/// Where one RK4 step from a lattice node lands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FlowTarget {
    Exit,
    /// Nearest node and the offset of the exact landing point from it.
    Node { index: usize, offset: Vec<f64> },
}

/// Time slices over a uniform state lattice with precomputed one-step flows.
#[derive(Debug, Clone)]
pub struct OkamuraGrid {
    field: FieldSpec,
    window: Window,
    times: Vec<f64>,
    counts: Vec<usize>,
    steps: Vec<f64>,
    dt: f64,
    // per slice (except the last), per node; usize::MAX marks an exit
    targets: Vec<Vec<usize>>,
    offsets: Vec<Vec<f64>>,
}

/// Builds the grid: `nt + 1` times over the window interval and `nx` nodes
/// per state dimension. Only `k <= 2` is supported.
pub fn build_grid(field: &FieldSpec, window: &Window, nt: usize, nx: usize) -> Result<OkamuraGrid> {
    let k = field.dimension();
    if k > 2 {
        return Err(Error::DimensionTooLarge(k));
    }
    if window.dimension() != k {
        return Err(Error::Dimension { expected: k, got: window.dimension() });
    }
    if nt < 2 || nx < 3 {
        return Err(Error::invalid(format!("grid needs nt >= 2 and nx >= 3, got nt = {nt}, nx = {nx}")));
    }
    let (a, b) = window.time;
    if !(a < b) {
        return Err(Error::invalid("grid window has an empty time interval"));
    }
    let dt = (b - a) / nt as f64;
    let times: Vec<f64> = (0..=nt).map(|i| if i == nt { b } else { a + i as f64 * dt }).collect();
    let counts = vec![nx; k];
    let steps: Vec<f64> = (0..k).map(|d| (window.upper[d] - window.lower[d]) / (nx - 1) as f64).collect();
    let mut grid = OkamuraGrid {
        field: field.clone(),
        window: window.clone(),
        times,
        counts,
        steps,
        dt,
        targets: Vec::with_capacity(nt),
        offsets: Vec::with_capacity(nt),
    };
    let nodes = grid.node_count();
    for i in 0..nt {
        let (t0, t1) = (grid.times[i], grid.times[i + 1]);
        let mut targets = Vec::with_capacity(nodes);
        let mut offsets = Vec::with_capacity(nodes * k);
        for m in 0..nodes {
            let x = grid.node_position(m);
            match grid.flow(t0, &x, t1) {
                Some(y) => {
                    let j = grid.nearest_node(&y);
                    let xj = grid.node_position(j);
                    targets.push(j);
                    offsets.extend(y.iter().zip(&xj).map(|(p, q)| p - q));
                }
                None => {
                    targets.push(usize::MAX);
                    offsets.extend(std::iter::repeat_n(0.0, k));
                }
            }
        }
        grid.targets.push(targets);
        grid.offsets.push(offsets);
    }
    Ok(grid)
}

impl OkamuraGrid {
    pub fn field(&self) -> &FieldSpec {
        &self.field
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn dimension(&self) -> usize {
        self.counts.len()
    }

    pub fn time_slices(&self) -> &[f64] {
        &self.times
    }

    pub fn node_count(&self) -> usize {
        self.counts.iter().product()
    }

    /// `(dt, dx)` with `dx` the largest lattice step.
    pub fn spacing(&self) -> (f64, f64) {
        (self.dt, self.steps.iter().copied().fold(0.0, f64::max))
    }

    pub fn node_position(&self, mut m: usize) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.dimension());
        for d in 0..self.dimension() {
            x.push(self.window.lower[d] + (m % self.counts[d]) as f64 * self.steps[d]);
            m /= self.counts[d];
        }
        x
    }

    pub fn nearest_node(&self, x: &[f64]) -> usize {
        let mut m = 0;
        let mut stride = 1;
        for d in 0..self.dimension() {
            let r = ((x[d] - self.window.lower[d]) / self.steps[d]).round();
            let i = r.clamp(0.0, (self.counts[d] - 1) as f64) as usize;
            m += i * stride;
            stride *= self.counts[d];
        }
        m
    }

    pub fn flow_target(&self, slice: usize, node: usize) -> FlowTarget {
        let j = self.targets[slice][node];
        if j == usize::MAX {
            FlowTarget::Exit
        } else {
            let k = self.dimension();
            FlowTarget::Node { index: j, offset: self.offsets[slice][node * k..(node + 1) * k].to_vec() }
        }
    }

    /// One RK4 step from `(t0, x)` to `t1`; `None` when it leaves the window
    /// or the field cannot be evaluated.
    fn flow(&self, t0: f64, x: &[f64], t1: f64) -> Option<Vec<f64>> {
        if t1 == t0 {
            return Some(x.to_vec());
        }
        let y = rk4_step(|t, y| self.field.eval(t, y), t0, x, t1 - t0).ok()?;
        (y.iter().all(|v| v.is_finite()) && self.window.contains_state(&y)).then_some(y)
    }

    /// Like `flow`, but does not require the end point to stay in the window.
    fn flow_free(&self, t0: f64, x: &[f64], t1: f64) -> Option<Vec<f64>> {
        if t1 == t0 {
            return Some(x.to_vec());
        }
        let y = rk4_step(|t, y| self.field.eval(t, y), t0, x, t1 - t0).ok()?;
        y.iter().all(|v| v.is_finite()).then_some(y)
    }

    fn slice_at_or_before(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t).saturating_sub(1)
    }

    fn check_point(&self, t: f64, x: &[f64]) -> Result<()> {
        if x.len() != self.dimension() {
            return Err(Error::Dimension { expected: self.dimension(), got: x.len() });
        }
        if !self.window.contains(t, x) {
            return Err(Error::invalid(format!("point ({t}, {x:?}) lies outside the grid window")));
        }
        Ok(())
    }

    fn neighbors(&self, m: usize, out: &mut Vec<usize>) {
        out.clear();
        let k = self.dimension();
        let mut idx = [0isize; 2];
        let mut rest = m;
        for d in 0..k {
            idx[d] = (rest % self.counts[d]) as isize;
            rest /= self.counts[d];
        }
        let offsets: &[[isize; 2]] = if k == 1 {
            &[[-1, 0], [1, 0]]
        } else {
            &[[-1, -1], [0, -1], [1, -1], [-1, 0], [1, 0], [-1, 1], [0, 1], [1, 1]]
        };
        'next: for o in offsets {
            let mut n = 0;
            let mut stride = 1;
            for d in 0..k {
                let i = idx[d] + o[d];
                if i < 0 || i >= self.counts[d] as isize {
                    continue 'next;
                }
                n += i as usize * stride;
                stride *= self.counts[d];
            }
            out.push(n);
        }
    }

    /// Lattice nodes at the corners of the cell containing `x`.
    fn cell_corners(&self, x: &[f64], out: &mut Vec<usize>) {
        out.clear();
        let k = self.dimension();
        let mut lo = [0usize; 2];
        let mut hi = [0usize; 2];
        for d in 0..k {
            let r = ((x[d] - self.window.lower[d]) / self.steps[d]).floor();
            let i = r.clamp(0.0, (self.counts[d] - 1) as f64) as usize;
            lo[d] = i;
            hi[d] = (i + 1).min(self.counts[d] - 1);
        }
        for mask in 0..(1usize << k) {
            let mut n = 0;
            let mut stride = 1;
            for d in 0..k {
                n += if mask >> d & 1 == 1 { hi[d] } else { lo[d] } * stride;
                stride *= self.counts[d];
            }
            if !out.contains(&n) {
                out.push(n);
            }
        }
    }

    /// Runs the chain DP from weighted sources `(t, x, cost)`.
    pub fn solve(&self, sources: &[(f64, Vec<f64>, f64)]) -> Result<DpSolution> {
        let k = self.dimension();
        for (t, x, c) in sources {
            self.check_point(*t, x)?;
            if !(*c >= 0.0) {
                return Err(Error::invalid("source costs must be nonnegative"));
            }
        }
        let mut order: Vec<usize> = (0..sources.len()).collect();
        order.sort_by(|&i, &j| sources[i].0.total_cmp(&sources[j].0).then(i.cmp(&j)));
        let mut next_source = 0;
        let nodes = self.node_count();
        let mut slices: Vec<Arrivals> = Vec::with_capacity(self.times.len());
        let mut node_values: Vec<Vec<f64>> = Vec::with_capacity(self.times.len());
        let mut jumps: Vec<JumpRecord> = Vec::new();
        let mut carried = Arrivals::default();
        let mut nb = Vec::new();
        let mut corners = Vec::new();
        for (i, &ti) in self.times.iter().enumerate() {
            let mut arrivals = std::mem::take(&mut carried);
            while next_source < order.len() && sources[order[next_source]].0 <= ti {
                let s = order[next_source];
                let (ts, xs, cs) = &sources[s];
                if let Some(y) = self.flow(*ts, xs, ti) {
                    arrivals.push(*cs, &y, Link::Source(s));
                }
                next_source += 1;
            }

            // jump relaxation at t_i, propagating the best source head
            let mut best = vec![f64::INFINITY; nodes];
            let mut label = vec![usize::MAX; nodes];
            let mut heap = BinaryHeap::new();
            for a in 0..arrivals.len() {
                let (c, h) = (arrivals.cost[a], arrivals.pos(a, k));
                self.cell_corners(h, &mut corners);
                for &m in &corners {
                    let v = c + norm_diff(h, &self.node_position(m));
                    if v < best[m] {
                        best[m] = v;
                        label[m] = a;
                        heap.push(Key(v, m));
                    }
                }
            }
            while let Some(Key(v, m)) = heap.pop() {
                if v > best[m] {
                    continue;
                }
                let a = label[m];
                let (c, h) = (arrivals.cost[a], arrivals.pos(a, k).to_vec());
                self.neighbors(m, &mut nb);
                for &n in &nb {
                    let cand = c + norm_diff(&h, &self.node_position(n));
                    if cand < best[n] {
                        best[n] = cand;
                        label[n] = a;
                        heap.push(Key(cand, n));
                    }
                }
            }
            node_values.push(best.clone());

            if i + 1 < self.times.len() {
                let t_next = self.times[i + 1];
                // every head that is cheapest somewhere keeps flowing exactly
                let mut live = vec![false; arrivals.len()];
                for &a in &label {
                    if a != usize::MAX {
                        live[a] = true;
                    }
                }
                for (a, _) in live.iter().enumerate().filter(|(_, l)| **l) {
                    let h = arrivals.pos(a, k);
                    let m = self.nearest_node(h);
                    let target = if h == self.node_position(m).as_slice() {
                        match self.flow_target(i, m) {
                            FlowTarget::Exit => None,
                            FlowTarget::Node { index, offset } => Some(
                                self.node_position(index).iter().zip(&offset).map(|(p, o)| p + o).collect(),
                            ),
                        }
                    } else {
                        self.flow(ti, h, t_next)
                    };
                    if let Some(y) = target {
                        carried.push(arrivals.cost[a], &y, arrivals.link[a]);
                    }
                }
                for m in 0..nodes {
                    let a = label[m];
                    if a == usize::MAX || self.nearest_node(arrivals.pos(a, k)) == m {
                        continue;
                    }
                    if let FlowTarget::Node { index, offset } = self.flow_target(i, m) {
                        jumps.push(JumpRecord { slice: i, arrival: a, node: m });
                        let y: Vec<f64> = self.node_position(index).iter().zip(&offset).map(|(p, o)| p + o).collect();
                        carried.push(best[m], &y, Link::Jump(jumps.len() - 1));
                    }
                }
            }
            slices.push(arrivals);
        }
        Ok(DpSolution { slices, node_values, jumps, sources: sources.to_vec(), dimension: k })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Link {
    Source(usize),
    Jump(usize),
}

#[derive(Debug, Clone, Copy)]
struct JumpRecord {
    slice: usize,
    arrival: usize,
    node: usize,
}

/// Chain heads present at one slice before the jump relaxation.
#[derive(Debug, Clone, Default)]
struct Arrivals {
    cost: Vec<f64>,
    pos: Vec<f64>,
    link: Vec<Link>,
}

impl Arrivals {
    fn len(&self) -> usize {
        self.cost.len()
    }

    fn push(&mut self, cost: f64, pos: &[f64], link: Link) {
        self.cost.push(cost);
        self.pos.extend_from_slice(pos);
        self.link.push(link);
    }

    fn pos(&self, a: usize, k: usize) -> &[f64] {
        &self.pos[a * k..(a + 1) * k]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64, usize);

impl Eq for Key {}

impl Ord for Key {
    // min-heap on value, ties to the lowest node index
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// One same-time jump of a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub t: f64,
    pub from: Vec<f64>,
    pub to: Vec<f64>,
}

impl Jump {
    pub fn length(&self) -> f64 {
        norm_diff(&self.from, &self.to)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainValue {
    pub value: f64,
    pub chain: Vec<Jump>,
    /// Coarse value minus the value on the grid refined to `(2 nt, 2 nx)`.
    pub refinement_gap: Option<f64>,
    /// Cost carried by the source the chain starts from.
    pub source_cost: f64,
}

/// Result of a DP run, answering queries at any later point.
#[derive(Debug, Clone)]
pub struct DpSolution {
    slices: Vec<Arrivals>,
    node_values: Vec<Vec<f64>>,
    jumps: Vec<JumpRecord>,
    sources: Vec<(f64, Vec<f64>, f64)>,
    dimension: usize,
}

impl DpSolution {
    /// Cheapest chain from any source to `(t, x)`.
    pub fn query(&self, grid: &OkamuraGrid, t: f64, x: &[f64]) -> Result<ChainValue> {
        grid.check_point(t, x)?;
        let k = self.dimension;
        let i = grid.slice_at_or_before(t);
        let ti = grid.times[i];
        let mut best: Option<(f64, Candidate, Jump)> = None;
        let mut consider = |v: f64, c: Candidate, j: Jump| {
            if best.as_ref().is_none_or(|(b, _, _)| v < *b) {
                best = Some((v, c, j));
            }
        };
        if let Some(back) = grid.flow_free(t, x, ti) {
            let arrivals = &self.slices[i];
            for a in 0..arrivals.len() {
                let h = arrivals.pos(a, k);
                let jump = Jump { t: ti, from: h.to_vec(), to: back.clone() };
                consider(arrivals.cost[a] + jump.length(), Candidate::Arrival(i, a), jump);
            }
        }
        for (s, (ts, xs, cs)) in self.sources.iter().enumerate() {
            if *ts > ti && *ts <= t {
                if let Some(y) = grid.flow(*ts, xs, t) {
                    let jump = Jump { t, from: y, to: x.to_vec() };
                    consider(cs + jump.length(), Candidate::Source(s), jump);
                }
            }
        }
        let (value, cand, last) = best.ok_or(Error::Unreachable(t))?;
        let mut chain = vec![last];
        let mut link = match cand {
            Candidate::Arrival(i, a) => self.slices[i].link[a],
            Candidate::Source(s) => Link::Source(s),
        };
        let source_cost = loop {
            match link {
                Link::Source(s) => break self.sources[s].2,
                Link::Jump(j) => {
                    let rec = self.jumps[j];
                    let from = self.slices[rec.slice].pos(rec.arrival, k).to_vec();
                    chain.push(Jump { t: grid.times[rec.slice], from, to: grid.node_position(rec.node) });
                    link = self.slices[rec.slice].link[rec.arrival];
                }
            }
        };
        chain.reverse();
        Ok(ChainValue { value, chain, refinement_gap: None, source_cost })
    }

    /// Best jump cost reaching each node at each slice.
    pub fn node_values(&self) -> &[Vec<f64>] {
        &self.node_values
    }

    /// Writes `(slice, node, value)` rows for every reached node.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::invalid(format!("csv output failed: {e}"));
        w.write_record(["slice", "node", "value"]).map_err(io)?;
        for (i, values) in self.node_values.iter().enumerate() {
            for (m, v) in values.iter().enumerate() {
                if v.is_finite() {
                    w.write_record([i.to_string(), m.to_string(), v.to_string()]).map_err(io)?;
                }
            }
        }
        w.flush().map_err(|e| Error::invalid(format!("csv output failed: {e}")))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
enum Candidate {
    Arrival(usize, usize),
    Source(usize),
}

/// Approximate `D(P, Q)` for `t_P <= t_Q`.
pub fn okamura_distance(grid: &OkamuraGrid, p: (f64, &[f64]), q: (f64, &[f64])) -> Result<ChainValue> {
    if p.0 > q.0 {
        return Err(Error::invalid(format!("D(P, Q) needs t_P <= t_Q, got {} > {}", p.0, q.0)));
    }
    grid.solve(&[(p.0, p.1.to_vec(), 0.0)])?.query(grid, q.0, q.1)
}

/// `D(P, Q)` on `grid`, with the refinement gap measured against `fine`.
pub fn okamura_distance_refined(
    grid: &OkamuraGrid,
    fine: &OkamuraGrid,
    p: (f64, &[f64]),
    q: (f64, &[f64]),
) -> Result<ChainValue> {
    let mut coarse = okamura_distance(grid, p, q)?;
    let refined = okamura_distance(fine, p, q)?;
    coarse.refinement_gap = Some(coarse.value - refined.value);
    Ok(coarse)
}

/// The same window and field at `(2 nt, 2 nx)`.
pub fn refine(grid: &OkamuraGrid) -> Result<OkamuraGrid> {
    let nt = grid.times.len() - 1;
    build_grid(&grid.field, &grid.window, 2 * nt, 2 * grid.counts[0])
}

/// The extension `D*(P, X)`: `D(P, X)` for `t >= t_P`, and
/// `|x - x_P| + M (t_P - t)` before `t_P`.
pub fn okamura_star(grid: &OkamuraGrid, p: (f64, &[f64]), x: (f64, &[f64]), m: f64) -> Result<f64> {
    grid.check_point(p.0, p.1)?;
    grid.check_point(x.0, x.1)?;
    if x.0 < p.0 {
        Ok(norm_diff(x.1, p.1) + m * (p.0 - x.0))
    } else {
        Ok(okamura_distance(grid, p, x)?.value)
    }
}

/// `D*(P, .)` for a fixed `P`, with the DP solved once.
#[derive(Debug, Clone)]
pub struct OkamuraStar {
    p: (f64, Vec<f64>),
    m: f64,
    solution: DpSolution,
}

impl OkamuraStar {
    pub fn new(grid: &OkamuraGrid, p: (f64, Vec<f64>), m: f64) -> Result<Self> {
        let solution = grid.solve(&[(p.0, p.1.clone(), 0.0)])?;
        Ok(OkamuraStar { p, m, solution })
    }

    pub fn value(&self, grid: &OkamuraGrid, t: f64, x: &[f64]) -> Result<f64> {
        if t < self.p.0 {
            grid.check_point(t, x)?;
            Ok(norm_diff(x, &self.p.1) + self.m * (self.p.0 - t))
        } else {
            Ok(self.solution.query(grid, t, x)?.value)
        }
    }
}

/// `min over P in set of D*(P, X)`, solved once for all queries.
#[derive(Debug, Clone)]
pub struct SetLowerIntegral {
    points: Vec<(f64, Vec<f64>)>,
    m: f64,
    solution: DpSolution,
}

impl SetLowerIntegral {
    pub fn new(grid: &OkamuraGrid, set: &SampledSet, m: f64) -> Result<Self> {
        let points = set.points().to_vec();
        let sources: Vec<(f64, Vec<f64>, f64)> = points.iter().map(|(t, x)| (*t, x.clone(), 0.0)).collect();
        let solution = grid.solve(&sources)?;
        Ok(SetLowerIntegral { points, m, solution })
    }

    pub fn value(&self, grid: &OkamuraGrid, t: f64, x: &[f64]) -> Result<f64> {
        grid.check_point(t, x)?;
        let mut best = f64::INFINITY;
        for (tp, xp) in &self.points {
            if *tp == t && xp.as_slice() == x {
                return Ok(0.0);
            }
            if *tp > t {
                best = best.min(norm_diff(x, xp) + self.m * (tp - t));
            }
        }
        match self.solution.query(grid, t, x) {
            Ok(c) => best = best.min(c.value),
            Err(Error::Unreachable(_)) if best.is_finite() => {}
            Err(e) => return Err(e),
        }
        Ok(best)
    }
}

/// `min over P in set of D*(P, X)`.
pub fn lower_integral_from_set(grid: &OkamuraGrid, set: &SampledSet, x: (f64, &[f64]), m: f64) -> Result<f64> {
    SetLowerIntegral::new(grid, set, m)?.value(grid, x.0, x.1)
}

/// The scalar lower integral for the region `x <= omega(t)` of a scalar
/// equation, with extension `x - omega(t) + 2M (xi - t)` before the source
/// time `xi`. The region is sampled at every slice by the lattice nodes
/// below `omega` together with the boundary point itself.
#[derive(Debug, Clone)]
pub struct ScalarTubeIntegral {
    omega: Expr,
    m: f64,
    slices: Vec<f64>,
    solution: DpSolution,
}

impl ScalarTubeIntegral {
    pub fn new(grid: &OkamuraGrid, omega: &Expr, m: f64) -> Result<Self> {
        if grid.dimension() != 1 {
            return Err(Error::Dimension { expected: 1, got: grid.dimension() });
        }
        if omega.depends_on_state() {
            return Err(Error::invalid("omega must be a function of t only"));
        }
        let mut sources = Vec::new();
        let (lo, hi) = (grid.window.lower[0], grid.window.upper[0]);
        for &t in &grid.times {
            let w = omega.eval(t, &[])?;
            for n in 0..grid.node_count() {
                let x = grid.node_position(n);
                if x[0] <= w {
                    sources.push((t, x, 0.0));
                }
            }
            if lo <= w && w <= hi {
                sources.push((t, vec![w], 0.0));
            }
        }
        if sources.is_empty() {
            return Err(Error::invalid("the region x <= omega(t) misses the grid window"));
        }
        let solution = grid.solve(&sources)?;
        Ok(ScalarTubeIntegral { omega: omega.clone(), m, slices: grid.times.clone(), solution })
    }

    pub fn value(&self, grid: &OkamuraGrid, t: f64, x: f64) -> Result<f64> {
        let w = self.omega.eval(t, &[])?;
        grid.check_point(t, &[x])?;
        if x <= w {
            return Ok(0.0);
        }
        let mut best = f64::INFINITY;
        if let Some(&xi) = self.slices.iter().find(|&&s| s > t) {
            best = x - w + 2.0 * self.m * (xi - t);
        }
        match self.solution.query(grid, t, &[x]) {
            Ok(c) => best = best.min(c.value),
            Err(Error::Unreachable(_)) if best.is_finite() => {}
            Err(e) => return Err(e),
        }
        Ok(best)
    }
}

pub fn scalar_tube_lower_integral(grid: &OkamuraGrid, omega: &Expr, x: (f64, f64), m: f64) -> Result<f64> {
    ScalarTubeIntegral::new(grid, omega, m)?.value(grid, x.0, x.1)
}

/// A function asserted to be a lower integral.
#[derive(Debug, Clone)]
pub enum Certificate {
    OkamuraStar(OkamuraStar),
    Expr(Expr),
}

impl Certificate {
    pub fn value(&self, grid: &OkamuraGrid, t: f64, x: &[f64]) -> Result<f64> {
        match self {
            Certificate::OkamuraStar(s) => s.value(grid, t, x),
            Certificate::Expr(e) => Ok(e.eval(t, x)?),
        }
    }
}

/// Checks that the pointwise minimum and maximum of a family of lower
/// integrals do not increase along the given trajectories. The tolerance is
/// `2 dx` when the family holds grid-based members and `1e-9` otherwise.
pub fn family_min_is_lower_integral(
    grid: &OkamuraGrid,
    family: &[Certificate],
    trajectories: &[Trajectory],
    margin: f64,
) -> Result<CheckReport> {
    if family.is_empty() {
        return Err(Error::invalid("the family is empty"));
    }
    let gridded = family.iter().any(|c| matches!(c, Certificate::OkamuraStar(_)));
    let tol = if gridded { 2.0 * grid.spacing().1 } else { 1e-9 };
    let mut samples = Vec::new();
    let mut diagnostics = Vec::new();
    let mut worst: Option<(f64, Vec<(f64, f64)>)> = None;
    for tr in trajectories {
        let mut lows = Vec::new();
        let mut highs = Vec::new();
        for (t, x) in tr.times.iter().zip(&tr.states) {
            if !grid.window.contains(*t, x) {
                continue;
            }
            let values: Vec<f64> = family.iter().map(|c| c.value(grid, *t, x)).collect::<Result<_>>()?;
            lows.push((*t, values.iter().copied().fold(f64::INFINITY, f64::min)));
            highs.push((*t, values.iter().copied().fold(f64::NEG_INFINITY, f64::max)));
        }
        if lows.len() < 2 {
            continue;
        }
        let inc = |v: &[(f64, f64)]| v.windows(2).map(|w| w[1].1 - w[0].1).fold(0.0, f64::max);
        let (t0, x0) = (tr.times[0], tr.states[0].clone());
        let low_inc = inc(&lows);
        samples.push(Sample::new(t0, x0.clone(), low_inc, tol, margin));
        samples.push(Sample::new(t0, x0, inc(&highs), tol, margin));
        if worst.as_ref().is_none_or(|(w, _)| low_inc > *w) {
            worst = Some((low_inc, lows));
        }
        for c in family {
            let vals: Vec<(f64, f64)> = tr
                .times
                .iter()
                .zip(&tr.states)
                .filter(|(t, x)| grid.window.contains(**t, x))
                .map(|(t, x)| c.value(grid, *t, x).map(|v| (*t, v)))
                .collect::<Result<_>>()?;
            diagnostics.push(Sample::new(tr.times[0], tr.states[0].clone(), inc(&vals), tol, margin));
        }
    }
    let mut report = CheckReport::new(samples, margin, 0);
    report.diagnostics = diagnostics;
    report.note(format!("increment tolerance {tol:.3e}; samples alternate min and max of the family"));
    if let Some((_, curve)) = worst {
        report.witness = curve;
    }
    Ok(report)
}
