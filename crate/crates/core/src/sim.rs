//! Continuous-time simulation of single and coupled exclusion processes.
//!
//! Runs use [`ChaCha8Rng`] seeded with `seed_from_u64(seed)` and switched to
//! stream `stream`; replica `i` of a batch uses stream `i`, so a batch is
//! reproducible from its master seed whatever the thread count. Sampling is
//! on the grid `0, dt, 2dt, ..` up to `t_end` and records the left limit of
//! the state at each grid time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{chain_table, transitions_from_table, CouplingKind, MoveKind, TransitionAudit};
use crate::error::{Error, Result};
use crate::lattice::{Configuration, CoupledState, PairOrder};
use crate::rates::{RateSpec, RateTable};

/// Time horizon, sampling grid and randomness of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub t_end: f64,
    pub sample_dt: f64,
    pub seed: u64,
    pub stream: u64,
    /// Keep configuration snapshots at every sample.
    pub snapshots: bool,
}

impl SimParams {
    pub fn new(t_end: f64, sample_dt: f64, seed: u64) -> Self {
        Self { t_end, sample_dt, seed, stream: 0, snapshots: false }
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }

    pub fn with_snapshots(mut self, on: bool) -> Self {
        self.snapshots = on;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(Error::InvalidArgument(format!("t_end must be finite and nonnegative, got {}", self.t_end)));
        }
        if !(self.sample_dt.is_finite() && self.sample_dt > 0.0) {
            return Err(Error::InvalidArgument(format!("sample_dt must be positive, got {}", self.sample_dt)));
        }
        if self.t_end / self.sample_dt > 1e8 {
            return Err(Error::InvalidArgument("more than 10^8 samples requested".into()));
        }
        Ok(())
    }

    fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }

    fn grid(&self) -> Vec<f64> {
        let n = (self.t_end / self.sample_dt).floor() as usize;
        let mut times: Vec<f64> = (0..=n).map(|k| k as f64 * self.sample_dt).collect();
        times.retain(|&t| t <= self.t_end);
        times
    }
}

/// Sampled path of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub len: usize,
    pub times: Vec<f64>,
    /// Particle count of the (first) configuration, constant along the path.
    pub particles: usize,
    /// First marginal at each sample, when snapshots were requested.
    pub first: Option<Vec<Configuration>>,
    /// Second marginal at each sample (coupled runs with snapshots).
    pub second: Option<Vec<Configuration>>,
    /// Discrepancy count per sample (coupled runs).
    pub discrepancies: Option<Vec<usize>>,
    /// Whether the marginals are ordered (either way) per sample (coupled runs).
    pub ordered: Option<Vec<bool>>,
    pub seed: u64,
    pub stream: u64,
    pub total_events: u64,
    /// Time at which the total rate vanished, if it did before `t_end`.
    pub absorbed_at: Option<f64>,
    pub final_first: Configuration,
    pub final_second: Option<Configuration>,
}

impl Trajectory {
    pub fn absorbed(&self) -> bool {
        self.absorbed_at.is_some()
    }
}

/// Complete binary tree of partial sums over sites.
#[derive(Clone, Debug)]
struct SumTree {
    size: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    fn new(n: usize) -> Self {
        let size = n.next_power_of_two();
        Self { size, nodes: vec![0.0; 2 * size] }
    }

    fn set(&mut self, i: usize, v: f64) {
        let mut k = i + self.size;
        self.nodes[k] = v;
        k /= 2;
        while k >= 1 {
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
            k /= 2;
        }
    }

    fn get(&self, i: usize) -> f64 {
        self.nodes[i + self.size]
    }

    fn total(&self) -> f64 {
        self.nodes[1]
    }

    /// Leaf where the cumulative sum first exceeds `u`, skipping empty leaves
    /// that rounding may land on.
    fn find(&self, mut u: f64) -> usize {
        let mut k = 1;
        while k < self.size {
            if u < self.nodes[2 * k] {
                k *= 2;
            } else {
                u -= self.nodes[2 * k];
                k = 2 * k + 1;
            }
        }
        let leaf = k - self.size;
        if self.get(leaf) > 0.0 {
            return leaf;
        }
        (0..self.size).rev().find(|&i| self.get(i) > 0.0).unwrap_or(leaf)
    }
}

/// Gillespie engine for one exclusion process, with per-site total rates
/// refreshed only around each jump.
#[derive(Clone, Debug)]
pub struct SingleEngine {
    rates: RateTable<f64>,
    eta: Configuration,
    tree: SumTree,
    radius: usize,
    scratch: Vec<f64>,
}

impl SingleEngine {
    pub fn new(spec: &RateSpec, eta: Configuration) -> Result<Self> {
        spec.check_ring(eta.len())?;
        let rates = spec.table::<f64>();
        let radius = spec.reach().max(spec.max_offset());
        let mut engine = Self {
            tree: SumTree::new(eta.len()),
            scratch: vec![0.0; rates.offsets().len()],
            rates,
            eta,
            radius,
        };
        for x in 0..eta.len() {
            engine.refresh(x);
        }
        Ok(engine)
    }

    pub fn state(&self) -> Configuration {
        self.eta
    }

    pub fn total_rate(&self) -> f64 {
        self.tree.total().max(0.0)
    }

    fn site_rate(&self, x: usize) -> f64 {
        if !self.eta.at(x) {
            return 0.0;
        }
        let len = self.eta.len();
        (0..self.rates.offsets().len())
            .filter(|&i| !self.eta.at(self.rates.target(len, x, i)))
            .map(|i| *self.rates.by_index(&self.eta, x, i))
            .sum()
    }

    fn refresh(&mut self, x: usize) {
        let r = self.site_rate(x);
        self.tree.set(x, r);
    }

    fn refresh_around(&mut self, x: usize, y: usize) {
        let len = self.eta.len();
        if 2 * self.radius + 1 >= len {
            for z in 0..len {
                self.refresh(z);
            }
            return;
        }
        let r = self.radius as i64;
        for centre in [x, y] {
            for k in -r..=r {
                let z = self.eta.wrap(centre as i64 + k);
                self.refresh(z);
            }
        }
    }

    /// Draw the next event: holding time and jump, or `None` when no jump is possible.
    pub fn next_event(&mut self, rng: &mut ChaCha8Rng) -> Option<(f64, usize, usize)> {
        let total = self.total_rate();
        if total <= 0.0 {
            return None;
        }
        let wait = -(1.0 - rng.gen::<f64>()).ln() / total;
        let x = self.tree.find(rng.gen::<f64>() * total);
        let len = self.eta.len();
        let mut site_total = 0.0;
        for i in 0..self.rates.offsets().len() {
            let y = self.rates.target(len, x, i);
            let r = if self.eta.at(y) { 0.0 } else { *self.rates.by_index(&self.eta, x, i) };
            self.scratch[i] = r;
            site_total += r;
        }
        let u = rng.gen::<f64>() * site_total;
        let mut acc = 0.0;
        let mut chosen = None;
        for (i, r) in self.scratch.iter().enumerate() {
            if *r > 0.0 {
                chosen = Some(i);
                acc += r;
                if u < acc {
                    break;
                }
            }
        }
        let y = self.rates.target(len, x, chosen?);
        Some((wait, x, y))
    }

    pub fn apply(&mut self, x: usize, y: usize) {
        self.eta = self.eta.swapped(x, y);
        self.refresh_around(x, y);
    }
}

struct Sampler {
    grid: Vec<f64>,
    next: usize,
}

impl Sampler {
    /// Call `record` for every grid time `≤ t` not yet recorded.
    fn advance(&mut self, t: f64, mut record: impl FnMut()) {
        while self.next < self.grid.len() && self.grid[self.next] <= t {
            record();
            self.next += 1;
        }
    }
}

/// Simulate the exclusion process from `eta0` up to `params.t_end`.
pub fn simulate_single(spec: &RateSpec, eta0: Configuration, params: &SimParams) -> Result<Trajectory> {
    params.validate()?;
    let mut engine = SingleEngine::new(spec, eta0)?;
    let mut rng = params.rng();
    let grid = params.grid();
    let mut snaps = params.snapshots.then(|| Vec::with_capacity(grid.len()));
    let mut sampler = Sampler { grid: grid.clone(), next: 0 };
    let mut t = 0.0;
    let mut events = 0u64;
    let mut absorbed_at = None;
    loop {
        let Some((wait, x, y)) = engine.next_event(&mut rng) else {
            absorbed_at = (t <= params.t_end).then_some(t);
            break;
        };
        let state = engine.state();
        sampler.advance((t + wait).min(params.t_end), || {
            if let Some(s) = snaps.as_mut() {
                s.push(state)
            }
        });
        t += wait;
        if t > params.t_end {
            break;
        }
        engine.apply(x, y);
        events += 1;
    }
    let state = engine.state();
    sampler.advance(params.t_end, || {
        if let Some(s) = snaps.as_mut() {
            s.push(state)
        }
    });
    Ok(Trajectory {
        len: eta0.len(),
        times: grid,
        particles: eta0.particle_count(),
        first: snaps,
        second: None,
        discrepancies: None,
        ordered: None,
        seed: params.seed,
        stream: params.stream,
        total_events: events,
        absorbed_at,
        final_first: engine.state(),
        final_second: None,
    })
}

/// Pathwise property checked at every event of a coupled run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathCheck {
    /// No event raises the discrepancy count.
    DiscrepancyNonIncrease,
    /// An ordered pair stays ordered the same way.
    OrderPreserved,
}

impl PathCheck {
    /// What the coupling of `kind` guarantees from `start`.
    pub fn for_kind(kind: CouplingKind, start: &CoupledState) -> Vec<PathCheck> {
        let mut checks = Vec::new();
        if matches!(kind, CouplingKind::Attractive | CouplingKind::Strict) {
            checks.push(PathCheck::DiscrepancyNonIncrease);
        }
        if start.is_ordered() {
            checks.push(PathCheck::OrderPreserved);
        }
        checks
    }
}

/// Gillespie engine for the coupled chain. The coupling table is rebuilt
/// from the current pair at every event; equal marginals take the diagonal
/// moves only.
#[derive(Clone, Debug)]
pub struct CoupledEngine {
    rates: RateTable<f64>,
    kind: CouplingKind,
    pair: CoupledState,
    moves: Vec<TransitionAudit<f64>>,
}

impl CoupledEngine {
    pub fn new(spec: &RateSpec, pair: CoupledState, kind: CouplingKind) -> Result<Self> {
        spec.check_ring(pair.len())?;
        Ok(Self { rates: spec.table::<f64>(), kind, pair, moves: Vec::new() })
    }

    pub fn state(&self) -> CoupledState {
        self.pair
    }

    fn load_moves(&mut self) -> Result<f64> {
        self.moves.clear();
        let (xi, len) = (self.pair.first, self.pair.len());
        if xi == self.pair.second {
            for x in (0..len).filter(|&x| xi.at(x)) {
                for i in 0..self.rates.offsets().len() {
                    let y = self.rates.target(len, x, i);
                    let r = *self.rates.by_index(&xi, x, i);
                    if !xi.at(y) && r > 0.0 {
                        let target = xi.swapped(x, y);
                        self.moves.push(TransitionAudit {
                            kind: MoveKind::Coupled,
                            first_jump: Some((x, y)),
                            second_jump: Some((x, y)),
                            rate: r,
                            target: CoupledState { first: target, second: target },
                            order_preserved: true,
                            discrepancy_delta: 0,
                        });
                    }
                }
            }
        } else {
            let table = chain_table(&self.rates, &self.pair.first, &self.pair.second, self.kind);
            self.moves = transitions_from_table(&self.pair, &table);
            if let Some(m) = self.moves.iter().find(|m| m.rate < 0.0) {
                return Err(Error::State(format!(
                    "negative coupled rate {} from {:?} (first jump {:?}, second jump {:?})",
                    m.rate, self.pair, m.first_jump, m.second_jump
                )));
            }
        }
        Ok(self.moves.iter().map(|m| m.rate).sum())
    }

    /// Draw the next move, or `None` when the total rate vanishes.
    pub fn next_event(&mut self, rng: &mut ChaCha8Rng) -> Result<Option<(f64, TransitionAudit<f64>)>> {
        let total = self.load_moves()?;
        if total <= 0.0 {
            return Ok(None);
        }
        let wait = -(1.0 - rng.gen::<f64>()).ln() / total;
        let u = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = self.moves.len() - 1;
        for (k, m) in self.moves.iter().enumerate() {
            acc += m.rate;
            if u < acc {
                chosen = k;
                break;
            }
        }
        Ok(Some((wait, self.moves[chosen].clone())))
    }

    pub fn apply(&mut self, m: &TransitionAudit<f64>) {
        self.pair = m.target;
    }
}

fn check_move(checks: &[PathCheck], pair: &CoupledState, m: &TransitionAudit<f64>, t: f64) -> Result<()> {
    for check in checks {
        let ok = match check {
            PathCheck::DiscrepancyNonIncrease => m.discrepancy_delta <= 0,
            PathCheck::OrderPreserved => pair.order() == PairOrder::Unordered || m.order_preserved,
        };
        if !ok {
            return Err(Error::State(format!(
                "{check:?} violated at t = {t}: {:?} -> {:?} (first jump {:?}, second jump {:?}, rate {})",
                pair, m.target, m.first_jump, m.second_jump, m.rate
            )));
        }
    }
    Ok(())
}

/// Simulate the coupled chain of `kind` from `(xi0, zeta0)`. The pathwise
/// guarantees of the coupling ([`PathCheck::for_kind`]) are asserted at
/// every event; a violation is returned as [`Error::State`].
pub fn simulate_coupled(
    spec: &RateSpec,
    xi0: Configuration,
    zeta0: Configuration,
    kind: CouplingKind,
    params: &SimParams,
) -> Result<Trajectory> {
    params.validate()?;
    let start = CoupledState::new(xi0, zeta0)?;
    let checks = PathCheck::for_kind(kind, &start);
    let mut engine = CoupledEngine::new(spec, start, kind)?;
    let mut rng = params.rng();
    let grid = params.grid();
    let n = grid.len();
    let mut firsts = params.snapshots.then(|| Vec::with_capacity(n));
    let mut seconds = params.snapshots.then(|| Vec::with_capacity(n));
    let mut discrepancies = Vec::with_capacity(n);
    let mut ordered = Vec::with_capacity(n);
    let mut record = |p: CoupledState| {
        discrepancies.push(p.discrepancies());
        ordered.push(p.is_ordered());
        if let (Some(a), Some(b)) = (firsts.as_mut(), seconds.as_mut()) {
            a.push(p.first);
            b.push(p.second);
        }
    };
    let mut sampler = Sampler { grid: grid.clone(), next: 0 };
    let mut t = 0.0;
    let mut events = 0u64;
    let mut absorbed_at = None;
    loop {
        let Some((wait, m)) = engine.next_event(&mut rng)? else {
            absorbed_at = (t <= params.t_end).then_some(t);
            break;
        };
        let pair = engine.state();
        sampler.advance((t + wait).min(params.t_end), || record(pair));
        t += wait;
        if t > params.t_end {
            break;
        }
        check_move(&checks, &pair, &m, t)?;
        engine.apply(&m);
        events += 1;
    }
    let pair = engine.state();
    sampler.advance(params.t_end, || record(pair));
    Ok(Trajectory {
        len: start.len(),
        times: grid,
        particles: xi0.particle_count(),
        first: firsts,
        second: seconds,
        discrepancies: Some(discrepancies),
        ordered: Some(ordered),
        seed: params.seed,
        stream: params.stream,
        total_events: events,
        absorbed_at,
        final_first: pair.first,
        final_second: Some(pair.second),
    })
}

/// Run `replicas` single runs in parallel; replica `i` uses stream `i`.
/// The result is ordered by replica index.
pub fn simulate_single_replicas(
    spec: &RateSpec,
    eta0: Configuration,
    params: &SimParams,
    replicas: u64,
) -> Result<Vec<Trajectory>> {
    (0..replicas)
        .into_par_iter()
        .map(|i| simulate_single(spec, eta0, &params.clone().with_stream(i)))
        .collect()
}

/// Run `replicas` coupled runs in parallel; replica `i` starts from
/// `start(i)` and uses stream `i`.
pub fn simulate_coupled_replicas(
    spec: &RateSpec,
    start: impl Fn(u64) -> (Configuration, Configuration) + Sync,
    kind: CouplingKind,
    params: &SimParams,
    replicas: u64,
) -> Result<Vec<Trajectory>> {
    (0..replicas)
        .into_par_iter()
        .map(|i| {
            let (xi, zeta) = start(i);
            simulate_coupled(spec, xi, zeta, kind, &params.clone().with_stream(i))
        })
        .collect()
}

/// Configuration with `n` particles placed uniformly at random.
pub fn random_configuration(len: usize, n: usize, rng: &mut ChaCha8Rng) -> Result<Configuration> {
    if n > len {
        return Err(Error::InvalidArgument(format!("{n} particles on {len} sites")));
    }
    let mut sites: Vec<usize> = (0..len).collect();
    for k in 0..n {
        let j = rng.gen_range(k..len);
        sites.swap(k, j);
    }
    let mut eta = Configuration::empty(len)?;
    for &x in &sites[..n] {
        eta.set(x, true)?;
    }
    Ok(eta)
}

/// Seeded generator for stream `stream` of master seed `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    SimParams::new(0.0, 1.0, seed).with_stream(stream).rng()
}

/// Time spent in each configuration of a single run, with batch-means errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupationStats {
    pub states: Vec<Configuration>,
    /// Fraction of `[0, t_end]` spent in each state.
    pub fraction: Vec<f64>,
    /// Standard error of each fraction from the spread of batch averages.
    pub std_error: Vec<f64>,
    pub batches: usize,
    pub total_events: u64,
}

/// Occupation fractions of the sector of `eta0` over `[0, t_end]`, with
/// standard errors from `batches` equal-length batches.
pub fn occupation_stats(
    spec: &RateSpec,
    eta0: Configuration,
    t_end: f64,
    seed: u64,
    batches: usize,
) -> Result<OccupationStats> {
    if batches < 2 || !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidArgument("need at least two batches and a positive horizon".into()));
    }
    let states: Vec<Configuration> = Configuration::sector(eta0.len(), eta0.particle_count()).collect();
    let index: std::collections::HashMap<Configuration, usize> =
        states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let width = t_end / batches as f64;
    let mut per_batch = vec![vec![0.0; states.len()]; batches];
    let mut credit = |from: f64, to: f64, s: usize| {
        let mut a = from;
        while a < to {
            let b = ((a / width).floor() as usize).min(batches - 1);
            let edge = ((b + 1) as f64 * width).min(to);
            per_batch[b][s] += edge - a;
            if edge <= a {
                break;
            }
            a = edge;
        }
    };
    let mut engine = SingleEngine::new(spec, eta0)?;
    let mut rng = SimParams::new(t_end, t_end, seed).rng();
    let mut t = 0.0;
    let mut events = 0;
    loop {
        let here = index[&engine.state()];
        match engine.next_event(&mut rng) {
            Some((wait, x, y)) if t + wait < t_end => {
                credit(t, t + wait, here);
                t += wait;
                engine.apply(x, y);
                events += 1;
            }
            _ => {
                credit(t, t_end, here);
                break;
            }
        }
    }
    let k = batches as f64;
    let mut fraction = vec![0.0; states.len()];
    let mut std_error = vec![0.0; states.len()];
    for s in 0..states.len() {
        let means: Vec<f64> = per_batch.iter().map(|b| b[s] / width).collect();
        let mean = means.iter().sum::<f64>() / k;
        let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (k - 1.0);
        fraction[s] = mean;
        std_error[s] = (var / k).sqrt();
    }
    Ok(OccupationStats { states, fraction, std_error, batches, total_events: events })
}

/// Observables that can be extracted from a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    DensityProfile,
    DiscrepancyCurve,
    OrderTime,
}

impl Observable {
    pub const ALL: [Observable; 3] = [Observable::DensityProfile, Observable::DiscrepancyCurve, Observable::OrderTime];

    pub fn name(self) -> &'static str {
        match self {
            Observable::DensityProfile => "density_profile",
            Observable::DiscrepancyCurve => "discrepancy_curve",
            Observable::OrderTime => "order_time",
        }
    }
}

impl std::str::FromStr for Observable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Observable::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| Error::Parse { what: "observable", detail: format!("`{s}` (expected density_profile, discrepancy_curve or order_time)") })
    }
}

/// Rectangular numeric table with named columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    /// CSV text; infinite values are written as `inf`.
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

fn missing(what: &str) -> Error {
    Error::State(format!("trajectory has no {what} recorded"))
}

/// First sample time at which the marginals are ordered, `+∞` if never.
pub fn order_time(traj: &Trajectory) -> Result<f64> {
    let ordered = traj.ordered.as_ref().ok_or_else(|| missing("order indicator"))?;
    Ok(ordered.iter().position(|&o| o).map_or(f64::INFINITY, |k| traj.times[k]))
}

/// Table for one observable. `density_profile` gives one column per site
/// (occupation of the first marginal); `discrepancy_curve` gives the
/// discrepancy count and order indicator; `order_time` is a single row.
pub fn observable_report(traj: &Trajectory, which: Observable) -> Result<Table> {
    match which {
        Observable::DensityProfile => {
            let snaps = traj.first.as_ref().ok_or_else(|| missing("configuration snapshots"))?;
            let mut columns = vec!["time".to_string()];
            columns.extend((0..traj.len).map(|i| format!("density_{i}")));
            let rows = traj
                .times
                .iter()
                .zip(snaps)
                .map(|(t, c)| std::iter::once(*t).chain((0..traj.len).map(|i| c.at(i) as u8 as f64)).collect())
                .collect();
            Ok(Table { columns, rows })
        }
        Observable::DiscrepancyCurve => {
            let d = traj.discrepancies.as_ref().ok_or_else(|| missing("discrepancy series"))?;
            let o = traj.ordered.as_ref().ok_or_else(|| missing("order indicator"))?;
            let rows = traj.times.iter().zip(d).zip(o).map(|((t, d), o)| vec![*t, *d as f64, *o as u8 as f64]).collect();
            Ok(Table { columns: vec!["time".into(), "discrepancies".into(), "ordered".into()], rows })
        }
        Observable::OrderTime => Ok(Table { columns: vec!["order_time".into()], rows: vec![vec![order_time(traj)?]] }),
    }
}

/// Average several tables of equal shape entry by entry (replica means).
pub fn average_tables(tables: &[Table]) -> Result<Table> {
    let first = tables.first().ok_or_else(|| Error::InvalidArgument("no tables to average".into()))?;
    if tables.iter().any(|t| t.columns != first.columns || t.rows.len() != first.rows.len()) {
        return Err(Error::InvalidArgument("tables differ in shape".into()));
    }
    let k = tables.len() as f64;
    let rows = (0..first.rows.len())
        .map(|r| (0..first.columns.len()).map(|c| tables.iter().map(|t| t.rows[r][c]).sum::<f64>() / k).collect())
        .collect();
    Ok(Table { columns: first.columns.clone(), rows })
}

/// The `time,discrepancies,ordered,density_0..` table of a coupled run, or
/// `time,density_0..` for a single run. Density columns need snapshots.
pub fn trajectory_table(traj: &Trajectory, profile: bool) -> Result<Table> {
    let mut columns = vec!["time".to_string()];
    let mut rows: Vec<Vec<f64>> = traj.times.iter().map(|t| vec![*t]).collect();
    if traj.discrepancies.is_some() {
        let curve = observable_report(traj, Observable::DiscrepancyCurve)?;
        columns.extend(curve.columns[1..].iter().cloned());
        for (row, c) in rows.iter_mut().zip(&curve.rows) {
            row.extend_from_slice(&c[1..]);
        }
    }
    if profile {
        let dens = observable_report(traj, Observable::DensityProfile)?;
        columns.extend(dens.columns[1..].iter().cloned());
        for (row, c) in rows.iter_mut().zip(&dens.rows) {
            row.extend_from_slice(&c[1..]);
        }
    }
    Ok(Table { columns, rows })
}
