//! Exact finite-state verification on small rings: generator matrices,
//! stationary distributions, exhaustive audits of the couplings and
//! absorption computations.

use std::collections::HashMap;
use std::fmt::Debug;
use std::hash::Hash;

use nalgebra::{DMatrix, DVector};
use num_integer::Integer;
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use rayon::prelude::*;
use serde::Serialize;

use crate::coupling::{chain_table, coupled_transitions, transitions_from_table, CouplingKind, MoveKind};
use crate::error::{Error, Result};
use crate::lattice::{Configuration, CoupledState, PairOrder};
use crate::monotone::strictness_report;
use crate::rates::{RateSpec, RateTable};
use crate::scalar::{Exact, Rate};

/// Largest ring for single-chain generators (2^14 states).
pub const MAX_SINGLE_RING: usize = 14;
/// Largest ring for exhaustive coupled generators and audits (4^6 states).
pub const MAX_COUPLED_RING: usize = 6;
/// Largest ring for the absorption computation (4^8 states, solved blockwise).
pub const MAX_EXTINCTION_RING: usize = 8;
/// Largest ring for dense matrix exponentials (4^4 states).
pub const MAX_EXPM_RING: usize = 4;

/// Sectors up to this size are solved by dense LU, larger ones iteratively.
const DENSE_LIMIT: usize = 1500;

/// State of a chain with conserved particle numbers.
pub trait ChainState: Copy + Eq + Hash + Ord + Send + Sync + Debug {
    /// Particle numbers, conserved by every transition.
    fn block(&self) -> (usize, usize);
}

impl ChainState for Configuration {
    fn block(&self) -> (usize, usize) {
        (self.particle_count(), 0)
    }
}

impl ChainState for CoupledState {
    fn block(&self) -> (usize, usize) {
        (self.first.particle_count(), self.second.particle_count())
    }
}

/// Sparse generator: off-diagonal rates per row, diagonal equal to minus the row sum.
#[derive(Clone, Debug)]
pub struct GeneratorMatrix<S, T> {
    states: Vec<S>,
    index: HashMap<S, usize>,
    rows: Vec<Vec<(usize, T)>>,
    diagonal: Vec<T>,
}

impl<S: ChainState, T: Rate> GeneratorMatrix<S, T> {
    /// Assemble from per-state outgoing moves; duplicates are summed and
    /// zero rates dropped.
    fn assemble(states: Vec<S>, moves: impl Fn(&S) -> Result<Vec<(S, T)>> + Sync) -> Result<Self> {
        let index: HashMap<S, usize> = states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        let rows: Vec<Vec<(usize, T)>> = states
            .par_iter()
            .map(|s| {
                let mut row: Vec<(usize, T)> = Vec::new();
                for (target, rate) in moves(s)? {
                    let j = *index
                        .get(&target)
                        .ok_or_else(|| Error::State(format!("transition leaves the state space: {target:?}")))?;
                    row.push((j, rate));
                }
                row.sort_by_key(|e| e.0);
                let mut merged: Vec<(usize, T)> = Vec::with_capacity(row.len());
                for (j, r) in row {
                    match merged.last_mut() {
                        Some(last) if last.0 == j => last.1 = last.1.clone() + r,
                        _ => merged.push((j, r)),
                    }
                }
                merged.retain(|(_, r)| !r.is_zero());
                Ok(merged)
            })
            .collect::<Result<_>>()?;
        let diagonal = rows
            .iter()
            .map(|row| T::zero() - row.iter().fold(T::zero(), |acc, (_, r)| acc + r.clone()))
            .collect();
        Ok(Self { states, index, rows, diagonal })
    }

    pub fn dimension(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[S] {
        &self.states
    }

    pub fn index_of(&self, s: &S) -> Option<usize> {
        self.index.get(s).copied()
    }

    /// Off-diagonal entries of row `i`, sorted by column.
    pub fn row(&self, i: usize) -> &[(usize, T)] {
        &self.rows[i]
    }

    pub fn diagonal(&self, i: usize) -> &T {
        &self.diagonal[i]
    }

    pub fn entry(&self, i: usize, j: usize) -> T {
        if i == j {
            return self.diagonal[i].clone();
        }
        self.rows[i]
            .binary_search_by_key(&j, |e| e.0)
            .map(|k| self.rows[i][k].1.clone())
            .unwrap_or_else(|_| T::zero())
    }

    pub fn nonzeros(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Largest `|Σ_j Q(i,j)|`.
    pub fn max_row_sum(&self) -> f64 {
        (0..self.dimension())
            .map(|i| {
                let s = self.rows[i].iter().fold(self.diagonal[i].clone(), |acc, (_, r)| acc + r.clone());
                s.as_f64().abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn min_off_diagonal(&self) -> Option<T> {
        self.rows.iter().flatten().map(|(_, r)| r.clone()).reduce(|a, b| if b < a { b } else { a })
    }

    /// Every transition stays in its particle-number block.
    pub fn is_block_diagonal(&self) -> bool {
        (0..self.dimension()).all(|i| self.rows[i].iter().all(|&(j, _)| self.states[j].block() == self.states[i].block()))
    }

    /// `(Qf)(i) = Σ_j Q(i,j) f(j)`.
    pub fn apply(&self, f: &[T]) -> Vec<T> {
        (0..self.dimension())
            .map(|i| {
                self.rows[i]
                    .iter()
                    .fold(self.diagonal[i].clone() * f[i].clone(), |acc, (j, r)| acc + r.clone() * f[*j].clone())
            })
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dimension();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diagonal[i].as_f64();
            for (j, r) in &self.rows[i] {
                m[(i, *j)] = r.as_f64();
            }
        }
        m
    }
}

fn check_single_ring(spec: &RateSpec, len: usize) -> Result<()> {
    spec.check_ring(len)?;
    if len > MAX_SINGLE_RING {
        return Err(Error::InvalidArgument(format!(
            "single-chain generators are limited to L ≤ {MAX_SINGLE_RING}, got {len}"
        )));
    }
    Ok(())
}

fn single_moves<T: Rate>(rates: &RateTable<T>, eta: &Configuration) -> Vec<(Configuration, T)> {
    let len = eta.len();
    let mut out = Vec::new();
    for x in (0..len).filter(|&x| eta.at(x)) {
        for i in 0..rates.offsets().len() {
            let y = rates.target(len, x, i);
            let r = rates.by_index(eta, x, i);
            if !eta.at(y) && !r.is_zero() {
                out.push((eta.swapped(x, y), r.clone()));
            }
        }
    }
    out
}

/// Generator of the exclusion process on the ring of `len` sites.
pub fn build_generator<T: Rate>(spec: &RateSpec, len: usize) -> Result<GeneratorMatrix<Configuration, T>> {
    check_single_ring(spec, len)?;
    let rates = spec.table::<T>();
    GeneratorMatrix::assemble(Configuration::all(len).collect(), |eta| Ok(single_moves(&rates, eta)))
}

/// Generator restricted to the sector with `n` particles.
pub fn build_sector_generator<T: Rate>(
    spec: &RateSpec,
    len: usize,
    n: usize,
) -> Result<GeneratorMatrix<Configuration, T>> {
    check_single_ring(spec, len)?;
    if n > len {
        return Err(Error::InvalidArgument(format!("sector {n} on {len} sites")));
    }
    let rates = spec.table::<T>();
    GeneratorMatrix::assemble(Configuration::sector(len, n).collect(), |eta| Ok(single_moves(&rates, eta)))
}

fn coupled_moves<T: Rate>(
    rates: &RateTable<T>,
    pair: &CoupledState,
    kind: CouplingKind,
) -> Result<Vec<(CoupledState, T)>> {
    let mut out = Vec::new();
    for m in coupled_transitions(rates, pair, kind) {
        if !m.rate.is_active() {
            return Err(Error::State(format!(
                "negative {kind} coupling rate {} from ({}, {}); the rates are not monotone",
                m.rate.to_text(),
                pair.first,
                pair.second
            )));
        }
        out.push((m.target, m.rate));
    }
    Ok(out)
}

/// Generator of the coupled chain over all pairs on `len ≤ 6` sites.
pub fn build_coupled_generator<T: Rate>(
    spec: &RateSpec,
    len: usize,
    kind: CouplingKind,
) -> Result<GeneratorMatrix<CoupledState, T>> {
    spec.check_ring(len)?;
    if len > MAX_COUPLED_RING {
        return Err(Error::InvalidArgument(format!(
            "coupled generators are limited to L ≤ {MAX_COUPLED_RING}, got {len}"
        )));
    }
    let rates = spec.table::<T>();
    GeneratorMatrix::assemble(CoupledState::all(len).collect(), |p| coupled_moves(&rates, p, kind))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Marginal {
    First,
    Second,
}

/// Largest deviation between the coupled chain's projected rates and the
/// single chain: for every pair and every target `η'` of the chosen
/// marginal, `Σ_{pairs projecting to η'} Q̄ = Q(η, η')`.
pub fn marginal_projection_error<T: Rate>(
    coupled: &GeneratorMatrix<CoupledState, T>,
    single: &GeneratorMatrix<Configuration, T>,
    which: Marginal,
) -> Result<f64> {
    let project = |p: &CoupledState| match which {
        Marginal::First => p.first,
        Marginal::Second => p.second,
    };
    let mut worst = 0.0f64;
    for (i, pair) in coupled.states().iter().enumerate() {
        let eta = project(pair);
        let si = single
            .index_of(&eta)
            .ok_or_else(|| Error::SizeMismatch { left: eta.len(), right: single.states()[0].len() })?;
        let mut projected: HashMap<usize, T> = HashMap::new();
        for (j, r) in coupled.row(i) {
            let target = project(&coupled.states()[*j]);
            if target != eta {
                let k = single.index_of(&target).expect("same ring");
                let e = projected.entry(k).or_insert_with(T::zero);
                *e = e.clone() + r.clone();
            }
        }
        for (k, r) in single.row(si) {
            let got = projected.remove(k).unwrap_or_else(T::zero);
            worst = worst.max((got - r.clone()).as_f64().abs());
        }
        for (_, r) in projected {
            worst = worst.max(r.as_f64().abs());
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StationaryDistribution {
    pub sector: usize,
    pub states: Vec<Configuration>,
    pub weights: Vec<f64>,
    /// `‖πQ‖∞` over the class.
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StationaryReport {
    pub sector: usize,
    /// One distribution per closed communicating class.
    pub classes: Vec<StationaryDistribution>,
    pub warning: Option<String>,
}

impl StationaryReport {
    /// The distribution when the sector has a single closed class.
    pub fn unique(&self) -> Option<&StationaryDistribution> {
        match self.classes.as_slice() {
            [one] => Some(one),
            _ => None,
        }
    }
}

/// Closed communicating classes among `nodes` (indices into `matrix`).
fn closed_classes<S: ChainState, T: Rate>(matrix: &GeneratorMatrix<S, T>, nodes: &[usize]) -> Vec<Vec<usize>> {
    let local: HashMap<usize, usize> = nodes.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let mut graph = DiGraph::<(), ()>::with_capacity(nodes.len(), 0);
    let ids: Vec<_> = nodes.iter().map(|_| graph.add_node(())).collect();
    for (k, &i) in nodes.iter().enumerate() {
        for (j, _) in matrix.row(i) {
            if let Some(&l) = local.get(j) {
                graph.add_edge(ids[k], ids[l], ());
            }
        }
    }
    let mut classes: Vec<Vec<usize>> = tarjan_scc(&graph)
        .into_iter()
        .map(|comp| {
            let mut c: Vec<usize> = comp.into_iter().map(|n| nodes[n.index()]).collect();
            c.sort_unstable();
            c
        })
        .filter(|class| {
            class.iter().all(|&i| matrix.row(i).iter().all(|(j, _)| class.binary_search(j).is_ok()))
        })
        .collect();
    classes.sort();
    classes
}

/// Stationary distribution(s) of the sector with `sector` particles.
pub fn stationary(matrix: &GeneratorMatrix<Configuration, f64>, sector: usize) -> Result<StationaryReport> {
    let nodes: Vec<usize> =
        (0..matrix.dimension()).filter(|&i| matrix.states()[i].particle_count() == sector).collect();
    if nodes.is_empty() {
        return Err(Error::InvalidArgument(format!("no states with {sector} particles")));
    }
    let classes = closed_classes(matrix, &nodes);
    let warning = (classes.len() > 1).then(|| {
        format!("sector {sector} is reducible: {} closed classes, one distribution each", classes.len())
    });
    let classes = classes
        .into_iter()
        .map(|class| {
            let (weights, residual) = solve_class(matrix, &class);
            StationaryDistribution {
                sector,
                states: class.iter().map(|&i| matrix.states()[i]).collect(),
                weights,
                residual,
            }
        })
        .collect();
    Ok(StationaryReport { sector, classes, warning })
}

fn solve_class(matrix: &GeneratorMatrix<Configuration, f64>, class: &[usize]) -> (Vec<f64>, f64) {
    let n = class.len();
    if n == 1 {
        return (vec![1.0], 0.0);
    }
    let local: HashMap<usize, usize> = class.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let mut weights = if n <= DENSE_LIMIT {
        // πQ = 0 with the last balance equation replaced by Σπ = 1
        let mut a = DMatrix::<f64>::zeros(n, n);
        for (k, &i) in class.iter().enumerate() {
            a[(k, k)] += matrix.diagonal(i);
            for (j, r) in matrix.row(i) {
                a[(local[j], k)] += r;
            }
        }
        for k in 0..n {
            a[(n - 1, k)] = 1.0;
        }
        let mut b = DVector::<f64>::zeros(n);
        b[n - 1] = 1.0;
        match a.lu().solve(&b) {
            Some(x) => x.iter().copied().collect(),
            None => power_iteration(matrix, class, &local),
        }
    } else {
        power_iteration(matrix, class, &local)
    };
    for w in &mut weights {
        if *w < 0.0 {
            *w = 0.0;
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let mut flow = vec![0.0; n];
    for (k, &i) in class.iter().enumerate() {
        flow[k] += weights[k] * matrix.diagonal(i);
        for (j, r) in matrix.row(i) {
            flow[local[j]] += weights[k] * r;
        }
    }
    let residual = flow.iter().map(|f| f.abs()).fold(0.0, f64::max);
    (weights, residual)
}

/// Iterate `π ← π(I + Q/Λ)` on the uniformized kernel.
fn power_iteration(matrix: &GeneratorMatrix<Configuration, f64>, class: &[usize], local: &HashMap<usize, usize>) -> Vec<f64> {
    let n = class.len();
    let lambda = class.iter().map(|&i| -matrix.diagonal(i)).fold(0.0, f64::max) * 1.05;
    let mut pi = vec![1.0 / n as f64; n];
    for _ in 0..200_000 {
        let mut next = vec![0.0; n];
        for (k, &i) in class.iter().enumerate() {
            next[k] += pi[k] * (1.0 + matrix.diagonal(i) / lambda);
            for (j, r) in matrix.row(i) {
                next[local[j]] += pi[k] * r / lambda;
            }
        }
        let change = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        pi = next;
        if change < 1e-15 {
            break;
        }
    }
    pi
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SectorUniformity {
    pub sector: usize,
    pub states: usize,
    /// Uniform weights are stationary on the sector.
    pub uniform: bool,
    /// Largest `|inflow - outflow|` under uniform weights.
    pub max_column_sum: f64,
}

/// Whether the uniform measure on each sector is stationary, i.e. every
/// column of the generator sums to zero (tolerance `1e-12` in `f64`).
pub fn check_sector_uniform_stationary<T: Rate>(spec: &RateSpec, len: usize) -> Result<Vec<SectorUniformity>> {
    check_single_ring(spec, len)?;
    let rates = spec.table::<T>();
    let mut columns: Vec<T> = vec![T::zero(); 1usize << len];
    for eta in Configuration::all(len) {
        for (target, r) in single_moves(&rates, &eta) {
            let (s, t) = (eta.bits() as usize, target.bits() as usize);
            columns[t] = columns[t].clone() + r.clone();
            columns[s] = columns[s].clone() - r;
        }
    }
    Ok((0..=len)
        .map(|n| {
            let worst = Configuration::sector(len, n)
                .map(|eta| columns[eta.bits() as usize].as_f64().abs())
                .fold(0.0, f64::max);
            let uniform = Configuration::sector(len, n).all(|eta| {
                let c = &columns[eta.bits() as usize];
                c.approx_eq(&T::zero())
            });
            SectorUniformity { sector: n, states: Configuration::sector(len, n).count(), uniform, max_column_sum: worst }
        })
        .collect())
}

/// One offending move found by an audit.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransitionWitness {
    pub source: CoupledState,
    pub target: CoupledState,
    pub kind: MoveKind,
    pub first_jump: Option<(usize, usize)>,
    pub second_jump: Option<(usize, usize)>,
    pub rate: String,
    pub discrepancy_delta: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditReport {
    pub check: &'static str,
    pub model: String,
    pub ring: usize,
    pub kind: CouplingKind,
    pub pairs: usize,
    pub transitions: usize,
    pub violations: usize,
    /// Moves with a negative rate (a coupling that is not well defined).
    pub negative_rates: usize,
    /// First witnesses in canonical pair order.
    pub witnesses: Vec<TransitionWitness>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.violations == 0
    }
}

const MAX_WITNESSES: usize = 20;

fn audit<T: Rate>(
    spec: &RateSpec,
    len: usize,
    kind: CouplingKind,
    check: &'static str,
    pairs: Vec<CoupledState>,
    bad: impl Fn(&crate::coupling::TransitionAudit<T>) -> bool + Sync,
) -> Result<AuditReport> {
    spec.check_ring(len)?;
    if len > MAX_COUPLED_RING {
        return Err(Error::InvalidArgument(format!("exhaustive audits are limited to L ≤ {MAX_COUPLED_RING}")));
    }
    let rates = spec.table::<T>();
    let per_pair: Vec<(usize, usize, Vec<TransitionWitness>)> = pairs
        .par_iter()
        .map(|p| {
            let moves = coupled_transitions(&rates, p, kind);
            let negative = moves.iter().filter(|m| !m.rate.is_active()).count();
            let positive: Vec<_> = moves.into_iter().filter(|m| m.rate.is_active()).collect();
            let witnesses = positive
                .iter()
                .filter(|m| bad(m))
                .map(|m| TransitionWitness {
                    source: *p,
                    target: m.target,
                    kind: m.kind,
                    first_jump: m.first_jump,
                    second_jump: m.second_jump,
                    rate: m.rate.to_text(),
                    discrepancy_delta: m.discrepancy_delta,
                })
                .collect();
            (positive.len(), negative, witnesses)
        })
        .collect();
    let mut report = AuditReport {
        check,
        model: spec.to_string(),
        ring: len,
        kind,
        pairs: pairs.len(),
        transitions: 0,
        violations: 0,
        negative_rates: 0,
        witnesses: Vec::new(),
    };
    for (moves, negative, witnesses) in per_pair {
        report.transitions += moves;
        report.negative_rates += negative;
        report.violations += witnesses.len();
        let room = MAX_WITNESSES.saturating_sub(report.witnesses.len());
        report.witnesses.extend(witnesses.into_iter().take(room));
    }
    Ok(report)
}

/// Every positive-rate move of the increasing coupling from every ordered
/// pair; reports moves after which the pair is no longer ordered the same way.
pub fn audit_order_preservation<T: Rate>(spec: &RateSpec, len: usize) -> Result<AuditReport> {
    spec.check_ring(len)?;
    let pairs: Vec<CoupledState> = CoupledState::all(len).filter(CoupledState::is_ordered).collect();
    audit::<T>(spec, len, CouplingKind::Increasing, "order_preservation", pairs, |m| !m.order_preserved)
}

/// Every positive-rate move of the attractive coupling from every pair;
/// reports moves that increase the number of discrepancies.
pub fn audit_discrepancy_monotone<T: Rate>(spec: &RateSpec, len: usize) -> Result<AuditReport> {
    spec.check_ring(len)?;
    let pairs: Vec<CoupledState> = CoupledState::all(len).collect();
    audit::<T>(spec, len, CouplingKind::Attractive, "discrepancy_monotone", pairs, |m| m.discrepancy_delta > 0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChannelStatus {
    pub offset: i64,
    /// Window patterns (with the jump allowed by exclusion) giving a positive rate.
    pub open_patterns: u64,
    pub closed_patterns: u64,
}

impl ChannelStatus {
    pub fn always_open(&self) -> bool {
        self.closed_patterns == 0
    }

    pub fn pattern_dependent(&self) -> bool {
        self.open_patterns > 0 && self.closed_patterns > 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockingReport {
    pub model: String,
    pub channels: Vec<ChannelStatus>,
    /// Some channel opens or closes depending on the surrounding configuration.
    pub blocking: bool,
    pub open_offsets: Vec<i64>,
}

impl BlockingReport {
    /// The always-open offsets generate the ring `Z/len`.
    pub fn connects(&self, len: usize) -> bool {
        self.open_offsets.iter().fold(len as i64, |g, &d| g.gcd(&d)) == 1
    }

    pub fn diagnostic(&self) -> String {
        let dependent: Vec<String> =
            self.channels.iter().filter(|c| c.pattern_dependent()).map(|c| format!("{:+}", c.offset)).collect();
        if dependent.is_empty() {
            format!("{}: no blocking configurations", self.model)
        } else {
            format!(
                "{}: blocking configurations, the open edges depend on the configuration on channel(s) {}",
                self.model,
                dependent.join(", ")
            )
        }
    }
}

/// For each jump offset, whether the rate is positive on every, some or no
/// window pattern allowed by exclusion.
pub fn blocking_scan(spec: &RateSpec) -> BlockingReport {
    let k = spec.reach();
    let width = 2 * k + 1;
    let channels: Vec<ChannelStatus> = spec
        .offsets()
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let (mut open, mut closed) = (0u64, 0u64);
            let target = (k as i64 + d) as usize;
            for w in 0u64..(1u64 << width) {
                if (w >> k) & 1 == 0 || (w >> target) & 1 == 1 {
                    continue;
                }
                if spec.exact_rate(i, w) > Exact::from_integer(0) {
                    open += 1;
                } else {
                    closed += 1;
                }
            }
            ChannelStatus { offset: d, open_patterns: open, closed_patterns: closed }
        })
        .collect();
    let blocking = channels.iter().any(ChannelStatus::pattern_dependent);
    let open_offsets = channels.iter().filter(|c| c.always_open() && c.open_patterns > 0).map(|c| c.offset).collect();
    BlockingReport { model: spec.to_string(), channels, blocking, open_offsets }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairProbability {
    pub pair: CoupledState,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExtinctionReport {
    pub model: String,
    pub ring: usize,
    pub kind: CouplingKind,
    /// Strictness of the inequalities (reported, not required).
    pub strict: Option<bool>,
    pub unordered_pairs: usize,
    pub min_probability: f64,
    /// Every unordered pair can reach the ordered set in the transition graph.
    pub all_reach_ordered: bool,
    pub probabilities: Vec<PairProbability>,
}

/// Probability that the coupled chain started from each unordered pair
/// ever reaches `{ξ ≤ ζ} ∪ {ξ > ζ}`. Solved per particle-number block.
pub fn discrepancy_extinction(spec: &RateSpec, len: usize, kind: CouplingKind) -> Result<ExtinctionReport> {
    spec.check_ring(len)?;
    if len > MAX_EXTINCTION_RING {
        return Err(Error::InvalidArgument(format!("absorption is computed for L ≤ {MAX_EXTINCTION_RING}")));
    }
    let scan = blocking_scan(spec);
    if scan.blocking || !scan.connects(len) {
        return Err(Error::Blocking(scan.diagnostic()));
    }
    let strict = strictness_report::<Exact>(spec).ok().map(|r| r.strict);
    let rates = spec.table::<f64>();
    let mut probabilities = Vec::new();
    let mut all_reach = true;
    for n1 in 0..=len {
        for n2 in 0..=len {
            let unordered: Vec<CoupledState> = Configuration::sector(len, n1)
                .flat_map(|a| Configuration::sector(len, n2).map(move |b| CoupledState { first: a, second: b }))
                .filter(|p| !p.is_ordered())
                .collect();
            if unordered.is_empty() {
                continue;
            }
            let (probs, reach) = absorb_block(&rates, &unordered, kind)?;
            all_reach &= reach;
            probabilities.extend(unordered.into_iter().zip(probs).map(|(pair, probability)| PairProbability { pair, probability }));
        }
    }
    let min_probability = probabilities.iter().map(|p| p.probability).fold(1.0, f64::min);
    Ok(ExtinctionReport {
        model: spec.to_string(),
        ring: len,
        kind,
        strict,
        unordered_pairs: probabilities.len(),
        min_probability,
        all_reach_ordered: all_reach,
        probabilities,
    })
}

/// Hitting probabilities of the ordered set from the unordered states of one block.
fn absorb_block(rates: &RateTable<f64>, unordered: &[CoupledState], kind: CouplingKind) -> Result<(Vec<f64>, bool)> {
    let local: HashMap<CoupledState, usize> = unordered.iter().enumerate().map(|(i, p)| (*p, i)).collect();
    let m = unordered.len();
    // per state: (moves inside the block, rate into the ordered set, exit rate)
    let rows: Vec<(Vec<(usize, f64)>, f64, f64)> = unordered
        .par_iter()
        .map(|p| {
            let table = chain_table(rates, &p.first, &p.second, kind);
            let mut inside = Vec::new();
            let (mut absorbed, mut exit) = (0.0, 0.0);
            for mv in transitions_from_table(p, &table) {
                if !mv.rate.is_active() {
                    return Err(Error::State(format!("negative coupling rate from ({}, {})", p.first, p.second)));
                }
                exit += mv.rate;
                match local.get(&mv.target) {
                    Some(&j) => inside.push((j, mv.rate)),
                    None => absorbed += mv.rate,
                }
            }
            Ok((inside, absorbed, exit))
        })
        .collect::<Result<_>>()?;
    // states that can reach the ordered set, by backward search
    let mut incoming: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (i, (inside, _, _)) in rows.iter().enumerate() {
        for &(j, _) in inside {
            incoming[j].push(i);
        }
    }
    let mut reach = vec![false; m];
    let mut stack: Vec<usize> = (0..m).filter(|&i| rows[i].1 > 0.0).collect();
    for &i in &stack {
        reach[i] = true;
    }
    while let Some(j) = stack.pop() {
        for &i in &incoming[j] {
            if !reach[i] {
                reach[i] = true;
                stack.push(i);
            }
        }
    }
    let all = reach.iter().all(|&r| r);
    let probs = if m <= DENSE_LIMIT {
        // exit_i h_i - Σ_j q_ij h_j = q_i(ordered); unreachable states have h = 0
        let mut a = DMatrix::<f64>::zeros(m, m);
        let mut b = DVector::<f64>::zeros(m);
        for (i, (inside, absorbed, exit)) in rows.iter().enumerate() {
            if !reach[i] {
                a[(i, i)] = 1.0;
                continue;
            }
            a[(i, i)] = *exit;
            for &(j, r) in inside {
                a[(i, j)] -= r;
            }
            b[i] = *absorbed;
        }
        a.lu()
            .solve(&b)
            .ok_or_else(|| Error::State("singular absorption system".into()))?
            .iter()
            .copied()
            .collect()
    } else if all {
        // finite chain, absorbing set reachable from everywhere
        vec![1.0; m]
    } else {
        gauss_seidel(&rows, &reach)
    };
    Ok((probs, all))
}

fn gauss_seidel(rows: &[(Vec<(usize, f64)>, f64, f64)], reach: &[bool]) -> Vec<f64> {
    let mut h = vec![0.0; rows.len()];
    for _ in 0..100_000 {
        let mut change: f64 = 0.0;
        for (i, (inside, absorbed, exit)) in rows.iter().enumerate() {
            if !reach[i] {
                continue;
            }
            let v = (absorbed + inside.iter().map(|&(j, r)| r * h[j]).sum::<f64>()) / exit;
            change = change.max((v - h[i]).abs());
            h[i] = v;
        }
        if change < 1e-14 {
            break;
        }
    }
    h
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropagationRow {
    pub time: f64,
    /// Smallest probability, over ordered starting pairs, of being ordered
    /// the same way at `time`.
    pub min_ordered_mass: f64,
    pub worst_start: CoupledState,
}

/// `P(ξ_t ≤ ζ_t)` from every start `ξ ≤ ζ` (and symmetrically for `ξ > ζ`),
/// through the matrix exponential of the coupled generator on `len ≤ 4` sites.
pub fn ordered_mass_propagation(
    spec: &RateSpec,
    len: usize,
    kind: CouplingKind,
    times: &[f64],
) -> Result<Vec<PropagationRow>> {
    if len > MAX_EXPM_RING {
        return Err(Error::InvalidArgument(format!("matrix exponentials are limited to L ≤ {MAX_EXPM_RING}")));
    }
    let q = build_coupled_generator::<f64>(spec, len, kind)?;
    let dense = q.to_dense();
    let order: Vec<PairOrder> = q.states().iter().map(CoupledState::order).collect();
    times
        .iter()
        .map(|&t| {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::InvalidArgument(format!("time {t}")));
            }
            let p = (&dense * t).exp();
            let mut worst = (f64::INFINITY, q.states()[0]);
            for (i, start) in q.states().iter().enumerate() {
                if order[i] == PairOrder::Unordered {
                    continue;
                }
                let mass: f64 = (0..q.dimension()).filter(|&j| order[j] == order[i]).map(|j| p[(i, j)]).sum();
                if mass < worst.0 {
                    worst = (mass, *start);
                }
            }
            Ok(PropagationRow { time: t, min_ordered_mass: worst.0, worst_start: worst.1 })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::monotone::{is_monotone, ring_instance, CheckKind};
    use crate::rates::{make_model, make_model_positional, zoo, ModelId};
    use num_traits::Zero;

    fn q(n: i128, d: i128) -> Exact {
        Exact::new(n, d)
    }

    fn traffic(a: Exact, b: Exact) -> RateSpec {
        make_model_positional(ModelId::Traffic2, &[a, b]).unwrap()
    }

    fn gg(p: [i128; 4]) -> RateSpec {
        make_model_positional(ModelId::GgSymmetrized, &p.map(Exact::from_integer)).unwrap()
    }

    #[test]
    fn tasep_on_three_sites_cycles() {
        let spec = make_model(ModelId::Sep, &[]).unwrap();
        let g = build_sector_generator::<Exact>(&spec, 3, 1).unwrap();
        assert_eq!(g.dimension(), 3);
        for i in 0..3 {
            assert_eq!(g.row(i).len(), 1);
            assert_eq!(g.row(i)[0].1, Exact::from_integer(1));
            assert_eq!(*g.diagonal(i), Exact::from_integer(-1));
        }
    }

    #[test]
    fn traffic_generator_matches_hand_evaluation() {
        let spec = traffic(q(1, 1), q(0, 1));
        let g = build_generator::<Exact>(&spec, 4).unwrap();
        for eta in Configuration::all(4) {
            let i = g.index_of(&eta).unwrap();
            let mut expected: HashMap<Configuration, Exact> = HashMap::new();
            for x in 0..4 {
                if !eta.at(x) {
                    continue;
                }
                if !eta.at((x + 1) % 4) {
                    *expected.entry(eta.swapped(x, (x + 1) % 4)).or_insert_with(Exact::zero) += Exact::from_integer(1);
                }
                // x → x+2 at rate α η(x+1) + β (1 - η(x+1)) = η(x+1)
                if !eta.at((x + 2) % 4) && eta.at((x + 1) % 4) {
                    *expected.entry(eta.swapped(x, (x + 2) % 4)).or_insert_with(Exact::zero) += Exact::from_integer(1);
                }
            }
            assert_eq!(g.row(i).len(), expected.len(), "{eta}");
            for (j, r) in g.row(i) {
                assert_eq!(expected[&g.states()[*j]], *r);
            }
        }
    }

    #[test]
    fn generators_are_conservative_and_block_diagonal() {
        for spec in zoo() {
            let g = build_generator::<f64>(&spec, 8).unwrap();
            assert!(g.max_row_sum() < 1e-12);
            assert!(g.is_block_diagonal());
            assert!(g.min_off_diagonal().unwrap() > 0.0);
        }
    }

    #[test]
    fn ring_limits() {
        let spec = make_model(ModelId::Sep, &[]).unwrap();
        assert!(build_generator::<f64>(&spec, 15).is_err());
        assert!(build_coupled_generator::<f64>(&spec, 7, CouplingKind::Attractive).is_err());
        let traffic = traffic(q(1, 2), q(1, 2));
        assert!(matches!(build_generator::<f64>(&traffic, 2), Err(Error::RingTooSmall { .. })));
    }

    #[test]
    fn coupled_generator_projects_to_each_marginal() {
        let spec = traffic(q(2, 5), q(4, 5));
        let single = build_generator::<Exact>(&spec, 5).unwrap();
        for kind in CouplingKind::ALL {
            let coupled = build_coupled_generator::<Exact>(&spec, 5, kind).unwrap();
            assert!(coupled.is_block_diagonal());
            for which in [Marginal::First, Marginal::Second] {
                assert_eq!(marginal_projection_error(&coupled, &single, which).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn symmetric_sep_is_uniform() {
        let spec = make_model(ModelId::Sep, &[("p1".into(), q(1, 2)), ("p-1".into(), q(1, 2))]).unwrap();
        let g = build_generator::<f64>(&spec, 4).unwrap();
        let report = stationary(&g, 2).unwrap();
        let pi = report.unique().unwrap();
        assert_eq!(pi.weights.len(), 6);
        assert!(pi.weights.iter().all(|w| (w - 1.0 / 6.0).abs() < 1e-12));
    }

    #[test]
    fn traffic_half_half_is_uniform_and_gg_has_small_residual() {
        let g = build_generator::<f64>(&traffic(q(1, 2), q(1, 2)), 6).unwrap();
        let pi = stationary(&g, 3).unwrap();
        let pi = pi.unique().unwrap();
        assert_eq!(pi.weights.len(), 20);
        assert!(pi.weights.iter().all(|w| (w - 0.05).abs() < 1e-10));
        let g = build_generator::<f64>(&gg([2, 1, 1, 2]), 6).unwrap();
        let pi = stationary(&g, 3).unwrap();
        assert!(pi.unique().unwrap().residual <= 1e-10);
    }

    #[test]
    fn reducible_sector_reports_each_closed_class() {
        // only the x+2 channel: even and odd sublattices never mix
        let spec = make_model(ModelId::Sep, &[("p2".into(), q(1, 1))]).unwrap();
        let g = build_generator::<f64>(&spec, 6).unwrap();
        let report = stationary(&g, 2).unwrap();
        assert!(report.classes.len() > 1);
        assert!(report.warning.is_some());
        for class in &report.classes {
            assert!(class.residual < 1e-10);
        }
    }

    #[test]
    fn power_iteration_agrees_with_the_dense_solve() {
        let g = build_generator::<f64>(&gg([2, 1, 1, 2]), 6).unwrap();
        let nodes: Vec<usize> = (0..g.dimension()).filter(|&i| g.states()[i].particle_count() == 3).collect();
        let class = &closed_classes(&g, &nodes)[0];
        let local: HashMap<usize, usize> = class.iter().enumerate().map(|(k, &i)| (i, k)).collect();
        let (dense, _) = solve_class(&g, class);
        let iterated = power_iteration(&g, class, &local);
        let total: f64 = iterated.iter().sum();
        for (a, b) in dense.iter().zip(&iterated) {
            assert!((a - b / total).abs() < 1e-9);
        }
    }

    #[test]
    fn uniform_sectors() {
        let two_star = make_model(ModelId::TwoStarStep, &[]).unwrap();
        assert!(check_sector_uniform_stationary::<Exact>(&two_star, 8).unwrap().iter().all(|s| s.uniform));
        let asym = make_model(ModelId::Sep, &[("p1".into(), q(3, 4)), ("p-1".into(), q(1, 4))]).unwrap();
        assert!(check_sector_uniform_stationary::<f64>(&asym, 6).unwrap().iter().all(|s| s.uniform));
        let gg = gg([2, 1, 1, 2]);
        assert!(!check_sector_uniform_stationary::<Exact>(&gg, 6).unwrap().iter().all(|s| s.uniform));
    }

    #[test]
    fn order_audit_examples() {
        assert!(audit_order_preservation::<Exact>(&traffic(q(3, 10), q(7, 10)), 6).unwrap().is_clean());
        assert!(audit_order_preservation::<Exact>(&make_model(ModelId::Sep, &[]).unwrap(), 6).unwrap().is_clean());
    }

    #[test]
    fn order_breaking_moves_sit_on_violated_inequalities() {
        let spec = traffic(q(0, 1), q(2, 1));
        let verdict = is_monotone::<Exact>(&spec);
        assert!(!verdict.monotone);
        let report = audit_order_preservation::<Exact>(&spec, 6).unwrap();
        assert!(report.violations > 0);
        let table = spec.table::<Exact>();
        for w in &report.witnesses {
            // orient so that the source is ξ ≤ ζ
            let (src, dst, lo_jump, hi_jump) = if w.source.order() == PairOrder::Below {
                (w.source, w.target, w.first_jump, w.second_jump)
            } else {
                (w.source.swapped(), w.target.swapped(), w.second_jump, w.first_jump)
            };
            let broken: Vec<usize> = (0..6).filter(|&s| dst.first.at(s) && !dst.second.at(s)).collect();
            assert!(!broken.is_empty());
            for c in broken {
                let kind = if lo_jump.is_some_and(|(_, y)| y == c) {
                    CheckKind::Arrival
                } else {
                    assert!(hi_jump.is_some_and(|(x, _)| x == c));
                    CheckKind::Departure
                };
                let (lhs, rhs) = ring_instance(&table, &src.first, &src.second, c, kind).unwrap();
                assert!(lhs > rhs, "{kind:?} at {c}: {lhs} ≤ {rhs}");
                assert!(verdict.witnesses.iter().any(|v| v.kind == kind));
            }
        }
    }

    #[test]
    fn discrepancy_audit_examples() {
        for spec in [traffic(q(1, 1), q(0, 1)), gg([1, 1, 1, 1]), make_model(ModelId::Sep, &[]).unwrap()] {
            assert!(audit_discrepancy_monotone::<Exact>(&spec, 5).unwrap().is_clean());
        }
    }

    #[test]
    fn blocking_scan_examples() {
        let open = blocking_scan(&traffic(q(1, 2), q(1, 2)));
        assert!(!open.blocking);
        assert_eq!(open.open_offsets, vec![1, 2]);
        let blocked = blocking_scan(&traffic(q(1, 1), q(0, 1)));
        assert!(blocked.blocking);
        assert!(blocked.channels[1].pattern_dependent());
        assert!(!blocked.channels[0].pattern_dependent());
        assert!(blocked.diagnostic().contains("+2"));
        assert!(matches!(
            discrepancy_extinction(&traffic(q(1, 1), q(0, 1)), 6, CouplingKind::Strict),
            Err(Error::Blocking(_))
        ));
        assert!(!blocking_scan(&gg([2, 1, 1, 2])).blocking);
    }

    #[test]
    fn sep_and_traffic_discrepancies_die_out() {
        for spec in [make_model(ModelId::Sep, &[]).unwrap(), traffic(q(1, 2), q(1, 2))] {
            let report = discrepancy_extinction(&spec, 6, CouplingKind::Strict).unwrap();
            assert!(report.all_reach_ordered);
            assert!((report.min_probability - 1.0).abs() < 1e-8, "{}", report.min_probability);
            assert!(report.unordered_pairs > 0);
        }
    }

    #[test]
    fn ordered_mass_is_kept() {
        let spec = traffic(q(3, 10), q(7, 10));
        assert!(is_monotone::<Exact>(&spec).monotone);
        for row in ordered_mass_propagation(&spec, 4, CouplingKind::Increasing, &[0.5, 1.0, 2.0]).unwrap_or_else(|e| panic!("{e}")) {
            assert!((row.min_ordered_mass - 1.0).abs() < 1e-9, "{row:?}");
        }
    }
}
