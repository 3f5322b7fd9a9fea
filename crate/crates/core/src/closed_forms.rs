//! Closed-form coupling rates for the range-2 traffic model and the
//! symmetrized gg model, compared entry by entry with the engine.
//!
//! Formulas are written relative to the first marginal's departure site
//! `x = x1` and only hold on prefactor-active quadruples.

use serde::Serialize;

use crate::coupling::{attractive_rates, increasing_rates, CouplingTable};
use crate::lattice::{Configuration, CoupledState, PairOrder};
use crate::rates::{ModelId, RateSpec, RateTable};
use crate::scalar::{min, pos_diff, Exact};
use crate::{Error, Result};

use num_traits::{One, Zero};

/// Agreement for one closed-form entry.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntryAgreement {
    pub label: &'static str,
    pub compared: usize,
    pub mismatches: usize,
    pub example: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClosedFormReport {
    pub model: String,
    pub table: &'static str,
    pub pairs: usize,
    pub entries: Vec<EntryAgreement>,
    /// Engine entries that are positive where no closed form applies.
    pub unlisted_nonzero: usize,
    pub unlisted_example: Option<String>,
}

impl ClosedFormReport {
    pub fn mismatches(&self) -> usize {
        self.entries.iter().map(|e| e.mismatches).sum::<usize>() + self.unlisted_nonzero
    }

    pub fn agrees(&self) -> bool {
        self.mismatches() == 0
    }
}

/// Local view of a pair around `x`.
struct Local<'a> {
    xi: &'a Configuration,
    zeta: &'a Configuration,
    x: usize,
}

impl Local<'_> {
    fn xi(&self, k: i64) -> Exact {
        bit(self.xi.at_wrapped(self.x as i64 + k))
    }

    fn zeta(&self, k: i64) -> Exact {
        bit(self.zeta.at_wrapped(self.x as i64 + k))
    }

    fn join(&self, k: i64) -> Exact {
        let s = self.x as i64 + k;
        bit(self.xi.at_wrapped(s) || self.zeta.at_wrapped(s))
    }
}

fn bit(b: bool) -> Exact {
    if b {
        Exact::one()
    } else {
        Exact::zero()
    }
}

fn one_minus(v: Exact) -> Exact {
    Exact::one() - v
}

type Key = (i64, i64, i64);

/// A closed form: `(entry index, value)` for the quadruple, or `None` when
/// the list has no entry for it (the rate should then be 0).
type Formula<'f> = dyn Fn(&Local, Key, PairOrder) -> Option<(usize, Exact)> + 'f;

fn compare(
    spec: &RateSpec,
    table_name: &'static str,
    labels: &[&'static str],
    pairs: impl Iterator<Item = CoupledState>,
    engine: impl Fn(&RateTable<Exact>, &Configuration, &Configuration) -> CouplingTable<Exact>,
    formula: &Formula,
) -> ClosedFormReport {
    let rates = spec.table::<Exact>();
    let mut entries: Vec<EntryAgreement> = labels
        .iter()
        .map(|&label| EntryAgreement { label, compared: 0, mismatches: 0, example: None })
        .collect();
    let mut report = ClosedFormReport {
        model: spec.to_string(),
        table: table_name,
        pairs: 0,
        entries: Vec::new(),
        unlisted_nonzero: 0,
        unlisted_example: None,
    };
    for pair in pairs {
        report.pairs += 1;
        let (xi, zeta) = (&pair.first, &pair.second);
        let len = xi.len();
        let table = engine(&rates, xi, zeta);
        let jumps = |eta: &Configuration| -> Vec<(usize, usize)> {
            let mut out = Vec::new();
            for x in (0..len).filter(|&x| eta.at(x)) {
                for i in 0..rates.offsets().len() {
                    let y = rates.target(len, x, i);
                    if !eta.at(y) {
                        out.push((x, y));
                    }
                }
            }
            out
        };
        let second = jumps(zeta);
        for (x1, y1) in jumps(xi) {
            for &(x2, y2) in &second {
                let key = (xi.offset(x1, y1), xi.offset(x1, x2), xi.offset(x1, y2));
                let local = Local { xi, zeta, x: x1 };
                let got = table.get(x1, y1, x2, y2);
                let describe = || format!("xi={xi} zeta={zeta} ({x1},{y1};{x2},{y2}) engine={got}");
                match formula(&local, key, pair.order()) {
                    Some((i, want)) => {
                        let e = &mut entries[i];
                        e.compared += 1;
                        if got != want {
                            e.mismatches += 1;
                            e.example.get_or_insert_with(|| format!("{} closed form={want}", describe()));
                        }
                    }
                    None if !got.is_zero() => {
                        report.unlisted_nonzero += 1;
                        report.unlisted_example.get_or_insert_with(describe);
                    }
                    None => {}
                }
            }
        }
    }
    report.entries = entries;
    report
}

fn gamma_min(rates: &RateTable<Exact>, l: &Local, dy: i64) -> Exact {
    let y = l.xi.wrap(l.x as i64 + dy);
    min(&rates.gamma(l.xi, l.x, y), &rates.gamma(l.zeta, l.x, y))
}

fn traffic_params(spec: &RateSpec) -> Result<(Exact, Exact)> {
    if spec.id() != ModelId::Traffic2 {
        return Err(Error::InvalidArgument(format!("{} is not traffic2", spec.name())));
    }
    Ok((spec.param("alpha").unwrap(), spec.param("beta").unwrap()))
}

fn gg_params(spec: &RateSpec) -> Result<[Exact; 4]> {
    if spec.id() != ModelId::GgSymmetrized {
        return Err(Error::InvalidArgument(format!("{} is not gg_symmetrized", spec.name())));
    }
    let p = |n: &str| spec.param(n).unwrap();
    Ok([p("alpha"), p("beta"), p("gamma"), p("delta")])
}

pub const TRAFFIC_LABELS: [&str; 6] = [
    "G(x,x+1;x,x+1) = 1",
    "G(x,x+2;x,x+2) = Γξ∧Γζ",
    "ξ≤ζ: G(x,x+1;x,x+2) = [α−β]^+ ζ(x+1)",
    "ξ≤ζ: G(x,x+2;x+1,x+2) = [β−α]^+ (1−ξ(x+1))",
    "ξ>ζ: G(x+1,x+2;x,x+2) = [β−α]^+ (1−ζ(x+1))",
    "ξ>ζ: G(x,x+2;x,x+1) = [α−β]^+ ξ(x+1)",
];

/// Increasing rates of traffic2 against the closed forms, over every
/// ordered pair on `len` sites.
pub fn compare_traffic(spec: &RateSpec, len: usize) -> Result<ClosedFormReport> {
    let (a, b) = traffic_params(spec)?;
    spec.check_ring(len)?;
    let rates = spec.table::<Exact>();
    let formula = move |l: &Local, key: Key, order: PairOrder| -> Option<(usize, Exact)> {
        let below = order == PairOrder::Below;
        match key {
            (1, 0, 1) => Some((0, Exact::one())),
            (2, 0, 2) => Some((1, gamma_min(&rates, l, 2))),
            (1, 0, 2) if below => Some((2, pos_diff(&a, &b) * l.zeta(1))),
            (2, 1, 2) if below => Some((3, pos_diff(&b, &a) * one_minus(l.xi(1)))),
            // x1 = x+1, x2 = x, y = x+2
            (1, -1, 1) if !below => Some((4, pos_diff(&b, &a) * one_minus(l.zeta(0)))),
            (2, 0, 1) if !below => Some((5, pos_diff(&a, &b) * l.xi(1))),
            _ => None,
        }
    };
    Ok(compare(
        spec,
        "increasing",
        &TRAFFIC_LABELS,
        CoupledState::all(len).filter(CoupledState::is_ordered),
        increasing_rates,
        &formula,
    ))
}

pub const GG_LABELS: [&str; 10] = [
    "G(x,x+1;x,x+1) = Γξ∧Γζ",
    "G(x,x-1;x,x-1) = Γξ∧Γζ",
    "ξ≤ζ: G(x,x+1;x,x-1)",
    "ξ≤ζ: G(x,x-1;x,x+1)",
    "ξ≤ζ: G(x,x+1;x+2,x+1)",
    "ξ≤ζ: G(x,x-1;x-2,x-1)",
    "ξ>ζ: G(x,x+1;x,x-1)",
    "ξ>ζ: G(x,x-1;x,x+1)",
    "ξ>ζ: G(x,x+1;x+2,x+1)",
    "ξ>ζ: G(x,x-1;x-2,x-1)",
];

/// Increasing rates of gg_symmetrized against the closed-form list (which
/// assumes `γ ≤ δ`), over every ordered pair on `len` sites.
pub fn compare_gg_increasing(spec: &RateSpec, len: usize) -> Result<ClosedFormReport> {
    let [al, be, ga, de] = gg_params(spec)?;
    let rates = spec.table::<Exact>();
    let formula = move |l: &Local, key: Key, order: PairOrder| -> Option<(usize, Exact)> {
        let below = order == PairOrder::Below;
        let (xi, ze) = (|k| l.xi(k), |k| l.zeta(k));
        match key {
            (1, 0, 1) => Some((0, gamma_min(&rates, l, 1))),
            (-1, 0, -1) => Some((1, gamma_min(&rates, l, -1))),
            (1, 0, -1) if below => {
                Some((2, ze(1) * (one_minus(ze(-2)) * (al - de) + xi(-2) * (ga - be))))
            }
            (-1, 0, 1) if below => Some((3, ze(-1) * (one_minus(ze(2)) * (al - de) + xi(2) * (ga - be)))),
            (1, 2, 1) if below => Some((
                4,
                one_minus(xi(2))
                    * (one_minus(ze(-1)) * (de - be)
                        + one_minus(xi(-1)) * ze(-1) * (de - ga)
                        + xi(-1) * (al - ga)),
            )),
            (-1, -2, -1) if below => Some((
                5,
                one_minus(xi(-2))
                    * (one_minus(ze(1)) * (de - be) + one_minus(xi(1)) * ze(1) * (de - ga) + xi(1) * (al - ga)),
            )),
            (1, 0, -1) => Some((6, xi(-1) * (one_minus(xi(2)) * (al - de) + ze(2) * (ga - be)))),
            (-1, 0, 1) => Some((7, xi(1) * (one_minus(xi(-2)) * (al - de) + ze(-2) * (ga - be)))),
            (1, 2, 1) => Some((
                8,
                one_minus(ze(0))
                    * (one_minus(xi(3)) * (de - be) + ze(3) * (al - ga) + xi(3) * one_minus(ze(3)) * (de - ga)),
            )),
            (-1, -2, -1) => Some((
                9,
                one_minus(ze(0))
                    * (one_minus(xi(-3)) * (de - be) + ze(-3) * (al - ga) + xi(-3) * one_minus(ze(-3)) * (de - ga)),
            )),
            _ => None,
        }
    };
    spec.check_ring(len)?;
    Ok(compare(
        spec,
        "increasing",
        &GG_LABELS,
        CoupledState::all(len).filter(CoupledState::is_ordered),
        increasing_rates,
        &formula,
    ))
}

pub const GG_COMPOSED_LABELS: [&str; 8] = [
    "G^D(x,x+1;x,x+1) = Γξ∧Γζ",
    "G^D(x,x-1;x,x-1) = Γξ∧Γζ",
    "G^D(x,x+1;x,x-1)",
    "G^D(x,x-1;x,x+1)",
    "G^D(x,x+1;x+2,x+1)",
    "G^D(x,x-1;x-2,x-1)",
    "G^D(x,x+1;x+2,x+3)",
    "G^D(x,x-1;x-2,x-3)",
];

/// Attractive rates of gg_symmetrized against the closed-form `G^D` list,
/// over every pair (ordered or not) on `len` sites.
pub fn compare_gg_attractive(spec: &RateSpec, len: usize) -> Result<ClosedFormReport> {
    let [al, be, ga, de] = gg_params(spec)?;
    spec.check_ring(len)?;
    if ga.is_zero() {
        return Err(Error::InvalidArgument("the G^D list divides by gamma".into()));
    }
    let rates = spec.table::<Exact>();
    let ratio = be / ga - Exact::one();
    let formula = move |l: &Local, key: Key, _: PairOrder| -> Option<(usize, Exact)> {
        let (xi, ze, j) = (|k| l.xi(k), |k| l.zeta(k), |k| l.join(k));
        let right_bracket = |k: i64| one_minus(j(k)) * (de - be) + ze(k) * (al - ga) + one_minus(ze(k)) * xi(k) * (de - ga);
        let left_bracket = |k: i64| one_minus(j(k)) * (de - be) + xi(k) * (al - ga) + one_minus(xi(k)) * ze(k) * (de - ga);
        match key {
            (1, 0, 1) => Some((0, gamma_min(&rates, l, 1))),
            (-1, 0, -1) => Some((1, gamma_min(&rates, l, -1))),
            (1, 0, -1) => Some((
                2,
                one_minus(ze(1)) * xi(-1) * (one_minus(j(2)) * (al - de) + ze(2) * (ga - be))
                    + one_minus(xi(-1)) * ze(1) * (one_minus(j(-1)) * (al - de) + xi(-2) * (ga - be)),
            )),
            (-1, 0, 1) => Some((
                3,
                one_minus(ze(-1)) * xi(1) * (one_minus(j(-2)) * (al - de) + ze(-2) * (ga - be))
                    + one_minus(xi(1)) * ze(-1) * (one_minus(j(2)) * (al - de) + j(2) * (ga - be)),
            )),
            (1, 2, 1) => Some((
                4,
                one_minus(ze(0)) * right_bracket(3) * (xi(2) * ze(-1) * one_minus(xi(-1)) * ratio + Exact::one())
                    + one_minus(xi(2)) * left_bracket(-1) * (xi(3) * ze(0) * one_minus(ze(3)) * ratio + Exact::one()),
            )),
            (-1, -2, -1) => Some((
                5,
                one_minus(ze(0)) * right_bracket(-3) * (xi(-2) * ze(1) * one_minus(xi(1)) * ratio + Exact::one())
                    + one_minus(xi(-2)) * left_bracket(1) * (xi(-3) * ze(0) * one_minus(ze(-3)) * ratio + Exact::one()),
            )),
            (1, 2, 3) => Some((
                6,
                one_minus(ze(1)) * one_minus(xi(2)) * xi(3) * ze(0) * (ga - be) / ga * left_bracket(-1),
            )),
            (-1, -2, -3) => Some((
                7,
                one_minus(ze(-1)) * one_minus(xi(-2)) * xi(-3) * ze(0) * (ga - be) / ga * left_bracket(1),
            )),
            _ => None,
        }
    };
    Ok(compare(spec, "attractive", &GG_COMPOSED_LABELS, CoupledState::all(len), attractive_rates, &formula))
}
