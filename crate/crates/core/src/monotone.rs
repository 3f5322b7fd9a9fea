//! Exhaustive monotonicity decision.
//!
//! A rate spec is monotone iff, for every pair `ξ ≤ ζ`:
//!
//! * at every arrival site `y` with `ζ(y) = 0`,
//!   `Σ_x ξ(x)[Γ_ξ(x,y) - Γ_ζ(x,y)]^+ ≤ Σ_x ζ(x)(1-ξ(x)) Γ_ζ(x,y)`;
//! * at every departure site `x` with `ξ(x) = 1`,
//!   `Σ_y (1-ζ(y))[Γ_ζ(x,y) - Γ_ξ(x,y)]^+ ≤ Σ_y ζ(y)(1-ξ(y)) Γ_ξ(x,y)`.
//!
//! Both sides only read sites within `W = 2(max|d| + R)` of the centre, so
//! enumerating all ordered pairs on `2W + 1` sites decides the question.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Configuration;
use crate::rates::{RateSpec, RateTable};
use crate::scalar::{pos_diff, Rate};

/// Which inequality an instance belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// Centred on an arrival site empty in `ζ`.
    Arrival,
    /// Centred on a departure site occupied in `ξ`.
    Departure,
}

impl CheckKind {
    /// Stable identifier used in reports.
    pub fn check_id(self) -> &'static str {
        match self {
            CheckKind::Arrival => "monotone/arrival",
            CheckKind::Departure => "monotone/departure",
        }
    }
}

/// One failing instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: CheckKind,
    /// Index of the centre site inside the window patterns.
    pub center: usize,
    pub xi: String,
    pub zeta: String,
    pub lhs: String,
    pub rhs: String,
    pub excess: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub monotone: bool,
    pub window_radius: usize,
    pub instances: u64,
    /// Sorted by kind, then number of discrepancies, then patterns.
    pub witnesses: Vec<Violation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlackRow {
    pub kind: CheckKind,
    pub lhs: String,
    pub rhs: String,
    pub slack: f64,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrictnessReport {
    /// Every instance with a positive right side holds strictly.
    pub strict: bool,
    /// Smallest `rhs - lhs` over instances with a positive right side.
    pub min_slack: Option<f64>,
    pub binding_instances: u64,
    pub equalities: u64,
    /// Distinct `(kind, lhs, rhs)` values with their multiplicities.
    pub table: Vec<SlackRow>,
}

/// Window radius used by default for a spec.
pub fn default_radius(spec: &RateSpec) -> usize {
    2 * spec.reach()
}

struct Instance<T> {
    kind: CheckKind,
    xi: u64,
    zeta: u64,
    lhs: T,
    rhs: T,
}

/// Walk every ordered pair on `2w + 1` sites and hand each instance to `f`.
fn for_each_instance<T: Rate, A: Send>(
    table: &RateTable<T>,
    w: usize,
    init: impl Fn() -> A + Sync + Send,
    f: impl Fn(&mut A, Instance<T>) + Sync + Send,
    merge: impl Fn(A, A) -> A + Sync + Send,
) -> A {
    let k = table.reach();
    let n = 2 * w + 1;
    let total = 3u64.pow(n as u32);
    let wmask = (1u64 << (2 * k + 1)) - 1;
    let c = w;
    (0..total)
        .into_par_iter()
        .fold(&init, |mut acc, code| {
            let (mut xi, mut zeta) = (0u64, 0u64);
            let mut t = code;
            for i in 0..n {
                match t % 3 {
                    1 => zeta |= 1 << i,
                    2 => {
                        xi |= 1 << i;
                        zeta |= 1 << i;
                    }
                    _ => {}
                }
                t /= 3;
            }
            let bit = |word: u64, i: usize| (word >> i) & 1 == 1;
            let around = |word: u64, site: usize| (word >> (site - k)) & wmask;
            if !bit(zeta, c) {
                let mut lhs = T::zero();
                let mut rhs = T::zero();
                for (i, &d) in table.offsets().iter().enumerate() {
                    let x = (c as i64 - d) as usize;
                    let gx = table.by_window(i, around(xi, x));
                    let gz = table.by_window(i, around(zeta, x));
                    if bit(xi, x) {
                        lhs = lhs + pos_diff(gx, gz);
                    } else if bit(zeta, x) {
                        rhs = rhs + gz.clone();
                    }
                }
                f(&mut acc, Instance { kind: CheckKind::Arrival, xi, zeta, lhs, rhs });
            }
            if bit(xi, c) {
                let mut lhs = T::zero();
                let mut rhs = T::zero();
                let (wx, wz) = (around(xi, c), around(zeta, c));
                for (i, &d) in table.offsets().iter().enumerate() {
                    let y = (c as i64 + d) as usize;
                    let gx = table.by_window(i, wx);
                    let gz = table.by_window(i, wz);
                    if !bit(zeta, y) {
                        lhs = lhs + pos_diff(gz, gx);
                    } else if !bit(xi, y) {
                        rhs = rhs + gx.clone();
                    }
                }
                f(&mut acc, Instance { kind: CheckKind::Departure, xi, zeta, lhs, rhs });
            }
            acc
        })
        .reduce(&init, merge)
}

fn pattern(word: u64, n: usize) -> String {
    (0..n).map(|i| if (word >> i) & 1 == 1 { '1' } else { '0' }).collect()
}

fn check_radius(spec: &RateSpec, w: usize) -> Result<()> {
    let min = default_radius(spec);
    if w < min {
        return Err(Error::InvalidArgument(format!(
            "window radius {w} is below the sufficient radius {min}"
        )));
    }
    if 2 * w + 1 > 31 {
        return Err(Error::InvalidArgument(format!(
            "window of {} sites is too large to enumerate",
            2 * w + 1
        )));
    }
    Ok(())
}

fn violations<T: Rate>(spec: &RateSpec, w: usize, only: Option<CheckKind>) -> Result<(Vec<Violation>, u64)> {
    check_radius(spec, w)?;
    let table = spec.table::<T>();
    let n = 2 * w + 1;
    let (mut found, count) = for_each_instance(
        &table,
        w,
        || (Vec::new(), 0u64),
        |acc, inst| {
            if only.is_some_and(|k| k != inst.kind) {
                return;
            }
            acc.1 += 1;
            if inst.lhs > inst.rhs.clone() + T::tolerance() {
                acc.0.push(Violation {
                    kind: inst.kind,
                    center: w,
                    xi: pattern(inst.xi, n),
                    zeta: pattern(inst.zeta, n),
                    excess: (inst.lhs.clone() - inst.rhs.clone()).as_f64(),
                    lhs: inst.lhs.to_text(),
                    rhs: inst.rhs.to_text(),
                });
            }
        },
        |mut a, b| {
            a.0.extend(b.0);
            (a.0, a.1 + b.1)
        },
    );
    found.sort_by(|a, b| {
        let disc = |v: &Violation| v.xi.chars().zip(v.zeta.chars()).filter(|(p, q)| p != q).count();
        (a.kind, disc(a), &a.xi, &a.zeta).cmp(&(b.kind, disc(b), &b.xi, &b.zeta))
    });
    Ok((found, count))
}

/// Both sides `(lhs, rhs)` of one inequality evaluated directly on a ring
/// pair `ξ ≤ ζ`, or `None` when the centre does not qualify.
pub fn ring_instance<T: Rate>(
    table: &RateTable<T>,
    xi: &Configuration,
    zeta: &Configuration,
    center: usize,
    kind: CheckKind,
) -> Option<(T, T)> {
    let len = xi.len();
    let (mut lhs, mut rhs) = (T::zero(), T::zero());
    match kind {
        CheckKind::Arrival if !zeta.at(center) => {
            for (i, &d) in table.offsets().iter().enumerate() {
                let x = xi.wrap(center as i64 - d);
                let (gx, gz) = (table.by_index(xi, x, i), table.by_index(zeta, x, i));
                if xi.at(x) {
                    lhs = lhs + pos_diff(gx, gz);
                } else if zeta.at(x) {
                    rhs = rhs + gz.clone();
                }
            }
        }
        CheckKind::Departure if xi.at(center) => {
            for i in 0..table.offsets().len() {
                let y = table.target(len, center, i);
                let (gx, gz) = (table.by_index(xi, center, i), table.by_index(zeta, center, i));
                if !zeta.at(y) {
                    lhs = lhs + pos_diff(gz, gx);
                } else if !xi.at(y) {
                    rhs = rhs + gx.clone();
                }
            }
        }
        _ => return None,
    }
    Some((lhs, rhs))
}

/// Violations of the arrival-site inequality.
pub fn check_arrival<T: Rate>(spec: &RateSpec) -> Vec<Violation> {
    violations::<T>(spec, default_radius(spec), Some(CheckKind::Arrival))
        .expect("default radius is valid")
        .0
}

/// Violations of the departure-site inequality.
pub fn check_departure<T: Rate>(spec: &RateSpec) -> Vec<Violation> {
    violations::<T>(spec, default_radius(spec), Some(CheckKind::Departure))
        .expect("default radius is valid")
        .0
}

pub fn is_monotone<T: Rate>(spec: &RateSpec) -> Verdict {
    is_monotone_with_radius::<T>(spec, default_radius(spec)).expect("default radius is valid")
}

/// Same as [`is_monotone`] on a window of radius `w ≥ 2(max|d| + R)`.
pub fn is_monotone_with_radius<T: Rate>(spec: &RateSpec, w: usize) -> Result<Verdict> {
    let (witnesses, instances) = violations::<T>(spec, w, None)?;
    Ok(Verdict { monotone: witnesses.is_empty(), window_radius: w, instances, witnesses })
}

/// Classify every instance with a positive right side as strict or tight.
/// Instances reading `0 ≤ 0` carry no constraint and are skipped.
pub fn strictness_report<T: Rate>(spec: &RateSpec) -> Result<StrictnessReport> {
    if !is_monotone::<T>(spec).monotone {
        return Err(Error::State(format!(
            "strictness is only defined for monotone specs; {} is not monotone",
            spec.name()
        )));
    }
    let w = default_radius(spec);
    let table = spec.table::<T>();
    type Rows<T> = Vec<(CheckKind, T, T, u64)>;
    let rows: Rows<T> = for_each_instance(
        &table,
        w,
        Vec::new,
        |acc: &mut Rows<T>, inst| {
            if !inst.rhs.is_active() {
                return;
            }
            match acc
                .iter_mut()
                .find(|r| r.0 == inst.kind && r.1.approx_eq(&inst.lhs) && r.2.approx_eq(&inst.rhs))
            {
                Some(r) => r.3 += 1,
                None => acc.push((inst.kind, inst.lhs, inst.rhs, 1)),
            }
        },
        |mut a, b| {
            for row in b {
                match a.iter_mut().find(|r| r.0 == row.0 && r.1.approx_eq(&row.1) && r.2.approx_eq(&row.2)) {
                    Some(r) => r.3 += row.3,
                    None => a.push(row),
                }
            }
            a
        },
    );
    let mut table: Vec<SlackRow> = rows
        .iter()
        .map(|(kind, lhs, rhs, count)| SlackRow {
            kind: *kind,
            lhs: lhs.to_text(),
            rhs: rhs.to_text(),
            slack: (rhs.clone() - lhs.clone()).as_f64(),
            count: *count,
        })
        .collect();
    table.sort_by(|a, b| {
        a.kind
            .cmp(&b.kind)
            .then(a.slack.total_cmp(&b.slack))
            .then_with(|| (&a.lhs, &a.rhs).cmp(&(&b.lhs, &b.rhs)))
    });
    let equalities: u64 = rows
        .iter()
        .filter(|(_, l, r, _)| !(r.clone() - l.clone()).is_active())
        .map(|r| r.3)
        .sum();
    let binding_instances = rows.iter().map(|r| r.3).sum();
    let min_slack = rows
        .iter()
        .map(|(_, l, r, _)| (r.clone() - l.clone()).as_f64())
        .min_by(f64::total_cmp);
    Ok(StrictnessReport { strict: equalities == 0, min_slack, binding_instances, equalities, table })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::{make_model, make_model_positional, zoo, ModelId};
    use crate::scalar::Exact;

    fn q(n: i128, d: i128) -> Exact {
        Exact::new(n, d)
    }

    fn traffic(a: Exact, b: Exact) -> RateSpec {
        make_model_positional(ModelId::Traffic2, &[a, b]).unwrap()
    }

    fn gg(v: [Exact; 4]) -> RateSpec {
        make_model_positional(ModelId::GgSymmetrized, &v).unwrap()
    }

    #[test]
    fn traffic_inside_the_region_has_no_violations() {
        let t = traffic(q(3, 10), q(7, 10));
        assert!(check_arrival::<Exact>(&t).is_empty());
        assert!(check_departure::<Exact>(&t).is_empty());
        let t = traffic(q(9, 10), q(1, 10));
        assert!(check_departure::<Exact>(&t).is_empty());
    }

    #[test]
    fn traffic_beta_excess_breaks_the_arrival_inequality() {
        let t = traffic(q(0, 1), q(2, 1));
        let v = check_arrival::<Exact>(&t);
        assert!(!v.is_empty());
        assert!(check_departure::<Exact>(&t).is_empty());
        let w = v[0].center;
        // ξ(y-2) = 1, ξ(y-1) = 0, ζ(y-1) = 1
        let xi: Vec<char> = v[0].xi.chars().collect();
        let zeta: Vec<char> = v[0].zeta.chars().collect();
        assert_eq!((xi[w - 2], xi[w - 1], zeta[w - 1]), ('1', '0', '1'));
        assert_eq!((v[0].lhs.as_str(), v[0].rhs.as_str()), ("2", "1"));
        for viol in &v {
            let xi: Vec<char> = viol.xi.chars().collect();
            let zeta: Vec<char> = viol.zeta.chars().collect();
            assert_eq!((xi[w - 2], xi[w - 1], zeta[w - 1]), ('1', '0', '1'));
        }
    }

    #[test]
    fn traffic_alpha_excess_breaks_the_departure_inequality() {
        let t = traffic(q(2, 1), q(0, 1));
        assert!(check_arrival::<Exact>(&t).is_empty());
        let v = check_departure::<Exact>(&t);
        assert!(!v.is_empty());
        let w = v[0].center;
        let xi: Vec<char> = v[0].xi.chars().collect();
        let zeta: Vec<char> = v[0].zeta.chars().collect();
        assert_eq!((xi[w + 1], zeta[w + 1], zeta[w + 2]), ('0', '1', '0'));
    }

    #[test]
    fn sep_is_monotone_for_any_kernel() {
        for kernel in [vec![("p1", q(1, 1))], vec![("p1", q(2, 1)), ("p-1", q(1, 3)), ("p2", q(1, 2))]] {
            let named: Vec<(String, Exact)> = kernel.iter().map(|(n, v)| (n.to_string(), *v)).collect();
            let sep = make_model(ModelId::Sep, &named).unwrap();
            assert!(is_monotone::<Exact>(&sep).monotone);
        }
    }

    #[test]
    fn gg_examples() {
        let one = q(1, 1);
        let zero = q(0, 1);
        assert!(check_departure::<Exact>(&gg([one; 4])).is_empty());
        assert!(is_monotone::<Exact>(&gg([one; 4])).monotone);
        let facilitated = is_monotone::<Exact>(&gg([one, zero, one, zero]));
        assert!(!facilitated.monotone);
        assert!(is_monotone::<Exact>(&gg([q(2, 1), one, one, q(2, 1)])).monotone);
    }

    #[test]
    fn decreasing_and_increasing_speed_models_are_monotone() {
        let dec = make_model(ModelId::SpeedChangeDecreasing, &[]).unwrap();
        assert!(is_monotone::<Exact>(&dec).monotone);
        let inc = make_model(ModelId::SpeedChangeIncreasing, &[]).unwrap();
        assert!(is_monotone::<Exact>(&inc).monotone);
    }

    #[test]
    fn verdict_is_stable_under_window_growth_and_rescaling() {
        let mut specs = zoo();
        specs.push(traffic(q(0, 1), q(2, 1)));
        specs.push(gg([q(1, 1), q(0, 1), q(1, 1), q(0, 1)]));
        for spec in specs {
            let base = is_monotone::<f64>(&spec);
            let wider = is_monotone_with_radius::<f64>(&spec, base.window_radius + 2).unwrap();
            assert_eq!(base.monotone, wider.monotone, "{}", spec.name());
            for c in [q(1, 3), q(7, 2)] {
                let scaled = spec.scaled(c).unwrap();
                assert_eq!(is_monotone::<Exact>(&scaled).monotone, base.monotone);
            }
        }
    }

    #[test]
    fn radius_below_the_sufficient_one_is_rejected() {
        let t = traffic(q(1, 2), q(1, 2));
        assert!(is_monotone_with_radius::<f64>(&t, 3).is_err());
    }

    #[test]
    fn witnesses_are_deterministic() {
        let t = traffic(q(0, 1), q(2, 1));
        let a = is_monotone::<f64>(&t);
        let b = is_monotone::<f64>(&t);
        assert_eq!(a, b);
    }

    #[test]
    fn strictness_examples() {
        let r = strictness_report::<Exact>(&traffic(q(1, 2), q(1, 2))).unwrap();
        assert!(r.strict);
        assert!(!r.table.is_empty());
        let sep = make_model(ModelId::Sep, &[]).unwrap();
        assert!(strictness_report::<Exact>(&sep).unwrap().strict);
        let two_step = make_model(ModelId::TwoStep, &[]).unwrap();
        let r = strictness_report::<Exact>(&two_step).unwrap();
        assert!(!r.strict);
        assert_eq!(r.min_slack, Some(0.0));
        assert!(strictness_report::<Exact>(&traffic(q(0, 1), q(2, 1))).is_err());
    }

    /// Closed forms of both sides for the range-2 traffic rates, written out
    /// by hand from the rate formula.
    fn traffic_rows_by_hand(alpha: Exact, beta: Exact) -> Vec<(CheckKind, Exact, Exact)> {
        let zero = Exact::from_integer(0);
        let one = Exact::from_integer(1);
        let b = |v: bool| if v { one } else { zero };
        let two = |occ: bool| if occ { alpha } else { beta };
        let pos = |v: Exact| if v > zero { v } else { zero };
        let mut rows = Vec::new();
        // sites m2 = y-2, m1 = y-1 for arrival; p1 = x+1, p2 = x+2 for departure
        let states = [(false, false), (false, true), (true, true)];
        for &(x2, z2) in &states {
            for &(x1, z1) in &states {
                let lhs = b(x2) * pos(two(x1) - two(z1));
                let rhs = b(z1 && !x1) + b(z2 && !x2) * two(z1);
                if rhs > zero {
                    rows.push((CheckKind::Arrival, lhs, rhs));
                }
                let (xp1, zp1, xp2, zp2) = (x2, z2, x1, z1);
                let lhs = b(!zp2) * pos(two(zp1) - two(xp1));
                let rhs = b(zp1 && !xp1) + b(zp2 && !xp2) * two(xp1);
                if rhs > zero {
                    rows.push((CheckKind::Departure, lhs, rhs));
                }
            }
        }
        rows.sort();
        rows.dedup();
        rows
    }

    #[test]
    fn two_step_slack_table_matches_hand_enumeration() {
        for (a, b) in [(q(1, 1), q(0, 1)), (q(1, 2), q(1, 2)), (q(3, 10), q(7, 10))] {
            let report = strictness_report::<Exact>(&traffic(a, b)).unwrap();
            let mut engine: Vec<(CheckKind, Exact, Exact)> = report
                .table
                .iter()
                .map(|r| (r.kind, crate::scalar::parse_exact(&r.lhs).unwrap(), crate::scalar::parse_exact(&r.rhs).unwrap()))
                .collect();
            engine.sort();
            assert_eq!(engine, traffic_rows_by_hand(a, b));
        }
    }
}
