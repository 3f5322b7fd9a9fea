//! Dispatch of a validated configuration to the core library.

use anyhow::{bail, Context};
use exclusion_core::coupling::{attractive_rates, increasing_rates, strict_rates, CouplingTable};
use exclusion_core::exact::{
    audit_discrepancy_monotone, audit_order_preservation, blocking_scan, build_coupled_generator, build_generator,
    build_sector_generator, check_sector_uniform_stationary, discrepancy_extinction, marginal_projection_error,
    stationary, AuditReport, Marginal, MAX_SINGLE_RING,
};
use exclusion_core::golden::{find_criterion, run_criterion, CRITERIA};
use exclusion_core::monotone::{is_monotone, strictness_report};
use exclusion_core::rates::zoo;
use exclusion_core::sim::{
    average_tables, order_time, random_configuration, simulate_coupled_replicas, simulate_single_replicas,
    stream_rng, trajectory_table, SimParams, Trajectory,
};
use exclusion_core::{Configuration, CouplingKind, Exact, Rate, RateSpec};
use serde_json::{json, Value};

use crate::config::{Command, ExactCheck, RunConfig};
use crate::output::{Report, Status};

pub fn run(config: &RunConfig) -> anyhow::Result<Report> {
    match config.command {
        Command::CheckMonotone => check_monotone(config),
        Command::CouplingTable => coupling_table(config),
        Command::Exact => exact(config),
        Command::Simulate => simulate(config),
        Command::GoldenSuite => golden_suite(config),
        Command::Zoo => zoo_listing(),
    }
}

fn status(ok: bool) -> Status {
    if ok {
        Status::Ok
    } else {
        Status::Negative
    }
}

fn strings<const N: usize>(cells: [&str; N]) -> Vec<String> {
    cells.iter().map(|s| s.to_string()).collect()
}

fn check_monotone(config: &RunConfig) -> anyhow::Result<Report> {
    let spec = config.spec()?;
    if config.execution.exact {
        monotone_report::<Exact>(&spec)
    } else {
        monotone_report::<f64>(&spec)
    }
}

fn monotone_report<T: Rate>(spec: &RateSpec) -> anyhow::Result<Report> {
    let verdict = is_monotone::<T>(spec);
    let strictness = if verdict.monotone { Some(strictness_report::<T>(spec)?) } else { None };
    let summary = if verdict.monotone {
        format!(
            "{spec}: monotone ({} instances, window radius {}{})",
            verdict.instances,
            verdict.window_radius,
            if strictness.as_ref().is_some_and(|s| s.strict) { ", strict" } else { ", not strict" }
        )
    } else {
        let w = &verdict.witnesses[0];
        format!(
            "{spec}: not monotone; {} check fails at ξ={} ζ={} ({} > {})",
            w.kind.check_id(),
            w.xi,
            w.zeta,
            w.lhs,
            w.rhs
        )
    };
    let rows = verdict
        .witnesses
        .iter()
        .map(|w| vec![w.kind.check_id().to_string(), w.center.to_string(), w.xi.clone(), w.zeta.clone(), w.lhs.clone(), w.rhs.clone(), w.excess.to_string()])
        .collect();
    Ok(Report {
        status: status(verdict.monotone),
        summary,
        header: strings(["check", "center", "xi", "zeta", "lhs", "rhs", "excess"]),
        rows,
        json: json!({
            "check": "monotone",
            "model": spec.to_string(),
            "spec": spec.summary(),
            "verdict": verdict,
            "strictness": strictness,
        }),
    })
}

fn pair(config: &RunConfig) -> anyhow::Result<(Configuration, Configuration)> {
    match (config.lattice.xi, config.lattice.zeta) {
        (Some(xi), Some(zeta)) => Ok((xi, zeta)),
        _ => bail!("this command needs both configurations (--xi and --zeta, or lattice.xi and lattice.zeta)"),
    }
}

fn coupling_table(config: &RunConfig) -> anyhow::Result<Report> {
    let spec = config.spec()?;
    let (xi, zeta) = pair(config)?;
    spec.check_ring(xi.len())?;
    if config.execution.exact {
        table_report::<Exact>(&spec, xi, zeta, config.execution.kind)
    } else {
        table_report::<f64>(&spec, xi, zeta, config.execution.kind)
    }
}

fn table_report<T: Rate>(spec: &RateSpec, xi: Configuration, zeta: Configuration, kind: CouplingKind) -> anyhow::Result<Report> {
    let rates = spec.table::<T>();
    let table: CouplingTable<T> = match kind {
        CouplingKind::Increasing => increasing_rates(&rates, &xi, &zeta),
        CouplingKind::Attractive => attractive_rates(&rates, &xi, &zeta),
        CouplingKind::Strict => strict_rates(&rates, &xi, &zeta),
    };
    // entries are raw rates; `active` marks the ones exclusion lets act on this pair
    let allowed = |c: &Configuration, x: usize, y: usize| c.at(x) && !c.at(y);
    let mut rows = Vec::new();
    for e in &table.coupled {
        let active = allowed(&xi, e.x1, e.y1) || allowed(&zeta, e.x2, e.y2);
        rows.push(vec![
            "coupled".into(),
            e.x1.to_string(),
            e.y1.to_string(),
            e.x2.to_string(),
            e.y2.to_string(),
            e.rate.to_text(),
            active.to_string(),
        ]);
    }
    for (name, residuals, c) in [("residual_first", &table.residual_first, &xi), ("residual_second", &table.residual_second, &zeta)] {
        for r in residuals.iter().filter(|r| !r.rate.approx_eq(&T::from_u64(0))) {
            let active = allowed(c, r.x, r.y);
            rows.push(vec![name.into(), r.x.to_string(), r.y.to_string(), String::new(), String::new(), r.rate.to_text(), active.to_string()]);
        }
    }
    let negative = table.min_residual().is_some_and(|r| T::from_u64(0) - r > T::tolerance());
    let entries: Vec<Value> = rows
        .iter()
        .map(|r| {
            let site = |v: &String| v.parse::<usize>().ok();
            json!({"section": r[0], "x1": site(&r[1]), "y1": site(&r[2]), "x2": site(&r[3]), "y2": site(&r[4]), "rate": r[5], "active": r[6] == "true"})
        })
        .collect();
    Ok(Report {
        status: status(!negative),
        summary: format!(
            "{spec} {kind} table for ξ={xi} ζ={zeta}: {} coupled entries{}",
            table.coupled.len(),
            if negative { ", negative residual (coupled rates exceed a marginal)" } else { "" }
        ),
        header: strings(["section", "x1", "y1", "x2", "y2", "rate", "active"]),
        rows,
        json: json!({
            "check": "coupling-table",
            "model": spec.to_string(),
            "kind": kind,
            "xi": xi,
            "zeta": zeta,
            "diagonal": table.is_diagonal(),
            "entries": entries,
        }),
    })
}

fn exact(config: &RunConfig) -> anyhow::Result<Report> {
    let spec = config.spec()?;
    let len = config.lattice.len;
    let kind = config.execution.kind;
    let check = config.execution.check;
    let id = format!("exact/{}", serde_json::to_value(check)?.as_str().unwrap_or("check"));
    let exact = config.execution.exact;
    let report = match check {
        ExactCheck::Stationary => {
            if len > MAX_SINGLE_RING {
                bail!("stationary distributions are computed for L ≤ {MAX_SINGLE_RING}");
            }
            let mut rows = Vec::new();
            let mut sectors = Vec::new();
            let mut reducible = 0;
            for n in 0..=len {
                let g = build_sector_generator::<f64>(&spec, len, n)?;
                let r = stationary(&g, n)?;
                if r.classes.len() > 1 {
                    reducible += 1;
                }
                for (k, class) in r.classes.iter().enumerate() {
                    for (s, w) in class.states.iter().zip(&class.weights) {
                        rows.push(vec![n.to_string(), k.to_string(), s.to_string(), w.to_string()]);
                    }
                }
                sectors.push(r);
            }
            Report {
                status: Status::Ok,
                summary: format!(
                    "{spec} on L={len}: stationary distributions of {} sectors ({reducible} with several closed classes)",
                    len + 1
                ),
                header: strings(["sector", "class", "state", "weight"]),
                rows,
                json: json!({"check": id, "model": spec.to_string(), "ring": len, "sectors": sectors}),
            }
        }
        ExactCheck::Uniform => {
            let sectors = if exact {
                check_sector_uniform_stationary::<Exact>(&spec, len)?
            } else {
                check_sector_uniform_stationary::<f64>(&spec, len)?
            };
            let failing = sectors.iter().filter(|s| !s.uniform).count();
            let worst = sectors.iter().map(|s| s.max_column_sum).fold(0.0, f64::max);
            Report {
                status: status(failing == 0),
                summary: format!("{spec} on L={len}: uniform measure stationary in {} of {} sectors (largest column sum {worst:e})", sectors.len() - failing, sectors.len()),
                header: strings(["sector", "states", "uniform", "max_column_sum"]),
                rows: sectors.iter().map(|s| vec![s.sector.to_string(), s.states.to_string(), s.uniform.to_string(), s.max_column_sum.to_string()]).collect(),
                json: json!({"check": id, "model": spec.to_string(), "ring": len, "sectors": sectors}),
            }
        }
        ExactCheck::Order | ExactCheck::Discrepancy => {
            let audit = match (check, exact) {
                (ExactCheck::Order, true) => audit_order_preservation::<Exact>(&spec, len)?,
                (ExactCheck::Order, false) => audit_order_preservation::<f64>(&spec, len)?,
                (_, true) => audit_discrepancy_monotone::<Exact>(&spec, len)?,
                (_, false) => audit_discrepancy_monotone::<f64>(&spec, len)?,
            };
            audit_report(&id, &audit)
        }
        ExactCheck::Marginals => {
            let mut rows = Vec::new();
            let mut worst: f64 = 0.0;
            for k in CouplingKind::ALL {
                for which in [Marginal::First, Marginal::Second] {
                    let err = if exact {
                        let single = build_generator::<Exact>(&spec, len)?;
                        marginal_projection_error(&build_coupled_generator::<Exact>(&spec, len, k)?, &single, which)?
                    } else {
                        let single = build_generator::<f64>(&spec, len)?;
                        marginal_projection_error(&build_coupled_generator::<f64>(&spec, len, k)?, &single, which)?
                    };
                    worst = worst.max(err);
                    rows.push(vec![k.to_string(), format!("{which:?}").to_lowercase(), err.to_string()]);
                }
            }
            let ok = if exact { worst == 0.0 } else { worst <= 1e-9 };
            let json_rows: Vec<Value> = rows.iter().map(|r| json!({"kind": r[0], "marginal": r[1], "error": r[2]})).collect();
            Report {
                status: status(ok),
                summary: format!("{spec} on L={len}: largest marginal projection error {worst:e} over all kinds"),
                header: strings(["kind", "marginal", "error"]),
                rows,
                json: json!({"check": id, "model": spec.to_string(), "ring": len, "errors": json_rows}),
            }
        }
        ExactCheck::Extinction => {
            let r = discrepancy_extinction(&spec, len, kind)?;
            let worst = r.probabilities.iter().map(|p| (p.probability - 1.0).abs()).fold(0.0, f64::max);
            Report {
                status: status(worst <= 1e-8),
                summary: format!(
                    "{spec} {kind} on L={len}: {} unordered pairs, smallest absorption probability {}",
                    r.unordered_pairs, r.min_probability
                ),
                header: strings(["xi", "zeta", "probability"]),
                rows: r.probabilities.iter().map(|p| vec![p.pair.first.to_string(), p.pair.second.to_string(), p.probability.to_string()]).collect(),
                json: json!({"check": id, "report": r}),
            }
        }
        ExactCheck::Blocking => {
            let r = blocking_scan(&spec);
            let connects = r.connects(len);
            Report {
                status: status(!r.blocking && connects),
                summary: r.diagnostic(),
                header: strings(["offset", "open_patterns", "closed_patterns"]),
                rows: r.channels.iter().map(|c| vec![c.offset.to_string(), c.open_patterns.to_string(), c.closed_patterns.to_string()]).collect(),
                json: json!({"check": id, "ring": len, "connects": connects, "report": r}),
            }
        }
    };
    Ok(report)
}

fn audit_report(id: &str, audit: &AuditReport) -> Report {
    let rows = audit
        .witnesses
        .iter()
        .map(|w| {
            let jump = |j: Option<(usize, usize)>| j.map_or(String::new(), |(x, y)| format!("{x}->{y}"));
            vec![
                w.source.first.to_string(),
                w.source.second.to_string(),
                w.target.first.to_string(),
                w.target.second.to_string(),
                jump(w.first_jump),
                jump(w.second_jump),
                w.rate.clone(),
                w.discrepancy_delta.to_string(),
            ]
        })
        .collect();
    Report {
        status: status(audit.is_clean()),
        summary: format!(
            "{} {} on L={}: {} violating moves out of {} over {} pairs",
            audit.model, audit.kind, audit.ring, audit.violations, audit.transitions, audit.pairs
        ),
        header: strings(["xi", "zeta", "target_xi", "target_zeta", "first_jump", "second_jump", "rate", "discrepancy_delta"]),
        rows,
        json: json!({"check": id, "report": audit}),
    }
}

/// Starting configurations: explicit ones, or `round(ρL)` particles placed
/// with the stream reserved for initial conditions.
fn starts(config: &RunConfig) -> anyhow::Result<(Configuration, Configuration)> {
    let lat = &config.lattice;
    let n = (lat.density * lat.len as f64).round() as usize;
    let mut rng = stream_rng(config.execution.seed, u64::MAX);
    let xi = match lat.xi {
        Some(c) => c,
        None => random_configuration(lat.len, n, &mut rng)?,
    };
    let zeta = match lat.zeta {
        Some(c) => c,
        None => random_configuration(lat.len, n, &mut rng)?,
    };
    Ok((xi, zeta))
}

fn simulate(config: &RunConfig) -> anyhow::Result<Report> {
    let spec = config.spec()?;
    let ex = &config.execution;
    let (xi, zeta) = starts(config)?;
    let params = SimParams::new(ex.t_end, ex.sample_dt, ex.seed).with_snapshots(ex.profile);
    let runs: Vec<Trajectory> = if ex.coupled {
        simulate_coupled_replicas(&spec, |_| (xi, zeta), ex.kind, &params, ex.replicas)?
    } else {
        simulate_single_replicas(&spec, xi, &params, ex.replicas)?
    };
    let tables = runs.iter().map(|t| trajectory_table(t, ex.profile)).collect::<exclusion_core::Result<Vec<_>>>()?;
    let table = average_tables(&tables)?;
    let events: u64 = runs.iter().map(|t| t.total_events).sum();
    let absorbed = runs.iter().filter(|t| t.absorbed()).count();
    let run_info: Vec<Value> = runs
        .iter()
        .map(|t| {
            json!({
                "stream": t.stream,
                "total_events": t.total_events,
                "absorbed_at": t.absorbed_at,
                "final_first": t.final_first,
                "final_second": t.final_second,
                "order_time": order_time(t).ok().map(|v| if v.is_finite() { json!(v) } else { json!("inf") }),
            })
        })
        .collect();
    let mut summary = format!(
        "{spec} on L={}: {} {} run(s) to t={} ({events} events",
        xi.len(),
        ex.replicas,
        if ex.coupled { format!("{} coupled", ex.kind) } else { "single".into() },
        ex.t_end
    );
    if absorbed > 0 {
        summary.push_str(&format!(", {absorbed} absorbed"));
    }
    if let Some(d) = table.column("discrepancies") {
        summary.push_str(&format!(", mean discrepancies {} -> {}", d[0], d[d.len() - 1]));
    }
    summary.push(')');
    let fmt = |v: f64| if v.is_finite() { v.to_string() } else { "inf".into() };
    Ok(Report {
        status: Status::Ok,
        summary,
        header: table.columns.clone(),
        rows: table.rows.iter().map(|r| r.iter().map(|v| fmt(*v)).collect()).collect(),
        json: json!({
            "check": "simulate",
            "model": spec.to_string(),
            "ring": xi.len(),
            "seed": ex.seed,
            "replicas": ex.replicas,
            "coupled": ex.coupled,
            "kind": if ex.coupled { Some(ex.kind) } else { None },
            "xi": xi,
            "zeta": if ex.coupled { Some(zeta) } else { None },
            "runs": run_info,
            "columns": table.columns,
            "rows": table.rows,
        }),
    })
}

fn golden_suite(config: &RunConfig) -> anyhow::Result<Report> {
    let selected = if config.execution.only.is_empty() {
        CRITERIA.to_vec()
    } else {
        config
            .execution
            .only
            .iter()
            .map(|k| find_criterion(k).with_context(|| format!("no acceptance criterion `{k}`")))
            .collect::<anyhow::Result<Vec<_>>>()?
    };
    let mut results = Vec::new();
    for c in selected {
        let r = run_criterion(c);
        // progress goes to stderr so stdout stays a clean report
        eprintln!("{}", r.line());
        results.push(r);
    }
    let passed = results.iter().filter(|r| r.passed).count();
    Ok(Report {
        status: status(passed == results.len()),
        summary: format!("{passed}/{} criteria pass", results.len()),
        header: strings(["number", "id", "verdict", "seconds", "detail"]),
        rows: results
            .iter()
            .map(|r| vec![r.number.to_string(), r.id.into(), if r.passed { "PASS" } else { "FAIL" }.into(), format!("{:.3}", r.seconds), r.detail.clone()])
            .collect(),
        json: json!({"check": "golden-suite", "passed": passed, "total": results.len(), "criteria": results}),
    })
}

fn zoo_listing() -> anyhow::Result<Report> {
    let mut rows = Vec::new();
    let mut entries = Vec::new();
    for spec in zoo() {
        let verdict = is_monotone::<Exact>(&spec);
        let s = spec.summary();
        let offsets = s.offsets.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" ");
        let params = s.params.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ");
        rows.push(vec![spec.name().to_string(), params, offsets, s.dep_radius.to_string(), s.min_ring.to_string(), verdict.monotone.to_string()]);
        entries.push(json!({"spec": s, "monotone": verdict.monotone}));
    }
    Ok(Report {
        status: Status::Ok,
        summary: format!("{} built-in models (custom_table takes an explicit rate table)", rows.len()),
        header: strings(["model", "defaults", "offsets", "dep_radius", "min_ring", "monotone"]),
        rows,
        json: json!({"check": "zoo", "models": entries}),
    })
}
