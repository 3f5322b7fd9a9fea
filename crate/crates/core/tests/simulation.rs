use std::collections::BTreeMap;

use exclusion_core::coupling::CouplingKind;
use exclusion_core::sim::{
    observable_report, order_time, simulate_coupled, simulate_coupled_replicas, simulate_single_replicas, stream_rng,
    random_configuration, CoupledEngine, Observable, SimParams, SingleEngine,
};
use exclusion_core::{make_model_positional, Configuration, CoupledState, Exact, ModelId, RateSpec};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn q(n: i128, d: i128) -> Exact {
    Exact::new(n, d)
}

fn gg() -> RateSpec {
    make_model_positional(ModelId::GgSymmetrized, &[q(2, 1), q(1, 1), q(1, 1), q(2, 1)]).unwrap()
}

fn traffic(a: Exact, b: Exact) -> RateSpec {
    make_model_positional(ModelId::Traffic2, &[a, b]).unwrap()
}

fn c(s: &str) -> Configuration {
    s.parse().unwrap()
}

/// Exact law of the first jump from `eta`: `Γ(x,y) / Σ Γ` over allowed moves.
fn first_jump_law(spec: &RateSpec, eta: &Configuration) -> BTreeMap<(usize, usize), f64> {
    let len = eta.len();
    let mut law = BTreeMap::new();
    for x in (0..len).filter(|&x| eta.at(x)) {
        for &d in spec.offsets() {
            let y = eta.wrap(x as i64 + d);
            let r: f64 = spec.rate(eta, x, y).unwrap();
            if !eta.at(y) && r > 0.0 {
                *law.entry((x, y)).or_insert(0.0) += r;
            }
        }
    }
    let total: f64 = law.values().sum();
    law.values_mut().for_each(|v| *v /= total);
    law
}

/// First jump of one marginal of the coupled chain.
fn coupled_first_jump(spec: &RateSpec, pair: CoupledState, kind: CouplingKind, second: bool, stream: u64) -> (usize, usize) {
    let mut engine = CoupledEngine::new(spec, pair, kind).unwrap();
    let mut rng = stream_rng(77, stream);
    loop {
        let (_, m) = engine.next_event(&mut rng).unwrap().expect("chain is not absorbed");
        let jump = if second { m.second_jump } else { m.first_jump };
        if let Some(j) = jump {
            return j;
        }
        engine.apply(&m);
    }
}

fn chi_square(counts: &BTreeMap<(usize, usize), u64>, law: &BTreeMap<(usize, usize), f64>, n: u64) -> (f64, f64) {
    let stat: f64 = law
        .iter()
        .map(|(k, p)| {
            let e = p * n as f64;
            let o = *counts.get(k).unwrap_or(&0) as f64;
            (o - e).powi(2) / e
        })
        .sum();
    let critical = ChiSquared::new((law.len() - 1) as f64).unwrap().inverse_cdf(0.99);
    (stat, critical)
}

#[test]
fn coupled_marginals_jump_with_the_single_chain_law() {
    let spec = gg();
    let pair = CoupledState::new(c("1101001100"), c("0111010110")).unwrap();
    let n = 3000;
    for kind in CouplingKind::ALL {
        for second in [false, true] {
            let eta = if second { pair.second } else { pair.first };
            let law = first_jump_law(&spec, &eta);
            assert!(law.values().all(|p| p * n as f64 >= 5.0));
            let mut counts = BTreeMap::new();
            for s in 0..n {
                *counts.entry(coupled_first_jump(&spec, pair, kind, second, s)).or_insert(0u64) += 1;
            }
            assert!(counts.keys().all(|k| law.contains_key(k)), "{kind}: impossible jump drawn");
            let (stat, critical) = chi_square(&counts, &law, n);
            assert!(stat < critical, "{kind} marginal {}: χ² = {stat:.2} ≥ {critical:.2}", second as u8 + 1);
        }
    }
}

#[test]
fn single_engine_first_jump_follows_the_generator() {
    let spec = traffic(q(7, 10), q(1, 5));
    let eta = c("110100111000");
    let law = first_jump_law(&spec, &eta);
    let n = 4000;
    let mut counts = BTreeMap::new();
    let mut waits = 0.0;
    for s in 0..n {
        let mut engine = SingleEngine::new(&spec, eta).unwrap();
        let (wait, x, y) = engine.next_event(&mut stream_rng(5, s)).unwrap();
        waits += wait;
        *counts.entry((x, y)).or_insert(0u64) += 1;
    }
    let (stat, critical) = chi_square(&counts, &law, n);
    assert!(stat < critical, "χ² = {stat:.2} ≥ {critical:.2}");
    // exponential holding time with rate Σ Γ: mean 1/Σ, standard error (1/Σ)/√n
    let total = SingleEngine::new(&spec, eta).unwrap().total_rate();
    let mean = waits / n as f64;
    assert!((mean - 1.0 / total).abs() < 3.0 / total / (n as f64).sqrt());
}

#[test]
fn coupled_and_single_event_counts_are_homogeneous() {
    // jumps of the first marginal by offset over [0, 20], coupled against single
    let spec = traffic(q(1, 2), q(1, 2));
    let (xi, zeta) = (c("1101100100110010"), c("0110011011001101"));
    let params = SimParams::new(20.0, 20.0, 31);
    let runs = 400;
    let mut coupled = [0u64; 2];
    let mut single = [0u64; 2];
    for i in 0..runs {
        let mut engine = CoupledEngine::new(&spec, CoupledState::new(xi, zeta).unwrap(), CouplingKind::Attractive).unwrap();
        let mut rng = stream_rng(params.seed, i);
        let mut t = 0.0;
        while let Some((wait, m)) = engine.next_event(&mut rng).unwrap() {
            t += wait;
            if t > params.t_end {
                break;
            }
            if let Some((x, y)) = m.first_jump {
                let d = (y + xi.len() - x) % xi.len();
                coupled[d - 1] += 1;
            }
            engine.apply(&m);
        }
        let mut engine = SingleEngine::new(&spec, xi).unwrap();
        let mut rng = stream_rng(params.seed + 1, i);
        let mut t = 0.0;
        while let Some((wait, x, y)) = engine.next_event(&mut rng) {
            t += wait;
            if t > params.t_end {
                break;
            }
            single[(y + xi.len() - x) % xi.len() - 1] += 1;
            engine.apply(x, y);
        }
    }
    // 2×2 contingency table: source × offset
    let total = (coupled.iter().sum::<u64>() + single.iter().sum::<u64>()) as f64;
    let rows = [coupled.iter().sum::<u64>() as f64, single.iter().sum::<u64>() as f64];
    let cols = [(coupled[0] + single[0]) as f64, (coupled[1] + single[1]) as f64];
    let obs = [[coupled[0] as f64, coupled[1] as f64], [single[0] as f64, single[1] as f64]];
    let mut stat = 0.0;
    for r in 0..2 {
        for k in 0..2 {
            let e = rows[r] * cols[k] / total;
            stat += (obs[r][k] - e).powi(2) / e;
        }
    }
    let critical = ChiSquared::new(1.0).unwrap().inverse_cdf(0.99);
    assert!(stat < critical, "χ² = {stat:.2}, counts {coupled:?} vs {single:?}");
    // total jump counts agree to within 5%
    let rel = (rows[0] - rows[1]).abs() / rows[1];
    assert!(rel < 0.05, "event totals {} vs {}", rows[0], rows[1]);
}

#[test]
fn sep_density_profile_is_flat() {
    let spec = make_model_positional(ModelId::Sep, &[q(1, 1), q(0, 1)]).unwrap();
    let eta0 = c("11111111110000000000");
    let runs = 200;
    let trajs = simulate_single_replicas(&spec, eta0, &SimParams::new(200.0, 200.0, 8).with_snapshots(true), runs).unwrap();
    let finals: Vec<Vec<f64>> = trajs
        .iter()
        .map(|t| observable_report(t, Observable::DensityProfile).unwrap().rows.last().unwrap()[1..].to_vec())
        .collect();
    for site in 0..20 {
        let xs: Vec<f64> = finals.iter().map(|r| r[site]).collect();
        let mean = xs.iter().sum::<f64>() / runs as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (runs as f64 - 1.0)).sqrt();
        let se = sd / (runs as f64).sqrt();
        assert!((mean - 0.5).abs() <= 3.0 * se + 1e-12, "site {site}: {mean} ± {se}");
    }
}

#[test]
fn strict_runs_order_themselves() {
    let spec = traffic(q(1, 2), q(1, 2));
    let (len, runs, seed) = (32, 200, 11);
    let start = |i: u64| {
        let mut rng = stream_rng(seed, 1000 + i);
        (random_configuration(len, 16, &mut rng).unwrap(), random_configuration(len, 16, &mut rng).unwrap())
    };
    let trajs = simulate_coupled_replicas(&spec, start, CouplingKind::Strict, &SimParams::new(500.0, 10.0, seed), runs).unwrap();
    let samples = trajs[0].times.len();
    let mut previous = 0;
    for k in 0..samples {
        let ordered = trajs.iter().filter(|t| t.ordered.as_ref().unwrap()[k]).count();
        assert!(ordered >= previous, "ordered fraction decreased at t = {}", trajs[0].times[k]);
        previous = ordered;
    }
    // the L=6 chain is ordered with probability one; at L=32 every run should be by t = 500
    assert_eq!(previous, runs as usize);
    for t in &trajs {
        let d = t.discrepancies.as_ref().unwrap();
        assert!(d.windows(2).all(|w| w[1] <= w[0]));
        assert!(order_time(t).unwrap() <= 500.0);
    }
}

#[test]
fn increasing_runs_from_ordered_starts_stay_ordered() {
    let spec = gg();
    let xi = c("1000100000100010000000100000");
    let zeta = c("1101101100110011010100101100");
    for seed in 0..20 {
        let t = simulate_coupled(&spec, xi, zeta, CouplingKind::Increasing, &SimParams::new(50.0, 0.5, seed)).unwrap();
        assert!(t.ordered.unwrap().iter().all(|&o| o));
    }
}
