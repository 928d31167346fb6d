//! Acceptance checks. Prints one PASS/FAIL line per criterion followed by
//! indented diagnostics, and exits nonzero if any criterion fails.
//!
//! Run with `cargo test -p buying-rights --test acceptance --release`.

use std::process::ExitCode;

use buying_rights::analysis::{
    audit_coalition, audit_unilateral, check_nonexpansive, coalition_grid,
    cross_validate_price_solver, trader_options, unilateral_grid, AuditReport, Deviation,
    DeviationKind, Magnitude, Trader,
};
use buying_rights::pricing::canonical_closed_form;
use buying_rights::rights::{verify_axioms, verify_axioms_with};
use buying_rights::scenarios::{
    generate_dirichlet_scenario, scenario_a, scenario_a_two_sellers, scenario_b, ClaimScale,
    SCENARIO_A_CLAIMS, SCENARIO_A_INCOMES,
};
use buying_rights::{
    allocate, run, DistributionMechanism, MarketConfig, SellerSpec, SupplySchedule, Trace, Variant,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CONSERVATION_TOL: f64 = 1e-9;

struct Outcome {
    passed: bool,
    notes: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome {
            passed: true,
            notes: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, note: String) {
        self.passed &= ok;
        self.notes
            .push(format!("{} {note}", if ok { "ok " } else { "BAD" }));
    }

    fn note(&mut self, note: String) {
        self.notes.push(format!("    {note}"));
    }
}

/// Traces whose conservation audits are checked by criterion 11.
type Traces = Vec<(String, Trace)>;

fn c1() -> Outcome {
    let mut out = Outcome::new();
    let cases = [
        (
            DistributionMechanism::Proportional,
            [8.0 / 15.0, 6.0 / 15.0, 1.0 / 15.0],
        ),
        (
            DistributionMechanism::ContestedGarment,
            [9.0 / 16.0, 6.0 / 16.0, 1.0 / 16.0],
        ),
    ];
    for (mech, want) in cases {
        let got = allocate(&mech, 1.0, &SCENARIO_A_CLAIMS).unwrap();
        let err = got
            .iter()
            .zip(want)
            .map(|(g, w)| (g - w).abs())
            .fold(0.0, f64::max);
        out.check(
            err <= 1e-12,
            format!("{}: {got:?}, max error {err:e}", mech.name()),
        );
    }
    out
}

fn c2(traces: &mut Traces) -> Outcome {
    let mut out = Outcome::new();
    let cfg = scenario_a(
        DistributionMechanism::Canonical { rank: 3 },
        Variant::Rights,
    );
    let trace = run(&cfg, cfg.horizon).unwrap();
    let prices = trace.prices();
    out.check(
        (prices[0] - 0.875).abs() <= 1e-12,
        format!("p^1 = {}", prices[0]),
    );
    let worst = prices[1..]
        .iter()
        .map(|p| (p - 1.0).abs())
        .fold(0.0, f64::max);
    out.check(
        worst <= 1e-12,
        format!("max |p^t - 1| for t >= 2: {worst:e}"),
    );
    // buyer 2 holds the third largest claim
    let closed: Vec<f64> = (1..=3)
        .map(|t| canonical_closed_form(2, &SCENARIO_A_INCOMES, t).unwrap())
        .collect();
    let gap = closed
        .iter()
        .zip(&prices)
        .map(|(c, p)| (c - p).abs())
        .fold(0.0, f64::max);
    out.check(
        gap <= 1e-12,
        format!("closed form {closed:?} vs simulated, gap {gap:e}"),
    );
    traces.push(("canonical(3) on A".into(), trace));
    out
}

fn c3(traces: &mut Traces) -> Outcome {
    let mut out = Outcome::new();
    let cfg = scenario_a(DistributionMechanism::Proportional, Variant::Rights);
    let trace = run(&cfg, 50).unwrap();
    let report = check_nonexpansive(&trace, 1e-12, 1e-12);
    out.check(
        report.first_violation.is_none(),
        format!(
            "distance non-increasing, first violation {:?}",
            report.first_violation
        ),
    );
    let d50 = report.distances[49];
    out.check(d50 < 1e-6, format!("|p^50 - 1| = {d50:e}"));
    out.note(format!(
        "p^1 = {:.6}, p^2 = {:.6}",
        trace.records[0].price_good, trace.records[1].price_good
    ));
    traces.push(("proportional on A, 50 rounds".into(), trace));
    out
}

fn c4(traces: &mut Traces) -> Outcome {
    let mut out = Outcome::new();
    let horizon = 1000;
    let cfg = scenario_a(DistributionMechanism::Proportional, Variant::Rights);
    let rights = run(&cfg, horizon).unwrap();
    let free = run(&cfg.with_variant(Variant::FreeMarket), horizon).unwrap();
    let last = horizon - 1;
    let ratio = rights.mean_frustration_path[last] / free.mean_frustration_path[last];
    out.check(
        (ratio - 0.5).abs() <= 1e-3,
        format!("per-round mean frustration ratio at t = {horizon}: {ratio:.6}"),
    );
    let phi = allocate(&cfg.mechanism, 1.0, &SCENARIO_A_CLAIMS).unwrap();
    for b in 0..3 {
        let (m, r) = (SCENARIO_A_INCOMES[b], phi[b]);
        if m >= r {
            continue;
        }
        let base = 1.0 - m / r;
        let fr = rights.records[last].frustration[b];
        let ff = free.records[last].frustration[b];
        out.check(
            (fr - base / 2.0).abs() <= 1e-4,
            format!(
                "poor b{b} rights frustration {fr:.6}, expected {:.6}",
                base / 2.0
            ),
        );
        out.check(
            (ff - base).abs() <= 1e-4,
            format!("poor b{b} free-market frustration {ff:.6}, expected {base:.6}"),
        );
    }
    let prev = rights.mean_frustration_path[last - 1] / free.mean_frustration_path[last - 1];
    let pair = (rights.mean_frustration_path[last] + rights.mean_frustration_path[last - 1])
        / (free.mean_frustration_path[last] + free.mean_frustration_path[last - 1]);
    out.note(format!(
        "ratio at t = {}: {prev:.6}; two-round ratio {pair:.6}",
        horizon - 1
    ));
    out.note(format!(
        "cumulative expected frustration ratio {:.6}",
        rights.expected_frustration() / free.expected_frustration()
    ));
    out.note(format!(
        "money of b0 at t = {}, {horizon}: {:.6}, {:.6}",
        horizon - 1,
        rights.records[last - 1].money_start[0],
        rights.records[last].money_start[0]
    ));
    traces.push(("proportional on A, 1000 rounds".into(), rights));
    traces.push(("free market on A, 1000 rounds".into(), free));
    out
}

fn c5(traces: &mut Traces) -> Outcome {
    let mut out = Outcome::new();
    let prop = run(
        &scenario_b(DistributionMechanism::Proportional, Variant::Rights),
        200,
    )
    .unwrap();
    let settled = prop.first_settled_round(1e-12);
    out.check(
        settled == Some(4),
        format!("proportional settles at {settled:?}, expected Some(4)"),
    );
    let cg = run(
        &scenario_b(DistributionMechanism::ContestedGarment, Variant::Rights),
        200,
    )
    .unwrap();
    let settled = cg.first_settled_round(1e-12);
    let near = settled.is_some_and(|t| t.abs_diff(47) <= 3);
    out.check(
        near,
        format!("contested garment settles at {settled:?}, expected 47 +- 3"),
    );
    traces.push(("proportional on B".into(), prop));
    traces.push(("contested garment on B".into(), cg));
    out
}

fn c6(traces: &mut Traces) -> Outcome {
    let mut out = Outcome::new();
    let cfg = scenario_b(DistributionMechanism::Proportional, Variant::FreeMarket);
    let trace = run(&cfg, 200).unwrap();
    let e = trace.expected_frustration();
    out.check(
        (e - 1.0 / 3.0).abs() <= 1e-3,
        format!("free-market expected frustration at t = 200: {e:.7}"),
    );
    traces.push(("free market on B".into(), trace));
    out
}

fn c7() -> Outcome {
    let mut out = Outcome::new();
    let report = cross_validate_price_solver(1000, 7).unwrap();
    out.check(
        report.max_discrepancy < 1e-10,
        format!(
            "{} instances, max discrepancy {:e}",
            report.instances, report.max_discrepancy
        ),
    );
    out
}

fn describe(report: &AuditReport) -> String {
    let worst = report
        .trials
        .iter()
        .max_by(|a, b| a.weakest_gain().total_cmp(&b.weakest_gain()));
    let shown = worst
        .map(|t| {
            t.deviations
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(" & ")
        })
        .unwrap_or_default();
    format!(
        "{} trials, max gain {:e}, {} witnesses, best: {shown}",
        report.trials.len(),
        report.max_gain,
        report.witnesses.len()
    )
}

fn c8() -> Outcome {
    let mut out = Outcome::new();
    let horizon = 20;
    let cfg = scenario_a(DistributionMechanism::Proportional, Variant::Rights);

    let grid = unilateral_grid(&cfg, horizon);
    let unilateral = audit_unilateral(&cfg, horizon, &grid).unwrap();
    out.check(
        unilateral.trials.len() >= 60,
        format!("unilateral grid has {} trials", unilateral.trials.len()),
    );
    out.check(
        unilateral.max_gain <= 1e-9,
        format!("unilateral: {}", describe(&unilateral)),
    );
    // deviations that only hold back: sell less Right, buy less Right,
    // withhold Good
    let restrained: Vec<f64> = unilateral
        .trials
        .iter()
        .filter(|t| {
            t.deviations.iter().all(|d| match d.kind {
                DeviationKind::BuyerSellLessRight(f) | DeviationKind::BuyerBuyLessRight(f) => {
                    f > 0.0
                }
                DeviationKind::SellerWithhold(_) => true,
                _ => false,
            })
        })
        .map(|t| t.weakest_gain())
        .collect();
    out.note(format!(
        "max gain over {} holding-back deviations: {:e}",
        restrained.len(),
        restrained.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    ));

    let split = scenario_a_two_sellers(DistributionMechanism::Proportional, Variant::Rights);
    let scans = [
        ("b0 b1", &cfg, vec![Trader::Buyer(0), Trader::Buyer(1)]),
        ("s0 b1", &cfg, vec![Trader::Seller(0), Trader::Buyer(1)]),
        (
            "s0 s1 (split supply)",
            &split,
            vec![Trader::Seller(0), Trader::Seller(1)],
        ),
    ];
    for (label, config, coalition) in scans {
        let joint = coalition_grid(&coalition, horizon, 1000);
        let report = audit_coalition(config, horizon, &coalition, &joint).unwrap();
        out.check(
            report.max_gain <= 1e-9,
            format!("coalition {label}: {}", describe(&report)),
        );
    }

    let mut inflated = cfg.clone();
    inflated.greedy_price_markup = 0.1;
    let undercuts: Vec<Deviation> = trader_options(Trader::Seller(0), &[1], &[-0.05, -0.1])
        .into_iter()
        .filter(|d| matches!(d.kind, DeviationKind::SellerPrice(Magnitude::Relative(m)) if m < 0.0))
        .collect();
    let control = audit_unilateral(&inflated, horizon, &undercuts).unwrap();
    out.check(
        control.max_gain > 0.0,
        format!(
            "negative control, +10% price undercut: max gain {:e}",
            control.max_gain
        ),
    );
    for trial in unilateral.witness_trials().take(4) {
        out.note(format!(
            "witness {}: gain {:e}",
            trial.deviations[0],
            trial.weakest_gain()
        ));
    }
    out
}

fn c9(traces: &mut Traces) -> Outcome {
    let mut out = Outcome::new();
    let mut worst: f64 = 0.0;
    let mut worst_seed = 0;
    for seed in 0..100u64 {
        let n = 2 + (seed % 9) as usize;
        let scale = if seed % 2 == 0 {
            ClaimScale::Scarce
        } else {
            ClaimScale::PerBuyer
        };
        let mech = if seed % 3 == 0 {
            DistributionMechanism::ContestedGarment
        } else {
            DistributionMechanism::Proportional
        };
        let cfg = generate_dirichlet_scenario(n, Some(3.0), scale, seed)
            .unwrap()
            .with_mechanism(mech)
            .with_variant(Variant::MyopicRights);
        let trace = run(&cfg, cfg.horizon).unwrap();
        for r in &trace.records {
            for &f in &r.frustration {
                if f > worst {
                    worst = f;
                    worst_seed = seed;
                }
            }
        }
        traces.push((format!("myopic seed {seed}"), trace));
    }
    out.check(
        worst <= 0.5 + 1e-12,
        format!("100 scenarios, worst frustration {worst:.12} (seed {worst_seed})"),
    );
    out
}

fn c10() -> Outcome {
    let mut out = Outcome::new();
    let samples = 1000;
    let mut mechs = vec![
        (DistributionMechanism::Proportional, 2),
        (DistributionMechanism::ContestedGarment, 2),
    ];
    for rank in 1..=3 {
        mechs.push((DistributionMechanism::Canonical { rank }, rank.max(2)));
    }
    let weighted = DistributionMechanism::Weighted {
        weights: vec![(0.5, 1), (0.3, 2), (0.2, 3)],
    };
    mechs.push((weighted.clone(), 3));
    for (mech, min_buyers) in &mechs {
        let report = if *min_buyers == 2 {
            verify_axioms(mech, samples, 10)
        } else {
            verify_axioms_with(mech, samples, 10, *min_buyers, 8)
        };
        let example = report
            .counterexamples
            .first()
            .map(|c| format!("; e.g. {}", c.detail))
            .unwrap_or_default();
        out.check(
            report.passed(),
            format!(
                "{}: failures per axiom {:?}{example}",
                mech.name(),
                report.failures
            ),
        );
    }

    let DistributionMechanism::Weighted { weights } = &weighted else {
        unreachable!()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut gap: f64 = 0.0;
    for _ in 0..samples {
        let n = rng.random_range(3..=8);
        let claims: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
        let volume = rng.random_range(0.0..4.0);
        let combined = allocate(&weighted, volume, &claims).unwrap();
        let mut parts = vec![0.0; n];
        for &(alpha, rank) in weights {
            let single =
                allocate(&DistributionMechanism::Canonical { rank }, volume, &claims).unwrap();
            for (p, s) in parts.iter_mut().zip(single) {
                *p += alpha * s;
            }
        }
        for (c, p) in combined.iter().zip(&parts) {
            gap = gap.max((c - p).abs());
        }
    }
    out.check(
        gap <= 1e-12,
        format!("weighted vs canonical decomposition, max gap {gap:e}"),
    );
    out
}

fn c11(traces: &Traces) -> Outcome {
    let mut out = Outcome::new();
    let mut rounds = 0;
    let mut broken = Vec::new();
    for (label, trace) in traces {
        for r in &trace.records {
            rounds += 1;
            if !r.conservation.holds(CONSERVATION_TOL) {
                broken.push(format!("{label} round {}", r.round));
            }
        }
    }
    out.check(
        broken.is_empty(),
        format!(
            "{} traces, {rounds} rounds, {} violations {:?}",
            traces.len(),
            broken.len(),
            broken.iter().take(3).collect::<Vec<_>>()
        ),
    );
    out
}

fn with_supply(cfg: &MarketConfig, schedule: &SupplySchedule) -> MarketConfig {
    let mut cfg = cfg.with_horizon(100);
    cfg.sellers = vec![SellerSpec {
        resupply: schedule.clone(),
    }];
    cfg.validate().unwrap();
    cfg
}

fn c12() -> Outcome {
    let mut out = Outcome::new();
    let schedules = [
        (
            "cosine",
            SupplySchedule::Cosine {
                amplitude: 0.25,
                period: 10.0,
                offset: 0.75,
            },
        ),
        (
            "step",
            SupplySchedule::Step {
                before: 1.0,
                after: 0.5,
                switch_round: 50,
            },
        ),
        (
            "logistic",
            SupplySchedule::Logistic {
                capacity: 1.0,
                rate: -0.05,
                midpoint: 50.0,
            },
        ),
        (
            "bullwhip",
            SupplySchedule::Bullwhip {
                base: 1.0,
                amplitude: 0.5,
                damping: 0.05,
                period: 12.0,
            },
        ),
        (
            "hubbert",
            SupplySchedule::Hubbert {
                peak: 1.0,
                width: 10.0,
                center: 50.0,
            },
        ),
    ];
    let mechs = [
        DistributionMechanism::Proportional,
        DistributionMechanism::ContestedGarment,
    ];
    for (name, schedule) in &schedules {
        for (scenario, base) in [("A", scenario_a as fn(_, _) -> _), ("B", scenario_b)] {
            for mech in &mechs {
                let cfg = with_supply(&base(mech.clone(), Variant::Rights), schedule);
                let rights = run(&cfg, 100).unwrap();
                let free = run(&cfg.with_variant(Variant::FreeMarket), 100).unwrap();
                let intact = rights
                    .records
                    .iter()
                    .chain(&free.records)
                    .all(|r| r.conservation.holds(CONSERVATION_TOL));
                let (er, ef) = (rights.expected_frustration(), free.expected_frustration());
                out.check(
                    intact && er < ef,
                    format!(
                        "{name} on {scenario}, {}: rights {er:.4} vs free {ef:.4}, invariants {}",
                        mech.name(),
                        if intact { "hold" } else { "broken" }
                    ),
                );
            }
        }
    }
    out
}

fn main() -> ExitCode {
    let mut traces: Traces = Vec::new();
    let criteria: Vec<(&str, Outcome)> = vec![
        ("1 exact rights values", c1()),
        ("2 canonical closed forms", c2(&mut traces)),
        ("3 price convergence", c3(&mut traces)),
        ("4 frustration halving", c4(&mut traces)),
        ("5 zero-frustration rounds", c5(&mut traces)),
        ("6 free-market baseline", c6(&mut traces)),
        ("7 solver oracle equivalence", c7()),
        ("8 equilibrium audit", c8()),
        ("9 myopic frustration bound", c9(&mut traces)),
        ("10 mechanism axioms", c10()),
    ];
    let conservation = c11(&traces);
    let criteria = criteria.into_iter().chain([
        ("11 conservation suite", conservation),
        ("12 time-dependent supply", c12()),
    ]);

    let mut failed = 0;
    for (name, outcome) in criteria {
        println!("{} {name}", if outcome.passed { "PASS" } else { "FAIL" });
        for note in &outcome.notes {
            println!("     {note}");
        }
        if !outcome.passed {
            failed += 1;
        }
    }
    println!("{failed} of 12 criteria failed");
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
