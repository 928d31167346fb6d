use std::fmt::Write;

use buying_rights::analysis::{
    audit_coalition, audit_unilateral, coalition_grid_with, default_rounds, trader_options,
    AuditReport, Trader, DEFAULT_MAGNITUDES,
};
use buying_rights::rights::{verify_axioms_with, AxiomReport};
use buying_rights::scenarios::{generate_dirichlet_scenario, ClaimScale};
use buying_rights::{run, DistributionMechanism, Trace, Variant};
use rayon::prelude::*;

use crate::error::{CliError, Result, Verdict};
use crate::output::{select_columns, trace_csv};
use crate::scenario::{parse_coalition, ScenarioFile};

/// Runs the scenario for its horizon and renders the CSV.
pub fn simulate(file: &ScenarioFile) -> Result<String> {
    let config = file.config()?;
    let trace = run(&config, config.horizon)?;
    let names = file.output.as_ref().and_then(|o| o.columns.as_deref());
    let columns = select_columns(names, config.buyers.len())?;
    Ok(trace_csv(&trace, &columns))
}

#[derive(Debug, Clone, Default)]
pub struct AuditRequest {
    /// Replaces the file's audit horizon.
    pub horizon: Option<usize>,
    /// Replaces the file's coalitions when given.
    pub coalitions: Option<Vec<Vec<Trader>>>,
}

const DEFAULT_MAX_JOINT: usize = 1000;
const LISTED_WITNESSES: usize = 10;

fn describe(out: &mut String, label: &str, report: &AuditReport) {
    let _ = writeln!(
        out,
        "{label}: {} trials, max gain {:e}, {} profitable",
        report.trials.len(),
        report.max_gain,
        report.witnesses.len()
    );
    for trial in report.witness_trials().take(LISTED_WITNESSES) {
        let moves: Vec<String> = trial.deviations.iter().map(|d| d.to_string()).collect();
        let _ = writeln!(
            out,
            "  {} -> gain {:e}",
            moves.join(" & "),
            trial.weakest_gain()
        );
    }
    if report.witnesses.len() > LISTED_WITNESSES {
        let _ = writeln!(
            out,
            "  ... {} more",
            report.witnesses.len() - LISTED_WITNESSES
        );
    }
    if !report.skipped.is_empty() {
        let _ = writeln!(out, "  {} deviations skipped", report.skipped.len());
    }
}

/// Unilateral deviations for every trader, then each coalition. Returns
/// the text report and whether any deviation paid off.
pub fn audit(file: &ScenarioFile, request: &AuditRequest) -> Result<(String, Verdict)> {
    let config = file.config()?;
    let options = file.audit.clone().unwrap_or_default();
    let horizon = request
        .horizon
        .or(options.horizon)
        .unwrap_or(config.horizon);
    let rounds = options
        .rounds
        .clone()
        .unwrap_or_else(|| default_rounds(horizon));
    let magnitudes = options
        .magnitudes
        .clone()
        .unwrap_or_else(|| DEFAULT_MAGNITUDES.to_vec());
    let coalitions = match &request.coalitions {
        Some(c) => c.clone(),
        None => options
            .coalitions
            .iter()
            .map(|c| parse_coalition(c))
            .collect::<Result<_>>()?,
    };
    let traders = Trader::all(&config);
    if let Some(t) = coalitions.iter().flatten().find(|t| !traders.contains(t)) {
        return Err(CliError::Parse(format!(
            "coalition member {t} is not in the scenario"
        )));
    }
    let max_joint = options.max_joint_per_round.unwrap_or(DEFAULT_MAX_JOINT);

    let mut out = String::new();
    let _ = writeln!(
        out,
        "audit of {} under {}, {horizon} rounds, deviation rounds {rounds:?}",
        config.variant,
        config.mechanism.name()
    );
    let grid: Vec<_> = traders
        .into_iter()
        .flat_map(|t| trader_options(t, &rounds, &magnitudes))
        .collect();
    let unilateral = audit_unilateral(&config, horizon, &grid)?;
    describe(&mut out, "unilateral", &unilateral);
    let mut found = !unilateral.passed();

    for coalition in &coalitions {
        let names: Vec<String> = coalition.iter().map(|t| t.to_string()).collect();
        let label = format!("coalition {}", names.join("+"));
        let joint = coalition_grid_with(coalition, &rounds, &magnitudes, max_joint);
        let report = audit_coalition(&config, horizon, coalition, &joint)
            .map_err(|e| CliError::Parse(format!("{label}: {e}")))?;
        describe(&mut out, &label, &report);
        found |= !report.passed();
    }
    if coalitions.is_empty() {
        out.push_str("no coalitions audited\n");
    }
    let verdict = if found {
        Verdict::Found
    } else {
        Verdict::Clean
    };
    out.push_str(match verdict {
        Verdict::Found => "verdict: profitable deviation found\n",
        Verdict::Clean => "verdict: no profitable deviation on this grid\n",
    });
    Ok((out, verdict))
}

#[derive(Debug, Clone)]
pub struct SweepRequest {
    pub min_buyers: usize,
    pub max_buyers: usize,
    pub seeds: usize,
    pub first_seed: u64,
    pub claim_scale: ClaimScale,
    pub concentration: Option<f64>,
    pub mechanism: DistributionMechanism,
}

/// Asymptotic estimates of one run: means over the final half.
#[derive(Debug, Clone, Copy)]
struct Tail {
    frustration: f64,
    price: f64,
}

fn tail(trace: &Trace) -> Tail {
    let n = trace.records.len();
    let start = n / 2;
    let len = (n - start) as f64;
    Tail {
        frustration: trace.mean_frustration_path[start..].iter().sum::<f64>() / len,
        price: trace.records[start..]
            .iter()
            .map(|r| r.price_good)
            .sum::<f64>()
            / len,
    }
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub const SWEEP_HEADER: &str = "num_buyers,runs,rights_frustration,rights_frustration_se,\
free_frustration,free_frustration_se,rights_price,rights_price_se,free_price,free_price_se";

/// Generated scenarios per size and seed, each run for `10 |B|` rounds with
/// and without rights. One CSV row per size.
pub fn sweep(request: &SweepRequest) -> Result<String> {
    if request.min_buyers < 2 || request.min_buyers > request.max_buyers {
        return Err(CliError::Parse("need 2 <= min-buyers <= max-buyers".into()));
    }
    if request.seeds == 0 {
        return Err(CliError::Parse("need at least one seed".into()));
    }
    let jobs: Vec<(usize, u64)> = (request.min_buyers..=request.max_buyers)
        .flat_map(|n| (0..request.seeds as u64).map(move |k| (n, request.first_seed + k)))
        .collect();
    // collect keeps job order, so the output does not depend on scheduling
    let runs: Vec<(usize, Tail, Tail)> = jobs
        .par_iter()
        .map(|&(n, seed)| {
            let config =
                generate_dirichlet_scenario(n, request.concentration, request.claim_scale, seed)?
                    .with_mechanism(request.mechanism.clone());
            let horizon = 10 * n;
            let rights = run(&config, horizon)?;
            let free = run(&config.with_variant(Variant::FreeMarket), horizon)?;
            Ok((n, tail(&rights), tail(&free)))
        })
        .collect::<buying_rights::Result<_>>()?;

    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for n in request.min_buyers..=request.max_buyers {
        let group: Vec<&(usize, Tail, Tail)> = runs.iter().filter(|r| r.0 == n).collect();
        let pick = |f: &dyn Fn(&(usize, Tail, Tail)) -> f64| -> (f64, f64) {
            mean_and_se(&group.iter().map(|r| f(r)).collect::<Vec<_>>())
        };
        let stats = [
            pick(&|r| r.1.frustration),
            pick(&|r| r.2.frustration),
            pick(&|r| r.1.price),
            pick(&|r| r.2.price),
        ];
        let _ = write!(out, "{n},{}", group.len());
        for (mean, se) in stats {
            let _ = write!(out, ",{mean},{se}");
        }
        out.push('\n');
    }
    Ok(out)
}

/// Mechanisms checked when none is given: the built-in rules, the first
/// three canonical mechanisms and a weighted mix with falling weights.
pub fn default_mechanisms() -> Vec<DistributionMechanism> {
    let mut mechs = vec![
        DistributionMechanism::Proportional,
        DistributionMechanism::ContestedGarment,
    ];
    mechs.extend((1..=3).map(|rank| DistributionMechanism::Canonical { rank }));
    mechs.push(DistributionMechanism::Weighted {
        weights: vec![(0.5, 1), (0.3, 2), (0.2, 3)],
    });
    mechs
}

/// Smallest population a mechanism is defined on.
fn min_buyers(mech: &DistributionMechanism) -> usize {
    let rank = match mech {
        DistributionMechanism::Canonical { rank } => *rank,
        DistributionMechanism::Weighted { weights } => {
            weights.iter().map(|w| w.1).max().unwrap_or(1)
        }
        _ => 1,
    };
    rank.max(2)
}

const MAX_SAMPLED_BUYERS: usize = 8;

pub fn verify_mechanisms(
    mechs: &[DistributionMechanism],
    samples: usize,
    seed: u64,
) -> Result<(String, Verdict)> {
    let mut out =
        String::from("mechanism,samples,axiom1_failures,axiom2_failures,axiom3_failures,result\n");
    let mut examples = String::new();
    let mut found = false;
    for mech in mechs {
        let lo = min_buyers(mech);
        let report: AxiomReport =
            verify_axioms_with(mech, samples, seed, lo, lo.max(MAX_SAMPLED_BUYERS));
        let [a, b, c] = report.failures;
        let ok = report.passed();
        found |= !ok;
        let _ = writeln!(
            out,
            "{},{},{a},{b},{c},{}",
            mech.name(),
            report.samples,
            if ok { "pass" } else { "fail" }
        );
        if let Some(cx) = report.counterexamples.first() {
            let _ = writeln!(
                examples,
                "# {}: axiom {} fails at V = {}, D = {:?} vs V = {}, D = {:?}: {}",
                mech.name(),
                cx.axiom,
                cx.volume,
                cx.claims,
                cx.other_volume,
                cx.other_claims,
                cx.detail
            );
        }
    }
    out.push_str(&examples);
    Ok((
        out,
        if found {
            Verdict::Found
        } else {
            Verdict::Clean
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::preset;

    #[test]
    fn mean_and_se_of_known_sample() {
        let (m, se) = mean_and_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        // sample sd sqrt(5/3), divided by 2
        assert!((se - (5.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-15);
        assert_eq!(mean_and_se(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn tail_averages_final_half() {
        let cfg = preset("free-market-a").unwrap().config().unwrap();
        let trace = run(&cfg, 10).unwrap();
        let t = tail(&trace);
        assert!((t.price - 1.0).abs() < 1e-12);
        let want: f64 = trace.mean_frustration_path[5..].iter().sum::<f64>() / 5.0;
        assert_eq!(t.frustration, want);
    }

    #[test]
    fn sweep_rejects_empty_ranges() {
        let req = SweepRequest {
            min_buyers: 4,
            max_buyers: 3,
            seeds: 2,
            first_seed: 0,
            claim_scale: ClaimScale::Scarce,
            concentration: Some(1.0),
            mechanism: DistributionMechanism::Proportional,
        };
        assert!(sweep(&req).is_err());
        assert!(sweep(&SweepRequest {
            seeds: 0,
            max_buyers: 5,
            ..req
        })
        .is_err());
    }

    #[test]
    fn sweep_has_one_row_per_size() {
        let req = SweepRequest {
            min_buyers: 2,
            max_buyers: 4,
            seeds: 3,
            first_seed: 9,
            claim_scale: ClaimScale::Scarce,
            concentration: Some(2.0),
            mechanism: DistributionMechanism::Proportional,
        };
        let csv = sweep(&req).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("2,3,"));
        assert!(lines[3].starts_with("4,3,"));
    }

    #[test]
    fn min_buyers_covers_the_largest_rank() {
        assert_eq!(min_buyers(&DistributionMechanism::Proportional), 2);
        assert_eq!(min_buyers(&DistributionMechanism::Canonical { rank: 3 }), 3);
        assert_eq!(
            min_buyers(&DistributionMechanism::Weighted {
                weights: vec![(0.5, 1), (0.5, 4)]
            }),
            4
        );
    }

    #[test]
    fn verification_flags_canonical_two() {
        let (table, verdict) = verify_mechanisms(
            &[
                DistributionMechanism::Proportional,
                DistributionMechanism::Canonical { rank: 2 },
            ],
            200,
            1,
        )
        .unwrap();
        assert_eq!(verdict, Verdict::Found);
        assert!(table.contains("proportional,200,0,0,0,pass"));
        assert!(table.contains("canonical(2),200,0,"));
        assert!(table.contains("# canonical(2): axiom 2"));
    }
}
