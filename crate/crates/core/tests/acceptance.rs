//! Acceptance suite: one PASS/FAIL line per criterion at desk scale
//! (2·10⁵ paths, 256 steps per maturity). Runs with a plain `main` so the
//! report is always printed; exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use volskew::experiments::{power_law_report, skew_ratio_report, FitWindow, PowerLawReport, SkewRatioReport};
use volskew::models::simulate_terminal_states;
use volskew::pricing::implied_skew_digital;
use volskew::selftest::run_selftest;
use volskew::{
    asymptotics::sabr_atm_curvatures, bergomi_skew_limit, dupire_oracle_check, sabr_curvature_gap, skew_ratio_limit,
    Result, RoughBergomiParams, SabrParams, VolterraFactor,
};

const PATHS: usize = 200_000;
const STEPS: usize = 256;
const SEED: u64 = 20_240_601;
const SKEW_BUMP: f64 = 0.005;
const CURVATURE_BUMP: f64 = 0.01;

fn bergomi(hurst: f64) -> RoughBergomiParams {
    RoughBergomiParams::new(100.0, 0.3, 1.1, -0.6, hurst).unwrap()
}

/// Geometric ladder of 24 maturities from 0.004 to 1.
fn ladder() -> Vec<f64> {
    let r = (1.0f64 / 0.004).powf(1.0 / 23.0);
    (0..24).map(|i| 0.004 * r.powi(i)).collect()
}

type Criterion<'a> = Box<dyn Fn() -> Result<Outcome> + 'a>;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { passed, detail })
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

struct Desk {
    ratio_half: SkewRatioReport,
    ratio_rough: SkewRatioReport,
    power_rough: PowerLawReport,
}

fn desk() -> Result<Desk> {
    let window = FitWindow::default();
    let run = |h: f64| -> Result<(RoughBergomiParams, Vec<_>)> {
        let p = bergomi(h);
        let factor = VolterraFactor::new(h, STEPS)?;
        Ok((p, simulate_terminal_states(&factor, &p, &ladder(), PATHS, SEED)?))
    };
    let (p_half, samples_half) = run(0.5)?;
    let ratio_half = skew_ratio_report(&p_half, &samples_half, SKEW_BUMP, window)?;
    drop(samples_half);
    let (p_rough, samples_rough) = run(0.2)?;
    Ok(Desk {
        ratio_half,
        ratio_rough: skew_ratio_report(&p_rough, &samples_rough, SKEW_BUMP, window)?,
        power_rough: power_law_report(&p_rough, &samples_rough, CURVATURE_BUMP, window)?,
    })
}

fn skew_ratio_rule(report: &SkewRatioReport, target: f64, point_tol: f64, level_tol: f64) -> Result<Outcome> {
    let oracle = skew_ratio_limit(report.params.hurst)?;
    let short: Vec<f64> = report.rows.iter().take(3).map(|r| r.ratio.value).collect();
    let points_ok = short.iter().all(|r| within(*r, target, point_tol));
    let level = report.level.map(|l| l.value).unwrap_or(f64::NAN);
    outcome(
        points_ok && within(level, target, level_tol) && within(oracle, target, 5e-4),
        format!(
            "ratios at 3 smallest T = {:.4}, {:.4}, {:.4} (target {target} ± {point_tol}); \
             fitted level = {level:.4} (± {level_tol}); 1/(H+3/2) = {oracle:.4}",
            short[0], short[1], short[2]
        ),
    )
}

fn skew_limit() -> Result<Outcome> {
    let mut parts = Vec::new();
    let mut ok = true;
    for (h, quoted) in [(0.5, -0.33), (0.2, -0.3508)] {
        let p = bergomi(h);
        let oracle = bergomi_skew_limit(&p)?;
        let factor = VolterraFactor::new(h, STEPS)?;
        let sample = simulate_terminal_states(&factor, &p, &[0.01], PATHS, SEED)?.remove(0);
        let skew = implied_skew_digital(&sample, &p)?;
        let scaled = 0.01f64.powf(0.5 - h) * skew.value;
        ok &= within(scaled, oracle, 0.1 * oracle.abs()) && within(oracle, quoted, 5e-4);
        parts.push(format!(
            "H={h}: T^(1/2-H)·skew at T=0.01 = {scaled:.4} ± {:.4}, limit {oracle:.4} (quoted {quoted})",
            0.01f64.powf(0.5 - h) * skew.std_error
        ));
    }
    outcome(ok, parts.join("; "))
}

fn sabr_gap() -> Result<Outcome> {
    let p = SabrParams::new(0.3, 0.6, -0.6, 100.0)?;
    let c = sabr_atm_curvatures(&p, 1e-3)?;
    let limit = sabr_curvature_gap(&p)?;
    outcome(
        within(c.gap, 0.072, 0.01 * 0.072) && within(limit, 0.072, 1e-12),
        format!("gap at T=1e-3 = {:.6}, limit ρ²ν²/(6α) = {limit:.6}", c.gap),
    )
}

fn uncorrelated_ratio() -> Result<Outcome> {
    let p = SabrParams::new(0.3, 0.6, 0.0, 100.0)?;
    let c = sabr_atm_curvatures(&p, 1e-3)?;
    outcome(
        within(c.ratio, 1.0 / 3.0, 0.01),
        format!("implied/local curvature at T=1e-3 = {:.6}", c.ratio),
    )
}

fn curvature_transfer(report: &PowerLawReport) -> Result<Outcome> {
    let rows = &report.rows[..3];
    let ok = rows
        .iter()
        .all(|r| r.transfer_gap.value.abs() <= 3.0 * r.transfer_gap.std_error);
    let lines: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "T={:.4}: predicted {:.3} vs local {:.3} ± {:.3} (z = {:+.2})",
                r.maturity,
                r.curv_lv_from_iv.value,
                r.curv_lv.value,
                r.curv_lv.std_error,
                r.transfer_gap.value / r.transfer_gap.std_error
            )
        })
        .collect();
    outcome(ok, lines.join("; "))
}

fn power_laws(report: &PowerLawReport) -> Result<Outcome> {
    let (s, i, l) = (
        report.skew_fit.exponent,
        report.implied_fit.exponent,
        report.local_fit.exponent,
    );
    let ok = within(s, -0.3, 0.05) && within(i, -0.6, 0.1) && within(l, -0.6, 0.1) && (i - l).abs() < 0.1;
    outcome(
        ok,
        format!(
            "exponents on T ∈ [{}, {}]: skew {s:.4}, implied curvature {i:.4}, local curvature {l:.4}, \
             difference {:.4}",
            report.window.min,
            report.window.max,
            i - l
        ),
    )
}

fn oracle_equivalence() -> Result<Outcome> {
    let mut ok = true;
    let mut parts = Vec::new();
    for h in [0.2, 0.5] {
        let factor = VolterraFactor::new(h, STEPS)?;
        let rows = dupire_oracle_check(
            &factor,
            &bergomi(h),
            &[0.1, 0.25, 0.5],
            &[90.0, 100.0, 110.0],
            PATHS,
            SEED,
        )?;
        let worst = rows.iter().map(|r| r.z.abs()).fold(0.0, f64::max);
        ok &= worst <= 3.0;
        parts.push(format!(
            "H={h}: max |z| = {worst:.2} over 9 nodes (z: {})",
            rows.iter()
                .map(|r| format!("{:+.2}", r.z))
                .collect::<Vec<_>>()
                .join(" ")
        ));
    }
    outcome(ok, parts.join("; "))
}

fn numerics_suite() -> Result<Outcome> {
    let report = run_selftest();
    let failed: Vec<&str> = report
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.as_str())
        .collect();
    outcome(
        report.passed() && report.seconds < 300.0,
        format!(
            "{} checks, failing: [{}]; selftest took {:.1} s (limit 300 s)",
            report.checks.len(),
            failed.join(", "),
            report.seconds
        ),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let desk = desk();
    let on_desk = |f: fn(&Desk) -> Result<Outcome>| match &desk {
        Ok(d) => f(d),
        Err(e) => outcome(false, format!("desk simulation failed: {e}")),
    };
    let criteria: Vec<(&str, Criterion)> = vec![
        (
            "1 skew ratio rule, H=0.5",
            Box::new(move || on_desk(|d| skew_ratio_rule(&d.ratio_half, 0.5, 0.05, 0.02))),
        ),
        (
            "2 skew ratio rule, H=0.2",
            Box::new(move || on_desk(|d| skew_ratio_rule(&d.ratio_rough, 0.588, 0.05, 0.03))),
        ),
        ("3 rough Bergomi skew limit", Box::new(skew_limit)),
        ("4 SABR curvature gap", Box::new(sabr_gap)),
        ("5 uncorrelated curvature ratio 1/3", Box::new(uncorrelated_ratio)),
        (
            "6 curvature transfer",
            Box::new(move || on_desk(|d| curvature_transfer(&d.power_rough))),
        ),
        (
            "7 power laws, H=0.2",
            Box::new(move || on_desk(|d| power_laws(&d.power_rough))),
        ),
        ("8 Dupire oracle equivalence", Box::new(oracle_equivalence)),
        ("9 numerics suite", Box::new(numerics_suite)),
    ];
    let mut all = true;
    for (name, check) in &criteria {
        let t = Instant::now();
        let o = check().unwrap_or_else(|e| Outcome {
            passed: false,
            detail: format!("error: {e}"),
        });
        all &= o.passed;
        println!(
            "{} [{name}] {} ({:.1} s)",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!("acceptance finished in {:.1} s", start.elapsed().as_secs_f64());
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
