//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Run with `cargo test --test acceptance`.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use propp::borrowing::{
    fit_fixed_power, fit_ignore, fit_mpp, fit_pooled, fit_propp, log_marginal_delta, sample_delta,
    BorrowingInput, DeltaPrior, DEFAULT_GRID_SIZE, DEFAULT_SAMPLES,
};
use propp::model::{BetaParams, Dataset, PosteriorSummary};
use propp::propensity::{standardized_mean_diff, weight_dataset, PropensityOptions, WeightedDataset};
use propp::seed;
use propp::simulation::{generate_dataset, run_grid, Method, MetricsRow, Scenario, ScenarioConfig, Setting};
use serde_json::Value;
use statrs::function::beta::ln_beta;

const SEED: u64 = 20_240_601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn criterion_1() -> Outcome {
    let data = Dataset::from_counts(75, 132, 129, 241).unwrap();
    let trial = fit_ignore(&data).unwrap();
    let eap = PosteriorSummary::from_beta(BetaParams::new(130.0, 113.0).unwrap()).unwrap();
    let ok = |s: &PosteriorSummary, m: f64, lo: f64, hi: f64| {
        (s.mean - m).abs() <= 0.002 && (s.q025 - lo).abs() <= 0.005 && (s.q975 - hi).abs() <= 0.005
    };
    check(
        ok(&trial, 0.567, 0.483, 0.650) && ok(&eap, 0.535, 0.472, 0.597),
        format!(
            "trial {:.4} ({:.4}, {:.4}); external {:.4} ({:.4}, {:.4})",
            trial.mean, trial.q025, trial.q975, eap.mean, eap.q025, eap.q975
        ),
    )
}

fn criterion_2() -> Outcome {
    let data = propp::demo::generate_demo_data(SEED).to_dataset().unwrap();
    let prior = DeltaPrior::default();
    let mpp_input = BorrowingInput::from_dataset(&data).unwrap();
    let unit = WeightedDataset::unit_weights(data.clone());
    let propp_input = BorrowingInput::from_weighted(&unit).unwrap();
    let mut worst = 0.0f64;
    for i in 1..DEFAULT_GRID_SIZE - 1 {
        let d = i as f64 / (DEFAULT_GRID_SIZE - 1) as f64;
        let a = log_marginal_delta(d, &propp_input, &prior).unwrap();
        let b = log_marginal_delta(d, &mpp_input, &prior).unwrap();
        worst = worst.max((a - b).abs());
    }
    let (sa, a) = fit_propp(&unit, &prior, DEFAULT_SAMPLES, SEED).unwrap();
    let (sb, b) = fit_mpp(&data, &prior, DEFAULT_SAMPLES, SEED).unwrap();
    let same = a == b && sa.theta == sb.theta;
    check(
        worst <= 1e-12 && same,
        format!("max |Δ log density| = {worst:.2e}; θ-summaries identical: {same}"),
    )
}

/// CDF of the δ marginal by trapezoid integration of an independent
/// (statrs) evaluation on a fine grid.
fn grid_cdf(input: &BorrowingInput) -> impl Fn(f64) -> f64 {
    let (t, e) = (input.trial, input.external);
    let m = 200_000;
    let h = 1.0 / m as f64;
    let ln: Vec<f64> = (0..=m)
        .map(|i| {
            let d = i as f64 * h;
            ln_beta(d * e.s1 + t.s1 + 1.0, d * e.s0 + t.s0 + 1.0) - ln_beta(d * e.s1 + 1.0, d * e.s0 + 1.0)
        })
        .collect();
    let max = ln.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let dens: Vec<f64> = ln.iter().map(|l| (l - max).exp()).collect();
    let mut cum = vec![0.0; m + 1];
    for i in 1..=m {
        cum[i] = cum[i - 1] + 0.5 * (dens[i - 1] + dens[i]) * h;
    }
    let total = cum[m];
    move |x: f64| {
        let pos = (x / h).clamp(0.0, m as f64);
        let i = (pos.floor() as usize).min(m - 1);
        let frac = pos - i as f64;
        (cum[i] + frac * (cum[i + 1] - cum[i])) / total
    }
}

fn criterion_3() -> Outcome {
    let inputs = [
        ((75.0, 57.0), (129.0, 112.0)),
        ((200.0, 200.0), (200.0, 200.0)),
        ((300.0, 100.0), (100.0, 300.0)),
        ((75.0, 57.0), (0.0, 0.0)),
        ((75.0, 57.0), (61.37, 88.91)),
    ];
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (i, (t, e)) in inputs.into_iter().enumerate() {
        let input = BorrowingInput::from_pairs(t, e).unwrap();
        let mut draws = sample_delta(&input, &DeltaPrior::default(), 10_000, seed::derive(SEED, i as u64), DEFAULT_GRID_SIZE)
            .unwrap();
        draws.sort_by(f64::total_cmp);
        let cdf = grid_cdf(&input);
        let n = draws.len() as f64;
        let ks = draws
            .iter()
            .enumerate()
            .map(|(k, &x)| {
                let f = cdf(x);
                (f - k as f64 / n).abs().max((f - (k + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max);
        worst = worst.max(ks);
        parts.push(format!("{ks:.4}"));
    }
    check(worst <= 0.02, format!("KS distances [{}]", parts.join(", ")))
}

fn criterion_4() -> Outcome {
    let data = Dataset::from_counts(75, 132, 129, 241).unwrap();
    let input = BorrowingInput::from_dataset(&data).unwrap();
    let zero_ok = input.conditional_theta(0.0) == BetaParams::new(76.0, 58.0).unwrap()
        && fit_fixed_power(&data, 0.0).unwrap() == fit_ignore(&data).unwrap();
    let one_ok = input.conditional_theta(1.0) == BetaParams::new(205.0, 170.0).unwrap()
        && fit_fixed_power(&data, 1.0).unwrap() == fit_pooled(&data).unwrap();
    check(zero_ok && one_ok, format!("δ=0 ≡ ignore: {zero_ok}; δ=1 ≡ pool: {one_ok}"))
}

fn row(rows: &[MetricsRow], method: Method, grid: f64) -> &MetricsRow {
    rows.iter()
        .find(|r| r.method == method && r.grid_value == grid)
        .expect("metrics row present")
}

fn simulate(scenario: Scenario, setting: Setting, grid: &[f64], methods: &[Method]) -> (Vec<MetricsRow>, f64) {
    let mut cfg = ScenarioConfig::new(scenario, setting);
    cfg.replicates = 500;
    cfg.methods = methods.to_vec();
    cfg.seed = SEED;
    let start = Instant::now();
    let rows = run_grid(&cfg, grid).unwrap();
    (rows, start.elapsed().as_secs_f64())
}

fn criterion_5() -> Outcome {
    let methods = [Method::Ignore, Method::Pool, Method::Mpp, Method::Propp];
    let (rows, secs) = simulate(Scenario::Drift, Setting::EqualN, &[0.0, 0.375], &methods);
    let (ig0, po0) = (row(&rows, Method::Ignore, 0.0), row(&rows, Method::Pool, 0.0));
    let reduction = 1.0 - po0.rmse / ig0.rmse;
    let a = po0.rmse < ig0.rmse && reduction >= 0.25;
    let (ig, po) = (row(&rows, Method::Ignore, 0.375), row(&rows, Method::Pool, 0.375));
    let b = po.rmse > ig.rmse && po.type1 > 0.10 && (0.02..=0.08).contains(&ig.type1);
    let worst_gap = [0.0, 0.375]
        .iter()
        .map(|&g| {
            let (p, m) = (row(&rows, Method::Propp, g).rmse, row(&rows, Method::Mpp, g).rmse);
            (p - m).abs() / m
        })
        .fold(0.0, f64::max);
    let c = worst_gap <= 0.10;
    check(
        a && b && c,
        format!(
            "(a) η=0 RMSE pool {:.4} vs ignore {:.4}, reduction {:.1}% [{}]; \
             (b) η=0.375 RMSE pool {:.4} vs ignore {:.4}, type-I pool {:.3}, ignore {:.3} [{}]; \
             (c) max |ProPP−MPP|/MPP RMSE {:.1}% [{}]; {secs:.0}s",
            po0.rmse,
            ig0.rmse,
            100.0 * reduction,
            verdict(a),
            po.rmse,
            ig.rmse,
            po.type1,
            ig.type1,
            verdict(b),
            100.0 * worst_gap,
            verdict(c)
        ),
    )
}

fn criterion_6() -> Outcome {
    let (rows, secs) = simulate(Scenario::Drift, Setting::LargeExternal, &[0.25], &[Method::Mpp, Method::Propp]);
    let (p, m) = (row(&rows, Method::Propp, 0.25), row(&rows, Method::Mpp, 0.25));
    check(
        p.type1 < m.type1,
        format!("type-I ProPP {:.3} vs MPP {:.3}; {secs:.0}s", p.type1, m.type1),
    )
}

fn criterion_7() -> Outcome {
    let (rows, secs) =
        simulate(Scenario::Mixture, Setting::EqualN, &[0.0], &[Method::Ignore, Method::Mpp, Method::Propp]);
    let (p, m, i) = (row(&rows, Method::Propp, 0.0), row(&rows, Method::Mpp, 0.0), row(&rows, Method::Ignore, 0.0));
    let gap = (p.rmse - m.rmse).abs() / m.rmse;
    check(
        p.rmse < i.rmse && gap <= 0.15,
        format!(
            "RMSE ProPP {:.4}, MPP {:.4}, ignore {:.4}; gap {:.1}%; {secs:.0}s",
            p.rmse,
            m.rmse,
            i.rmse,
            100.0 * gap
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut cfg = ScenarioConfig::new(Scenario::Mixture, Setting::EqualN);
    cfg.seed = SEED;
    let data = generate_dataset(&cfg, -0.5, &mut seed::rng(SEED)).unwrap();
    let (_, wd, _) = weight_dataset(&data, &PropensityOptions::default()).unwrap();
    let before = standardized_mean_diff(&data, &vec![1.0; data.len()]).unwrap();
    let after = standardized_mean_diff(&data, wd.weights()).unwrap();
    let pass = before.iter().zip(&after).all(|(b, a)| a.abs() < b.abs());
    let pairs: Vec<String> = before
        .iter()
        .zip(&after)
        .map(|(b, a)| format!("{:.3}→{:.3}", b.abs(), a.abs()))
        .collect();
    check(pass, format!("|SMD| {}", pairs.join(", ")))
}

fn propp_bin(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_propp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn criterion_9(dir: &Path) -> Outcome {
    let csv_path = dir.join("demo.csv");
    let doc_path = dir.join("propp.json");
    let gen = propp_bin(&["demo-data", "--seed", "11", "--out", s(&csv_path)]);
    let run = propp_bin(&["analyze", "--data", s(&csv_path), "--method", "propp", "--seed", "11", "--out", s(&doc_path)]);
    if gen.status.code() != Some(0) || run.status.code() != Some(0) {
        return check(
            false,
            format!("exit codes {:?} / {:?}: {}", gen.status.code(), run.status.code(), String::from_utf8_lossy(&run.stderr)),
        );
    }

    let mut reader = csv::Reader::from_path(&csv_path).unwrap();
    let headers = reader.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (ecog, stage) = (col("ecog"), col("stage"));
    let frail: Vec<bool> = reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            matches!(&r[ecog], "Grade 2" | "Grade 3") || &r[stage] == "Unresectable Stage III"
        })
        .collect();

    let doc: Value = serde_json::from_slice(&std::fs::read(&doc_path).unwrap()).unwrap();
    let weights: Vec<f64> = doc["propensity"]["patients"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["weight"].as_f64().unwrap())
        .collect();
    let (mut frail_max, mut other_min) = (f64::MIN, f64::MAX);
    for (&f, &w) in frail.iter().zip(&weights) {
        if f {
            frail_max = frail_max.max(w);
        } else {
            other_min = other_min.min(w);
        }
    }
    let width = |key: &str| {
        let r = &doc["results"][key];
        r["q975"].as_f64().unwrap() - r["q025"].as_f64().unwrap()
    };
    let (w_propp, w_trial) = (width("propp"), width("trial_only"));
    let lowest = frail.len() == weights.len() && frail_max < other_min;
    check(
        lowest && w_propp < w_trial,
        format!(
            "{} frail patients, max weight {frail_max:.2e} < min other {other_min:.3}: {lowest}; \
             interval width ProPP {w_propp:.4} vs trial-only {w_trial:.4}; mean {:.4}",
            frail.iter().filter(|f| **f).count(),
            doc["results"]["propp"]["mean"].as_f64().unwrap()
        ),
    )
}

fn criterion_10(dir: &Path) -> Outcome {
    let csv_path = dir.join("det.csv");
    let runs: Vec<(String, Vec<String>)> = vec![
        ("demo-data".into(), vec!["demo-data", "--seed", "5", "--out", "{out}"].into_iter().map(String::from).collect()),
        ("analyze ignore".into(), analyze_args(&csv_path, "ignore")),
        ("analyze pool".into(), analyze_args(&csv_path, "pool")),
        ("analyze mpp".into(), analyze_args(&csv_path, "mpp")),
        ("analyze propp".into(), analyze_args(&csv_path, "propp")),
        ("analyze fixed:0.5".into(), analyze_args(&csv_path, "fixed:0.5")),
        ("analyze wang:0.2".into(), analyze_args(&csv_path, "wang:0.2")),
        (
            "simulate".into(),
            ["simulate", "--scenario", "mixture", "--replicates", "20", "--grid", "-0.5,0", "--seed", "5", "--out", "{out}"]
                .into_iter()
                .map(String::from)
                .collect(),
        ),
    ];
    let setup = propp_bin(&["demo-data", "--seed", "5", "--out", s(&csv_path)]);
    if setup.status.code() != Some(0) {
        return check(false, "demo-data failed");
    }
    let mut failures = Vec::new();
    for (i, (name, args)) in runs.iter().enumerate() {
        let outputs: Vec<Option<Vec<u8>>> = (0..2)
            .map(|k| {
                let out = dir.join(format!("det_{i}_{k}"));
                let args: Vec<String> = args.iter().map(|a| a.replace("{out}", s(&out))).collect();
                let refs: Vec<&str> = args.iter().map(String::as_str).collect();
                let res = propp_bin(&refs);
                (res.status.code() == Some(0)).then(|| std::fs::read(&out).unwrap())
            })
            .collect();
        match (&outputs[0], &outputs[1]) {
            (Some(a), Some(b)) if a == b => {}
            _ => failures.push(name.clone()),
        }
    }
    check(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{} commands byte-identical across repeated runs", runs.len())
        } else {
            format!("not reproducible: {}", failures.join(", "))
        },
    )
}

fn analyze_args(data: &Path, method: &str) -> Vec<String> {
    ["analyze", "--data", s(data), "--method", method, "--seed", "5", "--out", "{out}"]
        .into_iter()
        .map(String::from)
        .collect()
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAIL"
    }
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("exact conjugate reproduction", Box::new(criterion_1)),
        ("ProPP ≡ MPP with unit weights", Box::new(criterion_2)),
        ("δ sampler against grid oracle", Box::new(criterion_3)),
        ("fixed-power degeneracy chain", Box::new(criterion_4)),
        ("drift operating characteristics", Box::new(criterion_5)),
        ("large-external protection", Box::new(criterion_6)),
        ("mixture scenario ordering", Box::new(criterion_7)),
        ("covariate balance after weighting", Box::new(criterion_8)),
        ("demo pipeline", Box::new(|| criterion_9(dir.path()))),
        ("CLI determinism", Box::new(|| criterion_10(dir.path()))),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        if !outcome.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {} {name}: {} ({:.1}s)",
            i + 1,
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
