//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Failures are reported but do not fail `cargo test` unless
//! `ACCEPTANCE_STRICT=1` is set.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use setpoll::bounds::{constrained_bounds, dempster_bounds, event_bounds, AllocationConstraint};
use setpoll::forecast::{conventional_forecast, homogeneity_forecast, transition_probabilities};
use setpoll::mnl::{
    fit, nll_and_gradient, predict_proba, prox_group, Constraint, DesignData, FitOptions, Init, MnlModel, PenaltySpec,
};
use setpoll::ontic::{build_ontic_categories, default_ontic_grid, fit_ontic, regularization_path};
use setpoll::party::{PartyRegistry, PartySet};
use setpoll::sim::{
    coverage_check, generate_population, oracle_completion_bounds, oracle_constrained_bounds, random_small_survey,
    wave_coefficients, wave_fixture, wave_registry, wave_schema, CoarseningStyle, CorpusSpec, SimConfig,
    WAVE_FIXTURE_N, WAVE_FIXTURE_UNDECIDED,
};
use setpoll::survey::{parse_survey, undecided_share, Survey};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn random_events(rng: &mut ChaCha8Rng, k: usize, count: usize, min_size: usize) -> Vec<PartySet> {
    let full = (1u32 << k) - 1;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let e = PartySet::from_bits(rng.gen_range(1..=full)).unwrap();
        if e.len() >= min_size {
            out.push(e);
        }
    }
    out
}

fn random_constraint(rng: &mut ChaCha8Rng) -> AllocationConstraint {
    let a: f64 = rng.gen_range(0.0..0.5);
    let b: f64 = rng.gen_range(a.max(0.3)..=1.0);
    AllocationConstraint::new(a, b).unwrap()
}

fn dempster_oracle() -> Outcome {
    let start = Instant::now();
    let mut compared = 0;
    let mut mismatches = Vec::new();
    for seed in 0..200u64 {
        let s = random_small_survey(seed, &CorpusSpec::default());
        let k = s.registry().len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let per_option = dempster_bounds(&s).map_err(|e| e.to_string())?;
        let mut events: Vec<PartySet> = (0..k).map(PartySet::singleton).collect();
        events.extend(random_events(&mut rng, k, 5, 1));
        for e in events {
            let oracle = oracle_completion_bounds(&s, e).map_err(|e| e.to_string())?;
            let closed = event_bounds(&s, e, None).map_err(|e| e.to_string())?;
            let mut same = closed.lower.to_bits() == oracle.lower.to_bits()
                && closed.upper.to_bits() == oracle.upper.to_bits();
            if let Some(j) = e.only() {
                same &= per_option.intervals[j] == oracle;
            }
            compared += 1;
            if !same {
                mismatches.push(format!("seed {seed} event {:#b}", e.bits()));
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        mismatches.is_empty() && elapsed < Duration::from_secs(60),
        format!("{compared} events, {} mismatches {:?}, {:.1}s (limit 60s)", mismatches.len(), mismatches.first(), elapsed.as_secs_f64()),
    )
}

fn constrained_oracle() -> Outcome {
    const STEP: f64 = 0.01;
    let start = Instant::now();
    // sets of five members would need 100^4 grid points each
    let spec = CorpusSpec { max_set_size: 4, ..CorpusSpec::default() };
    let mut compared = 0;
    let mut worst: f64 = 0.0;
    let mut escapes = 0;
    for seed in 0..100u64 {
        let s = random_small_survey(seed, &spec);
        let k = s.registry().len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc0a1);
        let c = match seed % 4 {
            0 => AllocationConstraint::new(0.2, 0.8).unwrap(),
            1 => AllocationConstraint::VACUOUS,
            _ => random_constraint(&mut rng),
        };
        let per_option = constrained_bounds(&s, c).map_err(|e| e.to_string())?;
        let mut events: Vec<PartySet> = (0..k).map(PartySet::singleton).collect();
        events.extend(random_events(&mut rng, k, 5, 2));
        for e in events {
            let closed = match e.only() {
                Some(j) => per_option.intervals[j],
                None => event_bounds(&s, e, Some(c)).map_err(|e| e.to_string())?,
            };
            let oracle = oracle_constrained_bounds(&s, e, c, STEP).map_err(|e| format!("seed {seed}: {e}"))?;
            worst = worst.max((closed.lower - oracle.lower).abs()).max((closed.upper - oracle.upper).abs());
            if oracle.lower < closed.lower - 1e-9 || oracle.upper > closed.upper + 1e-9 {
                escapes += 1;
            }
            compared += 1;
        }
    }
    let elapsed = start.elapsed();
    check(
        worst <= STEP && escapes == 0 && elapsed < Duration::from_secs(300),
        format!(
            "{compared} events, max gap {worst:.5} (limit {STEP}), {escapes} oracle values outside, {:.1}s (limit 300s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn coverage() -> Outcome {
    let mut populations = 0;
    let mut events = 0;
    let mut violations = 0;
    let mut min_margin = f64::INFINITY;
    for q in [0.1, 0.3, 0.6] {
        for seed in 0..1000u64 {
            let config = SimConfig {
                registry: wave_registry(),
                schema: wave_schema(),
                n: 500,
                coefficients: wave_coefficients(),
                q,
                style: if seed % 2 == 0 { CoarseningStyle::Neighbor } else { CoarseningStyle::AddRandom },
                seed,
                weighted: seed % 3 == 0,
            };
            let (s, truth) = generate_population(&config).map_err(|e| e.to_string())?;
            let report = coverage_check(&s, &truth).map_err(|e| e.to_string())?;
            populations += 1;
            events += report.events_checked;
            violations += report.violations.len();
            min_margin = report.margins.iter().map(|m| m.margin).fold(min_margin, f64::min);
        }
    }
    check(
        violations == 0,
        format!("{populations} populations, {events} events, {violations} violations, smallest option margin {min_margin:.4}"),
    )
}

fn nesting_and_duality() -> Outcome {
    let mut checked = 0;
    let mut worst_duality: f64 = 0.0;
    let mut escapes = 0;
    for seed in 0..200u64 {
        let s = random_small_survey(seed, &CorpusSpec::default());
        let k = s.registry().len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd0a1);
        let constraints = [AllocationConstraint::new(0.2, 0.8).unwrap(), random_constraint(&mut rng)];
        for bits in 1..(1u32 << k) {
            let e = PartySet::from_bits(bits).unwrap();
            let d = event_bounds(&s, e, None).map_err(|e| e.to_string())?;
            for c in constraints {
                let ci = event_bounds(&s, e, Some(c)).map_err(|e| e.to_string())?;
                if ci.lower > ci.upper || !ci.is_within(&d, 1e-12) {
                    escapes += 1;
                }
            }
            if let Some(comp) = e.complement(k) {
                let dc = event_bounds(&s, comp, None).map_err(|e| e.to_string())?;
                worst_duality = worst_duality.max((d.upper - (1.0 - dc.lower)).abs());
                for c in constraints {
                    let a = event_bounds(&s, e, Some(c)).map_err(|e| e.to_string())?;
                    let b = event_bounds(&s, comp, Some(c)).map_err(|e| e.to_string())?;
                    worst_duality = worst_duality.max((a.upper - (1.0 - b.lower)).abs());
                }
            }
            checked += 1;
        }
    }
    check(
        escapes == 0 && worst_duality <= 1e-12,
        format!("{checked} events over 200 surveys, {escapes} constrained intervals outside, max duality gap {worst_duality:.1e}"),
    )
}

fn toy() -> Survey {
    let r = PartyRegistry::new(["A", "B", "C"]).unwrap();
    parse_survey("weight,parties\n1,A\n1,A\n1,B\n1,A;B\n1,C\n", &r, &[]).unwrap()
}

fn homogeneity_consistency() -> Outcome {
    let options = FitOptions::default();
    let mut outside = 0;
    let mut worst_degenerate: f64 = 0.0;
    for seed in 0..200u64 {
        let s = random_small_survey(seed, &CorpusSpec::default());
        let h = homogeneity_forecast(&s, &options).map_err(|e| e.to_string())?;
        let d = dempster_bounds(&s).map_err(|e| e.to_string())?;
        outside += d.iter().enumerate().filter(|(j, (_, i))| !i.contains(h.forecast.shares[*j], 1e-12)).count();

        let decided = s.filtered(|r| r.is_decided());
        let h = homogeneity_forecast(&decided, &options).map_err(|e| e.to_string())?;
        let c = conventional_forecast(&decided).map_err(|e| e.to_string())?;
        for (a, b) in h.forecast.shares.iter().zip(&c.shares) {
            worst_degenerate = worst_degenerate.max((a - b).abs());
        }
    }
    let f = homogeneity_forecast(&toy(), &options).map_err(|e| e.to_string())?.forecast.shares;
    let expected = [8.0 / 15.0, 4.0 / 15.0, 0.2];
    let toy_err = f.iter().zip(expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    check(
        outside == 0 && worst_degenerate <= 1e-12 && toy_err <= 1e-6,
        format!(
            "{outside} shares outside bounds, no-undecided gap {worst_degenerate:.1e}, fixture ({:.4}, {:.4}, {:.4}) error {toy_err:.1e}",
            f[0], f[1], f[2]
        ),
    )
}

fn transition_unit() -> Outcome {
    // intercept-only MLE in closed form: intercepts are centered log shares
    let shares = [0.5, 0.25, 0.25];
    let logs: Vec<f64> = shares.iter().map(|v: &f64| v.ln()).collect();
    let mean = logs.iter().sum::<f64>() / 3.0;
    let mut m = MnlModel::zeros(3, 1, Constraint::Symmetric);
    m.coefficients = Array2::from_shape_fn((3, 1), |(k, _)| logs[k] - mean);
    let t = transition_probabilities(&m, &toy()).map_err(|e| e.to_string())?;
    let row = &t.rows[3];
    let err = (row[0] - 2.0 / 3.0).abs().max((row[1] - 1.0 / 3.0).abs()).max(row[2].abs());
    check(err <= 1e-12, format!("row for {{A,B}} = ({:.15}, {:.15}, {}), error {err:.1e}", row[0], row[1], row[2]))
}

fn random_design(rng: &mut ChaCha8Rng, n: usize, k: usize, p: usize) -> DesignData {
    let mut flat = Vec::with_capacity(n * p);
    for _ in 0..n {
        flat.push(1.0);
        for _ in 1..p {
            flat.push(rng.gen_range(0..2) as f64);
        }
    }
    let x = Array2::from_shape_vec((n, p), flat).unwrap();
    let mut y: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
    // every category observed
    for (i, label) in y.iter_mut().take(k).enumerate() {
        *label = i;
    }
    let w = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
    DesignData::new(x, y, w, k).unwrap()
}

fn finite_difference_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = random_design(&mut rng, 5, 3, 3);
    let coefficients = Array2::from_shape_fn((3, 3), |_| rng.gen_range(-1.0..1.0));
    let m = MnlModel { coefficients, constraint: Constraint::Symmetric, penalty: PenaltySpec::None };
    let h = 1e-5;
    let mut fd = Array2::zeros(m.coefficients.dim());
    for idx in ndarray::indices(m.coefficients.dim()) {
        let mut plus = m.clone();
        plus.coefficients[idx] += h;
        let mut minus = m.clone();
        minus.coefficients[idx] -= h;
        fd[idx] = (nll_and_gradient(&plus, &d).unwrap().0 - nll_and_gradient(&minus, &d).unwrap().0) / (2.0 * h);
    }
    m.constraint.project(&mut fd);
    let (_, g) = nll_and_gradient(&m, &d).unwrap();
    let diff = (&g - &fd).mapv(|v| v * v).sum().sqrt();
    diff / fd.mapv(|v| v * v).sum().sqrt().max(1e-12)
}

fn intercept_mle_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1e);
    let d = random_design(&mut rng, 60, 4, 1);
    let options = FitOptions { init: Init::Zero, ..FitOptions::default() };
    let (m, _) = fit(&d, PenaltySpec::None, Constraint::Symmetric, &options).unwrap();
    let p = predict_proba(&m, &[1.0]).unwrap();
    let cw = d.category_weights();
    let total: f64 = cw.iter().sum();
    p.iter().zip(&cw).map(|(a, w)| (a - w / total).abs()).fold(0.0, f64::max)
}

/// Argmin of `obj` over a grid of spacing `step` centered near `center`.
fn grid_argmin(obj: &dyn Fn(f64, f64) -> f64, center: (f64, f64), half: f64, step: f64) -> (f64, f64) {
    let n = (half / step).round() as i64;
    let (ca, cb) = ((center.0 / step).round(), (center.1 / step).round());
    let mut best = (f64::INFINITY, (0.0, 0.0));
    for i in -n..=n {
        let a = (ca + i as f64) * step;
        for j in -n..=n {
            let b = (cb + j as f64) * step;
            let o = obj(a, b);
            if o < best.0 {
                best = (o, (a, b));
            }
        }
    }
    best.1
}

fn prox_grid_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let v = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let t = rng.gen_range(0.0..2.0);
        let obj = |a: f64, b: f64| 0.5 * ((a - v[0]).powi(2) + (b - v[1]).powi(2)) + t * (a * a + b * b).sqrt();
        let coarse = grid_argmin(&obj, (0.0, 0.0), 3.0, 1e-2);
        let fine = grid_argmin(&obj, coarse, 2e-2, 1e-5);
        let u = prox_group(&v, t);
        worst = worst.max((u[0] - fine.0).abs()).max((u[1] - fine.1).abs());
    }
    worst
}

fn path_monotonicity() -> Result<(usize, f64), String> {
    let config = SimConfig {
        registry: wave_registry(),
        schema: wave_schema(),
        n: 2000,
        coefficients: wave_coefficients(),
        q: 0.2,
        style: CoarseningStyle::Neighbor,
        seed: 5,
        weighted: false,
    };
    let (s, _) = generate_population(&config).map_err(|e| e.to_string())?;
    let (cats, _) = build_ontic_categories(&s, 5);
    let grid = default_ontic_grid(&s, &cats).map_err(|e| e.to_string())?;
    let path = regularization_path(&s, &cats, &grid, &FitOptions::default()).map_err(|e| e.to_string())?;
    // the grid descends, so norms may only grow along it
    let mut worst_rise: f64 = 0.0;
    for w in path.norms.windows(2) {
        for (before, after) in w[0].iter().zip(&w[1]) {
            worst_rise = worst_rise.max(before - after);
        }
    }
    Ok((path.lambdas.len(), worst_rise))
}

fn optimizer() -> Outcome {
    let fd = (0..5).map(finite_difference_error).fold(0.0, f64::max);
    let mle = (0..5).map(intercept_mle_error).fold(0.0, f64::max);
    let prox = prox_grid_error();
    let (points, rise) = path_monotonicity()?;
    check(
        fd < 1e-6 && mle <= 1e-6 && prox <= 1e-4 && points == 20 && rise <= 1e-6,
        format!(
            "gradient rel err {fd:.1e}, intercept MLE err {mle:.1e}, prox vs grid {prox:.1e}, path {points} points max norm rise {rise:.1e}"
        ),
    )
}

fn ontic_recovery() -> Outcome {
    let options = FitOptions::default();
    let nulls = ["high_income", "urban"];
    let actives = ["female", "age_65_plus", "east"];
    let mut hits = 0;
    let mut actives_kept = 0;
    let mut hits_with_actives = 0;
    for seed in 0..20u64 {
        let config = SimConfig {
            registry: wave_registry(),
            schema: wave_schema(),
            n: 3000,
            coefficients: wave_coefficients(),
            q: 0.2,
            style: CoarseningStyle::Neighbor,
            seed,
            weighted: false,
        };
        let (s, _) = generate_population(&config).map_err(|e| e.to_string())?;
        let (cats, _) = build_ontic_categories(&s, 5);
        let f = fit_ontic(&s, &cats, None, 5, seed, &options).map_err(|e| e.to_string())?;
        let zeroed = |c: &str| f.table.is_zeroed(c).unwrap_or(false);
        let hit = nulls.iter().all(|c| zeroed(c));
        let kept = actives.iter().all(|c| !zeroed(c));
        hits += usize::from(hit);
        actives_kept += usize::from(kept);
        hits_with_actives += usize::from(hit && kept);
    }
    let (fixture, _) = wave_fixture();
    let (cats, _) = build_ontic_categories(&fixture, 5);
    let f = fit_ontic(&fixture, &cats, None, 5, 0, &options).map_err(|e| e.to_string())?;
    let shape = (f.table.categories.len(), f.table.columns.len());
    check(
        hits >= 16 && shape == (11, 6),
        format!(
            "both null groups zeroed in {hits}/20 runs (need 16), all active groups kept in {actives_kept}/20, both in {hits_with_actives}/20; table {}x{} (need 11x6)",
            shape.0, shape.1
        ),
    )
}

fn setpoll(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_setpoll")).args(args).output().expect("binary runs")
}

fn fixture_shape() -> Outcome {
    let registry_text = std::fs::read_to_string(data("wave3_registry.txt")).map_err(|e| e.to_string())?;
    let registry = PartyRegistry::parse_list(&registry_text.split_whitespace().collect::<Vec<_>>().join(","))
        .map_err(|e| e.to_string())?;
    let text = std::fs::read_to_string(data("wave3.csv")).map_err(|e| e.to_string())?;
    let s = parse_survey(&text, &registry, &wave_schema()).map_err(|e| e.to_string())?;
    let (u, _) = undecided_share(&s).map_err(|e| e.to_string())?;
    let expected = WAVE_FIXTURE_UNDECIDED as f64 / WAVE_FIXTURE_N as f64;

    let reg = format!("@{}", data("wave3_registry.txt").display());
    let out = setpoll(&["describe", "--input", data("wave3.csv").to_str().unwrap(), "--registry", &reg, "--top", "15", "--format", "csv"]);
    let rows = String::from_utf8_lossy(&out.stdout).lines().count().saturating_sub(1);
    check(
        s.len() == 4730 && s.n_undecided() == 533 && u == expected && format!("{u:.4}") == "0.1127" && out.status.success() && rows == 15,
        format!("{} of {} undecided, share {u:.4}; describe --top 15 emitted {rows} rows", s.n_undecided(), s.len()),
    )
}

fn determinism() -> Outcome {
    let wave = data("wave3.csv").display().to_string();
    let reg = format!("@{}", data("wave3_registry.txt").display());
    let coalitions = data("wave3_coalitions.txt").display().to_string();
    let toy = data("toy_covariates.csv").display().to_string();
    let schema = "female,age_65_plus,east,high_income,urban";
    let runs: Vec<(&str, Vec<String>)> = vec![
        ("describe", vec!["describe".into(), "--input".into(), wave.clone(), "--registry".into(), reg.clone(), "--schema".into(), schema.into()]),
        ("forecast", vec!["forecast".into(), "--input".into(), wave.clone(), "--registry".into(), reg.clone(), "--format".into(), "csv".into()]),
        ("forecast-homogeneity", vec!["forecast".into(), "--input".into(), toy.clone(), "--registry".into(), "A,B,C".into(), "--schema".into(), "x".into(), "--method".into(), "homogeneity".into()]),
        ("bounds", vec!["bounds".into(), "--input".into(), wave.clone(), "--registry".into(), reg.clone(), "--alpha".into(), "0.2".into(), "--beta".into(), "0.8".into(), "--format".into(), "svg".into()]),
        ("coalitions", vec!["coalitions".into(), "--input".into(), wave.clone(), "--registry".into(), reg.clone(), "--coalitions".into(), coalitions]),
        ("ontic", vec!["ontic".into(), "--input".into(), wave.clone(), "--registry".into(), reg.clone(), "--schema".into(), schema.into(), "--seed".into(), "4".into(), "--path-out".into(), "{dir}/path.csv".into()]),
        ("simulate", vec!["simulate".into(), "--n".into(), "800".into(), "--q".into(), "0.3".into(), "--seed".into(), "9".into(), "--weighted".into(), "--truth-out".into(), "{dir}/truth.csv".into()]),
    ];
    let mut differing = Vec::new();
    for (name, args) in &runs {
        let mut results = Vec::new();
        for _ in 0..2 {
            let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
            let d = dir.path().display().to_string();
            let args: Vec<String> = args.iter().map(|a| a.replace("{dir}", &d)).collect();
            let refs: Vec<&str> = args.iter().map(String::as_str).collect();
            let out = setpoll(&refs);
            if !out.status.success() {
                return Err(format!("{name} failed: {}", String::from_utf8_lossy(&out.stderr)));
            }
            let mut files = Vec::new();
            for f in ["path.csv", "truth.csv"] {
                files.push(std::fs::read(dir.path().join(f)).ok());
            }
            results.push((out.stdout, out.stderr, files));
        }
        if results[0] != results[1] {
            differing.push(*name);
        }
    }
    check(differing.is_empty(), format!("{} invocations run twice each, differing: {differing:?}", runs.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("oracle equivalence (Dempster)", dempster_oracle),
        ("oracle equivalence (constrained)", constrained_oracle),
        ("coverage", coverage),
        ("nesting and duality", nesting_and_duality),
        ("homogeneity consistency", homogeneity_consistency),
        ("transition row unit check", transition_unit),
        ("optimizer correctness", optimizer),
        ("ontic recovery", ontic_recovery),
        ("fixture shape", fixture_shape),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
