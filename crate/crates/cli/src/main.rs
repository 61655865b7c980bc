use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use setpoll::bounds::{
    coalition_report, constrained_bounds, dempster_bounds, parse_coalitions, AllocationConstraint, IntervalForecast,
    Majority, MAJORITY_THRESHOLD,
};
use setpoll::forecast::{
    conventional_forecast, homogeneity_forecast, seat_share, seat_share_intervals, ForecastOutput, Method,
};
use setpoll::mnl::FitOptions;
use setpoll::ontic::{build_ontic_categories, default_ontic_grid, fit_ontic, regularization_path};
use setpoll::party::{PartyRegistry, PartySet};
use setpoll::sim::{
    coverage_check, generate_population, parse_coefficients, wave_coefficients, wave_fixture, wave_registry, wave_schema,
    CoarseningStyle, SimConfig,
};
use setpoll::survey::{parse_survey, undecided_groups, validate, Survey};

mod svg;

use svg::{bar_chart, Bar};

#[derive(Parser)]
#[command(name = "setpoll", version, about = "Forecasts and bounds for polls with set-valued answers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample size, undecided share and the largest undecided groups.
    Describe {
        #[command(flatten)]
        common: Common,
        /// Number of undecided groups to list.
        #[arg(long, default_value_t = 15)]
        top: usize,
    },
    /// Point forecast of vote shares.
    Forecast {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = MethodArg::Conventional)]
        method: MethodArg,
        #[command(flatten)]
        seats: Seats,
    },
    /// Per-option share intervals.
    Bounds {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        constraint: ConstraintArgs,
        #[command(flatten)]
        seats: Seats,
    },
    /// Share intervals and majority classes for coalitions.
    Coalitions {
        #[command(flatten)]
        common: Common,
        /// File with one `name,CODE;CODE` line per coalition.
        #[arg(long)]
        coalitions: PathBuf,
        #[command(flatten)]
        constraint: ConstraintArgs,
        #[arg(long, default_value_t = MAJORITY_THRESHOLD)]
        threshold: f64,
    },
    /// Fits the model with undecided groups as categories of their own.
    Ontic {
        #[command(flatten)]
        common: Common,
        /// Number of undecided groups modeled as categories.
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Writes the regularization path (CSV) here.
        #[arg(long)]
        path_out: Option<PathBuf>,
    },
    /// Generates a synthetic survey with known latent votes.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct Common {
    /// Survey CSV with `weight`, `parties` and covariate columns.
    #[arg(long)]
    input: PathBuf,
    /// Option codes, comma separated, or `@FILE` with one code per line.
    #[arg(long)]
    registry: String,
    /// Covariate column names, comma separated, or `@FILE`.
    #[arg(long)]
    schema: Option<String>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Destination (standard output if absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConstraintArgs {
    /// Smallest share any member of a set receives.
    #[arg(long, requires = "beta")]
    alpha: Option<f64>,
    /// Largest share any member of a set receives.
    #[arg(long, requires = "alpha")]
    beta: Option<f64>,
}

#[derive(Args)]
struct Seats {
    /// Renormalize over these option codes (comma separated), e.g. the
    /// options that clear an electoral threshold.
    #[arg(long)]
    seats: Option<String>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Svg,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Conventional,
    Homogeneity,
}

#[derive(Clone, Copy, ValueEnum)]
enum StyleArg {
    AddRandom,
    Neighbor,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Wave3,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Describe { common, top } => describe(&common, top),
        Command::Forecast { common, method, seats } => forecast(&common, method, &seats),
        Command::Bounds { common, constraint, seats } => bounds(&common, &constraint, &seats),
        Command::Coalitions { common, coalitions, constraint, threshold } => {
            coalitions_cmd(&common, &coalitions, &constraint, threshold)
        }
        Command::Ontic { common, k, folds, seed, path_out } => ontic(&common, k, folds, seed, path_out.as_deref()),
        Command::Simulate(args) => simulate(args),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn list_arg(value: &str) -> Result<String> {
    match value.strip_prefix('@') {
        Some(path) => read(Path::new(path)),
        None => Ok(value.to_string()),
    }
}

fn load(common: &Common) -> Result<Survey> {
    let registry = PartyRegistry::parse_list(&list_arg(&common.registry)?).context("--registry")?;
    let schema: Vec<String> = match &common.schema {
        Some(s) => list_arg(s)?.split([',', '\n']).map(str::trim).filter(|c| !c.is_empty()).map(String::from).collect(),
        None => Vec::new(),
    };
    let text = read(&common.input)?;
    let survey = parse_survey(&text, &registry, &schema).with_context(|| common.input.display().to_string())?;
    for (line, message) in &survey.diagnostics().warnings {
        eprintln!("warning: {}: line {line}: {message}", common.input.display());
    }
    if survey.is_empty() {
        bail!("{}: no respondents", common.input.display());
    }
    Ok(survey)
}

fn emit(out: Option<&Path>, content: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, content).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(content.as_bytes()).and_then(|_| stdout.flush()).context("writing standard output")
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row
            .into_iter()
            .map(|c| if c.contains([',', '"', '\n']) { format!("\"{}\"", c.replace('"', "\"\"")) } else { c })
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn included_set(registry: &PartyRegistry, seats: &Seats) -> Result<Option<PartySet>> {
    seats
        .seats
        .as_deref()
        .map(|codes| {
            let codes: Vec<&str> = codes.split(',').map(str::trim).filter(|c| !c.is_empty()).collect();
            registry.set_from_codes(&codes).context("--seats")
        })
        .transpose()
}

fn constraint_of(args: &ConstraintArgs) -> Result<Option<AllocationConstraint>> {
    match (args.alpha, args.beta) {
        (Some(a), Some(b)) => {
            Ok(Some(AllocationConstraint::new(a, b).context("--alpha/--beta need 0 <= alpha <= beta <= 1")?))
        }
        (None, None) => Ok(None),
        _ => bail!("--alpha and --beta must be given together"),
    }
}

#[derive(Serialize)]
struct GroupRow {
    set: String,
    count: usize,
    weight: f64,
}

#[derive(Serialize)]
struct DescribeReport {
    wave: String,
    n: usize,
    n_decided: usize,
    n_undecided: usize,
    total_weight: f64,
    undecided_share_unweighted: Option<f64>,
    undecided_share_weighted: Option<f64>,
    missing_covariates: usize,
    dropped_rows: usize,
    groups: Vec<GroupRow>,
}

fn describe(common: &Common, top: usize) -> Result<()> {
    let s = load(common)?;
    let v = validate(&s);
    let groups: Vec<GroupRow> = undecided_groups(&s)
        .into_iter()
        .take(top)
        .map(|g| GroupRow { set: s.registry().format_set(g.set), count: g.count, weight: g.weight })
        .collect();
    eprintln!(
        "n: {}, undecided: {} ({:.4} unweighted, {:.4} weighted)",
        v.n,
        v.n_undecided,
        v.undecided_share_unweighted.unwrap_or(0.0),
        v.undecided_share_weighted.unwrap_or(0.0)
    );
    let report = DescribeReport {
        wave: s.wave().to_string(),
        n: v.n,
        n_decided: v.n_decided,
        n_undecided: v.n_undecided,
        total_weight: v.total_weight,
        undecided_share_unweighted: v.undecided_share_unweighted,
        undecided_share_weighted: v.undecided_share_weighted,
        missing_covariates: v.missing_covariates,
        dropped_rows: v.dropped_rows,
        groups,
    };
    let content = match common.format {
        Format::Json => to_json(&report)?,
        Format::Csv => csv_table(
            &["set", "count", "weight"],
            report.groups.iter().map(|g| vec![g.set.clone(), g.count.to_string(), g.weight.to_string()]),
        ),
        Format::Svg => {
            let largest = report.groups.first().map_or(1, |g| g.count).max(1) as f64;
            let bars: Vec<Bar> =
                report.groups.iter().map(|g| Bar::Point { label: &g.set, value: g.count as f64 }).collect();
            bar_chart("Largest undecided groups (respondents)", &bars, largest)
        }
    };
    emit(common.out.as_deref(), &content)
}

fn forecast(common: &Common, method: MethodArg, seats: &Seats) -> Result<()> {
    let s = load(common)?;
    let included = included_set(s.registry(), seats)?;
    let (method, shares) = match method {
        MethodArg::Conventional => (Method::Conventional, conventional_forecast(&s)?),
        MethodArg::Homogeneity => {
            if s.schema().is_empty() {
                bail!("the homogeneity forecast needs covariates; name them with --schema");
            }
            let h = homogeneity_forecast(&s, &FitOptions::default())?;
            if !h.report.converged {
                eprintln!("warning: fit stopped after {} iterations without converging", h.report.iterations);
            }
            if h.fallback_count > 0 {
                eprintln!(
                    "warning: {} undecided respondents without covariates used the intercept-only model",
                    h.fallback_count
                );
            }
            (Method::Homogeneity, h.forecast)
        }
    };
    let shares = match included {
        Some(set) => seat_share(&shares, set)?,
        None => shares,
    };
    let content = match common.format {
        Format::Json => {
            to_json(&ForecastOutput { method, shares, n_decided: s.n_decided(), n_undecided: s.n_undecided() })?
        }
        Format::Csv => csv_table(&["option", "share"], shares.iter().map(|(c, v)| vec![c.to_string(), v.to_string()])),
        Format::Svg => {
            let bars: Vec<Bar> = shares.iter().map(|(c, v)| Bar::Point { label: c, value: v }).collect();
            bar_chart("Forecast vote shares", &bars, 1.0)
        }
    };
    emit(common.out.as_deref(), &content)
}

fn interval_content(format: Format, title: &str, f: &IntervalForecast, extra: serde_json::Value) -> Result<String> {
    Ok(match format {
        Format::Json => {
            let mut doc = json!({ "intervals": f });
            if let (Some(obj), serde_json::Value::Object(more)) = (doc.as_object_mut(), extra) {
                obj.extend(more);
            }
            to_json(&doc)?
        }
        Format::Csv => csv_table(
            &["option", "lower", "upper"],
            f.iter().map(|(c, i)| vec![c.to_string(), i.lower.to_string(), i.upper.to_string()]),
        ),
        Format::Svg => {
            let bars: Vec<Bar> =
                f.iter().map(|(c, i)| Bar::Interval { label: c, lower: i.lower, upper: i.upper, note: None }).collect();
            bar_chart(title, &bars, 1.0)
        }
    })
}

fn bounds(common: &Common, constraint: &ConstraintArgs, seats: &Seats) -> Result<()> {
    let s = load(common)?;
    let c = constraint_of(constraint)?;
    let included = included_set(s.registry(), seats)?;
    let f = match c {
        Some(c) => constrained_bounds(&s, c)?,
        None => dempster_bounds(&s)?,
    };
    let f = match included {
        Some(set) => seat_share_intervals(&f, set)?,
        None => f,
    };
    let title = match c {
        Some(c) => format!("Share bounds, allocation limits [{}, {}]", c.alpha, c.beta),
        None => "Dempster bounds".to_string(),
    };
    let extra = json!({ "constraint": c, "seats": seats.seats });
    emit(common.out.as_deref(), &interval_content(common.format, &title, &f, extra)?)
}

fn coalitions_cmd(common: &Common, file: &Path, constraint: &ConstraintArgs, threshold: f64) -> Result<()> {
    let s = load(common)?;
    let c = constraint_of(constraint)?;
    let specs = parse_coalitions(&read(file)?, s.registry()).with_context(|| file.display().to_string())?;
    let results = coalition_report(&s, &specs, c, threshold)?;
    let guaranteed = results.iter().filter(|r| r.classification == Majority::Guaranteed).count();
    let possible = results.iter().filter(|r| r.classification == Majority::Possible).count();
    let summary = format!("guaranteed: {guaranteed}, possible: {possible}");
    eprintln!("{summary}");
    let content = match common.format {
        Format::Json => to_json(&json!({
            "threshold": threshold,
            "constraint": c,
            "coalitions": results,
            "summary": summary,
        }))?,
        Format::Csv => csv_table(
            &["coalition", "lower", "upper", "classification"],
            results.iter().map(|r| {
                vec![
                    r.name.clone(),
                    r.interval.lower.to_string(),
                    r.interval.upper.to_string(),
                    r.classification.to_string(),
                ]
            }),
        ),
        Format::Svg => {
            let notes: Vec<String> = results.iter().map(|r| r.classification.to_string()).collect();
            let bars: Vec<Bar> = results
                .iter()
                .zip(&notes)
                .map(|(r, n)| Bar::Interval {
                    label: &r.name,
                    lower: r.interval.lower,
                    upper: r.interval.upper,
                    note: Some(n),
                })
                .collect();
            bar_chart(&format!("Coalition shares ({summary})"), &bars, 1.0)
        }
    };
    emit(common.out.as_deref(), &content)
}

fn ontic(common: &Common, k: usize, folds: usize, seed: u64, path_out: Option<&Path>) -> Result<()> {
    if common.format == Format::Svg {
        bail!("the ontic model has no SVG output; use --format json or csv");
    }
    let s = load(common)?;
    let (cats, dropped) = build_ontic_categories(&s, k);
    if cats.len() < s.registry().len() + k {
        eprintln!("warning: only {} undecided groups exist; using all of them", cats.len() - s.registry().len());
    }
    if dropped > 0 {
        eprintln!("{dropped} respondents outside the modeled categories were left out");
    }
    let options = FitOptions::default();
    let grid = default_ontic_grid(&s, &cats)?;
    let fit = fit_ontic(&s, &cats, Some(&grid), folds, seed, &options)?;
    eprintln!("selected lambda: {}", fit.best_lambda);
    if let Some(path) = path_out {
        let path_csv = regularization_path(&s, &cats, &grid, &options)?.to_csv();
        fs::write(path, path_csv).with_context(|| format!("writing {}", path.display()))?;
    }
    let content = match common.format {
        Format::Json => to_json(&json!({
            "best_lambda": fit.best_lambda,
            "dropped": fit.dropped,
            "table": fit.table,
            "cv": { "lambdas": fit.cv.lambdas, "mean_validation_nll": fit.cv.mean_validation_nll },
        }))?,
        _ => fit.table.to_csv(),
    };
    emit(common.out.as_deref(), &content)
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0.2)]
    q: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = StyleArg::AddRandom)]
    style: StyleArg,
    /// Draw respondent weights instead of using unit weights.
    #[arg(long)]
    weighted: bool,
    /// CSV of latent-vote coefficients: header `option,(Intercept),<covariates>`,
    /// one row per option. Defaults to a six-option, five-covariate design.
    #[arg(long)]
    coefficients: Option<PathBuf>,
    /// Emit the bundled wave-shaped fixture; other generation flags are ignored.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Survey CSV destination (standard output if absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ground-truth CSV destination.
    #[arg(long)]
    truth_out: Option<PathBuf>,
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let (survey, truth) = match args.preset {
        Some(Preset::Wave3) => wave_fixture(),
        None => {
            let (registry, schema, coefficients) = match &args.coefficients {
                Some(path) => parse_coefficients(&read(path)?).with_context(|| path.display().to_string())?,
                None => (wave_registry(), wave_schema(), wave_coefficients()),
            };
            let style = match args.style {
                StyleArg::AddRandom => CoarseningStyle::AddRandom,
                StyleArg::Neighbor => CoarseningStyle::Neighbor,
            };
            let config = SimConfig {
                registry,
                schema,
                n: args.n,
                coefficients,
                q: args.q,
                style,
                seed: args.seed,
                weighted: args.weighted,
            };
            generate_population(&config)?
        }
    };
    let report = coverage_check(&survey, &truth)?;
    emit(args.out.as_deref(), &survey.to_csv())?;
    if let Some(path) = &args.truth_out {
        fs::write(path, truth.to_csv()).with_context(|| format!("writing {}", path.display()))?;
    }
    eprintln!(
        "respondents: {}, undecided: {}, events checked: {}",
        survey.len(),
        survey.n_undecided(),
        report.events_checked
    );
    for m in &report.margins {
        eprintln!("  {}: true share {:.4}, margin {:.4}", m.option, m.share, m.margin);
    }
    eprintln!("violations: {}", report.violations.len());
    if !report.violations.is_empty() {
        bail!("ground truth fell outside the bounds");
    }
    Ok(())
}
