//! Synthetic populations with known latent votes.
//!
//! Every random draw comes from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded
//! with `seed_from_u64`, so output is identical across platforms.

mod oracle;

pub use oracle::{
    oracle_completion_bounds, oracle_constrained_bounds, COMPLETION_BUDGET, DEFAULT_GRID_STEP, GRID_BUDGET,
};

use ndarray::{array, Array2};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::dempster_bounds;
use crate::error::{Error, Result};
use crate::party::{PartyRegistry, PartySet};
use crate::survey::{Covariates, Respondent, Survey};

/// How a respondent who hides their vote widens it into a set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CoarseningStyle {
    /// Adds one or two other options chosen uniformly.
    AddRandom,
    /// Adds one or two other options drawn in proportion to the
    /// respondent's latent probabilities.
    Neighbor,
}

impl std::str::FromStr for CoarseningStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "add_random" => Ok(Self::AddRandom),
            "neighbor" => Ok(Self::Neighbor),
            _ => Err(Error::Invalid(format!("unknown coarsening style `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub registry: PartyRegistry,
    pub schema: Vec<String>,
    pub n: usize,
    /// Latent vote model, one row per option, intercept in column 0.
    pub coefficients: Array2<f64>,
    /// Chance that a respondent reports a set instead of their vote.
    pub q: f64,
    pub style: CoarseningStyle,
    pub seed: u64,
    /// Draw weights uniformly from `[0.5, 2)` instead of using unit weights.
    pub weighted: bool,
}

impl SimConfig {
    /// Three options, two covariates, moderate effects.
    pub fn example(n: usize, q: f64, seed: u64) -> Self {
        Self {
            registry: PartyRegistry::new(["A", "B", "C"]).expect("valid codes"),
            schema: vec!["x1".into(), "x2".into()],
            n,
            coefficients: array![[0.4, 0.8, -0.5], [0.0, -0.6, 0.7], [-0.4, -0.2, -0.2]],
            q,
            style: CoarseningStyle::AddRandom,
            seed,
            weighted: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Invalid("n must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.q) {
            return Err(Error::Invalid(format!("q must lie in [0, 1], got {}", self.q)));
        }
        let shape = (self.registry.len(), self.schema.len() + 1);
        if self.coefficients.dim() != shape {
            return Err(Error::Dimension(format!(
                "coefficients are {:?}, expected {:?}",
                self.coefficients.dim(),
                shape
            )));
        }
        if self.coefficients.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("coefficients"));
        }
        Ok(())
    }
}

/// Reads a latent-vote model: header `option,(Intercept),<covariates>`,
/// then one row of coefficients per option.
pub fn parse_coefficients(text: &str) -> Result<(PartyRegistry, Vec<String>, Array2<f64>)> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Parse { line: 1, message: e.to_string() })?.clone();
    if header.len() < 2 || &header[1] != "(Intercept)" {
        return Err(Error::Parse { line: 1, message: "header must start with `option,(Intercept)`".into() });
    }
    let schema: Vec<String> = header.iter().skip(2).map(String::from).collect();
    let mut codes = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        codes.push(record[0].to_string());
        for cell in record.iter().skip(1) {
            let v: f64 = cell.parse().map_err(|_| Error::Parse { line, message: format!("bad coefficient `{cell}`") })?;
            values.push(v);
        }
    }
    let registry = PartyRegistry::new(codes)?;
    let coefficients = Array2::from_shape_vec((registry.len(), header.len() - 1), values)
        .map_err(|e| Error::Dimension(e.to_string()))?;
    Ok((registry, schema, coefficients))
}

/// Latent votes behind a generated survey.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub registry: PartyRegistry,
    pub votes: Vec<usize>,
    pub weights: Vec<f64>,
}

impl GroundTruth {
    /// Weighted share of `event`, summed in respondent order.
    pub fn event_share(&self, event: PartySet) -> f64 {
        let mut acc = 0.0;
        for (&v, &w) in self.votes.iter().zip(&self.weights) {
            if event.contains(v) {
                acc += w;
            }
        }
        acc / self.weights.iter().sum::<f64>()
    }

    pub fn shares(&self) -> Vec<f64> {
        (0..self.registry.len()).map(|j| self.event_share(PartySet::singleton(j))).collect()
    }

    /// `respondent,vote` with the vote as an option code.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("respondent,vote\n");
        for (i, &v) in self.votes.iter().enumerate() {
            out.push_str(&format!("{i},{}\n", self.registry.code(v)));
        }
        out
    }
}

fn softmax_row(coefs: &Array2<f64>, x: &[f64]) -> Vec<f64> {
    let eta: Vec<f64> = coefs.outer_iter().map(|r| r.iter().zip(x).map(|(b, v)| b * v).sum()).collect();
    let max = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = eta.iter().map(|e| (e - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

fn draw_index(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let total: f64 = probs.iter().sum();
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (j, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

fn coarsen(rng: &mut ChaCha8Rng, vote: usize, probs: &[f64], style: CoarseningStyle) -> PartySet {
    let k = probs.len();
    let extra = rng.gen_range(1..=2usize).min(k - 1);
    let mut members = vec![vote];
    for _ in 0..extra {
        let candidates: Vec<f64> = (0..k)
            .map(|j| {
                if members.contains(&j) {
                    0.0
                } else {
                    match style {
                        CoarseningStyle::AddRandom => 1.0,
                        CoarseningStyle::Neighbor => probs[j],
                    }
                }
            })
            .collect();
        let candidates = if candidates.iter().sum::<f64>() > 0.0 {
            candidates
        } else {
            (0..k).map(|j| if members.contains(&j) { 0.0 } else { 1.0 }).collect()
        };
        members.push(draw_index(rng, &candidates));
    }
    PartySet::from_indices(members).expect("nonempty")
}

fn draw_respondent(rng: &mut ChaCha8Rng, c: &SimConfig) -> (Vec<u8>, Vec<f64>, usize, f64) {
    let cov: Vec<u8> = (0..c.schema.len()).map(|_| u8::from(rng.gen_bool(0.5))).collect();
    let x: Vec<f64> = std::iter::once(1.0).chain(cov.iter().map(|&v| f64::from(v))).collect();
    let probs = softmax_row(&c.coefficients, &x);
    let vote = draw_index(rng, &probs);
    let weight = if c.weighted { rng.gen_range(0.5..2.0) } else { 1.0 };
    (cov, probs, vote, weight)
}

/// Draws covariates, a latent vote from the covariate-conditional
/// multinomial logit and, with probability `q`, a reported set around it.
pub fn generate_population(c: &SimConfig) -> Result<(Survey, GroundTruth)> {
    c.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let mut respondents = Vec::with_capacity(c.n);
    let mut votes = Vec::with_capacity(c.n);
    let mut weights = Vec::with_capacity(c.n);
    for _ in 0..c.n {
        let (cov, probs, vote, weight) = draw_respondent(&mut rng, c);
        let set = if rng.gen_bool(c.q) { coarsen(&mut rng, vote, &probs, c.style) } else { PartySet::singleton(vote) };
        respondents.push(Respondent::new(weight, set, Some(Covariates::new(cov)?))?);
        votes.push(vote);
        weights.push(weight);
    }
    let survey = Survey::new(c.registry.clone(), c.schema.clone(), respondents, format!("sim-{}", c.seed))?;
    Ok((survey, GroundTruth { registry: c.registry.clone(), votes, weights }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageViolation {
    pub event: String,
    pub share: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptionMargin {
    pub option: String,
    pub share: f64,
    /// Distance from the true share to the nearer interval end.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub events_checked: usize,
    pub violations: Vec<CoverageViolation>,
    pub margins: Vec<OptionMargin>,
}

/// Events checked by [`coverage_check`]: every nonempty set of options for
/// registries up to ten options, otherwise singletons and pairs.
pub fn coverage_events(registry: &PartyRegistry) -> Vec<PartySet> {
    let k = registry.len();
    if k <= 10 {
        (1..(1u32 << k)).map(|b| PartySet::from_bits(b).expect("nonzero")).collect()
    } else {
        let mut events: Vec<PartySet> = (0..k).map(PartySet::singleton).collect();
        for i in 0..k {
            for j in i + 1..k {
                events.push(PartySet::from_indices([i, j]).expect("nonempty"));
            }
        }
        events
    }
}

/// Checks that the realized shares lie inside the Dempster intervals.
///
/// The comparison is exact: the true share sums a superset of the lower
/// bound's weights and a subset of the upper bound's, in the same order.
pub fn coverage_check(s: &Survey, g: &GroundTruth) -> Result<CoverageReport> {
    if g.votes.len() != s.len() {
        return Err(Error::Dimension(format!("{} votes for {} respondents", g.votes.len(), s.len())));
    }
    for (index, (r, &v)) in s.respondents().iter().zip(&g.votes).enumerate() {
        if !r.set.contains(v) {
            return Err(Error::Respondent { index, message: "latent vote outside the reported set".into() });
        }
    }
    let events = coverage_events(s.registry());
    let mut violations = Vec::new();
    for &e in &events {
        let share = g.event_share(e);
        let i = crate::bounds::event_bounds(s, e, None)?;
        if share < i.lower || share > i.upper {
            violations.push(CoverageViolation {
                event: s.registry().format_set(e),
                share,
                lower: i.lower,
                upper: i.upper,
            });
        }
    }
    let bounds = dempster_bounds(s)?;
    let margins = bounds
        .iter()
        .zip(g.shares())
        .map(|((code, i), share)| OptionMargin {
            option: code.to_string(),
            share,
            margin: (share - i.lower).min(i.upper - share),
        })
        .collect();
    Ok(CoverageReport { events_checked: events.len(), violations, margins })
}

/// Shape of the random surveys used for oracle comparisons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusSpec {
    pub max_n: usize,
    pub max_undecided: usize,
    pub max_set_size: usize,
    /// Cap on the product of undecided set sizes.
    pub completion_budget: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self { max_n: 30, max_undecided: 12, max_set_size: 5, completion_budget: 2e5 }
    }
}

/// A small random survey: 3 to 5 options, two binary covariates, at least
/// two decided respondents backing different options, and occasionally an
/// undecided respondent without covariates.
pub fn random_small_survey(seed: u64, spec: &CorpusSpec) -> Survey {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.gen_range(3..=5usize);
    let codes: Vec<String> = (1..=k).map(|i| format!("P{i}")).collect();
    let registry = PartyRegistry::new(codes).expect("valid codes");
    let n = rng.gen_range(4..=spec.max_n.max(4));
    let n_undecided = rng.gen_range(0..=spec.max_undecided.min(n - 2));
    let unit = rng.gen_bool(0.5);
    let max_set = spec.max_set_size.clamp(2, k);

    let mut respondents = Vec::with_capacity(n);
    let mut product = 1.0;
    for i in 0..n {
        let weight = if unit { 1.0 } else { rng.gen_range(0.1..3.0) };
        let cov = Covariates::new(vec![u8::from(rng.gen_bool(0.5)), u8::from(rng.gen_bool(0.5))]).expect("binary");
        let set = if i < 2 {
            PartySet::singleton(i)
        } else if i < 2 + n_undecided {
            let mut size = rng.gen_range(2..=max_set);
            while size > 2 && product * size as f64 > spec.completion_budget {
                size -= 1;
            }
            if product * size as f64 > spec.completion_budget {
                PartySet::singleton(rng.gen_range(0..k))
            } else {
                product *= size as f64;
                let members = sample(&mut rng, k, size);
                PartySet::from_indices(members.iter()).expect("nonempty")
            }
        } else {
            PartySet::singleton(rng.gen_range(0..k))
        };
        let covariates = if !set.is_singleton() && rng.gen_bool(0.1) { None } else { Some(cov) };
        respondents.push(Respondent::new(weight, set, covariates).expect("positive weight"));
    }
    // Fisher-Yates on the respondent order
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        respondents.swap(i, j);
    }
    Survey::new(registry, vec!["x1".into(), "x2".into()], respondents, format!("corpus-{seed}")).expect("valid survey")
}

pub const WAVE_FIXTURE_N: usize = 4730;
pub const WAVE_FIXTURE_UNDECIDED: usize = 533;
pub const WAVE_FIXTURE_SEED: u64 = 3;

/// Registry of the wave-shaped fixture.
pub fn wave_registry() -> PartyRegistry {
    PartyRegistry::new(["SPD", "CDU_CSU", "GRUENE", "FDP", "AFD", "LINKE"]).expect("valid codes")
}

pub fn wave_schema() -> Vec<String> {
    ["female", "age_65_plus", "east", "high_income", "urban"].iter().map(|s| s.to_string()).collect()
}

/// Latent vote model of the wave-shaped fixture. The last two covariates
/// have no effect.
pub fn wave_coefficients() -> Array2<f64> {
    array![
        [0.55, 0.10, 0.35, -0.20, 0.0, 0.0],
        [0.45, -0.05, 0.45, -0.45, 0.0, 0.0],
        [0.10, 0.35, -0.60, -0.55, 0.0, 0.0],
        [-0.40, -0.25, -0.10, -0.20, 0.0, 0.0],
        [-0.25, -0.45, -0.15, 0.95, 0.0, 0.0],
        [-0.45, 0.30, -0.05, 0.70, 0.0, 0.0],
    ]
}

/// Synthetic wave with 4730 respondents of whom exactly 533 report a set,
/// six options and five binary covariates.
pub fn wave_fixture() -> (Survey, GroundTruth) {
    let c = SimConfig {
        registry: wave_registry(),
        schema: wave_schema(),
        n: WAVE_FIXTURE_N,
        coefficients: wave_coefficients(),
        q: 0.0,
        style: CoarseningStyle::Neighbor,
        seed: WAVE_FIXTURE_SEED,
        weighted: false,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let mut undecided = vec![false; c.n];
    for i in sample(&mut rng, c.n, WAVE_FIXTURE_UNDECIDED).iter() {
        undecided[i] = true;
    }
    let mut respondents = Vec::with_capacity(c.n);
    let mut votes = Vec::with_capacity(c.n);
    for &hidden in &undecided {
        let (cov, probs, vote, weight) = draw_respondent(&mut rng, &c);
        let set = if hidden { coarsen(&mut rng, vote, &probs, c.style) } else { PartySet::singleton(vote) };
        respondents.push(Respondent::new(weight, set, Some(Covariates::new(cov).expect("binary"))).expect("unit weight"));
        votes.push(vote);
    }
    let survey = Survey::new(c.registry.clone(), c.schema.clone(), respondents, "wave-3").expect("valid survey");
    let weights = vec![1.0; c.n];
    (survey, GroundTruth { registry: c.registry, votes, weights })
}
