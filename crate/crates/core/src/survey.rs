//! Weighted set-valued poll records.
//!
//! Each [`Respondent`] carries a survey weight, the set of options they are
//! still considering, and an optional vector of binary covariates. A decided
//! respondent reports a singleton.
//!
//! The CSV layout is a header row with `weight`, `parties` and one column per
//! covariate label, for example
//!
//! ```text
//! weight,parties,east
//! 1.0,SPD;GRUENE,1
//! 0.8,CDU_CSU,0
//! ```
//!
//! Rows naming an option outside the registry are dropped and counted; they
//! are not truncated to the known options.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::party::{PartyRegistry, PartySet};

/// Binary covariate vector aligned with a survey's schema.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Covariates(Vec<u8>);

impl Covariates {
    pub fn new(values: Vec<u8>) -> Result<Self> {
        if let Some(v) = values.iter().find(|&&v| v > 1) {
            return Err(Error::Invalid(format!("covariate value {v} is not 0 or 1")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Design row with a leading intercept.
    pub fn design_row(&self) -> Vec<f64> {
        std::iter::once(1.0).chain(self.0.iter().map(|&v| f64::from(v))).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Respondent {
    pub weight: f64,
    pub set: PartySet,
    pub covariates: Option<Covariates>,
}

impl Respondent {
    pub fn new(weight: f64, set: PartySet, covariates: Option<Covariates>) -> Result<Self> {
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::Invalid(format!("weight must be positive and finite, got {weight}")));
        }
        Ok(Self { weight, set, covariates })
    }

    pub fn is_decided(&self) -> bool {
        self.set.is_singleton()
    }
}

/// Counters collected while reading a CSV document.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ParseDiagnostics {
    pub dropped_rows: usize,
    /// `(line, message)` for every dropped row.
    pub warnings: Vec<(u64, String)>,
}

/// One poll wave.
#[derive(Debug, Clone, PartialEq)]
pub struct Survey {
    registry: PartyRegistry,
    schema: Vec<String>,
    respondents: Vec<Respondent>,
    wave: String,
    diagnostics: ParseDiagnostics,
}

impl Survey {
    pub fn new(
        registry: PartyRegistry,
        schema: Vec<String>,
        respondents: Vec<Respondent>,
        wave: impl Into<String>,
    ) -> Result<Self> {
        validate_schema(&schema)?;
        for (index, r) in respondents.iter().enumerate() {
            if !registry.contains_set(r.set) {
                return Err(Error::Respondent { index, message: "set outside the registry".into() });
            }
            if let Some(c) = &r.covariates {
                if c.len() != schema.len() {
                    return Err(Error::Respondent {
                        index,
                        message: format!("{} covariates for a schema of {}", c.len(), schema.len()),
                    });
                }
            }
            if !(r.weight.is_finite() && r.weight > 0.0) {
                return Err(Error::Respondent { index, message: "weight must be positive".into() });
            }
        }
        Ok(Self {
            registry,
            schema,
            respondents,
            wave: wave.into(),
            diagnostics: ParseDiagnostics::default(),
        })
    }

    pub fn with_wave(mut self, wave: impl Into<String>) -> Self {
        self.wave = wave.into();
        self
    }

    pub fn registry(&self) -> &PartyRegistry {
        &self.registry
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    pub fn respondents(&self) -> &[Respondent] {
        &self.respondents
    }

    pub fn wave(&self) -> &str {
        &self.wave
    }

    pub fn diagnostics(&self) -> &ParseDiagnostics {
        &self.diagnostics
    }

    pub fn len(&self) -> usize {
        self.respondents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.respondents.is_empty()
    }

    /// Sum of weights in respondent order.
    pub fn total_weight(&self) -> f64 {
        self.respondents.iter().map(|r| r.weight).sum()
    }

    pub fn n_decided(&self) -> usize {
        self.respondents.iter().filter(|r| r.is_decided()).count()
    }

    pub fn n_undecided(&self) -> usize {
        self.len() - self.n_decided()
    }

    /// Copy of the survey with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let respondents = self
            .respondents
            .iter()
            .map(|r| Respondent::new(r.weight * factor, r.set, r.covariates.clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { respondents, ..self.clone() })
    }

    /// Copy restricted to the respondents for which `keep` holds.
    pub fn filtered(&self, mut keep: impl FnMut(&Respondent) -> bool) -> Self {
        Self {
            respondents: self.respondents.iter().filter(|r| keep(r)).cloned().collect(),
            ..self.clone()
        }
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        let mut header = vec!["weight".to_string(), "parties".to_string()];
        header.extend(self.schema.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        for r in &self.respondents {
            let mut row = vec![format!("{}", r.weight), self.registry.format_set(r.set)];
            match &r.covariates {
                Some(c) => row.extend(c.values().iter().map(|v| v.to_string())),
                None => row.extend(self.schema.iter().map(|_| String::new())),
            }
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&SurveyJson::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let dto: SurveyJson = serde_json::from_str(text)?;
        dto.try_into()
    }
}

fn validate_schema(schema: &[String]) -> Result<()> {
    for (i, label) in schema.iter().enumerate() {
        if label.is_empty() || label == "weight" || label == "parties" {
            return Err(Error::Invalid(format!("invalid covariate label `{label}`")));
        }
        if schema[..i].contains(label) {
            return Err(Error::Invalid(format!("duplicate covariate label `{label}`")));
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct SurveyJson {
    registry: PartyRegistry,
    schema: Vec<String>,
    respondents: Vec<RespondentJson>,
    wave: String,
}

#[derive(Serialize, Deserialize)]
struct RespondentJson {
    weight: f64,
    parties: Vec<String>,
    covariates: Option<Covariates>,
}

impl From<&Survey> for SurveyJson {
    fn from(s: &Survey) -> Self {
        Self {
            registry: s.registry.clone(),
            schema: s.schema.clone(),
            respondents: s
                .respondents
                .iter()
                .map(|r| RespondentJson {
                    weight: r.weight,
                    parties: s.registry.set_codes(r.set).into_iter().map(String::from).collect(),
                    covariates: r.covariates.clone(),
                })
                .collect(),
            wave: s.wave.clone(),
        }
    }
}

impl TryFrom<SurveyJson> for Survey {
    type Error = Error;

    fn try_from(dto: SurveyJson) -> Result<Self> {
        let respondents = dto
            .respondents
            .into_iter()
            .map(|r| {
                let set = dto.registry.set_from_codes(&r.parties)?;
                let covariates = r.covariates.map(|c| Covariates::new(c.0)).transpose()?;
                Respondent::new(r.weight, set, covariates)
            })
            .collect::<Result<Vec<_>>>()?;
        Survey::new(dto.registry, dto.schema, respondents, dto.wave)
    }
}

/// Reads a CSV document into a [`Survey`].
///
/// Columns are located by header name; columns other than `weight`,
/// `parties` and the schema labels are ignored. A row whose covariate cells
/// are all empty has absent covariates.
pub fn parse_survey(text: &str, registry: &PartyRegistry, schema: &[String]) -> Result<Survey> {
    validate_schema(schema)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let headers = reader.headers().map_err(csv_error)?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::Parse { line: 1, message: "missing header row".into() });
    }
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse { line: 1, message: format!("missing column `{name}`") })
    };
    let weight_col = column("weight")?;
    let parties_col = column("parties")?;
    let covariate_cols = schema.iter().map(|l| column(l)).collect::<Result<Vec<_>>>()?;

    let mut respondents = Vec::new();
    let mut diagnostics = ParseDiagnostics::default();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        let row_err = |message: String| Error::Row { line, message };

        let weight_text = &record[weight_col];
        let weight: f64 = weight_text
            .parse()
            .map_err(|_| row_err(format!("weight `{weight_text}` is not a number")))?;
        if !(weight.is_finite() && weight > 0.0) {
            return Err(row_err(format!("weight {weight} must be positive")));
        }

        let parties = &record[parties_col];
        if parties.split(';').all(|c| c.trim().is_empty()) {
            return Err(row_err("empty `parties` cell".into()));
        }
        let set = match registry.parse_set(parties) {
            Ok(set) => set,
            Err(Error::UnknownOption(code)) => {
                diagnostics.dropped_rows += 1;
                diagnostics.warnings.push((line, format!("dropped row: option `{code}` not in registry")));
                continue;
            }
            Err(e) => return Err(e),
        };

        let cells: Vec<&str> = covariate_cols.iter().map(|&c| &record[c]).collect();
        let covariates = if !cells.is_empty() && cells.iter().all(|c| c.is_empty()) {
            None
        } else {
            let values = cells
                .iter()
                .zip(schema)
                .map(|(cell, label)| match *cell {
                    "0" => Ok(0),
                    "1" => Ok(1),
                    other => Err(row_err(format!("covariate `{label}` = `{other}` is not 0 or 1"))),
                })
                .collect::<Result<Vec<u8>>>()?;
            Some(Covariates(values))
        };
        respondents.push(Respondent { weight, set, covariates });
    }

    let mut survey = Survey::new(registry.clone(), schema.to_vec(), respondents, "")?;
    survey.diagnostics = diagnostics;
    Ok(survey)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse { line, message: e.to_string() }
}

/// `(unweighted, weighted)` fraction of respondents with more than one option.
pub fn undecided_share(s: &Survey) -> Result<(f64, f64)> {
    if s.is_empty() {
        return Err(Error::EmptySurvey);
    }
    let mut undecided_weight = 0.0;
    let mut undecided = 0usize;
    for r in s.respondents.iter().filter(|r| !r.is_decided()) {
        undecided += 1;
        undecided_weight += r.weight;
    }
    Ok((undecided as f64 / s.len() as f64, undecided_weight / s.total_weight()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupCount {
    pub set: PartySet,
    pub count: usize,
    pub weight: f64,
}

/// Distinct consideration sets with their counts and weights, most frequent
/// first. Ties keep [`PartySet`] order.
pub fn group_counts(s: &Survey) -> Vec<GroupCount> {
    let mut by_set: BTreeMap<PartySet, (usize, f64)> = BTreeMap::new();
    for r in &s.respondents {
        let e = by_set.entry(r.set).or_default();
        e.0 += 1;
        e.1 += r.weight;
    }
    let mut groups: Vec<GroupCount> = by_set
        .into_iter()
        .map(|(set, (count, weight))| GroupCount { set, count, weight })
        .collect();
    // stable: ties stay in set order
    groups.sort_by_key(|g| std::cmp::Reverse(g.count));
    groups
}

/// Like [`group_counts`], restricted to sets with two or more options.
pub fn undecided_groups(s: &Survey) -> Vec<GroupCount> {
    group_counts(s).into_iter().filter(|g| !g.set.is_singleton()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptionMarginal {
    pub option: String,
    /// Respondents whose set is exactly this option.
    pub decided: usize,
    /// Respondents whose set contains this option.
    pub mentioned: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub n: usize,
    pub n_decided: usize,
    pub n_undecided: usize,
    pub total_weight: f64,
    pub undecided_share_unweighted: Option<f64>,
    pub undecided_share_weighted: Option<f64>,
    pub missing_covariates: usize,
    pub dropped_rows: usize,
    pub warnings: Vec<String>,
    pub marginals: Vec<OptionMarginal>,
}

pub fn validate(s: &Survey) -> ValidationReport {
    let shares = undecided_share(s).ok();
    let marginals = (0..s.registry.len())
        .map(|i| OptionMarginal {
            option: s.registry.code(i).to_string(),
            decided: s.respondents.iter().filter(|r| r.set.only() == Some(i)).count(),
            mentioned: s.respondents.iter().filter(|r| r.set.contains(i)).count(),
        })
        .collect();
    ValidationReport {
        n: s.len(),
        n_decided: s.n_decided(),
        n_undecided: s.n_undecided(),
        total_weight: s.total_weight(),
        undecided_share_unweighted: shares.map(|s| s.0),
        undecided_share_weighted: shares.map(|s| s.1),
        missing_covariates: s.respondents.iter().filter(|r| r.covariates.is_none()).count(),
        dropped_rows: s.diagnostics.dropped_rows,
        warnings: s.diagnostics.warnings.iter().map(|(l, m)| format!("line {l}: {m}")).collect(),
        marginals,
    }
}
