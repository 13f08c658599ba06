//! Shared data model: queries, candidates, grades and rankings.
//!
//! Every type here is a plain value. Constructors that can fail validate their
//! invariants, while the serde representation stays lenient so that malformed
//! dataset files can still be loaded and linted by [`validate_candidate_set`].

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("query text is empty")]
    EmptyQuery,
    #[error("grade value {0} is outside 1..=4")]
    GradeOutOfRange(i64),
    #[error("rate {name} = {value} is outside [0,1]")]
    RateOutOfRange { name: &'static str, value: f64 },
    #[error("duplicate id {0}")]
    DuplicateId(CandidateId),
}

/// A user query together with the earlier queries of the same session,
/// oldest first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Query {
    pub text: String,
    #[serde(default)]
    pub session: Vec<String>,
}

impl Query {
    pub fn new(text: impl Into<String>, session: Vec<String>) -> Result<Self, ModelError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(ModelError::EmptyQuery);
        }
        Ok(Self { text, session })
    }

    pub fn simple(text: impl Into<String>) -> Result<Self, ModelError> {
        Self::new(text, Vec::new())
    }
}

/// Routing signal attached to a sub-query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IntentDimension {
    HighFreshness,
    Authoritativeness,
    PersonalExperience,
}

impl IntentDimension {
    pub const ALL: [IntentDimension; 3] = [
        IntentDimension::HighFreshness,
        IntentDimension::Authoritativeness,
        IntentDimension::PersonalExperience,
    ];
}

pub type DimensionSet = BTreeSet<IntentDimension>;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubQuery {
    pub text: String,
    #[serde(default)]
    pub dimensions: DimensionSet,
}

impl SubQuery {
    pub fn new(text: impl Into<String>, dimensions: impl IntoIterator<Item = IntentDimension>) -> Self {
        Self {
            text: text.into(),
            dimensions: dimensions.into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QueryType {
    Complex,
    BroadNeeds,
    Simple,
}

impl QueryType {
    pub const ALL: [QueryType; 3] = [QueryType::Complex, QueryType::BroadNeeds, QueryType::Simple];
}

impl fmt::Display for QueryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            QueryType::Complex => "Complex",
            QueryType::BroadNeeds => "BroadNeeds",
            QueryType::Simple => "Simple",
        };
        f.write_str(name)
    }
}

/// Which cover-image scale a grade belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GradeDimension {
    Relevance,
    Quality,
}

/// Half of the four-tier scale a grade falls into.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PreferenceInterval {
    Low,
    High,
}

/// Four-tier cover grade. 4 is best (strongly relevant / high quality), 1 is worst.
///
/// The serde form is not range checked so that out-of-range values in a
/// dataset surface as validation findings instead of decode failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grade {
    value: i64,
    dimension: GradeDimension,
}

impl Grade {
    pub fn new(value: i64, dimension: GradeDimension) -> Result<Self, ModelError> {
        if !(1..=4).contains(&value) {
            return Err(ModelError::GradeOutOfRange(value));
        }
        Ok(Self { value, dimension })
    }

    pub fn relevance(value: i64) -> Result<Self, ModelError> {
        Self::new(value, GradeDimension::Relevance)
    }

    pub fn quality(value: i64) -> Result<Self, ModelError> {
        Self::new(value, GradeDimension::Quality)
    }

    pub fn value(&self) -> i64 {
        self.value
    }

    pub fn dimension(&self) -> GradeDimension {
        self.dimension
    }

    pub fn is_valid(&self) -> bool {
        (1..=4).contains(&self.value)
    }

    pub fn interval(&self) -> PreferenceInterval {
        interval_of(self.value)
    }
}

fn interval_of(value: i64) -> PreferenceInterval {
    if value <= 2 {
        PreferenceInterval::Low
    } else {
        PreferenceInterval::High
    }
}

/// True iff exactly one of the two grade values lies in the unfavourable half {1,2}.
pub fn crosses_boundary(a: i64, b: i64) -> bool {
    interval_of(a) != interval_of(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SideInfo {
    /// Seconds since the Unix epoch.
    pub publish_time: i64,
    pub click_through_rate: f64,
    pub completion_rate: f64,
}

impl SideInfo {
    pub fn new(publish_time: i64, click_through_rate: f64, completion_rate: f64) -> Result<Self, ModelError> {
        let side = Self {
            publish_time,
            click_through_rate,
            completion_rate,
        };
        match side.rate_violations().into_iter().next() {
            Some(err) => Err(err),
            None => Ok(side),
        }
    }

    fn rate_violations(&self) -> Vec<ModelError> {
        [
            ("click_through_rate", self.click_through_rate),
            ("completion_rate", self.completion_rate),
        ]
        .into_iter()
        .filter(|(_, v)| !(v.is_finite() && (0.0..=1.0).contains(v)))
        .map(|(name, value)| ModelError::RateOutOfRange { name, value })
        .collect()
    }
}

/// Opaque candidate identifier. Never interpreted numerically: "01" and "1" differ.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CandidateId(pub String);

impl CandidateId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CandidateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for CandidateId {
    fn from(s: &str) -> Self {
        CandidateId(s.to_owned())
    }
}

impl From<String> for CandidateId {
    fn from(s: String) -> Self {
        CandidateId(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: CandidateId,
    pub title: String,
    pub content: String,
    pub side: SideInfo,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cover_image_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevance_grade: Option<Grade>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality_grade: Option<Grade>,
    #[serde(default)]
    pub source_subquery_dimensions: DimensionSet,
}

impl Candidate {
    pub fn new(id: impl Into<CandidateId>, title: impl Into<String>, content: impl Into<String>, side: SideInfo) -> Self {
        Self {
            id: id.into(),
            title: title.into(),
            content: content.into(),
            side,
            cover_image_ref: None,
            relevance_grade: None,
            quality_grade: None,
            source_subquery_dimensions: DimensionSet::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub query: Query,
    pub candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn new(query: Query, candidates: Vec<Candidate>) -> Self {
        Self { query, candidates }
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &CandidateId> {
        self.candidates.iter().map(|c| &c.id)
    }

    /// The candidates in their stored order, as a ranking.
    pub fn input_order(&self) -> Ranking {
        Ranking::new(self.ids().cloned().collect())
    }

    pub fn get(&self, id: &CandidateId) -> Option<&Candidate> {
        self.candidates.iter().find(|c| &c.id == id)
    }

    pub fn index(&self) -> HashMap<&CandidateId, usize> {
        self.candidates.iter().enumerate().map(|(i, c)| (&c.id, i)).collect()
    }
}

/// An ordered list of candidate ids. Both predictions and ground-truth labels use this shape.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ranking(pub Vec<CandidateId>);

impl Ranking {
    pub fn new(ids: Vec<CandidateId>) -> Self {
        Self(ids)
    }

    pub fn from_strs<S: AsRef<str>>(ids: &[S]) -> Self {
        Self(ids.iter().map(|s| CandidateId(s.as_ref().to_owned())).collect())
    }

    pub fn has_duplicates(&self) -> bool {
        let mut seen = HashSet::with_capacity(self.0.len());
        !self.0.iter().all(|id| seen.insert(id))
    }

    pub fn into_inner(self) -> Vec<CandidateId> {
        self.0
    }
}

impl Deref for Ranking {
    type Target = [CandidateId];

    fn deref(&self) -> &[CandidateId] {
        &self.0
    }
}

impl fmt::Display for Ranking {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, id) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            f.write_str(id.as_str())?;
        }
        f.write_str("]")
    }
}

/// One invariant violation found by [`validate_candidate_set`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    EmptyQuery,
    EmptySet,
    DuplicateId { id: CandidateId },
    RateOutOfRange { id: CandidateId, field: String, value: f64 },
    GradeOutOfRange { id: CandidateId, field: String, value: i64 },
    GradeDimensionMismatch { id: CandidateId, field: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyQuery => write!(f, "query text is empty"),
            Violation::EmptySet => write!(f, "candidate set is empty"),
            Violation::DuplicateId { id } => write!(f, "duplicate id {id}"),
            Violation::RateOutOfRange { id, field, value } => {
                write!(f, "{id}: {field} = {value} rate out of [0,1]")
            }
            Violation::GradeOutOfRange { id, field, value } => {
                write!(f, "{id}: {field} = {value} grade out of 1..=4")
            }
            Violation::GradeDimensionMismatch { id, field } => {
                write!(f, "{id}: {field} carries the wrong grade dimension")
            }
        }
    }
}

/// Collects every invariant violation in `set`. An empty vector means the set is valid.
pub fn validate_candidate_set(set: &CandidateSet) -> Vec<Violation> {
    let mut out = Vec::new();
    if set.query.text.trim().is_empty() {
        out.push(Violation::EmptyQuery);
    }
    if set.candidates.is_empty() {
        out.push(Violation::EmptySet);
    }
    let mut seen = HashSet::new();
    for c in &set.candidates {
        if !seen.insert(&c.id) {
            out.push(Violation::DuplicateId { id: c.id.clone() });
        }
        for err in c.side.rate_violations() {
            if let ModelError::RateOutOfRange { name, value } = err {
                out.push(Violation::RateOutOfRange {
                    id: c.id.clone(),
                    field: name.to_owned(),
                    value,
                });
            }
        }
        let grades = [
            ("relevance_grade", c.relevance_grade, GradeDimension::Relevance),
            ("quality_grade", c.quality_grade, GradeDimension::Quality),
        ];
        for (field, grade, expected) in grades {
            let Some(grade) = grade else { continue };
            if !grade.is_valid() {
                out.push(Violation::GradeOutOfRange {
                    id: c.id.clone(),
                    field: field.to_owned(),
                    value: grade.value(),
                });
            }
            if grade.dimension() != expected {
                out.push(Violation::GradeDimensionMismatch {
                    id: c.id.clone(),
                    field: field.to_owned(),
                });
            }
        }
    }
    out
}

/// True iff `ranking` lists every id of `set` exactly once and nothing else.
pub fn is_permutation(ranking: &Ranking, set: &CandidateSet) -> bool {
    if ranking.len() != set.len() {
        return false;
    }
    let ids: HashSet<&CandidateId> = set.ids().collect();
    if ids.len() != set.len() {
        return false;
    }
    let mut seen = HashSet::with_capacity(ranking.len());
    ranking.iter().all(|id| ids.contains(id) && seen.insert(id))
}
