use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::dc::{DcElement, DublinCoreRecord};
use super::RepositoryError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchField {
    Pid,
    Label,
    CDate,
    MDate,
    Dc(DcElement),
}

impl FromStr for SearchField {
    type Err = RepositoryError;

    fn from_str(s: &str) -> Result<Self, RepositoryError> {
        Ok(match s {
            "pid" => SearchField::Pid,
            "label" => SearchField::Label,
            "cDate" => SearchField::CDate,
            "mDate" => SearchField::MDate,
            other => SearchField::Dc(other.parse().map_err(|_| RepositoryError::UnknownField(other.to_owned()))?),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operator {
    Eq,
    Has,
    Gt,
    Ge,
    Lt,
    Le,
}

impl Operator {
    pub const ALL: [Operator; 6] = [Operator::Eq, Operator::Has, Operator::Gt, Operator::Ge, Operator::Lt, Operator::Le];

    pub fn as_str(self) -> &'static str {
        match self {
            Operator::Eq => "eq",
            Operator::Has => "has",
            Operator::Gt => "gt",
            Operator::Ge => "ge",
            Operator::Lt => "lt",
            Operator::Le => "le",
        }
    }
}

impl FromStr for Operator {
    type Err = RepositoryError;

    fn from_str(s: &str) -> Result<Self, RepositoryError> {
        Operator::ALL
            .into_iter()
            .find(|o| o.as_str() == s)
            .ok_or_else(|| RepositoryError::UnsupportedOperator(s.to_owned()))
    }
}

/// One condition as received; field and operator are checked when the query
/// runs so that bad names surface as query errors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Condition {
    pub field: String,
    pub operator: String,
    pub value: String,
}

impl Condition {
    pub fn new(field: &str, operator: &str, value: &str) -> Self {
        Condition {
            field: field.to_owned(),
            operator: operator.to_owned(),
            value: value.to_owned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSearchQuery {
    pub conditions: Vec<Condition>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ObjectFields {
    pub pid: String,
    pub label: String,
    pub c_date: String,
    pub m_date: String,
    #[serde(flatten)]
    pub dc: DublinCoreRecord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSearchResult {
    pub rows: Vec<ObjectFields>,
    /// False when more rows matched than were returned.
    pub complete: bool,
}

pub(crate) struct Compiled {
    field: SearchField,
    op: Operator,
    value: String,
}

pub(crate) fn compile(query: &FieldSearchQuery) -> Result<Vec<Compiled>, RepositoryError> {
    if query.conditions.is_empty() {
        return Err(RepositoryError::InvalidQuery("at least one condition is required".into()));
    }
    query
        .conditions
        .iter()
        .map(|c| {
            Ok(Compiled {
                field: c.field.parse()?,
                op: c.operator.parse()?,
                value: c.value.clone(),
            })
        })
        .collect()
}

fn values(row: &ObjectFields, field: SearchField) -> Vec<&str> {
    match field {
        SearchField::Pid => vec![&row.pid],
        SearchField::Label => vec![&row.label],
        SearchField::CDate => vec![&row.c_date],
        SearchField::MDate => vec![&row.m_date],
        SearchField::Dc(e) => row.dc.get(e).iter().map(String::as_str).collect(),
    }
}

/// Conjunction of all conditions; a condition holds when any value of the
/// field satisfies it.
pub(crate) fn matches(row: &ObjectFields, conditions: &[Compiled]) -> bool {
    conditions.iter().all(|c| {
        values(row, c.field).into_iter().any(|v| match c.op {
            Operator::Eq => v == c.value,
            Operator::Has => has(v, &c.value),
            Operator::Gt => v > c.value.as_str(),
            Operator::Ge => v >= c.value.as_str(),
            Operator::Lt => v < c.value.as_str(),
            Operator::Le => v <= c.value.as_str(),
        })
    })
}

/// Case-insensitive. A pattern with `*` must match the whole value, each
/// `*` standing for any run of characters; without `*` it is a substring.
fn has(value: &str, pattern: &str) -> bool {
    let value: Vec<char> = value.to_lowercase().chars().collect();
    let pattern: Vec<char> = pattern.to_lowercase().chars().collect();
    if !pattern.contains(&'*') {
        return value.windows(pattern.len().max(1)).any(|w| w == pattern.as_slice()) || pattern.is_empty();
    }
    let (mut v, mut p) = (0usize, 0usize);
    let mut backtrack: Option<(usize, usize)> = None;
    while v < value.len() {
        if p < pattern.len() && pattern[p] == '*' {
            backtrack = Some((p, v));
            p += 1;
        } else if p < pattern.len() && pattern[p] == value[v] {
            p += 1;
            v += 1;
        } else if let Some((star, matched)) = backtrack {
            p = star + 1;
            v = matched + 1;
            backtrack = Some((star, matched + 1));
        } else {
            return false;
        }
    }
    pattern[p..].iter().all(|&c| c == '*')
}
