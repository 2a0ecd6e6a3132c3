//! On-disk scenario files and textual profile formats.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{schema, Error, Result};
use crate::mcs::{McsProfile, McsScenario};
use crate::mcwa::{McwaScenario, PowerAllocation};
use crate::normal_form::FiniteGame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    NormalForm,
    Mcs,
    Mcwa,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioBody {
    NormalForm(FiniteGame),
    Mcs(McsScenario),
    Mcwa(McwaScenario),
}

impl ScenarioBody {
    pub fn kind(&self) -> ScenarioKind {
        match self {
            ScenarioBody::NormalForm(_) => ScenarioKind::NormalForm,
            ScenarioBody::Mcs(_) => ScenarioKind::Mcs,
            ScenarioBody::Mcwa(_) => ScenarioKind::Mcwa,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFile {
    pub body: ScenarioBody,
    pub meta: Meta,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    kind: ScenarioKind,
    body: Value,
    #[serde(default)]
    meta: Meta,
}

fn body_error(e: serde_json::Error) -> Error {
    schema("body", e.to_string())
}

impl ScenarioFile {
    pub fn new(body: ScenarioBody, meta: Meta) -> Self {
        ScenarioFile { body, meta }
    }

    pub fn kind(&self) -> ScenarioKind {
        self.body.kind()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawFile = serde_json::from_str(text)?;
        let body = match raw.kind {
            ScenarioKind::NormalForm => {
                ScenarioBody::NormalForm(serde_json::from_value(raw.body).map_err(body_error)?)
            }
            ScenarioKind::Mcs => {
                ScenarioBody::Mcs(serde_json::from_value(raw.body).map_err(body_error)?)
            }
            ScenarioKind::Mcwa => {
                ScenarioBody::Mcwa(serde_json::from_value(raw.body).map_err(body_error)?)
            }
        };
        Ok(ScenarioFile {
            body,
            meta: raw.meta,
        })
    }

    /// Canonical pretty-printed form.
    pub fn to_json(&self) -> Result<String> {
        let body = match &self.body {
            ScenarioBody::NormalForm(g) => serde_json::to_value(g)?,
            ScenarioBody::Mcs(s) => serde_json::to_value(s)?,
            ScenarioBody::Mcwa(s) => serde_json::to_value(s)?,
        };
        let raw = RawFile {
            kind: self.kind(),
            body,
            meta: self.meta.clone(),
        };
        Ok(serde_json::to_string_pretty(&raw)? + "\n")
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioFile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    ScenarioFile::from_json(&text)
}

pub fn save_scenario(file: &ScenarioFile, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, file.to_json()?).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| schema("profile", format!("cannot parse `{}` as {what}", t.trim())))
        })
        .collect()
}

/// Strategy indices, one per player: `"0,1"`.
pub fn parse_strategy_profile(text: &str) -> Result<Vec<usize>> {
    parse_list(text, "a strategy index")
}

/// Ordered task ids per user, users separated by `;`: `"1,2;3;"`.
pub fn parse_mcs_profile(text: &str, n_users: usize) -> Result<McsProfile> {
    let parts: Vec<&str> = text.split(';').collect();
    if parts.len() != n_users {
        return Err(Error::Dimension {
            what: "profile users",
            expected: n_users,
            got: parts.len(),
        });
    }
    let ids = parts
        .iter()
        .map(|p| parse_list(p, "a task id"))
        .collect::<Result<_>>()?;
    Ok(McsProfile::from_ids(ids))
}

/// Powers per user and channel, users separated by `;`: `"2;0"`.
pub fn parse_power_allocation(
    text: &str,
    n_users: usize,
    n_channels: usize,
) -> Result<PowerAllocation> {
    let rows: Vec<Vec<f64>> = text
        .split(';')
        .map(|p| parse_list(p, "a power"))
        .collect::<Result<_>>()?;
    if rows.len() != n_users {
        return Err(Error::Dimension {
            what: "allocation users",
            expected: n_users,
            got: rows.len(),
        });
    }
    for row in &rows {
        if row.len() != n_channels {
            return Err(Error::Dimension {
                what: "allocation channels",
                expected: n_channels,
                got: row.len(),
            });
        }
    }
    Ok(PowerAllocation { p: rows })
}
