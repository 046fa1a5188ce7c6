//! JSON pipeline descriptions.
//!
//! ```json
//! {
//!   "name": "running",
//!   "inputs": [{"name": "x", "width": 8}, {"name": "y", "width": 8}],
//!   "branches": [{"name": "mul", "from": "main@0"}],
//!   "steps": [
//!     {"branch": "main", "name": "addA", "kind": "reg",
//!      "defines": [{"name": "sumXY", "width": 8, "expr": "(add x y)"}]}
//!   ],
//!   "merges": [{"branch": "mul", "into": "main", "at": 2}],
//!   "outputs": [{"name": "z", "from": "z"}]
//! }
//! ```
//!
//! `from: "parent@k"` splits after the parent's `k`-th step. A merge
//! happens after `at` steps of the target branch (default: after all of
//! them), and `branch` may list several branches for an n-way merge.
//! Outputs attach to `main` unless they name a `branch`.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::de::{self, Deserializer};
use serde::Deserialize;
use serde_path_to_error::Segment;

use crate::model::{BranchId, Expr, ModelError, PipeBuilder, StepBody, StepKind, SyncGraph, MAIN};

pub const MAIN_BRANCH: &str = "main";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SpecError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    /// `path` is a JSON pointer to the offending value.
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("inconsistent pipeline layout: {0}")]
    Layout(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSpec {
    pub name: String,
    pub width: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub name: String,
    pub from: String,
    #[serde(default)]
    pub branch: Option<String>,
}

/// Split point `parent@position`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BranchOrigin {
    pub parent: String,
    pub position: usize,
}

impl FromStr for BranchOrigin {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (parent, pos) = s.split_once('@').ok_or_else(|| format!("expected `branch@position`, got `{s}`"))?;
        let position = pos.parse().map_err(|_| format!("bad position `{pos}` in `{s}`"))?;
        if parent.is_empty() {
            return Err(format!("missing branch name in `{s}`"));
        }
        Ok(BranchOrigin { parent: parent.to_string(), position })
    }
}

impl fmt::Display for BranchOrigin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.parent, self.position)
    }
}

fn from_text<'de, D, T>(d: D) -> Result<T, D::Error>
where
    D: Deserializer<'de>,
    T: FromStr,
    T::Err: fmt::Display,
{
    let s = String::deserialize(d)?;
    s.parse().map_err(de::Error::custom)
}

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchSpec {
    pub name: String,
    #[serde(deserialize_with = "from_text")]
    pub from: BranchOrigin,
}

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefineSpec {
    pub name: String,
    pub width: u32,
    #[serde(deserialize_with = "from_text")]
    pub expr: Expr,
}

fn step_kind<'de, D: Deserializer<'de>>(d: D) -> Result<StepKind, D::Error> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Delay {
        delay: u32,
    }
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Name(String),
        Delay(Delay),
    }
    const EXPECTED: &str = "expected \"wire\", \"reg\" or {\"delay\": n}";
    match Raw::deserialize(d).map_err(|_| de::Error::custom(EXPECTED))? {
        Raw::Name(n) if n == "wire" => Ok(StepKind::Wire),
        Raw::Name(n) if n == "reg" => Ok(StepKind::Reg),
        Raw::Name(n) => Err(de::Error::custom(format!("unknown step kind `{n}`; {EXPECTED}"))),
        Raw::Delay(Delay { delay }) => Ok(StepKind::Delay(delay)),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSpec {
    pub branch: String,
    pub name: String,
    #[serde(deserialize_with = "step_kind")]
    pub kind: StepKind,
    pub defines: Vec<DefineSpec>,
}

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
pub enum BranchList {
    One(String),
    Many(Vec<String>),
}

impl BranchList {
    pub fn names(&self) -> Vec<&str> {
        match self {
            BranchList::One(b) => vec![b.as_str()],
            BranchList::Many(bs) => bs.iter().map(String::as_str).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MergeSpec {
    pub branch: BranchList,
    pub into: String,
    #[serde(default)]
    pub at: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSpecFile {
    pub name: String,
    pub inputs: Vec<InputSpec>,
    #[serde(default)]
    pub outputs: Vec<OutputSpec>,
    #[serde(default)]
    pub branches: Vec<BranchSpec>,
    #[serde(default)]
    pub steps: Vec<StepSpec>,
    #[serde(default)]
    pub merges: Vec<MergeSpec>,
}

enum Pending<'a> {
    Split(&'a BranchSpec),
    Merge(&'a MergeSpec, usize),
}

impl PipelineSpecFile {
    pub fn from_json(text: &str) -> Result<Self, SpecError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let mut pointer = String::new();
            for seg in e.path().iter() {
                match seg {
                    Segment::Seq { index } => pointer.push_str(&format!("/{index}")),
                    Segment::Map { key } => pointer.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1"))),
                    Segment::Enum { variant } => pointer.push_str(&format!("/{variant}")),
                    Segment::Unknown => pointer.push_str("/?"),
                }
            }
            if pointer.is_empty() {
                pointer.push('/');
            }
            let message = e.into_inner().to_string();
            SpecError::Schema { path: pointer, message }
        })
    }

    pub fn load(path: &Path) -> Result<Self, SpecError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SpecError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::from_json(&text)
    }

    fn step_count(&self, branch: &str) -> usize {
        self.steps.iter().filter(|s| s.branch == branch).count()
    }

    /// Replays the file as builder calls. Steps run in file order as soon
    /// as their branch exists and nothing is scheduled at the branch's
    /// current position; scheduled merges go before scheduled splits.
    pub fn to_builder(&self) -> Result<PipeBuilder, SpecError> {
        let inputs: Vec<(&str, u32)> = self.inputs.iter().map(|i| (i.name.as_str(), i.width)).collect();
        let mut b = PipeBuilder::new(&self.name, &inputs)?;

        let mut known: Vec<&str> = vec![MAIN_BRANCH];
        for br in &self.branches {
            if known.contains(&br.name.as_str()) {
                return Err(ModelError::DuplicateBranch { branch: br.name.clone() }.into());
            }
            known.push(&br.name);
        }
        let check = |name: &str, what: &str| {
            if known.contains(&name) {
                Ok(())
            } else {
                Err(SpecError::Layout(format!("{what} refers to unknown branch `{name}`")))
            }
        };
        for br in &self.branches {
            check(&br.from.parent, &format!("branch `{}`", br.name))?;
        }
        for s in &self.steps {
            check(&s.branch, &format!("step `{}`", s.name))?;
        }
        for m in &self.merges {
            check(&m.into, "merge")?;
            for n in m.branch.names() {
                check(n, "merge")?;
            }
        }
        for o in &self.outputs {
            if let Some(br) = &o.branch {
                check(br, &format!("output `{}`", o.name))?;
            }
        }

        let mut pending: Vec<Pending> = self
            .merges
            .iter()
            .map(|m| Pending::Merge(m, m.at.unwrap_or_else(|| self.step_count(&m.into))))
            .chain(self.branches.iter().map(Pending::Split))
            .collect();
        let mut ids: HashMap<&str, BranchId> = HashMap::from([(MAIN_BRANCH, MAIN)]);
        let mut cursor: HashMap<&str, usize> = HashMap::new();
        let mut done = vec![false; self.steps.len()];

        loop {
            let pos = |c: &HashMap<&str, usize>, n: &str| c.get(n).copied().unwrap_or(0);
            let ready = pending.iter().position(|p| match p {
                Pending::Merge(m, at) => {
                    ids.contains_key(m.into.as_str())
                        && pos(&cursor, &m.into) == *at
                        && m.branch
                            .names()
                            .iter()
                            .all(|n| ids.contains_key(n) && pos(&cursor, n) == self.step_count(n))
                }
                Pending::Split(_) => false,
            });
            let ready = ready.or_else(|| {
                pending.iter().position(|p| match p {
                    Pending::Split(br) => {
                        ids.contains_key(br.from.parent.as_str()) && pos(&cursor, &br.from.parent) == br.from.position
                    }
                    Pending::Merge(..) => false,
                })
            });
            if let Some(i) = ready {
                match pending.remove(i) {
                    Pending::Merge(m, _) => {
                        let from: Vec<BranchId> = m.branch.names().iter().map(|n| ids[n]).collect();
                        b.merge_into(&from, ids[m.into.as_str()])?;
                    }
                    Pending::Split(br) => {
                        let id = b.split(ids[br.from.parent.as_str()], &br.name)?;
                        ids.insert(&br.name, id);
                    }
                }
                continue;
            }
            let blocked = |branch: &str, at: usize| {
                pending.iter().any(|p| match p {
                    Pending::Merge(m, k) => m.into == branch && *k == at,
                    Pending::Split(br) => br.from.parent == branch && br.from.position == at,
                })
            };
            let next = self.steps.iter().enumerate().find(|(i, s)| {
                !done[*i] && ids.contains_key(s.branch.as_str()) && !blocked(&s.branch, pos(&cursor, &s.branch))
            });
            let Some((i, s)) = next else { break };
            let mut body = StepBody::new(&s.name, s.kind);
            for d in &s.defines {
                body = body.define(&d.name, d.width, d.expr.clone());
            }
            b.add_step(ids[s.branch.as_str()], body)?;
            *cursor.entry(&s.branch).or_insert(0) += 1;
            done[i] = true;
        }

        if let Some((_, s)) = self.steps.iter().enumerate().find(|(i, _)| !done[*i]) {
            return Err(SpecError::Layout(format!("step `{}` on branch `{}` can never run", s.name, s.branch)));
        }
        if let Some(p) = pending.first() {
            let what = match p {
                Pending::Split(br) => format!("branch `{}` from {} is never reached", br.name, br.from),
                Pending::Merge(m, at) => {
                    format!("merge of {:?} into `{}` at step {at} is never reached", m.branch.names(), m.into)
                }
            };
            return Err(SpecError::Layout(what));
        }

        for o in &self.outputs {
            let branch = o.branch.as_deref().map_or(MAIN, |n| ids[n]);
            b.drive_output_on(branch, &[(o.name.as_str(), o.from.as_str())])?;
        }
        Ok(b)
    }

    pub fn build(&self) -> Result<SyncGraph, SpecError> {
        Ok(self.to_builder()?.build()?)
    }
}
