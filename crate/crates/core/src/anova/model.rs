use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::design::{SettingGrid, TableShape};
use crate::error::{Error, Result};

pub const CV_SEEDS: &str = "CVseeds";
pub const LEARNER_SEEDS: &str = "RFseeds";
pub const SETTING: &str = "setting";

/// A term of the error-table model. Written in configs as `CVseeds`,
/// `RFseeds`, `<param>:CVseeds`, `setting`, `<param>` or `<param>:<param>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Term {
    CvSeeds,
    LearnerSeeds,
    ParamByCv(String),
    Setting,
    Main(String),
    Interaction(String, String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TermKind {
    Random,
    Fixed,
}

impl fmt::Display for TermKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TermKind::Random => "random",
            TermKind::Fixed => "fixed",
        })
    }
}

impl Term {
    pub fn kind(&self) -> TermKind {
        match self {
            Term::CvSeeds | Term::LearnerSeeds | Term::ParamByCv(_) => TermKind::Random,
            Term::Setting | Term::Main(_) | Term::Interaction(..) => TermKind::Fixed,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::CvSeeds => f.write_str(CV_SEEDS),
            Term::LearnerSeeds => f.write_str(LEARNER_SEEDS),
            Term::ParamByCv(p) => write!(f, "{p}:{CV_SEEDS}"),
            Term::Setting => f.write_str(SETTING),
            Term::Main(p) => f.write_str(p),
            Term::Interaction(a, b) => write!(f, "{a}:{b}"),
        }
    }
}

impl FromStr for Term {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::Model("empty term name".into()));
        }
        Ok(match s.split_once(':') {
            None => match s {
                CV_SEEDS => Term::CvSeeds,
                LEARNER_SEEDS => Term::LearnerSeeds,
                SETTING => Term::Setting,
                p => Term::Main(p.to_string()),
            },
            Some((a, b)) if a.is_empty() || b.is_empty() || b.contains(':') => {
                return Err(Error::Model(format!("bad term `{s}`")))
            }
            Some((p, CV_SEEDS)) => Term::ParamByCv(p.to_string()),
            Some((a, b)) => {
                if [a, b].iter().any(|x| [CV_SEEDS, LEARNER_SEEDS, SETTING].contains(x)) {
                    return Err(Error::Model(format!("unsupported interaction `{s}`")));
                }
                Term::Interaction(a.to_string(), b.to_string())
            }
        })
    }
}

impl TryFrom<String> for Term {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Term> for String {
    fn from(t: Term) -> String {
        t.to_string()
    }
}

/// Random (block) terms and fixed (setting) terms. Fixed terms are fitted
/// sequentially in the listed order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(default)]
    pub random: Vec<Term>,
    #[serde(default)]
    pub fixed: Vec<Term>,
}

impl ModelSpec {
    /// Blocks of the design plus the aggregate setting effect.
    pub fn setting_model(shape: TableShape) -> Self {
        ModelSpec {
            random: Self::block_terms(shape),
            fixed: vec![Term::Setting],
        }
    }

    /// Blocks of the design plus hyperparameter main effects and the given
    /// two-way interactions.
    pub fn hyperparameter_model(shape: TableShape, grid: &SettingGrid, interactions: &[(String, String)]) -> Self {
        let mut fixed: Vec<Term> = grid.names.iter().cloned().map(Term::Main).collect();
        fixed.extend(interactions.iter().cloned().map(|(a, b)| Term::Interaction(a, b)));
        ModelSpec {
            random: Self::block_terms(shape),
            fixed,
        }
    }

    pub fn block_terms(shape: TableShape) -> Vec<Term> {
        match shape {
            TableShape::Bcv { .. } => vec![Term::CvSeeds, Term::LearnerSeeds],
            TableShape::BcvCvOnly { .. } => vec![Term::CvSeeds],
            TableShape::Rcv { .. } => Vec::new(),
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = &Term> {
        self.random.iter().chain(&self.fixed)
    }

    /// Terms must exist in the table, sit in the right list, and appear once.
    pub fn validate(&self, shape: TableShape, grid: &SettingGrid) -> Result<()> {
        let known = |p: &str| {
            if grid.names.iter().any(|n| n == p) {
                Ok(())
            } else {
                Err(Error::Model(format!("term refers to unknown hyperparameter `{p}`")))
            }
        };
        for (i, term) in self.terms().enumerate() {
            if self.terms().take(i).any(|t| same_term(t, term)) {
                return Err(Error::Model(format!("term `{term}` listed twice")));
            }
        }
        for term in &self.random {
            if term.kind() != TermKind::Random {
                return Err(Error::Model(format!("`{term}` is not a random term")));
            }
            match term {
                Term::LearnerSeeds if !matches!(shape, TableShape::Bcv { .. }) => {
                    return Err(Error::Model(format!(
                        "{LEARNER_SEEDS} needs a table blocked on learner seeds"
                    )))
                }
                _ if !shape.is_blocked() => {
                    return Err(Error::Model(format!(
                        "random term `{term}` on a repeated-CV table; its block effects are confounded with the residual"
                    )))
                }
                Term::ParamByCv(p) => known(p)?,
                _ => {}
            }
        }
        for term in &self.fixed {
            match term {
                Term::Main(p) => known(p)?,
                Term::Interaction(a, b) => {
                    known(a)?;
                    known(b)?;
                    if a == b {
                        return Err(Error::Model(format!("`{term}` interacts a parameter with itself")));
                    }
                }
                Term::Setting => {}
                other => return Err(Error::Model(format!("`{other}` is not a fixed term"))),
            }
        }
        Ok(())
    }
}

fn same_term(a: &Term, b: &Term) -> bool {
    match (a, b) {
        (Term::Interaction(a1, a2), Term::Interaction(b1, b2)) => {
            (a1 == b1 && a2 == b2) || (a1 == b2 && a2 == b1)
        }
        _ => a == b,
    }
}
