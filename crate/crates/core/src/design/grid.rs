//! Cartesian hyperparameter grids with equality-conjunction exclusions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::ParamMap;
use crate::params::ParamValue;
use crate::rng::derive_seed;

/// Removes every setting whose values match all listed equalities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Exclusion(pub BTreeMap<String, ParamValue>);

impl Exclusion {
    pub fn new<K: Into<String>, V: Into<ParamValue>>(pairs: impl IntoIterator<Item = (K, V)>) -> Self {
        Exclusion(pairs.into_iter().map(|(k, v)| (k.into(), v.into())).collect())
    }

    fn matches(&self, names: &[String], values: &[ParamValue]) -> bool {
        self.0.iter().all(|(name, want)| {
            names
                .iter()
                .position(|n| n == name)
                .is_some_and(|t| &values[t] == want)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Setting {
    pub index: usize,
    /// Values in the grid's declared parameter order.
    pub values: Vec<ParamValue>,
    /// Level index of each value within its parameter's value list.
    pub levels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SettingGrid {
    pub names: Vec<String>,
    pub values: Vec<Vec<ParamValue>>,
    pub exclusions: Vec<Exclusion>,
    pub settings: Vec<Setting>,
}

impl SettingGrid {
    pub fn len(&self) -> usize {
        self.settings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.settings.is_empty()
    }

    pub fn n_params(&self) -> usize {
        self.names.len()
    }

    pub fn param_map(&self, m: usize) -> ParamMap {
        self.names
            .iter()
            .cloned()
            .zip(self.settings[m].values.iter().cloned())
            .collect()
    }

    /// Seed word identifying a setting by its values rather than its index,
    /// so reordering a grid (values or parameters) leaves seed assignments
    /// unchanged.
    pub fn setting_key(&self, m: usize) -> u64 {
        let mut text = String::new();
        for (name, value) in &self.param_map(m) {
            text.push_str(name);
            text.push('=');
            text.push_str(&value.to_string());
            text.push('\u{1f}');
        }
        let words: Vec<u64> = text
            .as_bytes()
            .chunks(8)
            .map(|c| {
                let mut b = [0u8; 8];
                b[..c.len()].copy_from_slice(c);
                u64::from_le_bytes(b)
            })
            .collect();
        derive_seed(text.len() as u64, &words)
    }

    /// Rebuilds a grid from explicit settings, e.g. read back from CSV.
    /// Level lists follow first appearance in setting order.
    pub fn from_settings(names: Vec<String>, rows: Vec<Vec<ParamValue>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Grid("no settings".into()));
        }
        let mut values: Vec<Vec<ParamValue>> = vec![Vec::new(); names.len()];
        let mut settings = Vec::with_capacity(rows.len());
        for (index, row) in rows.into_iter().enumerate() {
            if row.len() != names.len() {
                return Err(Error::Grid(format!("setting {index} has {} values", row.len())));
            }
            let levels = row
                .iter()
                .enumerate()
                .map(|(t, v)| match values[t].iter().position(|u| u == v) {
                    Some(l) => l,
                    None => {
                        values[t].push(v.clone());
                        values[t].len() - 1
                    }
                })
                .collect();
            settings.push(Setting {
                index,
                values: row,
                levels,
            });
        }
        let grid = SettingGrid {
            names,
            values,
            exclusions: Vec::new(),
            settings,
        };
        for a in 0..grid.len() {
            for b in a + 1..grid.len() {
                if grid.settings[a].levels == grid.settings[b].levels {
                    return Err(Error::Grid(format!("settings {a} and {b} are duplicates")));
                }
            }
        }
        Ok(grid)
    }
}

/// Row-major Cartesian product (last parameter fastest) minus exclusions.
pub fn build_grid(params: &[(String, Vec<ParamValue>)], exclusions: &[Exclusion]) -> Result<SettingGrid> {
    if params.is_empty() {
        return Err(Error::Grid("no hyperparameters declared".into()));
    }
    let names: Vec<String> = params.iter().map(|(n, _)| n.clone()).collect();
    for (t, (name, values)) in params.iter().enumerate() {
        if names[..t].contains(name) {
            return Err(Error::Grid(format!("parameter `{name}` declared twice")));
        }
        if values.is_empty() {
            return Err(Error::Grid(format!("parameter `{name}` has no values")));
        }
        for (a, v) in values.iter().enumerate() {
            if values[..a].contains(v) {
                return Err(Error::Grid(format!("parameter `{name}` repeats value {v}")));
            }
        }
    }
    for ex in exclusions {
        if ex.0.is_empty() {
            return Err(Error::Grid("empty exclusion".into()));
        }
        if let Some(name) = ex.0.keys().find(|k| !names.contains(k)) {
            return Err(Error::Grid(format!("exclusion names unknown parameter `{name}`")));
        }
    }
    let sizes: Vec<usize> = params.iter().map(|(_, v)| v.len()).collect();
    let total: usize = sizes.iter().product();
    let mut settings = Vec::new();
    let mut levels = vec![0usize; sizes.len()];
    for _ in 0..total {
        let values: Vec<ParamValue> = levels
            .iter()
            .enumerate()
            .map(|(t, &l)| params[t].1[l].clone())
            .collect();
        if !exclusions.iter().any(|ex| ex.matches(&names, &values)) {
            settings.push(Setting {
                index: settings.len(),
                values,
                levels: levels.clone(),
            });
        }
        for t in (0..sizes.len()).rev() {
            levels[t] += 1;
            if levels[t] < sizes[t] {
                break;
            }
            levels[t] = 0;
        }
    }
    if settings.is_empty() {
        return Err(Error::Grid("exclusions remove every setting".into()));
    }
    Ok(SettingGrid {
        names,
        values: params.iter().map(|(_, v)| v.clone()).collect(),
        exclusions: exclusions.to_vec(),
        settings,
    })
}
