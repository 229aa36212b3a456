use super::fit::AnovaResult;
use crate::design::ErrTable;
use crate::error::{Error, Result};

/// Setting means with their common standard error `sqrt(MSE_residual / R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SettingMeans {
    pub means: Vec<f64>,
    /// Runs per setting.
    pub replicates: usize,
    /// `None` without replication or residual degrees of freedom.
    pub std_err: Option<f64>,
}

pub fn estimate_setting_means(table: &ErrTable, fit: &AnovaResult) -> Result<SettingMeans> {
    if fit.shape() != table.shape || fit.setting_means.len() != table.n_settings() {
        return Err(Error::Model("fit does not belong to this table".into()));
    }
    let replicates = table.shape.replicates();
    let std_err = match (replicates > 1, fit.residual.mse) {
        (true, Some(mse)) => Some((mse / replicates as f64).sqrt()),
        _ => None,
    };
    Ok(SettingMeans {
        means: fit.setting_means.clone(),
        replicates,
        std_err,
    })
}

/// Setting indices by ascending mean; ties keep index order.
pub fn rank_settings(means: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..means.len()).collect();
    order.sort_by(|&a, &b| means[a].total_cmp(&means[b]).then(a.cmp(&b)));
    order
}
