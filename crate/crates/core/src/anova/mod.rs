//! Mixed-model ANOVA of error tables.

pub mod fit;
pub mod means;
pub mod model;

use std::io::Write;

pub use fit::{fit_anova, AnovaResult, CompiledModel, Effects, SumOfSquares, TermFit};
pub use means::{estimate_setting_means, rank_settings, SettingMeans};
pub use model::{ModelSpec, Term, TermKind};

use crate::design::table::format_real;
use crate::error::{Error, Result};

/// `<1/(B+1)` for the smallest attainable p-value, four decimals otherwise.
pub fn p_display(p: f64, permutations: usize) -> String {
    let floor = 1.0 / (permutations as f64 + 1.0);
    if p <= floor * (1.0 + 1e-12) {
        format!("<{}", format_real(floor))
    } else {
        format!("{p:.4}")
    }
}

/// Columns `term, kind, df, SSE, MSE, p_value, p_display`; one row per term,
/// then `Residuals` and `Total`. `p_values` is aligned with `fit.terms`.
pub fn write_anova_csv<W: Write>(
    fit: &AnovaResult,
    p_values: &[Option<f64>],
    permutations: usize,
    out: W,
) -> Result<()> {
    let opt = |x: Option<f64>| x.map(format_real).unwrap_or_default();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["term", "kind", "df", "SSE", "MSE", "p_value", "p_display"])?;
    for (i, t) in fit.terms.iter().enumerate() {
        let p = p_values.get(i).copied().flatten();
        w.write_record([
            t.term.to_string(),
            t.kind.to_string(),
            t.df.to_string(),
            format_real(t.sse),
            opt(t.mse),
            opt(p),
            p.map(|p| p_display(p, permutations)).unwrap_or_default(),
        ])?;
    }
    for (name, s) in [("Residuals", fit.residual), ("Total", fit.total)] {
        w.write_record([
            name.to_string(),
            String::new(),
            s.df.to_string(),
            format_real(s.sse),
            opt(s.mse),
            String::new(),
            String::new(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<anova csv>", e))?;
    Ok(())
}
