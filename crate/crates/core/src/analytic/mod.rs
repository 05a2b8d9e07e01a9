//! Closed-form and recurrent predictions for degree and second-degree counts.

pub mod double_double;
pub mod special;
mod tables;

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

pub use self::special::{gamma_ratio, gamma_ratio_asymptotic, ln_beta, ln_gamma_ratio};
pub use self::tables::{
    build_c_table, build_p_table, c_of_k, default_p0, recurrence_residuals, sum_c_over_l,
    AnalyticTables, DenseTable, Precision, ResidualAudit, SeriesSum, TableOptions, TailBound,
    DEFAULT_CELL_BUDGET, TABLES_SCHEMA, TAIL_GROWTH,
};

use self::tables::check_a;
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Leading-order expected number of vertices of degree `d` in H_{a,m}^n.
pub fn expected_degree_count(d: u32, n: u64, params: &ModelParams) -> Result<f64> {
    check_a(params.a)?;
    let (a, m) = (params.a, params.m as f64);
    if params.m == 0 {
        return Err(Error::Parameter("m must be at least 1".into()));
    }
    if d < params.m {
        return Ok(0.0);
    }
    let ln = ln_beta(d as f64 - m + m * a, a + 2.0)? - ln_beta(m * a, a + 1.0)?;
    Ok(ln.exp() * n as f64)
}

/// Leading term of E Y_n(k), the expected number of vertices with second degree at least `k`.
pub fn expected_y(n: u64, k: u32, a: f64) -> Result<f64> {
    check_a(a)?;
    if k < 2 {
        return Err(Error::Domain(format!(
            "the second-degree tail law needs k >= 2, got {k}"
        )));
    }
    let ln = (a + 1.0).ln() + ln_gamma(2.0 * a + 1.0) - ln_gamma(a + 1.0) - a * (k as f64).ln();
    Ok(ln.exp() * n as f64)
}

/// Leading term of E X_n(k), the expected number of vertices with second degree exactly `k`.
pub fn expected_x(n: u64, k: u32, a: f64) -> Result<f64> {
    check_a(a)?;
    if k < 1 {
        return Err(Error::Domain("the second-degree law needs k >= 1".into()));
    }
    let ln = (a + 1.0).ln() + ln_gamma(2.0 * a + 1.0) - ln_gamma(a) - (a + 1.0) * (k as f64).ln();
    Ok(ln.exp() * n as f64)
}

/// Magnitudes of the two relative error terms attached to the leading laws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Corrections {
    /// `(ln k)^ceil(a+1) / k`
    pub small_k: f64,
    /// `k^(1+a) / n`
    pub finite_n: f64,
}

pub fn corrections(n: u64, k: u32, a: f64) -> Corrections {
    let kf = k as f64;
    Corrections {
        small_k: kf.ln().powf((a + 1.0).ceil()) / kf,
        finite_n: kf.powf(1.0 + a) / n as f64,
    }
}
