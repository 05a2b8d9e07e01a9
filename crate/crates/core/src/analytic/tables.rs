//! Dense (l, k) tables for the degree/second-degree recurrences.

use std::io::{self, Write};

use serde::Serialize;

use super::double_double::{DoubleDouble, Real};
use super::special::ln_beta;
use crate::error::{Error, Result};

pub const TABLES_SCHEMA: &str = "second-degree/tables/1";

/// Default cap on `(l_max + 1) * (k_max + 1)` per table.
pub const DEFAULT_CELL_BUDGET: usize = 50_000_000;

/// Base of the geometric growth in k used by the tail bound.
pub const TAIL_GROWTH: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Precision {
    Double,
    DoubleDouble,
}

/// Table indexed by `0 ..= l_max` and `0 ..= k_max`, stored k-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTable {
    l_max: u32,
    k_max: u32,
    values: Vec<f64>,
}

impl DenseTable {
    fn zeros(l_max: u32, k_max: u32) -> Self {
        let len = (l_max as usize + 1) * (k_max as usize + 1);
        Self {
            l_max,
            k_max,
            values: vec![0.0; len],
        }
    }

    #[inline]
    fn index(&self, l: u32, k: u32) -> usize {
        k as usize * (self.l_max as usize + 1) + l as usize
    }

    pub fn l_max(&self) -> u32 {
        self.l_max
    }

    pub fn k_max(&self) -> u32 {
        self.k_max
    }

    /// Value at `(l, k)`; zero outside the stored range.
    pub fn get(&self, l: u32, k: u32) -> f64 {
        if l > self.l_max || k > self.k_max {
            0.0
        } else {
            self.values[self.index(l, k)]
        }
    }

    /// All `l` entries for one `k`, starting at `l = 0`.
    pub fn column(&self, k: u32) -> &[f64] {
        let start = self.index(0, k);
        &self.values[start..start + self.l_max as usize + 1]
    }

    fn set(&mut self, l: u32, k: u32, value: f64) {
        let i = self.index(l, k);
        self.values[i] = value;
    }
}

fn check_budget(l_max: u32, k_max: u32, budget: usize) -> Result<()> {
    if l_max < 1 || k_max < 1 {
        return Err(Error::Parameter(format!(
            "table bounds must be at least 1, got l_max={l_max} k_max={k_max}"
        )));
    }
    let cells = (l_max as u128 + 1) * (k_max as u128 + 1);
    if cells > budget as u128 {
        return Err(Error::Budget(format!(
            "{cells} cells per table exceed the budget of {budget}"
        )));
    }
    Ok(())
}

pub(crate) fn check_a(a: f64) -> Result<()> {
    if a.is_finite() && a > 0.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "a must be positive and finite, got {a}"
        )))
    }
}

/// `c(k) = B(k - 1 + a, a + 2) / B(a, a + 1)`, evaluated in log space.
pub fn c_of_k(k: u32, a: f64) -> Result<f64> {
    if k < 1 {
        return Err(Error::Domain("c(k) needs k >= 1".into()));
    }
    check_a(a)?;
    let ln = ln_beta(k as f64 - 1.0 + a, a + 2.0)? - ln_beta(a, a + 1.0)?;
    Ok(ln.exp())
}

fn c_values<T: Real>(a: f64, k_max: u32, precision: Precision) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(k_max as usize + 1);
    out.push(T::from_f64(0.0));
    match precision {
        Precision::Double => {
            for k in 1..=k_max {
                out.push(T::from_f64(c_of_k(k, a)?));
            }
        }
        Precision::DoubleDouble => {
            // c(1) = (a+1)/(2a+1), c(k) = c(k-1)(k-2+a)/(k+2a)
            let ar = T::from_f64(a);
            let one = T::from_f64(1.0);
            let two = T::from_f64(2.0);
            let mut c = (ar + one) / (two * ar + one);
            out.push(c);
            for k in 2..=k_max {
                let kr = T::from_f64(k as f64);
                c = c * (kr - two + ar) / (kr + two * ar);
                out.push(c);
            }
        }
    }
    Ok(out)
}

/// Fill c(l, k) for `1 <= l <= l_max`, `0 <= k <= max_k`, calling `emit` once
/// per finished column in increasing k. Only two columns are held at a time.
fn fill_c_columns<T: Real>(a: f64, l_max: u32, ck: &[T], mut emit: impl FnMut(u32, &[T])) {
    let zero = T::from_f64(0.0);
    let ar = T::from_f64(a);
    let lanes = l_max as usize + 1;
    let mut prev = vec![zero; lanes];
    let mut cur = vec![zero; lanes];
    emit(0, &prev);
    for k in 1..ck.len() as u32 {
        let kr = T::from_f64(k as f64);
        let one = T::from_f64(1.0);
        let three = T::from_f64(3.0);
        let two = T::from_f64(2.0);
        cur[0] = zero;
        if l_max >= 1 {
            cur[1] = (prev[1] + ck[k as usize]) * (ar + kr - one) / (kr + three * ar + one);
        }
        for l in 2..=l_max as usize {
            let lr = T::from_f64(l as f64);
            let den = lr * (one + ar) + kr + two * ar;
            cur[l] = (prev[l] * (ar * lr + kr - one) + cur[l - 1] * (lr - two + ar)) / den;
        }
        emit(k, &cur);
        std::mem::swap(&mut prev, &mut cur);
    }
}

fn c_table<T: Real>(a: f64, l_max: u32, k_max: u32, precision: Precision) -> Result<DenseTable> {
    let ck = c_values::<T>(a, k_max, precision)?;
    let mut table = DenseTable::zeros(l_max, k_max);
    fill_c_columns(a, l_max, &ck, |k, col| {
        for (l, v) in col.iter().enumerate() {
            table.set(l as u32, k, v.to_f64());
        }
    });
    Ok(table)
}

fn p_table<T: Real>(a: f64, l_max: u32, k_max: u32, p0: f64) -> DenseTable {
    let mut table = DenseTable::zeros(l_max, k_max);
    if l_max < 2 {
        return table;
    }
    let zero = T::from_f64(0.0);
    let one = T::from_f64(1.0);
    let two = T::from_f64(2.0);
    let ar = T::from_f64(a);
    let lanes = l_max as usize + 1;
    let mut prev = vec![zero; lanes];
    prev[2] = T::from_f64(p0);
    for l in 3..lanes {
        let lr = T::from_f64(l as f64);
        prev[l] = prev[l - 1] * (lr - two + ar) / (lr * (one + ar) - two - ar);
    }
    for (l, v) in prev.iter().enumerate() {
        table.set(l as u32, 0, v.to_f64());
    }
    let mut cur = vec![zero; lanes];
    for k in 1..=k_max {
        let kr = T::from_f64(k as f64);
        cur[2] = zero;
        for l in 3..lanes {
            let lr = T::from_f64(l as f64);
            let den = lr * (one + ar) + kr - one - ar;
            cur[l] =
                (prev[l] * (ar * lr + kr - two * ar - one) + cur[l - 1] * (lr - two + ar)) / den;
        }
        for (l, v) in cur.iter().enumerate() {
            table.set(l as u32, k, v.to_f64());
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    table
}

/// Geometric majorant `c(l, k) <= C * 2^k / (1 + q)^l` with `q = min(a, 1) / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailBound {
    pub constant: f64,
    pub q: f64,
}

impl TailBound {
    /// Calibrates the constant from the first row: `C * 2^k / (1 + 2a) >= c(1, k)`.
    pub fn calibrate(a: f64, first_row: impl IntoIterator<Item = (u32, f64)>) -> Self {
        let ln_c = first_row
            .into_iter()
            .filter(|&(k, v)| k >= 1 && v > 0.0)
            .map(|(k, v)| v.ln() + (1.0 + TAIL_GROWTH * a).ln() - k as f64 * TAIL_GROWTH.ln())
            .fold(f64::NEG_INFINITY, f64::max);
        Self {
            constant: ln_c.exp(),
            q: a.min(1.0) / 2.0,
        }
    }

    pub fn ln_cell(&self, l: u32, k: u32) -> f64 {
        self.constant.ln() + k as f64 * TAIL_GROWTH.ln() - l as f64 * self.q.ln_1p()
    }

    /// Bound on a single cell.
    pub fn cell(&self, l: u32, k: u32) -> f64 {
        self.ln_cell(l, k).exp()
    }

    /// Bound on `sum over l > l_max of c(l, k)`.
    pub fn tail(&self, l_max: u32, k: u32) -> f64 {
        (self.ln_cell(l_max, k) - self.q.ln()).exp()
    }

    /// Smallest `l_max` whose tail bound is at most `target`.
    pub fn rows_needed(&self, k: u32, target: f64) -> f64 {
        let ln_head = self.ln_cell(0, k) - self.q.ln();
        ((ln_head - target.ln()) / self.q.ln_1p()).ceil().max(1.0)
    }
}

/// The c- and p-tables for one value of `a`.
#[derive(Debug, Clone)]
pub struct AnalyticTables {
    pub a: f64,
    pub l_max: u32,
    pub k_max: u32,
    pub precision: Precision,
    pub c: DenseTable,
    pub p: DenseTable,
    pub p0: f64,
    pub tail: TailBound,
    /// Bound on `sum over l > l_max of c(l, k)` for each k; entry 0 is 0.
    pub tail_by_k: Vec<f64>,
    /// Largest entry of `tail_by_k`.
    pub truncation_certificate: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct TableOptions {
    pub precision: Precision,
    pub cell_budget: usize,
    pub p0: Option<f64>,
}

impl Default for TableOptions {
    fn default() -> Self {
        Self {
            precision: Precision::Double,
            cell_budget: DEFAULT_CELL_BUDGET,
            p0: None,
        }
    }
}

/// Builds the c-table alone.
pub fn build_c_table(
    a: f64,
    l_max: u32,
    k_max: u32,
    precision: Precision,
    cell_budget: usize,
) -> Result<DenseTable> {
    check_a(a)?;
    check_budget(l_max, k_max, cell_budget)?;
    match precision {
        Precision::Double => c_table::<f64>(a, l_max, k_max, precision),
        Precision::DoubleDouble => c_table::<DoubleDouble>(a, l_max, k_max, precision),
    }
}

/// Builds the p-table alone from `p(2, 0) = p0`.
pub fn build_p_table(
    a: f64,
    l_max: u32,
    k_max: u32,
    p0: f64,
    precision: Precision,
    cell_budget: usize,
) -> Result<DenseTable> {
    check_a(a)?;
    check_budget(l_max, k_max, cell_budget)?;
    if !(p0.is_finite() && p0 > 0.0) {
        return Err(Error::Parameter(format!("P0 must be positive, got {p0}")));
    }
    Ok(match precision {
        Precision::Double => p_table::<f64>(a, l_max, k_max, p0),
        Precision::DoubleDouble => p_table::<DoubleDouble>(a, l_max, k_max, p0),
    })
}

/// `max over 1 <= n <= 10^4` of the expected number of vertices whose only
/// edge is a loop, from its one-step recurrence.
pub fn default_p0(a: f64) -> Result<f64> {
    check_a(a)?;
    let mut e = 1.0f64;
    let mut best = e;
    for n in 2..=10_000u32 {
        let w = (a + 1.0) * n as f64 - 1.0;
        e = e * ((1.0 + a) * n as f64 - 2.0 - a) / w + a / w;
        best = best.max(e);
    }
    Ok(best)
}

impl AnalyticTables {
    pub fn build(a: f64, l_max: u32, k_max: u32, options: TableOptions) -> Result<Self> {
        let p0 = match options.p0 {
            Some(p0) => p0,
            None => default_p0(a)?,
        };
        let c = build_c_table(a, l_max, k_max, options.precision, options.cell_budget)?;
        let p = build_p_table(a, l_max, k_max, p0, options.precision, options.cell_budget)?;
        let tail = TailBound::calibrate(a, (1..=k_max).map(|k| (k, c.get(1, k))));
        let mut tail_by_k = vec![0.0];
        tail_by_k.extend((1..=k_max).map(|k| tail.tail(l_max, k)));
        let truncation_certificate = tail_by_k.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            a,
            l_max,
            k_max,
            precision: options.precision,
            c,
            p,
            p0,
            tail,
            tail_by_k,
            truncation_certificate,
        })
    }

    /// `(l, k, c, p)` rows, k-major, for `1 <= l <= l_max`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# schema: {TABLES_SCHEMA}")?;
        writeln!(
            w,
            "# a={} l_max={} k_max={} p0={} truncation_certificate={}",
            self.a, self.l_max, self.k_max, self.p0, self.truncation_certificate
        )?;
        writeln!(w, "l,k,c,p")?;
        for k in 0..=self.k_max {
            for l in 1..=self.l_max {
                writeln!(w, "{l},{k},{:e},{:e}", self.c.get(l, k), self.p.get(l, k))?;
            }
        }
        Ok(())
    }

    pub fn write_json<W: Write>(&self, w: W) -> io::Result<()> {
        #[derive(Serialize)]
        struct Export<'a> {
            schema: &'static str,
            a: f64,
            l_max: u32,
            k_max: u32,
            precision: Precision,
            p0: f64,
            tail_constant: f64,
            q: f64,
            truncation_certificate: f64,
            /// `c[k][l]`
            c: Vec<&'a [f64]>,
            p: Vec<&'a [f64]>,
        }
        let export = Export {
            schema: TABLES_SCHEMA,
            a: self.a,
            l_max: self.l_max,
            k_max: self.k_max,
            precision: self.precision,
            p0: self.p0,
            tail_constant: self.tail.constant,
            q: self.tail.q,
            truncation_certificate: self.truncation_certificate,
            c: (0..=self.k_max).map(|k| self.c.column(k)).collect(),
            p: (0..=self.k_max).map(|k| self.p.column(k)).collect(),
        };
        serde_json::to_writer_pretty(w, &export).map_err(io::Error::other)
    }
}

fn ulp(x: f64) -> f64 {
    let x = x.abs();
    if x == 0.0 || !x.is_finite() {
        return f64::MIN_POSITIVE;
    }
    (f64::from_bits(x.to_bits() + 1) - x).max(f64::MIN_POSITIVE * f64::EPSILON)
}

/// Distance between the two sides of a recurrence in units of the larger side's ulp.
fn ulps_apart(lhs: f64, rhs: f64) -> f64 {
    (lhs - rhs).abs() / ulp(lhs.abs().max(rhs.abs()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ResidualAudit {
    pub cells: u64,
    pub max_ulps_c: f64,
    pub max_ulps_p: f64,
}

/// Re-substitutes every interior cell into its recurrence, multiplied through by
/// the denominator, and reports the worst disagreement in ulps.
pub fn recurrence_residuals(tables: &AnalyticTables) -> Result<ResidualAudit> {
    let a = tables.a;
    let (c, p) = (&tables.c, &tables.p);
    let mut audit = ResidualAudit::default();
    for k in 1..=tables.k_max {
        let kf = k as f64;
        let ck = c_of_k(k, a)?;
        let lhs = c.get(1, k) * (kf + 3.0 * a + 1.0);
        let rhs = (c.get(1, k - 1) + ck) * (a + kf - 1.0);
        audit.max_ulps_c = audit.max_ulps_c.max(ulps_apart(lhs, rhs));
        audit.cells += 1;
        for l in 2..=tables.l_max {
            let lf = l as f64;
            let lhs = c.get(l, k) * (lf * (1.0 + a) + kf + 2.0 * a);
            let rhs = c.get(l, k - 1) * (a * lf + kf - 1.0) + c.get(l - 1, k) * (lf - 2.0 + a);
            audit.max_ulps_c = audit.max_ulps_c.max(ulps_apart(lhs, rhs));
            audit.cells += 1;
        }
    }
    for l in 3..=tables.l_max {
        let lf = l as f64;
        let lhs = p.get(l, 0) * (lf * (1.0 + a) - 2.0 - a);
        let rhs = p.get(l - 1, 0) * (lf - 2.0 + a);
        audit.max_ulps_p = audit.max_ulps_p.max(ulps_apart(lhs, rhs));
        audit.cells += 1;
        for k in 1..=tables.k_max {
            let kf = k as f64;
            let lhs = p.get(l, k) * (lf * (1.0 + a) + kf - 1.0 - a);
            let rhs =
                p.get(l, k - 1) * (a * lf + kf - 2.0 * a - 1.0) + p.get(l - 1, k) * (lf - 2.0 + a);
            audit.max_ulps_p = audit.max_ulps_p.max(ulps_apart(lhs, rhs));
            audit.cells += 1;
        }
    }
    Ok(audit)
}

/// Result of summing `c(l, k)` over all `l >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesSum {
    pub k: u32,
    pub value: f64,
    /// Number of rows summed.
    pub l_max: u32,
    /// Upper bound on the omitted rows.
    pub tail_bound: f64,
}

fn partial_sums(a: f64, l_max: u32, k: u32) -> Result<(f64, TailBound)> {
    let ck = c_values::<f64>(a, k, Precision::Double)?;
    let mut first_row = Vec::with_capacity(k as usize);
    let mut sum = 0.0;
    fill_c_columns(a, l_max, &ck, |kk, col| {
        if kk >= 1 {
            first_row.push((kk, col[1]));
        }
        if kk == k {
            // smallest terms first
            sum = col[1..].iter().rev().sum();
        }
    });
    Ok((sum, TailBound::calibrate(a, first_row)))
}

/// `sum over l >= 1 of c(l, k)`, with enough rows that the certified tail is
/// at most `rel_tol` times the partial sum.
pub fn sum_c_over_l(k: u32, a: f64, rel_tol: f64, cell_budget: usize) -> Result<SeriesSum> {
    if k < 1 {
        return Err(Error::Domain("the series needs k >= 1".into()));
    }
    check_a(a)?;
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(Error::Parameter(format!(
            "rel_tol must lie in (0, 1), got {rel_tol}"
        )));
    }
    let mut l_max = 64u32;
    loop {
        let cells = (l_max as u128 + 1) * (k as u128 + 1);
        if cells > cell_budget as u128 {
            return Err(Error::Truncation(format!(
                "k={k} needs {l_max} rows ({cells} cells) for rel_tol={rel_tol}, over the budget of {cell_budget}"
            )));
        }
        let (value, bound) = partial_sums(a, l_max, k)?;
        let tail_bound = bound.tail(l_max, k);
        if tail_bound <= rel_tol * value {
            return Ok(SeriesSum {
                k,
                value,
                l_max,
                tail_bound,
            });
        }
        let needed = bound.rows_needed(k, rel_tol * value);
        let next = if needed > l_max as f64 {
            needed
        } else {
            2.0 * l_max as f64
        };
        if next >= u32::MAX as f64 {
            return Err(Error::Truncation(format!(
                "k={k} would need {next:e} rows for rel_tol={rel_tol}"
            )));
        }
        l_max = next as u32;
    }
}
