//! Test statistics behind the empirical fairness checks.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Upper tail of the chi-square distribution.
pub fn chi2_sf(x: f64, df: f64) -> f64 {
    if df <= 0.0 || !(x > 0.0) {
        return 1.0;
    }
    ChiSquared::new(df).map(|d| d.sf(x)).unwrap_or(1.0)
}

/// Statistic and degrees of freedom of a contingency-table test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableStat {
    pub statistic: f64,
    pub df: f64,
}

impl TableStat {
    pub const ZERO: TableStat = TableStat { statistic: 0.0, df: 0.0 };

    pub fn p_value(self) -> f64 {
        chi2_sf(self.statistic, self.df)
    }
}

impl std::ops::Add for TableStat {
    type Output = TableStat;
    fn add(self, o: TableStat) -> TableStat {
        TableStat { statistic: self.statistic + o.statistic, df: self.df + o.df }
    }
}

fn margins(table: &[Vec<f64>]) -> (Vec<usize>, Vec<usize>, Vec<f64>, Vec<f64>, f64) {
    let cols = table.first().map_or(0, Vec::len);
    let row_sums: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<f64> = (0..cols).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let rows_nz = (0..table.len()).filter(|&i| row_sums[i] > 0.0).collect();
    let cols_nz = (0..cols).filter(|&j| col_sums[j] > 0.0).collect();
    let total = row_sums.iter().sum();
    (rows_nz, cols_nz, row_sums, col_sums, total)
}

/// Likelihood-ratio (G) test of independence for a two-way table of counts.
/// Empty rows and columns are dropped before counting degrees of freedom.
pub fn g_test(table: &[Vec<f64>]) -> TableStat {
    let (rows, cols, rs, cs, total) = margins(table);
    if rows.len() < 2 || cols.len() < 2 {
        return TableStat::ZERO;
    }
    let mut g = 0.0;
    for &i in &rows {
        for &j in &cols {
            let o = table[i][j];
            if o > 0.0 {
                let e = rs[i] * cs[j] / total;
                g += o * (o / e).ln();
            }
        }
    }
    TableStat { statistic: (2.0 * g).max(0.0), df: ((rows.len() - 1) * (cols.len() - 1)) as f64 }
}

/// Pearson chi-square test of homogeneity; for a 2×2 table this is the
/// squared two-proportion z statistic.
pub fn pearson_chi2(table: &[Vec<f64>]) -> TableStat {
    let (rows, cols, rs, cs, total) = margins(table);
    if rows.len() < 2 || cols.len() < 2 {
        return TableStat::ZERO;
    }
    let mut x2 = 0.0;
    for &i in &rows {
        for &j in &cols {
            let e = rs[i] * cs[j] / total;
            let d = table[i][j] - e;
            x2 += d * d / e;
        }
    }
    TableStat { statistic: x2, df: ((rows.len() - 1) * (cols.len() - 1)) as f64 }
}

/// Midranks (1-based) of `values`, plus the tie-correction sum Σ(t³ − t).
pub fn midranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        let t = (j - i) as f64;
        ties += t * t * t - t;
        i = j;
    }
    (ranks, ties)
}

/// Kruskal–Wallis H across groups, with tie correction. `None` when fewer
/// than two groups are populated or every value is tied.
pub fn kruskal_wallis(values: &[f64], groups: &[usize], k: usize) -> Option<TableStat> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let (ranks, ties) = midranks(values);
    let nf = n as f64;
    let correction = 1.0 - ties / (nf * nf * nf - nf);
    if correction <= 1e-12 {
        return None;
    }
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (&g, &r) in groups.iter().zip(&ranks) {
        sums[g] += r;
        counts[g] += 1;
    }
    let populated = counts.iter().filter(|&&c| c > 0).count();
    if populated < 2 {
        return None;
    }
    let h: f64 = sums.iter().zip(&counts).filter(|(_, &c)| c > 0).map(|(&s, &c)| s * s / c as f64).sum::<f64>() * 12.0 / (nf * (nf + 1.0))
        - 3.0 * (nf + 1.0);
    Some(TableStat { statistic: (h / correction).max(0.0), df: (populated - 1) as f64 })
}

/// Absolute deviations from each group's median, the Brown–Forsythe
/// transform that turns a location test into a scale test.
pub fn median_deviations(values: &[f64], groups: &[usize], k: usize) -> Vec<f64> {
    let mut medians = vec![0.0; k];
    for (g, m) in medians.iter_mut().enumerate() {
        let mut vs: Vec<f64> = values.iter().zip(groups).filter(|(_, &h)| h == g).map(|(&v, _)| v).collect();
        if vs.is_empty() {
            continue;
        }
        vs.sort_by(f64::total_cmp);
        let mid = vs.len() / 2;
        *m = if vs.len().is_multiple_of(2) { 0.5 * (vs[mid - 1] + vs[mid]) } else { vs[mid] };
    }
    values.iter().zip(groups).map(|(&v, &g)| (v - medians[g]).abs()).collect()
}

/// Fisher's method: −2 Σ ln pᵢ against χ²(2k).
pub fn fisher_combine(p_values: &[f64]) -> f64 {
    if p_values.is_empty() {
        return 1.0;
    }
    let stat: f64 = p_values.iter().map(|&p| -2.0 * p.max(f64::MIN_POSITIVE).ln()).sum();
    chi2_sf(stat, 2.0 * p_values.len() as f64)
}

/// Assigns each value to one of `bins` equal-frequency bins by rank. Tied
/// values always share a bin.
pub fn equal_frequency_bins(values: &[f64], bins: usize) -> Vec<usize> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let bin = (i * bins / n).min(bins.saturating_sub(1));
        for &k in &order[i..j] {
            out[k] = bin;
        }
        i = j;
    }
    out
}

/// Residuals of an ordinary least-squares fit of `y` on an intercept and
/// the columns of `xs` (all of length `y.len()`). Falls back to centring
/// when the design is rank deficient.
pub fn ols_residuals(y: &[f64], xs: &[&[f64]]) -> Vec<f64> {
    let n = y.len();
    let mean_y = y.iter().sum::<f64>() / n.max(1) as f64;
    let centred: Vec<f64> = y.iter().map(|v| v - mean_y).collect();
    if xs.is_empty() || n <= xs.len() + 1 {
        return centred;
    }
    let p = xs.len() + 1;
    let design = nalgebra::DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { xs[j - 1][i] });
    let target = nalgebra::DVector::from_column_slice(y);
    let xtx = design.transpose() * &design;
    let scale = xtx.diagonal().iter().copied().fold(0.0f64, f64::max).max(1.0);
    match xtx.clone().cholesky() {
        Some(ch) if xtx.determinant().abs() > 1e-12 * scale.powi(p as i32) => {
            let beta = ch.solve(&(design.transpose() * &target));
            let fitted = &design * beta;
            y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect()
        }
        _ => centred,
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; zero for fewer than two values.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}
