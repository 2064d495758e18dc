//! Bias-analysis statistics: two-proportion Z-test, Fisher's exact test,
//! Spearman correlation, chi-square test of independence, normal-approximation
//! intervals, and the subgroup bias report built from them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use statrs::function::erf::erfc;
use statrs::function::factorial::ln_factorial;
use statrs::function::gamma::ln_gamma;

use crate::table::Demographics;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("pooled proportion is {0}; the Z statistic is undefined")]
    ZeroPooledVariance(f64),
    #[error("sample sizes must be at least 1")]
    EmptySample,
    #[error("contingency table has a zero margin")]
    DegenerateMargins,
    #[error("input is constant")]
    ConstantInput,
    #[error("need at least 3 paired observations, got {0}")]
    TooShort(usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("expected count is zero in a cell")]
    ZeroExpectedCell,
    #[error("unknown grouping column {0:?}")]
    UnknownColumn(String),
    #[error("subgroup {0:?} has no members")]
    EmptySubgroup(String),
}

pub type Result<T> = std::result::Result<T, StatsError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    ZTwoProp,
    FisherExact,
    Spearman,
    ChiSquare,
}

/// Serialises non-finite floats as the strings `"inf"`, `"-inf"`, `"nan"`.
mod nonfinite {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("bad float {other:?}"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test: TestKind,
    /// z, odds ratio, rho or chi-square depending on `test`.
    #[serde(with = "nonfinite")]
    pub statistic: f64,
    pub p_value: f64,
    pub preconditions_met: bool,
    pub notes: String,
}

fn two_sided_normal_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// Pooled two-proportion Z-test. Event counts may be fractional when they
/// are reconstructed from rounded rates. `preconditions_met` is false when a
/// sample has fewer than 5 events or non-events.
pub fn z_two_proportions(x1: f64, n1: f64, x2: f64, n2: f64) -> Result<TestResult> {
    if !(n1 >= 1.0 && n2 >= 1.0) {
        return Err(StatsError::EmptySample);
    }
    let pooled = (x1 + x2) / (n1 + n2);
    if pooled <= 0.0 || pooled >= 1.0 {
        return Err(StatsError::ZeroPooledVariance(pooled));
    }
    let (p1, p2) = (x1 / n1, x2 / n2);
    let se = (pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2)).sqrt();
    let z = (p1 - p2) / se;
    let ok = [x1, n1 - x1, x2, n2 - x2].iter().all(|&c| c >= 5.0);
    Ok(TestResult {
        test: TestKind::ZTwoProp,
        statistic: z,
        p_value: two_sided_normal_p(z),
        preconditions_met: ok,
        notes: if ok {
            String::new()
        } else {
            "np >= 5 and n(1-p) >= 5 not met".into()
        },
    })
}

/// Z-test from rates and sample sizes.
pub fn z_two_proportions_from_rates(p1: f64, n1: usize, p2: f64, n2: usize) -> Result<TestResult> {
    z_two_proportions(p1 * n1 as f64, n1 as f64, p2 * n2 as f64, n2 as f64)
}

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Fisher's exact test on `[[a, b], [c, d]]`, rows being groups and columns
/// event / non-event. The statistic is the odds ratio of the second group
/// relative to the first, `(c / d) / (a / b)`. The two-sided p-value sums the
/// hypergeometric probabilities of every table with the observed margins
/// that is no more likely than the observed one (relative slack 1e-12).
pub fn fisher_exact(a: u64, b: u64, c: u64, d: u64) -> Result<TestResult> {
    let (r1, r2, c1, c2) = (a + b, c + d, a + c, b + d);
    if r1 == 0 || r2 == 0 || c1 == 0 || c2 == 0 {
        return Err(StatsError::DegenerateMargins);
    }
    let n = r1 + r2;
    let ln_total = ln_choose(n, c1);
    let ln_p = |x: u64| ln_choose(r1, x) + ln_choose(r2, c1 - x) - ln_total;
    let lo = c1.saturating_sub(r2);
    let hi = r1.min(c1);
    let observed = ln_p(a);
    let cutoff = observed + (1.0f64 + 1e-12).ln();
    let p: f64 = (lo..=hi)
        .map(ln_p)
        .filter(|&lp| lp <= cutoff)
        .map(f64::exp)
        .sum();
    let (ad, bc) = ((a * d) as f64, (b * c) as f64);
    let odds = if ad == 0.0 {
        if bc == 0.0 {
            f64::NAN
        } else {
            f64::INFINITY
        }
    } else {
        bc / ad
    };
    Ok(TestResult {
        test: TestKind::FisherExact,
        statistic: odds,
        p_value: p.clamp(0.0, 1.0),
        preconditions_met: true,
        notes: String::new(),
    })
}

/// Average ranks (1-based); ties share the mean of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Sample size from which the Spearman p-value switches to the t
/// approximation.
pub const SPEARMAN_EXACT_BELOW: usize = 10;

/// Spearman rank correlation. For `n >= 10` the p-value uses
/// `t = rho * sqrt((n - 2) / (1 - rho^2))` with `n - 2` degrees of freedom;
/// smaller samples enumerate every permutation.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<TestResult> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::TooShort(n));
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let rho = pearson(&rx, &ry).ok_or(StatsError::ConstantInput)?;
    let (p, notes) = if n >= SPEARMAN_EXACT_BELOW {
        let p = if (1.0 - rho * rho) <= 0.0 {
            0.0
        } else {
            let t = rho * ((n as f64 - 2.0) / (1.0 - rho * rho)).sqrt();
            let dist = StudentsT::new(0.0, 1.0, n as f64 - 2.0).expect("valid t distribution");
            2.0 * dist.sf(t.abs())
        };
        (p, "t approximation".to_string())
    } else {
        (exact_spearman_p(&rx, &ry, rho), "exact permutation".to_string())
    };
    Ok(TestResult {
        test: TestKind::Spearman,
        statistic: rho,
        p_value: p.clamp(0.0, 1.0),
        preconditions_met: true,
        notes,
    })
}

fn exact_spearman_p(rx: &[f64], ry: &[f64], rho: f64) -> f64 {
    let n = ry.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    let mut extreme = 0u64;
    let mut total = 0u64;
    let mut permuted = vec![0.0; n];
    let mut visit = |perm: &[usize]| {
        for (slot, &k) in permuted.iter_mut().zip(perm) {
            *slot = ry[k];
        }
        let r = pearson(rx, &permuted).unwrap_or(0.0);
        total += 1;
        if r.abs() >= rho.abs() - 1e-12 {
            extreme += 1;
        }
    };
    visit(&perm);
    // Heap's algorithm.
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            visit(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    extreme as f64 / total as f64
}

/// Regularised lower incomplete gamma `P(a, x)` by its power series.
pub fn regularized_gamma_p_series(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let mut sum = 1.0 / a;
    let mut term = sum;
    let mut ap = a;
    for _ in 0..10_000 {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * 1e-17 {
            break;
        }
    }
    (sum.ln() - x + a * x.ln() - ln_gamma(a)).exp().clamp(0.0, 1.0)
}

/// Regularised upper incomplete gamma `Q(a, x)` by Lentz's continued
/// fraction.
pub fn regularized_gamma_q_continued_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    ((-x + a * x.ln() - ln_gamma(a)).exp() * h).clamp(0.0, 1.0)
}

/// Chi-square survival function `P(X > x)` with `df` degrees of freedom.
pub fn chi_square_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let (a, h) = (df / 2.0, x / 2.0);
    if h < a + 1.0 {
        1.0 - regularized_gamma_p_series(a, h)
    } else {
        regularized_gamma_q_continued_fraction(a, h)
    }
}

/// Pearson chi-square test of independence on a groups x outcomes table.
pub fn chi_square(observed: &[Vec<f64>]) -> Result<TestResult> {
    let rows = observed.len();
    let cols = observed.first().map_or(0, Vec::len);
    if rows < 2 || cols < 2 || observed.iter().any(|r| r.len() != cols) {
        return Err(StatsError::ZeroExpectedCell);
    }
    let row_sums: Vec<f64> = observed.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<f64> = (0..cols).map(|j| observed.iter().map(|r| r[j]).sum()).collect();
    let total: f64 = row_sums.iter().sum();
    let mut stat = 0.0;
    for (i, r) in observed.iter().enumerate() {
        for (j, &o) in r.iter().enumerate() {
            let e = row_sums[i] * col_sums[j] / total;
            if !(e > 0.0) {
                return Err(StatsError::ZeroExpectedCell);
            }
            stat += (o - e) * (o - e) / e;
        }
    }
    let df = ((rows - 1) * (cols - 1)) as f64;
    let small = observed
        .iter()
        .enumerate()
        .flat_map(|(i, r)| (0..r.len()).map(move |j| (i, j)))
        .any(|(i, j)| row_sums[i] * col_sums[j] / total < 5.0);
    Ok(TestResult {
        test: TestKind::ChiSquare,
        statistic: stat,
        p_value: chi_square_sf(stat, df),
        preconditions_met: !small,
        notes: format!("df = {df}"),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateInterval {
    pub rate: f64,
    pub lo: f64,
    pub hi: f64,
    pub half_width: f64,
    pub preconditions_met: bool,
}

/// `p ± z * sqrt(p (1 - p) / n)` with `z = 1.96` at the 95% level. Bounds
/// are not truncated to `[0, 1]` unless `truncate` is set.
pub fn normal_approx_ci(events: f64, n: f64, level: f64, truncate: bool) -> RateInterval {
    let rate = if n > 0.0 { events / n } else { 0.0 };
    let z = if (level - 0.95).abs() < 1e-12 {
        1.96
    } else {
        Normal::standard().inverse_cdf(0.5 + level / 2.0)
    };
    let half_width = if n > 0.0 { z * (rate * (1.0 - rate) / n).sqrt() } else { 0.0 };
    let (mut lo, mut hi) = (rate - half_width, rate + half_width);
    if truncate {
        lo = lo.max(0.0);
        hi = hi.min(1.0);
    }
    RateInterval {
        rate,
        lo,
        hi,
        half_width,
        preconditions_met: events >= 5.0 && n - events >= 5.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Misclassification,
    Underdiagnosis,
    Overdiagnosis,
}

impl Outcome {
    pub const ALL: [Outcome; 3] = [Outcome::Misclassification, Outcome::Underdiagnosis, Outcome::Overdiagnosis];

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Misclassification => "misclassification",
            Outcome::Underdiagnosis => "underdiagnosis",
            Outcome::Overdiagnosis => "overdiagnosis",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupOutcome {
    pub group: String,
    pub outcome: Outcome,
    pub n: usize,
    pub event_count: usize,
    pub rate: f64,
    pub ci: (f64, f64),
    pub half_width: f64,
    pub preconditions_met: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub outcome: Outcome,
    pub group_a: String,
    pub group_b: String,
    pub result: Option<TestResult>,
    pub note: String,
}

/// Column to group by. Continuous columns need `bin_edges`; bins are
/// half-open `[lo, hi)` except the last, which is closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupingSpec {
    pub column: String,
    pub bin_edges: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub column: String,
    pub groups: Vec<String>,
    pub excluded_missing: usize,
    pub outcomes: Vec<SubgroupOutcome>,
    pub comparisons: Vec<Comparison>,
    /// Spearman of the column value against per-sample misclassification
    /// (continuous columns only).
    pub correlation: Option<Comparison>,
    /// Chi-square over binned groups x {misclassified, correct}.
    pub chi_square: Option<Comparison>,
}

impl BiasReport {
    /// `group,outcome,rate,ci_lo,ci_hi,n,events`.
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("group,outcome,rate,ci_lo,ci_hi,n,events\n");
        for o in &self.outcomes {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                o.group,
                o.outcome.as_str(),
                o.rate,
                o.ci.0,
                o.ci.1,
                o.n,
                o.event_count
            ));
        }
        s
    }

    pub fn outcome(&self, group: &str, outcome: Outcome) -> Option<&SubgroupOutcome> {
        self.outcomes.iter().find(|o| o.group == group && o.outcome == outcome)
    }
}

fn bin_label(edges: &[f64], k: usize) -> String {
    format!("[{}, {}{}", edges[k], edges[k + 1], if k + 2 == edges.len() { "]" } else { ")" })
}

/// Compares two event counts with a Z-test, falling back to Fisher's exact
/// test when the Z-test preconditions fail.
pub fn compare_proportions(x1: usize, n1: usize, x2: usize, n2: usize) -> (Option<TestResult>, String) {
    match z_two_proportions(x1 as f64, n1 as f64, x2 as f64, n2 as f64) {
        Ok(z) if z.preconditions_met => (Some(z), String::new()),
        other => {
            let why = match other {
                Ok(_) => "z-test preconditions not met; Fisher exact used".to_string(),
                Err(e) => format!("{e}; Fisher exact used"),
            };
            match fisher_exact(x1 as u64, (n1 - x1) as u64, x2 as u64, (n2 - x2) as u64) {
                Ok(mut f) => {
                    f.notes = why.clone();
                    (Some(f), why)
                }
                Err(e) => (None, format!("{why}; {e}")),
            }
        }
    }
}

/// Per-subgroup misclassification, underdiagnosis (false negatives among
/// PD members) and overdiagnosis (false positives among non-PD members),
/// each with a normal-approximation interval, plus pairwise comparisons.
pub fn build_bias_report(
    predicted: &[bool],
    labels: &[bool],
    demographics: &[Demographics],
    spec: &GroupingSpec,
) -> Result<BiasReport> {
    if predicted.len() != labels.len() || labels.len() != demographics.len() {
        return Err(StatsError::LengthMismatch(predicted.len(), labels.len()));
    }
    let column = spec.column.as_str();
    let is_cat = Demographics::default().categorical(column).is_some();
    let is_cont = Demographics::default().continuous(column).is_some();
    if !is_cat && !is_cont {
        return Err(StatsError::UnknownColumn(column.to_string()));
    }

    let mut members: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let mut group_order: Vec<String> = Vec::new();
    let mut excluded = 0;
    let mut continuous_values: Vec<(usize, f64)> = Vec::new();
    if is_cat {
        for (i, d) in demographics.iter().enumerate() {
            match d.categorical(column).flatten() {
                Some(g) => members.entry(g).or_default().push(i),
                None => excluded += 1,
            }
        }
        group_order = members.keys().cloned().collect();
    } else {
        for (i, d) in demographics.iter().enumerate() {
            match d.continuous(column).flatten() {
                Some(v) => continuous_values.push((i, v)),
                None => excluded += 1,
            }
        }
        if let Some(edges) = &spec.bin_edges {
            for k in 0..edges.len().saturating_sub(1) {
                let label = bin_label(edges, k);
                let last = k + 2 == edges.len();
                let idx: Vec<usize> = continuous_values
                    .iter()
                    .filter(|(_, v)| *v >= edges[k] && (*v < edges[k + 1] || (last && *v <= edges[k + 1])))
                    .map(|(i, _)| *i)
                    .collect();
                if idx.is_empty() {
                    return Err(StatsError::EmptySubgroup(label));
                }
                group_order.push(label.clone());
                members.insert(label, idx);
            }
        }
    }

    let mut outcomes = Vec::new();
    let mut counts: BTreeMap<(Outcome, String), (usize, usize)> = BTreeMap::new();
    for g in &group_order {
        let idx = &members[g];
        for outcome in Outcome::ALL {
            let pool: Vec<usize> = idx
                .iter()
                .copied()
                .filter(|&i| match outcome {
                    Outcome::Misclassification => true,
                    Outcome::Underdiagnosis => labels[i],
                    Outcome::Overdiagnosis => !labels[i],
                })
                .collect();
            if pool.is_empty() {
                continue;
            }
            let events = pool.iter().filter(|&&i| predicted[i] != labels[i]).count();
            let ci = normal_approx_ci(events as f64, pool.len() as f64, 0.95, false);
            counts.insert((outcome, g.clone()), (events, pool.len()));
            outcomes.push(SubgroupOutcome {
                group: g.clone(),
                outcome,
                n: pool.len(),
                event_count: events,
                rate: ci.rate,
                ci: (ci.lo, ci.hi),
                half_width: ci.half_width,
                preconditions_met: ci.preconditions_met,
            });
        }
    }

    let mut comparisons = Vec::new();
    for outcome in Outcome::ALL {
        for (a, ga) in group_order.iter().enumerate() {
            for gb in &group_order[a + 1..] {
                let (Some(&(x1, n1)), Some(&(x2, n2))) =
                    (counts.get(&(outcome, ga.clone())), counts.get(&(outcome, gb.clone())))
                else {
                    continue;
                };
                let (result, note) = compare_proportions(x1, n1, x2, n2);
                comparisons.push(Comparison {
                    outcome,
                    group_a: ga.clone(),
                    group_b: gb.clone(),
                    result,
                    note,
                });
            }
        }
    }

    let mut correlation = None;
    let mut chi = None;
    if is_cont {
        let xs: Vec<f64> = continuous_values.iter().map(|&(_, v)| v).collect();
        let errs: Vec<f64> = continuous_values
            .iter()
            .map(|&(i, _)| f64::from(u8::from(predicted[i] != labels[i])))
            .collect();
        let (result, note) = match spearman(&xs, &errs) {
            Ok(r) => (Some(r), String::new()),
            Err(e) => (None, e.to_string()),
        };
        correlation = Some(Comparison {
            outcome: Outcome::Misclassification,
            group_a: column.to_string(),
            group_b: "misclassified".into(),
            result,
            note,
        });
        if group_order.len() >= 2 {
            let table: Vec<Vec<f64>> = group_order
                .iter()
                .map(|g| {
                    let (e, n) = counts[&(Outcome::Misclassification, g.clone())];
                    vec![e as f64, (n - e) as f64]
                })
                .collect();
            let (result, note) = match chi_square(&table) {
                Ok(r) => (Some(r), String::new()),
                Err(e) => (None, e.to_string()),
            };
            chi = Some(Comparison {
                outcome: Outcome::Misclassification,
                group_a: column.to_string(),
                group_b: "bins".into(),
                result,
                note,
            });
        }
    }

    Ok(BiasReport {
        column: column.to_string(),
        groups: group_order,
        excluded_missing: excluded,
        outcomes,
        comparisons,
        correlation,
        chi_square: chi,
    })
}
