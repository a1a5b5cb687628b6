//! The sparse weight sequence and its averaged companion.
//!
//! The weight `a(j)` equals `log2 j` on the thin windows
//! `|j - 2^(2^k)| <= k` (k >= 1) and `1` everywhere else. Its exponentially
//! weighted running average `b(j) = 2^(-j-1) * sum_{i<=j} 2^i a(i)` obeys the
//! recurrence `b(j+1) = (b(j) + a(j+1)) / 2`, which is what every certifier in
//! this module streams.
//!
//! Windows are super-exponentially sparse (centers 4, 16, 256, 65536, 2^32),
//! so membership is decided by walking `k` upwards; no tables are built.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{invalid, Error, Result};

/// Largest shell index a certification loop may run to.
pub const MAX_CERTIFIED_INDEX: i64 = 1 << 40;

/// Relative slack applied to the floating-point `b(j)` bound checks.
pub const B_BOUND_SLACK: f64 = 1e-9;

/// Maximum number of individual violations kept in a report.
const VIOLATION_SAMPLE: usize = 256;

/// Generation `k` of the sparse windows, centred on `2^(2^k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WindowIndex {
    pub k: u32,
    pub center: i128,
}

impl WindowIndex {
    /// Returns `None` once the center no longer fits in 128 bits.
    pub fn new(k: u32) -> Option<Self> {
        if k == 0 || k >= 7 {
            return None;
        }
        Some(WindowIndex {
            k,
            center: 1i128 << (1u32 << k),
        })
    }

    /// `{center - k, ..., center + k}`, where `a` carries the log weight.
    pub fn weight_range(&self) -> (i128, i128) {
        let k = self.k as i128;
        (self.center - k, self.center + k)
    }

    /// `{center - k, ..., center + 2k}`, where `b` is bounded by `log2 j`.
    pub fn bound_range(&self) -> (i128, i128) {
        let k = self.k as i128;
        (self.center - k, self.center + 2 * k)
    }

    /// Iterates windows whose left edge does not exceed `upto`.
    pub fn up_to(upto: i128) -> impl Iterator<Item = WindowIndex> {
        (1..)
            .map_while(WindowIndex::new)
            .take_while(move |w| w.center - w.k as i128 <= upto)
    }
}

fn bound_window(j: i64) -> Option<WindowIndex> {
    let j = j as i128;
    WindowIndex::up_to(j).find(|w| {
        let (lo, hi) = w.bound_range();
        lo <= j && j <= hi
    })
}

/// Whether `j` lies in some window `[2^(2^k) - k, 2^(2^k) + 2k]`.
pub fn in_bound_window(j: i64) -> bool {
    bound_window(j).is_some()
}

/// The weight `a(j)`: `log2 j` on the sparse windows, `1` elsewhere.
pub fn weight_a(j: i64) -> f64 {
    if j <= 0 {
        return 1.0;
    }
    let jj = j as i128;
    for w in WindowIndex::up_to(jj) {
        let (lo, hi) = w.weight_range();
        if lo <= jj && jj <= hi {
            return (j as f64).log2();
        }
    }
    1.0
}

/// Streaming evaluator of `b(1), b(2), ...` through the recurrence.
#[derive(Debug, Clone)]
pub struct AveragedB {
    next: i64,
    value: f64,
}

impl AveragedB {
    pub fn new() -> Self {
        AveragedB { next: 1, value: 0.0 }
    }
}

impl Default for AveragedB {
    fn default() -> Self {
        Self::new()
    }
}

impl Iterator for AveragedB {
    /// `(j, b(j))`
    type Item = (i64, f64);

    fn next(&mut self) -> Option<Self::Item> {
        let j = self.next;
        self.value = if j == 1 {
            // 2^-2 * 2 * a(1)
            0.5 * weight_a(1)
        } else {
            0.5 * (self.value + weight_a(j))
        };
        self.next += 1;
        Some((j, self.value))
    }
}

/// `b(j)` by the recurrence. Linear in `j`.
pub fn averaged_b(j: i64) -> Result<f64> {
    if j < 1 {
        return invalid(format!("b(j) needs j >= 1, got {j}"));
    }
    if j > MAX_CERTIFIED_INDEX {
        return Err(Error::Overflow(format!("b({j}) beyond 2^40")));
    }
    Ok(AveragedB::new().nth((j - 1) as usize).map(|(_, b)| b).unwrap())
}

/// `b(j)` straight from the weighted sum, each term scaled by `2^(i-j-1)`.
///
/// Cross-check only; the recurrence is what the certifiers use.
pub fn averaged_b_closed(j: i64) -> Result<f64> {
    if !(1..=4096).contains(&j) {
        return invalid(format!("closed-form b(j) supports 1 <= j <= 4096, got {j}"));
    }
    Ok((1..=j)
        .map(|i| ((i - j - 1) as f64).exp2() * weight_a(i))
        .sum())
}

/// Table `b(1..=j_max)`, index 0 unused.
pub fn b_table(j_max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(j_max + 1);
    out.push(f64::NAN);
    out.extend(AveragedB::new().take(j_max).map(|(_, b)| b));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Violation {
    pub index: i64,
    pub value: f64,
    pub bound: f64,
}

/// Outcome of an exhaustive certification over an index range.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SequenceReport {
    pub name: String,
    /// Inclusive range of indices checked.
    pub range_checked: (i64, i64),
    /// First few violations, in index order.
    pub violations: Vec<Violation>,
    pub violation_count: u64,
    pub max_ratio: f64,
    /// Index where `value / bound` peaked.
    pub argmax_ratio: i64,
    /// Smallest observed `bound - value`.
    pub min_margin: f64,
    pub min_margin_index: i64,
    /// Value at the last index checked.
    pub final_value: f64,
}

impl SequenceReport {
    fn new(name: &str, lo: i64, hi: i64) -> Self {
        SequenceReport {
            name: name.to_string(),
            range_checked: (lo, hi),
            violations: Vec::new(),
            violation_count: 0,
            max_ratio: 0.0,
            argmax_ratio: lo,
            min_margin: f64::INFINITY,
            min_margin_index: lo,
            final_value: f64::NAN,
        }
    }

    fn observe(&mut self, index: i64, value: f64, bound: f64, ok: bool) {
        self.final_value = value;
        let ratio = value / bound;
        if ratio > self.max_ratio {
            self.max_ratio = ratio;
            self.argmax_ratio = index;
        }
        let margin = bound - value;
        if margin < self.min_margin {
            self.min_margin = margin;
            self.min_margin_index = index;
        }
        if !ok {
            self.violation_count += 1;
            if self.violations.len() < VIOLATION_SAMPLE {
                self.violations.push(Violation {
                    index,
                    value,
                    bound,
                });
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.violation_count == 0
    }
}

/// Bound on `b(j)`: `log2 j` inside a bound window, `2` outside.
pub fn b_bound(j: i64) -> f64 {
    if in_bound_window(j) {
        (j as f64).log2()
    } else {
        2.0
    }
}

/// Streams `b(1..=j_max)` and checks every value against [`b_bound`].
pub fn certify_b_bound(j_max: i64) -> Result<SequenceReport> {
    if j_max < 4 {
        return invalid(format!("j_max must be >= 4, got {j_max}"));
    }
    if j_max > MAX_CERTIFIED_INDEX {
        return Err(Error::Overflow(format!(
            "j_max = {j_max} exceeds the certified range 2^40"
        )));
    }
    let mut report = SequenceReport::new("b-bound", 1, j_max);
    for (j, b) in AveragedB::new().take(j_max as usize) {
        let bound = b_bound(j);
        let ok = b <= bound * (1.0 + B_BOUND_SLACK);
        report.observe(j, b, bound, ok);
    }
    Ok(report)
}

/// Members of `S(n)`: indices `1..=n` lying in some bound window.
pub fn sparse_set_members(n: i64) -> BTreeSet<i64> {
    let mut out = BTreeSet::new();
    for w in WindowIndex::up_to(n as i128) {
        let (lo, hi) = w.bound_range();
        let lo = lo.max(1);
        let hi = hi.min(n as i128);
        out.extend((lo..=hi).map(|l| l as i64));
    }
    out
}

/// `|S(n)|` without materialising the set.
pub fn sparse_set_size(n: i64) -> u64 {
    WindowIndex::up_to(n as i128)
        .map(|w| {
            let (lo, hi) = w.bound_range();
            let hi = hi.min(n as i128);
            let lo = lo.max(1);
            if hi >= lo {
                (hi - lo + 1) as u64
            } else {
                0
            }
        })
        .sum()
}

/// `(3 L + 5) L / 2` with `L = log2 log2 n`.
pub fn sparse_set_bound(n: i64) -> f64 {
    let l = (n as f64).log2().log2();
    (3.0 * l + 5.0) * l / 2.0
}

/// Checks `|S(n)| <= sparse_set_bound(n)` for every `3 <= n <= n_max`, no slack.
pub fn certify_sparse_set(n_max: i64) -> Result<SequenceReport> {
    if n_max < 3 {
        return invalid(format!("n_max must be >= 3, got {n_max}"));
    }
    if n_max > MAX_CERTIFIED_INDEX {
        return Err(Error::Overflow(format!(
            "n_max = {n_max} exceeds the certified range 2^40"
        )));
    }
    let mut report = SequenceReport::new("sparse-set", 3, n_max);
    let mut count = sparse_set_size(2);
    for n in 3..=n_max {
        if in_bound_window(n) {
            count += 1;
        }
        let bound = sparse_set_bound(n);
        let size = count as f64;
        report.observe(n, size, bound, size <= bound);
    }
    Ok(report)
}

/// `j0(k) = ceil(log2 k) + 1`, computed without floating-point logs.
pub fn j0_of_k(k: f64) -> Result<u32> {
    if !(k >= 1.0) || !k.is_finite() {
        return invalid(format!("j0(k) needs finite k >= 1, got {k}"));
    }
    let mut e = 0u32;
    while (e as f64).exp2() < k {
        e += 1;
    }
    Ok(e + 1)
}

/// Result of the b-sum averaging certification.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AveragingReport {
    /// Minimal `n0` such that both partial sums stay `<= 3n` on `[n0, n_max]`;
    /// `None` when the last violation sits at `n_max` itself.
    pub n0: Option<i64>,
    /// Range `[n0, n_max]` when `n0` exists (violation-free), otherwise the
    /// full range with every violation.
    pub report: SequenceReport,
    /// First index where either sum exceeded `3n`.
    pub first_violation: Option<i64>,
    pub last_violation: Option<i64>,
    /// `sum_{k<=n} b(j0(2k))` and `sum_{k<=n} b(j0(2k+1))` at `n = n_max`.
    pub even_sum: f64,
    pub odd_sum: f64,
}

impl AveragingReport {
    pub fn passed(&self) -> bool {
        self.n0.is_some()
    }
}

/// Accumulates `sum b(j0(2k))` and `sum b(j0(2k+1))` and finds the minimal `n0`
/// beyond which both stay below `3n` up to `n_max`.
pub fn certify_b_sum_averaging(n_max: i64) -> Result<AveragingReport> {
    if n_max < 1 {
        return invalid(format!("n_max must be >= 1, got {n_max}"));
    }
    if n_max > MAX_CERTIFIED_INDEX {
        return Err(Error::Overflow(format!(
            "n_max = {n_max} exceeds the certified range 2^40"
        )));
    }
    let j_top = j0_of_k((2 * n_max + 1) as f64)? as usize;
    let b = b_table(j_top);

    let mut ratios = Vec::with_capacity(n_max as usize);
    let (mut even, mut odd) = (0.0f64, 0.0f64);
    let mut first = None;
    let mut last = None;
    for n in 1..=n_max {
        even += b[j0_of_k((2 * n) as f64)? as usize];
        odd += b[j0_of_k((2 * n + 1) as f64)? as usize];
        let bound = 3.0 * n as f64;
        let worst = even.max(odd);
        if worst > bound {
            first.get_or_insert(n);
            last = Some(n);
        }
        ratios.push((n, worst, bound));
    }

    let n0 = match last {
        None => Some(1),
        Some(l) if l < n_max => Some(l + 1),
        Some(_) => None,
    };
    let start = n0.unwrap_or(1);
    let mut report = SequenceReport::new("b_sum_averaging", start, n_max);
    for &(n, worst, bound) in &ratios[(start - 1) as usize..] {
        report.observe(n, worst, bound, worst <= bound);
    }
    Ok(AveragingReport {
        n0,
        report,
        first_violation: first,
        last_violation: last,
        even_sum: even,
        odd_sum: odd,
    })
}

/// `B(n) = sum_{k=1}^{n} (b(j0(2k)) + b(j0(2k+1)))` for `n = 0..=n_max`.
pub fn paired_b_sums(n_max: usize) -> Vec<f64> {
    let j_top = j0_of_k((2 * n_max + 1).max(1) as f64).unwrap() as usize;
    let b = b_table(j_top);
    let mut out = Vec::with_capacity(n_max + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n_max {
        acc += b[j0_of_k((2 * k) as f64).unwrap() as usize]
            + b[j0_of_k((2 * k + 1) as f64).unwrap() as usize];
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn weight_anchor_values() {
        assert_eq!(weight_a(0), 1.0);
        assert_eq!(weight_a(-17), 1.0);
        assert_eq!(weight_a(1), 1.0);
        assert_eq!(weight_a(2), 1.0);
        assert_eq!(weight_a(3), 3f64.log2());
        assert_eq!(weight_a(4), 2.0);
        assert_eq!(weight_a(5), 5f64.log2());
        assert_eq!(weight_a(6), 1.0);
        assert_eq!(weight_a(13), 1.0);
        for j in 14..=18 {
            assert_eq!(weight_a(j), (j as f64).log2());
        }
        assert_eq!(weight_a(16), 4.0);
        assert_eq!(weight_a(19), 1.0);
        assert_eq!(weight_a(1 << 32), 32.0);
        assert_eq!(weight_a((1 << 32) + 5), ((1u64 << 32) as f64 + 5.0).log2());
        assert_eq!(weight_a((1 << 32) + 6), 1.0);
    }

    #[test]
    fn windows_are_disjoint_and_sized() {
        let ws: Vec<_> = WindowIndex::up_to(i64::MAX as i128).collect();
        assert_eq!(ws.len(), 5);
        for w in &ws {
            let (lo, hi) = w.weight_range();
            assert_eq!(hi - lo + 1, 2 * w.k as i128 + 1);
            let (lo, hi) = w.bound_range();
            assert_eq!(hi - lo + 1, 3 * w.k as i128 + 1);
        }
        for pair in ws.windows(2) {
            assert!(pair[0].bound_range().1 < pair[1].bound_range().0);
        }
    }

    #[test]
    fn b_anchor_values() {
        assert_eq!(averaged_b(1).unwrap(), 0.5);
        assert_eq!(averaged_b(2).unwrap(), 0.75);
        assert_relative_eq!(
            averaged_b(3).unwrap(),
            (3.0 + 4.0 * 3f64.log2()) / 8.0,
            max_relative = 1e-15
        );
        // exact-arithmetic oracle: b(4..6) = 1.583740625180289, 1.9528343600338256, 1.4764171800169128
        assert_relative_eq!(averaged_b(4).unwrap(), 1.583740625180289, max_relative = 1e-14);
        assert_relative_eq!(averaged_b(5).unwrap(), 1.9528343600338256, max_relative = 1e-14);
        assert_relative_eq!(averaged_b(6).unwrap(), 1.4764171800169128, max_relative = 1e-14);
        assert!(averaged_b(4).unwrap() <= 2.0);
        assert!(averaged_b(0).is_err());
    }

    #[test]
    fn closed_sum_matches_recurrence() {
        let table = b_table(64);
        for j in 1..=64 {
            let closed = averaged_b_closed(j).unwrap();
            assert_relative_eq!(closed, table[j as usize], max_relative = 1e-12);
            assert!(table[j as usize] >= 0.5);
        }
    }

    #[test]
    fn b_bound_small_and_errors() {
        let r = certify_b_bound(4).unwrap();
        assert!(r.passed());
        assert_eq!(r.range_checked, (1, 4));
        assert!(certify_b_bound(1).is_err());
        assert!(matches!(
            certify_b_bound(MAX_CERTIFIED_INDEX + 1),
            Err(Error::Overflow(_))
        ));
    }

    #[test]
    fn sparse_set_enumeration() {
        assert!(sparse_set_members(2).is_empty());
        let s10: Vec<_> = sparse_set_members(10).into_iter().collect();
        assert_eq!(s10, vec![3, 4, 5, 6]);
        let s20 = sparse_set_members(20);
        assert_eq!(s20.len(), 11);
        assert!(s20.contains(&14) && s20.contains(&20) && !s20.contains(&13));
        assert_eq!(sparse_set_size(3), 1);
        assert_eq!(sparse_set_size(10), 4);
        assert_eq!(sparse_set_size(20), 11);
        assert_eq!(sparse_set_size(262), 21);
    }

    #[test]
    fn sparse_set_spot_values() {
        assert!(4.0 <= sparse_set_bound(10));
        assert_relative_eq!(sparse_set_bound(10), 8.83, epsilon = 0.01);
        assert!(1.0 <= sparse_set_bound(3));
        assert!(certify_sparse_set(2).is_err());
        assert!(certify_sparse_set(1000).unwrap().passed());
    }

    #[test]
    fn j0_values() {
        assert_eq!(j0_of_k(1.0).unwrap(), 1);
        assert_eq!(j0_of_k(2.0).unwrap(), 2);
        assert_eq!(j0_of_k(3.0).unwrap(), 3);
        assert_eq!(j0_of_k(4.0).unwrap(), 3);
        assert_eq!(j0_of_k(5.0).unwrap(), 4);
        assert_eq!(j0_of_k(1.5).unwrap(), 2);
        assert!(j0_of_k(0.5).is_err());
        assert!(j0_of_k(f64::NAN).is_err());
    }

    #[test]
    fn averaging_small_range() {
        let r = certify_b_sum_averaging(1000).unwrap();
        assert_eq!(r.n0, Some(1));
        assert!(r.report.passed());
        // n = 1: b(j0(2)) = b(2) = 0.75
        let one = certify_b_sum_averaging(1).unwrap();
        assert_eq!(one.even_sum, 0.75);
        assert!(certify_b_sum_averaging(0).is_err());
    }

    #[test]
    fn paired_sums_match_definition() {
        let b = b_table(16);
        let sums = paired_b_sums(3);
        assert_eq!(sums[0], 0.0);
        assert_eq!(sums[1], b[2] + b[3]);
        assert!((sums[3] - (b[2] + b[3] + b[3] + b[4] + b[4] + b[4])).abs() < 1e-14);
    }
}
