//! What reruns cost: wall-clock delay and machine time.
//!
//! Waiting time spans from the start of the first attempt to the end of its
//! last attempt, the window in which a developer is stuck waiting for a green
//! build. Computational time sums the runtime of every job over every
//! attempt. Both are computed at millisecond resolution. Timestamps come from
//! CI clocks and occasionally run backwards; negative spans clamp to zero and
//! surface as diagnostics instead of poisoning aggregates.

use serde::{Deserialize, Serialize};

use crate::diag::Diagnostic;
use crate::model::{BuildId, RerunSequence};

/// Cost breakdown for one rerun sequence. Durations are milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub build_id: BuildId,
    pub waiting_ms: i64,
    pub computational_ms: i64,
    pub per_attempt: Vec<AttemptCost>,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptCost {
    pub run_attempt: u32,
    pub computational_ms: i64,
}

/// Wall-clock window from first-attempt start to last-attempt end.
pub fn waiting_time(seq: &RerunSequence) -> (i64, Vec<Diagnostic>) {
    let start = seq.first_attempt().started_at;
    let end = seq.last_attempt().updated_at;
    let ms = (end - start).num_milliseconds();
    if ms < 0 {
        let d = Diagnostic::new(
            format!("build {}", seq.build_id()),
            format!("waiting time clamped: end precedes start by {} ms", -ms),
        );
        (0, vec![d])
    } else {
        (ms, Vec::new())
    }
}

/// Total machine time: the sum of every job's runtime over every attempt.
pub fn computational_time(seq: &RerunSequence) -> (i64, Vec<Diagnostic>) {
    let mut diags = Vec::new();
    let mut total = 0i64;
    for build in seq.attempts() {
        total += attempt_computational_ms(build, &mut diags);
    }
    (total, diags)
}

fn attempt_computational_ms(
    build: &crate::model::BuildRecord,
    diags: &mut Vec<Diagnostic>,
) -> i64 {
    let mut total = 0i64;
    for job in &build.jobs {
        let ctx = || format!("build {} attempt {} job {}", job.build_id, job.attempt, job.name);
        match (job.started_at, job.completed_at) {
            (Some(s), Some(c)) => {
                let ms = (c - s).num_milliseconds();
                if ms < 0 {
                    diags.push(Diagnostic::new(
                        ctx(),
                        format!("negative duration ({ms} ms) contributes 0"),
                    ));
                } else {
                    total += ms;
                }
            }
            _ => diags.push(Diagnostic::new(ctx(), "missing timestamps, contributes 0")),
        }
    }
    total
}

/// Both cost metrics plus a per-attempt breakdown of machine time.
pub fn cost_report(seq: &RerunSequence) -> CostReport {
    let (waiting_ms, mut diagnostics) = waiting_time(seq);
    let mut computational_ms = 0i64;
    let mut per_attempt = Vec::new();
    for build in seq.attempts() {
        let ms = attempt_computational_ms(build, &mut diagnostics);
        computational_ms += ms;
        per_attempt.push(AttemptCost { run_attempt: build.run_attempt, computational_ms: ms });
    }
    CostReport {
        build_id: seq.build_id(),
        waiting_ms,
        computational_ms,
        per_attempt,
        diagnostics,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub count: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
}

/// Result of comparing two duration samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostComparison {
    pub rerun: GroupStats,
    pub non_rerun: GroupStats,
    pub p_value: f64,
    pub test_name: String,
    /// `exact` for small samples, `normal-approximation` beyond that.
    pub method: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CostError {
    #[error("{which} group has {size} observations, need at least 2")]
    GroupTooSmall { which: &'static str, size: usize },
}

/// Compares duration distributions between rerun and non-rerun builds with a
/// two-sided Mann-Whitney U test.
pub fn compare_costs(rerun_ms: &[i64], non_rerun_ms: &[i64]) -> Result<CostComparison, CostError> {
    if rerun_ms.len() < 2 {
        return Err(CostError::GroupTooSmall { which: "rerun", size: rerun_ms.len() });
    }
    if non_rerun_ms.len() < 2 {
        return Err(CostError::GroupTooSmall { which: "non-rerun", size: non_rerun_ms.len() });
    }
    let a: Vec<f64> = rerun_ms.iter().map(|&v| v as f64).collect();
    let b: Vec<f64> = non_rerun_ms.iter().map(|&v| v as f64).collect();
    let (p_value, method) = mann_whitney_two_sided(&a, &b);
    Ok(CostComparison {
        rerun: group_stats(&a),
        non_rerun: group_stats(&b),
        p_value,
        test_name: "mann-whitney-u-two-sided".to_string(),
        method: method.to_string(),
    })
}

fn group_stats(v: &[f64]) -> GroupStats {
    let mut sorted = v.to_vec();
    sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    GroupStats {
        count: n,
        mean_ms: v.iter().sum::<f64>() / n as f64,
        median_ms: median,
    }
}

/// Largest number of label assignments we are willing to enumerate exactly.
/// Below this the test is the exact permutation distribution of U; above it
/// the normal approximation with tie correction takes over.
const EXACT_ENUMERATION_CAP: u128 = 200_000;

/// Two-sided Mann-Whitney p-value for two samples. Returns the p-value and
/// which method produced it.
pub fn mann_whitney_two_sided(a: &[f64], b: &[f64]) -> (f64, &'static str) {
    let (n, m) = (a.len(), b.len());
    assert!(n >= 1 && m >= 1, "both samples must be non-empty");
    // Midranks of the pooled sample, doubled so they stay integers.
    let ranks2 = doubled_midranks(a, b);
    let u2_obs: i64 = ranks2[..n].iter().sum::<i64>() - (n as i64) * (n as i64 + 1);
    if binomial(n + m, n.min(m)) <= EXACT_ENUMERATION_CAP {
        (exact_two_sided_p(&ranks2, n, u2_obs), "exact")
    } else {
        (normal_two_sided_p(&ranks2, n, m, u2_obs), "normal-approximation")
    }
}

/// Doubled midranks of the pooled sample `a ++ b`, in that element order.
/// Doubling keeps tied midranks (multiples of one half) in exact integers.
fn doubled_midranks(a: &[f64], b: &[f64]) -> Vec<i64> {
    let pooled: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].partial_cmp(&pooled[j]).unwrap());
    let mut ranks2 = vec![0i64; pooled.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && pooled[order[j]] == pooled[order[i]] {
            j += 1;
        }
        // Positions i..j (0-based) share the average of ranks i+1 ..= j.
        let avg2 = (i as i64 + 1) + (j as i64); // = 2 * (i+1 + j) / 2
        for &idx in &order[i..j] {
            ranks2[idx] = avg2;
        }
        i = j;
    }
    ranks2
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
        if acc > EXACT_ENUMERATION_CAP * 1_000 {
            return u128::MAX;
        }
    }
    acc
}

/// Exact permutation p-value: the fraction of n-subsets of the pooled ranks
/// whose U deviates from the null center at least as much as the observed U.
/// All arithmetic is on doubled ranks, so comparisons are exact.
fn exact_two_sided_p(ranks2: &[i64], n: usize, u2_obs: i64) -> f64 {
    let total = ranks2.len();
    let m = total - n;
    let center2 = (n * m) as i64; // doubled U runs 0 ..= 2nm, center nm
    let dev_obs = (u2_obs - center2).abs();
    let shift = (n as i64) * (n as i64 + 1);

    // Walk every n-combination of indices with the classic odometer scheme.
    let mut idx: Vec<usize> = (0..n).collect();
    let mut hits: u64 = 0;
    let mut count: u64 = 0;
    loop {
        let r2: i64 = idx.iter().map(|&i| ranks2[i]).sum();
        let u2 = r2 - shift;
        if (u2 - center2).abs() >= dev_obs {
            hits += 1;
        }
        count += 1;
        // Advance to the next combination.
        let mut pos = n;
        while pos > 0 {
            pos -= 1;
            if idx[pos] != pos + total - n {
                idx[pos] += 1;
                for k in pos + 1..n {
                    idx[k] = idx[k - 1] + 1;
                }
                break;
            }
            if pos == 0 {
                return hits as f64 / count as f64;
            }
        }
    }
}

/// Normal approximation with tie-corrected variance and continuity
/// correction, on doubled ranks.
fn normal_two_sided_p(ranks2: &[i64], n: usize, m: usize, u2_obs: i64) -> f64 {
    let nn = n as f64;
    let mm = m as f64;
    let nt = nn + mm;
    // Tie correction needs the tie group sizes of the pooled sample.
    let mut sorted = ranks2.to_vec();
    sorted.sort_unstable();
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let var = nn * mm / 12.0 * ((nt + 1.0) - tie_term / (nt * (nt - 1.0)));
    if var <= 0.0 {
        return 1.0; // every pooled value tied with every other
    }
    let u = u2_obs as f64 / 2.0;
    let center = nn * mm / 2.0;
    let diff = u - center;
    let z = if diff.abs() <= 0.5 {
        0.0
    } else {
        (diff.abs() - 0.5) / var.sqrt() // continuity correction
    };
    (2.0 * standard_normal_cdf(-z)).clamp(0.0, 1.0)
}

/// CDF of the standard normal distribution, via the Abramowitz-Stegun 7.1.26
/// rational approximation. Absolute error below 1.5e-7; the lower tail is
/// computed through erfc directly so tiny probabilities keep their magnitude.
pub fn standard_normal_cdf(x: f64) -> f64 {
    let z = x / std::f64::consts::SQRT_2;
    if z >= 0.0 {
        1.0 - 0.5 * erfc_nonneg(z)
    } else {
        0.5 * erfc_nonneg(-z)
    }
}

/// Complementary error function for x >= 0.
fn erfc_nonneg(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    poly * (-x * x).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BuildRecord, Conclusion, JobRecord, Outcome, RerunSequence};
    use chrono::{DateTime, TimeZone, Utc};

    fn t(h: u32, min: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2024, 3, 1, h, min, 0).unwrap()
    }

    fn build_at(
        attempt: u32,
        started: DateTime<Utc>,
        updated: DateTime<Utc>,
        jobs: Vec<JobRecord>,
    ) -> BuildRecord {
        BuildRecord {
            build_id: 11,
            repo: "acme/widget".to_string(),
            run_attempt: attempt,
            trigger_event: "push".to_string(),
            started_at: started,
            updated_at: updated,
            outcome: Outcome::completed(Conclusion::Failure),
            jobs,
        }
    }

    fn job_span(attempt: u32, name: &str, s: DateTime<Utc>, c: DateTime<Utc>) -> JobRecord {
        JobRecord {
            job_id: 1000 + attempt as u64,
            build_id: 11,
            attempt,
            name: name.to_string(),
            started_at: Some(s),
            completed_at: Some(c),
            outcome: Outcome::completed(Conclusion::Failure),
            log_ref: None,
        }
    }

    #[test]
    fn waiting_spans_first_start_to_last_end() {
        let seq = RerunSequence::new(vec![
            build_at(1, t(10, 0), t(10, 10), vec![]),
            build_at(2, t(10, 30), t(10, 50), vec![]),
        ])
        .unwrap();
        let (ms, diags) = waiting_time(&seq);
        assert_eq!(ms, 50 * 60 * 1000);
        assert!(diags.is_empty());
    }

    #[test]
    fn skewed_clock_clamps_to_zero_with_diagnostic() {
        let seq =
            RerunSequence::new(vec![build_at(1, t(10, 30), t(10, 0), vec![])]).unwrap();
        let (ms, diags) = waiting_time(&seq);
        assert_eq!(ms, 0);
        assert_eq!(diags.len(), 1);
        assert!(diags[0].message.contains("clamped"));
    }

    #[test]
    fn computational_time_sums_all_jobs_of_all_attempts() {
        let seq = RerunSequence::new(vec![
            build_at(
                1,
                t(10, 0),
                t(10, 12),
                vec![
                    job_span(1, "a", t(10, 0), t(10, 5)),
                    job_span(1, "b", t(10, 0), t(10, 7)),
                ],
            ),
            build_at(2, t(10, 20), t(10, 30), vec![job_span(2, "a", t(10, 20), t(10, 26))]),
        ])
        .unwrap();
        let (ms, diags) = computational_time(&seq);
        assert_eq!(ms, 18 * 60 * 1000);
        assert!(diags.is_empty());
        let report = cost_report(&seq);
        assert_eq!(report.computational_ms, ms);
        assert_eq!(
            report.per_attempt,
            vec![
                AttemptCost { run_attempt: 1, computational_ms: 12 * 60 * 1000 },
                AttemptCost { run_attempt: 2, computational_ms: 6 * 60 * 1000 },
            ]
        );
    }

    #[test]
    fn negative_job_duration_contributes_zero() {
        let seq = RerunSequence::new(vec![build_at(
            1,
            t(10, 0),
            t(10, 12),
            vec![
                job_span(1, "ok", t(10, 0), t(10, 4)),
                job_span(1, "skewed", t(10, 10), t(10, 2)),
            ],
        )])
        .unwrap();
        let (ms, diags) = computational_time(&seq);
        assert_eq!(ms, 4 * 60 * 1000);
        assert_eq!(diags.len(), 1);
        assert!(diags[0].context.contains("skewed"));
    }

    #[test]
    fn separated_triples_give_exact_point_one() {
        let cmp = compare_costs(&[1, 2, 3], &[100, 101, 102]).unwrap();
        assert_eq!(cmp.method, "exact");
        assert!((cmp.p_value - 0.1).abs() < 1e-12);
        assert!(cmp.p_value <= 0.1);
        assert_eq!(cmp.rerun.median_ms, 2.0);
        assert_eq!(cmp.non_rerun.mean_ms, 101.0);
    }

    #[test]
    fn identical_groups_are_indistinguishable() {
        let cmp = compare_costs(&[5, 5, 5], &[5, 5, 5]).unwrap();
        assert_eq!(cmp.p_value, 1.0);
    }

    #[test]
    fn undersized_group_is_rejected() {
        assert_eq!(
            compare_costs(&[1], &[2, 3]),
            Err(CostError::GroupTooSmall { which: "rerun", size: 1 })
        );
        assert_eq!(
            compare_costs(&[1, 2], &[]),
            Err(CostError::GroupTooSmall { which: "non-rerun", size: 0 })
        );
    }

    /// Independent oracle: recursive enumeration of group-A index choices,
    /// with midranks computed by direct position averaging.
    fn oracle_exact_p(a: &[f64], b: &[f64]) -> f64 {
        let pooled: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
        let n = a.len();
        let midrank = |v: f64| -> f64 {
            let below = pooled.iter().filter(|&&x| x < v).count() as f64;
            let equal = pooled.iter().filter(|&&x| x == v).count() as f64;
            below + (equal + 1.0) / 2.0
        };
        let u_of = |chosen: &[usize]| -> f64 {
            let r: f64 = chosen.iter().map(|&i| midrank(pooled[i])).sum();
            r - (n * (n + 1)) as f64 / 2.0
        };
        let obs: Vec<usize> = (0..n).collect();
        let center = (n * b.len()) as f64 / 2.0;
        let dev_obs = (u_of(&obs) - center).abs();
        let mut hits = 0u64;
        let mut count = 0u64;
        fn walk(
            start: usize,
            left: usize,
            total: usize,
            chosen: &mut Vec<usize>,
            visit: &mut dyn FnMut(&[usize]),
        ) {
            if left == 0 {
                visit(chosen);
                return;
            }
            for i in start..=total - left {
                chosen.push(i);
                walk(i + 1, left - 1, total, chosen, visit);
                chosen.pop();
            }
        }
        walk(0, n, pooled.len(), &mut Vec::new(), &mut |chosen| {
            if (u_of(chosen) - center).abs() >= dev_obs - 1e-9 {
                hits += 1;
            }
            count += 1;
        });
        hits as f64 / count as f64
    }

    #[test]
    fn exact_path_matches_independent_enumeration() {
        let cases: Vec<(Vec<f64>, Vec<f64>)> = vec![
            (vec![1.0, 2.0, 3.0], vec![100.0, 101.0, 102.0]),
            (vec![1.0, 2.0, 2.0, 9.0], vec![2.0, 3.0, 5.0]),
            (vec![7.0, 7.0], vec![7.0, 7.0, 8.0]),
            (vec![1.0, 4.0, 6.0, 6.0, 10.0], vec![2.0, 3.0, 6.0, 11.0, 12.0, 13.0]),
            (vec![0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]),
        ];
        for (a, b) in cases {
            let (p, method) = mann_whitney_two_sided(&a, &b);
            assert_eq!(method, "exact");
            let want = oracle_exact_p(&a, &b);
            assert!(
                (p - want).abs() < 1e-12,
                "a={a:?} b={b:?}: got {p}, oracle {want}"
            );
        }
    }

    #[test]
    fn approximation_is_close_to_exact_on_medium_samples() {
        let a: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..10).map(|i| i as f64 + 3.5).collect();
        let ranks2 = doubled_midranks(&a, &b);
        let u2 = ranks2[..10].iter().sum::<i64>() - 10 * 11;
        let exact = exact_two_sided_p(&ranks2, 10, u2);
        let approx = normal_two_sided_p(&ranks2, 10, 10, u2);
        assert!((exact - approx).abs() < 0.02, "exact {exact} vs approx {approx}");
    }

    #[test]
    fn large_separated_groups_reject_strongly() {
        let a: Vec<i64> = (0..40).collect();
        let b: Vec<i64> = (1000..1040).collect();
        let cmp = compare_costs(&a, &b).unwrap();
        assert_eq!(cmp.method, "normal-approximation");
        assert!(cmp.p_value < 1e-10);
    }

    #[test]
    fn normal_cdf_reference_points() {
        assert!((standard_normal_cdf(0.0) - 0.5).abs() < 1e-9);
        assert!((standard_normal_cdf(1.959964) - 0.975).abs() < 3e-7);
        assert!((standard_normal_cdf(-1.0) - 0.158655254).abs() < 3e-7);
        assert!((standard_normal_cdf(3.0) - 0.998650102).abs() < 3e-7);
    }
}
