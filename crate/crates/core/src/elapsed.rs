//! Moments and distribution of the elapsed time `T` between observing the
//! chain in `i` and later in `j`.
//!
//! `T` is the first passage `i -> j` followed by `N - 1` conditional returns
//! to `j`, where `P(N = n) = H_jj^(n-1) (1 - H_jj)`. When `i = j` the first
//! segment is itself a return.

use serde::Serialize;

use crate::chain::ChainStructure;
use crate::error::{ChainError, Result};
use crate::passage::{PassageSummary, RecurrenceMode};

pub const DEFAULT_SERIES_EPSILON: f64 = 1e-14;
pub const SERIES_CAP: usize = 10_000_000;
pub const DEFAULT_TAIL: f64 = 1e-10;
/// Hard stop for automatically sized distributions.
pub const DISTRIBUTION_CAP: usize = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceMode {
    /// The published closed forms, evaluated verbatim.
    PaperClosed,
    /// Direct truncated evaluation of the total-variance series.
    Series,
    /// Total variance of a geometric number of i.i.d. return segments.
    #[default]
    CorrectedClosed,
}

impl VarianceMode {
    pub const ALL: [VarianceMode; 3] = [
        VarianceMode::PaperClosed,
        VarianceMode::Series,
        VarianceMode::CorrectedClosed,
    ];

    /// The recurrence moments this mode is paired with.
    pub fn recurrence_mode(self) -> RecurrenceMode {
        match self {
            VarianceMode::PaperClosed => RecurrenceMode::PaperFidelity,
            _ => RecurrenceMode::Corrected,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            VarianceMode::PaperClosed => "paper-closed",
            VarianceMode::Series => "series",
            VarianceMode::CorrectedClosed => "corrected-closed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElapsedQuery {
    pub i: usize,
    pub j: usize,
    pub variance_mode: VarianceMode,
    /// Series stop once `H_jj^n` drops below this.
    pub series_epsilon: f64,
    /// Fixed distribution horizon; `None` sizes it from `tail`.
    pub tmax: Option<usize>,
    /// Residual probability mass allowed when the horizon is automatic.
    pub tail: f64,
}

impl ElapsedQuery {
    pub fn new(i: usize, j: usize) -> Self {
        ElapsedQuery {
            i,
            j,
            variance_mode: VarianceMode::default(),
            series_epsilon: DEFAULT_SERIES_EPSILON,
            tmax: None,
            tail: DEFAULT_TAIL,
        }
    }

    pub fn with_mode(mut self, mode: VarianceMode) -> Self {
        self.variance_mode = mode;
        self
    }

    fn validate(&self, ps: &PassageSummary) -> Result<()> {
        if !(self.series_epsilon > 0.0 && self.series_epsilon < 1.0) {
            return Err(ChainError::InvalidArgument(format!(
                "series epsilon {} not in (0, 1)",
                self.series_epsilon
            )));
        }
        if !(self.tail > 0.0 && self.tail < 1.0) {
            return Err(ChainError::InvalidArgument(format!(
                "tail {} not in (0, 1)",
                self.tail
            )));
        }
        if self.tmax == Some(0) {
            return Err(ChainError::InvalidArgument("tmax must be at least 1".into()));
        }
        if ps.target() != self.j {
            return Err(ChainError::InvalidArgument(format!(
                "passage summary is for target {}, query asks for {}",
                ps.target(),
                self.j
            )));
        }
        let n = ps.n_states();
        if self.i >= n {
            return Err(ChainError::StateOutOfRange { index: self.i, n });
        }
        if self.i != self.j && ps.hitting(self.i).is_none() {
            return Err(ChainError::NotTransient {
                state: ps.label(self.i).to_string(),
            });
        }
        Ok(())
    }
}

/// Why an observation pair has no elapsed-time law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Impossible {
    /// `H_ij = 0`: the chain started in `i` never visits `j`.
    Unreachable,
    /// `i = j` and `H_jj = 0`: no return to `j` is possible.
    NoReturn,
}

impl Impossible {
    pub fn describe(self) -> &'static str {
        match self {
            Impossible::Unreachable => "target is never reached from the start state",
            Impossible::NoReturn => "the state can never be revisited",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ElapsedMoments {
    pub mode: VarianceMode,
    pub defined: bool,
    pub impossible: Option<Impossible>,
    /// `E(T)` in steps; NaN when undefined.
    pub expectation: f64,
    /// `V(T)` in steps²; filled by `variance_elapsed` only.
    pub variance: Option<f64>,
    /// Series mode only: the sum with `(n-1)^2` weight on `v_jj`.
    pub series_as_printed: Option<f64>,
    /// Series mode only: number of terms summed.
    pub truncation_n: Option<usize>,
}

impl ElapsedMoments {
    fn undefined(mode: VarianceMode, why: Impossible) -> Self {
        ElapsedMoments {
            mode,
            defined: false,
            impossible: Some(why),
            expectation: f64::NAN,
            variance: None,
            series_as_printed: None,
            truncation_n: None,
        }
    }

    /// Converts an undefined result into the matching error.
    pub fn require_defined(self, ps: &PassageSummary, i: usize) -> Result<Self> {
        match self.impossible {
            None => Ok(self),
            Some(why) => Err(impossible_error(ps, i, why)),
        }
    }
}

pub(crate) fn impossible_error(ps: &PassageSummary, i: usize, why: Impossible) -> ChainError {
    ChainError::ImpossiblePair {
        from: ps.label(i).to_string(),
        to: ps.label(ps.target()).to_string(),
        reason: why.describe().to_string(),
    }
}

/// First segment, recurrence probability and return segment moments.
#[derive(Debug, Clone, Copy)]
struct Segments {
    tau_first: f64,
    var_first: f64,
    hjj: f64,
    tau_ret: f64,
    var_ret: f64,
}

fn segments(
    ps: &PassageSummary,
    q: &ElapsedQuery,
    mode: RecurrenceMode,
) -> std::result::Result<Segments, Impossible> {
    let hjj = ps.hjj();
    let ret = ps.recurrence(mode);
    let (tau_ret, var_ret) = ret.map_or((0.0, 0.0), |m| (m.tau, m.var));
    let (tau_first, var_first) = if q.i == q.j {
        let m = ret.ok_or(Impossible::NoReturn)?;
        (m.tau, m.var)
    } else {
        let m = ps.passage(q.i).ok_or(Impossible::Unreachable)?;
        (m.tau, m.var)
    };
    Ok(Segments {
        tau_first,
        var_first,
        hjj,
        tau_ret,
        var_ret,
    })
}

/// `E(T) = tau_ij + tau_jj H_jj / (1 - H_jj)`.
pub fn expected_elapsed(ps: &PassageSummary, q: &ElapsedQuery) -> Result<ElapsedMoments> {
    q.validate(ps)?;
    let mode = q.variance_mode;
    let s = match segments(ps, q, mode.recurrence_mode()) {
        Ok(s) => s,
        Err(why) => return Ok(ElapsedMoments::undefined(mode, why)),
    };
    Ok(ElapsedMoments {
        mode,
        defined: true,
        impossible: None,
        expectation: closed_mean(&s),
        variance: None,
        series_as_printed: None,
        truncation_n: None,
    })
}

fn closed_mean(s: &Segments) -> f64 {
    s.tau_first + s.tau_ret * s.hjj / (1.0 - s.hjj)
}

/// `E(T)` and `V(T)` in the query's variance mode.
pub fn variance_elapsed(ps: &PassageSummary, q: &ElapsedQuery) -> Result<ElapsedMoments> {
    let mut out = expected_elapsed(ps, q)?;
    if !out.defined {
        return Ok(out);
    }
    let s = segments(ps, q, q.variance_mode.recurrence_mode())
        .expect("segments defined when expectation is");
    match q.variance_mode {
        VarianceMode::PaperClosed => out.variance = Some(paper_closed_variance(&s)),
        VarianceMode::CorrectedClosed => out.variance = Some(corrected_closed_variance(&s)),
        VarianceMode::Series => {
            let sv = series_variance(&s, q.series_epsilon)?;
            out.variance = Some(sv.corrected);
            out.series_as_printed = Some(sv.as_printed);
            out.truncation_n = Some(sv.terms);
        }
    }
    Ok(out)
}

fn corrected_closed_variance(s: &Segments) -> f64 {
    let h = s.hjj;
    let g = 1.0 - h;
    s.var_first + s.var_ret * h / g + s.tau_ret * s.tau_ret * h / (g * g)
}

/// The three published closed-form sums, term for term.
fn paper_closed_variance(s: &Segments) -> f64 {
    let h = s.hjj;
    let a = s.tau_first;
    let b = s.tau_ret;
    let vij = s.var_first;
    let vjj = s.var_ret;

    let first = vij + vjj * ((3.0 * h - 1.0) / ((h - 1.0) * (h - 1.0)) + 1.0);

    let second = (a * a - 2.0 * a * b + b * b) * (2.0 * h / (h + 1.0))
        + (2.0 * a * b - 2.0 * a * a)
            * ((-h * h - 3.0 * h) / ((h - 1.0) * (h + 1.0) * (h + 1.0)))
        + b * b
            * ((h.powi(4) + 5.0 * h.powi(3) + 5.0 * h * h + 5.0 * h)
                / ((h - 1.0).powi(2) * (h + 1.0).powi(3)));

    let poly = a * a * h.powi(4) - 2.0 * a * a * h * h + a * a - 2.0 * a * b * h.powi(4)
        - a * b * h.powi(3)
        + 3.0 * a * b * h * h
        + a * b * h
        - a * b
        + b * b * h.powi(4)
        + b * b * h.powi(3)
        - 2.0 * b * b * h * h
        - 2.0 * b * b * h
        - 2.0 * b * b;
    let third = -2.0 * h * poly / ((h - 1.0).powi(2) * (h + 1.0).powi(3));

    first + second + third
}

struct SeriesVariance {
    corrected: f64,
    as_printed: f64,
    terms: usize,
}

/// Sums the total-variance decomposition over `n = 1..=n*`, where `n*` is the
/// first `n` with `H_jj^n < epsilon`.
fn series_variance(s: &Segments, epsilon: f64) -> Result<SeriesVariance> {
    let h = s.hjj;
    let mut h_prev = 1.0; // H^(n-1)
    let mut within = 0.0; // sum V(T|N=n) P(N=n), (n-1) weight
    let mut within_printed = 0.0; // same with (n-1)^2 weight
    let mut spread = 0.0; // sum E_n^2 (1 - P_n) P_n
    let mut cross = 0.0; // sum_n E_n P_n sum_{m<n} E_m P_m
    let mut prefix = 0.0;
    let mut n = 1usize;
    loop {
        let p_n = h_prev * (1.0 - h);
        let k = (n - 1) as f64;
        let e_n = s.tau_first + k * s.tau_ret;
        within += (s.var_first + k * s.var_ret) * p_n;
        within_printed += (s.var_first + k * k * s.var_ret) * p_n;
        spread += e_n * e_n * (1.0 - p_n) * p_n;
        cross += e_n * p_n * prefix;
        prefix += e_n * p_n;
        let h_n = h_prev * h;
        if h_n < epsilon {
            break;
        }
        if n >= SERIES_CAP {
            return Err(ChainError::SeriesCap {
                epsilon,
                cap: SERIES_CAP,
            });
        }
        h_prev = h_n;
        n += 1;
    }
    Ok(SeriesVariance {
        corrected: within + spread - 2.0 * cross,
        as_printed: within_printed + spread - 2.0 * cross,
        terms: n,
    })
}

/// `P(T = t)` for `t = 1..=len`, plus the probability mass beyond the horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ElapsedDistribution {
    /// `probs[t - 1] = P(T = t)`.
    pub probs: Vec<f64>,
    /// Exact mass of `T > probs.len()` (up to roundoff).
    pub residual: f64,
}

impl ElapsedDistribution {
    pub fn tmax(&self) -> usize {
        self.probs.len()
    }

    pub fn mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Cumulative sums, one per `t`.
    pub fn cumulative(&self) -> Vec<f64> {
        self.probs
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect()
    }

    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(k, p)| (k + 1) as f64 * p)
            .sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.probs
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let d = (k + 1) as f64 - mean;
                d * d * p
            })
            .sum()
    }
}

/// Last-visit law `P(T = t) = (Q^t)_ij (1 - H_jj) / H_ij` (with `H_jj` in the
/// denominator when `i = j`), iterated as `x_t = e_i Q^t`.
///
/// The residual after `t` steps is `c ((x_t N)_j - (x_t)_j)`, the mass of all
/// later visits that are final.
pub fn distribution_of_elapsed(
    cs: &ChainStructure,
    ps: &PassageSummary,
    q: &ElapsedQuery,
) -> Result<ElapsedDistribution> {
    q.validate(ps)?;
    let hjj = ps.hjj();
    let reach = if q.i == q.j {
        if hjj <= 0.0 {
            return Err(impossible_error(ps, q.i, Impossible::NoReturn));
        }
        hjj
    } else {
        match ps.hitting(q.i) {
            Some(h) if h > 0.0 => h,
            _ => return Err(impossible_error(ps, q.i, Impossible::Unreachable)),
        }
    };
    let scale = (1.0 - hjj) / reach;
    let start = cs
        .transient_position(q.i)
        .ok_or_else(|| ChainError::NotTransient {
            state: ps.label(q.i).to_string(),
        })?;
    let target = cs
        .transient_position(q.j)
        .ok_or_else(|| ChainError::NotTransient {
            state: ps.label(q.j).to_string(),
        })?;

    let t = cs.t();
    let qm = cs.q();
    let n_col = cs.fundamental().column(target);
    let mut x = vec![0.0; t];
    x[start] = 1.0;
    let mut next = vec![0.0; t];
    let mut probs = Vec::new();
    let horizon = q.tmax.unwrap_or(DISTRIBUTION_CAP);
    let mut residual = 1.0;
    while probs.len() < horizon {
        next.iter_mut().for_each(|v| *v = 0.0);
        for (a, &xa) in x.iter().enumerate() {
            if xa == 0.0 {
                continue;
            }
            for (b, nb) in next.iter_mut().enumerate() {
                *nb += xa * qm[(a, b)];
            }
        }
        std::mem::swap(&mut x, &mut next);
        probs.push(x[target] * scale);
        let later: f64 = x.iter().zip(n_col.iter()).map(|(a, b)| a * b).sum();
        residual = (scale * (later - x[target])).max(0.0);
        if q.tmax.is_none() && residual <= q.tail {
            break;
        }
    }
    if q.tmax.is_none() && residual > q.tail {
        return Err(ChainError::InvalidArgument(format!(
            "distribution did not reach tail {} within {} steps",
            q.tail, DISTRIBUTION_CAP
        )));
    }
    Ok(ElapsedDistribution { probs, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::classify;
    use crate::matrix::TransitionMatrix;
    use crate::passage::passage_summary;

    fn example() -> TransitionMatrix {
        TransitionMatrix::from_rows(vec![
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.5, 0.0, 0.5, 0.0],
            vec![0.0, 0.5, 0.0, 0.5],
            vec![0.0, 0.0, 0.0, 1.0],
        ])
        .unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn worked_example_expectation() {
        let ps = passage_summary(&example(), 2).unwrap();
        let m = expected_elapsed(&ps, &ElapsedQuery::new(1, 2)).unwrap();
        assert!(rel(m.expectation, 5.0 / 3.0) < 1e-12);
        let m = expected_elapsed(&ps, &ElapsedQuery::new(2, 2)).unwrap();
        assert!(rel(m.expectation, 8.0 / 3.0) < 1e-12);
    }

    #[test]
    fn worked_example_variances() {
        let ps = passage_summary(&example(), 2).unwrap();
        let q = ElapsedQuery::new(1, 2);
        let paper = variance_elapsed(&ps, &q.clone().with_mode(VarianceMode::PaperClosed)).unwrap();
        assert!(rel(paper.variance.unwrap(), 4744.0 / 375.0) < 1e-12);
        let corr = variance_elapsed(&ps, &q.clone()).unwrap();
        assert!(rel(corr.variance.unwrap(), 16.0 / 9.0) < 1e-12);
        let series = variance_elapsed(&ps, &q.with_mode(VarianceMode::Series)).unwrap();
        assert!((series.variance.unwrap() - 16.0 / 9.0).abs() < 1e-9);
        // v_jj = 0 here, so both weightings coincide exactly
        assert_eq!(series.series_as_printed, series.variance);
        assert!(series.truncation_n.unwrap() > 1);
    }

    #[test]
    fn no_return_reduces_to_first_passage() {
        // 0 -> {1, absorb}, 1 -> absorb; H_11 = 0.
        let p = TransitionMatrix::from_rows(vec![
            vec![0.2, 0.5, 0.3],
            vec![0.0, 0.0, 1.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let ps = passage_summary(&p, 1).unwrap();
        assert_eq!(ps.hjj(), 0.0);
        let tau = ps.tau(0).unwrap();
        let v = ps.var(0).unwrap();
        for mode in VarianceMode::ALL {
            let m = variance_elapsed(&ps, &ElapsedQuery::new(0, 1).with_mode(mode)).unwrap();
            assert!((m.expectation - tau).abs() < 1e-14);
            assert!((m.variance.unwrap() - v).abs() < 1e-12, "{mode:?}");
        }
        // i = j with no return is impossible
        let m = expected_elapsed(&ps, &ElapsedQuery::new(1, 1)).unwrap();
        assert!(!m.defined);
        assert_eq!(m.impossible, Some(Impossible::NoReturn));
    }

    #[test]
    fn unreachable_pair_is_undefined() {
        let p = TransitionMatrix::from_rows(vec![
            vec![1.0, 0.0, 0.0],
            vec![0.5, 0.5, 0.0],
            vec![0.5, 0.25, 0.25],
        ])
        .unwrap();
        let ps = passage_summary(&p, 2).unwrap();
        let m = variance_elapsed(&ps, &ElapsedQuery::new(1, 2)).unwrap();
        assert!(!m.defined);
        assert!(m.expectation.is_nan());
        let cs = classify(&p).unwrap();
        assert!(matches!(
            distribution_of_elapsed(&cs, &ps, &ElapsedQuery::new(1, 2)),
            Err(ChainError::ImpossiblePair { .. })
        ));
    }

    #[test]
    fn absorbing_start_rejected() {
        let ps = passage_summary(&example(), 2).unwrap();
        assert!(matches!(
            expected_elapsed(&ps, &ElapsedQuery::new(0, 2)),
            Err(ChainError::NotTransient { .. })
        ));
    }

    #[test]
    fn worked_example_distribution() {
        let p = example();
        let cs = classify(&p).unwrap();
        let ps = passage_summary(&p, 2).unwrap();
        let mut q = ElapsedQuery::new(1, 2);
        q.tmax = Some(5);
        let d = distribution_of_elapsed(&cs, &ps, &q).unwrap();
        assert!((d.probs[0] - 0.75).abs() < 1e-15);
        assert_eq!(d.probs[1], 0.0);
        assert!((d.probs[2] - 0.1875).abs() < 1e-15);
        assert_eq!(d.probs[3], 0.0);

        q.tmax = None;
        q.tail = 1e-13;
        let d = distribution_of_elapsed(&cs, &ps, &q).unwrap();
        assert!(d.residual <= 1e-13);
        assert!((d.mean() - 5.0 / 3.0).abs() < 1e-10);
        assert!((d.variance() - 16.0 / 9.0).abs() < 1e-9);
        let c = d.cumulative();
        assert!(c.windows(2).all(|w| w[1] >= w[0]));
        assert!(*c.last().unwrap() <= 1.0 + 1e-15);
    }

    #[test]
    fn geometric_count_law_telescopes() {
        for &h in &[0.0, 0.1, 0.25, 0.5, 0.9] {
            for n_max in [1usize, 2, 7, 40] {
                let mut sum = 0.0;
                let mut hp = 1.0f64;
                for _ in 0..n_max {
                    sum += hp - hp * h;
                    hp *= h;
                }
                assert!((sum - (1.0 - h.powi(n_max as i32))).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn expectation_increases_with_recurrence() {
        let grid: Vec<f64> = (0..100).map(|k| k as f64 / 100.0).collect();
        let e: Vec<f64> = grid
            .iter()
            .map(|&h| {
                closed_mean(&Segments {
                    tau_first: 1.5,
                    var_first: 0.0,
                    hjj: h,
                    tau_ret: 3.0,
                    var_ret: 0.0,
                })
            })
            .collect();
        assert!(e.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn series_weightings_coincide_without_return_variance() {
        let s = Segments {
            tau_first: 2.0,
            var_first: 0.7,
            hjj: 0.6,
            tau_ret: 3.5,
            var_ret: 0.0,
        };
        let sv = series_variance(&s, 1e-14).unwrap();
        assert_eq!(sv.corrected, sv.as_printed);
        assert!((sv.corrected - corrected_closed_variance(&s)).abs() < 1e-9);
    }

    #[test]
    fn invalid_epsilon() {
        let ps = passage_summary(&example(), 2).unwrap();
        let mut q = ElapsedQuery::new(1, 2);
        q.series_epsilon = 1.0;
        assert!(variance_elapsed(&ps, &q).is_err());
    }
}
