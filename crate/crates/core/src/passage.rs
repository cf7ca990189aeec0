//! Hitting probabilities and conditional first-passage moments towards a fixed
//! transient target state.
//!
//! The target `j` is made absorbing, which turns first passage to `j` into
//! absorption in `j`. With `Ñ` the fundamental matrix of that modified chain
//! and `H` its absorption column for `j`:
//!
//! * `tau_i = (Ñ H)_i / H_i`
//! * `v_i = (2 Ñ (H * tau))_i / H_i - tau_i - tau_i^2`
//!
//! which is the `D⁻¹ Ñ D` conjugation written without forming `D`.
//! States that never reach `j` have no conditional moments and are reported
//! as `None`.

use serde::Serialize;

use crate::chain::{classify, ChainStructure};
use crate::error::{ChainError, Result};
use crate::matrix::TransitionMatrix;

/// Largest admissible recurrence probability.
pub const MAX_RECURRENCE: f64 = 1.0 - 1e-12;

/// How the recurrence moments `tau_jj`, `v_jj` are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecurrenceMode {
    /// The first-step expressions as originally published: normalized by the
    /// one-step survival mass, with squared probability weights on the variance.
    PaperFidelity,
    /// First-step analysis conditioned on actually returning to `j`.
    Corrected,
}

/// Mean and variance of a conditional passage time, in steps and steps².
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PassageMoments {
    pub tau: f64,
    pub var: f64,
}

#[derive(Debug, Clone)]
pub struct PassageSummary {
    j: usize,
    labels: Vec<String>,
    /// Indexed by original state; `None` for `j` itself and absorbing states.
    hitting: Vec<Option<f64>>,
    /// Indexed by original state; `None` wherever the hitting probability is 0.
    moments: Vec<Option<PassageMoments>>,
    hjj: f64,
    paper: Option<PassageMoments>,
    corrected: Option<PassageMoments>,
}

impl PassageSummary {
    pub fn target(&self) -> usize {
        self.j
    }

    /// Label of state `k` in the chain this summary was computed from.
    pub fn label(&self, k: usize) -> &str {
        &self.labels[k]
    }

    pub fn n_states(&self) -> usize {
        self.labels.len()
    }

    /// `H_ij`, the probability of ever reaching `j` from transient `i != j`.
    pub fn hitting(&self, i: usize) -> Option<f64> {
        self.hitting.get(i).copied().flatten()
    }

    /// Conditional first-passage moments from `i != j`, defined when `H_ij > 0`.
    pub fn passage(&self, i: usize) -> Option<PassageMoments> {
        self.moments.get(i).copied().flatten()
    }

    pub fn tau(&self, i: usize) -> Option<f64> {
        self.passage(i).map(|m| m.tau)
    }

    pub fn var(&self, i: usize) -> Option<f64> {
        self.passage(i).map(|m| m.var)
    }

    /// Recurrence probability `H_jj`.
    pub fn hjj(&self) -> f64 {
        self.hjj
    }

    /// `(tau_jj, v_jj)`; `None` when return to `j` is impossible.
    pub fn recurrence(&self, mode: RecurrenceMode) -> Option<PassageMoments> {
        match mode {
            RecurrenceMode::PaperFidelity => self.paper,
            RecurrenceMode::Corrected => self.corrected,
        }
    }

    /// Iterates `(i, H_ij)` over the transient states other than `j`.
    pub fn hitting_iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.hitting
            .iter()
            .enumerate()
            .filter_map(|(i, h)| h.map(|h| (i, h)))
    }
}

fn require_transient(p: &TransitionMatrix, j: usize) -> Result<()> {
    p.check_index(j)?;
    let row = p.row(j);
    let absorbing = row[j] >= 1.0 - crate::chain::ABSORBING_TOL
        && row
            .iter()
            .enumerate()
            .all(|(k, &x)| k == j || x <= crate::chain::ABSORBING_TOL);
    if absorbing {
        Err(ChainError::NotTransient {
            state: p.label(j).to_string(),
        })
    } else {
        Ok(())
    }
}

/// Classification of `p` with row `j` replaced by the unit row at `j`.
pub fn modify_chain(p: &TransitionMatrix, j: usize) -> Result<ChainStructure> {
    require_transient(p, j)?;
    classify(&p.with_absorbing(j)?)
}

/// Hitting probabilities `H_ij` (indexed by original state, `None` off the
/// transient set and at `j`) together with `H_jj`.
pub fn hitting_probabilities(p: &TransitionMatrix, j: usize) -> Result<(Vec<Option<f64>>, f64)> {
    let m = Modified::new(p, j)?;
    Ok((m.hitting_by_state(), m.hjj))
}

/// Conditional first-passage means and variances towards `j`.
pub fn conditional_passage_moments(
    p: &TransitionMatrix,
    j: usize,
) -> Result<Vec<Option<PassageMoments>>> {
    let m = Modified::new(p, j)?;
    Ok(m.moments_by_state())
}

/// `(tau_jj, v_jj)` in the requested mode; `None` when `H_jj = 0`.
pub fn recurrence_moments(
    p: &TransitionMatrix,
    j: usize,
    mode: RecurrenceMode,
) -> Result<Option<PassageMoments>> {
    Ok(passage_summary(p, j)?.recurrence(mode))
}

/// Computes every passage quantity for target `j` in one pass.
pub fn passage_summary(p: &TransitionMatrix, j: usize) -> Result<PassageSummary> {
    let m = Modified::new(p, j)?;
    let hitting = m.hitting_by_state();
    let moments = m.moments_by_state();
    let hjj = m.hjj;
    let (paper, corrected) = if hjj > 0.0 {
        (
            Some(paper_recurrence(p, j, &moments)),
            Some(corrected_recurrence(p, j, hjj, &hitting, &moments)),
        )
    } else {
        (None, None)
    };
    Ok(PassageSummary {
        j,
        labels: p.labels().to_vec(),
        hitting,
        moments,
        hjj,
        paper,
        corrected,
    })
}

/// Normalized first-step weights `(q_j, [(k, q_k)])` of a return to `j`.
///
/// `q_j = p_jj / H_jj` and `q_k = p_jk H_kj / H_jj`; they sum to one.
pub fn return_weights(p: &TransitionMatrix, ps: &PassageSummary) -> Option<(f64, Vec<(usize, f64)>)> {
    let j = ps.j;
    let hjj = ps.hjj;
    if hjj <= 0.0 {
        return None;
    }
    let row = p.row(j);
    let others = ps
        .hitting_iter()
        .filter(|&(_, h)| h > 0.0)
        .map(|(k, h)| (k, row[k] * h / hjj))
        .collect();
    Some((row[j] / hjj, others))
}

fn paper_recurrence(
    p: &TransitionMatrix,
    j: usize,
    moments: &[Option<PassageMoments>],
) -> PassageMoments {
    let row = p.row(j);
    let mut mean_num = row[j];
    let mut var_num = 0.0;
    let mut absorbed = 0.0;
    for (i, &pji) in row.iter().enumerate() {
        if i == j {
            continue;
        }
        match moments[i] {
            Some(m) => {
                mean_num += pji * (m.tau + 1.0);
                var_num += pji * pji * m.var;
            }
            None if require_transient(p, i).is_err() => absorbed += pji,
            None => {}
        }
    }
    let denom = 1.0 - absorbed;
    PassageMoments {
        tau: mean_num / denom,
        var: var_num / (denom * denom),
    }
}

fn corrected_recurrence(
    p: &TransitionMatrix,
    j: usize,
    hjj: f64,
    hitting: &[Option<f64>],
    moments: &[Option<PassageMoments>],
) -> PassageMoments {
    let row = p.row(j);
    let stay = row[j] / hjj;
    let mut first = stay;
    let mut second = stay;
    for (k, m) in moments.iter().enumerate() {
        let (Some(m), Some(h)) = (m, hitting[k]) else {
            continue;
        };
        let q = row[k] * h / hjj;
        first += q * (1.0 + m.tau);
        second += q * (1.0 + 2.0 * m.tau + m.var + m.tau * m.tau);
    }
    PassageMoments {
        tau: first,
        var: (second - first * first).max(0.0),
    }
}

/// The modified chain together with its hitting column and passage moments,
/// in the modified chain's transient order.
struct Modified<'a> {
    p: &'a TransitionMatrix,
    j: usize,
    cs: ChainStructure,
    h: Vec<f64>,
    moments: Vec<Option<PassageMoments>>,
    hjj: f64,
}

impl<'a> Modified<'a> {
    fn new(p: &'a TransitionMatrix, j: usize) -> Result<Self> {
        let cs = modify_chain(p, j)?;
        let col = cs
            .absorbing()
            .iter()
            .position(|&a| a == j)
            .expect("target is absorbing in the modified chain");
        let n_tilde = cs.fundamental();
        let h: Vec<f64> = (n_tilde * cs.r().column(col)).iter().copied().collect();

        // tau = D^-1 Ñ D 1 restricted to h > 0
        let nh = n_tilde * nalgebra::DVector::from_column_slice(&h);
        let tau: Vec<Option<f64>> = h
            .iter()
            .zip(nh.iter())
            .map(|(&hi, &s)| (hi > 0.0).then(|| s / hi))
            .collect();
        let weighted = nalgebra::DVector::from_iterator(
            h.len(),
            h.iter().zip(&tau).map(|(&hi, t)| t.map_or(0.0, |t| hi * t)),
        );
        let nht = n_tilde * weighted;
        let moments = tau
            .iter()
            .zip(h.iter().zip(nht.iter()))
            .map(|(t, (&hi, &s))| {
                t.map(|t| PassageMoments {
                    tau: t,
                    var: (2.0 * s / hi - t - t * t).max(0.0),
                })
            })
            .collect();

        let row = p.row(j);
        let hjj = row[j]
            + cs.transient()
                .iter()
                .zip(&h)
                .map(|(&k, &hk)| row[k] * hk)
                .sum::<f64>();
        if hjj > MAX_RECURRENCE {
            return Err(ChainError::RecurrenceTooHigh {
                state: p.label(j).to_string(),
                hjj,
            });
        }
        Ok(Modified {
            p,
            j,
            cs,
            h,
            moments,
            hjj,
        })
    }

    fn hitting_by_state(&self) -> Vec<Option<f64>> {
        let mut out = vec![None; self.p.n()];
        for (&k, &hk) in self.cs.transient().iter().zip(&self.h) {
            out[k] = Some(hk);
        }
        debug_assert!(out[self.j].is_none());
        out
    }

    fn moments_by_state(&self) -> Vec<Option<PassageMoments>> {
        let mut out = vec![None; self.p.n()];
        for (&k, m) in self.cs.transient().iter().zip(&self.moments) {
            out[k] = *m;
        }
        out
    }
}

/// Largest deviation from `H_ij = N_ij / N_jj` and `H_jj = 1 - 1/N_jj`, using
/// the fundamental matrix of the original chain.
pub fn cross_identity_residual(cs: &ChainStructure, ps: &PassageSummary) -> f64 {
    let n = cs.fundamental();
    let Some(jj) = cs.transient_position(ps.target()) else {
        return f64::NAN;
    };
    let njj = n[(jj, jj)];
    let mut worst = (ps.hjj() - (1.0 - 1.0 / njj)).abs();
    for (i, h) in ps.hitting_iter() {
        let ii = cs.transient_position(i).expect("hitting defined on transient states");
        worst = worst.max((h - n[(ii, jj)] / njj).abs());
    }
    worst
}
