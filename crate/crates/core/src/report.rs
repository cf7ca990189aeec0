//! Analysis reports: one structure, rendered as a text table or as JSON.
//!
//! Every number is labelled with the mode that produced it; modes are never
//! merged. JSON floats are written with 17 significant digits so identical
//! inputs give byte-identical output.

use std::io;

use serde::Serialize;

use crate::chain::ChainStructure;
use crate::elapsed::{
    variance_elapsed, ElapsedDistribution, ElapsedMoments, ElapsedQuery, Impossible, VarianceMode,
};
use crate::error::Result;
use crate::matrix::TransitionMatrix;
use crate::oracle::{SimConfig, SimEstimate};
use crate::passage::{cross_identity_residual, PassageMoments, PassageSummary, RecurrenceMode};
use crate::wright_fisher::{AlleleAgeResult, WrightFisherParams};

pub const SCHEMA_VERSION: u32 = 1;

/// Relative disagreement above which two modes are flagged.
pub const DISCREPANCY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Serialize)]
pub struct StateRef {
    pub index: usize,
    pub label: String,
}

impl StateRef {
    fn new(p: &TransitionMatrix, index: usize) -> Self {
        StateRef {
            index,
            label: p.label(index).to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Inputs {
    pub source: String,
    pub states: usize,
    pub start: StateRef,
    pub target: StateRef,
    pub variance_mode: VarianceMode,
    pub epsilon: f64,
    pub tail: f64,
    pub tmax: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct HittingRow {
    pub state: StateRef,
    pub hitting: f64,
    pub tau: Option<f64>,
    pub var: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RecurrenceReport {
    pub paper_fidelity: Option<PassageMoments>,
    pub corrected: Option<PassageMoments>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PassageReport {
    pub hitting: Vec<HittingRow>,
    pub hjj: f64,
    pub recurrence: RecurrenceReport,
    /// max |H_ij - N_ij/N_jj|, |H_jj - (1 - 1/N_jj)| against the original chain.
    pub cross_identity_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeReport {
    pub expectation: Option<f64>,
    pub variance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variance_as_printed: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncation_n: Option<usize>,
}

impl From<&ElapsedMoments> for ModeReport {
    fn from(m: &ElapsedMoments) -> Self {
        ModeReport {
            expectation: m.defined.then_some(m.expectation),
            variance: m.variance,
            variance_as_printed: m.series_as_printed,
            truncation_n: m.truncation_n,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ElapsedReport {
    pub defined: bool,
    pub impossible: Option<Impossible>,
    pub headline: VarianceMode,
    pub paper_closed: ModeReport,
    pub series: ModeReport,
    pub corrected_closed: ModeReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct Discrepancy {
    pub flagged: bool,
    pub expectation_flagged: bool,
    pub variance_flagged: bool,
    /// V(T)[paper-closed] - V(T)[corrected-closed].
    pub variance_difference: Option<f64>,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DistributionReport {
    pub t: Vec<usize>,
    pub probability: Vec<f64>,
    pub cumulative: Vec<f64>,
    pub residual: f64,
}

impl From<&ElapsedDistribution> for DistributionReport {
    fn from(d: &ElapsedDistribution) -> Self {
        DistributionReport {
            t: (1..=d.tmax()).collect(),
            probability: d.probs.clone(),
            cumulative: d.cumulative(),
            residual: d.residual,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ZScores {
    pub expectation_paper: Option<f64>,
    pub expectation_corrected: Option<f64>,
    pub variance_paper_closed: Option<f64>,
    pub variance_corrected_closed: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationReport {
    pub config: SimConfig,
    pub estimate: SimEstimate,
    /// (analytic - simulated) / standard error.
    pub z: ZScores,
}

#[derive(Debug, Clone, Serialize)]
pub struct WrightFisherReport {
    pub params: WrightFisherParams,
    pub observed_count: usize,
    pub age: AlleleAgeResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: String,
    pub inputs: Inputs,
    pub passage: PassageReport,
    pub elapsed: ElapsedReport,
    pub discrepancy: Discrepancy,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distribution: Option<DistributionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wright_fisher: Option<WrightFisherReport>,
}

fn differs(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => (a - b).abs() > DISCREPANCY_TOL * b.abs().max(1.0),
        _ => false,
    }
}

/// Runs every variance mode for `query` and assembles the analytic part of a report.
pub fn build_report(
    command: &str,
    source: &str,
    p: &TransitionMatrix,
    cs: &ChainStructure,
    ps: &PassageSummary,
    query: &ElapsedQuery,
    all_hitting: bool,
) -> Result<Report> {
    let mut by_mode = Vec::with_capacity(3);
    for mode in VarianceMode::ALL {
        let q = query.clone().with_mode(mode);
        by_mode.push(variance_elapsed(ps, &q)?);
    }
    let [paper, series, corrected] = [&by_mode[0], &by_mode[1], &by_mode[2]];

    let hitting = ps
        .hitting_iter()
        .filter(|&(k, _)| all_hitting || k == query.i)
        .map(|(k, h)| HittingRow {
            state: StateRef::new(p, k),
            hitting: h,
            tau: ps.tau(k),
            var: ps.var(k),
        })
        .collect();

    let paper_r = ModeReport::from(paper);
    let corrected_r = ModeReport::from(corrected);
    let expectation_flagged = differs(paper_r.expectation, corrected_r.expectation);
    let variance_flagged = differs(paper_r.variance, corrected_r.variance);
    let variance_difference = match (paper_r.variance, corrected_r.variance) {
        (Some(a), Some(b)) => Some(a - b),
        _ => None,
    };

    Ok(Report {
        schema_version: SCHEMA_VERSION,
        command: command.to_string(),
        inputs: Inputs {
            source: source.to_string(),
            states: p.n(),
            start: StateRef::new(p, query.i),
            target: StateRef::new(p, query.j),
            variance_mode: query.variance_mode,
            epsilon: query.series_epsilon,
            tail: query.tail,
            tmax: query.tmax,
        },
        passage: PassageReport {
            hitting,
            hjj: ps.hjj(),
            recurrence: RecurrenceReport {
                paper_fidelity: ps.recurrence(RecurrenceMode::PaperFidelity),
                corrected: ps.recurrence(RecurrenceMode::Corrected),
            },
            cross_identity_residual: cross_identity_residual(cs, ps),
        },
        elapsed: ElapsedReport {
            defined: corrected.defined,
            impossible: corrected.impossible,
            headline: query.variance_mode,
            paper_closed: paper_r,
            series: ModeReport::from(series),
            corrected_closed: corrected_r,
        },
        discrepancy: Discrepancy {
            flagged: expectation_flagged || variance_flagged,
            expectation_flagged,
            variance_flagged,
            variance_difference,
            tolerance: DISCREPANCY_TOL,
        },
        distribution: None,
        simulation: None,
        wright_fisher: None,
    })
}

impl Report {
    /// Attaches a simulation estimate and its z-scores against the analytic values.
    pub fn attach_simulation(&mut self, config: SimConfig, estimate: SimEstimate) {
        let zm = |v: Option<f64>| v.map(|v| estimate.z_mean(v));
        let zv = |v: Option<f64>| v.map(|v| estimate.z_variance(v));
        self.simulation = Some(SimulationReport {
            config,
            z: ZScores {
                expectation_paper: zm(self.elapsed.paper_closed.expectation),
                expectation_corrected: zm(self.elapsed.corrected_closed.expectation),
                variance_paper_closed: zv(self.elapsed.paper_closed.variance),
                variance_corrected_closed: zv(self.elapsed.corrected_closed.variance),
            },
            estimate,
        });
    }

    pub fn headline(&self) -> &ModeReport {
        match self.elapsed.headline {
            VarianceMode::PaperClosed => &self.elapsed.paper_closed,
            VarianceMode::Series => &self.elapsed.series,
            VarianceMode::CorrectedClosed => &self.elapsed.corrected_closed,
        }
    }

    pub fn to_json(&self) -> String {
        to_json_string(self)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let line = |out: &mut String, k: &str, v: String| out.push_str(&format!("{k:<38} {v}\n"));
        let inp = &self.inputs;
        line(&mut out, "source", inp.source.clone());
        line(
            &mut out,
            "observation",
            format!(
                "{} ({}) -> {} ({})",
                inp.start.label, inp.start.index, inp.target.label, inp.target.index
            ),
        );
        out.push('\n');
        for row in &self.passage.hitting {
            let tag = format!("{}->{}", row.state.label, inp.target.label);
            line(&mut out, &format!("H[{tag}]"), num(row.hitting));
            line(&mut out, &format!("tau[{tag}]"), opt(row.tau));
            line(&mut out, &format!("v[{tag}]"), opt(row.var));
        }
        let jj = format!("{0}->{0}", inp.target.label);
        line(&mut out, &format!("H[{jj}]"), num(self.passage.hjj));
        let rec = &self.passage.recurrence;
        line(
            &mut out,
            &format!("tau[{jj}] [paper-fidelity]"),
            opt(rec.paper_fidelity.map(|m| m.tau)),
        );
        line(
            &mut out,
            &format!("v[{jj}] [paper-fidelity]"),
            opt(rec.paper_fidelity.map(|m| m.var)),
        );
        line(&mut out, &format!("tau[{jj}] [corrected]"), opt(rec.corrected.map(|m| m.tau)));
        line(&mut out, &format!("v[{jj}] [corrected]"), opt(rec.corrected.map(|m| m.var)));
        line(
            &mut out,
            "cross-identity residual",
            num(self.passage.cross_identity_residual),
        );
        out.push('\n');

        let e = &self.elapsed;
        if let Some(why) = e.impossible {
            line(&mut out, "elapsed time", format!("undefined: {}", why.describe()));
        }
        for (mode, r) in [
            (VarianceMode::PaperClosed, &e.paper_closed),
            (VarianceMode::Series, &e.series),
            (VarianceMode::CorrectedClosed, &e.corrected_closed),
        ] {
            let mark = if mode == e.headline { " *" } else { "" };
            line(&mut out, &format!("E(T) [{}]{mark}", mode.tag()), opt(r.expectation));
            line(&mut out, &format!("V(T) [{}]{mark}", mode.tag()), opt(r.variance));
            if let Some(v) = r.variance_as_printed {
                line(&mut out, &format!("V(T) [{}, as printed]", mode.tag()), num(v));
            }
            if let Some(n) = r.truncation_n {
                line(&mut out, &format!("terms [{}]", mode.tag()), n.to_string());
            }
        }
        let d = &self.discrepancy;
        line(
            &mut out,
            "discrepancy paper vs corrected",
            if d.flagged {
                format!(
                    "FLAGGED (variance difference {})",
                    opt(d.variance_difference)
                )
            } else {
                "none".into()
            },
        );

        if let Some(sim) = &self.simulation {
            out.push('\n');
            let s = &sim.estimate;
            line(&mut out, "simulation seed", sim.config.seed.to_string());
            line(&mut out, "accepted / rejected", format!("{} / {}", s.accepted, s.rejected));
            line(&mut out, "acceptance rate", num(s.acceptance_rate));
            line(&mut out, "simulated mean", format!("{} (se {})", num(s.mean), num(s.se_mean)));
            line(
                &mut out,
                "simulated variance",
                format!("{} (se {})", num(s.variance), num(s.se_variance)),
            );
            line(&mut out, "z E(T) [paper-closed]", opt(sim.z.expectation_paper));
            line(&mut out, "z E(T) [corrected-closed]", opt(sim.z.expectation_corrected));
            line(&mut out, "z V(T) [paper-closed]", opt(sim.z.variance_paper_closed));
            line(&mut out, "z V(T) [corrected-closed]", opt(sim.z.variance_corrected_closed));
        }

        if let Some(wf) = &self.wright_fisher {
            out.push('\n');
            let p = &wf.params;
            line(
                &mut out,
                "Wright-Fisher",
                format!("N={} s={} h={} u={} v={}", p.population, p.s, p.h, p.u, p.v),
            );
            line(&mut out, "observed count", wf.observed_count.to_string());
            line(
                &mut out,
                &format!("expected age [{}]", wf.age.variance_mode.tag()),
                num(wf.age.expected_age),
            );
            line(
                &mut out,
                &format!("age variance [{}]", wf.age.variance_mode.tag()),
                num(wf.age.age_variance),
            );
        }

        if let Some(dist) = &self.distribution {
            out.push('\n');
            out.push_str(&distribution_table(dist));
        }
        out
    }
}

/// `t, P(T=t), cumulative` lines followed by the residual tail.
pub fn distribution_table(d: &DistributionReport) -> String {
    let mut out = String::from("t,probability,cumulative\n");
    for ((t, p), c) in d.t.iter().zip(&d.probability).zip(&d.cumulative) {
        out.push_str(&format!("{t},{},{}\n", num(*p), num(*c)));
    }
    out.push_str(&format!("# residual tail mass {}\n", num(d.residual)));
    out
}

fn num(x: f64) -> String {
    format!("{x:.12}")
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "undefined".into(), num)
}

/// Writes finite floats as `d.ddddddddddddddddde±x` (17 significant digits).
#[derive(Debug, Clone, Copy, Default)]
pub struct SeventeenDigits;

impl serde_json::ser::Formatter for SeventeenDigits {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SeventeenDigits);
    value.serialize(&mut ser).expect("report serializes");
    String::from_utf8(buf).expect("json is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digit_floats() {
        let s = to_json_string(&serde_json::json!({"a": 5.0f64 / 3.0, "b": f64::NAN, "c": 0.0}));
        assert_eq!(s, r#"{"a":1.6666666666666667e0,"b":null,"c":0.0000000000000000e0}"#);
        let back: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["a"].as_f64().unwrap(), 5.0 / 3.0);
    }
}
