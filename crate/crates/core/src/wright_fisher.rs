//! Wright-Fisher transition matrices and allele ages.
//!
//! States are copy numbers `0..=2N` of the focal allele `A` in a diploid
//! population of size `N`. Each generation applies viability selection
//! (fitnesses `AA: 1+s`, `Aa: 1+hs`, `aa: 1`), then mutation (`A -> a` at
//! rate `u`, `a -> A` at rate `v`), then binomial sampling of `2N` gametes.

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::chain::{classify, ChainStructure};
use crate::elapsed::{
    distribution_of_elapsed, variance_elapsed, ElapsedDistribution, ElapsedQuery, VarianceMode,
    DEFAULT_TAIL,
};
use crate::error::{ChainError, Result};
use crate::matrix::TransitionMatrix;
use crate::passage::{passage_summary, PassageSummary};

/// Largest supported number of gene copies `2N`.
pub const MAX_COPIES: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WrightFisherParams {
    /// Diploid population size.
    #[serde(rename = "N")]
    pub population: usize,
    /// Selection coefficient.
    pub s: f64,
    /// Dominance coefficient.
    pub h: f64,
    /// Mutation rate away from the focal allele.
    pub u: f64,
    /// Mutation rate towards the focal allele.
    pub v: f64,
}

impl WrightFisherParams {
    pub fn neutral(population: usize) -> Self {
        WrightFisherParams {
            population,
            s: 0.0,
            h: 0.5,
            u: 0.0,
            v: 0.0,
        }
    }

    pub fn copies(&self) -> usize {
        2 * self.population
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ChainError::WrightFisher(msg));
        if self.population < 1 {
            return bad("population size must be at least 1".into());
        }
        if self.copies() > MAX_COPIES {
            return bad(format!(
                "2N = {} exceeds the dense limit of {MAX_COPIES}",
                self.copies()
            ));
        }
        if !self.s.is_finite() || self.s < -1.0 {
            return bad(format!("selection coefficient {} must be >= -1", self.s));
        }
        let w_aa = 1.0 + self.s;
        let w_het = 1.0 + self.h * self.s;
        if !(w_aa > 0.0 && w_het > 0.0) {
            return bad(format!(
                "fitnesses must be positive (AA: {w_aa}, Aa: {w_het}, aa: 1)"
            ));
        }
        for (name, rate) in [("u", self.u), ("v", self.v)] {
            if !(0.0..1.0).contains(&rate) {
                return bad(format!("mutation rate {name} = {rate} not in [0, 1)"));
            }
        }
        Ok(())
    }

    /// Expected post-selection, post-mutation allele frequency from `count` copies.
    pub fn next_frequency(&self, count: usize) -> f64 {
        let x = count as f64 / self.copies() as f64;
        let y = 1.0 - x;
        let w_aa = 1.0 + self.s;
        let w_het = 1.0 + self.h * self.s;
        let mean = x * x * w_aa + 2.0 * x * y * w_het + y * y;
        let x_sel = (x * x * w_aa + x * y * w_het) / mean;
        x_sel * (1.0 - self.u) + (1.0 - x_sel) * self.v
    }
}

fn binomial_row(copies: usize, psi: f64) -> Vec<f64> {
    let mut row = vec![0.0; copies + 1];
    if psi <= 0.0 {
        row[0] = 1.0;
        return row;
    }
    if psi >= 1.0 {
        row[copies] = 1.0;
        return row;
    }
    let ln_p = psi.ln();
    let ln_q = (-psi).ln_1p();
    let m = copies as f64;
    for (b, x) in row.iter_mut().enumerate() {
        let k = b as f64;
        *x = (ln_binomial(copies as u64, b as u64) + k * ln_p + (m - k) * ln_q).exp();
    }
    row
}

/// The `(2N+1) x (2N+1)` transition matrix for `params`.
pub fn build_wf_matrix(params: &WrightFisherParams) -> Result<TransitionMatrix> {
    params.validate()?;
    let copies = params.copies();
    let rows = (0..=copies)
        .map(|a| {
            let mut row = binomial_row(copies, params.next_frequency(a));
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() >= 1e-9 {
                return Err(ChainError::WrightFisher(format!(
                    "row {a} sums to {sum} before renormalization"
                )));
            }
            row.iter_mut().for_each(|x| *x /= sum);
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    TransitionMatrix::from_rows(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgeOptions {
    pub variance_mode: VarianceMode,
    pub distribution: bool,
    /// Residual mass for the optional age distribution.
    pub tail: f64,
}

impl Default for AgeOptions {
    fn default() -> Self {
        AgeOptions {
            variance_mode: VarianceMode::CorrectedClosed,
            distribution: false,
            tail: DEFAULT_TAIL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlleleAgeResult {
    pub observed_count: usize,
    /// Generations.
    pub expected_age: f64,
    /// Generations², in `variance_mode`.
    pub age_variance: f64,
    pub variance_mode: VarianceMode,
    pub distribution: Option<ElapsedDistribution>,
}

/// Matrix, classification and passage summary for an observed allele count.
#[derive(Debug, Clone)]
pub struct AgeSetup {
    pub matrix: TransitionMatrix,
    pub structure: ChainStructure,
    pub passage: PassageSummary,
}

/// Builds and validates everything an allele-age query at `observed_count` needs.
pub fn age_setup(params: &WrightFisherParams, observed_count: usize) -> Result<AgeSetup> {
    let matrix = build_wf_matrix(params)?;
    let copies = params.copies();
    if observed_count == 0 || observed_count >= copies {
        return Err(ChainError::WrightFisher(format!(
            "observed count {observed_count} must lie in 1..={}; boundary counts are absorbing",
            copies - 1
        )));
    }
    let structure = classify(&matrix).map_err(|e| match e {
        ChainError::NotAbsorbing { .. } | ChainError::NoAbsorbingState => {
            let hint = if params.v > 0.0 {
                "; mutation towards the allele (v > 0) makes loss reversible, set v = 0"
            } else {
                ""
            };
            ChainError::WrightFisher(format!("chain is not absorbing ({e}){hint}"))
        }
        e => e,
    })?;
    for state in [1, observed_count] {
        if !structure.is_transient(state) {
            return Err(ChainError::NotTransient {
                state: matrix.label(state).to_string(),
            });
        }
    }
    let passage = passage_summary(&matrix, observed_count)?;
    Ok(AgeSetup {
        matrix,
        structure,
        passage,
    })
}

/// Age of an allele that arose as a single copy and is now seen at
/// `observed_count` copies.
pub fn allele_age(
    params: &WrightFisherParams,
    observed_count: usize,
    options: &AgeOptions,
) -> Result<AlleleAgeResult> {
    let setup = age_setup(params, observed_count)?;
    let mut query = ElapsedQuery::new(1, observed_count).with_mode(options.variance_mode);
    query.tail = options.tail;
    let moments = variance_elapsed(&setup.passage, &query)?.require_defined(&setup.passage, 1)?;
    let distribution = if options.distribution {
        Some(distribution_of_elapsed(&setup.structure, &setup.passage, &query)?)
    } else {
        None
    };
    Ok(AlleleAgeResult {
        observed_count,
        expected_age: moments.expectation,
        age_variance: moments.variance.expect("variance_elapsed fills variance"),
        variance_mode: options.variance_mode,
        distribution,
    })
}
