//! Classification of absorbing chains into transient and absorbing states,
//! canonical `Q`/`R` blocks, the fundamental matrix and absorption probabilities.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use crate::error::{ChainError, Result};
use crate::matrix::TransitionMatrix;

/// A state counts as absorbing when `p_ii >= 1 - ABSORBING_TOL`.
pub const ABSORBING_TOL: f64 = 1e-12;

/// Canonical decomposition of an absorbing chain.
///
/// Canonical order lists transient states first (ascending original index),
/// then absorbing states (ascending).
#[derive(Debug, Clone)]
pub struct ChainStructure {
    transient: Vec<usize>,
    absorbing: Vec<usize>,
    /// original index -> canonical position
    position: Vec<usize>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    fundamental: DMatrix<f64>,
    reach: Reachability,
}

/// `B = N R`: row `i` gives the absorption law from the `i`-th transient state.
#[derive(Debug, Clone)]
pub struct AbsorptionProbabilities {
    /// Original indices of the absorbing states, one per column.
    pub absorbing: Vec<usize>,
    pub b: DMatrix<f64>,
}

fn is_absorbing_row(row: &[f64], i: usize) -> bool {
    row[i] >= 1.0 - ABSORBING_TOL
        && row
            .iter()
            .enumerate()
            .all(|(k, &p)| k == i || p <= ABSORBING_TOL)
}

/// Splits `p` into transient and absorbing states and computes `N = (I - Q)^-1`.
///
/// A chain whose states are all absorbing is valid and yields empty blocks.
pub fn classify(p: &TransitionMatrix) -> Result<ChainStructure> {
    let n = p.n();
    let (absorbing, transient): (Vec<usize>, Vec<usize>) =
        (0..n).partition(|&i| is_absorbing_row(p.row(i), i));
    if absorbing.is_empty() {
        return Err(ChainError::NoAbsorbingState);
    }

    // Reverse breadth-first search from the absorbing set.
    let mut reaches = vec![false; n];
    let mut queue: VecDeque<usize> = absorbing.iter().copied().collect();
    for &a in &absorbing {
        reaches[a] = true;
    }
    while let Some(target) = queue.pop_front() {
        for (src, r) in reaches.iter_mut().enumerate() {
            if !*r && p.get(src, target) > 0.0 {
                *r = true;
                queue.push_back(src);
            }
        }
    }
    let stuck: Vec<String> = transient
        .iter()
        .filter(|&&k| !reaches[k])
        .map(|&k| p.label(k).to_string())
        .collect();
    if !stuck.is_empty() {
        return Err(ChainError::NotAbsorbing { states: stuck });
    }

    let mut position = vec![0; n];
    for (pos, &k) in transient.iter().chain(absorbing.iter()).enumerate() {
        position[k] = pos;
    }

    let t = transient.len();
    let q = DMatrix::from_fn(t, t, |a, b| p.get(transient[a], transient[b]));
    let r = DMatrix::from_fn(t, absorbing.len(), |a, b| p.get(transient[a], absorbing[b]));
    let mut fundamental = fundamental_matrix(&q).ok_or_else(|| ChainError::NotAbsorbing {
        states: transient.iter().map(|&k| p.label(k).to_string()).collect(),
    })?;
    // Entries are structurally zero exactly when no path exists; drop LU noise there.
    let reach = Reachability::new(p);
    for (a, &sa) in transient.iter().enumerate() {
        for (b, &sb) in transient.iter().enumerate() {
            let x = &mut fundamental[(a, b)];
            *x = if reach.reaches(sa, sb) { x.max(0.0) } else { 0.0 };
        }
    }

    Ok(ChainStructure {
        transient,
        absorbing,
        position,
        q,
        r,
        fundamental,
        reach,
    })
}

/// Path existence between states, from the strongly connected components of
/// the positive-entry graph.
#[derive(Debug, Clone)]
pub(crate) struct Reachability {
    comp: Vec<usize>,
    words: usize,
    /// reach[c] is a bitset of components reachable from c (including c).
    reach: Vec<Vec<u64>>,
}

impl Reachability {
    pub(crate) fn new(p: &TransitionMatrix) -> Self {
        let comp = tarjan_components(p);
        let n_comp = comp.iter().copied().max().map_or(0, |c| c + 1);
        let mut members = vec![Vec::new(); n_comp];
        for (v, &c) in comp.iter().enumerate() {
            members[c].push(v);
        }
        let words = n_comp.div_ceil(64);
        let mut reach = vec![vec![0u64; words]; n_comp];
        // Tarjan numbers components in reverse topological order, so every
        // successor component has a smaller id and is already complete.
        for c in 0..n_comp {
            let mut bits = vec![0u64; words];
            bits[c / 64] |= 1 << (c % 64);
            for &a in &members[c] {
                for (b, &x) in p.row(a).iter().enumerate() {
                    let d = comp[b];
                    if x > 0.0 && d != c && bits[d / 64] & (1 << (d % 64)) == 0 {
                        for (w, r) in bits.iter_mut().zip(&reach[d]) {
                            *w |= r;
                        }
                    }
                }
            }
            reach[c] = bits;
        }
        Reachability { comp, words, reach }
    }

    /// Whether `to` can be visited from `from` in zero or more steps.
    pub(crate) fn reaches(&self, from: usize, to: usize) -> bool {
        let d = self.comp[to];
        debug_assert!(d / 64 < self.words);
        self.reach[self.comp[from]][d / 64] & (1 << (d % 64)) != 0
    }
}

/// Iterative Tarjan over the dense adjacency `p_ab > 0`.
fn tarjan_components(p: &TransitionMatrix) -> Vec<usize> {
    const NONE: usize = usize::MAX;
    let n = p.n();
    let mut index = vec![NONE; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comp = vec![NONE; n];
    let mut next_index = 0;
    let mut next_comp = 0;
    let mut calls: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if index[root] != NONE {
            continue;
        }
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;
        calls.push((root, 0));
        while let Some(&(v, start)) = calls.last() {
            let row = p.row(v);
            let mut pos = start;
            let mut descended = None;
            while pos < n {
                let w = pos;
                pos += 1;
                if row[w] <= 0.0 {
                    continue;
                }
                if index[w] == NONE {
                    descended = Some(w);
                    break;
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            }
            if let Some(w) = descended {
                calls.last_mut().expect("frame for v").1 = pos;
                index[w] = next_index;
                low[w] = next_index;
                next_index += 1;
                stack.push(w);
                on_stack[w] = true;
                calls.push((w, 0));
                continue;
            }
            calls.pop();
            if low[v] == index[v] {
                loop {
                    let w = stack.pop().expect("tarjan stack holds v");
                    on_stack[w] = false;
                    comp[w] = next_comp;
                    if w == v {
                        break;
                    }
                }
                next_comp += 1;
            }
            if let Some(&(parent, _)) = calls.last() {
                low[parent] = low[parent].min(low[v]);
            }
        }
    }
    comp
}

/// Solves `(I - Q) X = I` with a partially pivoted LU factorization.
fn fundamental_matrix(q: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let t = q.nrows();
    if t == 0 {
        return Some(DMatrix::zeros(0, 0));
    }
    let lu = (DMatrix::identity(t, t) - q).lu();
    lu.solve(&DMatrix::identity(t, t))
}

impl ChainStructure {
    /// Original indices of transient states, in canonical order.
    pub fn transient(&self) -> &[usize] {
        &self.transient
    }

    pub fn absorbing(&self) -> &[usize] {
        &self.absorbing
    }

    /// Canonical order: transient states then absorbing states.
    pub fn order(&self) -> Vec<usize> {
        self.transient
            .iter()
            .chain(self.absorbing.iter())
            .copied()
            .collect()
    }

    /// Canonical position of an original state index.
    pub fn position(&self, original: usize) -> usize {
        self.position[original]
    }

    /// Row/column of `original` within `Q`, if it is transient.
    pub fn transient_position(&self, original: usize) -> Option<usize> {
        let pos = *self.position.get(original)?;
        (pos < self.transient.len()).then_some(pos)
    }

    pub fn is_transient(&self, original: usize) -> bool {
        self.transient_position(original).is_some()
    }

    pub fn t(&self) -> usize {
        self.transient.len()
    }

    pub fn r_count(&self) -> usize {
        self.absorbing.len()
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn fundamental(&self) -> &DMatrix<f64> {
        &self.fundamental
    }

    /// Whether a path of zero or more steps leads from `from` to `to`.
    pub fn reaches(&self, from: usize, to: usize) -> bool {
        self.reach.reaches(from, to)
    }
}

/// `B = N R`. Requires at least one transient state.
pub fn absorption_probabilities(cs: &ChainStructure) -> Result<AbsorptionProbabilities> {
    if cs.t() == 0 {
        return Err(ChainError::InvalidArgument(
            "absorption probabilities need at least one transient state".into(),
        ));
    }
    let mut b = &cs.fundamental * &cs.r;
    for (a, &sa) in cs.transient.iter().enumerate() {
        for (l, &sl) in cs.absorbing.iter().enumerate() {
            let x = &mut b[(a, l)];
            *x = if cs.reach.reaches(sa, sl) { x.clamp(0.0, 1.0) } else { 0.0 };
        }
    }
    Ok(AbsorptionProbabilities {
        absorbing: cs.absorbing.clone(),
        b,
    })
}
