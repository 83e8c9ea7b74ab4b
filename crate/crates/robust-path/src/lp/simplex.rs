//! Dense two-phase simplex over a generic field: fast floating point for the
//! common case and exact rationals for razor-edge verdicts. Intended for the
//! small systems that remain after presolve.

use crate::ratio::{rat_to_f64, Rat};
use num_traits::{One, Zero};
use std::ops::{Add, Div, Mul, Neg, Sub};

pub(crate) trait Field:
    Clone
    + PartialOrd
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_rat(r: &Rat) -> Self;
    /// Entries with magnitude at most this are treated as zero.
    fn tol() -> Self;
    /// Exact fields use Bland's rule from the start (guaranteed termination).
    fn exact() -> bool;
    fn abs_val(&self) -> Self;
}

impl Field for f64 {
    fn from_rat(r: &Rat) -> Self {
        rat_to_f64(r)
    }
    fn tol() -> Self {
        1e-9
    }
    fn exact() -> bool {
        false
    }
    fn abs_val(&self) -> Self {
        self.abs()
    }
}

impl Field for Rat {
    fn from_rat(r: &Rat) -> Self {
        r.clone()
    }
    fn tol() -> Self {
        Rat::zero()
    }
    fn exact() -> bool {
        true
    }
    fn abs_val(&self) -> Self {
        if self < &Rat::zero() {
            -self.clone()
        } else {
            self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Rel {
    Le,
    Eq,
}

/// Constraint system in the solver's working form: nonnegative variables,
/// rows `coeffs . x REL rhs`, minimize `objective . x`.
pub(crate) struct Standard<T> {
    pub num_vars: usize,
    pub rows: Vec<Vec<T>>,
    pub rels: Vec<Rel>,
    pub rhs: Vec<T>,
    pub objective: Vec<T>,
}

pub(crate) enum SolveResult<T> {
    /// Phase 1 could not clear the artificials; their residual sum is
    /// returned so the caller can decide whether the margin was convincing.
    Infeasible { phase1: T },
    Solved { x: Vec<T> },
    Unbounded,
    /// Iteration limit hit (floating point cycling); escalate to exact.
    Stalled,
}

struct Tableau<T> {
    /// `rows[i]` has `cols + 1` entries, the last being the rhs.
    rows: Vec<Vec<T>>,
    /// Objective row in reduced-cost form, last entry = minus the objective.
    obj: Vec<T>,
    basis: Vec<usize>,
    cols: usize,
    banned: Vec<bool>,
}

impl<T: Field> Tableau<T> {
    fn pivot(&mut self, r: usize, j: usize) {
        let piv = self.rows[r][j].clone();
        for cell in self.rows[r].iter_mut() {
            *cell = cell.clone() / piv.clone();
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[j].clone();
            if f != T::zero() {
                for (cell, p) in row.iter_mut().zip(&pivot_row) {
                    *cell = cell.clone() - f.clone() * p.clone();
                }
            }
        }
        let f = self.obj[j].clone();
        if f != T::zero() {
            for (cell, p) in self.obj.iter_mut().zip(&pivot_row) {
                *cell = cell.clone() - f.clone() * p.clone();
            }
        }
        self.basis[r] = j;
    }

    /// Smallest-index negative reduced cost (Bland) or most negative
    /// (Dantzig), skipping banned columns.
    fn entering(&self, bland: bool) -> Option<usize> {
        let tol = T::tol();
        let mut best: Option<(usize, T)> = None;
        for j in 0..self.cols {
            if self.banned[j] {
                continue;
            }
            let c = self.obj[j].clone();
            if c < -tol.clone() {
                if bland {
                    return Some(j);
                }
                match &best {
                    Some((_, b)) if *b <= c => {}
                    _ => best = Some((j, c)),
                }
            }
        }
        best.map(|(j, _)| j)
    }

    /// Minimum-ratio row; ties break toward the smallest basis variable,
    /// which together with Bland's entering rule prevents cycling.
    fn leaving(&self, j: usize) -> Option<usize> {
        let tol = T::tol();
        let mut best: Option<(usize, T)> = None;
        for (i, row) in self.rows.iter().enumerate() {
            let a = row[j].clone();
            if a > tol {
                let ratio = row[self.cols].clone() / a;
                let better = match &best {
                    None => true,
                    Some((r, b)) => {
                        ratio < *b || (ratio == *b && self.basis[i] < self.basis[*r])
                    }
                };
                if better {
                    best = Some((i, ratio));
                }
            }
        }
        best.map(|(i, _)| i)
    }
}

pub(crate) fn solve<T: Field>(std: &Standard<T>, want_phase2: bool) -> SolveResult<T> {
    let n = std.num_vars;
    let m = std.rows.len();
    if m == 0 {
        if want_phase2 && std.objective.iter().any(|c| *c < T::zero()) {
            return SolveResult::Unbounded;
        }
        return SolveResult::Solved { x: vec![T::zero(); n] };
    }

    // Layout: structural | slack/surplus | artificial | rhs.
    let mut slack_of = vec![None; m];
    let mut art_of = vec![None; m];
    let mut cols = n;
    for (i, rel) in std.rels.iter().enumerate() {
        let flip = std.rhs[i] < T::zero();
        match (rel, flip) {
            (Rel::Le, false) => {
                slack_of[i] = Some(cols);
                cols += 1;
            }
            (Rel::Le, true) => {
                // Becomes >= with positive rhs: surplus plus artificial.
                slack_of[i] = Some(cols);
                cols += 1;
            }
            (Rel::Eq, _) => {}
        }
    }
    for (i, rel) in std.rels.iter().enumerate() {
        let flip = std.rhs[i] < T::zero();
        if matches!(rel, Rel::Eq) || flip {
            art_of[i] = Some(cols);
            cols += 1;
        }
    }

    let mut t = Tableau {
        rows: Vec::with_capacity(m),
        obj: vec![T::zero(); cols + 1],
        basis: vec![0; m],
        cols,
        banned: vec![false; cols],
    };
    for i in 0..m {
        let flip = std.rhs[i] < T::zero();
        let sign = if flip { -T::one() } else { T::one() };
        let mut row = vec![T::zero(); cols + 1];
        for j in 0..n {
            row[j] = sign.clone() * std.rows[i][j].clone();
        }
        if let Some(s) = slack_of[i] {
            // After a flip the slack enters negatively (surplus).
            row[s] = if flip { -T::one() } else { T::one() };
        }
        if let Some(a) = art_of[i] {
            row[a] = T::one();
        }
        row[cols] = sign * std.rhs[i].clone();
        t.basis[i] = art_of[i].or(slack_of[i]).expect("every row has a basic column");
        t.rows.push(row);
    }

    // Phase 1: minimize the artificial sum. Price out the basic artificials.
    for i in 0..m {
        if art_of[i].is_some() {
            for j in 0..=cols {
                t.obj[j] = t.obj[j].clone() - t.rows[i][j].clone();
            }
        }
    }
    for (i, a) in art_of.iter().enumerate() {
        let _ = i;
        if let Some(a) = *a {
            t.obj[a] = T::zero();
        }
    }

    let limit = 60 * (m + cols) + 2_000;
    let hard_limit = 4 * limit;
    let mut iters = 0usize;
    loop {
        let bland = T::exact() || iters > limit;
        let Some(j) = t.entering(bland) else { break };
        let Some(r) = t.leaving(j) else {
            // Phase 1 is bounded below by zero; no leaving row means noise.
            break;
        };
        t.pivot(r, j);
        iters += 1;
        if iters > hard_limit {
            return SolveResult::Stalled;
        }
    }
    let phase1 = -t.obj[cols].clone();
    if phase1 > T::tol() + T::tol() {
        return SolveResult::Infeasible { phase1 };
    }

    // Drive leftover artificials out of the basis; rows that cannot pivot
    // are redundant and get dropped.
    let is_art = {
        let mut v = vec![false; cols];
        for a in art_of.iter().flatten() {
            v[*a] = true;
        }
        v
    };
    let mut r = 0;
    while r < t.rows.len() {
        if is_art[t.basis[r]] {
            let piv = (0..cols)
                .find(|&j| !is_art[j] && t.rows[r][j].abs_val() > T::tol());
            match piv {
                Some(j) => t.pivot(r, j),
                None => {
                    t.rows.swap_remove(r);
                    t.basis.swap_remove(r);
                    continue;
                }
            }
        }
        r += 1;
    }
    for (j, flag) in is_art.iter().enumerate() {
        if *flag {
            t.banned[j] = true;
        }
    }

    if want_phase2 {
        t.obj = vec![T::zero(); cols + 1];
        for j in 0..n {
            t.obj[j] = std.objective[j].clone();
        }
        for i in 0..t.rows.len() {
            let b = t.basis[i];
            let f = t.obj[b].clone();
            if f != T::zero() {
                let row = t.rows[i].clone();
                for (cell, p) in t.obj.iter_mut().zip(&row) {
                    *cell = cell.clone() - f.clone() * p.clone();
                }
            }
        }
        let mut iters2 = 0usize;
        loop {
            let bland = T::exact() || iters2 > limit;
            let Some(j) = t.entering(bland) else { break };
            let Some(r) = t.leaving(j) else {
                return SolveResult::Unbounded;
            };
            t.pivot(r, j);
            iters2 += 1;
            if iters2 > hard_limit {
                return SolveResult::Stalled;
            }
        }
    }

    let mut x = vec![T::zero(); n];
    for (i, row) in t.rows.iter().enumerate() {
        let b = t.basis[i];
        if b < n {
            x[b] = row[cols].clone();
        }
    }
    SolveResult::Solved { x }
}
