//! Weighted non-negative matrix factorization.
//!
//! Given X >= 0 and a binary mask W, find U >= 0 (n x k memberships) and
//! V >= 0 (k x m clusters) minimizing the Frobenius norm of W .* (X - UV).
//! Masked cells contribute nothing to the objective; when a masked cell is
//! known to be bounded by a constant c (quiz scores live in [0,1]), the
//! bound rule temporarily unmasks it at value c whenever the current
//! reconstruction exceeds c, and re-masks it when it drops back below.
//!
//! Factors are driven by the weighted multiplicative update rules
//!
//! ```text
//! U <- U .* [(W.*X) V'] ./ [(W.*(UV)) V' + delta]
//! V <- V .* [U' (W.*X)] ./ [U' (W.*(UV)) + delta]
//! ```
//!
//! with two stabilizations: guarded denominators, and lifting any entry
//! stuck at zero whose objective partial derivative is negative to a small
//! epsilon before its multiplicative update, so the iteration can reach a
//! stationary point.

use std::collections::BTreeMap;

use ndarray::{Array2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::features::RowLabel;
use crate::seeding::indexed_seed;
use crate::Result;

/// Knobs for [`fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iters: usize,
    /// Stop when the relative per-iteration objective decrease falls below this.
    pub rel_tol: f64,
    /// Added to every denominator.
    pub denom_guard: f64,
    /// Lift value for zero entries with negative partial derivative.
    pub lin_epsilon: f64,
    pub restarts: usize,
    /// Upper bounds for masked columns: column index -> c.
    pub bounds: BTreeMap<usize, f64>,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iters: 500,
            rel_tol: 1e-6,
            denom_guard: 1e-12,
            lin_epsilon: 1e-9,
            restarts: 5,
            bounds: BTreeMap::new(),
            seed: 42,
        }
    }
}

impl FitOptions {
    pub fn validate(&self, n_cols: usize) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::validation("max_iters must be >= 1"));
        }
        if !(self.rel_tol > 0.0) || !(self.denom_guard > 0.0) || !(self.lin_epsilon > 0.0) {
            return Err(Error::validation(
                "rel_tol, denom_guard and lin_epsilon must all be positive",
            ));
        }
        if self.restarts < 1 {
            return Err(Error::validation("restarts must be >= 1"));
        }
        for (&col, &c) in &self.bounds {
            if col >= n_cols {
                return Err(Error::validation(format!(
                    "bound on column {col} but the matrix has {n_cols} columns"
                )));
            }
            if !c.is_finite() || c < 0.0 {
                return Err(Error::validation(format!(
                    "bound {c} on column {col} must be finite and non-negative"
                )));
            }
        }
        Ok(())
    }
}

/// A fitted factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    /// n x k memberships.
    pub u: Array2<f64>,
    /// k x m clusters.
    pub v: Array2<f64>,
    pub k: usize,
    /// Masked objective (Frobenius norm, not squared) after each iteration,
    /// evaluated on the working matrix/mask of that iteration.
    pub objective_trace: Vec<f64>,
    /// Master seed the restarts were derived from.
    pub seed: u64,
    /// Index of the winning restart.
    pub restart: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Set by [`normalize_clusters`].
    pub normalized: bool,
    /// Rows of V with zero sum, skipped by normalization.
    pub degenerate_rows: Vec<usize>,
    /// Number of mask 0 -> 1 toggles the bound rule performed.
    pub bound_toggles: usize,
    /// Originally-missing cells that were unmasked at the final iteration.
    pub bound_overrides: Vec<(usize, usize)>,
    pub warnings: Vec<String>,
}

impl FactorModel {
    pub fn final_objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(f64::INFINITY)
    }
}

/// The diagonal of the rescaling matrix A applied by [`normalize_clusters`]
/// (V' = A V, U' = U A^-1). Identity entries mark degenerate rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalRescaling {
    pub scale: Vec<f64>,
}

/// Seeded random factors, entries uniform on (0, 1].
///
/// Strictly positive draws keep the multiplicative updates from locking
/// entries at zero from the start.
pub fn init_factors(n: usize, m: usize, k: usize, seed: u64) -> (Array2<f64>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |shape: (usize, usize)| {
        Array2::from_shape_simple_fn(shape, || 1.0 - rng.gen::<f64>())
    };
    let u = draw((n, k));
    let v = draw((k, m));
    (u, v)
}

fn check_shapes(x: &Array2<f64>, w: &Array2<f64>, u: &Array2<f64>, v: &Array2<f64>) -> Result<()> {
    if x.dim() != w.dim() {
        return Err(Error::shape(format!(
            "X is {:?} but W is {:?}",
            x.dim(),
            w.dim()
        )));
    }
    if u.nrows() != x.nrows() || v.ncols() != x.ncols() || u.ncols() != v.nrows() {
        return Err(Error::shape(format!(
            "factors ({:?}, {:?}) do not conform with X {:?}",
            u.dim(),
            v.dim(),
            x.dim()
        )));
    }
    Ok(())
}

/// Frobenius norm (not squared) of W .* (X - UV).
pub fn masked_objective(
    x: &Array2<f64>,
    w: &Array2<f64>,
    u: &Array2<f64>,
    v: &Array2<f64>,
) -> Result<f64> {
    check_shapes(x, w, u, v)?;
    let uv = u.dot(v);
    let mut acc = 0.0;
    Zip::from(w).and(x).and(&uv).for_each(|&wij, &xij, &pij| {
        let r = wij * (xij - pij);
        acc += r * r;
    });
    Ok(acc.sqrt())
}

/// One alternating update: U first, then V against the updated U.
///
/// Entries equal to zero whose partial derivative is negative are raised to
/// `opts.lin_epsilon` before their multiplicative update (their multiplier
/// would otherwise pin them at zero regardless of the gradient).
pub fn update_step(
    x: &Array2<f64>,
    w: &Array2<f64>,
    u: &Array2<f64>,
    v: &Array2<f64>,
    opts: &FitOptions,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_shapes(x, w, u, v)?;
    if w.iter().all(|&v| v == 0.0) {
        return Err(Error::validation("mask W is all zeros"));
    }
    if u.iter().chain(v.iter()).any(|&e| e < 0.0 || !e.is_finite()) {
        return Err(Error::validation("factors must be finite and non-negative"));
    }
    let delta = opts.denom_guard;
    let wx = w * x;

    // U half-step
    let mut u_new = u.clone();
    let num_u = wx.dot(&v.t());
    let mut den_u = (w * &u.dot(v)).dot(&v.t());
    if lift_stuck_zeros(&mut u_new, &num_u, &den_u, opts.lin_epsilon) {
        den_u = (w * &u_new.dot(v)).dot(&v.t());
    }
    Zip::from(&mut u_new)
        .and(&num_u)
        .and(&den_u)
        .for_each(|e, &n, &d| *e *= n / (d + delta));

    // V half-step against the updated U
    let mut v_new = v.clone();
    let num_v = u_new.t().dot(&wx);
    let mut den_v = u_new.t().dot(&(w * &u_new.dot(v)));
    if lift_stuck_zeros(&mut v_new, &num_v, &den_v, opts.lin_epsilon) {
        den_v = u_new.t().dot(&(w * &u_new.dot(&v_new)));
    }
    Zip::from(&mut v_new)
        .and(&num_v)
        .and(&den_v)
        .for_each(|e, &n, &d| *e *= n / (d + delta));

    Ok((u_new, v_new))
}

/// The partial derivative at an entry is den - num; negative means the
/// objective wants the entry to grow.
fn lift_stuck_zeros(
    factor: &mut Array2<f64>,
    num: &Array2<f64>,
    den: &Array2<f64>,
    epsilon: f64,
) -> bool {
    let mut lifted = false;
    Zip::from(factor).and(num).and(den).for_each(|e, &n, &d| {
        if *e == 0.0 && d < n {
            *e = epsilon;
            lifted = true;
        }
    });
    lifted
}

/// The bound rule for originally-missing cells (mask 0) with a known upper
/// bound c on their column: while the reconstruction exceeds c the cell is
/// unmasked at value c; when it drops back below, the weight resets to 0
/// (the cell's X value is left at c and nullified by the mask).
///
/// Returns the adjusted (X', W'). `missing` lists cells whose original mask
/// was 0; cells in columns without a bound are left untouched.
pub fn apply_bound_rule(
    x: &Array2<f64>,
    w: &Array2<f64>,
    uv: &Array2<f64>,
    bounds: &BTreeMap<usize, f64>,
    missing: &[(usize, usize)],
) -> (Array2<f64>, Array2<f64>) {
    let mut x_new = x.clone();
    let mut w_new = w.clone();
    let cells: Vec<(usize, usize, f64)> = missing
        .iter()
        .filter_map(|&(i, j)| bounds.get(&j).map(|&c| (i, j, c)))
        .collect();
    bound_rule_inplace(&mut x_new, &mut w_new, uv, &cells);
    (x_new, w_new)
}

fn bound_rule_inplace(
    x: &mut Array2<f64>,
    w: &mut Array2<f64>,
    uv: &Array2<f64>,
    cells: &[(usize, usize, f64)],
) -> usize {
    let mut toggled_on = 0;
    for &(i, j, c) in cells {
        if uv[[i, j]] > c {
            if w[[i, j]] == 0.0 {
                toggled_on += 1;
            }
            x[[i, j]] = c;
            w[[i, j]] = 1.0;
        } else {
            w[[i, j]] = 0.0;
        }
    }
    toggled_on
}

fn validate_inputs(x: &Array2<f64>, w: &Array2<f64>) -> Result<()> {
    if x.dim() != w.dim() {
        return Err(Error::shape(format!(
            "X is {:?} but W is {:?}",
            x.dim(),
            w.dim()
        )));
    }
    for &v in x.iter() {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::validation(format!(
                "X entries must be finite and non-negative, found {v}"
            )));
        }
    }
    for &v in w.iter() {
        if v != 0.0 && v != 1.0 {
            return Err(Error::validation(format!(
                "W entries must be 0 or 1, found {v}"
            )));
        }
    }
    Ok(())
}

struct RestartOutcome {
    u: Array2<f64>,
    v: Array2<f64>,
    trace: Vec<f64>,
    converged: bool,
    iterations: usize,
    bound_toggles: usize,
    bound_overrides: Vec<(usize, usize)>,
}

fn run_restart(
    x: &Array2<f64>,
    w: &Array2<f64>,
    k: usize,
    opts: &FitOptions,
    cells: &[(usize, usize, f64)],
    seed: u64,
) -> Result<RestartOutcome> {
    let (n, m) = x.dim();
    let (mut u, mut v) = init_factors(n, m, k, seed);
    let mut xw = x.clone();
    let mut ww = w.clone();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut bound_toggles = 0;

    for _ in 0..opts.max_iters {
        if !cells.is_empty() {
            let uv = u.dot(&v);
            bound_toggles += bound_rule_inplace(&mut xw, &mut ww, &uv, cells);
        }
        let (u_next, v_next) = update_step(&xw, &ww, &u, &v, opts)?;
        u = u_next;
        v = v_next;
        let obj = masked_objective(&xw, &ww, &u, &v)?;
        trace.push(obj);
        let t = trace.len();
        if t >= 2 {
            let prev = trace[t - 2];
            if (prev - obj).abs() <= opts.rel_tol * prev.max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }
    }

    let bound_overrides = cells
        .iter()
        .filter(|&&(i, j, _)| ww[[i, j]] == 1.0)
        .map(|&(i, j, _)| (i, j))
        .collect();
    let iterations = trace.len();
    Ok(RestartOutcome {
        u,
        v,
        trace,
        converged,
        iterations,
        bound_toggles,
        bound_overrides,
    })
}

/// Fits k clusters with `opts.restarts` seeded restarts and returns the
/// restart with the lowest final masked objective.
pub fn fit(x: &Array2<f64>, w: &Array2<f64>, k: usize, opts: &FitOptions) -> Result<FactorModel> {
    validate_inputs(x, w)?;
    let (n, m) = x.dim();
    opts.validate(m)?;
    if k < 1 {
        return Err(Error::validation("k must be >= 1"));
    }
    if n == 0 || m == 0 {
        return Err(Error::validation("X must be non-empty"));
    }
    if w.iter().all(|&v| v == 0.0) {
        return Err(Error::validation("mask W is all zeros"));
    }

    let mut warnings = Vec::new();
    if k > n.min(m) {
        warnings.push(format!(
            "k = {k} exceeds min(n, m) = {}; the factorization is over-parameterized",
            n.min(m)
        ));
    }

    let cells: Vec<(usize, usize, f64)> = w
        .indexed_iter()
        .filter(|&(_, &v)| v == 0.0)
        .filter_map(|((i, j), _)| opts.bounds.get(&j).map(|&c| (i, j, c)))
        .collect();

    let outcomes: Vec<RestartOutcome> = (0..opts.restarts)
        .into_par_iter()
        .map(|r| run_restart(x, w, k, opts, &cells, indexed_seed(opts.seed, r as u64)))
        .collect::<Result<Vec<_>>>()?;

    let best = outcomes
        .iter()
        .enumerate()
        .min_by(|(ra, a), (rb, b)| {
            let fa = a.trace.last().copied().unwrap_or(f64::INFINITY);
            let fb = b.trace.last().copied().unwrap_or(f64::INFINITY);
            fa.partial_cmp(&fb).expect("finite objectives").then(ra.cmp(rb))
        })
        .map(|(r, _)| r)
        .expect("restarts >= 1");
    let outcome = outcomes.into_iter().nth(best).expect("index in range");

    Ok(FactorModel {
        u: outcome.u,
        v: outcome.v,
        k,
        objective_trace: outcome.trace,
        seed: opts.seed,
        restart: best,
        converged: outcome.converged,
        iterations: outcome.iterations,
        normalized: false,
        degenerate_rows: Vec::new(),
        bound_toggles: outcome.bound_toggles,
        bound_overrides: outcome.bound_overrides,
        warnings,
    })
}

/// Rescales V so every row (cluster) sums to one, absorbing the scale into
/// the matching column of U: V' = A V, U' = U A^-1 with A = diag(1/s).
/// Rows with zero sum are left unchanged and flagged degenerate.
pub fn normalize_clusters(model: &FactorModel) -> (FactorModel, DiagonalRescaling) {
    let mut normalized = model.clone();
    let mut scale = vec![1.0; model.k];
    let mut degenerate = Vec::new();
    for i in 0..model.k {
        let s: f64 = model.v.row(i).sum();
        if s > 0.0 {
            scale[i] = 1.0 / s;
            normalized.v.row_mut(i).mapv_inplace(|e| e / s);
            normalized.u.column_mut(i).mapv_inplace(|e| e * s);
        } else {
            degenerate.push(i);
        }
    }
    normalized.normalized = true;
    normalized.degenerate_rows = degenerate;
    (normalized, DiagonalRescaling { scale })
}

/// Result of scanning k = 1..=k_max.
#[derive(Debug)]
pub struct RankSelection {
    pub k_star: usize,
    /// One fitted model per k, index k-1.
    pub models: Vec<FactorModel>,
    /// Final masked objective per k.
    pub errors: Vec<f64>,
    pub warning: Option<String>,
}

/// An error this far below the data norm counts as an exact factorization.
const EXACT_FIT_REL: f64 = 1e-9;

/// Fits k = 1..=k_max and picks the smallest k whose error decrease toward
/// k+1, relative to the k = 1 error, falls below tau. A k that already fits
/// the data exactly is selected outright; if nothing triggers, k_max is
/// returned with a warning.
pub fn select_k(
    x: &Array2<f64>,
    w: &Array2<f64>,
    k_max: usize,
    tau: f64,
    opts: &FitOptions,
) -> Result<RankSelection> {
    if k_max < 1 {
        return Err(Error::validation("k_max must be >= 1"));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::validation(format!("tau = {tau} must be in (0, 1)")));
    }
    let models: Vec<FactorModel> = (1..=k_max)
        .into_par_iter()
        .map(|k| fit(x, w, k, opts))
        .collect::<Result<Vec<_>>>()?;
    let errors: Vec<f64> = models.iter().map(|m| m.final_objective()).collect();

    let mut masked_norm = 0.0;
    Zip::from(w).and(x).for_each(|&wij, &xij| {
        let v = wij * xij;
        masked_norm += v * v;
    });
    let masked_norm = masked_norm.sqrt();
    let err1 = errors[0].max(f64::MIN_POSITIVE);

    for k in 1..=k_max {
        if errors[k - 1] <= EXACT_FIT_REL * masked_norm {
            return Ok(RankSelection {
                k_star: k,
                models,
                errors,
                warning: None,
            });
        }
        if k < k_max && (errors[k - 1] - errors[k]) / err1 < tau {
            return Ok(RankSelection {
                k_star: k,
                models,
                errors,
                warning: None,
            });
        }
    }
    Ok(RankSelection {
        k_star: k_max,
        models,
        errors,
        warning: Some(format!(
            "error decrease never fell below tau = {tau}; returning k_max = {k_max}"
        )),
    })
}

/// On-disk JSON form of a fitted model plus the labels of the matrix it was
/// fitted on. Matrices are row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDocument {
    pub k: usize,
    pub seed: u64,
    pub options: FitOptions,
    pub row_labels: Vec<RowLabel>,
    pub col_labels: Vec<String>,
    pub n_rows: usize,
    pub n_cols: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub restart: usize,
    pub normalized: bool,
    pub degenerate_rows: Vec<usize>,
    pub bound_toggles: usize,
    pub bound_overrides: Vec<(usize, usize)>,
    pub warnings: Vec<String>,
}

impl ModelDocument {
    pub fn from_model(
        model: &FactorModel,
        row_labels: Vec<RowLabel>,
        col_labels: Vec<String>,
    ) -> Self {
        ModelDocument {
            k: model.k,
            seed: model.seed,
            options: FitOptions::default(),
            row_labels,
            col_labels,
            n_rows: model.u.nrows(),
            n_cols: model.v.ncols(),
            u: model.u.iter().copied().collect(),
            v: model.v.iter().copied().collect(),
            objective_trace: model.objective_trace.clone(),
            converged: model.converged,
            iterations: model.iterations,
            restart: model.restart,
            normalized: model.normalized,
            degenerate_rows: model.degenerate_rows.clone(),
            bound_toggles: model.bound_toggles,
            bound_overrides: model.bound_overrides.clone(),
            warnings: model.warnings.clone(),
        }
    }

    pub fn with_options(mut self, options: FitOptions) -> Self {
        self.options = options;
        self
    }

    pub fn to_model(&self) -> Result<FactorModel> {
        if self.u.len() != self.n_rows * self.k || self.v.len() != self.k * self.n_cols {
            return Err(Error::shape(format!(
                "model document claims {}x{} with k = {} but carries {} + {} values",
                self.n_rows,
                self.n_cols,
                self.k,
                self.u.len(),
                self.v.len()
            )));
        }
        if self.row_labels.len() != self.n_rows || self.col_labels.len() != self.n_cols {
            return Err(Error::shape(
                "model document labels do not match its dimensions",
            ));
        }
        let u = Array2::from_shape_vec((self.n_rows, self.k), self.u.clone())
            .map_err(|e| Error::shape(e.to_string()))?;
        let v = Array2::from_shape_vec((self.k, self.n_cols), self.v.clone())
            .map_err(|e| Error::shape(e.to_string()))?;
        Ok(FactorModel {
            u,
            v,
            k: self.k,
            objective_trace: self.objective_trace.clone(),
            seed: self.seed,
            restart: self.restart,
            converged: self.converged,
            iterations: self.iterations,
            normalized: self.normalized,
            degenerate_rows: self.degenerate_rows.clone(),
            bound_toggles: self.bound_toggles,
            bound_overrides: self.bound_overrides.clone(),
            warnings: self.warnings.clone(),
        })
    }
}
