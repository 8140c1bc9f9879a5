//! Graph-based semi-supervised diffusion of the visual BOW model.
//!
//! Each visual word is one "class" spread over the image graph:
//!
//! ```text
//!     F* = argmin_F 1/2 ||F - Y||_F^2 + lambda/2 tr(F^T L F) = (I + lambda L)^{-1} Y
//! ```
//!
//! The same limit is reached by `F(t+1) = alpha S F(t) + (1 - alpha) Y` with
//! `S = D^{-1/2} W D^{-1/2}` and `alpha = lambda / (1 + lambda)`; the iteration
//! only touches the nonzeros of `W`, so it is linear in the number of images
//! on a kNN-sparse graph.

use std::fmt;
use std::str::FromStr;

use log::warn;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laplacian::{normalized_adjacency, sparse_normalized_laplacian};
use crate::linalg::{frobenius, lu_solve};
use crate::matrix::{BowMatrix, SparseAffinity};

/// Largest graph for which the dense closed form is attempted.
pub const CLOSED_FORM_MAX_N: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefineMode {
    ClosedForm,
    Iterative,
}

impl FromStr for RefineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "closed_form" | "closed" => Ok(RefineMode::ClosedForm),
            "iterative" => Ok(RefineMode::Iterative),
            other => Err(Error::param(format!("unknown refine mode {other:?} (closed_form|iterative)"))),
        }
    }
}

impl fmt::Display for RefineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RefineMode::ClosedForm => "closed_form",
            RefineMode::Iterative => "iterative",
        })
    }
}

/// Diffusion settings. `alpha` and `lambda` are two views of one parameter,
/// `alpha = lambda / (1 + lambda)`; only `alpha` is stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRefineConfig", into = "RawRefineConfig")]
pub struct RefineConfig {
    alpha: f64,
    /// Stop once the estimated relative distance to the fixed point,
    /// `alpha / (1 - alpha) * ||F(t+1) - F(t)||_F / ||F(t+1)||_F`, drops below this.
    pub tol: f64,
    pub max_iterations: usize,
    pub mode: RefineMode,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig { alpha: 0.995, tol: 1e-6, max_iterations: 5000, mode: RefineMode::Iterative }
    }
}

impl RefineConfig {
    pub fn from_alpha(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::param(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        Ok(RefineConfig { alpha, ..Default::default() })
    }

    pub fn from_lambda(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::param(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        Ok(RefineConfig { alpha: lambda / (1.0 + lambda), ..Default::default() })
    }

    pub fn with_mode(mut self, mode: RefineMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn lambda(&self) -> f64 {
        self.alpha / (1.0 - self.alpha)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha < 1.0) {
            return Err(Error::param(format!("alpha must lie in [0, 1), got {}", self.alpha)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::param("refine tol must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::param("refine max_iterations must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct RawRefineConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    #[serde(default)]
    tol: Option<f64>,
    #[serde(default)]
    max_iterations: Option<usize>,
    #[serde(default)]
    mode: Option<RefineMode>,
}

impl TryFrom<RawRefineConfig> for RefineConfig {
    type Error = Error;

    fn try_from(raw: RawRefineConfig) -> Result<Self> {
        let mut cfg = match (raw.alpha, raw.lambda) {
            (Some(_), Some(_)) => return Err(Error::param("give either alpha or lambda, not both")),
            (Some(a), None) => RefineConfig::from_alpha(a)?,
            (None, Some(l)) => RefineConfig::from_lambda(l)?,
            (None, None) => RefineConfig::default(),
        };
        if let Some(t) = raw.tol {
            cfg.tol = t;
        }
        if let Some(m) = raw.max_iterations {
            cfg.max_iterations = m;
        }
        if let Some(m) = raw.mode {
            cfg.mode = m;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl From<RefineConfig> for RawRefineConfig {
    fn from(c: RefineConfig) -> Self {
        RawRefineConfig {
            alpha: Some(c.alpha),
            lambda: None,
            tol: Some(c.tol),
            max_iterations: Some(c.max_iterations),
            mode: Some(c.mode),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineOutcome {
    pub refined: BowMatrix,
    pub iterations: usize,
    pub converged: bool,
    /// `||F(t+1) - F(t)||_F` per iteration (empty for the closed form).
    pub change_history: Vec<f64>,
}

/// `S = D^{-1/2} W D^{-1/2}`; rows of isolated images are empty.
pub fn compute_s(w: &SparseAffinity) -> SparseAffinity {
    normalized_adjacency(w)
}

/// `F* = (I + lambda L)^{-1} Y` by one dense LU factorization.
pub fn refine_closed_form(y: &BowMatrix, w: &SparseAffinity, cfg: &RefineConfig) -> Result<BowMatrix> {
    cfg.validate()?;
    check_dims(y, w)?;
    let n = y.rows();
    if n > CLOSED_FORM_MAX_N {
        return Err(Error::TooLarge { n, limit: CLOSED_FORM_MAX_N });
    }
    let lambda = cfg.lambda();
    let mut system = sparse_normalized_laplacian(w).matrix;
    system.mapv_inplace(|v| lambda * v);
    for i in 0..n {
        system[[i, i]] += 1.0;
    }
    let f = lu_solve(system.view(), y.values())
        .ok_or_else(|| Error::InvalidMatrix("I + lambda L is singular".into()))?;
    finish(f, y)
}

/// Fixed-point diffusion from `F(0) = Y`.
pub fn refine_iterative(y: &BowMatrix, w: &SparseAffinity, cfg: &RefineConfig) -> Result<RefineOutcome> {
    cfg.validate()?;
    check_dims(y, w)?;
    let alpha = cfg.alpha();
    if alpha <= 0.0 {
        return Err(Error::param("iterative refinement needs alpha in (0, 1)"));
    }
    let s = compute_s(w);
    let base = y.values().mapv(|v| (1.0 - alpha) * v);
    let mut current = y.values().to_owned();
    let mut next = Array2::zeros(current.dim());
    let bound = alpha / (1.0 - alpha);
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iterations {
        s.mul_dense_into(current.view(), &mut next);
        next.zip_mut_with(&base, |f, b| *f = alpha * *f + b);
        iterations += 1;

        let change = frobenius((&next - &current).view());
        history.push(change);
        std::mem::swap(&mut current, &mut next);

        let scale = frobenius(current.view());
        if scale == 0.0 || bound * change <= cfg.tol * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        warn!("diffusion stopped after {iterations} iterations without reaching tol {}", cfg.tol);
    }
    Ok(RefineOutcome { refined: finish(current, y)?, iterations, converged, change_history: history })
}

/// Runs the configured mode.
pub fn refine(y: &BowMatrix, w: &SparseAffinity, cfg: &RefineConfig) -> Result<RefineOutcome> {
    match cfg.mode {
        RefineMode::ClosedForm => Ok(RefineOutcome {
            refined: refine_closed_form(y, w, cfg)?,
            iterations: 0,
            converged: true,
            change_history: vec![],
        }),
        RefineMode::Iterative => refine_iterative(y, w, cfg),
    }
}

fn check_dims(y: &BowMatrix, w: &SparseAffinity) -> Result<()> {
    if y.rows() != w.size() {
        return Err(Error::dims(format!(
            "visual BOW has {} rows but the graph has {} vertices",
            y.rows(),
            w.size()
        )));
    }
    Ok(())
}

fn finish(mut f: Array2<f64>, y: &BowMatrix) -> Result<BowMatrix> {
    // the exact limit is a nonnegative combination of Y; only rounding can
    // push an entry below zero
    f.mapv_inplace(|v| v.max(0.0));
    let out = BowMatrix::new(f)?;
    match y.feature_ids() {
        Some(ids) => out.with_feature_ids(ids.to_vec()),
        None => Ok(out),
    }
}
