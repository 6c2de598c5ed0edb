//! Locally constant matrix cocycles over a shift space.
//!
//! A generator assigns a d x d matrix to every admissible symbol window of
//! radius r; the cocycle over n steps is the left product of the matrices
//! read along the orbit, newest factor on the left.  Long products are
//! accumulated with periodic renormalization so the log of the norm never
//! overflows.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed;
use crate::symbolic::{sample_orbit, BaseMeasure, ShiftSpace, SymbolSequence};

/// Sentinel standing in for a -infinity exponent in reports.
pub const NEG_INF_FLOOR: f64 = -1e9;

/// Singular values below this trigger the -infinity floor.
pub const UNDERFLOW_EPS: f64 = 1e-300;

/// Default renormalization stride for long products.
pub const DEFAULT_STRIDE: usize = 50;

/// Largest singular value.
pub fn spectral_norm<T: Scalar>(m: &DMatrix<T>) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0f64, |acc, s| acc.max(s.to_f64()))
}

/// All admissible symbol windows of length `len` in `space`.
pub fn admissible_windows(space: &ShiftSpace, len: usize) -> Vec<Vec<u8>> {
    let k = space.alphabet_size();
    let mut out: Vec<Vec<u8>> = (0..k as u8).map(|s| vec![s]).collect();
    for _ in 1..len {
        let mut next = Vec::new();
        for w in &out {
            let last = *w.last().unwrap();
            for b in 0..k as u8 {
                if space.allows(last, b) {
                    let mut w2 = w.clone();
                    w2.push(b);
                    next.push(w2);
                }
            }
        }
        out = next;
    }
    out
}

/// A locally constant cocycle generator: one matrix per symbol window of
/// radius `r` (window length 2r + 1).
#[derive(Debug, Clone)]
pub struct CocycleGenerator<T: Scalar> {
    dim: usize,
    radius: usize,
    table: HashMap<Vec<u8>, DMatrix<T>>,
}

impl<T: Scalar> CocycleGenerator<T> {
    pub fn new(
        space: &ShiftSpace,
        dim: usize,
        radius: usize,
        table: HashMap<Vec<u8>, DMatrix<T>>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Invalid {
                what: "generator",
                why: "dimension must be >= 1".into(),
            });
        }
        for (w, m) in &table {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(Error::Invalid {
                    what: "generator",
                    why: format!("entry for {w:?} is {}x{}, expected {dim}x{dim}", m.nrows(), m.ncols()),
                });
            }
            if m.iter().any(|v| !v.to_f64().is_finite()) {
                return Err(Error::Invalid {
                    what: "generator",
                    why: format!("entry for {w:?} has a non-finite value"),
                });
            }
        }
        for w in admissible_windows(space, 2 * radius + 1) {
            if !table.contains_key(&w) {
                return Err(Error::MissingWindow(w));
            }
        }
        Ok(CocycleGenerator { dim, radius, table })
    }

    /// Radius-0 generator from one matrix per symbol.
    pub fn per_symbol(space: &ShiftSpace, matrices: Vec<DMatrix<T>>) -> Result<Self> {
        if matrices.len() != space.alphabet_size() {
            return Err(Error::Invalid {
                what: "generator",
                why: "need exactly one matrix per symbol".into(),
            });
        }
        let dim = matrices[0].nrows();
        let table = matrices
            .into_iter()
            .enumerate()
            .map(|(s, m)| (vec![s as u8], m))
            .collect();
        CocycleGenerator::new(space, dim, 0, table)
    }

    /// Constant cocycle (same matrix everywhere).
    pub fn constant(space: &ShiftSpace, matrix: DMatrix<T>) -> Result<Self> {
        let ms = vec![matrix; space.alphabet_size()];
        CocycleGenerator::per_symbol(space, ms)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn table(&self) -> &HashMap<Vec<u8>, DMatrix<T>> {
        &self.table
    }

    /// Matrix at `x`: table lookup on the window x_{-r} ... x_r.
    pub fn evaluate(&self, x: &SymbolSequence) -> Result<&DMatrix<T>> {
        let r = self.radius as i64;
        let mut w = Vec::with_capacity(2 * self.radius + 1);
        for i in -r..=r {
            w.push(x.get(i)?);
        }
        self.table
            .get(&w)
            .ok_or(Error::MissingWindow(w))
    }

    /// Matrix for the orbit position `j` of `x` (avoids cloning sequences).
    pub fn evaluate_at(&self, x: &SymbolSequence, j: i64) -> Result<&DMatrix<T>> {
        let r = self.radius as i64;
        let mut w = Vec::with_capacity(2 * self.radius + 1);
        for i in -r..=r {
            w.push(x.get(j + i)?);
        }
        self.table.get(&w).ok_or(Error::MissingWindow(w))
    }

    /// The n-step product A(sigma^{n-1} x) ... A(sigma x) A(x); identity for
    /// n = 0.
    pub fn product(&self, x: &SymbolSequence, n: usize) -> Result<DMatrix<T>> {
        let mut acc = DMatrix::identity(self.dim, self.dim);
        for j in 0..n as i64 {
            acc = self.evaluate_at(x, j)? * acc;
        }
        Ok(acc)
    }

    /// Product over the window of `p`'s word starting at phase 0 over one
    /// full period.
    pub fn period_product(&self, p: &crate::symbolic::PeriodicPoint, space: &std::sync::Arc<ShiftSpace>) -> Result<DMatrix<T>> {
        let seq = SymbolSequence::from_periodic_point(space.clone(), p);
        self.product(&seq, p.period())
    }

    /// n-step product with running renormalization every `stride` steps.
    /// Returns the scaled matrix; `log_norm()` gives log of the true norm.
    pub fn scaled_product(
        &self,
        x: &SymbolSequence,
        n: usize,
        stride: usize,
    ) -> Result<ScaledMatrix<T>> {
        assert!(stride >= 1);
        let mut acc = ScaledMatrix {
            matrix: DMatrix::identity(self.dim, self.dim),
            log_scale: 0.0,
        };
        for j in 0..n as i64 {
            acc.matrix = self.evaluate_at(x, j)? * &acc.matrix;
            if (j + 1) as usize % stride == 0 {
                acc.renormalize()?;
            }
        }
        Ok(acc)
    }

    /// Text format: `dim d`, `radius r`, then one line per window:
    /// the window symbols followed by d*d row-major entries.
    pub fn parse(text: &str, space: &ShiftSpace) -> Result<Self> {
        let mut dim = None;
        let mut radius = None;
        let mut rows: Vec<(Vec<u8>, Vec<f64>)> = Vec::new();
        let mut errors = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            match toks[0] {
                "dim" => match toks.get(1).map(|t| t.parse::<usize>()) {
                    Some(Ok(d)) if d >= 1 => dim = Some(d),
                    _ => errors.push(format!("line {}: bad dim", lineno + 1)),
                },
                "radius" => match toks.get(1).map(|t| t.parse::<usize>()) {
                    Some(Ok(r)) => radius = Some(r),
                    _ => errors.push(format!("line {}: bad radius", lineno + 1)),
                },
                _ => {
                    let (Some(d), Some(r)) = (dim, radius) else {
                        errors.push(format!(
                            "line {}: entry before dim/radius header",
                            lineno + 1
                        ));
                        continue;
                    };
                    let wlen = 2 * r + 1;
                    if toks.len() != wlen + d * d {
                        errors.push(format!(
                            "line {}: expected {} window symbols and {} entries",
                            lineno + 1,
                            wlen,
                            d * d
                        ));
                        continue;
                    }
                    let mut w = Vec::with_capacity(wlen);
                    let mut vals = Vec::with_capacity(d * d);
                    let mut ok = true;
                    for t in &toks[..wlen] {
                        match t.parse::<u8>() {
                            Ok(s) => w.push(s),
                            Err(_) => {
                                errors.push(format!("line {}: bad symbol {t}", lineno + 1));
                                ok = false;
                            }
                        }
                    }
                    for t in &toks[wlen..] {
                        match t.parse::<f64>() {
                            Ok(v) => vals.push(v),
                            Err(_) => {
                                errors.push(format!("line {}: bad entry {t}", lineno + 1));
                                ok = false;
                            }
                        }
                    }
                    if ok {
                        rows.push((w, vals));
                    }
                }
            }
        }
        if !errors.is_empty() {
            return Err(Error::Parse(errors));
        }
        let dim = dim.ok_or_else(|| Error::Parse(vec!["missing dim header".into()]))?;
        let radius = radius.ok_or_else(|| Error::Parse(vec!["missing radius header".into()]))?;
        let mut table = HashMap::new();
        for (w, vals) in rows {
            let m = DMatrix::from_row_slice(dim, dim, &vals).map(T::of_f64);
            table.insert(w, m);
        }
        CocycleGenerator::new(space, dim, radius, table)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("dim {}\nradius {}\n", self.dim, self.radius);
        let mut keys: Vec<&Vec<u8>> = self.table.keys().collect();
        keys.sort();
        for w in keys {
            let m = &self.table[w];
            let syms: Vec<String> = w.iter().map(|s| s.to_string()).collect();
            let mut line = syms.join(" ");
            for i in 0..self.dim {
                for j in 0..self.dim {
                    line.push_str(&format!(" {:.17e}", m[(i, j)].to_f64()));
                }
            }
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    /// Hoelder data certifying ||A(x) - A(y)|| <= C2 d(x, y)^alpha with
    /// alpha = 1: windows can only differ at distance >= 2^(-r).
    pub fn holder_constants(&self, _space: &ShiftSpace) -> HolderData {
        let alpha = 1.0;
        let d_min = 2f64.powi(-(self.radius as i32));
        let mut max_gap = 0.0f64;
        let entries: Vec<&DMatrix<T>> = self.table.values().collect();
        for (i, a) in entries.iter().enumerate() {
            for b in entries.iter().skip(i + 1) {
                max_gap = max_gap.max(spectral_norm(&(*a - *b)));
            }
        }
        HolderData {
            c2: max_gap / d_min.powf(alpha),
            alpha,
        }
    }
}

/// Matrix with an accumulated log scale; the represented matrix is
/// `exp(log_scale) * matrix`.
#[derive(Debug, Clone)]
pub struct ScaledMatrix<T: Scalar> {
    pub matrix: DMatrix<T>,
    pub log_scale: f64,
}

impl<T: Scalar> ScaledMatrix<T> {
    /// Divide out the current norm into the scale.  Errors if the product
    /// has underflowed to exact zero.
    pub fn renormalize(&mut self) -> Result<()> {
        let norm = spectral_norm(&self.matrix);
        if norm < UNDERFLOW_EPS {
            return Err(Error::Degenerate);
        }
        let inv = T::of_f64(1.0 / norm);
        self.matrix *= inv;
        self.log_scale += norm.ln();
        Ok(())
    }

    /// log of the spectral norm of the represented matrix.
    pub fn log_norm(&self) -> f64 {
        let n = spectral_norm(&self.matrix);
        if n < UNDERFLOW_EPS {
            NEG_INF_FLOOR
        } else {
            self.log_scale + n.ln()
        }
    }
}

/// Hoelder continuity certificate for a generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderData {
    pub c2: f64,
    pub alpha: f64,
}

/// Asymptotic growth-rate estimates for the cocycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthEstimates {
    pub lambda_mu: f64,
    pub lambda_mu_stderr: f64,
    /// -infinity floored at `NEG_INF_FLOOR` (finite matrices are compact).
    pub kappa_mu: f64,
    pub quasi_compact: bool,
}

/// Monte-Carlo estimate of lambda(mu) = lim (1/n) log||A^n(x)||.
pub fn lambda_mu_estimate<T: Scalar>(
    gen: &CocycleGenerator<T>,
    space: &std::sync::Arc<ShiftSpace>,
    measure: &BaseMeasure,
    n: usize,
    replicates: usize,
    seed: u64,
) -> GrowthEstimates {
    lambda_mu_estimate_with_stride(gen, space, measure, n, replicates, seed, DEFAULT_STRIDE)
}

pub fn lambda_mu_estimate_with_stride<T: Scalar>(
    gen: &CocycleGenerator<T>,
    space: &std::sync::Arc<ShiftSpace>,
    measure: &BaseMeasure,
    n: usize,
    replicates: usize,
    seed: u64,
    stride: usize,
) -> GrowthEstimates {
    assert!(n >= 100, "n must be at least 100");
    assert!(replicates >= 1);
    let r = gen.radius();
    let values: Vec<f64> = (0..replicates as u64)
        .into_par_iter()
        .map(|j| {
            let child = seed::split(seed, seed::tag::REPLICATE, j);
            let x = sample_orbit(space, measure, r, n + r, child);
            match gen.scaled_product(&x, n, stride) {
                Ok(p) => {
                    let ln = p.log_norm();
                    if ln <= NEG_INF_FLOOR {
                        NEG_INF_FLOOR
                    } else {
                        ln / n as f64
                    }
                }
                Err(_) => NEG_INF_FLOOR,
            }
        })
        .collect();
    let floored = values.iter().any(|&v| v <= NEG_INF_FLOOR);
    let (lambda, stderr) = if floored {
        (NEG_INF_FLOOR, 0.0)
    } else {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64
        } else {
            0.0
        };
        (mean, (var / values.len() as f64).sqrt())
    };
    GrowthEstimates {
        lambda_mu: lambda,
        lambda_mu_stderr: stderr,
        kappa_mu: NEG_INF_FLOOR,
        quasi_compact: lambda > NEG_INF_FLOOR,
    }
}
