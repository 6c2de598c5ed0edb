//! Numerical multiplicative ergodic theory.
//!
//! Exponents counted with multiplicity come from a streaming QR
//! triangularization of the orbit product; grouping into exceptional
//! exponents is a greedy gap clustering.  Fast subspaces are obtained by
//! pushing a frame forward from deep in the past, slow spaces by pulling the
//! transposed cocycle backward from the future, and their intersections give
//! the individual Oseledets blocks.  On periodic points everything reduces to
//! an eigenproblem for the period product.

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;

use crate::cocycle::{spectral_norm, CocycleGenerator, NEG_INF_FLOOR, UNDERFLOW_EPS};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed;
use crate::symbolic::{PeriodicPoint, ShiftSpace, SymbolSequence};

/// Default stability tolerance for pullback frames.
pub const DEFAULT_FRAME_TOL: f64 = 1e-6;

/// Default gap for grouping periodic-point exponents.
pub const PERIODIC_GROUP_GAP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumGroup {
    pub lambda: f64,
    pub multiplicity: usize,
}

/// Exponents with multiplicity plus their grouping into exceptional values.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovSpectrum {
    /// All d exponents, nonincreasing, -infinity floored.
    pub gammas: Vec<f64>,
    /// Exceptional exponents (group means) with multiplicities; stops before
    /// the floor.
    pub groups: Vec<SpectrumGroup>,
    pub grouping_gap: f64,
}

impl LyapunovSpectrum {
    /// Number of exceptional exponents l.
    pub fn levels(&self) -> usize {
        self.groups.len()
    }

    /// d_1 + ... + d_s.
    pub fn fast_dim(&self, s: usize) -> usize {
        self.groups[..s].iter().map(|g| g.multiplicity).sum()
    }

    /// Threshold between groups i and i+1 (0-based): midpoint of the means.
    pub fn threshold(&self, i: usize) -> f64 {
        0.5 * (self.groups[i].lambda + self.groups[i + 1].lambda)
    }

    /// Smallest gap between consecutive group means.
    pub fn min_gap(&self) -> Option<f64> {
        self.groups
            .windows(2)
            .map(|w| w[0].lambda - w[1].lambda)
            .fold(None, |acc: Option<f64>, g| Some(acc.map_or(g, |a| a.min(g))))
    }
}

/// Greedy gap clustering of a nonincreasing exponent list.
pub fn group_spectrum(gammas: &[f64], grouping_gap: f64) -> LyapunovSpectrum {
    assert!(
        gammas.windows(2).all(|w| w[0] >= w[1]),
        "gammas must be nonincreasing"
    );
    let finite: Vec<f64> = gammas
        .iter()
        .copied()
        .filter(|&g| g > NEG_INF_FLOOR)
        .collect();
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=finite.len() {
        if i == finite.len() || finite[i - 1] - finite[i] > grouping_gap {
            let slice = &finite[start..i];
            groups.push(SpectrumGroup {
                lambda: slice.iter().sum::<f64>() / slice.len() as f64,
                multiplicity: slice.len(),
            });
            start = i;
        }
    }
    LyapunovSpectrum {
        gammas: gammas.to_vec(),
        groups,
        grouping_gap,
    }
}

/// Default grouping gap: half the smallest consecutive gap that exceeds
/// 10x the sampling error.
pub fn default_grouping_gap(gammas: &[f64], stderr: f64) -> f64 {
    let finite: Vec<f64> = gammas
        .iter()
        .copied()
        .filter(|&g| g > NEG_INF_FLOOR)
        .collect();
    let significant = finite
        .windows(2)
        .map(|w| w[0] - w[1])
        .filter(|&g| g > 10.0 * stderr)
        .fold(f64::INFINITY, f64::min);
    if significant.is_finite() {
        0.5 * significant
    } else {
        // all exponents statistically indistinguishable: one group
        f64::INFINITY
    }
}

/// Streaming orthonormal frame with per-column log accumulation.
struct Streamer<T: Scalar> {
    q: DMatrix<T>,
    accum: Vec<f64>,
    dead: Vec<bool>,
    reseed: u64,
}

impl<T: Scalar> Streamer<T> {
    fn identity(d: usize) -> Self {
        Streamer {
            q: DMatrix::identity(d, d),
            accum: vec![0.0; d],
            dead: vec![false; d],
            reseed: 0,
        }
    }

    /// Modified Gram-Schmidt; collapsed columns are floored and re-seeded
    /// with a deterministic random direction.
    fn orthonormalize(&mut self) {
        let d = self.q.nrows();
        for i in 0..d {
            let mut v = self.q.column(i).clone_owned();
            for j in 0..i {
                let qj = self.q.column(j);
                let dot = qj.dot(&v);
                v -= qj * dot;
            }
            let mut norm = v.norm().to_f64();
            if norm < UNDERFLOW_EPS {
                self.dead[i] = true;
                let mut rng = seed::rng(0x05EED, seed::tag::FRAME_RESEED, self.reseed);
                self.reseed += 1;
                loop {
                    for e in v.iter_mut() {
                        *e = T::of_f64(rng.gen_range(-1.0..1.0));
                    }
                    for j in 0..i {
                        let qj = self.q.column(j);
                        let dot = qj.dot(&v);
                        v -= qj * dot;
                    }
                    norm = v.norm().to_f64();
                    if norm > 1e-6 {
                        break;
                    }
                }
            } else if !self.dead[i] {
                self.accum[i] += norm.ln();
            }
            v /= T::of_f64(norm);
            self.q.set_column(i, &v);
        }
    }

    /// Push through `steps` generator factors starting at orbit position
    /// `from`, reorthonormalizing every `stride` steps and at the end.
    fn push<U: Scalar>(
        &mut self,
        gen: &CocycleGenerator<U>,
        x: &SymbolSequence,
        from: i64,
        steps: usize,
        stride: usize,
        transpose: bool,
    ) -> Result<()>
    where
        T: Scalar,
    {
        assert!(stride >= 1);
        for c in 0..steps as i64 {
            // transposed pulls run from the far future toward the origin
            let j = if transpose { from + steps as i64 - 1 - c } else { from + c };
            let a = gen.evaluate_at(x, j)?;
            let a = a.map(|v| T::of_f64(v.to_f64()));
            self.q = if transpose {
                a.transpose() * &self.q
            } else {
                a * &self.q
            };
            if (c + 1) as usize % stride == 0 {
                self.orthonormalize();
            }
        }
        if steps % stride != 0 || steps == 0 {
            self.orthonormalize();
        }
        Ok(())
    }
}

/// Per-column accumulated log stretches of the streaming triangularization
/// (unnormalized), plus the -infinity flags.  The partial sums of the leading
/// entries are log-volumes of the images of leading coordinate blocks.
pub fn streaming_log_volumes<T: Scalar>(
    gen: &CocycleGenerator<T>,
    x: &SymbolSequence,
    n: usize,
    stride: usize,
) -> Result<(Vec<f64>, Vec<bool>)> {
    let mut st = Streamer::<T>::identity(gen.dim());
    st.push(gen, x, 0, n, stride, false)?;
    Ok((st.accum, st.dead))
}

/// Exponents counted with multiplicity via streaming triangularization,
/// sorted nonincreasing; collapsed directions are floored.
pub fn singular_exponents<T: Scalar>(
    gen: &CocycleGenerator<T>,
    x: &SymbolSequence,
    n: usize,
    stride: usize,
) -> Result<Vec<f64>> {
    assert!(n >= 10 * stride, "need n >= 10 * stride");
    let (accum, dead) = streaming_log_volumes(gen, x, n, stride)?;
    let mut out: Vec<f64> = accum
        .iter()
        .zip(&dead)
        .map(|(&a, &dd)| if dd { NEG_INF_FLOOR } else { a / n as f64 })
        .collect();
    out.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(out)
}

/// Limsup surrogate for the exponent of one direction: max of the running
/// rate over the last 10% of the steps.
pub fn directional_exponent<T: Scalar>(
    gen: &CocycleGenerator<T>,
    x: &SymbolSequence,
    v: &DVector<T>,
    n: usize,
) -> Result<f64> {
    assert!(n >= 10);
    let norm0 = v.norm().to_f64();
    if norm0 == 0.0 {
        return Err(Error::Invalid {
            what: "direction",
            why: "zero vector has no exponent".into(),
        });
    }
    let mut w = v / T::of_f64(norm0);
    let mut log_acc = 0.0f64;
    let tail_start = n - n / 10;
    let mut best = f64::NEG_INFINITY;
    for j in 0..n as i64 {
        w = gen.evaluate_at(x, j)? * w;
        let norm = w.norm().to_f64();
        if norm < UNDERFLOW_EPS {
            return Ok(NEG_INF_FLOOR);
        }
        log_acc += norm.ln();
        w /= T::of_f64(norm);
        if (j + 1) as usize >= tail_start {
            best = best.max(log_acc / (j + 1) as f64);
        }
    }
    Ok(best)
}

/// Diagnostics attached to a numerically computed frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameResiduals {
    /// Principal-angle distance between pushed blocks and the blocks at the
    /// shifted point.
    pub equivariance: f64,
    /// Distance between the frames computed at depth m and depth 2m.
    pub stability: f64,
}

/// Oseledets blocks E_1, ..., E_s and the slow space V_{s+1} at one point.
#[derive(Debug, Clone)]
pub struct OseledetsFrame<T: Scalar> {
    pub point: SymbolSequence,
    /// Orthonormal d x d_i bases, fastest block first.
    pub e_bases: Vec<DMatrix<T>>,
    /// Orthonormal basis of the slow space (d x (d - sum d_i)).
    pub v_basis: DMatrix<T>,
    pub residuals: FrameResiduals,
    /// Set when a periodic period-product is defective (Jordan blocks).
    pub defective: bool,
}

impl<T: Scalar> OseledetsFrame<T> {
    /// Total fast dimension.
    pub fn fast_dim(&self) -> usize {
        self.e_bases.iter().map(|b| b.ncols()).sum()
    }

    /// Smallest singular value of the stacked frame [E_1 ... E_s V]; the
    /// blocks are numerically independent when this is well above zero.
    pub fn block_independence(&self) -> f64 {
        let d = self.point_dim();
        let cols = self.fast_dim() + self.v_basis.ncols();
        let mut m = DMatrix::<T>::zeros(d, cols);
        let mut c = 0;
        for b in &self.e_bases {
            m.view_mut((0, c), (d, b.ncols())).copy_from(b);
            c += b.ncols();
        }
        m.view_mut((0, c), (d, self.v_basis.ncols()))
            .copy_from(&self.v_basis);
        m.svd(false, false)
            .singular_values
            .iter()
            .fold(f64::INFINITY, |acc, s| acc.min(s.to_f64()))
    }

    fn point_dim(&self) -> usize {
        if let Some(b) = self.e_bases.first() {
            b.nrows()
        } else {
            self.v_basis.nrows()
        }
    }

    /// Text dump: `E <i> dim <d_i>` / `V dim <.>` headers with matrix rows.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (i, b) in self.e_bases.iter().enumerate() {
            out.push_str(&format!("E {} dim {}\n", i + 1, b.ncols()));
            dump_matrix(&mut out, b);
        }
        out.push_str(&format!("V dim {}\n", self.v_basis.ncols()));
        dump_matrix(&mut out, &self.v_basis);
        out
    }
}

fn dump_matrix<T: Scalar>(out: &mut String, m: &DMatrix<T>) {
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .map(|j| format!("{:.17e}", m[(i, j)].to_f64()))
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
}

/// Orthonormal basis of the column space of `m`, truncated to `dim` columns.
fn range_basis<T: Scalar>(m: &DMatrix<T>, dim: usize) -> DMatrix<T> {
    let svd = m.clone().svd(true, false);
    let u = svd.u.unwrap();
    u.columns(0, dim).into_owned()
}

/// Largest principal-angle sine between span(a) and span(b) (orthonormal
/// inputs with equal column counts); for unequal counts, how far span(a)
/// sticks out of span(b).
pub fn subspace_distance<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> f64 {
    if a.ncols() == 0 {
        return 0.0;
    }
    let proj = b * (b.transpose() * a);
    spectral_norm(&(a - proj))
}

/// Orthonormalize the columns of `m`, dropping collapsed directions.
pub(crate) fn orthonormalize_columns<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    let mut cols: Vec<DVector<T>> = Vec::new();
    for c in 0..m.ncols() {
        let mut v = m.column(c).clone_owned();
        for q in &cols {
            let dot = q.dot(&v);
            v -= q * dot;
        }
        let norm = v.norm().to_f64();
        if norm > 1e-12 {
            cols.push(v / T::of_f64(norm));
        }
    }
    let d = m.nrows();
    let mut out = DMatrix::zeros(d, cols.len());
    for (i, c) in cols.iter().enumerate() {
        out.set_column(i, c);
    }
    out
}

const FRAME_STRIDE: usize = 4;

/// One-sided frame computation at a fixed depth (no diagnostics).
pub(crate) fn raw_frame<T: Scalar>(
    gen: &CocycleGenerator<T>,
    x: &SymbolSequence,
    spectrum: &LyapunovSpectrum,
    s: usize,
    depth: usize,
) -> Result<(Vec<DMatrix<T>>, DMatrix<T>)> {
    let d = gen.dim();
    let dims: Vec<usize> = spectrum.groups[..s].iter().map(|g| g.multiplicity).collect();
    let cum: Vec<usize> = dims
        .iter()
        .scan(0usize, |acc, &di| {
            *acc += di;
            Some(*acc)
        })
        .collect();
    let total_fast = *cum.last().unwrap();

    // fast filtration: push a frame forward from depth -m
    let mut fwd = Streamer::<T>::identity(d);
    fwd.push(gen, x, -(depth as i64), depth, FRAME_STRIDE, false)?;
    // slow filtration: pull the transposed cocycle back from horizon +m
    let mut bwd = Streamer::<T>::identity(d);
    bwd.push(gen, x, 0, depth, FRAME_STRIDE, true)?;

    let mut e_bases = Vec::with_capacity(s);
    for (h, &dh) in dims.iter().enumerate() {
        if h == 0 {
            e_bases.push(fwd.q.columns(0, dh).into_owned());
            continue;
        }
        // E_h = (fast space of level h) intersect (slow space past level h-1)
        let bu = fwd.q.columns(0, cum[h]).into_owned();
        let bv = bwd.q.columns(cum[h - 1], d - cum[h - 1]).into_owned();
        let m = bu.transpose() * &bv;
        let svd = m.svd(true, false);
        let u = svd.u.unwrap();
        let picked = &bu * u.columns(0, dh).into_owned();
        let basis = orthonormalize_columns(&picked);
        if basis.ncols() != dh {
            return Err(Error::ProjectionFailure { cond: f64::INFINITY });
        }
        e_bases.push(basis);
    }
    let v_basis = bwd.q.columns(total_fast, d - total_fast).into_owned();
    Ok((e_bases, v_basis))
}

/// Oseledets blocks at `x` by finite-depth pullback, with equivariance and
/// depth-doubling stability diagnostics.
pub fn fast_subspaces<T: Scalar>(
    gen: &CocycleGenerator<T>,
    x: &SymbolSequence,
    spectrum: &LyapunovSpectrum,
    s: usize,
    depth: usize,
    tol: f64,
) -> Result<OseledetsFrame<T>> {
    assert!(s >= 1 && s <= spectrum.levels());
    assert!(depth >= 1);
    let (e_bases, v_basis) = raw_frame(gen, x, spectrum, s, depth)?;
    let (e2, v2) = raw_frame(gen, x, spectrum, s, 2 * depth)?;

    let mut stability = subspace_distance(&v_basis, &v2);
    for (a, b) in e_bases.iter().zip(&e2) {
        stability = stability.max(subspace_distance(a, b));
    }
    if stability > tol {
        return Err(Error::ConvergenceFailure {
            residual: stability,
            tol,
        });
    }

    // equivariance: push each block one step and compare with the frame at
    // the shifted point (same depth)
    let (e_next, _) = raw_frame(gen, &x.shifted(1), spectrum, s, depth)?;
    let a0 = gen.evaluate(x)?;
    let mut equivariance = 0.0f64;
    for (b, bn) in e_bases.iter().zip(&e_next) {
        let image = orthonormalize_columns(&(a0 * b));
        if image.ncols() > 0 {
            equivariance = equivariance.max(subspace_distance(&image, bn));
        }
    }

    let frame = OseledetsFrame {
        point: x.clone(),
        e_bases: e2,
        v_basis: v2,
        residuals: FrameResiduals {
            equivariance,
            stability,
        },
        defective: false,
    };
    let indep = frame.block_independence();
    if indep <= 1e-8 {
        return Err(Error::ProjectionFailure { cond: 1.0 / indep });
    }
    Ok(frame)
}

/// Exact spectrum and frame on a periodic point via the period product's
/// eigenstructure.
/// Longest period still sent to the dense eigensolver.  Past this the
/// subdominant eigenvalues of the period product sink below the solver's
/// noise floor norm * eps and come back as garbage at the top exponent's
/// level, so long periods go through streamed QR loops instead.
const DENSE_PERIOD_CAP: usize = 64;

pub fn periodic_spectrum<T: Scalar>(
    gen: &CocycleGenerator<T>,
    space: &std::sync::Arc<ShiftSpace>,
    p: &PeriodicPoint,
) -> Result<(LyapunovSpectrum, OseledetsFrame<T>)> {
    let seq = SymbolSequence::from_periodic_point(space.clone(), p);
    let n = p.period();
    if n > DENSE_PERIOD_CAP {
        return long_periodic_spectrum(gen, p, seq);
    }
    // renormalized product: long periods overflow a plain product, which
    // poisons (and can hang) the eigenvalue iteration
    let sm = gen.scaled_product(&seq, n, 8)?;
    let md = sm.matrix.map(|v| v.to_f64());
    let eigs = dense_eigenvalues(&md);
    // a dense nonsymmetric eigensolver cannot resolve moduli below
    // norm * d * eps; when a finite level sinks under that floor the dense
    // answer there is noise, and a period of a few dozen steps is enough
    // for the streamed loops to resolve it instead
    if n > 8 {
        let floor = spectral_norm(&md) * gen.dim() as f64 * f64::EPSILON * 1e3;
        let unreliable = eigs.iter().any(|e| {
            let r = e.norm();
            r >= UNDERFLOW_EPS && r < floor
        });
        if unreliable {
            return long_periodic_spectrum(gen, p, seq);
        }
    }
    periodic_spectrum_of_product(gen.dim(), &sm.matrix, sm.log_scale, n, seq, eigs)
}

/// Spectrum of a long periodic point: one warmup loop aligns the streaming
/// frame with the periodic Schur basis, then the per-step log stretches over
/// repeated loops average to the eigenvalue log-moduli of the period product,
/// with a residual geometrically small in the loop count.
fn long_periodic_spectrum<T: Scalar>(
    gen: &CocycleGenerator<T>,
    p: &PeriodicPoint,
    seq: SymbolSequence,
) -> Result<(LyapunovSpectrum, OseledetsFrame<T>)> {
    let d = gen.dim();
    let n = p.period();
    let loops = (200_000 / n).clamp(4, 200);
    let mut st = Streamer::<T>::identity(d);
    st.push(gen, &seq, 0, n, FRAME_STRIDE, false)?;
    st.accum = vec![0.0; d];
    st.push(gen, &seq, n as i64, loops * n, FRAME_STRIDE, false)?;
    let total = (loops * n) as f64;
    let mut gammas: Vec<f64> = st
        .accum
        .iter()
        .zip(&st.dead)
        .map(|(&a, &dd)| if dd { NEG_INF_FLOOR } else { a / total })
        .collect();
    gammas.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let spectrum = group_spectrum(&gammas, PERIODIC_GROUP_GAP);

    let depth = n.min(20_000).max(100);
    let frame = match (spectrum.levels() >= 1)
        .then(|| fast_subspaces(gen, &seq, &spectrum, spectrum.levels(), depth, DEFAULT_FRAME_TOL))
    {
        Some(Ok(f)) => f,
        _ => OseledetsFrame {
            point: seq,
            e_bases: Vec::new(),
            v_basis: DMatrix::zeros(d, 0),
            residuals: FrameResiduals {
                equivariance: f64::INFINITY,
                stability: f64::INFINITY,
            },
            defective: true,
        },
    };
    Ok((spectrum, frame))
}

/// Eigenvalues of a dense real matrix.
///
/// Plain Francis QR iteration (nalgebra's `complex_eigenvalues`) can stall
/// indefinitely on near-nilpotent or stochastic products whose moduli cluster,
/// so the workhorse here is an eigensolver with exceptional shifts; the
/// unbounded iteration is kept only as a fallback.
pub fn dense_eigenvalues(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    let d = m.nrows();
    let fm = faer::Mat::from_fn(d, d, |i, j| m[(i, j)]);
    match fm.eigenvalues() {
        Ok(eigs) => eigs.iter().map(|e| Complex::new(e.re, e.im)).collect(),
        Err(_) => m.clone().complex_eigenvalues().iter().copied().collect(),
    }
}

fn periodic_spectrum_of_product<T: Scalar>(
    d: usize,
    m: &DMatrix<T>,
    log_scale: f64,
    period: usize,
    seq: SymbolSequence,
    eigs: Vec<Complex<f64>>,
) -> Result<(LyapunovSpectrum, OseledetsFrame<T>)> {
    let mut gammas: Vec<f64> = eigs
        .iter()
        .map(|e| {
            let r = e.norm();
            if r < UNDERFLOW_EPS {
                NEG_INF_FLOOR
            } else {
                (r.ln() + log_scale) / period as f64
            }
        })
        .collect();
    gammas.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let spectrum = group_spectrum(&gammas, PERIODIC_GROUP_GAP);

    // group the eigenvalues themselves by their exponent
    let eig_group = |e: &Complex<f64>| -> Option<usize> {
        let r = e.norm();
        if r < UNDERFLOW_EPS {
            return None;
        }
        let g = (r.ln() + log_scale) / period as f64;
        spectrum
            .groups
            .iter()
            .position(|grp| (g - grp.lambda).abs() <= PERIODIC_GROUP_GAP + 1e-12)
    };

    let md = m.map(|v| v.to_f64());
    let scale = spectral_norm(&md).max(1.0);
    let defective = detect_defective(&md, &eigs, scale);

    // annihilate every other group (and the kernel block) to isolate each
    // generalized eigenspace
    let mut e_bases: Vec<DMatrix<T>> = Vec::new();
    for h in 0..spectrum.levels() {
        let q = annihilator(&md, &eigs, |e| eig_group(e) != Some(h));
        let dh = spectrum.groups[h].multiplicity;
        let basis = range_basis(&q, dh).map(T::of_f64);
        e_bases.push(basis);
    }
    let zero_count = eigs.iter().filter(|e| eig_group(e).is_none()).count();
    let v_basis: DMatrix<T> = if zero_count > 0 {
        let q = annihilator(&md, &eigs, |e| eig_group(e).is_some());
        range_basis(&q, zero_count).map(T::of_f64)
    } else {
        DMatrix::zeros(d, 0)
    };

    // invariance residual of each block under the period product
    let mt = m.map(|v| T::of_f64(v.to_f64()));
    let mut equivariance = 0.0f64;
    for b in &e_bases {
        let image = &mt * b;
        let norm = spectral_norm(&image);
        if norm > UNDERFLOW_EPS {
            let proj = b * (b.transpose() * &image);
            equivariance = equivariance.max(spectral_norm(&(&image - proj)) / norm);
        }
    }

    let frame = OseledetsFrame {
        point: seq,
        e_bases,
        v_basis,
        residuals: FrameResiduals {
            equivariance,
            stability: 0.0,
        },
        defective,
    };
    Ok((spectrum, frame))
}

/// Product of (M - mu I) factors (conjugate pairs merged into real
/// quadratics) over the eigenvalues selected by `pick`, each factor
/// normalized to unit norm.
fn annihilator(
    m: &DMatrix<f64>,
    eigs: &[Complex<f64>],
    pick: impl Fn(&Complex<f64>) -> bool,
) -> DMatrix<f64> {
    let d = m.nrows();
    let id = DMatrix::<f64>::identity(d, d);
    let mut acc = id.clone();
    let mut consumed = vec![false; eigs.len()];
    for (i, e) in eigs.iter().enumerate() {
        if consumed[i] || !pick(e) {
            continue;
        }
        let factor = if e.im.abs() <= 1e-12 * (1.0 + e.norm()) {
            m - &id * e.re
        } else {
            // pair with an unconsumed conjugate
            if let Some(j) = eigs.iter().enumerate().position(|(j, f)| {
                !consumed[j] && j != i && (f.conj() - e).norm() <= 1e-8 * (1.0 + e.norm())
            }) {
                consumed[j] = true;
            }
            m * m - m * (2.0 * e.re) + &id * e.norm_sqr()
        };
        consumed[i] = true;
        let norm = spectral_norm(&factor);
        acc = if norm > UNDERFLOW_EPS {
            (factor / norm) * acc
        } else {
            factor * acc
        };
    }
    acc
}

/// Jordan-block detection: geometric < algebraic multiplicity for some
/// eigenvalue cluster.
fn detect_defective(m: &DMatrix<f64>, eigs: &[Complex<f64>], scale: f64) -> bool {
    let d = m.nrows();
    let tol = 1e-7 * (1.0 + scale);
    let mut used = vec![false; eigs.len()];
    for i in 0..eigs.len() {
        if used[i] {
            continue;
        }
        let mut alg = 0usize;
        for (j, e) in eigs.iter().enumerate() {
            if !used[j] && (e - eigs[i]).norm() <= tol {
                used[j] = true;
                alg += 1;
            }
        }
        if alg < 2 {
            continue;
        }
        let mc = m.map(|v| Complex::new(v, 0.0));
        let shifted = &mc - DMatrix::<Complex<f64>>::identity(d, d) * eigs[i];
        let sv = shifted.svd(false, false).singular_values;
        let geo = sv.iter().filter(|&&s| s <= tol).count();
        if geo < alg {
            return true;
        }
    }
    false
}
