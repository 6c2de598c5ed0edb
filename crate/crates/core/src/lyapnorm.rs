//! Lyapunov norms of level s.
//!
//! The level-i norm of u in E_i is the two-sided series
//! sum_n ||A_i^n(x) u|| exp(-lambda_i n - delta |n|); the tail norm on the
//! slow space is the forward series with weight exp(-lambda_tilde n).  On
//! periodic points the series is summed to machine precision (it converges
//! geometrically because delta > 0); on sampled points it is truncated at T
//! with a reported geometric tail bound.  All series terms are computed in
//! block coordinates through restricted one-step transition maps, so a single
//! engine precomputes frames along the orbit once and every norm evaluation
//! is a cheap recursion.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::cocycle::{spectral_norm, CocycleGenerator, UNDERFLOW_EPS};
use crate::error::{Error, Result};
use crate::oseledets::{raw_frame, LyapunovSpectrum, OseledetsFrame};
use crate::scalar::Scalar;
use crate::seed;
use crate::symbolic::SymbolSequence;

/// Relative term size below which a periodic series is considered summed.
const SERIES_EPS: f64 = 1e-17;

/// Parameters of the delta-Lyapunov norm of level s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovNormParams {
    pub delta: f64,
    pub s: usize,
    pub lambda_tilde: f64,
    /// Truncation T for series on sampled (non-periodic) points.
    pub truncation: usize,
    /// Pullback depth used when computing frames along the orbit.
    pub frame_depth: usize,
}

/// Threshold below level h with no exceptional exponent in
/// [lambda_tilde, lambda_h).
pub fn default_lambda_tilde(spectrum: &LyapunovSpectrum, s: usize) -> f64 {
    if s < spectrum.levels() {
        0.5 * (spectrum.groups[s - 1].lambda + spectrum.groups[s].lambda)
    } else {
        spectrum.groups[s - 1].lambda - 1.0
    }
}

impl LyapunovNormParams {
    pub fn new(
        spectrum: &LyapunovSpectrum,
        s: usize,
        delta: f64,
        truncation: usize,
    ) -> Result<Self> {
        if s == 0 || s > spectrum.levels() {
            return Err(Error::Invalid {
                what: "norm parameters",
                why: format!("level s = {s} outside 1..={}", spectrum.levels()),
            });
        }
        let p = LyapunovNormParams {
            delta,
            s,
            lambda_tilde: default_lambda_tilde(spectrum, s),
            truncation,
            frame_depth: 40,
        };
        p.validate(spectrum)?;
        Ok(p)
    }

    pub fn with_lambda_tilde(mut self, spectrum: &LyapunovSpectrum, lt: f64) -> Result<Self> {
        self.lambda_tilde = lt;
        self.validate(spectrum)?;
        Ok(self)
    }

    pub fn with_frame_depth(mut self, depth: usize) -> Self {
        self.frame_depth = depth;
        self
    }

    pub fn validate(&self, spectrum: &LyapunovSpectrum) -> Result<()> {
        if !(self.delta > 0.0) {
            return Err(Error::Invalid {
                what: "norm parameters",
                why: "delta must be positive".into(),
            });
        }
        if self.s == 0 || self.s > spectrum.levels() {
            return Err(Error::Invalid {
                what: "norm parameters",
                why: format!(
                    "level s = {} outside 1..={}",
                    self.s,
                    spectrum.levels()
                ),
            });
        }
        let lambda_s = spectrum.groups[self.s - 1].lambda;
        if !(self.lambda_tilde < lambda_s) {
            return Err(Error::Invalid {
                what: "norm parameters",
                why: format!(
                    "lambda_tilde = {} is not below lambda_s = {lambda_s}",
                    self.lambda_tilde
                ),
            });
        }
        for g in &spectrum.groups {
            if g.lambda >= self.lambda_tilde && g.lambda < lambda_s {
                return Err(Error::Invalid {
                    what: "norm parameters",
                    why: format!(
                        "exceptional exponent {} lies in [lambda_tilde, lambda_s)",
                        g.lambda
                    ),
                });
            }
        }
        if self.truncation == 0 {
            return Err(Error::Invalid {
                what: "norm parameters",
                why: "truncation must be positive".into(),
            });
        }
        Ok(())
    }
}

/// Per-level breakdown of a full Lyapunov norm evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct NormEvaluation {
    /// s + 1 entries: levels 1..s then the slow tail.
    pub per_level: Vec<f64>,
    pub total: f64,
    pub truncation_tail_bound: f64,
}

/// Cone of radius 1 - gamma at level h.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeSpec {
    pub level: usize,
    pub gamma: f64,
}

impl ConeSpec {
    pub fn new(level: usize, gamma: f64) -> Result<Self> {
        if level == 0 || !(0.0..1.0).contains(&gamma) {
            return Err(Error::Invalid {
                what: "cone",
                why: "need level >= 1 and gamma in [0, 1)".into(),
            });
        }
        Ok(ConeSpec { level, gamma })
    }
}

/// Result of a cone-membership test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeResult {
    pub member: bool,
    /// (1 - gamma) * ||u_{E_h}||_x - ||u_V||_x; nonnegative inside the cone.
    pub margin: f64,
    pub slow_norm: f64,
    pub fast_norm: f64,
}

/// Empirical norm-equivalence constant (Euclidean vs Lyapunov norm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormEquivalence {
    pub k_delta: f64,
    pub samples: usize,
    pub seed: u64,
}

struct BlockBases<T: Scalar> {
    e: Vec<DMatrix<T>>,
    v: DMatrix<T>,
}

/// Precomputed frames and restricted one-step maps along one orbit.
pub struct NormEngine<'a, T: Scalar> {
    spectrum: &'a LyapunovSpectrum,
    pub params: LyapunovNormParams,
    period: Option<usize>,
    /// Frames at phases 0..p (periodic) or positions -T..=T (sampled).
    blocks: Vec<BlockBases<T>>,
    lo: i64,
    /// restricted[i][j]: the map E_i(position j) -> E_i(position j+1) in the
    /// orthonormal block coordinates.
    restricted: Vec<Vec<DMatrix<T>>>,
    /// Same for the slow block V (forward-invariant, so forward-only use).
    restricted_v: Vec<DMatrix<T>>,
}

impl<'a, T: Scalar> NormEngine<'a, T> {
    pub fn new(
        gen: &'a CocycleGenerator<T>,
        x: &SymbolSequence,
        spectrum: &'a LyapunovSpectrum,
        params: LyapunovNormParams,
    ) -> Result<Self> {
        params.validate(spectrum)?;
        let s = params.s;
        let depth = params.frame_depth;
        let (lo, positions): (i64, Vec<i64>) = match x.period() {
            Some(p) => (0, (0..p as i64).collect()),
            None => {
                let t = params.truncation as i64;
                (-t, (-t..=t).collect())
            }
        };
        let mut blocks = Vec::with_capacity(positions.len());
        for &j in &positions {
            let (e, v) = raw_frame(gen, &x.shifted(j), spectrum, s, depth)?;
            blocks.push(BlockBases { e, v });
        }
        let period = x.period();
        let n_pos = blocks.len();
        // restricted one-step maps per block, index s standing for V
        let mut all_maps: Vec<Vec<DMatrix<T>>> = Vec::with_capacity(s + 1);
        for i in 0..=s {
            let mut maps = Vec::with_capacity(n_pos);
            for (idx, &j) in positions.iter().enumerate() {
                // last sampled position has no successor frame
                let next = if period.is_some() {
                    (idx + 1) % n_pos
                } else if idx + 1 < n_pos {
                    idx + 1
                } else {
                    maps.push(DMatrix::zeros(0, 0));
                    continue;
                };
                let a = gen.evaluate_at(x, j)?;
                let (src, dst) = if i < s {
                    (&blocks[idx].e[i], &blocks[next].e[i])
                } else {
                    (&blocks[idx].v, &blocks[next].v)
                };
                maps.push(dst.transpose() * (a * src));
            }
            all_maps.push(maps);
        }
        let restricted_v = all_maps.pop().unwrap();
        let restricted = all_maps;
        Ok(NormEngine {
            spectrum,
            params,
            period,
            blocks,
            lo,
            restricted,
            restricted_v,
        })
    }

    fn index_of(&self, j: i64) -> usize {
        match self.period {
            Some(p) => j.rem_euclid(p as i64) as usize,
            None => (j - self.lo) as usize,
        }
    }

    fn bases(&self, j: i64) -> &BlockBases<T> {
        &self.blocks[self.index_of(j)]
    }

    /// Basis of E_i at orbit position j.
    pub fn e_basis(&self, j: i64, i: usize) -> &DMatrix<T> {
        &self.bases(j).e[i - 1]
    }

    /// Basis of the slow space at orbit position j.
    pub fn v_basis(&self, j: i64) -> &DMatrix<T> {
        &self.bases(j).v
    }

    /// Forward/backward reach of series evaluated at position j.
    fn reach(&self, j: i64) -> (usize, usize) {
        match self.period {
            Some(_) => {
                let cap = ((60.0 / self.params.delta) as usize).max(1000);
                (cap, cap)
            }
            None => {
                let t = self.params.truncation as i64;
                (((t - j).max(0)) as usize, ((j - self.lo).max(0)) as usize)
            }
        }
    }

    fn solve_restricted(&self, i: usize, idx: usize, rhs: &DVector<T>) -> Result<DVector<T>> {
        let r = &self.restricted[i][idx];
        let svd = r.clone().svd(true, true);
        let smin = svd
            .singular_values
            .iter()
            .fold(f64::INFINITY, |a, s| a.min(s.to_f64()));
        if smin < 1e-13 {
            return Err(Error::SingularRestriction {
                level: i + 1,
                sigma_min: smin,
            });
        }
        svd.solve(rhs, T::of_f64(1e-300)).map_err(|_| {
            Error::SingularRestriction {
                level: i + 1,
                sigma_min: smin,
            }
        })
    }

    /// Level-i norm (1-based i <= s) of u in E_i(position j), plus the
    /// truncation tail bound (zero on periodic points).
    pub fn level_norm_at(&self, j: i64, u: &DVector<T>, i: usize) -> Result<(f64, f64)> {
        assert!(i >= 1 && i <= self.params.s);
        let lam = self.spectrum.groups[i - 1].lambda;
        let delta = self.params.delta;
        let i0 = i - 1;
        let basis = self.e_basis(j, i);
        let mut c = basis.transpose() * u;
        let periodic = self.period.is_some();
        let (fwd_reach, bwd_reach) = self.reach(j);

        let c_norm = c.norm().to_f64();
        if c_norm < UNDERFLOW_EPS {
            return Ok((c_norm, 0.0));
        }
        let log_c0 = c_norm.ln();
        c /= T::of_f64(c_norm);
        let mut total = c_norm;
        let mut log_c = log_c0; // log scale of the running coordinate vector
        let mut tail = 0.0f64;

        // forward terms n >= 1
        let mut g_max = f64::NEG_INFINITY;
        let mut last_term = 0.0f64;
        let mut cur = c.clone();
        let mut n_used = 0usize;
        for n in 1..=fwd_reach {
            let idx = self.index_of(j + n as i64 - 1);
            let r = &self.restricted[i0][idx];
            g_max = g_max.max(spectral_norm(r).max(UNDERFLOW_EPS).ln());
            cur = r * cur;
            let norm = cur.norm().to_f64();
            if norm < UNDERFLOW_EPS {
                return Err(Error::SingularRestriction {
                    level: i,
                    sigma_min: norm,
                });
            }
            log_c += norm.ln();
            cur /= T::of_f64(norm);
            let term = (log_c - lam * n as f64 - delta * n as f64).exp();
            total += term;
            last_term = term;
            n_used = n;
            if periodic && term < SERIES_EPS * total && n >= 4 {
                break;
            }
        }
        if !periodic && n_used == fwd_reach && last_term > 0.0 {
            let ratio = (g_max - lam - delta).exp();
            tail += if ratio < 1.0 {
                last_term * ratio / (1.0 - ratio)
            } else {
                f64::INFINITY
            };
        }

        // backward terms n <= -1 (restricted inverse steps)
        let mut g_min = f64::INFINITY;
        log_c = log_c0;
        last_term = 0.0;
        n_used = 0;
        for m in 1..=bwd_reach {
            let idx = self.index_of(j - m as i64);
            {
                let r = &self.restricted[i0][idx];
                let smin = r
                    .clone()
                    .svd(false, false)
                    .singular_values
                    .iter()
                    .fold(f64::INFINITY, |a, s| a.min(s.to_f64()));
                g_min = g_min.min(smin.max(UNDERFLOW_EPS).ln());
            }
            c = self.solve_restricted(i0, idx, &c)?;
            let norm = c.norm().to_f64();
            if norm < UNDERFLOW_EPS {
                return Err(Error::SingularRestriction {
                    level: i,
                    sigma_min: norm,
                });
            }
            log_c += norm.ln();
            c /= T::of_f64(norm);
            let term = (log_c + lam * m as f64 - delta * m as f64).exp();
            total += term;
            last_term = term;
            n_used = m;
            if periodic && term < SERIES_EPS * total && m >= 4 {
                break;
            }
        }
        if !periodic && n_used == bwd_reach && last_term > 0.0 {
            let ratio = (lam - delta - g_min).exp();
            tail += if ratio < 1.0 {
                last_term * ratio / (1.0 - ratio)
            } else {
                f64::INFINITY
            };
        }
        Ok((total, tail))
    }

    /// Tail norm of u in the slow space at position j: forward series with
    /// weight exp(-lambda_tilde n), run in V-block coordinates so that
    /// fast-direction leakage of the numerical basis cannot pollute it.
    pub fn tail_norm_at(&self, j: i64, u: &DVector<T>) -> Result<(f64, f64)> {
        let c0 = self.v_basis(j).transpose() * u;
        self.forward_series(&self.restricted_v, j, c0, self.params.lambda_tilde)
    }

    /// Forward series sum_{n>=0} |c_n| exp(-lt n) in one block's coordinates,
    /// where c_{n+1} = maps[pos] c_n. Returns (value, truncation tail bound).
    fn forward_series(
        &self,
        maps: &[DMatrix<T>],
        j: i64,
        c0: DVector<T>,
        lt: f64,
    ) -> Result<(f64, f64)> {
        let periodic = self.period.is_some();
        let (fwd_reach, _) = self.reach(j);
        let mut c = c0;
        let norm0 = c.norm().to_f64();
        if norm0 < UNDERFLOW_EPS {
            return Ok((norm0, 0.0));
        }
        let mut log_c = norm0.ln();
        c /= T::of_f64(norm0);
        let mut total = norm0;
        let mut terms = vec![norm0];
        let mut last_term = norm0;
        let mut n_used = 0usize;
        for n in 1..=fwd_reach {
            c = &maps[self.index_of(j + n as i64 - 1)] * c;
            let norm = c.norm().to_f64();
            if norm < UNDERFLOW_EPS {
                // annihilated: the rest of the series is exactly zero
                return Ok((total, 0.0));
            }
            log_c += norm.ln();
            c /= T::of_f64(norm);
            let term = (log_c - lt * n as f64).exp();
            total += term;
            terms.push(term);
            last_term = term;
            n_used = n;
            if periodic && term < SERIES_EPS * total && n >= 4 {
                break;
            }
            if n >= 30 && terms[n - 20..].windows(2).all(|t| t[1] >= t[0]) {
                return Err(Error::Hypothesis(format!(
                    "tail series diverges: lambda_tilde = {lt} sits below a growth rate in the slow space"
                )));
            }
        }
        let tail = if !periodic && n_used == fwd_reach && last_term > 0.0 {
            // empirical geometric envelope from the last observed ratios
            let window = terms.len().saturating_sub(8);
            let ratio = terms[window..]
                .windows(2)
                .map(|t| t[1] / t[0])
                .fold(0.0f64, f64::max);
            if ratio < 1.0 && ratio > 0.0 {
                last_term * ratio / (1.0 - ratio)
            } else if ratio == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            0.0
        };
        Ok((total, tail))
    }

    /// Oblique decomposition of u against the blocks at position j:
    /// components in E_1, ..., E_s and V.
    pub fn decompose(&self, j: i64, u: &DVector<T>) -> Result<Vec<DVector<T>>> {
        let b = self.bases(j);
        let d = u.len();
        let vdim = b.v.ncols();
        let total: usize = b.e.iter().map(|m| m.ncols()).sum::<usize>() + vdim;
        if total != d {
            return Err(Error::Invalid {
                what: "frame",
                why: format!("blocks span {total} of {d} dimensions"),
            });
        }
        let mut f = DMatrix::<T>::zeros(d, d);
        let mut col = 0;
        for e in &b.e {
            f.view_mut((0, col), (d, e.ncols())).copy_from(e);
            col += e.ncols();
        }
        f.view_mut((0, col), (d, vdim)).copy_from(&b.v);
        let svd = f.clone().svd(true, true);
        let smax = svd.singular_values.iter().fold(0.0f64, |a, s| a.max(s.to_f64()));
        let smin = svd
            .singular_values
            .iter()
            .fold(f64::INFINITY, |a, s| a.min(s.to_f64()));
        if smin < 1e-12 * smax.max(1.0) {
            return Err(Error::ProjectionFailure { cond: smax / smin });
        }
        let coeffs = svd.solve(u, T::of_f64(1e-300)).map_err(|_| Error::ProjectionFailure {
            cond: smax / smin,
        })?;
        let mut parts = Vec::with_capacity(b.e.len() + 1);
        let mut row = 0;
        for e in &b.e {
            let c = coeffs.rows(row, e.ncols()).into_owned();
            parts.push(e * c);
            row += e.ncols();
        }
        let cv = coeffs.rows(row, vdim).into_owned();
        parts.push(&b.v * cv);
        Ok(parts)
    }

    /// Full norm: sum of level norms of the oblique components.
    pub fn full_norm_at(&self, j: i64, u: &DVector<T>) -> Result<NormEvaluation> {
        let parts = self.decompose(j, u)?;
        let s = self.params.s;
        let mut per_level = Vec::with_capacity(s + 1);
        let mut tail_bound = 0.0;
        for i in 1..=s {
            let (v, t) = self.level_norm_at(j, &parts[i - 1], i)?;
            per_level.push(v);
            tail_bound += t;
        }
        let (v, t) = self.tail_norm_at(j, &parts[s])?;
        per_level.push(v);
        tail_bound += t;
        Ok(NormEvaluation {
            total: per_level.iter().sum(),
            per_level,
            truncation_tail_bound: tail_bound,
        })
    }

    /// Level-h cone test at position j: the slow part (everything past E_h)
    /// against the E_h part, both in level-h norms.
    pub fn cone_membership_at(
        &self,
        j: i64,
        u: &DVector<T>,
        cone: ConeSpec,
    ) -> Result<ConeResult> {
        let h = cone.level;
        assert!(h >= 1 && h <= self.params.s);
        let parts = self.decompose(j, u)?;
        let (fast_norm, _) = self.level_norm_at(j, &parts[h - 1], h)?;
        let lt_h = if h == self.params.s {
            self.params.lambda_tilde
        } else {
            0.5 * (self.spectrum.groups[h - 1].lambda + self.spectrum.groups[h].lambda)
        };
        // level-h slow norm: forward series of every component past E_h with
        // the level-h weight, each in its own block coordinates
        let mut slow_norm = 0.0;
        for i in (h + 1)..=self.params.s {
            let c0 = self.e_basis(j, i).transpose() * &parts[i - 1];
            slow_norm += self.forward_series(&self.restricted[i - 1], j, c0, lt_h)?.0;
        }
        let cv = self.v_basis(j).transpose() * &parts[self.params.s];
        slow_norm += self.forward_series(&self.restricted_v, j, cv, lt_h)?.0;
        let margin = (1.0 - cone.gamma) * fast_norm - slow_norm;
        Ok(ConeResult {
            member: margin >= -1e-12 * (1.0 + fast_norm),
            margin,
            slow_norm,
            fast_norm,
        })
    }
}

/// Level-i norm of u in E_i at the frame's point.
pub fn level_norm<T: Scalar>(
    gen: &CocycleGenerator<T>,
    u: &DVector<T>,
    frame: &OseledetsFrame<T>,
    spectrum: &LyapunovSpectrum,
    params: LyapunovNormParams,
    i: usize,
) -> Result<f64> {
    let eng = NormEngine::new(gen, &frame.point, spectrum, params)?;
    eng.level_norm_at(0, u, i).map(|(v, _)| v)
}

/// Tail norm of u in the slow space at the frame's point.
pub fn tail_norm<T: Scalar>(
    gen: &CocycleGenerator<T>,
    u: &DVector<T>,
    frame: &OseledetsFrame<T>,
    spectrum: &LyapunovSpectrum,
    params: LyapunovNormParams,
) -> Result<f64> {
    let eng = NormEngine::new(gen, &frame.point, spectrum, params)?;
    eng.tail_norm_at(0, u).map(|(v, _)| v)
}

/// Full delta-Lyapunov norm of an arbitrary vector.
pub fn full_norm<T: Scalar>(
    gen: &CocycleGenerator<T>,
    u: &DVector<T>,
    frame: &OseledetsFrame<T>,
    spectrum: &LyapunovSpectrum,
    params: LyapunovNormParams,
) -> Result<NormEvaluation> {
    let eng = NormEngine::new(gen, &frame.point, spectrum, params)?;
    eng.full_norm_at(0, u)
}

/// Cone membership of u at the frame's point.
pub fn cone_membership<T: Scalar>(
    gen: &CocycleGenerator<T>,
    u: &DVector<T>,
    frame: &OseledetsFrame<T>,
    spectrum: &LyapunovSpectrum,
    params: LyapunovNormParams,
    cone: ConeSpec,
) -> Result<ConeResult> {
    let eng = NormEngine::new(gen, &frame.point, spectrum, params)?;
    eng.cone_membership_at(0, u, cone)
}

fn random_unit<T: Scalar, R: Rng>(rng: &mut R, d: usize) -> DVector<T> {
    loop {
        let v = DVector::from_fn(d, |_, _| T::of_f64(rng.gen_range(-1.0..1.0)));
        let n = v.norm().to_f64();
        if n > 1e-3 {
            return v / T::of_f64(n);
        }
    }
}

/// Empirical norm-equivalence constant: max Lyapunov norm over sampled
/// Euclidean unit vectors (a lower estimate of the true K_delta).
pub fn k_delta<T: Scalar>(
    gen: &CocycleGenerator<T>,
    frame: &OseledetsFrame<T>,
    spectrum: &LyapunovSpectrum,
    params: LyapunovNormParams,
    samples: usize,
    seed: u64,
) -> Result<NormEquivalence> {
    let eng = NormEngine::new(gen, &frame.point, spectrum, params)?;
    let d = gen.dim();
    let mut best = 1.0f64;
    let mut rng = seed::rng(seed, seed::tag::NORM_SAMPLING, 0);
    for _ in 0..samples {
        let u = random_unit::<T, _>(&mut rng, d);
        let eval = eng.full_norm_at(0, &u)?;
        best = best.max(eval.total);
    }
    Ok(NormEquivalence {
        k_delta: best,
        samples,
        seed,
    })
}

/// Safety factor applied when the sampled K_delta is used as an upper bound.
pub const K_DELTA_SAFETY: f64 = 1.5;

/// Bracket for the operator Lyapunov norm of B from the point of frame_x to
/// the point of frame_y: sampled lower bound and K_delta(y)*||B|| upper bound.
#[allow(clippy::too_many_arguments)]
pub fn operator_lyap_norm<T: Scalar>(
    gen: &CocycleGenerator<T>,
    b: &DMatrix<T>,
    frame_x: &OseledetsFrame<T>,
    frame_y: &OseledetsFrame<T>,
    spectrum: &LyapunovSpectrum,
    params: LyapunovNormParams,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let eng_x = NormEngine::new(gen, &frame_x.point, spectrum, params)?;
    let eng_y = NormEngine::new(gen, &frame_y.point, spectrum, params)?;
    let d = gen.dim();
    let bnorm = spectral_norm(b);
    if bnorm == 0.0 {
        return Ok((0.0, 0.0));
    }
    let mut lower = 0.0f64;
    let mut rng = seed::rng(seed, seed::tag::NORM_SAMPLING, 1);
    for _ in 0..samples {
        let u = random_unit::<T, _>(&mut rng, d);
        let nx = eng_x.full_norm_at(0, &u)?.total;
        let ny = eng_y.full_norm_at(0, &(b * &u))?.total;
        if nx > 0.0 {
            lower = lower.max(ny / nx);
        }
    }
    let kd = k_delta(gen, frame_y, spectrum, params, samples, seed)?;
    let upper = kd.k_delta * K_DELTA_SAFETY * bnorm;
    Ok((lower, upper))
}
