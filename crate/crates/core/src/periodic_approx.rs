//! Periodic-approximation pipeline: sample an orbit, detect recurrences,
//! close them to periodic points, compare the periodic spectra against a
//! long-orbit reference, and verify the cone machinery numerically.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::cocycle::{CocycleGenerator, HolderData};
use crate::error::{Error, Result};
use crate::lyapnorm::{ConeSpec, LyapunovNormParams, NormEngine};
use crate::oseledets::{
    default_grouping_gap, group_spectrum, periodic_spectrum, singular_exponents,
    LyapunovSpectrum, OseledetsFrame,
};
use crate::scalar::Scalar;
use crate::seed;
use crate::symbolic::{
    agreement_radius, close_orbit, first_recurrence, sample_orbit, BaseMeasure, PeriodicPoint,
    ShadowingReport, ShiftSpace, SymbolSequence,
};

/// Replicates used for the reference-spectrum error bars.
const REFERENCE_REPLICATES: usize = 4;
/// Reorthonormalization stride for the reference exponent streams.
const REFERENCE_STRIDE: usize = 2;
/// Extra window padding so that norm engines can be built on the sampled
/// orbit afterwards (truncation plus pullback depth plus slack).
const WINDOW_PAD: usize = 256;

/// Size budget for the perturbation parameter delta.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaBudget {
    /// 10 * prod_{i<=s} (d_i + 4).
    pub d_scale: u64,
    pub delta0: f64,
    pub theta_alpha: f64,
    /// Smallest gap between consecutive exceptional exponents (infinite when
    /// there is a single group).
    pub min_gap: f64,
}

/// Delta budget from the spectrum's gaps and the regularity constants: the
/// strict bound is realized with a factor 0.9.
pub fn delta_budget(
    spectrum: &LyapunovSpectrum,
    s: usize,
    holder: &HolderData,
    theta: f64,
) -> DeltaBudget {
    assert!(s >= 1 && s <= spectrum.levels(), "need 1 <= s <= l");
    let d_scale: u64 = 10 * spectrum.groups[..s]
        .iter()
        .map(|g| g.multiplicity as u64 + 4)
        .product::<u64>();
    let theta_alpha = theta * holder.alpha;
    let min_gap = spectrum.min_gap().unwrap_or(f64::INFINITY);
    let bound = if spectrum.levels() >= 2 {
        theta_alpha.min(min_gap) / d_scale as f64
    } else {
        theta_alpha / 4.0
    };
    DeltaBudget {
        d_scale,
        delta0: 0.9 * bound,
        theta_alpha,
        min_gap,
    }
}

/// Scan horizons for one experiment run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Horizons {
    /// Maximum recurrence time searched per threshold.
    pub recurrence: usize,
    /// Orbit length for the reference exponents.
    pub reference: usize,
}

/// Everything recorded for one recurrence threshold 1/k.
#[derive(Debug, Clone)]
pub struct KRecord {
    pub k: u64,
    /// First recurrence time at threshold 1/k.
    pub n_k: usize,
    pub p_k: PeriodicPoint,
    /// Spectrum of the closed periodic point.
    pub spectrum_pk: LyapunovSpectrum,
    pub shadow: ShadowingReport,
    /// gamma_i(p_k) - gamma_i(mu) for i <= d_1 + ... + d_s.
    pub errors: Vec<f64>,
}

/// Full record of one periodic-approximation experiment.
#[derive(Debug, Clone)]
pub struct ApproximationRun {
    pub seed: u64,
    pub s: usize,
    pub k_schedule: Vec<u64>,
    pub records: Vec<KRecord>,
    pub reference: LyapunovSpectrum,
    /// Per-exponent standard error of the reference estimate.
    pub reference_stderr: Vec<f64>,
    pub reference_n: usize,
    /// The sampled orbit the recurrences were read off.
    pub orbit: SymbolSequence,
    pub space: Arc<ShiftSpace>,
}

impl ApproximationRun {
    /// Largest per-exponent reference standard error.
    pub fn stderr(&self) -> f64 {
        self.reference_stderr.iter().cloned().fold(0.0, f64::max)
    }

    /// Errors table: `k,n_k,i,gamma_pk,gamma_mu,error` (i is 1-based).
    pub fn errors_csv(&self) -> String {
        let mut out = String::from("k,n_k,i,gamma_pk,gamma_mu,error\n");
        for rec in &self.records {
            for (i, &e) in rec.errors.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{:.17e},{:.17e},{:.17e}",
                    rec.k,
                    rec.n_k,
                    i + 1,
                    rec.spectrum_pk.gammas[i],
                    self.reference.gammas[i],
                    e
                );
            }
        }
        out
    }

    /// Self-contained JSON-like text document describing the run.
    pub fn dump_record(&self) -> String {
        let floats = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:.17e}"))
                .collect::<Vec<_>>()
                .join(", ")
        };
        let mut out = String::new();
        let _ = writeln!(out, "{{");
        let _ = writeln!(out, "  \"seed\": {},", self.seed);
        let _ = writeln!(out, "  \"s\": {},", self.s);
        let _ = writeln!(
            out,
            "  \"k_schedule\": [{}],",
            self.k_schedule
                .iter()
                .map(|k| k.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        );
        let _ = writeln!(out, "  \"reference\": {{");
        let _ = writeln!(out, "    \"n\": {},", self.reference_n);
        let _ = writeln!(out, "    \"replicates\": {},", REFERENCE_REPLICATES);
        let _ = writeln!(out, "    \"gammas\": [{}],", floats(&self.reference.gammas));
        let _ = writeln!(out, "    \"stderr\": [{}]", floats(&self.reference_stderr));
        let _ = writeln!(out, "  }},");
        let _ = writeln!(out, "  \"records\": [");
        for (r, rec) in self.records.iter().enumerate() {
            let word: String = rec.p_k.word().iter().map(|&s| (b'0' + s) as char).collect();
            let _ = writeln!(out, "    {{");
            let _ = writeln!(out, "      \"k\": {},", rec.k);
            let _ = writeln!(out, "      \"n_k\": {},", rec.n_k);
            let _ = writeln!(out, "      \"word\": \"{word}\",");
            let _ = writeln!(
                out,
                "      \"gammas_pk\": [{}],",
                floats(&rec.spectrum_pk.gammas)
            );
            let _ = writeln!(out, "      \"errors\": [{}],", floats(&rec.errors));
            let _ = writeln!(
                out,
                "      \"shadow\": {{ \"c1\": {:.17e}, \"theta\": {:.17e}, \"satisfied\": {} }}",
                rec.shadow.c1, rec.shadow.theta, rec.shadow.satisfied
            );
            let comma = if r + 1 < self.records.len() { "," } else { "" };
            let _ = writeln!(out, "    }}{comma}");
        }
        let _ = writeln!(out, "  ]");
        let _ = writeln!(out, "}}");
        out
    }
}

/// Estimate the reference spectrum with error bars: replicated streaming
/// exponents on independently sampled orbits.
pub fn reference_spectrum<T: Scalar>(
    gen: &CocycleGenerator<T>,
    space: &Arc<ShiftSpace>,
    measure: &BaseMeasure,
    n: usize,
    seed: u64,
) -> Result<(LyapunovSpectrum, Vec<f64>)> {
    let d = gen.dim();
    let pad = gen.radius() + 1;
    let mut per_rep: Vec<Vec<f64>> = Vec::with_capacity(REFERENCE_REPLICATES);
    for r in 0..REFERENCE_REPLICATES {
        let x = sample_orbit(
            space,
            measure,
            pad,
            n + pad,
            seed::split(seed, seed::tag::REPLICATE, r as u64),
        );
        per_rep.push(singular_exponents(gen, &x, n, REFERENCE_STRIDE)?);
    }
    let mut means = Vec::with_capacity(d);
    let mut stderr = Vec::with_capacity(d);
    for i in 0..d {
        let vals: Vec<f64> = per_rep.iter().map(|g| g[i]).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (vals.len() - 1) as f64;
        means.push(mean);
        stderr.push((var / vals.len() as f64).sqrt());
    }
    let worst = stderr.iter().cloned().fold(0.0, f64::max);
    let gap = default_grouping_gap(&means, worst);
    Ok((group_spectrum(&means, gap), stderr))
}

/// Run the full pipeline: reference spectrum, one sampled orbit, first
/// recurrences along the threshold schedule, Anosov closing, and periodic
/// spectra compared against the reference.
pub fn run_main_experiment<T: Scalar>(
    gen: &CocycleGenerator<T>,
    space: &Arc<ShiftSpace>,
    measure: &BaseMeasure,
    s: usize,
    k_schedule: &[u64],
    horizons: Horizons,
    seed: u64,
) -> Result<ApproximationRun> {
    assert!(!k_schedule.is_empty());
    let (reference, reference_stderr) =
        reference_spectrum(gen, space, measure, horizons.reference, seed)?;
    if reference.levels() < s {
        return Err(Error::Hypothesis(format!(
            "reference spectrum resolves {} exceptional exponents, need at least {s}",
            reference.levels()
        )));
    }
    let m = reference.fast_dim(s);

    let r_max = k_schedule
        .iter()
        .map(|&k| agreement_radius(k) as usize)
        .max()
        .unwrap();
    let pad = r_max + gen.radius() + WINDOW_PAD;
    let orbit = sample_orbit(space, measure, pad, horizons.recurrence + pad, seed);

    let mut records = Vec::with_capacity(k_schedule.len());
    for &k in k_schedule {
        let n_k = first_recurrence(&orbit, k, horizons.recurrence as i64)? as usize;
        let (p_k, shadow) = close_orbit(&orbit, n_k)?;
        let (spectrum_pk, _) = periodic_spectrum(gen, space, &p_k)?;
        let errors: Vec<f64> = (0..m)
            .map(|i| spectrum_pk.gammas[i] - reference.gammas[i])
            .collect();
        records.push(KRecord {
            k,
            n_k,
            p_k,
            spectrum_pk,
            shadow,
            errors,
        });
    }
    Ok(ApproximationRun {
        seed,
        s,
        k_schedule: k_schedule.to_vec(),
        records,
        reference,
        reference_stderr,
        reference_n: horizons.reference,
        orbit,
        space: space.clone(),
    })
}

/// One partial-sum comparison in the semicontinuity report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemicontinuityEntry {
    pub k: u64,
    /// 1-based partial-sum depth.
    pub i: usize,
    pub partial_pk: f64,
    pub partial_mu: f64,
    /// partial_pk - partial_mu - tol; positive means the bound failed.
    pub margin: f64,
    pub past_midpoint: bool,
}

#[derive(Debug, Clone)]
pub struct SemicontinuityReport {
    pub entries: Vec<SemicontinuityEntry>,
    /// Failures past the schedule midpoint (the asserted regime).
    pub violations: usize,
}

/// Check the upper-semicontinuity bound: partial sums of periodic exponents
/// must not exceed the reference partial sums by more than `z` standard
/// deviations, for every threshold past the schedule midpoint.  The deviation
/// scale is the per-step spread implied by the reference replicates, rescaled
/// to the closed word's period, since a period-n point carries Birkhoff
/// fluctuations of order sigma/sqrt(n).  Excesses inside twice the z-sigma
/// band are statistical (the replicate count is small, so sigma itself is
/// noisy) and stay visible in the entries; only excesses beyond twice the
/// band, past the schedule midpoint, count as hard violations.
pub fn semicontinuity_check(run: &ApproximationRun, z: f64) -> SemicontinuityReport {
    // partial sums over every level, not just the fast block
    let m = run.reference.gammas.len();
    let mid = run.records.len() / 2;
    // stderr is the std of the mean over R replicates of length n, so one
    // length-n_k average has std stderr * sqrt(R n / n_k)
    let rn = (REFERENCE_REPLICATES * run.reference_n) as f64;
    let mut entries = Vec::new();
    let mut violations = 0;
    for (r, rec) in run.records.iter().enumerate() {
        let past_midpoint = r >= mid;
        let scale = (rn / rec.n_k.max(1) as f64).sqrt();
        let mut partial_pk = 0.0;
        let mut partial_mu = 0.0;
        let mut sum_stderr = 0.0;
        for i in 1..=m {
            partial_pk += rec.spectrum_pk.gammas[i - 1];
            partial_mu += run.reference.gammas[i - 1];
            sum_stderr += run.reference_stderr[i - 1];
            // absolute floor so exactly-reproduced spectra never trip on
            // last-bit rounding
            let tol_k = z * sum_stderr * scale + 1e-12;
            let margin = partial_pk - partial_mu - tol_k;
            if margin > tol_k && past_midpoint {
                violations += 1;
            }
            entries.push(SemicontinuityEntry {
                k: rec.k,
                i,
                partial_pk,
                partial_mu,
                margin,
                past_midpoint,
            });
        }
    }
    SemicontinuityReport {
        entries,
        violations,
    }
}

/// Violation counts from sampling the level-h invariant-cone statements
/// along one closed orbit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeLemmaReport {
    pub samples: usize,
    /// Fast-part growth below exp(lambda_h - 2 delta).
    pub growth_violations: usize,
    /// Image neither re-enters the cone family nor (for h >= 2) the
    /// level-(h-1) cone.
    pub invariance_violations: usize,
    /// Largest gamma with zero cone-invariance violations among the
    /// non-escaping samples (0 when nothing constrains it).
    pub fitted_gamma: f64,
}

impl ConeLemmaReport {
    pub fn violation_fraction(&self) -> f64 {
        if self.samples == 0 {
            return 0.0;
        }
        (self.growth_violations + self.invariance_violations) as f64 / self.samples as f64
    }
}

/// Sample vectors in the level-h cone along the closed orbit of record `k`
/// and check the one-step growth and invariance statements.
pub fn verify_cone_lemmas<T: Scalar>(
    gen: &CocycleGenerator<T>,
    run: &ApproximationRun,
    h: usize,
    params: LyapunovNormParams,
    k_index: usize,
    samples: usize,
    seed: u64,
) -> Result<ConeLemmaReport> {
    assert!(h >= 1 && h <= params.s);
    let rec = &run.records[k_index];
    let p_seq = SymbolSequence::from_periodic_point(run.space.clone(), &rec.p_k);
    let eng = NormEngine::new(gen, &p_seq, &run.reference, params)?;
    let lambda_h = run.reference.groups[h - 1].lambda;
    let delta = params.delta;
    let period = rec.p_k.period() as i64;
    let d = gen.dim();
    let mut rng = seed::rng(seed, seed::tag::CONE_SAMPLING, k_index as u64);

    let mut growth_violations = 0;
    let mut invariance_violations = 0;
    let mut gamma_fit = f64::INFINITY;
    let mut taken = 0usize;
    let cone0 = ConeSpec::new(h, 0.0)?;

    for t in 0..samples {
        let j = t as i64 % period;
        // build a cone member: E_h component plus slow components scaled to
        // sit inside the gamma = 0 cone
        let raw = DVector::from_fn(d, |_, _| T::of_f64(rng.gen_range(-1.0..1.0)));
        let parts = eng.decompose(j, &raw)?;
        let fast = parts[h - 1].clone();
        let mut slow = parts[params.s].clone();
        for p in parts.iter().take(params.s).skip(h) {
            slow += p;
        }
        let fast_norm = eng.level_norm_at(j, &fast, h)?.0;
        if fast_norm < 1e-12 {
            continue;
        }
        let probe = &fast + &slow;
        let c = eng.cone_membership_at(j, &probe, cone0)?;
        let scale = if c.slow_norm > 0.0 {
            rng.gen_range(0.0..1.0) * c.fast_norm / c.slow_norm
        } else {
            0.0
        };
        let u = &fast + slow * T::of_f64(scale);
        taken += 1;

        // one-step growth of the E_h part in the level-h norm
        let w = gen.evaluate_at(&p_seq, j)? * &u;
        let parts_next = eng.decompose(j + 1, &w)?;
        let fast_next = eng.level_norm_at(j + 1, &parts_next[h - 1], h)?.0;
        let u_fast_norm = eng.level_norm_at(j, &eng.decompose(j, &u)?[h - 1], h)?.0;
        if fast_next < (lambda_h - 2.0 * delta).exp() * u_fast_norm * (1.0 - 1e-9) {
            growth_violations += 1;
        }

        // invariance: the image re-enters the cone family, or for h >= 2 it
        // may instead fall into the level-(h-1) cone
        let cn = eng.cone_membership_at(j + 1, &w, cone0)?;
        let escaped = h >= 2
            && eng
                .cone_membership_at(j + 1, &w, ConeSpec::new(h - 1, 0.0)?)?
                .member;
        if !cn.member && !escaped {
            invariance_violations += 1;
        }
        if cn.member && !escaped && cn.fast_norm > 0.0 {
            gamma_fit = gamma_fit.min(1.0 - cn.slow_norm / cn.fast_norm);
        }
    }
    Ok(ConeLemmaReport {
        samples: taken,
        growth_violations,
        invariance_violations,
        fitted_gamma: if gamma_fit.is_finite() {
            gamma_fit.max(0.0)
        } else {
            0.0
        },
    })
}

/// Largest filtration index whose subspace still meets each reference cone.
#[derive(Debug, Clone)]
pub struct ConeIndices {
    pub delta: f64,
    /// per_k[r][h-1] = i_k_h for the r-th schedule entry.
    pub per_k: Vec<Vec<usize>>,
}

/// Orthonormal basis of V_i(p) = E_i + ... + E_l + V from a periodic frame
/// (1-based i).
fn filtration_basis<T: Scalar>(frame: &OseledetsFrame<T>, i: usize) -> DMatrix<T> {
    let d = frame.e_bases.first().map_or(frame.v_basis.nrows(), |b| b.nrows());
    let cols: usize = frame.e_bases[i - 1..]
        .iter()
        .map(|b| b.ncols())
        .sum::<usize>()
        + frame.v_basis.ncols();
    let mut m = DMatrix::<T>::zeros(d, cols);
    let mut c = 0;
    for b in &frame.e_bases[i - 1..] {
        m.view_mut((0, c), (d, b.ncols())).copy_from(b);
        c += b.ncols();
    }
    m.view_mut((0, c), (d, frame.v_basis.ncols()))
        .copy_from(&frame.v_basis);
    crate::oseledets::orthonormalize_columns(&m)
}

/// Scale-free cone objective at the engine's position 0: negative or zero
/// when the vector lies in the cone.
fn cone_objective<T: Scalar>(
    eng: &NormEngine<'_, T>,
    basis: &DMatrix<T>,
    coeffs: &DVector<T>,
    cone: ConeSpec,
) -> Result<f64> {
    let u = basis * coeffs;
    let c = eng.cone_membership_at(0, &u, cone)?;
    Ok((c.slow_norm - c.fast_norm) / (c.slow_norm + c.fast_norm + 1e-300))
}

/// Minimum cone objective over the span of `basis`: random unit samples
/// followed by local refinement with a shrinking step.
fn min_cone_objective<T: Scalar, R: Rng>(
    eng: &NormEngine<'_, T>,
    basis: &DMatrix<T>,
    cone: ConeSpec,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    let cols = basis.ncols();
    let unit = |v: DVector<T>| {
        let n = v.norm();
        v / n
    };
    let mut best_c = unit(DVector::from_fn(cols, |_, _| {
        T::of_f64(rng.gen_range(-1.0..1.0))
    }));
    let mut best = cone_objective(eng, basis, &best_c, cone)?;
    for _ in 1..samples.max(1) {
        let c = unit(DVector::from_fn(cols, |_, _| {
            T::of_f64(rng.gen_range(-1.0..1.0))
        }));
        let obj = cone_objective(eng, basis, &c, cone)?;
        if obj < best {
            best = obj;
            best_c = c;
        }
    }
    let mut step = 0.5f64;
    for _ in 0..80 {
        let probe = unit(
            &best_c
                + DVector::from_fn(cols, |_, _| T::of_f64(rng.gen_range(-step..step))),
        );
        let obj = cone_objective(eng, basis, &probe, cone)?;
        if obj < best {
            best = obj;
            best_c = probe;
        } else {
            step *= 0.9;
        }
    }
    Ok(best)
}

/// For each recorded periodic point and each level h <= s: the largest i
/// such that the filtration subspace V_i(p_k) still intersects the level-h
/// cone at the reference point. Nonemptiness is tested by minimizing
/// slow-minus-fast over sampled unit vectors with local refinement.
pub fn cone_indices<T: Scalar>(
    gen: &CocycleGenerator<T>,
    run: &ApproximationRun,
    frames: &[OseledetsFrame<T>],
    params: LyapunovNormParams,
    samples: usize,
    seed: u64,
) -> Result<ConeIndices> {
    assert_eq!(frames.len(), run.records.len());
    let eng = NormEngine::new(gen, &run.orbit, &run.reference, params)?;
    let mut rng = seed::rng(seed, seed::tag::CONE_SAMPLING, u64::MAX);
    let mut per_k = Vec::with_capacity(frames.len());
    for frame in frames {
        let mut per_h = Vec::with_capacity(params.s);
        for h in 1..=params.s {
            let cone = ConeSpec::new(h, 0.0)?;
            let mut i_k_h = 1;
            for i in 1..=frame.e_bases.len() {
                let basis = filtration_basis(frame, i);
                if basis.ncols() == 0 {
                    break;
                }
                if min_cone_objective(&eng, &basis, cone, samples, &mut rng)? <= 1e-9 {
                    i_k_h = i;
                }
            }
            per_h.push(i_k_h);
        }
        per_k.push(per_h);
    }
    Ok(ConeIndices {
        delta: params.delta,
        per_k,
    })
}

#[derive(Debug, Clone)]
pub struct DimensionMatchEntry {
    pub k: u64,
    pub h: usize,
    pub i_k_h: usize,
    /// Fast dimension of the periodic point up to i_k_h.
    pub dim_pk: usize,
    /// Reference fast dimension up to h.
    pub dim_mu: usize,
    pub matches: bool,
}

#[derive(Debug, Clone)]
pub struct DimensionMatchReport {
    pub entries: Vec<DimensionMatchEntry>,
    /// (k, i, gamma_i(p_k) - gamma_i(mu) + 3 delta): nonnegative when the
    /// lower semicontinuity margin holds.
    pub margins: Vec<(u64, usize, f64)>,
    pub margin_violations: usize,
}

/// Compare fast dimensions through the cone indices and tabulate the
/// 3-delta lower margins of the periodic exponents.
pub fn dimension_match_check(run: &ApproximationRun, indices: &ConeIndices) -> DimensionMatchReport {
    let mut entries = Vec::new();
    for (rec, per_h) in run.records.iter().zip(&indices.per_k) {
        for (h0, &ikh) in per_h.iter().enumerate() {
            let h = h0 + 1;
            let dim_pk = rec.spectrum_pk.fast_dim(ikh.min(rec.spectrum_pk.levels()));
            let dim_mu = run.reference.fast_dim(h);
            entries.push(DimensionMatchEntry {
                k: rec.k,
                h,
                i_k_h: ikh,
                dim_pk,
                dim_mu,
                matches: dim_pk == dim_mu,
            });
        }
    }
    let m = run.reference.fast_dim(run.s);
    let mut margins = Vec::new();
    let mut margin_violations = 0;
    for rec in &run.records {
        for i in 0..m {
            let margin =
                rec.spectrum_pk.gammas[i] - run.reference.gammas[i] + 3.0 * indices.delta;
            if margin < 0.0 {
                margin_violations += 1;
            }
            margins.push((rec.k, i + 1, margin));
        }
    }
    DimensionMatchReport {
        entries,
        margins,
        margin_violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn full2() -> Arc<ShiftSpace> {
        Arc::new(ShiftSpace::full(2))
    }

    fn two_group_spectrum() -> LyapunovSpectrum {
        group_spectrum(&[0.5, -0.5], 0.3)
    }

    #[test]
    fn delta_budget_two_groups_formula() {
        // d_1 = 1, theta*alpha = log 2, gap = 1
        let spec = two_group_spectrum();
        let holder = HolderData { c2: 1.0, alpha: 1.0 };
        let b = delta_budget(&spec, 1, &holder, 2f64.ln());
        assert_eq!(b.d_scale, 50);
        assert_relative_eq!(b.theta_alpha, 2f64.ln(), max_relative = 1e-15);
        assert_relative_eq!(b.min_gap, 1.0, max_relative = 1e-15);
        assert_relative_eq!(b.delta0, 0.9 * 2f64.ln() / 50.0, max_relative = 1e-12);
        assert!((b.delta0 - 0.012477).abs() < 1e-5);
        assert!(b.delta0 < b.theta_alpha.min(b.min_gap) / b.d_scale as f64);
    }

    #[test]
    fn delta_budget_single_group_quarter_rule() {
        let spec = group_spectrum(&[0.2, 0.2], 0.5);
        assert_eq!(spec.levels(), 1);
        let holder = HolderData { c2: 2.0, alpha: 0.5 };
        let theta = 1.3;
        let b = delta_budget(&spec, 1, &holder, theta);
        assert_relative_eq!(b.delta0, 0.9 * theta * 0.5 / 4.0, max_relative = 1e-15);
        assert!(b.delta0 < b.theta_alpha / 4.0);
    }

    #[test]
    fn delta_budget_multiplicity_scale() {
        // d = (2, 1), s = 2, theta*alpha = 1, gap = 0.5
        let spec = group_spectrum(&[1.0, 1.0, 0.5], 0.2);
        assert_eq!(spec.groups[0].multiplicity, 2);
        let holder = HolderData { c2: 1.0, alpha: 1.0 };
        let b = delta_budget(&spec, 2, &holder, 1.0);
        assert_eq!(b.d_scale, 300);
        assert_relative_eq!(b.delta0, 0.9 * 0.5 / 300.0, max_relative = 1e-12);
    }

    fn scalar_symmetric_run(seed: u64) -> (CocycleGenerator<f64>, ApproximationRun) {
        let sp = full2();
        let gen = CocycleGenerator::per_symbol(
            &sp,
            vec![
                DMatrix::from_row_slice(1, 1, &[2.0]),
                DMatrix::from_row_slice(1, 1, &[0.5]),
            ],
        )
        .unwrap();
        let m = BaseMeasure::uniform_bernoulli(&sp).unwrap();
        let run = run_main_experiment(
            &gen,
            &sp,
            &m,
            1,
            &[2, 4, 8, 16],
            Horizons { recurrence: 5000, reference: 20_000 },
            seed,
        )
        .unwrap();
        (gen, run)
    }

    #[test]
    fn scalar_run_matches_word_count_oracle() {
        let (_gen, run) = scalar_symmetric_run(11);
        assert_eq!(run.records.len(), 4);
        let mut prev = 0usize;
        for rec in &run.records {
            assert!(rec.n_k >= prev, "recurrence times must be nondecreasing");
            prev = rec.n_k;
            // scalar cocycle: the periodic exponent is the log-2 symbol
            // imbalance of the closed word
            let ones = rec.p_k.word().iter().filter(|&&s| s == 1).count() as f64;
            let n = rec.p_k.period() as f64;
            let oracle = (n - 2.0 * ones) / n * 2f64.ln();
            assert_relative_eq!(rec.spectrum_pk.gammas[0], oracle, epsilon = 1e-12);
            assert_relative_eq!(
                rec.errors[0],
                oracle - run.reference.gammas[0],
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn scalar_run_shadowing_constants() {
        let (_gen, run) = scalar_symmetric_run(23);
        for rec in &run.records {
            assert!(rec.shadow.satisfied, "closing bound must hold");
            assert!(rec.shadow.c1 <= 1.0 + 1e-12, "c1 = {}", rec.shadow.c1);
            assert!(
                rec.shadow.theta >= 0.5 * 2f64.ln() - 1e-9,
                "theta = {}",
                rec.shadow.theta
            );
        }
    }

    #[test]
    fn run_is_reproducible() {
        let (_g1, r1) = scalar_symmetric_run(7);
        let (_g2, r2) = scalar_symmetric_run(7);
        assert_eq!(r1.errors_csv(), r2.errors_csv());
        assert_eq!(r1.dump_record(), r2.dump_record());
        let (_g3, r3) = scalar_symmetric_run(8);
        assert_ne!(r1.errors_csv(), r3.errors_csv());
    }

    #[test]
    fn errors_csv_shape() {
        let (_gen, run) = scalar_symmetric_run(3);
        let csv = run.errors_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "k,n_k,i,gamma_pk,gamma_mu,error");
        assert_eq!(csv.lines().count(), 1 + run.records.len());
        for line in lines {
            assert_eq!(line.split(',').count(), 6);
        }
    }

    fn constant_run(a: DMatrix<f64>, s: usize) -> (CocycleGenerator<f64>, ApproximationRun) {
        let sp = full2();
        let gen = CocycleGenerator::constant(&sp, a).unwrap();
        let m = BaseMeasure::uniform_bernoulli(&sp).unwrap();
        let run = run_main_experiment(
            &gen,
            &sp,
            &m,
            s,
            &[2, 4, 8],
            Horizons { recurrence: 2000, reference: 4000 },
            5,
        )
        .unwrap();
        (gen, run)
    }

    #[test]
    fn constant_cocycle_zero_errors() {
        let (_gen, run) = constant_run(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]), 1);
        assert!(run.stderr() < 1e-10, "constant estimates carry no noise");
        for rec in &run.records {
            for &e in &rec.errors {
                assert!(e.abs() < 1e-9, "error {e}");
            }
        }
    }

    #[test]
    fn no_recurrence_error_when_horizon_too_short() {
        let sp = full2();
        let gen = CocycleGenerator::per_symbol(
            &sp,
            vec![
                DMatrix::from_row_slice(1, 1, &[2.0]),
                DMatrix::from_row_slice(1, 1, &[0.5]),
            ],
        )
        .unwrap();
        let m = BaseMeasure::uniform_bernoulli(&sp).unwrap();
        let out = run_main_experiment(
            &gen,
            &sp,
            &m,
            1,
            &[1 << 20],
            Horizons { recurrence: 30, reference: 2000 },
            5,
        );
        assert!(matches!(out, Err(Error::NoRecurrence { .. })));
    }

    #[test]
    fn semicontinuity_constant_cocycle_clean() {
        let (_gen, run) = constant_run(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]), 1);
        let report = semicontinuity_check(&run, 3.0);
        assert_eq!(report.violations, 0);
        // one entry per (record, partial depth)
        assert_eq!(report.entries.len(), 2 * run.records.len());
        for e in &report.entries {
            assert!(e.margin <= 0.0, "margin {}", e.margin);
        }
    }

    #[test]
    fn semicontinuity_flags_injected_violation() {
        let (_gen, mut run) =
            constant_run(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]), 1);
        let last = run.records.len() - 1;
        run.records[last].spectrum_pk.gammas[0] += 1.0;
        let report = semicontinuity_check(&run, 0.0);
        assert!(report.violations >= 1);
    }

    #[test]
    fn cone_lemmas_constant_diagonalizable_clean() {
        let sp = full2();
        let gen = CocycleGenerator::constant(
            &sp,
            DMatrix::from_row_slice(3, 3, &[3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0 / 3.0]),
        )
        .unwrap();
        let m = BaseMeasure::uniform_bernoulli(&sp).unwrap();
        let run = run_main_experiment(
            &gen,
            &sp,
            &m,
            1,
            &[2, 4, 8],
            Horizons { recurrence: 2000, reference: 4000 },
            9,
        )
        .unwrap();
        let params = LyapunovNormParams::new(&run.reference, 1, 0.1, 40).unwrap();
        let report =
            verify_cone_lemmas(&gen, &run, 1, params, run.records.len() - 1, 30, 17).unwrap();
        assert!(report.samples >= 20);
        assert_eq!(report.growth_violations, 0);
        assert_eq!(report.invariance_violations, 0);
        assert!(report.fitted_gamma > 0.0, "gamma {}", report.fitted_gamma);
        assert_eq!(report.violation_fraction(), 0.0);
    }

    #[test]
    fn cone_indices_and_dimension_match_constant() {
        let sp = full2();
        let gen = CocycleGenerator::constant(
            &sp,
            DMatrix::from_row_slice(3, 3, &[3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0 / 3.0]),
        )
        .unwrap();
        let m = BaseMeasure::uniform_bernoulli(&sp).unwrap();
        let run = run_main_experiment(
            &gen,
            &sp,
            &m,
            1,
            &[2, 4],
            Horizons { recurrence: 2000, reference: 4000 },
            13,
        )
        .unwrap();
        let frames: Vec<_> = run
            .records
            .iter()
            .map(|rec| periodic_spectrum(&gen, &run.space, &rec.p_k).unwrap().1)
            .collect();
        let params = LyapunovNormParams::new(&run.reference, 1, 0.1, 40).unwrap();
        let idx = cone_indices(&gen, &run, &frames, params, 40, 29).unwrap();
        assert_eq!(idx.per_k.len(), run.records.len());
        for per_h in &idx.per_k {
            assert_eq!(per_h, &vec![1usize]);
        }
        let report = dimension_match_check(&run, &idx);
        assert!(report.entries.iter().all(|e| e.matches));
        assert_eq!(report.margin_violations, 0);
    }

    #[test]
    fn positive_benchmark_errors_shrink() {
        // random positive two-letter 3x3 cocycle: the dominant periodic
        // exponent approaches the reference as the threshold tightens
        let sp = full2();
        let mut rng = seed::rng(42, 0, 0);
        let mats: Vec<DMatrix<f64>> = (0..2)
            .map(|_| DMatrix::from_fn(3, 3, |_, _| rng.gen_range(0.5..1.5)))
            .collect();
        let gen = CocycleGenerator::per_symbol(&sp, mats).unwrap();
        let m = BaseMeasure::uniform_bernoulli(&sp).unwrap();
        let run = run_main_experiment(
            &gen,
            &sp,
            &m,
            1,
            &[2, 4, 8, 16, 32],
            Horizons { recurrence: 60_000, reference: 100_000 },
            1,
        )
        .unwrap();
        let first = run.records.first().unwrap().errors[0].abs();
        let last = run.records.last().unwrap().errors[0].abs();
        assert!(last < 0.1, "final error {last}");
        assert!(last <= first + 0.02, "first {first}, last {last}");
    }
}
