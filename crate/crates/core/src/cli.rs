//! Batch experiment runner: plain-text config parsing, subcommand dispatch,
//! deterministic seeding, and CSV/report emission.
//!
//! All randomness flows from the single config seed: each run derives its
//! working seed as split(seed, 100 + subcommand index, 0), and the modules
//! split further per task.  Artifacts are accumulated in memory and written
//! only when the whole run succeeds, so failures leave no partial output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use nalgebra::{DMatrix, DVector};

use crate::applications::{
    certify_uniform_hyperbolicity, conjugacy_invariance_check, growth_vs_periodic_radius,
    sacker_sell_estimate, ConjugacyData, DichotomyData,
};
use crate::cocycle::{lambda_mu_estimate, CocycleGenerator};
use crate::error::{Error, Result};
use crate::lyapnorm::{LyapunovNormParams, NormEngine};
use crate::oseledets::periodic_spectrum;
use crate::periodic_approx::{
    cone_indices, dimension_match_check, reference_spectrum, run_main_experiment,
    semicontinuity_check, verify_cone_lemmas, Horizons,
};
use crate::seed;
use crate::symbolic::{enumerate_periodic, sample_orbit, BaseMeasure, ShiftSpace};
use crate::transferop::{
    exceptional_spectrum_ulam, lasota_yorke_check, transfer_cocycle, PiecewiseExpandingMap,
    DEFAULT_BINS,
};

/// Canonical subcommand list; the position is the seed-split tag offset.
pub const SUBCOMMANDS: [&str; 10] = [
    "exponents",
    "periodic",
    "approx",
    "cones",
    "norms",
    "sackersell",
    "bracket",
    "certify",
    "ulam",
    "conjugacy",
];

/// Manifest schema version.
const SCHEMA_VERSION: u32 = 1;

/// Parsed experiment configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub subcommand: String,
    pub generator: Option<PathBuf>,
    pub generator2: Option<PathBuf>,
    pub space: Option<PathBuf>,
    pub similarity: Option<PathBuf>,
    pub maps: Vec<PathBuf>,
    pub measure: String,
    pub n: usize,
    pub replicates: usize,
    pub k_schedule: Vec<u64>,
    pub max_period: usize,
    pub delta: f64,
    pub truncation: usize,
    pub tolerance: f64,
    pub s: usize,
    pub n_max: usize,
    pub bins: usize,
    pub proj_rank: usize,
    pub dich_d: f64,
    pub dich_rate: f64,
    pub clustering_eps: f64,
    pub recurrence_horizon: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Raw key/value echo for the manifest.
    pub echo: BTreeMap<String, String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            subcommand: String::new(),
            generator: None,
            generator2: None,
            space: None,
            similarity: None,
            maps: Vec::new(),
            measure: "uniform".into(),
            n: 10_000,
            replicates: 4,
            k_schedule: vec![2, 4, 8, 16, 32],
            max_period: 8,
            delta: 0.05,
            truncation: 40,
            tolerance: 1e-9,
            s: 1,
            n_max: 12,
            bins: DEFAULT_BINS,
            proj_rank: 0,
            dich_d: 1.0,
            dich_rate: 0.5,
            clustering_eps: 0.2,
            recurrence_horizon: 100_000,
            seed: 0,
            out_dir: PathBuf::from("out"),
            echo: BTreeMap::new(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(v: &str, key: &str, ln: usize, errs: &mut Vec<String>) -> Option<T> {
    match v.parse::<T>() {
        Ok(x) => Some(x),
        Err(_) => {
            errs.push(format!("line {ln}: {key} = {v} is not a valid value"));
            None
        }
    }
}

/// Parse `key = value` lines (# comments); all errors are collected and
/// reported together rather than failing on the first.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut errs: Vec<String> = Vec::new();
    let mut seen_seed = false;
    for (idx, raw) in text.lines().enumerate() {
        let ln = idx + 1;
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            errs.push(format!("line {ln}: expected `key = value`"));
            continue;
        };
        let (k, v) = (k.trim(), v.trim());
        cfg.echo.insert(k.to_string(), v.to_string());
        match k {
            "subcommand" => cfg.subcommand = v.to_string(),
            "generator" => cfg.generator = Some(PathBuf::from(v)),
            "generator2" => cfg.generator2 = Some(PathBuf::from(v)),
            "space" => cfg.space = Some(PathBuf::from(v)),
            "similarity" => cfg.similarity = Some(PathBuf::from(v)),
            "maps" => cfg.maps = v.split(',').map(|p| PathBuf::from(p.trim())).collect(),
            "measure" => cfg.measure = v.to_string(),
            "n" => {
                if let Some(x) = parse_num(v, k, ln, &mut errs) {
                    cfg.n = x;
                }
            }
            "replicates" => {
                if let Some(x) = parse_num(v, k, ln, &mut errs) {
                    cfg.replicates = x;
                }
            }
            "k_schedule" => {
                let parts: Vec<Option<u64>> = v
                    .split(',')
                    .map(|p| parse_num(p.trim(), k, ln, &mut errs))
                    .collect();
                if parts.iter().all(Option::is_some) {
                    cfg.k_schedule = parts.into_iter().map(Option::unwrap).collect();
                }
            }
            "max_period" => {
                if let Some(x) = parse_num(v, k, ln, &mut errs) {
                    cfg.max_period = x;
                }
            }
            "delta" => {
                if let Some(x) = parse_num(v, k, ln, &mut errs) {
                    cfg.delta = x;
                }
            }
            "truncation" => {
                if let Some(x) = parse_num(v, k, ln, &mut errs) {
                    cfg.truncation = x;
                }
            }
            "tolerance" => {
                if let Some(x) = parse_num(v, k, ln, &mut errs) {
                    cfg.tolerance = x;
                }
            }
            "s" => {
                if let Some(x) = parse_num(v, k, ln, &mut errs) {
                    cfg.s = x;
                }
            }
            "n_max" => {
                if let Some(x) = parse_num(v, k, ln, &mut errs) {
                    cfg.n_max = x;
                }
            }
            "bins" => {
                if let Some(x) = parse_num(v, k, ln, &mut errs) {
                    cfg.bins = x;
                }
            }
            "proj_rank" => {
                if let Some(x) = parse_num(v, k, ln, &mut errs) {
                    cfg.proj_rank = x;
                }
            }
            "dich_d" => {
                if let Some(x) = parse_num(v, k, ln, &mut errs) {
                    cfg.dich_d = x;
                }
            }
            "dich_rate" => {
                if let Some(x) = parse_num(v, k, ln, &mut errs) {
                    cfg.dich_rate = x;
                }
            }
            "clustering_eps" => {
                if let Some(x) = parse_num(v, k, ln, &mut errs) {
                    cfg.clustering_eps = x;
                }
            }
            "recurrence_horizon" => {
                if let Some(x) = parse_num(v, k, ln, &mut errs) {
                    cfg.recurrence_horizon = x;
                }
            }
            "seed" => {
                if let Some(x) = parse_num(v, k, ln, &mut errs) {
                    cfg.seed = x;
                    seen_seed = true;
                }
            }
            "out_dir" => cfg.out_dir = PathBuf::from(v),
            _ => errs.push(format!("line {ln}: unknown key `{k}`")),
        }
    }

    if cfg.subcommand.is_empty() {
        errs.push("missing mandatory field `subcommand`".into());
    } else if !SUBCOMMANDS.contains(&cfg.subcommand.as_str()) {
        errs.push(format!(
            "unknown subcommand `{}` (expected one of {})",
            cfg.subcommand,
            SUBCOMMANDS.join(", ")
        ));
    }
    if !seen_seed {
        errs.push("missing mandatory field `seed` (wall-clock seeding is not supported)".into());
    }
    let needs_generator = matches!(
        cfg.subcommand.as_str(),
        "exponents" | "periodic" | "approx" | "cones" | "norms" | "sackersell" | "bracket"
            | "certify" | "conjugacy"
    );
    if needs_generator {
        if cfg.generator.is_none() {
            errs.push("missing mandatory field `generator`".into());
        }
        if cfg.space.is_none() {
            errs.push("missing mandatory field `space`".into());
        }
    }
    if cfg.subcommand == "ulam" && cfg.maps.is_empty() {
        errs.push("missing mandatory field `maps` (comma-separated map files)".into());
    }
    if cfg.subcommand == "conjugacy" {
        if cfg.generator2.is_none() {
            errs.push("missing mandatory field `generator2`".into());
        }
        if cfg.similarity.is_none() {
            errs.push("missing mandatory field `similarity`".into());
        }
    }
    for p in cfg
        .generator
        .iter()
        .chain(cfg.generator2.iter())
        .chain(cfg.space.iter())
        .chain(cfg.similarity.iter())
        .chain(cfg.maps.iter())
    {
        if !p.exists() {
            errs.push(format!("referenced file {} does not exist", p.display()));
        }
    }
    if !(cfg.delta > 0.0) {
        errs.push("delta must be positive".into());
    }
    if cfg.replicates == 0 || cfg.max_period == 0 || cfg.n_max == 0 || cfg.s == 0 {
        errs.push("replicates, max_period, n_max, and s must be at least 1".into());
    }
    if cfg.k_schedule.is_empty() || cfg.k_schedule.iter().any(|&k| k < 2) {
        errs.push("k_schedule must be nonempty with every threshold >= 2".into());
    }

    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Parse(errs))
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(Error::from)
}

fn load_space(cfg: &ExperimentConfig) -> Result<Arc<ShiftSpace>> {
    let p = cfg.space.as_ref().expect("space checked at parse time");
    Ok(Arc::new(ShiftSpace::parse(&read(p)?)?))
}

fn load_generator(path: &Path, space: &ShiftSpace) -> Result<CocycleGenerator<f64>> {
    CocycleGenerator::parse(&read(path)?, space)
}

fn load_measure(cfg: &ExperimentConfig, space: &ShiftSpace) -> Result<BaseMeasure> {
    let mut it = cfg.measure.split_whitespace();
    match it.next() {
        Some("uniform") | None => BaseMeasure::uniform_bernoulli(space),
        Some("bernoulli") => {
            let probs: std::result::Result<Vec<f64>, _> = it.map(str::parse::<f64>).collect();
            let probs = probs.map_err(|e| Error::Parse(vec![format!("measure: {e}")]))?;
            BaseMeasure::bernoulli(space, probs)
        }
        Some(other) => Err(Error::Parse(vec![format!(
            "measure: unknown kind `{other}` (expected uniform or bernoulli)"
        )])),
    }
}

/// Plain matrix text: first line `dim d`, then d rows of d entries.
fn load_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = read(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let head = lines
        .next()
        .ok_or_else(|| Error::Parse(vec!["matrix file: empty".into()]))?;
    let d: usize = head
        .strip_prefix("dim ")
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| Error::Parse(vec!["matrix file: first line must be `dim d`".into()]))?;
    let mut entries = Vec::with_capacity(d * d);
    for l in lines {
        for tok in l.split_whitespace() {
            entries.push(
                tok.parse::<f64>()
                    .map_err(|e| Error::Parse(vec![format!("matrix file: {e}")]))?,
            );
        }
    }
    if entries.len() != d * d {
        return Err(Error::Parse(vec![format!(
            "matrix file: expected {} entries, found {}",
            d * d,
            entries.len()
        )]));
    }
    Ok(DMatrix::from_row_slice(d, d, &entries))
}

fn run_seed(cfg: &ExperimentConfig) -> u64 {
    let idx = SUBCOMMANDS
        .iter()
        .position(|s| *s == cfg.subcommand)
        .expect("subcommand validated at parse time") as u64;
    seed::split(cfg.seed, 100 + idx, 0)
}

type Artifacts = Vec<(String, String)>;

fn csv_estimates_row(out: &mut String, quantity: &str, n: usize, reps: usize, value: f64, stderr: f64, seed: u64) {
    let _ = writeln!(out, "{quantity},{n},{reps},{value:.17e},{stderr:.17e},{seed}");
}

fn run_exponents(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let space = load_space(cfg)?;
    let gen = load_generator(cfg.generator.as_ref().unwrap(), &space)?;
    let measure = load_measure(cfg, &space)?;
    let sd = run_seed(cfg);
    let est = lambda_mu_estimate(&gen, &space, &measure, cfg.n, cfg.replicates, sd);
    let (spec, stderr) = reference_spectrum(&gen, &space, &measure, cfg.n, sd)?;
    let mut csv = String::from("quantity,n,replicates,value,stderr,seed\n");
    csv_estimates_row(&mut csv, "lambda_mu", cfg.n, cfg.replicates, est.lambda_mu, est.lambda_mu_stderr, sd);
    csv_estimates_row(&mut csv, "kappa_mu", cfg.n, cfg.replicates, est.kappa_mu, 0.0, sd);
    for (i, (&g, &se)) in spec.gammas.iter().zip(&stderr).enumerate() {
        csv_estimates_row(&mut csv, &format!("gamma_{}", i + 1), cfg.n, 4, g, se, sd);
    }
    Ok(vec![("estimates.csv".into(), csv)])
}

fn group_of(spec: &crate::oseledets::LyapunovSpectrum, i: usize) -> (f64, usize) {
    let mut c = 0;
    for g in &spec.groups {
        if i < c + g.multiplicity {
            return (g.lambda, g.multiplicity);
        }
        c += g.multiplicity;
    }
    let last = spec.groups.last().expect("nonempty spectrum");
    (last.lambda, last.multiplicity)
}

fn run_periodic(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let space = load_space(cfg)?;
    let gen = load_generator(cfg.generator.as_ref().unwrap(), &space)?;
    let mut csv = String::from("source,word_or_seed,i,gamma,lambda_group,multiplicity\n");
    let mut frames = String::new();
    for p in enumerate_periodic(&space, cfg.max_period) {
        let (spec, frame) = periodic_spectrum(&gen, &space, &p)?;
        let w: String = p.word().iter().map(|s| (b'0' + s) as char).collect();
        for (i, &g) in spec.gammas.iter().enumerate() {
            let (lg, mult) = group_of(&spec, i);
            let _ = writeln!(csv, "periodic,{w},{},{g:.17e},{lg:.17e},{mult}", i + 1);
        }
        let _ = writeln!(frames, "word {w}");
        frames.push_str(&frame.dump());
    }
    Ok(vec![("spectrum.csv".into(), csv), ("frames.txt".into(), frames)])
}

fn run_approx(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let space = load_space(cfg)?;
    let gen = load_generator(cfg.generator.as_ref().unwrap(), &space)?;
    let measure = load_measure(cfg, &space)?;
    let run = run_main_experiment(
        &gen,
        &space,
        &measure,
        cfg.s,
        &cfg.k_schedule,
        Horizons { recurrence: cfg.recurrence_horizon, reference: cfg.n },
        run_seed(cfg),
    )?;
    let semi = semicontinuity_check(&run, 3.0);
    let mut record = run.dump_record();
    let _ = writeln!(record, "semicontinuity_violations {}", semi.violations);
    Ok(vec![
        ("errors.csv".into(), run.errors_csv()),
        ("run_record.txt".into(), record),
    ])
}

fn run_cones(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let space = load_space(cfg)?;
    let gen = load_generator(cfg.generator.as_ref().unwrap(), &space)?;
    let measure = load_measure(cfg, &space)?;
    let sd = run_seed(cfg);
    let run = run_main_experiment(
        &gen,
        &space,
        &measure,
        cfg.s,
        &cfg.k_schedule,
        Horizons { recurrence: cfg.recurrence_horizon, reference: cfg.n },
        sd,
    )?;
    let params = LyapunovNormParams::new(&run.reference, cfg.s, cfg.delta, cfg.truncation)?;
    let frames: Vec<_> = run
        .records
        .iter()
        .map(|r| periodic_spectrum(&gen, &space, &r.p_k).map(|(_, f)| f))
        .collect::<Result<_>>()?;
    let idx = cone_indices(&gen, &run, &frames, params, cfg.replicates.max(64), sd)?;
    let dims = dimension_match_check(&run, &idx);
    let lemmas = verify_cone_lemmas(&gen, &run, 1, params, run.records.len() - 1, 200, sd)?;
    let mut out = String::new();
    let _ = writeln!(out, "delta {:.17e}", idx.delta);
    for (rec, per_h) in run.records.iter().zip(&idx.per_k) {
        let _ = writeln!(
            out,
            "k {} indices {}",
            rec.k,
            per_h.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
        );
    }
    let _ = writeln!(out, "dimension_matches {}", dims.entries.iter().filter(|e| e.matches).count());
    let _ = writeln!(out, "dimension_entries {}", dims.entries.len());
    let _ = writeln!(out, "margin_violations {}", dims.margin_violations);
    let _ = writeln!(out, "cone_growth_violation_fraction {:.17e}", lemmas.violation_fraction());
    let _ = writeln!(out, "cone_fitted_gamma {:.17e}", lemmas.fitted_gamma);
    Ok(vec![("cones.txt".into(), out)])
}

fn run_norms(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let space = load_space(cfg)?;
    let gen = load_generator(cfg.generator.as_ref().unwrap(), &space)?;
    let measure = load_measure(cfg, &space)?;
    let sd = run_seed(cfg);
    let (spec, _) = reference_spectrum(&gen, &space, &measure, cfg.n, sd)?;
    let params = LyapunovNormParams::new(&spec, cfg.s, cfg.delta, cfg.truncation)?;
    let pad = cfg.truncation + params.frame_depth * 2 + gen.radius() + 4;
    let x = sample_orbit(&space, &measure, pad, pad, sd);
    let eng = NormEngine::new(&gen, &x, &spec, params)?;
    let mut csv = String::from("point,level,value,tail_bound,T,delta,lambda_tilde\n");
    let d = gen.dim();
    for j in 0..3i64 {
        let mut rng = seed::rng(sd, seed::tag::NORM_SAMPLING, j as u64);
        let u = DVector::<f64>::from_fn(d, |_, _| rand::Rng::gen_range(&mut rng, -1.0..1.0));
        let eval = eng.full_norm_at(j, &u)?;
        for (lvl, v) in eval.per_level.iter().enumerate() {
            let tb = if lvl + 1 == eval.per_level.len() { eval.truncation_tail_bound } else { 0.0 };
            let _ = writeln!(
                csv,
                "{j},{},{v:.17e},{tb:.17e},{},{:.17e},{:.17e}",
                lvl + 1,
                params.truncation,
                params.delta,
                params.lambda_tilde
            );
        }
    }
    Ok(vec![("norms.csv".into(), csv)])
}

fn run_sackersell(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let space = load_space(cfg)?;
    let gen = load_generator(cfg.generator.as_ref().unwrap(), &space)?;
    let rep = sacker_sell_estimate(&gen, &space, cfg.max_period, cfg.clustering_eps)?;
    Ok(vec![("sackersell.csv".into(), rep.csv())])
}

fn run_bracket(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let space = load_space(cfg)?;
    let gen = load_generator(cfg.generator.as_ref().unwrap(), &space)?;
    let b = growth_vs_periodic_radius(&gen, &space, cfg.n_max, cfg.max_period)?;
    Ok(vec![("bracket.csv".into(), b.csv())])
}

fn run_certify(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let space = load_space(cfg)?;
    let gen = load_generator(cfg.generator.as_ref().unwrap(), &space)?;
    let d = gen.dim();
    let rank = if cfg.proj_rank == 0 { d / 2 } else { cfg.proj_rank };
    if rank >= d {
        return Err(Error::Invalid {
            what: "projection rank",
            why: format!("rank {rank} must be below the dimension {d}"),
        });
    }
    // coordinate projection onto the trailing (claimed stable) coordinates
    let p = DMatrix::<f64>::from_fn(d, d, |i, j| if i == j && i >= d - rank { 1.0 } else { 0.0 });
    let dich = DichotomyData::constant(&space, p, cfg.dich_d, cfg.dich_rate)?;
    let cert = certify_uniform_hyperbolicity(&gen, &space, &dich, cfg.delta, cfg.max_period)?;
    Ok(vec![("certificate.txt".into(), cert.dump())])
}

fn run_ulam(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let maps: Vec<PiecewiseExpandingMap> = cfg
        .maps
        .iter()
        .map(|p| PiecewiseExpandingMap::parse(&read(p)?))
        .collect::<Result<_>>()?;
    let (gen, space) = transfer_cocycle(&maps, cfg.bins)?;
    let measure = load_measure(cfg, &space)?;
    let ly = lasota_yorke_check(&maps, &measure)?;
    let rep = exceptional_spectrum_ulam(&gen, &space, &measure, cfg.n, cfg.max_period, run_seed(cfg))?;
    let mut out = String::new();
    let _ = writeln!(out, "integral_log_alpha {:.17e}", ly.integral_log_alpha);
    let _ = writeln!(out, "quasi_compact {}", ly.quasi_compact);
    for (i, ((a, b), g)) in ly.alpha.iter().zip(&ly.beta).zip(&ly.gamma_bound).enumerate() {
        let _ = writeln!(out, "map {i} alpha {a:.17e} beta {b:.17e} gamma_bound {g:.17e}");
    }
    let _ = writeln!(out, "bins {}", rep.bins);
    let _ = writeln!(out, "lambda1 {:.17e}", rep.lambda1);
    let _ = writeln!(out, "lambda2 {:.17e}", rep.lambda2);
    Ok(vec![
        ("ulam.csv".into(), rep.csv()),
        ("lasota_yorke.txt".into(), out),
    ])
}

fn run_conjugacy(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let space = load_space(cfg)?;
    let gen1 = load_generator(cfg.generator.as_ref().unwrap(), &space)?;
    let gen2 = load_generator(cfg.generator2.as_ref().unwrap(), &space)?;
    let l = load_matrix(cfg.similarity.as_ref().unwrap())?;
    let conj = ConjugacyData::constant_similarity(&space, l, cfg.max_period)?;
    let rep = conjugacy_invariance_check(&gen1, &gen2, &space, &conj, cfg.max_period)?;
    let mut out = String::new();
    let _ = writeln!(out, "checked {}", rep.checked);
    let _ = writeln!(out, "max_spectrum_deviation {:.17e}", rep.max_spectrum_deviation);
    let _ = writeln!(out, "max_matrix_deviation {:.17e}", rep.max_matrix_deviation);
    let _ = writeln!(out, "min_abs_exponent {:.17e}", rep.min_abs_exponent);
    Ok(vec![("conjugacy.txt".into(), out)])
}

/// Produce all artifacts for a valid config, in memory.
pub fn dispatch(cfg: &ExperimentConfig) -> Result<Artifacts> {
    match cfg.subcommand.as_str() {
        "exponents" => run_exponents(cfg),
        "periodic" => run_periodic(cfg),
        "approx" => run_approx(cfg),
        "cones" => run_cones(cfg),
        "norms" => run_norms(cfg),
        "sackersell" => run_sackersell(cfg),
        "bracket" => run_bracket(cfg),
        "certify" => run_certify(cfg),
        "ulam" => run_ulam(cfg),
        "conjugacy" => run_conjugacy(cfg),
        other => unreachable!("subcommand {other} validated at parse time"),
    }
}

fn write_manifest(cfg: &ExperimentConfig, wall_ms: u128, names: &[String]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "schema_version {SCHEMA_VERSION}");
    let _ = writeln!(out, "crate_version {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "subcommand {}", cfg.subcommand);
    let _ = writeln!(out, "seed {}", cfg.seed);
    let _ = writeln!(out, "wall_ms {wall_ms}");
    let ts = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let _ = writeln!(out, "timestamp {ts}");
    let _ = writeln!(out, "artifacts {}", names.join(","));
    out.push_str("config:\n");
    for (k, v) in &cfg.echo {
        let _ = writeln!(out, "  {k} = {v}");
    }
    out
}

/// Run one config end to end, writing artifacts and a manifest to the
/// output directory.  Nothing is written if the run fails.
pub fn run(cfg: &ExperimentConfig) -> Result<()> {
    let start = Instant::now();
    let artifacts = dispatch(cfg)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let names: Vec<String> = artifacts.iter().map(|(n, _)| n.clone()).collect();
    for (name, content) in &artifacts {
        std::fs::write(cfg.out_dir.join(name), content)?;
    }
    let manifest = write_manifest(cfg, start.elapsed().as_millis(), &names);
    std::fs::write(cfg.out_dir.join("manifest.txt"), manifest)?;
    Ok(())
}

/// Exit codes: 0 ok, 2 config error, 3 numeric failure, 4 budget exceeded.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse(_) => 2,
        Error::Budget { .. } => 4,
        _ => 3,
    }
}

/// Entry point for the binary: flag parsing, config load, dispatch.
pub fn main_with_args(args: &[String]) -> i32 {
    let mut config_path: Option<PathBuf> = None;
    let mut out_dir: Option<PathBuf> = None;
    let mut seed_override: Option<u64> = None;
    let mut threads: Option<usize> = None;
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let mut grab = |name: &str| -> Option<String> {
            match it.next() {
                Some(v) => Some(v.clone()),
                None => {
                    eprintln!("{name} requires a value");
                    None
                }
            }
        };
        match a.as_str() {
            "--config" => match grab("--config") {
                Some(v) => config_path = Some(PathBuf::from(v)),
                None => return 2,
            },
            "--out-dir" => match grab("--out-dir") {
                Some(v) => out_dir = Some(PathBuf::from(v)),
                None => return 2,
            },
            "--seed" => match grab("--seed").map(|v| v.parse::<u64>()) {
                Some(Ok(v)) => seed_override = Some(v),
                _ => {
                    eprintln!("--seed must be an unsigned integer");
                    return 2;
                }
            },
            "--threads" => match grab("--threads").map(|v| v.parse::<usize>()) {
                Some(Ok(v)) if v >= 1 => threads = Some(v),
                _ => {
                    eprintln!("--threads must be a positive integer");
                    return 2;
                }
            },
            other => {
                eprintln!("unknown flag `{other}` (expected --config/--out-dir/--seed/--threads)");
                return 2;
            }
        }
    }
    let Some(config_path) = config_path else {
        eprintln!("usage: lyaplab --config PATH [--out-dir PATH] [--seed N] [--threads N]");
        return 2;
    };
    if let Some(t) = threads {
        // ignore failure: the global pool may already exist in-process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let text = match std::fs::read_to_string(&config_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", config_path.display());
            return 2;
        }
    };
    let mut cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return 2;
        }
    };
    if let Some(s) = seed_override {
        cfg.seed = s;
        cfg.echo.insert("seed".into(), s.to_string());
    }
    if let Some(d) = out_dir {
        cfg.out_dir = d;
    }
    match run(&cfg) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let sp = dir.path().join("space.txt");
        let gp = dir.path().join("gen.txt");
        std::fs::write(&sp, "k 2\n").unwrap();
        std::fs::write(&gp, "dim 1\nradius 0\n0 2.0\n1 0.5\n").unwrap();
        let text = format!(
            "subcommand = exponents\nseed = 7\nspace = {}\ngenerator = {}\n",
            sp.display(),
            gp.display()
        );
        let cfg = parse_config(&text).unwrap();
        assert_eq!(cfg.n, 10_000);
        assert_eq!(cfg.replicates, 4);
        assert_eq!(cfg.k_schedule, vec![2, 4, 8, 16, 32]);
        assert_eq!(cfg.seed, 7);
    }

    #[test]
    fn missing_seed_named() {
        let err = parse_config("subcommand = sackersell\n").unwrap_err();
        let Error::Parse(msgs) = err else { panic!("expected parse error") };
        assert!(msgs.iter().any(|m| m.contains("seed")));
    }

    #[test]
    fn multiple_errors_all_reported() {
        let text = "subcommand = nonsense\nn = notanumber\nbogus = 1\n";
        let err = parse_config(text).unwrap_err();
        let Error::Parse(msgs) = err else { panic!("expected parse error") };
        assert!(msgs.iter().any(|m| m.contains("nonsense")));
        assert!(msgs.iter().any(|m| m.contains("notanumber")));
        assert!(msgs.iter().any(|m| m.contains("bogus")));
        assert!(msgs.len() >= 4, "{msgs:?}"); // plus the missing seed
    }

    #[test]
    fn missing_file_reported_at_parse_time() {
        let text = "subcommand = bracket\nseed = 1\nspace = /nonexistent/space\ngenerator = /nonexistent/gen\n";
        let err = parse_config(text).unwrap_err();
        let Error::Parse(msgs) = err else { panic!("expected parse error") };
        assert!(msgs.iter().any(|m| m.contains("/nonexistent/space")));
    }
}
