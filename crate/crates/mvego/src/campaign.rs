//! Campaign harness: runs seeded repetitions of every requested method on a
//! benchmark, and writes summary tables, convergence series, and a
//! machine-readable run journal.
//!
//! Repetition r uses seed `base_seed + r`; all surrogate-based methods share
//! the identical initial design within a repetition. Re-running a campaign
//! with the same configuration reproduces every output file byte for byte
//! (jobs only affect scheduling, never results).

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::benchmarks::{self, oracle_from_line, oracle_to_line, OracleResult};
use crate::ego::{
    run_categorywise_ego, run_mixed_ego, run_penalized_ga, EgoSettings, RunRecord,
};
use crate::ga::GaConfig;
use crate::kernel::{hyperparameter_count, SpecKind};
use crate::problem::Problem;
use crate::train::TrainerConfig;
use crate::util::fnv1a64;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    UnknownBenchmark(#[from] benchmarks::BenchmarkError),
    #[error("unknown method {0:?}; known: HeHS, HoHS, CS, CW, GA")]
    UnknownMethod(String),
    #[error("methods list is empty")]
    NoMethods,
    #[error("{0} must be at least {1}")]
    BadValue(&'static str, usize),
    #[error("no default budgets for benchmark {0:?}; set n_initial/n_infill explicitly")]
    NoDefaults(String),
}

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("run {method} repetition {repetition} failed: {source}")]
    Run { method: Method, repetition: usize, source: crate::ego::EgoError },
    #[error("writing outputs: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    MismatchedBudgets(String),
    #[error("run journal is unreadable: {0}")]
    Journal(#[from] serde_json::Error),
    #[error("oracle record is unreadable: {0}")]
    Oracle(#[from] benchmarks::BenchmarkError),
}

/// Optimization methods the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    HeHs,
    HoHs,
    Cs,
    Cw,
    Ga,
}

pub const METHOD_ORDER: [Method; 5] = [Method::HeHs, Method::HoHs, Method::Cs, Method::Cw, Method::Ga];

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::HeHs => "HeHS",
            Method::HoHs => "HoHS",
            Method::Cs => "CS",
            Method::Cw => "CW",
            Method::Ga => "GA",
        }
    }

    pub fn from_name(name: &str) -> Option<Method> {
        METHOD_ORDER.iter().copied().find(|m| m.label().eq_ignore_ascii_case(name))
    }

    pub fn spec_kind(self) -> Option<SpecKind> {
        match self {
            Method::HeHs => Some(SpecKind::HeteroHs),
            Method::HoHs => Some(SpecKind::HomoHs),
            Method::Cs => Some(SpecKind::Cs),
            Method::Cw | Method::Ga => None,
        }
    }
}

impl std::fmt::Display for Method {
    fmt_display!();
}

macro_rules! fmt_display {
    () => {
        fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
            f.write_str(self.label())
        }
    };
}
use fmt_display;

/// On-disk campaign configuration (JSON). Unset fields fall back to the
/// benchmark's defaults.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub benchmark: String,
    #[serde(default)]
    pub methods: Option<Vec<String>>,
    #[serde(default)]
    pub n_initial: Option<usize>,
    #[serde(default)]
    pub n_infill: Option<usize>,
    #[serde(default)]
    pub repetitions: Option<usize>,
    #[serde(default)]
    pub base_seed: Option<u64>,
    #[serde(default)]
    pub ga_population: Option<usize>,
    #[serde(default)]
    pub ga_generations: Option<usize>,
    #[serde(default)]
    pub trainer_evals_per_dim: Option<usize>,
    #[serde(default)]
    pub trainer_restarts: Option<usize>,
    #[serde(default)]
    pub infill_population: Option<usize>,
    #[serde(default)]
    pub infill_generations: Option<usize>,
    #[serde(default)]
    pub infill_stall: Option<usize>,
    #[serde(default)]
    pub oracle_resolution: Option<usize>,
    #[serde(default)]
    pub jobs: Option<usize>,
}

pub fn load_config(path: &Path) -> Result<CampaignConfig, ConfigError> {
    let text = fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    Ok(serde_json::from_str(&text)?)
}

/// A validated campaign: every name resolved, every budget concrete.
#[derive(Debug, Clone)]
pub struct CampaignPlan {
    pub benchmark: String,
    pub methods: Vec<Method>,
    pub n_initial: usize,
    pub n_infill: usize,
    pub repetitions: usize,
    pub base_seed: u64,
    pub ga_population: usize,
    pub ga_generations: usize,
    pub settings: EgoSettings,
    pub oracle_resolution: usize,
    pub jobs: Option<usize>,
}

impl CampaignPlan {
    pub fn problem(&self) -> Problem {
        benchmarks::by_name(&self.benchmark).expect("benchmark validated at resolve time")
    }

    /// Configuration echo written next to the outputs; excludes scheduling
    /// knobs so identical campaigns in different directories produce
    /// identical files.
    fn echo(&self) -> serde_json::Value {
        serde_json::json!({
            "benchmark": self.benchmark,
            "methods": self.methods.iter().map(|m| m.label()).collect::<Vec<_>>(),
            "n_initial": self.n_initial,
            "n_infill": self.n_infill,
            "repetitions": self.repetitions,
            "base_seed": self.base_seed,
            "ga_population": self.ga_population,
            "ga_generations": self.ga_generations,
            "trainer_evals_per_dim": self.settings.trainer.evals_per_dim,
            "trainer_restarts": self.settings.trainer.restarts,
            "infill_population": self.settings.infill_ga.population,
            "infill_generations": self.settings.infill_ga.generations,
            "infill_stall": self.settings.infill_ga.stall_generations,
            "oracle_resolution": self.oracle_resolution,
        })
    }
}

/// Validates a configuration against the benchmark's defaults. Fails before
/// any evaluation on unknown names or degenerate budgets.
pub fn resolve(config: &CampaignConfig) -> Result<CampaignPlan, ConfigError> {
    benchmarks::by_name(&config.benchmark)?;
    let methods = match &config.methods {
        None => METHOD_ORDER.to_vec(),
        Some(names) => {
            let mut methods = Vec::with_capacity(names.len());
            for name in names {
                methods
                    .push(Method::from_name(name).ok_or_else(|| ConfigError::UnknownMethod(name.clone()))?);
            }
            methods
        }
    };
    if methods.is_empty() {
        return Err(ConfigError::NoMethods);
    }
    let defaults = benchmarks::default_budgets(&config.benchmark);
    let pick = |explicit: Option<usize>, default: Option<usize>, what: &'static str| {
        explicit
            .or(default)
            .ok_or(ConfigError::NoDefaults(config.benchmark.clone()))
            .map(|v| (what, v))
    };
    let (_, n_initial) = pick(config.n_initial, defaults.map(|d| d.0), "n_initial")?;
    let (_, n_infill) = pick(config.n_infill, defaults.map(|d| d.1), "n_infill")?;
    let (_, ga_population) = pick(config.ga_population, defaults.map(|d| d.2), "ga_population")?;
    let (_, ga_generations) = pick(config.ga_generations, defaults.map(|d| d.3), "ga_generations")?;
    if n_initial < 2 {
        return Err(ConfigError::BadValue("n_initial", 2));
    }
    if ga_population < 2 {
        return Err(ConfigError::BadValue("ga_population", 2));
    }
    if ga_generations < 1 {
        return Err(ConfigError::BadValue("ga_generations", 1));
    }
    let repetitions = config.repetitions.unwrap_or(10);
    if repetitions < 1 {
        return Err(ConfigError::BadValue("repetitions", 1));
    }
    let settings = EgoSettings {
        trainer: TrainerConfig {
            evals_per_dim: config.trainer_evals_per_dim.unwrap_or(200),
            restarts: config.trainer_restarts.unwrap_or(1),
            ..TrainerConfig::default()
        },
        infill_ga: GaConfig {
            population: config.infill_population.unwrap_or(50),
            generations: config.infill_generations.unwrap_or(50),
            stall_generations: config.infill_stall.unwrap_or(15),
            ..GaConfig::default()
        },
    };
    Ok(CampaignPlan {
        benchmark: config.benchmark.clone(),
        methods,
        n_initial,
        n_infill,
        repetitions,
        base_seed: config.base_seed.unwrap_or(42),
        ga_population,
        ga_generations,
        settings,
        oracle_resolution: config.oracle_resolution.unwrap_or(400),
        jobs: config.jobs,
    })
}

/// Paper-style summary of one method over its repetitions.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub method: Method,
    pub repetitions: usize,
    /// Repetitions with a feasible final incumbent.
    pub feasible_runs: usize,
    /// Mean of final best feasible objective values (over feasible runs).
    pub mean_final: f64,
    /// Sample standard deviation / |mean| * 100.
    pub dispersion_pct: f64,
    /// Mean declared-convention constraint value at the final incumbents;
    /// omitted for the penalized GA.
    pub mean_constraint: Option<f64>,
    /// Runs whose final incumbent sits in the oracle's category.
    pub optima_in_oracle_category: usize,
    /// Hyperparameter tally, e.g. "8" or "4/category".
    pub hyperparameters: String,
    pub evaluations_per_run: usize,
}

fn run_one(
    plan: &CampaignPlan,
    problem: &Problem,
    method: Method,
    repetition: usize,
) -> Result<RunRecord, CampaignError> {
    let seed = plan.base_seed.wrapping_add(repetition as u64);
    let map_err = |source| CampaignError::Run { method, repetition, source };
    match method {
        Method::HeHs | Method::HoHs | Method::Cs => run_mixed_ego(
            problem,
            method.spec_kind().expect("surrogate method"),
            plan.n_initial,
            plan.n_infill,
            seed,
            &plan.settings,
        )
        .map_err(map_err),
        Method::Cw => {
            run_categorywise_ego(problem, plan.n_initial, plan.n_infill, seed, &plan.settings)
                .map_err(map_err)
        }
        Method::Ga => Ok(run_penalized_ga(problem, plan.ga_population, plan.ga_generations, seed)),
    }
}

/// Runs every (method, repetition) job, in parallel across a bounded worker
/// pool, and writes all artifacts under `output_dir`. Results are
/// independent of the worker count.
pub fn run_campaign(
    plan: &CampaignPlan,
    output_dir: &Path,
) -> Result<Vec<SummaryRow>, CampaignError> {
    let problem = plan.problem();
    let oracle = oracle_for(plan, &problem);

    let jobs: Vec<(Method, usize)> = plan
        .methods
        .iter()
        .flat_map(|&m| (0..plan.repetitions).map(move |r| (m, r)))
        .collect();

    let run_all = || -> Result<Vec<((Method, usize), RunRecord)>, CampaignError> {
        jobs.par_iter()
            .map(|&(method, rep)| run_one(plan, &problem, method, rep).map(|rec| ((method, rep), rec)))
            .collect()
    };
    let mut results = match plan.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("worker pool")
            .install(run_all),
        None => run_all(),
    }?;
    results.sort_by_key(|((method, rep), _)| (method_index(*method), *rep));

    // audit: every record consumed its declared budget
    for ((method, rep), rec) in &results {
        let expected = match method {
            Method::Ga => plan.ga_population * plan.ga_generations,
            _ => rec.n_initial + plan.n_infill,
        };
        assert_eq!(
            rec.evaluations.len(),
            expected,
            "{method} repetition {rep} consumed {} evaluations, declared {expected}",
            rec.evaluations.len()
        );
    }

    write_artifacts(plan, &problem, &oracle, &results, output_dir)?;
    Ok(summarize(&problem, &oracle, &results))
}

fn method_index(m: Method) -> usize {
    METHOD_ORDER.iter().position(|&x| x == m).expect("known method")
}

fn oracle_for(plan: &CampaignPlan, problem: &Problem) -> OracleResult {
    benchmarks::oracle_optimum(problem, plan.oracle_resolution, 1000, 0)
}

/// Initial-design fingerprint: surrogate methods of one repetition must
/// share it exactly.
fn doe_hash(rec: &RunRecord) -> u64 {
    let mut bytes = Vec::new();
    for r in rec.evaluations.iter().take(rec.n_initial) {
        for &x in &r.point.x {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        for &z in &r.point.z {
            bytes.extend_from_slice(&(z as u64).to_le_bytes());
        }
    }
    fnv1a64(&bytes)
}

fn write_artifacts(
    plan: &CampaignPlan,
    problem: &Problem,
    oracle: &OracleResult,
    results: &[((Method, usize), RunRecord)],
    dir: &Path,
) -> Result<(), CampaignError> {
    fs::create_dir_all(dir.join("journal"))?;
    fs::create_dir_all(dir.join("convergence"))?;

    let config_text = serde_json::to_string_pretty(&plan.echo()).expect("static echo");
    fs::write(dir.join("config.json"), config_text + "\n")?;

    fs::write(dir.join("oracle.tsv"), oracle_to_line(oracle) + "\n")?;

    for ((method, rep), rec) in results {
        let path = dir.join("journal").join(format!("{}_rep{rep:03}.json", method.label()));
        let body = serde_json::to_string_pretty(rec).expect("record serializes");
        fs::write(path, body + "\n")?;
    }

    // initial-design fingerprints per repetition, surrogate methods only
    let mut doe_lines = vec!["repetition\tdoe_hash\tmethods".to_string()];
    for rep in 0..plan.repetitions {
        let hashes: Vec<(Method, u64)> = results
            .iter()
            .filter(|((m, r), _)| *r == rep && *m != Method::Ga)
            .map(|((m, _), rec)| (*m, doe_hash(rec)))
            .collect();
        if let Some((_, first)) = hashes.first() {
            for (m, h) in &hashes {
                assert_eq!(
                    h, first,
                    "repetition {rep}: initial design of {m} differs from {}",
                    hashes[0].0
                );
            }
            let methods =
                hashes.iter().map(|(m, _)| m.label()).collect::<Vec<_>>().join(",");
            doe_lines.push(format!("{rep}\t{first:016x}\t{methods}"));
        }
    }
    fs::write(dir.join("doe_hashes.tsv"), doe_lines.join("\n") + "\n")?;

    let rows = summarize(problem, oracle, results);
    fs::write(dir.join("summary.tsv"), summary_tsv(&rows))?;

    for &method in &plan.methods {
        let records: Vec<&RunRecord> = results
            .iter()
            .filter(|((m, _), _)| *m == method)
            .map(|(_, rec)| rec)
            .collect();
        let series = export_convergence(&records)?;
        let mut out = String::new();
        out.push_str("# incumbent (best feasible objective) vs infill index; index 0 = initial design only\n");
        out.push_str("infill\tmean\tmin\tmax\truns_with_incumbent\n");
        out.push_str(&series);
        fs::write(dir.join("convergence").join(format!("{}.tsv", method.label())), out)?;
    }
    Ok(())
}

/// Mean and min/max envelope of the incumbent trajectory across runs, one
/// line per infill index. Runs must share their budgets.
pub fn export_convergence(records: &[&RunRecord]) -> Result<String, CampaignError> {
    let Some(first) = records.first() else {
        return Ok(String::new());
    };
    let n_initial = first.n_initial;
    let total = first.evaluations.len();
    for rec in records {
        if rec.n_initial != n_initial || rec.evaluations.len() != total {
            return Err(CampaignError::MismatchedBudgets(format!(
                "runs disagree on budgets: {}+{} vs {}+{}",
                n_initial,
                total - n_initial,
                rec.n_initial,
                rec.evaluations.len() - rec.n_initial
            )));
        }
    }
    let mut out = String::new();
    for t in 0..=(total - n_initial) {
        let incumbents: Vec<f64> = records
            .iter()
            .filter_map(|rec| rec.incumbent_after(n_initial + t))
            .collect();
        if incumbents.is_empty() {
            out.push_str(&format!("{t}\tnan\tnan\tnan\t0\n"));
        } else {
            let mean = crate::util::mean(&incumbents);
            let lo = incumbents.iter().cloned().fold(f64::MAX, f64::min);
            let hi = incumbents.iter().cloned().fold(f64::MIN, f64::max);
            out.push_str(&format!("{t}\t{mean}\t{lo}\t{hi}\t{}\n", incumbents.len()));
        }
    }
    Ok(out)
}

/// Builds the paper-style summary rows, in canonical method order.
pub fn summarize(
    problem: &Problem,
    oracle: &OracleResult,
    results: &[((Method, usize), RunRecord)],
) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for &method in METHOD_ORDER.iter() {
        let records: Vec<&RunRecord> = results
            .iter()
            .filter(|((m, _), _)| *m == method)
            .map(|(_, rec)| rec)
            .collect();
        if records.is_empty() {
            continue;
        }
        let finals: Vec<(&RunRecord, Option<(usize, f64, Vec<f64>, usize)>)> = records
            .iter()
            .map(|rec| {
                let best = rec.final_best().map(|(i, r)| {
                    let category = problem
                        .space
                        .encode_category(&r.point.z)
                        .expect("recorded point in space");
                    (i, r.objective, r.constraints.clone(), category)
                });
                (*rec, best)
            })
            .collect();
        let values: Vec<f64> =
            finals.iter().filter_map(|(_, b)| b.as_ref().map(|b| b.1)).collect();
        let mean_final = crate::util::mean(&values);
        let dispersion = if values.is_empty() {
            f64::NAN
        } else {
            crate::util::sample_std(&values) / mean_final.abs().max(f64::MIN_POSITIVE) * 100.0
        };
        let mean_constraint = if method == Method::Ga {
            None
        } else {
            let cs: Vec<f64> = finals
                .iter()
                .filter_map(|(_, b)| b.as_ref())
                .map(|(_, _, g, _)| crate::util::mean(g))
                .collect();
            if cs.is_empty() {
                None
            } else {
                Some(crate::util::mean(&cs))
            }
        };
        let correct = finals
            .iter()
            .filter_map(|(_, b)| b.as_ref())
            .filter(|(_, _, _, c)| oracle.feasible && *c == oracle.category)
            .count();
        let hyperparameters = match method {
            Method::Cw => format!("{}/category", 2 * problem.space.continuous_dim()),
            Method::Ga => "[-]".to_string(),
            m => hyperparameter_count(m.spec_kind().expect("surrogate"), &problem.space)
                .to_string(),
        };
        rows.push(SummaryRow {
            method,
            repetitions: records.len(),
            feasible_runs: values.len(),
            mean_final,
            dispersion_pct: dispersion,
            mean_constraint,
            optima_in_oracle_category: correct,
            hyperparameters,
            evaluations_per_run: records[0].evaluations.len(),
        });
    }
    rows
}

/// Renders summary rows as a TSV table with explanatory headers.
pub fn summary_tsv(rows: &[SummaryRow]) -> String {
    let mut out = String::new();
    out.push_str("# dispersion = sample standard deviation / |mean| * 100\n");
    out.push_str(
        "# constraint column: declared-convention value at each run's final incumbent, averaged over feasible runs ([-] for GA)\n",
    );
    out.push_str(
        "method\trepetitions\tfeasible_runs\tmean_final\tdispersion_pct\tmean_constraint\toptima_in_oracle_category\thyperparameters\tevals_per_run\n",
    );
    for row in rows {
        let constraint = row
            .mean_constraint
            .map_or("[-]".to_string(), |v| v.to_string());
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            row.method.label(),
            row.repetitions,
            row.feasible_runs,
            row.mean_final,
            row.dispersion_pct,
            constraint,
            row.optima_in_oracle_category,
            row.hyperparameters,
            row.evaluations_per_run,
        ));
    }
    out
}

/// Reloads a finished campaign directory and rebuilds its summary rows.
pub fn summarize_dir(dir: &Path) -> Result<Vec<SummaryRow>, CampaignError> {
    let config: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("config.json"))?)?;
    let benchmark = config["benchmark"].as_str().unwrap_or_default().to_string();
    let problem = benchmarks::by_name(&benchmark)?;
    let oracle_line = fs::read_to_string(dir.join("oracle.tsv"))?;
    let oracle = oracle_from_line(oracle_line.trim_end())?;

    let mut results: Vec<((Method, usize), RunRecord)> = Vec::new();
    let mut entries: Vec<PathBuf> = fs::read_dir(dir.join("journal"))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for path in entries {
        let rec: RunRecord = serde_json::from_str(&fs::read_to_string(&path)?)?;
        let method = Method::from_name(&rec.method)
            .ok_or_else(|| CampaignError::MismatchedBudgets(format!("unknown method in {path:?}")))?;
        let rep = results.iter().filter(|((m, _), _)| *m == method).count();
        results.push(((method, rep), rec));
    }
    results.sort_by_key(|((m, r), _)| (method_index(*m), *r));
    Ok(summarize(&problem, &oracle, &results))
}

/// Writes `summary.tsv` content to the given writer (stdout for the CLI).
pub fn print_summary<W: std::io::Write>(rows: &[SummaryRow], mut w: W) -> std::io::Result<()> {
    w.write_all(summary_tsv(rows).as_bytes())
}
