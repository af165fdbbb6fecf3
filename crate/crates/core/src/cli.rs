//! Batch pipelines behind the command-line tool and the files they write.
//!
//! Every CSV starts with `#! ` comment lines holding the mode, the full
//! config (`#! config key = value`) and, for simulation runs, the run
//! options (`#! run key = value`). Every JSON file carries `config` and
//! `run` fields. Any of these files can be passed back as `--config` to
//! reproduce the run.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    d2d_assoc_prob, d2d_group_user_intensity, ssr_count_intensity, subset_split, users_per_bs_dist,
    SubsetSplit, Tier,
};
use crate::model::{config_warnings, validated, ScenarioConfig, ZipfLaw};
use crate::mqueue::{bs_delay_pmf, bs_queue_length_pmf, bs_stable_mass, MixturePmf, MIXTURE_TAIL};
use crate::pmf::DiscretePmf;
use crate::priority::{
    d2d_delay_pmf, d2d_queue_length_pmf, d2d_stable_mass, heavy_load_dist, MARGINAL_TAIL,
};
use crate::sim::{run_replications, ClassMetrics, MetricsReport, NodeClass, SimOptions};

const SNAPSHOT: &str = "#! ";

/// TV tolerance for BS queue-length and delay comparisons.
pub const BS_TOLERANCE: f64 = 0.05;
/// TV tolerance for the D2D delay comparison.
pub const D2D_TOLERANCE: f64 = 0.07;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Analytic,
    Simulate,
    Compare,
    Sweep,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Analytic => "analytic",
            Mode::Simulate => "simulate",
            Mode::Compare => "compare",
            Mode::Sweep => "sweep",
        }
    }
}

/// Written last as `manifest.json`; the only artifact that records timing.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub mode: Mode,
    pub config: ScenarioConfig,
    pub run: Option<SimOptions>,
    pub seed: u64,
    /// How replication random streams derive from the seed.
    pub seed_streams: String,
    pub outputs: Vec<PathBuf>,
    pub wall_clock_seconds: f64,
    pub version: String,
}

/// A config read from a config file or from a previous artifact.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedConfig {
    pub config: ScenarioConfig,
    /// Run options embedded in the artifact, if any.
    pub run: Option<SimOptions>,
}

/// Reads a `key = value` config file, a CSV artifact or a JSON artifact.
pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    if path.extension().is_some_and(|e| e == "json") {
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let config = match value.get("config") {
            Some(c) => serde_json::from_value(c.clone())?,
            None => serde_json::from_value(value.clone())?,
        };
        let run = match value.get("run") {
            Some(r) if !r.is_null() => Some(serde_json::from_value(r.clone())?),
            _ => None,
        };
        return Ok(LoadedConfig { config, run });
    }
    let mut kv = String::new();
    let mut run_lines = Vec::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("#! config ") {
            kv.push_str(rest);
            kv.push('\n');
        } else if let Some(rest) = line.strip_prefix("#! run ") {
            run_lines.push(rest.to_string());
        }
    }
    if kv.is_empty() {
        return Ok(LoadedConfig {
            config: ScenarioConfig::from_kv_str(&text)?,
            run: None,
        });
    }
    let run = if run_lines.is_empty() {
        None
    } else {
        Some(parse_run_lines(&run_lines)?)
    };
    Ok(LoadedConfig {
        config: ScenarioConfig::from_kv_str(&kv)?,
        run,
    })
}

fn parse_run_lines(lines: &[String]) -> Result<SimOptions> {
    let mut opts = SimOptions::default();
    for (i, line) in lines.iter().enumerate() {
        let bad = |msg: String| Error::Parse { line: i + 1, msg };
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("expected `key = value`, got `{line}`")))?;
        let v = v.trim();
        match k.trim() {
            "slots" => opts.slots = v.parse().map_err(|e| bad(format!("slots: {e}")))?,
            "replications" => {
                opts.replications = v.parse().map_err(|e| bad(format!("replications: {e}")))?
            }
            "warmup_fraction" => {
                opts.warmup_fraction = v
                    .parse()
                    .map_err(|e| bad(format!("warmup_fraction: {e}")))?
            }
            other => return Err(bad(format!("unknown run option `{other}`"))),
        }
    }
    Ok(opts)
}

fn header(
    mode: Mode,
    cfg: &ScenarioConfig,
    run: Option<&SimOptions>,
    extra: &[(&str, String)],
) -> String {
    let mut out = format!("{SNAPSHOT}mode = {}\n", mode.name());
    for line in cfg.to_kv_string().lines() {
        let _ = writeln!(out, "{SNAPSHOT}config {line}");
    }
    if let Some(r) = run {
        let _ = writeln!(out, "{SNAPSHOT}run slots = {}", r.slots);
        let _ = writeln!(out, "{SNAPSHOT}run replications = {}", r.replications);
        let _ = writeln!(out, "{SNAPSHOT}run warmup_fraction = {}", r.warmup_fraction);
    }
    for (k, v) in extra {
        let _ = writeln!(out, "{SNAPSHOT}{k} = {v}");
    }
    out
}

/// Writes through a temporary file in the same directory and renames it
/// into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    mode: Mode,
    config: &'a ScenarioConfig,
    run: Option<&'a SimOptions>,
    #[serde(flatten)]
    body: &'a T,
}

fn json_artifact<T: Serialize>(
    mode: Mode,
    cfg: &ScenarioConfig,
    run: Option<&SimOptions>,
    body: &T,
) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&Envelope {
        mode,
        config: cfg,
        run,
        body,
    })?;
    s.push('\n');
    Ok(s)
}

struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        write_atomic(&path, contents)?;
        self.written.push(path);
        Ok(())
    }

    fn finish(
        mut self,
        mode: Mode,
        cfg: &ScenarioConfig,
        run: Option<&SimOptions>,
        started: Instant,
    ) -> Result<Vec<PathBuf>> {
        let manifest_path = self.dir.join("manifest.json");
        self.written.push(manifest_path.clone());
        let manifest = RunManifest {
            mode,
            config: cfg.clone(),
            run: run.cloned(),
            seed: cfg.seed,
            seed_streams:
                "ChaCha8 seeded with `seed`; replication r uses streams 3r (deployment), \
                           3r+1 (traffic), 3r+2 (fading); every sweep point reuses them"
                    .into(),
            outputs: self.written.clone(),
            wall_clock_seconds: started.elapsed().as_secs_f64(),
            version: env!("CARGO_PKG_VERSION").into(),
        };
        let mut s = serde_json::to_string_pretty(&manifest)?;
        s.push('\n');
        write_atomic(&manifest_path, &s)?;
        Ok(self.written)
    }
}

fn checked(cfg: &ScenarioConfig) -> Result<ScenarioConfig> {
    let cfg = validated(cfg)?;
    for w in config_warnings(&cfg) {
        warn!("{w}");
    }
    Ok(cfg)
}

fn pmf_rows(out: &mut String, prefix: &str, metric: &str, pmf: &DiscretePmf) {
    for (n, p) in pmf.mass().iter().enumerate() {
        let _ = writeln!(out, "{prefix},{metric},{n},{p:e}");
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubsetSummary {
    pub cache_hit: f64,
    /// Probability that a non-caching user prefers its nearest D2D transmitter.
    pub d2d_assoc_prob: f64,
    pub split: SubsetSplit,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Intensities {
    /// Intensity of users served by BSs.
    pub bs_users: f64,
    /// Mean number of BSs sensed by a D2D transmitter.
    pub bs_in_ssr: f64,
    /// Mean number of D2D transmitters sensed by a D2D transmitter.
    pub d2d_in_ssr: f64,
    /// Mean number of D2D-served users in a group's sensing region.
    pub group_users: f64,
}

/// Everything the analytic pipeline computes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnalyticSummary {
    pub subsets: SubsetSummary,
    pub intensities: Intensities,
    pub users_per_bs: DiscretePmf,
    pub heavy_load: DiscretePmf,
    pub bs_queue: MixturePmf,
    pub bs_delay: MixturePmf,
    pub d2d_queue: MixturePmf,
    pub d2d_delay: MixturePmf,
}

impl AnalyticSummary {
    pub fn compute(cfg: &ScenarioConfig) -> Result<Self> {
        let cfg = validated(cfg)?;
        let split = subset_split(&cfg)?;
        let bs_users = split.p_bs * cfg.lambda_user;
        info!("analytic: BS mixtures");
        let bs_queue = bs_queue_length_pmf(&cfg)?;
        let bs_delay = bs_delay_pmf(&cfg)?;
        info!("analytic: D2D mixtures");
        let d2d_queue = d2d_queue_length_pmf(&cfg)?;
        let d2d_delay = d2d_delay_pmf(&cfg)?;
        Ok(AnalyticSummary {
            subsets: SubsetSummary {
                cache_hit: ZipfLaw::new(cfg.zipf_exponent, cfg.library_size)?
                    .cache_hit(cfg.cache_size),
                d2d_assoc_prob: d2d_assoc_prob(&cfg),
                split,
            },
            intensities: Intensities {
                bs_users,
                bs_in_ssr: ssr_count_intensity(Tier::Bs, &cfg),
                d2d_in_ssr: ssr_count_intensity(Tier::D2d, &cfg),
                group_users: d2d_group_user_intensity(&cfg)?,
            },
            users_per_bs: users_per_bs_dist(bs_users, cfg.lambda_bs, MIXTURE_TAIL)?,
            heavy_load: heavy_load_dist(&cfg, MARGINAL_TAIL)?.pmf,
            bs_queue,
            bs_delay,
            d2d_queue,
            d2d_delay,
        })
    }
}

fn mixture_header(m: &MixturePmf) -> Vec<(&'static str, String)> {
    vec![
        ("stable_mass", format!("{}", m.stable_mass)),
        ("degenerate", format!("{}", m.degenerate)),
        ("conditioning", m.conditioning.clone()),
    ]
}

/// Writes `subsets.csv`, `users_per_bs.csv`, `ssr_intensities.csv`,
/// `bs_pmfs.csv`, `d2d_pmfs.csv`, `analytic.json` and `manifest.json`.
pub fn cmd_analytic(cfg: &ScenarioConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let started = Instant::now();
    let cfg = checked(cfg)?;
    let a = AnalyticSummary::compute(&cfg)?;
    let mode = Mode::Analytic;
    let mut out = Outputs::new(out_dir)?;

    let mut s = header(mode, &cfg, None, &[]);
    s.push_str("quantity,value\n");
    let sp = &a.subsets;
    for (k, v) in [
        ("cache_hit", sp.cache_hit),
        ("d2d_assoc_prob", sp.d2d_assoc_prob),
        ("p_local", sp.split.p_local),
        ("p_d2d", sp.split.p_d2d),
        ("p_bs", sp.split.p_bs),
    ] {
        let _ = writeln!(s, "{k},{v}");
    }
    out.write("subsets.csv", &s)?;

    let mut s = header(
        mode,
        &cfg,
        None,
        &[("bs_users", format!("{}", a.intensities.bs_users))],
    );
    s.push_str(&a.users_per_bs.to_csv());
    out.write("users_per_bs.csv", &s)?;

    let mut s = header(mode, &cfg, None, &[]);
    s.push_str("quantity,value\n");
    let it = &a.intensities;
    for (k, v) in [
        ("bs_in_ssr", it.bs_in_ssr),
        ("d2d_in_ssr", it.d2d_in_ssr),
        ("group_users", it.group_users),
    ] {
        let _ = writeln!(s, "{k},{v}");
    }
    out.write("ssr_intensities.csv", &s)?;

    for (name, class, queue, delay) in [
        ("bs_pmfs.csv", "bs", &a.bs_queue, &a.bs_delay),
        ("d2d_pmfs.csv", "d2d", &a.d2d_queue, &a.d2d_delay),
    ] {
        let mut s = header(mode, &cfg, None, &mixture_header(queue));
        s.push_str("class,metric,n,value\n");
        pmf_rows(&mut s, class, "queue", &queue.pmf);
        pmf_rows(&mut s, class, "delay", &delay.pmf);
        out.write(name, &s)?;
    }
    if a.d2d_delay.degenerate {
        warn!("alpha = 0 leaves no D2D traffic; D2D outputs are degenerate");
    }
    out.write("analytic.json", &json_artifact(mode, &cfg, None, &a)?)?;
    out.finish(mode, &cfg, None, started)
}

/// Per-class simulation results without the per-node list.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub bs: ClassMetrics,
    pub d2d: ClassMetrics,
    pub replications: usize,
    pub subset_counts: [u64; 3],
    pub generated: u64,
    pub served: u64,
    pub backlog: u64,
}

impl From<&MetricsReport> for SimulationSummary {
    fn from(r: &MetricsReport) -> Self {
        SimulationSummary {
            bs: r.bs.clone(),
            d2d: r.d2d.clone(),
            replications: r.replications,
            subset_counts: r.subset_counts,
            generated: r.generated,
            served: r.served,
            backlog: r.backlog,
        }
    }
}

fn sim_pmf_rows(out: &mut String, prefix: &str, m: &ClassMetrics) {
    if let Ok(p) = m.queue_pmf() {
        pmf_rows(out, prefix, "queue", &p);
    }
    if let Ok(p) = m.delay_pmf() {
        pmf_rows(out, prefix, "delay", &p);
    }
}

/// Writes `sim_pmfs.csv`, `sim_steady.csv`, `simulation.json` and
/// `manifest.json`.
pub fn cmd_simulate(
    cfg: &ScenarioConfig,
    out_dir: &Path,
    options: &SimOptions,
) -> Result<Vec<PathBuf>> {
    let started = Instant::now();
    let cfg = checked(cfg)?;
    let report = run_replications(&cfg, options)?;
    let mode = Mode::Simulate;
    let run = Some(options);
    let mut out = Outputs::new(out_dir)?;

    let mut s = header(mode, &cfg, run, &[]);
    s.push_str("class,metric,n,value\n");
    for class in [NodeClass::Bs, NodeClass::D2d] {
        sim_pmf_rows(&mut s, class.name(), report.class(class));
    }
    out.write("sim_pmfs.csv", &s)?;

    let mut s = header(mode, &cfg, run, &[]);
    s.push_str("class,steady_fraction,ci\n");
    for class in [NodeClass::Bs, NodeClass::D2d] {
        let m = report.class(class);
        let _ = writeln!(s, "{},{},{}", class.name(), m.steady_fraction, m.half_width);
    }
    out.write("sim_steady.csv", &s)?;

    let summary = SimulationSummary::from(&report);
    out.write(
        "simulation.json",
        &json_artifact(mode, &cfg, run, &summary)?,
    )?;
    out.finish(mode, &cfg, run, started)
}

/// One analytic-versus-simulation distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub distribution: String,
    pub tv_distance: Option<f64>,
    pub tolerance: Option<f64>,
    /// `pass`, `fail`, `report` (no tolerance applies) or `skipped`.
    pub status: String,
}

impl Comparison {
    fn new(
        name: &str,
        analytic: &DiscretePmf,
        simulated: Result<DiscretePmf>,
        tolerance: Option<f64>,
    ) -> Self {
        let Ok(sim) = simulated else {
            return Self::skipped(name);
        };
        let tv = analytic.total_variation(&sim);
        let status = match tolerance {
            Some(t) if tv <= t => "pass",
            Some(_) => "fail",
            None => "report",
        };
        Comparison {
            distribution: name.into(),
            tv_distance: Some(tv),
            tolerance,
            status: status.into(),
        }
    }

    fn skipped(name: &str) -> Self {
        Comparison {
            distribution: name.into(),
            tv_distance: None,
            tolerance: None,
            status: "skipped".into(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompareSummary {
    pub comparisons: Vec<Comparison>,
    pub notices: Vec<String>,
    pub analytic: AnalyticSummary,
    pub baseline_bs_queue: MixturePmf,
    pub baseline_bs_delay: MixturePmf,
    pub simulation: SimulationSummary,
    pub baseline_simulation: SimulationSummary,
}

/// Runs both pipelines for the configured system and its cache-free
/// baseline. Analytic and simulated delays share the same convention
/// (service slot minus arrival slot, at least one), so no offset is applied.
pub fn compare(cfg: &ScenarioConfig, options: &SimOptions) -> Result<CompareSummary> {
    let cfg = checked(cfg)?;
    let base_cfg = cfg.baseline();
    let analytic = AnalyticSummary::compute(&cfg)?;
    let (baseline_bs_queue, baseline_bs_delay) = if cfg.alpha == 0.0 {
        (analytic.bs_queue.clone(), analytic.bs_delay.clone())
    } else {
        (bs_queue_length_pmf(&base_cfg)?, bs_delay_pmf(&base_cfg)?)
    };
    info!("compare: simulating");
    let sim = run_replications(&cfg, options)?;
    let base_sim = if cfg.alpha == 0.0 {
        sim.clone()
    } else {
        run_replications(&base_cfg, options)?
    };

    let mut notices = Vec::new();
    let mut comparisons = vec![
        Comparison::new(
            "bs_queue",
            &analytic.bs_queue.pmf,
            sim.bs.queue_pmf(),
            Some(BS_TOLERANCE),
        ),
        Comparison::new(
            "bs_delay",
            &analytic.bs_delay.pmf,
            sim.bs.delay_pmf(),
            Some(BS_TOLERANCE),
        ),
    ];
    if analytic.d2d_delay.degenerate {
        notices.push("alpha = 0: no D2D traffic, D2D comparisons skipped".to_string());
        comparisons.push(Comparison::skipped("d2d_delay"));
        comparisons.push(Comparison::skipped("d2d_queue"));
    } else {
        comparisons.push(Comparison::new(
            "d2d_delay",
            &analytic.d2d_delay.pmf,
            sim.d2d.delay_pmf(),
            Some(D2D_TOLERANCE),
        ));
        // The analytic queue is per group, the simulated one per transmitter.
        comparisons.push(Comparison::new(
            "d2d_queue",
            &analytic.d2d_queue.pmf,
            sim.d2d.queue_pmf(),
            None,
        ));
    }
    comparisons.push(Comparison::new(
        "baseline_bs_queue",
        &baseline_bs_queue.pmf,
        base_sim.bs.queue_pmf(),
        Some(BS_TOLERANCE),
    ));
    comparisons.push(Comparison::new(
        "baseline_bs_delay",
        &baseline_bs_delay.pmf,
        base_sim.bs.delay_pmf(),
        Some(BS_TOLERANCE),
    ));
    for c in &comparisons {
        if c.status == "skipped" && !analytic.d2d_delay.degenerate {
            notices.push(format!(
                "{}: no simulated samples, comparison skipped",
                c.distribution
            ));
        }
    }
    Ok(CompareSummary {
        comparisons,
        notices,
        analytic,
        baseline_bs_queue,
        baseline_bs_delay,
        simulation: SimulationSummary::from(&sim),
        baseline_simulation: SimulationSummary::from(&base_sim),
    })
}

/// Writes `compare.csv`, `compare_pmfs.csv`, `compare.json` and
/// `manifest.json`.
pub fn cmd_compare(
    cfg: &ScenarioConfig,
    out_dir: &Path,
    options: &SimOptions,
) -> Result<Vec<PathBuf>> {
    let started = Instant::now();
    let cfg = checked(cfg)?;
    let summary = compare(&cfg, options)?;
    for n in &summary.notices {
        eprintln!("notice: {n}");
    }
    let mode = Mode::Compare;
    let run = Some(options);
    let mut out = Outputs::new(out_dir)?;

    let mut s = header(mode, &cfg, run, &[]);
    s.push_str("distribution,tv_distance,tolerance,status\n");
    let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    for c in &summary.comparisons {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            c.distribution,
            opt(c.tv_distance),
            opt(c.tolerance),
            c.status
        );
    }
    out.write("compare.csv", &s)?;

    let mut s = header(mode, &cfg, run, &[]);
    s.push_str("class,source,metric,n,value\n");
    let a = &summary.analytic;
    let mut rows = |class: &str, queue: &MixturePmf, delay: &MixturePmf, sim: &ClassMetrics| {
        let prefix = format!("{class},analytic");
        pmf_rows(&mut s, &prefix, "queue", &queue.pmf);
        pmf_rows(&mut s, &prefix, "delay", &delay.pmf);
        sim_pmf_rows(&mut s, &format!("{class},simulation"), sim);
    };
    rows("bs", &a.bs_queue, &a.bs_delay, &summary.simulation.bs);
    if !a.d2d_delay.degenerate {
        rows("d2d", &a.d2d_queue, &a.d2d_delay, &summary.simulation.d2d);
    }
    rows(
        "baseline_bs",
        &summary.baseline_bs_queue,
        &summary.baseline_bs_delay,
        &summary.baseline_simulation.bs,
    );
    out.write("compare_pmfs.csv", &s)?;

    out.write("compare.json", &json_artifact(mode, &cfg, run, &summary)?)?;
    out.finish(mode, &cfg, run, started)
}

/// Which pipelines a sweep runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepSource {
    Analytic,
    Simulation,
    Both,
}

impl SweepSource {
    fn analytic(self) -> bool {
        self != SweepSource::Simulation
    }

    fn simulation(self) -> bool {
        self != SweepSource::Analytic
    }
}

/// One `sweep.csv` row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: String,
    pub value: String,
    /// `proposed` or `baseline`.
    pub system: String,
    pub class: String,
    /// `analytic` or `simulation`.
    pub source: String,
    pub steady_fraction: f64,
    /// 95% half-width; 0 for analytic rows.
    pub ci: f64,
}

/// Expands `a..b step s`, `a..b:s` or a comma/space separated list.
pub fn parse_values(spec: &str) -> Result<Vec<String>> {
    let spec = spec.trim();
    let bad = |msg: String| Error::Parse { line: 1, msg };
    if let Some((lo, rest)) = spec.split_once("..") {
        let (hi, step) = if let Some((h, s)) = rest.split_once("step") {
            (h, s)
        } else if let Some((h, s)) = rest.split_once(':') {
            (h, s)
        } else {
            return Err(bad(format!("range `{spec}` needs a step (`a..b step s`)")));
        };
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| bad(format!("`{}`: {e}", s.trim())))
        };
        let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
        if !(step > 0.0) || !(hi >= lo) {
            return Err(bad(format!("empty range `{spec}`")));
        }
        let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        return Ok((0..n)
            .map(|i| {
                // Round away binary noise such as 0.30000000000000004.
                let v: f64 = format!("{:.12}", lo + i as f64 * step)
                    .parse()
                    .expect("formatted float");
                format!("{v}")
            })
            .collect());
    }
    let values: Vec<String> = spec
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect();
    if values.is_empty() {
        return Err(bad("no sweep values".into()));
    }
    Ok(values)
}

/// Steady fractions for every value of `param`, for the configured system
/// and its cache-free baseline. All points share the config seed, so the
/// simulated points see the same deployments and traffic draws.
pub fn sweep(
    cfg: &ScenarioConfig,
    param: &str,
    values: &[String],
    options: &SimOptions,
    source: SweepSource,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for value in values {
        let mut point = cfg.clone();
        point.set_param(param, value)?;
        let point = validated(&point)?;
        info!("sweep: {param} = {value}");
        for (system, sys_cfg) in [("proposed", point.clone()), ("baseline", point.baseline())] {
            let mut push = |class: NodeClass, source: &str, fraction: f64, ci: f64| {
                rows.push(SweepRow {
                    param: param.into(),
                    value: value.clone(),
                    system: system.into(),
                    class: class.name().into(),
                    source: source.into(),
                    steady_fraction: fraction,
                    ci,
                });
            };
            let classes: &[NodeClass] = if system == "proposed" {
                &[NodeClass::Bs, NodeClass::D2d]
            } else {
                &[NodeClass::Bs]
            };
            if source.analytic() {
                for &class in classes {
                    let f = match class {
                        NodeClass::Bs => bs_stable_mass(&sys_cfg)?,
                        NodeClass::D2d => d2d_stable_mass(&sys_cfg)?,
                    };
                    push(class, "analytic", f, 0.0);
                }
            }
            if source.simulation() {
                let report = run_replications(&sys_cfg, options)?;
                for &class in classes {
                    let m = report.class(class);
                    push(class, "simulation", m.steady_fraction, m.half_width);
                }
            }
        }
    }
    Ok(rows)
}

/// Writes `sweep.csv`, `sweep.json` and `manifest.json`.
pub fn cmd_sweep(
    cfg: &ScenarioConfig,
    out_dir: &Path,
    param: &str,
    values: &[String],
    options: &SimOptions,
    source: SweepSource,
) -> Result<Vec<PathBuf>> {
    let started = Instant::now();
    let cfg = checked(cfg)?;
    // Fail on an unknown parameter before any work.
    cfg.clone()
        .set_param(param, values.first().map_or("0", String::as_str))?;
    let rows = sweep(&cfg, param, values, options, source)?;
    let mode = Mode::Sweep;
    let run = source.simulation().then_some(options);
    let extra = [
        ("param", param.to_string()),
        ("values", values.join(",")),
        ("source", format!("{source:?}").to_lowercase()),
    ];
    let mut out = Outputs::new(out_dir)?;
    let mut s = header(mode, &cfg, run, &extra);
    s.push_str("param,value,system,class,source,steady_fraction,ci\n");
    for r in &rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.param, r.value, r.system, r.class, r.source, r.steady_fraction, r.ci
        );
    }
    out.write("sweep.csv", &s)?;

    #[derive(Serialize)]
    struct Body<'a> {
        param: &'a str,
        values: &'a [String],
        source: SweepSource,
        rows: &'a [SweepRow],
    }
    let body = Body {
        param,
        values,
        source,
        rows: &rows,
    };
    out.write("sweep.json", &json_artifact(mode, &cfg, run, &body)?)?;
    out.finish(mode, &cfg, run, started)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_values_are_counted_inclusively() {
        let v = parse_values("0.01..0.15 step 0.01").unwrap();
        assert_eq!(v.len(), 15);
        assert_eq!(v[0], "0.01");
        assert_eq!(v[2], "0.03");
        assert_eq!(v[14], "0.15");
        assert_eq!(parse_values("0..1:0.5").unwrap(), vec!["0", "0.5", "1"]);
    }

    #[test]
    fn list_values() {
        assert_eq!(
            parse_values("0, 0.2,0.5 0.8").unwrap(),
            vec!["0", "0.2", "0.5", "0.8"]
        );
        assert!(parse_values("").is_err());
        assert!(parse_values("1..2").is_err());
        assert!(parse_values("2..1 step 0.1").is_err());
    }

    #[test]
    fn header_round_trips_config_and_run() {
        let mut cfg = ScenarioConfig::reference_defaults();
        cfg.alpha = 0.3;
        cfg.seed = 99;
        let run = SimOptions {
            slots: 1234,
            replications: 3,
            warmup_fraction: 0.25,
            trace: false,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        write_atomic(
            &path,
            &format!(
                "{}a,b\n1,2\n",
                header(Mode::Simulate, &cfg, Some(&run), &[])
            ),
        )
        .unwrap();
        let loaded = load_config(&path).unwrap();
        assert_eq!(loaded.config, cfg);
        assert_eq!(loaded.run, Some(run));
    }

    #[test]
    fn json_artifact_round_trips() {
        let cfg = ScenarioConfig::reference_defaults();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.json");
        write_atomic(
            &path,
            &json_artifact(Mode::Analytic, &cfg, None, &serde_json::json!({"k": 1})).unwrap(),
        )
        .unwrap();
        let loaded = load_config(&path).unwrap();
        assert_eq!(loaded.config, cfg);
        assert_eq!(loaded.run, None);
    }

    #[test]
    fn atomic_write_leaves_no_temp_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.txt");
        write_atomic(&path, "one").unwrap();
        write_atomic(&path, "two").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
