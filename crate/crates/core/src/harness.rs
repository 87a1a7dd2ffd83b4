//! Batch entry points shared by the command-line tool, the benchmarks and
//! the acceptance tests: single runs, planning-rate benchmarks and the
//! object-by-planner success table.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::scenario::{self, Scenario, ScenarioFile};
use crate::scenes::{InitialPose, ObjectKind};
use crate::sim::{self, evaluate_trace, PlannerKind, Summary, Trace};

/// Prefix that selects a built-in scene instead of a file.
pub const BUILTIN_PREFIX: &str = "builtin:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Planner called synchronously every few control steps; reproducible.
    Deterministic,
    /// Integrator and planner on separate threads in wall-clock time.
    Realtime,
}

/// One command's worth of inputs. Every CLI result is reproducible from
/// this alone.
#[derive(Debug, Clone)]
pub struct RunSpec {
    /// Scenario file, or `builtin:<name>`.
    pub scenario: String,
    pub planner: Option<PlannerKind>,
    pub overrides: Vec<(String, Value)>,
    pub out_dir: Option<PathBuf>,
    pub repetitions: usize,
    /// Replaces the scenario seed; repetition `k` uses `seed + k`.
    pub seed: Option<u64>,
    pub mode: Mode,
    pub jobs: usize,
}

impl RunSpec {
    pub fn new(scenario: impl Into<String>) -> Self {
        RunSpec {
            scenario: scenario.into(),
            planner: None,
            overrides: Vec::new(),
            out_dir: None,
            repetitions: 1,
            seed: None,
            mode: Mode::Deterministic,
            jobs: 1,
        }
    }

    pub fn builtin(name: &str) -> Self {
        Self::new(format!("{BUILTIN_PREFIX}{name}"))
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        if !self.scenario.starts_with(BUILTIN_PREFIX) && !Path::new(&self.scenario).is_file() {
            return Err(Error::Scenario(format!(
                "scenario file {:?} does not exist",
                self.scenario
            )));
        }
        Ok(())
    }

    /// Builds repetition `rep`, seeded with the base seed (the `RunSpec`
    /// seed, else the file's) plus `rep`.
    pub fn load(&self, rep: usize) -> Result<Scenario> {
        let mut overrides = self.overrides.clone();
        if let Some(p) = self.planner {
            overrides.push(("planner".into(), Value::from(p.to_string())));
        }
        let (file, base) = match self.scenario.strip_prefix(BUILTIN_PREFIX) {
            Some(name) => (scenario::builtin_scenario(name, 0), PathBuf::from(".")),
            None => {
                let path = Path::new(&self.scenario);
                let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
                (ScenarioFile::load(path)?, base)
            }
        };
        let seed = self.seed.unwrap_or(file.seed) + rep as u64;
        file.build(&base, &overrides, Some(seed))
    }
}

pub fn run_scenario(sc: &Scenario, mode: Mode) -> Result<Trace> {
    match mode {
        Mode::Deterministic => sim::run_episode(&sc.scene, &sc.model, &sc.params),
        Mode::Realtime => sim::run_episode_realtime(&sc.scene, &sc.model, &sc.params),
    }
}

/// Runs `f(0..n)` on up to `jobs` threads; results come back in index
/// order. Stops handing out work after the first error.
pub fn parallel_map<T: Send>(
    n: usize,
    jobs: usize,
    f: impl Fn(usize) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<T>>>> = Mutex::new((0..n).map(|_| None).collect());
    let failed = std::sync::atomic::AtomicBool::new(false);
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, n.max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n || failed.load(Ordering::Relaxed) {
                    break;
                }
                let r = f(i);
                if r.is_err() {
                    failed.store(true, Ordering::Relaxed);
                }
                slots.lock().expect("no panics while holding the lock")[i] = Some(r);
            });
        }
    });
    let slots = slots.into_inner().expect("workers joined");
    let mut out = Vec::with_capacity(n);
    for r in slots {
        match r {
            Some(r) => out.push(r?),
            None => continue,
        }
    }
    if out.len() < n {
        return Err(Error::Config("batch aborted".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub mode: Mode,
    pub episodes: Vec<Summary>,
    pub successes: usize,
}

impl RunReport {
    pub fn all_succeeded(&self) -> bool {
        self.successes == self.episodes.len()
    }
}

/// Runs every repetition; with an output directory, writes each trace to
/// `<out>/rep_<k>/` (or `<out>/` for a single run) plus `summary.json`.
pub fn run(spec: &RunSpec) -> Result<RunReport> {
    spec.validate()?;
    let episodes = parallel_map(spec.repetitions, spec.jobs, |rep| {
        let sc = spec.load(rep)?;
        let trace = run_scenario(&sc, spec.mode)?;
        if let Some(dir) = &spec.out_dir {
            let d = if spec.repetitions == 1 {
                dir.clone()
            } else {
                dir.join(format!("rep_{rep}"))
            };
            trace.write_dir(&d)?;
        }
        Ok(evaluate_trace(&trace))
    })?;
    let report = RunReport {
        scenario: spec.scenario.clone(),
        mode: spec.mode,
        successes: episodes.iter().filter(|s| s.success).count(),
        episodes,
    };
    if let Some(dir) = &spec.out_dir {
        write_json(&dir.join("summary.json"), &report)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub scene: String,
    pub planner: String,
    pub mode: Mode,
    pub episodes: usize,
    pub ticks: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
    /// Ticks longer than the planning period.
    pub overruns: usize,
    pub planning_period_ms: f64,
}

/// Repeats the scenario (at least `spec.repetitions` times) until
/// `min_ticks` planning ticks have been timed. Runs sequentially so the
/// timings are not disturbed by sibling episodes.
pub fn bench(spec: &RunSpec, min_ticks: usize) -> Result<BenchReport> {
    spec.validate()?;
    let mut times = Vec::new();
    let mut episodes = 0;
    let mut scene = String::new();
    let mut planner = String::new();
    let mut period = 0.0;
    while episodes < spec.repetitions || times.len() < min_ticks {
        let sc = spec.load(episodes)?;
        let trace = run_scenario(&sc, spec.mode)?;
        if trace.tick_wall_times.is_empty() {
            return Err(Error::Scenario("episode produced no planning ticks".into()));
        }
        times.extend(trace.tick_wall_times.iter().map(|t| t * 1e3));
        scene = trace.scene;
        planner = trace.planner;
        period = trace.planning_period * 1e3;
        episodes += 1;
    }
    let report = BenchReport {
        scene,
        planner,
        mode: spec.mode,
        episodes,
        ticks: times.len(),
        mean_ms: times.iter().sum::<f64>() / times.len() as f64,
        p50_ms: sim::percentile(&times, 50.0),
        p95_ms: sim::percentile(&times, 95.0),
        max_ms: times.iter().copied().fold(0.0, f64::max),
        overruns: times.iter().filter(|&&t| t > period).count(),
        planning_period_ms: period,
    };
    if let Some(dir) = &spec.out_dir {
        write_json(&dir.join("bench.json"), &report)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub object: String,
    pub linear_successes: usize,
    pub ours_successes: usize,
    pub episodes_per_planner: usize,
}

impl Table1Row {
    pub fn rate(&self, planner: PlannerKind) -> f64 {
        let k = match planner {
            PlannerKind::Ours => self.ours_successes,
            PlannerKind::Linear => self.linear_successes,
        };
        100.0 * k as f64 / self.episodes_per_planner as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1 {
    pub rows: Vec<Table1Row>,
    /// Object-major, then pose, then linear before ours.
    pub episodes: Vec<Summary>,
}

impl Table1 {
    /// Recomputes the rows from the per-episode summaries.
    pub fn from_episodes(episodes: Vec<Summary>) -> Self {
        let rows = ObjectKind::ALL
            .iter()
            .map(|k| {
                let prefix = format!("{}_", k.name());
                let mine = episodes.iter().filter(|s| {
                    s.scene.starts_with(&prefix)
                        && InitialPose::from_name(&s.scene[prefix.len()..]).is_some()
                });
                let (mut lin, mut ours, mut n) = (0, 0, 0);
                for s in mine {
                    match s.planner.as_str() {
                        "linear" => lin += usize::from(s.success),
                        _ => {
                            ours += usize::from(s.success);
                            n += 1;
                        }
                    }
                }
                Table1Row {
                    object: k.name().into(),
                    linear_successes: lin,
                    ours_successes: ours,
                    episodes_per_planner: n,
                }
            })
            .collect();
        Table1 { rows, episodes }
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| planner |");
        for r in &self.rows {
            s += &format!(" {} |", r.object);
        }
        s += "\n|---|";
        s += &"---:|".repeat(self.rows.len());
        for p in [PlannerKind::Linear, PlannerKind::Ours] {
            s += &format!("\n| {p} |");
            for r in &self.rows {
                s += &format!(" {:.1}% |", r.rate(p));
            }
        }
        s + "\n"
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("object,linear_rate,ours_rate,episodes_per_planner\n");
        for r in &self.rows {
            s += &format!(
                "{},{:.1},{:.1},{}\n",
                r.object,
                r.rate(PlannerKind::Linear),
                r.rate(PlannerKind::Ours),
                r.episodes_per_planner
            );
        }
        s
    }
}

/// Runs the 5-object by 3-pose grasp suite for both planners. With
/// `suite_dir` the scenarios are read from `<object>_<pose>.json` files
/// there; otherwise the built-in scenes are used. `spec.scenario` is
/// ignored.
pub fn table1(suite_dir: Option<&Path>, spec: &RunSpec) -> Result<Table1> {
    let mut jobs = Vec::new();
    for k in ObjectKind::ALL {
        for p in InitialPose::ALL {
            let name = format!("{}_{}", k.name(), p.name());
            let scenario = match suite_dir {
                Some(d) => d
                    .join(format!("{name}.json"))
                    .to_string_lossy()
                    .into_owned(),
                None => format!("{BUILTIN_PREFIX}{name}"),
            };
            for planner in [PlannerKind::Linear, PlannerKind::Ours] {
                let mut s = spec.clone();
                s.scenario = scenario.clone();
                s.planner = Some(planner);
                s.repetitions = 1;
                s.jobs = 1;
                s.out_dir = spec
                    .out_dir
                    .as_ref()
                    .map(|d| d.join(format!("{name}_{planner}")));
                s.validate()?;
                jobs.push(s);
            }
        }
    }
    let episodes = parallel_map(jobs.len(), spec.jobs, |i| {
        let s = &jobs[i];
        let trace = run_scenario(&s.load(0)?, s.mode)?;
        if let Some(d) = &s.out_dir {
            trace.write_dir(d)?;
        }
        Ok(evaluate_trace(&trace))
    })?;
    let table = Table1::from_episodes(episodes);
    if let Some(dir) = &spec.out_dir {
        write_json(&dir.join("table1.json"), &table)?;
        write_text(&dir.join("table1.md"), &table.to_markdown())?;
        write_text(&dir.join("table1.csv"), &table.to_csv())?;
    }
    Ok(table)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(d) = path.parent() {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::parse(path, e))?;
    write_text(path, &(text + "\n"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_map_keeps_order() {
        let v = parallel_map(20, 4, |i| Ok(i * i)).unwrap();
        assert_eq!(v, (0..20).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn parallel_map_reports_errors() {
        let r = parallel_map(8, 3, |i| {
            if i == 5 {
                Err(Error::Config("boom".into()))
            } else {
                Ok(i)
            }
        });
        assert!(r.is_err());
    }

    #[test]
    fn missing_scenario_is_rejected() {
        assert!(RunSpec::new("/nonexistent/scene.json").validate().is_err());
        let mut s = RunSpec::builtin("box_center_up");
        s.repetitions = 0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn seeds_follow_repetitions() {
        let mut s = RunSpec::builtin("wine_glass_moving_boxes");
        s.seed = Some(7);
        assert_eq!(s.load(0).unwrap().seed, 7);
        assert_eq!(s.load(3).unwrap().seed, 10);
        s.seed = None;
        assert_eq!(s.load(2).unwrap().seed, 2);
    }

    #[test]
    fn table_rows_recomputed_from_episodes() {
        let ep = |scene: &str, planner: &str, success: bool| Summary {
            scene: scene.into(),
            planner: planner.into(),
            success,
            outcome: if success {
                sim::Outcome::Success
            } else {
                sim::Outcome::Timeout
            },
            success_time: None,
            duration: 1.0,
            terminal_error: 0.0,
            terminal_center_error: 0.0,
            min_gamma: 1.0,
            min_object: 1.0,
            ticks: 0,
            mean_tick_ms: 0.0,
            p95_tick_ms: 0.0,
            max_tick_ms: 0.0,
            overruns: 0,
            stalls: 0,
            max_constraint_residual: 0.0,
        };
        let t = Table1::from_episodes(vec![
            ep("bowl_left_bottom", "linear", false),
            ep("bowl_left_bottom", "ours", true),
            ep("bowl_center_up", "linear", true),
            ep("bowl_center_up", "ours", true),
            ep("bowl_disturbance", "ours", false),
        ]);
        let bowl = t.rows.iter().find(|r| r.object == "bowl").unwrap();
        assert_eq!(bowl.episodes_per_planner, 2);
        assert_eq!(bowl.rate(PlannerKind::Linear), 50.0);
        assert_eq!(bowl.rate(PlannerKind::Ours), 100.0);
        assert!(t.to_markdown().contains("| ours |"));
    }
}
