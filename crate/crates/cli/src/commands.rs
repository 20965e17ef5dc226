use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use etstl::funnel::optimize_robustness;
use etstl::scenario::Scenario;
use etstl::sim::{
    format_metrics, write_events_csv, write_funnel_csv, write_inputs_csv, write_trajectory_csv,
    EpisodeResult,
};
use etstl::stl::{monitor_sequential, normalize_sequential, parse_formula, Signal, SmoothingConfig};

use crate::error::{outcome_code, CliError, EXIT_OK, EXIT_THRESHOLD};

type Csv = fn(&EpisodeResult, BufWriter<File>) -> csv::Result<()>;

const CSV_FILES: [(&str, Csv); 4] = [
    ("trajectory.csv", write_trajectory_csv),
    ("events.csv", write_events_csv),
    ("funnel.csv", write_funnel_csv),
    ("inputs.csv", write_inputs_csv),
];

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_outputs(res: &EpisodeResult, dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (name, write) in CSV_FILES {
        let path = dir.join(name);
        let file = File::create(&path).map_err(io_err(&path))?;
        write(res, BufWriter::new(file)).map_err(|source| CliError::Csv {
            path: path.clone(),
            source,
        })?;
    }
    let path = dir.join("metrics.txt");
    fs::write(&path, format_metrics(res)).map_err(io_err(&path))
}

fn summary(res: &EpisodeResult) {
    let m = &res.metrics;
    println!("outcome: {}", res.outcome);
    println!("rho_theta: {:.6} (smooth {:.6})", m.rho_theta, m.rho_theta_smooth);
    println!(
        "triggers: {} of {} samples, reduction {:.2}%",
        m.triggers,
        m.samples,
        100.0 * m.reduction
    );
}

pub fn run(
    scenario: &Path,
    out: Option<PathBuf>,
    seed: Option<u64>,
    dt: Option<f64>,
) -> Result<u8, CliError> {
    let mut sc = Scenario::load(scenario)?;
    if let Some(seed) = seed {
        sc.seed = seed;
    }
    if let Some(dt) = dt {
        sc.dt = dt;
    }
    let dir = out
        .or_else(|| sc.out.clone())
        .ok_or_else(|| CliError::Config("no output directory: pass --out or set \"out\"".into()))?;
    let prepared = sc.prepare()?;
    let res = prepared.run().map_err(|e| CliError::Config(e.to_string()))?;
    write_outputs(&res, &dir)?;
    summary(&res);
    Ok(outcome_code(&res.outcome, res.passed()))
}

fn read_formula(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn optimize(formula: &Path, eta: f64) -> Result<u8, CliError> {
    let theta = parse_formula(&read_formula(formula)?).map_err(|e| CliError::Config(e.to_string()))?;
    let cfg = SmoothingConfig::new(eta).map_err(|e| CliError::Config(e.to_string()))?;
    for (k, task) in normalize_sequential(&theta).iter().enumerate() {
        let opt = optimize_robustness(&task.psi, &cfg, None).map_err(|e| CliError::Run(e.to_string()))?;
        println!("task {}: rho_opt = {:.6}", k + 1, opt.rho_opt);
    }
    Ok(EXIT_OK)
}

/// Reads the `t` and `x1..xn` columns of a trajectory file.
fn read_trajectory(path: &Path) -> Result<(Vec<f64>, Vec<f64>, usize), CliError> {
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let bad = |what: String| CliError::Config(format!("{}: {what}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let t_col = headers
        .iter()
        .position(|h| h == "t")
        .ok_or_else(|| bad("missing column t".into()))?;
    let mut x_cols = Vec::new();
    while let Some(c) = headers.iter().position(|h| h == format!("x{}", x_cols.len() + 1)) {
        x_cols.push(c);
    }
    if x_cols.is_empty() {
        return Err(bad("missing column x1".into()));
    }
    let (mut times, mut states) = (Vec::new(), Vec::new());
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let num = |c: usize| -> Result<f64, CliError> {
            rec.get(c)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| bad(format!("row {}: column {} is not a number", line + 2, c + 1)))
        };
        times.push(num(t_col)?);
        for &c in &x_cols {
            states.push(num(c)?);
        }
    }
    Ok((times, states, x_cols.len()))
}

pub fn monitor(trajectory: &Path, formula: &Path, at: f64) -> Result<u8, CliError> {
    let theta = parse_formula(&read_formula(formula)?).map_err(|e| CliError::Config(e.to_string()))?;
    let (times, states, dim) = read_trajectory(trajectory)?;
    theta
        .check_dimension(dim)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let sig = Signal::new(&times, &states, dim);
    let rho = monitor_sequential(&theta, &sig, at).map_err(|e| CliError::Config(e.to_string()))?;
    println!("rho = {rho}");
    println!("satisfied = {}", rho > 0.0);
    Ok(EXIT_OK)
}

/// Published optima for the two bundled tasks.
const RHO_OPT: [f64; 2] = [1.86, 3.89];
const RHO_OPT_TOL: f64 = 0.02;
const MIN_REDUCTION: f64 = 0.90;

pub fn reproduce_paper(out: &Path, seed: Option<u64>) -> Result<u8, CliError> {
    let mut sc = Scenario::paper();
    if let Some(seed) = seed {
        sc.seed = seed;
    }
    let prepared = sc.prepare()?;
    let smoothing = prepared.config.sequencer.smoothing;
    let mut checks: Vec<(String, bool)> = Vec::new();
    for (k, task) in normalize_sequential(&prepared.theta).iter().enumerate() {
        let opt = optimize_robustness(&task.psi, &smoothing, None).map_err(|e| CliError::Run(e.to_string()))?;
        println!("task {}: rho_opt = {:.4} (published {:.2})", k + 1, opt.rho_opt, RHO_OPT[k]);
        checks.push((
            format!("task {} rho_opt within {RHO_OPT_TOL}", k + 1),
            (opt.rho_opt - RHO_OPT[k]).abs() <= RHO_OPT_TOL,
        ));
    }
    let res = prepared.run().map_err(|e| CliError::Config(e.to_string()))?;
    write_outputs(&res, out)?;
    summary(&res);
    let m = &res.metrics;
    let (r, rho_max) = (
        sc.tasks.iter().filter_map(|t| t.r).fold(f64::INFINITY, f64::min),
        sc.tasks.iter().filter_map(|t| t.rho_max).fold(f64::INFINITY, f64::min),
    );
    checks.push(("satisfied".into(), m.satisfied));
    checks.push((
        format!("{r} < rho_theta < {rho_max}"),
        m.rho_theta > r && m.rho_theta < rho_max,
    ));
    checks.push((format!("reduction >= {MIN_REDUCTION}"), m.reduction >= MIN_REDUCTION));
    checks.push(("funnel respected".into(), m.min_funnel_margin > 0.0));
    checks.push(("input deviation within delta_u".into(), m.law_gap_violations == 0));
    checks.push((
        "radii above floor".into(),
        m.min_delta >= prepared.config.trigger.delta_floor,
    ));
    for (name, ok) in &checks {
        println!("[{}] {name}", if *ok { "ok" } else { "MISS" });
    }
    let code = outcome_code(&res.outcome, res.passed());
    if code != EXIT_OK {
        Ok(code)
    } else if checks.iter().all(|(_, ok)| *ok) {
        Ok(EXIT_OK)
    } else {
        Ok(EXIT_THRESHOLD)
    }
}
