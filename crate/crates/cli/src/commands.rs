use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use lerw_core::capacity::{
    capacity_decomposition_mc, capacity_mc, capacity_mc_sampled, capacity_via_hitting, capacity_wos, EstimateRecord, SetTarget,
    WosConfig,
};
use lerw_core::chain::{decomposition_suite, exact_capacity, exact_decomposition, exact_escape, FiniteChain};
use lerw_core::experiments::{run_experiment, write_outputs, ExperimentConfig, ExperimentKind};
use lerw_core::lattice::{format_points, parse_points};
use lerw_core::parallel::{map_items, with_threads};
use lerw_core::rng::{entropy_seed, tag, RngStream};
use lerw_core::twosided::{
    acceptance_exact, acceptance_rate, d4_weighted_two_sided, stationarity_diagnostic, two_sided_batch, weighted_summary,
    x_hat_estimators, SamplerConfig,
};
use lerw_core::walk::{cut_times, lerw_sample, loop_erase, srw_sample};
use lerw_core::{with_dim, with_transient_dim, Error, LatticePoint, PointSet};
use serde::Serialize;
use serde_json::json;

use crate::{CapMethod, CapacityArgs, Cli, Command, ExperimentArgs, OracleArgs, TwosidedArgs, TwosidedMode, WalkArgs};

pub enum Failure {
    /// Bad flags or parameters; exit 1.
    Usage(String),
    /// Failure while executing; exit 2.
    Runtime(String),
}

type Outcome = std::result::Result<(), Failure>;

fn usage(m: impl Into<String>) -> Failure {
    Failure::Usage(m.into())
}

fn runtime(m: impl ToString) -> Failure {
    Failure::Runtime(m.to_string())
}

/// Parameter problems detected by the library count as usage errors.
impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_) | Error::UnsupportedDimension(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn json_line<T: Serialize>(v: &T) -> std::result::Result<String, Failure> {
    serde_json::to_string(v).map_err(runtime)
}

fn emit(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(p) => fs::write(p, text)?,
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(text.as_bytes())?;
            so.flush()?;
        }
    }
    Ok(())
}

pub fn run(cli: Cli) -> Outcome {
    let seed = match cli.seed {
        Some(s) => s,
        None => {
            let s = entropy_seed();
            eprintln!("seed: {s}");
            s
        }
    };
    let threads = cli.threads;
    let echo = json!({ "seed": seed, "threads": threads, "command": &cli.command });
    eprintln!("{}", json_line(&echo)?);
    let explicit_seed = cli.seed.is_some();
    let command = cli.command;
    with_threads(threads, move || match command {
        Command::Walk(a) => walk(&a, seed),
        Command::Capacity(a) => capacity(&a, seed),
        Command::Oracle(a) => oracle(&a, seed),
        Command::Twosided(a) => twosided(&a, seed),
        Command::Experiment(a) => experiment(&a, seed, explicit_seed),
    })?
}

fn walk(a: &WalkArgs, seed: u64) -> Outcome {
    let mut rng = RngStream::new(seed, 0).derive(&[tag("walk")]).rng();
    let text = with_dim!(a.d, D => {
        if a.infinite {
            if D < 3 {
                return Err(usage("--infinite needs d >= 3"));
            }
            format_points(lerw_sample::<_, D>(a.steps, &mut rng)?.points())
        } else {
            let omega = srw_sample::<_, D>(a.steps, &mut rng);
            if a.cut_times {
                cut_times(&omega).iter().map(|t| format!("{t}\n")).collect()
            } else if a.loop_erase {
                format_points(loop_erase(&omega).points())
            } else {
                format_points(omega.points())
            }
        }
    }, _ => return Err(usage(format!("--d must lie in 1..=6, got {}", a.d))));
    emit(a.out.as_deref(), &text)
}

fn load_points<const D: usize>(spec: &str) -> std::result::Result<Vec<LatticePoint<D>>, Failure> {
    match spec {
        "single-origin" => Ok(vec![LatticePoint::ORIGIN]),
        "pair" => Ok(vec![LatticePoint::ORIGIN, LatticePoint::unit(0, true)]),
        file => {
            let text = fs::read_to_string(file).map_err(|e| usage(format!("--points {file}: {e}")))?;
            parse_points::<D>(&text).map_err(|e| runtime(format!("{file}: {e}")))
        }
    }
}

fn capacity(a: &CapacityArgs, seed: u64) -> Outcome {
    with_transient_dim!(a.d, D => capacity_d::<D>(a, seed), _ => Err(usage(format!("--d must lie in 3..=6, got {}", a.d))))
}

fn capacity_d<const D: usize>(a: &CapacityArgs, seed: u64) -> Outcome {
    let root = RngStream::new(seed, 0).derive(&[tag("capacity")]);
    let order = match (&a.points, a.lerw) {
        (Some(spec), None) => load_points::<D>(spec)?,
        (None, Some(n)) => lerw_sample::<_, D>(n, &mut root.child(0).rng())?.points().to_vec(),
        (None, None) => return Err(usage("one of --points or --lerw is required")),
        (Some(_), Some(_)) => return Err(usage("--points and --lerw are exclusive")),
    };
    if order.is_empty() {
        return Err(runtime("empty point set"));
    }
    let set = PointSet::from_ordered(&order)?;
    let y = a.y_radius.unwrap_or(2.0 * set.bounding_ball().1 + 4.0);
    let stream = root.child(1);
    let start = Instant::now();
    let (rec, radius): (EstimateRecord, f64) = match a.method {
        CapMethod::Mc => (capacity_mc(&set, a.r, a.trials, stream)?, a.r),
        CapMethod::Sampled => (capacity_mc_sampled(&set, a.r, a.trials, stream)?, a.r),
        CapMethod::Decomposition => (capacity_decomposition_mc(&order, a.r, a.trials, stream)?.0, a.r),
        CapMethod::Hitting => (capacity_via_hitting(&set, y, a.trials, stream)?, y),
        CapMethod::Wos => (capacity_wos(&SetTarget::new(&order), y, WosConfig::default(), a.trials, stream)?, y),
    };
    let wall = start.elapsed().as_secs_f64();
    let rec = rec.with_param("wall_time_s", wall).with_param("points", order.len() as u64);
    println!("{}", json_line(&rec)?);
    if let Some(path) = &a.csv {
        let new = !path.exists() || fs::metadata(path)?.len() == 0;
        let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
        if new {
            writeln!(f, "method,value,stderr,trials,R,seed,wall_time")?;
        }
        writeln!(f, "{},{:?},{:?},{},{:?},{},{:?}", rec.method.as_str(), rec.value, rec.stderr, rec.trials, radius, seed, wall)?;
    }
    Ok(())
}

fn parse_usize_list(s: &str, flag: &str) -> std::result::Result<Vec<usize>, Failure> {
    s.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| usage(format!("{flag}: bad integer '{t}'"))))
        .collect()
}

fn oracle(a: &OracleArgs, seed: u64) -> Outcome {
    if let Some(path) = &a.chain {
        let text = fs::read_to_string(path).map_err(|e| usage(format!("--chain {}: {e}", path.display())))?;
        let chain = FiniteChain::parse(&text).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
        let set = match &a.set {
            Some(s) => parse_usize_list(s, "--set")?,
            None => (0..chain.n_states()).collect(),
        };
        if let Some(&bad) = set.iter().find(|&&x| x >= chain.n_states()) {
            return Err(usage(format!("--set: state {bad} out of range (n = {})", chain.n_states())));
        }
        let cap = exact_capacity(&chain, &set).map_err(runtime)?;
        let dec = exact_decomposition(&chain, &set).map_err(runtime)?;
        let escapes = set.iter().map(|&x| exact_escape(&chain, &set, x)).collect::<lerw_core::Result<Vec<_>>>().map_err(runtime)?;
        let out = json!({
            "n_states": chain.n_states(),
            "set": set,
            "capacity": cap,
            "decomposition": dec,
            "deviation": (cap - dec).abs(),
            "escape": escapes,
        });
        println!("{}", json_line(&out)?);
        return Ok(());
    }
    let stream = RngStream::new(seed, 0).derive(&[tag("oracle")]);
    let rep = decomposition_suite(a.chains, a.max_states, a.max_set, a.orderings, stream)?;
    let passed = rep.max_deviation <= a.tolerance;
    let out = json!({
        "suite": "decomposition",
        "chains": rep.chains,
        "orderings": rep.orderings,
        "max_deviation": rep.max_deviation,
        "tolerance": a.tolerance,
        "passed": passed,
    });
    println!("{}", json_line(&out)?);
    if passed {
        Ok(())
    } else {
        Err(runtime(format!("max deviation {:e} exceeds {:e}", rep.max_deviation, a.tolerance)))
    }
}

fn twosided(a: &TwosidedArgs, seed: u64) -> Outcome {
    let horizon = a.horizon.unwrap_or(a.side);
    let stream = RngStream::new(seed, 0).derive(&[tag("twosided")]);
    if let TwosidedMode::Weighted = a.mode {
        if a.d != 4 {
            return Err(usage("--mode weighted needs --d 4"));
        }
        return weighted(a, horizon, stream);
    }
    match a.d {
        5 => twosided_d::<5>(a, horizon, stream),
        6 => twosided_d::<6>(a, horizon, stream),
        d => Err(usage(format!("--mode {:?} needs d in 5..=6, got {d}", a.mode).to_lowercase())),
    }
}

fn twosided_d<const D: usize>(a: &TwosidedArgs, horizon: usize, stream: RngStream) -> Outcome {
    match a.mode {
        TwosidedMode::Exact => {
            let p = acceptance_exact::<D>(horizon)?;
            println!("{}", json_line(&json!({ "d": D, "horizon": horizon, "acceptance": p }))?);
        }
        TwosidedMode::Acceptance => {
            let cfg = SamplerConfig::new(a.side, horizon)?;
            let rep = acceptance_rate::<D>(&cfg, a.samples, stream)?;
            println!("{}", json_line(&json!({ "d": D, "config": cfg, "report": rep }))?);
        }
        TwosidedMode::Sample => {
            let cfg = SamplerConfig::new(a.side, horizon)?;
            let (paths, rep) = two_sided_batch::<D>(&cfg, a.samples, stream)?;
            let mut text = String::new();
            for (i, p) in paths.iter().enumerate() {
                let pts: Vec<String> = p.points().iter().map(|x| x.to_string()).collect();
                text.push_str(&json_line(&json!({ "sample": i, "side": a.side, "points": pts }))?);
                text.push('\n');
            }
            let report = json_line(&json!({ "d": D, "config": cfg, "report": rep }))?;
            match &a.out {
                Some(path) => {
                    fs::write(path, text)?;
                    println!("{report}");
                }
                None => emit(None, &(text + &report + "\n"))?,
            }
        }
        TwosidedMode::Diagnostics => {
            let shifts = parse_usize_list(&a.shifts, "--shifts")?;
            if shifts.iter().any(|&k| k + 2 > a.side) {
                return Err(usage("every shift must satisfy k + 2 <= side"));
            }
            let cfg = SamplerConfig::new(a.side, horizon)?;
            let (paths, rep) = two_sided_batch::<D>(&cfg, a.samples, stream)?;
            let diag = stationarity_diagnostic(&paths, &shifts)?;
            println!("{}", json_line(&json!({ "d": D, "config": cfg, "report": rep, "stationarity": diag }))?);
        }
        TwosidedMode::Weighted => unreachable!("handled by the caller"),
    }
    Ok(())
}

fn weighted(a: &TwosidedArgs, horizon: usize, stream: RngStream) -> Outcome {
    let rows = map_items(a.samples, stream, |_, st| -> lerw_core::Result<(f64, f64, f64, f64)> {
        let ws = d4_weighted_two_sided(a.side, a.n_weight, horizon, a.walks, st.child(0))?;
        let x = x_hat_estimators(&ws.path, a.side, a.walks, None, st.child(1))?;
        Ok((ws.weight, x.x_hat, x.x_hat_plus, x.product))
    })
    .into_iter()
    .collect::<lerw_core::Result<Vec<_>>>()?;
    let mut text = String::new();
    for (i, r) in rows.iter().enumerate() {
        let line = json!({ "sample": i, "weight": r.0, "x_hat": r.1, "x_hat_plus": r.2, "product": r.3 });
        text.push_str(&json_line(&line)?);
        text.push('\n');
    }
    let weights: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let products: Vec<f64> = rows.iter().map(|r| r.3).collect();
    let summary = weighted_summary(&products, &weights)?;
    let report = json_line(&json!({ "d": 4, "side": a.side, "n_weight": a.n_weight, "product": summary }))?;
    match &a.out {
        Some(path) => {
            fs::write(path, text)?;
            println!("{report}");
            Ok(())
        }
        None => emit(None, &(text + &report + "\n")),
    }
}

fn sets_seed(text: &str) -> bool {
    text.lines()
        .filter_map(|l| l.split('#').next()?.split_once('='))
        .any(|(k, _)| k.trim() == "seed")
}

fn experiment(a: &ExperimentArgs, seed: u64, explicit_seed: bool) -> Outcome {
    if a.list_params {
        for kind in ExperimentKind::ALL {
            println!("{kind}");
            for (k, v, doc) in kind.params() {
                println!("  {k} = {v}\t{doc}");
            }
        }
        return Ok(());
    }
    let (mut cfg, file_seed) = match (&a.config, &a.kind) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| usage(format!("--config {}: {e}", path.display())))?;
            let cfg = ExperimentConfig::parse(&text).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
            (cfg, sets_seed(&text))
        }
        (None, Some(k)) => (ExperimentConfig::default_for(k.parse().map_err(|e: Error| usage(e.to_string()))?), false),
        (None, None) => return Err(usage("one of --config or --kind is required")),
    };
    for kv in &a.overrides {
        let (k, v) = kv.split_once('=').ok_or_else(|| usage(format!("--set expects key=value, got '{kv}'")))?;
        cfg.set(k.trim(), v.trim()).map_err(|e| usage(e.to_string()))?;
    }
    let override_seed = a.overrides.iter().any(|kv| kv.split('=').next().map(str::trim) == Some("seed"));
    if explicit_seed || !(file_seed || override_seed) {
        cfg.seed = seed;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let dir: PathBuf = a.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
    eprintln!("{}", json_line(&json!({ "experiment_config": &cfg, "output_dir": dir }))?);
    let report = run_experiment(&cfg)?;
    let written = write_outputs(&report, &dir)?;
    for c in &report.checks {
        eprintln!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    for p in &written {
        eprintln!("wrote {}", p.display());
    }
    println!("{}", json_line(&report)?);
    if a.strict && !report.passed() {
        return Err(runtime("one or more checks failed"));
    }
    Ok(())
}
