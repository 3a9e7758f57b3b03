use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use dtc::bench::scene::{random_environment, sample_endpoints, SceneConfig};
use dtc::bench::{
    derive_seed, eval_metrics, export_cspace_field, run_accuracy_experiment, run_narrow_passage,
    run_optimization_experiment, time_queries, AccuracyConfig, NarrowPassageRunConfig, OptimizationConfig, Table,
};
use dtc::dataset::{generate_dataset_with_jobs, generate_test_set, sample_configs, Dataset};
use dtc::hybrid::{HybridEstimator, Sensor};
use dtc::optimize::{optimize, seed_trajectory, Estimator, EstimatorKind, OptimizeProblem, RrtOptions, SolverOptions};
use dtc::regression::{
    eta2_grid, fit_selected, select_hyperparameters_with_prior, select_kr_gamma, Eta2Mode, GpModel, KrModel, Model,
    PriorMean,
};
use dtc::{ConvexPolygon, Environment, KernelKind, KernelSpec, Vec2};

use crate::args::*;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<dtc::Error> for CliError {
    fn from(e: dtc::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn run(cli: Cli) -> CliResult {
    let out_dir = cli.out_dir;
    match cli.command {
        Command::GenEnv(a) => gen_env(&out_dir, a),
        Command::GenDataset(a) => gen_dataset(&out_dir, a),
        Command::Fit(a) => fit(&out_dir, a),
        Command::Eval(a) => eval(&out_dir, a),
        Command::Bench(a) => bench(&out_dir, a),
        Command::Optimize(a) => optimize_cmd(&out_dir, a),
        Command::Experiment(a) => experiment(&out_dir, a),
        Command::Field(a) => field(&out_dir, a),
    }
}

/// Prints the resolved configuration so the run can be reproduced from it.
fn echo<T: Serialize>(command: &str, config: &T) {
    println!("# {command}: resolved configuration");
    match toml::to_string(config) {
        Ok(text) => print!("{text}"),
        // TOML integers are signed 64-bit; very large seeds fall back to JSON
        Err(_) => println!("{}", serde_json::to_string_pretty(config).unwrap_or_default()),
    }
    println!();
}

fn output(out_dir: &Path, explicit: &Option<PathBuf>, default_name: &str) -> CliResult<PathBuf> {
    let path = explicit.clone().unwrap_or_else(|| out_dir.join(default_name));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    Ok(path)
}

fn parse_vector(text: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| usage(format!("bad number `{v}` in `{text}`: {e}"))))
        .collect()
}

fn parse_polygon(text: &str) -> CliResult<ConvexPolygon> {
    let vertices = text
        .split(';')
        .map(|pair| match parse_vector(pair)?.as_slice() {
            [x, y] => Ok(Vec2::new(*x, *y)),
            _ => Err(usage(format!("vertex `{pair}` must be `x,y`"))),
        })
        .collect::<CliResult<Vec<_>>>()?;
    ConvexPolygon::new(vertices).map_err(|e| usage(format!("obstacle `{text}`: {e}")))
}

fn gen_env(out_dir: &Path, a: GenEnvArgs) -> CliResult {
    echo("gen-env", &a);
    let scene = SceneConfig {
        dof: a.dof,
        link_length: a.link_length,
        link_width: a.link_width,
        obstacles: a.random_obstacles.max(1),
        ..SceneConfig::default()
    };
    scene.validate().map_err(|e| usage(e.to_string()))?;
    let env = if a.obstacles.is_empty() {
        random_environment(&scene, &mut ChaCha8Rng::seed_from_u64(a.seed))?
    } else {
        let obstacles = a.obstacles.iter().map(|o| parse_polygon(o)).collect::<CliResult<_>>()?;
        Environment::new(scene.robot()?, obstacles)
    };
    let path = output(out_dir, &a.out, "env.json")?;
    env.save(&path)?;
    if Environment::load(&path)? != env {
        return Err(CliError::Runtime(format!("{} does not re-parse to the written environment", path.display())));
    }
    println!("wrote {} ({} obstacles, hash {})", path.display(), env.obstacles.len(), env.content_hash());
    Ok(())
}

fn gen_dataset(out_dir: &Path, a: GenDatasetArgs) -> CliResult {
    echo("gen-dataset", &a);
    let env = Environment::load(&a.env)?;
    let data = generate_dataset_with_jobs(&env, a.n, a.eta, a.seed, a.jobs)?;
    let path = output(out_dir, &a.out, "dataset.txt")?;
    data.save(&path)?;
    println!("wrote {} ({} rows, noise-free: {})", path.display(), data.len(), data.meta.noise_free);
    Ok(())
}

fn fit(out_dir: &Path, a: FitArgs) -> CliResult {
    echo("fit", &a);
    let env = Environment::load(&a.env)?;
    let data = Dataset::load_for(&a.data, &env)?;
    let kind = match a.kernel {
        KernelArg::Gaussian => KernelKind::Gaussian,
        KernelArg::Fk => KernelKind::Fk,
    };
    let spec_for = |gamma: f64| match kind {
        KernelKind::Gaussian => KernelSpec::gaussian(gamma),
        KernelKind::Fk => KernelSpec::fk(gamma, env.robot.clone()),
    };
    let (model, score) = match a.model {
        ModelKind::Kr => {
            if kind != KernelKind::Gaussian {
                return Err(usage("kernel regression supports only the gaussian kernel"));
            }
            let spec = match a.gamma {
                Some(g) => spec_for(g).map_err(|e| usage(e.to_string()))?,
                None => select_kr_gamma(&data.x, &data.y)?.spec,
            };
            (Model::Kr(KrModel::new(&data.x, &data.y, &spec)?), None)
        }
        ModelKind::Gp => {
            let prior = match a.prior_mean {
                PriorArg::Zero => PriorMean::Zero,
                PriorArg::LabelMean => PriorMean::LabelMean,
            };
            let eta2 = if a.search_eta2 { Eta2Mode::Search } else { Eta2Mode::Fixed(a.eta2) };
            let gp = match a.gamma {
                None => {
                    let sel = select_hyperparameters_with_prior(&data.x, &data.y, kind, Some(&env.robot), eta2, prior)?;
                    fit_selected(&data.x, &data.y, &sel)?
                }
                Some(g) => {
                    let spec = spec_for(g).map_err(|e| usage(e.to_string()))?;
                    let candidates = match eta2 {
                        Eta2Mode::Fixed(v) => vec![v],
                        Eta2Mode::Search => eta2_grid(),
                    };
                    let pm = prior.resolve(&data.y);
                    let mut best: Option<GpModel> = None;
                    for v in candidates {
                        let m = GpModel::fit_with_prior_mean(&data.x, &data.y, &spec, v, pm)?;
                        if best.as_ref().is_none_or(|b| m.log_marginal_likelihood() > b.log_marginal_likelihood()) {
                            best = Some(m);
                        }
                    }
                    best.expect("at least one candidate")
                }
            };
            let lml = gp.log_marginal_likelihood();
            (Model::Gp(gp), Some(lml))
        }
    };
    let path = output(out_dir, &a.out, "model.json")?;
    model.save(&path, Some(&env.content_hash()))?;
    let mut t = Table::new(format!("wrote {}", path.display()), &["model", "kernel", "gamma", "eta2", "log_marginal_likelihood"]);
    t.push(vec![
        model.name().into(),
        model.spec().kind.to_string(),
        model.spec().gamma.to_string(),
        match &model {
            Model::Gp(m) => m.eta2().to_string(),
            Model::Kr(_) => "-".into(),
        },
        score.map_or("-".into(), |s| format!("{s:.4}")),
    ]);
    print!("{}", t.render());
    Ok(())
}

fn load_model_for(path: &Path, env: Option<&Environment>) -> CliResult<Model> {
    let (model, hash) = Model::load(path)?;
    if let (Some(env), Some(hash)) = (env, hash) {
        if env.content_hash() != hash {
            return Err(CliError::Runtime(format!(
                "{} was trained against environment {hash}, not {}",
                path.display(),
                env.content_hash()
            )));
        }
    }
    Ok(model)
}

fn eval(out_dir: &Path, a: EvalArgs) -> CliResult {
    echo("eval", &a);
    let env = a.env.as_ref().map(Environment::load).transpose()?;
    let model = load_model_for(&a.model, env.as_ref())?;
    let test = match (&a.test, &env) {
        (Some(p), _) => Dataset::load(p)?,
        (None, Some(env)) => generate_test_set(env, a.n, a.seed)?,
        (None, None) => return Err(usage("eval needs --test or --env")),
    };
    let m = eval_metrics(|x| model.predict(x), &test)?;
    let opt = |v: Option<f64>| v.map_or("-".into(), |v| v.to_string());
    let mut t = Table::new(
        format!("{} ({}) on {} test rows", model.name(), model.spec().kind, m.n_test),
        &["mse", "tpmse", "tnmse", "n_test", "n_pos", "n_neg", "mean_true_distance"],
    );
    t.push(vec![
        m.mse.to_string(),
        opt(m.tpmse),
        opt(m.tnmse),
        m.n_test.to_string(),
        m.n_pos.to_string(),
        m.n_neg.to_string(),
        m.mean_true_distance.to_string(),
    ]);
    print!("{}", t.render());
    let path = output(out_dir, &a.out, "metrics.csv")?;
    t.write_csv(&path)?;
    Ok(())
}

fn bench(out_dir: &Path, a: BenchArgs) -> CliResult {
    echo("bench", &a);
    let env = Environment::load(&a.env)?;
    let models = a.models.iter().map(|p| Ok((p, load_model_for(p, Some(&env))?))).collect::<CliResult<Vec<_>>>()?;
    let queries = sample_configs(&env.robot, a.n_queries, &mut ChaCha8Rng::seed_from_u64(a.seed))?;
    let mut t = Table::new(
        format!("Per-query time over {} queries after {} warmup", a.n_queries, a.warmup),
        &["method", "source", "mean_us", "p50_us", "p95_us", "batch_median_us"],
    );
    let mut row = |name: String, source: String, r: dtc::bench::TimingReport| {
        t.push(vec![
            name,
            source,
            format!("{:.3}", r.per_query_mean_us),
            format!("{:.3}", r.per_query_p50_us),
            format!("{:.3}", r.per_query_p95_us),
            format!("{:.3}", r.batch_median_us),
        ])
    };
    row("oracle".into(), a.env.display().to_string(), time_queries(|x| env.distance(x), &queries, a.warmup)?);
    for (path, model) in &models {
        let name = format!("{}-{}", model.name(), model.spec().kind);
        row(name, path.display().to_string(), time_queries(|x| model.predict(x), &queries, a.warmup)?);
    }
    print!("{}", t.render());
    let path = output(out_dir, &a.out, "timing.csv")?;
    t.write_csv(&path)?;
    Ok(())
}

const ENDPOINT_STREAM: u64 = 1;
const PLANNER_STREAM: u64 = 2;
const SENSOR_STREAM: u64 = 3;

fn optimize_cmd(out_dir: &Path, a: OptimizeArgs) -> CliResult {
    echo("optimize", &a);
    let env = Environment::load(&a.env)?;
    let model = match (a.estimator.is_learned(), &a.model) {
        (true, None) => return Err(usage(format!("estimator {} needs --model", a.estimator))),
        (true, Some(p)) => Some(load_model_for(p, Some(&env))?),
        (false, _) => None,
    };
    let (start, goal) = match (&a.start, &a.goal) {
        (Some(s), Some(g)) => (parse_vector(s)?, parse_vector(g)?),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(a.seed, ENDPOINT_STREAM, 0));
            let span = a.waypoints.saturating_sub(1) as f64 * a.dtheta_max;
            sample_endpoints(&env, &mut rng, a.d_min + 0.1, span, 10_000)?
        }
    };
    let sensor = || Sensor::new(&env, a.eta, ChaCha8Rng::seed_from_u64(derive_seed(a.seed, SENSOR_STREAM, 0)));
    let mut estimator = match (a.estimator, &model) {
        (EstimatorKind::Oracle, _) => Estimator::oracle(&env),
        (EstimatorKind::NoisyOracle, _) => Estimator::noisy(sensor()?),
        (EstimatorKind::Kr, Some(Model::Kr(m))) => Estimator::kr(m),
        (EstimatorKind::GpGaussian, Some(Model::Gp(m))) if m.spec().kind == KernelKind::Gaussian => Estimator::gp(m),
        (EstimatorKind::GpFk, Some(Model::Gp(m))) if m.spec().kind == KernelKind::Fk => Estimator::gp(m),
        (EstimatorKind::Hybrid, Some(Model::Gp(m))) if m.spec().kind == KernelKind::Fk => {
            Estimator::hybrid(HybridEstimator::new(m, sensor()?, a.z, a.n_sensor, a.threshold)?)
        }
        (kind, Some(m)) => {
            return Err(usage(format!("estimator {kind} cannot use a {} model with the {} kernel", m.name(), m.spec().kind)))
        }
        (_, None) => unreachable!("learned estimators have a model"),
    };
    let problem = OptimizeProblem {
        env: &env,
        start,
        goal,
        waypoints: a.waypoints,
        dtheta_max: a.dtheta_max,
        d_min: a.d_min,
        mode: a.mode,
    };
    problem.validate().map_err(|e| usage(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(a.seed, PLANNER_STREAM, 0));
    let seed = seed_trajectory(&env, &problem.start, &problem.goal, a.waypoints, &mut rng, &RrtOptions::default())?;
    let (traj, mut report) = optimize(&problem, &mut estimator, &seed, &SolverOptions::default())?;
    report.seed = Some(a.seed);

    let path = output(out_dir, &a.out, "trajectory.txt")?;
    traj.save(&path)?;
    let report_path = PathBuf::from(format!("{}.report.json", path.display()));
    std::fs::write(&report_path, serde_json::to_string_pretty(&report).map_err(dtc::Error::from)?)?;

    let mut t = Table::new(
        format!("wrote {} and {}", path.display(), report_path.display()),
        &["estimator", "mode", "path_length", "estimator_min", "oracle_min", "slack", "status", "time_s", "branch_switches"],
    );
    t.push(vec![
        report.estimator.to_string(),
        report.mode.to_string(),
        format!("{:.4}", report.path_length),
        format!("{:.4}", report.estimator_min_clearance),
        format!("{:.4}", report.oracle_min_clearance),
        report.slack.map_or("-".into(), |s| format!("{s:.4}")),
        serde_json::to_value(report.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
        format!("{:.3}", report.wall_time_s),
        report.branch_switches.map_or("-".into(), |v| v.to_string()),
    ]);
    print!("{}", t.render());
    Ok(())
}

fn load_config<T: serde::de::DeserializeOwned>(path: &Option<PathBuf>, default: T) -> CliResult<T> {
    match path {
        None => Ok(default),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", p.display())))
        }
    }
}

fn write_outputs(out_dir: &Path, stem: &str, tables: &[(&str, Table)], full: &impl Serialize) -> CliResult {
    std::fs::create_dir_all(out_dir)?;
    for (suffix, t) in tables {
        print!("{}\n", t.render());
        t.write_csv(out_dir.join(format!("{stem}_{suffix}.csv")))?;
    }
    let json = serde_json::to_string_pretty(full).map_err(dtc::Error::from)?;
    let path = out_dir.join(format!("{stem}.json"));
    std::fs::write(&path, json)?;
    println!("wrote {stem}_*.csv and {} to {}", path.file_name().unwrap_or_default().to_string_lossy(), out_dir.display());
    Ok(())
}

fn experiment(out_dir: &Path, a: ExperimentArgs) -> CliResult {
    match a.kind {
        ExperimentKind::Table1 => {
            let mut cfg = load_config(&a.config, AccuracyConfig::default())?;
            cfg.seed = a.seed.unwrap_or(cfg.seed);
            cfg.scenes = a.count.unwrap_or(cfg.scenes);
            cfg.jobs = a.jobs;
            echo("experiment table1", &cfg);
            if a.print_config {
                return Ok(());
            }
            let r = run_accuracy_experiment(&cfg)?;
            write_outputs(out_dir, "table1", &[("summary", r.summary_table()), ("scenes", r.scene_table())], &r)
        }
        ExperimentKind::Table2 | ExperimentKind::Table3 => {
            let (stem, default) = if a.kind == ExperimentKind::Table2 {
                ("table2", OptimizationConfig::table2())
            } else {
                ("table3", OptimizationConfig::table3())
            };
            let mut cfg = load_config(&a.config, default)?;
            cfg.seed = a.seed.unwrap_or(cfg.seed);
            cfg.trials = a.count.unwrap_or(cfg.trials);
            cfg.jobs = a.jobs;
            echo(&format!("experiment {stem}"), &cfg);
            if a.print_config {
                return Ok(());
            }
            let r = run_optimization_experiment(&cfg)?;
            write_outputs(out_dir, stem, &[("summary", r.summary_table()), ("trials", r.trial_table())], &r)
        }
        ExperimentKind::NarrowPassage => {
            let mut cfg = load_config(&a.config, NarrowPassageRunConfig::default())?;
            cfg.seed = a.seed.unwrap_or(cfg.seed);
            if a.count.is_some() {
                return Err(usage("--count does not apply to narrow-passage"));
            }
            echo("experiment narrow-passage", &cfg);
            if a.print_config {
                return Ok(());
            }
            let r = run_narrow_passage(&cfg)?;
            let stem = "narrow_passage";
            write_outputs(out_dir, stem, &[("summary", r.summary_table()), ("trace", r.trace_table())], &r)?;
            let traj = dtc::optimize::Trajectory::new(r.trajectory.clone())?;
            traj.save(out_dir.join(format!("{stem}_trajectory.txt")))?;
            Ok(())
        }
    }
}

fn field(out_dir: &Path, a: FieldArgs) -> CliResult {
    echo("field", &a);
    let env = Environment::load(&a.env)?;
    let model = a.model.as_ref().map(|p| load_model_for(p, Some(&env))).transpose()?;
    let gp = match &model {
        None => None,
        Some(Model::Gp(m)) => Some(m),
        Some(Model::Kr(_)) => return Err(usage("field confidence needs a GP model")),
    };
    let grid = export_cspace_field(&env, gp, a.resolution, a.threshold).map_err(|e| match e {
        dtc::Error::InvalidArgument(msg) => usage(msg),
        other => other.into(),
    })?;
    let path = output(out_dir, &a.out, "field.csv")?;
    grid.table().write_csv(&path)?;
    println!("wrote {} ({} x {} grid)", path.display(), grid.resolution, grid.resolution);
    Ok(())
}
