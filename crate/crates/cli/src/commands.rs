//! One function per subcommand. Each resolves its parameters, seals the
//! context, does the work and commits its artifacts.

use std::fmt::Write as _;
use std::fs;

use eigensafe::dataset::fmt_f64;
use eigensafe::envs::{dint_invariant_set, discretize, grid_oracle, DiscretizeOptions, DoubleIntegratorParams, DubinsParams};
use eigensafe::filter::{evaluate_filter, phi_trace_csv, FilterConfig, ReferencePolicy};
use eigensafe::learn::{
    heading_contrast, loss_gradient_check, policy_values, set_iou, train as train_model, vertex_grid, EigenModel,
    TrainConfig,
};
use eigensafe::tabular::{
    build_gridworld, default_terminal_value, discounted_reachability_vi, exact_safety_dp, power_iteration, GridMap,
    EXAMPLE_MAP,
};
use eigensafe::{collect_uniform, Dataset, Environment};

use crate::run::{CliError, CliResult, RunContext};
use crate::{
    BaselineArgs, CollectArgs, EvalGridArgs, FilterEvalArgs, GradcheckArgs, OracleArgs, ToyEigenArgs, TrainArgs,
};

const GRADCHECK_TOL: f64 = 1e-4;

pub fn toy_eigen(ctx: &mut RunContext, a: ToyEigenArgs) -> CliResult<()> {
    let text = match a.map {
        Some(_) => {
            let p = ctx.input_path("map", a.map)?;
            fs::read_to_string(&p)?
        }
        None => {
            let from_file: Option<String> = ctx.config_mut().take("map")?;
            match from_file {
                Some(p) => {
                    let p = ctx.input_path("map", Some(p.into()))?;
                    fs::read_to_string(&p)?
                }
                None => {
                    ctx.record("map", "builtin");
                    EXAMPLE_MAP.to_string()
                }
            }
        }
    };
    let horizon: usize = ctx.get("horizon", a.horizon, 60)?;
    let tol: f64 = ctx.get("tol", None, 1e-13)?;
    let max_iters: usize = ctx.get("max_iters", None, 1_000_000)?;
    ctx.seal()?;

    let map = GridMap::parse(&text)?;
    let mdp = build_gridworld(&map)?;
    let pair = power_iteration(&mdp, tol, max_iters)?;
    let z = exact_safety_dp(&mdp, horizon);

    let mut eig = String::from("row,col,value\n");
    for ((r, c), v) in map.safe_cells().into_iter().zip(&pair.eigenvector) {
        writeln!(eig, "{r},{c},{}", fmt_f64(*v)).unwrap();
    }
    let mut curves = String::from("t,state,Z\n");
    for (t, zt) in z.iter().enumerate() {
        for (s, v) in zt.iter().enumerate() {
            writeln!(curves, "{t},{s},{}", fmt_f64(*v)).unwrap();
        }
    }
    let deviation = slope_deviation(&z, &pair.eigenvector, pair.eigenvalue);
    ctx.add("eigenvalue.txt", format!("{}\n", fmt_f64(pair.eigenvalue)));
    ctx.add("eigenfunction.csv", eig);
    ctx.add("z_curves.csv", curves);
    println!("gamma = {}", pair.eigenvalue);
    match deviation {
        Some((lo, hi, d)) => println!("max |log Z(t+1) - log Z(t) - log gamma| over t in [{lo}, {hi}) = {d:.3e}"),
        None => println!("slope diagnostic unavailable (horizon too short or gamma = 0)"),
    }
    ctx.commit("toy-eigen")
}

/// Largest gap between per-step log decrements and `log γ`, over states
/// with `φ > 1e-6` and the later half of the horizon (from t = 30 when the
/// horizon allows).
fn slope_deviation(z: &[Vec<f64>], phi: &[f64], gamma: f64) -> Option<(usize, usize, f64)> {
    let horizon = z.len() - 1;
    if horizon < 2 || gamma <= 0.0 {
        return None;
    }
    let lo = if horizon > 30 { 30 } else { horizon / 2 };
    let lg = gamma.ln();
    let mut worst = 0.0f64;
    for t in lo..horizon {
        for (s, &p) in phi.iter().enumerate() {
            if p > 1e-6 && z[t][s] > 0.0 && z[t + 1][s] > 0.0 {
                worst = worst.max(((z[t + 1][s] / z[t][s]).ln() - lg).abs());
            }
        }
    }
    Some((lo, horizon, worst))
}

pub fn collect(ctx: &mut RunContext, a: CollectArgs) -> CliResult<()> {
    let env = ctx.env(a.env)?;
    let n: u64 = ctx.get("n", a.n, 100_000)?;
    if n == 0 {
        return Err(CliError::validation("n must be at least 1"));
    }
    ctx.seal()?;
    let data = collect_uniform(env.as_ref(), n as usize, ctx.seed)?;
    let mut buf = Vec::new();
    data.write_csv(&mut buf)?;
    println!("collected {n} transitions, terminal fraction {:.4}", data.terminal_fraction());
    ctx.add("dataset.csv", buf);
    ctx.commit("collect")
}

pub fn train(ctx: &mut RunContext, a: TrainArgs) -> CliResult<()> {
    let env = ctx.env(a.env)?;
    let data_path = ctx.input_path("data", a.data)?;
    let base = if env.id() == "dubins" { TrainConfig::dubins() } else { TrainConfig::default() };
    let mut cfg = base.apply(ctx.config_mut())?;
    if let Some(n) = a.n_steps {
        cfg.n_steps = n;
    }
    cfg.seed = ctx.seed;
    for line in cfg.to_text().lines() {
        if let Some((k, v)) = line.split_once(" = ") {
            ctx.record(k, v);
        }
    }
    ctx.seal()?;

    let file = fs::File::open(&data_path)?;
    let data = Dataset::read_csv(std::io::BufReader::new(file), env.id(), ctx.seed)?;
    let spec = env.spec();
    if data.state_dim() != spec.state_dim || data.action_dim() != spec.action_dim {
        return Err(CliError::validation(format!(
            "dataset has state/action dimensions {}/{}, environment {} expects {}/{}",
            data.state_dim(),
            data.action_dim(),
            env.id(),
            spec.state_dim,
            spec.action_dim
        )));
    }
    let (model, log) = train_model(&data, spec, &cfg)?;
    println!("trained {} steps on {} transitions, lambda = {}", cfg.n_steps, data.len(), model.lambda);
    for (name, text) in model.artifacts() {
        ctx.add(name, text);
    }
    ctx.add("train_log.csv", log.to_csv());
    ctx.commit("train")
}

fn load_model(ctx: &mut RunContext, cli: Option<std::path::PathBuf>, env: &dyn Environment) -> CliResult<EigenModel> {
    let dir = ctx.input_path("model_dir", cli)?;
    if !dir.is_dir() {
        return Err(CliError::validation(format!("model_dir {} is not a directory", dir.display())));
    }
    let model = EigenModel::load(&dir)?;
    let spec = env.spec();
    if model.state_dim() != spec.state_dim || model.action_dim() != spec.action_dim {
        return Err(CliError::validation(format!("model in {} does not match environment {}", dir.display(), env.id())));
    }
    Ok(model)
}

fn values_csv(header: &str, points: &[Vec<f64>], extra: impl Fn(usize) -> Vec<f64>) -> String {
    let mut s = format!("{header}\n");
    for (i, p) in points.iter().enumerate() {
        let row: Vec<String> = p.iter().chain(extra(i).iter()).map(|v| fmt_f64(*v)).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn eval_grid(ctx: &mut RunContext, a: EvalGridArgs) -> CliResult<()> {
    let env = ctx.env(a.env)?;
    let model = load_model(ctx, a.model_dir, env.as_ref())?;
    let dubins = env.id() == "dubins";
    let resolution: usize = ctx.get("resolution", a.resolution, if dubins { 121 } else { 201 })?;
    let headings: usize = if dubins { ctx.get("headings", None, 8)? } else { 0 };
    let level: f64 = ctx.get("level_fraction", None, 0.5)?;
    let band: f64 = if dubins { ctx.get("band", None, 0.3)? } else { 0.0 };
    if resolution < 2 || (dubins && headings == 0) {
        return Err(CliError::validation("resolution must be at least 2 and headings at least 1"));
    }
    ctx.seal()?;

    let points: Vec<Vec<f64>> = if dubins {
        let p = DubinsParams { dt: env.spec().dt.unwrap_or(0.05), ..DubinsParams::default() };
        let w = 2.0 * p.half_width / resolution as f64;
        let mut pts = Vec::new();
        for i in 0..resolution {
            for j in 0..resolution {
                let (x, y) = (-p.half_width + (i as f64 + 0.5) * w, -p.half_width + (j as f64 + 0.5) * w);
                for k in 0..headings {
                    let th = -std::f64::consts::PI + 2.0 * std::f64::consts::PI * k as f64 / headings as f64;
                    pts.push(vec![x, y, th]);
                }
            }
        }
        pts.retain(|q| env.contains(q));
        pts
    } else {
        let b = DoubleIntegratorParams::default().bound;
        vertex_grid(&[(-b, b, resolution), (-b, b, resolution)])?
    };
    let psi = policy_values(&model, &points)?;
    let actions: Vec<Vec<f64>> = points.iter().map(|x| model.act(x)).collect::<Result<_, _>>()?;
    let phi: Vec<f64> = points.iter().map(|x| model.phi(x)).collect::<Result<_, _>>()?;

    let coord_names = if dubins { "x,y,theta" } else { "p,v" };
    let act_names: Vec<String> = (0..model.action_dim()).map(|i| format!("a{i}")).collect();
    let psi_header = format!("{coord_names},{},psi", act_names.join(","));
    ctx.add(
        "psi_grid.csv",
        values_csv(&psi_header, &points, |i| actions[i].iter().copied().chain([psi[i]]).collect()),
    );
    ctx.add("phi_grid.csv", values_csv(&format!("{coord_names},phi"), &points, |i| vec![phi[i]]));

    let mut summary = format!("lambda = {}\npoints = {}\n", fmt_f64(model.lambda), points.len());
    if dubins {
        let p = DubinsParams::default();
        let (into, away, n) = heading_contrast(&model, p.obstacle_radius, band, p.half_width, resolution)?;
        writeln!(summary, "band_positions = {n}\npsi_heading_into = {}\npsi_heading_away = {}", fmt_f64(into), fmt_f64(away))
            .unwrap();
        println!("lambda = {}, mean psi heading into obstacle {into:.4}, away {away:.4}", model.lambda);
    } else {
        let p = DoubleIntegratorParams { dt: env.spec().dt.unwrap_or(0.05), ..DoubleIntegratorParams::default() };
        let max = psi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let learned: Vec<bool> = psi.iter().map(|&v| v > level * max).collect();
        let analytic: Vec<bool> = points.iter().map(|q| dint_invariant_set(q[0], q[1], &p)).collect();
        let iou = set_iou(&learned, &analytic)?;
        writeln!(summary, "psi_max = {}\nlevel_fraction = {level}\niou = {}", fmt_f64(max), fmt_f64(iou)).unwrap();
        println!("lambda = {}, IoU against the invariant set = {iou:.4}", model.lambda);
    }
    ctx.add("summary.txt", summary);
    ctx.commit("eval-grid")
}

pub fn filter_eval(ctx: &mut RunContext, a: FilterEvalArgs) -> CliResult<()> {
    let env = ctx.env(a.env)?;
    let model = load_model(ctx, a.model_dir, env.as_ref())?;
    let epsilon: f64 = ctx.get("epsilon", a.epsilon, 0.2)?;
    let episodes: usize = ctx.get("episodes", a.episodes, 100)?;
    let horizon: usize = ctx.get("horizon", a.horizon, 200)?;
    let reference: String = ctx.get("ref", a.reference, "random".to_string())?;
    let config = FilterConfig::new(epsilon, ReferencePolicy::parse(&reference)?)?;
    if episodes == 0 {
        return Err(CliError::validation("episodes must be at least 1"));
    }
    ctx.seal()?;
    let (report, trace) = evaluate_filter(env.as_ref(), &model, &config, episodes, horizon, ctx.seed)?;
    println!(
        "violations filtered {} / unfiltered {} over {} episodes, intervention rate {:.4}",
        report.violations_filtered, report.violations_unfiltered, report.n_episodes, report.intervention_rate
    );
    ctx.add("report.csv", report.to_csv());
    ctx.add("phi_trace.csv", phi_trace_csv(&trace));
    ctx.commit("filter-eval")
}

pub fn baseline_hj(ctx: &mut RunContext, a: BaselineArgs) -> CliResult<()> {
    let id = ctx_env_default(ctx)?;
    let env = ctx.env(Some(id))?;
    if env.id() != "dint" {
        return Err(CliError::validation("baseline-hj supports the double integrator only"));
    }
    let resolution: usize = ctx.get("resolution", a.resolution, 101)?;
    let actions: usize = ctx.get("actions", None, 11)?;
    let deterministic = env.transition(&[0.0, 0.0], &[0.0], &mut eigensafe::SimRng::new(0)) == vec![0.0, 0.0];
    let n_mc: usize = ctx.get("n_mc", None, if deterministic { 1 } else { 1000 })?;
    let discount: f64 = ctx.get("discount", a.discount, 0.99)?;
    let tol: f64 = ctx.get("tol", None, 1e-9)?;
    let max_iters: usize = ctx.get("max_iters", None, 100_000)?;
    let floor: Option<f64> = ctx.config_mut().take("terminal_value")?;
    ctx.seal()?;

    let d = discretize(env.as_ref(), &DiscretizeOptions::new(vec![resolution, resolution], actions, n_mc, ctx.seed))?;
    let b = DoubleIntegratorParams::default().bound;
    let margin: Vec<f64> = d.centers.iter().map(|c| 1.0 - c[0].abs().max(c[1].abs()) / b).collect();
    let floor = floor.unwrap_or_else(|| default_terminal_value(&margin));
    ctx.record("terminal_value", fmt_f64(floor));
    let sol = discounted_reachability_vi(&d.kernel, &margin, discount, floor, tol, max_iters)?;
    let frac = sol.super_zero_fraction();
    let mut values = String::from("p,v,value\n");
    for (c, v) in d.centers.iter().zip(&sol.values) {
        writeln!(values, "{},{},{}", fmt_f64(c[0]), fmt_f64(c[1]), fmt_f64(*v)).unwrap();
    }
    ctx.add("values.csv", values);
    ctx.add(
        "summary.txt",
        format!(
            "states = {}\nsuper_zero_fraction = {}\niterations = {}\nresidual = {}\nterminal_value = {}\n",
            sol.values.len(),
            fmt_f64(frac),
            sol.iterations,
            fmt_f64(sol.residual),
            fmt_f64(floor)
        ),
    );
    println!("super-zero fraction {frac:.4} after {} iterations", sol.iterations);
    ctx.commit("baseline-hj")
}

/// `env` defaults to `dint` for the baseline, unless the config names one.
fn ctx_env_default(ctx: &mut RunContext) -> CliResult<String> {
    Ok(ctx.config_mut().take::<String>("env")?.unwrap_or_else(|| "dint".to_string()))
}

pub fn gradcheck(ctx: &mut RunContext, a: GradcheckArgs) -> CliResult<()> {
    let trials: usize = ctx.get("trials", a.trials, 10)?;
    if trials == 0 {
        return Err(CliError::validation("trials must be at least 1"));
    }
    ctx.seal()?;
    let r = loss_gradient_check(trials, ctx.seed)?;
    let rows = [("j_eig", r.j_eig), ("j_plus", r.j_plus), ("j_policy", r.j_policy), ("j_phi", r.j_phi)];
    let mut csv = String::from("loss,max_relative_error\n");
    for (name, e) in rows {
        writeln!(csv, "{name},{}", fmt_f64(e)).unwrap();
        println!("{name:<9} max relative error {e:.3e}");
    }
    println!("max relative error {:.3e} over {trials} trials", r.max());
    ctx.add("gradcheck.csv", csv);
    ctx.commit("gradcheck")?;
    if !(r.max() < GRADCHECK_TOL) {
        return Err(CliError::Numerical(format!("max relative error {:.3e} >= {GRADCHECK_TOL:e}", r.max())));
    }
    Ok(())
}

fn parse_resolution(s: &str, dim: usize) -> CliResult<Vec<usize>> {
    let vals: Vec<usize> = s
        .split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| CliError::validation(format!("bad resolution `{s}`"))))
        .collect::<CliResult<_>>()?;
    match vals.len() {
        1 => Ok(vec![vals[0]; dim]),
        n if n == dim => Ok(vals),
        n => Err(CliError::validation(format!("resolution lists {n} values for a {dim}-dimensional state"))),
    }
}

pub fn oracle(ctx: &mut RunContext, a: OracleArgs) -> CliResult<()> {
    let env = ctx.env(a.env)?;
    let dubins = env.id() == "dubins";
    let res_text: String = ctx.get("resolution", a.resolution, if dubins { "24,24,16" } else { "101" }.to_string())?;
    let resolution = parse_resolution(&res_text, env.spec().state_dim)?;
    let actions: usize = ctx.get("actions", None, if dubins { 5 } else { 11 })?;
    let n_mc: usize = ctx.get("n_mc", None, if dubins { 200 } else { 1000 })?;
    let tol: f64 = ctx.get("tol", None, 1e-10)?;
    let rounds: usize = ctx.get("rounds", None, 30)?;
    ctx.seal()?;

    // Start from braking for the double integrator and driving straight for the car.
    let last = actions - 1;
    let init = move |c: &[f64]| -> usize {
        if dubins {
            last / 2
        } else if c[1] > 0.0 {
            0
        } else {
            last
        }
    };
    let opts = DiscretizeOptions::new(resolution, actions, n_mc, ctx.seed);
    let (d, run) = grid_oracle(env.as_ref(), &opts, &init, tol, rounds)?;
    let gamma = run.eigenpair.eigenvalue;
    let mut text = format!("states = {}\ngamma = {}\nrounds = {}\n", d.kernel.n_states(), fmt_f64(gamma), run.eigenvalues.len());
    for (i, g) in run.eigenvalues.iter().enumerate() {
        writeln!(text, "round{i} = {}", fmt_f64(*g)).unwrap();
    }
    println!("gamma* = {gamma} after {} evaluations on {} states", run.eigenvalues.len(), d.kernel.n_states());
    ctx.add("oracle.txt", text);
    ctx.commit("oracle")
}
