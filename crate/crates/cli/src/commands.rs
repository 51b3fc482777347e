use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use switchmargin_core::hierarchy::build_level;
use switchmargin_core::linalg::Vector;
use switchmargin_core::lyapunov::{under_approximate_margin, AlgorithmConfig, LyapunovCertificate};
use switchmargin_core::ode::IntegratorConfig;
use switchmargin_core::periodic::{transition_matrix, unit_eigenvector, upper_bound_margin, UpperBoundConfig, Witness};
use switchmargin_core::switching::{
    find_switching_sequence, simulate_fixed_signal, worst_case_impulse, ImpulseSetup, Indicator, ReplayMode,
    SwitchingSignal,
};

use crate::args::{
    Command, CommonArgs, ImpulseArgs, IntegratorArgs, LevelArgs, MarginLowerArgs, MarginUpperArgs, Mode, SimulateArgs,
    WorstSwitchArgs,
};
use crate::cache::{self, CertificateCache};
use crate::error::{CliError, CliResult};
use crate::output::{write_json, write_trajectory_file};
use crate::problem::{parse_state, Problem};
use crate::report::{
    CommandResult, ImpulseResult, LowerResult, Meta, RunReport, SimulateResult, Timestamp, UpperResult,
    WorstSwitchResult, DETERMINISM_NOTE,
};

pub const DEFAULT_T_F: f64 = 20.0;

pub fn order_to_level(order: usize) -> CliResult<usize> {
    if order == 0 || order % 2 != 0 {
        return Err(CliError::Usage(format!(
            "--order must be a positive even number (the order 2i of the Lyapunov function), got {order}"
        )));
    }
    Ok(order / 2)
}

fn requested_level(args: &LevelArgs) -> CliResult<Option<usize>> {
    match (args.order, args.level) {
        (Some(o), _) => order_to_level(o).map(Some),
        (None, Some(0)) => Err(CliError::Usage("--level must be at least 1".into())),
        (None, l) => Ok(l),
    }
}

fn integrator(problem: &Problem, args: &IntegratorArgs) -> CliResult<IntegratorConfig> {
    let d = &problem.defaults;
    let mut cfg = IntegratorConfig::default();
    cfg.rtol = args.rtol.or(d.rtol).unwrap_or(cfg.rtol);
    cfg.atol = args.atol.or(d.atol).unwrap_or(cfg.atol);
    cfg.event_tol = args.event_tol.or(d.event_tol).unwrap_or(cfg.event_tol);
    cfg.sample_dt = args.sample_dt.or(d.sample_dt);
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn initial_state(problem: &Problem, flag: Option<&str>) -> CliResult<Vector> {
    match flag {
        Some(text) => parse_state(text, problem.n()),
        None => problem
            .default_x0()
            .ok_or_else(|| CliError::Usage("--x0 is required (the problem file has no defaults.x0)".into())),
    }
}

fn horizon(problem: &Problem, flag: Option<f64>) -> CliResult<f64> {
    let t_f = flag.or(problem.defaults.t_f).unwrap_or(DEFAULT_T_F);
    if !(t_f > 0.0 && t_f.is_finite()) {
        return Err(CliError::Usage(format!("--tf must be positive, got {t_f}")));
    }
    Ok(t_f)
}

fn delta_arg(problem: &Problem, flag: Option<f64>) -> CliResult<f64> {
    let delta = flag
        .or(problem.defaults.delta)
        .ok_or_else(|| CliError::Usage("--delta is required (the problem file has no defaults.delta)".into()))?;
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(CliError::Usage(format!("--delta must be non-negative, got {delta}")));
    }
    Ok(delta)
}

struct Context {
    problem: Problem,
    cache_path: std::path::PathBuf,
    started: Instant,
    started_unix_s: f64,
}

impl Context {
    fn new(common: &CommonArgs) -> CliResult<Self> {
        let started = Instant::now();
        let started_unix_s = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0);
        let problem = Problem::load(&common.problem)?;
        let cache_path = cache::cache_path(common.cache.as_deref(), problem.default_cache_path());
        Ok(Self {
            problem,
            cache_path,
            started,
            started_unix_s,
        })
    }

    fn certificate(&self, level: Option<usize>) -> CliResult<LyapunovCertificate> {
        let store = CertificateCache::load(&self.cache_path)?;
        cache::require(&store, &self.cache_path, &self.problem.hash, level)
    }

    fn optional_certificate(&self, level: Option<usize>) -> CliResult<Option<LyapunovCertificate>> {
        let store = CertificateCache::load(&self.cache_path)?;
        Ok(store.best(&self.problem.hash, level).cloned())
    }

    fn finish(self, command: &str, out: Option<&Path>, result: CommandResult) -> CliResult<RunReport> {
        let report = RunReport {
            meta: Meta {
                tool: "switchmargin".into(),
                version: env!("CARGO_PKG_VERSION").into(),
                command: command.into(),
                determinism: DETERMINISM_NOTE.into(),
                timestamp: Timestamp {
                    started_unix_s: self.started_unix_s,
                    elapsed_s: self.started.elapsed().as_secs_f64(),
                },
            },
            problem: self.problem.echo(),
            result,
        };
        if let Some(path) = out {
            write_json(path, &report)?;
        }
        Ok(report)
    }
}

fn margin_lower(args: &MarginLowerArgs) -> CliResult<RunReport> {
    let ctx = Context::new(&args.common)?;
    let d = &ctx.problem.defaults;
    let mut cfg = AlgorithmConfig::default();
    cfg.i_max = match (args.order, args.i_max) {
        (Some(o), _) => order_to_level(o)?,
        (None, Some(i)) => i,
        (None, None) => d.i_max.unwrap_or(cfg.i_max),
    };
    cfg.epsilon = args.epsilon.or(d.epsilon);
    if let Some(tol) = args.sdp_tol.or(d.sdp_tol) {
        cfg.lyapunov.sdp.tol = tol;
    }
    if let Some(m) = args.delta_max {
        cfg.delta_max = m;
    }
    let lower = under_approximate_margin(&ctx.problem.sys, &cfg)?;

    let mut store = CertificateCache::load(&ctx.cache_path)?;
    store.insert(&ctx.problem.hash, lower.certificate.clone());
    store.save(&ctx.cache_path)?;

    println!("delta_lower = {:.6}", lower.delta_lower);
    println!("level = {} (order {})", lower.certificate.level, 2 * lower.certificate.level);
    println!("epsilon = {:.6e}", lower.epsilon);
    println!("certificate stored in {}", ctx.cache_path.display());

    let result = CommandResult::MarginLower(LowerResult {
        settings: cfg,
        report: lower,
        cache: ctx.cache_path.display().to_string(),
    });
    ctx.finish("margin-lower", args.common.out.as_deref(), result)
}

fn print_table(signal: &SwitchingSignal) {
    let join = |v: &[f64]| v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(", ");
    println!("T = {{{}}}", join(signal.times()));
    println!("Sigma = {{{}}}", join(signal.values()));
}

fn worst_switch(args: &WorstSwitchArgs) -> CliResult<RunReport> {
    let ctx = Context::new(&args.common)?;
    let p = &ctx.problem;
    let delta = delta_arg(p, args.delta)?;
    let x0 = initial_state(p, args.x0.as_deref())?;
    let t_f = horizon(p, args.tf)?;
    let icfg = integrator(p, &args.integrator)?;
    let cert = ctx.certificate(requested_level(&args.level)?)?;
    let level = build_level(&p.sys, cert.level)?;
    let (signal, traj) = find_switching_sequence(&p.sys, &level, &cert.p, delta, &x0, t_f, &icfg)?;
    if let Some(path) = &args.out_csv {
        let ind = Indicator::new(&level, &cert.p)?;
        write_trajectory_file(path, p.n(), &traj, Some(&ind), None)?;
    }
    print_table(&signal);
    if traj.diverged {
        println!("trajectory reached the overflow guard at t = {:.6}", traj.final_time());
    }
    let final_state = traj.samples.last().map(|s| s.state().as_slice().to_vec()).unwrap_or_default();
    let result = CommandResult::WorstSwitch(WorstSwitchResult {
        delta,
        x0: x0.as_slice().to_vec(),
        t_f,
        level: cert.level,
        delta_certified: cert.delta_certified,
        integrator: icfg,
        signal,
        diverged: traj.diverged,
        final_state,
    });
    ctx.finish("worst-switch", args.common.out.as_deref(), result)
}

fn margin_upper(args: &MarginUpperArgs) -> CliResult<RunReport> {
    let ctx = Context::new(&args.common)?;
    let p = &ctx.problem;
    let x0 = initial_state(p, args.x0.as_deref())?;
    let t_f = horizon(p, args.tf)?;
    let mut cfg = UpperBoundConfig {
        integrator: integrator(p, &args.integrator)?,
        ..Default::default()
    };
    cfg.increment = args.increment.or(p.defaults.increment).unwrap_or(cfg.increment);
    cfg.tol_unit = args.tol_unit.or(p.defaults.tol_unit).unwrap_or(cfg.tol_unit);
    cfg.max_steps = args.max_steps.unwrap_or(cfg.max_steps);
    let cert = ctx.certificate(requested_level(&args.level)?)?;
    let upper = upper_bound_margin(&p.sys, &cert, &x0, t_f, &cfg)?;

    if let Some(path) = &args.out_csv {
        let level = build_level(&p.sys, cert.level)?;
        let ind = Indicator::new(&level, &cert.p)?;
        let traj = match upper.witness {
            Witness::Periodic(_) => {
                find_switching_sequence(&p.sys, &level, &cert.p, upper.delta_upper, &x0, t_f, &cfg.integrator)?.1
            }
            Witness::TrivialHurwitzLoss(_) => {
                simulate_fixed_signal(&p.sys, &upper.signal, &x0, ReplayMode::Ode, &cfg.integrator)?
            }
        };
        write_trajectory_file(path, p.n(), &traj, Some(&ind), None)?;
    }

    let w = upper.witness.inner();
    println!("delta_lower = {:.6}", upper.delta_lower);
    println!("delta_upper = {:.6}", upper.delta_upper);
    match &upper.witness {
        Witness::Periodic(_) => println!(
            "witness = periodic window of segments {}..{}, unit eigenvalue residual {:.3e}",
            w.j, w.k, w.unit_eig_residual
        ),
        Witness::TrivialHurwitzLoss(_) => println!("witness = A + delta*A0 is not Hurwitz"),
    }
    print_table(&upper.periodic_signal);

    let result = CommandResult::MarginUpper(Box::new(UpperResult {
        x0: x0.as_slice().to_vec(),
        t_f,
        settings: cfg,
        gap: upper.delta_upper - upper.delta_lower,
        report: upper,
    }));
    ctx.finish("margin-upper", args.common.out.as_deref(), result)
}

fn impulse(args: &ImpulseArgs) -> CliResult<RunReport> {
    let ctx = Context::new(&args.common)?;
    let p = &ctx.problem;
    let (Some(b), Some(c)) = (&p.b, &p.c) else {
        let missing = if p.b.is_none() { "b" } else { "c" };
        return Err(CliError::parse(
            &p.path,
            format!("field `{missing}` is required by the impulse command"),
        ));
    };
    let delta = delta_arg(p, args.delta)?;
    let t_f = horizon(p, args.tf)?;
    let icfg = integrator(p, &args.integrator)?;
    let cert = ctx.certificate(requested_level(&args.level)?)?;
    let level = build_level(&p.sys, cert.level)?;
    let setup = ImpulseSetup {
        b: b.clone(),
        c: c.clone(),
    };
    let resp = worst_case_impulse(&p.sys, &setup, &level, &cert.p, delta, t_f, &icfg)?;
    if let Some(path) = &args.out_csv {
        let ind = Indicator::new(&level, &cert.p)?;
        write_trajectory_file(
            path,
            p.n(),
            &resp.trajectory,
            Some(&ind),
            Some((&resp.h_worst, &resp.h_nominal)),
        )?;
    }
    println!("peak |h| worst-case = {:.6}", resp.peak_worst());
    println!("peak |h| unswitched = {:.6}", resp.peak_nominal());
    let result = CommandResult::Impulse(ImpulseResult {
        delta,
        t_f,
        level: cert.level,
        b: b.as_slice().to_vec(),
        c: c.as_slice().to_vec(),
        integrator: icfg,
        peak_worst: resp.peak_worst(),
        peak_nominal: resp.peak_nominal(),
        signal: resp.signal,
    });
    ctx.finish("impulse", args.common.out.as_deref(), result)
}

/// A bare signal, or the most specific signal inside a report.
pub fn load_signal(path: &Path) -> CliResult<SwitchingSignal> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::parse(path, e.to_string()))?;
    let candidate = if value.get("times").is_some() {
        &value
    } else {
        let result = value
            .get("result")
            .ok_or_else(|| CliError::parse(path, "expected `times`/`values` or a report with a signal"))?;
        result
            .get("report")
            .and_then(|r| r.get("periodic_signal"))
            .or_else(|| result.get("signal"))
            .ok_or_else(|| CliError::parse(path, "report contains no signal"))?
    };
    serde_json::from_value(candidate.clone()).map_err(|e| CliError::parse(path, e.to_string()))
}

fn simulate(args: &SimulateArgs) -> CliResult<RunReport> {
    let ctx = Context::new(&args.common)?;
    let p = &ctx.problem;
    if args.cycles == 0 {
        return Err(CliError::Usage("--cycles must be at least 1".into()));
    }
    let base = load_signal(&args.signal)?;
    let x0 = match args.x0.as_deref() {
        Some("cycle") => {
            let a_d = transition_matrix(&p.sys, &base, 0, base.segments())?;
            unit_eigenvector(&a_d)?.ok_or_else(|| {
                CliError::Usage("--x0 cycle: the transition matrix has no real eigenvalue nearest the unit circle".into())
            })?
        }
        other => initial_state(p, other)?,
    };
    let signal = base.repeated(args.cycles)?;
    let icfg = integrator(p, &args.integrator)?;
    let mode = match args.mode {
        Mode::Exact => ReplayMode::Exact,
        Mode::Ode => ReplayMode::Ode,
    };
    let traj = simulate_fixed_signal(&p.sys, &signal, &x0, mode, &icfg)?;
    let cert = ctx.optional_certificate(requested_level(&args.level)?)?;
    if let Some(path) = &args.out_csv {
        let ind = match &cert {
            Some(c) => Some(Indicator::new(&build_level(&p.sys, c.level)?, &c.p)?),
            None => None,
        };
        write_trajectory_file(path, p.n(), &traj, ind.as_ref(), None)?;
    }
    let final_state = traj.samples.last().map(|s| s.state().as_slice().to_vec()).unwrap_or_default();
    println!("replayed {} segments over [0, {:.6}]", signal.segments(), signal.end());
    println!(
        "final state = [{}]",
        final_state.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(", ")
    );
    let result = CommandResult::Simulate(SimulateResult {
        source: args.signal.display().to_string(),
        cycles: args.cycles,
        mode,
        x0: x0.as_slice().to_vec(),
        level: cert.map(|c| c.level),
        integrator: icfg,
        signal,
        diverged: traj.diverged,
        final_state,
    });
    ctx.finish("simulate", args.common.out.as_deref(), result)
}

pub fn run(command: &Command) -> CliResult<RunReport> {
    match command {
        Command::MarginLower(a) => margin_lower(a),
        Command::WorstSwitch(a) => worst_switch(a),
        Command::MarginUpper(a) => margin_upper(a),
        Command::Impulse(a) => impulse(a),
        Command::Simulate(a) => simulate(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orders_must_be_even() {
        assert_eq!(order_to_level(14).unwrap(), 7);
        assert!(order_to_level(7).is_err());
        assert!(order_to_level(0).is_err());
    }

    #[test]
    fn signal_from_bare_file_or_report() {
        let dir = tempfile::tempdir().unwrap();
        let bare = dir.path().join("s.json");
        std::fs::write(&bare, r#"{"times":[0,1,2],"values":[1,0]}"#).unwrap();
        assert_eq!(load_signal(&bare).unwrap().segments(), 2);
        let rep = dir.path().join("r.json");
        std::fs::write(
            &rep,
            r#"{"result":{"command":"worst-switch","signal":{"times":[0,3],"values":[0.5]}}}"#,
        )
        .unwrap();
        assert_eq!(load_signal(&rep).unwrap().values(), &[0.5]);
        let bad = dir.path().join("b.json");
        std::fs::write(&bad, r#"{"times":[0,1],"values":[1,0]}"#).unwrap();
        assert!(load_signal(&bad).is_err());
    }
}
