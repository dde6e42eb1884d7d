//! Command line front end: gentrig, orbit, poincare, normalform, twist,
//! decay, scan, verify — all driven by one JSON config plus flag overrides.
//!
//! Exit codes: 0 success, 2 config/schema error, 3 numeric failure.

mod config;
mod export;
mod output;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use config::RunConfig;
use oscnf::aa::{from_action_angle, to_action_angle, ActionAngleState, CartesianState};
use oscnf::diagnostics::{boundedness_scan, decay_fit, scan_seeds, twist_coefficients, twist_measure};
use oscnf::flow::{orbit_samples, period_map};
use oscnf::forcing::Forcing;
use oscnf::gentrig::build_gentrig;
use oscnf::nf::normal_form;
use output::{CsvField, CsvWriter};

#[derive(Parser)]
#[command(
    name = "oscnf",
    about = "Action-angle machinery, period maps and normal forms for periodically forced oscillators",
    version
)]
struct Cli {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Print the fully resolved configuration and exit.
    #[arg(long, global = true)]
    print_config: bool,

    /// Worker threads for scans (1 = serial, the reproducibility reference).
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    /// Override the degree parameter n of the forcing.
    #[arg(long, global = true)]
    n: Option<u32>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate the generalized sine/cosine pair.
    Gentrig {
        /// Output rows over one full period.
        #[arg(long, default_value_t = 512)]
        samples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate one trajectory and emit chart data along it.
    Orbit {
        #[arg(long, default_value_t = 1.0)]
        k: f64,
        #[arg(long, default_value_t = 0.0)]
        kappa: f64,
        /// Initial Cartesian position (overrides --k/--kappa when both
        /// --x and --y are given).
        #[arg(long)]
        x: Option<f64>,
        #[arg(long)]
        y: Option<f64>,
        /// Final time; defaults to one forcing period in the configured
        /// direction.
        #[arg(long)]
        t1: Option<f64>,
        #[arg(long, default_value_t = 256)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Iterate the period map and emit one row per return.
    Poincare {
        #[arg(long, default_value_t = 10.0)]
        k: f64,
        #[arg(long, default_value_t = 0.0)]
        kappa: f64,
        #[arg(long, default_value_t = 1000)]
        iters: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the two-stage normalization and emit the full JSON report.
    Normalform {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measured vs predicted twist across the configured Λ values.
    Twist {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Period-map perturbation decay measurement and log-log slopes.
    Decay {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Long boundedness scan; CSV per seed plus a JSON summary.
    Scan {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Summary JSON path (stdout when omitted and --out is set).
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Run the built-in invariant battery; exit nonzero on any failure.
    Verify,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &anyhow::Error) -> u8 {
    if let Some(core) = e.downcast_ref::<oscnf::Error>() {
        match core {
            oscnf::Error::Domain(_) | oscnf::Error::Config(_) => 2,
            _ => 3,
        }
    } else {
        // config loading / schema / IO problems
        2
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(n) = cli.n {
        cfg.forcing.n = n;
    }
    cfg.resolve();
    if cli.print_config {
        println!("{}", cfg.canonical_json());
        return Ok(ExitCode::SUCCESS);
    }
    if cli.jobs > 1 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
            .context("building the worker pool")?;
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build_global()
            .context("building the worker pool")?;
    }

    let hash = cfg.hash();
    let forcing = Forcing::<f64>::from_config(&cfg.forcing)?;
    let report = forcing.validate();
    if !report.valid {
        for issue in &report.issues {
            eprintln!("forcing: {}", issue.what);
        }
        anyhow::bail!(oscnf::Error::Config("forcing failed validation".into()));
    }
    let g = build_gentrig::<f64>(cfg.forcing.n, cfg.gentrig.harmonics, cfg.gentrig.tolerance)?;
    let icfg = cfg.integrator.to_core()?;

    match cli.command {
        Command::Gentrig { samples, out } => {
            let mut w = CsvWriter::create(
                out.as_ref(),
                &hash,
                &["kappa", "sn", "cn", "identity_residual"],
            )?;
            let n = g.n() as i32;
            for i in 0..=samples {
                let kappa = g.period() * i as f64 / samples as f64;
                let (s, c) = g.sn_cn(kappa);
                let resid = (c * c + s.powi(2 * n) - 1.0).abs();
                w.row(&[
                    CsvField::Num(kappa),
                    CsvField::Num(s),
                    CsvField::Num(c),
                    CsvField::Num(resid),
                ])?;
            }
            w.finish()?;
        }
        Command::Orbit {
            k,
            kappa,
            x,
            y,
            t1,
            points,
            out,
        } => {
            let state = match (x, y) {
                (Some(x), Some(y)) => to_action_angle(&g, CartesianState { x, y, t: 0.0 })?,
                (None, None) => ActionAngleState { k, kappa, t: 0.0 },
                _ => anyhow::bail!(oscnf::Error::Config(
                    "give both --x and --y, or neither".into()
                )),
            };
            let t1 = t1.unwrap_or(match icfg.direction {
                oscnf::flow::Direction::Backward => -forcing.period(),
                oscnf::flow::Direction::Forward => forcing.period(),
            });
            let rows = orbit_samples(&g, &forcing, &icfg, state, t1, points)?;
            let mut w = CsvWriter::create(
                out.as_ref(),
                &hash,
                &["t", "x", "y", "K", "kappa", "Lambda", "winding"],
            )?;
            for r in rows {
                w.row(&[
                    CsvField::Num(r.t),
                    CsvField::Num(r.x),
                    CsvField::Num(r.y),
                    CsvField::Num(r.k),
                    CsvField::Num(r.kappa),
                    CsvField::Num(r.lambda),
                    CsvField::Int(r.winding),
                ])?;
            }
            w.finish()?;
        }
        Command::Poincare {
            k,
            kappa,
            iters,
            out,
        } => {
            let mut w = CsvWriter::create(
                out.as_ref(),
                &hash,
                &["iter", "x", "y", "K", "kappa", "Lambda", "winding"],
            )?;
            let mut state = ActionAngleState { k, kappa, t: 0.0 };
            let emit = |w: &mut CsvWriter, i: usize, s: &ActionAngleState<f64>, winding: i64|
             -> anyhow::Result<()> {
                let c = from_action_angle(&g, *s)?;
                let lambda = s.k.powf((g.n() as f64 - 1.0) / (g.n() as f64 + 1.0));
                w.row(&[
                    CsvField::Int(i as i64),
                    CsvField::Num(c.x),
                    CsvField::Num(c.y),
                    CsvField::Num(s.k),
                    CsvField::Num(s.kappa),
                    CsvField::Num(lambda),
                    CsvField::Int(winding),
                ])
            };
            emit(&mut w, 0, &state, 0)?;
            for i in 1..=iters {
                let s = period_map(&g, &forcing, &icfg, state)?;
                let per = g.period();
                let wrapped = s.kappa_out.rem_euclid(per);
                state = ActionAngleState {
                    k: s.k_out,
                    kappa: wrapped,
                    t: 0.0,
                };
                emit(&mut w, i, &state, s.winding)?;
            }
            w.finish()?;
        }
        Command::Normalform { out } => {
            let opts = cfg.normal_form.to_core(cfg.forcing.n);
            let r = normal_form(&g, &forcing, &opts)?;
            let v = export::normal_form_json(&r, &forcing, &hash);
            output::write_json(out.as_ref(), &v)?;
        }
        Command::Twist { out } => {
            let opts = cfg.normal_form.to_core(cfg.forcing.n);
            let r = normal_form(&g, &forcing, &opts)?;
            let tw = twist_coefficients(&r.h_special, &forcing)?;
            let grid: Vec<f64> = (0..cfg.twist.kappa_phases)
                .map(|i| g.period() * i as f64 / cfg.twist.kappa_phases as f64)
                .collect();
            let mut w = CsvWriter::create(
                out.as_ref(),
                &hash,
                &["lambda", "measured", "predicted", "difference"],
            )?;
            for &lam in &cfg.twist.lambdas {
                let m = twist_measure(&g, &forcing, &icfg, lam, &grid, cfg.twist.fd_step)?;
                let p = tw.dalpha(lam);
                w.row(&[
                    CsvField::Num(lam),
                    CsvField::Num(m),
                    CsvField::Num(p),
                    CsvField::Num(m - p),
                ])?;
            }
            w.finish()?;
        }
        Command::Decay { out } => {
            let twist = if cfg.decay.use_twist_series {
                let opts = cfg.normal_form.to_core(cfg.forcing.n);
                let r = normal_form(&g, &forcing, &opts)?;
                Some(twist_coefficients(&r.h_special, &forcing)?)
            } else {
                None
            };
            let fit = decay_fit(
                &g,
                &forcing,
                &icfg,
                cfg.decay.lambda_min,
                cfg.decay.lambda_max,
                cfg.decay.points,
                cfg.decay.kappa_phases,
                twist.as_ref(),
            )?;
            let mut w =
                CsvWriter::create(out.as_ref(), &hash, &["lambda", "max_abs_f", "max_abs_g"])?;
            for p in &fit.points {
                w.row(&[
                    CsvField::Num(p.lambda),
                    CsvField::Num(p.max_f),
                    CsvField::Num(p.max_g),
                ])?;
            }
            w.finish()?;
            eprintln!(
                "slope_F = {:.4}, slope_G = {:.4}{}",
                fit.slope_f,
                fit.slope_g,
                if fit.degenerate { " (degenerate fit)" } else { "" }
            );
        }
        Command::Scan { out, summary } => {
            let seeds = scan_seeds(
                &g,
                cfg.scan.seeds,
                cfg.scan.k_min,
                cfg.scan.k_max,
                cfg.scan.rng_seed,
            );
            let rep = boundedness_scan(
                &g,
                &forcing,
                &icfg,
                &seeds,
                cfg.scan.iterations,
                cfg.scan.k_ceiling,
            )?;
            let mut w = CsvWriter::create(
                out.as_ref(),
                &hash,
                &[
                    "seed", "k0", "kappa0", "k_min", "k_max", "envelope_ratio", "iterations",
                    "escaped",
                ],
            )?;
            for (i, s) in rep.seeds.iter().enumerate() {
                w.row(&[
                    CsvField::Int(i as i64),
                    CsvField::Num(s.k0),
                    CsvField::Num(s.kappa0),
                    CsvField::Num(s.k_min),
                    CsvField::Num(s.k_max),
                    CsvField::Num(s.k_max / s.k_min),
                    CsvField::Int(s.iterations as i64),
                    CsvField::Str(s.escaped.to_string()),
                ])?;
            }
            w.finish()?;
            let mean_ratio = rep
                .seeds
                .iter()
                .map(|s| s.k_max / s.k_min)
                .sum::<f64>()
                / rep.seeds.len().max(1) as f64;
            let summary_value = serde_json::json!({
                "config_sha256": hash,
                "seeds": rep.seeds.len(),
                "iterations": cfg.scan.iterations,
                "escapes": rep.escapes,
                "failures": rep.failures,
                "worst_envelope_ratio": rep.worst_envelope_ratio,
                "mean_envelope_ratio": mean_ratio,
            });
            match (&summary, &out) {
                (Some(p), _) => output::write_json(Some(p), &summary_value)?,
                (None, Some(_)) => output::write_json(None, &summary_value)?,
                (None, None) => eprintln!("{summary_value}"),
            }
        }
        Command::Verify => {
            let failures = verify::run(&cfg, &g, &forcing, &icfg)?;
            if failures > 0 {
                eprintln!("verify: {failures} check(s) failed");
                return Ok(ExitCode::from(3));
            }
            println!("verify: all checks passed");
        }
    }
    Ok(ExitCode::SUCCESS)
}
