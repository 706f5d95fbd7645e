use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;

use accwave::cases::{
    case_config, empirical_config, run_empirical_study, run_ring_study, run_wave_study, RingStudy,
    WaveStudy, EMPIRICAL_DRAWS,
};
use accwave::config::{LeaderConfig, ScenarioConfig};
use accwave::io::{self, Precision, StatsRow};
use accwave::metrics::histogram;
use accwave::micro::{simulate_platoon, LeaderMotion};
use accwave::signal::{fourier_decompose, periodic_reconstruct, resample_linear, DEFAULT_MODES};
use accwave::wave::{bode, log_grid, string_stability_class, wave_speed_closed_form};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "accwave",
    version,
    about = "Traffic-wave analysis for pure ACC traffic"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured platoon and write its trajectories.
    Simulate(Common),
    /// Bode data, string-stability class and closed-form wave speeds.
    Wave {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1e-2)]
        omega_min: f64,
        #[arg(long, default_value_t = 100.0)]
        omega_max: f64,
        #[arg(long, default_value_t = 10_000)]
        points: usize,
    },
    /// Ring comparison between the micro simulation and the finite-volume solver.
    Pde(Common),
    /// Proposed and baseline wave paths with deviation statistics.
    Metrics {
        #[command(flatten)]
        common: Common,
        /// Analyse these trajectories (leader first by id) instead of simulating.
        #[arg(long)]
        trajectories: Option<PathBuf>,
    },
    /// Fourier decomposition and periodic reconstruction of a speed profile.
    Fft {
        #[command(flatten)]
        common: Common,
        /// Trajectory CSV holding the profile.
        #[arg(long)]
        input: PathBuf,
        /// Vehicle to decompose (first in the file by default).
        #[arg(long)]
        vehicle: Option<usize>,
    },
    /// Micro-vs-PDE validation for a case, or the empirical sweep.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Reference case to validate on the ring.
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4), conflicts_with = "empirical")]
        case: Option<u8>,
        /// Sweep parameter draws against a recorded leader.
        #[arg(long)]
        empirical: bool,
        /// Recorded leader trajectory for the empirical sweep.
        #[arg(long)]
        leader: Option<PathBuf>,
        /// Parameter draws (`tau,L,k_s,k_v`) for the empirical sweep.
        #[arg(long)]
        draws: Option<PathBuf>,
        /// Number of draws sampled (with replacement) from the draws file.
        #[arg(long, default_value_t = EMPIRICAL_DRAWS)]
        samples: usize,
    },
    /// Full pipeline of reference case 1-4.
    Case {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=4))]
        number: u8,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario TOML file; the case-1 setup when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for parameter sampling.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, env = "ACCWAVE_OUT_DIR")]
    out_dir: Option<PathBuf>,
    /// Target PDE cell width [m].
    #[arg(long)]
    dx: Option<f64>,
    /// CFL number of the finite-volume solver.
    #[arg(long)]
    cfl: Option<f64>,
    /// Simulation time step [s].
    #[arg(long)]
    dt: Option<f64>,
    /// Number of retained Fourier modes.
    #[arg(long)]
    modes: Option<usize>,
    /// Constant wave speed of the baseline [m/s].
    #[arg(long, allow_hyphen_values = true)]
    baseline_speed: Option<f64>,
    /// Write full-precision numbers instead of 6 significant digits.
    #[arg(long)]
    full_precision: bool,
}

impl Common {
    fn config_or(
        &self,
        fallback: impl FnOnce() -> Result<ScenarioConfig>,
    ) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                ScenarioConfig::load(path).with_context(|| format!("loading {}", path.display()))?
            }
            None => fallback()?,
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(dt) = self.dt {
            cfg.platoon.dt = dt;
        }
        if let Some(cfl) = self.cfl {
            cfg.pde.cfl = cfl;
        }
        if let Some(dx) = self.dx {
            cfg.pde.dx = Some(dx);
        }
        if let Some(w) = self.baseline_speed {
            cfg.metrics.baseline_speed = Some(w);
        }
        if let (Some(k), Some(t)) = (self.modes, cfg.metrics.transition.as_mut()) {
            t.fourier_modes = k;
        }
        cfg.output.full_precision |= self.full_precision;
        cfg.validate()?;
        Ok(cfg)
    }

    fn config(&self) -> Result<ScenarioConfig> {
        self.config_or(|| Ok(case_config(1)?))
    }
}

struct Output {
    dir: PathBuf,
    prec: Precision,
}

impl Output {
    fn new(common: &Common, cfg: &ScenarioConfig) -> Result<Self> {
        let dir = common
            .out_dir
            .clone()
            .or_else(|| cfg.output.dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir,
            prec: Precision::from_full(cfg.output.full_precision),
        })
    }

    fn write(
        &self,
        name: &str,
        f: impl FnOnce(BufWriter<File>, Precision) -> accwave::Result<()>,
    ) -> Result<PathBuf> {
        let path = self.dir.join(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        f(BufWriter::new(file), self.prec)
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

fn write_study(out: &Output, name: &str, study: &WaveStudy, bin_width: f64) -> Result<()> {
    out.write("trajectories.csv", |w, p| {
        io::write_trajectories(w, &study.trajectories, p)
    })?;
    out.write("wave_paths_proposed.csv", |w, p| {
        io::write_wave_paths(w, &study.proposed, p)
    })?;
    out.write("wave_paths_baseline.csv", |w, p| {
        io::write_wave_paths(w, &study.baseline, p)
    })?;
    let rows = [
        StatsRow {
            case: name.into(),
            method: "proposed".into(),
            stats: study.proposed_stats,
        },
        StatsRow {
            case: name.into(),
            method: "constant_speed".into(),
            stats: study.baseline_stats,
        },
    ];
    out.write("stats.csv", |w, p| io::write_stats(w, &rows, p))?;
    let hp = histogram(&study.proposed_devs, bin_width)?;
    let hb = histogram(&study.baseline_devs, bin_width)?;
    out.write("histogram_proposed.csv", |w, p| {
        io::write_histogram(w, &hp, p)
    })?;
    out.write("histogram_baseline.csv", |w, p| {
        io::write_histogram(w, &hb, p)
    })?;
    println!(
        "{name}: {} proposed deviations, {} baseline deviations",
        study.proposed_devs.len(),
        study.baseline_devs.len()
    );
    for row in &rows {
        let s = &row.stats;
        println!(
            "  {:<15} mean {:.3}  median {:.3}  q1 {:.3}  q3 {:.3}  max {:.3}  min {:.3}",
            row.method, s.mean, s.median, s.q1, s.q3, s.max, s.min
        );
    }
    if let Some(v_e) = study.v_e {
        println!("  congested equilibrium speed v_e = {v_e:.3} m/s");
    }
    Ok(())
}

fn write_ring(out: &Output, ring: &RingStudy) -> Result<()> {
    out.write("ring_trajectories.csv", |w, p| {
        io::write_trajectories(w, &ring.trajectories, p)
    })?;
    out.write("micro_field.csv", |w, p| io::write_field(w, &ring.micro, p))?;
    out.write("pde_field.csv", |w, p| io::write_field(w, &ring.pde, p))?;
    println!(
        "ring: {} vehicles, L_x = {:.1} m, {} cells, {} PDE steps",
        ring.vehicles, ring.ring_length, ring.pde.grid.cells, ring.pde_steps
    );
    println!(
        "  RMSE_v = {:.3} m/s, RMSE_rho = {:.4} veh/m",
        ring.rmse_v, ring.rmse_rho
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(common) => {
            let cfg = common.config()?;
            let out = Output::new(&common, &cfg)?;
            let trajs = simulate_platoon(&cfg.scenario()?)?;
            let path = out.write("trajectories.csv", |w, p| {
                io::write_trajectories(w, &trajs, p)
            })?;
            println!("{} vehicles written to {}", trajs.len(), path.display());
        }
        Command::Wave {
            common,
            omega_min,
            omega_max,
            points,
        } => {
            let cfg = common.config()?;
            let out = Output::new(&common, &cfg)?;
            if !(omega_min > 0.0 && omega_max > omega_min && points >= 2) {
                bail!("need 0 < omega-min < omega-max and at least 2 points");
            }
            let grid = log_grid(omega_min, omega_max, points);
            let evals = bode(&grid, &cfg.params);
            out.write("bode.csv", |w, p| io::write_bode(w, &evals, p))?;
            let report = string_stability_class(&cfg.params, &grid)?;
            println!(
                "string stability: {:?} (sup |G| = {:.6} at omega = {:.4} rad/s)",
                report.class, report.sup_gain, report.argmax_omega
            );
            if let LeaderMotion::Oscillation(spec) = cfg.leader_motion()? {
                let dt = cfg.platoon.dt;
                let steps = (cfg.platoon.duration / dt).round() as usize;
                let t: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
                let mut columns = vec![t.clone()];
                let mut headers = vec!["t".to_string()];
                for n in 1..cfg.platoon.vehicles {
                    let w = wave_speed_closed_form(n, &spec, &cfg.params)?;
                    println!("  pair {n}: nominal wave speed {:.3} m/s", w.nominal);
                    columns.push(t.iter().map(|&ti| w.evaluate(ti)).collect());
                    headers.push(format!("w_{n}"));
                }
                let headers: Vec<&str> = headers.iter().map(String::as_str).collect();
                let cols: Vec<&[f64]> = columns.iter().map(Vec::as_slice).collect();
                out.write("wave_speed.csv", |w, p| {
                    io::write_columns(w, &headers, &cols, p)
                })?;
            }
        }
        Command::Pde(common) => {
            let cfg = common.config()?;
            let out = Output::new(&common, &cfg)?;
            write_ring(&out, &run_ring_study(&cfg)?)?;
        }
        Command::Metrics {
            common,
            trajectories,
        } => {
            let cfg = common.config()?;
            let out = Output::new(&common, &cfg)?;
            let study = match trajectories {
                Some(path) => {
                    let trajs = io::ingest_trajectories(&path)?;
                    accwave::cases::wave_study_on(&cfg, trajs)?
                }
                None => run_wave_study(&cfg)?,
            };
            write_study(&out, &cfg.name, &study, cfg.metrics.bin_width)?;
        }
        Command::Fft {
            common,
            input,
            vehicle,
        } => {
            let cfg = common.config()?;
            let out = Output::new(&common, &cfg)?;
            let trajs = io::ingest_trajectories(&input)?;
            let traj = match vehicle {
                Some(id) => trajs
                    .into_iter()
                    .find(|t| t.vehicle_id == id)
                    .context("vehicle not found")?,
                None => trajs
                    .into_iter()
                    .next()
                    .context("no trajectories in input")?,
            };
            let t: Vec<f64> = traj
                .samples
                .iter()
                .map(|s| s.t - traj.start_time())
                .collect();
            let dt = common.dt.unwrap_or(traj.dt);
            let speeds = resample_linear(&t, &traj.speeds(), dt)?;
            let k = common.modes.unwrap_or(DEFAULT_MODES);
            let spec = fourier_decompose(&speeds, dt, k)?;
            let (recon, rmse) = periodic_reconstruct(&speeds, k)?;
            let grid: Vec<f64> = (0..speeds.len()).map(|j| j as f64 * dt).collect();
            out.write("spectrum.csv", |w, p| io::write_spectrum(w, &spec, p))?;
            out.write("reconstruction.csv", |w, p| {
                io::write_columns(
                    w,
                    &["t", "v", "v_reconstructed"],
                    &[&grid, &speeds, &recon],
                    p,
                )
            })?;
            println!(
                "mean speed {:.3} m/s; {k} modes; reconstruction RMSE {rmse:.3} m/s",
                spec.v_e
            );
        }
        Command::Validate {
            common,
            case,
            empirical,
            leader,
            draws,
            samples,
        } => {
            if empirical {
                let draws = draws.context("--empirical needs --draws FILE")?;
                let cfg = common.config_or(|| {
                    let leader = leader
                        .clone()
                        .context("--empirical needs --leader FILE or a recorded-leader config")?;
                    Ok(empirical_config(&leader))
                })?;
                let out = Output::new(&common, &cfg)?;
                let LeaderConfig::Recorded { .. } = cfg.leader else {
                    bail!("the empirical sweep needs a recorded leader");
                };
                let LeaderMotion::Recorded(traj) = cfg.leader_motion()? else {
                    unreachable!()
                };
                let all = io::load_param_draws(&draws)?;
                let chosen = io::sample_params(&all, samples, cfg.seed)?;
                let study = run_empirical_study(
                    &cfg,
                    &traj,
                    &chosen,
                    common.modes.unwrap_or(DEFAULT_MODES),
                )?;
                let rows = [
                    StatsRow {
                        case: cfg.name.clone(),
                        method: "proposed".into(),
                        stats: study.proposed_stats,
                    },
                    StatsRow {
                        case: cfg.name.clone(),
                        method: "constant_speed".into(),
                        stats: study.baseline_stats,
                    },
                ];
                out.write("stats.csv", |w, p| io::write_stats(w, &rows, p))?;
                let hp = histogram(&study.proposed_devs, cfg.metrics.bin_width)?;
                let hb = histogram(&study.baseline_devs, cfg.metrics.bin_width)?;
                out.write("histogram_proposed.csv", |w, p| {
                    io::write_histogram(w, &hp, p)
                })?;
                out.write("histogram_baseline.csv", |w, p| {
                    io::write_histogram(w, &hb, p)
                })?;
                let speeds = traj.speeds();
                let grid: Vec<f64> = (0..speeds.len()).map(|j| j as f64 * traj.dt).collect();
                out.write("reconstruction.csv", |w, p| {
                    io::write_columns(
                        w,
                        &["t", "v", "v_reconstructed"],
                        &[&grid, &speeds, &study.reconstruction],
                        p,
                    )
                })?;
                println!("empirical sweep over {} draws", chosen.len());
                for row in &rows {
                    let s = &row.stats;
                    println!(
                        "  {:<15} mean {:.3}  median {:.3}  q1 {:.3}  q3 {:.3}",
                        row.method, s.mean, s.median, s.q1, s.q3
                    );
                }
                println!(
                    "  leader reconstruction RMSE {:.3} m/s",
                    study.reconstruction_rmse
                );
                write_ring(&out, &study.ring)?;
            } else {
                let n = case.context("validate needs --case N or --empirical")?;
                let cfg = common.config_or(|| Ok(case_config(n)?))?;
                let out = Output::new(&common, &cfg)?;
                write_ring(&out, &run_ring_study(&cfg)?)?;
            }
        }
        Command::Case { number, common } => {
            let cfg = common.config_or(|| Ok(case_config(number)?))?;
            let out = Output::new(&common, &cfg)?;
            let study = run_wave_study(&cfg)?;
            write_study(&out, &cfg.name, &study, cfg.metrics.bin_width)?;
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
