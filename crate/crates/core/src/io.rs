//! CSV ingestion and export.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{DeviationStats, HistogramBin};
use crate::micro::{OscillationSpec, Trajectory, VehicleSample};
use crate::model::ControlParams;
use crate::pde::EulerianField;
use crate::tracker::WavePath;
use crate::wave::TransferEval;

/// Maximum deviation of a sample step from the nominal `dt` [s].
pub const DT_JITTER: f64 = 1e-6;

/// Number formatting for CSV output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    /// Six significant digits.
    #[default]
    Short,
    /// Shortest representation that round-trips exactly.
    Full,
}

impl Precision {
    pub fn from_full(full: bool) -> Self {
        if full {
            Precision::Full
        } else {
            Precision::Short
        }
    }

    pub fn fmt(self, x: f64) -> String {
        match self {
            Precision::Full => format!("{x}"),
            Precision::Short => {
                if x == 0.0 || !x.is_finite() {
                    return format!("{x}");
                }
                let rounded: f64 = format!("{x:.5e}").parse().expect("formatted float parses");
                format!("{rounded}")
            }
        }
    }
}

/// Writes `t,vehicle_id,x,v,a`, ordered by time then vehicle id.
pub fn write_trajectories<W: Write>(w: W, trajs: &[Trajectory], prec: Precision) -> Result<()> {
    let mut rows: Vec<(f64, usize, &VehicleSample)> = trajs
        .iter()
        .flat_map(|tr| tr.samples.iter().map(move |s| (s.t, tr.vehicle_id, s)))
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "vehicle_id", "x", "v", "a"])?;
    for (t, id, s) in rows {
        out.write_record([
            prec.fmt(t),
            id.to_string(),
            prec.fmt(s.x),
            prec.fmt(s.v),
            prec.fmt(s.a),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a trajectory CSV with header `t,vehicle_id,x,v[,a]` (any column
/// order, rows in any order). Missing accelerations are rebuilt by central
/// differences of speed.
pub fn read_trajectories<R: Read>(r: R) -> Result<Vec<Trajectory>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(r);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let need = |name: &str| {
        col(name).ok_or_else(|| Error::Parse {
            line: 1,
            message: format!("missing column `{name}`"),
        })
    };
    let (ct, cid, cx, cv) = (need("t")?, need("vehicle_id")?, need("x")?, need("v")?);
    let ca = col("a");

    let mut by_vehicle: BTreeMap<usize, Vec<(usize, VehicleSample)>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let field = |c: usize, name: &str| -> Result<f64> {
            let raw = rec.get(c).unwrap_or("");
            raw.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("bad value `{raw}` for `{name}`"),
            })
        };
        let id_raw = rec.get(cid).unwrap_or("");
        let id: usize = id_raw.parse().map_err(|_| Error::Parse {
            line,
            message: format!("bad value `{id_raw}` for `vehicle_id`"),
        })?;
        let a = match ca {
            Some(c) if !rec.get(c).unwrap_or("").is_empty() => field(c, "a")?,
            Some(_) | None => f64::NAN,
        };
        let s = VehicleSample {
            t: field(ct, "t")?,
            x: field(cx, "x")?,
            v: field(cv, "v")?,
            a,
        };
        by_vehicle.entry(id).or_default().push((line, s));
    }
    if by_vehicle.is_empty() {
        return Err(Error::Empty("trajectory file has no rows".into()));
    }

    let mut out = Vec::with_capacity(by_vehicle.len());
    for (id, mut rows) in by_vehicle {
        rows.sort_by(|a, b| a.1.t.total_cmp(&b.1.t));
        if rows.len() < 2 {
            return Err(Error::Parse {
                line: rows[0].0,
                message: format!("vehicle {id} has a single sample"),
            });
        }
        let dt = rows[1].1.t - rows[0].1.t;
        if !(dt > DT_JITTER) {
            return Err(Error::Parse {
                line: rows[1].0,
                message: format!("vehicle {id}: repeated time stamp"),
            });
        }
        for w in rows.windows(2) {
            let step = w[1].1.t - w[0].1.t;
            if (step - dt).abs() > DT_JITTER {
                let message = if step > 1.5 * dt {
                    format!(
                        "vehicle {id}: gap in samples between t = {} and t = {}",
                        w[0].1.t, w[1].1.t
                    )
                } else {
                    format!("vehicle {id}: non-uniform time step {step} (expected {dt})")
                };
                return Err(Error::Parse {
                    line: w[1].0,
                    message,
                });
            }
        }
        let mut samples: Vec<VehicleSample> = rows.into_iter().map(|r| r.1).collect();
        if samples.iter().any(|s| s.a.is_nan()) {
            fill_acceleration(&mut samples);
        }
        out.push(Trajectory::new(id, dt, samples)?);
    }
    Ok(out)
}

pub fn ingest_trajectories(path: &Path) -> Result<Vec<Trajectory>> {
    let file = std::fs::File::open(path)?;
    read_trajectories(file)
}

fn fill_acceleration(samples: &mut [VehicleSample]) {
    let n = samples.len();
    let acc: Vec<f64> = (0..n)
        .map(|i| {
            let (lo, hi) = (i.saturating_sub(1), (i + 1).min(n - 1));
            (samples[hi].v - samples[lo].v) / (samples[hi].t - samples[lo].t)
        })
        .collect();
    for (s, a) in samples.iter_mut().zip(acc) {
        if s.a.is_nan() {
            s.a = a;
        }
    }
}

/// Shifts a trajectory so that it starts at `t = 0`.
pub fn rebase_time(mut traj: Trajectory) -> Trajectory {
    let t0 = traj.start_time();
    for s in &mut traj.samples {
        s.t -= t0;
    }
    traj
}

/// Writes `path_id,kind,vehicle_id,t_cross,x_cross,v_at_cross`; each path's
/// origin is its first row.
pub fn write_wave_paths<W: Write>(w: W, paths: &[WavePath], prec: Precision) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "path_id",
        "kind",
        "vehicle_id",
        "t_cross",
        "x_cross",
        "v_at_cross",
    ])?;
    for (id, p) in paths.iter().enumerate() {
        for c in p.points() {
            out.write_record([
                id.to_string(),
                p.kind.as_str().to_string(),
                c.vehicle_id.to_string(),
                prec.fmt(c.t),
                prec.fmt(c.x),
                prec.fmt(c.v),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// One row of the statistics table.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsRow {
    pub case: String,
    pub method: String,
    pub stats: DeviationStats,
}

/// Writes `case,method,mean,median,q1,q3,max,min`.
pub fn write_stats<W: Write>(w: W, rows: &[StatsRow], prec: Precision) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["case", "method", "mean", "median", "q1", "q3", "max", "min"])?;
    for r in rows {
        let mut rec = vec![r.case.clone(), r.method.clone()];
        rec.extend(r.stats.fields().iter().map(|(_, v)| prec.fmt(*v)));
        out.write_record(rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `bin_center,density`.
pub fn write_histogram<W: Write>(w: W, bins: &[HistogramBin], prec: Precision) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["bin_center", "density"])?;
    for b in bins {
        out.write_record([prec.fmt(b.center), prec.fmt(b.density)])?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `t,x,rho,v`, one row per time and cell centre.
pub fn write_field<W: Write>(w: W, field: &EulerianField, prec: Precision) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "x", "rho", "v"])?;
    let centers = field.grid.centers();
    for (t, row) in field.times.iter().zip(&field.states) {
        for (x, s) in centers.iter().zip(row) {
            out.write_record([prec.fmt(*t), prec.fmt(*x), prec.fmt(s.rho), prec.fmt(s.v)])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Writes `omega,gain_mag,phase`.
pub fn write_bode<W: Write>(w: W, evals: &[TransferEval], prec: Precision) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["omega", "gain_mag", "phase"])?;
    for e in evals {
        out.write_record([prec.fmt(e.omega), prec.fmt(e.gain_mag), prec.fmt(e.phase)])?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `mode,omega,amplitude,speed_amplitude,phase`; mode 0 is the mean
/// speed (in `speed_amplitude`), modes 1.. follow in decreasing strength.
pub fn write_spectrum<W: Write>(w: W, spec: &OscillationSpec, prec: Precision) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["mode", "omega", "amplitude", "speed_amplitude", "phase"])?;
    out.write_record([
        "0".into(),
        "0".into(),
        "0".into(),
        prec.fmt(spec.v_e),
        "0".into(),
    ])?;
    for (k, m) in spec.modes.iter().enumerate() {
        out.write_record([
            (k + 1).to_string(),
            prec.fmt(m.omega),
            prec.fmt(m.amplitude),
            prec.fmt(m.amplitude * m.omega),
            prec.fmt(m.phase),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Writes equally long columns under the given headers.
pub fn write_columns<W: Write>(
    w: W,
    headers: &[&str],
    columns: &[&[f64]],
    prec: Precision,
) -> Result<()> {
    if headers.len() != columns.len() || columns.windows(2).any(|c| c[0].len() != c[1].len()) {
        return Err(Error::InvalidParameter(
            "columns must match the headers and have equal lengths".into(),
        ));
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(headers)?;
    for i in 0..columns.first().map_or(0, |c| c.len()) {
        out.write_record(columns.iter().map(|c| prec.fmt(c[i])))?;
    }
    out.flush()?;
    Ok(())
}

/// One calibrated draw of the ACC constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSample {
    pub tau: f64,
    #[serde(rename = "L")]
    pub standstill: f64,
    pub k_s: f64,
    pub k_v: f64,
}

impl ParamSample {
    /// Control parameters with this draw's constants and `base`'s free-flow settings.
    pub fn to_params(self, base: &ControlParams) -> Result<ControlParams> {
        let p = ControlParams {
            tau: self.tau,
            standstill: self.standstill,
            k_s: self.k_s,
            k_v: self.k_v,
            ..*base
        };
        p.validate()?;
        Ok(p)
    }
}

/// Reads draws with header `tau,L,k_s,k_v`.
pub fn read_param_draws<R: Read>(r: R) -> Result<Vec<ParamSample>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        let s: ParamSample = rec?;
        if !(s.tau > 0.0 && s.standstill > 0.0 && s.k_s >= 0.0 && s.k_v >= 0.0) {
            return Err(Error::Parse {
                line: out.len() + 2,
                message: format!("inadmissible draw {s:?}"),
            });
        }
        out.push(s);
    }
    Ok(out)
}

pub fn load_param_draws(path: &Path) -> Result<Vec<ParamSample>> {
    read_param_draws(std::fs::File::open(path)?)
}

/// Uniform resampling with replacement, reproducible for a given seed.
pub fn sample_params(draws: &[ParamSample], count: usize, seed: u64) -> Result<Vec<ParamSample>> {
    if draws.is_empty() {
        return Err(Error::Empty("parameter draws".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| draws[rng.gen_range(0..draws.len())])
        .collect())
}
