//! Hourly load and weather series, renewable power conversion and a seeded
//! synthetic scenario generator.
//!
//! CSV layouts (UTF-8, header row required):
//!
//! * loads: `t,el_mw,hl_mw,cl_mw`
//! * weather: `t,ghi_wm2,wind_ms,tamb_c`
//!
//! The hour index starts anywhere but must increase by exactly one per row.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const LOAD_HEADER: [&str; 4] = ["t", "el_mw", "hl_mw", "cl_mw"];
pub const WEATHER_HEADER: [&str; 4] = ["t", "ghi_wm2", "wind_ms", "tamb_c"];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invalid argument: {0}")]
    Argument(String),
}

/// One hour of multi-energy demand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadRecord {
    pub t: u32,
    pub el: f64,
    pub hl: f64,
    pub cl: f64,
}

/// One hour of weather used for renewable output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherRecord {
    pub t: u32,
    /// Global horizontal irradiance, W/m².
    pub ghi: f64,
    /// Hub wind speed, m/s.
    pub wind: f64,
    /// Ambient temperature, °C. Also used as the PV cell temperature.
    pub t_amb: f64,
}

/// PV array and wind farm parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenewableSpec {
    pub eta_v: f64,
    /// PV area in m².
    pub a_pv: f64,
    /// Standard test condition temperature, °C.
    pub t_stc: f64,
    pub n_wt: u32,
    /// Per-turbine rated power, MW.
    pub p_wt_rated: f64,
    pub v_ci: f64,
    pub v_rated: f64,
    pub v_co: f64,
}

impl Default for RenewableSpec {
    fn default() -> Self {
        // 0.18 * A * 1000 W/m² = 50 MW peak
        Self {
            eta_v: 0.18,
            a_pv: 50.0e6 / (0.18 * 1000.0),
            t_stc: 25.0,
            n_wt: 100,
            p_wt_rated: 2.0,
            v_ci: 3.0,
            v_rated: 12.0,
            v_co: 25.0,
        }
    }
}

impl RenewableSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if !(self.eta_v > 0.0 && self.eta_v < 1.0) {
            return Err(DataError::Schema(format!("eta_v must be in (0,1), got {}", self.eta_v)));
        }
        if !(self.a_pv >= 0.0) || !(self.p_wt_rated >= 0.0) {
            return Err(DataError::Schema("PV area and turbine rating must be non-negative".into()));
        }
        if !(self.v_ci < self.v_rated && self.v_rated < self.v_co) {
            return Err(DataError::Schema(format!(
                "turbine speeds must satisfy v_ci < v_rated < v_co, got {} / {} / {}",
                self.v_ci, self.v_rated, self.v_co
            )));
        }
        Ok(())
    }
}

/// PV output in MW with the linear temperature correction.
pub fn pv_power(w: &WeatherRecord, spec: &RenewableSpec) -> f64 {
    let watts = spec.eta_v * spec.a_pv * w.ghi * (1.0 + 0.001 * (w.t_amb - spec.t_stc));
    (watts / 1.0e6).max(0.0)
}

/// Piecewise wind farm curve in MW.
pub fn wt_power(wind: f64, spec: &RenewableSpec) -> f64 {
    let farm = f64::from(spec.n_wt) * spec.p_wt_rated;
    if wind < spec.v_ci || wind > spec.v_co {
        0.0
    } else if wind <= spec.v_rated {
        farm * (wind - spec.v_ci) / (spec.v_rated - spec.v_ci)
    } else {
        farm
    }
}

pub fn total_res(pv: f64, wt: f64) -> f64 {
    pv + wt
}

fn open(path: &Path) -> Result<csv::Reader<File>, DataError> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str; 4]) -> Result<(), DataError> {
    let header = rdr
        .headers()
        .map_err(|e| DataError::Parse { line: 1, msg: e.to_string() })?;
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        return Err(DataError::Schema(format!(
            "expected header {:?}, found {:?}",
            expected.join(","),
            got.join(",")
        )));
    }
    Ok(())
}

/// Parses rows as `(t, [f64; 3])`, reporting 1-based file line numbers.
fn read_rows<R: Read>(rdr: &mut csv::Reader<R>, names: &[&str; 4]) -> Result<Vec<(u32, [f64; 3])>, DataError> {
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| DataError::Parse { line, msg: e.to_string() })?;
        if rec.len() != 4 {
            return Err(DataError::Parse {
                line,
                msg: format!("expected 4 fields, found {}", rec.len()),
            });
        }
        let t: u32 = rec[0].trim().parse().map_err(|_| DataError::Parse {
            line,
            msg: format!("column \"t\": cannot parse {:?} as an hour index", &rec[0]),
        })?;
        let mut vals = [0.0f64; 3];
        for (k, v) in vals.iter_mut().enumerate() {
            let field = rec[k + 1].trim();
            *v = field.parse().map_err(|_| DataError::Parse {
                line,
                msg: format!("column {:?}: cannot parse {:?} as a number", names[k + 1], field),
            })?;
            if !v.is_finite() {
                return Err(DataError::Parse {
                    line,
                    msg: format!("column {:?}: non-finite value", names[k + 1]),
                });
            }
        }
        rows.push((t, vals));
    }
    Ok(rows)
}

/// Checks that hour indices increase by exactly one, after sorting.
fn check_contiguous(ts: &[u32]) -> Result<(), DataError> {
    for pair in ts.windows(2) {
        if pair[1] == pair[0] {
            return Err(DataError::Schema(format!("duplicate hour t={}", pair[0])));
        }
        if pair[1] != pair[0] + 1 {
            return Err(DataError::Schema(format!("gap in hour index at t={}", pair[0] + 1)));
        }
    }
    Ok(())
}

pub fn parse_loads<R: Read>(reader: R) -> Result<Vec<LoadRecord>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    loads_from_reader(&mut rdr)
}

pub fn parse_weather<R: Read>(reader: R) -> Result<Vec<WeatherRecord>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    weather_from_reader(&mut rdr)
}

fn loads_from_reader<R: Read>(rdr: &mut csv::Reader<R>) -> Result<Vec<LoadRecord>, DataError> {
    check_header(rdr, &LOAD_HEADER)?;
    let mut rows = read_rows(rdr, &LOAD_HEADER)?;
    rows.sort_by_key(|r| r.0);
    let ts: Vec<u32> = rows.iter().map(|r| r.0).collect();
    check_contiguous(&ts)?;
    rows.into_iter()
        .map(|(t, [el, hl, cl])| {
            for (name, v) in [("el_mw", el), ("hl_mw", hl), ("cl_mw", cl)] {
                if v < 0.0 {
                    return Err(DataError::Schema(format!("column \"{name}\" negative at t={t}: {v}")));
                }
            }
            Ok(LoadRecord { t, el, hl, cl })
        })
        .collect()
}

fn weather_from_reader<R: Read>(rdr: &mut csv::Reader<R>) -> Result<Vec<WeatherRecord>, DataError> {
    check_header(rdr, &WEATHER_HEADER)?;
    let mut rows = read_rows(rdr, &WEATHER_HEADER)?;
    rows.sort_by_key(|r| r.0);
    let ts: Vec<u32> = rows.iter().map(|r| r.0).collect();
    check_contiguous(&ts)?;
    rows.into_iter()
        .map(|(t, [ghi, wind, t_amb])| {
            if ghi < 0.0 {
                return Err(DataError::Schema(format!("column \"ghi_wm2\" negative at t={t}")));
            }
            if wind < 0.0 {
                return Err(DataError::Schema(format!("column \"wind_ms\" negative at t={t}")));
            }
            Ok(WeatherRecord { t, ghi, wind, t_amb })
        })
        .collect()
}

pub fn load_loads(path: &Path) -> Result<Vec<LoadRecord>, DataError> {
    loads_from_reader(&mut open(path)?)
}

pub fn load_weather(path: &Path) -> Result<Vec<WeatherRecord>, DataError> {
    weather_from_reader(&mut open(path)?)
}

/// Either kind of series, as returned by [`load_timeseries`].
#[derive(Debug, Clone, PartialEq)]
pub enum Series {
    Load(Vec<LoadRecord>),
    Weather(Vec<WeatherRecord>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesKind {
    Load,
    Weather,
}

pub fn load_timeseries(path: &Path, kind: SeriesKind) -> Result<Series, DataError> {
    match kind {
        SeriesKind::Load => load_loads(path).map(Series::Load),
        SeriesKind::Weather => load_weather(path).map(Series::Weather),
    }
}

pub fn write_loads<W: Write>(w: W, loads: &[LoadRecord]) -> Result<(), DataError> {
    let mut wtr = csv::Writer::from_writer(w);
    let err = |e: csv::Error| DataError::Schema(e.to_string());
    wtr.write_record(LOAD_HEADER).map_err(err)?;
    for r in loads {
        wtr.write_record([r.t.to_string(), r.el.to_string(), r.hl.to_string(), r.cl.to_string()])
            .map_err(err)?;
    }
    wtr.flush().map_err(|e| DataError::Schema(e.to_string()))
}

pub fn write_weather<W: Write>(w: W, weather: &[WeatherRecord]) -> Result<(), DataError> {
    let mut wtr = csv::Writer::from_writer(w);
    let err = |e: csv::Error| DataError::Schema(e.to_string());
    wtr.write_record(WEATHER_HEADER).map_err(err)?;
    for r in weather {
        wtr.write_record([r.t.to_string(), r.ghi.to_string(), r.wind.to_string(), r.t_amb.to_string()])
            .map_err(err)?;
    }
    wtr.flush().map_err(|e| DataError::Schema(e.to_string()))
}

/// Diurnal shape in [0, 1] peaking at `peak_hour`.
fn diurnal(hour: f64, peak_hour: f64) -> f64 {
    0.5 * (1.0 + (2.0 * std::f64::consts::PI * (hour - peak_hour) / 24.0).cos())
}

/// Seeded synthetic year-like data with the same schema as the CSV inputs.
///
/// Loads follow a diurnal sinusoid with a morning shoulder and an evening
/// peak plus AR(1) noise; irradiance is a clipped half-sine between 06:00 and
/// 18:00 scaled by a daily cloudiness draw; wind follows an AR(1) around
/// 6.5 m/s.
pub fn synth_scenario(seed: u64, horizon: usize) -> Result<(Vec<LoadRecord>, Vec<WeatherRecord>), DataError> {
    if horizon < 24 {
        return Err(DataError::Argument(format!("horizon must be at least 24 h, got {horizon}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut loads = Vec::with_capacity(horizon);
    let mut weather = Vec::with_capacity(horizon);

    let mut wind = 6.5;
    let mut noise = [0.0f64; 3];
    let mut cloud = 1.0;
    let mut day_scale = 1.0;
    for t in 0..horizon {
        let hour = (t % 24) as f64;
        if t % 24 == 0 {
            cloud = rng.random_range(0.55..1.0);
            day_scale = 1.0 + 0.06 * unit.sample(&mut rng);
        }
        let t_amb = 24.0 + 9.0 * diurnal(hour, 15.0) + 1.5 * unit.sample(&mut rng);
        let ghi = if (6.0..=18.0).contains(&hour) {
            let s = (std::f64::consts::PI * (hour - 6.0) / 12.0).sin();
            (950.0 * cloud * s * (1.0 + 0.05 * unit.sample(&mut rng))).max(0.0)
        } else {
            0.0
        };
        wind = (6.5 + 0.8 * (wind - 6.5) + 1.2 * unit.sample(&mut rng)).max(0.0);

        for n in noise.iter_mut() {
            *n = 0.7 * *n + unit.sample(&mut rng);
        }
        let el = day_scale * (210.0 + 55.0 * diurnal(hour, 19.0) + 30.0 * diurnal(hour, 10.0)) + 4.0 * noise[0];
        let hl = day_scale * (170.0 + 50.0 * diurnal(hour, 7.0)) + 3.0 * noise[1];
        let cl = day_scale * (110.0 + 70.0 * diurnal(hour, 15.0)) + 3.0 * noise[2];

        loads.push(LoadRecord {
            t: t as u32,
            el: el.max(1.0),
            hl: hl.max(1.0),
            cl: cl.max(1.0),
        });
        weather.push(WeatherRecord {
            t: t as u32,
            ghi,
            wind,
            t_amb,
        });
    }
    Ok((loads, weather))
}
