//! Parameter sweeps over `φ` or the interaction time, with optional
//! Gaussian interaction-time averaging, emitted as CSV.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::config::{phi_from_tint, tint_from_phi, Axis, Config};
use crate::error::{MaserError, Result};
use crate::fano::Window;
use crate::fock::Channel;
use crate::quadrature::gaussian_nodes;
use crate::statistics::{Model, Successive, WaitingTimes};
use crate::steady::trapping_angles;

/// A CSV column.
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    ProbA,
    ProbB,
    RateA,
    RateB,
    Inversion,
    InversionTilde,
    Gamma,
    RunA,
    RunB,
    RunMean,
    RunANorm,
    RunBNorm,
    RunMeanNorm,
    WaitAA,
    WaitBB,
    WaitAANorm,
    WaitBBNorm,
    WaitSquaredAA,
    WaitSquaredBB,
    WaitSquaredAANorm,
    WaitSquaredBBNorm,
    WaitAB,
    WaitBA,
    WaitABNorm,
    WaitBANorm,
    FanoInf(Channel),
    /// `Q(∞)/η`.
    FanoInfScaled(Channel),
    /// `Q` averaged over the configured window range.
    FanoAvg(Channel),
    FanoAt(Channel, f64),
    Sequence(String),
    MeanPhotons,
    Residual,
}

pub const COLUMN_NAMES: &[&str] = &[
    "p_a", "p_b", "r_a", "r_b", "inversion", "inversion_tilde", "gamma", "n_a", "n_b", "n_mean", "n_a_norm", "n_b_norm",
    "n_norm", "t_aa", "t_bb", "t_aa_norm", "t_bb_norm", "t2_aa", "t2_bb", "t2_aa_norm", "t2_bb_norm", "t_ab", "t_ba",
    "t_ab_norm", "t_ba_norm", "q_a_inf", "q_b_inf", "q_a_inf_eta", "q_b_inf_eta", "q_a_avg", "q_b_avg", "q_a@<t>",
    "q_b@<t>", "seq:<AB..>", "mean_photons", "residual",
];

impl Column {
    pub fn parse(name: &str) -> Result<Self> {
        use Column::*;
        let unknown = || MaserError::UnknownObservable(name.to_string());
        Ok(match name {
            "p_a" => ProbA,
            "p_b" => ProbB,
            "r_a" => RateA,
            "r_b" => RateB,
            "inversion" => Inversion,
            "inversion_tilde" => InversionTilde,
            "gamma" => Gamma,
            "n_a" => RunA,
            "n_b" => RunB,
            "n_mean" => RunMean,
            "n_a_norm" => RunANorm,
            "n_b_norm" => RunBNorm,
            "n_norm" => RunMeanNorm,
            "t_aa" => WaitAA,
            "t_bb" => WaitBB,
            "t_aa_norm" => WaitAANorm,
            "t_bb_norm" => WaitBBNorm,
            "t2_aa" => WaitSquaredAA,
            "t2_bb" => WaitSquaredBB,
            "t2_aa_norm" => WaitSquaredAANorm,
            "t2_bb_norm" => WaitSquaredBBNorm,
            "t_ab" => WaitAB,
            "t_ba" => WaitBA,
            "t_ab_norm" => WaitABNorm,
            "t_ba_norm" => WaitBANorm,
            "q_a_inf" => FanoInf(Channel::A),
            "q_b_inf" => FanoInf(Channel::B),
            "q_a_inf_eta" => FanoInfScaled(Channel::A),
            "q_b_inf_eta" => FanoInfScaled(Channel::B),
            "q_a_avg" => FanoAvg(Channel::A),
            "q_b_avg" => FanoAvg(Channel::B),
            "mean_photons" => MeanPhotons,
            "residual" => Residual,
            _ => {
                let window = |s: &str| {
                    s.parse::<f64>()
                        .ok()
                        .filter(|t| *t > 0.0 && t.is_finite())
                        .ok_or_else(unknown)
                };
                if let Some(t) = name.strip_prefix("q_a@") {
                    FanoAt(Channel::A, window(t)?)
                } else if let Some(t) = name.strip_prefix("q_b@") {
                    FanoAt(Channel::B, window(t)?)
                } else if let Some(seq) = name.strip_prefix("seq:") {
                    let seq = seq.to_ascii_uppercase();
                    if seq.is_empty() || !seq.chars().all(|c| c == 'A' || c == 'B') {
                        return Err(unknown());
                    }
                    Sequence(seq)
                } else {
                    return Err(unknown());
                }
            }
        })
    }
}

/// Lazily computed quantities shared by the columns of one point.
struct Point<'a> {
    model: Model,
    config: &'a Config,
    successive: Option<Result<Successive>>,
    waiting: Option<Result<WaitingTimes>>,
}

impl Point<'_> {
    fn successive(&mut self) -> Result<Successive> {
        self.successive.get_or_insert_with(|| self.model.mean_successive()).clone()
    }

    fn waiting(&mut self) -> Result<WaitingTimes> {
        self.waiting.get_or_insert_with(|| self.model.waiting_times()).clone()
    }

    fn eta(&self, channel: Channel) -> f64 {
        match channel {
            Channel::A => self.model.params().eta_a,
            _ => self.model.params().eta_b,
        }
    }

    fn value(&mut self, column: &Column) -> Result<f64> {
        use Column::*;
        let m = &self.model;
        let rates = m.detection_rates();
        Ok(match column {
            ProbA => rates.p_a()?,
            ProbB => rates.p_b()?,
            RateA => rates.r_a(),
            RateB => rates.r_b(),
            Inversion => rates.b - rates.a,
            InversionTilde => m.atomic_inversion()?.per_detection,
            Gamma => m.gamma_switch()?.gamma,
            RunA => self.successive()?.n_a.raw,
            RunB => self.successive()?.n_b.raw,
            RunMean => self.successive()?.n_mean.raw,
            RunANorm => self.successive()?.n_a.normalized,
            RunBNorm => self.successive()?.n_b.normalized,
            RunMeanNorm => self.successive()?.n_mean.normalized,
            WaitAA => self.waiting()?.t_aa.raw,
            WaitBB => self.waiting()?.t_bb.raw,
            WaitAANorm => self.waiting()?.t_aa.normalized,
            WaitBBNorm => self.waiting()?.t_bb.normalized,
            WaitSquaredAA => self.waiting()?.t2_aa.raw,
            WaitSquaredBB => self.waiting()?.t2_bb.raw,
            WaitSquaredAANorm => self.waiting()?.t2_aa.normalized,
            WaitSquaredBBNorm => self.waiting()?.t2_bb.normalized,
            WaitAB => self.waiting()?.t_ab.raw,
            WaitBA => self.waiting()?.t_ba.raw,
            WaitABNorm => self.waiting()?.t_ab.normalized,
            WaitBANorm => self.waiting()?.t_ba.normalized,
            FanoInf(ch) => m.fano_mandel(*ch, Window::Infinite)?,
            FanoInfScaled(ch) => m.fano_mandel(*ch, Window::Infinite)? / self.eta(*ch),
            FanoAvg(ch) => {
                let c = self.config;
                m.fano_window_average(*ch, c.fano_avg_start, c.fano_avg_stop, c.fano_avg_points)?
            }
            FanoAt(ch, t) => m.fano_mandel(*ch, Window::Finite(*t))?,
            Sequence(seq) => m.sequence_probability(seq)?.value,
            MeanPhotons => m.rho().mean_photon_number(),
            Residual => m.steady().residual,
        })
    }
}

fn evaluate_at(config: &Config, columns: &[Column], phi: f64) -> Result<Vec<f64>> {
    let model = Model::new(config.params.with_phi(phi), config.numerics)?;
    let mut point = Point {
        model,
        config,
        successive: None,
        waiting: None,
    };
    columns.iter().map(|c| point.value(c)).collect()
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub axis: f64,
    pub values: Vec<f64>,
    /// `ok` or the first error met at this point.
    pub status: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
}

pub fn grid(config: &Config) -> Vec<f64> {
    let step = (config.stop - config.start) / (config.points - 1) as f64;
    (0..config.points)
        .map(|i| if i + 1 == config.points { config.stop } else { config.start + step * i as f64 })
        .collect()
}

fn evaluate_row(config: &Config, columns: &[Column], axis: f64) -> Row {
    let t_int = match config.axis {
        Axis::Phi => tint_from_phi(config.g_khz, axis),
        Axis::Tint => axis,
    };
    let nodes = gaussian_nodes(t_int, config.sigma_tint_us, config.gauss_points);
    let mut values = vec![0.0; columns.len()];
    for (t, w) in nodes {
        let phi = if config.sigma_tint_us == 0.0 && config.axis == Axis::Phi {
            axis
        } else {
            phi_from_tint(config.g_khz, t)
        };
        match evaluate_at(config, columns, phi) {
            Ok(v) => values.iter_mut().zip(v).for_each(|(acc, x)| *acc += w * x),
            Err(e) => {
                return Row {
                    axis,
                    values: vec![f64::NAN; columns.len()],
                    status: e.to_string().replace([',', '\n'], ";"),
                }
            }
        }
    }
    Row {
        axis,
        values,
        status: "ok".into(),
    }
}

/// Evaluates every grid point on a pool of `config.workers` threads; rows
/// come back in axis order.
pub fn run_sweep(config: &Config) -> Result<SweepTable> {
    config.validate()?;
    let columns: Vec<Column> = config.observables.iter().map(|n| Column::parse(n)).collect::<Result<_>>()?;
    if columns.is_empty() {
        return Err(MaserError::Config("no observables requested".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| MaserError::Config(format!("worker pool: {e}")))?;
    let rows = pool.install(|| {
        grid(config)
            .par_iter()
            .map(|&x| evaluate_row(config, &columns, x))
            .collect()
    });
    Ok(SweepTable {
        columns: config.observables.clone(),
        rows,
    })
}

impl SweepTable {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.status != "ok").count()
    }

    pub fn to_csv(&self, config: &Config) -> String {
        let unit = config.params.time_unit.name();
        let mut out = String::new();
        let _ = writeln!(out, "# micromaser sweep {}", config.dump_inline());
        let _ = writeln!(
            out,
            "# units: phi rad; t_int us; rates and times in {unit} units; probabilities, run lengths, Q and *_norm dimensionless"
        );
        let axis_name = match config.axis {
            Axis::Phi => "phi",
            Axis::Tint => "t_int_us",
        };
        let _ = writeln!(out, "{axis_name},{},status", self.columns.join(","));
        for row in &self.rows {
            let _ = write!(out, "{:.12e}", row.axis);
            for v in &row.values {
                let _ = write!(out, ",{v:.12e}");
            }
            let _ = writeln!(out, ",{}", row.status);
        }
        out
    }
}

/// Trapping angles inside the sweep range, one per line:
/// `n0,q,phi,t_int_us`.
pub fn trap_markers(config: &Config) -> String {
    let (lo, hi) = match config.axis {
        Axis::Phi => (config.start, config.stop),
        Axis::Tint => (phi_from_tint(config.g_khz, config.start), phi_from_tint(config.g_khz, config.stop)),
    };
    let mut out = String::from("n0,q,phi,t_int_us\n");
    for t in trapping_angles(config.trap_n0_max, hi).into_iter().filter(|t| t.phi >= lo) {
        let _ = writeln!(out, "{},{},{:.12e},{:.12e}", t.n0, t.q, t.phi, tint_from_phi(config.g_khz, t.phi));
    }
    out
}
