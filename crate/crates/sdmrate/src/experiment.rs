//! Configuration-driven orchestration of the end-to-end experiment:
//! simulate training and test sequences through the fiber, fit the CRAN
//! model per power and receiver algorithm, evaluate achievable rates, and
//! emit CSV/JSON artifacts. Every stage is cached on disk and resumable;
//! all randomness derives from the root seed and the cell coordinates, so
//! identical configurations reproduce bit-identical outputs regardless of
//! scheduling.

use crate::error::{Error, Result};
use crate::estimation::{fit_scales, FitConfig, FitReport, TrainingSet};
use crate::fiber::{propagate, CouplingSpec, SsfmConfig};
use crate::pf::{achievable_rate, ReceiverAlgo};
use crate::rng::RandomStream;
use crate::rp::{
    build_x_table, covariance_approx_carriers, interferer_carriers, write_coefficient_cache,
    ChannelEnergies, CovarianceModel, NliCoefficients,
};
use crate::signal::dbm_to_watts;
use crate::wdm::{modulate, receive, Compensation, SymbolFrame, SymbolGrid, WdmSpec};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkConfig {
    pub s_modes: usize,
    pub beta2_ps2_per_km: f64,
    pub gamma_per_w_km: f64,
    /// Averaged strong-coupling nonlinear scalar.
    pub kappa: f64,
    pub n_ase_w_per_hz: f64,
    pub length_km: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WdmConfig {
    pub channel_min: i32,
    pub channel_max: i32,
    pub spacing_ghz: f64,
    pub bandwidth_ghz: f64,
    pub subcarriers: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataConfig {
    pub train_sequences: usize,
    pub test_sequences: usize,
    /// Symbols per carrier actually used; the grid rounds up to a power of
    /// two and the sequence is the centered slice.
    pub symbols_per_sequence: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Markov memory mu of the hidden processes.
    pub memory: usize,
    /// Particles for rate evaluation.
    pub particles: usize,
    /// Particles for the fit objective.
    pub fit_particles: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SsfmSection {
    pub step_km: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub link: LinkConfig,
    pub wdm: WdmConfig,
    pub powers_dbm: Vec<f64>,
    pub algos: Vec<ReceiverAlgo>,
    pub training: DataConfig,
    pub model: ModelConfig,
    pub ssfm: SsfmSection,
    pub seed: u64,
    #[serde(default)]
    pub desk_scale: bool,
}

impl ExperimentConfig {
    /// Full-scale defaults: the Table-1 strong-coupling system, 5 channels,
    /// 1000 km, 24 training and 120 test sequences of 4092 symbols, powers
    /// -12..-4 dBm.
    pub fn table1() -> Self {
        ExperimentConfig {
            link: LinkConfig {
                s_modes: 2,
                beta2_ps2_per_km: -21.7,
                gamma_per_w_km: 1.27,
                kappa: 1.0,
                n_ase_w_per_hz: 5.902e-18,
                length_km: 1000.0,
            },
            wdm: WdmConfig {
                channel_min: -2,
                channel_max: 2,
                spacing_ghz: 50.0,
                bandwidth_ghz: 50.0,
                subcarriers: 1,
            },
            powers_dbm: vec![-12.0, -11.0, -10.0, -9.0, -8.0, -7.5, -7.0, -6.0, -5.0, -4.0],
            algos: ReceiverAlgo::all().to_vec(),
            training: DataConfig {
                train_sequences: 24,
                test_sequences: 120,
                symbols_per_sequence: 4092,
            },
            model: ModelConfig {
                memory: 2,
                particles: 512,
                fit_particles: 256,
            },
            ssfm: SsfmSection { step_km: 0.1 },
            seed: 1,
            desk_scale: false,
        }
    }

    /// Four-subcarrier variant of the Table-1 system: 12.5-GHz carriers,
    /// 20 training / 100 test sequences of 4 x 1023 symbols.
    pub fn table1_4sc() -> Self {
        let mut cfg = ExperimentConfig::table1();
        cfg.wdm.subcarriers = 4;
        cfg.training = DataConfig {
            train_sequences: 20,
            test_sequences: 100,
            symbols_per_sequence: 1023,
        };
        cfg
    }

    /// Reduced preset preserving the qualitative regime: 200 km, 3 WDM
    /// channels, 8 training / 16 test sequences of 1024 symbols, 5 powers.
    pub fn desk_scale() -> Self {
        let mut cfg = ExperimentConfig::table1();
        cfg.apply_desk_scale();
        cfg
    }

    /// Shrinks length, channel count, and sequence counts in place while
    /// keeping symbol rate and dispersion.
    pub fn apply_desk_scale(&mut self) {
        self.link.length_km = 200.0;
        self.wdm.channel_min = -1;
        self.wdm.channel_max = 1;
        self.powers_dbm = vec![-12.0, -10.0, -8.0, -6.0, -4.0];
        self.training = DataConfig {
            train_sequences: 8,
            test_sequences: 16,
            symbols_per_sequence: if self.wdm.subcarriers == 4 { 256 } else { 1024 },
        };
        self.desk_scale = true;
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.link.s_modes == 0 {
            return Err(Error::config("link.s_modes", "need at least one spatial mode"));
        }
        if !(self.link.length_km > 0.0) {
            return Err(Error::config("link.length_km", "length must be positive"));
        }
        if !(self.link.n_ase_w_per_hz > 0.0) {
            return Err(Error::config("link.n_ase_w_per_hz", "noise PSD must be positive"));
        }
        if self.wdm.channel_min > 0 || self.wdm.channel_max < 0 {
            return Err(Error::config(
                "wdm.channel_min/channel_max",
                "channel range must include the COI at c = 0",
            ));
        }
        if self.wdm.spacing_ghz < self.wdm.bandwidth_ghz {
            return Err(Error::config(
                "wdm.spacing_ghz",
                "spacing below the channel bandwidth overlaps channels",
            ));
        }
        if !matches!(self.wdm.subcarriers, 1 | 4) {
            return Err(Error::config("wdm.subcarriers", "subcarriers must be 1 or 4"));
        }
        if self.powers_dbm.is_empty() {
            return Err(Error::config("powers_dbm", "need at least one launch power"));
        }
        if self.algos.is_empty() {
            return Err(Error::config("algos", "need at least one receiver algorithm"));
        }
        if self.training.train_sequences == 0 || self.training.test_sequences == 0 {
            return Err(Error::config("training", "need training and test sequences"));
        }
        if self.training.symbols_per_sequence < 16 {
            return Err(Error::config(
                "training.symbols_per_sequence",
                "sequences shorter than 16 symbols cannot support the fit",
            ));
        }
        if self.model.particles == 0 || self.model.fit_particles == 0 {
            return Err(Error::config("model.particles", "particle counts must be positive"));
        }
        if !(self.ssfm.step_km > 0.0) {
            return Err(Error::config("ssfm.step_km", "step must be positive"));
        }
        let steps = self.link.length_km / self.ssfm.step_km;
        if (steps - steps.round()).abs() > 1e-6 {
            return Err(Error::config(
                "ssfm.step_km",
                "step must divide the link length into an integer number of steps",
            ));
        }
        Ok(())
    }

    pub fn coupling_spec(&self) -> Result<CouplingSpec> {
        CouplingSpec::strong(
            self.link.s_modes,
            self.link.beta2_ps2_per_km * 1e-24,
            self.link.kappa,
            self.link.gamma_per_w_km,
            self.link.n_ase_w_per_hz,
            self.wdm.bandwidth_ghz * 1e9,
            self.link.length_km,
        )
    }

    pub fn wdm_spec(&self) -> Result<WdmSpec> {
        WdmSpec::new(
            self.wdm.channel_min,
            self.wdm.channel_max,
            self.wdm.spacing_ghz * 1e9,
            self.wdm.bandwidth_ghz * 1e9,
            self.wdm.subcarriers,
        )
    }

    /// Samples per channel symbol period: power of two covering the WDM span
    /// plus guard band.
    pub fn oversampling(&self) -> usize {
        let max_c = self.wdm.channel_min.abs().max(self.wdm.channel_max.abs()) as f64;
        let occupied_half = (max_c + 0.5) * self.wdm.spacing_ghz;
        let min_os = occupied_half / (0.45 * self.wdm.bandwidth_ghz);
        let mut os = 2usize;
        while (os as f64) < min_os {
            os *= 2;
        }
        os
    }

    /// Power-of-two symbol grid per carrier.
    pub fn m_grid(&self) -> usize {
        self.training.symbols_per_sequence.next_power_of_two()
    }

    /// Per-carrier symbol energy at launch power `p_dbm` per WDM channel.
    pub fn symbol_energy(&self, p_dbm: f64) -> f64 {
        dbm_to_watts(p_dbm) / (self.wdm.bandwidth_ghz * 1e9)
    }

    /// Hash of the physics- and data-relevant fields, used to key caches.
    pub fn cache_hash(&self) -> u64 {
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(self).unwrap_or_default());
        let d = hasher.finalize();
        u64::from_le_bytes(d[..8].try_into().unwrap())
    }

    /// Base covariance kernels for COI subcarrier `j` at one launch power.
    pub fn base_kernels(&self, p_dbm: f64, subcarrier: usize) -> Result<CovarianceModel> {
        let wdm = self.wdm_spec()?;
        let energy = self.symbol_energy(p_dbm);
        let energies = ChannelEnergies::cscg(
            wdm.channels().filter(|&c| c != 0),
            energy,
        );
        let carriers = interferer_carriers(&wdm, subcarrier, &energies)?;
        covariance_approx_carriers(
            self.link.beta2_ps2_per_km * 1e-24,
            self.link.gamma_per_w_km,
            self.link.kappa,
            self.link.length_km,
            wdm.carrier_period(),
            &carriers,
            self.link.s_modes,
            self.model.memory,
        )
    }
}

/// One row of the rate table.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RateRow {
    pub power_dbm: f64,
    pub algo: String,
    pub subcarriers: usize,
    pub rate_bits: f64,
    pub h_cond: f64,
    pub h_out: f64,
    pub mc_stderr: f64,
    pub n_sequences: usize,
    pub seed: u64,
}

/// Simulated sequence: (x, y) symbol pairs per COI subcarrier.
pub type SequencePairs = Vec<(SymbolGrid, SymbolGrid)>;

/// Simulates one sequence end to end: random delays and symbols, split-step
/// propagation with noise, multimode DBP receiver, centered slice to the
/// configured sequence length.
pub fn simulate_sequence(
    cfg: &ExperimentConfig,
    p_dbm: f64,
    role: &str,
    index: usize,
) -> Result<SequencePairs> {
    let spec = cfg.coupling_spec()?;
    let base_wdm = cfg.wdm_spec()?;
    let stream = RandomStream::new(cfg.seed, &format!("p{p_dbm:.4}/{role}/seq{index}"));
    let wdm = base_wdm.with_random_delays(&mut stream.fork("delays"));
    let power = dbm_to_watts(p_dbm);
    let frame = SymbolFrame::random(
        &wdm,
        cfg.link.s_modes,
        cfg.m_grid(),
        power,
        &mut stream.fork("symbols"),
    )?;
    let field = modulate(&frame, cfg.oversampling())?;
    let ssfm = SsfmConfig {
        step_km: cfg.ssfm.step_km,
        noise_on: true,
    };
    let mut prop_stream = stream.fork("prop");
    let out = propagate(&field, &spec, &ssfm, &mut prop_stream)?;
    let received = receive(&out, &wdm, &spec, Compensation::DbpMultimode, cfg.ssfm.step_km)?;

    let m_grid = cfg.m_grid();
    let used = cfg.training.symbols_per_sequence;
    let start = (m_grid - used) / 2;
    let slice = |g: &SymbolGrid| -> SymbolGrid {
        SymbolGrid::new(
            g.rows()
                .iter()
                .map(|r| r[start..start + used].to_vec())
                .collect(),
        )
        .unwrap()
    };
    Ok(frame
        .coi
        .iter()
        .zip(received.iter())
        .map(|(x, y)| (slice(x), slice(y)))
        .collect())
}

fn pairs_cache_path(out: &Path, hash: u64, p_dbm: f64, role: &str, index: usize) -> PathBuf {
    out.join(format!("cache-{hash:016x}"))
        .join(format!("p{p_dbm:.4}_{role}_{index}.seq"))
}

const SEQ_MAGIC: &[u8; 8] = b"SDMSEQ01";

fn write_pairs(path: &Path, pairs: &SequencePairs) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(SEQ_MAGIC)?;
    f.write_all(&(pairs.len() as u32).to_le_bytes())?;
    for (x, y) in pairs {
        f.write_all(&(x.channels() as u32).to_le_bytes())?;
        f.write_all(&(x.len() as u32).to_le_bytes())?;
        for grid in [x, y] {
            for row in grid.rows() {
                for v in row {
                    f.write_all(&v.re.to_le_bytes())?;
                    f.write_all(&v.im.to_le_bytes())?;
                }
            }
        }
    }
    Ok(())
}

fn read_pairs(path: &Path) -> Result<SequencePairs> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic)?;
    if &magic != SEQ_MAGIC {
        return Err(Error::Argument("not a sequence cache file".into()));
    }
    let mut u32b = [0u8; 4];
    f.read_exact(&mut u32b)?;
    let n_sub = u32::from_le_bytes(u32b) as usize;
    let mut out = Vec::with_capacity(n_sub);
    for _ in 0..n_sub {
        f.read_exact(&mut u32b)?;
        let rows = u32::from_le_bytes(u32b) as usize;
        f.read_exact(&mut u32b)?;
        let m = u32::from_le_bytes(u32b) as usize;
        let mut grids = Vec::with_capacity(2);
        for _ in 0..2 {
            let mut g = Vec::with_capacity(rows);
            for _ in 0..rows {
                let mut row = Vec::with_capacity(m);
                let mut buf = [0u8; 16];
                for _ in 0..m {
                    f.read_exact(&mut buf)?;
                    row.push(Complex64::new(
                        f64::from_le_bytes(buf[..8].try_into().unwrap()),
                        f64::from_le_bytes(buf[8..].try_into().unwrap()),
                    ));
                }
                g.push(row);
            }
            grids.push(SymbolGrid::new(g)?);
        }
        let y = grids.pop().unwrap();
        let x = grids.pop().unwrap();
        out.push((x, y));
    }
    Ok(out)
}

/// Simulates (or loads from cache) every sequence of one role for one power.
pub fn dataset(
    cfg: &ExperimentConfig,
    out: &Path,
    p_dbm: f64,
    role: &str,
) -> Result<Vec<SequencePairs>> {
    let n = match role {
        "train" => cfg.training.train_sequences,
        "test" => cfg.training.test_sequences,
        other => return Err(Error::Argument(format!("unknown dataset role `{other}`"))),
    };
    let hash = cfg.cache_hash();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let path = pairs_cache_path(out, hash, p_dbm, role, i);
            if path.exists() {
                read_pairs(&path)
            } else {
                let pairs = simulate_sequence(cfg, p_dbm, role, i)?;
                write_pairs(&path, &pairs)?;
                Ok(pairs)
            }
        })
        .collect()
}

/// Per-(power, algo) fit artifacts: one report per COI subcarrier.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitArtifact {
    pub power_dbm: f64,
    pub algo: ReceiverAlgo,
    pub reports: Vec<FitReport>,
}

fn fit_cache_path(out: &Path, hash: u64, p_dbm: f64, algo: ReceiverAlgo) -> PathBuf {
    out.join(format!("cache-{hash:016x}"))
        .join(format!("fit_p{p_dbm:.4}_{}.json", algo.label()))
}

/// Fits the model for one (power, algo) over all subcarriers, cached.
pub fn fit_power_algo(
    cfg: &ExperimentConfig,
    out: &Path,
    p_dbm: f64,
    algo: ReceiverAlgo,
    train: &[SequencePairs],
) -> Result<FitArtifact> {
    let hash = cfg.cache_hash();
    let path = fit_cache_path(out, hash, p_dbm, algo);
    if path.exists() {
        let text = std::fs::read_to_string(&path)?;
        return Ok(serde_json::from_str(&text)?);
    }
    let n_sub = cfg.wdm.subcarriers;
    let mut reports = Vec::with_capacity(n_sub);
    for j in 0..n_sub {
        let kernels = cfg.base_kernels(p_dbm, j)?;
        let train_set = TrainingSet {
            pairs: train.iter().map(|s| s[j].clone()).collect(),
            s_modes: cfg.link.s_modes,
            memory: cfg.model.memory,
            base_r: kernels.r.clone(),
            base_s: kernels.s.clone(),
            energy: cfg.symbol_energy(p_dbm),
        };
        let fit_cfg = FitConfig::new(algo, cfg.model.fit_particles);
        let stream = RandomStream::new(cfg.seed, &format!("p{p_dbm:.4}/fit/{}/sc{j}", algo.label()));
        reports.push(fit_scales(&train_set, &fit_cfg, &stream)?);
    }
    let artifact = FitArtifact {
        power_dbm: p_dbm,
        algo,
        reports,
    };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&path, serde_json::to_string_pretty(&artifact)?)?;
    Ok(artifact)
}

/// Evaluates one (power, algo) on test data: per-subcarrier rates averaged.
pub fn rate_power_algo(
    cfg: &ExperimentConfig,
    p_dbm: f64,
    algo: ReceiverAlgo,
    fit: &FitArtifact,
    test: &[SequencePairs],
) -> Result<RateRow> {
    let energy = cfg.symbol_energy(p_dbm);
    let mut rates = Vec::new();
    let mut h_conds = Vec::new();
    let mut h_outs = Vec::new();
    let mut var = 0.0;
    for (j, report) in fit.reports.iter().enumerate() {
        let pairs: Vec<(SymbolGrid, SymbolGrid)> = test.iter().map(|s| s[j].clone()).collect();
        let stream = RandomStream::new(
            cfg.seed,
            &format!("p{p_dbm:.4}/rate/{}/sc{j}", algo.label()),
        );
        let est = achievable_rate(
            &pairs,
            &report.params,
            algo,
            cfg.model.particles,
            energy,
            &stream,
        )?;
        var += est.mc_stderr * est.mc_stderr;
        rates.push(est.rate_bits);
        h_conds.push(est.h_cond);
        h_outs.push(est.h_out);
    }
    let n_sub = rates.len() as f64;
    Ok(RateRow {
        power_dbm: p_dbm,
        algo: algo.label().to_string(),
        subcarriers: cfg.wdm.subcarriers,
        rate_bits: rates.iter().sum::<f64>() / n_sub,
        h_cond: h_conds.iter().sum::<f64>() / n_sub,
        h_out: h_outs.iter().sum::<f64>() / n_sub,
        mc_stderr: var.sqrt() / n_sub,
        n_sequences: test.len(),
        seed: cfg.seed,
    })
}

/// Output of a full pipeline run.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub rates: Vec<RateRow>,
    pub fits: Vec<FitArtifact>,
}

/// End-to-end sweep: per power point, simulate training sequences, fit every
/// algorithm, evaluate on fresh test sequences, and emit `rates.csv` plus
/// per-fit JSON under `out`.
pub fn run_pipeline(cfg: &ExperimentConfig, out: &Path) -> Result<PipelineOutput> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let mut rates = Vec::new();
    let mut fits = Vec::new();
    for &p in &cfg.powers_dbm {
        let train = dataset(cfg, out, p, "train")?;
        let test = dataset(cfg, out, p, "test")?;
        for &algo in &cfg.algos {
            let fit = fit_power_algo(cfg, out, p, algo, &train)?;
            let row = rate_power_algo(cfg, p, algo, &fit, &test)?;
            rates.push(row);
            fits.push(fit);
        }
    }
    write_rate_csv(&out.join("rates.csv"), &rates)?;
    Ok(PipelineOutput { rates, fits })
}

pub fn write_rate_csv(path: &Path, rows: &[RateRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        "power_dbm",
        "algo",
        "subcarriers",
        "rate_bits",
        "h_cond",
        "h_out",
        "mc_stderr",
        "n_sequences",
        "seed",
    ])
    .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            format!("{}", r.power_dbm),
            r.algo.clone(),
            format!("{}", r.subcarriers),
            format!("{}", r.rate_bits),
            format!("{}", r.h_cond),
            format!("{}", r.h_out),
            format!("{}", r.mc_stderr),
            format!("{}", r.n_sequences),
            format!("{}", r.seed),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rate_csv(path: &Path) -> Result<Vec<RateRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut out = Vec::new();
    for record in r.records() {
        let rec = record.map_err(csv_err)?;
        let field = |i: usize| -> Result<&str> {
            rec.get(i)
                .ok_or_else(|| Error::Argument(format!("rate CSV row missing column {i}")))
        };
        out.push(RateRow {
            power_dbm: field(0)?.parse().map_err(parse_err)?,
            algo: field(1)?.to_string(),
            subcarriers: field(2)?.parse().map_err(parse_err)?,
            rate_bits: field(3)?.parse().map_err(parse_err)?,
            h_cond: field(4)?.parse().map_err(parse_err)?,
            h_out: field(5)?.parse().map_err(parse_err)?,
            mc_stderr: field(6)?.parse().map_err(parse_err)?,
            n_sequences: field(7)?.parse().map_err(parse_err)?,
            seed: field(8)?.parse().map_err(parse_err)?,
        });
    }
    Ok(out)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Argument(format!("csv: {e}"))
}

fn parse_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Argument(format!("csv field: {e}"))
}

/// One plot-ready series point.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FigureRow {
    pub series: String,
    pub power_dbm: f64,
    pub rate: f64,
}

/// Turns rate tables into plot-ready series (one per algo/subcarrier pair)
/// plus the analytic log2(1 + SNR) series with SNR = P/(N_ASE B).
pub fn emit_figure_data(cfg: &ExperimentConfig, rows: &[RateRow]) -> Result<Vec<FigureRow>> {
    let mut missing = Vec::new();
    let mut out = Vec::new();
    for &algo in &cfg.algos {
        let series = if cfg.wdm.subcarriers == 4 {
            format!("{}_4sc", algo.label())
        } else {
            algo.label().to_string()
        };
        for &p in &cfg.powers_dbm {
            match rows.iter().find(|r| {
                r.algo == algo.label() && (r.power_dbm - p).abs() < 1e-9
            }) {
                Some(r) => out.push(FigureRow {
                    series: series.clone(),
                    power_dbm: p,
                    rate: r.rate_bits,
                }),
                None => missing.push(format!("{series}@{p}dBm")),
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::Argument(format!(
            "rate table is missing series points: {}",
            missing.join(", ")
        )));
    }
    for &p in &cfg.powers_dbm {
        out.push(FigureRow {
            series: "log2_1_plus_snr".to_string(),
            power_dbm: p,
            rate: capacity_bound(cfg, p),
        });
    }
    Ok(out)
}

/// log2(1 + SNR) with SNR = P / (N_ASE * B).
pub fn capacity_bound(cfg: &ExperimentConfig, p_dbm: f64) -> f64 {
    let snr = dbm_to_watts(p_dbm) / (cfg.link.n_ase_w_per_hz * cfg.wdm.bandwidth_ghz * 1e9);
    (1.0 + snr).log2()
}

pub fn write_figure_csv(path: &Path, rows: &[FigureRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["series", "power_dbm", "rate"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.series.clone(),
            format!("{}", r.power_dbm),
            format!("{}", r.rate),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_figure_csv(path: &Path) -> Result<Vec<FigureRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut out = Vec::new();
    for record in r.records() {
        let rec = record.map_err(csv_err)?;
        out.push(FigureRow {
            series: rec.get(0).unwrap_or_default().to_string(),
            power_dbm: rec.get(1).unwrap_or_default().parse().map_err(parse_err)?,
            rate: rec.get(2).unwrap_or_default().parse().map_err(parse_err)?,
        });
    }
    Ok(out)
}

/// Builds the exact coefficient table for the configured system and writes
/// the binary cache; single-carrier grids only.
pub fn build_coefficient_cache(cfg: &ExperimentConfig, out: &Path) -> Result<PathBuf> {
    let spec = cfg.coupling_spec()?;
    let wdm = cfg.wdm_spec()?;
    let table: NliCoefficients = build_x_table(&spec, &wdm)?;
    std::fs::create_dir_all(out)?;
    let path = out.join(format!("coeffs-{:016x}.bin", table.spec_hash));
    write_coefficient_cache(&path, &table)?;
    Ok(path)
}
