//! WDM/PAM transmitter and the receiver chain: brick-wall bandpass, linear
//! distortion compensation or digital back-propagation, matched filter,
//! sampler.
//!
//! Pulses are unit-energy periodic sincs realized as ideal brick-wall
//! spectra on the FFT grid, so Nyquist orthogonality and the matched filter
//! are exact: filtering with s0*(-t) and sampling at mT reduces to selecting
//! the carrier's frequency bins and scaling by sqrt(T).

use crate::error::{Error, Result};
use crate::fft;
use crate::fiber::{self, CouplingSpec, GainProfile, NlCoupling, Regime, SsfmParams};
use crate::rng::RandomStream;
use crate::signal::ModeField;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Transmit pulse shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pulse {
    Sinc,
}

/// WDM grid and multi-carrier layout.
///
/// `delays[channel_index][subcarrier]` holds the pulse-train delay of each
/// carrier; the channel of interest (c = 0) is always synchronized at zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WdmSpec {
    pub channel_min: i32,
    pub channel_max: i32,
    /// Channel spacing, Hz.
    pub spacing_hz: f64,
    /// Per-channel bandwidth B, Hz; symbol period is T = 1/B.
    pub bandwidth_hz: f64,
    pub pulse: Pulse,
    /// Subcarriers per channel (1 or 4); 4 gives 12.5-GHz carriers at 4T.
    pub subcarriers: usize,
    pub delays: Vec<Vec<f64>>,
}

impl WdmSpec {
    pub fn new(
        channel_min: i32,
        channel_max: i32,
        spacing_hz: f64,
        bandwidth_hz: f64,
        subcarriers: usize,
    ) -> Result<Self> {
        let spec = WdmSpec {
            channel_min,
            channel_max,
            spacing_hz,
            bandwidth_hz,
            pulse: Pulse::Sinc,
            subcarriers,
            delays: vec![
                vec![0.0; subcarriers];
                (channel_max - channel_min + 1) as usize
            ],
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channel_min > 0 || self.channel_max < 0 {
            return Err(Error::Argument(
                "channel range must include the COI at c = 0".into(),
            ));
        }
        if !(self.bandwidth_hz > 0.0) || self.spacing_hz < self.bandwidth_hz {
            return Err(Error::Argument(
                "need spacing >= bandwidth > 0 for non-overlapping channels".into(),
            ));
        }
        if !matches!(self.subcarriers, 1 | 4) {
            return Err(Error::Argument(format!(
                "subcarriers must be 1 or 4, got {}",
                self.subcarriers
            )));
        }
        if self.delays.len() != self.n_channels()
            || self.delays.iter().any(|d| d.len() != self.subcarriers)
        {
            return Err(Error::Argument(
                "delays must be n_channels x subcarriers".into(),
            ));
        }
        let half = self.carrier_period() / 2.0;
        for (ci, d) in self.delays.iter().enumerate() {
            let c = self.channel_min + ci as i32;
            for &tau in d {
                if tau.abs() > half * (1.0 + 1e-12) {
                    return Err(Error::Argument(format!(
                        "delay {tau} of channel {c} outside [-T'/2, T'/2]"
                    )));
                }
                if c == 0 && tau != 0.0 {
                    return Err(Error::Argument("COI carriers must have zero delay".into()));
                }
            }
        }
        Ok(())
    }

    pub fn n_channels(&self) -> usize {
        (self.channel_max - self.channel_min + 1) as usize
    }

    pub fn channels(&self) -> impl Iterator<Item = i32> {
        self.channel_min..=self.channel_max
    }

    pub fn max_abs_channel(&self) -> i32 {
        self.channel_min.abs().max(self.channel_max.abs())
    }

    /// Symbol period of the 50-GHz channel grid, T = 1/B.
    pub fn symbol_period(&self) -> f64 {
        1.0 / self.bandwidth_hz
    }

    /// Symbol period of one carrier (T for single carrier, 4T for 4SC).
    pub fn carrier_period(&self) -> f64 {
        self.subcarriers as f64 / self.bandwidth_hz
    }

    /// Bandwidth of one carrier.
    pub fn carrier_bandwidth(&self) -> f64 {
        self.bandwidth_hz / self.subcarriers as f64
    }

    pub fn delay(&self, channel: i32, subcarrier: usize) -> f64 {
        self.delays[(channel - self.channel_min) as usize][subcarrier]
    }

    /// Copy with fresh interferer delays, uniform over one carrier period;
    /// COI carriers stay synchronized at zero.
    pub fn with_random_delays(&self, stream: &mut RandomStream) -> Self {
        let half = self.carrier_period() / 2.0;
        let mut out = self.clone();
        for (ci, d) in out.delays.iter_mut().enumerate() {
            let c = self.channel_min + ci as i32;
            for tau in d.iter_mut() {
                *tau = if c == 0 { 0.0 } else { stream.uniform(-half, half) };
            }
        }
        out
    }
}

/// A 2S x M block of complex symbols (one row per complex-alphabet channel).
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolGrid {
    rows: Vec<Vec<Complex64>>,
}

impl SymbolGrid {
    pub fn new(rows: Vec<Vec<Complex64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Argument("symbol grid needs at least one row".into()));
        }
        let m = rows[0].len();
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::Argument("symbol rows have unequal lengths".into()));
        }
        Ok(SymbolGrid { rows })
    }

    pub fn zeros(channels: usize, m: usize) -> Self {
        SymbolGrid {
            rows: vec![vec![Complex64::ZERO; m]; channels],
        }
    }

    /// i.i.d. CSCG symbols with per-symbol energy `energy`.
    pub fn random_cscg(
        channels: usize,
        m: usize,
        energy: f64,
        stream: &mut RandomStream,
    ) -> Self {
        SymbolGrid {
            rows: (0..channels)
                .map(|_| (0..m).map(|_| stream.cscg(energy)).collect())
                .collect(),
        }
    }

    pub fn rows(&self) -> &[Vec<Complex64>] {
        &self.rows
    }

    pub fn rows_mut(&mut self) -> &mut [Vec<Complex64>] {
        &mut self.rows
    }

    pub fn channels(&self) -> usize {
        self.rows.len()
    }

    pub fn len(&self) -> usize {
        self.rows[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows[0].is_empty()
    }

    /// The 2S-vector symbol at time index m.
    pub fn column(&self, m: usize) -> Vec<Complex64> {
        self.rows.iter().map(|r| r[m]).collect()
    }

    pub fn mean_symbol_energy(&self) -> f64 {
        let n = self.channels() * self.len();
        self.rows.iter().flatten().map(|v| v.norm_sqr()).sum::<f64>() / n as f64
    }
}

/// Interferer symbols of one carrier (channel c != 0, one subcarrier).
#[derive(Debug, Clone)]
pub struct InterfererSymbols {
    pub channel: i32,
    pub subcarrier: usize,
    pub symbols: SymbolGrid,
}

/// Transmitted symbols of one sequence: COI rows per subcarrier plus all
/// interferer carriers, with the delay draw that was used on air.
#[derive(Debug, Clone)]
pub struct SymbolFrame {
    pub wdm: WdmSpec,
    /// COI symbols, one grid per subcarrier.
    pub coi: Vec<SymbolGrid>,
    pub interferers: Vec<InterfererSymbols>,
    /// Per-symbol energy E (identical across carriers here).
    pub energy: f64,
}

impl SymbolFrame {
    /// CSCG symbols on every carrier at per-channel launch power
    /// `power_watts` (P = E/T per channel; subcarriers split it evenly).
    pub fn random(
        wdm: &WdmSpec,
        s_modes: usize,
        m_grid: usize,
        power_watts: f64,
        stream: &mut RandomStream,
    ) -> Result<Self> {
        if !m_grid.is_power_of_two() {
            return Err(Error::Size(format!(
                "symbol grid length {m_grid} is not a power of two"
            )));
        }
        // E = (P / n_sc) * T' = P * T regardless of the subcarrier count.
        let energy = power_watts * wdm.symbol_period();
        let rows = 2 * s_modes;
        let coi = (0..wdm.subcarriers)
            .map(|j| {
                SymbolGrid::random_cscg(rows, m_grid, energy, &mut stream.fork(&format!("coi/sc{j}")))
            })
            .collect();
        let mut interferers = Vec::new();
        for c in wdm.channels().filter(|&c| c != 0) {
            for j in 0..wdm.subcarriers {
                interferers.push(InterfererSymbols {
                    channel: c,
                    subcarrier: j,
                    symbols: SymbolGrid::random_cscg(
                        rows,
                        m_grid,
                        energy,
                        &mut stream.fork(&format!("int/c{c}/sc{j}")),
                    ),
                });
            }
        }
        Ok(SymbolFrame {
            wdm: wdm.clone(),
            coi,
            interferers,
            energy,
        })
    }

    pub fn m_grid(&self) -> usize {
        self.coi[0].len()
    }

    pub fn channels(&self) -> usize {
        self.coi[0].channels()
    }
}

/// Receiver compensation variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Compensation {
    /// Linear distortion compensation only.
    Ldc,
    /// Back-propagation with each row seeing only its own power.
    Dbp1Pol,
    /// Back-propagation per spatial mode (2-row stacks).
    Dbp2Pol,
    /// Joint back-propagation of the full 2S-stack and all COI subcarriers.
    DbpMultimode,
}

struct CarrierLayout {
    /// First absolute frequency bin (may be negative before wrapping).
    k_lo: i64,
    m: usize,
    n: usize,
}

impl CarrierLayout {
    fn bin(&self, p: usize) -> usize {
        (self.k_lo + p as i64).rem_euclid(self.n as i64) as usize
    }

    /// Baseband frequency offset of in-band position `p`, in Hz.
    fn baseband_freq(&self, p: usize, delta_f: f64) -> f64 {
        (p as f64 - self.m as f64 / 2.0) * delta_f
    }

    /// Symbol-DFT index holding in-band position `p`.
    fn sym_index(&self, p: usize) -> usize {
        (p + self.m / 2) % self.m
    }
}

fn carrier_layout(wdm: &WdmSpec, channel: i32, subcarrier: usize, m: usize, n: usize) -> Result<CarrierLayout> {
    let delta_f = wdm.carrier_bandwidth() / m as f64;
    let f_lo = channel as f64 * wdm.spacing_hz - wdm.bandwidth_hz / 2.0
        + subcarrier as f64 * wdm.carrier_bandwidth();
    let k = f_lo / delta_f;
    if (k - k.round()).abs() > 1e-6 {
        return Err(Error::Argument(format!(
            "channel spacing {} Hz is not representable on the FFT grid (df = {} Hz)",
            wdm.spacing_hz, delta_f
        )));
    }
    Ok(CarrierLayout {
        k_lo: k.round() as i64,
        m,
        n,
    })
}

fn check_oversampling(wdm: &WdmSpec, oversampling: usize) -> Result<()> {
    let occupied_half = (wdm.max_abs_channel() as f64 + 0.5) * wdm.spacing_hz;
    let fs = oversampling as f64 * wdm.bandwidth_hz;
    if occupied_half > 0.45 * fs {
        return Err(Error::Aliasing(format!(
            "oversampling {oversampling} puts the outermost channel at {:.1} GHz of a {:.1}-GHz grid",
            occupied_half / 1e9,
            fs / 1e9
        )));
    }
    Ok(())
}

/// Synthesizes the z = 0 field of one sequence on an `oversampling`-samples
/// per-T grid: the sum over carriers of frequency-shifted, delayed sinc
/// pulse trains.
pub fn modulate(frame: &SymbolFrame, oversampling: usize) -> Result<ModeField> {
    let wdm = &frame.wdm;
    wdm.validate()?;
    check_oversampling(wdm, oversampling)?;
    let m = frame.m_grid();
    let os_carrier = oversampling * wdm.subcarriers;
    let n = m * os_carrier;
    let fs = oversampling as f64 * wdm.bandwidth_hz;
    let delta_f = fs / n as f64;
    let t_carrier = wdm.carrier_period();
    let alpha = (os_carrier as f64 / (m as f64 * t_carrier)).sqrt();
    let rows_n = frame.channels();

    let mut spectra = vec![vec![Complex64::ZERO; n]; rows_n];
    let mut place = |grid: &SymbolGrid, channel: i32, subcarrier: usize| -> Result<()> {
        let layout = carrier_layout(wdm, channel, subcarrier, m, n)?;
        let tau = wdm.delay(channel, subcarrier);
        for (row, spec_row) in grid.rows().iter().zip(spectra.iter_mut()) {
            let mut sym: Vec<Complex64> = row.clone();
            fft::fft_raw(&mut sym);
            for p in 0..m {
                let phase = -2.0 * PI * layout.baseband_freq(p, delta_f) * tau;
                spec_row[layout.bin(p)] +=
                    alpha * sym[layout.sym_index(p)] * Complex64::from_polar(1.0, phase);
            }
        }
        Ok(())
    };

    for (j, grid) in frame.coi.iter().enumerate() {
        if grid.len() != m || grid.channels() != rows_n {
            return Err(Error::Argument("COI grids must share shape".into()));
        }
        place(grid, 0, j)?;
    }
    for intf in &frame.interferers {
        if intf.symbols.len() != m || intf.symbols.channels() != rows_n {
            return Err(Error::Argument("interferer grids must share shape".into()));
        }
        place(&intf.symbols, intf.channel, intf.subcarrier)?;
    }

    for row in spectra.iter_mut() {
        fft::ifft_unitary(row);
    }
    ModeField::new(spectra, fs, 0.0)
}

/// Matched-filter output of one COI carrier from a full-grid spectrum
/// (unitary convention). `extra_phase(freq_hz)` stacks receiver-side phase
/// on the in-band bins; delays of the COI are zero by contract.
fn demodulate_carrier(
    spectrum_row: &[Complex64],
    layout: &CarrierLayout,
    delta_f: f64,
    alpha: f64,
    extra_phase: impl Fn(f64) -> f64,
) -> Vec<Complex64> {
    let m = layout.m;
    let mut sym = vec![Complex64::ZERO; m];
    for p in 0..m {
        let f = layout.baseband_freq(p, delta_f);
        let v = spectrum_row[layout.bin(p)] * Complex64::from_polar(1.0, extra_phase(f));
        sym[layout.sym_index(p)] = v / alpha;
    }
    fft::ifft_scaled(&mut sym);
    sym
}

/// Receiver chain: brick-wall bandpass to the COI, LDC or DBP, matched
/// filter, sampler. Returns one symbol grid per COI subcarrier.
pub fn receive(
    field: &ModeField,
    wdm: &WdmSpec,
    spec: &CouplingSpec,
    comp: Compensation,
    dbp_step_km: f64,
) -> Result<Vec<SymbolGrid>> {
    wdm.validate()?;
    let n = field.len();
    let fs = field.sample_rate();
    // Infer the symbol count from the grid: n = m * os * subcarriers.
    let os = (fs / wdm.bandwidth_hz).round() as usize;
    if (fs - os as f64 * wdm.bandwidth_hz).abs() > 1e-3 {
        return Err(Error::Argument(
            "sample rate is not an integer multiple of the channel bandwidth".into(),
        ));
    }
    let os_carrier = os * wdm.subcarriers;
    if n % os_carrier != 0 {
        return Err(Error::Argument(
            "grid length is not a multiple of the samples per carrier symbol".into(),
        ));
    }
    let m_grid = n / os_carrier;
    let delta_f = fs / n as f64;
    let alpha = (os_carrier as f64 / (m_grid as f64 * wdm.carrier_period())).sqrt();

    // Brick-wall bandpass: keep only the COI band (h_B * s = s holds exactly
    // for the grid-aligned sinc spectra).
    let mut spectra: Vec<Vec<Complex64>> = field.rows().to_vec();
    for row in spectra.iter_mut() {
        fft::fft_unitary(row);
    }
    let half_band = wdm.bandwidth_hz / 2.0;
    for row in spectra.iter_mut() {
        for k in 0..n {
            if fft::bin_freq_hz(k, n, fs).abs() > half_band * (1.0 + 1e-12) {
                row[k] = Complex64::ZERO;
            }
        }
    }

    let betas = spec.row_betas();
    match comp {
        Compensation::Ldc => {
            // Apply D_{-L} in place on the in-band bins.
            for (row, &(b0, b1, b2)) in spectra.iter_mut().zip(betas.iter()) {
                for k in 0..n {
                    let w = 2.0 * PI * fft::bin_freq_hz(k, n, fs);
                    let theta = -(b0 - b1 * w + 0.5 * b2 * w * w) * spec.length_km;
                    row[k] *= Complex64::from_polar(1.0, theta);
                }
            }
        }
        Compensation::Dbp1Pol | Compensation::Dbp2Pol | Compensation::DbpMultimode => {
            let kappa = match &spec.regime {
                Regime::Strong { kappa, .. } => *kappa,
                Regime::Weak { .. } => {
                    return Err(Error::Argument(
                        "DBP variants are defined for the strong-coupling regime".into(),
                    ))
                }
            };
            let coupling = match comp {
                Compensation::Dbp1Pol => NlCoupling::PerRow { kappa },
                Compensation::Dbp2Pol => NlCoupling::PerModeStack { kappa },
                _ => NlCoupling::FullStack { kappa },
            };
            let gain = match &spec.gain {
                GainProfile::Ida => GainProfile::Ida,
                GainProfile::Table(knots) => GainProfile::Table(
                    knots
                        .iter()
                        .rev()
                        .map(|&(z, g)| (spec.length_km - z, g))
                        .collect(),
                ),
            };
            let params = SsfmParams {
                betas: betas.iter().map(|&(b0, b1, b2)| (-b0, -b1, -b2)).collect(),
                gamma: -spec.gamma,
                coupling,
                gain,
                noise_psd_per_km: None,
            };
            let n_steps = (spec.length_km / dbp_step_km).round() as usize;
            if n_steps == 0 || (spec.length_km - n_steps as f64 * dbp_step_km).abs() > 1e-6 {
                return Err(Error::Argument(format!(
                    "DBP step {dbp_step_km} km does not divide length {} km",
                    spec.length_km
                )));
            }
            for row in spectra.iter_mut() {
                fft::ifft_unitary(row);
            }
            let mut stream = RandomStream::new(0, "dbp");
            fiber::ssfm_run(&mut spectra, fs, &params, dbp_step_km, n_steps, &mut stream)?;
            for row in spectra.iter_mut() {
                fft::fft_unitary(row);
            }
        }
    }

    // Per-subcarrier matched filter and sampler.
    let mut out = Vec::with_capacity(wdm.subcarriers);
    for j in 0..wdm.subcarriers {
        let layout = carrier_layout(wdm, 0, j, m_grid, n)?;
        let rows: Vec<Vec<Complex64>> = spectra
            .iter()
            .map(|row| demodulate_carrier(row, &layout, delta_f, alpha, |_| 0.0))
            .collect();
        out.push(SymbolGrid::new(rows)?);
    }
    Ok(out)
}
