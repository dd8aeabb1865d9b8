//! Closed-form energy per real multiply-accumulate, throughput, thermodynamic and Landauer
//! limits, and the free-space link budget.

use crate::frontend::db_to_linear;
use crate::mvm::Scheme;

pub const BOLTZMANN: f64 = 1.380649e-23;
pub const ROOM_TEMPERATURE: f64 = 300.0;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub fn kt0() -> f64 {
    BOLTZMANN * ROOM_TEMPERATURE
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HardwareProfile {
    pub eta_radio: f64,
    pub eta_mixer: f64,
    pub eta_nf: f64,
    /// Joules per ADC sample.
    pub e_adc: f64,
    /// Joules per digital real MAC.
    pub e_dig: f64,
    pub kt0: f64,
    /// Linear SNR.
    pub snr: f64,
}

impl HardwareProfile {
    /// Measured losses: radio 10%, mixer -11.4 dB, noise figure -16.9 dB; 1 pJ ADC and digital MAC.
    pub fn measured(snr: f64) -> Self {
        Self {
            eta_radio: 0.1,
            eta_mixer: db_to_linear(-11.4),
            eta_nf: db_to_linear(-16.9),
            e_adc: 1e-12,
            e_dig: 1e-12,
            kt0: kt0(),
            snr,
        }
    }

    /// Lossless analog path with the default 1 pJ converters.
    pub fn ideal(snr: f64) -> Self {
        Self { eta_radio: 1.0, eta_mixer: 1.0, eta_nf: 1.0, ..Self::measured(snr) }
    }

    pub fn eta(&self) -> f64 {
        self.eta_radio * self.eta_mixer * self.eta_nf
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decomposition {
    /// Blocks of `m_block` outputs with the given padding (`α`) and prefix (`β`) overheads.
    Blocks { m_block: usize, alpha: f64, beta: f64 },
    /// One output per block decoded by the three-point formula.
    Ip { alpha: f64, beta: f64 },
}

impl Decomposition {
    /// `ΔM = ΔL = 1` around a single output: `α = 2`, `β = 1/3`.
    pub fn ip() -> Self {
        Decomposition::Ip { alpha: 2.0, beta: 1.0 / 3.0 }
    }

    pub fn overheads(&self) -> (f64, f64) {
        match *self {
            Decomposition::Blocks { alpha, beta, .. } | Decomposition::Ip { alpha, beta } => (alpha, beta),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown {
    pub n: usize,
    pub m: usize,
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    fn new(n: usize, m: usize, e1: f64, e2: f64, e3: f64) -> Self {
        Self { n, m, e1, e2, e3, total: e1 + e2 + e3 }
    }

    pub fn macs(&self) -> f64 {
        4.0 * self.n as f64 * self.m as f64
    }

    pub fn big_e1(&self) -> f64 {
        self.macs() * self.e1
    }

    pub fn big_e2(&self) -> f64 {
        self.macs() * self.e2
    }

    pub fn big_e3(&self) -> f64 {
        self.macs() * self.e3
    }

    pub fn big_total(&self) -> f64 {
        self.macs() * self.total
    }

    pub fn ops_per_joule(&self) -> f64 {
        1.0 / self.total
    }

    pub fn tops_per_watt(&self) -> f64 {
        self.ops_per_joule() * 1e-12
    }
}

/// Per-MAC energy of one `M×N` MVM. `Vanilla` ignores `decomposition`.
pub fn energy_breakdown(scheme: Scheme, decomposition: Decomposition, n: usize, m: usize, p: &HardwareProfile) -> EnergyBreakdown {
    let (nf, mf) = (n as f64, m as f64);
    let thermal = p.snr * p.kt0 / p.eta();
    if scheme == Scheme::Vanilla {
        let e3 = 1.5 * (nf * mf).log2() * p.e_dig;
        return EnergyBreakdown::new(n, m, thermal / 2.0, p.e_adc, e3);
    }
    let (alpha, beta) = decomposition.overheads();
    let e1 = (1.0 + alpha) * (1.0 + beta) / 4.0 * thermal;
    let e2 = (1.0 + alpha) / (2.0 * nf) * p.e_adc;
    // receiver decode per MAC
    let decode = match decomposition {
        Decomposition::Blocks { m_block, .. } => (1.0 + alpha) / (2.0 * nf) * ((1.0 + alpha) * m_block as f64).log2(),
        // three-point decode: 8 real MACs per output
        Decomposition::Ip { .. } => 2.0 / nf,
    };
    let client_ifft = nf.log2() / (2.0 * mf);
    let e3 = p.e_dig
        * match scheme {
            Scheme::WPrecode => decode,
            Scheme::Basic => client_ifft + decode,
            Scheme::XPrecode => 1.0 / mf + client_ifft + decode,
            Scheme::Vanilla => unreachable!(),
        };
    EnergyBreakdown::new(n, m, e1, e2, e3)
}

/// MAC-weighted aggregate over layers `(N_l, M_l)`.
pub fn aggregate_model_energy(
    layers: &[(usize, usize)],
    scheme: Scheme,
    decomposition: Decomposition,
    p: &HardwareProfile,
) -> Option<EnergyBreakdown> {
    if layers.is_empty() {
        return None;
    }
    let parts: Vec<EnergyBreakdown> =
        layers.iter().map(|&(n, m)| energy_breakdown(scheme, decomposition, n, m, p)).collect();
    let weight: f64 = parts.iter().map(|b| b.macs()).sum();
    let avg = |f: fn(&EnergyBreakdown) -> f64| parts.iter().map(|b| b.macs() * f(b)).sum::<f64>() / weight;
    let (n, m) = if layers.len() == 1 { layers[0] } else { (0, 0) };
    let mut out = EnergyBreakdown::new(n, m, avg(|b| b.e1), avg(|b| b.e2), avg(|b| b.e3));
    if layers.len() > 1 {
        // keep 4NM·e consistent with the summed MAC count
        out.n = 1;
        out.m = (weight / 4.0).round() as usize;
    }
    Some(out)
}

/// Thermodynamic limit `SNR·k_B·T0/4`.
pub fn e_tdl(snr: f64) -> f64 {
    snr * kt0() / 4.0
}

/// Landauer bound for a `b`-bit MAC: `b²·ln2·k_B·T0`.
pub fn landauer_limit(bits: f64) -> f64 {
    bits * bits * std::f64::consts::LN_2 * kt0()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThroughputParams {
    pub clients: usize,
    pub bandwidth: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Real MACs per second, `4UB/((1+α)(1+β))`.
pub fn throughput(p: &ThroughputParams) -> f64 {
    4.0 * p.clients as f64 * p.bandwidth / ((1.0 + p.alpha) * (1.0 + p.beta))
}

/// Free-space distance at which the received power equals `p_rx_dbm`.
pub fn link_budget_distance(
    p_tx_dbm: f64,
    gains_dbi: &[f64],
    beamforming_db: f64,
    losses_db: f64,
    p_rx_dbm: f64,
    carrier: f64,
) -> f64 {
    let margin = p_tx_dbm + gains_dbi.iter().sum::<f64>() + beamforming_db - losses_db - p_rx_dbm;
    10f64.powf(margin / 20.0) * SPEED_OF_LIGHT / (4.0 * std::f64::consts::PI * carrier)
}
