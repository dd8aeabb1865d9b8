//! Flat `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Command-line flags override file values.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rfmvm::frontend::MixerModel;
use rfmvm::mvm::{Fidelity, Scheme};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    IpBench,
    MvmBench,
    Classify,
    Energy,
    SyncBench,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::IpBench => "ip-bench",
            Command::MvmBench => "mvm-bench",
            Command::Classify => "classify",
            Command::Energy => "energy",
            Command::SyncBench => "sync-bench",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelSpec {
    Flat,
    /// Unit line-of-sight tap plus `taps - 1` echoes with magnitudes in `[lo, hi]`.
    Multipath { taps: usize, lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileKind {
    Measured,
    Ideal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub command: Command,
    pub scheme: Scheme,
    pub fidelity: Fidelity,
    pub mixer: MixerModel,
    /// Receive filter stopband for waveform runs.
    pub stopband_db: f64,
    pub n: usize,
    pub m: usize,
    pub m_block: usize,
    pub zero_pad: usize,
    pub cp_len: usize,
    pub bandwidth: f64,
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub channel: ChannelSpec,
    /// Sounding SNR for CSI; `None` gives the precoders the true channel.
    pub probe_snr_db: Option<f64>,
    pub profile: ProfileKind,
    /// Input sizes for the energy sweep.
    pub sizes: Vec<usize>,
    pub model: Option<PathBuf>,
    pub vectors: Option<PathBuf>,
    pub preamble_len: usize,
    /// Largest CFO drawn by the sync bench, as a fraction of the subcarrier spacing.
    pub cfo_max: f64,
    pub max_offset: usize,
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    pub fn defaults(command: Command) -> Self {
        let (n, m, m_block, zero_pad, cp_len, snr, trials) = match command {
            Command::IpBench => (4096, 1, 1, 1, 1, vec![5.0, 10.0, 15.0, 20.0, 25.0, 30.0], 200),
            Command::MvmBench => (256, 24, 6, 1, 2, vec![15.0, 25.0, 35.0], 50),
            Command::Classify => (16, 8, 6, 1, 2, vec![f64::INFINITY], 1),
            Command::Energy => (784, 300, 6, 1, 2, vec![20.0], 1),
            Command::SyncBench => (16, 6, 6, 1, 2, vec![10.0, 20.0], 1000),
        };
        Self {
            command,
            scheme: Scheme::WPrecode,
            fidelity: Fidelity::Symbolic,
            mixer: MixerModel::IdealBaseband,
            stopband_db: rfmvm::frontend::DEFAULT_STOPBAND_DB,
            n,
            m,
            m_block,
            zero_pad,
            cp_len,
            bandwidth: 1.0,
            snr_db: snr,
            trials,
            seed: 1,
            channel: ChannelSpec::Flat,
            probe_snr_db: None,
            profile: ProfileKind::Measured,
            sizes: (7..=15).map(|k| 1usize << k).collect(),
            model: None,
            vectors: None,
            preamble_len: 31,
            cfo_max: 0.1,
            max_offset: 200,
            out_dir: PathBuf::from("."),
            threads: None,
        }
    }

    /// Applies one `key`/`value` pair. `origin` prefixes error messages.
    pub fn set(&mut self, key: &str, value: &str, origin: &str) -> CliResult<()> {
        let bad = |what: &str| CliError::Config(format!("{origin}: {key} = {value:?}: {what}"));
        let v = value.trim();
        match key {
            "scheme" => self.scheme = Scheme::parse(v).ok_or_else(|| bad("expected vanilla, basic, w-precode or x-precode"))?,
            "fidelity" => self.fidelity = Fidelity::parse(v).ok_or_else(|| bad("expected symbolic or waveform"))?,
            "mixer" => {
                self.mixer = match v {
                    "ideal" => MixerModel::IdealBaseband,
                    "diode" => MixerModel::DiodeSignPassband,
                    _ => return Err(bad("expected ideal or diode")),
                }
            }
            "stopband_db" => self.stopband_db = v.parse::<f64>().ok().filter(|d| *d > 0.0).ok_or_else(|| bad("expected a positive number"))?,
            "n" => self.n = positive(v).ok_or_else(|| bad("expected a positive integer"))?,
            "m" => self.m = positive(v).ok_or_else(|| bad("expected a positive integer"))?,
            "m_block" => self.m_block = positive(v).ok_or_else(|| bad("expected a positive integer"))?,
            "zero_pad" => self.zero_pad = v.parse().map_err(|_| bad("expected an integer"))?,
            "cp_len" => self.cp_len = v.parse().map_err(|_| bad("expected an integer"))?,
            "bandwidth" => self.bandwidth = v.parse::<f64>().ok().filter(|b| *b > 0.0).ok_or_else(|| bad("expected a positive number"))?,
            "snr_db" => self.snr_db = parse_snr_list(v).map_err(|e| bad(&e))?,
            "trials" => self.trials = positive(v).ok_or_else(|| bad("expected a positive integer"))?,
            "seed" => self.seed = v.parse().map_err(|_| bad("expected an unsigned integer"))?,
            "channel" => self.channel = parse_channel(v).map_err(|e| bad(&e))?,
            "probe_snr_db" => {
                self.probe_snr_db = match v {
                    "perfect" | "none" => None,
                    _ => Some(v.parse().map_err(|_| bad("expected a number or `perfect`"))?),
                }
            }
            "profile" => {
                self.profile = match v {
                    "measured" => ProfileKind::Measured,
                    "ideal" => ProfileKind::Ideal,
                    _ => return Err(bad("expected measured or ideal")),
                }
            }
            "sizes" => {
                self.sizes = v.split(',').map(|s| positive(s.trim())).collect::<Option<Vec<_>>>().ok_or_else(|| bad("expected a list of positive integers"))?
            }
            "model" => self.model = Some(PathBuf::from(v)),
            "vectors" => self.vectors = Some(PathBuf::from(v)),
            "preamble_len" => self.preamble_len = v.parse().ok().filter(|&l: &usize| l >= 2).ok_or_else(|| bad("expected an integer >= 2"))?,
            "cfo_max" => self.cfo_max = v.parse::<f64>().ok().filter(|c| *c >= 0.0).ok_or_else(|| bad("expected a non-negative number"))?,
            "max_offset" => self.max_offset = v.parse().map_err(|_| bad("expected an integer"))?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "threads" => self.threads = Some(positive(v).ok_or_else(|| bad("expected a positive integer"))?),
            _ => return Err(CliError::Config(format!("{origin}: unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str, name: &str) -> CliResult<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let origin = format!("{name}:{}", i + 1);
            let (k, v) = line.split_once('=').ok_or_else(|| CliError::Config(format!("{origin}: expected `key = value`")))?;
            self.set(k.trim(), v, &origin)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> CliResult<()> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Checks cross-field constraints and that referenced files exist.
    pub fn validate(&self) -> CliResult<()> {
        let fail = |m: String| Err(CliError::Config(m));
        if self.snr_db.is_empty() {
            return fail("snr_db: at least one value is required".into());
        }
        if self.cp_len > self.m_block + 2 * self.zero_pad {
            return fail(format!("cp_len = {} exceeds the capture window {}", self.cp_len, self.m_block + 2 * self.zero_pad));
        }
        if let ChannelSpec::Multipath { lo, hi, .. } = self.channel {
            if lo > hi {
                return fail("channel: lower tap magnitude above the upper one".into());
            }
        }
        if self.command == Command::Classify {
            for (key, p) in [("model", &self.model), ("vectors", &self.vectors)] {
                match p {
                    None => return fail(format!("{key}: required for classify")),
                    Some(p) if !p.exists() => return fail(format!("{key}: {} does not exist", p.display())),
                    _ => {}
                }
            }
        }
        if self.command == Command::SyncBench && self.cfo_max * 2.0 * self.preamble_len as f64 >= self.capture_len() as f64 {
            return fail(format!(
                "cfo_max = {} is outside the unambiguous range ±{:.4} for preamble_len {}",
                self.cfo_max,
                self.capture_len() as f64 / (2.0 * self.preamble_len as f64),
                self.preamble_len
            ));
        }
        Ok(())
    }

    pub fn capture_len(&self) -> usize {
        self.m_block + 2 * self.zero_pad
    }

    /// Echo of every field for the run manifest.
    pub fn to_pairs(&self) -> BTreeMap<&'static str, String> {
        let mut out = BTreeMap::new();
        out.insert("command", self.command.name().to_string());
        out.insert("scheme", self.scheme.name().to_string());
        out.insert("fidelity", self.fidelity.name().to_string());
        out.insert("mixer", match self.mixer {
            MixerModel::IdealBaseband => "ideal",
            MixerModel::DiodeSignPassband => "diode",
        }
        .to_string());
        out.insert("stopband_db", self.stopband_db.to_string());
        out.insert("n", self.n.to_string());
        out.insert("m", self.m.to_string());
        out.insert("m_block", self.m_block.to_string());
        out.insert("zero_pad", self.zero_pad.to_string());
        out.insert("cp_len", self.cp_len.to_string());
        out.insert("bandwidth", self.bandwidth.to_string());
        out.insert("snr_db", self.snr_db.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","));
        out.insert("trials", self.trials.to_string());
        out.insert("seed", self.seed.to_string());
        out.insert("channel", match self.channel {
            ChannelSpec::Flat => "flat".to_string(),
            ChannelSpec::Multipath { taps, lo, hi } => format!("multipath:{taps}:{lo}:{hi}"),
        });
        out.insert("probe_snr_db", self.probe_snr_db.map_or("perfect".to_string(), |s| s.to_string()));
        out.insert("profile", match self.profile {
            ProfileKind::Measured => "measured",
            ProfileKind::Ideal => "ideal",
        }
        .to_string());
        out.insert("sizes", self.sizes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","));
        out.insert("model", self.model.as_ref().map_or(String::new(), |p| p.display().to_string()));
        out.insert("vectors", self.vectors.as_ref().map_or(String::new(), |p| p.display().to_string()));
        out.insert("preamble_len", self.preamble_len.to_string());
        out.insert("cfo_max", self.cfo_max.to_string());
        out.insert("max_offset", self.max_offset.to_string());
        out.insert("out_dir", self.out_dir.display().to_string());
        out
    }
}

fn positive(s: &str) -> Option<usize> {
    s.trim().parse().ok().filter(|&v: &usize| v > 0)
}

fn number(s: &str) -> Result<f64, String> {
    match s.trim() {
        "inf" | "noiseless" => Ok(f64::INFINITY),
        t => t.parse().map_err(|_| format!("`{t}` is not a number")),
    }
}

/// Either a comma list (`5,10,inf`) or an inclusive range `start:stop:step`.
pub fn parse_snr_list(s: &str) -> Result<Vec<f64>, String> {
    let s = s.trim();
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err("a range is start:stop:step".into());
        }
        let (a, b, step) = (number(parts[0])?, number(parts[1])?, number(parts[2])?);
        if !(step > 0.0) || !a.is_finite() || !b.is_finite() || b < a {
            return Err("a range needs finite start <= stop and a positive step".into());
        }
        let count = ((b - a) / step + 1e-9).floor() as usize + 1;
        return Ok((0..count).map(|i| a + i as f64 * step).collect());
    }
    s.split(',').map(number).collect()
}

fn parse_channel(s: &str) -> Result<ChannelSpec, String> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        ["flat"] => Ok(ChannelSpec::Flat),
        ["multipath"] => Ok(ChannelSpec::Multipath { taps: 3, lo: 0.1, hi: 0.3 }),
        ["multipath", taps, lo, hi] => {
            let taps = positive(taps).ok_or("tap count must be positive")?;
            Ok(ChannelSpec::Multipath { taps, lo: number(lo)?, hi: number(hi)? })
        }
        _ => Err("expected flat, multipath or multipath:TAPS:LO:HI".into()),
    }
}
