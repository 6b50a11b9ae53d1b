//! Run configuration: command-line flags layered over an optional
//! `key = value` file. Flags win over file entries, file entries over
//! defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use serde::Serialize;

use fgq::{CostModel, GaussianRule, Solver};

/// Invalid or conflicting configuration; maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage<T>(msg: impl Into<String>) -> Result<T, UsageError> {
    Err(UsageError(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Analyze,
    Ternarize,
    Simulate,
    Perf,
    Synth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum GaussianRuleArg {
    /// 0.6 * sigma
    Sigma,
    /// 0.7 * mean |W|
    MeanAbs,
}

impl From<GaussianRuleArg> for GaussianRule {
    fn from(r: GaussianRuleArg) -> Self {
        match r {
            GaussianRuleArg::Sigma => GaussianRule::SigmaTimes06,
            GaussianRuleArg::MeanAbs => GaussianRule::MeanAbsTimes07,
        }
    }
}

/// Flags shared by every subcommand. Unset flags fall back to the config
/// file, then to defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Key = value configuration file; flags override its entries.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Weight tensor (.npy, K x C x R x S) or a directory of them; repeatable.
    #[arg(long, global = true, value_name = "PATH")]
    pub weights: Vec<PathBuf>,
    /// Input activations (.npy, C x H x W or 1 x C x H x W).
    #[arg(long, global = true, value_name = "PATH")]
    pub activations: Option<PathBuf>,
    /// Ternarized model file (.fgq).
    #[arg(long, global = true, value_name = "PATH")]
    pub model: Option<PathBuf>,
    /// Input channels per group [default: 4].
    #[arg(long, global = true, value_name = "N")]
    pub group_size: Option<usize>,
    /// brute, two_alpha, analytic_auto, analytic_gaussian, analytic_exponential or rms [default: brute].
    #[arg(long, global = true, value_name = "NAME")]
    pub solver: Option<Solver>,
    /// Activation width, 4 or 8 [default: 8; simulate uses each layer's tag].
    #[arg(long, global = true, value_name = "BITS")]
    pub act_bits: Option<u8>,
    /// Group scale width, 4 or 8 [default: 8].
    #[arg(long, global = true, value_name = "BITS")]
    pub scale_bits: Option<u8>,
    /// Fraction of smallest magnitudes dropped before exponential fits.
    #[arg(long, global = true, value_name = "F")]
    pub prune_frac: Option<f64>,
    /// Threshold rule for Gaussian fits [default: sigma].
    #[arg(long, global = true, value_enum)]
    pub gaussian_rule: Option<GaussianRuleArg>,
    /// Seed for generated data [default: 0].
    #[arg(long, global = true, value_name = "S")]
    pub seed: Option<u64>,
    /// Output path: the model or tensor for ternarize, simulate and synth, the report otherwise.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Report format on stdout [default: json].
    #[arg(long, global = true, value_enum)]
    pub report: Option<ReportFormat>,
    /// Keep the first layer as 8-bit fixed point instead of ternary.
    #[arg(long, global = true)]
    pub first_layer_fixed: bool,
    /// Convolution stride [default: 1].
    #[arg(long, global = true)]
    pub stride: Option<usize>,
    /// Zero padding on each side [default: 0].
    #[arg(long, global = true)]
    pub padding: Option<usize>,
    /// Input spatial size for operation counting, as H,W.
    #[arg(long, global = true, value_name = "H,W")]
    pub input_hw: Option<String>,
    /// Count the first layer as ternary too.
    #[arg(long, global = true)]
    pub no_exempt_first: bool,
    /// Relative cost of a full-precision multiply-accumulate [default: 1].
    #[arg(long, global = true)]
    pub fma_cost: Option<f64>,
    /// Relative cost of a ternary accumulate [default: 0.0625].
    #[arg(long, global = true)]
    pub ternary_cost: Option<f64>,
    /// Relative cost of a multiply in an exempt layer [default: 1].
    #[arg(long, global = true)]
    pub exempt_cost: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub weights: Vec<PathBuf>,
    pub activations: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub group_size: usize,
    pub solver: Solver,
    /// Activation width; `None` in `simulate` means each layer's stored tag.
    pub act_bits: Option<u8>,
    pub scale_bits: u8,
    pub prune_fraction: f64,
    pub gaussian_rule: GaussianRuleArg,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub report: ReportFormat,
    pub first_layer_fixed: bool,
    pub stride: usize,
    pub padding: usize,
    pub input_hw: (usize, usize),
    pub exempt_first: bool,
    pub cost: CostModel,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            weights: Vec::new(),
            activations: None,
            model: None,
            group_size: 4,
            solver: Solver::Brute,
            act_bits: None,
            scale_bits: 8,
            prune_fraction: 0.0,
            gaussian_rule: GaussianRuleArg::Sigma,
            seed: 0,
            out: None,
            report: ReportFormat::Json,
            first_layer_fixed: false,
            stride: 1,
            padding: 0,
            input_hw: (32, 32),
            exempt_first: true,
            cost: CostModel::default(),
        }
    }

    pub fn act_bits_or_default(&self) -> u8 {
        self.act_bits.unwrap_or(8)
    }

    /// Builds the configuration from flags and, if `--config` is given, the
    /// file it names.
    pub fn resolve(command: Command, flags: &Flags) -> Result<Self, UsageError> {
        let file = match &flags.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let mut cfg = Self::new(command);
        file.apply(&mut cfg)?;
        cfg.apply_flags(flags)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply_flags(&mut self, f: &Flags) -> Result<(), UsageError> {
        if !f.weights.is_empty() {
            self.weights = f.weights.clone();
        }
        set(&mut self.activations, f.activations.clone().map(Some));
        set(&mut self.model, f.model.clone().map(Some));
        set(&mut self.group_size, f.group_size);
        set(&mut self.solver, f.solver);
        set(&mut self.act_bits, f.act_bits.map(Some));
        set(&mut self.scale_bits, f.scale_bits);
        set(&mut self.prune_fraction, f.prune_frac);
        set(&mut self.gaussian_rule, f.gaussian_rule);
        set(&mut self.seed, f.seed);
        set(&mut self.out, f.out.clone().map(Some));
        set(&mut self.report, f.report);
        self.first_layer_fixed |= f.first_layer_fixed;
        set(&mut self.stride, f.stride);
        set(&mut self.padding, f.padding);
        if let Some(hw) = &f.input_hw {
            self.input_hw = parse_hw(hw)?;
        }
        if f.no_exempt_first {
            self.exempt_first = false;
        }
        set(&mut self.cost.fma_cost, f.fma_cost);
        set(&mut self.cost.ternary_cost, f.ternary_cost);
        set(&mut self.cost.exempt_cost, f.exempt_cost);
        Ok(())
    }

    pub fn validate(&self) -> Result<(), UsageError> {
        if self.group_size == 0 {
            return usage("--group-size must be at least 1");
        }
        for (name, bits) in [("--act-bits", self.act_bits), ("--scale-bits", Some(self.scale_bits))] {
            if let Some(b) = bits {
                if b != 4 && b != 8 {
                    return usage(format!("{name} must be 4 or 8, got {b}"));
                }
            }
        }
        if !(0.0..1.0).contains(&self.prune_fraction) {
            return usage(format!("--prune-frac must be in [0, 1), got {}", self.prune_fraction));
        }
        if self.stride == 0 {
            return usage("--stride must be at least 1");
        }
        if self.cost.validate().is_err() {
            return usage("operation costs must be positive");
        }
        match self.command {
            Command::Ternarize if self.solver == Solver::TwoAlpha && self.out.is_some() => {
                usage("two_alpha has no stored form; drop --out to get its error report")
            }
            Command::Ternarize | Command::Perf if self.weights.is_empty() => {
                usage("--weights is required")
            }
            Command::Simulate if self.model.is_none() || self.activations.is_none() => {
                usage("simulate needs --model and --activations")
            }
            Command::Synth if self.out.is_none() => usage("synth needs --out DIR"),
            _ => Ok(()),
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn parse_hw(s: &str) -> Result<(usize, usize), UsageError> {
    let parts: Vec<&str> = s.split([',', 'x']).map(str::trim).collect();
    let parsed: Option<Vec<usize>> = parts.iter().map(|p| p.parse().ok()).collect();
    match parsed.as_deref() {
        Some(&[h]) if h > 0 => Ok((h, h)),
        Some(&[h, w]) if h > 0 && w > 0 => Ok((h, w)),
        _ => usage(format!("input size '{s}' is not H,W")),
    }
}

/// Parsed `key = value` file. `#` starts a comment; `weights` may repeat.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    entries: BTreeMap<String, Vec<String>>,
}

const KEYS: &[&str] = &[
    "weights",
    "activations",
    "model",
    "group-size",
    "solver",
    "act-bits",
    "scale-bits",
    "prune-frac",
    "gaussian-rule",
    "seed",
    "out",
    "report",
    "first-layer-fixed",
    "stride",
    "padding",
    "input-hw",
    "exempt-first",
    "fma-cost",
    "ternary-cost",
    "exempt-cost",
];

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, UsageError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, UsageError> {
        let mut entries: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return usage(format!("config line {}: expected key = value", n + 1));
            };
            let key = key.trim().replace('_', "-");
            if !KEYS.contains(&key.as_str()) {
                return usage(format!("config line {}: unknown key '{key}'", n + 1));
            }
            entries.entry(key).or_default().push(value.trim().to_string());
        }
        Ok(Self { entries })
    }

    fn last(&self, key: &str) -> Option<&str> {
        self.entries.get(key).and_then(|v| v.last()).map(String::as_str)
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, UsageError>
    where
        T::Err: fmt::Display,
    {
        self.last(key)
            .map(|v| {
                v.parse()
                    .map_err(|e| UsageError(format!("config {key} = {v}: {e}")))
            })
            .transpose()
    }

    fn flag(&self, key: &str) -> Result<Option<bool>, UsageError> {
        self.parsed::<bool>(key)
    }

    fn apply(&self, cfg: &mut RunConfig) -> Result<(), UsageError> {
        if let Some(ws) = self.entries.get("weights") {
            cfg.weights = ws.iter().map(PathBuf::from).collect();
        }
        set(&mut cfg.activations, self.last("activations").map(|v| Some(v.into())));
        set(&mut cfg.model, self.last("model").map(|v| Some(v.into())));
        set(&mut cfg.group_size, self.parsed("group-size")?);
        set(&mut cfg.solver, self.parsed("solver")?);
        set(&mut cfg.act_bits, self.parsed("act-bits")?.map(Some));
        set(&mut cfg.scale_bits, self.parsed("scale-bits")?);
        set(&mut cfg.prune_fraction, self.parsed("prune-frac")?);
        if let Some(v) = self.last("gaussian-rule") {
            cfg.gaussian_rule = GaussianRuleArg::from_str(v, true)
                .map_err(|e| UsageError(format!("config gaussian-rule: {e}")))?;
        }
        set(&mut cfg.seed, self.parsed("seed")?);
        set(&mut cfg.out, self.last("out").map(|v| Some(v.into())));
        if let Some(v) = self.last("report") {
            cfg.report = ReportFormat::from_str(v, true)
                .map_err(|e| UsageError(format!("config report: {e}")))?;
        }
        set(&mut cfg.first_layer_fixed, self.flag("first-layer-fixed")?);
        set(&mut cfg.stride, self.parsed("stride")?);
        set(&mut cfg.padding, self.parsed("padding")?);
        if let Some(v) = self.last("input-hw") {
            cfg.input_hw = parse_hw(v)?;
        }
        set(&mut cfg.exempt_first, self.flag("exempt-first")?);
        set(&mut cfg.cost.fma_cost, self.parsed("fma-cost")?);
        set(&mut cfg.cost.ternary_cost, self.parsed("ternary-cost")?);
        set(&mut cfg.cost.exempt_cost, self.parsed("exempt-cost")?);
        Ok(())
    }
}
