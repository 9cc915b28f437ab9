//! Layered quantization settings: built-in defaults, then the optional TOML
//! file, then command-line flags.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use clap::Args;
use lutq::{QuantizationConfig, Scheme};
use serde::Deserialize;

use crate::ConfigError;

/// Any subset of the quantization knobs. Unset fields inherit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct QuantOverrides {
    /// Code width in bits.
    #[arg(long)]
    pub n: Option<u8>,
    /// LUT magnitude width in bits.
    #[arg(long)]
    pub m: Option<u8>,
    /// Internal-to-external interval ratio.
    #[arg(long)]
    pub ratio: Option<f64>,
    /// CDF probability where the internal region starts.
    #[arg(long)]
    pub p_start: Option<f64>,
    /// Must equal 1 - p_start.
    #[arg(long)]
    pub p_stop: Option<f64>,
    /// U, UVBS, RS or RSVBS.
    #[arg(long)]
    pub scheme: Option<Scheme>,
    /// Largest virtual bit shift tried.
    #[arg(long)]
    pub k_max: Option<u8>,
}

impl QuantOverrides {
    pub fn apply(&self, mut cfg: QuantizationConfig) -> QuantizationConfig {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { cfg.$f = v; })* };
        }
        set!(n, m, ratio, p_start, p_stop, scheme, k_max);
        cfg
    }

    /// Parses `key=value[,key=value...]`.
    pub fn parse_list(s: &str) -> Result<Self, String> {
        let mut out = Self::default();
        for pair in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = pair.split_once('=').ok_or_else(|| format!("expected key=value, got {pair:?}"))?;
            let bad = |e: &dyn std::fmt::Display| format!("{key}={value}: {e}");
            match key.trim().replace('-', "_").as_str() {
                "n" => out.n = Some(value.parse().map_err(|e| bad(&e))?),
                "m" => out.m = Some(value.parse().map_err(|e| bad(&e))?),
                "ratio" => out.ratio = Some(value.parse().map_err(|e| bad(&e))?),
                "p_start" => out.p_start = Some(value.parse().map_err(|e| bad(&e))?),
                "p_stop" => out.p_stop = Some(value.parse().map_err(|e| bad(&e))?),
                "scheme" => out.scheme = Some(value.parse().map_err(|e| bad(&e))?),
                "k_max" => out.k_max = Some(value.parse().map_err(|e| bad(&e))?),
                other => return Err(format!("unknown setting {other:?}")),
            }
        }
        Ok(out)
    }
}

/// `LAYER:key=value,...` with a 1-based layer index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerOverride {
    pub layer: usize,
    pub settings: QuantOverrides,
}

impl std::str::FromStr for LayerOverride {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (layer, rest) = s.split_once(':').ok_or("expected LAYER:key=value,...")?;
        let layer: usize = layer.trim().parse().map_err(|e| format!("layer index {layer:?}: {e}"))?;
        if layer == 0 {
            return Err("layer indices start at 1".into());
        }
        Ok(Self { layer, settings: QuantOverrides::parse_list(rest)? })
    }
}

/// Contents of the `--config` TOML file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub probes: Option<usize>,
    #[serde(default)]
    pub quant: QuantOverrides,
    /// Keyed by 1-based layer index.
    #[serde(default)]
    pub layers: BTreeMap<String, QuantOverrides>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self =
            toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {}", path.display(), e.message())))?;
        for key in cfg.layers.keys() {
            if !key.parse::<usize>().is_ok_and(|i| i >= 1) {
                return Err(ConfigError(format!("{}: layer key {key:?} is not a 1-based index", path.display())).into());
            }
        }
        Ok(cfg)
    }
}

/// Resolves one configuration per layer. Precedence, lowest first: defaults,
/// file `[quant]`, flags, file `[layers.N]`, `--layer-config N:...`.
pub fn resolve_layers(
    file: &FileConfig,
    flags: &QuantOverrides,
    per_layer: &[LayerOverride],
    depth: usize,
) -> anyhow::Result<Vec<QuantizationConfig>> {
    let base = flags.apply(file.quant.apply(QuantizationConfig::default()));
    for o in per_layer {
        if o.layer > depth {
            return Err(ConfigError(format!("--layer-config {} but the model has {depth} layers", o.layer)).into());
        }
    }
    for key in file.layers.keys() {
        let i: usize = key.parse().expect("checked on load");
        if i > depth {
            return Err(ConfigError(format!("config file sets layer {i} but the model has {depth} layers")).into());
        }
    }
    (1..=depth)
        .map(|i| {
            let mut cfg = base;
            if let Some(o) = file.layers.get(&i.to_string()) {
                cfg = o.apply(cfg);
            }
            for o in per_layer.iter().filter(|o| o.layer == i) {
                cfg = o.settings.apply(cfg);
            }
            cfg.validate().map_err(|e| ConfigError(format!("layer {i}: {e}")))?;
            Ok(cfg)
        })
        .collect()
}
