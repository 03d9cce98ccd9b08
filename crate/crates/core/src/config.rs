//! Flat `key = value` run configuration.
//!
//! Lines are `key = value`; `#` starts a comment. Later assignments override earlier ones, so
//! command-line overrides are applied after the file. A sweep file uses the same keys for its
//! shared settings and adds one `cell key=value ...` line per configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::entropy::DictMode;
use crate::error::{config_err, Result};
use crate::eval::{Scheme, SweepCell, SweepSpec};
use crate::model::{Activation, CodecArchitecture, OptimizerKind, TrainConfig};
use crate::pq::PQConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub text: Option<PathBuf>,
    pub params: Option<PathBuf>,
    pub codebook: Option<PathBuf>,
    pub dictionary: Option<PathBuf>,
    pub quantizer: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub scheme: Scheme,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub d: usize,
    pub k: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub train: TrainConfig,
    pub sq_bits: u8,
    pub sq_entropy: bool,
    pub dict_mode: DictMode,
    /// Scale every feature to unit norm before use.
    pub normalize: bool,
    pub d_max: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            text: None,
            params: None,
            codebook: None,
            dictionary: None,
            quantizer: None,
            out: None,
            scheme: Scheme::PqvaeShared,
            h: 2,
            w: 2,
            c: 16,
            d: 4,
            k: 16,
            hidden: vec![128],
            activation: Activation::Silu,
            train: TrainConfig::default(),
            sq_bits: 2,
            sq_entropy: false,
            dict_mode: DictMode::External,
            normalize: false,
            d_max: None,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| config_err!("{key}: cannot parse {value:?}"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(config_err!("{key}: expected a boolean, got {value:?}")),
    }
}

fn path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl RunConfig {
    /// Set one key. Unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "dataset" => self.dataset = path(value),
            "text" => self.text = path(value),
            "params" => self.params = path(value),
            "codebook" => self.codebook = path(value),
            "dictionary" => self.dictionary = path(value),
            "quantizer" => self.quantizer = path(value),
            "out" => self.out = path(value),
            "scheme" => self.scheme = value.parse()?,
            "h" => self.h = parse_num(key, value)?,
            "w" => self.w = parse_num(key, value)?,
            "c" => self.c = parse_num(key, value)?,
            "d" => self.d = parse_num(key, value)?,
            "k" => self.k = parse_num(key, value)?,
            "hidden" => {
                self.hidden = if value.is_empty() {
                    Vec::new()
                } else {
                    value.split(',').map(|v| parse_num(key, v.trim())).collect::<Result<_>>()?
                }
            }
            "activation" => self.activation = value.parse()?,
            "alpha" => t.alpha = parse_num(key, value)?,
            "beta" => t.beta = parse_num(key, value)?,
            "lr" => t.learning_rate = parse_num(key, value)?,
            "batch_size" => t.batch_size = parse_num(key, value)?,
            "epochs" => t.epochs = parse_num(key, value)?,
            "seed" => t.seed = parse_num(key, value)?,
            "optimizer" => t.optimizer = value.parse::<OptimizerKind>()?,
            "reinit_period" => t.reinit_period = parse_num(key, value)?,
            "reinit_jitter" => t.reinit_jitter = parse_num(key, value)?,
            "kmeans_init" => t.kmeans_init = parse_bool(key, value)?,
            "kmeans_rows" => t.kmeans_rows = parse_num(key, value)?,
            "sq_bits" => self.sq_bits = parse_num(key, value)?,
            "sq_entropy" => self.sq_entropy = parse_bool(key, value)?,
            "dict_mode" => {
                self.dict_mode = match value {
                    "external" => DictMode::External,
                    "inline" => DictMode::Inline,
                    _ => return Err(config_err!("dict_mode: expected external or inline, got {value:?}")),
                }
            }
            "normalize" => self.normalize = parse_bool(key, value)?,
            "d_max" => self.d_max = if value.is_empty() { None } else { Some(parse_num(key, value)?) },
            _ => return Err(config_err!("unknown config key {key:?}")),
        }
        Ok(())
    }

    /// Apply every `key = value` line of `text`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = strip_comment(line);
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| config_err!("line {}: expected key = value", n + 1))?;
            self.set(key.trim(), value.trim()).map_err(|e| config_err!("line {}: {e}", n + 1))?;
        }
        Ok(())
    }

    /// Apply a `key=value` override as given on the command line.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment.split_once('=').ok_or_else(|| config_err!("override {assignment:?} is not key=value"))?;
        self.set(key.trim(), value.trim())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err!("{}: {e}", path.display()))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn seed(&self) -> u64 {
        self.train.seed
    }

    pub fn pq(&self) -> Result<PQConfig> {
        PQConfig::new(self.h, self.w, self.c, self.d, self.k)
    }

    pub fn architecture(&self, input_dim: usize) -> Result<CodecArchitecture> {
        let arch = CodecArchitecture::mirrored(input_dim, &self.hidden, self.activation, self.pq()?);
        arch.validate()?;
        Ok(arch)
    }

    pub fn cell(&self, input_dim: usize) -> Result<SweepCell> {
        Ok(SweepCell {
            scheme: self.scheme,
            arch: self.architecture(input_dim)?,
            train: self.train.clone(),
            sq_bits: self.sq_bits,
            sq_entropy: self.sq_entropy,
        })
    }

    /// Check everything that does not need input files.
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        match self.scheme {
            Scheme::ScalarQ => {
                if !(1..=16).contains(&self.sq_bits) {
                    return Err(config_err!("sq_bits must be in 1..=16"));
                }
            }
            _ => {
                self.pq()?;
            }
        }
        if let Some(d) = self.d_max {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(config_err!("d_max must be a non-negative number"));
            }
        }
        Ok(())
    }

    /// Canonical text form; loading it reproduces this configuration.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let p = |o: &Option<PathBuf>| o.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let t = &self.train;
        let hidden: Vec<String> = self.hidden.iter().map(|h| h.to_string()).collect();
        let dict_mode = match self.dict_mode {
            DictMode::External => "external",
            DictMode::Inline => "inline",
        };
        let lines: Vec<(&str, String)> = vec![
            ("dataset", p(&self.dataset)),
            ("text", p(&self.text)),
            ("params", p(&self.params)),
            ("codebook", p(&self.codebook)),
            ("dictionary", p(&self.dictionary)),
            ("quantizer", p(&self.quantizer)),
            ("out", p(&self.out)),
            ("scheme", self.scheme.to_string()),
            ("h", self.h.to_string()),
            ("w", self.w.to_string()),
            ("c", self.c.to_string()),
            ("d", self.d.to_string()),
            ("k", self.k.to_string()),
            ("hidden", hidden.join(",")),
            ("activation", self.activation.to_string()),
            ("alpha", t.alpha.to_string()),
            ("beta", t.beta.to_string()),
            ("lr", t.learning_rate.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("epochs", t.epochs.to_string()),
            ("seed", t.seed.to_string()),
            ("optimizer", t.optimizer.to_string()),
            ("reinit_period", t.reinit_period.to_string()),
            ("reinit_jitter", t.reinit_jitter.to_string()),
            ("kmeans_init", t.kmeans_init.to_string()),
            ("kmeans_rows", t.kmeans_rows.to_string()),
            ("sq_bits", self.sq_bits.to_string()),
            ("sq_entropy", self.sq_entropy.to_string()),
            ("dict_mode", dict_mode.into()),
            ("normalize", self.normalize.to_string()),
            ("d_max", self.d_max.map(|d| d.to_string()).unwrap_or_default()),
        ];
        for (k, v) in lines {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

fn strip_comment(line: &str) -> &str {
    line.split_once('#').map_or(line, |(a, _)| a).trim()
}

/// Parse a sweep file on top of `base`. Shared lines update the base configuration; each
/// `cell` line adds a configuration with its own overrides.
pub fn parse_sweep(text: &str, base: &RunConfig, input_dim: usize) -> Result<(SweepSpec, RunConfig)> {
    let mut shared = base.clone();
    let mut cell_lines: Vec<(usize, &str)> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = strip_comment(line);
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("cell") {
            if rest.is_empty() || rest.starts_with(char::is_whitespace) {
                cell_lines.push((n + 1, rest.trim()));
                continue;
            }
        }
        let (key, value) = line.split_once('=').ok_or_else(|| config_err!("line {}: expected key = value", n + 1))?;
        shared.set(key.trim(), value.trim()).map_err(|e| config_err!("line {}: {e}", n + 1))?;
    }
    if cell_lines.is_empty() {
        return Err(config_err!("sweep file defines no cells"));
    }
    let mut cells = Vec::with_capacity(cell_lines.len());
    for (n, rest) in cell_lines {
        let mut cfg = shared.clone();
        for assignment in rest.split_whitespace() {
            cfg.apply_override(assignment).map_err(|e| config_err!("line {n}: {e}"))?;
        }
        cfg.validate().map_err(|e| config_err!("line {n}: {e}"))?;
        cells.push(cfg.cell(input_dim).map_err(|e| config_err!("line {n}: {e}"))?);
    }
    Ok((SweepSpec { cells, d_max: shared.d_max }, shared))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# comment\nscheme = kmeans_pq\nk = 64  # trailing\nhidden = 32,16\nnormalize = yes\nd_max = 0.1\n").unwrap();
        assert_eq!(cfg.scheme, Scheme::KmeansPq);
        assert_eq!(cfg.k, 64);
        assert_eq!(cfg.hidden, vec![32, 16]);
        assert!(cfg.normalize);
        let mut again = RunConfig::default();
        again.apply_text(&cfg.to_text()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn later_assignments_win() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("epochs = 5\n").unwrap();
        cfg.apply_override("epochs=9").unwrap();
        assert_eq!(cfg.train.epochs, 9);
    }

    #[test]
    fn bad_input_is_config_error() {
        let mut cfg = RunConfig::default();
        for text in ["bogus = 1", "k = many", "no equals sign", "scheme = jpeg", "normalize = maybe"] {
            assert!(matches!(cfg.apply_text(text), Err(crate::Error::Config(_))), "{text}");
        }
        cfg.d = 3;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn sweep_cells_inherit_shared_settings() {
        let text = "epochs = 4\nd_max = 0.2\ncell k=8\ncell scheme=scalar_q sq_bits=1\n";
        let (spec, _) = parse_sweep(text, &RunConfig::default(), 64).unwrap();
        assert_eq!(spec.cells.len(), 2);
        assert_eq!(spec.d_max, Some(0.2));
        assert_eq!(spec.cells[0].arch.pq.k, 8);
        assert_eq!(spec.cells[0].train.epochs, 4);
        assert_eq!(spec.cells[1].scheme, Scheme::ScalarQ);
        assert!(parse_sweep("epochs = 4\n", &RunConfig::default(), 64).is_err());
    }
}
