//! Model configuration as `key=value` lines.
//!
//! ```text
//! # tiny model on 56x56 inputs
//! p=4
//! C=32
//! N=8
//! m=4
//! k=5
//! layout=2,2,5,2
//! merge_mode=concat_proj
//! zoh_mode=approx
//! ```
//!
//! Blank lines and `#` comments are ignored; unknown keys are errors.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::eigensolver::{EigConfig, SignRule};
use crate::error::{Error, Result};
use crate::spectral_graph::GraphConfig;
use crate::ssm::ZohMode;
use crate::tensor_io::QuarterTurn;

/// How the per-order outputs of a block are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MergeMode {
    /// Concatenate the `2m` copies and project back to `C` channels.
    #[default]
    ConcatProj,
    Sum,
    Mean,
}

impl MergeMode {
    pub fn name(self) -> &'static str {
        match self {
            MergeMode::ConcatProj => "concat_proj",
            MergeMode::Sum => "sum",
            MergeMode::Mean => "mean",
        }
    }
}

impl FromStr for MergeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concat_proj" => Ok(MergeMode::ConcatProj),
            "sum" => Ok(MergeMode::Sum),
            "mean" => Ok(MergeMode::Mean),
            other => Err(Error::arg(format!("unknown merge mode {other:?} (concat_proj|sum|mean)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Patch size `p`.
    pub patch: usize,
    /// Channels `C`.
    pub channels: usize,
    /// SSM state size `N`.
    pub state: usize,
    /// Eigenvectors `m`; every block runs `2m` scans.
    pub m: usize,
    /// Neighbors per node `k`.
    pub k: usize,
    /// Blocks per stage.
    pub layout: Vec<usize>,
    pub merge_mode: MergeMode,
    pub zoh_mode: ZohMode,
    pub classes: usize,
    pub in_channels: usize,
    pub image_size: usize,
    pub rfn_turns: Vec<QuarterTurn>,
    pub sign_rule: SignRule,
    pub weights_seed: u64,
    /// Runs RFN branches and per-order scans on the thread pool.
    pub parallel: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            patch: 4,
            channels: 32,
            state: 8,
            m: 4,
            k: 5,
            layout: vec![2, 2, 5, 2],
            merge_mode: MergeMode::ConcatProj,
            zoh_mode: ZohMode::Approx,
            classes: 10,
            in_channels: 3,
            image_size: 56,
            rfn_turns: QuarterTurn::ALL.to_vec(),
            sign_rule: SignRule::Moment,
            weights_seed: 0,
            parallel: false,
        }
    }
}

fn list<T: FromStr>(v: &str) -> Option<Vec<T>> {
    v.split(',').map(|s| s.trim().parse().ok()).collect()
}

impl ModelConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::Config { line, msg: format!("expected key=value, got {content:?}") })?;
            cfg.set(key.trim(), value.trim()).map_err(|e| Error::Config { line, msg: e.to_string() })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one key using the file syntax.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::arg(format!("{key}: cannot parse {v:?}")))
        }
        match key {
            "p" => self.patch = num(key, value)?,
            "C" => self.channels = num(key, value)?,
            "N" => self.state = num(key, value)?,
            "m" => self.m = num(key, value)?,
            "k" => self.k = num(key, value)?,
            "classes" => self.classes = num(key, value)?,
            "in_channels" => self.in_channels = num(key, value)?,
            "image_size" => self.image_size = num(key, value)?,
            "weights_seed" => self.weights_seed = num(key, value)?,
            "parallel" => self.parallel = num(key, value)?,
            "layout" => {
                self.layout = list(value).ok_or_else(|| Error::arg(format!("layout: cannot parse {value:?}")))?
            }
            "rfn_turns" => {
                let turns: Vec<i64> =
                    list(value).ok_or_else(|| Error::arg(format!("rfn_turns: cannot parse {value:?}")))?;
                self.rfn_turns = turns.into_iter().map(QuarterTurn::new).collect();
            }
            "merge_mode" => self.merge_mode = value.parse()?,
            "zoh_mode" => self.zoh_mode = value.parse()?,
            "sign_rule" => self.sign_rule = value.parse()?,
            other => return Err(Error::arg(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("p", self.patch),
            ("C", self.channels),
            ("N", self.state),
            ("m", self.m),
            ("k", self.k),
            ("classes", self.classes),
            ("image_size", self.image_size),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::arg(format!("{name} must be positive")));
        }
        if !matches!(self.in_channels, 1 | 3) {
            return Err(Error::arg(format!("in_channels must be 1 or 3, got {}", self.in_channels)));
        }
        if self.layout.is_empty() || self.layout.contains(&0) {
            return Err(Error::arg("layout needs at least one stage and no empty stages"));
        }
        if self.rfn_turns.is_empty() {
            return Err(Error::arg("rfn_turns must not be empty"));
        }
        if self.image_size % self.patch != 0 {
            return Err(Error::arg(format!("p={} does not divide image_size={}", self.patch, self.image_size)));
        }
        Ok(())
    }

    /// Canonical `key=value` form; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let join = |v: &[String]| v.join(",");
        let mut s = String::new();
        let _ = writeln!(s, "p={}", self.patch);
        let _ = writeln!(s, "C={}", self.channels);
        let _ = writeln!(s, "N={}", self.state);
        let _ = writeln!(s, "m={}", self.m);
        let _ = writeln!(s, "k={}", self.k);
        let _ = writeln!(s, "layout={}", join(&self.layout.iter().map(|v| v.to_string()).collect::<Vec<_>>()));
        let _ = writeln!(s, "merge_mode={}", self.merge_mode.name());
        let _ = writeln!(s, "zoh_mode={}", self.zoh_mode.name());
        let _ = writeln!(s, "classes={}", self.classes);
        let _ = writeln!(s, "in_channels={}", self.in_channels);
        let _ = writeln!(s, "image_size={}", self.image_size);
        let turns: Vec<String> = self.rfn_turns.iter().map(|q| q.turns().to_string()).collect();
        let _ = writeln!(s, "rfn_turns={}", join(&turns));
        let _ = writeln!(s, "sign_rule={}", self.sign_rule.name());
        let _ = writeln!(s, "weights_seed={}", self.weights_seed);
        let _ = writeln!(s, "parallel={}", self.parallel);
        s
    }

    pub fn graph(&self) -> GraphConfig {
        GraphConfig { k: self.k, ..GraphConfig::default() }
    }

    pub fn eig(&self) -> EigConfig {
        EigConfig { sign_rule: self.sign_rule, ..EigConfig::with_m(self.m) }
    }

    /// Token grid side after the stem.
    pub fn grid(&self) -> usize {
        self.image_size / self.patch
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ModelConfig::default();
        assert_eq!(ModelConfig::parse(&cfg.to_text()).unwrap(), cfg);
        assert_eq!(cfg.grid(), 14);
    }

    #[test]
    fn parses_overrides_and_comments() {
        let cfg = ModelConfig::parse("# ablation\nm=2 \n k = 10\nlayout=1,1\nmerge_mode=sum # vmamba style\nzoh_mode=exact\n\nrfn_turns=0\n")
            .unwrap();
        assert_eq!((cfg.m, cfg.k), (2, 10));
        assert_eq!(cfg.layout, vec![1, 1]);
        assert_eq!(cfg.merge_mode, MergeMode::Sum);
        assert_eq!(cfg.zoh_mode, ZohMode::Exact);
        assert_eq!(cfg.rfn_turns, vec![QuarterTurn::IDENTITY]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        match ModelConfig::parse("p=4\n\nwidth=3\n") {
            Err(Error::Config { line: 3, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(ModelConfig::parse("m\n"), Err(Error::Config { line: 1, .. })));
        assert!(matches!(ModelConfig::parse("merge_mode=concat\n"), Err(Error::Config { line: 1, .. })));
        assert!(ModelConfig::parse("p=5\n").is_err());
    }
}
