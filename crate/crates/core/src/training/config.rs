use std::fmt::Write as _;
use std::str::FromStr;

use crate::codec::Topology;

use super::{Result, TrainError};

/// Reference rate points, highest rate first.
pub const RATE_POINTS: [f64; 4] = [6000.0, 4000.0, 2000.0, 1000.0];

/// Index of `lambda` in [`RATE_POINTS`], or 255 for any other value.
pub fn lambda_id_for(lambda: f64) -> u8 {
    RATE_POINTS.iter().position(|&l| l == lambda).map_or(255, |i| i as u8)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConstraintSet {
    Baseline,
    Mic,
    Trc,
    Lcc,
    MicTrc,
    MicLcc,
    TrcLcc,
}

impl ConstraintSet {
    pub const ALL: [ConstraintSet; 7] = [
        ConstraintSet::Baseline,
        ConstraintSet::Mic,
        ConstraintSet::Trc,
        ConstraintSet::Lcc,
        ConstraintSet::MicTrc,
        ConstraintSet::MicLcc,
        ConstraintSet::TrcLcc,
    ];

    /// MIC sets replace the distortion term with the idempotency term.
    pub fn has_mic(self) -> bool {
        matches!(self, Self::Mic | Self::MicTrc | Self::MicLcc)
    }

    pub fn has_trc(self) -> bool {
        matches!(self, Self::Trc | Self::MicTrc | Self::TrcLcc)
    }

    pub fn has_lcc(self) -> bool {
        matches!(self, Self::Lcc | Self::MicLcc | Self::TrcLcc)
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Baseline => "BASELINE",
            Self::Mic => "MIC",
            Self::Trc => "TRC",
            Self::Lcc => "LCC",
            Self::MicTrc => "MIC_TRC",
            Self::MicLcc => "MIC_LCC",
            Self::TrcLcc => "TRC_LCC",
        }
    }
}

impl std::fmt::Display for ConstraintSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ConstraintSet {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace(['+', '-'], "_");
        Self::ALL
            .into_iter()
            .find(|c| c.label() == norm)
            .ok_or_else(|| {
                TrainError::Config(format!(
                    "unknown constraint set `{s}` (expected one of BASELINE, MIC, TRC, LCC, MIC_TRC, MIC_LCC, TRC_LCC)"
                ))
            })
    }
}

/// Norm used by the three auxiliary terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AuxNorm {
    /// Mean of squared differences.
    Mse,
    /// Sum of squared differences.
    SumSquares,
}

impl FromStr for AuxNorm {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "mse" => Ok(AuxNorm::Mse),
            "sum_squares" => Ok(AuxNorm::SumSquares),
            other => Err(TrainError::Config(format!("unknown aux_norm `{other}` (mse or sum_squares)"))),
        }
    }
}

impl AuxNorm {
    fn as_str(self) -> &'static str {
        match self {
            AuxNorm::Mse => "mse",
            AuxNorm::SumSquares => "sum_squares",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl LossWeights {
    /// `alpha = lambda`, `beta = 100`.
    pub fn with_lambda(lambda: f64) -> Self {
        LossWeights {
            lambda,
            alpha: lambda,
            beta: 100.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Crops drawn per epoch; each is one KD-tree block of one dataset cloud.
    pub crops_per_epoch: usize,
    pub lr0: f64,
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub seed: u64,
    pub k_crop: usize,
    pub constraint: ConstraintSet,
    pub weights: LossWeights,
    pub aux_norm: AuxNorm,
    pub topology: Topology,
    pub lambda_id: u8,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 4,
            crops_per_epoch: 4,
            lr0: 1e-4,
            lr_decay: 0.8,
            lr_decay_every: 20,
            seed: 0,
            k_crop: 250_000,
            constraint: ConstraintSet::Baseline,
            weights: LossWeights::with_lambda(1000.0),
            aux_norm: AuxNorm::Mse,
            topology: Topology::TOY,
            lambda_id: lambda_id_for(1000.0),
        }
    }
}

impl TrainConfig {
    /// Small-scale settings: 40 epochs of 64 crops of 4096 points.
    pub fn desk(constraint: ConstraintSet, lambda: f64) -> Self {
        TrainConfig {
            epochs: 40,
            crops_per_epoch: 64,
            lr0: 3e-3,
            k_crop: 4096,
            constraint,
            weights: LossWeights::with_lambda(lambda),
            lambda_id: lambda_id_for(lambda),
            ..Default::default()
        }
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        let decays = epoch / self.lr_decay_every.max(1);
        self.lr0 * libm::pow(self.lr_decay, decays as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.epochs == 0 || self.batch_size == 0 || self.crops_per_epoch == 0 {
            return bad("epochs, batch_size and crops_per_epoch must be positive");
        }
        if self.k_crop < 2 {
            return bad("k_crop must be at least 2");
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) || !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr0 must be positive and lr_decay in (0, 1]");
        }
        let w = self.weights;
        if !(w.lambda > 0.0 && w.alpha >= 0.0 && w.beta >= 0.0) || !(w.lambda + w.alpha + w.beta).is_finite() {
            return bad("lambda must be positive, alpha and beta non-negative");
        }
        let t = self.topology;
        if t.hidden == 0 || t.latent == 0 || t.hyper == 0 {
            return bad("channel widths must be positive");
        }
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| TrainError::Config(format!("invalid value `{v}` for `{key}`")))
        }
        match key {
            "epochs" => self.epochs = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "crops_per_epoch" => self.crops_per_epoch = num(key, value)?,
            "lr0" => self.lr0 = num(key, value)?,
            "lr_decay" => self.lr_decay = num(key, value)?,
            "lr_decay_every" => self.lr_decay_every = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "k_crop" => self.k_crop = num(key, value)?,
            "constraint" => self.constraint = value.parse()?,
            "lambda" => {
                let lambda: f64 = num(key, value)?;
                let alpha_tied = self.weights.alpha == self.weights.lambda;
                self.weights.lambda = lambda;
                if alpha_tied {
                    self.weights.alpha = lambda;
                }
                self.lambda_id = lambda_id_for(lambda);
            }
            "alpha" => self.weights.alpha = num(key, value)?,
            "beta" => self.weights.beta = num(key, value)?,
            "aux_norm" => self.aux_norm = value.parse()?,
            "hidden" => self.topology.hidden = num(key, value)?,
            "latent" => self.topology.latent = num(key, value)?,
            "hyper" => self.topology.hyper = num(key, value)?,
            "lambda_id" => self.lambda_id = num(key, value)?,
            other => return Err(TrainError::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Parses flat `key = value` text over `self`; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| TrainError::Config(format!("line {}: expected key = value", lineno + 1)))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| TrainError::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let w = self.weights;
        let t = self.topology;
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "crops_per_epoch = {}", self.crops_per_epoch);
        let _ = writeln!(s, "lr0 = {:?}", self.lr0);
        let _ = writeln!(s, "lr_decay = {:?}", self.lr_decay);
        let _ = writeln!(s, "lr_decay_every = {}", self.lr_decay_every);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "k_crop = {}", self.k_crop);
        let _ = writeln!(s, "constraint = {}", self.constraint);
        let _ = writeln!(s, "lambda = {:?}", w.lambda);
        let _ = writeln!(s, "alpha = {:?}", w.alpha);
        let _ = writeln!(s, "beta = {:?}", w.beta);
        let _ = writeln!(s, "aux_norm = {}", self.aux_norm.as_str());
        let _ = writeln!(s, "hidden = {}", t.hidden);
        let _ = writeln!(s, "latent = {}", t.latent);
        let _ = writeln!(s, "hyper = {}", t.hyper);
        let _ = writeln!(s, "lambda_id = {}", self.lambda_id);
        s
    }
}
