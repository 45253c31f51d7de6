//! The toy analysis/synthesis/hyper-prior network and its parameters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::{read_checkpoint, write_checkpoint, NamedTensor, Tape, Tensor, Var};

use super::quant::{SIGMA_MAX, SIGMA_MIN};
use super::{CodecError, Result};

/// Channel widths of the conv stacks. Kernel sizes and strides are fixed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Topology {
    pub hidden: usize,
    pub latent: usize,
    pub hyper: usize,
}

impl Topology {
    /// The reference configuration: 64 hidden, 32 latent, 16 hyper-latent channels.
    pub const TOY: Topology = Topology {
        hidden: 64,
        latent: 32,
        hyper: 16,
    };

    /// Same layer structure at a few hundred parameters, for gradient checks.
    pub const MICRO: Topology = Topology {
        hidden: 3,
        latent: 4,
        hyper: 2,
    };

    fn layers(self) -> [LayerSpec; 10] {
        let Topology { hidden, latent, hyper } = self;
        let l = |name, kernel, c_in, c_out, stride, transposed, relu| LayerSpec {
            name,
            kernel,
            c_in,
            c_out,
            stride,
            transposed,
            relu,
        };
        [
            l("enc0", 5, 3, hidden, 2, false, true),
            l("enc1", 5, hidden, hidden, 2, false, true),
            l("enc2", 3, hidden, latent, 1, false, false),
            l("dec0", 3, latent, hidden, 1, true, true),
            l("dec1", 5, hidden, hidden, 2, true, true),
            l("dec2", 5, hidden, 3, 2, true, false),
            l("ha0", 3, latent, hyper, 2, false, true),
            l("ha1", 3, hyper, hyper, 1, false, false),
            l("hs0", 3, hyper, hyper, 1, true, true),
            l("hs1", 3, hyper, 2 * latent, 2, true, false),
        ]
    }
}

#[derive(Clone, Copy, Debug)]
struct LayerSpec {
    name: &'static str,
    kernel: usize,
    c_in: usize,
    c_out: usize,
    stride: usize,
    transposed: bool,
    relu: bool,
}

const ENC: std::ops::Range<usize> = 0..3;
const DEC: std::ops::Range<usize> = 3..6;
const HA: std::ops::Range<usize> = 6..8;
const HS: std::ops::Range<usize> = 8..10;
const PRIOR_MEAN: usize = 20;
const PRIOR_LOG_SCALE: usize = 21;
/// Initial scale of the analysis output relative to unit-variance layers.
const LATENT_GAIN: f64 = 4.0;

/// Which sub-network a parameter belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamGroup {
    Analysis,
    Synthesis,
    HyperAnalysis,
    HyperSynthesis,
    Prior,
}

/// All trainable parameters, in a fixed order: weight and bias for each
/// layer, then the factorized prior's per-channel mean and log-scale.
#[derive(Clone, Debug, PartialEq)]
pub struct CodecModel {
    topology: Topology,
    lambda_id: u8,
    params: Vec<Tensor>,
}

fn shapes(t: Topology) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    for l in t.layers() {
        out.push((format!("{}.w", l.name), vec![l.kernel, l.c_in, l.c_out]));
        out.push((format!("{}.b", l.name), vec![l.c_out]));
    }
    out.push(("prior.mean".into(), vec![t.hyper]));
    out.push(("prior.log_scale".into(), vec![t.hyper]));
    out
}

impl CodecModel {
    pub fn zeros(topology: Topology, lambda_id: u8) -> Self {
        let params = shapes(topology).into_iter().map(|(_, s)| Tensor::zeros(&s)).collect();
        CodecModel {
            topology,
            lambda_id,
            params,
        }
    }

    /// Seeded uniform fan-in initialization.
    pub fn init(topology: Topology, seed: u64, lambda_id: u8) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = Self::zeros(topology, lambda_id);
        for (i, l) in topology.layers().iter().enumerate() {
            let taps_per_output = if l.transposed {
                (l.kernel / l.stride).max(1)
            } else {
                l.kernel
            };
            let fan_in = (taps_per_output * l.c_in) as f64;
            let gain = if l.relu { 2.0 } else { 1.0 };
            let bound = (3.0 * gain / fan_in).sqrt();
            for w in model.params[2 * i].data_mut() {
                *w = rng.gen_range(-bound..bound);
            }
        }
        // Latents start at a magnitude where unit-step rounding keeps detail.
        let gain = LATENT_GAIN;
        let scale = |t: &mut Tensor, s: f64| t.data_mut().iter_mut().for_each(|w| *w *= s);
        scale(&mut model.params[2 * 2], gain);
        scale(&mut model.params[2 * 3], 1.0 / gain);
        scale(&mut model.params[2 * 6], 1.0 / gain);
        let latent = topology.latent;
        let hs1 = &mut model.params[2 * 9];
        let c_out = 2 * latent;
        for (i, w) in hs1.data_mut().iter_mut().enumerate() {
            if i % c_out < latent {
                *w *= gain;
            }
        }
        model.params[2 * 9 + 1].data_mut()[latent..].fill(gain.ln());
        // Start the reconstruction at mid-gray.
        model.params[2 * 5 + 1].data_mut().fill(0.5);
        model
    }

    /// A model whose main path is an exact identity on 8-bit colors: the
    /// analysis packs four points' colors (scaled by 255) into the first twelve
    /// latent channels, the hyper-prior emits `mu = 0`, `sigma = 1`, and
    /// synthesis unpacks and divides by 255.
    pub fn identity(lambda_id: u8) -> Self {
        let topology = Topology::TOY;
        let mut m = Self::zeros(topology, lambda_id);
        let set = |m: &mut CodecModel, layer: usize, tap: usize, ci: usize, co: usize, v: f64| {
            let c_in = topology.layers()[layer].c_in;
            let c_out = topology.layers()[layer].c_out;
            m.params[2 * layer].data_mut()[(tap * c_in + ci) * c_out + co] = v;
        };
        for c in 0..3 {
            set(&mut m, 0, 2, c, c, 255.0);
            set(&mut m, 0, 3, c, 3 + c, 255.0);
            set(&mut m, 5, 2, c, c, 1.0 / 255.0);
            set(&mut m, 5, 3, 3 + c, c, 1.0 / 255.0);
        }
        for k in 0..6 {
            set(&mut m, 1, 2, k, k, 1.0);
            set(&mut m, 1, 3, k, 6 + k, 1.0);
            set(&mut m, 4, 2, k, k, 1.0);
            set(&mut m, 4, 3, 6 + k, k, 1.0);
        }
        for k in 0..12 {
            set(&mut m, 2, 1, k, k, 1.0);
            set(&mut m, 3, 1, k, k, 1.0);
        }
        m
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn lambda_id(&self) -> u8 {
        self.lambda_id
    }

    pub fn set_lambda_id(&mut self, id: u8) {
        self.lambda_id = id;
    }

    pub fn names(&self) -> Vec<String> {
        shapes(self.topology).into_iter().map(|(n, _)| n).collect()
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn group(&self, index: usize) -> ParamGroup {
        match index / 2 {
            i if ENC.contains(&i) => ParamGroup::Analysis,
            i if DEC.contains(&i) => ParamGroup::Synthesis,
            i if HA.contains(&i) => ParamGroup::HyperAnalysis,
            i if HS.contains(&i) => ParamGroup::HyperSynthesis,
            _ => ParamGroup::Prior,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let expected = shapes(self.topology);
        if expected.len() != self.params.len() {
            return Err(CodecError::Model(format!(
                "expected {} tensors, found {}",
                expected.len(),
                self.params.len()
            )));
        }
        for ((name, shape), p) in expected.iter().zip(&self.params) {
            if p.shape() != shape.as_slice() {
                return Err(CodecError::Model(format!("{name}: shape {:?}, expected {shape:?}", p.shape())));
            }
            if !p.all_finite() {
                return Err(CodecError::Model(format!("{name} holds non-finite values")));
            }
        }
        Ok(())
    }

    pub fn to_entries(&self) -> Vec<NamedTensor> {
        let mut entries: Vec<NamedTensor> = self
            .names()
            .into_iter()
            .zip(&self.params)
            .map(|(n, p)| NamedTensor::new(n, p.clone()))
            .collect();
        entries.push(NamedTensor::new("meta.lambda_id", Tensor::scalar(self.lambda_id as f64)));
        entries
    }

    /// Rebuilds a model from checkpoint entries; unrelated entries (optimizer
    /// state, training metadata) are ignored.
    pub fn from_entries(entries: &[NamedTensor]) -> Result<Self> {
        let find = |name: &str| entries.iter().find(|e| e.name == name).map(|e| &e.tensor);
        let missing = |name: &str| CodecError::Model(format!("checkpoint lacks `{name}`"));
        let enc0 = find("enc0.w").ok_or_else(|| missing("enc0.w"))?;
        let enc2 = find("enc2.w").ok_or_else(|| missing("enc2.w"))?;
        let ha0 = find("ha0.w").ok_or_else(|| missing("ha0.w"))?;
        let topology = Topology {
            hidden: enc0.shape()[2],
            latent: enc2.shape()[2],
            hyper: ha0.shape()[2],
        };
        let lambda_id = find("meta.lambda_id").map(|t| t.item() as u8).unwrap_or(0);
        let params = shapes(topology)
            .into_iter()
            .map(|(n, _)| find(&n).cloned().ok_or_else(|| missing(&n)))
            .collect::<Result<Vec<_>>>()?;
        let model = CodecModel {
            topology,
            lambda_id,
            params,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn to_checkpoint(&self) -> Result<Vec<u8>> {
        Ok(write_checkpoint(&self.to_entries())?)
    }

    pub fn from_checkpoint(bytes: &[u8]) -> Result<Self> {
        Self::from_entries(&read_checkpoint(bytes)?)
    }

    /// Places the parameters on `tape`, as trainable leaves or constants.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundModel {
        let vars = self
            .params
            .iter()
            .map(|p| {
                if trainable {
                    tape.param(p.clone())
                } else {
                    tape.constant(p.clone())
                }
            })
            .collect();
        BoundModel {
            topology: self.topology,
            vars,
        }
    }
}

/// Model parameters recorded on a tape; runs the sub-networks.
pub struct BoundModel {
    topology: Topology,
    vars: Vec<Var>,
}

impl BoundModel {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    fn layer(&self, tape: &mut Tape, idx: usize, x: Var) -> Result<Var> {
        let spec = self.topology.layers()[idx];
        let (w, b) = (self.vars[2 * idx], self.vars[2 * idx + 1]);
        let y = if spec.transposed {
            tape.conv_transpose1d(x, w, b, spec.stride)?
        } else {
            tape.conv1d(x, w, b, spec.stride)?
        };
        Ok(if spec.relu { tape.relu(y) } else { y })
    }

    fn stack(&self, tape: &mut Tape, layers: std::ops::Range<usize>, mut x: Var) -> Result<Var> {
        for i in layers {
            x = self.layer(tape, i, x)?;
        }
        Ok(x)
    }

    /// `(N_pad, 3) -> (N_pad / 4, latent)`; `N_pad` must be a multiple of 8.
    pub fn analyze(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let n = tape.shape(x)[0];
        if !n.is_multiple_of(8) {
            return Err(CodecError::Shape(format!("analysis input length {n} is not a multiple of 8")));
        }
        self.stack(tape, ENC, x)
    }

    /// `(L, latent) -> (4 L, 3)`, unclipped.
    pub fn synthesize(&self, tape: &mut Tape, y_hat: Var) -> Result<Var> {
        let s = tape.shape(y_hat);
        if s.len() != 2 || s[1] != self.topology.latent {
            return Err(CodecError::Shape(format!(
                "synthesis expects (L, {}), got {s:?}",
                self.topology.latent
            )));
        }
        self.stack(tape, DEC, y_hat)
    }

    /// `(L, latent) -> (L / 2, hyper)`.
    pub fn hyper_analyze(&self, tape: &mut Tape, y: Var) -> Result<Var> {
        self.stack(tape, HA, y)
    }

    /// `(L / 2, hyper) -> (mu, sigma)`, each `(L, latent)`, with
    /// `sigma = clamp(exp(raw), SIGMA_MIN, SIGMA_MAX)`.
    pub fn hyper_synthesize(&self, tape: &mut Tape, z_hat: Var) -> Result<(Var, Var)> {
        let out = self.stack(tape, HS, z_hat)?;
        let c = self.topology.latent;
        let mu = tape.slice(out, 1, 0, c)?;
        let raw = tape.slice(out, 1, c, c)?;
        let raw = tape.clamp(raw, -30.0, 30.0);
        let sigma = tape.exp(raw);
        let sigma = tape.clamp(sigma, SIGMA_MIN, SIGMA_MAX);
        Ok((mu, sigma))
    }

    /// Factorized prior broadcast to `rows` hyper-latent positions: `(mean, scale)`.
    pub fn prior(&self, tape: &mut Tape, rows: usize) -> Result<(Var, Var)> {
        let mean = tape.broadcast_rows(self.vars[PRIOR_MEAN], rows)?;
        let log_scale = tape.broadcast_rows(self.vars[PRIOR_LOG_SCALE], rows)?;
        let log_scale = tape.clamp(log_scale, -30.0, 30.0);
        let scale = tape.exp(log_scale);
        let scale = tape.clamp(scale, SIGMA_MIN, SIGMA_MAX);
        Ok((mean, scale))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_counts() {
        assert_eq!(CodecModel::zeros(Topology::TOY, 0).num_params(), 61_747);
        assert!(CodecModel::zeros(Topology::MICRO, 0).num_params() <= 500);
    }

    #[test]
    fn shapes_through_the_network() {
        let model = CodecModel::init(Topology::TOY, 1, 0);
        let mut tape = Tape::new();
        let m = model.bind(&mut tape, false);
        let x = tape.constant(Tensor::full(&[16, 3], 0.5));
        let y = m.analyze(&mut tape, x).unwrap();
        assert_eq!(tape.shape(y), &[4, 32]);
        let z = m.hyper_analyze(&mut tape, y).unwrap();
        assert_eq!(tape.shape(z), &[2, 16]);
        let (mu, sigma) = m.hyper_synthesize(&mut tape, z).unwrap();
        assert_eq!(tape.shape(mu), &[4, 32]);
        assert_eq!(tape.shape(sigma), &[4, 32]);
        let x_hat = m.synthesize(&mut tape, y).unwrap();
        assert_eq!(tape.shape(x_hat), &[16, 3]);
        let odd = tape.constant(Tensor::zeros(&[12, 3]));
        assert!(m.analyze(&mut tape, odd).is_err());
    }

    #[test]
    fn minimal_latent_length() {
        let model = CodecModel::init(Topology::TOY, 1, 0);
        let mut tape = Tape::new();
        let m = model.bind(&mut tape, false);
        let x = tape.constant(Tensor::full(&[8, 3], 0.25));
        let y = m.analyze(&mut tape, x).unwrap();
        assert_eq!(tape.shape(y), &[2, 32]);
        let x_hat = m.synthesize(&mut tape, y).unwrap();
        assert_eq!(tape.shape(x_hat), &[8, 3]);
    }

    #[test]
    fn zero_model_outputs_zero() {
        let model = CodecModel::zeros(Topology::TOY, 0);
        let mut tape = Tape::new();
        let m = model.bind(&mut tape, false);
        let x = tape.constant(Tensor::full(&[8, 3], 0.7));
        let y = m.analyze(&mut tape, x).unwrap();
        assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
        let x_hat = m.synthesize(&mut tape, y).unwrap();
        assert!(tape.value(x_hat).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn checkpoint_roundtrip() {
        let model = CodecModel::init(Topology::MICRO, 9, 3);
        let bytes = model.to_checkpoint().unwrap();
        assert_eq!(CodecModel::from_checkpoint(&bytes).unwrap(), model);
    }

    #[test]
    fn init_is_seeded() {
        assert_eq!(CodecModel::init(Topology::TOY, 4, 0), CodecModel::init(Topology::TOY, 4, 0));
        assert_ne!(CodecModel::init(Topology::TOY, 4, 0), CodecModel::init(Topology::TOY, 5, 0));
    }
}
