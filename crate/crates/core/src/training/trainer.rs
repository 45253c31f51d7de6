use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::{prepare_input, CodecModel};
use crate::pointcloud::{kdtree_crop, PointCloud};
use crate::tensor::{read_checkpoint, write_checkpoint, AdamConfig, AdamState, NamedTensor, Tape, Tensor};

use super::config::TrainConfig;
use super::loss::{crop_losses, Rounding};
use super::{Result, TrainError};

pub const LOG_HEADER: &str = "epoch,lr,L_Rate,L_D,L_MI,L_TR,L_LC,total";

/// Per-epoch means over all crops (values before each optimizer step).
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub rate: f64,
    pub distortion: f64,
    pub mi: f64,
    pub tr: Option<f64>,
    pub lc: Option<f64>,
    pub total: f64,
}

pub fn log_csv(log: &[EpochLog]) -> String {
    let mut s = String::from(LOG_HEADER);
    s.push('\n');
    let opt = |v: Option<f64>| v.map(|v| format!("{v:.9e}")).unwrap_or_default();
    for e in log {
        let _ = writeln!(
            s,
            "{},{:e},{:.9e},{:.9e},{:.9e},{},{},{:.9e}",
            e.epoch,
            e.lr,
            e.rate,
            e.distortion,
            e.mi,
            opt(e.tr),
            opt(e.lc),
            e.total
        );
    }
    s
}

pub struct Trainer {
    config: TrainConfig,
    model: CodecModel,
    adam: AdamState,
    epoch: usize,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = CodecModel::init(config.topology, config.seed, config.lambda_id);
        let adam = AdamState::new(model.params(), AdamConfig::default());
        Ok(Trainer {
            config,
            model,
            adam,
            epoch: 0,
        })
    }

    /// Restores model, optimizer moments and epoch counter.
    pub fn from_checkpoint(config: TrainConfig, bytes: &[u8]) -> Result<Self> {
        config.validate()?;
        let entries = read_checkpoint(bytes)?;
        let model = CodecModel::from_entries(&entries)?;
        if model.topology() != config.topology {
            return Err(TrainError::Config(format!(
                "checkpoint topology {:?} differs from config {:?}",
                model.topology(),
                config.topology
            )));
        }
        let find = |name: &str| {
            entries
                .iter()
                .find(|e| e.name == name)
                .map(|e| e.tensor.clone())
                .ok_or_else(|| TrainError::Config(format!("checkpoint lacks `{name}`")))
        };
        let names = model.names();
        let m = names.iter().map(|n| find(&format!("adam.m.{n}"))).collect::<Result<Vec<_>>>()?;
        let v = names.iter().map(|n| find(&format!("adam.v.{n}"))).collect::<Result<Vec<_>>>()?;
        let adam = AdamState {
            config: AdamConfig::default(),
            step: find("meta.adam_step")?.item() as u64,
            m,
            v,
        };
        let epoch = find("meta.epoch")?.item() as usize;
        Ok(Trainer {
            config,
            model,
            adam,
            epoch,
        })
    }

    pub fn checkpoint(&self) -> Result<Vec<u8>> {
        let mut entries = self.model.to_entries();
        for (n, (m, v)) in self.model.names().iter().zip(self.adam.m.iter().zip(&self.adam.v)) {
            entries.push(NamedTensor::new(format!("adam.m.{n}"), m.clone()));
            entries.push(NamedTensor::new(format!("adam.v.{n}"), v.clone()));
        }
        entries.push(NamedTensor::new("meta.epoch", Tensor::scalar(self.epoch as f64)));
        entries.push(NamedTensor::new("meta.adam_step", Tensor::scalar(self.adam.step as f64)));
        Ok(write_checkpoint(&entries)?)
    }

    pub fn model(&self) -> &CodecModel {
        &self.model
    }

    pub fn into_model(self) -> CodecModel {
        self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn finished(&self) -> bool {
        self.epoch >= self.config.epochs
    }

    pub fn run_epoch(&mut self, dataset: &[PointCloud]) -> Result<EpochLog> {
        if dataset.is_empty() || dataset.iter().any(PointCloud::is_empty) {
            return Err(TrainError::EmptyDataset);
        }
        let cfg = self.config.clone();
        let epoch = self.epoch;
        let lr = cfg.lr_at(epoch);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64 + 1);

        let mut crops = Vec::with_capacity(cfg.crops_per_epoch);
        for i in 0..cfg.crops_per_epoch {
            let crop = kdtree_crop(&dataset[i % dataset.len()], cfg.k_crop, rng.gen())?;
            crops.push((crop, rng.gen::<u64>()));
        }

        let names = self.model.names();
        let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let mut sums = [0.0f64; 6];
        for batch in crops.chunks(cfg.batch_size) {
            let mut grads: Vec<Tensor> = self.model.params().iter().map(|p| Tensor::zeros(p.shape())).collect();
            for (crop, noise_seed) in batch {
                let (_, x) = prepare_input(crop)?;
                let mut tape = Tape::new();
                let bound = self.model.bind(&mut tape, true);
                let mut noise = ChaCha8Rng::seed_from_u64(*noise_seed);
                let t = crop_losses(
                    &mut tape,
                    &bound,
                    &x,
                    crop.len(),
                    cfg.constraint,
                    cfg.weights,
                    cfg.aux_norm,
                    &mut noise,
                    &mut Rounding::live(),
                )?;
                let val = |v| tape.value(v).item();
                let terms = [
                    ("L_Rate", Some(t.rate)),
                    ("L_D", Some(t.distortion)),
                    ("L_MI", Some(t.mi)),
                    ("L_TR", t.tr),
                    ("L_LC", t.lc),
                    ("total loss", Some(t.total)),
                ];
                for (i, (name, v)) in terms.iter().enumerate() {
                    if let Some(v) = v {
                        let x = val(*v);
                        if !x.is_finite() {
                            return Err(TrainError::NonFiniteLoss {
                                term: name,
                                epoch,
                                step: self.adam.step,
                            });
                        }
                        sums[i] += x;
                    }
                }
                let mut g = tape.backward(t.total)?;
                for (acc, &v) in grads.iter_mut().zip(bound.vars()) {
                    for (a, b) in acc.data_mut().iter_mut().zip(g.take(v)?.data()) {
                        *a += b;
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for g in &mut grads {
                g.data_mut().iter_mut().for_each(|v| *v *= scale);
            }
            self.adam.step(self.model.params_mut(), &grads, &name_refs, lr)?;
        }
        self.epoch += 1;
        let n = crops.len() as f64;
        Ok(EpochLog {
            epoch: epoch + 1,
            lr,
            rate: sums[0] / n,
            distortion: sums[1] / n,
            mi: sums[2] / n,
            tr: cfg.constraint.has_trc().then(|| sums[3] / n),
            lc: cfg.constraint.has_lcc().then(|| sums[4] / n),
            total: sums[5] / n,
        })
    }
}

/// Trains from scratch for `config.epochs` epochs.
pub fn train(dataset: &[PointCloud], config: &TrainConfig) -> Result<(CodecModel, Vec<EpochLog>)> {
    let mut trainer = Trainer::new(config.clone())?;
    let mut log = Vec::with_capacity(config.epochs);
    while !trainer.finished() {
        log.push(trainer.run_epoch(dataset)?);
    }
    Ok((trainer.into_model(), log))
}
