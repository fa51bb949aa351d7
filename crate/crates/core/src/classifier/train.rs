//! Mini-batch training for the network, with early stopping on validation
//! loss.

use std::collections::BTreeSet;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::mlp::{bce_from_logit, mlp_init, mlp_logit, mlp_loss_grad, MlpParams, PARAM_COUNT};
use super::optim::{adam_step, AdamState};
use super::{check_both_classes, ModelParams, Sample, TrainConfig, TrainError, TrainedModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingTrace {
    pub epochs: Vec<EpochRecord>,
    /// Last epoch that ran (1-based).
    pub stopped_epoch: usize,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
}

impl TrainingTrace {
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "train_loss", "train_acc", "val_loss", "val_acc"])?;
        for r in &self.epochs {
            w.write_record([
                r.epoch.to_string(),
                r.train_loss.to_string(),
                r.train_acc.to_string(),
                r.val_loss.to_string(),
                r.val_acc.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn min_val_loss(&self) -> Option<f64> {
        self.epochs.iter().map(|r| r.val_loss).reduce(f64::min)
    }
}

/// Splits into (train, validation).
///
/// When every sample carries a source id, whole sources are held out until
/// the validation share reaches `val_fraction`; otherwise rows are shuffled
/// and split. Deterministic in `cfg.seed`.
pub fn split_train_val(samples: &[Sample], cfg: &TrainConfig) -> (Vec<Sample>, Vec<Sample>) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_5911);
    let target = ((samples.len() as f64 * cfg.val_fraction).round() as usize).max(1);

    let grouped = samples.iter().all(|s| s.source.is_some());
    if grouped {
        let mut groups: Vec<u32> = samples
            .iter()
            .filter_map(|s| s.source)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if groups.len() >= 2 {
            groups.shuffle(&mut rng);
            let mut held = BTreeSet::new();
            let mut count = 0;
            // always leave at least one group for training
            for g in &groups[..groups.len() - 1] {
                if count >= target {
                    break;
                }
                held.insert(*g);
                count += samples.iter().filter(|s| s.source == Some(*g)).count();
            }
            let (val, train): (Vec<Sample>, Vec<Sample>) = samples
                .iter()
                .partition(|s| held.contains(&s.source.unwrap()));
            return (train, val);
        }
    }

    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng);
    let target = target.min(samples.len().saturating_sub(1));
    let val = order[..target].iter().map(|&i| samples[i]).collect();
    let train = order[target..].iter().map(|&i| samples[i]).collect();
    (train, val)
}

/// Mean BCE and accuracy of `params` over `set` at `threshold`.
pub(crate) fn evaluate_mlp(params: &MlpParams, set: &[Sample], threshold: f64) -> (f64, f64) {
    if set.is_empty() {
        return (0.0, 0.0);
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for s in set {
        let z = mlp_logit(params, &s.x);
        loss += bce_from_logit(z, s.label.as_target());
        let open = super::mlp::sigmoid(z) >= threshold;
        if open == (s.label == super::LipsState::Open) {
            correct += 1;
        }
    }
    let n = set.len() as f64;
    (loss / n, correct as f64 / n)
}

/// Trains the network and returns the parameters from the epoch with the
/// lowest validation loss.
///
/// Training stops after `patience` consecutive epochs without a validation
/// improvement larger than `min_delta`, or at `max_epochs`.
pub fn mlp_train(
    samples: &[Sample],
    cfg: &TrainConfig,
) -> Result<(TrainedModel, TrainingTrace), TrainError> {
    cfg.validate()?;
    check_both_classes(samples)?;
    let needed = 2 * cfg.batch_size;
    if samples.len() < needed {
        return Err(TrainError::DatasetTooSmall {
            rows: samples.len(),
            needed,
        });
    }

    let (mut train, val) = split_train_val(samples, cfg);
    let adam = cfg.adam();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = mlp_init(cfg.seed).to_flat();
    let mut state = AdamState::new(PARAM_COUNT);
    let mut step = 0u64;

    let mut trace = TrainingTrace::default();
    let mut best_params = MlpParams::from_flat(&params);
    let mut best_val = f64::INFINITY;
    let mut patience_ref = f64::INFINITY;
    let mut stale = 0usize;

    for epoch in 1..=cfg.max_epochs {
        train.shuffle(&mut rng);
        for batch in train.chunks(cfg.batch_size) {
            let (_, grad) = mlp_loss_grad(&MlpParams::from_flat(&params), batch);
            step += 1;
            (params, state) = adam_step(&params, &grad.to_flat(), &state, step, &adam);
        }

        let current = MlpParams::from_flat(&params);
        let (train_loss, train_acc) = evaluate_mlp(&current, &train, cfg.threshold);
        let (val_loss, val_acc) = evaluate_mlp(&current, &val, cfg.threshold);
        if !(train_loss.is_finite() && val_loss.is_finite()) {
            return Err(TrainError::NonFiniteLoss { epoch });
        }
        trace.epochs.push(EpochRecord {
            epoch,
            train_loss,
            train_acc,
            val_loss,
            val_acc,
        });
        trace.stopped_epoch = epoch;

        if val_loss < best_val {
            best_val = val_loss;
            best_params = current;
            trace.best_epoch = epoch;
        }
        if val_loss < patience_ref - cfg.min_delta {
            patience_ref = val_loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                log::debug!("early stop at epoch {epoch}, best epoch {}", trace.best_epoch);
                break;
            }
        }
    }

    let model = TrainedModel::new(
        ModelParams::Mlp(best_params),
        cfg.coeffs,
        cfg.norm_mode,
        cfg.threshold,
    );
    Ok((model, trace))
}
