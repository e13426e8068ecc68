//! Adam optimization of the selection model against estimated targets.
//!
//! Targets are pure functions of (roster, image, seed) — the model
//! never influences them — so they are estimated once per sample and
//! reused across epochs. Each epoch visits every sample once in a
//! seeded shuffled order and takes one Adam step per sample.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::features::{FeatureExtractor, FeatureVector};
use super::model::{flatten_grads, loss, LossBreakdown, SelectionModel};
use super::targets::{estimate_targets_detailed, TargetEstimate};
use super::LearnError;
use crate::agents::{ImageRef, Roster};
use crate::discussion::DiscussionConfig;
use crate::geo::{GazetteerEntry, GeoBox};
use crate::seeding::rng_stream;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Discussion rounds per sample when estimating targets.
    pub l_rounds: u32,
    pub epochs: u32,
    pub lr: f64,
    /// Final-window length the report averages over.
    pub report_window: u32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            l_rounds: 20,
            epochs: 100,
            lr: 1e-5,
            report_window: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        if self.l_rounds == 0 || self.epochs == 0 || self.report_window == 0 {
            return Err(LearnError::Shape(
                "l_rounds, epochs and report_window must be positive".into(),
            ));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(LearnError::Shape("lr must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Adam with bias correction (beta1 = 0.9, beta2 = 0.999, eps = 1e-8).
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64, param_count: usize) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }

    /// One update step in place. With lr = 0 the parameters are left
    /// bit-identical (moments still advance).
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            if self.lr != 0.0 {
                let m_hat = self.m[i] / bc1;
                let v_hat = self.v[i] / bc2;
                params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// One labeled training sample at desk scale.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub image: ImageRef,
    pub truth_box: GeoBox,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochStats {
    pub epoch: u32,
    pub loss_total: f64,
    pub loss_d: f64,
    pub loss_lst: f64,
    pub loss_a: f64,
    pub acc: f64,
}

/// Training summary: per-epoch history plus means over the final
/// `report_window` epochs.
#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub epochs: u32,
    pub window: u32,
    pub loss_total: f64,
    pub loss_d: f64,
    pub loss_lst: f64,
    pub loss_a: f64,
    pub acc_window: f64,
    pub history: Vec<EpochStats>,
}

/// Train the model in place and return the report.
#[allow(clippy::too_many_arguments)]
pub fn train(
    model: &mut SelectionModel,
    samples: &[TrainSample],
    roster: &Roster,
    gazetteer: &[GazetteerEntry],
    extractor: &dyn FeatureExtractor,
    cfg: &TrainConfig,
    discussion_cfg: &DiscussionConfig,
    seed: u64,
) -> Result<TrainReport, LearnError> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(LearnError::Shape("training set is empty".into()));
    }
    if extractor.dim() != model.d_k {
        return Err(LearnError::Shape(format!(
            "extractor dim {} != model d_k {}",
            extractor.dim(),
            model.d_k
        )));
    }
    if roster.len() != model.n {
        return Err(LearnError::Shape(format!(
            "roster size {} != model n {}",
            roster.len(),
            model.n
        )));
    }

    // Targets do not depend on the parameters; estimate once per sample.
    let mut prepared: Vec<(FeatureVector, TargetEstimate)> = Vec::with_capacity(samples.len());
    for s in samples {
        let x = extractor.extract(&s.image)?;
        let est = estimate_targets_detailed(
            roster,
            gazetteer,
            &s.image,
            &s.truth_box,
            cfg.l_rounds,
            discussion_cfg,
            sample_seed(seed, &s.image.id),
        )?;
        prepared.push((x, est));
    }

    let mut adam = Adam::new(cfg.lr, model.param_count());
    let mut history: Vec<EpochStats> = Vec::with_capacity(cfg.epochs as usize);
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..prepared.len()).collect();
        let mut order_rng = rng_stream(seed, "train-order", &[&epoch.to_le_bytes()]);
        order.shuffle(&mut order_rng);

        let mut sums = LossBreakdown {
            total: 0.0,
            d_term: 0.0,
            lst_term: 0.0,
            a_term: 0.0,
        };
        let mut correct = 0usize;
        for &idx in &order {
            let (x, est) = &prepared[idx];
            let fwd = model.forward(x).map_err(|e| match e {
                LearnError::NumericalFault(msg) => {
                    LearnError::NumericalFault(format!("{msg} (sample {})", samples[idx].image.id))
                }
                other => other,
            })?;
            let breakdown = loss(
                &fwd.lst,
                &fwd.a,
                &est.targets,
                &est.final_distances,
                discussion_cfg.th_km,
            );
            sums.total += breakdown.total;
            sums.d_term += breakdown.d_term;
            sums.lst_term += breakdown.lst_term;
            sums.a_term += breakdown.a_term;
            if est.final_verdict_correct {
                correct += 1;
            }
            let grads = model.backward(&fwd, &est.targets)?;
            let flat_grads = flatten_grads(model, &grads);
            let mut params = model.params_flat();
            adam.step(&mut params, &flat_grads);
            model.set_params_flat(&params)?;
        }
        let count = prepared.len() as f64;
        history.push(EpochStats {
            epoch,
            loss_total: sums.total / count,
            loss_d: sums.d_term / count,
            loss_lst: sums.lst_term / count,
            loss_a: sums.a_term / count,
            acc: correct as f64 / count,
        });
    }

    let window = cfg.report_window.min(cfg.epochs) as usize;
    let tail = &history[history.len() - window..];
    let mean = |f: fn(&EpochStats) -> f64| tail.iter().map(f).sum::<f64>() / window as f64;
    Ok(TrainReport {
        epochs: cfg.epochs,
        window: window as u32,
        loss_total: mean(|e| e.loss_total),
        loss_d: mean(|e| e.loss_d),
        loss_lst: mean(|e| e.loss_lst),
        loss_a: mean(|e| e.loss_a),
        acc_window: mean(|e| e.acc),
        history,
    })
}

pub(crate) fn sample_seed(seed: u64, sample_id: &str) -> u64 {
    use rand::Rng;
    rng_stream(seed, "sample", &[sample_id.as_bytes()]).gen()
}
