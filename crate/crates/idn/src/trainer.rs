//! Batch construction and the three-phase schedule: autoencoder pretrain,
//! joint fine-tune without instance exchange, then fine-tune with it.
//!
//! Each phase draws from its own seed-derived random stream and begins with
//! zeroed momentum, and the full pipeline round-trips parameters through the
//! checkpoint encoding between phases — so running the phases staged across
//! processes or in one call yields bit-identical artifacts.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::ipt::{build_candidates, exchange_sample, CandidateTable};
use crate::model::{ForwardOptions, IdnModel, ModelConfig, PairForward, PairInputs};
use crate::objectives::{total_loss, BatchLabels, LossReport, LossToggles};
use crate::tensor::Tape;

const SEED_STRIDE: u64 = 0x9E3779B97F4A7C15;

/// Seed stream of one phase: the run seed xored with a phase-tagged stride
/// so phases never share draws and staged runs replay exactly.
pub fn phase_rng(seed: u64, phase_tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ phase_tag.wrapping_mul(SEED_STRIDE))
}

#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub seed: u64,
    pub momentum: f64,
    /// Steps and learning rate of the autoencoder pretrain phase.
    pub ae_steps: usize,
    pub ae_lr: f64,
    /// Steps and learning rate of the fine-tune phase without exchange.
    pub idn_steps: usize,
    pub idn_lr: f64,
    /// Steps and learning rate of the fine-tune phase with exchange.
    pub ipt_steps: usize,
    pub ipt_lr: f64,
    /// (positive, negative) pairs per autoencoder batch.
    pub ae_batch: (usize, usize),
    /// (positive, negative) pairs per fine-tune batch.
    pub idn_batch: (usize, usize),
    pub toggles: LossToggles,
    pub forward: ForwardOptions,
    /// Exchange candidates kept per instance.
    pub m: usize,
    /// Joint indices used for pose alignment.
    pub pelvis: usize,
    pub head: usize,
}

impl TrainConfig {
    /// Desk-scale defaults: 50/500/500 steps at rates 0.1/0.02/0.001 with
    /// momentum 0.9, batches of 45+360 then 15+120, five candidates each.
    pub fn desk_default(seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            momentum: 0.9,
            ae_steps: 50,
            ae_lr: 0.1,
            idn_steps: 500,
            idn_lr: 0.02,
            ipt_steps: 500,
            ipt_lr: 0.001,
            ae_batch: (45, 360),
            idn_batch: (15, 120),
            toggles: LossToggles::all(),
            forward: ForwardOptions::default(),
            m: 5,
            pelvis: 0,
            head: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, lr) in [("ae", self.ae_lr), ("idn", self.idn_lr), ("ipt", self.ipt_lr)] {
            if !(lr > 0.0) || !lr.is_finite() {
                return Err(Error::Contract(format!("{name} learning rate must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Contract(format!("momentum must lie in [0,1), got {}", self.momentum)));
        }
        for (name, (p, n)) in [("ae", self.ae_batch), ("idn", self.idn_batch)] {
            if p + n == 0 {
                return Err(Error::Contract(format!("{name} batch must hold at least one pair")));
            }
        }
        Ok(())
    }
}

/// Sample pair indices for one batch: exactly `n_pos` interactive and
/// `n_neg` non-interactive pairs, without replacement while a class has
/// enough pairs, then shuffled.
pub fn build_batch(
    dataset: &Dataset,
    n_pos: usize,
    n_neg: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    let (pos, neg) = dataset.split_by_interactiveness();
    let mut batch = Vec::with_capacity(n_pos + n_neg);
    for (pool, want, what) in [(&pos, n_pos, "interactive"), (&neg, n_neg, "non-interactive")] {
        if want == 0 {
            continue;
        }
        if pool.is_empty() {
            return Err(Error::Contract(format!("dataset has no {what} pairs")));
        }
        if pool.len() >= want {
            batch.extend(pool.choose_multiple(rng, want).copied());
        } else {
            batch.extend((0..want).map(|_| pool[rng.gen_range(0..pool.len())]));
        }
    }
    batch.shuffle(rng);
    Ok(batch)
}

fn with_step_index(step: usize, err: Error) -> Error {
    match err {
        Error::NonFinite(msg) => Error::NonFinite(format!("aborted at step {step}: {msg}")),
        other => other,
    }
}

/// Autoencoder pretrain: reconstruction plus verb classification on the
/// assembled union feature only. Returns one report per step.
pub fn run_phase_ae(
    model: &mut IdnModel,
    dataset: &Dataset,
    cfg: &TrainConfig,
) -> Result<Vec<LossReport>> {
    cfg.validate()?;
    let mut rng = phase_rng(cfg.seed, 1);
    model.params.reset_velocity();
    let mut reports = Vec::with_capacity(cfg.ae_steps);
    for step in 0..cfg.ae_steps {
        let mut run = |model: &mut IdnModel| -> Result<LossReport> {
            let batch = build_batch(dataset, cfg.ae_batch.0, cfg.ae_batch.1, &mut rng)?;
            let mut tape = Tape::new();
            let binding = model.bind(&mut tape);
            let mut recon_terms = Vec::with_capacity(batch.len());
            let mut cls_terms = Vec::with_capacity(batch.len());
            for &idx in &batch {
                let pair = &dataset.pairs()[idx];
                let inputs = PairInputs::from_pair(dataset, pair, None, None)?;
                let assembled = model.assemble(&mut tape, &binding, &inputs)?;
                let (recon, cls, _) =
                    model.ae_losses(&mut tape, &binding, assembled.f_hat_u, &pair.verbs)?;
                recon_terms.push(recon);
                cls_terms.push(cls);
            }
            let scale = 1.0 / batch.len() as f64;
            let recon_sum = tape.add_many(&recon_terms)?;
            let recon = tape.scale(recon_sum, scale)?;
            let cls_sum = tape.add_many(&cls_terms)?;
            let cls = tape.scale(cls_sum, scale)?;
            let total = tape.add(recon, cls)?;
            let mut report = LossReport::default();
            report.ae_recon = tape.scalar_value(recon)?;
            report.ae_cls = tape.scalar_value(cls)?;
            report.ae = tape.scalar_value(total)?;
            report.total = report.ae;
            let grads = model.params.complete_grads(tape.param_grads(total)?)?;
            model.params.sgd_step(&grads, cfg.ae_lr, cfg.momentum)?;
            Ok(report)
        };
        reports.push(run(model).map_err(|e| with_step_index(step, e))?);
    }
    Ok(reports)
}

/// Joint fine-tune phase. Without a candidate table this is the plain
/// phase (tag 2); with one, every batch pair draws exchange partners from
/// the table (tag 3). Labels always stay the original pair's.
pub fn run_phase_idn(
    model: &mut IdnModel,
    dataset: &Dataset,
    cfg: &TrainConfig,
    exchange: Option<&CandidateTable>,
) -> Result<Vec<LossReport>> {
    cfg.validate()?;
    let (tag, steps, lr) = match exchange {
        None => (2, cfg.idn_steps, cfg.idn_lr),
        Some(_) => (3, cfg.ipt_steps, cfg.ipt_lr),
    };
    let mut rng = phase_rng(cfg.seed, tag);
    model.params.reset_velocity();
    let mut reports = Vec::with_capacity(steps);
    for step in 0..steps {
        let mut run = |model: &mut IdnModel| -> Result<LossReport> {
            let batch = build_batch(dataset, cfg.idn_batch.0, cfg.idn_batch.1, &mut rng)?;
            let mut tape = Tape::new();
            let binding = model.bind(&mut tape);
            let mut forwards: Vec<PairForward> = Vec::with_capacity(batch.len());
            let mut rows: Vec<Vec<bool>> = Vec::with_capacity(batch.len());
            for &idx in &batch {
                let pair = &dataset.pairs()[idx];
                let (h_swap, o_swap) = match exchange {
                    Some(table) => exchange_sample(&mut rng, dataset, pair, table)?,
                    None => (None, None),
                };
                let inputs = PairInputs::from_pair(dataset, pair, h_swap, o_swap)?;
                forwards.push(model.forward_pair(&mut tape, &binding, &inputs, &cfg.forward)?);
                rows.push(pair.verbs.clone());
            }
            let labels = BatchLabels::new(rows)?;
            let (total, report) = total_loss(&mut tape, &binding, &forwards, &labels, &cfg.toggles)?;
            let grads = model.params.complete_grads(tape.param_grads(total)?)?;
            model.params.sgd_step(&grads, lr, cfg.momentum)?;
            Ok(report)
        };
        reports.push(run(model).map_err(|e| with_step_index(step, e))?);
    }
    Ok(reports)
}

/// Write a loss CSV: header row, then one row per step.
pub fn write_losses_csv(path: &Path, reports: &[LossReport]) -> Result<()> {
    let mut text = String::from(LossReport::CSV_HEADER);
    text.push('\n');
    for (step, report) in reports.iter().enumerate() {
        text.push_str(&report.csv_row(step));
        text.push('\n');
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Artifacts of a full three-phase run.
pub struct TrainArtifacts {
    /// Final model, as stored in the last checkpoint.
    pub model: IdnModel,
    pub ae_ckpt: PathBuf,
    pub idn_ckpt: PathBuf,
    pub ipt_ckpt: PathBuf,
    pub losses_csv: PathBuf,
    /// Per-step reports across all phases, in execution order.
    pub reports: Vec<LossReport>,
}

/// Run all three phases from a fresh model, emitting `ae.ckpt`,
/// `idn.ckpt`, `idn_ipt.ckpt`, and `losses.csv` under `out_dir`. Parameters
/// are reloaded from each checkpoint before the next phase so staged runs
/// of the same seed reproduce every artifact byte for byte.
pub fn train_full(
    model_config: &ModelConfig,
    dataset: &Dataset,
    cfg: &TrainConfig,
    out_dir: &Path,
) -> Result<TrainArtifacts> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let ae_ckpt = out_dir.join("ae.ckpt");
    let idn_ckpt = out_dir.join("idn.ckpt");
    let ipt_ckpt = out_dir.join("idn_ipt.ckpt");
    let losses_csv = out_dir.join("losses.csv");

    let mut model = IdnModel::init(model_config, cfg.seed)?;
    let mut reports = run_phase_ae(&mut model, dataset, cfg)?;
    model.save(&ae_ckpt)?;
    let mut model = IdnModel::load(model_config, &ae_ckpt)?;

    reports.extend(run_phase_idn(&mut model, dataset, cfg, None)?);
    model.save(&idn_ckpt)?;
    let mut model = IdnModel::load(model_config, &idn_ckpt)?;

    let table = build_candidates(dataset, cfg.m, cfg.pelvis, cfg.head)?;
    reports.extend(run_phase_idn(&mut model, dataset, cfg, Some(&table))?);
    model.save(&ipt_ckpt)?;
    let model = IdnModel::load(model_config, &ipt_ckpt)?;

    write_losses_csv(&losses_csv, &reports)?;
    Ok(TrainArtifacts { model, ae_ckpt, idn_ckpt, ipt_ckpt, losses_csv, reports })
}
