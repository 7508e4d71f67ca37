//! Training objectives: distance-based verb classification with semi-hard
//! hinge mining, interactiveness terms, autoencoder terms, and the assembly
//! of the total loss from its togglable components.

use crate::error::{Error, Result};
use crate::model::PairForward;
use crate::optim::ParamBinding;
use crate::tensor::{Tape, Var};

/// Multi-hot verb labels of one mini-batch.
#[derive(Debug, Clone)]
pub struct BatchLabels {
    y: Vec<Vec<bool>>,
    n_verbs: usize,
}

impl BatchLabels {
    pub fn new(y: Vec<Vec<bool>>) -> Result<BatchLabels> {
        let Some(first) = y.first() else {
            return Err(Error::Contract("a batch needs at least one pair".into()));
        };
        let n_verbs = first.len();
        if n_verbs == 0 {
            return Err(Error::Contract("labels need at least one verb".into()));
        }
        if y.iter().any(|row| row.len() != n_verbs) {
            return Err(Error::Dimension("label rows have unequal verb counts".into()));
        }
        Ok(BatchLabels { y, n_verbs })
    }

    pub fn batch_size(&self) -> usize {
        self.y.len()
    }

    pub fn n_verbs(&self) -> usize {
        self.n_verbs
    }

    pub fn label(&self, pair: usize, verb: usize) -> bool {
        self.y[pair][verb]
    }

    /// A pair is interactive when it carries any verb.
    pub fn interactive(&self, pair: usize) -> bool {
        self.y[pair].iter().any(|&v| v)
    }

    pub fn positives(&self, verb: usize) -> Vec<usize> {
        (0..self.y.len()).filter(|&p| self.y[p][verb]).collect()
    }

    pub fn negatives(&self, verb: usize) -> Vec<usize> {
        (0..self.y.len()).filter(|&p| !self.y[p][verb]).collect()
    }

    pub fn row(&self, pair: usize) -> &[bool] {
        &self.y[pair]
    }
}

/// Mining thresholds of one verb; a side is `None` when the batch has no
/// pair on it.
#[derive(Debug, Clone, Copy)]
pub struct VerbThresholds {
    /// Largest positive-pair distance — negatives are pushed above it.
    pub t0: Option<Var>,
    /// Smallest negative-pair distance — positives are pushed below it.
    pub t1: Option<Var>,
}

fn check_distance_table(distances: &[Vec<Var>], labels: &BatchLabels) -> Result<()> {
    if distances.len() != labels.batch_size() {
        return Err(Error::Dimension(format!(
            "{} distance rows vs batch of {}",
            distances.len(),
            labels.batch_size()
        )));
    }
    if distances.iter().any(|row| row.len() != labels.n_verbs()) {
        return Err(Error::Dimension(format!(
            "distance rows must have {} verbs",
            labels.n_verbs()
        )));
    }
    Ok(())
}

/// Per-verb mining thresholds over the batch: the positive threshold is the
/// batch maximum of positive-pair distances and the negative threshold the
/// batch minimum of negative-pair distances. Gradients flow through the
/// selected extremes.
pub fn semi_hard_thresholds(
    tape: &mut Tape,
    distances: &[Vec<Var>],
    labels: &BatchLabels,
) -> Result<Vec<VerbThresholds>> {
    check_distance_table(distances, labels)?;
    let mut out = Vec::with_capacity(labels.n_verbs());
    for verb in 0..labels.n_verbs() {
        let pos: Vec<Var> = labels.positives(verb).iter().map(|&p| distances[p][verb]).collect();
        let neg: Vec<Var> = labels.negatives(verb).iter().map(|&p| distances[p][verb]).collect();
        let t0 = if pos.is_empty() { None } else { Some(tape.max_many(&pos)?) };
        let t1 = if neg.is_empty() { None } else { Some(tape.min_many(&neg)?) };
        out.push(VerbThresholds { t0, t1 });
    }
    Ok(out)
}

/// Hinge loss against mining thresholds: positives are penalized above the
/// negative threshold, negatives below the positive threshold; summed over
/// verbs, averaged over the batch. A pair sitting exactly on its threshold
/// contributes nothing.
pub fn hinge_loss(
    tape: &mut Tape,
    distances: &[Vec<Var>],
    labels: &BatchLabels,
    thresholds: &[VerbThresholds],
) -> Result<Var> {
    check_distance_table(distances, labels)?;
    if thresholds.len() != labels.n_verbs() {
        return Err(Error::Dimension(format!(
            "{} thresholds for {} verbs",
            thresholds.len(),
            labels.n_verbs()
        )));
    }
    let mut terms = Vec::new();
    for pair in 0..labels.batch_size() {
        for verb in 0..labels.n_verbs() {
            let d = distances[pair][verb];
            let term = if labels.label(pair, verb) {
                match thresholds[verb].t1 {
                    Some(t1) => {
                        let gap = tape.sub(d, t1)?;
                        Some(tape.relu(gap))
                    }
                    None => None,
                }
            } else {
                match thresholds[verb].t0 {
                    Some(t0) => {
                        let gap = tape.sub(t0, d)?;
                        Some(tape.relu(gap))
                    }
                    None => None,
                }
            };
            terms.extend(term);
        }
    }
    if terms.is_empty() {
        return Ok(tape.scalar(0.0));
    }
    let sum = tape.add_many(&terms)?;
    tape.scale(sum, 1.0 / labels.batch_size() as f64)
}

/// Distance-entropy plus mining-hinge classification loss over one distance
/// table. The entropy half scores verb presence as `sigmoid(bias_v - d)`
/// with a learnable per-verb bias (raw negated distances could never exceed
/// probability one half); binary cross-entropy is averaged over verbs and
/// then over the batch.
pub fn verb_cls_loss(
    tape: &mut Tape,
    binding: &ParamBinding,
    bias_name: &str,
    distances: &[Vec<Var>],
    labels: &BatchLabels,
) -> Result<(Var, Var)> {
    check_distance_table(distances, labels)?;
    let bias = binding.var(bias_name)?;
    if tape.value(bias).len() != labels.n_verbs() {
        return Err(Error::Dimension(format!(
            "bias {bias_name} has {} entries for {} verbs",
            tape.value(bias).len(),
            labels.n_verbs()
        )));
    }
    let mut per_pair = Vec::with_capacity(labels.batch_size());
    for pair in 0..labels.batch_size() {
        let mut logits = Vec::with_capacity(labels.n_verbs());
        for verb in 0..labels.n_verbs() {
            let b = tape.index(bias, verb)?;
            logits.push(tape.sub(b, distances[pair][verb])?);
        }
        let z = tape.pack(&logits)?;
        let targets: Vec<f64> = labels
            .row(pair)
            .iter()
            .map(|&v| if v { 1.0 } else { 0.0 })
            .collect();
        per_pair.push(tape.bce_logits_mean(z, &targets)?);
    }
    let sum = tape.add_many(&per_pair)?;
    let ent = tape.scale(sum, 1.0 / labels.batch_size() as f64)?;
    let thresholds = semi_hard_thresholds(tape, distances, labels)?;
    let hinge = hinge_loss(tape, distances, labels, &thresholds)?;
    Ok((ent, hinge))
}

/// Binary interactiveness terms of one pair. The coherent feature targets
/// the pair's label, the isolated concatenation always targets false, and
/// each per-verb integrated feature targets the pair's label (mean over
/// verbs); the integrated term is absent when integration is off.
pub fn interactiveness_losses(
    tape: &mut Tape,
    inter_u: Var,
    inter_ho: Var,
    inter_integrated: &[Var],
    label: bool,
) -> Result<(Var, Var, Option<Var>)> {
    let target = if label { 1.0 } else { 0.0 };
    let u_bin = tape.bce_logits_mean(inter_u, &[target])?;
    let ho_bin = tape.bce_logits_mean(inter_ho, &[0.0])?;
    let i_bin = if inter_integrated.is_empty() {
        None
    } else {
        let mut scalars = Vec::with_capacity(inter_integrated.len());
        for &logit in inter_integrated {
            scalars.push(tape.index(logit, 0)?);
        }
        let z = tape.pack(&scalars)?;
        Some(tape.bce_logits_mean(z, &vec![target; scalars.len()])?)
    };
    Ok((u_bin, ho_bin, i_bin))
}

/// Which loss components participate in an update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossToggles {
    /// Verb classification on coherent-feature distances (needs integration).
    pub u_cls: bool,
    /// Verb classification on isolated-feature distances (needs decomposition).
    pub ho_cls: bool,
    /// Binary interactiveness terms.
    pub bin: bool,
    /// Autoencoder reconstruction + classification terms.
    pub ae: bool,
}

impl LossToggles {
    pub fn all() -> LossToggles {
        LossToggles { u_cls: true, ho_cls: true, bin: true, ae: true }
    }

    pub fn ae_only() -> LossToggles {
        LossToggles { u_cls: false, ho_cls: false, bin: false, ae: true }
    }

    pub fn any(&self) -> bool {
        self.u_cls || self.ho_cls || self.bin || self.ae
    }
}

/// Evaluated loss components of one batch; disabled components report 0.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossReport {
    pub u_ent: f64,
    pub u_hinge: f64,
    pub u_cls: f64,
    pub ho_ent: f64,
    pub ho_hinge: f64,
    pub ho_cls: f64,
    pub u_bin: f64,
    pub ho_bin: f64,
    pub i_bin: f64,
    pub bin: f64,
    pub ae_recon: f64,
    pub ae_cls: f64,
    pub ae: f64,
    pub total: f64,
}

impl LossReport {
    pub const CSV_HEADER: &'static str =
        "step,u_ent,u_hinge,u_cls,ho_ent,ho_hinge,ho_cls,u_bin,ho_bin,i_bin,bin,ae_recon,ae_cls,ae,total";

    pub fn csv_row(&self, step: usize) -> String {
        format!(
            "{step},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.u_ent,
            self.u_hinge,
            self.u_cls,
            self.ho_ent,
            self.ho_hinge,
            self.ho_cls,
            self.u_bin,
            self.ho_bin,
            self.i_bin,
            self.bin,
            self.ae_recon,
            self.ae_cls,
            self.ae,
            self.total
        )
    }
}

/// Assemble the batch loss from forward traces. The returned scalar is the
/// exact ordered sum of the enabled components (coherent classification,
/// isolated classification, interactiveness, autoencoder), and the report
/// carries every evaluated value.
pub fn total_loss(
    tape: &mut Tape,
    binding: &ParamBinding,
    forwards: &[PairForward],
    labels: &BatchLabels,
    toggles: &LossToggles,
) -> Result<(Var, LossReport)> {
    if forwards.len() != labels.batch_size() {
        return Err(Error::Dimension(format!(
            "{} forward traces vs batch of {}",
            forwards.len(),
            labels.batch_size()
        )));
    }
    if !toggles.any() {
        return Err(Error::Contract("no loss component enabled".into()));
    }
    let batch = labels.batch_size();
    let mut report = LossReport::default();
    let mut components: Vec<Var> = Vec::new();

    if toggles.u_cls {
        let table: Vec<Vec<Var>> = forwards.iter().map(|f| f.d_u.clone()).collect();
        if table.iter().any(|row| row.len() != labels.n_verbs()) {
            return Err(Error::Contract(
                "coherent classification needs integration distances".into(),
            ));
        }
        let (ent, hinge) = verb_cls_loss(tape, binding, "cls.u.bias", &table, labels)?;
        let cls = tape.add(ent, hinge)?;
        report.u_ent = tape.scalar_value(ent)?;
        report.u_hinge = tape.scalar_value(hinge)?;
        report.u_cls = tape.scalar_value(cls)?;
        components.push(cls);
    }

    if toggles.ho_cls {
        let table: Vec<Vec<Var>> = forwards.iter().map(|f| f.d_ho.clone()).collect();
        if table.iter().any(|row| row.len() != labels.n_verbs()) {
            return Err(Error::Contract(
                "isolated classification needs decomposition distances".into(),
            ));
        }
        let (ent, hinge) = verb_cls_loss(tape, binding, "cls.ho.bias", &table, labels)?;
        let cls = tape.add(ent, hinge)?;
        report.ho_ent = tape.scalar_value(ent)?;
        report.ho_hinge = tape.scalar_value(hinge)?;
        report.ho_cls = tape.scalar_value(cls)?;
        components.push(cls);
    }

    if toggles.bin {
        let mut u_terms = Vec::with_capacity(batch);
        let mut ho_terms = Vec::with_capacity(batch);
        let mut i_terms = Vec::new();
        for (pair, fwd) in forwards.iter().enumerate() {
            let (u, ho, i) = interactiveness_losses(
                tape,
                fwd.inter_u,
                fwd.inter_ho,
                &fwd.inter_integrated,
                labels.interactive(pair),
            )?;
            u_terms.push(u);
            ho_terms.push(ho);
            i_terms.extend(i);
        }
        let u_sum = tape.add_many(&u_terms)?;
        let u_bin = tape.scale(u_sum, 1.0 / batch as f64)?;
        let ho_sum = tape.add_many(&ho_terms)?;
        let ho_bin = tape.scale(ho_sum, 1.0 / batch as f64)?;
        let mut bin = tape.add(u_bin, ho_bin)?;
        report.u_bin = tape.scalar_value(u_bin)?;
        report.ho_bin = tape.scalar_value(ho_bin)?;
        if !i_terms.is_empty() {
            if i_terms.len() != batch {
                return Err(Error::Contract(
                    "integrated interactiveness must cover every pair or none".into(),
                ));
            }
            let i_sum = tape.add_many(&i_terms)?;
            let i_bin = tape.scale(i_sum, 1.0 / batch as f64)?;
            report.i_bin = tape.scalar_value(i_bin)?;
            bin = tape.add(bin, i_bin)?;
        }
        report.bin = tape.scalar_value(bin)?;
        components.push(bin);
    }

    if toggles.ae {
        let mut recon_terms = Vec::with_capacity(batch);
        let mut cls_terms = Vec::with_capacity(batch);
        for (pair, fwd) in forwards.iter().enumerate() {
            recon_terms.push(tape.mse_mean(fwd.recon, fwd.f_hat_u)?);
            let targets: Vec<f64> = labels
                .row(pair)
                .iter()
                .map(|&v| if v { 1.0 } else { 0.0 })
                .collect();
            cls_terms.push(tape.bce_logits_mean(fwd.ae_logits, &targets)?);
        }
        let recon_sum = tape.add_many(&recon_terms)?;
        let ae_recon = tape.scale(recon_sum, 1.0 / batch as f64)?;
        let cls_sum = tape.add_many(&cls_terms)?;
        let ae_cls = tape.scale(cls_sum, 1.0 / batch as f64)?;
        let ae = tape.add(ae_recon, ae_cls)?;
        report.ae_recon = tape.scalar_value(ae_recon)?;
        report.ae_cls = tape.scalar_value(ae_cls)?;
        report.ae = tape.scalar_value(ae)?;
        components.push(ae);
    }

    let mut total = components[0];
    for &c in &components[1..] {
        total = tape.add(total, c)?;
    }
    report.total = tape.scalar_value(total)?;
    Ok((total, report))
}
