//! Seeded finite-difference verification sweeps over every parameter tensor
//! under each loss configuration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

use crate::data::FeatDims;
use crate::error::Result;
use crate::model::{ForwardOptions, IdnModel, ModelConfig, PairInputs};
use crate::objectives::{total_loss, BatchLabels, LossToggles};
use crate::optim::grad_check_by_param;
use crate::synth::{generate, SynthConfig};
use crate::trainer::build_batch;

/// Worst relative gradient error of one parameter tensor under one loss
/// configuration, across all sweep cases.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub loss: &'static str,
    pub param: String,
    pub max_rel_err: f64,
}

const LOSS_SETS: [(&str, LossToggles); 5] = [
    ("ae", LossToggles { u_cls: false, ho_cls: false, bin: false, ae: true }),
    ("u_cls", LossToggles { u_cls: true, ho_cls: false, bin: false, ae: false }),
    ("ho_cls", LossToggles { u_cls: false, ho_cls: true, bin: false, ae: false }),
    ("bin", LossToggles { u_cls: false, ho_cls: false, bin: true, ae: false }),
    ("all", LossToggles { u_cls: true, ho_cls: true, bin: true, ae: true }),
];

/// Run `cases` seeded gradient checks on a tiny model, rotating through the
/// loss configurations, and fold the per-parameter relative errors into one
/// table sorted by (loss, parameter).
pub fn gradient_sweep(cases: usize, seed: u64) -> Result<Vec<SweepRow>> {
    let mc = ModelConfig {
        n_verbs: 2,
        feat_dims: FeatDims { union: 6, human: 3, object: 3 },
        loc_union_width: 4,
        ae_hidden: 5,
        code_width: 4,
        transform_hidden: 4,
        dist_bias_init: 0.0,
    };
    let sc = SynthConfig {
        n_verbs: 2,
        feat_dims: FeatDims { union: 6, human: 3, object: 3 },
        pairs_per_verb: 6,
        negatives: 8,
        test_pairs_per_verb: 1,
        test_negatives: 1,
        noise: 0.05,
        multi_label_prob: 0.25,
        seed,
    };
    let data = generate(&sc)?.train;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xD1A6);
    let mut worst: BTreeMap<(usize, String), f64> = BTreeMap::new();
    for case in 0..cases {
        let model = IdnModel::init(&mc, rng.gen())?;
        let batch = build_batch(&data, 2, 2, &mut rng)?;
        let (set_idx, (_, toggles)) = (case % LOSS_SETS.len(), LOSS_SETS[case % LOSS_SETS.len()]);
        let labels = BatchLabels::new(
            batch.iter().map(|&i| data.pairs()[i].verbs.clone()).collect(),
        )?;
        let loss_fn = |tape: &mut crate::tensor::Tape,
                       binding: &crate::optim::ParamBinding|
         -> Result<crate::tensor::Var> {
            let mut forwards = Vec::with_capacity(batch.len());
            for &i in &batch {
                let inputs = PairInputs::from_pair(&data, &data.pairs()[i], None, None)?;
                forwards.push(model.forward_pair(
                    tape,
                    binding,
                    &inputs,
                    &ForwardOptions::default(),
                )?);
            }
            Ok(total_loss(tape, binding, &forwards, &labels, &toggles)?.0)
        };
        for (param, err) in grad_check_by_param(loss_fn, &model.params, 1e-5)? {
            let entry = worst.entry((set_idx, param)).or_insert(0.0);
            *entry = entry.max(err);
        }
    }
    Ok(worst
        .into_iter()
        .map(|((set_idx, param), max_rel_err)| SweepRow {
            loss: LOSS_SETS[set_idx].0,
            param,
            max_rel_err,
        })
        .collect())
}

/// Render sweep rows as an aligned text table with a trailing verdict line.
pub fn format_table(rows: &[SweepRow], bound: f64) -> String {
    let width = rows.iter().map(|r| r.param.len()).max().unwrap_or(5).max(5);
    let mut out = format!("{:<8} {:<width$} max-rel-err\n", "loss", "param");
    for r in rows {
        out.push_str(&format!("{:<8} {:<width$} {:.3e}\n", r.loss, r.param, r.max_rel_err));
    }
    let worst = rows.iter().map(|r| r.max_rel_err).fold(0.0f64, f64::max);
    out.push_str(&format!(
        "worst {:.3e} bound {:.1e}: {}\n",
        worst,
        bound,
        if worst < bound { "ok" } else { "EXCEEDED" }
    ));
    out
}
