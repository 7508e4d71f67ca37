//! Scratch diagnostic: watch encoder liveness and gradient scale through
//! the first fine-tune steps.

use idn::objectives::{total_loss, BatchLabels, LossToggles};
use idn::trainer::{build_batch, phase_rng};
use idn::{
    generate, ForwardOptions, IdnModel, ModelConfig, PairInputs, SynthConfig, Tape, TrainConfig,
};

fn alive(model: &IdnModel, x: &[f64]) -> usize {
    let w = model.params.get("ae.enc.0.w").unwrap();
    let b = model.params.get("ae.enc.0.b").unwrap();
    let rows = b.data().len();
    let cols = x.len();
    (0..rows)
        .filter(|&r| {
            let mut acc = b.data()[r];
            for c in 0..cols {
                acc += w.data()[r * cols + c] * x[c];
            }
            acc > 0.0
        })
        .count()
}

fn main() -> idn::Result<()> {
    let sc = SynthConfig::desk_default(11);
    let out = generate(&sc)?;
    let data = out.train;
    let mc = ModelConfig::synthetic_default(sc.n_verbs);
    let dir = std::env::temp_dir().join("idn-train-synthetic");
    let mut model = IdnModel::load(&mc, &dir.join("ae.ckpt"))?;
    let cfg = TrainConfig::desk_default(17);
    let mut rng = phase_rng(cfg.seed, 2);
    model.params.reset_velocity();

    // A fixed probe input for liveness checks.
    let probe_x = {
        let mut tape = Tape::new();
        let binding = model.bind(&mut tape);
        let inputs = PairInputs::from_pair(&data, &data.pairs()[0], None, None)?;
        let asm = model.assemble(&mut tape, &binding, &inputs)?;
        tape.value(asm.f_hat_u).data().to_vec()
    };

    for step in 0..80 {
        let batch = build_batch(&data, cfg.idn_batch.0, cfg.idn_batch.1, &mut rng)?;
        let mut tape = Tape::new();
        let binding = model.bind(&mut tape);
        let mut forwards = Vec::new();
        let mut rows = Vec::new();
        for &idx in &batch {
            let pair = &data.pairs()[idx];
            let inputs = PairInputs::from_pair(&data, pair, None, None)?;
            forwards.push(model.forward_pair(&mut tape, &binding, &inputs, &ForwardOptions::default())?);
            rows.push(pair.verbs.clone());
        }
        let labels = BatchLabels::new(rows)?;
        if step == 0 {
            let mut ds: Vec<f64> = Vec::new();
            for f in &forwards {
                for &v in &f.d_u {
                    ds.push(tape.scalar_value(v)?);
                }
            }
            ds.sort_by(|a, b| a.partial_cmp(b).unwrap());
            println!(
                "d_u at start: min {:.3} median {:.3} mean {:.3} max {:.3}",
                ds[0],
                ds[ds.len() / 2],
                ds.iter().sum::<f64>() / ds.len() as f64,
                ds[ds.len() - 1]
            );
        }
        let (total, report) = total_loss(&mut tape, &binding, &forwards, &labels, &LossToggles::all())?;
        let grads = model.params.complete_grads(tape.param_grads(total)?)?;
        let gnorm = |name: &str| {
            grads.get(name).map(|t| t.data().iter().map(|x| x * x).sum::<f64>().sqrt()).unwrap_or(-1.0)
        };
        if step < 25 || step % 10 == 0 {
            println!(
                "step {step:3} total {:7.3} hinge {:6.3}/{:6.3} alive {:2} |g enc0| {:8.3} |g ti0| {:8.3}",
                report.total,
                report.u_hinge,
                report.ho_hinge,
                alive(&model, &probe_x),
                gnorm("ae.enc.0.w"),
                gnorm("verb.0.ti.0.w"),
            );
        }
        model.params.sgd_step(&grads, cfg.idn_lr, cfg.momentum)?;
    }
    Ok(())
}
