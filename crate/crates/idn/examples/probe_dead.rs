//! Scratch diagnostic: is the encoder hidden layer dead, and since when?

use idn::{generate, IdnModel, ModelConfig, PairInputs, SynthConfig, Tape};

fn hidden_stats(model: &IdnModel, x: &[f64]) -> (usize, usize, f64) {
    let w = model.params.get("ae.enc.0.w").unwrap();
    let b = model.params.get("ae.enc.0.b").unwrap();
    let rows = b.data().len();
    let cols = x.len();
    let mut alive = 0;
    let mut max_pre = f64::NEG_INFINITY;
    for r in 0..rows {
        let mut acc = b.data()[r];
        for c in 0..cols {
            acc += w.data()[r * cols + c] * x[c];
        }
        if acc > 0.0 {
            alive += 1;
        }
        max_pre = max_pre.max(acc);
    }
    (alive, rows, max_pre)
}

fn main() -> idn::Result<()> {
    let sc = SynthConfig::desk_default(11);
    let out = generate(&sc)?;
    let mc = ModelConfig::synthetic_default(sc.n_verbs);
    let dir = std::env::temp_dir().join("idn-train-synthetic");
    for ckpt in ["ae.ckpt", "idn.ckpt"] {
        let model = IdnModel::load(&mc, &dir.join(ckpt))?;
        println!("== {ckpt}");
        for (i, pair) in out.test.pairs().iter().take(3).enumerate() {
            let mut tape = Tape::new();
            let binding = model.bind(&mut tape);
            let inputs = PairInputs::from_pair(&out.test, pair, None, None)?;
            let asm = model.assemble(&mut tape, &binding, &inputs)?;
            let x = tape.value(asm.f_hat_u).data().to_vec();
            let (alive, total, max_pre) = hidden_stats(&model, &x);
            let f_u = model.encode(&mut tape, &binding, asm.f_hat_u)?;
            let code = tape.value(f_u).data();
            println!(
                "pair {i}: alive {alive}/{total} max_pre {max_pre:8.4} code[0..3] {:?}",
                &code[..3]
            );
            if i == 0 {
                println!(
                    "  f_hat_u[0..6] {:?}",
                    x[..6].iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>()
                );
                println!(
                    "  f_hat_u[16..22] {:?}",
                    x[16..22].iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>()
                );
            }
        }
    }
    Ok(())
}
