//! Scratch diagnostic: parameter norms per checkpoint and raw code values.

use idn::{generate, IdnModel, ModelConfig, PairInputs, SynthConfig, Tape};

fn main() -> idn::Result<()> {
    let sc = SynthConfig::desk_default(11);
    let out = generate(&sc)?;
    let mc = ModelConfig::synthetic_default(sc.n_verbs);
    let dir = std::env::temp_dir().join("idn-train-synthetic");
    for ckpt in ["ae.ckpt", "idn.ckpt", "idn_ipt.ckpt"] {
        let model = IdnModel::load(&mc, &dir.join(ckpt))?;
        println!("== {ckpt}");
        for name in ["ae.enc.0.w", "ae.enc.1.w", "verb.0.ti.0.w", "verb.0.ti.1.w", "ae.cls.0.w", "cls.u.bias"] {
            let t = model.params.get(name).unwrap();
            let norm = t.data().iter().map(|x| x * x).sum::<f64>().sqrt();
            let maxabs = t.data().iter().fold(0.0f64, |m, x| m.max(x.abs()));
            println!("  {name:<14} l2 {norm:10.3}  max|x| {maxabs:8.3}");
        }
    }
    let model = IdnModel::load(&mc, &dir.join("idn_ipt.ckpt"))?;
    for (i, pair) in out.test.pairs().iter().take(3).enumerate() {
        let mut tape = Tape::new();
        let binding = model.bind(&mut tape);
        let inputs = PairInputs::from_pair(&out.test, pair, None, None)?;
        let asm = model.assemble(&mut tape, &binding, &inputs)?;
        let f_u = model.encode(&mut tape, &binding, asm.f_hat_u)?;
        let f_hat_ho = tape.concat(asm.f_hat_h, asm.f_hat_o)?;
        let f_ho = model.encode(&mut tape, &binding, f_hat_ho)?;
        let ti = model.integrate(&mut tape, &binding, f_ho)?;
        let round =
            |v: &[f64]| v.iter().map(|x| (x * 1000.0).round() / 1000.0).collect::<Vec<_>>();
        println!("pair {i} f_u    {:?}", round(tape.value(f_u).data()));
        println!("pair {i} f_ho   {:?}", round(tape.value(f_ho).data()));
        println!("pair {i} ti[0]  {:?}", round(tape.value(ti[0]).data()));
    }
    Ok(())
}
