//! Scratch diagnostic: per-branch classification quality on train vs test.

use idn::{
    classification_map, generate, score_pair, ForwardOptions, IdnModel, ModelConfig,
    ScoreOptions, SynthConfig,
};

fn branch_map(
    model: &IdnModel,
    data: &idn::data::Dataset,
    opts: &ScoreOptions,
    pick: &str,
    limit: usize,
) -> idn::Result<f64> {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for pair in data.pairs().iter().take(limit) {
        let s = score_pair(model, data, pair, opts)?;
        let row = match pick {
            "u" => s.p_u.clone().unwrap(),
            "ho" => s.p_ho.clone().unwrap(),
            "ae" => s.p_ae.clone().unwrap(),
            _ => s.p_v.clone(),
        };
        scores.push(row);
        labels.push(pair.verbs.clone());
    }
    Ok(classification_map(&scores, &labels)?.mean.unwrap_or(f64::NAN))
}

fn main() -> idn::Result<()> {
    let sc = SynthConfig::desk_default(11);
    let out = generate(&sc)?;
    let mc = ModelConfig::synthetic_default(sc.n_verbs);
    let dir = std::env::temp_dir().join("idn-train-synthetic");
    let opts = ScoreOptions::default();
    for ckpt in ["ae.ckpt", "idn.ckpt", "idn_ipt.ckpt"] {
        let model = IdnModel::load(&mc, &dir.join(ckpt))?;
        println!("== {ckpt}");
        for pick in ["u", "ho", "ae", "mix"] {
            if ckpt == "ae.ckpt" && pick != "ae" {
                continue;
            }
            let test = branch_map(&model, &out.test, &opts, pick, usize::MAX)?;
            let train = branch_map(&model, &out.train, &opts, pick, 400)?;
            println!("  {pick:>3}: test {test:.4}  train(400) {train:.4}");
        }
    }
    // Distances of one test pair under the final model.
    let model = IdnModel::load(&mc, &dir.join("idn_ipt.ckpt"))?;
    for pair in out.test.pairs().iter().take(4) {
        let s = score_pair(&model, &out.test, pair, &opts)?;
        let verbs: Vec<usize> = pair
            .verbs
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(|(i, _)| i)
            .collect();
        println!(
            "labels {:?} d_u {:?}",
            verbs,
            s.d_u
                .as_ref()
                .unwrap()
                .iter()
                .map(|d| (d * 100.0).round() / 100.0)
                .collect::<Vec<_>>()
        );
    }
    let _ = ForwardOptions::default();
    Ok(())
}
