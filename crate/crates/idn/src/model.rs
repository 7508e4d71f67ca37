//! The analysis model: location encoders, shared feature autoencoder,
//! per-verb integration/decomposition transforms, and the shared
//! interactiveness head, all parameterized in one named [`ParamSet`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

use crate::checkpoint;
use crate::data::{normalize_box, union_box, Dataset, FeatDims, PairSample};
use crate::error::{Error, Result};
use crate::mlp::{Mlp, MlpSpec};
use crate::optim::{ParamBinding, ParamSet};
use crate::tensor::{sigmoid, Tape, Tensor, Var};

/// Widths and verb count defining every component's shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub n_verbs: usize,
    /// Appearance feature widths `(union, human, object)`.
    pub feat_dims: FeatDims,
    /// Width of the union location feature; instances use half of it.
    pub loc_union_width: usize,
    /// Hidden width of the autoencoder.
    pub ae_hidden: usize,
    /// Code width shared by the coherent and isolated features.
    pub code_width: usize,
    /// Hidden width of each integration/decomposition transform.
    pub transform_hidden: usize,
    /// Initial value of the learnable distance-entropy biases. Starting the
    /// biases near the typical code distance of a fresh model keeps the
    /// early verb-presence sigmoids out of saturation, so positive and
    /// negative pairs pull with comparable strength from the first step
    /// instead of every verb uniformly shrinking its distances.
    pub dist_bias_init: f64,
}

impl ModelConfig {
    /// Desk-scale defaults matching the synthetic generator's widths.
    pub fn synthetic_default(n_verbs: usize) -> ModelConfig {
        ModelConfig {
            n_verbs,
            feat_dims: FeatDims { union: 16, human: 8, object: 8 },
            loc_union_width: 16,
            ae_hidden: 64,
            code_width: 24,
            transform_hidden: 24,
            dist_bias_init: 5.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_verbs == 0 {
            return Err(Error::Contract("model wants n_verbs >= 1".into()));
        }
        let d = &self.feat_dims;
        if d.union == 0
            || d.human == 0
            || self.loc_union_width == 0
            || self.ae_hidden == 0
            || self.code_width == 0
            || self.transform_hidden == 0
        {
            return Err(Error::Dimension("model widths must be nonzero".into()));
        }
        // The assembled human and object features must each be half the
        // assembled union width so the shared autoencoder accepts both the
        // union feature and the isolated concatenation.
        if d.human != d.object || d.union != d.human + d.object {
            return Err(Error::Dimension(format!(
                "appearance widths must satisfy human == object and union == human + object, got {d:?}"
            )));
        }
        if self.loc_union_width % 2 != 0 {
            return Err(Error::Dimension(format!(
                "union location width must be even, got {}",
                self.loc_union_width
            )));
        }
        if !self.dist_bias_init.is_finite() {
            return Err(Error::Config(format!(
                "distance bias init must be finite, got {}",
                self.dist_bias_init
            )));
        }
        Ok(())
    }

    pub fn loc_instance_width(&self) -> usize {
        self.loc_union_width / 2
    }

    /// Width of the assembled union feature (appearance + location), which is
    /// also the autoencoder input width.
    pub fn assembled_union_width(&self) -> usize {
        self.feat_dims.union + self.loc_union_width
    }

    pub fn assembled_instance_width(&self) -> usize {
        self.assembled_union_width() / 2
    }
}

/// Which parts of the forward pass to run; ablations switch parts off.
#[derive(Debug, Clone, Copy)]
pub struct ForwardOptions {
    pub use_integration: bool,
    pub use_decomposition: bool,
    /// Feed the decomposition transforms the real union code instead of the
    /// integrated outputs (breaks the integrate-then-decompose loop).
    pub direct_decomposition: bool,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        ForwardOptions {
            use_integration: true,
            use_decomposition: true,
            direct_decomposition: false,
        }
    }
}

/// Value-level inputs for one pair's forward pass.
///
/// Instance parts may come from exchanged instances; the union parts always
/// belong to the original pair.
#[derive(Debug, Clone)]
pub struct PairInputs {
    pub f_a_h: Tensor,
    pub f_a_o: Tensor,
    pub f_a_u: Tensor,
    pub nb_h: [f64; 4],
    pub nb_o: [f64; 4],
    /// Normalized (human box, object box) of the original pair, feeding the
    /// union location encoder.
    pub nb_u: ([f64; 4], [f64; 4]),
}

impl PairInputs {
    /// Gather features for `pair`, optionally substituting the human and/or
    /// object instance by dataset index (instance exchange). Union appearance
    /// and union location stay the original pair's.
    pub fn from_pair(
        dataset: &Dataset,
        pair: &PairSample,
        human_override: Option<usize>,
        object_override: Option<usize>,
    ) -> Result<PairInputs> {
        let orig_h = dataset.human_of(pair);
        let orig_o = dataset.object_of(pair);
        let human = match human_override {
            Some(idx) => &dataset.instances()[idx],
            None => orig_h,
        };
        let object = match object_override {
            Some(idx) => &dataset.instances()[idx],
            None => orig_o,
        };
        Ok(PairInputs {
            f_a_h: human.feature.clone(),
            f_a_o: object.feature.clone(),
            f_a_u: pair.union_feature.clone(),
            nb_h: normalize_box(&human.bbox, human.image_w, human.image_h)?,
            nb_o: normalize_box(&object.bbox, object.image_w, object.image_h)?,
            nb_u: (
                normalize_box(&orig_h.bbox, orig_h.image_w, orig_h.image_h)?,
                normalize_box(&orig_o.bbox, orig_o.image_w, orig_o.image_h)?,
            ),
        })
    }

    /// The original pair's union box in pixel coordinates.
    pub fn union_bbox(dataset: &Dataset, pair: &PairSample) -> crate::data::BoundingBox {
        union_box(&dataset.human_of(pair).bbox, &dataset.object_of(pair).bbox)
    }
}

/// Assembled (appearance + location) features on the tape.
pub struct AssembledFeatures {
    pub f_hat_u: Var,
    pub f_hat_h: Var,
    pub f_hat_o: Var,
}

/// Full single-pair forward trace.
pub struct PairForward {
    pub f_hat_u: Var,
    pub f_hat_ho: Var,
    /// Coherent code of the union feature.
    pub f_u: Var,
    /// Isolated code of the concatenated human/object feature.
    pub f_ho: Var,
    pub recon: Var,
    pub ae_logits: Var,
    pub integrated: Vec<Var>,
    pub decomposed: Vec<Var>,
    pub d_u: Vec<Var>,
    pub d_ho: Vec<Var>,
    pub inter_u: Var,
    pub inter_ho: Var,
    pub inter_integrated: Vec<Var>,
}

/// Model components plus their parameters.
#[derive(Debug, Clone)]
pub struct IdnModel {
    config: ModelConfig,
    loc_union: Mlp,
    loc_inst: Mlp,
    encoder: Mlp,
    decoder: Mlp,
    verb_head: Mlp,
    inter_head: Mlp,
    t_i: Vec<Mlp>,
    t_d: Vec<Mlp>,
    pub params: ParamSet,
}

impl IdnModel {
    fn components(config: &ModelConfig) -> Result<IdnModel> {
        config.validate()?;
        let lu = config.loc_union_width;
        let li = config.loc_instance_width();
        let enc_in = config.assembled_union_width();
        let code = config.code_width;
        let th = config.transform_hidden;
        let mut t_i = Vec::with_capacity(config.n_verbs);
        let mut t_d = Vec::with_capacity(config.n_verbs);
        for verb in 0..config.n_verbs {
            t_i.push(Mlp::new(format!("verb.{verb}.ti"), MlpSpec::new(vec![code, th, code])?));
            t_d.push(Mlp::new(format!("verb.{verb}.td"), MlpSpec::new(vec![code, th, code])?));
        }
        Ok(IdnModel {
            config: *config,
            loc_union: Mlp::new("loc.union", MlpSpec::new(vec![8, lu, lu])?),
            loc_inst: Mlp::new("loc.inst", MlpSpec::new(vec![4, li, li])?),
            encoder: Mlp::new("ae.enc", MlpSpec::new(vec![enc_in, config.ae_hidden, code])?),
            decoder: Mlp::new("ae.dec", MlpSpec::new(vec![code, config.ae_hidden, enc_in])?),
            verb_head: Mlp::new("ae.cls", MlpSpec::new(vec![code, config.n_verbs])?),
            inter_head: Mlp::new("inter.head", MlpSpec::new(vec![code, 1])?),
            t_i,
            t_d,
            params: ParamSet::new(),
        })
    }

    /// Initialize all parameters from a seed.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<IdnModel> {
        let mut model = Self::components(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        model.loc_union.register(&mut rng, &mut params)?;
        model.loc_inst.register(&mut rng, &mut params)?;
        model.encoder.register(&mut rng, &mut params)?;
        model.decoder.register(&mut rng, &mut params)?;
        model.verb_head.register(&mut rng, &mut params)?;
        for verb in 0..config.n_verbs {
            model.t_i[verb].register(&mut rng, &mut params)?;
            model.t_d[verb].register(&mut rng, &mut params)?;
        }
        model.inter_head.register(&mut rng, &mut params)?;
        // Learnable per-verb biases of the distance-entropy losses.
        let bias = Tensor::from_vec(vec![config.dist_bias_init; config.n_verbs])?;
        params.insert("cls.u.bias", bias.clone())?;
        params.insert("cls.ho.bias", bias)?;
        model.params = params;
        Ok(model)
    }

    /// Every parameter name and shape this config implies, in checkpoint
    /// (name) order.
    pub fn expected_param_shapes(config: &ModelConfig) -> Result<Vec<(String, Vec<usize>)>> {
        let model = Self::components(config)?;
        let mut shapes = Vec::new();
        shapes.extend(model.loc_union.param_shapes());
        shapes.extend(model.loc_inst.param_shapes());
        shapes.extend(model.encoder.param_shapes());
        shapes.extend(model.decoder.param_shapes());
        shapes.extend(model.verb_head.param_shapes());
        for verb in 0..config.n_verbs {
            shapes.extend(model.t_i[verb].param_shapes());
            shapes.extend(model.t_d[verb].param_shapes());
        }
        shapes.extend(model.inter_head.param_shapes());
        shapes.push(("cls.u.bias".to_string(), vec![config.n_verbs]));
        shapes.push(("cls.ho.bias".to_string(), vec![config.n_verbs]));
        shapes.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(shapes)
    }

    /// Wrap an existing parameter set, validating names and shapes exactly.
    pub fn from_params(config: &ModelConfig, params: ParamSet) -> Result<IdnModel> {
        let mut model = Self::components(config)?;
        let expected = Self::expected_param_shapes(config)?;
        if params.len() != expected.len() {
            return Err(Error::Dimension(format!(
                "parameter set has {} entries, model wants {}",
                params.len(),
                expected.len()
            )));
        }
        for (name, shape) in &expected {
            let got = params
                .get(name)
                .ok_or_else(|| Error::Dimension(format!("missing parameter {name}")))?;
            if got.shape() != shape.as_slice() {
                return Err(Error::Dimension(format!(
                    "parameter {name}: shape {:?}, want {shape:?}",
                    got.shape()
                )));
            }
        }
        model.params = params;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(&self.params, path)
    }

    pub fn load(config: &ModelConfig, path: &Path) -> Result<IdnModel> {
        Self::from_params(config, checkpoint::load(path)?)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn bind(&self, tape: &mut Tape) -> ParamBinding {
        self.params.bind(tape)
    }

    // ── location encoding and assembly ──

    /// Union location feature from the normalized (human, object) boxes.
    pub fn location_union(
        &self,
        tape: &mut Tape,
        binding: &ParamBinding,
        nb: &([f64; 4], [f64; 4]),
    ) -> Result<Var> {
        let mut coords = Vec::with_capacity(8);
        coords.extend_from_slice(&nb.0);
        coords.extend_from_slice(&nb.1);
        let x = tape.constant(Tensor::from_vec(coords)?);
        self.loc_union.forward(tape, binding, x)
    }

    /// Instance location feature from one normalized box.
    pub fn location_instance(
        &self,
        tape: &mut Tape,
        binding: &ParamBinding,
        nb: &[f64; 4],
    ) -> Result<Var> {
        let x = tape.constant(Tensor::from_vec(nb.to_vec())?);
        self.loc_inst.forward(tape, binding, x)
    }

    /// Concatenate appearance and location features for one pair.
    pub fn assemble(
        &self,
        tape: &mut Tape,
        binding: &ParamBinding,
        inputs: &PairInputs,
    ) -> Result<AssembledFeatures> {
        let f_b_u = self.location_union(tape, binding, &inputs.nb_u)?;
        let f_b_h = self.location_instance(tape, binding, &inputs.nb_h)?;
        let f_b_o = self.location_instance(tape, binding, &inputs.nb_o)?;
        let f_a_u = tape.constant(inputs.f_a_u.clone());
        let f_a_h = tape.constant(inputs.f_a_h.clone());
        let f_a_o = tape.constant(inputs.f_a_o.clone());
        let f_hat_u = tape.concat(f_a_u, f_b_u)?;
        let f_hat_h = tape.concat(f_a_h, f_b_h)?;
        let f_hat_o = tape.concat(f_a_o, f_b_o)?;
        let wu = tape.value(f_hat_u).len();
        let wh = tape.value(f_hat_h).len();
        let wo = tape.value(f_hat_o).len();
        if wh != wo || wu != wh + wo {
            return Err(Error::Dimension(format!(
                "assembled widths {wu}/{wh}/{wo} break the half-width contract"
            )));
        }
        Ok(AssembledFeatures { f_hat_u, f_hat_h, f_hat_o })
    }

    // ── autoencoder ──

    /// Compress an assembled feature (union or isolated concat) to a code.
    pub fn encode(&self, tape: &mut Tape, binding: &ParamBinding, f_hat: Var) -> Result<Var> {
        self.encoder.forward(tape, binding, f_hat)
    }

    /// Reconstruct an assembled feature from a code.
    pub fn decode(&self, tape: &mut Tape, binding: &ParamBinding, code: Var) -> Result<Var> {
        self.decoder.forward(tape, binding, code)
    }

    /// Verb logits of the autoencoder classification head.
    pub fn verb_logits(&self, tape: &mut Tape, binding: &ParamBinding, code: Var) -> Result<Var> {
        self.verb_head.forward(tape, binding, code)
    }

    /// Reconstruction and verb-classification losses of the autoencoder on
    /// one assembled union feature, plus the verb logits.
    pub fn ae_losses(
        &self,
        tape: &mut Tape,
        binding: &ParamBinding,
        f_hat_u: Var,
        verbs: &[bool],
    ) -> Result<(Var, Var, Var)> {
        if verbs.len() != self.config.n_verbs {
            return Err(Error::Dimension(format!(
                "ae_losses got {} labels, model has {} verbs",
                verbs.len(),
                self.config.n_verbs
            )));
        }
        let code = self.encode(tape, binding, f_hat_u)?;
        let recon = self.decode(tape, binding, code)?;
        let l_recon = tape.mse_mean(recon, f_hat_u)?;
        let logits = self.verb_logits(tape, binding, code)?;
        let targets: Vec<f64> = verbs.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
        let l_cls = tape.bce_logits_mean(logits, &targets)?;
        Ok((l_recon, l_cls, logits))
    }

    // ── per-verb transforms ──

    /// Integrated union features, one per verb, from the isolated code.
    pub fn integrate(
        &self,
        tape: &mut Tape,
        binding: &ParamBinding,
        f_ho: Var,
    ) -> Result<Vec<Var>> {
        self.t_i
            .iter()
            .map(|t| t.forward(tape, binding, f_ho))
            .collect()
    }

    /// Decomposed isolated features, one per verb. `sources` carries one
    /// input per verb (the integrated outputs in loop order, or n copies of
    /// the union code for the direct variant).
    pub fn decompose(
        &self,
        tape: &mut Tape,
        binding: &ParamBinding,
        sources: &[Var],
    ) -> Result<Vec<Var>> {
        if sources.len() != self.config.n_verbs {
            return Err(Error::Dimension(format!(
                "decompose got {} sources for {} verbs",
                sources.len(),
                self.config.n_verbs
            )));
        }
        self.t_d
            .iter()
            .zip(sources)
            .map(|(t, &src)| t.forward(tape, binding, src))
            .collect()
    }

    /// Interactiveness logit of any code-width feature (shared parameters).
    pub fn interactiveness_logit(
        &self,
        tape: &mut Tape,
        binding: &ParamBinding,
        f: Var,
    ) -> Result<Var> {
        self.inter_head.forward(tape, binding, f)
    }

    /// Interactiveness probability on a plain tensor.
    pub fn interactiveness_prob(&self, f: &Tensor) -> Result<f64> {
        let logit = self.inter_head.forward_tensor(&self.params, f)?;
        Ok(sigmoid(logit.data()[0]))
    }

    // ── full pair forward ──

    pub fn forward_pair(
        &self,
        tape: &mut Tape,
        binding: &ParamBinding,
        inputs: &PairInputs,
        opts: &ForwardOptions,
    ) -> Result<PairForward> {
        let assembled = self.assemble(tape, binding, inputs)?;
        let f_hat_ho = tape.concat(assembled.f_hat_h, assembled.f_hat_o)?;
        let f_u = self.encode(tape, binding, assembled.f_hat_u)?;
        let f_ho = self.encode(tape, binding, f_hat_ho)?;
        let recon = self.decode(tape, binding, f_u)?;
        let ae_logits = self.verb_logits(tape, binding, f_u)?;

        let integrated = if opts.use_integration {
            self.integrate(tape, binding, f_ho)?
        } else {
            Vec::new()
        };
        let decomposed = if opts.use_decomposition {
            let sources: Vec<Var> = if opts.use_integration && !opts.direct_decomposition {
                integrated.clone()
            } else {
                vec![f_u; self.config.n_verbs]
            };
            self.decompose(tape, binding, &sources)?
        } else {
            Vec::new()
        };

        let d_u = feature_distances(tape, f_u, &integrated)?;
        let d_ho = feature_distances(tape, f_ho, &decomposed)?;

        let inter_u = self.interactiveness_logit(tape, binding, f_u)?;
        let inter_ho = self.interactiveness_logit(tape, binding, f_ho)?;
        let mut inter_integrated = Vec::with_capacity(integrated.len());
        for &fi in &integrated {
            inter_integrated.push(self.interactiveness_logit(tape, binding, fi)?);
        }

        Ok(PairForward {
            f_hat_u: assembled.f_hat_u,
            f_hat_ho,
            f_u,
            f_ho,
            recon,
            ae_logits,
            integrated,
            decomposed,
            d_u,
            d_ho,
            inter_u,
            inter_ho,
            inter_integrated,
        })
    }
}

/// Euclidean distances from `anchor` to each per-verb feature.
pub fn feature_distances(tape: &mut Tape, anchor: Var, per_verb: &[Var]) -> Result<Vec<Var>> {
    let mut out = Vec::with_capacity(per_verb.len());
    for &f in per_verb {
        let diff = tape.sub(anchor, f)?;
        out.push(tape.norm2(diff)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{BoundingBox, Instance, InstanceKind};

    fn desk_config(n_verbs: usize) -> ModelConfig {
        ModelConfig::synthetic_default(n_verbs)
    }

    fn tiny_inputs(config: &ModelConfig) -> PairInputs {
        let d = config.feat_dims;
        PairInputs {
            f_a_h: Tensor::from_vec((0..d.human).map(|i| 0.1 * i as f64).collect()).unwrap(),
            f_a_o: Tensor::from_vec((0..d.object).map(|i| -0.05 * i as f64).collect()).unwrap(),
            f_a_u: Tensor::from_vec((0..d.union).map(|i| 0.02 * i as f64).collect()).unwrap(),
            nb_h: [0.1, 0.1, 0.4, 0.9],
            nb_o: [0.3, 0.2, 0.8, 0.7],
            nb_u: ([0.1, 0.1, 0.4, 0.9], [0.3, 0.2, 0.8, 0.7]),
        }
    }

    // Set one MLP layer's weights to zero and its bias to the given values.
    fn zero_layer(params: &mut ParamSet, prefix: &str, layer: usize, bias: &[f64]) {
        let wname = format!("{prefix}.{layer}.w");
        let shape = params.get(&wname).unwrap().shape().to_vec();
        params.set(&wname, Tensor::zeros(&shape)).unwrap();
        params
            .set(&format!("{prefix}.{layer}.b"), Tensor::from_vec(bias.to_vec()).unwrap())
            .unwrap();
    }

    #[test]
    fn config_invariants_are_enforced() {
        let mut c = desk_config(3);
        assert!(c.validate().is_ok());
        c.feat_dims.human = 6; // breaks union == human + object
        assert!(matches!(c.validate(), Err(Error::Dimension(_))));
        let mut c = desk_config(3);
        c.loc_union_width = 15;
        assert!(c.validate().is_err());
        let mut c = desk_config(3);
        c.n_verbs = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn init_is_seed_deterministic() {
        let c = desk_config(4);
        let a = IdnModel::init(&c, 9).unwrap();
        let b = IdnModel::init(&c, 9).unwrap();
        for ((na, ta), (nb, tb)) in a.params.iter().zip(b.params.iter()) {
            assert_eq!(na, nb);
            assert_eq!(ta.data(), tb.data());
        }
        let c2 = IdnModel::init(&c, 10).unwrap();
        assert_ne!(
            a.params.get("ae.enc.0.w").unwrap().data(),
            c2.params.get("ae.enc.0.w").unwrap().data()
        );
    }

    #[test]
    fn param_names_follow_checkpoint_conventions() {
        let c = desk_config(2);
        let model = IdnModel::init(&c, 0).unwrap();
        for want in [
            "ae.enc.0.w",
            "ae.enc.1.b",
            "ae.dec.0.w",
            "ae.cls.0.w",
            "verb.0.ti.0.w",
            "verb.1.td.1.b",
            "inter.head.0.w",
            "loc.union.0.w",
            "loc.inst.1.b",
            "cls.u.bias",
            "cls.ho.bias",
        ] {
            assert!(model.params.get(want).is_some(), "missing {want}");
        }
    }

    #[test]
    fn assemble_widths_hold_for_desk_and_paper_configs() {
        // Desk widths: 16+16 union, 8+8 instances -> 32 and 16/16.
        let c = desk_config(2);
        let model = IdnModel::init(&c, 1).unwrap();
        let mut tape = Tape::new();
        let binding = model.bind(&mut tape);
        let asm = model.assemble(&mut tape, &binding, &tiny_inputs(&c)).unwrap();
        assert_eq!(tape.value(asm.f_hat_u).len(), 32);
        assert_eq!(tape.value(asm.f_hat_h).len(), 16);
        assert_eq!(tape.value(asm.f_hat_o).len(), 16);

        // Production-scale widths: 2048+2560 union and 1024+1280 instances
        // give a 4608-wide assembled union compressing to a 1024-wide code.
        let big = ModelConfig {
            n_verbs: 1,
            feat_dims: FeatDims { union: 2048, human: 1024, object: 1024 },
            loc_union_width: 2560,
            ae_hidden: 4096,
            code_width: 1024,
            transform_hidden: 8,
            dist_bias_init: 0.0,
        };
        let model = IdnModel::init(&big, 1).unwrap();
        let mut tape = Tape::new();
        let binding = model.bind(&mut tape);
        let inputs = tiny_inputs(&big);
        let asm = model.assemble(&mut tape, &binding, &inputs).unwrap();
        assert_eq!(tape.value(asm.f_hat_u).len(), 4608);
        assert_eq!(tape.value(asm.f_hat_h).len(), 2304);
        let code = model.encode(&mut tape, &binding, asm.f_hat_u).unwrap();
        assert_eq!(tape.value(code).len(), 1024);
    }

    #[test]
    fn encoder_accepts_union_and_isolated_interchangeably() {
        let c = desk_config(2);
        let model = IdnModel::init(&c, 5).unwrap();
        let mut tape = Tape::new();
        let binding = model.bind(&mut tape);
        let asm = model.assemble(&mut tape, &binding, &tiny_inputs(&c)).unwrap();
        let iso = tape.concat(asm.f_hat_h, asm.f_hat_o).unwrap();
        let cu = model.encode(&mut tape, &binding, asm.f_hat_u).unwrap();
        let ciso = model.encode(&mut tape, &binding, iso).unwrap();
        assert_eq!(tape.value(cu).len(), c.code_width);
        assert_eq!(tape.value(ciso).len(), c.code_width);
    }

    #[test]
    fn zeroed_encoder_returns_final_bias() {
        let c = desk_config(2);
        let mut model = IdnModel::init(&c, 3).unwrap();
        zero_layer(&mut model.params, "ae.enc", 0, &vec![0.0; c.ae_hidden]);
        let bias: Vec<f64> = (0..c.code_width).map(|i| 0.25 + i as f64).collect();
        zero_layer(&mut model.params, "ae.enc", 1, &bias);
        let mut tape = Tape::new();
        let binding = model.bind(&mut tape);
        let asm = model.assemble(&mut tape, &binding, &tiny_inputs(&c)).unwrap();
        let code = model.encode(&mut tape, &binding, asm.f_hat_u).unwrap();
        assert_eq!(tape.value(code).data(), bias.as_slice());
    }

    #[test]
    fn zeroed_location_encoder_returns_bias() {
        let c = desk_config(2);
        let mut model = IdnModel::init(&c, 3).unwrap();
        zero_layer(&mut model.params, "loc.union", 0, &vec![0.0; c.loc_union_width]);
        let bias: Vec<f64> = (0..c.loc_union_width).map(|i| i as f64 * 0.5).collect();
        zero_layer(&mut model.params, "loc.union", 1, &bias);
        let mut tape = Tape::new();
        let binding = model.bind(&mut tape);
        let inputs = tiny_inputs(&c);
        let f_b_u = model.location_union(&mut tape, &binding, &inputs.nb_u).unwrap();
        assert_eq!(tape.value(f_b_u).data(), bias.as_slice());
        // Instance encoder output is half the union width by construction.
        let f_b_h = model.location_instance(&mut tape, &binding, &inputs.nb_h).unwrap();
        assert_eq!(tape.value(f_b_h).len(), c.loc_union_width / 2);
    }

    #[test]
    fn decoder_mirrors_encoder_and_zero_decoder_gives_bias() {
        let c = desk_config(2);
        let mut model = IdnModel::init(&c, 7).unwrap();
        let enc_in = c.assembled_union_width();
        zero_layer(&mut model.params, "ae.dec", 0, &vec![0.0; c.ae_hidden]);
        let bias: Vec<f64> = (0..enc_in).map(|i| -(i as f64)).collect();
        zero_layer(&mut model.params, "ae.dec", 1, &bias);
        let mut tape = Tape::new();
        let binding = model.bind(&mut tape);
        let code = tape.constant(Tensor::from_vec(vec![0.5; c.code_width]).unwrap());
        let recon = model.decode(&mut tape, &binding, code).unwrap();
        assert_eq!(tape.value(recon).len(), enc_in);
        assert_eq!(tape.value(recon).data(), bias.as_slice());
    }

    #[test]
    fn tiny_ae_overfits_single_vector() {
        // A small code can memorize one target: reconstruction MSE < 1e-4
        // after a short momentum-SGD run.
        let c = ModelConfig {
            n_verbs: 2,
            feat_dims: FeatDims { union: 4, human: 2, object: 2 },
            loc_union_width: 2,
            ae_hidden: 6,
            code_width: 4,
            transform_hidden: 4,
            dist_bias_init: 0.0,
        };
        let mut model = IdnModel::init(&c, 13).unwrap();
        let target = Tensor::from_vec(vec![0.8, -0.3, 0.5, 0.1, -0.6, 0.9]).unwrap();
        let mut last = f64::INFINITY;
        for _ in 0..400 {
            let mut tape = Tape::new();
            let binding = model.params.bind(&mut tape);
            let x = tape.constant(target.clone());
            let code = model.encode(&mut tape, &binding, x).unwrap();
            let recon = model.decode(&mut tape, &binding, code).unwrap();
            let loss = tape.mse_mean(recon, x).unwrap();
            last = tape.scalar_value(loss).unwrap();
            let grads = model.params.complete_grads(tape.param_grads(loss).unwrap()).unwrap();
            model.params.sgd_step(&grads, 0.05, 0.9).unwrap();
        }
        assert!(last < 1e-4, "final reconstruction MSE {last}");
    }

    #[test]
    fn ae_losses_analytic_cases() {
        let c = desk_config(4);
        let mut model = IdnModel::init(&c, 2).unwrap();
        // Zero verb head -> logits 0 -> L_cls = ln 2 regardless of labels.
        zero_layer(&mut model.params, "ae.cls", 0, &vec![0.0; c.n_verbs]);
        let mut tape = Tape::new();
        let binding = model.bind(&mut tape);
        let asm = model.assemble(&mut tape, &binding, &tiny_inputs(&c)).unwrap();
        let (recon, cls, logits) = model
            .ae_losses(&mut tape, &binding, asm.f_hat_u, &[true, false, true, false])
            .unwrap();
        assert!((tape.scalar_value(cls).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(tape.value(logits).len(), 4);
        assert!(tape.scalar_value(recon).unwrap() >= 0.0);
        // Label-length mismatch is a dimension error.
        let mut tape = Tape::new();
        let binding = model.bind(&mut tape);
        let asm = model.assemble(&mut tape, &binding, &tiny_inputs(&c)).unwrap();
        assert!(model
            .ae_losses(&mut tape, &binding, asm.f_hat_u, &[true])
            .is_err());
    }

    #[test]
    fn integrate_with_constructed_weights_copies_first_half() {
        // With hidden [I; -I] and output rows picking relu(x) - relu(-x) for
        // the first half (zeros for the second), integration returns
        // [first half of the isolated code, 0].
        let c = ModelConfig {
            n_verbs: 1,
            feat_dims: FeatDims { union: 16, human: 8, object: 8 },
            loc_union_width: 16,
            ae_hidden: 16,
            code_width: 4,
            transform_hidden: 8,
            dist_bias_init: 0.0,
        };
        let mut model = IdnModel::init(&c, 4).unwrap();
        let code = c.code_width;
        let hidden = 2 * code;
        let mut w0 = vec![0.0; hidden * code];
        for i in 0..code {
            w0[i * code + i] = 1.0;
            w0[(code + i) * code + i] = -1.0;
        }
        let mut w1 = vec![0.0; code * hidden];
        for i in 0..code / 2 {
            w1[i * hidden + i] = 1.0;
            w1[i * hidden + code + i] = -1.0;
        }
        model
            .params
            .set("verb.0.ti.0.w", Tensor::new(vec![hidden, code], w0).unwrap())
            .unwrap();
        model.params.set("verb.0.ti.0.b", Tensor::zeros(&[hidden])).unwrap();
        model
            .params
            .set("verb.0.ti.1.w", Tensor::new(vec![code, hidden], w1).unwrap())
            .unwrap();
        model.params.set("verb.0.ti.1.b", Tensor::zeros(&[code])).unwrap();

        let mut tape = Tape::new();
        let binding = model.bind(&mut tape);
        let f_ho = tape.constant(Tensor::from_vec(vec![0.7, -0.4, 0.9, -0.2]).unwrap());
        let out = model.integrate(&mut tape, &binding, f_ho).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(tape.value(out[0]).data(), &[0.7, -0.4, 0.0, 0.0]);
    }

    #[test]
    fn zero_weight_transforms_return_biases_per_verb() {
        let c = desk_config(3);
        let mut model = IdnModel::init(&c, 6).unwrap();
        for verb in 0..3 {
            let bias: Vec<f64> = (0..c.code_width).map(|i| verb as f64 + i as f64 * 0.1).collect();
            zero_layer(&mut model.params, &format!("verb.{verb}.ti"), 0, &vec![0.0; c.transform_hidden]);
            zero_layer(&mut model.params, &format!("verb.{verb}.ti"), 1, &bias);
        }
        let mut tape = Tape::new();
        let binding = model.bind(&mut tape);
        let f_ho = tape.constant(Tensor::from_vec(vec![1.0; c.code_width]).unwrap());
        let out = model.integrate(&mut tape, &binding, f_ho).unwrap();
        for (verb, &o) in out.iter().enumerate() {
            let want: Vec<f64> = (0..c.code_width).map(|i| verb as f64 + i as f64 * 0.1).collect();
            assert_eq!(tape.value(o).data(), want.as_slice());
        }
    }

    #[test]
    fn distances_obey_triangle_cases() {
        let mut tape = Tape::new();
        let anchor = tape.constant(Tensor::from_vec(vec![1.0, 2.0]).unwrap());
        let same = tape.constant(Tensor::from_vec(vec![1.0, 2.0]).unwrap());
        let shifted = tape.constant(Tensor::from_vec(vec![4.0, 6.0]).unwrap());
        let ds = feature_distances(&mut tape, anchor, &[same, shifted]).unwrap();
        assert_eq!(tape.scalar_value(ds[0]).unwrap(), 0.0);
        assert_eq!(tape.scalar_value(ds[1]).unwrap(), 5.0);
    }

    #[test]
    fn interactiveness_head_is_shared_and_sigmoid() {
        let c = desk_config(2);
        let mut model = IdnModel::init(&c, 8).unwrap();
        zero_layer(&mut model.params, "inter.head", 0, &[0.0]);
        let f = Tensor::from_vec(vec![0.3; c.code_width]).unwrap();
        assert_eq!(model.interactiveness_prob(&f).unwrap(), 0.5);
        // Positive weights push the probability up monotonically.
        model
            .params
            .set("inter.head.0.w", Tensor::new(vec![1, c.code_width], vec![1.0; c.code_width]).unwrap())
            .unwrap();
        let lo = model.interactiveness_prob(&f).unwrap();
        let hi = model
            .interactiveness_prob(&Tensor::from_vec(vec![0.5; c.code_width]).unwrap())
            .unwrap();
        assert!(0.5 < lo && lo < hi && hi < 1.0);
        // Exactly one head parameterization exists.
        let head_params: Vec<&String> = model
            .params
            .names()
            .filter(|n| n.starts_with("inter.head"))
            .collect();
        assert_eq!(head_params.len(), 2, "{head_params:?}");
    }

    #[test]
    fn forward_pair_wires_loop_and_direct_decomposition() {
        let c = desk_config(2);
        let model = IdnModel::init(&c, 11).unwrap();
        let inputs = tiny_inputs(&c);
        let mut tape = Tape::new();
        let binding = model.bind(&mut tape);
        let looped = model
            .forward_pair(&mut tape, &binding, &inputs, &ForwardOptions::default())
            .unwrap();
        assert_eq!(looped.integrated.len(), 2);
        assert_eq!(looped.decomposed.len(), 2);
        assert_eq!(looped.d_u.len(), 2);
        assert_eq!(looped.d_ho.len(), 2);
        assert_eq!(looped.inter_integrated.len(), 2);

        // The loop feeds integrated outputs to the decompositions; the direct
        // variant feeds the union code. They must differ for a random model.
        let direct_opts = ForwardOptions { direct_decomposition: true, ..Default::default() };
        let mut tape2 = Tape::new();
        let binding2 = model.bind(&mut tape2);
        let direct = model
            .forward_pair(&mut tape2, &binding2, &inputs, &direct_opts)
            .unwrap();
        assert_ne!(
            tape.value(looped.decomposed[0]).data(),
            tape2.value(direct.decomposed[0]).data()
        );

        // Ablation with integration off falls back to direct decomposition.
        let no_ti = ForwardOptions { use_integration: false, ..Default::default() };
        let mut tape3 = Tape::new();
        let binding3 = model.bind(&mut tape3);
        let fwd = model.forward_pair(&mut tape3, &binding3, &inputs, &no_ti).unwrap();
        assert!(fwd.integrated.is_empty() && fwd.d_u.is_empty());
        assert_eq!(
            tape3.value(fwd.decomposed[0]).data(),
            tape2.value(direct.decomposed[0]).data()
        );
    }

    #[test]
    fn checkpoint_roundtrip_restores_model() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let c = desk_config(3);
        let model = IdnModel::init(&c, 21).unwrap();
        model.save(&path).unwrap();
        let back = IdnModel::load(&c, &path).unwrap();
        assert_eq!(back.params.len(), model.params.len());
        // Values survive up to f32 rounding.
        for (name, orig) in model.params.iter() {
            let restored = back.params.get(name).unwrap();
            for (a, b) in orig.data().iter().zip(restored.data()) {
                assert_eq!(*b, *a as f32 as f64, "{name}");
            }
        }
        // A mismatched config is rejected.
        let other = desk_config(4);
        assert!(matches!(
            IdnModel::load(&other, &path),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn exchange_keeps_union_parts_of_original_pair() {
        let dims = FeatDims { union: 4, human: 2, object: 2 };
        let mk_inst = |id: u32, kind, feature: Vec<f64>, x1: f64| Instance {
            id,
            kind,
            category: if kind == InstanceKind::Human { 0 } else { 1 },
            confidence: 0.9,
            bbox: BoundingBox::new(x1, 10.0, x1 + 20.0, 40.0).unwrap(),
            image_w: 100.0,
            image_h: 100.0,
            keypoints: None,
            feature: Tensor::from_vec(feature).unwrap(),
        };
        let instances = vec![
            mk_inst(1, InstanceKind::Human, vec![1.0, 1.0], 0.0),
            mk_inst(2, InstanceKind::Object, vec![2.0, 2.0], 30.0),
            mk_inst(3, InstanceKind::Human, vec![9.0, 9.0], 60.0),
        ];
        let pair = PairSample {
            human_id: 1,
            object_id: 2,
            union_feature: Tensor::from_vec(vec![0.5; 4]).unwrap(),
            verbs: vec![true],
        };
        let ds = Dataset::new(1, dims, instances, vec![pair.clone()]).unwrap();
        let plain = PairInputs::from_pair(&ds, &pair, None, None).unwrap();
        let swapped = PairInputs::from_pair(&ds, &pair, Some(2), None).unwrap();
        // Instance parts track the exchanged human (index 2 = id 3)...
        assert_eq!(swapped.f_a_h.data(), &[9.0, 9.0]);
        assert_ne!(swapped.nb_h, plain.nb_h);
        // ...while union appearance and union location stay the original's.
        assert_eq!(swapped.f_a_u.data(), plain.f_a_u.data());
        assert_eq!(swapped.nb_u, plain.nb_u);
    }
}
