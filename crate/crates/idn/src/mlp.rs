//! Multilayer perceptrons over the tape: ReLU hidden layers, identity output.

use rand::Rng;

use crate::error::{Error, Result};
use crate::optim::{ParamBinding, ParamSet};
use crate::tensor::{Tape, Tensor, Var};

/// Layer widths from input to output, e.g. `[32, 16, 8]` for one hidden layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    widths: Vec<usize>,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>) -> Result<MlpSpec> {
        if widths.len() < 2 || widths.iter().any(|&w| w == 0) {
            return Err(Error::Contract(format!(
                "an MLP needs >= 2 nonzero widths, got {widths:?}"
            )));
        }
        Ok(MlpSpec { widths })
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn layer_count(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }
}

/// An MLP bound to a parameter-name prefix; weights live in a [`ParamSet`]
/// under `<prefix>.<layer>.w` / `<prefix>.<layer>.b`.
#[derive(Debug, Clone)]
pub struct Mlp {
    spec: MlpSpec,
    prefix: String,
}

impl Mlp {
    pub fn new(prefix: impl Into<String>, spec: MlpSpec) -> Mlp {
        Mlp { spec, prefix: prefix.into() }
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    fn weight_name(&self, layer: usize) -> String {
        format!("{}.{}.w", self.prefix, layer)
    }

    fn bias_name(&self, layer: usize) -> String {
        format!("{}.{}.b", self.prefix, layer)
    }

    /// Expected parameter names and shapes, in layer order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for layer in 0..self.spec.layer_count() {
            let fan_in = self.spec.widths[layer];
            let fan_out = self.spec.widths[layer + 1];
            out.push((self.weight_name(layer), vec![fan_out, fan_in]));
            out.push((self.bias_name(layer), vec![fan_out]));
        }
        out
    }

    /// Insert freshly initialized parameters: uniform in
    /// `[-1/sqrt(fan_in), +1/sqrt(fan_in)]`, drawn weight-then-bias per layer.
    pub fn register(&self, rng: &mut impl Rng, params: &mut ParamSet) -> Result<()> {
        for layer in 0..self.spec.layer_count() {
            let fan_in = self.spec.widths[layer];
            let fan_out = self.spec.widths[layer + 1];
            let bound = 1.0 / (fan_in as f64).sqrt();
            let w: Vec<f64> = (0..fan_out * fan_in).map(|_| rng.gen_range(-bound..bound)).collect();
            let b: Vec<f64> = (0..fan_out).map(|_| rng.gen_range(-bound..bound)).collect();
            params.insert(self.weight_name(layer), Tensor::new(vec![fan_out, fan_in], w)?)?;
            params.insert(self.bias_name(layer), Tensor::from_vec(b)?)?;
        }
        Ok(())
    }

    /// Forward pass through bound parameters, recording onto `tape`.
    pub fn forward(&self, tape: &mut Tape, binding: &ParamBinding, x: Var) -> Result<Var> {
        let got = tape.value(x).len();
        if tape.value(x).rank() != 1 || got != self.spec.input_width() {
            return Err(Error::Dimension(format!(
                "{}: input width {} (shape {:?}), spec wants {}",
                self.prefix,
                got,
                tape.value(x).shape(),
                self.spec.input_width()
            )));
        }
        let mut h = x;
        for layer in 0..self.spec.layer_count() {
            let w = binding.var(&self.weight_name(layer))?;
            let b = binding.var(&self.bias_name(layer))?;
            h = tape.affine(h, w, b)?;
            if layer + 1 < self.spec.layer_count() {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }

    /// Convenience forward on plain tensors (builds and drops a private tape).
    pub fn forward_tensor(&self, params: &ParamSet, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let mut h = tape.constant(x.clone());
        for layer in 0..self.spec.layer_count() {
            let wname = self.weight_name(layer);
            let bname = self.bias_name(layer);
            let w = params
                .get(&wname)
                .ok_or_else(|| Error::Contract(format!("missing parameter {wname}")))?;
            let b = params
                .get(&bname)
                .ok_or_else(|| Error::Contract(format!("missing parameter {bname}")))?;
            let wv = tape.param(&wname, w.clone());
            let bv = tape.param(&bname, b.clone());
            h = tape.affine(h, wv, bv)?;
            if layer + 1 < self.spec.layer_count() {
                h = tape.relu(h);
            }
        }
        Ok(tape.value(h).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn spec_rejects_degenerate_widths() {
        assert!(MlpSpec::new(vec![4]).is_err());
        assert!(MlpSpec::new(vec![4, 0]).is_err());
        assert!(MlpSpec::new(vec![4, 2]).is_ok());
    }

    #[test]
    fn identity_single_layer_returns_input() {
        let mlp = Mlp::new("id", MlpSpec::new(vec![3, 3]).unwrap());
        let mut params = ParamSet::new();
        let eye = Tensor::new(
            vec![3, 3],
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        params.insert("id.0.w", eye).unwrap();
        params.insert("id.0.b", Tensor::zeros(&[3])).unwrap();
        let x = Tensor::from_vec(vec![0.5, -2.0, 7.25]).unwrap();
        let y = mlp.forward_tensor(&params, &x).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn zero_weights_return_bias() {
        let mlp = Mlp::new("z", MlpSpec::new(vec![4, 2]).unwrap());
        let mut params = ParamSet::new();
        params.insert("z.0.w", Tensor::zeros(&[2, 4])).unwrap();
        params.insert("z.0.b", Tensor::from_vec(vec![0.25, -1.5]).unwrap()).unwrap();
        let x = Tensor::from_vec(vec![9.0, 9.0, 9.0, 9.0]).unwrap();
        let y = mlp.forward_tensor(&params, &x).unwrap();
        assert_eq!(y.data(), &[0.25, -1.5]);
    }

    #[test]
    fn two_layer_forward_matches_hand_computation() {
        // Hidden pre-activation: [0, -2, 0.5] -> ReLU [0, 0, 0.5];
        // output: [1 + 0.25, 2 - 0.25] = [1.25, 1.75].
        let mlp = Mlp::new("m", MlpSpec::new(vec![2, 3, 2]).unwrap());
        let mut params = ParamSet::new();
        params
            .insert(
                "m.0.w",
                Tensor::new(vec![3, 2], vec![1.0, 2.0, -1.0, 1.0, 0.5, -0.5]).unwrap(),
            )
            .unwrap();
        params.insert("m.0.b", Tensor::from_vec(vec![0.0, 1.0, -1.0]).unwrap()).unwrap();
        params
            .insert(
                "m.1.w",
                Tensor::new(vec![2, 3], vec![1.0, 1.0, 2.0, 0.0, -1.0, 4.0]).unwrap(),
            )
            .unwrap();
        params.insert("m.1.b", Tensor::from_vec(vec![0.25, -0.25]).unwrap()).unwrap();
        let y = mlp
            .forward_tensor(&params, &Tensor::from_vec(vec![2.0, -1.0]).unwrap())
            .unwrap();
        assert_eq!(y.data(), &[1.25, 1.75]);
    }

    #[test]
    fn register_respects_init_bounds_and_seed() {
        let mlp = Mlp::new("n", MlpSpec::new(vec![16, 4]).unwrap());
        let bound = 1.0 / 4.0;
        let mut a = ParamSet::new();
        mlp.register(&mut ChaCha8Rng::seed_from_u64(3), &mut a).unwrap();
        for (_, t) in a.iter() {
            assert!(t.data().iter().all(|v| v.abs() <= bound));
        }
        let mut b = ParamSet::new();
        mlp.register(&mut ChaCha8Rng::seed_from_u64(3), &mut b).unwrap();
        for ((na, ta), (nb, tb)) in a.iter().zip(b.iter()) {
            assert_eq!(na, nb);
            assert_eq!(ta.data(), tb.data());
        }
        let mut c = ParamSet::new();
        mlp.register(&mut ChaCha8Rng::seed_from_u64(4), &mut c).unwrap();
        assert_ne!(
            a.get("n.0.w").unwrap().data(),
            c.get("n.0.w").unwrap().data(),
            "different seeds should differ"
        );
    }

    #[test]
    fn forward_rejects_wrong_input_width() {
        let mlp = Mlp::new("m", MlpSpec::new(vec![3, 2]).unwrap());
        let mut params = ParamSet::new();
        mlp.register(&mut ChaCha8Rng::seed_from_u64(0), &mut params).unwrap();
        let bad = Tensor::from_vec(vec![1.0, 2.0]).unwrap();
        assert!(matches!(
            mlp.forward_tensor(&params, &bad),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn param_shapes_enumerate_layers_in_order() {
        let mlp = Mlp::new("p", MlpSpec::new(vec![5, 3, 2]).unwrap());
        let shapes = mlp.param_shapes();
        assert_eq!(
            shapes,
            vec![
                ("p.0.w".to_string(), vec![3, 5]),
                ("p.0.b".to_string(), vec![3]),
                ("p.1.w".to_string(), vec![2, 3]),
                ("p.1.b".to_string(), vec![2]),
            ]
        );
    }
}
