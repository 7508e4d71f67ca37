//! Synthetic dataset generator with known ground-truth verb composition
//! maps. Each verb owns a frozen random map `G_v` (affine over the
//! concatenated instance features, then tanh); positive pairs carry
//! `f_u = mean of G over active verbs + gaussian noise`, negatives carry a
//! mismatched union feature and all-zero labels. Human poses cluster by
//! verb so exchange-candidate selection has structure to find.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::path::Path;

use crate::checkpoint;
use crate::data::{save_dataset, BoundingBox, Dataset, FeatDims, Instance, InstanceKind, PairSample};
use crate::error::{Error, Result};
use crate::optim::ParamSet;
use crate::tensor::Tensor;

const IMAGE_W: f64 = 640.0;
const IMAGE_H: f64 = 480.0;
const JOINTS: usize = 5;
pub const PELVIS: usize = 0;
pub const HEAD: usize = 1;

#[derive(Debug, Clone, Copy)]
pub struct SynthConfig {
    pub n_verbs: usize,
    pub feat_dims: FeatDims,
    pub pairs_per_verb: usize,
    pub negatives: usize,
    pub test_pairs_per_verb: usize,
    pub test_negatives: usize,
    /// Standard deviation of the gaussian noise added to union features.
    pub noise: f64,
    /// Probability that a positive pair carries a second verb.
    pub multi_label_prob: f64,
    pub seed: u64,
}

impl SynthConfig {
    /// Desk-scale defaults: 8 verbs, widths 8/8/16, 200 positive pairs per
    /// verb plus 800 negatives, noise 0.05, one pair in five multi-label.
    pub fn desk_default(seed: u64) -> SynthConfig {
        SynthConfig {
            n_verbs: 8,
            feat_dims: FeatDims { union: 16, human: 8, object: 8 },
            pairs_per_verb: 200,
            negatives: 800,
            test_pairs_per_verb: 25,
            test_negatives: 100,
            noise: 0.05,
            multi_label_prob: 0.2,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_verbs == 0 || self.pairs_per_verb == 0 {
            return Err(Error::Contract(
                "synthetic generation wants at least one verb and one pair per verb".into(),
            ));
        }
        let d = self.feat_dims;
        if d.human == 0 || d.human != d.object || d.union != d.human + d.object {
            return Err(Error::Dimension(format!(
                "synthetic widths must satisfy human == object and union == human + object, got {d:?}"
            )));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return Err(Error::Contract(format!("noise must be finite and >= 0, got {}", self.noise)));
        }
        if !(0.0..=1.0).contains(&self.multi_label_prob) {
            return Err(Error::Contract(format!(
                "multi-label probability must lie in [0,1], got {}",
                self.multi_label_prob
            )));
        }
        Ok(())
    }

    pub fn n_categories(&self) -> u32 {
        ((self.n_verbs + 1) / 2).max(1) as u32
    }
}

/// Generated splits plus the frozen ground-truth maps.
pub struct SynthOutput {
    pub train: Dataset,
    pub test: Dataset,
    pub oracle: ParamSet,
}

impl SynthOutput {
    /// Write `train.manifest`/`train.blob`, `test.manifest`/`test.blob`,
    /// and `oracle.ckpt` under `dir`.
    pub fn save_to_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_dataset(&self.train, &dir.join("train.manifest"))?;
        save_dataset(&self.test, &dir.join("test.manifest"))?;
        checkpoint::save(&self.oracle, &dir.join("oracle.ckpt"))?;
        Ok(())
    }
}

fn oracle_weight_name(verb: usize) -> String {
    format!("gv.{verb}.w")
}

fn oracle_bias_name(verb: usize) -> String {
    format!("gv.{verb}.b")
}

/// Apply one frozen map: `tanh(W (f_h ⊕ f_o) + b)`.
fn apply_map(oracle: &ParamSet, verb: usize, f_h: &[f64], f_o: &[f64]) -> Result<Vec<f64>> {
    let w = oracle
        .get(&oracle_weight_name(verb))
        .ok_or_else(|| Error::Contract(format!("oracle is missing map {verb}")))?;
    let b = oracle
        .get(&oracle_bias_name(verb))
        .ok_or_else(|| Error::Contract(format!("oracle is missing bias {verb}")))?;
    let k = f_h.len() + f_o.len();
    if w.shape() != [b.len(), k] {
        return Err(Error::Dimension(format!(
            "oracle map {verb}: weight shape {:?} vs input width {k}",
            w.shape()
        )));
    }
    let mut x = Vec::with_capacity(k);
    x.extend_from_slice(f_h);
    x.extend_from_slice(f_o);
    let out = (0..b.len())
        .map(|row| {
            let dot: f64 = w.data()[row * k..(row + 1) * k]
                .iter()
                .zip(&x)
                .map(|(wi, xi)| wi * xi)
                .sum();
            (dot + b.data()[row]).tanh()
        })
        .collect();
    Ok(out)
}

/// Ground-truth union feature of a verb set: the average of the active
/// verbs' maps, without noise.
pub fn oracle_union(
    oracle: &ParamSet,
    verbs: &[usize],
    f_h: &[f64],
    f_o: &[f64],
) -> Result<Vec<f64>> {
    if verbs.is_empty() {
        return Err(Error::Contract("oracle union needs at least one verb".into()));
    }
    let mut acc = apply_map(oracle, verbs[0], f_h, f_o)?;
    for &v in &verbs[1..] {
        for (a, g) in acc.iter_mut().zip(apply_map(oracle, v, f_h, f_o)?) {
            *a += g;
        }
    }
    let scale = 1.0 / verbs.len() as f64;
    for a in &mut acc {
        *a *= scale;
    }
    Ok(acc)
}

struct Generator {
    config: SynthConfig,
    oracle: ParamSet,
    prototypes: Vec<Vec<(f64, f64)>>,
    noise: Normal<f64>,
}

impl Generator {
    fn new(config: SynthConfig, rng: &mut ChaCha8Rng) -> Result<Generator> {
        // Frozen maps: weights then bias per verb, entries uniform in
        // (-0.6, 0.6) — wide enough that distinct verbs land far apart
        // relative to the noise scale.
        let mut oracle = ParamSet::new();
        let (u, k) = (config.feat_dims.union, config.feat_dims.union);
        for verb in 0..config.n_verbs {
            let w: Vec<f64> = (0..u * k).map(|_| rng.gen_range(-0.6..0.6)).collect();
            let b: Vec<f64> = (0..u).map(|_| rng.gen_range(-0.6..0.6)).collect();
            oracle.insert(&oracle_weight_name(verb), Tensor::new(vec![u, k], w)?)?;
            oracle.insert(&oracle_bias_name(verb), Tensor::from_vec(b)?)?;
        }
        // Pose prototypes: pelvis and head are shared anchors; the three
        // limb joints vary per verb, so aligned same-verb poses cluster.
        let mut prototypes = Vec::with_capacity(config.n_verbs);
        for _ in 0..config.n_verbs {
            let mut joints = vec![(320.0, 240.0), (320.0, 160.0)];
            for _ in 2..JOINTS {
                joints.push((rng.gen_range(100.0..540.0), rng.gen_range(100.0..380.0)));
            }
            prototypes.push(joints);
        }
        let noise = Normal::new(0.0, config.noise)
            .map_err(|e| Error::Contract(format!("bad noise scale: {e}")))?;
        Ok(Generator { config, oracle, prototypes, noise })
    }

    fn features(&self, rng: &mut ChaCha8Rng, width: usize) -> Vec<f64> {
        (0..width).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn bbox(&self, rng: &mut ChaCha8Rng) -> BoundingBox {
        let x1 = rng.gen_range(0.0..IMAGE_W - 150.0);
        let y1 = rng.gen_range(0.0..IMAGE_H - 150.0);
        let w = rng.gen_range(40.0..140.0);
        let h = rng.gen_range(40.0..140.0);
        BoundingBox::new(x1, y1, x1 + w, y1 + h).expect("generated box is valid")
    }

    fn pose(&self, rng: &mut ChaCha8Rng, verb: usize) -> Vec<(f64, f64)> {
        self.prototypes[verb]
            .iter()
            .map(|&(x, y)| (x + rng.gen_range(-12.0..12.0), y + rng.gen_range(-12.0..12.0)))
            .collect()
    }

    fn human(
        &self,
        rng: &mut ChaCha8Rng,
        id: u32,
        pose_verb: usize,
        feature: Vec<f64>,
    ) -> Result<Instance> {
        Ok(Instance {
            id,
            kind: InstanceKind::Human,
            category: 0,
            confidence: rng.gen_range(0.5..1.0),
            bbox: self.bbox(rng),
            image_w: IMAGE_W,
            image_h: IMAGE_H,
            keypoints: Some(self.pose(rng, pose_verb)),
            feature: Tensor::from_vec(feature)?,
        })
    }

    fn object(
        &self,
        rng: &mut ChaCha8Rng,
        id: u32,
        category: u32,
        feature: Vec<f64>,
    ) -> Result<Instance> {
        Ok(Instance {
            id,
            kind: InstanceKind::Object,
            category,
            confidence: rng.gen_range(0.5..1.0),
            bbox: self.bbox(rng),
            image_w: IMAGE_W,
            image_h: IMAGE_H,
            keypoints: None,
            feature: Tensor::from_vec(feature)?,
        })
    }

    /// One split. Per positive pair the draw order is: second-verb coin (and
    /// verb), instance features, union noise, then the human and object
    /// instances; negatives draw their decoy verb and mismatched features
    /// after the listed ones.
    fn split(
        &self,
        rng: &mut ChaCha8Rng,
        pairs_per_verb: usize,
        negatives: usize,
    ) -> Result<Dataset> {
        let c = &self.config;
        let d = c.feat_dims;
        let mut instances = Vec::new();
        let mut pairs = Vec::new();
        let mut next_id: u32 = 1;
        let mut take_id = || {
            let id = next_id;
            next_id += 1;
            id
        };

        for verb in 0..c.n_verbs {
            for _ in 0..pairs_per_verb {
                let mut verbs = vec![verb];
                if c.n_verbs > 1 && rng.gen_bool(c.multi_label_prob) {
                    let mut second = rng.gen_range(0..c.n_verbs - 1);
                    if second >= verb {
                        second += 1;
                    }
                    verbs.push(second);
                }
                let f_h = self.features(rng, d.human);
                let f_o = self.features(rng, d.object);
                let mut f_u = oracle_union(&self.oracle, &verbs, &f_h, &f_o)?;
                for v in &mut f_u {
                    *v += self.noise.sample(rng);
                }
                let human = self.human(rng, take_id(), verb, f_h)?;
                let object = self.object(rng, take_id(), verb as u32 % c.n_categories(), f_o)?;
                let mut labels = vec![false; c.n_verbs];
                for &v in &verbs {
                    labels[v] = true;
                }
                pairs.push(PairSample {
                    human_id: human.id,
                    object_id: object.id,
                    union_feature: Tensor::from_vec(f_u)?,
                    verbs: labels,
                });
                instances.push(human);
                instances.push(object);
            }
        }

        for _ in 0..negatives {
            let decoy = rng.gen_range(0..c.n_verbs);
            let f_h = self.features(rng, d.human);
            let f_o = self.features(rng, d.object);
            let other_h = self.features(rng, d.human);
            let other_o = self.features(rng, d.object);
            let mut f_u = oracle_union(&self.oracle, &[decoy], &other_h, &other_o)?;
            for v in &mut f_u {
                *v += self.noise.sample(rng);
            }
            let pose_verb = rng.gen_range(0..c.n_verbs);
            let category = rng.gen_range(0..c.n_categories());
            let human = self.human(rng, take_id(), pose_verb, f_h)?;
            let object = self.object(rng, take_id(), category, f_o)?;
            pairs.push(PairSample {
                human_id: human.id,
                object_id: object.id,
                union_feature: Tensor::from_vec(f_u)?,
                verbs: vec![false; c.n_verbs],
            });
            instances.push(human);
            instances.push(object);
        }

        Dataset::new(c.n_verbs, d, instances, pairs)
    }
}

/// Generate both splits and the oracle from one seed. The same seed yields
/// byte-identical artifacts.
pub fn generate(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let g = Generator::new(*config, &mut rng)?;
    let train = g.split(&mut rng, config.pairs_per_verb, config.negatives)?;
    let test = g.split(&mut rng, config.test_pairs_per_verb, config.test_negatives)?;
    Ok(SynthOutput { train, test, oracle: g.oracle })
}

/// Accuracy of the nearest-map classifier on the positive pairs: each pair
/// is assigned the verb set (single verb or unordered two-verb average)
/// whose ground-truth union lies closest to its stored union feature. This
/// bounds what any learned scorer can achieve and certifies the task is
/// solvable before training.
pub fn bayes_oracle_accuracy(oracle: &ParamSet, dataset: &Dataset) -> Result<f64> {
    let n = dataset.n_verbs();
    let mut hypotheses: Vec<Vec<usize>> = (0..n).map(|v| vec![v]).collect();
    for v in 0..n {
        for w in v + 1..n {
            hypotheses.push(vec![v, w]);
        }
    }
    let mut correct = 0usize;
    let mut total = 0usize;
    for pair in dataset.pairs() {
        let truth: Vec<usize> =
            (0..n).filter(|&v| pair.verbs[v]).collect();
        if truth.is_empty() {
            continue;
        }
        let f_h = dataset.human_of(pair).feature.data();
        let f_o = dataset.object_of(pair).feature.data();
        let mut best: Option<(f64, usize)> = None;
        for (idx, hyp) in hypotheses.iter().enumerate() {
            let g = oracle_union(oracle, hyp, f_h, f_o)?;
            let dist: f64 = g
                .iter()
                .zip(pair.union_feature.data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if best.map_or(true, |(d, _)| dist < d) {
                best = Some((dist, idx));
            }
        }
        let guess = &hypotheses[best.expect("nonempty hypothesis set").1];
        total += 1;
        if guess == &truth {
            correct += 1;
        }
    }
    if total == 0 {
        return Err(Error::Contract("dataset has no positive pairs".into()));
    }
    Ok(correct as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ipt::{build_candidates, pose_similarity, Pose};

    fn small_config(seed: u64) -> SynthConfig {
        SynthConfig {
            n_verbs: 6,
            feat_dims: FeatDims { union: 16, human: 8, object: 8 },
            pairs_per_verb: 50,
            negatives: 120,
            test_pairs_per_verb: 10,
            test_negatives: 20,
            noise: 0.05,
            multi_label_prob: 0.2,
            seed,
        }
    }

    #[test]
    fn desk_default_counts_match_contract() {
        let out = generate(&SynthConfig::desk_default(3)).unwrap();
        assert_eq!(out.train.pairs().len(), 8 * 200 + 800);
        assert_eq!(out.train.instances().len(), 2 * (8 * 200 + 800));
        assert_eq!(out.test.pairs().len(), 8 * 25 + 100);
        let (pos, neg) = out.train.split_by_interactiveness();
        assert_eq!(pos.len(), 1600);
        assert_eq!(neg.len(), 800);
        // Every positive pair carries one or two verbs; primaries cover each
        // verb exactly pairs_per_verb times.
        let mut primary_counts = vec![0usize; 8];
        for idx in &pos {
            let pair = &out.train.pairs()[*idx];
            let active = pair.verbs.iter().filter(|&&v| v).count();
            assert!(active == 1 || active == 2);
            let first = pair.verbs.iter().position(|&v| v).unwrap();
            primary_counts[first] += 1;
        }
        // A secondary verb below the primary makes the primary the second
        // flag, so per-verb first-flag counts at least reach the floor.
        assert!(primary_counts.iter().sum::<usize>() == 1600);
    }

    #[test]
    fn zero_noise_places_union_exactly_on_the_oracle_map() {
        let mut config = small_config(11);
        config.noise = 0.0;
        let out = generate(&config).unwrap();
        for pair in out.train.pairs() {
            let verbs: Vec<usize> =
                (0..config.n_verbs).filter(|&v| pair.verbs[v]).collect();
            if verbs.is_empty() {
                continue;
            }
            let g = oracle_union(
                &out.oracle,
                &verbs,
                out.train.human_of(pair).feature.data(),
                out.train.object_of(pair).feature.data(),
            )
            .unwrap();
            assert_eq!(pair.union_feature.data(), g.as_slice());
        }
    }

    #[test]
    fn bayes_oracle_is_nearly_perfect_at_default_noise() {
        let out = generate(&small_config(7)).unwrap();
        let acc = bayes_oracle_accuracy(&out.oracle, &out.train).unwrap();
        assert!(acc >= 0.99, "oracle accuracy {acc}");

        let mut silent = small_config(7);
        silent.noise = 0.0;
        let out = generate(&silent).unwrap();
        assert_eq!(bayes_oracle_accuracy(&out.oracle, &out.test).unwrap(), 1.0);
    }

    #[test]
    fn same_seed_generates_byte_identical_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        generate(&small_config(21)).unwrap().save_to_dir(&a).unwrap();
        generate(&small_config(21)).unwrap().save_to_dir(&b).unwrap();
        for name in ["train.manifest", "train.blob", "test.manifest", "test.blob", "oracle.ckpt"] {
            let (ba, bb) = (std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap());
            assert!(!ba.is_empty());
            assert_eq!(ba, bb, "{name} differs between same-seed runs");
        }
        // A different seed must not replay the same bytes.
        let c = dir.path().join("c");
        generate(&small_config(22)).unwrap().save_to_dir(&c).unwrap();
        assert_ne!(
            std::fs::read(a.join("train.blob")).unwrap(),
            std::fs::read(c.join("train.blob")).unwrap()
        );
    }

    #[test]
    fn negative_pairs_are_unlabeled_and_off_manifold() {
        let out = generate(&small_config(31)).unwrap();
        let (_, neg) = out.train.split_by_interactiveness();
        assert_eq!(neg.len(), 120);
        // The mismatched union feature sits far from every hypothesis built
        // from the pair's own instances — far beyond the noise scale.
        let mut min_dists = Vec::new();
        for &idx in neg.iter().take(30) {
            let pair = &out.train.pairs()[idx];
            assert!(pair.verbs.iter().all(|&v| !v));
            let f_h = out.train.human_of(pair).feature.data();
            let f_o = out.train.object_of(pair).feature.data();
            let best = (0..out.train.n_verbs())
                .map(|v| {
                    let g = oracle_union(&out.oracle, &[v], f_h, f_o).unwrap();
                    g.iter()
                        .zip(pair.union_feature.data())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(f64::INFINITY, f64::min);
            min_dists.push(best);
        }
        let mean = min_dists.iter().sum::<f64>() / min_dists.len() as f64;
        assert!(mean > 0.5, "negatives look too much like positives: {mean}");
    }

    #[test]
    fn poses_cluster_by_verb() {
        let out = generate(&small_config(41)).unwrap();
        let ds = &out.train;
        // Collect aligned poses of the first 40 single-verb positive pairs
        // per verb bucket.
        let mut buckets: Vec<Vec<Pose>> = vec![Vec::new(); ds.n_verbs()];
        for pair in ds.pairs() {
            let verbs: Vec<usize> = (0..ds.n_verbs()).filter(|&v| pair.verbs[v]).collect();
            if verbs.len() != 1 || buckets[verbs[0]].len() >= 40 {
                continue;
            }
            let kps = ds.human_of(pair).keypoints.as_ref().unwrap();
            buckets[verbs[0]]
                .push(Pose::from_keypoints(kps, PELVIS, HEAD).unwrap().align().unwrap());
        }
        let mut within = Vec::new();
        let mut across = Vec::new();
        for v in 0..ds.n_verbs() {
            for w in v..ds.n_verbs() {
                for (i, a) in buckets[v].iter().enumerate() {
                    for (j, b) in buckets[w].iter().enumerate() {
                        if v == w && i >= j {
                            continue;
                        }
                        let d = pose_similarity(a, b).unwrap();
                        if v == w {
                            within.push(d);
                        } else {
                            across.push(d);
                        }
                    }
                }
            }
        }
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        assert!(
            mean(&within) * 3.0 < mean(&across),
            "same-verb poses are not clustered: {} vs {}",
            mean(&within),
            mean(&across)
        );
        // And the candidate builder finds peers for humans in positive pairs.
        let table = build_candidates(ds, 5, PELVIS, HEAD).unwrap();
        let some_positive = ds
            .pairs()
            .iter()
            .find(|p| p.verbs.iter().any(|&v| v))
            .unwrap();
        assert_eq!(table.human_candidates(some_positive.human_id).len(), 5);
        table.validate(ds).unwrap();
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = small_config(1);
        c.feat_dims.union = 15;
        assert!(generate(&c).is_err());
        let mut c = small_config(1);
        c.noise = -0.1;
        assert!(generate(&c).is_err());
        let mut c = small_config(1);
        c.multi_label_prob = 1.5;
        assert!(generate(&c).is_err());
        let mut c = small_config(1);
        c.n_verbs = 0;
        assert!(generate(&c).is_err());
    }

    #[test]
    fn oracle_checkpoint_roundtrips() {
        let out = generate(&small_config(55)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        out.save_to_dir(dir.path()).unwrap();
        let oracle = checkpoint::load(&dir.path().join("oracle.ckpt")).unwrap();
        assert_eq!(oracle.len(), out.oracle.len());
        // Maps survive the f32 storage within rounding.
        let f_h = vec![0.3; 8];
        let f_o = vec![-0.2; 8];
        let a = oracle_union(&out.oracle, &[2], &f_h, &f_o).unwrap();
        let b = oracle_union(&oracle, &[2], &f_h, &f_o).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-6);
        }
        // Datasets reload through the manifest format.
        let train = crate::data::load_dataset(&dir.path().join("train.manifest")).unwrap();
        assert_eq!(train.pairs().len(), out.train.pairs().len());
    }
}
