//! Inter-pair instance exchange: pose alignment and similarity, candidate
//! selection over a dataset, and the exchange draw used during fine-tuning.

use rand::Rng;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write as _};
use std::path::Path;

use crate::data::{Dataset, InstanceKind, PairSample};
use crate::error::{Error, Result};

/// A 2-D body pose with a designated pelvis and head joint. Joints whose raw
/// coordinates are negative or non-finite are marked invalid (the common
/// not-detected encoding) and excluded from comparisons.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    points: Vec<(f64, f64)>,
    valid: Vec<bool>,
    pelvis: usize,
    head: usize,
}

impl Pose {
    pub fn from_keypoints(points: &[(f64, f64)], pelvis: usize, head: usize) -> Result<Pose> {
        if points.is_empty() || pelvis >= points.len() || head >= points.len() || pelvis == head {
            return Err(Error::Contract(format!(
                "pose wants distinct pelvis/head indices below {}, got {pelvis}/{head}",
                points.len()
            )));
        }
        let valid = points
            .iter()
            .map(|&(x, y)| x.is_finite() && y.is_finite() && x >= 0.0 && y >= 0.0)
            .collect();
        Ok(Pose { points: points.to_vec(), valid, pelvis, head })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, joint: usize) -> (f64, f64) {
        self.points[joint]
    }

    pub fn is_valid(&self, joint: usize) -> bool {
        self.valid[joint]
    }

    /// Translate the pelvis to the origin and scale the head-pelvis distance
    /// to one. Validity is preserved per joint.
    pub fn align(&self) -> Result<Pose> {
        if !self.valid[self.pelvis] || !self.valid[self.head] {
            return Err(Error::Contract(
                "pose alignment needs valid pelvis and head joints".into(),
            ));
        }
        let (px, py) = self.points[self.pelvis];
        let (hx, hy) = self.points[self.head];
        let scale = (hx - px).hypot(hy - py);
        if !(scale > 0.0) {
            return Err(Error::Contract(
                "degenerate pose: head and pelvis coincide".into(),
            ));
        }
        let points = self
            .points
            .iter()
            .map(|&(x, y)| ((x - px) / scale, (y - py) / scale))
            .collect();
        Ok(Pose { points, valid: self.valid.clone(), pelvis: self.pelvis, head: self.head })
    }
}

/// Sum of per-joint Euclidean distances over the joints valid in both poses
/// (lower means more similar). Poses should be aligned first.
pub fn pose_similarity(a: &Pose, b: &Pose) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "poses with {} vs {} joints are not comparable",
            a.len(),
            b.len()
        )));
    }
    let mut total = 0.0;
    let mut joints = 0usize;
    for k in 0..a.len() {
        if a.valid[k] && b.valid[k] {
            let (ax, ay) = a.points[k];
            let (bx, by) = b.points[k];
            total += (ax - bx).hypot(ay - by);
            joints += 1;
        }
    }
    if joints == 0 {
        return Err(Error::Contract(
            "poses share no valid joints and are incomparable".into(),
        ));
    }
    Ok(total)
}

/// Per-instance exchange candidates: for each human, up to `m` other humans
/// sharing at least one interaction composition, nearest in aligned pose
/// first; for each object, up to `m` same-category objects nearest in
/// log-area-ratio first.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CandidateTable {
    humans: BTreeMap<u32, Vec<u32>>,
    objects: BTreeMap<u32, Vec<u32>>,
}

impl CandidateTable {
    pub fn human_candidates(&self, id: u32) -> &[u32] {
        self.humans.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn object_candidates(&self, id: u32) -> &[u32] {
        self.objects.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Serialize as one `C <kind> <query-id> <id1,...,idm>` line per
    /// instance (`-` for an empty list), humans first, ids ascending.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = String::new();
        for (kind, table) in [("human", &self.humans), ("object", &self.objects)] {
            for (id, candidates) in table {
                let list = if candidates.is_empty() {
                    "-".to_string()
                } else {
                    candidates.iter().map(u32::to_string).collect::<Vec<_>>().join(",")
                };
                writeln!(text, "C {kind} {id} {list}").expect("string write");
            }
        }
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<CandidateTable> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut table = CandidateTable::default();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let lineno = idx + 1;
            let parse = |message: String| Error::Parse { line: lineno, message };
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split_whitespace().collect();
            if fields.len() != 4 || fields[0] != "C" {
                return Err(parse(format!("want `C <kind> <id> <list>`, got {trimmed:?}")));
            }
            let id: u32 = fields[2]
                .parse()
                .map_err(|_| parse(format!("bad instance id {:?}", fields[2])))?;
            let candidates: Vec<u32> = if fields[3] == "-" {
                Vec::new()
            } else {
                fields[3]
                    .split(',')
                    .map(|tok| {
                        tok.parse::<u32>()
                            .map_err(|_| parse(format!("bad candidate id {tok:?}")))
                    })
                    .collect::<Result<_>>()?
            };
            let slot = match fields[1] {
                "human" => &mut table.humans,
                "object" => &mut table.objects,
                other => return Err(parse(format!("unknown instance kind {other:?}"))),
            };
            if slot.insert(id, candidates).is_some() {
                return Err(parse(format!("duplicate candidate entry for id {id}")));
            }
        }
        Ok(table)
    }

    /// Check the construction constraints against a dataset: no self
    /// references, human candidates share a composition with the query, and
    /// object candidates share the query's category.
    pub fn validate(&self, dataset: &Dataset) -> Result<()> {
        let compositions = human_compositions(dataset);
        for (&id, candidates) in &self.humans {
            let own = compositions.get(&id);
            for &c in candidates {
                if c == id {
                    return Err(Error::Contract(format!("human {id} lists itself")));
                }
                let shared = match (own, compositions.get(&c)) {
                    (Some(a), Some(b)) => !a.is_disjoint(b),
                    _ => false,
                };
                if !shared {
                    return Err(Error::Contract(format!(
                        "human candidate {c} shares no composition with {id}"
                    )));
                }
            }
        }
        for (&id, candidates) in &self.objects {
            let query = dataset.instance_by_id(id)?;
            for &c in candidates {
                if c == id {
                    return Err(Error::Contract(format!("object {id} lists itself")));
                }
                if dataset.instance_by_id(c)?.category != query.category {
                    return Err(Error::Contract(format!(
                        "object candidate {c} differs in category from {id}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Interaction compositions (verb, object category) of each human that
/// appears in at least one positive pair.
fn human_compositions(dataset: &Dataset) -> BTreeMap<u32, BTreeSet<(usize, u32)>> {
    let mut out: BTreeMap<u32, BTreeSet<(usize, u32)>> = BTreeMap::new();
    for pair in dataset.pairs() {
        let object_cat = dataset.object_of(pair).category;
        for (verb, &on) in pair.verbs.iter().enumerate() {
            if on {
                out.entry(pair.human_id).or_default().insert((verb, object_cat));
            }
        }
    }
    out
}

/// Area of the object box over the area of the human box it is first paired
/// with; objects outside every pair have no ratio.
fn object_area_ratios(dataset: &Dataset) -> BTreeMap<u32, f64> {
    let mut out = BTreeMap::new();
    for pair in dataset.pairs() {
        out.entry(pair.object_id).or_insert_with(|| {
            dataset.object_of(pair).bbox.area() / dataset.human_of(pair).bbox.area()
        });
    }
    out
}

/// Build the exchange candidates of every instance in `dataset`. `pelvis`
/// and `head` name the joints used for pose alignment; humans without an
/// alignable pose get (and appear in) no candidates, as do objects outside
/// every pair.
pub fn build_candidates(
    dataset: &Dataset,
    m: usize,
    pelvis: usize,
    head: usize,
) -> Result<CandidateTable> {
    let compositions = human_compositions(dataset);
    let ratios = object_area_ratios(dataset);

    let mut aligned: BTreeMap<u32, Pose> = BTreeMap::new();
    for inst in dataset.instances() {
        if inst.kind != InstanceKind::Human {
            continue;
        }
        if let Some(kps) = &inst.keypoints {
            if let Ok(pose) = Pose::from_keypoints(kps, pelvis, head) {
                if let Ok(posed) = pose.align() {
                    aligned.insert(inst.id, posed);
                }
            }
        }
    }

    let mut table = CandidateTable::default();
    for inst in dataset.instances() {
        match inst.kind {
            InstanceKind::Human => {
                let mut ranked: Vec<(f64, u32)> = Vec::new();
                if let (Some(own), Some(pose)) = (compositions.get(&inst.id), aligned.get(&inst.id))
                {
                    for other in dataset.instances() {
                        if other.id == inst.id || other.kind != InstanceKind::Human {
                            continue;
                        }
                        let (Some(theirs), Some(their_pose)) =
                            (compositions.get(&other.id), aligned.get(&other.id))
                        else {
                            continue;
                        };
                        if own.is_disjoint(theirs) {
                            continue;
                        }
                        ranked.push((pose_similarity(pose, their_pose)?, other.id));
                    }
                }
                ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                ranked.truncate(m);
                table.humans.insert(inst.id, ranked.into_iter().map(|(_, id)| id).collect());
            }
            InstanceKind::Object => {
                let mut ranked: Vec<(f64, u32)> = Vec::new();
                if let Some(&ratio) = ratios.get(&inst.id) {
                    for other in dataset.instances() {
                        if other.id == inst.id
                            || other.kind != InstanceKind::Object
                            || other.category != inst.category
                        {
                            continue;
                        }
                        let Some(&their_ratio) = ratios.get(&other.id) else {
                            continue;
                        };
                        ranked.push(((ratio.ln() - their_ratio.ln()).abs(), other.id));
                    }
                }
                ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                ranked.truncate(m);
                table.objects.insert(inst.id, ranked.into_iter().map(|(_, id)| id).collect());
            }
        }
    }
    Ok(table)
}

/// Draw exchange partners for one pair: the human is sampled uniformly from
/// the original plus its candidates, then the object independently likewise.
/// `None` keeps the original instance; labels are never touched.
pub fn exchange_sample(
    rng: &mut impl Rng,
    dataset: &Dataset,
    pair: &PairSample,
    table: &CandidateTable,
) -> Result<(Option<usize>, Option<usize>)> {
    fn draw(
        rng: &mut impl Rng,
        dataset: &Dataset,
        candidates: &[u32],
    ) -> Result<Option<usize>> {
        if candidates.is_empty() {
            return Ok(None);
        }
        let choice = rng.gen_range(0..candidates.len() + 1);
        if choice == 0 {
            return Ok(None);
        }
        Ok(Some(dataset.instance_index(candidates[choice - 1])?))
    }
    let human = draw(rng, dataset, table.human_candidates(pair.human_id))?;
    let object = draw(rng, dataset, table.object_candidates(pair.object_id))?;
    Ok((human, object))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{BoundingBox, FeatDims, Instance};
    use crate::tensor::Tensor;
    use rand::rngs::StdRng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pose(points: &[(f64, f64)]) -> Pose {
        Pose::from_keypoints(points, 0, 1).unwrap()
    }

    #[test]
    fn alignment_matches_worked_example() {
        let p = pose(&[(2.0, 2.0), (2.0, 4.0), (3.0, 2.0)]);
        let a = p.align().unwrap();
        assert_eq!(a.point(0), (0.0, 0.0));
        assert_eq!(a.point(1), (0.0, 1.0));
        assert_eq!(a.point(2), (0.5, 0.0));
    }

    #[test]
    fn alignment_is_idempotent_and_similarity_invariant() {
        let already = pose(&[(0.0, 0.0), (0.0, 1.0), (0.25, -0.5)]);
        assert_eq!(already.align().unwrap(), already);

        // align(s*p + t) == align(p) for any s > 0.
        let base = pose(&[(1.0, 3.0), (4.0, 7.0), (2.5, -1.0), (0.0, 0.5)]);
        let transformed = pose(
            &base
                .points
                .iter()
                .map(|&(x, y)| (2.75 * x + 11.0, 2.75 * y + 3.0))
                .collect::<Vec<_>>(),
        );
        let (a, b) = (base.align().unwrap(), transformed.align().unwrap());
        for k in 0..a.len() {
            assert!((a.point(k).0 - b.point(k).0).abs() < 1e-12);
            assert!((a.point(k).1 - b.point(k).1).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_poses_are_rejected() {
        let p = pose(&[(3.0, 3.0), (3.0, 3.0), (1.0, 1.0)]);
        assert!(matches!(p.align(), Err(Error::Contract(_))));
        // Invalid pelvis (negative coordinates) also blocks alignment.
        let q = pose(&[(-1.0, -1.0), (3.0, 3.0), (1.0, 1.0)]);
        assert!(q.align().is_err());
        // Pelvis and head must be distinct indices.
        assert!(Pose::from_keypoints(&[(0.0, 0.0), (1.0, 1.0)], 1, 1).is_err());
    }

    #[test]
    fn similarity_cases() {
        let a = pose(&[(0.0, 0.0), (0.0, 1.0), (0.5, 0.5)]);
        assert_eq!(pose_similarity(&a, &a).unwrap(), 0.0);
        // One joint differing by (3, 4) contributes exactly 5.
        let b = pose(&[(0.0, 0.0), (0.0, 1.0), (3.5, 4.5)]);
        assert_eq!(pose_similarity(&a, &b).unwrap(), 5.0);
        assert_eq!(pose_similarity(&b, &a).unwrap(), 5.0);
        // Joints invalid on either side are skipped.
        let c = pose(&[(0.0, 0.0), (0.0, 1.0), (-9.0, -9.0)]);
        assert_eq!(pose_similarity(&a, &c).unwrap(), 0.0);
        // Differing joint counts are not comparable.
        let short = pose(&[(0.0, 0.0), (0.0, 1.0)]);
        assert!(pose_similarity(&a, &short).is_err());
    }

    #[test]
    fn similarity_matches_independent_sum_on_random_poses() {
        let mut rng = StdRng::seed_from_u64(3);
        use rand::Rng as _;
        for _ in 0..40 {
            let k = rng.gen_range(2..8);
            let mk = |rng: &mut StdRng| -> Vec<(f64, f64)> {
                (0..k).map(|_| (rng.gen_range(0.0..5.0), rng.gen_range(0.0..5.0))).collect()
            };
            let (pa, pb) = (mk(&mut rng), mk(&mut rng));
            let want: f64 = pa
                .iter()
                .zip(&pb)
                .map(|(&(ax, ay), &(bx, by))| ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt())
                .sum();
            let got = pose_similarity(&pose(&pa), &pose(&pb)).unwrap();
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn incomparable_poses_error() {
        let a = pose(&[(0.0, 0.0), (0.0, 1.0), (-1.0, -1.0)]);
        let b = pose(&[(0.0, 0.0), (0.0, 1.0), (2.0, 2.0)]);
        // Restrict to the third joint only by invalidating the others in one
        // pose each: build poses whose valid sets are disjoint.
        let c = pose(&[(-1.0, -1.0), (-1.0, -1.0), (2.0, 2.0)]);
        assert!(pose_similarity(&a, &c).is_err());
        assert!(pose_similarity(&a, &b).is_ok());
    }

    // ── candidate construction on a toy dataset ──

    fn human(id: u32, wrist: (f64, f64)) -> Instance {
        Instance {
            id,
            kind: InstanceKind::Human,
            category: 0,
            confidence: 0.9,
            bbox: BoundingBox::new(0.0, 0.0, 10.0, 10.0).unwrap(),
            image_w: 100.0,
            image_h: 100.0,
            keypoints: Some(vec![(5.0, 5.0), (5.0, 7.0), wrist]),
            feature: Tensor::from_vec(vec![0.0, 0.0]).unwrap(),
        }
    }

    fn object(id: u32, category: u32, side: f64) -> Instance {
        Instance {
            id,
            kind: InstanceKind::Object,
            category,
            confidence: 0.8,
            bbox: BoundingBox::new(20.0, 20.0, 20.0 + side, 20.0 + side).unwrap(),
            image_w: 100.0,
            image_h: 100.0,
            keypoints: None,
            feature: Tensor::from_vec(vec![1.0, 1.0]).unwrap(),
        }
    }

    fn positive_pair(human_id: u32, object_id: u32, verb: usize) -> PairSample {
        let mut verbs = vec![false; 2];
        verbs[verb] = true;
        PairSample {
            human_id,
            object_id,
            union_feature: Tensor::from_vec(vec![0.0; 4]).unwrap(),
            verbs,
        }
    }

    fn toy_dataset() -> Dataset {
        // Humans 1-4 share verb 0 on category 7 objects; human 5 only uses
        // verb 1, so it never becomes a candidate of the others. Object
        // areas against the 10x10 humans give ratios 1.0, 1.0, 2.0, 1.1 for
        // objects 10, 11, 12, 13; object 14 is another category.
        let instances = vec![
            human(1, (6.0, 5.0)),
            human(2, (6.2, 5.0)),   // closest pose to human 1
            human(3, (7.0, 5.0)),
            human(4, (5.0, 3.0)),   // farthest pose from human 1
            human(5, (6.1, 5.0)),
            object(10, 7, 10.0),
            object(11, 7, 10.0),
            object(12, 7, f64::sqrt(200.0)),
            object(13, 7, f64::sqrt(110.0)),
            object(14, 9, 10.0),
        ];
        let pairs = vec![
            positive_pair(1, 10, 0),
            positive_pair(2, 11, 0),
            positive_pair(3, 12, 0),
            positive_pair(4, 13, 0),
            positive_pair(5, 14, 1),
        ];
        Dataset::new(2, FeatDims { union: 4, human: 2, object: 2 }, instances, pairs).unwrap()
    }

    #[test]
    fn human_candidates_rank_by_pose_distance() {
        let ds = toy_dataset();
        let table = build_candidates(&ds, 5, 0, 1).unwrap();
        // Wrist x offsets from human 1 (1.0): 1.2, 2.0, and a far two-axis
        // move; candidate order follows the pose distance.
        assert_eq!(table.human_candidates(1), &[2, 3, 4]);
        // Human 5 shares no composition with anyone.
        assert_eq!(table.human_candidates(5), &[] as &[u32]);
        assert!(!table.human_candidates(1).contains(&5));
        table.validate(&ds).unwrap();
    }

    #[test]
    fn object_candidates_rank_by_log_area_ratio() {
        let ds = toy_dataset();
        let table = build_candidates(&ds, 5, 0, 1).unwrap();
        // Query object 10 has ratio 1.0; peers at 1.0, 1.1, 2.0 rank in that
        // order; the category-9 object never appears.
        assert_eq!(table.object_candidates(10), &[11, 13, 12]);
        assert_eq!(table.object_candidates(14), &[] as &[u32]);
        // Truncation honors m.
        let short = build_candidates(&ds, 1, 0, 1).unwrap();
        assert_eq!(short.object_candidates(10), &[11]);
        assert_eq!(short.human_candidates(1), &[2]);
    }

    #[test]
    fn humans_without_poses_are_excluded() {
        let mut ds = toy_dataset();
        // Rebuild with human 2 missing keypoints: it neither offers nor
        // receives candidates.
        let mut instances: Vec<Instance> = ds.instances().to_vec();
        instances[1].keypoints = None;
        ds = Dataset::new(2, ds.feat_dims(), instances, ds.pairs().to_vec()).unwrap();
        let table = build_candidates(&ds, 5, 0, 1).unwrap();
        assert_eq!(table.human_candidates(1), &[3, 4]);
        assert_eq!(table.human_candidates(2), &[] as &[u32]);
    }

    #[test]
    fn exchange_without_candidates_keeps_originals() {
        let ds = toy_dataset();
        let table = CandidateTable::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for pair in ds.pairs() {
            let (h, o) = exchange_sample(&mut rng, &ds, pair, &table).unwrap();
            assert_eq!((h, o), (None, None));
        }
    }

    #[test]
    fn exchange_draws_uniformly_and_reproducibly() {
        // Five candidates plus the original give six equally likely human
        // options; 6000 draws put each near 1000.
        let instances: Vec<Instance> = (1..=6)
            .map(|id| human(id, (5.0 + id as f64, 5.0)))
            .chain([object(10, 7, 10.0)])
            .collect();
        let pairs: Vec<PairSample> = (1..=6).map(|h| positive_pair(h, 10, 0)).collect();
        let ds =
            Dataset::new(2, FeatDims { union: 4, human: 2, object: 2 }, instances, pairs).unwrap();
        let table = build_candidates(&ds, 5, 0, 1).unwrap();
        assert_eq!(table.human_candidates(1).len(), 5);

        let mut counts: BTreeMap<Option<usize>, usize> = BTreeMap::new();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..6000 {
            let (h, _) = exchange_sample(&mut rng, &ds, &ds.pairs()[0], &table).unwrap();
            *counts.entry(h).or_default() += 1;
        }
        assert_eq!(counts.len(), 6);
        for (&option, &count) in &counts {
            assert!(
                (900..=1100).contains(&count),
                "option {option:?} drawn {count} times"
            );
        }

        // Same seed, same sequence.
        let run = |seed: u64| -> Vec<(Option<usize>, Option<usize>)> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| exchange_sample(&mut rng, &ds, &ds.pairs()[0], &table).unwrap())
                .collect()
        };
        assert_eq!(run(5), run(5));
        assert_ne!(run(5), run(6));
    }

    #[test]
    fn table_roundtrips_through_text_file() {
        let ds = toy_dataset();
        let table = build_candidates(&ds, 5, 0, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("candidates.txt");
        table.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().all(|l| l.starts_with("C ")));
        assert!(text.contains("C human 5 -"));
        assert!(text.contains("C object 10 11,13,12"));
        let back = CandidateTable::load(&path).unwrap();
        assert_eq!(back, table);
    }

    #[test]
    fn malformed_tables_are_rejected_with_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        for (body, needle) in [
            ("C human 1\n", "want `C"),
            ("C alien 1 2\n", "unknown instance kind"),
            ("C human 1 2,x\n", "bad candidate id"),
            ("C human 1 2\nC human 1 3\n", "duplicate"),
        ] {
            std::fs::write(&path, body).unwrap();
            let err = CandidateTable::load(&path).unwrap_err();
            assert!(err.to_string().contains(needle), "{err} missing {needle}");
        }
    }

    #[test]
    fn validate_catches_forged_tables() {
        let ds = toy_dataset();
        let mut table = build_candidates(&ds, 5, 0, 1).unwrap();
        table.humans.get_mut(&1).unwrap().push(5); // shares no composition
        assert!(table.validate(&ds).is_err());
        let mut table = build_candidates(&ds, 5, 0, 1).unwrap();
        table.objects.get_mut(&10).unwrap().push(14); // wrong category
        assert!(table.validate(&ds).is_err());
        let mut table = build_candidates(&ds, 5, 0, 1).unwrap();
        table.humans.get_mut(&1).unwrap().push(1); // self reference
        assert!(table.validate(&ds).is_err());
    }
}
