//! Detection-time scoring (per-verb probabilities, confidence suppression,
//! interactiveness filtering), composition-level mAP, and the D1/D2
//! instance-exchange diagnostic.

use rayon::prelude::*;
use std::io::Write as _;
use std::path::Path;
use std::sync::OnceLock;

use crate::data::{BoundingBox, Dataset};
use crate::error::{Error, Result};
use crate::model::{ForwardOptions, IdnModel, PairInputs};
use crate::tensor::Tape;

// ── Worker pool ──────────────────────────────────────────────────────────────

/// Worker cap: `IDN_THREADS` when it parses to a positive integer, else the
/// machine's available parallelism.
pub fn worker_count() -> usize {
    std::env::var("IDN_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Shared scoring pool, sized once per process on first use.
fn pool() -> &'static rayon::ThreadPool {
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(worker_count())
            .build()
            .expect("scoring pool")
    })
}

// ── Confidence suppression and interactiveness filtering ─────────────────────

/// Parameters of the logistic confidence-suppression curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LisParams {
    pub t: f64,
    pub k: f64,
    pub omega: f64,
}

impl Default for LisParams {
    fn default() -> LisParams {
        LisParams { t: 8.3, k: 12.0, omega: 10.0 }
    }
}

impl LisParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.t > 0.0 && self.k > 0.0 && self.omega > 0.0) {
            return Err(Error::Contract(format!(
                "suppression parameters must be positive, got ({}, {}, {})",
                self.t, self.k, self.omega
            )));
        }
        Ok(())
    }
}

/// Low-confidence suppression `T / (1 + exp(k − ω·s))`, strictly increasing
/// in the confidence `s`.
pub fn lis(s: f64, p: &LisParams) -> f64 {
    p.t / (1.0 + (p.k - p.omega * s).exp())
}

/// Drop records whose interactiveness (estimated on the union code) falls
/// below `threshold`. Order is preserved.
pub fn nis_filter(records: Vec<DetectionRecord>, threshold: f64) -> Vec<DetectionRecord> {
    records
        .into_iter()
        .filter(|r| r.interactiveness >= threshold)
        .collect()
}

// ── Pair scoring ─────────────────────────────────────────────────────────────

/// Scoring-time switches. Forward wiring controls which distance branches
/// exist; `use_ae` adds the autoencoder classification branch.
#[derive(Debug, Clone, Copy)]
pub struct ScoreOptions {
    pub forward: ForwardOptions,
    pub use_ae: bool,
    pub lis: LisParams,
    /// Interactiveness threshold for [`nis_filter`].
    pub nis_threshold: f64,
}

impl Default for ScoreOptions {
    fn default() -> ScoreOptions {
        ScoreOptions {
            forward: ForwardOptions::default(),
            use_ae: true,
            lis: LisParams::default(),
            nis_threshold: 0.1,
        }
    }
}

impl ScoreOptions {
    pub fn validate(&self) -> Result<()> {
        self.lis.validate()?;
        if !self.nis_threshold.is_finite() {
            return Err(Error::Contract("interactiveness threshold must be finite".into()));
        }
        Ok(())
    }
}

/// Per-verb probabilities of one pair, with the raw pieces they came from.
#[derive(Debug, Clone)]
pub struct PairScores {
    pub d_u: Option<Vec<f64>>,
    pub d_ho: Option<Vec<f64>>,
    pub ae_logits: Option<Vec<f64>>,
    pub p_u: Option<Vec<f64>>,
    pub p_ho: Option<Vec<f64>>,
    pub p_ae: Option<Vec<f64>>,
    /// Mean of the enabled branch probabilities, in (0,1] per verb.
    pub p_v: Vec<f64>,
    /// Interactiveness probability of the union code.
    pub interactiveness: f64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Distance-branch probabilities `exp(−d)`; in (0,1] since distances are
/// nonnegative.
pub fn probabilities_from_distances(distances: &[f64]) -> Vec<f64> {
    distances.iter().map(|&d| (-d).exp()).collect()
}

/// Elementwise mean of the enabled branches; with all three enabled this is
/// the 1/3-weighted sum.
pub fn mean_branches(branches: &[&[f64]]) -> Result<Vec<f64>> {
    let first = branches
        .first()
        .ok_or_else(|| Error::Contract("scoring needs at least one enabled branch".into()))?;
    let n = first.len();
    if branches.iter().any(|b| b.len() != n) {
        return Err(Error::Dimension(format!(
            "branch lengths differ: {:?}",
            branches.iter().map(|b| b.len()).collect::<Vec<_>>()
        )));
    }
    let scale = 1.0 / branches.len() as f64;
    Ok((0..n)
        .map(|v| branches.iter().map(|b| b[v]).sum::<f64>() * scale)
        .collect())
}

/// Score one pair with a trained model: per-verb probabilities from the
/// enabled branches plus the union interactiveness estimate.
pub fn score_pair(
    model: &IdnModel,
    dataset: &Dataset,
    pair: &crate::data::PairSample,
    opts: &ScoreOptions,
) -> Result<PairScores> {
    opts.validate()?;
    let n = model.config().n_verbs;
    let mut tape = Tape::new();
    let binding = model.bind(&mut tape);
    let inputs = PairInputs::from_pair(dataset, pair, None, None)?;
    let fwd = model.forward_pair(&mut tape, &binding, &inputs, &opts.forward)?;

    let collect = |tape: &Tape, vars: &[crate::tensor::Var]| -> Result<Vec<f64>> {
        vars.iter().map(|&v| tape.scalar_value(v)).collect()
    };
    let d_u = if fwd.d_u.len() == n { Some(collect(&tape, &fwd.d_u)?) } else { None };
    let d_ho = if fwd.d_ho.len() == n { Some(collect(&tape, &fwd.d_ho)?) } else { None };
    let ae_logits = if opts.use_ae {
        Some(tape.value(fwd.ae_logits).data().to_vec())
    } else {
        None
    };

    let p_u = d_u.as_deref().map(|d| probabilities_from_distances(d));
    let p_ho = d_ho.as_deref().map(|d| probabilities_from_distances(d));
    let p_ae = ae_logits
        .as_deref()
        .map(|z| z.iter().map(|&x| sigmoid(x)).collect::<Vec<f64>>());
    let branches: Vec<&[f64]> = [p_u.as_deref(), p_ho.as_deref(), p_ae.as_deref()]
        .into_iter()
        .flatten()
        .collect();
    let p_v = mean_branches(&branches)?;
    let inter_logits = tape.value(fwd.inter_u).data();
    let interactiveness = sigmoid(
        *inter_logits
            .first()
            .ok_or_else(|| Error::Dimension("empty interactiveness logit".into()))?,
    );
    Ok(PairScores { d_u, d_ho, ae_logits, p_u, p_ho, p_ae, p_v, interactiveness })
}

// ── Composition catalog ──────────────────────────────────────────────────────

/// The legal (verb, object-category) compositions of a benchmark, each with
/// a rare/non-rare split tag. Composition ids index the canonically sorted
/// list.
#[derive(Debug, Clone, PartialEq)]
pub struct HoiCatalog {
    n_verbs: usize,
    comps: Vec<(usize, u32)>,
    rare: Vec<bool>,
}

impl HoiCatalog {
    pub fn new(n_verbs: usize, mut comps: Vec<(usize, u32)>) -> Result<HoiCatalog> {
        comps.sort_unstable();
        for pair in comps.windows(2) {
            if pair[0] == pair[1] {
                return Err(Error::Contract(format!(
                    "duplicate composition (verb {}, category {})",
                    pair[0].0, pair[0].1
                )));
            }
        }
        if let Some(&(v, _)) = comps.iter().find(|&&(v, _)| v >= n_verbs) {
            return Err(Error::Contract(format!(
                "composition verb {v} out of range for {n_verbs} verbs"
            )));
        }
        let rare = vec![false; comps.len()];
        Ok(HoiCatalog { n_verbs, comps, rare })
    }

    /// Every verb crossed with every category — the synthetic-benchmark
    /// catalog, where any verb may apply to any object.
    pub fn full_cross(n_verbs: usize, categories: &[u32]) -> Result<HoiCatalog> {
        let mut cats = categories.to_vec();
        cats.sort_unstable();
        cats.dedup();
        let comps = (0..n_verbs)
            .flat_map(|v| cats.iter().map(move |&c| (v, c)))
            .collect();
        HoiCatalog::new(n_verbs, comps)
    }

    /// Catalog of the compositions observed among a dataset's positive pairs.
    pub fn from_dataset(data: &Dataset) -> Result<HoiCatalog> {
        let mut comps = std::collections::BTreeSet::new();
        for pair in data.pairs() {
            let category = data.object_of(pair).category;
            for (v, &on) in pair.verbs.iter().enumerate() {
                if on {
                    comps.insert((v, category));
                }
            }
        }
        HoiCatalog::new(data.n_verbs(), comps.into_iter().collect())
    }

    pub fn len(&self) -> usize {
        self.comps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comps.is_empty()
    }

    pub fn n_verbs(&self) -> usize {
        self.n_verbs
    }

    pub fn comps(&self) -> &[(usize, u32)] {
        &self.comps
    }

    pub fn comp_id(&self, verb: usize, category: u32) -> Option<usize> {
        self.comps.binary_search(&(verb, category)).ok()
    }

    pub fn is_rare(&self, comp_id: usize) -> bool {
        self.rare[comp_id]
    }

    /// Tag compositions with fewer than `threshold` positive training pairs
    /// as rare.
    pub fn mark_rare_by_train_count(&mut self, train: &Dataset, threshold: usize) {
        let mut counts = vec![0usize; self.comps.len()];
        for pair in train.pairs() {
            let category = train.object_of(pair).category;
            for (v, &on) in pair.verbs.iter().enumerate() {
                if on {
                    if let Some(id) = self.comp_id(v, category) {
                        counts[id] += 1;
                    }
                }
            }
        }
        self.rare = counts.iter().map(|&c| c < threshold).collect();
    }
}

// ── Detection records ────────────────────────────────────────────────────────

/// A scored candidate pair ready for composition-level ranking.
#[derive(Debug, Clone)]
pub struct DetectionRecord {
    pub img_id: u64,
    pub human_box: BoundingBox,
    pub object_box: BoundingBox,
    pub category: u32,
    /// Suppressed detector-confidence factor `lis(c_h)·lis(c_o)`.
    pub p_object: f64,
    pub p_verb: Vec<f64>,
    pub interactiveness: f64,
    /// `(composition id, P_v[verb] · p_object)` for every catalog
    /// composition matching the record's category.
    pub p_hoi: Vec<(usize, f64)>,
}

/// Composition scores of one record: `P_v[verb] · p_object` over the catalog
/// compositions whose category matches. An absent category yields no rows.
pub fn compose_hoi(
    p_verb: &[f64],
    p_object: f64,
    category: u32,
    catalog: &HoiCatalog,
) -> Result<Vec<(usize, f64)>> {
    if p_verb.len() != catalog.n_verbs() {
        return Err(Error::Dimension(format!(
            "verb scores len {} vs catalog verbs {}",
            p_verb.len(),
            catalog.n_verbs()
        )));
    }
    Ok(catalog
        .comps()
        .iter()
        .enumerate()
        .filter(|(_, &(_, cat))| cat == category)
        .map(|(id, &(v, _))| (id, p_verb[v] * p_object))
        .collect())
}

/// Score every pair of a dataset in parallel. The image id of a record is
/// the pair's index, so ground truth derived from the same dataset lines up.
pub fn score_dataset(
    model: &IdnModel,
    data: &Dataset,
    catalog: &HoiCatalog,
    opts: &ScoreOptions,
) -> Result<Vec<DetectionRecord>> {
    opts.validate()?;
    pool().install(|| {
        (0..data.pairs().len())
            .into_par_iter()
            .map(|idx| {
                let pair = &data.pairs()[idx];
                let scores = score_pair(model, data, pair, opts)?;
                let human = data.human_of(pair);
                let object = data.object_of(pair);
                let p_object = lis(human.confidence, &opts.lis) * lis(object.confidence, &opts.lis);
                let p_hoi = compose_hoi(&scores.p_v, p_object, object.category, catalog)?;
                Ok(DetectionRecord {
                    img_id: idx as u64,
                    human_box: human.bbox,
                    object_box: object.bbox,
                    category: object.category,
                    p_object,
                    p_verb: scores.p_v,
                    interactiveness: scores.interactiveness,
                    p_hoi,
                })
            })
            .collect()
    })
}

// ── Matching and mAP ─────────────────────────────────────────────────────────

/// Intersection over union of two boxes, in [0,1].
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let ix = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let iy = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// One ranked detection of one composition.
#[derive(Debug, Clone)]
pub struct Detection {
    pub img_id: u64,
    pub comp_id: usize,
    pub human_box: BoundingBox,
    pub object_box: BoundingBox,
    pub category: u32,
    pub score: f64,
}

/// One annotated composition occurrence.
#[derive(Debug, Clone)]
pub struct GroundTruthHoi {
    pub img_id: u64,
    pub comp_id: usize,
    pub human_box: BoundingBox,
    pub object_box: BoundingBox,
}

/// Expand records into per-composition detections.
pub fn flatten_detections(records: &[DetectionRecord]) -> Vec<Detection> {
    records
        .iter()
        .flat_map(|r| {
            r.p_hoi.iter().map(move |&(comp_id, score)| Detection {
                img_id: r.img_id,
                comp_id,
                human_box: r.human_box,
                object_box: r.object_box,
                category: r.category,
                score,
            })
        })
        .collect()
}

/// Ground truth of a dataset under a catalog: one entry per (positive pair,
/// labeled verb), keyed by pair index as the image id.
pub fn dataset_ground_truth(data: &Dataset, catalog: &HoiCatalog) -> Result<Vec<GroundTruthHoi>> {
    let mut out = Vec::new();
    for (idx, pair) in data.pairs().iter().enumerate() {
        let human = data.human_of(pair);
        let object = data.object_of(pair);
        for (v, &on) in pair.verbs.iter().enumerate() {
            if !on {
                continue;
            }
            let comp_id = catalog.comp_id(v, object.category).ok_or_else(|| {
                Error::Contract(format!(
                    "labeled composition (verb {v}, category {}) missing from catalog",
                    object.category
                ))
            })?;
            out.push(GroundTruthHoi {
                img_id: idx as u64,
                comp_id,
                human_box: human.bbox,
                object_box: object.bbox,
            });
        }
    }
    Ok(out)
}

/// All-point interpolated average precision from ranked hit flags.
/// `None` when there is no ground truth to recall.
pub fn average_precision(hits: &[bool], n_gt: usize) -> Option<f64> {
    if n_gt == 0 {
        return None;
    }
    let mut precisions = Vec::with_capacity(hits.len());
    let mut tp = 0usize;
    for (i, &hit) in hits.iter().enumerate() {
        if hit {
            tp += 1;
        }
        precisions.push(tp as f64 / (i + 1) as f64);
    }
    // Precision envelope: best precision at this recall or beyond.
    let mut envelope = precisions;
    let mut best: f64 = 0.0;
    for p in envelope.iter_mut().rev() {
        best = best.max(*p);
        *p = best;
    }
    let mut ap = 0.0;
    for (i, &hit) in hits.iter().enumerate() {
        if hit {
            ap += envelope[i] / n_gt as f64;
        }
    }
    Some(ap)
}

/// Per-composition APs plus split means.
#[derive(Debug, Clone, PartialEq)]
pub struct MapReport {
    /// AP per catalog composition; `None` where the composition has no
    /// ground truth (excluded from the means).
    pub ap: Vec<Option<f64>>,
    pub full: Option<f64>,
    pub rare: Option<f64>,
    pub non_rare: Option<f64>,
}

fn mean_of(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Greedy composition-level matching and mAP. Within a composition,
/// detections rank by descending score; each claims the unmatched same-image
/// ground truth maximizing `min(IoU_h, IoU_o)` and counts as a hit when that
/// maximum reaches `iou_threshold`.
pub fn compute_map(
    detections: &[Detection],
    ground_truth: &[GroundTruthHoi],
    catalog: &HoiCatalog,
    iou_threshold: f64,
) -> Result<MapReport> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(Error::Contract(format!(
            "IoU threshold must lie in (0,1], got {iou_threshold}"
        )));
    }
    for d in detections {
        if d.comp_id >= catalog.len() {
            return Err(Error::Contract(format!(
                "detection composition id {} out of range ({} compositions)",
                d.comp_id,
                catalog.len()
            )));
        }
    }
    for g in ground_truth {
        if g.comp_id >= catalog.len() {
            return Err(Error::Contract(format!(
                "ground-truth composition id {} out of range ({} compositions)",
                g.comp_id,
                catalog.len()
            )));
        }
    }

    let mut det_by_comp: Vec<Vec<usize>> = vec![Vec::new(); catalog.len()];
    for (i, d) in detections.iter().enumerate() {
        det_by_comp[d.comp_id].push(i);
    }
    let mut gt_by_comp: Vec<Vec<usize>> = vec![Vec::new(); catalog.len()];
    for (i, g) in ground_truth.iter().enumerate() {
        gt_by_comp[g.comp_id].push(i);
    }

    let mut ap = Vec::with_capacity(catalog.len());
    for comp_id in 0..catalog.len() {
        let mut order = det_by_comp[comp_id].clone();
        order.sort_by(|&a, &b| {
            detections[b]
                .score
                .total_cmp(&detections[a].score)
                .then(detections[a].img_id.cmp(&detections[b].img_id))
                .then(a.cmp(&b))
        });
        let gts = &gt_by_comp[comp_id];
        let mut matched = vec![false; gts.len()];
        let mut hits = Vec::with_capacity(order.len());
        for &di in &order {
            let det = &detections[di];
            let mut best: Option<(usize, f64)> = None;
            for (slot, &gi) in gts.iter().enumerate() {
                let gt = &ground_truth[gi];
                if matched[slot] || gt.img_id != det.img_id {
                    continue;
                }
                let quality = iou(&det.human_box, &gt.human_box)
                    .min(iou(&det.object_box, &gt.object_box));
                if best.is_none_or(|(_, q)| quality > q) {
                    best = Some((slot, quality));
                }
            }
            match best {
                Some((slot, quality)) if quality >= iou_threshold => {
                    matched[slot] = true;
                    hits.push(true);
                }
                _ => hits.push(false),
            }
        }
        ap.push(average_precision(&hits, gts.len()));
    }

    let defined = |pred: &dyn Fn(usize) -> bool| -> Vec<f64> {
        ap.iter()
            .enumerate()
            .filter_map(|(id, a)| a.filter(|_| pred(id)))
            .collect()
    };
    let full = mean_of(&defined(&|_| true));
    let rare = mean_of(&defined(&|id| catalog.is_rare(id)));
    let non_rare = mean_of(&defined(&|id| !catalog.is_rare(id)));
    Ok(MapReport { ap, full, rare, non_rare })
}

// ── Verb-level classification mAP ────────────────────────────────────────────

/// Per-verb average precision of multi-label scores against labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationMap {
    /// AP per verb; `None` where the verb has no positives.
    pub per_verb: Vec<Option<f64>>,
    /// Mean over verbs with positives.
    pub mean: Option<f64>,
}

/// Rank rows per verb by score and compute AP against the boolean labels.
pub fn classification_map(scores: &[Vec<f64>], labels: &[Vec<bool>]) -> Result<ClassificationMap> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::Dimension(format!(
            "{} score rows vs {} label rows",
            scores.len(),
            labels.len()
        )));
    }
    let n_verbs = scores[0].len();
    if scores.iter().any(|r| r.len() != n_verbs) || labels.iter().any(|r| r.len() != n_verbs) {
        return Err(Error::Dimension("ragged score or label rows".into()));
    }
    let mut per_verb = Vec::with_capacity(n_verbs);
    for v in 0..n_verbs {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b][v].total_cmp(&scores[a][v]).then(a.cmp(&b)));
        let hits: Vec<bool> = order.iter().map(|&i| labels[i][v]).collect();
        let n_pos = hits.iter().filter(|&&h| h).count();
        per_verb.push(average_precision(&hits, n_pos));
    }
    let defined: Vec<f64> = per_verb.iter().filter_map(|a| *a).collect();
    Ok(ClassificationMap { mean: mean_of(&defined), per_verb })
}

// ── Instance-exchange diagnostic ─────────────────────────────────────────────

/// Union-code spread (`d1`) vs exchanged-integration residual (`d2`) of one
/// verb.
#[derive(Debug, Clone, PartialEq)]
pub struct VerbDiagnostic {
    pub verb: usize,
    pub d1: f64,
    pub d2: f64,
}

fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// For each verb with at least two labeled pairs: anchor the first pair in
/// dataset order and, over every other pair `i` of that verb, compare
///   d1: distance from the anchor's union code to pair i's union code,
///   d2: distance from the integrated single-sided exchanges (anchor human
///       with pair i's object, and pair i's human with the anchor's object)
///       to pair i's union code, averaged over the two sides.
/// Verbs with fewer than two pairs are skipped.
pub fn ipt_diagnostic(model: &IdnModel, data: &Dataset) -> Result<Vec<VerbDiagnostic>> {
    let n_verbs = model.config().n_verbs;
    if n_verbs != data.n_verbs() {
        return Err(Error::Dimension(format!(
            "model has {n_verbs} verbs, dataset {}",
            data.n_verbs()
        )));
    }
    let mut out = Vec::new();
    for verb in 0..n_verbs {
        let members: Vec<usize> = (0..data.pairs().len())
            .filter(|&i| data.pairs()[i].verbs[verb])
            .collect();
        if members.len() < 2 {
            continue;
        }
        let mut tape = Tape::new();
        let binding = model.bind(&mut tape);
        let union_code = |tape: &mut Tape, pair_idx: usize| -> Result<Vec<f64>> {
            let pair = &data.pairs()[pair_idx];
            let inputs = PairInputs::from_pair(data, pair, None, None)?;
            let assembled = model.assemble(tape, &binding, &inputs)?;
            let code = model.encode(tape, &binding, assembled.f_hat_u)?;
            Ok(tape.value(code).data().to_vec())
        };
        let anchor_idx = members[0];
        let anchor = &data.pairs()[anchor_idx];
        let anchor_union = union_code(&mut tape, anchor_idx)?;
        let integrated_exchange =
            |tape: &mut Tape, human_override: Option<usize>, object_override: Option<usize>| {
                let inputs = PairInputs::from_pair(data, anchor, human_override, object_override)?;
                let assembled = model.assemble(tape, &binding, &inputs)?;
                let f_hat_ho = tape.concat(assembled.f_hat_h, assembled.f_hat_o)?;
                let code = model.encode(tape, &binding, f_hat_ho)?;
                let integrated = model.integrate(tape, &binding, code)?;
                Ok::<Vec<f64>, Error>(tape.value(integrated[verb]).data().to_vec())
            };
        let mut d1_sum = 0.0;
        let mut d2_sum = 0.0;
        for &partner_idx in &members[1..] {
            let partner = &data.pairs()[partner_idx];
            let partner_union = union_code(&mut tape, partner_idx)?;
            d1_sum += l2_distance(&anchor_union, &partner_union);
            let partner_h = data.instance_index(partner.human_id)?;
            let partner_o = data.instance_index(partner.object_id)?;
            let took_object = integrated_exchange(&mut tape, None, Some(partner_o))?;
            let gave_object = integrated_exchange(&mut tape, Some(partner_h), None)?;
            d2_sum += 0.5
                * (l2_distance(&took_object, &partner_union)
                    + l2_distance(&gave_object, &partner_union));
        }
        let m = (members.len() - 1) as f64;
        out.push(VerbDiagnostic { verb, d1: d1_sum / m, d2: d2_sum / m });
    }
    Ok(out)
}

// ── File formats ─────────────────────────────────────────────────────────────

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Diagnostic CSV: header `verb,D1,D2`, one row per reported verb.
pub fn save_diagnostic_csv(path: &Path, rows: &[VerbDiagnostic]) -> Result<()> {
    let mut text = String::from("verb,D1,D2\n");
    for row in rows {
        text.push_str(&format!("{},{},{}\n", row.verb, row.d1, row.d2));
    }
    write_text(path, &text)
}

/// Detections file: one line per detection,
/// `D <img-id> <hbox×4> <obox×4> <obj-cat> <comp-id> <score>`.
pub fn save_detections(path: &Path, detections: &[Detection]) -> Result<()> {
    let mut text = String::new();
    for d in detections {
        let (h, o) = (&d.human_box, &d.object_box);
        text.push_str(&format!(
            "D {} {} {} {} {} {} {} {} {} {} {} {}\n",
            d.img_id,
            h.x1,
            h.y1,
            h.x2,
            h.y2,
            o.x1,
            o.y1,
            o.x2,
            o.y2,
            d.category,
            d.comp_id,
            d.score
        ));
    }
    write_text(path, &text)
}

/// Read a detections file back. Blank lines and `#` comments are skipped.
pub fn load_detections(path: &Path) -> Result<Vec<Detection>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |what: &str| Error::Parse {
            line: lineno + 1,
            message: format!("{}: {what}", path.display()),
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 13 || fields[0] != "D" {
            return Err(bad("expected 'D <img> <hbox x4> <obox x4> <cat> <comp> <score>'"));
        }
        let float = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| bad(&format!("bad {what} '{s}'")))
        };
        let img_id = fields[1].parse::<u64>().map_err(|_| bad("bad image id"))?;
        let hb = BoundingBox::new(
            float(fields[2], "box coord")?,
            float(fields[3], "box coord")?,
            float(fields[4], "box coord")?,
            float(fields[5], "box coord")?,
        )?;
        let ob = BoundingBox::new(
            float(fields[6], "box coord")?,
            float(fields[7], "box coord")?,
            float(fields[8], "box coord")?,
            float(fields[9], "box coord")?,
        )?;
        let category = fields[10].parse::<u32>().map_err(|_| bad("bad category"))?;
        let comp_id = fields[11].parse::<usize>().map_err(|_| bad("bad composition id"))?;
        let score = float(fields[12], "score")?;
        out.push(Detection {
            img_id,
            comp_id,
            human_box: hb,
            object_box: ob,
            category,
            score,
        });
    }
    Ok(out)
}

/// Results CSV: `comp,verb,category,split,ap` rows per composition (empty
/// `ap` where undefined), then `full` / `rare` / `non-rare` mean rows.
pub fn save_ap_csv(path: &Path, report: &MapReport, catalog: &HoiCatalog) -> Result<()> {
    if report.ap.len() != catalog.len() {
        return Err(Error::Dimension(format!(
            "report covers {} compositions, catalog has {}",
            report.ap.len(),
            catalog.len()
        )));
    }
    let mut text = String::from("comp,verb,category,split,ap\n");
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (id, &(verb, category)) in catalog.comps().iter().enumerate() {
        let split = if catalog.is_rare(id) { "rare" } else { "non-rare" };
        text.push_str(&format!("{id},{verb},{category},{split},{}\n", cell(report.ap[id])));
    }
    text.push_str(&format!("full,,,,{}\n", cell(report.full)));
    text.push_str(&format!("rare,,,,{}\n", cell(report.rare)));
    text.push_str(&format!("non-rare,,,,{}\n", cell(report.non_rare)));
    write_text(path, &text)
}
