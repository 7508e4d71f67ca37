//! Core data types, box geometry, and dataset file I/O.
//!
//! A dataset is a text manifest plus a binary feature blob side by side:
//!
//! ```text
//! IDN-MANIFEST v1 n_verbs=<n> feat_dims=<au,ah,ao>
//! I <id> <kind> <category> <conf> <x1> <y1> <x2> <y2> <W> <H> <blob-offset> [<k> x y ...]
//! P <human-id> <object-id> <blob-offset> <verb-indices comma-list or '-'>
//! ```
//!
//! `kind` is `human` or `object`; blob offsets are byte offsets into
//! `<manifest stem>.blob`, which holds little-endian f32 features (instance
//! features have width `ah`/`ao` by kind, pair union features width `au`).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

// ── Geometry ────────────────────────────────────────────────────────────────

/// Axis-aligned box in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<BoundingBox> {
        if !(x1 >= 0.0 && y1 >= 0.0 && x1 < x2 && y1 < y2) || !x2.is_finite() || !y2.is_finite() {
            return Err(Error::Contract(format!(
                "box wants 0 <= x1 < x2 and 0 <= y1 < y2, got ({x1}, {y1}, {x2}, {y2})"
            )));
        }
        Ok(BoundingBox { x1, y1, x2, y2 })
    }

    pub fn area(&self) -> f64 {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }
}

/// Tight hull of two boxes.
pub fn union_box(a: &BoundingBox, b: &BoundingBox) -> BoundingBox {
    BoundingBox {
        x1: a.x1.min(b.x1),
        y1: a.y1.min(b.y1),
        x2: a.x2.max(b.x2),
        y2: a.y2.max(b.y2),
    }
}

/// Scale box corners into `[0,1]` by image size, clipping into the image
/// first.
pub fn normalize_box(b: &BoundingBox, image_w: f64, image_h: f64) -> Result<[f64; 4]> {
    if !(image_w > 0.0) || !(image_h > 0.0) {
        return Err(Error::Contract(format!(
            "normalize_box wants positive image dims, got {image_w}x{image_h}"
        )));
    }
    Ok([
        (b.x1.min(image_w)) / image_w,
        (b.y1.min(image_h)) / image_h,
        (b.x2.min(image_w)) / image_w,
        (b.y2.min(image_h)) / image_h,
    ])
}

// ── Instances and pairs ─────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceKind {
    Human,
    Object,
}

impl InstanceKind {
    fn as_str(&self) -> &'static str {
        match self {
            InstanceKind::Human => "human",
            InstanceKind::Object => "object",
        }
    }
}

/// A detected human or object with its appearance feature.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: u32,
    pub kind: InstanceKind,
    /// Object-class index; humans use the fixed class 0.
    pub category: u32,
    pub confidence: f64,
    pub bbox: BoundingBox,
    pub image_w: f64,
    pub image_h: f64,
    /// Pose keypoints, humans only. A keypoint with any negative coordinate
    /// counts as invalid (undetected).
    pub keypoints: Option<Vec<(f64, f64)>>,
    pub feature: Tensor,
}

/// One human-object pair with its union appearance feature and verb labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSample {
    pub human_id: u32,
    pub object_id: u32,
    pub union_feature: Tensor,
    /// Multi-hot verb labels, length `n_verbs`.
    pub verbs: Vec<bool>,
}

impl PairSample {
    /// Interactiveness is defined by the labels: zero iff no verb is set.
    pub fn interactive(&self) -> bool {
        self.verbs.iter().any(|&v| v)
    }
}

/// Appearance feature widths `(union, human, object)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatDims {
    pub union: usize,
    pub human: usize,
    pub object: usize,
}

// ── Dataset ─────────────────────────────────────────────────────────────────

/// Validated collection of instances and pairs.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub n_verbs: usize,
    pub feat_dims: FeatDims,
    instances: Vec<Instance>,
    pairs: Vec<PairSample>,
    index: BTreeMap<u32, usize>,
}

impl Dataset {
    pub fn new(
        n_verbs: usize,
        feat_dims: FeatDims,
        instances: Vec<Instance>,
        pairs: Vec<PairSample>,
    ) -> Result<Dataset> {
        if n_verbs == 0 {
            return Err(Error::Contract("dataset wants n_verbs >= 1".into()));
        }
        if feat_dims.union == 0 || feat_dims.human == 0 || feat_dims.object == 0 {
            return Err(Error::Contract(format!("zero feature width in {feat_dims:?}")));
        }
        let mut index = BTreeMap::new();
        for (i, inst) in instances.iter().enumerate() {
            if index.insert(inst.id, i).is_some() {
                return Err(Error::Contract(format!("duplicate instance id {}", inst.id)));
            }
            if !(0.0..=1.0).contains(&inst.confidence) {
                return Err(Error::Contract(format!(
                    "instance {}: confidence {} outside [0,1]",
                    inst.id, inst.confidence
                )));
            }
            if inst.kind == InstanceKind::Object && inst.keypoints.is_some() {
                return Err(Error::Contract(format!(
                    "instance {}: objects cannot carry pose keypoints",
                    inst.id
                )));
            }
            let want = match inst.kind {
                InstanceKind::Human => feat_dims.human,
                InstanceKind::Object => feat_dims.object,
            };
            if inst.feature.rank() != 1 || inst.feature.len() != want {
                return Err(Error::Dimension(format!(
                    "instance {}: feature shape {:?}, want [{want}]",
                    inst.id,
                    inst.feature.shape()
                )));
            }
        }
        for pair in &pairs {
            let h = index
                .get(&pair.human_id)
                .ok_or_else(|| Error::Contract(format!("pair references unknown id {}", pair.human_id)))?;
            let o = index
                .get(&pair.object_id)
                .ok_or_else(|| Error::Contract(format!("pair references unknown id {}", pair.object_id)))?;
            if instances[*h].kind != InstanceKind::Human {
                return Err(Error::Contract(format!(
                    "pair human slot references {} which is {}",
                    pair.human_id,
                    instances[*h].kind.as_str()
                )));
            }
            if instances[*o].kind != InstanceKind::Object {
                return Err(Error::Contract(format!(
                    "pair object slot references {} which is {}",
                    pair.object_id,
                    instances[*o].kind.as_str()
                )));
            }
            if pair.verbs.len() != n_verbs {
                return Err(Error::Dimension(format!(
                    "pair {}-{}: {} verb labels, want {n_verbs}",
                    pair.human_id,
                    pair.object_id,
                    pair.verbs.len()
                )));
            }
            if pair.union_feature.rank() != 1 || pair.union_feature.len() != feat_dims.union {
                return Err(Error::Dimension(format!(
                    "pair {}-{}: union feature shape {:?}, want [{}]",
                    pair.human_id,
                    pair.object_id,
                    pair.union_feature.shape(),
                    feat_dims.union
                )));
            }
        }
        Ok(Dataset { n_verbs, feat_dims, instances, pairs, index })
    }

    pub fn n_verbs(&self) -> usize {
        self.n_verbs
    }

    pub fn feat_dims(&self) -> FeatDims {
        self.feat_dims
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn pairs(&self) -> &[PairSample] {
        &self.pairs
    }

    pub fn instance_index(&self, id: u32) -> Result<usize> {
        self.index
            .get(&id)
            .copied()
            .ok_or_else(|| Error::Contract(format!("unknown instance id {id}")))
    }

    pub fn instance_by_id(&self, id: u32) -> Result<&Instance> {
        Ok(&self.instances[self.instance_index(id)?])
    }

    pub fn human_of(&self, pair: &PairSample) -> &Instance {
        &self.instances[self.index[&pair.human_id]]
    }

    pub fn object_of(&self, pair: &PairSample) -> &Instance {
        &self.instances[self.index[&pair.object_id]]
    }

    /// Indices of pairs carrying at least one verb, and of pairs carrying none.
    pub fn split_by_interactiveness(&self) -> (Vec<usize>, Vec<usize>) {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for (i, p) in self.pairs.iter().enumerate() {
            if p.interactive() {
                pos.push(i);
            } else {
                neg.push(i);
            }
        }
        (pos, neg)
    }
}

// ── File I/O ────────────────────────────────────────────────────────────────

/// The feature blob lives next to the manifest with a `.blob` extension.
pub fn blob_path_for(manifest: &Path) -> PathBuf {
    manifest.with_extension("blob")
}

fn push_f32s(blob: &mut Vec<u8>, data: &[f64]) -> usize {
    let offset = blob.len();
    for &v in data {
        blob.extend_from_slice(&(v as f32).to_le_bytes());
    }
    offset
}

fn fmt_float(v: f64) -> String {
    // Shortest-roundtrip formatting keeps save -> load the identity.
    format!("{v}")
}

/// Write `<path>` and the sibling blob file.
pub fn save_dataset(dataset: &Dataset, manifest_path: &Path) -> Result<()> {
    let mut text = String::new();
    let mut blob: Vec<u8> = Vec::new();
    writeln!(
        text,
        "IDN-MANIFEST v1 n_verbs={} feat_dims={},{},{}",
        dataset.n_verbs,
        dataset.feat_dims.union,
        dataset.feat_dims.human,
        dataset.feat_dims.object
    )
    .expect("string write");
    for inst in &dataset.instances {
        let offset = push_f32s(&mut blob, inst.feature.data());
        write!(
            text,
            "I {} {} {} {} {} {} {} {} {} {} {}",
            inst.id,
            inst.kind.as_str(),
            inst.category,
            fmt_float(inst.confidence),
            fmt_float(inst.bbox.x1),
            fmt_float(inst.bbox.y1),
            fmt_float(inst.bbox.x2),
            fmt_float(inst.bbox.y2),
            fmt_float(inst.image_w),
            fmt_float(inst.image_h),
            offset
        )
        .expect("string write");
        if let Some(kps) = &inst.keypoints {
            write!(text, " {}", kps.len()).expect("string write");
            for (x, y) in kps {
                write!(text, " {} {}", fmt_float(*x), fmt_float(*y)).expect("string write");
            }
        }
        text.push('\n');
    }
    for pair in &dataset.pairs {
        let offset = push_f32s(&mut blob, pair.union_feature.data());
        let verbs: Vec<String> = pair
            .verbs
            .iter()
            .enumerate()
            .filter(|(_, &on)| on)
            .map(|(i, _)| i.to_string())
            .collect();
        let verbs = if verbs.is_empty() { "-".to_string() } else { verbs.join(",") };
        writeln!(
            text,
            "P {} {} {} {}",
            pair.human_id, pair.object_id, offset, verbs
        )
        .expect("string write");
    }
    if let Some(dir) = manifest_path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        }
    }
    fs::write(manifest_path, text)
        .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
    let blob_path = blob_path_for(manifest_path);
    fs::write(&blob_path, blob).map_err(|e| Error::io(blob_path.display().to_string(), e))?;
    Ok(())
}

struct LineParser<'a> {
    tokens: Vec<&'a str>,
    at: usize,
    line_no: usize,
}

impl<'a> LineParser<'a> {
    fn new(line: &'a str, line_no: usize) -> LineParser<'a> {
        LineParser { tokens: line.split_whitespace().collect(), at: 0, line_no }
    }

    fn fail(&self, message: impl Into<String>) -> Error {
        Error::Parse { line: self.line_no, message: message.into() }
    }

    fn next(&mut self, what: &str) -> Result<&'a str> {
        let t = self
            .tokens
            .get(self.at)
            .ok_or_else(|| self.fail(format!("missing {what}")))?;
        self.at += 1;
        Ok(t)
    }

    fn next_u32(&mut self, what: &str) -> Result<u32> {
        let t = self.next(what)?;
        t.parse().map_err(|_| self.fail(format!("bad {what} '{t}'")))
    }

    fn next_usize(&mut self, what: &str) -> Result<usize> {
        let t = self.next(what)?;
        t.parse().map_err(|_| self.fail(format!("bad {what} '{t}'")))
    }

    fn next_f64(&mut self, what: &str) -> Result<f64> {
        let t = self.next(what)?;
        let v: f64 = t.parse().map_err(|_| self.fail(format!("bad {what} '{t}'")))?;
        if !v.is_finite() {
            return Err(self.fail(format!("non-finite {what} '{t}'")));
        }
        Ok(v)
    }

    fn done(&self) -> bool {
        self.at == self.tokens.len()
    }
}

fn read_feature(
    blob: &[u8],
    offset: usize,
    width: usize,
    owner: &str,
) -> Result<Tensor> {
    let end = offset + width * 4;
    if end > blob.len() {
        return Err(Error::Format(format!(
            "{owner}: feature at byte {offset} (width {width}) runs past blob end ({} bytes)",
            blob.len()
        )));
    }
    let mut data = Vec::with_capacity(width);
    for chunk in blob[offset..end].chunks_exact(4) {
        data.push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]) as f64);
    }
    Tensor::from_vec(data)
}

/// Read a manifest and its sibling blob back into a validated [`Dataset`].
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(manifest_path)
        .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
    let blob_path = blob_path_for(manifest_path);
    let blob = fs::read(&blob_path).map_err(|e| Error::io(blob_path.display().to_string(), e))?;

    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (header_no, header) = lines
        .next()
        .ok_or_else(|| Error::Parse { line: 1, message: "empty manifest".into() })?;
    let mut hp = LineParser::new(header, header_no);
    if hp.next("magic")? != "IDN-MANIFEST" || hp.next("version")? != "v1" {
        return Err(hp.fail("header must start with 'IDN-MANIFEST v1'"));
    }
    let n_verbs_tok = hp.next("n_verbs field")?;
    let n_verbs: usize = n_verbs_tok
        .strip_prefix("n_verbs=")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| hp.fail(format!("bad n_verbs field '{n_verbs_tok}'")))?;
    let dims_tok = hp.next("feat_dims field")?;
    let dims: Vec<usize> = dims_tok
        .strip_prefix("feat_dims=")
        .map(|v| v.split(',').map(|d| d.parse().unwrap_or(0)).collect())
        .ok_or_else(|| hp.fail(format!("bad feat_dims field '{dims_tok}'")))?;
    if dims.len() != 3 || dims.contains(&0) {
        return Err(hp.fail(format!("feat_dims wants three nonzero widths, got '{dims_tok}'")));
    }
    let feat_dims = FeatDims { union: dims[0], human: dims[1], object: dims[2] };

    let mut instances = Vec::new();
    let mut pairs = Vec::new();
    for (line_no, raw) in lines {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut p = LineParser::new(line, line_no);
        match p.next("record tag")? {
            "I" => {
                let id = p.next_u32("instance id")?;
                let kind = match p.next("kind")? {
                    "human" => InstanceKind::Human,
                    "object" => InstanceKind::Object,
                    other => return Err(p.fail(format!("unknown kind '{other}'"))),
                };
                let category = p.next_u32("category")?;
                let confidence = p.next_f64("confidence")?;
                let x1 = p.next_f64("x1")?;
                let y1 = p.next_f64("y1")?;
                let x2 = p.next_f64("x2")?;
                let y2 = p.next_f64("y2")?;
                let image_w = p.next_f64("image width")?;
                let image_h = p.next_f64("image height")?;
                let offset = p.next_usize("blob offset")?;
                let keypoints = if p.done() {
                    None
                } else {
                    let k = p.next_usize("keypoint count")?;
                    let mut kps = Vec::with_capacity(k);
                    for _ in 0..k {
                        let x = p.next_f64("keypoint x")?;
                        let y = p.next_f64("keypoint y")?;
                        kps.push((x, y));
                    }
                    Some(kps)
                };
                if !p.done() {
                    return Err(p.fail("trailing tokens on instance record"));
                }
                let bbox = BoundingBox::new(x1, y1, x2, y2)
                    .map_err(|e| p.fail(format!("instance {id}: {e}")))?;
                let width = match kind {
                    InstanceKind::Human => feat_dims.human,
                    InstanceKind::Object => feat_dims.object,
                };
                let feature = read_feature(&blob, offset, width, &format!("instance {id}"))?;
                instances.push(Instance {
                    id,
                    kind,
                    category,
                    confidence,
                    bbox,
                    image_w,
                    image_h,
                    keypoints,
                    feature,
                });
            }
            "P" => {
                let human_id = p.next_u32("human id")?;
                let object_id = p.next_u32("object id")?;
                let offset = p.next_usize("blob offset")?;
                let verbs_tok = p.next("verb list")?;
                if !p.done() {
                    return Err(p.fail("trailing tokens on pair record"));
                }
                let mut verbs = vec![false; n_verbs];
                if verbs_tok != "-" {
                    for part in verbs_tok.split(',') {
                        let v: usize = part
                            .parse()
                            .map_err(|_| p.fail(format!("bad verb index '{part}'")))?;
                        if v >= n_verbs {
                            return Err(p.fail(format!(
                                "verb index {v} out of range (n_verbs={n_verbs})"
                            )));
                        }
                        verbs[v] = true;
                    }
                }
                let union_feature = read_feature(
                    &blob,
                    offset,
                    feat_dims.union,
                    &format!("pair {human_id}-{object_id}"),
                )?;
                pairs.push(PairSample { human_id, object_id, union_feature, verbs });
            }
            other => return Err(p.fail(format!("unknown record tag '{other}'"))),
        }
    }
    Dataset::new(n_verbs, feat_dims, instances, pairs)
}
