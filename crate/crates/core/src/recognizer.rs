//! Recognizers the device agent can host, including a DTW nearest-neighbour
//! reference classifier.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::dataset::SamplePool;
use crate::trajectory::{normalize_strokes, Sample, Stroke, TrajectoryError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecognizerError {
    #[error("template store is empty")]
    EmptyStore,
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error("oracle label file line {line}: {reason}")]
    BadLabelFile { line: usize, reason: &'static str },
}

/// Anything that turns a finished handwriting sample into committed text.
///
/// An empty string means nothing was committed. Implementations must be
/// deterministic for a fixed internal state.
pub trait Recognizer: Send + Sync {
    fn recognize(&self, sample_index: u32, strokes: &[Stroke]) -> String;
}

impl<R: Recognizer + ?Sized> Recognizer for Box<R> {
    fn recognize(&self, sample_index: u32, strokes: &[Stroke]) -> String {
        (**self).recognize(sample_index, strokes)
    }
}

impl<R: Recognizer + ?Sized> Recognizer for std::sync::Arc<R> {
    fn recognize(&self, sample_index: u32, strokes: &[Stroke]) -> String {
        (**self).recognize(sample_index, strokes)
    }
}

/// Always answers the same text.
#[derive(Debug, Clone)]
pub struct ConstantRecognizer(pub String);

impl Recognizer for ConstantRecognizer {
    fn recognize(&self, _: u32, _: &[Stroke]) -> String {
        self.0.clone()
    }
}

/// Answers the ground truth from a label map loaded out of band. Unknown
/// sample indices commit nothing.
#[derive(Debug, Clone, Default)]
pub struct OracleRecognizer {
    labels: HashMap<u32, String>,
}

impl OracleRecognizer {
    pub fn new(labels: HashMap<u32, String>) -> Self {
        Self { labels }
    }

    /// Parses `sample_index<TAB>label` lines.
    pub fn parse(text: &str) -> Result<Self, RecognizerError> {
        let mut labels = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let bad = |reason| RecognizerError::BadLabelFile { line: i + 1, reason };
            let (idx, label) = line.split_once('\t').ok_or_else(|| bad("expected index<TAB>label"))?;
            let idx: u32 = idx.parse().map_err(|_| bad("bad sample index"))?;
            if labels.insert(idx, label.to_owned()).is_some() {
                return Err(bad("duplicate sample index"));
            }
        }
        Ok(Self { labels })
    }

    pub fn to_text<'a>(labels: impl IntoIterator<Item = (u32, &'a str)>) -> String {
        labels.into_iter().map(|(i, l)| format!("{i}\t{l}\n")).collect()
    }
}

impl Recognizer for OracleRecognizer {
    fn recognize(&self, sample_index: u32, _: &[Stroke]) -> String {
        self.labels.get(&sample_index).cloned().unwrap_or_default()
    }
}

/// Dynamic time warping over two index ranges with a caller-supplied local
/// cost. Steps (i+1, j), (i, j+1), (i+1, j+1); both ends anchored.
///
/// Returns `None` if either sequence is empty.
pub fn dtw_with_cost<F>(n: usize, m: usize, cost: F) -> Option<f64>
where
    F: Fn(usize, usize) -> f64,
{
    if n == 0 || m == 0 {
        return None;
    }
    let mut prev = vec![f64::INFINITY; m];
    let mut curr = vec![f64::INFINITY; m];
    for i in 0..n {
        for j in 0..m {
            let c = cost(i, j);
            let best = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => curr[j - 1],
                (_, 0) => prev[0],
                _ => prev[j].min(curr[j - 1]).min(prev[j - 1]),
            };
            curr[j] = c + best;
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    Some(prev[m - 1])
}

/// Classic DTW with Euclidean local cost.
pub fn dtw_distance(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    dtw_with_cost(a.len(), b.len(), |i, j| {
        let (dx, dy) = (a[i].0 - b[j].0, a[i].1 - b[j].1);
        dx.hypot(dy)
    })
    .expect("dtw_distance needs non-empty sequences")
}

/// One point of a stroke sequence flattened for matching. `pen_down` marks
/// the first point of every stroke after the first, i.e. a pen-up
/// transition just happened.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeqPoint {
    pub x: f64,
    pub y: f64,
    pub pen_down: bool,
}

pub fn flatten(strokes: &[Stroke]) -> Vec<SeqPoint> {
    strokes
        .iter()
        .enumerate()
        .flat_map(|(si, s)| {
            s.points().iter().enumerate().map(move |(pi, p)| SeqPoint {
                x: f64::from(p.x),
                y: f64::from(p.y),
                pen_down: si > 0 && pi == 0,
            })
        })
        .collect()
}

/// DTW over flattened strokes: Euclidean distance plus `gap_penalty`
/// whenever a pen-up transition is aligned with a non-transition point.
pub fn stroke_dtw(a: &[SeqPoint], b: &[SeqPoint], gap_penalty: f64) -> f64 {
    dtw_with_cost(a.len(), b.len(), |i, j| {
        let (p, q) = (a[i], b[j]);
        let d = (p.x - q.x).hypot(p.y - q.y);
        if p.pen_down != q.pen_down {
            d + gap_penalty
        } else {
            d
        }
    })
    .expect("flattened strokes are never empty")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub sample_id: u32,
    pub points: Vec<SeqPoint>,
}

/// Normalized reference sequences keyed by label.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TemplateStore {
    templates: BTreeMap<String, Vec<Template>>,
}

impl TemplateStore {
    pub fn len(&self) -> usize {
        self.templates.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    pub fn templates(&self, label: &str) -> &[Template] {
        self.templates.get(label).map_or(&[], Vec::as_slice)
    }
}

/// Keeps the first `per_label` samples of every label, in pool order.
pub fn train_templates(pool: &SamplePool, target: u32, per_label: usize) -> Result<TemplateStore, RecognizerError> {
    let mut templates: BTreeMap<String, Vec<Template>> = BTreeMap::new();
    for sample in &pool.samples {
        let slot = templates.entry(sample.label().to_owned()).or_default();
        if slot.len() < per_label {
            slot.push(Template {
                sample_id: sample.id,
                points: flatten(&normalize_strokes(sample.strokes(), target)?),
            });
        }
    }
    templates.retain(|_, v| !v.is_empty());
    Ok(TemplateStore { templates })
}

/// Nearest-neighbour classifier over a [`TemplateStore`].
#[derive(Debug, Clone)]
pub struct NearestNeighbor {
    store: TemplateStore,
    target: u32,
    gap_penalty: f64,
}

impl NearestNeighbor {
    /// Gap penalty defaults to a quarter of the normalization target.
    pub fn new(store: TemplateStore, target: u32) -> Result<Self, RecognizerError> {
        Self::with_gap_penalty(store, target, f64::from(target) / 4.0)
    }

    pub fn with_gap_penalty(store: TemplateStore, target: u32, gap_penalty: f64) -> Result<Self, RecognizerError> {
        if store.is_empty() {
            return Err(RecognizerError::EmptyStore);
        }
        Ok(Self {
            store,
            target,
            gap_penalty,
        })
    }

    pub fn gap_penalty(&self) -> f64 {
        self.gap_penalty
    }

    /// Label of the closest template. Ties go to the smallest label.
    pub fn classify(&self, strokes: &[Stroke]) -> Result<String, RecognizerError> {
        let query = flatten(&normalize_strokes(strokes, self.target)?);
        let mut best: Option<(f64, &str)> = None;
        // BTreeMap iteration is label-ordered, so strict `<` keeps the
        // smallest label on ties.
        for (label, templates) in &self.store.templates {
            for t in templates {
                let d = stroke_dtw(&query, &t.points, self.gap_penalty);
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, label));
                }
            }
        }
        Ok(best.map(|(_, l)| l.to_owned()).expect("store is non-empty"))
    }
}

impl Recognizer for NearestNeighbor {
    fn recognize(&self, _: u32, strokes: &[Stroke]) -> String {
        self.classify(strokes).unwrap_or_default()
    }
}

pub fn nn_classify(sample: &Sample, store: &TemplateStore, target: u32) -> Result<String, RecognizerError> {
    if store.is_empty() {
        return Err(RecognizerError::EmptyStore);
    }
    NearestNeighbor::new(store.clone(), target)?.classify(sample.strokes())
}
