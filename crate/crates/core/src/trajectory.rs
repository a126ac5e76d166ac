//! Trajectory data model: points, strokes, samples, touch events, and the
//! transformations applied to them before and after replay (size
//! normalization, event encoding, and touch-screen point thinning).

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrajectoryError {
    #[error("stroke has no points")]
    EmptyStroke,
    #[error("stroke timestamps decrease at point {index}")]
    NonMonotonicTime { index: usize },
    #[error("sample has no strokes")]
    NoStrokes,
    #[error("sample label is empty")]
    EmptyLabel,
    #[error("normalization target {0} is outside 1..=32767")]
    InvalidTarget(u32),
    #[error("malformed touch stream at event {index}: {reason}")]
    MalformedStream { index: usize, reason: &'static str },
}

/// A point on the integer touch grid with a nominal timestamp in
/// milliseconds since the start of the sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Point {
    pub x: i16,
    pub y: i16,
    pub t: u32,
}

impl Point {
    pub const fn new(x: i16, y: i16, t: u32) -> Self {
        Self { x, y, t }
    }

    /// Point without timing information (sample files carry none).
    pub const fn at(x: i16, y: i16) -> Self {
        Self { x, y, t: 0 }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        let dx = f64::from(self.x) - f64::from(other.x);
        let dy = f64::from(self.y) - f64::from(other.y);
        dx.hypot(dy)
    }
}

/// One continuous pen contact. Never empty; timestamps never decrease.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Stroke {
    points: Vec<Point>,
}

impl Stroke {
    pub fn new(points: Vec<Point>) -> Result<Self, TrajectoryError> {
        if points.is_empty() {
            return Err(TrajectoryError::EmptyStroke);
        }
        if let Some(index) = points.windows(2).position(|w| w[1].t < w[0].t) {
            return Err(TrajectoryError::NonMonotonicTime { index: index + 1 });
        }
        Ok(Self { points })
    }

    /// Builds an untimed stroke from grid coordinates.
    pub fn from_coords(coords: &[(i16, i16)]) -> Result<Self, TrajectoryError> {
        Self::new(coords.iter().map(|&(x, y)| Point::at(x, y)).collect())
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn first(&self) -> Point {
        self.points[0]
    }

    pub fn last(&self) -> Point {
        self.points[self.points.len() - 1]
    }

    pub fn coords(&self) -> impl Iterator<Item = (i16, i16)> + '_ {
        self.points.iter().map(|p| (p.x, p.y))
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }
}

/// A labeled handwritten character.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Sample {
    pub id: u32,
    label: String,
    strokes: Vec<Stroke>,
}

impl Sample {
    pub fn new(id: u32, label: impl Into<String>, strokes: Vec<Stroke>) -> Result<Self, TrajectoryError> {
        let label = label.into();
        if label.is_empty() {
            return Err(TrajectoryError::EmptyLabel);
        }
        if strokes.is_empty() {
            return Err(TrajectoryError::NoStrokes);
        }
        Ok(Self { id, label, strokes })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn strokes(&self) -> &[Stroke] {
        &self.strokes
    }

    pub fn point_count(&self) -> usize {
        self.strokes.iter().map(Stroke::len).sum()
    }

    pub fn points(&self) -> impl Iterator<Item = &Point> {
        self.strokes.iter().flat_map(|s| s.points.iter())
    }

    /// Same sample with different strokes, keeping id and label.
    pub fn with_strokes(&self, strokes: Vec<Stroke>) -> Result<Self, TrajectoryError> {
        Self::new(self.id, self.label.clone(), strokes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TouchKind {
    Down,
    Move,
    Up,
}

impl TouchKind {
    pub fn code(self) -> u8 {
        match self {
            TouchKind::Down => 0,
            TouchKind::Move => 1,
            TouchKind::Up => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(TouchKind::Down),
            1 => Some(TouchKind::Move),
            2 => Some(TouchKind::Up),
            _ => None,
        }
    }
}

impl fmt::Display for TouchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TouchKind::Down => "down",
            TouchKind::Move => "move",
            TouchKind::Up => "up",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TouchEvent {
    pub kind: TouchKind,
    pub x: i16,
    pub y: i16,
    pub t: u32,
}

impl TouchEvent {
    pub const fn new(kind: TouchKind, x: i16, y: i16, t: u32) -> Self {
        Self { kind, x, y, t }
    }

    fn point(&self) -> Point {
        Point::new(self.x, self.y, self.t)
    }
}

/// Which point a resampler measures the gap from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Anchor {
    /// Last point that survived thinning.
    #[default]
    Kept,
    /// Immediately preceding input point, kept or not.
    Raw,
}

/// Touch-screen thinning model. A zero threshold disables that filter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ResampleConfig {
    pub time_threshold_ms: u32,
    pub distance_threshold: f64,
    pub anchor: Anchor,
}

impl ResampleConfig {
    pub fn disabled() -> Self {
        Self::default()
    }

    pub fn is_identity(&self) -> bool {
        self.time_threshold_ms == 0 && self.distance_threshold <= 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub min_x: i16,
    pub min_y: i16,
    pub max_x: i16,
    pub max_y: i16,
}

impl BoundingBox {
    pub fn width(&self) -> u32 {
        (i32::from(self.max_x) - i32::from(self.min_x)) as u32
    }

    pub fn height(&self) -> u32 {
        (i32::from(self.max_y) - i32::from(self.min_y)) as u32
    }

    fn of_points<'a>(mut points: impl Iterator<Item = &'a Point>) -> Option<Self> {
        let first = points.next()?;
        let init = BoundingBox {
            min_x: first.x,
            min_y: first.y,
            max_x: first.x,
            max_y: first.y,
        };
        Some(points.fold(init, |b, p| BoundingBox {
            min_x: b.min_x.min(p.x),
            min_y: b.min_y.min(p.y),
            max_x: b.max_x.max(p.x),
            max_y: b.max_y.max(p.y),
        }))
    }
}

pub fn bounding_box(sample: &Sample) -> BoundingBox {
    BoundingBox::of_points(sample.points()).expect("samples hold at least one point")
}

/// Normalizes a stroke set so its box starts at the origin and its larger
/// side spans exactly `target` grid units.
///
/// Coordinates are mapped with `(p - min) * target / extent`, rounded half
/// away from zero in exact integer arithmetic. If every point coincides the
/// strokes are only translated.
pub fn normalize_strokes(strokes: &[Stroke], target: u32) -> Result<Vec<Stroke>, TrajectoryError> {
    if target == 0 || target > i16::MAX as u32 {
        return Err(TrajectoryError::InvalidTarget(target));
    }
    let bbox =
        BoundingBox::of_points(strokes.iter().flat_map(|s| s.points.iter())).ok_or(TrajectoryError::NoStrokes)?;
    let extent = i64::from(bbox.width().max(bbox.height()));
    let target = i64::from(target);
    let map = |v: i16, min: i16| -> i16 {
        let offset = i64::from(v) - i64::from(min);
        if extent == 0 {
            return offset as i16;
        }
        // offset >= 0, so half-away-from-zero is floor(x + 1/2).
        let scaled = (2 * offset * target + extent) / (2 * extent);
        scaled as i16
    };
    Ok(strokes
        .iter()
        .map(|s| Stroke {
            points: s
                .points
                .iter()
                .map(|p| Point::new(map(p.x, bbox.min_x), map(p.y, bbox.min_y), p.t))
                .collect(),
        })
        .collect())
}

pub fn normalize_size(sample: &Sample, target: u32) -> Result<Sample, TrajectoryError> {
    sample.with_strokes(normalize_strokes(sample.strokes(), target)?)
}

/// Encodes strokes as a touch-event stream on a uniform `t1_ms` cadence.
///
/// Every emitted event occupies one tick, starting at t=0 and continuing
/// across stroke boundaries. A single-point stroke becomes a Down and an Up
/// at the same coordinates one tick apart.
pub fn to_touch_events(sample: &Sample, t1_ms: u32) -> Vec<TouchEvent> {
    strokes_to_touch_events(sample.strokes(), t1_ms)
}

pub fn strokes_to_touch_events(strokes: &[Stroke], t1_ms: u32) -> Vec<TouchEvent> {
    let t1 = t1_ms.max(1);
    let mut events = Vec::with_capacity(strokes.iter().map(|s| s.len() + 1).sum());
    let mut tick: u32 = 0;
    let mut emit = |kind, p: &Point| {
        events.push(TouchEvent::new(kind, p.x, p.y, tick.saturating_mul(t1)));
        tick = tick.saturating_add(1);
    };
    for stroke in strokes {
        let pts = stroke.points();
        match pts {
            [only] => {
                emit(TouchKind::Down, only);
                emit(TouchKind::Up, only);
            }
            [first, interior @ .., last] => {
                emit(TouchKind::Down, first);
                for p in interior {
                    emit(TouchKind::Move, p);
                }
                emit(TouchKind::Up, last);
            }
            [] => unreachable!("strokes are never empty"),
        }
    }
    events
}

/// Rebuilds strokes from a touch-event stream.
///
/// A run consisting of exactly a Down and an Up at identical coordinates
/// collapses to a single-point stroke.
pub fn from_touch_events(events: &[TouchEvent]) -> Result<Vec<Stroke>, TrajectoryError> {
    let malformed = |index, reason| TrajectoryError::MalformedStream { index, reason };
    let mut strokes = Vec::new();
    let mut open: Option<Vec<Point>> = None;
    let mut last_t: Option<u32> = None;
    for (index, ev) in events.iter().enumerate() {
        if last_t.is_some_and(|t| ev.t < t) {
            return Err(malformed(index, "timestamp decreases"));
        }
        last_t = Some(ev.t);
        match (ev.kind, open.as_mut()) {
            (TouchKind::Down, None) => open = Some(vec![ev.point()]),
            (TouchKind::Down, Some(_)) => return Err(malformed(index, "down inside an open stroke")),
            (TouchKind::Move, Some(points)) => points.push(ev.point()),
            (TouchKind::Move, None) => return Err(malformed(index, "move before down")),
            (TouchKind::Up, Some(points)) => {
                let down = points[0];
                if !(points.len() == 1 && down.x == ev.x && down.y == ev.y) {
                    points.push(ev.point());
                }
                let points = open.take().expect("open stroke");
                strokes.push(Stroke { points });
            }
            (TouchKind::Up, None) => return Err(malformed(index, "up before down")),
        }
    }
    if open.is_some() {
        return Err(malformed(events.len(), "trailing open stroke"));
    }
    Ok(strokes)
}

/// Greedy thinning shared by both resamplers: the first point is kept, each
/// later point is kept iff `gap(anchor, point) >= threshold`, and the last
/// point is always kept.
fn thin<F>(points: &[Point], anchor: Anchor, keep: F) -> Vec<Point>
where
    F: Fn(&Point, &Point) -> bool,
{
    let Some((first, rest)) = points.split_first() else {
        return Vec::new();
    };
    let mut out = vec![*first];
    let mut kept = *first;
    let mut prev = *first;
    for (i, p) in rest.iter().enumerate() {
        let reference = match anchor {
            Anchor::Kept => kept,
            Anchor::Raw => prev,
        };
        if keep(&reference, p) || i + 1 == rest.len() {
            out.push(*p);
            kept = *p;
        }
        prev = *p;
    }
    out
}

/// Drops points arriving sooner than `threshold_ms` after the last kept one.
pub fn resample_time(points: &[Point], threshold_ms: u32) -> Vec<Point> {
    resample_time_with(points, threshold_ms, Anchor::Kept)
}

pub fn resample_time_with(points: &[Point], threshold_ms: u32, anchor: Anchor) -> Vec<Point> {
    if threshold_ms == 0 {
        return points.to_vec();
    }
    thin(points, anchor, |a, b| b.t.saturating_sub(a.t) >= threshold_ms)
}

/// Drops points closer than `threshold` grid units to the last kept one.
pub fn resample_distance(points: &[Point], threshold: f64) -> Vec<Point> {
    resample_distance_with(points, threshold, Anchor::Kept)
}

pub fn resample_distance_with(points: &[Point], threshold: f64, anchor: Anchor) -> Vec<Point> {
    if threshold <= 0.0 {
        return points.to_vec();
    }
    thin(points, anchor, |a, b| a.distance(b) >= threshold)
}

/// Applies the touch-screen model to one stroke: time thinning, then
/// distance thinning.
pub fn resample_stroke(stroke: &Stroke, config: &ResampleConfig) -> Stroke {
    let timed = resample_time_with(stroke.points(), config.time_threshold_ms, config.anchor);
    let points = resample_distance_with(&timed, config.distance_threshold, config.anchor);
    Stroke { points }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn timed(ts: &[u32]) -> Vec<Point> {
        ts.iter().map(|&t| Point::new(0, 0, t)).collect()
    }

    fn sample(strokes: &[&[(i16, i16)]]) -> Sample {
        let strokes = strokes.iter().map(|s| Stroke::from_coords(s).unwrap()).collect();
        Sample::new(0, "x", strokes).unwrap()
    }

    #[test]
    fn stroke_and_sample_invariants() {
        assert_eq!(Stroke::new(vec![]), Err(TrajectoryError::EmptyStroke));
        assert_eq!(
            Stroke::new(timed(&[0, 5, 4])),
            Err(TrajectoryError::NonMonotonicTime { index: 2 })
        );
        assert_eq!(Sample::new(0, "a", vec![]), Err(TrajectoryError::NoStrokes));
        let s = Stroke::from_coords(&[(0, 0)]).unwrap();
        assert_eq!(Sample::new(0, "", vec![s]), Err(TrajectoryError::EmptyLabel));
    }

    #[test]
    fn bounding_box_examples() {
        let b = bounding_box(&sample(&[&[(5, 7)]]));
        assert_eq!((b.min_x, b.min_y, b.max_x, b.max_y), (5, 7, 5, 7));
        let b = bounding_box(&sample(&[&[(0, 0), (10, 4)]]));
        assert_eq!((b.min_x, b.min_y, b.max_x, b.max_y), (0, 0, 10, 4));
        let b = bounding_box(&sample(&[&[(-3, 2), (9, 2)], &[(1, -8)], &[(0, 0), (1, 12)]]));
        assert_eq!((b.min_x, b.min_y, b.max_x, b.max_y), (-3, -8, 9, 12));
    }

    #[test]
    fn normalize_examples() {
        let n = normalize_size(&sample(&[&[(0, 0), (90, 45)]]), 180).unwrap();
        let b = bounding_box(&n);
        assert_eq!((b.min_x, b.min_y, b.max_x, b.max_y), (0, 0, 180, 90));

        let n = normalize_size(&sample(&[&[(10, 10), (190, 190)]]), 180).unwrap();
        let b = bounding_box(&n);
        assert_eq!((b.min_x, b.min_y, b.max_x, b.max_y), (0, 0, 180, 180));

        let n = normalize_size(&sample(&[&[(2, 3), (32, 18), (62, 33)]]), 180).unwrap();
        let coords: Vec<_> = n.strokes()[0].coords().collect();
        assert_eq!(coords, vec![(0, 0), (90, 45), (180, 90)]);
    }

    #[test]
    fn normalize_rounds_half_away_from_zero() {
        // extent 4, target 2: offsets 1 and 3 map to 0.5 and 1.5.
        let n = normalize_size(&sample(&[&[(0, 0), (1, 0), (3, 0), (4, 0)]]), 2).unwrap();
        let xs: Vec<_> = n.strokes()[0].coords().map(|c| c.0).collect();
        assert_eq!(xs, vec![0, 1, 2, 2]);
    }

    #[test]
    fn normalize_degenerate_translates_only() {
        let n = normalize_size(&sample(&[&[(7, 9)], &[(7, 9)]]), 180).unwrap();
        assert!(n.points().all(|p| (p.x, p.y) == (0, 0)));
        // Horizontal line: y extent zero, y only translated.
        let n = normalize_size(&sample(&[&[(5, 3), (15, 3)]]), 180).unwrap();
        let coords: Vec<_> = n.strokes()[0].coords().collect();
        assert_eq!(coords, vec![(0, 0), (180, 0)]);
    }

    #[test]
    fn normalize_rejects_bad_target() {
        let s = sample(&[&[(0, 0)]]);
        assert_eq!(normalize_size(&s, 0), Err(TrajectoryError::InvalidTarget(0)));
        assert_eq!(normalize_size(&s, 40_000), Err(TrajectoryError::InvalidTarget(40_000)));
    }

    #[test]
    fn touch_event_examples() {
        use TouchKind::*;
        let ev = to_touch_events(&sample(&[&[(0, 0), (1, 1), (2, 2)]]), 6);
        let shape: Vec<_> = ev.iter().map(|e| (e.kind, e.t)).collect();
        assert_eq!(shape, vec![(Down, 0), (Move, 6), (Up, 12)]);

        let ev = to_touch_events(&sample(&[&[(4, 4)]]), 6);
        assert_eq!(ev, vec![TouchEvent::new(Down, 4, 4, 0), TouchEvent::new(Up, 4, 4, 6)]);

        let ev = to_touch_events(&sample(&[&[(0, 0), (1, 0)], &[(5, 5), (6, 5)]]), 10);
        let kinds: Vec<_> = ev.iter().map(|e| e.kind).collect();
        let ts: Vec<_> = ev.iter().map(|e| e.t).collect();
        assert_eq!(kinds, vec![Down, Up, Down, Up]);
        assert_eq!(ts, vec![0, 10, 20, 30]);
    }

    #[test]
    fn from_touch_events_examples() {
        use TouchKind::*;
        let strokes = from_touch_events(&[
            TouchEvent::new(Down, 1, 1, 0),
            TouchEvent::new(Move, 2, 2, 6),
            TouchEvent::new(Up, 3, 3, 12),
        ])
        .unwrap();
        assert_eq!(strokes.len(), 1);
        assert_eq!(strokes[0].len(), 3);

        let strokes = from_touch_events(&[TouchEvent::new(Down, 1, 1, 0), TouchEvent::new(Up, 1, 1, 6)]).unwrap();
        assert_eq!(strokes[0].points(), &[Point::new(1, 1, 0)]);

        // Identical coordinates with a Move in between are not collapsed.
        let strokes = from_touch_events(&[
            TouchEvent::new(Down, 1, 1, 0),
            TouchEvent::new(Move, 1, 1, 6),
            TouchEvent::new(Up, 1, 1, 12),
        ])
        .unwrap();
        assert_eq!(strokes[0].len(), 3);
    }

    #[test]
    fn from_touch_events_rejects_malformed() {
        use TouchKind::*;
        let cases: Vec<Vec<TouchEvent>> = vec![
            vec![TouchEvent::new(Move, 0, 0, 0)],
            vec![TouchEvent::new(Up, 0, 0, 0)],
            vec![TouchEvent::new(Down, 0, 0, 0), TouchEvent::new(Down, 0, 0, 1)],
            vec![TouchEvent::new(Down, 0, 0, 0), TouchEvent::new(Move, 1, 0, 1)],
            vec![TouchEvent::new(Down, 0, 0, 5), TouchEvent::new(Up, 1, 0, 4)],
        ];
        for events in cases {
            assert!(matches!(
                from_touch_events(&events),
                Err(TrajectoryError::MalformedStream { .. })
            ));
        }
        assert_eq!(from_touch_events(&[]).unwrap(), vec![]);
    }

    #[test]
    fn resample_time_examples() {
        let pts = timed(&[0, 6, 12, 18, 24]);
        assert_eq!(resample_time(&pts, 0), pts);
        let ts: Vec<_> = resample_time(&pts, 12).iter().map(|p| p.t).collect();
        assert_eq!(ts, vec![0, 12, 24]);
        let ts: Vec<_> = resample_time(&timed(&[0, 6, 12]), 100).iter().map(|p| p.t).collect();
        assert_eq!(ts, vec![0, 12]);
        assert!(resample_time(&[], 5).is_empty());
    }

    #[test]
    fn resample_time_raw_anchor_differs() {
        // Slow drift: every raw gap is 5, below the threshold of 8.
        let pts = timed(&[0, 5, 10, 15, 20]);
        let kept: Vec<_> = resample_time_with(&pts, 8, Anchor::Kept).iter().map(|p| p.t).collect();
        let raw: Vec<_> = resample_time_with(&pts, 8, Anchor::Raw).iter().map(|p| p.t).collect();
        assert_eq!(kept, vec![0, 10, 20]);
        assert_eq!(raw, vec![0, 20]);
    }

    #[test]
    fn resample_distance_examples() {
        let line: Vec<_> = (0..5).map(|x| Point::at(x, 0)).collect();
        assert_eq!(resample_distance(&line, 0.0), line);
        let xs: Vec<_> = resample_distance(&line, 2.0).iter().map(|p| p.x).collect();
        assert_eq!(xs, vec![0, 2, 4]);
        let pair = vec![Point::at(0, 0), Point::at(1, 0)];
        assert_eq!(resample_distance(&pair, 10.0), pair);
    }

    #[test]
    fn distance_thinning_can_grow_with_threshold_in_2d() {
        // Skipping an early point can leave later points far enough from
        // the anchor to survive.
        let pts: Vec<_> = [(5, 2), (1, -2), (-1, -5), (5, -2), (-4, -1), (-4, 2)]
            .iter()
            .map(|&(x, y)| Point::at(x, y))
            .collect();
        assert_eq!(resample_distance(&pts, 5.6).len(), 3);
        assert_eq!(resample_distance(&pts, 5.8).len(), 5);
    }

    #[test]
    fn resample_stroke_composes_time_then_distance() {
        let pts: Vec<_> = (0..9).map(|i| Point::new(i as i16, 0, i * 6)).collect();
        let stroke = Stroke::new(pts).unwrap();
        let cfg = ResampleConfig {
            time_threshold_ms: 12,
            distance_threshold: 4.0,
            anchor: Anchor::Kept,
        };
        // time: x = 0,2,4,6,8; distance >= 4: 0,4,8.
        let xs: Vec<_> = resample_stroke(&stroke, &cfg).coords().map(|c| c.0).collect();
        assert_eq!(xs, vec![0, 4, 8]);
    }

    fn arb_sample() -> impl Strategy<Value = Sample> {
        let stroke = prop::collection::vec((-2000i16..2000, -2000i16..2000), 1..12);
        prop::collection::vec(stroke, 1..6).prop_map(|strokes| {
            let strokes = strokes.iter().map(|s| Stroke::from_coords(s).unwrap()).collect();
            Sample::new(1, "s", strokes).unwrap()
        })
    }

    fn is_well_formed(events: &[TouchEvent]) -> bool {
        let mut open = false;
        for ev in events {
            match ev.kind {
                TouchKind::Down if !open => open = true,
                TouchKind::Move if open => {}
                TouchKind::Up if open => open = false,
                _ => return false,
            }
        }
        !open && events.windows(2).all(|w| w[0].t <= w[1].t)
    }

    proptest! {
        #[test]
        fn event_stream_is_well_formed(s in arb_sample(), t1 in 1u32..50) {
            prop_assert!(is_well_formed(&to_touch_events(&s, t1)));
        }

        #[test]
        fn event_round_trip_preserves_geometry(s in arb_sample(), t1 in 1u32..50) {
            let back = from_touch_events(&to_touch_events(&s, t1)).unwrap();
            prop_assert_eq!(back.len(), s.strokes().len());
            for (orig, got) in s.strokes().iter().zip(&back) {
                let orig: Vec<_> = orig.coords().collect();
                let got: Vec<_> = got.coords().collect();
                if orig.len() == 2 && orig[0] == orig[1] {
                    prop_assert_eq!(got, vec![orig[0]]);
                } else {
                    prop_assert_eq!(got, orig);
                }
            }
        }

        #[test]
        fn normalization_is_idempotent_and_bounded(s in arb_sample(), target in 1u32..1000) {
            let once = normalize_size(&s, target).unwrap();
            let twice = normalize_size(&once, target).unwrap();
            prop_assert_eq!(&once, &twice);
            let b = bounding_box(&once);
            prop_assert_eq!((b.min_x, b.min_y), (0, 0));
            let orig = bounding_box(&s);
            if orig.width().max(orig.height()) > 0 {
                prop_assert_eq!(b.width().max(b.height()), target);
            }
        }

        #[test]
        fn resamplers_are_monotone_subsequences(
            gaps in prop::collection::vec(0u32..20, 1..40),
            coords in prop::collection::vec((-50i16..50, -50i16..50), 40),
            lo in 0u32..30,
            extra in 0u32..30,
            raw in any::<bool>(),
        ) {
            let anchor = if raw { Anchor::Raw } else { Anchor::Kept };
            let mut t = 0;
            let pts: Vec<_> = gaps.iter().zip(&coords).map(|(g, &(x, y))| { t += g; Point::new(x, y, t) }).collect();
            let is_subseq = |sub: &[Point]| {
                let mut it = pts.iter();
                sub.iter().all(|p| it.any(|q| q == p))
            };
            let a = resample_time_with(&pts, lo, anchor);
            let b = resample_time_with(&pts, lo + extra, anchor);
            prop_assert!(is_subseq(&a) && is_subseq(&b));
            prop_assert!(b.len() <= a.len());
            prop_assert_eq!(a.first(), pts.first());
            prop_assert_eq!(a.last(), pts.last());
            let da = resample_distance_with(&pts, f64::from(lo) / 3.0, anchor);
            prop_assert!(is_subseq(&da));
        }

        #[test]
        fn distance_thinning_is_monotone_on_monotone_paths(
            steps in prop::collection::vec(0i16..6, 1..40),
            lo in 0u32..40,
            extra in 0u32..40,
        ) {
            let mut x = 0;
            let pts: Vec<_> = steps.iter().map(|s| { x += s; Point::at(x, 0) }).collect();
            let a = resample_distance(&pts, f64::from(lo) / 4.0);
            let b = resample_distance(&pts, f64::from(lo + extra) / 4.0);
            prop_assert!(b.len() <= a.len());
        }
    }
}
