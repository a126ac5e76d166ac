//! Synthetic handwriting: digit glyphs drawn as polylines with seeded
//! geometric and point noise, plus unconstrained random samples.

use crate::dataset::SamplePool;
use crate::rng::SplitMix64;
use crate::trajectory::{Point, Sample, Stroke};

type Polyline = &'static [(f64, f64)];

/// Digit skeletons on a 100x100 box, y growing downwards.
const DIGITS: [&[Polyline]; 10] = [
    &[&[
        (30., 0.),
        (70., 0.),
        (90., 30.),
        (90., 70.),
        (70., 100.),
        (30., 100.),
        (10., 70.),
        (10., 30.),
        (30., 0.),
    ]],
    &[&[(35., 20.), (50., 0.), (50., 100.)]],
    &[&[(15., 20.), (40., 0.), (75., 5.), (85., 30.), (15., 100.), (90., 100.)]],
    &[&[(15., 5.), (80., 5.), (45., 45.), (85., 65.), (75., 95.), (15., 95.)]],
    &[&[(60., 0.), (10., 65.), (90., 65.)], &[(65., 30.), (65., 100.)]],
    &[
        &[(25., 0.), (20., 45.), (70., 45.), (85., 75.), (65., 100.), (15., 95.)],
        &[(25., 0.), (80., 0.)],
    ],
    &[&[
        (75., 0.),
        (30., 30.),
        (15., 75.),
        (40., 100.),
        (75., 90.),
        (80., 60.),
        (45., 50.),
        (20., 70.),
    ]],
    &[&[(10., 0.), (90., 0.), (40., 100.)], &[(35., 50.), (75., 50.)]],
    &[&[
        (50., 50.),
        (20., 25.),
        (50., 0.),
        (80., 25.),
        (50., 50.),
        (20., 75.),
        (50., 100.),
        (80., 75.),
        (50., 50.),
    ]],
    &[&[(80., 30.), (50., 50.), (20., 30.), (50., 0.), (80., 30.), (75., 100.)]],
];

pub const DIGIT_LABELS: [&str; 10] = ["0", "1", "2", "3", "4", "5", "6", "7", "8", "9"];

/// Noise applied to one rendered copy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlyphNoise {
    /// Grid units per skeleton unit, sampled from `scale.0..scale.1`.
    pub scale: (f64, f64),
    /// Maximum rotation in radians, either direction.
    pub rotation: f64,
    /// Maximum horizontal shear.
    pub shear: f64,
    /// Maximum per-point displacement in grid units.
    pub jitter: f64,
    /// Spacing between interpolated points in skeleton units.
    pub step: f64,
}

impl Default for GlyphNoise {
    fn default() -> Self {
        Self {
            scale: (0.8, 1.6),
            rotation: 0.12,
            shear: 0.15,
            jitter: 2.5,
            step: 9.0,
        }
    }
}

fn uniform(rng: &mut SplitMix64, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.unit()
}

fn densify(line: Polyline, step: f64) -> Vec<(f64, f64)> {
    let mut out = vec![line[0]];
    for w in line.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        let len = (x1 - x0).hypot(y1 - y0);
        let pieces = (len / step).ceil().max(1.0) as usize;
        for k in 1..=pieces {
            let f = k as f64 / pieces as f64;
            out.push((x0 + (x1 - x0) * f, y0 + (y1 - y0) * f));
        }
    }
    out
}

/// Renders digit `digit` with random placement and noise.
pub fn digit_glyph(digit: usize, id: u32, noise: &GlyphNoise, rng: &mut SplitMix64) -> Sample {
    let scale = uniform(rng, noise.scale.0, noise.scale.1);
    let angle = uniform(rng, -noise.rotation, noise.rotation);
    let shear = uniform(rng, -noise.shear, noise.shear);
    let (ox, oy) = (uniform(rng, 0.0, 400.0), uniform(rng, 0.0, 400.0));
    let (sin, cos) = angle.sin_cos();
    let step = noise.step * uniform(rng, 0.8, 1.25);
    let strokes = DIGITS[digit]
        .iter()
        .map(|line| {
            let points = densify(line, step)
                .into_iter()
                .map(|(x, y)| {
                    let (x, y) = (x - 50.0 + shear * (y - 50.0), y - 50.0);
                    let (x, y) = (x * cos - y * sin, x * sin + y * cos);
                    let jx = uniform(rng, -noise.jitter, noise.jitter);
                    let jy = uniform(rng, -noise.jitter, noise.jitter);
                    let px = (ox + x * scale + jx).round() as i16;
                    let py = (oy + y * scale + jy).round() as i16;
                    Point::at(px, py)
                })
                .collect();
            Stroke::new(points).expect("densified polyline is non-empty")
        })
        .collect();
    Sample::new(id, DIGIT_LABELS[digit], strokes).expect("digit glyph is valid")
}

/// `per_class` noisy copies of every digit, interleaved by class.
pub fn digit_pool(name: &str, per_class: usize, noise: &GlyphNoise, seed: u64) -> SamplePool {
    let mut rng = SplitMix64::new(seed);
    let mut samples = Vec::with_capacity(per_class * 10);
    for _ in 0..per_class {
        for digit in 0..10 {
            let id = samples.len() as u32;
            samples.push(digit_glyph(digit, id, noise, &mut rng));
        }
    }
    SamplePool::new(name, samples)
}

/// A sample with 1 to 5 strokes of 1 to 20 points anywhere on the signed
/// 16-bit grid range `-extent..=extent`.
pub fn random_sample(id: u32, label: &str, extent: i16, rng: &mut SplitMix64) -> Sample {
    let span = 2 * u64::from(extent.unsigned_abs()) + 1;
    let coord = |rng: &mut SplitMix64| (rng.below(span) as i64 - i64::from(extent)) as i16;
    let strokes = (0..1 + rng.below(5))
        .map(|_| {
            let n = 1 + rng.below(20);
            let points = (0..n).map(|_| Point::at(coord(rng), coord(rng))).collect();
            Stroke::new(points).expect("non-empty")
        })
        .collect();
    Sample::new(id, label, strokes).expect("valid random sample")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::bounding_box;

    #[test]
    fn pools_are_deterministic() {
        let a = digit_pool("d", 3, &GlyphNoise::default(), 1);
        let b = digit_pool("d", 3, &GlyphNoise::default(), 1);
        assert_eq!(a, b);
        assert_eq!(a.len(), 30);
        let labels: Vec<_> = a.samples[..10].iter().map(|s| s.label()).collect();
        assert_eq!(labels, DIGIT_LABELS);
        assert_ne!(a, digit_pool("d", 3, &GlyphNoise::default(), 2));
    }

    #[test]
    fn glyphs_have_plausible_size() {
        let pool = digit_pool("d", 5, &GlyphNoise::default(), 9);
        for s in &pool.samples {
            let b = bounding_box(s);
            assert!(b.width().max(b.height()) >= 60, "{:?}", b);
            assert!(s.point_count() >= 8);
        }
    }

    #[test]
    fn random_samples_respect_extent() {
        let mut rng = SplitMix64::new(3);
        for i in 0..200 {
            let s = random_sample(i, "r", 1000, &mut rng);
            assert!(s.points().all(|p| p.x.abs() <= 1000 && p.y.abs() <= 1000));
            assert!((1..=5).contains(&s.strokes().len()));
        }
    }
}
