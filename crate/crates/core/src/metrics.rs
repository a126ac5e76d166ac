//! Accuracy statistics: mergeable outcome counters, per-replica rows, the
//! cross-replica average, and fixed-width result tables.
//!
//! Percentages are held as integer hundredths so that every rounding step
//! is exact and independent of accumulation order.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orchestrator::{Outcome, RecognitionRecord};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("cannot average zero rows")]
    EmptyRows,
    #[error("invalid percentage {0:?}")]
    BadPercent(String),
}

/// A percentage with two decimal places, stored as hundredths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Percent(u32);

impl Percent {
    pub const fn from_hundredths(h: u32) -> Self {
        Self(h)
    }

    pub fn hundredths(self) -> u32 {
        self.0
    }

    /// `100 * num / den`, rounded half-up to two decimals. `None` if `den` is 0.
    pub fn ratio(num: u64, den: u64) -> Option<Self> {
        if den == 0 {
            return None;
        }
        let scaled = u128::from(num) * 10_000;
        let den = u128::from(den);
        Some(Self(((2 * scaled + den) / (2 * den)) as u32))
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.0) / 100.0
    }
}

impl fmt::Display for Percent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = format!("{}.{:02}", self.0 / 100, self.0 % 100);
        f.pad(&s)
    }
}

impl FromStr for Percent {
    type Err = MetricsError;

    /// Accepts `D`, `D.d` or `D.dd`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || MetricsError::BadPercent(s.to_owned());
        let (int, frac) = s.trim().split_once('.').unwrap_or((s.trim(), ""));
        if int.is_empty() || frac.len() > 2 || !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let int: u32 = int.parse().map_err(|_| bad())?;
        let frac: u32 = if frac.is_empty() {
            0
        } else {
            format!("{frac:0<2}").parse().map_err(|_| bad())?
        };
        int.checked_mul(100)
            .and_then(|v| v.checked_add(frac))
            .map(Percent)
            .ok_or_else(bad)
    }
}

impl Serialize for Percent {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        // Emit as a JSON number with exactly two decimals.
        let raw = serde_json::value::RawValue::from_string(self.to_string()).map_err(serde::ser::Error::custom)?;
        raw.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Percent {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(deserializer)?;
        if !(0.0..=f64::from(u32::MAX) / 100.0).contains(&v) {
            return Err(serde::de::Error::custom(format!("percentage out of range: {v}")));
        }
        Ok(Percent((v * 100.0).round() as u32))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeableCounter {
    pub correct: u64,
    pub incorrect: u64,
    pub no_result: u64,
}

impl MergeableCounter {
    pub fn total(&self) -> u64 {
        self.correct + self.incorrect + self.no_result
    }

    /// Unanswered samples count against accuracy.
    pub fn accuracy(&self) -> Option<Percent> {
        Percent::ratio(self.correct, self.total())
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            correct: self.correct + other.correct,
            incorrect: self.incorrect + other.incorrect,
            no_result: self.no_result + other.no_result,
        }
    }

    pub fn record(self, outcome: &Outcome) -> Self {
        let mut next = self;
        match outcome {
            Outcome::Correct => next.correct += 1,
            Outcome::Incorrect { .. } => next.incorrect += 1,
            Outcome::NoResult { .. } => next.no_result += 1,
        }
        next
    }
}

pub fn accumulate(counter: MergeableCounter, record: &RecognitionRecord) -> MergeableCounter {
    counter.record(&record.outcome)
}

pub fn count_records<'a>(records: impl IntoIterator<Item = &'a RecognitionRecord>) -> MergeableCounter {
    records.into_iter().fold(MergeableCounter::default(), accumulate)
}

/// Mean of per-replica percentages, rounded half-up to two decimals.
pub fn aggregate_replicas(rows: &[Percent]) -> Result<Percent, MetricsError> {
    if rows.is_empty() {
        return Err(MetricsError::EmptyRows);
    }
    let sum: u64 = rows.iter().map(|p| u64::from(p.0)).sum();
    let n = rows.len() as u64;
    Ok(Percent(((2 * sum + n) / (2 * n)) as u32))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicaRow {
    pub replica_index: u32,
    /// Absent when only the printed percentage is known.
    pub counts: Option<MergeableCounter>,
    /// `None` renders as N/A.
    pub accuracy: Option<Percent>,
}

impl ReplicaRow {
    pub fn from_counts(replica_index: u32, counts: MergeableCounter) -> Self {
        Self {
            replica_index,
            counts: Some(counts),
            accuracy: counts.accuracy(),
        }
    }

    pub fn from_percent(replica_index: u32, accuracy: Option<Percent>) -> Self {
        Self {
            replica_index,
            counts: None,
            accuracy,
        }
    }
}

/// One system's results on one test set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub system: String,
    pub set_name: String,
    pub rows: Vec<ReplicaRow>,
}

impl AccuracyReport {
    /// Average over the rows that have a value; `None` if none do.
    pub fn average(&self) -> Option<Percent> {
        let present: Vec<Percent> = self.rows.iter().filter_map(|r| r.accuracy).collect();
        aggregate_replicas(&present).ok()
    }

    fn cell(&self, replica_index: u32) -> Option<Percent> {
        self.rows
            .iter()
            .find(|r| r.replica_index == replica_index)
            .and_then(|r| r.accuracy)
    }
}

/// Renders a results table for one test set: a row per replica plus an
/// `Average` row, a column per system, `N/A` for missing cells.
///
/// Columns appear in the order given; rows in ascending replica index.
pub fn render_table(set_name: &str, reports: &[AccuracyReport]) -> String {
    let mut indices: Vec<u32> = reports
        .iter()
        .flat_map(|r| r.rows.iter().map(|row| row.replica_index))
        .collect();
    indices.sort_unstable();
    indices.dedup();

    let labels: Vec<String> = indices
        .iter()
        .map(|i| format!("{set_name}_{i}"))
        .chain(std::iter::once("Average".to_owned()))
        .collect();
    let first_width = labels
        .iter()
        .map(|l| l.chars().count())
        .max()
        .unwrap_or(0)
        .max(set_name.chars().count());
    let col_width = reports
        .iter()
        .map(|r| r.system.chars().count())
        .max()
        .unwrap_or(0)
        .max(6);

    let fmt_cell = |p: Option<Percent>| p.map_or_else(|| "N/A".to_owned(), |p| p.to_string());
    let mut out = String::new();
    let mut line = format!("{set_name:<first_width$}");
    for r in reports {
        line.push_str(&format!("  {:>col_width$}", r.system));
    }
    out.push_str(line.trim_end());
    out.push('\n');
    for (label, idx) in labels.iter().zip(indices.iter().map(Some).chain(std::iter::once(None))) {
        let mut line = format!("{label:<first_width$}");
        for r in reports {
            let cell = match idx {
                Some(i) => r.cell(*i),
                None => r.average(),
            };
            line.push_str(&format!("  {:>col_width$}", fmt_cell(cell)));
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Percent {
        s.parse().unwrap()
    }

    fn rows(vals: &[&str]) -> Vec<Percent> {
        vals.iter().map(|v| p(v)).collect()
    }

    #[test]
    fn percent_parse_and_display() {
        assert_eq!(p("95.49").hundredths(), 9549);
        assert_eq!(p("2.1").hundredths(), 210);
        assert_eq!(p("50").to_string(), "50.00");
        assert_eq!(p("2.06").to_string(), "2.06");
        for bad in ["", ".5", "1.234", "-1", "1e2", "a.bc"] {
            assert!(bad.parse::<Percent>().is_err(), "{bad}");
        }
    }

    #[test]
    fn ratio_rounds_half_up() {
        assert_eq!(Percent::ratio(3, 4), Some(p("75.00")));
        assert_eq!(Percent::ratio(1, 3), Some(p("33.33")));
        assert_eq!(Percent::ratio(2, 3), Some(p("66.67")));
        // 1/8 = 12.5% exactly; 1/16000 = 0.00625% rounds to 0.01.
        assert_eq!(Percent::ratio(1, 16_000), Some(p("0.01")));
        assert_eq!(Percent::ratio(0, 0), None);
    }

    #[test]
    fn accumulate_examples() {
        use crate::orchestrator::Outcome;
        let zero = MergeableCounter::default();
        let c = zero.record(&Outcome::Correct);
        assert_eq!(
            c,
            MergeableCounter {
                correct: 1,
                incorrect: 0,
                no_result: 0
            }
        );
        let c2 = c.record(&Outcome::NoResult {
            reason: "timeout".into(),
        });
        assert_eq!(c2.no_result, c.no_result + 1);
        let mut c = zero;
        for _ in 0..4 {
            c = c.record(&Outcome::Correct);
        }
        for _ in 0..3 {
            c = c.record(&Outcome::Incorrect { text: "x".into() });
        }
        assert_eq!(
            c,
            MergeableCounter {
                correct: 4,
                incorrect: 3,
                no_result: 0
            }
        );
    }

    #[test]
    fn merge_laws() {
        let a = MergeableCounter {
            correct: 1,
            incorrect: 2,
            no_result: 3,
        };
        let b = MergeableCounter {
            correct: 5,
            incorrect: 0,
            no_result: 1,
        };
        let c = MergeableCounter {
            correct: 0,
            incorrect: 7,
            no_result: 0,
        };
        assert_eq!(a.merge(b), b.merge(a));
        assert_eq!(a.merge(b).merge(c), a.merge(b.merge(c)));
        assert_eq!(a.merge(MergeableCounter::default()), a);
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(
            aggregate_replicas(&rows(&["94.34", "95.99", "95.32", "95.68", "96.14"])),
            Ok(p("95.49"))
        );
        assert_eq!(
            aggregate_replicas(&rows(&["66.91", "68.46", "67.92", "66.43", "67.48"])),
            Ok(p("67.44"))
        );
        assert_eq!(
            aggregate_replicas(&rows(&["2.08", "2.17", "2.14", "2.07", "2.06"])),
            Ok(p("2.10"))
        );
        assert_eq!(aggregate_replicas(&rows(&["50.00"])), Ok(p("50.00")));
        assert_eq!(aggregate_replicas(&[]), Err(MetricsError::EmptyRows));
        // Exact half rounds up: (10.00 + 10.01) / 2 = 10.005.
        assert_eq!(aggregate_replicas(&rows(&["10.00", "10.01"])), Ok(p("10.01")));
    }

    #[test]
    fn equal_size_replicas_pool_and_mean_agree() {
        let counters = [(150u64, 200u64), (151, 200), (149, 200)];
        let mean = aggregate_replicas(
            &counters
                .iter()
                .map(|&(c, n)| Percent::ratio(c, n).unwrap())
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let pooled = Percent::ratio(450, 600).unwrap();
        assert_eq!(mean, pooled);
    }

    fn report(system: &str, vals: &[Option<&str>]) -> AccuracyReport {
        AccuracyReport {
            system: system.into(),
            set_name: "Set".into(),
            rows: vals
                .iter()
                .enumerate()
                .map(|(i, v)| ReplicaRow::from_percent(i as u32 + 1, v.map(p)))
                .collect(),
        }
    }

    #[test]
    fn table_with_two_replicas() {
        let table = render_table("Set", &[report("sys", &[Some("50.00"), Some("70.00")])]);
        assert_eq!(
            table,
            "Set         sys\nSet_1     50.00\nSet_2     70.00\nAverage   60.00\n"
        );
    }

    #[test]
    fn table_na_column() {
        let table = render_table(
            "SymbolChar",
            &[
                report("gPen", &[Some("84.71"), Some("84.74")]),
                report("HWW", &[None, None]),
            ],
        );
        let expected = "\
SymbolChar      gPen     HWW
SymbolChar_1   84.71     N/A
SymbolChar_2   84.74     N/A
Average        84.73     N/A
";
        assert_eq!(table, expected);
    }

    #[test]
    fn partial_na_excluded_from_average() {
        let r = report("s", &[Some("40.00"), None, Some("60.00")]);
        assert_eq!(r.average(), Some(p("50.00")));
    }

    #[test]
    fn percent_json_has_two_decimals() {
        let json = serde_json::to_string(&p("75")).unwrap();
        assert_eq!(json, "75.00");
        let back: Percent = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p("75"));
    }
}
