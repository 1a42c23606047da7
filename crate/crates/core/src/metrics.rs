//! Scoring math: System Usability Scale, the Sauro-Lewis curved grading
//! scale, and Single Ease Question aggregation.
//!
//! Everything here is a pure function. SUS scores are carried as integer
//! hundredths of a point so that report values are bit-stable.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Number of items on the SUS questionnaire.
pub const SUS_ITEM_COUNT: usize = 10;

/// Mean SEQ at or above which a session counts as a good experience.
pub const GOOD_EXPERIENCE_MEAN: f64 = 5.5;

/// Steps rated at or above this SEQ are successful interactions.
pub const SEQ_SUCCESS_THRESHOLD: f64 = 6.5;

/// Steps rated at or below this SEQ are friction points.
pub const SEQ_FRICTION_THRESHOLD: f64 = 3.3;

/// SUS statements, in questionnaire order. Odd items are positively worded.
pub const SUS_STATEMENTS: [&str; SUS_ITEM_COUNT] = [
    "I think that I would like to use this system frequently.",
    "I found the system unnecessarily complex.",
    "I thought the system was easy to use.",
    "I think that I would need the support of a technical person to be able to use this system.",
    "I found the various functions in this system were well integrated.",
    "I thought there was too much inconsistency in this system.",
    "I would imagine that most people would learn to use this system very quickly.",
    "I found the system very cumbersome to use.",
    "I felt very confident using the system.",
    "I needed to learn a lot of things before I could get going with this system.",
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("SUS responses must contain exactly 10 items, got {0}")]
    WrongLength(usize),
    #[error("SUS item {index} is {value}, expected an integer in 1..=5")]
    ItemOutOfRange { index: usize, value: i64 },
    #[error("SUS score {0} is outside [0, 100]")]
    ScoreOutOfRange(f64),
    #[error("rating {0} is outside 1..=7")]
    RatingOutOfRange(i64),
    #[error("no assessed steps")]
    NoAssessedSteps,
}

/// Ten Likert answers (1..=5) to the SUS questionnaire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SusResponses([u8; SUS_ITEM_COUNT]);

impl SusResponses {
    /// Validates a raw answer vector. Errors name the 1-based item index.
    pub fn new(items: &[i64]) -> Result<Self, MetricsError> {
        if items.len() != SUS_ITEM_COUNT {
            return Err(MetricsError::WrongLength(items.len()));
        }
        let mut out = [0u8; SUS_ITEM_COUNT];
        for (i, &value) in items.iter().enumerate() {
            if !(1..=5).contains(&value) {
                return Err(MetricsError::ItemOutOfRange { index: i + 1, value });
            }
            out[i] = value as u8;
        }
        Ok(Self(out))
    }

    pub fn items(&self) -> &[u8; SUS_ITEM_COUNT] {
        &self.0
    }

    /// Answer to 1-based item `n`.
    pub fn item(&self, n: usize) -> u8 {
        self.0[n - 1]
    }
}

impl Serialize for SusResponses {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

impl<'de> Deserialize<'de> for SusResponses {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = Vec::<i64>::deserialize(d)?;
        SusResponses::new(&raw).map_err(serde::de::Error::custom)
    }
}

/// A SUS score in [0, 100], stored as integer hundredths of a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SusScore(u32);

impl SusScore {
    pub const MAX_HUNDREDTHS: u32 = 10_000;

    pub fn from_hundredths(hundredths: u32) -> Result<Self, MetricsError> {
        if hundredths > Self::MAX_HUNDREDTHS {
            return Err(MetricsError::ScoreOutOfRange(hundredths as f64 / 100.0));
        }
        Ok(Self(hundredths))
    }

    /// Rounds to the nearest hundredth of a point.
    pub fn from_value(value: f64) -> Result<Self, MetricsError> {
        if !value.is_finite() || !(0.0..=100.0).contains(&value) {
            return Err(MetricsError::ScoreOutOfRange(value));
        }
        Ok(Self((value * 100.0).round() as u32))
    }

    pub fn hundredths(&self) -> u32 {
        self.0
    }

    pub fn value(&self) -> f64 {
        self.0 as f64 / 100.0
    }
}

impl fmt::Display for SusScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 % 10 == 0 {
            write!(f, "{}.{}", self.0 / 100, (self.0 % 100) / 10)
        } else {
            write!(f, "{}.{:02}", self.0 / 100, self.0 % 100)
        }
    }
}

impl Serialize for SusScore {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.value())
    }
}

impl<'de> Deserialize<'de> for SusScore {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        SusScore::from_value(v).map_err(serde::de::Error::custom)
    }
}

/// `2.5 * (sum over odd items of (Q - 1) + sum over even items of (5 - Q))`.
pub fn compute_sus(responses: &SusResponses) -> SusScore {
    let points: u32 = responses
        .items()
        .iter()
        .enumerate()
        .map(|(i, &q)| if i % 2 == 0 { q as u32 - 1 } else { 5 - q as u32 })
        .sum();
    // Each contribution point is worth 2.5 = 250 hundredths.
    SusScore(points * 250)
}

/// Letter grades of the curved grading scale, ordered worst to best.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CgsGrade {
    F,
    D,
    CMinus,
    C,
    CPlus,
    BMinus,
    B,
    BPlus,
    AMinus,
    A,
    APlus,
}

/// (grade, inclusive lower bound in hundredths, percentile range), best first.
/// Each grade covers `[lower, next_higher_lower)`.
const GRADE_TABLE: [(CgsGrade, u32, (u8, u8)); 11] = [
    (CgsGrade::APlus, 8410, (96, 100)),
    (CgsGrade::A, 8080, (90, 95)),
    (CgsGrade::AMinus, 7890, (85, 89)),
    (CgsGrade::BPlus, 7720, (80, 84)),
    (CgsGrade::B, 7410, (70, 79)),
    (CgsGrade::BMinus, 7260, (65, 69)),
    (CgsGrade::CPlus, 7110, (60, 64)),
    (CgsGrade::C, 6500, (41, 59)),
    (CgsGrade::CMinus, 6270, (35, 40)),
    (CgsGrade::D, 5170, (15, 34)),
    (CgsGrade::F, 0, (0, 14)),
];

impl CgsGrade {
    pub const ALL: [CgsGrade; 11] = [
        CgsGrade::APlus,
        CgsGrade::A,
        CgsGrade::AMinus,
        CgsGrade::BPlus,
        CgsGrade::B,
        CgsGrade::BMinus,
        CgsGrade::CPlus,
        CgsGrade::C,
        CgsGrade::CMinus,
        CgsGrade::D,
        CgsGrade::F,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            CgsGrade::APlus => "A+",
            CgsGrade::A => "A",
            CgsGrade::AMinus => "A-",
            CgsGrade::BPlus => "B+",
            CgsGrade::B => "B",
            CgsGrade::BMinus => "B-",
            CgsGrade::CPlus => "C+",
            CgsGrade::C => "C",
            CgsGrade::CMinus => "C-",
            CgsGrade::D => "D",
            CgsGrade::F => "F",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|g| g.label() == label)
    }

    fn row(&self) -> &'static (CgsGrade, u32, (u8, u8)) {
        GRADE_TABLE.iter().find(|row| row.0 == *self).expect("every grade has a row")
    }

    /// Inclusive lower bound of the grade's score interval.
    pub fn lower_bound(&self) -> SusScore {
        SusScore(self.row().1)
    }

    /// Percentile range `(low, high)`, both inclusive.
    pub fn percentile_range(&self) -> (u8, u8) {
        self.row().2
    }
}

impl fmt::Display for CgsGrade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl Serialize for CgsGrade {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for CgsGrade {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        CgsGrade::from_label(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown CGS grade `{s}`")))
    }
}

pub fn grade_sus(score: SusScore) -> CgsGrade {
    GRADE_TABLE
        .iter()
        .find(|(_, lower, _)| score.hundredths() >= *lower)
        .map(|row| row.0)
        .unwrap_or(CgsGrade::F)
}

/// Grades a raw value, rejecting anything outside [0, 100].
pub fn grade_value(value: f64) -> Result<CgsGrade, MetricsError> {
    SusScore::from_value(value).map(grade_sus)
}

/// An integer rating on a 1..=7 scale (SEQ, efficiency, clarity, confidence).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rating7(u8);

pub type SeqRating = Rating7;

impl Rating7 {
    pub fn new(value: i64) -> Result<Self, MetricsError> {
        if (1..=7).contains(&value) {
            Ok(Self(value as u8))
        } else {
            Err(MetricsError::RatingOutOfRange(value))
        }
    }

    pub fn get(&self) -> u8 {
        self.0
    }
}

impl fmt::Display for Rating7 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for Rating7 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.0)
    }
}

impl<'de> Deserialize<'de> for Rating7 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = i64::deserialize(d)?;
        Rating7::new(v).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepClass {
    Success,
    Neutral,
    Friction,
}

impl StepClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            StepClass::Success => "success",
            StepClass::Neutral => "neutral",
            StepClass::Friction => "friction",
        }
    }
}

/// Classifies a possibly fractional SEQ value against the real thresholds.
pub fn classify_seq_value(seq: f64) -> StepClass {
    if seq >= SEQ_SUCCESS_THRESHOLD {
        StepClass::Success
    } else if seq <= SEQ_FRICTION_THRESHOLD {
        StepClass::Friction
    } else {
        StepClass::Neutral
    }
}

pub fn classify_step(seq: SeqRating) -> StepClass {
    classify_seq_value(seq.get() as f64)
}

/// Session-level SEQ statistics. Step indices are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeqSummary {
    pub mean: f64,
    pub min: SeqRating,
    pub sum: u32,
    pub count: usize,
    pub friction_steps: Vec<usize>,
    pub success_steps: Vec<usize>,
    pub good_experience: bool,
}

pub fn aggregate_seq(series: &[SeqRating]) -> Result<SeqSummary, MetricsError> {
    let min = *series.iter().min().ok_or(MetricsError::NoAssessedSteps)?;
    let sum: u32 = series.iter().map(|s| s.get() as u32).sum();
    let count = series.len();
    let mut friction_steps = Vec::new();
    let mut success_steps = Vec::new();
    for (i, &seq) in series.iter().enumerate() {
        match classify_step(seq) {
            StepClass::Friction => friction_steps.push(i + 1),
            StepClass::Success => success_steps.push(i + 1),
            StepClass::Neutral => {}
        }
    }
    Ok(SeqSummary {
        mean: sum as f64 / count as f64,
        min,
        sum,
        count,
        friction_steps,
        success_steps,
        // mean >= 5.5  <=>  2 * sum >= 11 * count
        good_experience: 2 * sum as u64 >= 11 * count as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seqs(v: &[i64]) -> Vec<SeqRating> {
        v.iter().map(|&x| Rating7::new(x).unwrap()).collect()
    }

    #[test]
    fn sus_trivial_cases() {
        let mid = SusResponses::new(&[3; 10]).unwrap();
        assert_eq!(compute_sus(&mid).value(), 50.0);
        let best = SusResponses::new(&[5, 1, 5, 1, 5, 1, 5, 1, 5, 1]).unwrap();
        assert_eq!(compute_sus(&best).value(), 100.0);
        let worst = SusResponses::new(&[1, 5, 1, 5, 1, 5, 1, 5, 1, 5]).unwrap();
        assert_eq!(compute_sus(&worst).value(), 0.0);
    }

    #[test]
    fn sus_first_item_sweep() {
        // Items 2..10 fixed at 3 contribute 18 points (45.0); item 1 adds (q - 1) * 2.5.
        let expected = [45.0, 47.5, 50.0, 52.5, 55.0];
        for (q, want) in (1..=5).zip(expected) {
            let mut items = [3i64; 10];
            items[0] = q;
            let r = SusResponses::new(&items).unwrap();
            assert_eq!(compute_sus(&r).value(), want, "item 1 = {q}");
        }
    }

    #[test]
    fn sus_validation_names_index() {
        assert_eq!(SusResponses::new(&[3; 9]), Err(MetricsError::WrongLength(9)));
        let mut items = [3i64; 10];
        items[6] = 6;
        assert_eq!(
            SusResponses::new(&items),
            Err(MetricsError::ItemOutOfRange { index: 7, value: 6 })
        );
        items[6] = 0;
        assert!(SusResponses::new(&items).unwrap_err().to_string().contains("item 7"));
    }

    #[test]
    fn grades_from_case_studies() {
        assert_eq!(grade_value(55.0).unwrap(), CgsGrade::D);
        assert_eq!(grade_value(87.5).unwrap(), CgsGrade::APlus);
        assert_eq!(grade_value(65.0).unwrap(), CgsGrade::C);
        assert_eq!(CgsGrade::C.percentile_range(), (41, 59));
        assert_eq!(grade_value(100.0).unwrap(), CgsGrade::APlus);
        assert_eq!(grade_value(0.0).unwrap(), CgsGrade::F);
    }

    #[test]
    fn grade_gaps_close_half_open() {
        assert_eq!(grade_value(84.0).unwrap(), CgsGrade::A);
        assert_eq!(grade_value(84.05).unwrap(), CgsGrade::A);
        assert_eq!(grade_value(84.1).unwrap(), CgsGrade::APlus);
        assert_eq!(grade_value(72.55).unwrap(), CgsGrade::CPlus);
        assert_eq!(grade_value(72.6).unwrap(), CgsGrade::BMinus);
        assert_eq!(grade_value(51.69).unwrap(), CgsGrade::F);
        assert_eq!(grade_value(51.7).unwrap(), CgsGrade::D);
    }

    #[test]
    fn grade_rejects_out_of_range() {
        assert!(matches!(grade_value(100.5), Err(MetricsError::ScoreOutOfRange(_))));
        assert!(matches!(grade_value(-0.1), Err(MetricsError::ScoreOutOfRange(_))));
        assert!(grade_value(f64::NAN).is_err());
    }

    #[test]
    fn score_display() {
        assert_eq!(SusScore::from_value(55.0).unwrap().to_string(), "55.0");
        assert_eq!(SusScore::from_value(87.5).unwrap().to_string(), "87.5");
        assert_eq!(SusScore::from_value(84.05).unwrap().to_string(), "84.05");
        assert_eq!(SusScore::from_value(100.0).unwrap().to_string(), "100.0");
    }

    #[test]
    fn classify_thresholds() {
        let c = |v| classify_step(Rating7::new(v).unwrap());
        assert_eq!(c(7), StepClass::Success);
        assert_eq!(c(6), StepClass::Neutral);
        assert_eq!(c(5), StepClass::Neutral);
        assert_eq!(c(4), StepClass::Neutral);
        assert_eq!(c(3), StepClass::Friction);
        assert_eq!(c(1), StepClass::Friction);
        assert_eq!(classify_seq_value(6.5), StepClass::Success);
        assert_eq!(classify_seq_value(3.3), StepClass::Friction);
        assert_eq!(classify_seq_value(3.31), StepClass::Neutral);
    }

    #[test]
    fn aggregate_recreation_series() {
        let s = aggregate_seq(&seqs(&[7, 7, 7, 1, 2, 6, 7, 6, 1, 1, 1, 7, 6, 3])).unwrap();
        assert_eq!(s.sum, 62);
        assert_eq!(s.count, 14);
        assert!((s.mean - 62.0 / 14.0).abs() < 1e-12);
        assert_eq!(s.friction_steps, vec![4, 5, 9, 10, 11, 14]);
        assert_eq!(s.success_steps, vec![1, 2, 3, 7, 12]);
        assert_eq!(s.min.get(), 1);
        assert!(!s.good_experience);
    }

    #[test]
    fn aggregate_uniform_and_threshold() {
        let s = aggregate_seq(&seqs(&[7, 7, 7, 7])).unwrap();
        assert_eq!(s.mean, 7.0);
        assert!(s.friction_steps.is_empty());
        assert!(s.good_experience);
        let s = aggregate_seq(&seqs(&[7, 5, 6, 6])).unwrap();
        assert_eq!(s.mean, 6.0);
        assert!(s.good_experience);
        // exactly 5.5
        assert!(aggregate_seq(&seqs(&[5, 6])).unwrap().good_experience);
        assert!(!aggregate_seq(&seqs(&[5, 5, 6])).unwrap().good_experience);
    }

    #[test]
    fn aggregate_empty_errors() {
        let err = aggregate_seq(&[]).unwrap_err();
        assert_eq!(err, MetricsError::NoAssessedSteps);
        assert_eq!(err.to_string(), "no assessed steps");
    }

    #[test]
    fn rating_bounds() {
        assert!(Rating7::new(0).is_err());
        assert!(Rating7::new(8).is_err());
        assert_eq!(Rating7::new(7).unwrap().get(), 7);
    }

    #[test]
    fn serde_forms() {
        let r = SusResponses::new(&[3, 3, 3, 2, 4, 3, 3, 4, 3, 2]).unwrap();
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(json, "[3,3,3,2,4,3,3,4,3,2]");
        assert_eq!(serde_json::from_str::<SusResponses>(&json).unwrap(), r);
        assert!(serde_json::from_str::<SusResponses>("[3,3,3]").is_err());
        assert_eq!(serde_json::to_string(&CgsGrade::APlus).unwrap(), "\"A+\"");
        assert_eq!(serde_json::from_str::<CgsGrade>("\"C-\"").unwrap(), CgsGrade::CMinus);
        assert!(serde_json::from_str::<Rating7>("9").is_err());
    }
}
