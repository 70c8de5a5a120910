//! Shared domain types.

use serde::{Deserialize, Serialize};

/// The 3-d continuous emotion representation, tanh-bounded when produced by
/// the bottleneck network; stored annotations allow the closed interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoodVector(pub [f64; 3]);

impl MoodVector {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self([x, y, z])
    }

    pub fn as_array(&self) -> [f64; 3] {
        self.0
    }

    pub fn distance(&self, other: &MoodVector) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl From<[f64; 3]> for MoodVector {
    fn from(v: [f64; 3]) -> Self {
        Self(v)
    }
}

/// The fixed, ordered list of the seven discrete emotion classes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ClassList;

impl ClassList {
    pub const NAMES: [&'static str; 7] =
        ["neutral", "happy", "sad", "surprise", "fear", "disgust", "angry"];

    pub const NEUTRAL: usize = 0;
    pub const HAPPY: usize = 1;
    pub const SAD: usize = 2;
    pub const SURPRISE: usize = 3;
    pub const FEAR: usize = 4;
    pub const DISGUST: usize = 5;
    pub const ANGRY: usize = 6;

    pub const fn len() -> usize {
        7
    }

    pub fn name(id: usize) -> &'static str {
        Self::NAMES[id]
    }

    pub fn id_of(name: &str) -> Option<usize> {
        Self::NAMES.iter().position(|&n| n == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_list_is_fixed() {
        assert_eq!(ClassList::len(), 7);
        assert_eq!(ClassList::name(0), "neutral");
        assert_eq!(ClassList::name(6), "angry");
        assert_eq!(ClassList::id_of("surprise"), Some(3));
        assert_eq!(ClassList::id_of("bored"), None);
    }

    #[test]
    fn mood_distance() {
        let a = MoodVector::new(1.0, 0.0, 0.0);
        let b = MoodVector::new(-1.0, 0.0, 0.0);
        assert!((a.distance(&b) - 2.0).abs() < 1e-12);
    }
}
