use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

/// Which side of the threshold fails.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Failure when `y > T`.
    Above,
    /// Failure when `y < T`.
    Below,
}

impl Direction {
    pub fn sign(self) -> i8 {
        match self {
            Direction::Above => 1,
            Direction::Below => -1,
        }
    }

    pub fn from_sign(a: i64) -> Result<Self> {
        match a {
            1 => Ok(Direction::Above),
            -1 => Ok(Direction::Below),
            _ => Err(Error::ParameterDomain(format!("direction must be +1 or -1, got {a}"))),
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Direction::Above => Direction::Below,
            Direction::Below => Direction::Above,
        }
    }
}

impl Serialize for Direction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_i8(self.sign())
    }
}

impl<'de> Deserialize<'de> for Direction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let a = i64::deserialize(d)?;
        Direction::from_sign(a).map_err(serde::de::Error::custom)
    }
}

/// `g(y) = a(y − T)`; `g > 0` is failure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
pub struct LimitState<T> {
    pub threshold: T,
    pub direction: Direction,
}

impl<T: Scalar> LimitState<T> {
    pub fn new(threshold: T, direction: Direction) -> Self {
        Self {
            threshold,
            direction,
        }
    }

    pub fn above(threshold: T) -> Self {
        Self::new(threshold, Direction::Above)
    }

    pub fn below(threshold: T) -> Self {
        Self::new(threshold, Direction::Below)
    }

    #[inline]
    pub fn g(&self, y: T) -> T {
        match self.direction {
            Direction::Above => y - self.threshold,
            Direction::Below => self.threshold - y,
        }
    }

    #[inline]
    pub fn fails(&self, y: T) -> bool {
        self.g(y) > T::zero()
    }

    /// `y` moved `amount` toward the failure side.
    #[inline]
    pub fn toward_failure(&self, y: T, amount: T) -> T {
        match self.direction {
            Direction::Above => y + amount,
            Direction::Below => y - amount,
        }
    }

    pub fn flipped(&self) -> Self {
        Self::new(self.threshold, self.direction.flipped())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signs() {
        let up = LimitState::above(206.0);
        assert!(up.fails(207.0) && !up.fails(206.0));
        let down = LimitState::below(-10.244);
        assert!(down.fails(-11.0) && !down.fails(0.0));
        assert_eq!(down.g(-11.0), -10.244 + 11.0);
        assert_eq!(down.toward_failure(0.0, 1.0), -1.0);
    }

    #[test]
    fn json() {
        let l: LimitState<f64> = serde_json::from_str(r#"{"threshold": 2.63, "direction": -1}"#).unwrap();
        assert_eq!(l, LimitState::below(2.63));
        assert!(serde_json::from_str::<LimitState<f64>>(r#"{"threshold": 1, "direction": 0}"#).is_err());
        assert_eq!(serde_json::to_string(&LimitState::above(1.5)).unwrap(), r#"{"threshold":1.5,"direction":1}"#);
    }
}
