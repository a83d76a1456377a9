//! Identifier newtypes and the shared [`Distance`] value.

use std::fmt;
use std::ops::Add;

use serde::{Deserialize, Serialize};

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident($inner:ty)) => {
        $(#[$meta])*
        #[derive(
            Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub $inner);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }

        impl From<$inner> for $name {
            fn from(v: $inner) -> Self {
                Self(v)
            }
        }
    };
}

id_type!(
    /// Dense function index, `0..N` after loading. Function 0 is the program entry.
    FunctionId(u32)
);
id_type!(
    /// Dense, program-wide basic block index. Each function owns a contiguous range.
    BlockId(u32)
);
id_type!(
    /// Dense target label index.
    TargetId(u32)
);
id_type!(
    /// Index of an intra-function CFG edge (a `(block, successor)` pair).
    EdgeId(u32)
);
id_type!(
    /// Seed identifier, unique within a campaign.
    SeedId(u64)
);

/// A non-negative integer distance or the unreachable marker.
///
/// `Infinite` orders after every finite value, and addition saturates to it,
/// so no arithmetic ever happens on a placeholder number.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Distance {
    Finite(u64),
    Infinite,
}

impl Distance {
    pub const ZERO: Distance = Distance::Finite(0);

    #[inline]
    pub fn is_finite(self) -> bool {
        matches!(self, Distance::Finite(_))
    }

    #[inline]
    pub fn finite(self) -> Option<u64> {
        match self {
            Distance::Finite(d) => Some(d),
            Distance::Infinite => None,
        }
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self == Distance::ZERO
    }
}

impl Add for Distance {
    type Output = Distance;

    fn add(self, rhs: Distance) -> Distance {
        match (self, rhs) {
            (Distance::Finite(a), Distance::Finite(b)) => match a.checked_add(b) {
                Some(s) => Distance::Finite(s),
                None => Distance::Infinite,
            },
            _ => Distance::Infinite,
        }
    }
}

impl From<Option<u64>> for Distance {
    fn from(v: Option<u64>) -> Self {
        v.map_or(Distance::Infinite, Distance::Finite)
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distance::Finite(d) => write!(f, "{d}"),
            Distance::Infinite => f.write_str("inf"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infinite_sorts_last_and_absorbs_addition() {
        assert!(Distance::Finite(u64::MAX) < Distance::Infinite);
        assert_eq!(Distance::Finite(2) + Distance::Finite(3), Distance::Finite(5));
        assert_eq!(Distance::Finite(2) + Distance::Infinite, Distance::Infinite);
        assert_eq!(Distance::Finite(u64::MAX) + Distance::Finite(1), Distance::Infinite);
        assert_eq!(Distance::Infinite.to_string(), "inf");
    }
}
