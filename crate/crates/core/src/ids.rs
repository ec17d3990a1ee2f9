//! Dense integer identifiers for network entities and vehicles.
//!
//! Every id is the position of its entity in the owning collection, so
//! lookups are plain slice indexing.

use std::fmt;

macro_rules! dense_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
        pub struct $name(pub u32);

        impl $name {
            #[inline]
            pub fn idx(self) -> usize {
                self.0 as usize
            }

            #[inline]
            pub fn from_idx(i: usize) -> Self {
                Self(i as u32)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

dense_id!(
    /// Lane identifier (road lanes and junction lanes share one id space).
    LaneId
);
dense_id!(RoadId);
dense_id!(JunctionId);
dense_id!(AoiId);
dense_id!(
    /// Vehicle (person) identifier.
    VehicleId
);
