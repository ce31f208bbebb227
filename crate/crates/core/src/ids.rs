//! Compact identifiers shared across the simulator.

use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! id_type {
    ($(#[$doc:meta])* $name:ident($inner:ty), $prefix:literal) => {
        $(#[$doc])*
        #[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub $inner);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_type!(
    /// Index of a node in a [`Topology`](crate::network::Topology).
    NodeId(u32),
    "n"
);
id_type!(
    /// Index of a quantum link in a [`Topology`](crate::network::Topology).
    LinkId(u32),
    "l"
);
id_type!(
    /// Unique identifier of a shared entangled pair.
    PairId(u64),
    "p"
);
id_type!(
    /// Physical memory qubit holding one half of a pair.
    QubitId(u64),
    "q"
);
id_type!(AttackerId(u32), "atk");
id_type!(
    /// Position of an action in the scenario's `attacks[]` list.
    ActionId(u32),
    "act"
);
id_type!(
    /// One connection per scenario demand (plus attacker-injected requests).
    ConnId(u32),
    "c"
);
