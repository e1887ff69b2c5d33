use core::fmt;

use crate::params::ParameterVector;

/// Opaque client identifier. Aggregators fold client contributions in
/// ascending id order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct ClientId(pub u32);

impl fmt::Display for ClientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One client's submission for one round.
///
/// `delta` is the client's post-training weights minus the round's starting
/// global weights; `alpha` is its share of the round's training samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client_id: ClientId,
    pub round: u32,
    pub delta: ParameterVector,
    pub alpha: f64,
}

impl ClientUpdate {
    pub fn new(client_id: ClientId, round: u32, delta: ParameterVector, alpha: f64) -> Self {
        ClientUpdate {
            client_id,
            round,
            delta,
            alpha,
        }
    }
}
