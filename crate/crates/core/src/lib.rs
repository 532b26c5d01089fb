//! Joint client admission, site selection, model partitioning, routing and
//! bandwidth allocation for federated split learning over a computing power
//! network, with a round-based simulator and baseline schedulers.

pub mod instance;
pub mod lp;
pub mod profile;
pub mod solver;
pub mod topology;
pub mod sim;
pub mod experiment;
pub mod par;
