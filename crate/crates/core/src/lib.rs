//! Privacy-preserving aggregation for quantized federated learning that can
//! pinpoint and remove clients submitting illegitimate parameters.
//!
//! Clients are arranged on a `d^n` hypermesh ([`hypermesh`]). Within every
//! group they exchange pairwise randoms, mask their quantized codes with
//! zero-sum shares and commit to those shares ([`masking`], [`group`]). The
//! server runs three checks per round ([`protocol`]): share commitments
//! must multiply to the identity, each client's unmasked commitments must
//! agree across its groups, and every group sum must stay inside the range
//! the codebook allows. Clients whose every group is flagged are declared
//! malicious, and flagged groups are dropped before averaging.

pub mod adversary;
pub mod error;
pub mod group;
pub mod harness;
pub mod hypermesh;
pub mod masking;
pub mod protocol;
pub mod quantfl;
pub mod seeds;
pub mod transport;

pub use error::{Error, Result};
pub use group::{Commitment, Element, GroupParams, Scalar, Tier};
pub use hypermesh::{ClientId, GroupId, HypermeshTopology};
