//! Optimal auctions for bidders who perceive a payment `p` as `q = p²`.
//!
//! Bidders have finite type spaces and independent discrete priors. An
//! allocation rule is a table `x[i][v]` over type profiles; payments follow
//! from it through the quadratic payment identity, so every mechanism here
//! is built by choosing an allocation and deriving the rest.
//!
//! * [`model`]: type spaces, priors, instances and the table types.
//! * [`virtual_value`]: discrete virtual values and regularity.
//! * [`alloc`]: per-profile allocation engines.
//! * [`payments`]: robust (ex-post) and Bayesian (interim) payment rules.
//! * [`mechanisms`]: end-to-end pipelines and revenue bounds.
//! * [`oracle`]: exact solvers for tiny instances, the constraint verifier
//!   and a text exporter for the underlying programs.
//! * [`discretization`]: grid rounding and its cost.
//!
//! Heavy loops run on rayon when the default `parallel` feature is on and
//! sequentially otherwise. Results are identical either way.
//!
//! ```
//! use convex_auction::model::{make_uniform, AuctionInstance};
//! use convex_auction::mechanisms::virtual_surplus_maximizer;
//!
//! let (types, dist) = make_uniform(3).unwrap();
//! let inst = AuctionInstance::symmetric(2, types, dist).unwrap();
//! let (mech, report) = virtual_surplus_maximizer(&inst).unwrap();
//! assert!(report.verification.all_passed());
//! assert!(mech.revenue(&inst).unwrap() > 0.0);
//! ```

pub mod alloc;
pub mod discretization;
pub mod error;
pub mod mechanisms;
pub mod model;
pub mod oracle;
mod par;
pub mod payments;
pub mod virtual_value;

pub use error::{AuctionError, Result};
pub use model::{
    AuctionInstance, Bidder, DiscreteDistribution, ExPostAllocation, InterimAllocation, InterimPaymentRule,
    PerceivedPayment, RobustPaymentRule, TypeProfile, TypeSpace,
};
pub use par::is_parallel;
