//! Tabular inverse reinforcement learning.
//!
//! Soft value iteration and maximum causal entropy IRL by dual ascent, maximum
//! entropy IRL with exact enumeration oracles, importance-sampled (GCL-style) and
//! adversarial (AIRL-style) approximations, and tools for reasoning about reward
//! shaping and identifiability.
//!
//! Every algorithm is generic over the [`Scalar`] type (`f32` or `f64`); the
//! aliases at the bottom of this module fix it to `f64`.

pub mod airl;
pub mod envs;
pub mod error;
pub mod features;
pub mod gcl;
pub mod io;
pub mod mce;
pub mod mdp;
pub mod me;
pub mod occupancy;
pub mod scalar;
pub mod shaping;
pub mod soft_vi;
pub mod trajectory;

pub use error::{Error, Result};
pub use features::{DemonstrationSet, FeatureMap, RewardModel, TabularShape};
pub use mdp::{Horizon, Policy, TabularMdp, Trajectory};
pub use occupancy::OccupancyMeasure;
pub use scalar::Scalar;
pub use soft_vi::{SoftMode, SoftValues};

pub type Mdp = TabularMdp<f64>;
pub type SoftPolicy = Policy<f64>;
pub type Features = FeatureMap<f64>;
pub type Reward = RewardModel<f64>;
pub type Demonstrations = DemonstrationSet<f64>;
pub type Occupancy = OccupancyMeasure<f64>;
pub type Values = SoftValues<f64>;
pub type Planner = soft_vi::PartialSoftPlanner<f64>;
pub type Spec = io::MdpSpec<f64>;
pub type Fit = mce::FitResult<f64>;
pub type Discriminator = airl::AirlDiscriminator<f64>;
