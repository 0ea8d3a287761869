//! Hurricane attention analytics: n-gram usage rates, HURDAT2 tracks,
//! attention metrics, decay fits, Bayesian impact regressions and
//! attention-envelope maps.

pub mod bayes;
pub mod corpus;
pub mod decay;
pub mod dossier;
pub mod hurdat2;
pub mod mapgen;
pub mod metrics;
mod optim;
pub mod reference;
