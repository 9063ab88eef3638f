//! Property checks and experiments built on the integrator.

pub mod apriori;
pub mod assumptions;
pub mod compare;
pub mod contraction;
pub mod ensemble;
pub mod equivalence;
pub mod gaussian;
pub mod gibbs;
pub mod mixing;
pub mod reflection;
pub mod scan;
pub mod stats;
