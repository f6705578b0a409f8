//! Kinetic-optimal Gaussian probability-path schedules for flow matching.
//!
//! A Gaussian probability path interpolates between a standard-normal source
//! and a target dataset through per-sample conditionals
//! `p_t(x | x1) = N(x | a_t·x1, m_t²·I)`, where the *schedule* `(a_t, m_t)`
//! runs from `(0, 1)` at `t = 0` (pure noise) to `(1, 0)` at `t = 1` (data).
//! Different schedules induce marginal vector fields with very different
//! kinetic energies, and straighter (lower-energy) fields sample well with
//! fewer solver steps.
//!
//! This crate provides the full desk-scale pipeline:
//!
//! * [`dataset`] — generation, normalization, and I/O of finite datasets;
//! * [`separation`] — Monte-Carlo estimation of the data separation function
//!   `λ(s)`, the quantity that controls the gap between conditional and
//!   marginal kinetic energy, plus closed-form references;
//! * [`schedule`] — built-in schedule families (Cond-OT, trigonometric
//!   interpolant, DDPM) with their polar form `(r_t, θ_t)` and derived
//!   coefficients;
//! * [`energy`] — quadrature of the conditional kinetic energy and the
//!   λ-weighted kinetic energy of a schedule;
//! * [`kopt`] — the kinetic-optimal schedule search: a direct optimizer over
//!   a small θ-network and a shooting solver for the Euler–Lagrange ODE;
//! * [`theory`] — numerical verification of the supporting bounds (the `η`
//!   integral, the separation integral bound, the `γ`-positivity condition,
//!   and the kinetic-energy squeeze);
//! * [`flowmatch`] — a tiny 2-D conditional flow-matching trainer with manual
//!   backpropagation, an Euler sampler, and a model kinetic-energy probe;
//! * [`plot`] — a deterministic SVG line-chart emitter for figure-style
//!   output.
//!
//! Numerical plumbing lives in [`quad`] (Simpson and Gauss–Hermite rules),
//! [`spline`] (natural cubic interpolation), and [`rng`] (splittable
//! counter-based randomness so every stage is reproducible from one seed).

pub mod dataset;
pub mod energy;
pub mod flowmatch;
pub mod kopt;
pub mod plot;
pub mod quad;
pub mod rng;
pub mod schedule;
pub mod separation;
pub mod spline;
pub mod theory;

pub use dataset::Dataset;
pub use energy::EnergyReport;
pub use kopt::KoSolution;
pub use schedule::Schedule;
pub use separation::LambdaEstimate;
pub use theory::BoundReport;
