//! Optimal transport between measures on a state space where the ground
//! cost is the minimal action of a control problem.
//!
//! The pieces, bottom up:
//!
//! - [`expr`]: small expression language with symbolic derivatives, used for
//!   dynamics, running costs and initial data.
//! - [`problem`]: a control problem `x' = f(x, u)`, cost `L(x, u, t)`, and its
//!   Hamiltonian `H(x, p, t) = sup_u <p, f> - L`.
//! - [`characteristics`]: the Hamiltonian flow `X' = H_p, P' = -H_x` and
//!   caustic detection.
//! - [`hjb`]: a semi-Lagrangian solver for `u_t + H(x, D_x u) = 0`, with a
//!   Hopf-Lax oracle on the quadratic family.
//! - [`cost`]: `c(x, y)` by shooting, direct transcription, or a grid DP.
//! - [`transport`]: exact discrete transport by network simplex, Kantorovich
//!   potentials, and the Monge map obtained by flowing characteristics.
//! - [`spec`] and [`cli`]: problem files and the `charflow` command.
//!
//! ```
//! use charflow::problem::ControlProblem;
//!
//! let prob = ControlProblem::quadratic(1, -1.0, 1.0);
//! let h = prob.hamiltonian(&[0.0], &[3.0], 0.0).unwrap();
//! assert_eq!(h.value, 4.5);
//! ```

pub mod characteristics;
pub mod cli;
pub mod cost;
pub mod expr;
pub mod grid;
pub mod hjb;
pub mod io;
pub mod ode;
pub mod problem;
pub mod spec;
pub mod transport;
