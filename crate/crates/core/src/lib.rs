//! A typed quantum λ-calculus with superposition types, casts and
//! measurement: parser, typechecker, probabilistic rewrite engine and a
//! vector denotation used to cross-check the engine.
//!
//! ```
//! use qlam::{surface, typecheck, rewrite::Engine};
//!
//! let src = surface::parse("pi[1] ((1/sqrt(2)).|0> + (1/sqrt(2)).|1>)").unwrap();
//! let ty = typecheck::infer_closed(&src.main).unwrap();
//! assert_eq!(ty.to_string(), "B");
//! let dist = Engine::default().run_distribution(&src.main, 100).unwrap();
//! assert_eq!(dist.merged.len(), 2);
//! ```

pub mod props;
pub mod rewrite;
pub mod scalar;
pub mod semantics;
pub mod surface;
pub mod syntax;
pub mod typecheck;
pub mod typesys;

pub use scalar::Scalar;
pub use syntax::{Term, Type};
