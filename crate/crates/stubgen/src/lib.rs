//! Stub generator for accelerator APIs.
//!
//! Three steps: [`parse_api`] turns a header into an [`ApiSpec`], marking
//! pointer parameters it cannot bound; [`merge_annotations`] fills those
//! from a user [`AnnotationFile`]; [`generate_stubs`] renders client stubs
//! and server registrations through a template directory.

pub mod annotate;
pub mod expr;
pub mod generate;
pub mod parse;
pub mod spec;

pub use annotate::{apply_annotations, merge_annotations, AnnotationError, AnnotationFile};
pub use expr::SizeExpr;
pub use generate::{generate_stubs, GenError, GeneratedArtifacts, Templates};
pub use parse::{parse_api, ParseError};
pub use spec::{AddressSpace, ApiSpec, Direction, FunctionSpec, ParamSpec};
