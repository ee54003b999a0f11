//! Bi-flow product/process/resource asset networks.
//!
//! One graph describes how a product is assembled; read backwards, the same
//! graph describes how it is taken apart. This crate builds and validates such
//! networks, extracts assembly, disassembly and repair plans from them, checks
//! plans against available resource skills, replays plans against an
//! inventory, and keeps per-instance product digital twins whose recorded
//! component health drives repair planning.
//!
//! ```
//! use bipan::fixtures::f1;
//! use bipan::plan::{assembly_recipe, Direction};
//!
//! let model = f1();
//! let plan = assembly_recipe(&model).unwrap();
//! assert_eq!(plan.len(), 5);
//! assert!(plan.steps.iter().all(|s| s.direction == Direction::Forward));
//! ```

pub mod cli;
pub mod exec;
pub mod fixtures;
pub mod io;
pub mod model;
pub mod pdt;
pub mod plan;
pub mod validate;

pub use model::{BiPanModel, ModelParts, NodeId, ProductKind};
