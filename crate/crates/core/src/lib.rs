//! Energy bounds, laminate constructions and G-closure certificates for
//! two-phase linear elastic composites, plus the conductivity analogues.

pub mod bounds;
pub mod error;
pub mod laminate;
pub mod tensor;
pub mod thermal;
pub mod verify;

pub use error::{Error, Result};
