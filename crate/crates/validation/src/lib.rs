//! Acceptance checks live in `tests/acceptance.rs`. This package sorts after
//! the others so `cargo test --workspace` runs every other suite first.
