//! Acceptance suite for `mmfbmc`; the checks live in `tests/acceptance.rs`
//! and run with `cargo test -p mmfbmc-repro --test acceptance`.
