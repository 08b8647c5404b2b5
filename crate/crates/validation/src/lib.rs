//! Holds the workspace acceptance suite (`tests/acceptance.rs`). Run it with
//! `cargo test -p ncycle-validation --test acceptance`.
