//! Holds the `acceptance` test target; run it with
//! `cargo test -p hopper-validation --test acceptance`.
