//! Holds the `acceptance` test target; run it with
//! `cargo test -p dfssmvep-verify --test acceptance`.
