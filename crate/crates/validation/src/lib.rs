//! Holds the `acceptance` test target; run it with `cargo test -p cavfield-validation --test acceptance`.
