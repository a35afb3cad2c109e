//! Holds the `acceptance` test target: `cargo test -p nlscont-acceptance`.
