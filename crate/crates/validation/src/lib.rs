//! Holds the `acceptance` test target. It lives in its own package so a
//! failing criterion does not stop the unit and integration suites from
//! running first under `cargo test --workspace`.
