//! Holds the workspace acceptance suite (`cargo test -p biaskit-conformance`).
//! It lives in its own package so it runs after every other test binary.
