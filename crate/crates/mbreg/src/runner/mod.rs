//! Experiment runner (stub).
