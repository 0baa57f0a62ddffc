//! Pipeline orchestration, fixture synthesis and evaluation.
