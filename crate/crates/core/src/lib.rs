//! Code-generation based grading for "explain in plain language" questions.
//!
//! A student's natural-language explanation of a code segment is turned into
//! a Python function by an LLM, executed in a sandbox and compared against a
//! hidden reference solution over a fixed set of test vectors.

pub mod bank;
pub mod equivalence;
pub mod eval;
pub mod grader;
pub mod journal;
pub mod langtag;
pub mod llm;
pub mod model;
pub mod prompt;
pub mod sandbox;
pub mod value;

pub use model::{ArgumentTuple, AttemptPolicy, GradeAttempt, Outcome, Question, Verdict, VerdictKind};
pub use value::Value;
