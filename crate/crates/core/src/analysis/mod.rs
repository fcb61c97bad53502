//! Static grammar analysis: the `reg` approximation with emptiness,
//! first-character and overlap queries, size bounds, left recursion.

mod leftrec;
mod paull;
mod reg;
mod reglang;
mod size;

pub use leftrec::{detect_left_recursion, LeftEdge, LeftRecReport, RuleLeftRec};
pub use paull::{paull_rewrite, RewriteError};
pub use reg::{empty, first_chars, overlap, reg, FirstChars, RegCache};
pub use reglang::{CharSet, NfaBuilder, RegLang};
pub use size::{continuation_min_bound, size_bounds, SizeBounds, SizeTable, NEVER};
