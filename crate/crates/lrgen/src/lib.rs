//! A toolkit for generating natural-language surface strings from logical
//! forms, driven by tables compiled from an annotated unification grammar.
//!
//! The pipeline has three stages:
//!
//! 1. [`grammar`] parses an annotated grammar and brings every rule into a
//!    *normal form* in which each constituent carries a category, a logical
//!    form, a word-string difference list, and a pending-argument list.
//! 2. [`inversion`] turns the normalized rules inside out, producing rules
//!    whose left-hand sides are keyed by logical-form functors instead of
//!    categories, so derivations can be driven top-down from a logical form.
//! 3. [`gen_compile`] compiles the inverted rules into an LR-style table
//!    ([`gen_compile::GenTables`]) whose states discriminate between rules
//!    by inspecting bounded prefixes of the input logical form.  The
//!    [`generator`] module walks those tables to produce surface strings.
//!
//! Two reference implementations accompany the table-driven generator for
//! cross-checking: a semantic-head-driven generator ([`shdg`]) that works
//! directly on the annotated grammar, and an exhaustive derivation
//! enumerator ([`oracle`]).  [`lr_parse`] builds ordinary SLR(1) parsing
//! tables from the context-free projection of the same grammar, so that a
//! grammar can both parse and generate.

pub mod compare;
pub mod gen_compile;
pub mod generator;
pub mod grammar;
pub mod inversion;
pub mod lr_parse;
pub mod oracle;
pub mod shdg;
pub mod terms;
