//! Compiler and runtime for lexical rules as covariation in lexical entries.
//!
//! A grammar file declares a type signature, a sequence of lexical rules
//! (in-specification ↦ out-specification over typed feature structures) and
//! base lexical entries. Compilation proceeds in stages:
//!
//! 1. [`rules`] — each rule becomes a binary rule predicate plus derived
//!    transfer clauses that carry every unchanged property from input to
//!    output (one clause per consistent species frame).
//! 2. [`interaction`] — a follow relation over rules is computed by
//!    unifiability testing, turned into a finite-state automaton over rule
//!    sequences, reduced by propagating specifications, and pruned per entry
//!    (abstract lexicon expansion with tabling of derived structures).
//!    Entries with identical pruned automata share a natural class.
//! 3. [`transform`] — failing transfer clauses are dropped per class,
//!    surviving ones are unfolded into the interaction clauses, and each
//!    extended entry is enriched with the generalization of everything it can
//!    derive, enabling delayed ("on the fly") rule application.
//! 4. [`runtime`] — a small resolution engine enumerates derived entries and
//!    answers lookup queries against the compiled lexicon.
//!
//! The [`compile`] module drives the stages; the `lexcov` binary exposes each
//! of them as a subcommand.

pub mod check;
pub mod compile;
pub mod featstruct;
pub mod grammar;
pub mod interaction;
pub mod rules;
pub mod runtime;
pub mod signature;
pub mod transform;
