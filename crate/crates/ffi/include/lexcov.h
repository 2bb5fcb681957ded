/* C interface to the lexcov lexical rule compiler. */

#ifndef LEXCOV_H
#define LEXCOV_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes; non-zero values mirror the CLI exit codes.
 */
typedef enum LexcovStatus {
  LEXCOV_STATUS_OK = 0,
  LEXCOV_STATUS_IO = 1,
  LEXCOV_STATUS_PARSE = 2,
  LEXCOV_STATUS_SIGNATURE = 3,
  LEXCOV_STATUS_COMPILE = 4,
  LEXCOV_STATUS_QUERY = 5,
  LEXCOV_STATUS_NULL_ARGUMENT = 6,
  LEXCOV_STATUS_UTF8 = 7,
  LEXCOV_STATUS_PANIC = 8,
} LexcovStatus;

/**
 * Opaque handle to a compiled lexicon.
 */
typedef struct LexcovLexicon LexcovLexicon;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Returns the crate version as a caller-freed string.
 */
char *lexcov_version(void);

/**
 * Returns and clears the thread-local error message, or NULL when no error
 * has been recorded. The caller frees it.
 */
char *lexcov_last_error(void);

/**
 * Frees a string previously returned by this library.
 *
 * # Safety
 * `s` must be NULL or a pointer obtained from a `lexcov_*` function and not
 * freed before.
 */
void lexcov_string_free(char *s);

/**
 * Compiles a grammar from source text. On success writes a fresh handle to
 * `out`; release it with [`lexcov_lexicon_free`].
 *
 * # Safety
 * `grammar_text` must be a valid NUL-terminated string and `out` a valid
 * pointer.
 */
enum LexcovStatus lexcov_compile(const char *grammar_text,
                                 uint32_t unfurl_depth,
                                 struct LexcovLexicon **out);

/**
 * Releases a lexicon handle.
 *
 * # Safety
 * `lex` must be NULL or a handle from [`lexcov_compile`], not freed before.
 */
void lexcov_lexicon_free(struct LexcovLexicon *lex);

/**
 * Writes the follow relation as text.
 *
 * # Safety
 * `lex` must be a live handle; `out` a valid pointer.
 */
enum LexcovStatus lexcov_follow(const struct LexcovLexicon *lex, char **out);

/**
 * Writes an automaton in Graphviz syntax: the per-entry pruned automaton
 * when `entry` is non-NULL, otherwise the global automaton when `global` is
 * non-zero, otherwise the reduced one.
 *
 * # Safety
 * `lex` must be a live handle; `entry` NULL or a string; `out` valid.
 */
enum LexcovStatus lexcov_fsa_dot(const struct LexcovLexicon *lex,
                                 const char *entry,
                                 bool global,
                                 char **out);

/**
 * Writes the clause listing (rule, transfer and interaction clauses).
 *
 * # Safety
 * `lex` must be a live handle; `out` valid.
 */
enum LexcovStatus lexcov_clauses(const struct LexcovLexicon *lex, bool unfolded, char **out);

/**
 * Writes the extended entry (class entry point plus lifted description).
 *
 * # Safety
 * `lex` must be a live handle; `entry` a string; `out` valid.
 */
enum LexcovStatus lexcov_lift(const struct LexcovLexicon *lex, const char *entry, char **out);

/**
 * Enumerates the derivable entries of `entry`, one AVM per line.
 *
 * # Safety
 * `lex` must be a live handle; `entry` a string; `out` valid.
 */
enum LexcovStatus lexcov_derive(const struct LexcovLexicon *lex,
                                const char *entry,
                                uint32_t max_depth,
                                char **out);

/**
 * Looks a query AVM up across the lexicon; one `entry : AVM` line per
 * solution.
 *
 * # Safety
 * `lex` must be a live handle; `query_avm` a string; `out` valid.
 */
enum LexcovStatus lexcov_lookup(const struct LexcovLexicon *lex,
                                const char *query_avm,
                                uint32_t max_depth,
                                char **out);

/**
 * Writes the full compiled-lexicon artifact.
 *
 * # Safety
 * `lex` must be a live handle; `out` valid.
 */
enum LexcovStatus lexcov_artifact(const struct LexcovLexicon *lex, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LEXCOV_H */
