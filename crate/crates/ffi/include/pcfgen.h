#ifndef PCFGEN_H
#define PCFGEN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum PcfgStatus {
  PCFG_STATUS_OK = 0,
  // A required pointer argument was null.
  PCFG_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8 or contained an interior NUL.
  PCFG_STATUS_INVALID_UTF8 = 2,
  // The grammar text or structure is invalid.
  PCFG_STATUS_GRAMMAR_ERROR = 3,
  // An input did not parse under the grammar.
  PCFG_STATUS_PARSE_ERROR = 4,
  // The grammar lacks the probabilities the operation needs.
  PCFG_STATUS_NOT_NORMALIZED = 5,
  // A numeric argument is out of range.
  PCFG_STATUS_INVALID_ARGUMENT = 6,
  // An unexpected internal failure.
  PCFG_STATUS_INTERNAL = 7,
} PcfgStatus;

// A parsed grammar.
typedef struct PcfgGrammar PcfgGrammar;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. Valid until the
// next call into this library on the same thread.
const char *pcfg_last_error(void);

// Library version as a static string.
const char *pcfg_version(void);

// Parses grammar text into a new handle.
//
// # Safety
// `text` must be a valid NUL-terminated string and `out` a valid pointer.
enum PcfgStatus pcfg_grammar_parse(const char *text, struct PcfgGrammar **out);

// Releases a grammar handle. Null is ignored.
//
// # Safety
// `grammar` must come from this library and not be used afterwards.
void pcfg_grammar_free(struct PcfgGrammar *grammar);

// Writes the grammar in the text format read by [`pcfg_grammar_parse`].
//
// # Safety
// `grammar` must be a live handle and `out` a valid pointer.
enum PcfgStatus pcfg_grammar_serialize(const struct PcfgGrammar *grammar, char **out);

// Learns probabilities from `count` sample strings. With
// `skip_unparsable`, samples that do not parse are left out instead of
// failing the call.
//
// # Safety
// `samples` must point to `count` valid NUL-terminated strings (it may be
// null when `count` is 0); `grammar` must be a live handle and `out` a valid
// pointer.
enum PcfgStatus pcfg_learn(const struct PcfgGrammar *grammar,
                           const char *const *samples,
                           size_t count,
                           bool skip_unparsable,
                           struct PcfgGrammar **out);

// Inverts the probabilities of a normalized grammar.
//
// # Safety
// `grammar` must be a live handle and `out` a valid pointer.
enum PcfgStatus pcfg_invert(const struct PcfgGrammar *grammar, struct PcfgGrammar **out);

// Generates input number `index` of the suite seeded with `seed`. The
// result equals the file `index` written by `pcfgen generate` with the same
// grammar, seed and `max_expansions`.
//
// # Safety
// `grammar` must be a live handle and `out` a valid pointer.
enum PcfgStatus pcfg_generate(const struct PcfgGrammar *grammar,
                              size_t max_expansions,
                              uint64_t seed,
                              uint64_t index,
                              char **out);

// Parses `input` and returns its derivation tree as JSON.
//
// # Safety
// `grammar` must be a live handle, `input` a valid NUL-terminated string and
// `out` a valid pointer.
enum PcfgStatus pcfg_parse_json(const struct PcfgGrammar *grammar, const char *input, char **out);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not be used afterwards.
void pcfg_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PCFGEN_H */
