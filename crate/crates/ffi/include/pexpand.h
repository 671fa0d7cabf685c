#ifndef PEXPAND_H
#define PEXPAND_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  PX_STATUS_OK = 0,
  PX_STATUS_NULL_POINTER = 1,
  PX_STATUS_INVALID_UTF8 = 2,
  PX_STATUS_PARSE = 3,
  PX_STATUS_UNKNOWN_NAME = 4,
  PX_STATUS_INVALID_MAP = 5,
  PX_STATUS_PRECONDITION = 6,
  PX_STATUS_NUMERICAL = 7,
  PX_STATUS_BUFFER_TOO_SMALL = 8,
  PX_STATUS_INTERNAL = 9,
  PX_STATUS_PANIC = 10,
} PxStatus;

// Opaque direction-field handle.
typedef struct PxField PxField;

// Opaque map handle.
typedef struct PxMap PxMap;

// Validation summary.
typedef struct {
  bool passed;
  size_t violations;
  double lambda;
  double lambda_lower;
  double critical_value;
} PxValidation;

// One evaluation of `J(f, v)`.
typedef struct {
  double value;
  double tail_bound;
  size_t terms;
  // Period of the turning point, or 0 when the series was summed.
  size_t period;
  bool ambiguous;
  double a_priori_bound;
} PxJResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread; empty after a success.
// The pointer stays valid until the next `px_*` call on this thread.
const char *px_last_error(void);

// Library version as a static NUL-terminated string.
const char *px_version(void);

// Parse a map from its JSON form `{"left": [...], "right": [...], "k": n}`.
//
// # Safety
// `json` must be a NUL-terminated string and `map` a writable pointer.
PxStatus px_map_from_json(const char *json, PxMap **map);

// Built-in maps: `"full_tent"` and `"golden_tent"`.
//
// # Safety
// `name` must be a NUL-terminated string and `map` a writable pointer.
PxStatus px_map_builtin(const char *name, PxMap **map);

// # Safety
// `map` must come from this library and not be used afterwards. Null is ignored.
void px_map_free(PxMap *map);

// Parse a direction field from `{"left": [...], "right": [...]}`.
//
// # Safety
// `json` must be a NUL-terminated string and `field` a writable pointer.
PxStatus px_field_from_json(const char *json, PxField **field);

// Built-in fields: `"bump"`, `"odd_bump"`, `"quartic_bump"`, `"tent"`, `"zero"`, `"one"`.
//
// # Safety
// `name` must be a NUL-terminated string and `field` a writable pointer.
PxStatus px_field_builtin(const char *name, PxField **field);

// # Safety
// `field` must come from this library and not be used afterwards. Null is ignored.
void px_field_free(PxField *field);

// Check the defining conditions. Returns `PX_STATUS_OK` whether or not the map passes;
// read `report.passed`.
//
// # Safety
// `map` must be a live handle and `report` a writable pointer.
PxStatus px_map_validate(const PxMap *map, PxValidation *report);

// `f(x)` for `x` in `[-1, 1]`.
//
// # Safety
// `map` must be a live handle and `value` a writable pointer.
PxStatus px_map_eval(const PxMap *map, double x, double *value);

// `J(f, v)` to tolerance `tol`.
//
// # Safety
// `map` and `field` must be live handles and `result` a writable pointer.
PxStatus px_j(const PxMap *map, const PxField *field, double tol, PxJResult *result);

// The solution `alpha` of the twisted cohomological equation, evaluated at `x`.
//
// # Safety
// `map` and `field` must be live handles and `value` a writable pointer.
PxStatus px_alpha(const PxMap *map, const PxField *field, double x, double tol, double *value);

// First `n` itinerary symbols of `x` (`L`, `C`, `R`) written to `buf` with a trailing NUL.
// `buf_len` must be at least `n + 1`.
//
// # Safety
// `map` must be a live handle and `buf` must hold `buf_len` bytes.
PxStatus px_itinerary(const PxMap *map, double x, size_t n, char *buf, size_t buf_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PEXPAND_H */
