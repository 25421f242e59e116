/* C interface to the gcfx counterfactual-explanation library. */

#ifndef GCFX_H
#define GCFX_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

#define GCFX_OK 0

#define GCFX_ERR_NULL_POINTER 1

#define GCFX_ERR_INVALID_ARGUMENT 2

#define GCFX_ERR_RUNTIME 3

// Opaque consensus-classifier handle.
typedef struct GcfxClassifier GcfxClassifier;

// Opaque dataset handle.
typedef struct GcfxDataset GcfxDataset;

// Opaque counterfactual-generator handle.
typedef struct GcfxGenerator GcfxGenerator;

// Opaque single-graph handle.
typedef struct GcfxGraph GcfxGraph;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread. The pointer is
// valid until the next failing call on the same thread.
const char *gcfx_last_error_message(void);

const char *gcfx_version(void);

// Generate the synthetic P5Motif dataset.
//
// # Safety
// `out` must point to writable storage for one pointer.
int gcfx_dataset_generate_p5motif(size_t graph_count, uint64_t seed, struct GcfxDataset **out);

// # Safety
// `path` must be a NUL-terminated string and `out` writable.
int gcfx_dataset_read(const char *path, struct GcfxDataset **out);

// # Safety
// `d` must be a live dataset handle and `path` NUL-terminated.
int gcfx_dataset_write(const struct GcfxDataset *d, const char *path);

// # Safety
// `d` must be a live dataset handle and `out` writable.
int gcfx_dataset_len(const struct GcfxDataset *d, size_t *out);

// Label of graph `index`; -1 when the graph is unlabeled.
//
// # Safety
// `d` must be a live dataset handle and `out` writable.
int gcfx_dataset_label(const struct GcfxDataset *d, size_t index, int64_t *out);

// # Safety
// `d` must be null or a pointer returned by a dataset constructor.
void gcfx_dataset_free(struct GcfxDataset *d);

// Train the k-fold consensus classifier.
//
// # Safety
// `d` must be a live dataset handle and `out` writable.
int gcfx_classifier_train(const struct GcfxDataset *d,
                          size_t epochs,
                          uint64_t seed,
                          struct GcfxClassifier **out);

// # Safety
// `path` must be NUL-terminated and `out` writable.
int gcfx_classifier_read(const char *path, struct GcfxClassifier **out);

// # Safety
// `c` must be a live classifier handle and `path` NUL-terminated.
int gcfx_classifier_write(const struct GcfxClassifier *c, const char *path);

// Predicted label for one graph.
//
// # Safety
// `c` and `g` must be live handles and `out` writable.
int gcfx_classifier_predict(const struct GcfxClassifier *c, const struct GcfxGraph *g, size_t *out);

// Consensus class probabilities for one graph. `probs_len` must equal
// the classifier's label count.
//
// # Safety
// `c` and `g` must be live handles; `probs` must point to `probs_len`
// writable doubles.
int gcfx_classifier_probs(const struct GcfxClassifier *c,
                          const struct GcfxGraph *g,
                          double *probs,
                          size_t probs_len);

// # Safety
// `c` must be null or a pointer returned by a classifier constructor.
void gcfx_classifier_free(struct GcfxClassifier *c);

// Train the counterfactual generator on the dataset graphs whose true
// label is `target_label`, toward class `counterfactual_label`.
//
// # Safety
// `d` and `c` must be live handles and `out` writable.
int gcfx_generator_train(const struct GcfxDataset *d,
                         const struct GcfxClassifier *c,
                         size_t target_label,
                         size_t counterfactual_label,
                         size_t epochs,
                         uint64_t seed,
                         struct GcfxGenerator **out);

// # Safety
// `path` must be NUL-terminated and `out` writable.
int gcfx_generator_read(const char *path, struct GcfxGenerator **out);

// # Safety
// `m` must be a live generator handle and `path` NUL-terminated.
int gcfx_generator_write(const struct GcfxGenerator *m, const char *path);

// # Safety
// `m` must be null or a pointer returned by a generator constructor.
void gcfx_generator_free(struct GcfxGenerator *m);

// Borrow graph `index` of the dataset as an owned graph handle.
//
// # Safety
// `d` must be a live dataset handle and `out` writable.
int gcfx_dataset_graph(const struct GcfxDataset *d, size_t index, struct GcfxGraph **out);

// Decode one approximate counterfactual of `g` toward class `y_c`.
// `sample` 0 decodes by argmax, nonzero samples edge and node types
// under `seed`. Writes null to `out` when the decode has no edges.
//
// # Safety
// `m` and `g` must be live handles and `out` writable.
int gcfx_generate_counterfactual(const struct GcfxGenerator *m,
                                 const struct GcfxGraph *g,
                                 size_t y_c,
                                 int sample,
                                 uint64_t seed,
                                 struct GcfxGraph **out);

// # Safety
// `g` must be a live graph handle and `out` writable.
int gcfx_graph_node_count(const struct GcfxGraph *g, size_t *out);

// # Safety
// `g` must be a live graph handle and `out` writable.
int gcfx_graph_edge_count(const struct GcfxGraph *g, size_t *out);

// Normalized perturbation cost between two graphs.
//
// # Safety
// `a` and `b` must be live graph handles and `out` writable.
int gcfx_perturbation_cost(const struct GcfxGraph *a, const struct GcfxGraph *b, double *out);

// # Safety
// `g` must be null or a pointer returned by a graph constructor.
void gcfx_graph_free(struct GcfxGraph *g);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GCFX_H */
