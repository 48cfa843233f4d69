/*
 * Copyright (c) 2026, The NIO Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the NIO library. Objects are opaque handles owned by the
 * caller and released with the matching *_free function. Every fallible call
 * returns a nio_status; on failure nio_last_error() describes the problem for
 * the calling thread. Strings returned through char** are heap allocated and
 * released with nio_string_free.
 */
#ifndef NIO_C_H
#define NIO_C_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define NIO_API __declspec(dllexport)
#else
#define NIO_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum nio_status {
  NIO_OK = 0,
  NIO_ERR_INVALID_ARGUMENT = 1,
  NIO_ERR_SHAPE = 2,
  NIO_ERR_DTYPE = 3,
  NIO_ERR_TAPE = 4,
  NIO_ERR_IO = 5,
  NIO_ERR_FORMAT = 6,
  NIO_ERR_NUMERIC = 7,
  NIO_ERR_INTERNAL = 99
} nio_status;

typedef enum nio_dtype { NIO_F32 = 0, NIO_F64 = 1 } nio_dtype;

typedef struct nio_dataset nio_dataset;
typedef struct nio_model nio_model;
typedef struct nio_params nio_params;

NIO_API const char* nio_version(void);
NIO_API const char* nio_last_error(void);
NIO_API void nio_string_free(char* s);

/* Datasets */
NIO_API nio_status nio_dataset_blobs(size_t classes, size_t per_class, size_t dim, double spread, uint64_t seed,
                                     nio_dataset** out);
NIO_API nio_status nio_dataset_idx(const char* images_path, const char* labels_path, nio_dataset** out);
NIO_API nio_status nio_dataset_cifar10(const char* const* paths, size_t count, int normalize, nio_dataset** out);
NIO_API size_t nio_dataset_size(const nio_dataset* d);
NIO_API size_t nio_dataset_classes(const nio_dataset* d);
/* Writes up to cap per-sample extents; *rank receives the full rank. */
NIO_API nio_status nio_dataset_sample_shape(const nio_dataset* d, size_t* dims, size_t cap, size_t* rank);
NIO_API void nio_dataset_free(nio_dataset* d);

/* Models: "mlp3", "cnn4" or a layer list such as
 * "flatten,linear:784:32,bias:32,relu,linear:32:10,bias:10". */
NIO_API nio_status nio_model_create(const char* layers, const size_t* input_shape, size_t rank, size_t num_classes,
                                    nio_model** out);
NIO_API nio_status nio_model_describe(const nio_model* m, char** out);
NIO_API void nio_model_free(nio_model* m);

/* Parameters. scheme: kaiming, xavier, orthogonal or trunc_normal. */
NIO_API nio_status nio_params_init(const nio_model* m, const char* scheme, uint64_t seed, nio_dtype dtype,
                                   nio_params** out);
NIO_API nio_status nio_params_load(const char* path, nio_params** out);
NIO_API nio_status nio_params_save(const nio_params* p, const char* path);
NIO_API nio_status nio_params_convert(const nio_params* p, nio_dtype dtype, nio_params** out);
NIO_API size_t nio_params_count(const nio_params* p);
NIO_API nio_dtype nio_params_dtype(const nio_params* p);
/* The returned name stays valid while p is alive. */
NIO_API nio_status nio_params_name(const nio_params* p, size_t index, const char** name);
NIO_API void nio_params_free(nio_params* p);

/* Gradient metrics of one batch (drawn with seed) as JSON. */
NIO_API nio_status nio_metrics_json(const nio_model* m, const nio_params* p, const nio_dataset* d, size_t batch_size,
                                    size_t sub_batches, double overlap, uint64_t seed, char** json);

typedef struct nio_init_config {
  double tau;
  double gamma;
  double alpha_lb;
  size_t iterations; /* 0: ceil(dataset size / batch size) */
  size_t batch_size;
  size_t sub_batches;
  double overlap;
  uint64_t seed;
  int finite_difference; /* nonzero: central differences instead of double backward */
  double fd_step;
  size_t snapshot_every;
} nio_init_config;

NIO_API void nio_init_config_default(nio_init_config* c);
/* gamma default for a class count. */
NIO_API double nio_default_gamma(size_t num_classes);
/* Runs initialization optimization. trace_csv (iter,gc,gn,g_max,branch) and
 * scales_csv (coefficient snapshots) may be NULL. */
NIO_API nio_status nio_init_run(const nio_model* m, const nio_params* p, const nio_dataset* d,
                                const nio_init_config* c, nio_params** rectified, char** trace_csv,
                                char** scales_csv);

typedef struct nio_train_config {
  size_t epochs;
  size_t batch_size;
  double lr;
  double momentum;
  double weight_decay;
  double clip_norm; /* 0 disables clipping */
  uint64_t seed;
} nio_train_config;

NIO_API void nio_train_config_default(nio_train_config* c);
/* test may be NULL. log_csv: epoch,loss,train_acc,test_acc (may be NULL). */
NIO_API nio_status nio_train(const nio_model* m, const nio_params* p, const nio_dataset* train,
                             const nio_dataset* test, const nio_train_config* c, nio_params** out, char** log_csv);

/* Checks L(overall optimum) <= Theta on random landscapes; CSV id,n,dim,L,Theta,Psi,holds,gap. */
NIO_API nio_status nio_oracle_sweep(size_t instances, uint64_t seed, char** csv, size_t* failures);
/* Population-loss bound violation rate by Monte Carlo, Gaussian optima in dim dimensions. */
NIO_API nio_status nio_oracle_theorem3(size_t n, size_t dim, double delta, size_t trials, uint64_t seed,
                                       double* violation_rate);

/* Per-layer and whole-network GC / norm ratio; csv is layer,gc,norm_ratio
 * with a final "network" row, distribution_csv (may be NULL) batch,gc,norm_ratio. */
NIO_API nio_status nio_diagnostics(const nio_model* m, const nio_params* p, const nio_dataset* d, size_t batch_size,
                                   size_t sub_batches, double overlap, size_t num_batches, uint64_t seed, char** csv,
                                   char** distribution_csv);

#ifdef __cplusplus
}
#endif

#endif /* NIO_C_H */
