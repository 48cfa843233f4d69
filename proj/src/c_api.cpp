// Copyright (c) 2026, The NIO Authors
// SPDX-License-Identifier: Apache-2.0

#include "nio/nio_c.h"

#include <cstdlib>
#include <cstring>
#include <sstream>
#include <string>
#include <variant>

#include "nio/harness.hpp"
#include "nio/nio.hpp"
#include "nio/oracle.hpp"

struct nio_dataset {
  nio::Dataset data;
};

struct nio_model {
  nio::ModelSpec spec;
};

struct nio_params {
  nio::AnyParams params;
};

namespace {

thread_local std::string g_last_error;

nio_status to_status(nio::ErrorCode code) {
  switch (code) {
    case nio::ErrorCode::invalid_argument: return NIO_ERR_INVALID_ARGUMENT;
    case nio::ErrorCode::shape_mismatch: return NIO_ERR_SHAPE;
    case nio::ErrorCode::dtype_mismatch: return NIO_ERR_DTYPE;
    case nio::ErrorCode::not_on_tape: return NIO_ERR_TAPE;
    case nio::ErrorCode::io: return NIO_ERR_IO;
    case nio::ErrorCode::format: return NIO_ERR_FORMAT;
    case nio::ErrorCode::numeric: return NIO_ERR_NUMERIC;
  }
  return NIO_ERR_INTERNAL;
}

template <class F>
nio_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return NIO_OK;
  } catch (const nio::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return NIO_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return NIO_ERR_INTERNAL;
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw nio::Error(nio::ErrorCode::invalid_argument, what);
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void emit(char** out, const std::string& s) {
  if (out != nullptr) *out = dup_string(s);
}

template <class P>
struct scalar_of;
template <class T>
struct scalar_of<nio::ParamSet<T>> {
  using type = T;
};

nio::SubBatchPlan batch_plan(size_t batch_size, size_t sub_batches, double overlap) {
  return nio::split_batch(batch_size, sub_batches, overlap);
}

}  // namespace

extern "C" {

const char* nio_version(void) { return "1.0.0"; }

const char* nio_last_error(void) { return g_last_error.c_str(); }

void nio_string_free(char* s) { std::free(s); }

nio_status nio_dataset_blobs(size_t classes, size_t per_class, size_t dim, double spread, uint64_t seed,
                             nio_dataset** out) {
  return guarded([&] {
    require(out != nullptr, "out must not be NULL");
    *out = new nio_dataset{nio::gen_blobs(classes, per_class, dim, spread, seed)};
  });
}

nio_status nio_dataset_idx(const char* images_path, const char* labels_path, nio_dataset** out) {
  return guarded([&] {
    require(out != nullptr && images_path != nullptr && labels_path != nullptr, "NULL argument");
    *out = new nio_dataset{nio::load_idx(images_path, labels_path)};
  });
}

nio_status nio_dataset_cifar10(const char* const* paths, size_t count, int normalize, nio_dataset** out) {
  return guarded([&] {
    require(out != nullptr && (paths != nullptr || count == 0), "NULL argument");
    std::vector<std::string> files;
    for (size_t i = 0; i < count; ++i) {
      require(paths[i] != nullptr, "NULL path");
      files.emplace_back(paths[i]);
    }
    *out = new nio_dataset{nio::load_cifar10_bin(files, normalize != 0)};
  });
}

size_t nio_dataset_size(const nio_dataset* d) { return d ? d->data.size() : 0; }

size_t nio_dataset_classes(const nio_dataset* d) { return d ? d->data.num_classes : 0; }

nio_status nio_dataset_sample_shape(const nio_dataset* d, size_t* dims, size_t cap, size_t* rank) {
  return guarded([&] {
    require(d != nullptr && rank != nullptr, "NULL argument");
    const auto shape = d->data.sample_shape();
    *rank = shape.size();
    for (size_t i = 0; i < shape.size() && i < cap; ++i) dims[i] = shape[i];
  });
}

void nio_dataset_free(nio_dataset* d) { delete d; }

nio_status nio_model_create(const char* layers, const size_t* input_shape, size_t rank, size_t num_classes,
                            nio_model** out) {
  return guarded([&] {
    require(out != nullptr && layers != nullptr && (input_shape != nullptr || rank == 0), "NULL argument");
    const nio::Shape shape(input_shape, input_shape + rank);
    *out = new nio_model{nio::parse_model_spec(layers, shape, num_classes)};
  });
}

nio_status nio_model_describe(const nio_model* m, char** out) {
  return guarded([&] {
    require(m != nullptr && out != nullptr, "NULL argument");
    std::ostringstream os;
    os << m->spec.name << " input " << nio::shape_str(m->spec.input_shape) << " classes " << m->spec.num_classes
       << " layers " << nio::format_layers(m->spec);
    *out = dup_string(os.str());
  });
}

void nio_model_free(nio_model* m) { delete m; }

nio_status nio_params_init(const nio_model* m, const char* scheme, uint64_t seed, nio_dtype dtype, nio_params** out) {
  return guarded([&] {
    require(m != nullptr && scheme != nullptr && out != nullptr, "NULL argument");
    const auto s = nio::parse_init_scheme(scheme);
    if (dtype == NIO_F32) {
      *out = new nio_params{nio::build_params<float>(m->spec, s, seed)};
    } else if (dtype == NIO_F64) {
      *out = new nio_params{nio::build_params<double>(m->spec, s, seed)};
    } else {
      throw nio::Error(nio::ErrorCode::dtype_mismatch, "unknown dtype");
    }
  });
}

nio_status nio_params_load(const char* path, nio_params** out) {
  return guarded([&] {
    require(path != nullptr && out != nullptr, "NULL argument");
    *out = new nio_params{nio::load_checkpoint(path)};
  });
}

nio_status nio_params_save(const nio_params* p, const char* path) {
  return guarded([&] {
    require(p != nullptr && path != nullptr, "NULL argument");
    std::visit([&](const auto& ps) { nio::save_checkpoint(ps, path); }, p->params);
  });
}

nio_status nio_params_convert(const nio_params* p, nio_dtype dtype, nio_params** out) {
  return guarded([&] {
    require(p != nullptr && out != nullptr, "NULL argument");
    std::visit(
        [&](const auto& ps) {
          auto cast = [&]<class U>(U) {
            nio::ParamSet<U> result;
            for (const auto& e : ps.entries()) {
              std::vector<U> v(e.tensor.values().begin(), e.tensor.values().end());
              result.add(e.name, nio::Tensor<U>(e.tensor.shape(), std::move(v)));
            }
            return result;
          };
          if (dtype == NIO_F32) {
            *out = new nio_params{cast(0.0f)};
          } else {
            *out = new nio_params{cast(0.0)};
          }
        },
        p->params);
  });
}

size_t nio_params_count(const nio_params* p) {
  return p ? std::visit([](const auto& ps) { return ps.size(); }, p->params) : 0;
}

nio_dtype nio_params_dtype(const nio_params* p) {
  return p && std::holds_alternative<nio::ParamSet<double>>(p->params) ? NIO_F64 : NIO_F32;
}

nio_status nio_params_name(const nio_params* p, size_t index, const char** name) {
  return guarded([&] {
    require(p != nullptr && name != nullptr, "NULL argument");
    std::visit(
        [&](const auto& ps) {
          require(index < ps.size(), "parameter index out of range");
          *name = ps[index].name.c_str();
        },
        p->params);
  });
}

void nio_params_free(nio_params* p) { delete p; }

nio_status nio_metrics_json(const nio_model* m, const nio_params* p, const nio_dataset* d, size_t batch_size,
                            size_t sub_batches, double overlap, uint64_t seed, char** json) {
  return guarded([&] {
    require(m && p && d && json, "NULL argument");
    const auto plan = batch_plan(batch_size, sub_batches, overlap);
    nio::BatchIterator it(d->data.size(), batch_size, seed);
    const auto idx = it.next();
    std::visit(
        [&](const auto& ps) {
          using T = typename scalar_of<std::decay_t<decltype(ps)>>::type;
          *json = dup_string(nio::report_to_json(nio::metric_report(m->spec, ps, nio::make_batch<T>(d->data, idx), plan)));
        },
        p->params);
  });
}

void nio_init_config_default(nio_init_config* c) {
  if (c == nullptr) return;
  const nio::NIOConfig d;
  c->tau = d.tau;
  c->gamma = d.gamma;
  c->alpha_lb = d.alpha_lb;
  c->iterations = d.iterations;
  c->batch_size = d.batch_size;
  c->sub_batches = d.sub_batches;
  c->overlap = d.overlap;
  c->seed = d.seed;
  c->finite_difference = 0;
  c->fd_step = d.fd_step;
  c->snapshot_every = d.snapshot_every;
}

double nio_default_gamma(size_t num_classes) {
  try {
    return nio::default_gamma(num_classes);
  } catch (const nio::Error& e) {
    g_last_error = e.what();
    return 0.0;
  }
}

nio_status nio_init_run(const nio_model* m, const nio_params* p, const nio_dataset* d, const nio_init_config* c,
                        nio_params** rectified, char** trace_csv, char** scales_csv) {
  return guarded([&] {
    require(m && p && d && c && rectified, "NULL argument");
    nio::NIOConfig cfg;
    cfg.tau = c->tau;
    cfg.gamma = c->gamma;
    cfg.alpha_lb = c->alpha_lb;
    cfg.iterations = c->iterations;
    cfg.batch_size = c->batch_size;
    cfg.sub_batches = c->sub_batches;
    cfg.overlap = c->overlap;
    cfg.seed = c->seed;
    cfg.gradient_mode = c->finite_difference ? nio::GradientMode::finite_difference : nio::GradientMode::double_backward;
    cfg.fd_step = c->fd_step;
    cfg.snapshot_every = c->snapshot_every;
    std::visit(
        [&](const auto& ps) {
          auto result = nio::nio_run(m->spec, ps, d->data, cfg);
          emit(trace_csv, result.trace.to_csv());
          emit(scales_csv, result.trace.snapshots_csv(ps.names()));
          *rectified = new nio_params{std::move(result.rectified)};
        },
        p->params);
  });
}

void nio_train_config_default(nio_train_config* c) {
  if (c == nullptr) return;
  const nio::TrainConfig d;
  c->epochs = d.epochs;
  c->batch_size = d.batch_size;
  c->lr = d.lr;
  c->momentum = d.momentum;
  c->weight_decay = d.weight_decay;
  c->clip_norm = d.clip_norm;
  c->seed = d.seed;
}

nio_status nio_train(const nio_model* m, const nio_params* p, const nio_dataset* train, const nio_dataset* test,
                     const nio_train_config* c, nio_params** out, char** log_csv) {
  return guarded([&] {
    require(m && p && train && c && out, "NULL argument");
    nio::TrainConfig cfg;
    cfg.epochs = c->epochs;
    cfg.batch_size = c->batch_size;
    cfg.lr = c->lr;
    cfg.momentum = c->momentum;
    cfg.weight_decay = c->weight_decay;
    cfg.clip_norm = c->clip_norm;
    cfg.seed = c->seed;
    std::visit(
        [&](const auto& ps) {
          auto result = nio::train(m->spec, ps, train->data, test ? &test->data : nullptr, cfg);
          std::ostringstream os;
          os.precision(17);
          os << "epoch,loss,train_acc,test_acc\n";
          for (size_t e = 0; e < result.epochs.size(); ++e) {
            const auto& s = result.epochs[e];
            os << e + 1 << ',' << s.loss << ',' << s.train_accuracy << ',';
            if (test) os << s.test_accuracy;
            os << '\n';
          }
          emit(log_csv, os.str());
          *out = new nio_params{std::move(result.params)};
        },
        p->params);
  });
}

nio_status nio_oracle_sweep(size_t instances, uint64_t seed, char** csv, size_t* failures) {
  return guarded([&] {
    require(instances > 0, "instances must be positive");
    const auto rows = nio::oracle::theorem2_sweep(instances, seed);
    size_t bad = 0;
    for (const auto& r : rows) bad += r.holds ? 0 : 1;
    if (failures) *failures = bad;
    emit(csv, nio::oracle::sweep_to_csv(rows));
  });
}

nio_status nio_oracle_theorem3(size_t n, size_t dim, double delta, size_t trials, uint64_t seed,
                               double* violation_rate) {
  return guarded([&] {
    require(violation_rate != nullptr && dim > 0, "invalid argument");
    nio::oracle::GaussianOptimaInstance inst;
    inst.n = n;
    inst.delta = delta;
    inst.theta0.assign(dim, 0.0);
    inst.mean.assign(dim, 0.0);
    inst.mean[0] = 2.0;
    *violation_rate = nio::oracle::theorem3_check(inst, trials, seed).rate;
  });
}

nio_status nio_diagnostics(const nio_model* m, const nio_params* p, const nio_dataset* d, size_t batch_size,
                           size_t sub_batches, double overlap, size_t num_batches, uint64_t seed, char** csv,
                           char** distribution_csv) {
  return guarded([&] {
    require(m && p && d && csv, "NULL argument");
    const auto plan = batch_plan(batch_size, sub_batches, overlap);
    std::visit(
        [&](const auto& ps) {
          const auto rep = nio::diagnostics(m->spec, ps, d->data, plan, num_batches, seed);
          emit(distribution_csv, rep.distribution_csv());
          *csv = dup_string(rep.to_csv());
        },
        p->params);
  });
}

}  // extern "C"
