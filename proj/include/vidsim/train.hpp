#pragma once

// Feature standardisation, minibatch Adam training with validation-based
// model selection, and the model artifact file.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "vidsim/dataset.hpp"
#include "vidsim/error.hpp"
#include "vidsim/features.hpp"
#include "vidsim/tcn.hpp"

namespace vidsim {

struct FeatureStats {
  std::vector<double> mean;
  std::vector<double> std;  // zero-variance features get 1

  static FeatureStats identity(std::size_t dim) { return {std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)}; }

  template <class T>
  void normalize(std::span<const double> x, std::span<T> out) const {
    const std::size_t f = mean.size();
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<T>((x[i] - mean[i % f]) / std[i % f]);
  }

  void denormalize(std::span<const double> z, std::span<double> out) const {
    const std::size_t f = mean.size();
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] * std[i % f] + mean[i % f];
  }
};

// Population statistics over every input row of the given samples.
inline FeatureStats compute_feature_stats(const SampleSet& set, std::span<const std::size_t> indices) {
  const std::size_t f = set.dim(), w = set.window();
  FeatureStats st{std::vector<double>(f, 0.0), std::vector<double>(f, 0.0)};
  if (indices.empty()) return FeatureStats::identity(f);
  const double n = static_cast<double>(indices.size() * w);
  for (auto i : indices) {
    const auto x = set[i].input;
    for (std::size_t r = 0; r < w; ++r)
      for (std::size_t c = 0; c < f; ++c) st.mean[c] += x[r * f + c];
  }
  for (auto& m : st.mean) m /= n;
  for (auto i : indices) {
    const auto x = set[i].input;
    for (std::size_t r = 0; r < w; ++r)
      for (std::size_t c = 0; c < f; ++c) {
        const double d = x[r * f + c] - st.mean[c];
        st.std[c] += d * d;
      }
  }
  for (auto& s : st.std) {
    s = std::sqrt(s / n);
    if (!(s > 1e-12)) s = 1.0;
  }
  return st;
}

struct TrainConfig {
  std::size_t iterations = 3000;
  std::size_t batch_size = 128;
  std::size_t eval_interval = 50;
  AdamConfig adam;
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0: hardware concurrency
};

struct TrainLogRow {
  std::size_t iteration = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double wall_time_s = 0.0;
};

// Everything needed to run a trained predictor.
struct Model {
  Architecture arch;
  FeatureConfig features;
  FeatureStats stats;
  std::vector<float> params;
  nlohmann::json training;  // config echo; excludes timings

  std::size_t feature_dim() const { return arch.features; }
};

struct TrainResult {
  Model model;
  std::vector<TrainLogRow> log;
  double initial_val_loss = 0.0;
  double best_val_loss = 0.0;
  std::size_t best_iteration = 0;
};

namespace detail {

// Inputs of the selected samples standardised to float, one window each.
inline std::vector<float> normalized_inputs(const SampleSet& set, std::span<const std::size_t> idx,
                                            const FeatureStats& st) {
  const std::size_t n = set.window() * set.dim();
  std::vector<float> out(idx.size() * n);
  for (std::size_t i = 0; i < idx.size(); ++i)
    st.normalize<float>(set[idx[i]].input, std::span<float>(out.data() + i * n, n));
  return out;
}

// Samples are processed in fixed chunks; chunk results are reduced in chunk
// order so the gradient does not depend on the thread count.
inline constexpr std::size_t kChunk = 8;

}  // namespace detail

// Loss of `params` over the samples in inference mode.
inline double evaluate_loss(const Tcn<float>& net, std::span<const float> params, std::span<const float> inputs,
                            std::span<const std::array<double, 2>> targets) {
  if (targets.empty()) throw Error(ErrorKind::EmptyBatch, "no samples to evaluate");
  const auto prepared = net.prepare(params);
  const std::size_t n = net.input_size();
  typename Tcn<float>::Trace tr;
  std::vector<double> acc;
  double s = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto y = net.forward(prepared, inputs.subspan(i * n, n), tr, Mode::Inference, acc);
    s += std::hypot(y[0] - targets[i][0], y[1] - targets[i][1]);
  }
  return s / static_cast<double>(targets.size());
}

// Gradient of the batch-mean norm loss in training mode. `mask_seeds[i]`
// fixes sample i's dropout masks. Returns the batch loss.
template <class T>
double batch_gradient(const Tcn<T>& net, std::span<const T> params, std::span<const T> inputs,
                      std::span<const std::array<double, 2>> targets, std::span<const std::uint64_t> mask_seeds,
                      std::span<double> grad, Mode mode = Mode::Training, std::size_t threads = 1) {
  const std::size_t batch = targets.size();
  if (batch == 0) throw Error(ErrorKind::EmptyBatch, "empty batch");
  const std::size_t n = net.input_size();
  const auto prepared = net.prepare(params);
  const std::size_t chunks = (batch + detail::kChunk - 1) / detail::kChunk;
  static thread_local std::vector<std::vector<double>> grad_buffers;
  if (grad_buffers.size() < chunks) grad_buffers.resize(chunks);
  auto& chunk_grad = grad_buffers;
  std::vector<double> chunk_loss(chunks, 0.0);

  auto run_chunk = [&](std::size_t ci, typename Tcn<T>::Trace& tr, typename Tcn<T>::Scratch& scratch) {
    auto& g = chunk_grad[ci];
    g.assign(net.param_count(), 0.0);
    const std::size_t lo = ci * detail::kChunk, hi = std::min(batch, lo + detail::kChunk);
    for (std::size_t i = lo; i < hi; ++i) {
      if (mode == Mode::Training) net.draw_masks(tr, mask_seeds[i]);
      const auto y = net.forward(prepared, inputs.subspan(i * n, n), tr, mode, scratch.acc);
      chunk_loss[ci] += std::hypot(y[0] - targets[i][0], y[1] - targets[i][1]);
      net.backward(prepared, tr, norm_loss_grad(y, targets[i], batch), g, scratch);
    }
  };

  const std::size_t nthreads = std::max<std::size_t>(1, std::min(threads, chunks));
  if (nthreads == 1) {
    typename Tcn<T>::Trace tr;
    typename Tcn<T>::Scratch scratch;
    for (std::size_t ci = 0; ci < chunks; ++ci) run_chunk(ci, tr, scratch);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < nthreads; ++t)
      pool.emplace_back([&, t] {
        typename Tcn<T>::Trace tr;
        typename Tcn<T>::Scratch scratch;
        for (std::size_t ci = t; ci < chunks; ci += nthreads) run_chunk(ci, tr, scratch);
      });
    for (auto& th : pool) th.join();
  }

  std::fill(grad.begin(), grad.end(), 0.0);
  double loss = 0.0;
  for (std::size_t ci = 0; ci < chunks; ++ci) {
    for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += chunk_grad[ci][k];
    loss += chunk_loss[ci];
  }
  net.finalize_gradient(params, grad);
  return loss / static_cast<double>(batch);
}

inline std::uint64_t mask_seed(std::uint64_t seed, std::size_t iteration, std::size_t slot) {
  return detail::splitmix64(detail::splitmix64(seed ^ 0xd409ULL) + iteration * 0x100000001b3ULL + slot);
}

inline TrainResult train(const SampleSet& samples, const DatasetSplit& split_idx, const Architecture& arch_in,
                         const FeatureConfig& features, const TrainConfig& cfg,
                         const std::function<void(const TrainLogRow&)>& on_log = {}) {
  if (split_idx.training.empty()) throw Error(ErrorKind::EmptyDataset, "training set is empty");
  if (split_idx.validation.empty()) throw Error(ErrorKind::EmptyDataset, "validation set is empty");
  if (cfg.batch_size == 0 || cfg.eval_interval == 0) throw Error(ErrorKind::InvalidArgument, "batch size and eval interval must be positive");
  Architecture arch = arch_in;
  arch.features = samples.dim();
  arch.window = samples.window();
  const Tcn<float> net(arch);
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

  TrainResult result;
  Model& model = result.model;
  model.arch = arch;
  model.features = features;
  model.stats = compute_feature_stats(samples, split_idx.training);
  model.params = initialize_params<float>(arch, cfg.seed);

  const auto train_x = detail::normalized_inputs(samples, split_idx.training, model.stats);
  const auto val_x = detail::normalized_inputs(samples, split_idx.validation, model.stats);
  std::vector<std::array<double, 2>> train_y, val_y;
  for (auto i : split_idx.training) train_y.push_back({samples[i].target.x, samples[i].target.y});
  for (auto i : split_idx.validation) val_y.push_back({samples[i].target.x, samples[i].target.y});

  const std::size_t n_in = net.input_size();
  const std::size_t ntrain = split_idx.training.size();
  const std::size_t batch = std::min(cfg.batch_size, ntrain);
  const std::size_t threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(ntrain);
  for (std::size_t i = 0; i < ntrain; ++i) order[i] = i;
  std::size_t cursor = ntrain;
  auto next_index = [&]() {
    if (cursor == ntrain) {
      for (std::size_t i = ntrain - 1; i > 0; --i) std::swap(order[i], order[uniform_index(rng, i + 1)]);
      cursor = 0;
    }
    return order[cursor++];
  };

  std::vector<float> bx(batch * n_in);
  std::vector<std::array<double, 2>> by(batch);
  std::vector<std::uint64_t> seeds(batch);
  std::vector<double> grad(net.param_count());
  AdamState<float> adam(net.param_count());

  auto fill_batch = [&](std::size_t iteration) {
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t i = next_index();
      std::copy_n(train_x.begin() + static_cast<std::ptrdiff_t>(i * n_in), n_in, bx.begin() + static_cast<std::ptrdiff_t>(b * n_in));
      by[b] = train_y[i];
      seeds[b] = mask_seed(cfg.seed, iteration, b);
    }
  };

  std::vector<float> best = model.params;
  {
    fill_batch(0);
    TrainLogRow row;
    row.iteration = 0;
    row.train_loss = evaluate_loss(net, model.params, bx, by);
    row.val_loss = evaluate_loss(net, model.params, val_x, val_y);
    row.wall_time_s = elapsed();
    result.initial_val_loss = result.best_val_loss = row.val_loss;
    result.log.push_back(row);
    if (on_log) on_log(row);
  }

  double interval_loss = 0.0;
  std::size_t interval_count = 0;
  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    fill_batch(it);
    interval_loss += batch_gradient<float>(net, model.params, bx, by, seeds, grad, Mode::Training, threads);
    ++interval_count;
    adam_step<float>(model.params, grad, adam, cfg.adam);
    if (it % cfg.eval_interval == 0 || it == cfg.iterations) {
      TrainLogRow row;
      row.iteration = it;
      row.train_loss = interval_loss / static_cast<double>(interval_count);
      row.val_loss = evaluate_loss(net, model.params, val_x, val_y);
      row.wall_time_s = elapsed();
      if (row.val_loss < result.best_val_loss) {
        result.best_val_loss = row.val_loss;
        result.best_iteration = it;
        best = model.params;
      }
      result.log.push_back(row);
      if (on_log) on_log(row);
      interval_loss = 0.0;
      interval_count = 0;
    }
  }
  model.params = std::move(best);
  model.training = {{"iterations", cfg.iterations},
                    {"batch_size", cfg.batch_size},
                    {"eval_interval", cfg.eval_interval},
                    {"learning_rate", cfg.adam.learning_rate},
                    {"beta1", cfg.adam.beta1},
                    {"beta2", cfg.adam.beta2},
                    {"epsilon", cfg.adam.epsilon},
                    {"seed", cfg.seed},
                    {"training_samples", split_idx.training.size()},
                    {"validation_samples", split_idx.validation.size()},
                    {"best_iteration", result.best_iteration},
                    {"best_val_loss", result.best_val_loss},
                    {"initial_val_loss", result.initial_val_loss}};
  return result;
}

inline std::string train_log_csv(const std::vector<TrainLogRow>& log) {
  std::string out = "iteration,train_loss,val_loss,wall_time_s\n";
  for (const auto& r : log)
    out += std::to_string(r.iteration) + "," + format_double(r.train_loss) + "," + format_double(r.val_loss) + "," +
           format_double(r.wall_time_s) + "\n";
  return out;
}

// ---- model artifact -------------------------------------------------------

inline constexpr const char* kModelFormat = "vidsim-model/1";

inline nlohmann::json feature_config_to_json(const FeatureConfig& f) {
  return {{"radius", f.radar.radius},
          {"alpha_deg", f.radar.alpha_deg},
          {"static_velocity", to_string(f.radar.static_velocity)},
          {"beta_deg", f.rgl.beta_deg},
          {"exit_distance", f.rgl.exit_distance},
          {"heading_eps", f.heading_eps}};
}

inline FeatureConfig feature_config_from_json(const nlohmann::json& j) {
  FeatureConfig f;
  f.radar.radius = j.value("radius", f.radar.radius);
  f.radar.alpha_deg = j.value("alpha_deg", f.radar.alpha_deg);
  f.radar.static_velocity = static_velocity_from_string(j.value("static_velocity", std::string("minus_own_velocity")));
  f.rgl.beta_deg = j.value("beta_deg", f.rgl.beta_deg);
  f.rgl.exit_distance = j.value("exit_distance", f.rgl.exit_distance);
  f.heading_eps = j.value("heading_eps", f.heading_eps);
  f.validate();
  return f;
}

inline nlohmann::json model_to_json(const Model& m) {
  const ParamLayout layout(m.arch);
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& t : layout.tensors) {
    std::vector<float> data(m.params.begin() + static_cast<std::ptrdiff_t>(t.offset),
                            m.params.begin() + static_cast<std::ptrdiff_t>(t.offset + t.size()));
    tensors.push_back({{"name", t.name}, {"shape", t.shape}, {"data", data}});
  }
  return {{"format", kModelFormat},
          {"architecture",
           {{"window", m.arch.window},
            {"features", m.arch.features},
            {"kernel", m.arch.kernel},
            {"channels", m.arch.channels},
            {"dilations", m.arch.dilations},
            {"outputs", m.arch.outputs},
            {"dropout", m.arch.dropout}}},
          {"feature_config", feature_config_to_json(m.features)},
          {"normalization", {{"mean", m.stats.mean}, {"std", m.stats.std}}},
          {"training", m.training},
          {"tensors", tensors}};
}

inline Model model_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", std::string{}) != kModelFormat)
      throw Error(ErrorKind::Config, "unsupported model format '" + j.value("format", std::string{}) + "'");
    Model m;
    const auto& a = j.at("architecture");
    m.arch.window = a.at("window").get<std::size_t>();
    m.arch.features = a.at("features").get<std::size_t>();
    m.arch.kernel = a.at("kernel").get<std::size_t>();
    m.arch.channels = a.at("channels").get<std::vector<std::size_t>>();
    m.arch.dilations = a.at("dilations").get<std::vector<std::size_t>>();
    m.arch.outputs = a.at("outputs").get<std::size_t>();
    m.arch.dropout = a.at("dropout").get<double>();
    m.features = feature_config_from_json(j.at("feature_config"));
    if (m.features.dim() != m.arch.features)
      throw Error(ErrorKind::ModelShapeMismatch, "feature config dimension " + std::to_string(m.features.dim()) +
                                                    " differs from network input " + std::to_string(m.arch.features));
    m.stats.mean = j.at("normalization").at("mean").get<std::vector<double>>();
    m.stats.std = j.at("normalization").at("std").get<std::vector<double>>();
    if (m.stats.mean.size() != m.arch.features || m.stats.std.size() != m.arch.features)
      throw Error(ErrorKind::ModelShapeMismatch, "normalization statistics length");
    m.training = j.value("training", nlohmann::json::object());
    const ParamLayout layout(m.arch);
    m.params.assign(layout.total, 0.0f);
    const auto& ts = j.at("tensors");
    if (ts.size() != layout.tensors.size()) throw Error(ErrorKind::ModelShapeMismatch, "tensor count");
    for (std::size_t i = 0; i < ts.size(); ++i) {
      const auto& spec = layout.tensors[i];
      if (ts[i].at("name").get<std::string>() != spec.name ||
          ts[i].at("shape").get<std::vector<std::size_t>>() != spec.shape)
        throw Error(ErrorKind::ModelShapeMismatch, "tensor " + spec.name + " does not match the architecture");
      const auto data = ts[i].at("data").get<std::vector<float>>();
      if (data.size() != spec.size()) throw Error(ErrorKind::ModelShapeMismatch, "tensor " + spec.name + " size");
      std::copy(data.begin(), data.end(), m.params.begin() + static_cast<std::ptrdiff_t>(spec.offset));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Config, std::string("model artifact: ") + e.what());
  }
}

inline void save_model(const Model& m, const std::string& path) { write_text_file(path, model_to_json(m).dump() + "\n"); }
inline Model load_model(const std::string& path) { return model_from_json(read_json_file(path)); }

// Normalises one window and runs inference.
class Predictor {
 public:
  explicit Predictor(const Model& m) : model_(m), net_(m.arch), prepared_(net_.prepare(model_.params)) {}

  Vec2 operator()(std::span<const double> window) const {
    std::vector<float> x(window.size());
    model_.stats.normalize<float>(window, x);
    const auto y = net_.predict(prepared_, x);
    return {y[0], y[1]};
  }

  const Model& model() const { return model_; }

 private:
  Model model_;
  Tcn<float> net_;
  typename Tcn<float>::Prepared prepared_;
};

}  // namespace vidsim
