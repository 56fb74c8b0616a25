#pragma once

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include "prism/data/record.hpp"
#include "prism/eval/metrics.hpp"
#include "prism/model/batch.hpp"
#include "prism/model/prism_model.hpp"

namespace prism::eval {

/// Which forward produces a model's reported prediction.
enum class PredictPath {
  automatic,       // interventional when the model has a confounder encoder, else standard
  standard,        // head(body(project(X) + g_theta(S)))
  interventional,  // backdoor-adjusted prediction with the encoder's weights
};

inline const char* path_name(PredictPath p) {
  switch (p) {
    case PredictPath::automatic: return "auto";
    case PredictPath::standard: return "standard";
    case PredictPath::interventional: return "interventional";
  }
  return "?";
}

inline PredictPath parse_path(const std::string& s) {
  if (s == "auto") return PredictPath::automatic;
  if (s == "standard") return PredictPath::standard;
  if (s == "interventional") return PredictPath::interventional;
  throw ContractViolation("unknown prediction path '" + s + "' (auto, standard, interventional)");
}

/// Evaluation thread cap from PRISM_THREADS; 1 when unset or invalid.
inline unsigned eval_threads() {
  const char* v = std::getenv("PRISM_THREADS");
  if (v == nullptr) return 1;
  const long n = std::strtol(v, nullptr, 10);
  return n >= 1 ? static_cast<unsigned>(std::min<long>(n, 256)) : 1u;
}

inline constexpr std::size_t kEvalChunk = 32;

/// Predictions for every record, in record order. Records are processed in
/// fixed chunks of kEvalChunk genes, so the result does not depend on the
/// number of threads.
template <typename T>
std::vector<double> predict_records(model::PrismModel<T>& m, const std::vector<data::GeneRecord>& records,
                                    PredictPath path = PredictPath::automatic, unsigned threads = eval_threads()) {
  PRISM_REQUIRE(!records.empty(), "evaluate: empty dataset");
  [[maybe_unused]] bool interventional = false;
#ifndef PRISM_NO_INTERVENTION
  interventional = path == PredictPath::interventional ||
                   (path == PredictPath::automatic && m.has_confounder_encoder());
#else
  PRISM_REQUIRE(path != PredictPath::interventional, "evaluate: built without the interventional path");
#endif
  std::vector<double> out(records.size());
  const std::size_t chunks = (records.size() + kEvalChunk - 1) / kEvalChunk;
  auto run = [&](std::size_t c) {
    const std::size_t lo = c * kEvalChunk;
    const std::size_t hi = std::min(records.size(), lo + kEvalChunk);
    std::vector<std::size_t> idx(hi - lo);
    for (std::size_t i = lo; i < hi; ++i) idx[i - lo] = i;
    auto b = model::make_batch<T>(records, idx);
    Matrix<T> y;
#ifndef PRISM_NO_INTERVENTION
    y = interventional ? m.predict_interventional_values(b) : m.predict_values(b);
#else
    y = m.predict_values(b);
#endif
    for (std::size_t i = lo; i < hi; ++i) out[i] = static_cast<double>(y(static_cast<Eigen::Index>(i - lo), 0));
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(chunks)));
  if (threads == 1) {
    for (std::size_t c = 0; c < chunks; ++c) run(c);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (unsigned w = 0; w < threads; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t c = w; c < chunks; c += threads) run(c);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

inline std::vector<double> targets_of(const std::vector<data::GeneRecord>& records) {
  std::vector<double> y;
  y.reserve(records.size());
  for (const auto& r : records) y.push_back(r.y);
  return y;
}

template <typename T>
MetricTriple evaluate(model::PrismModel<T>& m, const std::vector<data::GeneRecord>& records,
                      PredictPath path = PredictPath::automatic) {
  const auto pred = predict_records(m, records, path);
  const auto y = targets_of(records);
  return metrics(pred, y);
}

}  // namespace prism::eval
