#include "wtpgd/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>

namespace wtpgd {

std::size_t worker_count() {
  if (const char* env = std::getenv("WTPGD_WORKERS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    throw Error(std::string("WTPGD_WORKERS must be a positive integer, got '") + env + "'");
  }
  return 1;
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

bool Evaluation::all_contained() const {
  return std::all_of(records.begin(), records.end(), [](const ImageRecord& r) { return r.contained; });
}

namespace {

template <typename CleanFn>
Evaluation evaluate_with(const Shape& shape, const Dataset& data, const ThreatModel& tm, const AttackFn& attack,
                         const Rng& rng, std::size_t workers, CleanFn&& clean_predict) {
  if (data.size() == 0) throw Error("evaluation set is empty");
  Evaluation ev;
  ev.records.resize(data.size());
  parallel_for(data.size(), workers, [&](std::size_t i) {
    const Tensor x = data.input(i, shape);
    const Rng point_rng = rng.derive(i);
    ImageRecord& r = ev.records[i];
    r.index = i;
    r.label = data.labels[i];
    r.clean_prediction = clean_predict(x, vote_stream(point_rng));
    const AttackResult res = attack(x, r.label, point_rng);
    r.adversarial_prediction = res.predicted;
    r.success = res.success;
    r.queries = res.queries;
    r.linf_distance = linf_distance(res.adversarial, x);
    r.l2_distance = l2_distance(res.adversarial, x);
    const double dist = tm.norm == Norm::Linf ? r.linf_distance : r.l2_distance;
    r.contained = dist <= tm.epsilon + 1e-9 && in_unit_box(res.adversarial);
  });
  std::size_t clean = 0, robust = 0;
  for (const auto& r : ev.records) {
    clean += r.clean_prediction == r.label;
    robust += r.adversarial_prediction == r.label;
    ev.total_queries += r.queries;
  }
  const double n = static_cast<double>(data.size());
  ev.clean_accuracy = 100.0 * static_cast<double>(clean) / n;
  ev.robust_accuracy = 100.0 * static_cast<double>(robust) / n;
  return ev;
}

}  // namespace

Evaluation evaluate_attack(const Model& model, const Dataset& data, const ThreatModel& tm, const AttackFn& attack,
                           std::size_t votes, const Rng& rng, std::size_t workers) {
  return evaluate_with(model.input_shape(), data, tm, attack, rng, workers, [&](const Tensor& x, const Rng& r) {
    return majority_vote_predict(model, x, votes, r);
  });
}

Evaluation evaluate_attack(const PosteriorOracle& oracle, const Shape& input_shape, const Dataset& data,
                           const ThreatModel& tm, const AttackFn& attack, std::size_t votes, const Rng& rng,
                           std::size_t workers) {
  return evaluate_with(input_shape, data, tm, attack, rng, workers, [&](const Tensor& x, const Rng& r) {
    return majority_vote_predict(oracle, x, votes, r);
  });
}

}  // namespace wtpgd
