#pragma once

// Activation-scaling search: seeded log-uniform sampling of
// (omega0_first, omega0_hidden) followed by successive halving over
// increasing epoch budgets.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "pcinr/config.hpp"
#include "pcinr/error.hpp"
#include "pcinr/metrics.hpp"
#include "pcinr/numerics.hpp"
#include "pcinr/training.hpp"

namespace pcinr {

struct SweepCandidate {
  std::size_t index = 0;
  double omega0_first = 0;
  double omega0_hidden = 0;
  std::size_t epochs = 0;  // budget reached so far
  std::size_t rung = 0;    // index of the last rung evaluated
  double score = std::numeric_limits<double>::infinity();
  bool survived = true;
};

/// Scores candidate `c` after it has been trained to `epochs` total epochs.
/// Called with non-decreasing `epochs` for each candidate.
class SweepObjective {
 public:
  virtual ~SweepObjective() = default;
  virtual double evaluate(const SweepCandidate& c, std::size_t epochs) = 0;
};

struct SweepResult {
  std::vector<SweepCandidate> candidates;  // in sampling order
  std::size_t best = 0;                    // index into candidates
  const SweepCandidate& winner() const { return candidates[best]; }
};

inline double log_uniform(Rng& rng, double lo, double hi) {
  return std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * rng.next_double());
}

inline std::vector<SweepCandidate> sample_candidates(const SweepSpace& space, std::uint64_t seed) {
  space.validate();
  Rng rng(seed);
  std::vector<SweepCandidate> out(space.candidate_count);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].index = i;
    out[i].omega0_first = log_uniform(rng, space.omega0_first_lo, space.omega0_first_hi);
    out[i].omega0_hidden = log_uniform(rng, space.omega0_hidden_lo, space.omega0_hidden_hi);
  }
  return out;
}

/// Runs every rung; after each rung except the last, keeps the best
/// ceil(n * keep_fraction) survivors (ties broken by sampling order).
inline SweepResult run_sweep(const SweepSpace& space, std::uint64_t seed, SweepObjective& objective) {
  SweepResult res;
  res.candidates = sample_candidates(space, seed);
  std::vector<std::size_t> alive(res.candidates.size());
  std::iota(alive.begin(), alive.end(), 0);
  for (std::size_t r = 0; r < space.rung_epochs.size(); ++r) {
    const std::size_t epochs = space.rung_epochs[r];
    for (std::size_t i : alive) {
      auto& c = res.candidates[i];
      const double s = objective.evaluate(c, epochs);
      c.score = std::isfinite(s) ? s : std::numeric_limits<double>::infinity();
      c.epochs = epochs;
      c.rung = r;
    }
    std::stable_sort(alive.begin(), alive.end(),
                     [&](std::size_t a, std::size_t b) { return res.candidates[a].score < res.candidates[b].score; });
    if (r + 1 < space.rung_epochs.size()) {
      const auto keep = static_cast<std::size_t>(
          std::ceil(static_cast<double>(alive.size()) * space.keep_fraction - 1e-12));
      for (std::size_t k = std::max<std::size_t>(keep, 1); k < alive.size(); ++k) {
        res.candidates[alive[k]].survived = false;
      }
      alive.resize(std::max<std::size_t>(keep, 1));
    }
  }
  res.best = alive.front();
  return res;
}

/// Trains one state per candidate (same seed, omega values overridden) and
/// scores it by mean time-domain MSE of its dataset reconstructions.
template <class T>
class TrainingObjective final : public SweepObjective {
 public:
  TrainingObjective(TrainConfig base, const Dataset& data) : base_(std::move(base)), data_(data) {
    require(base_.is_pcinr(), "sweep: activation scaling applies to the pcinr family only");
  }

  double evaluate(const SweepCandidate& c, std::size_t epochs) override {
    if (states_.size() <= c.index) states_.resize(c.index + 1);
    auto& st = states_[c.index];
    if (!st) {
      TrainConfig cfg = base_;
      cfg.pcinr.omega0_first = c.omega0_first;
      cfg.pcinr.omega0_hidden = c.omega0_hidden;
      st = std::make_unique<TrainState<T>>(init_train_state<T>(cfg, data_.items.size(), data_.hash));
    }
    try {
      while (st->epoch < epochs) train_epoch(*st, std::span<const Waveform>(data_.items));
    } catch (const NumericError&) {
      return std::numeric_limits<double>::infinity();
    }
    double total = 0;
    for (std::size_t i = 0; i < data_.items.size(); ++i) {
      const auto& ref = data_.items[i].samples;
      const auto est = synthesize_item(*st, i, ref.size());
      total += mse(std::span<const float>(ref), std::span<const T>(est));
    }
    return total / static_cast<double>(data_.items.size());
  }

  const TrainState<T>* state(std::size_t index) const {
    return index < states_.size() ? states_[index].get() : nullptr;
  }

 private:
  TrainConfig base_;
  const Dataset& data_;
  std::vector<std::unique_ptr<TrainState<T>>> states_;
};

inline std::string leaderboard_csv(const SweepResult& res) {
  std::vector<std::size_t> order(res.candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ca = res.candidates[a];
    const auto& cb = res.candidates[b];
    if (ca.epochs != cb.epochs) return ca.epochs > cb.epochs;
    return ca.score < cb.score;
  });
  std::ostringstream os;
  os << "# search: seeded log-uniform random sampling with successive halving "
        "(stands in for Hyperband-guided Bayesian optimization)\n";
  os << "rank,candidate,omega0_first,omega0_hidden,epochs,mse\n";
  char buf[160];
  for (std::size_t r = 0; r < order.size(); ++r) {
    const auto& c = res.candidates[order[r]];
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.9g,%.9g,%zu,%.9g\n", r + 1, c.index, c.omega0_first, c.omega0_hidden,
                  c.epochs, c.score);
    os << buf;
  }
  return os.str();
}

}  // namespace pcinr
