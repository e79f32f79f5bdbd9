// Copyright 2026 The PAS Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PAS_SEARCH_HPP
#define PAS_SEARCH_HPP

// Path search: sample decay weights with TPE (or uniformly), score each path by
// the one-step transfer rate on a validation model, and spend evaluation
// examples through Hyperband successive halving.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pas/attacks.hpp"
#include "pas/common.hpp"
#include "pas/dataset.hpp"
#include "pas/model.hpp"
#include "pas/reparam.hpp"

namespace pas {

// ---------------------------------------------------------------------------
// Significance of a score difference between two paths evaluated on n examples.

/// 2n(s1 - s2)^2 / ((s1 + s2)(2 - s1 - s2)); chi-square with 1 dof.
inline double chi_square_stat(std::size_t n, double s1, double s2) {
  if (!(s1 >= 0 && s1 <= 1 && s2 >= 0 && s2 <= 1)) throw InvalidArgument("chi_square_stat: scores must be in [0,1]");
  if (s1 == s2) return 0.0;
  const double den = (s1 + s2) * (2.0 - s1 - s2);
  if (den == 0.0) return std::numeric_limits<double>::infinity();
  return 2.0 * static_cast<double>(n) * (s1 - s2) * (s1 - s2) / den;
}

/// Critical value of chi-square(1) at the given confidence level.
inline double chi_square_threshold(double level = 0.95) {
  static const std::map<double, double> table{{0.90, 2.706}, {0.95, 3.841}, {0.99, 6.635}, {0.999, 10.828}};
  auto it = table.find(level);
  if (it == table.end()) throw InvalidArgument("no chi-square threshold for level " + std::to_string(level));
  return it->second;
}

/// Boundary inclusive: stat >= threshold is significant.
inline bool is_significant(double stat, double level = 0.95) { return stat >= chi_square_threshold(level); }

// ---------------------------------------------------------------------------
// One-step transfer score.

/// Per-example 0/1: does the validation model misclassify the one-step example crafted through `path`?
template <Scalar T>
std::vector<std::uint8_t> one_step_outcomes(const Model<T>& surrogate, const PathConfig& path, const Model<T>& validation,
                                            const Tensor<T>& x, std::span<const int> y, double epsilon) {
  const Tensor<T> adv = fgsm_step(surrogate, path, x, y, epsilon);
  const auto pred = argmax_rows(forward(validation, adv).logits);
  std::vector<std::uint8_t> out(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) out[i] = pred[i] != y[i];
  return out;
}

struct EvalOptions {
  std::size_t chunk_size = 16;
  std::size_t workers = 1;
};

/// Fraction of examples whose one-step adversarial (step = epsilon) fools the validation model.
template <Scalar T>
double evaluate_path(const Model<T>& surrogate, const PathConfig& path, const Model<T>& validation, const Tensor<T>& x,
                     std::span<const int> y, double epsilon, EvalOptions opts = {}) {
  if (y.empty() || x.rank() == 0 || x.dim(0) == 0) throw InvalidArgument("evaluate_path: empty example set");
  if (x.dim(0) != y.size()) throw InvalidArgument("evaluate_path: image/label count mismatch");
  validate_path(path, surrogate.sites());
  std::vector<std::uint8_t> hits(y.size());
  detail::for_each_chunk(y.size(), opts.chunk_size, opts.workers, [&](std::size_t, std::size_t b, std::size_t e) {
    const auto o = one_step_outcomes(surrogate, path, validation, x.slice(b, e), y.subspan(b, e - b), epsilon);
    std::copy(o.begin(), o.end(), hits.begin() + static_cast<std::ptrdiff_t>(b));
  });
  return static_cast<double>(std::accumulate(hits.begin(), hits.end(), std::size_t{0})) / static_cast<double>(y.size());
}

// ---------------------------------------------------------------------------
// Tree-structured Parzen estimator over [0,1]^d, one coordinate at a time.

struct Observation {
  std::vector<double> params;
  double score = 0;  // larger is better
};

struct TpeOptions {
  double good_quantile = 0.25;
  std::size_t candidates = 24;
  double bandwidth_floor = 0.05;
  std::size_t startup_trials = 20;
  double prior_weight = 1.0;  // uniform component in both densities; keeps exploring
};

namespace detail {

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// log density of a mixture of Gaussians truncated to [0,1] plus a uniform prior
// component of weight `prior` (relative to 1 per centre).
inline double log_parzen(double x, std::span<const double> centres, double h, double prior) {
  std::vector<double> terms;
  terms.reserve(centres.size() + 1);
  if (prior > 0) terms.push_back(std::log(prior));  // uniform density on [0,1] is 1
  for (double mu : centres) {
    const double z = (x - mu) / h;
    const double mass = std::max(normal_cdf((1.0 - mu) / h) - normal_cdf(-mu / h), 1e-300);
    terms.push_back(-0.5 * z * z - std::log(h * std::sqrt(2.0 * std::numbers::pi) * mass));
  }
  const double mx = *std::max_element(terms.begin(), terms.end());
  double s = 0;
  for (double t : terms) s += std::exp(t - mx);
  return mx + std::log(s / (static_cast<double>(centres.size()) + prior));
}

inline double parzen_bandwidth(std::span<const double> v, double floor) {
  if (v.size() < 2) return std::max(floor, 0.25);
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double var = 0;
  for (double x : v) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / static_cast<double>(v.size() - 1));
  return std::max(floor, 1.06 * sd * std::pow(static_cast<double>(v.size()), -0.2));
}

}  // namespace detail

template <typename Rng>
std::vector<double> uniform_sample(std::size_t dims, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> out(dims);
  for (auto& v : out) v = u(rng);
  return out;
}

/// Next point to evaluate. Uniform until `startup_trials` observations exist.
template <typename Rng>
std::vector<double> tpe_sample(std::span<const Observation> history, std::size_t dims, Rng& rng, const TpeOptions& opt = {}) {
  if (history.size() < std::max<std::size_t>(opt.startup_trials, 2)) return uniform_sample(dims, rng);
  std::vector<std::size_t> order(history.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return history[a].score > history[b].score; });
  const auto n_good = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::ceil(opt.good_quantile * static_cast<double>(history.size()))), 1, history.size() - 1);

  // Each coordinate gets its own good/bad Parzen pair; candidates are whole vectors
  // drawn coordinate-wise from the good densities and ranked by the summed log ratio.
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::vector<double>> good(dims, std::vector<double>(n_good)),
      bad(dims, std::vector<double>(history.size() - n_good));
  std::vector<double> hg(dims), hb(dims);
  for (std::size_t d = 0; d < dims; ++d) {
    for (std::size_t i = 0; i < history.size(); ++i) {
      const double v = history[order[i]].params.at(d);
      (i < n_good ? good[d][i] : bad[d][i - n_good]) = v;
    }
    hg[d] = detail::parzen_bandwidth(good[d], opt.bandwidth_floor);
    hb[d] = detail::parzen_bandwidth(bad[d], opt.bandwidth_floor);
  }
  const double pick_prior = opt.prior_weight / (static_cast<double>(n_good) + opt.prior_weight);
  std::vector<double> out(dims), cand(dims);
  double best_ratio = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < std::max<std::size_t>(opt.candidates, 1); ++c) {
    double ratio = 0;
    for (std::size_t d = 0; d < dims; ++d) {
      double x;
      if (unit(rng) < pick_prior) {
        x = unit(rng);
      } else {
        const double mu = good[d][std::uniform_int_distribution<std::size_t>(0, n_good - 1)(rng)];
        x = mu + hg[d] * nd(rng);
        for (int tries = 0; (x < 0.0 || x > 1.0) && tries < 64; ++tries) x = mu + hg[d] * nd(rng);
        x = std::clamp(x, 0.0, 1.0);
      }
      cand[d] = x;
      ratio += detail::log_parzen(x, good[d], hg[d], opt.prior_weight) -
               detail::log_parzen(x, bad[d], hb[d], opt.prior_weight);
    }
    if (ratio > best_ratio) {
      best_ratio = ratio;
      out = cand;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Hyperband.

struct Rung {
  std::size_t configs = 0;   // how many trials are evaluated at this rung
  std::size_t resource = 0;  // examples per trial
};

struct Bracket {
  std::size_t s = 0;
  std::vector<Rung> rungs;
};

struct HyperbandPlan {
  std::size_t max_resource = 0;
  std::size_t reduction = 0;
  std::size_t min_resource = 0;
  std::size_t s_max = 0;
  std::size_t budget = 0;  // per-bracket budget B = (s_max + 1) * R
  std::vector<Bracket> brackets;  // s = s_max ... 0

  std::size_t total_resource() const {
    std::size_t t = 0;
    for (const auto& b : brackets)
      for (const auto& r : b.rungs) t += r.configs * r.resource;
    return t;
  }
};

/// Standard Hyperband brackets with s_max = floor(log_eta(R / r_min)). Each rung keeps
/// max(1, floor(n / eta)) trials so every bracket finishes at least one trial at R.
inline HyperbandPlan hyperband_plan(std::size_t max_resource, std::size_t reduction, std::size_t min_resource) {
  if (reduction < 2) throw ConfigError("hyperband: reduction factor must be >= 2");
  if (min_resource < 1 || min_resource > max_resource) throw ConfigError("hyperband: need 1 <= min resource <= max resource");
  HyperbandPlan p{max_resource, reduction, min_resource, 0, 0, {}};
  for (std::size_t ratio = max_resource / min_resource; ratio >= reduction; ratio /= reduction) ++p.s_max;
  p.budget = (p.s_max + 1) * max_resource;
  for (std::size_t s = p.s_max + 1; s-- > 0;) {
    std::size_t pow_s = 1;
    for (std::size_t i = 0; i < s; ++i) pow_s *= reduction;
    Bracket b{s, {}};
    std::size_t n = static_cast<std::size_t>(
        std::ceil(static_cast<double>(p.s_max + 1) / static_cast<double>(s + 1) * static_cast<double>(pow_s)));
    std::size_t r_div = pow_s;
    for (std::size_t i = 0; i <= s; ++i) {
      b.rungs.push_back({n, std::max(min_resource, max_resource / r_div)});
      n = std::max<std::size_t>(1, n / reduction);
      r_div /= reduction;
    }
    b.rungs.back().resource = max_resource;
    p.brackets.push_back(std::move(b));
  }
  return p;
}

/// Indices of the `keep` best scores (ties -> lower index), in rank order.
inline std::vector<std::size_t> top_k(std::span<const double> scores, std::size_t keep) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  idx.resize(std::min(keep, idx.size()));
  return idx;
}

// ---------------------------------------------------------------------------
// Search driver.

enum class Sampler { tpe, random };

inline Sampler parse_sampler(const std::string& s) {
  if (s == "tpe") return Sampler::tpe;
  if (s == "random") return Sampler::random;
  throw ConfigError("unknown sampler '" + s + "' (expected tpe or random)");
}

struct HyperbandOptions {
  bool enabled = true;
  std::size_t reduction = 4;
  std::size_t min_resource = 16;
};

struct SearchConfig {
  std::size_t trials = 2000;
  std::size_t eval_n = 256;
  double epsilon = 0.1;
  std::uint64_t seed = 0;
  Sampler sampler = Sampler::tpe;
  HyperbandOptions hyperband;
  TpeOptions tpe;
  double significance_level = 0.95;
  EvalOptions eval;

  void validate() const {
    if (trials < 1) throw ConfigError("search: trials must be >= 1");
    if (eval_n < 1) throw ConfigError("search: eval_n must be >= 1");
    if (hyperband.enabled && (hyperband.min_resource < 1 || hyperband.min_resource > eval_n))
      throw ConfigError("search: need 1 <= min resource <= eval_n");
    if (!(epsilon >= 0)) throw ConfigError("search: epsilon must be >= 0");
  }
};

enum class TrialStatus { completed, pruned };

inline std::string_view to_string(TrialStatus s) { return s == TrialStatus::completed ? "completed" : "pruned"; }

struct Trial {
  std::size_t id = 0;
  PathConfig path;
  std::size_t resource = 0;  // examples the score was computed on
  double score = 0;
  TrialStatus status = TrialStatus::completed;
  std::size_t bracket = 0;
};

/// One successive-halving rung as it was decided.
struct RungRecord {
  std::size_t bracket = 0;
  std::size_t resource = 0;
  std::vector<std::size_t> trials;
  std::vector<double> scores;
  std::vector<bool> promoted;  // all false on the final rung
};

struct SearchResult {
  std::vector<Trial> history;
  std::vector<RungRecord> rungs;
  std::size_t best_trial = 0;
  PathConfig best;
  std::vector<std::size_t> window;  // completed trials not significantly worse than the best

  const Trial& best_record() const { return history.at(best_trial); }
};

inline PathConfig path_from_vector(const std::vector<SiteDescriptor>& sites, std::span<const double> gammas) {
  PathConfig p;
  for (std::size_t i = 0; i < sites.size(); ++i) p.gammas[sites[i].site_id] = gammas[i];
  return p;
}

inline std::vector<double> path_to_vector(const std::vector<SiteDescriptor>& sites, const PathConfig& p) {
  std::vector<double> v;
  for (const auto& s : sites) v.push_back(p.gamma(s.site_id));
  return v;
}

/// Fixed seeded subset of `n` validation examples, shared by every trial.
inline Dataset validation_subset(const Dataset& validation, std::size_t n, std::uint64_t seed) {
  if (n > validation.size())
    throw ConfigError("eval_n " + std::to_string(n) + " exceeds validation split size " + std::to_string(validation.size()));
  std::vector<std::size_t> idx(validation.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed ^ 0x5eed5eedULL);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(n);
  return validation.subset(idx);
}

template <Scalar T>
class SearchRunner {
 public:
  SearchRunner(const Model<T>& surrogate, const Model<T>& validation, const Dataset& examples, SearchConfig cfg)
      : surrogate_(surrogate), validation_(validation), cfg_(std::move(cfg)), rng_(cfg_.seed) {
    cfg_.validate();
    if (examples.size() < cfg_.eval_n)
      throw ConfigError("search: need " + std::to_string(cfg_.eval_n) + " evaluation examples, got " +
                        std::to_string(examples.size()));
    const auto& a = surrogate.spec();
    const auto& b = validation.spec();
    if (a.channels != b.channels || a.height != b.height || a.width != b.width || a.classes != b.classes)
      throw ConfigError("surrogate and validation models disagree on input shape or classes");
    const Dataset head = examples.head(cfg_.eval_n);
    x_ = head.images.template cast<T>();
    y_ = head.labels;
  }

  /// Score of `path` on the first `resource` examples, reusing earlier per-example outcomes.
  double score(std::vector<std::uint8_t>& outcomes, std::size_t& done, const PathConfig& path, std::size_t resource) {
    const std::size_t chunk = cfg_.eval.chunk_size;
    const std::size_t target = std::min(cfg_.eval_n, (resource + chunk - 1) / chunk * chunk);
    outcomes.resize(cfg_.eval_n);
    for (std::size_t b = done; b < target; b += chunk) {
      const std::size_t e = std::min(target, b + chunk);
      const auto o = one_step_outcomes(surrogate_, path, validation_, x_.slice(b, e),
                                       std::span<const int>(y_).subspan(b, e - b), cfg_.epsilon);
      std::copy(o.begin(), o.end(), outcomes.begin() + static_cast<std::ptrdiff_t>(b));
    }
    done = std::max(done, target);
    return static_cast<double>(std::accumulate(outcomes.begin(), outcomes.begin() + static_cast<std::ptrdiff_t>(resource),
                                               std::size_t{0})) /
           static_cast<double>(resource);
  }

  SearchResult run(const std::function<void(const Trial&)>& on_trial = {}) {
    const auto& sites = surrogate_.sites();
    SearchResult result;
    std::vector<Observation> observations;  // latest score of every trial, in trial order
    std::vector<Bracket> schedule;
    if (cfg_.hyperband.enabled) {
      schedule = hyperband_plan(cfg_.eval_n, cfg_.hyperband.reduction, cfg_.hyperband.min_resource).brackets;
    } else {
      schedule.push_back(Bracket{0, {Rung{1, cfg_.eval_n}}});
    }

    for (std::size_t b = 0; result.history.size() < cfg_.trials; b = (b + 1) % schedule.size()) {
      const Bracket& bracket = schedule[b];
      const std::size_t n0 = std::min(bracket.rungs.front().configs, cfg_.trials - result.history.size());
      std::vector<std::size_t> live;
      for (std::size_t i = 0; i < n0; ++i) {
        const auto v = cfg_.sampler == Sampler::tpe ? tpe_sample(observations, sites.size(), rng_, cfg_.tpe)
                                                    : uniform_sample(sites.size(), rng_);
        Trial t;
        t.id = result.history.size();
        t.path = path_from_vector(sites, v);
        t.bracket = bracket.s;
        live.push_back(t.id);
        result.history.push_back(std::move(t));
      }
      std::vector<std::vector<std::uint8_t>> outcomes(live.size());
      std::vector<std::size_t> done(live.size(), 0);
      std::vector<std::size_t> slot(live.size());
      std::iota(slot.begin(), slot.end(), std::size_t{0});
      for (std::size_t r = 0; r < bracket.rungs.size(); ++r) {
        const std::size_t resource = bracket.rungs[r].resource;
        std::vector<double> scores(slot.size());
        detail::for_each_chunk(slot.size(), 1, cfg_.eval.workers, [&](std::size_t, std::size_t i, std::size_t) {
          const std::size_t k = slot[i];
          scores[i] = score(outcomes[k], done[k], result.history[live[k]].path, resource);
        });
        RungRecord record{bracket.s, resource, {}, scores, std::vector<bool>(slot.size(), false)};
        for (std::size_t i = 0; i < slot.size(); ++i) {
          auto& t = result.history[live[slot[i]]];
          t.score = scores[i];
          t.resource = resource;
          record.trials.push_back(t.id);
        }
        if (r + 1 == bracket.rungs.size()) {
          for (auto k : slot) result.history[live[k]].status = TrialStatus::completed;
          result.rungs.push_back(std::move(record));
          break;
        }
        const std::size_t keep = std::max<std::size_t>(1, slot.size() / cfg_.hyperband.reduction);
        const auto winners = top_k(scores, keep);
        std::vector<std::size_t> next;
        std::vector<bool> promoted(slot.size(), false);
        for (auto w : winners) {
          next.push_back(slot[w]);
          promoted[w] = true;
        }
        for (std::size_t i = 0; i < slot.size(); ++i)
          if (!promoted[i]) result.history[live[slot[i]]].status = TrialStatus::pruned;
        record.promoted = promoted;
        result.rungs.push_back(std::move(record));
        std::sort(next.begin(), next.end());
        slot = std::move(next);
      }
      for (auto id : live) {
        const auto& t = result.history[id];
        observations.push_back(Observation{path_to_vector(sites, t.path), t.score});
        if (on_trial) on_trial(t);
      }
    }

    bool found = false;
    for (const auto& t : result.history) {
      if (t.status != TrialStatus::completed || t.resource != cfg_.eval_n) continue;
      if (!found || t.score > result.history[result.best_trial].score) {
        result.best_trial = t.id;
        found = true;
      }
    }
    if (!found) throw Error("search finished without a full-resource trial");
    result.best = result.history[result.best_trial].path;
    const double best_score = result.history[result.best_trial].score;
    for (const auto& t : result.history)
      if (t.status == TrialStatus::completed && t.resource == cfg_.eval_n &&
          !is_significant(chi_square_stat(cfg_.eval_n, best_score, t.score), cfg_.significance_level))
        result.window.push_back(t.id);
    return result;
  }

 private:
  const Model<T>& surrogate_;
  const Model<T>& validation_;
  SearchConfig cfg_;
  std::mt19937_64 rng_;
  Tensor<T> x_;
  std::vector<int> y_;
};

/// Runs the full search. `examples` should already be the fixed evaluation subset.
template <Scalar T>
SearchResult run_search(const Model<T>& surrogate, const Model<T>& validation, const Dataset& examples,
                        const SearchConfig& cfg, const std::function<void(const Trial&)>& on_trial = {}) {
  return SearchRunner<T>(surrogate, validation, examples, cfg).run(on_trial);
}

}  // namespace pas

#endif  // PAS_SEARCH_HPP
