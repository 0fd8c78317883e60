#pragma once

// Multi-output losses with declared self-bounding-Lipschitz parameters.
//
// A loss L is (lambda, theta)-self-bounding Lipschitz when for all u, v, y
//
//   |L(u,y) - L(v,y)| <= lambda * max{L(u,y), L(v,y)}^theta * ||u - v||_inf.
//
// Every loss here carries a declared (lambda, theta, B) triple, and check_sbl()
// searches for counterexamples to a claimed pair.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mobound/detail/parallel.hpp"
#include "mobound/detail/random.hpp"
#include "mobound/errors.hpp"

namespace mobound {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct SblParams {
  double lambda = 1.0;
  double theta = 0.0;
  double bound = kInf;  // B, upper end of the loss range

  void validate() const {
    if (!(lambda > 0.0)) throw DomainError("SBL lambda must be positive");
    if (!(theta >= 0.0 && theta <= 1.0)) throw DomainError("SBL theta must lie in [0, 1]");
    if (!(bound > 0.0)) throw DomainError("SBL range bound must be positive");
  }
};

// ---------------------------------------------------------------------------
// Labels

/// Zero-based class index (class c in 1..q is stored as c - 1).
struct ClassIndex {
  int index = 0;
};
/// Binary indicator vector for multilabel targets.
struct SparseBinary {
  std::vector<std::uint8_t> bits;
};
struct RealVector {
  std::vector<double> values;
};
/// Scalar +-1 label for the single-output case.
struct BinarySign {
  int sign = 1;
};

using Label = std::variant<ClassIndex, SparseBinary, RealVector, BinarySign>;

// ---------------------------------------------------------------------------
// Loss kinds

struct SmoothMargin {
  double rho = 1.0;
};
struct MultinomialLogistic {};
struct PickAllLabels {
  int k = 1;
};
struct SupNorm {
  double kappa = 1.0;
  double gamma = 2.0;
};
struct BoundedExponential {};
struct MinimaxPower {
  double lambda = 1.0;
  double theta = 0.5;
};
struct ZeroOne {};
struct HardMargin {
  double rho = 1.0;
};

class LossKind;

/// min{inner(u, y), clip_bound}
struct Clipped {
  std::shared_ptr<const LossKind> inner;
  double clip_bound = 1.0;
};

using LossVariant = std::variant<SmoothMargin, MultinomialLogistic, PickAllLabels, SupNorm,
                                 BoundedExponential, MinimaxPower, ZeroOne, HardMargin, Clipped>;

/// Immutable loss description; cheap to copy and safe to share across threads.
class LossKind {
 public:
  LossKind() : kind_(MultinomialLogistic{}) {}
  template <typename Kind>
    requires std::is_constructible_v<LossVariant, Kind>
  LossKind(Kind kind) : kind_(std::move(kind)) {  // NOLINT(google-explicit-constructor)
    validate();
  }

  const LossVariant& kind() const { return kind_; }

  template <typename Kind>
  bool is() const {
    return std::holds_alternative<Kind>(kind_);
  }

 private:
  void validate() const;

  LossVariant kind_;
};

inline LossKind clip(LossKind inner, double bound) {
  return Clipped{std::make_shared<const LossKind>(std::move(inner)), bound};
}

inline void LossKind::validate() const {
  std::visit(
      [](const auto& k) {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, SmoothMargin> || std::is_same_v<K, HardMargin>) {
          if (!(k.rho > 0.0)) throw DomainError("margin rho must be positive");
        } else if constexpr (std::is_same_v<K, PickAllLabels>) {
          if (k.k < 1) throw DomainError("pick_all_labels k must be >= 1");
        } else if constexpr (std::is_same_v<K, SupNorm>) {
          if (!(k.kappa >= 1.0 && k.kappa <= 2.0)) throw DomainError("sup_norm kappa must lie in [1, 2]");
          if (!(k.gamma >= 1.0 && k.gamma <= 2.0)) throw DomainError("sup_norm gamma must lie in [1, 2]");
        } else if constexpr (std::is_same_v<K, MinimaxPower>) {
          if (!(k.lambda > 0.0)) throw DomainError("minimax_power lambda must be positive");
          if (!(k.theta >= 0.0 && k.theta <= 0.5)) throw DomainError("minimax_power theta must lie in [0, 1/2]");
        } else if constexpr (std::is_same_v<K, Clipped>) {
          if (!k.inner) throw DomainError("clip requires an inner loss");
          if (!(k.clip_bound > 0.0) || !std::isfinite(k.clip_bound))
            throw DomainError("clip bound must be positive and finite");
        }
      },
      kind_);
}

namespace detail {

inline const char* label_name(const Label& y) {
  switch (y.index()) {
    case 0: return "class index";
    case 1: return "sparse binary";
    case 2: return "real vector";
    default: return "binary sign";
  }
}

inline int checked_class(std::span<const double> u, const Label& y) {
  const auto* c = std::get_if<ClassIndex>(&y);
  if (!c) throw DataError(std::string("loss expects a class-index label, got ") + label_name(y));
  if (u.size() < 2) throw DataError("class-index losses need q >= 2");
  if (c->index < 0 || static_cast<std::size_t>(c->index) >= u.size())
    throw DataError("class index out of range");
  return c->index;
}

inline const std::vector<double>& checked_real(std::span<const double> u, const Label& y) {
  const auto* r = std::get_if<RealVector>(&y);
  if (!r) throw DataError(std::string("loss expects a real-vector label, got ") + label_name(y));
  if (r->values.size() != u.size()) throw DataError("label length does not match score length");
  return r->values;
}

inline int checked_sign(std::span<const double> u, const Label& y) {
  const auto* s = std::get_if<BinarySign>(&y);
  if (!s) throw DataError(std::string("loss expects a +-1 label, got ") + label_name(y));
  if (u.size() != 1) throw DataError("bounded exponential loss is scalar (q = 1)");
  if (s->sign != 1 && s->sign != -1) throw DataError("binary label must be +1 or -1");
  return s->sign;
}

inline const std::vector<std::uint8_t>& checked_bits(std::span<const double> u, const Label& y, int k) {
  const auto* b = std::get_if<SparseBinary>(&y);
  if (!b) throw DataError(std::string("pick_all_labels expects a sparse binary label, got ") + label_name(y));
  if (b->bits.size() != u.size()) throw DataError("label length does not match score length");
  int ones = 0;
  for (auto bit : b->bits) ones += bit ? 1 : 0;
  if (ones > k) throw DataError("label has more than k positive entries");
  return b->bits;
}

/// log(sum_j exp(u_j - u_y)) with max-shift; log1p keeps precision near zero.
inline double logistic_term(std::span<const double> u, std::size_t y) {
  double shift = 0.0;
  for (double v : u) shift = std::max(shift, v - u[y]);
  if (shift == 0.0) {
    double rest = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j)
      if (j != y) rest += std::exp(u[j] - u[y]);
    return std::log1p(rest);
  }
  double sum = 0.0;
  for (double v : u) sum += std::exp(v - u[y] - shift);
  return shift + std::log(sum);
}

/// Softmax probabilities with max-shift.
inline std::vector<double> softmax(std::span<const double> u) {
  const double top = *std::max_element(u.begin(), u.end());
  std::vector<double> p(u.size());
  double sum = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) sum += (p[j] = std::exp(u[j] - top));
  for (double& v : p) v /= sum;
  return p;
}

/// Smallest index attaining max_{j != y} u_j.
inline std::size_t best_competitor(std::span<const double> u, std::size_t y) {
  std::size_t best = (y == 0) ? 1 : 0;
  for (std::size_t j = 0; j < u.size(); ++j)
    if (j != y && u[j] > u[best]) best = j;
  return best;
}

/// (||u - y||_inf, smallest index attaining it, sign of that coordinate).
struct SupDistance {
  double value = 0.0;
  std::size_t index = 0;
  double sign = 0.0;
};

inline SupDistance sup_distance(std::span<const double> u, const std::vector<double>& y) {
  SupDistance d;
  for (std::size_t j = 0; j < u.size(); ++j) {
    const double diff = u[j] - y[j];
    if (std::abs(diff) > d.value) {
      d.value = std::abs(diff);
      d.index = j;
      d.sign = diff > 0 ? 1.0 : -1.0;
    }
  }
  return d;
}

}  // namespace detail

/// m(u, y) = u_y - max_{j != y} u_j.
inline double margin(std::span<const double> u, ClassIndex y) {
  if (u.size() < 2) throw DataError("margin needs q >= 2");
  if (y.index < 0 || static_cast<std::size_t>(y.index) >= u.size()) throw DataError("class index out of range");
  const auto c = static_cast<std::size_t>(y.index);
  return u[c] - u[detail::best_competitor(u, c)];
}

inline double eval(const LossKind& loss, std::span<const double> u, const Label& y) {
  return std::visit(
      [&](const auto& k) -> double {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, SmoothMargin>) {
          const int c = detail::checked_class(u, y);
          const double m = margin(u, ClassIndex{c});
          if (m <= 0.0) return 1.0;
          if (m >= k.rho) return 0.0;
          const double t = m / k.rho;
          return std::clamp(2.0 * t * t * t - 3.0 * t * t + 1.0, 0.0, 1.0);
        } else if constexpr (std::is_same_v<K, MultinomialLogistic>) {
          return detail::logistic_term(u, static_cast<std::size_t>(detail::checked_class(u, y)));
        } else if constexpr (std::is_same_v<K, PickAllLabels>) {
          const auto& bits = detail::checked_bits(u, y, k.k);
          double total = 0.0;
          for (std::size_t l = 0; l < bits.size(); ++l)
            if (bits[l]) total += detail::logistic_term(u, l);
          return total;
        } else if constexpr (std::is_same_v<K, SupNorm>) {
          const auto& target = detail::checked_real(u, y);
          return k.kappa * std::pow(detail::sup_distance(u, target).value, k.gamma);
        } else if constexpr (std::is_same_v<K, BoundedExponential>) {
          const int s = detail::checked_sign(u, y);
          return std::min(1.0, std::exp(-u[0] * s));
        } else if constexpr (std::is_same_v<K, MinimaxPower>) {
          const auto& target = detail::checked_real(u, y);
          const double dist = detail::sup_distance(u, target).value;
          return std::min(std::pow(k.lambda * dist, 1.0 / (1.0 - k.theta)) / 32.0, 1.0);
        } else if constexpr (std::is_same_v<K, ZeroOne>) {
          const int c = detail::checked_class(u, y);
          return margin(u, ClassIndex{c}) <= 0.0 ? 1.0 : 0.0;
        } else if constexpr (std::is_same_v<K, HardMargin>) {
          const int c = detail::checked_class(u, y);
          return margin(u, ClassIndex{c}) <= k.rho ? 1.0 : 0.0;
        } else {
          return std::min(eval(*k.inner, u, y), k.clip_bound);
        }
      },
      loss.kind());
}

/// True when grad() is defined for the loss (everything except the 0-1 and hard margin losses).
inline bool is_differentiable(const LossKind& loss) {
  if (loss.is<ZeroOne>() || loss.is<HardMargin>()) return false;
  if (const auto* c = std::get_if<Clipped>(&loss.kind())) return is_differentiable(*c->inner);
  return true;
}

/// Gradient in u. At ties and kinks a fixed subgradient is returned: the
/// smallest-index maximiser for margins and sup norms, zero at a clip boundary.
inline std::vector<double> grad(const LossKind& loss, std::span<const double> u, const Label& y) {
  std::vector<double> g(u.size(), 0.0);
  std::visit(
      [&](const auto& k) {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, SmoothMargin>) {
          const auto c = static_cast<std::size_t>(detail::checked_class(u, y));
          const std::size_t rival = detail::best_competitor(u, c);
          const double m = u[c] - u[rival];
          if (m <= 0.0 || m >= k.rho) return;
          const double t = m / k.rho;
          const double slope = (6.0 * t * t - 6.0 * t) / k.rho;
          g[c] += slope;
          g[rival] -= slope;
        } else if constexpr (std::is_same_v<K, MultinomialLogistic>) {
          const auto c = static_cast<std::size_t>(detail::checked_class(u, y));
          g = detail::softmax(u);
          double rest = 0.0;
          for (std::size_t j = 0; j < g.size(); ++j)
            if (j != c) rest += g[j];
          g[c] = -rest;
        } else if constexpr (std::is_same_v<K, PickAllLabels>) {
          const auto& bits = detail::checked_bits(u, y, k.k);
          const auto p = detail::softmax(u);
          double count = 0.0;
          for (auto b : bits) count += b ? 1.0 : 0.0;
          for (std::size_t j = 0; j < g.size(); ++j) g[j] = count * p[j] - (bits[j] ? 1.0 : 0.0);
        } else if constexpr (std::is_same_v<K, SupNorm>) {
          const auto d = detail::sup_distance(u, detail::checked_real(u, y));
          if (d.value == 0.0) return;
          g[d.index] = k.kappa * k.gamma * std::pow(d.value, k.gamma - 1.0) * d.sign;
        } else if constexpr (std::is_same_v<K, BoundedExponential>) {
          const int s = detail::checked_sign(u, y);
          if (u[0] * s > 0.0) g[0] = -s * std::exp(-u[0] * s);
        } else if constexpr (std::is_same_v<K, MinimaxPower>) {
          const auto d = detail::sup_distance(u, detail::checked_real(u, y));
          const double power = 1.0 / (1.0 - k.theta);
          if (d.value == 0.0 || std::pow(k.lambda * d.value, power) / 32.0 >= 1.0) return;
          g[d.index] = std::pow(k.lambda, power) * power * std::pow(d.value, power - 1.0) / 32.0 * d.sign;
        } else if constexpr (std::is_same_v<K, ZeroOne> || std::is_same_v<K, HardMargin>) {
          throw DomainError("margin-threshold losses are not differentiable");
        } else {
          if (eval(*k.inner, u, y) < k.clip_bound) g = grad(*k.inner, u, y);
        }
      },
      loss.kind());
  return g;
}

/// The (lambda, theta) pair proved for each loss, with its range bound B.
inline SblParams declared_params(const LossKind& loss) {
  return std::visit(
      [](const auto& k) -> SblParams {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, SmoothMargin>) {
          return {4.0 * std::sqrt(6.0) / k.rho, 0.5, 1.0};
        } else if constexpr (std::is_same_v<K, MultinomialLogistic>) {
          return {2.0, 0.5, kInf};
        } else if constexpr (std::is_same_v<K, PickAllLabels>) {
          return {2.0 * std::sqrt(static_cast<double>(k.k)), 0.5, kInf};
        } else if constexpr (std::is_same_v<K, SupNorm>) {
          const double theta = (k.gamma - 1.0) / k.gamma;
          return {std::pow(8.0 * k.kappa, 1.0 - theta), theta, kInf};
        } else if constexpr (std::is_same_v<K, BoundedExponential>) {
          // Holds with lambda = 1 for every theta in [0, 1]; theta = 1 is the strongest claim.
          return {1.0, 1.0, 1.0};
        } else if constexpr (std::is_same_v<K, MinimaxPower>) {
          return {k.lambda, k.theta, 1.0};
        } else if constexpr (std::is_same_v<K, ZeroOne> || std::is_same_v<K, HardMargin>) {
          return {kInf, 0.0, 1.0};  // discontinuous: no finite lambda exists
        } else {
          SblParams inner = declared_params(*k.inner);
          inner.bound = std::min(inner.bound, k.clip_bound);
          return inner;
        }
      },
      loss.kind());
}

/// Trade exponent for constant on a bounded loss: (lambda * B^(theta - theta_new), theta_new, B).
inline SblParams relax_theta(const SblParams& params, double theta_new) {
  if (!std::isfinite(params.bound)) throw DomainError("relax_theta requires a finite range bound");
  if (!(theta_new >= 0.0 && theta_new <= params.theta))
    throw DomainError("relax_theta needs 0 <= theta_new <= theta");
  return {params.lambda * std::pow(params.bound, params.theta - theta_new), theta_new, params.bound};
}

// ---------------------------------------------------------------------------
// Falsification harness

struct SamplerConfig {
  double box = 5.0;  // u, v uniform in [-2 box, 2 box]^q
  std::vector<double> pair_scales{1e-3, 1e-1, 1.0};
  double tolerance = 1e-9;
  int refine_pairs = 16;  // best pairs re-examined by bisection at the end
  int refine_steps = 60;
};

struct SblTriple {
  std::vector<double> u;
  std::vector<double> v;
  Label y;
};

struct SblReport {
  long trials = 0;
  double max_violation = -kInf;
  std::optional<SblTriple> worst_case;
  bool passed = true;
  /// Largest observed |L(u)-L(v)| / (max{L}^theta ||u-v||_inf): an empirical lower
  /// bound on the tightest lambda for this theta.
  double max_ratio = 0.0;
};

namespace detail {

enum class LabelShape { Class, Sparse, Real, Sign };

inline LabelShape label_shape(const LossKind& loss, int* sparsity) {
  return std::visit(
      [&](const auto& k) -> LabelShape {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, PickAllLabels>) {
          *sparsity = k.k;
          return LabelShape::Sparse;
        } else if constexpr (std::is_same_v<K, SupNorm> || std::is_same_v<K, MinimaxPower>) {
          return LabelShape::Real;
        } else if constexpr (std::is_same_v<K, BoundedExponential>) {
          return LabelShape::Sign;
        } else if constexpr (std::is_same_v<K, Clipped>) {
          return label_shape(*k.inner, sparsity);
        } else {
          return LabelShape::Class;
        }
      },
      loss.kind());
}

inline Label sample_label(LabelShape shape, int q, int sparsity, double half_width, std::mt19937_64& rng) {
  switch (shape) {
    case LabelShape::Class:
      return ClassIndex{static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(q)))};
    case LabelShape::Sparse: {
      const int cap = std::min(sparsity, q);
      const int ones = 1 + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(cap)));
      std::vector<int> order(static_cast<std::size_t>(q));
      for (int j = 0; j < q; ++j) order[static_cast<std::size_t>(j)] = j;
      SparseBinary b{std::vector<std::uint8_t>(static_cast<std::size_t>(q), 0)};
      for (int i = 0; i < ones; ++i) {  // partial Fisher-Yates
        const auto pick = i + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(q - i)));
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(pick)]);
        b.bits[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 1;
      }
      return b;
    }
    case LabelShape::Real: {
      RealVector r{std::vector<double>(static_cast<std::size_t>(q))};
      for (double& v : r.values) v = uniform(rng, -half_width, half_width);
      return r;
    }
    case LabelShape::Sign:
    default:
      return BinarySign{rademacher(rng)};
  }
}

inline double sup_norm_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) m = std::max(m, std::abs(a[j] - b[j]));
  return m;
}

struct PairOutcome {
  double violation;
  double ratio;
};

inline PairOutcome judge_pair(const LossKind& loss, const SblParams& params, std::span<const double> u,
                              std::span<const double> v, const Label& y) {
  // The inequality is symmetric in (u, v); one orientation suffices.
  const double lu = eval(loss, u, y);
  const double lv = eval(loss, v, y);
  const double gap = std::abs(lu - lv);
  const double dist = sup_norm_diff(u, v);
  const double scale = std::pow(std::max(lu, lv), params.theta) * dist;
  const double allowed = params.lambda * scale;
  PairOutcome out{gap - (std::isnan(allowed) ? 0.0 : allowed), 0.0};
  // Tiny gaps are dominated by rounding and would inflate the ratio; the
  // violation itself is still reported for them.
  const double noise = 1e-8 * std::max(lu, lv);
  if (gap > noise) out.ratio = scale > 0.0 ? gap / scale : kInf;
  return out;
}

struct Candidate {
  double ratio = -1.0;
  std::vector<double> u, v;
  Label y;
};

struct BlockResult {
  double max_violation = -kInf;
  std::optional<SblTriple> worst;
  double max_ratio = 0.0;
  std::vector<Candidate> best;  // sorted by ratio, descending
};

inline void offer(std::vector<Candidate>& best, std::size_t cap, double ratio, std::span<const double> u,
                  std::span<const double> v, const Label& y) {
  if (cap == 0 || !(ratio > 0.0)) return;
  if (best.size() == cap && ratio <= best.back().ratio) return;
  Candidate c{ratio, {u.begin(), u.end()}, {v.begin(), v.end()}, y};
  auto pos = std::find_if(best.begin(), best.end(), [&](const Candidate& o) { return o.ratio < ratio; });
  best.insert(pos, std::move(c));
  if (best.size() > cap) best.pop_back();
}

}  // namespace detail

/// Randomised search for violations of the self-bounding Lipschitz inequality.
///
/// Trials cycle through independent pairs and local pairs v = u + s * d with
/// ||d||_inf = 1 at each configured scale (random and corner directions), plus
/// log-uniform scales in [1e-6, 1]. The highest-ratio pairs are then refined by
/// bisection of the segment [u, v], which exposes jump discontinuities for any
/// finite lambda. Deterministic for a given seed regardless of thread count.
inline SblReport check_sbl(const LossKind& loss, const SblParams& params, int q, long trials,
                           const SamplerConfig& cfg = {}, std::uint64_t seed = 0) {
  if (trials < 1) throw DomainError("check_sbl needs at least one trial");
  if (q < 1) throw DataError("q must be positive");
  int sparsity = 1;
  const auto shape = detail::label_shape(loss, &sparsity);
  if (shape == detail::LabelShape::Sign && q != 1) throw DataError("bounded exponential loss requires q = 1");
  if (shape == detail::LabelShape::Class && q < 2) throw DataError("class-index losses require q >= 2");

  const double half = 2.0 * cfg.box;
  const std::size_t modes = cfg.pair_scales.size() + 2;
  constexpr std::size_t kBlocks = 64;
  const auto total = static_cast<std::size_t>(trials);
  const std::size_t per_block = (total + kBlocks - 1) / kBlocks;
  const auto cap = static_cast<std::size_t>(std::max(0, cfg.refine_pairs));
  std::vector<detail::BlockResult> blocks(kBlocks);

  detail::parallel_for(
      kBlocks,
      [&](std::size_t b) {
        auto& out = blocks[b];
        const std::size_t begin = b * per_block;
        const std::size_t end = std::min(total, begin + per_block);
        std::vector<double> u(static_cast<std::size_t>(q)), v(u.size());
        for (std::size_t t = begin; t < end; ++t) {
          auto rng = detail::stream_rng(seed, t);
          for (double& x : u) x = detail::uniform(rng, -half, half);
          const Label y = detail::sample_label(shape, q, sparsity, half, rng);
          const std::size_t mode = t % modes;
          if (mode == 0) {
            for (double& x : v) x = detail::uniform(rng, -half, half);
          } else {
            const bool corner = (mode == modes - 1) || ((t / modes) % 2 == 1);
            const double s = (mode == modes - 1) ? std::pow(10.0, detail::uniform(rng, -6.0, 0.0))
                                                 : cfg.pair_scales[mode - 1];
            double top = 0.0;
            for (std::size_t j = 0; j < v.size(); ++j) {
              v[j] = corner ? static_cast<double>(detail::rademacher(rng)) : detail::uniform(rng, -1.0, 1.0);
              top = std::max(top, std::abs(v[j]));
            }
            if (top == 0.0) top = 1.0;
            for (std::size_t j = 0; j < v.size(); ++j) v[j] = u[j] + s * v[j] / top;
          }
          const auto res = detail::judge_pair(loss, params, u, v, y);
          if (res.violation > out.max_violation) {
            out.max_violation = res.violation;
            out.worst = SblTriple{u, v, y};
          }
          out.max_ratio = std::max(out.max_ratio, res.ratio);
          detail::offer(out.best, cap, res.ratio, u, v, y);
        }
      },
      1);

  SblReport report;
  report.trials = trials;
  std::vector<detail::Candidate> pool;
  for (auto& blk : blocks) {
    if (blk.max_violation > report.max_violation) {
      report.max_violation = blk.max_violation;
      report.worst_case = blk.worst;
    }
    report.max_ratio = std::max(report.max_ratio, blk.max_ratio);
    for (auto& c : blk.best) detail::offer(pool, cap, c.ratio, c.u, c.v, c.y);
  }

  // Bisection: keep the half-segment with the larger ratio.
  for (auto& c : pool) {
    std::vector<double> a = c.u, z = c.v, mid(a.size());
    for (int step = 0; step < cfg.refine_steps; ++step) {
      for (std::size_t j = 0; j < mid.size(); ++j) mid[j] = 0.5 * (a[j] + z[j]);
      if (detail::sup_norm_diff(a, mid) == 0.0 || detail::sup_norm_diff(mid, z) == 0.0) break;
      const auto left = detail::judge_pair(loss, params, a, mid, c.y);
      const auto right = detail::judge_pair(loss, params, mid, z, c.y);
      for (const auto* side : {&left, &right}) {
        if (side->violation > report.max_violation) {
          report.max_violation = side->violation;
          report.worst_case = side == &left ? SblTriple{a, mid, c.y} : SblTriple{mid, z, c.y};
        }
        report.max_ratio = std::max(report.max_ratio, side->ratio);
      }
      if (left.ratio >= right.ratio) {
        z = mid;
      } else {
        a = mid;
      }
    }
  }
  report.passed = !(report.max_violation > cfg.tolerance);
  return report;
}

}  // namespace mobound
