// SPDX-License-Identifier: Apache-2.0
//
// Output-layer kernels: bias addition, softmax and best-class search over a
// vocabulary-sized score vector p with bias b.
//
//   baseline_output        add_bias, three-pass softmax, k-best scan (5 sweeps)
//   fused_output           one sweep: bias, online max/sum, k-best candidates
//   argmax_1best           one sweep, no exponentials, no probabilities
//   argmax_1best_parallel  argmax_1best over contiguous shards plus a reduction
//
// Ties resolve to the lowest class index in every kernel.
#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <type_traits>
#include <vector>

#include "beamfuse/error.hpp"
#include "beamfuse/tensorkit.hpp"

namespace beamfuse {

/// Wider accumulator for softmax denominators; float scores sum in double.
template <typename Scalar>
using accum_t = std::conditional_t<std::is_same_v<Scalar, float>, double, Scalar>;

template <typename Scalar>
struct ClassScore {
  Index index = 0;
  Scalar score = 0;        // ranking key the list was built with
  Scalar probability = 0;  // filled on extraction
};

/// Bounded best-first list of (class, score) pairs. Entries stay sorted by
/// score descending, then class index ascending. Linear insertion, which
/// beats a heap for the beam widths used in decoding.
template <typename Scalar>
class KBestList {
 public:
  explicit KBestList(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ValueError("KBestList: capacity must be >= 1");
    entries_.reserve(capacity + 1);
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const ClassScore<Scalar>& operator[](std::size_t i) const { return entries_[i]; }
  ClassScore<Scalar>& operator[](std::size_t i) { return entries_[i]; }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }

  /// Returns true when the pair made it into the list.
  bool offer(Index index, Scalar score) {
    if (entries_.size() == capacity_ && !ahead(index, score, entries_.back())) return false;
    std::size_t pos = entries_.size();
    while (pos > 0 && ahead(index, score, entries_[pos - 1])) --pos;
    entries_.insert(entries_.begin() + static_cast<std::ptrdiff_t>(pos),
                    ClassScore<Scalar>{index, score, 0});
    if (entries_.size() > capacity_) entries_.pop_back();
    return true;
  }

 private:
  static bool ahead(Index index, Scalar score, const ClassScore<Scalar>& other) {
    return score > other.score || (score == other.score && index < other.index);
  }

  std::size_t capacity_;
  std::vector<ClassScore<Scalar>> entries_;
};

/// Online softmax accumulator. When a strictly larger score arrives the old
/// sum is rescaled by exp(old_max - new_max) before the new term (exp(0) = 1)
/// is added.
template <typename Scalar>
struct RunningMaxSum {
  using Accum = accum_t<Scalar>;

  Scalar max = -std::numeric_limits<Scalar>::infinity();
  Accum sum = 0;
  Index best = -1;

  void push(Scalar value, Index index) {
    if (value > max) {
      const Accum delta = static_cast<Accum>(max) - static_cast<Accum>(value);
      sum = std::exp(delta) * sum + Accum{1};
      max = value;
      best = index;
    } else {
      sum += std::exp(static_cast<Accum>(value) - static_cast<Accum>(max));
    }
  }
};

/// Max and denominator of a softmax, for comparing the two summation routes.
template <typename Scalar>
struct SoftmaxNormalizer {
  Scalar max;
  accum_t<Scalar> sum;
};

struct ShardResult {
  Index begin = 0;  // global range [begin, end)
  Index end = 0;
  double max = -std::numeric_limits<double>::infinity();
  Index best = -1;
};

namespace detail {

template <typename DerivedP, typename DerivedB>
void require_same_length(const Eigen::MatrixBase<DerivedP>& p,
                         const Eigen::MatrixBase<DerivedB>& b, const char* what) {
  if (p.size() != b.size()) {
    throw ShapeError(std::string(what) + ": score length " + std::to_string(p.size()) +
                     " != bias length " + std::to_string(b.size()));
  }
}

inline void require_nonempty(Index n, const char* what) {
  if (n == 0) throw ValueError(std::string(what) + ": empty score vector");
}

inline void require_k(Index k, Index n, const char* what) {
  if (k < 1 || k > n) {
    throw ValueError(std::string(what) + ": k=" + std::to_string(k) + " outside [1, " +
                     std::to_string(n) + "]");
  }
}

inline void count_sweep(PassCounter* passes) {
  if (passes) passes->sweep();
}

}  // namespace detail

template <typename DerivedP, typename DerivedB>
Vector<typename DerivedP::Scalar> add_bias(const Eigen::MatrixBase<DerivedP>& p,
                                           const Eigen::MatrixBase<DerivedB>& b,
                                           PassCounter* passes = nullptr) {
  detail::require_same_length(p, b, "add_bias");
  const Index n = p.size();
  Vector<typename DerivedP::Scalar> out(n);
  detail::count_sweep(passes);
  for (Index i = 0; i < n; ++i) out[i] = p.coeff(i) + b.coeff(i);
  return out;
}

/// In place: max sweep, denominator sweep, normalize sweep.
template <typename Scalar>
SoftmaxNormalizer<Scalar> softmax_3pass_inplace(Vector<Scalar>& p, PassCounter* passes = nullptr) {
  using Accum = accum_t<Scalar>;
  const Index n = p.size();
  detail::require_nonempty(n, "softmax");

  Scalar max = -std::numeric_limits<Scalar>::infinity();
  detail::count_sweep(passes);
  for (Index i = 0; i < n; ++i) {
    if (p[i] > max) max = p[i];
  }

  Accum sum = 0;
  detail::count_sweep(passes);
  for (Index i = 0; i < n; ++i) sum += std::exp(static_cast<Accum>(p[i]) - max);

  detail::count_sweep(passes);
  for (Index i = 0; i < n; ++i) {
    p[i] = static_cast<Scalar>(std::exp(static_cast<Accum>(p[i]) - max) / sum);
  }
  return {max, sum};
}

template <typename Derived>
Vector<typename Derived::Scalar> softmax_3pass(const Eigen::MatrixBase<Derived>& p,
                                               PassCounter* passes = nullptr) {
  Vector<typename Derived::Scalar> out = p;
  softmax_3pass_inplace(out, passes);
  return out;
}

template <typename Scalar>
struct BestClass {
  Scalar max;
  Index best;
};

template <typename Derived>
BestClass<typename Derived::Scalar> find_best(const Eigen::MatrixBase<Derived>& p,
                                              PassCounter* passes = nullptr) {
  using Scalar = typename Derived::Scalar;
  const Index n = p.size();
  detail::require_nonempty(n, "find_best");
  BestClass<Scalar> r{-std::numeric_limits<Scalar>::infinity(), -1};
  detail::count_sweep(passes);
  for (Index i = 0; i < n; ++i) {
    if (p.coeff(i) > r.max) {
      r.max = p.coeff(i);
      r.best = i;
    }
  }
  return r;
}

/// Single k-best sweep over already-normalized probabilities.
template <typename Derived>
KBestList<typename Derived::Scalar> kbest_scan(const Eigen::MatrixBase<Derived>& probs, Index k,
                                               PassCounter* passes = nullptr) {
  const Index n = probs.size();
  detail::require_k(k, n, "kbest_scan");
  KBestList<typename Derived::Scalar> list(static_cast<std::size_t>(k));
  detail::count_sweep(passes);
  for (Index i = 0; i < n; ++i) list.offer(i, probs.coeff(i));
  for (auto& e : list) e.probability = e.score;
  return list;
}

/// Unfused reference pipeline: five sweeps over p for any k.
template <typename DerivedP, typename DerivedB>
KBestList<typename DerivedP::Scalar> baseline_output(const Eigen::MatrixBase<DerivedP>& p,
                                                     const Eigen::MatrixBase<DerivedB>& b, Index k,
                                                     PassCounter* passes = nullptr) {
  detail::require_same_length(p, b, "baseline_output");
  detail::require_k(k, p.size(), "baseline_output");
  auto scores = add_bias(p, b, passes);
  softmax_3pass_inplace(scores, passes);
  return kbest_scan(scores, k, passes);
}

/// Fused bias + softmax + k-best in one sweep. Candidates keep the biased
/// raw score; probabilities exp(score - max) / sum are formed for the k
/// survivors only. For k = 1 the probability is 1 / sum.
template <typename DerivedP, typename DerivedB>
KBestList<typename DerivedP::Scalar> fused_output(const Eigen::MatrixBase<DerivedP>& p,
                                                  const Eigen::MatrixBase<DerivedB>& b, Index k,
                                                  PassCounter* passes = nullptr,
                                                  SoftmaxNormalizer<typename DerivedP::Scalar>*
                                                      normalizer = nullptr) {
  using Scalar = typename DerivedP::Scalar;
  using Accum = accum_t<Scalar>;
  detail::require_same_length(p, b, "fused_output");
  const Index n = p.size();
  detail::require_k(k, n, "fused_output");

  RunningMaxSum<Scalar> acc;
  KBestList<Scalar> list(static_cast<std::size_t>(k));
  detail::count_sweep(passes);
  if (k == 1) {
    for (Index i = 0; i < n; ++i) acc.push(p.coeff(i) + b.coeff(i), i);
    list.offer(acc.best, acc.max);
    list[0].probability = static_cast<Scalar>(Accum{1} / acc.sum);
  } else {
    for (Index i = 0; i < n; ++i) {
      const Scalar v = p.coeff(i) + b.coeff(i);
      acc.push(v, i);
      list.offer(i, v);
    }
    for (auto& e : list) {
      e.probability = static_cast<Scalar>(
          std::exp(static_cast<Accum>(e.score) - static_cast<Accum>(acc.max)) / acc.sum);
    }
  }
  if (normalizer) *normalizer = {acc.max, acc.sum};
  return list;
}

/// argmax_i (p_i + b_i), lowest index on ties. One sweep, no exponentials.
template <typename DerivedP, typename DerivedB>
Index argmax_1best(const Eigen::MatrixBase<DerivedP>& p, const Eigen::MatrixBase<DerivedB>& b,
                   PassCounter* passes = nullptr) {
  using Scalar = typename DerivedP::Scalar;
  detail::require_same_length(p, b, "argmax_1best");
  const Index n = p.size();
  detail::require_nonempty(n, "argmax_1best");
  Scalar max = -std::numeric_limits<Scalar>::infinity();
  Index best = -1;
  detail::count_sweep(passes);
  for (Index i = 0; i < n; ++i) {
    const Scalar v = p.coeff(i) + b.coeff(i);
    if (v > max) {
      max = v;
      best = i;
    }
  }
  return best;
}

/// Contiguous near-equal shards; the first (n % shards) shards get one extra
/// element.
inline std::vector<ShardResult> make_shards(Index n, Index shards) {
  if (shards < 1 || shards > n) {
    throw ValueError("shard count " + std::to_string(shards) + " outside [1, " +
                     std::to_string(n) + "]");
  }
  std::vector<ShardResult> out(static_cast<std::size_t>(shards));
  const Index base = n / shards, extra = n % shards;
  Index pos = 0;
  for (Index s = 0; s < shards; ++s) {
    const Index len = base + (s < extra ? 1 : 0);
    out[static_cast<std::size_t>(s)].begin = pos;
    out[static_cast<std::size_t>(s)].end = pos + len;
    pos += len;
  }
  return out;
}

/// Sharded argmax_1best. Shards scan independently (in parallel when the
/// vector is large); the serial reduction walks shards in index order and
/// only replaces on a strictly larger max, so the result equals
/// argmax_1best for every shard count.
template <typename DerivedP, typename DerivedB>
Index argmax_1best_parallel(const Eigen::MatrixBase<DerivedP>& p,
                            const Eigen::MatrixBase<DerivedB>& b, Index shards,
                            PassCounter* passes = nullptr) {
  using Scalar = typename DerivedP::Scalar;
  detail::require_same_length(p, b, "argmax_1best_parallel");
  detail::require_nonempty(p.size(), "argmax_1best_parallel");
  std::vector<ShardResult> parts = make_shards(p.size(), shards);
  const auto& pd = p.derived();
  const auto& bd = b.derived();

  detail::count_sweep(passes);
  const bool par = shards > 1 && p.size() >= (Index{1} << 14);
#pragma omp parallel for schedule(static) if (par)
  for (Index s = 0; s < shards; ++s) {
    ShardResult& r = parts[static_cast<std::size_t>(s)];
    Scalar max = -std::numeric_limits<Scalar>::infinity();
    Index best = -1;
    for (Index i = r.begin; i < r.end; ++i) {
      const Scalar v = pd.coeff(i) + bd.coeff(i);
      if (v > max) {
        max = v;
        best = i;
      }
    }
    r.max = static_cast<double>(max);
    r.best = best;
  }

  double max = -std::numeric_limits<double>::infinity();
  Index best = -1;
  for (const ShardResult& r : parts) {
    if (r.max > max) {
      max = r.max;
      best = r.best;
    }
  }
  return best;
}

}  // namespace beamfuse
