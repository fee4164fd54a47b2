#pragma once

#include <cstddef>
#include <vector>

namespace fpce {

using MultiIndex = std::vector<int>;

inline int total_degree(const MultiIndex& alpha) {
  int s = 0;
  for (int a : alpha) s += a;
  return s;
}

// Total-degree multi-index set { alpha in N^dim : |alpha| <= max_degree } in
// graded lexicographic order: sorted by total degree first, and within a
// degree block the leading entries decrease, e.g. for (dim=2, p=2):
//   (0,0), (1,0), (0,1), (2,0), (1,1), (0,2).
// The zero index always comes first. Size is binom(dim + p, p).
class MultiIndexSet {
 public:
  // Throws std::invalid_argument for dim < 1, max_degree < 0, or when the
  // resulting basis size would exceed cap.
  static MultiIndexSet total_degree(int dim, int max_degree,
                                    std::size_t cap = 10000);

  int dimension() const { return dim_; }
  int max_degree() const { return max_degree_; }
  std::size_t size() const { return indices_.size(); }
  const MultiIndex& operator[](std::size_t i) const { return indices_[i]; }
  const std::vector<MultiIndex>& indices() const { return indices_; }
  auto begin() const { return indices_.begin(); }
  auto end() const { return indices_.end(); }

 private:
  MultiIndexSet(int dim, int max_degree, std::vector<MultiIndex> idx)
      : dim_(dim), max_degree_(max_degree), indices_(std::move(idx)) {}

  int dim_ = 0;
  int max_degree_ = 0;
  std::vector<MultiIndex> indices_;
};

}  // namespace fpce
