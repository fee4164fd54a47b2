#include "fpce/basis/multi_index.hpp"

#include <stdexcept>
#include <string>

namespace fpce {

namespace {

std::size_t basis_cardinality(int dim, int degree, std::size_t cap) {
  // binom(dim + degree, degree) with early overflow bail-out.
  unsigned long long c = 1;
  for (int k = 1; k <= degree; ++k) {
    c = c * (dim + k) / k;  // exact: product of k consecutive integers over k!
    if (c > 100 * cap) return c;
  }
  return static_cast<std::size_t>(c);
}

void emit(int remaining_dims, int budget, MultiIndex& work,
          std::vector<MultiIndex>& out) {
  if (remaining_dims == 1) {
    work.push_back(budget);
    out.push_back(work);
    work.pop_back();
    return;
  }
  for (int lead = budget; lead >= 0; --lead) {
    work.push_back(lead);
    emit(remaining_dims - 1, budget - lead, work, out);
    work.pop_back();
  }
}

}  // namespace

MultiIndexSet MultiIndexSet::total_degree(int dim, int max_degree,
                                          std::size_t cap) {
  if (dim < 1) throw std::invalid_argument("MultiIndexSet: dim must be >= 1");
  if (max_degree < 0)
    throw std::invalid_argument("MultiIndexSet: max_degree must be >= 0");
  std::size_t card = basis_cardinality(dim, max_degree, cap);
  if (card > cap)
    throw std::invalid_argument(
        "MultiIndexSet: basis size " + std::to_string(card) +
        " exceeds cap " + std::to_string(cap));

  std::vector<MultiIndex> idx;
  idx.reserve(card);
  MultiIndex work;
  work.reserve(dim);
  for (int d = 0; d <= max_degree; ++d) emit(dim, d, work, idx);
  return MultiIndexSet(dim, max_degree, std::move(idx));
}

}  // namespace fpce
