#pragma once

#include <string>
#include <vector>

#include "spheremap/types.hpp"

// Semantic embedding vectors from co-occurrence counts: shifted positive PMI
// matrix followed by a truncated SVD, rows l2-normalized.

namespace spheremap::embedding {

struct Triplet {
  Index i;
  Index j;
  double count;  // nonnegative integer
};

struct CooccurrenceTable {
  std::vector<std::string> vocabulary;  // item ids; row/column index order
  Matrix counts;                        // |V| x |V|, nonnegative integer values

  static CooccurrenceTable from_triplets(std::vector<std::string> vocabulary,
                                         const std::vector<Triplet>& triplets);
  static CooccurrenceTable from_counts(std::vector<std::string> vocabulary, Matrix counts);

  double total() const { return counts.sum(); }  // |D|
};

struct SppmiMatrix {
  Matrix values;  // |V| x |V|, entries >= 0
  int shift_k;
  double alpha;
  std::vector<Index> zero_marginal;  // items with no observed co-occurrences
};

/// SPPMI(w,c) = max(log(#(w,c) / (sum_c' #(w,c') (sum_w' #(w',c)/|D|)^alpha))
///              - log k, 0). Zero-count pairs map to 0.
SppmiMatrix build_sppmi(const CooccurrenceTable& table, int k, double alpha);

struct EmbeddingResult {
  SphericalMatrix vectors;      // kept rows, unit length
  std::vector<Index> kept;      // original item index per row of `vectors`
  std::vector<Index> excluded;  // items whose embedding row was zero
};

/// Rank-p truncated SVD: U_p sqrt(S_p) when the matrix is symmetric within
/// 1e-12 max-abs, U_p sqrt(S_p) + V_p sqrt(S_p) otherwise; rows then
/// l2-normalized. Fails when fewer than p singular values are nonzero.
EmbeddingResult embed(const SppmiMatrix& sppmi, Index p);

}  // namespace spheremap::embedding
