#include "ssvmr/batch.hpp"

#include "ssvmr/error.hpp"

namespace ssvmr {

Var batch_music_embeddings(const BoundParams& p, const TrainingBatch& batch, double dropout_rate, Rng* rng) {
  const Var branch = embed_music_batch(p, batch.music_features, dropout_rate, rng).embedding;
  bool any_soft = false;
  for (bool s : batch.is_soft) any_soft = any_soft || s;
  if (!any_soft) return branch;
  const std::size_t b = batch.size();
  const std::size_t d_e = branch.value().cols();
  if (batch.soft_targets.rows() != b || batch.soft_targets.cols() != d_e || batch.is_soft.size() != b) {
    throw DimensionError("batch soft targets do not match batch shape");
  }
  Tensor keep(b, d_e, 1.0);
  Tensor soft(b, d_e);
  for (std::size_t i = 0; i < b; ++i) {
    if (!batch.is_soft[i]) continue;
    for (std::size_t c = 0; c < d_e; ++c) {
      keep(i, c) = 0.0;
      soft(i, c) = batch.soft_targets(i, c);
    }
  }
  Tape& t = *branch.tape();
  return add(mul(branch, t.constant(std::move(keep))), t.constant(std::move(soft)));
}

Var select_rows(const Var& x, const std::vector<std::size_t>& rows) {
  const std::size_t n = x.value().rows();
  Tensor sel(rows.size(), n);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= n) throw DimensionError("select_rows: index out of range");
    sel(r, rows[r]) = 1.0;
  }
  return matmul(x.tape()->constant(std::move(sel)), x);
}

}  // namespace ssvmr
