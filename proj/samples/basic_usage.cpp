// Track a rank-5 SVD of a 50x40 matrix through a few hundred updates and
// compare against the batch optimum.

#include <cstdio>

#include "isvd/isvd.hpp"

int main() {
  using namespace isvd;

  const Matrix a0 = gen_low_rank(50, 40, 5, 0.1, 7);
  IncrementalSvd svd(a0, 5);

  for (const auto& ev : gen_rank_one_events(300, 0.05, 50, 40, 7)) svd.apply(ev);

  const FactorModel model(7, 5);
  const Vector row = model.col_loadings(0, 40) * model.row_loading(50);
  const AppendInfo info = svd.row_append(row);
  std::printf("appended row: residual %.3g of norm %.3g\n", info.residual_norm, info.input_norm);

  const OracleBaseline best = oracle_baseline(svd.tracked(), svd.work_rank());
  const double err = frob_error(svd);
  std::printf("%ldx%ld  E_inc %.6f  E_opt %.6f  ratio %.6f\n", static_cast<long>(svd.rows()),
              static_cast<long>(svd.cols()), err, best.frob_opt, err / best.frob_opt);

  svd.refresh(true);
  std::printf("after refresh: ratio %.12f\n", frob_error(svd) / best.frob_opt);
}
