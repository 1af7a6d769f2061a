#include "permubias/engine.hpp"

#include <numeric>

#include "permubias/util.hpp"

namespace permubias {

LedgerRow make_ledger_row(const std::string& instance_id, int64_t prefix_len,
                          const std::vector<int64_t>& suffix_lens) {
  if (prefix_len < 0 || suffix_lens.empty()) {
    throw ContractError("ledger: need a nonnegative prefix and at least one ordering");
  }
  LedgerRow row;
  row.instance_id = instance_id;
  row.k = static_cast<int>(suffix_lens.size());
  row.prefix_len = prefix_len;
  row.sum_option_lens = std::accumulate(suffix_lens.begin(), suffix_lens.end(), int64_t{0});
  row.naive_cost = static_cast<int64_t>(row.k) * prefix_len + row.sum_option_lens;
  row.cached_cost = prefix_len + row.sum_option_lens;
  row.savings_pct =
      row.naive_cost > 0
          ? 100.0 * static_cast<double>(row.naive_cost - row.cached_cost) / static_cast<double>(row.naive_cost)
          : 0.0;
  return row;
}

std::string ledger_csv_header() {
  return csv_row({"instance_id", "k", "prefix_len", "sum_option_lens", "naive_cost",
                  "cached_cost", "savings_pct"});
}

std::string ledger_csv_row(const LedgerRow& row) {
  return csv_row({row.instance_id, std::to_string(row.k), std::to_string(row.prefix_len),
                  std::to_string(row.sum_option_lens), std::to_string(row.naive_cost),
                  std::to_string(row.cached_cost), format_double(row.savings_pct)});
}

}  // namespace permubias
