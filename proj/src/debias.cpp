#include "permubias/debias.hpp"

#include "permubias/util.hpp"

namespace permubias {

std::string train_log_csv(const TrainLog& log) {
  std::string out = csv_row({"step", "epoch", "loss", "b_log", "entropy", "epoch_pbm", "epoch_acc"});
  size_t next_eval = 0;
  for (size_t i = 0; i < log.steps.size(); ++i) {
    const auto& st = log.steps[i];
    const bool epoch_ends =
        i + 1 == log.steps.size() || log.steps[i + 1].epoch != st.epoch;
    std::string pbm, acc;
    if (epoch_ends && next_eval < log.evals.size() && log.evals[next_eval].epoch == st.epoch) {
      const auto& ev = log.evals[next_eval++];
      pbm = format_double(ev.pbm);
      if (ev.has_accuracy) acc = format_double(ev.accuracy);
    }
    out += csv_row({std::to_string(st.step), std::to_string(st.epoch), format_double(st.loss),
                    format_double(st.b_log), format_double(st.entropy), pbm, acc});
  }
  return out;
}

}  // namespace permubias
