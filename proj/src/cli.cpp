#include "permubias/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <ostream>

#include "permubias/checkpoint.hpp"
#include "permubias/debias.hpp"
#include "permubias/error.hpp"
#include "permubias/rng.hpp"
#include "permubias/util.hpp"

namespace fs = std::filesystem;

namespace permubias {
namespace {

using nlohmann::json;

struct RunConfig {
  std::string command;
  std::string config_path;
  std::string dataset;
  std::string template_path;
  std::string model = "seed:1";
  std::string adapters;
  std::string heldout;
  std::string mode = "baqckv";
  int perm_cap = 24;
  uint64_t seed = 0;
  int precision = 64;
  std::string out_dir = ".";
  bool dump_matrices = false;
  int instance_index = 0;
  double lambda = 0.1;
  int epochs = 1;
  int samples_per_epoch = 64;
  int max_steps = 0;
  double learning_rate = 1e-4;
  double weight_decay = 1e-3;
};

// ---------------------------------------------------------------------------
// Config file: JSON object whose keys mirror the long flags. Explicit flags
// win because the file is applied before the command line is parsed.
// ---------------------------------------------------------------------------

void apply_config_file(const std::string& path, RunConfig& rc) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config file " + path + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "dataset") rc.dataset = value.get<std::string>();
      else if (key == "template") rc.template_path = value.get<std::string>();
      else if (key == "model") rc.model = value.get<std::string>();
      else if (key == "adapters") rc.adapters = value.get<std::string>();
      else if (key == "heldout") rc.heldout = value.get<std::string>();
      else if (key == "mode") rc.mode = value.get<std::string>();
      else if (key == "perm_cap") rc.perm_cap = value.get<int>();
      else if (key == "seed") rc.seed = value.get<uint64_t>();
      else if (key == "precision") rc.precision = value.get<int>();
      else if (key == "out") rc.out_dir = value.get<std::string>();
      else if (key == "dump_matrices") rc.dump_matrices = value.get<bool>();
      else if (key == "instance") rc.instance_index = value.get<int>();
      else if (key == "lambda") rc.lambda = value.get<double>();
      else if (key == "epochs") rc.epochs = value.get<int>();
      else if (key == "samples_per_epoch") rc.samples_per_epoch = value.get<int>();
      else if (key == "max_steps") rc.max_steps = value.get<int>();
      else if (key == "learning_rate") rc.learning_rate = value.get<double>();
      else if (key == "weight_decay") rc.weight_decay = value.get<double>();
      else throw ConfigError("config file " + path + ": unknown key \"" + key + "\"");
    } catch (const json::exception& e) {
      throw ConfigError("config file " + path + ": key \"" + key + "\": " + e.what());
    }
  }
}

// The file must be applied before CLI11 runs, so --config is found by a
// pre-scan rather than by the parser.
std::string find_config_flag(const std::vector<std::string>& args) {
  for (size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw ConfigError("--config needs a file path");
      return args[i + 1];
    }
    if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
  }
  return {};
}

ScoreMode parse_mode(const std::string& mode) {
  if (mode == "naive") return ScoreMode::Naive;
  if (mode == "baqckv" || mode == "cached") return ScoreMode::Cached;
  throw ConfigError("mode must be naive or baqckv, got \"" + mode + "\"");
}

std::string normalized_mode(const std::string& mode) {
  return parse_mode(mode) == ScoreMode::Naive ? "naive" : "baqckv";
}

// Architecture behind "seed:N" model specs: small enough to score a dataset
// in seconds, deep enough to show ordering sensitivity. The lively init
// keeps logits off the uniform plateau a near-zero init would produce.
ModelConfig demo_config(const Tokenizer& tok) {
  ModelConfig cfg;
  cfg.vocab_size = tok.vocab_size();
  cfg.d_model = 32;
  cfg.n_layers = 2;
  cfg.n_heads = 4;
  cfg.d_ff = 64;
  cfg.max_positions = 512;
  return cfg;
}
constexpr double kDemoInitStd = 0.25;

template <class T>
struct Workbench {
  Tokenizer tok;
  PromptTemplate tmpl;
  Dataset data;
  Model<T> model;
  AdapterSet<T> adapters;

  const AdapterSet<T>* adapter_ptr() const { return adapters.empty() ? nullptr : &adapters; }
};

template <class T>
Workbench<T> open_workbench(const RunConfig& rc) {
  Workbench<T> wb;
  if (!rc.template_path.empty()) wb.tmpl = PromptTemplate::load(rc.template_path);
  if (rc.dataset.empty()) throw ConfigError("--dataset is required");
  wb.data = load_dataset(rc.dataset);
  if (rc.model.rfind("seed:", 0) == 0) {
    uint64_t s = 0;
    try {
      size_t used = 0;
      s = std::stoull(rc.model.substr(5), &used);
      if (used != rc.model.size() - 5) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw ConfigError("model spec \"" + rc.model + "\" is not seed:<number>");
    }
    wb.model = random_model<T>(demo_config(wb.tok), s, kDemoInitStd);
  } else {
    wb.model = load_model<T>(rc.model);
  }
  if (!rc.adapters.empty()) wb.adapters = load_adapters<T>(rc.adapters, wb.model.cfg);
  return wb;
}

std::vector<Permutation> instance_perms(const McqInstance& inst, const RunConfig& rc, size_t i) {
  if (rc.perm_cap == 1) return {identity_permutation(inst.n_options())};
  return permutation_set(inst.n_options(), rc.perm_cap, mix_seed(rc.seed, 0xC0DE + i));
}

std::string out_path(const RunConfig& rc, const std::string& name) {
  return (fs::path(rc.out_dir) / name).string();
}

std::string perm_to_string(const Permutation& sigma) {
  std::string s;
  for (size_t i = 0; i < sigma.size(); ++i) {
    if (i) s += ' ';
    s += std::to_string(sigma[i]);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Shared scoring pass: every command that reads the dataset goes through
// here, so parallelism, seeding, and ledger bookkeeping stay identical.
// ---------------------------------------------------------------------------

struct ScoredDataset {
  std::vector<ScoredInstance> scored;
  std::vector<LedgerRow> ledger;
  int64_t forwarded = 0;  // tokens actually pushed through the model
};

template <class T>
ScoredDataset score_dataset(const Workbench<T>& wb, const RunConfig& rc, ScoreMode mode) {
  const auto& instances = wb.data.instances;
  ScoredDataset out;
  out.scored.resize(instances.size());
  out.ledger.resize(instances.size());
  std::vector<int64_t> counts(instances.size(), 0);
  ForwardHooks<T> hooks;
  hooks.adapters = wb.adapter_ptr();
  // Slot-per-index writes plus index-derived seeds keep the output identical
  // across thread counts.
  parallel_for_indexed(instances.size(), [&](size_t i) {
    TokenCounter counter;
    auto perms = instance_perms(instances[i], rc, i);
    out.scored[i] =
        score_instance(wb.model, wb.tok, wb.tmpl, instances[i], perms, mode, hooks, &counter);
    out.ledger[i] =
        make_ledger_row(instances[i].id, out.scored[i].prefix_tokens, out.scored[i].suffix_tokens);
    const int64_t expect =
        mode == ScoreMode::Naive ? out.ledger[i].naive_cost : out.ledger[i].cached_cost;
    if (counter.forwarded != expect) {
      throw ContractError("token ledger mismatch on instance " + instances[i].id + ": counted " +
                          std::to_string(counter.forwarded) + ", ledger says " +
                          std::to_string(expect));
    }
    counts[i] = counter.forwarded;
  });
  for (int64_t c : counts) out.forwarded += c;
  return out;
}

// ---------------------------------------------------------------------------
// evaluate: the full metric battery plus token accounting.
// ---------------------------------------------------------------------------

template <class T>
int cmd_evaluate(const Workbench<T>& wb, const RunConfig& rc, std::ostream& out) {
  auto run = score_dataset(wb, rc, parse_mode(rc.mode));
  const auto& instances = wb.data.instances;
  const bool labeled = wb.data.labeled();

  std::vector<ProbMatrix> mats;
  std::vector<std::pair<std::vector<double>, std::vector<double>>> id_rev;
  std::vector<int> chosen, answers, identity_rows;
  int max_labels = 0;
  for (size_t i = 0; i < instances.size(); ++i) {
    const auto& s = run.scored[i];
    if (s.identity_index < 0 || s.reverse_index < 0) {
      throw ContractError("instance " + instances[i].id +
                          ": ordering set lacks identity or reverse");
    }
    mats.push_back(s.probs);
    id_rev.push_back({s.probs[static_cast<size_t>(s.identity_index)],
                      s.probs[static_cast<size_t>(s.reverse_index)]});
    chosen.push_back(argmax_row(s.probs[static_cast<size_t>(s.identity_index)]));
    identity_rows.push_back(s.identity_index);
    if (labeled) answers.push_back(*instances[i].answer);
    max_labels = std::max(max_labels, instances[i].n_options());
  }

  const double pbm = pbm_dataset(mats);
  const double fr = flip_rate(id_rev);
  json metrics;
  metrics["pbm"] = pbm;
  metrics["fr"] = fr;
  if (labeled) {
    const auto rstd = recall_std(chosen, answers, max_labels);
    const auto acc = permutation_accuracy(mats, answers, identity_rows);
    metrics["rstd"] = rstd.value;
    metrics["rstd_labels_used"] = rstd.labels_used;
    metrics["rstd_labels_empty"] = rstd.labels_empty;
    metrics["ckld"] = choice_kl(chosen, answers, max_labels);
    metrics["accuracy"] = acc.accuracy;
    metrics["acc_std"] = acc.acc_std;
  } else {
    for (const char* key :
         {"rstd", "rstd_labels_used", "rstd_labels_empty", "ckld", "accuracy", "acc_std"}) {
      metrics[key] = nullptr;
    }
  }

  int64_t naive_total = 0, cached_total = 0;
  for (const auto& row : run.ledger) {
    naive_total += row.naive_cost;
    cached_total += row.cached_cost;
  }
  json report;
  report["dataset"] = rc.dataset;
  report["n_instances"] = instances.size();
  report["labeled"] = labeled;
  report["mode"] = normalized_mode(rc.mode);
  report["precision"] = rc.precision;
  report["perm_cap"] = rc.perm_cap;
  report["seed"] = rc.seed;
  report["metrics"] = metrics;
  report["tokens"] = {
      {"forwarded", run.forwarded},
      {"naive_cost", naive_total},
      {"cached_cost", cached_total},
      {"savings_pct", naive_total > 0
                          ? 100.0 * static_cast<double>(naive_total - cached_total) /
                                static_cast<double>(naive_total)
                          : 0.0}};
  atomic_write_file(out_path(rc, "report.json"), report.dump(2) + "\n");

  auto cell = [&](const char* key) {
    return metrics[key].is_null() ? std::string() : format_double(metrics[key].get<double>());
  };
  auto int_cell = [&](const char* key) {
    return metrics[key].is_null() ? std::string()
                                  : std::to_string(metrics[key].get<int64_t>());
  };
  std::string csv = csv_row({"pbm", "fr", "rstd", "rstd_labels_used", "rstd_labels_empty", "ckld",
                             "accuracy", "acc_std", "n_instances", "labeled", "mode", "precision",
                             "perm_cap", "seed", "naive_cost", "cached_cost", "savings_pct"});
  csv += csv_row({format_double(pbm), format_double(fr), cell("rstd"),
                  int_cell("rstd_labels_used"), int_cell("rstd_labels_empty"), cell("ckld"),
                  cell("accuracy"), cell("acc_std"), std::to_string(instances.size()),
                  labeled ? "true" : "false", normalized_mode(rc.mode),
                  std::to_string(rc.precision), std::to_string(rc.perm_cap),
                  std::to_string(rc.seed), std::to_string(naive_total),
                  std::to_string(cached_total),
                  format_double(report["tokens"]["savings_pct"].get<double>())});
  atomic_write_file(out_path(rc, "report.csv"), csv);

  if (rc.dump_matrices) {
    std::string dump =
        csv_row({"instance_id", "perm_index", "ordering", "content_index", "probability"});
    for (size_t i = 0; i < instances.size(); ++i) {
      const auto& s = run.scored[i];
      for (size_t p = 0; p < s.probs.size(); ++p) {
        for (size_t c = 0; c < s.probs[p].size(); ++c) {
          dump += csv_row({instances[i].id, std::to_string(p), perm_to_string(s.perms[p]),
                           std::to_string(c), format_double(s.probs[p][c])});
        }
      }
    }
    atomic_write_file(out_path(rc, "matrices.csv"), dump);
  }

  out << "evaluated " << instances.size() << " instances: pbm " << format_double(pbm) << ", fr "
      << format_double(fr);
  if (labeled) out << ", accuracy " << format_double(metrics["accuracy"].get<double>());
  out << "\nwrote " << out_path(rc, "report.json") << " and " << out_path(rc, "report.csv")
      << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// vote: ordering-pooled predictions with a per-instance certificate that the
// pooled matrix carries no ordering sensitivity.
// ---------------------------------------------------------------------------

template <class T>
int cmd_vote(const Workbench<T>& wb, const RunConfig& rc, std::ostream& out) {
  auto run = score_dataset(wb, rc, parse_mode(rc.mode));
  const auto& instances = wb.data.instances;
  const bool labeled = wb.data.labeled();

  std::string csv = csv_row({"instance_id", "identity_choice", "vote_choice", "vote_text",
                             "certificate", "answer", "correct"});
  int vote_right = 0, single_right = 0;
  for (size_t i = 0; i < instances.size(); ++i) {
    const auto& s = run.scored[i];
    const int identity_choice =
        s.identity_index >= 0 ? argmax_row(s.probs[static_cast<size_t>(s.identity_index)]) : -1;
    const int vote = majority_vote(s.probs);
    const double certificate = vote_certificate(s.probs);
    std::string answer, correct;
    if (labeled) {
      answer = std::to_string(*instances[i].answer);
      correct = vote == *instances[i].answer ? "1" : "0";
      vote_right += vote == *instances[i].answer ? 1 : 0;
      single_right += identity_choice == *instances[i].answer ? 1 : 0;
    }
    csv += csv_row({instances[i].id,
                    identity_choice >= 0 ? std::to_string(identity_choice) : std::string(),
                    std::to_string(vote),
                    instances[i].options[static_cast<size_t>(vote)],
                    format_double(certificate), answer, correct});
  }
  atomic_write_file(out_path(rc, "predictions.csv"), csv);

  out << "voted on " << instances.size() << " instances";
  if (labeled) {
    out << ": single-pass " << single_right << "/" << instances.size() << " right, vote "
        << vote_right << "/" << instances.size() << " right";
  }
  out << "\nwrote " << out_path(rc, "predictions.csv") << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// savings: measured token ledgers for both routes, with an aggregate row.
// ---------------------------------------------------------------------------

template <class T>
int cmd_savings(const Workbench<T>& wb, const RunConfig& rc, std::ostream& out) {
  // Runs both routes so every cost column is counted, not predicted.
  auto naive = score_dataset(wb, rc, ScoreMode::Naive);
  auto cached = score_dataset(wb, rc, ScoreMode::Cached);

  std::string csv = ledger_csv_header();
  LedgerRow total;
  total.instance_id = "TOTAL";
  for (size_t i = 0; i < naive.ledger.size(); ++i) {
    const auto& row = naive.ledger[i];
    csv += ledger_csv_row(row);
    total.k += row.k;
    total.prefix_len += row.prefix_len;
    total.sum_option_lens += row.sum_option_lens;
    total.naive_cost += row.naive_cost;
    total.cached_cost += row.cached_cost;
  }
  total.savings_pct = total.naive_cost > 0
                          ? 100.0 * static_cast<double>(total.naive_cost - total.cached_cost) /
                                static_cast<double>(total.naive_cost)
                          : 0.0;
  csv += ledger_csv_row(total);
  atomic_write_file(out_path(rc, "ledger.csv"), csv);

  out << "measured " << naive.forwarded << " naive tokens vs " << cached.forwarded
      << " cached tokens: savings " << format_double(total.savings_pct) << "%\nwrote "
      << out_path(rc, "ledger.csv") << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train: unsupervised adapter fitting plus checkpoint and log.
// ---------------------------------------------------------------------------

template <class T>
int cmd_train(Workbench<T>& wb, const RunConfig& rc, std::ostream& out) {
  DebiasConfig dc;
  dc.lambda = rc.lambda;
  dc.perm_cap = rc.perm_cap;
  dc.samples_per_epoch = rc.samples_per_epoch;
  dc.epochs = rc.epochs;
  dc.max_steps = rc.max_steps;
  dc.learning_rate = rc.learning_rate;
  dc.weight_decay = rc.weight_decay;
  dc.seed = rc.seed;
  dc.validate();

  std::vector<McqInstance> heldout =
      rc.heldout.empty() ? wb.data.instances : load_dataset(rc.heldout).instances;

  auto adapters = wb.adapters.empty()
                      ? init_adapters<T>(wb.model.cfg, LoraConfig{}, mix_seed(rc.seed, 0xADA7))
                      : wb.adapters;
  TrainLog log =
      train_debias(wb.model, adapters, wb.tok, wb.tmpl, wb.data.instances, heldout, dc);

  save_adapters(adapters, wb.model.cfg.d_model, out_path(rc, "adapters.bin"));
  atomic_write_file(out_path(rc, "train_log.csv"), train_log_csv(log));

  out << "trained " << log.steps.size() << " steps";
  if (!log.evals.empty()) {
    out << ": held-out pbm " << format_double(log.evals.front().pbm) << " -> "
        << format_double(log.evals.back().pbm);
  }
  out << "\nwrote " << out_path(rc, "adapters.bin") << " and " << out_path(rc, "train_log.csv")
      << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// analyze: attention spread across orderings at the answer position.
// ---------------------------------------------------------------------------

template <class T>
int cmd_analyze(const Workbench<T>& wb, const RunConfig& rc, std::ostream& out) {
  if (rc.instance_index < 0 ||
      rc.instance_index >= static_cast<int>(wb.data.instances.size())) {
    throw ConfigError("--instance " + std::to_string(rc.instance_index) +
                      " is out of range for " + std::to_string(wb.data.instances.size()) +
                      " instances");
  }
  const auto& inst = wb.data.instances[static_cast<size_t>(rc.instance_index)];
  auto perms = instance_perms(inst, rc, static_cast<size_t>(rc.instance_index));
  auto fl = attention_fluctuation(wb.model, wb.tok, wb.tmpl, inst, perms, wb.adapter_ptr());

  const bool suffix_ge_prefix = fl.mean_suffix_std >= fl.mean_prefix_std;
  std::string csv = csv_row({"layer", "head", "key", "region", "std", "mean_prefix_std",
                             "mean_suffix_std", "suffix_ge_prefix"});
  for (int l = 0; l < fl.n_layers; ++l) {
    for (int h = 0; h < fl.n_heads; ++h) {
      const auto& by_key = fl.std_by_key[static_cast<size_t>(l)][static_cast<size_t>(h)];
      for (size_t k = 0; k < by_key.size(); ++k) {
        csv += csv_row({std::to_string(l), std::to_string(h), std::to_string(k),
                        static_cast<int64_t>(k) < fl.prefix_len ? "prefix" : "suffix",
                        format_double(by_key[k]), format_double(fl.mean_prefix_std),
                        format_double(fl.mean_suffix_std), suffix_ge_prefix ? "1" : "0"});
      }
    }
  }
  atomic_write_file(out_path(rc, "attention.csv"), csv);

  out << "analyzed instance " << inst.id << " over " << perms.size()
      << " orderings: mean std prefix " << format_double(fl.mean_prefix_std) << ", suffix "
      << format_double(fl.mean_suffix_std) << "\nwrote " << out_path(rc, "attention.csv") << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Dispatch: setup failures exit 2, execution failures exit 1.
// ---------------------------------------------------------------------------

template <class T>
int run_typed(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  Workbench<T> wb;
  try {
    parse_mode(rc.mode);
    if (rc.command == "evaluate" && rc.perm_cap < 2) {
      throw ConfigError(
          "evaluate needs --perm-cap >= 2 to compare identity and reverse orderings");
    }
    wb = open_workbench<T>(rc);
    std::error_code ec;
    fs::create_directories(rc.out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + rc.out_dir + ": " + ec.message());
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  try {
    if (rc.command == "evaluate") return cmd_evaluate(wb, rc, out);
    if (rc.command == "vote") return cmd_vote(wb, rc, out);
    if (rc.command == "savings") return cmd_savings(wb, rc, out);
    if (rc.command == "train") return cmd_train(wb, rc, out);
    if (rc.command == "analyze") return cmd_analyze(wb, rc, out);
    err << "config error: unknown command " << rc.command << "\n";
    return kExitConfig;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig rc;
  CLI::App app{"ordering-bias laboratory for multiple-choice scoring"};
  app.require_subcommand(1);

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", rc.config_path, "JSON config file; explicit flags override it");
    sub->add_option("--dataset", rc.dataset, "JSON Lines dataset path");
    sub->add_option("--template", rc.template_path, "prompt template JSON path");
    sub->add_option("--model", rc.model, "model checkpoint path or seed:<number>");
    sub->add_option("--adapters", rc.adapters, "adapter checkpoint to overlay");
    sub->add_option("--mode", rc.mode, "scoring route: naive or baqckv");
    sub->add_option("--perm-cap", rc.perm_cap, "max orderings per instance");
    sub->add_option("--seed", rc.seed, "run seed");
    sub->add_option("--precision", rc.precision, "floating point width: 32 or 64");
    sub->add_option("--out", rc.out_dir, "output directory");
    return sub;
  };

  auto* evaluate = add_common(app.add_subcommand("evaluate", "score a dataset and report metrics"));
  evaluate->add_flag("--dump-matrices", rc.dump_matrices,
                     "also write per-ordering probability rows");
  add_common(app.add_subcommand("vote", "ordering-pooled predictions with certificates"));
  add_common(app.add_subcommand("savings", "measured token ledgers for both scoring routes"));
  auto* train = add_common(app.add_subcommand("train", "fit debias adapters unsupervised"));
  train->add_option("--heldout", rc.heldout, "held-out dataset for per-epoch metrics");
  train->add_option("--lambda", rc.lambda, "entropy penalty weight");
  train->add_option("--epochs", rc.epochs, "training epochs");
  train->add_option("--samples-per-epoch", rc.samples_per_epoch, "instance draws per epoch");
  train->add_option("--max-steps", rc.max_steps, "stop after this many optimizer steps");
  train->add_option("--lr", rc.learning_rate, "AdamW learning rate");
  train->add_option("--weight-decay", rc.weight_decay, "decoupled weight decay");
  auto* analyze =
      add_common(app.add_subcommand("analyze", "attention spread across orderings"));
  analyze->add_option("--instance", rc.instance_index, "dataset row to analyze");

  try {
    const std::string config_path = find_config_flag(args);
    if (!config_path.empty()) apply_config_file(config_path, rc);
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  rc.command = app.get_subcommands().front()->get_name();

  if (rc.precision == 64) return run_typed<double>(rc, out, err);
  if (rc.precision == 32) return run_typed<float>(rc, out, err);
  err << "config error: precision must be 32 or 64, got " << rc.precision << "\n";
  return kExitConfig;
}

}  // namespace permubias
