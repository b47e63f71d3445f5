#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tabmlm/checkpoint.hpp"
#include "tabmlm/common.hpp"
#include "tabmlm/cost_meter.hpp"
#include "tabmlm/imputer.hpp"
#include "tabmlm/kernels.hpp"
#include "tabmlm/manifest.hpp"
#include "tabmlm/model.hpp"
#include "tabmlm/serializer.hpp"
#include "tabmlm/table.hpp"
#include "tabmlm/tokenizer.hpp"
#include "tabmlm/trainer.hpp"

namespace tabmlm {
namespace {

std::string fmt_shortest(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw io_error("cannot create directory " + dir + ": " + ec.message());
}

ModelConfig preset_by_name(const std::string& name) {
  if (name == "paper") return ModelConfig::paper_preset();
  if (name == "desk") return ModelConfig::desk_preset();
  if (name == "tiny") return ModelConfig::tiny_preset();
  throw usage_error("unknown model preset \"" + name + "\"");
}

std::int64_t preset_default_seq(const std::string& name) {
  if (name == "paper") return 512;
  if (name == "desk") return 128;
  return 32;
}

void add_common_manifest(Manifest& m, const std::string& subcommand) {
  m.set("tool", "tabmlm");
  m.set("version", std::string(kVersion));
  m.set("subcommand", subcommand);
  m.set("kernels", std::string(kernels::backend_name(kernels::active_backend())));
}

// ---- prepare ----

struct PrepareOpts {
  std::string input, out;
  std::size_t train_rows = 0;
  std::uint64_t seed = 0;
};

int run_prepare(const PrepareOpts& o) {
  const Table full = load_csv(o.input);
  if (full.n_columns() > kMaxColumns)
    throw data_error("table has " + std::to_string(full.n_columns()) +
                     " columns; at most " + std::to_string(kMaxColumns) +
                     " are serializable");
  const ColumnStats stats = compute_stats(full);  // shared by both splits
  auto [train, val] = split_shuffle(full, o.train_rows, o.seed);
  const Table train_n = normalize(train, stats);
  const Table val_n = normalize(val, stats);

  ensure_dir(o.out);
  write_csv(train_n, o.out + "/train.csv", 4);
  write_csv(val_n, o.out + "/val.csv", 4);
  write_stats_csv(stats, full.column_names, o.out + "/stats.csv");
  const Vocabulary vocab = Vocabulary::build();
  vocab.save(o.out + "/vocab.txt");

  Manifest m;
  add_common_manifest(m, "prepare");
  m.set("input", o.input);
  m.set("train_rows", static_cast<std::uint64_t>(o.train_rows));
  m.set("val_rows", static_cast<std::uint64_t>(val_n.n_rows()));
  m.set("columns", static_cast<std::uint64_t>(full.n_columns()));
  m.set("seed", o.seed);
  m.set("vocab_hash", vocab.hash());
  m.set("out_train", o.out + "/train.csv");
  m.set("out_val", o.out + "/val.csv");
  m.set("out_stats", o.out + "/stats.csv");
  m.set("out_vocab", o.out + "/vocab.txt");
  m.write(o.out + "/manifest.txt");

  std::cout << "prepared " << train_n.n_rows() << " train / " << val_n.n_rows()
            << " val rows into " << o.out << "\n";
  return 0;
}

// ---- train ----

struct TrainOpts {
  std::string data, out, resume;
  std::string preset = "desk";
  std::string policy = "value-tokens-only";
  std::size_t epochs = 0;
  double lr = 1e-4;
  std::size_t batch = 64;
  double mask_rate = 0.15;
  std::size_t checkpoint_every = 0;
  std::uint64_t seed = 0;
  double dropout = std::numeric_limits<double>::quiet_NaN();
};

int run_train(const TrainOpts& o) {
  const Vocabulary vocab = Vocabulary::from_file(o.data + "/vocab.txt");
  const Table train = load_csv(o.data + "/train.csv");

  Parameters params;
  AdamState adam;
  std::uint64_t start_epoch = 0;
  if (!o.resume.empty()) {
    Checkpoint ckpt = load_checkpoint(o.resume, vocab.hash());
    params = std::move(ckpt.params);
    if (ckpt.adam)
      adam = std::move(*ckpt.adam);
    else
      adam = AdamState{zeros_like(params), zeros_like(params), 0};
    start_epoch = ckpt.epoch;
  } else {
    ModelConfig config = preset_by_name(o.preset);
    if (!std::isnan(o.dropout)) config.dropout = o.dropout;
    params = init_params<float>(config, o.seed);
    adam = AdamState{zeros_like(params), zeros_like(params), 0};
  }

  ensure_dir(o.out);
  TrainConfig cfg;
  cfg.lr = o.lr;
  cfg.batch_size = o.batch;
  cfg.epochs = o.epochs;
  cfg.mask_rate = o.mask_rate;
  cfg.seed = o.seed;
  cfg.policy = mask_policy_from_name(o.policy);
  cfg.checkpoint_every = o.checkpoint_every;
  cfg.checkpoint_dir = o.out;

  const TrainResult result = train_model(
      params, adam, start_epoch, train, vocab, cfg,
      [](std::uint64_t epoch, double loss) {
        std::cout << "epoch " << epoch << "  mean_loss " << loss << std::endl;
      });

  std::string curve = "epoch,mean_loss\n";
  for (const auto& [epoch, loss] : result.loss_curve) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%llu,%.17g\n",
                  static_cast<unsigned long long>(epoch), loss);
    curve += buf;
  }
  write_file(o.out + "/loss_curve.csv", curve);

  Manifest m;
  add_common_manifest(m, "train");
  m.set("data", o.data);
  m.set("resume", o.resume.empty() ? "-" : o.resume);
  m.set("model_preset", o.resume.empty() ? o.preset : "(from checkpoint)");
  m.set("hidden", params.config.hidden);
  m.set("layers", params.config.layers);
  m.set("heads", params.config.heads);
  m.set("ffn", params.config.ffn());
  m.set("vocab_size", params.config.vocab_size);
  m.set("dropout", params.config.dropout);
  m.set("epochs", static_cast<std::uint64_t>(o.epochs));
  m.set("lr", o.lr);
  m.set("batch", static_cast<std::uint64_t>(o.batch));
  m.set("mask_rate", o.mask_rate);
  m.set("mask_policy", o.policy);
  m.set("checkpoint_every", static_cast<std::uint64_t>(o.checkpoint_every));
  m.set("seed", o.seed);
  m.set("vocab_hash", vocab.hash());
  m.set("train_rows", static_cast<std::uint64_t>(train.n_rows()));
  m.set("final_checkpoint", result.checkpoint_paths.empty()
                                ? "-"
                                : result.checkpoint_paths.back());
  m.write(o.out + "/manifest.txt");
  return 0;
}

// ---- impute ----

struct ImputeOpts {
  std::string model, input, stats, out;
  std::string marker;
  bool no_restrict = false;
};

int run_impute(const ImputeOpts& o) {
  const Vocabulary vocab = Vocabulary::build();
  const Checkpoint ckpt = load_checkpoint(o.model, vocab.hash());
  const auto [stats, stat_names] = load_stats_csv(o.stats);
  const CsvWithMissing data = load_csv_with_missing(o.input, o.marker);
  if (data.table.column_names != stat_names)
    throw data_error("stats columns do not match the input table");

  Manifest m;
  add_common_manifest(m, "impute");
  m.set("model", o.model);
  m.set("input", o.input);
  m.set("stats", o.stats);
  m.set("missing_marker", o.marker.empty() ? "(empty cell)" : o.marker);
  m.set("restrict_argmax", !o.no_restrict);
  m.set("missing_cells", static_cast<std::uint64_t>(data.missing.count));

  std::string report = "row,column,token_id,token,normalized,value\n";
  if (data.missing.count == 0) {
    // untouched input passes through byte for byte
    write_file(o.out, read_file(o.input));
  } else {
    const Table norm = normalize(data.table, stats);
    Imputer imputer(ckpt.params, vocab, !o.no_restrict);
    const std::vector<CellFill> fills = imputer.impute_normalized(norm.rows);

    std::map<std::pair<std::size_t, std::size_t>, const CellFill*> by_cell;
    for (const auto& f : fills) by_cell[{f.row, f.col}] = &f;

    std::string out_csv;
    for (std::size_t c = 0; c < data.table.n_columns(); ++c) {
      if (c) out_csv += ',';
      out_csv += data.table.column_names[c];
    }
    out_csv += '\n';
    for (std::size_t r = 0; r < data.table.n_rows(); ++r) {
      for (std::size_t c = 0; c < data.table.n_columns(); ++c) {
        if (c) out_csv += ',';
        auto it = by_cell.find({r, c});
        if (it == by_cell.end()) {
          out_csv += data.raw_cells[r][c];
          continue;
        }
        const CellFill& f = *it->second;
        const double value =
            std::isnan(f.normalized)
                ? f.normalized
                : denormalize(f.normalized, stats.min[c], stats.max[c]);
        out_csv += fmt_shortest(value);
        report += std::to_string(r) + "," + data.table.column_names[c] + "," +
                  std::to_string(f.token) + "," + vocab.token_of(f.token) +
                  "," + fmt_shortest(f.normalized) + "," +
                  fmt_shortest(value) + "\n";
      }
      out_csv += '\n';
    }
    write_file(o.out, out_csv);
  }
  write_file(o.out + ".report.csv", report);
  m.set("out", o.out);
  m.set("report", o.out + ".report.csv");
  m.write(o.out + ".manifest.txt");

  std::cout << "filled " << data.missing.count << " cells into " << o.out
            << "\n";
  return 0;
}

// ---- evaluate ----

struct EvaluateOpts {
  std::vector<std::string> checkpoints;
  std::string data, out, stats;
  std::size_t column = 0;
  std::size_t stride = 25;
  bool denormalized = false;
};

int run_evaluate(const EvaluateOpts& o) {
  const Vocabulary vocab = Vocabulary::build();
  const Table val = load_csv(o.data);
  ColumnStats stats;
  if (!o.stats.empty()) stats = load_stats_csv(o.stats).first;

  const AblationReport report =
      ablate_column(o.checkpoints, vocab, val, o.column, o.stride,
                    o.denormalized, o.stats.empty() ? nullptr : &stats);

  ensure_dir(o.out);
  export_heatmap(report, o.out + "/heatmap.csv", o.out + "/heatmap.pgm",
                 o.out + "/heatmap_index.csv");

  std::string summary = "epoch,mean_abs_error\n";
  for (std::size_t e = 0; e < report.epochs.size(); ++e) {
    double sum = 0;
    for (double v : report.errors[e]) sum += v;
    summary += std::to_string(report.epochs[e]) + "," +
               fmt_shortest(sum / static_cast<double>(report.errors[e].size())) +
               "\n";
  }
  double base_sum = 0;
  for (double v : report.baseline) base_sum += v;
  summary += "baseline," +
             fmt_shortest(base_sum / static_cast<double>(report.baseline.size())) +
             "\n";
  write_file(o.out + "/summary.csv", summary);

  Manifest m;
  add_common_manifest(m, "evaluate");
  m.set("data", o.data);
  m.set("column", static_cast<std::uint64_t>(o.column));
  m.set("stride", static_cast<std::uint64_t>(o.stride));
  m.set("checkpoints", std::to_string(o.checkpoints.size()));
  m.set("sampled_rows", static_cast<std::uint64_t>(report.row_ids.size()));
  m.set("units", o.denormalized ? "source" : "normalized");
  m.set("vocab_hash", vocab.hash());
  m.write(o.out + "/manifest.txt");

  std::cout << summary;
  return 0;
}

// ---- flops ----

struct FlopsOpts {
  std::string preset = "paper";
  std::int64_t seq_len = 0;
  std::int64_t batch = 1;
  std::string csv;
};

int run_flops(const FlopsOpts& o) {
  const ModelConfig config = preset_by_name(o.preset);
  const std::int64_t seq = o.seq_len > 0 ? o.seq_len : preset_default_seq(o.preset);
  const ParamBreakdown params = count_params(config);
  const MacBreakdown macs = count_macs(config, seq, o.batch);
  std::cout << flops_report_text(params, macs, o.preset == "paper");
  if (!o.csv.empty()) write_kv_csv(flops_report_kv(params, macs), o.csv);
  return 0;
}

// ---- carbon ----

struct CarbonOpts {
  double kwh = 0.0;
  double intensity = 541.33;
  double multiplier = 1.0;
  std::string csv;
};

int run_carbon(const CarbonOpts& o) {
  const CarbonReport r = carbon(o.kwh, o.intensity, o.multiplier);
  std::cout << carbon_report_text(r);
  if (!o.csv.empty()) write_kv_csv(carbon_report_kv(r), o.csv);
  return 0;
}

}  // namespace
}  // namespace tabmlm

int main(int argc, char** argv) {
  using namespace tabmlm;

  CLI::App app{"masked-language-model imputation for numeric tables"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  std::string kernels_choice = "auto";
  app.add_option("--kernels", kernels_choice,
                 "force a compute backend (auto, scalar, avx2)")
      ->check(CLI::IsMember({"auto", "scalar", "avx2"}));

  std::function<int()> run;

  PrepareOpts prep;
  auto* sp = app.add_subcommand("prepare",
                                "split, normalize, and tokenize a CSV table");
  sp->add_option("--input", prep.input, "raw CSV with a header row")
      ->required()
      ->check(CLI::ExistingFile);
  sp->add_option("--train-rows", prep.train_rows, "rows in the training split")
      ->required()
      ->check(CLI::PositiveNumber);
  sp->add_option("--seed", prep.seed, "shuffle seed");
  sp->add_option("--out", prep.out, "output directory")->required();
  sp->set_config("--config", "", "key=value config file");
  sp->callback([&] { run = [&] { return run_prepare(prep); }; });

  TrainOpts tr;
  auto* st = app.add_subcommand("train", "train the masked-LM imputer");
  st->add_option("--data", tr.data,
                 "prepare output directory (train.csv + vocab.txt)")
      ->required()
      ->check(CLI::ExistingDirectory);
  st->add_option("--out", tr.out, "output directory for checkpoints")
      ->required();
  st->add_option("--epochs", tr.epochs, "epochs to train")
      ->required()
      ->check(CLI::PositiveNumber);
  st->add_option("--lr", tr.lr, "Adam learning rate")
      ->capture_default_str();
  st->add_option("--batch", tr.batch, "batch size")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  st->add_option("--mask-rate", tr.mask_rate, "fraction of candidates masked")
      ->capture_default_str();
  st->add_option("--mask-policy", tr.policy,
                 "value-tokens-only or any-token")
      ->capture_default_str()
      ->check(CLI::IsMember({"value-tokens-only", "any-token"}));
  st->add_option("--checkpoint-every", tr.checkpoint_every,
                 "write a checkpoint every K epochs (0 = final only)")
      ->capture_default_str();
  st->add_option("--model-preset", tr.preset, "paper, desk, or tiny")
      ->capture_default_str()
      ->check(CLI::IsMember({"paper", "desk", "tiny"}));
  st->add_option("--seed", tr.seed, "training seed")
      ->capture_default_str();
  st->add_option("--dropout", tr.dropout, "override the preset's dropout");
  st->add_option("--resume", tr.resume, "checkpoint to continue from")
      ->check(CLI::ExistingFile);
  st->set_config("--config", "", "key=value config file");
  st->callback([&] { run = [&] { return run_train(tr); }; });

  ImputeOpts im;
  auto* si = app.add_subcommand("impute", "fill missing cells of a CSV");
  si->add_option("--model", im.model, "trained checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  si->add_option("--input", im.input, "CSV with missing cells")
      ->required()
      ->check(CLI::ExistingFile);
  si->add_option("--stats", im.stats, "stats.csv from prepare")
      ->required()
      ->check(CLI::ExistingFile);
  si->add_option("--missing-marker", im.marker,
                 "cell text marking a missing value (empty cells and \"nan\" "
                 "always count)");
  si->add_option("--out", im.out, "filled CSV path")->required();
  si->add_flag("--no-restrict", im.no_restrict,
               "argmax over the whole vocabulary instead of value tokens");
  si->set_config("--config", "", "key=value config file");
  si->callback([&] { run = [&] { return run_impute(im); }; });

  EvaluateOpts ev;
  auto* se = app.add_subcommand(
      "evaluate", "column-ablation error matrix across checkpoints");
  se->add_option("--checkpoints", ev.checkpoints, "checkpoint files")
      ->required()
      ->check(CLI::ExistingFile);
  se->add_option("--data", ev.data, "normalized validation CSV from prepare")
      ->required()
      ->check(CLI::ExistingFile);
  se->add_option("--column", ev.column, "column index to ablate")->required();
  se->add_option("--stride", ev.stride, "sample every stride-th row")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  se->add_option("--out", ev.out, "output directory")->required();
  se->add_option("--stats", ev.stats, "stats.csv (needed for --denormalized)")
      ->check(CLI::ExistingFile);
  se->add_flag("--denormalized", ev.denormalized,
               "report errors in source units");
  se->set_config("--config", "", "key=value config file");
  se->callback([&] { run = [&] { return run_evaluate(ev); }; });

  FlopsOpts fl;
  auto* sf = app.add_subcommand("flops", "parameter and MAC/FLOP accounting");
  sf->add_option("--preset", fl.preset, "paper, desk, or tiny")
      ->capture_default_str()
      ->check(CLI::IsMember({"paper", "desk", "tiny"}));
  sf->add_option("--seq-len", fl.seq_len, "sequence length (0 = preset default)");
  sf->add_option("--batch", fl.batch, "batch size")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  sf->add_option("--csv", fl.csv, "also write key,value CSV here");
  sf->set_config("--config", "", "key=value config file");
  sf->callback([&] { run = [&] { return run_flops(fl); }; });

  CarbonOpts ca;
  auto* sc = app.add_subcommand("carbon", "training carbon footprint");
  sc->add_option("--kwh", ca.kwh, "energy consumed")->required();
  sc->add_option("--intensity", ca.intensity, "g CO2 per kWh")
      ->capture_default_str();
  sc->add_option("--multiplier", ca.multiplier, "datacenter overhead factor")
      ->capture_default_str();
  sc->add_option("--csv", ca.csv, "also write key,value CSV here");
  sc->set_config("--config", "", "key=value config file");
  sc->callback([&] { run = [&] { return run_carbon(ca); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (kernels_choice == "scalar") kernels::set_backend(kernels::Backend::scalar);
    if (kernels_choice == "avx2") kernels::set_backend(kernels::Backend::avx2);
    return run ? run() : 1;
  } catch (const usage_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const data_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const io_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const checkpoint_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 5;
  }
}
