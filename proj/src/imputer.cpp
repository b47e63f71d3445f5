#include "tabmlm/imputer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "tabmlm/checkpoint.hpp"
#include "tabmlm/common.hpp"
#include "tabmlm/serializer.hpp"
#include "tabmlm/trainer.hpp"

namespace tabmlm {

Imputer::Imputer(const Parameters& params, const Vocabulary& vocab,
                 bool restrict_to_values, std::size_t batch_rows)
    : params_(params),
      vocab_(vocab),
      restrict_(restrict_to_values),
      batch_rows_(batch_rows == 0 ? 1 : batch_rows) {
  params_.config.validate();
  if (params_.config.vocab_size < static_cast<std::int64_t>(vocab.size()))
    throw data_error("model vocab smaller than the tokenizer vocabulary");
}

std::vector<CellFill> Imputer::impute_normalized(
    const std::vector<std::vector<double>>& rows) {
  std::vector<CellFill> fills;
  if (rows.empty()) return fills;
  const std::size_t n_cols = rows[0].size();
  const std::size_t seq_len = row_seq_len(n_cols);
  const std::int64_t V = params_.config.vocab_size;

  struct Pending {
    std::size_t row;
    std::vector<std::size_t> missing;  // ascending columns
    TokenTriple triple;
    std::vector<std::int32_t> positions;  // token index per missing column
  };

  std::vector<Pending> batch;
  auto flush = [&] {
    if (batch.empty()) return;
    std::vector<const TokenTriple*> ptrs;
    std::vector<std::vector<std::int32_t>> positions;
    for (const auto& p : batch) {
      ptrs.push_back(&p.triple);
      positions.push_back(p.positions);
    }
    const std::vector<float> logits = runner_.logits_at(params_, ptrs, positions);
    std::size_t out_row = 0;
    for (const auto& p : batch) {
      for (std::size_t j = 0; j < p.missing.size(); ++j, ++out_row) {
        const float* row_logits = logits.data() + out_row * V;
        std::int64_t best;
        if (restrict_) {
          best = kFirstValueId;
          for (std::int64_t v = kFirstValueId; v <= kLastValueId; ++v)
            if (row_logits[v] > row_logits[best]) best = v;
        } else {
          best = 0;
          for (std::int64_t v = 1; v < V; ++v)
            if (row_logits[v] > row_logits[best]) best = v;
        }
        CellFill fill;
        fill.row = p.row;
        fill.col = p.missing[j];
        fill.token = static_cast<TokenId>(best);
        fill.normalized = (best >= kFirstValueId && best <= kLastValueId)
                              ? static_cast<double>(best - kFirstValueId) / 1e4
                              : std::numeric_limits<double>::quiet_NaN();
        fills.push_back(fill);
      }
    }
    batch.clear();
  };

  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != n_cols)
      throw data_error("ragged input: row " + std::to_string(r) + " has " +
                       std::to_string(row.size()) + " cells, expected " +
                       std::to_string(n_cols));
    std::vector<std::size_t> missing;
    for (std::size_t c = 0; c < n_cols; ++c)
      if (std::isnan(row[c])) missing.push_back(c);
    if (missing.empty()) continue;

    Pending p;
    p.row = r;
    p.missing = missing;
    const SerializedRow ser = serialize_row(row, missing);
    p.triple = make_triple(encode(ser.text, vocab_), seq_len);
    for (std::size_t i = 0; i < p.triple.input_ids.size(); ++i)
      if (p.triple.input_ids[i] == kMaskId)
        p.positions.push_back(static_cast<std::int32_t>(i));
    if (p.positions.size() != missing.size())
      throw data_error("masked slot count does not match missing cells");
    batch.push_back(std::move(p));
    if (batch.size() >= batch_rows_) flush();
  }
  flush();
  return fills;
}

AblationReport ablate_column(const std::vector<std::string>& checkpoint_paths,
                             const Vocabulary& vocab, const Table& val_norm,
                             std::size_t col, std::size_t stride,
                             bool denormalized, const ColumnStats* stats) {
  if (checkpoint_paths.empty()) throw data_error("no checkpoints to evaluate");
  if (val_norm.n_rows() == 0) throw data_error("empty validation set");
  if (col >= val_norm.n_columns())
    throw data_error("column " + std::to_string(col) + " out of range");
  if (stride == 0) throw data_error("stride must be positive");
  if (denormalized && !stats)
    throw data_error("denormalized errors require column stats");

  AblationReport report;
  report.column = col;
  report.denormalized = denormalized;
  const double span =
      denormalized ? stats->max[col] - stats->min[col] : 1.0;

  std::vector<std::vector<double>> masked_rows;
  std::vector<double> truth;
  for (std::size_t r = 0; r < val_norm.n_rows(); r += stride) {
    const auto& row = val_norm.rows[r];
    if (std::isnan(row[col]))
      throw data_error("validation row " + std::to_string(r) +
                       " is missing the target column");
    report.row_ids.push_back(r);
    truth.push_back(row[col]);
    auto masked = row;
    masked[col] = std::numeric_limits<double>::quiet_NaN();
    masked_rows.push_back(std::move(masked));
  }

  // Column-mean predictor over the same validation column.
  double mean = 0.0;
  for (const auto& row : val_norm.rows) mean += row[col];
  mean /= static_cast<double>(val_norm.n_rows());
  for (double t : truth)
    report.baseline.push_back(std::abs(mean - t) * span);

  struct EpochRow {
    std::uint64_t epoch;
    std::vector<double> errors;
  };
  std::vector<EpochRow> rows;
  for (const auto& path : checkpoint_paths) {
    const Checkpoint ckpt = load_checkpoint(path, vocab.hash());
    Imputer imputer(ckpt.params, vocab);
    const std::vector<CellFill> fills = imputer.impute_normalized(masked_rows);
    if (fills.size() != truth.size())
      throw data_error("imputation returned an unexpected cell count");
    EpochRow er;
    er.epoch = ckpt.epoch;
    for (std::size_t i = 0; i < fills.size(); ++i)
      er.errors.push_back(std::abs(fills[i].normalized - truth[i]) * span);
    rows.push_back(std::move(er));
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const EpochRow& a, const EpochRow& b) {
                     return a.epoch < b.epoch;
                   });
  for (auto& er : rows) {
    report.epochs.push_back(er.epoch);
    report.errors.push_back(std::move(er.errors));
  }
  return report;
}

void export_heatmap(const AblationReport& report, const std::string& csv_path,
                    const std::string& image_path,
                    const std::string& index_path) {
  if (report.errors.empty() || report.row_ids.empty())
    throw data_error("empty ablation report");

  std::string csv;
  char buf[64];
  double max_err = 0.0;
  for (const auto& row : report.errors) {
    if (row.size() != report.row_ids.size())
      throw data_error("ablation matrix does not match its row index");
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) csv += ',';
      std::snprintf(buf, sizeof buf, "%.17g", row[i]);
      csv += buf;
      max_err = std::max(max_err, row[i]);
    }
    csv += '\n';
  }
  write_file(csv_path, csv);

  std::string pgm = "P5\n" + std::to_string(report.row_ids.size()) + " " +
                    std::to_string(report.errors.size()) + "\n255\n";
  for (const auto& row : report.errors)
    for (double e : row) {
      const double scaled =
          max_err > 0.0 ? std::floor(255.0 * e / max_err + 0.5) : 0.0;
      pgm += static_cast<char>(static_cast<unsigned char>(scaled));
    }
  write_file(image_path, pgm);

  std::string index = "kind,id\n";
  index += "column," + std::to_string(report.column) + "\n";
  for (auto e : report.epochs) index += "epoch," + std::to_string(e) + "\n";
  for (auto r : report.row_ids) index += "row," + std::to_string(r) + "\n";
  write_file(index_path, index);
}

}  // namespace tabmlm
