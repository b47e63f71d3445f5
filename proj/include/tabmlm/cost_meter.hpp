#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tabmlm/model.hpp"

namespace tabmlm {

struct ParamBreakdown {
  std::int64_t embeddings = 0;  // token + position + type tables
  std::int64_t per_layer = 0;   // one encoder layer
  std::int64_t encoder = 0;     // layers * per_layer
  std::int64_t head = 0;        // MLM transform + LN + tied-decoder bias
  std::int64_t total = 0;
};

// Multiply-accumulate counts for `batch` sequences of `seq_len` tokens.
// Only matrix products count as MACs; softmax/LN/GELU work is the separate
// other_ops_flops estimate.
struct MacBreakdown {
  std::int64_t seq_len = 0, batch = 0;
  std::int64_t qkv_and_out_proj = 0;  // 4*S*H^2 per layer
  std::int64_t attention = 0;         // scores + weighted values, 2*S^2*H per layer
  std::int64_t ffn = 0;               // 2*S*H*F per layer
  std::int64_t head_transform = 0;    // S*H^2
  std::int64_t decoder = 0;           // S*V*H
  std::int64_t forward_macs = 0;      // sum of the above
  std::int64_t forward_flops = 0;     // exactly 2x MACs
  std::int64_t train_step_macs = 0;   // forward + backward, exactly 3x forward
  std::int64_t other_ops_flops = 0;   // estimate
};

ParamBreakdown count_params(const ModelConfig& config);
MacBreakdown count_macs(const ModelConfig& config, std::int64_t seq_len,
                        std::int64_t batch);

inline constexpr double kGramsPerCarKm = 107.512;

struct CarbonReport {
  double energy_kwh = 0.0;
  double intensity_g_per_kwh = 541.33;
  double multiplier = 1.0;
  double grams = 0.0;   // energy * intensity * multiplier
  double car_km = 0.0;  // grams / kGramsPerCarKm
};

CarbonReport carbon(double energy_kwh, double intensity_g_per_kwh,
                    double multiplier = 1.0);

// Human-readable report; with_reference_comparison appends the published
// reference figures for the full-size configuration next to the computed
// values, flagging where they disagree with the architecture itself.
std::string flops_report_text(const ParamBreakdown& params,
                              const MacBreakdown& macs,
                              bool with_reference_comparison);
std::vector<std::pair<std::string, std::string>> flops_report_kv(
    const ParamBreakdown& params, const MacBreakdown& macs);

std::string carbon_report_text(const CarbonReport& report);
std::vector<std::pair<std::string, std::string>> carbon_report_kv(
    const CarbonReport& report);

// "key,value" lines.
void write_kv_csv(const std::vector<std::pair<std::string, std::string>>& kv,
                  const std::string& path);

}  // namespace tabmlm
