#include "tabmlm/cost_meter.hpp"

#include <charconv>
#include <cstdio>

#include "tabmlm/common.hpp"

namespace tabmlm {
namespace {

std::string fmt_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

std::string with_commas(std::int64_t v) {
  std::string digits = std::to_string(v);
  std::string out;
  const std::size_t first = digits.size() % 3 == 0 ? 3 : digits.size() % 3;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i != 0 && (i - first) % 3 == 0 && i >= first) out += ',';
    out += digits[i];
  }
  return out;
}

}  // namespace

ParamBreakdown count_params(const ModelConfig& config) {
  config.validate();
  const std::int64_t V = config.vocab_size, P = config.max_positions,
                     H = config.hidden, F = config.ffn(), L = config.layers,
                     T = config.type_vocab;
  ParamBreakdown b;
  b.embeddings = V * H + P * H + T * H;
  b.per_layer = 4 * (H * H + H)    // q, k, v, output projections
                + (H * F + F)      // FFN expand
                + (F * H + H)      // FFN contract
                + 2 * (2 * H);     // two layer-norms
  b.encoder = L * b.per_layer;
  b.head = (H * H + H) + 2 * H + V;  // transform, LN, tied-decoder bias
  b.total = b.embeddings + b.encoder + b.head;
  return b;
}

MacBreakdown count_macs(const ModelConfig& config, std::int64_t seq_len,
                        std::int64_t batch) {
  config.validate();
  if (seq_len < 1 || seq_len > config.max_seq_len())
    throw data_error("seq_len " + std::to_string(seq_len) +
                     " outside [1, " + std::to_string(config.max_seq_len()) +
                     "]");
  if (batch < 1) throw data_error("batch must be positive");
  const std::int64_t S = seq_len, H = config.hidden, F = config.ffn(),
                     L = config.layers, V = config.vocab_size,
                     A = config.heads, B = batch;
  MacBreakdown m;
  m.seq_len = S;
  m.batch = B;
  m.qkv_and_out_proj = B * L * 4 * S * H * H;
  m.attention = B * L * 2 * S * S * H;
  m.ffn = B * L * 2 * S * H * F;
  m.head_transform = B * S * H * H;
  m.decoder = B * S * V * H;
  m.forward_macs = m.qkv_and_out_proj + m.attention + m.ffn +
                   m.head_transform + m.decoder;
  m.forward_flops = 2 * m.forward_macs;
  m.train_step_macs = 3 * m.forward_macs;
  // Elementwise work, not MACs: softmax (~5 flops/score), layer-norms
  // (~8 flops/element, 2 per layer plus the head), GELU (~11 flops/element).
  m.other_ops_flops = B * (L * (5 * A * S * S + 2 * 8 * S * H + 11 * S * F) +
                           8 * S * H + 11 * S * H);
  return m;
}

CarbonReport carbon(double energy_kwh, double intensity_g_per_kwh,
                    double multiplier) {
  if (energy_kwh < 0 || intensity_g_per_kwh < 0 || multiplier < 0)
    throw data_error("carbon inputs must be non-negative");
  CarbonReport r;
  r.energy_kwh = energy_kwh;
  r.intensity_g_per_kwh = intensity_g_per_kwh;
  r.multiplier = multiplier;
  r.grams = energy_kwh * intensity_g_per_kwh * multiplier;
  r.car_km = r.grams / kGramsPerCarKm;
  return r;
}

std::string flops_report_text(const ParamBreakdown& p, const MacBreakdown& m,
                              bool with_reference_comparison) {
  std::string out;
  out += "parameters\n";
  out += "  embeddings        " + with_commas(p.embeddings) + "\n";
  out += "  encoder           " + with_commas(p.encoder) + " (" +
         std::to_string(p.encoder / p.per_layer) + " x " +
         with_commas(p.per_layer) + ")\n";
  out += "  mlm head          " + with_commas(p.head) + "\n";
  out += "  total             " + with_commas(p.total) + "\n";
  out += "compute (batch " + std::to_string(m.batch) + ", seq " +
         std::to_string(m.seq_len) + ")\n";
  out += "  qkv/out proj MACs " + with_commas(m.qkv_and_out_proj) + "\n";
  out += "  attention MACs    " + with_commas(m.attention) + "\n";
  out += "  ffn MACs          " + with_commas(m.ffn) + "\n";
  out += "  head MACs         " +
         with_commas(m.head_transform + m.decoder) + "\n";
  out += "  forward MACs      " + with_commas(m.forward_macs) + "\n";
  out += "  forward FLOPs     " + with_commas(m.forward_flops) +
         " (2 per MAC)\n";
  out += "  fwd+bwd MACs      " + with_commas(m.train_step_macs) +
         " (exactly 3x forward)\n";
  out += "  other ops (est.)  " + with_commas(m.other_ops_flops) +
         " FLOPs (softmax/LN/GELU, excluded from MACs)\n";
  if (with_reference_comparison) {
    out += "reference comparison\n";
    out += "  reference figures for this configuration: 1.16M trainable\n";
    out += "  parameters, 201 GMACs forward, 603 GMACs forward+backward,\n";
    out += "  402 TFLOPs.\n";
    out += "  note: the parameter and FLOP figures are inconsistent with the\n";
    out += "  architecture itself. A 768-hidden, 6-layer encoder carries tens\n";
    out += "  of millions of parameters (exact count above, verified by\n";
    out += "  tensor enumeration), and 2 x 201 GMACs is 402 GFLOPs, not\n";
    out += "  TFLOPs. The 603/201 = 3x forward+backward ratio is consistent\n";
    out += "  and is the cost model used here. Computed values above are the\n";
    out += "  closed forms, oracle-checked against the implementation.\n";
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> flops_report_kv(
    const ParamBreakdown& p, const MacBreakdown& m) {
  return {
      {"params_embeddings", std::to_string(p.embeddings)},
      {"params_per_layer", std::to_string(p.per_layer)},
      {"params_encoder", std::to_string(p.encoder)},
      {"params_head", std::to_string(p.head)},
      {"params_total", std::to_string(p.total)},
      {"seq_len", std::to_string(m.seq_len)},
      {"batch", std::to_string(m.batch)},
      {"macs_qkv_out_proj", std::to_string(m.qkv_and_out_proj)},
      {"macs_attention", std::to_string(m.attention)},
      {"macs_ffn", std::to_string(m.ffn)},
      {"macs_head_transform", std::to_string(m.head_transform)},
      {"macs_decoder", std::to_string(m.decoder)},
      {"macs_forward", std::to_string(m.forward_macs)},
      {"flops_forward", std::to_string(m.forward_flops)},
      {"macs_forward_backward", std::to_string(m.train_step_macs)},
      {"flops_other_ops_estimate", std::to_string(m.other_ops_flops)},
  };
}

std::string carbon_report_text(const CarbonReport& r) {
  std::string out;
  out += "energy            " + fmt_double(r.energy_kwh) + " kWh\n";
  out += "carbon intensity  " + fmt_double(r.intensity_g_per_kwh) +
         " g CO2/kWh\n";
  out += "multiplier        " + fmt_double(r.multiplier) + "\n";
  out += "emissions         " + fmt_double(r.grams) + " g CO2\n";
  out += "car equivalent    " + fmt_double(r.car_km) + " km (" +
         fmt_double(kGramsPerCarKm) + " g/km)\n";
  return out;
}

std::vector<std::pair<std::string, std::string>> carbon_report_kv(
    const CarbonReport& r) {
  return {
      {"energy_kwh", fmt_double(r.energy_kwh)},
      {"intensity_g_per_kwh", fmt_double(r.intensity_g_per_kwh)},
      {"multiplier", fmt_double(r.multiplier)},
      {"emissions_g", fmt_double(r.grams)},
      {"car_km", fmt_double(r.car_km)},
  };
}

void write_kv_csv(const std::vector<std::pair<std::string, std::string>>& kv,
                  const std::string& path) {
  std::string out = "key,value\n";
  for (const auto& [k, v] : kv) out += k + "," + v + "\n";
  write_file(path, out);
}

}  // namespace tabmlm
