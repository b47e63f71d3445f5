#include "tabmlm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <unordered_map>

#include "tabmlm/common.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

namespace tabmlm {
namespace {

constexpr char kMagic[4] = {'T', 'M', 'L', 'M'};
constexpr std::uint32_t kFormatVersion = 1;

template <class T>
void put(std::string& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_str(std::string& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;
  const std::string& path;

  template <class T>
  T get() {
    static_assert(std::is_trivially_copyable_v<T>);
    if (pos + sizeof(T) > buf.size())
      throw checkpoint_error(path + ": truncated checkpoint");
    T v;
    std::memcpy(&v, buf.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }

  std::string get_str() {
    const auto n = get<std::uint32_t>();
    if (pos + n > buf.size())
      throw checkpoint_error(path + ": truncated checkpoint");
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }

  void get_floats(float* dst, std::size_t n) {
    const std::size_t bytes = n * sizeof(float);
    if (pos + bytes > buf.size())
      throw checkpoint_error(path + ": truncated checkpoint");
    std::memcpy(dst, buf.data() + pos, bytes);
    pos += bytes;
  }
};

void put_tensor(std::string& out, const std::string& name,
                const Tensor<float>& t) {
  put_str(out, name);
  put<std::int64_t>(out, t.rows);
  put<std::int64_t>(out, t.cols);
  out.append(reinterpret_cast<const char*>(t.data()),
             static_cast<std::size_t>(t.size()) * sizeof(float));
}

void put_config(std::string& out, const ModelConfig& c) {
  put<std::int64_t>(out, c.vocab_size);
  put<std::int64_t>(out, c.max_positions);
  put<std::int64_t>(out, c.hidden);
  put<std::int64_t>(out, c.heads);
  put<std::int64_t>(out, c.layers);
  put<std::int64_t>(out, c.ffn_dim);
  put<std::int64_t>(out, c.type_vocab);
  put<double>(out, c.dropout);
  put<double>(out, c.ln_eps);
}

ModelConfig get_config(Reader& r) {
  ModelConfig c;
  c.vocab_size = r.get<std::int64_t>();
  c.max_positions = r.get<std::int64_t>();
  c.hidden = r.get<std::int64_t>();
  c.heads = r.get<std::int64_t>();
  c.layers = r.get<std::int64_t>();
  c.ffn_dim = r.get<std::int64_t>();
  c.type_vocab = r.get<std::int64_t>();
  c.dropout = r.get<double>();
  c.ln_eps = r.get<double>();
  return c;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kFormatVersion);
  put<std::uint64_t>(out, ckpt.vocab_hash);
  put_config(out, ckpt.params.config);
  put<std::uint64_t>(out, ckpt.epoch);
  put<double>(out, ckpt.meta.lr);
  put<std::uint64_t>(out, ckpt.meta.batch_size);
  put<double>(out, ckpt.meta.mask_rate);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(ckpt.meta.policy));
  put<std::uint64_t>(out, ckpt.meta.seed);

  const bool has_adam = ckpt.adam.has_value();
  put<std::uint8_t>(out, has_adam ? 1 : 0);
  put<std::uint64_t>(out, has_adam ? ckpt.adam->t : 0);

  std::uint32_t n_tensors = 0;
  ckpt.params.for_each(
      [&](const std::string&, const Tensor<float>&) { ++n_tensors; });
  put<std::uint32_t>(out, n_tensors * (has_adam ? 3 : 1));

  ckpt.params.for_each([&](const std::string& name, const Tensor<float>& t) {
    put_tensor(out, name, t);
  });
  if (has_adam) {
    ckpt.adam->m.for_each([&](const std::string& name, const Tensor<float>& t) {
      put_tensor(out, "adam_m." + name, t);
    });
    ckpt.adam->v.for_each([&](const std::string& name, const Tensor<float>& t) {
      put_tensor(out, "adam_v." + name, t);
    });
  }

  put<std::uint64_t>(out, fnv1a64(out));
  write_file(path, out);
}

Checkpoint load_checkpoint(const std::string& path,
                           std::uint64_t expected_vocab_hash) {
  const std::string buf = read_file(path);
  if (buf.size() < sizeof(kMagic) + sizeof(std::uint32_t) + sizeof(std::uint64_t))
    throw checkpoint_error(path + ": truncated checkpoint");

  const std::uint64_t stored_sum =
      [&] {
        std::uint64_t v;
        std::memcpy(&v, buf.data() + buf.size() - sizeof(v), sizeof(v));
        return v;
      }();
  const std::uint64_t actual_sum =
      fnv1a64(std::string_view(buf).substr(0, buf.size() - sizeof(std::uint64_t)));
  if (stored_sum != actual_sum)
    throw checkpoint_error(path + ": checksum mismatch (corrupt or truncated file)");

  Reader r{buf, 0, path};
  char magic[4];
  for (char& ch : magic) ch = r.get<char>();
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw checkpoint_error(path + ": not a model checkpoint");
  const auto version = r.get<std::uint32_t>();
  if (version != kFormatVersion)
    throw checkpoint_error(path + ": unsupported format version " +
                           std::to_string(version));

  Checkpoint ckpt;
  ckpt.vocab_hash = r.get<std::uint64_t>();
  if (ckpt.vocab_hash != expected_vocab_hash)
    throw checkpoint_error(
        path + ": vocabulary hash mismatch; the checkpoint was written with a "
               "different token vocabulary");

  const ModelConfig config = get_config(r);
  config.validate();
  ckpt.epoch = r.get<std::uint64_t>();
  ckpt.meta.lr = r.get<double>();
  ckpt.meta.batch_size = r.get<std::uint64_t>();
  ckpt.meta.mask_rate = r.get<double>();
  const auto policy_raw = r.get<std::uint8_t>();
  if (policy_raw > 1)
    throw checkpoint_error(path + ": unknown masking policy id " +
                           std::to_string(policy_raw));
  ckpt.meta.policy = static_cast<MaskPolicy>(policy_raw);
  ckpt.meta.seed = r.get<std::uint64_t>();

  const bool has_adam = r.get<std::uint8_t>() != 0;
  const std::uint64_t adam_t = r.get<std::uint64_t>();
  const auto n_tensors = r.get<std::uint32_t>();

  ckpt.params = make_zero_params<float>(config);
  if (has_adam)
    ckpt.adam = AdamState{make_zero_params<float>(config),
                          make_zero_params<float>(config), adam_t};

  std::unordered_map<std::string, Tensor<float>*> slots;
  ckpt.params.for_each([&](const std::string& name, Tensor<float>& t) {
    slots[name] = &t;
  });
  if (has_adam) {
    ckpt.adam->m.for_each([&](const std::string& name, Tensor<float>& t) {
      slots["adam_m." + name] = &t;
    });
    ckpt.adam->v.for_each([&](const std::string& name, Tensor<float>& t) {
      slots["adam_v." + name] = &t;
    });
  }
  if (n_tensors != slots.size())
    throw checkpoint_error(path + ": tensor count " + std::to_string(n_tensors) +
                           " does not match config (expected " +
                           std::to_string(slots.size()) + ")");

  std::size_t filled = 0;
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    const std::string name = r.get_str();
    const auto rows = r.get<std::int64_t>();
    const auto cols = r.get<std::int64_t>();
    auto it = slots.find(name);
    if (it == slots.end() || it->second == nullptr)
      throw checkpoint_error(path + ": unexpected or duplicate tensor \"" +
                             name + "\"");
    Tensor<float>& t = *it->second;
    if (t.rows != rows || t.cols != cols)
      throw checkpoint_error(path + ": tensor \"" + name + "\" has shape " +
                             std::to_string(rows) + "x" + std::to_string(cols) +
                             ", expected " + std::to_string(t.rows) + "x" +
                             std::to_string(t.cols));
    r.get_floats(t.data(), static_cast<std::size_t>(t.size()));
    it->second = nullptr;  // each tensor appears exactly once
    ++filled;
  }
  if (filled != slots.size())
    throw checkpoint_error(path + ": missing tensors");
  return ckpt;
}

}  // namespace tabmlm
