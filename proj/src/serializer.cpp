#include "tabmlm/serializer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>

#include "tabmlm/common.hpp"
#include "tabmlm/table.hpp"

namespace tabmlm {

SerializedRow serialize_row(const std::vector<double>& values,
                            const std::vector<std::size_t>& masked_columns) {
  if (values.empty() || values.size() > kMaxColumns)
    throw data_error("row has " + std::to_string(values.size()) +
                     " columns; supported range is 1.." +
                     std::to_string(kMaxColumns));

  SerializedRow out;
  out.masked_columns = masked_columns;
  std::sort(out.masked_columns.begin(), out.masked_columns.end());
  for (std::size_t m : out.masked_columns)
    if (m >= values.size())
      throw data_error("masked column " + std::to_string(m) + " out of range");

  auto is_masked = [&](std::size_t c) {
    return std::binary_search(out.masked_columns.begin(),
                              out.masked_columns.end(), c);
  };

  char buf[32];
  out.value_slots.reserve(values.size());
  for (std::size_t c = 0; c < values.size(); ++c) {
    if (c) out.text += ", ";
    std::snprintf(buf, sizeof buf, "column %zu: 0.", c);
    out.text += buf;
    ValueSlot slot{out.text.size(), 0};
    if (is_masked(c)) {
      out.text += "[MASK]";
      slot.length = 6;
    } else {
      if (std::isnan(values[c]))
        throw data_error("column " + std::to_string(c) +
                         " is missing but not masked");
      std::snprintf(buf, sizeof buf, "%04d", quantize_unit(values[c]));
      out.text += buf;
      slot.length = 4;
    }
    out.value_slots.push_back(slot);
  }
  return out;
}

std::vector<double> parse_row(const std::string& text,
                              std::size_t expect_columns) {
  std::vector<double> out;
  const char* p = text.c_str();
  auto fail = [&](const std::string& what) {
    throw data_error("cannot parse serialized row (" + what + "): " + text);
  };
  auto eat = [&](const char* lit) {
    for (const char* q = lit; *q; ++q, ++p)
      if (*p != *q) fail(std::string("expected \"") + lit + "\"");
  };

  for (std::size_t c = 0;; ++c) {
    if (c) eat(", ");
    eat("column ");
    char* end = nullptr;
    unsigned long idx = std::strtoul(p, &end, 10);
    if (end == p || idx != c) fail("column index");
    p = end;
    eat(": 0.");
    if (std::strncmp(p, "[MASK]", 6) == 0) {
      out.push_back(std::numeric_limits<double>::quiet_NaN());
      p += 6;
    } else {
      int k = 0;
      for (int d = 0; d < 4; ++d, ++p) {
        if (*p < '0' || *p > '9') fail("four value digits");
        k = k * 10 + (*p - '0');
      }
      out.push_back(k / 1e4);
    }
    if (*p == '\0') break;
  }
  if (out.size() != expect_columns)
    throw data_error("serialized row has " + std::to_string(out.size()) +
                     " columns, expected " + std::to_string(expect_columns));
  return out;
}

}  // namespace tabmlm
