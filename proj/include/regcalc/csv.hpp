#pragma once

#include <cstdio>
#include <ostream>
#include <string>
#include <string_view>
#include <type_traits>

namespace regcalc::csv {

/// Double with 17 significant digits (round-trips exactly). Relies on the
/// process staying in the "C" numeric locale.
inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Writes one comma-separated row terminated by LF.
template <class... Cells>
void row(std::ostream& out, const Cells&... cells) {
  bool first = true;
  auto put = [&](const auto& c) {
    if (!first) out << ',';
    first = false;
    if constexpr (std::is_arithmetic_v<std::decay_t<decltype(c)>> &&
                  !std::is_same_v<std::decay_t<decltype(c)>, bool>) {
      if constexpr (std::is_floating_point_v<std::decay_t<decltype(c)>>) {
        out << num(c);
      } else {
        out << c;
      }
    } else if constexpr (std::is_same_v<std::decay_t<decltype(c)>, bool>) {
      out << (c ? "true" : "false");
    } else {
      out << std::string_view(c);
    }
  };
  (put(cells), ...);
  out << '\n';
}

}  // namespace regcalc::csv
