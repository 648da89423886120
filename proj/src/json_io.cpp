#include "bhp/json_io.hpp"

#include <cmath>
#include <ostream>
#include <string>

#include "bhp/format.hpp"

namespace bhp {
namespace {

void emit(std::ostream& out, const nlohmann::ordered_json& v, int indent, int depth) {
  const std::string pad(static_cast<std::size_t>(indent * (depth + 1)), ' ');
  const std::string close(static_cast<std::size_t>(indent * depth), ' ');
  switch (v.type()) {
    case nlohmann::ordered_json::value_t::object: {
      if (v.empty()) {
        out << "{}";
        return;
      }
      out << "{\n";
      bool first = true;
      for (auto it = v.begin(); it != v.end(); ++it) {
        if (!first) out << ",\n";
        first = false;
        out << pad << nlohmann::ordered_json(it.key()).dump() << ": ";
        emit(out, it.value(), indent, depth + 1);
      }
      out << '\n' << close << '}';
      return;
    }
    case nlohmann::ordered_json::value_t::array: {
      if (v.empty()) {
        out << "[]";
        return;
      }
      out << "[\n";
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (i > 0) out << ",\n";
        out << pad;
        emit(out, v[i], indent, depth + 1);
      }
      out << '\n' << close << ']';
      return;
    }
    case nlohmann::ordered_json::value_t::number_float: {
      const double d = v.get<double>();
      out << (std::isfinite(d) ? format_real(d) : std::string("null"));
      return;
    }
    default:
      out << v.dump();
  }
}

}  // namespace

void write_json(std::ostream& out, const nlohmann::ordered_json& doc, int indent) {
  emit(out, doc, indent, 0);
  out << '\n';
}

}  // namespace bhp
