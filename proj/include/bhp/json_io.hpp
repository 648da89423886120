#pragma once

#include <iosfwd>

#include <json.hpp>

namespace bhp {

/// Pretty-prints a document with floating-point numbers in 17-significant-digit
/// form (non-finite values become null). Object keys keep insertion order.
void write_json(std::ostream& out, const nlohmann::ordered_json& doc, int indent = 2);

}  // namespace bhp
