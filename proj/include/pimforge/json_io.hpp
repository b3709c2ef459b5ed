#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "pimforge/error.hpp"

namespace pimforge {

using Json = nlohmann::ordered_json;

inline Json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

// Write-temp-then-rename so readers never observe a partial file.
inline void save_json_atomic(const Json& doc, const std::filesystem::path& path) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << doc.dump(2) << '\n';
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename to " + path.string() + " failed: " + ec.message());
}

inline const Json& require_field(const Json& obj, const std::string& key,
                                 const std::string& context) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(context + ": missing field \"" + key + "\"");
  return *it;
}

inline void require_format(const Json& doc, const std::string& expected,
                           const std::string& context) {
  const Json& fmt = require_field(doc, "format", context);
  if (!fmt.is_string() || fmt.get<std::string>() != expected) {
    throw ParseError(context + ": expected format \"" + expected + "\"");
  }
}

}  // namespace pimforge
