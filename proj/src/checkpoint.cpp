#include "mpnn/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <system_error>

#include "mpnn/errors.hpp"

namespace mpnn {

namespace {
constexpr const char* kFormat = "mpnn-params";
constexpr int kVersion = 1;
}  // namespace

nlohmann::json params_to_json(const ParamStore& params) {
  nlohmann::json tensors = nlohmann::json::object();
  for (const auto& [name, t] : params) {
    tensors[name] = {{"shape", t.shape()}, {"values", t.values()}};
  }
  return {{"format", kFormat}, {"version", kVersion}, {"tensors", std::move(tensors)}};
}

ParamStore params_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || doc.value("format", "") != kFormat) {
    throw ContractError("not an mpnn-params document");
  }
  if (doc.value("version", 0) != kVersion) {
    throw ContractError("unsupported mpnn-params version");
  }
  const auto it = doc.find("tensors");
  if (it == doc.end() || !it->is_object()) throw ContractError("missing 'tensors' object");
  ParamStore params;
  for (const auto& [name, entry] : it->items()) {
    if (!entry.contains("shape") || !entry.contains("values")) {
      throw ContractError("tensor '" + name + "' lacks shape or values");
    }
    try {
      auto shape = entry.at("shape").get<Shape>();
      auto values = entry.at("values").get<std::vector<double>>();
      params.add(name, Tensor(std::move(shape), std::move(values)));
    } catch (const nlohmann::json::exception& e) {
      throw ContractError("tensor '" + name + "': " + e.what());
    } catch (const DimensionError& e) {
      throw ContractError("tensor '" + name + "': " + e.what());
    }
  }
  return params;
}

void save_params(const std::filesystem::path& path, const ParamStore& params) {
  write_file_atomic(path, params_to_json(params).dump() + "\n");
}

ParamStore load_params(const std::filesystem::path& path) {
  try {
    return params_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw ContractError(path.string() + ": " + e.what());
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) throw Error("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error("rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace mpnn
