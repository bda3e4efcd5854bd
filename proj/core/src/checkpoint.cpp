// SPDX-License-Identifier: Apache-2.0
#include "dietweight/checkpoint.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include "dietweight/error.hpp"

namespace dietweight {

using nlohmann::json;

void save_parameters(std::ostream& out, const std::vector<const Parameter*>& params) {
  for (const Parameter* p : params) {
    json line{{"name", p->name},
              {"shape", p->value.shape()},
              {"values", std::vector<double>(p->value.values().begin(), p->value.values().end())}};
    out << line.dump() << '\n';
  }
}

std::map<std::string, Tensor> load_parameters(std::istream& in) {
  std::map<std::string, Tensor> stored;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw IngestError("checkpoint line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.contains("name")) continue;
    try {
      auto shape = j.at("shape").get<Shape>();
      auto values = j.at("values").get<std::vector<double>>();
      stored.insert_or_assign(j.at("name").get<std::string>(), Tensor(std::move(shape), std::move(values)));
    } catch (const json::exception& e) {
      throw IngestError("checkpoint line " + std::to_string(line_no) + ": " + e.what());
    } catch (const ShapeError& e) {
      throw IngestError("checkpoint line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return stored;
}

void assign_parameters(const std::map<std::string, Tensor>& stored,
                       const std::vector<Parameter*>& params) {
  for (Parameter* p : params) {
    auto it = stored.find(p->name);
    if (it == stored.end()) throw IngestError("checkpoint lacks parameter " + p->name);
    if (!it->second.same_shape(p->value)) {
      throw IngestError("checkpoint parameter " + p->name + " has shape " +
                        shape_string(it->second.shape()) + ", expected " +
                        shape_string(p->value.shape()));
    }
    p->value = it->second;
    p->grad = Tensor(p->value.shape());
  }
}

void write_checkpoint(const std::string& path, const json& manifest,
                      const std::vector<const Parameter*>& params) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write checkpoint " + path);
  out << json{{"manifest", manifest}}.dump() << '\n';
  save_parameters(out, params);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint " + path);
  Checkpoint cp;
  std::string first;
  if (!std::getline(in, first)) throw IngestError("checkpoint " + path + " is empty");
  try {
    json j = json::parse(first);
    if (!j.contains("manifest")) throw IngestError("checkpoint " + path + " lacks a manifest line");
    cp.manifest = j["manifest"];
  } catch (const json::exception& e) {
    throw IngestError("checkpoint " + path + ": " + e.what());
  }
  cp.parameters = load_parameters(in);
  return cp;
}

}  // namespace dietweight
