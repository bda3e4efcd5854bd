// SPDX-License-Identifier: Apache-2.0
#include "dietweight/run_config.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>

#include "dietweight/error.hpp"

namespace dietweight {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

double to_double(const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError("expected a number, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_unsigned(const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("expected true or false, got '" + v + "'");
}

std::string format(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string format(bool v) { return v ? "true" : "false"; }

template <typename T>
std::string format_list(const std::vector<T>& values, const std::function<std::string(const T&)>& f) {
  std::string out;
  for (const auto& v : values) {
    if (!out.empty()) out += ",";
    out += f(v);
  }
  return out;
}

struct Key {
  const char* name;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;  // value, base dir
  std::function<std::string(const RunConfig&)> get;
};

std::string resolve_path(const std::string& value, const std::string& base) {
  if (value.empty() || base.empty()) return value;
  std::filesystem::path p(value);
  if (p.is_absolute()) return value;
  return (std::filesystem::path(base) / p).lexically_normal().string();
}

std::string slots_name(const std::array<bool, kMealChannelCount>& slots) {
  return InputLayout::with_slots(slots).name();
}

const std::vector<Key>& keys() {
  using R = RunConfig;
  using S = const std::string&;
  static const std::vector<Key> table{
      {"diary", [](R& c, S v, S b) { c.diary = resolve_path(v, b); }, [](const R& c) { return c.diary; }},
      {"canonical_map", [](R& c, S v, S b) { c.canonical_map = resolve_path(v, b); },
       [](const R& c) { return c.canonical_map; }},
      {"seed", [](R& c, S v, S) { c.pipeline.seed = to_unsigned(v); },
       [](const R& c) { return std::to_string(c.pipeline.seed); }},
      {"setting", [](R& c, S v, S) { c.pipeline.setting = parse_setting(v); },
       [](const R& c) { return c.pipeline.setting.name(); }},
      {"model", [](R& c, S v, S) {
         if (v != "nlinear" && v != "itranslite") throw ConfigError("unknown model '" + v + "' (nlinear|itranslite)");
         c.pipeline.model.kind = v;
       },
       [](const R& c) { return c.pipeline.model.kind; }},
      {"nlinear.mode", [](R& c, S v, S) { c.pipeline.model.nlinear_mode = parse_nlinear_mode(v); },
       [](const R& c) { return to_string(c.pipeline.model.nlinear_mode); }},
      {"itrans.d_model", [](R& c, S v, S) { c.pipeline.model.itrans.d_model = to_unsigned(v); },
       [](const R& c) { return std::to_string(c.pipeline.model.itrans.d_model); }},
      {"itrans.heads", [](R& c, S v, S) { c.pipeline.model.itrans.heads = to_unsigned(v); },
       [](const R& c) { return std::to_string(c.pipeline.model.itrans.heads); }},
      {"itrans.layers", [](R& c, S v, S) { c.pipeline.model.itrans.layers = to_unsigned(v); },
       [](const R& c) { return std::to_string(c.pipeline.model.itrans.layers); }},
      {"itrans.d_ff", [](R& c, S v, S) { c.pipeline.model.itrans.d_ff = to_unsigned(v); },
       [](const R& c) { return std::to_string(c.pipeline.model.itrans.d_ff); }},
      {"itrans.anchor_last", [](R& c, S v, S) { c.pipeline.model.itrans.anchor_last = to_bool(v); },
       [](const R& c) { return format(c.pipeline.model.itrans.anchor_last); }},
      {"input", [](R& c, S v, S) {
         if (v == "diet") {
           c.pipeline.layout.use_meals = true;
         } else if (v == "weight_only") {
           c.pipeline.layout = InputLayout::weight_only();
         } else {
           throw ConfigError("unknown input '" + v + "' (diet|weight_only)");
         }
       },
       [](const R& c) { return std::string(c.pipeline.layout.use_meals ? "diet" : "weight_only"); }},
      {"meals", [](R& c, S v, S) { c.pipeline.layout.active_slots = parse_meal_subset(v); },
       [](const R& c) { return slots_name(c.pipeline.layout.active_slots); }},
      {"encoders", [](R& c, S v, S b) {
         c.pipeline.encoders.clear();
         for (const auto& item : split(v, ',')) {
           ItemEncoderConfig e = parse_encoder_config(item);
           e.table_path = resolve_path(e.table_path, b);
           c.pipeline.encoders.push_back(e);
         }
         if (c.pipeline.encoders.empty()) throw ConfigError("encoders must list at least one encoder");
       },
       [](const R& c) {
         return format_list<ItemEncoderConfig>(c.pipeline.encoders,
                                               [](const ItemEncoderConfig& e) { return e.descriptor(); });
       }},
      {"umrl.hidden", [](R& c, S v, S) { c.pipeline.umrl.hidden = to_unsigned(v); },
       [](const R& c) { return std::to_string(c.pipeline.umrl.hidden); }},
      {"umrl.shared_projector", [](R& c, S v, S) { c.pipeline.umrl.shared_projector = to_bool(v); },
       [](const R& c) { return format(c.pipeline.umrl.shared_projector); }},
      {"lambda", [](R& c, S v, S) { c.pipeline.loss.lambda = to_double(v); },
       [](const R& c) { return format(c.pipeline.loss.lambda); }},
      {"lambdas", [](R& c, S v, S) {
         c.lambdas.clear();
         for (const auto& item : split(v, ',')) c.lambdas.push_back(to_double(item));
       },
       [](const R& c) { return format_list<double>(c.lambdas, [](const double& x) { return format(x); }); }},
      {"batch_size", [](R& c, S v, S) { c.pipeline.train.batch_size = to_unsigned(v); },
       [](const R& c) { return std::to_string(c.pipeline.train.batch_size); }},
      {"learning_rate", [](R& c, S v, S) { c.pipeline.train.learning_rate = to_double(v); },
       [](const R& c) { return format(c.pipeline.train.learning_rate); }},
      {"lr_decay", [](R& c, S v, S) { c.pipeline.train.lr_decay = to_double(v); },
       [](const R& c) { return format(c.pipeline.train.lr_decay); }},
      {"patience", [](R& c, S v, S) { c.pipeline.train.patience = to_unsigned(v); },
       [](const R& c) { return std::to_string(c.pipeline.train.patience); }},
      {"max_epochs", [](R& c, S v, S) { c.pipeline.train.max_epochs = to_unsigned(v); },
       [](const R& c) { return std::to_string(c.pipeline.train.max_epochs); }},
      {"rollout", [](R& c, S v, S) { c.pipeline.feedback = parse_feedback_mode(v); },
       [](const R& c) { return to_string(c.pipeline.feedback); }},
      {"min_count", [](R& c, S v, S) { c.pipeline.min_count = to_unsigned(v); },
       [](const R& c) { return std::to_string(c.pipeline.min_count); }},
      {"synth.participants", [](R& c, S v, S) { c.synth.participants = to_unsigned(v); },
       [](const R& c) { return std::to_string(c.synth.participants); }},
      {"synth.days", [](R& c, S v, S) { c.synth.days = to_unsigned(v); },
       [](const R& c) { return std::to_string(c.synth.days); }},
      {"synth.days_max", [](R& c, S v, S) { c.synth.days_max = to_unsigned(v); },
       [](const R& c) { return std::to_string(c.synth.days_max); }},
      {"synth.vocab_size", [](R& c, S v, S) { c.synth.vocab_size = to_unsigned(v); },
       [](const R& c) { return std::to_string(c.synth.vocab_size); }},
      {"synth.min_items", [](R& c, S v, S) { c.synth.min_items = to_unsigned(v); },
       [](const R& c) { return std::to_string(c.synth.min_items); }},
      {"synth.max_items", [](R& c, S v, S) { c.synth.max_items = to_unsigned(v); },
       [](const R& c) { return std::to_string(c.synth.max_items); }},
      {"synth.sigma", [](R& c, S v, S) { c.synth.sigma = to_double(v); },
       [](const R& c) { return format(c.synth.sigma); }},
      {"synth.tdee_mean", [](R& c, S v, S) { c.synth.tdee_mean = to_double(v); },
       [](const R& c) { return format(c.synth.tdee_mean); }},
      {"synth.tdee_sd", [](R& c, S v, S) { c.synth.tdee_sd = to_double(v); },
       [](const R& c) { return format(c.synth.tdee_sd); }},
      {"synth.kcal_per_kg", [](R& c, S v, S) { c.synth.kcal_per_kg = to_double(v); },
       [](const R& c) { return format(c.synth.kcal_per_kg); }},
  };
  return table;
}

const Key* find_key(const std::string& name) {
  for (const auto& k : keys()) {
    if (name == k.name) return &k;
  }
  return nullptr;
}

}  // namespace

ItemEncoderConfig parse_encoder_config(const std::string& text) {
  const auto first = text.find(':');
  const auto second = first == std::string::npos ? std::string::npos : text.find(':', first + 1);
  if (second == std::string::npos) {
    throw ConfigError("encoder '" + text + "' is not modality:hashed_bag:<dim> or modality:table:<path>");
  }
  ItemEncoderConfig e;
  try {
    e.modality = parse_modality(text.substr(0, first));
  } catch (const Error&) {
    throw ConfigError("encoder '" + text + "' has unknown modality");
  }
  const std::string kind = text.substr(first + 1, second - first - 1);
  const std::string arg = text.substr(second + 1);
  if (kind == "hashed_bag") {
    e.kind = EncoderKind::HashedBag;
    e.dim = to_unsigned(arg);
    if (e.dim == 0) throw ConfigError("hashed_bag dimension must be positive");
  } else if (kind == "table") {
    if (arg.empty()) throw ConfigError("table encoder needs a path");
    e.kind = EncoderKind::EmbeddingTable;
    e.table_path = arg;
  } else {
    throw ConfigError("unknown encoder kind '" + kind + "' (hashed_bag|table)");
  }
  return e;
}

std::array<bool, kMealChannelCount> parse_meal_subset(const std::string& text) {
  std::array<bool, kMealChannelCount> slots{false, false, false};
  if (text == "none") return slots;
  for (const auto& part : split(text, '+')) {
    std::size_t s = 0;
    if (part == "B") {
      s = 0;
    } else if (part == "L") {
      s = 1;
    } else if (part == "S") {
      s = 2;
    } else {
      throw ConfigError("meal subset '" + text + "' must combine B, L, S with '+' or be 'none'");
    }
    if (slots[s]) throw ConfigError("meal subset '" + text + "' repeats " + part);
    slots[s] = true;
  }
  return slots;
}

RunConfig RunConfig::parse(std::istream& in, const std::string& base_dir) {
  RunConfig config;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto eq = text.find('=');
    const std::string where = "config line " + std::to_string(line_no) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    const Key* k = find_key(key);
    if (!k) throw ConfigError(where + "unknown key '" + key + "'");
    try {
      k->set(config, value, base_dir);
    } catch (const Error& e) {
      throw ConfigError(where + key + ": " + e.what());
    }
  }
  config.pipeline.loss.validate();
  config.pipeline.train.validate();
  for (double l : config.lambdas) LossConfig{l}.validate();
  config.synth.seed = config.pipeline.seed;
  config.synth.validate();
  return config;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  const auto parent = std::filesystem::path(path).parent_path();
  return parse(in, parent.empty() ? std::string(".") : parent.string());
}

void RunConfig::write_resolved(std::ostream& out) const {
  for (const auto& k : keys()) out << k.name << " = " << k.get(*this) << '\n';
}

}  // namespace dietweight
