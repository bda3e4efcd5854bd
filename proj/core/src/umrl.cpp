// SPDX-License-Identifier: Apache-2.0
#include "dietweight/umrl.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "dietweight/error.hpp"
#include "dietweight/random.hpp"

namespace dietweight {

using nlohmann::json;

std::string_view to_string(Modality m) { return m == Modality::Image ? "image" : "text"; }

Modality parse_modality(std::string_view name) {
  if (name == "image") return Modality::Image;
  if (name == "text") return Modality::Text;
  throw ConfigError("unknown modality '" + std::string(name) + "' (expected image or text)");
}

// ---------------------------------------------------------------------------
// EmbeddingTable
// ---------------------------------------------------------------------------

EmbeddingTable::EmbeddingTable(std::size_t dim, Modality modality) : dim_(dim), modality_(modality) {
  if (dim_ == 0) throw IngestError("embedding dimension must be >= 1");
}

EmbeddingTable EmbeddingTable::parse(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::optional<EmbeddingTable> table;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "embedding table line " + std::to_string(line_no) + ": ";
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw IngestError(where + e.what());
    }
    try {
      if (!table) {
        if (!j.contains("dim") || !j.contains("modality")) {
          throw IngestError(where + "header must carry dim and modality");
        }
        const auto dim = j.at("dim").get<long long>();
        if (dim < 1) throw IngestError(where + "dim must be >= 1");
        table.emplace(static_cast<std::size_t>(dim), parse_modality(j.at("modality").get<std::string>()));
        continue;
      }
      table->insert(j.at("key").get<std::string>(), j.at("vector").get<std::vector<double>>());
    } catch (const json::exception& e) {
      throw IngestError(where + e.what());
    } catch (const IngestError& e) {
      const std::string msg = e.what();
      throw IngestError(msg.starts_with("embedding table line") ? msg : where + msg);
    } catch (const ConfigError& e) {
      throw IngestError(where + e.what());
    }
  }
  if (!table) throw IngestError("embedding table has no header line");
  return std::move(*table);
}

EmbeddingTable EmbeddingTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open embedding table " + path);
  return parse(in);
}

void EmbeddingTable::write(std::ostream& out) const {
  out << json{{"dim", dim_}, {"modality", std::string(to_string(modality_))}}.dump() << '\n';
  for (const auto& key : keys()) {
    out << json{{"key", key}, {"vector", entries_.at(key)}}.dump() << '\n';
  }
}

void EmbeddingTable::insert(std::string key, std::vector<double> vector) {
  if (vector.size() != dim_) {
    throw IngestError("embedding '" + key + "' has length " + std::to_string(vector.size()) +
                      ", table dim is " + std::to_string(dim_));
  }
  if (!std::all_of(vector.begin(), vector.end(), [](double v) { return std::isfinite(v); })) {
    throw IngestError("embedding '" + key + "' has non-finite entries");
  }
  if (!entries_.emplace(key, std::move(vector)).second) {
    throw IngestError("duplicate embedding key '" + key + "'");
  }
}

const std::vector<double>& EmbeddingTable::lookup(std::string_view key) const {
  auto it = entries_.find(std::string(key));
  if (it == entries_.end()) throw IngestError("missing embedding " + std::string(key));
  return it->second;
}

std::vector<std::string> EmbeddingTable::keys() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [k, v] : entries_) out.push_back(k);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<double> lookup_item(std::string_view key, const EmbeddingTable& table) {
  return table.lookup(key);
}

// ---------------------------------------------------------------------------
// Frozen encoding
// ---------------------------------------------------------------------------

std::vector<double> hash_embed(std::string_view token, std::size_t dim) {
  if (dim == 0) throw ConfigError("hash_embed dimension must be >= 1");
  const std::uint64_t h = fnv1a64(token);
  std::vector<double> out(dim, 0.0);
  out[h % dim] = (h >> 63) ? -1.0 : 1.0;
  return out;
}

std::vector<double> average_items(const std::vector<std::vector<double>>& vectors, std::size_t dim) {
  std::vector<double> mean(dim, 0.0);
  if (vectors.empty()) return mean;
  for (const auto& v : vectors) {
    if (v.size() != dim) {
      throw ShapeError("average_items: vector of length " + std::to_string(v.size()) +
                       " in a meal of dimension " + std::to_string(dim));
    }
    for (std::size_t i = 0; i < dim; ++i) mean[i] += v[i];
  }
  const double n = static_cast<double>(vectors.size());
  for (double& m : mean) m /= n;
  return mean;
}

std::vector<double> fuse_modalities(const std::vector<std::vector<double>>& reps) {
  if (reps.empty()) throw ConfigError("fuse_modalities needs at least one representation");
  const std::size_t width = reps.front().size();
  std::vector<double> out(width, 0.0);
  for (const auto& r : reps) {
    if (r.size() != width) {
      throw ShapeError("fuse_modalities: width " + std::to_string(r.size()) + " vs " +
                       std::to_string(width));
    }
    for (std::size_t i = 0; i < width; ++i) out[i] += r[i];
  }
  const double n = static_cast<double>(reps.size());
  for (double& v : out) v /= n;
  return out;
}

std::string ItemEncoderConfig::descriptor() const {
  std::string out = std::string(to_string(modality)) + ":";
  if (kind == EncoderKind::HashedBag) return out + "hashed_bag:" + std::to_string(dim);
  return out + "table:" + table_path;
}

ItemEncoder::ItemEncoder(EncoderKind kind, Modality modality, std::size_t dim,
                         std::shared_ptr<const EmbeddingTable> table)
    : kind_(kind), modality_(modality), dim_(dim), table_(std::move(table)) {
  if (dim_ == 0) throw ConfigError("encoder dimension must be >= 1");
}

ItemEncoder ItemEncoder::hashed_bag(Modality modality, std::size_t dim) {
  return ItemEncoder(EncoderKind::HashedBag, modality, dim, nullptr);
}

ItemEncoder ItemEncoder::from_table(std::shared_ptr<const EmbeddingTable> table) {
  const auto modality = table->modality();
  const auto dim = table->dim();
  return ItemEncoder(EncoderKind::EmbeddingTable, modality, dim, std::move(table));
}

ItemEncoder ItemEncoder::from_config(const ItemEncoderConfig& config) {
  if (config.kind == EncoderKind::HashedBag) return hashed_bag(config.modality, config.dim);
  auto table = std::make_shared<const EmbeddingTable>(EmbeddingTable::load(config.table_path));
  if (table->modality() != config.modality) {
    throw ConfigError("embedding table " + config.table_path + " holds " +
                      std::string(to_string(table->modality())) + " vectors, configured as " +
                      std::string(to_string(config.modality)));
  }
  return from_table(std::move(table));
}

std::string ItemEncoder::descriptor() const {
  std::string out = std::string(to_string(modality_)) + ":";
  if (kind_ == EncoderKind::HashedBag) return out + "hashed_bag:" + std::to_string(dim_);
  return out + "table:" + std::to_string(dim_);
}

std::vector<double> ItemEncoder::encode_item(std::string_view key) const {
  if (kind_ == EncoderKind::HashedBag) return hash_embed(key, dim_);
  return lookup_item(key, *table_);
}

const std::vector<std::string>& ItemEncoder::items(const MealLog& meal) const {
  return modality_ == Modality::Text ? meal.ingredients : meal.image_keys;
}

std::vector<double> ItemEncoder::meal_embedding(const MealLog& meal) const {
  std::vector<std::vector<double>> vectors;
  for (const auto& key : items(meal)) vectors.push_back(encode_item(key));
  return average_items(vectors, dim_);
}

// ---------------------------------------------------------------------------
// Projector
// ---------------------------------------------------------------------------

MealProjector::MealProjector(std::string name, std::size_t input_dim, std::size_t hidden,
                             std::size_t width)
    : input_dim_(input_dim),
      hidden_(hidden),
      width_(width),
      w1_(name + ".w1", Tensor(Shape{input_dim, hidden})),
      b1_(name + ".b1", Tensor(Shape{hidden})),
      w2_(name + ".w2", Tensor(Shape{hidden, width})),
      b2_(name + ".b2", Tensor(Shape{width})) {
  if (input_dim == 0 || hidden == 0 || width == 0) {
    throw ConfigError("projector " + name + " needs positive dimensions");
  }
}

void MealProjector::init(std::uint64_t seed) {
  SplitMix64 rng(seed);
  auto glorot = [&](Parameter& p, std::size_t fan_in, std::size_t fan_out) {
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& v : p.value.values()) v = (2.0 * rng.uniform() - 1.0) * s;
  };
  glorot(w1_, input_dim_, hidden_);
  glorot(w2_, hidden_, width_);
  b1_.value.fill(0.0);
  b2_.value.fill(0.0);
  for (Parameter* p : parameters()) p->grad = Tensor(p->value.shape());
}

Var MealProjector::forward(Tape& tape, Var items) {
  Var hidden = relu(broadcast_add(matmul(items, tape.parameter(w1_)), tape.parameter(b1_)));
  return broadcast_add(matmul(hidden, tape.parameter(w2_)), tape.parameter(b2_));
}

std::vector<double> MealProjector::evaluate(std::span<const double> embedding) {
  if (embedding.size() != input_dim_) {
    throw ShapeError("projector expects dimension " + std::to_string(input_dim_) + ", got " +
                     std::to_string(embedding.size()));
  }
  Tape tape;
  Var in = tape.constant(Tensor(Shape{1, input_dim_}, std::vector<double>(embedding.begin(), embedding.end())));
  const Tensor& out = forward(tape, in).value();
  return std::vector<double>(out.values().begin(), out.values().end());
}

std::vector<double> project_meal(std::span<const double> embedding, MealProjector& projector) {
  return projector.evaluate(embedding);
}

// ---------------------------------------------------------------------------
// MealEncoder
// ---------------------------------------------------------------------------

MealEncoder::MealEncoder(std::vector<ItemEncoder> encoders, UmrlOptions options, std::uint64_t seed)
    : encoders_(std::move(encoders)), options_(options) {
  if (encoders_.empty()) throw ConfigError("meal encoder needs at least one item encoder");
  for (std::size_t e = 0; e < encoders_.size(); ++e) {
    const std::string base = "umrl.e" + std::to_string(e);
    // Seeds depend on the encoder descriptor, not its position, so two
    // identical encoders start from identical projectors.
    const std::uint64_t enc_seed = derive_seed(seed, "umrl:" + encoders_[e].descriptor());
    if (options_.shared_projector) {
      projectors_.emplace_back(base + ".shared", encoders_[e].dim(), options_.hidden, 1);
      projectors_.back().init(enc_seed);
    } else {
      for (MealSlot slot : kMealSlots) {
        projectors_.emplace_back(base + "." + std::string(to_string(slot)), encoders_[e].dim(),
                                 options_.hidden, 1);
        projectors_.back().init(derive_seed(enc_seed, slot_index(slot) + 1));
      }
    }
  }
}

MealProjector& MealEncoder::projector(std::size_t encoder, MealSlot slot) {
  return options_.shared_projector ? projectors_[encoder]
                                   : projectors_[encoder * kMealChannelCount + slot_index(slot)];
}

std::vector<Parameter*> MealEncoder::parameters() {
  std::vector<Parameter*> out;
  for (auto& p : projectors_) {
    for (Parameter* q : p.parameters()) out.push_back(q);
  }
  return out;
}

PreparedMeals MealEncoder::prepare(std::span<const DiaryRecord> days) const {
  PreparedMeals prepared;
  prepared.per_encoder.resize(encoders_.size());
  for (std::size_t e = 0; e < encoders_.size(); ++e) {
    const std::size_t dim = encoders_[e].dim();
    for (MealSlot slot : kMealSlots) {
      Tensor rows(Shape{days.size(), dim});
      for (std::size_t d = 0; d < days.size(); ++d) {
        auto mean = encoders_[e].meal_embedding(days[d].meal(slot));
        std::copy(mean.begin(), mean.end(), rows.data() + d * dim);
      }
      prepared.per_encoder[e][slot_index(slot)] = std::move(rows);
    }
  }
  return prepared;
}

Var MealEncoder::forward(Tape& tape, const PreparedMeals& meals) {
  if (meals.per_encoder.size() != encoders_.size()) {
    throw ShapeError("prepared meals were built for a different encoder set");
  }
  std::vector<Var> columns;
  for (MealSlot slot : kMealSlots) {
    std::vector<Var> reps;
    for (std::size_t e = 0; e < encoders_.size(); ++e) {
      Var items = tape.constant(meals.per_encoder[e][slot_index(slot)]);
      reps.push_back(projector(e, slot).forward(tape, items));
    }
    Var fused = reps.front();
    if (reps.size() > 1) {
      for (std::size_t i = 1; i < reps.size(); ++i) fused = add(fused, reps[i]);
      fused = scale(fused, 1.0 / static_cast<double>(reps.size()));
    }
    columns.push_back(fused);
  }
  return concat(columns, 1);
}

MealChannels MealEncoder::encode_day(const DiaryRecord& record) {
  Tape tape;
  const Tensor& out = forward(tape, prepare(std::span<const DiaryRecord>(&record, 1))).value();
  return MealChannels{out[0], out[1], out[2]};
}

}  // namespace dietweight
