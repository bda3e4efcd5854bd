// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dietweight/autodiff.hpp"
#include "dietweight/domain.hpp"

namespace dietweight {

enum class Modality { Image, Text };

std::string_view to_string(Modality m);
Modality parse_modality(std::string_view name);

/// Precomputed frozen-encoder outputs keyed by item (image key or token).
class EmbeddingTable {
 public:
  EmbeddingTable(std::size_t dim, Modality modality);

  /// Header line {"dim":D,"modality":"image|text"} followed by
  /// {"key":...,"vector":[...]} lines. Every vector is checked against D.
  static EmbeddingTable parse(std::istream& in);
  static EmbeddingTable load(const std::string& path);
  void write(std::ostream& out) const;

  void insert(std::string key, std::vector<double> vector);
  bool contains(std::string_view key) const { return entries_.contains(std::string(key)); }
  /// Throws IngestError("missing embedding <key>") when absent.
  const std::vector<double>& lookup(std::string_view key) const;

  std::size_t dim() const { return dim_; }
  Modality modality() const { return modality_; }
  std::size_t size() const { return entries_.size(); }
  /// Keys in sorted order.
  std::vector<std::string> keys() const;

 private:
  std::size_t dim_;
  Modality modality_;
  std::unordered_map<std::string, std::vector<double>> entries_;
};

/// Stored vector for `key`, unchanged.
std::vector<double> lookup_item(std::string_view key, const EmbeddingTable& table);

/// Signed one-hot: h = FNV-1a64(token), index h mod D, sign -1 when the top
/// bit of h is set.
std::vector<double> hash_embed(std::string_view token, std::size_t dim);

/// Element-wise mean over a multiset of vectors; the zero vector of length
/// `dim` for an empty meal.
std::vector<double> average_items(const std::vector<std::vector<double>>& vectors, std::size_t dim);

/// Element-wise mean of per-modality meal representations.
std::vector<double> fuse_modalities(const std::vector<std::vector<double>>& reps);

enum class EncoderKind { EmbeddingTable, HashedBag };

struct ItemEncoderConfig {
  EncoderKind kind = EncoderKind::HashedBag;
  Modality modality = Modality::Text;
  std::size_t dim = 128;
  std::string table_path;

  std::string descriptor() const;
};

/// Frozen item encoder: either an embedding table or the hashed bag.
class ItemEncoder {
 public:
  static ItemEncoder hashed_bag(Modality modality, std::size_t dim);
  static ItemEncoder from_table(std::shared_ptr<const EmbeddingTable> table);
  /// Loads the table for EmbeddingTable configs and checks its dim/modality.
  static ItemEncoder from_config(const ItemEncoderConfig& config);

  Modality modality() const { return modality_; }
  std::size_t dim() const { return dim_; }
  EncoderKind kind() const { return kind_; }
  std::string descriptor() const;

  std::vector<double> encode_item(std::string_view key) const;
  /// Items of this encoder's modality: ingredient tokens for text, image keys for image.
  const std::vector<std::string>& items(const MealLog& meal) const;
  /// Averaged item vector of one meal.
  std::vector<double> meal_embedding(const MealLog& meal) const;

 private:
  ItemEncoder(EncoderKind kind, Modality modality, std::size_t dim,
              std::shared_ptr<const EmbeddingTable> table);

  EncoderKind kind_;
  Modality modality_;
  std::size_t dim_;
  std::shared_ptr<const EmbeddingTable> table_;
};

/// relu(E W1 + c1) W2 + c2, applied row-wise to [n, D] inputs.
class MealProjector {
 public:
  MealProjector(std::string name, std::size_t input_dim, std::size_t hidden, std::size_t width = 1);

  /// Glorot-uniform weights, zero biases.
  void init(std::uint64_t seed);

  Var forward(Tape& tape, Var items);
  std::vector<double> evaluate(std::span<const double> embedding);

  std::size_t input_dim() const { return input_dim_; }
  std::size_t hidden() const { return hidden_; }
  std::size_t width() const { return width_; }

  std::vector<Parameter*> parameters() { return {&w1_, &b1_, &w2_, &b2_}; }
  Parameter& w1() { return w1_; }
  Parameter& b1() { return b1_; }
  Parameter& w2() { return w2_; }
  Parameter& b2() { return b2_; }

 private:
  std::size_t input_dim_;
  std::size_t hidden_;
  std::size_t width_;
  Parameter w1_;
  Parameter b1_;
  Parameter w2_;
  Parameter b2_;
};

std::vector<double> project_meal(std::span<const double> embedding, MealProjector& projector);

/// Per-day scalar meal channels, indexed by slot_index().
using MealChannels = std::array<double, kMealChannelCount>;

/// Averaged item embeddings for L days: per encoder, per slot, an [L, D] tensor.
struct PreparedMeals {
  std::vector<std::array<Tensor, kMealChannelCount>> per_encoder;
};

struct UmrlOptions {
  std::size_t hidden = 64;
  bool shared_projector = true;
};

/// The meal representation stage: frozen item encoders, one projector per
/// encoder (shared across slots by default) and post-projection fusion.
class MealEncoder {
 public:
  MealEncoder(std::vector<ItemEncoder> encoders, UmrlOptions options, std::uint64_t seed);

  PreparedMeals prepare(std::span<const DiaryRecord> days) const;
  /// [L, 3] meal columns, differentiable w.r.t. projector parameters.
  Var forward(Tape& tape, const PreparedMeals& meals);
  MealChannels encode_day(const DiaryRecord& record);

  std::size_t encoder_count() const { return encoders_.size(); }
  const ItemEncoder& encoder(std::size_t i) const { return encoders_[i]; }
  MealProjector& projector(std::size_t encoder, MealSlot slot);
  std::vector<Parameter*> parameters();
  const UmrlOptions& options() const { return options_; }

 private:
  std::vector<ItemEncoder> encoders_;
  UmrlOptions options_;
  // encoder-major; one entry per encoder when shared, three otherwise
  std::vector<MealProjector> projectors_;
};

}  // namespace dietweight
