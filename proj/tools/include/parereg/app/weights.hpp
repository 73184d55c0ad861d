#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "parereg/conv/backbone.hpp"
#include "parereg/matching/matching.hpp"

namespace parereg::app {

/// One named tensor. Payload is row-major single precision.
struct WeightRecord {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  bool operator==(const WeightRecord&) const = default;
};

/// Binary layout: the 8-byte magic "PAREW1\0\0", then per record
/// u32 name length, name bytes, u32 rank, rank × u32 dims, f32 payload;
/// all integers and floats little-endian.
class WeightContainer {
 public:
  static constexpr std::size_t kMagicSize = 8;
  static constexpr char kMagic[kMagicSize + 1] = "PAREW1\0\0";

  /// Throws InputError on a duplicate name or a payload that does not match
  /// the dims.
  void add(WeightRecord record);
  [[nodiscard]] const WeightRecord* find(const std::string& name) const;
  [[nodiscard]] const std::vector<WeightRecord>& records() const { return records_; }

  [[nodiscard]] std::vector<std::uint8_t> to_bytes() const;
  /// Throws InputError naming the offending record on truncation or bad magic.
  static WeightContainer from_bytes(std::span<const std::uint8_t> bytes);

  void save(const std::filesystem::path& path) const;
  static WeightContainer load(const std::filesystem::path& path);

  /// FNV-1a over names and dims only; equal for any two seeds of one config.
  [[nodiscard]] std::uint64_t layout_hash() const;

  bool operator==(const WeightContainer&) const = default;

 private:
  std::vector<WeightRecord> records_;
};

struct Model {
  conv::BackboneParams<double> backbone;
  matching::MatchingParams<double> matching;
};

Model init_model(const conv::BackboneConfig& backbone, const matching::ContextConfig& context,
                 std::uint64_t seed);

WeightContainer export_weights(const Model& model);

/// Overwrites every tensor of `model` (whose shapes define the expected
/// layout). Throws InputError naming the tensor on a missing record, extra
/// record or dimension mismatch.
void import_weights(const WeightContainer& weights, Model& model);

}  // namespace parereg::app
