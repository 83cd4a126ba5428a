#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "szad/adaptation.hpp"
#include "szad/gbtree.hpp"

namespace szad {

inline constexpr std::uint32_t kModelFormatVersion = 1;

enum class ModelKind : std::uint32_t { kAdaptation = 1, kGbt = 2 };

/// SZAD1 layout: magic, u32 version, u32 kind, key/value metadata, a
/// manifest of named matrix shapes, the matrices as little-endian f64
/// row-major blocks, and a CRC32 of everything before it.
std::string serialize_model(const AdaptationModel& model);
std::string serialize_model(const GbtModel& model);

/// Both throw kCorruptModel on bad magic, CRC mismatch, version mismatch,
/// wrong kind or malformed content.
AdaptationModel deserialize_adaptation_model(const std::string& bytes);
GbtModel deserialize_gbt_model(const std::string& bytes);
ModelKind model_kind(const std::string& bytes);

void save_model(const std::filesystem::path& path, const AdaptationModel& model);
void save_model(const std::filesystem::path& path, const GbtModel& model);
AdaptationModel load_adaptation_model(const std::filesystem::path& path);
GbtModel load_gbt_model(const std::filesystem::path& path);
ModelKind peek_model_kind(const std::filesystem::path& path);

}  // namespace szad
