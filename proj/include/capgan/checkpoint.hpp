#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "capgan/discriminator.hpp"
#include "capgan/generator.hpp"
#include "capgan/tensor.hpp"

#include "json.hpp"

namespace capgan {

// On-disk format: one JSON header line (magic, kind, config, vocabulary
// hash, parameter names and shapes) followed by the raw little-endian
// doubles of every parameter in header order.
inline constexpr const char* kCheckpointMagic = "capgan-ckpt-v1";

struct Checkpoint {
  std::string kind;
  nlohmann::json config;
  std::uint64_t vocab_hash = 0;
  std::vector<std::pair<std::string, Tensor>> params;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);

// `expected_kind` empty skips the kind check; `expected_vocab_hash` 0 skips
// the vocabulary check (hash 0 never occurs for a real vocabulary).
Checkpoint load_checkpoint(const std::string& path,
                           const std::string& expected_kind = "",
                           std::uint64_t expected_vocab_hash = 0);

nlohmann::json generator_config_json(const GeneratorConfig& c);
GeneratorConfig generator_config_from_json(const nlohmann::json& j);
nlohmann::json discriminator_config_json(const DiscriminatorConfig& c);
DiscriminatorConfig discriminator_config_from_json(const nlohmann::json& j);

void save_generator(const std::string& path, const Generator& g,
                    std::uint64_t vocab_hash);
Generator load_generator(const std::string& path, std::uint64_t expected_vocab_hash);

void save_discriminator(const std::string& path, const Discriminator& d,
                        std::uint64_t vocab_hash);
Discriminator load_discriminator(const std::string& path,
                                 std::uint64_t expected_vocab_hash);

}  // namespace capgan
