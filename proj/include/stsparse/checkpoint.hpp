#ifndef STSPARSE_CHECKPOINT_HPP
#define STSPARSE_CHECKPOINT_HPP

#include <filesystem>
#include <string>

#include "stsparse/models.hpp"

namespace stsparse {

inline constexpr int kCheckpointVersion = 1;

/// JSON document with configs, seed, weights and duty states. Doubles are
/// written in shortest round-trip form, so a reload is bit-exact.
std::string checkpoint_to_json(const TrainedModel& m);
TrainedModel checkpoint_from_json(const std::string& text);

void save_checkpoint(const TrainedModel& m, const std::filesystem::path& path);
TrainedModel load_checkpoint(const std::filesystem::path& path);

}  // namespace stsparse

#endif  // STSPARSE_CHECKPOINT_HPP
