#pragma once

// Plain-text model snapshots: the spec needed to rebuild the architecture,
// the input scaling, then every parameter in shortest round-trip decimal.

#include <filesystem>
#include <iosfwd>
#include <memory>

#include "pt/model/sequence_model.hpp"
#include "pt/training.hpp"

namespace pt {

struct Checkpoint {
  std::unique_ptr<SequenceModel> model;
  InputScaling scaling;
};

void save_checkpoint(std::ostream& out, const SequenceModel& model, const InputScaling& scaling);
void save_checkpoint(const std::filesystem::path& path, const SequenceModel& model,
                     const InputScaling& scaling);

// Throws DataError on a malformed file or one whose parameters do not fit
// the architecture it names.
Checkpoint load_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace pt
