#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pinnlab/model.hpp"

namespace pinnlab {

/// On-disk snapshot: the model description as a structured text header, a
/// directory of named tensors (trainable parameters, the frozen RFF matrix,
/// optimizer moments) and scalar bookkeeping (epoch counter, loss weights).
/// Tensor payloads are raw 8-byte floats, little-endian, in directory order.
struct Checkpoint {
    ModelSpec spec;
    std::uint64_t seed = 0;
    std::vector<NamedTensor> tensors;
    std::map<std::string, double> scalars;

    const Tensor* find(const std::string& name) const;

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);

    static Checkpoint from_model(const Model& m, std::uint64_t seed);
    /// Rebuild a model from the stored spec and tensors. Throws if a
    /// trainable tensor is missing or has the wrong shape.
    Model restore_model() const;
};

/// ModelSpec <-> JSON text (used in the checkpoint header and config files).
std::string model_spec_to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const std::string& text);

}  // namespace pinnlab
