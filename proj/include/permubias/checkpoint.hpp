#pragma once

#include <string>

#include "permubias/model.hpp"

namespace permubias {

// Versioned little-endian binary checkpoints. Weights are stored as 64-bit
// floats regardless of the in-memory scalar type, so a double model
// round-trips bit-exactly and a float model loads by narrowing.

template <class T>
void save_model(const Model<T>& m, const std::string& path);

template <class T>
Model<T> load_model(const std::string& path);

template <class T>
void save_adapters(const AdapterSet<T>& set, int d_model, const std::string& path);

// Loaded factors come back trainable; inference simply never tapes them.
template <class T>
AdapterSet<T> load_adapters(const std::string& path, const ModelConfig& expect);

}  // namespace permubias
