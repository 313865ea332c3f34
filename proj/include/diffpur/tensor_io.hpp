#pragma once

#include <string>
#include <vector>

#include "diffpur/classifier.hpp"
#include "diffpur/tensor.hpp"

namespace diffpur {

/// On-disk tensor container: `base`.json holds {shape, dtype "f64",
/// order "row-major"}, `base`.bin holds the flat values as 8-byte
/// little-endian IEEE doubles regardless of host endianness.
void save_tensor(const std::string& base, const Tensor& t);
Tensor load_tensor(const std::string& base);

/// A batch of same-shape tensors stored as one container with a leading
/// batch axis.
Tensor stack_tensors(const std::vector<Tensor>& items);
std::vector<Tensor> unstack_tensor(const Tensor& stacked);

/// Directory layout: model.json manifest (kind, dimensions, activation)
/// plus one tensor container per parameter array.
void save_classifier(const std::string& dir, const Classifier& m);
Classifier load_classifier(const std::string& dir);

/// Directory layout: dataset.json (generator settings, labels, mixture
/// weights and variance) plus image and mixture-mean tensor stacks.
void save_dataset(const std::string& dir, const GeneratedData& g);
GeneratedData load_dataset(const std::string& dir);

}  // namespace diffpur
