#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "neaw/classifier.hpp"
#include "neaw/encoder.hpp"

namespace neaw {

// Binary model container, little-endian throughout:
//   "NEAW" | u32 version=1 | u32 layer_count | per layer: u32 d_in, u32 d_out,
//   d_in*d_out f64 row-major
// then optionally
//   "CLSF" | u32 n_dims | dims u32... | u8 norm_before_relu | tensors f64 in
//   the order W1,b1,gamma1,beta1,W2,b2,gamma2,beta2,W3,b3.
// The encoder section is everything before the "CLSF" tag; classifier
// (re)training rewrites the file but must keep those bytes identical.

struct LoadedModel {
  EncoderModel encoder;
  std::optional<ClassifierModel> classifier;
};

void save_model(const std::filesystem::path& path, const EncoderModel& encoder,
                const ClassifierModel* classifier = nullptr);
LoadedModel load_model(const std::filesystem::path& path);

// Byte length of the encoder section (header + layers) of an existing file.
size_t encoder_section_bytes(const std::filesystem::path& path);
// FNV-1a over exactly that prefix; the freeze guard compares this before and
// after classifier training.
uint64_t encoder_section_hash(const std::filesystem::path& path);

int64_t parameter_count(const EncoderModel& model);
// Size bookkeeping assumes 32-bit storage; learning itself stays in f64.
double fp32_megabytes(int64_t params);

// JSON sidecar describing how the model file was produced.
struct ModelMeta {
  std::vector<int> encoder_dims;
  std::vector<int> classifier_dims;  // empty until the head is trained
  std::string rule = "neaw";
  double eta = 0.01;
  double a = 1.0;
  double b = 1.0;
  double activity_epsilon = 0.0;
  int epochs = 0;
  int batch_clouds = 0;
  double fraction = 1.0;
  uint64_t seed = 0;
};

void save_meta(const std::filesystem::path& path, const ModelMeta& meta);
ModelMeta load_meta(const std::filesystem::path& path);

}  // namespace neaw
