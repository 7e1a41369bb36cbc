#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "specbias/model.hpp"
#include "specbias/tensor.hpp"

namespace specbias::io {

enum class DType : std::uint8_t { f32 = 1, f64 = 2, u8 = 3 };

std::size_t dtype_size(DType d);

/// One named tensor of a dataset container, stored as raw little-endian bytes.
struct Field {
  std::string name;
  DType dtype = DType::f32;
  Shape shape;
  double dt = 0.0;
  /// Affine map to [-1, 1]: stored = 2 (raw - min) / (max - min) - 1.
  double norm_min = -1.0;
  double norm_max = 1.0;
  std::vector<unsigned char> bytes;

  static Field from_tensor(std::string name, const Tensor<float>& t);
  static Field from_tensor(std::string name, const Tensor<double>& t);
  static Field from_mask(std::string name, Shape shape, const std::vector<std::uint8_t>& mask);

  /// Converts to T; f32 and f64 fields only.
  template <typename T>
  Tensor<T> tensor() const;
  std::vector<std::uint8_t> mask() const;

  double denormalize(double stored) const;
  double normalize(double raw) const;
};

struct Dataset {
  std::vector<Field> fields;
  nlohmann::json manifest = nlohmann::json::object();

  const Field& field(const std::string& name) const;
  bool has(const std::string& name) const;
};

inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Writes `path` (binary "SBDS" container) and `path`.json (manifest).
void write_dataset(const std::filesystem::path& path, const Dataset& d);
Dataset read_dataset(const std::filesystem::path& path);
std::filesystem::path manifest_path(const std::filesystem::path& dataset);

/// Canonical key=value text of a model config; the checkpoint digest hashes it.
std::string model_config_text(const ModelConfig& c);
ModelConfig parse_model_config_text(const std::string& text);
std::uint64_t fnv1a64(const std::string& bytes);

/// "SBLB" container: header with the config digest and text, then the
/// parameters in declaration order as (name, shape, dtype, payload).
template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ResUNet<T>& model);

struct CheckpointHeader {
  ModelConfig config;
  std::uint64_t digest = 0;
  DType dtype = DType::f32;
  std::size_t parameters = 0;
};
CheckpointHeader read_checkpoint_header(const std::filesystem::path& path);

/// Copies the stored parameters into `model`; names, shapes and the config
/// digest must all agree.
template <typename T>
void load_checkpoint(const std::filesystem::path& path, ResUNet<T>& model);

/// Rebuilds the model from the config stored in the checkpoint.
template <typename T>
ResUNet<T> load_model(const std::filesystem::path& path);

/// 16-bit binary portable graymap, min-max scaled (a constant field maps to 0).
void write_pgm(const std::filesystem::path& path, const double* field, int h, int w);
/// Reads P2 or P5 graymaps with maxval up to 65535; values scaled to [0, 1].
Tensor<double> read_pgm(const std::filesystem::path& path);

/// Whole-file helpers that report failures as ValidationError.
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace specbias::io
