#include "specbias/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "specbias/config.hpp"

namespace specbias::io {

static_assert(std::endian::native == std::endian::little,
              "containers are written as raw little-endian bytes");

namespace {

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : path_(path), os_(path, std::ios::binary) {
    if (!os_) throw ValidationError("cannot open '" + path.string() + "' for writing");
  }
  void bytes(const void* p, std::size_t n) { os_.write(static_cast<const char*>(p), n); }
  template <typename V>
  void pod(V v) {
    bytes(&v, sizeof v);
  }
  void str(const std::string& s) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void shape(const Shape& s) {
    for (int v : {s.n, s.c, s.h, s.w}) pod<std::int32_t>(v);
  }
  void close() {
    os_.close();
    if (!os_) throw ValidationError("write to '" + path_.string() + "' failed");
  }

 private:
  std::filesystem::path path_;
  std::ofstream os_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path), is_(path, std::ios::binary) {
    if (!is_) throw ValidationError("cannot open '" + path.string() + "'");
  }
  void bytes(void* p, std::size_t n) {
    is_.read(static_cast<char*>(p), n);
    if (static_cast<std::size_t>(is_.gcount()) != n) {
      throw ValidationError("'" + path_.string() + "' is truncated");
    }
  }
  template <typename V>
  V pod() {
    V v;
    bytes(&v, sizeof v);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    if (n > (1u << 24)) throw ValidationError("'" + path_.string() + "' has a corrupt string");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  Shape shape() {
    Shape s;
    s.n = pod<std::int32_t>();
    s.c = pod<std::int32_t>();
    s.h = pod<std::int32_t>();
    s.w = pod<std::int32_t>();
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) {
      throw ValidationError("'" + path_.string() + "' has a negative extent");
    }
    return s;
  }
  void magic(const char* expected) {
    char m[4];
    bytes(m, 4);
    if (std::memcmp(m, expected, 4) != 0) {
      throw ValidationError("'" + path_.string() + "' is not a " + expected + " file");
    }
  }
  bool at_end() { return is_.peek() == std::char_traits<char>::eof(); }

 private:
  std::filesystem::path path_;
  std::ifstream is_;
};

DType check_dtype(std::uint8_t code) {
  if (code < 1 || code > 3) throw ValidationError("unknown dtype code " + std::to_string(code));
  return static_cast<DType>(code);
}

template <typename T>
constexpr DType dtype_of() {
  return std::is_same_v<T, float> ? DType::f32 : DType::f64;
}

}  // namespace

std::size_t dtype_size(DType d) {
  switch (d) {
    case DType::f32:
      return 4;
    case DType::f64:
      return 8;
    case DType::u8:
      return 1;
  }
  throw ValidationError("unknown dtype");
}

Field Field::from_tensor(std::string name, const Tensor<float>& t) {
  Field f;
  f.name = std::move(name);
  f.dtype = DType::f32;
  f.shape = t.shape();
  f.bytes.resize(t.size() * 4);
  std::memcpy(f.bytes.data(), t.data(), f.bytes.size());
  return f;
}

Field Field::from_tensor(std::string name, const Tensor<double>& t) {
  Field f;
  f.name = std::move(name);
  f.dtype = DType::f64;
  f.shape = t.shape();
  f.bytes.resize(t.size() * 8);
  std::memcpy(f.bytes.data(), t.data(), f.bytes.size());
  return f;
}

Field Field::from_mask(std::string name, Shape shape, const std::vector<std::uint8_t>& mask) {
  if (mask.size() != shape.numel()) throw ValidationError("mask length does not match its shape");
  Field f;
  f.name = std::move(name);
  f.dtype = DType::u8;
  f.shape = shape;
  f.bytes.assign(mask.begin(), mask.end());
  return f;
}

template <typename T>
Tensor<T> Field::tensor() const {
  Tensor<T> out(shape);
  if (dtype == DType::f32) {
    const float* src = reinterpret_cast<const float*>(bytes.data());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(src[i]);
  } else if (dtype == DType::f64) {
    const double* src = reinterpret_cast<const double*>(bytes.data());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(src[i]);
  } else {
    throw ValidationError("field '" + name + "' is a mask, not a tensor");
  }
  return out;
}
template Tensor<float> Field::tensor<float>() const;
template Tensor<double> Field::tensor<double>() const;

std::vector<std::uint8_t> Field::mask() const {
  if (dtype != DType::u8) throw ValidationError("field '" + name + "' is not a mask");
  return std::vector<std::uint8_t>(bytes.begin(), bytes.end());
}

double Field::denormalize(double stored) const {
  return norm_min + (stored + 1.0) * 0.5 * (norm_max - norm_min);
}

double Field::normalize(double raw) const {
  return 2.0 * (raw - norm_min) / (norm_max - norm_min) - 1.0;
}

const Field& Dataset::field(const std::string& name) const {
  for (const auto& f : fields) {
    if (f.name == name) return f;
  }
  throw ValidationError("dataset has no field '" + name + "'");
}

bool Dataset::has(const std::string& name) const {
  for (const auto& f : fields) {
    if (f.name == name) return true;
  }
  return false;
}

std::filesystem::path manifest_path(const std::filesystem::path& dataset) {
  return std::filesystem::path(dataset.string() + ".json");
}

void write_dataset(const std::filesystem::path& path, const Dataset& d) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  Writer w(path);
  w.bytes("SBDS", 4);
  w.pod<std::uint32_t>(kDatasetVersion);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(d.fields.size()));
  for (const auto& f : d.fields) {
    if (f.bytes.size() != f.shape.numel() * dtype_size(f.dtype)) {
      throw ValidationError("field '" + f.name + "' payload does not match its shape");
    }
    w.str(f.name);
    w.pod<std::uint8_t>(static_cast<std::uint8_t>(f.dtype));
    w.shape(f.shape);
    w.pod<double>(f.dt);
    w.pod<double>(f.norm_min);
    w.pod<double>(f.norm_max);
  }
  for (const auto& f : d.fields) w.bytes(f.bytes.data(), f.bytes.size());
  w.close();
  write_text(manifest_path(path), d.manifest.dump(2) + "\n");
}

Dataset read_dataset(const std::filesystem::path& path) {
  Reader r(path);
  r.magic("SBDS");
  const auto version = r.pod<std::uint32_t>();
  if (version != kDatasetVersion) {
    throw ValidationError("'" + path.string() + "' has unsupported version " + std::to_string(version));
  }
  Dataset d;
  d.fields.resize(r.pod<std::uint32_t>());
  for (auto& f : d.fields) {
    f.name = r.str();
    f.dtype = check_dtype(r.pod<std::uint8_t>());
    f.shape = r.shape();
    f.dt = r.pod<double>();
    f.norm_min = r.pod<double>();
    f.norm_max = r.pod<double>();
  }
  for (auto& f : d.fields) {
    f.bytes.resize(f.shape.numel() * dtype_size(f.dtype));
    r.bytes(f.bytes.data(), f.bytes.size());
  }
  if (!r.at_end()) throw ValidationError("'" + path.string() + "' has trailing bytes");
  const auto mpath = manifest_path(path);
  if (std::filesystem::exists(mpath)) {
    try {
      d.manifest = nlohmann::json::parse(read_text(mpath));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("manifest '" + mpath.string() + "': " + e.what());
    }
  }
  return d;
}

std::string model_config_text(const ModelConfig& c) {
  std::map<std::string, std::string> kv;
  write_model_config(kv, c, "");
  std::string text;
  for (const auto& [k, v] : kv) text += k + " = " + v + "\n";
  return text;
}

ModelConfig parse_model_config_text(const std::string& text) {
  const auto kv = KeyValues::parse(text, "checkpoint config");
  ModelConfig c;
  read_model_config(kv, c, "");
  kv.reject_unused();
  c.validate();
  return c;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ResUNet<T>& model) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::string text = model_config_text(model.config());
  Writer w(path);
  w.bytes("SBLB", 4);
  w.pod<std::uint32_t>(kCheckpointVersion);
  w.pod<std::uint64_t>(fnv1a64(text));
  w.str(text);
  w.pod<std::uint8_t>(static_cast<std::uint8_t>(dtype_of<T>()));
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(model.parameters().size()));
  for (const auto& p : model.parameters()) {
    w.str(p.name);
    w.shape(p.value.shape());
    w.bytes(p.value.data(), p.value.size() * sizeof(T));
  }
  w.close();
}

namespace {

CheckpointHeader read_header(Reader& r, const std::filesystem::path& path) {
  r.magic("SBLB");
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw ValidationError("'" + path.string() + "' has unsupported version " + std::to_string(version));
  }
  CheckpointHeader h;
  h.digest = r.pod<std::uint64_t>();
  const std::string text = r.str();
  if (fnv1a64(text) != h.digest) {
    throw ValidationError("'" + path.string() + "': config digest mismatch");
  }
  h.config = parse_model_config_text(text);
  h.dtype = check_dtype(r.pod<std::uint8_t>());
  h.parameters = r.pod<std::uint32_t>();
  return h;
}

}  // namespace

CheckpointHeader read_checkpoint_header(const std::filesystem::path& path) {
  Reader r(path);
  return read_header(r, path);
}

template <typename T>
void load_checkpoint(const std::filesystem::path& path, ResUNet<T>& model) {
  Reader r(path);
  const auto h = read_header(r, path);
  if (h.digest != fnv1a64(model_config_text(model.config()))) {
    throw ValidationError("'" + path.string() + "' was written for a different model config");
  }
  if (h.dtype != dtype_of<T>()) {
    throw ValidationError("'" + path.string() + "' stores a different floating-point type");
  }
  auto& params = model.parameters();
  if (h.parameters != params.size()) {
    throw ValidationError("'" + path.string() + "' parameter count does not match the model");
  }
  // Decode into scratch first so a corrupt file leaves the model untouched.
  std::vector<std::vector<T>> staged;
  staged.reserve(params.size());
  for (const auto& p : params) {
    const std::string name = r.str();
    const Shape s = r.shape();
    if (name != p.name || s != p.value.shape()) {
      throw ValidationError("'" + path.string() + "': parameter '" + name + "' " + s.str() +
                            " does not match '" + p.name + "' " + p.value.shape().str());
    }
    staged.emplace_back(p.value.size());
    r.bytes(staged.back().data(), staged.back().size() * sizeof(T));
  }
  if (!r.at_end()) throw ValidationError("'" + path.string() + "' has trailing bytes");
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::memcpy(params[i].value.data(), staged[i].data(), staged[i].size() * sizeof(T));
  }
}

template <typename T>
ResUNet<T> load_model(const std::filesystem::path& path) {
  ResUNet<T> model(read_checkpoint_header(path).config, 0);
  load_checkpoint(path, model);
  return model;
}

template void save_checkpoint(const std::filesystem::path&, const ResUNet<float>&);
template void save_checkpoint(const std::filesystem::path&, const ResUNet<double>&);
template void load_checkpoint(const std::filesystem::path&, ResUNet<float>&);
template void load_checkpoint(const std::filesystem::path&, ResUNet<double>&);
template ResUNet<float> load_model(const std::filesystem::path&);
template ResUNet<double> load_model(const std::filesystem::path&);

void write_pgm(const std::filesystem::path& path, const double* field, int h, int w) {
  if (h <= 0 || w <= 0) throw ValidationError("write_pgm: empty field");
  const std::size_t n = static_cast<std::size_t>(h) * w;
  const auto [lo, hi] = std::minmax_element(field, field + n);
  const double span = *hi - *lo;
  std::vector<unsigned char> px(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = span > 0.0 ? (field[i] - *lo) / span : 0.0;
    const auto v = static_cast<std::uint16_t>(std::lround(u * 65535.0));
    px[2 * i] = static_cast<unsigned char>(v >> 8);
    px[2 * i + 1] = static_cast<unsigned char>(v & 0xff);
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  Writer wr(path);
  const std::string header = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n65535\n";
  wr.bytes(header.data(), header.size());
  wr.bytes(px.data(), px.size());
  wr.close();
}

Tensor<double> read_pgm(const std::filesystem::path& path) {
  const std::string data = read_text(path);
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < data.size()) {
      if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(data[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
    if (start == pos) throw ValidationError("'" + path.string() + "': truncated graymap header");
    return data.substr(start, pos - start);
  };
  auto number = [&]() {
    const std::string t = token();
    try {
      return std::stoi(t);
    } catch (const std::exception&) {
      throw ValidationError("'" + path.string() + "': bad graymap header token '" + t + "'");
    }
  };
  const std::string magic = token();
  if (magic != "P2" && magic != "P5") throw ValidationError("'" + path.string() + "' is not a graymap");
  const int w = number();
  const int h = number();
  const int maxval = number();
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) {
    throw ValidationError("'" + path.string() + "': bad graymap dimensions");
  }
  Tensor<double> out(Shape{1, 1, h, w});
  const std::size_t n = out.size();
  if (magic == "P2") {
    for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<double>(number()) / maxval;
    return out;
  }
  ++pos;  // single whitespace byte before the raster
  const std::size_t bpp = maxval > 255 ? 2 : 1;
  if (data.size() < pos + n * bpp) throw ValidationError("'" + path.string() + "': truncated raster");
  for (std::size_t i = 0; i < n; ++i) {
    const auto* p = reinterpret_cast<const unsigned char*>(data.data() + pos + i * bpp);
    const unsigned v = bpp == 2 ? (p[0] << 8) | p[1] : p[0];
    out[i] = static_cast<double>(v) / maxval;
  }
  return out;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  os << text;
  os.close();
  if (!os) throw ValidationError("write to '" + path.string() + "' failed");
}

}  // namespace specbias::io
