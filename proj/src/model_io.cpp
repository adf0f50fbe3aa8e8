#include "neaw/model_io.hpp"

#include <bit>
#include <cstring>

#include <json.hpp>

#include "neaw/errors.hpp"
#include "neaw/io_util.hpp"

namespace neaw {

namespace {

constexpr char kMagic[4] = {'N', 'E', 'A', 'W'};
constexpr char kClfTag[4] = {'C', 'L', 'S', 'F'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out += char((v >> (8 * i)) & 0xff);
}

void put_f64(std::string& out, double v) {
  const uint64_t bits = std::bit_cast<uint64_t>(v);
  for (int i = 0; i < 8; ++i) out += char((bits >> (8 * i)) & 0xff);
}

struct Cursor {
  const std::string& bytes;
  size_t pos = 0;
  std::string origin;

  void need(size_t n) const {
    if (pos + n > bytes.size())
      throw ParseError(origin + ": truncated at byte " + std::to_string(pos));
  }
  bool tag(const char (&t)[4]) {
    if (pos + 4 > bytes.size()) return false;
    if (std::memcmp(bytes.data() + pos, t, 4) != 0) return false;
    pos += 4;
    return true;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(uint8_t(bytes[pos + size_t(i)])) << (8 * i);
    pos += 4;
    return v;
  }
  double f64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(uint8_t(bytes[pos + size_t(i)])) << (8 * i);
    pos += 8;
    return std::bit_cast<double>(v);
  }
  uint8_t u8() {
    need(1);
    return uint8_t(bytes[pos++]);
  }
};

constexpr uint32_t kMaxDim = 1u << 20;  // sanity bound against corrupt headers

void read_matrix(Cursor& c, Mat64& m, const char* what) {
  for (double& v : m.data) v = c.f64();
  if (!all_finite(m.data))
    throw ParseError(c.origin + ": non-finite value in " + std::string(what));
}

void put_matrix(std::string& out, const Mat64& m) {
  for (double v : m.data) put_f64(out, v);
}

void put_vec(std::string& out, const Vec64& v) {
  for (double x : v) put_f64(out, x);
}

void read_vec(Cursor& c, Vec64& v, const char* what) {
  for (double& x : v) x = c.f64();
  if (!all_finite(v)) throw ParseError(c.origin + ": non-finite value in " + std::string(what));
}

std::string encode_encoder(const EncoderModel& model) {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, uint32_t(model.layers.size()));
  for (const WtaLayer& l : model.layers) {
    put_u32(out, uint32_t(l.W.rows));
    put_u32(out, uint32_t(l.W.cols));
    put_matrix(out, l.W);
  }
  return out;
}

EncoderModel decode_encoder(Cursor& c) {
  if (!c.tag(kMagic)) throw ParseError(c.origin + ": bad magic (expected NEAW)");
  const uint32_t version = c.u32();
  if (version != kVersion)
    throw ParseError(c.origin + ": unsupported format version " + std::to_string(version));
  const uint32_t nlayers = c.u32();
  if (nlayers == 0 || nlayers > 64)
    throw ParseError(c.origin + ": implausible layer count " + std::to_string(nlayers));
  EncoderModel model;
  int prev_out = -1;
  for (uint32_t l = 0; l < nlayers; ++l) {
    const uint32_t din = c.u32();
    const uint32_t dout = c.u32();
    if (din == 0 || dout < 2 || din > kMaxDim || dout > kMaxDim)
      throw ParseError(c.origin + ": bad layer shape " + std::to_string(din) + "x" +
                       std::to_string(dout));
    if (prev_out >= 0 && int(din) != prev_out)
      throw ParseError(c.origin + ": layer " + std::to_string(l) + " input " +
                       std::to_string(din) + " does not chain from " + std::to_string(prev_out));
    WtaLayer layer{Mat64(int(din), int(dout))};
    read_matrix(c, layer.W, "encoder weights");
    model.layers.push_back(std::move(layer));
    prev_out = int(dout);
  }
  return model;
}

std::string encode_classifier(const ClassifierModel& clf) {
  std::string out;
  out.append(kClfTag, 4);
  put_u32(out, uint32_t(clf.dims.size()));
  for (int d : clf.dims) put_u32(out, uint32_t(d));
  out += char(clf.norm_before_relu ? 1 : 0);
  put_matrix(out, clf.fc1.W);
  put_vec(out, clf.fc1.b);
  put_vec(out, clf.ln1.gamma);
  put_vec(out, clf.ln1.beta);
  put_matrix(out, clf.fc2.W);
  put_vec(out, clf.fc2.b);
  put_vec(out, clf.ln2.gamma);
  put_vec(out, clf.ln2.beta);
  put_matrix(out, clf.fc3.W);
  put_vec(out, clf.fc3.b);
  return out;
}

ClassifierModel decode_classifier(Cursor& c) {
  const uint32_t ndims = c.u32();
  if (ndims != 4) throw ParseError(c.origin + ": classifier needs 4 dims, got " + std::to_string(ndims));
  std::vector<int> dims(4, 0);
  for (int& d : dims) {
    const uint32_t v = c.u32();
    if (v == 0 || v > kMaxDim) throw ParseError(c.origin + ": bad classifier dim");
    d = int(v);
  }
  // Seeded construction then overwrite; sizes all come from dims.
  ClassifierModel clf = make_classifier(dims, 0, c.u8() != 0);
  read_matrix(c, clf.fc1.W, "fc1.W");
  read_vec(c, clf.fc1.b, "fc1.b");
  read_vec(c, clf.ln1.gamma, "ln1.gamma");
  read_vec(c, clf.ln1.beta, "ln1.beta");
  read_matrix(c, clf.fc2.W, "fc2.W");
  read_vec(c, clf.fc2.b, "fc2.b");
  read_vec(c, clf.ln2.gamma, "ln2.gamma");
  read_vec(c, clf.ln2.beta, "ln2.beta");
  read_matrix(c, clf.fc3.W, "fc3.W");
  read_vec(c, clf.fc3.b, "fc3.b");
  return clf;
}

}  // namespace

void save_model(const std::filesystem::path& path, const EncoderModel& encoder,
                const ClassifierModel* classifier) {
  std::string out = encode_encoder(encoder);
  if (classifier) {
    if (classifier->input_dim() != encoder.output_dim())
      throw std::invalid_argument("classifier input " + std::to_string(classifier->input_dim()) +
                                  " does not match encoder output " +
                                  std::to_string(encoder.output_dim()));
    out += encode_classifier(*classifier);
  }
  write_file_atomic(path, out);
}

LoadedModel load_model(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  Cursor c{bytes, 0, path.string()};
  LoadedModel m;
  m.encoder = decode_encoder(c);
  if (c.pos < bytes.size()) {
    if (!c.tag(kClfTag))
      throw ParseError(c.origin + ": unexpected bytes after encoder section at " +
                       std::to_string(c.pos));
    m.classifier = decode_classifier(c);
    if (m.classifier->input_dim() != m.encoder.output_dim())
      throw ParseError(c.origin + ": classifier input does not match encoder output");
  }
  if (c.pos != bytes.size())
    throw ParseError(c.origin + ": " + std::to_string(bytes.size() - c.pos) + " trailing bytes");
  return m;
}

size_t encoder_section_bytes(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  Cursor c{bytes, 0, path.string()};
  decode_encoder(c);
  return c.pos;
}

uint64_t encoder_section_hash(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  Cursor c{bytes, 0, path.string()};
  decode_encoder(c);
  return fnv1a64(bytes.data(), c.pos);
}

int64_t parameter_count(const EncoderModel& model) {
  int64_t n = 0;
  for (const WtaLayer& l : model.layers) n += int64_t(l.W.rows) * l.W.cols;
  return n;
}

double fp32_megabytes(int64_t params) { return double(params) * 4.0 / (1024.0 * 1024.0); }

void save_meta(const std::filesystem::path& path, const ModelMeta& meta) {
  nlohmann::json j;
  j["encoder_dims"] = meta.encoder_dims;
  j["classifier_dims"] = meta.classifier_dims;
  j["rule"] = meta.rule;
  j["eta"] = meta.eta;
  j["a"] = meta.a;
  j["b"] = meta.b;
  j["activity_epsilon"] = meta.activity_epsilon;
  j["epochs"] = meta.epochs;
  j["batch_clouds"] = meta.batch_clouds;
  j["fraction"] = meta.fraction;
  j["seed"] = meta.seed;
  write_file_atomic(path, j.dump(2) + "\n");
}

ModelMeta load_meta(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  ModelMeta m;
  try {
    m.encoder_dims = j.value("encoder_dims", m.encoder_dims);
    m.classifier_dims = j.value("classifier_dims", m.classifier_dims);
    m.rule = j.value("rule", m.rule);
    m.eta = j.value("eta", m.eta);
    m.a = j.value("a", m.a);
    m.b = j.value("b", m.b);
    m.activity_epsilon = j.value("activity_epsilon", m.activity_epsilon);
    m.epochs = j.value("epochs", m.epochs);
    m.batch_clouds = j.value("batch_clouds", m.batch_clouds);
    m.fraction = j.value("fraction", m.fraction);
    m.seed = j.value("seed", m.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return m;
}

}  // namespace neaw
