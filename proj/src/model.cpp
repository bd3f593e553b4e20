#include "glt/model.hpp"

#include <cstring>
#include <fstream>

#include "glt/io.hpp"

namespace glt::model {

namespace {

constexpr char kMagic[4] = {'G', 'L', 'T', 'M'};

void put_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) io::put_f32(out, static_cast<float>(m.data()[i]));
}

void get_matrix(std::istream& in, Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = io::get_f32(in);
}

}  // namespace

Eigen::MatrixXd logits(const Model& m, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out = nn::forward(m.params, x).logits;
  if (!m.logit_offset.empty()) {
    const Eigen::Map<const Eigen::VectorXd> off(m.logit_offset.data(),
                                                static_cast<Eigen::Index>(m.logit_offset.size()));
    out.colwise() += off;
  }
  return out;
}

std::vector<int> predict(const Model& m, const Eigen::MatrixXd& x) {
  return nn::argmax_columns(logits(m, x));
}

nlohmann::json checkpoint_header(const Model& m) {
  std::vector<int> dims{m.params.input_dim()};
  for (const auto& l : m.params.backbone) dims.push_back(static_cast<int>(l.weight.rows()));
  dims.push_back(m.params.n_classes());
  return {{"dims", dims},
          {"activation", nn::to_string(m.params.activation)},
          {"method", nn::to_string(m.method)},
          {"logit_offset", m.logit_offset},
          {"manifest_digest", m.manifest_digest},
          {"protocol", m.protocol}};
}

void save_checkpoint(std::ostream& out, const Model& m) {
  const std::string header = checkpoint_header(m).dump();
  out.write(kMagic, 4);
  io::put_u32(out, static_cast<std::uint32_t>(header.size()));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& l : m.params.backbone) {
    put_matrix(out, l.weight);
    put_matrix(out, l.bias);
  }
  put_matrix(out, m.params.head.weight);
  put_matrix(out, m.params.head.bias);
  if (!out) throw FormatError("checkpoint write failed");
}

void save_checkpoint(const std::filesystem::path& path, const Model& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  save_checkpoint(out, m);
}

Model load_checkpoint(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw FormatError("not a GLTM checkpoint");
  const std::uint32_t len = io::get_u32(in);
  if (len > (1u << 24)) throw FormatError("checkpoint header too large");
  std::string header(len, '\0');
  in.read(header.data(), len);
  if (!in) throw FormatError("truncated checkpoint header");

  Model m;
  std::vector<int> dims;
  try {
    const auto j = nlohmann::json::parse(header);
    dims = j.at("dims").get<std::vector<int>>();
    m.params.activation = nn::activation_from_string(j.at("activation").get<std::string>());
    m.method = nn::method_from_string(j.at("method").get<std::string>());
    m.logit_offset = j.at("logit_offset").get<std::vector<double>>();
    m.manifest_digest = j.at("manifest_digest").get<std::string>();
    m.protocol = j.value("protocol", "");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("malformed checkpoint header: ") + e.what());
  }
  if (dims.size() < 2) throw FormatError("checkpoint needs at least input and output dims");
  for (int d : dims)
    if (d <= 0) throw FormatError("checkpoint dims must be positive");

  for (std::size_t l = 0; l + 2 < dims.size(); ++l) {
    nn::Layer layer{Eigen::MatrixXd(dims[l + 1], dims[l]), Eigen::VectorXd(dims[l + 1])};
    get_matrix(in, layer.weight);
    Eigen::MatrixXd b(dims[l + 1], 1);
    get_matrix(in, b);
    layer.bias = b.col(0);
    m.params.backbone.push_back(std::move(layer));
  }
  const int h = dims[dims.size() - 2], k = dims.back();
  m.params.head.weight.resize(k, h);
  get_matrix(in, m.params.head.weight);
  Eigen::MatrixXd b(k, 1);
  get_matrix(in, b);
  m.params.head.bias = b.col(0);
  if (!in) throw FormatError("truncated checkpoint weights");
  if (!m.logit_offset.empty() && static_cast<int>(m.logit_offset.size()) != k)
    throw FormatError("logit_offset length does not match the class count");
  return m;
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return load_checkpoint(in);
}

}  // namespace glt::model
