#include <doctest.h>

#include <sstream>

#include "glt/datagen.hpp"
#include "glt/io.hpp"
#include "glt/model.hpp"

using namespace glt;

namespace {

datagen::Dataset tiny(datagen::AttrRegime regime) {
  datagen::GenConfig c;
  c.n_classes = 3;
  c.n_attributes = 4;
  c.feat_dim = 8;
  c.samples_head = 20;
  c.class_imbalance_ratio = 2.0;
  c.regime = regime;
  c.seed = 5;
  return datagen::generate(c);
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("sha256 known answer") {
  CHECK(io::sha256_hex("abc") ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("GLTD round trip in both regimes") {
  for (auto regime : {datagen::AttrRegime::single, datagen::AttrRegime::multi}) {
    const auto ds = tiny(regime);
    std::stringstream buf;
    io::write_dataset(buf, ds);
    const std::string bytes = buf.str();
    CHECK(bytes.substr(0, 4) == "GLTD");
    const auto back = io::read_dataset(buf);
    REQUIRE(back.size() == ds.size());
    CHECK(back.n_classes() == 3);
    CHECK(back.n_attributes() == 4);
    CHECK(back.feat_dim() == 8);
    CHECK(back.config.regime == regime);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      CHECK(back.samples[i].id == ds.samples[i].id);
      CHECK(back.samples[i].y == ds.samples[i].y);
      CHECK(back.samples[i].attrs == ds.samples[i].attrs);
      CHECK(back.samples[i].x == ds.samples[i].x);
    }
  }
}

TEST_CASE("GLTD rejects bad input") {
  std::stringstream junk("NOPE and more");
  CHECK_THROWS_AS(io::read_dataset(junk), FormatError);

  std::stringstream buf;
  io::write_dataset(buf, tiny(datagen::AttrRegime::single));
  const std::string bytes = buf.str();
  std::stringstream cut(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(io::read_dataset(cut), FormatError);
}

TEST_CASE("checkpoint round trip") {
  Rng rng(1);
  const std::vector<int> hidden{6, 5};
  model::Model m;
  m.params = nn::init_params(8, hidden, 3, nn::Activation::tanh, rng);
  m.params.head.bias << 0.5, -0.25, 0.125;
  m.method = nn::Method::logitadj;
  m.logit_offset = {0.1, 0.2, 0.3};
  m.manifest_digest = "d1";
  m.protocol = "GLT";
  std::stringstream buf;
  model::save_checkpoint(buf, m);
  const auto back = model::load_checkpoint(buf);
  CHECK(back.method == m.method);
  CHECK(back.logit_offset == m.logit_offset);
  CHECK(back.manifest_digest == "d1");
  CHECK(back.protocol == "GLT");
  CHECK(back.params.activation == nn::Activation::tanh);
  REQUIRE(back.params.backbone.size() == 2);
  for (std::size_t l = 0; l < 2; ++l) {
    CHECK(back.params.backbone[l].weight == m.params.backbone[l].weight.cast<float>().cast<double>());
    CHECK(back.params.backbone[l].bias == m.params.backbone[l].bias.cast<float>().cast<double>());
  }
  CHECK(back.params.head.bias == m.params.head.bias);

  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(8, 4);
  const Eigen::MatrixXd expect = nn::forward(m.params, x).logits.colwise() +
                      Eigen::Map<const Eigen::VectorXd>(m.logit_offset.data(), 3);
  CHECK((model::logits(m, x) - expect).norm() < 1e-12);

  std::stringstream junk("GLTM\x05\x00\x00\x00{bad}");
  CHECK_THROWS_AS(model::load_checkpoint(junk), FormatError);
  const std::string bytes = buf.str();
  std::stringstream cut(bytes.substr(0, bytes.size() - 2));
  CHECK_THROWS_AS(model::load_checkpoint(cut), FormatError);
}

}  // TEST_SUITE
