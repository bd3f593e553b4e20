#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "glt/nn.hpp"

namespace glt::model {

// A trained network plus the post-hoc logit offset some methods apply at
// prediction time (logit adjustment stores -tau * log prior here).
struct Model {
  nn::ModelParams params;
  nn::Method method = nn::Method::ce;
  std::vector<double> logit_offset;  // empty or K entries
  std::string manifest_digest;
  std::string protocol;  // protocol of the training split, empty if unknown
};

Eigen::MatrixXd logits(const Model& m, const Eigen::MatrixXd& x);
std::vector<int> predict(const Model& m, const Eigen::MatrixXd& x);

// Checkpoint layout: "GLTM" | header length u32 | JSON header | f32 blob.
// The blob holds every backbone layer (weight column-major, then bias), then
// the head, all little-endian.
void save_checkpoint(std::ostream& out, const Model& m);
void save_checkpoint(const std::filesystem::path& path, const Model& m);
Model load_checkpoint(std::istream& in);
Model load_checkpoint(const std::filesystem::path& path);

nlohmann::json checkpoint_header(const Model& m);

}  // namespace glt::model
