#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "glt/common.hpp"

namespace glt::datagen {

enum class ClassShape { exponential, pareto };
enum class AttrRegime { single, multi };

struct Spurious {
  int cls = 0;
  int attribute = 0;
  double strength = 0.0;
};

// Every instance is x = mu_y + sum_{a in attrs} attr_scale * nu_a + noise.
// mu (class directions) and nu (attribute directions) are orthonormal rows.
struct GenConfig {
  int n_classes = 20;
  int n_attributes = 12;
  int feat_dim = 64;
  double class_imbalance_ratio = 1.0;
  ClassShape class_shape = ClassShape::exponential;
  // K x A, row-stochastic. Empty selects the default long-tailed profile.
  std::vector<std::vector<double>> attr_profile;
  std::optional<Spurious> spurious;
  double noise_sigma = 0.5;
  int samples_head = 1000;
  std::uint64_t seed = 0;
  AttrRegime regime = AttrRegime::single;
  double attr_scale = 1.0;
  // Expected number of attributes per object in the multi-label regime.
  double labels_per_object = 2.0;

  // Throws ConfigError whose message names the offending field.
  void validate() const;
};

void to_json(nlohmann::json& j, const GenConfig& c);
// Missing required fields raise ConfigError naming the field.
GenConfig gen_config_from_json(const nlohmann::json& j);

struct Sample {
  SampleId id = 0;
  std::vector<float> x;
  std::uint16_t y = 0;
  // Active attribute indices, ascending. Exactly one in the single regime.
  std::vector<std::uint16_t> attrs;
};

struct Directions {
  Eigen::MatrixXd class_dirs;  // K x D
  Eigen::MatrixXd attr_dirs;   // A x D
};

struct Dataset {
  GenConfig config;
  std::vector<Sample> samples;
  Directions directions;  // empty when loaded from a file without its config

  int n_classes() const { return config.n_classes; }
  int n_attributes() const { return config.n_attributes; }
  int feat_dim() const { return config.feat_dim; }
  std::size_t size() const { return samples.size(); }

  // Ids grouped by class, each list ascending.
  std::vector<std::vector<SampleId>> ids_by_class() const;
};

std::vector<int> build_class_prior(int n_classes, double ratio, ClassShape shape,
                                   int samples_head);

// Group masses of the base profile (top/middle/bottom thirds of the attributes).
inline constexpr double kTopMass = 0.70;
inline constexpr double kMidMass = 0.20;
inline constexpr double kBottomMass = 0.10;

// Base long-tailed row: attributes split into three as-equal-as-possible
// groups holding 70/20/10 percent of the mass, spread evenly within a group.
std::vector<double> base_attribute_profile(int n_attributes);

// K x A row-stochastic matrix p(attribute | class).
std::vector<std::vector<double>> build_attribute_conditional(const GenConfig& cfg);

// Gaussian rows orthonormalized by modified Gram-Schmidt.
Directions make_directions(int n_classes, int n_attributes, int feat_dim, Rng& rng);

std::vector<float> synth_sample(const Directions& dirs, int cls,
                                std::span<const std::uint16_t> attrs, double noise_sigma,
                                double attr_scale, Rng& rng);

Dataset generate(const GenConfig& cfg);

// 0/1 indicator vector of length A.
std::vector<int> attribute_vector(const Sample& s, int n_attributes);

// Column-major D x n matrix of the given samples' features.
Eigen::MatrixXd feature_matrix(const Dataset& ds, std::span<const SampleId> ids);
std::vector<int> labels_of(const Dataset& ds, std::span<const SampleId> ids);

std::string to_string(ClassShape s);
std::string to_string(AttrRegime r);

}  // namespace glt::datagen
