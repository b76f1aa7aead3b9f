#ifndef POCUS_BACKBONE_HPP
#define POCUS_BACKBONE_HPP

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "pocus/conv_net.hpp"
#include "pocus/preprocess.hpp"

namespace pocus {

// Provenance of the frame feature extractor. When weights_path is empty the
// net is initialized from seed, which keeps runs reproducible but is only
// useful for synthetic data and smoke tests; real screening needs converted
// pretrained weights (see docs/formats.md).
struct BackboneSpec {
  std::string id = "inception_v3";
  std::uint64_t seed = 7;
  std::string weights_path;
};

// Frozen per-frame feature extractor. Parameters never change after
// construction; extraction is a pure function of the frame.
class Backbone {
 public:
  static std::vector<std::string> known_ids();
  // Input side for an architecture id without instantiating its weights.
  static int canonical_input_side(const std::string& id);
  static std::unique_ptr<Backbone> create(const BackboneSpec& spec);

  const std::string& id() const { return spec_.id; }
  const BackboneSpec& spec() const { return spec_; }
  int input_side() const { return net_.input_side(); }
  // Output dimensionality, read from the instantiated architecture.
  int feature_dim() const { return net_.output_dim(); }
  std::uint64_t params_hash() const { return net_.params_hash(); }

  Eigen::VectorXf extract(const Clip& clip, int frame_index) const;

  void save_weights(const std::string& path) const { net_.save_weights(path); }

 private:
  Backbone(BackboneSpec spec, ConvNet net) : spec_(std::move(spec)), net_(std::move(net)) {}

  BackboneSpec spec_;
  ConvNet net_;
};

}  // namespace pocus

#endif  // POCUS_BACKBONE_HPP
