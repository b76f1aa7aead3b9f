#ifndef POCUS_MODEL_HPP
#define POCUS_MODEL_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "pocus/backbone.hpp"
#include "pocus/preprocess.hpp"
#include "pocus/rng.hpp"

namespace pocus {

struct ModelConfig {
  int feature_dim = 0;  // filled in from the backbone when the model is built
  std::vector<int> recurrent_layers{16, 8};
  double dropout_rate = 0.0;
  double classification_threshold = 0.5;
  bool backbone_trainable = false;

  void validate() const;
};

// Per-frame backbone features for one clip. Padded steps hold zero rows and
// are excluded from the recurrence via true_length.
struct FeatureSequence {
  Eigen::MatrixXd features;  // steps x dim
  std::vector<std::uint8_t> mask;
  int true_length = 0;
  int label = -1;  // 1 positive, 0 negative, -1 unknown
  std::string source_id;

  int steps() const { return static_cast<int>(features.rows()); }
  int dim() const { return static_cast<int>(features.cols()); }
};

FeatureSequence extract_features(const Clip& clip, const Backbone& backbone);

// Cache entries are tied to the producing configuration via cache_key; a
// mismatch on read is an error so stale features never leak into a run.
void write_feature_sequence(const std::string& path, const FeatureSequence& seq,
                            std::uint64_t cache_key);
FeatureSequence read_feature_sequence(const std::string& path, std::uint64_t cache_key);

struct ForwardResult {
  double probability = 0.0;
  double loss = 0.0;
};

// Stacked GRU layers over the frame features, final hidden state of the last
// layer through a sigmoid unit. Parameters live in one flat vector so the
// optimizer and gradient checks can treat the model as f(theta).
class SequenceClassifier {
 public:
  explicit SequenceClassifier(ModelConfig cfg);
  SequenceClassifier(ModelConfig cfg, Eigen::VectorXd theta);

  void init_params(Rng rng);

  const ModelConfig& config() const { return cfg_; }
  const Eigen::VectorXd& params() const { return theta_; }
  Eigen::VectorXd& params() { return theta_; }
  int param_count() const { return total_; }

  // Inference probability; dropout is never applied here.
  double forward(const FeatureSequence& seq) const;

  // Inference probability plus the matching cross-entropy loss.
  ForwardResult evaluate(const FeatureSequence& seq, int label) const;

  // Binary cross-entropy against label (0 or 1); accumulates d(loss)/d(theta)
  // into grad. Dropout masks are drawn from dropout_rng when given.
  ForwardResult backward(const FeatureSequence& seq, int label, Eigen::VectorXd& grad,
                         Rng* dropout_rng = nullptr) const;

  bool predict(double probability) const {
    return probability >= cfg_.classification_threshold;
  }

 private:
  struct LayerOffsets {
    int in = 0, h = 0;
    int Wz = 0, Wr = 0, Wn = 0;  // h x in, input kernels per gate
    int Uz = 0, Ur = 0, Un = 0;  // h x h, recurrent kernels per gate
    int bz = 0, br = 0, bn = 0;  // h, biases per gate
  };

  void build_layout();
  double score(const FeatureSequence& seq) const;

  ModelConfig cfg_;
  std::vector<LayerOffsets> layers_;
  int head_w_ = 0;
  int head_b_ = 0;
  int total_ = 0;
  Eigen::VectorXd theta_;
};

struct Checkpoint {
  ModelConfig model;
  BackboneSpec backbone;
  std::uint64_t backbone_params_hash = 0;
  PreprocessConfig preprocess;
  Eigen::VectorXd theta;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace pocus

#endif  // POCUS_MODEL_HPP
