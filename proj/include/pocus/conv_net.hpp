#ifndef POCUS_CONV_NET_HPP
#define POCUS_CONV_NET_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "pocus/rng.hpp"

namespace pocus {

// Row-major activation matrix: (h*w) rows, one column per channel, so the
// underlying buffer is plain HWC.
using MatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Inference-only convolutional DAG used for frame feature extraction.
// Nodes are appended in topological order; every conv is conv + batchnorm
// + ReLU (the pattern all supported backbones use). Weights are either
// seeded-random or loaded from a weights file.
class ConvNet {
 public:
  int add_input(int side, int channels);
  int add_conv(int input, int out_ch, int kh, int kw, int stride_h, int stride_w, bool same_pad);
  int add_max_pool(int input, int k, int stride, bool same_pad);
  int add_avg_pool(int input, int k, int stride, bool same_pad);
  int add_concat(const std::vector<int>& inputs);
  int add_global_avg_pool(int input);

  void init_weights(Rng rng);

  // frame: HWC float buffer of shape input_side x input_side x input_channels.
  Eigen::VectorXf forward(const float* frame) const;

  int output_dim() const;
  int input_side() const { return input_side_; }
  int input_channels() const { return input_channels_; }
  int conv_count() const;
  std::uint64_t params_hash() const;

  void save_weights(const std::string& path) const;
  void load_weights(const std::string& path);

 private:
  enum class Kind { kInput, kConv, kMaxPool, kAvgPool, kConcat, kGlobalAvgPool };

  struct Node {
    Kind kind;
    std::vector<int> inputs;
    int out_h = 0, out_w = 0, out_c = 0;
    // conv
    int kh = 0, kw = 0, sh = 1, sw = 1;
    bool same_pad = true;
    MatF kernel;  // (kh*kw*in_c) x out_c
    Eigen::VectorXf bn_scale, bn_offset, bn_mean, bn_var;
    // pool
    int pool_k = 0, pool_s = 1;
  };

  const Node& in_node(const Node& n, int i = 0) const { return nodes_[n.inputs[i]]; }
  int push(Node n);

  std::vector<Node> nodes_;
  int input_side_ = 0;
  int input_channels_ = 0;
};

}  // namespace pocus

#endif  // POCUS_CONV_NET_HPP
