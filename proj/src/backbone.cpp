#include "pocus/backbone.hpp"

#include "pocus/errors.hpp"

namespace pocus {

namespace {

// Reduced backbone for synthetic corpora and fast tests.
ConvNet build_tiny() {
  ConvNet net;
  int x = net.add_input(32, 3);
  x = net.add_conv(x, 8, 3, 3, 2, 2, true);
  x = net.add_conv(x, 16, 3, 3, 2, 2, true);
  net.add_global_avg_pool(x);
  return net;
}

// InceptionV3 feature extractor: stem, three 35x35 blocks, grid reduction,
// four 17x17 blocks, grid reduction, two 8x8 blocks, global average pool.
ConvNet build_inception_v3() {
  ConvNet net;
  auto conv = [&net](int in, int ch, int kh, int kw, int s = 1, bool same = true) {
    return net.add_conv(in, ch, kh, kw, s, s, same);
  };

  int x = net.add_input(299, 3);
  x = conv(x, 32, 3, 3, 2, false);   // 149x149
  x = conv(x, 32, 3, 3, 1, false);   // 147x147
  x = conv(x, 64, 3, 3);             // 147x147
  x = net.add_max_pool(x, 3, 2, false);  // 73x73
  x = conv(x, 80, 1, 1, 1, false);
  x = conv(x, 192, 3, 3, 1, false);  // 71x71
  x = net.add_max_pool(x, 3, 2, false);  // 35x35x192

  // 35x35 blocks; pool_ch is 32 for the first block, 64 afterwards.
  for (int pool_ch : {32, 64, 64}) {
    int b1 = conv(x, 64, 1, 1);
    int b5 = conv(conv(x, 48, 1, 1), 64, 5, 5);
    int b3 = conv(conv(conv(x, 64, 1, 1), 96, 3, 3), 96, 3, 3);
    int bp = conv(net.add_avg_pool(x, 3, 1, true), pool_ch, 1, 1);
    x = net.add_concat({b1, b5, b3, bp});
  }

  // Reduction to 17x17x768.
  {
    int b3 = conv(x, 384, 3, 3, 2, false);
    int bd = conv(conv(conv(x, 64, 1, 1), 96, 3, 3), 96, 3, 3, 2, false);
    int bp = net.add_max_pool(x, 3, 2, false);
    x = net.add_concat({b3, bd, bp});
  }

  // 17x17 blocks with 128/160/160/192 channels in the factorized 7x7 towers.
  for (int ch : {128, 160, 160, 192}) {
    int b1 = conv(x, 192, 1, 1);
    int b7 = conv(conv(conv(x, ch, 1, 1), ch, 1, 7), 192, 7, 1);
    int bd = conv(conv(conv(conv(conv(x, ch, 1, 1), ch, 7, 1), ch, 1, 7), ch, 7, 1), 192, 1, 7);
    int bp = conv(net.add_avg_pool(x, 3, 1, true), 192, 1, 1);
    x = net.add_concat({b1, b7, bd, bp});
  }

  // Reduction to 8x8x1280.
  {
    int b3 = conv(conv(x, 192, 1, 1), 320, 3, 3, 2, false);
    int b7 = conv(conv(conv(conv(x, 192, 1, 1), 192, 1, 7), 192, 7, 1), 192, 3, 3, 2, false);
    int bp = net.add_max_pool(x, 3, 2, false);
    x = net.add_concat({b3, b7, bp});
  }

  // 8x8 blocks with split 3x3 towers, ending at 2048 channels.
  for (int i = 0; i < 2; ++i) {
    int b1 = conv(x, 320, 1, 1);
    int b3_stem = conv(x, 384, 1, 1);
    int b3 = net.add_concat({conv(b3_stem, 384, 1, 3), conv(b3_stem, 384, 3, 1)});
    int bd_stem = conv(conv(x, 448, 1, 1), 384, 3, 3);
    int bd = net.add_concat({conv(bd_stem, 384, 1, 3), conv(bd_stem, 384, 3, 1)});
    int bp = conv(net.add_avg_pool(x, 3, 1, true), 192, 1, 1);
    x = net.add_concat({b1, b3, bd, bp});
  }

  net.add_global_avg_pool(x);
  return net;
}

}  // namespace

std::vector<std::string> Backbone::known_ids() { return {"inception_v3", "tiny"}; }

int Backbone::canonical_input_side(const std::string& id) {
  if (id == "inception_v3") return 299;
  if (id == "tiny") return 32;
  std::string known;
  for (const auto& k : known_ids()) known += (known.empty() ? "" : ", ") + k;
  throw UsageError("unknown backbone '" + id + "' (known: " + known + ")");
}

std::unique_ptr<Backbone> Backbone::create(const BackboneSpec& spec) {
  ConvNet net;
  if (spec.id == "inception_v3") {
    net = build_inception_v3();
  } else if (spec.id == "tiny") {
    net = build_tiny();
  } else {
    std::string known;
    for (const auto& id : known_ids()) known += (known.empty() ? "" : ", ") + id;
    throw UsageError("unknown backbone '" + spec.id + "' (known: " + known + ")");
  }
  net.init_weights(Rng::derived(spec.seed, "backbone/" + spec.id));
  if (!spec.weights_path.empty()) net.load_weights(spec.weights_path);
  return std::unique_ptr<Backbone>(new Backbone(spec, std::move(net)));
}

Eigen::VectorXf Backbone::extract(const Clip& clip, int frame_index) const {
  if (clip.h != input_side() || clip.w != input_side() || clip.c != net_.input_channels())
    throw DataError("clip " + clip.source_id + " has shape " + std::to_string(clip.h) + "x" +
                    std::to_string(clip.w) + "x" + std::to_string(clip.c) + ", backbone '" + id() +
                    "' expects " + std::to_string(input_side()) + "x" + std::to_string(input_side()) + "x3");
  if (frame_index < 0 || frame_index >= clip.t)
    throw DataError("frame index out of range for clip " + clip.source_id);
  return net_.forward(clip.frame(frame_index));
}

}  // namespace pocus
