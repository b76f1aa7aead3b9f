#include "pocus/model.hpp"

#include <cmath>
#include <utility>

#include "json.hpp"

#include "pocus/binio.hpp"
#include "pocus/errors.hpp"

namespace pocus {

namespace {

constexpr std::uint32_t kFeatureMagic = 0x53544650;  // "PFTS"
constexpr std::uint32_t kFeatureVersion = 1;
constexpr std::uint32_t kCheckpointMagic = 0x504b4350;  // "PCKP"
constexpr std::uint32_t kCheckpointVersion = 1;

using MapMat = Eigen::Map<const Eigen::MatrixXd>;
using MapVec = Eigen::Map<const Eigen::VectorXd>;
using MutMat = Eigen::Map<Eigen::MatrixXd>;
using MutVec = Eigen::Map<Eigen::VectorXd>;

double sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  double e = std::exp(v);
  return e / (1.0 + e);
}

Eigen::VectorXd sigmoid_vec(Eigen::VectorXd v) {
  return v.unaryExpr([](double x) { return sigmoid(x); });
}

// Binary cross-entropy from the pre-sigmoid score, safe for large |s|.
double bce_from_score(double s, int y) {
  return std::max(s, 0.0) - s * static_cast<double>(y) + std::log1p(std::exp(-std::abs(s)));
}

void check_sequence(const FeatureSequence& seq, int feature_dim) {
  if (seq.dim() != feature_dim)
    throw DataError("feature dim mismatch for " + seq.source_id + ": sequence has " +
                    std::to_string(seq.dim()) + ", model expects " + std::to_string(feature_dim));
  if (seq.true_length < 1 || seq.true_length > seq.steps())
    throw DataError("bad true_length for " + seq.source_id);
}

}  // namespace

void ModelConfig::validate() const {
  if (feature_dim <= 0) throw UsageError("feature_dim must be positive");
  if (recurrent_layers.empty()) throw UsageError("at least one recurrent layer is required");
  for (int h : recurrent_layers)
    if (h <= 0) throw UsageError("recurrent layer sizes must be positive");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw UsageError("dropout_rate must be in [0, 1)");
  if (classification_threshold < 0.0 || classification_threshold > 1.0)
    throw UsageError("classification_threshold must be in [0, 1]");
  if (backbone_trainable)
    throw UsageError("backbone_trainable=true is not supported; the backbone is a frozen feature extractor");
}

FeatureSequence extract_features(const Clip& clip, const Backbone& backbone) {
  FeatureSequence seq;
  seq.features = Eigen::MatrixXd::Zero(clip.t, backbone.feature_dim());
  seq.mask = clip.mask;
  seq.true_length = clip.true_length;
  seq.source_id = clip.source_id;
  for (int i = 0; i < clip.true_length; ++i)
    seq.features.row(i) = backbone.extract(clip, i).cast<double>().transpose();
  return seq;
}

void write_feature_sequence(const std::string& path, const FeatureSequence& seq,
                            std::uint64_t cache_key) {
  BinaryWriter w(path);
  w.u32(kFeatureMagic);
  w.u32(kFeatureVersion);
  w.u64(cache_key);
  w.str(seq.source_id);
  w.u32(static_cast<std::uint32_t>(seq.steps()));
  w.u32(static_cast<std::uint32_t>(seq.dim()));
  w.u32(static_cast<std::uint32_t>(seq.true_length));
  for (int t = 0; t < seq.steps(); ++t)
    for (int j = 0; j < seq.dim(); ++j) w.f32(static_cast<float>(seq.features(t, j)));
}

FeatureSequence read_feature_sequence(const std::string& path, std::uint64_t cache_key) {
  BinaryReader r(path);
  if (r.u32() != kFeatureMagic) throw DataError("not a feature file: " + path);
  if (r.u32() != kFeatureVersion) throw DataError("unsupported feature version in " + path);
  if (r.u64() != cache_key)
    throw DataError("feature file " + path + " was produced with a different configuration");
  FeatureSequence seq;
  seq.source_id = r.str();
  int steps = static_cast<int>(r.u32());
  int dim = static_cast<int>(r.u32());
  seq.true_length = static_cast<int>(r.u32());
  if (steps <= 0 || dim <= 0 || seq.true_length < 1 || seq.true_length > steps)
    throw DataError("corrupt feature file: " + path);
  seq.features.resize(steps, dim);
  for (int t = 0; t < steps; ++t)
    for (int j = 0; j < dim; ++j) seq.features(t, j) = static_cast<double>(r.f32());
  seq.mask.assign(static_cast<std::size_t>(steps), 0);
  for (int t = 0; t < seq.true_length; ++t) seq.mask[static_cast<std::size_t>(t)] = 1;
  return seq;
}

SequenceClassifier::SequenceClassifier(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  build_layout();
  theta_ = Eigen::VectorXd::Zero(total_);
}

SequenceClassifier::SequenceClassifier(ModelConfig cfg, Eigen::VectorXd theta)
    : cfg_(std::move(cfg)) {
  cfg_.validate();
  build_layout();
  if (theta.size() != total_)
    throw DataError("parameter vector has " + std::to_string(theta.size()) + " values, layout needs " +
                    std::to_string(total_));
  theta_ = std::move(theta);
}

void SequenceClassifier::build_layout() {
  int off = 0;
  int in = cfg_.feature_dim;
  auto take = [&off](int n) {
    int at = off;
    off += n;
    return at;
  };
  for (int h : cfg_.recurrent_layers) {
    LayerOffsets L;
    L.in = in;
    L.h = h;
    L.Wz = take(h * in);
    L.Wr = take(h * in);
    L.Wn = take(h * in);
    L.Uz = take(h * h);
    L.Ur = take(h * h);
    L.Un = take(h * h);
    L.bz = take(h);
    L.br = take(h);
    L.bn = take(h);
    layers_.push_back(L);
    in = h;
  }
  head_w_ = take(in);
  head_b_ = take(1);
  total_ = off;
}

void SequenceClassifier::init_params(Rng rng) {
  auto glorot = [&](int off, int n, int fan_in, int fan_out) {
    double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (int k = 0; k < n; ++k) theta_[off + k] = rng.uniform(-limit, limit);
  };
  for (const auto& L : layers_) {
    glorot(L.Wz, L.h * L.in, L.in, L.h);
    glorot(L.Wr, L.h * L.in, L.in, L.h);
    glorot(L.Wn, L.h * L.in, L.in, L.h);
    glorot(L.Uz, L.h * L.h, L.h, L.h);
    glorot(L.Ur, L.h * L.h, L.h, L.h);
    glorot(L.Un, L.h * L.h, L.h, L.h);
    for (int k = 0; k < 3 * L.h; ++k) theta_[L.bz + k] = 0.0;
  }
  int h_last = layers_.back().h;
  glorot(head_w_, h_last, h_last, 1);
  theta_[head_b_] = 0.0;
}

double SequenceClassifier::forward(const FeatureSequence& seq) const {
  return sigmoid(score(seq));
}

ForwardResult SequenceClassifier::evaluate(const FeatureSequence& seq, int label) const {
  if (label != 0 && label != 1) throw DataError("label must be 0 or 1 for " + seq.source_id);
  double s = score(seq);
  return {sigmoid(s), bce_from_score(s, label)};
}

double SequenceClassifier::score(const FeatureSequence& seq) const {
  check_sequence(seq, cfg_.feature_dim);
  const double* th = theta_.data();
  int T = seq.true_length;
  Eigen::MatrixXd X = seq.features.topRows(T).transpose();
  for (const auto& L : layers_) {
    MapMat Wz(th + L.Wz, L.h, L.in), Wr(th + L.Wr, L.h, L.in), Wn(th + L.Wn, L.h, L.in);
    MapMat Uz(th + L.Uz, L.h, L.h), Ur(th + L.Ur, L.h, L.h), Un(th + L.Un, L.h, L.h);
    MapVec bz(th + L.bz, L.h), br(th + L.br, L.h), bn(th + L.bn, L.h);
    Eigen::MatrixXd H(L.h, T);
    Eigen::VectorXd h = Eigen::VectorXd::Zero(L.h);
    for (int t = 0; t < T; ++t) {
      Eigen::VectorXd x = X.col(t);
      Eigen::VectorXd z = sigmoid_vec(Wz * x + Uz * h + bz);
      Eigen::VectorXd r = sigmoid_vec(Wr * x + Ur * h + br);
      Eigen::VectorXd n = (Wn * x + Un * r.cwiseProduct(h) + bn).array().tanh();
      h = (Eigen::VectorXd::Ones(L.h) - z).cwiseProduct(n) + z.cwiseProduct(h);
      H.col(t) = h;
    }
    X = std::move(H);
  }
  MapVec w(th + head_w_, layers_.back().h);
  return w.dot(X.col(T - 1)) + theta_[head_b_];
}

ForwardResult SequenceClassifier::backward(const FeatureSequence& seq, int label,
                                           Eigen::VectorXd& grad, Rng* dropout_rng) const {
  check_sequence(seq, cfg_.feature_dim);
  if (label != 0 && label != 1) throw DataError("label must be 0 or 1 for " + seq.source_id);
  if (grad.size() != total_) throw RuntimeFailure("gradient buffer has the wrong size");

  const double* th = theta_.data();
  int T = seq.true_length;
  int n_layers = static_cast<int>(layers_.size());
  bool use_dropout = cfg_.dropout_rate > 0.0 && dropout_rng != nullptr;
  double keep = 1.0 - cfg_.dropout_rate;

  struct LayerCache {
    Eigen::MatrixXd X;             // in x T, input actually consumed (post-dropout)
    Eigen::MatrixXd H;             // h x (T+1), column t is the state before step t
    Eigen::MatrixXd Z, R, N, HR;   // h x T
    Eigen::MatrixXd drop;          // in x T mask applied to X, empty when unused
  };
  std::vector<LayerCache> caches(static_cast<std::size_t>(n_layers));

  Eigen::MatrixXd input = seq.features.topRows(T).transpose();
  for (int l = 0; l < n_layers; ++l) {
    const auto& L = layers_[static_cast<std::size_t>(l)];
    auto& c = caches[static_cast<std::size_t>(l)];
    c.X = std::move(input);
    if (l > 0 && use_dropout) {
      c.drop = Eigen::MatrixXd::NullaryExpr(L.in, T, [&](Eigen::Index, Eigen::Index) {
        return dropout_rng->uniform() < cfg_.dropout_rate ? 0.0 : 1.0 / keep;
      });
      c.X = c.X.cwiseProduct(c.drop);
    }
    MapMat Wz(th + L.Wz, L.h, L.in), Wr(th + L.Wr, L.h, L.in), Wn(th + L.Wn, L.h, L.in);
    MapMat Uz(th + L.Uz, L.h, L.h), Ur(th + L.Ur, L.h, L.h), Un(th + L.Un, L.h, L.h);
    MapVec bz(th + L.bz, L.h), br(th + L.br, L.h), bn(th + L.bn, L.h);
    c.H = Eigen::MatrixXd::Zero(L.h, T + 1);
    c.Z.resize(L.h, T);
    c.R.resize(L.h, T);
    c.N.resize(L.h, T);
    c.HR.resize(L.h, T);
    for (int t = 0; t < T; ++t) {
      Eigen::VectorXd x = c.X.col(t);
      Eigen::VectorXd h_prev = c.H.col(t);
      Eigen::VectorXd z = sigmoid_vec(Wz * x + Uz * h_prev + bz);
      Eigen::VectorXd r = sigmoid_vec(Wr * x + Ur * h_prev + br);
      Eigen::VectorXd hr = r.cwiseProduct(h_prev);
      Eigen::VectorXd n = (Wn * x + Un * hr + bn).array().tanh();
      c.Z.col(t) = z;
      c.R.col(t) = r;
      c.N.col(t) = n;
      c.HR.col(t) = hr;
      c.H.col(t + 1) = (Eigen::VectorXd::Ones(L.h) - z).cwiseProduct(n) + z.cwiseProduct(h_prev);
    }
    input = c.H.rightCols(T);
  }

  int h_last = layers_.back().h;
  Eigen::VectorXd head_mask;
  Eigen::VectorXd h_fin = caches.back().H.col(T);
  if (use_dropout) {
    head_mask = Eigen::VectorXd::NullaryExpr(h_last, [&](Eigen::Index) {
      return dropout_rng->uniform() < cfg_.dropout_rate ? 0.0 : 1.0 / keep;
    });
    h_fin = h_fin.cwiseProduct(head_mask);
  }
  MapVec w(th + head_w_, h_last);
  double s = w.dot(h_fin) + theta_[head_b_];

  ForwardResult out;
  out.probability = sigmoid(s);
  out.loss = bce_from_score(s, label);

  double dscore = out.probability - static_cast<double>(label);
  MutVec(grad.data() + head_w_, h_last) += dscore * h_fin;
  grad[head_b_] += dscore;

  Eigen::VectorXd dh_fin = dscore * w;
  if (use_dropout) dh_fin = dh_fin.cwiseProduct(head_mask);

  // dH_out: gradient arriving at each layer's per-step outputs from above.
  Eigen::MatrixXd dH_out = Eigen::MatrixXd::Zero(h_last, T);
  dH_out.col(T - 1) = dh_fin;

  for (int l = n_layers - 1; l >= 0; --l) {
    const auto& L = layers_[static_cast<std::size_t>(l)];
    const auto& c = caches[static_cast<std::size_t>(l)];
    MapMat Wz(th + L.Wz, L.h, L.in), Wr(th + L.Wr, L.h, L.in), Wn(th + L.Wn, L.h, L.in);
    MapMat Uz(th + L.Uz, L.h, L.h), Ur(th + L.Ur, L.h, L.h), Un(th + L.Un, L.h, L.h);
    MutMat GWz(grad.data() + L.Wz, L.h, L.in), GWr(grad.data() + L.Wr, L.h, L.in),
        GWn(grad.data() + L.Wn, L.h, L.in);
    MutMat GUz(grad.data() + L.Uz, L.h, L.h), GUr(grad.data() + L.Ur, L.h, L.h),
        GUn(grad.data() + L.Un, L.h, L.h);
    MutVec Gbz(grad.data() + L.bz, L.h), Gbr(grad.data() + L.br, L.h), Gbn(grad.data() + L.bn, L.h);

    Eigen::MatrixXd dX(L.in, T);
    Eigen::VectorXd dh = Eigen::VectorXd::Zero(L.h);
    for (int t = T - 1; t >= 0; --t) {
      dh += dH_out.col(t);
      Eigen::VectorXd z = c.Z.col(t), r = c.R.col(t), n = c.N.col(t), hr = c.HR.col(t);
      Eigen::VectorXd h_prev = c.H.col(t);
      Eigen::VectorXd x = c.X.col(t);
      Eigen::VectorXd dz = dh.cwiseProduct(h_prev - n);
      Eigen::VectorXd dn = dh.cwiseProduct(Eigen::VectorXd::Ones(L.h) - z);
      Eigen::VectorXd dpre_n = dn.cwiseProduct((Eigen::VectorXd::Ones(L.h) - n.cwiseProduct(n)));
      Eigen::VectorXd dhr = Un.transpose() * dpre_n;
      Eigen::VectorXd dr = dhr.cwiseProduct(h_prev);
      Eigen::VectorXd dpre_r =
          dr.cwiseProduct(r).cwiseProduct(Eigen::VectorXd::Ones(L.h) - r);
      Eigen::VectorXd dpre_z =
          dz.cwiseProduct(z).cwiseProduct(Eigen::VectorXd::Ones(L.h) - z);
      GWz += dpre_z * x.transpose();
      GUz += dpre_z * h_prev.transpose();
      Gbz += dpre_z;
      GWr += dpre_r * x.transpose();
      GUr += dpre_r * h_prev.transpose();
      Gbr += dpre_r;
      GWn += dpre_n * x.transpose();
      GUn += dpre_n * hr.transpose();
      Gbn += dpre_n;
      dX.col(t) = Wz.transpose() * dpre_z + Wr.transpose() * dpre_r + Wn.transpose() * dpre_n;
      dh = dh.cwiseProduct(z) + dhr.cwiseProduct(r) + Uz.transpose() * dpre_z +
           Ur.transpose() * dpre_r;
    }
    if (l > 0) {
      if (c.drop.size() > 0) dX = dX.cwiseProduct(c.drop);
      dH_out = std::move(dX);
    }
  }
  return out;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  nlohmann::json header;
  header["format"] = "pocus-checkpoint";
  header["model"] = {
      {"feature_dim", ck.model.feature_dim},
      {"recurrent_layers", ck.model.recurrent_layers},
      {"dropout_rate", ck.model.dropout_rate},
      {"classification_threshold", ck.model.classification_threshold},
      {"backbone_trainable", ck.model.backbone_trainable},
  };
  header["backbone"] = {
      {"id", ck.backbone.id},
      {"seed", ck.backbone.seed},
      {"weights_path", ck.backbone.weights_path},
      {"params_hash", ck.backbone_params_hash},
  };
  nlohmann::json pp = {
      {"max_frames", ck.preprocess.max_frames},
      {"frame_side", ck.preprocess.frame_side},
      {"frame_stride", ck.preprocess.frame_stride},
  };
  if (ck.preprocess.crop) {
    pp["crop"] = {{"x", ck.preprocess.crop->x},
                  {"y", ck.preprocess.crop->y},
                  {"w", ck.preprocess.crop->w},
                  {"h", ck.preprocess.crop->h}};
  }
  header["preprocess"] = pp;
  header["param_count"] = ck.theta.size();

  BinaryWriter w(path);
  w.u32(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.str(header.dump());
  w.f64_array(ck.theta.data(), static_cast<std::size_t>(ck.theta.size()));
}

Checkpoint load_checkpoint(const std::string& path) {
  BinaryReader r(path);
  if (r.u32() != kCheckpointMagic) throw DataError("not a checkpoint file: " + path);
  if (r.u32() != kCheckpointVersion) throw DataError("unsupported checkpoint version in " + path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.str(1 << 24));
  } catch (const nlohmann::json::exception&) {
    throw DataError("corrupt checkpoint header in " + path);
  }
  Checkpoint ck;
  try {
    if (header.at("format").get<std::string>() != "pocus-checkpoint")
      throw DataError("not a checkpoint file: " + path);
    const auto& m = header.at("model");
    ck.model.feature_dim = m.at("feature_dim").get<int>();
    ck.model.recurrent_layers = m.at("recurrent_layers").get<std::vector<int>>();
    ck.model.dropout_rate = m.at("dropout_rate").get<double>();
    ck.model.classification_threshold = m.at("classification_threshold").get<double>();
    ck.model.backbone_trainable = m.at("backbone_trainable").get<bool>();
    const auto& b = header.at("backbone");
    ck.backbone.id = b.at("id").get<std::string>();
    ck.backbone.seed = b.at("seed").get<std::uint64_t>();
    ck.backbone.weights_path = b.at("weights_path").get<std::string>();
    ck.backbone_params_hash = b.at("params_hash").get<std::uint64_t>();
    const auto& pp = header.at("preprocess");
    ck.preprocess.max_frames = pp.at("max_frames").get<int>();
    ck.preprocess.frame_side = pp.at("frame_side").get<int>();
    ck.preprocess.frame_stride = pp.at("frame_stride").get<int>();
    if (pp.contains("crop")) {
      CropRect c;
      c.x = pp.at("crop").at("x").get<int>();
      c.y = pp.at("crop").at("y").get<int>();
      c.w = pp.at("crop").at("w").get<int>();
      c.h = pp.at("crop").at("h").get<int>();
      ck.preprocess.crop = c;
    }
    std::int64_t count = header.at("param_count").get<std::int64_t>();
    if (count < 0) throw DataError("corrupt checkpoint header in " + path);
    ck.theta.resize(count);
  } catch (const nlohmann::json::exception&) {
    throw DataError("corrupt checkpoint header in " + path);
  }
  r.f64_array(ck.theta.data(), static_cast<std::size_t>(ck.theta.size()));
  ck.model.validate();
  SequenceClassifier check(ck.model);  // verifies the stored vector fits the layout
  if (check.param_count() != ck.theta.size())
    throw DataError("checkpoint parameter count does not match its model config: " + path);
  return ck;
}

}  // namespace pocus
