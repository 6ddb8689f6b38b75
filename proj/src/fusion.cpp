#include "memefusion/fusion.hpp"

#include <cmath>
#include <stdexcept>

#include "memefusion/errors.hpp"

namespace memefusion {

ModelKind parse_model_kind(const std::string& s) {
  if (s.size() == 2 && (s[0] == 'M' || s[0] == 'm') && s[1] >= '1' && s[1] <= '8') {
    return static_cast<ModelKind>(s[1] - '0');
  }
  throw ConfigError("unknown model configuration '" + s + "' (expected M1..M8)");
}

std::string model_name(ModelKind kind) {
  return "M" + std::to_string(static_cast<int>(kind));
}

std::string model_description(ModelKind kind) {
  switch (kind) {
    case ModelKind::M1: return "M1: Text-Only Baseline";
    case ModelKind::M2: return "M2: Image-Only (Original Images)";
    case ModelKind::M3: return "M3: Image-Only (Text-Removed)";
    case ModelKind::M4: return "M4: Early Fusion (Concatenation)";
    case ModelKind::M5: return "M5: Late Fusion (Soft Voting)";
    case ModelKind::M6: return "M6: Late Fusion (Bagging, k=3)";
    case ModelKind::M7: return "M7: Hybrid Fusion (Cross-Attn + Gating)";
    case ModelKind::M8: return "M8: Hybrid Fusion (Text-Removed Images)";
  }
  return "?";
}

bool needs_text(ModelKind k) { return k != ModelKind::M2 && k != ModelKind::M3; }
bool needs_image(ModelKind k) { return k != ModelKind::M1; }
bool is_hybrid(ModelKind k) { return k == ModelKind::M7 || k == ModelKind::M8; }
bool is_ensemble(ModelKind k) { return k == ModelKind::M5 || k == ModelKind::M6; }

ModelConfigId ModelConfigId::of(ModelKind kind) {
  const bool removed = kind == ModelKind::M3 || kind == ModelKind::M8;
  return {kind, removed ? ImageVariant::text_removed : ImageVariant::original};
}

void ModelConfigId::validate() const {
  const bool removed = id == ModelKind::M3 || id == ModelKind::M8;
  const bool original = id == ModelKind::M2 || id == ModelKind::M7;
  if (removed && image_variant != ImageVariant::text_removed) {
    throw std::invalid_argument(name() + " requires text-removed images");
  }
  if (original && image_variant != ImageVariant::original) {
    throw std::invalid_argument(name() + " requires original images");
  }
}

void HybridHeadConfig::validate() const {
  if (latent_dim < 1 || num_heads < 1 || latent_dim % num_heads != 0) {
    throw std::invalid_argument("latent_dim must be a positive multiple of num_heads");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw std::invalid_argument("dropout_rate must lie in [0, 1)");
  }
  if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
  if (image_dim < 1 || text_dim < 1) throw std::invalid_argument("encoder dims must be positive");
}

// ---------------------------------------------------------------------------

LatentProjection::LatentProjection(int image_dim, int text_dim, int latent_dim)
    : image("projection.image", image_dim, latent_dim),
      text("projection.text", text_dim, latent_dim) {}

std::pair<Matrix, Matrix> LatentProjection::forward(const Matrix& img,
                                                    const Matrix& txt) const {
  return {image.forward(img), text.forward(txt)};
}

void LatentProjection::backward(const Matrix& img, const Matrix& txt,
                                const Matrix& dz_img, const Matrix& dz_txt) {
  image.backward(img, dz_img);
  text.backward(txt, dz_txt);
}

void LatentProjection::collect(ParamList& out) {
  image.collect(out);
  text.collect(out);
}

// ---------------------------------------------------------------------------

CrossModalAttention::CrossModalAttention(int latent_dim, int heads)
    : num_heads(heads),
      type_image("attention.type_image", 1, latent_dim, false),
      type_text("attention.type_text", 1, latent_dim, false),
      query("attention.query", latent_dim, latent_dim),
      key("attention.key", latent_dim, latent_dim),
      value("attention.value", latent_dim, latent_dim),
      output("attention.output", latent_dim, latent_dim),
      norm("attention.norm", latent_dim) {}

void CrossModalAttention::init(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(type_image.value.cols()));
  for (Eigen::Index i = 0; i < type_image.value.size(); ++i) {
    type_image.value.data()[i] = rng.uniform(-bound, bound);
    type_text.value.data()[i] = rng.uniform(-bound, bound);
  }
  query.init(rng);
  key.init(rng);
  value.init(rng);
  output.init(rng);
}

CrossModalAttention::Out CrossModalAttention::forward(const Matrix& z_img,
                                                      const Matrix& z_txt,
                                                      Cache* cache) const {
  const Eigen::Index B = z_img.rows();
  const Eigen::Index d = z_img.cols();
  const Eigen::Index dh = d / num_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix tokens(2 * B, d);
  tokens.topRows(B) = z_img.rowwise() + type_image.value.row(0);
  tokens.bottomRows(B) = z_txt.rowwise() + type_text.value.row(0);

  const Matrix q = query.forward(tokens);
  const Matrix k = key.forward(tokens);
  const Matrix v = value.forward(tokens);

  Matrix mixed(2 * B, d);
  std::vector<Eigen::Matrix2d> probs(static_cast<std::size_t>(B) * num_heads);
  for (Eigen::Index b = 0; b < B; ++b) {
    const Eigen::Index rows[2] = {b, B + b};
    for (int h = 0; h < num_heads; ++h) {
      const Eigen::Index off = h * dh;
      Eigen::Matrix2d p;
      for (int i = 0; i < 2; ++i) {
        double s[2];
        for (int j = 0; j < 2; ++j) {
          s[j] = scale * q.row(rows[i]).segment(off, dh).dot(k.row(rows[j]).segment(off, dh));
        }
        const double m = std::max(s[0], s[1]);
        const double e0 = std::exp(s[0] - m), e1 = std::exp(s[1] - m);
        p(i, 0) = e0 / (e0 + e1);
        p(i, 1) = e1 / (e0 + e1);
      }
      for (int i = 0; i < 2; ++i) {
        mixed.row(rows[i]).segment(off, dh) =
            p(i, 0) * v.row(rows[0]).segment(off, dh) + p(i, 1) * v.row(rows[1]).segment(off, dh);
      }
      probs[static_cast<std::size_t>(b) * num_heads + h] = p;
    }
  }

  const Matrix residual = tokens + output.forward(mixed);
  LayerNorm::Cache ln;
  const Matrix y = norm.forward(residual, cache ? &ln : nullptr);

  Out out{y.topRows(B), y.bottomRows(B), probs};
  if (cache) {
    cache->tokens = tokens;
    cache->q = q;
    cache->k = k;
    cache->v = v;
    cache->mixed = std::move(mixed);
    cache->probs = std::move(probs);
    cache->ln = std::move(ln);
  }
  return out;
}

std::pair<Matrix, Matrix> CrossModalAttention::backward(const Cache& cache,
                                                        const Matrix& dy_img,
                                                        const Matrix& dy_txt) {
  const Eigen::Index B = dy_img.rows();
  const Eigen::Index d = dy_img.cols();
  const Eigen::Index dh = d / num_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix dy(2 * B, d);
  dy.topRows(B) = dy_img;
  dy.bottomRows(B) = dy_txt;
  const Matrix dres = norm.backward(cache.ln, dy);

  Matrix dtokens = dres;
  const Matrix dmixed = output.backward(cache.mixed, dres);

  Matrix dq = Matrix::Zero(2 * B, d);
  Matrix dk = Matrix::Zero(2 * B, d);
  Matrix dv = Matrix::Zero(2 * B, d);
  for (Eigen::Index b = 0; b < B; ++b) {
    const Eigen::Index rows[2] = {b, B + b};
    for (int h = 0; h < num_heads; ++h) {
      const Eigen::Index off = h * dh;
      const Eigen::Matrix2d& p = cache.probs[static_cast<std::size_t>(b) * num_heads + h];
      for (int i = 0; i < 2; ++i) {
        const auto dout = dmixed.row(rows[i]).segment(off, dh);
        double dp[2];
        for (int j = 0; j < 2; ++j) {
          dp[j] = dout.dot(cache.v.row(rows[j]).segment(off, dh));
          dv.row(rows[j]).segment(off, dh) += p(i, j) * dout;
        }
        const double mean = p(i, 0) * dp[0] + p(i, 1) * dp[1];
        for (int j = 0; j < 2; ++j) {
          const double ds = p(i, j) * (dp[j] - mean) * scale;
          dq.row(rows[i]).segment(off, dh) += ds * cache.k.row(rows[j]).segment(off, dh);
          dk.row(rows[j]).segment(off, dh) += ds * cache.q.row(rows[i]).segment(off, dh);
        }
      }
    }
  }
  dtokens += query.backward(cache.tokens, dq);
  dtokens += key.backward(cache.tokens, dk);
  dtokens += value.backward(cache.tokens, dv);

  type_image.grad += dtokens.topRows(B).colwise().sum();
  type_text.grad += dtokens.bottomRows(B).colwise().sum();
  return {dtokens.topRows(B), dtokens.bottomRows(B)};
}

void CrossModalAttention::collect(ParamList& out) {
  out.push_back(&type_image);
  out.push_back(&type_text);
  query.collect(out);
  key.collect(out);
  value.collect(out);
  output.collect(out);
  norm.collect(out);
}

// ---------------------------------------------------------------------------

GateFusion::GateFusion(int latent_dim) : gate("gate", 2 * latent_dim, 2) {}

std::pair<Matrix, Matrix> GateFusion::forward(const Matrix& y_img, const Matrix& y_txt,
                                              Cache* cache) const {
  Matrix concat(y_img.rows(), y_img.cols() + y_txt.cols());
  concat << y_img, y_txt;
  const Matrix probs = softmax_rows(gate.forward(concat));
  Matrix fused = y_img.array().colwise() * probs.col(0).array() +
                 y_txt.array().colwise() * probs.col(1).array();
  if (cache) *cache = {y_img, y_txt, concat, probs};
  return {std::move(fused), probs};
}

std::pair<Matrix, Matrix> GateFusion::backward(const Cache& cache, const Matrix& dfused) {
  const auto& g = cache.probs;
  Matrix dy_img = dfused.array().colwise() * g.col(0).array();
  Matrix dy_txt = dfused.array().colwise() * g.col(1).array();

  Matrix dg(g.rows(), 2);
  dg.col(0) = (dfused.array() * cache.y_img.array()).rowwise().sum();
  dg.col(1) = (dfused.array() * cache.y_txt.array()).rowwise().sum();
  const Eigen::VectorXd dot = (g.array() * dg.array()).rowwise().sum();
  const Matrix dlogits = g.array() * (dg.colwise() - dot).array();

  const Matrix dconcat = gate.backward(cache.concat, dlogits);
  const Eigen::Index d = cache.y_img.cols();
  dy_img += dconcat.leftCols(d);
  dy_txt += dconcat.rightCols(d);
  return {dy_img, dy_txt};
}

// ---------------------------------------------------------------------------

MlpClassifier::MlpClassifier(int input_dim, int num_classes, double rate)
    : hidden("classifier.hidden", input_dim, std::max(1, input_dim / 2)),
      output("classifier.output", std::max(1, input_dim / 2), num_classes),
      dropout_rate(rate) {}

Matrix MlpClassifier::forward(const Matrix& x, bool training, Rng* rng, Cache* cache) const {
  if (x.cols() != input_dim()) {
    throw std::invalid_argument("classifier expects " + std::to_string(input_dim()) +
                                " features, got " + std::to_string(x.cols()));
  }
  Matrix pre = hidden.forward(x);
  Matrix act = pre.unaryExpr([](double v) { return gelu(v); });
  Matrix mask;
  if (training && dropout_rate > 0) {
    if (!rng) throw std::invalid_argument("training-mode dropout needs an rng");
    mask = dropout_mask(act.rows(), act.cols(), dropout_rate, *rng);
    act = act.cwiseProduct(mask);
  }
  Matrix logits = output.forward(act);
  if (cache) *cache = {x, std::move(pre), std::move(act), std::move(mask)};
  return logits;
}

Matrix MlpClassifier::backward(const Cache& cache, const Matrix& dlogits) {
  Matrix dact = output.backward(cache.dropped, dlogits);
  if (cache.mask.size() > 0) dact = dact.cwiseProduct(cache.mask);
  const Matrix dpre = dact.cwiseProduct(cache.pre.unaryExpr([](double v) { return gelu_grad(v); }));
  return hidden.backward(cache.x, dpre);
}

void MlpClassifier::collect(ParamList& out) {
  hidden.collect(out);
  output.collect(out);
}

// ---------------------------------------------------------------------------

namespace {

int classifier_input_for(ModelKind kind, const HybridHeadConfig& h) {
  switch (kind) {
    case ModelKind::M1: return h.text_dim;
    case ModelKind::M2:
    case ModelKind::M3: return h.image_dim;
    case ModelKind::M4: return h.image_dim + h.text_dim;
    case ModelKind::M7:
    case ModelKind::M8: return h.latent_dim;
    default:
      throw std::invalid_argument(model_name(kind) +
                                  " is a late-fusion ensemble; build it with the ensemble module");
  }
}

}  // namespace

FusionModel::FusionModel(ModelConfigId config, HybridHeadConfig head, std::uint64_t seed)
    : config_(config), head_(head), seed_(seed) {
  config_.validate();
  head_.validate();
  Rng rng(seed);
  if (is_hybrid(config_.id)) {
    projection_ = LatentProjection(head_.image_dim, head_.text_dim, head_.latent_dim);
    projection_.image.init(rng);
    projection_.text.init(rng);
    attention_ = CrossModalAttention(head_.latent_dim, head_.num_heads);
    attention_.init(rng);
    gate_ = GateFusion(head_.latent_dim);
    gate_.gate.init(rng);
  }
  classifier_ = MlpClassifier(classifier_input_for(config_.id, head_), head_.num_classes,
                              head_.dropout_rate);
  classifier_.hidden.init(rng);
  classifier_.output.init(rng);
}

FusionModel::Pass FusionModel::forward(const Matrix* img, const Matrix* txt, bool training,
                                       Rng* rng) const {
  const ModelKind kind = config_.id;
  if (needs_image(kind) && !img) throw std::invalid_argument(config_.name() + " needs image embeddings");
  if (needs_text(kind) && !txt) throw std::invalid_argument(config_.name() + " needs text embeddings");
  if (img && img->cols() != head_.image_dim && needs_image(kind)) {
    throw std::invalid_argument("image embedding dim mismatch");
  }
  if (txt && txt->cols() != head_.text_dim && needs_text(kind)) {
    throw std::invalid_argument("text embedding dim mismatch");
  }
  if (img && txt && needs_image(kind) && needs_text(kind) && img->rows() != txt->rows()) {
    throw std::invalid_argument("image/text batch size mismatch");
  }

  Pass pass;
  switch (kind) {
    case ModelKind::M1:
      pass.features = *txt;
      break;
    case ModelKind::M2:
    case ModelKind::M3:
      pass.features = *img;
      break;
    case ModelKind::M4:
      pass.features.resize(img->rows(), img->cols() + txt->cols());
      pass.features << *img, *txt;
      break;
    case ModelKind::M7:
    case ModelKind::M8: {
      pass.img = *img;
      pass.txt = *txt;
      std::tie(pass.z_img, pass.z_txt) = projection_.forward(*img, *txt);
      auto attended = attention_.forward(pass.z_img, pass.z_txt, &pass.attn);
      pass.attention = std::move(attended.attention);
      std::tie(pass.features, pass.gates) =
          gate_.forward(attended.y_img, attended.y_txt, &pass.gate);
      break;
    }
    default:
      classifier_input_for(kind, head_);  // throws
  }
  pass.logits = classifier_.forward(pass.features, training, rng, &pass.cls);
  return pass;
}

void FusionModel::backward(const Pass& pass, const Matrix& dlogits) {
  const Matrix dfeatures = classifier_.backward(pass.cls, dlogits);
  if (!is_hybrid(config_.id)) return;
  auto [dy_img, dy_txt] = gate_.backward(pass.gate, dfeatures);
  auto [dz_img, dz_txt] = attention_.backward(pass.attn, dy_img, dy_txt);
  projection_.backward(pass.img, pass.txt, dz_img, dz_txt);
}

ParamList FusionModel::parameters() {
  ParamList out;
  if (is_hybrid(config_.id)) {
    projection_.collect(out);
    attention_.collect(out);
    gate_.collect(out);
  }
  classifier_.collect(out);
  return out;
}

std::vector<Matrix> FusionModel::state() const {
  auto* self = const_cast<FusionModel*>(this);
  std::vector<Matrix> out;
  for (auto* p : self->parameters()) out.push_back(p->value);
  return out;
}

void FusionModel::load_state(const std::vector<Matrix>& state) {
  auto params = parameters();
  if (params.size() != state.size()) throw std::invalid_argument("state size mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->value.rows() != state[i].rows() || params[i]->value.cols() != state[i].cols()) {
      throw std::invalid_argument("state shape mismatch for " + params[i]->name);
    }
    params[i]->value = state[i];
  }
}

// ---------------------------------------------------------------------------

LatentPair project_to_latent(const ImageEmbedding& img, const TextEmbedding& txt,
                             const LatentProjection& params) {
  auto [zi, zt] = params.forward(img.vector.transpose(), txt.vector.transpose());
  return {zi.row(0).transpose(), zt.row(0).transpose()};
}

LatentPair cross_modal_attention(const LatentPair& pair, const CrossModalAttention& params,
                                 bool /*training*/, std::vector<Eigen::Matrix2d>* attention) {
  auto out = params.forward(pair.z_img.transpose(), pair.z_txt.transpose(), nullptr);
  if (attention) *attention = std::move(out.attention);
  return {out.y_img.row(0).transpose(), out.y_txt.row(0).transpose()};
}

GateWeights gate_from_logits(double logit_img, double logit_txt) {
  const double m = std::max(logit_img, logit_txt);
  const double a = std::exp(logit_img - m), b = std::exp(logit_txt - m);
  return {a / (a + b), b / (a + b)};
}

std::pair<Vector, GateWeights> gate_fuse(const LatentPair& pair, const GateFusion& params) {
  auto [fused, gates] = params.forward(pair.z_img.transpose(), pair.z_txt.transpose(), nullptr);
  return {fused.row(0).transpose(), GateWeights{gates(0, 0), gates(0, 1)}};
}

Vector classify(const Vector& features, const MlpClassifier& head, int num_classes,
                bool training, Rng* rng) {
  if (head.num_classes() != num_classes) {
    throw std::invalid_argument("classifier head has " + std::to_string(head.num_classes()) +
                                " classes, expected " + std::to_string(num_classes));
  }
  return head.forward(features.transpose(), training, rng, nullptr).row(0).transpose();
}

FusionOutput forward_config(const ModelConfigId& config, const ImageEmbedding* img,
                            const TextEmbedding* txt, const FusionModel& model,
                            bool training, Rng* rng) {
  config.validate();
  if (is_ensemble(config.id)) {
    throw std::invalid_argument(config.name() +
                                " is a late-fusion ensemble; use the ensemble module");
  }
  if (!(model.config() == config)) {
    throw std::invalid_argument("model was built for " + model.config().name() +
                                ", not " + config.name());
  }
  if (needs_image(config.id) && !img) {
    throw std::invalid_argument(config.name() + " requires an image embedding");
  }
  if (needs_text(config.id) && !txt) {
    throw std::invalid_argument(config.name() + " requires a text embedding");
  }
  Matrix img_row, txt_row;
  if (img && needs_image(config.id)) img_row = img->vector.transpose();
  if (txt && needs_text(config.id)) txt_row = txt->vector.transpose();
  Rng fallback(model.seed());
  auto pass = model.forward(needs_image(config.id) ? &img_row : nullptr,
                            needs_text(config.id) ? &txt_row : nullptr, training,
                            rng ? rng : &fallback);
  FusionOutput out;
  out.logits = pass.logits.row(0).transpose();
  if (is_hybrid(config.id)) {
    out.gate = GateWeights{pass.gates(0, 0), pass.gates(0, 1)};
    out.attention = std::move(pass.attention);
  }
  return out;
}

}  // namespace memefusion
