#include "trailmap/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "trailmap/errors.hpp"
#include "trailmap/matching.hpp"
#include "trailmap/rng.hpp"

namespace trailmap {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'T', 'R', 'L', 'M', 'A', 'P', 'C', 'K'};

int stage_count(int stride) {
  int s = 0;
  while ((1 << s) < stride) ++s;
  return s;
}

int stage_channels(const ModelConfig& c, int s) { return std::min(c.base_channels << s, c.d_model); }

int conv_out(int size) { return (size + 2 - 3) / 2 + 1; }

enum class Init { kXavier, kZero, kOne, kNormal };

struct ParamBuilder {
  Model& model;
  Rng rng;

  void add(const std::string& name, std::vector<int> shape, Init init, int fan_in = 0, int fan_out = 0) {
    Parameter p{name, shape, {}};
    std::size_t count = 1;
    for (int d : shape) count *= static_cast<std::size_t>(d);
    p.value.assign(count, 0.0);
    switch (init) {
      case Init::kZero: break;
      case Init::kOne: std::fill(p.value.begin(), p.value.end(), 1.0); break;
      case Init::kNormal:
        for (double& v : p.value) v = rng.normal();
        break;
      case Init::kXavier: {
        const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (double& v : p.value) v = rng.uniform(-a, a);
        break;
      }
    }
    model.params.push_back(std::move(p));
  }

  void linear(const std::string& name, int in, int out) {
    add(name + ".w", {in, out}, Init::kXavier, in, out);
    add(name + ".b", {out}, Init::kZero);
  }

  void conv(const std::string& name, int cin, int cout) {
    add(name + ".w", {9 * cin, cout}, Init::kXavier, 9 * cin, cout);
    add(name + ".b", {cout}, Init::kZero);
  }

  void norm(const std::string& name, int d) {
    add(name + ".g", {d}, Init::kOne);
    add(name + ".b", {d}, Init::kZero);
  }
};

// Walks the parameter list in creation order during graph construction.
struct ParamCursor {
  const Model& model;
  const std::vector<ag::Var>& nodes;
  std::size_t next = 0;

  ag::Var take(const std::string& name) {
    if (next >= nodes.size() || model.params[next].name != name) {
      throw ShapeError("parameter layout mismatch at '" + name + "'");
    }
    return nodes[next++];
  }
};

std::vector<double> positional_encoding(int hf, int wf, int d) {
  std::vector<double> pos(static_cast<std::size_t>(hf) * wf * d, 0.0);
  const int quarter = d / 4;
  for (int i = 0; i < hf; ++i) {
    for (int j = 0; j < wf; ++j) {
      double* p = pos.data() + (static_cast<std::size_t>(i) * wf + j) * d;
      const double yi = (i + 0.5) / hf * 2.0 * std::numbers::pi;
      const double xj = (j + 0.5) / wf * 2.0 * std::numbers::pi;
      for (int f = 0; f < quarter; ++f) {
        const double freq = std::pow(2.0, f);
        p[4 * f + 0] = std::sin(yi * freq);
        p[4 * f + 1] = std::cos(yi * freq);
        p[4 * f + 2] = std::sin(xj * freq);
        p[4 * f + 3] = std::cos(xj * freq);
      }
    }
  }
  return pos;
}

}  // namespace

void ModelConfig::validate() const {
  if (in_channels < 1 || grid_w < 1 || grid_h < 1) throw ValidationError("model input shape must be positive");
  if (queries < 1 || points < 2) throw ValidationError("model needs >= 1 query and >= 2 points");
  if (heads < 1 || d_model % heads != 0) throw ValidationError("d_model must be divisible by heads");
  if (feature_stride < 2 || (feature_stride & (feature_stride - 1)) != 0) {
    throw ValidationError("feature_stride must be a power of two >= 2");
  }
  if (decoder_layers < 1 || base_channels < 1 || ffn_dim < 1) throw ValidationError("model sizes must be >= 1");
  if (aux_queries < 0 || aux_copies < 1) throw ValidationError("aux group needs aux_queries >= 0, aux_copies >= 1");
}

json ModelConfig::to_json() const {
  return {{"in_channels", in_channels}, {"grid_w", grid_w},
          {"grid_h", grid_h},           {"queries", queries},
          {"points", points},           {"d_model", d_model},
          {"decoder_layers", decoder_layers}, {"heads", heads},
          {"feature_stride", feature_stride}, {"score_head", score_head},
          {"base_channels", base_channels},   {"ffn_dim", ffn_dim},
          {"aux_queries", aux_queries},       {"aux_copies", aux_copies},
          {"init_seed", init_seed}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  try {
    c.in_channels = j.at("in_channels").get<int>();
    c.grid_w = j.at("grid_w").get<int>();
    c.grid_h = j.at("grid_h").get<int>();
    c.queries = j.at("queries").get<int>();
    c.points = j.at("points").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.decoder_layers = j.at("decoder_layers").get<int>();
    c.heads = j.at("heads").get<int>();
    c.feature_stride = j.at("feature_stride").get<int>();
    c.score_head = j.at("score_head").get<bool>();
    c.base_channels = j.at("base_channels").get<int>();
    c.ffn_dim = j.at("ffn_dim").get<int>();
    c.aux_queries = j.at("aux_queries").get<int>();
    c.aux_copies = j.at("aux_copies").get<int>();
    c.init_seed = j.at("init_seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

json LossWeights::to_json() const {
  return {{"one2one", one2one}, {"one2many", one2many}, {"score", score}, {"dir", dir}};
}

LossWeights LossWeights::from_json(const json& j) {
  LossWeights w;
  w.one2one = j.value("one2one", w.one2one);
  w.one2many = j.value("one2many", w.one2many);
  w.score = j.value("score", w.score);
  w.dir = j.value("dir", w.dir);
  return w;
}

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
  total += o.total;
  one2one += o.one2one;
  one2many += o.one2many;
  score += o.score;
  dir += o.dir;
  matched += o.matched;
  return *this;
}

Model Model::initialize(const ModelConfig& config) {
  config.validate();
  Model model;
  model.config = config;
  ParamBuilder b{model, Rng(config.init_seed)};
  const int d = config.d_model;

  int cin = config.in_channels;
  for (int s = 0; s < stage_count(config.feature_stride); ++s) {
    const int cs = stage_channels(config, s);
    const std::string p = "enc.s" + std::to_string(s);
    b.conv(p + ".down", cin, cs);
    b.conv(p + ".res1", cs, cs);
    b.conv(p + ".res2", cs, cs);
    cin = cs;
  }
  b.linear("enc.proj", cin, d);

  b.add("dec.query", {config.queries, d}, Init::kNormal);
  if (config.aux_queries > 0) b.add("dec.aux_query", {config.aux_copies * config.aux_queries, d}, Init::kNormal);
  for (int l = 0; l < config.decoder_layers; ++l) {
    const std::string p = "dec.l" + std::to_string(l);
    for (const char* att : {".sa", ".ca"}) {
      for (const char* proj : {".q", ".k", ".v", ".o"}) b.linear(p + att + proj, d, d);
    }
    b.norm(p + ".ln1", d);
    b.norm(p + ".ln2", d);
    b.linear(p + ".ffn1", d, config.ffn_dim);
    b.linear(p + ".ffn2", config.ffn_dim, d);
    b.norm(p + ".ln3", d);
  }
  b.linear("head.reg1", d, d);
  b.linear("head.reg2", d, 2 * config.points);
  if (config.score_head) b.linear("head.score", d, 1);
  return model;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params) n += p.value.size();
  return n;
}

const Parameter& Model::param(const std::string& name) const {
  for (const auto& p : params) {
    if (p.name == name) return p;
  }
  throw ValidationError("no parameter named '" + name + "'");
}

ForwardGraph build_forward(ag::Graph& g, const Model& model, std::span<const double> input, bool with_aux,
                           bool param_grads) {
  const ModelConfig& c = model.config;
  const std::size_t expected = static_cast<std::size_t>(c.grid_w) * c.grid_h * c.in_channels;
  if (input.size() != expected) {
    throw ShapeError("model input has " + std::to_string(input.size()) + " values, expected " +
                     std::to_string(c.grid_w) + "x" + std::to_string(c.grid_h) + "x" + std::to_string(c.in_channels));
  }

  ForwardGraph out;
  out.param_nodes.reserve(model.params.size());
  for (const auto& p : model.params) {
    out.param_nodes.push_back(param_grads ? g.leaf(p.shape, p.value) : g.constant(p.shape, p.value));
  }
  ParamCursor pc{model, out.param_nodes};

  // Encoder
  ag::Var x = g.constant({c.grid_w, c.grid_h, c.in_channels}, std::vector<double>(input.begin(), input.end()));
  int hf = c.grid_w;
  int wf = c.grid_h;
  for (int s = 0; s < stage_count(c.feature_stride); ++s) {
    const std::string p = "enc.s" + std::to_string(s);
    ag::Var w = pc.take(p + ".down.w");
    ag::Var b = pc.take(p + ".down.b");
    x = ag::silu(g, ag::conv2d(g, x, w, b, 3, 2, 1));
    hf = conv_out(hf);
    wf = conv_out(wf);
    w = pc.take(p + ".res1.w");
    b = pc.take(p + ".res1.b");
    ag::Var t = ag::silu(g, ag::conv2d(g, x, w, b, 3, 1, 1));
    w = pc.take(p + ".res2.w");
    b = pc.take(p + ".res2.b");
    t = ag::conv2d(g, t, w, b, 3, 1, 1);
    x = ag::silu(g, ag::add(g, x, t));
  }
  {
    ag::Var w = pc.take("enc.proj.w");
    ag::Var b = pc.take("enc.proj.b");
    x = ag::linear(g, x, w, b);
  }
  const int d = c.d_model;
  x->shape = {hf * wf, d};
  ag::Var memory = x;
  ag::Var memory_keyed = ag::add(g, memory, g.constant({hf * wf, d}, positional_encoding(hf, wf, d)));

  ag::Var queries = pc.take("dec.query");
  ag::Var aux_queries = c.aux_queries > 0 ? pc.take("dec.aux_query") : nullptr;
  std::vector<ag::Var> groups{queries};
  if (with_aux && aux_queries) groups.push_back(aux_queries);

  for (int l = 0; l < c.decoder_layers; ++l) {
    const std::string p = "dec.l" + std::to_string(l);
    auto lin = [&](const std::string& name) { return std::pair{pc.take(p + name + ".w"), pc.take(p + name + ".b")}; };
    const auto [sq_w, sq_b] = lin(".sa.q");
    const auto [sk_w, sk_b] = lin(".sa.k");
    const auto [sv_w, sv_b] = lin(".sa.v");
    const auto [so_w, so_b] = lin(".sa.o");
    const auto [cq_w, cq_b] = lin(".ca.q");
    const auto [ck_w, ck_b] = lin(".ca.k");
    const auto [cv_w, cv_b] = lin(".ca.v");
    const auto [co_w, co_b] = lin(".ca.o");
    const ag::Var ln1_g = pc.take(p + ".ln1.g");
    const ag::Var ln1_b = pc.take(p + ".ln1.b");
    const ag::Var ln2_g = pc.take(p + ".ln2.g");
    const ag::Var ln2_b = pc.take(p + ".ln2.b");
    const auto [f1_w, f1_b] = lin(".ffn1");
    const auto [f2_w, f2_b] = lin(".ffn2");
    const ag::Var ln3_g = pc.take(p + ".ln3.g");
    const ag::Var ln3_b = pc.take(p + ".ln3.b");

    // Memory projections are shared by both query groups.
    const ag::Var mem_k = ag::linear(g, memory_keyed, ck_w, ck_b);
    const ag::Var mem_v = ag::linear(g, memory, cv_w, cv_b);
    for (ag::Var& t : groups) {
      ag::Var a = ag::attention(g, ag::linear(g, t, sq_w, sq_b), ag::linear(g, t, sk_w, sk_b),
                                ag::linear(g, t, sv_w, sv_b), c.heads);
      t = ag::layer_norm(g, ag::add(g, t, ag::linear(g, a, so_w, so_b)), ln1_g, ln1_b);
      a = ag::attention(g, ag::linear(g, t, cq_w, cq_b), mem_k, mem_v, c.heads);
      t = ag::layer_norm(g, ag::add(g, t, ag::linear(g, a, co_w, co_b)), ln2_g, ln2_b);
      ag::Var f = ag::linear(g, ag::silu(g, ag::linear(g, t, f1_w, f1_b)), f2_w, f2_b);
      t = ag::layer_norm(g, ag::add(g, t, f), ln3_g, ln3_b);
    }
  }

  const ag::Var r1_w = pc.take("head.reg1.w");
  const ag::Var r1_b = pc.take("head.reg1.b");
  const ag::Var r2_w = pc.take("head.reg2.w");
  const ag::Var r2_b = pc.take("head.reg2.b");
  ag::Var s_w = nullptr;
  ag::Var s_b = nullptr;
  if (c.score_head) {
    s_w = pc.take("head.score.w");
    s_b = pc.take("head.score.b");
  }
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    ag::Var t = groups[gi];
    ag::Var coords = ag::sigmoid(g, ag::linear(g, ag::silu(g, ag::linear(g, t, r1_w, r1_b)), r2_w, r2_b));
    ag::Var logits = c.score_head ? ag::linear(g, t, s_w, s_b) : nullptr;
    if (gi == 0) {
      out.coords = coords;
      out.logits = logits;
    } else {
      out.aux_coords = coords;
      out.aux_logits = logits;
    }
  }
  return out;
}

PredictionSet forward(const Model& model, std::span<const double> input) {
  ag::Graph g;
  const ForwardGraph out = build_forward(g, model, input, false, false);
  const auto m = static_cast<std::size_t>(model.config.points);
  const auto q = static_cast<std::size_t>(model.config.queries);
  PredictionSet ps;
  ps.polylines.resize(q);
  for (std::size_t i = 0; i < q; ++i) {
    for (std::size_t k = 0; k < m; ++k) {
      ps.polylines[i].push_back({out.coords->value[i * 2 * m + 2 * k], out.coords->value[i * 2 * m + 2 * k + 1]});
    }
  }
  if (out.logits) {
    std::vector<double> scores(q);
    for (std::size_t i = 0; i < q; ++i) scores[i] = 1.0 / (1.0 + std::exp(-out.logits->value[i]));
    ps.scores = std::move(scores);
  }
  return ps;
}

namespace {

std::vector<Vec2> row_points(const std::vector<double>& values, std::size_t row, std::size_t m) {
  std::vector<Vec2> pts(m);
  for (std::size_t k = 0; k < m; ++k) pts[k] = {values[row * 2 * m + 2 * k], values[row * 2 * m + 2 * k + 1]};
  return pts;
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

struct GroupMatch {
  Assignment assignment;
  std::vector<std::vector<Vec2>> preds;
};

GroupMatch match_group(const ag::Var coords, std::size_t m, std::span<const std::vector<Vec2>> targets) {
  const std::size_t q = coords->numel() / (2 * m);
  GroupMatch gm;
  for (std::size_t i = 0; i < q; ++i) gm.preds.push_back(row_points(coords->value, i, m));
  CostMatrix cost(q, targets.size());
  for (std::size_t i = 0; i < q; ++i)
    for (std::size_t n = 0; n < targets.size(); ++n) cost.at(i, n) = polyline_cost(gm.preds[i], targets[n]);
  gm.assignment = hungarian(cost);
  return gm;
}

// Point L1 loss over matched pairs, normalized by the target count. Sums run
// over queries, so the value does not depend on the order of the targets.
double point_loss(const GroupMatch& gm, std::span<const std::vector<Vec2>> targets, std::size_t m, double weight,
                  std::vector<double>* grad) {
  if (targets.empty()) return 0.0;
  const double norm = 1.0 / (static_cast<double>(m) * static_cast<double>(targets.size()));
  const auto pred_to_gt = gm.assignment.pred_to_gt(gm.preds.size());
  double loss = 0.0;
  for (std::size_t qi = 0; qi < gm.preds.size(); ++qi) {
    if (pred_to_gt[qi] < 0) continue;
    const auto& p = gm.preds[qi];
    const auto& t = targets[static_cast<std::size_t>(pred_to_gt[qi])];
    for (std::size_t k = 0; k < m; ++k) {
      const double dx = p[k].x - t[k].x;
      const double dy = p[k].y - t[k].y;
      loss += (std::abs(dx) + std::abs(dy)) * norm;
      if (grad) {
        (*grad)[qi * 2 * m + 2 * k] += weight * norm * sign(dx);
        (*grad)[qi * 2 * m + 2 * k + 1] += weight * norm * sign(dy);
      }
    }
  }
  return loss;
}

// 1 - cos between matched predicted and target edges, averaged.
double direction_loss(const GroupMatch& gm, std::span<const std::vector<Vec2>> targets, std::size_t m, double weight,
                      std::vector<double>* grad) {
  if (targets.empty() || m < 2) return 0.0;
  constexpr double kEps2 = 1e-12;
  const double norm = 1.0 / (static_cast<double>(m - 1) * static_cast<double>(targets.size()));
  const auto pred_to_gt = gm.assignment.pred_to_gt(gm.preds.size());
  double loss = 0.0;
  for (std::size_t qi = 0; qi < gm.preds.size(); ++qi) {
    if (pred_to_gt[qi] < 0) continue;
    const auto& p = gm.preds[qi];
    const auto& tp = targets[static_cast<std::size_t>(pred_to_gt[qi])];
    for (std::size_t k = 0; k + 1 < m; ++k) {
      const Vec2 e = p[k + 1] - p[k];
      const Vec2 t = tp[k + 1] - tp[k];
      const double ne = std::sqrt(dot(e, e) + kEps2);
      const double nt = std::sqrt(dot(t, t) + kEps2);
      const double et = dot(e, t);
      const double cosv = et / (ne * nt);
      loss += (1.0 - cosv) * norm;
      if (grad) {
        // d(1 - cos)/de
        const Vec2 dcos = t * (1.0 / (ne * nt)) - e * (et / (ne * ne * ne * nt));
        const Vec2 ge = dcos * (-weight * norm);
        const std::size_t base = qi * 2 * m;
        (*grad)[base + 2 * (k + 1)] += ge.x;
        (*grad)[base + 2 * (k + 1) + 1] += ge.y;
        (*grad)[base + 2 * k] -= ge.x;
        (*grad)[base + 2 * k + 1] -= ge.y;
      }
    }
  }
  return loss;
}

double score_loss(const GroupMatch& gm, const ag::Var logits, double weight, std::vector<double>* grad) {
  const std::size_t q = logits->numel();
  const auto pred_to_gt = gm.assignment.pred_to_gt(q);
  double loss = 0.0;
  for (std::size_t i = 0; i < q; ++i) {
    const double z = logits->value[i];
    const double y = pred_to_gt[i] >= 0 ? 1.0 : 0.0;
    // softplus(z) - y z, evaluated stably
    const double softplus = std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
    loss += (softplus - y * z) / static_cast<double>(q);
    if (grad) (*grad)[i] += weight * (1.0 / (1.0 + std::exp(-z)) - y) / static_cast<double>(q);
  }
  return loss;
}

}  // namespace

LossBreakdown set_loss(ag::Graph& g, const ForwardGraph& out, const ModelConfig& config,
                       std::span<const std::vector<Vec2>> targets, const LossWeights& weights, bool seed_grads) {
  const auto m = static_cast<std::size_t>(config.points);
  for (const auto& t : targets) {
    if (t.size() != m) throw ShapeError("target path has " + std::to_string(t.size()) + " points, model emits " +
                                        std::to_string(m));
  }
  LossBreakdown lb;
  {
    const GroupMatch gm = match_group(out.coords, m, targets);
    std::vector<double> grad_c(seed_grads ? out.coords->numel() : 0, 0.0);
    auto* gc = seed_grads ? &grad_c : nullptr;
    lb.one2one = point_loss(gm, targets, m, weights.one2one, gc);
    lb.dir = direction_loss(gm, targets, m, weights.dir, gc);
    for (int v : gm.assignment.gt_to_pred) lb.matched += v >= 0 ? 1 : 0;
    if (seed_grads) g.seed(out.coords, grad_c);
    if (out.logits) {
      std::vector<double> grad_s(seed_grads ? out.logits->numel() : 0, 0.0);
      lb.score = score_loss(gm, out.logits, weights.score, seed_grads ? &grad_s : nullptr);
      if (seed_grads) g.seed(out.logits, grad_s);
    }
  }
  if (out.aux_coords) {
    const auto expanded = one_to_many_targets<std::vector<Vec2>>(targets, config.aux_copies);
    const GroupMatch gm = match_group(out.aux_coords, m, expanded);
    std::vector<double> grad_c(seed_grads ? out.aux_coords->numel() : 0, 0.0);
    lb.one2many = point_loss(gm, expanded, m, weights.one2many, seed_grads ? &grad_c : nullptr);
    if (seed_grads) g.seed(out.aux_coords, grad_c);
  }
  lb.total = weights.one2one * lb.one2one + weights.one2many * lb.one2many + weights.score * lb.score +
             weights.dir * lb.dir;
  return lb;
}

namespace {

bool wants_aux(const Model& model, const LossWeights& w) { return model.config.aux_queries > 0 && w.one2many != 0.0; }

}  // namespace

SampleGradient compute_gradients(const Model& model, const TrainSample& sample, const LossWeights& weights) {
  ag::Graph g;
  const ForwardGraph out = build_forward(g, model, sample.input, wants_aux(model, weights), true);
  SampleGradient sg;
  sg.loss = set_loss(g, out, model.config, sample.targets, weights, true);
  g.backward();
  sg.grads.resize(model.params.size());
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    const auto& gr = out.param_nodes[i]->grad;
    sg.grads[i] = gr.empty() ? std::vector<double>(model.params[i].value.size(), 0.0) : gr;
  }
  return sg;
}

double total_loss(const Model& model, const TrainSample& sample, const LossWeights& weights) {
  ag::Graph g;
  const ForwardGraph out = build_forward(g, model, sample.input, wants_aux(model, weights), false);
  return set_loss(g, out, model.config, sample.targets, weights, false).total;
}

AdamState AdamState::for_model(const Model& model) {
  AdamState s;
  for (const auto& p : model.params) {
    s.m.emplace_back(p.value.size(), 0.0);
    s.v.emplace_back(p.value.size(), 0.0);
  }
  return s;
}

LossBreakdown train_step(Model& model, AdamState& state, std::span<const TrainSample* const> batch,
                         const LossWeights& weights, const OptimizerConfig& opt, double lr_scale) {
  if (batch.empty()) return {};
  std::vector<SampleGradient> per(batch.size());
  std::vector<std::string> errors(batch.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t b = 0; b < batch.size(); ++b) {
    try {
      per[b] = compute_gradients(model, *batch[b], weights);
    } catch (const std::exception& e) {
      errors[b] = e.what();
    }
  }
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (!errors[b].empty()) throw std::runtime_error("tile '" + batch[b]->tile_id + "': " + errors[b]);
  }

  LossBreakdown mean;
  const double inv = 1.0 / static_cast<double>(batch.size());
  std::vector<std::vector<double>> grads(model.params.size());
  for (std::size_t i = 0; i < model.params.size(); ++i) grads[i].assign(model.params[i].value.size(), 0.0);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (!std::isfinite(per[b].loss.total)) {
      throw std::runtime_error("non-finite loss on tile '" + batch[b]->tile_id + "' (one2one " +
                               std::to_string(per[b].loss.one2one) + ", one2many " +
                               std::to_string(per[b].loss.one2many) + ", score " + std::to_string(per[b].loss.score) +
                               ", dir " + std::to_string(per[b].loss.dir) + ")");
    }
    mean += per[b].loss;
    for (std::size_t i = 0; i < grads.size(); ++i)
      for (std::size_t j = 0; j < grads[i].size(); ++j) grads[i][j] += per[b].grads[i][j] * inv;
  }
  mean.total *= inv;
  mean.one2one *= inv;
  mean.one2many *= inv;
  mean.score *= inv;
  mean.dir *= inv;

  double clip = 1.0;
  if (opt.grad_clip > 0.0) {
    double sq = 0.0;
    for (const auto& gr : grads)
      for (double v : gr) sq += v * v;
    const double gnorm = std::sqrt(sq);
    if (gnorm > opt.grad_clip) clip = opt.grad_clip / gnorm;
  }

  ++state.step;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
  const double lr = opt.lr * lr_scale;
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    auto& p = model.params[i].value;
    auto& m1 = state.m[i];
    auto& m2 = state.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = grads[i][j] * clip;
      m1[j] = opt.beta1 * m1[j] + (1.0 - opt.beta1) * gj;
      m2[j] = opt.beta2 * m2[j] + (1.0 - opt.beta2) * gj * gj;
      p[j] -= lr * (m1[j] / bc1) / (std::sqrt(m2[j] / bc2) + opt.eps);
    }
  }
  return mean;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model, const json& extra) {
  json tensors = json::array();
  std::size_t offset = 0;
  for (const auto& p : model.params) {
    tensors.push_back({{"name", p.name}, {"shape", p.shape}, {"offset", offset}, {"count", p.value.size()}});
    offset += p.value.size();
  }
  json header = {{"format", "trailmap-checkpoint"},
                 {"version", 1},
                 {"dtype", "float32-le"},
                 {"config", model.config.to_json()},
                 {"tensors", tensors}};
  if (!extra.is_null()) header["extra"] = extra;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kMagic, 8);
  std::uint64_t len = text.size();
  if constexpr (std::endian::native == std::endian::big) len = __builtin_bswap64(len);
  out.write(reinterpret_cast<const char*>(&len), 8);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  std::vector<char> bytes(offset * 4);
  std::size_t k = 0;
  for (const auto& p : model.params) {
    for (double v : p.value) {
      auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
      std::memcpy(bytes.data() + 4 * k++, &bits, 4);
    }
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Model load_checkpoint(const std::filesystem::path& path, json* extra) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StageError("missing checkpoint " + path.string() + " (produce it with `trailmap train`)");
  char magic[8];
  std::uint64_t len = 0;
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw ParseError(path.string() + ": not a checkpoint");
  in.read(reinterpret_cast<char*>(&len), 8);
  if constexpr (std::endian::native == std::endian::big) len = __builtin_bswap64(len);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": bad header: " + e.what());
  }
  if (!header.contains("version")) throw ParseError(path.string() + ": checkpoint header lacks a version");
  if (header["version"].get<int>() != 1) {
    throw StageError(path.string() + ": checkpoint version " + header["version"].dump() +
                     " is not supported; retrain with `trailmap train`");
  }
  Model model = Model::initialize(ModelConfig::from_json(header.at("config")));
  if (extra) *extra = header.value("extra", json());
  const auto& tensors = header.at("tensors");
  if (tensors.size() != model.params.size()) throw ParseError(path.string() + ": tensor table does not match config");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    auto& p = model.params[i];
    const auto& t = tensors[i];
    if (t.at("name").get<std::string>() != p.name || t.at("count").get<std::size_t>() != p.value.size()) {
      throw ParseError(path.string() + ": tensor '" + t.at("name").get<std::string>() + "' does not match config");
    }
    const auto offset = t.at("offset").get<std::size_t>();
    if ((offset + p.value.size()) * 4 > bytes.size()) throw ParseError(path.string() + ": truncated tensor data");
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      std::uint32_t bits = 0;
      std::memcpy(&bits, bytes.data() + 4 * (offset + j), 4);
      if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
      p.value[j] = std::bit_cast<float>(bits);
    }
  }
  return model;
}

std::vector<Vec2> normalize_path(std::span<const Vec2> tile_m, const GridSpec& spec) {
  std::vector<Vec2> out;
  out.reserve(tile_m.size());
  for (const Vec2& p : tile_m) out.push_back({p.x / spec.w_glob, p.y / spec.h_glob});
  return out;
}

std::vector<Vec2> denormalize_path(std::span<const Vec2> normalized, const GridSpec& spec) {
  std::vector<Vec2> out;
  out.reserve(normalized.size());
  for (const Vec2& p : normalized) out.push_back({p.x * spec.w_glob, p.y * spec.h_glob});
  return out;
}

}  // namespace trailmap
