#include "rgc/localgnn/policy.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rgc/common/error.hpp"
#include "rgc/common/kv.hpp"
#include "rgc/diffcore/checkpoint.hpp"

namespace rgc::localgnn {

namespace {

using diffcore::Shape;
using diffcore::Tape;

std::string layer_prefix(std::size_t layer) { return "layer" + std::to_string(layer) + "."; }

struct Dense {
  std::string weight;
  std::string bias;
};

Dense dense(const std::string& prefix) { return {prefix + ".weight", prefix + ".bias"}; }

void add_dense(diffcore::ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng) {
  store.add(prefix + ".weight", diffcore::glorot_uniform({in, out}, in, out, rng));
  store.add(prefix + ".bias", Tensor({out}));
}

// The network is written once against a binder that maps a parameter name to
// a Var: tape.param for training, tape.constant for inference on const params.
template <typename Bind>
class Network {
 public:
  Network(const GnnConfig& config, Bind bind) : c_(config), bind_(std::move(bind)) {}

  Var affine(Var x, const std::string& prefix) {
    Dense d = dense(prefix);
    return diffcore::matmul_affine(x, bind_(d.weight), bind_(d.bias));
  }

  Var two_layer(Var x, const std::string& prefix) {
    return affine(diffcore::relu(affine(x, prefix + ".0")), prefix + ".1");
  }

  Var embed(Var points) {
    require(points.value().rank() == 2 && points.value().dim(1) == 2, ErrorKind::kDimension,
            "embed expects [N x 2] points");
    require(points.value().dim(0) > 0, ErrorKind::kEmptyInput, "embed of an empty keypoint set");
    return two_layer(points, "embed");
  }

  // Messages for `targets` ([B*N x d]) from `sources` ([B*M x d]).
  Var messages(Var targets, Var sources, std::size_t batch, const std::string& prefix) {
    const std::size_t d = c_.dim;
    const std::size_t n = targets.value().dim(0) / batch, m = sources.value().dim(0) / batch;
    Var q = diffcore::reshape(affine(targets, prefix + "query"), {batch, n, d});
    Var k = diffcore::reshape(affine(sources, prefix + "key"), {batch, m, d});
    Var v = diffcore::reshape(affine(sources, prefix + "value"), {batch, m, d});
    Var scores = diffcore::scale(diffcore::batched_matmul(q, k, true), 1.0 / std::sqrt(double(d)));
    Var mixed = diffcore::batched_matmul(diffcore::softmax(scores), v);
    return diffcore::reshape(mixed, {batch * n, d});
  }

  Var update(Var x, Var message, const std::string& prefix) {
    return diffcore::add(x, two_layer(diffcore::concat_cols(x, message), prefix + "update"));
  }

  GraphPair layer(const GraphPair& in, std::size_t l, AttentionMode mode) {
    require(l < c_.layer_count(), ErrorKind::kDimension,
            "layer " + std::to_string(l) + " of a " + std::to_string(c_.layer_count()) + "-layer policy");
    check_nodes(in);
    const std::string prefix = layer_prefix(l);
    const bool self = mode == AttentionMode::kSelf;
    Var msg_t = messages(in.current, self ? in.current : in.goal, in.batch, prefix);
    Var msg_g = messages(in.goal, self ? in.goal : in.current, in.batch, prefix);
    return {update(in.current, msg_t, prefix), update(in.goal, msg_g, prefix), in.batch};
  }

  PolicyOutput forward(Var current_points, Var goal_points) {
    const Tensor& pt = current_points.value();
    const Tensor& pg = goal_points.value();
    require(pt.rank() == 3 && pg.rank() == 3 && pt.dim(2) == 2 && pg.dim(2) == 2 && pt.dim(0) == pg.dim(0),
            ErrorKind::kDimension, "policy_forward expects points [B x m x 2] and [B x n x 2]");
    require(pt.dim(1) > 0 && pg.dim(1) > 0 && pt.dim(0) > 0, ErrorKind::kEmptyInput,
            "policy_forward needs nonempty keypoint sets");
    const std::size_t b = pt.dim(0), m = pt.dim(1), n = pg.dim(1);
    GraphPair pair{embed(diffcore::reshape(current_points, {b * m, 2})),
                   embed(diffcore::reshape(goal_points, {b * n, 2})), b};
    for (std::size_t l = 0; l < c_.layer_count(); ++l) pair = layer(pair, l, c_.mode(l));
    PolicyOutput out;
    out.pick_logits = diffcore::reshape(two_layer(pair.current, "pick"), {b, m});
    out.place_logits = diffcore::reshape(two_layer(pair.goal, "place"), {b, n});
    out.q_pick = diffcore::softmax(out.pick_logits);
    out.q_place = diffcore::softmax(out.place_logits);
    return out;
  }

 private:
  void check_nodes(const GraphPair& in) const {
    for (Var v : {in.current, in.goal}) {
      const Tensor& t = v.value();
      require(t.rank() == 2 && t.dim(1) == c_.dim, ErrorKind::kDimension, "node embeddings must be [N x d]");
      require(in.batch > 0 && t.dim(0) > 0 && t.dim(0) % in.batch == 0, ErrorKind::kDimension,
              "node count is not a multiple of the batch");
    }
  }

  const GnnConfig& c_;
  Bind bind_;
};

auto trainable(Tape& tape, PolicyParams& params) {
  return Network(params.config, [&tape, &params](const std::string& name) { return tape.param(params.store.get(name)); });
}

auto frozen(Tape& tape, const PolicyParams& params) {
  return Network(params.config,
                 [&tape, &params](const std::string& name) { return tape.constant(params.store.get(name).value); });
}

std::vector<double> to_vector(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

std::string GnnConfig::descriptor() const {
  std::ostringstream out;
  out << "local-gnn keypoints=" << keypoints << " dim=" << dim << " self=" << self_layers << " cross=" << cross_layers
      << " embed_hidden=" << embed_hidden << " update_hidden=" << update_hidden << " head_hidden=" << head_hidden
      << " width=" << width << " height=" << height;
  return out.str();
}

GnnConfig GnnConfig::from_descriptor(const std::string& text) {
  auto kv = parse_kv_tokens(text);
  GnnConfig c;
  c.keypoints = kv_size(kv, "keypoints");
  c.dim = kv_size(kv, "dim");
  c.self_layers = kv_size(kv, "self");
  c.cross_layers = kv_size(kv, "cross");
  c.embed_hidden = kv_size(kv, "embed_hidden");
  c.update_hidden = kv_size(kv, "update_hidden");
  c.head_hidden = kv_size(kv, "head_hidden");
  c.width = kv_size(kv, "width");
  c.height = kv_size(kv, "height");
  c.validate();
  return c;
}

void GnnConfig::validate() const {
  require(dim >= 2, ErrorKind::kConfig, "embedding dim must be at least 2");
  require(self_layers >= 1 && cross_layers >= 1, ErrorKind::kConfig, "need at least one self and one cross layer");
  require(keypoints >= 1, ErrorKind::kConfig, "keypoint count must be positive");
  require(embed_hidden > 0 && update_hidden > 0 && head_hidden > 0, ErrorKind::kConfig,
          "hidden widths must be positive");
  require(width > 0 && height > 0, ErrorKind::kConfig, "observation size must be positive");
}

PolicyParams init_policy(const GnnConfig& config, Rng& rng) {
  config.validate();
  PolicyParams params{config, {}};
  const std::size_t d = config.dim;
  add_dense(params.store, "embed.0", 2, config.embed_hidden, rng);
  add_dense(params.store, "embed.1", config.embed_hidden, d, rng);
  for (std::size_t l = 0; l < config.layer_count(); ++l) {
    const std::string p = layer_prefix(l);
    add_dense(params.store, p + "query", d, d, rng);
    add_dense(params.store, p + "key", d, d, rng);
    add_dense(params.store, p + "value", d, d, rng);
    add_dense(params.store, p + "update.0", 2 * d, config.update_hidden, rng);
    add_dense(params.store, p + "update.1", config.update_hidden, d, rng);
  }
  for (const char* head : {"pick", "place"}) {
    add_dense(params.store, std::string(head) + ".0", d, config.head_hidden, rng);
    add_dense(params.store, std::string(head) + ".1", config.head_hidden, 1, rng);
  }
  return params;
}

void save_policy(const std::filesystem::path& path, const PolicyParams& params,
                 const std::vector<std::string>& provenance) {
  std::vector<std::string> text{"#arch " + params.config.descriptor()};
  for (const auto& line : provenance) text.push_back("#provenance " + line);
  diffcore::write_checkpoint(path, diffcore::params_to_entries(params.store, text));
}

PolicyParams load_policy(const std::filesystem::path& path) {
  auto entries = diffcore::read_checkpoint(path);
  std::string arch = diffcore::find_text_entry(entries, "#arch local-gnn ");
  require(!arch.empty(), ErrorKind::kIo, path.string() + " is not a local-gnn checkpoint");
  Rng rng(0);
  PolicyParams params = init_policy(GnnConfig::from_descriptor(arch), rng);
  diffcore::load_params(entries, params.store);
  return params;
}

std::size_t parameter_count(const GnnConfig& c) {
  const std::size_t d = c.dim, h = c.embed_hidden, u = c.update_hidden, k = c.head_hidden;
  const std::size_t embed = (2 * h + h) + (h * d + d);
  const std::size_t layer = 3 * (d * d + d) + (2 * d * u + u) + (u * d + d);
  const std::size_t head = (d * k + k) + (k + 1);
  return embed + c.layer_count() * layer + 2 * head;
}

std::uint64_t forward_flops(const GnnConfig& c, std::size_t m, std::size_t n) {
  const std::uint64_t d = c.dim, h = c.embed_hidden, u = c.update_hidden, k = c.head_hidden;
  auto affine = [](std::uint64_t rows, std::uint64_t in, std::uint64_t out) { return 2 * rows * in * out + rows * out; };
  auto embed = [&](std::uint64_t N) { return affine(N, 2, h) + N * h + affine(N, h, d); };
  // Queries from N nodes attending over M keys, then the residual update.
  auto layer = [&](std::uint64_t N, std::uint64_t M) {
    const std::uint64_t projections = affine(N, d, d) + 2 * affine(M, d, d);
    const std::uint64_t attention = 2 * N * M * d + N * M + 4 * N * M + 2 * N * M * d;
    const std::uint64_t mlp = affine(N, 2 * d, u) + N * u + affine(N, u, d) + N * d;
    return projections + attention + mlp;
  };
  auto head = [&](std::uint64_t N) { return affine(N, d, k) + N * k + affine(N, k, 1) + 4 * N; };
  std::uint64_t total = embed(m) + embed(n) + head(m) + head(n);
  for (std::size_t l = 0; l < c.layer_count(); ++l)
    total += c.mode(l) == AttentionMode::kSelf ? layer(m, m) + layer(n, n) : layer(m, n) + layer(n, m);
  return total;
}

Tensor normalize_keypoints(const KeypointSet& points, std::size_t width, std::size_t height) {
  require(width > 0 && height > 0, ErrorKind::kConfig, "normalization needs a positive image size");
  Tensor out({points.size(), 2});
  for (std::size_t i = 0; i < points.size(); ++i) {
    out[2 * i] = (2.0 * points[i].x + 1.0) / double(width) - 1.0;
    out[2 * i + 1] = (2.0 * points[i].y + 1.0) / double(height) - 1.0;
  }
  return out;
}

Tensor stack_normalized(const std::vector<const KeypointSet*>& sets, std::size_t width, std::size_t height) {
  require(!sets.empty(), ErrorKind::kEmptyInput, "no keypoint sets to stack");
  const std::size_t m = sets.front()->size();
  Tensor out({sets.size(), m, 2});
  for (std::size_t b = 0; b < sets.size(); ++b) {
    require(sets[b]->size() == m, ErrorKind::kDimension, "keypoint sets in a batch must have equal size");
    Tensor one = normalize_keypoints(*sets[b], width, height);
    std::copy(one.raw(), one.raw() + one.numel(), out.raw() + b * m * 2);
  }
  return out;
}

Var embed(Var points, PolicyParams& params) { return trainable(points.tape(), params).embed(points); }

GraphPair attention_update(const GraphPair& pair, std::size_t layer, AttentionMode mode, PolicyParams& params) {
  return trainable(pair.current.tape(), params).layer(pair, layer, mode);
}

PolicyOutput policy_forward(Var current_points, Var goal_points, PolicyParams& params) {
  return trainable(current_points.tape(), params).forward(current_points, goal_points);
}

Var policy_loss(const PolicyOutput& out, const std::vector<std::size_t>& pick_labels,
                const std::vector<std::size_t>& place_labels, double w_pick, double w_place) {
  const Tensor& lp = out.pick_logits.value();
  const Tensor& lq = out.place_logits.value();
  const std::size_t b = lp.dim(0);
  require(pick_labels.size() == b && place_labels.size() == b, ErrorKind::kDimension,
          "one pick and one place label per batch row");
  Tensor wp(lp.shape()), wq(lq.shape());
  for (std::size_t i = 0; i < b; ++i) {
    require(pick_labels[i] < lp.dim(1) && place_labels[i] < lq.dim(1), ErrorKind::kDimension,
            "label index outside the keypoint set");
    wp[i * lp.dim(1) + pick_labels[i]] = -w_pick / double(b);
    wq[i * lq.dim(1) + place_labels[i]] = -w_place / double(b);
  }
  return diffcore::add(diffcore::weighted_sum(diffcore::log_softmax(out.pick_logits), wp),
                       diffcore::weighted_sum(diffcore::log_softmax(out.place_logits), wq));
}

Tensor embed_keypoints(const KeypointSet& points, const PolicyParams& params) {
  require(!points.empty(), ErrorKind::kEmptyInput, "embed of an empty keypoint set");
  Tape tape;
  return frozen(tape, params)
      .embed(tape.constant(normalize_keypoints(points, params.config.width, params.config.height)))
      .value();
}

NodeEmbeddings attention_update(const NodeEmbeddings& nodes, std::size_t layer, AttentionMode mode,
                                const PolicyParams& params) {
  Tape tape;
  GraphPair out = frozen(tape, params).layer({tape.constant(nodes.current), tape.constant(nodes.goal), 1}, layer, mode);
  return {out.current.value(), out.goal.value()};
}

PolicyLogits policy_logits(const KeypointSet& current, const KeypointSet& goal, const PolicyParams& params) {
  require(!current.empty() && !goal.empty(), ErrorKind::kEmptyInput, "policy_forward needs nonempty keypoint sets");
  const GnnConfig& c = params.config;
  Tape tape;
  PolicyOutput out = frozen(tape, params)
                         .forward(tape.constant(stack_normalized({&current}, c.width, c.height)),
                                  tape.constant(stack_normalized({&goal}, c.width, c.height)));
  return {to_vector(out.pick_logits.value()), to_vector(out.place_logits.value())};
}

ActionDistribution policy_forward(const KeypointSet& current, const KeypointSet& goal, const PolicyParams& params) {
  require(!current.empty() && !goal.empty(), ErrorKind::kEmptyInput, "policy_forward needs nonempty keypoint sets");
  const GnnConfig& c = params.config;
  Tape tape;
  PolicyOutput out = frozen(tape, params)
                         .forward(tape.constant(stack_normalized({&current}, c.width, c.height)),
                                  tape.constant(stack_normalized({&goal}, c.width, c.height)));
  return {to_vector(out.q_pick.value()), to_vector(out.q_place.value())};
}

std::size_t argmax_first(const std::vector<double>& values) {
  require(!values.empty(), ErrorKind::kEmptyInput, "argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

defsim::Action select_action(const ActionDistribution& dist, const KeypointSet& current, const KeypointSet& goal,
                             std::size_t width, std::size_t height) {
  require(dist.pick.size() == current.size() && dist.place.size() == goal.size(), ErrorKind::kDimension,
          "distribution sizes do not match the keypoint sets");
  defsim::Action a;
  a.pick.position = pixel_to_world(current[argmax_first(dist.pick)], width, height);
  a.place.position = pixel_to_world(goal[argmax_first(dist.place)], width, height);
  return a;
}

double policy_loss(const ActionDistribution& dist, const std::vector<double>& y_pick,
                   const std::vector<double>& y_place, double w_pick, double w_place) {
  require(y_pick.size() == dist.pick.size() && y_place.size() == dist.place.size(), ErrorKind::kDimension,
          "label length does not match the distribution");
  double pick = 0.0, place = 0.0;
  for (std::size_t i = 0; i < y_pick.size(); ++i)
    if (y_pick[i] != 0.0) pick -= y_pick[i] * std::log(dist.pick[i]);
  for (std::size_t i = 0; i < y_place.size(); ++i)
    if (y_place[i] != 0.0) place -= y_place[i] * std::log(dist.place[i]);
  return w_pick * pick + w_place * place;
}

}  // namespace rgc::localgnn
