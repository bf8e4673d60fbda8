#include "rgc/benchkit/mlp.hpp"

#include <sstream>

#include "rgc/common/error.hpp"
#include "rgc/common/kv.hpp"
#include "rgc/diffcore/checkpoint.hpp"
#include "rgc/diffcore/ops.hpp"

namespace rgc::benchkit {

namespace {

using diffcore::Tape;
using diffcore::Tensor;

std::string weight_name(std::size_t layer) { return "layer" + std::to_string(layer) + ".weight"; }
std::string bias_name(std::size_t layer) { return "layer" + std::to_string(layer) + ".bias"; }

std::vector<std::size_t> widths(const MlpConfig& c) {
  std::vector<std::size_t> w{c.input_dim()};
  w.insert(w.end(), c.hidden.begin(), c.hidden.end());
  w.push_back(c.output_dim());
  return w;
}

template <typename Bind>
PolicyOutput forward(Var current_points, Var goal_points, const MlpConfig& c, Bind&& bind) {
  const Tensor& pt = current_points.value();
  const Tensor& pg = goal_points.value();
  require(pt.rank() == 3 && pg.rank() == 3 && pt.dim(2) == 2 && pg.dim(2) == 2 && pt.dim(0) == pg.dim(0),
          ErrorKind::kDimension, "mlp_forward expects points [B x m x 2] and [B x m x 2]");
  require(pt.dim(1) == c.keypoints && pg.dim(1) == c.keypoints, ErrorKind::kDimension,
          "keypoint-MLP built for " + std::to_string(c.keypoints) + " keypoints got " + std::to_string(pt.dim(1)) +
              " and " + std::to_string(pg.dim(1)));
  const std::size_t b = pt.dim(0), m = c.keypoints;
  Var x = diffcore::concat_cols(diffcore::reshape(current_points, {b, 2 * m}),
                                diffcore::reshape(goal_points, {b, 2 * m}));
  const std::size_t layers = c.hidden.size() + 1;
  for (std::size_t l = 0; l < layers; ++l) {
    x = diffcore::matmul_affine(x, bind(weight_name(l)), bind(bias_name(l)));
    if (l + 1 < layers) x = diffcore::relu(x);
  }
  PolicyOutput out;
  out.pick_logits = diffcore::slice_cols(x, 0, m);
  out.place_logits = diffcore::slice_cols(x, m, 2 * m);
  out.q_pick = diffcore::softmax(out.pick_logits);
  out.q_place = diffcore::softmax(out.place_logits);
  return out;
}

}  // namespace

std::string MlpConfig::descriptor() const {
  std::ostringstream out;
  out << "keypoint-mlp keypoints=" << keypoints << " hidden=" << join_sizes(hidden) << " width=" << width
      << " height=" << height;
  return out.str();
}

MlpConfig MlpConfig::from_descriptor(const std::string& text) {
  auto kv = parse_kv_tokens(text);
  MlpConfig c;
  c.keypoints = kv_size(kv, "keypoints");
  c.hidden = parse_size_list(kv_required(kv, "hidden"));
  c.width = kv_size(kv, "width");
  c.height = kv_size(kv, "height");
  c.validate();
  return c;
}

void MlpConfig::validate() const {
  require(keypoints >= 1, ErrorKind::kConfig, "keypoint count must be positive");
  require(!hidden.empty(), ErrorKind::kConfig, "keypoint-MLP needs at least one hidden layer");
  for (std::size_t h : hidden) require(h > 0, ErrorKind::kConfig, "hidden widths must be positive");
  require(width > 0 && height > 0, ErrorKind::kConfig, "observation size must be positive");
}

MlpParams init_mlp(const MlpConfig& config, Rng& rng) {
  config.validate();
  MlpParams params{config, {}};
  const auto w = widths(config);
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    params.store.add(weight_name(l), diffcore::glorot_uniform({w[l], w[l + 1]}, w[l], w[l + 1], rng));
    params.store.add(bias_name(l), Tensor({w[l + 1]}));
  }
  return params;
}

void save_mlp(const std::filesystem::path& path, const MlpParams& params, const std::vector<std::string>& provenance) {
  std::vector<std::string> text{"#arch " + params.config.descriptor()};
  for (const auto& line : provenance) text.push_back("#provenance " + line);
  diffcore::write_checkpoint(path, diffcore::params_to_entries(params.store, text));
}

MlpParams load_mlp(const std::filesystem::path& path) {
  auto entries = diffcore::read_checkpoint(path);
  std::string arch = diffcore::find_text_entry(entries, "#arch keypoint-mlp ");
  require(!arch.empty(), ErrorKind::kIo, path.string() + " is not a keypoint-mlp checkpoint");
  Rng rng(0);
  MlpParams params = init_mlp(MlpConfig::from_descriptor(arch), rng);
  diffcore::load_params(entries, params.store);
  return params;
}

std::size_t mlp_parameter_count(const MlpConfig& config) {
  const auto w = widths(config);
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) total += w[l] * w[l + 1] + w[l + 1];
  return total;
}

std::uint64_t mlp_forward_flops(const MlpConfig& config) {
  const auto w = widths(config);
  std::uint64_t total = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    total += 2ULL * w[l] * w[l + 1] + w[l + 1];
    if (l + 2 < w.size()) total += w[l + 1];
  }
  return total + 4ULL * config.output_dim();
}

PolicyOutput mlp_forward(Var current_points, Var goal_points, MlpParams& params) {
  Tape& tape = current_points.tape();
  return forward(current_points, goal_points, params.config,
                 [&](const std::string& name) { return tape.param(params.store.get(name)); });
}

ActionDistribution mlp_baseline_policy(const KeypointSet& current, const KeypointSet& goal, const MlpParams& params) {
  const MlpConfig& c = params.config;
  require(current.size() == c.keypoints && goal.size() == c.keypoints, ErrorKind::kDimension,
          "keypoint-MLP built for " + std::to_string(c.keypoints) + " keypoints got " +
              std::to_string(current.size()) + " and " + std::to_string(goal.size()));
  Tape tape;
  PolicyOutput out = forward(tape.constant(localgnn::stack_normalized({&current}, c.width, c.height)),
                             tape.constant(localgnn::stack_normalized({&goal}, c.width, c.height)), c,
                             [&](const std::string& name) { return tape.constant(params.store.get(name).value); });
  const auto& qp = out.q_pick.value().data();
  const auto& ql = out.q_place.value().data();
  return {{qp.begin(), qp.end()}, {ql.begin(), ql.end()}};
}

TrainedMlp train_mlp_baseline(const trainkit::Dataset& dataset, const trainkit::TrainConfig& config,
                              MlpConfig architecture) {
  std::vector<trainkit::Example> examples = trainkit::build_examples(dataset, config);
  architecture.keypoints = examples.front().current.size();
  architecture.width = architecture.height = dataset.image_size;
  Rng init_rng(mix_seed(config.seed, 0x6d6c70ULL));
  TrainedMlp out{init_mlp(architecture, init_rng), {}};
  MlpParams& params = out.params;
  out.report = trainkit::fit_planner(
      examples, params.store, [&params](Var cur, Var goal) { return mlp_forward(cur, goal, params); }, config,
      dataset.image_size);
  out.report.demonstrations = trainkit::select_demos(dataset, config).size();
  return out;
}

}  // namespace rgc::benchkit
