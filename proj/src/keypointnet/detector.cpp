#include "rgc/keypointnet/detector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "rgc/common/error.hpp"
#include "rgc/common/kv.hpp"
#include "rgc/diffcore/checkpoint.hpp"

namespace rgc::keypointnet {

namespace {

constexpr double kHeadInitGain = 0.1;

using diffcore::Conv2dSpec;
using diffcore::Parameter;
using diffcore::Shape;
using diffcore::Tape;

std::string weight_name(std::size_t layer) { return "conv" + std::to_string(layer) + ".weight"; }
std::string bias_name(std::size_t layer) { return "conv" + std::to_string(layer) + ".bias"; }

std::size_t layer_out_channels(const DetectorConfig& c, std::size_t layer) {
  return layer < c.channels.size() ? c.channels[layer] : c.keypoints;
}
std::size_t layer_in_channels(const DetectorConfig& c, std::size_t layer) {
  return layer == 0 ? 3 : c.channels[layer - 1];
}

template <typename Bind>
Var backbone(Var images, const DetectorConfig& config, Bind&& bind) {
  Var x = images;
  for (std::size_t l = 0; l < config.layer_count(); ++l) {
    x = diffcore::conv2d(x, bind(weight_name(l)), Conv2dSpec{config.stride(l), config.kernel / 2}, bind(bias_name(l)));
    if (l + 1 < config.layer_count()) x = diffcore::relu(x);
  }
  return x;
}

Tensor stack_images(const std::vector<const Observation*>& obs, const DetectorConfig& config) {
  const std::size_t plane = config.width * config.height;
  Tensor images({obs.size(), 3, config.height, config.width});
  for (std::size_t b = 0; b < obs.size(); ++b) {
    const Observation& o = *obs[b];
    require(o.width == config.width && o.height == config.height && o.channels == 3, ErrorKind::kDimension,
            "observation " + std::to_string(o.width) + "x" + std::to_string(o.height) + "x" +
                std::to_string(o.channels) + " does not match detector input " + std::to_string(config.width) + "x" +
                std::to_string(config.height) + "x3");
    double* dst = images.raw() + b * 3 * plane;
    for (std::size_t i = 0; i < plane; ++i)
      for (std::size_t ch = 0; ch < 3; ++ch) dst[ch * plane + i] = o.pixels[i * 3 + ch];
  }
  return images;
}

// Unit-peak Gaussian of one point, on a width x height grid, added into out.
void add_gaussian(Vec2 p, double sigma, std::size_t width, std::size_t height, double* out) {
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  std::vector<double> ex(width), ey(height);
  for (std::size_t c = 0; c < width; ++c) ex[c] = std::exp(-(double(c) - p.x) * (double(c) - p.x) * inv2s2);
  for (std::size_t r = 0; r < height; ++r) ey[r] = std::exp(-(double(r) - p.y) * (double(r) - p.y) * inv2s2);
  for (std::size_t r = 0; r < height; ++r)
    for (std::size_t c = 0; c < width; ++c) out[r * width + c] += ey[r] * ex[c];
}

std::vector<std::vector<std::size_t>> default_orderings(std::size_t m) {
  std::vector<std::size_t> fwd(m);
  std::iota(fwd.begin(), fwd.end(), 0);
  std::vector<std::size_t> rev(fwd.rbegin(), fwd.rend());
  return {fwd, rev};
}

}  // namespace

std::size_t DetectorConfig::feature_width() const {
  std::size_t w = width;
  for (std::size_t l = 0; l < layer_count(); ++l) w = diffcore::conv_output_extent(w, kernel, {stride(l), kernel / 2});
  return w;
}

std::size_t DetectorConfig::feature_height() const {
  std::size_t h = height;
  for (std::size_t l = 0; l < layer_count(); ++l) h = diffcore::conv_output_extent(h, kernel, {stride(l), kernel / 2});
  return h;
}

std::string DetectorConfig::descriptor() const {
  std::ostringstream out;
  out.precision(17);
  out << "detector width=" << width << " height=" << height << " keypoints=" << keypoints
      << " channels=" << join_sizes(channels) << " kernel=" << kernel << " strided=" << strided_layers
      << " sigma=" << sigma;
  return out.str();
}

DetectorConfig DetectorConfig::from_descriptor(const std::string& text) {
  auto kv = parse_kv_tokens(text);
  DetectorConfig c;
  c.width = kv_size(kv, "width");
  c.height = kv_size(kv, "height");
  c.keypoints = kv_size(kv, "keypoints");
  c.channels = parse_size_list(kv_required(kv, "channels"));
  c.kernel = kv_size(kv, "kernel");
  c.strided_layers = kv_size(kv, "strided");
  c.sigma = kv_double(kv, "sigma");
  c.validate();
  return c;
}

void DetectorConfig::validate() const {
  require(width > 0 && height > 0, ErrorKind::kConfig, "detector input size must be positive");
  require(keypoints >= 1, ErrorKind::kConfig, "detector needs at least one keypoint");
  require(!channels.empty(), ErrorKind::kConfig, "detector needs at least one hidden layer");
  for (std::size_t c : channels) require(c > 0, ErrorKind::kConfig, "detector channel counts must be positive");
  require(kernel % 2 == 1, ErrorKind::kConfig, "detector kernel must be odd");
  require(strided_layers <= layer_count(), ErrorKind::kConfig, "more strided layers than layers");
  require(sigma > 0.0, ErrorKind::kConfig, "heatmap sigma must be positive");
  (void)feature_width();
  (void)feature_height();
}

DetectorParams init_detector(const DetectorConfig& config, Rng& rng) {
  config.validate();
  DetectorParams params{config, {}};
  const std::size_t k2 = config.kernel * config.kernel;
  for (std::size_t l = 0; l < config.layer_count(); ++l) {
    const std::size_t cin = layer_in_channels(config, l), cout = layer_out_channels(config, l);
    const Shape shape{cout, cin, config.kernel, config.kernel};
    Tensor w = diffcore::he_uniform(shape, cin * k2, rng);
    if (l + 1 == config.layer_count()) {
      for (std::size_t i = 0; i < w.numel(); ++i) w[i] *= kHeadInitGain;
    }
    params.store.add(weight_name(l), std::move(w));
    params.store.add(bias_name(l), Tensor({cout}));
  }
  return params;
}

void save_detector(const std::filesystem::path& path, const DetectorParams& params,
                   const std::vector<std::string>& provenance) {
  std::vector<std::string> text{"#arch " + params.config.descriptor()};
  for (const auto& line : provenance) text.push_back("#provenance " + line);
  diffcore::write_checkpoint(path, diffcore::params_to_entries(params.store, text));
}

DetectorParams load_detector(const std::filesystem::path& path) {
  auto entries = diffcore::read_checkpoint(path);
  std::string arch = diffcore::find_text_entry(entries, "#arch detector ");
  require(!arch.empty(), ErrorKind::kIo, path.string() + " is not a detector checkpoint");
  Rng rng(0);
  DetectorParams params = init_detector(DetectorConfig::from_descriptor(arch), rng);
  diffcore::load_params(entries, params.store);
  return params;
}

std::size_t detector_parameter_count(const DetectorConfig& config) {
  const std::size_t k2 = config.kernel * config.kernel;
  std::size_t total = 0;
  for (std::size_t l = 0; l < config.layer_count(); ++l)
    total += layer_out_channels(config, l) * (layer_in_channels(config, l) * k2 + 1);
  return total;
}

std::uint64_t detector_forward_flops(const DetectorConfig& config) {
  config.validate();
  const std::uint64_t k2 = config.kernel * config.kernel;
  std::uint64_t total = 0;
  std::size_t h = config.height, w = config.width;
  for (std::size_t l = 0; l < config.layer_count(); ++l) {
    const Conv2dSpec spec{config.stride(l), config.kernel / 2};
    h = diffcore::conv_output_extent(h, config.kernel, spec);
    w = diffcore::conv_output_extent(w, config.kernel, spec);
    const std::uint64_t cout = layer_out_channels(config, l), opix = h * w;
    total += 2 * cout * layer_in_channels(config, l) * k2 * opix + cout * opix;
    if (l + 1 < config.layer_count()) total += cout * opix;
  }
  return total + 6 * config.keypoints * h * w + 2 * config.keypoints;
}

Tensor observation_tensor(const Observation& obs) {
  require(obs.pixels.size() == obs.width * obs.height * obs.channels, ErrorKind::kDimension,
          "observation buffer does not match its extents");
  const std::size_t plane = obs.width * obs.height;
  Tensor t({obs.channels, obs.height, obs.width});
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t ch = 0; ch < obs.channels; ++ch) t[ch * plane + i] = obs.pixels[i * obs.channels + ch];
  return t;
}

Vec2 spatial_softmax(const Tensor& map) {
  require(map.rank() == 2, ErrorKind::kDimension, "spatial_softmax expects one [h x w] map");
  Tape tape;
  Var p = diffcore::spatial_softmax(tape.constant(map));
  return {p.value()[0], p.value()[1]};
}

Vec2 rescale_keypoint(Vec2 p, std::size_t feature_width, std::size_t feature_height, std::size_t width,
                      std::size_t height) {
  require(feature_width > 0 && feature_height > 0 && width > 0 && height > 0, ErrorKind::kConfig,
          "rescale needs positive extents");
  return {p.x * double(width) / double(feature_width), p.y * double(height) / double(feature_height)};
}

Tensor gaussian_heatmap(const KeypointSet& points, double sigma, std::size_t width, std::size_t height) {
  require(sigma > 0.0, ErrorKind::kConfig, "heatmap sigma must be positive");
  require(!points.empty(), ErrorKind::kEmptyInput, "heatmap of an empty keypoint set");
  Tensor pts({points.size(), 2});
  for (std::size_t i = 0; i < points.size(); ++i) {
    pts[2 * i] = points[i].x;
    pts[2 * i + 1] = points[i].y;
  }
  Tape tape;
  return diffcore::gaussian_heatmap(tape.constant(pts), sigma, height, width).value();
}

double detector_loss(const KeypointSet& predicted, const KeypointSet& truth, double sigma, std::size_t width,
                     std::size_t height) {
  require(predicted.size() == truth.size(), ErrorKind::kDimension,
          "detector_loss: " + std::to_string(predicted.size()) + " predicted vs " + std::to_string(truth.size()) +
              " true keypoints");
  Tensor a = gaussian_heatmap(predicted, sigma, width, height);
  Tensor b = gaussian_heatmap(truth, sigma, width, height);
  double total = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) total += (a[i] - b[i]) * (a[i] - b[i]);
  return total / static_cast<double>(a.numel());
}

Var detector_maps(Var images, DetectorParams& params) {
  Tape& tape = images.tape();
  return backbone(images, params.config, [&](const std::string& name) { return tape.param(params.store.get(name)); });
}

Var feature_keypoints(Var maps) { return diffcore::spatial_softmax(maps); }

Var rescale_keypoints(Var points, const DetectorConfig& config) {
  return diffcore::scale_last_axis(points, {double(config.width) / double(config.feature_width()),
                                            double(config.height) / double(config.feature_height())});
}

std::vector<KeypointSet> detect_keypoints(const std::vector<Observation>& observations, const DetectorParams& params) {
  constexpr std::size_t kChunk = 16;
  const DetectorConfig& config = params.config;
  const double sx = double(config.width) / double(config.feature_width());
  const double sy = double(config.height) / double(config.feature_height());
  std::vector<KeypointSet> out;
  for (std::size_t start = 0; start < observations.size(); start += kChunk) {
    std::vector<const Observation*> chunk;
    for (std::size_t i = start; i < std::min(observations.size(), start + kChunk); ++i) chunk.push_back(&observations[i]);
    Tape tape;
    Var maps = backbone(tape.constant(stack_images(chunk, config)), config,
                        [&](const std::string& name) { return tape.constant(params.store.get(name).value); });
    const Tensor& pts = feature_keypoints(maps).value();
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      KeypointSet kp;
      for (std::size_t i = 0; i < config.keypoints; ++i) {
        const double* p = pts.raw() + (b * config.keypoints + i) * 2;
        kp.push_back({p[0] * sx, p[1] * sy});
      }
      out.push_back(std::move(kp));
    }
  }
  return out;
}

DetectorOutput detector_forward(const Observation& obs, const DetectorParams& params) {
  const DetectorConfig& config = params.config;
  Tape tape;
  Var maps = backbone(tape.constant(stack_images({&obs}, config)), config,
                      [&](const std::string& name) { return tape.constant(params.store.get(name).value); });
  Var pts = rescale_keypoints(feature_keypoints(maps), config);
  DetectorOutput out;
  out.maps = maps.value().reshaped({config.keypoints, config.feature_height(), config.feature_width()});
  for (std::size_t i = 0; i < config.keypoints; ++i) out.keypoints.push_back({pts.value()[2 * i], pts.value()[2 * i + 1]});
  return out;
}

double annealed_sigma(const DetectorTrainConfig& train, double final_sigma, std::size_t epoch) {
  if (train.sigma_start <= final_sigma) return final_sigma;
  const double span = std::ceil(train.anneal_fraction * double(train.epochs));
  if (span <= 0.0 || double(epoch) >= span) return final_sigma;
  return train.sigma_start * std::pow(final_sigma / train.sigma_start, double(epoch) / span);
}

double per_keypoint_loss(const KeypointSet& predicted_feature, const KeypointSet& truth_feature, double sigma_feature,
                         std::size_t feature_width, std::size_t feature_height) {
  require(predicted_feature.size() == truth_feature.size(), ErrorKind::kDimension, "keypoint count mismatch");
  const std::size_t plane = feature_width * feature_height;
  double total = 0.0;
  for (std::size_t i = 0; i < truth_feature.size(); ++i) {
    std::vector<double> a(plane, 0.0), b(plane, 0.0);
    add_gaussian(predicted_feature[i], sigma_feature, feature_width, feature_height, a.data());
    add_gaussian(truth_feature[i], sigma_feature, feature_width, feature_height, b.data());
    for (std::size_t k = 0; k < plane; ++k) total += (a[k] - b[k]) * (a[k] - b[k]);
  }
  return total / double(plane * truth_feature.size());
}

DetectorParams train_detector(std::size_t sample_count, const SampleSource& samples, const DetectorConfig& config,
                              const DetectorTrainConfig& train, DetectorTrainReport* report) {
  require(sample_count > 0, ErrorKind::kEmptyInput, "train_detector needs at least one sample");
  require(train.batch_size > 0 && train.epochs > 0, ErrorKind::kConfig, "epochs and batch size must be positive");
  require(train.final_lr_fraction >= 0.0 && train.final_lr_fraction <= 1.0, ErrorKind::kConfig,
          "final learning-rate fraction must lie in [0, 1]");
  config.validate();
  Rng rng(train.seed);
  DetectorParams params = init_detector(config, rng);
  auto state = diffcore::make_optimizer_state(params.store, train.adam);

  const std::size_t m = config.keypoints, fw = config.feature_width(), fh = config.feature_height();
  const std::size_t plane = fw * fh;
  const double to_fx = double(fw) / double(config.width), to_fy = double(fh) / double(config.height);
  const auto orderings = train.orderings.empty() ? default_orderings(m) : train.orderings;
  for (const auto& perm : orderings) require(perm.size() == m, ErrorKind::kConfig, "ordering length must equal m");

  std::vector<std::size_t> order(sample_count);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t total_steps = train.epochs * ((sample_count + train.batch_size - 1) / train.batch_size);
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < train.epochs; ++epoch) {
    const double sigma = annealed_sigma(train, config.sigma, epoch);
    const double sigma_f = sigma * 0.5 * (to_fx + to_fy);
    rng.shuffle(order);

    double epoch_total = 0.0;
    for (std::size_t start = 0; start < sample_count; start += train.batch_size) {
      const std::size_t b = std::min(train.batch_size, sample_count - start);
      std::vector<DetectorSample> batch;
      std::vector<const Observation*> obs;
      batch.reserve(b);
      for (std::size_t j = 0; j < b; ++j) {
        batch.push_back(samples(order[start + j]));
        require(batch.back().keypoints.size() == m, ErrorKind::kDimension, "sample keypoint count differs from m");
      }
      for (const auto& s : batch) obs.push_back(&s.observation);

      Tape tape;
      Var pts = feature_keypoints(detector_maps(tape.constant(stack_images(obs, config)), params));
      Var heat = diffcore::gaussian_heatmap(diffcore::reshape(pts, {b * m, 1, 2}), sigma_f, fh, fw);
      const Tensor& hv = heat.value();

      // Per sample, the truth relabeling closest to the current prediction.
      Tensor target({b * m, fh, fw});
      for (std::size_t j = 0; j < b; ++j) {
        double best = std::numeric_limits<double>::infinity();
        std::vector<double> best_maps;
        for (const auto& perm : orderings) {
          std::vector<double> maps(m * plane, 0.0);
          double err = 0.0;
          for (std::size_t i = 0; i < m; ++i) {
            Vec2 t = batch[j].keypoints[perm[i]];
            add_gaussian({t.x * to_fx, t.y * to_fy}, sigma_f, fw, fh, maps.data() + i * plane);
            const double* pred = hv.raw() + (j * m + i) * plane;
            for (std::size_t k = 0; k < plane; ++k) err += (pred[k] - maps[i * plane + k]) * (pred[k] - maps[i * plane + k]);
          }
          if (err < best) {
            best = err;
            best_maps = std::move(maps);
          }
        }
        std::copy(best_maps.begin(), best_maps.end(), target.raw() + j * m * plane);
      }

      Var loss = diffcore::mean(diffcore::square(diffcore::sub(heat, tape.constant(std::move(target)))));
      tape.backward(loss);
      const double progress = total_steps > 1 ? double(step++) / double(total_steps - 1) : 0.0;
      state.config.learning_rate =
          train.adam.learning_rate *
          (train.final_lr_fraction + (1.0 - train.final_lr_fraction) * 0.5 * (1.0 + std::cos(M_PI * progress)));
      diffcore::adam_step(params.store, state);
      epoch_total += loss.value().item() * double(b);
    }
    const double epoch_loss = epoch_total / double(sample_count);
    if (report) {
      report->epoch_loss.push_back(epoch_loss);
      report->epoch_sigma.push_back(sigma);
    }
    if (train.on_epoch) train.on_epoch(epoch, epoch_loss);
  }
  return params;
}

DetectorParams train_detector(const std::vector<DetectorSample>& samples, const DetectorConfig& config,
                              const DetectorTrainConfig& train, DetectorTrainReport* report) {
  return train_detector(
      samples.size(), [&](std::size_t i) { return samples[i]; }, config, train, report);
}

double keypoint_error(const KeypointSet& predicted, const KeypointSet& truth,
                      const std::vector<std::vector<std::size_t>>& orderings) {
  require(predicted.size() == truth.size() && !truth.empty(), ErrorKind::kDimension, "keypoint count mismatch");
  const auto perms = orderings.empty() ? default_orderings(truth.size()) : orderings;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& perm : perms) {
    double total = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) total += distance(predicted[i], truth[perm[i]]);
    best = std::min(best, total / double(truth.size()));
  }
  return best;
}

Observation heatmap_image(const KeypointSet& points, double sigma, std::size_t width, std::size_t height) {
  Tensor g = gaussian_heatmap(points, sigma, width, height);
  const double peak = *std::max_element(g.data().begin(), g.data().end());
  Observation img{width, height, 1, std::vector<double>(g.numel())};
  for (std::size_t i = 0; i < g.numel(); ++i) img.pixels[i] = peak > 0.0 ? g[i] / peak : 0.0;
  return img;
}

}  // namespace rgc::keypointnet
