#include "rgc/defsim/metrics.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "rgc/common/error.hpp"

namespace rgc::defsim {

std::vector<std::vector<std::size_t>> symmetry_relabelings(const DeformState& state) {
  const std::size_t n = state.size();
  std::vector<std::vector<std::size_t>> out;
  switch (state.topology()) {
    case Topology::kChain: {
      std::vector<std::size_t> fwd(n), rev(n);
      for (std::size_t i = 0; i < n; ++i) {
        fwd[i] = i;
        rev[i] = n - 1 - i;
      }
      out = {fwd, rev};
      break;
    }
    case Topology::kRing:
      for (std::size_t k = 0; k < n; ++k) {
        std::vector<std::size_t> p(n);
        for (std::size_t i = 0; i < n; ++i) p[i] = (i + k) % n;
        out.push_back(std::move(p));
      }
      break;
    case Topology::kGrid: {
      const std::size_t rows = state.rows, cols = state.cols;
      for (int t = 0; t < 8; ++t) {
        const bool swap = t & 4;
        if (swap && rows != cols) continue;
        std::vector<std::size_t> p(n);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < cols; ++c) {
            std::size_t rr = swap ? c : r, cc = swap ? r : c;
            if (t & 1) rr = rows - 1 - rr;
            if (t & 2) cc = cols - 1 - cc;
            p[r * cols + c] = rr * cols + cc;
          }
        }
        out.push_back(std::move(p));
      }
      break;
    }
  }
  return out;
}

Correspondence best_correspondence(const DeformState& state, const DeformState& goal) {
  require(state.kind == goal.kind && state.size() == goal.size() && state.rows == goal.rows &&
              state.cols == goal.cols,
          ErrorKind::kTopology,
          std::string("cannot compare ") + to_string(state.kind) + " state with " + to_string(goal.kind) + " goal");
  require(state.size() > 0, ErrorKind::kEmptyInput, "empty state");
  Correspondence best;
  best.distance = std::numeric_limits<double>::infinity();
  for (auto& perm : symmetry_relabelings(state)) {
    double total = 0.0;
    for (std::size_t i = 0; i < state.size(); ++i) total += distance(state.positions[i], goal.positions[perm[i]]);
    double mean = total / static_cast<double>(state.size());
    if (mean < best.distance) {
      best.distance = mean;
      best.goal_index = std::move(perm);
    }
  }
  return best;
}

double goal_distance(const DeformState& state, const DeformState& goal) {
  return best_correspondence(state, goal).distance;
}

std::size_t default_keypoint_count(ObjectKind kind) noexcept { return kind == ObjectKind::kCloth ? 8 : 5; }

std::vector<std::size_t> keypoint_indices(const DeformState& state, std::size_t m) {
  const std::size_t n = state.size();
  std::vector<std::size_t> idx;
  switch (state.topology()) {
    case Topology::kChain:
      require(m >= 2 && m <= n, ErrorKind::kConfig,
              "keypoint count " + std::to_string(m) + " outside [2, " + std::to_string(n) + "]");
      for (std::size_t i = 0; i < m; ++i)
        idx.push_back(static_cast<std::size_t>(std::llround(double(i) * double(n - 1) / double(m - 1))));
      break;
    case Topology::kRing:
      require(m >= 2 && m <= n, ErrorKind::kConfig,
              "keypoint count " + std::to_string(m) + " outside [2, " + std::to_string(n) + "]");
      for (std::size_t i = 0; i < m; ++i) idx.push_back(i * n / m);
      break;
    case Topology::kGrid: {
      require(m == 8, ErrorKind::kConfig, "cloth keypoints are the 4 corners and 4 edge midpoints (m = 8)");
      const std::size_t r1 = state.rows - 1, c1 = state.cols - 1, rm = r1 / 2, cm = c1 / 2, w = state.cols;
      idx = {0, c1, r1 * w + c1, r1 * w, cm, rm * w + c1, r1 * w + cm, rm * w};
      break;
    }
  }
  return idx;
}

KeypointSet ground_truth_keypoints(const DeformState& state, std::size_t m, std::size_t width, std::size_t height) {
  KeypointSet out;
  for (std::size_t i : keypoint_indices(state, m)) out.push_back(world_to_pixel(state.positions[i], width, height));
  return out;
}

Action scripted_expert(const DeformState& state, const DeformState& goal, Rng* rng, const ExpertConfig& config) {
  Correspondence corr = best_correspondence(state, goal);
  auto deviation = [&](std::size_t i) { return distance(state.positions[i], goal.positions[corr.goal_index[i]]); };

  std::size_t m = config.keypoints ? config.keypoints : default_keypoint_count(state.kind);
  std::size_t chosen = 0;
  double worst = -1.0;
  for (std::size_t i : keypoint_indices(state, m)) {
    if (deviation(i) > worst) {
      worst = deviation(i);
      chosen = i;
    }
  }
  if (worst < kGamma) {
    for (std::size_t i = 0; i < state.size(); ++i) {
      if (deviation(i) > worst) {
        worst = deviation(i);
        chosen = i;
      }
    }
  }

  Vec2 pick = state.positions[chosen];
  Vec2 place = goal.positions[corr.goal_index[chosen]];
  if (rng != nullptr && config.jitter > 0.0) {
    const double two_pi = 2.0 * std::acos(-1.0);
    auto jitter = [&]() {
      double r = config.jitter * std::sqrt(rng->uniform());
      double a = two_pi * rng->uniform();
      return Vec2{r * std::cos(a), r * std::sin(a)};
    };
    pick = clamp_to_workspace(pick + jitter());
    place = clamp_to_workspace(place + jitter());
  }
  return Action{{pick, 0.0}, {place, 0.0}};
}

}  // namespace rgc::defsim
