#include "rgc/benchkit/models.hpp"

#include "rgc/common/error.hpp"
#include "rgc/diffcore/checkpoint.hpp"

namespace rgc::benchkit {

CapacityFigures LoadedPlanner::capacity(const keypointnet::DetectorParams* detector,
                                        const CapacityOptions& options) const {
  CapacityFigures f = gnn ? count_capacity(*gnn, detector, options) : count_capacity(*mlp, detector, options);
  f.checkpoint_elements = checkpoint_elements;
  return f;
}

LoadedPlanner load_planner(const std::filesystem::path& path) {
  const auto entries = diffcore::read_checkpoint(path);
  LoadedPlanner out;
  out.checkpoint_elements = diffcore::tensor_element_count(entries);
  if (!diffcore::find_text_entry(entries, "#arch local-gnn ").empty()) {
    out.gnn = localgnn::load_policy(path);
    out.planner = gnn_planner(*out.gnn);
  } else if (!diffcore::find_text_entry(entries, "#arch keypoint-mlp ").empty()) {
    out.mlp = load_mlp(path);
    out.planner = mlp_planner(*out.mlp);
  } else {
    fail(ErrorKind::kIo, path.string() + " holds no planner architecture");
  }
  return out;
}

}  // namespace rgc::benchkit
