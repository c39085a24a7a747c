#pragma once

// Subcommand front end. `run` is the whole program minus process exit so
// tests can drive it in-process.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "partlift/codec.hpp"
#include "partlift/metrics.hpp"
#include "partlift/pose_solver.hpp"
#include "partlift/proposals.hpp"
#include "partlift/scene_sim.hpp"

namespace partlift::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

struct RunConfig {
  std::string bank = std::string(PARTLIFT_DATA_DIR) + "/synthetic_bank.json";
  std::optional<std::string> camera;
  std::optional<std::string> calib;
  std::uint64_t seed = 0;
  std::string out;
  EvalConfig eval;
  LossWeights loss_weights;
  PnPOptions pnp;
  AnchorConfig anchors;
  double nms = kNmsThreshold;
  NoiseSpec noise;
  SceneSpec scene;
  int images = 1;

  void validate() const;
};

/// Applies a JSON config document on top of `cfg`. Unknown keys are rejected.
void apply_config(RunConfig& cfg, const nlohmann::json& doc);
nlohmann::json config_json(const RunConfig& cfg);

nlohmann::json metrics_json(const EvalReport& report, const RunConfig& cfg);
std::string metrics_text(const EvalReport& report);

/// Per-image scene seed derived from the top-level seed.
std::uint64_t image_seed(std::uint64_t seed, int image);

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace partlift::cli
