#pragma once

// Pipeline stages behind the command line tool. Every stage writes its files
// plus a manifest.json into its output directory; later stages take earlier
// manifests as inputs. Paths inside a manifest are relative to the manifest's
// directory.

#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include <json.hpp>

#include "trailmap/config.hpp"

namespace trailmap {

namespace fs = std::filesystem;

inline constexpr int kManifestVersion = 1;

// Optional progress sink (stderr in the tool); never written to files.
using LogFn = std::function<void(const std::string&)>;

struct Manifest {
  fs::path path;
  nlohmann::json body;

  fs::path dir() const { return path.parent_path(); }
  fs::path resolve(const std::string& rel) const { return dir() / rel; }
};

// Loads a manifest and checks that it was written by `stage` with the
// current version; otherwise throws StageError naming the producer command.
Manifest read_manifest(const fs::path& path, const std::string& stage);

// Input paths are recorded relative to the output directory `out`.
nlohmann::json provenance(const PipelineConfig& config, const std::string& command,
                          const std::vector<fs::path>& inputs, const fs::path& out);

fs::path cmd_synth(const PipelineConfig& config, const fs::path& out, const LogFn& log = {});
fs::path cmd_ingest(const PipelineConfig& config, const fs::path& trails, const fs::path& out,
                    const LogFn& log = {});
// `trails_manifest` comes from ingest or synth.
fs::path cmd_tiles(const PipelineConfig& config, const fs::path& trails_manifest, const fs::path& out,
                   const LogFn& log = {});
fs::path cmd_raster(const PipelineConfig& config, const fs::path& tiles_manifest, const fs::path& out,
                    const LogFn& log = {});
// `lanes` may be empty when the trail source (synth) recorded a lane graph.
fs::path cmd_gt(const PipelineConfig& config, const fs::path& raster_manifest, const fs::path& lanes,
                const fs::path& out, const LogFn& log = {});
fs::path cmd_train(const PipelineConfig& config, const fs::path& raster_manifest, const fs::path& gt_manifest,
                   const fs::path& out, const LogFn& log = {});
fs::path cmd_infer(const PipelineConfig& config, const fs::path& raster_manifest, const fs::path& checkpoint,
                   const fs::path& out, const LogFn& log = {});
fs::path cmd_eval(const PipelineConfig& config, const fs::path& raster_manifest, const fs::path& pred_manifest,
                  const fs::path& gt_manifest, const fs::path& out, const LogFn& log = {});
// Either of `pred_manifest` / `gt_manifest` may be empty.
fs::path cmd_export(const PipelineConfig& config, const fs::path& raster_manifest, const fs::path& pred_manifest,
                    const fs::path& gt_manifest, const fs::path& out, const LogFn& log = {});

// synth -> tiles -> raster -> gt -> train -> infer -> eval -> export, each
// stage in its own subdirectory of `out`. Returns the eval manifest path.
fs::path cmd_run(const PipelineConfig& config, const fs::path& out, const LogFn& log = {});

}  // namespace trailmap
