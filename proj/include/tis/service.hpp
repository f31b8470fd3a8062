#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tis/interaction.hpp"
#include "tis/params.hpp"
#include "tis/refiner.hpp"

namespace tis {

/// Result of creating a session, adding a click or undoing one.
struct StepView {
  std::string id;
  std::size_t step = 0;  // number of clicks in the session after the operation
  LabelMask mask;
  std::vector<double> dice;  // per class, empty without ground truth
  std::optional<Click> click;  // the click added at this step
};

struct SessionState {
  std::string id;
  std::int64_t created = 0;  // unix seconds
  Grid3 grid;
  int classes = 0;
  bool has_gt = false;
  SessionTrace history;  // steps[0] is the automatic mask
};

enum class SliceLayer { image, automatic, refined, error };
SliceLayer parse_layer(const std::string& name);

/// Axis-aligned plane. For axis z the plane is indexed [y][x], for y it is
/// [z][x], for x it is [z][y]; `width` is the fastest dimension.
struct Slice {
  std::size_t width = 0, height = 0;
  std::vector<float> image;         // image layer
  std::vector<std::uint8_t> labels;  // every other layer
};

/// Sessions kept in memory and mirrored to <root>/<id>/ (volume.vol, gt.lbl,
/// clicks.jsonl, step_NNN.lbl). Calls for one session are serialized; distinct
/// sessions proceed concurrently and share the model read-only.
class SessionStore {
 public:
  /// A checkpoint that cannot be loaded leaves the store up but every
  /// create_session fails with UnavailableError. Sessions already on disk are
  /// reloaded.
  SessionStore(std::filesystem::path root, const std::filesystem::path& checkpoint,
               RefinerConfig cfg);
  /// Same with an in-memory model (encoder.* and refiner.* parameters).
  SessionStore(std::filesystem::path root, ParamStore model, RefinerConfig cfg);
  ~SessionStore();

  /// `volume_bytes` / `gt_bytes` are TISVOL1 / TISLBL1 file contents.
  StepView create_session(const std::string& volume_bytes,
                          const std::optional<std::string>& gt_bytes = std::nullopt);
  /// `step` must be the session's click count plus one. Repeating the last
  /// accepted (step, click) returns the stored response; anything else is a
  /// ConflictError.
  StepView add_click(const std::string& id, const Click& click, std::size_t step);
  StepView undo(const std::string& id);
  SessionState state(const std::string& id);
  /// `step` selects a history entry for the refined/error layers (default:
  /// latest).
  Slice slice(const std::string& id, char axis, std::int64_t index, SliceLayer layer,
              std::optional<std::size_t> step = std::nullopt);

  std::vector<std::string> ids() const;

 private:
  struct Session;
  std::shared_ptr<Session> find(const std::string& id) const;
  void load_existing();
  void require_model() const;

  std::filesystem::path root_;
  ParamStore encoder_, refiner_;
  RefinerConfig cfg_;
  std::string model_error_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_ = 0;
};

std::string base64_encode(const void* data, std::size_t len);
std::string base64_decode(const std::string& text);

nlohmann::json to_json(const StepView& v);
nlohmann::json to_json(const SessionState& s);
nlohmann::json to_json(const Slice& s);

/// HTTP status for a library error kind.
int http_status(const std::string& kind);

/// HTTP front end over a SessionStore; routes are documented in docs/api.md.
class HttpServer {
 public:
  explicit HttpServer(SessionStore& store);
  ~HttpServer();
  /// Binds and returns the port (port 0 picks a free one). IoError on failure.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// bind + listen.
void serve_http(SessionStore& store, const std::string& host, int port);

}  // namespace tis
