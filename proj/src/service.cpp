#include "tis/service.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <boost/beast/core/detail/base64.hpp>
#include <httplib.h>

#include "tis/error.hpp"
#include "tis/volume.hpp"

namespace fs = std::filesystem;

namespace tis {

struct SessionStore::Session {
  std::mutex mu;
  std::string id;
  std::int64_t created = 0;
  fs::path dir;
  Volume volume;
  std::optional<LabelMask> gt;
  EncoderOutput enc;
  SessionTrace trace;
  // Response of the last accepted click, replayed on an identical retry.
  std::optional<StepView> last_click;

  std::size_t step() const { return trace.steps.size() - 1; }
  std::vector<double> dice(const LabelMask& m) const {
    return gt ? class_dice(m, *gt) : std::vector<double>{};
  }
  StepView view(std::size_t t) const {
    const auto& s = trace.steps[t];
    std::optional<Click> c;
    if (t > 0) c = s.clicks.back();
    return {id, t, s.prediction, s.dice, c};
  }
};

namespace {

std::string step_file(std::size_t t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "step_%03zu.lbl", t);
  return buf;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  os << text;
  if (!os) throw IoError("cannot write " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void persist_history(const std::string& jsonl, const fs::path& dir) {
  const fs::path tmp = dir / "clicks.jsonl.tmp";
  write_file(tmp, jsonl);
  fs::rename(tmp, dir / "clicks.jsonl");
}

nlohmann::json mask_json(const LabelMask& m) {
  return {{"extents", {m.grid.nx, m.grid.ny, m.grid.nz}},
          {"classes", m.classes},
          {"dtype", "u8"},
          {"data", base64_encode(m.labels.data(), m.labels.size())}};
}

nlohmann::json click_json(const Click& c) {
  return {{"x", c.position.x}, {"y", c.position.y}, {"z", c.position.z}, {"category", c.category}};
}

}  // namespace

SliceLayer parse_layer(const std::string& name) {
  if (name == "image") return SliceLayer::image;
  if (name == "auto") return SliceLayer::automatic;
  if (name == "refined") return SliceLayer::refined;
  if (name == "error") return SliceLayer::error;
  throw ValidationError("unknown layer '" + name + "' (image | auto | refined | error)");
}

SessionStore::SessionStore(fs::path root, const fs::path& checkpoint, RefinerConfig cfg)
    : root_(std::move(root)), cfg_(std::move(cfg)) {
  try {
    const ParamStore model = load_checkpoint(checkpoint);
    encoder_ = model.subset("encoder.");
    refiner_ = model.subset("refiner.");
    if (encoder_.size() == 0 || refiner_.size() == 0)
      throw IoError("missing checkpoint: " + checkpoint.string() + " lacks encoder or refiner parameters");
    check_refiner_params(cfg_, refiner_);
  } catch (const Error& e) {
    model_error_ = e.what();
  }
  fs::create_directories(root_);
  load_existing();
}

SessionStore::SessionStore(fs::path root, ParamStore model, RefinerConfig cfg)
    : root_(std::move(root)),
      encoder_(model.subset("encoder.")),
      refiner_(model.subset("refiner.")),
      cfg_(std::move(cfg)) {
  check_refiner_params(cfg_, refiner_);
  fs::create_directories(root_);
  load_existing();
}

SessionStore::~SessionStore() = default;

void SessionStore::require_model() const {
  if (!model_error_.empty()) throw UnavailableError("model unavailable: " + model_error_);
}

void SessionStore::load_existing() {
  if (!model_error_.empty()) return;
  for (const auto& entry : fs::directory_iterator(root_)) {
    const fs::path dir = entry.path();
    if (!entry.is_directory() || !fs::exists(dir / "meta.json")) continue;
    auto s = std::make_shared<Session>();
    s->id = dir.filename().string();
    s->dir = dir;
    s->created = nlohmann::json::parse(read_file(dir / "meta.json")).at("created").get<std::int64_t>();
    s->volume = load_volume(dir / "volume.vol");
    if (fs::exists(dir / "gt.lbl")) s->gt = load_labels(dir / "gt.lbl");
    s->enc = encode(s->volume, encoder_);
    const ClickSet clicks = clicks_from_jsonl(read_file(dir / "clicks.jsonl"));
    ClickSet prefix;
    for (std::size_t t = 0; t <= clicks.size(); ++t) {
      if (t > 0) prefix.push_back(clicks[t - 1]);
      LabelMask m = load_labels(dir / step_file(t));
      auto d = s->dice(m);
      s->trace.steps.push_back({prefix, std::move(m), std::move(d)});
    }
    if (s->step() > 0) s->last_click = s->view(s->step());
    sessions_[s->id] = s;
  }
}

std::shared_ptr<SessionStore::Session> SessionStore::find(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFoundError("no session '" + id + "'");
  return it->second;
}

std::vector<std::string> SessionStore::ids() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [id, s] : sessions_) out.push_back(id);
  return out;
}

StepView SessionStore::create_session(const std::string& volume_bytes,
                                      const std::optional<std::string>& gt_bytes) {
  require_model();
  auto s = std::make_shared<Session>();
  {
    std::istringstream is(volume_bytes);
    s->volume = read_volume(is);
  }
  if (gt_bytes) {
    std::istringstream is(*gt_bytes);
    s->gt = read_labels(is);
    if (s->gt->grid.extents() != s->volume.grid.extents())
      throw ValidationError("ground truth extents " + s->gt->grid.str() + " differ from volume " +
                            s->volume.grid.str());
    if (s->gt->classes != cfg_.classes)
      throw ValidationError("ground truth has " + std::to_string(s->gt->classes) +
                            " classes, model has " + std::to_string(cfg_.classes));
  }
  const Grid3& g = s->volume.grid;
  if (g.nx < cfg_.crop.nx || g.ny < cfg_.crop.ny || g.nz < cfg_.crop.nz)
    throw ValidationError("volume " + g.str() + " smaller than the refiner window " + cfg_.crop.str());
  s->enc = encode(s->volume, encoder_);
  LabelMask automatic = automatic_mask(s->enc);
  auto d = s->dice(automatic);
  s->trace.steps.push_back({{}, std::move(automatic), std::move(d)});
  s->created = std::chrono::duration_cast<std::chrono::seconds>(
                   std::chrono::system_clock::now().time_since_epoch())
                   .count();

  std::lock_guard slock(s->mu);
  {
    std::lock_guard lock(mu_);
    do {
      const auto ns = std::chrono::steady_clock::now().time_since_epoch().count();
      char buf[24];
      std::snprintf(buf, sizeof buf, "%016llx",
                    static_cast<unsigned long long>(splitmix64(static_cast<std::uint64_t>(ns) ^
                                                               (++next_ << 32))));
      s->id = buf;
    } while (sessions_.count(s->id));
    s->dir = root_ / s->id;
    sessions_[s->id] = s;
  }

  fs::create_directories(s->dir);
  save_volume(s->dir / "volume.vol", s->volume);
  if (s->gt) save_labels(s->dir / "gt.lbl", *s->gt);
  save_labels(s->dir / step_file(0), s->trace.steps[0].prediction);
  persist_history(trace_to_jsonl(s->trace), s->dir);
  write_file(s->dir / "meta.json", nlohmann::json{{"created", s->created}}.dump() + "\n");
  return s->view(0);
}

StepView SessionStore::add_click(const std::string& id, const Click& click, std::size_t step) {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  if (!s->volume.grid.contains(click.position))
    throw ValidationError("click (" + std::to_string(click.position.x) + "," +
                          std::to_string(click.position.y) + "," +
                          std::to_string(click.position.z) + ") outside volume " +
                          s->volume.grid.str());
  if (click.category < 0 || click.category >= cfg_.classes)
    throw ValidationError("category " + std::to_string(click.category) + " not in [0, " +
                          std::to_string(cfg_.classes) + ")");
  const std::size_t cur = s->step();
  if (step == cur && cur > 0 && s->last_click && s->last_click->click == click)
    return *s->last_click;
  if (step != cur + 1)
    throw ConflictError("stale step index " + std::to_string(step) + ", expected " +
                        std::to_string(cur + 1));

  ClickSet clicks = s->trace.steps.back().clicks;
  clicks.push_back(click);
  LabelMask pred = refine(s->enc, clicks, refiner_, cfg_).mask;
  auto d = s->dice(pred);
  save_labels(s->dir / step_file(cur + 1), pred);
  s->trace.steps.push_back({std::move(clicks), std::move(pred), std::move(d)});
  persist_history(trace_to_jsonl(s->trace), s->dir);
  s->last_click = s->view(cur + 1);
  return *s->last_click;
}

StepView SessionStore::undo(const std::string& id) {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  const std::size_t cur = s->step();
  if (cur == 0) throw ConflictError("nothing to undo");
  s->trace.steps.pop_back();
  persist_history(trace_to_jsonl(s->trace), s->dir);
  fs::remove(s->dir / step_file(cur));
  s->last_click.reset();
  if (s->step() > 0) s->last_click = s->view(s->step());
  return s->view(s->step());
}

SessionState SessionStore::state(const std::string& id) {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  return {s->id, s->created, s->volume.grid, cfg_.classes, s->gt.has_value(), s->trace};
}

Slice SessionStore::slice(const std::string& id, char axis, std::int64_t index, SliceLayer layer,
                          std::optional<std::size_t> step) {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  const Grid3& g = s->volume.grid;
  std::size_t extent = 0, w = 0, h = 0;
  switch (axis) {
    case 'x': extent = g.nx; w = g.ny; h = g.nz; break;
    case 'y': extent = g.ny; w = g.nx; h = g.nz; break;
    case 'z': extent = g.nz; w = g.nx; h = g.ny; break;
    default: throw ValidationError(std::string("axis must be x, y or z, got '") + axis + "'");
  }
  if (index < 0 || static_cast<std::size_t>(index) >= extent)
    throw ValidationError("slice index " + std::to_string(index) + " outside [0, " +
                          std::to_string(extent) + ")");
  const std::size_t t = step.value_or(s->step());
  if (t > s->step())
    throw ValidationError("step " + std::to_string(t) + " beyond history " + std::to_string(s->step()));
  if (layer == SliceLayer::error && !s->gt) throw ValidationError("error layer needs ground truth");

  auto voxel = [&](std::size_t col, std::size_t row) -> std::size_t {
    const auto i = static_cast<std::size_t>(index);
    switch (axis) {
      case 'x': return g.index(i, col, row);
      case 'y': return g.index(col, i, row);
      default: return g.index(col, row, i);
    }
  };
  Slice out;
  out.width = w;
  out.height = h;
  const auto& automatic = s->trace.steps[0].prediction.labels;
  const auto& refined = s->trace.steps[t].prediction.labels;
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      const std::size_t v = voxel(c, r);
      switch (layer) {
        case SliceLayer::image: out.image.push_back(s->volume.intensities[v]); break;
        case SliceLayer::automatic: out.labels.push_back(automatic[v]); break;
        case SliceLayer::refined: out.labels.push_back(refined[v]); break;
        case SliceLayer::error: out.labels.push_back(refined[v] != s->gt->labels[v]); break;
      }
    }
  return out;
}

std::string base64_encode(const void* data, std::size_t len) {
  namespace b64 = boost::beast::detail::base64;
  std::string out(b64::encoded_size(len), '\0');
  out.resize(b64::encode(out.data(), data, len));
  return out;
}

std::string base64_decode(const std::string& text) {
  namespace b64 = boost::beast::detail::base64;
  if (text.size() % 4 != 0) throw ValidationError("base64 length not a multiple of 4");
  std::string out(b64::decoded_size(text.size()), '\0');
  std::size_t pad = 0;
  while (pad < 2 && pad < text.size() && text[text.size() - 1 - pad] == '=') ++pad;
  // decode() stops at the first '=' or invalid character.
  const auto [written, read] = b64::decode(out.data(), text.data(), text.size());
  if (read != text.size() - pad) throw ValidationError("invalid base64 payload");
  out.resize(written);
  return out;
}

nlohmann::json to_json(const StepView& v) {
  nlohmann::json j{{"id", v.id}, {"step", v.step}, {"mask", mask_json(v.mask)}};
  j["dice"] = v.dice.empty() ? nlohmann::json(nullptr) : nlohmann::json(v.dice);
  j["click"] = v.click ? click_json(*v.click) : nlohmann::json(nullptr);
  return j;
}

nlohmann::json to_json(const SessionState& s) {
  nlohmann::json hist = nlohmann::json::array();
  for (std::size_t t = 0; t < s.history.steps.size(); ++t) {
    const auto& st = s.history.steps[t];
    hist.push_back({{"step", t},
                    {"click", t ? click_json(st.clicks.back()) : nlohmann::json(nullptr)},
                    {"dice", s.has_gt ? nlohmann::json(st.dice) : nlohmann::json(nullptr)}});
  }
  return {{"id", s.id},
          {"created", s.created},
          {"extents", {s.grid.nx, s.grid.ny, s.grid.nz}},
          {"classes", s.classes},
          {"has_gt", s.has_gt},
          {"step", s.history.steps.size() - 1},
          {"history", hist}};
}

nlohmann::json to_json(const Slice& s) {
  nlohmann::json j{{"width", s.width}, {"height", s.height}};
  if (!s.image.empty() || s.labels.empty()) {
    j["dtype"] = "f32";
    j["data"] = base64_encode(s.image.data(), s.image.size() * sizeof(float));
  } else {
    j["dtype"] = "u8";
    j["data"] = base64_encode(s.labels.data(), s.labels.size());
  }
  return j;
}

int http_status(const std::string& kind) {
  if (kind == "validation" || kind == "format" || kind == "shape" || kind == "position" ||
      kind == "index" || kind == "bad_request")
    return 400;
  if (kind == "not_found") return 404;
  if (kind == "conflict") return 409;
  if (kind == "unavailable") return 503;
  return 500;
}

struct HttpServer::Impl {
  SessionStore& store;
  httplib::Server server;
  explicit Impl(SessionStore& s) : store(s) {}
};

namespace {

void reply(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    reply(res, 200, f());
  } catch (const Error& e) {
    reply(res, http_status(e.kind()), {{"error", e.kind()}, {"message", e.what()}});
  } catch (const nlohmann::json::exception& e) {
    reply(res, 400, {{"error", "bad_request"}, {"message", e.what()}});
  } catch (const std::exception& e) {
    reply(res, 500, {{"error", "internal"}, {"message", e.what()}});
  }
}

nlohmann::json parse_body(const httplib::Request& req) {
  try {
    return nlohmann::json::parse(req.body);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("request body is not JSON: ") + e.what());
  }
}

std::int64_t query_int(const httplib::Request& req, const std::string& key) {
  if (!req.has_param(key)) throw ValidationError("missing query parameter '" + key + "'");
  const std::string v = req.get_param_value(key);
  std::size_t used = 0;
  std::int64_t out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ValidationError("query parameter '" + key + "' not an integer");
  return out;
}

}  // namespace

HttpServer::HttpServer(SessionStore& store) : impl_(std::make_unique<Impl>(store)) {
  auto& srv = impl_->server;
  SessionStore& st = impl_->store;

  srv.Post("/sessions", [&st](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = parse_body(req);
      std::optional<std::string> gt;
      if (body.contains("gt") && !body["gt"].is_null()) gt = base64_decode(body["gt"].get<std::string>());
      return to_json(st.create_session(base64_decode(body.at("volume").get<std::string>()), gt));
    });
  });
  srv.Post(R"(/sessions/([0-9a-f]+)/clicks)", [&st](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = parse_body(req);
      const Click c{{body.at("x").get<std::int64_t>(), body.at("y").get<std::int64_t>(),
                     body.at("z").get<std::int64_t>()},
                    body.at("category").get<int>()};
      const auto step = body.at("step").get<std::int64_t>();
      if (step < 0) throw ValidationError("step must be >= 0");
      return to_json(st.add_click(req.matches[1], c, static_cast<std::size_t>(step)));
    });
  });
  srv.Post(R"(/sessions/([0-9a-f]+)/undo)", [&st](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return to_json(st.undo(req.matches[1])); });
  });
  srv.Get(R"(/sessions/([0-9a-f]+))", [&st](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return to_json(st.state(req.matches[1])); });
  });
  srv.Get(R"(/sessions/([0-9a-f]+)/slice)", [&st](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string axis = req.has_param("axis") ? req.get_param_value("axis") : "";
      if (axis.size() != 1) throw ValidationError("axis must be x, y or z");
      const SliceLayer layer = parse_layer(req.has_param("layer") ? req.get_param_value("layer") : "refined");
      std::optional<std::size_t> step;
      if (req.has_param("step")) {
        const auto v = query_int(req, "step");
        if (v < 0) throw ValidationError("step must be >= 0");
        step = static_cast<std::size_t>(v);
      }
      auto j = to_json(st.slice(req.matches[1], axis[0], query_int(req, "index"), layer, step));
      j["axis"] = axis;
      j["layer"] = req.has_param("layer") ? req.get_param_value("layer") : "refined";
      return j;
    });
  });
}

HttpServer::~HttpServer() = default;

int HttpServer::bind(const std::string& host, int port) {
  auto& srv = impl_->server;
  const int bound = port == 0 ? srv.bind_to_any_port(host) : (srv.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

void serve_http(SessionStore& store, const std::string& host, int port) {
  HttpServer server(store);
  server.bind(host, port);
  server.listen();
}

}  // namespace tis
