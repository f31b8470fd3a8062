#include "tis/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "tis/error.hpp"

namespace tis {

MetricsReport eval_curve(const std::vector<Case>& data, const ParamStore& encoder,
                         const ParamStore& refiner, const RefinerConfig& rcfg, int max_clicks,
                         const SimulatorConfig& sim, std::uint64_t seed,
                         std::vector<SessionTrace>* traces) {
  if (data.empty()) throw ContractError("eval_curve: empty dataset");
  if (max_clicks < 1) throw ContractError("eval_curve: need at least one click");
  MetricsReport rep;
  rep.max_clicks = max_clicks;
  rep.classes = rcfg.classes;
  const Rng root(seed);
  const auto K = static_cast<std::size_t>(max_clicks);
  const auto C = static_cast<std::size_t>(rcfg.classes);

  for (std::size_t i = 0; i < data.size(); ++i) {
    Rng rng = root.fork(i);
    const EncoderOutput enc = encode(data[i].volume, encoder);
    SessionTrace tr = session_run(enc, data[i].labels, refiner, rcfg, max_clicks, sim, rng);
    std::vector<std::vector<double>> curve;
    for (std::size_t t = 0; t <= K; ++t)
      curve.push_back(tr.steps[std::min(t, tr.steps.size() - 1)].dice);
    rep.per_case.push_back(std::move(curve));
    if (traces) traces->push_back(std::move(tr));
  }

  const double n = static_cast<double>(data.size());
  rep.mean.assign(K + 1, std::vector<double>(C, 0.0));
  rep.std.assign(K + 1, std::vector<double>(C, 0.0));
  for (std::size_t t = 0; t <= K; ++t)
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (const auto& pc : rep.per_case) s += pc[t][c];
      const double mu = s / n;
      double v = 0.0;
      for (const auto& pc : rep.per_case) v += (pc[t][c] - mu) * (pc[t][c] - mu);
      rep.mean[t][c] = mu;
      rep.std[t][c] = std::sqrt(v / n);
    }
  return rep;
}

std::string MetricsReport::table() const {
  std::ostringstream os;
  os << "click_count class mean std\n";
  char buf[96];
  for (std::size_t t = 0; t < mean.size(); ++t)
    for (std::size_t c = 0; c < mean[t].size(); ++c) {
      std::snprintf(buf, sizeof buf, "%zu %zu %.6f %.6f\n", t, c, mean[t][c], std[t][c]);
      os << buf;
    }
  return os.str();
}

std::string MetricsReport::to_json() const {
  nlohmann::json j;
  j["max_clicks"] = max_clicks;
  j["classes"] = classes;
  j["mean"] = mean;
  j["std"] = std;
  j["per_case"] = per_case;
  return j.dump(2);
}

}  // namespace tis
