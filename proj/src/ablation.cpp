#include "rfn/ablation.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "rfn/kernels.hpp"

namespace rfn {

namespace {

bool same_block(const ModelSpec& a, const ModelSpec& b) {
  return a.use_rfn == b.use_rfn && a.rfn.n == b.rfn.n && a.rfn.r == b.rfn.r &&
         a.rfn.pooling == b.rfn.pooling && a.rfn.resume == b.rfn.resume &&
         a.rfn.insertion_stage == b.rfn.insertion_stage;
}

void check(const ModelSpec& m, const std::string& axis) {
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw InvalidArgument("invalid grid value on axis '" + axis + "': " + e.what());
  }
}

}  // namespace

std::vector<AblationCase> expand_grid(const RunConfig& base) {
  const AblationGrid& g = base.ablate;
  if (g.seeds.empty()) throw InvalidArgument("ablation grid needs at least one seed");
  ModelSpec root = base.model;
  root.use_rfn = true;
  check(root, "baseline");

  std::vector<std::pair<std::string, ModelSpec>> specs{{"baseline", root}};
  auto add = [&](const std::string& axis, const ModelSpec& m) {
    check(m, axis);
    for (const auto& [_, s] : specs)
      if (same_block(s, m)) return;
    specs.emplace_back(axis, m);
  };
  if (g.product) {
    for (auto r : g.r)
      for (auto n : g.n)
        for (auto p : g.pooling)
          for (auto rs : g.resume)
            for (auto st : g.insertion_stage) {
              ModelSpec m = root;
              m.rfn.r = r;
              m.rfn.n = n;
              m.rfn.pooling = p;
              m.rfn.resume = rs;
              m.rfn.insertion_stage = st;
              add("product", m);
            }
  } else {
    for (auto v : g.r) { ModelSpec m = root; m.rfn.r = v; add("r", m); }
    for (auto v : g.n) { ModelSpec m = root; m.rfn.n = v; add("n", m); }
    for (auto v : g.pooling) { ModelSpec m = root; m.rfn.pooling = v; add("pooling", m); }
    for (auto v : g.resume) { ModelSpec m = root; m.rfn.resume = v; add("resume", m); }
    for (auto v : g.insertion_stage) {
      ModelSpec m = root;
      m.rfn.insertion_stage = v;
      add("insertion_stage", m);
    }
  }
  if (g.passthrough_row) {
    ModelSpec m = root;
    m.use_rfn = false;
    specs.emplace_back("passthrough", m);
  }

  std::vector<AblationCase> cases;
  for (auto seed : g.seeds) {
    for (const auto& [axis, m] : specs) {
      cases.push_back({axis, m, seed, axis == "baseline"});
    }
  }
  return cases;
}

std::vector<AblationRow> run_ablation(const std::vector<AblationCase>& cases,
                                      const TrainOptions& opts, const Dataset& train_set,
                                      const Dataset& test_set, std::size_t threads) {
  if (cases.empty()) throw InvalidArgument("ablation grid is empty");
  std::vector<AblationRow> rows(cases.size());
  std::vector<std::exception_ptr> errors(cases.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    kernels::set_threads(1);
    for (std::size_t i; (i = next.fetch_add(1)) < cases.size();) {
      try {
        const AblationCase& c = cases[i];
        TrainResult tr = train(c.model, train_set, opts, c.seed);
        MetricsReport m = evaluate(tr.model, test_set, opts.loss);
        m.history = std::move(tr.report.history);
        m.wall_time += tr.report.wall_time;
        rows[i] = {c, std::move(m)};
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n = std::clamp<std::size_t>(threads, 1, cases.size());
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return rows;
}

std::string ablation_csv_header() {
  return "axis,seed,rfn,n,r,pooling,resume,insertion_stage,is_baseline,"
         "accuracy,angular_mae,invariance_score,param_total,wall_time_s";
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os.precision(17);
  os << ablation_csv_header() << '\n';
  for (const auto& row : rows) {
    const AblationCase& c = row.config;
    const RfnConfig& b = c.model.rfn;
    os << c.axis << ',' << c.seed << ',' << (c.model.use_rfn ? "true" : "false") << ',' << b.n
       << ',' << b.r << ',' << to_string(b.pooling) << ',' << to_string(b.resume) << ','
       << b.insertion_stage << ',' << (c.is_baseline ? "true" : "false") << ','
       << row.metrics.accuracy << ',' << row.metrics.angular_mae << ','
       << row.metrics.invariance_score << ',' << row.metrics.param_total << ','
       << row.metrics.wall_time << '\n';
  }
  return os.str();
}

}  // namespace rfn
