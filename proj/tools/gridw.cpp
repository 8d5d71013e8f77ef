// Command-line front end: flow solves, sensitivities, robustness margins,
// reductions and controller simulation over schema-1 network files.

#include <chrono>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "gridw/dynamics.hpp"
#include "gridw/flow.hpp"
#include "gridw/io.hpp"
#include "gridw/jacobian.hpp"
#include "gridw/mincut.hpp"
#include "gridw/reduction.hpp"
#include "gridw/subgradient.hpp"

using namespace gridw;
using nlohmann::ordered_json;

namespace {

struct GlobalOpts {
  std::uint64_t seed = 1;
  double tol = 1e-9;
  std::string output = "json";  // json | csv
  std::string trace_out;
};

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::uint64_t h = 1469598103934665603ull;
  char c;
  while (in.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

class Report {
 public:
  Report(std::string command, const std::string& net_path)
      : started_(std::chrono::steady_clock::now()) {
    doc_["command"] = std::move(command);
    doc_["inputs_hash"] = file_hash(net_path);
  }

  ordered_json& results() { return doc_["results"]; }

  void emit(const GlobalOpts& g, const std::string& csv = "") {
    if (g.output == "csv" && !csv.empty()) {
      std::cout << csv;
      return;
    }
    doc_["wall_time_s"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
    std::cout << doc_.dump(2) << "\n";
  }

 private:
  ordered_json doc_;
  std::chrono::steady_clock::time_point started_;
};

Network load_scaled(const std::string& path, double wl_scale) {
  Network net = load_network(path);
  if (wl_scale >= 0) {
    Vec wl = wl_scale * net.wu();
    net = net.with_weight_bounds(wl, net.wu());
  }
  return net;
}

Vec parse_delta(const Network& net, const std::string& spec) {
  Vec d = Vec::Zero(net.num_nodes());
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto pos = item.find(':');
    if (pos == std::string::npos) throw ValidationError("bad --delta entry: " + item);
    d(net.node_index(item.substr(0, pos))) = std::stod(item.substr(pos + 1));
  }
  if (std::abs(d.sum()) > 1e-9 * std::max(1.0, d.lpNorm<1>()))
    throw ValidationError("disturbance must be balanced");
  return d;
}

std::string trace_to_csv(const Network& net, const SimTrace& tr) {
  std::ostringstream os;
  os << "t";
  for (int i = 0; i < net.num_links(); ++i) os << ",w_" << net.link(i).id;
  for (int i = 0; i < net.num_links(); ++i) os << ",f_" << net.link(i).id;
  os << "\n";
  os.precision(12);
  for (size_t k = 0; k < tr.times.size(); ++k) {
    os << tr.times[k];
    for (int i = 0; i < net.num_links(); ++i) os << "," << tr.w[k](i);
    for (int i = 0; i < net.num_links(); ++i) os << "," << tr.f[k](i);
    os << "\n";
  }
  return os.str();
}

void write_maybe(const std::string& path, const std::string& body) {
  if (path.empty()) return;
  std::ofstream out(path);
  out << body;
}

ordered_json steps_to_json(const std::vector<ReductionStep>& steps) {
  ordered_json arr = ordered_json::array();
  for (const auto& s : steps) {
    ordered_json j;
    j["kind"] = to_string(s.kind);
    j["absorbed"] = s.absorbed;
    j["produced"] = s.produced;
    if (!s.produced.empty()) {
      j["weq_lo"] = s.wl;
      j["weq_hi"] = s.wu;
      if (s.caps) {
        j["cap_upper_max"] = s.caps->fwd.max_value();
        j["cap_lower_min"] = -s.caps->bwd.max_value();
      }
    }
    j["certificate"] = s.certificate;
    arr.push_back(j);
  }
  return arr;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DC power network weight-control toolkit"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--seed", g.seed, "RNG seed for randomized solvers");
  app.add_option("--tol", g.tol, "relative feasibility tolerance for verdicts");
  app.add_option("--output", g.output, "output format: json or csv")
      ->check(CLI::IsMember({"json", "csv"}));
  app.add_option("--trace-out", g.trace_out, "write trajectory / trace CSV to file");

  std::string net_path;
  double wl_scale = -1;

  auto add_net = [&](CLI::App* cmd) {
    cmd->fallthrough();  // global flags remain valid after the subcommand
    cmd->add_option("network", net_path, "network JSON file")->required();
    cmd->add_option("--wl-scale", wl_scale, "override wl = s * wu");
  };

  auto* c_flow = app.add_subcommand("flow", "solve the DC flow");
  add_net(c_flow);

  auto* c_jac = app.add_subcommand("jacobian", "flow-weight sensitivity matrix");
  add_net(c_jac);

  auto* c_mincut = app.add_subcommand("margin-mincut", "cut-based robustness margin");
  add_net(c_mincut);

  auto* c_sub = app.add_subcommand("margin-subgrad", "multiplicative margin solver");
  add_net(c_sub);
  std::string direction = "both", method = "subgrad";
  double eta = 0.2, budget_s = 0, target = 0;
  int iters = 2000, restarts = 8;
  bool sqrt_decay = false;
  c_sub->add_option("--direction", direction, "plus, minus or both")
      ->check(CLI::IsMember({"plus", "minus", "both"}));
  c_sub->add_option("--eta", eta, "step size");
  c_sub->add_option("--iters", iters, "iterations per start");
  c_sub->add_option("--restarts", restarts, "random restarts");
  c_sub->add_flag("--sqrt-decay", sqrt_decay, "decay the step as 1/sqrt(1 + t/50)");
  c_sub->add_option("--method", method, "subgrad, random or exhaustive")
      ->check(CLI::IsMember({"subgrad", "random", "exhaustive"}));
  c_sub->add_option("--budget-seconds", budget_s, "time budget for grid/random search");
  c_sub->add_option("--target", target, "stop random search at this alpha");
  double grid_resolution = 0.5;
  c_sub->add_option("--grid-resolution", grid_resolution,
                    "weight spacing for the exhaustive sweep");

  auto* c_ml = app.add_subcommand("margin-multilevel", "margin via network reduction");
  add_net(c_ml);
  MultilevelConfig mlcfg;
  c_ml->add_option("--grid", mlcfg.grid_points, "grid points per weight dimension");
  c_ml->add_option("--samples", mlcfg.terminal_samples, "terminal search samples");
  c_ml->add_option("--component-samples", mlcfg.component_samples,
                   "sampling fallback for large components");

  auto* c_eqcap = app.add_subcommand("eqcap", "two-terminal equivalent capacity");
  add_net(c_eqcap);
  std::string between_v1, between_v2;
  int eq_points = 200;
  c_eqcap->add_option("--between", between_v1, "first terminal node id")->required();
  c_eqcap->add_option("v2", between_v2, "second terminal node id")->required();
  c_eqcap->add_option("--points", eq_points, "CSV sampling resolution");

  auto* c_sim = app.add_subcommand("simulate", "decentralized controller simulation");
  add_net(c_sim);
  std::string controller = "u1", delta_spec;
  double alpha = 1.0, dt = 1e-3, horizon = 10.0, rate = 1.0, magnitude = 0.0;
  std::string delta_s, delta_t;
  bool rate_by_range = false;
  c_sim->add_option("--controller", controller, "u1 or u2")
      ->check(CLI::IsMember({"u1", "u2"}));
  c_sim->add_option("--alpha", alpha, "multiplicative disturbance: p = alpha * p0");
  c_sim->add_option("--delta-s", delta_s, "vertex disturbance source node");
  c_sim->add_option("--delta-t", delta_t, "vertex disturbance sink node");
  c_sim->add_option("--magnitude", magnitude, "vertex/explicit disturbance magnitude");
  c_sim->add_option("--delta", delta_spec, "explicit disturbance, id:val,id:val");
  c_sim->add_option("--dt", dt, "integration step");
  c_sim->add_option("--horizon", horizon, "simulated time span");
  c_sim->add_option("--rate", rate, "uniform controller rate");
  c_sim->add_flag("--rate-by-range", rate_by_range,
                  "scale each link rate by its weight range");

  auto* c_red = app.add_subcommand("reduce", "one reduction step with certificate");
  add_net(c_red);
  std::string reduced_out;
  c_red->add_option("--out", reduced_out, "write the reduced network JSON here");

  CLI11_PARSE(app, argc, argv);

  int exit_code = 0;
  try {
    if (app.got_subcommand(c_flow)) {
      Network net = load_scaled(net_path, wl_scale);
      FlowState fs = solve_flow(net);
      Report rep("flow", net_path);
      std::string csv = flows_to_csv(net, fs.f);
      rep.results()["flows"] = ordered_json::object();
      for (int i = 0; i < net.num_links(); ++i)
        rep.results()["flows"][net.link(i).id] = fs.f(i);
      if (g.output == "json")
        rep.emit(g);
      else
        std::cout << csv;
    } else if (app.got_subcommand(c_jac)) {
      Network net = load_scaled(net_path, wl_scale);
      Jacobian jac = jacobian(net);
      std::ostringstream os;
      os.precision(12);
      os << "link";
      for (int i = 0; i < net.num_links(); ++i) os << "," << net.link(i).id;
      os << "\n";
      for (int k = 0; k < net.num_links(); ++k) {
        os << net.link(k).id;
        for (int i = 0; i < net.num_links(); ++i) os << "," << jac.j(k, i);
        os << "\n";
      }
      std::cout << os.str();
    } else if (app.got_subcommand(c_mincut)) {
      Network net = load_scaled(net_path, wl_scale);
      MarginReport mr = margin(net);
      Report rep("margin-mincut", net_path);
      auto& r = rep.results();
      r["nu_star"] = mr.nu_star;
      r["kind"] = to_string(mr.kind);
      r["cut"] = ordered_json::array();
      for (int v : mr.argmin_cut.side) r["cut"].push_back(net.node_ids()[v]);
      r["delta"] = {{"s", net.node_ids()[mr.delta_s]}, {"t", net.node_ids()[mr.delta_t]}};
      double pnorm = net.p().lpNorm<1>();
      if (pnorm > 0) {
        Vec d = net.p() / pnorm;
        r["alpha_plus_bound"] = 1.0 + nu0(net, d) / pnorm;
      }
      rep.emit(g);
    } else if (app.got_subcommand(c_sub)) {
      Network net = load_scaled(net_path, wl_scale);
      Report rep("margin-subgrad", net_path);
      auto& r = rep.results();
      if (method == "exhaustive") {
        ExhaustiveSearchResult ex =
            exhaustive_search_alpha(net, Direction::plus, grid_resolution, budget_s);
        r["method"] = "exhaustive";
        r["alpha_plus"] = ex.alpha;
        r["samples"] = ex.samples;
        r["complete"] = ex.complete;
        if (!ex.complete) exit_code = 3;
        rep.emit(g);
      } else if (method == "random") {
        long long cap = budget_s > 0 ? (1ll << 40) : 1000000;
        RandomSearchResult plus =
            random_search_alpha(net, Direction::plus, cap, budget_s, target, g.seed);
        r["method"] = "random";
        r["alpha_plus"] = plus.alpha;
        r["samples"] = plus.samples;
        if (direction == "both") {
          RandomSearchResult minus =
              random_search_alpha(net, Direction::minus, cap, budget_s, target, g.seed + 1);
          r["alpha_minus"] = minus.alpha;
          r["nu_m"] = net.p().lpNorm<1>() *
                      std::min(plus.alpha - 1.0, minus.alpha + 1.0);
        }
        rep.emit(g);
      } else {
        SubgradConfig cfg;
        cfg.eta0 = eta;
        cfg.iters = iters;
        cfg.restarts = restarts;
        cfg.sqrt_decay = sqrt_decay;
        cfg.seed = g.seed;
        MultiplicativeResult res = solve_multiplicative(net, cfg);
        r["method"] = "subgrad";
        if (direction != "minus") {
          r["alpha_plus"] = res.alpha_plus;
          r["restart_alpha_plus"] = res.plus.restart_alpha;
          r["wu_alpha_plus"] = res.plus.wu_alpha;
        }
        if (direction != "plus") r["alpha_minus"] = res.alpha_minus;
        if (direction == "both") r["nu_m"] = res.nu_m;
        r["certified"] = res.plus.certified && res.minus.certified;
        std::ostringstream trace;
        trace << "iter,best_objective\n";
        for (size_t k = 0; k < res.plus.trace.size(); ++k)
          trace << k << "," << res.plus.trace[k] << "\n";
        write_maybe(g.trace_out, trace.str());
        if (!res.plus.certified || !res.minus.certified) exit_code = 3;
        rep.emit(g, trace.str());
      }
    } else if (app.got_subcommand(c_ml)) {
      Network net = load_scaled(net_path, wl_scale);
      mlcfg.seed = g.seed;
      MultilevelReport mr = multilevel_margin(net, mlcfg);
      Report rep("margin-multilevel", net_path);
      auto& r = rep.results();
      r["nu_star"] = mr.nu_star;
      double pnorm = net.p().lpNorm<1>();
      if (pnorm > 0) r["alpha"] = 1.0 + mr.nu_star / pnorm;
      r["exact"] = mr.exact;
      r["max_certificate"] = mr.max_certificate;
      r["terminal"] = {{"nodes", mr.terminal_nodes},
                       {"links", mr.terminal_links},
                       {"tree", mr.terminal_tree}};
      r["steps"] = steps_to_json(mr.steps);
      rep.emit(g);
    } else if (app.got_subcommand(c_eqcap)) {
      Network net = load_scaled(net_path, wl_scale);
      int v1 = net.node_index(between_v1), v2 = net.node_index(between_v2);
      PiecewiseCapacity upper, lower;
      double lo, hi;
      bool exact = true;
      try {
        EquivalentCapacity ec = equivalent_capacity(net, v1, v2);
        upper = ec.upper;
        lower = ec.lower_mag;
        lo = ec.weq_lo;
        hi = ec.weq_hi;
      } catch (const SolverError&) {
        RGraph rg = RGraph::from_network(net);
        Vec marker = Vec::Zero(net.num_nodes());
        marker(v1) = 1;
        marker(v2) = -1;
        rg.p = marker;
        std::mt19937_64 rng(g.seed);
        RGraph probe = rg;
        lo = [&] {
          RGraph t = rg;
          for (auto& l : t.links) l.w = l.wl;
          return t.equivalent_weight_between(v1, v2);
        }();
        hi = [&] {
          RGraph t = rg;
          for (auto& l : t.links) l.w = l.wu;
          return t.equivalent_weight_between(v1, v2);
        }();
        MultilevelConfig cfg;
        cfg.seed = g.seed;
        CapacityPair cp = detail::component_capacity_by_search(rg, v1, v2, cfg, lo, hi, rng);
        upper = cp.fwd;
        lower = cp.bwd;
        exact = false;
        exit_code = 3;
      }
      std::ostringstream os;
      os.precision(12);
      os << "weq,C_lower,C_upper\n";
      for (int k = 0; k <= eq_points; ++k) {
        double weq = lo + (hi - lo) * k / eq_points;
        os << weq << "," << -lower.eval(weq) << "," << upper.eval(weq) << "\n";
      }
      if (g.output == "json") {
        Report rep("eqcap", net_path);
        rep.results()["weq_lo"] = lo;
        rep.results()["weq_hi"] = hi;
        rep.results()["alpha_plus"] = upper.max_value();
        rep.results()["alpha_minus"] = lower.max_value();
        rep.results()["exact"] = exact;
        rep.emit(g);
      } else {
        std::cout << os.str();
      }
      write_maybe(g.trace_out, os.str());
    } else if (app.got_subcommand(c_sim)) {
      Network net = load_scaled(net_path, wl_scale);
      Vec p_dist;
      if (!delta_spec.empty()) {
        p_dist = net.p() + magnitude * parse_delta(net, delta_spec);
      } else if (!delta_s.empty() && !delta_t.empty()) {
        Vec d = Vec::Zero(net.num_nodes());
        d(net.node_index(delta_s)) = 0.5;
        d(net.node_index(delta_t)) = -0.5;
        p_dist = net.p() + magnitude * d;
      } else {
        p_dist = alpha * net.p();
      }
      ControllerSpec spec;
      spec.kind = controller == "u2" ? ControllerSpec::Kind::u2 : ControllerSpec::Kind::u1;
      spec.dt = dt;
      spec.horizon = horizon;
      spec.feas_tol = g.tol;
      spec.rates = Vec::Constant(net.num_links(), rate);
      if (rate_by_range) spec.rates = rate * (net.wu() - net.wl()).cwiseMax(1e-9);
      SimTrace tr = simulate(net, spec, p_dist);
      std::string csv = trace_to_csv(net, tr);
      write_maybe(g.trace_out, csv);
      Report rep("simulate", net_path);
      auto& r = rep.results();
      r["feasible"] = tr.feasible;
      r["t_final"] = tr.t_final;
      r["guarantee"] = controller == "u2" && net.num_links() > 2 ? "none (n > 2)" : "see docs";
      r["w_final"] = ordered_json::object();
      for (int i = 0; i < net.num_links(); ++i)
        r["w_final"][net.link(i).id] = tr.w_final(i);
      r["events"] = ordered_json::array();
      for (const auto& ev : tr.events)
        r["events"].push_back({{"t", ev.t}, {"link", ev.link}, {"what", ev.what}});
      if (g.output == "json")
        rep.emit(g);
      else
        std::cout << csv;
    } else if (app.got_subcommand(c_red)) {
      Network net = load_scaled(net_path, wl_scale);
      auto site = find_reduction(net);
      Report rep("reduce", net_path);
      auto& r = rep.results();
      if (!site) {
        r["reducible"] = false;
      } else {
        ReductionResult rr = reduce_and_check(net, *site);
        r["reducible"] = true;
        r["v1"] = net.node_ids()[site->v1];
        r["v2"] = net.node_ids()[site->v2];
        r["absorbed"] = ordered_json::array();
        for (int i : site->e2) r["absorbed"].push_back(net.link(i).id);
        r["virtual_link"] = rr.virtual_id;
        r["weq"] = rr.weq;
        r["weq_lo"] = rr.weq_lo;
        r["weq_hi"] = rr.weq_hi;
        r["certificate"] = rr.certificate;
        if (!reduced_out.empty()) save_network(rr.reduced, reduced_out);
      }
      rep.emit(g);
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const SolverError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return exit_code;
}
