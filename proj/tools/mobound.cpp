// mobound: train, certify, check losses, estimate complexity, run minimax sweeps.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric-domain error.

#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mobound/bounds.hpp"
#include "mobound/boosting.hpp"
#include "mobound/complexity.hpp"
#include "mobound/dataset.hpp"
#include "mobound/io.hpp"
#include "mobound/loss_spec.hpp"
#include "mobound/losses.hpp"
#include "mobound/minimax.hpp"

using namespace mobound;

namespace {

struct SchemaFlags {
  std::string task = "multiclass";
  int q = 2;
  int k = 0;

  void add(CLI::App* app) {
    app->add_option("--task", task, "multiclass | multilabel | regression | binary")->capture_default_str();
    app->add_option("--q", q, "output dimension (classes, labels or targets)")->capture_default_str();
    app->add_option("--k", k, "multilabel: max positive labels per row (0 = q)")->capture_default_str();
  }
  DatasetSchema schema() const { return {parse_task(task), q, k}; }
  DatasetSchema schema(int model_q) const { return {parse_task(task), model_q, k}; }
};

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& given) {
  if (given) return *given;
  std::random_device rd;
  const std::uint64_t s = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  std::cerr << "seed: " << s << '\n';
  return s;
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << text;
}

std::string json_text(const json& doc) { return doc.dump(2) + "\n"; }

// -- train -------------------------------------------------------------------

struct TrainArgs {
  std::string data, loss = "logistic", out, split = "exhaustive", cert_loss;
  SchemaFlags schema;
  TrainConfig cfg;
  std::optional<std::uint64_t> seed;
  double delta = 0.05;
};

void run_train(const TrainArgs& a) {
  TrainConfig cfg = a.cfg;
  cfg.seed = resolve_seed(a.seed);
  if (a.split == "quantile")
    cfg.tree.split_candidates.mode = SplitCandidates::Mode::Quantile;
  else if (a.split != "exhaustive")
    throw UsageError("--split must be exhaustive or quantile");
  const Dataset data = load_dataset(a.data, a.schema.schema());
  const LossKind loss = parse_loss(a.loss);
  StopMetric metric;
  std::optional<LossKind> cert_loss;
  if (cfg.patience > 0) {
    cert_loss = a.cert_loss.empty() ? loss : parse_loss(a.cert_loss);
    metric = [&](const Ensemble& e) { return certify(e, data, *cert_loss, a.delta, 1.0, "").bound_explicit; };
  }
  TrainTrace trace;
  const Ensemble ens = train(data, loss, cfg, metric, &trace);
  emit(a.out, json_text(model_to_json(ens, train_config_to_json(cfg))));
  std::cerr << "stages: " << ens.stages().size() << "  sum alpha: " << format_double(ens.total_alpha())
            << "  train risk: " << format_double(trace.risks.back()) << "  stop: " << trace.stop_reason << '\n';
}

// -- certify -----------------------------------------------------------------

struct CertifyArgs {
  std::string model, data, loss, out;
  SchemaFlags schema;
  double delta = 0.05;
  double c0 = 1.0;
};

void run_certify(const CertifyArgs& a) {
  const Ensemble ens = model_from_json(read_json_file(a.model));
  const Dataset data = load_dataset(a.data, a.schema.schema(ens.q()));
  const LossKind loss = a.loss.empty() ? ens.loss() : parse_loss(a.loss);
  const Certificate c = certify(ens, data, loss, a.delta, a.c0);
  emit(a.out, json_text(certificate_to_json(c)));
  std::ostream& os = a.out.empty() || a.out == "-" ? std::cerr : std::cout;
  os << "loss            " << c.loss << '\n'
     << "n, q, d         " << c.inputs.n << ", " << c.inputs.q << ", " << c.d << '\n'
     << "delta           " << format_double(c.inputs.delta) << '\n'
     << "empirical risk  " << format_double(c.empirical_risk) << '\n'
     << "R_nq bound      " << format_double(c.inputs.rad_nq) << '\n'
     << "gamma           " << format_double(c.gamma) << '\n'
     << "rhat, r0        " << format_double(c.rhat) << ", " << format_double(c.r0) << '\n'
     << "ensemble term   " << format_double(c.ensemble_term) << '\n'
     << "bound explicit  " << format_double(c.bound_explicit) << '\n'
     << "bound c-form    " << format_double(c.bound_cform) << "  (c0 = " << format_double(c.c0) << ")\n";
}

// -- check-loss --------------------------------------------------------------

struct CheckLossArgs {
  std::string loss, out;
  int q = 2;
  long trials = 100000;
  std::optional<std::uint64_t> seed;
  std::optional<double> lambda, theta;
};

void run_check_loss(const CheckLossArgs& a) {
  const LossKind loss = parse_loss(a.loss);
  SblParams p = declared_params(loss);
  if (a.lambda) p.lambda = *a.lambda;
  if (a.theta) p.theta = *a.theta;
  p.validate();
  const std::uint64_t seed = resolve_seed(a.seed);
  const SblReport rep = check_sbl(loss, p, a.q, a.trials, {}, seed);
  json doc = {{"loss", to_string(loss)},   {"q", a.q},
              {"trials", rep.trials},      {"seed", seed},
              {"lambda", p.lambda},        {"theta", p.theta},
              {"bound", std::isfinite(p.bound) ? json(p.bound) : json("inf")},
              {"passed", rep.passed},      {"max_violation", rep.max_violation},
              {"max_ratio", rep.max_ratio}};
  if (!rep.passed && rep.worst_case) doc["worst_case"] = {{"u", rep.worst_case->u}, {"v", rep.worst_case->v}};
  emit(a.out, json_text(doc));
  std::cerr << (rep.passed ? "passed" : "falsified") << ": max violation " << format_double(rep.max_violation)
            << ", max ratio " << format_double(rep.max_ratio) << '\n';
}

// -- estimate-rad ------------------------------------------------------------

struct RadArgs {
  std::string data, model, out;
  SchemaFlags schema;
  bool stumps = false;
  double tau = 1.0;
  long draws = 2000;
  std::optional<std::uint64_t> seed;
};

void run_estimate_rad(const RadArgs& a) {
  if (a.stumps == !a.model.empty()) throw UsageError("give exactly one of --model or --stumps");
  const std::uint64_t seed = resolve_seed(a.seed);
  json doc;
  if (a.stumps) {
    const Dataset data = load_dataset(a.data, a.schema.schema());
    const auto est = exact_stump_rademacher(data.X, data.q(), a.tau, a.draws, seed);
    const int d = static_cast<int>(data.d());
    const double n = static_cast<double>(data.n());
    doc = {{"class", "stumps"}, {"estimate", est.mean}, {"std_error", est.std_error}, {"draws", est.draws},
           {"bounds", {{"tree_class", tree_class_rad_bound(2, a.tau, d, n, data.q())},
                       {"counting", tree_class_rad_bound_counting(2, a.tau, d, n * data.q(), data.q())}}},
           {"params", {{"n", data.n()}, {"d", d}, {"q", data.q()}, {"tau", a.tau}, {"seed", seed}}}};
  } else {
    const Ensemble ens = model_from_json(read_json_file(a.model));
    const Dataset data = load_dataset(a.data, a.schema.schema(ens.q()));
    if (ens.stages().empty()) throw DataError("model has no stages");
    std::vector<VectorFunction> fns;
    double tau_max = 0.0;
    for (const auto& s : ens.stages()) {
      fns.push_back([&tree = s.tree](std::span<const double> x) {
        const auto w = tree.predict(x);
        return std::vector<double>(w.begin(), w.end());
      });
      tau_max = std::max(tau_max, s.tree.tau());
    }
    const auto grid = project_class(fns, data.X, ens.q());
    const auto est = empirical_rademacher(grid, a.draws, seed);
    const int d = static_cast<int>(data.d());
    const double n = static_cast<double>(data.n());
    doc = {{"class", "stage_trees"}, {"estimate", est.mean}, {"std_error", est.std_error}, {"draws", est.draws},
           {"exact", est.exact},
           {"bounds", {{"tree_class", tree_class_rad_bound(std::max(2, ens.max_leaves()), tau_max, d, n, ens.q())}}},
           {"params", {{"n", data.n()}, {"d", d}, {"q", ens.q()}, {"members", fns.size()}, {"seed", seed}}}};
  }
  emit(a.out, json_text(doc));
}

// -- minimax -----------------------------------------------------------------

struct MinimaxArgs {
  std::vector<double> lambda{1.0}, theta{0.0, 0.5}, kappa{1.0};
  std::vector<int> n{20, 50, 100};
  int q = 2;
  long trials = 1000;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void run_minimax(const MinimaxArgs& a) {
  const std::uint64_t seed = resolve_seed(a.seed);
  std::ostringstream csv;
  write_minimax_csv_header(csv);
  for (double l : a.lambda)
    for (double t : a.theta)
      for (int n : a.n)
        for (double k : a.kappa) write_minimax_csv(csv, run_experiment(l, t, n, a.q, k, a.trials, seed));
  emit(a.out, csv.str());
  std::cerr << "seed " << seed << "; learners are specific algorithms, not the infimum over all of them\n";
}

// -- sweep-gamma -------------------------------------------------------------

struct SweepArgs {
  std::string grid_file, out;
};

void run_sweep_gamma(const SweepArgs& a) {
  std::ifstream in(a.grid_file);
  if (!in) throw DataError("cannot open " + a.grid_file);
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> header;
  std::ostringstream csv;
  csv << "n,q,delta,lambda,theta,beta,loss_bound,rad_nq,gamma,rhat,r0\n";
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split(line, ',');
    if (header.empty()) {
      for (auto c : cells) header.emplace_back(detail::trim(c));
      for (const char* need : {"n", "q", "delta", "lambda", "theta"})
        if (std::find(header.begin(), header.end(), need) == header.end())
          throw DataError(std::string("grid file lacks column '") + need + "'");
      continue;
    }
    if (cells.size() != header.size()) detail::line_error(lineno, "expected " + std::to_string(header.size()) + " fields");
    BoundInputs b;
    for (std::size_t c = 0; c < header.size(); ++c) {
      const double v = detail::parse_number(cells[c], lineno);
      const auto& h = header[c];
      if (h == "n") b.n = v;
      else if (h == "q") b.q = v;
      else if (h == "delta") b.delta = v;
      else if (h == "lambda") b.lambda = v;
      else if (h == "theta") b.theta = v;
      else if (h == "beta") b.beta = v;
      else if (h == "loss_bound") b.loss_bound = v;
      else if (h == "rad_nq") b.rad_nq = v;
      else throw DataError("unknown grid column '" + h + "'");
    }
    csv << format_double(b.n) << ',' << format_double(b.q) << ',' << format_double(b.delta) << ','
        << format_double(b.lambda) << ',' << format_double(b.theta) << ',' << format_double(b.beta) << ','
        << format_double(b.loss_bound) << ',' << format_double(b.rad_nq) << ',' << format_double(gamma(b)) << ','
        << format_double(rhat(b.lambda, b.theta, b.q, b.n, b.beta, b.rad_nq)) << ','
        << format_double(r0(b.loss_bound, b.delta, b.n)) << '\n';
  }
  if (header.empty()) throw DataError("grid file has no header");
  emit(a.out, csv.str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-output boosting with SBL risk certificates"};
  app.set_config("--config", "", "read flags from a config file (key = value, [subcommand] sections)");
  app.require_subcommand(1);

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "fit a boosted ensemble of l1-constrained trees");
  tr->add_option("--data", ta.data, "training CSV")->required();
  ta.schema.add(tr);
  tr->add_option("--loss", ta.loss, "training loss, e.g. logistic or clip(logistic,B=3)")->capture_default_str();
  tr->add_option("--rounds", ta.cfg.rounds)->capture_default_str();
  tr->add_option("--leaves", ta.cfg.tree.leaves, "leaves per tree (p)")->capture_default_str();
  tr->add_option("--tau", ta.cfg.tree.tau, "l1 budget per leaf")->capture_default_str();
  tr->add_option("--tau-decay", ta.cfg.tau_decay)->capture_default_str();
  tr->add_option("--beta", ta.cfg.beta, "bound on sum of step sizes")->capture_default_str();
  tr->add_option("--shrinkage", ta.cfg.shrinkage)->capture_default_str();
  tr->add_option("--min-samples-leaf", ta.cfg.tree.min_samples_leaf)->capture_default_str();
  tr->add_option("--split", ta.split, "exhaustive | quantile")->capture_default_str();
  tr->add_option("--quantiles", ta.cfg.tree.split_candidates.count)->capture_default_str();
  tr->add_option("--patience", ta.cfg.patience, "stop when the certificate bound stalls (0 = off)")->capture_default_str();
  tr->add_option("--delta", ta.delta, "confidence for --patience")->capture_default_str();
  tr->add_option("--certify-loss", ta.cert_loss, "bounded loss for --patience (default: --loss)");
  tr->add_option("--seed", ta.seed, "recorded in the model");
  tr->add_option("--out", ta.out, "model JSON (default stdout)");

  CertifyArgs ca;
  auto* ce = app.add_subcommand("certify", "risk certificate for a trained model");
  ce->add_option("--model", ca.model)->required();
  ce->add_option("--data", ca.data)->required();
  ca.schema.add(ce);
  ce->add_option("--loss", ca.loss, "bounded loss to certify (default: model loss)");
  ce->add_option("--delta", ca.delta)->capture_default_str();
  ce->add_option("--c0", ca.c0, "constant for the c-form bound")->capture_default_str();
  ce->add_option("--out", ca.out, "certificate JSON (default stdout)");

  CheckLossArgs ka;
  auto* ck = app.add_subcommand("check-loss", "search for violations of the SBL condition");
  ck->add_option("--loss", ka.loss)->required();
  ck->add_option("--q", ka.q)->capture_default_str();
  ck->add_option("--trials", ka.trials)->capture_default_str();
  ck->add_option("--seed", ka.seed);
  ck->add_option("--lambda", ka.lambda, "override the declared lambda");
  ck->add_option("--theta", ka.theta, "override the declared theta");
  ck->add_option("--out", ka.out);

  RadArgs ra;
  auto* er = app.add_subcommand("estimate-rad", "empirical Rademacher complexity");
  er->add_option("--data", ra.data)->required();
  ra.schema.add(er);
  er->add_option("--model", ra.model, "class = the model's stage trees");
  er->add_flag("--stumps", ra.stumps, "class = l1-constrained stumps (exact per-draw supremum)");
  er->add_option("--tau", ra.tau, "stump l1 budget")->capture_default_str();
  er->add_option("--draws", ra.draws)->capture_default_str();
  er->add_option("--seed", ra.seed);
  er->add_option("--out", ra.out);

  MinimaxArgs ma;
  auto* mm = app.add_subcommand("minimax", "learner risk on the lower-bound construction");
  mm->add_option("--lambda", ma.lambda)->capture_default_str();
  mm->add_option("--theta", ma.theta)->capture_default_str();
  mm->add_option("--n", ma.n)->capture_default_str();
  mm->add_option("--q", ma.q)->capture_default_str();
  mm->add_option("--kappa", ma.kappa)->capture_default_str();
  mm->add_option("--trials", ma.trials)->capture_default_str();
  mm->add_option("--seed", ma.seed);
  mm->add_option("--out", ma.out, "CSV (default stdout)");

  SweepArgs sa;
  auto* sg = app.add_subcommand("sweep-gamma", "evaluate gamma, rhat and r0 over a CSV grid");
  sg->add_option("--grid-file", sa.grid_file, "CSV with columns n,q,delta,lambda,theta[,beta,loss_bound,rad_nq]")
      ->required();
  sg->add_option("--out", sa.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*tr) run_train(ta);
    if (*ce) run_certify(ca);
    if (*ck) run_check_loss(ka);
    if (*er) run_estimate_rad(ra);
    if (*mm) run_minimax(ma);
    if (*sg) run_sweep_gamma(sa);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const DomainError& e) {
    std::cerr << "domain error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
