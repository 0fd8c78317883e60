#pragma once

// JSON persistence for trees and ensembles. Doubles are written in shortest
// round-trip form, so save -> load is bit-exact.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "mobound/boosting.hpp"
#include "mobound/errors.hpp"
#include "mobound/loss_spec.hpp"
#include "mobound/trees.hpp"

namespace mobound {

using json = nlohmann::ordered_json;

inline constexpr const char* kModelSchema = "mobound.model/1";
inline constexpr const char* kToolkitVersion = "0.1.0";

/// FNV-1a 64-bit, hex encoded.
inline std::string content_hash(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline json tree_to_json(const MultiTree& t) {
  json nodes = json::array();
  for (const auto& n : t.nodes()) nodes.push_back({{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left}, {"right", n.right}});
  json leaves = json::array();
  for (std::size_t l = 0; l < t.leaves().rows(); ++l) {
    const auto row = t.leaves().row(l);
    leaves.push_back(json(std::vector<double>(row.begin(), row.end())));
  }
  return {{"tau", t.tau()}, {"p", t.leaf_count()}, {"d", t.input_dim()}, {"q", t.output_dim()},
          {"nodes", std::move(nodes)}, {"leaves", std::move(leaves)}};
}

inline MultiTree tree_from_json(const json& j) {
  try {
    const int p = j.at("p").get<int>(), q = j.at("q").get<int>(), d = j.at("d").get<int>();
    if (p < 2 || q < 1) throw DataError("tree header out of range");
    std::vector<TreeNode> nodes;
    for (const auto& n : j.at("nodes"))
      nodes.push_back({n.at("feature").get<int>(), n.at("threshold").get<double>(), n.at("left").get<int>(),
                       n.at("right").get<int>()});
    const auto& rows = j.at("leaves");
    if (rows.size() != static_cast<std::size_t>(p)) throw DataError("leaf matrix must have p rows");
    Matrix leaves(static_cast<std::size_t>(p), static_cast<std::size_t>(q));
    for (std::size_t l = 0; l < rows.size(); ++l) {
      const auto v = rows[l].get<std::vector<double>>();
      if (v.size() != static_cast<std::size_t>(q)) throw DataError("leaf row must have q entries");
      std::copy(v.begin(), v.end(), leaves.row(l).begin());
    }
    return MultiTree(std::move(nodes), std::move(leaves), j.at("tau").get<double>(), d);
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed tree: ") + e.what());
  }
}

/// The hashed part of a model document.
inline json model_payload(const Ensemble& ens) {
  json stages = json::array();
  for (const auto& s : ens.stages()) stages.push_back({{"alpha", s.alpha}, {"tree", tree_to_json(s.tree)}});
  return {{"schema", kModelSchema}, {"loss", to_string(ens.loss())}, {"beta", ens.beta()},
          {"q", ens.q()},           {"d", ens.d()},                  {"stages", std::move(stages)}};
}

inline std::string model_hash(const Ensemble& ens) { return content_hash(model_payload(ens).dump()); }

inline json train_config_to_json(const TrainConfig& c) {
  const bool quantile = c.tree.split_candidates.mode == SplitCandidates::Mode::Quantile;
  return {{"rounds", c.rounds},
          {"shrinkage", c.shrinkage},
          {"leaves", c.tree.leaves},
          {"tau", c.tree.tau},
          {"tau_decay", c.tau_decay},
          {"min_samples_leaf", c.tree.min_samples_leaf},
          {"split_candidates", quantile ? "quantile" : "exhaustive"},
          {"quantile_count", c.tree.split_candidates.count},
          {"beta", c.beta},
          {"patience", c.patience},
          {"seed", c.seed}};
}

inline json model_to_json(const Ensemble& ens, const json& train_config = nullptr) {
  json doc = model_payload(ens);
  if (!train_config.is_null()) doc["train_config"] = train_config;
  doc["hash"] = model_hash(ens);
  return doc;
}

inline Ensemble model_from_json(const json& doc) {
  try {
    if (doc.at("schema").get<std::string>() != kModelSchema) throw DataError("unsupported model schema");
    std::vector<Stage> stages;
    for (const auto& s : doc.at("stages")) stages.push_back({s.at("alpha").get<double>(), tree_from_json(s.at("tree"))});
    LossKind loss;
    try {
      loss = parse_loss(doc.at("loss").get<std::string>());
    } catch (const UsageError& e) {
      throw DataError(std::string("model loss: ") + e.what());
    }
    Ensemble ens(std::move(loss), doc.at("beta").get<double>(), doc.at("q").get<int>(), doc.at("d").get<int>(),
                 std::move(stages));
    if (doc.contains("hash") && doc["hash"].get<std::string>() != model_hash(ens))
      throw DataError("model hash does not match its contents");
    return ens;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed model: ") + e.what());
  }
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

inline void write_json_file(const std::string& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << doc.dump(2) << '\n';
}

}  // namespace mobound
