#pragma once

/**
 * \file serialization.hpp
 * \brief Versioned JSON form of a ConvexTermBank.
 *
 * Doubles are written in shortest round-trip form, so loading a saved model
 * reproduces every raw parameter bit for bit.
 */

#include <polyfit/error.hpp>
#include <polyfit/potential.hpp>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>

namespace polyfit {

inline constexpr const char* kModelFormat = "polyfit-model";
inline constexpr int kModelVersion = 1;

inline nlohmann::json target_json(const Target& t) {
  if (!t.mixed()) return std::string(name(t.first));
  return nlohmann::json::array({std::string(name(t.first)), std::string(name(*t.second))});
}

inline Target target_from_json(const nlohmann::json& j) {
  if (j.is_string()) return Target{parse_invariant(j.get<std::string>()), std::nullopt};
  if (j.is_array() && j.size() == 2)
    return Target{parse_invariant(j[0].get<std::string>()), parse_invariant(j[1].get<std::string>())};
  fail(ErrorKind::Parse, "term target must be an invariant name or a pair");
}

inline nlohmann::json to_json(const ConvexTermBank& bank) {
  nlohmann::json j;
  j["format"] = kModelFormat;
  j["version"] = kModelVersion;
  j["family"] = name(bank.family());
  j["ansatz"] = name(bank.ansatz());
  nlohmann::json norm = nlohmann::json::object();
  for (auto k : kAllInvariants)
    norm[std::string(name(k))] = {{"a", bank.constants().shift(k)}, {"b", bank.constants().scale(k)}};
  j["normalization"] = norm;
  j["terms"] = nlohmann::json::array();
  for (const auto& t : bank.terms()) {
    nlohmann::json tj;
    tj["target"] = target_json(t.target);
    if (t.target.mixed()) {
      tj["alpha_raw"] = t.alpha_raw;
      tj["alpha"] = t.alpha();
    }
    std::visit(
        [&](const auto& b) {
          using B = std::decay_t<decltype(b)>;
          if constexpr (std::is_same_v<B, cann::CannTermParams>) {
            tj["backend"] = "cann";
          } else if constexpr (std::is_same_v<B, icnn::IcnnParams>) {
            tj["backend"] = "icnn";
            tj["widths"] = b.widths;
          } else {
            tj["backend"] = "node";
            tj["widths"] = b.widths;
            tj["activation"] = b.activation == node::Activation::Tanh ? "tanh" : "identity";
            tj["biases"] = b.biases;
            tj["integrator"] = {{"scheme", "rk4"}, {"steps", b.steps}};
          }
          tj["params"] = b.params;
        },
        t.backend);
    j["terms"].push_back(tj);
  }
  return j;
}

inline ConvexTermBank bank_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", std::string()) != kModelFormat) fail(ErrorKind::Parse, "not a polyfit model document");
    if (j.at("version").get<int>() != kModelVersion)
      fail(ErrorKind::Parse, "unsupported model version " + j.at("version").dump());
    NormalizationConstants c;
    for (auto k : kAllInvariants) {
      const auto& e = j.at("normalization").at(std::string(name(k)));
      c.a[index(k)] = e.at("a").get<double>();
      c.b[index(k)] = e.at("b").get<double>();
    }
    ConvexTermBank bank(parse_family(j.at("family").get<std::string>()),
                        parse_ansatz(j.at("ansatz").get<std::string>()), c);
    for (const auto& tj : j.at("terms")) {
      ConvexScalarTerm t;
      t.target = target_from_json(tj.at("target"));
      if (t.target.mixed()) t.alpha_raw = tj.at("alpha_raw").get<double>();
      const auto backend = tj.at("backend").get<std::string>();
      const auto params = tj.at("params").get<std::vector<double>>();
      if (backend == "cann") {
        cann::CannTermParams p;
        if (params.size() != p.params.size()) fail(ErrorKind::Parse, "CANN term needs 12 parameters");
        p.params = params;
        t.backend = p;
      } else if (backend == "icnn") {
        icnn::IcnnParams p(tj.at("widths").get<std::vector<int>>());
        if (params.size() != p.params.size()) fail(ErrorKind::Parse, "ICNN parameter count does not match widths");
        p.params = params;
        t.backend = p;
      } else if (backend == "node") {
        const auto act = tj.value("activation", std::string("tanh"));
        node::NodeParams p(tj.at("widths").get<std::vector<int>>(), tj.at("integrator").at("steps").get<int>(),
                           act == "identity" ? node::Activation::Identity : node::Activation::Tanh);
        if (params.size() != p.params.size()) fail(ErrorKind::Parse, "NODE parameter count does not match widths");
        p.params = params;
        if (tj.contains("biases")) {
          p.biases = tj.at("biases").get<std::vector<std::vector<double>>>();
          if (!p.biases_are_zero()) fail(ErrorKind::Parse, "NODE biases must be zero");
        }
        t.backend = p;
      } else {
        fail(ErrorKind::Parse, "unknown backend '" + backend + "'");
      }
      if (t.family() != bank.family()) fail(ErrorKind::Parse, "term backend does not match the model family");
      bank.add_term(std::move(t));
    }
    return bank;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, std::string("malformed model document: ") + e.what());
  }
}

inline void save_model(const ConvexTermBank& bank, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << to_json(bank).dump(2) << "\n";
}

inline ConvexTermBank load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open model file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, path.string() + ": " + e.what());
  }
  return bank_from_json(j);
}

} // namespace polyfit
