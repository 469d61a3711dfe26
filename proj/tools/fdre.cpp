#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fdre/experiment.hpp"
#include "fdre/io.hpp"

namespace {

// --set key=value with dotted paths; values parse as JSON when possible,
// otherwise as strings.
void apply_override(fdre::Json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw fdre::ConfigError("--set expects key=value, got '" + assignment + "'");
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);

  fdre::Json value;
  try {
    value = fdre::Json::parse(raw);
  } catch (...) {
    value = raw;
  }

  fdre::Json* node = &config;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (key.empty()) throw fdre::ConfigError("--set: empty key segment in '" + path + "'");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      break;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

int run_command(const std::string& config_path, const std::vector<std::string>& overrides,
                long seed_override, bool has_seed) {
  fdre::Json config = fdre::load_json(config_path);
  for (const auto& assignment : overrides) apply_override(config, assignment);
  if (has_seed) config["seeds"] = {seed_override};

  const fdre::ValidationResult check = fdre::validate_config(config);
  if (!check.ok()) {
    for (const auto& error : check.errors) std::cerr << "config error: " << error << "\n";
    return 1;
  }

  const fdre::Json result = fdre::run_experiment(config);
  fdre::write_experiment_outputs(result);

  long failures = 0;
  for (const auto& record : result.at("records"))
    if (record.contains("error")) {
      std::cerr << "seed " << record.at("seed") << " failed: "
                << record.at("error").get<std::string>() << "\n";
      ++failures;
    }
  const std::string base = config.at("output_path").get<std::string>();
  std::cout << "wrote " << base << ".json ("
            << result.at("records").size() - failures << "/"
            << result.at("records").size() << " seeds succeeded)\n";
  return failures == static_cast<long>(result.at("records").size()) && failures > 0 ? 2 : 0;
}

int validate_command(const std::string& config_path) {
  const fdre::Json config = fdre::load_json(config_path);
  const fdre::ValidationResult check = fdre::validate_config(config);
  if (check.ok()) {
    std::cout << "ok\n";
    return 0;
  }
  for (const auto& error : check.errors) std::cerr << "config error: " << error << "\n";
  return 1;
}

int encode_command(const std::string& model_path, const std::string& in_path,
                   const std::string& out_path) {
  const fdre::Json blob = fdre::load_json(model_path);
  const fdre::FlowModel flow = blob.contains("flow") ? fdre::flow_from_json(blob.at("flow"))
                                                     : fdre::flow_from_json(blob);
  const fdre::LabeledData data = fdre::load_csv(in_path);
  const fdre::DataMatrix z = flow.forward(data.features).z;
  std::vector<std::string> header;
  for (Eigen::Index c = 0; c < z.dim(); ++c) header.push_back("z" + std::to_string(c));
  fdre::write_csv(out_path, header, z.values);
  std::cout << "wrote " << out_path << " (" << z.rows() << " rows)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"featurized density ratio estimation experiments"};
  app.require_subcommand(1);

  std::string config_path, model_path, in_path, out_path;
  std::vector<std::string> overrides;
  long seed_override = 0;

  auto* run = app.add_subcommand("run", "execute an experiment config");
  run->add_option("--config", config_path, "experiment config JSON")->required();
  run->add_option("--seed", seed_override, "run a single seed, replacing the config list");
  run->add_option("--set", overrides, "override a config field, e.g. --set flow.epochs=10");

  auto* validate = app.add_subcommand("validate", "check a config without running it");
  validate->add_option("--config", config_path, "experiment config JSON")->required();

  auto* encode = app.add_subcommand("encode", "dump flow encodings of a CSV");
  encode->add_option("--model", model_path, "flow or composed-estimator JSON blob")->required();
  encode->add_option("--in", in_path, "input CSV (features only)")->required();
  encode->add_option("--out", out_path, "output CSV of encodings")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed())
      return run_command(config_path, overrides, seed_override, run->count("--seed") > 0);
    if (validate->parsed()) return validate_command(config_path);
    if (encode->parsed()) return encode_command(model_path, in_path, out_path);
  } catch (const fdre::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
