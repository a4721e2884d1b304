#include <CLI11.hpp>

#include <map>

#include "kandu/cli.hpp"

namespace kandu::cli {

namespace {

struct Overrides {
  std::string config_file;
  std::vector<CLI::Option*> options;  // one per config key, in table order
};

void add_config_flags(CLI::App& cmd, Overrides& o) {
  cmd.add_option("-c,--config", o.config_file, "key = value config file")->check(CLI::ExistingFile);
  const RunConfig defaults;
  for (const auto& k : config_keys()) {
    const std::string def = k.get(defaults);
    auto* opt = cmd.add_option("--" + k.name)->description(k.help + " (default: " + def + ")");
    // Boolean keys also work as bare flags: `--synth` means `--synth true`.
    if (def == "true" || def == "false") opt->expected(0, 1);
    o.options.push_back(opt);
  }
}

RunConfig resolve(const Overrides& o) {
  RunConfig cfg;
  if (!o.config_file.empty()) cfg = load_config(o.config_file);
  const auto& keys = config_keys();
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const auto* opt = o.options[i];
    if (opt->count() == 0) continue;
    const auto& results = opt->results();
    const std::string value = results.empty() || results.back().empty() ? "true" : results.back();
    try {
      apply_setting(cfg, keys[i].name, value);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(std::string("--") + keys[i].name + ": " + e.what());
    }
  }
  return cfg;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"KANDU-Net segmentation: train, evaluate and inspect models"};
  app.require_subcommand(1);

  struct Command {
    const char* name;
    const char* help;
    int (*fn)(const RunConfig&, std::ostream&, std::ostream&);
  };
  const Command commands[] = {
      {"train", "train a model, writing checkpoints and a metrics CSV", cmd_train},
      {"eval", "evaluate a checkpoint on a data split", cmd_eval},
      {"predict", "write the predicted mask of one image", cmd_predict},
      {"synth", "write a synthetic image/mask dataset with a manifest", cmd_synth},
  };
  std::map<std::string, Overrides> overrides;
  std::vector<std::pair<CLI::App*, const Command*>> subs;
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    add_config_flags(*sub, overrides[c.name]);
    subs.emplace_back(sub, &c);
  }
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every backward rule");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  if (gradcheck->parsed()) return cmd_gradcheck(out, err);
  for (auto& [sub, cmd] : subs) {
    if (!sub->parsed()) continue;
    RunConfig cfg;
    try {
      cfg = resolve(overrides[cmd->name]);
    } catch (const std::exception& e) {
      err << "kandu " << cmd->name << ": " << e.what() << "\n";
      return 2;
    }
    return cmd->fn(cfg, out, err);
  }
  return 2;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"kandu"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(int(argv.size()), argv.data(), out, err);
}

}  // namespace kandu::cli
