// dacount: synthesize data, train, evaluate and run the density-map counting
// model with output-space adversarial adaptation.
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration error.

#include <CLI11.hpp>
#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "config_file.hpp"
#include "dacount/checkpoint.hpp"
#include "dacount/density.hpp"
#include "dacount/errors.hpp"
#include "dacount/gradcheck.hpp"
#include "dacount/gradcheck_suites.hpp"
#include "dacount/image_io.hpp"
#include "dacount/metrics.hpp"
#include "dacount/rng.hpp"
#include "dacount/synth.hpp"
#include "dacount/trainer.hpp"

namespace fs = std::filesystem;
using namespace dacount;

namespace {

std::string to_text(const std::string& v) { return v; }
std::string to_text(bool v) { return v ? "true" : "false"; }
template <typename T>
std::string to_text(T v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// Options of one (sub)command, remembered so the resolved values can be echoed
// in config-file syntax.
class Options {
 public:
  explicit Options(CLI::App* app) : app_(app) {}

  template <typename T>
  CLI::Option* add(const std::string& name, T& var, const std::string& help) {
    values_.emplace_back(name, [&var] { return to_text(var); });
    return app_->add_option("--" + name, var, help);
  }
  CLI::Option* flag(const std::string& name, bool& var, const std::string& help) {
    values_.emplace_back(name, [&var] { return to_text(var); });
    return app_->add_flag("--" + name, var, help);
  }
  bool has(const std::string& name) const {
    return std::any_of(values_.begin(), values_.end(), [&](const auto& v) { return v.first == name; });
  }
  void echo(std::ostream& os) const {
    for (const auto& [name, get] : values_) os << name << " = " << get() << '\n';
  }
  CLI::App* app() const { return app_; }

 private:
  CLI::App* app_;
  std::vector<std::pair<std::string, std::function<std::string()>>> values_;
};

struct Global {
  std::string config;
  std::uint64_t seed = 0;
  bool deterministic = false;
};

void print_resolved(const std::string& command, const Options& global, const Options& sub) {
  std::cout << "# resolved configuration (" << command << ")\n";
  global.echo(std::cout);
  sub.echo(std::cout);
  std::cout << std::flush;
}

void write_resolved(const fs::path& path, const Options& global, const Options& sub) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write '" + path.string() + "'");
  std::ostringstream g;
  global.echo(g);
  // the file is itself a valid --config input, so leave out "config"
  std::istringstream lines(g.str());
  for (std::string line; std::getline(lines, line);) {
    if (!line.starts_with("config ")) os << line << '\n';
  }
  sub.echo(os);
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::string out;
  std::string domains;
  std::size_t per_domain = 100;
  std::size_t val_per_domain = 0;
};

SceneDomainParams parse_domain(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("each domain must be a JSON object");
  SceneDomainParams p;
  if (!j.contains("name") || !j["name"].is_string()) throw ConfigError("domain without a string \"name\"");
  p.name = j["name"].get<std::string>();
  for (const auto& [key, value] : j.items()) {
    if (key == "name") continue;
    if (key == "perspective_strength") {
      p.perspective_strength = value.get<double>();
    } else if (key == "base_object_size") {
      p.base_object_size = value.get<double>();
    } else if (key == "luminance") {
      p.luminance = value.get<double>();
    } else if (key == "background_texture_seed") {
      p.background_texture_seed = value.get<std::uint64_t>();
    } else if (key == "object_count_range") {
      if (!value.is_array() || value.size() != 2) throw ConfigError("object_count_range must be [min, max]");
      p.min_objects = value[0].get<int>();
      p.max_objects = value[1].get<int>();
    } else if (key == "height") {
      p.height = value.get<std::size_t>();
    } else if (key == "width") {
      p.width = value.get<std::size_t>();
    } else if (key == "max_overlap") {
      p.max_overlap = value.get<double>();
    } else {
      throw ConfigError("unknown domain field \"" + key + "\" in domain '" + p.name + "'");
    }
  }
  p.validate();
  return p;
}

std::vector<SceneDomainParams> read_domain_spec(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open domain spec '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed domain spec '" + path.string() + "': " + e.what());
  }
  const nlohmann::json& list = j.is_object() && j.contains("domains") ? j["domains"] : j;
  if (!list.is_array() || list.empty()) throw ConfigError("domain spec must list at least one domain");
  std::vector<SceneDomainParams> out;
  try {
    for (const auto& d : list) out.push_back(parse_domain(d));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad value in domain spec '" + path.string() + "': " + e.what());
  }
  return out;
}

void write_split(const fs::path& out, const std::string& stem, const std::vector<AnnotatedImage>& images) {
  fs::create_directories(out / stem);
  std::vector<AnnotationRecord> records;
  char name[64];
  for (std::size_t i = 0; i < images.size(); ++i) {
    std::snprintf(name, sizeof name, "%05zu.ppm", i);
    const std::string rel = stem + "/" + name;
    write_ppm(out / rel, images[i].image);
    records.push_back({rel, images[i].camera_id, images[i].boxes});
  }
  write_annotations(out / (stem + ".jsonl"), records);
}

int run_synth(const Global& g, const SynthArgs& a) {
  const auto domains = read_domain_spec(a.domains);
  const fs::path out(a.out);
  fs::create_directories(out);
  if (a.per_domain == 0) std::cerr << "warning: --per-domain 0 writes empty annotation files\n";
  const std::uint64_t data_seed = derive_seed(g.seed, "data");
  for (std::size_t d = 0; d < domains.size(); ++d) {
    const auto& p = domains[d];
    const Domain domain = d == 0 ? Domain::source : Domain::target;
    write_split(out, p.name, synth_dataset(p, a.per_domain, derive_seed(data_seed, "train"), domain));
    std::cout << p.name << ": " << a.per_domain << " images -> " << (out / (p.name + ".jsonl")).string();
    if (a.val_per_domain > 0) {
      write_split(out, p.name + "_val", synth_dataset(p, a.val_per_domain, derive_seed(data_seed, "val"), domain));
      std::cout << ", " << a.val_per_domain << " validation images -> " << (out / (p.name + "_val.jsonl")).string();
    }
    std::cout << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string source;
  std::string target;
  std::string source_val;
  std::string target_val;
  std::string out;
  std::string reduction = "sum";
  std::size_t log_every = 1;
  TrainConfig cfg;
};

std::vector<AnnotatedImage> load_set(const std::string& path, Domain domain) {
  auto images = load_annotations(path, domain);
  check_consistent_shapes(images);
  return images;
}

int run_train(const Global& g, TrainArgs a, const Options& global_opts, const Options& opts) {
  TrainConfig cfg = a.cfg;
  cfg.seed = g.seed;
  cfg.reduction = a.reduction == "mean" ? PixelReduction::mean : PixelReduction::sum;
  if (a.target.empty() && cfg.lambda_adv > 0.0) {
    throw ConfigError("--target is required when --lambda-adv > 0 (use --lambda-adv 0 for the baseline)");
  }
  cfg.validate();
  const fs::path out(a.out);
  fs::create_directories(out);
  write_resolved(out / "config.txt", global_opts, opts);
  if (cfg.eval_every > 0) cfg.checkpoint_dir = out / "checkpoints";

  const auto source = load_set(a.source, Domain::source);
  if (source.empty()) throw ConfigError("source annotation file '" + a.source + "' lists no images");
  std::vector<AnnotatedImage> target;
  if (!a.target.empty()) {
    target = load_set(a.target, Domain::target);
    for (auto& im : target) im.boxes.clear();  // target labels are never used for training
    if (target.empty()) throw ConfigError("target annotation file '" + a.target + "' lists no images");
  }
  ValidationSets val;
  if (!a.source_val.empty()) val.source = load_set(a.source_val, Domain::source);
  if (!a.target_val.empty()) val.target = load_set(a.target_val, Domain::target);

  std::ofstream history(out / "history.csv");
  if (!history) throw DataError("cannot write '" + (out / "history.csv").string() + "'");
  history << history_csv_header() << '\n';
  std::cout << history_csv_header() << '\n';
  auto on_step = [&](const StepReport& r) {
    history << history_csv_row(r) << '\n';
    if (a.log_every > 0 && r.step % a.log_every == 0) std::cout << history_csv_row(r) << '\n' << std::flush;
  };
  TrainResult result = train(source, target, cfg, val, on_step);
  history.close();

  save_checkpoint(result.psi, out / "psi.ckpt");
  save_checkpoint(result.theta, out / "theta.ckpt");
  if (!result.evals.empty()) {
    std::ofstream ev(out / "evals.csv");
    ev << "step,split,mae,mse,are\n";
    for (const auto& e : result.evals) {
      for (const auto& [name, rep] : {std::pair{"source_val", &e.source_val}, std::pair{"target_val", &e.target_val}}) {
        if (!rep->has_value()) continue;
        const auto& r = **rep;
        ev << e.step << ',' << name << ',' << to_text(r.mae) << ',' << to_text(r.mse) << ','
           << (r.are ? to_text(*r.are) : std::string("undefined")) << '\n';
      }
    }
    const auto& last = result.evals.back();
    std::vector<std::pair<std::string, MetricsReport>> rows;
    if (last.source_val) rows.emplace_back("source_val", *last.source_val);
    if (last.target_val) rows.emplace_back("target_val", *last.target_val);
    if (!rows.empty()) std::cout << "evaluation at step " << last.step << ":\n" << format_metrics_table(rows);
  }
  std::cout << "trained " << result.history.size() << " steps; estimator saved to " << (out / "psi.ckpt").string()
            << '\n';
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string ckpt;
  std::string data;
  std::string compare;
  std::string csv;
};

int run_eval(const EvalArgs& a) {
  const auto [cfg, psi] = load_estimator(a.ckpt);
  const auto data = load_set(a.data, Domain::source);
  if (data.empty()) throw ConfigError("'" + a.data + "' lists no images");
  cfg.check_input_size(data.front().image.dim(1), data.front().image.dim(2));
  std::vector<std::pair<std::string, MetricsReport>> rows;
  if (a.compare.empty()) {
    rows.emplace_back("data", evaluate(cfg, psi, data));
    std::cout << format_metrics_table(rows);
  } else {
    const auto other = load_set(a.compare, Domain::target);
    if (other.empty()) throw ConfigError("'" + a.compare + "' lists no images");
    cfg.check_input_size(other.front().image.dim(1), other.front().image.dim(2));
    const DomainGapReport gap = compare_domains(cfg, psi, data, other);
    rows.emplace_back("data", gap.source);
    rows.emplace_back("compare", gap.target);
    std::cout << format_metrics_table(rows);
    std::cout << "ratio compare/data: MAE " << to_text(gap.mae_ratio) << "  MSE " << to_text(gap.mse_ratio)
              << "  ARE " << (gap.are_ratio ? to_text(*gap.are_ratio) : std::string("undefined")) << '\n';
  }
  if (!a.csv.empty()) {
    std::ofstream os(a.csv);
    if (!os) throw DataError("cannot write '" + a.csv + "'");
    os << metrics_csv(rows);
  }
  return 0;
}

// ---------------------------------------------------------------- predict

struct PredictArgs {
  std::string ckpt;
  std::string image;
  std::string out;
};

int run_predict(const PredictArgs& a) {
  const auto [cfg, psi] = load_estimator(a.ckpt);
  const Tensor<float> image = read_ppm(a.image);
  if (image.dim(0) != cfg.in_channels) {
    throw ConfigError("image has " + std::to_string(image.dim(0)) + " channels, the estimator expects " +
                      std::to_string(cfg.in_channels));
  }
  cfg.check_input_size(image.dim(1), image.dim(2));
  Tape<float> tape;
  const Tensor<float> map = estimator_forward(tape, cfg, psi.frozen(), image);
  write_dmap(a.out, map);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", predict_count(map));
  std::cout << buf << '\n';
  return 0;
}

// ---------------------------------------------------------------- gradcheck

struct GradcheckArgs {
  std::string scope = "ops";
  std::size_t num_seeds = 3;
};

int run_gradcheck(const Global& g, const GradcheckArgs& a) {
  const auto scope = parse_gradcheck_scope(a.scope);
  if (!scope) throw ConfigError("unknown gradcheck scope '" + a.scope + "'");
  bool ok = true;
  double worst = 0.0;
  for (std::size_t i = 0; i < a.num_seeds; ++i) {
    const std::uint64_t seed = g.seed + i;
    std::cout << "== scope " << to_string(*scope) << ", seed " << seed << '\n';
    for (const auto& r : run_gradcheck_suite(*scope, seed)) {
      std::cout << format_report(r);
      ok = ok && r.passed();
      worst = std::max(worst, r.max_rel_error());
    }
  }
  std::cout << (ok ? "PASS" : "FAIL") << "  scope=" << to_string(*scope) << "  seeds=" << a.num_seeds
            << "  max_rel_err=" << worst << "  tol=" << gradcheck_tolerance(*scope) << '\n';
  return ok ? 0 : 1;
}

// Config-file entries become "--key=value" arguments placed ahead of the
// command line's own, so explicit flags win (options keep their last value).
std::vector<std::string> inject_config(const std::vector<std::string>& args, const Options& global,
                                       const std::vector<const Options*>& commands) {
  const std::string path = cli::find_config_path(args);
  if (path.empty()) return args;
  const auto entries = cli::read_config_file(path);
  auto sub_pos = std::find_if(args.begin(), args.end(), [&](const std::string& a) {
    return std::any_of(commands.begin(), commands.end(), [&](const Options* c) { return c->app()->get_name() == a; });
  });
  if (sub_pos == args.end()) return args;
  const Options* sub = *std::find_if(commands.begin(), commands.end(),
                                     [&](const Options* c) { return c->app()->get_name() == *sub_pos; });
  std::vector<std::string> before, after;
  for (const auto& [key, value] : entries) {
    if (key == "config") throw ConfigError("config files cannot include other config files");
    if (global.has(key)) {
      before.push_back("--" + key + "=" + value);
    } else if (sub->has(key)) {
      after.push_back("--" + key + "=" + value);
    } else {
      throw ConfigError("config file '" + path + "': unknown key '" + key + "' for command " + *sub_pos);
    }
  }
  std::vector<std::string> out(args.begin(), sub_pos);
  out.insert(out.end(), before.begin(), before.end());
  out.push_back(*sub_pos);
  out.insert(out.end(), after.begin(), after.end());
  out.insert(out.end(), sub_pos + 1, args.end());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vehicle counting by density estimation with output-space adversarial domain adaptation"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);

  Global g;
  Options global(&app);
  global.add("config", g.config, "flat key = value file; command-line flags take precedence");
  global.add("seed", g.seed, "root seed for all random streams");
  global.flag("deterministic", g.deterministic, "bit-reproducible execution (single-threaded)");

  SynthArgs synth;
  Options so(app.add_subcommand("synth", "write a synthetic multi-domain dataset"));
  so.add("out", synth.out, "output directory")->required();
  so.add("domains", synth.domains, "JSON file listing the domains' scene parameters")->required();
  so.add("per-domain", synth.per_domain, "training images per domain");
  so.add("val-per-domain", synth.val_per_domain, "additional validation images per domain");

  TrainArgs tr;
  Options to(app.add_subcommand("train", "train the estimator (and discriminator)"));
  to.add("source", tr.source, "source-domain annotations (JSON lines)")->required();
  to.add("target", tr.target, "target-domain annotations; labels are ignored");
  to.add("source-val", tr.source_val, "source validation annotations");
  to.add("target-val", tr.target_val, "target validation annotations");
  to.add("out", tr.out, "output directory")->required();
  to.add("lambda-adv", tr.cfg.lambda_adv, "adversarial weight; 0 trains the baseline");
  to.add("lr-psi", tr.cfg.lr_psi, "estimator learning rate");
  to.add("lr-theta", tr.cfg.lr_theta, "discriminator learning rate");
  to.add("beta1", tr.cfg.beta1, "Adam beta1");
  to.add("beta2", tr.cfg.beta2, "Adam beta2");
  to.add("adam-eps", tr.cfg.adam_eps, "Adam epsilon");
  to.add("epochs", tr.cfg.epochs, "passes over the source set");
  to.add("batch-size", tr.cfg.batch_size, "images per domain per step");
  to.add("max-steps", tr.cfg.max_steps, "stop after this many steps (0 = no cap)");
  to.add("sigma-ratio", tr.cfg.sigma_ratio, "Gaussian sigma as a fraction of the longer box side");
  to.add("eval-every", tr.cfg.eval_every, "evaluate and checkpoint every N steps (0 = off)");
  to.add("depth", tr.cfg.estimator.depth, "U-Net levels");
  to.add("base-channels", tr.cfg.estimator.base_channels, "channels of the first U-Net level");
  to.add("in-channels", tr.cfg.estimator.in_channels, "image channels");
  to.add("reduction", tr.reduction, "per-sample pixel reduction of the adversarial losses")
      ->check(CLI::IsMember({"sum", "mean"}));
  to.flag("disc-on-gt-maps", tr.cfg.disc_on_gt_maps, "train the discriminator on ground-truth source maps");
  to.add("log-every", tr.log_every, "print every Nth step to stdout (0 = quiet)");

  EvalArgs ev;
  Options eo(app.add_subcommand("eval", "count metrics of a trained estimator"));
  eo.add("ckpt", ev.ckpt, "estimator checkpoint")->required();
  eo.add("data", ev.data, "annotations to evaluate on")->required();
  eo.add("compare", ev.compare, "second annotation set for a domain-gap report");
  eo.add("csv", ev.csv, "also write the metrics as CSV");

  PredictArgs pr;
  Options po(app.add_subcommand("predict", "density map and count for one image"));
  po.add("ckpt", pr.ckpt, "estimator checkpoint")->required();
  po.add("image", pr.image, "binary PPM image")->required();
  po.add("out", pr.out, "output density map (DMAP)")->required();

  GradcheckArgs gc;
  Options go(app.add_subcommand("gradcheck", "finite-difference gradient verification"));
  go.add("scope", gc.scope, "ops, losses, psi or theta")->check(CLI::IsMember({"ops", "losses", "psi", "theta"}));
  go.add("num-seeds", gc.num_seeds, "run seeds seed, seed+1, ...");

  const std::vector<const Options*> commands{&so, &to, &eo, &po, &go};
  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = inject_config(args, global, commands);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  }

  const Options* chosen = nullptr;
  for (const Options* c : commands) {
    if (c->app()->parsed()) chosen = c;
  }
  print_resolved(chosen->app()->get_name(), global, *chosen);

  try {
    if (chosen == &so) return run_synth(g, synth);
    if (chosen == &to) return run_train(g, tr, global, to);
    if (chosen == &eo) return run_eval(ev);
    if (chosen == &po) return run_predict(pr);
    return run_gradcheck(g, gc);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
