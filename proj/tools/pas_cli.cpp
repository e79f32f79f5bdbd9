// Copyright 2026 The PAS Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// pas: command-line driver for ingest / train / search / attack / eval / attribute.
//
// Exit codes: 0 ok, 2 configuration or format error, 3 numerical failure (NaN/Inf),
// 1 anything else.

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "pas/pas.hpp"

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace pas;

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

// ---------------------------------------------------------------------------
// Content hashes and run manifests

/// SHA-1 of "blob <size>\0<bytes>", i.e. what `git hash-object` prints.
std::string git_blob_sha1(const std::string& bytes) {
  const std::string head = "blob " + std::to_string(bytes.size()) + '\0';
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
  EVP_DigestUpdate(ctx, head.data(), head.size());
  EVP_DigestUpdate(ctx, bytes.data(), bytes.size());
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int{md[i]};
  return os.str();
}

class Manifest {
 public:
  explicit Manifest(std::string command) { j_ = {{"tool", "pas"}, {"command", std::move(command)}}; }

  json& operator[](const char* key) { return j_[key]; }

  void input(const std::string& role, const fs::path& p) {
    if (fs::is_directory(p)) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(p))
        if (e.is_regular_file()) files.push_back(e.path());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) add("inputs", role, f);
    } else {
      add("inputs", role, p);
    }
  }
  void output(const std::string& role, const fs::path& p) { add("outputs", role, p); }
  void write(const fs::path& p) const { write_file_bytes(p, j_.dump(2) + "\n"); }

 private:
  void add(const char* section, const std::string& role, const fs::path& p) {
    j_[section].push_back({{"role", role}, {"path", p.string()}, {"sha1", git_blob_sha1(read_file_bytes(p))}});
  }
  json j_;
};

// ---------------------------------------------------------------------------
// Shared options and helpers

struct Globals {
  std::string config;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  bool force = false;
};

void ensure_writable(const fs::path& p, bool force) {
  if (fs::exists(p) && !force) throw ConfigError(p.string() + " already exists; pass --force to overwrite");
}

SplitDataset load_split(const std::string& data, std::uint64_t split_seed) {
  if (fs::is_directory(data)) return split_dataset(read_idx_dir(data), split_seed);
  return split_from_container(read_container(data));
}

const Dataset& pick_split(const SplitDataset& s, const std::string& name) {
  if (name == "train") return s.train;
  if (name == "validation") return s.validation;
  if (name == "test") return s.test;
  throw ConfigError("unknown split '" + name + "'");
}

PathConfig load_path_or_identity(const std::string& file, const Model<float>& m) {
  if (file.empty()) return identity_path_config(m.sites());
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open path file " + file);
  const auto parsed = read_path_config(in);
  check_path_matches(parsed, m.sites());
  return parsed.path;
}

/// Effective options of a subcommand (defaults included) plus the global ones, as JSON.
json options_json(const CLI::App* sub, const Globals& g) {
  json j = {{"seed", g.seed}, {"workers", g.workers}, {"force", g.force}};
  std::istringstream in(sub->config_to_str(true, false));
  for (std::string line; std::getline(in, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string value = line.substr(eq + 1);
    json v = json::parse(value, nullptr, false);
    if (v.is_discarded()) {  // CLI11 writes vectors as [a,b] without quotes
      v = value;
    }
    j[line.substr(0, eq)] = std::move(v);
  }
  return j;
}

// ---------------------------------------------------------------------------
// Config file: `key = value` lines, keys are long flag names. Flags given on the
// command line win over the file; the file wins over built-in defaults.

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

std::vector<std::string> apply_config_file(std::vector<std::string> args, const std::set<std::string>& flag_names) {
  std::string config;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) config = args[i].substr(9);
  }
  if (config.empty()) return args;
  auto given = [&](const std::string& key) {
    return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
      return a == "--" + key || a.rfind("--" + key + "=", 0) == 0;
    });
  };
  std::vector<std::string> extra;
  for (const auto& [key, value] : read_config_file(config)) {
    if (key == "config" || given(key)) continue;
    if (flag_names.count(key)) {
      if (value == "true" || value == "1") extra.push_back("--" + key);
      else if (value != "false" && value != "0") throw ConfigError("config key '" + key + "' expects true or false");
      continue;
    }
    extra.push_back("--" + key);
    std::istringstream vs(value);
    for (std::string tok; vs >> tok;) extra.push_back(tok);
  }
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

// ---------------------------------------------------------------------------
// Subcommands

struct IngestOpts {
  std::string data, out;
  std::uint64_t split_seed = 0;
  double train = 0.8, validation = 0.1, test = 0.1;
  std::size_t limit = 0;
};

void cmd_ingest(const IngestOpts& o, const Globals& g, const CLI::App* sub) {
  ensure_writable(o.out, g.force);
  Dataset all = read_idx_dir(o.data);
  if (o.limit > 0 && o.limit < all.size()) {
    std::vector<std::size_t> idx(all.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 rng(o.split_seed + 1);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(o.limit);
    all = all.subset(idx);
  }
  const auto split = split_dataset(all, o.split_seed, {o.train, o.validation, o.test});
  write_container(o.out, split_container(split, o.split_seed));
  Manifest m("ingest");
  m["options"] = options_json(sub, g);
  m["sizes"] = {{"train", split.train.size()}, {"validation", split.validation.size()}, {"test", split.test.size()}};
  m.input("data", o.data);
  m.output("dataset", o.out);
  m.write(o.out + ".manifest.json");
  std::cout << "ingested " << all.size() << " examples: train " << split.train.size() << ", validation "
            << split.validation.size() << ", test " << split.test.size() << "\n";
}

struct TrainOpts {
  std::string arch = "plain-cnn", data, out;
  std::vector<std::size_t> widths{16, 32, 64};
  std::size_t blocks = 1;
  std::uint64_t split_seed = 0;
  TrainConfig cfg;
};

void cmd_train(const TrainOpts& o, const Globals& g, const CLI::App* sub) {
  ensure_writable(o.out, g.force);
  ArchitectureSpec spec;
  spec.name = o.arch;
  spec.widths = o.widths;
  spec.residual_blocks = o.arch == "mini-resnet" ? o.blocks : 0;
  const auto split = load_split(o.data, o.split_seed);
  spec.channels = split.train.images.dim(1);
  spec.height = split.train.images.dim(2);
  spec.width = split.train.images.dim(3);
  TrainConfig cfg = o.cfg;
  cfg.seed = g.seed;
  auto model = build_model<float>(spec, g.seed);
  auto metrics = train(model, split.train, cfg, &split.validation, [](std::size_t e, double loss, double acc) {
    std::cerr << "epoch " << e + 1 << " loss " << loss << " validation accuracy " << acc << "\n";
  });
  const double test_acc = split.test.size() ? accuracy(model, split.test) : -1.0;
  save_checkpoint(model, o.out);
  Manifest m("train");
  m["options"] = options_json(sub, g);
  m["architecture"] = spec;
  m["metrics"] = {{"epoch_loss", metrics.epoch_loss},
                  {"validation_accuracy", metrics.heldout_accuracy},
                  {"test_accuracy", test_acc}};
  m.input("data", o.data);
  m.output("checkpoint", o.out);
  m.write(o.out + ".manifest.json");
  std::cout << "test accuracy " << test_acc << "\n";
}

struct SearchOpts {
  std::string surrogate, validation, data, out, sampler = "tpe";
  std::uint64_t split_seed = 0;
  bool no_hyperband = false;
  SearchConfig cfg;
};

void cmd_search(const SearchOpts& o, const Globals& g, const CLI::App* sub) {
  const fs::path dir = o.out;
  ensure_writable(dir / "history.csv", g.force);
  const auto surrogate = load_checkpoint(o.surrogate);
  const auto validation = load_checkpoint(o.validation);
  const auto split = load_split(o.data, o.split_seed);
  SearchConfig cfg = o.cfg;
  cfg.seed = g.seed;
  cfg.sampler = parse_sampler(o.sampler);
  cfg.hyperband.enabled = !o.no_hyperband;
  cfg.eval.workers = g.workers;
  const Dataset examples = validation_subset(split.validation, cfg.eval_n, g.seed);

  fs::create_directories(dir / "paths");
  std::ofstream history(dir / "history.csv");
  history << "trial_id,resource,score,status,bracket,path_file\n";
  auto result = run_search(surrogate, validation, examples, cfg, [&](const Trial& t) {
    char name[32];
    std::snprintf(name, sizeof(name), "trial_%06zu.path", t.id);
    write_file_bytes(dir / "paths" / name, path_config_text(surrogate.sites(), t.path));
    history << t.id << ',' << t.resource << ',' << format_shortest(t.score) << ',' << to_string(t.status) << ','
            << t.bracket << ",paths/" << name << '\n';
    if ((t.id + 1) % 50 == 0) std::cerr << "trial " << t.id + 1 << "/" << cfg.trials << "\n";
  });
  history.close();

  write_file_bytes(dir / "best.path", path_config_text(surrogate.sites(), result.best));
  std::ostringstream window;
  window << "trial_id,score,chi_square\n";
  const auto& best = result.best_record();
  for (auto id : result.window)
    window << id << ',' << format_shortest(result.history[id].score) << ','
           << format_shortest(chi_square_stat(cfg.eval_n, best.score, result.history[id].score)) << '\n';
  write_file_bytes(dir / "window.csv", window.str());
  std::ostringstream depth;
  write_gamma_depth_csv(depth, gamma_depth_report(surrogate, result.best));
  write_file_bytes(dir / "gamma_depth.csv", depth.str());

  Manifest m("search");
  m["options"] = options_json(sub, g);
  m["best"] = {{"trial_id", best.id}, {"score", best.score}, {"path_hash", path_hash(surrogate.sites(), result.best)}};
  m.input("surrogate", o.surrogate);
  m.input("validation", o.validation);
  m.input("data", o.data);
  for (const char* f : {"history.csv", "best.path", "window.csv", "gamma_depth.csv"}) m.output(f, dir / f);
  m.write(dir / "manifest.json");
  std::cout << "best trial " << best.id << " score " << best.score << " (" << result.window.size()
            << " trials within the significance window)\n";
}

struct AttackOpts {
  std::string surrogate, path, data, split = "test", out;
  std::uint64_t split_seed = 0;
  std::size_t count = 0;
  std::optional<double> step_size;
  AttackConfig cfg;
};

void cmd_attack(const AttackOpts& o, const Globals& g, const CLI::App* sub) {
  ensure_writable(o.out, g.force);
  const auto surrogate = load_checkpoint(o.surrogate);
  const PathConfig path = load_path_or_identity(o.path, surrogate);
  const auto split = load_split(o.data, o.split_seed);
  Dataset d = pick_split(split, o.split);
  if (o.count > 0) d = d.head(o.count);
  AttackConfig cfg = o.cfg;
  cfg.step_size = o.step_size;
  cfg.seed = g.seed;
  cfg.workers = g.workers;
  auto batch = ifgsm(surrogate, path, d.images, d.labels, cfg);
  const double white_box = attack_success_rate(surrogate, batch, "surrogate");
  const std::string hash = path_hash(surrogate.sites(), path);
  auto c = batch_container(batch, cfg, hash);
  c.header["constraint_violations"] = batch.constraint_violations;
  c.header["max_linf"] = batch.max_linf;
  write_container(o.out, c);
  Manifest m("attack");
  m["options"] = options_json(sub, g);
  m["attack"] = cfg;
  m["path_hash"] = hash;
  m["white_box_asr"] = white_box;
  m["constraint_violations"] = batch.constraint_violations;
  m.input("surrogate", o.surrogate);
  if (!o.path.empty()) m.input("path", o.path);
  m.input("data", o.data);
  m.output("batch", o.out);
  m.write(o.out + ".manifest.json");
  std::cout << d.size() << " examples, white-box ASR " << white_box << ", max |x_adv - x| " << batch.max_linf
            << ", constraint violations " << batch.constraint_violations << "\n";
  if (batch.constraint_violations) throw Error("attack produced constraint violations");
}

struct EvalOpts {
  std::vector<std::string> batches, victims;
  std::string out;
  bool only_correct = false;
};

void cmd_eval(const EvalOpts& o, const Globals& g, const CLI::App* sub) {
  ensure_writable(o.out, g.force);
  std::vector<Model<float>> models;
  for (const auto& v : o.victims) models.push_back(load_checkpoint(v));
  std::vector<Victim<float>> victims;
  for (std::size_t i = 0; i < models.size(); ++i) victims.push_back({fs::path(o.victims[i]).stem().string(), &models[i]});
  TransferMatrix tm;
  for (const auto& v : victims) tm.columns.push_back(v.name);
  for (const auto& b : o.batches) {
    auto batch = batch_from_container(read_container(b));
    for (const auto& v : victims) {
      const auto& s = v.model->spec();
      if (batch.x.dim(1) != s.channels || batch.x.dim(2) != s.height || batch.x.dim(3) != s.width)
        throw ConfigError("victim '" + v.name + "' input shape does not match batch " + b);
    }
    tm.rows.push_back(fs::path(b).stem().string());
    tm.cells.push_back(score_batch<float>(batch, victims, AsrOptions{o.only_correct}));
  }
  std::ostringstream csv;
  write_transfer_csv(csv, tm);
  write_file_bytes(o.out, csv.str());
  Manifest m("eval");
  m["options"] = options_json(sub, g);
  for (const auto& b : o.batches) m.input("batch", b);
  for (const auto& v : o.victims) m.input("victim", v);
  m.output("matrix", o.out);
  m.write(o.out + ".manifest.json");
  std::cout << csv.str();
}

struct AttributeOpts {
  std::string model, path, data, split = "test", out;
  std::uint64_t split_seed = 0;
  std::size_t index = 0;
  int target = -1;
  std::size_t steps = 64;
};

void cmd_attribute(const AttributeOpts& o, const Globals& g, const CLI::App* sub) {
  ensure_writable(o.out, g.force);
  const auto model = load_checkpoint(o.model);
  const PathConfig path = load_path_or_identity(o.path, model);
  const auto split = load_split(o.data, o.split_seed);
  const Dataset& d = pick_split(split, o.split);
  if (o.index >= d.size()) throw ConfigError("index " + std::to_string(o.index) + " outside the " + o.split + " split");
  const std::vector<std::size_t> one{o.index};
  const Dataset img = d.subset(one);
  const std::size_t target = o.target >= 0 ? static_cast<std::size_t>(o.target) : static_cast<std::size_t>(img.labels[0]);
  const auto attr = integrated_gradients(model, path, img.images, target, {o.steps});
  fs::path pgm = o.out;
  export_heatmap(attr, pgm);
  double sum = 0;
  for (float v : attr.values()) sum += v;
  const double fx = forward(model, img.images).logits[target];
  const double f0 = forward(model, Tensor<float>(img.images.shape())).logits[target];
  Manifest m("attribute");
  m["options"] = options_json(sub, g);
  m["target"] = target;
  m["attribution_sum"] = sum;
  m["logit_delta"] = fx - f0;
  m.input("model", o.model);
  if (!o.path.empty()) m.input("path", o.path);
  m.input("data", o.data);
  m.output("heatmap", pgm);
  m.output("values", fs::path(pgm).replace_extension(".csv"));
  m.write(o.out + ".manifest.json");
  std::cout << "target " << target << ": sum of attributions " << sum << ", f(x) - f(0) " << fx - f0 << "\n";
}

struct GammaDepthOpts {
  std::string model, path, out;
};

void cmd_gamma_depth(const GammaDepthOpts& o, const Globals& g) {
  ensure_writable(o.out, g.force);
  const auto model = load_checkpoint(o.model);
  std::ostringstream csv;
  write_gamma_depth_csv(csv, gamma_depth_report(model, load_path_or_identity(o.path, model)));
  write_file_bytes(o.out, csv.str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gradient-path search for transferable adversarial examples"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "key = value file; command-line flags take precedence");
  app.add_option("--seed", g.seed, "seed for initialization, sampling and attack randomness")->capture_default_str();
  app.add_option("--workers", g.workers, "worker threads for attack crafting and trial evaluation")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_flag("--force", g.force, "overwrite existing outputs");

  IngestOpts io;
  auto* ingest = app.add_subcommand("ingest", "read IDX files and write a seeded train/validation/test split");
  ingest->add_option("--data", io.data, "directory with *images-idx3-ubyte[.gz] and label files")->required();
  ingest->add_option("--out", io.out, "dataset container to write")->required();
  ingest->add_option("--split-seed", io.split_seed)->capture_default_str();
  ingest->add_option("--train-frac", io.train)->capture_default_str();
  ingest->add_option("--val-frac", io.validation)->capture_default_str();
  ingest->add_option("--test-frac", io.test)->capture_default_str();
  ingest->add_option("--limit", io.limit, "keep a seeded random subset of this many examples (0 = all)");

  TrainOpts to;
  auto* trn = app.add_subcommand("train", "train a desk model");
  trn->add_option("--arch", to.arch)->check(CLI::IsMember({"plain-cnn", "mini-resnet"}))->required();
  trn->add_option("--data", to.data, "IDX directory or dataset container")->required();
  trn->add_option("--out", to.out, "checkpoint to write")->required();
  trn->add_option("--widths", to.widths, "per-stage channel widths")->delimiter(',')->capture_default_str();
  trn->add_option("--blocks", to.blocks, "residual blocks per stage (mini-resnet)")->capture_default_str();
  trn->add_option("--epochs", to.cfg.epochs)->capture_default_str();
  trn->add_option("--batch-size", to.cfg.batch_size)->capture_default_str();
  trn->add_option("--lr", to.cfg.learning_rate)->capture_default_str();
  trn->add_option("--momentum", to.cfg.momentum)->capture_default_str();
  trn->add_option("--weight-decay", to.cfg.weight_decay)->capture_default_str();
  trn->add_option("--split-seed", to.split_seed)->capture_default_str();

  SearchOpts so;
  auto* srch = app.add_subcommand("search", "search a backpropagation path");
  srch->add_option("--surrogate", so.surrogate)->required();
  srch->add_option("--validation", so.validation)->required();
  srch->add_option("--data", so.data, "IDX directory or dataset container (validation split is used)")->required();
  srch->add_option("--out", so.out, "output directory")->required();
  srch->add_option("--trials", so.cfg.trials)->capture_default_str();
  srch->add_option("--eval-n", so.cfg.eval_n)->capture_default_str();
  srch->add_option("--eps", so.cfg.epsilon)->capture_default_str();
  srch->add_option("--sampler", so.sampler)->check(CLI::IsMember({"tpe", "random"}))->capture_default_str();
  srch->add_flag("--no-hyperband", so.no_hyperband, "score every trial on all eval-n examples");
  srch->add_option("--reduction", so.cfg.hyperband.reduction)->capture_default_str();
  srch->add_option("--min-resource", so.cfg.hyperband.min_resource)->capture_default_str();
  srch->add_option("--startup-trials", so.cfg.tpe.startup_trials)->capture_default_str();
  srch->add_option("--significance", so.cfg.significance_level)->capture_default_str();
  srch->add_option("--chunk-size", so.cfg.eval.chunk_size)->capture_default_str();
  srch->add_option("--split-seed", so.split_seed)->capture_default_str();

  AttackOpts ao;
  auto* atk = app.add_subcommand("attack", "craft adversarial examples through a path");
  atk->add_option("--surrogate", ao.surrogate)->required();
  atk->add_option("--path", ao.path, "path file (default: ordinary backpropagation)");
  atk->add_option("--data", ao.data)->required();
  atk->add_option("--split", ao.split)->check(CLI::IsMember({"train", "validation", "test"}))->capture_default_str();
  atk->add_option("--count", ao.count, "first N examples of the split (0 = all)");
  atk->add_option("--out", ao.out)->required();
  atk->add_option("--eps", ao.cfg.epsilon)->capture_default_str();
  atk->add_option("--steps", ao.cfg.steps)->capture_default_str();
  atk->add_option("--step-size", ao.step_size, "default eps / steps");
  atk->add_option("--mi", ao.cfg.momentum, "momentum decay (0 disables; 1.0 is the usual setting)")->capture_default_str();
  atk->add_option("--di", ao.cfg.di_probability, "input-diversity probability (0 disables; 0.5 typical)")
      ->capture_default_str();
  atk->add_option("--di-min-scale", ao.cfg.di_min_scale)->capture_default_str();
  atk->add_option("--chunk-size", ao.cfg.chunk_size)->capture_default_str();
  atk->add_option("--split-seed", ao.split_seed)->capture_default_str();

  EvalOpts eo;
  auto* ev = app.add_subcommand("eval", "score adversarial batches against victim models");
  ev->add_option("--batch", eo.batches)->required();
  ev->add_option("--victims", eo.victims)->required();
  ev->add_option("--out", eo.out)->required();
  ev->add_flag("--only-correct", eo.only_correct, "count only examples the victim gets right when clean");

  AttributeOpts ro;
  auto* attr = app.add_subcommand("attribute", "integrated-gradients heatmap for one image");
  attr->add_option("--model", ro.model)->required();
  attr->add_option("--path", ro.path, "path file (default: ordinary backpropagation)");
  attr->add_option("--data", ro.data)->required();
  attr->add_option("--split", ro.split)->check(CLI::IsMember({"train", "validation", "test"}))->capture_default_str();
  attr->add_option("--index", ro.index)->required();
  attr->add_option("--target", ro.target, "class to attribute (default: the label)");
  attr->add_option("--steps", ro.steps)->capture_default_str();
  attr->add_option("--out", ro.out, "PGM file; a CSV of raw values is written beside it")->required();
  attr->add_option("--split-seed", ro.split_seed)->capture_default_str();

  GammaDepthOpts go;
  auto* gd = app.add_subcommand("gamma-depth", "CSV of gamma against site depth");
  gd->add_option("--model", go.model)->required();
  gd->add_option("--path", go.path)->required();
  gd->add_option("--out", go.out)->required();

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = apply_config_file(std::move(args), {"force", "no-hyperband", "only-correct"});
    std::reverse(args.begin(), args.end());  // CLI11 consumes a reversed vector
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (*ingest) cmd_ingest(io, g, ingest);
    if (*trn) cmd_train(to, g, trn);
    if (*srch) cmd_search(so, g, srch);
    if (*atk) cmd_attack(ao, g, atk);
    if (*ev) cmd_eval(eo, g, ev);
    if (*attr) cmd_attribute(ro, g, attr);
    if (*gd) cmd_gamma_depth(go, g);
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InvalidArgument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kExitConfig;
  } catch (const UnsupportedConfiguration& e) {
    std::cerr << "unsupported configuration: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
