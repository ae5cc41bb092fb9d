#include "advlab/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "advlab/rng.hpp"

namespace advlab {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& why) {
  throw std::invalid_argument("config: " + path + ": " + why);
}

void require_keys(const json& j, const std::string& path,
                  const std::set<std::string>& allowed) {
  if (!j.is_object()) fail(path, "expected an object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!allowed.count(key)) fail(path + "." + key, "unknown key");
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

DatasetSource parse_dataset_source(const json& j, const std::string& path) {
  require_keys(j, path, {"seed", "n", "classes", "dims", "path", "idx_images", "idx_labels"});
  DatasetSource src;
  const bool has_file = j.contains("path");
  const bool has_idx = j.contains("idx_images") || j.contains("idx_labels");
  const bool has_gen = j.contains("n") || j.contains("classes") || j.contains("dims");
  if ((has_file ? 1 : 0) + (has_idx ? 1 : 0) + (has_gen ? 1 : 0) != 1) {
    fail(path, "set exactly one of: generator fields (n/classes/dims), path, idx files");
  }
  if (has_file) {
    src.path = j.at("path").get<std::string>();
  } else if (has_idx) {
    if (!j.contains("idx_images") || !j.contains("idx_labels")) {
      fail(path, "idx import needs both idx_images and idx_labels");
    }
    src.idx_images = j.at("idx_images").get<std::string>();
    src.idx_labels = j.at("idx_labels").get<std::string>();
  } else {
    DatasetConfig cfg;
    cfg.seed = get_or<std::uint64_t>(j, "seed", 0);
    cfg.n = j.at("n").get<int>();
    cfg.classes = j.at("classes").get<int>();
    cfg.dims = j.at("dims").get<std::vector<int>>();
    if (cfg.dims.size() != 3) fail(path + ".dims", "expected [C, H, W]");
    src.generate = cfg;
  }
  return src;
}

json dataset_source_to_json(const DatasetSource& src) {
  json j = json::object();
  if (src.generate) {
    j["seed"] = src.generate->seed;
    j["n"] = src.generate->n;
    j["classes"] = src.generate->classes;
    j["dims"] = src.generate->dims;
  } else if (src.path) {
    j["path"] = *src.path;
  } else {
    j["idx_images"] = *src.idx_images;
    j["idx_labels"] = *src.idx_labels;
  }
  return j;
}

ModelConfig parse_model(const json& j, const std::string& path) {
  require_keys(j, path,
               {"name", "arch", "layers", "seed", "training", "epochs", "lr", "batch",
                "adv_epsilon"});
  ModelConfig m;
  m.name = j.at("name").get<std::string>();
  if (m.name.empty() || m.name.find('+') != std::string::npos ||
      m.name.find(',') != std::string::npos) {
    fail(path + ".name", "model names must be nonempty and free of '+' and ','");
  }
  const bool has_arch = j.contains("arch");
  const bool has_layers = j.contains("layers");
  if (has_arch == has_layers) fail(path, "set exactly one of arch / layers");
  if (has_arch) m.arch = j.at("arch").get<std::string>();
  if (has_layers) {
    for (std::size_t i = 0; i < j.at("layers").size(); ++i) {
      const json& lj = j.at("layers")[i];
      const std::string lpath = path + ".layers[" + std::to_string(i) + "]";
      require_keys(lj, lpath, {"kind", "in_features", "out_features", "out_channels",
                               "kernel_size"});
      LayerSpec l;
      l.kind = layer_kind_from_name(lj.at("kind").get<std::string>());
      if (l.kind == LayerKind::dense) {
        l.in_features = lj.at("in_features").get<int>();
        l.out_features = lj.at("out_features").get<int>();
      } else if (l.kind == LayerKind::conv2d) {
        l.out_channels = lj.at("out_channels").get<int>();
        l.kernel_size = lj.at("kernel_size").get<int>();
      }
      m.layers.push_back(l);
    }
  }
  m.seed = get_or<std::uint64_t>(j, "seed", 0);
  m.training = get_or<std::string>(j, "training", "standard");
  if (m.training != "standard" && m.training != "adversarial") {
    fail(path + ".training", "expected standard or adversarial");
  }
  m.epochs = get_or<int>(j, "epochs", 18);
  m.lr = get_or<double>(j, "lr", 0.15);
  m.batch = get_or<int>(j, "batch", 32);
  m.adv_epsilon = get_or<double>(j, "adv_epsilon", 8.0 / 255.0);
  if (m.epochs < 1 || m.batch < 1 || !(m.lr > 0.0)) fail(path, "bad training options");
  return m;
}

json model_to_json(const ModelConfig& m) {
  json j;
  j["name"] = m.name;
  if (!m.arch.empty()) {
    j["arch"] = m.arch;
  } else {
    json layers = json::array();
    for (const LayerSpec& l : m.layers) {
      json lj;
      lj["kind"] = layer_kind_name(l.kind);
      if (l.kind == LayerKind::dense) {
        lj["in_features"] = l.in_features;
        lj["out_features"] = l.out_features;
      } else if (l.kind == LayerKind::conv2d) {
        lj["out_channels"] = l.out_channels;
        lj["kernel_size"] = l.kernel_size;
      }
      layers.push_back(std::move(lj));
    }
    j["layers"] = std::move(layers);
  }
  j["seed"] = m.seed;
  j["training"] = m.training;
  j["epochs"] = m.epochs;
  j["lr"] = m.lr;
  j["batch"] = m.batch;
  j["adv_epsilon"] = m.adv_epsilon;
  return j;
}

AttackConfig parse_attack(const json& j, const std::string& path) {
  require_keys(j, path, {"optimizer", "epsilon", "epsilon_255", "steps", "alpha", "mu", "loss",
                         "seed", "gi", "vt", "transforms", "ct", "name"});
  AttackConfig a;
  a.optimizer = optimizer_from_name(get_or<std::string>(j, "optimizer", "mifgsm"));
  if (j.contains("epsilon") && j.contains("epsilon_255")) {
    fail(path, "set at most one of epsilon / epsilon_255");
  }
  if (j.contains("epsilon")) {
    a.epsilon = j.at("epsilon").get<double>();
  } else if (j.contains("epsilon_255")) {
    a.epsilon = j.at("epsilon_255").get<double>() / 255.0;
  }
  a.steps = get_or<int>(j, "steps", 10);
  a.alpha = get_or<double>(j, "alpha", 0.0);
  a.mu = get_or<double>(j, "mu", 1.0);
  a.loss = loss_kind_from_name(get_or<std::string>(j, "loss", "cross_entropy"));
  a.seed = get_or<std::uint64_t>(j, "seed", 0);

  if (j.contains("gi")) {
    const json& g = j.at("gi");
    require_keys(g, path + ".gi", {"pre_steps", "search_factor"});
    GiConfig gi;
    gi.pre_steps = get_or<int>(g, "pre_steps", 5);
    gi.search_factor = get_or<double>(g, "search_factor", 10.0);
    a.gi = gi;
  }
  if (j.contains("vt")) {
    const json& v = j.at("vt");
    require_keys(v, path + ".vt", {"n_samples", "beta"});
    VtConfig vt;
    vt.n_samples = get_or<int>(v, "n_samples", 20);
    vt.beta = get_or<double>(v, "beta", 1.5);
    a.vt = vt;
  }
  if (j.contains("ct") && j.contains("transforms")) {
    fail(path, "set at most one of ct / transforms");
  }
  if (j.contains("ct")) {
    if (!j.at("ct").is_boolean()) fail(path + ".ct", "expected a boolean");
    if (j.at("ct").get<bool>()) {
      a.transforms.dim = DimConfig{};
      a.transforms.tim = TimConfig{};
      a.transforms.sim = SimConfig{};
    }
  }
  if (j.contains("transforms")) {
    const json& t = j.at("transforms");
    require_keys(t, path + ".transforms", {"dim", "tim", "sim"});
    if (t.contains("dim")) {
      require_keys(t.at("dim"), path + ".transforms.dim", {"probability", "max_scale"});
      DimConfig d;
      d.probability = get_or<double>(t.at("dim"), "probability", 0.5);
      d.max_scale = get_or<double>(t.at("dim"), "max_scale", 330.0 / 299.0);
      a.transforms.dim = d;
    }
    if (t.contains("tim")) {
      require_keys(t.at("tim"), path + ".transforms.tim", {"kernel_size", "sigma"});
      TimConfig k;
      k.kernel_size = get_or<int>(t.at("tim"), "kernel_size", 7);
      k.sigma = get_or<double>(t.at("tim"), "sigma", 0.0);
      a.transforms.tim = k;
    }
    if (t.contains("sim")) {
      require_keys(t.at("sim"), path + ".transforms.sim", {"copies"});
      SimConfig s;
      s.copies = get_or<int>(t.at("sim"), "copies", 5);
      a.transforms.sim = s;
    }
  }
  try {
    a.validate();
  } catch (const std::exception& e) {
    fail(path, e.what());
  }
  return a;
}

json attack_to_json(const AttackConfig& a) {
  json j;
  j["name"] = a.name();  // informational; derived again on parse
  j["optimizer"] = optimizer_name(a.optimizer);
  j["epsilon"] = a.epsilon;
  j["steps"] = a.steps;
  j["alpha"] = a.alpha;
  j["mu"] = a.mu;
  j["loss"] = loss_kind_name(a.loss);
  j["seed"] = a.seed;
  if (a.gi) j["gi"] = {{"pre_steps", a.gi->pre_steps}, {"search_factor", a.gi->search_factor}};
  if (a.vt) j["vt"] = {{"n_samples", a.vt->n_samples}, {"beta", a.vt->beta}};
  if (a.transforms.any()) {
    json t = json::object();
    if (a.transforms.dim) {
      t["dim"] = {{"probability", a.transforms.dim->probability},
                  {"max_scale", a.transforms.dim->max_scale}};
    }
    if (a.transforms.tim) {
      t["tim"] = {{"kernel_size", a.transforms.tim->kernel_size},
                  {"sigma", a.transforms.tim->sigma}};
    }
    if (a.transforms.sim) t["sim"] = {{"copies", a.transforms.sim->copies}};
    j["transforms"] = std::move(t);
  }
  return j;
}

CheckConfig parse_check(const json& j, const std::string& path) {
  require_keys(j, path, {"attack", "baseline", "surrogate", "min_gain_points",
                         "min_consistency"});
  CheckConfig c;
  c.attack = j.at("attack").get<std::string>();
  c.baseline = j.at("baseline").get<std::string>();
  c.surrogate = get_or<std::string>(j, "surrogate", "");
  c.min_gain_points = get_or<double>(j, "min_gain_points", 2.0);
  c.min_consistency = get_or<double>(j, "min_consistency", 2.0 / 3.0);
  return c;
}

EvaluationConfig parse_evaluation(const json& j, const std::string& path) {
  require_keys(j, path,
               {"dataset", "surrogates", "targets", "attack_seeds", "max_images",
                "defense_bits", "checks", "ablation", "diagnose_max_images"});
  EvaluationConfig e;
  if (j.contains("dataset")) e.dataset = parse_dataset_source(j.at("dataset"), path + ".dataset");
  e.surrogates = get_or<std::vector<std::string>>(j, "surrogates", {});
  e.targets = get_or<std::vector<std::string>>(j, "targets", {});
  e.attack_seeds = get_or<std::vector<std::uint64_t>>(j, "attack_seeds", {0});
  if (e.attack_seeds.empty()) fail(path + ".attack_seeds", "need at least one seed");
  e.max_images = get_or<int>(j, "max_images", 0);
  e.defense_bits = get_or<std::vector<int>>(j, "defense_bits", {});
  for (int bits : e.defense_bits) {
    if (bits < 1 || bits > 8) fail(path + ".defense_bits", "bits must be in [1, 8]");
  }
  if (j.contains("checks")) {
    for (std::size_t i = 0; i < j.at("checks").size(); ++i) {
      e.checks.push_back(
          parse_check(j.at("checks")[i], path + ".checks[" + std::to_string(i) + "]"));
    }
  }
  if (j.contains("ablation")) {
    const json& a = j.at("ablation");
    require_keys(a, path + ".ablation", {"param", "grid"});
    AblationConfig ab;
    ab.param = a.at("param").get<std::string>();
    ab.grid = a.at("grid").get<std::vector<double>>();
    if (ab.grid.empty()) fail(path + ".ablation.grid", "empty grid");
    e.ablation = ab;
  }
  e.diagnose_max_images = get_or<int>(j, "diagnose_max_images", 32);
  return e;
}

}  // namespace

Dataset DatasetSource::realize() const {
  if (generate) return generate_dataset(*generate);
  if (path) return load_dataset(*path);
  if (idx_images && idx_labels) return load_idx(*idx_images, *idx_labels);
  throw std::logic_error("DatasetSource: no variant set");
}

ModelSpec model_spec_from_config(const ModelConfig& cfg, const std::vector<int>& dims,
                                 int classes) {
  if (dims.size() != 3) throw std::invalid_argument("model_spec_from_config: dims must be (C,H,W)");
  const int c = dims[0], h = dims[1], w = dims[2];
  ModelSpec spec;
  spec.input_shape = dims;
  spec.num_classes = classes;

  if (!cfg.layers.empty()) {
    spec.layers = cfg.layers;
    return spec;
  }

  const int flat = c * h * w;
  if (cfg.arch == "mlp") {
    spec.layers = {LayerSpec::flatten(), LayerSpec::dense(flat, 128), LayerSpec::relu(),
                   LayerSpec::dense(128, classes)};
  } else if (cfg.arch == "cnn_small") {
    spec.layers = {LayerSpec::conv(8, 3),  LayerSpec::relu(), LayerSpec::avgpool2(),
                   LayerSpec::conv(16, 3), LayerSpec::relu(), LayerSpec::avgpool2(),
                   LayerSpec::flatten(),   LayerSpec::dense(16 * (h / 4) * (w / 4), classes)};
  } else if (cfg.arch == "cnn_wide") {
    spec.layers = {LayerSpec::conv(12, 5), LayerSpec::relu(),
                   LayerSpec::avgpool2(),  LayerSpec::flatten(),
                   LayerSpec::dense(12 * (h / 2) * (w / 2), 48), LayerSpec::relu(),
                   LayerSpec::dense(48, classes)};
  } else if (cfg.arch == "cnn_coarse") {
    spec.layers = {LayerSpec::conv(6, 7),  LayerSpec::relu(), LayerSpec::avgpool2(),
                   LayerSpec::conv(12, 5), LayerSpec::relu(), LayerSpec::avgpool2(),
                   LayerSpec::flatten(),   LayerSpec::dense(12 * (h / 4) * (w / 4), classes)};
  } else {
    throw std::invalid_argument("unknown model arch: " + cfg.arch);
  }
  return spec;
}

RunConfig parse_run_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: malformed JSON: ") + e.what());
  }
  require_keys(j, "$", {"dataset", "models", "attacks", "evaluation", "output"});

  RunConfig cfg;
  if (!j.contains("dataset")) fail("$", "missing dataset section");
  cfg.dataset = parse_dataset_source(j.at("dataset"), "$.dataset");

  if (j.contains("models")) {
    std::set<std::string> names;
    for (std::size_t i = 0; i < j.at("models").size(); ++i) {
      ModelConfig m = parse_model(j.at("models")[i], "$.models[" + std::to_string(i) + "]");
      if (!names.insert(m.name).second) {
        fail("$.models[" + std::to_string(i) + "].name", "duplicate model name " + m.name);
      }
      cfg.models.push_back(std::move(m));
    }
  }
  if (j.contains("attacks")) {
    for (std::size_t i = 0; i < j.at("attacks").size(); ++i) {
      cfg.attacks.push_back(
          parse_attack(j.at("attacks")[i], "$.attacks[" + std::to_string(i) + "]"));
    }
  }
  if (j.contains("evaluation")) {
    cfg.evaluation = parse_evaluation(j.at("evaluation"), "$.evaluation");
  }
  if (j.contains("output")) {
    require_keys(j.at("output"), "$.output", {"dir"});
    cfg.output_dir = get_or<std::string>(j.at("output"), "dir", "runs");
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config_text(ss.str());
}

std::string resolved_config_json(const RunConfig& cfg) {
  json j;
  j["dataset"] = dataset_source_to_json(cfg.dataset);
  json models = json::array();
  for (const ModelConfig& m : cfg.models) models.push_back(model_to_json(m));
  j["models"] = std::move(models);
  json attacks = json::array();
  for (const AttackConfig& a : cfg.attacks) attacks.push_back(attack_to_json(a));
  j["attacks"] = std::move(attacks);

  json e;
  if (cfg.evaluation.dataset) e["dataset"] = dataset_source_to_json(*cfg.evaluation.dataset);
  e["surrogates"] = cfg.evaluation.surrogates;
  e["targets"] = cfg.evaluation.targets;
  e["attack_seeds"] = cfg.evaluation.attack_seeds;
  e["max_images"] = cfg.evaluation.max_images;
  e["defense_bits"] = cfg.evaluation.defense_bits;
  json checks = json::array();
  for (const CheckConfig& c : cfg.evaluation.checks) {
    checks.push_back({{"attack", c.attack},
                      {"baseline", c.baseline},
                      {"surrogate", c.surrogate},
                      {"min_gain_points", c.min_gain_points},
                      {"min_consistency", c.min_consistency}});
  }
  e["checks"] = std::move(checks);
  if (cfg.evaluation.ablation) {
    e["ablation"] = {{"param", cfg.evaluation.ablation->param},
                     {"grid", cfg.evaluation.ablation->grid}};
  }
  e["diagnose_max_images"] = cfg.evaluation.diagnose_max_images;
  j["evaluation"] = std::move(e);

  j["output"] = {{"dir", cfg.output_dir}};
  return j.dump(2) + "\n";
}

std::uint64_t config_hash(const RunConfig& cfg) {
  const std::string text = resolved_config_json(cfg);
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void save_archive(const AttackArchive& archive, const std::string& path) {
  json j;
  j["version"] = 1;
  j["surrogate"] = archive.surrogate;
  j["attack"] = attack_to_json(archive.attack);
  json entries = json::array();
  for (const ArchiveEntry& e : archive.entries) {
    json ej;
    ej["index"] = e.index;
    ej["label"] = e.label;
    ej["shape"] = e.x_adv.shape();
    ej["data"] = std::vector<double>(e.x_adv.data(), e.x_adv.data() + e.x_adv.size());
    ej["losses"] = e.losses;
    ej["degenerate"] = e.degenerate;
    entries.push_back(std::move(ej));
  }
  j["entries"] = std::move(entries);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_archive: cannot open " + path);
  out << j.dump() << '\n';
}

AttackArchive load_archive(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_archive: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("load_archive: malformed file " + path + ": " + e.what());
  }
  if (!j.contains("version") || j["version"].get<int>() != 1) {
    throw std::runtime_error("load_archive: unsupported version in " + path);
  }
  AttackArchive archive;
  archive.surrogate = j.at("surrogate").get<std::string>();
  archive.attack = parse_attack(j.at("attack"), path + ":attack");
  for (const json& ej : j.at("entries")) {
    ArchiveEntry e;
    e.index = ej.at("index").get<std::uint64_t>();
    e.label = ej.at("label").get<int>();
    e.x_adv = Tensor(ej.at("shape").get<std::vector<int>>(),
                     ej.at("data").get<std::vector<double>>());
    e.losses = ej.at("losses").get<std::vector<double>>();
    e.degenerate = ej.at("degenerate").get<std::vector<int>>();
    archive.entries.push_back(std::move(e));
  }
  return archive;
}

}  // namespace advlab
