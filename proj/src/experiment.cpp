#include "fedfreeze/experiment.hpp"

#include "fedfreeze/presets.hpp"
#include "fedfreeze/report.hpp"
#include "fedfreeze/serialize.hpp"

#include <yaml-cpp/yaml.h>

#include <chrono>
#include <fstream>
#include <set>
#include <sstream>

namespace fedfreeze {

const char* to_string(FreezingMode mode) { return mode == FreezingMode::off ? "off" : "adaptive"; }

void ExperimentConfig::validate() const {
  train.validate();
  if (repetitions < 1) throw ConfigError("repetitions: must be >= 1");
  if (output_dir.empty()) throw ConfigError("output_dir: must be non-empty");
  if (image_size < 16) throw ConfigError("image_size: must be >= 16");
  try {
    make_preset(model, image_size, 0);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  train.augment.validate(image_size);
  if (static_cast<int>(silos.size()) != train.num_clients) {
    throw ConfigError("train.num_clients: " + std::to_string(train.num_clients) +
                      " does not match " + std::to_string(silos.size()) + " silos");
  }
  std::set<std::string> ids;
  for (std::size_t i = 0; i < silos.size(); ++i) {
    try {
      silos[i].validate();
    } catch (const ConfigError& e) {
      throw ConfigError("silos[" + std::to_string(i) + "]." + e.what());
    }
    if (!ids.insert(silos[i].silo_id).second) {
      throw ConfigError("silos[" + std::to_string(i) + "].silo_id: duplicate '" + silos[i].silo_id + "'");
    }
  }
  try {
    eval_silo.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("eval_silo.") + e.what());
  }
  if (ids.count(eval_silo.silo_id)) {
    throw ConfigError("eval_silo.silo_id: '" + eval_silo.silo_id + "' is also a training silo");
  }
}

ExperimentConfig default_experiment_config() {
  ExperimentConfig c;
  c.train.augment = {10.0, 2, true};
  c.silos = default_training_silos();
  c.eval_silo = default_eval_silo();
  return c;
}

namespace {

// Map node with a dotted path for messages; rejects keys outside `allowed`.
class Section {
 public:
  Section(const YAML::Node& node, std::string path, std::set<std::string> allowed)
      : node_(node), path_(std::move(path)) {
    if (!node_ || node_.IsNull()) return;
    if (!node_.IsMap()) throw ConfigError(path_ + ": expected a mapping");
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!allowed.count(key)) throw ConfigError(field(key) + ": unknown key");
    }
  }

  template <typename T>
  void read(const std::string& key, T& out) const {
    if (!node_ || node_.IsNull() || !node_[key]) return;
    try {
      out = node_[key].template as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(field(key) + ": invalid value");
    }
  }

  YAML::Node child(const std::string& key) const {
    if (!node_ || node_.IsNull() || !node_[key] || node_[key].IsNull()) return YAML::Node(YAML::NodeType::Undefined);
    return node_[key];
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  YAML::Node node_;
  std::string path_;
};

SiloConfig parse_silo(const YAML::Node& node, const std::string& path, SiloConfig silo) {
  Section s(node, path, {"silo_id", "n_subjects", "native_size", "intensity_gain",
                         "bias_field_strength", "noise_sigma", "seed"});
  s.read("silo_id", silo.silo_id);
  s.read("n_subjects", silo.n_subjects);
  if (auto size = s.child("native_size")) {
    if (!size.IsSequence() || size.size() != 2) throw ConfigError(s.field("native_size") + ": expected [h, w]");
    try {
      silo.height = size[0].as<Index>();
      silo.width = size[1].as<Index>();
    } catch (const YAML::Exception&) {
      throw ConfigError(s.field("native_size") + ": invalid value");
    }
  }
  s.read("intensity_gain", silo.intensity_gain);
  s.read("bias_field_strength", silo.bias_field_strength);
  s.read("noise_sigma", silo.noise_sigma);
  s.read("seed", silo.seed);
  return silo;
}

void emit_silo(YAML::Emitter& out, const SiloConfig& s) {
  out << YAML::BeginMap;
  out << YAML::Key << "silo_id" << YAML::Value << s.silo_id;
  out << YAML::Key << "n_subjects" << YAML::Value << s.n_subjects;
  out << YAML::Key << "native_size" << YAML::Value << YAML::Flow << YAML::BeginSeq << s.height << s.width
      << YAML::EndSeq;
  out << YAML::Key << "intensity_gain" << YAML::Value << s.intensity_gain;
  out << YAML::Key << "bias_field_strength" << YAML::Value << s.bias_field_strength;
  out << YAML::Key << "noise_sigma" << YAML::Value << s.noise_sigma;
  out << YAML::Key << "seed" << YAML::Value << s.seed;
  out << YAML::EndMap;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config: not valid YAML: ") + e.what());
  }
  ExperimentConfig cfg = default_experiment_config();
  Section top(root, "", {"train", "model", "image_size", "freezing", "augment", "energy", "silos",
                         "eval_silo", "repetitions", "output_dir"});
  top.read("model", cfg.model);
  top.read("image_size", cfg.image_size);
  top.read("repetitions", cfg.repetitions);
  top.read("output_dir", cfg.output_dir);

  Section train(top.child("train"), "train", {"rounds", "local_epochs", "batch_size", "learning_rate",
                                              "prox_mu", "seed", "num_clients"});
  train.read("rounds", cfg.train.rounds);
  train.read("local_epochs", cfg.train.local_epochs);
  train.read("batch_size", cfg.train.batch_size);
  train.read("learning_rate", cfg.train.learning_rate);
  train.read("prox_mu", cfg.train.prox_mu);
  train.read("seed", cfg.train.seed);
  train.read("num_clients", cfg.train.num_clients);

  Section freezing(top.child("freezing"), "freezing", {"mode", "tau", "patience"});
  std::string mode = to_string(cfg.train.freezing);
  freezing.read("mode", mode);
  if (mode == "off") cfg.train.freezing = FreezingMode::off;
  else if (mode == "adaptive") cfg.train.freezing = FreezingMode::adaptive;
  else throw ConfigError("freezing.mode: expected 'off' or 'adaptive', got '" + mode + "'");
  freezing.read("tau", cfg.train.tau);
  freezing.read("patience", cfg.train.patience);

  Section augment(top.child("augment"), "augment", {"max_rotation_deg", "max_translation_px", "allow_flip"});
  augment.read("max_rotation_deg", cfg.train.augment.max_rotation_deg);
  augment.read("max_translation_px", cfg.train.augment.max_translation_px);
  augment.read("allow_flip", cfg.train.augment.allow_flip);

  Section energy(top.child("energy"), "energy", {"kwh_per_flop", "carbon_intensity"});
  energy.read("kwh_per_flop", cfg.train.energy.kwh_per_flop);
  energy.read("carbon_intensity", cfg.train.energy.carbon_intensity);

  if (auto silos = top.child("silos")) {
    if (!silos.IsSequence()) throw ConfigError("silos: expected a list");
    cfg.silos.clear();
    for (std::size_t i = 0; i < silos.size(); ++i) {
      cfg.silos.push_back(parse_silo(silos[i], "silos[" + std::to_string(i) + "]", SiloConfig{}));
    }
  }
  if (auto eval = top.child("eval_silo")) cfg.eval_silo = parse_silo(eval, "eval_silo", cfg.eval_silo);

  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot read " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& cfg) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;
  out << YAML::Key << "train" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "rounds" << YAML::Value << cfg.train.rounds;
  out << YAML::Key << "local_epochs" << YAML::Value << cfg.train.local_epochs;
  out << YAML::Key << "batch_size" << YAML::Value << cfg.train.batch_size;
  out << YAML::Key << "learning_rate" << YAML::Value << cfg.train.learning_rate;
  out << YAML::Key << "prox_mu" << YAML::Value << cfg.train.prox_mu;
  out << YAML::Key << "seed" << YAML::Value << cfg.train.seed;
  out << YAML::Key << "num_clients" << YAML::Value << cfg.train.num_clients;
  out << YAML::EndMap;
  out << YAML::Key << "model" << YAML::Value << cfg.model;
  out << YAML::Key << "image_size" << YAML::Value << cfg.image_size;
  out << YAML::Key << "freezing" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "mode" << YAML::Value << YAML::DoubleQuoted << to_string(cfg.train.freezing);
  out << YAML::Key << "tau" << YAML::Value << cfg.train.tau;
  out << YAML::Key << "patience" << YAML::Value << cfg.train.patience;
  out << YAML::EndMap;
  out << YAML::Key << "augment" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "max_rotation_deg" << YAML::Value << cfg.train.augment.max_rotation_deg;
  out << YAML::Key << "max_translation_px" << YAML::Value << cfg.train.augment.max_translation_px;
  out << YAML::Key << "allow_flip" << YAML::Value << cfg.train.augment.allow_flip;
  out << YAML::EndMap;
  out << YAML::Key << "energy" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "kwh_per_flop" << YAML::Value << cfg.train.energy.kwh_per_flop;
  out << YAML::Key << "carbon_intensity" << YAML::Value << cfg.train.energy.carbon_intensity;
  out << YAML::EndMap;
  out << YAML::Key << "silos" << YAML::Value << YAML::BeginSeq;
  for (const auto& s : cfg.silos) emit_silo(out, s);
  out << YAML::EndSeq;
  out << YAML::Key << "eval_silo" << YAML::Value;
  emit_silo(out, cfg.eval_silo);
  out << YAML::Key << "repetitions" << YAML::Value << cfg.repetitions;
  out << YAML::Key << "output_dir" << YAML::Value << cfg.output_dir;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

LedgerTotals sum_ledger(const std::vector<RoundRecord>& rounds) {
  LedgerTotals t;
  for (const auto& r : rounds) {
    for (const auto& c : r.clients) {
      t.flops_forward += c.ledger.flops_forward;
      t.flops_backward += c.ledger.flops_backward;
      t.bytes_uplink += c.ledger.bytes_uplink;
      t.bytes_downlink += c.ledger.bytes_downlink;
      t.params_updated += c.ledger.params_updated;
      t.energy_kwh += c.ledger.energy_kwh;
      t.co2eq_kg += c.ledger.co2eq_kg;
    }
  }
  return t;
}

std::vector<std::vector<PairedSample>> prepare_silos(const std::vector<SiloConfig>& silos, Index size) {
  std::vector<std::vector<PairedSample>> out;
  for (const auto& s : silos) {
    std::vector<PairedSample> samples;
    for (const auto& raw : generate_silo(s)) samples.push_back(preprocess(raw, size, size));
    out.push_back(std::move(samples));
  }
  return out;
}

std::vector<EvalCase> evaluate(const Network& net, const ParamSet& params,
                               const std::vector<PairedSample>& cases) {
  std::vector<EvalCase> out;
  for (const auto& c : cases) {
    auto [x, y] = make_batch(std::span<const PairedSample>(&c, 1));
    const auto fwd = forward(net, params, x);
    const Image pred = fwd.prediction.as_matrix(c.target.rows(), c.target.cols()).cwiseMax(0.0).cwiseMin(1.0);
    out.push_back({c.subject_id, image_metrics(pred, c.target)});
  }
  return out;
}

RunReport run_repetition(const ExperimentConfig& cfg, int repetition) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  RunReport rep;
  rep.repetition = repetition;
  rep.seed = cfg.train.seed + static_cast<std::uint64_t>(repetition);
  rep.run_id = std::string(to_string(cfg.train.freezing)) + "_rep" + std::to_string(repetition);
  rep.config = cfg;

  TrainConfig train = cfg.train;
  train.seed = rep.seed;
  const ModelConfig model = make_preset(cfg.model, cfg.image_size, mix_seed({rep.seed, hash_string("model")}));
  const Network net(model);

  FederationResult fed = run_federation(train, prepare_silos(cfg.silos, cfg.image_size), model);
  rep.params_encoder = param_count(fed.final_params, Partition::encoder);
  rep.params_decoder = param_count(fed.final_params, Partition::decoder);
  rep.rounds = std::move(fed.rounds);
  rep.freeze_round = fed.freeze_round;
  rep.totals = sum_ledger(rep.rounds);
  rep.eval = evaluate(net, fed.final_params, prepare_silos({cfg.eval_silo}, cfg.image_size).front());
  rep.final_params = std::move(fed.final_params);
  rep.wall_ms_total =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

void write_run_artifacts(const RunReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / (report.run_id + ".json"), report_to_json(report).dump(2) + "\n");
  write_file_atomic(dir / (report.run_id + "_metrics.csv"), metrics_csv(report));
  const auto params_path = dir / (report.run_id + "_final.params");
  const auto tmp = params_path.string() + ".tmp";
  save_checkpoint(report.final_params, tmp);
  std::filesystem::rename(tmp, params_path);
}

}  // namespace fedfreeze
